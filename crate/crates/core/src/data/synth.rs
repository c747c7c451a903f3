//! Synthetic taxi fleet on a grid.
//!
//! Each cab cycles through a fixed list of closed routes over grid cells and
//! logs its cell every `interval` seconds. With probability `noise` a log
//! reports a random 4-neighbour of the scheduled cell instead; the schedule
//! itself is not disturbed.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkin::CheckIn;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub cabs: usize,
    pub routes_per_cab: usize,
    pub noise: f64,
    /// Simulated seconds; one log per cab every `interval` seconds.
    pub duration: u64,
    pub interval: u64,
    pub start: u64,
    /// Upper bound on a single route's length (in cells).
    pub max_route_len: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            cabs: 5,
            routes_per_cab: 1,
            noise: 0.0,
            duration: 2_000 * 300,
            interval: 300,
            // 2020-10-01T00:00:00Z
            start: 1_601_510_400,
            max_route_len: 8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn steps(&self) -> usize {
        (self.duration / self.interval.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.width * self.height < 2 {
            return fail(format!(
                "grid {}x{} needs at least two cells",
                self.width, self.height
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return fail(format!("noise {} outside [0, 1)", self.noise));
        }
        if self.interval == 0 || self.cabs == 0 || self.routes_per_cab == 0 {
            return fail("interval, cabs and routes per cab must be positive".into());
        }
        if self.max_route_len < 2 {
            return fail("routes need at least two cells".into());
        }
        Ok(())
    }
}

/// Generated logs plus the generator's own bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthLogs {
    pub checkins: Vec<CheckIn>,
    /// `routes[cab]` lists the cab's routes as cell sequences.
    pub routes: Vec<Vec<Vec<usize>>>,
    /// Number of logs that reported a neighbour instead of the scheduled cell.
    pub deviations: usize,
    /// Distinct cells that appear in the logs.
    pub visited_cells: usize,
}

pub fn cell_name(cell: usize) -> alloc::string::String {
    format!("{cell}")
}

pub fn cab_name(cab: usize) -> alloc::string::String {
    format!("cab{cab:03}")
}

fn neighbours(width: usize, height: usize, cell: usize) -> Vec<usize> {
    let (x, y) = (cell % width, cell / width);
    let mut out = Vec::with_capacity(4);
    if x > 0 {
        out.push(cell - 1);
    }
    if x + 1 < width {
        out.push(cell + 1);
    }
    if y > 0 {
        out.push(cell - width);
    }
    if y + 1 < height {
        out.push(cell + width);
    }
    out
}

/// Clockwise perimeter of the `w x h` rectangle with top-left `(x0, y0)`.
fn perimeter(width: usize, x0: usize, y0: usize, w: usize, h: usize) -> Vec<usize> {
    let at = |x: usize, y: usize| y * width + x;
    let mut out = Vec::new();
    for x in x0..x0 + w {
        out.push(at(x, y0));
    }
    for y in y0 + 1..y0 + h {
        out.push(at(x0 + w - 1, y));
    }
    for x in (x0..x0 + w - 1).rev() {
        out.push(at(x, y0 + h - 1));
    }
    for y in (y0 + 1..y0 + h - 1).rev() {
        out.push(at(x0, y));
    }
    out
}

/// A random closed route: a rectangle perimeter when one fits within the
/// length bound, otherwise a back-and-forth run along a row or column.
fn random_route(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (gw, gh) = (spec.width, spec.height);
    let mut rects = Vec::new();
    for w in 2..=gw {
        for h in 2..=gh {
            if 2 * (w + h) - 4 <= spec.max_route_len {
                for x0 in 0..=gw - w {
                    for y0 in 0..=gh - h {
                        rects.push((x0, y0, w, h));
                    }
                }
            }
        }
    }
    let mut route = if let Some(&(x0, y0, w, h)) = rects.choose(rng) {
        perimeter(gw, x0, y0, w, h)
    } else {
        // Shuttle between two ends of a straight run.
        let horizontal = gw >= gh;
        let line = if horizontal { gw } else { gh };
        let max_cells = (spec.max_route_len / 2 + 1).min(line).max(2);
        let cells = rng.gen_range(2..=max_cells);
        let start = rng.gen_range(0..=line - cells);
        let fixed = if horizontal {
            rng.gen_range(0..gh)
        } else {
            rng.gen_range(0..gw)
        };
        let at = |i: usize| {
            if horizontal {
                fixed * gw + i
            } else {
                i * gw + fixed
            }
        };
        let mut r: Vec<usize> = (start..start + cells).map(at).collect();
        r.extend((start + 1..start + cells - 1).rev().map(at));
        r
    };
    if rng.gen_bool(0.5) {
        route.reverse();
    }
    let offset = rng.gen_range(0..route.len());
    route.rotate_left(offset);
    route
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthLogs> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let routes: Vec<Vec<Vec<usize>>> = (0..spec.cabs)
        .map(|_| {
            (0..spec.routes_per_cab)
                .map(|_| random_route(spec, &mut rng))
                .collect()
        })
        .collect();
    let schedules: Vec<Vec<usize>> = routes.iter().map(|r| r.concat()).collect();
    let names: Vec<_> = (0..spec.cabs).map(cab_name).collect();

    let steps = spec.steps();
    let mut checkins = Vec::with_capacity(steps * spec.cabs);
    let mut deviations = 0;
    let mut seen = alloc::vec![false; spec.width * spec.height];
    for step in 0..steps {
        let timestamp = spec.start + step as u64 * spec.interval;
        for (cab, schedule) in schedules.iter().enumerate() {
            let planned = schedule[step % schedule.len()];
            let cell = if rng.gen::<f64>() < spec.noise {
                deviations += 1;
                *neighbours(spec.width, spec.height, planned)
                    .choose(&mut rng)
                    .expect("grids with two or more cells have neighbours")
            } else {
                planned
            };
            seen[cell] = true;
            checkins.push(CheckIn {
                user: names[cab].clone(),
                timestamp,
                location: cell_name(cell),
            });
        }
    }
    Ok(SynthLogs {
        checkins,
        routes,
        deviations,
        visited_cells: seen.iter().filter(|&&s| s).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perimeter_is_a_closed_neighbour_walk() {
        for (w, h) in [(2, 2), (3, 2), (4, 4), (2, 4)] {
            let p = perimeter(4, 0, 0, w, h);
            assert_eq!(p.len(), 2 * (w + h) - 4);
            for i in 0..p.len() {
                let next = p[(i + 1) % p.len()];
                assert!(neighbours(4, 4, p[i]).contains(&next), "{p:?}");
            }
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let spec = SynthSpec {
            width: 1,
            height: 1,
            ..SynthSpec::default()
        };
        assert!(synth_generate(&spec).is_err());
        let spec = SynthSpec {
            noise: 1.0,
            ..SynthSpec::default()
        };
        assert!(synth_generate(&spec).is_err());
    }

    #[test]
    fn narrow_grids_shuttle() {
        let spec = SynthSpec {
            width: 5,
            height: 1,
            duration: 300 * 50,
            ..SynthSpec::default()
        };
        let logs = synth_generate(&spec).unwrap();
        for route in &logs.routes[0] {
            for i in 0..route.len() {
                let next = route[(i + 1) % route.len()];
                assert!(neighbours(5, 1, route[i]).contains(&next));
            }
        }
    }
}
