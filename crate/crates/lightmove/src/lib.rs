//! File formats, run manifests and the command implementations behind the
//! `lightmove` binary.

pub mod bundle;
pub mod checkpoint;
pub mod digest;
pub mod manifest;
pub mod report;
pub mod run;
pub mod variant;

pub use checkpoint::{Checkpoint, HashMismatch, Meta};
pub use manifest::{execute_recorded, replay, RunManifest};
pub use report::{timed_evaluate, EvalReport};
pub use run::Run;
pub use variant::Variant;
