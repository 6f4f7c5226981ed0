//! Checkers built on top of exploration: permission consistency across
//! entrypoints, terminal-state properties, exploit-manifest emission with
//! legality filtering, snapshot consistency and the ucse comparison.

use alloc::string::String;

use crate::symbolic::ExploreError;

mod consistency;
mod emit;
mod ispe;
mod property;
mod ucse;

#[cfg(test)]
mod tests;

pub use consistency::{compare_path_sets, snapshot_consistency, ConsistencyReport, SnapshotDiff};
pub use emit::{
    check_entry, emit_exploits, legality_rules, EmitConfig, EmitStats, ExploitManifest, LegalityRule, ManifestEntry,
};
pub use ispe::{check_ispe, ispe_config, ispe_verdict, permission_set, EntrypointPaths, IspeOutcome, IspeVerdict, PathPermissions, PermissionSet};
pub use property::{check_property, PropertyOutcome};
pub use ucse::{compare_ucse, run_mode, ModeMetrics, UcseComparison};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error("entrypoint `{0}` cannot reach the sensitive statement")]
    Unreachable(String),
    #[error("need at least two snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("path {path}: {detail}")]
    Unsolvable { path: usize, detail: String },
}
