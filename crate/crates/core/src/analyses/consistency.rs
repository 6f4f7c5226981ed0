use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::AnalysisError;
use crate::host::ExternHost;
use crate::isa::Program;
use crate::snapshot::SnapshotQuery;
use crate::symbolic::{explore, Exploration, ExploreConfig, TestDriver};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SnapshotDiff {
    /// Position of the snapshot in the input list.
    pub snapshot: usize,
    /// Canonical conditions of the first snapshot this one lacks.
    pub missing: Vec<String>,
    /// Canonical conditions only this one has.
    pub extra: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ConsistencyReport {
    pub entrypoint: String,
    /// Canonical path-condition set per snapshot.
    pub sets: Vec<BTreeSet<String>>,
    pub equal: bool,
    /// Differences against the first snapshot, for divergent ones only.
    pub diffs: Vec<SnapshotDiff>,
}

/// Explore `driver` on every snapshot and compare the sets of canonical
/// path conditions.
pub fn snapshot_consistency(
    program: &Program,
    snapshots: &[&dyn SnapshotQuery],
    driver: &TestDriver,
    base: &ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<ConsistencyReport, AnalysisError> {
    if snapshots.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots(snapshots.len()));
    }
    let mut explorations = Vec::new();
    for s in snapshots {
        explorations.push(explore(program, *s, driver, base.clone(), host)?);
    }
    compare_path_sets(driver, &explorations)
}

/// Compare explorations of one driver on different snapshots, in order.
pub fn compare_path_sets(driver: &TestDriver, explorations: &[Exploration]) -> Result<ConsistencyReport, AnalysisError> {
    if explorations.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots(explorations.len()));
    }
    let sets: Vec<BTreeSet<String>> = explorations
        .iter()
        .map(|ex| ex.reports.iter().map(|r| r.pc.render_canonical()).collect())
        .collect();
    let diffs: Vec<SnapshotDiff> = sets
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, s)| **s != sets[0])
        .map(|(i, s)| SnapshotDiff {
            snapshot: i,
            missing: sets[0].difference(s).cloned().collect(),
            extra: s.difference(&sets[0]).cloned().collect(),
        })
        .collect();
    Ok(ConsistencyReport {
        entrypoint: driver.entrypoint.clone(),
        equal: diffs.is_empty(),
        sets,
        diffs,
    })
}
