use alloc::vec::Vec;

use super::AnalysisError;
use crate::host::ExternHost;
use crate::isa::Program;
use crate::snapshot::SnapshotQuery;
use crate::symbolic::{explore, ExploreConfig, ExploreStats, PathReport, PathStatus, Property, TestDriver};

#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    /// Finished paths on which the property can hold; each pc has the
    /// property conjoined and is satisfiable.
    pub violations: Vec<PathReport>,
    pub stats: ExploreStats,
}

/// Explore `driver` with `property` conjoined to every terminal path
/// condition and keep the paths that stay satisfiable.
pub fn check_property(
    program: &Program,
    snapshot: &dyn SnapshotQuery,
    driver: &TestDriver,
    property: Property,
    base: &ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<PropertyOutcome, AnalysisError> {
    let config = ExploreConfig {
        property: Some(property),
        ..base.clone()
    };
    let ex = explore(program, snapshot, driver, config, host)?;
    // Exhausted paths never had the property conjoined.
    let violations = ex
        .reports
        .into_iter()
        .filter(|r| r.status != PathStatus::BudgetExhausted)
        .collect();
    Ok(PropertyOutcome {
        violations,
        stats: ex.stats,
    })
}
