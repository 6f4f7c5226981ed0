use super::AnalysisError;
use crate::host::ExternHost;
use crate::isa::Program;
use crate::snapshot::SnapshotQuery;
use crate::symbolic::{explore, ExploreConfig, Mode, TestDriver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ModeMetrics {
    pub mode: Mode,
    pub states: usize,
    /// Finished paths, exhausted ones excluded.
    pub paths: usize,
    /// Largest number of targets forked at one virtual call.
    pub virtual_forks: usize,
    pub budget_exhausted: bool,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct UcseComparison {
    pub seeded: ModeMetrics,
    pub ucse: ModeMetrics,
}

/// Explore `driver` in one mode and summarize the run.
pub fn run_mode(
    program: &Program,
    snapshot: &dyn SnapshotQuery,
    driver: &TestDriver,
    mode: Mode,
    base: &ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<ModeMetrics, AnalysisError> {
    let config = ExploreConfig { mode, ..base.clone() };
    let ex = explore(program, snapshot, driver, config, host)?;
    Ok(ModeMetrics {
        mode,
        states: ex.stats.states,
        paths: ex.stats.paths,
        virtual_forks: ex.stats.max_virtual_fanout,
        budget_exhausted: ex.stats.budget_exhausted > 0,
        steps: ex.stats.steps,
    })
}

/// Run both modes under the same budget.
pub fn compare_ucse(
    program: &Program,
    snapshot: &dyn SnapshotQuery,
    driver: &TestDriver,
    base: &ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<UcseComparison, AnalysisError> {
    Ok(UcseComparison {
        seeded: run_mode(program, snapshot, driver, Mode::Seeded, base, host)?,
        ucse: run_mode(program, snapshot, driver, Mode::Ucse, base, host)?,
    })
}
