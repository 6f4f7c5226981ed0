use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::AnalysisError;
use crate::host::ExternHost;
use crate::isa::{CallGraph, Location, Program, TargetReach};
use crate::snapshot::SnapshotQuery;
use crate::solver::{render_conjunct, Formula, PathCondition, StrTerm, VarId};
use crate::symbolic::{explore, ExploreConfig, Exploration, PathReport, PathStatus, TestDriver, VarOrigin};

/// Manifest key of the skeleton's permission list.
const PERMISSIONS_KEY: &str = "permissions";

pub type PermissionSet = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct PathPermissions {
    pub path: usize,
    pub permissions: PermissionSet,
    /// Conjuncts over permission variables of no recognized shape.
    pub unrecognized: Vec<String>,
    /// Reachable with no condition at all.
    pub unconditional: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct EntrypointPaths {
    pub entrypoint: String,
    pub paths: Vec<PathPermissions>,
    /// Paths that ran out of budget before deciding reachability.
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct IspeVerdict {
    pub sensitive: String,
    pub entrypoints: Vec<EntrypointPaths>,
    pub inconsistent: bool,
    /// (entrypoint index, path id) pair whose permission sets differ, the
    /// first element having no equal partner on the other side.
    pub witness: Option<[(usize, usize); 2]>,
    /// Entrypoints without any feasible path to the statement.
    pub no_feasible_path: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct IspeOutcome {
    pub verdict: IspeVerdict,
    pub explorations: Vec<Exploration>,
}

fn is_permission_var(r: &PathReport, v: VarId) -> bool {
    matches!(r.origins.get(&v), Some(VarOrigin::Overlay { key: Some(k), .. }) if k == PERMISSIONS_KEY)
}

fn permission_atom(r: &PathReport, a: &StrTerm, b: &StrTerm) -> Option<String> {
    match (a, b) {
        (StrTerm::Var(v), StrTerm::Lit(s)) | (StrTerm::Lit(s), StrTerm::Var(v)) if is_permission_var(r, *v) => {
            Some(s.clone())
        }
        _ => None,
    }
}

/// Permissions a path requires: every top-level `perm == "<atom>"`
/// conjunct on a skeleton permission element. Negated equalities are the
/// other arms of the same checks and carry no requirement; any other
/// conjunct mentioning a permission element is returned verbatim.
pub fn permission_set(r: &PathReport) -> (PermissionSet, Vec<String>) {
    let mut set = PermissionSet::new();
    let mut unrecognized = Vec::new();
    for c in r.pc.conjuncts() {
        match c {
            Formula::StrEq(a, b) => {
                if let Some(p) = permission_atom(r, a, b) {
                    set.insert(p);
                    continue;
                }
            }
            Formula::Not(inner) => {
                if let Formula::StrEq(a, b) = &**inner {
                    if permission_atom(r, a, b).is_some() {
                        continue;
                    }
                }
            }
            _ => {}
        }
        let mut vs = BTreeSet::new();
        c.vars(&mut vs);
        if vs.iter().any(|v| is_permission_var(r, *v)) {
            unrecognized.push(render_conjunct(&r.pc, c));
        }
    }
    (set, unrecognized)
}

fn feasible(r: &PathReport) -> bool {
    r.reached_target && r.status != PathStatus::BudgetExhausted
}

fn summarize(driver: &TestDriver, ex: &Exploration) -> EntrypointPaths {
    let paths = ex
        .reports
        .iter()
        .filter(|r| feasible(r))
        .map(|r| {
            let (permissions, unrecognized) = permission_set(r);
            PathPermissions {
                path: r.id,
                permissions,
                unrecognized,
                unconditional: PathCondition::is_constantly_true(&r.pc),
            }
        })
        .collect();
    EntrypointPaths {
        entrypoint: driver.entrypoint.clone(),
        paths,
        exhausted: ex.stats.budget_exhausted,
    }
}

/// First path of `a` whose set equals no path set of `b`, with a path of
/// `b` to pair it with.
fn unmatched(a: &EntrypointPaths, b: &EntrypointPaths) -> Option<(usize, usize)> {
    let first_b = b.paths.first()?;
    a.paths
        .iter()
        .find(|p| b.paths.iter().all(|q| q.permissions != p.permissions))
        .map(|p| (p.path, first_b.path))
}

/// Exploration settings for an ISPE check, after making sure both
/// entrypoints can reach `sensitive` in the call graph.
pub fn ispe_config(
    program: &Program,
    entrypoints: [&TestDriver; 2],
    sensitive: Location,
    base: &ExploreConfig,
) -> Result<ExploreConfig, AnalysisError> {
    let reach = TargetReach::compute(program, &CallGraph::build(program), sensitive);
    for d in entrypoints {
        let class = d.class.clone().unwrap_or_else(|| d.service.clone());
        let m = program
            .resolve_dispatch(&class, &d.entrypoint)
            .map_err(|e| AnalysisError::Explore(e.into()))?;
        if !reach.method_may_reach(m) {
            return Err(AnalysisError::Unreachable(d.entrypoint.clone()));
        }
    }
    Ok(ExploreConfig {
        target: Some(sensitive),
        ..base.clone()
    })
}

/// Compare the permission sets of two finished explorations, run with
/// [`ispe_config`]. Split from [`check_ispe`] so callers may explore the
/// entrypoints in parallel.
pub fn ispe_verdict(
    program: &Program,
    entrypoints: [&TestDriver; 2],
    sensitive: Location,
    explorations: [Exploration; 2],
) -> IspeOutcome {
    let summaries: Vec<EntrypointPaths> =
        entrypoints.iter().zip(&explorations).map(|(d, ex)| summarize(d, ex)).collect();
    let no_feasible_path = summaries
        .iter()
        .filter(|e| e.paths.is_empty())
        .map(|e| e.entrypoint.clone())
        .collect();
    let witness = match unmatched(&summaries[0], &summaries[1]) {
        Some((p, q)) => Some([(0, p), (1, q)]),
        None => unmatched(&summaries[1], &summaries[0]).map(|(q, p)| [(1, q), (0, p)]),
    };
    IspeOutcome {
        verdict: IspeVerdict {
            sensitive: alloc::format!("{}@{}", program.method_name(sensitive.method), sensitive.pc),
            entrypoints: summaries,
            inconsistent: witness.is_some(),
            witness,
            no_feasible_path,
        },
        explorations: Vec::from(explorations),
    }
}

/// Explore both entrypoints towards `sensitive` and compare the permission
/// sets of their feasible paths.
#[allow(clippy::too_many_arguments)]
pub fn check_ispe(
    program: &Program,
    snapshot: &dyn SnapshotQuery,
    ep1: &TestDriver,
    ep2: &TestDriver,
    sensitive: Location,
    base: &ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<IspeOutcome, AnalysisError> {
    let config = ispe_config(program, [ep1, ep2], sensitive, base)?;
    let a = explore(program, snapshot, ep1, config.clone(), host)?;
    let b = explore(program, snapshot, ep2, config, host)?;
    Ok(ispe_verdict(program, [ep1, ep2], sensitive, [a, b]))
}
