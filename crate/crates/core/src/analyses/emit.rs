use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::AnalysisError;
use crate::concrete::{
    param_field_var, AppRegistry, BranchEvent, OverlayEntry, OverlayLocation, ReplayRequest,
};
use crate::snapshot::{SnapValue, SnapshotQuery};
use crate::solver::{
    check_sat, Formula, Model, ModelValue, PathCondition, SatResult, SolverConfig, Sort, StrTerm, Term, VarId,
};
use crate::symbolic::{default_in_domain, ParamBinding, PathReport, PathStatus, TestDriver, VarOrigin};

/// One app-configuration value of a manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    /// Manifest key (`package`, `permissions`, ...); absent for heap data
    /// no manifest attribute controls.
    pub key: Option<String>,
    pub location: OverlayLocation,
    pub value: ModelValue,
    /// Name of the symbolic variable the value solves.
    pub var: String,
}

/// Concrete input set for one explored path.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExploitManifest {
    pub service: String,
    pub entrypoint: String,
    pub params: Vec<ModelValue>,
    /// Extern results and reference-parameter fields, by variable name.
    pub model: BTreeMap<String, ModelValue>,
    pub overlay: Vec<ManifestEntry>,
    pub path: usize,
    /// Rank of this model among the path's models.
    pub model_index: usize,
    pub pc: String,
    /// Branches the path takes; a faithful replay reproduces them.
    pub trace: Vec<BranchEvent>,
    pub trapped: bool,
    /// The path holds for every input.
    pub unconditional: bool,
    pub legality: bool,
    /// Broken registry rules, one line each.
    pub violations: Vec<String>,
}

impl ExploitManifest {
    pub fn replay_request(&self) -> ReplayRequest {
        ReplayRequest {
            service: self.service.clone(),
            entrypoint: self.entrypoint.clone(),
            params: self.params.clone(),
            model: self.model.clone(),
            overlay: self
                .overlay
                .iter()
                .map(|e| OverlayEntry {
                    location: e.location.clone(),
                    value: e.value.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitConfig {
    /// Models solved per path, each excluding the earlier ones.
    pub models_per_path: usize,
    pub seed: u64,
    pub solver_steps: u64,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig {
            models_per_path: 4,
            seed: 0,
            solver_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct EmitStats {
    pub manifests: usize,
    pub illegal: usize,
    /// Paths skipped because they ran out of budget.
    pub skipped: usize,
    /// Extra-model searches that gave up.
    pub unknown: usize,
}

/// Rule applied to every overlay value under one manifest key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegalityRule {
    /// No other installed app may own the package name.
    UniquePackage,
    IntRange(i32, i32),
    /// Any value of the right kind.
    Free,
}

/// Registry rules by manifest key. Keys absent here are illegal to set.
pub fn legality_rules() -> &'static [(&'static str, LegalityRule)] {
    &[
        ("package", LegalityRule::UniquePackage),
        ("launch-mode", LegalityRule::IntRange(0, 3)),
        ("task-affinity", LegalityRule::Free),
        ("permissions", LegalityRule::Free),
        ("flags", LegalityRule::Free),
    ]
}

/// Violation of `value` under `key`, if any.
pub fn check_entry(key: &str, value: &ModelValue, registry: &AppRegistry) -> Option<String> {
    let Some((_, rule)) = legality_rules().iter().find(|(k, _)| *k == key) else {
        return Some(format!("`{}` is not an app-configurable attribute", key));
    };
    match (rule, value) {
        (LegalityRule::UniquePackage, ModelValue::Str(p)) => registry
            .apps()
            .iter()
            .find(|a| !a.skeleton && a.package == *p)
            .map(|a| format!("package `{}` is already installed with uid {}", p, a.uid)),
        (LegalityRule::UniquePackage, v) => Some(format!("package must be a string, got {:?}", v)),
        (LegalityRule::IntRange(lo, hi), ModelValue::Int(i)) => {
            (!(*lo..=*hi).contains(i)).then(|| format!("{} {} outside {}..={}", key, i, lo, hi))
        }
        (LegalityRule::IntRange(..), v) => Some(format!("{} must be an int, got {:?}", key, v)),
        (LegalityRule::Free, ModelValue::Null(true)) => Some(format!("{} cannot be null", key)),
        (LegalityRule::Free, _) => None,
    }
}

fn default_value(sort: &Sort) -> ModelValue {
    match sort {
        Sort::Int { lo, hi } => ModelValue::Int(default_in_domain(*lo, *hi)),
        Sort::Str => ModelValue::Str(String::new()),
        Sort::Ref => ModelValue::Null(true),
    }
}

fn value_of(pc: &PathCondition, m: &Model, v: VarId) -> ModelValue {
    m.get(&v).cloned().unwrap_or_else(|| default_value(&pc.var(v).sort))
}

/// Formula excluding `m` on `vars`.
fn blocking(vars: &[VarId], m: &Model, pc: &PathCondition) -> Formula {
    let parts = vars
        .iter()
        .map(|&v| match value_of(pc, m, v) {
            ModelValue::Int(i) => Formula::Cmp(crate::isa::CmpOp::Ne, Term::var(v), Term::constant(i)),
            ModelValue::Str(s) => Formula::Not(Formula::StrEq(StrTerm::Var(v), StrTerm::Lit(s)).into()),
            ModelValue::Null(true) => Formula::Not(Formula::IsNull(v).into()),
            ModelValue::Null(false) => Formula::IsNull(v),
        })
        .collect();
    Formula::Or(parts)
}

/// Concrete snapshot value of an overlay slot.
fn snapshot_value(snapshot: &dyn SnapshotQuery, loc: &OverlayLocation) -> Option<ModelValue> {
    let v = match loc {
        OverlayLocation::Field { obj, field } => snapshot.get_object(*obj).ok()?.fields.get(field).copied()?,
        OverlayLocation::Elem { arr, index } => snapshot.get_array(*arr).ok()?.values.get(*index).copied()?,
    };
    Some(match v {
        SnapValue::Int(i) => ModelValue::Int(i),
        SnapValue::Bool(b) => ModelValue::Int(i32::from(b)),
        SnapValue::Ref(0) => ModelValue::Null(true),
        SnapValue::Ref(r) => ModelValue::Str(snapshot.get_string(r).ok()?),
    })
}

fn manifest(
    r: &PathReport,
    m: &Model,
    index: usize,
    driver: &TestDriver,
    registry: &AppRegistry,
    snapshot: &dyn SnapshotQuery,
) -> ExploitManifest {
    let pc = &r.pc;
    let used = pc.used_vars();
    let mut model = BTreeMap::new();
    let mut overlay = Vec::new();
    let mut violations = Vec::new();
    for (&v, origin) in &r.origins {
        match origin {
            VarOrigin::Extern { .. } => {
                model.insert(r.var_name(v).into(), value_of(pc, m, v));
            }
            // Unconstrained heap slots keep their snapshot values.
            VarOrigin::Overlay { location, key } if used.contains(&v) => {
                let value = value_of(pc, m, v);
                match key {
                    Some(k) => violations.extend(check_entry(k, &value, registry)),
                    None if snapshot_value(snapshot, location).as_ref() != Some(&value) => violations.push(format!(
                        "`{}` is not app-configurable but must be {:?}",
                        r.var_name(v),
                        value
                    )),
                    None => {}
                }
                overlay.push(ManifestEntry {
                    key: key.clone(),
                    location: location.clone(),
                    value,
                    var: r.var_name(v).into(),
                });
            }
            VarOrigin::Internal if used.contains(&v) => {
                violations.push(format!("`{}` has no counterpart in the snapshot", r.var_name(v)));
            }
            _ => {}
        }
    }
    let params = r
        .params
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            ParamBinding::Value(x) => x.clone(),
            ParamBinding::Var(v) => value_of(pc, m, *v),
            ParamBinding::Object { null, fields } => {
                let n = value_of(pc, m, *null);
                if n == ModelValue::Null(false) {
                    for (f, v) in fields {
                        model.insert(param_field_var(i, f), value_of(pc, m, *v));
                    }
                }
                n
            }
        })
        .collect();
    ExploitManifest {
        service: driver.service.clone(),
        entrypoint: driver.entrypoint.clone(),
        params,
        model,
        overlay,
        path: r.id,
        model_index: index,
        pc: pc.render_named(),
        trace: r.trace.clone(),
        trapped: matches!(r.status, PathStatus::Trapped(_)),
        unconditional: pc.is_constantly_true(),
        legality: violations.is_empty(),
        violations,
    }
}

/// Solve up to `models_per_path` distinct models for every finished path
/// and turn each into a manifest with its legality verdict.
pub fn emit_exploits(
    reports: &[PathReport],
    driver: &TestDriver,
    registry: &AppRegistry,
    snapshot: &dyn SnapshotQuery,
    config: &EmitConfig,
) -> Result<(Vec<ExploitManifest>, EmitStats), AnalysisError> {
    let mut out = Vec::new();
    let mut stats = EmitStats::default();
    for r in reports {
        if r.status == PathStatus::BudgetExhausted {
            stats.skipped += 1;
            continue;
        }
        let inputs: Vec<VarId> = r.pc.used_vars().into_iter().collect();
        let mut pc = r.pc.clone();
        for k in 0..config.models_per_path.max(1) {
            let solver = SolverConfig {
                seed: config.seed.wrapping_add(k as u64),
                step_budget: config.solver_steps,
            };
            let m = match (k, &r.model) {
                (0, Some(m)) => m.clone(),
                _ => match check_sat(&pc, &solver) {
                    SatResult::Sat(m) => m,
                    SatResult::Unsat if k > 0 => break,
                    SatResult::Unknown if k > 0 => {
                        stats.unknown += 1;
                        break;
                    }
                    other => {
                        return Err(AnalysisError::Unsolvable {
                            path: r.id,
                            detail: format!("solver returned {:?}", other),
                        })
                    }
                },
            };
            match r.pc.satisfied_by(&m) {
                Ok(true) => {}
                other => {
                    return Err(AnalysisError::Unsolvable {
                        path: r.id,
                        detail: format!("model fails the path condition: {:?}", other),
                    })
                }
            }
            let mf = manifest(r, &m, k, driver, registry, snapshot);
            stats.manifests += 1;
            stats.illegal += usize::from(!mf.legality);
            out.push(mf);
            if inputs.is_empty() {
                break;
            }
            pc.push(blocking(&inputs, &m, &pc));
        }
    }
    Ok((out, stats))
}
