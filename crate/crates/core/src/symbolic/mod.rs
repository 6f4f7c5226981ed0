//! Snapshot-seeded symbolic execution.
//!
//! A test driver names a published service object and an entrypoint. The
//! explorer runs the entrypoint symbolically, migrating snapshot objects
//! into its own heap on first access (getfield, getstatic, aaload and the
//! collection intrinsics), and forks at every branch whose condition is
//! not decided by the current path condition. Every instruction is
//! restartable: it first reads operands and performs only idempotent heap
//! work, then forks, then commits. A fork clones the state and replays the
//! instruction in the clone with the other arm's index queued up.
//!
//! In ucse mode the snapshot is ignored and every non-local read yields a
//! fresh, lazily initialized value.

mod exec;
mod migrate;
mod state;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use exec::Explorer;
pub use state::{Cell, CellVal, Frame, OnReturn, SemiMark, Slot, SymId, SymObj, SymState, SymVal};

use crate::concrete::{BranchEvent, OverlayLocation, ReplayOutcome, Value};
use crate::host::ExternHost;
use crate::isa::{parse_type, CmpOp, Literal, Location, LookupError, Program, Type};
use crate::snapshot::{SnapshotError, SnapshotQuery};
use crate::solver::{Formula, Model, ModelValue, PathCondition, Term, VarId};
use crate::taint::TaintKind;

/// Longest array a ucse lazy array reference may stand for.
pub const UCSE_MAX_ARRAY_LEN: usize = 2;

/// Per-parameter input specification of a test driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamSpec {
    Literal(Literal),
    /// Fresh symbolic input of the given type.
    Symbolic(Type),
}

/// Bootstrap field plus the entrypoint invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestDriver {
    /// Root name of the service object, read from the snapshot.
    pub service: String,
    /// Declared class of the bootstrap field; the root's class or one of
    /// its superclasses. Defaults to the service name.
    pub class: Option<String>,
    pub entrypoint: String,
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DriverError {
    #[error("driver is not valid JSON: {0}")]
    Json(String),
    #[error("driver field `{0}` is missing or has the wrong type")]
    Field(&'static str),
    #[error("bad parameter {index}: {detail}")]
    Param { index: usize, detail: String },
}

impl TestDriver {
    /// Parse the driver file format: `{"service", "entrypoint", "params",
    /// "class"?}` where each parameter is a JSON literal or
    /// `"symbolic:<type>"`. A plain string literal that itself starts with
    /// `symbolic:` cannot be expressed.
    pub fn from_json(text: &str) -> Result<TestDriver, DriverError> {
        use serde_json::Value as J;
        let v: J = serde_json::from_str(text).map_err(|e| DriverError::Json(e.to_string()))?;
        let field = |k: &'static str| v.get(k).and_then(J::as_str).map(String::from).ok_or(DriverError::Field(k));
        let service = field("service")?;
        let entrypoint = field("entrypoint")?;
        let class = match v.get("class") {
            None | Some(J::Null) => None,
            Some(J::String(s)) => Some(s.clone()),
            Some(_) => return Err(DriverError::Field("class")),
        };
        let mut params = Vec::new();
        let raw = match v.get("params") {
            None => Vec::new(),
            Some(J::Array(a)) => a.clone(),
            Some(_) => return Err(DriverError::Field("params")),
        };
        for (index, p) in raw.iter().enumerate() {
            let bad = |detail: &str| DriverError::Param {
                index,
                detail: detail.into(),
            };
            params.push(match p {
                J::Null => ParamSpec::Literal(Literal::Null),
                J::Bool(b) => ParamSpec::Literal(Literal::Bool(*b)),
                J::Number(n) => {
                    let i = n.as_i64().and_then(|i| i32::try_from(i).ok()).ok_or_else(|| bad("not a 32-bit integer"))?;
                    ParamSpec::Literal(Literal::Int(i))
                }
                J::String(s) => match s.strip_prefix("symbolic:") {
                    Some(t) => ParamSpec::Symbolic(parse_type(t).ok_or_else(|| bad("unknown type"))?),
                    None => ParamSpec::Literal(Literal::Str(s.clone())),
                },
                _ => return Err(bad("expected a literal or `symbolic:<type>`")),
            });
        }
        Ok(TestDriver {
            service,
            class,
            entrypoint,
            params,
        })
    }

    pub fn to_json(&self) -> String {
        use serde_json::Value as J;
        let params: Vec<J> = self
            .params
            .iter()
            .map(|p| match p {
                ParamSpec::Symbolic(t) => J::String(format!("symbolic:{}", t)),
                ParamSpec::Literal(Literal::Null) => J::Null,
                ParamSpec::Literal(Literal::Bool(b)) => J::Bool(*b),
                ParamSpec::Literal(Literal::Int(i)) => J::from(*i),
                ParamSpec::Literal(Literal::Str(s)) => J::String(s.clone()),
            })
            .collect();
        let mut m = serde_json::Map::new();
        m.insert("service".into(), J::String(self.service.clone()));
        if let Some(c) = &self.class {
            m.insert("class".into(), J::String(c.clone()));
        }
        m.insert("entrypoint".into(), J::String(self.entrypoint.clone()));
        m.insert("params".into(), J::Array(params));
        J::Object(m).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Seeded,
    Ucse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Budget {
    /// Instructions per path.
    pub max_depth: u64,
    /// States created over the whole exploration, the initial ones included.
    pub max_states: usize,
    /// Search budget of each satisfiability check.
    pub solver_steps: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_depth: 100_000,
            max_states: 4096,
            solver_steps: 200_000,
        }
    }
}

/// Constraint on the terminal state, conjoined to every path condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Property {
    True,
    False,
    /// `ret <op> value` on the entrypoint's integer result.
    Return { op: CmpOp, value: i32 },
    /// `Class.field <op> value` on an integer static.
    Static { class: String, field: String, op: CmpOp, value: i32 },
}

impl Property {
    /// Evaluate against a concrete run's terminal state.
    pub fn holds_concrete(&self, program: &Program, outcome: &ReplayOutcome) -> bool {
        match self {
            Property::True => true,
            Property::False => false,
            Property::Return { op, value } => outcome
                .ret
                .and_then(|v| v.as_int())
                .is_some_and(|r| op.holds(r, *value)),
            Property::Static { class, field, op, value } => program
                .resolve_static(class, field)
                .ok()
                .and_then(|(ci, si)| outcome.heap.statics.get(&program.classes[ci].name)?.get(si).copied())
                .and_then(|v: Value| v.as_int())
                .is_some_and(|r| op.holds(r, *value)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreConfig {
    pub mode: Mode,
    pub target: Option<Location>,
    pub property: Option<Property>,
    pub budget: Budget,
    /// 0 explores arms in program order; any other value shuffles them.
    pub seed: u64,
    /// Check the per-path heap invariants after every migration and audit
    /// every saved state when it is restored.
    pub check_invariants: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            mode: Mode::Seeded,
            target: None,
            property: None,
            budget: Budget::default(),
            seed: 0,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("service root is a `{found}`, not a `{declared}`")]
    ClassMismatch { declared: String, found: String },
    #[error("entrypoint `{0}` is static or has a different arity than the driver")]
    BadEntrypoint(String),
    #[error("bad parameter {index}: {detail}")]
    BadParam { index: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathStatus {
    Returned,
    ReachedTarget,
    Trapped(String),
    BudgetExhausted,
}

/// Node of the migration tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MigNode {
    Driver,
    Class { name: String },
    Object { conc: u32, sym: SymId },
    /// Object created on the path; parent of migrations only.
    Symbolic { sym: SymId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Bootstrap,
    GetField,
    GetStatic,
    AaLoad,
    InitClass,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MigrationEdge {
    pub parent: MigNode,
    pub trigger: Trigger,
    pub child: MigNode,
}

/// Container read that may act as a slim-taint sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Access {
    AaLoad,
    IaLoad,
    ListGet,
    MapGet,
    SparseGet,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKey {
    Index(i32),
    Str(String),
    Int(i32),
    /// Key not known concretely.
    Symbolic,
}

/// One container read, tainted or not.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AccessRecord {
    /// `Class.method@pc`.
    pub site: String,
    pub access: Access,
    /// Snapshot id of the collection object or array, when migrated.
    pub container: Option<u32>,
    pub key: AccessKey,
    /// Snapshot id of the element read, when it is a migrated reference.
    pub element: Option<u32>,
    /// Label kind on the index or key.
    pub taint: Option<TaintKind>,
    pub fired: bool,
}

/// One sink firing: the element read became a symbolic input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InventoryEntry {
    pub site: String,
    pub access: Access,
    pub container: Option<u32>,
    pub key: AccessKey,
    pub element: Option<u32>,
    /// Rendered derivation of the index or key label.
    pub derivation: String,
    /// Variables created for the element and, through semi-symbolic
    /// references, for everything reached from it.
    pub vars: Vec<VarId>,
}

/// Where a symbolic variable came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarOrigin {
    /// Entrypoint parameter, or a field of a reference parameter.
    Param { index: usize, field: Option<String> },
    /// Skeleton-owned heap slot; `key` is its manifest key.
    Overlay { location: OverlayLocation, key: Option<String> },
    /// `k`-th result of a symbolic-return extern.
    Extern { name: String, k: u32 },
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamBinding {
    Value(ModelValue),
    Var(VarId),
    /// Reference parameter: null-ness variable plus field variables.
    Object { null: VarId, fields: Vec<(String, VarId)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathReport {
    pub id: usize,
    pub status: PathStatus,
    pub reached_target: bool,
    /// Path condition, with the property conjoined when one was given.
    pub pc: PathCondition,
    /// Satisfying model of `pc`; absent only for budget-exhausted paths
    /// whose prefix was never solved.
    pub model: Option<Model>,
    pub trace: Vec<BranchEvent>,
    pub migrations: Vec<MigrationEdge>,
    pub inventory: Vec<InventoryEntry>,
    pub accesses: Vec<AccessRecord>,
    pub origins: BTreeMap<VarId, VarOrigin>,
    pub params: Vec<ParamBinding>,
    /// Integer result of the entrypoint.
    pub ret: Option<Arc<Term>>,
    pub virtual_fanout: usize,
    pub steps: u64,
}

impl PathReport {
    /// Name of every variable the path created, by origin.
    pub fn var_name(&self, v: VarId) -> &str {
        &self.pc.var(v).name
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExploreStats {
    /// States created, the initial ones included.
    pub states: usize,
    pub paths: usize,
    /// Paths dropped because the target became unreachable.
    pub pruned: usize,
    /// Paths whose condition (with the property) turned out unsatisfiable.
    pub unsat_filtered: usize,
    /// Paths dropped because the solver gave up.
    pub unknown: usize,
    pub budget_exhausted: usize,
    pub max_virtual_fanout: usize,
    pub steps: u64,
    pub solver_calls: u64,
    pub migrations: usize,
    pub invariant_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exploration {
    pub reports: Vec<PathReport>,
    pub stats: ExploreStats,
}

/// Explore `driver`'s entrypoint to completion.
pub fn explore(
    program: &Program,
    snapshot: &dyn SnapshotQuery,
    driver: &TestDriver,
    config: ExploreConfig,
    host: &mut dyn ExternHost,
) -> Result<Exploration, ExploreError> {
    let mut ex = Explorer::new(program, snapshot, driver, config, host)?;
    while ex.step()? {}
    Ok(ex.finish())
}

/// Formula for `a op b`, folded when both sides are constant, with
/// comparisons of boolean terms against 0 turned back into formulas.
pub fn mk_cmp(op: CmpOp, a: &Arc<Term>, b: &Arc<Term>) -> Formula {
    match (&**a, &**b) {
        (Term::Const(x), Term::Const(y)) => {
            if op.holds(*x, *y) {
                Formula::True
            } else {
                Formula::False
            }
        }
        (Term::Bool(f), Term::Const(0)) | (Term::Const(0), Term::Bool(f)) if matches!(op, CmpOp::Ne | CmpOp::Eq) => {
            if op == CmpOp::Ne {
                (**f).clone()
            } else {
                f.negate()
            }
        }
        _ => Formula::Cmp(op, a.clone(), b.clone()),
    }
}

/// Conjunction with `True` members dropped and `False` absorbing.
pub fn mk_and(parts: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for p in parts {
        match p {
            Formula::True => {}
            Formula::False => return Formula::False,
            Formula::And(inner) => out.extend(inner),
            p => out.push(p),
        }
    }
    match out.len() {
        0 => Formula::True,
        1 => out.pop().unwrap(),
        _ => Formula::And(out),
    }
}

pub fn mk_or(parts: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for p in parts {
        match p {
            Formula::False => {}
            Formula::True => return Formula::True,
            p => out.push(p),
        }
    }
    match out.len() {
        0 => Formula::False,
        1 => out.pop().unwrap(),
        _ => Formula::Or(out),
    }
}

/// Value inside `[lo, hi]` closest to 0, used when a model leaves a
/// variable unassigned.
pub fn default_in_domain(lo: i32, hi: i32) -> i32 {
    0.clamp(lo, hi)
}
