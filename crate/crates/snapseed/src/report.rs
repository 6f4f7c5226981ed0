//! Serializable views of exploration results and their text rendering.
//! Core types keep variable ids; reports carry variable names.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use snapseed_core::analyses::{
    ConsistencyReport, EmitStats, ExploitManifest, IspeVerdict, ModeMetrics, UcseComparison,
};
use snapseed_core::concrete::BranchEvent;
use snapseed_core::solver::{render_conjunct, ModelValue};
use snapseed_core::symbolic::{
    AccessRecord, Exploration, ExploreStats, MigrationEdge, ParamBinding, PathReport, PathStatus, VarOrigin,
};

#[derive(Debug, Clone, Serialize)]
pub struct InventoryDoc {
    pub site: String,
    pub access: snapseed_core::symbolic::Access,
    pub container: Option<u32>,
    pub key: snapseed_core::symbolic::AccessKey,
    pub element: Option<u32>,
    pub derivation: String,
    pub vars: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarDoc {
    pub name: String,
    pub origin: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathDoc {
    pub id: usize,
    pub status: PathStatus,
    pub reached_target: bool,
    pub unconditional: bool,
    pub pc: String,
    pub pc_canonical: String,
    pub conjuncts: Vec<String>,
    /// Inputs by variable name; absent when the path was never solved.
    pub model: Option<BTreeMap<String, ModelValue>>,
    pub params: Vec<String>,
    pub vars: Vec<VarDoc>,
    pub trace: Vec<BranchEvent>,
    pub migrations: Vec<MigrationEdge>,
    pub inventory: Vec<InventoryDoc>,
    pub accesses: Vec<AccessRecord>,
    pub virtual_fanout: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsDoc {
    pub states: usize,
    pub paths: usize,
    pub pruned: usize,
    pub unsat_filtered: usize,
    pub unknown: usize,
    pub budget_exhausted: usize,
    pub max_virtual_fanout: usize,
    pub steps: u64,
    pub solver_calls: u64,
    pub migrations: usize,
    pub invariant_violations: Vec<String>,
}

impl From<&ExploreStats> for StatsDoc {
    fn from(s: &ExploreStats) -> Self {
        StatsDoc {
            states: s.states,
            paths: s.paths,
            pruned: s.pruned,
            unsat_filtered: s.unsat_filtered,
            unknown: s.unknown,
            budget_exhausted: s.budget_exhausted,
            max_virtual_fanout: s.max_virtual_fanout,
            steps: s.steps,
            solver_calls: s.solver_calls,
            migrations: s.migrations,
            invariant_violations: s.invariant_violations.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplorationDoc {
    pub service: String,
    pub entrypoint: String,
    pub stats: StatsDoc,
    pub paths: Vec<PathDoc>,
}

fn origin_text(o: &VarOrigin) -> String {
    match o {
        VarOrigin::Param { index, field: None } => format!("param {}", index),
        VarOrigin::Param { index, field: Some(f) } => format!("param {} field {}", index, f),
        VarOrigin::Overlay { location, key } => {
            let at = match location {
                snapseed_core::concrete::OverlayLocation::Field { obj, field } => format!("@{}.{}", obj, field),
                snapseed_core::concrete::OverlayLocation::Elem { arr, index } => format!("@{}[{}]", arr, index),
            };
            match key {
                Some(k) => format!("overlay {} ({})", at, k),
                None => format!("overlay {}", at),
            }
        }
        VarOrigin::Extern { name, k } => format!("extern {} #{}", name, k),
        VarOrigin::Internal => "internal".into(),
    }
}

pub fn path_doc(r: &PathReport) -> PathDoc {
    let name = |v| r.var_name(v).to_string();
    let model = r.model.as_ref().map(|m| m.iter().map(|(v, x)| (name(*v), x.clone())).collect());
    let params = r
        .params
        .iter()
        .map(|b| match b {
            ParamBinding::Value(v) => format!("{:?}", v),
            ParamBinding::Var(v) => name(*v),
            ParamBinding::Object { null, fields } => {
                let fs: Vec<String> = fields.iter().map(|(f, v)| format!("{}: {}", f, name(*v))).collect();
                format!("{} {{{}}}", name(*null), fs.join(", "))
            }
        })
        .collect();
    PathDoc {
        id: r.id,
        status: r.status.clone(),
        reached_target: r.reached_target,
        unconditional: r.pc.is_constantly_true(),
        pc: r.pc.render_named(),
        pc_canonical: r.pc.render_canonical(),
        conjuncts: r.pc.conjuncts().iter().map(|c| render_conjunct(&r.pc, c)).collect(),
        model,
        params,
        vars: r
            .origins
            .iter()
            .map(|(v, o)| VarDoc {
                name: name(*v),
                origin: origin_text(o),
            })
            .collect(),
        trace: r.trace.clone(),
        migrations: r.migrations.clone(),
        inventory: r
            .inventory
            .iter()
            .map(|e| InventoryDoc {
                site: e.site.clone(),
                access: e.access,
                container: e.container,
                key: e.key.clone(),
                element: e.element,
                derivation: e.derivation.clone(),
                vars: e.vars.iter().map(|v| name(*v)).collect(),
            })
            .collect(),
        accesses: r.accesses.clone(),
        virtual_fanout: r.virtual_fanout,
        steps: r.steps,
    }
}

pub fn exploration_doc(service: &str, entrypoint: &str, ex: &Exploration) -> ExplorationDoc {
    ExplorationDoc {
        service: service.into(),
        entrypoint: entrypoint.into(),
        stats: (&ex.stats).into(),
        paths: ex.reports.iter().map(path_doc).collect(),
    }
}

fn status_text(s: &PathStatus) -> String {
    match s {
        PathStatus::Returned => "returned".into(),
        PathStatus::ReachedTarget => "reached-target".into(),
        PathStatus::Trapped(t) => format!("trapped ({})", t),
        PathStatus::BudgetExhausted => "budget-exhausted".into(),
    }
}

fn stats_text(out: &mut String, s: &StatsDoc) {
    let _ = writeln!(
        out,
        "states {}  paths {}  pruned {}  unsat {}  unknown {}  exhausted {}  steps {}  migrations {}",
        s.states, s.paths, s.pruned, s.unsat_filtered, s.unknown, s.budget_exhausted, s.steps, s.migrations
    );
    for v in &s.invariant_violations {
        let _ = writeln!(out, "invariant violation: {}", v);
    }
}

pub fn exploration_text(doc: &ExplorationDoc, dump_inputs: bool) -> String {
    let mut out = format!("{}.{}\n", doc.service, doc.entrypoint);
    stats_text(&mut out, &doc.stats);
    for p in &doc.paths {
        let _ = writeln!(
            out,
            "path {}: {}{}{}",
            p.id,
            status_text(&p.status),
            if p.reached_target { ", target" } else { "" },
            if p.unconditional { ", unconditional" } else { "" }
        );
        let _ = writeln!(out, "  pc: {}", p.pc);
        if let Some(m) = &p.model {
            let parts: Vec<String> = m.iter().map(|(k, v)| format!("{} = {}", k, model_value_text(v))).collect();
            let _ = writeln!(out, "  model: {}", parts.join(", "));
        }
        if dump_inputs {
            for v in &p.vars {
                let _ = writeln!(out, "  input {}: {}", v.name, v.origin);
            }
            for e in &p.inventory {
                let _ = writeln!(
                    out,
                    "  sink {} {:?} key {:?} element {:?}: {} -> [{}]",
                    e.site,
                    e.access,
                    e.key,
                    e.element,
                    e.derivation,
                    e.vars.join(", ")
                );
            }
        }
    }
    out
}

pub fn model_value_text(v: &ModelValue) -> String {
    match v {
        ModelValue::Int(i) => i.to_string(),
        ModelValue::Str(s) => format!("{:?}", s),
        ModelValue::Null(true) => "null".into(),
        ModelValue::Null(false) => "non-null".into(),
    }
}

pub fn ispe_text(v: &IspeVerdict) -> String {
    let mut out = format!(
        "sensitive statement {}\nverdict: {}\n",
        v.sensitive,
        if v.inconsistent { "inconsistent" } else { "consistent" }
    );
    for e in &v.entrypoints {
        let _ = writeln!(out, "{}: {} feasible path(s), {} exhausted", e.entrypoint, e.paths.len(), e.exhausted);
        for p in &e.paths {
            let perms: Vec<&str> = p.permissions.iter().map(String::as_str).collect();
            let _ = writeln!(
                out,
                "  path {}: {{{}}}{}",
                p.path,
                perms.join(", "),
                if p.unconditional { " (unconditional)" } else { "" }
            );
            for u in &p.unrecognized {
                let _ = writeln!(out, "    unrecognized: {}", u);
            }
        }
    }
    if let Some([(e1, p1), (e2, p2)]) = v.witness {
        let _ = writeln!(
            out,
            "witness: {} path {} vs {} path {}",
            v.entrypoints[e1].entrypoint, p1, v.entrypoints[e2].entrypoint, p2
        );
    }
    for e in &v.no_feasible_path {
        let _ = writeln!(out, "no feasible path: {}", e);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyDoc {
    pub property: String,
    pub violations: Vec<PathDoc>,
    pub stats: StatsDoc,
}

pub fn property_text(d: &PropertyDoc) -> String {
    let mut out = format!("property: {}\n{} violating path(s)\n", d.property, d.violations.len());
    stats_text(&mut out, &d.stats);
    for p in &d.violations {
        let _ = writeln!(out, "path {}: {}", p.id, p.pc);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EmitDoc {
    pub stats: EmitStats,
    pub manifests: Vec<ExploitManifest>,
}

pub fn emit_text(d: &EmitDoc) -> String {
    let mut out = format!(
        "{} manifest(s), {} illegal, {} path(s) skipped, {} search(es) gave up\n",
        d.stats.manifests, d.stats.illegal, d.stats.skipped, d.stats.unknown
    );
    for m in &d.manifests {
        let _ = writeln!(
            out,
            "path {} model {}: {}{}",
            m.path,
            m.model_index,
            if m.legality { "legal" } else { "illegal" },
            if m.unconditional { ", unconditional" } else { "" }
        );
        for e in &m.overlay {
            let _ = writeln!(
                out,
                "  {} = {}{}",
                e.var,
                model_value_text(&e.value),
                e.key.as_deref().map(|k| format!(" ({})", k)).unwrap_or_default()
            );
        }
        for v in &m.violations {
            let _ = writeln!(out, "  violation: {}", v);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayDoc {
    pub status: snapseed_core::concrete::ReplayStatus,
    pub ret: Option<String>,
    pub trace_match: bool,
    pub trace: Vec<BranchEvent>,
    /// First index where the replay left the recorded trace.
    pub divergence: Option<usize>,
}

pub fn replay_text(d: &ReplayDoc) -> String {
    let mut out = format!(
        "status: {:?}\nret: {}\ntrace-match: {}\n",
        d.status,
        d.ret.as_deref().unwrap_or("none"),
        d.trace_match
    );
    if let Some(i) = d.divergence {
        let _ = writeln!(out, "diverged at branch {}", i);
    }
    out
}

pub fn consistency_text(r: &ConsistencyReport) -> String {
    let mut out = format!(
        "{}: {} snapshot(s), {}\n",
        r.entrypoint,
        r.sets.len(),
        if r.equal { "equal path-condition sets" } else { "divergent" }
    );
    for d in &r.diffs {
        let _ = writeln!(out, "snapshot {}:", d.snapshot);
        for m in &d.missing {
            let _ = writeln!(out, "  missing {}", m);
        }
        for e in &d.extra {
            let _ = writeln!(out, "  extra {}", e);
        }
    }
    out
}

fn metrics_text(out: &mut String, m: &ModeMetrics) {
    let _ = writeln!(
        out,
        "{:<7} states {:>6}  paths {:>4}  virtual forks {:>2}  steps {:>8}{}",
        match m.mode {
            snapseed_core::symbolic::Mode::Seeded => "seeded",
            snapseed_core::symbolic::Mode::Ucse => "ucse",
        },
        m.states,
        m.paths,
        m.virtual_forks,
        m.steps,
        if m.budget_exhausted { "  budget exhausted" } else { "" }
    );
}

pub fn ucse_text(c: &UcseComparison) -> String {
    let mut out = String::new();
    metrics_text(&mut out, &c.seeded);
    metrics_text(&mut out, &c.ucse);
    out
}
