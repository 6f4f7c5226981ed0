//! Acceptance suite. Each criterion runs once under its time limit and
//! prints one PASS or FAIL line; the process fails if any criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snapseed_core::analyses::{
    check_ispe, compare_ucse, emit_exploits, permission_set, snapshot_consistency, EmitConfig, ExploitManifest,
};
use snapseed_core::concrete::{
    param_field_var, replay, replay_watching, BranchEvent, HeapObj, HeapState, InitInputs, OverlayEntry,
    OverlayLocation, ReplayRequest, Value,
};
use snapseed_core::corpus;
use snapseed_core::isa::{ArithOp, CmpOp, Program};
use snapseed_core::snapshot::{SnapValue, SnapshotIndex, SnapshotQuery};
use snapseed_core::solver::{
    brute_force, check_sat, eval_formula, render_conjunct, Formula, ModelValue, PathCondition, SatResult,
    SolverConfig, Sort, StrTerm, Term, VarId,
};
use snapseed_core::symbolic::{
    explore, AccessKey, Budget, Exploration, ExploreConfig, MigNode, PathReport, PathStatus, Property,
    TestDriver,
};

type Outcome = Result<String, String>;

struct Service {
    program: Program,
    index: SnapshotIndex,
}

fn service(name: &str) -> Service {
    let program = corpus::program(name);
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).expect("corpus snapshot loads");
    Service { program, index }
}

fn driver(name: &str) -> TestDriver {
    TestDriver::from_json(corpus::driver_json(name).expect("corpus driver")).expect("driver parses")
}

fn service_for(driver_name: &str) -> Service {
    service(corpus::service_of_driver(driver_name).expect("driver has a service"))
}

fn run(s: &Service, d: &TestDriver, config: ExploreConfig) -> Result<Exploration, String> {
    explore(&s.program, &s.index, d, config, &mut corpus::host()).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. Migration invariants over randomized explorations. Only seeded mode
// migrates, so the randomness is in driver, arm order and budget.

/// Checks of one path's migration tree that need nothing but the report
/// and the snapshot: every snapshot object migrates at most once, symbolic
/// ids are not shared, and parents are migrated before their children.
fn audit_migrations(r: &PathReport, snap: &SnapshotIndex) -> Result<(), String> {
    let mut conc_seen = BTreeMap::new();
    let mut sym_seen = BTreeMap::new();
    let mut present: BTreeSet<MigNode> = BTreeSet::new();
    present.insert(MigNode::Driver);
    for e in &r.migrations {
        let parent_ok = match &e.parent {
            MigNode::Driver | MigNode::Class { .. } | MigNode::Symbolic { .. } => true,
            p @ MigNode::Object { .. } => present.contains(p),
        };
        ensure(parent_ok, || format!("path {}: parent {:?} migrated after its child", r.id, e.parent))?;
        if let MigNode::Object { conc, sym } = &e.child {
            ensure(snap.kind_of(*conc).is_ok(), || format!("path {}: migrated id {} is not in the snapshot", r.id, conc))?;
            if let Some(prev) = conc_seen.insert(*conc, *sym) {
                return Err(format!("path {}: snapshot id {} migrated twice ({} and {})", r.id, conc, prev, sym));
            }
            if let Some(prev) = sym_seen.insert(*sym, *conc) {
                return Err(format!("path {}: symbolic id {} stands for {} and {}", r.id, sym, prev, conc));
            }
        }
        present.insert(e.child.clone());
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let services: BTreeMap<&str, Service> =
        corpus::SERVICES.iter().map(|(n, _)| (*n, service(n))).collect();
    let drivers: Vec<(&str, TestDriver)> = corpus::DRIVERS.iter().map(|(n, _)| (*n, driver(n))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut paths = 0;
    let mut migrations = 0;
    for i in 0..1000 {
        let (name, d) = &drivers[rng.gen_range(0..drivers.len())];
        let s = &services[corpus::service_of_driver(name).unwrap()];
        let config = ExploreConfig {
            seed: rng.gen(),
            budget: Budget {
                max_states: rng.gen_range(4..512),
                ..Budget::default()
            },
            check_invariants: true,
            ..ExploreConfig::default()
        };
        let ex = run(s, d, config.clone()).map_err(|e| format!("run {} ({}): {}", i, name, e))?;
        ensure(ex.stats.invariant_violations.is_empty(), || {
            format!("run {} ({}, {:?}): {:?}", i, name, config, ex.stats.invariant_violations)
        })?;
        for r in &ex.reports {
            audit_migrations(r, &s.index).map_err(|e| format!("run {} ({}): {}", i, name, e))?;
            migrations += r.migrations.len();
        }
        paths += ex.reports.len();
    }
    ensure(migrations > 0, || "no migrations were exercised".into())?;
    Ok(format!("1000 explorations, {} paths, {} migrations audited", paths, migrations))
}

// 2. Replay oracle.

fn emitted(s: &Service, d: &TestDriver, property: Option<Property>) -> Result<Vec<ExploitManifest>, String> {
    let ex = run(
        s,
        d,
        ExploreConfig {
            property,
            ..ExploreConfig::default()
        },
    )?;
    let (manifests, _) = emit_exploits(&ex.reports, d, &corpus::apps(), &s.index, &EmitConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(manifests)
}

fn criterion_2() -> Outcome {
    let mut jobs: Vec<(&str, Option<Property>)> = corpus::DRIVERS.iter().map(|(n, _)| (*n, None)).collect();
    jobs.push(("task_startActivity", Some(Property::Return { op: CmpOp::Eq, value: corpus::VICTIM_TASK_ID })));
    let (mut legal, mut total) = (0, 0);
    for (name, property) in jobs {
        let s = service_for(name);
        let d = driver(name);
        for m in emitted(&s, &d, property)? {
            total += 1;
            if !m.legality {
                continue;
            }
            legal += 1;
            let out = replay(&s.program, &s.index, &m.replay_request(), &mut corpus::host())
                .map_err(|e| format!("{} path {}: {}", name, m.path, e))?;
            ensure(out.trace == m.trace, || {
                format!("{} path {} model {}: replay left the recorded trace", name, m.path, m.model_index)
            })?;
        }
    }
    ensure(legal > 0, || "no legal manifests".into())?;
    Ok(format!("{} legal of {} manifests replay to their traces", legal, total))
}

// 3. ISPE on the location service, with a brute-force trace oracle.

/// Snapshot array holding the skeleton's permission names, found from
/// the snapshot alone.
fn skeleton_permission_array(snap: &SnapshotIndex) -> Result<(u32, usize), String> {
    let uid = snap.header().skeleton_uid;
    for (&id, _) in snap.entries() {
        let Ok(o) = snap.get_object(id) else { continue };
        if o.class != "PackageSetting" || o.fields.get("uid") != Some(&SnapValue::Int(uid)) {
            continue;
        }
        let list = o.fields["perms"].as_ref().ok_or("perms is not a reference")?;
        let data = snap.get_object(list).map_err(|e| e.to_string())?.fields["data"]
            .as_ref()
            .ok_or("list data is not a reference")?;
        let len = snap.get_array(data).map_err(|e| e.to_string())?.values.len();
        return Ok((data, len));
    }
    Err("no skeleton PackageSetting".into())
}

/// Every combination of `choices`, one value per slot.
fn product<T: Clone>(slots: usize, choices: &[T]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for _ in 0..slots {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut p = prefix.clone();
                    p.push(c.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Traces of all concrete runs over the bounded input domain that execute
/// the sensitive statement.
fn concrete_reaching_traces(s: &Service, d: &TestDriver) -> Result<BTreeSet<Vec<BranchEvent>>, String> {
    let target = s.program.locate(corpus::LOCATION_TARGET).map_err(|e| e.to_string())?;
    let (arr, len) = skeleton_permission_array(&s.index)?;
    let perms = product(len, &[corpus::FINE_LOCATION.to_string(), "com.example.other".to_string()]);
    // (params, model) for every parameter assignment.
    let mut calls: Vec<(Vec<ModelValue>, BTreeMap<String, ModelValue>)> = vec![(Vec::new(), BTreeMap::new())];
    for (i, p) in d.params.iter().enumerate() {
        let mut next = Vec::new();
        for (params, model) in &calls {
            let mut push = |v: ModelValue, extra: &[(&str, i32)]| {
                let mut ps = params.clone();
                ps.push(v);
                let mut m = model.clone();
                for (f, x) in extra {
                    m.insert(param_field_var(i, f), ModelValue::Int(*x));
                }
                next.push((ps, m));
            };
            match format!("{:?}", p).as_str() {
                s if s.contains("Criteria") => {
                    push(ModelValue::Null(true), &[]);
                    for a in 0..=2 {
                        for pw in 0..=2 {
                            for c in 0..=1 {
                                push(ModelValue::Null(false), &[("accuracy", a), ("power", pw), ("costAllowed", c)]);
                            }
                        }
                    }
                }
                s if s.contains("Bool") => {
                    push(ModelValue::Int(0), &[]);
                    push(ModelValue::Int(1), &[]);
                }
                other => return Err(format!("no concrete domain for parameter {}", other)),
            }
        }
        calls = next;
    }
    let mut traces = BTreeSet::new();
    for (params, model) in &calls {
        for ps in &perms {
            let req = ReplayRequest {
                service: d.service.clone(),
                entrypoint: d.entrypoint.clone(),
                params: params.clone(),
                model: model.clone(),
                overlay: ps
                    .iter()
                    .enumerate()
                    .map(|(index, p)| OverlayEntry {
                        location: OverlayLocation::Elem { arr, index },
                        value: ModelValue::Str(p.clone()),
                    })
                    .collect(),
            };
            let out = replay_watching(&s.program, &s.index, &req, Some(target), &mut corpus::host())
                .map_err(|e| e.to_string())?;
            if out.reached {
                traces.insert(out.trace);
            }
        }
    }
    Ok(traces)
}

fn has_fine_conjunct(r: &PathReport) -> bool {
    r.pc.conjuncts().iter().any(|c| match c {
        Formula::StrEq(a, b) => [a, b].iter().any(|t| matches!(t, StrTerm::Lit(l) if l == corpus::FINE_LOCATION)),
        _ => false,
    })
}

fn criterion_3() -> Outcome {
    let s = service("location_service");
    let target = s.program.locate(corpus::LOCATION_TARGET).map_err(|e| e.to_string())?;
    let all = driver("location_getAllProviders");
    let some = driver("location_getProviders");
    let out = check_ispe(&s.program, &s.index, &all, &some, target, &ExploreConfig::default(), &mut corpus::host())
        .map_err(|e| e.to_string())?;
    let feasible = |ex: &Exploration| -> Vec<PathReport> {
        ex.reports
            .iter()
            .filter(|r| r.reached_target && r.status != PathStatus::BudgetExhausted)
            .cloned()
            .collect()
    };
    let all_paths = feasible(&out.explorations[0]);
    let some_paths = feasible(&out.explorations[1]);
    ensure(all_paths.len() == 1 && all_paths[0].pc.is_constantly_true(), || {
        format!("getAllProviders has {} feasible paths", all_paths.len())
    })?;
    ensure(!some_paths.is_empty() && some_paths.iter().all(has_fine_conjunct), || {
        "a getProviders path lacks the fine-location conjunct".into()
    })?;
    ensure(some_paths.iter().all(|r| permission_set(r).0.contains(corpus::FINE_LOCATION)), || {
        "permission extraction missed the fine-location conjunct".into()
    })?;
    ensure(out.verdict.inconsistent, || "verdict is consistent".into())?;
    for (d, paths) in [(&all, &all_paths), (&some, &some_paths)] {
        let symbolic: BTreeSet<Vec<BranchEvent>> = paths.iter().map(|r| r.trace.clone()).collect();
        let concrete = concrete_reaching_traces(&s, d)?;
        ensure(symbolic == concrete, || {
            format!(
                "{}: {} symbolic traces, {} concrete, {} only symbolic, {} only concrete",
                d.entrypoint,
                symbolic.len(),
                concrete.len(),
                symbolic.difference(&concrete).count(),
                concrete.difference(&symbolic).count()
            )
        })?;
    }
    Ok(format!(
        "1 unconditional path vs {} fine-location paths; trace sets match brute force",
        some_paths.len()
    ))
}

// 4. Slim-taint precision.

/// Sites whose key comes from the caller's uid or package name, by
/// construction of the corpus.
const CALLER_KEYED_SITES: [&str; 3] =
    ["Settings.getUserIdLPr", "Settings.getPackageLPr", "ConnectModeState.processMessage"];

/// App owning the element read, derived from the snapshot and the
/// registry without looking at taint labels.
fn owner(snap: &SnapshotIndex, element: Option<u32>, key: &AccessKey) -> Option<i32> {
    if let Some(o) = element.and_then(|e| snap.get_object(e).ok()) {
        if let Some(SnapValue::Int(uid)) = o.fields.get("uid") {
            return Some(*uid);
        }
    }
    let apps = corpus::apps();
    let app_id = |uid: i32| uid % snapseed_core::PER_USER_RANGE;
    match key {
        AccessKey::Str(p) => apps.by_package(p).map(|a| a.uid),
        AccessKey::Int(k) => apps.apps().iter().find(|a| app_id(a.uid) == *k).map(|a| a.uid),
        AccessKey::Index(i) => apps
            .apps()
            .iter()
            .find(|a| app_id(a.uid) - snapseed_core::FIRST_APPLICATION_UID == *i)
            .map(|a| a.uid),
        AccessKey::Symbolic => None,
    }
}

fn criterion_4() -> Outcome {
    const CHAIN: &str = "10054 -> mod 100000 -> 10054 -> sub 10000 -> 54";
    let (mut tp, mut tn, mut skeleton_tn) = (0, 0, 0);
    let mut chain_seen = false;
    for (name, _) in corpus::DRIVERS {
        let s = service_for(name);
        let ex = run(&s, &driver(name), ExploreConfig::default())?;
        for r in &ex.reports {
            for a in &r.accesses {
                let method = a.site.split('@').next().unwrap_or_default();
                let own = owner(&s.index, a.element, &a.key);
                let expected = own == Some(corpus::SKELETON_UID) && CALLER_KEYED_SITES.contains(&method);
                ensure(a.fired == expected, || {
                    format!(
                        "{} path {}: {} key {:?} owner {:?}: fired={} expected {}",
                        name, r.id, a.site, a.key, own, a.fired, expected
                    )
                })?;
                match (a.fired, own == Some(corpus::SKELETON_UID)) {
                    (true, _) => tp += 1,
                    (false, true) => skeleton_tn += 1,
                    (false, false) => tn += 1,
                }
            }
            let fired: BTreeSet<(&str, &AccessKey)> =
                r.accesses.iter().filter(|a| a.fired).map(|a| (a.site.as_str(), &a.key)).collect();
            let inventory: BTreeSet<(&str, &AccessKey)> =
                r.inventory.iter().map(|e| (e.site.as_str(), &e.key)).collect();
            ensure(fired == inventory, || format!("{} path {}: inventory differs from fired sinks", name, r.id))?;
            chain_seen |= r.inventory.iter().any(|e| e.derivation == CHAIN);
        }
    }
    ensure(chain_seen, || format!("no inventory entry derives `{}`", CHAIN))?;
    ensure(tp > 0 && skeleton_tn > 0, || "corpus does not exercise both sink outcomes".into())?;
    Ok(format!(
        "0 FP, 0 FN over {} fired, {} skeleton-owned unkeyed and {} foreign reads; uid chain observed",
        tp, skeleton_tn, tn
    ))
}

// 5. Bit-flag conjunct of the task manager.

/// `((((p0 & M) | A) | B) ...) & 0x80000) != 0x80000` with at least one `|`.
fn is_flag_pattern(text: &str) -> bool {
    let Some(body) = text.strip_suffix(" & 0x80000) != 0x80000") else {
        return false;
    };
    let inner = body.trim_start_matches('(');
    let Some(rest) = inner.strip_prefix("p0 & 0x") else {
        return false;
    };
    let mut parts = rest.split(") | 0x");
    let mask_ok = parts.next().is_some_and(|m| u32::from_str_radix(m, 16).is_ok());
    let ors: Vec<&str> = parts.collect();
    mask_ok
        && !ors.is_empty()
        && ors
            .iter()
            .all(|o| u32::from_str_radix(o.trim_end_matches(')'), 16).is_ok())
}

fn criterion_5() -> Outcome {
    let s = service("task_manager");
    let d = driver("task_startActivity");
    let prop = Property::Return { op: CmpOp::Eq, value: corpus::VICTIM_TASK_ID };
    let ex = run(
        &s,
        &d,
        ExploreConfig {
            property: Some(prop),
            ..ExploreConfig::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let samples: Vec<i32> = (0..4096).map(|_| rng.gen()).collect();
    let mut matched = 0;
    for r in &ex.reports {
        let Some(model) = &r.model else { continue };
        let Some(p0) = r.pc.var_by_name("p0") else { continue };
        for c in r.pc.conjuncts() {
            if !is_flag_pattern(&render_conjunct(&r.pc, c)) {
                continue;
            }
            matched += 1;
            ensure(eval_formula(c, model, &r.pc) == Ok(true), || format!("path {}: model violates the conjunct", r.id))?;
            // Everything the path says about the flags alone.
            let mut only = PathCondition::new();
            for v in r.pc.vars() {
                only.fresh(v.name.clone(), v.sort.clone());
            }
            for f in r.pc.conjuncts() {
                let mut vs = BTreeSet::new();
                f.vars(&mut vs);
                if vs.iter().all(|v| *v == p0) {
                    only.push(f.clone());
                }
            }
            let domain = BTreeMap::from([(p0, samples.iter().map(|v| ModelValue::Int(*v)).collect())]);
            let brute: BTreeSet<i32> = brute_force(&only, &domain, 1 << 12)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|m| match m[&p0] {
                    ModelValue::Int(i) => i,
                    _ => unreachable!(),
                })
                .collect();
            for v in &samples {
                let mut fixed = only.clone();
                fixed.push(Formula::cmp(CmpOp::Eq, Term::var(p0), Term::constant(*v)));
                let sat = match check_sat(&fixed, &SolverConfig::default()) {
                    SatResult::Sat(_) => true,
                    SatResult::Unsat => false,
                    SatResult::Unknown => return Err(format!("path {}: solver gave up on p0 = {:#x}", r.id, v)),
                };
                ensure(sat == brute.contains(v), || {
                    format!("path {}: p0 = {:#x}: solver {} brute force {}", r.id, v, sat, brute.contains(v))
                })?;
            }
        }
    }
    ensure(matched > 0, || "no path carries the masked flag conjunct".into())?;
    Ok(format!("{} conjunct(s) matched; solver and brute force agree on 4096 flag values each", matched))
}

// 6. Legality filtering of task-hijack manifests.

fn skeleton_in_task_stack(program: &Program, heap: &HeapState, task_id: i32, uid: i32) -> bool {
    let list_items = |list: Value| -> Vec<Value> {
        let Some(data) = list.as_ref().and_then(|l| heap.field(program, l, "data")) else {
            return Vec::new();
        };
        match data.as_ref().and_then(|d| heap.objects.get(&d)) {
            Some(HeapObj::Array { values, .. }) => values.clone(),
            _ => Vec::new(),
        }
    };
    heap.objects.iter().any(|(&id, o)| {
        matches!(o, HeapObj::Object { class, .. } if class == "TaskRecord")
            && heap.field(program, id, "taskId") == Some(Value::Int(task_id))
            && heap.field(program, id, "stack").is_some_and(|stack| {
                list_items(stack).iter().any(|r| {
                    r.as_ref().is_some_and(|r| heap.field(program, r, "uid") == Some(Value::Int(uid)))
                })
            })
    })
}

fn criterion_6() -> Outcome {
    let s = service("task_manager");
    let d = driver("task_startActivity");
    let prop = Property::Return { op: CmpOp::Eq, value: corpus::VICTIM_TASK_ID };
    let manifests = emitted(&s, &d, Some(prop.clone()))?;
    let (mut victim, mut legal) = (0, 0);
    for m in &manifests {
        let steals_package = m
            .overlay
            .iter()
            .any(|e| e.key.as_deref() == Some("package") && e.value == ModelValue::Str(corpus::VICTIM_PACKAGE.into()));
        if steals_package {
            victim += 1;
            ensure(!m.legality, || format!("path {} model {}: victim package marked legal", m.path, m.model_index))?;
        }
        if !m.legality {
            continue;
        }
        legal += 1;
        let out = replay(&s.program, &s.index, &m.replay_request(), &mut corpus::host()).map_err(|e| e.to_string())?;
        let at = format!("path {} model {}", m.path, m.model_index);
        ensure(out.trace == m.trace, || format!("{}: trace mismatch", at))?;
        ensure(prop.holds_concrete(&s.program, &out), || format!("{}: returned {:?}", at, out.ret))?;
        ensure(
            skeleton_in_task_stack(&s.program, &out.heap, corpus::VICTIM_TASK_ID, corpus::SKELETON_UID),
            || format!("{}: malicious record is not in the victim's stack", at),
        )?;
    }
    ensure(victim > 0 && legal > 0, || format!("{} victim-package and {} legal manifests", victim, legal))?;
    Ok(format!("{} victim-package manifests illegal; {} legal ones hijack task {}", victim, legal, corpus::VICTIM_TASK_ID))
}

// 7. Snapshot consistency under perturbed non-app data.

fn criterion_7() -> Outcome {
    let configs = corpus::perturbed_configs();
    let (mut checked, mut perturbed) = (0, 0);
    for (svc, _) in corpus::SERVICES {
        let program = corpus::program(svc);
        let indexes: Vec<SnapshotIndex> = configs
            .iter()
            .map(|c| {
                let inputs = InitInputs {
                    apps: corpus::apps(),
                    config: c.clone(),
                };
                let doc = corpus::snapshot_with(&program, &inputs).map_err(|e| e.to_string())?;
                SnapshotIndex::load(&doc).map_err(|e| e.to_string())
            })
            .collect::<Result<_, String>>()?;
        if indexes.windows(2).any(|w| w[0] != w[1]) {
            perturbed += 1;
        }
        let refs: Vec<&dyn SnapshotQuery> = indexes.iter().map(|i| i as &dyn SnapshotQuery).collect();
        for (name, _) in corpus::DRIVERS.iter().filter(|(n, _)| corpus::service_of_driver(n) == Some(svc)) {
            let r = snapshot_consistency(&program, &refs, &driver(name), &ExploreConfig::default(), &mut corpus::host())
                .map_err(|e| e.to_string())?;
            ensure(r.equal, || format!("{}: {:?}", name, r.diffs))?;
            checked += 1;
        }
    }
    // Services that never read the perturbed data give identical snapshots.
    ensure(perturbed > 0, || "no snapshot changed under perturbation".into())?;
    Ok(format!(
        "{} entrypoints give equal path-condition sets on {} snapshots ({} services perturbed)",
        checked,
        configs.len(),
        perturbed
    ))
}

// 8. Ucse comparison.

fn criterion_8() -> Outcome {
    let s = service("shape_dispatch");
    let tight = ExploreConfig {
        budget: Budget {
            max_states: 64,
            ..Budget::default()
        },
        ..ExploreConfig::default()
    };
    let c = compare_ucse(&s.program, &s.index, &driver("shape_describe"), &tight, &mut corpus::host())
        .map_err(|e| e.to_string())?;
    ensure(c.ucse.virtual_forks >= 5, || format!("ucse forked {} ways", c.ucse.virtual_forks))?;
    ensure(c.ucse.budget_exhausted, || "ucse finished within 64 states".into())?;
    ensure(!c.seeded.budget_exhausted, || "seeded ran out of budget".into())?;
    for (name, _) in corpus::DRIVERS {
        let s = service_for(name);
        let c = compare_ucse(&s.program, &s.index, &driver(name), &ExploreConfig::default(), &mut corpus::host())
            .map_err(|e| e.to_string())?;
        ensure(c.seeded.states <= c.ucse.states, || {
            format!("{}: seeded {} states, ucse {}", name, c.seeded.states, c.ucse.states)
        })?;
    }
    Ok(format!(
        "shape dispatch: ucse forks {} and exhausts 64 states, seeded completes; seeded <= ucse on all {} drivers",
        c.ucse.virtual_forks,
        corpus::DRIVERS.len()
    ))
}

// 9. Solver soundness against brute force.

const OPS: [ArithOp; 10] = [
    ArithOp::Add,
    ArithOp::Sub,
    ArithOp::Mul,
    ArithOp::Div,
    ArithOp::Mod,
    ArithOp::And,
    ArithOp::Or,
    ArithOp::Xor,
    ArithOp::Shl,
    ArithOp::Shr,
];
const CMPS: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt, CmpOp::Le];
const WORDS: [&str; 3] = ["alpha", "beta", "gamma"];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    ints: Vec<VarId>,
    strs: Vec<VarId>,
    refs: Vec<VarId>,
}

impl Gen<'_> {
    fn term(&mut self, depth: u32) -> Arc<Term> {
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        if leaf {
            return if !self.ints.is_empty() && self.rng.gen_bool(0.6) {
                Term::var(self.ints[self.rng.gen_range(0..self.ints.len())])
            } else if self.rng.gen_bool(0.8) {
                Term::constant(self.rng.gen_range(-8..=8))
            } else {
                Term::constant(self.rng.gen())
            };
        }
        let op = OPS[self.rng.gen_range(0..OPS.len())];
        Term::bin(op, self.term(depth - 1), self.term(depth - 1))
    }

    fn str_term(&mut self) -> StrTerm {
        if !self.strs.is_empty() && self.rng.gen_bool(0.6) {
            StrTerm::Var(self.strs[self.rng.gen_range(0..self.strs.len())])
        } else {
            StrTerm::Lit(WORDS[self.rng.gen_range(0..WORDS.len())].into())
        }
    }

    fn formula(&mut self, depth: u32) -> Formula {
        let roll = self.rng.gen_range(0..10);
        match roll {
            0 if depth > 0 => Formula::Not(Arc::new(self.formula(depth - 1))),
            1 if depth > 0 => Formula::Or((0..self.rng.gen_range(2..4)).map(|_| self.formula(depth - 1)).collect()),
            2 if depth > 0 => Formula::And((0..2).map(|_| self.formula(depth - 1)).collect()),
            3 if !self.strs.is_empty() => Formula::StrEq(self.str_term(), self.str_term()),
            4 if !self.refs.is_empty() => Formula::IsNull(self.refs[self.rng.gen_range(0..self.refs.len())]),
            _ => {
                let op = CMPS[self.rng.gen_range(0..CMPS.len())];
                Formula::Cmp(op, self.term(2), self.term(2))
            }
        }
    }
}

/// Random condition plus explicit domains whose product is at most 2^16.
fn random_pc(rng: &mut ChaCha8Rng) -> (PathCondition, BTreeMap<VarId, Vec<ModelValue>>) {
    let mut pc = PathCondition::new();
    let mut domains = BTreeMap::new();
    let mut product: u64 = 1;
    let mut g_ints = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let room = (1u64 << 16) / product;
        let width = rng.gen_range(1..=room.min(64)) as i32;
        let lo = rng.gen_range(-40..40);
        let v = pc.fresh(format!("x{}", i), Sort::Int { lo, hi: lo + width - 1 });
        domains.insert(v, (lo..lo + width).map(ModelValue::Int).collect::<Vec<_>>());
        product *= width as u64;
        g_ints.push(v);
    }
    let mut g_strs = Vec::new();
    if rng.gen_bool(0.3) && product * 5 <= 1 << 16 {
        g_strs.push(pc.fresh("s0", Sort::Str));
        product *= 5;
    }
    let mut g_refs = Vec::new();
    if rng.gen_bool(0.3) && product * 2 <= 1 << 16 {
        let r = pc.fresh("r0", Sort::Ref);
        domains.insert(r, vec![ModelValue::Null(true), ModelValue::Null(false)]);
        g_refs.push(r);
    }
    let mut g = Gen {
        rng,
        ints: g_ints,
        strs: g_strs.clone(),
        refs: g_refs,
    };
    for _ in 0..g.rng.gen_range(1..=4) {
        let f = g.formula(2);
        pc.push(f);
    }
    // Strings range over the literals plus values equal to none of them.
    let mut words: Vec<ModelValue> = WORDS.iter().map(|w| ModelValue::Str((*w).into())).collect();
    words.push(ModelValue::Str("other-0".into()));
    words.push(ModelValue::Str("other-1".into()));
    for s in g_strs {
        domains.insert(s, words.clone());
    }
    (pc, domains)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..10_000 {
        let (pc, domains) = random_pc(&mut rng);
        let brute = brute_force(&pc, &domains, 1 << 16).map_err(|e| format!("pc {}: {}", i, e))?;
        let config = SolverConfig {
            seed: i,
            ..SolverConfig::default()
        };
        match check_sat(&pc, &config) {
            SatResult::Sat(m) => {
                ensure(!brute.is_empty(), || format!("pc {}: solver sat, brute force unsat: {}", i, pc.render_named()))?;
                ensure(pc.satisfied_by(&m) == Ok(true), || format!("pc {}: model fails: {}", i, pc.render_named()))?;
                sat += 1;
            }
            SatResult::Unsat => {
                ensure(brute.is_empty(), || {
                    format!("pc {}: solver unsat, brute force found {:?}: {}", i, brute[0], pc.render_named())
                })?;
                unsat += 1;
            }
            SatResult::Unknown => return Err(format!("pc {}: solver gave up: {}", i, pc.render_named())),
        }
    }
    Ok(format!("10000 conditions: {} sat, {} unsat, no disagreement", sat, unsat))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("migration invariants", Duration::from_secs(60), criterion_1),
        ("replay oracle", Duration::from_secs(30), criterion_2),
        ("ispe structure", Duration::from_secs(30), criterion_3),
        ("slim-taint precision", Duration::from_secs(10), criterion_4),
        ("bit-flag path", Duration::from_secs(30), criterion_5),
        ("legality filtering", Duration::from_secs(30), criterion_6),
        ("snapshot consistency", Duration::from_secs(60), criterion_7),
        ("ucse dominance", Duration::from_secs(60), criterion_8),
        ("solver soundness", Duration::from_secs(120), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let verdict = match outcome {
            Ok(detail) if took < *limit => format!("PASS {} {}: {}", i + 1, name, detail),
            Ok(detail) => format!("FAIL {} {}: over the {:?} limit ({})", i + 1, name, limit, detail),
            Err(e) => format!("FAIL {} {}: {}", i + 1, name, e),
        };
        if verdict.starts_with("FAIL") {
            failed += 1;
        }
        println!("{} [{:.2}s / {}s]", verdict, took.as_secs_f64(), limit.as_secs());
    }
    if failed > 0 {
        println!("{} criterion(s) failed", failed);
        std::process::exit(1);
    }
}

