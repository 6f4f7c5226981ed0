use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::concrete::{replay, ReplayStatus};
use crate::corpus;
use crate::isa::{assemble, CmpOp};
use crate::snapshot::{SnapshotIndex, SnapshotQuery};
use crate::solver::{ModelValue, StrTerm};
use crate::symbolic::{Budget, ExploreConfig, Mode, Property, TestDriver};

struct Service {
    program: crate::isa::Program,
    index: SnapshotIndex,
}

fn service(name: &str) -> Service {
    let program = corpus::program(name);
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    Service { program, index }
}

fn driver(name: &str) -> TestDriver {
    TestDriver::from_json(corpus::driver_json(name).unwrap()).unwrap()
}

fn base() -> ExploreConfig {
    ExploreConfig::default()
}

fn location_ispe(ep1: &str, ep2: &str) -> IspeOutcome {
    let s = service("location_service");
    let target = s.program.locate(corpus::LOCATION_TARGET).unwrap();
    check_ispe(&s.program, &s.index, &driver(ep1), &driver(ep2), target, &base(), &mut corpus::host()).unwrap()
}

#[test]
fn location_entrypoints_are_inconsistent() {
    let v = location_ispe("location_getAllProviders", "location_getProviders").verdict;
    assert!(v.inconsistent);
    let all = &v.entrypoints[0];
    assert_eq!(all.paths.len(), 1);
    assert!(all.paths[0].unconditional);
    assert!(all.paths[0].permissions.is_empty());
    let guarded = &v.entrypoints[1];
    assert!(!guarded.paths.is_empty());
    for p in &guarded.paths {
        assert_eq!(p.permissions.iter().collect::<Vec<_>>(), vec![corpus::FINE_LOCATION]);
        assert!(p.unrecognized.is_empty());
    }
    let [(e, _), _] = v.witness.unwrap();
    assert_eq!(e, 0);
}

#[test]
fn identical_checks_are_consistent() {
    let v = location_ispe("location_getProviders", "location_getProviders_null").verdict;
    assert!(!v.inconsistent, "{:?}", v);
    assert!(v.witness.is_none());
}

#[test]
fn unreachable_entrypoint_is_rejected() {
    let s = service("telecom_service");
    let target = s.program.locate(corpus::TELECOM_TARGET).unwrap();
    let r = check_ispe(
        &s.program,
        &s.index,
        &driver("telecom_getCallState"),
        &driver("telecom_placeCall"),
        target,
        &base(),
        &mut corpus::host(),
    );
    assert!(matches!(r, Err(AnalysisError::Unreachable(e)) if e == "getCallState"));
}

#[test]
fn dual_permission_paths_need_both() {
    // Both dialing entrypoints run the same two checks.
    let s = service("telecom_service");
    let target = s.program.locate(corpus::TELECOM_TARGET).unwrap();
    let v = check_ispe(
        &s.program,
        &s.index,
        &driver("telecom_placeCall"),
        &driver("telecom_placeEmergencyCall"),
        target,
        &base(),
        &mut corpus::host(),
    )
    .unwrap()
    .verdict;
    for e in &v.entrypoints {
        assert!(!e.paths.is_empty());
        assert!(e.paths.iter().all(|p| p.permissions.len() == 2));
    }
    assert!(!v.inconsistent);
}

fn task_property(p: Property) -> (Service, PropertyOutcome) {
    let s = service("task_manager");
    let out = check_property(&s.program, &s.index, &driver("task_startActivity"), p, &base(), &mut corpus::host())
        .unwrap();
    (s, out)
}

fn victim_stack() -> Property {
    Property::Return {
        op: CmpOp::Eq,
        value: corpus::VICTIM_TASK_ID,
    }
}

#[test]
fn hijack_property_needs_the_victim_affinity_on_some_path() {
    let (_, out) = task_property(victim_stack());
    assert!(!out.violations.is_empty());
    let wants_affinity = out.violations.iter().any(|r| {
        r.pc.conjuncts().iter().any(|c| {
            matches!(c, crate::solver::Formula::StrEq(StrTerm::Var(v), StrTerm::Lit(s))
                | crate::solver::Formula::StrEq(StrTerm::Lit(s), StrTerm::Var(v))
                if s == corpus::VICTIM_AFFINITY && r.var_name(*v).ends_with(".affinity"))
        })
    });
    assert!(wants_affinity);
}

#[test]
fn constant_properties() {
    let (_, none) = task_property(Property::False);
    assert!(none.violations.is_empty());
    let (_, all) = task_property(Property::True);
    assert_eq!(all.violations.len(), all.stats.paths);
    assert!(all.violations.len() > 1);
}

fn task_manifests() -> (Service, Vec<ExploitManifest>) {
    let (s, out) = task_property(victim_stack());
    let (ms, stats) = emit_exploits(
        &out.violations,
        &driver("task_startActivity"),
        &corpus::apps(),
        &s.index,
        &EmitConfig::default(),
    )
    .unwrap();
    assert_eq!(stats.manifests, ms.len());
    (s, ms)
}

#[test]
fn victim_package_is_illegal_and_legal_ones_hijack() {
    let (s, ms) = task_manifests();
    let mut illegal = 0;
    for m in &ms {
        let package = m.overlay.iter().find(|e| e.key.as_deref() == Some("package"));
        if package.is_some_and(|e| e.value == ModelValue::Str(corpus::VICTIM_PACKAGE.into())) {
            assert!(!m.legality);
            illegal += 1;
        }
        if m.legality {
            let out = replay(&s.program, &s.index, &m.replay_request(), &mut corpus::host()).unwrap();
            assert_eq!(out.trace, m.trace);
            assert!(victim_stack().holds_concrete(&s.program, &out));
        }
    }
    assert!(illegal > 0, "no manifest reused the victim package");
    assert!(ms.iter().any(|m| m.legality));
}

#[test]
fn launch_mode_lands_in_the_overlay() {
    let s = service("task_manager");
    let ex = crate::symbolic::explore(
        &s.program,
        &s.index,
        &driver("task_startActivity"),
        base(),
        &mut corpus::host(),
    )
    .unwrap();
    let (ms, _) = emit_exploits(&ex.reports, &driver("task_startActivity"), &corpus::apps(), &s.index, &EmitConfig::default())
        .unwrap();
    let modes: Vec<&ModelValue> = ms
        .iter()
        .flat_map(|m| m.overlay.iter())
        .filter(|e| e.key.as_deref() == Some("launch-mode"))
        .map(|e| &e.value)
        .collect();
    assert!(modes.contains(&&ModelValue::Int(3)), "{:?}", modes);
    for m in &ms {
        let out = replay(&s.program, &s.index, &m.replay_request(), &mut corpus::host()).unwrap();
        assert_eq!(out.trace, m.trace, "path {} model {}", m.path, m.model_index);
    }
}

#[test]
fn unconditional_path_has_empty_overlay() {
    let s = service("location_service");
    let d = driver("location_getAllProviders");
    let ex = crate::symbolic::explore(&s.program, &s.index, &d, base(), &mut corpus::host()).unwrap();
    let (ms, _) = emit_exploits(&ex.reports, &d, &corpus::apps(), &s.index, &EmitConfig::default()).unwrap();
    assert_eq!(ms.len(), 1);
    assert!(ms[0].overlay.is_empty() && ms[0].params.is_empty() && ms[0].unconditional && ms[0].legality);
}

#[test]
fn every_corpus_manifest_satisfies_and_replays() {
    for (name, _) in corpus::DRIVERS {
        let s = service(corpus::service_of_driver(name).unwrap());
        let d = driver(name);
        let ex = crate::symbolic::explore(&s.program, &s.index, &d, base(), &mut corpus::host()).unwrap();
        let (ms, _) = emit_exploits(&ex.reports, &d, &corpus::apps(), &s.index, &EmitConfig::default()).unwrap();
        for m in ms.iter().filter(|m| m.legality) {
            let out = replay(&s.program, &s.index, &m.replay_request(), &mut corpus::host()).unwrap();
            assert_eq!(out.trace, m.trace, "{} path {} model {}", name, m.path, m.model_index);
            assert_eq!(matches!(out.status, ReplayStatus::Trapped(_)), m.trapped, "{}", name);
        }
    }
}

#[test]
fn legality_table() {
    let apps = corpus::apps();
    assert!(check_entry("package", &ModelValue::Str(corpus::VICTIM_PACKAGE.into()), &apps).is_some());
    assert!(check_entry("package", &ModelValue::Str(corpus::SKELETON_PACKAGE.into()), &apps).is_none());
    assert!(check_entry("package", &ModelValue::Str("org.fresh".into()), &apps).is_none());
    assert!(check_entry("launch-mode", &ModelValue::Int(4), &apps).is_some());
    assert!(check_entry("launch-mode", &ModelValue::Int(2), &apps).is_none());
    assert!(check_entry("uid", &ModelValue::Int(2), &apps).is_some());
}

fn snapshots_for(program: &crate::isa::Program, configs: Vec<crate::concrete::SysConfig>) -> Vec<SnapshotIndex> {
    configs
        .into_iter()
        .map(|config| {
            let inputs = crate::concrete::InitInputs {
                apps: corpus::apps(),
                config,
            };
            SnapshotIndex::load(&corpus::snapshot_with(program, &inputs).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn perturbed_snapshots_agree() {
    for (svc, d) in [("location_service", "location_getProviders"), ("wifi_service", "wifi_setWifiEnabled")] {
        let program = corpus::program(svc);
        let snaps = snapshots_for(&program, corpus::perturbed_configs());
        let refs: Vec<&dyn SnapshotQuery> = snaps.iter().map(|s| s as &dyn SnapshotQuery).collect();
        let r = snapshot_consistency(&program, &refs, &driver(d), &base(), &mut corpus::host()).unwrap();
        assert!(r.equal, "{}: {:?}", d, r.diffs);
    }
}

#[test]
fn extra_skeleton_permission_diverges() {
    let program = corpus::program("location_service");
    let standard = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    let mut apps: Vec<_> = corpus::apps().apps().to_vec();
    let sk = apps.iter_mut().find(|a| a.skeleton).unwrap();
    sk.permissions.push(String::from("com.example.skeleton.permission.PLACEHOLDER_C"));
    let inputs = crate::concrete::InitInputs {
        apps: crate::concrete::AppRegistry::new(apps).unwrap(),
        config: corpus::config(),
    };
    let altered = SnapshotIndex::load(&corpus::snapshot_with(&program, &inputs).unwrap()).unwrap();
    let refs: [&dyn SnapshotQuery; 2] = [&standard, &altered];
    let r = snapshot_consistency(&program, &refs, &driver("location_getProviders"), &base(), &mut corpus::host())
        .unwrap();
    assert!(!r.equal);
    assert_eq!(r.diffs[0].snapshot, 1);
    let same: [&dyn SnapshotQuery; 2] = [&standard, &standard];
    let r = snapshot_consistency(&program, &same, &driver("location_getProviders"), &base(), &mut corpus::host())
        .unwrap();
    assert!(r.equal);
    let one: [&dyn SnapshotQuery; 1] = [&standard];
    assert!(matches!(
        snapshot_consistency(&program, &one, &driver("location_getProviders"), &base(), &mut corpus::host()),
        Err(AnalysisError::TooFewSnapshots(1))
    ));
}

#[test]
fn ucse_explodes_on_dispatch_where_seeded_does_not() {
    let s = service("shape_dispatch");
    let config = ExploreConfig {
        budget: Budget {
            max_states: 64,
            ..Budget::default()
        },
        ..base()
    };
    let c = compare_ucse(&s.program, &s.index, &driver("shape_describe"), &config, &mut corpus::host()).unwrap();
    assert!(c.ucse.virtual_forks >= 5);
    assert!(c.ucse.budget_exhausted);
    assert!(!c.seeded.budget_exhausted);
    assert!(c.seeded.virtual_forks <= 1);
    assert!(c.seeded.states <= c.ucse.states);
}

#[test]
fn trivial_program_matches_in_both_modes() {
    let src = "entry Init.main\n\
class Svc singleton\n  method one() interface returns=int\n    const 1\n    return\n\
class Init\n  method main() static locals=1\n    new Svc\n    invokeintrinsic sys.publish\n    return\n";
    let program = assemble(src).unwrap();
    let inputs = corpus::inputs();
    let doc = corpus::snapshot_with(&program, &inputs).unwrap();
    let index = SnapshotIndex::load(&doc).unwrap();
    let d = TestDriver::from_json(r#"{"service": "Svc", "entrypoint": "one", "params": []}"#).unwrap();
    let c = compare_ucse(&program, &index, &d, &base(), &mut corpus::host()).unwrap();
    assert_eq!(c.seeded.paths, c.ucse.paths);
    assert_eq!(c.ucse.mode, Mode::Ucse);
}

