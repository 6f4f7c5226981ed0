use snapseed_core::corpus;
use snapseed_core::snapshot::{SnapshotDoc, SnapshotIndex};
use snapseed_core::symbolic::{explore, Budget, ExploreConfig, Mode, TestDriver};

fn driver(name: &str) -> TestDriver {
    TestDriver::from_json(corpus::driver_json(name).unwrap()).unwrap()
}

#[test]
fn snapshot_survives_json_and_explores_identically() {
    for (svc, _) in corpus::SERVICES {
        let program = corpus::program(svc);
        let doc = corpus::snapshot(&program);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SnapshotDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc, "{}", svc);
        let a = SnapshotIndex::load(&doc).unwrap();
        let b = SnapshotIndex::load(&back).unwrap();
        for (name, _) in corpus::DRIVERS.iter().filter(|(n, _)| corpus::service_of_driver(n) == Some(svc)) {
            let d = driver(name);
            let x = explore(&program, &a, &d, ExploreConfig::default(), &mut corpus::host()).unwrap();
            let y = explore(&program, &b, &d, ExploreConfig::default(), &mut corpus::host()).unwrap();
            assert_eq!(x, y, "{}", name);
        }
    }
}

// A fork inside an instruction that had already materialized a lazy array
// used to replay that decision a second time and index past the array.
#[test]
fn forks_after_materializing_decisions_replay_cleanly() {
    let program = corpus::program("wifi_service");
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    let config = ExploreConfig {
        mode: Mode::Ucse,
        seed: 13095842498735253968,
        budget: Budget {
            max_states: 164,
            ..Budget::default()
        },
        check_invariants: true,
        ..ExploreConfig::default()
    };
    let ex = explore(&program, &index, &driver("wifi_setWifiEnabled"), config, &mut corpus::host()).unwrap();
    assert!(ex.stats.invariant_violations.is_empty());
    assert!(!ex.reports.is_empty());
}

// Arm order must not change what a complete exploration finds.
#[test]
fn shuffled_arm_order_reaches_the_same_paths() {
    for (name, mode) in [("task_startActivity", Mode::Ucse), ("location_getProviders", Mode::Seeded)] {
        let program = corpus::program(corpus::service_of_driver(name).unwrap());
        let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
        let d = driver(name);
        let traces = |seed| {
            let config = ExploreConfig {
                mode,
                seed,
                ..ExploreConfig::default()
            };
            let ex = explore(&program, &index, &d, config, &mut corpus::host()).unwrap();
            assert_eq!(ex.stats.budget_exhausted, 0, "{}", name);
            let mut t: Vec<String> = ex.reports.iter().map(|r| format!("{:?} {:?}", r.trace, r.status)).collect();
            t.sort();
            t
        };
        let base = traces(0);
        for seed in [1, 7, 0xdead_beef] {
            assert_eq!(traces(seed), base, "{} seed {}", name, seed);
        }
    }
}
