use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;
use snapseed_core::corpus;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_snapseed");
const HOST_BIN: &str = env!("CARGO_BIN_EXE_snapseed-extern-host");

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn prog(service: &str) -> Vec<String> {
    let c = corpus_dir();
    vec![
        c.join("framework.gasm").display().to_string(),
        c.join(format!("{}.gasm", service)).display().to_string(),
    ]
}

fn driver(name: &str) -> String {
    corpus_dir().join("drivers").join(format!("{}.json", name)).display().to_string()
}

fn snapseed(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SNAPSEED_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Snapshot of `service` with the standard inputs, written under `dir`.
fn init(dir: &TempDir, service: &str) -> String {
    let out = dir.path().join(format!("{}.snap.json", service));
    let c = corpus_dir();
    let mut args = vec!["init".to_string()];
    args.extend(prog(service));
    for a in [
        "--apps",
        &c.join("apps.json").display().to_string(),
        "--config",
        &c.join("config.json").display().to_string(),
        "--out",
        &out.display().to_string(),
    ] {
        args.push(a.into());
    }
    let o = snapseed(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.display().to_string()
}

fn run_args(service: &str, snap: &str) -> Vec<String> {
    let mut a = vec!["--prog".to_string()];
    a.extend(prog(service));
    a.push("--snap".into());
    a.push(snap.into());
    a
}

fn run(verb: &str, service: &str, snap: &str, extra: &[&str]) -> Output {
    let mut args = vec![verb.to_string()];
    args.extend(run_args(service, snap));
    args.extend(extra.iter().map(|s| s.to_string()));
    snapseed(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn structured(o: &Output) -> Json {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{}: {}", e, String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn asm_syntax_error_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.gasm");
    std::fs::write(&bad, "class A\n  method m() locals=1\n    frobnicate 3\n").unwrap();
    let o = snapseed(&["asm", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.gasm"));
}

#[test]
fn asm_listing_reassembles_to_the_same_listing() {
    let dir = TempDir::new().unwrap();
    let listing = dir.path().join("listing.gasm");
    let mut args = vec!["asm".to_string()];
    args.extend(prog("task_manager"));
    args.extend(["--out".into(), listing.display().to_string()]);
    assert_eq!(code(&snapseed(&args.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    let o = snapseed(&["asm", listing.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), std::fs::read_to_string(&listing).unwrap());
}

#[test]
fn ispe_on_named_entrypoints_exits_1_with_inconsistent_verdict() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "location_service");
    let out = dir.path().join("verdict.json");
    let o = run(
        "ispe",
        "location_service",
        &snap,
        &[
            "--ep1",
            "getAllProviders",
            "--ep2",
            "getProviders",
            "--target",
            corpus::LOCATION_TARGET,
            "--format",
            "structured",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let v = structured(&o);
    assert_eq!(v["inconsistent"], Json::Bool(true));
    assert_eq!(v["entrypoints"][0]["paths"].as_array().unwrap().len(), 1);
    assert_eq!(v["entrypoints"][0]["paths"][0]["unconditional"], Json::Bool(true));
    assert_eq!(std::fs::read(&out).unwrap(), o.stdout);
}

#[test]
fn ispe_runs_the_same_in_parallel() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "telecom_service");
    let common = [
        "--ep1",
        &driver("telecom_placeCall"),
        "--ep2",
        &driver("telecom_placeEmergencyCall"),
        "--target",
        corpus::TELECOM_TARGET,
        "--format",
        "structured",
    ]
    .map(String::from);
    let mut serial: Vec<&str> = common.iter().map(String::as_str).collect();
    let a = run("ispe", "telecom_service", &snap, &serial);
    serial.extend(["--jobs", "2"]);
    let b = run("ispe", "telecom_service", &snap, &serial);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unreachable_target_is_an_error() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "telecom_service");
    let o = run(
        "ispe",
        "telecom_service",
        &snap,
        &[
            "--ep1",
            &driver("telecom_getCallState"),
            "--ep2",
            &driver("telecom_placeCall"),
            "--target",
            corpus::TELECOM_TARGET,
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn legal_manifests_replay_with_exit_0() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "task_manager");
    let mdir = dir.path().join("manifests");
    let apps = corpus_dir().join("apps.json");
    let o = run(
        "emit-exploits",
        "task_manager",
        &snap,
        &[
            "--driver",
            &driver("task_startActivity"),
            "--apps",
            apps.to_str().unwrap(),
            "--property",
            "ret == 2",
            "--manifest-dir",
            mdir.to_str().unwrap(),
            "--format",
            "structured",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = structured(&o);
    assert!(doc["stats"]["illegal"].as_u64().unwrap() > 0);
    let mut legal = 0;
    for entry in std::fs::read_dir(&mdir).unwrap() {
        let path = entry.unwrap().path();
        let m: Json = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        if m["legality"] != Json::Bool(true) {
            continue;
        }
        legal += 1;
        let r = snapseed(&["replay", "--manifest", path.to_str().unwrap(), "--format", "structured"]);
        assert_eq!(code(&r), 0, "{}", path.display());
        assert_eq!(structured(&r)["trace_match"], Json::Bool(true));
    }
    assert!(legal > 0);
}

#[test]
fn tampered_manifest_replay_exits_1() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "task_manager");
    let mdir = dir.path().join("m");
    let apps = corpus_dir().join("apps.json");
    let o = run(
        "emit-exploits",
        "task_manager",
        &snap,
        &[
            "--driver",
            &driver("task_startActivity"),
            "--apps",
            apps.to_str().unwrap(),
            "--models",
            "1",
            "--manifest-dir",
            mdir.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0);
    let path = std::fs::read_dir(&mdir).unwrap().next().unwrap().unwrap().path();
    let mut m: Json = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let trace = m["trace"].as_array_mut().unwrap();
    assert!(!trace.is_empty());
    let taken = trace[0]["taken"].as_bool().unwrap();
    trace[0]["taken"] = Json::Bool(!taken);
    std::fs::write(&path, m.to_string()).unwrap();
    let r = snapseed(&["replay", "--manifest", path.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
}

#[test]
fn prop_check_exit_codes_follow_violations() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "task_manager");
    let d = driver("task_startActivity");
    assert_eq!(code(&run("prop-check", "task_manager", &snap, &["--driver", &d, "--property", "ret == 2"])), 1);
    assert_eq!(code(&run("prop-check", "task_manager", &snap, &["--driver", &d, "--property", "false"])), 0);
    assert_eq!(code(&run("prop-check", "task_manager", &snap, &["--driver", &d, "--property", "ret ~ 2"])), 2);
}

#[test]
fn snap_diff_accepts_perturbed_snapshots_and_rejects_a_changed_skeleton() {
    let dir = TempDir::new().unwrap();
    let c = corpus_dir();
    let mut snaps = Vec::new();
    for (i, config) in corpus::perturbed_configs().iter().take(2).enumerate() {
        let cfg = dir.path().join(format!("config{}.json", i));
        std::fs::write(&cfg, serde_json::to_string(config).unwrap()).unwrap();
        let out = dir.path().join(format!("s{}.json", i));
        let mut args = vec!["init".to_string()];
        args.extend(prog("location_service"));
        args.extend(
            [
                "--apps",
                c.join("apps.json").to_str().unwrap(),
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]
            .map(String::from),
        );
        assert_eq!(code(&snapseed(&args.iter().map(String::as_str).collect::<Vec<_>>())), 0);
        snaps.push(out.display().to_string());
    }
    let d = driver("location_getProviders");
    let mut args = vec!["snap-diff".to_string(), "--prog".into()];
    args.extend(prog("location_service"));
    args.push("--snap".into());
    args.extend(snaps.iter().cloned());
    args.extend(["--driver".into(), d.clone(), "--jobs".into(), "2".into()]);
    assert_eq!(code(&snapseed(&args.iter().map(String::as_str).collect::<Vec<_>>())), 0);

    // A third skeleton permission is app data, so the path sets change.
    let mut apps: Json = serde_json::from_str(&std::fs::read_to_string(c.join("apps.json")).unwrap()).unwrap();
    let skeleton = apps
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|a| a["skeleton"] == Json::Bool(true))
        .unwrap();
    skeleton["permissions"].as_array_mut().unwrap().push("android.permission.CAMERA".into());
    let apps_path = dir.path().join("apps3.json");
    std::fs::write(&apps_path, apps.to_string()).unwrap();
    let odd = dir.path().join("odd.json");
    let mut init_args = vec!["init".to_string()];
    init_args.extend(prog("location_service"));
    init_args.extend(
        [
            "--apps",
            apps_path.to_str().unwrap(),
            "--config",
            c.join("config.json").to_str().unwrap(),
            "--out",
            odd.to_str().unwrap(),
        ]
        .map(String::from),
    );
    assert_eq!(code(&snapseed(&init_args.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    let o = snapseed(&[
        "snap-diff",
        "--prog",
        &prog("location_service")[0],
        &prog("location_service")[1],
        "--snap",
        &snaps[0],
        odd.to_str().unwrap(),
        "--driver",
        &d,
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn reports_are_byte_identical_across_runs_and_seed_env_overrides() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "package_service");
    let args = ["--driver", &driver("package_flagsUidFirst"), "--format", "structured"];
    let a = run("explore", "package_service", &snap, &args);
    let b = run("explore", "package_service", &snap, &args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let mut full = vec!["explore".to_string()];
    full.extend(run_args("package_service", &snap));
    full.extend(args.iter().map(|s| s.to_string()));
    let bad_seed = Command::new(BIN).args(&full).env("SNAPSEED_SEED", "x").output().unwrap();
    assert_eq!(code(&bad_seed), 2);
    let seeded = Command::new(BIN).args(&full).env("SNAPSEED_SEED", "7").output().unwrap();
    assert_eq!(code(&seeded), 0);
}

#[test]
fn dump_symbolic_inputs_prints_the_uid_derivation() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "package_service");
    let o = run(
        "explore",
        "package_service",
        &snap,
        &["--driver", &driver("package_flagsUidFirst"), "--dump-symbolic-inputs"],
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("sink "), "{}", text);
    assert!(text.contains("mod 100000"), "{}", text);
}

#[test]
fn compare_ucse_reports_a_ucse_blowup() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "shape_dispatch");
    let o = run(
        "compare-ucse",
        "shape_dispatch",
        &snap,
        &["--driver", &driver("shape_describe"), "--max-states", "64", "--format", "structured"],
    );
    assert_eq!(code(&o), 0);
    let c = structured(&o);
    assert_eq!(c["seeded"]["budget_exhausted"], Json::Bool(false));
    assert_eq!(c["ucse"]["budget_exhausted"], Json::Bool(true));
    assert!(c["ucse"]["virtual_forks"].as_u64().unwrap() >= 5);
}

#[test]
fn delegated_externs_go_to_the_host_process() {
    let dir = TempDir::new().unwrap();
    let snap = init(&dir, "wifi_service");
    let d = driver("wifi_setWifiEnabled");
    let host_cmd = format!("{} {}", HOST_BIN, fixture("extern_table.json").display());
    let host_traps = |o: &Output| {
        structured(o)["paths"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|p| p["status"]["trapped"].as_str().is_some_and(|t| t.contains("extern host")))
            .count()
    };
    let without = run("explore", "wifi_service", &snap, &["--driver", &d, "--format", "structured"]);
    let with = run(
        "explore",
        "wifi_service",
        &snap,
        &["--driver", &d, "--format", "structured", "--extern-host", &host_cmd],
    );
    assert_eq!(code(&without), 0);
    assert_eq!(code(&with), 0, "{}", String::from_utf8_lossy(&with.stderr));
    assert!(host_traps(&without) > 0);
    assert_eq!(host_traps(&with), 0);
}

#[test]
fn missing_input_file_exits_2() {
    let o = snapseed(&["explore", "--prog", "/nonexistent.gasm", "--snap", "/nonexistent.json", "--driver", "x"]);
    assert_eq!(code(&o), 2);
}
