use std::collections::BTreeMap;
use std::io::{pipe, BufReader, PipeReader, PipeWriter};
use std::thread;

use serde_json::json;
use snapseed::extern_host::{serve_table, ProcessHost, StreamHost};
use snapseed::snapshot_proto::{serve, RemoteSnapshot};
use snapseed_core::corpus;
use snapseed_core::host::{ExternHost, HostError, HostValue};
use snapseed_core::snapshot::{SnapshotError, SnapshotIndex, SnapshotQuery};
use snapseed_core::symbolic::{explore, ExploreConfig, TestDriver};

/// Client ends of a server thread's stdin and stdout.
fn channel<F>(server: F) -> (BufReader<PipeReader>, PipeWriter, thread::JoinHandle<()>)
where
    F: FnOnce(BufReader<PipeReader>, PipeWriter) + Send + 'static,
{
    let (req_r, req_w) = pipe().unwrap();
    let (resp_r, resp_w) = pipe().unwrap();
    let h = thread::spawn(move || server(BufReader::new(req_r), resp_w));
    (BufReader::new(resp_r), req_w, h)
}

#[test]
fn table_host_round_trips_scalars_and_errors() {
    let table: BTreeMap<String, serde_json::Value> = [
        ("a".to_string(), json!(15000)),
        ("b".to_string(), json!("text")),
        ("c".to_string(), json!(true)),
        ("d".to_string(), json!(null)),
        ("e".to_string(), json!([1])),
    ]
    .into();
    let (r, w, h) = channel(move |i, o| serve_table(&table, i, o).unwrap());
    let mut host = StreamHost::new(r, w);
    assert_eq!(host.call("a", &[HostValue::Str("k".into()), HostValue::Int(1)]), Ok(HostValue::Int(15000)));
    assert_eq!(host.call("b", &[]), Ok(HostValue::Str("text".into())));
    assert_eq!(host.call("c", &[]), Ok(HostValue::Bool(true)));
    assert_eq!(host.call("d", &[]), Ok(HostValue::Null));
    assert!(matches!(host.call("e", &[]), Err(HostError::TypeMismatch { .. })));
    assert_eq!(host.call("zz", &[]), Err(HostError::UnknownFunction("zz".into())));
    // The stream stays usable after errors.
    assert_eq!(host.call("a", &[]), Ok(HostValue::Int(15000)));
    drop(host);
    h.join().unwrap();
}

#[test]
fn closed_host_is_a_transport_error() {
    let (r, w, h) = channel(|_, _| {});
    h.join().unwrap();
    let mut host = StreamHost::new(r, w);
    assert!(matches!(host.call("a", &[]), Err(HostError::Transport(_))));
}

#[test]
fn reference_host_binary_answers_from_its_table() {
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/extern_table.json");
    let mut host = ProcessHost::spawn(&format!("{} {}", env!("CARGO_BIN_EXE_snapseed-extern-host"), table)).unwrap();
    let args = [HostValue::Str("wifi.supplicant_scan_interval".into()), HostValue::Int(1)];
    assert_eq!(host.call("SystemProperties.native_get_long", &args), Ok(HostValue::Int(15000)));
    assert!(matches!(host.call("nope", &[]), Err(HostError::UnknownFunction(_))));
}

fn served(index: SnapshotIndex) -> RemoteSnapshot<BufReader<PipeReader>, PipeWriter> {
    let (r, w, _h) = channel(move |i, o| serve(&index, i, o).unwrap());
    RemoteSnapshot::connect(r, w).unwrap()
}

#[test]
fn remote_snapshot_answers_like_the_index() {
    let program = corpus::program("task_manager");
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    let remote = served(index.clone());
    assert_eq!(remote.header(), index.header());
    for (&id, _) in index.entries() {
        assert_eq!(remote.kind_of(id), index.kind_of(id));
        assert_eq!(remote.get_object(id), index.get_object(id));
        assert_eq!(remote.get_array(id), index.get_array(id));
        assert_eq!(remote.get_string(id), index.get_string(id));
    }
    for c in index.classes() {
        assert_eq!(remote.class_statics(&c.name), index.class_statics(&c.name));
    }
    for name in index.roots().keys() {
        assert_eq!(remote.find_root(name), index.find_root(name));
    }
    assert_eq!(remote.get_object(999_999), Err(SnapshotError::UnknownId(999_999)));
    assert_eq!(remote.find_root("Nope"), index.find_root("Nope"));
    assert_eq!(remote.class_statics("Nope"), index.class_statics("Nope"));
}

#[test]
fn exploration_over_the_protocol_matches_in_process() {
    let program = corpus::program("location_service");
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    let driver = TestDriver::from_json(corpus::driver_json("location_getProviders").unwrap()).unwrap();
    let local = explore(&program, &index, &driver, ExploreConfig::default(), &mut corpus::host()).unwrap();
    let remote = served(index);
    let far = explore(&program, &remote, &driver, ExploreConfig::default(), &mut corpus::host()).unwrap();
    assert_eq!(local, far);
}

#[test]
fn malformed_snapshot_requests_get_error_replies() {
    use std::io::{BufRead, Write};
    let program = corpus::program("telecom_service");
    let index = SnapshotIndex::load(&corpus::snapshot(&program)).unwrap();
    let (mut r, mut w, _h) = channel(move |i, o| serve(&index, i, o).unwrap());
    for req in ["not json", r#"{"op":"get_object"}"#, r#"{"op":"launch"}"#] {
        writeln!(w, "{}", req).unwrap();
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["ok"], json!(false));
        assert_eq!(v["error"]["kind"], json!("bad-request"));
    }
}
