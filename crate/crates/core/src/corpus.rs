//! The in-repo fixture corpus: guest programs, the app registry and the
//! system configuration used by tests, the CLI and the acceptance suite.
//!
//! Every service program is assembled together with the shared framework
//! source, which provides caller identity externs, package settings and the
//! permission checker.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::concrete::{dump_snapshot, run_init, AppRegistry, HeapState, InitError, InitInputs, SysConfig};
use crate::host::{HostValue, NoHost, TableHost};
use crate::isa::{assemble, Program};
use crate::snapshot::SnapshotDoc;

pub const FRAMEWORK: &str = include_str!("../corpus/framework.gasm");

/// (name, source) of every service program, without the framework.
pub const SERVICES: [(&str, &str); 6] = [
    ("location_service", include_str!("../corpus/location_service.gasm")),
    ("task_manager", include_str!("../corpus/task_manager.gasm")),
    ("wifi_service", include_str!("../corpus/wifi_service.gasm")),
    ("telecom_service", include_str!("../corpus/telecom_service.gasm")),
    ("shape_dispatch", include_str!("../corpus/shape_dispatch.gasm")),
    ("package_service", include_str!("../corpus/package_service.gasm")),
];

pub const APPS_JSON: &str = include_str!("../corpus/apps.json");
pub const CONFIG_JSON: &str = include_str!("../corpus/config.json");

/// (name, JSON text) of every test driver. Names are `<service>_<method>`.
pub const DRIVERS: [(&str, &str); 13] = [
    ("location_getAllProviders", include_str!("../corpus/drivers/location_getAllProviders.json")),
    ("location_getProviders", include_str!("../corpus/drivers/location_getProviders.json")),
    ("location_getProviders_null", include_str!("../corpus/drivers/location_getProviders_null.json")),
    ("task_startActivity", include_str!("../corpus/drivers/task_startActivity.json")),
    ("wifi_setWifiEnabled", include_str!("../corpus/drivers/wifi_setWifiEnabled.json")),
    ("wifi_getDeviceCount", include_str!("../corpus/drivers/wifi_getDeviceCount.json")),
    ("telecom_getCallState", include_str!("../corpus/drivers/telecom_getCallState.json")),
    ("telecom_placeCall", include_str!("../corpus/drivers/telecom_placeCall.json")),
    ("telecom_placeEmergencyCall", include_str!("../corpus/drivers/telecom_placeEmergencyCall.json")),
    ("shape_describe", include_str!("../corpus/drivers/shape_describe.json")),
    ("package_countUsers", include_str!("../corpus/drivers/package_countUsers.json")),
    ("package_flagsUidFirst", include_str!("../corpus/drivers/package_flagsUidFirst.json")),
    ("package_flagsNameFirst", include_str!("../corpus/drivers/package_flagsNameFirst.json")),
];

/// Sensitive statements of the permission-checked services.
pub const LOCATION_TARGET: &str = "LocationService.listProviders:sensitive";
pub const TELECOM_TARGET: &str = "TelecomService.dial:sensitive";

pub const SKELETON_UID: i32 = 10054;
pub const SKELETON_PACKAGE: &str = "com.example.skeleton";
pub const VICTIM_PACKAGE: &str = "com.example.calendar";
pub const VICTIM_AFFINITY: &str = "android.task.calendar";
/// Task id the victim's task receives at launch.
pub const VICTIM_TASK_ID: i32 = 2;
pub const FINE_LOCATION: &str = "android.permission.ACCESS_FINE_LOCATION";

/// Framework source followed by the named service's source.
pub fn source(service: &str) -> Option<String> {
    let (_, text) = SERVICES.iter().find(|(n, _)| *n == service)?;
    let mut s = String::from(FRAMEWORK);
    s.push('\n');
    s.push_str(text);
    Some(s)
}

/// Assembled service program. Panics if the corpus does not assemble,
/// which the corpus tests rule out.
pub fn program(service: &str) -> Program {
    let src = source(service).unwrap_or_else(|| panic!("no corpus service `{}`", service));
    assemble(&src).unwrap_or_else(|e| panic!("corpus `{}`: {}", service, e))
}

pub fn apps() -> AppRegistry {
    serde_json::from_str(APPS_JSON).expect("corpus apps.json is valid")
}

pub fn config() -> SysConfig {
    serde_json::from_str(CONFIG_JSON).expect("corpus config.json is valid")
}

pub fn inputs() -> InitInputs {
    InitInputs {
        apps: apps(),
        config: config(),
    }
}

pub fn driver_json(name: &str) -> Option<&'static str> {
    DRIVERS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Service program a driver belongs to, from its name prefix.
pub fn service_of_driver(name: &str) -> Option<&'static str> {
    let prefix = name.split('_').next()?;
    SERVICES
        .iter()
        .map(|(n, _)| *n)
        .find(|n| n.split('_').next() == Some(prefix))
}

/// Extern host answering the corpus's delegated calls.
pub fn host() -> TableHost {
    let mut t = BTreeMap::new();
    t.insert("SystemProperties.native_get_long".into(), HostValue::Int(15_000));
    TableHost::new(t)
}

pub fn init_heap(program: &Program, inputs: &InitInputs) -> Result<HeapState, InitError> {
    run_init(program, inputs, &mut NoHost)
}

/// Run initialization with the given inputs and dump the heap.
pub fn snapshot_with(program: &Program, inputs: &InitInputs) -> Result<SnapshotDoc, InitError> {
    let heap = init_heap(program, inputs)?;
    Ok(dump_snapshot(&heap, program, &inputs.apps))
}

/// Standard snapshot of a service program.
pub fn snapshot(program: &Program) -> SnapshotDoc {
    snapshot_with(program, &inputs()).expect("corpus initialization succeeds")
}

/// Variants of the standard configuration that differ only in data no
/// app owns: provider names and device lists.
pub fn perturbed_configs() -> Vec<SysConfig> {
    use crate::concrete::ConfigValue;
    let lists: [(&[&str], &[&str]); 5] = [
        (&["gps", "network", "passive"], &["wlan0", "p2p0"]),
        (&["fused", "gps"], &["wlan0"]),
        (&["network", "gps", "passive", "fused"], &["wlan1", "p2p0", "rmnet0"]),
        (&["passive"], &["wlan0", "p2p1"]),
        (&["gps", "gps-backup", "network", "passive", "fused", "beacon"], &[]),
    ];
    lists
        .iter()
        .map(|(providers, devices)| {
            let mut c = config();
            let list = |xs: &[&str]| ConfigValue::List(xs.iter().map(|s| String::from(*s)).collect());
            c.insert("providers".into(), list(providers));
            c.insert("devices".into(), list(devices));
            c
        })
        .collect()
}
