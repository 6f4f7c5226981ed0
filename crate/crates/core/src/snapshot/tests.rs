use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};
use std::collections::hash_map::DefaultHasher;

use proptest::prelude::*;

use super::*;

fn doc() -> SnapshotDoc {
    let mut svc_fields = BTreeMap::new();
    svc_fields.insert("users".into(), SnapValue::Ref(2));
    svc_fields.insert("name".into(), SnapValue::Ref(4));
    svc_fields.insert("count".into(), SnapValue::Int(2));
    let mut statics = BTreeMap::new();
    statics.insert("instance".into(), SnapValue::Ref(1));
    SnapshotDoc {
        header: Header {
            version: SNAPSHOT_VERSION,
            skeleton_uid: 10054,
            skeleton_package: "com.example.skeleton".into(),
        },
        classes: vec![
            ClassRecord {
                name: "Idle".into(),
                super_class: None,
                initialized: false,
                statics: BTreeMap::new(),
            },
            ClassRecord {
                name: "Svc".into(),
                super_class: None,
                initialized: true,
                statics,
            },
            ClassRecord {
                name: "User".into(),
                super_class: None,
                initialized: true,
                statics: BTreeMap::new(),
            },
        ],
        objects: vec![
            ObjectRecord {
                id: 1,
                class: "Svc".into(),
                fields: svc_fields,
            },
            ObjectRecord {
                id: 3,
                class: "User".into(),
                fields: BTreeMap::new(),
            },
        ],
        arrays: vec![ArrayRecord {
            id: 2,
            elem: "ref<User>".into(),
            values: vec![SnapValue::Ref(3), SnapValue::Ref(0)],
        }],
        strings: vec![StringRecord {
            id: 4,
            text: "com.example.skeleton".into(),
        }],
        roots: [(String::from("Svc"), 1)].into_iter().collect(),
    }
}

#[test]
fn load_counts_objects() {
    let d = doc();
    let ix = SnapshotIndex::load(&d).unwrap();
    assert_eq!(ix.object_count(), d.objects.len());
}

#[test]
fn dangling_reference_is_rejected() {
    let mut d = doc();
    d.objects[1].fields.insert("next".into(), SnapValue::Ref(999));
    assert!(matches!(
        SnapshotIndex::load(&d),
        Err(SnapshotError::Dangling { id: 999, .. })
    ));
}

#[test]
fn duplicate_id_is_rejected() {
    let mut d = doc();
    d.strings[0].id = 3;
    assert_eq!(SnapshotIndex::load(&d), Err(SnapshotError::DuplicateId(3)));
}

#[test]
fn load_is_idempotent() {
    let d = doc();
    assert_eq!(SnapshotIndex::load(&d).unwrap(), SnapshotIndex::load(&d).unwrap());
}

#[test]
fn queries() {
    let ix = SnapshotIndex::load(&doc()).unwrap();
    assert_eq!(ix.get_string(4).unwrap(), "com.example.skeleton");
    assert_eq!(ix.get_array(2).unwrap().values.len(), 2);
    assert_eq!(ix.get_object(1).unwrap().class, "Svc");
    assert_eq!(ix.class_statics("Idle"), Ok(None));
    assert_eq!(
        ix.class_statics("Svc").unwrap().unwrap()["instance"],
        SnapValue::Ref(1)
    );
    assert_eq!(ix.find_root("Svc"), Ok(1));
    assert_eq!(ix.find_root("Svc"), ix.find_root("Svc"));
    assert!(matches!(ix.find_root("Nope"), Err(SnapshotError::UnknownService(_))));
    assert!(matches!(ix.get_object(77), Err(SnapshotError::UnknownId(77))));
    assert!(matches!(ix.get_object(2), Err(SnapshotError::WrongKind { .. })));
    assert!(matches!(ix.class_statics("Zed"), Err(SnapshotError::UnknownClass(_))));
}

#[test]
fn root_closure_resolves() {
    let ix = SnapshotIndex::load(&doc()).unwrap();
    let r = ix.reachable_from(ix.find_root("Svc").unwrap()).unwrap();
    assert_eq!(r.into_iter().collect::<Vec<_>>(), [1, 2, 3, 4]);
}

#[test]
fn json_round_trip() {
    let d = doc();
    let text = serde_json::to_string(&d).unwrap();
    let back: SnapshotDoc = serde_json::from_str(&text).unwrap();
    assert_eq!(back, d);
}

fn fingerprint(ix: &SnapshotIndex) -> u64 {
    let mut h = DefaultHasher::new();
    ix.hash(&mut h);
    h.finish()
}

proptest! {
    #[test]
    fn queries_are_pure(ops in proptest::collection::vec((0u8..6, 0u32..8), 0..40)) {
        let ix = SnapshotIndex::load(&doc()).unwrap();
        let before = fingerprint(&ix);
        for (op, id) in ops {
            let _ = match op {
                0 => ix.get_object(id).map(|_| ()),
                1 => ix.get_array(id).map(|_| ()),
                2 => ix.get_string(id).map(|_| ()),
                3 => ix.class_statics(["Svc", "Idle", "User", "X"][id as usize % 4]).map(|_| ()),
                4 => ix.find_root(["Svc", "Other"][id as usize % 2]).map(|_| ()),
                _ => ix.kind_of(id).map(|_| ()),
            };
        }
        prop_assert_eq!(before, fingerprint(&ix));
    }
}
