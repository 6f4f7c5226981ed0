use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::registry::AppRegistry;
use super::{HeapObj, HeapState, Value};
use crate::isa::{parse_type, Program};
use crate::snapshot::{
    ArrayRecord, ClassRecord, Header, ObjectRecord, SnapValue, SnapshotDoc, SnapshotError,
    SnapshotIndex, StringRecord, SNAPSHOT_VERSION,
};

impl From<Value> for SnapValue {
    fn from(v: Value) -> SnapValue {
        match v {
            Value::Int(i) => SnapValue::Int(i),
            Value::Bool(b) => SnapValue::Bool(b),
            Value::Ref(r) => SnapValue::Ref(r),
        }
    }
}

impl From<SnapValue> for Value {
    fn from(v: SnapValue) -> Value {
        match v {
            SnapValue::Int(i) => Value::Int(i),
            SnapValue::Bool(b) => Value::Bool(b),
            SnapValue::Ref(r) => Value::Ref(r),
        }
    }
}

fn children(obj: &HeapObj) -> impl Iterator<Item = u32> + '_ {
    let vals: &[Value] = match obj {
        HeapObj::Object { fields, .. } => fields,
        HeapObj::Array { values, .. } => values,
        HeapObj::Str(_) => &[],
    };
    vals.iter().filter_map(|v| v.as_ref()).filter(|r| *r != 0)
}

/// Live heap ids in visit order: breadth-first from the roots (by name),
/// then from class statics (classes by name, statics in declaration order).
pub fn live_ids(state: &HeapState) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let starts = state
        .roots
        .values()
        .copied()
        .chain(state.statics.values().flatten().filter_map(|v| v.as_ref()));
    for s in starts {
        if s == 0 || !seen.insert(s) {
            continue;
        }
        let mut q = VecDeque::from([s]);
        while let Some(id) = q.pop_front() {
            order.push(id);
            if let Some(obj) = state.objects.get(&id) {
                for c in children(obj) {
                    if seen.insert(c) {
                        q.push_back(c);
                    }
                }
            }
        }
    }
    order
}

/// Serialize the live part of `state`, renumbering ids densely in visit
/// order so equal heaps give equal documents.
pub fn dump_snapshot(state: &HeapState, program: &Program, apps: &AppRegistry) -> SnapshotDoc {
    let order = live_ids(state);
    let renum: BTreeMap<u32, u32> = order.iter().enumerate().map(|(i, id)| (*id, i as u32 + 1)).collect();
    let map = |v: &Value| -> SnapValue {
        match v {
            Value::Ref(r) if *r != 0 => SnapValue::Ref(renum[r]),
            other => (*other).into(),
        }
    };
    let mut classes: Vec<ClassRecord> = program
        .classes
        .iter()
        .map(|c| {
            let vals = state.statics.get(&c.name);
            ClassRecord {
                name: c.name.clone(),
                super_class: c.super_class.clone(),
                initialized: vals.is_some(),
                statics: vals
                    .map(|vs| c.statics.iter().zip(vs).map(|(f, v)| (f.name.clone(), map(v))).collect())
                    .unwrap_or_default(),
            }
        })
        .collect();
    classes.sort_by(|a, b| a.name.cmp(&b.name));
    let mut doc = SnapshotDoc {
        header: Header {
            version: SNAPSHOT_VERSION,
            skeleton_uid: apps.skeleton().uid,
            skeleton_package: apps.skeleton().package.clone(),
        },
        classes,
        objects: Vec::new(),
        arrays: Vec::new(),
        strings: Vec::new(),
        roots: state.roots.iter().map(|(k, v)| (k.clone(), renum[v])).collect(),
    };
    for old in &order {
        let id = renum[old];
        match &state.objects[old] {
            HeapObj::Object { class, fields } => {
                let layout = program.layout(class).expect("object of a declared class");
                doc.objects.push(ObjectRecord {
                    id,
                    class: class.clone(),
                    fields: layout.fields.iter().zip(fields).map(|((n, _, _), v)| (n.clone(), map(v))).collect(),
                });
            }
            HeapObj::Array { elem, values } => doc.arrays.push(ArrayRecord {
                id,
                elem: elem.to_string(),
                values: values.iter().map(map).collect(),
            }),
            HeapObj::Str(s) => doc.strings.push(StringRecord { id, text: s.clone() }),
        }
    }
    doc
}

/// Rebuild a concrete heap from a loaded snapshot. Ids are kept as stored.
pub fn heap_from_snapshot(program: &Program, index: &SnapshotIndex) -> Result<HeapState, SnapshotError> {
    let mut heap = HeapState::default();
    let mut max_id = 0;
    for (id, entry) in index.entries() {
        max_id = max_id.max(*id);
        let obj = match entry {
            crate::snapshot::Entry::Object(o) => {
                let layout = program
                    .layout(&o.class)
                    .ok_or_else(|| SnapshotError::UnknownClass(o.class.clone()))?;
                for name in o.fields.keys() {
                    if layout.index_of(name).is_none() {
                        return Err(SnapshotError::Schema(format!("`{}` has no field `{}`", o.class, name)));
                    }
                }
                let fields = layout
                    .fields
                    .iter()
                    .map(|(n, t, _)| o.fields.get(n).map(|v| (*v).into()).unwrap_or(Value::default_for(t)))
                    .collect();
                HeapObj::Object {
                    class: o.class.clone(),
                    fields,
                }
            }
            crate::snapshot::Entry::Array(a) => HeapObj::Array {
                elem: parse_type(&a.elem).ok_or_else(|| SnapshotError::Schema(format!("bad type `{}`", a.elem)))?,
                values: a.values.iter().map(|v| (*v).into()).collect(),
            },
            crate::snapshot::Entry::Str(s) => {
                heap.interned.entry(s.clone()).or_insert(*id);
                HeapObj::Str(s.clone())
            }
        };
        heap.objects.insert(*id, obj);
    }
    heap.next_id = max_id + 1;
    for c in index.classes() {
        if !c.initialized {
            continue;
        }
        let def = program
            .class(&c.name)
            .ok_or_else(|| SnapshotError::UnknownClass(c.name.clone()))?;
        let values = def
            .statics
            .iter()
            .map(|f| c.statics.get(&f.name).map(|v| (*v).into()).unwrap_or(Value::default_for(&f.ty)))
            .collect();
        heap.statics.insert(c.name.clone(), values);
    }
    heap.roots = index.roots().clone();
    Ok(heap)
}
