//! Heap snapshot document and the read-only query index over it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

pub const SNAPSHOT_VERSION: u32 = 1;

/// A stored value. `Ref(0)` is null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapValue {
    Int(i32),
    Bool(bool),
    Ref(u32),
}

impl SnapValue {
    pub fn as_ref(&self) -> Option<u32> {
        match self {
            SnapValue::Ref(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Header {
    pub version: u32,
    pub skeleton_uid: i32,
    pub skeleton_package: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ClassRecord {
    pub name: String,
    #[serde(rename = "super")]
    pub super_class: Option<String>,
    pub initialized: bool,
    pub statics: BTreeMap<String, SnapValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub class: String,
    pub fields: BTreeMap<String, SnapValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ArrayRecord {
    pub id: u32,
    /// Element type in assembly syntax, e.g. `int` or `ref<Task>`.
    pub elem: String,
    pub values: Vec<SnapValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct StringRecord {
    pub id: u32,
    pub text: String,
}

/// Serialized heap. Sections are sorted by id (classes by name).
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SnapshotDoc {
    pub header: Header,
    pub classes: Vec<ClassRecord>,
    pub objects: Vec<ObjectRecord>,
    pub arrays: Vec<ArrayRecord>,
    pub strings: Vec<StringRecord>,
    pub roots: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("id {0} is used more than once")]
    DuplicateId(u32),
    #[error("reference to absent id {id} from {from}")]
    Dangling { id: u32, from: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown id {0}")]
    UnknownId(u32),
    #[error("id {id} is not a {expected}")]
    WrongKind { id: u32, expected: &'static str },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("snapshot transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Entry {
    Object(ObjectRecord),
    Array(ArrayRecord),
    Str(String),
}

/// Read side of the execution-context service. Implemented in process by
/// [`SnapshotIndex`] and remotely by line-protocol clients.
pub trait SnapshotQuery {
    fn header(&self) -> Header;
    fn get_object(&self, id: u32) -> Result<ObjectRecord, SnapshotError>;
    fn get_array(&self, id: u32) -> Result<ArrayRecord, SnapshotError>;
    fn get_string(&self, id: u32) -> Result<String, SnapshotError>;
    /// `Ok(None)` when the class is known but was never initialized.
    fn class_statics(&self, name: &str) -> Result<Option<BTreeMap<String, SnapValue>>, SnapshotError>;
    fn find_root(&self, service: &str) -> Result<u32, SnapshotError>;
    /// Kind of entry stored under `id`.
    fn kind_of(&self, id: u32) -> Result<EntryKind, SnapshotError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Object,
    Array,
    Str,
}

/// Immutable, reference-closed index over a snapshot document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SnapshotIndex {
    header: Header,
    entries: BTreeMap<u32, Entry>,
    classes: BTreeMap<String, ClassRecord>,
    roots: BTreeMap<String, u32>,
}

fn check_ref(
    v: &SnapValue,
    ids: &BTreeSet<u32>,
    from: impl FnOnce() -> String,
) -> Result<(), SnapshotError> {
    if let SnapValue::Ref(r) = v {
        if *r != 0 && !ids.contains(r) {
            return Err(SnapshotError::Dangling { id: *r, from: from() });
        }
    }
    Ok(())
}

impl SnapshotIndex {
    pub fn load(doc: &SnapshotDoc) -> Result<SnapshotIndex, SnapshotError> {
        if doc.header.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Schema(alloc::format!(
                "unsupported version {}",
                doc.header.version
            )));
        }
        let mut ids = BTreeSet::new();
        let all_ids = doc
            .objects
            .iter()
            .map(|o| o.id)
            .chain(doc.arrays.iter().map(|a| a.id))
            .chain(doc.strings.iter().map(|s| s.id));
        for id in all_ids {
            if id == 0 {
                return Err(SnapshotError::Schema("id 0 is reserved for null".into()));
            }
            if !ids.insert(id) {
                return Err(SnapshotError::DuplicateId(id));
            }
        }
        let mut classes = BTreeMap::new();
        for c in &doc.classes {
            for (f, v) in &c.statics {
                check_ref(v, &ids, || alloc::format!("static {}.{}", c.name, f))?;
            }
            if !c.initialized && !c.statics.is_empty() {
                return Err(SnapshotError::Schema(alloc::format!(
                    "uninitialized class `{}` carries static values",
                    c.name
                )));
            }
            if classes.insert(c.name.clone(), c.clone()).is_some() {
                return Err(SnapshotError::Schema(alloc::format!("class `{}` listed twice", c.name)));
            }
        }
        let mut entries = BTreeMap::new();
        for o in &doc.objects {
            if !classes.contains_key(&o.class) {
                return Err(SnapshotError::Schema(alloc::format!(
                    "object {} has unlisted class `{}`",
                    o.id, o.class
                )));
            }
            for (f, v) in &o.fields {
                check_ref(v, &ids, || alloc::format!("object {} field {}", o.id, f))?;
            }
            entries.insert(o.id, Entry::Object(o.clone()));
        }
        for a in &doc.arrays {
            if crate::isa::parse_type(&a.elem).is_none() {
                return Err(SnapshotError::Schema(alloc::format!(
                    "array {} has bad element type `{}`",
                    a.id, a.elem
                )));
            }
            for (i, v) in a.values.iter().enumerate() {
                check_ref(v, &ids, || alloc::format!("array {} element {}", a.id, i))?;
            }
            entries.insert(a.id, Entry::Array(a.clone()));
        }
        for s in &doc.strings {
            entries.insert(s.id, Entry::Str(s.text.clone()));
        }
        for (name, id) in &doc.roots {
            check_ref(&SnapValue::Ref(*id), &ids, || alloc::format!("root {}", name))?;
            match entries.get(id) {
                Some(Entry::Object(_)) => {}
                _ => {
                    return Err(SnapshotError::Schema(alloc::format!(
                        "root `{}` is not an object",
                        name
                    )))
                }
            }
        }
        Ok(SnapshotIndex {
            header: doc.header.clone(),
            entries,
            classes,
            roots: doc.roots.clone(),
        })
    }

    pub fn object_count(&self) -> usize {
        self.entries.values().filter(|e| matches!(e, Entry::Object(_))).count()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&u32, &Entry)> {
        self.entries.iter()
    }

    pub fn roots(&self) -> &BTreeMap<String, u32> {
        &self.roots
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassRecord> {
        self.classes.values()
    }

    /// Ids reachable from `root` through stored references.
    pub fn reachable_from(&self, root: u32) -> Result<BTreeSet<u32>, SnapshotError> {
        let mut seen = BTreeSet::new();
        let mut work = alloc::vec![root];
        while let Some(id) = work.pop() {
            if id == 0 || !seen.insert(id) {
                continue;
            }
            match self.entries.get(&id).ok_or(SnapshotError::UnknownId(id))? {
                Entry::Object(o) => work.extend(o.fields.values().filter_map(SnapValue::as_ref)),
                Entry::Array(a) => work.extend(a.values.iter().filter_map(SnapValue::as_ref)),
                Entry::Str(_) => {}
            }
        }
        Ok(seen)
    }
}

impl SnapshotQuery for SnapshotIndex {
    fn header(&self) -> Header {
        self.header.clone()
    }

    fn get_object(&self, id: u32) -> Result<ObjectRecord, SnapshotError> {
        match self.entries.get(&id) {
            Some(Entry::Object(o)) => Ok(o.clone()),
            Some(_) => Err(SnapshotError::WrongKind { id, expected: "object" }),
            None => Err(SnapshotError::UnknownId(id)),
        }
    }

    fn get_array(&self, id: u32) -> Result<ArrayRecord, SnapshotError> {
        match self.entries.get(&id) {
            Some(Entry::Array(a)) => Ok(a.clone()),
            Some(_) => Err(SnapshotError::WrongKind { id, expected: "array" }),
            None => Err(SnapshotError::UnknownId(id)),
        }
    }

    fn get_string(&self, id: u32) -> Result<String, SnapshotError> {
        match self.entries.get(&id) {
            Some(Entry::Str(s)) => Ok(s.clone()),
            Some(_) => Err(SnapshotError::WrongKind { id, expected: "string" }),
            None => Err(SnapshotError::UnknownId(id)),
        }
    }

    fn class_statics(&self, name: &str) -> Result<Option<BTreeMap<String, SnapValue>>, SnapshotError> {
        let c = self
            .classes
            .get(name)
            .ok_or_else(|| SnapshotError::UnknownClass(name.into()))?;
        Ok(if c.initialized { Some(c.statics.clone()) } else { None })
    }

    fn find_root(&self, service: &str) -> Result<u32, SnapshotError> {
        self.roots
            .get(service)
            .copied()
            .ok_or_else(|| SnapshotError::UnknownService(service.into()))
    }

    fn kind_of(&self, id: u32) -> Result<EntryKind, SnapshotError> {
        match self.entries.get(&id) {
            Some(Entry::Object(_)) => Ok(EntryKind::Object),
            Some(Entry::Array(_)) => Ok(EntryKind::Array),
            Some(Entry::Str(_)) => Ok(EntryKind::Str),
            None => Err(SnapshotError::UnknownId(id)),
        }
    }
}

#[cfg(test)]
mod tests;
