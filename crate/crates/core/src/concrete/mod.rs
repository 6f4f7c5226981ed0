//! Concrete interpretation: the initialization run, heap dumping and the
//! replay oracle.

mod dump;
mod interp;
mod registry;
mod replay;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::isa::{Literal, Program, Type};

pub use dump::{dump_snapshot, heap_from_snapshot, live_ids};
pub use interp::{extern_var_name, run_init, InitError, Vm, DEFAULT_STEP_LIMIT};
pub use registry::{AppRecord, AppRegistry, ConfigValue, InitInputs, RegistryError, SysConfig};
pub use replay::{param_field_var, replay, replay_watching, OverlayEntry, OverlayLocation, ReplayError, ReplayOutcome, ReplayRequest, ReplayStatus};

/// A concrete guest value. `Ref(0)` is null; strings are references to
/// interned [`HeapObj::Str`] entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i32),
    Bool(bool),
    Ref(u32),
}

impl Value {
    pub const NULL: Value = Value::Ref(0);

    pub fn default_for(t: &Type) -> Value {
        match t {
            Type::Bool => Value::Bool(false),
            Type::Int(_) => Value::Int(0),
            _ => Value::NULL,
        }
    }

    /// Integer view; booleans read as 0 or 1.
    pub fn as_int(&self) -> Option<i32> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Bool(b) => Some(i32::from(*b)),
            Value::Ref(_) => None,
        }
    }

    pub fn as_ref(&self) -> Option<u32> {
        match self {
            Value::Ref(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeapObj {
    Object { class: String, fields: Vec<Value> },
    Array { elem: Type, values: Vec<Value> },
    Str(String),
}

/// Concrete heap. Id 0 is never allocated and ids are never reused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapState {
    pub objects: BTreeMap<u32, HeapObj>,
    pub next_id: u32,
    /// Text of every live string to its unique id.
    pub interned: BTreeMap<String, u32>,
    /// Static values of initialized classes, in declaration order.
    pub statics: BTreeMap<String, Vec<Value>>,
    pub roots: BTreeMap<String, u32>,
}

impl Default for HeapState {
    fn default() -> Self {
        HeapState {
            objects: BTreeMap::new(),
            next_id: 1,
            interned: BTreeMap::new(),
            statics: BTreeMap::new(),
            roots: BTreeMap::new(),
        }
    }
}

impl HeapState {
    pub fn alloc(&mut self, obj: HeapObj) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.objects.insert(id, obj);
        id
    }

    pub fn intern(&mut self, text: &str) -> u32 {
        if let Some(id) = self.interned.get(text) {
            return *id;
        }
        let id = self.alloc(HeapObj::Str(text.into()));
        self.interned.insert(text.into(), id);
        id
    }

    pub fn string(&self, id: u32) -> Option<&str> {
        match self.objects.get(&id) {
            Some(HeapObj::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn class_of(&self, id: u32) -> Option<&str> {
        match self.objects.get(&id) {
            Some(HeapObj::Object { class, .. }) => Some(class),
            _ => None,
        }
    }

    /// Read a named field of an object.
    pub fn field(&self, program: &Program, id: u32, name: &str) -> Option<Value> {
        match self.objects.get(&id) {
            Some(HeapObj::Object { class, fields }) => {
                let i = program.field_index(class, name).ok()?;
                fields.get(i).copied()
            }
            _ => None,
        }
    }

    pub fn literal(&mut self, lit: &Literal) -> Value {
        match lit {
            Literal::Int(i) => Value::Int(*i),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Null => Value::NULL,
            Literal::Str(s) => Value::Ref(self.intern(s)),
        }
    }
}

/// One executed conditional branch.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct BranchEvent {
    pub method: String,
    pub pc: usize,
    pub taken: bool,
}

/// Guest-level failure. Terminates a concrete run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Trap {
    #[error("null dereference")]
    NullDeref,
    #[error("index {index} out of bounds for length {len}")]
    OutOfBounds { index: i32, len: usize },
    #[error("negative array size {0}")]
    NegativeSize(i32),
    #[error("division by zero")]
    DivByZero,
    #[error("uncaught throw of {0}")]
    Thrown(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("step limit exceeded")]
    StepLimit,
    #[error("call depth limit exceeded")]
    DepthLimit,
    #[error("`{0}` is only available during initialization")]
    InitOnly(&'static str),
    #[error("extern host: {0}")]
    Host(#[from] crate::host::HostError),
    #[error("no value for symbolic input `{0}`")]
    Unassigned(String),
}
