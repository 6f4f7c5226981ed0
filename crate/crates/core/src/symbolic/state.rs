//! Exploration state: frames, the symbolic heap with per-cell flags, the
//! conc2Sym table and the path condition.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{AccessRecord, InventoryEntry, MigNode, MigrationEdge, ParamBinding, VarOrigin};
use crate::concrete::BranchEvent;
use crate::isa::{MethodId, Type};
use crate::snapshot::SnapshotQuery;
use crate::solver::{Model, PathCondition, StrTerm, Term, VarId};
use crate::taint::TaintLabel;

/// Symbolic-world heap id. 0 is null; object `n` lives at `heap[n - 1]`.
pub type SymId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymVal {
    /// Integers and booleans (0 or 1).
    Int(Arc<Term>),
    Ref(SymId),
}

impl SymVal {
    pub const NULL: SymVal = SymVal::Ref(0);

    pub fn int(c: i32) -> SymVal {
        SymVal::Int(Term::constant(c))
    }

    pub fn default_for(t: &Type) -> SymVal {
        if t.is_primitive() {
            SymVal::int(0)
        } else {
            SymVal::NULL
        }
    }

    pub fn as_const(&self) -> Option<i32> {
        match self {
            SymVal::Int(t) => match **t {
                Term::Const(c) => Some(c),
                _ => None,
            },
            SymVal::Ref(_) => None,
        }
    }
}

/// Operand-stack or local value with its taint label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub val: SymVal,
    pub taint: Option<Arc<TaintLabel>>,
}

impl Slot {
    pub fn plain(val: SymVal) -> Slot {
        Slot { val, taint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellVal {
    /// Symbolic-world value (snapshotRef = false).
    Val(SymVal),
    /// Concrete-world id awaiting migration (snapshotRef = true). Never 0.
    Snap(u32),
    /// Unconstrained ucse input, materialized on first read.
    Lazy,
    /// Ucse reference whose null-ness variable exists but whose shape is
    /// still being decided. `len` is set for arrays.
    Pending { null: VarId, len: Option<VarId> },
}

/// Marks a reference cell reached from a symbolized object: its pointee is
/// symbolized on the next read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemiMark {
    /// Inventory entry receiving the pointee's variables.
    pub entry: usize,
    /// Manifest key inherited from the referring field.
    pub key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub val: CellVal,
    pub taint: Option<Arc<TaintLabel>>,
    pub semi: Option<SemiMark>,
}

impl Cell {
    pub fn val(v: SymVal) -> Cell {
        Cell {
            val: CellVal::Val(v),
            taint: None,
            semi: None,
        }
    }

    pub fn lazy() -> Cell {
        Cell {
            val: CellVal::Lazy,
            taint: None,
            semi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymObj {
    Object {
        class: String,
        fields: Vec<Cell>,
        /// Runtime class known exactly; ucse receivers of unknown subtype
        /// are not.
        exact: bool,
        /// symbolicHandled.
        handled: bool,
        origin: Option<u32>,
    },
    Array {
        elem: Type,
        elems: Vec<Cell>,
        handled: bool,
        origin: Option<u32>,
    },
    Str {
        val: StrTerm,
        origin: Option<u32>,
    },
    /// Ucse value of declared type `any`, refined by its first typed use.
    /// `null` is its null-ness variable.
    Untyped { null: VarId },
    /// Untyped value used as an integer.
    Boxed(Arc<Term>),
    /// Lazy value decided to be null after it was already shared.
    Null,
}

impl SymObj {
    pub fn origin(&self) -> Option<u32> {
        match self {
            SymObj::Object { origin, .. } | SymObj::Array { origin, .. } | SymObj::Str { origin, .. } => *origin,
            SymObj::Untyped { .. } | SymObj::Boxed(_) | SymObj::Null => None,
        }
    }

    pub fn cells(&self) -> &[Cell] {
        match self {
            SymObj::Object { fields, .. } => fields,
            SymObj::Array { elems, .. } => elems,
            _ => &[],
        }
    }
}

/// What the caller does with a frame's result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OnReturn {
    /// Bottom frame: the path finishes.
    Entry,
    /// Advance the caller past the call; push the result (or the default
    /// of the declared type) unless it is void.
    Push(Type),
    /// Static initializer: re-execute the caller's instruction.
    Retry,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub method: MethodId,
    pub pc: usize,
    pub locals: Vec<Slot>,
    pub stack: Vec<Slot>,
    pub on_return: OnReturn,
    /// Fork decisions to replay when the current instruction re-executes.
    pub pending: VecDeque<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymState {
    pub id: usize,
    pub frames: Vec<Frame>,
    pub heap: Vec<SymObj>,
    /// Literal pool: text to pooled string id.
    pub pool: BTreeMap<String, SymId>,
    pub conc2sym: BTreeMap<u32, SymId>,
    pub sym2conc: BTreeMap<SymId, u32>,
    /// Statics of classes initialized on this path, in declaration order.
    pub statics: BTreeMap<String, Vec<Cell>>,
    /// Holds the service root until the driver reads it.
    pub bootstrap: Cell,
    pub pc: PathCondition,
    /// Model of `pc`, when one is known.
    pub model: Option<Model>,
    pub origins: BTreeMap<VarId, VarOrigin>,
    pub params: Vec<ParamBinding>,
    pub trace: Vec<BranchEvent>,
    pub migrations: Vec<MigrationEdge>,
    pub inventory: Vec<InventoryEntry>,
    pub accesses: Vec<AccessRecord>,
    pub extern_calls: BTreeMap<String, u32>,
    /// Counter for internal variable names.
    pub fresh: u32,
    pub steps: u64,
    pub reached_target: bool,
    /// Largest dispatch fan-out seen at a virtual call.
    pub virtual_fanout: usize,
    /// Decisions taken so far in the current instruction.
    pub decisions: Vec<usize>,
    /// Value returned by the entrypoint once the path has finished.
    pub ret: Option<Slot>,
    pub done: bool,
}

impl SymState {
    pub fn new() -> SymState {
        SymState {
            id: 0,
            frames: Vec::new(),
            heap: Vec::new(),
            pool: BTreeMap::new(),
            conc2sym: BTreeMap::new(),
            sym2conc: BTreeMap::new(),
            statics: BTreeMap::new(),
            bootstrap: Cell::val(SymVal::NULL),
            pc: PathCondition::new(),
            model: Some(Model::new()),
            origins: BTreeMap::new(),
            params: Vec::new(),
            trace: Vec::new(),
            migrations: Vec::new(),
            inventory: Vec::new(),
            accesses: Vec::new(),
            extern_calls: BTreeMap::new(),
            fresh: 0,
            steps: 0,
            reached_target: false,
            virtual_fanout: 0,
            decisions: Vec::new(),
            ret: None,
            done: false,
        }
    }

    pub fn alloc(&mut self, obj: SymObj) -> SymId {
        self.heap.push(obj);
        self.heap.len() as SymId
    }

    pub fn obj(&self, id: SymId) -> Option<&SymObj> {
        if id == 0 {
            return None;
        }
        self.heap.get(id as usize - 1)
    }

    pub fn obj_mut(&mut self, id: SymId) -> Option<&mut SymObj> {
        if id == 0 {
            return None;
        }
        self.heap.get_mut(id as usize - 1)
    }

    pub fn frame(&self) -> &Frame {
        self.frames.last().expect("live state has a frame")
    }

    pub fn frame_mut(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("live state has a frame")
    }

    /// Pooled string with the given text, allocated on first use.
    pub fn pooled(&mut self, text: &str) -> SymId {
        if let Some(id) = self.pool.get(text) {
            return *id;
        }
        let id = self.alloc(SymObj::Str {
            val: StrTerm::Lit(text.into()),
            origin: None,
        });
        self.pool.insert(text.into(), id);
        id
    }

    /// String term of a string object.
    pub fn str_term(&self, id: SymId) -> Option<&StrTerm> {
        match self.obj(id)? {
            SymObj::Str { val, .. } => Some(val),
            _ => None,
        }
    }

    pub fn next_fresh(&mut self) -> u32 {
        self.fresh += 1;
        self.fresh - 1
    }

    /// Number of objects allocated by migration.
    pub fn migrated_count(&self) -> usize {
        self.heap.iter().filter(|o| o.origin().is_some()).count()
    }

    /// The structural invariants of one path: conc2Sym is a bijection that
    /// agrees with every object's origin, snapshotRef cells hold concrete
    /// ids that resolve, symbolic cells hold symbolic ids, and the migration
    /// tree names each concrete id once.
    pub fn check_invariants(&self, snapshot: &dyn SnapshotQuery) -> Result<(), String> {
        if self.conc2sym.len() != self.sym2conc.len() {
            return Err(format!(
                "conc2sym has {} entries but its inverse has {}",
                self.conc2sym.len(),
                self.sym2conc.len()
            ));
        }
        for (c, s) in &self.conc2sym {
            if self.sym2conc.get(s) != Some(c) {
                return Err(format!("conc {} maps to sym {} but not back", c, s));
            }
            match self.obj(*s) {
                Some(o) if o.origin() == Some(*c) => {}
                _ => return Err(format!("sym {} does not record origin {}", s, c)),
            }
        }
        for (i, o) in self.heap.iter().enumerate() {
            let id = i as SymId + 1;
            if let Some(c) = o.origin() {
                if self.conc2sym.get(&c) != Some(&id) {
                    return Err(format!("sym {} has origin {} missing from conc2sym", id, c));
                }
            }
        }
        let check_cell = |where_: &dyn Fn() -> String, c: &Cell| -> Result<(), String> {
            match &c.val {
                CellVal::Snap(0) => Err(format!("{} is snapshotRef with null", where_())),
                CellVal::Snap(r) => snapshot
                    .kind_of(*r)
                    .map(|_| ())
                    .map_err(|e| format!("{} holds bad concrete id {}: {}", where_(), r, e)),
                CellVal::Val(SymVal::Ref(r)) if *r as usize > self.heap.len() => {
                    Err(format!("{} holds unknown symbolic id {}", where_(), r))
                }
                _ => Ok(()),
            }
        };
        for (i, o) in self.heap.iter().enumerate() {
            for (j, c) in o.cells().iter().enumerate() {
                check_cell(&|| format!("sym {} slot {}", i + 1, j), c)?;
            }
        }
        for (class, cells) in &self.statics {
            for (j, c) in cells.iter().enumerate() {
                check_cell(&|| format!("static {}#{}", class, j), c)?;
            }
        }
        check_cell(&|| String::from("bootstrap field"), &self.bootstrap)?;
        for f in &self.frames {
            for s in f.locals.iter().chain(&f.stack) {
                if let SymVal::Ref(r) = s.val {
                    if r as usize > self.heap.len() {
                        return Err(format!("frame value holds unknown symbolic id {}", r));
                    }
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut objects = 0;
        for e in &self.migrations {
            if let MigNode::Object { conc, sym } = &e.child {
                objects += 1;
                if !seen.insert(*conc) {
                    return Err(format!("concrete id {} migrated twice", conc));
                }
                if self.conc2sym.get(conc) != Some(sym) {
                    return Err(format!("migration of {} disagrees with conc2sym", conc));
                }
            }
        }
        if objects != self.conc2sym.len() {
            return Err(format!(
                "{} migrations recorded for {} conc2sym entries",
                objects,
                self.conc2sym.len()
            ));
        }
        Ok(())
    }
}

impl Default for SymState {
    fn default() -> Self {
        Self::new()
    }
}
