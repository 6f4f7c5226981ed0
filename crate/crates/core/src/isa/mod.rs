//! The guest instruction set, its program model and static utilities.

mod asm;
mod callgraph;
mod render;
mod verify;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use asm::{assemble, parse_type, AsmError, AsmErrorKind};
pub use callgraph::{call_graph_reachable, CallGraph, Reachable, TargetReach};
#[allow(unused_imports)]
pub(crate) use callgraph::live_pcs;
pub use render::render;

/// Names of the collection classes every program gets for free.
pub const LIST_CLASS: &str = "List";
pub const MAP_CLASS: &str = "Map";
pub const SPARSE_CLASS: &str = "Sparse";

/// Declared type of a field, parameter, array element or return value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Type {
    Void,
    /// 32-bit integer, optionally restricted to an inclusive domain.
    Int(Option<(i32, i32)>),
    Bool,
    Str,
    Ref(String),
    Arr(alloc::boxed::Box<Type>),
    Any,
}

impl Type {
    pub fn is_primitive(&self) -> bool {
        matches!(self, Type::Int(_) | Type::Bool)
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, Type::Str | Type::Ref(_) | Type::Arr(_) | Type::Any)
    }

    /// Inclusive value domain for integer-like types.
    pub fn int_domain(&self) -> Option<(i32, i32)> {
        match self {
            Type::Int(Some(d)) => Some(*d),
            Type::Int(None) => Some((i32::MIN, i32::MAX)),
            Type::Bool => Some((0, 1)),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Int(None) => f.write_str("int"),
            Type::Int(Some((lo, hi))) => write!(f, "int[{}..{}]", lo, hi),
            Type::Bool => f.write_str("bool"),
            Type::Str => f.write_str("str"),
            Type::Ref(c) => write!(f, "ref<{}>", c),
            Type::Arr(t) => write!(f, "arr<{}>", t),
            Type::Any => f.write_str("any"),
        }
    }
}

/// Constant operand of `const` and static initializers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Int(i32),
    Bool(bool),
    Null,
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl ArithOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
            ArithOp::Mod => "mod",
            ArithOp::And => "and",
            ArithOp::Or => "or",
            ArithOp::Xor => "xor",
            ArithOp::Shl => "shl",
            ArithOp::Shr => "shr",
        }
    }

    /// Two's-complement 32-bit semantics shared by both interpreters and
    /// the constraint evaluator. Division by zero yields 0 and remainder by
    /// zero yields the dividend; callers that trap check the divisor first.
    pub fn apply(self, a: i32, b: i32) -> i32 {
        match self {
            ArithOp::Add => a.wrapping_add(b),
            ArithOp::Sub => a.wrapping_sub(b),
            ArithOp::Mul => a.wrapping_mul(b),
            ArithOp::Div => {
                if b == 0 {
                    0
                } else {
                    a.wrapping_div(b)
                }
            }
            ArithOp::Mod => {
                if b == 0 {
                    a
                } else {
                    a.wrapping_rem(b)
                }
            }
            ArithOp::And => a & b,
            ArithOp::Or => a | b,
            ArithOp::Xor => a ^ b,
            ArithOp::Shl => a.wrapping_shl((b & 31) as u32),
            ArithOp::Shr => a.wrapping_shr((b & 31) as u32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Ge,
    Gt,
    Le,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Le => CmpOp::Gt,
        }
    }

    /// Operator with operands swapped: `a op b` iff `b op.swap() a`.
    pub fn swap(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
        }
    }

    pub fn holds(self, a: i32, b: i32) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Ge => "ge",
            CmpOp::Gt => "gt",
            CmpOp::Le => "le",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
        }
    }
}

/// `Class.member` operand.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberRef {
    pub class: String,
    pub name: String,
}

impl MemberRef {
    pub fn new(class: &str, name: &str) -> Self {
        MemberRef {
            class: class.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for MemberRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.name)
    }
}

/// Host-implemented calls reachable through `invokeintrinsic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intrinsic {
    ListGet,
    ListSet,
    ListAdd,
    ListLen,
    MapGet,
    MapPut,
    MapContains,
    SparseGet,
    SparsePut,
    /// Initialization-phase queries against the app registry and the
    /// system configuration. They trap outside of `run_init`.
    AppCount,
    AppUid,
    AppPackage,
    AppManifest,
    AppPermCount,
    AppPerm,
    ConfigInt,
    ConfigCount,
    ConfigItem,
    /// Publish a singleton service object as a named snapshot root.
    Publish,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 19] = [
        Intrinsic::ListGet,
        Intrinsic::ListSet,
        Intrinsic::ListAdd,
        Intrinsic::ListLen,
        Intrinsic::MapGet,
        Intrinsic::MapPut,
        Intrinsic::MapContains,
        Intrinsic::SparseGet,
        Intrinsic::SparsePut,
        Intrinsic::AppCount,
        Intrinsic::AppUid,
        Intrinsic::AppPackage,
        Intrinsic::AppManifest,
        Intrinsic::AppPermCount,
        Intrinsic::AppPerm,
        Intrinsic::ConfigInt,
        Intrinsic::ConfigCount,
        Intrinsic::ConfigItem,
        Intrinsic::Publish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::ListGet => "list.get",
            Intrinsic::ListSet => "list.set",
            Intrinsic::ListAdd => "list.add",
            Intrinsic::ListLen => "list.len",
            Intrinsic::MapGet => "map.get",
            Intrinsic::MapPut => "map.put",
            Intrinsic::MapContains => "map.contains",
            Intrinsic::SparseGet => "sparse.get",
            Intrinsic::SparsePut => "sparse.put",
            Intrinsic::AppCount => "sys.app_count",
            Intrinsic::AppUid => "sys.app_uid",
            Intrinsic::AppPackage => "sys.app_package",
            Intrinsic::AppManifest => "sys.app_manifest",
            Intrinsic::AppPermCount => "sys.app_perm_count",
            Intrinsic::AppPerm => "sys.app_perm",
            Intrinsic::ConfigInt => "sys.config_int",
            Intrinsic::ConfigCount => "sys.config_count",
            Intrinsic::ConfigItem => "sys.config_item",
            Intrinsic::Publish => "sys.publish",
        }
    }

    pub fn from_name(name: &str) -> Option<Intrinsic> {
        Intrinsic::ALL.iter().copied().find(|i| i.name() == name)
    }

    /// (operands popped, values pushed)
    pub fn stack_effect(self) -> (usize, usize) {
        match self {
            Intrinsic::ListGet => (2, 1),
            Intrinsic::ListSet => (3, 0),
            Intrinsic::ListAdd => (2, 0),
            Intrinsic::ListLen => (1, 1),
            Intrinsic::MapGet => (2, 1),
            Intrinsic::MapPut => (3, 0),
            Intrinsic::MapContains => (2, 1),
            Intrinsic::SparseGet => (2, 1),
            Intrinsic::SparsePut => (3, 0),
            Intrinsic::AppCount => (0, 1),
            Intrinsic::AppUid => (1, 1),
            Intrinsic::AppPackage => (1, 1),
            Intrinsic::AppManifest => (2, 1),
            Intrinsic::AppPermCount => (1, 1),
            Intrinsic::AppPerm => (2, 1),
            Intrinsic::ConfigInt => (2, 1),
            Intrinsic::ConfigCount => (1, 1),
            Intrinsic::ConfigItem => (2, 1),
            Intrinsic::Publish => (1, 0),
        }
    }

    pub fn is_sys(self) -> bool {
        self.name().starts_with("sys.")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insn {
    Const(Literal),
    Load(u16),
    Store(u16),
    Dup,
    Pop,
    Arith(ArithOp),
    /// Compare the popped int (or bool) against zero.
    If(CmpOp, usize),
    /// Compare two popped ints.
    IfICmp(CmpOp, usize),
    /// `ifnull` when the flag is true, `ifnonnull` otherwise.
    IfNull(bool, usize),
    /// Reference identity: `if_acmpeq` when the flag is true.
    IfACmp(bool, usize),
    Goto(usize),
    New(String),
    GetField(MemberRef),
    PutField(MemberRef),
    GetStatic(MemberRef),
    PutStatic(MemberRef),
    NewArray(Type),
    AaLoad,
    AaStore,
    IaLoad,
    IaStore,
    ArrayLength,
    InvokeVirtual(MemberRef),
    InvokeStatic(MemberRef),
    InvokeSpecial(MemberRef),
    InvokeIntrinsic(Intrinsic),
    Return,
    SConcat,
    SEquals,
    Throw,
}

impl Insn {
    pub fn branch_target(&self) -> Option<usize> {
        match self {
            Insn::If(_, t) | Insn::IfICmp(_, t) | Insn::IfNull(_, t) | Insn::IfACmp(_, t) => {
                Some(*t)
            }
            Insn::Goto(t) => Some(*t),
            _ => None,
        }
    }

    pub fn is_conditional(&self) -> bool {
        matches!(
            self,
            Insn::If(..) | Insn::IfICmp(..) | Insn::IfNull(..) | Insn::IfACmp(..)
        )
    }

    /// Whether control can continue to the next instruction.
    pub fn falls_through(&self) -> bool {
        !matches!(self, Insn::Goto(_) | Insn::Return | Insn::Throw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub ty: Type,
    /// Constant initializer (statics only).
    pub init: Option<Literal>,
    /// Manifest key this field maps to when it becomes a symbolic input.
    pub manifest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub ret: Type,
    pub is_static: bool,
    pub is_virtual: bool,
    pub is_interface: bool,
    /// Total local slots, including `this` and parameters.
    pub locals: u16,
    /// Names of extra (non-parameter) local slots.
    pub local_names: Vec<(String, u16)>,
    pub labels: BTreeMap<String, usize>,
    pub body: Vec<Insn>,
}

impl MethodDef {
    /// Slots taken by the receiver and parameters.
    pub fn param_slots(&self) -> u16 {
        self.params.len() as u16 + u16::from(!self.is_static)
    }

    /// Operand-stack values consumed by a call.
    pub fn arg_count(&self) -> usize {
        self.param_slots() as usize
    }

    pub fn returns_value(&self) -> bool {
        self.ret != Type::Void
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub super_class: Option<String>,
    pub singleton: bool,
    pub handler: bool,
    pub statemachine: bool,
    pub builtin: bool,
    pub statics: Vec<FieldDef>,
    pub fields: Vec<FieldDef>,
    pub methods: Vec<MethodDef>,
}

impl ClassDef {
    pub fn method(&self, name: &str) -> Option<&MethodDef> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn static_index(&self, name: &str) -> Option<usize> {
        self.statics.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExternPolicy {
    ModelUid,
    ModelPackage,
    SymbolicReturn,
    Ignore,
    Delegate,
}

impl ExternPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ExternPolicy::ModelUid => "model-uid",
            ExternPolicy::ModelPackage => "model-package",
            ExternPolicy::SymbolicReturn => "symbolic-return",
            ExternPolicy::Ignore => "ignore",
            ExternPolicy::Delegate => "delegate",
        }
    }

    pub fn from_name(s: &str) -> Option<ExternPolicy> {
        [
            ExternPolicy::ModelUid,
            ExternPolicy::ModelPackage,
            ExternPolicy::SymbolicReturn,
            ExternPolicy::Ignore,
            ExternPolicy::Delegate,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternDecl {
    /// Qualified `Class.method` name.
    pub name: String,
    pub params: Vec<Type>,
    pub ret: Type,
    pub policy: ExternPolicy,
}

/// Laid-out instance fields of a class (inherited fields first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub fields: Vec<(String, Type, Option<String>)>,
}

impl Layout {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|(n, _, _)| n == name)
    }
}

/// Identifies a method by (class index, method index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodId {
    pub class: usize,
    pub method: usize,
}

/// A loaded, verified guest program. Immutable after [`assemble`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDef>,
    pub entry_method: String,
    pub interface_methods: BTreeSet<String>,
    pub extern_decls: Vec<ExternDecl>,
    class_index: BTreeMap<String, usize>,
    layouts: Vec<Layout>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown class `{0}`")]
    NoSuchClass(String),
    #[error("no method `{method}` in `{class}` or its superclasses")]
    NoSuchMethod { class: String, method: String },
    #[error("no field `{field}` in `{class}` or its superclasses")]
    NoSuchField { class: String, field: String },
    #[error("bad statement locator `{0}`")]
    BadLocator(String),
}

impl Program {
    fn new(
        classes: Vec<ClassDef>,
        entry_method: String,
        extern_decls: Vec<ExternDecl>,
    ) -> Result<Program, String> {
        let mut class_index = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            if class_index.insert(c.name.clone(), i).is_some() {
                return Err(alloc::format!("duplicate class `{}`", c.name));
            }
        }
        let mut layouts: Vec<Option<Layout>> = alloc::vec![None; classes.len()];
        for i in 0..classes.len() {
            compute_layout(&classes, &class_index, i, &mut layouts, 0)?;
        }
        let layouts = layouts.into_iter().map(|l| l.unwrap()).collect();
        let mut interface_methods = BTreeSet::new();
        for c in &classes {
            for m in &c.methods {
                if m.is_interface {
                    interface_methods.insert(alloc::format!("{}.{}", c.name, m.name));
                }
            }
        }
        Ok(Program {
            classes,
            entry_method,
            interface_methods,
            extern_decls,
            class_index,
            layouts,
        })
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_index.get(name).copied()
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.class_id(name).map(|i| &self.classes[i])
    }

    pub fn layout(&self, class: &str) -> Option<&Layout> {
        self.class_id(class).map(|i| &self.layouts[i])
    }

    pub fn layout_by_id(&self, id: usize) -> &Layout {
        &self.layouts[id]
    }

    pub fn method(&self, id: MethodId) -> &MethodDef {
        &self.classes[id.class].methods[id.method]
    }

    pub fn method_name(&self, id: MethodId) -> String {
        alloc::format!(
            "{}.{}",
            self.classes[id.class].name,
            self.classes[id.class].methods[id.method].name
        )
    }

    /// Superclass chain starting at `class` itself.
    pub fn ancestors<'a>(&'a self, class: &str) -> impl Iterator<Item = &'a ClassDef> + 'a {
        let mut cur = self.class(class);
        core::iter::from_fn(move || {
            let c = cur?;
            cur = c.super_class.as_deref().and_then(|s| self.class(s));
            Some(c)
        })
    }

    pub fn is_subclass(&self, class: &str, ancestor: &str) -> bool {
        self.ancestors(class).any(|c| c.name == ancestor)
    }

    /// All classes whose superclass chain contains `class` (itself included),
    /// in declaration order.
    pub fn subclasses_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a ClassDef> + 'a {
        self.classes
            .iter()
            .filter(move |c| self.is_subclass(&c.name, class))
    }

    /// Virtual dispatch: walk `class` and its superclasses and return the
    /// first definition of `method`.
    pub fn resolve_dispatch(&self, class: &str, method: &str) -> Result<MethodId, LookupError> {
        if self.class(class).is_none() {
            return Err(LookupError::NoSuchClass(class.into()));
        }
        for c in self.ancestors(class) {
            if let Some(mi) = c.methods.iter().position(|m| m.name == method) {
                return Ok(MethodId {
                    class: self.class_index[&c.name],
                    method: mi,
                });
            }
        }
        Err(LookupError::NoSuchMethod {
            class: class.into(),
            method: method.into(),
        })
    }

    pub fn resolve_qualified(&self, qualified: &str) -> Result<MethodId, LookupError> {
        let (c, m) = split_qualified(qualified)
            .ok_or_else(|| LookupError::BadLocator(qualified.into()))?;
        self.resolve_dispatch(c, m)
    }

    /// Class that declares static field `name` as seen from `class`.
    pub fn resolve_static(&self, class: &str, name: &str) -> Result<(usize, usize), LookupError> {
        for c in self.ancestors(class) {
            if let Some(i) = c.static_index(name) {
                return Ok((self.class_index[&c.name], i));
            }
        }
        Err(LookupError::NoSuchField {
            class: class.into(),
            field: name.into(),
        })
    }

    pub fn field_index(&self, class: &str, name: &str) -> Result<usize, LookupError> {
        self.layout(class)
            .ok_or_else(|| LookupError::NoSuchClass(class.into()))?
            .index_of(name)
            .ok_or_else(|| LookupError::NoSuchField {
                class: class.into(),
                field: name.into(),
            })
    }

    pub fn extern_decl(&self, qualified: &str) -> Option<&ExternDecl> {
        self.extern_decls.iter().find(|e| e.name == qualified)
    }

    pub fn is_handler_class(&self, class: &str) -> bool {
        self.ancestors(class).any(|c| c.handler)
    }

    pub fn is_statemachine_class(&self, class: &str) -> bool {
        self.ancestors(class).any(|c| c.statemachine)
    }

    /// Every string literal that appears in a `const` or static initializer.
    pub fn string_literals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.classes {
            for f in &c.statics {
                if let Some(Literal::Str(s)) = &f.init {
                    out.insert(s.clone());
                }
            }
            for m in &c.methods {
                for i in &m.body {
                    if let Insn::Const(Literal::Str(s)) = i {
                        out.insert(s.clone());
                    }
                }
            }
        }
        out
    }

    /// Parse a statement locator: `Class.method:label` or `Class.method@index`.
    pub fn locate(&self, locator: &str) -> Result<Location, LookupError> {
        let bad = || LookupError::BadLocator(locator.into());
        let (qual, pc) = if let Some((q, label)) = locator.split_once(':') {
            let id = self.resolve_qualified(q)?;
            let m = self.method(id);
            if self.classes[id.class].name != q.split_once('.').ok_or_else(bad)?.0 {
                return Err(bad());
            }
            (id, *m.labels.get(label).ok_or_else(bad)?)
        } else if let Some((q, idx)) = locator.split_once('@') {
            let id = self.resolve_qualified(q)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            (id, idx)
        } else {
            return Err(bad());
        };
        if pc >= self.method(qual).body.len() {
            return Err(bad());
        }
        Ok(Location {
            method: qual,
            pc,
        })
    }
}

/// A single instruction inside a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub method: MethodId,
    pub pc: usize,
}

pub fn split_qualified(q: &str) -> Option<(&str, &str)> {
    let (c, m) = q.rsplit_once('.')?;
    if c.is_empty() || m.is_empty() {
        None
    } else {
        Some((c, m))
    }
}

fn compute_layout(
    classes: &[ClassDef],
    index: &BTreeMap<String, usize>,
    i: usize,
    out: &mut Vec<Option<Layout>>,
    depth: usize,
) -> Result<(), String> {
    if out[i].is_some() {
        return Ok(());
    }
    if depth > classes.len() {
        return Err(alloc::format!("inheritance cycle through `{}`", classes[i].name));
    }
    let mut fields = Vec::new();
    if let Some(s) = &classes[i].super_class {
        let si = *index
            .get(s)
            .ok_or_else(|| alloc::format!("unknown superclass `{}`", s))?;
        compute_layout(classes, index, si, out, depth + 1)?;
        fields = out[si].as_ref().unwrap().fields.clone();
    }
    for f in &classes[i].fields {
        if fields.iter().any(|(n, _, _)| *n == f.name) {
            return Err(alloc::format!(
                "field `{}` declared twice in the layout of `{}`",
                f.name, classes[i].name
            ));
        }
        fields.push((f.name.clone(), f.ty.clone(), f.manifest.clone()));
    }
    out[i] = Some(Layout { fields });
    Ok(())
}

/// Built-in collection classes appended to every program.
pub(crate) fn builtin_classes() -> Vec<ClassDef> {
    let field = |name: &str, ty: Type| FieldDef {
        name: name.into(),
        ty,
        init: None,
        manifest: None,
    };
    let class = |name: &str, fields: Vec<FieldDef>| ClassDef {
        name: name.into(),
        super_class: None,
        singleton: false,
        handler: false,
        statemachine: false,
        builtin: true,
        statics: Vec::new(),
        fields,
        methods: Vec::new(),
    };
    let any_arr = || Type::Arr(alloc::boxed::Box::new(Type::Any));
    alloc::vec![
        class(LIST_CLASS, alloc::vec![field("data", any_arr())]),
        class(
            MAP_CLASS,
            alloc::vec![field("keys", any_arr()), field("vals", any_arr())]
        ),
        class(
            SPARSE_CLASS,
            alloc::vec![
                field("keys", Type::Arr(alloc::boxed::Box::new(Type::Int(None)))),
                field("vals", any_arr())
            ]
        ),
    ]
}

#[cfg(test)]
mod tests;
