use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::registry::{ConfigValue, InitInputs, RegistryError};
use super::{BranchEvent, HeapObj, HeapState, Trap, Value};
use crate::host::{ExternHost, HostError, HostValue};
use crate::isa::{ExternDecl, ExternPolicy, Insn, Intrinsic, Location, MemberRef, MethodId, Program, Type};
use crate::solver::ModelValue;

pub const DEFAULT_STEP_LIMIT: u64 = 20_000_000;
const MAX_DEPTH: usize = 256;

/// Source of extern results and intrinsic data.
pub(crate) enum Mode<'a> {
    Init(&'a InitInputs),
    Replay {
        uid: i32,
        package: String,
        model: &'a BTreeMap<String, ModelValue>,
    },
}

/// Concrete interpreter over a [`HeapState`].
pub struct Vm<'a> {
    pub(crate) program: &'a Program,
    pub heap: HeapState,
    pub(crate) mode: Mode<'a>,
    host: &'a mut dyn ExternHost,
    pub trace: Vec<BranchEvent>,
    /// `Class.method@pc` frames, innermost first, filled while a trap unwinds.
    pub unwind: Vec<String>,
    extern_calls: BTreeMap<String, u32>,
    steps: u64,
    step_limit: u64,
    depth: usize,
    /// Instruction whose execution sets `watch_hit`.
    pub watch: Option<Location>,
    pub watch_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InitError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("entry method `{0}` not found or not static")]
    NoEntry(String),
    #[error("guest trap during initialization: {trap} (at {})", stack.join(" <- "))]
    Trap {
        trap: Trap,
        stack: Vec<String>,
        trace: Vec<BranchEvent>,
    },
}

/// Run the program's entry method to completion and return the heap.
pub fn run_init(
    program: &Program,
    inputs: &InitInputs,
    host: &mut dyn ExternHost,
) -> Result<HeapState, InitError> {
    let entry = program
        .resolve_qualified(&program.entry_method)
        .map_err(|_| InitError::NoEntry(program.entry_method.clone()))?;
    let def = program.method(entry);
    if !def.is_static || !def.params.is_empty() {
        return Err(InitError::NoEntry(program.entry_method.clone()));
    }
    let mut vm = Vm::new(program, HeapState::default(), Mode::Init(inputs), host);
    let class = program.classes[entry.class].name.clone();
    let r = vm.ensure_init(&class).and_then(|_| vm.invoke(entry, Vec::new()));
    match r {
        Ok(_) => Ok(vm.heap),
        Err(trap) => Err(InitError::Trap {
            trap,
            stack: vm.unwind,
            trace: vm.trace,
        }),
    }
}

fn host_arg(heap: &HeapState, v: Value) -> HostValue {
    match v {
        Value::Int(i) => HostValue::Int(i),
        Value::Bool(b) => HostValue::Bool(b),
        Value::Ref(r) => match heap.string(r) {
            Some(s) => HostValue::Str(s.to_string()),
            None => HostValue::Null,
        },
    }
}

impl<'a> Vm<'a> {
    pub(crate) fn new(
        program: &'a Program,
        heap: HeapState,
        mode: Mode<'a>,
        host: &'a mut dyn ExternHost,
    ) -> Vm<'a> {
        Vm {
            program,
            heap,
            mode,
            host,
            trace: Vec::new(),
            unwind: Vec::new(),
            extern_calls: BTreeMap::new(),
            steps: 0,
            step_limit: DEFAULT_STEP_LIMIT,
            depth: 0,
            watch: None,
            watch_hit: false,
        }
    }

    /// Initialize `class` and its superclasses if needed. A class counts as
    /// initialized from the moment its statics exist, before `clinit` runs.
    pub fn ensure_init(&mut self, class: &str) -> Result<(), Trap> {
        if self.heap.statics.contains_key(class) {
            return Ok(());
        }
        let program = self.program;
        let def = program
            .class(class)
            .ok_or_else(|| Trap::Type(format!("unknown class `{}`", class)))?;
        if let Some(s) = &def.super_class {
            self.ensure_init(s)?;
        }
        let mut values = Vec::with_capacity(def.statics.len());
        for f in &def.statics {
            values.push(match &f.init {
                Some(lit) => self.heap.literal(lit),
                None => Value::default_for(&f.ty),
            });
        }
        self.heap.statics.insert(class.into(), values);
        if let Some(mi) = def.methods.iter().position(|m| m.name == "clinit" && m.is_static) {
            let id = MethodId {
                class: program.class_id(class).unwrap(),
                method: mi,
            };
            self.invoke(id, Vec::new())?;
        }
        Ok(())
    }

    fn obj_ref(v: Value) -> Result<u32, Trap> {
        match v {
            Value::Ref(0) => Err(Trap::NullDeref),
            Value::Ref(r) => Ok(r),
            other => Err(Trap::Type(format!("expected a reference, got {:?}", other))),
        }
    }

    fn int(v: Value) -> Result<i32, Trap> {
        v.as_int()
            .ok_or_else(|| Trap::Type(format!("expected an int, got {:?}", v)))
    }

    fn array_mut(&mut self, r: u32) -> Result<&mut Vec<Value>, Trap> {
        match self.heap.objects.get_mut(&r) {
            Some(HeapObj::Array { values, .. }) => Ok(values),
            _ => Err(Trap::Type(format!("{} is not an array", r))),
        }
    }

    fn array(&self, r: u32) -> Result<&Vec<Value>, Trap> {
        match self.heap.objects.get(&r) {
            Some(HeapObj::Array { values, .. }) => Ok(values),
            _ => Err(Trap::Type(format!("{} is not an array", r))),
        }
    }

    fn elem(&self, arr: Value, idx: i32) -> Result<Value, Trap> {
        let values = self.array(Self::obj_ref(arr)?)?;
        usize::try_from(idx)
            .ok()
            .and_then(|i| values.get(i).copied())
            .ok_or(Trap::OutOfBounds {
                index: idx,
                len: values.len(),
            })
    }

    fn set_elem(&mut self, arr: Value, idx: i32, v: Value) -> Result<(), Trap> {
        let values = self.array_mut(Self::obj_ref(arr)?)?;
        let len = values.len();
        let slot = usize::try_from(idx)
            .ok()
            .and_then(|i| values.get_mut(i))
            .ok_or(Trap::OutOfBounds { index: idx, len })?;
        *slot = v;
        Ok(())
    }

    fn field_slot(&mut self, obj: Value, f: &MemberRef) -> Result<&mut Value, Trap> {
        let r = Self::obj_ref(obj)?;
        let i = self
            .program
            .field_index(&f.class, &f.name)
            .map_err(|e| Trap::Type(e.to_string()))?;
        match self.heap.objects.get_mut(&r) {
            Some(HeapObj::Object { fields, .. }) if i < fields.len() => Ok(&mut fields[i]),
            _ => Err(Trap::Type(format!("{} has no field {}", r, f))),
        }
    }

    fn named_field(&self, obj: Value, name: &str) -> Result<Value, Trap> {
        let r = Self::obj_ref(obj)?;
        let cls = self
            .heap
            .class_of(r)
            .ok_or_else(|| Trap::Type(format!("{} is not an object", r)))?;
        self.heap
            .field(self.program, r, name)
            .ok_or_else(|| Trap::Type(format!("`{}` has no field `{}`", cls, name)))
    }

    fn set_named_field(&mut self, obj: u32, name: &str, v: Value) -> Result<(), Trap> {
        let program = self.program;
        match self.heap.objects.get_mut(&obj) {
            Some(HeapObj::Object { class, fields }) => {
                let i = program
                    .field_index(class, name)
                    .map_err(|e| Trap::Type(e.to_string()))?;
                fields[i] = v;
                Ok(())
            }
            _ => Err(Trap::Type(format!("{} is not an object", obj))),
        }
    }

    fn string_of(&self, v: Value) -> Result<&str, Trap> {
        let r = Self::obj_ref(v)?;
        self.heap
            .string(r)
            .ok_or_else(|| Trap::Type(format!("{} is not a string", r)))
    }

    /// Invoke a method with its receiver (if any) and arguments.
    pub fn invoke(&mut self, id: MethodId, args: Vec<Value>) -> Result<Option<Value>, Trap> {
        if self.depth >= MAX_DEPTH {
            return Err(Trap::DepthLimit);
        }
        self.depth += 1;
        let r = self.run_frame(id, args);
        self.depth -= 1;
        r
    }

    fn run_frame(&mut self, id: MethodId, args: Vec<Value>) -> Result<Option<Value>, Trap> {
        let program = self.program;
        let m = program.method(id);
        let mut locals = args;
        locals.resize(m.locals as usize, Value::Int(0));
        let mut stack: Vec<Value> = Vec::new();
        let mut pc = 0usize;
        loop {
            self.steps += 1;
            if self.steps > self.step_limit {
                return Err(Trap::StepLimit);
            }
            if self.watch == Some(Location { method: id, pc }) {
                self.watch_hit = true;
            }
            match self.step(id, &m.body[pc], pc, &mut locals, &mut stack) {
                Ok(Flow::Next) => pc += 1,
                Ok(Flow::Jump(t)) => pc = t,
                Ok(Flow::Return(v)) => return Ok(v),
                Err(t) => {
                    self.unwind.push(format!("{}@{}", program.method_name(id), pc));
                    return Err(t);
                }
            }
        }
    }

    fn branch(&mut self, id: MethodId, pc: usize, taken: bool, target: usize) -> Flow {
        self.trace.push(BranchEvent {
            method: self.program.method_name(id),
            pc,
            taken,
        });
        if taken {
            Flow::Jump(target)
        } else {
            Flow::Next
        }
    }

    fn step(
        &mut self,
        id: MethodId,
        insn: &Insn,
        pc: usize,
        locals: &mut [Value],
        stack: &mut Vec<Value>,
    ) -> Result<Flow, Trap> {
        let program = self.program;
        match insn {
            Insn::Const(lit) => stack.push(self.heap.literal(lit)),
            Insn::Load(s) => stack.push(locals[*s as usize]),
            Insn::Store(s) => locals[*s as usize] = pop(stack)?,
            Insn::Dup => {
                let v = pop(stack)?;
                stack.push(v);
                stack.push(v);
            }
            Insn::Pop => {
                pop(stack)?;
            }
            Insn::Arith(op) => {
                let b = Self::int(pop(stack)?)?;
                let a = Self::int(pop(stack)?)?;
                if matches!(op, crate::isa::ArithOp::Div | crate::isa::ArithOp::Mod) && b == 0 {
                    return Err(Trap::DivByZero);
                }
                stack.push(Value::Int(op.apply(a, b)));
            }
            Insn::If(c, t) => {
                let a = Self::int(pop(stack)?)?;
                return Ok(self.branch(id, pc, c.holds(a, 0), *t));
            }
            Insn::IfICmp(c, t) => {
                let b = Self::int(pop(stack)?)?;
                let a = Self::int(pop(stack)?)?;
                return Ok(self.branch(id, pc, c.holds(a, b), *t));
            }
            Insn::IfNull(is_null, t) => {
                let v = pop(stack)?;
                let r = v.as_ref().ok_or_else(|| Trap::Type("ifnull on a primitive".into()))?;
                return Ok(self.branch(id, pc, (r == 0) == *is_null, *t));
            }
            Insn::IfACmp(eq, t) => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                return Ok(self.branch(id, pc, (a == b) == *eq, *t));
            }
            Insn::Goto(t) => return Ok(Flow::Jump(*t)),
            Insn::New(c) => {
                self.ensure_init(c)?;
                let layout = program.layout(c).unwrap();
                let fields = layout.fields.iter().map(|(_, t, _)| Value::default_for(t)).collect();
                let r = self.heap.alloc(HeapObj::Object {
                    class: c.clone(),
                    fields,
                });
                stack.push(Value::Ref(r));
            }
            Insn::GetField(f) => {
                let o = pop(stack)?;
                let v = *self.field_slot(o, f)?;
                stack.push(v);
            }
            Insn::PutField(f) => {
                let v = pop(stack)?;
                let o = pop(stack)?;
                *self.field_slot(o, f)? = v;
            }
            Insn::GetStatic(f) => {
                let (ci, si) = program
                    .resolve_static(&f.class, &f.name)
                    .map_err(|e| Trap::Type(e.to_string()))?;
                let owner = &program.classes[ci].name;
                self.ensure_init(owner)?;
                stack.push(self.heap.statics[owner][si]);
            }
            Insn::PutStatic(f) => {
                let v = pop(stack)?;
                let (ci, si) = program
                    .resolve_static(&f.class, &f.name)
                    .map_err(|e| Trap::Type(e.to_string()))?;
                let owner = &program.classes[ci].name;
                self.ensure_init(owner)?;
                self.heap.statics.get_mut(owner).unwrap()[si] = v;
            }
            Insn::NewArray(t) => {
                let n = Self::int(pop(stack)?)?;
                if n < 0 {
                    return Err(Trap::NegativeSize(n));
                }
                let r = self.heap.alloc(HeapObj::Array {
                    elem: t.clone(),
                    values: vec![Value::default_for(t); n as usize],
                });
                stack.push(Value::Ref(r));
            }
            Insn::AaLoad | Insn::IaLoad => {
                let i = Self::int(pop(stack)?)?;
                let a = pop(stack)?;
                stack.push(self.elem(a, i)?);
            }
            Insn::AaStore | Insn::IaStore => {
                let v = pop(stack)?;
                let i = Self::int(pop(stack)?)?;
                let a = pop(stack)?;
                self.set_elem(a, i, v)?;
            }
            Insn::ArrayLength => {
                let a = pop(stack)?;
                let n = self.array(Self::obj_ref(a)?)?.len();
                stack.push(Value::Int(n as i32));
            }
            Insn::InvokeVirtual(m) | Insn::InvokeSpecial(m) => {
                let target = program
                    .resolve_dispatch(&m.class, &m.name)
                    .map_err(|e| Trap::Type(e.to_string()))?;
                let n = program.method(target).arg_count();
                let args = stack.split_off(stack.len() - n);
                let recv = Self::obj_ref(args[0])?;
                let ret = if matches!(insn, Insn::InvokeSpecial(_)) {
                    self.invoke(target, args)?
                } else {
                    let class = self.heap.class_of(recv).unwrap_or_default().to_string();
                    self.invoke_virtual(&class, &m.name, args)?
                };
                let declared = program.method(target);
                match (declared.returns_value(), ret) {
                    (true, Some(v)) => stack.push(v),
                    (true, None) => stack.push(Value::default_for(&declared.ret)),
                    (false, _) => {}
                }
            }
            Insn::InvokeStatic(m) => {
                let q = format!("{}", m);
                if let Some(decl) = program.extern_decl(&q) {
                    let args = stack.split_off(stack.len() - decl.params.len());
                    if let Some(v) = self.call_extern(decl, &args)? {
                        stack.push(v);
                    }
                } else {
                    let target = program
                        .resolve_dispatch(&m.class, &m.name)
                        .map_err(|e| Trap::Type(e.to_string()))?;
                    self.ensure_init(&program.classes[target.class].name)?;
                    let n = program.method(target).arg_count();
                    let args = stack.split_off(stack.len() - n);
                    if let Some(v) = self.invoke(target, args)? {
                        stack.push(v);
                    }
                }
            }
            Insn::InvokeIntrinsic(i) => {
                let (pops, _) = i.stack_effect();
                let args = stack.split_off(stack.len() - pops);
                if let Some(v) = self.intrinsic(*i, &args)? {
                    stack.push(v);
                }
            }
            Insn::Return => {
                let m = program.method(id);
                return Ok(Flow::Return(if m.returns_value() { Some(pop(stack)?) } else { None }));
            }
            Insn::SConcat => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                let s = format!("{}{}", self.string_of(a)?, self.string_of(b)?);
                stack.push(Value::Ref(self.heap.intern(&s)));
            }
            Insn::SEquals => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                self.string_of(a)?;
                let eq = b != Value::NULL && a == b;
                stack.push(Value::Bool(eq));
            }
            Insn::Throw => {
                let v = pop(stack)?;
                let r = Self::obj_ref(v)?;
                let class = self.heap.class_of(r).unwrap_or("?").to_string();
                return Err(Trap::Thrown(class));
            }
        }
        Ok(Flow::Next)
    }

    /// Dynamic dispatch on the receiver's runtime class, with message sends
    /// to handlers and state machines rewritten into direct calls.
    pub(crate) fn invoke_virtual(
        &mut self,
        class: &str,
        name: &str,
        args: Vec<Value>,
    ) -> Result<Option<Value>, Trap> {
        let program = self.program;
        if name == "sendMessage" && args.len() == 2 {
            if program.is_handler_class(class) {
                let t = program
                    .resolve_dispatch(class, "handleMessage")
                    .map_err(|e| Trap::Type(e.to_string()))?;
                return self.invoke(t, args);
            }
            if program.is_statemachine_class(class) {
                let (state, state_class) = self.current_state(args[0])?;
                let t = program
                    .resolve_dispatch(&state_class, "processMessage")
                    .map_err(|e| Trap::Type(e.to_string()))?;
                return self.invoke(t, vec![Value::Ref(state), args[1]]);
            }
        }
        let t = program
            .resolve_dispatch(class, name)
            .map_err(|e| Trap::Type(e.to_string()))?;
        self.invoke(t, args)
    }

    /// `sm.mSmHandler.mStateStack[sm.mSmHandler.mStateStackTopIndex].state`
    fn current_state(&self, sm: Value) -> Result<(u32, String), Trap> {
        let h = self.named_field(sm, "mSmHandler")?;
        let stack = self.named_field(h, "mStateStack")?;
        let top = Self::int(self.named_field(h, "mStateStackTopIndex")?)?;
        let entry = self.elem(stack, top)?;
        let state = Self::obj_ref(self.named_field(entry, "state")?)?;
        let class = self.heap.class_of(state).unwrap_or_default().to_string();
        Ok((state, class))
    }

    fn call_extern(&mut self, decl: &ExternDecl, args: &[Value]) -> Result<Option<Value>, Trap> {
        let v = match decl.policy {
            ExternPolicy::Ignore => return Ok(None),
            ExternPolicy::ModelUid => Value::Int(match &self.mode {
                Mode::Init(_) => crate::SYSTEM_UID,
                Mode::Replay { uid, .. } => *uid,
            }),
            ExternPolicy::ModelPackage => {
                let p = match &self.mode {
                    Mode::Init(_) => String::from("android"),
                    Mode::Replay { package, .. } => package.clone(),
                };
                Value::Ref(self.heap.intern(&p))
            }
            ExternPolicy::SymbolicReturn => {
                let k = self.extern_calls.entry(decl.name.clone()).or_insert(0);
                let var = extern_var_name(&decl.name, *k);
                *k += 1;
                match &self.mode {
                    Mode::Init(_) => Value::default_for(&decl.ret),
                    Mode::Replay { model, .. } => {
                        let mv = model.get(&var).cloned().ok_or(Trap::Unassigned(var))?;
                        self.model_value(&decl.ret, &mv)?
                    }
                }
            }
            ExternPolicy::Delegate => {
                let hargs: Vec<HostValue> = args.iter().map(|a| host_arg(&self.heap, *a)).collect();
                let reply = self.host.call(&decl.name, &hargs)?;
                self.host_reply(decl, reply)?
            }
        };
        Ok(if decl.ret == Type::Void { None } else { Some(v) })
    }

    fn host_reply(&mut self, decl: &ExternDecl, reply: HostValue) -> Result<Value, Trap> {
        let mismatch = |detail: String| {
            Trap::Host(HostError::TypeMismatch {
                name: decl.name.clone(),
                detail,
            })
        };
        match (&decl.ret, reply) {
            (Type::Void, _) => Ok(Value::Int(0)),
            (Type::Int(_), HostValue::Int(i)) => Ok(Value::Int(i)),
            (Type::Bool, HostValue::Bool(b)) => Ok(Value::Bool(b)),
            (Type::Str, HostValue::Str(s)) => Ok(Value::Ref(self.heap.intern(&s))),
            (t, HostValue::Null) if t.is_reference() => Ok(Value::NULL),
            (t, r) => Err(mismatch(format!("expected {}, got {:?}", t, r))),
        }
    }

    /// Convert a model value into a guest value of declared type `t`.
    pub(crate) fn model_value(&mut self, t: &Type, mv: &ModelValue) -> Result<Value, Trap> {
        match (t, mv) {
            (Type::Int(_), ModelValue::Int(i)) => Ok(Value::Int(*i)),
            (Type::Bool, ModelValue::Int(i)) => Ok(Value::Bool(*i != 0)),
            (Type::Str | Type::Any, ModelValue::Str(s)) => Ok(Value::Ref(self.heap.intern(s))),
            (Type::Any, ModelValue::Int(i)) => Ok(Value::Int(*i)),
            (t, ModelValue::Null(true)) if t.is_reference() => Ok(Value::NULL),
            (t, v) => Err(Trap::Type(format!("model value {:?} does not fit {}", v, t))),
        }
    }

    fn list_data(&self, list: Value) -> Result<(u32, Value), Trap> {
        let r = Self::obj_ref(list)?;
        Ok((r, self.heap.field(self.program, r, "data").unwrap_or(Value::NULL)))
    }

    fn len_of(&self, arr: Value) -> Result<usize, Trap> {
        if arr == Value::NULL {
            Ok(0)
        } else {
            Ok(self.array(Self::obj_ref(arr)?)?.len())
        }
    }

    fn grow(&mut self, arr: Value, elem: Type, v: Value) -> Result<Value, Trap> {
        let mut values = if arr == Value::NULL {
            Vec::new()
        } else {
            self.array(Self::obj_ref(arr)?)?.clone()
        };
        values.push(v);
        Ok(Value::Ref(self.heap.alloc(HeapObj::Array { elem, values })))
    }

    fn find_key(&self, keys: Value, key: Value) -> Result<Option<usize>, Trap> {
        if keys == Value::NULL {
            return Ok(None);
        }
        let ks = self.array(Self::obj_ref(keys)?)?;
        Ok(ks.iter().position(|k| *k == key))
    }

    fn inputs(&self, what: &'static str) -> Result<&'a InitInputs, Trap> {
        match self.mode {
            Mode::Init(i) => Ok(i),
            _ => Err(Trap::InitOnly(what)),
        }
    }

    fn app(&self, what: &'static str, i: Value) -> Result<&'a super::AppRecord, Trap> {
        let apps = self.inputs(what)?.apps.apps();
        let i = Self::int(i)?;
        usize::try_from(i)
            .ok()
            .and_then(|i| apps.get(i))
            .ok_or(Trap::OutOfBounds { index: i, len: apps.len() })
    }

    fn intrinsic(&mut self, which: Intrinsic, a: &[Value]) -> Result<Option<Value>, Trap> {
        let name = which.name();
        Ok(Some(match which {
            Intrinsic::ListGet => {
                let (_, data) = self.list_data(a[0])?;
                let i = Self::int(a[1])?;
                if data == Value::NULL {
                    return Err(Trap::OutOfBounds { index: i, len: 0 });
                }
                self.elem(data, i)?
            }
            Intrinsic::ListSet => {
                let (_, data) = self.list_data(a[0])?;
                let i = Self::int(a[1])?;
                if data == Value::NULL {
                    return Err(Trap::OutOfBounds { index: i, len: 0 });
                }
                self.set_elem(data, i, a[2])?;
                return Ok(None);
            }
            Intrinsic::ListAdd => {
                let (r, data) = self.list_data(a[0])?;
                let grown = self.grow(data, Type::Any, a[1])?;
                self.set_named_field(r, "data", grown)?;
                return Ok(None);
            }
            Intrinsic::ListLen => {
                let (_, data) = self.list_data(a[0])?;
                Value::Int(self.len_of(data)? as i32)
            }
            Intrinsic::MapGet | Intrinsic::MapContains | Intrinsic::SparseGet => {
                let r = Self::obj_ref(a[0])?;
                let keys = self.heap.field(self.program, r, "keys").unwrap_or(Value::NULL);
                let vals = self.heap.field(self.program, r, "vals").unwrap_or(Value::NULL);
                let hit = self.find_key(keys, a[1])?;
                match (which, hit) {
                    (Intrinsic::MapContains, h) => Value::Bool(h.is_some()),
                    (_, Some(i)) => self.elem(vals, i as i32)?,
                    (_, None) => Value::NULL,
                }
            }
            Intrinsic::MapPut | Intrinsic::SparsePut => {
                let r = Self::obj_ref(a[0])?;
                let keys = self.heap.field(self.program, r, "keys").unwrap_or(Value::NULL);
                let vals = self.heap.field(self.program, r, "vals").unwrap_or(Value::NULL);
                match self.find_key(keys, a[1])? {
                    Some(i) => self.set_elem(vals, i as i32, a[2])?,
                    None => {
                        let kt = if which == Intrinsic::SparsePut { Type::Int(None) } else { Type::Any };
                        let k = self.grow(keys, kt, a[1])?;
                        let v = self.grow(vals, Type::Any, a[2])?;
                        self.set_named_field(r, "keys", k)?;
                        self.set_named_field(r, "vals", v)?;
                    }
                }
                return Ok(None);
            }
            Intrinsic::AppCount => Value::Int(self.inputs(name)?.apps.apps().len() as i32),
            Intrinsic::AppUid => Value::Int(self.app(name, a[0])?.uid),
            Intrinsic::AppPackage => {
                let p = &self.app(name, a[0])?.package;
                Value::Ref(self.heap.intern(p))
            }
            Intrinsic::AppManifest => {
                let app = self.app(name, a[0])?;
                let key = self.string_of(a[1])?.to_string();
                match app.manifest.get(&key) {
                    Some(ConfigValue::Int(i)) => Value::Int(*i),
                    Some(ConfigValue::Str(s)) => Value::Ref(self.heap.intern(s)),
                    Some(ConfigValue::List(_)) | None => Value::NULL,
                }
            }
            Intrinsic::AppPermCount => Value::Int(self.app(name, a[0])?.permissions.len() as i32),
            Intrinsic::AppPerm => {
                let app = self.app(name, a[0])?;
                let j = Self::int(a[1])?;
                let p = usize::try_from(j)
                    .ok()
                    .and_then(|j| app.permissions.get(j))
                    .ok_or(Trap::OutOfBounds { index: j, len: app.permissions.len() })?;
                Value::Ref(self.heap.intern(p))
            }
            Intrinsic::ConfigInt => {
                let key = self.string_of(a[0])?;
                match self.inputs(name)?.config.get(key) {
                    Some(ConfigValue::Int(i)) => Value::Int(*i),
                    _ => Value::Int(Self::int(a[1])?),
                }
            }
            Intrinsic::ConfigCount => {
                let key = self.string_of(a[0])?;
                match self.inputs(name)?.config.get(key) {
                    Some(ConfigValue::List(l)) => Value::Int(l.len() as i32),
                    _ => Value::Int(0),
                }
            }
            Intrinsic::ConfigItem => {
                let key = self.string_of(a[0])?.to_string();
                let j = Self::int(a[1])?;
                let item = match self.inputs(name)?.config.get(&key) {
                    Some(ConfigValue::List(l)) => usize::try_from(j).ok().and_then(|j| l.get(j)).cloned(),
                    _ => None,
                };
                let item = item.ok_or(Trap::OutOfBounds { index: j, len: 0 })?;
                Value::Ref(self.heap.intern(&item))
            }
            Intrinsic::Publish => {
                self.inputs(name)?;
                let r = Self::obj_ref(a[0])?;
                let class = self.heap.class_of(r).unwrap_or_default().to_string();
                if !self.program.class(&class).is_some_and(|c| c.singleton) {
                    return Err(Trap::Type(format!("`{}` is not a singleton class", class)));
                }
                self.heap.roots.insert(class, r);
                return Ok(None);
            }
        }))
    }
}

/// Model variable holding the `k`-th result of a symbolic-return extern.
pub fn extern_var_name(name: &str, k: u32) -> String {
    format!("ret:{}#{}", name, k)
}

fn pop(stack: &mut Vec<Value>) -> Result<Value, Trap> {
    stack.pop().ok_or_else(|| Trap::Type("operand stack underflow".into()))
}

enum Flow {
    Next,
    Jump(usize),
    Return(Option<Value>),
}
