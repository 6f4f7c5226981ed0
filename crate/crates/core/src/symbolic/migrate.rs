//! Heap side of the explorer: cell reads with on-demand migration, class
//! initialization, ucse lazy materialization and symbolization of
//! skeleton-owned objects.
//!
//! Everything here that runs before a fork must be idempotent, because a
//! forked clone re-executes the instruction from its start.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::exec::{type_trap, Explorer, Stop, R};
use super::{default_in_domain, mk_and, mk_cmp, Mode, MigNode, MigrationEdge, SemiMark, Trigger, VarOrigin, UCSE_MAX_ARRAY_LEN};
use super::state::{Cell, CellVal, Frame, OnReturn, Slot, SymId, SymObj, SymState, SymVal};
use crate::concrete::{OverlayLocation, Trap};
use crate::isa::{parse_type, CmpOp, Literal, MethodId, Type};
use crate::snapshot::{EntryKind, SnapValue};
use crate::solver::{Formula, ModelValue, Sort, StrTerm, Term, VarId};

/// Addressable heap cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum CellLoc {
    Field(SymId, usize),
    Elem(SymId, usize),
    Static(String, usize),
    Bootstrap,
}

pub(super) fn sort_of(t: &Type) -> Sort {
    match t {
        Type::Int(Some((lo, hi))) => Sort::Int { lo: *lo, hi: *hi },
        Type::Bool => Sort::boolean(),
        Type::Int(None) | Type::Any => Sort::int(),
        Type::Str => Sort::Str,
        _ => Sort::Ref,
    }
}

fn default_model_value(sort: &Sort) -> ModelValue {
    match sort {
        Sort::Int { lo, hi } => ModelValue::Int(default_in_domain(*lo, *hi)),
        Sort::Str => ModelValue::Str(String::new()),
        // Symbolic-return references are null in every replay.
        Sort::Ref => ModelValue::Null(true),
    }
}

fn snap_cell(v: SnapValue) -> Cell {
    Cell::val(match v {
        SnapValue::Int(i) => SymVal::int(i),
        SnapValue::Bool(b) => SymVal::int(i32::from(b)),
        SnapValue::Ref(0) => SymVal::NULL,
        SnapValue::Ref(r) => {
            return Cell {
                val: CellVal::Snap(r),
                taint: None,
                semi: None,
            }
        }
    })
}

pub(super) fn node_of(st: &SymState, id: SymId) -> MigNode {
    match st.obj(id).and_then(SymObj::origin) {
        Some(conc) => MigNode::Object { conc, sym: id },
        None => MigNode::Symbolic { sym: id },
    }
}

impl<'a> Explorer<'a> {
    /// Declare a variable; the cached model, if any, gets an in-domain value.
    pub(super) fn new_var(&self, st: &mut SymState, name: String, sort: Sort, origin: VarOrigin) -> VarId {
        let d = default_model_value(&sort);
        let v = st.pc.fresh(name, sort);
        if let Some(m) = &mut st.model {
            m.insert(v, d);
        }
        st.origins.insert(v, origin);
        v
    }

    pub(super) fn cell<'s>(&self, st: &'s SymState, loc: &CellLoc) -> &'s Cell {
        match loc {
            CellLoc::Field(o, i) | CellLoc::Elem(o, i) => &st.obj(*o).expect("live object").cells()[*i],
            CellLoc::Static(c, i) => &st.statics[c][*i],
            CellLoc::Bootstrap => &st.bootstrap,
        }
    }

    pub(super) fn cell_mut<'s>(&self, st: &'s mut SymState, loc: &CellLoc) -> &'s mut Cell {
        match loc {
            CellLoc::Field(o, i) | CellLoc::Elem(o, i) => match st.obj_mut(*o).expect("live object") {
                SymObj::Object { fields: cells, .. } | SymObj::Array { elems: cells, .. } => &mut cells[*i],
                _ => unreachable!("cell of a non-container"),
            },
            CellLoc::Static(c, i) => &mut st.statics.get_mut(c).expect("initialized class")[*i],
            CellLoc::Bootstrap => &mut st.bootstrap,
        }
    }

    pub(super) fn write_cell(&self, st: &mut SymState, loc: &CellLoc, s: Slot) {
        *self.cell_mut(st, loc) = Cell {
            val: CellVal::Val(s.val),
            taint: s.taint,
            semi: None,
        };
    }

    fn cell_type(&self, st: &SymState, loc: &CellLoc) -> Type {
        match loc {
            CellLoc::Field(o, i) => match st.obj(*o) {
                Some(SymObj::Object { class, .. }) => self.program.layout(class).expect("known class").fields[*i].1.clone(),
                _ => Type::Any,
            },
            CellLoc::Elem(a, _) => match st.obj(*a) {
                Some(SymObj::Array { elem, .. }) => elem.clone(),
                _ => Type::Any,
            },
            CellLoc::Static(c, i) => self.program.class(c).expect("known class").statics[*i].ty.clone(),
            CellLoc::Bootstrap => Type::Ref(self.driver.class.clone().unwrap_or_else(|| self.driver.service.clone())),
        }
    }

    /// Read a cell, migrating a snapshot reference, materializing a lazy
    /// value and symbolizing a semi-marked pointee as needed.
    pub(super) fn read_cell(&mut self, st: &mut SymState, loc: &CellLoc, parent: &MigNode, trigger: Trigger) -> R<Slot> {
        let cell = self.cell(st, loc).clone();
        let val = match cell.val {
            CellVal::Val(v) => v,
            CellVal::Snap(c) => {
                let s = self.migrate(st, c, parent, trigger)?;
                self.cell_mut(st, loc).val = CellVal::Val(SymVal::Ref(s));
                SymVal::Ref(s)
            }
            CellVal::Lazy => self.materialize(st, loc)?,
            CellVal::Pending { null, len } => self.decide_pending(st, loc, null, len)?,
        };
        if let (Some(m), SymVal::Ref(s)) = (&cell.semi, &val) {
            self.symbolize(st, *s, m.entry, m.key.clone())?;
        }
        Ok(Slot { val, taint: cell.taint })
    }

    /// Copy concrete entry `c` into the symbolic heap unless conc2Sym
    /// already maps it.
    pub(super) fn migrate(&mut self, st: &mut SymState, c: u32, parent: &MigNode, trigger: Trigger) -> R<SymId> {
        if let Some(s) = st.conc2sym.get(&c) {
            return Ok(*s);
        }
        let kind = self.snapshot.kind_of(c).map_err(Stop::snapshot)?;
        let s = match kind {
            EntryKind::Str => {
                let text = self.snapshot.get_string(c).map_err(Stop::snapshot)?;
                match st.pool.get(&text).copied() {
                    Some(p) => match st.obj_mut(p) {
                        Some(SymObj::Str { origin: o @ None, .. }) => {
                            *o = Some(c);
                            p
                        }
                        _ => return Err(Stop::fatal_snapshot(format!("two string entries hold {:?}", text))),
                    },
                    None => {
                        let p = st.alloc(SymObj::Str {
                            val: StrTerm::Lit(text.clone()),
                            origin: Some(c),
                        });
                        st.pool.insert(text, p);
                        p
                    }
                }
            }
            EntryKind::Array => {
                let rec = self.snapshot.get_array(c).map_err(Stop::snapshot)?;
                let elem = parse_type(&rec.elem)
                    .ok_or_else(|| Stop::fatal_snapshot(format!("array {} has element type {:?}", c, rec.elem)))?;
                st.alloc(SymObj::Array {
                    elem,
                    elems: rec.values.into_iter().map(snap_cell).collect(),
                    handled: false,
                    origin: Some(c),
                })
            }
            EntryKind::Object => {
                let rec = self.snapshot.get_object(c).map_err(Stop::snapshot)?;
                self.init_class(st, &rec.class, parent)?;
                let layout = self
                    .program
                    .layout(&rec.class)
                    .ok_or_else(|| Stop::fatal_snapshot(format!("object {} has unknown class `{}`", c, rec.class)))?;
                let fields = layout
                    .fields
                    .iter()
                    .map(|(n, t, _)| match rec.fields.get(n) {
                        Some(v) => snap_cell(*v),
                        None => Cell::val(SymVal::default_for(t)),
                    })
                    .collect();
                st.alloc(SymObj::Object {
                    class: rec.class,
                    fields,
                    exact: true,
                    handled: false,
                    origin: Some(c),
                })
            }
        };
        st.conc2sym.insert(c, s);
        st.sym2conc.insert(s, c);
        st.migrations.push(MigrationEdge {
            parent: parent.clone(),
            trigger,
            child: MigNode::Object { conc: c, sym: s },
        });
        self.stats.migrations += 1;
        Ok(s)
    }

    /// Make `class` and its superclasses initialized on this path. Seeded
    /// mode copies statics from the snapshot when the class was initialized
    /// there and otherwise runs `clinit`, yielding to it.
    pub(super) fn init_class(&mut self, st: &mut SymState, class: &str, parent: &MigNode) -> R<()> {
        if st.statics.contains_key(class) {
            return Ok(());
        }
        let program = self.program;
        let def = program.class(class).ok_or_else(|| type_trap(format!("unknown class `{}`", class)))?;
        if let Some(s) = &def.super_class {
            self.init_class(st, s, parent)?;
        }
        let literal = |st: &mut SymState, lit: &Literal| match lit {
            Literal::Int(i) => SymVal::int(*i),
            Literal::Bool(b) => SymVal::int(i32::from(*b)),
            Literal::Null => SymVal::NULL,
            Literal::Str(s) => SymVal::Ref(st.pooled(s)),
        };
        if self.config.mode == Mode::Ucse {
            let cells = def
                .statics
                .iter()
                .map(|f| match &f.init {
                    Some(lit) => Cell::val(literal(st, lit)),
                    None => Cell::lazy(),
                })
                .collect();
            st.statics.insert(class.into(), cells);
            return Ok(());
        }
        match self.snapshot.class_statics(class) {
            Ok(Some(values)) => {
                let cells = def
                    .statics
                    .iter()
                    .map(|f| match (values.get(&f.name), &f.init) {
                        (Some(v), _) => snap_cell(*v),
                        (None, Some(lit)) => Cell::val(literal(st, lit)),
                        (None, None) => Cell::val(SymVal::default_for(&f.ty)),
                    })
                    .collect();
                st.statics.insert(class.into(), cells);
                st.migrations.push(MigrationEdge {
                    parent: parent.clone(),
                    trigger: Trigger::InitClass,
                    child: MigNode::Class { name: class.into() },
                });
                return Ok(());
            }
            Ok(None) | Err(crate::snapshot::SnapshotError::UnknownClass(_)) => {}
            Err(e) => return Err(Stop::snapshot(e)),
        }
        let cells = def
            .statics
            .iter()
            .map(|f| match &f.init {
                Some(lit) => Cell::val(literal(st, lit)),
                None => Cell::val(SymVal::default_for(&f.ty)),
            })
            .collect();
        st.statics.insert(class.into(), cells);
        if let Some(mi) = def.methods.iter().position(|m| m.name == "clinit" && m.is_static) {
            let id = MethodId {
                class: program.class_id(class).expect("known class"),
                method: mi,
            };
            self.push_frame(st, id, Vec::new(), OnReturn::Retry)?;
            return Err(Stop::Yield);
        }
        Ok(())
    }

    pub(super) fn push_frame(&mut self, st: &mut SymState, id: MethodId, mut args: Vec<Slot>, on_return: OnReturn) -> R<()> {
        if st.frames.len() >= super::exec::MAX_DEPTH {
            return Err(Stop::Trap(Trap::DepthLimit));
        }
        let m = self.program.method(id);
        args.resize(m.locals as usize, Slot::plain(SymVal::int(0)));
        st.frames.push(Frame {
            method: id,
            pc: 0,
            locals: args,
            stack: Vec::new(),
            on_return,
            pending: Default::default(),
        });
        Ok(())
    }

    /// Fresh object of `class` whose fields are all lazy.
    pub(super) fn lazy_object(&self, class: &str, exact: bool) -> SymObj {
        let n = self.program.layout(class).map_or(0, |l| l.fields.len());
        SymObj::Object {
            class: class.into(),
            fields: vec![Cell::lazy(); n],
            exact,
            handled: false,
            origin: None,
        }
    }

    fn lazy_name(&self, st: &mut SymState, what: &str) -> String {
        format!("{}#{}", what, st.next_fresh())
    }

    /// First read of a ucse lazy cell.
    fn materialize(&mut self, st: &mut SymState, loc: &CellLoc) -> R<SymVal> {
        let ty = self.cell_type(st, loc);
        let name = self.lazy_name(st, "lazy");
        match &ty {
            Type::Int(_) | Type::Bool => {
                let v = self.new_var(st, name, sort_of(&ty), VarOrigin::Internal);
                let val = SymVal::Int(Term::var(v));
                self.cell_mut(st, loc).val = CellVal::Val(val.clone());
                Ok(val)
            }
            Type::Str => {
                let v = self.new_var(st, name, Sort::Str, VarOrigin::Internal);
                let s = st.alloc(SymObj::Str {
                    val: StrTerm::Var(v),
                    origin: None,
                });
                self.cell_mut(st, loc).val = CellVal::Val(SymVal::Ref(s));
                Ok(SymVal::Ref(s))
            }
            Type::Any => {
                let null = self.new_var(st, name, Sort::Ref, VarOrigin::Internal);
                let u = st.alloc(SymObj::Untyped { null });
                self.cell_mut(st, loc).val = CellVal::Val(SymVal::Ref(u));
                Ok(SymVal::Ref(u))
            }
            Type::Ref(_) | Type::Arr(_) => {
                let null = self.new_var(st, name.clone(), Sort::Ref, VarOrigin::Internal);
                let len = match ty {
                    Type::Arr(_) => Some(self.new_var(
                        st,
                        format!("{}.length", name),
                        Sort::Int {
                            lo: 0,
                            hi: UCSE_MAX_ARRAY_LEN as i32,
                        },
                        VarOrigin::Internal,
                    )),
                    _ => None,
                };
                self.cell_mut(st, loc).val = CellVal::Pending { null, len };
                self.decide_pending(st, loc, null, len)
            }
            Type::Void => Err(type_trap("void cell".into())),
        }
    }

    /// Fork a ucse reference into null and its possible shapes.
    fn decide_pending(&mut self, st: &mut SymState, loc: &CellLoc, null: VarId, len: Option<VarId>) -> R<SymVal> {
        let ty = self.cell_type(st, loc);
        let mut arms = vec![Formula::IsNull(null)];
        let nonnull = Formula::Not(Arc::new(Formula::IsNull(null)));
        match len {
            None => arms.push(nonnull),
            Some(l) => {
                for k in 0..=UCSE_MAX_ARRAY_LEN {
                    arms.push(mk_and(vec![
                        nonnull.clone(),
                        mk_cmp(CmpOp::Eq, &Term::var(l), &Term::constant(k as i32)),
                    ]));
                }
            }
        }
        let arm = self.decide(st, arms)?;
        let val = if arm == 0 {
            SymVal::NULL
        } else {
            let obj = match &ty {
                Type::Arr(elem) => SymObj::Array {
                    elem: (**elem).clone(),
                    elems: vec![Cell::lazy(); arm - 1],
                    handled: false,
                    origin: None,
                },
                Type::Ref(c) => {
                    let exact = self.program.subclasses_of(c).count() == 1;
                    self.lazy_object(c, exact)
                }
                _ => return Err(type_trap(format!("pending cell of type {}", ty))),
            };
            SymVal::Ref(st.alloc(obj))
        };
        self.cell_mut(st, loc).val = CellVal::Val(val.clone());
        Self::settle(st);
        Ok(val)
    }

    /// Turn the concrete data of a skeleton-owned object or array into
    /// symbolic inputs: primitives and strings become variables named after
    /// their snapshot slot, references are marked so their pointees follow
    /// on first read. Null references stay null.
    pub(super) fn symbolize(&mut self, st: &mut SymState, id: SymId, entry: usize, key: Option<String>) -> R<()> {
        let (origin, slots): (Option<u32>, Vec<(String, Type, Option<String>)>) = match st.obj_mut(id) {
            Some(SymObj::Object {
                class, handled, origin, ..
            }) if !*handled => {
                *handled = true;
                let layout = self.program.layout(class).expect("known class");
                (*origin, layout.fields.clone())
            }
            Some(SymObj::Array {
                elem,
                elems,
                handled,
                origin,
            }) if !*handled => {
                *handled = true;
                let n = elems.len();
                (*origin, (0..n).map(|j| (j.to_string(), elem.clone(), None)).collect())
            }
            _ => return Ok(()),
        };
        let is_array = matches!(st.obj(id), Some(SymObj::Array { .. }));
        for (i, (fname, ty, mkey)) in slots.into_iter().enumerate() {
            let key = mkey.or_else(|| key.clone());
            let loc = if is_array { CellLoc::Elem(id, i) } else { CellLoc::Field(id, i) };
            let (name, origin_of) = match (origin, is_array) {
                (Some(c), false) => (
                    format!("o{}.{}", c, fname),
                    VarOrigin::Overlay {
                        location: OverlayLocation::Field { obj: c, field: fname },
                        key: key.clone(),
                    },
                ),
                (Some(c), true) => (
                    format!("a{}[{}]", c, i),
                    VarOrigin::Overlay {
                        location: OverlayLocation::Elem { arr: c, index: i },
                        key: key.clone(),
                    },
                ),
                (None, false) => (format!("s{}.{}", id, fname), VarOrigin::Internal),
                (None, true) => (format!("s{}[{}]", id, i), VarOrigin::Internal),
            };
            self.symbolize_slot(st, &loc, &ty, name, origin_of, entry, key)?;
        }
        Ok(())
    }

    /// Symbolize one slot. Returns the variable created, if any.
    #[allow(clippy::too_many_arguments)]
    pub(super) fn symbolize_slot(
        &mut self,
        st: &mut SymState,
        loc: &CellLoc,
        ty: &Type,
        name: String,
        origin: VarOrigin,
        entry: usize,
        key: Option<String>,
    ) -> R<Option<VarId>> {
        let cell = self.cell(st, loc).clone();
        // Slot kind: primitive, string or heap reference.
        let kind = match &cell.val {
            CellVal::Val(SymVal::Int(t)) => match **t {
                Term::Const(_) => Some(true),
                _ => None,
            },
            CellVal::Val(SymVal::Ref(0)) => None,
            CellVal::Val(SymVal::Ref(r)) => match st.obj(*r) {
                Some(SymObj::Str { val: StrTerm::Lit(_), .. }) => Some(false),
                Some(SymObj::Object { .. } | SymObj::Array { .. }) => {
                    self.cell_mut(st, loc).semi.get_or_insert(SemiMark { entry, key });
                    None
                }
                _ => None,
            },
            CellVal::Snap(c) => match self.snapshot.kind_of(*c).map_err(Stop::snapshot)? {
                EntryKind::Str => Some(false),
                _ => {
                    self.cell_mut(st, loc).semi.get_or_insert(SemiMark { entry, key });
                    None
                }
            },
            CellVal::Lazy | CellVal::Pending { .. } => None,
        };
        let Some(primitive) = kind else {
            return Ok(None);
        };
        let v = if primitive {
            let sort = if ty.is_primitive() { sort_of(ty) } else { Sort::int() };
            let v = self.new_var(st, name, sort, origin);
            self.cell_mut(st, loc).val = CellVal::Val(SymVal::Int(Term::var(v)));
            v
        } else {
            let v = self.new_var(st, name, Sort::Str, origin);
            let s = st.alloc(SymObj::Str {
                val: StrTerm::Var(v),
                origin: None,
            });
            self.cell_mut(st, loc).val = CellVal::Val(SymVal::Ref(s));
            v
        };
        st.inventory[entry].vars.push(v);
        Ok(Some(v))
    }
}
