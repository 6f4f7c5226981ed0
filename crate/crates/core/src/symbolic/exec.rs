//! The explorer: a depth-first worklist of states, each advanced one
//! instruction per [`Explorer::step`].

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::migrate::{node_of, sort_of, CellLoc};
use super::state::{Cell, OnReturn, Slot, SymId, SymObj, SymState, SymVal};
use super::{
    mk_and, mk_cmp, mk_or, Access, AccessKey, AccessRecord, ExploreConfig, ExploreError, ExploreStats, Exploration,
    InventoryEntry, MigNode, Mode, ParamBinding, ParamSpec, PathReport, PathStatus, Property, TestDriver, Trigger,
    VarOrigin,
};
use crate::concrete::{extern_var_name, Trap};
use crate::host::{ExternHost, HostError, HostValue};
use crate::isa::{
    ArithOp, CallGraph, CmpOp, ExternDecl, ExternPolicy, Insn, Intrinsic, Literal, Location, MethodId, Program,
    TargetReach, Type, LIST_CLASS,
};
use crate::snapshot::{Header, SnapshotError, SnapshotQuery};
use crate::solver::{check_sat, eval_formula, Formula, Model, ModelValue, PathCondition, SatResult, SolverConfig, Sort, StrTerm, Term};
use crate::taint::{self, TaintLabel, TaintOp};

pub(super) const MAX_DEPTH: usize = 256;

/// Why the current instruction did not complete.
#[derive(Debug)]
pub(super) enum Stop {
    /// The path ends with a guest trap.
    Trap(Trap),
    /// No arm of a fork is feasible.
    Dropped,
    /// A static initializer frame was pushed; the instruction re-executes
    /// after it returns.
    Yield,
    Fatal(ExploreError),
}

impl Stop {
    pub(super) fn snapshot(e: SnapshotError) -> Stop {
        Stop::Fatal(ExploreError::Snapshot(e))
    }

    pub(super) fn fatal_snapshot(msg: String) -> Stop {
        Stop::snapshot(SnapshotError::Schema(msg))
    }
}

pub(super) type R<T> = Result<T, Stop>;

pub(super) fn type_trap(msg: String) -> Stop {
    Stop::Trap(Trap::Type(msg))
}

fn lookup_trap(e: crate::isa::LookupError) -> Stop {
    type_trap(e.to_string())
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Incremental explorer. `step` advances the current state by one
/// instruction; forks go onto a LIFO worklist.
pub struct Explorer<'a> {
    pub(super) program: &'a Program,
    pub(super) snapshot: &'a dyn SnapshotQuery,
    pub(super) driver: TestDriver,
    pub(super) config: ExploreConfig,
    host: &'a mut dyn ExternHost,
    header: Header,
    reach: Option<TargetReach>,
    /// Saved states, each with an audit copy when invariants are checked.
    work: Vec<(SymState, Option<SymState>)>,
    current: Option<SymState>,
    reports: Vec<PathReport>,
    pub(super) stats: ExploreStats,
    rng: u64,
    next_id: usize,
}

impl<'a> Explorer<'a> {
    pub fn new(
        program: &'a Program,
        snapshot: &'a dyn SnapshotQuery,
        driver: &TestDriver,
        config: ExploreConfig,
        host: &'a mut dyn ExternHost,
    ) -> Result<Explorer<'a>, ExploreError> {
        let reach = config
            .target
            .map(|t| TargetReach::compute(program, &CallGraph::build(program), t));
        let mut ex = Explorer {
            program,
            snapshot,
            driver: driver.clone(),
            header: snapshot.header(),
            rng: config.seed,
            config,
            host,
            reach,
            work: Vec::new(),
            current: None,
            reports: Vec::new(),
            stats: ExploreStats::default(),
            next_id: 0,
        };
        ex.bootstrap()?;
        Ok(ex)
    }

    fn bootstrap(&mut self) -> Result<(), ExploreError> {
        let program = self.program;
        let driver = self.driver.clone();
        let declared = driver.class.clone().unwrap_or_else(|| driver.service.clone());
        if program.class(&declared).is_none() {
            return Err(crate::isa::LookupError::NoSuchClass(declared).into());
        }
        let mut st = SymState::new();
        let recv = match self.config.mode {
            Mode::Seeded => {
                let root = self.snapshot.find_root(&driver.service)?;
                let rec = self.snapshot.get_object(root)?;
                if !program.is_subclass(&rec.class, &declared) {
                    return Err(ExploreError::ClassMismatch {
                        declared,
                        found: rec.class,
                    });
                }
                st.bootstrap = Cell {
                    val: super::CellVal::Snap(root),
                    taint: None,
                    semi: None,
                };
                match self.read_cell(&mut st, &CellLoc::Bootstrap, &MigNode::Driver, Trigger::Bootstrap) {
                    Ok(s) => s.val,
                    Err(Stop::Fatal(e)) => return Err(e),
                    Err(_) => return Err(ExploreError::BadEntrypoint(driver.entrypoint.clone())),
                }
            }
            Mode::Ucse => {
                let id = st.alloc(self.lazy_object(&declared, true));
                st.bootstrap = Cell::val(SymVal::Ref(id));
                SymVal::Ref(id)
            }
        };
        let SymVal::Ref(rid) = recv else { unreachable!() };
        let class = match st.obj(rid) {
            Some(SymObj::Object { class, .. }) => class.clone(),
            _ => return Err(ExploreError::BadEntrypoint(driver.entrypoint.clone())),
        };
        let entry = program.resolve_dispatch(&class, &driver.entrypoint)?;
        let def = program.method(entry);
        if def.is_static || def.params.len() != driver.params.len() {
            return Err(ExploreError::BadEntrypoint(driver.entrypoint.clone()));
        }

        // Each symbolic reference parameter doubles the initial states.
        let mut states: Vec<(SymState, Vec<Slot>, Vec<String>)> = vec![(st, vec![Slot::plain(recv)], Vec::new())];
        for (i, (spec, (_, dty))) in driver.params.iter().zip(&def.params).enumerate() {
            let bad = |detail: String| ExploreError::BadParam { index: i, detail };
            let mut next = Vec::new();
            for (mut st, mut args, mut inits) in states {
                match spec {
                    ParamSpec::Literal(lit) => {
                        let (v, mv) = match (lit, dty) {
                            (Literal::Int(x), t) if t.is_primitive() => (SymVal::int(*x), ModelValue::Int(*x)),
                            (Literal::Bool(b), t) if t.is_primitive() => {
                                (SymVal::int(i32::from(*b)), ModelValue::Int(i32::from(*b)))
                            }
                            (Literal::Null, t) if t.is_reference() => (SymVal::NULL, ModelValue::Null(true)),
                            (Literal::Str(s), Type::Str | Type::Any) => (SymVal::Ref(st.pooled(s)), ModelValue::Str(s.clone())),
                            _ => return Err(bad(format!("literal {:?} does not fit {}", lit, dty))),
                        };
                        args.push(Slot::plain(v));
                        st.params.push(ParamBinding::Value(mv));
                        next.push((st, args, inits));
                    }
                    ParamSpec::Symbolic(t) => match t {
                        Type::Int(_) | Type::Bool if dty.is_primitive() || *dty == Type::Any => {
                            let v = self.new_var(&mut st, format!("p{}", i), sort_of(t), VarOrigin::Param { index: i, field: None });
                            args.push(Slot::plain(SymVal::Int(Term::var(v))));
                            st.params.push(ParamBinding::Var(v));
                            next.push((st, args, inits));
                        }
                        Type::Str if matches!(dty, Type::Str | Type::Any) => {
                            let v = self.new_var(&mut st, format!("p{}", i), Sort::Str, VarOrigin::Param { index: i, field: None });
                            let s = st.alloc(SymObj::Str {
                                val: StrTerm::Var(v),
                                origin: None,
                            });
                            args.push(Slot::plain(SymVal::Ref(s)));
                            st.params.push(ParamBinding::Var(v));
                            next.push((st, args, inits));
                        }
                        Type::Ref(c) if dty.is_reference() => {
                            let layout = program.layout(c).ok_or_else(|| bad(format!("unknown class `{}`", c)))?;
                            let null = self.new_var(&mut st, format!("p{}", i), Sort::Ref, VarOrigin::Param { index: i, field: None });
                            let mut nst = st.clone();
                            let mut nargs = args.clone();
                            nst.pc.push(Formula::IsNull(null));
                            nst.model.as_mut().unwrap().insert(null, ModelValue::Null(true));
                            nargs.push(Slot::plain(SymVal::NULL));
                            nst.params.push(ParamBinding::Object {
                                null,
                                fields: Vec::new(),
                            });
                            next.push((nst, nargs, inits.clone()));

                            st.pc.push(Formula::Not(Arc::new(Formula::IsNull(null))));
                            st.model.as_mut().unwrap().insert(null, ModelValue::Null(false));
                            let mut cells = Vec::new();
                            let mut fields = Vec::new();
                            for (fname, fty, _) in &layout.fields {
                                let origin = VarOrigin::Param {
                                    index: i,
                                    field: Some(fname.clone()),
                                };
                                let name = crate::concrete::param_field_var(i, fname);
                                cells.push(match fty {
                                    Type::Int(_) | Type::Bool => {
                                        let v = self.new_var(&mut st, name, sort_of(fty), origin);
                                        fields.push((fname.clone(), v));
                                        Cell::val(SymVal::Int(Term::var(v)))
                                    }
                                    Type::Str => {
                                        let v = self.new_var(&mut st, name, Sort::Str, origin);
                                        fields.push((fname.clone(), v));
                                        let s = st.alloc(SymObj::Str {
                                            val: StrTerm::Var(v),
                                            origin: None,
                                        });
                                        Cell::val(SymVal::Ref(s))
                                    }
                                    _ if self.config.mode == Mode::Ucse => Cell::lazy(),
                                    _ => Cell::val(SymVal::NULL),
                                });
                            }
                            let o = st.alloc(SymObj::Object {
                                class: c.clone(),
                                fields: cells,
                                exact: true,
                                handled: false,
                                origin: None,
                            });
                            args.push(Slot::plain(SymVal::Ref(o)));
                            st.params.push(ParamBinding::Object { null, fields });
                            inits.push(c.clone());
                            next.push((st, args, inits));
                        }
                        _ => return Err(bad(format!("symbolic {} does not fit {}", t, dty))),
                    },
                }
            }
            states = next;
        }

        let mut ready = Vec::new();
        for (mut st, args, inits) in states {
            st.id = self.next_id;
            self.next_id += 1;
            self.stats.states += 1;
            if let Err(stop) = self.push_frame(&mut st, entry, args, OnReturn::Entry) {
                self.stop_at_bootstrap(st, stop)?;
                continue;
            }
            // Later parameters' initializers go deeper so the first runs first.
            let mut alive = true;
            for c in inits.iter().rev() {
                match self.init_class(&mut st, c, &MigNode::Driver) {
                    Ok(()) | Err(Stop::Yield) => {}
                    Err(stop) => {
                        self.stop_at_bootstrap(st.clone(), stop)?;
                        alive = false;
                        break;
                    }
                }
            }
            if alive {
                ready.push(st);
            }
        }
        for st in ready.into_iter().rev() {
            self.save(st);
        }
        Ok(())
    }

    fn stop_at_bootstrap(&mut self, st: SymState, stop: Stop) -> Result<(), ExploreError> {
        match stop {
            Stop::Trap(t) => self.finish_path(st, Some(t)),
            Stop::Fatal(e) => return Err(e),
            Stop::Dropped => self.stats.unsat_filtered += 1,
            Stop::Yield => unreachable!("handled by the caller"),
        }
        Ok(())
    }

    fn save(&mut self, st: SymState) {
        let audit = self.config.check_invariants.then(|| st.clone());
        self.work.push((st, audit));
    }

    /// State being executed, if any.
    pub fn current(&self) -> Option<&SymState> {
        self.current.as_ref()
    }

    pub fn stats(&self) -> &ExploreStats {
        &self.stats
    }

    fn has_work(&self) -> bool {
        self.current.is_some() || !self.work.is_empty()
    }

    /// Execute one instruction of the current state, first taking a state
    /// off the worklist if none is current. Returns whether work remains.
    pub fn step(&mut self) -> Result<bool, ExploreError> {
        let mut st = match self.current.take() {
            Some(s) => s,
            None => match self.work.pop() {
                None => return Ok(false),
                Some((s, audit)) => {
                    if audit.is_some_and(|a| a != s) {
                        self.stats
                            .invariant_violations
                            .push(format!("state {} changed while saved", s.id));
                    }
                    s
                }
            },
        };
        if st.steps >= self.config.budget.max_depth {
            self.report_exhausted(st);
            return Ok(self.has_work());
        }
        if !self.alive(&st) {
            self.stats.pruned += 1;
            return Ok(self.has_work());
        }
        st.steps += 1;
        self.stats.steps += 1;
        let (method, pc) = (st.frame().method, st.frame().pc);
        if self.config.target == Some(Location { method, pc }) {
            st.reached_target = true;
        }
        st.decisions.clear();
        let fi = st.frames.len() - 1;
        let before = st.migrations.len();
        let r = self.exec(&mut st);
        if self.config.check_invariants && st.migrations.len() != before {
            if let Err(e) = st.check_invariants(self.snapshot) {
                let at = format!("{}@{}", self.program.method_name(method), pc);
                self.stats
                    .invariant_violations
                    .push(format!("state {} at {}: {}", st.id, at, e));
            }
        }
        match r {
            Ok(()) if st.done => self.finish_path(st, None),
            Ok(()) => self.current = Some(st),
            Err(Stop::Yield) => {
                st.frames[fi].pending = st.decisions.drain(..).collect();
                self.current = Some(st);
            }
            Err(Stop::Trap(t)) => self.finish_path(st, Some(t)),
            Err(Stop::Dropped) => self.stats.unsat_filtered += 1,
            Err(Stop::Fatal(e)) => return Err(e),
        }
        Ok(self.has_work())
    }

    pub fn finish(mut self) -> Exploration {
        while let Some(st) = self.current.take().or_else(|| self.work.pop().map(|(s, _)| s)) {
            self.report_exhausted(st);
        }
        Exploration {
            reports: self.reports,
            stats: self.stats,
        }
    }

    /// Whether some continuation of the frame stack can still reach the
    /// target. Always true without a target or once it was reached.
    fn alive(&self, st: &SymState) -> bool {
        let Some(reach) = &self.reach else { return true };
        if st.reached_target {
            return true;
        }
        let top = st.frame();
        if reach.can_reach(top.method, top.pc) {
            return true;
        }
        for w in st.frames.windows(2).rev() {
            let (caller, callee) = (&w[0], &w[1]);
            let cont = match callee.on_return {
                OnReturn::Push(_) => caller.pc + 1,
                OnReturn::Retry | OnReturn::Entry => caller.pc,
            };
            if reach.can_reach(caller.method, cont) {
                return true;
            }
        }
        false
    }

    // ---- forking ----

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.config.seed,
            step_budget: self.config.budget.solver_steps,
        }
    }

    /// Forget the last decision once its outcome is stored in the heap: a
    /// re-executed instruction finds the stored outcome and must not
    /// consume the queued decision for it.
    pub(super) fn settle(st: &mut SymState) {
        st.decisions.pop();
    }

    /// Pick one of `arms` for this state and fork a clone for every other
    /// feasible arm. A re-executing clone consumes its queued decisions
    /// instead. Arms are only added to the path condition when more than
    /// one is feasible.
    pub(super) fn decide(&mut self, st: &mut SymState, arms: Vec<Formula>) -> R<usize> {
        if let Some(i) = st.frame_mut().pending.pop_front() {
            st.decisions.push(i);
            return Ok(i);
        }
        let mut feasible: Vec<(usize, Option<Model>)> = Vec::new();
        for (i, f) in arms.iter().enumerate() {
            match f {
                Formula::False => {}
                Formula::True => feasible.push((i, st.model.clone())),
                f => {
                    if let Some(m) = &st.model {
                        if eval_formula(f, m, &st.pc) == Ok(true) {
                            feasible.push((i, Some(m.clone())));
                            continue;
                        }
                    }
                    let mut pc = st.pc.clone();
                    pc.push(f.clone());
                    self.stats.solver_calls += 1;
                    match check_sat(&pc, &self.solver_config()) {
                        SatResult::Sat(m) => feasible.push((i, Some(m))),
                        SatResult::Unsat => {}
                        SatResult::Unknown => feasible.push((i, None)),
                    }
                }
            }
        }
        if feasible.is_empty() {
            return Err(Stop::Dropped);
        }
        if self.config.seed != 0 {
            for i in (1..feasible.len()).rev() {
                let j = (splitmix(&mut self.rng) % (i as u64 + 1)) as usize;
                feasible.swap(i, j);
            }
        }
        let multi = feasible.len() > 1;
        let (chosen, model) = feasible.remove(0);
        for (j, m) in feasible.into_iter().rev() {
            let mut c = st.clone();
            c.id = self.next_id;
            self.next_id += 1;
            if arms[j] != Formula::True {
                c.pc.push(arms[j].clone());
            }
            c.model = m;
            let mut queue: VecDeque<usize> = st.decisions.iter().copied().collect();
            queue.push_back(j);
            c.frame_mut().pending = queue;
            self.stats.states += 1;
            if self.stats.states > self.config.budget.max_states {
                self.report_exhausted(c);
            } else {
                self.save(c);
            }
        }
        if multi && arms[chosen] != Formula::True {
            st.pc.push(arms[chosen].clone());
        }
        st.model = model;
        st.decisions.push(chosen);
        Ok(chosen)
    }

    /// Concrete element index of `idx` into an array of length `len`; an
    /// out-of-range arm traps.
    fn index_arm(&mut self, st: &mut SymState, idx: &Arc<Term>, len: usize) -> R<usize> {
        if let Term::Const(i) = **idx {
            return match usize::try_from(i) {
                Ok(j) if j < len => Ok(j),
                _ => Err(Stop::Trap(Trap::OutOfBounds { index: i, len })),
            };
        }
        let mut arms: Vec<Formula> = (0..len)
            .map(|j| mk_cmp(CmpOp::Eq, idx, &Term::constant(j as i32)))
            .collect();
        arms.push(mk_or(vec![
            mk_cmp(CmpOp::Lt, idx, &Term::constant(0)),
            mk_cmp(CmpOp::Ge, idx, &Term::constant(len as i32)),
        ]));
        let k = self.decide(st, arms)?;
        if k == len {
            let index = st
                .model
                .as_ref()
                .and_then(|m| crate::solver::evaluate(idx, m, &st.pc).ok())
                .unwrap_or(-1);
            return Err(Stop::Trap(Trap::OutOfBounds { index, len }));
        }
        Ok(k)
    }

    // ---- terminal states ----

    fn solve(&mut self, pc: &PathCondition, cached: Option<&Model>) -> Option<Model> {
        if let Some(m) = cached {
            if pc.satisfied_by(m) == Ok(true) {
                return Some(m.clone());
            }
        }
        self.stats.solver_calls += 1;
        match check_sat(pc, &self.solver_config()) {
            SatResult::Sat(m) => Some(m),
            SatResult::Unsat => {
                self.stats.unsat_filtered += 1;
                None
            }
            SatResult::Unknown => {
                self.stats.unknown += 1;
                None
            }
        }
    }

    fn property_formula(&self, p: &Property, st: &SymState, trapped: bool) -> Formula {
        match p {
            Property::True => Formula::True,
            Property::False => Formula::False,
            Property::Return { op, value } => match (&st.ret, trapped) {
                (Some(Slot { val: SymVal::Int(t), .. }), false) => mk_cmp(*op, t, &Term::constant(*value)),
                _ => Formula::False,
            },
            Property::Static { class, field, op, value } => {
                let Ok((ci, si)) = self.program.resolve_static(class, field) else {
                    return Formula::False;
                };
                let owner = &self.program.classes[ci].name;
                let term = match st.statics.get(owner).map(|cells| &cells[si].val) {
                    Some(super::CellVal::Val(SymVal::Int(t))) => t.clone(),
                    Some(_) => return Formula::False,
                    None if self.config.mode == Mode::Seeded => {
                        match self.snapshot.class_statics(owner) {
                            Ok(Some(values)) => match values.get(field) {
                                Some(crate::snapshot::SnapValue::Int(i)) => Term::constant(*i),
                                Some(crate::snapshot::SnapValue::Bool(b)) => Term::constant(i32::from(*b)),
                                _ => return Formula::False,
                            },
                            _ => return Formula::False,
                        }
                    }
                    None => return Formula::False,
                };
                mk_cmp(*op, &term, &Term::constant(*value))
            }
        }
    }

    fn finish_path(&mut self, st: SymState, trap: Option<Trap>) {
        let trapped = trap.is_some();
        let status = match trap {
            Some(t) => PathStatus::Trapped(t.to_string()),
            None if st.reached_target => PathStatus::ReachedTarget,
            None => PathStatus::Returned,
        };
        let mut pc = st.pc.clone();
        if let Some(p) = &self.config.property {
            let f = self.property_formula(p, &st, trapped);
            pc = match pc.conjoin_property(f) {
                Ok(pc) => pc,
                Err(_) => {
                    self.stats.unsat_filtered += 1;
                    return;
                }
            };
        }
        let Some(model) = self.solve(&pc, st.model.as_ref()) else {
            return;
        };
        self.push_report(st, status, pc, Some(model));
    }

    fn report_exhausted(&mut self, st: SymState) {
        self.stats.budget_exhausted += 1;
        let pc = st.pc.clone();
        let model = st.model.clone();
        self.push_report(st, PathStatus::BudgetExhausted, pc, model);
    }

    fn push_report(&mut self, st: SymState, status: PathStatus, pc: PathCondition, model: Option<Model>) {
        let ret = match (&status, &st.ret) {
            (PathStatus::Returned | PathStatus::ReachedTarget, Some(Slot { val: SymVal::Int(t), .. })) => Some(t.clone()),
            _ => None,
        };
        self.stats.paths += 1;
        self.stats.max_virtual_fanout = self.stats.max_virtual_fanout.max(st.virtual_fanout);
        self.reports.push(PathReport {
            id: st.id,
            status,
            reached_target: st.reached_target,
            pc,
            model,
            trace: st.trace,
            migrations: st.migrations,
            inventory: st.inventory,
            accesses: st.accesses,
            origins: st.origins,
            params: st.params,
            ret,
            virtual_fanout: st.virtual_fanout,
            steps: st.steps,
        });
    }

    // ---- operand helpers ----

    fn peek(&self, st: &SymState, k: usize) -> R<Slot> {
        let s = &st.frame().stack;
        if k >= s.len() {
            return Err(type_trap("operand stack underflow".into()));
        }
        Ok(s[s.len() - 1 - k].clone())
    }

    /// The top `n` operands, bottom first.
    fn peek_n(&self, st: &SymState, n: usize) -> R<Vec<Slot>> {
        let s = &st.frame().stack;
        if n > s.len() {
            return Err(type_trap("operand stack underflow".into()));
        }
        Ok(s[s.len() - n..].to_vec())
    }

    fn pop_n(st: &mut SymState, n: usize) {
        let s = &mut st.frame_mut().stack;
        let len = s.len();
        s.truncate(len - n);
    }

    fn push(st: &mut SymState, s: Slot) {
        st.frame_mut().stack.push(s);
    }

    fn next(st: &mut SymState) {
        st.frame_mut().pc += 1;
    }

    /// Integer view of a value; an untyped ucse value becomes a boxed int.
    fn as_int(&mut self, st: &mut SymState, v: &SymVal) -> R<Arc<Term>> {
        match v {
            SymVal::Int(t) => Ok(t.clone()),
            SymVal::Ref(r) => match st.obj(*r) {
                Some(SymObj::Boxed(t)) => Ok(t.clone()),
                Some(SymObj::Untyped { .. }) => {
                    let name = format!("lazy#{}", st.next_fresh());
                    let v = self.new_var(st, name, Sort::int(), VarOrigin::Internal);
                    let t = Term::var(v);
                    *st.obj_mut(*r).unwrap() = SymObj::Boxed(t.clone());
                    Ok(t)
                }
                _ => Err(type_trap("expected an int, got a reference".into())),
            },
        }
    }

    /// Fork an untyped ucse value on its null-ness. Returns whether it is
    /// null; the non-null arm leaves it untyped for the caller to refine.
    fn untyped_null(&mut self, st: &mut SymState, r: SymId) -> R<bool> {
        let Some(SymObj::Untyped { null }) = st.obj(r) else {
            return Ok(false);
        };
        let null = *null;
        let arm = self.decide(
            st,
            vec![Formula::IsNull(null), Formula::Not(Arc::new(Formula::IsNull(null)))],
        )?;
        if arm == 0 {
            *st.obj_mut(r).unwrap() = SymObj::Null;
        }
        // The non-null arm is refined by the caller before any other decision.
        Self::settle(st);
        Ok(arm == 0)
    }

    /// Object behind a reference. `class` refines an untyped value; without
    /// it an untyped value is a type error.
    fn deref_object(&mut self, st: &mut SymState, v: &SymVal, class: Option<&str>) -> R<SymId> {
        let SymVal::Ref(r) = *v else {
            return Err(type_trap("expected a reference, got an int".into()));
        };
        match st.obj(r) {
            None | Some(SymObj::Null) => Err(Stop::Trap(Trap::NullDeref)),
            Some(SymObj::Object { .. }) => Ok(r),
            Some(SymObj::Untyped { .. }) => {
                let Some(class) = class else {
                    return Err(type_trap(format!("{} has no known class", r)));
                };
                if self.untyped_null(st, r)? {
                    return Err(Stop::Trap(Trap::NullDeref));
                }
                let exact = self.program.subclasses_of(class).count() == 1;
                *st.obj_mut(r).unwrap() = self.lazy_object(class, exact);
                Ok(r)
            }
            Some(_) => Err(type_trap(format!("{} is not an object", r))),
        }
    }

    fn deref_array(&self, st: &SymState, v: &SymVal) -> R<SymId> {
        let SymVal::Ref(r) = *v else {
            return Err(type_trap("expected a reference, got an int".into()));
        };
        match st.obj(r) {
            None | Some(SymObj::Null) => Err(Stop::Trap(Trap::NullDeref)),
            Some(SymObj::Array { .. }) => Ok(r),
            Some(_) => Err(type_trap(format!("{} is not an array", r))),
        }
    }

    fn array_len(st: &SymState, a: SymId) -> usize {
        st.obj(a).map_or(0, |o| o.cells().len())
    }

    fn class_of(st: &SymState, r: SymId) -> Option<&str> {
        match st.obj(r) {
            Some(SymObj::Object { class, .. }) => Some(class),
            _ => None,
        }
    }

    /// Field of an object by name on its runtime class; absent fields trap.
    fn named_field(&mut self, st: &mut SymState, v: &SymVal, name: &str) -> R<Slot> {
        let r = self.deref_object(st, v, None)?;
        let class = Self::class_of(st, r).unwrap_or_default().to_string();
        let i = self.program.field_index(&class, name).map_err(lookup_trap)?;
        let parent = node_of(st, r);
        self.read_cell(st, &CellLoc::Field(r, i), &parent, Trigger::GetField)
    }

    /// Collection field read the way the builtins do it: missing reads as null.
    fn coll_field(&mut self, st: &mut SymState, r: SymId, name: &str) -> R<(Option<usize>, Slot)> {
        let class = Self::class_of(st, r).unwrap_or_default().to_string();
        let Ok(i) = self.program.field_index(&class, name) else {
            return Ok((None, Slot::plain(SymVal::NULL)));
        };
        let parent = node_of(st, r);
        let s = self.read_cell(st, &CellLoc::Field(r, i), &parent, Trigger::GetField)?;
        Ok((Some(i), s))
    }

    /// String term of a reference; an untyped ucse value becomes a fresh
    /// string once its null-ness is decided. `None` means null.
    fn str_or_null(&mut self, st: &mut SymState, v: &SymVal) -> R<Option<StrTerm>> {
        let SymVal::Ref(r) = *v else {
            return Err(type_trap("expected a reference, got an int".into()));
        };
        match st.obj(r) {
            None | Some(SymObj::Null) => Ok(None),
            Some(SymObj::Str { val, .. }) => Ok(Some(val.clone())),
            Some(SymObj::Untyped { .. }) => {
                if self.untyped_null(st, r)? {
                    return Ok(None);
                }
                let name = format!("lazy#{}", st.next_fresh());
                let v = self.new_var(st, name, Sort::Str, VarOrigin::Internal);
                *st.obj_mut(r).unwrap() = SymObj::Str {
                    val: StrTerm::Var(v),
                    origin: None,
                };
                Ok(Some(StrTerm::Var(v)))
            }
            Some(_) => Err(type_trap(format!("{} is not a string", r))),
        }
    }

    fn str_of(&mut self, st: &mut SymState, v: &SymVal) -> R<StrTerm> {
        self.str_or_null(st, v)?.ok_or(Stop::Trap(Trap::NullDeref))
    }

    /// Identity comparison of two values as a formula. Distinct string
    /// objects compare by text since equal literals are pooled.
    fn val_eq(&mut self, st: &mut SymState, a: &SymVal, b: &SymVal) -> R<Formula> {
        let norm = |st: &SymState, v: &SymVal| match v {
            SymVal::Ref(r) if matches!(st.obj(*r), Some(SymObj::Null)) => SymVal::NULL,
            v => v.clone(),
        };
        let (a, b) = (norm(st, a), norm(st, b));
        match (&a, &b) {
            (SymVal::Int(x), SymVal::Int(y)) => Ok(mk_cmp(CmpOp::Eq, x, y)),
            (SymVal::Ref(x), SymVal::Ref(y)) if x == y => Ok(Formula::True),
            (SymVal::Ref(x), SymVal::Ref(y)) => match (st.obj(*x), st.obj(*y)) {
                (None, Some(SymObj::Untyped { null })) | (Some(SymObj::Untyped { null }), None) => {
                    Ok(Formula::IsNull(*null))
                }
                (Some(SymObj::Str { val: p, .. }), Some(SymObj::Str { val: q, .. })) => Ok(str_eq(p, q)),
                (Some(SymObj::Str { val, .. }), Some(SymObj::Untyped { .. })) => {
                    let p = val.clone();
                    let q = self.untyped_as_str(st, *y);
                    Ok(str_eq(&p, &q))
                }
                (Some(SymObj::Untyped { .. }), Some(SymObj::Str { val, .. })) => {
                    let q = val.clone();
                    let p = self.untyped_as_str(st, *x);
                    Ok(str_eq(&p, &q))
                }
                _ => Ok(Formula::False),
            },
            (SymVal::Int(t), SymVal::Ref(r)) | (SymVal::Ref(r), SymVal::Int(t)) => match st.obj(*r) {
                Some(SymObj::Untyped { .. } | SymObj::Boxed(_)) => {
                    let u = self.as_int(st, &SymVal::Ref(*r))?;
                    Ok(mk_cmp(CmpOp::Eq, t, &u))
                }
                _ => Ok(Formula::False),
            },
        }
    }

    /// Refine an untyped value compared against a string into a non-null
    /// string variable.
    fn untyped_as_str(&mut self, st: &mut SymState, r: SymId) -> StrTerm {
        let name = format!("lazy#{}", st.next_fresh());
        let v = self.new_var(st, name, Sort::Str, VarOrigin::Internal);
        *st.obj_mut(r).unwrap() = SymObj::Str {
            val: StrTerm::Var(v),
            origin: None,
        };
        StrTerm::Var(v)
    }

    /// First position whose key equals `key`, forking over the candidates.
    fn find_key(&mut self, st: &mut SymState, keys: &SymVal, key: &SymVal) -> R<Option<usize>> {
        if *keys == SymVal::NULL {
            return Ok(None);
        }
        let ka = self.deref_array(st, keys)?;
        let parent = node_of(st, ka);
        let mut eqs = Vec::new();
        for j in 0..Self::array_len(st, ka) {
            let kj = self.read_cell(st, &CellLoc::Elem(ka, j), &parent, Trigger::AaLoad)?;
            let eq = self.val_eq(st, &kj.val, key)?;
            let decided = eqs.iter().all(|e| *e == Formula::False);
            if eq == Formula::True && decided {
                return Ok(Some(j));
            }
            eqs.push(eq);
        }
        if eqs.iter().all(|e| *e == Formula::False) {
            return Ok(None);
        }
        let mut arms = Vec::with_capacity(eqs.len() + 1);
        for j in 0..=eqs.len() {
            let mut parts: Vec<Formula> = eqs[..j].iter().map(Formula::negate).collect();
            if let Some(e) = eqs.get(j) {
                parts.push(e.clone());
            }
            arms.push(mk_and(parts));
        }
        let k = self.decide(st, arms)?;
        Ok((k < eqs.len()).then_some(k))
    }

    fn access_key(st: &SymState, v: &SymVal) -> AccessKey {
        match v {
            SymVal::Int(t) => match **t {
                Term::Const(c) => AccessKey::Int(c),
                _ => AccessKey::Symbolic,
            },
            SymVal::Ref(r) => match st.str_term(*r) {
                Some(StrTerm::Lit(s)) => AccessKey::Str(s.clone()),
                _ => AccessKey::Symbolic,
            },
        }
    }

    /// Record a container read and, when its index or key carries the
    /// matching label, turn the element into symbolic inputs. Must run
    /// after the instruction's last fork.
    #[allow(clippy::too_many_arguments)]
    fn sink(
        &mut self,
        st: &mut SymState,
        access: Access,
        container: SymId,
        key_slot: &Slot,
        key: AccessKey,
        loc: Option<CellLoc>,
        elem: Slot,
    ) -> R<Slot> {
        if self.config.mode == Mode::Ucse {
            return Ok(elem);
        }
        let want = match access {
            Access::MapGet => taint::TaintKind::PackageSource,
            _ => taint::TaintKind::UidSource,
        };
        let label = key_slot.taint.clone().filter(|l| l.kind == want);
        let f = st.frame();
        let site = format!("{}@{}", self.program.method_name(f.method), f.pc);
        let container_conc = st.obj(container).and_then(SymObj::origin);
        let element = match elem.val {
            SymVal::Ref(r) => st.obj(r).and_then(SymObj::origin),
            SymVal::Int(_) => None,
        };
        st.accesses.push(AccessRecord {
            site: site.clone(),
            access,
            container: container_conc,
            key: key.clone(),
            element,
            taint: key_slot.taint.as_ref().map(|l| l.kind),
            fired: label.is_some(),
        });
        let Some(label) = label else {
            return Ok(elem);
        };
        let entry = st.inventory.len();
        st.inventory.push(InventoryEntry {
            site,
            access,
            container: container_conc,
            key,
            element,
            derivation: label.to_string(),
            vars: Vec::new(),
        });
        let Some(loc) = loc else {
            return Ok(elem);
        };
        let CellLoc::Elem(arr, j) = loc else {
            unreachable!("sinks read array elements")
        };
        match &elem.val {
            SymVal::Int(t) => {
                if let Term::Var(v) = **t {
                    st.inventory[entry].vars.push(v);
                    return Ok(elem);
                }
                let ty = match st.obj(arr) {
                    Some(SymObj::Array { elem, .. }) => elem.clone(),
                    _ => Type::Any,
                };
                let (name, origin) = elem_var(st, arr, j, None);
                self.symbolize_slot(st, &loc, &ty, name, origin, entry, None)?;
            }
            SymVal::Ref(0) => return Ok(elem),
            SymVal::Ref(r) => match st.obj(*r) {
                Some(SymObj::Str { val: StrTerm::Lit(_), .. }) => {
                    let (name, origin) = elem_var(st, arr, j, None);
                    self.symbolize_slot(st, &loc, &Type::Str, name, origin, entry, None)?;
                }
                Some(SymObj::Object { .. } | SymObj::Array { .. }) => {
                    self.symbolize(st, *r, entry, None)?;
                    return Ok(elem);
                }
                _ => return Ok(elem),
            },
        }
        let super::CellVal::Val(v) = self.cell(st, &loc).val.clone() else {
            unreachable!("symbolized slot holds a value")
        };
        Ok(Slot { val: v, taint: elem.taint })
    }

    // ---- instructions ----

    fn branch(&mut self, st: &mut SymState, cond: Formula, target: usize, pops: usize) -> R<()> {
        let taken = match cond {
            Formula::True => true,
            Formula::False => false,
            f => {
                let neg = f.negate();
                self.decide(st, vec![f, neg])? == 0
            }
        };
        Self::pop_n(st, pops);
        let f = st.frame_mut();
        let method = f.method;
        let pc = f.pc;
        f.pc = if taken { target } else { pc + 1 };
        st.trace.push(crate::concrete::BranchEvent {
            method: self.program.method_name(method),
            pc,
            taken,
        });
        Ok(())
    }

    fn class_node(&self, st: &SymState) -> MigNode {
        MigNode::Class {
            name: self.program.classes[st.frame().method.class].name.clone(),
        }
    }

    fn exec(&mut self, st: &mut SymState) -> R<()> {
        let program = self.program;
        let (mid, pc) = (st.frame().method, st.frame().pc);
        let insn = program
            .method(mid)
            .body
            .get(pc)
            .ok_or_else(|| type_trap(format!("pc {} out of range", pc)))?;
        match insn {
            Insn::Const(lit) => {
                let v = match lit {
                    Literal::Int(i) => SymVal::int(*i),
                    Literal::Bool(b) => SymVal::int(i32::from(*b)),
                    Literal::Null => SymVal::NULL,
                    Literal::Str(s) => SymVal::Ref(st.pooled(s)),
                };
                Self::push(st, Slot::plain(v));
            }
            Insn::Load(s) => {
                let v = st.frame().locals[*s as usize].clone();
                Self::push(st, v);
            }
            Insn::Store(s) => {
                let v = self.peek(st, 0)?;
                Self::pop_n(st, 1);
                st.frame_mut().locals[*s as usize] = v;
            }
            Insn::Dup => {
                let v = self.peek(st, 0)?;
                Self::push(st, v);
            }
            Insn::Pop => {
                self.peek(st, 0)?;
                Self::pop_n(st, 1);
            }
            Insn::Arith(op) => {
                let (bs, as_) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let b = self.as_int(st, &bs.val)?;
                let a = self.as_int(st, &as_.val)?;
                if matches!(op, ArithOp::Div | ArithOp::Mod) {
                    match *b {
                        Term::Const(0) => return Err(Stop::Trap(Trap::DivByZero)),
                        Term::Const(_) => {}
                        _ => {
                            let zero = mk_cmp(CmpOp::Eq, &b, &Term::constant(0));
                            if self.decide(st, vec![zero.clone(), zero.negate()])? == 0 {
                                return Err(Stop::Trap(Trap::DivByZero));
                            }
                        }
                    }
                }
                let (t, result) = match (&*a, &*b) {
                    (Term::Const(x), Term::Const(y)) => {
                        let r = op.apply(*x, *y);
                        (Term::constant(r), Some(r))
                    }
                    _ => (Term::bin(*op, a.clone(), b.clone()), None),
                };
                let konst = |t: &Arc<Term>| match **t {
                    Term::Const(c) => Some(c),
                    _ => None,
                };
                let other = if as_.taint.is_some() { konst(&b) } else { konst(&a) };
                let taint = taint::apply(TaintOp::Arith(*op), as_.taint.as_ref(), bs.taint.as_ref(), other, result);
                Self::pop_n(st, 2);
                Self::push(st, Slot { val: SymVal::Int(t), taint });
            }
            Insn::If(c, t) => {
                let a = self.peek(st, 0)?;
                let a = self.as_int(st, &a.val)?;
                let cond = mk_cmp(*c, &a, &Term::constant(0));
                return self.branch(st, cond, *t, 1);
            }
            Insn::IfICmp(c, t) => {
                let (b, a) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let b = self.as_int(st, &b.val)?;
                let a = self.as_int(st, &a.val)?;
                return self.branch(st, mk_cmp(*c, &a, &b), *t, 2);
            }
            Insn::IfNull(is_null, t) => {
                let v = self.peek(st, 0)?;
                let SymVal::Ref(r) = v.val else {
                    return Err(type_trap("ifnull on a primitive".into()));
                };
                let null = match st.obj(r) {
                    None | Some(SymObj::Null) => Formula::True,
                    Some(SymObj::Untyped { null }) => Formula::IsNull(*null),
                    Some(_) => Formula::False,
                };
                let taken_if_null = if *is_null { null.clone() } else { null.negate() };
                self.branch(st, taken_if_null, *t, 1)?;
                // The null arm of an untyped value pins it to null.
                if let (Formula::IsNull(_), Some(SymObj::Untyped { .. })) = (&null, st.obj(r)) {
                    let went_null = st.trace.last().is_some_and(|e| e.taken == *is_null);
                    if went_null {
                        *st.obj_mut(r).unwrap() = SymObj::Null;
                    }
                }
                return Ok(());
            }
            Insn::IfACmp(eq, t) => {
                let (b, a) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let f = self.val_eq(st, &a.val, &b.val)?;
                let cond = if *eq { f } else { f.negate() };
                return self.branch(st, cond, *t, 2);
            }
            Insn::Goto(t) => {
                st.frame_mut().pc = *t;
                return Ok(());
            }
            Insn::New(c) => {
                let node = self.class_node(st);
                self.init_class(st, c, &node)?;
                let layout = program.layout(c).ok_or_else(|| type_trap(format!("unknown class `{}`", c)))?;
                let fields = layout.fields.iter().map(|(_, t, _)| Cell::val(SymVal::default_for(t))).collect();
                let r = st.alloc(SymObj::Object {
                    class: c.clone(),
                    fields,
                    exact: true,
                    handled: false,
                    origin: None,
                });
                Self::push(st, Slot::plain(SymVal::Ref(r)));
            }
            Insn::GetField(f) => {
                let o = self.peek(st, 0)?;
                let r = self.deref_object(st, &o.val, Some(&f.class))?;
                let i = program.field_index(&f.class, &f.name).map_err(lookup_trap)?;
                if i >= Self::array_len(st, r) {
                    return Err(type_trap(format!("{} has no field {}", r, f)));
                }
                let parent = node_of(st, r);
                let s = self.read_cell(st, &CellLoc::Field(r, i), &parent, Trigger::GetField)?;
                Self::pop_n(st, 1);
                Self::push(st, s);
            }
            Insn::PutField(f) => {
                let (v, o) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let r = self.deref_object(st, &o.val, Some(&f.class))?;
                let i = program.field_index(&f.class, &f.name).map_err(lookup_trap)?;
                if i >= Self::array_len(st, r) {
                    return Err(type_trap(format!("{} has no field {}", r, f)));
                }
                self.write_cell(st, &CellLoc::Field(r, i), v);
                Self::pop_n(st, 2);
            }
            Insn::GetStatic(f) | Insn::PutStatic(f) => {
                let (ci, si) = program.resolve_static(&f.class, &f.name).map_err(lookup_trap)?;
                let owner = program.classes[ci].name.clone();
                let node = self.class_node(st);
                self.init_class(st, &owner, &node)?;
                let loc = CellLoc::Static(owner.clone(), si);
                if matches!(insn, Insn::GetStatic(_)) {
                    let s = self.read_cell(st, &loc, &MigNode::Class { name: owner }, Trigger::GetStatic)?;
                    Self::push(st, s);
                } else {
                    let v = self.peek(st, 0)?;
                    self.write_cell(st, &loc, v);
                    Self::pop_n(st, 1);
                }
            }
            Insn::NewArray(t) => {
                let n = self.peek(st, 0)?;
                let n = match n.val.as_const() {
                    Some(n) => n,
                    None => return Err(type_trap("array size is symbolic".into())),
                };
                if n < 0 {
                    return Err(Stop::Trap(Trap::NegativeSize(n)));
                }
                let r = st.alloc(SymObj::Array {
                    elem: t.clone(),
                    elems: vec![Cell::val(SymVal::default_for(t)); n as usize],
                    handled: false,
                    origin: None,
                });
                Self::pop_n(st, 1);
                Self::push(st, Slot::plain(SymVal::Ref(r)));
            }
            Insn::AaLoad | Insn::IaLoad => {
                let (idx, a) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let arr = self.deref_array(st, &a.val)?;
                let it = self.as_int(st, &idx.val)?;
                let j = self.index_arm(st, &it, Self::array_len(st, arr))?;
                let parent = node_of(st, arr);
                let loc = CellLoc::Elem(arr, j);
                let s = self.read_cell(st, &loc, &parent, Trigger::AaLoad)?;
                let access = if matches!(insn, Insn::AaLoad) { Access::AaLoad } else { Access::IaLoad };
                let s = self.sink(st, access, arr, &idx, AccessKey::Index(j as i32), Some(loc), s)?;
                Self::pop_n(st, 2);
                Self::push(st, s);
            }
            Insn::AaStore | Insn::IaStore => {
                let (v, idx, a) = (self.peek(st, 0)?, self.peek(st, 1)?, self.peek(st, 2)?);
                let arr = self.deref_array(st, &a.val)?;
                let it = self.as_int(st, &idx.val)?;
                let j = self.index_arm(st, &it, Self::array_len(st, arr))?;
                self.write_cell(st, &CellLoc::Elem(arr, j), v);
                Self::pop_n(st, 3);
            }
            Insn::ArrayLength => {
                let a = self.peek(st, 0)?;
                let arr = self.deref_array(st, &a.val)?;
                let n = Self::array_len(st, arr) as i32;
                Self::pop_n(st, 1);
                Self::push(st, Slot::plain(SymVal::int(n)));
            }
            Insn::InvokeVirtual(mr) | Insn::InvokeSpecial(mr) => {
                let target = program.resolve_dispatch(&mr.class, &mr.name).map_err(lookup_trap)?;
                let declared = program.method(target);
                let n = declared.arg_count();
                let args = self.peek_n(st, n)?;
                let recv = self.deref_object(st, &args[0].val, Some(&mr.class))?;
                let (callee, args) = if matches!(insn, Insn::InvokeSpecial(_)) {
                    (target, args)
                } else {
                    let class = self.exact_class(st, recv, &mr.name)?;
                    self.dispatch(st, &class, &mr.name, args)?
                };
                Self::pop_n(st, n);
                return self.push_frame(st, callee, args, OnReturn::Push(declared.ret.clone()));
            }
            Insn::InvokeStatic(mr) => {
                let q = mr.to_string();
                if let Some(decl) = program.extern_decl(&q) {
                    return self.call_extern(st, decl);
                }
                let target = program.resolve_dispatch(&mr.class, &mr.name).map_err(lookup_trap)?;
                let node = self.class_node(st);
                self.init_class(st, &program.classes[target.class].name, &node)?;
                let declared = program.method(target);
                let n = declared.arg_count();
                let args = self.peek_n(st, n)?;
                Self::pop_n(st, n);
                return self.push_frame(st, target, args, OnReturn::Push(declared.ret.clone()));
            }
            Insn::InvokeIntrinsic(i) => self.intrinsic(st, *i)?,
            Insn::Return => {
                let m = program.method(mid);
                let val = if m.returns_value() {
                    let v = self.peek(st, 0)?;
                    Some(v)
                } else {
                    None
                };
                let frame = st.frames.pop().expect("live frame");
                match frame.on_return {
                    OnReturn::Entry => {
                        st.ret = val;
                        st.done = true;
                    }
                    OnReturn::Push(ty) => {
                        Self::next(st);
                        if ty != Type::Void {
                            let v = val.unwrap_or_else(|| Slot::plain(SymVal::default_for(&ty)));
                            Self::push(st, v);
                        }
                    }
                    OnReturn::Retry => {}
                }
                return Ok(());
            }
            Insn::SConcat => {
                let (b, a) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let sa = self.str_of(st, &a.val)?;
                let sb = self.str_of(st, &b.val)?;
                let r = match (sa, sb) {
                    (StrTerm::Lit(x), StrTerm::Lit(y)) => st.pooled(&format!("{}{}", x, y)),
                    // Concatenations with a symbolic side are fresh atoms.
                    _ => {
                        let name = format!("concat#{}", st.next_fresh());
                        let v = self.new_var(st, name, Sort::Str, VarOrigin::Internal);
                        st.alloc(SymObj::Str {
                            val: StrTerm::Var(v),
                            origin: None,
                        })
                    }
                };
                let taint = taint::apply(TaintOp::SConcat, a.taint.as_ref(), b.taint.as_ref(), None, None);
                Self::pop_n(st, 2);
                Self::push(st, Slot { val: SymVal::Ref(r), taint });
            }
            Insn::SEquals => {
                let (b, a) = (self.peek(st, 0)?, self.peek(st, 1)?);
                let sa = self.str_of(st, &a.val)?;
                let same = a.val == b.val;
                let f = match self.str_or_null(st, &b.val) {
                    _ if same => Formula::True,
                    Ok(None) => Formula::False,
                    Ok(Some(sb)) => str_eq(&sa, &sb),
                    // A non-string object is never equal.
                    Err(Stop::Trap(Trap::Type(_))) => Formula::False,
                    Err(e) => return Err(e),
                };
                let t = match f {
                    Formula::True => Term::constant(1),
                    Formula::False => Term::constant(0),
                    f => Arc::new(Term::Bool(Arc::new(f))),
                };
                Self::pop_n(st, 2);
                Self::push(st, Slot::plain(SymVal::Int(t)));
            }
            Insn::Throw => {
                let v = self.peek(st, 0)?;
                let SymVal::Ref(r) = v.val else {
                    return Err(type_trap("expected a reference, got an int".into()));
                };
                if matches!(st.obj(r), None | Some(SymObj::Null)) {
                    return Err(Stop::Trap(Trap::NullDeref));
                }
                let class = Self::class_of(st, r).unwrap_or("?").to_string();
                return Err(Stop::Trap(Trap::Thrown(class)));
            }
        }
        Self::next(st);
        Ok(())
    }

    /// Runtime class of a receiver. A ucse receiver of unknown subtype
    /// forks over every subclass that has the method.
    fn exact_class(&mut self, st: &mut SymState, recv: SymId, method: &str) -> R<String> {
        let Some(SymObj::Object { class, exact, .. }) = st.obj(recv) else {
            return Err(type_trap(format!("{} is not an object", recv)));
        };
        let class = class.clone();
        if *exact {
            st.virtual_fanout = st.virtual_fanout.max(1);
            return Ok(class);
        }
        let program = self.program;
        let cands: Vec<String> = program
            .subclasses_of(&class)
            .filter(|c| program.resolve_dispatch(&c.name, method).is_ok())
            .map(|c| c.name.clone())
            .collect();
        if cands.is_empty() {
            return Err(type_trap(format!("no `{}` below `{}`", method, class)));
        }
        st.virtual_fanout = st.virtual_fanout.max(cands.len());
        let k = if cands.len() == 1 {
            0
        } else {
            let k = self.decide(st, vec![Formula::True; cands.len()])?;
            Self::settle(st);
            k
        };
        let chosen = cands[k].clone();
        let n = program.layout(&chosen).map_or(0, |l| l.fields.len());
        if let Some(SymObj::Object { class, fields, exact, .. }) = st.obj_mut(recv) {
            *class = chosen.clone();
            *exact = true;
            fields.resize(n, Cell::lazy());
        }
        Ok(chosen)
    }

    /// Target of a virtual call on `class`, with message sends to handlers
    /// and state machines rewritten into direct calls.
    fn dispatch(&mut self, st: &mut SymState, class: &str, name: &str, args: Vec<Slot>) -> R<(MethodId, Vec<Slot>)> {
        let program = self.program;
        if name == "sendMessage" && args.len() == 2 {
            if program.is_handler_class(class) {
                let t = program.resolve_dispatch(class, "handleMessage").map_err(lookup_trap)?;
                return Ok((t, args));
            }
            if program.is_statemachine_class(class) {
                let h = self.named_field(st, &args[0].val, "mSmHandler")?;
                let stack = self.named_field(st, &h.val, "mStateStack")?;
                let top = self.named_field(st, &h.val, "mStateStackTopIndex")?;
                let top = self.as_int(st, &top.val)?;
                let arr = self.deref_array(st, &stack.val)?;
                let j = self.index_arm(st, &top, Self::array_len(st, arr))?;
                let parent = node_of(st, arr);
                let entry = self.read_cell(st, &CellLoc::Elem(arr, j), &parent, Trigger::AaLoad)?;
                let state = self.named_field(st, &entry.val, "state")?;
                let sid = self.deref_object(st, &state.val, None)?;
                let sclass = Self::class_of(st, sid).unwrap_or_default().to_string();
                let t = program.resolve_dispatch(&sclass, "processMessage").map_err(lookup_trap)?;
                return Ok((t, vec![Slot::plain(SymVal::Ref(sid)), args[1].clone()]));
            }
        }
        let t = program.resolve_dispatch(class, name).map_err(lookup_trap)?;
        Ok((t, args))
    }

    fn call_extern(&mut self, st: &mut SymState, decl: &ExternDecl) -> R<()> {
        let n = decl.params.len();
        let args = self.peek_n(st, n)?;
        let seeded = self.config.mode == Mode::Seeded;
        let out = match decl.policy {
            ExternPolicy::Ignore => None,
            ExternPolicy::ModelUid if seeded => {
                let uid = self.header.skeleton_uid;
                Some(Slot {
                    val: SymVal::int(uid),
                    taint: Some(TaintLabel::uid_source(uid)),
                })
            }
            ExternPolicy::ModelPackage if seeded => {
                let p = st.pooled(&self.header.skeleton_package.clone());
                Some(Slot {
                    val: SymVal::Ref(p),
                    taint: Some(TaintLabel::package_source()),
                })
            }
            ExternPolicy::ModelUid | ExternPolicy::ModelPackage => {
                let name = format!("{}#{}", decl.name, st.next_fresh());
                Some(Slot::plain(self.fresh_value(st, &decl.ret, name, VarOrigin::Internal)))
            }
            ExternPolicy::SymbolicReturn => {
                let k = st.extern_calls.entry(decl.name.clone()).or_insert(0);
                let name = extern_var_name(&decl.name, *k);
                let origin = VarOrigin::Extern {
                    name: decl.name.clone(),
                    k: *k,
                };
                *k += 1;
                Some(Slot::plain(self.fresh_value(st, &decl.ret, name, origin)))
            }
            ExternPolicy::Delegate => {
                let mut hargs = Vec::with_capacity(n);
                for (t, a) in decl.params.iter().zip(&args) {
                    hargs.push(match &a.val {
                        SymVal::Int(v) => match (**v).clone() {
                            Term::Const(c) if *t == Type::Bool => HostValue::Bool(c != 0),
                            Term::Const(c) => HostValue::Int(c),
                            _ => return Err(type_trap(format!("symbolic argument to `{}`", decl.name))),
                        },
                        SymVal::Ref(r) => match st.obj(*r) {
                            Some(SymObj::Str { val: StrTerm::Lit(s), .. }) => HostValue::Str(s.clone()),
                            Some(SymObj::Str { .. } | SymObj::Untyped { .. } | SymObj::Boxed(_)) => {
                                return Err(type_trap(format!("symbolic argument to `{}`", decl.name)))
                            }
                            _ => HostValue::Null,
                        },
                    });
                }
                let reply = self.host.call(&decl.name, &hargs).map_err(|e| Stop::Trap(Trap::Host(e)))?;
                let mismatch = |detail: String| {
                    Stop::Trap(Trap::Host(HostError::TypeMismatch {
                        name: decl.name.clone(),
                        detail,
                    }))
                };
                Some(Slot::plain(match (&decl.ret, reply) {
                    (Type::Void, _) => SymVal::int(0),
                    (Type::Int(_), HostValue::Int(i)) => SymVal::int(i),
                    (Type::Bool, HostValue::Bool(b)) => SymVal::int(i32::from(b)),
                    (Type::Str, HostValue::Str(s)) => SymVal::Ref(st.pooled(&s)),
                    (t, HostValue::Null) if t.is_reference() => SymVal::NULL,
                    (t, r) => return Err(mismatch(format!("expected {}, got {:?}", t, r))),
                }))
            }
        };
        Self::pop_n(st, n);
        if decl.ret != Type::Void {
            if let Some(v) = out {
                Self::push(st, v);
            }
        }
        Self::next(st);
        Ok(())
    }

    /// Fresh symbolic value of type `t`. References other than strings are
    /// null, with a null-ness variable standing for them.
    fn fresh_value(&mut self, st: &mut SymState, t: &Type, name: String, origin: VarOrigin) -> SymVal {
        match t {
            Type::Void => SymVal::int(0),
            Type::Int(_) | Type::Bool => SymVal::Int(Term::var(self.new_var(st, name, sort_of(t), origin))),
            Type::Str => {
                let v = self.new_var(st, name, Sort::Str, origin);
                SymVal::Ref(st.alloc(SymObj::Str {
                    val: StrTerm::Var(v),
                    origin: None,
                }))
            }
            _ => {
                self.new_var(st, name, Sort::Ref, origin);
                SymVal::NULL
            }
        }
    }

    fn intrinsic(&mut self, st: &mut SymState, which: Intrinsic) -> R<()> {
        if which.is_sys() {
            return Err(Stop::Trap(Trap::InitOnly(which.name())));
        }
        let (pops, _) = which.stack_effect();
        let a = self.peek_n(st, pops)?;
        let null_len = |idx: &Arc<Term>| Trap::OutOfBounds {
            index: match **idx {
                Term::Const(c) => c,
                _ => 0,
            },
            len: 0,
        };
        let result: Option<Slot> = match which {
            Intrinsic::ListGet | Intrinsic::ListSet => {
                let lst = self.deref_object(st, &a[0].val, Some(LIST_CLASS))?;
                let (_, data) = self.coll_field(st, lst, "data")?;
                let it = self.as_int(st, &a[1].val)?;
                if data.val == SymVal::NULL {
                    return Err(Stop::Trap(null_len(&it)));
                }
                let arr = self.deref_array(st, &data.val)?;
                let j = self.index_arm(st, &it, Self::array_len(st, arr))?;
                let loc = CellLoc::Elem(arr, j);
                if which == Intrinsic::ListSet {
                    self.write_cell(st, &loc, a[2].clone());
                    None
                } else {
                    let parent = node_of(st, arr);
                    let s = self.read_cell(st, &loc, &parent, Trigger::AaLoad)?;
                    Some(self.sink(st, Access::ListGet, lst, &a[1], AccessKey::Index(j as i32), Some(loc), s)?)
                }
            }
            Intrinsic::ListAdd => {
                let lst = self.deref_object(st, &a[0].val, Some(LIST_CLASS))?;
                let (fi, data) = self.coll_field(st, lst, "data")?;
                let fi = fi.ok_or_else(|| type_trap("list has no `data` field".into()))?;
                let grown = self.grow(st, &data.val, Type::Any, a[1].clone())?;
                self.write_cell(st, &CellLoc::Field(lst, fi), Slot::plain(grown));
                None
            }
            Intrinsic::ListLen => {
                let lst = self.deref_object(st, &a[0].val, Some(LIST_CLASS))?;
                let (_, data) = self.coll_field(st, lst, "data")?;
                let n = if data.val == SymVal::NULL {
                    0
                } else {
                    Self::array_len(st, self.deref_array(st, &data.val)?)
                };
                Some(Slot::plain(SymVal::int(n as i32)))
            }
            Intrinsic::MapGet | Intrinsic::MapContains | Intrinsic::SparseGet => {
                let class = if which == Intrinsic::SparseGet {
                    crate::isa::SPARSE_CLASS
                } else {
                    crate::isa::MAP_CLASS
                };
                let m = self.deref_object(st, &a[0].val, Some(class))?;
                let (_, keys) = self.coll_field(st, m, "keys")?;
                let (_, vals) = self.coll_field(st, m, "vals")?;
                let hit = self.find_key(st, &keys.val, &a[1].val)?;
                let key = Self::access_key(st, &a[1].val);
                let access = if which == Intrinsic::SparseGet { Access::SparseGet } else { Access::MapGet };
                match (which, hit) {
                    (Intrinsic::MapContains, h) => Some(Slot::plain(SymVal::int(i32::from(h.is_some())))),
                    (_, Some(j)) => {
                        let va = self.deref_array(st, &vals.val)?;
                        let len = Self::array_len(st, va);
                        if j >= len {
                            return Err(Stop::Trap(Trap::OutOfBounds { index: j as i32, len }));
                        }
                        let loc = CellLoc::Elem(va, j);
                        let parent = node_of(st, va);
                        let s = self.read_cell(st, &loc, &parent, Trigger::AaLoad)?;
                        Some(self.sink(st, access, m, &a[1], key, Some(loc), s)?)
                    }
                    (_, None) => Some(self.sink(st, access, m, &a[1], key, None, Slot::plain(SymVal::NULL))?),
                }
            }
            Intrinsic::MapPut | Intrinsic::SparsePut => {
                let class = if which == Intrinsic::SparsePut {
                    crate::isa::SPARSE_CLASS
                } else {
                    crate::isa::MAP_CLASS
                };
                let m = self.deref_object(st, &a[0].val, Some(class))?;
                let (ki, keys) = self.coll_field(st, m, "keys")?;
                let (vi, vals) = self.coll_field(st, m, "vals")?;
                match self.find_key(st, &keys.val, &a[1].val)? {
                    Some(j) => {
                        let va = self.deref_array(st, &vals.val)?;
                        let len = Self::array_len(st, va);
                        if j >= len {
                            return Err(Stop::Trap(Trap::OutOfBounds { index: j as i32, len }));
                        }
                        self.write_cell(st, &CellLoc::Elem(va, j), a[2].clone());
                    }
                    None => {
                        let (Some(ki), Some(vi)) = (ki, vi) else {
                            return Err(type_trap("map has no `keys` or `vals` field".into()));
                        };
                        let kt = if which == Intrinsic::SparsePut { Type::Int(None) } else { Type::Any };
                        let k = self.grow(st, &keys.val, kt, a[1].clone())?;
                        let v = self.grow(st, &vals.val, Type::Any, a[2].clone())?;
                        self.write_cell(st, &CellLoc::Field(m, ki), Slot::plain(k));
                        self.write_cell(st, &CellLoc::Field(m, vi), Slot::plain(v));
                    }
                }
                None
            }
            _ => unreachable!("sys intrinsics handled above"),
        };
        Self::pop_n(st, pops);
        if let Some(v) = result {
            Self::push(st, v);
        }
        Ok(())
    }

    /// Copy of an array (or of nothing, for null) with one more element.
    fn grow(&mut self, st: &mut SymState, arr: &SymVal, elem: Type, v: Slot) -> R<SymVal> {
        let mut cells = if *arr == SymVal::NULL {
            Vec::new()
        } else {
            let a = self.deref_array(st, arr)?;
            st.obj(a).unwrap().cells().to_vec()
        };
        cells.push(Cell {
            val: super::CellVal::Val(v.val),
            taint: v.taint,
            semi: None,
        });
        Ok(SymVal::Ref(st.alloc(SymObj::Array {
            elem,
            elems: cells,
            handled: false,
            origin: None,
        })))
    }
}

fn str_eq(a: &StrTerm, b: &StrTerm) -> Formula {
    match (a, b) {
        (StrTerm::Lit(x), StrTerm::Lit(y)) => {
            if x == y {
                Formula::True
            } else {
                Formula::False
            }
        }
        _ if a == b => Formula::True,
        _ => Formula::StrEq(a.clone(), b.clone()),
    }
}

/// Name and origin of the variable for element `j` of array `arr`.
fn elem_var(st: &SymState, arr: SymId, j: usize, key: Option<String>) -> (String, VarOrigin) {
    match st.obj(arr).and_then(SymObj::origin) {
        Some(c) => (
            format!("a{}[{}]", c, j),
            VarOrigin::Overlay {
                location: crate::concrete::OverlayLocation::Elem { arr: c, index: j },
                key,
            },
        ),
        None => (format!("s{}[{}]", arr, j), VarOrigin::Internal),
    }
}
