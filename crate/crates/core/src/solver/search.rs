use alloc::collections::BTreeSet;
use alloc::format;
use alloc::sync::Arc;
use alloc::string::String;
use alloc::vec::Vec;

use super::abs::{Abs, Tri};
use super::{Formula, Model, ModelValue, PathCondition, Sort, StrTerm, Term, VarId};
use crate::isa::{ArithOp, CmpOp};

/// Int domains at most this large are enumerated value by value; larger
/// ones are searched bit by bit from the most significant end.
const ENUM_LIMIT: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub seed: u64,
    /// Search nodes visited before giving up with `Unknown`.
    pub step_budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            step_budget: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn model(&self) -> Option<&Model> {
        match self {
            SatResult::Sat(m) => Some(m),
            _ => None,
        }
    }
}

/// Text of the `i`-th fresh string atom. Never equal to a literal that
/// appears in the path condition being solved.
pub(super) fn fresh_atom(i: usize, avoid: &BTreeSet<String>) -> String {
    let mut k = 0usize;
    loop {
        let s = if k == 0 {
            format!("atom${}", i)
        } else {
            format!("atom${}${}", i, k)
        };
        if !avoid.contains(&s) {
            return s;
        }
        k += 1;
    }
}

#[derive(Debug, Clone)]
enum Dom {
    Int { lo: i32, hi: i32, excluded: BTreeSet<i32> },
    Str { fixed: Option<String>, excluded: BTreeSet<String> },
    Ref(Option<bool>),
}

#[derive(Debug, Clone)]
enum Val {
    Free,
    Bits { known: u32, bits: u32 },
    Int(i32),
    Str(usize),
    Null(bool),
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Decide satisfiability of `pc` within its declared variable domains.
///
/// A `Sat` model assigns every variable the conjuncts mention and has
/// been re-checked with the exact evaluator.
pub fn check_sat(pc: &PathCondition, config: &SolverConfig) -> SatResult {
    let Some(pre) = preprocess(pc) else {
        return SatResult::Unsat;
    };
    let mut s = Searcher::new(pc, pre, config);
    match s.run() {
        Outcome::Found => {
            let model = s.model();
            debug_assert_eq!(pc.satisfied_by(&model), Ok(true));
            match pc.satisfied_by(&model) {
                Ok(true) => SatResult::Sat(model),
                _ => SatResult::Unknown,
            }
        }
        Outcome::Exhausted => SatResult::Unsat,
        Outcome::OutOfBudget => SatResult::Unknown,
    }
}

struct Pre {
    conjuncts: Vec<Formula>,
    doms: Vec<Dom>,
}

fn flatten(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(fs) => fs.iter().for_each(|g| flatten(g, out)),
        Formula::True => {}
        Formula::Not(g) => match &**g {
            Formula::Not(h) => flatten(h, out),
            Formula::Or(fs) => fs.iter().for_each(|h| flatten(&h.negate(), out)),
            Formula::Cmp(..) | Formula::True | Formula::False => flatten(&g.negate(), out),
            _ => out.push(f.clone()),
        },
        _ => out.push(f.clone()),
    }
}

fn int_env_abs(doms: &[Dom], v: VarId) -> Abs {
    match &doms[v as usize] {
        Dom::Int { lo, hi, .. } => Abs::range(*lo, *hi).unwrap_or_else(Abs::top),
        _ => Abs::top(),
    }
}

/// Rewrite `t mod m` to `t` where the domains place `t` in `[0, m)`.
fn simplify(t: &Arc<Term>, doms: &[Dom]) -> Arc<Term> {
    match &**t {
        Term::Bin(op, a, b) => {
            let a2 = simplify(a, doms);
            let b2 = simplify(b, doms);
            if *op == ArithOp::Mod {
                if let Term::Const(m) = &*b2 {
                    let ia = abs_term(&a2, &|v| int_env_abs(doms, v), &|_| Tri::Unknown);
                    if *m > 0 && ia.lo >= 0 && ia.hi < *m {
                        return a2;
                    }
                }
            }
            if Arc::ptr_eq(&a2, a) && Arc::ptr_eq(&b2, b) {
                t.clone()
            } else {
                Term::bin(*op, a2, b2)
            }
        }
        _ => t.clone(),
    }
}

/// Solve `t == c` for the single variable at the bottom of an invertible
/// chain of `+ k`, `- k`, `k - _` and `^ k`.
fn invert(t: &Term, c: i32) -> Option<(VarId, i32)> {
    match t {
        Term::Var(v) => Some((*v, c)),
        Term::Bin(op, a, b) => match (op, &**a, &**b) {
            (ArithOp::Add, x, Term::Const(k)) | (ArithOp::Add, Term::Const(k), x) => {
                invert(x, c.wrapping_sub(*k))
            }
            (ArithOp::Sub, x, Term::Const(k)) => invert(x, c.wrapping_add(*k)),
            (ArithOp::Sub, Term::Const(k), x) => invert(x, k.wrapping_sub(c)),
            (ArithOp::Xor, x, Term::Const(k)) | (ArithOp::Xor, Term::Const(k), x) => invert(x, c ^ *k),
            _ => None,
        },
        _ => None,
    }
}

enum Narrow {
    Changed,
    Same,
    Empty,
}

fn narrow_int(dom: &mut Dom, op: CmpOp, c: i32) -> Narrow {
    let Dom::Int { lo, hi, excluded } = dom else {
        return Narrow::Same;
    };
    let (ol, oh, on) = (*lo, *hi, excluded.len());
    match op {
        CmpOp::Eq => {
            *lo = (*lo).max(c);
            *hi = (*hi).min(c);
        }
        CmpOp::Ne => {
            if c >= *lo && c <= *hi {
                excluded.insert(c);
            }
        }
        CmpOp::Lt => match c.checked_sub(1) {
            Some(x) => *hi = (*hi).min(x),
            None => return Narrow::Empty,
        },
        CmpOp::Le => *hi = (*hi).min(c),
        CmpOp::Gt => match c.checked_add(1) {
            Some(x) => *lo = (*lo).max(x),
            None => return Narrow::Empty,
        },
        CmpOp::Ge => *lo = (*lo).max(c),
    }
    while *lo <= *hi && excluded.contains(lo) {
        if *lo == i32::MAX {
            return Narrow::Empty;
        }
        *lo += 1;
    }
    while *lo <= *hi && excluded.contains(hi) {
        if *hi == i32::MIN {
            return Narrow::Empty;
        }
        *hi -= 1;
    }
    if *lo > *hi {
        return Narrow::Empty;
    }
    let (l, h) = (*lo, *hi);
    excluded.retain(|x| *x > l && *x < h);
    if (*lo, *hi, excluded.len()) != (ol, oh, on) {
        Narrow::Changed
    } else {
        Narrow::Same
    }
}

/// Unary narrowing and chain inversion to a fixpoint. `None` means the
/// conjuncts are unsatisfiable within the declared domains.
fn preprocess(pc: &PathCondition) -> Option<Pre> {
    let mut conjuncts = Vec::new();
    for f in pc.conjuncts() {
        flatten(f, &mut conjuncts);
    }
    let mut doms: Vec<Dom> = pc
        .vars()
        .iter()
        .map(|d| match d.sort {
            Sort::Int { lo, hi } => Dom::Int {
                lo,
                hi,
                excluded: BTreeSet::new(),
            },
            Sort::Str => Dom::Str {
                fixed: None,
                excluded: BTreeSet::new(),
            },
            Sort::Ref => Dom::Ref(None),
        })
        .collect();
    for d in &doms {
        if let Dom::Int { lo, hi, .. } = d {
            if lo > hi {
                return None;
            }
        }
    }
    let mut rounds = 0;
    loop {
        let mut changed = false;
        for f in conjuncts.iter_mut() {
            let g = match &*f {
                Formula::Cmp(op, a, b) => {
                    let a2 = simplify(a, &doms);
                    let b2 = simplify(b, &doms);
                    Formula::Cmp(*op, a2, b2)
                }
                other => other.clone(),
            };
            if g != *f {
                *f = g;
                changed = true;
            }
            let r = match &*f {
                Formula::False => Narrow::Empty,
                Formula::Cmp(op, a, b) => {
                    let (op, t, c) = match (&**a, &**b) {
                        (_, Term::Const(c)) => (*op, a, *c),
                        (Term::Const(c), _) => (op.swap(), b, *c),
                        _ => continue,
                    };
                    match (op, &**t) {
                        (_, Term::Var(v)) => narrow_int(&mut doms[*v as usize], op, c),
                        (CmpOp::Eq, _) => match invert(t, c) {
                            Some((v, x)) => narrow_int(&mut doms[v as usize], CmpOp::Eq, x),
                            None => Narrow::Same,
                        },
                        _ => Narrow::Same,
                    }
                }
                Formula::IsNull(v) => fix_ref(&mut doms[*v as usize], true),
                Formula::StrEq(StrTerm::Var(v), StrTerm::Lit(l))
                | Formula::StrEq(StrTerm::Lit(l), StrTerm::Var(v)) => fix_str(&mut doms[*v as usize], l),
                Formula::StrEq(StrTerm::Lit(a), StrTerm::Lit(b)) => {
                    if a == b {
                        Narrow::Same
                    } else {
                        Narrow::Empty
                    }
                }
                Formula::Not(g) => match &**g {
                    Formula::IsNull(v) => fix_ref(&mut doms[*v as usize], false),
                    Formula::StrEq(StrTerm::Var(v), StrTerm::Lit(l))
                    | Formula::StrEq(StrTerm::Lit(l), StrTerm::Var(v)) => {
                        exclude_str(&mut doms[*v as usize], l)
                    }
                    Formula::StrEq(StrTerm::Lit(a), StrTerm::Lit(b)) => {
                        if a == b {
                            Narrow::Empty
                        } else {
                            Narrow::Same
                        }
                    }
                    _ => Narrow::Same,
                },
                _ => Narrow::Same,
            };
            match r {
                Narrow::Empty => return None,
                Narrow::Changed => changed = true,
                Narrow::Same => {}
            }
        }
        rounds += 1;
        if !changed || rounds > 64 {
            break;
        }
    }
    Some(Pre { conjuncts, doms })
}

fn fix_ref(d: &mut Dom, null: bool) -> Narrow {
    match d {
        Dom::Ref(Some(x)) if *x != null => Narrow::Empty,
        Dom::Ref(Some(_)) => Narrow::Same,
        Dom::Ref(x) => {
            *x = Some(null);
            Narrow::Changed
        }
        _ => Narrow::Same,
    }
}

fn fix_str(d: &mut Dom, l: &str) -> Narrow {
    match d {
        Dom::Str { fixed, excluded } => {
            if excluded.contains(l) {
                return Narrow::Empty;
            }
            match fixed {
                Some(x) if x == l => Narrow::Same,
                Some(_) => Narrow::Empty,
                None => {
                    *fixed = Some(l.into());
                    Narrow::Changed
                }
            }
        }
        _ => Narrow::Same,
    }
}

fn exclude_str(d: &mut Dom, l: &str) -> Narrow {
    match d {
        Dom::Str { fixed, excluded } => {
            if fixed.as_deref() == Some(l) {
                return Narrow::Empty;
            }
            if excluded.insert(l.into()) {
                Narrow::Changed
            } else {
                Narrow::Same
            }
        }
        _ => Narrow::Same,
    }
}

/// Abstract value of an integer term given per-variable abstractions.
pub(super) fn abs_term(t: &Term, env: &dyn Fn(VarId) -> Abs, fenv: &dyn Fn(&Formula) -> Tri) -> Abs {
    match t {
        Term::Const(c) => Abs::constant(*c),
        Term::Var(v) => env(*v),
        Term::Bin(op, a, b) => Abs::arith(*op, abs_term(a, env, fenv), abs_term(b, env, fenv)),
        Term::Bool(f) => match fenv(f) {
            Tri::True => Abs::constant(1),
            Tri::False => Abs::constant(0),
            Tri::Unknown => Abs::range(0, 1).unwrap(),
        },
    }
}

enum Outcome {
    Found,
    Exhausted,
    OutOfBudget,
}

struct Searcher {
    conjuncts: Vec<Formula>,
    doms: Vec<Dom>,
    /// Candidate texts for string variables: literals first, then atoms.
    strings: Vec<String>,
    by_var: Vec<Vec<usize>>,
    order: Vec<VarId>,
    vals: Vec<Val>,
    steps: u64,
    budget: u64,
    seed: u64,
}

impl Searcher {
    fn new(pc: &PathCondition, pre: Pre, config: &SolverConfig) -> Searcher {
        let n = pc.vars().len();
        let mut by_var = alloc::vec![Vec::new(); n];
        let mut used = BTreeSet::new();
        for (i, f) in pre.conjuncts.iter().enumerate() {
            let mut vs = BTreeSet::new();
            f.vars(&mut vs);
            for v in vs {
                by_var[v as usize].push(i);
                used.insert(v);
            }
        }
        for v in pc.used_vars() {
            used.insert(v);
        }
        let literals = pc.string_literals();
        let str_vars = used
            .iter()
            .filter(|v| pc.var(**v).sort == Sort::Str)
            .count();
        let mut strings: Vec<String> = literals.iter().cloned().collect();
        for i in 0..str_vars {
            strings.push(fresh_atom(i, &literals));
        }
        let size = |v: &VarId| -> u64 {
            match &pre.doms[*v as usize] {
                Dom::Int { lo, hi, .. } => (*hi as i64 - *lo as i64 + 1) as u64,
                Dom::Str { fixed: Some(_), .. } | Dom::Ref(Some(_)) => 1,
                Dom::Str { .. } => strings.len() as u64,
                Dom::Ref(None) => 2,
            }
        };
        let mut order: Vec<VarId> = used.into_iter().collect();
        order.sort_by_key(|v| (size(v), *v));
        Searcher {
            conjuncts: pre.conjuncts,
            doms: pre.doms,
            strings,
            by_var,
            order,
            vals: alloc::vec![Val::Free; n],
            steps: 0,
            budget: config.step_budget,
            seed: config.seed,
        }
    }

    fn model(&self) -> Model {
        let mut m = Model::new();
        for v in &self.order {
            let val = match &self.vals[*v as usize] {
                Val::Int(x) => ModelValue::Int(*x),
                Val::Str(i) => ModelValue::Str(self.strings[*i].clone()),
                Val::Null(b) => ModelValue::Null(*b),
                Val::Free | Val::Bits { .. } => continue,
            };
            m.insert(*v, val);
        }
        m
    }

    fn run(&mut self) -> Outcome {
        for f in &self.conjuncts {
            if self.eval(f) == Tri::False {
                return Outcome::Exhausted;
            }
        }
        self.search(0)
    }

    fn var_abs(&self, v: VarId) -> Abs {
        let (lo, hi) = match &self.doms[v as usize] {
            Dom::Int { lo, hi, .. } => (*lo, *hi),
            _ => (i32::MIN, i32::MAX),
        };
        match &self.vals[v as usize] {
            Val::Int(x) => Abs::constant(*x),
            Val::Bits { known, bits } => Abs::make(*known, *bits, lo, hi).unwrap_or_else(Abs::top),
            _ => Abs::range(lo, hi).unwrap_or_else(Abs::top),
        }
    }

    fn str_of<'s>(&'s self, s: &'s StrTerm) -> Option<&'s str> {
        match s {
            StrTerm::Lit(l) => Some(l),
            StrTerm::Var(v) => match &self.vals[*v as usize] {
                Val::Str(i) => Some(&self.strings[*i]),
                _ => None,
            },
        }
    }

    fn eval(&self, f: &Formula) -> Tri {
        match f {
            Formula::True => Tri::True,
            Formula::False => Tri::False,
            Formula::Cmp(op, a, b) => {
                let env = |v| self.var_abs(v);
                let fenv = |g: &Formula| self.eval(g);
                Abs::compare(*op, abs_term(a, &env, &fenv), abs_term(b, &env, &fenv))
            }
            Formula::StrEq(a, b) => match (self.str_of(a), self.str_of(b)) {
                (Some(x), Some(y)) => Tri::from_bool(x == y),
                _ => Tri::Unknown,
            },
            Formula::IsNull(v) => match &self.vals[*v as usize] {
                Val::Null(b) => Tri::from_bool(*b),
                _ => Tri::Unknown,
            },
            Formula::Not(g) => self.eval(g).not(),
            Formula::And(fs) => {
                let mut out = Tri::True;
                for g in fs {
                    match self.eval(g) {
                        Tri::False => return Tri::False,
                        Tri::Unknown => out = Tri::Unknown,
                        Tri::True => {}
                    }
                }
                out
            }
            Formula::Or(fs) => {
                let mut out = Tri::False;
                for g in fs {
                    match self.eval(g) {
                        Tri::True => return Tri::True,
                        Tri::Unknown => out = Tri::Unknown,
                        Tri::False => {}
                    }
                }
                out
            }
        }
    }

    /// Whether no conjunct over `v` is already false.
    fn consistent(&self, v: VarId) -> bool {
        self.by_var[v as usize]
            .iter()
            .all(|i| self.eval(&self.conjuncts[*i]) != Tri::False)
    }

    fn tick(&mut self) -> bool {
        self.steps += 1;
        self.steps <= self.budget
    }

    fn rotation(&self, v: VarId, len: usize) -> usize {
        if self.seed == 0 || len == 0 {
            0
        } else {
            (splitmix(self.seed ^ ((v as u64) << 32)) % len as u64) as usize
        }
    }

    fn search(&mut self, idx: usize) -> Outcome {
        let Some(&v) = self.order.get(idx) else {
            return Outcome::Found;
        };
        match self.doms[v as usize].clone() {
            Dom::Ref(fixed) => {
                let cands: Vec<bool> = match fixed {
                    Some(b) => alloc::vec![b],
                    None => {
                        if self.rotation(v, 2) == 1 {
                            alloc::vec![true, false]
                        } else {
                            alloc::vec![false, true]
                        }
                    }
                };
                for b in cands {
                    self.vals[v as usize] = Val::Null(b);
                    match self.try_next(v, idx) {
                        Outcome::Exhausted => {}
                        o => return o,
                    }
                }
            }
            Dom::Str { fixed, excluded } => {
                let cands: Vec<usize> = match fixed {
                    Some(l) => match self.strings.iter().position(|s| *s == l) {
                        Some(i) => alloc::vec![i],
                        None => {
                            self.strings.push(l);
                            alloc::vec![self.strings.len() - 1]
                        }
                    },
                    None => {
                        let n = self.strings.len();
                        let r = self.rotation(v, n);
                        (0..n)
                            .map(|i| (i + r) % n)
                            .filter(|i| !excluded.contains(&self.strings[*i]))
                            .collect()
                    }
                };
                for i in cands {
                    self.vals[v as usize] = Val::Str(i);
                    match self.try_next(v, idx) {
                        Outcome::Exhausted => {}
                        o => return o,
                    }
                }
            }
            Dom::Int { lo, hi, excluded } => {
                let size = (hi as i64 - lo as i64 + 1) as u64;
                if size <= ENUM_LIMIT {
                    let start = 0i32.clamp(lo, hi);
                    let first = (start as i64 - lo as i64) as u64;
                    let r = (first + self.rotation(v, size as usize) as u64) % size;
                    for k in 0..size {
                        let x = (lo as i64 + ((r + k) % size) as i64) as i32;
                        if excluded.contains(&x) {
                            continue;
                        }
                        self.vals[v as usize] = Val::Int(x);
                        match self.try_next(v, idx) {
                            Outcome::Exhausted => {}
                            o => return o,
                        }
                    }
                } else {
                    let Some(a) = Abs::range(lo, hi) else {
                        self.vals[v as usize] = Val::Free;
                        return Outcome::Exhausted;
                    };
                    self.vals[v as usize] = Val::Bits {
                        known: a.known,
                        bits: a.bits,
                    };
                    match self.bits(v, idx, 31, lo, hi, &excluded) {
                        Outcome::Exhausted => {}
                        o => return o,
                    }
                }
            }
        }
        self.vals[v as usize] = Val::Free;
        Outcome::Exhausted
    }

    fn try_next(&mut self, v: VarId, idx: usize) -> Outcome {
        if !self.tick() {
            return Outcome::OutOfBudget;
        }
        if !self.consistent(v) {
            return Outcome::Exhausted;
        }
        self.search(idx + 1)
    }

    fn bits(&mut self, v: VarId, idx: usize, bit: i32, lo: i32, hi: i32, excluded: &BTreeSet<i32>) -> Outcome {
        let Val::Bits { known, bits } = self.vals[v as usize] else {
            unreachable!()
        };
        if bit < 0 || known == u32::MAX {
            let x = bits as i32;
            if x < lo || x > hi || excluded.contains(&x) {
                return Outcome::Exhausted;
            }
            self.vals[v as usize] = Val::Int(x);
            let o = self.try_next(v, idx);
            if matches!(o, Outcome::Exhausted) {
                self.vals[v as usize] = Val::Bits { known, bits };
            }
            return o;
        }
        let m = 1u32 << bit;
        if known & m != 0 {
            return self.bits(v, idx, bit - 1, lo, hi, excluded);
        }
        let first = if self.seed == 0 {
            0
        } else {
            (splitmix(self.seed ^ ((v as u64) << 32) ^ bit as u64) & 1) as u32
        };
        for b in [first, first ^ 1] {
            let Some(a) = Abs::make(known | m, bits | (b << bit), lo, hi) else {
                continue;
            };
            self.vals[v as usize] = Val::Bits {
                known: a.known,
                bits: a.bits,
            };
            if !self.tick() {
                return Outcome::OutOfBudget;
            }
            if self.consistent(v) {
                match self.bits(v, idx, bit - 1, lo, hi, excluded) {
                    Outcome::Exhausted => {}
                    o => return o,
                }
            }
        }
        self.vals[v as usize] = Val::Bits { known, bits };
        Outcome::Exhausted
    }
}
