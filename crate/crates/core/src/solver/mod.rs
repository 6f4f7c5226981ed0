//! Path conditions over 32-bit integers, atomic strings and null-ness, a
//! self-contained satisfiability checker and a brute-force oracle.
//!
//! Booleans are integers constrained to `{0, 1}`. Strings are atoms that
//! can only be compared for equality. A reference variable only records
//! whether the reference is null.

mod abs;
mod brute;
mod render;
mod search;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::string::String;
use alloc::vec::Vec;

use crate::isa::{ArithOp, CmpOp};

pub use brute::{brute_force, BruteForceError};
pub use render::{render_conjunct, render_formula_named};
pub use search::{check_sat, SatResult, SolverConfig};

pub type VarId = u32;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    /// Inclusive integer domain.
    Int { lo: i32, hi: i32 },
    Str,
    /// Null-ness of a reference.
    Ref,
}

impl Sort {
    pub fn int() -> Sort {
        Sort::Int {
            lo: i32::MIN,
            hi: i32::MAX,
        }
    }

    pub fn boolean() -> Sort {
        Sort::Int { lo: 0, hi: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(i32),
    Var(VarId),
    Bin(ArithOp, Arc<Term>, Arc<Term>),
    /// 1 when the formula holds, 0 otherwise.
    Bool(Arc<Formula>),
}

impl Term {
    pub fn var(v: VarId) -> Arc<Term> {
        Arc::new(Term::Var(v))
    }

    pub fn constant(c: i32) -> Arc<Term> {
        Arc::new(Term::Const(c))
    }

    pub fn bin(op: ArithOp, a: Arc<Term>, b: Arc<Term>) -> Arc<Term> {
        Arc::new(Term::Bin(op, a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrTerm {
    Lit(String),
    Var(VarId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Cmp(CmpOp, Arc<Term>, Arc<Term>),
    StrEq(StrTerm, StrTerm),
    IsNull(VarId),
    Not(Arc<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn cmp(op: CmpOp, a: Arc<Term>, b: Arc<Term>) -> Formula {
        Formula::Cmp(op, a, b)
    }

    /// Logical negation, pushing through comparisons and double negation.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Cmp(op, a, b) => Formula::Cmp(op.negate(), a.clone(), b.clone()),
            Formula::Not(f) => (**f).clone(),
            f => Formula::Not(Arc::new(f.clone())),
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                term_vars(a, out);
                term_vars(b, out);
            }
            Formula::StrEq(a, b) => {
                for s in [a, b] {
                    if let StrTerm::Var(v) = s {
                        out.insert(*v);
                    }
                }
            }
            Formula::IsNull(v) => {
                out.insert(*v);
            }
            Formula::Not(f) => f.vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.vars(out)),
        }
    }

    fn str_literals(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::StrEq(a, b) => {
                for s in [a, b] {
                    if let StrTerm::Lit(l) = s {
                        out.insert(l.clone());
                    }
                }
            }
            Formula::Cmp(_, a, b) => {
                term_str_literals(a, out);
                term_str_literals(b, out);
            }
            Formula::Not(f) => f.str_literals(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.str_literals(out)),
            _ => {}
        }
    }
}

fn term_str_literals(t: &Term, out: &mut BTreeSet<String>) {
    match t {
        Term::Bin(_, a, b) => {
            term_str_literals(a, out);
            term_str_literals(b, out);
        }
        Term::Bool(f) => f.str_literals(out),
        _ => {}
    }
}

pub fn term_vars(t: &Term, out: &mut BTreeSet<VarId>) {
    match t {
        Term::Const(_) => {}
        Term::Var(v) => {
            out.insert(*v);
        }
        Term::Bin(_, a, b) => {
            term_vars(a, out);
            term_vars(b, out);
        }
        Term::Bool(f) => f.vars(out),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelValue {
    Int(i32),
    Str(String),
    /// Reference null-ness: `true` means null.
    Null(bool),
}

pub type Model = BTreeMap<VarId, ModelValue>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("variable v{0} is not declared")]
    UndeclaredVar(VarId),
    #[error("variable `{0}` used at the wrong sort")]
    SortMismatch(String),
    #[error("model does not assign `{0}`")]
    Unassigned(String),
}

/// Ordered conjunction of constraints plus the variables they range over.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathCondition {
    vars: Vec<VarDecl>,
    conjuncts: Vec<Formula>,
}

impl PathCondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self, name: impl Into<String>, sort: Sort) -> VarId {
        self.vars.push(VarDecl {
            name: name.into(),
            sort,
        });
        (self.vars.len() - 1) as VarId
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &VarDecl {
        &self.vars[v as usize]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|d| d.name == name).map(|i| i as VarId)
    }

    pub fn conjuncts(&self) -> &[Formula] {
        &self.conjuncts
    }

    pub fn push(&mut self, f: Formula) {
        self.conjuncts.push(f);
    }

    pub fn is_constantly_true(&self) -> bool {
        self.conjuncts.iter().all(|f| *f == Formula::True)
    }

    /// Variables mentioned by at least one conjunct.
    pub fn used_vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        for f in &self.conjuncts {
            f.vars(&mut out);
        }
        out
    }

    pub fn string_literals(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for f in &self.conjuncts {
            f.str_literals(&mut out);
        }
        out
    }

    /// Append a property constraint without simplification.
    pub fn conjoin_property(&self, property: Formula) -> Result<PathCondition, SolverError> {
        let mut out = self.clone();
        out.push(property);
        out.check_sorts()?;
        Ok(out)
    }

    /// Every variable is declared and used at its declared sort.
    pub fn check_sorts(&self) -> Result<(), SolverError> {
        for f in &self.conjuncts {
            self.check_formula(f)?;
        }
        Ok(())
    }

    fn decl(&self, v: VarId) -> Result<&VarDecl, SolverError> {
        self.vars.get(v as usize).ok_or(SolverError::UndeclaredVar(v))
    }

    fn check_term(&self, t: &Term) -> Result<(), SolverError> {
        match t {
            Term::Const(_) => Ok(()),
            Term::Var(v) => match &self.decl(*v)?.sort {
                Sort::Int { .. } => Ok(()),
                _ => Err(SolverError::SortMismatch(self.decl(*v)?.name.clone())),
            },
            Term::Bin(_, a, b) => {
                self.check_term(a)?;
                self.check_term(b)
            }
            Term::Bool(f) => self.check_formula(f),
        }
    }

    fn check_formula(&self, f: &Formula) -> Result<(), SolverError> {
        match f {
            Formula::True | Formula::False => Ok(()),
            Formula::Cmp(_, a, b) => {
                self.check_term(a)?;
                self.check_term(b)
            }
            Formula::StrEq(a, b) => {
                for s in [a, b] {
                    if let StrTerm::Var(v) = s {
                        if self.decl(*v)?.sort != Sort::Str {
                            return Err(SolverError::SortMismatch(self.decl(*v)?.name.clone()));
                        }
                    }
                }
                Ok(())
            }
            Formula::IsNull(v) => match self.decl(*v)?.sort {
                Sort::Ref => Ok(()),
                _ => Err(SolverError::SortMismatch(self.decl(*v)?.name.clone())),
            },
            Formula::Not(f) => self.check_formula(f),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(|f| self.check_formula(f)),
        }
    }

    /// Whether the model satisfies every conjunct and every variable's domain.
    pub fn satisfied_by(&self, model: &Model) -> Result<bool, SolverError> {
        for v in self.used_vars() {
            let d = self.decl(v)?;
            match (&d.sort, model.get(&v)) {
                (_, None) => return Err(SolverError::Unassigned(d.name.clone())),
                (Sort::Int { lo, hi }, Some(ModelValue::Int(x))) => {
                    if x < lo || x > hi {
                        return Ok(false);
                    }
                }
                (Sort::Str, Some(ModelValue::Str(_))) | (Sort::Ref, Some(ModelValue::Null(_))) => {}
                _ => return Err(SolverError::SortMismatch(d.name.clone())),
            }
        }
        for f in &self.conjuncts {
            if !eval_formula(f, model, self)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Stable text form: `v<N>` names by first use, conjuncts sorted.
    pub fn render_canonical(&self) -> String {
        render::render_canonical(self)
    }

    pub fn render_conjuncts_canonical(&self) -> Vec<String> {
        render::canonical_conjuncts(self)
    }

    /// Human-readable rendering using the variables' declared names.
    pub fn render_named(&self) -> String {
        render::render_named(self)
    }
}

fn lookup<'m>(model: &'m Model, v: VarId, pc: &PathCondition) -> Result<&'m ModelValue, SolverError> {
    model.get(&v).ok_or_else(|| {
        SolverError::Unassigned(
            pc.vars
                .get(v as usize)
                .map(|d| d.name.clone())
                .unwrap_or_else(|| alloc::format!("v{}", v)),
        )
    })
}

/// Evaluate an integer term under a total model.
pub fn evaluate(t: &Term, model: &Model, pc: &PathCondition) -> Result<i32, SolverError> {
    Ok(match t {
        Term::Const(c) => *c,
        Term::Var(v) => match lookup(model, *v, pc)? {
            ModelValue::Int(x) => *x,
            _ => return Err(SolverError::SortMismatch(pc.var(*v).name.clone())),
        },
        Term::Bin(op, a, b) => op.apply(evaluate(a, model, pc)?, evaluate(b, model, pc)?),
        Term::Bool(f) => i32::from(eval_formula(f, model, pc)?),
    })
}

fn eval_str<'a>(s: &'a StrTerm, model: &'a Model, pc: &PathCondition) -> Result<&'a str, SolverError> {
    match s {
        StrTerm::Lit(l) => Ok(l),
        StrTerm::Var(v) => match lookup(model, *v, pc)? {
            ModelValue::Str(x) => Ok(x),
            _ => Err(SolverError::SortMismatch(pc.var(*v).name.clone())),
        },
    }
}

pub fn eval_formula(f: &Formula, model: &Model, pc: &PathCondition) -> Result<bool, SolverError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, a, b) => op.holds(evaluate(a, model, pc)?, evaluate(b, model, pc)?),
        Formula::StrEq(a, b) => eval_str(a, model, pc)? == eval_str(b, model, pc)?,
        Formula::IsNull(v) => match lookup(model, *v, pc)? {
            ModelValue::Null(n) => *n,
            _ => return Err(SolverError::SortMismatch(pc.var(*v).name.clone())),
        },
        Formula::Not(g) => !eval_formula(g, model, pc)?,
        Formula::And(fs) => {
            for g in fs {
                if !eval_formula(g, model, pc)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(fs) => {
            for g in fs {
                if eval_formula(g, model, pc)? {
                    return Ok(true);
                }
            }
            false
        }
    })
}

#[cfg(test)]
mod tests;
