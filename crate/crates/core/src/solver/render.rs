use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Formula, PathCondition, StrTerm, Term, VarId};
use crate::isa::ArithOp;

fn op_symbol(op: ArithOp) -> &'static str {
    match op {
        ArithOp::Add => "+",
        ArithOp::Sub => "-",
        ArithOp::Mul => "*",
        ArithOp::Div => "/",
        ArithOp::Mod => "%",
        ArithOp::And => "&",
        ArithOp::Or => "|",
        ArithOp::Xor => "^",
        ArithOp::Shl => "<<",
        ArithOp::Shr => ">>",
    }
}

fn write_const(out: &mut String, c: i32) {
    if (-65536..65536).contains(&c) {
        let _ = write!(out, "{}", c);
    } else {
        let _ = write!(out, "0x{:X}", c as u32);
    }
}

fn write_str_lit(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_term(out: &mut String, t: &Term, name: &dyn Fn(VarId) -> String) {
    match t {
        Term::Const(c) => write_const(out, *c),
        Term::Var(v) => out.push_str(&name(*v)),
        Term::Bin(op, a, b) => {
            out.push('(');
            write_term(out, a, name);
            let _ = write!(out, " {} ", op_symbol(*op));
            write_term(out, b, name);
            out.push(')');
        }
        Term::Bool(f) => {
            out.push('[');
            write_formula(out, f, name);
            out.push(']');
        }
    }
}

fn write_strterm(out: &mut String, s: &StrTerm, name: &dyn Fn(VarId) -> String) {
    match s {
        StrTerm::Lit(l) => write_str_lit(out, l),
        StrTerm::Var(v) => out.push_str(&name(*v)),
    }
}

fn write_formula(out: &mut String, f: &Formula, name: &dyn Fn(VarId) -> String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Cmp(op, a, b) => {
            write_term(out, a, name);
            let _ = write!(out, " {} ", op.symbol());
            write_term(out, b, name);
        }
        Formula::StrEq(a, b) => {
            write_strterm(out, a, name);
            out.push_str(" == ");
            write_strterm(out, b, name);
        }
        Formula::IsNull(v) => {
            let _ = write!(out, "{} == null", name(*v));
        }
        Formula::Not(g) => match &**g {
            Formula::StrEq(a, b) => {
                write_strterm(out, a, name);
                out.push_str(" != ");
                write_strterm(out, b, name);
            }
            Formula::IsNull(v) => {
                let _ = write!(out, "{} != null", name(*v));
            }
            g => {
                out.push_str("!(");
                write_formula(out, g, name);
                out.push(')');
            }
        },
        Formula::And(fs) | Formula::Or(fs) => {
            let sep = if matches!(f, Formula::And(_)) { " && " } else { " || " };
            out.push('(');
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                write_formula(out, g, name);
            }
            out.push(')');
        }
    }
}

fn first_use(f: &Formula, seen: &mut BTreeMap<VarId, usize>) {
    fn term(t: &Term, seen: &mut BTreeMap<VarId, usize>) {
        match t {
            Term::Const(_) => {}
            Term::Var(v) => {
                let n = seen.len();
                seen.entry(*v).or_insert(n);
            }
            Term::Bin(_, a, b) => {
                term(a, seen);
                term(b, seen);
            }
            Term::Bool(f) => first_use(f, seen),
        }
    }
    let note = |v: VarId, seen: &mut BTreeMap<VarId, usize>| {
        let n = seen.len();
        seen.entry(v).or_insert(n);
    };
    match f {
        Formula::True | Formula::False => {}
        Formula::Cmp(_, a, b) => {
            term(a, seen);
            term(b, seen);
        }
        Formula::StrEq(a, b) => {
            for s in [a, b] {
                if let StrTerm::Var(v) = s {
                    note(*v, seen);
                }
            }
        }
        Formula::IsNull(v) => note(*v, seen),
        Formula::Not(g) => first_use(g, seen),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| first_use(g, seen)),
    }
}

/// One conjunct rendered with a caller-chosen naming.
pub fn render_formula_named(f: &Formula, name: &dyn Fn(VarId) -> String) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, name);
    out
}

/// One conjunct rendered with the path condition's declared names.
pub fn render_conjunct(pc: &PathCondition, f: &Formula) -> String {
    render_formula_named(f, &|v| {
        pc.vars()
            .get(v as usize)
            .map(|d| d.name.clone())
            .unwrap_or_else(|| format!("?{}", v))
    })
}

pub(super) fn canonical_conjuncts(pc: &PathCondition) -> Vec<String> {
    let mut seen = BTreeMap::new();
    for f in pc.conjuncts() {
        first_use(f, &mut seen);
    }
    let name = |v: VarId| format!("v{}", seen.get(&v).copied().unwrap_or(usize::MAX));
    let mut out: Vec<String> = pc
        .conjuncts()
        .iter()
        .filter(|f| **f != Formula::True)
        .map(|f| render_formula_named(f, &name))
        .collect();
    out.sort();
    out.dedup();
    out
}

pub(super) fn render_canonical(pc: &PathCondition) -> String {
    let cs = canonical_conjuncts(pc);
    if cs.is_empty() {
        "true".into()
    } else {
        cs.join(" && ")
    }
}

pub(super) fn render_named(pc: &PathCondition) -> String {
    let cs: Vec<String> = pc
        .conjuncts()
        .iter()
        .filter(|f| **f != Formula::True)
        .map(|f| render_conjunct(pc, f))
        .collect();
    if cs.is_empty() {
        "true".into()
    } else {
        cs.join(" && ")
    }
}
