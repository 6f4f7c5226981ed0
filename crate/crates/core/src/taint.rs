//! Slim taint labels: the skeleton's uid and package name, tracked only
//! through the few operations that turn them into container indexes and
//! keys.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::isa::ArithOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaintKind {
    UidSource,
    PackageSource,
}

/// One operation applied to a labeled value, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Step {
    pub op: String,
    /// The other operand, when concrete.
    pub operand: Option<i32>,
    /// The result, when concrete.
    pub value: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TaintLabel {
    pub kind: TaintKind,
    /// Source first, then every propagating operation in order.
    pub derivation: Vec<Step>,
}

impl TaintLabel {
    pub fn uid_source(uid: i32) -> Arc<TaintLabel> {
        Arc::new(TaintLabel {
            kind: TaintKind::UidSource,
            derivation: alloc::vec![Step {
                op: "source".into(),
                operand: None,
                value: Some(uid),
            }],
        })
    }

    pub fn package_source() -> Arc<TaintLabel> {
        Arc::new(TaintLabel {
            kind: TaintKind::PackageSource,
            derivation: alloc::vec![Step {
                op: "source".into(),
                operand: None,
                value: None,
            }],
        })
    }

    fn extended(&self, step: Step) -> Arc<TaintLabel> {
        let mut derivation = self.derivation.clone();
        derivation.push(step);
        Arc::new(TaintLabel {
            kind: self.kind,
            derivation,
        })
    }
}

impl fmt::Display for TaintLabel {
    /// `10054 -> mod 100000 -> 10054 -> sub 10000 -> 54`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.derivation.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
                f.write_str(&s.op)?;
                if let Some(o) = s.operand {
                    write!(f, " {}", o)?;
                }
                f.write_str(" -> ")?;
            }
            match s.value {
                Some(v) => write!(f, "{}", v)?,
                None if i == 0 => write!(f, "{:?}", self.kind)?,
                None => f.write_str("?")?,
            }
        }
        Ok(())
    }
}

/// Operation classes that matter for propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaintOp {
    /// Loads, stores, `dup`, field and element copies, parameter passing.
    Copy,
    Arith(ArithOp),
    SConcat,
    /// Anything else that produces a value, comparisons included.
    Other,
}

/// Label of the result of `op` given its operands' label kinds. Uid labels
/// survive `mod` and `sub`; package labels survive `sconcat`; both survive
/// copies; everything else strips.
pub fn propagate(op: TaintOp, a: Option<TaintKind>, b: Option<TaintKind>) -> Option<TaintKind> {
    let either = |k: TaintKind| (a == Some(k) || b == Some(k)).then_some(k);
    match op {
        TaintOp::Copy => a,
        TaintOp::Arith(ArithOp::Mod | ArithOp::Sub) => either(TaintKind::UidSource),
        TaintOp::SConcat => either(TaintKind::PackageSource),
        TaintOp::Arith(_) | TaintOp::Other => None,
    }
}

/// [`propagate`] on full labels, appending a derivation step to the
/// surviving label. `other` and `result` are recorded when concrete.
pub fn apply(
    op: TaintOp,
    a: Option<&Arc<TaintLabel>>,
    b: Option<&Arc<TaintLabel>>,
    other: Option<i32>,
    result: Option<i32>,
) -> Option<Arc<TaintLabel>> {
    let kind = propagate(op, a.map(|l| l.kind), b.map(|l| l.kind))?;
    let src = [a, b].into_iter().flatten().find(|l| l.kind == kind)?;
    let name = match op {
        TaintOp::Copy => return Some(src.clone()),
        TaintOp::Arith(o) => o.mnemonic(),
        TaintOp::SConcat => "sconcat",
        TaintOp::Other => unreachable!("stripped above"),
    };
    Some(src.extended(Step {
        op: name.into(),
        operand: other,
        value: result,
    }))
}
