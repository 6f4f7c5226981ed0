use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{AsmError, AsmErrorKind, Insn, MemberRef, MethodDef, Program};

type LineMap = BTreeMap<(String, String), (usize, Vec<usize>)>;

/// Operand-stack effect of one instruction as (pops, pushes).
pub(crate) fn stack_effect(
    program: &Program,
    method: &MethodDef,
    insn: &Insn,
) -> Result<(usize, usize), String> {
    Ok(match insn {
        Insn::Const(_) | Insn::Load(_) | Insn::GetStatic(_) | Insn::New(_) => (0, 1),
        Insn::Store(_) | Insn::Pop | Insn::PutStatic(_) | Insn::If(..) | Insn::IfNull(..) => (1, 0),
        Insn::Dup => (1, 2),
        Insn::Arith(_) | Insn::AaLoad | Insn::IaLoad | Insn::SConcat | Insn::SEquals => (2, 1),
        Insn::IfICmp(..) | Insn::IfACmp(..) | Insn::PutField(_) => (2, 0),
        Insn::Goto(_) => (0, 0),
        Insn::GetField(_) | Insn::NewArray(_) | Insn::ArrayLength => (1, 1),
        Insn::AaStore | Insn::IaStore => (3, 0),
        Insn::InvokeVirtual(m) | Insn::InvokeSpecial(m) => {
            let id = program.resolve_dispatch(&m.class, &m.name).map_err(|e| format!("{}", e))?;
            let callee = program.method(id);
            if callee.is_static {
                return Err(format!("`{}` is static", m));
            }
            (callee.arg_count(), usize::from(callee.returns_value()))
        }
        Insn::InvokeStatic(m) => static_call_effect(program, m)?,
        Insn::InvokeIntrinsic(i) => i.stack_effect(),
        Insn::Return => (usize::from(method.returns_value()), 0),
        Insn::Throw => (1, 0),
    })
}

fn static_call_effect(program: &Program, m: &MemberRef) -> Result<(usize, usize), String> {
    if let Some(e) = program.extern_decl(&format!("{}", m)) {
        return Ok((e.params.len(), usize::from(e.ret != super::Type::Void)));
    }
    let id = program.resolve_dispatch(&m.class, &m.name).map_err(|e| format!("{}", e))?;
    let callee = program.method(id);
    if !callee.is_static {
        return Err(format!("`{}` is not static", m));
    }
    Ok((callee.arg_count(), usize::from(callee.returns_value())))
}

fn resolve_names(program: &Program, method: &MethodDef, insn: &Insn) -> Result<(), AsmErrorKind> {
    let unresolved = |e: super::LookupError| AsmErrorKind::Unresolved(format!("{}", e));
    match insn {
        Insn::New(c) => {
            program
                .class(c)
                .ok_or_else(|| AsmErrorKind::Unresolved(format!("class `{}`", c)))?;
        }
        Insn::GetField(f) | Insn::PutField(f) => {
            program.field_index(&f.class, &f.name).map_err(unresolved)?;
        }
        Insn::GetStatic(f) | Insn::PutStatic(f) => {
            program.resolve_static(&f.class, &f.name).map_err(unresolved)?;
        }
        Insn::Load(s) | Insn::Store(s) => {
            if *s >= method.locals {
                return Err(AsmErrorKind::Unresolved(format!(
                    "local slot {} (method has {})",
                    s, method.locals
                )));
            }
        }
        Insn::NewArray(t) => check_type(program, t)?,
        _ => {}
    }
    Ok(())
}

fn check_type(program: &Program, t: &super::Type) -> Result<(), AsmErrorKind> {
    match t {
        super::Type::Ref(c) if program.class(c).is_none() => {
            Err(AsmErrorKind::Unresolved(format!("class `{}`", c)))
        }
        super::Type::Arr(inner) => check_type(program, inner),
        _ => Ok(()),
    }
}

/// Resolve every operand and check that the operand stack balances along
/// every control-flow path.
pub(crate) fn verify(program: &Program, lines: &LineMap) -> Result<(), AsmError> {
    for c in &program.classes {
        for f in c.statics.iter().chain(&c.fields) {
            check_type(program, &f.ty).map_err(|k| AsmError::new(1, 1, k))?;
        }
        for m in &c.methods {
            let (hline, ilines) = lines
                .get(&(c.name.clone(), m.name.clone()))
                .cloned()
                .unwrap_or((1, Vec::new()));
            let line_of = |pc: usize| ilines.get(pc).copied().unwrap_or(hline);
            for (_, t) in &m.params {
                check_type(program, t).map_err(|k| AsmError::new(hline, 1, k))?;
            }
            check_type(program, &m.ret).map_err(|k| AsmError::new(hline, 1, k))?;
            if m.is_interface && m.is_static {
                return Err(AsmError::new(
                    hline,
                    1,
                    AsmErrorKind::Invalid(format!("interface method `{}` must not be static", m.name)),
                ));
            }
            let imbalance = |pc: usize, msg: String| {
                AsmError::new(
                    line_of(pc),
                    1,
                    AsmErrorKind::StackImbalance {
                        method: format!("{}.{}", c.name, m.name),
                        pc,
                        msg,
                    },
                )
            };
            if m.body.is_empty() {
                return Err(imbalance(0, "empty method body".into()));
            }
            let mut depth: Vec<Option<usize>> = vec![None; m.body.len()];
            let mut work = vec![(0usize, 0usize)];
            while let Some((pc, d)) = work.pop() {
                if pc >= m.body.len() {
                    return Err(imbalance(pc, "control falls off the end of the method".into()));
                }
                match depth[pc] {
                    Some(old) if old == d => continue,
                    Some(old) => {
                        return Err(imbalance(
                            pc,
                            format!("stack depth {} here but {} on another path", d, old),
                        ))
                    }
                    None => depth[pc] = Some(d),
                }
                let insn = &m.body[pc];
                resolve_names(program, m, insn).map_err(|k| AsmError::new(line_of(pc), 1, k))?;
                let (pops, pushes) = stack_effect(program, m, insn)
                    .map_err(|e| AsmError::new(line_of(pc), 1, AsmErrorKind::Unresolved(e)))?;
                if d < pops {
                    return Err(imbalance(pc, format!("needs {} operands, stack has {}", pops, d)));
                }
                let nd = d - pops + pushes;
                if let Insn::Return = insn {
                    if nd != 0 {
                        return Err(imbalance(pc, format!("{} values left on the stack at return", nd)));
                    }
                }
                if let Some(t) = insn.branch_target() {
                    work.push((t, nd));
                }
                if insn.falls_through() {
                    work.push((pc + 1, nd));
                }
            }
        }
    }
    Ok(())
}
