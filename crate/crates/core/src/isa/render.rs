use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Insn, Literal, MethodDef, Program};

fn write_literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Int(v) => {
            let _ = write!(out, "{}", v);
        }
        Literal::Bool(b) => {
            let _ = write!(out, "{}", b);
        }
        Literal::Null => out.push_str("null"),
        Literal::Str(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}

fn render_method(out: &mut String, m: &MethodDef) {
    out.push_str("  method ");
    out.push_str(&m.name);
    out.push('(');
    for (i, (n, t)) in m.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{}:{}", n, t);
    }
    out.push(')');
    if m.is_static {
        out.push_str(" static");
    }
    if m.is_virtual {
        out.push_str(" virtual");
    }
    if m.is_interface {
        out.push_str(" interface");
    }
    let _ = write!(out, " locals={}", m.locals);
    if m.ret != super::Type::Void {
        let _ = write!(out, " returns={}", m.ret);
    }
    out.push('\n');
    for (n, _) in &m.local_names {
        let _ = writeln!(out, "    local {}", n);
    }
    let mut labels_at: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (l, &pc) in &m.labels {
        labels_at.entry(pc).or_default().push(l);
    }
    let label_for = |pc: usize| -> &str { labels_at.get(&pc).map(|v| v[0]).unwrap_or("?") };
    for (pc, insn) in m.body.iter().enumerate() {
        if let Some(ls) = labels_at.get(&pc) {
            for l in ls {
                let _ = writeln!(out, "  {}:", l);
            }
        }
        out.push_str("    ");
        match insn {
            Insn::Const(l) => {
                out.push_str("const ");
                write_literal(out, l);
            }
            Insn::Load(s) => {
                let _ = write!(out, "load {}", s);
            }
            Insn::Store(s) => {
                let _ = write!(out, "store {}", s);
            }
            Insn::Dup => out.push_str("dup"),
            Insn::Pop => out.push_str("pop"),
            Insn::Arith(op) => out.push_str(op.mnemonic()),
            Insn::If(c, t) => {
                let _ = write!(out, "if{} {}", c.suffix(), label_for(*t));
            }
            Insn::IfICmp(c, t) => {
                let _ = write!(out, "if_icmp{} {}", c.suffix(), label_for(*t));
            }
            Insn::IfNull(n, t) => {
                let _ = write!(out, "{} {}", if *n { "ifnull" } else { "ifnonnull" }, label_for(*t));
            }
            Insn::IfACmp(e, t) => {
                let _ = write!(out, "{} {}", if *e { "if_acmpeq" } else { "if_acmpne" }, label_for(*t));
            }
            Insn::Goto(t) => {
                let _ = write!(out, "goto {}", label_for(*t));
            }
            Insn::New(c) => {
                let _ = write!(out, "new {}", c);
            }
            Insn::GetField(f) => {
                let _ = write!(out, "getfield {}", f);
            }
            Insn::PutField(f) => {
                let _ = write!(out, "putfield {}", f);
            }
            Insn::GetStatic(f) => {
                let _ = write!(out, "getstatic {}", f);
            }
            Insn::PutStatic(f) => {
                let _ = write!(out, "putstatic {}", f);
            }
            Insn::NewArray(t) => {
                let _ = write!(out, "newarray {}", t);
            }
            Insn::AaLoad => out.push_str("aaload"),
            Insn::AaStore => out.push_str("aastore"),
            Insn::IaLoad => out.push_str("iaload"),
            Insn::IaStore => out.push_str("iastore"),
            Insn::ArrayLength => out.push_str("arraylength"),
            Insn::InvokeVirtual(m) => {
                let _ = write!(out, "invokevirtual {}", m);
            }
            Insn::InvokeStatic(m) => {
                let _ = write!(out, "invokestatic {}", m);
            }
            Insn::InvokeSpecial(m) => {
                let _ = write!(out, "invokespecial {}", m);
            }
            Insn::InvokeIntrinsic(i) => {
                let _ = write!(out, "invokeintrinsic {}", i.name());
            }
            Insn::Return => out.push_str("return"),
            Insn::SConcat => out.push_str("sconcat"),
            Insn::SEquals => out.push_str("sequals"),
            Insn::Throw => out.push_str("throw"),
        }
        out.push('\n');
    }
}

/// Render a program back to assembly text that [`super::assemble`] accepts
/// and that reassembles to an equal [`Program`].
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "entry {}", program.entry_method);
    for e in &program.extern_decls {
        let _ = write!(out, "extern {}(", e.name);
        for (i, t) in e.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{}", t);
        }
        let _ = write!(out, ") policy={}", e.policy.name());
        if e.ret != super::Type::Void {
            let _ = write!(out, " returns={}", e.ret);
        }
        out.push('\n');
    }
    for c in program.classes.iter().filter(|c| !c.builtin) {
        let _ = write!(out, "\nclass {}", c.name);
        if let Some(s) = &c.super_class {
            let _ = write!(out, " extends {}", s);
        }
        if c.singleton {
            out.push_str(" singleton");
        }
        if c.handler {
            out.push_str(" handler");
        }
        if c.statemachine {
            out.push_str(" statemachine");
        }
        out.push('\n');
        for (kw, list) in [("static", &c.statics), ("field", &c.fields)] {
            for f in list {
                let _ = write!(out, "  {} {}:{}", kw, f.name, f.ty);
                if let Some(l) = &f.init {
                    out.push_str(" = ");
                    write_literal(&mut out, l);
                }
                if let Some(k) = &f.manifest {
                    let _ = write!(out, " manifest={}", k);
                }
                out.push('\n');
            }
        }
        for m in &c.methods {
            render_method(&mut out, m);
        }
    }
    out
}
