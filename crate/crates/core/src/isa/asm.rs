use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    builtin_classes, verify, ArithOp, ClassDef, CmpOp, ExternDecl, ExternPolicy, FieldDef, Insn,
    Intrinsic, Literal, MemberRef, MethodDef, Program, Type,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub col: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unresolved name: {0}")]
    Unresolved(String),
    #[error("stack imbalance in {method} at instruction {pc}: {msg}")]
    StackImbalance {
        method: String,
        pc: usize,
        msg: String,
    },
    #[error("invalid program: {0}")]
    Invalid(String),
}

impl AsmError {
    pub(crate) fn new(line: usize, col: usize, kind: AsmErrorKind) -> Self {
        AsmError { line, col, kind }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    col: usize,
    quoted: bool,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>, AsmError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let col = i + 1;
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(AsmError::new(
                            lineno,
                            col,
                            AsmErrorKind::Syntax("unterminated string".into()),
                        ))
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let e = chars.get(i + 1).copied();
                        s.push(match e {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                return Err(AsmError::new(
                                    lineno,
                                    i + 1,
                                    AsmErrorKind::Syntax("bad escape".into()),
                                ))
                            }
                        });
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok {
                text: s,
                col,
                quoted: true,
            });
            continue;
        }
        // Bare token; parentheses group a whole parameter list.
        let mut s = String::new();
        let mut depth = 0i32;
        while i < chars.len() {
            let ch = chars[i];
            if depth == 0 && (ch.is_whitespace() || ch == '#') {
                break;
            }
            if ch == '(' {
                depth += 1;
            } else if ch == ')' {
                depth -= 1;
            }
            s.push(ch);
            i += 1;
        }
        toks.push(Tok {
            text: s,
            col,
            quoted: false,
        });
    }
    Ok(toks)
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> AsmError {
    AsmError::new(line, col, AsmErrorKind::Syntax(msg.into()))
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$' => {}
        _ => return false,
    }
    cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

fn parse_int(s: &str) -> Option<i32> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v: i64 = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else {
        body.parse().ok()?
    };
    let v = if neg { -v } else { v };
    if (i32::MIN as i64..=u32::MAX as i64).contains(&v) {
        // Hex literals may spell the full unsigned range.
        Some(v as u32 as i32)
    } else {
        None
    }
}

/// Parse a type written in assembly syntax.
pub fn parse_type(s: &str) -> Option<Type> {
    match s {
        "void" => return Some(Type::Void),
        "int" => return Some(Type::Int(None)),
        "bool" => return Some(Type::Bool),
        "str" => return Some(Type::Str),
        "any" => return Some(Type::Any),
        _ => {}
    }
    if let Some(rest) = s.strip_prefix("int[").and_then(|r| r.strip_suffix(']')) {
        let (lo, hi) = rest.split_once("..")?;
        let (lo, hi) = (parse_int(lo)?, parse_int(hi)?);
        return if lo <= hi {
            Some(Type::Int(Some((lo, hi))))
        } else {
            None
        };
    }
    if let Some(inner) = s.strip_prefix("ref<").and_then(|r| r.strip_suffix('>')) {
        return if is_ident(inner) {
            Some(Type::Ref(inner.into()))
        } else {
            None
        };
    }
    if let Some(inner) = s.strip_prefix("arr<").and_then(|r| r.strip_suffix('>')) {
        let t = parse_type(inner)?;
        return if t == Type::Void {
            None
        } else {
            Some(Type::Arr(Box::new(t)))
        };
    }
    None
}

fn parse_member(tok: &Tok, line: usize) -> Result<MemberRef, AsmError> {
    match super::split_qualified(&tok.text) {
        Some((c, m)) if is_ident(c) && is_ident(m) => Ok(MemberRef::new(c, m)),
        _ => Err(syntax(line, tok.col, format!("expected Class.member, got `{}`", tok.text))),
    }
}

fn parse_literal(tok: &Tok, line: usize) -> Result<Literal, AsmError> {
    if tok.quoted {
        return Ok(Literal::Str(tok.text.clone()));
    }
    match tok.text.as_str() {
        "true" => Ok(Literal::Bool(true)),
        "false" => Ok(Literal::Bool(false)),
        "null" => Ok(Literal::Null),
        t => parse_int(t)
            .map(Literal::Int)
            .ok_or_else(|| syntax(line, tok.col, format!("bad literal `{}`", t))),
    }
}

/// `key=value` option tokens after the positional part of a header.
fn split_opt(t: &Tok) -> Option<(&str, &str)> {
    if t.quoted {
        None
    } else {
        t.text.split_once('=')
    }
}

struct PendingMethod {
    def: MethodDef,
    /// (instruction index, label name, line, col) for branches to resolve.
    fixups: Vec<(usize, String, usize, usize)>,
    /// Source line of each instruction, for diagnostics.
    lines: Vec<usize>,
    header_line: usize,
}

struct Builder {
    classes: Vec<ClassDef>,
    class_lines: Vec<usize>,
    externs: Vec<(ExternDecl, usize)>,
    entry: Option<(String, usize, usize)>,
    method: Option<PendingMethod>,
    method_lines: BTreeMap<(String, String), (usize, Vec<usize>)>,
}

impl Builder {
    fn finish_method(&mut self) -> Result<(), AsmError> {
        let Some(mut pm) = self.method.take() else {
            return Ok(());
        };
        for (idx, label, line, col) in pm.fixups.drain(..) {
            let target = *pm.def.labels.get(&label).ok_or_else(|| {
                AsmError::new(line, col, AsmErrorKind::Unresolved(format!("label `{}`", label)))
            })?;
            set_target(&mut pm.def.body[idx], target);
        }
        for (name, &pc) in &pm.def.labels {
            if pc >= pm.def.body.len() {
                return Err(syntax(
                    pm.header_line,
                    1,
                    format!("label `{}` does not precede an instruction", name),
                ));
            }
        }
        let class = self.classes.last_mut().expect("method outside class");
        self.method_lines.insert(
            (class.name.clone(), pm.def.name.clone()),
            (pm.header_line, pm.lines),
        );
        class.methods.push(pm.def);
        Ok(())
    }
}

fn set_target(insn: &mut Insn, target: usize) {
    match insn {
        Insn::If(_, t) | Insn::IfICmp(_, t) | Insn::IfNull(_, t) | Insn::IfACmp(_, t) => {
            *t = target
        }
        Insn::Goto(t) => *t = target,
        _ => unreachable!(),
    }
}

fn parse_params(tok: &Tok, line: usize) -> Result<(String, Vec<(String, Type)>), AsmError> {
    let open = tok
        .text
        .find('(')
        .ok_or_else(|| syntax(line, tok.col, "expected `name(params)`"))?;
    if !tok.text.ends_with(')') {
        return Err(syntax(line, tok.col, "expected `)`"));
    }
    let name = &tok.text[..open];
    if !is_ident(name) && super::split_qualified(name).is_none() {
        return Err(syntax(line, tok.col, format!("bad name `{}`", name)));
    }
    let inner = &tok.text[open + 1..tok.text.len() - 1];
    let mut params = Vec::new();
    for (i, p) in inner.split(',').map(str::trim).enumerate() {
        if p.is_empty() {
            if inner.trim().is_empty() {
                break;
            }
            return Err(syntax(line, tok.col, "empty parameter"));
        }
        match p.split_once(':') {
            Some((n, t)) => {
                let ty = parse_type(t.trim())
                    .ok_or_else(|| syntax(line, tok.col, format!("bad type `{}`", t)))?;
                params.push((n.trim().to_string(), ty));
            }
            None => {
                // Extern declarations list bare types.
                let ty = parse_type(p)
                    .ok_or_else(|| syntax(line, tok.col, format!("bad parameter `{}`", p)))?;
                params.push((format!("a{}", i), ty));
            }
        }
    }
    Ok((name.to_string(), params))
}

fn parse_field(toks: &[Tok], line: usize, is_static: bool) -> Result<FieldDef, AsmError> {
    let decl = toks
        .get(1)
        .ok_or_else(|| syntax(line, toks[0].col, "expected `name:type`"))?;
    let (name, ty) = decl
        .text
        .split_once(':')
        .ok_or_else(|| syntax(line, decl.col, "expected `name:type`"))?;
    if !is_ident(name) {
        return Err(syntax(line, decl.col, format!("bad field name `{}`", name)));
    }
    let ty = parse_type(ty).ok_or_else(|| syntax(line, decl.col, format!("bad type `{}`", ty)))?;
    if ty == Type::Void {
        return Err(syntax(line, decl.col, "fields cannot be void"));
    }
    let mut init = None;
    let mut manifest = None;
    let mut i = 2;
    while i < toks.len() {
        let t = &toks[i];
        if !t.quoted && t.text == "=" {
            if !is_static {
                return Err(syntax(line, t.col, "only statics take initializers"));
            }
            let lit = toks
                .get(i + 1)
                .ok_or_else(|| syntax(line, t.col, "missing initializer"))?;
            init = Some(parse_literal(lit, line)?);
            i += 2;
            continue;
        }
        match split_opt(t) {
            Some(("manifest", k)) if !k.is_empty() => manifest = Some(k.to_string()),
            _ => return Err(syntax(line, t.col, format!("unexpected `{}`", t.text))),
        }
        i += 1;
    }
    Ok(FieldDef {
        name: name.into(),
        ty,
        init,
        manifest,
    })
}

fn parse_insn(
    toks: &[Tok],
    line: usize,
    pm: &mut PendingMethod,
) -> Result<Insn, AsmError> {
    let op = &toks[0];
    let arg = |n: usize| -> Result<&Tok, AsmError> {
        toks.get(n)
            .ok_or_else(|| syntax(line, op.col, format!("`{}` needs an operand", op.text)))
    };
    let expect_arity = |n: usize| -> Result<(), AsmError> {
        if toks.len() != n + 1 {
            Err(syntax(
                line,
                op.col,
                format!("`{}` takes {} operand(s)", op.text, n),
            ))
        } else {
            Ok(())
        }
    };
    let slot = |t: &Tok, pm: &PendingMethod| -> Result<u16, AsmError> {
        if let Ok(n) = t.text.parse::<u16>() {
            return Ok(n);
        }
        let d = &pm.def;
        let base = u16::from(!d.is_static);
        if t.text == "this" && !d.is_static {
            return Ok(0);
        }
        if let Some(i) = d.params.iter().position(|(n, _)| *n == t.text) {
            return Ok(base + i as u16);
        }
        if let Some((_, s)) = d.local_names.iter().find(|(n, _)| *n == t.text) {
            return Ok(*s);
        }
        Err(AsmError::new(
            line,
            t.col,
            AsmErrorKind::Unresolved(format!("local `{}`", t.text)),
        ))
    };
    let branch = |make: fn(usize) -> Insn, pm: &mut PendingMethod| -> Result<Insn, AsmError> {
        expect_arity(1)?;
        let t = arg(1)?;
        if !is_ident(&t.text) {
            return Err(syntax(line, t.col, "expected a label"));
        }
        pm.fixups
            .push((pm.def.body.len(), t.text.clone(), line, t.col));
        Ok(make(0))
    };
    let cmp = |s: &str| -> Option<CmpOp> {
        [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt, CmpOp::Le]
            .into_iter()
            .find(|c| c.suffix() == s)
    };
    let text = op.text.as_str();
    let insn = match text {
        "const" => {
            expect_arity(1)?;
            Insn::Const(parse_literal(arg(1)?, line)?)
        }
        "load" | "store" => {
            expect_arity(1)?;
            let s = slot(arg(1)?, pm)?;
            if text == "load" {
                Insn::Load(s)
            } else {
                Insn::Store(s)
            }
        }
        "dup" => Insn::Dup,
        "pop" => Insn::Pop,
        "add" => Insn::Arith(ArithOp::Add),
        "sub" => Insn::Arith(ArithOp::Sub),
        "mul" => Insn::Arith(ArithOp::Mul),
        "div" => Insn::Arith(ArithOp::Div),
        "mod" => Insn::Arith(ArithOp::Mod),
        "and" => Insn::Arith(ArithOp::And),
        "or" => Insn::Arith(ArithOp::Or),
        "xor" => Insn::Arith(ArithOp::Xor),
        "shl" => Insn::Arith(ArithOp::Shl),
        "shr" => Insn::Arith(ArithOp::Shr),
        "goto" => branch(Insn::Goto, pm)?,
        "ifnull" => branch(|t| Insn::IfNull(true, t), pm)?,
        "ifnonnull" => branch(|t| Insn::IfNull(false, t), pm)?,
        "if_acmpeq" => branch(|t| Insn::IfACmp(true, t), pm)?,
        "if_acmpne" => branch(|t| Insn::IfACmp(false, t), pm)?,
        "new" => {
            expect_arity(1)?;
            let t = arg(1)?;
            if !is_ident(&t.text) {
                return Err(syntax(line, t.col, "expected a class name"));
            }
            Insn::New(t.text.clone())
        }
        "getfield" => Insn::GetField(parse_member(arg(1)?, line)?),
        "putfield" => Insn::PutField(parse_member(arg(1)?, line)?),
        "getstatic" => Insn::GetStatic(parse_member(arg(1)?, line)?),
        "putstatic" => Insn::PutStatic(parse_member(arg(1)?, line)?),
        "invokevirtual" => Insn::InvokeVirtual(parse_member(arg(1)?, line)?),
        "invokestatic" => Insn::InvokeStatic(parse_member(arg(1)?, line)?),
        "invokespecial" => Insn::InvokeSpecial(parse_member(arg(1)?, line)?),
        "invokeintrinsic" => {
            expect_arity(1)?;
            let t = arg(1)?;
            Insn::InvokeIntrinsic(Intrinsic::from_name(&t.text).ok_or_else(|| {
                AsmError::new(
                    line,
                    t.col,
                    AsmErrorKind::Unresolved(format!("intrinsic `{}`", t.text)),
                )
            })?)
        }
        "newarray" => {
            expect_arity(1)?;
            let t = arg(1)?;
            let ty = parse_type(&t.text)
                .filter(|t| *t != Type::Void)
                .ok_or_else(|| syntax(line, t.col, format!("bad element type `{}`", t.text)))?;
            Insn::NewArray(ty)
        }
        "aaload" => Insn::AaLoad,
        "aastore" => Insn::AaStore,
        "iaload" => Insn::IaLoad,
        "iastore" => Insn::IaStore,
        "arraylength" => Insn::ArrayLength,
        "return" => Insn::Return,
        "sconcat" => Insn::SConcat,
        "sequals" => Insn::SEquals,
        "throw" => Insn::Throw,
        _ => {
            if let Some(c) = text.strip_prefix("if_icmp").and_then(cmp) {
                branch(
                    match c {
                        CmpOp::Eq => |t| Insn::IfICmp(CmpOp::Eq, t),
                        CmpOp::Ne => |t| Insn::IfICmp(CmpOp::Ne, t),
                        CmpOp::Lt => |t| Insn::IfICmp(CmpOp::Lt, t),
                        CmpOp::Ge => |t| Insn::IfICmp(CmpOp::Ge, t),
                        CmpOp::Gt => |t| Insn::IfICmp(CmpOp::Gt, t),
                        CmpOp::Le => |t| Insn::IfICmp(CmpOp::Le, t),
                    },
                    pm,
                )?
            } else if let Some(c) = text.strip_prefix("if").and_then(cmp) {
                branch(
                    match c {
                        CmpOp::Eq => |t| Insn::If(CmpOp::Eq, t),
                        CmpOp::Ne => |t| Insn::If(CmpOp::Ne, t),
                        CmpOp::Lt => |t| Insn::If(CmpOp::Lt, t),
                        CmpOp::Ge => |t| Insn::If(CmpOp::Ge, t),
                        CmpOp::Gt => |t| Insn::If(CmpOp::Gt, t),
                        CmpOp::Le => |t| Insn::If(CmpOp::Le, t),
                    },
                    pm,
                )?
            } else {
                return Err(syntax(line, op.col, format!("unknown opcode `{}`", text)));
            }
        }
    };
    let arity = match &insn {
        Insn::GetField(_)
        | Insn::PutField(_)
        | Insn::GetStatic(_)
        | Insn::PutStatic(_)
        | Insn::InvokeVirtual(_)
        | Insn::InvokeStatic(_)
        | Insn::InvokeSpecial(_) => 1,
        Insn::Dup
        | Insn::Pop
        | Insn::Arith(_)
        | Insn::AaLoad
        | Insn::AaStore
        | Insn::IaLoad
        | Insn::IaStore
        | Insn::ArrayLength
        | Insn::Return
        | Insn::SConcat
        | Insn::SEquals
        | Insn::Throw => 0,
        _ => toks.len() - 1,
    };
    expect_arity(arity)?;
    Ok(insn)
}

/// Parse, resolve and verify guest assembly.
pub fn assemble(text: &str) -> Result<Program, AsmError> {
    let mut b = Builder {
        classes: Vec::new(),
        class_lines: Vec::new(),
        externs: Vec::new(),
        entry: None,
        method: None,
        method_lines: BTreeMap::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let toks = tokenize(raw, line)?;
        let Some(head) = toks.first() else { continue };
        let kw = if head.quoted { "" } else { head.text.as_str() };
        match kw {
            "entry" => {
                b.finish_method()?;
                let t = toks.get(1).ok_or_else(|| syntax(line, head.col, "entry needs a method"))?;
                if toks.len() != 2 {
                    return Err(syntax(line, head.col, "entry takes one operand"));
                }
                if b.entry.is_some() {
                    return Err(syntax(line, head.col, "duplicate entry"));
                }
                b.entry = Some((t.text.clone(), line, t.col));
            }
            "extern" => {
                b.finish_method()?;
                let sig = toks.get(1).ok_or_else(|| syntax(line, head.col, "extern needs a name"))?;
                let (name, params) = parse_params(sig, line)?;
                if super::split_qualified(&name).is_none() {
                    return Err(syntax(line, sig.col, "extern names are Class.method"));
                }
                let mut policy = None;
                let mut ret = Type::Void;
                for t in &toks[2..] {
                    match split_opt(t) {
                        Some(("policy", p)) => {
                            policy = Some(ExternPolicy::from_name(p).ok_or_else(|| {
                                syntax(line, t.col, format!("unknown policy `{}`", p))
                            })?)
                        }
                        Some(("returns", r)) => {
                            ret = parse_type(r)
                                .ok_or_else(|| syntax(line, t.col, format!("bad type `{}`", r)))?
                        }
                        _ => return Err(syntax(line, t.col, format!("unexpected `{}`", t.text))),
                    }
                }
                let policy = policy.ok_or_else(|| syntax(line, head.col, "extern needs policy="))?;
                if policy == ExternPolicy::Ignore && ret != Type::Void {
                    return Err(AsmError::new(
                        line,
                        head.col,
                        AsmErrorKind::Invalid("policy=ignore requires a void extern".into()),
                    ));
                }
                b.externs.push((
                    ExternDecl {
                        name,
                        params: params.into_iter().map(|(_, t)| t).collect(),
                        ret,
                        policy,
                    },
                    line,
                ));
            }
            "class" => {
                b.finish_method()?;
                let name = toks.get(1).ok_or_else(|| syntax(line, head.col, "class needs a name"))?;
                if !is_ident(&name.text) {
                    return Err(syntax(line, name.col, "bad class name"));
                }
                let mut c = ClassDef {
                    name: name.text.clone(),
                    super_class: None,
                    singleton: false,
                    handler: false,
                    statemachine: false,
                    builtin: false,
                    statics: Vec::new(),
                    fields: Vec::new(),
                    methods: Vec::new(),
                };
                let mut i = 2;
                while i < toks.len() {
                    let t = &toks[i];
                    match t.text.as_str() {
                        "extends" => {
                            let s = toks.get(i + 1).ok_or_else(|| syntax(line, t.col, "extends needs a class"))?;
                            if !is_ident(&s.text) {
                                return Err(syntax(line, s.col, "bad superclass name"));
                            }
                            c.super_class = Some(s.text.clone());
                            i += 1;
                        }
                        "singleton" => c.singleton = true,
                        "handler" => c.handler = true,
                        "statemachine" => c.statemachine = true,
                        _ => return Err(syntax(line, t.col, format!("unexpected `{}`", t.text))),
                    }
                    i += 1;
                }
                b.classes.push(c);
                b.class_lines.push(line);
            }
            "static" | "field" => {
                b.finish_method()?;
                let class = b
                    .classes
                    .last_mut()
                    .ok_or_else(|| syntax(line, head.col, "field outside class"))?;
                let f = parse_field(&toks, line, kw == "static")?;
                if kw == "static" {
                    if class.statics.iter().any(|s| s.name == f.name) {
                        return Err(AsmError::new(
                            line,
                            toks[1].col,
                            AsmErrorKind::Invalid(format!("duplicate static `{}`", f.name)),
                        ));
                    }
                    class.statics.push(f);
                } else {
                    class.fields.push(f);
                }
            }
            "method" => {
                b.finish_method()?;
                if b.classes.is_empty() {
                    return Err(syntax(line, head.col, "method outside class"));
                }
                let sig = toks.get(1).ok_or_else(|| syntax(line, head.col, "method needs a signature"))?;
                let (name, params) = parse_params(sig, line)?;
                if !is_ident(&name) {
                    return Err(syntax(line, sig.col, "bad method name"));
                }
                let mut def = MethodDef {
                    name,
                    params,
                    ret: Type::Void,
                    is_static: false,
                    is_virtual: false,
                    is_interface: false,
                    locals: 0,
                    local_names: Vec::new(),
                    labels: BTreeMap::new(),
                    body: Vec::new(),
                };
                let mut locals = None;
                for t in &toks[2..] {
                    match (t.text.as_str(), split_opt(t)) {
                        ("static", _) => def.is_static = true,
                        ("virtual", _) => def.is_virtual = true,
                        ("interface", _) => def.is_interface = true,
                        (_, Some(("locals", n))) => {
                            locals = Some(n.parse::<u16>().map_err(|_| syntax(line, t.col, "bad locals count"))?)
                        }
                        (_, Some(("returns", r))) => {
                            def.ret = parse_type(r).ok_or_else(|| syntax(line, t.col, format!("bad type `{}`", r)))?
                        }
                        _ => return Err(syntax(line, t.col, format!("unexpected `{}`", t.text))),
                    }
                }
                let min = def.param_slots();
                def.locals = locals.unwrap_or(min);
                if def.locals < min {
                    return Err(syntax(line, head.col, format!("locals={} is below the {} parameter slots", def.locals, min)));
                }
                let class = b.classes.last().unwrap();
                if class.methods.iter().any(|m| m.name == def.name) {
                    return Err(AsmError::new(line, sig.col, AsmErrorKind::Invalid(format!("duplicate method `{}`", def.name))));
                }
                b.method = Some(PendingMethod {
                    def,
                    fixups: Vec::new(),
                    lines: Vec::new(),
                    header_line: line,
                });
            }
            "local" if b.method.is_some() => {
                let pm = b.method.as_mut().unwrap();
                let t = toks.get(1).ok_or_else(|| syntax(line, head.col, "local needs a name"))?;
                if toks.len() != 2 || !is_ident(&t.text) {
                    return Err(syntax(line, head.col, "expected `local name`"));
                }
                let next = pm.def.param_slots() + pm.def.local_names.len() as u16;
                if next >= pm.def.locals {
                    return Err(syntax(line, head.col, "more named locals than locals="));
                }
                if pm.def.params.iter().any(|(n, _)| *n == t.text)
                    || pm.def.local_names.iter().any(|(n, _)| *n == t.text)
                {
                    return Err(syntax(line, t.col, format!("local `{}` already named", t.text)));
                }
                pm.def.local_names.push((t.text.clone(), next));
            }
            _ => {
                let Some(pm) = b.method.as_mut() else {
                    return Err(syntax(line, head.col, format!("unexpected `{}` outside a method", head.text)));
                };
                if toks.len() == 1 && !head.quoted && head.text.ends_with(':') {
                    let l = &head.text[..head.text.len() - 1];
                    if !is_ident(l) {
                        return Err(syntax(line, head.col, "bad label"));
                    }
                    if pm.def.labels.insert(l.to_string(), pm.def.body.len()).is_some() {
                        return Err(syntax(line, head.col, format!("duplicate label `{}`", l)));
                    }
                    continue;
                }
                let insn = parse_insn(&toks, line, pm)?;
                pm.def.body.push(insn);
                pm.lines.push(line);
            }
        }
    }
    b.finish_method()?;

    let (entry, eline, ecol) = b
        .entry
        .clone()
        .ok_or_else(|| syntax(1, 1, "missing `entry` declaration"))?;
    let mut classes = b.classes;
    for c in &classes {
        if builtin_classes().iter().any(|bc| bc.name == c.name) {
            let line = b.class_lines[classes.iter().position(|x| x.name == c.name).unwrap()];
            return Err(AsmError::new(line, 1, AsmErrorKind::Invalid(format!("class name `{}` is reserved", c.name))));
        }
    }
    classes.extend(builtin_classes());
    let class_lines = b.class_lines;
    let externs: Vec<ExternDecl> = b.externs.iter().map(|(e, _)| e.clone()).collect();
    for (i, (e, line)) in b.externs.iter().enumerate() {
        if externs[..i].iter().any(|o| o.name == e.name) {
            return Err(AsmError::new(*line, 1, AsmErrorKind::Invalid(format!("duplicate extern `{}`", e.name))));
        }
    }
    for (i, c) in classes.iter().enumerate() {
        if let Some(s) = &c.super_class {
            if !classes.iter().any(|o| o.name == *s) {
                let line = class_lines.get(i).copied().unwrap_or(1);
                return Err(AsmError::new(line, 1, AsmErrorKind::Unresolved(format!("superclass `{}` of `{}`", s, c.name))));
            }
        }
    }
    let program = Program::new(classes, entry.clone(), externs).map_err(|e| {
        AsmError::new(1, 1, AsmErrorKind::Invalid(e))
    })?;
    let eid = program.resolve_qualified(&entry).map_err(|_| {
        AsmError::new(eline, ecol, AsmErrorKind::Unresolved(format!("entry method `{}`", entry)))
    })?;
    if !program.method(eid).is_static || !program.method(eid).params.is_empty() {
        return Err(AsmError::new(eline, ecol, AsmErrorKind::Invalid("entry must be a static method without parameters".into())));
    }
    verify::verify(&program, &b.method_lines)?;
    Ok(program)
}
