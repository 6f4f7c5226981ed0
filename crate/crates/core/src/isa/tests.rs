use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;

const MINIMAL: &str = "
entry Main.main
class Main
  method main() static
    return
";

const HIERARCHY: &str = "
entry A.main
class A
  method main() static
    return
  method who() virtual returns=int
    const 1
    return
  method base() returns=int
    const 10
    return
class B extends A
  method who() virtual returns=int
    const 2
    return
class C extends B
  method other() returns=int
    const 3
    return
";

#[test]
fn minimal_program_has_one_user_class() {
    let p = assemble(MINIMAL).unwrap();
    assert_eq!(p.classes.iter().filter(|c| !c.builtin).count(), 1);
    assert_eq!(p.entry_method, "Main.main");
    assert!(p.interface_methods.is_empty());
}

#[test]
fn undeclared_field_is_a_resolution_error() {
    let src = "
entry Main.main
class Main
  field x:int
  method main() static
    new Main
    getfield Main.y
    pop
    return
";
    let e = assemble(src).unwrap_err();
    assert!(matches!(e.kind, AsmErrorKind::Unresolved(_)), "{:?}", e);
    assert_eq!(e.line, 7);
}

#[test]
fn syntax_error_carries_position() {
    let e = assemble("entry Main.main\nclass Main\n  method main() static\n    frobnicate 3\n").unwrap_err();
    assert!(matches!(e.kind, AsmErrorKind::Syntax(_)));
    assert_eq!(e.line, 4);
}

#[test]
fn stack_imbalance_is_rejected() {
    let src = "
entry Main.main
class Main
  method main() static
    const 1
    return
";
    let e = assemble(src).unwrap_err();
    assert!(matches!(e.kind, AsmErrorKind::StackImbalance { .. }), "{:?}", e);
    let join = "
entry Main.main
class Main
  method main() static locals=1
    load 0
    ifeq skip
    const 1
  skip:
    return
";
    assert!(matches!(
        assemble(join).unwrap_err().kind,
        AsmErrorKind::StackImbalance { .. }
    ));
}

#[test]
fn ignore_policy_needs_void() {
    let src = "
entry Main.main
extern Sys.uid() policy=ignore returns=int
class Main
  method main() static
    return
";
    assert!(matches!(assemble(src).unwrap_err().kind, AsmErrorKind::Invalid(_)));
}

#[test]
fn dispatch_walks_superclasses() {
    let p = assemble(HIERARCHY).unwrap();
    let name = |c: &str, m: &str| p.method_name(p.resolve_dispatch(c, m).unwrap());
    assert_eq!(name("C", "other"), "C.other");
    assert_eq!(name("C", "base"), "A.base");
    assert_eq!(name("C", "who"), "B.who");
    assert_eq!(name("A", "who"), "A.who");
    assert!(matches!(
        p.resolve_dispatch("C", "nope"),
        Err(LookupError::NoSuchMethod { .. })
    ));
    assert!(matches!(p.resolve_dispatch("Z", "who"), Err(LookupError::NoSuchClass(_))));
}

/// Independent oracle: the nearest ancestor defining the method, found by
/// walking the declared superclass names in the source text.
fn oracle_dispatch(src: &str, class: &str, method: &str) -> Option<String> {
    let mut supers = alloc::collections::BTreeMap::new();
    let mut defines: BTreeSet<(String, String)> = BTreeSet::new();
    let mut current = String::new();
    for line in src.lines() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first() {
            Some(&"class") => {
                current = t[1].to_string();
                let s = t.iter().position(|x| *x == "extends").map(|i| t[i + 1].to_string());
                supers.insert(current.clone(), s);
            }
            Some(&"method") => {
                let n = t[1].split('(').next().unwrap();
                defines.insert((current.clone(), n.to_string()));
            }
            _ => {}
        }
    }
    let mut c = Some(class.to_string());
    while let Some(k) = c {
        if defines.contains(&(k.clone(), method.to_string())) {
            return Some(format!("{}.{}", k, method));
        }
        c = supers.get(&k).cloned().flatten();
    }
    None
}

#[test]
fn dispatch_matches_brute_force_walk() {
    let p = assemble(HIERARCHY).unwrap();
    for c in ["A", "B", "C"] {
        for m in ["main", "who", "base", "other"] {
            let got = p.resolve_dispatch(c, m).ok().map(|id| p.method_name(id));
            assert_eq!(got, oracle_dispatch(HIERARCHY, c, m), "{}.{}", c, m);
        }
    }
}

const REACH: &str = "
entry Svc.main
class Svc
  method main() static
    return
  method a() interface
    load this
    invokevirtual Svc.helper
    return
  method b() interface
    load this
    invokevirtual Svc.mid
    return
  method c() interface
    return
  method mid()
    load this
    invokevirtual Svc.helper
    return
  method helper()
    goto done
    const 1
    pop
  done:
    return
";

#[test]
fn reachable_ranked_by_distance() {
    let p = assemble(REACH).unwrap();
    let target = p.locate("Svc.helper:done").unwrap();
    let r = call_graph_reachable(&p, target);
    let got: Vec<(&str, usize)> = r.iter().map(|x| (x.method.as_str(), x.distance)).collect();
    assert_eq!(got, [("Svc.a", 1), ("Svc.b", 2)]);
}

#[test]
fn target_inside_interface_method_is_distance_zero() {
    let p = assemble(REACH).unwrap();
    let r = call_graph_reachable(&p, p.locate("Svc.c@0").unwrap());
    assert_eq!(r, [Reachable { method: "Svc.c".into(), distance: 0 }]);
}

#[test]
fn dead_code_target_is_unreachable() {
    let p = assemble(REACH).unwrap();
    assert!(call_graph_reachable(&p, p.locate("Svc.helper@1").unwrap()).is_empty());
}

#[test]
fn bad_locators() {
    let p = assemble(REACH).unwrap();
    assert!(p.locate("Svc.helper:nolabel").is_err());
    assert!(p.locate("Svc.helper@99").is_err());
    assert!(p.locate("Nope.x@0").is_err());
}

#[test]
fn virtual_edges_cover_every_override() {
    let src = "
entry Base.main
class Base
  method main() static
    return
  method run() interface
    load this
    invokevirtual Base.step
    return
  method step() virtual
    return
class Leaf extends Base
  method step() virtual
  hit:
    return
";
    let p = assemble(src).unwrap();
    let r = call_graph_reachable(&p, p.locate("Leaf.step:hit").unwrap());
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].method, "Base.run");
}

#[test]
fn render_round_trips_fixed_programs() {
    for src in [MINIMAL, HIERARCHY, REACH] {
        let p = assemble(src).unwrap();
        assert_eq!(assemble(&render(&p)).unwrap(), p);
    }
}

// Random programs built from stack-neutral snippets.

#[derive(Debug, Clone)]
enum Snip {
    ConstStore(i32, u16),
    Arith(u16, u16, usize, u16),
    Branch(u16, usize),
    StaticCopy,
    Str(String),
    Call,
}

fn snip() -> impl Strategy<Value = Snip> {
    prop_oneof![
        (any::<i32>(), 0u16..3).prop_map(|(v, s)| Snip::ConstStore(v, s)),
        (0u16..3, 0u16..3, 0usize..10, 0u16..3).prop_map(|(a, b, o, d)| Snip::Arith(a, b, o, d)),
        (0u16..3, 0usize..6).prop_map(|(s, c)| Snip::Branch(s, c)),
        Just(Snip::StaticCopy),
        "[a-z\"\\\\ ]{0,6}".prop_map(Snip::Str),
        Just(Snip::Call),
    ]
}

const OPS: [&str; 10] = ["add", "sub", "mul", "div", "mod", "and", "or", "xor", "shl", "shr"];
const CONDS: [&str; 6] = ["eq", "ne", "lt", "ge", "gt", "le"];

fn program_text(bodies: &[Vec<Snip>], swap: bool) -> String {
    let mut classes = Vec::new();
    let mut base = String::from("class Base\n  static s:int = 3\n  static t:int\n");
    base.push_str("  method main() static\n    return\n");
    base.push_str("  method id(x:int) static returns=int\n    load x\n    return\n");
    for (i, body) in bodies.iter().enumerate() {
        base.push_str(&format!("  method m{}(a:int, b:int) static locals=3\n", i));
        base.push_str("    local tmp\n");
        let mut label = 0;
        for s in body {
            match s {
                Snip::ConstStore(v, slot) => base.push_str(&format!("    const {}\n    store {}\n", v, slot)),
                Snip::Arith(a, b, o, d) => base.push_str(&format!(
                    "    load {}\n    load {}\n    {}\n    store {}\n",
                    a, b, OPS[*o], d
                )),
                Snip::Branch(s, c) => {
                    base.push_str(&format!("    load {}\n    if{} l{}\n    const 0\n    store tmp\n  l{}:\n", s, CONDS[*c], label, label));
                    label += 1;
                }
                Snip::StaticCopy => base.push_str("    getstatic Base.s\n    putstatic Base.t\n"),
                Snip::Str(t) => {
                    let esc = t.replace('\\', "\\\\").replace('"', "\\\"");
                    base.push_str(&format!("    const \"{}\"\n    pop\n", esc));
                }
                Snip::Call => base.push_str("    load a\n    invokestatic Base.id\n    store b\n"),
            }
        }
        base.push_str("    return\n");
    }
    classes.push(base);
    classes.push("class Mid extends Base\n  field f:int[0..9] manifest=flags\n  method v() virtual returns=int\n    load this\n    getfield Mid.f\n    return\n".to_string());
    classes.push("class Leaf extends Mid\n  method v() virtual returns=int\n    const 1\n    return\n".to_string());
    if swap {
        classes.reverse();
    }
    let mut out = String::from("entry Base.main\n");
    for c in classes {
        out.push_str(&c);
    }
    out
}

proptest! {
    #[test]
    fn assemble_render_round_trip(bodies in proptest::collection::vec(proptest::collection::vec(snip(), 0..12), 1..4)) {
        let p = assemble(&program_text(&bodies, false)).unwrap();
        let text = render(&p);
        prop_assert_eq!(assemble(&text).unwrap(), p);
    }

    #[test]
    fn dispatch_independent_of_declaration_order(bodies in proptest::collection::vec(proptest::collection::vec(snip(), 0..4), 1..3)) {
        let a = assemble(&program_text(&bodies, false)).unwrap();
        let b = assemble(&program_text(&bodies, true)).unwrap();
        for c in ["Base", "Mid", "Leaf"] {
            for m in ["v", "id", "main", "m0"] {
                let x = a.resolve_dispatch(c, m).ok().map(|i| a.method_name(i));
                let y = b.resolve_dispatch(c, m).ok().map(|i| b.method_name(i));
                prop_assert_eq!(x, y);
            }
        }
    }
}
