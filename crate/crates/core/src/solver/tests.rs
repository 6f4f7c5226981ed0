use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::isa::{ArithOp, CmpOp};

fn c(x: i32) -> Arc<Term> {
    Term::constant(x)
}

fn bin(op: ArithOp, a: Arc<Term>, b: Arc<Term>) -> Arc<Term> {
    Term::bin(op, a, b)
}

/// `(((((x & 0x7F7FFFFF) | 0x10000000) | 0x8000000) | 0x10000000) & 0x80000) != 0x80000`
fn exploit_condition(x: Arc<Term>) -> Formula {
    let t = bin(ArithOp::And, x, c(0x7F7F_FFFF));
    let t = bin(ArithOp::Or, t, c(0x1000_0000));
    let t = bin(ArithOp::Or, t, c(0x0800_0000));
    let t = bin(ArithOp::Or, t, c(0x1000_0000));
    let t = bin(ArithOp::And, t, c(0x80000));
    Formula::cmp(CmpOp::Ne, t, c(0x80000))
}

fn model_of(pairs: &[(VarId, ModelValue)]) -> Model {
    pairs.iter().cloned().collect()
}

#[test]
fn evaluate_hex_and() {
    let pc = PathCondition::new();
    let t = bin(ArithOp::And, c(0x1008_0000), c(0x80000));
    assert_eq!(evaluate(&t, &Model::new(), &pc), Ok(0x80000));
}

#[test]
fn evaluate_identity() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("x", Sort::int());
    let m = model_of(&[(x, ModelValue::Int(5))]);
    assert_eq!(evaluate(&Term::Var(x), &m, &pc), Ok(5));
}

#[test]
fn exploit_condition_holds_at_zero() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("flags", Sort::int());
    let f = exploit_condition(Term::var(x));
    let m = model_of(&[(x, ModelValue::Int(0))]);
    assert_eq!(eval_formula(&f, &m, &pc), Ok(true));
    let m = model_of(&[(x, ModelValue::Int(0x0008_0000))]);
    assert_eq!(eval_formula(&f, &m, &pc), Ok(false));
}

#[test]
fn exploit_condition_is_sat_and_model_checks() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("flags", Sort::int());
    pc.push(exploit_condition(Term::var(x)));
    let r = check_sat(&pc, &SolverConfig::default());
    let m = r.model().expect("sat");
    assert_eq!(pc.satisfied_by(m), Ok(true));
    let ModelValue::Int(v) = m[&x] else { panic!() };
    assert_eq!(v & 0x80000, 0);
}

#[test]
fn uid_index_chain_solves_to_10054() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("uid", Sort::int());
    let t = bin(ArithOp::Sub, bin(ArithOp::Mod, Term::var(x), c(100_000)), c(10_000));
    pc.push(Formula::cmp(CmpOp::Eq, t, c(54)));
    pc.push(Formula::cmp(CmpOp::Ge, Term::var(x), c(10_000)));
    pc.push(Formula::cmp(CmpOp::Le, Term::var(x), c(99_999)));
    let r = check_sat(&pc, &SolverConfig::default());
    assert_eq!(r.model().unwrap()[&x], ModelValue::Int(10_054));
    // The same answer by walking the whole range.
    let hits: Vec<i32> = (10_000..=99_999)
        .filter(|u| u % 100_000 - 10_000 == 54)
        .collect();
    assert_eq!(hits, vec![10_054]);
}

#[test]
fn distinct_atoms_are_unsat() {
    let mut pc = PathCondition::new();
    let s = pc.fresh("s", Sort::Str);
    pc.push(Formula::StrEq(StrTerm::Var(s), StrTerm::Lit("A".into())));
    pc.push(Formula::StrEq(StrTerm::Var(s), StrTerm::Lit("B".into())));
    assert_eq!(check_sat(&pc, &SolverConfig::default()), SatResult::Unsat);
}

#[test]
fn string_disequalities_use_fresh_atoms() {
    let mut pc = PathCondition::new();
    let s = pc.fresh("s", Sort::Str);
    let t = pc.fresh("t", Sort::Str);
    pc.push(Formula::StrEq(StrTerm::Var(s), StrTerm::Lit("A".into())).negate());
    pc.push(Formula::StrEq(StrTerm::Var(s), StrTerm::Var(t)).negate());
    pc.push(Formula::StrEq(StrTerm::Var(t), StrTerm::Lit("A".into())).negate());
    let m = check_sat(&pc, &SolverConfig::default()).model().cloned().unwrap();
    assert_ne!(m[&s], m[&t]);
}

#[test]
fn null_flags() {
    let mut pc = PathCondition::new();
    let r = pc.fresh("r", Sort::Ref);
    pc.push(Formula::IsNull(r).negate());
    let m = check_sat(&pc, &SolverConfig::default()).model().cloned().unwrap();
    assert_eq!(m[&r], ModelValue::Null(false));
    pc.push(Formula::IsNull(r));
    assert_eq!(check_sat(&pc, &SolverConfig::default()), SatResult::Unsat);
}

#[test]
fn conjoin_property_appends_verbatim() {
    let mut pc = PathCondition::new();
    let t = pc.fresh("task", Sort::int());
    let p = Formula::cmp(CmpOp::Eq, Term::var(t), c(7));
    let q = pc.conjoin_property(p.clone()).unwrap();
    assert_eq!(q.conjuncts(), &[p.clone()]);
    let r = q.conjoin_property(p.negate()).unwrap();
    assert_eq!(check_sat(&r, &SolverConfig::default()), SatResult::Unsat);
}

#[test]
fn conjoin_property_rejects_sort_mismatch() {
    let mut pc = PathCondition::new();
    let s = pc.fresh("s", Sort::Str);
    let bad = Formula::cmp(CmpOp::Eq, Term::var(s), c(1));
    assert!(matches!(pc.conjoin_property(bad), Err(SolverError::SortMismatch(_))));
}

#[test]
fn brute_force_small_mask() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("x", Sort::Int { lo: 0, hi: 7 });
    pc.push(Formula::cmp(CmpOp::Eq, bin(ArithOp::And, Term::var(x), c(2)), c(2)));
    let dom: BTreeMap<VarId, Vec<ModelValue>> =
        [(x, (0..8).map(ModelValue::Int).collect())].into_iter().collect();
    let got: Vec<ModelValue> = brute_force(&pc, &dom, 1 << 16)
        .unwrap()
        .into_iter()
        .map(|m| m[&x].clone())
        .collect();
    let want: Vec<ModelValue> = [2, 3, 6, 7].into_iter().map(ModelValue::Int).collect();
    assert_eq!(got, want);
}

#[test]
fn brute_force_empty_pc_is_full_product() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("x", Sort::Int { lo: 0, hi: 2 });
    let b = pc.fresh("b", Sort::boolean());
    let dom: BTreeMap<VarId, Vec<ModelValue>> = [
        (x, (0..3).map(ModelValue::Int).collect()),
        (b, (0..2).map(ModelValue::Int).collect()),
    ]
    .into_iter()
    .collect();
    assert_eq!(brute_force(&pc, &dom, 100).unwrap().len(), 6);
    pc.push(Formula::False);
    assert!(brute_force(&pc, &dom, 100).unwrap().is_empty());
    assert!(matches!(
        brute_force(&pc, &dom, 5),
        Err(BruteForceError::TooLarge { .. })
    ));
}

#[test]
fn canonical_rendering_renames_and_sorts() {
    let mut a = PathCondition::new();
    let x = a.fresh("zeta", Sort::int());
    let y = a.fresh("alpha", Sort::int());
    a.push(Formula::cmp(CmpOp::Lt, Term::var(x), c(3)));
    a.push(Formula::cmp(CmpOp::Eq, Term::var(y), c(0x1008_0000)));
    let mut b = PathCondition::new();
    let _pad = b.fresh("unused", Sort::Str);
    let y2 = b.fresh("other", Sort::int());
    let x2 = b.fresh("names", Sort::int());
    b.push(Formula::cmp(CmpOp::Lt, Term::var(x2), c(3)));
    b.push(Formula::cmp(CmpOp::Eq, Term::var(y2), c(0x1008_0000)));
    assert_eq!(a.render_canonical(), b.render_canonical());
    assert_eq!(a.render_canonical(), "v0 < 3 && v1 == 0x10080000");
    assert_eq!(PathCondition::new().render_canonical(), "true");
}

#[test]
fn seeded_search_is_deterministic() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("x", Sort::Int { lo: -50, hi: 50 });
    let y = pc.fresh("y", Sort::int());
    pc.push(Formula::cmp(CmpOp::Gt, bin(ArithOp::Add, Term::var(x), Term::var(y)), c(10)));
    for seed in 0..8 {
        let cfg = SolverConfig { seed, ..SolverConfig::default() };
        let a = check_sat(&pc, &cfg);
        let b = check_sat(&pc, &cfg);
        assert_eq!(a, b);
        assert_eq!(pc.satisfied_by(a.model().unwrap()), Ok(true));
    }
}

#[test]
fn tiny_budget_reports_unknown() {
    let mut pc = PathCondition::new();
    let x = pc.fresh("x", Sort::int());
    let y = pc.fresh("y", Sort::int());
    pc.push(Formula::cmp(
        CmpOp::Eq,
        bin(ArithOp::Mul, Term::var(x), Term::var(y)),
        c(1_000_003),
    ));
    pc.push(Formula::cmp(CmpOp::Gt, Term::var(x), c(1)));
    pc.push(Formula::cmp(CmpOp::Gt, Term::var(y), c(1)));
    let cfg = SolverConfig { seed: 0, step_budget: 50 };
    assert_eq!(check_sat(&pc, &cfg), SatResult::Unknown);
}

#[derive(Debug, Clone)]
enum GenTerm {
    Var(usize),
    Const(i32),
    Bin(usize, Box<GenTerm>, Box<GenTerm>),
}

fn gen_term() -> impl Strategy<Value = GenTerm> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(GenTerm::Var),
        prop_oneof![-8i32..8, any::<i32>()].prop_map(GenTerm::Const),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        (0usize..10, inner.clone(), inner).prop_map(|(o, a, b)| GenTerm::Bin(o, Box::new(a), Box::new(b)))
    })
}

const OPS: [ArithOp; 10] = [
    ArithOp::Add,
    ArithOp::Sub,
    ArithOp::Mul,
    ArithOp::Div,
    ArithOp::Mod,
    ArithOp::And,
    ArithOp::Or,
    ArithOp::Xor,
    ArithOp::Shl,
    ArithOp::Shr,
];
const CMPS: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt, CmpOp::Le];

fn lower(t: &GenTerm, vars: &[VarId]) -> Arc<Term> {
    match t {
        GenTerm::Var(i) => Term::var(vars[*i % vars.len()]),
        GenTerm::Const(x) => c(*x),
        GenTerm::Bin(o, a, b) => bin(OPS[*o], lower(a, vars), lower(b, vars)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn check_sat_agrees_with_brute_force(
        widths in proptest::collection::vec(0u32..6, 1..4),
        lows in proptest::collection::vec(-20i32..20, 3),
        conj in proptest::collection::vec((0usize..6, gen_term(), gen_term()), 1..4),
        seed in 0u64..4,
    ) {
        let mut pc = PathCondition::new();
        let mut vars = Vec::new();
        let mut dom = BTreeMap::new();
        for (i, w) in widths.iter().enumerate() {
            let lo = lows[i];
            let hi = lo + (1 << w) - 1;
            let v = pc.fresh(alloc::format!("x{}", i), Sort::Int { lo, hi });
            dom.insert(v, (lo..=hi).map(ModelValue::Int).collect::<Vec<_>>());
            vars.push(v);
        }
        for (op, a, b) in &conj {
            pc.push(Formula::cmp(CMPS[*op], lower(a, &vars), lower(b, &vars)));
        }
        let all = brute_force(&pc, &dom, 1 << 16).unwrap();
        let r = check_sat(&pc, &SolverConfig { seed, ..SolverConfig::default() });
        match &r {
            SatResult::Sat(m) => {
                prop_assert!(!all.is_empty());
                prop_assert_eq!(pc.satisfied_by(m), Ok(true));
            }
            SatResult::Unsat => prop_assert!(all.is_empty(), "missed {:?}", all[0]),
            SatResult::Unknown => prop_assert!(false, "unknown"),
        }
    }

    #[test]
    fn rendering_is_total(t in gen_term()) {
        let mut pc = PathCondition::new();
        let vars: Vec<VarId> = (0..3).map(|i| pc.fresh(i.to_string(), Sort::int())).collect();
        pc.push(Formula::cmp(CmpOp::Eq, lower(&t, &vars), c(0)));
        let s: String = pc.render_canonical();
        prop_assert!(!s.is_empty());
    }
}
