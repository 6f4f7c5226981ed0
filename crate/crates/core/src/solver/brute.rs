use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{eval_formula, Model, ModelValue, PathCondition, SolverError, VarId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BruteForceError {
    #[error("no explicit domain for variable `{0}`")]
    MissingDomain(String),
    #[error("domain product {product} exceeds cap {cap}")]
    TooLarge { product: u128, cap: u128 },
    #[error(transparent)]
    Eval(#[from] SolverError),
}

/// Every assignment from the explicit domains that satisfies all
/// conjuncts, in odometer order (last variable fastest).
pub fn brute_force(
    pc: &PathCondition,
    domains: &BTreeMap<VarId, Vec<ModelValue>>,
    cap: u128,
) -> Result<Vec<Model>, BruteForceError> {
    for v in pc.used_vars() {
        if !domains.contains_key(&v) {
            return Err(BruteForceError::MissingDomain(pc.var(v).name.clone()));
        }
    }
    let vars: Vec<(&VarId, &Vec<ModelValue>)> = domains.iter().collect();
    let product = vars
        .iter()
        .try_fold(1u128, |acc, (_, d)| acc.checked_mul(d.len() as u128))
        .unwrap_or(u128::MAX);
    if product > cap {
        return Err(BruteForceError::TooLarge { product, cap });
    }
    let mut out = Vec::new();
    if product == 0 {
        return Ok(out);
    }
    let mut digits = alloc::vec![0usize; vars.len()];
    let mut model: Model = vars.iter().map(|(v, d)| (**v, d[0].clone())).collect();
    'outer: loop {
        let mut ok = true;
        for f in pc.conjuncts() {
            if !eval_formula(f, &model, pc)? {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(model.clone());
        }
        let mut i = vars.len();
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < vars[i].1.len() {
                model.insert(*vars[i].0, vars[i].1[digits[i]].clone());
                break;
            }
            digits[i] = 0;
            model.insert(*vars[i].0, vars[i].1[0].clone());
        }
    }
    Ok(out)
}
