//! Static call graph over guest methods and target reachability.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Insn, Location, MethodId, Program};

/// Call edges with `invokevirtual` expanded to every override in the
/// receiver's subtree (class-hierarchy analysis). Message sends to handler
/// and state-machine receivers get edges to the methods they are rewritten
/// into at run time.
#[derive(Debug, Clone)]
pub struct CallGraph {
    sites: BTreeMap<(MethodId, usize), BTreeSet<MethodId>>,
    callers: BTreeMap<MethodId, BTreeSet<MethodId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachable {
    pub method: String,
    pub distance: usize,
}

/// Instructions reachable from a method's entry.
pub(crate) fn live_pcs(body: &[Insn]) -> Vec<bool> {
    let mut live = vec![false; body.len()];
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        if pc >= body.len() || live[pc] {
            continue;
        }
        live[pc] = true;
        if let Some(t) = body[pc].branch_target() {
            work.push(t);
        }
        if body[pc].falls_through() {
            work.push(pc + 1);
        }
    }
    live
}

impl CallGraph {
    pub fn build(program: &Program) -> CallGraph {
        let mut sites = BTreeMap::new();
        let mut callers: BTreeMap<MethodId, BTreeSet<MethodId>> = BTreeMap::new();
        for (ci, c) in program.classes.iter().enumerate() {
            for (mi, m) in c.methods.iter().enumerate() {
                let here = MethodId { class: ci, method: mi };
                let live = live_pcs(&m.body);
                for (pc, insn) in m.body.iter().enumerate() {
                    if !live[pc] {
                        continue;
                    }
                    let targets = Self::site_targets(program, insn);
                    if targets.is_empty() {
                        continue;
                    }
                    for t in &targets {
                        callers.entry(*t).or_default().insert(here);
                    }
                    sites.insert((here, pc), targets);
                }
            }
        }
        CallGraph { sites, callers }
    }

    fn site_targets(program: &Program, insn: &Insn) -> BTreeSet<MethodId> {
        let mut out = BTreeSet::new();
        match insn {
            Insn::InvokeStatic(m) | Insn::InvokeSpecial(m) => {
                if let Ok(id) = program.resolve_dispatch(&m.class, &m.name) {
                    out.insert(id);
                }
            }
            Insn::InvokeVirtual(m) => {
                for sub in program.subclasses_of(&m.class) {
                    if m.name == "sendMessage" && program.is_handler_class(&sub.name) {
                        if let Ok(id) = program.resolve_dispatch(&sub.name, "handleMessage") {
                            out.insert(id);
                        }
                        continue;
                    }
                    if m.name == "sendMessage" && program.is_statemachine_class(&sub.name) {
                        for (ci, c) in program.classes.iter().enumerate() {
                            if let Some(mi) = c.methods.iter().position(|x| x.name == "processMessage") {
                                out.insert(MethodId { class: ci, method: mi });
                            }
                        }
                        continue;
                    }
                    if let Ok(id) = program.resolve_dispatch(&sub.name, &m.name) {
                        out.insert(id);
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Possible callees of the call instruction at `pc` in `method`.
    pub fn callees_at(&self, method: MethodId, pc: usize) -> Option<&BTreeSet<MethodId>> {
        self.sites.get(&(method, pc))
    }

    pub fn callers_of(&self, method: MethodId) -> impl Iterator<Item = &MethodId> {
        self.callers.get(&method).into_iter().flatten()
    }

    /// Shortest call-graph distance from every method to `target_method`.
    pub fn distances_to(&self, target_method: MethodId) -> BTreeMap<MethodId, usize> {
        let mut dist = BTreeMap::new();
        let mut q = VecDeque::new();
        dist.insert(target_method, 0usize);
        q.push_back(target_method);
        while let Some(m) = q.pop_front() {
            let d = dist[&m];
            for c in self.callers_of(m) {
                if !dist.contains_key(c) {
                    dist.insert(*c, d + 1);
                    q.push_back(*c);
                }
            }
        }
        dist
    }
}

/// Per-instruction answer to "can execution starting here still reach the
/// target without returning from this method?".
#[derive(Debug, Clone)]
pub struct TargetReach {
    pub target: Location,
    per_method: BTreeMap<MethodId, Vec<bool>>,
}

impl TargetReach {
    pub fn compute(program: &Program, graph: &CallGraph, target: Location) -> TargetReach {
        let mut may_reach: BTreeSet<MethodId> = BTreeSet::new();
        let mut per_method: BTreeMap<MethodId, Vec<bool>> = BTreeMap::new();
        loop {
            let mut changed = false;
            for (ci, c) in program.classes.iter().enumerate() {
                for (mi, m) in c.methods.iter().enumerate() {
                    let id = MethodId { class: ci, method: mi };
                    let n = m.body.len();
                    let mut can = vec![false; n];
                    for pc in 0..n {
                        let good = (id == target.method && pc == target.pc)
                            || graph
                                .callees_at(id, pc)
                                .is_some_and(|cs| cs.iter().any(|c| may_reach.contains(c)));
                        can[pc] = good;
                    }
                    // Backward propagation to a fixpoint over the CFG.
                    let mut dirty = true;
                    while dirty {
                        dirty = false;
                        for pc in (0..n).rev() {
                            if can[pc] {
                                continue;
                            }
                            let insn = &m.body[pc];
                            let succ_ok = insn.branch_target().is_some_and(|t| t < n && can[t])
                                || (insn.falls_through() && pc + 1 < n && can[pc + 1]);
                            if succ_ok {
                                can[pc] = true;
                                dirty = true;
                            }
                        }
                    }
                    if n > 0 && can[0] && may_reach.insert(id) {
                        changed = true;
                    }
                    per_method.insert(id, can);
                }
            }
            if !changed {
                break;
            }
        }
        TargetReach { target, per_method }
    }

    pub fn can_reach(&self, method: MethodId, pc: usize) -> bool {
        self.per_method
            .get(&method)
            .and_then(|v| v.get(pc))
            .copied()
            .unwrap_or(false)
    }

    pub fn method_may_reach(&self, method: MethodId) -> bool {
        self.can_reach(method, 0)
    }
}

/// Interface methods from which `target` is reachable over the static call
/// graph, ranked by shortest call distance (ties broken by name).
pub fn call_graph_reachable(program: &Program, target: Location) -> Vec<Reachable> {
    let body = &program.method(target.method).body;
    if !live_pcs(body).get(target.pc).copied().unwrap_or(false) {
        return Vec::new();
    }
    let graph = CallGraph::build(program);
    let dist = graph.distances_to(target.method);
    let mut out: Vec<Reachable> = dist
        .iter()
        .map(|(m, d)| (program.method_name(*m), *d))
        .filter(|(name, _)| program.interface_methods.contains(name))
        .map(|(method, distance)| Reachable { method, distance })
        .collect();
    out.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| a.method.cmp(&b.method)));
    out
}
