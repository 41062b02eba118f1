//! Control-flow graph, postdominators and control dependence.

use std::collections::BTreeSet;

use crate::ir::{Function, InstrKind};

/// Block-level CFG with a virtual exit node at index `len()`.
#[derive(Debug, Clone)]
pub struct Cfg {
    /// Real successors per block.
    pub succ: Vec<Vec<usize>>,
    /// Whether the block ends in a conditional branch with two distinct targets.
    pub branches: Vec<bool>,
    /// Successors including edges to the virtual exit.
    exit_succ: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn new(f: &Function) -> Cfg {
        let n = f.blocks.len();
        let mut succ = vec![Vec::new(); n];
        let mut branches = vec![false; n];
        let mut exit_succ = vec![Vec::new(); n + 1];
        for (b, block) in f.blocks.iter().enumerate() {
            match block.instrs.last().map(|i| &i.kind) {
                Some(InstrKind::Br { then_label, else_label, .. }) => {
                    for l in [then_label, else_label] {
                        if let Some(t) = f.block_index(l) {
                            if !succ[b].contains(&t) {
                                succ[b].push(t);
                            }
                        }
                    }
                    branches[b] = succ[b].len() == 2;
                }
                Some(InstrKind::Jmp { label }) => {
                    if let Some(t) = f.block_index(label) {
                        succ[b].push(t);
                    }
                }
                Some(InstrKind::Ret { .. }) => exit_succ[b].push(n),
                _ => {}
            }
            exit_succ[b].extend(succ[b].iter().copied());
        }
        // Blocks that can never reach a return get an artificial exit edge so
        // postdominance stays well defined.
        let reaches = reaches_exit(&exit_succ, n);
        for b in 0..n {
            if !reaches[b] {
                exit_succ[b].push(n);
            }
        }
        Cfg { succ, branches, exit_succ }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn exit(&self) -> usize {
        self.succ.len()
    }

    /// Successors including the virtual exit.
    pub fn successors_with_exit(&self, b: usize) -> &[usize] {
        &self.exit_succ[b]
    }
}

fn reaches_exit(succ: &[Vec<usize>], exit: usize) -> Vec<bool> {
    let mut pred = vec![Vec::new(); exit + 1];
    for (b, ss) in succ.iter().enumerate() {
        for &s in ss {
            pred[s].push(b);
        }
    }
    let mut seen = vec![false; exit + 1];
    let mut stack = vec![exit];
    seen[exit] = true;
    while let Some(x) = stack.pop() {
        for &p in &pred[x] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// Postdominator sets (index `len()` is the virtual exit).
pub fn postdominators(cfg: &Cfg) -> Vec<BTreeSet<usize>> {
    let n = cfg.len();
    let all: BTreeSet<usize> = (0..=n).collect();
    let mut pdom = vec![all; n + 1];
    pdom[n] = BTreeSet::from([n]);
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).rev() {
            let mut acc: Option<BTreeSet<usize>> = None;
            for &s in cfg.successors_with_exit(b) {
                acc = Some(match acc {
                    None => pdom[s].clone(),
                    Some(a) => a.intersection(&pdom[s]).copied().collect(),
                });
            }
            let mut new = acc.unwrap_or_default();
            new.insert(b);
            if new != pdom[b] {
                pdom[b] = new;
                changed = true;
            }
        }
    }
    pdom
}

fn immediate_postdominators(pdom: &[BTreeSet<usize>]) -> Vec<Option<usize>> {
    (0..pdom.len())
        .map(|b| {
            let strict: BTreeSet<usize> = pdom[b].iter().copied().filter(|&d| d != b).collect();
            strict.iter().copied().find(|&d| pdom[d] == strict)
        })
        .collect()
}

/// For each block, the branch blocks it is control dependent on.
pub fn control_dependences(cfg: &Cfg) -> Vec<BTreeSet<usize>> {
    let n = cfg.len();
    let pdom = postdominators(cfg);
    let ipdom = immediate_postdominators(&pdom);
    let mut deps = vec![BTreeSet::new(); n];
    for a in 0..n {
        if !cfg.branches[a] {
            continue;
        }
        for &s in &cfg.succ[a] {
            if pdom[a].contains(&s) && s != a {
                continue;
            }
            let stop = ipdom[a];
            let mut runner = Some(s);
            while let Some(r) = runner {
                if Some(r) == stop || r == n {
                    break;
                }
                deps[r].insert(a);
                runner = ipdom[r];
            }
        }
    }
    deps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    #[test]
    fn loop_body_depends_on_header() {
        let m = parse_module(
            "fn @f(%n: i32) -> void {\n\
             entry:\n  jmp head\n\
             head:\n  %c = cmp lt i32 %n, 3\n  br %c, body, done\n\
             body:\n  jmp head\n\
             done:\n  ret\n}",
        )
        .unwrap();
        let cfg = Cfg::new(&m.functions[0]);
        let deps = control_dependences(&cfg);
        assert!(deps[0].is_empty());
        assert_eq!(deps[1], BTreeSet::from([1]));
        assert_eq!(deps[2], BTreeSet::from([1]));
        assert!(deps[3].is_empty());
    }
}
