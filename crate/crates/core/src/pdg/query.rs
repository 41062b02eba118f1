//! Traversal predicates over a built graph: node lookup by instruction
//! pattern, nearest next use, and path search.

use std::collections::{HashSet, VecDeque};

use super::{EdgeKind, NodeId, NodeKind, Pdg};
use crate::ir::{BinOp, Function, InstrId, InstrKind, Type};

/// Maximum number of paths enumerated per (src, dst) pair.
pub const PATH_CAP: usize = 10_000;

/// DFS expansions allowed before enumeration gives up and falls back to a
/// single witness path.
const STEP_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FindPathOpts {
    pub control_deps: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    /// `edges[i]` joins `nodes[i]` and `nodes[i + 1]`.
    pub edges: Vec<EdgeKind>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Normalized token form of an instruction: opcode, types, operands. `ret`
/// carries the function's return type.
fn instr_tokens(kind: &InstrKind, f: &Function) -> Vec<String> {
    let mut t = Vec::new();
    match kind {
        InstrKind::Alloca { ty, .. } => t.extend(["alloca".into(), ty.to_string()]),
        InstrKind::Load { ty, addr, .. } => t.extend(["load".into(), ty.to_string(), addr.to_string()]),
        InstrKind::Store { ty, value, addr } => {
            t.extend(["store".into(), ty.to_string(), value.to_string(), addr.to_string()])
        }
        InstrKind::Gep { base_ty, base, indices, .. } => {
            t.extend(["gep".into(), base_ty.to_string(), base.to_string()]);
            t.extend(indices.iter().map(|i| i.to_string()));
        }
        InstrKind::BinOp { op, ty, lhs, rhs, .. } => {
            if let BinOp::Cmp(p) = op {
                t.extend(["cmp".into(), p.mnemonic().into()]);
            } else {
                t.push(op.mnemonic().into());
            }
            t.extend([ty.to_string(), lhs.to_string(), rhs.to_string()]);
        }
        InstrKind::Call { callee, args, .. } => {
            t.extend(["call".into(), format!("@{callee}")]);
            t.extend(args.iter().map(|a| a.to_string()));
        }
        InstrKind::Br { cond, then_label, else_label } => {
            t.extend(["br".into(), cond.to_string(), then_label.clone(), else_label.clone()])
        }
        InstrKind::Jmp { label } => t.extend(["jmp".into(), label.clone()]),
        InstrKind::Ret { value } => {
            t.push("ret".into());
            match value {
                Some(v) => t.extend([f.ret.to_string(), v.to_string()]),
                None => t.push(Type::Void.to_string()),
            }
        }
    }
    t
}

fn is_ptr_token(s: &str) -> bool {
    s.starts_with("ptr(") || s.ends_with('*')
}

fn token_matches(pat: &str, tok: &str) -> bool {
    pat == "_" || pat == tok || (is_ptr_token(pat) && is_ptr_token(tok))
}

/// Whether the pattern's tokens are a prefix of the instruction's tokens.
/// `_` matches any token and `...` ends the pattern early.
fn tokens_match(pat: &[String], toks: &[String]) -> bool {
    for (i, p) in pat.iter().enumerate() {
        if p == "..." {
            return true;
        }
        match toks.get(i) {
            Some(t) if token_matches(p, t) => {}
            _ => return false,
        }
    }
    true
}

fn node_matches(g: &Pdg, f: &Function, id: NodeId, pattern: &str) -> bool {
    let node = g.node(id);
    let pat = pattern.trim();
    for (tag, is_in) in [("FORMAL_IN:", true), ("FORMAL_OUT:", false)] {
        if let Some(rest) = pat.strip_prefix(tag) {
            let toks = split_tokens(rest);
            let (index, ty) = match (&node.kind, is_in) {
                (NodeKind::FormalIn { index, ty }, true) | (NodeKind::FormalOut { index, ty }, false) => {
                    (index, ty)
                }
                _ => return false,
            };
            if node.function != g.function {
                return false;
            }
            let want = [index.to_string(), ty.to_string()];
            return toks.iter().zip(&want).all(|(p, t)| token_matches(p, t));
        }
    }
    if let Some(rest) = pat.strip_prefix("GLOBAL_VALUE:") {
        let name = rest.trim().trim_start_matches('@');
        return matches!(&node.kind, NodeKind::GlobalValue { name: n, .. } if n == name);
    }
    if pat == "ENTRY" {
        return matches!(node.kind, NodeKind::Entry { .. }) && node.function == g.function;
    }
    let Some(instr) = node.kind.instr() else { return false };
    if node.function != g.function {
        return false;
    }
    let Some(ins) = f.instr(instr) else { return false };
    tokens_match(&split_tokens(pat), &instr_tokens(&ins.kind, f))
}

/// All nodes of `f`'s own body matching `pattern`, in program order
/// (formals first, then instructions, then globals).
pub fn find_nodes(g: &Pdg, f: &Function, pattern: &str) -> Vec<NodeId> {
    let mut out = Vec::new();
    for n in g.nodes.iter().filter(|n| {
        n.function == g.function
            && matches!(n.kind, NodeKind::Entry { .. } | NodeKind::FormalIn { .. } | NodeKind::FormalOut { .. })
    }) {
        if node_matches(g, f, n.id, pattern) {
            out.push(n.id);
        }
    }
    for ins in f.instrs() {
        if let Some(&n) = g.instr_index.get(&ins.id) {
            if node_matches(g, f, n, pattern) {
                out.push(n);
            }
        }
    }
    for n in g.nodes.iter().filter(|n| matches!(n.kind, NodeKind::GlobalValue { .. })) {
        if node_matches(g, f, n.id, pattern) {
            out.push(n.id);
        }
    }
    out
}

/// First node of `f` matching `pattern`, if any.
pub fn find_node(g: &Pdg, f: &Function, pattern: &str) -> Option<NodeId> {
    find_nodes(g, f, pattern).into_iter().next()
}

/// The instruction a use node belongs to: the node's own instruction, or the
/// call an actual-in belongs to.
fn use_instr(g: &Pdg, n: NodeId) -> Option<InstrId> {
    let node = g.node(n);
    if node.function != g.function {
        return None;
    }
    match &node.kind {
        NodeKind::ActualIn { call, .. } => Some(*call),
        k => k.instr(),
    }
}

/// The node holding the value an instruction defines: the instruction node,
/// or for a call its return actual-out.
pub fn def_node(g: &Pdg, instr: InstrId) -> Option<NodeId> {
    let n = *g.instr_index.get(&instr)?;
    if let NodeKind::CallSite { .. } = g.node(n).kind {
        return g
            .nodes
            .iter()
            .find(|x| {
                x.function == g.function
                    && matches!(&x.kind, NodeKind::ActualOut { call, slot: super::CallSlot::Ret, .. } if *call == instr)
            })
            .map(|x| x.id);
    }
    Some(n)
}

/// Nearest later instruction (textual block order, then instruction order)
/// using the value `instr` defines.
pub fn find_next_use(g: &Pdg, f: &Function, instr: InstrId) -> Option<InstrId> {
    let order: Vec<InstrId> = f.instrs().map(|i| i.id).collect();
    let pos_of = |id: InstrId| order.iter().position(|&x| x == id);
    let here = pos_of(instr)?;
    let def = def_node(g, instr)?;
    g.successors(def)
        .iter()
        .filter(|(_, k)| matches!(k, EdgeKind::DefUse | EdgeKind::Dgnrl))
        .filter_map(|&(n, _)| use_instr(g, n))
        .filter_map(|id| pos_of(id).map(|p| (p, id)))
        .filter(|&(p, _)| p > here)
        .min()
        .map(|(_, id)| id)
}

fn traversable_succ(g: &Pdg, n: NodeId, opts: FindPathOpts) -> impl Iterator<Item = (NodeId, EdgeKind)> + '_ {
    g.successors(n).iter().copied().filter(move |(_, k)| k.traversable(opts.control_deps))
}

/// Nodes from which `dst` is reachable over traversable edges (including `dst`).
fn reaching(g: &Pdg, dst: NodeId, opts: FindPathOpts) -> Vec<bool> {
    let mut seen = vec![false; g.nodes.len()];
    seen[dst.0 as usize] = true;
    let mut q = VecDeque::from([dst]);
    while let Some(x) = q.pop_front() {
        for &(p, k) in g.predecessors(x) {
            if k.traversable(opts.control_deps) && !seen[p.0 as usize] {
                seen[p.0 as usize] = true;
                q.push_back(p);
            }
        }
    }
    seen
}

/// Whether some path of length at least one leads from `src` to `dst`.
pub fn path_exists(g: &Pdg, src: NodeId, dst: NodeId, opts: FindPathOpts) -> bool {
    shortest_path(g, src, dst, opts).is_some()
}

fn shortest_path(g: &Pdg, src: NodeId, dst: NodeId, opts: FindPathOpts) -> Option<Path> {
    if src == dst {
        return None;
    }
    let mut prev: Vec<Option<(NodeId, EdgeKind)>> = vec![None; g.nodes.len()];
    let mut seen = HashSet::from([src]);
    let mut q = VecDeque::from([src]);
    while let Some(x) = q.pop_front() {
        for (y, k) in traversable_succ(g, x, opts) {
            if seen.insert(y) {
                prev[y.0 as usize] = Some((x, k));
                if y == dst {
                    let mut nodes = vec![dst];
                    let mut edges = Vec::new();
                    let mut cur = dst;
                    while let Some((p, k)) = prev[cur.0 as usize] {
                        nodes.push(p);
                        edges.push(k);
                        cur = p;
                        if cur == src {
                            break;
                        }
                    }
                    nodes.reverse();
                    edges.reverse();
                    return Some(Path { nodes, edges });
                }
                q.push_back(y);
            }
        }
    }
    None
}

/// Depth-first enumeration of simple paths from `src` to `dst`, capped at
/// [`PATH_CAP`]. When enumeration exceeds its budget, returns what it found,
/// or a single shortest path if it found none.
pub fn find_path(g: &Pdg, src: NodeId, dst: NodeId, opts: FindPathOpts) -> Vec<Path> {
    if src == dst {
        return Vec::new();
    }
    let useful = reaching(g, dst, opts);
    if !useful[src.0 as usize] {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; g.nodes.len()];
    let mut nodes = vec![src];
    let mut edges: Vec<EdgeKind> = Vec::new();
    on_path[src.0 as usize] = true;
    // Explicit stack of successor cursors.
    let mut stack: Vec<(NodeId, usize)> = vec![(src, 0)];
    let mut steps = 0usize;
    let mut exhausted = false;
    while let Some(&(n, cursor)) = stack.last() {
        steps += 1;
        if steps > STEP_BUDGET {
            exhausted = true;
            break;
        }
        let succ: Vec<(NodeId, EdgeKind)> = traversable_succ(g, n, opts).collect();
        if cursor >= succ.len() {
            stack.pop();
            on_path[n.0 as usize] = false;
            nodes.pop();
            edges.pop();
            continue;
        }
        let (m, k) = succ[cursor];
        if let Some(top) = stack.last_mut() {
            top.1 += 1;
        }
        if m == dst {
            let mut pn = nodes.clone();
            pn.push(m);
            let mut pe = edges.clone();
            pe.push(k);
            out.push(Path { nodes: pn, edges: pe });
            if out.len() >= PATH_CAP {
                break;
            }
            continue;
        }
        if on_path[m.0 as usize] || !useful[m.0 as usize] {
            continue;
        }
        on_path[m.0 as usize] = true;
        nodes.push(m);
        edges.push(k);
        stack.push((m, 0));
    }
    if exhausted && out.is_empty() {
        out.extend(shortest_path(g, src, dst, opts));
    }
    out
}
