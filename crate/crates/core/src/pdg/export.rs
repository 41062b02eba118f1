use std::fmt::Write as _;

use serde::Serialize;

use super::{NodeKind, Pdg};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

impl Pdg {
    /// DOT digraph, nodes ordered by id and edges by (src, dst, kind).
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        writeln!(s, "digraph \"{}\" {{", escape(&self.function)).unwrap();
        s.push_str("  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let label = match &n.kind {
                NodeKind::General { .. } | NodeKind::CallSite { .. } | NodeKind::Return { .. } => {
                    format!("{}\n{}", n.kind.tag(), n.label())
                }
                _ => n.label(),
            };
            let label = if n.function != self.function {
                format!("[{}] {label}", n.function)
            } else {
                label
            };
            writeln!(s, "  {} [label=\"{}\"];", n.id, escape(&label)).unwrap();
        }
        let mut edges = self.edges.clone();
        edges.sort();
        for e in edges {
            writeln!(s, "  {} -> {} [label=\"{}\"];", e.src, e.dst, e.kind.name()).unwrap();
        }
        s.push_str("}\n");
        s
    }

    /// JSON dump with fields `id`, `kind`, `instr` for nodes and `src`,
    /// `dst`, `kind` for edges.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct NodeJson<'a> {
            id: u32,
            kind: &'static str,
            function: &'a str,
            label: String,
            instr: Option<u32>,
        }
        #[derive(Serialize)]
        struct EdgeJson {
            src: u32,
            dst: u32,
            kind: &'static str,
        }
        #[derive(Serialize)]
        struct GraphJson<'a> {
            function: &'a str,
            nodes: Vec<NodeJson<'a>>,
            edges: Vec<EdgeJson>,
        }
        let mut edges = self.edges.clone();
        edges.sort();
        let g = GraphJson {
            function: &self.function,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id.0,
                    kind: n.kind.tag(),
                    function: &n.function,
                    label: n.label(),
                    instr: n.kind.instr().map(|i| i.0),
                })
                .collect(),
            edges: edges
                .iter()
                .map(|e| EdgeJson { src: e.src.0, dst: e.dst.0, kind: e.kind.name() })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&g).expect("graph serializes");
        out.push('\n');
        out
    }
}
