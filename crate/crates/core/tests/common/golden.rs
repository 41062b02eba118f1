//! Frozen outputs of flattening, binding, summary generation and rule
//! generation for `memcpy` and `student_cpy`. Set `SDFT_BLESS=1` to
//! rewrite them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sdft_core::corpus;
use sdft_core::ir::Module;
use sdft_core::pdg::{build_pdg, Pdg};
use sdft_core::rules::{serialize_rules, taint_rule_gen, RuleOpts};
use sdft_core::summarize::{
    bind, flatten_prim_types, source_nodes, summarize_library, summary_gen, target_nodes, NodeBinding,
    SummarizeOpts, Summary,
};

pub const FUNCTIONS: [&str; 2] = ["memcpy", "student_cpy"];

/// Compares `actual` with the frozen file, or rewrites it when blessing.
pub fn check(name: &str, actual: &str) -> Result<(), String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    if std::env::var_os("SDFT_BLESS").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
    }
    let expected = std::fs::read_to_string(&path).map_err(|_| format!("missing fixture {name}"))?;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("fixture {name} differs:\n--- expected\n{expected}--- actual\n{actual}"))
    }
}

fn callee_summaries(m: &Module, except: &str, cd: bool) -> BTreeMap<String, Summary> {
    let opts = SummarizeOpts { control_deps: cd };
    summarize_library(m, opts).summaries.into_iter().filter(|(k, _)| k != except).collect()
}

fn render(part: &NodeBinding, g: &Pdg, which: &str) -> String {
    let nodes = if which == "source" { part.source_nodes() } else { part.target_nodes() };
    let mut s = String::new();
    for n in nodes {
        let slots: Vec<String> = part.wp(n).iter().map(|x| x.to_string()).collect();
        writeln!(s, "{which} {} -> {}", g.node(n).label(), slots.join(", ")).unwrap();
    }
    s
}

pub fn flatten() -> (String, String) {
    let m = corpus::fig1();
    let mut s = String::new();
    for (k, v) in flatten_prim_types(&m.aggregates) {
        let tys: Vec<String> = v.iter().map(|t| t.to_string()).collect();
        writeln!(s, "{k}: {}", tys.join(", ")).unwrap();
    }
    ("flatten.txt".into(), s)
}

pub fn nodes() -> Vec<(String, String)> {
    let m = corpus::fig1();
    FUNCTIONS
        .iter()
        .map(|name| {
            let f = m.function(name).unwrap();
            let g = build_pdg(&m, f, &callee_summaries(&m, name, false)).unwrap();
            let mut s = render(&source_nodes(&m, f, &g), &g, "source");
            s += &render(&target_nodes(&m, f, &g), &g, "target");
            (format!("{name}.nodes.txt"), s)
        })
        .collect()
}

pub fn summaries_and_rules() -> Vec<(String, String)> {
    let m = corpus::fig1();
    let mut out = Vec::new();
    for cd in [false, true] {
        let tag = if cd { "cd_on" } else { "cd_off" };
        for name in FUNCTIONS {
            let f = m.function(name).unwrap();
            let g = build_pdg(&m, f, &callee_summaries(&m, name, cd)).unwrap();
            let s = summary_gen(name, &bind(&m, f, &g), &g, SummarizeOpts { control_deps: cd });
            out.push((format!("{name}.summary.{tag}.json"), s.to_json()));
            let p = taint_rule_gen(&s, &m, RuleOpts::default()).unwrap();
            out.push((format!("{name}.rules.{tag}.json"), serialize_rules(&p)));
        }
    }
    out
}

pub fn all() -> Vec<(String, String)> {
    let mut v = vec![flatten()];
    v.extend(nodes());
    v.extend(summaries_and_rules());
    v
}
