//! Summaries against dependences observed by execution.

mod common;

use common::{differential_deps, explicit_deps, summary_deps, uncovered};
use sdft_core::corpus;
use sdft_core::summarize::{summarize_library, SummarizeOpts, Summary};

const TRIALS: usize = 100;

fn frozen(name: &str, tag: &str) -> Summary {
    let path = format!("{}/tests/fixtures/{name}.summary.{tag}.json", env!("CARGO_MANIFEST_DIR"));
    Summary::from_json(&std::fs::read_to_string(path).unwrap(), &corpus::fig1()).unwrap()
}

#[test]
fn frozen_goldens_equal_explicit_flow_oracle() {
    let m = corpus::fig1();
    for name in ["memcpy", "student_cpy"] {
        assert_eq!(summary_deps(&frozen(name, "cd_off")), explicit_deps(&m, name, TRIALS, 11), "{name}");
    }
}

#[test]
fn frozen_goldens_equal_twin_execution_oracle() {
    let m = corpus::fig1();
    for name in ["memcpy", "student_cpy"] {
        assert_eq!(summary_deps(&frozen(name, "cd_on")), differential_deps(&m, name, TRIALS, 12), "{name}");
    }
}

#[test]
fn library_summaries_cover_explicit_flows() {
    let m = corpus::library();
    let lib = summarize_library(&m, SummarizeOpts { control_deps: false });
    for (name, s) in &lib.summaries {
        let obs = explicit_deps(&m, name, TRIALS, 13);
        assert!(uncovered(&obs, s).is_empty(), "{name}: {:?}", uncovered(&obs, s));
    }
}

#[test]
fn library_summaries_cover_observable_dependences() {
    let m = corpus::library();
    let lib = summarize_library(&m, SummarizeOpts { control_deps: true });
    assert_eq!(lib.summaries.len(), 12);
    for (name, s) in &lib.summaries {
        let obs = differential_deps(&m, name, TRIALS, 14);
        assert!(uncovered(&obs, s).is_empty(), "{name}: {:?}", uncovered(&obs, s));
    }
}

#[test]
fn control_dependences_add_only_implicit_flows() {
    let m = corpus::library();
    let off = summarize_library(&m, SummarizeOpts { control_deps: false }).summaries;
    let on = summarize_library(&m, SummarizeOpts { control_deps: true }).summaries;
    for (name, s) in &off {
        assert!(summary_deps(s).is_subset(&summary_deps(&on[name])), "{name}");
    }
    assert!(summary_deps(&off["strlen"]).is_empty());
    assert!(!summary_deps(&on["strlen"]).is_empty());
}
