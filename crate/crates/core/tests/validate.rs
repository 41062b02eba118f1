use std::collections::BTreeMap;

use sdft_core::corpus;
use sdft_core::ir::{parse_module, Module};
use sdft_core::rules::{RuleOpts, TaintRuleProgram};
use sdft_core::summarize::SummarizeOpts;
use sdft_core::tracker::{MachineConfig, TaintConfig};
use sdft_core::validate::{
    bench, library_rules, mode_transparency, noninterference_check, oracle_compare, ValidateError,
    BENCH_CSV_HEADER,
};

const ON: SummarizeOpts = SummarizeOpts { control_deps: true };

fn rules(m: &Module) -> BTreeMap<String, TaintRuleProgram> {
    library_rules(m, ON, RuleOpts::default()).unwrap()
}

#[test]
fn memcpy_containment_and_return_taint() {
    let m = corpus::library();
    let r = rules(&m);
    let rep = oracle_compare(&m, &r, "memcpy", 70, 1).unwrap();
    assert!(rep.contained(), "{:?}", rep.violations.first());
    assert_eq!(rep.strategies.len(), 7);
    for s in &rep.strategies {
        assert_eq!(s.trials, 10);
        if s.params.contains(&0) {
            assert!(s.return_tainted_hybrid, "{:?}", s.params);
        }
    }
}

#[test]
fn strlen_implicit_flow() {
    let m = corpus::library();
    let rep = oracle_compare(&m, &rules(&m), "strlen", 50, 2).unwrap();
    assert!(!rep.return_tainted_instr);
    assert!(rep.return_tainted_hybrid);
    assert!(rep.contained());

    let off = library_rules(&m, SummarizeOpts { control_deps: false }, RuleOpts::default()).unwrap();
    let rep = oracle_compare(&m, &off, "strlen", 10, 2).unwrap();
    assert!(!rep.return_tainted_hybrid);
}

#[test]
fn identity_ratio_is_one() {
    let m = corpus::library();
    let rep = oracle_compare(&m, &rules(&m), "ident", 20, 3).unwrap();
    assert_eq!(rep.avg_tainted_bytes_instr, rep.avg_tainted_bytes_hybrid);
    assert!(rep.return_tainted_instr && rep.return_tainted_hybrid);
    // Scalar flows leave no memory taint, so the ratio is undefined.
    assert_eq!(rep.ratio, None);
}

#[test]
fn missing_rules_are_detected() {
    let m = corpus::library();
    let mut r = rules(&m);
    r.get_mut("pair_copy").unwrap().steps.clear();
    let rep = oracle_compare(&m, &r, "pair_copy", 12, 4).unwrap();
    assert!(!rep.violations.is_empty());
    let ni = noninterference_check(&m, &r, "pair_copy", 30, 4).unwrap();
    assert!(!ni.violations.is_empty());
    r.remove("pair_copy");
    assert!(matches!(oracle_compare(&m, &r, "pair_copy", 1, 4), Err(ValidateError::NoRules(_))));
}

#[test]
fn unsupported_parameters_rejected() {
    let m = parse_module("fn @f(%x: ptr(ptr(i32))) -> void library {\nentry:\n  ret\n}\n").unwrap();
    let r = rules(&m);
    assert!(matches!(oracle_compare(&m, &r, "f", 1, 0), Err(ValidateError::Input(_))));
    assert!(matches!(oracle_compare(&m, &r, "nope", 1, 0), Err(ValidateError::Input(_))));
}

#[test]
fn noninterference_examples() {
    let m = corpus::library();
    let r = rules(&m);
    for f in ["memcpy", "student_cpy"] {
        let rep = noninterference_check(&m, &r, f, 60, 5).unwrap();
        assert!(rep.violations.is_empty(), "{f}: {:?}", rep.violations.first());
        assert_eq!(rep.inputs.len(), 60);
    }
    let rep = noninterference_check(&m, &r, "student_cpy", 60, 5).unwrap();
    assert!(rep.inputs.iter().any(|t| t.high.contains("score")));
    assert!(rep.inputs.iter().any(|t| t.high.contains("id")));

    let pure = parse_module(
        "global @out : i32\nfn @k(%x: i32) -> i32 library {\nentry:\n  store i32 9, @out\n  ret 3\n}\n",
    )
    .unwrap();
    let rep = noninterference_check(&pure, &rules(&pure), "k", 100, 6).unwrap();
    assert!(rep.violations.is_empty());
}

#[test]
fn reports_are_deterministic() {
    let m = corpus::library();
    let r = rules(&m);
    assert_eq!(oracle_compare(&m, &r, "strcpy", 20, 9).unwrap(), oracle_compare(&m, &r, "strcpy", 20, 9).unwrap());
    assert_eq!(
        noninterference_check(&m, &r, "strcpy", 20, 9).unwrap(),
        noninterference_check(&m, &r, "strcpy", 20, 9).unwrap()
    );
    assert!(mode_transparency(&m, &r, "str_dup_len", 50, 9).unwrap().mismatches.is_empty());
}

#[test]
fn memcpy_bench_reduction() {
    let (m, cfg) = corpus::memcpy_bench(1024);
    let mcfg = MachineConfig { default_len: 2048, ..MachineConfig::default() };
    let t = bench(&m, "main", &[vec![1024]], &cfg, &rules(&m), mcfg).unwrap();
    assert!(t.instr.shadow_ops_instr >= 2 * 1024);
    assert!(t.reduction() >= 5.0, "{}", t.reduction());
    assert_eq!(t.instr.instr_executed_uninstrumented, 0);
    assert!(t.hybrid.uninstrumented_share() > 0.3);

    let (m2, cfg2) = corpus::memcpy_bench(256);
    let t2 = bench(&m2, "main", &[vec![256]], &cfg2, &rules(&m2), mcfg).unwrap();
    assert_eq!(t.hybrid.shadow_ops(), t2.hybrid.shadow_ops());

    let csv = t.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], BENCH_CSV_HEADER);
    assert!(lines[1].starts_with("main,instr,") && lines[2].starts_with("main,hybrid,"));
    assert_eq!(lines.len(), 3);
}

#[test]
fn bench_without_library_calls() {
    let m = parse_module("fn @main(%a: i64) -> i64 {\nentry:\n  %x = add i64 %a, 1\n  ret %x\n}\n").unwrap();
    let t = bench(&m, "main", &[vec![1], vec![2]], &TaintConfig::default(), &BTreeMap::new(), MachineConfig::default())
        .unwrap();
    let strip = |r: &sdft_core::validate::BenchRow| {
        (r.instr_executed_total, r.instr_executed_uninstrumented, r.shadow_ops_instr, r.shadow_ops_rules)
    };
    assert_eq!(strip(&t.instr), strip(&t.hybrid));
}

#[test]
fn student_cpy_bench_counts_uninstrumented() {
    let m = corpus::fig1();
    let t = bench(&m, "main", &[vec![]], &corpus::fig1_taint_config(), &rules(&m), MachineConfig::default()).unwrap();
    assert_eq!(t.instr.instr_executed_uninstrumented, 0);
    assert!(t.hybrid.instr_executed_uninstrumented > 0);
    assert_eq!(t.instr.instr_executed_total, t.hybrid.instr_executed_total);
}
