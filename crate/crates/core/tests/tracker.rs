use std::collections::BTreeMap;

use sdft_core::corpus;
use sdft_core::ir::{parse_module, Module};
use sdft_core::rules::{RuleOpts, TaintRuleProgram};
use sdft_core::summarize::SummarizeOpts;
use sdft_core::tracker::{
    run, Machine, MachineConfig, Mode, Source, SourceWhere, TaintConfig, Tagmap, TrapKind, Value,
};
use sdft_core::validate::library_rules;

const ON: SummarizeOpts = SummarizeOpts { control_deps: true };

fn rules(m: &Module) -> BTreeMap<String, TaintRuleProgram> {
    library_rules(m, ON, RuleOpts::default()).unwrap()
}

#[test]
fn tagmap_examples() {
    let mut t = Tagmap::new();
    let a = 0x4000;
    assert_eq!(t.get_taint(a, 8), 0);
    t.set_taint(a, 0x01, 4);
    t.set_taint(a + 4, 0x02, 4);
    assert_eq!(t.get_taint(a, 8), 0x03);
    assert_eq!(t.get_taint(a, 1), 0x01);
    assert_eq!(t.get_taint(a, 0), 0);
    t.set_taint(a, 0x04, 2);
    assert_eq!(t.read(a, 4), [0x04, 0x04, 0x01, 0x01]);
    t.set_taint(a, 0, 8);
    assert_eq!(t.get_taint(a, 8), 0);
    assert!(t.is_clean());
}

#[test]
fn tagmap_fold_exhaustive() {
    let base = 0x10_0000u64 - 32;
    let mut t = Tagmap::new();
    for i in 0..64u64 {
        t.set_taint(base + i, 1 << (i * 7 % 8), 1);
    }
    for a in 0..64u64 {
        for n in 0..=64 - a {
            let fold = (0..n).fold(0u8, |acc, i| acc | t.get_taint(base + a + i, 1));
            assert_eq!(t.get_taint(base + a, n), fold);
        }
    }
}

#[test]
fn fig1_flow_reaches_sink_in_both_modes() {
    let m = corpus::fig1();
    let cfg = corpus::fig1_taint_config();
    let r = rules(&m);
    for mode in [Mode::InstrOnly, Mode::Hybrid] {
        let rep = run(&m, "main", &[], &cfg, mode, &r, MachineConfig::default()).unwrap();
        assert_eq!(rep.exit_value, Some(0));
        assert_eq!(rep.sink_hits.len(), 1, "{mode:?}");
        let hit = &rep.sink_hits[0];
        assert_eq!((hit.function.as_str(), hit.index), ("printf", 0));
        assert_eq!(hit.tag & 0x01, 0x01);
        assert_eq!(hit.call_site.as_ref().unwrap().0, "main");
    }
}

#[test]
fn no_sources_no_taint() {
    let m = corpus::fig1();
    let mut cfg = corpus::fig1_taint_config();
    cfg.sources.clear();
    for mode in [Mode::InstrOnly, Mode::Hybrid] {
        let rep = run(&m, "main", &[], &cfg, mode, &rules(&m), MachineConfig::default()).unwrap();
        assert!(rep.tainted_bytes_final.is_empty());
        assert!(rep.sink_hits.is_empty());
        assert!(rep.ret_shadow.iter().all(|&t| t == 0));
    }
}

fn memcpy_call(m: &Module, mode: Mode, src_tag: u8, dest_tag: u8) -> (Machine<'_>, u64) {
    let mut mach = Machine::new(m, mode, rules(m), TaintConfig::default(), MachineConfig::default()).unwrap();
    let d = mach.alloc(64, 16).unwrap();
    let s = mach.alloc(64, 16).unwrap();
    mach.write(s, b"0123456789abcdef\0");
    mach.tags_mut().set_taint(s, src_tag, 17);
    mach.tags_mut().set_taint(d, dest_tag, 16);
    let args = vec![Value::new(d, 8), Value::new(s, 8), Value::new(16, 8)];
    let ret = mach.call("memcpy", args).unwrap();
    assert_eq!(ret.bits, d);
    (mach, d)
}

#[test]
fn memcpy_hybrid_taints_destination() {
    let m = corpus::fig1();
    let (instr, di) = memcpy_call(&m, Mode::InstrOnly, 0x01, 0);
    let (hybrid, dh) = memcpy_call(&m, Mode::Hybrid, 0x01, 0);
    assert_eq!(instr.tags().read(di, 16), vec![0x01; 16]);
    assert_eq!(hybrid.tags().read(dh, 16), vec![0x01; 16]);
    assert_eq!(hybrid.read(dh, 16).unwrap(), b"0123456789abcdef");
    assert!(hybrid.shadow_ops_rules > 0);
    assert_eq!(hybrid.in_library_depth(), 0);
}

#[test]
fn rules_accumulate_onto_output_tags() {
    let m = corpus::fig1();
    let (mach, d) = memcpy_call(&m, Mode::Hybrid, 0x02, 0x01);
    assert_eq!(mach.tags().read(d, 16), vec![0x03; 16]);
}

#[test]
fn untainted_rule_application_changes_nothing() {
    let m = corpus::fig1();
    let r = rules(&m);
    let mut mach = Machine::new(&m, Mode::Hybrid, r.clone(), TaintConfig::default(), MachineConfig::default()).unwrap();
    let d = mach.alloc(32, 8).unwrap();
    let s = mach.alloc(32, 8).unwrap();
    mach.write(s, b"hello\0");
    mach.write(d, b"world\0");
    mach.apply_rule_program(&r["memcpy"], &[Value::new(d, 8), Value::new(s, 8), Value::new(6, 8)]);
    assert!(mach.tags().is_clean());
    assert!(mach.ret_shadow().iter().all(|&t| t == 0));
}

#[test]
fn rule_with_global_slot_writes_global_storage() {
    let m = corpus::fig1();
    let r = rules(&m);
    let mut mach = Machine::new(&m, Mode::Hybrid, r.clone(), TaintConfig::default(), MachineConfig::default()).unwrap();
    let s = mach.alloc(12, 8).unwrap();
    mach.write(s, b"abc\0\0\0\0\0\x05\0\0\0");
    mach.tags_mut().set_taint(s + 8, 0x04, 4);
    mach.apply_rule_program(&r["student_cpy"], &[Value::new(s, 8)]);
    let g = mach.global_addr("stu").unwrap();
    assert_eq!(mach.tags().read(g + 8, 4), vec![0x04; 4]);
    assert_eq!(mach.tags().get_taint(g, 8), 0);
}

#[test]
fn outermost_rule_call_only() {
    let m = corpus::fig1();
    let r = rules(&m);
    let mut mach = Machine::new(&m, Mode::Hybrid, r.clone(), TaintConfig::default(), MachineConfig::default()).unwrap();
    let s = mach.alloc(12, 8).unwrap();
    mach.write(s, b"abc\0\0\0\0\0\x05\0\0\0");
    mach.call("student_cpy", vec![Value::new(s, 8)]).unwrap();
    assert_eq!(mach.shadow_ops_rules, r["student_cpy"].steps.len() as u64);
    assert_eq!(mach.shadow_ops_instr, 1);
    assert_eq!(mach.instr_uninstrumented, mach.instr_total);
}

#[test]
fn traps_carry_instruction_ids() {
    let m = parse_module(
        "fn @div(%a: i32, %b: i32) -> i32 {\nentry:\n  %q = div i32 %a, %b\n  ret %q\n}\n\
         fn @null() -> i32 {\nentry:\n  %p = gep i32, 0, 0\n  %v = load i32, %p\n  ret %v\n}\n\
         fn @deep(%n: i64) -> i64 {\nentry:\n  %r = call @deep(%n)\n  ret %r\n}\n\
         fn @spin() -> void {\nentry:\n  jmp entry\n}\n",
    )
    .unwrap();
    let none = BTreeMap::new();
    let cfg = TaintConfig::default();
    let small = MachineConfig { step_budget: 1000, ..MachineConfig::default() };
    let div = run(&m, "div", &[7, 0], &cfg, Mode::InstrOnly, &none, small).unwrap_err();
    assert_eq!(div.kind, TrapKind::DivisionByZero);
    assert_eq!(div.function, "div");
    let q = m.function("div").unwrap().instrs().next().unwrap().id;
    assert_eq!(div.instr, q);
    assert_eq!(run(&m, "div", &[7, 2], &cfg, Mode::InstrOnly, &none, small).unwrap().exit_value, Some(3));
    assert_eq!(run(&m, "div", &[-7, 2], &cfg, Mode::InstrOnly, &none, small).unwrap().exit_value, Some(-3));
    assert_eq!(run(&m, "null", &[], &cfg, Mode::InstrOnly, &none, small).unwrap_err().kind, TrapKind::OutOfBounds);
    assert_eq!(run(&m, "deep", &[1], &cfg, Mode::InstrOnly, &none, small).unwrap_err().kind, TrapKind::StackOverflow);
    assert_eq!(run(&m, "spin", &[], &cfg, Mode::InstrOnly, &none, small).unwrap_err().kind, TrapKind::StepBudget);
}

#[test]
fn division_trap_leaves_shadow_untouched() {
    let m = parse_module("fn @div(%a: i32, %b: i32) -> i32 {\nentry:\n  %q = div i32 %a, %b\n  ret %q\n}\n").unwrap();
    let mut mach =
        Machine::new(&m, Mode::InstrOnly, BTreeMap::new(), TaintConfig::default(), MachineConfig::default()).unwrap();
    let e = mach.call("div", vec![Value::tagged(1, 4, 0x01), Value::new(0, 4)]).unwrap_err();
    assert_eq!(e.kind, TrapKind::DivisionByZero);
    // Only the two argument copies were counted.
    assert_eq!(mach.shadow_ops_instr, 2);
    assert!(mach.ret_shadow().iter().all(|&t| t == 0));
}

#[test]
fn return_source_and_scalar_sink() {
    let m = parse_module(
        "fn @get() -> i32 {\nentry:\n  ret 41\n}\nfn @use(%x: i32) -> void {\nentry:\n  ret\n}\n\
         fn @main() -> i32 {\nentry:\n  %v = call @get()\n  %w = add i32 %v, 1\n  call @use(%w)\n  ret %w\n}\n",
    )
    .unwrap();
    let cfg = TaintConfig::from_json(
        r#"{"sources":[{"fn":"get","where":"ret","label":4}],"sinks":[{"fn":"use","index":0}]}"#,
    )
    .unwrap();
    assert_eq!(cfg.sources[0], Source { function: "get".into(), at: SourceWhere::Ret, index: None, label: 4, len: None });
    let rep = run(&m, "main", &[], &cfg, Mode::InstrOnly, &BTreeMap::new(), MachineConfig::default()).unwrap();
    assert_eq!(rep.exit_value, Some(42));
    assert_eq!(rep.sink_hits[0].tag, 4);
    assert_eq!(rep.ret_shadow, vec![4; 4]);
    assert!(TaintConfig::from_json(r#"{"sources":[{"fn":"get","where":"ret","label":3}]}"#).is_err());
    assert!(TaintConfig::from_json(r#"{"sources":[{"fn":"get","where":"param","label":1}]}"#).is_err());
}

#[test]
fn modes_agree_without_library_calls() {
    let m = parse_module(
        "global @g : i64\nfn @main(%a: i64) -> i64 {\nentry:\n  %x = mul i64 %a, 3\n  store i64 %x, @g\n  \
         %y = load i64, @g\n  ret %y\n}\n",
    )
    .unwrap();
    let none = BTreeMap::new();
    let cfg = TaintConfig::default();
    let a = run(&m, "main", &[5], &cfg, Mode::InstrOnly, &none, MachineConfig::default()).unwrap();
    let b = run(&m, "main", &[5], &cfg, Mode::Hybrid, &none, MachineConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.exit_value, Some(15));
    assert_eq!(a.instr_executed_uninstrumented, 0);
}

#[test]
fn report_json_fields() {
    let m = corpus::fig1();
    let rep = run(&m, "main", &[], &corpus::fig1_taint_config(), Mode::Hybrid, &rules(&m), MachineConfig::default())
        .unwrap();
    let j: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    for k in [
        "exit_value",
        "shadow_ops_instr",
        "shadow_ops_rules",
        "instr_executed_total",
        "instr_executed_uninstrumented",
        "tainted_bytes_final",
        "sink_hits",
    ] {
        assert!(j.get(k).is_some(), "{k}");
    }
    let addrs: Vec<u64> = rep.tainted_bytes_final.iter().map(|x| x.0).collect();
    assert!(addrs.windows(2).all(|w| w[0] < w[1]));
    assert!(rep.instr_executed_uninstrumented <= rep.instr_executed_total);
}
