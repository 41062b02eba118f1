//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::time::{Duration, Instant};

use common::{differential_deps, explicit_deps, golden, summary_deps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdft_core::corpus;
use sdft_core::ir::Module;
use sdft_core::rules::{RuleOpts, TaintRuleProgram};
use sdft_core::summarize::{SlotRef, SummarizeOpts, Summary};
use sdft_core::tracker::{run, Machine, MachineConfig, Mode, TaintConfig, Tagmap, Value};
use sdft_core::validate::{
    aggregate_ratio, bench, library_rules, mode_transparency, noninterference_check, oracle_compare,
};

const TRIALS: usize = 100;
const SEED: u64 = 0x5df7;
const ON: SummarizeOpts = SummarizeOpts { control_deps: true };
const REQUIRED: [&str; 8] =
    ["memcpy", "memset", "strcpy", "strlen", "abs", "pair_copy", "student_cpy", "str_dup_len"];

type Outcome = Result<String, String>;

fn rules(m: &Module) -> BTreeMap<String, TaintRuleProgram> {
    library_rules(m, ON, RuleOpts::default()).expect("corpus rules compile")
}

fn within(limit: Duration, took: Duration, detail: String) -> Outcome {
    if took < limit {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {took:?}, limit {limit:?}"))
    }
}

fn motivating_flow() -> Outcome {
    let start = Instant::now();
    let m = corpus::fig1();
    let cfg = corpus::fig1_taint_config();
    let r = rules(&m);
    let mut hits = Vec::new();
    for mode in [Mode::InstrOnly, Mode::Hybrid] {
        let rep = run(&m, "main", &[], &cfg, mode, &r, MachineConfig::default()).map_err(|e| e.to_string())?;
        let n = rep.sink_hits.iter().filter(|h| h.function == "printf" && h.tag & 1 != 0).count();
        if n == 0 {
            return Err(format!("no sink hit with label 0x01 in {mode:?}"));
        }
        hits.push(n);
    }
    within(Duration::from_secs(1), start.elapsed(), format!("sink hits instr={} hybrid={}", hits[0], hits[1]))
}

fn containment(m: &Module, r: &BTreeMap<String, TaintRuleProgram>) -> Outcome {
    let start = Instant::now();
    if let Some(missing) = REQUIRED.iter().find(|f| !r.contains_key(**f)) {
        return Err(format!("no rules for {missing}"));
    }
    let mut bad = Vec::new();
    for name in r.keys() {
        let rep = oracle_compare(m, r, name, TRIALS, SEED).map_err(|e| e.to_string())?;
        if !rep.contained() {
            bad.push(format!("{name}: {} violations, {} traps", rep.violations.len(), rep.traps.len()));
        }
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    within(Duration::from_secs(120), start.elapsed(), format!("{} functions x {TRIALS} trials, 0 violations", r.len()))
}

fn noninterference(m: &Module, r: &BTreeMap<String, TaintRuleProgram>) -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for name in r.keys() {
        let rep = noninterference_check(m, r, name, TRIALS, SEED).map_err(|e| e.to_string())?;
        if let Some(v) = rep.violations.first() {
            bad.push(format!("{name}: {} violations, first {} at trial {}", rep.violations.len(), v.output, v.trial));
        }
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    within(Duration::from_secs(120), start.elapsed(), format!("{} functions x {TRIALS} trials, 0 violations", r.len()))
}

fn implicit_flow(m: &Module, r: &BTreeMap<String, TaintRuleProgram>) -> Outcome {
    let rep = oracle_compare(m, r, "strlen", TRIALS, SEED).map_err(|e| e.to_string())?;
    let detail =
        format!("return tainted: instr={} hybrid={}", rep.return_tainted_instr, rep.return_tainted_hybrid);
    if !rep.return_tainted_instr && rep.return_tainted_hybrid {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ratio(m: &Module, r: &BTreeMap<String, TaintRuleProgram>) -> Outcome {
    let reports: Vec<_> =
        r.keys().map(|n| oracle_compare(m, r, n, TRIALS, SEED)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let x = aggregate_ratio(&reports).ok_or("nothing tainted")?;
    let detail = format!("hybrid/instr = {x:.3}");
    if (0.8..=1.3).contains(&x) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn efficiency() -> Outcome {
    let run_bench = |n: u64| {
        let (m, cfg) = corpus::memcpy_bench(n);
        let mcfg = MachineConfig { default_len: 2 * n + 64, ..MachineConfig::default() };
        let r = rules(&m);
        bench(&m, "main", &[vec![n as i64]], &cfg, &r, mcfg).map_err(|e| e.to_string())
    };
    let t = run_bench(1024)?;
    let small = run_bench(512)?;
    let constant = t.hybrid.shadow_ops_rules == small.hybrid.shadow_ops_rules
        && t.hybrid.shadow_ops() == small.hybrid.shadow_ops();
    let share = t.hybrid.uninstrumented_share();
    let detail = format!(
        "shadow ops instr={} hybrid={} (n=512: {}), reduction {:.1}x, uninstrumented share {:.3}",
        t.instr.shadow_ops(),
        t.hybrid.shadow_ops(),
        small.hybrid.shadow_ops(),
        t.reduction(),
        share
    );
    if constant && t.reduction() >= 5.0 && share > 0.3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixtures() -> Outcome {
    let files = golden::all();
    let errors: Vec<String> = files.iter().filter_map(|(n, a)| golden::check(n, a).err()).collect();
    if !errors.is_empty() {
        return Err(errors.join("\n"));
    }
    let m = corpus::fig1();
    let frozen = |name: &str, tag: &str| {
        let (_, text) = files.iter().find(|(n, _)| n == &format!("{name}.summary.{tag}.json")).unwrap();
        Summary::from_json(text, &m).unwrap()
    };
    for name in golden::FUNCTIONS {
        if summary_deps(&frozen(name, "cd_off")) != explicit_deps(&m, name, TRIALS, SEED) {
            return Err(format!("{name}: frozen summary differs from the explicit-flow oracle"));
        }
        if summary_deps(&frozen(name, "cd_on")) != differential_deps(&m, name, TRIALS, SEED) {
            return Err(format!("{name}: frozen summary differs from the twin-execution oracle"));
        }
    }
    let memcpy = frozen("memcpy", "cd_on");
    let dest = memcpy.entries.iter().find(|e| e.out == SlotRef::param(0, m.function("memcpy").unwrap().params[0].ty.clone()));
    let dest_ins: Vec<String> = dest.map(|e| e.ins.iter().map(|s| s.to_string()).collect()).unwrap_or_default();
    let stu = frozen("student_cpy", "cd_off").entries.iter().any(|e| e.out.to_string().starts_with("@stu"));
    if dest_ins != ["param1", "param2"] || !stu {
        return Err(format!("memcpy dest inputs {dest_ins:?}, student_cpy writes @stu: {stu}"));
    }
    Ok(format!("{} fixtures match; frozen summaries equal both oracles", files.len()))
}

fn tagmap_algebra() -> Outcome {
    let base = 0x2000u64 - 16;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let pattern: Vec<u8> = (0..64).map(|_| 1 << rng.random_range(0..8)).collect();
    let mut checks = 0u64;
    for a in 0..64u64 {
        for sz in 0..=64 - a {
            let mut t = Tagmap::new();
            for (i, &p) in pattern.iter().enumerate() {
                t.set_taint(base + i as u64, p, 1);
            }
            let fold = (0..sz).fold(0, |acc, i| acc | t.get_taint(base + a + i, 1));
            if t.get_taint(base + a, sz) != fold {
                return Err(format!("get_taint({a}, {sz}) is not the OR-fold"));
            }
            let tag = pattern[(a + sz) as usize % 64] | 0x80;
            t.set_taint(base + a, tag, sz);
            for i in 0..64u64 {
                let want = if i >= a && i < a + sz { tag } else { pattern[i as usize] };
                if t.get_taint(base + i, 1) != want {
                    return Err(format!("set_taint({a}, {tag:#x}, {sz}) left byte {i} wrong"));
                }
            }
            if sz > 0 && t.get_taint(base + a, sz) & tag != tag {
                return Err(format!("get after set_taint({a}, {tag:#x}, {sz}) lost the tag"));
            }
            checks += 1;
        }
    }
    Ok(format!("{checks} (offset, size) pairs"))
}

fn transparency(m: &Module, r: &BTreeMap<String, TaintRuleProgram>) -> Outcome {
    let mut inputs = 0;
    let mut bad = Vec::new();
    let fig1 = corpus::fig1();
    let fr = rules(&fig1);
    let cfg = corpus::fig1_taint_config();
    let go = |mode| {
        let mut mach = Machine::new(&fig1, mode, fr.clone(), cfg.clone(), MachineConfig::default()).unwrap();
        let v = mach.call("main", vec![]).map(|v| v.bits);
        (v, mach.memory().to_vec())
    };
    if go(Mode::InstrOnly) != go(Mode::Hybrid) {
        bad.push("fig1 main".to_string());
    }
    inputs += 1;
    for name in r.keys() {
        let rep = mode_transparency(m, r, name, TRIALS, SEED).map_err(|e| e.to_string())?;
        inputs += rep.trials;
        if !rep.mismatches.is_empty() {
            bad.push(format!("{name}: trials {:?}", rep.mismatches));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for seed in 0..100u64 {
        let rm = corpus::random_module(seed);
        let rr = rules(&rm);
        for _ in 0..2 {
            let args = [rng.random::<i64>(), rng.random::<i64>()];
            let tag = rng.random::<u8>() | 1;
            let go = |mode| {
                let mut mach = Machine::new(&rm, mode, rr.clone(), TaintConfig::default(), MachineConfig::default())
                    .unwrap();
                let vals = args.iter().map(|&a| Value::tagged(a as u64, 8, tag)).collect();
                (mach.call("main", vals).map(|v| v.bits), mach.memory().to_vec())
            };
            if go(Mode::InstrOnly) != go(Mode::Hybrid) {
                bad.push(format!("random module {seed} on {args:?}"));
            }
            inputs += 1;
        }
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    if inputs < 1000 {
        return Err(format!("only {inputs} inputs"));
    }
    Ok(format!("{inputs} inputs, identical exit values and memory"))
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let lib = corpus::library();
    let r = rules(&lib);
    let criteria: Vec<(&str, Check)> = vec![
        ("motivating-example flow reaches the sink in both modes", Box::new(motivating_flow)),
        ("hybrid taint contains instruction-level taint", Box::new(|| containment(&lib, &r))),
        ("noninterference", Box::new(|| noninterference(&lib, &r))),
        ("implicit flow from string to length", Box::new(|| implicit_flow(&lib, &r))),
        ("tainted-byte ratio within [0.8, 1.3]", Box::new(|| ratio(&lib, &r))),
        ("shadow-operation reduction on memcpy, n = 1024", Box::new(efficiency)),
        ("frozen algorithm fixtures", Box::new(fixtures)),
        ("tagmap set/get algebra, exhaustive over 64 bytes", Box::new(tagmap_algebra)),
        ("mode transparency", Box::new(|| transparency(&lib, &r))),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        writeln!(out, "acceptance {}: {verdict} {name} ({detail}) [{ms:.0} ms]", i + 1).unwrap();
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
