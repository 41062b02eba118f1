use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn sdft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdft")).args(args).output().expect("spawn sdft")
}

fn ok(args: &[&str]) -> String {
    let o = sdft(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn dir_listing(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn summarize_rules_run_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let fig1 = corpus("fig1.ir");
    let fig1 = fig1.to_str().unwrap();
    let s = tmp.path().join("s");
    let r = tmp.path().join("r");
    ok(&["summarize", fig1, "--out", s.to_str().unwrap()]);
    let names: Vec<_> = dir_listing(&s).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["memcpy.summary.json", "student_cpy.summary.json"]);

    ok(&["rules", fig1, "--summaries", s.to_str().unwrap(), "--out", r.to_str().unwrap()]);
    let names: Vec<_> = dir_listing(&r).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["memcpy.rules.json", "rule_stats.csv", "student_cpy.rules.json"]);

    let cfg = corpus("fig1.taint.json");
    for mode in ["hybrid", "instr"] {
        let out = ok(&[
            "run",
            fig1,
            "--mode",
            mode,
            "--rules",
            r.to_str().unwrap(),
            "--taint-config",
            cfg.to_str().unwrap(),
        ]);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(!v["sink_hits"].as_array().unwrap().is_empty(), "{mode}: {out}");
    }
}

#[test]
fn outputs_are_idempotent() {
    let lib = corpus("lib.ir");
    let lib = lib.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let p = d.path().to_str().unwrap();
        ok(&["summarize", lib, "--out", p]);
        ok(&["rules", lib, "--out", p]);
        ok(&["pdg", lib, "--out", p]);
        ok(&["compare", lib, "--rules", p, "--trials", "7", "--seed", "3", "--out", p]);
    }
    assert_eq!(dir_listing(a.path()), dir_listing(b.path()));
    assert_eq!(ok(&["flatten", lib]), ok(&["flatten", lib]));
}

#[test]
fn compare_and_nitest_pass_on_library() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = corpus("lib.ir");
    let lib = lib.to_str().unwrap();
    let p = tmp.path().to_str().unwrap();
    ok(&["rules", lib, "--out", p]);
    let out = ok(&["compare", lib, "--rules", p, "--trials", "10"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(!v["functions"].as_array().unwrap().is_empty());
    ok(&["nitest", lib, "--rules", p, "--trials", "10", "--function", "memcpy"]);
}

#[test]
fn bench_memcpy_builtin() {
    let out = ok(&["bench", "--memcpy", "128", "--default-len", "256"]);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("main,instr,") && lines[2].starts_with("main,hybrid,"));
}

#[test]
fn run_accepts_negative_args_and_reports_traps() {
    let tmp = tempfile::tempdir().unwrap();
    let ir = tmp.path().join("d.ir");
    fs::write(&ir, "fn @main(%a: i64, %b: i64) -> i64 {\nentry:\n  %q = div i64 %a, %b\n  ret %q\n}\n").unwrap();
    let ir = ir.to_str().unwrap();
    let out = ok(&["run", ir, "--arg", "-8", "--arg", "2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["exit_value"], -4);
    let o = sdft(&["run", ir, "--arg", "1", "--arg", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(sdft(&["--bogus"]).status.code(), Some(2));
    assert_eq!(sdft(&["parse"]).status.code(), Some(2));
    assert_eq!(sdft(&["parse", "/nonexistent.ir"]).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.ir");
    fs::write(&bad, "fn @f() -> void {\nentry:\n  call @g()\n  ret\n}\n").unwrap();
    let o = sdft(&["parse", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(sdft(&["parse", corpus("fig1.ir").to_str().unwrap()]).status.code(), Some(0));
}
