//! The bundled IR corpus.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse_module, Module};
use crate::tracker::{Source, SourceWhere, TaintConfig};

pub const FIG1_SRC: &str = include_str!("../../../corpus/fig1.ir");
pub const LIB_SRC: &str = include_str!("../../../corpus/lib.ir");
pub const FIG1_TAINT: &str = include_str!("../../../corpus/fig1.taint.json");

/// The motivating program: input, struct copy into a global, output.
pub fn fig1() -> Module {
    parse_module(FIG1_SRC).expect("bundled corpus parses")
}

/// Source on the input stub's buffer, sink on the output stub's argument.
pub fn fig1_taint_config() -> TaintConfig {
    TaintConfig::from_json(FIG1_TAINT).expect("bundled config parses")
}

/// The library corpus.
pub fn library() -> Module {
    parse_module(LIB_SRC).expect("bundled corpus parses")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    I64,
    I32,
    Rec,
}

struct Sig {
    name: String,
    params: Vec<Kind>,
    ret: Option<Kind>,
}

struct Body<'a> {
    rng: &'a mut ChaCha8Rng,
    text: String,
    next: usize,
    i64s: Vec<String>,
    i32s: Vec<String>,
    recs: Vec<String>,
}

const OPS: [&str; 11] = ["add", "sub", "mul", "div", "rem", "and", "or", "xor", "shl", "shr", "cmp lt"];

impl Body<'_> {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("%t{}", self.next)
    }

    fn line(&mut self, s: &str) {
        self.text.push_str("  ");
        self.text.push_str(s);
        self.text.push('\n');
    }

    fn pick(&mut self, k: Kind) -> String {
        let pool = match k {
            Kind::I64 => &self.i64s,
            Kind::I32 => &self.i32s,
            Kind::Rec => &self.recs,
        };
        if k != Kind::Rec && (pool.is_empty() || self.rng.random_bool(0.25)) {
            return self.rng.random_range(-20i64..=20).to_string();
        }
        pool[self.rng.random_range(0..pool.len())].clone()
    }

    fn binop(&mut self, k: Kind) -> String {
        let ty = if k == Kind::I64 { "i64" } else { "i32" };
        let op = OPS[self.rng.random_range(0..OPS.len())];
        let a = self.pick(k);
        let mut b = self.pick(k);
        if op == "div" || op == "rem" {
            let nz = self.fresh();
            self.line(&format!("{nz} = or {ty} {b}, 1"));
            b = nz;
        }
        let d = self.fresh();
        self.line(&format!("{d} = {op} {ty} {a}, {b}"));
        d
    }

    fn field(&mut self) -> (String, Kind) {
        let r = self.pick(Kind::Rec);
        let p = self.fresh();
        match self.rng.random_range(0..2) {
            0 => {
                self.line(&format!("{p} = gep %rec, {r}, 0, 0"));
                (p, Kind::I64)
            }
            _ => {
                self.line(&format!("{p} = gep %rec, {r}, 0, 1"));
                (p, Kind::I32)
            }
        }
    }
}

fn kind_ty(k: Kind) -> &'static str {
    match k {
        Kind::I64 => "i64",
        Kind::I32 => "i32",
        Kind::Rec => "ptr(%rec)",
    }
}

fn gen_body(rng: &mut ChaCha8Rng, sig: &Sig, earlier: &[Sig]) -> String {
    let mut b = Body { rng, text: String::new(), next: 0, i64s: vec![], i32s: vec![], recs: vec!["@g1".into()] };
    for (i, k) in sig.params.iter().enumerate() {
        let n = format!("%p{i}");
        match k {
            Kind::I64 => b.i64s.push(n),
            Kind::I32 => b.i32s.push(n),
            Kind::Rec => b.recs.push(n),
        }
    }
    b.text.push_str("entry:\n");
    b.line("%acc = alloca i64");
    b.line("store i64 0, %acc");
    b.line("%loc = alloca %rec");
    b.recs.push("%loc".into());
    let mut label = 0;
    let steps = b.rng.random_range(3..12);
    for _ in 0..steps {
        match b.rng.random_range(0..9) {
            0 | 1 => {
                let d = b.binop(Kind::I64);
                b.i64s.push(d);
            }
            2 => {
                let d = b.binop(Kind::I32);
                b.i32s.push(d);
            }
            3 => {
                let v = b.pick(Kind::I64);
                b.line(&format!("store i64 {v}, %acc"));
                let d = b.fresh();
                b.line(&format!("{d} = load i64, %acc"));
                b.i64s.push(d);
            }
            4 => {
                let (p, k) = b.field();
                let ty = kind_ty(k);
                if b.rng.random_bool(0.5) {
                    let v = b.pick(k);
                    b.line(&format!("store {ty} {v}, {p}"));
                } else {
                    let d = b.fresh();
                    b.line(&format!("{d} = load {ty}, {p}"));
                    if k == Kind::I64 { b.i64s.push(d) } else { b.i32s.push(d) }
                }
            }
            5 => {
                let r = b.pick(Kind::Rec);
                let p = b.fresh();
                let i = b.rng.random_range(0..4);
                b.line(&format!("{p} = gep %rec, {r}, 0, 2, {i}"));
                let c = b.rng.random_range(b'a'..=b'z');
                b.line(&format!("store char {c}, {p}"));
            }
            6 => {
                if b.rng.random_bool(0.5) {
                    let v = b.pick(Kind::I64);
                    b.line(&format!("store i64 {v}, @g0"));
                } else {
                    let d = b.fresh();
                    b.line(&format!("{d} = load i64, @g0"));
                    b.i64s.push(d);
                }
            }
            7 if !earlier.is_empty() => {
                let callee = &earlier[b.rng.random_range(0..earlier.len())];
                let args: Vec<String> = callee.params.iter().map(|&k| b.pick(k)).collect();
                let call = format!("call @{}({})", callee.name, args.join(", "));
                match callee.ret {
                    Some(k) => {
                        let d = b.fresh();
                        b.line(&format!("{d} = {call}"));
                        if k == Kind::I64 { b.i64s.push(d) } else { b.i32s.push(d) }
                    }
                    None => b.line(&call),
                }
            }
            _ => {
                let c = b.binop(Kind::I64);
                let c2 = b.fresh();
                b.line(&format!("{c2} = cmp ne i64 {c}, 0"));
                label += 1;
                b.line(&format!("br {c2}, then{label}, else{label}"));
                for arm in ["then", "else"] {
                    writeln!(b.text, "{arm}{label}:").unwrap();
                    let v = b.pick(Kind::I64);
                    b.line(&format!("store i64 {v}, %acc"));
                    b.line(&format!("jmp join{label}"));
                }
                writeln!(b.text, "join{label}:").unwrap();
                let d = b.fresh();
                b.line(&format!("{d} = load i64, %acc"));
                b.i64s.push(d);
            }
        }
    }
    match sig.ret {
        Some(k) => {
            let v = b.pick(k);
            b.line(&format!("ret {v}"));
        }
        None => b.line("ret"),
    }
    b.text
}

/// Source text of a random well-formed, executable module. Every division
/// has a nonzero divisor, accesses stay inside declared objects and calls
/// only target earlier functions. `@main(i64, i64) -> i64` is the entry.
pub fn random_module_src(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "struct %rec { i64 x, i32 y, [4 x char] tag }\n\nglobal @g0 : i64\nglobal @g1 : %rec\n\n",
    );
    let mut sigs: Vec<Sig> = Vec::new();
    let nfn = rng.random_range(1..5);
    for i in 0..=nfn {
        let main = i == nfn;
        let sig = if main {
            Sig { name: "main".into(), params: vec![Kind::I64, Kind::I64], ret: Some(Kind::I64) }
        } else {
            let n = rng.random_range(1..4);
            let params = (0..n).map(|_| [Kind::I64, Kind::I32, Kind::Rec][rng.random_range(0..3)]).collect();
            let ret = [Some(Kind::I64), Some(Kind::I32), None][rng.random_range(0..3)];
            Sig { name: format!("f{i}"), params, ret }
        };
        let library = !main && rng.random_bool(0.6);
        let params: Vec<String> =
            sig.params.iter().enumerate().map(|(i, &k)| format!("%p{i}: {}", kind_ty(k))).collect();
        let ret = sig.ret.map_or("void", kind_ty);
        writeln!(out, "fn @{}({}) -> {ret}{} {{", sig.name, params.join(", "), if library { " library" } else { "" })
            .unwrap();
        out.push_str(&gen_body(&mut rng, &sig, &sigs));
        out.push_str("}\n\n");
        sigs.push(sig);
    }
    out
}

pub fn random_module(seed: u64) -> Module {
    parse_module(&random_module_src(seed)).expect("generated module parses")
}

/// Benchmark program copying an `n`-byte tainted buffer with the library
/// `memcpy`. `@main(n)` copies `@src` to `@dst`; the input stub
/// `@read_input` is the taint source over `n` bytes.
pub fn memcpy_bench(n: u64) -> (Module, TaintConfig) {
    let mut src = format!(
        "global @src : [{len} x char]\nglobal @dst : [{len} x char]\n\n\
         fn @read_input(%buf: ptr(char), %n: u64) -> void {{\nentry:\n  ret\n}}\n\n\
         fn @main(%n: u64) -> u64 {{\nentry:\n  %s = gep [{len} x char], @src, 0, 0\n  \
         %d = gep [{len} x char], @dst, 0, 0\n  call @read_input(%s, %n)\n  \
         %r = call @memcpy(%d, %s, %n)\n  ret 0\n}}\n",
        len = n + 1
    );
    let lib = library();
    src.push('\n');
    src.push_str(&lib.function("memcpy").expect("corpus has memcpy").to_string());
    let mut m = parse_module(&src).expect("bench module parses");
    let mut bytes = vec![b'a'; n as usize];
    bytes.push(0);
    m.globals[0].init = Some(bytes);
    let cfg = TaintConfig {
        sources: vec![Source {
            function: "read_input".into(),
            at: SourceWhere::Param,
            index: Some(0),
            label: 1,
            len: Some(n),
        }],
        sinks: vec![],
    };
    (m, cfg)
}
