//! `sdft`: offline summarization and online taint tracking over IR files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sdft_core::corpus;
use sdft_core::ir::{parse_module, validate_module, Module};
use sdft_core::pdg::build_pdg;
use sdft_core::rules::{parse_rules, rule_stats, serialize_rules, stats_csv, taint_rule_gen, RuleOpts, TaintRuleProgram};
use sdft_core::summarize::{flatten_prim_types, summarize_library, SummarizeOpts, Summary};
use sdft_core::tracker::{run, MachineConfig, Mode, TaintConfig};
use sdft_core::validate::{aggregate_ratio, bench, noninterference_check, oracle_compare};

#[derive(Parser)]
#[command(name = "sdft", version, about = "Summary-based dynamic data-flow tracking")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Artifact directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Follow control dependences when summarizing.
    #[arg(long, global = true, value_enum, default_value_t = Switch::On)]
    control_deps: Switch,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    trials: usize,
    /// Scan cap for string extents in rules, sources and sinks.
    #[arg(long, global = true, default_value_t = sdft_core::rules::DEFAULT_LEN)]
    default_len: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Instr,
    Hybrid,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Instr => Mode::InstrOnly,
            ModeArg::Hybrid => Mode::Hybrid,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and check a module, printing it normalized.
    Parse { input: PathBuf },
    /// Dependency graphs as DOT (`<fn>.pdg.dot`).
    Pdg {
        input: PathBuf,
        /// Only this function.
        #[arg(long)]
        function: Option<String>,
        /// Also write `<fn>.pdg.json`.
        #[arg(long)]
        json: bool,
    },
    /// Primitive leaf types of every struct and union.
    Flatten { input: PathBuf },
    /// Summaries of library functions (`<fn>.summary.json`).
    Summarize { input: PathBuf },
    /// Taint rules (`<fn>.rules.json`) from summary files or fresh summaries.
    Rules {
        input: PathBuf,
        /// Directory of `<fn>.summary.json` files.
        #[arg(long)]
        summaries: Option<PathBuf>,
    },
    /// Execute a function and report taint.
    Run {
        input: PathBuf,
        #[arg(long, default_value = "main")]
        entry: String,
        /// Integer argument of the entry function; repeat per parameter.
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<i64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Hybrid)]
        mode: ModeArg,
        #[command(flatten)]
        online: Online,
    },
    /// Compare tainting under both modes per library function.
    Compare {
        input: PathBuf,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        rules: PathBuf,
    },
    /// Noninterference twin executions per library function.
    Nitest {
        input: PathBuf,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        rules: PathBuf,
    },
    /// Shadow-operation counts under both modes.
    Bench {
        /// Program to run; omit with `--memcpy`.
        input: Option<PathBuf>,
        #[arg(long, default_value = "main")]
        entry: String,
        #[arg(long = "arg", allow_hyphen_values = true)]
        args: Vec<i64>,
        /// Use the built-in memcpy benchmark over this many bytes.
        #[arg(long, conflicts_with = "input")]
        memcpy: Option<u64>,
        #[command(flatten)]
        online: Online,
    },
}

#[derive(Args)]
struct Online {
    /// Directory of `<fn>.rules.json` files.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    taint_config: Option<PathBuf>,
    #[arg(long, default_value_t = MachineConfig::default().step_budget)]
    step_budget: u64,
}

/// Work finished but found problems: diagnostics, traps or violations.
struct Findings;

fn read_module(path: &Path) -> Result<Module> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m = parse_module(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let diags = validate_module(&m);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("{}: invalid module:\n{}", path.display(), lines.join("\n"));
    }
    Ok(m)
}

fn load_rules(dir: &Path) -> Result<BTreeMap<String, TaintRuleProgram>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".rules.json")) {
            let text = fs::read_to_string(&p)?;
            let prog = parse_rules(&text).with_context(|| format!("parsing {}", p.display()))?;
            out.insert(prog.function.clone(), prog);
        }
    }
    Ok(out)
}

struct Ctx {
    g: Global,
}

impl Ctx {
    fn summarize_opts(&self) -> SummarizeOpts {
        SummarizeOpts { control_deps: self.g.control_deps == Switch::On }
    }

    fn machine(&self, step_budget: u64) -> MachineConfig {
        MachineConfig { step_budget, default_len: self.g.default_len, ..MachineConfig::default() }
    }

    /// Writes `name` under `--out`, or prints it when there is none.
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match &self.g.out {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let p = dir.join(name);
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn taint_config(&self, path: Option<&Path>) -> Result<TaintConfig> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(TaintConfig::from_json(&text)?)
            }
            None => Ok(TaintConfig::default()),
        }
    }

    fn targets(&self, m: &Module, rules: &BTreeMap<String, TaintRuleProgram>, only: Option<&str>) -> Result<Vec<String>> {
        match only {
            Some(f) if rules.contains_key(f) => Ok(vec![f.to_string()]),
            Some(f) => bail!("no rule program for `{f}`"),
            None => Ok(m.library_fns().filter(|f| rules.contains_key(&f.name)).map(|f| f.name.clone()).collect()),
        }
    }
}

fn execute(cmd: Cmd, ctx: &Ctx) -> Result<Option<Findings>> {
    match cmd {
        Cmd::Parse { input } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let m = match parse_module(&text) {
                Ok(m) => m,
                Err(e) => {
                    for d in &e.diagnostics {
                        eprintln!("{}:{d}", input.display());
                    }
                    return Ok(Some(Findings));
                }
            };
            let diags = validate_module(&m);
            for d in &diags {
                eprintln!("{}: {d}", input.display());
            }
            ctx.emit("module.ir", &m.to_string())?;
            Ok((!diags.is_empty()).then_some(Findings))
        }
        Cmd::Pdg { input, function, json } => {
            let m = read_module(&input)?;
            let lib = summarize_library(&m, ctx.summarize_opts());
            let names: Vec<String> = match function {
                Some(f) => vec![f],
                None => m.functions.iter().map(|f| f.name.clone()).collect(),
            };
            for name in names {
                let f = m.function(&name).with_context(|| format!("no function `{name}`"))?;
                let callees: BTreeMap<String, Summary> =
                    lib.summaries.iter().filter(|(k, _)| **k != name).map(|(k, v)| (k.clone(), v.clone())).collect();
                let g = build_pdg(&m, f, &callees)?;
                ctx.emit(&format!("{name}.pdg.dot"), &g.to_dot())?;
                if json {
                    ctx.emit(&format!("{name}.pdg.json"), &g.to_json())?;
                }
            }
            Ok(None)
        }
        Cmd::Flatten { input } => {
            let m = read_module(&input)?;
            let mut s = String::new();
            for (k, v) in flatten_prim_types(&m.aggregates) {
                let tys: Vec<String> = v.iter().map(|t| t.to_string()).collect();
                s.push_str(&format!("{k}: {}\n", tys.join(", ")));
            }
            ctx.emit("flatten.txt", &s)?;
            Ok(None)
        }
        Cmd::Summarize { input } => {
            let m = read_module(&input)?;
            let lib = summarize_library(&m, ctx.summarize_opts());
            for (name, s) in &lib.summaries {
                ctx.emit(&format!("{name}.summary.json"), &s.to_json())?;
            }
            for d in &lib.diagnostics {
                eprintln!("{}: `{}`: {}", input.display(), d.function, d.message);
            }
            Ok((!lib.diagnostics.is_empty()).then_some(Findings))
        }
        Cmd::Rules { input, summaries } => {
            let m = read_module(&input)?;
            let sums: Vec<Summary> = match summaries {
                Some(dir) => {
                    let mut v = Vec::new();
                    for f in m.library_fns() {
                        let p = dir.join(format!("{}.summary.json", f.name));
                        if p.exists() {
                            let text = fs::read_to_string(&p)?;
                            v.push(Summary::from_json(&text, &m).with_context(|| format!("parsing {}", p.display()))?);
                        }
                    }
                    v
                }
                None => summarize_library(&m, ctx.summarize_opts()).summaries.into_values().collect(),
            };
            let opts = RuleOpts { default_len: ctx.g.default_len };
            let mut progs = Vec::new();
            for s in &sums {
                let p = taint_rule_gen(s, &m, opts)?;
                ctx.emit(&format!("{}.rules.json", p.function), &serialize_rules(&p))?;
                progs.push(p);
            }
            ctx.emit("rule_stats.csv", &stats_csv(&rule_stats(&progs)))?;
            Ok(None)
        }
        Cmd::Run { input, entry, args, mode, online } => {
            let m = read_module(&input)?;
            let rules = match &online.rules {
                Some(d) => load_rules(d)?,
                None => BTreeMap::new(),
            };
            let cfg = ctx.taint_config(online.taint_config.as_deref())?;
            let mode = Mode::from(mode);
            if mode == Mode::Hybrid {
                for f in m.library_fns().filter(|f| !rules.contains_key(&f.name)) {
                    eprintln!("note: `{}` has no rules and is tracked per instruction", f.name);
                }
            }
            match run(&m, &entry, &args, &cfg, mode, &rules, ctx.machine(online.step_budget)) {
                Ok(rep) => {
                    ctx.emit("run.json", &rep.to_json())?;
                    Ok(None)
                }
                Err(trap) => {
                    eprintln!("trap: {trap}");
                    let text = serde_json::to_string_pretty(&trap)? + "\n";
                    ctx.emit("run.json", &text)?;
                    Ok(Some(Findings))
                }
            }
        }
        Cmd::Compare { input, function, rules } => {
            let m = read_module(&input)?;
            let rules = load_rules(&rules)?;
            let mut reports = Vec::new();
            for name in ctx.targets(&m, &rules, function.as_deref())? {
                reports.push(oracle_compare(&m, &rules, &name, ctx.g.trials, ctx.g.seed)?);
            }
            let bad = reports.iter().any(|r| !r.contained());
            let out = serde_json::json!({
                "seed": ctx.g.seed,
                "trials": ctx.g.trials,
                "aggregate_ratio": aggregate_ratio(&reports),
                "functions": reports,
            });
            ctx.emit("compare.json", &(serde_json::to_string_pretty(&out)? + "\n"))?;
            Ok(bad.then_some(Findings))
        }
        Cmd::Nitest { input, function, rules } => {
            let m = read_module(&input)?;
            let rules = load_rules(&rules)?;
            let mut reports = Vec::new();
            for name in ctx.targets(&m, &rules, function.as_deref())? {
                reports.push(noninterference_check(&m, &rules, &name, ctx.g.trials, ctx.g.seed)?);
            }
            let bad = reports.iter().any(|r| !r.violations.is_empty());
            ctx.emit("nitest.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
            Ok(bad.then_some(Findings))
        }
        Cmd::Bench { input, entry, args, memcpy, online } => {
            let (m, mut cfg, args) = match (input, memcpy) {
                (_, Some(n)) => {
                    let (m, cfg) = corpus::memcpy_bench(n);
                    (m, cfg, vec![n as i64])
                }
                (Some(p), None) => (read_module(&p)?, TaintConfig::default(), args),
                (None, None) => bail!("bench needs an input file or --memcpy"),
            };
            if let Some(p) = &online.taint_config {
                cfg = ctx.taint_config(Some(p))?;
            }
            let rules = match &online.rules {
                Some(d) => load_rules(d)?,
                None => {
                    let lib = summarize_library(&m, ctx.summarize_opts());
                    let opts = RuleOpts { default_len: ctx.g.default_len };
                    let mut r = BTreeMap::new();
                    for s in lib.summaries.values() {
                        r.insert(s.function.clone(), taint_rule_gen(s, &m, opts)?);
                    }
                    r
                }
            };
            match bench(&m, &entry, &[args], &cfg, &rules, ctx.machine(online.step_budget)) {
                Ok(t) => {
                    ctx.emit("bench.csv", &t.to_csv())?;
                    Ok(None)
                }
                Err(trap) => {
                    eprintln!("trap: {trap}");
                    Ok(Some(Findings))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx { g: cli.global };
    match execute(cli.cmd, &ctx) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Findings)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
