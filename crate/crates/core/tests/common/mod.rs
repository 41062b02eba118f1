//! Independent oracles: dependences observed by running the interpreter,
//! without the PDG or the summarizer.
#![allow(dead_code)]

pub mod golden;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdft_core::ir::{AggregateTable, Function, Module, Type};
use sdft_core::summarize::{SlotKind, SlotRef, Summary};
use sdft_core::tracker::{Machine, MachineConfig, Mode, TaintConfig, Value};
use sdft_core::validate::inputs::{gen_inputs, regen_param, shapes, ParamShape, ParamValue};

const LANE: u64 = 256;
const SHIFT: u64 = 64;

/// A byte range inside the state of one run, relative to a param object or
/// a global.
#[derive(Clone, Debug)]
struct Loc {
    slot: SlotRef,
    /// Param index or global name the offset is relative to.
    base: Base,
    off: u64,
    len: u64,
}

#[derive(Clone, Debug)]
enum Base {
    Param(usize),
    Global(String),
    /// The pointer value of a param.
    Address(usize),
    Ret,
}

fn field_locs(m: &Module, slot: SlotRef, base: Base, ty: &Type) -> Vec<Loc> {
    let layout = m.layout();
    match ty.aggregate_name().and_then(|n| m.aggregate(n)) {
        Some(d) if !d.fields.is_empty() => d
            .fields
            .iter()
            .map(|f| {
                let (off, t) = layout.resolve_path(ty, std::slice::from_ref(&f.name)).unwrap();
                Loc {
                    slot: slot.clone().with_path(vec![f.name.clone()]),
                    base: base.clone(),
                    off,
                    len: layout.size_of(&t).unwrap(),
                }
            })
            .collect(),
        _ => vec![Loc { slot, base, off: 0, len: layout.size_of(ty).unwrap() }],
    }
}

/// Object contents of every param and global, by field.
fn content_locs(m: &Module, f: &Function, sh: &[ParamShape]) -> Vec<Loc> {
    let mut out = Vec::new();
    for (i, (p, s)) in f.params.iter().zip(sh).enumerate() {
        let slot = SlotRef::param(i as u32, p.ty.clone());
        match s {
            ParamShape::String => out.push(Loc { slot, base: Base::Param(i), off: 0, len: 33 }),
            ParamShape::Region(t) => out.extend(field_locs(m, slot, Base::Param(i), t)),
            ParamShape::Scalar(_) => {}
        }
    }
    for g in &m.globals {
        out.extend(field_locs(m, SlotRef::global(&g.name, g.ty.clone()), Base::Global(g.name.clone()), &g.ty));
    }
    out
}

fn input_locs(m: &Module, f: &Function, sh: &[ParamShape]) -> Vec<Loc> {
    let mut out = Vec::new();
    for (i, (p, s)) in f.params.iter().zip(sh).enumerate() {
        let slot = SlotRef::param(i as u32, p.ty.clone());
        match s {
            ParamShape::Scalar(t) => {
                out.push(Loc { slot, base: Base::Address(i), off: 0, len: m.size_of(t).unwrap() })
            }
            _ => out.push(Loc { slot, base: Base::Address(i), off: 0, len: 8 }),
        }
    }
    out.extend(content_locs(m, f, sh));
    out
}

fn output_locs(m: &Module, f: &Function, sh: &[ParamShape]) -> Vec<Loc> {
    let mut out = content_locs(m, f, sh);
    if f.ret != Type::Void {
        out.push(Loc { slot: SlotRef::ret(f.ret.clone()), base: Base::Ret, off: 0, len: m.size_of(&f.ret).unwrap() });
    }
    out
}

struct Run<'m> {
    mach: Machine<'m>,
    addrs: Vec<u64>,
    ret: Option<Value>,
}

impl Run<'_> {
    fn addr(&self, b: &Base) -> Option<u64> {
        match b {
            Base::Param(i) => Some(self.addrs[*i]),
            Base::Global(g) => self.mach.global_addr(g),
            _ => None,
        }
    }

    fn bytes(&self, l: &Loc) -> Vec<u8> {
        match &l.base {
            Base::Ret => self.ret.as_ref().map(|v| v.bits.to_le_bytes()[..l.len as usize].to_vec()).unwrap_or_default(),
            b => self.mach.read(self.addr(b).unwrap() + l.off, l.len).unwrap(),
        }
    }

    fn tag(&self, l: &Loc) -> u8 {
        match &l.base {
            Base::Ret => self.ret.as_ref().map_or(0, |v| v.tag()),
            b => self.mach.tags().get_taint(self.addr(b).unwrap() + l.off, l.len),
        }
    }
}

/// Places the objects in fixed lanes (optionally shifting one) and writes
/// the global contents.
fn setup<'m>(
    m: &'m Module,
    mode: Mode,
    sh: &[ParamShape],
    vals: &[ParamValue],
    globals: &BTreeMap<String, Vec<u8>>,
    shifted: Option<usize>,
) -> (Machine<'m>, Vec<Value>, Vec<u64>) {
    let mut mach = Machine::new(m, mode, BTreeMap::new(), TaintConfig::default(), MachineConfig::default()).unwrap();
    for (g, b) in globals {
        let a = mach.global_addr(g).unwrap();
        mach.write(a, b);
    }
    let mut args = Vec::new();
    let mut addrs = Vec::new();
    for (i, (s, v)) in sh.iter().zip(vals).enumerate() {
        let lane = mach.alloc(LANE, 16).unwrap();
        let a = lane + if shifted == Some(i) { SHIFT } else { 0 };
        addrs.push(a);
        match (s, v) {
            (ParamShape::Scalar(t), ParamValue::Scalar(x)) => {
                args.push(Value::new(*x, m.size_of(t).unwrap() as usize))
            }
            (_, ParamValue::String(b)) | (_, ParamValue::Region(b)) => {
                mach.write(a, b);
                args.push(Value::new(a, 8));
            }
            _ => unreachable!(),
        }
    }
    (mach, args, addrs)
}

fn random_globals(m: &Module, rng: &mut ChaCha8Rng) -> BTreeMap<String, Vec<u8>> {
    m.globals
        .iter()
        .map(|g| {
            let n = m.size_of(&g.ty).unwrap() as usize;
            let mut b: Vec<u8> = (0..n).map(|_| rng.random_range(0x20..0x7f)).collect();
            if let Some(l) = b.last_mut() {
                *l = 0;
            }
            (g.name.clone(), b)
        })
        .collect()
}

pub type Deps = BTreeSet<(SlotRef, SlotRef)>;

/// Dependences observed by twin executions that differ in one input slot:
/// (out, in) when changing `in` changed the bytes of `out`.
pub fn differential_deps(m: &Module, name: &str, trials: usize, seed: u64) -> Deps {
    let f = m.function(name).unwrap();
    let sh = shapes(m, f).unwrap();
    let ins = input_locs(m, f, &sh);
    let outs = output_locs(m, f, &sh);
    let mut deps = Deps::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let base = gen_inputs(m, &mut rng, &sh);
        let globals = random_globals(m, &mut rng);
        for inp in &ins {
            let mut twin = base.clone();
            let mut tglobals = globals.clone();
            let mut shifted = None;
            match &inp.base {
                Base::Address(i) => match &sh[*i] {
                    ParamShape::Scalar(_) => twin[*i] = regen_param(m, &mut rng, &sh, &base, *i),
                    _ => shifted = Some(*i),
                },
                Base::Param(i) => {
                    let fresh = regen_param(m, &mut rng, &sh, &base, *i);
                    match (&fresh, &mut twin[*i]) {
                        (ParamValue::Region(new), ParamValue::Region(old)) => {
                            let r = inp.off as usize..(inp.off + inp.len) as usize;
                            old[r.clone()].copy_from_slice(&new[r]);
                        }
                        _ => twin[*i] = fresh,
                    }
                }
                Base::Global(g) => {
                    let b = tglobals.get_mut(g).unwrap();
                    for k in inp.off..inp.off + inp.len {
                        if k + 1 < b.len() as u64 {
                            b[k as usize] = rng.random_range(0x20..0x7f);
                        }
                    }
                }
                Base::Ret => unreachable!(),
            }
            let go = |vals: &[ParamValue], gl: &BTreeMap<String, Vec<u8>>, shift| {
                let (mut mach, args, addrs) = setup(m, Mode::InstrOnly, &sh, vals, gl, shift);
                let ret = mach.call(name, args).ok();
                Run { mach, addrs, ret }
            };
            let a = go(&base, &globals, None);
            let b = go(&twin, &tglobals, shifted);
            for o in &outs {
                if o.slot != inp.slot && a.bytes(o) != b.bytes(o) {
                    deps.insert((o.slot.clone(), inp.slot.clone()));
                }
            }
        }
    }
    deps
}

/// Dependences observed by instruction-level taint tracking: (out, in)
/// when tainting only `in` left a tag on `out`.
pub fn explicit_deps(m: &Module, name: &str, trials: usize, seed: u64) -> Deps {
    let f = m.function(name).unwrap();
    let sh = shapes(m, f).unwrap();
    let ins = input_locs(m, f, &sh);
    let outs = output_locs(m, f, &sh);
    let mut deps = Deps::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let vals = gen_inputs(m, &mut rng, &sh);
        let globals = random_globals(m, &mut rng);
        for inp in &ins {
            let (mut mach, mut args, addrs) = setup(m, Mode::InstrOnly, &sh, &vals, &globals, None);
            match &inp.base {
                Base::Address(i) => args[*i].tags.fill(1),
                Base::Param(i) => mach.tags_mut().set_taint(addrs[*i] + inp.off, 1, inp.len),
                Base::Global(g) => {
                    let a = mach.global_addr(g).unwrap();
                    mach.tags_mut().set_taint(a + inp.off, 1, inp.len)
                }
                Base::Ret => unreachable!(),
            }
            let ret = mach.call(name, args).ok();
            let r = Run { mach, addrs, ret };
            for o in &outs {
                if o.slot != inp.slot && r.tag(o) != 0 {
                    deps.insert((o.slot.clone(), inp.slot.clone()));
                }
            }
        }
    }
    deps
}

pub fn summary_deps(s: &Summary) -> Deps {
    s.entries.iter().flat_map(|e| e.ins.iter().map(move |i| (e.out.clone(), i.clone()))).collect()
}

/// Observed pairs no summary entry covers, comparing slots up to field
/// refinement.
pub fn uncovered(observed: &Deps, s: &Summary) -> Vec<(SlotRef, SlotRef)> {
    observed
        .iter()
        .filter(|(o, i)| {
            !s.entries.iter().any(|e| {
                (e.out.overlaps(o) || o.overlaps(&e.out)) && e.ins.iter().any(|x| x.overlaps(i) || i.overlaps(x))
            })
        })
        .cloned()
        .collect()
}

pub fn is_param(s: &SlotRef) -> bool {
    matches!(s.kind, SlotKind::Param(_))
}
