//! Flow-insensitive, field-sensitive points-to analysis over one function.
//!
//! Abstract objects are allocas, globals, the pointee of each pointer
//! parameter, and `Unknown` for pointers loaded from memory the function did
//! not write. Parameter pointees are assumed pairwise disjoint.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ir::{Function, InstrId, InstrKind, Module, Operand, Type};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Root {
    Alloca(InstrId),
    Param(u32),
    Global(String),
    Unknown,
}

/// An object plus a byte offset into it; `None` means anywhere in the object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbsLoc {
    pub root: Root,
    pub offset: Option<u64>,
}

impl AbsLoc {
    pub fn new(root: Root, offset: Option<u64>) -> AbsLoc {
        AbsLoc { root, offset }
    }
}

/// Distinct offsets kept per object before collapsing to "anywhere".
const OFFSET_CAP: usize = 64;

/// Whether an access of `asz` bytes at `a` can overlap one of `bsz` bytes at `b`,
/// both within the same function.
pub fn may_alias(a: &AbsLoc, asz: u64, b: &AbsLoc, bsz: u64) -> bool {
    match (&a.root, &b.root) {
        (Root::Unknown, Root::Alloca(_)) | (Root::Alloca(_), Root::Unknown) => false,
        (Root::Unknown, _) | (_, Root::Unknown) => true,
        (ra, rb) if ra == rb => match (a.offset, b.offset) {
            (Some(x), Some(y)) => x < y.saturating_add(bsz) && y < x.saturating_add(asz),
            _ => true,
        },
        _ => false,
    }
}

/// Whether accesses in two different function bodies can overlap. Only
/// globals are shared between bodies.
pub fn may_alias_across(a: &AbsLoc, asz: u64, b: &AbsLoc, bsz: u64) -> bool {
    match (&a.root, &b.root) {
        (Root::Global(_), Root::Global(_)) => may_alias(a, asz, b, bsz),
        (Root::Global(_), Root::Unknown) | (Root::Unknown, Root::Global(_)) => true,
        _ => false,
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointsTo {
    temps: HashMap<String, BTreeSet<AbsLoc>>,
    memory: BTreeMap<AbsLoc, BTreeSet<AbsLoc>>,
}

impl PointsTo {
    pub fn analyze(m: &Module, f: &Function) -> PointsTo {
        let mut pt = PointsTo::default();
        for (i, p) in f.params.iter().enumerate() {
            if p.ty.is_pointer() {
                pt.temps
                    .insert(p.name.clone(), BTreeSet::from([AbsLoc::new(Root::Param(i as u32), Some(0))]));
            }
        }
        loop {
            let mut changed = false;
            for ins in f.instrs() {
                match &ins.kind {
                    InstrKind::Alloca { dest, .. } => {
                        let loc = AbsLoc::new(Root::Alloca(ins.id), Some(0));
                        changed |= pt.add_temp(dest, [loc]);
                    }
                    InstrKind::Gep { dest, base_ty, base, indices } => {
                        let delta = gep_offset(m, base_ty, indices);
                        let locs: Vec<AbsLoc> = pt
                            .of_operand(base)
                            .into_iter()
                            .map(|l| AbsLoc {
                                offset: match (l.offset, delta) {
                                    (Some(o), Some(d)) => Some(o + d),
                                    _ => None,
                                },
                                root: l.root,
                            })
                            .collect();
                        changed |= pt.add_temp(dest, locs);
                    }
                    InstrKind::Load { dest, ty, addr } if ty.is_pointer() => {
                        let mut got = BTreeSet::new();
                        for l in pt.of_operand(addr) {
                            let read = pt.read_memory(&l);
                            if read.is_empty() && !matches!(l.root, Root::Alloca(_)) {
                                got.insert(AbsLoc::new(Root::Unknown, None));
                            }
                            got.extend(read);
                        }
                        changed |= pt.add_temp(dest, got);
                    }
                    InstrKind::Store { ty, value, addr } if ty.is_pointer() => {
                        let vals = pt.of_operand(value);
                        if !vals.is_empty() {
                            for l in pt.of_operand(addr) {
                                let slot = pt.memory.entry(l).or_default();
                                for v in &vals {
                                    changed |= slot.insert(v.clone());
                                }
                            }
                        }
                    }
                    InstrKind::Call { dest: Some(dest), callee, args } => {
                        let returns_ptr = m.function(callee).is_some_and(|c| c.ret.is_pointer());
                        if returns_ptr {
                            let mut got: BTreeSet<AbsLoc> =
                                args.iter().flat_map(|a| pt.of_operand(a)).collect();
                            if got.is_empty() {
                                got.insert(AbsLoc::new(Root::Unknown, None));
                            }
                            changed |= pt.add_temp(dest, got);
                        }
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        pt
    }

    fn add_temp(&mut self, name: &str, locs: impl IntoIterator<Item = AbsLoc>) -> bool {
        let set = self.temps.entry(name.to_string()).or_default();
        let mut changed = false;
        for l in locs {
            changed |= set.insert(l);
        }
        if changed {
            collapse(set);
        }
        changed
    }

    fn read_memory(&self, l: &AbsLoc) -> BTreeSet<AbsLoc> {
        let mut out = BTreeSet::new();
        for (k, v) in &self.memory {
            if k.root == l.root && (k.offset.is_none() || l.offset.is_none() || k.offset == l.offset) {
                out.extend(v.iter().cloned());
            }
        }
        out
    }

    /// Objects an operand may point to. Non-pointer operands point nowhere.
    pub fn of_operand(&self, op: &Operand) -> BTreeSet<AbsLoc> {
        match op {
            Operand::Local(n) => self.temps.get(n).cloned().unwrap_or_default(),
            Operand::Global(g) => BTreeSet::from([AbsLoc::new(Root::Global(g.clone()), Some(0))]),
            Operand::Const(_) => BTreeSet::new(),
        }
    }

    pub fn of_temp(&self, name: &str) -> Option<&BTreeSet<AbsLoc>> {
        self.temps.get(name)
    }

    /// Whether two operands may point into overlapping storage.
    pub fn operands_alias(&self, a: &Operand, b: &Operand) -> bool {
        let pa = self.of_operand(a);
        let pb = self.of_operand(b);
        pa.iter().any(|x| pb.iter().any(|y| may_alias(x, 1, y, 1)))
    }
}

/// Collapses objects with too many distinct offsets to "anywhere".
fn collapse(set: &mut BTreeSet<AbsLoc>) {
    let mut counts: HashMap<Root, usize> = HashMap::new();
    for l in set.iter() {
        *counts.entry(l.root.clone()).or_default() += 1;
    }
    for (root, c) in counts {
        if c > OFFSET_CAP {
            set.retain(|l| l.root != root);
            set.insert(AbsLoc::new(root, None));
        }
    }
}

/// Constant byte offset of a gep, or `None` for pointer arithmetic and
/// variable indices.
pub(crate) fn gep_offset(m: &Module, base_ty: &Type, indices: &[Operand]) -> Option<u64> {
    if indices.first()?.as_const()? != 0 {
        return None;
    }
    let layout = m.layout();
    let mut off = 0u64;
    let mut cur = base_ty.clone();
    for idx in &indices[1..] {
        let k = u64::try_from(idx.as_const()?).ok()?;
        cur = match &cur {
            Type::Struct(n) | Type::Union(n) => {
                off += layout.field_offset_by_index(n, k as usize).ok()?;
                m.aggregate_decl(n)?.fields.get(k as usize)?.ty.clone()
            }
            Type::Array(e, _) => {
                off += k * layout.size_of(e).ok()?;
                (**e).clone()
            }
            _ => return None,
        };
    }
    Some(off)
}
