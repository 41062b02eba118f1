//! Concrete interpreter with byte-level shadow state.
//!
//! Memory is flat: an unmapped null page, then globals, a stack region and a
//! bump heap. The backing buffer grows on demand up to the configured size.

use std::collections::{BTreeMap, HashMap};

use super::config::{Mode, RunReport, SinkHit, SourceWhere, TaintConfig, Trap, TrapKind};
use super::tagmap::Tagmap;
use crate::ir::{AggregateTable, BinOp, CmpPred, Function, InstrId, InstrKind, Module, Operand, Type};
use crate::rules::{RuleSlot, RuleStep, SlotBase, TaintRuleProgram};

pub const NULL_LIMIT: u64 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub mem_size: u64,
    pub stack_size: u64,
    pub step_budget: u64,
    pub max_frames: usize,
    /// Scan cap for string extents of sources and sinks.
    pub default_len: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            mem_size: 16 << 20,
            stack_size: 1 << 20,
            step_budget: 100_000_000,
            max_frames: 256,
            default_len: crate::rules::DEFAULT_LEN,
        }
    }
}

/// A scalar value with one tag per byte of its width.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Value {
    pub bits: u64,
    pub tags: Vec<u8>,
}

impl Value {
    pub fn new(bits: u64, width: usize) -> Value {
        Value { bits: mask(bits, width), tags: vec![0; width] }
    }

    pub fn tagged(bits: u64, width: usize, tag: u8) -> Value {
        Value { bits: mask(bits, width), tags: vec![tag; width] }
    }

    pub fn tag(&self) -> u8 {
        self.tags.iter().fold(0, |a, t| a | t)
    }

    pub fn width(&self) -> usize {
        self.tags.len()
    }
}

fn mask(bits: u64, width: usize) -> u64 {
    if width >= 8 {
        bits
    } else {
        bits & ((1u64 << (8 * width)) - 1)
    }
}

fn sext(bits: u64, width: usize) -> i64 {
    if width >= 8 || width == 0 {
        bits as i64
    } else {
        let shift = 64 - 8 * width as u32;
        ((bits << shift) as i64) >> shift
    }
}

fn fold(tags: &[u8]) -> u8 {
    tags.iter().fold(0, |a, t| a | t)
}

fn resize(mut tags: Vec<u8>, width: usize) -> Vec<u8> {
    tags.resize(width, 0);
    tags
}

pub struct Machine<'m> {
    m: &'m Module,
    cfg: MachineConfig,
    mode: Mode,
    rules: BTreeMap<String, TaintRuleProgram>,
    taint: TaintConfig,
    mem: Vec<u8>,
    tags: Tagmap,
    ret_shadow: Vec<u8>,
    globals: BTreeMap<String, u64>,
    stack_next: u64,
    stack_end: u64,
    heap_next: u64,
    depth: u32,
    frames: usize,
    pub shadow_ops_instr: u64,
    pub shadow_ops_rules: u64,
    pub instr_total: u64,
    pub instr_uninstrumented: u64,
    pub sink_hits: Vec<SinkHit>,
}

fn align_up(x: u64, a: u64) -> u64 {
    x.div_ceil(a.max(1)) * a.max(1)
}

impl<'m> Machine<'m> {
    pub fn new(
        m: &'m Module,
        mode: Mode,
        rules: BTreeMap<String, TaintRuleProgram>,
        taint: TaintConfig,
        cfg: MachineConfig,
    ) -> Result<Machine<'m>, Trap> {
        let layout = m.layout();
        let mut next = NULL_LIMIT;
        let mut globals = BTreeMap::new();
        let mut inits = Vec::new();
        let bad = |msg: String| Trap { kind: TrapKind::Invalid, function: String::new(), instr: InstrId(0), message: msg };
        for g in &m.globals {
            let size = layout.size_of(&g.ty).map_err(|e| bad(e.to_string()))?;
            let align = layout.align_of(&g.ty).map_err(|e| bad(e.to_string()))?;
            next = align_up(next, align);
            globals.insert(g.name.clone(), next);
            if let Some(init) = &g.init {
                inits.push((next, init.clone()));
            }
            next += size.max(1);
        }
        let stack_base = align_up(next, 4096);
        let stack_end = stack_base + cfg.stack_size;
        if stack_end >= cfg.mem_size {
            return Err(bad("memory too small for globals and stack".into()));
        }
        let mut mach = Machine {
            m,
            cfg,
            mode,
            rules,
            taint,
            mem: Vec::new(),
            tags: Tagmap::new(),
            ret_shadow: Vec::new(),
            globals,
            stack_next: stack_base,
            stack_end,
            heap_next: stack_end,
            depth: 0,
            frames: 0,
            shadow_ops_instr: 0,
            shadow_ops_rules: 0,
            instr_total: 0,
            instr_uninstrumented: 0,
            sink_hits: Vec::new(),
        };
        for (addr, bytes) in inits {
            mach.write(addr, &bytes);
        }
        Ok(mach)
    }

    pub fn module(&self) -> &'m Module {
        self.m
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn tags(&self) -> &Tagmap {
        &self.tags
    }

    pub fn tags_mut(&mut self) -> &mut Tagmap {
        &mut self.tags
    }

    pub fn ret_shadow(&self) -> &[u8] {
        &self.ret_shadow
    }

    pub fn in_library_depth(&self) -> u32 {
        self.depth
    }

    pub fn global_addr(&self, name: &str) -> Option<u64> {
        self.globals.get(name).copied()
    }

    /// Address ranges of globals, as (name, address, size).
    pub fn global_ranges(&self) -> Vec<(String, u64, u64)> {
        self.m
            .globals
            .iter()
            .filter_map(|g| Some((g.name.clone(), self.globals[&g.name], self.m.size_of(&g.ty).ok()?)))
            .collect()
    }

    /// Start of the heap region.
    pub fn heap_base(&self) -> u64 {
        self.stack_end
    }

    pub fn heap_top(&self) -> u64 {
        self.heap_next
    }

    /// Concrete memory contents with trailing zeros trimmed.
    pub fn memory(&self) -> &[u8] {
        let end = self.mem.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
        &self.mem[..end]
    }

    fn mapped(&self, addr: u64, n: u64) -> bool {
        addr >= NULL_LIMIT && addr.checked_add(n).is_some_and(|e| e <= self.cfg.mem_size)
    }

    fn grow(&mut self, end: u64) {
        if self.mem.len() < end as usize {
            self.mem.resize(end as usize, 0);
        }
    }

    /// Bytes at `addr`, or `None` if the range is unmapped.
    pub fn read(&self, addr: u64, n: u64) -> Option<Vec<u8>> {
        if !self.mapped(addr, n) {
            return None;
        }
        Some((addr..addr + n).map(|a| self.mem.get(a as usize).copied().unwrap_or(0)).collect())
    }

    pub fn write(&mut self, addr: u64, bytes: &[u8]) -> bool {
        if !self.mapped(addr, bytes.len() as u64) {
            return false;
        }
        self.grow(addr + bytes.len() as u64);
        self.mem[addr as usize..addr as usize + bytes.len()].copy_from_slice(bytes);
        true
    }

    fn read_uint(&self, addr: u64, n: usize) -> Option<u64> {
        let b = self.read(addr, n as u64)?;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(&b);
        Some(u64::from_le_bytes(buf))
    }

    /// Zeroed heap allocation.
    pub fn alloc(&mut self, size: u64, align: u64) -> Option<u64> {
        let addr = align_up(self.heap_next, align.max(1));
        let end = addr.checked_add(size.max(1))?;
        if end > self.cfg.mem_size {
            return None;
        }
        self.heap_next = end;
        self.grow(end);
        self.mem[addr as usize..end as usize].fill(0);
        Some(addr)
    }

    /// Length of the string at `addr` plus its terminator, capped at `max`.
    pub fn string_extent(&self, addr: u64, max: u64) -> u64 {
        for i in 0..max {
            let a = addr + i;
            if !self.mapped(a, 1) {
                return i;
            }
            if self.mem.get(a as usize).copied().unwrap_or(0) == 0 {
                return i + 1;
            }
        }
        max
    }

    fn instrumenting(&self) -> bool {
        self.mode == Mode::InstrOnly || self.depth == 0
    }

    fn width(&self, ty: &Type) -> usize {
        self.m.size_of(ty).unwrap_or(8) as usize
    }

    /// Tag extent of the region a pointer parameter designates.
    fn pointer_extent(&self, pty: &Type, addr: u64) -> u64 {
        if pty.is_string_pointer() {
            self.string_extent(addr, self.cfg.default_len)
        } else {
            pty.pointee().and_then(|t| self.m.size_of(t).ok()).unwrap_or(0)
        }
    }

    /// Calls `name` as if from a call instruction outside any function.
    pub fn call(&mut self, name: &str, args: Vec<Value>) -> Result<Value, Trap> {
        self.do_call(None, name, args)
    }

    fn do_call(&mut self, site: Option<(&str, InstrId)>, name: &str, mut args: Vec<Value>) -> Result<Value, Trap> {
        let trap = |kind, msg: String| Trap {
            kind,
            function: site.map(|s| s.0.to_string()).unwrap_or_default(),
            instr: site.map_or(InstrId(0), |s| s.1),
            message: msg,
        };
        let m = self.m;
        let Some(cf) = m.function(name) else {
            return Err(trap(TrapKind::Invalid, format!("call to unknown function `@{name}`")));
        };
        if cf.params.len() != args.len() {
            return Err(trap(TrapKind::Invalid, format!("`@{name}` called with {} arguments", args.len())));
        }
        for (a, p) in args.iter_mut().zip(&cf.params) {
            let w = self.width(&p.ty);
            a.bits = mask(a.bits, w);
            let t = std::mem::take(&mut a.tags);
            a.tags = resize(t, w);
        }
        for s in &self.taint.sources {
            if s.function == name && s.at == SourceWhere::Param {
                if let Some(i) = s.index {
                    if let Some(p) = cf.params.get(i as usize) {
                        if !p.ty.is_pointer() {
                            for t in &mut args[i as usize].tags {
                                *t |= s.label;
                            }
                        }
                    }
                }
            }
        }
        let sinks: Vec<u32> =
            self.taint.sinks.iter().filter(|s| s.function == name).map(|s| s.index).collect();
        for i in sinks {
            let Some(p) = cf.params.get(i as usize) else { continue };
            let a = &args[i as usize];
            let tag = if p.ty.is_pointer() {
                if a.bits == 0 {
                    0
                } else {
                    let n = self.pointer_extent(&p.ty, a.bits);
                    self.tags.get_taint(a.bits, n)
                }
            } else {
                a.tag()
            };
            if tag != 0 {
                self.sink_hits.push(SinkHit {
                    function: name.to_string(),
                    index: i,
                    tag,
                    call_site: site.map(|(f, id)| (f.to_string(), id)),
                });
            }
        }

        if self.instrumenting() {
            self.shadow_ops_instr += args.len() as u64;
        }
        let rule_call = self.mode == Mode::Hybrid && cf.library && self.rules.contains_key(name);
        let outermost = rule_call && self.depth == 0;
        if outermost {
            self.ret_shadow.clear();
        }
        if rule_call {
            self.depth += 1;
        }
        let record = if outermost { Some(args.clone()) } else { None };
        if !self.instrumenting() {
            for a in &mut args {
                a.tags.fill(0);
            }
        }
        if self.frames >= self.cfg.max_frames {
            return Err(trap(TrapKind::StackOverflow, format!("more than {} frames", self.cfg.max_frames)));
        }
        self.frames += 1;
        let result = self.exec(cf, args.clone());
        self.frames -= 1;
        if rule_call {
            self.depth -= 1;
        }
        let mut value = result?;
        if let Some(rec) = record {
            let prog = self.rules[name].clone();
            self.apply_rule_program(&prog, &rec);
        }
        if cf.ret != Type::Void {
            let w = self.width(&cf.ret);
            value.tags = if self.instrumenting() {
                self.shadow_ops_instr += 1;
                resize(self.ret_shadow.clone(), w)
            } else {
                vec![0; w]
            };
        }
        let sources: Vec<_> = self.taint.sources.iter().filter(|s| s.function == name).cloned().collect();
        for s in sources {
            match s.at {
                SourceWhere::Ret => {
                    for t in &mut value.tags {
                        *t |= s.label;
                    }
                    let w = value.tags.len();
                    let mut rs = resize(self.ret_shadow.clone(), w);
                    for t in &mut rs {
                        *t |= s.label;
                    }
                    self.ret_shadow = rs;
                }
                SourceWhere::Param => {
                    let Some(i) = s.index else { continue };
                    let Some(p) = cf.params.get(i as usize) else { continue };
                    if !p.ty.is_pointer() {
                        continue;
                    }
                    let addr = args[i as usize].bits;
                    if addr == 0 {
                        continue;
                    }
                    let n = s.len.unwrap_or_else(|| self.pointer_extent(&p.ty, addr));
                    for k in 0..n {
                        let t = self.tags.get(addr + k);
                        self.tags.set(addr + k, t | s.label);
                    }
                }
            }
        }
        Ok(value)
    }

    fn rule_addr(&self, slot: &RuleSlot, args: &[Value]) -> Option<u64> {
        match &slot.base {
            SlotBase::Param { index } if slot.deref => {
                let p = args.get(*index as usize)?.bits;
                (p != 0).then(|| p.wrapping_add(slot.offset))
            }
            SlotBase::Global { name } => Some(self.globals.get(name)? + slot.offset),
            _ => None,
        }
    }

    fn rule_get(&self, slot: &RuleSlot, args: &[Value], bytes: Option<u64>, max_len: u64) -> u8 {
        match (&slot.base, slot.deref) {
            (SlotBase::Param { index }, false) => args.get(*index as usize).map_or(0, |a| a.tag()),
            (SlotBase::Ret, _) => fold(&self.ret_shadow[..self.ret_shadow.len().min(bytes.unwrap_or(8) as usize)]),
            _ => match self.rule_addr(slot, args) {
                Some(a) => {
                    let n = bytes.unwrap_or_else(|| self.string_extent(a, max_len));
                    self.tags.get_taint(a, n)
                }
                None => 0,
            },
        }
    }

    fn rule_set(&mut self, slot: &RuleSlot, args: &[Value], bytes: Option<u64>, max_len: u64, tag: u8) {
        match (&slot.base, slot.deref) {
            (SlotBase::Param { .. }, false) => {}
            (SlotBase::Ret, _) => self.ret_shadow = vec![tag; bytes.unwrap_or(8) as usize],
            _ => {
                if let Some(a) = self.rule_addr(slot, args) {
                    let n = bytes.unwrap_or_else(|| self.string_extent(a, max_len));
                    self.tags.set_taint(a, tag, n);
                }
            }
        }
    }

    /// Runs a rule program against the current shadow state, with `args` the
    /// call's argument values and tags as recorded at entry.
    pub fn apply_rule_program(&mut self, p: &TaintRuleProgram, args: &[Value]) {
        let mut acc = 0u8;
        let mut out = 0u8;
        for step in &p.steps {
            self.shadow_ops_rules += 1;
            match step {
                RuleStep::ResetAcc => {
                    acc = 0;
                    out = 0;
                }
                RuleStep::GatherFixed { slot, bytes } => acc |= self.rule_get(slot, args, Some(*bytes), 0),
                RuleStep::GatherString { slot, max_len } => acc |= self.rule_get(slot, args, None, *max_len),
                RuleStep::ReadOut { slot, bytes, max_len } => out = self.rule_get(slot, args, *bytes, *max_len),
                RuleStep::SetFixed { slot, bytes } => self.rule_set(slot, args, Some(*bytes), 0, out | acc),
                RuleStep::SetString { slot, max_len } => self.rule_set(slot, args, None, *max_len, out | acc),
            }
        }
    }

    fn exec(&mut self, f: &'m Function, args: Vec<Value>) -> Result<Value, Trap> {
        let m = self.m;
        let mut env: HashMap<&'m str, Value> = HashMap::new();
        for (p, a) in f.params.iter().zip(args) {
            env.insert(p.name.as_str(), a);
        }
        let saved_sp = self.stack_next;
        let mut block = 0usize;
        let result = 'run: loop {
            let Some(b) = f.blocks.get(block) else {
                break 'run Err(self.trap_at(f, InstrId(0), TrapKind::Invalid, "fell off the function".into()));
            };
            for ins in &b.instrs {
                self.instr_total += 1;
                if self.depth > 0 {
                    self.instr_uninstrumented += 1;
                }
                if self.instr_total > self.cfg.step_budget {
                    break 'run Err(self.trap_at(f, ins.id, TrapKind::StepBudget, "step budget exhausted".into()));
                }
                let inst = self.instrumenting();
                match self.step(f, ins.id, &ins.kind, &mut env, inst) {
                    Ok(Flow::Next) => {}
                    Ok(Flow::Jump(label)) => match f.block_index(label) {
                        Some(i) => {
                            block = i;
                            continue 'run;
                        }
                        None => {
                            break 'run Err(self.trap_at(f, ins.id, TrapKind::Invalid, format!("no block `{label}`")))
                        }
                    },
                    Ok(Flow::Return(v)) => break 'run Ok(v),
                    Err(t) => break 'run Err(t),
                }
            }
            break 'run Err(self.trap_at(f, InstrId(0), TrapKind::Invalid, "block without terminator".into()));
        };
        self.stack_next = saved_sp;
        let _ = m;
        result
    }

    fn trap_at(&self, f: &Function, id: InstrId, kind: TrapKind, message: String) -> Trap {
        Trap { kind, function: f.name.clone(), instr: id, message }
    }

    fn eval(&self, f: &Function, id: InstrId, env: &HashMap<&str, Value>, op: &Operand, width: usize) -> Result<Value, Trap> {
        match op {
            Operand::Local(n) => env
                .get(n.as_str())
                .cloned()
                .ok_or_else(|| self.trap_at(f, id, TrapKind::Invalid, format!("undefined value `%{n}`"))),
            Operand::Global(g) => match self.globals.get(g) {
                Some(&a) => Ok(Value::new(a, 8)),
                None => Err(self.trap_at(f, id, TrapKind::Invalid, format!("unknown global `@{g}`"))),
            },
            Operand::Const(c) => Ok(Value::new(*c as u64, width)),
        }
    }

    fn step(
        &mut self,
        f: &'m Function,
        id: InstrId,
        kind: &'m InstrKind,
        env: &mut HashMap<&'m str, Value>,
        inst: bool,
    ) -> Result<Flow<'m>, Trap> {
        let m = self.m;
        match kind {
            InstrKind::Alloca { dest, ty } => {
                let size = m.size_of(ty).unwrap_or(1).max(1);
                let align = m.layout().align_of(ty).unwrap_or(8);
                let addr = align_up(self.stack_next, align);
                if addr + size > self.stack_end {
                    return Err(self.trap_at(f, id, TrapKind::StackOverflow, "stack exhausted".into()));
                }
                self.stack_next = addr + size;
                self.grow(addr + size);
                self.mem[addr as usize..(addr + size) as usize].fill(0);
                self.tags.set_taint(addr, 0, size);
                env.insert(dest.as_str(), Value::new(addr, 8));
            }
            InstrKind::Load { dest, ty, addr } => {
                let w = self.width(ty);
                let a = self.eval(f, id, env, addr, 8)?;
                let Some(bits) = self.read_uint(a.bits, w) else {
                    return Err(self.oob(f, id, a.bits, w));
                };
                let tags = if inst {
                    self.shadow_ops_instr += 1;
                    self.tags.read(a.bits, w as u64)
                } else {
                    vec![0; w]
                };
                env.insert(dest.as_str(), Value { bits, tags });
            }
            InstrKind::Store { ty, value, addr } => {
                let w = self.width(ty);
                let v = self.eval(f, id, env, value, w)?;
                let a = self.eval(f, id, env, addr, 8)?;
                if !self.mapped(a.bits, w as u64) {
                    return Err(self.oob(f, id, a.bits, w));
                }
                self.write(a.bits, &v.bits.to_le_bytes()[..w]);
                if inst {
                    self.shadow_ops_instr += 1;
                    self.tags.write(a.bits, &resize(v.tags, w));
                }
            }
            InstrKind::Gep { dest, base_ty, base, indices } => {
                let b = self.eval(f, id, env, base, 8)?;
                let mut tag = fold(&b.tags);
                let mut addr = b.bits;
                let layout = m.layout();
                let mut cur = base_ty.clone();
                for (k, idx) in indices.iter().enumerate() {
                    let v = self.eval(f, id, env, idx, 8)?;
                    tag |= fold(&v.tags);
                    let i = sext(v.bits, v.width());
                    if k == 0 {
                        let sz = layout.size_of(&cur).unwrap_or(0) as i64;
                        addr = addr.wrapping_add(i.wrapping_mul(sz) as u64);
                        continue;
                    }
                    cur = match &cur {
                        Type::Struct(n) | Type::Union(n) => {
                            let off = layout.field_offset_by_index(n, i as usize).unwrap_or(0);
                            addr = addr.wrapping_add(off);
                            m.aggregate(n).and_then(|d| d.fields.get(i as usize)).map(|fl| fl.ty.clone()).unwrap_or(Type::Void)
                        }
                        Type::Array(e, _) => {
                            let sz = layout.size_of(e).unwrap_or(0) as i64;
                            addr = addr.wrapping_add(i.wrapping_mul(sz) as u64);
                            (**e).clone()
                        }
                        _ => Type::Void,
                    };
                }
                let tags = if inst {
                    self.shadow_ops_instr += 1;
                    vec![tag; 8]
                } else {
                    vec![0; 8]
                };
                env.insert(dest.as_str(), Value { bits: addr, tags });
            }
            InstrKind::BinOp { dest, op, ty, lhs, rhs } => {
                let w = self.width(ty);
                let a = self.eval(f, id, env, lhs, w)?;
                let b = self.eval(f, id, env, rhs, w)?;
                let Some(bits) = binop(*op, ty, a.bits, b.bits, w) else {
                    return Err(self.trap_at(f, id, TrapKind::DivisionByZero, "division by zero".into()));
                };
                let tags = if inst {
                    self.shadow_ops_instr += 1;
                    vec![fold(&a.tags) | fold(&b.tags); w]
                } else {
                    vec![0; w]
                };
                env.insert(dest.as_str(), Value { bits: mask(bits, w), tags });
            }
            InstrKind::Call { dest, callee, args } => {
                let cf = m.function(callee);
                let mut vals = Vec::with_capacity(args.len());
                for (k, a) in args.iter().enumerate() {
                    let w = cf.and_then(|c| c.params.get(k)).map_or(8, |p| self.width(&p.ty));
                    let mut v = self.eval(f, id, env, a, w)?;
                    if !inst {
                        v.tags.fill(0);
                    }
                    vals.push(v);
                }
                let r = self.do_call(Some((&f.name, id)), callee, vals)?;
                if let Some(d) = dest {
                    env.insert(d.as_str(), r);
                }
            }
            InstrKind::Br { cond, then_label, else_label } => {
                let c = self.eval(f, id, env, cond, 8)?;
                return Ok(Flow::Jump(if c.bits != 0 { then_label } else { else_label }));
            }
            InstrKind::Jmp { label } => return Ok(Flow::Jump(label)),
            InstrKind::Ret { value } => {
                let Some(op) = value else { return Ok(Flow::Return(Value::default())) };
                let w = self.width(&f.ret);
                let v = self.eval(f, id, env, op, w)?;
                if inst {
                    self.shadow_ops_instr += 1;
                    self.ret_shadow = resize(v.tags.clone(), w);
                }
                return Ok(Flow::Return(Value { bits: mask(v.bits, w), tags: resize(v.tags, w) }));
            }
        }
        Ok(Flow::Next)
    }

    fn oob(&self, f: &Function, id: InstrId, addr: u64, w: usize) -> Trap {
        self.trap_at(f, id, TrapKind::OutOfBounds, format!("{w}-byte access at {addr:#x}"))
    }

    pub fn report(&self, exit_value: Option<i64>) -> RunReport {
        RunReport {
            exit_value,
            shadow_ops_instr: self.shadow_ops_instr,
            shadow_ops_rules: self.shadow_ops_rules,
            instr_executed_total: self.instr_total,
            instr_executed_uninstrumented: self.instr_uninstrumented,
            tainted_bytes_final: self.tags.tainted(),
            ret_shadow: self.ret_shadow.clone(),
            sink_hits: self.sink_hits.clone(),
        }
    }
}

enum Flow<'a> {
    Next,
    Jump(&'a str),
    Return(Value),
}

fn binop(op: BinOp, ty: &Type, a: u64, b: u64, w: usize) -> Option<u64> {
    if let Type::Float { bits } = ty {
        return Some(float_op(op, *bits, a, b));
    }
    let signed = ty.is_signed();
    let (sa, sb) = (sext(a, w), sext(b, w));
    let bitsz = (8 * w) as u32;
    Some(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div | BinOp::Rem if mask(b, w) == 0 => return None,
        BinOp::Div if signed => sa.wrapping_div(sb) as u64,
        BinOp::Div => mask(a, w) / mask(b, w),
        BinOp::Rem if signed => sa.wrapping_rem(sb) as u64,
        BinOp::Rem => mask(a, w) % mask(b, w),
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl(b as u32 % bitsz),
        BinOp::Shr if signed => (sa >> (b as u32 % bitsz)) as u64,
        BinOp::Shr => mask(a, w) >> (b as u32 % bitsz),
        BinOp::Cmp(p) => {
            let ord = if signed { sa.cmp(&sb) } else { mask(a, w).cmp(&mask(b, w)) };
            cmp_result(p, Some(ord))
        }
    })
}

fn cmp_result(p: CmpPred, ord: Option<std::cmp::Ordering>) -> u64 {
    use std::cmp::Ordering::*;
    let r = match (p, ord) {
        (_, None) => p == CmpPred::Ne,
        (CmpPred::Eq, Some(o)) => o == Equal,
        (CmpPred::Ne, Some(o)) => o != Equal,
        (CmpPred::Lt, Some(o)) => o == Less,
        (CmpPred::Le, Some(o)) => o != Greater,
        (CmpPred::Gt, Some(o)) => o == Greater,
        (CmpPred::Ge, Some(o)) => o != Less,
    };
    r as u64
}

fn float_op(op: BinOp, bits: u16, a: u64, b: u64) -> u64 {
    if bits == 32 {
        let (x, y) = (f32::from_bits(a as u32), f32::from_bits(b as u32));
        let r = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            BinOp::Rem => x % y,
            BinOp::Cmp(p) => return cmp_result(p, x.partial_cmp(&y)),
            _ => return int_bits(op, a, b),
        };
        r.to_bits() as u64
    } else {
        let (x, y) = (f64::from_bits(a), f64::from_bits(b));
        let r = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            BinOp::Rem => x % y,
            BinOp::Cmp(p) => return cmp_result(p, x.partial_cmp(&y)),
            _ => return int_bits(op, a, b),
        };
        r.to_bits()
    }
}

fn int_bits(op: BinOp, a: u64, b: u64) -> u64 {
    match op {
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl(b as u32),
        _ => a.wrapping_shr(b as u32),
    }
}

/// Sign-extends a return value according to its type.
pub fn exit_value(ty: &Type, v: &Value) -> Option<i64> {
    match ty {
        Type::Void => None,
        t if t.is_signed() => Some(sext(v.bits, v.width())),
        _ => Some(v.bits as i64),
    }
}

/// Runs `entry` with integer arguments and returns the report. Library
/// functions without a rule program are tracked at instruction level in
/// both modes.
pub fn run(
    m: &Module,
    entry: &str,
    args: &[i64],
    cfg: &TaintConfig,
    mode: Mode,
    rules: &BTreeMap<String, TaintRuleProgram>,
    mcfg: MachineConfig,
) -> Result<RunReport, Trap> {
    let f = m.function(entry).ok_or_else(|| Trap {
        kind: TrapKind::Invalid,
        function: entry.to_string(),
        instr: InstrId(0),
        message: format!("no function `@{entry}`"),
    })?;
    let mut mach = Machine::new(m, mode, rules.clone(), cfg.clone(), mcfg)?;
    let vals = f
        .params
        .iter()
        .zip(args)
        .map(|(p, &a)| Value::new(a as u64, mach.width(&p.ty)))
        .collect();
    let v = mach.call(entry, vals)?;
    Ok(mach.report(exit_value(&f.ret, &v)))
}
