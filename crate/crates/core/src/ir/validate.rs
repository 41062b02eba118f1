//! Well-formedness checking.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::module::{BinOp, Function, InstrId, InstrKind, Instruction, Module, Operand};
use super::types::{AggregateKind, Type};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub function: Option<String>,
    pub block: Option<String>,
    pub instr: Option<InstrId>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(func) = &self.function {
            write!(f, "@{func}")?;
            if let Some(b) = &self.block {
                write!(f, ":{b}")?;
            }
            if let Some(i) = self.instr {
                write!(f, ":{i}")?;
            }
            f.write_str(": ")?;
        }
        f.write_str(&self.message)
    }
}

/// Returns one diagnostic per violated invariant; empty iff `m` is well formed.
pub fn validate_module(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let top = |msg: String| Diagnostic { function: None, block: None, instr: None, message: msg };

    let mut seen = HashSet::new();
    for a in &m.aggregates {
        if !seen.insert(a.name.as_str()) {
            out.push(top(format!("duplicate definition of `%{}`", a.name)));
        }
        if a.fields.is_empty() {
            out.push(top(format!("`%{}` declares no fields", a.name)));
        }
        let mut names = HashSet::new();
        for f in &a.fields {
            if !names.insert(f.name.as_str()) {
                out.push(top(format!("duplicate field `{}` in `%{}`", f.name, a.name)));
            }
            if let Some(msg) = check_type(m, &f.ty) {
                out.push(top(format!("field `{}` of `%{}`: {msg}", f.name, a.name)));
            } else if matches!(f.ty, Type::Void) || f.ty.contains_function() {
                out.push(top(format!("field `{}` of `%{}` has no size", f.name, a.name)));
            }
        }
        if let Err(e) = m.size_of(&a.as_type()) {
            out.push(top(e.to_string()));
        }
    }

    let mut at_names = HashSet::new();
    for g in &m.globals {
        if !at_names.insert(g.name.as_str()) {
            out.push(top(format!("duplicate definition of `@{}`", g.name)));
        }
        if let Some(msg) = check_type(m, &g.ty) {
            out.push(top(format!("global `@{}`: {msg}", g.name)));
            continue;
        }
        match m.size_of(&g.ty) {
            Ok(sz) => {
                if let Some(init) = &g.init {
                    if init.len() as u64 != sz {
                        out.push(top(format!(
                            "global `@{}` initializer has {} bytes, type needs {sz}",
                            g.name,
                            init.len()
                        )));
                    }
                }
            }
            Err(e) => out.push(top(format!("global `@{}`: {e}", g.name))),
        }
    }
    for f in &m.functions {
        if !at_names.insert(f.name.as_str()) {
            out.push(top(format!("duplicate definition of `@{}`", f.name)));
        }
        validate_function(m, f, &mut out);
    }
    out
}

/// Checks that every aggregate named inside `t` is declared with the right kind.
fn check_type(m: &Module, t: &Type) -> Option<String> {
    match t {
        Type::Struct(n) | Type::Union(n) => {
            let want = if matches!(t, Type::Struct(_)) {
                AggregateKind::Struct
            } else {
                AggregateKind::Union
            };
            match m.aggregates.iter().find(|a| &a.name == n) {
                None => Some(format!("unknown type name `%{n}`")),
                Some(a) if a.kind != want => Some(format!("`%{n}` used with the wrong kind")),
                Some(_) => None,
            }
        }
        Type::Pointer(inner) => check_type(m, inner),
        Type::Array(inner, n) => {
            if *n == 0 {
                Some("array length must be at least 1".into())
            } else {
                check_type(m, inner)
            }
        }
        Type::Function(ps, r) => ps.iter().chain(std::iter::once(&**r)).find_map(|p| check_type(m, p)),
        Type::Int { bits, .. } => {
            (![8, 16, 32, 64].contains(bits)).then(|| format!("invalid integer width {bits}"))
        }
        Type::Float { bits } => (![32, 64].contains(bits)).then(|| format!("invalid float width {bits}")),
        Type::Char | Type::Void => None,
    }
}

struct FnCtx<'a> {
    m: &'a Module,
    f: &'a Function,
    env: HashMap<&'a str, Type>,
    out: &'a mut Vec<Diagnostic>,
    block: &'a str,
    instr: Option<InstrId>,
}

impl FnCtx<'_> {
    fn report(&mut self, message: impl Into<String>) {
        self.out.push(Diagnostic {
            function: Some(self.f.name.clone()),
            block: Some(self.block.to_string()),
            instr: self.instr,
            message: message.into(),
        });
    }

    /// `None` for untyped constants.
    fn operand_type(&mut self, op: &Operand) -> Option<Type> {
        match op {
            Operand::Local(n) => match self.env.get(n.as_str()) {
                Some(t) => Some(t.clone()),
                None => {
                    self.report(format!("use of undefined value `%{n}`"));
                    None
                }
            },
            Operand::Global(g) => match self.m.global(g) {
                Some(gl) => Some(Type::ptr(gl.ty.clone())),
                None => {
                    self.report(format!("unknown global `@{g}`"));
                    None
                }
            },
            Operand::Const(_) => None,
        }
    }

    fn expect_value(&mut self, op: &Operand, want: &Type, what: &str) {
        if let Some(t) = self.operand_type(op) {
            if !t.compatible(want) {
                self.report(format!("{what} has type {t}, expected {want}"));
            }
        }
    }

    fn expect_pointer(&mut self, op: &Operand, what: &str) {
        if let Some(t) = self.operand_type(op) {
            if !t.is_pointer() {
                self.report(format!("{what} has type {t}, expected a pointer"));
            }
        }
    }

    fn expect_integer(&mut self, op: &Operand, what: &str) {
        if let Some(t) = self.operand_type(op) {
            if !t.is_integer() {
                self.report(format!("{what} has type {t}, expected an integer"));
            }
        }
    }

    fn check_instr(&mut self, i: &Instruction) {
        match &i.kind {
            InstrKind::Alloca { ty, .. } => {
                if let Some(msg) = check_type(self.m, ty) {
                    self.report(msg);
                } else if let Err(e) = self.m.size_of(ty) {
                    self.report(e.to_string());
                }
            }
            InstrKind::Load { ty, addr, .. } => {
                if !ty.is_scalar() {
                    self.report(format!("load of non-scalar type {ty}"));
                }
                self.expect_pointer(addr, "load address");
            }
            InstrKind::Store { ty, value, addr } => {
                if !ty.is_scalar() {
                    self.report(format!("store of non-scalar type {ty}"));
                }
                self.expect_value(value, ty, "stored value");
                self.expect_pointer(addr, "store address");
            }
            InstrKind::Gep { base_ty, base, indices, .. } => {
                self.expect_pointer(base, "gep base");
                if let Some(msg) = check_type(self.m, base_ty) {
                    self.report(msg);
                    return;
                }
                if let Err(e) = self.m.size_of(base_ty) {
                    self.report(e.to_string());
                    return;
                }
                if indices.is_empty() {
                    self.report("gep needs at least one index");
                    return;
                }
                self.expect_integer(&indices[0], "gep index");
                let mut cur = base_ty.clone();
                for idx in &indices[1..] {
                    match &cur {
                        Type::Struct(n) | Type::Union(n) => {
                            let decl = self.m.aggregate_decl(n).expect("checked");
                            match idx.as_const() {
                                Some(k) if k >= 0 && (k as usize) < decl.fields.len() => {
                                    cur = decl.fields[k as usize].ty.clone();
                                }
                                Some(k) => {
                                    self.report(format!("field index {k} out of range for `%{n}`"));
                                    return;
                                }
                                None => {
                                    self.report(format!("field index into `%{n}` must be a constant"));
                                    return;
                                }
                            }
                        }
                        Type::Array(elem, _) => {
                            self.expect_integer(idx, "gep index");
                            cur = (**elem).clone();
                        }
                        other => {
                            self.report(format!("gep index steps into non-aggregate type {other}"));
                            return;
                        }
                    }
                }
            }
            InstrKind::BinOp { op, ty, lhs, rhs, .. } => {
                let ok = match op {
                    BinOp::Cmp(_) => ty.is_scalar(),
                    _ => ty.is_integer() || matches!(ty, Type::Float { .. }),
                };
                if !ok {
                    self.report(format!("`{}` is not defined on {ty}", op.mnemonic()));
                }
                self.expect_value(lhs, ty, "left operand");
                self.expect_value(rhs, ty, "right operand");
            }
            InstrKind::Call { dest, callee, args } => {
                let Some(cf) = self.m.function(callee) else {
                    self.report(format!("unresolved callee `@{callee}`"));
                    for a in args {
                        self.operand_type(a);
                    }
                    return;
                };
                if cf.params.len() != args.len() {
                    self.report(format!(
                        "`@{callee}` takes {} arguments, {} given",
                        cf.params.len(),
                        args.len()
                    ));
                }
                for (k, (a, p)) in args.iter().zip(&cf.params).enumerate() {
                    self.expect_value(a, &p.ty, &format!("argument {k}"));
                }
                if dest.is_some() && cf.ret == Type::Void {
                    self.report(format!("`@{callee}` returns void"));
                }
            }
            InstrKind::Br { cond, then_label, else_label } => {
                if let Some(t) = self.operand_type(cond) {
                    if !(t.is_integer() || t.is_pointer()) {
                        self.report(format!("branch condition has type {t}"));
                    }
                }
                for l in [then_label, else_label] {
                    if self.f.block_index(l).is_none() {
                        self.report(format!("unknown label `{l}`"));
                    }
                }
            }
            InstrKind::Jmp { label } => {
                if self.f.block_index(label).is_none() {
                    self.report(format!("unknown label `{label}`"));
                }
            }
            InstrKind::Ret { value } => match (value, &self.f.ret) {
                (None, Type::Void) => {}
                (None, t) => self.report(format!("missing return value of type {t}")),
                (Some(_), Type::Void) => self.report("void function returns a value"),
                (Some(v), t) => {
                    let t = t.clone();
                    self.expect_value(v, &t, "return value");
                }
            },
        }
    }
}

pub(crate) fn dest_type(m: &Module, i: &Instruction) -> Option<Type> {
    match &i.kind {
        InstrKind::Alloca { ty, .. } => Some(Type::ptr(ty.clone())),
        InstrKind::Load { ty, .. } | InstrKind::BinOp { ty, .. } => Some(ty.clone()),
        InstrKind::Gep { base_ty, indices, .. } => {
            let mut cur = base_ty.clone();
            for idx in indices.iter().skip(1) {
                cur = match &cur {
                    Type::Struct(n) | Type::Union(n) => {
                        let k = usize::try_from(idx.as_const()?).ok()?;
                        m.aggregate_decl(n)?.fields.get(k)?.ty.clone()
                    }
                    Type::Array(e, _) => (**e).clone(),
                    _ => return None,
                };
            }
            Some(Type::ptr(cur))
        }
        InstrKind::Call { dest: Some(_), callee, .. } => m.function(callee).map(|f| f.ret.clone()),
        _ => None,
    }
}

fn validate_function(m: &Module, f: &Function, out: &mut Vec<Diagnostic>) {
    let fn_diag = |msg: String| Diagnostic {
        function: Some(f.name.clone()),
        block: None,
        instr: None,
        message: msg,
    };
    if f.blocks.is_empty() {
        out.push(fn_diag("function has no blocks".into()));
    }
    let mut env: HashMap<&str, Type> = HashMap::new();
    for p in &f.params {
        if let Some(msg) = check_type(m, &p.ty) {
            out.push(fn_diag(format!("parameter `%{}`: {msg}", p.name)));
        } else if !p.ty.is_scalar() {
            out.push(fn_diag(format!("parameter `%{}` must have a scalar type", p.name)));
        } else if p.ty.contains_function() {
            out.push(fn_diag("function-pointer parameter unsupported".into()));
        }
        if env.insert(p.name.as_str(), p.ty.clone()).is_some() {
            out.push(fn_diag(format!("duplicate definition of parameter `%{}`", p.name)));
        }
    }
    if let Some(msg) = check_type(m, &f.ret) {
        out.push(fn_diag(format!("return type: {msg}")));
    } else if !(f.ret.is_scalar() || f.ret == Type::Void) {
        out.push(fn_diag("return type must be scalar or void".into()));
    }

    let mut labels = HashSet::new();
    let mut ids = HashSet::new();
    for b in &f.blocks {
        if !labels.insert(b.label.as_str()) {
            out.push(fn_diag(format!("duplicate label `{}`", b.label)));
        }
        for i in &b.instrs {
            if !ids.insert(i.id) {
                out.push(Diagnostic {
                    function: Some(f.name.clone()),
                    block: Some(b.label.clone()),
                    instr: Some(i.id),
                    message: format!("duplicate instruction id {}", i.id),
                });
            }
            if let Some(d) = i.dest() {
                let diag = |msg: String| Diagnostic {
                    function: Some(f.name.clone()),
                    block: Some(b.label.clone()),
                    instr: Some(i.id),
                    message: msg,
                };
                if env.contains_key(d) {
                    out.push(diag(format!("`%{d}` is assigned more than once")));
                } else {
                    // Ill-typed definitions are reported at the instruction;
                    // keep the name defined so uses do not cascade.
                    env.insert(d, dest_type(m, i).unwrap_or_else(Type::i64));
                }
            }
        }
    }

    let mut ctx = FnCtx { m, f, env, out, block: "", instr: None };
    for b in &f.blocks {
        ctx.block = &b.label;
        ctx.instr = None;
        match b.instrs.last() {
            Some(last) if last.is_terminator() => {}
            _ => ctx.report(format!("block `{}` is missing a terminator", b.label)),
        }
        let n = b.instrs.len();
        for (k, i) in b.instrs.iter().enumerate() {
            ctx.instr = Some(i.id);
            if i.is_terminator() && k + 1 < n {
                ctx.report(format!("terminator in the middle of block `{}`", b.label));
            }
            ctx.check_instr(i);
        }
    }
}

impl Module {
    pub fn aggregate_decl(&self, name: &str) -> Option<&super::types::AggregateDecl> {
        self.aggregates.iter().find(|a| a.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn diags(src: &str) -> Vec<Diagnostic> {
        validate_module(&parse_module(src).unwrap())
    }

    #[test]
    fn missing_terminator_names_block() {
        let d = diags("fn @f() -> void {\nentry:\n  %a = alloca i32\n}");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].block.as_deref(), Some("entry"));
        assert!(d[0].message.contains("`entry`"));
    }

    #[test]
    fn unresolved_callee() {
        let d = diags("fn @f() -> void {\nentry:\n  call @g()\n  ret\n}");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.starts_with("unresolved callee"));
        assert_eq!(d[0].instr, Some(InstrId(0)));
    }

    #[test]
    fn single_assignment_and_undefined_use() {
        let d = diags("fn @f() -> i32 {\ne:\n  %a = add i32 1, 2\n  %a = add i32 1, 2\n  ret %b\n}");
        assert_eq!(d.len(), 2, "{d:?}");
    }

    #[test]
    fn gep_struct_index_must_be_constant() {
        let src = "struct %s { i32 a, i32 b }\n\
                   fn @f(%p: ptr(%s), %k: i32) -> void {\ne:\n  %q = gep %s, %p, 0, %k\n  ret\n}";
        let d = diags(src);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("constant"));
    }

    #[test]
    fn initializer_size_checked() {
        let d = diags("global @g : i32 = bytes(00 01)\n");
        assert_eq!(d.len(), 1);
    }
}
