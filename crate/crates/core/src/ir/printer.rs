//! Canonical textual form. `parse_module(&m.to_string())` reproduces `m`.

use std::fmt::{self, Write as _};

use super::module::{BinOp, Function, Global, InstrKind, Instruction, Module};
use super::types::{AggregateDecl, AggregateKind};

impl fmt::Display for InstrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstrKind::Alloca { dest, ty } => write!(f, "%{dest} = alloca {ty}"),
            InstrKind::Load { dest, ty, addr } => write!(f, "%{dest} = load {ty}, {addr}"),
            InstrKind::Store { ty, value, addr } => write!(f, "store {ty} {value}, {addr}"),
            InstrKind::Gep { dest, base_ty, base, indices } => {
                write!(f, "%{dest} = gep {base_ty}, {base}")?;
                for i in indices {
                    write!(f, ", {i}")?;
                }
                Ok(())
            }
            InstrKind::BinOp { dest, op, ty, lhs, rhs } => match op {
                BinOp::Cmp(p) => write!(f, "%{dest} = cmp {} {ty} {lhs}, {rhs}", p.mnemonic()),
                _ => write!(f, "%{dest} = {} {ty} {lhs}, {rhs}", op.mnemonic()),
            },
            InstrKind::Call { dest, callee, args } => {
                if let Some(d) = dest {
                    write!(f, "%{d} = ")?;
                }
                write!(f, "call @{callee}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
            InstrKind::Br { cond, then_label, else_label } => {
                write!(f, "br {cond}, {then_label}, {else_label}")
            }
            InstrKind::Jmp { label } => write!(f, "jmp {label}"),
            InstrKind::Ret { value: None } => f.write_str("ret"),
            InstrKind::Ret { value: Some(v) } => write!(f, "ret {v}"),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

impl fmt::Display for AggregateDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = match self.kind {
            AggregateKind::Struct => "struct",
            AggregateKind::Union => "union",
        };
        write!(f, "{kw} %{} {{ ", self.name)?;
        for (i, fld) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} {}", fld.ty, fld.name)?;
        }
        f.write_str(" }")
    }
}

impl fmt::Display for Global {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "global @{} : {}", self.name, self.ty)?;
        if let Some(bytes) = &self.init {
            f.write_str(" = bytes(")?;
            for (i, b) in bytes.iter().enumerate() {
                if i > 0 {
                    f.write_char(' ')?;
                }
                write!(f, "{b:02x}")?;
            }
            f.write_char(')')?;
        }
        Ok(())
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn @{}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "%{}: {}", p.name, p.ty)?;
        }
        write!(f, ") -> {}", self.ret)?;
        if self.library {
            f.write_str(" library")?;
        }
        f.write_str(" {\n")?;
        for b in &self.blocks {
            writeln!(f, "{}:", b.label)?;
            for i in &b.instrs {
                writeln!(f, "  {i}")?;
            }
        }
        f.write_str("}\n")
    }
}

impl fmt::Display for Module {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.aggregates {
            writeln!(f, "{a}")?;
        }
        if !self.aggregates.is_empty() {
            f.write_char('\n')?;
        }
        for g in &self.globals {
            writeln!(f, "{g}")?;
        }
        if !self.globals.is_empty() {
            f.write_char('\n')?;
        }
        for (i, func) in self.functions.iter().enumerate() {
            if i > 0 {
                f.write_char('\n')?;
            }
            write!(f, "{func}")?;
        }
        Ok(())
    }
}
