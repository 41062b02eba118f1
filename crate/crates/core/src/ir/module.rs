use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::{AggregateDecl, AggregateTable, Layout, LayoutError, Type};

/// Position of an instruction within its function, in textual program order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstrId(pub u32);

impl fmt::Display for InstrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    /// A temporary or a parameter.
    Local(String),
    /// The address of a global.
    Global(String),
    Const(i64),
}

impl Operand {
    pub fn local(&self) -> Option<&str> {
        match self {
            Operand::Local(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            Operand::Const(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Local(n) => write!(f, "%{n}"),
            Operand::Global(n) => write!(f, "@{n}"),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpPred {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpPred {
    pub const ALL: [CmpPred; 6] = [
        CmpPred::Eq,
        CmpPred::Ne,
        CmpPred::Lt,
        CmpPred::Le,
        CmpPred::Gt,
        CmpPred::Ge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            CmpPred::Eq => "eq",
            CmpPred::Ne => "ne",
            CmpPred::Lt => "lt",
            CmpPred::Le => "le",
            CmpPred::Gt => "gt",
            CmpPred::Ge => "ge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<CmpPred> {
        CmpPred::ALL.into_iter().find(|p| p.mnemonic() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    /// Produces 0 or 1 in the operand type.
    Cmp(CmpPred),
}

impl BinOp {
    pub const ARITH: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::Cmp(_) => "cmp",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<BinOp> {
        BinOp::ARITH.into_iter().find(|o| o.mnemonic() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstrKind {
    Alloca {
        dest: String,
        ty: Type,
    },
    Load {
        dest: String,
        ty: Type,
        addr: Operand,
    },
    Store {
        ty: Type,
        value: Operand,
        addr: Operand,
    },
    Gep {
        dest: String,
        base_ty: Type,
        base: Operand,
        indices: Vec<Operand>,
    },
    BinOp {
        dest: String,
        op: BinOp,
        ty: Type,
        lhs: Operand,
        rhs: Operand,
    },
    Call {
        dest: Option<String>,
        callee: String,
        args: Vec<Operand>,
    },
    Br {
        cond: Operand,
        then_label: String,
        else_label: String,
    },
    Jmp {
        label: String,
    },
    Ret {
        value: Option<Operand>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstrId,
    pub kind: InstrKind,
}

impl Instruction {
    pub fn dest(&self) -> Option<&str> {
        match &self.kind {
            InstrKind::Alloca { dest, .. }
            | InstrKind::Load { dest, .. }
            | InstrKind::Gep { dest, .. }
            | InstrKind::BinOp { dest, .. } => Some(dest),
            InstrKind::Call { dest, .. } => dest.as_deref(),
            _ => None,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match &self.kind {
            InstrKind::Alloca { .. } | InstrKind::Jmp { .. } => vec![],
            InstrKind::Load { addr, .. } => vec![addr],
            InstrKind::Store { value, addr, .. } => vec![value, addr],
            InstrKind::Gep { base, indices, .. } => {
                let mut v = vec![base];
                v.extend(indices.iter());
                v
            }
            InstrKind::BinOp { lhs, rhs, .. } => vec![lhs, rhs],
            InstrKind::Call { args, .. } => args.iter().collect(),
            InstrKind::Br { cond, .. } => vec![cond],
            InstrKind::Ret { value } => value.iter().collect(),
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self.kind,
            InstrKind::Br { .. } | InstrKind::Jmp { .. } | InstrKind::Ret { .. }
        )
    }

    pub fn opcode(&self) -> &'static str {
        match &self.kind {
            InstrKind::Alloca { .. } => "alloca",
            InstrKind::Load { .. } => "load",
            InstrKind::Store { .. } => "store",
            InstrKind::Gep { .. } => "gep",
            InstrKind::BinOp { op, .. } => op.mnemonic(),
            InstrKind::Call { .. } => "call",
            InstrKind::Br { .. } => "br",
            InstrKind::Jmp { .. } => "jmp",
            InstrKind::Ret { .. } => "ret",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Type,
    pub library: bool,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn entry_label(&self) -> Option<&str> {
        self.blocks.first().map(|b| b.label.as_str())
    }

    /// All instructions in textual order.
    pub fn instrs(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn instr(&self, id: InstrId) -> Option<&Instruction> {
        self.instrs().find(|i| i.id == id)
    }

    pub fn block_of(&self, id: InstrId) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.instrs.iter().any(|i| i.id == id))
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn callees(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .instrs()
            .filter_map(|i| match &i.kind {
                InstrKind::Call { callee, .. } => Some(callee.as_str()),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Reassigns instruction ids to match textual order.
    pub fn renumber(&mut self) {
        let mut next = 0;
        for b in &mut self.blocks {
            for i in &mut b.instrs {
                i.id = InstrId(next);
                next += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Global {
    pub name: String,
    pub ty: Type,
    pub init: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Module {
    pub aggregates: Vec<AggregateDecl>,
    pub globals: Vec<Global>,
    pub functions: Vec<Function>,
}

impl AggregateTable for Module {
    fn aggregate(&self, name: &str) -> Option<&AggregateDecl> {
        self.aggregates.aggregate(name)
    }
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn library_fns(&self) -> impl Iterator<Item = &Function> {
        self.functions.iter().filter(|f| f.library)
    }

    pub fn layout(&self) -> Layout<'_, Module> {
        Layout::new(self)
    }

    pub fn size_of(&self, ty: &Type) -> Result<u64, LayoutError> {
        self.layout().size_of(ty)
    }

    pub fn field_offset(&self, aggregate: &str, field: &str) -> Result<u64, LayoutError> {
        self.layout().field_offset(aggregate, field)
    }
}
