//! Typed intermediate representation.

mod module;
mod parser;
mod printer;
mod types;
mod validate;

pub use module::{
    BinOp, Block, CmpPred, Function, Global, InstrId, InstrKind, Instruction, Module, Operand, Param,
};
pub use parser::{parse_module, parse_type, ParseDiagnostic, ParseError};
pub use types::{
    AggregateDecl, AggregateKind, AggregateTable, Field, Layout, LayoutError, Type, POINTER_SIZE,
};
pub use validate::{validate_module, Diagnostic};
