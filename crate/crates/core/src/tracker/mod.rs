//! Byte-level dynamic taint tracking over the IR.

mod config;
mod machine;
mod tagmap;

pub use config::{
    ConfigError, Mode, RunReport, SinkHit, Sink, Source, SourceWhere, TaintConfig, Trap, TrapKind,
};
pub use machine::{exit_value, run, Machine, MachineConfig, Value, NULL_LIMIT};
pub use tagmap::{Tagmap, PAGE_SIZE};
