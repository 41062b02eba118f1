use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::InstrId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Instruction-level propagation everywhere.
    InstrOnly,
    /// Rules at the return of summarized library functions, instruction-level
    /// propagation elsewhere.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceWhere {
    Param,
    Ret,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    #[serde(rename = "fn")]
    pub function: String,
    #[serde(rename = "where")]
    pub at: SourceWhere,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u32>,
    pub label: u8,
    /// Bytes tainted behind a pointer parameter; defaults to the string or
    /// pointee extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sink {
    #[serde(rename = "fn")]
    pub function: String,
    pub index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintConfig {
    #[serde(default)]
    pub sources: Vec<Source>,
    #[serde(default)]
    pub sinks: Vec<Sink>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid taint config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("label {0:#04x} is not a single bit")]
    Label(u8),
    #[error("parameter source on `@{0}` needs an index")]
    MissingIndex(String),
}

impl TaintConfig {
    pub fn from_json(text: &str) -> Result<TaintConfig, ConfigError> {
        let c: TaintConfig = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    /// Labels must be single bits, so at most eight are distinct.
    pub fn check(&self) -> Result<(), ConfigError> {
        for s in &self.sources {
            if s.label.count_ones() != 1 {
                return Err(ConfigError::Label(s.label));
            }
            if s.at == SourceWhere::Param && s.index.is_none() {
                return Err(ConfigError::MissingIndex(s.function.clone()));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> BTreeSet<u8> {
        self.sources.iter().map(|s| s.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SinkHit {
    pub function: String,
    pub index: u32,
    pub tag: u8,
    /// Call instruction and its function; absent for calls made by a harness.
    pub call_site: Option<(String, InstrId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub exit_value: Option<i64>,
    pub shadow_ops_instr: u64,
    pub shadow_ops_rules: u64,
    pub instr_executed_total: u64,
    pub instr_executed_uninstrumented: u64,
    pub tainted_bytes_final: Vec<(u64, u8)>,
    pub ret_shadow: Vec<u8>,
    pub sink_hits: Vec<SinkHit>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    OutOfBounds,
    DivisionByZero,
    StackOverflow,
    StepBudget,
    /// The program did something the interpreter cannot execute, such as
    /// calling an unknown function.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{kind:?} in `@{function}` at {instr}: {message}")]
pub struct Trap {
    pub kind: TrapKind,
    pub function: String,
    pub instr: InstrId,
    pub message: String,
}
