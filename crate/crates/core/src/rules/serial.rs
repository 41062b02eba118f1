use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RuleStep, TaintRuleProgram};

pub const RULES_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ProgramJson {
    v: u32,
    function: String,
    steps: Vec<RuleStep>,
}

#[derive(Debug, Error)]
pub enum RuleParseError {
    #[error("invalid rule JSON at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported rule schema version {0}")]
    Version(u32),
}

/// Compact single-line JSON with a trailing newline.
pub fn serialize_rules(p: &TaintRuleProgram) -> String {
    let j = ProgramJson { v: RULES_VERSION, function: p.function.clone(), steps: p.steps.clone() };
    let mut s = serde_json::to_string(&j).expect("rules serialize");
    s.push('\n');
    s
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut off = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (off + column.saturating_sub(1)).min(text.len());
        }
        off += l.len();
    }
    text.len()
}

pub fn parse_rules(text: &str) -> Result<TaintRuleProgram, RuleParseError> {
    let j: ProgramJson = serde_json::from_str(text).map_err(|e| RuleParseError::Syntax {
        offset: if e.is_eof() { text.len() } else { byte_offset(text, e.line(), e.column()) },
        message: e.to_string(),
    })?;
    if j.v != RULES_VERSION {
        return Err(RuleParseError::Version(j.v));
    }
    Ok(TaintRuleProgram { function: j.function, steps: j.steps })
}
