//! On-disk summary cache keyed by a content hash of everything a summary
//! depends on: the function body, the declarations, the callee summaries it
//! was built against, and the options.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::generate::{summarize_function, summarize_library_with, LibrarySummaries, SummarizeOpts};
use super::summary::Summary;
use crate::ir::{Function, Module};

pub struct SummaryCache {
    dir: PathBuf,
    pub hits: usize,
    pub misses: usize,
}

fn key(m: &Module, f: &Function, callees: &BTreeMap<String, Summary>, opts: SummarizeOpts) -> String {
    let mut h = Sha256::new();
    h.update(if opts.control_deps { b"cd1\n" } else { b"cd0\n" });
    for a in &m.aggregates {
        h.update(a.to_string().as_bytes());
        h.update(b"\n");
    }
    for g in &m.globals {
        h.update(g.to_string().as_bytes());
        h.update(b"\n");
    }
    // Non-library callees are inlined, so their bodies matter too.
    for other in &m.functions {
        if other.name == f.name || !callees.contains_key(&other.name) {
            h.update(other.to_string().as_bytes());
        }
    }
    for (name, s) in callees {
        h.update(name.as_bytes());
        h.update(s.to_json().as_bytes());
    }
    hex::encode(h.finalize())
}

impl SummaryCache {
    pub fn new(dir: impl AsRef<Path>) -> io::Result<SummaryCache> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(SummaryCache { dir: dir.as_ref().to_path_buf(), hits: 0, misses: 0 })
    }

    pub fn summarize_library(&mut self, m: &Module, opts: SummarizeOpts) -> LibrarySummaries {
        summarize_library_with(m, opts, |m, f, callees| {
            let path = self.dir.join(format!("{}.summary.json", key(m, f, callees, opts)));
            if let Ok(text) = fs::read_to_string(&path) {
                if let Ok(s) = Summary::from_json(&text, m) {
                    self.hits += 1;
                    return Ok(s);
                }
            }
            self.misses += 1;
            let s = summarize_function(m, f, callees, opts)?;
            // A failed cache write only costs a recomputation next time.
            let _ = fs::write(&path, s.to_json());
            Ok(s)
        })
    }
}
