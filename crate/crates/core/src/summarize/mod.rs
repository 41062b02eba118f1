//! Function summaries: which parameters, globals and return value each
//! output of a function depends on, derived from its dependency graph.

mod binding;
mod cache;
mod flatten;
mod generate;
mod summary;

pub use binding::{bind, path_at, source_nodes, target_nodes, NodeBinding};
pub use cache::SummaryCache;
pub use flatten::{flatten_prim_types, PrimTypeMap};
pub use generate::{
    callee_first_order, summarize_function, summarize_library, summary_gen, LibrarySummaries,
    SummarizeDiagnostic, SummarizeOpts,
};
pub use summary::{SlotKind, SlotRef, Summary, SummaryEntry, SummaryJsonError};
