pub mod ir;
pub mod pdg;
pub mod summarize;
pub mod corpus;
pub mod rules;
pub mod tracker;
pub mod validate;
