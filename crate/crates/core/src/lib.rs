//! Weakly-supervised semantic parsing of visual-reasoning statements over
//! structured knowledge bases, trained from denotations with the help of
//! abstract utterance/program examples.

pub mod abstraction;
pub mod augment;
pub mod eval;
pub mod lang;
pub mod neural;
pub mod pipeline;
pub mod preprocess;
pub mod ruleparser;
pub mod search;
pub mod train;
pub mod world;
