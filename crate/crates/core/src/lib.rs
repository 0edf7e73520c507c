//! Learn PDDL domains from demonstration keyframes, fuse them into one
//! compact domain, and plan unseen tasks with a grounded classical planner.
//!
//! Every model call goes through [`oracle::Oracle`], which can record
//! responses to a JSONL transcript and replay them later, so the whole
//! pipeline runs offline and deterministically in tests.

pub mod eval;
pub mod fusion;
pub mod graph;
pub mod keyframes;
pub mod learn;
pub mod oracle;
pub mod pddl;
pub mod planner;
pub mod prompt;
pub mod task_plan;
