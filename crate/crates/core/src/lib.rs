//! Turns a git repository and a knowledge-cutoff date into validated,
//! machine-checkable repository-centric task instances.

pub mod cutoff;
pub mod diff;
pub mod git;
pub mod layout;
pub mod syntax;
pub mod index;
pub mod miner;
pub mod fim;
pub mod design;
pub mod process;
pub mod mirror;
pub mod harness;
pub mod forge;
pub mod trajectory;
pub mod config;
pub mod pipeline;
pub mod fixture;
