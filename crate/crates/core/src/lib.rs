//! Completing noise-scale sketches of randomized mechanisms into
//! differentially private programs.
//!
//! The pipeline: a statistical tester ([`tester`]) finds hard input pairs and
//! events, differential evolution over concrete noise scales ([`search`])
//! locates a low-loss region, and enumeration of symbolic scale expressions
//! near that region ([`synth`]) produces a ranked, re-tested list of
//! completions.

pub mod corpus;
pub mod dist;
pub mod lang;
pub mod rng;
pub mod search;
pub mod synth;
pub mod tester;
