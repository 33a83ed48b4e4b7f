//! Search-based automated repair of timed statecharts.
//!
//! A chart written in the textual DSL ([`dsl`]) is simulated ([`sim`])
//! against a test suite with a regression oracle ([`oracle`]). Components
//! are ranked by Tarantula suspiciousness ([`localize`]) and mutated
//! ([`mutate`]) by an archive-based global/local search ([`engine`]).
//! [`bench`] holds the corpus and experiment harness.

pub mod bench;
pub mod dsl;
pub mod engine;
pub mod localize;
pub mod model;
pub mod mutate;
pub mod oracle;
pub mod sim;
