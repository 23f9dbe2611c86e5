//! Bounded verification of security protocols whose roles carry local
//! trace-logic assertions, against a Dolev-Yao intruder.
//!
//! A specification lists role templates and a finite scenario of role
//! instances ([`dsl`]). The [`engine`] explores every interleaving of the
//! instances, letting the [`intruder`] build each received message
//! symbolically, and checks each action's [`logic`] formula on the trace so
//! far. Failures are confirmed on a ground trace before they are reported.

pub mod dsl;
pub mod engine;
pub mod fixtures;
pub mod intruder;
pub mod logic;
pub mod model;
pub mod report;
pub mod term;
