//! Bundled TMN specifications.

use thiserror::Error;

use crate::dsl::{parse, Diagnostic, SpecFile};

pub struct Fixture {
    pub name: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

pub const FIXTURES: &[Fixture] = &[
    Fixture {
        name: "tmn_original",
        description: "TMN key distribution, original four messages, no assertions",
        source: include_str!("../fixtures/tmn_original.tlp"),
    },
    Fixture {
        name: "tmn_timestamps",
        description: "timestamps in messages 1 and 3, server checks freshness of R1 and R2",
        source: include_str!("../fixtures/tmn_timestamps.tlp"),
    },
    Fixture {
        name: "tmn_secrets",
        description: "shared secrets SA/SB, server authenticates A and B",
        source: include_str!("../fixtures/tmn_secrets.tlp"),
    },
    Fixture {
        name: "tmn_mutual",
        description: "shared secrets plus mutual authentication checks by A and B",
        source: include_str!("../fixtures/tmn_mutual.tlp"),
    },
];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture `{name}`; available: {}", names().join(", "))]
    Unknown { name: String },
    #[error("fixture `{name}` does not parse: {diag}")]
    Broken { name: String, diag: Diagnostic },
}

pub fn names() -> Vec<&'static str> {
    FIXTURES.iter().map(|f| f.name).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|f| f.name == name).map(|f| f.source)
}

pub fn fixture(name: &str) -> Result<SpecFile, FixtureError> {
    let src = source(name).ok_or_else(|| FixtureError::Unknown { name: name.to_string() })?;
    parse(src).map_err(|diag| FixtureError::Broken { name: name.to_string(), diag })
}
