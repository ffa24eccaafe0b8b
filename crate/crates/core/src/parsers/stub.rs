//! Placeholders for registered datasets whose parsers are not written yet.

use std::path::Path;

use super::{Parser, ParserOutput};
use crate::config::WharConfig;
use crate::error::{Error, Result};

pub const STUB_PARSER_IDS: [&str; 7] = [
    "mhealth",
    "pamap2",
    "opportunity",
    "motion_sense",
    "dsads",
    "daphnet",
    "har_sense",
];

#[derive(Debug, Clone)]
pub struct NotImplementedParser {
    id: String,
}

impl NotImplementedParser {
    pub fn new(id: &str) -> Self {
        NotImplementedParser { id: id.to_string() }
    }
}

impl Parser for NotImplementedParser {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> u32 {
        0
    }

    fn parse(&self, raw_dir: &Path, _cfg: &WharConfig) -> Result<ParserOutput> {
        Err(Error::parse(
            &self.id,
            format!(
                "no parser implemented for `{}` yet (raw data is in {}). Implement \
                 `whar::parsers::Parser` for it and register it with \
                 `ParserRegistry::register`; see `parsers::wisdm` for a template",
                self.id,
                raw_dir.display()
            ),
        ))
    }
}
