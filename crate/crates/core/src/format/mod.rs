//! Problem document formats.

mod json;
mod mps;

pub use json::{parse_json, to_json};
pub use mps::{parse_mps, to_mps};

use crate::error::Result;
use crate::problem::IlpProblem;

/// Parse either format; documents starting with `{` are JSON.
pub fn parse_problem(text: &str) -> Result<IlpProblem> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_mps(text)
    }
}
