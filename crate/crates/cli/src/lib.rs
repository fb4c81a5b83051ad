//! Flag parsing and result-document rendering for the `ccep` binary,
//! exposed as a library so integration tests can parse the documents back.

pub mod parse;
pub mod render;
