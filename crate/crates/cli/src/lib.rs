//! File formats and run-manifest plumbing for the `kirinlab` command-line
//! tool. Everything here is a thin serde layer over `kirinlab-core` types;
//! the core crate itself stays format-free.

pub mod formats;
pub mod manifest;
