//! File formats, subprocess protocols and the command-line front end for
//! `snapseed-core`.

pub mod cli;
pub mod extern_host;
pub mod files;
pub mod report;
pub mod snapshot_proto;
