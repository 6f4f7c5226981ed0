//! Snapshot-seeded symbolic execution for a miniature object-oriented
//! stack bytecode.
//!
//! The pipeline is: run a guest program's initialization phase concretely
//! ([`concrete::run_init`]), dump the resulting heap into a
//! [`snapshot::SnapshotDoc`], then explore a service entrypoint
//! symbolically ([`symbolic::explore`]) while lazily migrating heap objects
//! out of the snapshot on first access. Slim tainting ([`taint`]) decides
//! which migrated values belong to the placeholder client app and turns them
//! into symbolic inputs. Solved path conditions ([`solver`]) become exploit
//! manifests ([`analyses`]) that are checked by concrete replay.
//!
//! This crate is `no_std` and only needs `alloc`. File IO, subprocess
//! protocols and the command-line front end live in the `snapseed` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analyses;
pub mod concrete;
pub mod corpus;
pub mod host;
pub mod isa;
pub mod snapshot;
pub mod solver;
pub mod symbolic;
pub mod taint;

/// Offset of per-user uid ranges in the corpus runtime.
pub const PER_USER_RANGE: i32 = 100_000;
/// First uid handed out to an installed application.
pub const FIRST_APPLICATION_UID: i32 = 10_000;
/// Uid the system server runs under.
pub const SYSTEM_UID: i32 = 1000;
