//! Reference extern host: answers each function with the value stored
//! under its name in a JSON table file.

use std::collections::BTreeMap;
use std::io::{stdin, stdout};
use std::path::PathBuf;
use std::process::ExitCode;

use snapseed::extern_host::serve_table;
use snapseed::files::read_json;

fn main() -> ExitCode {
    let Some(path) = std::env::args_os().nth(1).map(PathBuf::from) else {
        eprintln!("usage: snapseed-extern-host <table.json>");
        return ExitCode::from(2);
    };
    let table: BTreeMap<String, serde_json::Value> = match read_json(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(2);
        }
    };
    match serve_table(&table, stdin().lock(), stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
