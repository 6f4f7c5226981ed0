//! Extern-host protocol: one JSON object per line, `{"id", "fn", "args"}`
//! from the engine and `{"id", "ret"}` (or `{"id", "error"}`) back.
//! Arguments and results are plain JSON scalars: numbers, booleans,
//! strings and `null`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde_json::{json, Value as Json};
use snapseed_core::host::{ExternHost, HostError, HostValue};

pub fn to_wire(v: &HostValue) -> Json {
    match v {
        HostValue::Int(i) => json!(i),
        HostValue::Bool(b) => json!(b),
        HostValue::Str(s) => json!(s),
        HostValue::Null => Json::Null,
    }
}

pub fn from_wire(v: &Json) -> Option<HostValue> {
    Some(match v {
        Json::Null => HostValue::Null,
        Json::Bool(b) => HostValue::Bool(*b),
        Json::String(s) => HostValue::Str(s.clone()),
        Json::Number(n) => HostValue::Int(i32::try_from(n.as_i64()?).ok()?),
        _ => return None,
    })
}

/// Client side over any line stream.
pub struct StreamHost<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
}

impl<R: BufRead, W: Write> StreamHost<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamHost {
            reader,
            writer,
            next_id: 1,
        }
    }
}

fn transport(e: impl std::fmt::Display) -> HostError {
    HostError::Transport(e.to_string())
}

impl<R: BufRead, W: Write> ExternHost for StreamHost<R, W> {
    fn call(&mut self, name: &str, args: &[HostValue]) -> Result<HostValue, HostError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = json!({"id": id, "fn": name, "args": args.iter().map(to_wire).collect::<Vec<_>>()});
        writeln!(self.writer, "{}", req).map_err(transport)?;
        self.writer.flush().map_err(transport)?;
        let mut line = String::new();
        if self.reader.read_line(&mut line).map_err(transport)? == 0 {
            return Err(transport("host closed the stream"));
        }
        let reply: Json = serde_json::from_str(&line).map_err(transport)?;
        if reply.get("id").and_then(Json::as_u64) != Some(id) {
            return Err(transport(format!("reply {} does not answer request {}", line.trim(), id)));
        }
        if let Some(e) = reply.get("error") {
            let msg = e.as_str().unwrap_or_default();
            return Err(if msg.starts_with("unknown function") {
                HostError::UnknownFunction(name.into())
            } else {
                HostError::Transport(msg.into())
            });
        }
        let ret = reply.get("ret").unwrap_or(&Json::Null);
        from_wire(ret).ok_or_else(|| HostError::TypeMismatch {
            name: name.into(),
            detail: format!("`{}` is not a scalar", ret),
        })
    }
}

/// Host running as a child process, started from a command line split on
/// whitespace.
pub struct ProcessHost {
    child: Child,
    stream: StreamHost<BufReader<ChildStdout>, ChildStdin>,
}

impl ProcessHost {
    pub fn spawn(command: &str) -> std::io::Result<ProcessHost> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty extern-host command"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Ok(ProcessHost {
            child,
            stream: StreamHost::new(stdout, stdin),
        })
    }
}

impl ExternHost for ProcessHost {
    fn call(&mut self, name: &str, args: &[HostValue]) -> Result<HostValue, HostError> {
        self.stream.call(name, args)
    }
}

impl Drop for ProcessHost {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serve canned results from `table` until the input ends. Malformed
/// requests get an error reply; they do not stop the server.
pub fn serve_table(table: &BTreeMap<String, Json>, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Json>(&line) {
            Err(e) => json!({"id": null, "error": format!("bad request: {}", e)}),
            Ok(req) => {
                let id = req.get("id").cloned().unwrap_or(Json::Null);
                match req.get("fn").and_then(Json::as_str) {
                    None => json!({"id": id, "error": "bad request: missing `fn`"}),
                    Some(f) => match table.get(f) {
                        Some(v) => json!({"id": id, "ret": v}),
                        None => json!({"id": id, "error": format!("unknown function `{}`", f)}),
                    },
                }
            }
        };
        writeln!(output, "{}", reply)?;
        output.flush()?;
    }
    Ok(())
}
