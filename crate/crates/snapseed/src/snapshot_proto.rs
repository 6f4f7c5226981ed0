//! Line protocol in front of a snapshot index, so exploration can run
//! against a snapshot held by another process. Requests are
//! `{"op": ..., "id": N}` or `{"op": ..., "name": S}`; replies are
//! `{"ok": true, "value": ...}` or `{"ok": false, "error": {"kind", "detail"}}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde_json::{json, Value as Json};
use snapseed_core::snapshot::{
    ArrayRecord, EntryKind, Header, ObjectRecord, SnapValue, SnapshotError, SnapshotIndex, SnapshotQuery,
};

fn error_json(e: &SnapshotError) -> Json {
    let (kind, detail) = match e {
        SnapshotError::UnknownId(id) => ("unknown-id", json!(id)),
        SnapshotError::WrongKind { id, expected } => ("wrong-kind", json!({"id": id, "expected": expected})),
        SnapshotError::UnknownClass(c) => ("unknown-class", json!(c)),
        SnapshotError::UnknownService(s) => ("unknown-service", json!(s)),
        other => ("other", json!(other.to_string())),
    };
    json!({"kind": kind, "detail": detail})
}

fn error_from_json(e: &Json) -> SnapshotError {
    let detail = &e["detail"];
    let id = || detail.as_u64().and_then(|i| u32::try_from(i).ok());
    match e["kind"].as_str() {
        Some("unknown-id") if id().is_some() => SnapshotError::UnknownId(id().unwrap()),
        Some("unknown-class") => SnapshotError::UnknownClass(detail.as_str().unwrap_or_default().into()),
        Some("unknown-service") => SnapshotError::UnknownService(detail.as_str().unwrap_or_default().into()),
        // `expected` is a static string on this side; map the known ones.
        Some("wrong-kind") => {
            let expected = match detail["expected"].as_str() {
                Some("object") => "object",
                Some("array") => "array",
                Some("string") => "string",
                _ => "entry of another kind",
            };
            SnapshotError::WrongKind {
                id: detail["id"].as_u64().unwrap_or(0) as u32,
                expected,
            }
        }
        _ => SnapshotError::Transport(e.to_string()),
    }
}

fn answer(index: &SnapshotIndex, req: &Json) -> Result<Json, Json> {
    let bad = |d: &str| json!({"kind": "bad-request", "detail": d});
    let id = || {
        req.get("id")
            .and_then(Json::as_u64)
            .and_then(|i| u32::try_from(i).ok())
            .ok_or_else(|| bad("missing `id`"))
    };
    let name = || req.get("name").and_then(Json::as_str).ok_or_else(|| bad("missing `name`"));
    let snap = |e: SnapshotError| error_json(&e);
    Ok(match req.get("op").and_then(Json::as_str) {
        Some("header") => json!(index.header()),
        Some("get_object") => json!(index.get_object(id()?).map_err(snap)?),
        Some("get_array") => json!(index.get_array(id()?).map_err(snap)?),
        Some("get_string") => json!(index.get_string(id()?).map_err(snap)?),
        Some("class_statics") => json!(index.class_statics(name()?).map_err(snap)?),
        Some("find_root") => json!(index.find_root(name()?).map_err(snap)?),
        Some("kind_of") => json!(index.kind_of(id()?).map_err(snap)?),
        Some(op) => return Err(bad(&format!("unknown op `{}`", op))),
        None => return Err(bad("missing `op`")),
    })
}

/// Answer requests from `input` until it ends.
pub fn serve(index: &SnapshotIndex, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Json>(&line) {
            Ok(req) => match answer(index, &req) {
                Ok(v) => json!({"ok": true, "value": v}),
                Err(e) => json!({"ok": false, "error": e}),
            },
            Err(e) => json!({"ok": false, "error": {"kind": "bad-request", "detail": e.to_string()}}),
        };
        writeln!(output, "{}", reply)?;
        output.flush()?;
    }
    Ok(())
}

/// [`SnapshotQuery`] over a protocol stream. Requests are serialized
/// through a lock, so one client may be shared by reference.
pub struct RemoteSnapshot<R, W> {
    stream: Mutex<(R, W)>,
    header: Header,
}

impl<R: BufRead, W: Write> RemoteSnapshot<R, W> {
    /// Connect and fetch the header, which every exploration needs.
    pub fn connect(reader: R, writer: W) -> Result<Self, SnapshotError> {
        let mut client = RemoteSnapshot {
            stream: Mutex::new((reader, writer)),
            header: Header {
                version: 0,
                skeleton_uid: 0,
                skeleton_package: String::new(),
            },
        };
        client.header = client.request(json!({"op": "header"}))?;
        Ok(client)
    }

    fn request<T: DeserializeOwned>(&self, req: Json) -> Result<T, SnapshotError> {
        let transport = |e: &dyn std::fmt::Display| SnapshotError::Transport(e.to_string());
        let mut guard = self.stream.lock().map_err(|e| transport(&e))?;
        let (reader, writer) = &mut *guard;
        writeln!(writer, "{}", req).map_err(|e| transport(&e))?;
        writer.flush().map_err(|e| transport(&e))?;
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(|e| transport(&e))? == 0 {
            return Err(transport(&"snapshot server closed the stream"));
        }
        let reply: Json = serde_json::from_str(&line).map_err(|e| transport(&e))?;
        if reply["ok"].as_bool() != Some(true) {
            return Err(error_from_json(&reply["error"]));
        }
        serde_json::from_value(reply["value"].clone()).map_err(|e| transport(&e))
    }
}

impl<R: BufRead, W: Write> SnapshotQuery for RemoteSnapshot<R, W> {
    fn header(&self) -> Header {
        self.header.clone()
    }

    fn get_object(&self, id: u32) -> Result<ObjectRecord, SnapshotError> {
        self.request(json!({"op": "get_object", "id": id}))
    }

    fn get_array(&self, id: u32) -> Result<ArrayRecord, SnapshotError> {
        self.request(json!({"op": "get_array", "id": id}))
    }

    fn get_string(&self, id: u32) -> Result<String, SnapshotError> {
        self.request(json!({"op": "get_string", "id": id}))
    }

    fn class_statics(&self, name: &str) -> Result<Option<BTreeMap<String, SnapValue>>, SnapshotError> {
        self.request(json!({"op": "class_statics", "name": name}))
    }

    fn find_root(&self, service: &str) -> Result<u32, SnapshotError> {
        self.request(json!({"op": "find_root", "name": service}))
    }

    fn kind_of(&self, id: u32) -> Result<EntryKind, SnapshotError> {
        self.request(json!({"op": "kind_of", "id": id}))
    }
}
