//! Delegation of extern calls to an out-of-engine host.

use alloc::collections::BTreeMap;
use alloc::string::String;

/// Value crossing the extern-host boundary. Non-string references cross
/// as `Null`; hosts only see scalars and text.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HostValue {
    Int(i32),
    Bool(bool),
    Str(String),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    #[error("no extern host configured for `{0}`")]
    NoHost(String),
    #[error("extern host has no entry for `{0}`")]
    UnknownFunction(String),
    #[error("extern host transport failure: {0}")]
    Transport(String),
    #[error("extern host reply for `{name}` has the wrong type: {detail}")]
    TypeMismatch { name: String, detail: String },
}

pub trait ExternHost {
    fn call(&mut self, name: &str, args: &[HostValue]) -> Result<HostValue, HostError>;
}

/// Host that refuses every call.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHost;

impl ExternHost for NoHost {
    fn call(&mut self, name: &str, _args: &[HostValue]) -> Result<HostValue, HostError> {
        Err(HostError::NoHost(name.into()))
    }
}

/// In-process host answering each function with a canned value.
#[derive(Debug, Default, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TableHost {
    pub table: BTreeMap<String, HostValue>,
}

impl TableHost {
    pub fn new(table: BTreeMap<String, HostValue>) -> Self {
        TableHost { table }
    }
}

impl ExternHost for TableHost {
    fn call(&mut self, name: &str, _args: &[HostValue]) -> Result<HostValue, HostError> {
        self.table
            .get(name)
            .cloned()
            .ok_or_else(|| HostError::UnknownFunction(name.into()))
    }
}
