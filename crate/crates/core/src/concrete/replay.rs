use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::dump::heap_from_snapshot;
use super::interp::{Mode, Vm};
use super::{BranchEvent, HeapObj, HeapState, Trap, Value};
use crate::host::ExternHost;
use crate::isa::{Location, Program, Type};
use crate::snapshot::{SnapshotError, SnapshotIndex, SnapshotQuery};
use crate::solver::ModelValue;

/// Heap slot addressed by snapshot id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OverlayLocation {
    Field { obj: u32, field: String },
    Elem { arr: u32, index: usize },
}

/// One app-configuration override applied before the run.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OverlayEntry {
    pub location: OverlayLocation,
    pub value: ModelValue,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ReplayRequest {
    /// Root name of the service object receiving the call.
    pub service: String,
    /// Method name, dispatched on the service object's class.
    pub entrypoint: String,
    pub params: Vec<ModelValue>,
    /// Values for extern results, keyed by variable name.
    #[serde(default)]
    pub model: BTreeMap<String, ModelValue>,
    #[serde(default)]
    pub overlay: Vec<OverlayEntry>,
}

/// Name of the model variable for field `field` of non-null reference
/// parameter `index`.
pub fn param_field_var(index: usize, field: &str) -> String {
    format!("p{}.{}", index, field)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayStatus {
    Returned,
    Trapped(String),
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub trace: Vec<BranchEvent>,
    pub status: ReplayStatus,
    pub ret: Option<Value>,
    /// Heap after the call, for terminal-state checks.
    pub heap: HeapState,
    /// Whether the watched instruction executed.
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("no method `{0}` on the service object")]
    NoSuchMethod(String),
    #[error("bad parameter {index}: {detail}")]
    BadParam { index: usize, detail: String },
    #[error("bad overlay entry {0:?}: {1}")]
    BadOverlay(OverlayLocation, String),
    #[error("no value for symbolic input `{0}`")]
    Unassigned(String),
}

fn slot_type(program: &Program, heap: &HeapState, loc: &OverlayLocation) -> Result<Type, String> {
    match (loc, heap.objects.get(match loc {
        OverlayLocation::Field { obj, .. } => obj,
        OverlayLocation::Elem { arr, .. } => arr,
    })) {
        (OverlayLocation::Field { field, .. }, Some(HeapObj::Object { class, .. })) => {
            let layout = program.layout(class).ok_or("unknown class")?;
            let i = layout.index_of(field).ok_or("no such field")?;
            Ok(layout.fields[i].1.clone())
        }
        (OverlayLocation::Elem { index, .. }, Some(HeapObj::Array { elem, values })) => {
            if *index >= values.len() {
                return Err("index out of bounds".into());
            }
            Ok(elem.clone())
        }
        _ => Err("no such slot".into()),
    }
}

fn write_slot(heap: &mut HeapState, program: &Program, loc: &OverlayLocation, v: Value) {
    match loc {
        OverlayLocation::Field { obj, field } => {
            if let Some(HeapObj::Object { class, fields }) = heap.objects.get_mut(obj) {
                let i = program.field_index(class, field).unwrap();
                fields[i] = v;
            }
        }
        OverlayLocation::Elem { arr, index } => {
            if let Some(HeapObj::Array { values, .. }) = heap.objects.get_mut(arr) {
                values[*index] = v;
            }
        }
    }
}

/// Restore the snapshot heap, apply the overlay, then call the entrypoint
/// on the service object with the given parameters. Guest traps are part
/// of the outcome, not errors.
pub fn replay(
    program: &Program,
    index: &SnapshotIndex,
    request: &ReplayRequest,
    host: &mut dyn ExternHost,
) -> Result<ReplayOutcome, ReplayError> {
    replay_watching(program, index, request, None, host)
}

/// [`replay`], also reporting whether `watch` executed.
pub fn replay_watching(
    program: &Program,
    index: &SnapshotIndex,
    request: &ReplayRequest,
    watch: Option<Location>,
    host: &mut dyn ExternHost,
) -> Result<ReplayOutcome, ReplayError> {
    let heap = heap_from_snapshot(program, index)?;
    let root = index.find_root(&request.service)?;
    let header = index.header();
    let mut vm = Vm::new(
        program,
        heap,
        Mode::Replay {
            uid: header.skeleton_uid,
            package: header.skeleton_package,
            model: &request.model,
        },
        host,
    );
    vm.watch = watch;
    for e in &request.overlay {
        let t = slot_type(program, &vm.heap, &e.location)
            .map_err(|d| ReplayError::BadOverlay(e.location.clone(), d))?;
        let v = match (&t, &e.value) {
            (t, ModelValue::Null(false)) if t.is_reference() => continue,
            _ => vm
                .model_value(&t, &e.value)
                .map_err(|d| ReplayError::BadOverlay(e.location.clone(), d.to_string()))?,
        };
        write_slot(&mut vm.heap, program, &e.location, v);
    }
    let class = vm.heap.class_of(root).unwrap_or_default().to_string();
    let target = program
        .resolve_dispatch(&class, &request.entrypoint)
        .map_err(|_| ReplayError::NoSuchMethod(request.entrypoint.clone()))?;
    let def = program.method(target);
    if def.is_static || def.params.len() != request.params.len() {
        return Err(ReplayError::NoSuchMethod(format!(
            "{} with {} parameters",
            request.entrypoint,
            request.params.len()
        )));
    }
    let mut args = Vec::with_capacity(def.params.len() + 1);
    args.push(Value::Ref(root));
    for (i, ((_, t), mv)) in def.params.iter().zip(&request.params).enumerate() {
        let v = match (t, mv) {
            (Type::Ref(class), ModelValue::Null(false)) => {
                build_param(&mut vm, program, class, i, &request.model).map_err(|detail| ReplayError::BadParam {
                    index: i,
                    detail,
                })?
            }
            _ => vm.model_value(t, mv).map_err(|e| ReplayError::BadParam {
                index: i,
                detail: e.to_string(),
            })?,
        };
        args.push(v);
    }
    let r = vm.invoke_virtual(&class, &request.entrypoint, args);
    let (status, ret) = match r {
        Ok(v) => (ReplayStatus::Returned, v),
        Err(Trap::Unassigned(var)) => return Err(ReplayError::Unassigned(var)),
        Err(t) => (ReplayStatus::Trapped(t.to_string()), None),
    };
    Ok(ReplayOutcome {
        trace: vm.trace,
        status,
        ret,
        reached: vm.watch_hit,
        heap: vm.heap,
    })
}

/// Allocate a parameter object of `class`. Primitive and string fields take
/// their `p<i>.<field>` model values when present; the rest keep defaults.
fn build_param(
    vm: &mut Vm<'_>,
    program: &Program,
    class: &str,
    index: usize,
    model: &BTreeMap<String, ModelValue>,
) -> Result<Value, String> {
    let layout = program.layout(class).ok_or_else(|| format!("unknown class `{}`", class))?;
    vm.ensure_init(class).map_err(|t| t.to_string())?;
    let mut fields = Vec::with_capacity(layout.fields.len());
    for (name, ty, _) in &layout.fields {
        let v = match model.get(&param_field_var(index, name)) {
            Some(mv) => vm.model_value(ty, mv).map_err(|t| t.to_string())?,
            None => Value::default_for(ty),
        };
        fields.push(v);
    }
    Ok(Value::Ref(vm.heap.alloc(HeapObj::Object {
        class: class.into(),
        fields,
    })))
}
