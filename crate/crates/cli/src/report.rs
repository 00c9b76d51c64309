//! The report document and its tabular export.

use std::collections::BTreeMap;

use greedy_lab::NormSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::LoadedSystem;
use crate::CliError;

pub const TOOL: &str = "greedylab";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum EntryStatus {
    Pass,
    Fail,
    NotCheckable,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub hash: String,
    pub origin: String,
    pub size: usize,
    pub ambient_dim: usize,
    pub norm: NormSpec,
}

/// Everything needed to replay a failing entry: the system file contents
/// and the witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducer {
    pub system: Value,
    pub witness: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub operation: String,
    pub inputs: Value,
    pub outputs: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<EntryStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproducer: Option<Reproducer>,
}

impl Entry {
    pub fn new(operation: &str, inputs: Value, outputs: Value) -> Self {
        Entry {
            operation: operation.to_string(),
            inputs,
            outputs,
            witness: None,
            status: None,
            reproducer: None,
        }
    }

    pub fn with_status(mut self, status: EntryStatus) -> Self {
        self.status = Some(status);
        self
    }

    pub fn with_witness(mut self, witness: Value) -> Self {
        self.witness = Some(witness);
        self
    }
}

/// Everything except `timings` is a deterministic function of the
/// invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub system: Option<SystemDescriptor>,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub entries: Vec<Entry>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(command: &str, system: Option<&LoadedSystem>) -> Self {
        Report {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            system: system.map(|s| SystemDescriptor {
                hash: s.hash(),
                origin: s.origin.clone(),
                size: s.system.size(),
                ambient_dim: s.system.ambient_dim(),
                norm: s.system.norm_spec().clone(),
            }),
            seed: None,
            generator: None,
            entries: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, entry: Entry) {
        self.entries.push(entry);
    }

    pub fn has_failures(&self) -> bool {
        self.entries.iter().any(|e| e.status == Some(EntryStatus::Fail))
    }

    /// Gives every failing entry a reproducer built from `system_file`
    /// and the entry's witness (its inputs when it has none).
    pub fn attach_reproducers(&mut self, system_file: &Value) {
        for e in &mut self.entries {
            if e.status == Some(EntryStatus::Fail) && e.reproducer.is_none() {
                e.reproducer = Some(Reproducer {
                    system: system_file.clone(),
                    witness: e.witness.clone().unwrap_or_else(|| e.inputs.clone()),
                });
            }
        }
    }

    pub fn to_structured(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_structured(text: &str) -> Result<Report, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("report: {e}")))
    }

    /// One row per scalar leaf of each entry's inputs, outputs and
    /// witness: `entry, operation, status, field, value`.
    pub fn to_tabular(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["entry", "operation", "status", "field", "value"])
            .expect("writing to memory");
        for (i, e) in self.entries.iter().enumerate() {
            let status = e
                .status
                .map(|s| serde_json::to_value(s).expect("status serializes"))
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let mut leaves = Vec::new();
            flatten("inputs", &e.inputs, &mut leaves);
            flatten("outputs", &e.outputs, &mut leaves);
            if let Some(wit) = &e.witness {
                flatten("witness", wit, &mut leaves);
            }
            for (field, value) in leaves {
                w.write_record([i.to_string(), e.operation.clone(), status.clone(), field, value])
                    .expect("writing to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is UTF-8")
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&format!("{prefix}.{k}"), x, out);
            }
        }
        Value::Array(items) if items.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let joined = items.iter().map(scalar).collect::<Vec<_>>().join(" ");
            out.push((prefix.to_string(), joined));
        }
        Value::Array(items) => {
            for (k, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{k}]"), x, out);
            }
        }
        _ => out.push((prefix.to_string(), scalar(v))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
