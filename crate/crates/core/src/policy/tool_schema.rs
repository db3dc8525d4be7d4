use serde_json::{json, Map, Value};

use crate::memory::{CaseRecord, MemoryOp, Rule};

pub const MEMORY_TOOL_NAME: &str = "memory";

const MEMORY_TOOL_DESCRIPTION: &str = "Dual memory for diagnostic experience: a bounded short-term \
store of recent case records and a long-term store of distilled diagnostic rules.";

/// Function-tool schema advertised to remote models.
pub fn remote_tool_schema() -> Value {
    json!({
        "type": "function",
        "function": {
            "name": MEMORY_TOOL_NAME,
            "description": MEMORY_TOOL_DESCRIPTION,
            "parameters": {
                "type": "object",
                "properties": {
                    "action": {
                        "type": "string",
                        "enum": ["list", "append", "pop", "consolidate"],
                        "description": "Operation to run. \
`list` returns current short-term cases and long-term rules. \
`append` adds a case record to short-term memory. \
`pop` evicts cases at given indices from short-term memory. \
`consolidate` adds distilled diagnostic rules to long-term memory."
                    },
                    "case_record": {
                        "type": "object",
                        "description": "Case record to append (used with `append`). \
Should contain keys like case_summary, diagnosis, feedback, reasoning.",
                        "properties": {
                            "case_summary": {
                                "type": "string",
                                "description": "Brief summary of the patient case."
                            },
                            "diagnosis": {
                                "type": "string",
                                "description": "The diagnosis that was made."
                            },
                            "feedback": {
                                "type": "string",
                                "description": "Whether the diagnosis was correct or incorrect, and the ground truth."
                            }
                        }
                    },
                    "indices": {
                        "type": "array",
                        "items": {"type": "integer"},
                        "description": "Indices of short-term cases to evict (used with `pop`)."
                    },
                    "rules": {
                        "type": "array",
                        "items": {"type": "string"},
                        "description": "Diagnostic rules to add to long-term memory (used with `consolidate`). \
Each rule should be a concise, reusable statement (e.g. symptom-disease associations)."
                    }
                },
                "required": ["action"]
            }
        }
    })
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("case_record.{key} must be a string")),
        None => Err(format!("case_record.{key} is required")),
    }
}

/// Converts tool-call arguments into a [`MemoryOp`].
///
/// Arguments irrelevant to the chosen action are ignored. The case record may
/// carry an optional `reasoning` string.
pub fn parse_tool_arguments(args: &Value) -> Result<MemoryOp, String> {
    let obj = args.as_object().ok_or("arguments must be a JSON object")?;
    let action = obj
        .get("action")
        .and_then(Value::as_str)
        .ok_or("`action` is required and must be a string")?;
    match action {
        "list" => Ok(MemoryOp::List),
        "append" => {
            let rec = obj
                .get("case_record")
                .and_then(Value::as_object)
                .ok_or("`append` requires a case_record object")?;
            let rationale = match rec.get("reasoning") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(_) => return Err("case_record.reasoning must be a string".into()),
            };
            Ok(MemoryOp::Append {
                case_record: CaseRecord {
                    case_summary: string_field(rec, "case_summary")?,
                    diagnosis: string_field(rec, "diagnosis")?,
                    feedback: string_field(rec, "feedback")?,
                    rationale,
                },
            })
        }
        "pop" => {
            let raw = obj
                .get("indices")
                .and_then(Value::as_array)
                .ok_or("`pop` requires an indices array")?;
            let indices = raw
                .iter()
                .map(|v| {
                    v.as_u64()
                        .and_then(|i| usize::try_from(i).ok())
                        .ok_or_else(|| format!("index {v} is not a non-negative integer"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MemoryOp::Pop { indices })
        }
        "consolidate" => {
            let raw = obj
                .get("rules")
                .and_then(Value::as_array)
                .ok_or("`consolidate` requires a rules array")?;
            if raw.is_empty() {
                return Err("`consolidate` requires at least one rule".into());
            }
            let rules = raw
                .iter()
                .map(|v| {
                    let s = v.as_str().ok_or("rules must be strings")?;
                    Rule::new(s).map_err(|e| e.to_string())
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(MemoryOp::Consolidate { rules })
        }
        other => Err(format!("unknown action {other:?}")),
    }
}
