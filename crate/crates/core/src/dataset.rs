//! JSONL dataset reading and writing.
//!
//! One record per line: `{"text": "...", "label": "..."}`. `label` is optional,
//! unknown fields are ignored. An explicit `id` field may be present; it is
//! checked for uniqueness but utterance ids are always the dense file order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::Utterance;

#[derive(Deserialize)]
struct Record {
    text: Option<Value>,
    #[serde(default)]
    label: Option<Value>,
    #[serde(default)]
    id: Option<Value>,
}

pub fn load_dataset(path: &Path) -> Result<Vec<Utterance>> {
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file), path)
}

pub fn parse_dataset(reader: impl BufRead, path: &Path) -> Result<Vec<Utterance>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| err(lineno, e.to_string()))?;
        let text = match record.text {
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => return Err(err(lineno, "\"text\" must be a string".into())),
            None => return Err(err(lineno, "missing \"text\" field".into())),
        };
        if text.is_empty() {
            return Err(err(lineno, "\"text\" is empty".into()));
        }
        let label = match record.label {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(_) => return Err(err(lineno, "\"label\" must be a string".into())),
        };
        if let Some(id) = record.id {
            let key = id.to_string();
            if !seen_ids.insert(key.clone()) {
                return Err(Error::Validation(format!(
                    "{}: line {lineno}: duplicate id {key}",
                    path.display()
                )));
            }
        }
        out.push(Utterance {
            id: out.len(),
            text,
            label,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for u in utterances {
        let mut obj = serde_json::Map::new();
        obj.insert("text".into(), Value::String(u.text.clone()));
        if let Some(label) = &u.label {
            obj.insert("label".into(), Value::String(label.clone()));
        }
        serde_json::to_writer(&mut w, &obj)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
