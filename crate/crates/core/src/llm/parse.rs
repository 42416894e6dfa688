use serde_json::Value;

use crate::error::{Error, Result};

fn fenced_blocks(text: &str) -> impl Iterator<Item = &str> {
    text.split("```").skip(1).step_by(2).map(|block| {
        // Drop an info string such as `json` on the opening fence line.
        match block.find('\n') {
            Some(nl) if !block[..nl].trim_start().starts_with(['{', '[']) => &block[nl + 1..],
            _ => block,
        }
    })
}

fn first_value_at(text: &str, open: char) -> Option<Value> {
    text.char_indices()
        .filter(|&(_, c)| c == open)
        .find_map(|(i, _)| {
            serde_json::Deserializer::from_str(&text[i..])
                .into_iter::<Value>()
                .next()
                .and_then(|r| r.ok())
        })
}

/// First JSON object in `text`: the whole text, then fenced blocks, then the
/// first `{` from which a complete object parses.
pub fn extract_json_object(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    for block in fenced_blocks(text) {
        if let Some(v) = first_value_at(block, '{') {
            return Some(v);
        }
    }
    first_value_at(text, '{')
}

/// Decodes `{"judged_cluster": int, "rewritten": string}`. A judged cluster
/// of -1 means the model declined to judge.
pub fn parse_refine_response(text: &str) -> Result<(i64, String)> {
    let obj = extract_json_object(text)
        .ok_or_else(|| Error::ResponseParse("no JSON object in refine response".into()))?;
    let judged = obj
        .get("judged_cluster")
        .and_then(Value::as_i64)
        .filter(|&j| j >= -1)
        .ok_or_else(|| Error::ResponseParse("judged_cluster must be an integer >= -1".into()))?;
    let rewritten = obj
        .get("rewritten")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::ResponseParse("rewritten must be a non-empty string".into()))?;
    Ok((judged, rewritten.to_string()))
}

/// Decodes an intent-index to cluster-index object into a vector indexed by
/// intent. Only structure and ranges are checked here.
pub fn parse_map_response(text: &str, m: usize, k: usize) -> Result<Vec<usize>> {
    let obj = extract_json_object(text)
        .ok_or_else(|| Error::ResponseParse("no JSON object in mapping response".into()))?;
    let obj = obj.as_object().expect("extract_json_object returns objects");
    let mut out = vec![None; m];
    for (key, value) in obj {
        let j: usize = key
            .trim()
            .parse()
            .map_err(|_| Error::ResponseParse(format!("intent key {key:?} is not an index")))?;
        if j >= m {
            return Err(Error::ResponseParse(format!("intent index {j} out of range")));
        }
        let c = value
            .as_u64()
            .map(|c| c as usize)
            .filter(|&c| c < k)
            .ok_or_else(|| Error::ResponseParse(format!("cluster for intent {j} must be an index below {k}")))?;
        out[j] = Some(c);
    }
    out.into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| Error::ResponseParse(format!("intent {j} is not mapped"))))
        .collect()
}

/// One-line summary: a `{"summary": ...}` object if present, otherwise the
/// first non-empty line with fences and wrapping quotes removed.
pub fn parse_summary_response(text: &str) -> Result<String> {
    if let Some(s) = extract_json_object(text)
        .as_ref()
        .and_then(|v| v.get("summary"))
        .and_then(Value::as_str)
    {
        let s = s.trim();
        if !s.is_empty() {
            return Ok(s.to_string());
        }
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("```"))
        .map(|l| l.trim_matches('"').trim())
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or_else(|| Error::ResponseParse("empty summary".into()))
}
