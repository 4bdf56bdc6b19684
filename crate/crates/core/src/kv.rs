//! `key=value` configuration text: pairs separated by newlines, whitespace
//! or `;`; `#` starts a comment.

use std::str::FromStr;

use crate::error::{Error, Result};

/// Splits `text` into `(key, value)` pairs in order of appearance. Pairs are
/// separated by newlines, whitespace or `;`.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for item in line.split(|c: char| c == ';' || c.is_whitespace()) {
            if item.is_empty() {
                continue;
            }
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("expected key=value, got `{item}`")))?;
            if k.is_empty() {
                return Err(Error::Parameter(format!("empty key in `{item}`")));
            }
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

pub fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::Parameter(format!("`{key}`: cannot parse `{v}`: {e}")))
}

/// A comma-separated triple such as `96,96,96`.
pub fn triple<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; 3]>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parameter(format!(
            "`{key}` needs three comma-separated values, got `{v}`"
        )));
    }
    Ok([value(key, parts[0])?, value(key, parts[1])?, value(key, parts[2])?])
}

pub fn unknown(key: &str) -> Error {
    Error::Parameter(format!("unknown key `{key}`"))
}
