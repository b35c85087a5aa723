//! Model file: single-line JSON with a trailing CRC-32.
//!
//! The checksum covers every byte before `,"checksum":`. Reals are written
//! with 17 significant digits so a load reproduces them bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::ensemble::Ensemble;
use super::tree::ObliviousTree;
use crate::{Error, Result};

pub const FORMAT_VERSION: i64 = 1;
const CHECKSUM_KEY: &str = ",\"checksum\":\"";

fn real(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("write to string");
}

fn reals(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        real(out, x);
    }
    out.push(']');
}

pub fn model_to_string(e: &Ensemble) -> String {
    let mut s = String::new();
    write!(s, "{{\"format_version\":{FORMAT_VERSION},\"base_score\":").unwrap();
    real(&mut s, e.base_score);
    s.push_str(",\"learning_rate\":");
    real(&mut s, e.learning_rate);
    write!(s, ",\"feature_count\":{},\"trees\":[", e.feature_count).unwrap();
    for (i, t) in e.trees.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str("{\"levels\":[");
        for (l, &(f, thr)) in t.levels.iter().enumerate() {
            if l > 0 {
                s.push(',');
            }
            write!(s, "[{f},").unwrap();
            real(&mut s, thr);
            s.push(']');
        }
        s.push_str("],\"leaf_values\":");
        reals(&mut s, &t.leaf_values);
        s.push_str(",\"gains\":");
        reals(&mut s, &t.gains);
        s.push('}');
    }
    s.push(']');
    let crc = crc32fast::hash(s.as_bytes());
    write!(s, "{CHECKSUM_KEY}{crc:08x}\"}}").unwrap();
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[allow(dead_code)]
    format_version: i64,
    base_score: f64,
    learning_rate: f64,
    feature_count: usize,
    trees: Vec<TreeFile>,
    #[allow(dead_code)]
    checksum: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    levels: Vec<(usize, f64)>,
    leaf_values: Vec<f64>,
    #[serde(default)]
    gains: Option<Vec<f64>>,
}

fn scan_version(text: &str) -> Option<i64> {
    let at = text.find("\"format_version\":")? + "\"format_version\":".len();
    let rest = text[at..].trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '-'))
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

pub fn model_from_str(text: &str) -> Result<Ensemble> {
    let version = match scan_version(text) {
        Some(v) => v,
        None if text.trim().len() < 20 => return Err(Error::ModelTruncated),
        None => return Err(Error::ModelFormat("missing format_version".into())),
    };
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let body = text.trim_end();
    let at = body.rfind(CHECKSUM_KEY).ok_or(Error::ModelTruncated)?;
    if !body.ends_with("\"}") {
        return Err(Error::ModelTruncated);
    }
    let hex = &body[at + CHECKSUM_KEY.len()..body.len() - 2];
    let stored = u32::from_str_radix(hex, 16)
        .map_err(|_| Error::ModelFormat(format!("bad checksum field {hex:?}")))?;
    let computed = crc32fast::hash(&body.as_bytes()[..at]);
    if stored != computed {
        return Err(Error::ModelChecksum { stored, computed });
    }
    let file: ModelFile =
        serde_json::from_str(body).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut trees = Vec::with_capacity(file.trees.len());
    for (i, t) in file.trees.into_iter().enumerate() {
        let depth = t.levels.len();
        if depth == 0 || depth > super::tree::MAX_DEPTH || t.leaf_values.len() != 1 << depth {
            return Err(Error::ModelFormat(format!(
                "tree {i}: {} levels but {} leaves",
                depth,
                t.leaf_values.len()
            )));
        }
        if let Some(&(f, _)) = t.levels.iter().find(|(f, _)| *f >= file.feature_count) {
            return Err(Error::ModelFormat(format!(
                "tree {i}: feature {f} out of range"
            )));
        }
        let gains = t.gains.unwrap_or_else(|| vec![0.0; depth]);
        if gains.len() != depth {
            return Err(Error::ModelFormat(format!(
                "tree {i}: {} gains for {depth} levels",
                gains.len()
            )));
        }
        trees.push(ObliviousTree {
            levels: t.levels,
            leaf_values: t.leaf_values,
            gains,
        });
    }
    Ok(Ensemble {
        trees,
        learning_rate: file.learning_rate,
        base_score: file.base_score,
        feature_count: file.feature_count,
        training_meta: None,
    })
}

pub fn save_model(e: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(e)).map_err(|err| Error::io(path, err))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|err| Error::io(path, err))?;
    let text =
        String::from_utf8(bytes).map_err(|_| Error::ModelFormat("file is not UTF-8".into()))?;
    model_from_str(&text)
}
