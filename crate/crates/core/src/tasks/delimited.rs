use std::path::Path;

use super::generators::{Corpus, LabeledData};
use super::SourceFile;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads a delimited numeric file: one example per row, features first,
/// integer class label in the last column. Fields may be separated by commas,
/// semicolons, tabs or spaces. Blank lines and `#` comments are skipped, and
/// a non-numeric first row is treated as a header.
pub fn load_delimited(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = LabeledData::default();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if width.is_none() && data.is_empty() => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    message: e.to_string(),
                })
            }
        };
        if values.len() < 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                message: "need at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    message: format!("expected {w} fields, found {}", values.len()),
                })
            }
            _ => {}
        }
        let label = *values.last().unwrap();
        if label < 0.0 || label.fract() != 0.0 {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno + 1,
                message: format!("label {label} is not a class index"),
            });
        }
        data.inputs.push(Tensor::from_vec(values[..values.len() - 1].to_vec()));
        data.labels.push(label as usize);
    }
    let mut corpus = Corpus::new(data, None)?;
    corpus.sources = vec![SourceFile::hash(path)?];
    Ok(corpus)
}
