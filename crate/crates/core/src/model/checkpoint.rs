//! Plain-text checkpoints.
//!
//! ```text
//! canamrf-checkpoint 1
//! model.dims.text = 768
//! ...
//! loss.gamma = 2.0
//! param frontend.audio.bias 1 8 0e0 1.25e-1 ...
//! ```
//!
//! A header line, the model config as `key = value` lines, then one line per
//! parameter: path, rows, cols and the row-major values in shortest
//! round-trip form. Writing a loaded checkpoint reproduces the file byte for
//! byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::config::{render, KeyValues};
use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Tensor2};

const HEADER: &str = "canamrf-checkpoint 1";

pub fn write_checkpoint<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&render(&model.config.to_pairs()));
    for (path, t) in model.params.iter() {
        write!(out, "param {path} {} {}", t.rows(), t.cols()).expect("string write");
        for v in t.data() {
            write!(out, " {v:e}").expect("string write");
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(file))
}

pub fn read_checkpoint(text: &str) -> Result<Model> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected `{HEADER}` header"),
        });
    }
    // Config lines are parsed in place so reported line numbers match the file.
    let mut config_text = String::from("\n");
    let mut params = ParamStore::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        match line.strip_prefix("param ") {
            None => {
                if !params.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "config line after parameters".into(),
                    });
                }
                config_text.push_str(line);
            }
            Some(rest) => {
                let (path, t) = parse_param(rest).map_err(|message| Error::Parse {
                    line: line_no,
                    message,
                })?;
                params.insert(path, t).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            }
        }
        config_text.push('\n');
    }
    let mut kv = KeyValues::parse(&config_text)?;
    let config = ModelConfig::take_from(&mut kv)?;
    kv.finish()?;
    Model::from_parts(config, params)
}

fn parse_param(rest: &str) -> std::result::Result<(String, Tensor2), String> {
    let mut tok = rest.split(' ');
    let path = tok.next().filter(|p| !p.is_empty()).ok_or("missing parameter path")?;
    let mut dim = |what: &str| -> std::result::Result<usize, String> {
        tok.next()
            .ok_or(format!("missing {what}"))?
            .parse()
            .map_err(|e| format!("bad {what}: {e}"))
    };
    let (rows, cols) = (dim("rows")?, dim("cols")?);
    let data = tok
        .map(|v| v.parse::<f64>().map_err(|e| format!("bad value `{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let t = Tensor2::new(rows, cols, data).map_err(|e| format!("`{path}`: {e}"))?;
    Ok((path.to_string(), t))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(&fs::read_to_string(path)?)
}
