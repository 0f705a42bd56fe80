//! Line-delimited JSON dataset files (`.mmjl`).
//!
//! Line 1 is the manifest, every following line is one sample:
//!
//! ```text
//! {"version":1,"dims":{"text":3,"audio":2,"visual":2,"sentiment":1}}
//! {"id":"s0","label":1,"text":[[0.5,1.0,-2.0]],"audio":[[0.1,0.2]],"visual":[[1.0,1.0],[0.0,3.5]],"sentiment":[[4.0]]}
//! ```
//!
//! Sequences are arrays of timesteps, each an array of features. Reals are
//! written in shortest round-trip form, so a write/load cycle is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use super::{Dataset, Dims, Sample};
use crate::error::{Error, Result};
use crate::numeric::Tensor2;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsRecord {
    text: usize,
    audio: usize,
    visual: usize,
    sentiment: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    dims: DimsRecord,
}

struct Rows<'a>(&'a Tensor2);

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.rows()))?;
        for r in self.0.iter_rows() {
            seq.serialize_element(r)?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct SampleOut<'a> {
    id: &'a str,
    label: u8,
    text: Rows<'a>,
    audio: Rows<'a>,
    visual: Rows<'a>,
    sentiment: Rows<'a>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleIn {
    id: String,
    label: u8,
    text: Vec<Vec<f64>>,
    audio: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    sentiment: Vec<Vec<f64>>,
}

fn to_tensor(rows: Vec<Vec<f64>>, id: &str, name: &str) -> Result<Tensor2> {
    Tensor2::from_rows(&rows)
        .map_err(|e| Error::Validation(format!("sample `{id}`: {name}: {e}")))
}

pub fn write_dataset_to<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dims: DimsRecord {
            text: ds.dims.text,
            audio: ds.dims.audio,
            visual: ds.dims.visual,
            sentiment: ds.dims.sentiment,
        },
    };
    serde_json::to_writer(&mut w, &manifest).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for s in &ds.samples {
        let rec = SampleOut {
            id: &s.id,
            label: s.label,
            text: Rows(&s.text),
            audio: Rows(&s.audio),
            visual: Rows(&s.visual),
            sentiment: Rows(&s.sentiment),
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset_to(ds, BufWriter::new(file))
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing manifest".into(),
    })??;
    let manifest: Manifest = serde_json::from_str(&first).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad manifest: {e}"),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported format version {}", manifest.version),
        });
    }
    let dims = Dims {
        text: manifest.dims.text,
        audio: manifest.dims.audio,
        visual: manifest.dims.visual,
        sentiment: manifest.dims.sentiment,
    };
    let mut ds = Dataset::new(dims);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let rec: SampleIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sample = Sample {
            text: to_tensor(rec.text, &rec.id, "text")?,
            audio: to_tensor(rec.audio, &rec.id, "audio")?,
            visual: to_tensor(rec.visual, &rec.id, "visual")?,
            sentiment: to_tensor(rec.sentiment, &rec.id, "sentiment")?,
            id: rec.id,
            label: rec.label,
        };
        sample.validate(&dims)?;
        ds.samples.push(sample);
    }
    ds.validate()?;
    Ok(ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file))
}
