//! Multimodal samples, datasets, the `.mmjl` file format, a synthetic
//! generator and stratified splitting.

mod format;
mod split;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::Tensor2;

pub use format::{load_dataset, read_dataset, write_dataset, write_dataset_to, FORMAT_VERSION};
pub use split::stratified_split;
pub use synth::{generate, generate_sample, LengthRange, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Text,
    Audio,
    Visual,
    /// Word- and sentence-level structural sentiment features.
    Sentiment,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Text,
        Modality::Audio,
        Modality::Visual,
        Modality::Sentiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Visual => "visual",
            Modality::Sentiment => "sentiment",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown modality `{s}`")))
    }
}

/// Per-modality feature widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub text: usize,
    pub audio: usize,
    pub visual: usize,
    pub sentiment: usize,
}

impl Dims {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Text => self.text,
            Modality::Audio => self.audio,
            Modality::Visual => self.visual,
            Modality::Sentiment => self.sentiment,
        }
    }

    pub fn set(&mut self, m: Modality, v: usize) {
        match m {
            Modality::Text => self.text = v,
            Modality::Audio => self.audio = v,
            Modality::Visual => self.visual = v,
            Modality::Sentiment => self.sentiment = v,
        }
    }
}

impl Default for Dims {
    /// 768 text (BERT-sized), 128 audio, 136 visual, 8 sentiment.
    fn default() -> Self {
        Dims {
            text: 768,
            audio: 128,
            visual: 136,
            sentiment: 8,
        }
    }
}

/// One subject: a binary label and a `T x dim` feature sequence per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// 1 = depressed, 0 = control.
    pub label: u8,
    pub text: Tensor2,
    pub audio: Tensor2,
    pub visual: Tensor2,
    pub sentiment: Tensor2,
}

impl Sample {
    pub fn sequence(&self, m: Modality) -> &Tensor2 {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
            Modality::Sentiment => &self.sentiment,
        }
    }

    pub fn sequence_mut(&mut self, m: Modality) -> &mut Tensor2 {
        match m {
            Modality::Text => &mut self.text,
            Modality::Audio => &mut self.audio,
            Modality::Visual => &mut self.visual,
            Modality::Sentiment => &mut self.sentiment,
        }
    }

    /// Checks label range, non-empty sequences, and widths against `dims`.
    pub fn validate(&self, dims: &Dims) -> Result<()> {
        if self.label > 1 {
            return Err(Error::Validation(format!(
                "sample `{}`: label must be 0 or 1, got {}",
                self.id, self.label
            )));
        }
        for m in Modality::ALL {
            let seq = self.sequence(m);
            if seq.rows() == 0 {
                return Err(Error::Validation(format!(
                    "sample `{}`: missing {m} modality (empty sequence)",
                    self.id
                )));
            }
            if seq.cols() != dims.get(m) {
                return Err(Error::Validation(format!(
                    "sample `{}`: {m} has {} features, manifest says {}",
                    self.id,
                    seq.cols(),
                    dims.get(m)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dims: Dims,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(dims: Dims) -> Self {
        Dataset {
            dims,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }

    /// Checks every sample against the manifest and that ids are unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.samples {
            s.validate(&self.dims)?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> Sample {
        Sample {
            id: id.into(),
            label: 1,
            text: Tensor2::zeros(2, 3),
            audio: Tensor2::zeros(1, 2),
            visual: Tensor2::zeros(4, 2),
            sentiment: Tensor2::zeros(2, 1),
        }
    }

    fn dims() -> Dims {
        Dims {
            text: 3,
            audio: 2,
            visual: 2,
            sentiment: 1,
        }
    }

    #[test]
    fn validation_names_sample_and_modality() {
        let mut s = sample("subj-7");
        s.audio = Tensor2::zeros(0, 2);
        let msg = s.validate(&dims()).unwrap_err().to_string();
        assert!(msg.contains("subj-7") && msg.contains("audio"), "{msg}");

        let mut s = sample("subj-8");
        s.visual = Tensor2::zeros(3, 5);
        let msg = s.validate(&dims()).unwrap_err().to_string();
        assert!(msg.contains("subj-8") && msg.contains("visual"), "{msg}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let ds = Dataset {
            dims: dims(),
            samples: vec![sample("a"), sample("a")],
        };
        assert!(ds.validate().is_err());
    }
}
