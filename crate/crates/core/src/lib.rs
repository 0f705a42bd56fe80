//! CANAMRF: a multimodal binary classifier built on adaptive multimodal
//! recurrent fusion (AMRF) and a hybrid cross-modal attention stack.
//!
//! Everything runs on a small dense-matrix core with tape-based reverse-mode
//! differentiation ([`numeric`]). On top of it sit the fusion block
//! ([`amrf`]), the attention stack ([`attention`]), the end-to-end model and
//! checkpoints ([`model`]), the focal loss ([`loss`]), datasets and a
//! synthetic generator ([`data`]), and the training loop ([`train`]).
//!
//! ```
//! use canamrf::data::{generate, Dims, LengthRange, SynthSpec};
//! use canamrf::model::{Model, ModelConfig};
//!
//! let dims = Dims { text: 6, audio: 4, visual: 4, sentiment: 8 };
//! let spec = SynthSpec {
//!     n_samples: 4,
//!     dims,
//!     lengths: [LengthRange { min: 2, max: 3 }; 4],
//!     ..SynthSpec::default()
//! };
//! let ds = generate(&spec)?;
//! let model = Model::new(ModelConfig { dims, ..ModelConfig::default() }, 7)?;
//! let p = model.predict(&ds.samples[0])?;
//! assert!(p > 0.0 && p < 1.0);
//! # Ok::<(), canamrf::Error>(())
//! ```

pub mod amrf;
pub mod attention;
pub mod config;
pub mod data;
mod error;
pub mod loss;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result, Shape};
