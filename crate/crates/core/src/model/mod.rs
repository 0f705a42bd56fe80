//! The end-to-end classifier.
//!
//! Each modality sequence goes through its own temporal convolution and mean
//! pool to a `1 x d` vector; the hybrid attention stack fuses the four vectors
//! into a `d x k` matrix, which is flattened and passed through a two-layer
//! head (sigmoid hidden layer, sigmoid output) to give `P(label = 1)`.
//! Training minimises the focal loss of that probability.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::amrf::{glorot, join, MixVariant};
use crate::attention::{hybrid_attention_on, HybridAttentionParams, ModalityNodes};
use crate::config::KeyValues;
use crate::data::{generate_sample, Dims, Modality, Sample, SynthSpec};
use crate::error::{Error, Result};
use crate::numeric::{grad_check, GradCheckReport, Gradients, NodeId, ParamStore, Tape, Tensor2, DEFAULT_EPS};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Raw per-timestep feature widths.
    pub dims: Dims,
    /// Temporal convolution window.
    pub window: usize,
    /// Common dimension shared by all modality vectors.
    pub d: usize,
    /// Column count of every fused matrix.
    pub k: usize,
    /// Width of the hidden classifier layer.
    pub hidden: usize,
    pub variant: MixVariant,
    /// Focal loss focusing parameter.
    pub gamma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: Dims::default(),
            window: 3,
            d: 8,
            k: 4,
            hidden: 16,
            variant: MixVariant::MatrixLiteral,
            gamma: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut fields = vec![
            ("model.window", self.window),
            ("model.d", self.d),
            ("model.k", self.k),
            ("model.hidden", self.hidden),
        ];
        for m in Modality::ALL {
            fields.push((dims_key(m), self.dims.get(m)));
        }
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!("loss.gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Reads the `model.*`, `amrf.*` and `loss.*` keys, leaving others.
    pub fn take_from(kv: &mut KeyValues) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for m in Modality::ALL {
            if let Some(v) = kv.take(dims_key(m))? {
                cfg.dims.set(m, v);
            }
        }
        kv.take_into("model.window", &mut cfg.window)?;
        kv.take_into("model.d", &mut cfg.d)?;
        kv.take_into("model.k", &mut cfg.k)?;
        kv.take_into("model.hidden", &mut cfg.hidden)?;
        kv.take_into("amrf.variant", &mut cfg.variant)?;
        kv.take_into("loss.gamma", &mut cfg.gamma)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The config as `(key, value)` pairs accepted by [`take_from`](Self::take_from).
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Modality::ALL
            .iter()
            .map(|m| (dims_key(*m).to_string(), self.dims.get(*m).to_string()))
            .collect();
        out.extend([
            ("model.window".into(), self.window.to_string()),
            ("model.d".into(), self.d.to_string()),
            ("model.k".into(), self.k.to_string()),
            ("model.hidden".into(), self.hidden.to_string()),
            ("amrf.variant".into(), self.variant.to_string()),
            ("loss.gamma".into(), format!("{:?}", self.gamma)),
        ]);
        out
    }

    /// Widths of the modality vectors after the frontends: all `d`.
    pub fn fused_input_dims(&self) -> Dims {
        Dims {
            text: self.d,
            audio: self.d,
            visual: self.d,
            sentiment: self.d,
        }
    }
}

fn dims_key(m: Modality) -> &'static str {
    match m {
        Modality::Text => "model.dims.text",
        Modality::Audio => "model.dims.audio",
        Modality::Visual => "model.dims.visual",
        Modality::Sentiment => "model.dims.sentiment",
    }
}

fn frontend_stage(m: Modality) -> &'static str {
    match m {
        Modality::Text => "text frontend",
        Modality::Audio => "audio frontend",
        Modality::Visual => "visual frontend",
        Modality::Sentiment => "sentiment frontend",
    }
}

/// Initial value of every frontend bias entry.
///
/// Every mix variant is even in its inputs (`mix(-x, -y) == mix(x, y)`), so
/// with zero biases a class signal that flips the sign of the frontend
/// output is invisible to the fusion stack until the biases drift away from
/// zero. Starting them at a nonzero offset turns the sign into a first-order
/// difference the network can use immediately.
pub const FRONTEND_BIAS_INIT: f64 = 1.0;

/// Temporal convolution weights for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendParams<T = Tensor2> {
    /// `(window * features) x d`
    pub kernel: T,
    /// `1 x d`
    pub bias: T,
}

/// Two fully connected layers, `(d*k) -> hidden -> 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T = Tensor2> {
    pub fc1_weight: T,
    pub fc1_bias: T,
    pub fc2_weight: T,
    pub fc2_bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor2> {
    /// Indexed by [`Modality::index`].
    pub frontends: [FrontendParams<T>; 4],
    pub hybrid: HybridAttentionParams<T>,
    pub head: HeadParams<T>,
}

impl<T> ModelParams<T> {
    pub fn build<U, E>(leaf: &mut impl FnMut(String) -> Result<U, E>) -> Result<ModelParams<U>, E> {
        let mut frontend = |m: Modality| -> Result<FrontendParams<U>, E> {
            let prefix = format!("frontend.{m}");
            Ok(FrontendParams {
                kernel: leaf(join(&prefix, "kernel"))?,
                bias: leaf(join(&prefix, "bias"))?,
            })
        };
        let frontends = [
            frontend(Modality::Text)?,
            frontend(Modality::Audio)?,
            frontend(Modality::Visual)?,
            frontend(Modality::Sentiment)?,
        ];
        let hybrid = HybridAttentionParams::<T>::build("hybrid", leaf)?;
        let head = HeadParams {
            fc1_weight: leaf("head.fc1.weight".into())?,
            fc1_bias: leaf("head.fc1.bias".into())?,
            fc2_weight: leaf("head.fc2.weight".into())?,
            fc2_bias: leaf("head.fc2.bias".into())?,
        };
        Ok(ModelParams {
            frontends,
            hybrid,
            head,
        })
    }

    pub fn visit(&self, f: &mut impl FnMut(String, &T)) {
        for m in Modality::ALL {
            let fe = &self.frontends[m.index()];
            f(format!("frontend.{m}.kernel"), &fe.kernel);
            f(format!("frontend.{m}.bias"), &fe.bias);
        }
        self.hybrid.visit("hybrid", f);
        f("head.fc1.weight".into(), &self.head.fc1_weight);
        f("head.fc1.bias".into(), &self.head.fc1_bias);
        f("head.fc2.weight".into(), &self.head.fc2_weight);
        f("head.fc2.bias".into(), &self.head.fc2_bias);
    }
}

impl ModelParams<NodeId> {
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> Result<Self> {
        ModelParams::<Tensor2>::build(&mut |p| tape.param(store, &p))
    }
}

impl ModelParams<Tensor2> {
    /// Glorot-initialised weights, `alpha = beta = 0.5`, zero biases except
    /// the frontends, which start at [`FRONTEND_BIAS_INIT`].
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, k, h) = (cfg.d, cfg.k, cfg.hidden);
        let frontends = Modality::ALL.map(|m| FrontendParams {
            kernel: glorot(&mut rng, cfg.window * cfg.dims.get(m), d),
            bias: Tensor2::filled(1, d, FRONTEND_BIAS_INIT),
        });
        let hybrid = HybridAttentionParams::init(&mut rng, cfg.fused_input_dims(), d, k)?;
        let head = HeadParams {
            fc1_weight: glorot(&mut rng, d * k, h),
            fc1_bias: Tensor2::zeros(1, h),
            fc2_weight: glorot(&mut rng, h, 1),
            fc2_bias: Tensor2::zeros(1, 1),
        };
        Ok(ModelParams {
            frontends,
            hybrid,
            head,
        })
    }

    /// All-zero parameters with the shapes `cfg` implies.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, k, h) = (cfg.d, cfg.k, cfg.hidden);
        ModelParams {
            frontends: Modality::ALL.map(|m| FrontendParams {
                kernel: Tensor2::zeros(cfg.window * cfg.dims.get(m), d),
                bias: Tensor2::zeros(1, d),
            }),
            hybrid: HybridAttentionParams::zeros(cfg.fused_input_dims(), d, k),
            head: HeadParams {
                fc1_weight: Tensor2::zeros(d * k, h),
                fc1_bias: Tensor2::zeros(1, h),
                fc2_weight: Tensor2::zeros(h, 1),
                fc2_bias: Tensor2::zeros(1, 1),
            },
        }
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        let mut res = Ok(());
        self.visit(&mut |path, t| {
            if res.is_ok() {
                res = store.insert(path, t.clone());
            }
        });
        res.map(|_| store)
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        Self::build(&mut |p| store.get(&p).cloned())
    }
}

/// Checks that `store` holds exactly the parameters `cfg` implies, with the
/// right shapes.
pub fn check_store(store: &ParamStore, cfg: &ModelConfig) -> Result<()> {
    let expected = ModelParams::zeros(cfg).to_store()?;
    for (path, t) in expected.iter() {
        let got = store
            .get(path)
            .map_err(|_| Error::Validation(format!("missing parameter `{path}`")))?;
        if got.shape() != t.shape() {
            return Err(Error::Validation(format!(
                "parameter `{path}` is {}, config implies {}",
                got.shape(),
                t.shape()
            )));
        }
    }
    if let Some(extra) = store.paths().find(|p| !expected.contains(p)) {
        return Err(Error::Validation(format!("unexpected parameter `{extra}`")));
    }
    Ok(())
}

/// Records the forward pass for one sample; returns the `1 x 1` probability
/// node.
pub fn forward_on(
    tape: &mut Tape,
    sample: &Sample,
    p: &ModelParams<NodeId>,
    cfg: &ModelConfig,
) -> Result<NodeId> {
    let mut vecs = [None; 4];
    for m in Modality::ALL {
        let seq = sample.sequence(m);
        if seq.rows() == 0 {
            return Err(Error::Validation(format!(
                "sample `{}`: missing {m} modality",
                sample.id
            )));
        }
        let fe = &p.frontends[m.index()];
        let seq = tape.constant(seq.clone());
        let v = tape
            .temporal_conv1d_meanpool(seq, fe.kernel, fe.bias)
            .map_err(|e| e.in_stage(frontend_stage(m)))?;
        vecs[m.index()] = Some(v);
    }
    let get = |m: Modality| vecs[m.index()].expect("all modalities set");
    let x = ModalityNodes {
        text: get(Modality::Text),
        audio: get(Modality::Audio),
        visual: get(Modality::Visual),
        sentiment: get(Modality::Sentiment),
    };
    let z = hybrid_attention_on(tape, x, &p.hybrid, cfg.variant)?;
    let flat = tape.flatten(z);
    let h = tape.matmul(flat, p.head.fc1_weight)?;
    let h = tape.add_row(h, p.head.fc1_bias)?;
    let h = tape.sigmoid(h);
    let logit = tape.matmul(h, p.head.fc2_weight)?;
    let logit = tape.add_row(logit, p.head.fc2_bias)?;
    Ok(tape.sigmoid(logit))
}

/// Focal loss node for one sample.
pub fn sample_loss_on(
    tape: &mut Tape,
    sample: &Sample,
    p: &ModelParams<NodeId>,
    cfg: &ModelConfig,
) -> Result<NodeId> {
    let prob = forward_on(tape, sample, p, cfg)?;
    tape.focal_loss(prob, sample.label, cfg.gamma)
}

/// Predicted probability of label 1.
pub fn forward(sample: &Sample, store: &ParamStore, cfg: &ModelConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let p = ModelParams::bind(&mut tape, store)?;
    let out = forward_on(&mut tape, sample, &p, cfg)?;
    tape.value(out).item()
}

/// Loss and gradients of one sample.
pub fn sample_loss_and_grads(
    sample: &Sample,
    store: &ParamStore,
    cfg: &ModelConfig,
) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let p = ModelParams::bind(&mut tape, store)?;
    let loss = sample_loss_on(&mut tape, sample, &p, cfg)?;
    Ok((tape.value(loss).item()?, tape.backward(loss)?))
}

/// Mean focal loss over `batch`; the batch-mean gradient is written into the
/// store's gradient slots.
///
/// Per-sample contributions are reduced in sample-id order, so the result is
/// bitwise independent of the order of `batch`.
pub fn loss_and_grads(batch: &[&Sample], store: &mut ParamStore, cfg: &ModelConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss_and_grads"));
    }
    let mut order: Vec<&Sample> = batch.to_vec();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut total_loss = 0.0;
    let mut total = Gradients::new();
    for s in order {
        let (loss, grads) = sample_loss_and_grads(s, store, cfg)?;
        total_loss += loss;
        for (path, g) in grads {
            match total.get_mut(&path) {
                Some(acc) => acc.add_assign(&g)?,
                None => {
                    total.insert(path, g);
                }
            }
        }
    }
    let n = batch.len() as f64;
    for g in total.values_mut() {
        for v in g.data_mut() {
            *v /= n;
        }
    }
    store.set_grads(&total)?;
    Ok(total_loss / n)
}

/// Central-difference check of every parameter gradient of the focal loss
/// on one synthetic sample; the model and the sample are both drawn from
/// `seed`.
pub fn grad_check_model(cfg: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let spec = SynthSpec {
        n_samples: 1,
        dims: cfg.dims,
        seed,
        ..SynthSpec::default()
    };
    let sample = generate_sample(&spec, 0)?;
    let mut store = Model::new(cfg.clone(), seed)?.params;
    grad_check(&mut store, DEFAULT_EPS, |tape, s| {
        let p = ModelParams::bind(tape, s)?;
        sample_loss_on(tape, &sample, &p, cfg)
    })
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?.to_store()?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        check_store(&params, &config)?;
        Ok(Model { config, params })
    }

    pub fn predict(&self, sample: &Sample) -> Result<f64> {
        forward(sample, &self.params, &self.config)
    }

    /// `(alpha, beta)` of each AMRF block, by block name.
    pub fn fusion_weights(&self) -> Result<Vec<(&'static str, f64, f64)>> {
        let hybrid = HybridAttentionParams::from_store(&self.params, "hybrid")?;
        Ok(hybrid
            .amrf_blocks()
            .iter()
            .map(|(name, p)| (*name, p.alpha(), p.beta()))
            .collect())
    }
}
