use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::Metrics;
use super::optim::{AdamConfig, Optimizer, OptimizerKind};
use crate::config::KeyValues;
use crate::data::{stratified_split, Dataset, Sample};
use crate::error::{Error, Result};
use crate::loss::focal_loss;
use crate::model::{self, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// `p >= threshold` predicts the positive class.
    pub threshold: f64,
    /// Share of the training data held out for early stopping by [`train`].
    /// Zero validates on the training data itself.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam: AdamConfig::default(),
            patience: 20,
            seed: 0,
            threshold: 0.5,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("train.epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("train.lr must be >= 0, got {}", self.lr));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("train.threshold must be in (0, 1), got {}", self.threshold));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("train.val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps > 0".into());
        }
        Ok(())
    }

    /// Reads the `train.*` and `adam.*` keys.
    pub fn take_from(kv: &mut KeyValues) -> Result<Self> {
        let mut c = TrainConfig::default();
        kv.take_into("train.epochs", &mut c.epochs)?;
        kv.take_into("train.batch_size", &mut c.batch_size)?;
        kv.take_into("train.lr", &mut c.lr)?;
        kv.take_into("train.optimizer", &mut c.optimizer)?;
        kv.take_into("train.patience", &mut c.patience)?;
        kv.take_into("train.seed", &mut c.seed)?;
        kv.take_into("train.threshold", &mut c.threshold)?;
        kv.take_into("train.val_fraction", &mut c.val_fraction)?;
        kv.take_into("adam.beta1", &mut c.adam.beta1)?;
        kv.take_into("adam.beta2", &mut c.adam.beta2)?;
        kv.take_into("adam.eps", &mut c.adam.eps)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("train.epochs".into(), self.epochs.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.lr".into(), format!("{:?}", self.lr)),
            ("train.optimizer".into(), self.optimizer.to_string()),
            ("train.patience".into(), self.patience.to_string()),
            ("train.seed".into(), self.seed.to_string()),
            ("train.threshold".into(), format!("{:?}", self.threshold)),
            ("train.val_fraction".into(), format!("{:?}", self.val_fraction)),
            ("adam.beta1".into(), format!("{:?}", self.adam.beta1)),
            ("adam.beta2".into(), format!("{:?}", self.adam.beta2)),
            ("adam.eps".into(), format!("{:?}", self.adam.eps)),
        ]
    }
}

/// One epoch of training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the mini-batch losses.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: Metrics,
}

/// `epoch=3 train_loss=... val_loss=... val_p=... val_r=... val_f1=...`;
/// reals are printed in full precision.
impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_loss={:?} val_loss={:?} val_p={:?} val_r={:?} val_f1={:?}",
            self.epoch, self.train_loss, self.val_loss, self.val.precision, self.val.recall, self.val.f1
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// One record per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

/// Predicted probabilities, in dataset order.
pub fn predict_all(model: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    ds.samples.iter().map(|s| model.predict(s)).collect()
}

/// Confusion counts and P/R/F1 of `model` on `ds` at `threshold`.
pub fn evaluate(model: &Model, ds: &Dataset, threshold: f64) -> Result<Metrics> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("evaluate"));
    }
    let probs = predict_all(model, ds)?;
    let labels: Vec<u8> = ds.samples.iter().map(|s| s.label).collect();
    Ok(Metrics::from_probabilities(&probs, &labels, threshold))
}

fn val_record(model: &Model, val: &Dataset, threshold: f64) -> Result<(f64, Metrics)> {
    let probs = predict_all(model, val)?;
    let mut loss = 0.0;
    for (p, s) in probs.iter().zip(&val.samples) {
        loss += focal_loss(*p, s.label, model.config.gamma)?;
    }
    let labels: Vec<u8> = val.samples.iter().map(|s| s.label).collect();
    Ok((
        loss / val.len() as f64,
        Metrics::from_probabilities(&probs, &labels, threshold),
    ))
}

/// Holds out `cfg.val_fraction` of `ds` (stratified, seeded) for early
/// stopping and trains on the rest; see [`train_with_validation`].
pub fn train(model: &Model, ds: &Dataset, cfg: &TrainConfig) -> Result<(Model, History)> {
    cfg.validate()?;
    if cfg.val_fraction == 0.0 {
        return train_with_validation(model, ds, ds, cfg);
    }
    let (fit, val) = stratified_split(ds, 1.0 - cfg.val_fraction, cfg.seed)?;
    train_with_validation(model, &fit, &val, cfg)
}

/// Mini-batch descent on the mean focal loss.
///
/// Batches come from a per-epoch shuffle seeded by `cfg.seed`. After each
/// epoch the model is scored on `val`; training stops once `cfg.patience`
/// epochs pass without improvement, and the parameters of the best epoch
/// are returned. An epoch improves on the best so far if its validation F1
/// is higher, or equal with a lower validation loss.
pub fn train_with_validation(
    model: &Model,
    train_ds: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, History)> {
    cfg.validate()?;
    let (neg, pos) = train_ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Validation("training data needs both classes".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    model::check_store(&model.params, &model.config)?;

    let mut current = model.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.lr, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, f64, Model)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_ds.samples[i]).collect();
            let diverged = || Error::Divergence { epoch, batch: b };
            let loss = model::loss_and_grads(&batch, &mut current.params, &current.config)
                .map_err(|e| if e.is_numerical() { diverged() } else { e })?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            optimizer.step(&mut current.params)?;
            loss_sum += loss;
            n_batches += 1;
        }
        let (val_loss, metrics) = val_record(&current, val, cfg.threshold)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
            val: metrics,
        });
        let improved = match &best {
            None => true,
            Some((f1, l, _)) => metrics.f1 > *f1 || (metrics.f1 == *f1 && val_loss < *l),
        };
        if improved {
            best = Some((metrics.f1, val_loss, current.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, _, mut best_model) = best.expect("at least one epoch ran");
    best_model.params.zero_grad();
    Ok((best_model, history))
}
