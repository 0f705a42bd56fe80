//! Synthetic multimodal data with a tunable class signal.
//!
//! Each modality gets a fixed random unit direction `u`. A timestep vector is
//! `±(s/2) u + noise` with unit-variance Gaussian noise, the sign given by the
//! label, so `s` is the distance between class means in noise standard
//! deviations. Along `u` the noise is split into a per-sample latent factor
//! shared by all modalities (weight `ρ`) and a private part (weight `1 - ρ`),
//! keeping the variance at one. Modalities listed in `noise_modalities` carry
//! no class signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Dims, Modality, Sample};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::numeric::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    /// Probability of label 1, in `(0, 1)`.
    pub positive_rate: f64,
    pub dims: Dims,
    /// Sequence length range per modality, indexed by [`Modality::index`].
    pub lengths: [LengthRange; 4],
    /// Class-mean distance in units of the within-class standard deviation.
    pub separation: f64,
    /// Weight of the latent factor shared across modalities, in `[0, 1]`.
    pub correlation: f64,
    pub noise_modalities: Vec<Modality>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_samples: 300,
            positive_rate: 0.5,
            dims: Dims::default(),
            lengths: [LengthRange { min: 4, max: 12 }; 4],
            separation: 8.0,
            correlation: 0.5,
            noise_modalities: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!("positive_rate must be in (0, 1), got {}", self.positive_rate));
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return bad(format!("separation must be >= 0, got {}", self.separation));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation must be in [0, 1], got {}", self.correlation));
        }
        for m in Modality::ALL {
            if self.dims.get(m) == 0 {
                return bad(format!("{m} dimension must be >= 1"));
            }
            let r = self.lengths[m.index()];
            if r.min == 0 || r.min > r.max {
                return bad(format!("{m} length range {}..={} is invalid", r.min, r.max));
            }
        }
        Ok(())
    }

    /// Reads the `synth.*` keys. `synth.length.min` / `synth.length.max` set
    /// every modality; `synth.length.<modality>.min` / `.max` override one.
    /// `synth.noise_modalities` is a comma-separated list, possibly empty.
    pub fn take_from(kv: &mut KeyValues) -> Result<Self> {
        let mut s = SynthSpec::default();
        kv.take_into("synth.n_samples", &mut s.n_samples)?;
        kv.take_into("synth.positive_rate", &mut s.positive_rate)?;
        kv.take_into("synth.separation", &mut s.separation)?;
        kv.take_into("synth.correlation", &mut s.correlation)?;
        kv.take_into("synth.seed", &mut s.seed)?;
        if let Some(min) = kv.take::<usize>("synth.length.min")? {
            s.lengths.iter_mut().for_each(|r| r.min = min);
        }
        if let Some(max) = kv.take::<usize>("synth.length.max")? {
            s.lengths.iter_mut().for_each(|r| r.max = max);
        }
        for m in Modality::ALL {
            if let Some(d) = kv.take(&format!("synth.dims.{m}"))? {
                s.dims.set(m, d);
            }
            let r = &mut s.lengths[m.index()];
            kv.take_into(&format!("synth.length.{m}.min"), &mut r.min)?;
            kv.take_into(&format!("synth.length.{m}.max"), &mut r.max)?;
        }
        if let Some(list) = kv.take::<String>("synth.noise_modalities")? {
            s.noise_modalities = list
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Every field as `(key, value)` pairs accepted by
    /// [`take_from`](Self::take_from).
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("synth.n_samples".to_string(), self.n_samples.to_string()),
            ("synth.positive_rate".into(), format!("{:?}", self.positive_rate)),
            ("synth.separation".into(), format!("{:?}", self.separation)),
            ("synth.correlation".into(), format!("{:?}", self.correlation)),
            ("synth.seed".into(), self.seed.to_string()),
        ];
        for m in Modality::ALL {
            let r = self.lengths[m.index()];
            out.push((format!("synth.dims.{m}"), self.dims.get(m).to_string()));
            out.push((format!("synth.length.{m}.min"), r.min.to_string()));
            out.push((format!("synth.length.{m}.max"), r.max.to_string()));
        }
        let noise: Vec<&str> = self.noise_modalities.iter().map(|m| m.as_str()).collect();
        out.push(("synth.noise_modalities".into(), noise.join(",")));
        out
    }
}

fn unit_direction(seed: u64, m: Modality, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + m.index() as u64);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn directions(spec: &SynthSpec) -> [Vec<f64>; 4] {
    Modality::ALL.map(|m| unit_direction(spec.seed, m, spec.dims.get(m)))
}

/// Generates sample `index` alone; [`generate`] is this over `0..n_samples`.
pub fn generate_sample(spec: &SynthSpec, index: usize) -> Result<Sample> {
    spec.validate()?;
    Ok(sample_with(spec, &directions(spec), index))
}

fn sample_with(spec: &SynthSpec, dirs: &[Vec<f64>; 4], index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ index as u64);
    let label = u8::from(rng.random_bool(spec.positive_rate));
    let latent: f64 = rng.sample(StandardNormal);
    let sign = if label == 1 { 1.0 } else { -1.0 };
    let shared = spec.correlation.sqrt();
    let private = (1.0 - spec.correlation).sqrt();

    let mut seqs = Modality::ALL.map(|m| {
        let dim = spec.dims.get(m);
        let u = &dirs[m.index()];
        let range = spec.lengths[m.index()];
        let len = rng.random_range(range.min..=range.max);
        let pure_noise = spec.noise_modalities.contains(&m);
        let mean = if pure_noise { 0.0 } else { sign * spec.separation / 2.0 };
        let mut data = Vec::with_capacity(len * dim);
        for _ in 0..len {
            let mut eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if !pure_noise {
                let along: f64 = eps.iter().zip(u).map(|(e, w)| e * w).sum();
                let mixed = shared * latent + private * along;
                for (e, w) in eps.iter_mut().zip(u) {
                    *e += (mixed - along + mean) * w;
                }
            }
            data.extend(eps);
        }
        Some(Tensor2::new(len, dim, data).expect("sized above"))
    });
    let mut take = |m: Modality| seqs[m.index()].take().expect("each modality taken once");
    Sample {
        id: format!("s{index:05}"),
        label,
        text: take(Modality::Text),
        audio: take(Modality::Audio),
        visual: take(Modality::Visual),
        sentiment: take(Modality::Sentiment),
    }
}

/// Draws a dataset; a pure function of `spec` (including its seed).
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let dirs = directions(spec);
    Ok(Dataset {
        dims: spec.dims,
        samples: (0..spec.n_samples).map(|i| sample_with(spec, &dirs, i)).collect(),
    })
}
