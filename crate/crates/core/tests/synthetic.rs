//! End-to-end checks on generated data.

use canamrf::data::{generate, stratified_split, Dataset, Dims, LengthRange, Modality, SynthSpec};
use canamrf::model::{Model, ModelConfig};
use canamrf::train::{train_with_validation, Metrics, TrainConfig};

fn pooled(ds: &Dataset, m: Modality) -> Vec<Vec<f64>> {
    ds.samples
        .iter()
        .map(|s| {
            let seq = s.sequence(m);
            seq.col_sums().data().iter().map(|v| v / seq.rows() as f64).collect()
        })
        .collect()
}

/// Per modality: project the pooled features on the difference of class
/// means estimated from `train` and threshold at the midpoint. Modalities
/// vote by summing their signed margins.
fn mean_threshold_oracle(train: &Dataset, test: &Dataset) -> Metrics {
    let mut score = vec![0.0; test.len()];
    for m in Modality::ALL {
        let tr = pooled(train, m);
        let dim = tr[0].len();
        let mut mu = [vec![0.0; dim], vec![0.0; dim]];
        let mut n = [0.0, 0.0];
        for (x, s) in tr.iter().zip(&train.samples) {
            let c = s.label as usize;
            n[c] += 1.0;
            for (a, b) in mu[c].iter_mut().zip(x) {
                *a += b;
            }
        }
        for c in 0..2 {
            mu[c].iter_mut().for_each(|a| *a /= n[c]);
        }
        let w: Vec<f64> = mu[1].iter().zip(&mu[0]).map(|(a, b)| a - b).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mid: Vec<f64> = mu[1].iter().zip(&mu[0]).map(|(a, b)| (a + b) / 2.0).collect();
        for (i, x) in pooled(test, m).iter().enumerate() {
            let proj: f64 = x.iter().zip(&mid).zip(&w).map(|((x, c), w)| (x - c) * w).sum();
            score[i] += proj / norm;
        }
    }
    Metrics::from_labels(score.iter().zip(&test.samples).map(|(s, x)| (*s >= 0.0, x.label == 1)))
}

#[test]
fn separable_data_is_separable_by_an_oracle() {
    let spec = SynthSpec {
        n_samples: 300,
        separation: 8.0,
        seed: 42,
        ..SynthSpec::default()
    };
    let ds = generate(&spec).unwrap();
    let (train, test) = stratified_split(&ds, 2.0 / 3.0, 42).unwrap();
    let m = mean_threshold_oracle(&train, &test);
    assert!(m.f1 > 0.95, "{m:?}");
}

#[test]
fn no_signal_data_defeats_the_oracle() {
    let spec = SynthSpec {
        n_samples: 300,
        separation: 0.0,
        seed: 42,
        ..SynthSpec::default()
    };
    let ds = generate(&spec).unwrap();
    let (train, test) = stratified_split(&ds, 2.0 / 3.0, 42).unwrap();
    let m = mean_threshold_oracle(&train, &test);
    assert!(m.accuracy() < 0.65, "{m:?}");
}

#[test]
fn overfit_loss_trends_down() {
    let dims = Dims {
        text: 12,
        audio: 8,
        visual: 8,
        sentiment: 8,
    };
    let spec = SynthSpec {
        n_samples: 16,
        dims,
        lengths: [LengthRange { min: 3, max: 6 }; 4],
        seed: 3,
        ..SynthSpec::default()
    };
    let ds = generate(&spec).unwrap();
    let model = Model::new(ModelConfig { dims, ..ModelConfig::default() }, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        patience: 60,
        seed: 3,
        ..TrainConfig::default()
    };
    let (_, h) = train_with_validation(&model, &ds, &ds, &cfg).unwrap();
    let losses: Vec<f64> = h.epochs.iter().map(|r| r.train_loss).collect();
    let smooth: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for pair in smooth.windows(2) {
        assert!(pair[1] <= pair[0], "{smooth:?}");
    }
}
