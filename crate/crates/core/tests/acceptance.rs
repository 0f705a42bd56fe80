//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs under `cargo test` as its own target.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use canamrf::amrf::{mix, MixVariant};
use canamrf::attention::{attention_weights, cross_modal_attention};
use canamrf::data::{generate, read_dataset, stratified_split, write_dataset_to, Dataset, SynthSpec};
use canamrf::loss::{binary_cross_entropy, focal_loss};
use canamrf::model::{grad_check_model, read_checkpoint, write_checkpoint, Model, ModelConfig};
use canamrf::numeric::{recur, Tensor2};
use canamrf::train::{evaluate, f1_score, train, train_with_validation, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Tensor2 {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    Tensor2::row_vector(&v)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
}

fn gradient_fidelity() -> Outcome {
    let mut parts = Vec::new();
    for variant in MixVariant::ALL {
        let cfg = ModelConfig {
            d: 8,
            k: 4,
            variant,
            ..ModelConfig::default()
        };
        let start = Instant::now();
        let report = ok(grad_check_model(&cfg, 7))?;
        let took = start.elapsed();
        ensure(report.max_rel_error < 1e-4, || {
            format!(
                "{variant}: max_rel_error {:e} at {}[{}]",
                report.max_rel_error, report.worst_path, report.worst_index
            )
        })?;
        ensure(took < Duration::from_secs(30), || format!("{variant}: took {}", secs(took)))?;
        parts.push(format!("{variant} {:.1e} in {}", report.max_rel_error, secs(took)));
    }
    Ok(parts.join(", "))
}

fn circulant_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 16;
        let x = random_row(&mut rng, d);
        let other = random_row(&mut rng, d);
        let v = x.data();
        let a = |i: usize, j: usize| v[(i + j) % d];

        let r = ok(recur(&x))?;
        for i in 0..d {
            for j in 0..d {
                ensure(r.get(i, j).to_bits() == a(i, j).to_bits(), || {
                    format!("recur d={d} entry ({i},{j})")
                })?;
            }
        }

        let m = ok(mix(&x, &other, MixVariant::MatrixLiteral))?;
        for rr in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    s += a(i, c) * a(rr, c);
                }
                worst = worst.max((m.get(rr, c) - s / d as f64).abs());
            }
        }
        let e = ok(mix(&x, &other, MixVariant::ScalarElementwise))?;
        for (c, &vc) in v.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..d {
                s += a(i, c) * vc;
            }
            worst = worst.max((e.get(0, c) - s / d as f64).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 vectors, d in 1..=16, max deviation {worst:.1e}"))
}

fn attention_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut stoch, mut hull, mut shift): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let (n, m, k) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=8));
        let q = random_matrix(&mut rng, n, k);
        let kk = random_matrix(&mut rng, m, k);
        let v = random_matrix(&mut rng, m, k);

        let w = ok(attention_weights(&q, &kk))?;
        for row in w.iter_rows() {
            ensure(row.iter().all(|&p| p >= 0.0), || "negative weight".into())?;
            stoch = stoch.max((row.iter().sum::<f64>() - 1.0).abs());
        }

        let out = ok(cross_modal_attention(&q, &kk, &v))?;
        for c in 0..k {
            let col: Vec<f64> = (0..m).map(|r| v.get(r, c)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..n {
                let o = out.get(r, c);
                hull = hull.max(lo - o).max(o - hi);
            }
        }

        // adding a fixed row to every key shifts each score row by a constant
        let offset = random_row(&mut rng, k);
        let shifted = ok(kk.add_row(&offset))?;
        let w2 = ok(attention_weights(&q, &shifted))?;
        shift = shift.max(w.max_abs_diff(&w2));
    }
    ensure(stoch <= 1e-12, || format!("row sum off by {stoch:e}"))?;
    ensure(hull <= 1e-12, || format!("output outside value envelope by {hull:e}"))?;
    ensure(shift <= 1e-12, || format!("shift changed weights by {shift:e}"))?;
    Ok(format!(
        "1000 instances, row-sum {stoch:.1e}, envelope {:.1e}, shift {shift:.1e}",
        hull.max(0.0)
    ))
}

fn focal_limits() -> Outcome {
    let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    let mut worst: f64 = 0.0;
    for &p in &grid {
        for label in [0u8, 1] {
            let f = ok(focal_loss(p, label, 0.0))?;
            let b = ok(binary_cross_entropy(p, label))?;
            worst = worst.max((f - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("gamma=0 differs from BCE by {worst:e}"))?;
    for gamma in [0.0, 0.5, 1.0, 2.0, 5.0] {
        for pair in grid.windows(2) {
            let (a, b) = (ok(focal_loss(pair[0], 1, gamma))?, ok(focal_loss(pair[1], 1, gamma))?);
            ensure(b < a, || format!("gamma={gamma}: not decreasing at {}", pair[1]))?;
        }
    }
    // 50-digit evaluation of -(0.1)^2 ln(0.9)
    let oracle = 1.053_605_156_578_263e-3;
    let got = ok(focal_loss(0.9, 1, 2.0))?;
    ensure((got - oracle).abs() <= 1e-7, || format!("got {got:e}"))?;
    Ok(format!("BCE deviation {worst:.1e}, strictly decreasing, L(0.9; gamma=2) = {got:.6e}"))
}

fn small_spec(n: usize, seed: u64) -> (SynthSpec, ModelConfig) {
    let dims = canamrf::data::Dims {
        text: 16,
        audio: 12,
        visual: 12,
        sentiment: 8,
    };
    let spec = SynthSpec {
        n_samples: n,
        dims,
        seed,
        ..SynthSpec::default()
    };
    (spec, ModelConfig { dims, ..ModelConfig::default() })
}

fn fusion_weights() -> Outcome {
    let (spec, cfg) = small_spec(60, 5);
    let ds = ok(generate(&spec))?;
    let model = ok(Model::new(cfg, 5))?;
    let tc = TrainConfig {
        epochs: 200,
        patience: 200,
        val_fraction: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    let (trained, history) = ok(train(&model, &ds, &tc))?;
    ensure(history.epochs.len() == 200, || format!("ran {} epochs", history.epochs.len()))?;
    let weights = ok(trained.fusion_weights())?;
    let (mut lo, mut hi) = (1.0f64, 0.0f64);
    for (name, a, b) in &weights {
        ensure(*a > 0.0 && *a < 1.0 && *b > 0.0 && *b < 1.0, || {
            format!("{name}: alpha={a} beta={b}")
        })?;
        lo = lo.min(a.min(*b));
        hi = hi.max(a.max(*b));
    }
    Ok(format!("{} blocks, all weights in [{lo:.4}, {hi:.4}]", weights.len()))
}

fn learnability() -> Outcome {
    let run = |separation: f64, seed: u64| -> Result<(f64, Duration), String> {
        let spec = SynthSpec {
            n_samples: 300,
            positive_rate: 0.5,
            separation,
            correlation: 0.5,
            seed,
            ..SynthSpec::default()
        };
        let ds = ok(generate(&spec))?;
        let (fit, test) = ok(stratified_split(&ds, 2.0 / 3.0, seed))?;
        let start = Instant::now();
        let model = ok(Model::new(ModelConfig::default(), seed))?;
        let tc = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let (trained, _) = ok(train(&model, &fit, &tc))?;
        let took = start.elapsed();
        Ok((ok(evaluate(&trained, &test, tc.threshold))?.f1, took))
    };
    let (f1, took) = run(8.0, 42)?;
    ensure(f1 >= 0.95, || format!("s=8 test F1 {f1:.4}"))?;
    ensure(took < Duration::from_secs(60), || format!("s=8 training took {}", secs(took)))?;
    let mut control = Vec::new();
    for seed in 0..5 {
        let (f, _) = run(0.0, seed)?;
        ensure((0.3..=0.7).contains(&f), || format!("s=0 seed {seed}: F1 {f:.4}"))?;
        control.push(format!("{f:.2}"));
    }
    Ok(format!(
        "s=8 test F1 {f1:.4} in {}; s=0 F1 [{}]",
        secs(took),
        control.join(", ")
    ))
}

fn overfit() -> Outcome {
    let spec = SynthSpec {
        n_samples: 16,
        seed: 16,
        ..SynthSpec::default()
    };
    let ds = ok(generate(&spec))?;
    let model = ok(Model::new(ModelConfig::default(), 16))?;
    let tc = TrainConfig {
        epochs: 200,
        seed: 16,
        ..TrainConfig::default()
    };
    let (trained, history) = ok(train_with_validation(&model, &ds, &ds, &tc))?;
    let acc = ok(evaluate(&trained, &ds, tc.threshold))?.accuracy();
    ensure(acc == 1.0, || format!("train accuracy {acc}"))?;
    Ok(format!(
        "train accuracy 1.0 (best epoch {} of {})",
        history.best_epoch,
        history.epochs.len()
    ))
}

fn metric_arithmetic() -> Outcome {
    let a = format!("{:.2}", f1_score(0.71, 0.83));
    let b = format!("{:.2}", f1_score(0.94, 0.97));
    ensure(a == "0.77" && b == "0.95", || format!("got {a} and {b}"))?;
    Ok(format!("F1(0.71,0.83)={a}, F1(0.94,0.97)={b}"))
}

fn dataset_bytes(ds: &Dataset) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    ok(write_dataset_to(ds, &mut buf))?;
    Ok(buf)
}

fn determinism() -> Outcome {
    let (spec, cfg) = small_spec(40, 9);
    let ds = ok(generate(&spec))?;
    let tc = TrainConfig {
        epochs: 15,
        seed: 9,
        ..TrainConfig::default()
    };
    let model = ok(Model::new(cfg.clone(), 9))?;
    let (m1, h1) = ok(train(&model, &ds, &tc))?;
    let (m2, h2) = ok(train(&ok(Model::new(cfg, 9))?, &ds, &tc))?;
    ensure(h1.render() == h2.render() && h1 == h2, || "histories differ".into())?;
    ensure(m1 == m2, || "trained parameters differ".into())?;

    let first = dataset_bytes(&ds)?;
    ensure(first == dataset_bytes(&ok(generate(&spec))?)?, || "regenerated dataset differs".into())?;
    let reloaded = ok(read_dataset(&first[..]))?;
    ensure(reloaded == ds, || "dataset round-trip lost data".into())?;
    ensure(dataset_bytes(&reloaded)? == first, || "dataset rewrite differs".into())?;

    let mut ck = Vec::new();
    ok(write_checkpoint(&m1, &mut ck))?;
    let back = ok(read_checkpoint(&String::from_utf8_lossy(&ck)))?;
    ensure(back == m1, || "checkpoint round-trip lost data".into())?;
    let mut ck2 = Vec::new();
    ok(write_checkpoint(&back, &mut ck2))?;
    ensure(ck == ck2, || "checkpoint rewrite differs".into())?;
    Ok(format!(
        "{} history lines identical, dataset {} bytes and checkpoint {} bytes rewrite identically",
        h1.epochs.len(),
        first.len(),
        ck.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("circulant oracle", circulant_oracle),
        ("attention algebra", attention_algebra),
        ("focal-loss limits", focal_limits),
        ("fusion-weight constraint", fusion_weights),
        ("end-to-end learnability", learnability),
        ("overfit harness", overfit),
        ("metric arithmetic", metric_arithmetic),
        ("determinism and persistence", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
