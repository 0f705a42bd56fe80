//! Plain SGD and Adam, applied per parameter path.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd or adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor2,
    pub v: Tensor2,
    /// Number of updates applied so far.
    pub t: u32,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: Tensor2::zeros(rows, cols),
            v: Tensor2::zeros(rows, cols),
            t: 0,
        }
    }
}

/// `param -= lr * grad`
pub fn step_sgd(param: &mut Tensor2, grad: &Tensor2, lr: f64) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::dim("sgd step", param.shape(), grad.shape()));
    }
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn step_adam(
    param: &mut Tensor2,
    grad: &Tensor2,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::dim("adam step", param.shape(), grad.shape()));
    }
    if state.m.shape() != grad.shape() {
        return Err(Error::dim("adam state", state.m.shape(), grad.shape()));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = grad.data()[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Applies the gradients held in a [`ParamStore`] to its values.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamConfig,
    state: BTreeMap<String, AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, adam: AdamConfig) -> Self {
        Optimizer {
            kind,
            lr,
            adam,
            state: BTreeMap::new(),
        }
    }

    pub fn state(&self, path: &str) -> Option<&AdamState> {
        self.state.get(path)
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let mut res = Ok(());
        let (kind, lr, adam) = (self.kind, self.lr, self.adam);
        let state = &mut self.state;
        store.for_each_mut(|path, value, grad| {
            if res.is_err() {
                return;
            }
            res = match kind {
                OptimizerKind::Sgd => step_sgd(value, grad, lr),
                OptimizerKind::Adam => {
                    let s = state
                        .entry(path.to_string())
                        .or_insert_with(|| AdamState::new(value.rows(), value.cols()));
                    step_adam(value, grad, s, lr, &adam)
                }
            };
        });
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = Tensor2::row_vector(&[1.0, -2.0]);
        let before = p.clone();
        let mut s = AdamState::new(1, 2);
        step_adam(&mut p, &Tensor2::zeros(1, 2), &mut s, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);

        let mut s = AdamState::new(1, 1);
        s.m = Tensor2::scalar(1.0);
        s.v = Tensor2::scalar(1.0);
        let mut q = Tensor2::scalar(0.0);
        step_adam(&mut q, &Tensor2::zeros(1, 1), &mut s, 0.0, &AdamConfig::default()).unwrap();
        assert_eq!(s.m.item().unwrap(), 0.9);
        assert_eq!(s.v.item().unwrap(), 0.999);
        assert_eq!(q.item().unwrap(), 0.0);
    }

    #[test]
    fn two_scalar_steps_match_oracle() {
        // p0 = 1, lr = 0.1, grads 0.5 then -0.25, default betas.
        let mut p = Tensor2::scalar(1.0);
        let mut s = AdamState::new(1, 1);
        let cfg = AdamConfig::default();
        step_adam(&mut p, &Tensor2::scalar(0.5), &mut s, 0.1, &cfg).unwrap();
        step_adam(&mut p, &Tensor2::scalar(-0.25), &mut s, 0.1, &cfg).unwrap();
        // 50-digit evaluation of the same two steps
        let want = 0.873_366_298_707_846_2_f64;
        assert!((p.item().unwrap() - want).abs() < 1e-12, "{}", p.item().unwrap());
        assert_eq!(s.t, 2);
    }

    #[test]
    fn sgd_step_is_linear_in_gradient() {
        let g = Tensor2::row_vector(&[0.3, -1.7, 2.5]);
        let mut a = Tensor2::zeros(1, 3);
        let mut b = Tensor2::zeros(1, 3);
        step_sgd(&mut a, &g, 0.5).unwrap();
        step_sgd(&mut b, &g.scale(4.0), 0.5).unwrap();
        assert_eq!(b, a.scale(4.0));
    }

    #[test]
    fn optimizer_keeps_state_per_path() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor2::scalar(1.0)).unwrap();
        store.insert("b", Tensor2::zeros(2, 2)).unwrap();
        let mut g = crate::numeric::Gradients::new();
        g.insert("a".into(), Tensor2::scalar(1.0));
        store.set_grads(&g).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, AdamConfig::default());
        opt.step(&mut store).unwrap();
        opt.step(&mut store).unwrap();
        assert_eq!(opt.state("a").unwrap().t, 2);
        assert_eq!(opt.state("b").unwrap().m.shape(), Tensor2::zeros(2, 2).shape());
        assert_eq!(store.get("b").unwrap(), &Tensor2::zeros(2, 2));
        assert!(store.get("a").unwrap().item().unwrap() < 1.0);
    }

    #[test]
    fn kind_parses() {
        assert_eq!("sgd".parse::<OptimizerKind>().unwrap(), OptimizerKind::Sgd);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
