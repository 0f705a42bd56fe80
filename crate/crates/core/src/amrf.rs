//! Adaptive multimodal recurrent fusion (AMRF).
//!
//! Two modality vectors are projected into a shared `d`-dimensional space,
//! each is turned into a circulant matrix whose rows are its cyclic rotations,
//! the rotations are mixed back with the vector, and the two mixed results are
//! blended with learned weights `alpha`, `beta` in `(0, 1)` before an output
//! projection to `k` columns.
//!
//! The text modality always takes the second (`y`) slot.
//!
//! ```
//! use canamrf::amrf::{self, AmrfParams, MixVariant};
//! use canamrf::numeric::Tensor2;
//!
//! let d = 2;
//! let p = AmrfParams {
//!     w1: Tensor2::identity(d),
//!     w2: Tensor2::identity(d),
//!     w3: Tensor2::identity(d),
//!     alpha_logit: Tensor2::scalar(0.0),
//!     beta_logit: Tensor2::scalar(0.0),
//! };
//! let x = Tensor2::row_vector(&[1.0, 3.0]);
//! let y = Tensor2::row_vector(&[2.0, 2.0]);
//! let z = amrf::amrf(&x, &y, &p, MixVariant::MatrixLiteral).unwrap();
//! // 0.5 * (2 * [[1,3],[3,1]]) + 0.5 * (2 * [[2,2],[2,2]])
//! assert_eq!(z, Tensor2::from_rows(&[[3.0, 5.0], [5.0, 3.0]]).unwrap());
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, NodeId, ParamStore, Tape, Tensor2};

/// How the rotations of the circulant matrix are combined with the vector.
///
/// All four produce the same downstream shape: the 1 x d variants are lifted
/// back to d x d through [`recur`](crate::numeric::recur) before fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MixVariant {
    /// `(1/d) * sum_i (a_i ⊙ A)` with row `a_i` broadcast over `A`; equals
    /// `mean(x) * recur(x)`, a d x d matrix.
    #[default]
    MatrixLiteral,
    /// `(1/d) * sum_i (a_i ⊙ x)`; equals `mean(x) * x`.
    ScalarElementwise,
    /// `x'_i = (a_i · x) / d`.
    CorrSelf,
    /// `x'_i = (a_i · other) / d`, rotations of one modality against the other.
    CorrCross,
}

impl MixVariant {
    pub const ALL: [MixVariant; 4] = [
        MixVariant::MatrixLiteral,
        MixVariant::ScalarElementwise,
        MixVariant::CorrSelf,
        MixVariant::CorrCross,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MixVariant::MatrixLiteral => "matrix_literal",
            MixVariant::ScalarElementwise => "scalar_elementwise",
            MixVariant::CorrSelf => "corr_self",
            MixVariant::CorrCross => "corr_cross",
        }
    }
}

impl fmt::Display for MixVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MixVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mix variant `{s}` (expected matrix_literal, scalar_elementwise, corr_self or corr_cross)"
                ))
            })
    }
}

/// Joins a parameter path prefix and a field name.
pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform Glorot initialisation for a `rows x cols` matrix.
pub(crate) fn glorot<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor2 {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor2::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

/// Learnables of one AMRF block.
///
/// `w1` is `d x m`, `w2` is `d x n`, `w3` is `d x k`; the fusion weights are
/// `alpha = sigmoid(alpha_logit)` and `beta = sigmoid(beta_logit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmrfParams<T = Tensor2> {
    pub w1: T,
    pub w2: T,
    pub w3: T,
    pub alpha_logit: T,
    pub beta_logit: T,
}

impl<T> AmrfParams<T> {
    pub fn build<U, E>(
        prefix: &str,
        leaf: &mut impl FnMut(String) -> Result<U, E>,
    ) -> Result<AmrfParams<U>, E> {
        Ok(AmrfParams {
            w1: leaf(join(prefix, "w1"))?,
            w2: leaf(join(prefix, "w2"))?,
            w3: leaf(join(prefix, "w3"))?,
            alpha_logit: leaf(join(prefix, "alpha_logit"))?,
            beta_logit: leaf(join(prefix, "beta_logit"))?,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        f(join(prefix, "w1"), &self.w1);
        f(join(prefix, "w2"), &self.w2);
        f(join(prefix, "w3"), &self.w3);
        f(join(prefix, "alpha_logit"), &self.alpha_logit);
        f(join(prefix, "beta_logit"), &self.beta_logit);
    }
}

impl AmrfParams<NodeId> {
    pub fn bind(tape: &mut Tape, store: &ParamStore, prefix: &str) -> Result<Self> {
        AmrfParams::<Tensor2>::build(prefix, &mut |p| tape.param(store, &p))
    }
}

impl AmrfParams<Tensor2> {
    /// Glorot-initialised projections and zero logits (`alpha = beta = 0.5`).
    pub fn init<R: Rng>(rng: &mut R, d: usize, m: usize, n: usize, k: usize) -> Result<Self> {
        let p = AmrfParams {
            w1: glorot(rng, d, m),
            w2: glorot(rng, d, n),
            w3: glorot(rng, d, k),
            alpha_logit: Tensor2::scalar(0.0),
            beta_logit: Tensor2::scalar(0.0),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(d: usize, m: usize, n: usize, k: usize) -> Self {
        AmrfParams {
            w1: Tensor2::zeros(d, m),
            w2: Tensor2::zeros(d, n),
            w3: Tensor2::zeros(d, k),
            alpha_logit: Tensor2::scalar(0.0),
            beta_logit: Tensor2::scalar(0.0),
        }
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        Self::build(prefix, &mut |p| store.get(&p).cloned())
    }

    pub fn insert_into(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        let mut res = Ok(());
        self.visit(prefix, &mut |path, t| {
            if res.is_ok() {
                res = store.insert(path, t.clone());
            }
        });
        res
    }

    pub fn common_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_logit.data()[0])
    }

    pub fn beta(&self) -> f64 {
        sigmoid(self.beta_logit.data()[0])
    }

    /// Checks shape consistency and `d <= min(m, n)`.
    pub fn validate(&self) -> Result<()> {
        let d = self.w1.rows();
        if d == 0 {
            return Err(Error::Config("AMRF common dimension must be >= 1".into()));
        }
        if self.w2.rows() != d {
            return Err(Error::dim("AMRF w2", self.w1.shape(), self.w2.shape()));
        }
        if self.w3.rows() != d {
            return Err(Error::dim("AMRF w3", self.w1.shape(), self.w3.shape()));
        }
        let (m, n) = (self.w1.cols(), self.w2.cols());
        if d > m.min(n) {
            return Err(Error::Config(format!(
                "AMRF common dimension {d} exceeds input dimensions {m} and {n}"
            )));
        }
        for (name, t) in [("alpha_logit", &self.alpha_logit), ("beta_logit", &self.beta_logit)] {
            if t.rows() != 1 || t.cols() != 1 {
                return Err(Error::Validation(format!("AMRF {name} must be 1x1, got {}", t.shape())));
            }
        }
        Ok(())
    }

    fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new();
        self.insert_into(&mut s, "")?;
        Ok(s)
    }
}

/// `X = x W1^T`, `Y = y W2^T` on the tape.
pub fn project_pair_on(
    tape: &mut Tape,
    x: NodeId,
    y: NodeId,
    p: &AmrfParams<NodeId>,
) -> Result<(NodeId, NodeId)> {
    let w1t = tape.transpose(p.w1);
    let xp = tape.matmul(x, w1t).map_err(|e| e.in_stage("projection w1"))?;
    let w2t = tape.transpose(p.w2);
    let yp = tape.matmul(y, w2t).map_err(|e| e.in_stage("projection w2"))?;
    Ok((xp, yp))
}

/// Mixes the rotations of `x` back into a single representation.
///
/// `other` is only read by [`MixVariant::CorrCross`].
pub fn mix_on(tape: &mut Tape, x: NodeId, other: NodeId, variant: MixVariant) -> Result<NodeId> {
    let d = tape.value(x).cols();
    let inv_d = 1.0 / d as f64;
    match variant {
        MixVariant::MatrixLiteral => {
            let a = tape.recur(x)?;
            let total = tape.sum(x);
            let mean = tape.scale(total, inv_d);
            tape.scale_by(a, mean)
        }
        MixVariant::ScalarElementwise => {
            if tape.value(x).rows() != 1 {
                return Err(Error::dim("mix", tape.value(x).shape(), tape.value(other).shape()));
            }
            let total = tape.sum(x);
            let mean = tape.scale(total, inv_d);
            tape.scale_by(x, mean)
        }
        MixVariant::CorrSelf => {
            let a = tape.recur(x)?;
            let at = tape.transpose(a);
            let dots = tape.matmul(x, at)?;
            Ok(tape.scale(dots, inv_d))
        }
        MixVariant::CorrCross => {
            if tape.value(other).shape() != tape.value(x).shape() {
                return Err(Error::dim("mix", tape.value(x).shape(), tape.value(other).shape()));
            }
            let a = tape.recur(x)?;
            let at = tape.transpose(a);
            let dots = tape.matmul(other, at)?;
            Ok(tape.scale(dots, inv_d))
        }
    }
}

/// `Z = (alpha * xp + beta * yp) W3`.
pub fn adaptive_fuse_on(
    tape: &mut Tape,
    xp: NodeId,
    yp: NodeId,
    p: &AmrfParams<NodeId>,
) -> Result<NodeId> {
    let alpha = tape.sigmoid(p.alpha_logit);
    let beta = tape.sigmoid(p.beta_logit);
    let ax = tape.scale_by(xp, alpha)?;
    let by = tape.scale_by(yp, beta)?;
    let mixed = tape.add(ax, by)?;
    tape.matmul(mixed, p.w3)
}

/// Full AMRF block: `x_other` is the non-text modality, `x_text` the text one.
pub fn amrf_on(
    tape: &mut Tape,
    x_other: NodeId,
    x_text: NodeId,
    p: &AmrfParams<NodeId>,
    variant: MixVariant,
) -> Result<NodeId> {
    let (xp, yp) = project_pair_on(tape, x_other, x_text, p)?;
    let mut xm = mix_on(tape, xp, yp, variant)?;
    let mut ym = mix_on(tape, yp, xp, variant)?;
    if variant != MixVariant::MatrixLiteral {
        xm = tape.recur(xm)?;
        ym = tape.recur(ym)?;
    }
    adaptive_fuse_on(tape, xm, ym, p)
}

fn with_params<F>(p: &AmrfParams, f: F) -> Result<Tensor2>
where
    F: FnOnce(&mut Tape, &AmrfParams<NodeId>) -> Result<NodeId>,
{
    let store = p.to_store()?;
    let mut tape = Tape::new();
    let nodes = AmrfParams::bind(&mut tape, &store, "")?;
    let out = f(&mut tape, &nodes)?;
    Ok(tape.value(out).clone())
}

pub fn project_pair(x: &Tensor2, y: &Tensor2, p: &AmrfParams) -> Result<(Tensor2, Tensor2)> {
    let store = p.to_store()?;
    let mut tape = Tape::new();
    let nodes = AmrfParams::bind(&mut tape, &store, "")?;
    let (xn, yn) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let (xp, yp) = project_pair_on(&mut tape, xn, yn, &nodes)?;
    Ok((tape.value(xp).clone(), tape.value(yp).clone()))
}

pub fn mix(x: &Tensor2, other: &Tensor2, variant: MixVariant) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let (xn, on) = (tape.constant(x.clone()), tape.constant(other.clone()));
    let out = mix_on(&mut tape, xn, on, variant)?;
    Ok(tape.value(out).clone())
}

pub fn adaptive_fuse(xp: &Tensor2, yp: &Tensor2, p: &AmrfParams) -> Result<Tensor2> {
    with_params(p, |tape, nodes| {
        let (a, b) = (tape.constant(xp.clone()), tape.constant(yp.clone()));
        adaptive_fuse_on(tape, a, b, nodes)
    })
}

pub fn amrf(x_other: &Tensor2, x_text: &Tensor2, p: &AmrfParams, variant: MixVariant) -> Result<Tensor2> {
    with_params(p, |tape, nodes| {
        let (a, b) = (tape.constant(x_other.clone()), tape.constant(x_text.clone()));
        amrf_on(tape, a, b, nodes, variant)
    })
}
