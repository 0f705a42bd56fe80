//! Cross-modal attention, self-attention, and the hybrid attention stack
//! that turns four modality vectors into one fused `d x k` representation.
//!
//! The hybrid stack:
//!
//! 1. `Q    = AMRF(sentiment, text)`
//! 2. `X_VT = AMRF(visual, text)`, `X_AT = AMRF(audio, text)`
//! 3. `Z_ATS = CMA(Q, X_AT, X_AT)`, `Z_VTS = CMA(Q, X_VT, X_VT)`
//! 4. `Z_f = SelfAttention(AMRF(flatten(Z_ATS), flatten(Z_VTS)))`
//!
//! where `CMA(Q, K, V) = softmax(Q K^T / sqrt(k)) V`. The last AMRF block sees
//! the two attention outputs flattened to `1 x (d*k)` rows and projects them
//! back down to `d`; `Z_VTS` takes the text-side (beta-weighted) slot.

use rand::Rng;

use crate::amrf::{self, glorot, join, AmrfParams, MixVariant};
use crate::data::Dims;
use crate::error::{Error, Result};
use crate::numeric::{NodeId, ParamStore, Tape, Tensor2};

/// Stage labels attached to errors raised inside [`hybrid_attention_on`].
pub mod stage {
    pub const QUERY_FUSION: &str = "query fusion (sentiment, text)";
    pub const VISUAL_FUSION: &str = "key/value fusion (visual, text)";
    pub const AUDIO_FUSION: &str = "key/value fusion (audio, text)";
    pub const AUDIO_ATTENTION: &str = "cross-modal attention (audio)";
    pub const VISUAL_ATTENTION: &str = "cross-modal attention (visual)";
    pub const FINAL_FUSION: &str = "final fusion and self-attention";
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionParams<T = Tensor2> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
}

impl<T> SelfAttentionParams<T> {
    pub fn build<U, E>(
        prefix: &str,
        leaf: &mut impl FnMut(String) -> Result<U, E>,
    ) -> Result<SelfAttentionParams<U>, E> {
        Ok(SelfAttentionParams {
            wq: leaf(join(prefix, "wq"))?,
            wk: leaf(join(prefix, "wk"))?,
            wv: leaf(join(prefix, "wv"))?,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        f(join(prefix, "wq"), &self.wq);
        f(join(prefix, "wk"), &self.wk);
        f(join(prefix, "wv"), &self.wv);
    }
}

impl SelfAttentionParams<Tensor2> {
    pub fn init<R: Rng>(rng: &mut R, k: usize) -> Self {
        SelfAttentionParams {
            wq: glorot(rng, k, k),
            wk: glorot(rng, k, k),
            wv: glorot(rng, k, k),
        }
    }

    pub fn zeros(k: usize) -> Self {
        SelfAttentionParams {
            wq: Tensor2::zeros(k, k),
            wk: Tensor2::zeros(k, k),
            wv: Tensor2::zeros(k, k),
        }
    }
}

/// Parameters of the full hybrid stack.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridAttentionParams<T = Tensor2> {
    /// Sentiment with text; produces the query.
    pub amrf_st: AmrfParams<T>,
    pub amrf_vt: AmrfParams<T>,
    pub amrf_at: AmrfParams<T>,
    /// Fuses the two cross-modal attention outputs.
    pub amrf_final: AmrfParams<T>,
    pub self_attn: SelfAttentionParams<T>,
}

impl<T> HybridAttentionParams<T> {
    pub fn build<U, E>(
        prefix: &str,
        leaf: &mut impl FnMut(String) -> Result<U, E>,
    ) -> Result<HybridAttentionParams<U>, E> {
        Ok(HybridAttentionParams {
            amrf_st: AmrfParams::<T>::build(&join(prefix, "amrf_st"), leaf)?,
            amrf_vt: AmrfParams::<T>::build(&join(prefix, "amrf_vt"), leaf)?,
            amrf_at: AmrfParams::<T>::build(&join(prefix, "amrf_at"), leaf)?,
            amrf_final: AmrfParams::<T>::build(&join(prefix, "amrf_final"), leaf)?,
            self_attn: SelfAttentionParams::<T>::build(&join(prefix, "self_attn"), leaf)?,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(String, &T)) {
        self.amrf_st.visit(&join(prefix, "amrf_st"), f);
        self.amrf_vt.visit(&join(prefix, "amrf_vt"), f);
        self.amrf_at.visit(&join(prefix, "amrf_at"), f);
        self.amrf_final.visit(&join(prefix, "amrf_final"), f);
        self.self_attn.visit(&join(prefix, "self_attn"), f);
    }
}

impl HybridAttentionParams<NodeId> {
    pub fn bind(tape: &mut Tape, store: &ParamStore, prefix: &str) -> Result<Self> {
        HybridAttentionParams::<Tensor2>::build(prefix, &mut |p| tape.param(store, &p))
    }
}

impl HybridAttentionParams<Tensor2> {
    pub fn init<R: Rng>(rng: &mut R, dims: Dims, d: usize, k: usize) -> Result<Self> {
        Ok(HybridAttentionParams {
            amrf_st: AmrfParams::init(rng, d, dims.sentiment, dims.text, k)?,
            amrf_vt: AmrfParams::init(rng, d, dims.visual, dims.text, k)?,
            amrf_at: AmrfParams::init(rng, d, dims.audio, dims.text, k)?,
            amrf_final: AmrfParams::init(rng, d, d * k, d * k, k)?,
            self_attn: SelfAttentionParams::init(rng, k),
        })
    }

    pub fn zeros(dims: Dims, d: usize, k: usize) -> Self {
        HybridAttentionParams {
            amrf_st: AmrfParams::zeros(d, dims.sentiment, dims.text, k),
            amrf_vt: AmrfParams::zeros(d, dims.visual, dims.text, k),
            amrf_at: AmrfParams::zeros(d, dims.audio, dims.text, k),
            amrf_final: AmrfParams::zeros(d, d * k, d * k, k),
            self_attn: SelfAttentionParams::zeros(k),
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

    /// The four AMRF blocks with their path names.
    pub fn amrf_blocks(&self) -> [(&'static str, &AmrfParams); 4] {
        [
            ("amrf_st", &self.amrf_st),
            ("amrf_vt", &self.amrf_vt),
            ("amrf_at", &self.amrf_at),
            ("amrf_final", &self.amrf_final),
        ]
    }
}

/// Row-stochastic attention weights `softmax(q k^T / sqrt(k_cols))`.
pub fn attention_weights_on(tape: &mut Tape, q: NodeId, k: NodeId) -> Result<NodeId> {
    let (qs, ks) = (tape.value(q).shape(), tape.value(k).shape());
    if qs.1 != ks.1 {
        return Err(Error::dim("attention", qs, ks));
    }
    let kt = tape.transpose(k);
    let logits = tape.matmul(q, kt)?;
    let scaled = tape.scale(logits, 1.0 / (ks.1 as f64).sqrt());
    Ok(tape.softmax_rows(scaled))
}

/// `softmax(Q K^T / sqrt(k)) V` with `k` the column count of `Q` and `K`.
pub fn cross_modal_attention_on(tape: &mut Tape, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
    let (ks, vs) = (tape.value(k).shape(), tape.value(v).shape());
    if ks.0 != vs.0 {
        return Err(Error::dim("attention values", ks, vs));
    }
    let w = attention_weights_on(tape, q, k)?;
    tape.matmul(w, v)
}

/// Single-head scaled dot-product attention with learned square projections.
pub fn self_attention_on(tape: &mut Tape, x: NodeId, p: &SelfAttentionParams<NodeId>) -> Result<NodeId> {
    let q = tape.matmul(x, p.wq)?;
    let k = tape.matmul(x, p.wk)?;
    let v = tape.matmul(x, p.wv)?;
    cross_modal_attention_on(tape, q, k, v)
}

/// Modality vectors (each `1 x dim`) entering the hybrid stack.
#[derive(Debug, Clone, Copy)]
pub struct ModalityNodes {
    pub text: NodeId,
    pub audio: NodeId,
    pub visual: NodeId,
    pub sentiment: NodeId,
}

/// Runs the hybrid stack and returns `Z_f` (`d x k`).
pub fn hybrid_attention_on(
    tape: &mut Tape,
    x: ModalityNodes,
    p: &HybridAttentionParams<NodeId>,
    variant: MixVariant,
) -> Result<NodeId> {
    let q = amrf::amrf_on(tape, x.sentiment, x.text, &p.amrf_st, variant)
        .map_err(|e| e.in_stage(stage::QUERY_FUSION))?;
    let x_vt = amrf::amrf_on(tape, x.visual, x.text, &p.amrf_vt, variant)
        .map_err(|e| e.in_stage(stage::VISUAL_FUSION))?;
    let x_at = amrf::amrf_on(tape, x.audio, x.text, &p.amrf_at, variant)
        .map_err(|e| e.in_stage(stage::AUDIO_FUSION))?;
    let z_ats = cross_modal_attention_on(tape, q, x_at, x_at)
        .map_err(|e| e.in_stage(stage::AUDIO_ATTENTION))?;
    let z_vts = cross_modal_attention_on(tape, q, x_vt, x_vt)
        .map_err(|e| e.in_stage(stage::VISUAL_ATTENTION))?;
    let final_stage = |tape: &mut Tape| -> Result<NodeId> {
        let a = tape.flatten(z_ats);
        let v = tape.flatten(z_vts);
        let fused = amrf::amrf_on(tape, a, v, &p.amrf_final, variant)?;
        self_attention_on(tape, fused, &p.self_attn)
    };
    final_stage(tape).map_err(|e| e.in_stage(stage::FINAL_FUSION))
}

fn eval_on(f: impl FnOnce(&mut Tape) -> Result<NodeId>) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let out = f(&mut tape)?;
    Ok(tape.value(out).clone())
}

pub fn cross_modal_attention(q: &Tensor2, k: &Tensor2, v: &Tensor2) -> Result<Tensor2> {
    eval_on(|t| {
        let (q, k, v) = (t.constant(q.clone()), t.constant(k.clone()), t.constant(v.clone()));
        cross_modal_attention_on(t, q, k, v)
    })
}

/// Attention weights alone, for inspecting the row-stochastic matrix.
pub fn attention_weights(q: &Tensor2, k: &Tensor2) -> Result<Tensor2> {
    eval_on(|t| {
        let (q, k) = (t.constant(q.clone()), t.constant(k.clone()));
        attention_weights_on(t, q, k)
    })
}

pub fn self_attention(x: &Tensor2, p: &SelfAttentionParams) -> Result<Tensor2> {
    eval_on(|t| {
        let x = t.constant(x.clone());
        let p = SelfAttentionParams {
            wq: t.constant(p.wq.clone()),
            wk: t.constant(p.wk.clone()),
            wv: t.constant(p.wv.clone()),
        };
        self_attention_on(t, x, &p)
    })
}

/// Value-level entry point for the hybrid stack.
pub fn hybrid_attention(
    text: &Tensor2,
    audio: &Tensor2,
    visual: &Tensor2,
    sentiment: &Tensor2,
    p: &HybridAttentionParams,
    variant: MixVariant,
) -> Result<Tensor2> {
    let mut store = ParamStore::new();
    p.insert_into(&mut store, "")?;
    eval_on(|t| {
        let nodes = HybridAttentionParams::bind(t, &store, "")?;
        let x = ModalityNodes {
            text: t.constant(text.clone()),
            audio: t.constant(audio.clone()),
            visual: t.constant(visual.clone()),
            sentiment: t.constant(sentiment.clone()),
        };
        hybrid_attention_on(t, x, &nodes, variant)
    })
}
