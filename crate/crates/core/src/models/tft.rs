//! Point-forecast Temporal Fusion Transformer.
//!
//! Pipeline: per-channel embeddings → variable selection → GRU encoder over
//! the 72 past steps → GRU decoder unrolled over 36 steps on a normalized
//! time index → gated skip → causal multi-head attention → gated skip →
//! position-wise GRN → linear head.
//!
//! Sequence tensors are time-major `[T·B, d]` (row `t·B + b`) until the
//! attention block, which works batch-major (row `b·T + t`).

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Linear, Norm, ParamStore};
use super::{check_input, ForecastModel, ModelKind};
use crate::autograd::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{GROUP_LEN, HORIZON, INPUT_LEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TftConfig {
    pub hidden_dim: usize,
    pub n_heads: usize,
    /// Applied only while training.
    pub dropout: f64,
}

impl Default for TftConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            n_heads: 4,
            dropout: 0.1,
        }
    }
}

impl TftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

fn maybe_dropout(g: &mut Graph, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(r) => g.dropout(x, p, r),
        None => Ok(x),
    }
}

/// Gated residual network:
/// `LayerNorm(skip(a) + GLU(W₁·ELU(W₂a + W₃c + b₂) + b₁))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grn {
    pub w2: Linear,
    pub w3: Option<Linear>,
    pub w1: Linear,
    /// Projection of `a` when input and output widths differ.
    pub skip: Option<Linear>,
    pub norm: Norm,
}

impl Grn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        context_dim: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w2: Linear::new(store, &format!("{name}.w2"), input_dim, hidden, true, rng),
            w3: context_dim.map(|c| Linear::new(store, &format!("{name}.w3"), c, hidden, false, rng)),
            w1: Linear::new(store, &format!("{name}.w1"), hidden, 2 * output_dim, true, rng),
            skip: (input_dim != output_dim)
                .then(|| Linear::new(store, &format!("{name}.skip"), input_dim, output_dim, true, rng)),
            norm: Norm::new(store, &format!("{name}.norm"), output_dim),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        a: Var,
        context: Option<Var>,
        dropout: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let mut pre = self.w2.forward(g, p, a)?;
        match (context, &self.w3) {
            (Some(c), Some(w3)) => {
                let cc = w3.forward(g, p, c)?;
                pre = g.add(pre, cc)?;
            }
            (Some(_), None) => {
                return Err(Error::Contract("context given to a GRN without a context path".into()))
            }
            (None, _) => {}
        }
        let eta2 = g.activation(pre, Activation::Elu);
        let eta2 = maybe_dropout(g, eta2, dropout, rng)?;
        let eta1 = self.w1.forward(g, p, eta2)?;
        let gated = g.glu(eta1)?;
        let skip = match &self.skip {
            Some(s) => s.forward(g, p, a)?,
            None => a,
        };
        let sum = g.add(skip, gated)?;
        self.norm.forward(g, p, sum)
    }
}

/// Per-channel GRNs mixed by softmax weights from a GRN over the
/// concatenated embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableSelection {
    pub channel_grns: Vec<Grn>,
    pub weight_grn: Grn,
}

impl VariableSelection {
    pub fn new(store: &mut ParamStore, name: &str, n_channels: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let channel_grns = (0..n_channels)
            .map(|c| Grn::new(store, &format!("{name}.channel{c}"), d, d, d, None, rng))
            .collect();
        let weight_grn = Grn::new(store, &format!("{name}.weights"), n_channels * d, d, n_channels, None, rng);
        Self {
            channel_grns,
            weight_grn,
        }
    }

    /// Returns `(combined [N, d], weights [N, C])`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        embeddings: &[Var],
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var)> {
        if embeddings.len() != self.channel_grns.len() {
            return Err(Error::shape(
                "variable_selection",
                &[self.channel_grns.len()],
                &[embeddings.len()],
            ));
        }
        let flat = g.concat_cols(embeddings)?;
        let logits = self.weight_grn.forward(g, p, flat, None, dropout, rng.as_deref_mut())?;
        let weights = g.softmax(logits, None)?;
        let mut combined: Option<Var> = None;
        for (c, (grn, &e)) in self.channel_grns.iter().zip(embeddings).enumerate() {
            let t = grn.forward(g, p, e, None, dropout, rng.as_deref_mut())?;
            let w = g.slice_cols(weights, c, 1)?;
            let scaled = g.scale_rows(t, w)?;
            combined = Some(match combined {
                Some(acc) => g.add(acc, scaled)?,
                None => scaled,
            });
        }
        Ok((combined.expect("at least one channel"), weights))
    }
}

/// Gated recurrent cell; input projections for all steps are computed up
/// front.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub input: Linear,
    pub hidden: Linear,
    pub width: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.input"), d, 3 * d, true, rng),
            hidden: Linear::new(store, &format!("{name}.hidden"), d, 3 * d, true, rng),
            width: d,
        }
    }

    /// Unrolls over time-major `xs [T·B, d]` from `h0 [B, d]`; returns the
    /// per-step states.
    pub fn run(&self, g: &mut Graph, p: &[Var], xs: Var, batch: usize, h0: Var) -> Result<Vec<Var>> {
        let d = self.width;
        let proj = self.input.forward(g, p, xs)?;
        let steps = g.value(proj).rows() / batch;
        let mut h = h0;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice_rows(proj, t * batch, batch)?;
            let ht = self.hidden.forward(g, p, h)?;
            let (xr, xz, xn) = (g.slice_cols(xt, 0, d)?, g.slice_cols(xt, d, d)?, g.slice_cols(xt, 2 * d, d)?);
            let (hr, hz, hn) = (g.slice_cols(ht, 0, d)?, g.slice_cols(ht, d, d)?, g.slice_cols(ht, 2 * d, d)?);
            let r = g.add(xr, hr)?;
            let r = g.activation(r, Activation::Sigmoid);
            let z = g.add(xz, hz)?;
            let z = g.activation(z, Activation::Sigmoid);
            let rn = g.mul(r, hn)?;
            let n = g.add(xn, rn)?;
            let n = g.activation(n, Activation::Tanh);
            let keep = g.affine(z, -1.0, 1.0);
            let a = g.mul(keep, n)?;
            let b = g.mul(z, h)?;
            h = g.add(a, b)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// `mask[t·total + j]` is true when query `t` may attend key `j`, i.e.
/// `j ≤ (total − n_queries) + t`.
pub fn causal_mask(n_queries: usize, total: usize) -> Vec<bool> {
    let offset = total - n_queries;
    (0..n_queries)
        .flat_map(|t| (0..total).map(move |j| j <= offset + t))
        .collect()
}

/// Scaled dot-product attention with per-head projections, concatenated
/// and projected back to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: Vec<[Linear; 3]>,
    pub output: Linear,
    pub head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let dh = d / n_heads;
        let heads = (0..n_heads)
            .map(|h| {
                [
                    Linear::new(store, &format!("{name}.head{h}.query"), d, dh, false, rng),
                    Linear::new(store, &format!("{name}.head{h}.key"), d, dh, false, rng),
                    Linear::new(store, &format!("{name}.head{h}.value"), d, dh, false, rng),
                ]
            })
            .collect();
        Self {
            heads,
            output: Linear::new(store, &format!("{name}.output"), d, d, true, rng),
            head_dim: dh,
        }
    }

    /// `queries [B·Hq, d]` and `keys_values [B·Hk, d]` are batch-major;
    /// `mask` has `Hq·Hk` entries shared across the batch. Returns the
    /// context `[B·Hq, d]` and one `[B, Hq, Hk]` weight tensor per head.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &[Var],
        queries: Var,
        keys_values: Var,
        batch: usize,
        mask: &[bool],
    ) -> Result<(Var, Vec<Var>)> {
        let hq = g.value(queries).rows() / batch;
        let hk = g.value(keys_values).rows() / batch;
        if mask.len() != hq * hk {
            return Err(Error::shape("attention mask", &[hq, hk], &[mask.len()]));
        }
        let full_mask: Vec<bool> = mask.iter().copied().cycle().take(batch * mask.len()).collect();
        let dh = self.head_dim;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads.len());
        let mut weights = Vec::with_capacity(self.heads.len());
        for [wq, wk, wv] in &self.heads {
            let q = wq.forward(g, p, queries)?;
            let q = g.reshape(q, &[batch, hq, dh])?;
            let k = wk.forward(g, p, keys_values)?;
            let k = g.reshape(k, &[batch, hk, dh])?;
            let v = wv.forward(g, p, keys_values)?;
            let v = g.reshape(v, &[batch, hk, dh])?;
            let scores = g.batch_matmul(q, k, true)?;
            let scores = g.affine(scores, scale, 0.0);
            let a = g.softmax(scores, Some(&full_mask))?;
            let ctx = g.batch_matmul(a, v, false)?;
            contexts.push(g.reshape(ctx, &[batch * hq, dh])?);
            weights.push(a);
        }
        let cat = g.concat_cols(&contexts)?;
        Ok((self.output.forward(g, p, cat)?, weights))
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct TftTrace {
    pub forecast: Tensor,
    /// `[72·B, C]`, time-major.
    pub selection_weights: Tensor,
    /// Per head, `[B, 36, 108]`.
    pub attention: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tft {
    pub config: TftConfig,
    n_channels: usize,
    store: ParamStore,
    embed: Vec<Linear>,
    time_embed: Linear,
    selection: VariableSelection,
    encoder: Gru,
    decoder: Gru,
    gate1: Linear,
    norm1: Norm,
    attention: MultiHeadAttention,
    gate2: Linear,
    norm2: Norm,
    feed_forward: Grn,
    head: Linear,
}

struct Outputs {
    forecast: Var,
    selection: Var,
    attention: Vec<Var>,
}

impl Tft {
    pub fn new(config: TftConfig, n_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        let d = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let embed = (0..n_channels)
            .map(|c| Linear::new(&mut s, &format!("embed{c}"), 1, d, true, &mut rng))
            .collect();
        let time_embed = Linear::new(&mut s, "time_embed", 1, d, true, &mut rng);
        let selection = VariableSelection::new(&mut s, "selection", n_channels, d, &mut rng);
        let encoder = Gru::new(&mut s, "encoder", d, &mut rng);
        let decoder = Gru::new(&mut s, "decoder", d, &mut rng);
        let gate1 = Linear::new(&mut s, "gate1", d, 2 * d, true, &mut rng);
        let norm1 = Norm::new(&mut s, "norm1", d);
        let attention = MultiHeadAttention::new(&mut s, "attention", d, config.n_heads, &mut rng);
        let gate2 = Linear::new(&mut s, "gate2", d, 2 * d, true, &mut rng);
        let norm2 = Norm::new(&mut s, "norm2", d);
        let feed_forward = Grn::new(&mut s, "feed_forward", d, d, d, None, &mut rng);
        let head = Linear::new(&mut s, "head", d, 1, true, &mut rng);
        Ok(Self {
            config,
            n_channels,
            store: s,
            embed,
            time_embed,
            selection,
            encoder,
            decoder,
            gate1,
            norm1,
            attention,
            gate2,
            norm2,
            feed_forward,
            head,
        })
    }

    fn run(&self, g: &mut Graph, p: &[Var], x: Var, mut rng: Option<&mut ChaCha8Rng>) -> Result<Outputs> {
        check_input(g, x, self.n_channels)?;
        let b = g.value(x).rows();
        let c = self.n_channels;
        let d = self.config.hidden_dim;
        let drop = self.config.dropout;

        let mut embeddings = Vec::with_capacity(c);
        for (ch, layer) in self.embed.iter().enumerate() {
            let index: Vec<usize> = (0..INPUT_LEN)
                .flat_map(|t| (0..b).map(move |r| r * c * INPUT_LEN + ch * INPUT_LEN + t))
                .collect();
            let col = g.gather(x, Rc::new(index), &[INPUT_LEN * b, 1])?;
            embeddings.push(layer.forward(g, p, col)?);
        }
        let (selected, weights) = self.selection.forward(g, p, &embeddings, drop, rng.as_deref_mut())?;

        let h0 = g.constant(Tensor::zeros(&[b, d]));
        let encoded = self.encoder.run(g, p, selected, b, h0)?;

        let denom = (GROUP_LEN - 1) as f64;
        let tau: Vec<f64> = (0..HORIZON)
            .flat_map(|t| std::iter::repeat_n((INPUT_LEN + t) as f64 / denom, b))
            .collect();
        let tau = g.constant(Tensor::new(&[HORIZON * b, 1], tau)?);
        let future = self.time_embed.forward(g, p, tau)?;
        let decoded = self.decoder.run(g, p, future, b, *encoded.last().expect("72 steps"))?;

        let states: Vec<Var> = encoded.iter().chain(&decoded).copied().collect();
        let phi = g.concat_rows(&states)?;
        let skip = g.concat_rows(&[selected, future])?;
        let gate = self.gate1.forward(g, p, phi)?;
        let gate = g.glu(gate)?;
        let gate = maybe_dropout(g, gate, drop, rng.as_deref_mut())?;
        let sum = g.add(skip, gate)?;
        let enriched = self.norm1.forward(g, p, sum)?;

        // time-major → batch-major
        let index: Vec<usize> = (0..b)
            .flat_map(|r| (0..GROUP_LEN).flat_map(move |t| (0..d).map(move |k| (t * b + r) * d + k)))
            .collect();
        let seq = g.gather(enriched, Rc::new(index), &[b * GROUP_LEN, d])?;
        let index: Vec<usize> = (0..b)
            .flat_map(|r| (0..HORIZON).flat_map(move |t| (0..d).map(move |k| (r * GROUP_LEN + INPUT_LEN + t) * d + k)))
            .collect();
        let queries = g.gather(seq, Rc::new(index), &[b * HORIZON, d])?;

        let mask = causal_mask(HORIZON, GROUP_LEN);
        let (ctx, attention) = self.attention.forward(g, p, queries, seq, b, &mask)?;
        let ctx = maybe_dropout(g, ctx, drop, rng.as_deref_mut())?;
        let gate = self.gate2.forward(g, p, ctx)?;
        let gate = g.glu(gate)?;
        let sum = g.add(queries, gate)?;
        let attended = self.norm2.forward(g, p, sum)?;

        let ff = self.feed_forward.forward(g, p, attended, None, drop, rng.as_deref_mut())?;
        let y = self.head.forward(g, p, ff)?;
        let forecast = g.reshape(y, &[b, HORIZON])?;
        Ok(Outputs {
            forecast,
            selection: weights,
            attention,
        })
    }

    /// Evaluation-mode forward pass with selection and attention weights.
    pub fn trace(&self, input: &Tensor) -> Result<TftTrace> {
        let mut g = Graph::new();
        let p = self.store.bind_constant(&mut g);
        let x = g.constant(input.clone());
        let out = self.run(&mut g, &p, x, None)?;
        Ok(TftTrace {
            forecast: g.value(out.forecast).clone(),
            selection_weights: g.value(out.selection).clone(),
            attention: out.attention.iter().map(|&a| g.value(a).clone()).collect(),
        })
    }
}

impl ForecastModel for Tft {
    fn kind(&self) -> ModelKind {
        ModelKind::Tft
    }

    fn n_channels(&self) -> usize {
        self.n_channels
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, p: &[Var], x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        Ok(self.run(g, p, x, rng)?.forecast)
    }
}
