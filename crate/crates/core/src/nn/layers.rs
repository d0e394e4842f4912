//! Parameterized building blocks. Each layer owns [`ParamId`]s into a
//! shared [`ParameterSet`]; calling a layer twice in one graph reuses the
//! same parameter nodes.

use rand_chacha::ChaCha8Rng;

use super::{glorot_bound, Graph, ParamId, ParameterSet, Tensor, Var};
use crate::error::{Error, Result};

/// Affine map `x·W + b` over the rows of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = glorot_bound(inputs, outputs);
        let weight = ps.add_uniform(format!("{name}.weight"), &[inputs, outputs], bound, rng)?;
        let bias = ps.add_zeros(format!("{name}.bias"), &[1, outputs])?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParameterSet, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Unidirectional LSTM cell; gate blocks are ordered input, forget,
/// candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let w_input = ps.add_uniform(
            format!("{name}.w_input"),
            &[inputs, 4 * hidden],
            glorot_bound(inputs, 4 * hidden),
            rng,
        )?;
        let w_hidden = ps.add_uniform(
            format!("{name}.w_hidden"),
            &[hidden, 4 * hidden],
            glorot_bound(hidden, 4 * hidden),
            rng,
        )?;
        let bias = ps.add_zeros(format!("{name}.bias"), &[1, 4 * hidden])?;
        Ok(Self {
            w_input,
            w_hidden,
            bias,
            inputs,
            hidden,
        })
    }

    /// Zero state for a batch of `rows` sequences.
    pub fn zero_state(&self, g: &mut Graph, rows: usize) -> LstmState {
        LstmState {
            h: g.input(Tensor::zeros(&[rows, self.hidden])),
            c: g.input(Tensor::zeros(&[rows, self.hidden])),
        }
    }

    pub fn step(&self, g: &mut Graph, ps: &ParameterSet, x: Var, state: LstmState) -> Result<LstmState> {
        let wx = g.param(ps, self.w_input);
        let wh = g.param(ps, self.w_hidden);
        let b = g.param(ps, self.bias);
        let xi = g.matmul(x, wx)?;
        let hh = g.matmul(state.h, wh)?;
        let z = g.add(xi, hh)?;
        let z = g.add_row(z, b)?;
        let n = self.hidden;
        let i = g.slice_cols(z, 0, n)?;
        let f = g.slice_cols(z, n, 2 * n)?;
        let c_hat = g.slice_cols(z, 2 * n, 3 * n)?;
        let o = g.slice_cols(z, 3 * n, 4 * n)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let c_hat = g.tanh(c_hat);
        let o = g.sigmoid(o);
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, c_hat)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// Runs over `xs` (one `1 × inputs` row per step) from the zero state;
    /// returns every hidden state and the final state.
    pub fn run(&self, g: &mut Graph, ps: &ParameterSet, xs: &[Var]) -> Result<(Vec<Var>, LstmState)> {
        let mut state = self.zero_state(g, 1);
        let mut hs = Vec::with_capacity(xs.len());
        for &x in xs {
            state = self.step(g, ps, x, state)?;
            hs.push(state.h);
        }
        Ok((hs, state))
    }
}

/// Scaled dot-product attention with `heads` parallel heads and an output
/// projection. Model width must divide evenly by the head count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiHeadAttention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub dim: usize,
    pub heads: usize,
}

pub struct AttentionOutput {
    pub output: Var,
    /// Per-head `queries × keys` row-stochastic weight matrices.
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::invalid(format!("{heads} heads do not divide width {dim}")));
        }
        let bound = glorot_bound(dim, dim);
        let mut proj = |suffix: &str| ps.add_uniform(format!("{name}.{suffix}"), &[dim, dim], bound, rng);
        Ok(Self {
            wq: proj("wq")?,
            wk: proj("wk")?,
            wv: proj("wv")?,
            wo: proj("wo")?,
            dim,
            heads,
        })
    }

    /// `queries [Tq × dim]` attend over `keys [Tk × dim]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParameterSet, queries: Var, keys: Var) -> Result<AttentionOutput> {
        let wq = g.param(ps, self.wq);
        let wk = g.param(ps, self.wk);
        let wv = g.param(ps, self.wv);
        let wo = g.param(ps, self.wo);
        let q = g.matmul(queries, wq)?;
        let k = g.matmul(keys, wk)?;
        let v = g.matmul(keys, wv)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, (h + 1) * dh)?;
            let kh = g.slice_cols(k, h * dh, (h + 1) * dh)?;
            let vh = g.slice_cols(v, h * dh, (h + 1) * dh)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            outs.push(g.matmul(attn, vh)?);
            weights.push(attn);
        }
        let concat = g.concat_cols(&outs)?;
        let output = g.matmul(concat, wo)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Stride-1 convolution with "same" zero padding (odd kernels only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(
        ps: &mut ParameterSet,
        name: &str,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::invalid(format!("kernel size {kernel} must be odd")));
        }
        let area = kernel * kernel;
        let bound = glorot_bound(in_channels * area, filters * area);
        let weight = ps.add_uniform(
            format!("{name}.weight"),
            &[filters, in_channels, kernel, kernel],
            bound,
            rng,
        )?;
        let bias = ps.add_zeros(format!("{name}.bias"), &[filters])?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            filters,
            kernel,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParameterSet, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        g.conv2d(x, w, b, self.kernel / 2)
    }
}
