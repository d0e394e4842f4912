//! Tape-based reverse-mode differentiation. Every op evaluates eagerly and
//! records its parents; `backward` walks the tape once in reverse.

use std::collections::HashMap;

use super::{ParamId, ParameterSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    CrossEntropy { probs: Var, targets: Vec<usize> },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize> },
    BceWithLogits { logits: Var, targets: Vec<f64> },
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    MeanRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Conv2d { input: Var, weight: Var, bias: Var, pad: usize },
    MaxPool2d { input: Var, argmax: Vec<usize> },
}

/// One forward/backward computation. Parameters enter through
/// [`Graph::param`]; a parameter used several times maps to a single node,
/// so tied branches share storage and accumulate into one gradient.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Var>,
    non_finite: Option<String>,
}

fn mismatch(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape()))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `out[r×c] += a[r×k] · b[k×c]`.
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(format!("{op:?}").chars().take(40).collect());
        }
        self.values.push(value);
        self.ops.push(op);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// Fails if any forward value so far was NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match &self.non_finite {
            Some(op) => Err(Error::NonFinite(format!("forward pass ({op})"))),
            None => Ok(()),
        }
    }

    /// A non-trainable input; its gradient is still available after
    /// `backward` through [`Graph::grad`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, ps: &ParameterSet, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(ps.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; r * c];
        gemm_acc(ta.data(), tb.data(), &mut out, r, k, c);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::MatMul(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `a[r×c] + row[1×c]` broadcast over rows (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (&self.values[a.0], &self.values[row.0]);
        if tr.len() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tr.data()[i % c])
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(a, row)))
    }

    /// `a[r×c] ⊙ col[r×1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (&self.values[a.0], &self.values[col.0]);
        if tc.len() != ta.rows() || ta.shape().len() != 2 {
            return Err(mismatch("mul_col", ta, tc));
        }
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * tc.data()[i / c])
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MulCol(a, col)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = &self.values[a.0];
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::SoftmaxRows(a))
    }

    /// Mean over rows of `−ln p[row, target]` for row-stochastic `probs`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let tp = &self.values[probs.0];
        check_targets(tp, targets)?;
        let c = tp.cols();
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -tp.data()[r * c + t].ln())
            .sum::<f64>()
            / targets.len() as f64;
        Ok(self.push(
            Tensor::row(vec![loss])?,
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Numerically stable fused softmax + cross-entropy, mean over rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = &self.values[logits.0];
        check_targets(tl, targets)?;
        let c = tl.cols();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &tl.data()[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        loss /= targets.len() as f64;
        Ok(self.push(
            Tensor::row(vec![loss])?,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Binary cross-entropy on logits (sigmoid applied internally), mean
    /// over elements.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let tl = &self.values[logits.0];
        if tl.len() != targets.len() {
            return Err(Error::shape(format!(
                "bce: {} logits, {} targets",
                tl.len(),
                targets.len()
            )));
        }
        let loss = tl
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        Ok(self.push(
            Tensor::row(vec![loss])?,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data().iter().sum();
        self.push(Tensor::row(vec![s]).expect("scalar"), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.values[a.0];
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::row(vec![s]).expect("scalar"), Op::Mean(a))
    }

    /// Row sums: `[r×c] → [r×1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = &self.values[a.0];
        let (r, c) = (t.rows(), t.cols());
        let data = (0..r).map(|i| t.data()[i * c..(i + 1) * c].iter().sum()).collect();
        self.push(Tensor::matrix(r, 1, data).expect("shape"), Op::SumCols(a))
    }

    /// Column means: `[r×c] → [1×c]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = &self.values[a.0];
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; c];
        for row in t.data().chunks(c) {
            add_into(&mut data, row);
        }
        data.iter_mut().for_each(|x| *x /= r as f64);
        self.push(Tensor::row(data).expect("shape"), Op::MeanRows(a))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = &self.values[a.0];
        if start >= end || end > t.cols() || t.shape().len() != 2 {
            return Err(Error::shape(format!("slice_cols {start}..{end} of {:?}", t.shape())));
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&t.data()[i * c + start..i * c + end]);
        }
        let out = Tensor::matrix(r, end - start, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Rows `[start, end)` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = &self.values[a.0];
        if start >= end || end > t.rows() || t.shape().len() != 2 {
            return Err(Error::shape(format!("slice_rows {start}..{end} of {:?}", t.shape())));
        }
        let c = t.cols();
        let out = Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.values[parts[0].0].rows();
        if parts.iter().any(|p| self.values[p.0].rows() != r) {
            return Err(Error::shape("concat_cols: row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|p| self.values[p.0].cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.values[p.0].data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::matrix(r, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.values[parts[0].0].cols();
        if parts.iter().any(|p| self.values[p.0].cols() != c) {
            return Err(Error::shape("concat_rows: column counts differ"));
        }
        let mut data = Vec::new();
        let mut r = 0;
        for p in parts {
            data.extend_from_slice(self.values[p.0].data());
            r += self.values[p.0].rows();
        }
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = &self.values[a.0];
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        self.push(Tensor::matrix(c, r, data).expect("shape"), Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.values[a.0].clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Flattens to a `1 × n` row.
    pub fn flatten(&mut self, a: Var) -> Var {
        let n = self.values[a.0].len();
        self.reshape(a, &[1, n]).expect("flatten preserves size")
    }

    /// Embedding lookup: row `i` of the output is row `indices[i]` of `table`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = &self.values[table.0];
        let (r, c) = (t.rows(), t.cols());
        if indices.is_empty() {
            return Err(Error::Empty("gather_rows indices".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::shape(format!("gather_rows index {bad} of {r} rows")));
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
        }
        let out = Tensor::matrix(indices.len(), c, data)?;
        Ok(self.push(out, Op::GatherRows(table, indices.to_vec())))
    }

    /// Stride-1 2-D convolution with symmetric zero padding `pad`.
    /// `input [C,H,W]`, `weight [F,C,KH,KW]`, `bias [F]` → `[F,H',W']`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, pad: usize) -> Result<Var> {
        let (ti, tw, tb) = (&self.values[input.0], &self.values[weight.0], &self.values[bias.0]);
        let (is, ws) = (ti.shape(), tw.shape());
        if is.len() != 3 || ws.len() != 4 || ws[1] != is[0] || tb.len() != ws[0] {
            return Err(Error::shape(format!(
                "conv2d input {is:?}, weight {ws:?}, bias {:?}",
                tb.shape()
            )));
        }
        let (c, h, w) = (is[0], is[1], is[2]);
        let (f, kh, kw) = (ws[0], ws[2], ws[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape("conv2d kernel larger than padded input"));
        }
        let (oh, ow) = (h + 2 * pad - kh + 1, w + 2 * pad - kw + 1);
        let mut out = vec![0.0; f * oh * ow];
        let (x, k) = (ti.data(), tw.data());
        for fi in 0..f {
            let o = &mut out[fi * oh * ow..(fi + 1) * oh * ow];
            o.iter_mut().for_each(|v| *v = tb.data()[fi]);
            for ci in 0..c {
                for ki in 0..kh {
                    for kj in 0..kw {
                        let wv = k[((fi * c + ci) * kh + ki) * kw + kj];
                        let (y0, y1) = conv_range(oh, h, ki, pad);
                        let (x0, x1) = conv_range(ow, w, kj, pad);
                        for oy in y0..y1 {
                            let iy = oy + ki - pad;
                            let xrow = &x[(ci * h + iy) * w..(ci * h + iy + 1) * w];
                            let orow = &mut o[oy * ow..(oy + 1) * ow];
                            for ox in x0..x1 {
                                orow[ox] += wv * xrow[ox + kj - pad];
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![f, oh, ow], out)?;
        Ok(self.push(t, Op::Conv2d { input, weight, bias, pad }))
    }

    /// 2×2 max pooling with stride 2 over `[C,H,W]` (trailing odd row/column
    /// dropped).
    pub fn max_pool2d(&mut self, input: Var) -> Result<Var> {
        let t = &self.values[input.0];
        let s = t.shape();
        if s.len() != 3 || s[1] < 2 || s[2] < 2 {
            return Err(Error::shape(format!("max_pool2d on {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (ci * h + 2 * oy + dy) * w + 2 * ox + dx;
                            if t.data()[idx] > best.0 {
                                best = (t.data()[idx], idx);
                            }
                        }
                    }
                    out.push(best.0);
                    argmax.push(best.1);
                }
            }
        }
        let t = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push(t, Op::MaxPool2d { input, argmax }))
    }

    /// Reverse pass from a scalar `loss`; gradients for every node that
    /// influences it become available.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::shape("backward needs a scalar loss"));
        }
        self.check_finite()?;
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, v: Var, g: &[f64]) {
        match &mut self.grads[v.0] {
            Some(existing) => add_into(existing, g),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    fn acc_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let n = self.values[v.0].len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let op = self.ops[i].clone();
        match op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
                let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
                // dA = G Bᵀ, dB = Aᵀ G
                let mut da = vec![0.0; r * k];
                for ii in 0..r {
                    for p in 0..k {
                        let brow = &tb.data()[p * c..(p + 1) * c];
                        da[ii * k + p] = g[ii * c..(ii + 1) * c]
                            .iter()
                            .zip(brow)
                            .map(|(x, y)| x * y)
                            .sum();
                    }
                }
                let mut db = vec![0.0; k * c];
                for ii in 0..r {
                    let grow = &g[ii * c..(ii + 1) * c];
                    for p in 0..k {
                        let av = ta.data()[ii * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for (d, &gv) in db[p * c..(p + 1) * c].iter_mut().zip(grow) {
                            *d += av * gv;
                        }
                    }
                }
                self.acc(a, &da);
                self.acc(b, &db);
            }
            Op::Add(a, b) => {
                self.acc(a, g);
                self.acc(b, g);
            }
            Op::Sub(a, b) => {
                self.acc(a, g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                self.acc(b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(self.values[b.0].data()).map(|(x, y)| x * y).collect();
                let db: Vec<f64> = g.iter().zip(self.values[a.0].data()).map(|(x, y)| x * y).collect();
                self.acc(a, &da);
                self.acc(b, &db);
            }
            Op::AddRow(a, row) => {
                self.acc(a, g);
                let c = self.values[row.0].len();
                self.acc_with(row, |d| {
                    for chunk in g.chunks(c) {
                        add_into(d, chunk);
                    }
                });
            }
            Op::MulCol(a, col) => {
                let c = self.values[a.0].cols();
                let colv = self.values[col.0].data().to_vec();
                let av = self.values[a.0].data();
                let mut dcol = vec![0.0; colv.len()];
                for (idx, (&gv, &x)) in g.iter().zip(av).enumerate() {
                    dcol[idx / c] += gv * x;
                }
                let da: Vec<f64> = g.iter().enumerate().map(|(idx, &gv)| gv * colv[idx / c]).collect();
                self.acc(a, &da);
                self.acc(col, &dcol);
            }
            Op::Scale(a, s) => {
                let d: Vec<f64> = g.iter().map(|x| x * s).collect();
                self.acc(a, &d);
            }
            Op::AddScalar(a) => self.acc(a, g),
            Op::Sigmoid(a) => {
                let y = self.values[i].data();
                let d: Vec<f64> = g.iter().zip(y).map(|(gv, &s)| gv * s * (1.0 - s)).collect();
                self.acc(a, &d);
            }
            Op::Tanh(a) => {
                let y = self.values[i].data();
                let d: Vec<f64> = g.iter().zip(y).map(|(gv, &t)| gv * (1.0 - t * t)).collect();
                self.acc(a, &d);
            }
            Op::Relu(a) => {
                let x = self.values[a.0].data();
                let d: Vec<f64> = g.iter().zip(x).map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 }).collect();
                self.acc(a, &d);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.values[i];
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for ((drow, yrow), grow) in d.chunks_mut(c).zip(y.data().chunks(c)).zip(g.chunks(c)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(p, q)| p * q).sum();
                    for ((dv, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dv = yv * (gv - dot);
                    }
                }
                self.acc(a, &d);
            }
            Op::CrossEntropy { probs, targets } => {
                let tp = &self.values[probs.0];
                let c = tp.cols();
                let n = targets.len() as f64;
                let mut d = vec![0.0; tp.len()];
                for (r, &t) in targets.iter().enumerate() {
                    d[r * c + t] = -g[0] / (tp.data()[r * c + t] * n);
                }
                self.acc(probs, &d);
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                let tl = &self.values[logits.0];
                let c = tl.cols();
                let n = targets.len() as f64;
                let mut d = vec![0.0; tl.len()];
                for (r, &t) in targets.iter().enumerate() {
                    let row = &tl.data()[r * c..(r + 1) * c];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                    for j in 0..c {
                        let p = (row[j] - max).exp() / sum;
                        d[r * c + j] = g[0] * (p - if j == t { 1.0 } else { 0.0 }) / n;
                    }
                }
                self.acc(logits, &d);
            }
            Op::BceWithLogits { logits, targets } => {
                let n = targets.len() as f64;
                let d: Vec<f64> = self.values[logits.0]
                    .data()
                    .iter()
                    .zip(&targets)
                    .map(|(&z, &y)| g[0] * (sigmoid(z) - y) / n)
                    .collect();
                self.acc(logits, &d);
            }
            Op::Sum(a) => {
                let n = self.values[a.0].len();
                self.acc(a, &vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.values[a.0].len();
                self.acc(a, &vec![g[0] / n as f64; n]);
            }
            Op::SumCols(a) => {
                let c = self.values[a.0].cols();
                let d: Vec<f64> = (0..self.values[a.0].len()).map(|idx| g[idx / c]).collect();
                self.acc(a, &d);
            }
            Op::MeanRows(a) => {
                let (r, c) = (self.values[a.0].rows(), self.values[a.0].cols());
                let d: Vec<f64> = (0..r * c).map(|idx| g[idx % c] / r as f64).collect();
                self.acc(a, &d);
            }
            Op::SliceCols(a, start) => {
                let c = self.values[a.0].cols();
                let w = self.values[i].cols();
                self.acc_with(a, |d| {
                    for (r, grow) in g.chunks(w).enumerate() {
                        add_into(&mut d[r * c + start..r * c + start + w], grow);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let c = self.values[a.0].cols();
                self.acc_with(a, |d| add_into(&mut d[start * c..start * c + g.len()], g));
            }
            Op::ConcatCols(parts) => {
                let r = self.values[i].rows();
                let total = self.values[i].cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.values[p.0].cols();
                    let mut d = Vec::with_capacity(r * w);
                    for row in 0..r {
                        d.extend_from_slice(&g[row * total + offset..row * total + offset + w]);
                    }
                    self.acc(p, &d);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.values[p.0].len();
                    self.acc(p, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.values[a.0].rows(), self.values[a.0].cols());
                let mut d = vec![0.0; r * c];
                for ii in 0..r {
                    for j in 0..c {
                        d[ii * c + j] = g[j * r + ii];
                    }
                }
                self.acc(a, &d);
            }
            Op::Reshape(a) => self.acc(a, g),
            Op::GatherRows(table, indices) => {
                let c = self.values[table.0].cols();
                self.acc_with(table, |d| {
                    for (r, &idx) in indices.iter().enumerate() {
                        add_into(&mut d[idx * c..(idx + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::Conv2d { input, weight, bias, pad } => {
                let (is, ws) = (self.values[input.0].shape().to_vec(), self.values[weight.0].shape().to_vec());
                let (c, h, w) = (is[0], is[1], is[2]);
                let (f, kh, kw) = (ws[0], ws[2], ws[3]);
                let os = self.values[i].shape().to_vec();
                let (oh, ow) = (os[1], os[2]);
                let x = self.values[input.0].data();
                let k = self.values[weight.0].data();
                let mut dx = vec![0.0; x.len()];
                let mut dk = vec![0.0; k.len()];
                let mut db = vec![0.0; f];
                for fi in 0..f {
                    let go = &g[fi * oh * ow..(fi + 1) * oh * ow];
                    db[fi] = go.iter().sum();
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let widx = ((fi * c + ci) * kh + ki) * kw + kj;
                                let wv = k[widx];
                                let (y0, y1) = conv_range(oh, h, ki, pad);
                                let (x0, x1) = conv_range(ow, w, kj, pad);
                                let mut acc = 0.0;
                                for oy in y0..y1 {
                                    let iy = oy + ki - pad;
                                    let base = (ci * h + iy) * w;
                                    let grow = &go[oy * ow..(oy + 1) * ow];
                                    for ox in x0..x1 {
                                        let ix = base + ox + kj - pad;
                                        acc += grow[ox] * x[ix];
                                        dx[ix] += grow[ox] * wv;
                                    }
                                }
                                dk[widx] += acc;
                            }
                        }
                    }
                }
                self.acc(input, &dx);
                self.acc(weight, &dk);
                self.acc(bias, &db);
            }
            Op::MaxPool2d { input, argmax } => {
                self.acc_with(input, |d| {
                    for (gv, &idx) in g.iter().zip(&argmax) {
                        d[idx] += gv;
                    }
                });
            }
        }
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Adds parameter gradients from the last `backward` into `ps`.
    pub fn accumulate_into(&self, ps: &mut ParameterSet) {
        let mut pairs: Vec<(ParamId, Var)> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        pairs.sort();
        for (p, v) in pairs {
            if let Some(g) = &self.grads[v.0] {
                ps.accumulate(p, g);
            }
        }
    }
}

/// Output positions `[lo, hi)` along one axis whose input tap `o + k − pad`
/// falls inside `[0, len)`.
fn conv_range(out_len: usize, in_len: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (in_len + pad).saturating_sub(k).min(out_len);
    (lo.min(hi), hi)
}

fn check_targets(t: &Tensor, targets: &[usize]) -> Result<()> {
    if targets.len() != t.rows() || targets.iter().any(|&k| k >= t.cols()) {
        return Err(Error::shape(format!(
            "{} targets for {:?} scores",
            targets.len(),
            t.shape()
        )));
    }
    Ok(())
}
