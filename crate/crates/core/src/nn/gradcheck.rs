//! Central finite-difference gradient checking.

use rand::Rng;

use super::{Conv2d, Dense, Graph, LstmCell, MultiHeadAttention, ParameterSet, Tensor, Var};
use crate::error::Result;
use crate::rng;

pub const DEFAULT_EPS: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<F>(ps: &ParameterSet, inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParameterSet, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, ps, &vars)?;
    g.check_finite()?;
    Ok(g.value(loss).data()[0])
}

/// Max relative error between reverse-mode and central-difference gradients
/// of the scalar built by `f`, over every parameter and input coordinate.
pub fn grad_check<F>(ps: &mut ParameterSet, inputs: &[Tensor], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParameterSet, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, ps, &vars)?;
    g.backward(loss)?;
    ps.zero_grad();
    g.accumulate_into(ps);

    let mut worst = 0.0f64;
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        let analytic = ps.grad(id).to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let orig = ps.value(id).data()[k];
            ps.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(ps, inputs, &f)?;
            ps.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(ps, inputs, &f)?;
            ps.value_mut(id).data_mut()[k] = orig;
            worst = worst.max(rel_err(a, (plus - minus) / (2.0 * eps)));
        }
    }

    let mut perturbed = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = match g.grad(*v) {
            Some(a) => a.to_vec(),
            None => vec![0.0; inputs[i].len()],
        };
        for (k, &a) in analytic.iter().enumerate() {
            let orig = inputs[i].data()[k];
            perturbed[i].data_mut()[k] = orig + eps;
            let plus = eval(ps, &perturbed, &f)?;
            perturbed[i].data_mut()[k] = orig - eps;
            let minus = eval(ps, &perturbed, &f)?;
            perturbed[i].data_mut()[k] = orig;
            worst = worst.max(rel_err(a, (plus - minus) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

/// The primitive set exercised by [`grad_check_primitive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Dense,
    LstmCell,
    MultiHeadAttention,
    Conv2d,
    MaxPool,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    CrossEntropy,
    SoftmaxCrossEntropy,
    BceWithLogits,
    Mean,
    Concat,
    Flatten,
    GatherRows,
}

impl Primitive {
    pub const ALL: [Primitive; 16] = [
        Primitive::Dense,
        Primitive::LstmCell,
        Primitive::MultiHeadAttention,
        Primitive::Conv2d,
        Primitive::MaxPool,
        Primitive::Relu,
        Primitive::Sigmoid,
        Primitive::Tanh,
        Primitive::Softmax,
        Primitive::CrossEntropy,
        Primitive::SoftmaxCrossEntropy,
        Primitive::BceWithLogits,
        Primitive::Mean,
        Primitive::Concat,
        Primitive::Flatten,
        Primitive::GatherRows,
    ];
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("positive shape")
}

/// Contracts `out` against a fixed random tensor so every output coordinate
/// carries a distinct gradient.
fn project(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let r = random_tensor(&shape, &mut rng::rng_for(seed, "projection"));
    let r = g.input(r);
    let prod = g.mul(out, r)?;
    Ok(g.sum(prod))
}

/// Gradient check of one primitive on seeded random inputs: dense 4×3,
/// an 8-unit LSTM over 5 steps, 2-head attention, one 3×3 conv filter, and
/// small shapes for the rest.
pub fn grad_check_primitive(p: Primitive, seed: u64) -> Result<f64> {
    let mut r = rng::rng_for(seed, "gradcheck");
    let mut ps = ParameterSet::new();
    match p {
        Primitive::Dense => {
            let d = Dense::new(&mut ps, "dense", 4, 3, &mut r)?;
            randomize(&mut ps, &mut r);
            let x = random_tensor(&[2, 4], &mut r);
            grad_check(&mut ps, &[x], DEFAULT_EPS, |g, ps, v| {
                let y = d.forward(g, ps, v[0])?;
                project(g, y, seed)
            })
        }
        Primitive::LstmCell => {
            let cell = LstmCell::new(&mut ps, "lstm", 8, 8, &mut r)?;
            randomize(&mut ps, &mut r);
            let xs: Vec<Tensor> = (0..5).map(|_| random_tensor(&[1, 8], &mut r)).collect();
            grad_check(&mut ps, &xs, DEFAULT_EPS, |g, ps, v| {
                let (hs, last) = cell.run(g, ps, v)?;
                let all = g.concat_rows(&hs)?;
                let a = project(g, all, seed)?;
                let c = g.sum(last.c);
                g.add(a, c)
            })
        }
        Primitive::MultiHeadAttention => {
            let mha = MultiHeadAttention::new(&mut ps, "mha", 4, 2, &mut r)?;
            let q = random_tensor(&[3, 4], &mut r);
            let k = random_tensor(&[5, 4], &mut r);
            grad_check(&mut ps, &[q, k], DEFAULT_EPS, |g, ps, v| {
                let out = mha.forward(g, ps, v[0], v[1])?;
                project(g, out.output, seed)
            })
        }
        Primitive::Conv2d => {
            let conv = Conv2d::new(&mut ps, "conv", 1, 1, 3, &mut r)?;
            randomize(&mut ps, &mut r);
            let x = random_tensor(&[1, 5, 6], &mut r);
            grad_check(&mut ps, &[x], DEFAULT_EPS, |g, ps, v| {
                let y = conv.forward(g, ps, v[0])?;
                project(g, y, seed)
            })
        }
        Primitive::MaxPool => unary(&[2, 4, 6], &mut r, seed, |g, x| g.max_pool2d(x)),
        Primitive::Relu => unary(&[3, 4], &mut r, seed, |g, x| Ok(g.relu(x))),
        Primitive::Sigmoid => unary(&[3, 4], &mut r, seed, |g, x| Ok(g.sigmoid(x))),
        Primitive::Tanh => unary(&[3, 4], &mut r, seed, |g, x| Ok(g.tanh(x))),
        Primitive::Softmax => unary(&[3, 4], &mut r, seed, |g, x| Ok(g.softmax_rows(x))),
        Primitive::CrossEntropy => unary(&[3, 4], &mut r, seed, |g, x| {
            let p = g.softmax_rows(x);
            g.cross_entropy(p, &[0, 3, 1])
        }),
        Primitive::SoftmaxCrossEntropy => {
            unary(&[3, 4], &mut r, seed, |g, x| g.softmax_cross_entropy(x, &[2, 0, 3]))
        }
        Primitive::BceWithLogits => unary(&[2, 3], &mut r, seed, |g, x| {
            g.bce_with_logits(x, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
        }),
        Primitive::Mean => unary(&[3, 4], &mut r, seed, |g, x| {
            let rows = g.mean_rows(x);
            let cols = g.sum_cols(x);
            let a = g.mean(rows);
            let b = g.mean(cols);
            let m = g.mul(a, b)?;
            let all = g.mean(x);
            g.add(m, all)
        }),
        Primitive::Concat => {
            let a = random_tensor(&[2, 3], &mut r);
            let b = random_tensor(&[2, 2], &mut r);
            let c = random_tensor(&[1, 5], &mut r);
            grad_check(&mut ps, &[a, b, c], DEFAULT_EPS, |g, _, v| {
                let ab = g.concat_cols(&[v[0], v[1]])?;
                let abc = g.concat_rows(&[ab, v[2]])?;
                let sq = g.mul(abc, abc)?;
                project(g, sq, seed)
            })
        }
        Primitive::Flatten => unary(&[2, 3, 2], &mut r, seed, |g, x| {
            let f = g.flatten(x);
            let t = g.tanh(f);
            g.mul(t, f)
        }),
        Primitive::GatherRows => unary(&[4, 3], &mut r, seed, |g, x| {
            let rows = g.gather_rows(x, &[2, 0, 2, 3])?;
            g.mul(rows, rows)
        }),
    }
}

fn unary(
    shape: &[usize],
    r: &mut impl Rng,
    seed: u64,
    op: impl Fn(&mut Graph, Var) -> Result<Var>,
) -> Result<f64> {
    let x = random_tensor(shape, r);
    let mut ps = ParameterSet::new();
    grad_check(&mut ps, &[x], DEFAULT_EPS, |g, _, v| {
        let y = op(g, v[0])?;
        if g.value(y).len() == 1 {
            Ok(y)
        } else {
            project(g, y, seed)
        }
    })
}

/// Replaces zero-initialized biases with random values so their gradient
/// paths are exercised away from zero.
fn randomize(ps: &mut ParameterSet, r: &mut impl Rng) {
    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        for v in ps.value_mut(id).data_mut() {
            if *v == 0.0 {
                *v = r.gen_range(-0.5..0.5);
            }
        }
    }
}
