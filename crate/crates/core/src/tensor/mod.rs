//! Dense `f64` tensors and a dynamic reverse-mode tape.
//!
//! Parameters live in [`Tensor`] values owned by the caller. Each forward
//! pass records onto a fresh [`Tape`]: parameters enter through
//! [`Tape::leaf`], every operation appends one node, and [`Tape::backward`]
//! consumes the tape and returns the [`Gradients`] of a scalar loss with
//! respect to every node that requires them.

mod adam;

pub use adam::Adam;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid tensor: {0}")]
    Invalid(String),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Invalid(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Invalid(format!(
                "shape {shape:?} holds {numel} values but {} were given",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::Invalid("non-finite value in data".into()));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// A tensor that takes part in gradient computation.
    pub fn parameter(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![1], vec![value])
    }

    /// Trainable tensor with entries drawn from `U(-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(shape: Vec<usize>, bound: f64, rng: &mut R) -> Result<Self> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::parameter(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(TensorError::Shape {
                op: "accumulate_grad",
                lhs: self.shape.clone(),
                rhs: vec![g.len()],
            });
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, v)| *b += v),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Reshape(Var),
    BlockMul { mat: Var, x: Var },
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Dynamic computation tape; rebuilt for every forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(op: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite(op))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c[m,n] = a[m,k] * b[k,n]`
pub(crate) fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in row.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, t.requires_grad)
    }

    /// Records a constant that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Result<Var> {
        let n = shape.iter().product();
        self.constant(shape, vec![0.0; n])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = gemm(self.value(a), self.value(b), m, k, n);
        check_finite("matmul", &out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (shape, out): (Vec<usize>, Vec<f64>) = if na.shape == nb.shape {
            (
                na.shape.clone(),
                na.value.iter().zip(&nb.value).map(|(x, y)| f(*x, *y)).collect(),
            )
        } else if nb.value.len() == 1 {
            let y = nb.value[0];
            (na.shape.clone(), na.value.iter().map(|x| f(*x, y)).collect())
        } else if na.value.len() == 1 {
            let x = na.value[0];
            (nb.shape.clone(), nb.value.iter().map(|y| f(x, *y)).collect())
        } else {
            return Err(TensorError::Shape {
                op: name,
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            });
        };
        check_finite(name, &out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, op, rg))
    }

    /// Elementwise sum; either operand may be a one-element scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        let n = *sa.last().unwrap_or(&0);
        if sa.len() != 2 || self.value(bias).len() != n {
            return Err(TensorError::Shape {
                op: "add_bias",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let b = self.value(bias);
        let out: Vec<f64> = self
            .value(a)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        check_finite("add_bias", &out)?;
        let shape = sa.to_vec();
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(shape, out, Op::AddBias(a, bias), rg))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|x| f(*x)).collect();
        check_finite(name, &out)?;
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, out, op, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.contains(&0) {
            return Err(TensorError::Shape {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(shape, value, Op::Reshape(a), rg))
    }

    /// Left-multiplies every consecutive `n`-row block of `x` (`[b*n, f]`) by
    /// the square matrix `mat` (`[n, n]`). With `b = 1` this is a plain matmul.
    pub fn block_matmul(&mut self, mat: Var, x: Var) -> Result<Var> {
        let (sm, sx) = (self.shape(mat), self.shape(x));
        if sm.len() != 2 || sx.len() != 2 || sm[0] != sm[1] || sx[0] % sm[0] != 0 {
            return Err(TensorError::Shape {
                op: "block_matmul",
                lhs: sm.to_vec(),
                rhs: sx.to_vec(),
            });
        }
        let (n, f) = (sm[0], sx[1]);
        let m = self.value(mat);
        let out: Vec<f64> = self
            .value(x)
            .chunks(n * f)
            .flat_map(|block| gemm(m, block, n, n, f))
            .collect();
        check_finite("block_matmul", &out)?;
        let shape = sx.to_vec();
        let rg = self.rg(mat) || self.rg(x);
        Ok(self.push(shape, out, Op::BlockMul { mat, x }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).iter().sum();
        check_finite("sum", &[s])?;
        let rg = self.rg(a);
        Ok(self.push(vec![1], vec![s], Op::Sum(a), rg))
    }

    /// Mean squared error. `target` must not require gradients.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(TensorError::Shape {
                op: "mse_loss",
                lhs: self.shape(pred).to_vec(),
                rhs: self.shape(target).to_vec(),
            });
        }
        if self.rg(target) {
            return Err(TensorError::Invalid(
                "mse_loss target must not require gradients".into(),
            ));
        }
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.len() as f64;
        let loss = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        check_finite("mse_loss", &[loss])?;
        let rg = self.rg(pred);
        Ok(self.push(vec![1], vec![loss], Op::Mse(pred, target), rg))
    }

    /// Runs reverse-mode differentiation from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss).to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            // Leaf gradients stay in place; interior ones are released after use.
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let mut send = |target: Var, contrib: Vec<f64>| {
                if !nodes[target.0].requires_grad {
                    return;
                }
                match &mut grads[target.0] {
                    Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(b, c)| *b += c),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (na, nb) = (&nodes[a.0], &nodes[b.0]);
                    let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
                    if na.requires_grad {
                        // dA = dC * B^T
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &nb.value[p * n..(p + 1) * n];
                                da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            }
                        }
                        send(a, da);
                    }
                    if nb.requires_grad {
                        // dB = A^T * dC
                        let mut db = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = na.value[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                let drow = &mut db[p * n..(p + 1) * n];
                                drow.iter_mut().zip(grow).for_each(|(d, x)| *d += aip * x);
                            }
                        }
                        send(b, db);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    send(a, reduce_broadcast(&g, nodes[a.0].value.len(), 1.0));
                    send(b, reduce_broadcast(&g, nodes[b.0].value.len(), sign));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let pick = |v: &Vec<f64>, i: usize| if v.len() == 1 { v[0] } else { v[i] };
                    if nodes[a.0].requires_grad {
                        let full: Vec<f64> = g.iter().enumerate().map(|(i, x)| x * pick(vb, i)).collect();
                        send(a, reduce_broadcast(&full, va.len(), 1.0));
                    }
                    if nodes[b.0].requires_grad {
                        let full: Vec<f64> = g.iter().enumerate().map(|(i, x)| x * pick(va, i)).collect();
                        send(b, reduce_broadcast(&full, vb.len(), 1.0));
                    }
                }
                Op::AddBias(a, bias) => {
                    let n = nodes[bias.0].value.len();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                    send(bias, db);
                    send(a, g);
                }
                Op::Relu(a) => {
                    // Zero gradient at and below zero.
                    let d = g
                        .iter()
                        .zip(&nodes[a.0].value)
                        .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                        .collect();
                    send(a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.iter().zip(&node.value).map(|(x, s)| x * s * (1.0 - s)).collect();
                    send(a, d);
                }
                Op::Tanh(a) => {
                    let d = g.iter().zip(&node.value).map(|(x, t)| x * (1.0 - t * t)).collect();
                    send(a, d);
                }
                Op::Reshape(a) => send(a, g),
                Op::BlockMul { mat, x } => {
                    let (nm, nx) = (&nodes[mat.0], &nodes[x.0]);
                    let (n, f) = (nm.shape[0], nx.shape[1]);
                    if nx.requires_grad {
                        // dX_block = M^T * dY_block
                        let mut mt = vec![0.0; n * n];
                        for i in 0..n {
                            for j in 0..n {
                                mt[j * n + i] = nm.value[i * n + j];
                            }
                        }
                        let dx: Vec<f64> = g.chunks(n * f).flat_map(|blk| gemm(&mt, blk, n, n, f)).collect();
                        send(x, dx);
                    }
                    if nm.requires_grad {
                        // dM = sum over blocks of dY_block * X_block^T
                        let mut dm = vec![0.0; n * n];
                        for (gb, xb) in g.chunks(n * f).zip(nx.value.chunks(n * f)) {
                            for i in 0..n {
                                for j in 0..n {
                                    dm[i * n + j] += (0..f).map(|c| gb[i * f + c] * xb[j * f + c]).sum::<f64>();
                                }
                            }
                        }
                        send(mat, dm);
                    }
                }
                Op::Sum(a) => {
                    let n = nodes[a.0].value.len();
                    send(a, vec![g[0]; n]);
                }
                Op::Mse(pred, target) => {
                    let (p, t) = (&nodes[pred.0].value, &nodes[target.0].value);
                    let scale = 2.0 * g[0] / p.len() as f64;
                    let d = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
                    send(pred, d);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn reduce_broadcast(g: &[f64], target_len: usize, sign: f64) -> Vec<f64> {
    if target_len == g.len() {
        g.iter().map(|x| sign * x).collect()
    } else {
        vec![sign * g.iter().sum::<f64>()]
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
