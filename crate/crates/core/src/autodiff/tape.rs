//! Arena-backed computation graph with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the node index is a valid
//! topological order and the backward sweep is a single reverse pass.

use crate::autodiff::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    MaxSet(Vec<Var>),
    MeanSet(Vec<Var>),
    LseSet(Vec<Var>),
    Scale(Var, T),
    AddConst(Var),
    ScaleBy(Var, Var),
    AddRow(Var, Var),
    Reciprocal(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Softplus(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    Pick(Var, Vec<usize>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward computation for one backward sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    swept: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node on the tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zero-filled to `shape` when unreachable.
    pub fn get_or_zero(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            swept: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "subtract", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "multiply", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::usage("concat of an empty set"))?;
        let lead = self.value(first).shape()[..self.shape(first).len() - 1].to_vec();
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", self.shape(first), s));
            }
            cols += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(cols);
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(T::zero()));
        self.push(v, Op::Relu(a))
    }

    fn check_set(&self, op: &'static str, set: &[Var]) -> Result<()> {
        let first = *set
            .first()
            .ok_or_else(|| Error::usage(format!("{op} over an empty set")))?;
        for &v in &set[1..] {
            if self.shape(v) != self.shape(first) {
                return Err(Error::shape(op, self.shape(first), self.shape(v)));
            }
        }
        Ok(())
    }

    fn reduce_set(&self, set: &[Var], f: impl Fn(&[T]) -> T) -> Tensor<T> {
        let base = self.value(set[0]);
        let mut buf = vec![T::zero(); set.len()];
        let data = (0..base.len())
            .map(|e| {
                for (slot, &v) in buf.iter_mut().zip(set) {
                    *slot = self.value(v).data()[e];
                }
                f(&buf)
            })
            .collect();
        Tensor::new(base.shape().to_vec(), data).expect("shape preserved")
    }

    /// Elementwise maximum across same-shaped tensors.
    pub fn max_set(&mut self, set: &[Var]) -> Result<Var> {
        self.check_set("max-reduce", set)?;
        let v = self.reduce_set(set, |xs| {
            xs.iter().copied().fold(T::neg_infinity(), T::max)
        });
        Ok(self.push(v, Op::MaxSet(set.to_vec())))
    }

    /// Elementwise mean across same-shaped tensors.
    pub fn mean_set(&mut self, set: &[Var]) -> Result<Var> {
        self.check_set("mean-reduce", set)?;
        let n = T::of(set.len() as f64);
        let v = self.reduce_set(set, |xs| xs.iter().copied().sum::<T>() / n);
        Ok(self.push(v, Op::MeanSet(set.to_vec())))
    }

    /// Elementwise log-sum-exp across same-shaped tensors.
    pub fn lse_set(&mut self, set: &[Var]) -> Result<Var> {
        self.check_set("lse-reduce", set)?;
        let v = self.reduce_set(set, tensor::log_sum_exp);
        Ok(self.push(v, Op::LseSet(set.to_vec())))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// Adds a constant.
    pub fn add_const(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    /// Multiplies every element of `a` by the one-element tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("scale-by", self.shape(a), self.shape(s)));
        }
        let c = self.value(s).data()[0];
        let v = self.value(a).map(|x| x * c);
        Ok(self.push(v, Op::ScaleBy(a, s)))
    }

    /// Adds the row vector `r` (`cols` elements) to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(r));
        if rv.len() != av.cols() {
            return Err(Error::shape("add-row", av.shape(), rv.shape()));
        }
        let c = av.cols();
        let mut out = av.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x = *x + rv.data()[i % c];
        }
        Ok(self.push(out, Op::AddRow(a, r)))
    }

    pub fn reciprocal(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::one() / x);
        self.push(v, Op::Reciprocal(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = tensor::softmax(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = tensor::log_softmax(self.value(a));
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / T::of(t.len() as f64));
        self.push(v, Op::Mean(a))
    }

    /// Selects column `cols[r]` from each row `r`, giving a `[rows]` tensor.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if cols.len() != t.rows() || cols.iter().any(|&c| c >= t.cols()) {
            return Err(Error::shape("pick", t.shape(), &[cols.len()]));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| t.at(r, c)).collect();
        let v = Tensor::vector(data)?;
        Ok(self.push(v, Op::Pick(a, cols.to_vec())))
    }

    /// Reverse sweep from a one-element `loss`. A tape can be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.swept {
            return Err(Error::usage(
                "backward already ran on this tape; record a fresh tape",
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.swept = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, contrib: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&contrib),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, "mul-grad", |x, y| x * y).unwrap());
                acc(*b, g.zip_map(av, "mul-grad", |x, y| x * y).unwrap());
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, tensor::matmul_nt(g, bv));
                acc(*b, tensor::matmul_tn(av, g));
            }
            Op::Concat(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let c = pv.cols();
                    let mut data = Vec::with_capacity(pv.len());
                    for r in 0..rows {
                        data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                    }
                    acc(p, Tensor::new(pv.shape().to_vec(), data).unwrap());
                    offset += c;
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                acc(
                    *a,
                    g.zip_map(av, "relu-grad", |gv, x| if x > T::zero() { gv } else { T::zero() })
                        .unwrap(),
                );
            }
            Op::MaxSet(set) => {
                // ties route the gradient to the first maximizer
                let mut parts: Vec<Tensor<T>> =
                    set.iter().map(|&v| Tensor::zeros(self.shape(v))).collect();
                for e in 0..out.len() {
                    let target = out.data()[e];
                    if let Some(k) = set.iter().position(|&v| self.value(v).data()[e] == target) {
                        parts[k].data_mut()[e] = g.data()[e];
                    }
                }
                for (&v, p) in set.iter().zip(parts) {
                    acc(v, p);
                }
            }
            Op::MeanSet(set) => {
                let inv = T::one() / T::of(set.len() as f64);
                for &v in set {
                    acc(v, g.map(|x| x * inv));
                }
            }
            Op::LseSet(set) => {
                for &v in set {
                    let w = self
                        .value(v)
                        .zip_map(out, "lse-grad", |x, l| (x - l).exp())
                        .unwrap();
                    acc(v, w.zip_map(g, "lse-grad", |w, gv| w * gv).unwrap());
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                acc(*a, g.map(|x| x * c));
            }
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::ScaleBy(a, s) => {
                let c = self.value(*s).data()[0];
                let av = self.value(*a);
                let ds: T = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).sum();
                acc(*a, g.map(|x| x * c));
                acc(*s, Tensor::full(self.shape(*s), ds));
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                let rv = self.value(*r);
                let c = rv.len();
                let mut col = vec![T::zero(); c];
                for (i, &x) in g.data().iter().enumerate() {
                    col[i % c] = col[i % c] + x;
                }
                acc(*r, Tensor::new(rv.shape().to_vec(), col).unwrap());
            }
            Op::Reciprocal(a) => {
                acc(*a, g.zip_map(out, "reciprocal-grad", |gv, y| -gv * y * y).unwrap());
            }
            Op::Softmax(a) => {
                let c = out.cols();
                let mut data = Vec::with_capacity(out.len());
                for (yr, gr) in out.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: T = yr.iter().zip(gr).map(|(&y, &gv)| y * gv).sum();
                    data.extend(yr.iter().zip(gr).map(|(&y, &gv)| y * (gv - dot)));
                }
                acc(*a, Tensor::new(out.shape().to_vec(), data).unwrap());
            }
            Op::LogSoftmax(a) => {
                let c = out.cols();
                let mut data = Vec::with_capacity(out.len());
                for (lr, gr) in out.data().chunks(c).zip(g.data().chunks(c)) {
                    let total: T = gr.iter().copied().sum();
                    data.extend(lr.iter().zip(gr).map(|(&l, &gv)| gv - l.exp() * total));
                }
                acc(*a, Tensor::new(out.shape().to_vec(), data).unwrap());
            }
            Op::Softplus(a) => {
                let av = self.value(*a);
                acc(
                    *a,
                    g.zip_map(av, "softplus-grad", |gv, x| gv * tensor::sigmoid(x))
                        .unwrap(),
                );
            }
            Op::Sigmoid(a) => {
                acc(
                    *a,
                    g.zip_map(out, "sigmoid-grad", |gv, y| gv * y * (T::one() - y))
                        .unwrap(),
                );
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                acc(*a, Tensor::full(self.shape(*a), gv));
            }
            Op::Mean(a) => {
                let n = T::of(self.value(*a).len() as f64);
                let gv = g.data()[0] / n;
                acc(*a, Tensor::full(self.shape(*a), gv));
            }
            Op::Pick(a, cols) => {
                let av = self.value(*a);
                let mut z = Tensor::zeros(av.shape());
                let c = av.cols();
                for (r, &col) in cols.iter().enumerate() {
                    z.data_mut()[r * c + col] = g.data()[r];
                }
                acc(*a, z);
            }
        }
    }
}
