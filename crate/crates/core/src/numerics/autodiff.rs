//! Tape-based reverse-mode automatic differentiation over batched matrices.
//!
//! A [`Graph`] records every operation as a [`Node`] in creation order, so
//! the node list is already a topological order and [`Graph::backward`] is a
//! single reverse sweep. Recurrences unrolled over several slots are just
//! longer tapes, which gives backpropagation through time for free.
//!
//! Tensors are two-dimensional `rows × cols` with rows indexing the batch.
//! Parameters enter as [`Graph::leaf`] nodes and data as
//! [`Graph::constant`] nodes; only nodes downstream of a leaf carry
//! gradients.

use super::tensor::{gemm, RealTensor};
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation record of a node.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Constant,
    /// `x · wᵀ + b` with `w` stored as `out × in`.
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    Add(Var, Var),
    /// Adds a `1 × cols` row to every row.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    /// Forward `sign(u)` (with `sign(0) = +1`); backward passes the
    /// gradient where `|u| <= 1` and blocks it elsewhere.
    SignSte(Var),
    /// `clamp(u, -1, 1)`: the continuous function whose derivative is the
    /// straight-through rule above.
    HardTanh(Var),
    SliceCols { x: Var, start: usize, len: usize },
    /// Sum of all squared entries, as a `1 × 1` tensor.
    SumSquares(Var),
    /// Per-row `c2r(vec(h x))` for a real-stacked column `h` (`2M` wide) and
    /// a shared real-stacked row `x` (`2L` wide).
    ComplexOuter { h: Var, x: Var, antennas: usize, len: usize },
    /// Per-row `c2r(hᴴ X)` for a real-stacked column `h` and a shared
    /// real-stacked `M × L` matrix `X`.
    ComplexHermProduct { h: Var, x: Var, antennas: usize, len: usize },
}

impl Op {
    pub fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf | Op::Constant => vec![],
            Op::Linear { x, w, b } => {
                let mut v = vec![x, w];
                v.extend(b);
                v
            }
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                vec![a, b]
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::SignSte(a)
            | Op::HardTanh(a)
            | Op::SumSquares(a) => vec![a],
            Op::SliceCols { x, .. } => vec![x],
            Op::ComplexOuter { h, x, .. } | Op::ComplexHermProduct { h, x, .. } => vec![h, x],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub value: RealTensor,
    pub op: Op,
    pub requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf and constant of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<RealTensor>>,
}

impl Gradients {
    /// Gradient for a leaf or constant node; `None` for intermediate nodes.
    pub fn wrt(&self, v: Var) -> Option<&RealTensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::wrt`] but takes ownership.
    pub fn take(&mut self, v: Var) -> Option<RealTensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape2(t: &RealTensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &RealTensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    /// Every node that takes `v` as a direct input.
    pub fn consumers(&self, v: Var) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].op.parents().contains(&v))
            .map(Var)
            .collect()
    }

    fn push(&mut self, value: RealTensor, op: Op) -> Var {
        let requires_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            ref other => other.parents().iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable input. Tensors of rank < 2 are viewed as single rows.
    pub fn leaf(&mut self, value: RealTensor) -> Var {
        let value = as_matrix(value);
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: RealTensor) -> Var {
        let value = as_matrix(value);
        self.push(value, Op::Constant)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, din) = shape2(self.value(x));
        let (dout, win) = shape2(self.value(w));
        if din != win {
            return Err(dim_err("linear (input width)", win, din));
        }
        let mut out = vec![0.0; n * dout];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != dout {
                return Err(dim_err("linear (bias width)", dout, bias.len()));
            }
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(bias.data());
            }
        }
        let beta = if b.is_some() { 1.0 } else { 0.0 };
        gemm(
            n,
            din,
            dout,
            1.0,
            self.value(x).data(),
            (din, 1),
            self.value(w).data(),
            (1, din),
            beta,
            &mut out,
        );
        Ok(self.push(RealTensor::from_parts(vec![n, dout], out), Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, context: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(dim_err(context, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = RealTensor::from_parts(va.shape().to_vec(), data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (n, c) = shape2(self.value(a));
        let r = self.value(row);
        if r.len() != c {
            return Err(dim_err("add_row", c, r.len()));
        }
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(r.data()) {
                *v += b;
            }
        }
        Ok(self.push(RealTensor::from_parts(vec![n, c], data), Op::AddRow(a, row)))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sign_ste(&mut self, a: Var) -> Var {
        self.unary(a, Op::SignSte(a), |x| if x >= 0.0 { 1.0 } else { -1.0 })
    }

    pub fn hard_tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::HardTanh(a), |x| x.clamp(-1.0, 1.0))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, c) = shape2(self.value(x));
        if start + len > c {
            return Err(dim_err("slice_cols", format!("<= {c}"), start + len));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&src[r * c + start..r * c + start + len]);
        }
        Ok(self.push(RealTensor::from_parts(vec![n, len], data), Op::SliceCols { x, start, len }))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).sum_squares();
        self.push(RealTensor::scalar(s), Op::SumSquares(a))
    }

    pub fn complex_outer(&mut self, h: Var, x: Var, antennas: usize, len: usize) -> Result<Var> {
        let (n, hw) = shape2(self.value(h));
        if hw != 2 * antennas {
            return Err(dim_err("complex_outer (channel)", 2 * antennas, hw));
        }
        if self.value(x).len() != 2 * len {
            return Err(dim_err("complex_outer (pilot)", 2 * len, self.value(x).len()));
        }
        let hv = self.value(h).data();
        let xv = self.value(x).data();
        let ml = antennas * len;
        let mut out = vec![0.0; n * 2 * ml];
        for s in 0..n {
            let hr = &hv[s * hw..s * hw + antennas];
            let hi = &hv[s * hw + antennas..(s + 1) * hw];
            let row = &mut out[s * 2 * ml..(s + 1) * 2 * ml];
            for l in 0..len {
                let (xr, xi) = (xv[l], xv[len + l]);
                for i in 0..antennas {
                    let idx = l * antennas + i;
                    row[idx] = hr[i] * xr - hi[i] * xi;
                    row[ml + idx] = hr[i] * xi + hi[i] * xr;
                }
            }
        }
        Ok(self.push(
            RealTensor::from_parts(vec![n, 2 * ml], out),
            Op::ComplexOuter { h, x, antennas, len },
        ))
    }

    pub fn complex_herm_product(&mut self, h: Var, x: Var, antennas: usize, len: usize) -> Result<Var> {
        let (n, hw) = shape2(self.value(h));
        if hw != 2 * antennas {
            return Err(dim_err("complex_herm_product (channel)", 2 * antennas, hw));
        }
        let ml = antennas * len;
        if self.value(x).len() != 2 * ml {
            return Err(dim_err("complex_herm_product (pilot)", 2 * ml, self.value(x).len()));
        }
        let hv = self.value(h).data();
        let xv = self.value(x).data();
        let mut out = vec![0.0; n * 2 * len];
        for s in 0..n {
            let hr = &hv[s * hw..s * hw + antennas];
            let hi = &hv[s * hw + antennas..(s + 1) * hw];
            for l in 0..len {
                let xr = &xv[l * antennas..(l + 1) * antennas];
                let xi = &xv[ml + l * antennas..ml + (l + 1) * antennas];
                let mut re = 0.0;
                let mut im = 0.0;
                for i in 0..antennas {
                    re += hr[i] * xr[i] + hi[i] * xi[i];
                    im += hr[i] * xi[i] - hi[i] * xr[i];
                }
                out[s * 2 * len + l] = re;
                out[s * 2 * len + len + l] = im;
            }
        }
        Ok(self.push(
            RealTensor::from_parts(vec![n, 2 * len], out),
            Op::ComplexHermProduct { h, x, antennas, len },
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match node.op {
                Op::Leaf | Op::Constant => Some(RealTensor::from_parts(
                    node.value.shape().to_vec(),
                    g.unwrap_or_else(|| vec![0.0; node.value.len()]),
                )),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        // Lazily zero-initialized accumulation buffer for a parent.
        fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::Linear { x, w, b } => {
                let (n, din) = shape2(val(x));
                let dout = val(w).rows();
                if wants(x) {
                    let dx = slot(grads, x, n * din);
                    gemm(n, dout, din, 1.0, g, (dout, 1), val(w).data(), (din, 1), 1.0, dx);
                }
                if wants(w) {
                    let dw = slot(grads, w, dout * din);
                    gemm(dout, n, din, 1.0, g, (1, dout), val(x).data(), (din, 1), 1.0, dw);
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    let db = slot(grads, b, dout);
                    for row in g.chunks(dout) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (n, k) = shape2(val(a));
                let m = val(b).cols();
                if wants(a) {
                    let da = slot(grads, a, n * k);
                    gemm(n, m, k, 1.0, g, (m, 1), val(b).data(), (1, m), 1.0, da);
                }
                if wants(b) {
                    let db = slot(grads, b, k * m);
                    gemm(k, n, m, 1.0, val(a).data(), (1, k), g, (m, 1), 1.0, db);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(a) {
                    for (d, r) in slot(grads, a, g.len()).iter_mut().zip(g) {
                        *d += r;
                    }
                }
                if wants(b) {
                    for (d, r) in slot(grads, b, g.len()).iter_mut().zip(g) {
                        *d += sign * r;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if wants(a) {
                    for (d, r) in slot(grads, a, g.len()).iter_mut().zip(g) {
                        *d += r;
                    }
                }
                if wants(row) {
                    let c = val(row).len();
                    let dr = slot(grads, row, c);
                    for chunk in g.chunks(c) {
                        for (d, r) in dr.iter_mut().zip(chunk) {
                            *d += r;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let vb = val(b).data();
                    for ((d, r), y) in slot(grads, a, g.len()).iter_mut().zip(g).zip(vb) {
                        *d += r * y;
                    }
                }
                if wants(b) {
                    let va = val(a).data();
                    for ((d, r), x) in slot(grads, b, g.len()).iter_mut().zip(g).zip(va) {
                        *d += r * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                for (d, r) in slot(grads, a, g.len()).iter_mut().zip(g) {
                    *d += c * r;
                }
            }
            Op::Relu(a) => {
                let y = node.value.data();
                for ((d, r), y) in slot(grads, a, g.len()).iter_mut().zip(g).zip(y) {
                    if *y > 0.0 {
                        *d += r;
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                for ((d, r), y) in slot(grads, a, g.len()).iter_mut().zip(g).zip(y) {
                    *d += r * (1.0 - y * y);
                }
            }
            Op::SignSte(a) | Op::HardTanh(a) => {
                let u = val(a).data();
                for ((d, r), u) in slot(grads, a, g.len()).iter_mut().zip(g).zip(u) {
                    if u.abs() <= 1.0 {
                        *d += r;
                    }
                }
            }
            Op::SliceCols { x, start, len } => {
                let (n, c) = shape2(val(x));
                let dx = slot(grads, x, n * c);
                for r in 0..n {
                    for j in 0..len {
                        dx[r * c + start + j] += g[r * len + j];
                    }
                }
            }
            Op::SumSquares(a) => {
                let x = val(a).data();
                for (d, v) in slot(grads, a, x.len()).iter_mut().zip(x) {
                    *d += 2.0 * g[0] * v;
                }
            }
            Op::ComplexOuter { h, x, antennas, len } => {
                let (n, hw) = shape2(val(h));
                let hv = val(h).data();
                let xv = val(x).data();
                let ml = antennas * len;
                if wants(h) {
                    let dh = slot(grads, h, n * hw);
                    for s in 0..n {
                        let gr = &g[s * 2 * ml..(s + 1) * 2 * ml];
                        for l in 0..len {
                            let (xr, xi) = (xv[l], xv[len + l]);
                            for i in 0..antennas {
                                let (g_re, g_im) = (gr[l * antennas + i], gr[ml + l * antennas + i]);
                                dh[s * hw + i] += g_re * xr + g_im * xi;
                                dh[s * hw + antennas + i] += -g_re * xi + g_im * xr;
                            }
                        }
                    }
                }
                if wants(x) {
                    let dx = slot(grads, x, 2 * len);
                    for s in 0..n {
                        let gr = &g[s * 2 * ml..(s + 1) * 2 * ml];
                        for l in 0..len {
                            for i in 0..antennas {
                                let (g_re, g_im) = (gr[l * antennas + i], gr[ml + l * antennas + i]);
                                let (hr, hi) = (hv[s * hw + i], hv[s * hw + antennas + i]);
                                dx[l] += g_re * hr + g_im * hi;
                                dx[len + l] += -g_re * hi + g_im * hr;
                            }
                        }
                    }
                }
            }
            Op::ComplexHermProduct { h, x, antennas, len } => {
                let (n, hw) = shape2(val(h));
                let hv = val(h).data();
                let xv = val(x).data();
                let ml = antennas * len;
                if wants(h) {
                    let dh = slot(grads, h, n * hw);
                    for s in 0..n {
                        for l in 0..len {
                            let (g_re, g_im) = (g[s * 2 * len + l], g[s * 2 * len + len + l]);
                            for i in 0..antennas {
                                let (xr, xi) = (xv[l * antennas + i], xv[ml + l * antennas + i]);
                                dh[s * hw + i] += g_re * xr + g_im * xi;
                                dh[s * hw + antennas + i] += g_re * xi - g_im * xr;
                            }
                        }
                    }
                }
                if wants(x) {
                    let dx = slot(grads, x, 2 * ml);
                    for s in 0..n {
                        for l in 0..len {
                            let (g_re, g_im) = (g[s * 2 * len + l], g[s * 2 * len + len + l]);
                            for i in 0..antennas {
                                let (hr, hi) = (hv[s * hw + i], hv[s * hw + antennas + i]);
                                dx[l * antennas + i] += g_re * hr - g_im * hi;
                                dx[ml + l * antennas + i] += g_re * hi + g_im * hr;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn as_matrix(t: RealTensor) -> RealTensor {
    if t.shape().len() == 2 {
        t
    } else {
        let (r, c) = (t.rows(), t.cols());
        RealTensor::from_parts(vec![r, c], t.into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(RealTensor::row(vec![1.0, -2.0]));
        let loss = g.sum_squares(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn constant_and_disconnected_leaves_get_zero() {
        let mut g = Graph::new();
        let c = g.constant(RealTensor::row(vec![3.0, 4.0]));
        let unused = g.leaf(RealTensor::row(vec![1.0]));
        let w = g.leaf(RealTensor::row(vec![1.0, 1.0]));
        let p = g.mul(c, w).unwrap();
        let loss = g.sum_squares(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(c).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.wrt(unused).unwrap().data(), &[0.0]);
        assert_eq!(grads.wrt(w).unwrap().data(), &[18.0, 32.0]);
        assert!(grads.wrt(p).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let w = g.leaf(RealTensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.leaf(RealTensor::zeros(&[2, 3]));
        let b = g.leaf(RealTensor::zeros(&[3, 2]));
        assert!(g.add(a, b).is_err());
        assert!(g.linear(a, b, None).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
    }

    #[test]
    fn ste_forward_and_mask() {
        let mut g = Graph::new();
        let u = g.leaf(RealTensor::row(vec![-2.0, -0.5, 0.0, 0.5, 3.0]));
        let s = g.sign_ste(u);
        assert_eq!(g.value(s).data(), &[-1.0, -1.0, 1.0, 1.0, 1.0]);
        let loss = g.sum_squares(s);
        let grads = g.backward(loss).unwrap();
        // d(s^2)/ds = 2s, masked to |u| <= 1
        assert_eq!(grads.wrt(u).unwrap().data(), &[0.0, -2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn relu_kink_gradient_is_zero() {
        let mut g = Graph::new();
        let u = g.leaf(RealTensor::row(vec![0.0, 1.0]));
        let r = g.relu(u);
        let loss = g.sum_squares(r);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(u).unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn recurrence_accumulates_through_time() {
        // s_t = w * s_{t-1}, s_0 = 1, loss = s_3^2 = w^6 -> d/dw = 6 w^5
        let mut g = Graph::new();
        let w = g.leaf(RealTensor::row(vec![1.1]));
        let mut s = g.constant(RealTensor::row(vec![1.0]));
        for _ in 0..3 {
            s = g.mul(w, s).unwrap();
        }
        let loss = g.sum_squares(s);
        let grads = g.backward(loss).unwrap();
        let want = 6.0 * 1.1f64.powi(5);
        assert!((grads.wrt(w).unwrap().data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn complex_ops_match_complex_arithmetic() {
        use crate::numerics::{c2r, ComplexMatrix};
        let mut rng = Rng::new(3);
        let (m, l) = (3, 2);
        let h = ComplexMatrix::from_fn(m, 1, |_, _| rng.complex_normal(1.0));
        let x = ComplexMatrix::from_fn(1, l, |_, _| rng.complex_normal(1.0));
        let xx = ComplexMatrix::from_fn(m, l, |_, _| rng.complex_normal(1.0));

        let mut g = Graph::new();
        let hv = g.constant(c2r(&h));
        let xv = g.constant(c2r(&x));
        let xxv = g.constant(c2r(&xx));
        let outer = g.complex_outer(hv, xv, m, l).unwrap();
        let herm = g.complex_herm_product(hv, xxv, m, l).unwrap();

        let want_outer = c2r(&h.matmul(&x).unwrap());
        let want_herm = c2r(&h.conj_transpose().matmul(&xx).unwrap());
        for (a, b) in g.value(outer).data().iter().zip(want_outer.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in g.value(herm).data().iter().zip(want_herm.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
