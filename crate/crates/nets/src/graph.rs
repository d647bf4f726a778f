//! Tape-based reverse-mode differentiation over `[c, h, w]` tensors.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters live
//! in a [`ParamStore`] and are referenced by id, so the tape never copies
//! weights. [`Graph::backward`] walks the tape once in reverse.

use vad_core::{Error, Result};

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Conv {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        k: usize,
        /// Unfolded input for 3x3 kernels; 1x1 kernels reuse the input.
        cols: Option<Vec<f64>>,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    MaxPool {
        x: NodeId,
        arg: Vec<u32>,
    },
    AvgPool(NodeId),
    Upsample(NodeId),
    Concat(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddScalar(NodeId),
    Max(NodeId, NodeId),
    Gap(NodeId),
    Linear {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    Softmax(NodeId),
    PatchMse {
        pred: NodeId,
        target: Tensor,
        rows: (usize, usize),
        cols: (usize, usize),
        count: f64,
    },
    CrossEntropy {
        pred: NodeId,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every parameter and node.
pub struct Gradients {
    pub params: ParamStore,
    nodes: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> &Tensor {
        self.params.get(id)
    }

    /// Gradient with respect to a node, `None` if the loss does not depend on it.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].as_ref()
    }
}

/// Floor on probabilities inside the log of the cross-entropy head.
const PROB_FLOOR: f64 = 1e-12;

/// `c = a·b + beta·c` with optional transposes on row-major operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: slice lengths match the strides and extents asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col3(x: &Tensor) -> Vec<f64> {
    let (c, h, w) = (x.c, x.h, x.w);
    let p = h * w;
    let mut cols = vec![0.0; c * 9 * p];
    for ci in 0..c {
        let src = &x.data[ci * p..(ci + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * p..][..p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for xx in x0..x1 {
                        row[y * w + xx] = src[sy * w + xx + kx - 1];
                    }
                }
            }
        }
    }
    cols
}

fn col2im3(cols: &[f64], c: usize, h: usize, w: usize) -> Tensor {
    let p = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * p..(ci + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * p..][..p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let (x0, x1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for xx in x0..x1 {
                        dst[sy * w + xx + kx - 1] += row[y * w + xx];
                    }
                }
            }
        }
    }
    out
}

/// Index into `b` for element `(c, y, x)` of a tensor broadcast to `b`'s
/// singleton dimensions.
#[inline]
fn bidx(b: &Tensor, c: usize, y: usize, x: usize) -> usize {
    let c = if b.c == 1 { 0 } else { c };
    let y = if b.h == 1 { 0 } else { y };
    let x = if b.w == 1 { 0 } else { x };
    (c * b.h + y) * b.w + x
}

fn broadcastable(a: &Tensor, b: &Tensor) -> bool {
    (b.c == a.c || b.c == 1) && (b.h == a.h || b.h == 1) && (b.w == a.w || b.w == 1)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every discrete choice made by the forward pass: ReLU
    /// activity, pooling winners, elementwise-max branches and the selected
    /// loss patch. Two passes with equal signatures lie on the same smooth
    /// piece of the network function.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in &self.value(*x).data {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool { arg, .. } => arg.hash(&mut h),
                Op::Max(a, b) => {
                    for (x, y) in self.value(*a).data.iter().zip(&self.value(*b).data) {
                        (x >= y).hash(&mut h);
                    }
                }
                Op::PatchMse { rows, cols, .. } => (rows, cols).hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    /// Same-padded convolution with a square odd kernel of side 1 or 3.
    /// Weights are `[out, in, k*k]`, bias `[out, 1, 1]`.
    pub fn conv(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let (wt, bt) = (self.params.get(w), self.params.get(b));
        let xv = self.value(x);
        let k = match wt.w {
            1 => 1,
            9 => 3,
            n => return Err(Error::contract(format!("unsupported kernel area {n}"))),
        };
        if wt.h != xv.c || bt.c != wt.c {
            return Err(Error::contract(format!(
                "conv expects {} input channels, got {}",
                wt.h, xv.c
            )));
        }
        let (o, p) = (wt.c, xv.plane());
        let mut out = Tensor::zeros(o, xv.h, xv.w);
        for (oc, row) in out.data.chunks_exact_mut(p).enumerate() {
            row.fill(bt.data[oc]);
        }
        let cols = if k == 3 { Some(im2col3(xv)) } else { None };
        let kk = wt.h * wt.w;
        gemm(
            o,
            kk,
            p,
            &wt.data,
            false,
            cols.as_deref().unwrap_or(&xv.data),
            false,
            1.0,
            &mut out.data,
        );
        Ok(self.push(out, Op::Conv { x, w, b, k, cols }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|a| *a = a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        v.data
            .iter_mut()
            .for_each(|a| *a = 1.0 / (1.0 + (-*a).exp()));
        self.push(v, Op::Sigmoid(x))
    }

    fn check_even(&self, x: NodeId, what: &str) -> Result<()> {
        let v = self.value(x);
        if !v.h.is_multiple_of(2) || !v.w.is_multiple_of(2) {
            return Err(Error::contract(format!(
                "{what} needs even spatial size, got {}x{}",
                v.h, v.w
            )));
        }
        Ok(())
    }

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_even(x, "max pooling")?;
        let xv = self.value(x);
        let (c, h, w) = (xv.c, xv.h / 2, xv.w / 2);
        let mut out = Tensor::zeros(c, h, w);
        let mut arg = vec![0u32; c * h * w];
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = (ci * xv.h + 2 * y + dy) * xv.w + 2 * xx + dx;
                        if best == usize::MAX || xv.data[i] > xv.data[best] {
                            best = i;
                        }
                    }
                    let o = (ci * h + y) * w + xx;
                    out.data[o] = xv.data[best];
                    arg[o] = best as u32;
                }
            }
        }
        Ok(self.push(out, Op::MaxPool { x, arg }))
    }

    /// 2x2 mean; equals bilinear halving with half-pixel centres.
    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_even(x, "average pooling")?;
        let xv = self.value(x);
        let (c, h, w) = (xv.c, xv.h / 2, xv.w / 2);
        let mut out = Tensor::zeros(c, h, w);
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let s = xv.at(ci, 2 * y, 2 * xx)
                        + xv.at(ci, 2 * y, 2 * xx + 1)
                        + xv.at(ci, 2 * y + 1, 2 * xx)
                        + xv.at(ci, 2 * y + 1, 2 * xx + 1);
                    out.data[(ci * h + y) * w + xx] = 0.25 * s;
                }
            }
        }
        Ok(self.push(out, Op::AvgPool(x)))
    }

    /// Nearest-neighbour doubling of both spatial sides.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (c, h, w) = (xv.c, xv.h * 2, xv.w * 2);
        let mut out = Tensor::zeros(c, h, w);
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    out.data[(ci * h + y) * w + xx] = xv.at(ci, y / 2, xx / 2);
                }
            }
        }
        self.push(out, Op::Upsample(x))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = Tensor::stack(&[self.value(a), self.value(b)])?;
        Ok(self.push(v, Op::Concat(a, b)))
    }

    fn check_broadcast(&self, a: NodeId, b: NodeId) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if !broadcastable(av, bv) {
            return Err(Error::contract(format!(
                "cannot broadcast {:?} onto {:?}",
                bv.shape(),
                av.shape()
            )));
        }
        Ok(())
    }

    /// Elementwise product; `b` may have singleton dimensions.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_broadcast(a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.clone();
        for c in 0..av.c {
            for y in 0..av.h {
                for x in 0..av.w {
                    out.data[(c * av.h + y) * av.w + x] *= bv.data[bidx(bv, c, y, x)];
                }
            }
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Elementwise sum; `b` may have singleton dimensions.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_broadcast(a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = av.clone();
        for c in 0..av.c {
            for y in 0..av.h {
                for x in 0..av.w {
                    out.data[(c * av.h + y) * av.w + x] += bv.data[bidx(bv, c, y, x)];
                }
            }
        }
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_scalar(&mut self, x: NodeId, s: f64) -> NodeId {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|a| *a += s);
        self.push(v, Op::AddScalar(x))
    }

    /// Elementwise maximum of two same-shaped tensors; ties route to `a`.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::contract("max needs equal shapes"));
        }
        let data = av
            .data
            .iter()
            .zip(&bv.data)
            .map(|(x, y)| x.max(*y))
            .collect();
        let v = Tensor::new(av.c, av.h, av.w, data)?;
        Ok(self.push(v, Op::Max(a, b)))
    }

    /// Global average pool to `[c, 1, 1]`.
    pub fn gap(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let p = xv.plane() as f64;
        let data = xv
            .data
            .chunks_exact(xv.plane())
            .map(|ch| ch.iter().sum::<f64>() / p)
            .collect();
        self.push(
            Tensor {
                c: xv.c,
                h: 1,
                w: 1,
                data,
            },
            Op::Gap(x),
        )
    }

    /// Fully connected layer on a `[c, 1, 1]` vector; weights `[out, c, 1]`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let (wt, bt, xv) = (self.params.get(w), self.params.get(b), self.value(x));
        if xv.plane() != 1 || wt.h != xv.c || wt.w != 1 || bt.c != wt.c {
            return Err(Error::contract("linear layer shape mismatch"));
        }
        let mut out = bt.clone();
        gemm(
            wt.c,
            wt.h,
            1,
            &wt.data,
            false,
            &xv.data,
            false,
            1.0,
            &mut out.data,
        );
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    /// Softmax over channels at every pixel.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (c, p) = (xv.c, xv.plane());
        let mut out = xv.clone();
        for i in 0..p {
            let m = (0..c)
                .map(|k| xv.data[k * p + i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..c {
                let e = (xv.data[k * p + i] - m).exp();
                out.data[k * p + i] = e;
                z += e;
            }
            for k in 0..c {
                out.data[k * p + i] /= z;
            }
        }
        self.push(out, Op::Softmax(x))
    }

    /// Splits the plane into `grid x grid` equal patches and returns the
    /// largest per-patch mean squared error.
    pub fn patch_mse(&mut self, pred: NodeId, target: &Tensor, grid: usize) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::contract(format!(
                "prediction {:?} and target {:?} differ",
                pv.shape(),
                target.shape()
            )));
        }
        let (per_patch, best) = patch_errors(pv, target, grid)?;
        let (by, bx) = (best / grid, best % grid);
        let (ph, pw) = (pv.h / grid, pv.w / grid);
        let count = (pv.c * ph * pw) as f64;
        let loss = per_patch[best];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::PatchMse {
                pred,
                target: target.clone(),
                rows: (by * ph, (by + 1) * ph),
                cols: (bx * pw, (bx + 1) * pw),
                count,
            },
        ))
    }

    /// Mean over pixels of `-sum_k target_k * ln(pred_k)` for probability maps.
    pub fn cross_entropy(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::contract("prediction and target differ in shape"));
        }
        let s: f64 = pv
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| {
                if *t == 0.0 {
                    0.0
                } else {
                    -t * p.max(PROB_FLOOR).ln()
                }
            })
            .sum();
        let loss = s / pv.plane() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// Differentiates the scalar node `loss` with respect to everything
    /// recorded before it.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        let mut pg = self.params.zeros_like();
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = self.value(loss).zeros_like();
        g[loss.0] = Some(Tensor {
            data: vec![1.0; seed.len()],
            ..seed
        });

        fn acc<'g>(g: &'g mut [Option<Tensor>], id: NodeId, like: &Tensor) -> &'g mut Tensor {
            g[id.0].get_or_insert_with(|| like.zeros_like())
        }

        for i in (0..=loss.0).rev() {
            let Some(gy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, w, b, k, cols } => {
                    let xv = self.value(*x);
                    let wt = self.params.get(*w);
                    let (o, p, kk) = (wt.c, xv.plane(), wt.h * wt.w);
                    let bg = pg.get_mut(*b);
                    for (oc, row) in gy.data.chunks_exact(p).enumerate() {
                        bg.data[oc] += row.iter().sum::<f64>();
                    }
                    let src = cols.as_deref().unwrap_or(&xv.data);
                    gemm(
                        o,
                        p,
                        kk,
                        &gy.data,
                        false,
                        src,
                        true,
                        1.0,
                        &mut pg.get_mut(*w).data,
                    );
                    let mut dcols = vec![0.0; kk * p];
                    gemm(kk, o, p, &wt.data, true, &gy.data, false, 0.0, &mut dcols);
                    let dx = if *k == 3 {
                        col2im3(&dcols, xv.c, xv.h, xv.w)
                    } else {
                        Tensor {
                            c: xv.c,
                            h: xv.h,
                            w: xv.w,
                            data: dcols,
                        }
                    };
                    acc(&mut g, *x, xv).add_assign(&dx);
                }
                Op::Relu(x) => {
                    let gx = acc(&mut g, *x, y);
                    for ((d, &o), &gv) in gx.data.iter_mut().zip(&y.data).zip(&gy.data) {
                        if o > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = acc(&mut g, *x, y);
                    for ((d, &s), &gv) in gx.data.iter_mut().zip(&y.data).zip(&gy.data) {
                        *d += gv * s * (1.0 - s);
                    }
                }
                Op::MaxPool { x, arg } => {
                    let gx = acc(&mut g, *x, self.value(*x));
                    for (&a, &gv) in arg.iter().zip(&gy.data) {
                        gx.data[a as usize] += gv;
                    }
                }
                Op::AvgPool(x) => {
                    let xv = self.value(*x);
                    let gx = acc(&mut g, *x, xv);
                    for c in 0..y.c {
                        for yy in 0..y.h {
                            for xx in 0..y.w {
                                let v = 0.25 * gy.data[(c * y.h + yy) * y.w + xx];
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    gx.data[(c * xv.h + 2 * yy + dy) * xv.w + 2 * xx + dx] += v;
                                }
                            }
                        }
                    }
                }
                Op::Upsample(x) => {
                    let xv = self.value(*x);
                    let gx = acc(&mut g, *x, xv);
                    for c in 0..y.c {
                        for yy in 0..y.h {
                            for xx in 0..y.w {
                                gx.data[(c * xv.h + yy / 2) * xv.w + xx / 2] +=
                                    gy.data[(c * y.h + yy) * y.w + xx];
                            }
                        }
                    }
                }
                Op::Concat(a, b) => {
                    let split = self.value(*a).len();
                    acc(&mut g, *a, self.value(*a))
                        .data
                        .iter_mut()
                        .zip(&gy.data[..split])
                        .for_each(|(d, v)| *d += v);
                    acc(&mut g, *b, self.value(*b))
                        .data
                        .iter_mut()
                        .zip(&gy.data[split..])
                        .for_each(|(d, v)| *d += v);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = av.zeros_like();
                    let mut gb = bv.zeros_like();
                    for c in 0..av.c {
                        for yy in 0..av.h {
                            for xx in 0..av.w {
                                let i = (c * av.h + yy) * av.w + xx;
                                let j = bidx(bv, c, yy, xx);
                                ga.data[i] = gy.data[i] * bv.data[j];
                                gb.data[j] += gy.data[i] * av.data[i];
                            }
                        }
                    }
                    acc(&mut g, *a, av).add_assign(&ga);
                    acc(&mut g, *b, bv).add_assign(&gb);
                }
                Op::Add(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut gb = bv.zeros_like();
                    for c in 0..av.c {
                        for yy in 0..av.h {
                            for xx in 0..av.w {
                                gb.data[bidx(bv, c, yy, xx)] +=
                                    gy.data[(c * av.h + yy) * av.w + xx];
                            }
                        }
                    }
                    acc(&mut g, *a, av).add_assign(&gy);
                    acc(&mut g, *b, bv).add_assign(&gb);
                }
                Op::AddScalar(x) => acc(&mut g, *x, y).add_assign(&gy),
                Op::Max(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = av.zeros_like();
                    let mut gb = bv.zeros_like();
                    for i in 0..av.len() {
                        if av.data[i] >= bv.data[i] {
                            ga.data[i] = gy.data[i];
                        } else {
                            gb.data[i] = gy.data[i];
                        }
                    }
                    acc(&mut g, *a, av).add_assign(&ga);
                    acc(&mut g, *b, bv).add_assign(&gb);
                }
                Op::Gap(x) => {
                    let xv = self.value(*x);
                    let p = xv.plane();
                    let gx = acc(&mut g, *x, xv);
                    for (c, ch) in gx.data.chunks_exact_mut(p).enumerate() {
                        let v = gy.data[c] / p as f64;
                        ch.iter_mut().for_each(|d| *d += v);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xv, wt) = (self.value(*x), self.params.get(*w));
                    pg.get_mut(*b).add_assign(&gy);
                    gemm(
                        wt.c,
                        1,
                        wt.h,
                        &gy.data,
                        false,
                        &xv.data,
                        false,
                        1.0,
                        &mut pg.get_mut(*w).data,
                    );
                    let mut gx = xv.zeros_like();
                    gemm(
                        wt.h,
                        wt.c,
                        1,
                        &wt.data,
                        true,
                        &gy.data,
                        false,
                        0.0,
                        &mut gx.data,
                    );
                    acc(&mut g, *x, xv).add_assign(&gx);
                }
                Op::Softmax(x) => {
                    let (c, p) = (y.c, y.plane());
                    let gx = acc(&mut g, *x, y);
                    for i in 0..p {
                        let dot: f64 = (0..c).map(|k| gy.data[k * p + i] * y.data[k * p + i]).sum();
                        for k in 0..c {
                            let j = k * p + i;
                            gx.data[j] += y.data[j] * (gy.data[j] - dot);
                        }
                    }
                }
                Op::PatchMse {
                    pred,
                    target,
                    rows,
                    cols,
                    count,
                } => {
                    let pv = self.value(*pred);
                    let s = gy.data[0] * 2.0 / count;
                    let gx = acc(&mut g, *pred, pv);
                    for c in 0..pv.c {
                        for yy in rows.0..rows.1 {
                            for xx in cols.0..cols.1 {
                                let j = (c * pv.h + yy) * pv.w + xx;
                                gx.data[j] += s * (pv.data[j] - target.data[j]);
                            }
                        }
                    }
                }
                Op::CrossEntropy { pred, target } => {
                    let pv = self.value(*pred);
                    let s = gy.data[0] / pv.plane() as f64;
                    let gx = acc(&mut g, *pred, pv);
                    for ((d, &p), &t) in gx.data.iter_mut().zip(&pv.data).zip(&target.data) {
                        if t != 0.0 && p > PROB_FLOOR {
                            *d -= s * t / p;
                        }
                    }
                }
            }
            g[i] = Some(gy);
        }
        Gradients {
            params: pg,
            nodes: g,
        }
    }
}

/// Per-patch mean squared errors in row-major patch order and the index of
/// the first largest one.
pub fn patch_errors(pred: &Tensor, target: &Tensor, grid: usize) -> Result<(Vec<f64>, usize)> {
    if grid == 0 || !pred.h.is_multiple_of(grid) || !pred.w.is_multiple_of(grid) {
        return Err(Error::contract(format!(
            "{}x{} plane is not divisible into a {grid}x{grid} patch grid",
            pred.h, pred.w
        )));
    }
    if pred.shape() != target.shape() {
        return Err(Error::contract("prediction and target differ in shape"));
    }
    let (ph, pw) = (pred.h / grid, pred.w / grid);
    let mut sums = vec![0.0; grid * grid];
    for c in 0..pred.c {
        for y in 0..pred.h {
            for x in 0..pred.w {
                let j = (c * pred.h + y) * pred.w + x;
                let d = pred.data[j] - target.data[j];
                sums[(y / ph) * grid + x / pw] += d * d;
            }
        }
    }
    let n = (pred.c * ph * pw) as f64;
    let errs: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    let mut best = 0;
    for (i, e) in errs.iter().enumerate() {
        if *e > errs[best] {
            best = i;
        }
    }
    Ok((errs, best))
}
