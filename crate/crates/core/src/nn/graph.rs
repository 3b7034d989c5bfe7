//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation eagerly (values are computed as nodes
//! are added) and [`Graph::backward`] walks the tape in reverse. Parameter
//! values are borrowed from the [`ParamStore`]; nothing is copied for them.

use std::collections::HashMap;

use super::gemm::sgemm;
use super::gaussian::{HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN};
use super::{NnError, ParamStore, Result};
use crate::exec::{self, ExecMode};

/// Rows per work item in batched matrix products. Fixed so that results never
/// depend on how many threads pick up the work.
const ROW_CHUNK: usize = 64;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    t_in: usize,
    kernel: usize,
    stride: usize,
    c_out: usize,
    t_out: usize,
}

impl ConvGeom {
    fn window(&self) -> usize {
        self.kernel * self.c_in
    }
}

enum Op {
    Input,
    Param(usize),
    Linear { x: usize, w: usize, b: usize },
    Conv1d { x: usize, w: usize, b: usize, geom: ConvGeom, cols: Vec<f32> },
    Elu(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f32),
    Exp(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Concat(usize, usize),
    Clamp(usize, f32, f32),
    Min(usize, usize),
    GaussLogProb { mean: usize, log_std: usize, action: Vec<f32> },
    GaussEntropy(usize),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f32>,
    needs_grad: bool,
}

/// Per-parameter gradients produced by [`Graph::backward`], indexed like the
/// store they were computed against.
#[derive(Clone, Debug, Default)]
pub struct Gradients(Vec<Option<Vec<f32>>>);

impl Gradients {
    pub fn get(&self, idx: usize) -> Option<&[f32]> {
        self.0.get(idx).and_then(|g| g.as_deref())
    }

    pub fn into_vec(self) -> Vec<Option<Vec<f32>>> {
        self.0
    }
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, usize>,
    mode: ExecMode,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self::with_mode(store, ExecMode::default())
    }

    pub fn with_mode(store: &'a ParamStore, mode: ExecMode) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f32] {
        self.val(v.0)
    }

    fn val(&self, i: usize) -> &[f32] {
        match self.nodes[i].op {
            Op::Param(p) => self.store.at(p).data(),
            _ => &self.nodes[i].value,
        }
    }

    fn dims(&self, i: usize) -> Vec<usize> {
        vec![self.nodes[i].rows, self.nodes[i].cols]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f32>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), if matches!(op, Op::Param(_)) { 0 } else { rows * cols });
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Constant input matrix (no gradient).
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f32>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(NnError::Shape {
                op: "input",
                lhs: vec![rows, cols],
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(Op::Input, rows, cols, data, false))
    }

    /// Trainable parameter leaf. Repeated lookups of one name share a node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let idx = self
            .store
            .index_of(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        if let Some(&n) = self.param_nodes.get(&idx) {
            return Ok(Var(n));
        }
        let (rows, cols) = self.store.at(idx).as_matrix_dims();
        let v = self.push(Op::Param(idx), rows, cols, Vec::new(), true);
        self.param_nodes.insert(idx, v.0);
        Ok(v)
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let (r, c) = self.shape(v);
        let data = self.val(v.0).to_vec();
        self.push(Op::Input, r, c, data, false)
    }

    /// `x·W + b` with `x: [B, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (bsz, k) = self.shape(x);
        let (wk, n) = self.shape(w);
        if wk != k {
            return Err(NnError::Shape {
                op: "linear",
                lhs: self.dims(x.0),
                rhs: self.dims(w.0),
            });
        }
        if self.nodes[b.0].rows * self.nodes[b.0].cols != n {
            return Err(NnError::Shape {
                op: "linear bias",
                lhs: self.dims(w.0),
                rhs: self.dims(b.0),
            });
        }
        let mut out = vec![0.0f32; bsz * n];
        {
            let xv = self.val(x.0);
            let wv = self.val(w.0);
            let bv = self.val(b.0);
            exec::for_each_chunk_mut(self.mode, &mut out, ROW_CHUNK * n, |ci, chunk| {
                let r0 = ci * ROW_CHUNK;
                let rows = chunk.len() / n;
                for row in chunk.chunks_mut(n) {
                    row.copy_from_slice(bv);
                }
                sgemm(rows, k, n, &xv[r0 * k..], k, 1, wv, n, 1, 1.0, chunk, n, 1);
            });
        }
        let ng = self.ng(x.0) || self.ng(w.0) || self.ng(b.0);
        Ok(self.push(Op::Linear { x: x.0, w: w.0, b: b.0 }, bsz, n, out, ng))
    }

    /// Strided 1D convolution over a time-major input.
    ///
    /// `x` is `[B, t_in · c_in]` with each row laid out as `t_in` consecutive
    /// frames of `c_in` channels. `w` is stored `[c_out, kernel, c_in]`.
    /// The result is `[B, t_out · c_out]`, again time-major.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, c_in: usize, stride: usize) -> Result<Var> {
        let (batch, xcols) = self.shape(x);
        let wshape = self.param_shape(w);
        let (c_out, kernel, wc_in) = match wshape.as_deref() {
            Some([o, k, i]) => (*o, *k, *i),
            _ => {
                return Err(NnError::Shape {
                    op: "conv1d weight",
                    lhs: vec![c_in],
                    rhs: self.dims(w.0),
                })
            }
        };
        if wc_in != c_in || c_in == 0 || xcols % c_in != 0 || stride == 0 {
            return Err(NnError::Shape {
                op: "conv1d",
                lhs: self.dims(x.0),
                rhs: vec![c_out, kernel, wc_in],
            });
        }
        let t_in = xcols / c_in;
        if t_in < kernel {
            return Err(NnError::Shape {
                op: "conv1d time",
                lhs: vec![t_in],
                rhs: vec![kernel],
            });
        }
        if self.nodes[b.0].rows * self.nodes[b.0].cols != c_out {
            return Err(NnError::Shape {
                op: "conv1d bias",
                lhs: vec![c_out],
                rhs: self.dims(b.0),
            });
        }
        let t_out = (t_in - kernel) / stride + 1;
        let geom = ConvGeom {
            batch,
            c_in,
            t_in,
            kernel,
            stride,
            c_out,
            t_out,
        };
        let win = geom.window();
        // im2col: row (b, t) holds the window starting at frame t·stride.
        let mut cols = vec![0.0f32; batch * t_out * win];
        {
            let xv = self.val(x.0);
            exec::for_each_chunk_mut(self.mode, &mut cols, t_out * win, |bi, chunk| {
                let xb = &xv[bi * xcols..(bi + 1) * xcols];
                for (t, dst) in chunk.chunks_mut(win).enumerate() {
                    let s = t * stride * c_in;
                    dst.copy_from_slice(&xb[s..s + win]);
                }
            });
        }
        let m = batch * t_out;
        let mut out = vec![0.0f32; m * c_out];
        {
            let wv = self.val(w.0);
            let bv = self.val(b.0);
            let cols_ref = &cols;
            exec::for_each_chunk_mut(self.mode, &mut out, ROW_CHUNK * c_out, |ci, chunk| {
                let r0 = ci * ROW_CHUNK;
                let rows = chunk.len() / c_out;
                for row in chunk.chunks_mut(c_out) {
                    row.copy_from_slice(bv);
                }
                // out = cols · Wᵀ, W is [c_out, win] row-major
                sgemm(rows, win, c_out, &cols_ref[r0 * win..], win, 1, wv, 1, win, 1.0, chunk, c_out, 1);
            });
        }
        let ng = self.ng(x.0) || self.ng(w.0) || self.ng(b.0);
        Ok(self.push(
            Op::Conv1d {
                x: x.0,
                w: w.0,
                b: b.0,
                geom,
                cols,
            },
            batch,
            t_out * c_out,
            out,
            ng,
        ))
    }

    fn param_shape(&self, v: Var) -> Option<Vec<usize>> {
        match self.nodes[v.0].op {
            Op::Param(p) => Some(self.store.at(p).shape().to_vec()),
            _ => None,
        }
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f32) -> f32) -> Var {
        let (r, c) = self.shape(x);
        let out: Vec<f32> = self.val(x.0).iter().map(|&v| f(v)).collect();
        let ng = self.ng(x.0);
        self.push(op, r, c, out, ng)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, op: Op, f: impl Fn(f32, f32) -> f32) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape {
                op: name,
                lhs: self.dims(a.0),
                rhs: self.dims(b.0),
            });
        }
        let (r, c) = self.shape(a);
        let out: Vec<f32> = self
            .val(a.0)
            .iter()
            .zip(self.val(b.0))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(op, r, c, out, ng))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Elu(x.0), super::layers::elu_scalar)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a.0, b.0), |x, y| x * y)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "min", Op::Min(a.0, b.0), |x, y| if x <= y { x } else { y })
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.unary(x, Op::Scale(x.0, s), |v| v * s)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x.0), f32::exp)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x.0), |v| v * v)
    }

    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        self.unary(x, Op::Clamp(x.0, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Sum of all entries, as a `1×1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.val(x.0).iter().fold(0.0f64, |a, &v| a + v as f64) as f32;
        let ng = self.ng(x.0);
        self.push(Op::Sum(x.0), 1, 1, vec![s], ng)
    }

    /// Mean of all entries, as a `1×1` node.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.val(x.0);
        let s = (v.iter().fold(0.0f64, |a, &v| a + v as f64) / v.len().max(1) as f64) as f32;
        let ng = self.ng(x.0);
        self.push(Op::Mean(x.0), 1, 1, vec![s], ng)
    }

    /// Per-row sums: `[B, n] → [B, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out: Vec<f32> = self.val(x.0).chunks(c.max(1)).map(|row| row.iter().sum()).collect();
        let ng = self.ng(x.0);
        self.push(Op::RowSum(x.0), r, 1, out, ng)
    }

    /// Column-wise concatenation: `[B, n] ++ [B, m] → [B, n + m]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(NnError::Shape {
                op: "concat",
                lhs: self.dims(a.0),
                rhs: self.dims(b.0),
            });
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        let (av, bv) = (self.val(a.0), self.val(b.0));
        for r in 0..ra {
            out.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let ng = self.ng(a.0) || self.ng(b.0);
        Ok(self.push(Op::Concat(a.0, b.0), ra, ca + cb, out, ng))
    }

    /// Diagonal-Gaussian log-density of fixed `action` rows under `mean`
    /// rows and a shared state-independent `log_std` row. `[B, 1]` result.
    pub fn gaussian_log_prob(&mut self, mean: Var, log_std: Var, action: Vec<f32>) -> Result<Var> {
        let (b, a) = self.shape(mean);
        let (lr, lc) = self.shape(log_std);
        if lr * lc != a || action.len() != b * a {
            return Err(NnError::Shape {
                op: "gaussian_log_prob",
                lhs: self.dims(mean.0),
                rhs: vec![lr * lc, action.len()],
            });
        }
        let ls: Vec<f32> = self.val(log_std.0).iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        let inv_std: Vec<f32> = ls.iter().map(|v| (-v).exp()).collect();
        let mv = self.val(mean.0);
        let out: Vec<f32> = (0..b)
            .map(|r| {
                (0..a)
                    .map(|j| {
                        let z = (action[r * a + j] - mv[r * a + j]) * inv_std[j];
                        -0.5 * z * z - ls[j] - HALF_LN_2PI
                    })
                    .sum()
            })
            .collect();
        let ng = self.ng(mean.0) || self.ng(log_std.0);
        Ok(self.push(
            Op::GaussLogProb {
                mean: mean.0,
                log_std: log_std.0,
                action,
            },
            b,
            1,
            out,
            ng,
        ))
    }

    /// Entropy of the diagonal Gaussian with the given `log_std`, `1×1`.
    pub fn gaussian_entropy(&mut self, log_std: Var) -> Var {
        let h: f32 = self
            .val(log_std.0)
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX) + 0.5 + HALF_LN_2PI)
            .sum();
        let ng = self.ng(log_std.0);
        self.push(Op::GaussEntropy(log_std.0), 1, 1, vec![h], ng)
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every
    /// parameter reachable from the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(NnError::State("backward called before any forward op was recorded".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(NnError::State(format!("loss node {} is not part of this graph", loss.0)));
        }
        if self.shape(loss) != (1, 1) {
            return Err(NnError::State(format!(
                "loss must be scalar, got shape {:?}",
                self.dims(loss.0)
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients(vec![None; self.store.len()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: Vec<f32>, grads: &mut [Option<Vec<f32>>], out: &mut Gradients) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input => {}
            Op::Param(p) => {
                out.0[*p] = Some(g);
            }
            Op::Linear { x, w, b } => {
                let (bsz, k) = (self.nodes[*x].rows, self.nodes[*x].cols);
                let n = node.cols;
                if self.ng(*x) {
                    let wv = self.val(*w);
                    let mut dx = vec![0.0f32; bsz * k];
                    exec::for_each_chunk_mut(self.mode, &mut dx, ROW_CHUNK * k, |ci, chunk| {
                        let r0 = ci * ROW_CHUNK;
                        let rows = chunk.len() / k;
                        // dx = g · Wᵀ
                        sgemm(rows, n, k, &g[r0 * n..], n, 1, wv, 1, n, 0.0, chunk, k, 1);
                    });
                    accumulate(grads, *x, dx);
                }
                if self.ng(*w) {
                    let xv = self.val(*x);
                    let mut dw = vec![0.0f32; k * n];
                    exec::for_each_chunk_mut(self.mode, &mut dw, ROW_CHUNK * n, |ci, chunk| {
                        let r0 = ci * ROW_CHUNK;
                        let rows = chunk.len() / n;
                        // dW = xᵀ · g, restricted to input rows r0..r0+rows
                        sgemm(rows, bsz, n, &xv[r0..], 1, k, &g, n, 1, 0.0, chunk, n, 1);
                    });
                    accumulate(grads, *w, dw);
                }
                if self.ng(*b) {
                    accumulate(grads, *b, col_sums(&g, n));
                }
            }
            Op::Conv1d { x, w, b, geom, cols } => {
                let win = geom.window();
                let m = geom.batch * geom.t_out;
                let c_out = geom.c_out;
                if self.ng(*w) {
                    let mut dw = vec![0.0f32; c_out * win];
                    // dW = gᵀ · cols, g viewed as [m, c_out]
                    sgemm(c_out, m, win, &g, 1, c_out, cols, win, 1, 0.0, &mut dw, win, 1);
                    accumulate(grads, *w, dw);
                }
                if self.ng(*b) {
                    accumulate(grads, *b, col_sums(&g, c_out));
                }
                if self.ng(*x) {
                    let wv = self.val(*w);
                    let xcols = geom.t_in * geom.c_in;
                    let mut dx = vec![0.0f32; geom.batch * xcols];
                    let g_ref = &g;
                    exec::for_each_chunk_mut(self.mode, &mut dx, xcols, |bi, dxb| {
                        let mut dcols = vec![0.0f32; geom.t_out * win];
                        sgemm(
                            geom.t_out,
                            c_out,
                            win,
                            &g_ref[bi * geom.t_out * c_out..],
                            c_out,
                            1,
                            wv,
                            win,
                            1,
                            0.0,
                            &mut dcols,
                            win,
                            1,
                        );
                        for (t, src) in dcols.chunks(win).enumerate() {
                            let s = t * geom.stride * geom.c_in;
                            for (d, v) in dxb[s..s + win].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    });
                    accumulate(grads, *x, dx);
                }
            }
            Op::Elu(x) => {
                let xv = self.val(*x);
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { gi * xi.exp() })
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Add(a, b) => {
                if self.ng(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.ng(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if self.ng(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.ng(*b) {
                    accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let bv = self.val(*b);
                    accumulate(grads, *a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                }
                if self.ng(*b) {
                    let av = self.val(*a);
                    accumulate(grads, *b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                if self.ng(*a) {
                    let d = (0..g.len()).map(|j| if av[j] <= bv[j] { g[j] } else { 0.0 }).collect();
                    accumulate(grads, *a, d);
                }
                if self.ng(*b) {
                    let d = (0..g.len()).map(|j| if av[j] <= bv[j] { 0.0 } else { g[j] }).collect();
                    accumulate(grads, *b, d);
                }
            }
            Op::Scale(x, s) => accumulate(grads, *x, g.iter().map(|v| v * s).collect()),
            Op::Exp(x) => {
                let d = g.iter().zip(&node.value).map(|(a, y)| a * y).collect();
                accumulate(grads, *x, d);
            }
            Op::Square(x) => {
                let xv = self.val(*x);
                accumulate(grads, *x, g.iter().zip(xv).map(|(a, v)| 2.0 * a * v).collect());
            }
            Op::Clamp(x, lo, hi) => {
                let xv = self.val(*x);
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&a, &v)| if v >= *lo && v <= *hi { a } else { 0.0 })
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let n = self.nodes[*x].rows * self.nodes[*x].cols;
                accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.nodes[*x].rows * self.nodes[*x].cols;
                accumulate(grads, *x, vec![g[0] / n as f32; n]);
            }
            Op::RowSum(x) => {
                let c = self.nodes[*x].cols;
                let d = g.iter().flat_map(|&v| std::iter::repeat_n(v, c)).collect();
                accumulate(grads, *x, d);
            }
            Op::Concat(a, b) => {
                let ca = self.nodes[*a].cols;
                let cb = self.nodes[*b].cols;
                let rows = node.rows;
                if self.ng(*a) {
                    let d = (0..rows).flat_map(|r| g[r * (ca + cb)..r * (ca + cb) + ca].iter().copied()).collect();
                    accumulate(grads, *a, d);
                }
                if self.ng(*b) {
                    let d = (0..rows)
                        .flat_map(|r| g[r * (ca + cb) + ca..(r + 1) * (ca + cb)].iter().copied())
                        .collect();
                    accumulate(grads, *b, d);
                }
            }
            Op::GaussLogProb { mean, log_std, action } => {
                let (b, a) = (self.nodes[*mean].rows, self.nodes[*mean].cols);
                let raw_ls = self.val(*log_std);
                let ls: Vec<f32> = raw_ls.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
                let inv_var: Vec<f32> = ls.iter().map(|v| (-2.0 * v).exp()).collect();
                let mv = self.val(*mean);
                if self.ng(*mean) {
                    let mut d = vec![0.0f32; b * a];
                    for r in 0..b {
                        for j in 0..a {
                            d[r * a + j] = g[r] * (action[r * a + j] - mv[r * a + j]) * inv_var[j];
                        }
                    }
                    accumulate(grads, *mean, d);
                }
                if self.ng(*log_std) {
                    let mut d = vec![0.0f32; a];
                    for (j, dj) in d.iter_mut().enumerate() {
                        if raw_ls[j] < LOG_STD_MIN || raw_ls[j] > LOG_STD_MAX {
                            continue;
                        }
                        let mut acc = 0.0f64;
                        for r in 0..b {
                            let diff = action[r * a + j] - mv[r * a + j];
                            acc += (g[r] * (diff * diff * inv_var[j] - 1.0)) as f64;
                        }
                        *dj = acc as f32;
                    }
                    accumulate(grads, *log_std, d);
                }
            }
            Op::GaussEntropy(log_std) => {
                let d = self
                    .val(*log_std)
                    .iter()
                    .map(|&v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { g[0] } else { 0.0 })
                    .collect();
                accumulate(grads, *log_std, d);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], idx: usize, d: Vec<f32>) {
    match &mut grads[idx] {
        Some(acc) => acc.iter_mut().zip(d).for_each(|(a, v)| *a += v),
        slot @ None => *slot = Some(d),
    }
}

fn col_sums(g: &[f32], n: usize) -> Vec<f32> {
    let mut acc = vec![0.0f32; n];
    for row in g.chunks(n) {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store_with(name: &str, shape: Vec<usize>, data: Vec<f32>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::new(shape, data).unwrap()).unwrap();
        s
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let store = store_with("w", vec![5], vec![0.3, -1.0, 2.0, 0.0, 7.5]);
        let mut g = Graph::new(&store);
        let w = g.param("w").unwrap();
        let l = g.sum(w);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(0).unwrap(), &[1.0; 5]);
    }

    #[test]
    fn grad_of_squared_norm_is_twice_w() {
        let data = vec![0.3, -1.0, 2.0, 0.0, 7.5];
        let store = store_with("w", vec![5], data.clone());
        let mut g = Graph::new(&store);
        let w = g.param("w").unwrap();
        let sq = g.square(w);
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        let expected: Vec<f32> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(grads.get(0).unwrap(), expected.as_slice());
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let store = ParamStore::new();
        let g = Graph::new(&store);
        assert!(matches!(g.backward(Var(0)), Err(NnError::State(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = store_with("w", vec![3], vec![1.0; 3]);
        let mut g = Graph::new(&store);
        let w = g.param("w").unwrap();
        assert!(matches!(g.backward(w), Err(NnError::State(_))));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.input(2, 3, vec![0.0; 6]).unwrap();
        let b = g.input(3, 2, vec![0.0; 6]).unwrap();
        let err = g.add(a, b).unwrap_err();
        assert_eq!(
            err,
            NnError::Shape {
                op: "add",
                lhs: vec![2, 3],
                rhs: vec![3, 2]
            }
        );
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[3, 2]"));
    }

    #[test]
    fn detach_blocks_gradient() {
        let store = store_with("w", vec![2], vec![1.0, 2.0]);
        let mut g = Graph::new(&store);
        let w = g.param("w").unwrap();
        let d = g.detach(w);
        let p = g.mul(w, d).unwrap();
        let l = g.sum(p);
        let grads = g.backward(l).unwrap();
        // d(w·stop(w))/dw = stop(w)
        assert_eq!(grads.get(0).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn batch_rows_independent_of_batch_size() {
        // A row's output must not depend on which other rows share the batch.
        let mut s = ParamStore::new();
        let w: Vec<f32> = (0..37 * 19).map(|i| ((i * 7919) % 97) as f32 / 97.0 - 0.5).collect();
        s.insert("w", Tensor::new(vec![37, 19], w).unwrap()).unwrap();
        s.insert("b", Tensor::filled(vec![19], 0.1)).unwrap();
        let rows = 150;
        let x: Vec<f32> = (0..rows * 37).map(|i| ((i * 104729) % 113) as f32 / 113.0 - 0.5).collect();
        let mut g = Graph::new(&s);
        let xi = g.input(rows, 37, x.clone()).unwrap();
        let (wv, bv) = (g.param("w").unwrap(), g.param("b").unwrap());
        let y = g.linear(xi, wv, bv).unwrap();
        let full = g.value(y).to_vec();
        for r in [0usize, 63, 64, 149] {
            let mut g1 = Graph::new(&s);
            let xi = g1.input(1, 37, x[r * 37..(r + 1) * 37].to_vec()).unwrap();
            let (wv, bv) = (g1.param("w").unwrap(), g1.param("b").unwrap());
            let y1 = g1.linear(xi, wv, bv).unwrap();
            assert_eq!(g1.value(y1), &full[r * 19..(r + 1) * 19]);
        }
    }
}
