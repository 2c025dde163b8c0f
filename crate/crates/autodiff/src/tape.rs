use crate::error::{mismatch, AutodiffError, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add { a: Var, b: Var, broadcast: bool },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    Conv1d { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom },
    Conv1dTranspose { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom },
    LstmCell(Box<LstmSaved>),
    Attention(Box<AttentionSaved>),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Softmax { x: Var },
    Relu { x: Var },
    Tanh { x: Var },
    Sigmoid { x: Var },
    Exp { x: Var },
    Log { x: Var },
    MeanPoolTime { x: Var, batch: usize, time: usize, width: usize },
    Reshape { x: Var },
    Concat { parts: Vec<Var>, outer: usize, inner: usize, sizes: Vec<usize> },
    Slice { x: Var, outer: usize, inner: usize, axis_len: usize, start: usize, end: usize },
    Sum { x: Var },
    Mean { x: Var },
}

#[derive(Debug)]
pub(crate) struct LstmSaved {
    x: Var,
    h: Var,
    c: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    batch: usize,
    input: usize,
    hidden: usize,
    /// activated gates `[i | f | g | o]`, `B × 4H`
    gates: Vec<f64>,
    /// `tanh(c')`, `B × H`
    tanh_c: Vec<f64>,
}

#[derive(Debug)]
pub(crate) struct AttentionSaved {
    x: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    batch: usize,
    time: usize,
    width: usize,
    heads: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// attention weights `B × H × T × T`
    probs: Vec<f64>,
    /// concatenated head outputs before the output projection
    mixed: Vec<f64>,
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every input of a node has a
/// smaller index than the node itself and `backward` can sweep the list in
/// reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
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

    /// Records a leaf. It participates in differentiation iff the tensor
    /// was marked with [`Tensor::requiring_grad`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad();
        self.push(t, Op::Leaf, needs_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(Tensor::from_parts(shape, data), op, needs)
    }

    // ---- linear algebra -------------------------------------------------

    /// `a[..., k] · b[k, n] → [..., n]`; leading dimensions of `a` are
    /// flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 {
            return Err(mismatch(
                "matmul",
                format!("need lhs rank >= 2 and rhs rank 2, got {sa:?} x {sb:?}"),
            ));
        }
        let k = sa[sa.len() - 1];
        if k != sb[0] {
            return Err(mismatch(
                "matmul",
                format!("inner dimensions differ: {sa:?} x {sb:?} ({k} != {})", sb[0]),
            ));
        }
        let n = sb[1];
        let m = sa[..sa.len() - 1].iter().product();
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        Ok(self.record(shape, out, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// Elementwise sum. `b` may also be a vector matching the last
    /// dimension of `a`, in which case it is added to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let broadcast = if sa == sb {
            false
        } else if sb.len() == 1 && sa.last() == Some(&sb[0]) {
            true
        } else {
            return Err(mismatch("add", format!("{sa:?} + {sb:?}")));
        };
        let bd = self.data(b);
        let out: Vec<f64> = if broadcast {
            let n = sb[0];
            self.data(a)
                .iter()
                .enumerate()
                .map(|(i, x)| x + bd[i % n])
                .collect()
        } else {
            self.data(a).iter().zip(bd).map(|(x, y)| x + y).collect()
        };
        Ok(self.record(sa, out, Op::Add { a, b, broadcast }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(shape, out, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(shape, out, Op::Mul { a, b }, &[a, b]))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.data(x).iter().map(|v| scale * v + shift).collect();
        let shape = self.shape(x).to_vec();
        self.record(shape, out, Op::Affine { x, scale }, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    // ---- convolution ----------------------------------------------------

    /// `x: [B, Ci, L]`, `w: [Co, Ci, K]`, optional `bias: [Co]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(mismatch(
                "conv1d",
                format!("input and kernel must be rank 3, got {sx:?} and {sw:?}"),
            ));
        }
        if sx[1] != sw[1] {
            return Err(mismatch(
                "conv1d",
                format!("input channels {} != kernel input channels {}", sx[1], sw[1]),
            ));
        }
        if stride == 0 {
            return Err(mismatch("conv1d", "stride must be positive"));
        }
        let padded = sx[2] + 2 * padding;
        if padded < sw[2] {
            return Err(mismatch(
                "conv1d",
                format!("kernel {} longer than padded input {padded}", sw[2]),
            ));
        }
        self.check_bias("conv1d", bias, sw[0])?;
        let geom = ConvGeom {
            batch: sx[0],
            in_ch: sx[1],
            out_ch: sw[0],
            in_len: sx[2],
            out_len: (padded - sw[2]) / stride + 1,
            kernel: sw[2],
            stride,
            padding,
        };
        let out = kernels::conv1d(
            self.data(x),
            self.data(w),
            bias.map(|b| self.data(b)),
            &geom,
        );
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.record(
            vec![geom.batch, geom.out_ch, geom.out_len],
            out,
            Op::Conv1d { x, w, bias, geom },
            &inputs,
        ))
    }

    /// `x: [B, Ci, L]`, `w: [Ci, Co, K]`; output length
    /// `(L - 1)·stride − 2·padding + K + output_padding`.
    pub fn conv1d_transpose(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(mismatch(
                "conv1d_transpose",
                format!("input and kernel must be rank 3, got {sx:?} and {sw:?}"),
            ));
        }
        if sx[1] != sw[0] {
            return Err(mismatch(
                "conv1d_transpose",
                format!("input channels {} != kernel input channels {}", sx[1], sw[0]),
            ));
        }
        if stride == 0 || output_padding >= stride {
            return Err(mismatch(
                "conv1d_transpose",
                format!("need stride > 0 and output_padding < stride, got {stride}, {output_padding}"),
            ));
        }
        let full = (sx[2] - 1) * stride + sw[2] + output_padding;
        if full <= 2 * padding {
            return Err(mismatch(
                "conv1d_transpose",
                format!("padding {padding} leaves no output for input length {}", sx[2]),
            ));
        }
        self.check_bias("conv1d_transpose", bias, sw[1])?;
        let geom = ConvGeom {
            batch: sx[0],
            in_ch: sx[1],
            out_ch: sw[1],
            in_len: sx[2],
            out_len: full - 2 * padding,
            kernel: sw[2],
            stride,
            padding,
        };
        let out = kernels::conv1d_transpose(
            self.data(x),
            self.data(w),
            bias.map(|b| self.data(b)),
            &geom,
        );
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.record(
            vec![geom.batch, geom.out_ch, geom.out_len],
            out,
            Op::Conv1dTranspose { x, w, bias, geom },
            &inputs,
        ))
    }

    fn check_bias(&self, op: &'static str, bias: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.shape(b) != [channels] {
                return Err(mismatch(
                    op,
                    format!("bias shape {:?} != [{channels}]", self.shape(b)),
                ));
            }
        }
        Ok(())
    }

    // ---- recurrent and attention blocks ---------------------------------

    /// One LSTM step with gate order `[input, forget, cell, output]`.
    ///
    /// `x: [B, I]`, `h, c: [B, H]`, `w_ih: [I, 4H]`, `w_hh: [H, 4H]`,
    /// `bias: [4H]`. Returns `[B, 2H]` holding `[h' | c']`.
    pub fn lstm_cell(
        &mut self,
        x: Var,
        h: Var,
        c: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sh = self.shape(h).to_vec();
        if sx.len() != 2 || sh.len() != 2 || sx[0] != sh[0] {
            return Err(mismatch(
                "lstm_cell",
                format!("x {sx:?} and h {sh:?} must be [B, I] and [B, H]"),
            ));
        }
        let (batch, input, hidden) = (sx[0], sx[1], sh[1]);
        let expect = [
            (c, vec![batch, hidden], "c"),
            (w_ih, vec![input, 4 * hidden], "w_ih"),
            (w_hh, vec![hidden, 4 * hidden], "w_hh"),
            (bias, vec![4 * hidden], "bias"),
        ];
        for (v, shape, name) in &expect {
            if self.shape(*v) != shape.as_slice() {
                return Err(mismatch(
                    "lstm_cell",
                    format!("{name} has shape {:?}, expected {shape:?}", self.shape(*v)),
                ));
            }
        }
        let g4 = 4 * hidden;
        let mut gates = kernels::matmul(self.data(x), self.data(w_ih), batch, input, g4);
        let rec = kernels::matmul(self.data(h), self.data(w_hh), batch, hidden, g4);
        let bd = self.data(bias);
        for (i, g) in gates.iter_mut().enumerate() {
            let col = i % g4;
            let pre = *g + rec[i] + bd[col];
            *g = if (2 * hidden..3 * hidden).contains(&col) {
                pre.tanh()
            } else {
                kernels::sigmoid(pre)
            };
        }
        let cd = self.data(c);
        let mut out = vec![0.0; batch * 2 * hidden];
        let mut tanh_c = vec![0.0; batch * hidden];
        for b in 0..batch {
            let gr = &gates[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let (ig, fg, cg, og) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
                let c_new = fg * cd[b * hidden + j] + ig * cg;
                let tc = c_new.tanh();
                tanh_c[b * hidden + j] = tc;
                out[b * 2 * hidden + j] = og * tc;
                out[b * 2 * hidden + hidden + j] = c_new;
            }
        }
        let saved = LstmSaved {
            x,
            h,
            c,
            w_ih,
            w_hh,
            bias,
            batch,
            input,
            hidden,
            gates,
            tanh_c,
        };
        Ok(self.record(
            vec![batch, 2 * hidden],
            out,
            Op::LstmCell(Box::new(saved)),
            &[x, h, c, w_ih, w_hh, bias],
        ))
    }

    /// Multi-head scaled dot-product self-attention without projection
    /// biases. `x: [B, T, d]`, each weight `[d, d]`, `d % heads == 0`.
    pub fn multi_head_attention(
        &mut self,
        x: Var,
        wq: Var,
        wk: Var,
        wv: Var,
        wo: Var,
        heads: usize,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(mismatch(
                "multi_head_attention",
                format!("input must be [B, T, d], got {sx:?}"),
            ));
        }
        let (batch, time, width) = (sx[0], sx[1], sx[2]);
        if heads == 0 || width % heads != 0 {
            return Err(mismatch(
                "multi_head_attention",
                format!("width {width} not divisible by {heads} heads"),
            ));
        }
        for (v, name) in [(wq, "wq"), (wk, "wk"), (wv, "wv"), (wo, "wo")] {
            if self.shape(v) != [width, width] {
                return Err(mismatch(
                    "multi_head_attention",
                    format!("{name} has shape {:?}, expected [{width}, {width}]", self.shape(v)),
                ));
            }
        }
        let rows = batch * time;
        let xd = self.data(x);
        let q = kernels::matmul(xd, self.data(wq), rows, width, width);
        let k = kernels::matmul(xd, self.data(wk), rows, width, width);
        let v = kernels::matmul(xd, self.data(wv), rows, width, width);
        let dh = width / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; batch * heads * time * time];
        let mut mixed = vec![0.0; rows * width];
        for b in 0..batch {
            for hd in 0..heads {
                let off = hd * dh;
                let pbase = (b * heads + hd) * time * time;
                let p = &mut probs[pbase..pbase + time * time];
                for i in 0..time {
                    let qi = &q[(b * time + i) * width + off..(b * time + i) * width + off + dh];
                    for j in 0..time {
                        let kj = &k[(b * time + j) * width + off..(b * time + j) * width + off + dh];
                        p[i * time + j] = kernels::dot(qi, kj) * inv_sqrt;
                    }
                }
                kernels::softmax_rows(p, time);
                for i in 0..time {
                    let orow = (b * time + i) * width + off;
                    for j in 0..time {
                        let pij = p[i * time + j];
                        let vj = (b * time + j) * width + off;
                        for e in 0..dh {
                            mixed[orow + e] += pij * v[vj + e];
                        }
                    }
                }
            }
        }
        let out = kernels::matmul(&mixed, self.data(wo), rows, width, width);
        let saved = AttentionSaved {
            x,
            wq,
            wk,
            wv,
            wo,
            batch,
            time,
            width,
            heads,
            q,
            k,
            v,
            probs,
            mixed,
        };
        Ok(self.record(
            sx,
            out,
            Op::Attention(Box::new(saved)),
            &[x, wq, wk, wv, wo],
        ))
    }

    /// Normalizes over the last dimension, then applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let sx = self.shape(x).to_vec();
        let d = *sx.last().expect("tensor rank >= 1");
        for (v, name) in [(gamma, "gamma"), (beta, "beta")] {
            if self.shape(v) != [d] {
                return Err(mismatch(
                    "layer_norm",
                    format!("{name} has shape {:?}, expected [{d}]", self.shape(v)),
                ));
            }
        }
        let xd = self.data(x);
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let rows = xd.len() / d;
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[r * d + j] = xh;
                out[r * d + j] = gd[j] * xh + bd[j];
            }
        }
        Ok(self.record(
            sx,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    // ---- elementwise nonlinearities -------------------------------------

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Var {
        let sx = self.shape(x).to_vec();
        let mut out = self.data(x).to_vec();
        kernels::softmax_rows(&mut out, *sx.last().expect("rank >= 1"));
        self.record(sx, out, Op::Softmax { x }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |x| Op::Relu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, |x| Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, |x| Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, |x| Op::Exp { x })
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, |x| Op::Log { x })
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(Var) -> Op) -> Var {
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.record(shape, out, op(x), &[x])
    }

    // ---- reductions and layout ------------------------------------------

    /// `[B, T, d] → [B, d]`, averaging over the time axis.
    pub fn mean_pool_time(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 {
            return Err(mismatch(
                "mean_pool_time",
                format!("input must be [B, T, d], got {sx:?}"),
            ));
        }
        let (batch, time, width) = (sx[0], sx[1], sx[2]);
        let xd = self.data(x);
        let mut out = vec![0.0; batch * width];
        for b in 0..batch {
            for t in 0..time {
                let row = &xd[(b * time + t) * width..(b * time + t + 1) * width];
                for (o, v) in out[b * width..(b + 1) * width].iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        let inv = 1.0 / time as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(self.record(
            vec![batch, width],
            out,
            Op::MeanPoolTime {
                x,
                batch,
                time,
                width,
            },
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != self.value(x).numel() {
            return Err(mismatch(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(x)),
            ));
        }
        let out = self.data(x).to_vec();
        Ok(self.record(shape.to_vec(), out, Op::Reshape { x }, &[x]))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => {
                return Err(AutodiffError::Arity {
                    op: "concat",
                    expected: "at least 1".into(),
                    got: 0,
                })
            }
        };
        if axis >= first.len() {
            return Err(mismatch(
                "concat",
                format!("axis {axis} out of range for {first:?}"),
            ));
        }
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let agree = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !agree {
                return Err(mismatch(
                    "concat",
                    format!("{s:?} incompatible with {first:?} along axis {axis}"),
                ));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let d = self.data(p);
                out.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.record(
            shape,
            out,
            Op::Concat {
                parts: parts.to_vec(),
                outer,
                inner,
                sizes,
            },
            parts,
        ))
    }

    /// Keeps indices `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() || start >= end || end > sx[axis] {
            return Err(mismatch(
                "slice",
                format!("range {start}..{end} on axis {axis} invalid for {sx:?}"),
            ));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let axis_len = sx[axis];
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * axis_len * inner;
            out.extend_from_slice(&xd[base + start * inner..base + end * inner]);
        }
        let mut shape = sx;
        shape[axis] = end - start;
        Ok(self.record(
            shape,
            out,
            Op::Slice {
                x,
                outer,
                inner,
                axis_len,
                start,
                end,
            },
            &[x],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.record(vec![1], vec![s], Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.record(vec![1], vec![s], Op::Mean { x }, &[x])
    }

    // ---- reverse sweep --------------------------------------------------

    /// Back-propagates from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if rv.numel() != 1 {
            return Err(AutodiffError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                if !node.needs_grad {
                    return None;
                }
                let shape = node.value.shape().to_vec();
                let data = g.unwrap_or_else(|| vec![0.0; node.value.numel()]);
                Some(Tensor::from_parts(shape, data))
            })
            .collect();
        Ok(Gradients { grads })
    }

    /// Accumulation slot for `v`, or `None` when `v` takes no gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn accum(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: impl IntoIterator<Item = f64>) {
        if let Some(s) = self.slot(grads, v) {
            for (d, x) in s.iter_mut().zip(g) {
                *d += x;
            }
        }
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                let (ad, bd) = (self.data(a), self.data(b));
                if let Some(da) = self.slot(grads, a) {
                    kernels::matmul_grad_lhs(g, bd, da, m, k, n);
                }
                if let Some(db) = self.slot(grads, b) {
                    kernels::matmul_grad_rhs(ad, g, db, m, k, n);
                }
            }
            &Op::Add { a, b, broadcast } => {
                self.accum(grads, a, g.iter().copied());
                if broadcast {
                    if let Some(db) = self.slot(grads, b) {
                        let n = db.len();
                        for (j, x) in g.iter().enumerate() {
                            db[j % n] += x;
                        }
                    }
                } else {
                    self.accum(grads, b, g.iter().copied());
                }
            }
            &Op::Sub { a, b } => {
                self.accum(grads, a, g.iter().copied());
                self.accum(grads, b, g.iter().map(|x| -x));
            }
            &Op::Mul { a, b } => {
                let (ad, bd) = (self.data(a), self.data(b));
                self.accum(grads, a, g.iter().zip(bd).map(|(x, y)| x * y));
                self.accum(grads, b, g.iter().zip(ad).map(|(x, y)| x * y));
            }
            &Op::Affine { x, scale } => {
                self.accum(grads, x, g.iter().map(|v| v * scale));
            }
            &Op::Conv1d { x, w, bias, geom } => {
                let (xd, wd) = (self.data(x), self.data(w));
                let mut dx = self.needs(x).then(|| vec![0.0; xd.len()]);
                let mut dw = self.needs(w).then(|| vec![0.0; wd.len()]);
                let mut db = bias
                    .filter(|&b| self.needs(b))
                    .map(|_| vec![0.0; geom.out_ch]);
                kernels::conv1d_backward(
                    xd,
                    wd,
                    g,
                    &geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.accum_opt(grads, x, dx);
                self.accum_opt(grads, w, dw);
                if let Some(b) = bias {
                    self.accum_opt(grads, b, db);
                }
            }
            &Op::Conv1dTranspose { x, w, bias, geom } => {
                let (xd, wd) = (self.data(x), self.data(w));
                let mut dx = self.needs(x).then(|| vec![0.0; xd.len()]);
                let mut dw = self.needs(w).then(|| vec![0.0; wd.len()]);
                let mut db = bias
                    .filter(|&b| self.needs(b))
                    .map(|_| vec![0.0; geom.out_ch]);
                kernels::conv1d_transpose_backward(
                    xd,
                    wd,
                    g,
                    &geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.accum_opt(grads, x, dx);
                self.accum_opt(grads, w, dw);
                if let Some(b) = bias {
                    self.accum_opt(grads, b, db);
                }
            }
            Op::LstmCell(s) => self.lstm_backward(s, g, grads),
            Op::Attention(s) => self.attention_backward(s, g, grads),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.shape(*gamma)[0];
                let gd = self.data(*gamma);
                let rows = xhat.len() / d;
                if let Some(dg) = self.slot(grads, *gamma) {
                    for (j, (gv, xh)) in g.iter().zip(xhat).enumerate() {
                        dg[j % d] += gv * xh;
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for (j, gv) in g.iter().enumerate() {
                        db[j % d] += gv;
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    let mut dxhat = vec![0.0; d];
                    for r in 0..rows {
                        let (gr, xr) = (&g[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
                        for j in 0..d {
                            dxhat[j] = gr[j] * gd[j];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / d as f64;
                        for j in 0..d {
                            dx[r * d + j] += scale * (d as f64 * dxhat[j] - s1 - xr[j] * s2);
                        }
                    }
                }
            }
            &Op::Softmax { x } => {
                let n = *self.shape(x).last().expect("rank >= 1");
                if let Some(dx) = self.slot(grads, x) {
                    for r in 0..out.len() / n {
                        let (y, gy) = (&out[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let s = kernels::dot(y, gy);
                        for j in 0..n {
                            dx[r * n + j] += y[j] * (gy[j] - s);
                        }
                    }
                }
            }
            &Op::Relu { x } => {
                let xd = self.data(x);
                self.accum(
                    grads,
                    x,
                    g.iter().zip(xd).map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 }),
                );
            }
            &Op::Tanh { x } => {
                self.accum(grads, x, g.iter().zip(out).map(|(gv, y)| gv * (1.0 - y * y)));
            }
            &Op::Sigmoid { x } => {
                self.accum(grads, x, g.iter().zip(out).map(|(gv, y)| gv * y * (1.0 - y)));
            }
            &Op::Exp { x } => {
                self.accum(grads, x, g.iter().zip(out).map(|(gv, y)| gv * y));
            }
            &Op::Log { x } => {
                let xd = self.data(x);
                self.accum(grads, x, g.iter().zip(xd).map(|(gv, v)| gv / v));
            }
            &Op::MeanPoolTime {
                x,
                batch,
                time,
                width,
            } => {
                if let Some(dx) = self.slot(grads, x) {
                    let inv = 1.0 / time as f64;
                    for b in 0..batch {
                        for t in 0..time {
                            for e in 0..width {
                                dx[(b * time + t) * width + e] += g[b * width + e] * inv;
                            }
                        }
                    }
                }
            }
            &Op::Reshape { x } => self.accum(grads, x, g.iter().copied()),
            Op::Concat {
                parts,
                outer,
                inner,
                sizes,
            } => {
                let total: usize = sizes.iter().sum();
                let mut offset = 0;
                for (&p, &sz) in parts.iter().zip(sizes) {
                    if let Some(dp) = self.slot(grads, p) {
                        for o in 0..*outer {
                            let src = (o * total + offset) * inner;
                            for (d, gv) in dp[o * sz * inner..(o + 1) * sz * inner]
                                .iter_mut()
                                .zip(&g[src..src + sz * inner])
                            {
                                *d += gv;
                            }
                        }
                    }
                    offset += sz;
                }
            }
            &Op::Slice {
                x,
                outer,
                inner,
                axis_len,
                start,
                end,
            } => {
                if let Some(dx) = self.slot(grads, x) {
                    let w = (end - start) * inner;
                    for o in 0..outer {
                        let base = o * axis_len * inner + start * inner;
                        for (d, gv) in dx[base..base + w].iter_mut().zip(&g[o * w..(o + 1) * w]) {
                            *d += gv;
                        }
                    }
                }
            }
            &Op::Sum { x } => {
                let n = self.value(x).numel();
                self.accum(grads, x, std::iter::repeat_n(g[0], n));
            }
            &Op::Mean { x } => {
                let n = self.value(x).numel();
                self.accum(grads, x, std::iter::repeat_n(g[0] / n as f64, n));
            }
        }
    }

    fn accum_opt(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
        if let Some(g) = g {
            self.accum(grads, v, g);
        }
    }

    fn lstm_backward(&self, s: &LstmSaved, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (batch, hidden, g4) = (s.batch, s.hidden, 4 * s.hidden);
        let cd = self.data(s.c);
        let mut dgates = vec![0.0; batch * g4];
        let mut dc_prev = vec![0.0; batch * hidden];
        for b in 0..batch {
            let gr = &s.gates[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let (ig, fg, cg, og) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
                let tc = s.tanh_c[b * hidden + j];
                let dh = g[b * 2 * hidden + j];
                let dc = g[b * 2 * hidden + hidden + j] + dh * og * (1.0 - tc * tc);
                let dgr = &mut dgates[b * g4..(b + 1) * g4];
                dgr[j] = dc * cg * ig * (1.0 - ig);
                dgr[hidden + j] = dc * cd[b * hidden + j] * fg * (1.0 - fg);
                dgr[2 * hidden + j] = dc * ig * (1.0 - cg * cg);
                dgr[3 * hidden + j] = dh * tc * og * (1.0 - og);
                dc_prev[b * hidden + j] = dc * fg;
            }
        }
        self.accum(grads, s.c, dc_prev);
        if let Some(dx) = self.slot(grads, s.x) {
            kernels::matmul_grad_lhs(&dgates, self.data(s.w_ih), dx, batch, s.input, g4);
        }
        if let Some(dh) = self.slot(grads, s.h) {
            kernels::matmul_grad_lhs(&dgates, self.data(s.w_hh), dh, batch, hidden, g4);
        }
        if let Some(dw) = self.slot(grads, s.w_ih) {
            kernels::matmul_grad_rhs(self.data(s.x), &dgates, dw, batch, s.input, g4);
        }
        if let Some(dw) = self.slot(grads, s.w_hh) {
            kernels::matmul_grad_rhs(self.data(s.h), &dgates, dw, batch, hidden, g4);
        }
        if let Some(db) = self.slot(grads, s.bias) {
            for (j, gv) in dgates.iter().enumerate() {
                db[j % g4] += gv;
            }
        }
    }

    fn attention_backward(&self, s: &AttentionSaved, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (batch, time, width, heads) = (s.batch, s.time, s.width, s.heads);
        let rows = batch * time;
        let dh = width / heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        if let Some(dwo) = self.slot(grads, s.wo) {
            kernels::matmul_grad_rhs(&s.mixed, g, dwo, rows, width, width);
        }
        let mut dmixed = vec![0.0; rows * width];
        kernels::matmul_grad_lhs(g, self.data(s.wo), &mut dmixed, rows, width, width);

        let mut dq = vec![0.0; rows * width];
        let mut dk = vec![0.0; rows * width];
        let mut dv = vec![0.0; rows * width];
        let mut dp = vec![0.0; time * time];
        for b in 0..batch {
            for hd in 0..heads {
                let off = hd * dh;
                let pbase = (b * heads + hd) * time * time;
                let p = &s.probs[pbase..pbase + time * time];
                let at = |i: usize| (b * time + i) * width + off;
                // dP = dO · Vᵀ and dV = Pᵀ · dO
                for i in 0..time {
                    let dor = &dmixed[at(i)..at(i) + dh];
                    for j in 0..time {
                        dp[i * time + j] = kernels::dot(dor, &s.v[at(j)..at(j) + dh]);
                        let pij = p[i * time + j];
                        for e in 0..dh {
                            dv[at(j) + e] += pij * dor[e];
                        }
                    }
                }
                // softmax backward, then through the scaled scores
                for i in 0..time {
                    let pr = &p[i * time..(i + 1) * time];
                    let dpr = &mut dp[i * time..(i + 1) * time];
                    let sdot = kernels::dot(pr, dpr);
                    for j in 0..time {
                        dpr[j] = pr[j] * (dpr[j] - sdot) * inv_sqrt;
                    }
                    for j in 0..time {
                        let ds = dpr[j];
                        if ds == 0.0 {
                            continue;
                        }
                        for e in 0..dh {
                            dq[at(i) + e] += ds * s.k[at(j) + e];
                            dk[at(j) + e] += ds * s.q[at(i) + e];
                        }
                    }
                }
            }
        }
        let xd = self.data(s.x);
        for (w, d) in [(s.wq, &dq), (s.wk, &dk), (s.wv, &dv)] {
            if let Some(dw) = self.slot(grads, w) {
                kernels::matmul_grad_rhs(xd, d, dw, rows, width, width);
            }
        }
        if let Some(dx) = self.slot(grads, s.x) {
            for (w, d) in [(s.wq, &dq), (s.wk, &dk), (s.wv, &dv)] {
                kernels::matmul_grad_lhs(d, self.data(w), dx, rows, width, width);
            }
        }
    }
}
