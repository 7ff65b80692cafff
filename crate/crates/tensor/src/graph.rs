use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::{numel_of, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    Add(Var, Var),
    /// rhs is broadcast to lhs shape (axes equal or 1 after left-padding).
    AddBcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Bmm(Var, Var),
    Reshape(Var),
    PermuteAxes(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    /// out[i] = in[idx[i]]
    Gather(Var, Rc<Vec<u32>>),
    CyclicShift(Var, i64, i64),
    LayerNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, rstd: Vec<f64> },
    Softmax { x: Var, axis: usize },
    Relu(Var),
    Gelu(Var),
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, col: Rc<Vec<f64>> },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    UpsampleNearest2(Var),
    CrossEntropy { logits: Var, labels: Rc<Vec<u8>>, probs: Rc<Vec<f64>> },
    Sum(Var),
    Mean(Var),
}

/// Reverse-mode tape. Build it per forward pass, call [`Graph::backward`]
/// once, read leaf gradients, then drop it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

const GELU_COEF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(numel_of(&shape), data.len());
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { shape, data, grad: None, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
            .expect("graph node holds a valid tensor")
    }

    /// Gradient of the last `backward` target w.r.t. `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        self.nodes[v.0]
            .grad
            .as_ref()
            .map(|g| Tensor::new(self.nodes[v.0].shape.clone(), g.clone()).expect("grad matches shape"))
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Result<Var> {
        let (shape, data) = t.into_parts();
        self.push("leaf", shape, data, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t, false)
    }

    pub fn scalar(&mut self, v: f64) -> Result<Var> {
        self.leaf(Tensor::scalar(v), false)
    }

    // ---- elementwise and broadcast ------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::dim(
                "add",
                format!("shape {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let req = self.requires(a) || self.requires(b);
        self.push("add", self.nodes[a.0].shape.clone(), data, Op::Add(a, b), req)
    }

    /// `a + b` where `b`'s shape, left-padded with 1s, broadcasts to `a`'s.
    pub fn add_bcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let ashape = self.nodes[a.0].shape.clone();
        let bshape = self.nodes[b.0].shape.clone();
        let bpad = pad_shape(&bshape, ashape.len()).ok_or_else(|| {
            TensorError::dim("add_bcast", format!("rank of {:?} exceeds {:?}", bshape, ashape))
        })?;
        for (xa, xb) in ashape.iter().zip(&bpad) {
            if *xb != 1 && xb != xa {
                return Err(TensorError::dim(
                    "add_bcast",
                    format!("cannot broadcast {:?} onto {:?}", bshape, ashape),
                ));
            }
        }
        let adata = &self.nodes[a.0].data;
        let bdata = &self.nodes[b.0].data;
        let mut data = Vec::with_capacity(adata.len());
        // fast path: bias over the trailing axis
        if bpad.iter().take(ashape.len().saturating_sub(1)).all(|&x| x == 1)
            && bpad.last() == ashape.last()
        {
            let c = *ashape.last().unwrap_or(&1);
            for (i, x) in adata.iter().enumerate() {
                data.push(x + bdata[i % c]);
            }
        } else {
            let bstrides = broadcast_strides(&bpad, &ashape);
            let astrides = contiguous_strides(&ashape);
            for (i, x) in adata.iter().enumerate() {
                data.push(x + bdata[broadcast_offset(i, &astrides, &bstrides, &ashape)]);
            }
        }
        let req = self.requires(a) || self.requires(b);
        self.push("add_bcast", ashape, data, Op::AddBcast(a, b), req)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::dim(
                "mul",
                format!("shape {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let req = self.requires(a) || self.requires(b);
        self.push("mul", self.nodes[a.0].shape.clone(), data, Op::Mul(a, b), req)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x * c).collect();
        let req = self.requires(a);
        self.push("scale", self.nodes[a.0].shape.clone(), data, Op::Scale(a, c), req)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    // ---- matrix products ----------------------------------------------

    /// 2-D product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(TensorError::dim(
                "matmul",
                format!("incompatible shapes {:?} x {:?}", ash, bsh),
            ));
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let data = kernels::mm(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let req = self.requires(a) || self.requires(b);
        self.push("matmul", vec![m, n], data, Op::Matmul(a, b), req)
    }

    /// Batched product `[..., m, k] x [..., k, n] -> [..., m, n]` with equal
    /// leading dimensions.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() < 2 || ash.len() != bsh.len() || ash[..ash.len() - 2] != bsh[..bsh.len() - 2] {
            return Err(TensorError::dim("bmm", format!("incompatible shapes {:?} x {:?}", ash, bsh)));
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (k2, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        if k != k2 {
            return Err(TensorError::dim("bmm", format!("inner extents {} vs {}", k, k2)));
        }
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let mut data = vec![0.0; batch * m * n];
        for t in 0..batch {
            kernels::mm_into(
                &self.nodes[a.0].data[t * m * k..(t + 1) * m * k],
                &self.nodes[b.0].data[t * k * n..(t + 1) * k * n],
                m,
                k,
                n,
                &mut data[t * m * n..(t + 1) * m * n],
            );
        }
        let mut shape = ash[..ash.len() - 2].to_vec();
        shape.push(m);
        shape.push(n);
        let req = self.requires(a) || self.requires(b);
        self.push("bmm", shape, data, Op::Bmm(a, b), req)
    }

    /// `x @ w + b` over the trailing axis: `[..., in] x [in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        let wsh = self.shape(w).to_vec();
        if xsh.is_empty() || wsh.len() != 2 || *xsh.last().unwrap() != wsh[0] {
            return Err(TensorError::dim(
                "linear",
                format!("incompatible shapes {:?} x {:?}", xsh, wsh),
            ));
        }
        let rows: usize = xsh[..xsh.len() - 1].iter().product();
        let flat = self.reshape(x, vec![rows, wsh[0]])?;
        let mut y = self.matmul(flat, w)?;
        if let Some(b) = b {
            y = self.add_bcast(y, b)?;
        }
        let mut out_shape = xsh[..xsh.len() - 1].to_vec();
        out_shape.push(wsh[1]);
        self.reshape(y, out_shape)
    }

    // ---- structure -----------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel_of(&shape) != self.nodes[x.0].data.len() {
            return Err(TensorError::dim(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(x), shape),
            ));
        }
        let data = self.nodes[x.0].data.clone();
        let req = self.requires(x);
        self.push("reshape", shape, data, Op::Reshape(x), req)
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        let mut seen = vec![false; xsh.len()];
        if axes.len() != xsh.len() || axes.iter().any(|&a| a >= xsh.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::dim("permute", format!("bad axes {:?} for {:?}", axes, xsh)));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| xsh[a]).collect();
        let data = permute_data(&self.nodes[x.0].data, &xsh, axes);
        let req = self.requires(x);
        self.push("permute", out_shape, data, Op::PermuteAxes(x, axes.to_vec()), req)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::dim("concat", "no inputs".to_string()));
        }
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::dim("concat", format!("axis {} for rank {}", axis, first.len())));
        }
        let mut axis_total = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(d, &x)| d != axis && x != first[d])
            {
                return Err(TensorError::dim(
                    "concat",
                    format!("shape {:?} incompatible with {:?} on axis {}", s, first, axis),
                ));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; numel_of(&out_shape)];
        let row = axis_total * inner;
        let mut base = 0usize;
        for p in parts {
            let s_axis = self.shape(*p)[axis];
            let src = &self.nodes[p.0].data;
            for o in 0..outer {
                let dst = &mut data[o * row + base..o * row + base + s_axis * inner];
                dst.copy_from_slice(&src[o * s_axis * inner..(o + 1) * s_axis * inner]);
            }
            base += s_axis * inner;
        }
        let req = parts.iter().any(|p| self.requires(*p));
        self.push("concat", out_shape, data, Op::Concat(parts.to_vec(), axis), req)
    }

    /// `out[i] = x[idx[i]]`. Gradients scatter-add back through `idx`.
    pub fn gather(&mut self, x: Var, idx: Rc<Vec<u32>>, out_shape: Vec<usize>) -> Result<Var> {
        if numel_of(&out_shape) != idx.len() {
            return Err(TensorError::dim(
                "gather",
                format!("{} indices for shape {:?}", idx.len(), out_shape),
            ));
        }
        let n = self.nodes[x.0].data.len();
        if idx.iter().any(|&i| i as usize >= n) {
            return Err(TensorError::dim("gather", format!("index out of range for {} elements", n)));
        }
        let src = &self.nodes[x.0].data;
        let data: Vec<f64> = idx.iter().map(|&i| src[i as usize]).collect();
        let req = self.requires(x);
        self.push("gather", out_shape, data, Op::Gather(x, idx), req)
    }

    /// Toroidal roll of the spatial axes of `[B, H, W, C]`; positive `dy`
    /// moves content toward larger row indices.
    pub fn cyclic_shift(&mut self, x: Var, dy: i64, dx: i64) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() != 4 {
            return Err(TensorError::dim("cyclic_shift", format!("need [B,H,W,C], got {:?}", sh)));
        }
        let (h, w) = (sh[1] as i64, sh[2] as i64);
        if dy.abs() >= h || dx.abs() >= w {
            return Err(TensorError::dim(
                "cyclic_shift",
                format!("shift ({}, {}) out of range for {}x{}", dy, dx, h, w),
            ));
        }
        let data = roll_bhwc(&self.nodes[x.0].data, &sh, dy, dx);
        let req = self.requires(x);
        self.push("cyclic_shift", sh, data, Op::CyclicShift(x, dy, dx), req)
    }

    // ---- normalization and activations ----------------------------------

    /// LayerNorm over the trailing axis with population variance:
    /// `y = (x - mean) / sqrt(var + eps) * gamma + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        let c = *sh.last().ok_or_else(|| TensorError::dim("layer_norm", "scalar input".to_string()))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(TensorError::dim(
                "layer_norm",
                format!("gamma {:?} / beta {:?} for channel extent {}", self.shape(gamma), self.shape(beta), c),
            ));
        }
        if eps <= 0.0 {
            return Err(TensorError::dim("layer_norm", format!("eps must be positive, got {}", eps)));
        }
        let rows = self.nodes[x.0].data.len() / c;
        let mut data = vec![0.0; rows * c];
        let mut means = vec![0.0; rows];
        let mut rstds = vec![0.0; rows];
        {
            let xd = &self.nodes[x.0].data;
            let gd = &self.nodes[gamma.0].data;
            let bd = &self.nodes[beta.0].data;
            for r in 0..rows {
                let row = &xd[r * c..(r + 1) * c];
                let mean = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                let rstd = 1.0 / (var + eps).sqrt();
                means[r] = mean;
                rstds[r] = rstd;
                let out = &mut data[r * c..(r + 1) * c];
                for j in 0..c {
                    out[j] = (row[j] - mean) * rstd * gd[j] + bd[j];
                }
            }
        }
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        self.push(
            "layer_norm",
            sh,
            data,
            Op::LayerNorm { x, gamma, beta, mean: means, rstd: rstds },
            req,
        )
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if axis >= sh.len() {
            return Err(TensorError::dim("softmax", format!("axis {} for rank {}", axis, sh.len())));
        }
        let outer: usize = sh[..axis].iter().product();
        let len = sh[axis];
        let inner: usize = sh[axis + 1..].iter().product();
        let xd = &self.nodes[x.0].data;
        let mut data = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut max = f64::NEG_INFINITY;
                for k in 0..len {
                    max = max.max(xd[at(k)]);
                }
                let mut sum = 0.0;
                for k in 0..len {
                    let e = (xd[at(k)] - max).exp();
                    data[at(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    data[at(k)] /= sum;
                }
            }
        }
        let req = self.requires(x);
        self.push("softmax", sh, data, Op::Softmax { x, axis }, req)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.max(0.0)).collect();
        let req = self.requires(x);
        self.push("relu", self.nodes[x.0].shape.clone(), data, Op::Relu(x), req)
    }

    /// GELU, tanh approximation:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| gelu_scalar(v)).collect();
        let req = self.requires(x);
        self.push("gelu", self.nodes[x.0].shape.clone(), data, Op::Gelu(x), req)
    }

    // ---- convolution and pooling ----------------------------------------

    /// Cross-correlation over `[B, H, W, Cin]` with kernel `[kh, kw, Cin, Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        let wsh = self.shape(w).to_vec();
        if xsh.len() != 4 || wsh.len() != 4 {
            return Err(TensorError::dim("conv2d", format!("need x [B,H,W,C], kernel [kh,kw,Cin,Cout]; got {:?}, {:?}", xsh, wsh)));
        }
        if stride == 0 {
            return Err(TensorError::dim("conv2d", "stride must be positive".to_string()));
        }
        let (bs, h, wd, cin) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let (kh, kw, wcin, cout) = (wsh[0], wsh[1], wsh[2], wsh[3]);
        if cin != wcin {
            return Err(TensorError::dim("conv2d", format!("input channels {} vs kernel {}", cin, wcin)));
        }
        if let Some(bv) = b {
            if self.shape(bv) != [cout] {
                return Err(TensorError::dim("conv2d", format!("bias {:?} for {} outputs", self.shape(bv), cout)));
            }
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(TensorError::dim("conv2d", "non-positive output extent".to_string()));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let col = kernels::im2col(&self.nodes[x.0].data, bs, h, wd, cin, kh, kw, stride, pad, oh, ow);
        let rows = bs * oh * ow;
        let kdim = kh * kw * cin;
        let mut data = kernels::mm(&col, &self.nodes[w.0].data, rows, kdim, cout);
        if let Some(bv) = b {
            let bd = &self.nodes[bv.0].data;
            for (i, v) in data.iter_mut().enumerate() {
                *v += bd[i % cout];
            }
        }
        let req = self.requires(x) || self.requires(w) || b.map(|bv| self.requires(bv)).unwrap_or(false);
        self.push(
            "conv2d",
            vec![bs, oh, ow, cout],
            data,
            Op::Conv2d { x, w, b, stride, pad, col: Rc::new(col) },
            req,
        )
    }

    /// 2x2 max pooling with stride 2 over `[B, H, W, C]`.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() != 4 || sh[1] < 2 || sh[2] < 2 {
            return Err(TensorError::dim("max_pool2", format!("need [B,H>=2,W>=2,C], got {:?}", sh)));
        }
        let (bs, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
        let (oh, ow) = (h / 2, w / 2);
        let xd = &self.nodes[x.0].data;
        let mut data = vec![0.0; bs * oh * ow * c];
        let mut argmax = vec![0u32; bs * oh * ow * c];
        for b in 0..bs {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = 0usize;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let at = ((b * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                                if xd[at] > best {
                                    best = xd[at];
                                    best_at = at;
                                }
                            }
                        }
                        let o = ((b * oh + oy) * ow + ox) * c + ch;
                        data[o] = best;
                        argmax[o] = best_at as u32;
                    }
                }
            }
        }
        let req = self.requires(x);
        self.push("max_pool2", vec![bs, oh, ow, c], data, Op::MaxPool2 { x, argmax }, req)
    }

    /// Nearest-neighbour 2x upsampling over `[B, H, W, C]`.
    pub fn upsample_nearest2(&mut self, x: Var) -> Result<Var> {
        let sh = self.shape(x).to_vec();
        if sh.len() != 4 {
            return Err(TensorError::dim("upsample_nearest2", format!("need [B,H,W,C], got {:?}", sh)));
        }
        let (bs, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
        let xd = &self.nodes[x.0].data;
        let mut data = vec![0.0; bs * 4 * h * w * c];
        for b in 0..bs {
            for y in 0..2 * h {
                for x_ in 0..2 * w {
                    let src = ((b * h + y / 2) * w + x_ / 2) * c;
                    let dst = ((b * 2 * h + y) * 2 * w + x_) * c;
                    data[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
        let req = self.requires(x);
        self.push("upsample_nearest2", vec![bs, 2 * h, 2 * w, c], data, Op::UpsampleNearest2(x), req)
    }

    // ---- loss and reductions ---------------------------------------------

    /// Mean over all positions of `-log softmax(logits)[label]`.
    /// `logits` is `[..., K]`; `labels` supplies one class per position.
    pub fn cross_entropy(&mut self, logits: Var, labels: Rc<Vec<u8>>) -> Result<Var> {
        let sh = self.shape(logits).to_vec();
        let k = *sh.last().ok_or_else(|| TensorError::dim("cross_entropy", "scalar logits".to_string()))?;
        let rows = self.nodes[logits.0].data.len() / k;
        if labels.len() != rows {
            return Err(TensorError::dim(
                "cross_entropy",
                format!("{} labels for {} positions", labels.len(), rows),
            ));
        }
        for &l in labels.iter() {
            if l as usize >= k {
                return Err(TensorError::InvalidLabel { label: l as usize, classes: k });
            }
        }
        let xd = &self.nodes[logits.0].data;
        let mut probs = vec![0.0; rows * k];
        let mut loss = 0.0;
        for r in 0..rows {
            let row = &xd[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..k {
                let e = (row[j] - max).exp();
                probs[r * k + j] = e;
                sum += e;
            }
            for j in 0..k {
                probs[r * k + j] /= sum;
            }
            let lse = max + sum.ln();
            loss += lse - row[labels[r] as usize];
        }
        loss /= rows as f64;
        let req = self.requires(logits);
        self.push(
            "cross_entropy",
            vec![],
            vec![loss],
            Op::CrossEntropy { logits, labels, probs: Rc::new(probs) },
            req,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let req = self.requires(x);
        self.push("sum", vec![], vec![s], Op::Sum(x), req)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.nodes[x.0].data.len();
        let s: f64 = self.nodes[x.0].data.iter().sum::<f64>() / n as f64;
        let req = self.requires(x);
        self.push("mean", vec![], vec![s], Op::Mean(x), req)
    }

    // ---- backward ---------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every `requires_grad` leaf.
    /// Errors if `loss` is not scalar or the tape already ran backward.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::BackwardNonScalar { shape: self.nodes[loss.0].shape.clone() });
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let n = self.nodes[loss.0].data.len();
        self.nodes[loss.0].grad = Some(vec![1.0; n]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize) {
        let (pre, rest) = self.nodes.split_at_mut(i);
        let node = &rest[0];
        let g = node.grad.as_ref().expect("caller checked grad presence");
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if pre[a.0].requires_grad {
                    axpy(grad_mut(pre, *a), g, 1.0);
                }
                if pre[b.0].requires_grad {
                    axpy(grad_mut(pre, *b), g, 1.0);
                }
            }
            Op::AddBcast(a, b) => {
                if pre[a.0].requires_grad {
                    axpy(grad_mut(pre, *a), g, 1.0);
                }
                if pre[b.0].requires_grad {
                    let ashape = node.shape.clone();
                    let bshape = pre[b.0].shape.clone();
                    let bpad = pad_shape(&bshape, ashape.len()).unwrap();
                    let bstrides = broadcast_strides(&bpad, &ashape);
                    let astrides = contiguous_strides(&ashape);
                    let gb = grad_mut(pre, *b);
                    for (idx, gv) in g.iter().enumerate() {
                        gb[broadcast_offset(idx, &astrides, &bstrides, &ashape)] += gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                if pre[a.0].requires_grad {
                    let da: Vec<f64> = g.iter().zip(&pre[b.0].data).map(|(gv, bv)| gv * bv).collect();
                    axpy(grad_mut(pre, *a), &da, 1.0);
                }
                if pre[b.0].requires_grad {
                    let db: Vec<f64> = g.iter().zip(&pre[a.0].data).map(|(gv, av)| gv * av).collect();
                    axpy(grad_mut(pre, *b), &db, 1.0);
                }
            }
            Op::Scale(a, c) => {
                if pre[a.0].requires_grad {
                    axpy(grad_mut(pre, *a), g, *c);
                }
            }
            Op::Matmul(a, b) => {
                let (m, n) = (node.shape[0], node.shape[1]);
                let k = pre[a.0].shape[1];
                if pre[a.0].requires_grad {
                    let bt = kernels::transpose(&pre[b.0].data, k, n);
                    let da = kernels::mm(g, &bt, m, n, k);
                    axpy(grad_mut(pre, *a), &da, 1.0);
                }
                if pre[b.0].requires_grad {
                    let at = kernels::transpose(&pre[a.0].data, m, k);
                    let db = kernels::mm(&at, g, k, m, n);
                    axpy(grad_mut(pre, *b), &db, 1.0);
                }
            }
            Op::Bmm(a, b) => {
                let rank = node.shape.len();
                let (m, n) = (node.shape[rank - 2], node.shape[rank - 1]);
                let k = pre[a.0].shape[rank - 1];
                let batch: usize = node.shape[..rank - 2].iter().product();
                if pre[a.0].requires_grad {
                    let mut da = vec![0.0; batch * m * k];
                    for t in 0..batch {
                        let bt = kernels::transpose(&pre[b.0].data[t * k * n..(t + 1) * k * n], k, n);
                        kernels::mm_into(&g[t * m * n..(t + 1) * m * n], &bt, m, n, k, &mut da[t * m * k..(t + 1) * m * k]);
                    }
                    axpy(grad_mut(pre, *a), &da, 1.0);
                }
                if pre[b.0].requires_grad {
                    let mut db = vec![0.0; batch * k * n];
                    for t in 0..batch {
                        let at = kernels::transpose(&pre[a.0].data[t * m * k..(t + 1) * m * k], m, k);
                        kernels::mm_into(&at, &g[t * m * n..(t + 1) * m * n], k, m, n, &mut db[t * k * n..(t + 1) * k * n]);
                    }
                    axpy(grad_mut(pre, *b), &db, 1.0);
                }
            }
            Op::Reshape(a) => {
                if pre[a.0].requires_grad {
                    axpy(grad_mut(pre, *a), g, 1.0);
                }
            }
            Op::PermuteAxes(a, axes) => {
                if pre[a.0].requires_grad {
                    let inv = invert_axes(axes);
                    let back = permute_data(g, &node.shape, &inv);
                    axpy(grad_mut(pre, *a), &back, 1.0);
                }
            }
            Op::Concat(parts, axis) => {
                let axis = *axis;
                let outer: usize = node.shape[..axis].iter().product();
                let inner: usize = node.shape[axis + 1..].iter().product();
                let row = node.shape[axis] * inner;
                let mut base = 0usize;
                let sizes: Vec<usize> = parts.iter().map(|p| pre[p.0].shape[axis]).collect();
                for (p, s_axis) in parts.iter().zip(sizes) {
                    if pre[p.0].requires_grad {
                        let gp = grad_mut(pre, *p);
                        for o in 0..outer {
                            let src = &g[o * row + base..o * row + base + s_axis * inner];
                            let dst = &mut gp[o * s_axis * inner..(o + 1) * s_axis * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    base += s_axis * inner;
                }
            }
            Op::Gather(a, idx) => {
                if pre[a.0].requires_grad {
                    let idx = idx.clone();
                    let ga = grad_mut(pre, *a);
                    for (o, &src) in idx.iter().enumerate() {
                        ga[src as usize] += g[o];
                    }
                }
            }
            Op::CyclicShift(a, dy, dx) => {
                if pre[a.0].requires_grad {
                    let back = roll_bhwc(g, &node.shape, -dy, -dx);
                    axpy(grad_mut(pre, *a), &back, 1.0);
                }
            }
            Op::LayerNorm { x, gamma, beta, mean, rstd } => {
                let c = *node.shape.last().unwrap();
                let rows = node.data.len() / c;
                let xd = &pre[x.0].data;
                let gd = &pre[gamma.0].data;
                let want_x = pre[x.0].requires_grad;
                let want_g = pre[gamma.0].requires_grad;
                let want_b = pre[beta.0].requires_grad;
                let mut dx = if want_x { vec![0.0; rows * c] } else { Vec::new() };
                let mut dgamma = if want_g { vec![0.0; c] } else { Vec::new() };
                let mut dbeta = if want_b { vec![0.0; c] } else { Vec::new() };
                for r in 0..rows {
                    let xrow = &xd[r * c..(r + 1) * c];
                    let grow = &g[r * c..(r + 1) * c];
                    let (mu, rs) = (mean[r], rstd[r]);
                    if want_g || want_b {
                        for j in 0..c {
                            let xhat = (xrow[j] - mu) * rs;
                            if want_g {
                                dgamma[j] += grow[j] * xhat;
                            }
                            if want_b {
                                dbeta[j] += grow[j];
                            }
                        }
                    }
                    if want_x {
                        // dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            let xhat = (xrow[j] - mu) * rs;
                            let dxhat = grow[j] * gd[j];
                            s1 += dxhat;
                            s2 += dxhat * xhat;
                        }
                        s1 /= c as f64;
                        s2 /= c as f64;
                        let out = &mut dx[r * c..(r + 1) * c];
                        for j in 0..c {
                            let xhat = (xrow[j] - mu) * rs;
                            let dxhat = grow[j] * gd[j];
                            out[j] = rs * (dxhat - s1 - xhat * s2);
                        }
                    }
                }
                if want_x {
                    axpy(grad_mut(pre, *x), &dx, 1.0);
                }
                if want_g {
                    axpy(grad_mut(pre, *gamma), &dgamma, 1.0);
                }
                if want_b {
                    axpy(grad_mut(pre, *beta), &dbeta, 1.0);
                }
            }
            Op::Softmax { x, axis } => {
                if pre[x.0].requires_grad {
                    let axis = *axis;
                    let outer: usize = node.shape[..axis].iter().product();
                    let len = node.shape[axis];
                    let inner: usize = node.shape[axis + 1..].iter().product();
                    let y = &node.data;
                    let mut dx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let mut dot = 0.0;
                            for k in 0..len {
                                dot += g[at(k)] * y[at(k)];
                            }
                            for k in 0..len {
                                dx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                    axpy(grad_mut(pre, *x), &dx, 1.0);
                }
            }
            Op::Relu(a) => {
                if pre[a.0].requires_grad {
                    let dx: Vec<f64> = pre[a.0]
                        .data
                        .iter()
                        .zip(g)
                        .map(|(x, gv)| if *x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    axpy(grad_mut(pre, *a), &dx, 1.0);
                }
            }
            Op::Gelu(a) => {
                if pre[a.0].requires_grad {
                    let dx: Vec<f64> = pre[a.0].data.iter().zip(g).map(|(x, gv)| gv * gelu_deriv(*x)).collect();
                    axpy(grad_mut(pre, *a), &dx, 1.0);
                }
            }
            Op::Conv2d { x, w, b, stride, pad, col } => {
                let (bs, oh, ow, cout) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
                let xsh = pre[x.0].shape.clone();
                let (h, wd, cin) = (xsh[1], xsh[2], xsh[3]);
                let (kh, kw) = (pre[w.0].shape[0], pre[w.0].shape[1]);
                let rows = bs * oh * ow;
                let kdim = kh * kw * cin;
                if pre[w.0].requires_grad {
                    let colt = kernels::transpose(col, rows, kdim);
                    let dw = kernels::mm(&colt, g, kdim, rows, cout);
                    axpy(grad_mut(pre, *w), &dw, 1.0);
                }
                if let Some(bv) = b {
                    if pre[bv.0].requires_grad {
                        let mut db = vec![0.0; cout];
                        for (i, gv) in g.iter().enumerate() {
                            db[i % cout] += gv;
                        }
                        axpy(grad_mut(pre, *bv), &db, 1.0);
                    }
                }
                if pre[x.0].requires_grad {
                    let wt = kernels::transpose(&pre[w.0].data, kdim, cout);
                    let dcol = kernels::mm(g, &wt, rows, cout, kdim);
                    let dx = kernels::col2im(&dcol, bs, h, wd, cin, kh, kw, *stride, *pad, oh, ow);
                    axpy(grad_mut(pre, *x), &dx, 1.0);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if pre[x.0].requires_grad {
                    let pairs: Vec<(u32, f64)> = argmax.iter().copied().zip(g.iter().copied()).collect();
                    let gx = grad_mut(pre, *x);
                    for (src, gv) in pairs {
                        gx[src as usize] += gv;
                    }
                }
            }
            Op::UpsampleNearest2(a) => {
                if pre[a.0].requires_grad {
                    let (bs, oh, ow, c) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
                    let (h, w) = (oh / 2, ow / 2);
                    let ga = grad_mut(pre, *a);
                    for b_ in 0..bs {
                        for y in 0..oh {
                            for x_ in 0..ow {
                                let src = ((b_ * h + y / 2) * w + x_ / 2) * c;
                                let dst = ((b_ * oh + y) * ow + x_) * c;
                                for ch in 0..c {
                                    ga[src + ch] += g[dst + ch];
                                }
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                if pre[logits.0].requires_grad {
                    let k = *pre[logits.0].shape.last().unwrap();
                    let rows = probs.len() / k;
                    let scale = g[0] / rows as f64;
                    let labels = labels.clone();
                    let probs = probs.clone();
                    let gl = grad_mut(pre, *logits);
                    for r in 0..rows {
                        let y = labels[r] as usize;
                        for j in 0..k {
                            let indicator = if j == y { 1.0 } else { 0.0 };
                            gl[r * k + j] += scale * (probs[r * k + j] - indicator);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if pre[a.0].requires_grad {
                    let gv = g[0];
                    for v in grad_mut(pre, *a).iter_mut() {
                        *v += gv;
                    }
                }
            }
            Op::Mean(a) => {
                if pre[a.0].requires_grad {
                    let n = pre[a.0].data.len() as f64;
                    let gv = g[0] / n;
                    for v in grad_mut(pre, *a).iter_mut() {
                        *v += gv;
                    }
                }
            }
        }
    }
}

fn grad_mut(nodes: &mut [Node], v: Var) -> &mut Vec<f64> {
    let node = &mut nodes[v.0];
    if node.grad.is_none() {
        node.grad = Some(vec![0.0; node.data.len()]);
    }
    node.grad.as_mut().unwrap()
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for d in (0..shape.len()).rev() {
        strides[d] = acc;
        acc *= shape[d];
    }
    strides
}

fn pad_shape(shape: &[usize], rank: usize) -> Option<Vec<usize>> {
    if shape.len() > rank {
        return None;
    }
    let mut out = vec![1usize; rank];
    out[rank - shape.len()..].copy_from_slice(shape);
    Some(out)
}

/// Strides for indexing the broadcast operand: 0 on broadcast axes.
fn broadcast_strides(padded: &[usize], _target: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(padded);
    padded
        .iter()
        .zip(own)
        .map(|(&extent, stride)| if extent == 1 { 0 } else { stride })
        .collect()
}

fn broadcast_offset(flat: usize, target_strides: &[usize], bstrides: &[usize], target_shape: &[usize]) -> usize {
    let mut rem = flat;
    let mut off = 0usize;
    for d in 0..target_shape.len() {
        let coord = rem / target_strides[d];
        rem %= target_strides[d];
        off += coord * bstrides[d];
    }
    off
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let in_strides = contiguous_strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let out_strides = contiguous_strides(&out_shape);
    let mut out = vec![0.0; data.len()];
    for (o, slot) in out.iter_mut().enumerate() {
        let mut rem = o;
        let mut src = 0usize;
        for d in 0..out_shape.len() {
            let coord = rem / out_strides[d];
            rem %= out_strides[d];
            src += coord * in_strides[axes[d]];
        }
        *slot = data[src];
    }
    out
}

fn invert_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (d, &a) in axes.iter().enumerate() {
        inv[a] = d;
    }
    inv
}

fn roll_bhwc(data: &[f64], shape: &[usize], dy: i64, dx: i64) -> Vec<f64> {
    let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let (hi, wi) = (h as i64, w as i64);
    let mut out = vec![0.0; data.len()];
    for bi in 0..b {
        for y in 0..h {
            let sy = ((y as i64 - dy).rem_euclid(hi)) as usize;
            for x in 0..w {
                let sx = ((x as i64 - dx).rem_euclid(wi)) as usize;
                let src = ((bi * h + sy) * w + sx) * c;
                let dst = ((bi * h + y) * w + x) * c;
                out[dst..dst + c].copy_from_slice(&data[src..src + c]);
            }
        }
    }
    out
}

pub(crate) mod kernels {
    use rayon::prelude::*;

    const PAR_FLOPS: usize = 1 << 17;

    pub fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        mm_into(a, b, m, k, n, &mut out);
        out
    }

    /// `out += a @ b` with `out` starting zeroed by the caller.
    pub fn mm_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
        let work = m.saturating_mul(k).saturating_mul(n);
        if work >= PAR_FLOPS && m > 1 {
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| mm_row(a, b, i, k, n, row));
        } else {
            for (i, row) in out.chunks_mut(n).enumerate() {
                mm_row(a, b, i, k, n, row);
            }
        }
    }

    #[inline]
    fn mm_row(a: &[f64], b: &[f64], i: usize, k: usize, n: usize, row: &mut [f64]) {
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                let brow = &b[p * n..p * n + n];
                for (r, bv) in row.iter_mut().zip(brow) {
                    *r += av * bv;
                }
            }
        }
    }

    pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; a.len()];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = a[r * cols + c];
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    pub fn im2col(
        x: &[f64],
        bs: usize,
        h: usize,
        w: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        oh: usize,
        ow: usize,
    ) -> Vec<f64> {
        let kdim = kh * kw * cin;
        let mut col = vec![0.0; bs * oh * ow * kdim];
        for b in 0..bs {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * kdim;
                    for ky in 0..kh {
                        let y = (oy * stride + ky) as i64 - pad as i64;
                        if y < 0 || y >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let xx = (ox * stride + kx) as i64 - pad as i64;
                            if xx < 0 || xx >= w as i64 {
                                continue;
                            }
                            let src = ((b * h + y as usize) * w + xx as usize) * cin;
                            let dst = row + (ky * kw + kx) * cin;
                            col[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                        }
                    }
                }
            }
        }
        col
    }

    #[allow(clippy::too_many_arguments)]
    pub fn col2im(
        dcol: &[f64],
        bs: usize,
        h: usize,
        w: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        oh: usize,
        ow: usize,
    ) -> Vec<f64> {
        let kdim = kh * kw * cin;
        let mut dx = vec![0.0; bs * h * w * cin];
        for b in 0..bs {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = ((b * oh + oy) * ow + ox) * kdim;
                    for ky in 0..kh {
                        let y = (oy * stride + ky) as i64 - pad as i64;
                        if y < 0 || y >= h as i64 {
                            continue;
                        }
                        for kx in 0..kw {
                            let xx = (ox * stride + kx) as i64 - pad as i64;
                            if xx < 0 || xx >= w as i64 {
                                continue;
                            }
                            let dst = ((b * h + y as usize) * w + xx as usize) * cin;
                            let src = row + (ky * kw + kx) * cin;
                            for c in 0..cin {
                                dx[dst + c] += dcol[src + c];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}
