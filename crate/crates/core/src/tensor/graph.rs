//! Reverse-mode autodiff on an eager tape.
//!
//! Every builder method computes its value immediately and records the op on
//! the tape; `backward` walks the tape once in reverse. Values live in
//! [`DenseArray`]s; most ops treat tensors as 2-D `[rows, cols]`.
//!
//! Gradients flow only into subgraphs rooted at `input` or trainable `param`
//! leaves; constants (images, masks, one-hot targets) cost nothing in the
//! backward pass.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::array::{matmul, matmul_nt, matmul_tn, DenseArray};
use crate::tensor::params::{ParamId, ParamStore};

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Errors surfaced by the tape itself (shape bugs panic instead).
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

enum Op<T> {
    Constant,
    Input,
    Param(ParamId),
    Matmul { a: NodeId, b: NodeId },
    /// `a * b^T` with `b` stored `[n, k]`.
    MatmulNT { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    MulElem { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: T },
    /// Add `row` (shape `[n]`) to every row of `a` (`[m, n]`).
    AddRowBroadcast { a: NodeId, row: NodeId },
    /// Multiply every row of `a` elementwise by `row`.
    MulRowBroadcast { a: NodeId, row: NodeId },
    /// Multiply row `i` of `a` by `col[i]`.
    MulColBroadcast { a: NodeId, col: NodeId },
    Abs { a: NodeId },
    Relu { a: NodeId },
    Gelu { a: NodeId },
    Sigmoid { a: NodeId },
    Sin { a: NodeId },
    Cos { a: NodeId },
    SumAll { a: NodeId },
    /// Per-row layer norm with learned gain/bias; caches normalized values.
    LayerNorm { a: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<T>, inv_std: Vec<T> },
    /// Row softmax; masked entries were excluded and output exactly 0, so the
    /// backward needs no record of the mask.
    SoftmaxRowsMasked { a: NodeId },
    LogSoftmaxRows { a: NodeId },
    /// Rows of `table` selected by index.
    EmbeddingGather { table: NodeId, idx: Vec<usize> },
    /// Bilinear sampling of `featmap` (`[h*w, d]`) at continuous pixel
    /// locations `points` (`[p, 2]`, x then y, clamped to the map).
    GridSample { featmap: NodeId, points: NodeId, h: usize, w: usize },
    ConcatRows { a: NodeId, b: NodeId },
    SliceRows { a: NodeId, start: usize, len: usize },
    SliceCols { a: NodeId, start: usize, len: usize },
    ConcatCols { parts: Vec<NodeId> },
    Reshape { a: NodeId },
    /// Each row repeated `times` consecutive times.
    RepeatRows { a: NodeId, times: usize },
    /// Sums each consecutive block of `group` rows.
    SumGroupRows { a: NodeId, group: usize },
    Dropout { a: NodeId, keep: T, mask: Vec<bool> },
    /// 3x3-style patch extraction: `a` is `[h*w, cin]`, output `[oh*ow, k*k*cin]`.
    Im2Col { a: NodeId, h: usize, w: usize, cin: usize, k: usize, stride: usize, pad: usize },
}

struct Node<T> {
    value: DenseArray<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Tape mode: training enables dropout, eval makes it the identity.
enum Mode {
    Eval,
    Train { rng: ChaCha8Rng },
}

/// Eager autodiff tape.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    params_used: Vec<(ParamId, NodeId)>,
    mode: Mode,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the root w.r.t. the node's value, if the node needed one.
    pub fn of(&self, id: NodeId) -> Option<&DenseArray<T>> {
        self.grads[id.0].as_ref()
    }
}

impl<T: Scalar> Graph<T> {
    /// Tape with dropout disabled.
    pub fn eval() -> Self {
        Self { nodes: Vec::new(), params_used: Vec::new(), mode: Mode::Eval }
    }

    /// Tape with dropout enabled; `seed` fixes the masks.
    pub fn train(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params_used: Vec::new(),
            mode: Mode::Train { rng: ChaCha8Rng::seed_from_u64(seed) },
        }
    }

    pub fn value(&self, id: NodeId) -> &DenseArray<T> {
        &self.nodes[id.0].value
    }

    /// If the node is a parameter leaf, the stored parameter it copies.
    pub fn param_id(&self, id: NodeId) -> Option<ParamId> {
        match self.nodes[id.0].op {
            Op::Param(pid) => Some(pid),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseArray<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, v: DenseArray<T>) -> NodeId {
        self.push(v, Op::Constant, false)
    }

    /// Leaf whose gradient is retained (inputs under test, sample points, ...).
    pub fn input(&mut self, v: DenseArray<T>) -> NodeId {
        self.push(v, Op::Input, true)
    }

    /// Leaf holding a copy of a stored parameter; its gradient is collected by
    /// [`Graph::param_grads`]. Frozen parameters enter as constants.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        let trainable = store.is_trainable(id);
        let nid = self.push(store.value(id).clone(), Op::Param(id), trainable);
        if trainable {
            self.params_used.push((id, nid));
        }
        nid
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Matmul { a, b }, ng)
    }

    /// `a * b^T` with `b` stored row-major `[n, k]`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_nt(self.value(a), self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatmulNT { a, b }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let mut v = va.clone();
        v.add_assign(vb);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add { a, b }, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect();
        let v = DenseArray::from_vec(va.shape(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub { a, b }, ng)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul_elem shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let v = DenseArray::from_vec(va.shape(), data);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MulElem { a, b }, ng)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let mut v = self.value(a).clone();
        v.scale_assign(c);
        let ng = self.ng(a);
        self.push(v, Op::Scale { a, c }, ng)
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.len(), n, "add_row_broadcast: row length {} vs {} cols", vr.len(), n);
        let mut v = va.clone();
        for r in 0..v.rows() {
            let off = r * n;
            for j in 0..n {
                v.data_mut()[off + j] += vr.data()[j];
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRowBroadcast { a, row }, ng)
    }

    pub fn mul_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.len(), n, "mul_row_broadcast: row length {} vs {} cols", vr.len(), n);
        let mut v = va.clone();
        for r in 0..v.rows() {
            let off = r * n;
            for j in 0..n {
                v.data_mut()[off + j] *= vr.data()[j];
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::MulRowBroadcast { a, row }, ng)
    }

    pub fn mul_col_broadcast(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (va, vc) = (self.value(a), self.value(col));
        let (m, n) = (va.rows(), va.cols());
        assert_eq!(vc.len(), m, "mul_col_broadcast: col length {} vs {} rows", vc.len(), m);
        let mut v = va.clone();
        for r in 0..m {
            let s = vc.data()[r];
            for x in &mut v.data_mut()[r * n..(r + 1) * n] {
                *x *= s;
            }
        }
        let ng = self.ng(a) || self.ng(col);
        self.push(v, Op::MulColBroadcast { a, col }, ng)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| x.abs()).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Abs { a }, ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Relu { a }, ng)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| gelu_fwd(x)).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Gelu { a }, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let one = T::one();
        let data = self.value(a).data().iter().map(|&x| one / (one + (-x).exp())).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid { a }, ng)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| x.sin()).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Sin { a }, ng)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| x.cos()).collect();
        let v = DenseArray::from_vec(self.value(a).shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Cos { a }, ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: T = self.value(a).data().iter().copied().sum();
        let ng = self.ng(a);
        self.push(DenseArray::scalar(s), Op::SumAll { a }, ng)
    }

    /// Per-row layer normalization with learned `gamma`/`beta` of length `cols`.
    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let eps = T::from_f64_lossy(1e-5);
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        assert_eq!(self.value(gamma).len(), n, "layer_norm gamma length");
        assert_eq!(self.value(beta).len(), n, "layer_norm beta length");
        let nt = T::from_f64_lossy(n as f64);
        let mut out = vec![T::zero(); m * n];
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = vec![T::zero(); m];
        let (g, b) = (self.value(gamma).data().to_vec(), self.value(beta).data().to_vec());
        for r in 0..m {
            let row = &va.data()[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nt;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / nt;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..n {
                let xh = (row[j] - mean) * istd;
                xhat[r * n + j] = xh;
                out[r * n + j] = xh * g[j] + b[j];
            }
        }
        let ng = self.ng(a) || self.ng(gamma) || self.ng(beta);
        self.push(
            DenseArray::from_vec(&[m, n], out),
            Op::LayerNorm { a, gamma, beta, xhat, inv_std },
            ng,
        )
    }

    /// Row-wise softmax over unmasked entries; masked entries output exactly 0.
    ///
    /// Panics if some row has every entry masked — the attention layouts in
    /// this crate always admit at least the image keys, so a fully masked row
    /// is a construction bug.
    pub fn softmax_rows_masked(&mut self, a: NodeId, mask: Option<Arc<Vec<bool>>>) -> NodeId {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        if let Some(msk) = &mask {
            assert_eq!(msk.len(), m * n, "softmax mask length");
        }
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let row = &va.data()[r * n..(r + 1) * n];
            let allowed = |j: usize| mask.as_ref().map_or(true, |msk| msk[r * n + j]);
            let mut mx = T::neg_infinity();
            for j in 0..n {
                if allowed(j) && row[j] > mx {
                    mx = row[j];
                }
            }
            assert!(
                mx > T::neg_infinity(),
                "softmax row {r} is fully masked; attention must keep at least one key"
            );
            let mut denom = T::zero();
            for j in 0..n {
                if allowed(j) {
                    let e = (row[j] - mx).exp();
                    out[r * n + j] = e;
                    denom += e;
                }
            }
            for j in 0..n {
                out[r * n + j] /= denom;
            }
        }
        let ng = self.ng(a);
        self.push(DenseArray::from_vec(&[m, n], out), Op::SoftmaxRowsMasked { a }, ng)
    }

    /// Row-wise log-softmax (numerically stable; used by the CE losses).
    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let row = &va.data()[r * n..(r + 1) * n];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&x| (x - mx).exp()).sum::<T>().ln() + mx;
            for j in 0..n {
                out[r * n + j] = row[j] - lse;
            }
        }
        let ng = self.ng(a);
        self.push(DenseArray::from_vec(&[m, n], out), Op::LogSoftmaxRows { a }, ng)
    }

    /// Select rows of `table` by index: output `[idx.len(), cols]`.
    pub fn embedding_gather(&mut self, table: NodeId, idx: Vec<usize>) -> NodeId {
        let vt = self.value(table);
        let (rows, n) = (vt.rows(), vt.cols());
        let mut out = vec![T::zero(); idx.len() * n];
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < rows, "embedding index {r} out of range {rows}");
            out[i * n..(i + 1) * n].copy_from_slice(&vt.data()[r * n..(r + 1) * n]);
        }
        let v = DenseArray::from_vec(&[idx.len(), n], out);
        let ng = self.ng(table);
        self.push(v, Op::EmbeddingGather { table, idx }, ng)
    }

    /// Bilinear sampling with clamped high neighbor: `featmap` is `[h*w, d]`
    /// row-major over (y, x); `points` is `[p, 2]` continuous pixel
    /// coordinates (x, y), clamped to `[0, w-1] x [0, h-1]`. At integer
    /// locations the result equals the map entry exactly. Differentiable in
    /// both the map and the points (zero point-gradient where clamped).
    pub fn grid_sample(&mut self, featmap: NodeId, points: NodeId, h: usize, w: usize) -> NodeId {
        let fm = self.value(featmap);
        let pts = self.value(points);
        let d = fm.cols();
        assert_eq!(fm.rows(), h * w, "grid_sample featmap rows vs h*w");
        assert_eq!(pts.cols(), 2, "grid_sample points must be [p, 2]");
        let p = pts.rows();
        let mut out = vec![T::zero(); p * d];
        for i in 0..p {
            let c = bilinear_corners::<T>(pts.at(i, 0), pts.at(i, 1), h, w);
            let orow = &mut out[i * d..(i + 1) * d];
            for (cell, wgt) in c.cells() {
                if wgt == T::zero() {
                    continue;
                }
                let frow = &fm.data()[cell * d..(cell + 1) * d];
                for (o, &f) in orow.iter_mut().zip(frow) {
                    *o += wgt * f;
                }
            }
        }
        let v = DenseArray::from_vec(&[p, d], out);
        let ng = self.ng(featmap) || self.ng(points);
        self.push(v, Op::GridSample { featmap, points, h, w }, ng)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols(), vb.cols(), "concat_rows column mismatch");
        let n = va.cols();
        let mut data = Vec::with_capacity(va.len() + vb.len());
        data.extend_from_slice(va.data());
        data.extend_from_slice(vb.data());
        let v = DenseArray::from_vec(&[va.rows() + vb.rows(), n], data);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::ConcatRows { a, b }, ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let va = self.value(a);
        let n = va.cols();
        assert!(start + len <= va.rows(), "slice_rows out of range");
        let data = va.data()[start * n..(start + len) * n].to_vec();
        let v = DenseArray::from_vec(&[len, n], data);
        let ng = self.ng(a);
        self.push(v, Op::SliceRows { a, start, len }, ng)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        assert!(start + len <= n, "slice_cols out of range");
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&va.data()[r * n + start..r * n + start + len]);
        }
        let v = DenseArray::from_vec(&[m, len], data);
        let ng = self.ng(a);
        self.push(v, Op::SliceCols { a, start, len }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                let vp = self.value(p);
                assert_eq!(vp.rows(), m, "concat_cols row mismatch");
                let n = vp.cols();
                data.extend_from_slice(&vp.data()[r * n..(r + 1) * n]);
            }
        }
        let v = DenseArray::from_vec(&[m, total], data);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatCols { parts: parts.to_vec() }, ng)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let v = self.value(a).clone().reshaped(shape);
        let ng = self.ng(a);
        self.push(v, Op::Reshape { a }, ng)
    }

    /// Repeat each row `times` consecutive times: `[m, n] -> [m*times, n]`.
    pub fn repeat_rows(&mut self, a: NodeId, times: usize) -> NodeId {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        let mut data = Vec::with_capacity(m * times * n);
        for r in 0..m {
            for _ in 0..times {
                data.extend_from_slice(&va.data()[r * n..(r + 1) * n]);
            }
        }
        let v = DenseArray::from_vec(&[m * times, n], data);
        let ng = self.ng(a);
        self.push(v, Op::RepeatRows { a, times }, ng)
    }

    /// Sum each consecutive block of `group` rows: `[m*group, n] -> [m, n]`.
    pub fn sum_group_rows(&mut self, a: NodeId, group: usize) -> NodeId {
        let va = self.value(a);
        let (mg, n) = (va.rows(), va.cols());
        assert_eq!(mg % group, 0, "sum_group_rows: {mg} rows not divisible by {group}");
        let m = mg / group;
        let mut data = vec![T::zero(); m * n];
        for r in 0..mg {
            let o = (r / group) * n;
            for j in 0..n {
                data[o + j] += va.data()[r * n + j];
            }
        }
        let v = DenseArray::from_vec(&[m, n], data);
        let ng = self.ng(a);
        self.push(v, Op::SumGroupRows { a, group }, ng)
    }

    /// Inverted dropout: identity in eval mode or when `rate == 0`.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> NodeId {
        let rng = match &mut self.mode {
            Mode::Eval => return a,
            Mode::Train { rng } => rng,
        };
        if rate <= 0.0 {
            return a;
        }
        assert!(rate < 1.0, "dropout rate must be < 1");
        let keep_p = 1.0 - rate;
        let mask: Vec<bool> = (0..self.nodes[a.0].value.len()).map(|_| rng.gen::<f64>() < keep_p).collect();
        let keep = T::from_f64_lossy(keep_p);
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| if m { x / keep } else { T::zero() })
            .collect();
        let v = DenseArray::from_vec(va.shape(), data);
        let ng = self.ng(a);
        self.push(v, Op::Dropout { a, keep, mask }, ng)
    }

    /// Patch extraction for stride-`stride` `k`x`k` convolution with zero
    /// padding `pad`: input `[h*w, cin]` row-major over (y, x), output
    /// `[oh*ow, k*k*cin]` with patch columns ordered (ky, kx, cin).
    pub fn im2col(&mut self, a: NodeId, h: usize, w: usize, cin: usize, k: usize, stride: usize, pad: usize) -> NodeId {
        let va = self.value(a);
        assert_eq!(va.rows(), h * w, "im2col rows vs h*w");
        assert_eq!(va.cols(), cin, "im2col cols vs cin");
        let (oh, ow) = conv_out_dims(h, w, k, stride, pad);
        let mut data = vec![T::zero(); oh * ow * k * k * cin];
        let src = va.data();
        let mut o = 0;
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                            let s = (iy as usize * w + ix as usize) * cin;
                            data[o..o + cin].copy_from_slice(&src[s..s + cin]);
                        }
                        o += cin;
                    }
                }
            }
        }
        let v = DenseArray::from_vec(&[oh * ow, k * k * cin], data);
        let ng = self.ng(a);
        self.push(v, Op::Im2Col { a, h, w, cin, k, stride, pad }, ng)
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<T>, TensorError> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<DenseArray<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(DenseArray::from_vec(rv.shape(), vec![T::one()]));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.accumulate_parents(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients of trainable parameters used by this tape, summed per id.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<(ParamId, DenseArray<T>)> {
        let mut out: Vec<(ParamId, DenseArray<T>)> = Vec::new();
        for &(pid, nid) in &self.params_used {
            if let Some(g) = grads.of(nid) {
                match out.iter_mut().find(|(p, _)| *p == pid) {
                    Some((_, acc)) => acc.add_assign(g),
                    None => out.push((pid, g.clone())),
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate_parents(&self, i: usize, g: &DenseArray<T>, grads: &mut [Option<DenseArray<T>>]) {
        // Adds `delta` into the parent's gradient slot if the parent wants one.
        macro_rules! acc {
            ($pid:expr, $delta:expr) => {{
                let pid: NodeId = $pid;
                if self.nodes[pid.0].needs_grad {
                    let delta = $delta;
                    match &mut grads[pid.0] {
                        Some(existing) => existing.add_assign(&delta),
                        slot @ None => *slot = Some(delta),
                    }
                }
            }};
        }

        match &self.nodes[i].op {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::Matmul { a, b } => {
                acc!(*a, matmul_nt(g, self.value(*b)));
                acc!(*b, matmul_tn(self.value(*a), g));
            }
            Op::MatmulNT { a, b } => {
                acc!(*a, matmul(g, self.value(*b)));
                acc!(*b, matmul_tn(g, self.value(*a)));
            }
            Op::Add { a, b } => {
                acc!(*a, g.clone());
                acc!(*b, g.clone());
            }
            Op::Sub { a, b } => {
                acc!(*a, g.clone());
                let mut neg = g.clone();
                neg.scale_assign(-T::one());
                acc!(*b, neg);
            }
            Op::MulElem { a, b } => {
                let da = {
                    let vb = self.value(*b);
                    let data = g.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
                    DenseArray::from_vec(g.shape(), data)
                };
                acc!(*a, da);
                let db = {
                    let va = self.value(*a);
                    let data = g.data().iter().zip(va.data()).map(|(&x, &y)| x * y).collect();
                    DenseArray::from_vec(g.shape(), data)
                };
                acc!(*b, db);
            }
            Op::Scale { a, c } => {
                let mut d = g.clone();
                d.scale_assign(*c);
                acc!(*a, d);
            }
            Op::AddRowBroadcast { a, row } => {
                acc!(*a, g.clone());
                let n = g.cols();
                let mut dr = vec![T::zero(); n];
                for r in 0..g.rows() {
                    for j in 0..n {
                        dr[j] += g.data()[r * n + j];
                    }
                }
                acc!(*row, DenseArray::from_vec(self.value(*row).shape(), dr));
            }
            Op::MulRowBroadcast { a, row } => {
                let n = g.cols();
                let vr = self.value(*row);
                let mut da = g.clone();
                for r in 0..g.rows() {
                    for j in 0..n {
                        da.data_mut()[r * n + j] *= vr.data()[j];
                    }
                }
                acc!(*a, da);
                let va = self.value(*a);
                let mut dr = vec![T::zero(); n];
                for r in 0..g.rows() {
                    for j in 0..n {
                        dr[j] += g.data()[r * n + j] * va.data()[r * n + j];
                    }
                }
                acc!(*row, DenseArray::from_vec(vr.shape(), dr));
            }
            Op::MulColBroadcast { a, col } => {
                let (m, n) = (g.rows(), g.cols());
                let vc = self.value(*col);
                let mut da = g.clone();
                for r in 0..m {
                    let s = vc.data()[r];
                    for x in &mut da.data_mut()[r * n..(r + 1) * n] {
                        *x *= s;
                    }
                }
                acc!(*a, da);
                let va = self.value(*a);
                let mut dc = vec![T::zero(); m];
                for r in 0..m {
                    let mut acc_r = T::zero();
                    for j in 0..n {
                        acc_r += g.data()[r * n + j] * va.data()[r * n + j];
                    }
                    dc[r] = acc_r;
                }
                acc!(*col, DenseArray::from_vec(vc.shape(), dc));
            }
            Op::Abs { a } => {
                let va = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(&gi, &x)| {
                        if x > T::zero() {
                            gi
                        } else if x < T::zero() {
                            -gi
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Relu { a } => {
                let va = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(va.data())
                    .map(|(&gi, &x)| if x > T::zero() { gi } else { T::zero() })
                    .collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Gelu { a } => {
                let va = self.value(*a);
                let data = g.data().iter().zip(va.data()).map(|(&gi, &x)| gi * gelu_bwd(x)).collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Sigmoid { a } => {
                let y = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gi, &yi)| gi * yi * (T::one() - yi))
                    .collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Sin { a } => {
                let va = self.value(*a);
                let data = g.data().iter().zip(va.data()).map(|(&gi, &x)| gi * x.cos()).collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Cos { a } => {
                let va = self.value(*a);
                let data = g.data().iter().zip(va.data()).map(|(&gi, &x)| -gi * x.sin()).collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::SumAll { a } => {
                let s = g.data()[0];
                acc!(*a, DenseArray::filled(self.value(*a).shape(), s));
            }
            Op::LayerNorm { a, gamma, beta, xhat, inv_std } => {
                let (m, n) = (g.rows(), g.cols());
                let nt = T::from_f64_lossy(n as f64);
                let vg = self.value(*gamma);
                let mut da = vec![T::zero(); m * n];
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                for r in 0..m {
                    let grow = &g.data()[r * n..(r + 1) * n];
                    let xh = &xhat[r * n..(r + 1) * n];
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for j in 0..n {
                        let dxh = grow[j] * vg.data()[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                        dgamma[j] += grow[j] * xh[j];
                        dbeta[j] += grow[j];
                    }
                    let mean_dxh = sum_dxh / nt;
                    let mean_dxh_xh = sum_dxh_xh / nt;
                    for j in 0..n {
                        let dxh = grow[j] * vg.data()[j];
                        da[r * n + j] = inv_std[r] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
                acc!(*a, DenseArray::from_vec(&[m, n], da));
                acc!(*gamma, DenseArray::from_vec(vg.shape(), dgamma));
                acc!(*beta, DenseArray::from_vec(self.value(*beta).shape(), dbeta));
            }
            Op::SoftmaxRowsMasked { a } => {
                // Masked outputs are exactly 0, so the generic formula already
                // sends no gradient through them.
                let y = &self.nodes[i].value;
                let (m, n) = (g.rows(), g.cols());
                let mut da = vec![T::zero(); m * n];
                for r in 0..m {
                    let yrow = &y.data()[r * n..(r + 1) * n];
                    let grow = &g.data()[r * n..(r + 1) * n];
                    let dot: T = yrow.iter().zip(grow).map(|(&yi, &gi)| yi * gi).sum();
                    for j in 0..n {
                        da[r * n + j] = yrow[j] * (grow[j] - dot);
                    }
                }
                acc!(*a, DenseArray::from_vec(&[m, n], da));
            }
            Op::LogSoftmaxRows { a } => {
                let y = &self.nodes[i].value;
                let (m, n) = (g.rows(), g.cols());
                let mut da = vec![T::zero(); m * n];
                for r in 0..m {
                    let yrow = &y.data()[r * n..(r + 1) * n];
                    let grow = &g.data()[r * n..(r + 1) * n];
                    let gsum: T = grow.iter().copied().sum();
                    for j in 0..n {
                        da[r * n + j] = grow[j] - yrow[j].exp() * gsum;
                    }
                }
                acc!(*a, DenseArray::from_vec(&[m, n], da));
            }
            Op::EmbeddingGather { table, idx } => {
                let vt = self.value(*table);
                let n = vt.cols();
                let mut dt = DenseArray::zeros(vt.shape());
                for (i_row, &r) in idx.iter().enumerate() {
                    for j in 0..n {
                        dt.data_mut()[r * n + j] += g.data()[i_row * n + j];
                    }
                }
                acc!(*table, dt);
            }
            Op::GridSample { featmap, points, h, w } => {
                let fm = self.value(*featmap);
                let pts = self.value(*points);
                let d = fm.cols();
                let p = pts.rows();
                if self.nodes[featmap.0].needs_grad {
                    let mut dfm = DenseArray::zeros(fm.shape());
                    for ip in 0..p {
                        let c = bilinear_corners::<T>(pts.at(ip, 0), pts.at(ip, 1), *h, *w);
                        let grow = &g.data()[ip * d..(ip + 1) * d];
                        for (cell, wgt) in c.cells() {
                            if wgt == T::zero() {
                                continue;
                            }
                            let frow = &mut dfm.data_mut()[cell * d..(cell + 1) * d];
                            for (f, &gv) in frow.iter_mut().zip(grow) {
                                *f += wgt * gv;
                            }
                        }
                    }
                    acc!(*featmap, dfm);
                }
                if self.nodes[points.0].needs_grad {
                    let mut dpts = DenseArray::zeros(pts.shape());
                    for ip in 0..p {
                        let c = bilinear_corners::<T>(pts.at(ip, 0), pts.at(ip, 1), *h, *w);
                        let grow = &g.data()[ip * d..(ip + 1) * d];
                        let (mut dx, mut dy) = (T::zero(), T::zero());
                        for j in 0..d {
                            let f00 = fm.data()[c.c00 * d + j];
                            let f10 = fm.data()[c.c10 * d + j];
                            let f01 = fm.data()[c.c01 * d + j];
                            let f11 = fm.data()[c.c11 * d + j];
                            let one = T::one();
                            dx += grow[j] * ((one - c.fy) * (f10 - f00) + c.fy * (f11 - f01));
                            dy += grow[j] * ((one - c.fx) * (f01 - f00) + c.fx * (f11 - f10));
                        }
                        if c.clamped_x {
                            dx = T::zero();
                        }
                        if c.clamped_y {
                            dy = T::zero();
                        }
                        dpts.set(ip, 0, dx);
                        dpts.set(ip, 1, dy);
                    }
                    acc!(*points, dpts);
                }
            }
            Op::ConcatRows { a, b } => {
                let ra = self.value(*a).rows();
                let n = g.cols();
                let da = DenseArray::from_vec(self.value(*a).shape(), g.data()[..ra * n].to_vec());
                let db = DenseArray::from_vec(self.value(*b).shape(), g.data()[ra * n..].to_vec());
                acc!(*a, da);
                acc!(*b, db);
            }
            Op::SliceRows { a, start, len } => {
                let va = self.value(*a);
                let n = va.cols();
                let mut da = DenseArray::zeros(va.shape());
                da.data_mut()[start * n..(start + len) * n].copy_from_slice(g.data());
                acc!(*a, da);
            }
            Op::SliceCols { a, start, len } => {
                let va = self.value(*a);
                let (m, n) = (va.rows(), va.cols());
                let mut da = DenseArray::zeros(va.shape());
                for r in 0..m {
                    for j in 0..*len {
                        da.data_mut()[r * n + start + j] = g.data()[r * len + j];
                    }
                }
                acc!(*a, da);
            }
            Op::ConcatCols { parts } => {
                let m = g.rows();
                let mut col = 0;
                let total = g.cols();
                for &p in parts {
                    let vp = self.value(p);
                    let n = vp.cols();
                    if self.nodes[p.0].needs_grad {
                        let mut dp = DenseArray::zeros(vp.shape());
                        for r in 0..m {
                            for j in 0..n {
                                dp.data_mut()[r * n + j] = g.data()[r * total + col + j];
                            }
                        }
                        acc!(p, dp);
                    }
                    col += n;
                }
            }
            Op::Reshape { a } => {
                acc!(*a, g.clone().reshaped(self.value(*a).shape()));
            }
            Op::RepeatRows { a, times } => {
                let va = self.value(*a);
                let (m, n) = (va.rows(), va.cols());
                let mut da = vec![T::zero(); m * n];
                for r in 0..m * times {
                    let o = (r / times) * n;
                    for j in 0..n {
                        da[o + j] += g.data()[r * n + j];
                    }
                }
                acc!(*a, DenseArray::from_vec(va.shape(), da));
            }
            Op::SumGroupRows { a, group } => {
                let va = self.value(*a);
                let (mg, n) = (va.rows(), va.cols());
                let mut da = vec![T::zero(); mg * n];
                for r in 0..mg {
                    let o = (r / group) * n;
                    da[r * n..(r + 1) * n].copy_from_slice(&g.data()[o..o + n]);
                }
                acc!(*a, DenseArray::from_vec(va.shape(), da));
            }
            Op::Dropout { a, keep, mask } => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&gi, &m)| if m { gi / *keep } else { T::zero() })
                    .collect();
                acc!(*a, DenseArray::from_vec(g.shape(), data));
            }
            Op::Im2Col { a, h, w, cin, k, stride, pad } => {
                let (oh, ow) = conv_out_dims(*h, *w, *k, *stride, *pad);
                let mut da = DenseArray::zeros(self.value(*a).shape());
                let dst = da.data_mut();
                let mut o = 0;
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ky in 0..*k {
                            for kx in 0..*k {
                                let iy = (oy * stride + ky) as isize - *pad as isize;
                                let ix = (ox * stride + kx) as isize - *pad as isize;
                                if iy >= 0 && (iy as usize) < *h && ix >= 0 && (ix as usize) < *w {
                                    let s = (iy as usize * w + ix as usize) * cin;
                                    for c in 0..*cin {
                                        dst[s + c] += g.data()[o + c];
                                    }
                                }
                                o += cin;
                            }
                        }
                    }
                }
                acc!(*a, da);
            }
        }
    }
}

/// Output spatial dims of a `k`x`k` stride-`s` conv with padding `p`.
pub fn conv_out_dims(h: usize, w: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1)
}

/// The four cell indices and weights of clamped bilinear interpolation.
pub(crate) struct BilinearCorners<T> {
    c00: usize,
    c10: usize,
    c01: usize,
    c11: usize,
    fx: T,
    fy: T,
    clamped_x: bool,
    clamped_y: bool,
}

impl<T: Scalar> BilinearCorners<T> {
    pub(crate) fn cells(&self) -> [(usize, T); 4] {
        let one = T::one();
        [
            (self.c00, (one - self.fx) * (one - self.fy)),
            (self.c10, self.fx * (one - self.fy)),
            (self.c01, (one - self.fx) * self.fy),
            (self.c11, self.fx * self.fy),
        ]
    }
}

pub(crate) fn bilinear_corners<T: Scalar>(x: T, y: T, h: usize, w: usize) -> BilinearCorners<T> {
    let max_x = T::from_f64_lossy((w - 1) as f64);
    let max_y = T::from_f64_lossy((h - 1) as f64);
    let clamped_x = x < T::zero() || x > max_x;
    let clamped_y = y < T::zero() || y > max_y;
    let cx = x.max(T::zero()).min(max_x);
    let cy = y.max(T::zero()).min(max_y);
    let x0 = cx.floor();
    let y0 = cy.floor();
    let ix0 = x0.to_f64_lossy() as usize;
    let iy0 = y0.to_f64_lossy() as usize;
    // High neighbor clamps to the last bin so exact grid nodes reproduce the
    // stored entry (the fractional weight is 0 there).
    let ix1 = (ix0 + 1).min(w - 1);
    let iy1 = (iy0 + 1).min(h - 1);
    BilinearCorners {
        c00: iy0 * w + ix0,
        c10: iy0 * w + ix1,
        c01: iy1 * w + ix0,
        c11: iy1 * w + ix1,
        fx: cx - x0,
        fy: cy - y0,
        clamped_x,
        clamped_y,
    }
}

pub(crate) fn gelu_fwd<T: Scalar>(x: T) -> T {
    // tanh approximation of GELU.
    let half = T::from_f64_lossy(0.5);
    let c = T::from_f64_lossy(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::from_f64_lossy(0.044715);
    let u = c * (x + a * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_bwd<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let c = T::from_f64_lossy(0.797_884_560_802_865_4);
    let a = T::from_f64_lossy(0.044715);
    let three = T::from_f64_lossy(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> DenseArray<f64> {
        DenseArray::from_f64(shape, data)
    }

    #[test]
    fn forward_values_match_direct_computation() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let b = g.input(arr(&[2, 2], &[2.0, 0.0, 1.0, -1.0]));
        let s = g.add(a, b);
        assert_eq!(g.value(s).data(), &[3.0, -2.0, 4.0, -0.5]);
        let p = g.mul_elem(a, b);
        assert_eq!(g.value(p).data(), &[2.0, 0.0, 3.0, -0.5]);
        let m = g.matmul(a, b);
        assert_eq!(g.value(m).data(), &[0.0, 2.0, 6.5, -0.5]);
        let ab = g.abs(a);
        assert_eq!(g.value(ab).data(), &[1.0, 2.0, 3.0, 0.5]);
        let t = g.sum_all(ab);
        assert_eq!(g.value(t).data(), &[6.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_respect_mask() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]));
        let mask = Arc::new(vec![true, true, false, true, true, true]);
        let y = g.softmax_rows_masked(a, Some(mask));
        let v = g.value(y);
        assert_eq!(v.at(0, 2), 0.0);
        let row0: f64 = v.data()[0..3].iter().sum();
        let row1: f64 = v.data()[3..6].iter().sum();
        assert!((row0 - 1.0).abs() < 1e-12);
        assert!((row1 - 1.0).abs() < 1e-12);
        // Unmasked two-way softmax over (1, 2).
        let e = (1.0f64.exp(), 2.0f64.exp());
        assert!((v.at(0, 0) - e.0 / (e.0 + e.1)).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "fully masked")]
    fn fully_masked_row_panics_with_row_index() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[1, 2], &[1.0, 2.0]));
        let mask = Arc::new(vec![false, false]);
        let _ = g.softmax_rows_masked(a, Some(mask));
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[1, 4], &[0.5, -1.0, 2.0, 0.0]));
        let ls = g.log_softmax_rows(a);
        let sm = g.softmax_rows_masked(a, None);
        for j in 0..4 {
            assert!((g.value(ls).at(0, j) - g.value(sm).at(0, j).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_sample_is_exact_at_nodes_and_interpolates_between() {
        let mut g = Graph::<f64>::eval();
        // 2x3 map, d=1: values = 10*y + x.
        let fm = g.input(arr(&[6, 1], &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]));
        let pts = g.input(arr(&[4, 2], &[
            0.0, 0.0, // node (0,0) -> 0
            2.0, 1.0, // node (2,1) -> 12
            0.5, 0.0, // between x=0 and x=1 -> 0.5
            1.0, 0.5, // between y=0 and y=1 at x=1 -> 6
        ]));
        let y = g.grid_sample(fm, pts, 2, 3);
        let v = g.value(y);
        assert_eq!(v.data(), &[0.0, 12.0, 0.5, 6.0]);
    }

    #[test]
    fn grid_sample_clamps_out_of_range_points() {
        let mut g = Graph::<f64>::eval();
        let fm = g.input(arr(&[4, 1], &[1.0, 2.0, 3.0, 4.0]));
        let pts = g.input(arr(&[2, 2], &[-5.0, 0.0, 9.0, 9.0]));
        let y = g.grid_sample(fm, pts, 2, 2);
        assert_eq!(g.value(y).data(), &[1.0, 4.0]);
    }

    #[test]
    fn backward_of_simple_chain_matches_hand_derivative() {
        // f = sum((a*b + a)^2-ish): use f = sum(mul(a,b) + a) -> df/da = b+1, df/db = a.
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.input(arr(&[2, 2], &[5.0, 6.0, 7.0, 8.0]));
        let p = g.mul_elem(a, b);
        let s = g.add(p, a);
        let root = g.sum_all(s);
        let grads = g.backward(root).unwrap();
        assert_eq!(grads.of(a).unwrap().data(), &[6.0, 7.0, 8.0, 9.0]);
        assert_eq!(grads.of(b).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let err = g.backward(a).unwrap_err();
        assert!(matches!(err, TensorError::NonScalarRoot(_)));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[1, 2], &[1.0, 2.0]));
        let c = g.constant(arr(&[1, 2], &[3.0, 4.0]));
        let p = g.mul_elem(a, c);
        let root = g.sum_all(p);
        let grads = g.backward(root).unwrap();
        assert!(grads.of(c).is_none());
        assert_eq!(grads.of(a).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn dropout_is_identity_in_eval_and_masks_in_train() {
        let mut ge = Graph::<f64>::eval();
        let a = ge.input(arr(&[1, 4], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(ge.dropout(a, 0.5), a);

        let mut gt = Graph::<f64>::train(7);
        let a = gt.input(arr(&[1, 1000], &vec![1.0; 1000]));
        let d = gt.dropout(a, 0.25);
        let kept = gt.value(d).data().iter().filter(|&&x| x != 0.0).count();
        // Kept entries are scaled by 1/keep.
        for &x in gt.value(d).data() {
            assert!(x == 0.0 || (x - 1.0 / 0.75).abs() < 1e-12);
        }
        assert!((650..=850).contains(&kept), "kept {kept} of 1000 at rate 0.25");
    }

    #[test]
    fn dropout_masks_are_identical_across_scalar_types() {
        let mut g32 = Graph::<f32>::train(99);
        let a32 = g32.input(DenseArray::from_f64(&[1, 64], &vec![1.0; 64]));
        let d32 = g32.dropout(a32, 0.5);
        let mut g64 = Graph::<f64>::train(99);
        let a64 = g64.input(DenseArray::from_f64(&[1, 64], &vec![1.0; 64]));
        let d64 = g64.dropout(a64, 0.5);
        let m32: Vec<bool> = g32.value(d32).data().iter().map(|&x| x != 0.0).collect();
        let m64: Vec<bool> = g64.value(d64).data().iter().map(|&x| x != 0.0).collect();
        assert_eq!(m32, m64);
    }

    #[test]
    fn im2col_matches_hand_patch_extraction() {
        let mut g = Graph::<f64>::eval();
        // 3x3 single-channel image 1..9, k=3, stride=1, pad=1 -> 9 patches.
        let img = g.input(arr(&[9, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]));
        let cols = g.im2col(img, 3, 3, 1, 3, 1, 1);
        assert_eq!(g.value(cols).shape(), &[9, 9]);
        // Center patch (oy=1, ox=1) sees the whole image.
        let center: Vec<f64> = g.value(cols).data()[4 * 9..5 * 9].to_vec();
        assert_eq!(center, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        // Top-left patch has zero padding in the first row/col.
        let tl: Vec<f64> = g.value(cols).data()[0..9].to_vec();
        assert_eq!(tl, vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.input(arr(&[1, 2], &[5.0, 6.0]));
        let cat = g.concat_rows(a, b);
        assert_eq!(g.value(cat).shape(), &[3, 2]);
        let back = g.slice_rows(cat, 0, 2);
        assert_eq!(g.value(back).data(), g.value(a).data());

        let c1 = g.slice_cols(cat, 0, 1);
        let c2 = g.slice_cols(cat, 1, 1);
        let cat2 = g.concat_cols(&[c1, c2]);
        assert_eq!(g.value(cat2).data(), g.value(cat).data());
    }

    #[test]
    fn repeat_and_sum_group_rows_are_adjoint_shapes() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let r = g.repeat_rows(a, 3);
        assert_eq!(g.value(r).shape(), &[6, 2]);
        let s = g.sum_group_rows(r, 3);
        assert_eq!(g.value(s).data(), &[3.0, 6.0, 9.0, 12.0]);
    }

    #[test]
    fn embedding_gather_selects_rows() {
        let mut g = Graph::<f64>::eval();
        let t = g.input(arr(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]));
        let e = g.embedding_gather(t, vec![2, 0, 2]);
        assert_eq!(g.value(e).data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        let root = g.sum_all(e);
        let grads = g.backward(root).unwrap();
        // Row 2 gathered twice -> gradient 2, row 0 once -> 1, row 1 -> 0.
        assert_eq!(grads.of(t).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_var() {
        let mut g = Graph::<f64>::eval();
        let a = g.input(arr(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]));
        let gamma = g.input(arr(&[4], &[1.0, 1.0, 1.0, 1.0]));
        let beta = g.input(arr(&[4], &[0.0, 0.0, 0.0, 0.0]));
        let y = g.layer_norm(a, gamma, beta);
        for r in 0..2 {
            let row: Vec<f64> = (0..4).map(|j| g.value(y).at(r, j)).collect();
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }
}
