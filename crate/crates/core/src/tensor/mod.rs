//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are rank-1/rank-2 row-major arrays recorded on a [`Tape`]. A
//! forward pass appends nodes in topological order; [`Tape::backward`] walks
//! the tape once in reverse and accumulates gradients for every tensor that
//! (a) influences the loss and (b) requires a gradient.
//!
//! There is no general broadcasting: the only rank-mismatch case is the
//! trailing-vector bias add, which keeps every backward rule auditable.

pub mod check;
pub mod optim;
mod real;

pub use optim::{lr_schedule, AdamConfig, AdamState};
pub use real::Real;

use crate::error::{Error, Result};

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(usize);

/// A recorded tensor: flat row-major data plus shape, gradient slot, and
/// the requires-grad flag.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub requires_grad: bool,
    pub grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Backward recipe for one recorded operation.
#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(TensorRef, TensorRef),
    Sub(TensorRef, TensorRef),
    Mul(TensorRef, TensorRef),
    Scale(TensorRef, T),
    AddBias { x: TensorRef, bias: TensorRef },
    Gelu(TensorRef),
    Exp(TensorRef),
    Log(TensorRef),
    MatMul { a: TensorRef, b: TensorRef },
    Transpose(TensorRef),
    Softmax { x: TensorRef, axis: usize },
    LayerNorm { x: TensorRef, gamma: TensorRef, beta: TensorRef, eps: T },
    SumAll(TensorRef),
    MeanAll(TensorRef),
    GatherRows { x: TensorRef, idx: Vec<usize> },
    AssembleTokens { visible: TensorRef, mask_token: TensorRef, visible_pos: Vec<usize>, masked_pos: Vec<usize> },
    MeanPoolGroups { x: TensorRef, n_groups: usize },
    L2NormalizeRows(TensorRef),
    DiagCrossEntropy { scores: TensorRef, allowed: Option<Vec<bool>> },
    SliceCols { x: TensorRef, start: usize, len: usize },
    ConcatRows(Vec<TensorRef>),
    ConcatCols(Vec<TensorRef>),
}

struct Node<T> {
    t: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Wengert tape: tensors plus backward recipes in topological order.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => unreachable!("tape tensors are rank 1 or 2"),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Vec<T>, shape: Vec<usize>, op: Op<T>, needs_grad: bool) -> TensorRef {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let id = self.nodes.len();
        self.nodes.push(Node {
            t: Tensor { shape, data, requires_grad: false, grad: None },
            op,
            needs_grad,
        });
        TensorRef(id)
    }

    fn needs(&self, id: TensorRef) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Record an input tensor. `requires_grad` marks it as a parameter whose
    /// gradient should be retained by `backward`.
    pub fn leaf(&mut self, data: Vec<T>, shape: &[usize], requires_grad: bool) -> Result<TensorRef> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Dim(format!("tape tensors are rank 1 or 2, got rank {}", shape.len())));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Dim(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        let id = self.push(data, shape.to_vec(), Op::Leaf, requires_grad);
        self.nodes[id.0].t.requires_grad = requires_grad;
        Ok(id)
    }

    /// Record a constant input (never receives a gradient).
    pub fn constant(&mut self, data: Vec<T>, shape: &[usize]) -> Result<TensorRef> {
        self.leaf(data, shape, false)
    }

    pub fn data(&self, id: TensorRef) -> &[T] {
        &self.nodes[id.0].t.data
    }

    pub fn shape(&self, id: TensorRef) -> &[usize] {
        &self.nodes[id.0].t.shape
    }

    pub fn grad(&self, id: TensorRef) -> Option<&[T]> {
        self.nodes[id.0].t.grad.as_deref()
    }

    /// Extract a scalar value (numel must be 1).
    pub fn scalar(&self, id: TensorRef) -> Result<T> {
        let t = &self.nodes[id.0].t;
        if t.numel() != 1 {
            return Err(Error::Contract(format!("expected scalar, got shape {:?}", t.shape)));
        }
        Ok(t.data[0])
    }

    fn binary_same_shape(&self, a: TensorRef, b: TensorRef, what: &str) -> Result<Vec<usize>> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::Dim(format!("{what}: shape {sa:?} vs {sb:?}")));
        }
        Ok(sa.to_vec())
    }

    // ── Elementwise ─────────────────────────────────────────────────────

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let shape = self.binary_same_shape(a, b, "add")?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let shape = self.binary_same_shape(a, b, "sub")?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let shape = self.binary_same_shape(a, b, "mul")?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: TensorRef, c: T) -> Result<TensorRef> {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| x * c).collect();
        let ng = self.needs(a);
        Ok(self.push(data, shape, Op::Scale(a, c), ng))
    }

    /// `x + bias` where `x` is `[R, C]` and `bias` is `[C]`. The only
    /// broadcast on the tape.
    pub fn add_bias(&mut self, x: TensorRef, bias: TensorRef) -> Result<TensorRef> {
        let (r, c) = rows_cols(self.shape(x));
        let sb = self.shape(bias);
        if sb.len() != 1 || sb[0] != c {
            return Err(Error::Dim(format!("add_bias: x has {c} columns, bias shape {sb:?}")));
        }
        let bv = self.data(bias).to_vec();
        let mut data = self.data(x).to_vec();
        for i in 0..r {
            for (d, &b) in data[i * c..(i + 1) * c].iter_mut().zip(&bv) {
                *d = *d + b;
            }
        }
        let shape = self.shape(x).to_vec();
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(data, shape, Op::AddBias { x, bias }, ng))
    }

    /// Exact-erf GELU: `x * Phi(x)` with `Phi(x) = 0.5 * (1 + erf(x / sqrt(2)))`.
    pub fn gelu(&mut self, a: TensorRef) -> Result<TensorRef> {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| x * gauss_cdf(x)).collect();
        let ng = self.needs(a);
        Ok(self.push(data, shape, Op::Gelu(a), ng))
    }

    pub fn exp(&mut self, a: TensorRef) -> Result<TensorRef> {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| x.exp()).collect();
        let ng = self.needs(a);
        Ok(self.push(data, shape, Op::Exp(a), ng))
    }

    pub fn log(&mut self, a: TensorRef) -> Result<TensorRef> {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| x.ln()).collect();
        let ng = self.needs(a);
        Ok(self.push(data, shape, Op::Log(a), ng))
    }

    // ── Linear algebra ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::Dim(format!("matmul needs rank-2 operands, got {sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[0], sa[1]);
        let (k2, n) = (sb[0], sb[1]);
        if k != k2 {
            return Err(Error::Dim(format!("matmul inner dims: {sa:?} x {sb:?}")));
        }
        let data = mm(self.data(a), self.data(b), m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, vec![m, n], Op::MatMul { a, b }, ng))
    }

    pub fn transpose(&mut self, a: TensorRef) -> Result<TensorRef> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dim(format!("transpose needs rank 2, got {sa:?}")));
        }
        let (r, c) = (sa[0], sa[1]);
        let src = self.data(a);
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(a);
        Ok(self.push(data, vec![c, r], Op::Transpose(a), ng))
    }

    /// Row-stable softmax along `axis` of a rank-2 tensor (axis 1 = rows).
    pub fn softmax(&mut self, a: TensorRef, axis: usize) -> Result<TensorRef> {
        let sa = self.shape(a).to_vec();
        if sa.len() != 2 {
            return Err(Error::Dim(format!("softmax needs rank 2, got {sa:?}")));
        }
        if axis > 1 {
            return Err(Error::Dim(format!("softmax axis {axis} out of range for rank 2")));
        }
        let (r, c) = (sa[0], sa[1]);
        let src = self.data(a);
        let mut data = vec![T::zero(); r * c];
        if axis == 1 {
            for i in 0..r {
                softmax_slice(&src[i * c..(i + 1) * c], &mut data[i * c..(i + 1) * c]);
            }
        } else {
            let mut col = vec![T::zero(); r];
            let mut out = vec![T::zero(); r];
            for j in 0..c {
                for i in 0..r {
                    col[i] = src[i * c + j];
                }
                softmax_slice(&col, &mut out);
                for i in 0..r {
                    data[i * c + j] = out[i];
                }
            }
        }
        let ng = self.needs(a);
        Ok(self.push(data, sa, Op::Softmax { x: a, axis }, ng))
    }

    /// Layer normalization over the last dimension with affine parameters.
    pub fn layer_norm(&mut self, x: TensorRef, gamma: TensorRef, beta: TensorRef, eps: T) -> Result<TensorRef> {
        let sx = self.shape(x).to_vec();
        let (r, c) = rows_cols(&sx);
        let sg = self.shape(gamma);
        let sb = self.shape(beta);
        if sg != [c] || sb != [c] {
            return Err(Error::Dim(format!(
                "layer_norm: x has {c} columns, gamma {sg:?}, beta {sb:?}"
            )));
        }
        let g = self.data(gamma).to_vec();
        let b = self.data(beta).to_vec();
        let src = self.data(x);
        let mut data = vec![T::zero(); r * c];
        let cn = T::from_f64(c as f64);
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let inv_std = (var + eps).sqrt().recip();
            for j in 0..c {
                data[i * c + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(data, sx, Op::LayerNorm { x, gamma, beta, eps }, ng))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    pub fn sum_all(&mut self, a: TensorRef) -> Result<TensorRef> {
        let s: T = self.data(a).iter().copied().sum();
        let ng = self.needs(a);
        Ok(self.push(vec![s], vec![1], Op::SumAll(a), ng))
    }

    pub fn mean_all(&mut self, a: TensorRef) -> Result<TensorRef> {
        let n = self.data(a).len();
        if n == 0 {
            return Err(Error::Dim("mean_all of empty tensor".into()));
        }
        let s: T = self.data(a).iter().copied().sum();
        let v = s / T::from_f64(n as f64);
        let ng = self.needs(a);
        Ok(self.push(vec![v], vec![1], Op::MeanAll(a), ng))
    }

    // ── Row selection / assembly ────────────────────────────────────────

    /// Select rows of a rank-2 tensor by index (duplicates allowed).
    pub fn gather_rows(&mut self, x: TensorRef, idx: &[usize]) -> Result<TensorRef> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::Dim(format!("gather_rows needs rank 2, got {sx:?}")));
        }
        let (r, c) = (sx[0], sx[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Contract(format!("gather_rows index {bad} out of {r} rows")));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let ng = self.needs(x);
        Ok(self.push(data, vec![idx.len(), c], Op::GatherRows { x, idx: idx.to_vec() }, ng))
    }

    /// Scatter encoded visible tokens back to their original positions and
    /// fill every masked position with (a copy of) the mask token.
    ///
    /// `visible_pos[i]` is the destination row of `visible` row `i`;
    /// `masked_pos` lists the rows that receive the `[1, C]` mask token.
    /// Together they must partition `0..L`.
    pub fn assemble_tokens(
        &mut self,
        visible: TensorRef,
        mask_token: TensorRef,
        visible_pos: &[usize],
        masked_pos: &[usize],
    ) -> Result<TensorRef> {
        let sv = self.shape(visible);
        let sm = self.shape(mask_token);
        if sv.len() != 2 {
            return Err(Error::Dim(format!("assemble_tokens: visible must be rank 2, got {sv:?}")));
        }
        let (nv, c) = (sv[0], sv[1]);
        if sm != [1, c] && sm != [c] {
            return Err(Error::Dim(format!("assemble_tokens: mask token shape {sm:?}, want [1, {c}]")));
        }
        if nv != visible_pos.len() {
            return Err(Error::Contract(format!(
                "assemble_tokens: {nv} visible tokens but {} positions",
                visible_pos.len()
            )));
        }
        let l = visible_pos.len() + masked_pos.len();
        let mut seen = vec![false; l];
        for &p in visible_pos.iter().chain(masked_pos) {
            if p >= l || seen[p] {
                return Err(Error::Contract("assemble_tokens: positions must partition 0..L".into()));
            }
            seen[p] = true;
        }
        let mt = self.data(mask_token).to_vec();
        let src = self.data(visible);
        let mut data = vec![T::zero(); l * c];
        for (i, &p) in visible_pos.iter().enumerate() {
            data[p * c..(p + 1) * c].copy_from_slice(&src[i * c..(i + 1) * c]);
        }
        for &p in masked_pos {
            data[p * c..(p + 1) * c].copy_from_slice(&mt);
        }
        let ng = self.needs(visible) || self.needs(mask_token);
        Ok(self.push(
            data,
            vec![l, c],
            Op::AssembleTokens {
                visible,
                mask_token,
                visible_pos: visible_pos.to_vec(),
                masked_pos: masked_pos.to_vec(),
            },
            ng,
        ))
    }

    /// Mean-pool `[L, C]` over `n_groups` equal contiguous row groups.
    pub fn mean_pool_groups(&mut self, x: TensorRef, n_groups: usize) -> Result<TensorRef> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::Dim(format!("mean_pool_groups needs rank 2, got {sx:?}")));
        }
        let (l, c) = (sx[0], sx[1]);
        if n_groups == 0 || l % n_groups != 0 {
            return Err(Error::Dim(format!("mean_pool_groups: {l} rows not divisible into {n_groups} groups")));
        }
        let glen = l / n_groups;
        let inv = T::from_f64(1.0 / glen as f64);
        let src = self.data(x);
        let mut data = vec![T::zero(); n_groups * c];
        for gi in 0..n_groups {
            let out = &mut data[gi * c..(gi + 1) * c];
            for r in 0..glen {
                let row = &src[(gi * glen + r) * c..(gi * glen + r + 1) * c];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = *o + v;
                }
            }
            for o in out.iter_mut() {
                *o = *o * inv;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(data, vec![n_groups, c], Op::MeanPoolGroups { x, n_groups }, ng))
    }

    /// Normalize every row to unit Euclidean norm. A zero-norm row is a
    /// contract violation.
    pub fn l2_normalize_rows(&mut self, x: TensorRef) -> Result<TensorRef> {
        let sx = self.shape(x).to_vec();
        let (r, c) = rows_cols(&sx);
        let src = self.data(x);
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm == T::zero() {
                return Err(Error::Contract(format!("l2_normalize_rows: row {i} has zero norm")));
            }
            let inv = norm.recip();
            for j in 0..c {
                data[i * c + j] = row[j] * inv;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(data, sx, Op::L2NormalizeRows(x), ng))
    }

    /// Cross entropy of each row of a square score matrix against its own
    /// diagonal entry: `sum_i -log softmax(s_i)[i]`.
    ///
    /// `allowed` optionally restricts the denominator per row (row-major
    /// `[N, N]` booleans); diagonal entries must stay allowed.
    pub fn diag_cross_entropy(&mut self, scores: TensorRef, allowed: Option<&[bool]>) -> Result<TensorRef> {
        let ss = self.shape(scores);
        if ss.len() != 2 || ss[0] != ss[1] {
            return Err(Error::Dim(format!("diag_cross_entropy needs a square matrix, got {ss:?}")));
        }
        let n = ss[0];
        if let Some(a) = allowed {
            if a.len() != n * n {
                return Err(Error::Contract("diag_cross_entropy: allowed mask size mismatch".into()));
            }
            for i in 0..n {
                if !a[i * n + i] {
                    return Err(Error::Contract(format!("diag_cross_entropy: diagonal {i} excluded")));
                }
            }
        }
        let src = self.data(scores);
        let mut total = T::zero();
        for i in 0..n {
            let row = &src[i * n..(i + 1) * n];
            let row_allowed = |j: usize| allowed.map_or(true, |a| a[i * n + j]);
            let mut mx = T::neg_infinity();
            for j in 0..n {
                if row_allowed(j) && row[j] > mx {
                    mx = row[j];
                }
            }
            let mut denom = T::zero();
            for j in 0..n {
                if row_allowed(j) {
                    denom = denom + (row[j] - mx).exp();
                }
            }
            total = total + (denom.ln() - (row[i] - mx));
        }
        let ng = self.needs(scores);
        Ok(self.push(
            vec![total],
            vec![1],
            Op::DiagCrossEntropy { scores, allowed: allowed.map(|a| a.to_vec()) },
            ng,
        ))
    }

    // ── Column splitting / concatenation (multi-head plumbing) ──────────

    pub fn slice_cols(&mut self, x: TensorRef, start: usize, len: usize) -> Result<TensorRef> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::Dim(format!("slice_cols needs rank 2, got {sx:?}")));
        }
        let (r, c) = (sx[0], sx[1]);
        if start + len > c {
            return Err(Error::Dim(format!("slice_cols: {start}+{len} exceeds {c} columns")));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(data, vec![r, len], Op::SliceCols { x, start, len }, ng))
    }

    pub fn concat_cols(&mut self, xs: &[TensorRef]) -> Result<TensorRef> {
        if xs.is_empty() {
            return Err(Error::Dim("concat_cols of nothing".into()));
        }
        let r = self.shape(xs[0])[0];
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 2 || s[0] != r {
                return Err(Error::Dim(format!("concat_cols: inconsistent shapes, {s:?} vs {r} rows")));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&x, &w) in xs.iter().zip(&widths) {
                let src = self.data(x);
                data.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(data, vec![r, total], Op::ConcatCols(xs.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, xs: &[TensorRef]) -> Result<TensorRef> {
        if xs.is_empty() {
            return Err(Error::Dim("concat_rows of nothing".into()));
        }
        let c = self.shape(xs[0])[self.shape(xs[0]).len() - 1];
        let mut rows = 0;
        for &x in xs {
            let s = self.shape(x);
            let (r, cc) = rows_cols(s);
            if cc != c {
                return Err(Error::Dim(format!("concat_rows: inconsistent widths {cc} vs {c}")));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * c);
        for &x in xs {
            data.extend_from_slice(self.data(x));
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(data, vec![rows, c], Op::ConcatRows(xs.to_vec()), ng))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates `grad` for every tensor
    /// with `requires_grad` that the loss depends on.
    pub fn backward(&mut self, loss: TensorRef) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        if self.nodes[loss.0].t.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].t.shape
            )));
        }
        // Transient upstream gradients for intermediate nodes; `t.grad` keeps
        // only the leaves' results.
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if self.nodes[i].t.requires_grad {
                accumulate(&mut self.nodes[i].t.grad, &g);
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.push_grad(&mut grads, a, |_| g.clone());
                    self.push_grad(&mut grads, b, |_| g.clone());
                }
                Op::Sub(a, b) => {
                    self.push_grad(&mut grads, a, |_| g.clone());
                    self.push_grad(&mut grads, b, |_| g.iter().map(|&v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, self.data(b), |gv, bv| gv * bv);
                    let db = zip_map(&g, self.data(a), |gv, av| gv * av);
                    self.push_grad(&mut grads, a, |_| da);
                    self.push_grad(&mut grads, b, |_| db);
                }
                Op::Scale(a, c) => {
                    self.push_grad(&mut grads, a, |_| g.iter().map(|&v| v * c).collect());
                }
                Op::AddBias { x, bias } => {
                    let (r, c) = rows_cols(&self.nodes[i].t.shape);
                    self.push_grad(&mut grads, x, |_| g.clone());
                    let mut db = vec![T::zero(); c];
                    for row in 0..r {
                        for (d, &gv) in db.iter_mut().zip(&g[row * c..(row + 1) * c]) {
                            *d = *d + gv;
                        }
                    }
                    self.push_grad(&mut grads, bias, |_| db);
                }
                Op::Gelu(a) => {
                    let dg = zip_map(&g, self.data(a), |gv, x| gv * gelu_grad(x));
                    self.push_grad(&mut grads, a, |_| dg);
                }
                Op::Exp(a) => {
                    let out = &self.nodes[i].t.data;
                    let dg = zip_map(&g, out, |gv, y| gv * y);
                    self.push_grad(&mut grads, a, |_| dg);
                }
                Op::Log(a) => {
                    let dg = zip_map(&g, self.data(a), |gv, x| gv / x);
                    self.push_grad(&mut grads, a, |_| dg);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = {
                        let s = self.shape(a);
                        (s[0], s[1])
                    };
                    let n_cols = self.shape(b)[1];
                    // dA = G . B^T, dB = A^T . G
                    let da = mm_nt(&g, self.data(b), m, n_cols, k);
                    let db = mm_tn(self.data(a), &g, m, k, n_cols);
                    self.push_grad(&mut grads, a, |_| da);
                    self.push_grad(&mut grads, b, |_| db);
                }
                Op::Transpose(a) => {
                    let (r, c) = {
                        let s = &self.nodes[i].t.shape;
                        (s[0], s[1])
                    };
                    let mut dg = vec![T::zero(); r * c];
                    for p in 0..r {
                        for q in 0..c {
                            dg[q * r + p] = g[p * c + q];
                        }
                    }
                    self.push_grad(&mut grads, a, |_| dg);
                }
                Op::Softmax { x, axis } => {
                    let y = self.nodes[i].t.data.clone();
                    let (r, c) = rows_cols(&self.nodes[i].t.shape);
                    let mut dg = vec![T::zero(); r * c];
                    if axis == 1 {
                        for row in 0..r {
                            softmax_backward_slice(
                                &y[row * c..(row + 1) * c],
                                &g[row * c..(row + 1) * c],
                                &mut dg[row * c..(row + 1) * c],
                            );
                        }
                    } else {
                        let mut ycol = vec![T::zero(); r];
                        let mut gcol = vec![T::zero(); r];
                        let mut dcol = vec![T::zero(); r];
                        for j in 0..c {
                            for row in 0..r {
                                ycol[row] = y[row * c + j];
                                gcol[row] = g[row * c + j];
                            }
                            softmax_backward_slice(&ycol, &gcol, &mut dcol);
                            for row in 0..r {
                                dg[row * c + j] = dcol[row];
                            }
                        }
                    }
                    self.push_grad(&mut grads, x, |_| dg);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let (r, c) = rows_cols(&self.nodes[i].t.shape);
                    let xv = self.data(x).to_vec();
                    let gv = self.data(gamma).to_vec();
                    let cn = T::from_f64(c as f64);
                    let mut dx = vec![T::zero(); r * c];
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for row in 0..r {
                        let xs = &xv[row * c..(row + 1) * c];
                        let gs = &g[row * c..(row + 1) * c];
                        let mean = xs.iter().copied().sum::<T>() / cn;
                        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
                        let inv_std = (var + eps).sqrt().recip();
                        let xhat: Vec<T> = xs.iter().map(|&v| (v - mean) * inv_std).collect();
                        for j in 0..c {
                            dgamma[j] = dgamma[j] + gs[j] * xhat[j];
                            dbeta[j] = dbeta[j] + gs[j];
                        }
                        let dxhat: Vec<T> = (0..c).map(|j| gs[j] * gv[j]).collect();
                        let sum_dxhat = dxhat.iter().copied().sum::<T>();
                        let sum_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>();
                        for j in 0..c {
                            dx[row * c + j] =
                                inv_std / cn * (cn * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        }
                    }
                    self.push_grad(&mut grads, x, |_| dx);
                    self.push_grad(&mut grads, gamma, |_| dgamma);
                    self.push_grad(&mut grads, beta, |_| dbeta);
                }
                Op::SumAll(a) => {
                    let n_in = self.nodes[a.0].t.numel();
                    self.push_grad(&mut grads, a, |_| vec![g[0]; n_in]);
                }
                Op::MeanAll(a) => {
                    let n_in = self.nodes[a.0].t.numel();
                    let gv = g[0] / T::from_f64(n_in as f64);
                    self.push_grad(&mut grads, a, |_| vec![gv; n_in]);
                }
                Op::GatherRows { x, idx } => {
                    let sx = self.shape(x);
                    let (r, c) = (sx[0], sx[1]);
                    let mut dx = vec![T::zero(); r * c];
                    for (out_row, &src_row) in idx.iter().enumerate() {
                        for j in 0..c {
                            dx[src_row * c + j] = dx[src_row * c + j] + g[out_row * c + j];
                        }
                    }
                    self.push_grad(&mut grads, x, |_| dx);
                }
                Op::AssembleTokens { visible, mask_token, visible_pos, masked_pos } => {
                    let c = self.shape(visible)[1];
                    let mut dv = vec![T::zero(); visible_pos.len() * c];
                    for (i_v, &p) in visible_pos.iter().enumerate() {
                        dv[i_v * c..(i_v + 1) * c].copy_from_slice(&g[p * c..(p + 1) * c]);
                    }
                    let mut dm = vec![T::zero(); c];
                    for &p in &masked_pos {
                        for (d, &gv) in dm.iter_mut().zip(&g[p * c..(p + 1) * c]) {
                            *d = *d + gv;
                        }
                    }
                    if self.shape(mask_token).len() == 2 {
                        // stored as [1, C]
                    }
                    self.push_grad(&mut grads, visible, |_| dv);
                    self.push_grad(&mut grads, mask_token, |_| dm);
                }
                Op::MeanPoolGroups { x, n_groups } => {
                    let sx = self.shape(x);
                    let (l, c) = (sx[0], sx[1]);
                    let glen = l / n_groups;
                    let inv = T::from_f64(1.0 / glen as f64);
                    let mut dx = vec![T::zero(); l * c];
                    for gi in 0..n_groups {
                        for r in 0..glen {
                            for j in 0..c {
                                dx[(gi * glen + r) * c + j] = g[gi * c + j] * inv;
                            }
                        }
                    }
                    self.push_grad(&mut grads, x, |_| dx);
                }
                Op::L2NormalizeRows(x) => {
                    let (r, c) = rows_cols(&self.nodes[i].t.shape);
                    let xv = self.data(x);
                    let y = &self.nodes[i].t.data;
                    let mut dx = vec![T::zero(); r * c];
                    for row in 0..r {
                        let xs = &xv[row * c..(row + 1) * c];
                        let ys = &y[row * c..(row + 1) * c];
                        let gs = &g[row * c..(row + 1) * c];
                        let norm = xs.iter().map(|&v| v * v).sum::<T>().sqrt();
                        let dot = gs.iter().zip(ys).map(|(&a, &b)| a * b).sum::<T>();
                        for j in 0..c {
                            dx[row * c + j] = (gs[j] - ys[j] * dot) / norm;
                        }
                    }
                    self.push_grad(&mut grads, x, |_| dx);
                }
                Op::DiagCrossEntropy { scores, allowed } => {
                    let n_rows = self.shape(scores)[0];
                    let src = self.data(scores);
                    let up = g[0];
                    let mut ds = vec![T::zero(); n_rows * n_rows];
                    for row in 0..n_rows {
                        let rs = &src[row * n_rows..(row + 1) * n_rows];
                        let row_allowed =
                            |j: usize| allowed.as_ref().map_or(true, |a| a[row * n_rows + j]);
                        let mut mx = T::neg_infinity();
                        for j in 0..n_rows {
                            if row_allowed(j) && rs[j] > mx {
                                mx = rs[j];
                            }
                        }
                        let mut denom = T::zero();
                        for j in 0..n_rows {
                            if row_allowed(j) {
                                denom = denom + (rs[j] - mx).exp();
                            }
                        }
                        for j in 0..n_rows {
                            if row_allowed(j) {
                                let p = (rs[j] - mx).exp() / denom;
                                let delta = if j == row { T::one() } else { T::zero() };
                                ds[row * n_rows + j] = up * (p - delta);
                            }
                        }
                    }
                    self.push_grad(&mut grads, scores, |_| ds);
                }
                Op::SliceCols { x, start, len } => {
                    let sx = self.shape(x);
                    let (r, c) = (sx[0], sx[1]);
                    let mut dx = vec![T::zero(); r * c];
                    for row in 0..r {
                        dx[row * c + start..row * c + start + len]
                            .copy_from_slice(&g[row * len..(row + 1) * len]);
                    }
                    self.push_grad(&mut grads, x, |_| dx);
                }
                Op::ConcatCols(xs) => {
                    let r = self.shape(xs[0])[0];
                    let total = self.nodes[i].t.shape[1];
                    let mut offset = 0;
                    for &x in &xs {
                        let w = self.shape(x)[1];
                        let mut dx = vec![T::zero(); r * w];
                        for row in 0..r {
                            dx[row * w..(row + 1) * w]
                                .copy_from_slice(&g[row * total + offset..row * total + offset + w]);
                        }
                        offset += w;
                        self.push_grad(&mut grads, x, |_| dx);
                    }
                }
                Op::ConcatRows(xs) => {
                    let c = self.nodes[i].t.shape[1];
                    let mut offset = 0;
                    for &x in &xs {
                        let (r, _) = rows_cols(self.shape(x));
                        let dx = g[offset * c..(offset + r) * c].to_vec();
                        offset += r;
                        self.push_grad(&mut grads, x, |_| dx);
                    }
                }
            }
        }
        Ok(())
    }

    fn push_grad<F>(&self, grads: &mut [Option<Vec<T>>], target: TensorRef, make: F)
    where
        F: FnOnce(&Self) -> Vec<T>,
    {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        let g = make(self);
        match &mut grads[target.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a = *a + *b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: &[T]) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Standard normal CDF via erf.
fn gauss_cdf<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    half * (T::one() + (x * inv_sqrt2).erf())
}

/// d/dx [x * Phi(x)] = Phi(x) + x * phi(x).
fn gelu_grad<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let pdf = inv_sqrt_2pi * (-(x * x) * T::from_f64(0.5)).exp();
    gauss_cdf(x) + x * pdf
}

fn softmax_slice<T: Real>(src: &[T], out: &mut [T]) {
    let mx = src.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(src) {
        let e = (v - mx).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = sum.recip();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

/// dsoftmax: dx_i = y_i * (g_i - sum_j g_j y_j).
fn softmax_backward_slice<T: Real>(y: &[T], g: &[T], out: &mut [T]) {
    let dot = y.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
    for ((o, &yv), &gv) in out.iter_mut().zip(y).zip(g) {
        *o = yv * (gv - dot);
    }
}

/// C[m,n] = A[m,k] . B[k,n], row-major, i-k-j loop order so the inner loop
/// runs over contiguous memory in both B and C.
pub fn mm<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// C[m,k] = G[m,n] . B[k,n]^T — rows of G dotted with rows of B.
fn mm_nt<T: Real>(g: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    c
}

/// C[k,n] = A[m,k]^T . G[m,n].
fn mm_tn<T: Real>(a: &[T], g: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv = *cv + av * gv;
            }
        }
    }
    c
}
