//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape: every operation pushes one node
//! holding its output value and a record of which earlier nodes fed it.
//! Because inputs are always recorded before outputs, walking the tape in
//! reverse index order *is* a topological order, and [`Graph::backward`]
//! is a single reverse sweep.
//!
//! Parameters are leaf nodes registered first via [`Graph::param`]; they form
//! a protected prefix of the tape that survives [`Graph::reset`], so one graph
//! owns the model for an entire training run while per-step activations are
//! discarded after every update.
//!
//! All tensors on the tape are rank-2 `[rows, cols]`; losses reduce to
//! `[1, 1]`. Shape errors are programming errors and panic with a message
//! naming the operation and both shapes. A graph is confined to one thread
//! at a time (it is `Send` but deliberately has no interior mutability).

use super::{Scalar, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Recorded operation for one tape node.
#[derive(Debug, Clone)]
enum Op<F> {
    /// Parameter or constant input; no inputs of its own.
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[r, n] + [1, n]`, the bias pattern.
    AddRow(Var, Var),
    /// Multiply row `i` by the constant `consts[i]`; used for continuation
    /// masks and per-row loss weights. The constants are not differentiated.
    ScaleRows(Var, Vec<F>),
    /// `a · bᵀ` for `a: [r, k]`, `b: [n, k]` — the layout that keeps every
    /// inner loop contiguous in row-major storage.
    MatmulNt(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    MulScalar(Var, F),
    AddScalar(Var, F),
    Clamp(Var, F, F),
    /// Elementwise minimum; the gradient follows the smaller input (ties go
    /// to the first argument).
    Min(Var, Var),
    /// Mean over all elements, producing `[1, 1]`.
    Mean(Var),
    /// Sum over all elements, producing `[1, 1]`.
    Sum(Var),
    /// `[r, m] ++ [r, n] -> [r, m + n]` column-wise.
    ConcatCols(Var, Var),
    /// Stack inputs vertically; all must share a column count.
    ConcatRows(Vec<Var>),
    /// Contiguous row window `[start, start + rows)`.
    SliceRows(Var, usize, usize),
    /// Gather rows by index (rows may repeat).
    SelectRows(Var, Vec<usize>),
    /// Inverse of `SelectRows`: place row `j` of the input at row `idx[j]`
    /// of a zero tensor with `total` rows. Indices must be distinct.
    ScatterRows(Var, Vec<usize>, usize),
    /// Fused embedding lookup: output row `r` is the concatenation over
    /// `groups` blocks of width `E`, each block the sum of `per_group`
    /// table rows. Plain embedding is the `per_group == 1` case.
    EmbedSum { table: Var, ids: Vec<usize>, rows: usize, groups: usize },
    /// Row-wise log-softmax.
    LogSoftmax(Var),
    /// Pick one column per row: `out[i, 0] = a[i, idx[i]]`.
    GatherCol(Var, Vec<usize>),
    /// Entropy per row of a *log-probability* tensor: `-Σ exp(lp)·lp`.
    RowEntropy(Var),
    /// Same elements, new shape (row-major order preserved).
    Reshape(Var),
}

/// Reverse-mode differentiation tape over scalars of type `F`.
pub struct Graph<F: Scalar> {
    values: Vec<Tensor<F>>,
    /// Lazily allocated gradient buffers, parallel to `values`. An empty
    /// buffer means "no gradient has flowed here yet".
    grads: Vec<Vec<F>>,
    ops: Vec<Op<F>>,
    /// Leading tape nodes that survive `reset` (the model parameters).
    protected: usize,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { values: Vec::new(), grads: Vec::new(), ops: Vec::new(), protected: 0 }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.values.push(value);
        self.grads.push(Vec::new());
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Register a trainable parameter. Parameters must all be registered
    /// before any computation is recorded; they survive [`Graph::reset`].
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        assert_eq!(
            self.values.len(),
            self.protected,
            "param: parameters must be registered before any computation is recorded \
             (tape already has {} non-parameter nodes)",
            self.values.len() - self.protected
        );
        let v = self.push(value, Op::Leaf);
        self.protected = self.values.len();
        v
    }

    /// Record a non-trainable input (observations, advantages, targets, ...).
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.values[v.0]
    }

    /// Gradient of the last backward root with respect to `v`.
    ///
    /// Panics if no gradient has flowed to `v` (call [`Graph::backward`]
    /// first, and only ask for nodes that influence the root).
    pub fn grad(&self, v: Var) -> &[F] {
        assert!(
            !self.grads[v.0].is_empty(),
            "grad: node {} has no gradient; run backward() from a root it influences",
            v.0
        );
        &self.grads[v.0]
    }

    /// Gradient of `v`, or `None` if nothing flowed to it.
    pub fn grad_opt(&self, v: Var) -> Option<&[F]> {
        if self.grads[v.0].is_empty() { None } else { Some(&self.grads[v.0]) }
    }

    /// Overwrites a parameter's gradient buffer (used after averaging
    /// gradients across workers — the optimizer then reads the mean).
    pub fn set_grad(&mut self, v: Var, grad: &[F]) {
        assert!(v.0 < self.protected, "set_grad: node {} is not a parameter", v.0);
        let numel = self.values[v.0].numel();
        assert_eq!(
            grad.len(),
            numel,
            "set_grad: {} values for a parameter of {} elements",
            grad.len(),
            numel
        );
        self.grads[v.0].clear();
        self.grads[v.0].extend_from_slice(grad);
    }

    /// Mutable access to a parameter's values (used by the optimizer and by
    /// checkpoint restore).
    pub fn param_data_mut(&mut self, v: Var) -> &mut [F] {
        assert!(v.0 < self.protected, "param_data_mut: node {} is not a parameter", v.0);
        self.values[v.0].data_mut()
    }

    /// Split borrow of one parameter: mutable values plus the (read-only)
    /// gradient, if any has flowed. This is the optimizer's accessor — an
    /// update reads the gradient while writing the values.
    pub fn param_update_view(&mut self, v: Var) -> (&mut [F], Option<&[F]>) {
        assert!(v.0 < self.protected, "param_update_view: node {} is not a parameter", v.0);
        let grad = if self.grads[v.0].is_empty() { None } else { Some(self.grads[v.0].as_slice()) };
        (self.values[v.0].data_mut(), grad)
    }

    /// Number of registered parameters.
    pub fn param_count(&self) -> usize {
        self.protected
    }

    /// Handles of all registered parameters, in registration order.
    pub fn param_vars(&self) -> Vec<Var> {
        (0..self.protected).map(Var).collect()
    }

    /// Total number of scalar elements across all parameters.
    pub fn param_numel(&self) -> usize {
        self.values[..self.protected].iter().map(|t| t.numel()).sum()
    }

    /// Drop all non-parameter nodes and clear every gradient buffer.
    /// Parameter values are retained.
    pub fn reset(&mut self) {
        self.values.truncate(self.protected);
        self.ops.truncate(self.protected);
        self.grads.truncate(self.protected);
        for g in &mut self.grads {
            g.clear();
        }
    }

    /// Clear gradient buffers without touching the tape.
    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.clear();
        }
    }

    /// Number of nodes currently on the tape (parameters included).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    // ---- elementwise and matrix operations -------------------------------

    fn binary_same_shape(&mut self, op_name: &str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Tensor<F> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "{op_name}: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary_same_shape("add", a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary_same_shape("sub", a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary_same_shape("mul", a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let out = self.binary_same_shape("min", a, b, |x, y| if x <= y { x } else { y });
        self.push(out, Op::Min(a, b))
    }

    /// Add a `[1, n]` row (e.g. a bias) to every row of a `[r, n]` tensor.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (r, n) = self.values[a.0].dims2("add_row");
        let (br, bn) = self.values[b.0].dims2("add_row");
        assert!(
            br == 1 && bn == n,
            "add_row: cannot broadcast {:?} onto {:?}",
            self.values[b.0].shape(),
            self.values[a.0].shape()
        );
        let mut data = self.values[a.0].data().to_vec();
        let bias = self.values[b.0].data();
        for row in data.chunks_mut(n) {
            for (x, &bv) in row.iter_mut().zip(bias) {
                *x = *x + bv;
            }
        }
        let out = Tensor::new(&[r, n], data);
        self.push(out, Op::AddRow(a, b))
    }

    /// Multiply each row of `a` by a fixed per-row constant. The constants
    /// are data, not differentiated — this is the episode-mask primitive.
    pub fn scale_rows(&mut self, a: Var, consts: &[F]) -> Var {
        let (r, n) = self.values[a.0].dims2("scale_rows");
        assert_eq!(
            consts.len(),
            r,
            "scale_rows: {} constants for {} rows (shape {:?})",
            consts.len(),
            r,
            self.values[a.0].shape()
        );
        let mut data = self.values[a.0].data().to_vec();
        for (row, &c) in data.chunks_mut(n).zip(consts) {
            for x in row.iter_mut() {
                *x = *x * c;
            }
        }
        let out = Tensor::new(&[r, n], data);
        self.push(out, Op::ScaleRows(a, consts.to_vec()))
    }

    /// `a · bᵀ` for `a: [r, k]` and `b: [n, k]`, yielding `[r, n]`.
    ///
    /// Linear layers store their weight as `[out, in]` and call this with the
    /// activations on the left, so both operands are read along contiguous
    /// rows.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (r, k) = self.values[a.0].dims2("matmul_nt");
        let (n, kb) = self.values[b.0].dims2("matmul_nt");
        assert_eq!(
            k, kb,
            "matmul_nt: inner extents differ, {:?} vs {:?}",
            self.values[a.0].shape(),
            self.values[b.0].shape()
        );
        let av = self.values[a.0].data();
        let bv = self.values[b.0].data();
        let mut data = vec![F::zero(); r * n];
        for i in 0..r {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut data[i * n..(i + 1) * n];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &bv[j * k..(j + 1) * k];
                let mut acc = F::zero();
                for (&x, &y) in arow.iter().zip(brow) {
                    acc = acc + x * y;
                }
                *o = acc;
            }
        }
        let out = Tensor::new(&[r, n], data);
        self.push(out, Op::MatmulNt(a, b))
    }

    fn unary(&mut self, a: Var, op: Op<F>, f: impl Fn(F) -> F) -> Var {
        let ta = &self.values[a.0];
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(ta.shape(), data);
        self.push(out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| F::one() / (F::one() + (-x).exp()))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn mul_scalar(&mut self, a: Var, c: F) -> Var {
        self.unary(a, Op::MulScalar(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        self.unary(a, Op::AddScalar(a, c), |x| x + c)
    }

    pub fn clamp(&mut self, a: Var, lo: F, hi: F) -> Var {
        assert!(lo <= hi, "clamp: lower bound {lo} exceeds upper bound {hi}");
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.max(lo).min(hi))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        assert!(ta.numel() > 0, "mean: cannot reduce an empty tensor of shape {:?}", ta.shape());
        let mut acc = F::zero();
        for &x in ta.data() {
            acc = acc + x;
        }
        let out = Tensor::scalar(acc / F::from_f64(ta.numel() as f64));
        self.push(out, Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        let mut acc = F::zero();
        for &x in ta.data() {
            acc = acc + x;
        }
        let out = Tensor::scalar(acc);
        self.push(out, Op::Sum(a))
    }

    // ---- shape plumbing ---------------------------------------------------

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.values[a.0].dims2("concat_cols");
        let (rb, cb) = self.values[b.0].dims2("concat_cols");
        assert_eq!(
            ra, rb,
            "concat_cols: row counts differ, {:?} vs {:?}",
            self.values[a.0].shape(),
            self.values[b.0].shape()
        );
        let av = self.values[a.0].data();
        let bv = self.values[b.0].data();
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        let out = Tensor::new(&[ra, ca + cb], data);
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Stack tensors vertically, in order.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: need at least one input");
        let cols = self.values[parts[0].0].dims2("concat_rows").1;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.values[p.0].dims2("concat_rows");
            assert_eq!(
                c,
                cols,
                "concat_rows: column counts differ, {:?} vs {:?}",
                self.values[parts[0].0].shape(),
                self.values[p.0].shape()
            );
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.values[p.0].data());
        }
        let out = Tensor::new(&[rows, cols], data);
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Contiguous window of `rows` rows starting at `start`.
    pub fn slice_rows(&mut self, a: Var, start: usize, rows: usize) -> Var {
        let (r, c) = self.values[a.0].dims2("slice_rows");
        assert!(
            start + rows <= r,
            "slice_rows: window [{start}, {}) out of bounds for shape {:?}",
            start + rows,
            self.values[a.0].shape()
        );
        let data = self.values[a.0].data()[start * c..(start + rows) * c].to_vec();
        let out = Tensor::new(&[rows, c], data);
        self.push(out, Op::SliceRows(a, start, rows))
    }

    /// Gather rows by index; indices may repeat.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let (r, c) = self.values[a.0].dims2("select_rows");
        let av = self.values[a.0].data();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < r, "select_rows: row index {i} out of bounds for shape {:?}", self.values[a.0].shape());
            data.extend_from_slice(&av[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(&[indices.len(), c], data);
        self.push(out, Op::SelectRows(a, indices.to_vec()))
    }

    /// Place row `j` of `a` at row `indices[j]` of a zero `[total, cols]`
    /// tensor. Indices must be distinct.
    pub fn scatter_rows(&mut self, a: Var, indices: &[usize], total: usize) -> Var {
        let (r, c) = self.values[a.0].dims2("scatter_rows");
        assert_eq!(
            indices.len(),
            r,
            "scatter_rows: {} indices for {} rows (shape {:?})",
            indices.len(),
            r,
            self.values[a.0].shape()
        );
        let av = self.values[a.0].data();
        let mut data = vec![F::zero(); total * c];
        let mut seen = vec![false; total];
        for (j, &i) in indices.iter().enumerate() {
            assert!(i < total, "scatter_rows: target row {i} out of bounds for {total} rows");
            assert!(!seen[i], "scatter_rows: duplicate target row {i}");
            seen[i] = true;
            data[i * c..(i + 1) * c].copy_from_slice(&av[j * c..(j + 1) * c]);
        }
        let out = Tensor::new(&[total, c], data);
        self.push(out, Op::ScatterRows(a, indices.to_vec(), total))
    }

    /// Reinterprets `a` under a new shape with the same element count;
    /// row-major order is preserved, so this is layout-free.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let numel: usize = shape.iter().product();
        assert_eq!(
            self.values[a.0].numel(),
            numel,
            "reshape: cannot view shape {:?} as {:?}",
            self.values[a.0].shape(),
            shape
        );
        let out = Tensor::new(shape, self.values[a.0].data().to_vec());
        self.push(out, Op::Reshape(a))
    }

    // ---- embeddings and categorical utilities ----------------------------

    /// Fused embedding lookup-and-sum.
    ///
    /// `ids` has `rows * groups * per_group` entries. Output row `r` is the
    /// horizontal concatenation of `groups` blocks of width `E` (the table's
    /// embedding width); block `g` is the sum of the table rows named by
    /// `ids[(r*groups + g)*per_group ..][..per_group]`.
    ///
    /// Plain embedding is `per_group == 1`; summing the channel embeddings of
    /// a grid cell is `per_group == channels`.
    pub fn embed_sum(&mut self, table: Var, ids: &[usize], rows: usize, groups: usize) -> Var {
        let (v, e) = self.values[table.0].dims2("embed_sum");
        assert!(
            rows * groups > 0 && ids.len() % (rows * groups) == 0,
            "embed_sum: {} ids cannot tile {rows} rows x {groups} groups",
            ids.len()
        );
        let per_group = ids.len() / (rows * groups);
        for &id in ids {
            assert!(id < v, "embed_sum: index {id} out of range for table with {v} rows");
        }
        let tv = self.values[table.0].data();
        let mut data = vec![F::zero(); rows * groups * e];
        for (block, group_ids) in data.chunks_mut(e).zip(ids.chunks(per_group)) {
            for &id in group_ids {
                let trow = &tv[id * e..(id + 1) * e];
                for (o, &t) in block.iter_mut().zip(trow) {
                    *o = *o + t;
                }
            }
        }
        let out = Tensor::new(&[rows, groups * e], data);
        self.push(out, Op::EmbedSum { table, ids: ids.to_vec(), rows, groups })
    }

    /// Plain embedding lookup: one table row per index.
    pub fn embed(&mut self, table: Var, indices: &[usize]) -> Var {
        self.embed_sum(table, indices, indices.len(), 1)
    }

    /// Row-wise log-softmax (numerically stabilized by max subtraction).
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.values[a.0].dims2("log_softmax");
        assert!(c > 0, "log_softmax: no columns in shape {:?}", self.values[a.0].shape());
        let av = self.values[a.0].data();
        let mut data = vec![F::zero(); r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let mut m = row[0];
            for &x in row {
                m = m.max(x);
            }
            let mut s = F::zero();
            for &x in row {
                s = s + (x - m).exp();
            }
            let lse = m + s.ln();
            for (o, &x) in data[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        let out = Tensor::new(&[r, c], data);
        self.push(out, Op::LogSoftmax(a))
    }

    /// Pick column `indices[i]` from row `i`, yielding `[r, 1]`. This is the
    /// log-probability gather for executed actions.
    pub fn gather_col(&mut self, a: Var, indices: &[usize]) -> Var {
        let (r, c) = self.values[a.0].dims2("gather_col");
        assert_eq!(
            indices.len(),
            r,
            "gather_col: {} indices for {} rows (shape {:?})",
            indices.len(),
            r,
            self.values[a.0].shape()
        );
        let av = self.values[a.0].data();
        let mut data = Vec::with_capacity(r);
        for (i, &j) in indices.iter().enumerate() {
            assert!(j < c, "gather_col: column index {j} out of bounds for shape {:?}", self.values[a.0].shape());
            data.push(av[i * c + j]);
        }
        let out = Tensor::new(&[r, 1], data);
        self.push(out, Op::GatherCol(a, indices.to_vec()))
    }

    /// Entropy per row of a log-probability tensor (`[r, A] -> [r, 1]`):
    /// `H = -Σ_a exp(lp_a) · lp_a`.
    pub fn row_entropy(&mut self, log_probs: Var) -> Var {
        let (r, c) = self.values[log_probs.0].dims2("row_entropy");
        let av = self.values[log_probs.0].data();
        let mut data = Vec::with_capacity(r);
        for i in 0..r {
            let mut h = F::zero();
            for &lp in &av[i * c..(i + 1) * c] {
                h = h - lp.exp() * lp;
            }
            data.push(h);
        }
        let out = Tensor::new(&[r, 1], data);
        self.push(out, Op::RowEntropy(log_probs))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar root. Gradients accumulate into each
    /// node's buffer; repeated calls without [`Graph::zero_grads`] add up.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(
            self.values[root.0].numel(),
            1,
            "backward: root must be scalar, got shape {:?}",
            self.values[root.0].shape()
        );
        // Sweep in fresh scratch buffers so that gradients left over from an
        // earlier pass are not re-propagated, then fold the scratch into the
        // persistent accumulators at the end.
        let mut scratch: Vec<Vec<F>> = vec![Vec::new(); self.values.len()];
        scratch[root.0] = vec![F::one()];

        {
            let Graph { values, ops, .. } = &*self;
            let grads = &mut scratch;
            Self::sweep(values, ops, grads, root.0);
        }

        for (accum, fresh) in self.grads.iter_mut().zip(scratch) {
            if fresh.is_empty() {
                continue;
            }
            if accum.is_empty() {
                *accum = fresh;
            } else {
                axpy(accum, F::one(), &fresh);
            }
        }
    }

    fn sweep(values: &[Tensor<F>], ops: &[Op<F>], grads: &mut [Vec<F>], root: usize) {
        for i in (0..=root).rev() {
            if grads[i].is_empty() {
                continue; // nothing flowed here
            }
            // Move the output gradient out so input buffers can be borrowed
            // freely (an op may use the same node for both inputs).
            let g = std::mem::take(&mut grads[i]);
            match &ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(ensure(grads, a.0, g.len()), F::one(), &g);
                    axpy(ensure(grads, b.0, g.len()), F::one(), &g);
                }
                Op::Sub(a, b) => {
                    axpy(ensure(grads, a.0, g.len()), F::one(), &g);
                    axpy(ensure(grads, b.0, g.len()), -F::one(), &g);
                }
                Op::Mul(a, b) => {
                    // d(a⊙b) — read values before borrowing grads.
                    {
                        let bv = values[b.0].data();
                        let ga = ensure(grads, a.0, g.len());
                        for ((o, &gv), &y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o = *o + gv * y;
                        }
                    }
                    {
                        let av = values[a.0].data();
                        let gb = ensure(grads, b.0, g.len());
                        for ((o, &gv), &x) in gb.iter_mut().zip(&g).zip(av) {
                            *o = *o + gv * x;
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    let n = values[b.0].numel();
                    axpy(ensure(grads, a.0, g.len()), F::one(), &g);
                    let gb = ensure(grads, b.0, n);
                    for row in g.chunks(n) {
                        for (o, &gv) in gb.iter_mut().zip(row) {
                            *o = *o + gv;
                        }
                    }
                }
                Op::ScaleRows(a, consts) => {
                    let n = g.len() / consts.len();
                    let ga = ensure(grads, a.0, g.len());
                    for ((orow, grow), &c) in ga.chunks_mut(n).zip(g.chunks(n)).zip(consts) {
                        for (o, &gv) in orow.iter_mut().zip(grow) {
                            *o = *o + gv * c;
                        }
                    }
                }
                Op::MatmulNt(a, b) => {
                    let (r, k) = values[a.0].dims2("matmul_nt");
                    let n = values[b.0].dims2("matmul_nt").0;
                    {
                        let bv = values[b.0].data();
                        let ga = ensure(grads, a.0, r * k);
                        for i_row in 0..r {
                            let grow = &g[i_row * n..(i_row + 1) * n];
                            let arow = &mut ga[i_row * k..(i_row + 1) * k];
                            for (j, &gv) in grow.iter().enumerate() {
                                axpy(arow, gv, &bv[j * k..(j + 1) * k]);
                            }
                        }
                    }
                    {
                        let av = values[a.0].data();
                        let gb = ensure(grads, b.0, n * k);
                        for i_row in 0..r {
                            let grow = &g[i_row * n..(i_row + 1) * n];
                            let arow = &av[i_row * k..(i_row + 1) * k];
                            for (j, &gv) in grow.iter().enumerate() {
                                axpy(&mut gb[j * k..(j + 1) * k], gv, arow);
                            }
                        }
                    }
                }
                Op::Tanh(a) => {
                    let yv = values[i].data();
                    let ga = ensure(grads, a.0, g.len());
                    for ((o, &gv), &y) in ga.iter_mut().zip(&g).zip(yv) {
                        *o = *o + gv * (F::one() - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let yv = values[i].data();
                    let ga = ensure(grads, a.0, g.len());
                    for ((o, &gv), &y) in ga.iter_mut().zip(&g).zip(yv) {
                        *o = *o + gv * y * (F::one() - y);
                    }
                }
                Op::Exp(a) => {
                    let yv = values[i].data();
                    let ga = ensure(grads, a.0, g.len());
                    for ((o, &gv), &y) in ga.iter_mut().zip(&g).zip(yv) {
                        *o = *o + gv * y;
                    }
                }
                Op::Ln(a) => {
                    let xv = values[a.0].data();
                    let ga = ensure(grads, a.0, g.len());
                    for ((o, &gv), &x) in ga.iter_mut().zip(&g).zip(xv) {
                        *o = *o + gv / x;
                    }
                }
                Op::MulScalar(a, c) => {
                    axpy(ensure(grads, a.0, g.len()), *c, &g);
                }
                Op::AddScalar(a, _) => {
                    axpy(ensure(grads, a.0, g.len()), F::one(), &g);
                }
                Op::Clamp(a, lo, hi) => {
                    let xv = values[a.0].data();
                    let (lo, hi) = (*lo, *hi);
                    let ga = ensure(grads, a.0, g.len());
                    for ((o, &gv), &x) in ga.iter_mut().zip(&g).zip(xv) {
                        if x >= lo && x <= hi {
                            *o = *o + gv;
                        }
                    }
                }
                Op::Min(a, b) => {
                    // Gradient follows the selected side; ties go to `a`.
                    {
                        let (av, bv) = (values[a.0].data(), values[b.0].data());
                        let ga = ensure(grads, a.0, g.len());
                        for (((o, &gv), &x), &y) in ga.iter_mut().zip(&g).zip(av).zip(bv) {
                            if x <= y {
                                *o = *o + gv;
                            }
                        }
                    }
                    {
                        let (av, bv) = (values[a.0].data(), values[b.0].data());
                        let gb = ensure(grads, b.0, g.len());
                        for (((o, &gv), &x), &y) in gb.iter_mut().zip(&g).zip(av).zip(bv) {
                            if x > y {
                                *o = *o + gv;
                            }
                        }
                    }
                }
                Op::Mean(a) => {
                    let n = values[a.0].numel();
                    let gv = g[0] / F::from_f64(n as f64);
                    for o in ensure(grads, a.0, n).iter_mut() {
                        *o = *o + gv;
                    }
                }
                Op::Sum(a) => {
                    let n = values[a.0].numel();
                    let gv = g[0];
                    for o in ensure(grads, a.0, n).iter_mut() {
                        *o = *o + gv;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ra, ca) = values[a.0].dims2("concat_cols");
                    let cb = values[b.0].dims2("concat_cols").1;
                    let w = ca + cb;
                    {
                        let ga = ensure(grads, a.0, ra * ca);
                        for i_row in 0..ra {
                            axpy(
                                &mut ga[i_row * ca..(i_row + 1) * ca],
                                F::one(),
                                &g[i_row * w..i_row * w + ca],
                            );
                        }
                    }
                    {
                        let gb = ensure(grads, b.0, ra * cb);
                        for i_row in 0..ra {
                            axpy(
                                &mut gb[i_row * cb..(i_row + 1) * cb],
                                F::one(),
                                &g[i_row * w + ca..(i_row + 1) * w],
                            );
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let n = values[p.0].numel();
                        axpy(ensure(grads, p.0, n), F::one(), &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceRows(a, start, _rows) => {
                    let (_, c) = values[a.0].dims2("slice_rows");
                    let n = values[a.0].numel();
                    let start = *start;
                    let ga = ensure(grads, a.0, n);
                    axpy(&mut ga[start * c..start * c + g.len()], F::one(), &g);
                }
                Op::SelectRows(a, indices) => {
                    let indices = indices.clone();
                    let (_, c) = values[a.0].dims2("select_rows");
                    let n = values[a.0].numel();
                    let ga = ensure(grads, a.0, n);
                    for (j, &i_src) in indices.iter().enumerate() {
                        axpy(&mut ga[i_src * c..(i_src + 1) * c], F::one(), &g[j * c..(j + 1) * c]);
                    }
                }
                Op::ScatterRows(a, indices, _total) => {
                    let indices = indices.clone();
                    let (_, c) = values[a.0].dims2("scatter_rows");
                    let n = values[a.0].numel();
                    let ga = ensure(grads, a.0, n);
                    for (j, &i_dst) in indices.iter().enumerate() {
                        axpy(&mut ga[j * c..(j + 1) * c], F::one(), &g[i_dst * c..(i_dst + 1) * c]);
                    }
                }
                Op::EmbedSum { table, ids, rows, groups } => {
                    let (v, e) = values[table.0].dims2("embed_sum");
                    let per_group = ids.len() / (rows * groups);
                    let ids = ids.clone();
                    let gt = ensure(grads, table.0, v * e);
                    for (block, group_ids) in g.chunks(e).zip(ids.chunks(per_group)) {
                        for &id in group_ids {
                            axpy(&mut gt[id * e..(id + 1) * e], F::one(), block);
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let (r, c) = values[i].dims2("log_softmax");
                    let yv = values[i].data();
                    let ga = ensure(grads, a.0, r * c);
                    for i_row in 0..r {
                        let grow = &g[i_row * c..(i_row + 1) * c];
                        let yrow = &yv[i_row * c..(i_row + 1) * c];
                        let mut gsum = F::zero();
                        for &gv in grow {
                            gsum = gsum + gv;
                        }
                        for ((o, &gv), &y) in
                            ga[i_row * c..(i_row + 1) * c].iter_mut().zip(grow).zip(yrow)
                        {
                            *o = *o + gv - y.exp() * gsum;
                        }
                    }
                }
                Op::GatherCol(a, indices) => {
                    let indices = indices.clone();
                    let (_, c) = values[a.0].dims2("gather_col");
                    let n = values[a.0].numel();
                    let ga = ensure(grads, a.0, n);
                    for (i_row, &j) in indices.iter().enumerate() {
                        ga[i_row * c + j] = ga[i_row * c + j] + g[i_row];
                    }
                }
                Op::RowEntropy(a) => {
                    let (r, c) = values[a.0].dims2("row_entropy");
                    let xv = values[a.0].data();
                    let ga = ensure(grads, a.0, r * c);
                    for i_row in 0..r {
                        let gv = g[i_row];
                        for (o, &lp) in ga[i_row * c..(i_row + 1) * c]
                            .iter_mut()
                            .zip(&xv[i_row * c..(i_row + 1) * c])
                        {
                            *o = *o - gv * lp.exp() * (F::one() + lp);
                        }
                    }
                }
                Op::Reshape(a) => {
                    let ga = ensure(grads, a.0, values[a.0].numel());
                    axpy(ga, F::one(), &g);
                }
            }
            grads[i] = g;
        }
    }
}

/// `y += alpha * x`, the workhorse of every backward rule.
#[inline]
fn axpy<F: Scalar>(y: &mut [F], alpha: F, x: &[F]) {
    debug_assert_eq!(y.len(), x.len(), "axpy: length mismatch {} vs {}", y.len(), x.len());
    for (o, &v) in y.iter_mut().zip(x) {
        *o = *o + alpha * v;
    }
}

/// Make sure `grads[idx]` is allocated (zero-filled) with `numel` elements.
fn ensure<F: Scalar>(grads: &mut [Vec<F>], idx: usize, numel: usize) -> &mut Vec<F> {
    if grads[idx].is_empty() {
        grads[idx] = vec![F::zero(); numel];
    }
    debug_assert_eq!(grads[idx].len(), numel, "gradient buffer for node {idx} has wrong size");
    &mut grads[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{max_relative_error, numeric_gradient};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn graph() -> Graph<f64> {
        Graph::new()
    }

    #[test]
    fn add_is_componentwise() {
        let mut g = graph();
        let a = g.constant(Tensor::new(&[1, 2], vec![1.0, 2.0]));
        let b = g.constant(Tensor::new(&[1, 2], vec![3.0, 4.0]));
        let c = g.add(a, b);
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_by_identity_is_identity() {
        let mut g = graph();
        let x = g.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let eye = g.constant(Tensor::new(
            &[3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ));
        // I is symmetric, so x · Iᵀ = x · I = x.
        let y = g.matmul_nt(x, eye);
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn matmul_small_case() {
        let mut g = graph();
        let a = g.constant(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        // b = [[5, 6], [7, 8]] stored as [n, k]; a · bᵀ.
        let b = g.constant(Tensor::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let c = g.matmul_nt(a, b);
        // row0 = [1·5+2·6, 1·7+2·8] = [17, 23]; row1 = [3·5+4·6, 3·7+4·8] = [39, 53]
        assert_eq!(g.value(c).data(), &[17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let mut g = graph();
        let x = g.constant(Tensor::new(&[1, 2], vec![0.0, 0.0]));
        let s = g.sigmoid(x);
        let t = g.tanh(x);
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
        assert_eq!(g.value(t).data(), &[0.0, 0.0]);
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut g = graph();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x);
        g.backward(y);
        assert_eq!(g.grad(x), &[6.0]);
    }

    #[test]
    fn mean_gradient_is_one_over_n() {
        let mut g = graph();
        let x = g.param(Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]));
        let y = g.mean(x);
        g.backward(y);
        assert_eq!(g.grad(x), &[0.25; 4]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = graph();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x);
        g.backward(y);
        g.backward(y);
        assert_eq!(g.grad(x), &[12.0], "two passes should add up");
        g.zero_grads();
        g.backward(y);
        assert_eq!(g.grad(x), &[6.0]);
    }

    #[test]
    #[should_panic(expected = "root must be scalar")]
    fn backward_rejects_non_scalar_root() {
        let mut g = graph();
        let x = g.param(Tensor::new(&[1, 2], vec![1.0, 2.0]));
        let y = g.mul(x, x);
        g.backward(y);
    }

    #[test]
    #[should_panic(expected = "add: shape mismatch [1, 2] vs [1, 3]")]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = graph();
        let a = g.constant(Tensor::new(&[1, 2], vec![1.0, 2.0]));
        let b = g.constant(Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]));
        let _ = g.add(a, b);
    }

    #[test]
    fn embedding_is_row_lookup() {
        let mut g = graph();
        let table = g.param(Tensor::new(&[3, 2], vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]));
        let out = g.embed(table, &[2, 0]);
        assert_eq!(g.value(out).data(), &[20.0, 21.0, 0.0, 1.0]);
        let all_zero = g.embed(table, &[0, 0, 0]);
        assert_eq!(g.value(all_zero).data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn embedding_gradient_is_sparse_and_accumulates() {
        let mut g = graph();
        let table = g.param(Tensor::new(&[3, 2], vec![0.0; 6]));
        let out = g.embed(table, &[1, 1]);
        let s = g.sum(out);
        g.backward(s);
        assert_eq!(g.grad(table), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "index 7 out of range for table with 3 rows")]
    fn embedding_rejects_out_of_range_index() {
        let mut g = graph();
        let table = g.param(Tensor::new(&[3, 2], vec![0.0; 6]));
        let _ = g.embed(table, &[7]);
    }

    #[test]
    fn log_softmax_rows_are_normalized() {
        let mut g = graph();
        let x = g.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]));
        let lp = g.log_softmax(x);
        for row in g.value(lp).data().chunks(3) {
            let total: f64 = row.iter().map(|lp| lp.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "softmax row sums to {total}");
        }
    }

    #[test]
    fn uniform_logits_have_log_cardinality_entropy() {
        let mut g = graph();
        let x = g.constant(Tensor::new(&[1, 4], vec![0.0; 4]));
        let lp = g.log_softmax(x);
        let h = g.row_entropy(lp);
        assert!((g.value(h).item() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reset_preserves_parameters_only() {
        let mut g = graph();
        let w = g.param(Tensor::scalar(2.0));
        let x = g.constant(Tensor::scalar(5.0));
        let y = g.mul(w, x);
        g.backward(y);
        assert_eq!(g.grad(w), &[5.0]);
        g.reset();
        assert_eq!(g.len(), 1, "only the parameter survives reset");
        assert_eq!(g.value(w).item(), 2.0);
        assert!(g.grad_opt(w).is_none(), "reset clears gradients");
    }

    #[test]
    #[should_panic(expected = "parameters must be registered before any computation")]
    fn late_parameter_registration_panics() {
        let mut g = graph();
        let _ = g.constant(Tensor::scalar(1.0));
        let _ = g.param(Tensor::scalar(1.0));
    }

    /// Check one scalar-valued graph builder against central finite
    /// differences at `x`, in f64, with the standard step.
    fn fd_check(x: Vec<f64>, shape: &[usize], build: impl Fn(&mut Graph<f64>, Var) -> Var) {
        let shape = shape.to_vec();
        let mut g = Graph::new();
        let xv = g.param(Tensor::new(&shape, x.clone()));
        let y = build(&mut g, xv);
        g.backward(y);
        let analytic = g.grad(xv).to_vec();
        let numeric = numeric_gradient(
            |pt| {
                let mut g = Graph::new();
                let xv = g.constant(Tensor::new(&shape, pt.to_vec()));
                let y = build(&mut g, xv);
                g.value(y).item()
            },
            &x,
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "gradient mismatch: max relative error {err:.3e}");
    }

    #[test]
    fn matmul_chain_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        let w1: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w2: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..5 {
            let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (w1, w2) = (w1.clone(), w2.clone());
            fd_check(x, &[5, 4], move |g, xv| {
                let wa = g.constant(Tensor::new(&[5, 4], w1.clone()));
                let wb = g.constant(Tensor::new(&[4, 5], w2.clone()));
                let h = g.matmul_nt(xv, wa); // [5,5]
                let h = g.tanh(h);
                let z = g.matmul_nt(h, wb); // [5,4]
                let z = g.mul(z, xv); // fan xv into both matmul and product
                g.mean(z)
            });
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(0.2..1.5)).collect();
            fd_check(x.clone(), &[3, 4], |g, xv| {
                let a = g.tanh(xv);
                let b = g.sigmoid(xv);
                let c = g.mul(a, b);
                let d = g.exp(c);
                let e = g.ln(xv);
                let f = g.add(d, e);
                let h = g.sub(f, a);
                let i = g.mul_scalar(h, 0.7);
                let j = g.add_scalar(i, 0.3);
                g.mean(j)
            });
        }
    }

    #[test]
    fn clamp_and_min_match_finite_differences_away_from_kinks() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            // Keep points clear of the clamp bounds and of a≈b ties so the
            // subgradient choice cannot disagree with the numeric estimate.
            let x: Vec<f64> = (0..10)
                .map(|_| {
                    let v = rng.gen_range(0.1..0.9);
                    if rng.gen_bool(0.5) { v + 1.2 } else { v - 1.2 }
                })
                .collect();
            fd_check(x, &[5, 2], |g, xv| {
                let c = g.clamp(xv, -1.0, 1.0);
                let k = g.mul_scalar(xv, 0.5);
                let m = g.min(c, k);
                g.mean(m)
            });
        }
    }

    #[test]
    fn shape_plumbing_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..5 {
            let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fd_check(x, &[6, 4], |g, xv| {
                let top = g.slice_rows(xv, 0, 3);
                let sel = g.select_rows(xv, &[5, 1, 1]);
                let cat = g.concat_cols(top, sel); // [3, 8]
                let st = g.scatter_rows(cat, &[2, 0, 3], 5); // [5, 8]
                let rows = g.concat_rows(&[st, st]); // [10, 8]
                let masked = g.scale_rows(rows, &[1.0, 0.5, 0.0, 1.0, 2.0, 1.0, 0.5, 0.0, 1.0, 2.0]);
                g.mean(masked)
            });
        }
    }

    #[test]
    fn categorical_head_ops_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..10 {
            let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
            fd_check(x, &[3, 5], |g, xv| {
                let lp = g.log_softmax(xv);
                let picked = g.gather_col(lp, &[4, 0, 2]);
                let ent = g.row_entropy(lp);
                let both = g.concat_cols(picked, ent);
                g.mean(both)
            });
        }
    }

    #[test]
    fn embed_sum_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..5 {
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Table of 6 rows x 2 cols; 2 output rows x 2 groups x 3 summed ids.
            let ids: Vec<usize> = (0..12).map(|_| rng.gen_range(0..6)).collect();
            let ids2 = ids.clone();
            fd_check(x, &[6, 2], move |g, table| {
                let out = g.embed_sum(table, &ids2, 2, 2);
                let sq = g.mul(out, out);
                g.mean(sq)
            });
        }
    }

    #[test]
    fn fan_out_accumulates_gradient() {
        let mut g = graph();
        let x = g.param(Tensor::scalar(2.0));
        let a = g.mul(x, x); // x²
        let b = g.add(a, x); // x² + x
        let c = g.add(b, a); // 2x² + x → dy/dx = 4x + 1 = 9
        g.backward(c);
        assert_eq!(g.grad(x), &[9.0]);
    }

    #[test]
    fn gru_shaped_composite_matches_finite_differences() {
        // A miniature gated-recurrence step exercises nearly every op jointly.
        let mut rng = StdRng::seed_from_u64(29);
        let consts: Vec<f64> = (0..35).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for _ in 0..5 {
            let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let consts = consts.clone();
            fd_check(x, &[3, 5], move |g, xv| {
                let w = g.constant(Tensor::new(&[5, 5], consts[..25].to_vec()));
                let b = g.constant(Tensor::new(&[1, 5], consts[25..30].to_vec()));
                let h0 = g.constant(Tensor::new(&[3, 5], vec![0.1; 15]));
                let zx = g.matmul_nt(xv, w);
                let zx = g.add_row(zx, b);
                let z = g.sigmoid(zx);
                let n = g.tanh(xv);
                let one_minus_z = g.mul_scalar(z, -1.0);
                let one_minus_z = g.add_scalar(one_minus_z, 1.0);
                let a1 = g.mul(one_minus_z, n);
                let a2 = g.mul(z, h0);
                let h = g.add(a1, a2);
                g.mean(h)
            });
        }
    }

    #[test]
    fn reshape_preserves_order_and_passes_gradients_through() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = g.reshape(x, &[3, 2]);
        assert_eq!(g.value(r).shape(), &[3, 2]);
        assert_eq!(g.value(r).data(), g.value(x).data());
        let w = g.constant(Tensor::new(&[1, 2], vec![1.0, 10.0]));
        let y = g.matmul_nt(r, w);
        let m = g.sum(y);
        g.backward(m);
        // Column j of the reshaped view weights 1 or 10; mapping back to the
        // original layout alternates along the flattened order.
        assert_eq!(g.grad(x), &[1.0, 10.0, 1.0, 10.0, 1.0, 10.0]);
        let mut rng = StdRng::seed_from_u64(31);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        fd_check(x, &[3, 4], |g, xv| {
            let r = g.reshape(xv, &[2, 6]);
            let t = g.tanh(r);
            g.mean(t)
        });
    }

    #[test]
    #[should_panic(expected = "reshape: cannot view")]
    fn reshape_rejects_element_count_changes() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(Tensor::new(&[2, 3], vec![0.0; 6]));
        g.reshape(x, &[4, 2]);
    }
}
