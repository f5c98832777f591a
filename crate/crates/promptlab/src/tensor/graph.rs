//! The autodiff tape.
//!
//! Ops append nodes and return [`Var`] handles; the node index order is a
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! Shape mismatches are programming errors and panic with the primitive
//! name and both shapes. Repeated `backward` calls accumulate into the
//! gradients of trainable leaves.

use super::kernels;
use super::Scalar;

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that
/// created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: T },
    Embedding { table: Var, ids: Vec<u32> },
    ReplaceRows { x: Var, rows: Vec<usize>, repl: Var },
    GatherRows { x: Var, rows: Vec<usize> },
    SelectCols { x: Var, cols: Vec<usize> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MeanAll(Var),
    SumAll(Var),
    CrossEntropyRows { logits: Var, targets: Vec<usize> },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    op: Op<T>,
    trainable: bool,
    grad: Option<Vec<T>>,
}

/// Reverse-mode autodiff tape over dense row-major 2-D tensors.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<T>, op: Op<T>, trainable: bool) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node { rows, cols, data, op, trainable, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// New leaf tensor. `trainable` marks it for gradient collection.
    pub fn tensor(&mut self, data: Vec<T>, rows: usize, cols: usize, trainable: bool) -> Var {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor: {} values do not fill shape {}x{}",
            data.len(),
            rows,
            cols
        );
        self.push(rows, cols, data, Op::Leaf, trainable)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, data: Vec<T>, rows: usize, cols: usize) -> Var {
        self.tensor(data, rows, cols, false)
    }

    /// Non-trainable `[1,1]` leaf.
    pub fn scalar(&mut self, v: T) -> Var {
        self.push(1, 1, vec![v], Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    /// Scalar value of a `[1,1]` node.
    pub fn value(&self, v: Var) -> T {
        let n = &self.nodes[v.0];
        assert_eq!((n.rows, n.cols), (1, 1), "value: node is {}x{}, not scalar", n.rows, n.cols);
        n.data[0]
    }

    /// Gradient of a trainable leaf, populated by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn same_shape(&self, name: &str, a: Var, b: Var) {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert!(
            (ar, ac) == (br, bc),
            "{name}: shape mismatch (lhs {ar}x{ac}, rhs {br}x{bc})"
        );
    }

    // ── Elementwise and affine ──────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("add", a, b);
        let (r, c) = self.shape(a);
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(r, c, data, Op::Add(a, b), false)
    }

    /// `[m,n] + [1,n]`, the bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (r, c) = self.shape(x);
        let (br, bc) = self.shape(bias);
        assert!(
            br == 1 && bc == c,
            "add_bias: shape mismatch (lhs {r}x{c}, bias {br}x{bc})"
        );
        let b = &self.nodes[bias.0].data;
        let mut data = Vec::with_capacity(r * c);
        for row in self.nodes[x.0].data.chunks(c) {
            data.extend(row.iter().zip(b.iter()).map(|(&x, &y)| x + y));
        }
        self.push(r, c, data, Op::AddBias(x, bias), false)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("mul", a, b);
        let (r, c) = self.shape(a);
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(r, c, data, Op::Mul(a, b), false)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let (r, c) = self.shape(x);
        let data: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v * factor).collect();
        self.push(r, c, data, Op::Scale(x, factor), false)
    }

    // ── Matrix ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        assert!(
            ka == kb,
            "matmul: shape mismatch (lhs {m}x{ka}, rhs {kb}x{n})"
        );
        let mut data = vec![T::zero(); m * n];
        kernels::matmul_nn(&self.nodes[a.0].data, &self.nodes[b.0].data, m, ka, n, &mut data);
        self.push(m, n, data, Op::MatMul(a, b), false)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let src = &self.nodes[x.0].data;
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(c, r, data, Op::Transpose(x), false)
    }

    // ── Activations ─────────────────────────────────────────────────

    pub fn tanh(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let data: Vec<T> = self.nodes[x.0].data.iter().map(|v| v.tanh()).collect();
        self.push(r, c, data, Op::Tanh(x), false)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let one = T::one();
        let data: Vec<T> = self.nodes[x.0]
            .data
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        self.push(r, c, data, Op::Sigmoid(x), false)
    }

    /// GELU, tanh approximation: `0.5 x (1 + tanh(√(2/π)(x + 0.044715 x³)))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let half = T::from_f64c(0.5);
        let c0 = T::from_f64c(0.7978845608028654); // sqrt(2/pi)
        let c1 = T::from_f64c(0.044715);
        let one = T::one();
        let data: Vec<T> = self.nodes[x.0]
            .data
            .iter()
            .map(|&v| half * v * (one + (c0 * (v + c1 * v * v * v)).tanh()))
            .collect();
        self.push(r, c, data, Op::Gelu(x), false)
    }

    /// Softmax along the last axis (each row sums to one).
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        assert!(c > 0, "softmax_rows: empty rows ({r}x{c})");
        let mut data = Vec::with_capacity(r * c);
        for row in self.nodes[x.0].data.chunks(c) {
            softmax_into(row, &mut data);
        }
        self.push(r, c, data, Op::SoftmaxRows(x), false)
    }

    /// Per-row layer normalization with affine parameters `gamma`, `beta`
    /// of shape `[1,d]`. `eps` is added to the variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let (r, c) = self.shape(x);
        let (gr, gc) = self.shape(gamma);
        let (br, bc) = self.shape(beta);
        assert!(
            gr == 1 && gc == c && br == 1 && bc == c,
            "layer_norm: shape mismatch (x {r}x{c}, gamma {gr}x{gc}, beta {br}x{bc})"
        );
        let g = &self.nodes[gamma.0].data;
        let b = &self.nodes[beta.0].data;
        let mut data = Vec::with_capacity(r * c);
        for row in self.nodes[x.0].data.chunks(c) {
            let (mean, inv_std) = row_moments(row, eps);
            for j in 0..c {
                data.push((row[j] - mean) * inv_std * g[j] + b[j]);
            }
        }
        self.push(r, c, data, Op::LayerNorm { x, gamma, beta, eps }, false)
    }

    // ── Gather / scatter / structure ────────────────────────────────

    /// Row lookup: output row `i` is `table[ids[i], :]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Var {
        let (v, d) = self.shape(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            assert!(id < v, "embedding: id {id} out of range for table {v}x{d}");
            data.extend_from_slice(&self.nodes[table.0].data[id * d..(id + 1) * d]);
        }
        self.push(ids.len(), d, data, Op::Embedding { table, ids: ids.to_vec() }, false)
    }

    /// Copy of `x` with row `rows[j]` replaced by row `j` of `repl`.
    /// Positions must be distinct and in range.
    pub fn replace_rows(&mut self, x: Var, rows: &[usize], repl: Var) -> Var {
        let (r, c) = self.shape(x);
        let (rr, rc) = self.shape(repl);
        assert!(
            rr == rows.len() && rc == c,
            "replace_rows: shape mismatch (x {r}x{c}, {} positions, repl {rr}x{rc})",
            rows.len()
        );
        let mut seen = vec![false; r];
        for &i in rows {
            assert!(i < r, "replace_rows: position {i} out of range for {r}x{c}");
            assert!(!seen[i], "replace_rows: duplicate position {i}");
            seen[i] = true;
        }
        let mut data = self.nodes[x.0].data.clone();
        for (j, &i) in rows.iter().enumerate() {
            data[i * c..(i + 1) * c].copy_from_slice(&self.nodes[repl.0].data[j * c..(j + 1) * c]);
        }
        self.push(r, c, data, Op::ReplaceRows { x, rows: rows.to_vec(), repl }, false)
    }

    /// Output row `j` is `x[rows[j], :]`; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let (r, c) = self.shape(x);
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            assert!(i < r, "gather_rows: row {i} out of range for {r}x{c}");
            data.extend_from_slice(&self.nodes[x.0].data[i * c..(i + 1) * c]);
        }
        self.push(rows.len(), c, data, Op::GatherRows { x, rows: rows.to_vec() }, false)
    }

    /// Output column `j` is `x[:, cols[j]]`; indices may repeat.
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Var {
        let (r, c) = self.shape(x);
        for &j in cols {
            assert!(j < c, "select_cols: column {j} out of range for {r}x{c}");
        }
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            for &j in cols {
                data.push(src[i * c + j]);
            }
        }
        self.push(r, cols.len(), data, Op::SelectCols { x, cols: cols.to_vec() }, false)
    }

    /// Contiguous column slice `[start, end)`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let cols: Vec<usize> = (start..end).collect();
        self.select_cols(x, &cols)
    }

    /// Vertical stack; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no parts");
        let (_, c) = self.shape(parts[0]);
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pr, pc) = self.shape(p);
            assert!(pc == c, "concat_rows: shape mismatch (expected cols {c}, part is {pr}x{pc})");
            rows += pr;
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        self.push(rows, c, data, Op::ConcatRows(parts.to_vec()), false)
    }

    /// Horizontal stack; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let (r, _) = self.shape(parts[0]);
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pr, pc) = self.shape(p);
                assert!(pr == r, "concat_cols: shape mismatch (expected rows {r}, part is {pr}x{pc})");
                pc
            })
            .collect();
        let cols: usize = widths.iter().sum();
        let mut data = vec![T::zero(); r * cols];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = &self.nodes[p.0].data;
            for i in 0..r {
                data[i * cols + offset..i * cols + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        self.push(r, cols, data, Op::ConcatCols(parts.to_vec()), false)
    }

    // ── Reductions and losses ───────────────────────────────────────

    pub fn mean_all(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let n = T::from_f64c((r * c) as f64);
        let s: T = self.nodes[x.0].data.iter().copied().sum();
        self.push(1, 1, vec![s / n], Op::MeanAll(x), false)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: T = self.nodes[x.0].data.iter().copied().sum();
        self.push(1, 1, vec![s], Op::SumAll(x), false)
    }

    /// Mean negative log-softmax of the target column per row, computed
    /// with a stable log-sum-exp.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (r, c) = self.shape(logits);
        assert!(
            targets.len() == r,
            "cross_entropy_rows: {} targets for logits {r}x{c}",
            targets.len()
        );
        let mut total = T::zero();
        for (row, &t) in self.nodes[logits.0].data.chunks(c).zip(targets) {
            assert!(t < c, "cross_entropy_rows: target {t} out of range for {r}x{c}");
            total += log_sum_exp(row) - row[t];
        }
        let loss = total / T::from_f64c(r as f64);
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropyRows { logits, targets: targets.to_vec() },
            false,
        )
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Gradients of trainable leaves
    /// accumulate across calls; intermediate adjoints are discarded.
    pub fn backward(&mut self, loss: Var) {
        let (r, c) = self.shape(loss);
        assert!(
            (r, c) == (1, 1),
            "backward: loss must be scalar, got {r}x{c}"
        );
        let n = self.nodes.len();
        // Every trainable leaf ends the sweep with a grad, reached or not.
        for node in &mut self.nodes {
            if node.trainable && matches!(node.op, Op::Leaf) && node.grad.is_none() {
                node.grad = Some(vec![T::zero(); node.data.len()]);
            }
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; n];
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            // Finalize trainable leaves.
            if matches!(self.nodes[i].op, Op::Leaf) {
                if self.nodes[i].trainable {
                    let len = self.nodes[i].data.len();
                    let grad = self.nodes[i].grad.get_or_insert_with(|| vec![T::zero(); len]);
                    for (a, b) in grad.iter_mut().zip(&g) {
                        *a += *b;
                    }
                }
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc(&mut adj, a, self.nodes[a.0].data.len(), |d| {
                        for (x, y) in d.iter_mut().zip(&g) {
                            *x += *y;
                        }
                    });
                    acc(&mut adj, b, self.nodes[b.0].data.len(), |d| {
                        for (x, y) in d.iter_mut().zip(&g) {
                            *x += *y;
                        }
                    });
                }
                Op::AddBias(x, bias) => {
                    let c = self.nodes[x.0].cols;
                    acc(&mut adj, x, self.nodes[x.0].data.len(), |d| {
                        for (a, b) in d.iter_mut().zip(&g) {
                            *a += *b;
                        }
                    });
                    acc(&mut adj, bias, c, |d| {
                        for row in g.chunks(c) {
                            for (a, b) in d.iter_mut().zip(row) {
                                *a += *b;
                            }
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
                    let da: Vec<T> = g.iter().zip(bv).map(|(&x, &y)| x * y).collect();
                    let db: Vec<T> = g.iter().zip(av).map(|(&x, &y)| x * y).collect();
                    acc_vec(&mut adj, a, da);
                    acc_vec(&mut adj, b, db);
                }
                Op::Scale(x, f) => {
                    let dx: Vec<T> = g.iter().map(|&v| v * f).collect();
                    acc_vec(&mut adj, x, dx);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let nn = self.nodes[b.0].cols;
                    // dA += G @ B^T, dB += A^T @ G
                    let mut da = vec![T::zero(); m * k];
                    kernels::matmul_nt(&g, &self.nodes[b.0].data, m, nn, k, &mut da);
                    let mut db = vec![T::zero(); k * nn];
                    kernels::matmul_tn(&self.nodes[a.0].data, &g, m, k, nn, &mut db);
                    acc_vec(&mut adj, a, da);
                    acc_vec(&mut adj, b, db);
                }
                Op::Transpose(x) => {
                    let (r, c) = (self.nodes[x.0].rows, self.nodes[x.0].cols);
                    let mut dx = vec![T::zero(); r * c];
                    for i in 0..c {
                        for j in 0..r {
                            dx[j * c + i] = g[i * r + j];
                        }
                    }
                    acc_vec(&mut adj, x, dx);
                }
                Op::Tanh(x) => {
                    let out = &self.nodes[i].data;
                    let dx: Vec<T> = g
                        .iter()
                        .zip(out)
                        .map(|(&gv, &t)| gv * (T::one() - t * t))
                        .collect();
                    acc_vec(&mut adj, x, dx);
                }
                Op::Sigmoid(x) => {
                    let out = &self.nodes[i].data;
                    let dx: Vec<T> = g
                        .iter()
                        .zip(out)
                        .map(|(&gv, &s)| gv * s * (T::one() - s))
                        .collect();
                    acc_vec(&mut adj, x, dx);
                }
                Op::Gelu(x) => {
                    let half = T::from_f64c(0.5);
                    let c0 = T::from_f64c(0.7978845608028654);
                    let c1 = T::from_f64c(0.044715);
                    let three_c1 = T::from_f64c(3.0 * 0.044715);
                    let one = T::one();
                    let dx: Vec<T> = g
                        .iter()
                        .zip(&self.nodes[x.0].data)
                        .map(|(&gv, &v)| {
                            let inner = c0 * (v + c1 * v * v * v);
                            let t = inner.tanh();
                            let sech2 = one - t * t;
                            let d_inner = c0 * (one + three_c1 * v * v);
                            gv * (half * (one + t) + half * v * sech2 * d_inner)
                        })
                        .collect();
                    acc_vec(&mut adj, x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let c = self.nodes[i].cols;
                    let out = &self.nodes[i].data;
                    let mut dx = vec![T::zero(); out.len()];
                    for ((o_row, g_row), d_row) in
                        out.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c))
                    {
                        let dot: T = o_row.iter().zip(g_row).map(|(&s, &gv)| s * gv).sum();
                        for j in 0..c {
                            d_row[j] = o_row[j] * (g_row[j] - dot);
                        }
                    }
                    acc_vec(&mut adj, x, dx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let c = self.nodes[x.0].cols;
                    let xs = &self.nodes[x.0].data;
                    let gs = &self.nodes[gamma.0].data;
                    let d_t = T::from_f64c(c as f64);
                    let mut dx = vec![T::zero(); xs.len()];
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (row_idx, (x_row, g_row)) in xs.chunks(c).zip(g.chunks(c)).enumerate() {
                        let (mean, inv_std) = row_moments(x_row, eps);
                        let mut dxhat = vec![T::zero(); c];
                        let mut sum_dxhat = T::zero();
                        let mut sum_dxhat_xhat = T::zero();
                        for j in 0..c {
                            let xhat = (x_row[j] - mean) * inv_std;
                            dgamma[j] += g_row[j] * xhat;
                            dbeta[j] += g_row[j];
                            let dh = g_row[j] * gs[j];
                            dxhat[j] = dh;
                            sum_dxhat += dh;
                            sum_dxhat_xhat += dh * xhat;
                        }
                        let base = row_idx * c;
                        for j in 0..c {
                            let xhat = (x_row[j] - mean) * inv_std;
                            dx[base + j] = inv_std / d_t
                                * (d_t * dxhat[j] - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                    acc_vec(&mut adj, x, dx);
                    acc_vec(&mut adj, gamma, dgamma);
                    acc_vec(&mut adj, beta, dbeta);
                }
                Op::Embedding { table, ids } => {
                    let d = self.nodes[table.0].cols;
                    acc(&mut adj, table, self.nodes[table.0].data.len(), |dt| {
                        for (j, &id) in ids.iter().enumerate() {
                            let dst = &mut dt[id as usize * d..(id as usize + 1) * d];
                            for (a, b) in dst.iter_mut().zip(&g[j * d..(j + 1) * d]) {
                                *a += *b;
                            }
                        }
                    });
                }
                Op::ReplaceRows { x, rows, repl } => {
                    let c = self.nodes[x.0].cols;
                    let mut dx = g.clone();
                    let mut drepl = vec![T::zero(); rows.len() * c];
                    for (j, &i_row) in rows.iter().enumerate() {
                        drepl[j * c..(j + 1) * c].copy_from_slice(&g[i_row * c..(i_row + 1) * c]);
                        dx[i_row * c..(i_row + 1) * c].fill(T::zero());
                    }
                    acc_vec(&mut adj, x, dx);
                    acc_vec(&mut adj, repl, drepl);
                }
                Op::GatherRows { x, rows } => {
                    let c = self.nodes[x.0].cols;
                    acc(&mut adj, x, self.nodes[x.0].data.len(), |dx| {
                        for (j, &i_row) in rows.iter().enumerate() {
                            let dst = &mut dx[i_row * c..(i_row + 1) * c];
                            for (a, b) in dst.iter_mut().zip(&g[j * c..(j + 1) * c]) {
                                *a += *b;
                            }
                        }
                    });
                }
                Op::SelectCols { x, cols } => {
                    let (r, c) = (self.nodes[x.0].rows, self.nodes[x.0].cols);
                    let w = cols.len();
                    acc(&mut adj, x, r * c, |dx| {
                        for i in 0..r {
                            for (j, &col) in cols.iter().enumerate() {
                                dx[i * c + col] += g[i * w + j];
                            }
                        }
                    });
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in &parts {
                        let len = self.nodes[p.0].data.len();
                        let dp = g[offset..offset + len].to_vec();
                        acc_vec(&mut adj, p, dp);
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let r = self.nodes[i].rows;
                    let total = self.nodes[i].cols;
                    let mut offset = 0;
                    for &p in &parts {
                        let w = self.nodes[p.0].cols;
                        let mut dp = vec![T::zero(); r * w];
                        for row in 0..r {
                            dp[row * w..(row + 1) * w]
                                .copy_from_slice(&g[row * total + offset..row * total + offset + w]);
                        }
                        acc_vec(&mut adj, p, dp);
                        offset += w;
                    }
                }
                Op::MeanAll(x) => {
                    let len = self.nodes[x.0].data.len();
                    let gv = g[0] / T::from_f64c(len as f64);
                    acc(&mut adj, x, len, |dx| {
                        for v in dx.iter_mut() {
                            *v += gv;
                        }
                    });
                }
                Op::SumAll(x) => {
                    let len = self.nodes[x.0].data.len();
                    let gv = g[0];
                    acc(&mut adj, x, len, |dx| {
                        for v in dx.iter_mut() {
                            *v += gv;
                        }
                    });
                }
                Op::CrossEntropyRows { logits, targets } => {
                    let (r, c) = (self.nodes[logits.0].rows, self.nodes[logits.0].cols);
                    let inv_r = T::one() / T::from_f64c(r as f64);
                    let gv = g[0];
                    let src = &self.nodes[logits.0].data;
                    let mut dl = vec![T::zero(); r * c];
                    for (row_idx, (row, &t)) in src.chunks(c).zip(&targets).enumerate() {
                        let mut probs = Vec::with_capacity(c);
                        softmax_into(row, &mut probs);
                        for j in 0..c {
                            let indicator = if j == t { T::one() } else { T::zero() };
                            dl[row_idx * c + j] = gv * (probs[j] - indicator) * inv_r;
                        }
                    }
                    acc_vec(&mut adj, logits, dl);
                }
            }
        }
    }
}

fn acc<T: Scalar>(
    adj: &mut [Option<Vec<T>>],
    v: Var,
    len: usize,
    write: impl FnOnce(&mut Vec<T>),
) {
    let slot = adj[v.0].get_or_insert_with(|| vec![T::zero(); len]);
    write(slot);
}

fn acc_vec<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
    match &mut adj[v.0] {
        Some(slot) => {
            for (a, b) in slot.iter_mut().zip(&contribution) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn row_moments<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = T::from_f64c(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    (mean, T::one() / (var + eps).sqrt())
}

fn softmax_into<T: Scalar>(row: &[T], out: &mut Vec<T>) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let start = out.len();
    let mut sum = T::zero();
    for &v in row {
        let e = (v - max).exp();
        out.push(e);
        sum += e;
    }
    for v in &mut out[start..] {
        *v /= sum;
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(vec![0.0, 0.0, 0.0], 1, 3);
        let s = g.softmax_rows(x);
        assert_close(g.data(s), &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(vec![1.0, -2.0, 0.5, 4.0, 4.0, -9.0], 2, 3);
        let s = g.softmax_rows(x);
        for row in g.data(s).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero_before_affine() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(vec![5.0; 4], 1, 4);
        let gamma = g.constant(vec![1.0; 4], 1, 4);
        let beta = g.constant(vec![0.0; 4], 1, 4);
        let y = g.layer_norm(x, gamma, beta, 1e-5);
        assert_close(g.data(y), &[0.0; 4], 1e-12);
    }

    #[test]
    fn matmul_identity() {
        let mut g: Graph<f64> = Graph::new();
        let eye = g.constant(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3);
        let a = g.constant(vec![0.3, -1.2, 9.0, 4.4, 0.0, 2.5, -7.1, 3.3, 1.0], 3, 3);
        let out = g.matmul(eye, a);
        assert_eq!(g.data(out), g.data(a));
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.tensor(vec![1.0, 2.0, 3.0], 1, 3, true);
        let sq = g.mul(x, x);
        let loss = g.sum_all(sq);
        g.backward(loss);
        assert_close(g.grad(x).unwrap(), &[2.0, 4.0, 6.0], 1e-12);
    }

    #[test]
    fn detached_parameter_gets_zero_grad() {
        let mut g: Graph<f64> = Graph::new();
        let p = g.tensor(vec![4.0, 5.0], 1, 2, true);
        let x = g.tensor(vec![1.0, 2.0], 1, 2, true);
        let loss = g.sum_all(x);
        g.backward(loss);
        assert_close(g.grad(p).unwrap(), &[0.0, 0.0], 0.0);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.tensor(vec![3.0], 1, 1, true);
        let loss = g.scale(x, 2.0);
        g.backward(loss);
        g.backward(loss);
        assert_close(g.grad(x).unwrap(), &[4.0], 1e-12);
    }

    #[test]
    #[should_panic(expected = "matmul: shape mismatch")]
    fn matmul_shape_mismatch_names_primitive() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.constant(vec![0.0; 6], 2, 3);
        let b = g.constant(vec![0.0; 8], 4, 2);
        g.matmul(a, b);
    }

    #[test]
    #[should_panic(expected = "backward: loss must be scalar")]
    fn backward_rejects_non_scalar() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.tensor(vec![0.0; 4], 2, 2, true);
        g.backward(a);
    }

    #[test]
    fn replace_rows_overrides_exactly() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2);
        let r = g.constant(vec![9.0, 8.0], 1, 2);
        let y = g.replace_rows(x, &[1], r);
        assert_eq!(g.data(y), &[1.0, 2.0, 9.0, 8.0, 5.0, 6.0]);
    }

    #[test]
    fn cross_entropy_matches_manual() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.constant(vec![2.0, 1.0, 0.1, 0.1, 2.0, 1.0], 2, 3);
        let loss = g.cross_entropy_rows(logits, &[0, 1]);
        let lse0 = (2.0f64.exp() + 1.0f64.exp() + 0.1f64.exp()).ln();
        let lse1 = (0.1f64.exp() + 2.0f64.exp() + 1.0f64.exp()).ln();
        let want = ((lse0 - 2.0) + (lse1 - 2.0)) / 2.0;
        assert!((g.value(loss) - want).abs() < 1e-12);
    }
}
