//! Neural-network layers used by the built-in models: embeddings, linear
//! maps, a GRU cell, and the categorical policy head.
//!
//! Layers are thin wrappers over parameter [`Var`]s registered in a
//! [`Graph`]; they own no data themselves. Construct every layer before
//! recording any computation (parameters form the protected tape prefix).
//!
//! Initialization is seeded and draws in `f64` regardless of the scalar
//! type: linear and GRU weights are uniform in `±1/√fan_in`, embedding
//! tables are normal with standard deviation `1/√dim`, and biases start at
//! zero.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Uniform `±1/√fan_in` weight tensor, drawn row-major in `f64`.
pub fn uniform_init<F: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<F> {
    assert!(fan_in > 0, "uniform_init: fan_in must be positive");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| F::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data)
}

/// Normal `(0, 1/dim)` embedding tensor (standard deviation `1/√dim`),
/// drawn row-major in `f64` via the Box–Muller transform (two uniform draws
/// per element, so the stream is identical across precisions).
pub fn normal_init<F: Scalar, R: Rng>(rng: &mut R, shape: &[usize], dim: usize) -> Tensor<F> {
    assert!(dim > 0, "normal_init: dim must be positive");
    let scale = 1.0 / (dim as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            F::from_f64(z * scale)
        })
        .collect();
    Tensor::new(shape, data)
}

/// Lookup table mapping integer symbols to learned vectors.
#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: Var,
    vocab: usize,
    dim: usize,
}

impl Embedding {
    pub fn new<F: Scalar, R: Rng>(g: &mut Graph<F>, vocab: usize, dim: usize, rng: &mut R) -> Self {
        let table = g.param(normal_init(rng, &[vocab, dim], dim));
        Embedding { table, vocab, dim }
    }

    /// One output row per index: `[len, dim]`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, indices: &[usize]) -> Var {
        g.embed(self.table, indices)
    }

    /// Fused lookup-and-sum: `rows × groups` blocks, each the sum of the
    /// embeddings of its group of ids (see [`Graph::embed_sum`]).
    pub fn forward_grouped<F: Scalar>(
        &self,
        g: &mut Graph<F>,
        ids: &[usize],
        rows: usize,
        groups: usize,
    ) -> Var {
        g.embed_sum(self.table, ids, rows, groups)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Affine map `x · Wᵀ + b` with `W: [out, in]`, `b: [1, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: Var,
    pub b: Var,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new<F: Scalar, R: Rng>(
        g: &mut Graph<F>,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = g.param(uniform_init(rng, &[out_dim, in_dim], in_dim));
        let b = g.param(Tensor::zeros(&[1, out_dim]));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var) -> Var {
        let (_, c) = g.value(x).dims2("linear");
        assert_eq!(
            c, self.in_dim,
            "linear: input shape {:?} does not match weight shape {:?}",
            g.value(x).shape(),
            g.value(self.w).shape()
        );
        let h = g.matmul_nt(x, self.w);
        g.add_row(h, self.b)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
}

/// Gated recurrent unit cell.
///
/// Gating convention (documented because conventions differ between
/// libraries):
///
/// ```text
/// z  = σ(Wz·x + Uz·h + bz)          update gate
/// r  = σ(Wr·x + Ur·h + br)          reset gate
/// n  = tanh(Wn·x + r ⊙ (Un·h) + bn) candidate
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
///
/// With all-zero weights and biases this yields `h' = 0.5·h`. The zero
/// vector is the defined initial state.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wn: Var,
    pub un: Var,
    pub bn: Var,
    input_dim: usize,
    hidden_dim: usize,
}

impl GruCell {
    pub fn new<F: Scalar, R: Rng>(
        g: &mut Graph<F>,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        // Fan-in of the concatenated [x; h] view, so initialization matches
        // the single-matrix formulation of the same cell.
        let fan_in = input_dim + hidden_dim;
        let weight = |g: &mut Graph<F>, rng: &mut R, cols: usize| {
            g.param(uniform_init(rng, &[hidden_dim, cols], fan_in))
        };
        let wz = weight(g, rng, input_dim);
        let uz = weight(g, rng, hidden_dim);
        let bz = g.param(Tensor::zeros(&[1, hidden_dim]));
        let wr = weight(g, rng, input_dim);
        let ur = weight(g, rng, hidden_dim);
        let br = g.param(Tensor::zeros(&[1, hidden_dim]));
        let wn = weight(g, rng, input_dim);
        let un = weight(g, rng, hidden_dim);
        let bn = g.param(Tensor::zeros(&[1, hidden_dim]));
        GruCell { wz, uz, bz, wr, ur, br, wn, un, bn, input_dim, hidden_dim }
    }

    /// One recurrence step: `x: [B, I]`, `h: [B, H]` → `[B, H]`.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, x: Var, h: Var) -> Var {
        let (bx, i) = g.value(x).dims2("gru_cell");
        let (bh, hh) = g.value(h).dims2("gru_cell");
        assert_eq!(
            bx, bh,
            "gru_cell: batch mismatch between input {:?} and state {:?}",
            g.value(x).shape(),
            g.value(h).shape()
        );
        assert_eq!(i, self.input_dim, "gru_cell: input width {i} does not match cell input dim {}", self.input_dim);
        assert_eq!(hh, self.hidden_dim, "gru_cell: state width {hh} does not match cell hidden dim {}", self.hidden_dim);

        let zx = g.matmul_nt(x, self.wz);
        let zh = g.matmul_nt(h, self.uz);
        let zs = g.add(zx, zh);
        let zs = g.add_row(zs, self.bz);
        let z = g.sigmoid(zs);

        let rx = g.matmul_nt(x, self.wr);
        let rh = g.matmul_nt(h, self.ur);
        let rs = g.add(rx, rh);
        let rs = g.add_row(rs, self.br);
        let r = g.sigmoid(rs);

        let nx = g.matmul_nt(x, self.wn);
        let nh = g.matmul_nt(h, self.un);
        let rn = g.mul(r, nh);
        let ns = g.add(nx, rn);
        let ns = g.add_row(ns, self.bn);
        let n = g.tanh(ns);

        let zn = g.mul(z, h);
        let neg_z = g.mul_scalar(z, -F::one());
        let one_minus_z = g.add_scalar(neg_z, F::one());
        let gated = g.mul(one_minus_z, n);
        g.add(gated, zn)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
}

/// Categorical distribution over discrete actions, one per row.
///
/// Holds normalized log-probabilities on the graph, so `log_prob` and
/// `entropy` are differentiable; `sample` is inverse-CDF over the softmax
/// probabilities using the supplied generator (probabilities are
/// accumulated in `f64` so the sampled stream is precision-independent).
#[derive(Debug, Clone)]
pub struct Categorical {
    log_probs: Var,
    rows: usize,
    actions: usize,
}

impl Categorical {
    /// Normalize logits `[rows, A]` into a distribution.
    ///
    /// Fails if any logit is non-finite — that is a training blow-up the
    /// caller should surface, not a programming error.
    pub fn from_logits<F: Scalar>(g: &mut Graph<F>, logits: Var) -> Result<Self> {
        let (rows, actions) = g.value(logits).dims2("categorical");
        if let Some(bad) = g.value(logits).data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "categorical: non-finite logit {bad} in a [{rows}, {actions}] head"
            )));
        }
        let log_probs = g.log_softmax(logits);
        Ok(Categorical { log_probs, rows, actions })
    }

    /// Draw one action per row by inverting the CDF at a uniform sample.
    pub fn sample<F: Scalar, R: Rng>(&self, g: &Graph<F>, rng: &mut R) -> Vec<usize> {
        let lp = g.value(self.log_probs).data();
        let mut out = Vec::with_capacity(self.rows);
        for row in lp.chunks(self.actions) {
            let u: f64 = rng.gen();
            let mut cum = 0.0f64;
            let mut pick = self.actions - 1;
            for (a, &l) in row.iter().enumerate() {
                cum += l.to_f64().exp();
                if u < cum {
                    pick = a;
                    break;
                }
            }
            out.push(pick);
        }
        out
    }

    /// Most probable action per row (used by greedy evaluation).
    pub fn argmax<F: Scalar>(&self, g: &Graph<F>) -> Vec<usize> {
        let lp = g.value(self.log_probs).data();
        lp.chunks(self.actions)
            .map(|row| {
                let mut best = 0;
                for (a, &l) in row.iter().enumerate() {
                    if l > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    /// Log-probability of the given action per row: `[rows, 1]`.
    pub fn log_prob<F: Scalar>(&self, g: &mut Graph<F>, actions: &[usize]) -> Var {
        assert_eq!(
            actions.len(),
            self.rows,
            "categorical: {} actions for {} rows",
            actions.len(),
            self.rows
        );
        g.gather_col(self.log_probs, actions)
    }

    /// Entropy per row: `[rows, 1]`, each in `[0, ln A]`.
    pub fn entropy<F: Scalar>(&self, g: &mut Graph<F>) -> Var {
        g.row_entropy(self.log_probs)
    }

    /// The normalized log-probability tensor `[rows, A]`.
    pub fn log_probs(&self) -> Var {
        self.log_probs
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn actions(&self) -> usize {
        self.actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{max_relative_error, numeric_gradient};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_gru_halves_the_state() {
        let mut g: Graph<f64> = Graph::new();
        let mut rng = StdRng::seed_from_u64(0);
        let cell = GruCell::new(&mut g, 3, 4, &mut rng);
        // Overwrite every parameter with zeros.
        for v in g.param_vars() {
            for x in g.param_data_mut(v) {
                *x = 0.0;
            }
        }
        let x = g.constant(Tensor::new(&[2, 3], vec![0.3; 6]));
        let h = g.constant(Tensor::new(&[2, 4], vec![1.0, -2.0, 0.5, 4.0, 0.0, 1.0, 2.0, -1.0]));
        let h2 = cell.forward(&mut g, x, h);
        let expect: Vec<f64> = g.value(h).data().iter().map(|v| 0.5 * v).collect();
        for (a, e) in g.value(h2).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12, "zero-weight GRU must halve the state, got {a} want {e}");
        }
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let mut g: Graph<f64> = Graph::new();
        let mut rng = StdRng::seed_from_u64(1);
        let cell = GruCell::new(&mut g, 3, 4, &mut rng);
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let h = g.constant(Tensor::zeros(&[2, 4]));
        let h2 = cell.forward(&mut g, x, h);
        assert!(g.value(h2).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gru_two_chained_steps_match_finite_differences() {
        // Differentiate a two-step recurrence with respect to the inputs.
        let mut rng = StdRng::seed_from_u64(2);
        let build_params = |g: &mut Graph<f64>| {
            let mut rng = StdRng::seed_from_u64(3);
            GruCell::new(g, 2, 3, &mut rng)
        };
        for _ in 0..5 {
            use rand::Rng as _;
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let mut g: Graph<f64> = Graph::new();
            let cell = build_params(&mut g);
            let xv = g.constant(Tensor::new(&[4, 2], x.clone()));
            let x1 = g.slice_rows(xv, 0, 2);
            let x2 = g.slice_rows(xv, 2, 2);
            let h0 = g.constant(Tensor::zeros(&[2, 3]));
            let h1 = cell.forward(&mut g, x1, h0);
            let h2 = cell.forward(&mut g, x2, h1);
            let y = g.mean(h2);
            g.backward(y);
            let analytic = g.grad(xv).to_vec();

            let numeric = numeric_gradient(
                |pt| {
                    let mut g: Graph<f64> = Graph::new();
                    let cell = build_params(&mut g);
                    let xv = g.constant(Tensor::new(&[4, 2], pt.to_vec()));
                    let x1 = g.slice_rows(xv, 0, 2);
                    let x2 = g.slice_rows(xv, 2, 2);
                    let h0 = g.constant(Tensor::zeros(&[2, 3]));
                    let h1 = cell.forward(&mut g, x1, h0);
                    let h2 = cell.forward(&mut g, x2, h1);
                    let m = g.mean(h2);
                    g.value(m).item()
                },
                &x,
                1e-5,
            );
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "two-step GRU gradient off by {err:.3e}");
        }
    }

    #[test]
    fn linear_applies_affine_map() {
        let mut g: Graph<f64> = Graph::new();
        let mut rng = StdRng::seed_from_u64(4);
        let lin = Linear::new(&mut g, 2, 3, &mut rng);
        // Set W rows to known values and b to [1, 2, 3].
        g.param_data_mut(lin.w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        g.param_data_mut(lin.b).copy_from_slice(&[1.0, 2.0, 3.0]);
        let x = g.constant(Tensor::new(&[1, 2], vec![5.0, 7.0]));
        let y = lin.forward(&mut g, x);
        assert_eq!(g.value(y).data(), &[6.0, 9.0, 15.0]);
    }

    #[test]
    fn initialization_is_seed_deterministic() {
        let build = |seed: u64| {
            let mut g: Graph<f64> = Graph::new();
            let mut rng = StdRng::seed_from_u64(seed);
            let e = Embedding::new(&mut g, 7, 4, &mut rng);
            let l = Linear::new(&mut g, 4, 2, &mut rng);
            (g.value(e.table).data().to_vec(), g.value(l.w).data().to_vec())
        };
        assert_eq!(build(42), build(42));
        assert_ne!(build(42).0, build(43).0);
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut rng = StdRng::seed_from_u64(5);
        let t: Tensor<f64> = uniform_init(&mut rng, &[64, 16], 16);
        let bound = 1.0 / 4.0;
        assert!(t.data().iter().all(|v| v.abs() < bound), "weights must lie in ±1/√fan_in");
        // Not degenerate: spread should cover a good part of the range.
        let max = t.data().iter().cloned().fold(f64::MIN, f64::max);
        assert!(max > bound * 0.5, "suspiciously narrow initialization, max {max}");
    }

    #[test]
    fn uniform_entropy_and_log_probs() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.constant(Tensor::zeros(&[1, 4]));
        let dist = Categorical::from_logits(&mut g, logits).unwrap();
        let h = dist.entropy(&mut g);
        assert!((g.value(h).item() - 4.0f64.ln()).abs() < 1e-12);
        let lp = dist.log_prob(&mut g, &[2]);
        assert!((g.value(lp).item() + 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lopsided_logits_sample_almost_deterministically() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.constant(Tensor::new(&[1, 2], vec![10.0, -10.0]));
        let dist = Categorical::from_logits(&mut g, logits).unwrap();
        let mut rng = StdRng::seed_from_u64(6);
        let mut zeros = 0u32;
        for _ in 0..100_000 {
            if dist.sample(&g, &mut rng)[0] == 0 {
                zeros += 1;
            }
        }
        assert!(zeros as f64 / 1e5 > 0.999, "got frequency {}", zeros as f64 / 1e5);
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        // Inverse-CDF sampling against softmax([ln .2, ln .3, ln .5]).
        let probs = [0.2, 0.3, 0.5];
        let mut g: Graph<f64> = Graph::new();
        let logits = g.constant(Tensor::new(&[1, 3], probs.iter().map(|p: &f64| p.ln()).collect()));
        let dist = Categorical::from_logits(&mut g, logits).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let n = 1_000_000;
        let mut counts = [0u32; 3];
        for _ in 0..n {
            counts[dist.sample(&g, &mut rng)[0]] += 1;
        }
        for (a, (&c, &p)) in counts.iter().zip(&probs).enumerate() {
            let freq = c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() < 3.0 * se,
                "action {a}: frequency {freq:.5} vs probability {p} (3·SE = {:.5})",
                3.0 * se
            );
        }
    }

    #[test]
    fn nan_logits_are_rejected() {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.constant(Tensor::new(&[1, 2], vec![f64::NAN, 0.0]));
        let err = Categorical::from_logits(&mut g, logits).unwrap_err();
        assert!(err.to_string().contains("non-finite logit"), "unexpected error: {err}");
    }

    #[test]
    fn entropy_stays_within_bounds_on_random_logits() {
        use rand::Rng as _;
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..200 {
            let a = rng.gen_range(2..8usize);
            let logits: Vec<f64> = (0..a).map(|_| rng.gen_range(-8.0..8.0)).collect();
            let mut g: Graph<f64> = Graph::new();
            let lv = g.constant(Tensor::new(&[1, a], logits));
            let dist = Categorical::from_logits(&mut g, lv).unwrap();
            let hv = g.row_entropy(dist.log_probs());
            let h = g.value(hv).item();
            assert!(h >= 0.0, "entropy must be non-negative, got {h}");
            assert!(h <= (a as f64).ln() + 1e-12, "entropy {h} exceeds ln {a}");
            let total: f64 = g.value(dist.log_probs()).data().iter().map(|l| l.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");
        }
    }
}
