//! Adam with bias correction, a linear learning-rate schedule, and optional
//! global gradient-norm clipping (off by default).
//!
//! The learning rate is scheduled against an externally supplied step count
//! (the trainer passes collected environment steps, so the decay tracks data
//! consumed rather than optimizer invocations), while bias correction uses
//! the optimizer's own update counter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar};

/// Adam hyperparameters. All values are `f64` regardless of the training
/// precision; they are narrowed once per update.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr_start: f64,
    /// Linear decay target; set equal to `lr_start` for a constant rate.
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Schedule horizon: the learning rate reaches `lr_end` at this step and
    /// stays there.
    pub total_steps: u64,
    /// Global gradient-norm ceiling; `None` (the default) disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_start: 1e-3,
            lr_end: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            total_steps: 1,
            max_grad_norm: None,
        }
    }
}

impl AdamConfig {
    /// Constant learning rate, default moments.
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr_start: lr, lr_end: lr, ..Default::default() }
    }

    /// Linear decay from `lr_start` to `lr_end` over `total_steps`.
    pub fn with_linear_decay(lr_start: f64, lr_end: f64, total_steps: u64) -> Self {
        AdamConfig { lr_start, lr_end, total_steps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "adam: betas must lie in [0, 1), got beta1={} beta2={}",
                self.beta1, self.beta2
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config(format!("adam: epsilon must be positive, got {}", self.epsilon)));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("adam: total_steps must be at least 1".into()));
        }
        if let Some(m) = self.max_grad_norm {
            if m <= 0.0 {
                return Err(Error::Config(format!("adam: max_grad_norm must be positive, got {m}")));
            }
        }
        Ok(())
    }

    /// Effective learning rate at `step`:
    /// `lr_start + (lr_end − lr_start) · min(step / total_steps, 1)`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }
}

/// Adam state for every parameter of a [`Graph`].
pub struct Adam<F: Scalar> {
    cfg: AdamConfig,
    /// First-moment estimates, one buffer per parameter.
    m: Vec<Vec<F>>,
    /// Second-moment estimates, one buffer per parameter.
    v: Vec<Vec<F>>,
    /// Number of updates applied so far (drives bias correction).
    updates: u64,
}

impl<F: Scalar> Adam<F> {
    /// Allocate zeroed moment buffers matching the graph's parameters.
    pub fn new(cfg: AdamConfig, graph: &Graph<F>) -> Result<Self> {
        cfg.validate()?;
        let m = graph.param_vars().iter().map(|&p| vec![F::zero(); graph.value(p).numel()]).collect();
        let v = graph.param_vars().iter().map(|&p| vec![F::zero(); graph.value(p).numel()]).collect();
        Ok(Adam { cfg, m, v, updates: 0 })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Apply one update from the gradients currently stored in `graph`.
    ///
    /// `schedule_step` selects the learning rate (see [`AdamConfig::lr_at`]);
    /// parameters without gradients are treated as having zero gradient.
    /// Returns the learning rate that was applied.
    pub fn step(&mut self, graph: &mut Graph<F>, schedule_step: u64) -> f64 {
        let params = graph.param_vars();
        assert_eq!(
            params.len(),
            self.m.len(),
            "adam: optimizer built for {} parameters, graph has {}",
            self.m.len(),
            params.len()
        );

        // Optional global-norm clip, folded into a scale factor so the
        // stored gradients are never mutated.
        let mut scale = 1.0f64;
        if let Some(max_norm) = self.cfg.max_grad_norm {
            let mut sq = 0.0f64;
            for &p in &params {
                if let Some(g) = graph.grad_opt(p) {
                    for &x in g {
                        let x = x.to_f64();
                        sq += x * x;
                    }
                }
            }
            let norm = sq.sqrt();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }

        self.updates += 1;
        let t = self.updates;
        let lr = self.cfg.lr_at(schedule_step);
        let bc1 = 1.0 - self.cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(t.min(i32::MAX as u64) as i32);

        let b1 = F::from_f64(self.cfg.beta1);
        let b2 = F::from_f64(self.cfg.beta2);
        let one_minus_b1 = F::from_f64(1.0 - self.cfg.beta1);
        let one_minus_b2 = F::from_f64(1.0 - self.cfg.beta2);
        let eps = F::from_f64(self.cfg.epsilon);
        let gscale = F::from_f64(scale);
        // step size with bias corrections folded in:
        // x -= lr · (m/bc1) / (√(v/bc2) + ε)  ==  x -= (lr/bc1) · m / (√v·√(1/bc2) + ε)
        // Keep the literal form for clarity; the per-element cost is the same.
        let lr_f = F::from_f64(lr);
        let inv_bc1 = F::from_f64(1.0 / bc1);
        let inv_bc2 = F::from_f64(1.0 / bc2);

        for (i, &p) in params.iter().enumerate() {
            let (x, grad) = graph.param_update_view(p);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            match grad {
                Some(g) => {
                    for (((xi, &gi), mi), vi) in x.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let gi = gi * gscale;
                        *mi = b1 * *mi + one_minus_b1 * gi;
                        *vi = b2 * *vi + one_minus_b2 * gi * gi;
                        let mhat = *mi * inv_bc1;
                        let vhat = *vi * inv_bc2;
                        *xi = *xi - lr_f * mhat / (vhat.sqrt() + eps);
                    }
                }
                None => {
                    // Zero gradient: moments decay, parameters move only if
                    // the moments are already non-zero (standard Adam
                    // semantics).
                    for ((xi, mi), vi) in x.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi;
                        *vi = b2 * *vi;
                        let mhat = *mi * inv_bc1;
                        let vhat = *vi * inv_bc2;
                        *xi = *xi - lr_f * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        lr
    }

    /// Updates applied so far (checkpoint plumbing).
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn set_update_count(&mut self, updates: u64) {
        self.updates = updates;
    }

    /// Moment buffers in parameter order (checkpoint plumbing).
    pub fn moments(&self) -> (&[Vec<F>], &[Vec<F>]) {
        (&self.m, &self.v)
    }

    pub fn moments_mut(&mut self) -> (&mut [Vec<F>], &mut [Vec<F>]) {
        (&mut self.m, &mut self.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param_graph(init: &[f64]) -> (Graph<f64>, crate::tensor::Var) {
        let mut g = Graph::new();
        let p = g.param(Tensor::new(&[1, init.len()], init.to_vec()));
        (g, p)
    }

    /// Run one update with gradient `grad` against the current parameters.
    fn apply(adam: &mut Adam<f64>, g: &mut Graph<f64>, p: crate::tensor::Var, grad: &[f64], step: u64) {
        // Build a loss whose gradient at p is exactly `grad`: L = Σ grad_i·p_i.
        let c = g.constant(Tensor::new(&[1, grad.len()], grad.to_vec()));
        let prod = g.mul(p, c);
        let loss = g.sum(prod);
        g.backward(loss);
        adam.step(g, step);
        g.reset();
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut g, p) = one_param_graph(&[0.0, 1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &g).unwrap();
        let before = g.value(p).data().to_vec();
        apply(&mut adam, &mut g, p, &[1.0, 1.0, 1.0], 0);
        for (a, b) in g.value(p).data().iter().zip(&before) {
            let delta = a - b;
            assert!(
                (delta + 1e-3).abs() < 1e-9,
                "first bias-corrected step with unit gradient should be ≈ −lr, got {delta}"
            );
        }
    }

    #[test]
    fn zero_gradient_fresh_state_leaves_params_unchanged() {
        let (mut g, p) = one_param_graph(&[3.0, -4.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &g).unwrap();
        apply(&mut adam, &mut g, p, &[0.0, 0.0], 0);
        assert_eq!(g.value(p).data(), &[3.0, -4.0]);
    }

    #[test]
    fn params_without_gradients_are_untouched_from_rest() {
        let mut g: Graph<f64> = Graph::new();
        let used = g.param(Tensor::scalar(1.0));
        let unused = g.param(Tensor::scalar(5.0));
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &g).unwrap();
        let loss = g.mul(used, used);
        g.backward(loss);
        adam.step(&mut g, 0);
        assert_ne!(g.value(used).item(), 1.0, "used parameter must move");
        assert_eq!(g.value(unused).item(), 5.0, "parameter outside the loss must not move");
    }

    #[test]
    fn decayed_to_zero_schedule_freezes_params() {
        let (mut g, p) = one_param_graph(&[1.0]);
        let cfg = AdamConfig::with_linear_decay(1e-3, 0.0, 100);
        let mut adam = Adam::new(cfg, &g).unwrap();
        apply(&mut adam, &mut g, p, &[7.0], 100); // at the horizon: lr exactly 0
        assert_eq!(g.value(p).data(), &[1.0], "update at lr=0 must be exactly zero");
        apply(&mut adam, &mut g, p, &[7.0], 250); // past the horizon: still 0
        assert_eq!(g.value(p).data(), &[1.0]);
    }

    #[test]
    fn lr_interpolates_linearly() {
        let cfg = AdamConfig::with_linear_decay(1e-3, 2e-4, 1000);
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert!((cfg.lr_at(500) - 6e-4).abs() < 1e-15);
        assert!((cfg.lr_at(1000) - 2e-4).abs() < 1e-18);
        assert!((cfg.lr_at(99999) - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn constant_gradient_steps_are_lr_sized() {
        // Well-known Adam property: with a constant gradient, every
        // bias-corrected step has magnitude ≈ lr.
        let (mut g, p) = one_param_graph(&[0.0]);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &g).unwrap();
        for s in 0..5 {
            apply(&mut adam, &mut g, p, &[1.0], s);
        }
        let x = g.value(p).item();
        assert!((x + 0.5).abs() < 1e-6, "five constant-gradient steps should reach ≈ −0.5, got {x}");
    }

    #[test]
    fn global_norm_clip_rescales_the_step() {
        // Gradient [3, 4] has norm 5; with max_norm 1 the step must equal the
        // step produced by gradient [0.6, 0.8].
        let run = |grad: Vec<f64>, clip: Option<f64>| {
            let (mut g, p) = one_param_graph(&[0.0, 0.0]);
            let cfg = AdamConfig { max_grad_norm: clip, ..AdamConfig::with_lr(0.05) };
            let mut adam = Adam::new(cfg, &g).unwrap();
            apply(&mut adam, &mut g, p, &grad, 0);
            g.value(p).data().to_vec()
        };
        let clipped = run(vec![3.0, 4.0], Some(1.0));
        let reference = run(vec![0.6, 0.8], None);
        for (c, r) in clipped.iter().zip(&reference) {
            assert!((c - r).abs() < 1e-12, "clipped step {c} differs from rescaled reference {r}");
        }
        // Below the ceiling, clipping must be a no-op.
        let under = run(vec![0.3, 0.4], Some(1.0));
        let plain = run(vec![0.3, 0.4], None);
        assert_eq!(under, plain);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta2: -0.1, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { total_steps: 0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { max_grad_norm: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
