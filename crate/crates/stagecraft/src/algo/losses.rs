//! PPO, advantage actor-critic, and behavioral-cloning losses, plus weighted
//! mixing of any number of them (including user-defined losses) in a single
//! backward pass.
//!
//! All losses consume the same inputs: the model's normalized log-probability
//! and value tensors for a flattened `[T·R]` batch, and per-row constants
//! (executed actions, behavior log-probs, advantages, returns, optional
//! expert actions, optional validity weights for padded supervised batches).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

use super::schedules::linear_schedule;

/// Model outputs for one update batch: normalized log-probabilities
/// `[N, A]` and state values `[N, 1]`, both differentiable.
#[derive(Debug, Clone, Copy)]
pub struct ModelSeqOut {
    pub log_probs: Var,
    pub values: Var,
}

/// Per-row constants of one update batch. Lengths must all equal the row
/// count of the model outputs.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a, F> {
    /// Actions that were executed (the behavior actions).
    pub actions: &'a [usize],
    /// Log-probabilities the behavior policy assigned to those actions.
    pub old_log_probs: &'a [F],
    pub advantages: &'a [F],
    pub returns: &'a [F],
    /// Expert labels, present when the task exposes an expert.
    pub expert_actions: Option<&'a [usize]>,
    /// Row validity in `{0, 1}` for padded supervised batches; `None` means
    /// every row counts.
    pub weights: Option<&'a [F]>,
}

/// Schedule position used by decaying loss parameters (the PPO clip).
#[derive(Debug, Clone, Copy)]
pub struct LossCtx {
    /// Steps taken so far within the owning pipeline stage.
    pub stage_step: u64,
    /// The stage's step budget.
    pub stage_horizon: u64,
}

impl LossCtx {
    /// A context with no schedule progress (parameters at their start values).
    pub fn fresh() -> Self {
        LossCtx { stage_step: 0, stage_horizon: 1 }
    }
}

/// PPO hyperparameters (Appendix-style defaults: clip 0.1 decaying to 0,
/// value coefficient 0.5, entropy coefficient 0.01, γ 0.99, GAE λ 0.95).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpoParams {
    pub clip_start: f64,
    pub clip_end: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoParams {
    fn default() -> Self {
        PpoParams {
            clip_start: 0.1,
            clip_end: 0.0,
            value_coef: 0.5,
            entropy_coef: 0.01,
            gamma: 0.99,
            lambda: 0.95,
            normalize_advantages: true,
        }
    }
}

impl PpoParams {
    /// Clip ε at the given schedule position (linear, stage-local).
    pub fn clip_at(&self, ctx: &LossCtx) -> f64 {
        linear_schedule(self.clip_start, self.clip_end, ctx.stage_step, ctx.stage_horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_start < 0.0 || self.clip_end < 0.0 {
            return Err(Error::Config(format!(
                "ppo: clip range must be non-negative, got {} → {}",
                self.clip_start, self.clip_end
            )));
        }
        validate_gamma_lambda("ppo", self.gamma, self.lambda)?;
        validate_coefs("ppo", self.value_coef, self.entropy_coef)
    }
}

/// Advantage actor-critic hyperparameters. A2C performs exactly one gradient
/// update per collected sample; stage validation rejects `epochs > 1` or
/// multiple minibatches.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct A2cParams {
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub normalize_advantages: bool,
}

impl Default for A2cParams {
    fn default() -> Self {
        A2cParams {
            value_coef: 0.5,
            entropy_coef: 0.01,
            gamma: 0.99,
            lambda: 0.95,
            normalize_advantages: true,
        }
    }
}

impl A2cParams {
    pub fn validate(&self) -> Result<()> {
        validate_gamma_lambda("a2c", self.gamma, self.lambda)?;
        validate_coefs("a2c", self.value_coef, self.entropy_coef)
    }
}

fn validate_gamma_lambda(name: &str, gamma: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("{name}: gamma must lie in [0, 1], got {gamma}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("{name}: lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

fn validate_coefs(name: &str, value_coef: f64, entropy_coef: f64) -> Result<()> {
    if !value_coef.is_finite() || !entropy_coef.is_finite() {
        return Err(Error::Config(format!(
            "{name}: coefficients must be finite, got value {value_coef}, entropy {entropy_coef}"
        )));
    }
    Ok(())
}

/// A user-supplied loss mixed alongside the built-ins (the hook for
/// auxiliary objectives that should share the model's backward pass).
pub trait CustomLoss<F: Scalar>: Send + Sync {
    /// Short identifier used in diagnostics.
    fn name(&self) -> &str;
    fn evaluate(
        &self,
        g: &mut Graph<F>,
        out: &ModelSeqOut,
        inputs: &LossInputs<'_, F>,
        ctx: &LossCtx,
    ) -> Result<(Var, Vec<(String, f64)>)>;
}

/// Which loss to compute.
#[derive(Clone)]
pub enum LossKind<F: Scalar> {
    Ppo(PpoParams),
    A2c(A2cParams),
    Bc,
    Custom(Arc<dyn CustomLoss<F>>),
}

impl<F: Scalar> std::fmt::Debug for LossKind<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Ppo(p) => f.debug_tuple("Ppo").field(p).finish(),
            LossKind::A2c(p) => f.debug_tuple("A2c").field(p).finish(),
            LossKind::Bc => f.write_str("Bc"),
            LossKind::Custom(c) => f.debug_tuple("Custom").field(&c.name()).finish(),
        }
    }
}

impl<F: Scalar> LossKind<F> {
    pub fn name(&self) -> &str {
        match self {
            LossKind::Ppo(_) => "ppo",
            LossKind::A2c(_) => "a2c",
            LossKind::Bc => "bc",
            LossKind::Custom(c) => c.name(),
        }
    }

    /// Advantage-estimation parameters, for kinds that consume advantages.
    pub fn gae_params(&self) -> Option<(f64, f64, bool)> {
        match self {
            LossKind::Ppo(p) => Some((p.gamma, p.lambda, p.normalize_advantages)),
            LossKind::A2c(p) => Some((p.gamma, p.lambda, p.normalize_advantages)),
            _ => None,
        }
    }

    /// Whether this loss reads expert-action labels.
    pub fn needs_expert_actions(&self) -> bool {
        matches!(self, LossKind::Bc)
    }

    /// Diagnostic keys this loss emits, in emission order — what a columnar
    /// metrics file declares as columns up front. Custom losses contribute
    /// only their weighted total (their extra diagnostics still reach the
    /// line-delimited stream).
    pub fn diagnostic_keys(&self) -> Vec<String> {
        let mut keys = vec![format!("loss/{}", self.name())];
        match self {
            LossKind::Ppo(_) => {
                for k in ["policy", "value", "entropy", "clip_epsilon", "clip_fraction"] {
                    keys.push(format!("ppo/{k}"));
                }
            }
            LossKind::A2c(_) => {
                for k in ["policy", "value", "entropy"] {
                    keys.push(format!("a2c/{k}"));
                }
            }
            LossKind::Bc => keys.push("bc/nll".to_string()),
            LossKind::Custom(_) => {}
        }
        keys
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Ppo(p) => p.validate(),
            LossKind::A2c(p) => p.validate(),
            LossKind::Bc | LossKind::Custom(_) => Ok(()),
        }
    }

    /// JSON description for run manifests (custom losses record their name).
    pub fn describe(&self) -> serde_json::Value {
        match self {
            LossKind::Ppo(p) => serde_json::json!({"kind": "ppo", "params": p}),
            LossKind::A2c(p) => serde_json::json!({"kind": "a2c", "params": p}),
            LossKind::Bc => serde_json::json!({"kind": "bc"}),
            LossKind::Custom(c) => serde_json::json!({"kind": "custom", "name": c.name()}),
        }
    }
}

/// One weighted entry in a stage's loss mix.
#[derive(Debug, Clone)]
pub struct LossSpec<F: Scalar> {
    pub kind: LossKind<F>,
    pub weight: f64,
}

impl<F: Scalar> LossSpec<F> {
    pub fn new(kind: LossKind<F>, weight: f64) -> Self {
        LossSpec { kind, weight }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weight.is_finite() {
            return Err(Error::Config(format!(
                "loss '{}': weight must be finite, got {}",
                self.kind.name(),
                self.weight
            )));
        }
        self.kind.validate()
    }
}

/// Mean over rows of a `[N, 1]` column, honoring optional validity weights
/// (weighted sum divided by the weight total).
fn column_mean<F: Scalar>(g: &mut Graph<F>, x: Var, weights: Option<&[F]>) -> Var {
    match weights {
        None => g.mean(x),
        Some(w) => {
            let mut total = F::zero();
            for &wi in w {
                total = total + wi;
            }
            assert!(
                total > F::zero(),
                "loss: batch has zero total weight ({} rows, all padding?)",
                w.len()
            );
            let xw = g.scale_rows(x, w);
            let s = g.sum(xw);
            g.mul_scalar(s, F::one() / total)
        }
    }
}

fn check_lengths<F: Scalar>(name: &str, rows: usize, inputs: &LossInputs<'_, F>) {
    assert_eq!(inputs.actions.len(), rows, "{name}: {} actions for {rows} rows", inputs.actions.len());
    assert_eq!(
        inputs.old_log_probs.len(),
        rows,
        "{name}: {} behavior log-probs for {rows} rows",
        inputs.old_log_probs.len()
    );
    assert_eq!(
        inputs.advantages.len(),
        rows,
        "{name}: {} advantages for {rows} rows",
        inputs.advantages.len()
    );
    assert_eq!(inputs.returns.len(), rows, "{name}: {} returns for {rows} rows", inputs.returns.len());
    if let Some(w) = inputs.weights {
        assert_eq!(w.len(), rows, "{name}: {} weights for {rows} rows", w.len());
    }
}

fn ensure_finite<F: Scalar>(
    kind: &str,
    value: F,
    components: &[(String, f64)],
) -> Result<()> {
    if value.is_finite() {
        return Ok(());
    }
    let dump: Vec<String> = components.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Err(Error::Numeric(format!(
        "{kind} loss is non-finite ({value}); components: {}",
        dump.join(", ")
    )))
}

/// Clipped-surrogate PPO with value and entropy terms:
///
/// ```text
/// L = −mean(min(ρ·Â, clamp(ρ, 1−ε, 1+ε)·Â)) + c_v·mean((V−R)²) − c_e·mean(H)
/// ρ = exp(log π_new(a) − log π_old(a)),   ε decaying linearly over the stage
/// ```
pub fn ppo_loss<F: Scalar>(
    g: &mut Graph<F>,
    out: &ModelSeqOut,
    inputs: &LossInputs<'_, F>,
    params: &PpoParams,
    ctx: &LossCtx,
) -> Result<(Var, Vec<(String, f64)>)> {
    let (rows, _) = g.value(out.log_probs).dims2("ppo_loss");
    check_lengths("ppo", rows, inputs);
    let eps = params.clip_at(ctx);

    let new_lp = g.gather_col(out.log_probs, inputs.actions);
    let old_lp = g.constant(Tensor::column(inputs.old_log_probs.to_vec()));
    let diff = g.sub(new_lp, old_lp);
    let ratio = g.exp(diff);

    let adv = g.constant(Tensor::column(inputs.advantages.to_vec()));
    let surr_unclipped = g.mul(ratio, adv);
    let ratio_clipped = g.clamp(ratio, F::from_f64(1.0 - eps), F::from_f64(1.0 + eps));
    let surr_clipped = g.mul(ratio_clipped, adv);
    let surr = g.min(surr_unclipped, surr_clipped);
    let surr_mean = column_mean(g, surr, inputs.weights);
    let policy = g.mul_scalar(surr_mean, -F::one());

    let ret = g.constant(Tensor::column(inputs.returns.to_vec()));
    let verr = g.sub(out.values, ret);
    let vsq = g.mul(verr, verr);
    let value = column_mean(g, vsq, inputs.weights);

    let ent_rows = g.row_entropy(out.log_probs);
    let entropy = column_mean(g, ent_rows, inputs.weights);

    let value_scaled = g.mul_scalar(value, F::from_f64(params.value_coef));
    let entropy_scaled = g.mul_scalar(entropy, F::from_f64(-params.entropy_coef));
    let pv = g.add(policy, value_scaled);
    let total = g.add(pv, entropy_scaled);

    // Fraction of rows whose ratio left the trust region (diagnostic only).
    let clipped_rows = g
        .value(ratio)
        .data()
        .iter()
        .filter(|&&r| (r.to_f64() - 1.0).abs() > eps)
        .count();

    let diagnostics = vec![
        ("ppo/policy".to_string(), g.value(policy).item().to_f64()),
        ("ppo/value".to_string(), g.value(value).item().to_f64()),
        ("ppo/entropy".to_string(), g.value(entropy).item().to_f64()),
        ("ppo/clip_epsilon".to_string(), eps),
        ("ppo/clip_fraction".to_string(), clipped_rows as f64 / rows as f64),
    ];
    ensure_finite("ppo", g.value(total).item(), &diagnostics)?;
    Ok((total, diagnostics))
}

/// Advantage actor-critic:
///
/// ```text
/// L = −mean(log π(a)·Â) + c_v·mean((V−R)²) − c_e·mean(H)
/// ```
///
/// Advantages are constants (no gradient flows through them). The
/// one-update-per-sample contract is enforced by stage validation.
pub fn a2c_loss<F: Scalar>(
    g: &mut Graph<F>,
    out: &ModelSeqOut,
    inputs: &LossInputs<'_, F>,
    params: &A2cParams,
) -> Result<(Var, Vec<(String, f64)>)> {
    let (rows, _) = g.value(out.log_probs).dims2("a2c_loss");
    check_lengths("a2c", rows, inputs);

    let new_lp = g.gather_col(out.log_probs, inputs.actions);
    let adv = g.constant(Tensor::column(inputs.advantages.to_vec()));
    let weighted = g.mul(new_lp, adv);
    let pol_mean = column_mean(g, weighted, inputs.weights);
    let policy = g.mul_scalar(pol_mean, -F::one());

    let ret = g.constant(Tensor::column(inputs.returns.to_vec()));
    let verr = g.sub(out.values, ret);
    let vsq = g.mul(verr, verr);
    let value = column_mean(g, vsq, inputs.weights);

    let ent_rows = g.row_entropy(out.log_probs);
    let entropy = column_mean(g, ent_rows, inputs.weights);

    let value_scaled = g.mul_scalar(value, F::from_f64(params.value_coef));
    let entropy_scaled = g.mul_scalar(entropy, F::from_f64(-params.entropy_coef));
    let pv = g.add(policy, value_scaled);
    let total = g.add(pv, entropy_scaled);

    let diagnostics = vec![
        ("a2c/policy".to_string(), g.value(policy).item().to_f64()),
        ("a2c/value".to_string(), g.value(value).item().to_f64()),
        ("a2c/entropy".to_string(), g.value(entropy).item().to_f64()),
    ];
    ensure_finite("a2c", g.value(total).item(), &diagnostics)?;
    Ok((total, diagnostics))
}

/// Behavioral cloning: negative log-likelihood of the expert's actions,
/// `L = −mean(log π(a_expert))`.
pub fn bc_loss<F: Scalar>(
    g: &mut Graph<F>,
    out: &ModelSeqOut,
    inputs: &LossInputs<'_, F>,
) -> Result<(Var, Vec<(String, f64)>)> {
    let (rows, _) = g.value(out.log_probs).dims2("bc_loss");
    let expert = inputs.expert_actions.ok_or_else(|| {
        Error::Config(
            "bc loss requires expert actions, but the batch has none \
             (does the task expose an expert?)"
                .into(),
        )
    })?;
    assert_eq!(expert.len(), rows, "bc: {} expert actions for {rows} rows", expert.len());

    let lp = g.gather_col(out.log_probs, expert);
    let mean = column_mean(g, lp, inputs.weights);
    let total = g.mul_scalar(mean, -F::one());

    let diagnostics = vec![("bc/nll".to_string(), g.value(total).item().to_f64())];
    ensure_finite("bc", g.value(total).item(), &diagnostics)?;
    Ok((total, diagnostics))
}

/// Weighted sum of any number of losses over one batch:
/// `L = Σ weight_i · L_i`, with per-component diagnostics.
///
/// A single spec with weight 1 reduces to that loss exactly (no extra
/// arithmetic is applied).
pub fn combine_losses<F: Scalar>(
    g: &mut Graph<F>,
    specs: &[LossSpec<F>],
    out: &ModelSeqOut,
    inputs: &LossInputs<'_, F>,
    ctx: &LossCtx,
) -> Result<(Var, Vec<(String, f64)>)> {
    assert!(!specs.is_empty(), "combine_losses: need at least one loss spec");
    let mut total: Option<Var> = None;
    let mut diagnostics = Vec::new();
    for spec in specs {
        let (value, mut d) = match &spec.kind {
            LossKind::Ppo(p) => ppo_loss(g, out, inputs, p, ctx)?,
            LossKind::A2c(p) => a2c_loss(g, out, inputs, p)?,
            LossKind::Bc => bc_loss(g, out, inputs)?,
            LossKind::Custom(c) => c.evaluate(g, out, inputs, ctx)?,
        };
        diagnostics.push((
            format!("loss/{}", spec.kind.name()),
            g.value(value).item().to_f64() * spec.weight,
        ));
        diagnostics.append(&mut d);
        let weighted = if spec.weight == 1.0 {
            value
        } else {
            g.mul_scalar(value, F::from_f64(spec.weight))
        };
        total = Some(match total {
            None => weighted,
            Some(t) => g.add(t, weighted),
        });
    }
    let total = total.expect("at least one spec");
    diagnostics.insert(0, ("loss/total".to_string(), g.value(total).item().to_f64()));
    Ok((total, diagnostics))
}
