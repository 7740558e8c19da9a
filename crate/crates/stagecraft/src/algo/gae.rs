//! Generalized advantage estimation over time-major rollout arrays.
//!
//! Layout convention: `rewards`, `values`, and `masks` are flat `[T, W]`
//! row-major arrays (`index = t*W + w`) for `W` parallel sequences of length
//! `T`. `masks[t*W + w] == 0` means step `t` of sequence `w` begins a new
//! episode, so neither value bootstrapping nor advantage accumulation crosses
//! it. The bootstrap value for the step *after* the window must already be
//! masked by the caller (zero where the final step ended its episode).

use crate::tensor::Scalar;

/// Recursive GAE:
///
/// ```text
/// δ_t = r_t + γ·v_{t+1}·m_{t+1} − v_t
/// A_t = δ_t + γ·λ·m_{t+1}·A_{t+1}
/// returns = A + v
/// ```
///
/// Returns `(advantages, returns)`, both `[T, W]`.
pub fn gae_compute<F: Scalar>(
    rewards: &[F],
    values: &[F],
    bootstrap: &[F],
    masks: &[F],
    t_len: usize,
    w: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<F>, Vec<F>) {
    let n = t_len * w;
    assert_eq!(rewards.len(), n, "gae: rewards length {} does not match [T={t_len}, W={w}]", rewards.len());
    assert_eq!(values.len(), n, "gae: values length {} does not match [T={t_len}, W={w}]", values.len());
    assert_eq!(masks.len(), n, "gae: masks length {} does not match [T={t_len}, W={w}]", masks.len());
    assert_eq!(bootstrap.len(), w, "gae: bootstrap length {} does not match W={w}", bootstrap.len());

    let gamma = F::from_f64(gamma);
    let gl = gamma * F::from_f64(lambda);
    let mut advantages = vec![F::zero(); n];
    let mut returns = vec![F::zero(); n];

    for col in 0..w {
        let mut acc = F::zero(); // A_{t+1}
        for t in (0..t_len).rev() {
            let i = t * w + col;
            // Value and continuation of the next step; past the window they
            // come from the (pre-masked) bootstrap.
            let (next_v, next_m) = if t + 1 < t_len {
                (values[(t + 1) * w + col], masks[(t + 1) * w + col])
            } else {
                (bootstrap[col], F::one())
            };
            let delta = rewards[i] + gamma * next_v * next_m - values[i];
            acc = delta + gl * next_m * acc;
            advantages[i] = acc;
            returns[i] = acc + values[i];
        }
    }
    (advantages, returns)
}

/// Brute-force reference implementation used to validate [`gae_compute`].
///
/// Instead of the backward recursion it evaluates the defining sum directly:
/// `A_t = Σ_{l≥0} (γλ)^l δ_{t+l}`, truncating the sum at the first step
/// `t+l+1` that begins a new episode (or at the window edge, where the masked
/// bootstrap stands in for `v_{T}`). Quadratic in `T` and deliberately
/// naive — do not use it for training.
pub fn gae_reference(
    rewards: &[f64],
    values: &[f64],
    bootstrap: &[f64],
    masks: &[f64],
    t_len: usize,
    w: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let delta = |t: usize, col: usize| -> f64 {
        let (next_v, next_m) = if t + 1 < t_len {
            (values[(t + 1) * w + col], masks[(t + 1) * w + col])
        } else {
            (bootstrap[col], 1.0)
        };
        rewards[t * w + col] + gamma * next_v * next_m - values[t * w + col]
    };
    let mut advantages = vec![0.0; t_len * w];
    let mut returns = vec![0.0; t_len * w];
    for col in 0..w {
        for t in 0..t_len {
            let mut a = 0.0;
            let mut coeff = 1.0;
            for l in 0.. {
                let s = t + l;
                if s >= t_len {
                    break;
                }
                a += coeff * delta(s, col);
                // Stop when the *next* step starts a new episode.
                let next_m = if s + 1 < t_len { masks[(s + 1) * w + col] } else { 1.0 };
                if next_m == 0.0 {
                    break;
                }
                coeff *= gamma * lambda;
            }
            advantages[t * w + col] = a;
            returns[t * w + col] = a + values[t * w + col];
        }
    }
    (advantages, returns)
}

/// Normalize advantages in place to mean 0 and (unbiased) standard deviation
/// 1, with a `1e-5` floor in the denominator. Slices shorter than 2 are left
/// untouched (no meaningful scale exists).
pub fn normalize_advantages<F: Scalar>(adv: &mut [F]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mut mean = 0.0f64;
    for &a in adv.iter() {
        mean += a.to_f64();
    }
    mean /= n as f64;
    let mut var = 0.0f64;
    for &a in adv.iter() {
        let d = a.to_f64() - mean;
        var += d * d;
    }
    var /= (n - 1) as f64;
    let denom = var.sqrt() + 1e-5;
    for a in adv.iter_mut() {
        *a = F::from_f64((a.to_f64() - mean) / denom);
    }
}
