//! Policy evaluation over a held-out task stream.
//!
//! Evaluation runs whole episodes (no fixed window): each episode starts from
//! a fresh recurrent state, actions come from the current policy — argmax
//! when greedy, sampled otherwise — and per-episode results are aggregated
//! into an [`EvalReport`]. A step hook variant exposes each pre-step frame
//! with the policy's action probabilities, which is what the episode
//! renderer consumes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::framework::model::ActorCriticModel;
use crate::framework::rng::rng_from;
use crate::framework::spaces::{ObsBatch, Observation};
use crate::framework::task::{Task, TaskSampler};
use crate::nn::Categorical;
use crate::tensor::{Graph, Scalar};

/// Aggregated results of an evaluation pass.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    /// Episodes played.
    pub episodes: usize,
    /// Fraction of episodes meeting the task's success criterion.
    pub success_rate: f64,
    /// Mean episode reward per agent.
    pub mean_reward: Vec<f64>,
    /// Mean episode reward summed over agents.
    pub total_reward: f64,
    /// Mean episode length in steps.
    pub mean_length: f64,
    /// Mean success weighted by path length, `success · shortest/max(shortest,
    /// taken)`, over episodes whose task can compute a shortest path; `None`
    /// when none can (games without a navigation goal).
    pub mean_spl: Option<f64>,
    /// Per-key means of the tasks' extra episode counters, key-sorted.
    pub extras: Vec<(String, f64)>,
}

/// One pre-step frame handed to the evaluation hook: the task before the
/// action executes, the policy's probabilities (`[agents · actions]`,
/// row-major per agent), and the actions about to be taken.
pub struct StepTrace<'a, F: Scalar> {
    pub episode: usize,
    pub step: usize,
    pub task: &'a dyn Task,
    pub probs: &'a [F],
    pub actions: &'a [usize],
}

/// Evaluates `episodes` episodes from the sampler; see [`evaluate_with`].
pub fn evaluate<F: Scalar>(
    g: &mut Graph<F>,
    model: &dyn ActorCriticModel<F>,
    sampler: &mut dyn TaskSampler,
    episodes: usize,
    greedy: bool,
    seed: u64,
) -> Result<EvalReport> {
    evaluate_with(g, model, sampler, episodes, greedy, seed, |_| {})
}

/// Evaluates `episodes` episodes, invoking `on_step` once per step with the
/// pre-step frame. `seed` feeds the action-sampling stream (unused when
/// `greedy`); greedy runs are fully determined by the sampler's own stream.
pub fn evaluate_with<F: Scalar>(
    g: &mut Graph<F>,
    model: &dyn ActorCriticModel<F>,
    sampler: &mut dyn TaskSampler,
    episodes: usize,
    greedy: bool,
    seed: u64,
    mut on_step: impl FnMut(StepTrace<'_, F>),
) -> Result<EvalReport> {
    assert!(episodes > 0, "evaluation: need at least one episode");
    let mut rng = rng_from(seed, "eval", 0);
    let mut successes = 0usize;
    let mut length_sum = 0usize;
    let mut reward_sums: Vec<f64> = Vec::new();
    let mut spl_sum = 0.0f64;
    let mut spl_count = 0usize;
    let mut extras: BTreeMap<String, (f64, usize)> = BTreeMap::new();

    for episode in 0..episodes {
        let mut task = sampler.next_task().ok_or_else(|| {
            Error::Task(format!(
                "evaluation needs {episodes} episodes but the sampler ran out after {episode}"
            ))
        })?;
        let agents = task.num_agents();
        assert_eq!(
            agents,
            model.num_agents(),
            "evaluation: task drives {} agents, model {}",
            agents,
            model.num_agents()
        );
        let mut state = model.initial_state(agents);
        let mut masks = vec![F::zero(); agents];
        let mut step = 0usize;
        while !task.is_done() {
            if step > task.max_steps() {
                return Err(Error::Task(format!(
                    "task did not terminate within its own limit of {} steps",
                    task.max_steps()
                )));
            }
            g.reset();
            let all: Vec<Observation> = task.observe();
            let refs: Vec<&Observation> = all.iter().collect();
            let batch = ObsBatch::stack(&refs);
            let state_var = g.constant(state.clone());
            let out = model.forward(g, &batch, state_var, &masks);
            let dist = Categorical::from_logits(g, out.logits)?;
            let actions = if greedy { dist.argmax(g) } else { dist.sample(g, &mut rng) };
            let probs: Vec<F> = g
                .value(dist.log_probs())
                .data()
                .iter()
                .map(|&l| F::from_f64(l.to_f64().exp()))
                .collect();
            on_step(StepTrace { episode, step, task: task.as_ref(), probs: &probs, actions: &actions });
            task.step(&actions)?;
            state = g.value(out.next_state).clone();
            masks = vec![F::one(); agents];
            step += 1;
        }
        g.reset();

        let result = task.episode_result();
        successes += result.success as usize;
        length_sum += result.length;
        if reward_sums.is_empty() {
            reward_sums = vec![0.0; result.rewards.len()];
        }
        for (sum, r) in reward_sums.iter_mut().zip(&result.rewards) {
            *sum += r;
        }
        if let Some(shortest) = result.shortest_path {
            let denom = shortest.max(result.length);
            let ratio = if denom == 0 { 1.0 } else { shortest as f64 / denom as f64 };
            spl_sum += if result.success { ratio } else { 0.0 };
            spl_count += 1;
        }
        for (key, value) in result.extras {
            let slot = extras.entry(key).or_insert((0.0, 0));
            slot.0 += value;
            slot.1 += 1;
        }
    }

    let mean_reward: Vec<f64> = reward_sums.iter().map(|s| s / episodes as f64).collect();
    Ok(EvalReport {
        episodes,
        success_rate: successes as f64 / episodes as f64,
        total_reward: mean_reward.iter().sum(),
        mean_reward,
        mean_length: length_sum as f64 / episodes as f64,
        mean_spl: (spl_count > 0).then(|| spl_sum / spl_count as f64),
        extras: extras.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{EmbedGru, EmbedGruConfig};
    use crate::framework::task::{Mode, TaskSamplerSpec};
    use crate::grids::GoToLocalSampler;
    use rand::SeedableRng;

    fn rig(seed: u64) -> (Graph<f64>, EmbedGru, GoToLocalSampler) {
        let mut g: Graph<f64> = Graph::new();
        let spec = TaskSamplerSpec::new(seed, Mode::Valid);
        let mut sampler = GoToLocalSampler::new(&spec, 6, 4);
        let probe = sampler.next_task().unwrap();
        let cfg = EmbedGruConfig::new(probe.observation_specs(), 16, probe.action_count())
            .with_embed_dim(4);
        let mut init_rng = rand::rngs::StdRng::seed_from_u64(seed ^ 0x5EED);
        let model = EmbedGru::new(&mut g, &cfg, &mut init_rng);
        // Rebuild the sampler so the probe draw does not offset the stream.
        let sampler = GoToLocalSampler::new(&spec, 6, 4);
        (g, model, sampler)
    }

    #[test]
    fn reports_are_reproducible_for_a_seed() {
        let (mut g1, m1, mut s1) = rig(21);
        let (mut g2, m2, mut s2) = rig(21);
        let a = evaluate(&mut g1, &m1, &mut s1, 4, true, 7).unwrap();
        let b = evaluate(&mut g2, &m2, &mut s2, 4, true, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_fields_are_internally_consistent() {
        let (mut g, model, mut sampler) = rig(22);
        let report = evaluate(&mut g, &model, &mut sampler, 5, true, 7).unwrap();
        assert_eq!(report.episodes, 5);
        assert!((0.0..=1.0).contains(&report.success_rate));
        assert!(report.mean_length >= 1.0);
        let spl = report.mean_spl.expect("navigation tasks define shortest paths");
        assert!(
            spl <= report.success_rate + 1e-12,
            "path-length weighting can only lower the success rate: {spl} vs {}",
            report.success_rate
        );
        assert_eq!(report.mean_reward.len(), 1);
        assert!((report.total_reward - report.mean_reward[0]).abs() < 1e-12);
    }

    #[test]
    fn sampled_and_greedy_policies_trace_different_episodes() {
        let (mut g1, m1, mut s1) = rig(23);
        let (mut g2, m2, mut s2) = rig(23);
        let greedy = evaluate(&mut g1, &m1, &mut s1, 3, true, 7).unwrap();
        let sampled = evaluate(&mut g2, &m2, &mut s2, 3, false, 7).unwrap();
        assert_ne!(
            greedy, sampled,
            "an untrained policy's argmax and sampled trajectories should diverge"
        );
    }

    #[test]
    fn exhausted_sampler_is_an_error() {
        let (mut g, model, _) = rig(24);
        let spec = TaskSamplerSpec::new(24, Mode::Test).with_max_tasks(2);
        let mut sampler = GoToLocalSampler::new(&spec, 6, 4);
        let err = evaluate(&mut g, &model, &mut sampler, 5, true, 7).unwrap_err();
        assert!(err.to_string().contains("ran out after 2"), "got: {err}");
    }

    #[test]
    fn step_hook_sees_every_step_with_normalized_probabilities() {
        let (mut g, model, mut sampler) = rig(25);
        let mut steps_seen = 0usize;
        let mut actions_per_call = Vec::new();
        let report = evaluate_with(&mut g, &model, &mut sampler, 2, true, 7, |trace| {
            steps_seen += 1;
            actions_per_call.push(trace.actions.len());
            for row in trace.probs.chunks(trace.task.action_count()) {
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() < 1e-6, "probabilities sum to {total}");
            }
        })
        .unwrap();
        assert_eq!(steps_seen as f64, report.mean_length * report.episodes as f64);
        assert!(actions_per_call.iter().all(|&n| n == 1));
    }
}
