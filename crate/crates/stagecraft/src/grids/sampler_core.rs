//! Shared bookkeeping for seeded task samplers.
//!
//! Every gridworld sampler owns the same three pieces of state: a seeded
//! generator, a count of tasks handed out, and an optional cap. This helper
//! centralizes them, plus the save/restore plumbing that makes a sampler
//! resumable mid-sequence from a checkpoint.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::framework::{CurriculumFn, TaskSamplerSpec};

pub struct SamplerCore {
    pub rng: ChaCha8Rng,
    pub count: usize,
    max_tasks: Option<usize>,
    curriculum: Option<CurriculumFn>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    rng: ChaCha8Rng,
    count: usize,
}

impl SamplerCore {
    /// `spec.seed` is already a fully derived stream seed (the experiment
    /// mixes its base seed, the mode tag, and the global sampler index), so
    /// it seeds the generator directly.
    pub fn new(spec: &TaskSamplerSpec) -> Self {
        SamplerCore {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            count: 0,
            max_tasks: spec.max_tasks,
            curriculum: spec.curriculum.clone(),
        }
    }

    /// True once the configured task cap (if any) has been reached.
    pub fn exhausted(&self) -> bool {
        self.max_tasks.is_some_and(|m| self.count >= m)
    }

    /// The curriculum's difficulty for the next task, or `default` when no
    /// curriculum is installed.
    pub fn difficulty(&self, default: usize) -> usize {
        match &self.curriculum {
            Some(f) => f(self.count),
            None => default,
        }
    }

    pub fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(Snapshot { rng: self.rng.clone(), count: self.count })
            .expect("sampler state serializes")
    }

    pub fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let snap: Snapshot = serde_json::from_value(state.clone())?;
        self.rng = snap.rng;
        self.count = snap.count;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::Mode;
    use rand::Rng;

    #[test]
    fn snapshot_resumes_the_random_stream_exactly() {
        let spec = TaskSamplerSpec::new(42, Mode::Train);
        let mut core = SamplerCore::new(&spec);
        let _burn: u64 = core.rng.gen();
        core.count = 3;
        let snap = core.save_state();
        let expected: Vec<u64> = (0..4).map(|_| core.rng.gen()).collect();

        let mut restored = SamplerCore::new(&spec);
        restored.restore_state(&snap).unwrap();
        assert_eq!(restored.count, 3);
        let got: Vec<u64> = (0..4).map(|_| restored.rng.gen()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn cap_and_curriculum_hooks() {
        use std::sync::Arc;
        let spec = TaskSamplerSpec::new(1, Mode::Test)
            .with_max_tasks(2)
            .with_curriculum(Arc::new(|count| 4 + count));
        let mut core = SamplerCore::new(&spec);
        assert!(!core.exhausted());
        assert_eq!(core.difficulty(9), 4);
        core.count = 2;
        assert!(core.exhausted());
        assert_eq!(core.difficulty(9), 6);

        let plain = SamplerCore::new(&TaskSamplerSpec::new(1, Mode::Test));
        assert_eq!(plain.difficulty(9), 9, "no curriculum means the default difficulty");
        assert!(!plain.exhausted(), "no cap means never exhausted");
    }
}
