//! The experiment registry: names to experiment builders.
//!
//! Experiments live in code; the registry maps stable names (what you type
//! on the command line) to builder functions. Lookups of unknown names fail
//! with the full list plus nearest-name suggestions, because "did you mean
//! gotolocal_desk_ppo" beats a bare not-found every time.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::framework::experiment::ExperimentConfig;
use crate::framework::overrides::ParamBag;
use crate::tensor::Scalar;

/// Builds a config, reading any overrides it understands from the bag.
pub type ExperimentBuilder<F> =
    Arc<dyn Fn(&ParamBag) -> Result<ExperimentConfig<F>> + Send + Sync>;

struct Entry<F: Scalar> {
    summary: String,
    builder: ExperimentBuilder<F>,
}

/// Immutable-after-setup name → experiment map.
pub struct Registry<F: Scalar> {
    entries: BTreeMap<String, Entry<F>>,
}

impl<F: Scalar> Default for Registry<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Registry<F> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    /// Registers a named experiment. Panics on duplicates: two registrations
    /// under one name is a programming error, not a runtime condition.
    pub fn register(&mut self, name: &str, summary: &str, builder: ExperimentBuilder<F>) {
        let prior = self.entries.insert(
            name.to_string(),
            Entry { summary: summary.to_string(), builder },
        );
        assert!(prior.is_none(), "registry: experiment '{name}' registered twice");
    }

    /// All registered names, sorted.
    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(|s| s.as_str()).collect()
    }

    /// One-line description of a registered experiment.
    pub fn summary(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|e| e.summary.as_str())
    }

    /// Builds the named experiment, applying overrides from `bag`.
    pub fn build(&self, name: &str, bag: &ParamBag) -> Result<ExperimentConfig<F>> {
        match self.entries.get(name) {
            Some(entry) => (entry.builder)(bag),
            None => Err(Error::UnknownExperiment {
                name: name.to_string(),
                suggestions: self.closest(name, 3),
            }),
        }
    }

    /// Registered names nearest to `name` by edit distance, closest first.
    fn closest(&self, name: &str, limit: usize) -> Vec<String> {
        let mut scored: Vec<(usize, &String)> = self
            .entries
            .keys()
            .map(|k| (edit_distance(name, k), k))
            .collect();
        scored.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        scored
            .into_iter()
            .take_while(|(d, k)| *d <= k.len().max(name.len()))
            .take(limit)
            .map(|(_, k)| k.clone())
            .collect()
    }
}

/// Levenshtein distance over bytes — experiment names are ASCII.
fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            row[j + 1] = subst.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_registry() -> Registry<f64> {
        let mut reg = Registry::new();
        for name in ["gotolocal_desk_ppo", "gotolocal_desk_bc", "stag_hunt_desk"] {
            reg.register(
                name,
                "test fixture",
                Arc::new(|_bag| Err(Error::Config("fixture builder".into()))),
            );
        }
        reg
    }

    #[test]
    fn unknown_names_get_nearest_suggestions() {
        let reg = dummy_registry();
        let err = reg.build("gotolocal_desk_pp", &ParamBag::new()).unwrap_err();
        match err {
            Error::UnknownExperiment { name, suggestions } => {
                assert_eq!(name, "gotolocal_desk_pp");
                assert_eq!(suggestions[0], "gotolocal_desk_ppo");
            }
            other => panic!("expected unknown-experiment error, got {other}"),
        }
    }

    #[test]
    fn names_are_sorted_and_summaries_attached() {
        let reg = dummy_registry();
        let names = reg.names();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        assert_eq!(names, sorted);
        assert_eq!(reg.summary("stag_hunt_desk"), Some("test fixture"));
        assert_eq!(reg.summary("nope"), None);
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_registration_panics() {
        let mut reg = dummy_registry();
        reg.register("stag_hunt_desk", "again", Arc::new(|_| Err(Error::Config("x".into()))));
    }

    #[test]
    fn edit_distance_agrees_with_hand_worked_cases() {
        assert_eq!(edit_distance("", ""), 0);
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("abc", "abd"), 1);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("", "abc"), 3);
    }
}
