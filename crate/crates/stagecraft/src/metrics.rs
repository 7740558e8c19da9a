//! Metrics records, run manifests, and their on-disk forms.
//!
//! A training run streams one [`MetricsRecord`] per optimizer update into
//! two files side by side:
//!
//! * `metrics.jsonl` — line-delimited JSON, every field including wall-clock
//!   timing; the machine-readable log.
//! * `metrics.tsv` — a columnar text table restricted to the deterministic
//!   fields (steps, losses, episode statistics), so two runs with the same
//!   seed produce byte-identical tables.
//!
//! The [`RunManifest`] is written once at run start and pins everything
//! needed to reproduce the run: experiment name, seed, overrides, code
//! version, and the output layout.

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::task::EpisodeResult;

/// One metrics row: emitted per optimizer update during training, or per
/// evaluation pass. Episode statistics cover the episodes completed since
/// the previous record; a window with no completed episodes leaves them
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Environment steps consumed so far (summed over samplers and agents).
    pub global_step: u64,
    /// Pipeline stage this record belongs to.
    pub stage_index: usize,
    /// Loss components from the update, in emission order
    /// (`loss/total`, `loss/<kind>`, then per-kind diagnostics).
    pub losses: Vec<(String, f64)>,
    /// Episodes aggregated into this record.
    pub episodes: usize,
    /// Fraction of those episodes that met their success criterion.
    pub success_rate: Option<f64>,
    /// Mean episode reward per agent.
    pub mean_reward: Vec<f64>,
    /// Mean episode reward summed over agents.
    pub total_reward: Option<f64>,
    /// Mean episode length in steps.
    pub mean_length: Option<f64>,
    /// Mean success weighted by path length; present only when every
    /// episode in the window recorded a shortest path.
    pub mean_spl: Option<f64>,
    /// Task-specific episode counters, per-key means.
    pub extras: Vec<(String, f64)>,
    /// Seconds since the run started (not reproducible; absent from the
    /// columnar table).
    pub wall_clock_s: f64,
    /// Environment steps per wall-clock second (not reproducible).
    pub steps_per_second: f64,
}

/// Success weighted by path length over a set of episodes: failures
/// contribute 0, successes contribute `shortest / max(taken, shortest)`.
/// Every episode must have recorded a shortest path — tasks without a
/// navigation goal have no SPL.
pub fn spl(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Task("SPL over zero episodes is undefined".into()));
    }
    let mut sum = 0.0;
    for (i, result) in results.iter().enumerate() {
        let shortest = result.shortest_path.ok_or_else(|| {
            Error::Task(format!("episode {i} recorded no shortest path; SPL is undefined"))
        })?;
        if result.success {
            let denom = shortest.max(result.length);
            sum += if denom == 0 { 1.0 } else { shortest as f64 / denom as f64 };
        }
    }
    Ok(sum / results.len() as f64)
}

/// Aggregate statistics over a window of completed episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub success_rate: Option<f64>,
    pub mean_reward: Vec<f64>,
    pub total_reward: Option<f64>,
    pub mean_length: Option<f64>,
    /// Present only when every episode recorded a shortest path.
    pub mean_spl: Option<f64>,
    pub extras: Vec<(String, f64)>,
}

/// Reduces completed episodes to the statistics a [`MetricsRecord`] carries.
/// An empty slice produces an all-empty aggregate (windows between episode
/// completions are normal early in training).
pub fn aggregate_episodes(results: &[EpisodeResult]) -> EpisodeStats {
    if results.is_empty() {
        return EpisodeStats {
            episodes: 0,
            success_rate: None,
            mean_reward: Vec::new(),
            total_reward: None,
            mean_length: None,
            mean_spl: None,
            extras: Vec::new(),
        };
    }
    let n = results.len() as f64;
    let agents = results[0].rewards.len();
    let mut reward_sums = vec![0.0; agents];
    let mut successes = 0usize;
    let mut length_sum = 0usize;
    let mut extras: std::collections::BTreeMap<String, (f64, usize)> = Default::default();
    for result in results {
        successes += result.success as usize;
        length_sum += result.length;
        for (sum, r) in reward_sums.iter_mut().zip(&result.rewards) {
            *sum += r;
        }
        for (key, value) in &result.extras {
            let slot = extras.entry(key.clone()).or_insert((0.0, 0));
            slot.0 += value;
            slot.1 += 1;
        }
    }
    let mean_reward: Vec<f64> = reward_sums.iter().map(|s| s / n).collect();
    EpisodeStats {
        episodes: results.len(),
        success_rate: Some(successes as f64 / n),
        total_reward: Some(mean_reward.iter().sum()),
        mean_reward,
        mean_length: Some(length_sum as f64 / n),
        mean_spl: results.iter().all(|r| r.shortest_path.is_some()).then(|| {
            spl(results).expect("all episodes carry shortest paths")
        }),
        extras: extras.into_iter().map(|(k, (sum, c))| (k, sum / c as f64)).collect(),
    }
}

/// Run identity, written once at run start as `manifest.json`; together with
/// the code version and seed it pins the run for exact reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    /// Raw `KEY=VALUE` override strings, as given on the command line.
    pub overrides: Vec<String>,
    /// Crate version of the binary that produced the run.
    pub code_version: String,
    /// Scalar precision the run computes in (`"f32"` / `"f64"`).
    pub precision: String,
    /// Worker processes participating in the run.
    pub workers: usize,
    /// Unix seconds at run start.
    pub start_time_unix: u64,
    /// File layout under the output directory.
    pub layout: OutputLayout,
}

/// Relative paths of everything a run writes under its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLayout {
    pub manifest: String,
    pub metrics_jsonl: String,
    pub metrics_table: String,
    pub checkpoints_dir: String,
}

impl Default for OutputLayout {
    fn default() -> Self {
        Self {
            manifest: "manifest.json".into(),
            metrics_jsonl: "metrics.jsonl".into(),
            metrics_table: "metrics.tsv".into(),
            checkpoints_dir: "checkpoints".into(),
        }
    }
}

impl RunManifest {
    pub fn new(experiment: &str, seed: u64, overrides: &[String], precision: &str, workers: usize) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed,
            overrides: overrides.to_vec(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            precision: precision.to_string(),
            workers,
            start_time_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            layout: OutputLayout::default(),
        }
    }

    /// Writes `manifest.json` into the run directory (created if missing).
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        fs::create_dir_all(dir.join(&self.layout.checkpoints_dir))?;
        let path = dir.join(&self.layout.manifest);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("run manifest does not parse: {e}")))
    }
}

/// Streams records to `metrics.jsonl` (everything) and `metrics.tsv`
/// (deterministic columns only). Loss columns are fixed at construction —
/// pass the union of [`diagnostic_keys`] over the pipeline's stages; keys
/// outside that set still reach the JSON stream.
///
/// [`diagnostic_keys`]: crate::algo::LossKind::diagnostic_keys
pub struct MetricsWriter {
    jsonl: BufWriter<File>,
    table: BufWriter<File>,
    loss_columns: Vec<String>,
    reward_agents: usize,
    last_step: Option<u64>,
}

impl MetricsWriter {
    /// Opens both streams inside `dir` per `layout` and writes the table
    /// header. `reward_agents` fixes the per-agent reward column count.
    pub fn create(
        dir: &Path,
        layout: &OutputLayout,
        loss_columns: &[String],
        reward_agents: usize,
    ) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let jsonl = BufWriter::new(File::create(dir.join(&layout.metrics_jsonl))?);
        let mut table = BufWriter::new(File::create(dir.join(&layout.metrics_table))?);
        let mut header: Vec<String> = ["global_step", "stage_index", "episodes", "success_rate"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..reward_agents).map(|a| format!("reward_agent{a}")));
        header.push("total_reward".into());
        header.push("mean_length".into());
        header.push("mean_spl".into());
        header.extend(loss_columns.iter().cloned());
        writeln!(table, "{}", header.join("\t"))?;
        Ok(Self {
            jsonl,
            table,
            loss_columns: loss_columns.to_vec(),
            reward_agents,
            last_step: None,
        })
    }

    /// Appends one record to both streams. Global steps must strictly
    /// increase across records — a regression is a trainer bug.
    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if let Some(last) = self.last_step {
            assert!(
                record.global_step > last,
                "metrics: global step went from {last} to {} — records must strictly increase",
                record.global_step
            );
        }
        self.last_step = Some(record.global_step);

        serde_json::to_writer(&mut self.jsonl, record)?;
        self.jsonl.write_all(b"\n")?;

        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut cells = vec![
            record.global_step.to_string(),
            record.stage_index.to_string(),
            record.episodes.to_string(),
            opt(record.success_rate),
        ];
        for a in 0..self.reward_agents {
            cells.push(record.mean_reward.get(a).map(|v| v.to_string()).unwrap_or_default());
        }
        cells.push(opt(record.total_reward));
        cells.push(opt(record.mean_length));
        cells.push(opt(record.mean_spl));
        for column in &self.loss_columns {
            let value = record.losses.iter().find(|(k, _)| k == column).map(|&(_, v)| v);
            cells.push(opt(value));
        }
        writeln!(self.table, "{}", cells.join("\t"))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.jsonl.flush()?;
        self.table.flush()?;
        Ok(())
    }
}

/// Reads a `metrics.jsonl` stream back into records.
pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("metrics line does not parse: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(success: bool, length: usize, shortest: Option<usize>) -> EpisodeResult {
        EpisodeResult {
            success,
            length,
            rewards: vec![if success { 1.0 } else { 0.0 }],
            shortest_path: shortest,
            extras: Vec::new(),
        }
    }

    #[test]
    fn spl_matches_the_formula() {
        // Optimal success counts 1, a doubled path counts ½, failures 0.
        assert_eq!(spl(&[episode(true, 5, Some(5))]).unwrap(), 1.0);
        assert_eq!(spl(&[episode(true, 10, Some(5))]).unwrap(), 0.5);
        assert_eq!(
            spl(&[episode(false, 3, Some(3)), episode(false, 9, Some(2))]).unwrap(),
            0.0
        );
        let mixed = spl(&[
            episode(true, 5, Some(5)),
            episode(true, 10, Some(5)),
            episode(false, 64, Some(5)),
        ])
        .unwrap();
        assert!((mixed - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spl_requires_shortest_paths() {
        let err = spl(&[episode(true, 5, None)]).unwrap_err().to_string();
        assert!(err.contains("no shortest path"), "got: {err}");
        assert!(spl(&[]).is_err());
    }

    #[test]
    fn spl_never_exceeds_success_rate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(400);
        for _ in 0..200 {
            let episodes: Vec<EpisodeResult> = (0..rng.gen_range(1..8))
                .map(|_| {
                    episode(rng.gen_bool(0.5), rng.gen_range(1..30), Some(rng.gen_range(1..30)))
                })
                .collect();
            let spl = spl(&episodes).unwrap();
            let success =
                episodes.iter().filter(|e| e.success).count() as f64 / episodes.len() as f64;
            assert!((0.0..=1.0).contains(&spl));
            assert!(spl <= success + 1e-12, "spl {spl} exceeds success rate {success}");
        }
    }

    #[test]
    fn aggregation_covers_rewards_lengths_and_extras() {
        let mut a = episode(true, 4, Some(4));
        a.rewards = vec![1.0, 3.0];
        a.extras = vec![("captures".into(), 2.0)];
        let mut b = episode(false, 8, Some(2));
        b.rewards = vec![0.0, 1.0];
        b.extras = vec![("captures".into(), 0.0)];
        let stats = aggregate_episodes(&[a, b]);
        assert_eq!(stats.episodes, 2);
        assert_eq!(stats.success_rate, Some(0.5));
        assert_eq!(stats.mean_reward, vec![0.5, 2.0]);
        assert_eq!(stats.total_reward, Some(2.5));
        assert_eq!(stats.mean_length, Some(6.0));
        assert_eq!(stats.mean_spl, Some(0.5));
        assert_eq!(stats.extras, vec![("captures".into(), 1.0)]);

        let empty = aggregate_episodes(&[]);
        assert_eq!(empty.episodes, 0);
        assert_eq!(empty.success_rate, None);

        // One episode without a shortest path suppresses SPL, nothing else.
        let partial = aggregate_episodes(&[episode(true, 3, Some(3)), episode(true, 3, None)]);
        assert_eq!(partial.mean_spl, None);
        assert_eq!(partial.success_rate, Some(1.0));
    }

    fn record(step: u64, losses: Vec<(String, f64)>) -> MetricsRecord {
        MetricsRecord {
            global_step: step,
            stage_index: 0,
            losses,
            episodes: 2,
            success_rate: Some(0.5),
            mean_reward: vec![0.25],
            total_reward: Some(0.25),
            mean_length: Some(12.0),
            mean_spl: Some(0.4),
            extras: Vec::new(),
            wall_clock_s: 1.5,
            steps_per_second: 1000.0,
        }
    }

    #[test]
    fn jsonl_roundtrips_and_table_is_columnar() {
        let dir = tempfile::tempdir().unwrap();
        let layout = OutputLayout::default();
        let columns = vec!["loss/total".to_string(), "loss/ppo".to_string()];
        let mut writer = MetricsWriter::create(dir.path(), &layout, &columns, 1).unwrap();
        let r1 = record(128, vec![("loss/total".into(), 0.5), ("loss/ppo".into(), 0.5)]);
        let mut r2 = record(256, vec![("loss/total".into(), 0.25)]);
        r2.success_rate = None;
        r2.mean_spl = None;
        writer.write(&r1).unwrap();
        writer.write(&r2).unwrap();
        writer.flush().unwrap();

        let back = read_records(&dir.path().join(&layout.metrics_jsonl)).unwrap();
        assert_eq!(back, vec![r1, r2]);

        let table = std::fs::read_to_string(dir.path().join(&layout.metrics_table)).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("global_step\tstage_index\tepisodes\tsuccess_rate"));
        assert!(lines[0].ends_with("loss/total\tloss/ppo"));
        assert!(lines[1].starts_with("128\t0\t2\t0.5\t"));
        let r2_cells: Vec<&str> = lines[2].split('\t').collect();
        assert_eq!(r2_cells[0], "256");
        assert_eq!(r2_cells[3], "", "missing success rate leaves an empty cell");
        assert_eq!(r2_cells.last(), Some(&""), "missing loss column leaves an empty cell");
    }

    #[test]
    #[should_panic(expected = "strictly increase")]
    fn non_monotone_steps_panic() {
        let dir = tempfile::tempdir().unwrap();
        let layout = OutputLayout::default();
        let mut writer = MetricsWriter::create(dir.path(), &layout, &[], 1).unwrap();
        writer.write(&record(128, vec![])).unwrap();
        writer.write(&record(128, vec![])).unwrap();
    }

    #[test]
    fn manifest_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            RunManifest::new("stag_hunt", 7, &["env.g=3.0".to_string()], "f64", 2);
        let path = manifest.write(dir.path()).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, manifest);
        assert!(dir.path().join("checkpoints").is_dir());
    }
}
