//! Demonstration datasets: recording scripted experts, a binary on-disk
//! format, and batching stored trajectories into supervised updates.
//!
//! A dataset is a list of trajectories, each a sequence of
//! (observation, expert action) pairs sharing one sensor schema. The file
//! format round-trips bit-exactly: integer codes are stored verbatim, so a
//! saved dataset reloads equal to the original.
//!
//! [`DemoBatcher`] replays a dataset as fixed-geometry supervised batches
//! with the same time-major tensor layout as on-policy rollouts, so the
//! cloning loss applies unchanged. Within one pass over the dataset every
//! trajectory is visited exactly once; a new pass begins only after the
//! previous one has fully drained (tail rows are padded with weight 0), and
//! each pass is reshuffled.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::spaces::{IntTensor, ObsBatch, Observation, SensorSpec};
use crate::framework::task::TaskSampler;
use crate::tensor::Scalar;

/// File format version; bumped on any layout change.
const FORMAT_VERSION: u32 = 1;
/// Leading file bytes identifying a demonstration dataset.
const MAGIC: &[u8; 4] = b"DEMO";

/// One recorded step: what the expert saw and what it did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoStep {
    pub obs: Observation,
    pub action: usize,
}

/// One expert episode, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DemoTrajectory {
    pub steps: Vec<DemoStep>,
}

impl DemoTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// JSON header embedded in the file: everything needed to validate a
/// consumer against the recorded data.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    sensors: Vec<SensorSpec>,
    action_count: usize,
    trajectories: usize,
}

/// An in-memory demonstration dataset with a fixed sensor schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    sensors: Vec<SensorSpec>,
    action_count: usize,
    trajectories: Vec<DemoTrajectory>,
}

impl DemoDataset {
    pub fn new(sensors: Vec<SensorSpec>, action_count: usize) -> Self {
        assert!(!sensors.is_empty(), "demo dataset: at least one sensor required");
        assert!(action_count > 0, "demo dataset: action_count must be positive");
        Self { sensors, action_count, trajectories: Vec::new() }
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn trajectories(&self) -> &[DemoTrajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(DemoTrajectory::len).sum()
    }

    /// Appends a trajectory after checking it against the schema.
    pub fn push(&mut self, traj: DemoTrajectory) -> Result<()> {
        if traj.is_empty() {
            return Err(Error::Demos("refusing to store an empty trajectory".into()));
        }
        for (t, step) in traj.steps.iter().enumerate() {
            if step.action >= self.action_count {
                return Err(Error::Demos(format!(
                    "trajectory step {t}: action {} out of range for {} actions",
                    step.action, self.action_count
                )));
            }
            if step.obs.len() != self.sensors.len() {
                return Err(Error::Demos(format!(
                    "trajectory step {t}: {} sensors present, schema declares {}",
                    step.obs.len(),
                    self.sensors.len()
                )));
            }
            for spec in &self.sensors {
                let reading = step.obs.get(&spec.id).ok_or_else(|| {
                    Error::Demos(format!("trajectory step {t}: sensor '{}' missing", spec.id))
                })?;
                spec.validate(reading)
                    .map_err(|e| Error::Demos(format!("trajectory step {t}: {e}")))?;
            }
        }
        self.trajectories.push(traj);
        Ok(())
    }

    /// Writes the dataset. Layout: magic, version, header length, JSON
    /// header, then per trajectory a step count followed by per-step sensor
    /// codes (schema order, little-endian u16) and the action (u32).
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            sensors: self.sensors.clone(),
            action_count: self.action_count,
            trajectories: self.trajectories.len(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + header_json.len() + self.total_steps() * 64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&u32::try_from(header_json.len()).expect("header fits u32").to_le_bytes());
        buf.extend_from_slice(&header_json);
        for traj in &self.trajectories {
            buf.extend_from_slice(&u32::try_from(traj.len()).expect("trajectory fits u32").to_le_bytes());
            for step in &traj.steps {
                for spec in &self.sensors {
                    for &code in step.obs[&spec.id].data() {
                        buf.extend_from_slice(&code.to_le_bytes());
                    }
                }
                buf.extend_from_slice(
                    &u32::try_from(step.action).expect("action fits u32").to_le_bytes(),
                );
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    /// Reads a dataset back; any corruption fails with the file offset of
    /// the offending bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path)?;
        let mut r = ByteReader { buf: &buf, pos: 0 };

        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Demos(format!(
                "not a demonstration dataset: bad magic {magic:?} at offset 0"
            )));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Demos(format!(
                "unsupported demo format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let header_len = r.u32("header length")? as usize;
        let header_off = r.pos;
        let header_bytes = r.take(header_len, "header")?;
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| {
            Error::Demos(format!("corrupt header at offset {header_off}: {e}"))
        })?;

        let mut dataset = DemoDataset::new(header.sensors, header.action_count);
        for i in 0..header.trajectories {
            let traj_off = r.pos;
            let steps = r.u32(&format!("trajectory {i} step count"))? as usize;
            if steps == 0 {
                return Err(Error::Demos(format!(
                    "trajectory {i} at offset {traj_off} has zero steps"
                )));
            }
            let mut traj = DemoTrajectory::default();
            for t in 0..steps {
                let step_off = r.pos;
                let mut obs = Observation::new();
                for spec in dataset.sensors.clone() {
                    let n = spec.numel();
                    let bytes = r.take(2 * n, &format!("trajectory {i} step {t} sensor '{}'", spec.id))?;
                    let codes: Vec<u16> = bytes
                        .chunks_exact(2)
                        .map(|b| u16::from_le_bytes([b[0], b[1]]))
                        .collect();
                    let reading = IntTensor::new(&spec.shape, codes);
                    spec.validate(&reading).map_err(|e| {
                        Error::Demos(format!("corrupt record at offset {step_off}: {e}"))
                    })?;
                    obs.insert(spec.id.clone(), reading);
                }
                let action = r.u32(&format!("trajectory {i} step {t} action"))? as usize;
                if action >= dataset.action_count {
                    return Err(Error::Demos(format!(
                        "corrupt record at offset {step_off}: action {action} out of range for {} actions",
                        dataset.action_count
                    )));
                }
                traj.steps.push(DemoStep { obs, action });
            }
            dataset.trajectories.push(traj);
        }
        if r.pos != buf.len() {
            return Err(Error::Demos(format!(
                "{} trailing bytes at offset {} after the last trajectory",
                buf.len() - r.pos,
                r.pos
            )));
        }
        Ok(dataset)
    }
}

/// Byte cursor that reports the failing offset on truncation.
struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Demos(format!(
                "file truncated at offset {}: {what} needs {n} bytes, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Rolls out a task sampler's scripted expert for `episodes` episodes and
/// records every (observation, expert action) pair.
///
/// Single-agent only: multi-agent tasks in this crate have no scripted
/// expert. Fails if a task provides no expert or the sampler runs dry.
pub fn collect_demos(sampler: &mut dyn TaskSampler, episodes: usize) -> Result<DemoDataset> {
    let mut dataset: Option<DemoDataset> = None;
    for episode in 0..episodes {
        let mut task = sampler.next_task().ok_or_else(|| {
            Error::Demos(format!("sampler exhausted after {episode} of {episodes} episodes"))
        })?;
        if task.num_agents() != 1 {
            return Err(Error::Demos(format!(
                "demonstration recording drives one agent, task has {}",
                task.num_agents()
            )));
        }
        let dataset = dataset
            .get_or_insert_with(|| DemoDataset::new(task.observation_specs(), task.action_count()));
        let mut traj = DemoTrajectory::default();
        while !task.is_done() {
            let obs = task.observe().swap_remove(0);
            let action = task
                .expert_actions()
                .ok_or_else(|| Error::Demos("task provides no expert to record".into()))?[0];
            traj.steps.push(DemoStep { obs, action });
            task.step(&[action])?;
        }
        dataset.push(traj)?;
    }
    dataset.ok_or_else(|| Error::Demos("cannot record a dataset of zero episodes".into()))
}

/// One supervised batch shaped like an on-policy rollout window: time-major
/// rows `t·W + w` over `T` steps of `W` parallel replay streams.
#[derive(Debug, Clone)]
pub struct DemoBatch<F> {
    /// Stacked observations per step, each `[W]` rows.
    pub obs_seq: Vec<ObsBatch>,
    /// Expert labels per row (0 on padding).
    pub expert_actions: Vec<usize>,
    /// Recurrence masks per row: 0 where a row starts a new trajectory or
    /// pads, 1 where it continues the stream's current trajectory.
    pub masks: Vec<F>,
    /// Row validity: 1 on real steps, 0 on padding.
    pub weights: Vec<F>,
}

impl<F> DemoBatch<F> {
    pub fn steps(&self) -> usize {
        self.obs_seq.len()
    }

    pub fn streams(&self) -> usize {
        self.obs_seq.first().map_or(0, ObsBatch::rows)
    }
}

/// Serializable replay position (the dataset itself is reloaded from file).
#[derive(Debug, Serialize, Deserialize)]
struct BatcherSnapshot {
    rng: ChaCha8Rng,
    queue: Vec<usize>,
    cursor: Vec<Option<(usize, usize)>>,
    passes: u64,
}

/// Streams a [`DemoDataset`] as an endless sequence of [`DemoBatch`]es.
///
/// `W` streams each play one trajectory at a time, pulling the next id from
/// a shuffled queue. When the queue drains, finished streams pad with
/// weight-0 rows until every stream drains too; only then does the next
/// pass begin (reshuffled), so no trajectory repeats within a pass.
pub struct DemoBatcher<F: Scalar> {
    dataset: Arc<DemoDataset>,
    streams: usize,
    horizon: usize,
    rng: ChaCha8Rng,
    /// Trajectory ids remaining in this pass, consumed from the back.
    queue: Vec<usize>,
    /// Per stream: (trajectory id, next step) or idle.
    cursor: Vec<Option<(usize, usize)>>,
    /// Completed passes over the dataset.
    passes: u64,
    /// All-zero observation used for padding rows.
    padding: Observation,
    _precision: std::marker::PhantomData<F>,
}

impl<F: Scalar> DemoBatcher<F> {
    pub fn new(dataset: Arc<DemoDataset>, streams: usize, horizon: usize, seed: u64) -> Self {
        assert!(streams > 0, "demo batcher: need at least one stream");
        assert!(horizon > 0, "demo batcher: need at least one step per batch");
        assert!(!dataset.is_empty(), "demo batcher: dataset has no trajectories");
        let mut padding = Observation::new();
        for spec in dataset.sensors() {
            padding.insert(spec.id.clone(), IntTensor::zeros(&spec.shape));
        }
        let mut out = Self {
            dataset,
            streams,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: Vec::new(),
            cursor: vec![None; streams],
            passes: 0,
            padding,
            _precision: std::marker::PhantomData,
        };
        out.refill();
        out
    }

    /// Completed passes over the dataset.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    fn refill(&mut self) {
        self.queue = (0..self.dataset.len()).collect();
        self.queue.shuffle(&mut self.rng);
    }

    /// Builds the next `T × W` supervised batch.
    pub fn next_batch(&mut self) -> DemoBatch<F> {
        let rows = self.horizon * self.streams;
        let mut obs_seq = Vec::with_capacity(self.horizon);
        let mut expert_actions = Vec::with_capacity(rows);
        let mut masks = Vec::with_capacity(rows);
        let mut weights = Vec::with_capacity(rows);
        for _ in 0..self.horizon {
            let mut step_obs: Vec<&Observation> = Vec::with_capacity(self.streams);
            for w in 0..self.streams {
                if self.cursor[w].is_none() {
                    if let Some(id) = self.queue.pop() {
                        self.cursor[w] = Some((id, 0));
                    }
                }
                match self.cursor[w] {
                    None => {
                        step_obs.push(&self.padding);
                        expert_actions.push(0);
                        masks.push(F::zero());
                        weights.push(F::zero());
                    }
                    Some((id, k)) => {
                        let traj = &self.dataset.trajectories()[id];
                        let step = &traj.steps[k];
                        step_obs.push(&step.obs);
                        expert_actions.push(step.action);
                        masks.push(if k == 0 { F::zero() } else { F::one() });
                        weights.push(F::one());
                        self.cursor[w] = if k + 1 < traj.len() { Some((id, k + 1)) } else { None };
                    }
                }
            }
            obs_seq.push(ObsBatch::stack(&step_obs));
        }
        // A pass completes only at a batch boundary, with every stream
        // drained; refilling here keeps each batch within a single pass.
        if self.queue.is_empty() && self.cursor.iter().all(Option::is_none) {
            self.passes += 1;
            self.refill();
        }
        DemoBatch { obs_seq, expert_actions, masks, weights }
    }

    /// Replay position for checkpoints; the dataset is not serialized.
    pub fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(BatcherSnapshot {
            rng: self.rng.clone(),
            queue: self.queue.clone(),
            cursor: self.cursor.clone(),
            passes: self.passes,
        })
        .expect("demo batcher state serializes")
    }

    pub fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let snap: BatcherSnapshot = serde_json::from_value(state.clone())
            .map_err(|e| Error::Checkpoint(format!("demo batcher state does not parse: {e}")))?;
        if snap.cursor.len() != self.streams {
            return Err(Error::Checkpoint(format!(
                "demo batcher state has {} streams, this run uses {}",
                snap.cursor.len(),
                self.streams
            )));
        }
        let positions = snap
            .cursor
            .iter()
            .flatten()
            .copied()
            .chain(snap.queue.iter().map(|&id| (id, 0)));
        for (id, k) in positions {
            if id >= self.dataset.len() {
                return Err(Error::Checkpoint(format!(
                    "demo batcher state references trajectory {id}, dataset has {}",
                    self.dataset.len()
                )));
            }
            let len = self.dataset.trajectories()[id].len();
            if k >= len {
                return Err(Error::Checkpoint(format!(
                    "demo batcher state references step {k} of trajectory {id} (length {len})"
                )));
            }
        }
        self.rng = snap.rng;
        self.queue = snap.queue;
        self.cursor = snap.cursor;
        self.passes = snap.passes;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::spaces::ChannelLayout;
    use crate::framework::task::{Mode, TaskSamplerSpec};
    use crate::grids::GoToLocalSampler;

    /// Dataset with one `[1]`-shaped sensor whose code names the trajectory,
    /// making replay order observable: trajectory `i` has `lens[i]` steps,
    /// every step reading `[i]` with action `i % actions`.
    fn labeled_dataset(lens: &[usize], actions: usize) -> DemoDataset {
        let spec = SensorSpec::new("id", &[1], ChannelLayout::Uniform(lens.len().max(2)));
        let mut ds = DemoDataset::new(vec![spec], actions);
        for (i, &len) in lens.iter().enumerate() {
            let mut traj = DemoTrajectory::default();
            for _ in 0..len {
                let mut obs = Observation::new();
                obs.insert("id".into(), IntTensor::new(&[1], vec![i as u16]));
                traj.steps.push(DemoStep { obs, action: i % actions });
            }
            ds.push(traj).unwrap();
        }
        ds
    }

    fn gotolocal_sampler(seed: u64) -> GoToLocalSampler {
        GoToLocalSampler::new(&TaskSamplerSpec::new(seed, Mode::Train), 6, 4)
    }

    #[test]
    fn expert_recording_round_trips_bit_exactly() {
        let mut sampler = gotolocal_sampler(11);
        let recorded = collect_demos(&mut sampler, 5).unwrap();
        assert_eq!(recorded.len(), 5);
        assert!(recorded.trajectories().iter().all(|t| t.len() >= 1 && t.len() <= 64));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("expert.demos");
        recorded.save(&path).unwrap();
        let loaded = DemoDataset::load(&path).unwrap();
        assert_eq!(recorded, loaded, "save → load must reproduce the dataset exactly");
    }

    #[test]
    fn truncated_file_reports_the_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.demos");
        labeled_dataset(&[3, 2], 2).save(&path).unwrap();
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() - 3]).unwrap();
        let err = DemoDataset::load(&path).unwrap_err().to_string();
        assert!(
            err.contains("truncated at offset"),
            "truncation must name the failing offset: {err}"
        );
    }

    #[test]
    fn corrupt_code_reports_the_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.demos");
        let ds = labeled_dataset(&[2], 2);
        ds.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Last 6 bytes: final step = one u16 code + u32 action. Blow out the
        // code (vocabulary is 2).
        let code_off = bytes.len() - 6;
        bytes[code_off..code_off + 2].copy_from_slice(&999u16.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = DemoDataset::load(&path).unwrap_err().to_string();
        assert!(err.contains(&format!("offset {code_off}")), "expected offset {code_off}: {err}");
        assert!(err.contains("exceeds vocabulary"), "expected a vocabulary error: {err}");
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.demos");
        labeled_dataset(&[1], 2).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = DemoDataset::load(&path).unwrap_err().to_string();
        assert!(err.contains('7') && err.contains('1'), "must name both versions: {err}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noise.bin");
        fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        let err = DemoDataset::load(&path).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "unexpected error: {err}");
    }

    #[test]
    fn schema_violations_are_rejected_on_push() {
        let mut ds = labeled_dataset(&[1], 2);
        let mut obs = Observation::new();
        obs.insert("id".into(), IntTensor::new(&[2], vec![0, 0]));
        let traj = DemoTrajectory { steps: vec![DemoStep { obs, action: 0 }] };
        let err = ds.push(traj).unwrap_err().to_string();
        assert!(err.contains("shape"), "shape mismatch must be named: {err}");

        let mut obs = Observation::new();
        obs.insert("id".into(), IntTensor::new(&[1], vec![0]));
        let traj = DemoTrajectory { steps: vec![DemoStep { obs, action: 9 }] };
        let err = ds.push(traj).unwrap_err().to_string();
        assert!(err.contains("action 9"), "action overflow must be named: {err}");
    }

    #[test]
    fn each_pass_visits_every_trajectory_exactly_once() {
        let ds = Arc::new(labeled_dataset(&[3, 1, 4, 2, 2, 5, 1, 3], 3));
        let mut batcher: DemoBatcher<f64> = DemoBatcher::new(Arc::clone(&ds), 3, 4, 99);
        for pass in 0..3 {
            let mut seen_steps = vec![0usize; ds.len()];
            while batcher.passes() == pass {
                let batch = batcher.next_batch();
                for t in 0..batch.steps() {
                    let obs = &batch.obs_seq[t];
                    for w in 0..batch.streams() {
                        let row = t * batch.streams() + w;
                        if batch.weights[row] == 1.0 {
                            let id = obs.sensor("id").data()[w] as usize;
                            seen_steps[id] += 1;
                        } else {
                            assert_eq!(batch.masks[row], 0.0, "padding rows must reset state");
                        }
                    }
                }
            }
            for (id, &count) in seen_steps.iter().enumerate() {
                assert_eq!(
                    count,
                    ds.trajectories()[id].len(),
                    "pass {pass}: trajectory {id} replayed {count} steps, not its full length"
                );
            }
        }
    }

    #[test]
    fn passes_are_reshuffled() {
        let ds = Arc::new(labeled_dataset(&[1, 1, 1, 1, 1, 1, 1, 1, 1, 1], 2));
        // One stream, one-step batches: the replay order is the queue order.
        let mut batcher: DemoBatcher<f64> = DemoBatcher::new(ds, 1, 1, 5);
        let order = |batcher: &mut DemoBatcher<f64>| -> Vec<u16> {
            let pass = batcher.passes();
            let mut ids = Vec::new();
            while batcher.passes() == pass {
                let b = batcher.next_batch();
                if b.weights[0] == 1.0 {
                    ids.push(b.obs_seq[0].sensor("id").data()[0]);
                }
            }
            ids
        };
        let first = order(&mut batcher);
        let second = order(&mut batcher);
        assert_eq!(first.len(), 10);
        assert_eq!(second.len(), 10);
        assert_ne!(first, second, "consecutive passes should differ in order");
    }

    #[test]
    fn masks_are_zero_exactly_at_trajectory_starts() {
        let ds = Arc::new(labeled_dataset(&[3, 3], 2));
        let mut batcher: DemoBatcher<f64> = DemoBatcher::new(ds, 1, 6, 0);
        let batch = batcher.next_batch();
        // One stream plays both length-3 trajectories back to back.
        assert_eq!(batch.weights, vec![1.0; 6]);
        assert_eq!(batch.masks, vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn snapshot_restore_resumes_the_same_batch_stream() {
        let ds = Arc::new(labeled_dataset(&[2, 3, 1, 4, 2], 3));
        let mut a: DemoBatcher<f64> = DemoBatcher::new(Arc::clone(&ds), 2, 3, 7);
        a.next_batch();
        let snapshot = a.save_state();

        let mut b: DemoBatcher<f64> = DemoBatcher::new(ds, 2, 3, 1234);
        b.restore_state(&snapshot).unwrap();
        for _ in 0..6 {
            let ba = a.next_batch();
            let bb = b.next_batch();
            assert_eq!(ba.expert_actions, bb.expert_actions);
            assert_eq!(ba.masks, bb.masks);
            assert_eq!(ba.weights, bb.weights);
            assert_eq!(ba.obs_seq, bb.obs_seq);
        }
    }

    #[test]
    fn restore_rejects_a_mismatched_layout() {
        let ds = Arc::new(labeled_dataset(&[2, 2], 2));
        let a: DemoBatcher<f64> = DemoBatcher::new(Arc::clone(&ds), 2, 3, 7);
        let snapshot = a.save_state();
        let mut b: DemoBatcher<f64> = DemoBatcher::new(ds, 3, 3, 7);
        let err = b.restore_state(&snapshot).unwrap_err().to_string();
        assert!(err.contains("streams"), "stream-count mismatch must be named: {err}");
    }
}
