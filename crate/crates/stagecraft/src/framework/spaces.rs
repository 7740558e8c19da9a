//! Observation spaces: integer-coded sensor readings and their batching.
//!
//! Tasks describe the world to the agent through named sensors, each
//! producing a tensor of small integer codes (entity kinds, colors, word
//! tokens, ...). Models turn those codes into embeddings; nothing in this
//! module is differentiable. Keeping observations integer-coded makes them
//! cheap to store in rollout buffers and lets one model definition serve any
//! task whose sensors agree with the shapes it declares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Dense integer tensor, row-major, used for observations.
///
/// Codes are `u16`: large enough for every vocabulary in this crate (entity
/// kinds, colors, word tokens), small enough to keep buffers compact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntTensor {
    shape: Vec<usize>,
    data: Vec<u16>,
}

impl IntTensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: &[usize], data: Vec<u16>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "int tensor: data length {} does not match shape {:?} (expected {})",
            data.len(),
            shape,
            numel
        );
        Self { shape: shape.to_vec(), data }
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![0; shape.iter().product()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    /// Codes widened to `usize`, ready for embedding-table lookups.
    pub fn indices(&self) -> Vec<usize> {
        self.data.iter().map(|&c| c as usize).collect()
    }
}

/// Observation for one agent: named map from sensor id to its reading.
///
/// The key set and per-key shapes are fixed for the lifetime of an
/// experiment; [`ObsBatch::stack`] enforces this when batching.
pub type Observation = BTreeMap<String, IntTensor>;

/// How the integer codes of one sensor map onto embedding vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelLayout {
    /// Every element is a token from a single vocabulary of the given size
    /// (e.g. the words of an instruction).
    Uniform(usize),
    /// The innermost dimension cycles through these per-channel vocabulary
    /// sizes (e.g. a grid cell's kind/color/state triple); models typically
    /// sum the channel embeddings of each group.
    Interleaved(Vec<usize>),
}

impl ChannelLayout {
    /// Number of interleaved channels (1 for uniform layouts).
    pub fn channels(&self) -> usize {
        match self {
            ChannelLayout::Uniform(_) => 1,
            ChannelLayout::Interleaved(sizes) => sizes.len(),
        }
    }

    /// Upper bound (exclusive) for the code at channel position `c`.
    pub fn vocab(&self, c: usize) -> usize {
        match self {
            ChannelLayout::Uniform(v) => *v,
            ChannelLayout::Interleaved(sizes) => sizes[c % sizes.len()],
        }
    }
}

/// Declared contract for one sensor: id, per-observation shape, vocabularies.
///
/// Tasks advertise the sensors they produce; models advertise the sensors
/// they consume. Experiment construction fails unless the two agree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: String,
    pub shape: Vec<usize>,
    pub layout: ChannelLayout,
}

impl SensorSpec {
    pub fn new(id: &str, shape: &[usize], layout: ChannelLayout) -> Self {
        Self { id: id.to_string(), shape: shape.to_vec(), layout }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Checks a reading against this spec (shape and code ranges).
    pub fn validate(&self, reading: &IntTensor) -> Result<(), String> {
        if reading.shape() != &self.shape[..] {
            return Err(format!(
                "sensor '{}': reading shape {:?} does not match declared {:?}",
                self.id,
                reading.shape(),
                self.shape
            ));
        }
        let channels = self.layout.channels();
        for (i, &code) in reading.data().iter().enumerate() {
            let vocab = self.layout.vocab(i % channels);
            if code as usize >= vocab {
                return Err(format!(
                    "sensor '{}': code {} at element {} exceeds vocabulary {}",
                    self.id, code, i, vocab
                ));
            }
        }
        Ok(())
    }
}

/// A batch of observations stacked along a leading row dimension.
///
/// Each sensor's entry has shape `[rows, ...per-observation shape]` and the
/// same key set as every constituent observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsBatch {
    rows: usize,
    sensors: BTreeMap<String, IntTensor>,
}

impl ObsBatch {
    /// Stacks observations in order. Panics if key sets or shapes disagree,
    /// since that means a task broke its constant-schema invariant.
    pub fn stack(observations: &[&Observation]) -> Self {
        assert!(!observations.is_empty(), "observation batch: cannot stack zero observations");
        let first = observations[0];
        let mut sensors = BTreeMap::new();
        for (id, reading) in first {
            let per_obs = reading.numel();
            let mut data = Vec::with_capacity(per_obs * observations.len());
            for obs in observations {
                let r = obs.get(id).unwrap_or_else(|| {
                    panic!("observation batch: sensor '{id}' missing from a batched observation")
                });
                assert_eq!(
                    r.shape(),
                    reading.shape(),
                    "observation batch: sensor '{}' shape changed across the batch",
                    id
                );
                data.extend_from_slice(r.data());
            }
            let mut shape = vec![observations.len()];
            shape.extend_from_slice(reading.shape());
            sensors.insert(id.clone(), IntTensor::new(&shape, data));
        }
        for obs in observations {
            assert_eq!(
                obs.len(),
                first.len(),
                "observation batch: key sets differ across the batch"
            );
        }
        Self { rows: observations.len(), sensors }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// The stacked reading for one sensor.
    pub fn sensor(&self, id: &str) -> &IntTensor {
        self.sensors
            .get(id)
            .unwrap_or_else(|| panic!("observation batch: no sensor named '{id}'"))
    }

    pub fn sensor_ids(&self) -> impl Iterator<Item = &str> {
        self.sensors.keys().map(|s| s.as_str())
    }

    /// New batch keeping only the given rows, in the given order (used to
    /// carve sampler-aligned minibatches out of a collection).
    pub fn select_rows(&self, rows: &[usize]) -> ObsBatch {
        assert!(!rows.is_empty(), "observation batch: cannot select zero rows");
        let mut sensors = BTreeMap::new();
        for (id, stacked) in &self.sensors {
            let per_row = stacked.numel() / self.rows;
            let mut data = Vec::with_capacity(per_row * rows.len());
            for &r in rows {
                assert!(
                    r < self.rows,
                    "observation batch: row {r} out of bounds for {} rows",
                    self.rows
                );
                data.extend_from_slice(&stacked.data()[r * per_row..(r + 1) * per_row]);
            }
            let mut shape = stacked.shape().to_vec();
            shape[0] = rows.len();
            sensors.insert(id.clone(), IntTensor::new(&shape, data));
        }
        ObsBatch { rows: rows.len(), sensors }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(grid: Vec<u16>, words: Vec<u16>) -> Observation {
        let mut o = Observation::new();
        o.insert("grid".into(), IntTensor::new(&[2, 2], grid));
        o.insert("words".into(), IntTensor::new(&[3], words));
        o
    }

    #[test]
    fn stacking_concatenates_rows_in_order() {
        let a = obs(vec![1, 2, 3, 4], vec![9, 8, 7]);
        let b = obs(vec![5, 6, 7, 8], vec![1, 2, 3]);
        let batch = ObsBatch::stack(&[&a, &b]);
        assert_eq!(batch.rows(), 2);
        assert_eq!(batch.sensor("grid").shape(), &[2, 2, 2]);
        assert_eq!(batch.sensor("grid").data(), &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(batch.sensor("words").shape(), &[2, 3]);
        assert_eq!(batch.sensor("words").data(), &[9, 8, 7, 1, 2, 3]);
    }

    #[test]
    #[should_panic(expected = "shape changed")]
    fn stacking_rejects_shape_drift() {
        let a = obs(vec![1, 2, 3, 4], vec![9, 8, 7]);
        let mut b = Observation::new();
        b.insert("grid".into(), IntTensor::new(&[4], vec![5, 6, 7, 8]));
        b.insert("words".into(), IntTensor::new(&[3], vec![1, 2, 3]));
        ObsBatch::stack(&[&a, &b]);
    }

    #[test]
    fn selecting_rows_keeps_order_and_shape() {
        let a = obs(vec![1, 2, 3, 4], vec![9, 8, 7]);
        let b = obs(vec![5, 6, 7, 8], vec![1, 2, 3]);
        let c = obs(vec![0, 0, 0, 0], vec![4, 4, 4]);
        let batch = ObsBatch::stack(&[&a, &b, &c]);
        let picked = batch.select_rows(&[2, 0]);
        assert_eq!(picked.rows(), 2);
        assert_eq!(picked.sensor("grid").shape(), &[2, 2, 2]);
        assert_eq!(picked.sensor("grid").data(), &[0, 0, 0, 0, 1, 2, 3, 4]);
        assert_eq!(picked.sensor("words").data(), &[4, 4, 4, 9, 8, 7]);
    }

    #[test]
    fn spec_validation_checks_shape_and_vocabulary() {
        let spec = SensorSpec::new("grid", &[2, 2], ChannelLayout::Interleaved(vec![4, 3]));
        assert!(spec.validate(&IntTensor::new(&[2, 2], vec![3, 2, 0, 0])).is_ok());
        // Element 1 sits at channel 1 whose vocabulary is 3.
        let err = spec.validate(&IntTensor::new(&[2, 2], vec![0, 3, 0, 0])).unwrap_err();
        assert!(err.contains("exceeds vocabulary"), "unexpected message: {err}");
        let err = spec.validate(&IntTensor::new(&[4], vec![0, 0, 0, 0])).unwrap_err();
        assert!(err.contains("shape"), "unexpected message: {err}");
    }

    #[test]
    fn interleaved_layout_cycles_vocabularies() {
        let layout = ChannelLayout::Interleaved(vec![11, 6, 3]);
        assert_eq!(layout.channels(), 3);
        assert_eq!(layout.vocab(0), 11);
        assert_eq!(layout.vocab(4), 6);
        assert_eq!(layout.vocab(5), 3);
    }
}
