//! Training checkpoints.
//!
//! A checkpoint holds everything a run needs to resume bit-compatibly in
//! 64-bit precision: model parameters, optimizer moments and update count,
//! the pipeline position (global step, stage index, step within the stage),
//! and the serialized collection / demo-batcher positions. Parameters and
//! moments use the manifest + little-endian blob encoding from
//! [`crate::tensor::params`]; the rest travels in a JSON header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::tensor::params::{decode_params, encode_params};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Bumped when the file layout changes; readers reject other versions.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

const MAGIC: &[u8; 4] = b"CKPT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    precision: String,
    global_step: u64,
    stage_index: usize,
    stage_step: u64,
    adam_updates: u64,
    collect: Option<serde_json::Value>,
    demo_batcher: Option<serde_json::Value>,
    param_bytes: usize,
    m_bytes: usize,
    v_bytes: usize,
}

/// A captured training position, ready to write or just loaded.
#[derive(Debug, Clone)]
pub struct Checkpoint<F: Scalar> {
    /// Environment steps consumed so far (summed over samplers and agents).
    pub global_step: u64,
    /// Stage being executed when the checkpoint was taken.
    pub stage_index: usize,
    /// Environment steps consumed within that stage.
    pub stage_step: u64,
    /// Optimizer updates applied so far (drives bias correction on resume).
    pub adam_updates: u64,
    /// Named model parameters, in the model's declared order.
    pub params: Vec<(String, Tensor<F>)>,
    /// First-moment estimates, aligned with `params`.
    pub adam_m: Vec<Vec<F>>,
    /// Second-moment estimates, aligned with `params`.
    pub adam_v: Vec<Vec<F>>,
    /// Serialized rollout-collection position (samplers, tasks, streams).
    pub collect: Option<serde_json::Value>,
    /// Serialized demo-batcher position, when the stage reads demos.
    pub demo_batcher: Option<serde_json::Value>,
}

impl<F: Scalar> Checkpoint<F> {
    /// Captures parameters and optimizer state from a live graph.
    ///
    /// `named` must list the graph's parameters in registration order (the
    /// contract of the model's parameter naming), since optimizer moments
    /// are stored per registration index.
    pub fn capture(
        g: &Graph<F>,
        named: &[(String, Var)],
        adam: &Adam<F>,
        global_step: u64,
        stage_index: usize,
        stage_step: u64,
    ) -> Self {
        let vars = g.param_vars();
        assert_eq!(
            vars,
            named.iter().map(|(_, v)| *v).collect::<Vec<_>>(),
            "checkpoint: named parameters must cover the graph's parameters in registration order"
        );
        let (m, v) = adam.moments();
        Self {
            global_step,
            stage_index,
            stage_step,
            adam_updates: adam.update_count(),
            params: named.iter().map(|(n, var)| (n.clone(), g.value(*var).clone())).collect(),
            adam_m: m.to_vec(),
            adam_v: v.to_vec(),
            collect: None,
            demo_batcher: None,
        }
    }

    /// Writes the checkpoint file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let refs: Vec<(String, &Tensor<F>)> =
            self.params.iter().map(|(n, t)| (n.clone(), t)).collect();
        let param_blob = encode_params(&refs);

        let flat = |data: &[F]| Tensor::new(&[data.len()], data.to_vec());
        let m_tensors: Vec<(String, Tensor<F>)> = self
            .params
            .iter()
            .zip(&self.adam_m)
            .map(|((n, _), m)| (n.clone(), flat(m)))
            .collect();
        let v_tensors: Vec<(String, Tensor<F>)> = self
            .params
            .iter()
            .zip(&self.adam_v)
            .map(|((n, _), v)| (n.clone(), flat(v)))
            .collect();
        let m_blob = encode_params(&m_tensors.iter().map(|(n, t)| (n.clone(), t)).collect::<Vec<_>>());
        let v_blob = encode_params(&v_tensors.iter().map(|(n, t)| (n.clone(), t)).collect::<Vec<_>>());

        let header = Header {
            precision: F::DTYPE.name().to_string(),
            global_step: self.global_step,
            stage_index: self.stage_index,
            stage_step: self.stage_step,
            adam_updates: self.adam_updates,
            collect: self.collect.clone(),
            demo_batcher: self.demo_batcher.clone(),
            param_bytes: param_blob.len(),
            m_bytes: m_blob.len(),
            v_bytes: v_blob.len(),
        };
        let header_json = serde_json::to_vec(&header)?;

        let mut out = Vec::with_capacity(
            12 + header_json.len() + param_blob.len() + m_blob.len() + v_blob.len(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&param_blob);
        out.extend_from_slice(&m_blob);
        out.extend_from_slice(&v_blob);
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a checkpoint file written by [`Checkpoint::save`] at the same
    /// precision and format version.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint(format!(
                "'{}' is not a checkpoint file",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint is format v{version}, this build reads v{CHECKPOINT_FORMAT_VERSION}"
            )));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + header_len;
        if bytes.len() < body {
            return Err(Error::Checkpoint("checkpoint truncated inside its header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[12..body])
            .map_err(|e| Error::Checkpoint(format!("checkpoint header does not parse: {e}")))?;
        if header.precision != F::DTYPE.name() {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores {} parameters, this run uses {}",
                header.precision,
                F::DTYPE.name()
            )));
        }
        let expect = body + header.param_bytes + header.m_bytes + header.v_bytes;
        if bytes.len() < expect {
            return Err(Error::Checkpoint(format!(
                "checkpoint truncated: {} bytes, header promises {}",
                bytes.len(),
                expect
            )));
        }
        let params = decode_params::<F>(&bytes[body..body + header.param_bytes])?;
        let m_start = body + header.param_bytes;
        let m = decode_params::<F>(&bytes[m_start..m_start + header.m_bytes])?;
        let v_start = m_start + header.m_bytes;
        let v = decode_params::<F>(&bytes[v_start..v_start + header.v_bytes])?;

        let check_aligned = |kind: &str, got: &[(String, Tensor<F>)]| -> Result<()> {
            if got.len() != params.len()
                || got.iter().zip(&params).any(|((a, _), (b, _))| a != b)
            {
                return Err(Error::Checkpoint(format!(
                    "checkpoint {kind} moments do not align with its parameters"
                )));
            }
            Ok(())
        };
        check_aligned("first", &m)?;
        check_aligned("second", &v)?;

        Ok(Self {
            global_step: header.global_step,
            stage_index: header.stage_index,
            stage_step: header.stage_step,
            adam_updates: header.adam_updates,
            params,
            adam_m: m.into_iter().map(|(_, t)| t.data().to_vec()).collect(),
            adam_v: v.into_iter().map(|(_, t)| t.data().to_vec()).collect(),
            collect: header.collect,
            demo_batcher: header.demo_batcher,
        })
    }

    /// Copies the stored parameters into a freshly built model's graph.
    /// Names and shapes must match exactly — a mismatch names the parameter
    /// and both shapes.
    pub fn restore_model(&self, g: &mut Graph<F>, named: &[(String, Var)]) -> Result<()> {
        if self.params.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, the model declares {}",
                self.params.len(),
                named.len()
            )));
        }
        for ((stored_name, tensor), (name, var)) in self.params.iter().zip(named) {
            if stored_name != name {
                return Err(Error::Checkpoint(format!(
                    "checkpoint parameter '{stored_name}' does not match the model's '{name}'"
                )));
            }
            if tensor.shape() != g.value(*var).shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' has shape {:?} in the checkpoint but {:?} in the model",
                    tensor.shape(),
                    g.value(*var).shape()
                )));
            }
            g.param_data_mut(*var).copy_from_slice(tensor.data());
        }
        Ok(())
    }

    /// Copies the stored moments and update count into an optimizer built
    /// over the restored graph.
    pub fn restore_optimizer(&self, adam: &mut Adam<F>) -> Result<()> {
        let (m, v) = adam.moments_mut();
        if m.len() != self.adam_m.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds moments for {} parameters, the optimizer tracks {}",
                self.adam_m.len(),
                m.len()
            )));
        }
        for (i, (slot, stored)) in m.iter_mut().zip(&self.adam_m).enumerate() {
            if slot.len() != stored.len() {
                return Err(Error::Checkpoint(format!(
                    "moment {i} sized {} in the checkpoint but {} in the optimizer",
                    stored.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(stored);
        }
        for (slot, stored) in v.iter_mut().zip(&self.adam_v) {
            slot.copy_from_slice(stored);
        }
        adam.set_update_count(self.adam_updates);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::AdamConfig;

    fn toy_graph() -> (Graph<f64>, Vec<(String, Var)>) {
        let mut g: Graph<f64> = Graph::new();
        let w = g.param(Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, -0.125]));
        let b = g.param(Tensor::new(&[1, 2], vec![0.0, 7.0]));
        (g, vec![("head.w".into(), w), ("head.b".into(), b)])
    }

    fn toy_checkpoint() -> Checkpoint<f64> {
        let (g, named) = toy_graph();
        let adam = Adam::new(AdamConfig::with_lr(1e-3), &g).unwrap();
        let mut ckpt = Checkpoint::capture(&g, &named, &adam, 2048, 1, 512);
        ckpt.adam_m[0][2] = 0.75;
        ckpt.adam_v[1][1] = 1.5;
        ckpt.adam_updates = 16;
        ckpt.collect = Some(serde_json::json!({"masks": [1.0, 0.0]}));
        ckpt
    }

    #[test]
    fn save_load_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("step2048.ckpt");
        let ckpt = toy_checkpoint();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::<f64>::load(&path).unwrap();

        assert_eq!(back.global_step, 2048);
        assert_eq!(back.stage_index, 1);
        assert_eq!(back.stage_step, 512);
        assert_eq!(back.adam_updates, 16);
        assert_eq!(back.collect, ckpt.collect);
        assert_eq!(back.demo_batcher, None);
        for ((n1, t1), (n2, t2)) in ckpt.params.iter().zip(&back.params) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_eq!(back.adam_m, ckpt.adam_m);
        assert_eq!(back.adam_v, ckpt.adam_v);
    }

    #[test]
    fn restore_writes_params_moments_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resume.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let ckpt = Checkpoint::<f64>::load(&path).unwrap();

        let (mut g, named) = toy_graph();
        g.param_data_mut(named[0].1)[0] = -999.0;
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &g).unwrap();
        ckpt.restore_model(&mut g, &named).unwrap();
        ckpt.restore_optimizer(&mut adam).unwrap();

        assert_eq!(g.value(named[0].1).data()[0], 1.0, "parameter restored over the edit");
        assert_eq!(adam.update_count(), 16);
        assert_eq!(adam.moments().0[0][2], 0.75);
        assert_eq!(adam.moments().1[1][1], 1.5);
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = Checkpoint::<f64>::load(&path).unwrap_err().to_string();
        assert!(err.contains("v7") && err.contains("v1"), "got: {err}");
    }

    #[test]
    fn shape_mismatch_names_parameter_and_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shape.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let ckpt = Checkpoint::<f64>::load(&path).unwrap();

        let mut g: Graph<f64> = Graph::new();
        let w = g.param(Tensor::zeros(&[3, 2]));
        let b = g.param(Tensor::zeros(&[1, 2]));
        let named = vec![("head.w".to_string(), w), ("head.b".to_string(), b)];
        let err = ckpt.restore_model(&mut g, &named).unwrap_err().to_string();
        assert!(err.contains("head.w") && err.contains("[2, 3]") && err.contains("[3, 2]"), "got: {err}");
    }

    #[test]
    fn renamed_parameter_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("name.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let ckpt = Checkpoint::<f64>::load(&path).unwrap();

        let mut g: Graph<f64> = Graph::new();
        let w = g.param(Tensor::zeros(&[2, 3]));
        let b = g.param(Tensor::zeros(&[1, 2]));
        let named = vec![("trunk.w".to_string(), w), ("head.b".to_string(), b)];
        let err = ckpt.restore_model(&mut g, &named).unwrap_err().to_string();
        assert!(err.contains("head.w") && err.contains("trunk.w"), "got: {err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = Checkpoint::<f64>::load(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "got: {err}");
    }

    #[test]
    fn wrong_precision_is_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prec.ckpt");
        toy_checkpoint().save(&path).unwrap();
        let err = Checkpoint::<f32>::load(&path).unwrap_err().to_string();
        assert!(err.contains("f64") && err.contains("f32"), "got: {err}");
    }
}
