//! Named-parameter serialization.
//!
//! A parameter blob is a textual manifest — one entry per tensor giving its
//! name, shape, scalar precision, and byte offset — followed by the raw
//! little-endian scalar data, concatenated in manifest order. Checkpoint
//! files embed these blobs, and distributed training broadcasts them; the
//! manifest's digest is what workers compare to confirm they built the same
//! model before exchanging gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Bumped when the blob layout changes; readers reject other versions.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

const MAGIC: &[u8; 4] = b"PRMS";

/// One manifest row: where a named tensor lives inside the data section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Scalar precision name (`"f32"` / `"f64"`).
    pub dtype: String,
    /// Byte offset of this tensor's first scalar within the data section.
    pub offset: usize,
}

/// Encodes named tensors as manifest + little-endian data.
pub fn encode_params<F: Scalar>(params: &[(String, &Tensor<F>)]) -> Vec<u8> {
    let width = F::DTYPE.byte_width();
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0usize;
    for (name, tensor) in params {
        entries.push(ParamEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            dtype: F::DTYPE.name().to_string(),
            offset,
        });
        offset += tensor.numel() * width;
    }
    let manifest = serde_json::to_vec(&entries).expect("manifest serializes");

    let mut out = Vec::with_capacity(4 + 4 + 4 + manifest.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&PARAMS_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    for (_, tensor) in params {
        for &x in tensor.data() {
            x.write_le(&mut out);
        }
    }
    out
}

fn split_blob(bytes: &[u8]) -> Result<(Vec<ParamEntry>, &[u8])> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("parameter blob has no recognizable header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PARAMS_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "parameter blob is format v{version}, this build reads v{PARAMS_FORMAT_VERSION}"
        )));
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let data_start = 12 + manifest_len;
    if bytes.len() < data_start {
        return Err(Error::Checkpoint("parameter blob truncated inside its manifest".into()));
    }
    let entries: Vec<ParamEntry> = serde_json::from_slice(&bytes[12..data_start])
        .map_err(|e| Error::Checkpoint(format!("parameter manifest does not parse: {e}")))?;
    Ok((entries, &bytes[data_start..]))
}

/// Reads back the manifest without touching the data section.
pub fn manifest_entries(bytes: &[u8]) -> Result<Vec<ParamEntry>> {
    split_blob(bytes).map(|(entries, _)| entries)
}

/// Decodes a blob produced by [`encode_params`] at the same precision.
/// Precision mismatches are rejected rather than converted: resuming in a
/// different precision would silently break bit-compatibility.
pub fn decode_params<F: Scalar>(bytes: &[u8]) -> Result<Vec<(String, Tensor<F>)>> {
    let (entries, data) = split_blob(bytes)?;
    let width = F::DTYPE.byte_width();
    let mut out = Vec::with_capacity(entries.len());
    for entry in entries {
        if entry.dtype != F::DTYPE.name() {
            return Err(Error::Checkpoint(format!(
                "parameter '{}' stored as {}, this run uses {}",
                entry.name,
                entry.dtype,
                F::DTYPE.name()
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel * width;
        if end > data.len() {
            return Err(Error::Checkpoint(format!(
                "parameter '{}' claims bytes {}..{} but the data section holds {}",
                entry.name,
                entry.offset,
                end,
                data.len()
            )));
        }
        let scalars: Vec<F> = data[entry.offset..end].chunks(width).map(F::read_le).collect();
        out.push((entry.name, Tensor::new(&entry.shape, scalars)));
    }
    Ok(out)
}

/// FNV-1a digest over raw bytes — the hash behind manifest and parameter
/// comparisons between workers.
pub fn bytes_digest(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Digest of the manifest (names, shapes, precisions, offsets).
/// Two processes that built the same model at the same precision agree on
/// it; anything else — renamed layer, resized table, other dtype — differs.
pub fn layout_digest(entries: &[ParamEntry]) -> u64 {
    bytes_digest(&serde_json::to_vec(entries).expect("manifest serializes"))
}

/// Digest of parameter *values* at this precision — equal digests mean
/// bitwise-equal parameters. Workers compare these periodically to detect
/// numerical divergence.
pub fn value_digest<F: Scalar>(params: &[(String, Tensor<F>)]) -> u64 {
    let mut bytes = Vec::new();
    for (name, tensor) in params {
        bytes.extend_from_slice(name.as_bytes());
        for &x in tensor.data() {
            x.write_le(&mut bytes);
        }
    }
    bytes_digest(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params() -> Vec<(String, Tensor<f64>)> {
        vec![
            ("embedding.table".into(), Tensor::new(&[3, 2], vec![0.5, -1.25, 3.0, 0.0, 7.5, -0.125])),
            ("head.b".into(), Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0])),
        ]
    }

    fn as_refs<F: Scalar>(params: &[(String, Tensor<F>)]) -> Vec<(String, &Tensor<F>)> {
        params.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    #[test]
    fn roundtrip_preserves_names_shapes_and_bits() {
        let params = sample_params();
        let blob = encode_params(&as_refs(&params));
        let back = decode_params::<f64>(&blob).unwrap();
        assert_eq!(back.len(), 2);
        for ((name, tensor), (back_name, back_tensor)) in params.iter().zip(&back) {
            assert_eq!(name, back_name);
            assert_eq!(tensor.shape(), back_tensor.shape());
            for (a, b) in tensor.data().iter().zip(back_tensor.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn roundtrip_works_in_single_precision() {
        let params: Vec<(String, Tensor<f32>)> =
            vec![("w".into(), Tensor::new(&[2, 2], vec![1.5f32, -2.5, 0.25, 1e-7]))];
        let blob = encode_params(&as_refs(&params));
        let back = decode_params::<f32>(&blob).unwrap();
        assert_eq!(back[0].1.data(), params[0].1.data());
    }

    #[test]
    fn offsets_accumulate_in_manifest_order() {
        let params = sample_params();
        let blob = encode_params(&as_refs(&params));
        let entries = manifest_entries(&blob).unwrap();
        assert_eq!(entries[0].offset, 0);
        assert_eq!(entries[1].offset, 6 * 8, "second tensor starts after six f64 scalars");
        assert_eq!(entries[1].dtype, "f64");
    }

    #[test]
    fn precision_mismatch_names_both_precisions() {
        let params: Vec<(String, Tensor<f32>)> =
            vec![("w".into(), Tensor::new(&[1, 1], vec![1.0f32]))];
        let blob = encode_params(&as_refs(&params));
        let err = decode_params::<f64>(&blob).unwrap_err().to_string();
        assert!(err.contains("f32") && err.contains("f64"), "got: {err}");
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let params = sample_params();
        let mut blob = encode_params(&as_refs(&params));
        blob[4..8].copy_from_slice(&99u32.to_le_bytes());
        let err = decode_params::<f64>(&blob).unwrap_err().to_string();
        assert!(err.contains("v99") && err.contains("v1"), "got: {err}");
    }

    #[test]
    fn truncated_data_is_rejected_by_name() {
        let params = sample_params();
        let blob = encode_params(&as_refs(&params));
        let err = decode_params::<f64>(&blob[..blob.len() - 8]).unwrap_err().to_string();
        assert!(err.contains("head.b"), "got: {err}");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_params::<f64>(b"not a parameter blob").is_err());
        assert!(decode_params::<f64>(b"PR").is_err());
    }

    #[test]
    fn digest_tracks_layout_not_values() {
        let a = sample_params();
        let mut b = sample_params();
        b[0].1.data_mut()[0] = 99.0;
        let da = layout_digest(&manifest_entries(&encode_params(&as_refs(&a))).unwrap());
        let db = layout_digest(&manifest_entries(&encode_params(&as_refs(&b))).unwrap());
        assert_eq!(da, db, "values must not affect the layout digest");

        let c: Vec<(String, Tensor<f64>)> =
            vec![("embedding.table".into(), Tensor::new(&[2, 3], vec![0.0; 6]))];
        let dc = layout_digest(&manifest_entries(&encode_params(&as_refs(&c))).unwrap());
        assert_ne!(da, dc, "shape changes must change the digest");
    }
}
