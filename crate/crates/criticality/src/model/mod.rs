//! Model contracts shared by every learning stage: flat parameter sets, the
//! feed-forward encoder, output heads, Adam, finite-difference gradient
//! checking, and the self-describing checkpoint container.

pub mod adam;
pub mod gradcheck;
pub mod heads;
pub mod mlp;
pub mod params;

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::Adam;
pub use gradcheck::grad_check;
pub use heads::{
    classifier_backward, classifier_forward, normalize_classifier, scalar_head_backward,
    scalar_head_forward, softmax, ClassifierKind,
};
pub use mlp::{mlp_backward, mlp_forward, Activation, MlpCache, MlpSpec};
pub use params::{BlockInfo, ParamSet};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"CRITCKPT";

/// Trained parameters plus everything needed to rebuild and audit the model.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub stage: String,
    /// Stage-specific architecture descriptor (serialized spec struct).
    pub arch: serde_json::Value,
    pub params: ParamSet,
    pub config_hash: Option<String>,
    pub metrics: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    stage: String,
    arch: serde_json::Value,
    blocks: Vec<BlockInfo>,
    config_hash: Option<String>,
    metrics: BTreeMap<String, String>,
    param_sha256: String,
}

fn param_bytes(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.len() * 8);
    for v in params.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn sha256_of(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Serialize a bundle. Two saves of the same bundle are byte-identical.
pub fn checkpoint_save(bundle: &ModelBundle, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let body = param_bytes(&bundle.params);
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        stage: bundle.stage.clone(),
        arch: bundle.arch.clone(),
        blocks: bundle.params.blocks().to_vec(),
        config_hash: bundle.config_hash.clone(),
        metrics: bundle.metrics.clone(),
        param_sha256: sha256_of(&body),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = fs::File::create(path)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    w.write_all(&body)?;
    Ok(())
}

/// Load and verify a checkpoint (magic, version, parameter checksum).
pub fn checkpoint_load(path: &Path) -> Result<ModelBundle> {
    let mut r = fs::File::open(path).map_err(|_| {
        Error::MissingPrerequisite(format!("checkpoint {}", path.display()))
    })?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Serde(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.display().to_string(),
            expected: CHECKPOINT_VERSION,
            actual: version,
        });
    }
    r.read_exact(&mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let actual = sha256_of(&body);
    if actual != header.param_sha256 {
        return Err(Error::ChecksumMismatch {
            path: path.display().to_string(),
            expected: header.param_sha256,
            actual,
        });
    }
    if body.len() % 8 != 0 {
        return Err(Error::Serde("parameter block is not f64-aligned".into()));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ParamSet::from_parts(header.blocks, data)?;
    Ok(ModelBundle {
        stage: header.stage,
        arch: header.arch,
        params,
        config_hash: header.config_hash,
        metrics: header.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> ModelBundle {
        let spec = MlpSpec::new(4, vec![6], 3);
        let mut params = spec.register(ParamSet::builder(), "bb").build();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        spec.init(&mut params, "bb", &mut rng);
        ModelBundle {
            stage: "stage1".into(),
            arch: serde_json::to_value(&spec).unwrap(),
            params,
            config_hash: Some("abc".into()),
            metrics: BTreeMap::from([("loss".to_string(), "0.5".to_string())]),
        }
    }

    #[test]
    fn round_trip_restores_everything() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        checkpoint_save(&b, &path).unwrap();
        let loaded = checkpoint_load(&path).unwrap();
        assert_eq!(loaded.stage, b.stage);
        assert_eq!(loaded.arch, b.arch);
        assert_eq!(loaded.params, b.params);
        assert_eq!(loaded.config_hash, b.config_hash);
        assert_eq!(loaded.metrics, b.metrics);
    }

    #[test]
    fn two_saves_are_byte_identical() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        checkpoint_save(&b, &p1).unwrap();
        checkpoint_save(&b, &p2).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn corrupted_parameters_fail_checksum() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        checkpoint_save(&b, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0xFF;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            checkpoint_load(&path),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn forward_outputs_identical_after_round_trip() {
        use ndarray::Array2;
        let b = bundle();
        let spec: MlpSpec = serde_json::from_value(b.arch.clone()).unwrap();
        let probe = Array2::from_shape_fn((8, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let before = mlp_forward(&spec, &b.params, "bb", &probe).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        checkpoint_save(&b, &path).unwrap();
        let loaded = checkpoint_load(&path).unwrap();
        let after = mlp_forward(&spec, &loaded.params, "bb", &probe).unwrap();
        assert_eq!(before.output(), after.output());
    }
}
