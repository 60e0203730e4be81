//! Labeled, history-windowed samples with P/N partition bookkeeping and
//! on-disk persistence.
//!
//! A sample is one (episode, step) pair. Its feature matrix is the window of
//! the `window_len` most recent states ending at the step, padded at the
//! episode start by repeating the first state. Its label is 1 iff the hazard
//! fires within `horizon` steps *after* the step. The event state of a
//! critical episode is the outcome being predicted, not a prediction point,
//! so it carries no sample of its own; it still appears in the episode record
//! and in stage-3 transitions.
//!
//! On disk a dataset is a directory: `records.jsonl` (one sample per line),
//! `episodes.jsonl` (raw trajectories), and `manifest.json` (generation
//! config, seed, counts, checksums). Loads verify checksums and relabel every
//! record from the raw episodes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvConfig, Episode};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Per-sample metadata; feature windows are materialized on demand from the
/// backing episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleMeta {
    pub episode: u32,
    pub step: u32,
    pub y: bool,
}

/// Interchange schema for one line of `records.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub episode_id: String,
    pub step: u32,
    pub x: Vec<f64>,
    pub y: u8,
    pub critical_episode: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub window_len: usize,
    pub horizon: usize,
    pub state_dim: usize,
    pub x_shape: [usize; 2],
    pub env: Option<EnvConfig>,
    pub seed: Option<u64>,
    pub n_episodes: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub imbalance_ratio: Option<f64>,
    pub provenance: String,
    pub config_hash: Option<String>,
    pub records_sha256: String,
    pub episodes_sha256: String,
}

/// Immutable labeled dataset. Episodes are shared (`Arc`) so filtered views
/// do not copy trajectories.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub episodes: Arc<Vec<Episode>>,
    pub samples: Vec<SampleMeta>,
    pub positives: Vec<u32>,
    pub negatives: Vec<u32>,
    pub window_len: usize,
    pub horizon: usize,
    pub state_dim: usize,
    pub env: Option<EnvConfig>,
    pub seed: Option<u64>,
    pub provenance: String,
    pub config_hash: Option<String>,
}

/// Copy the window ending at `step` of an episode into `out`
/// (row-major, oldest state first), repeating the first state as padding.
pub fn fill_window(episode: &Episode, step: usize, window_len: usize, out: &mut [f64]) {
    let d = episode.state_dim;
    debug_assert_eq!(out.len(), window_len * d);
    for row in 0..window_len {
        let back = window_len - 1 - row;
        let src = step.saturating_sub(back);
        out[row * d..(row + 1) * d].copy_from_slice(episode.state(src));
    }
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.window_len * self.state_dim
    }

    pub fn y(&self, idx: usize) -> bool {
        self.samples[idx].y
    }

    pub fn episode_of(&self, idx: usize) -> &Episode {
        &self.episodes[self.samples[idx].episode as usize]
    }

    pub fn is_critical_episode(&self, idx: usize) -> bool {
        self.episode_of(idx).critical
    }

    /// Feature window of one sample, `window_len x state_dim`.
    pub fn sample_x(&self, idx: usize) -> Array2<f64> {
        let m = &self.samples[idx];
        let ep = &self.episodes[m.episode as usize];
        let mut buf = vec![0.0; self.window_len * self.state_dim];
        fill_window(ep, m.step as usize, self.window_len, &mut buf);
        Array2::from_shape_vec((self.window_len, self.state_dim), buf).expect("window shape")
    }

    /// Flattened feature windows for a batch of sample indices,
    /// `len(idxs) x (window_len*state_dim)`.
    pub fn batch_x(&self, idxs: &[u32]) -> Array2<f64> {
        let dim = self.input_dim();
        let mut out = Array2::zeros((idxs.len(), dim));
        for (row, &i) in idxs.iter().enumerate() {
            let m = &self.samples[i as usize];
            let ep = &self.episodes[m.episode as usize];
            let slice = out
                .row_mut(row)
                .into_slice()
                .expect("contiguous batch row");
            fill_window(ep, m.step as usize, self.window_len, slice);
        }
        out
    }

    pub fn labels(&self, idxs: &[u32]) -> Vec<usize> {
        idxs.iter()
            .map(|&i| self.samples[i as usize].y as usize)
            .collect()
    }

    /// New view keeping only the given sample indices (episodes shared).
    pub fn subset(&self, keep: &[u32], provenance: String) -> LabeledDataset {
        let samples: Vec<SampleMeta> = keep.iter().map(|&i| self.samples[i as usize]).collect();
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if s.y {
                positives.push(i as u32);
            } else {
                negatives.push(i as u32);
            }
        }
        LabeledDataset {
            episodes: Arc::clone(&self.episodes),
            samples,
            positives,
            negatives,
            window_len: self.window_len,
            horizon: self.horizon,
            state_dim: self.state_dim,
            env: self.env.clone(),
            seed: self.seed,
            provenance,
            config_hash: self.config_hash.clone(),
        }
    }
}

/// Build the labeled dataset from episodes. One sample per operating step;
/// deterministic `(episode_id, step)` ordering.
pub fn build_dataset(
    mut episodes: Vec<Episode>,
    window_len: usize,
    horizon: usize,
) -> Result<LabeledDataset> {
    if episodes.is_empty() {
        return Err(Error::Usage("cannot build a dataset from zero episodes".into()));
    }
    if window_len < 1 || horizon < 1 {
        return Err(Error::Config("window_len and horizon must be >= 1".into()));
    }
    let state_dim = episodes[0].state_dim;
    if episodes.iter().any(|e| e.state_dim != state_dim) {
        return Err(Error::Integrity("episodes disagree on state_dim".into()));
    }
    episodes.sort_by(|a, b| a.id.cmp(&b.id));
    if episodes.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Integrity("duplicate episode ids".into()));
    }

    let mut samples = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (e_idx, ep) in episodes.iter().enumerate() {
        let n = ep.n_states();
        let n_samples = if ep.critical { n - 1 } else { n };
        let event_step = n - 1; // meaningful only when critical
        for step in 0..n_samples {
            let y = ep.critical && step + horizon >= event_step;
            let idx = samples.len() as u32;
            samples.push(SampleMeta {
                episode: e_idx as u32,
                step: step as u32,
                y,
            });
            if y {
                positives.push(idx);
            } else {
                negatives.push(idx);
            }
        }
    }

    Ok(LabeledDataset {
        episodes: Arc::new(episodes),
        samples,
        positives,
        negatives,
        window_len,
        horizon,
        state_dim,
        env: None,
        seed: None,
        provenance: "built".into(),
        config_hash: None,
    })
}

/// |N| / |P|. Never silently infinite.
pub fn imbalance_ratio(ds: &LabeledDataset) -> Result<f64> {
    if ds.positives.is_empty() {
        return Err(Error::UndefinedImbalance);
    }
    Ok(ds.negatives.len() as f64 / ds.positives.len() as f64)
}

/// Index over the episodes whose terminal state triggered the hazard.
#[derive(Debug, Clone)]
pub struct CriticalEpisodeIndex {
    pub episodes: Vec<Episode>,
    pub window_len: usize,
    pub state_dim: usize,
}

/// One raw transition of a critical episode; `next` is `None` at the terminal
/// event state, where the reward is 1.
#[derive(Debug, Clone, Copy)]
pub struct RawTransition<'a> {
    pub s: &'a [f64],
    pub a: &'a [f64],
    pub r: f64,
    pub next: Option<&'a [f64]>,
    pub step: usize,
}

impl CriticalEpisodeIndex {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Ordered (s, a, r, s') tuples of one indexed episode: n_states
    /// transitions, exactly one of them terminal with r = 1.
    pub fn raw_transitions(&self, i: usize) -> Vec<RawTransition<'_>> {
        let ep = &self.episodes[i];
        let n = ep.n_states();
        (0..n)
            .map(|k| RawTransition {
                s: ep.state(k),
                a: ep.action(k),
                r: if k == n - 1 { 1.0 } else { 0.0 },
                next: if k == n - 1 { None } else { Some(ep.state(k + 1)) },
                step: k,
            })
            .collect()
    }
}

/// Build the critical-episode index, verifying episodes against the dataset.
pub fn critical_episode_index(
    ds: &LabeledDataset,
    episodes: &[Episode],
) -> Result<CriticalEpisodeIndex> {
    if episodes.len() != ds.episodes.len() {
        return Err(Error::Integrity(format!(
            "dataset was built from {} episodes, got {}",
            ds.episodes.len(),
            episodes.len()
        )));
    }
    for (a, b) in ds.episodes.iter().zip(episodes) {
        if a.id != b.id || a.critical != b.critical || a.states != b.states {
            return Err(Error::Integrity(format!(
                "episode {} does not match the dataset manifest",
                b.id
            )));
        }
    }
    // Terminal sample of every critical episode must be positive.
    let mut last_sample_of: Vec<Option<u32>> = vec![None; ds.episodes.len()];
    for (i, s) in ds.samples.iter().enumerate() {
        last_sample_of[s.episode as usize] = Some(i as u32);
    }
    let mut critical = Vec::new();
    for (e_idx, ep) in episodes.iter().enumerate() {
        if !ep.critical {
            continue;
        }
        match last_sample_of[e_idx] {
            Some(idx) if ds.samples[idx as usize].y => {}
            Some(_) => {
                return Err(Error::Integrity(format!(
                    "critical episode {} lacks a positive terminal sample",
                    ep.id
                )))
            }
            None => {
                // a critical episode whose event fired at reset has no samples
            }
        }
        critical.push(ep.clone());
    }
    Ok(CriticalEpisodeIndex {
        episodes: critical,
        window_len: ds.window_len,
        state_dim: ds.state_dim,
    })
}

fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Write the dataset directory: records, episodes, manifest.
pub fn save(ds: &LabeledDataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let records_path = dir.join("records.jsonl");
    let episodes_path = dir.join("episodes.jsonl");

    {
        let mut w = BufWriter::new(fs::File::create(&records_path)?);
        let mut buf = vec![0.0f64; ds.window_len * ds.state_dim];
        for m in &ds.samples {
            let ep = &ds.episodes[m.episode as usize];
            fill_window(ep, m.step as usize, ds.window_len, &mut buf);
            let rec = SampleRecord {
                episode_id: ep.id.clone(),
                step: m.step,
                x: buf.clone(),
                y: m.y as u8,
                critical_episode: ep.critical,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    {
        let mut w = BufWriter::new(fs::File::create(&episodes_path)?);
        for ep in ds.episodes.iter() {
            serde_json::to_writer(&mut w, ep)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        window_len: ds.window_len,
        horizon: ds.horizon,
        state_dim: ds.state_dim,
        x_shape: [ds.window_len, ds.state_dim],
        env: ds.env.clone(),
        seed: ds.seed,
        n_episodes: ds.episodes.len(),
        n_pos: ds.positives.len(),
        n_neg: ds.negatives.len(),
        imbalance_ratio: imbalance_ratio(ds).ok(),
        provenance: ds.provenance.clone(),
        config_hash: ds.config_hash.clone(),
        records_sha256: sha256_hex(&records_path)?,
        episodes_sha256: sha256_hex(&episodes_path)?,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), manifest_json + "\n")?;
    Ok(manifest)
}

/// Load and fully re-validate a dataset directory.
pub fn load(dir: &Path) -> Result<LabeledDataset> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "dataset manifest {}",
            manifest_path.display()
        )));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: manifest_path.display().to_string(),
            expected: FORMAT_VERSION,
            actual: manifest.format_version,
        });
    }
    let records_path = dir.join("records.jsonl");
    let episodes_path = dir.join("episodes.jsonl");
    for (path, expected) in [
        (&records_path, &manifest.records_sha256),
        (&episodes_path, &manifest.episodes_sha256),
    ] {
        let actual = sha256_hex(path)?;
        if &actual != expected {
            return Err(Error::ChecksumMismatch {
                path: path.display().to_string(),
                expected: expected.clone(),
                actual,
            });
        }
    }

    let mut episodes: Vec<Episode> = Vec::new();
    for line in BufReader::new(fs::File::open(&episodes_path)?).lines() {
        episodes.push(serde_json::from_str(&line?)?);
    }
    let mut by_id = std::collections::HashMap::new();
    for (i, ep) in episodes.iter().enumerate() {
        by_id.insert(ep.id.clone(), i as u32);
    }

    let mut samples = Vec::new();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for line in BufReader::new(fs::File::open(&records_path)?).lines() {
        let rec: SampleRecord = serde_json::from_str(&line?)?;
        let &e_idx = by_id.get(&rec.episode_id).ok_or_else(|| {
            Error::Integrity(format!("record references unknown episode {}", rec.episode_id))
        })?;
        let ep = &episodes[e_idx as usize];
        let n = ep.n_states();
        let step = rec.step as usize;
        if step >= n {
            return Err(Error::Integrity(format!(
                "record step {} out of range for episode {}",
                step, rec.episode_id
            )));
        }
        let expect_y = ep.critical && step + manifest.horizon >= n - 1;
        if expect_y != (rec.y == 1) || rec.critical_episode != ep.critical {
            return Err(Error::Integrity(format!(
                "record label for {}:{} disagrees with relabeling from episodes",
                rec.episode_id, step
            )));
        }
        // Spot-check the stored window against the trajectory.
        let d = manifest.state_dim;
        if rec.x.len() != manifest.window_len * d
            || rec.x[(manifest.window_len - 1) * d..] != *ep.state(step)
        {
            return Err(Error::Integrity(format!(
                "record window for {}:{} disagrees with the episode trajectory",
                rec.episode_id, step
            )));
        }
        let idx = samples.len() as u32;
        samples.push(SampleMeta {
            episode: e_idx,
            step: rec.step,
            y: rec.y == 1,
        });
        if rec.y == 1 {
            positives.push(idx);
        } else {
            negatives.push(idx);
        }
    }
    if samples.len() != manifest.n_pos + manifest.n_neg
        || positives.len() != manifest.n_pos
        || negatives.len() != manifest.n_neg
    {
        return Err(Error::Integrity(
            "record counts disagree with the manifest".into(),
        ));
    }

    Ok(LabeledDataset {
        episodes: Arc::new(episodes),
        samples,
        positives,
        negatives,
        window_len: manifest.window_len,
        horizon: manifest.horizon,
        state_dim: manifest.state_dim,
        env: manifest.env,
        seed: manifest.seed,
        provenance: manifest.provenance,
        config_hash: manifest.config_hash,
    })
}
