//! Synthetic episodic rare-event environment with an exactly computable
//! ground-truth criticality.
//!
//! Dynamics are linear and contracting under a scripted feedback policy:
//! `s' = A·s + u(s) + w` with `u(s) = -policy_gain·s` and `A = I + coupling·superdiag`,
//! so the closed loop is `s'_d = (1-policy_gain)·s_d + coupling·s_{d+1} + w_d`.
//! Per-dimension noise `w_d` is drawn i.i.d. from a finite support, which makes
//! the hazard probability within a finite horizon exactly enumerable.
//!
//! The hazard event fires when the position component `s[0]` reaches
//! `hazard_threshold`. Episodes start from a spread of initial states, so most
//! events are short early excursions and the bulk of the data is safe steady
//! behavior — rarity is tuned with `rarity_scale`, which scales both the noise
//! magnitudes and the initial spread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment parameters. All stochastic behavior is a pure function of
/// (config, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// State dimension; dimension 0 is the hazard-relevant position.
    pub state_dim: usize,
    /// Unscaled per-dimension noise support; effective values are scaled by `rarity_scale`.
    pub noise_support: Vec<f64>,
    /// Probability of each support entry; must sum to 1.
    pub noise_probs: Vec<f64>,
    /// Position level defining the hazard event.
    pub hazard_threshold: f64,
    /// Lookahead (steps) over which criticality is defined.
    pub horizon_h: usize,
    /// Scripted stabilizing feedback gain, in (0, 1).
    pub policy_gain: f64,
    /// Upper-triangular coupling of dimension d+1 into dimension d.
    pub coupling: f64,
    /// Maximum number of states per episode (truncation).
    pub episode_len_max: usize,
    /// Scales noise support and initial spread; the rarity tuning knob.
    pub rarity_scale: f64,
    /// Mean of the initial-state distribution, one entry per dimension.
    pub init_mean: Vec<f64>,
    /// Per-dimension half-width of the uniform initial distribution
    /// (scaled by `rarity_scale`).
    pub init_spread: Vec<f64>,
    /// Maximum number of noise sequences `|support|^(state_dim·horizon)` the
    /// exact oracle may enumerate.
    pub enumeration_budget: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            state_dim: 2,
            noise_support: vec![-0.16, 0.0, 0.16],
            noise_probs: vec![0.15, 0.70, 0.15],
            hazard_threshold: 1.0,
            horizon_h: 6,
            policy_gain: 0.2,
            coupling: 0.35,
            episode_len_max: 250,
            rarity_scale: 1.0,
            init_mean: vec![0.0, 0.0],
            init_spread: vec![0.55, 0.30],
            enumeration_budget: 10_000_000,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::Config("state_dim must be >= 1".into()));
        }
        if self.noise_support.is_empty() {
            return Err(Error::Config("noise_support must be non-empty".into()));
        }
        if self.noise_probs.len() != self.noise_support.len() {
            return Err(Error::Config(format!(
                "noise_probs has {} entries for {} support values",
                self.noise_probs.len(),
                self.noise_support.len()
            )));
        }
        if self.noise_probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Config("noise_probs entries must be >= 0".into()));
        }
        let total: f64 = self.noise_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "noise_probs must sum to 1 (got {total})"
            )));
        }
        if self.horizon_h < 1 {
            return Err(Error::Config("horizon_h must be >= 1".into()));
        }
        if !(self.policy_gain > 0.0 && self.policy_gain < 1.0) {
            return Err(Error::Config("policy_gain must lie in (0, 1)".into()));
        }
        if self.coupling < 0.0 {
            return Err(Error::Config("coupling must be >= 0".into()));
        }
        if self.episode_len_max < 2 {
            return Err(Error::Config("episode_len_max must be >= 2".into()));
        }
        if !(self.rarity_scale > 0.0) {
            return Err(Error::Config("rarity_scale must be > 0".into()));
        }
        if self.init_mean.len() != self.state_dim || self.init_spread.len() != self.state_dim {
            return Err(Error::Config(
                "init_mean and init_spread must have state_dim entries".into(),
            ));
        }
        Ok(())
    }

    /// Effective noise values after rarity scaling.
    pub fn effective_support(&self) -> Vec<f64> {
        self.noise_support
            .iter()
            .map(|&v| v * self.rarity_scale)
            .collect()
    }

    /// Scripted policy action.
    pub fn policy_action(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|&x| -self.policy_gain * x).collect()
    }
}

/// Instantaneous environment state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub s: Vec<f64>,
    pub t: usize,
    pub terminated: bool,
    pub event_occurred: bool,
}

impl EnvState {
    pub fn position(&self) -> f64 {
        self.s[0]
    }
}

/// A completed trajectory. States and actions are stored flat with stride
/// `state_dim`; `critical` means the hazard fired at the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub state_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub critical: bool,
}

impl Episode {
    pub fn n_states(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.state_dim..(k + 1) * self.state_dim]
    }

    /// Index of the event state (the final state of a critical episode).
    pub fn event_step(&self) -> Option<usize> {
        if self.critical {
            Some(self.n_states() - 1)
        } else {
            None
        }
    }
}

/// Anything that can produce episodes is a valid data source for the rest of
/// the pipeline. External environments plug in here; the exact-criticality
/// oracle is only available for the built-in synthetic dynamics.
pub trait EpisodeSource {
    fn state_dim(&self) -> usize;
    fn generate(&self, n_episodes: usize, seed: u64) -> Result<Vec<Episode>>;
}

impl EpisodeSource for EnvConfig {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn generate(&self, n_episodes: usize, seed: u64) -> Result<Vec<Episode>> {
        generate_episodes(self, n_episodes, seed)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Independent RNG stream for worker `index` under a run seed.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

/// Draw the initial state. Deterministic given `seed`.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<EnvState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(reset_with_rng(config, &mut rng))
}

fn reset_with_rng(config: &EnvConfig, rng: &mut ChaCha8Rng) -> EnvState {
    let s: Vec<f64> = (0..config.state_dim)
        .map(|d| {
            let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
            config.init_mean[d] + u * config.init_spread[d] * config.rarity_scale
        })
        .collect();
    let event = s[0] >= config.hazard_threshold;
    EnvState {
        s,
        t: 0,
        terminated: event,
        event_occurred: event,
    }
}

/// Closed-loop transition under a fixed noise vector `w` (already scaled).
pub fn step_with_noise(state: &EnvState, config: &EnvConfig, w: &[f64]) -> Result<EnvState> {
    if state.terminated {
        return Err(Error::Usage("cannot step a terminated state".into()));
    }
    if w.len() != config.state_dim {
        return Err(Error::ShapeMismatch(format!(
            "noise vector has {} entries, state_dim is {}",
            w.len(),
            config.state_dim
        )));
    }
    let d = config.state_dim;
    let keep = 1.0 - config.policy_gain;
    let mut next = vec![0.0f64; d];
    for i in 0..d {
        let coupled = if i + 1 < d {
            config.coupling * state.s[i + 1]
        } else {
            0.0
        };
        next[i] = keep * state.s[i] + coupled + w[i];
    }
    let t = state.t + 1;
    let event = next[0] >= config.hazard_threshold;
    let truncated = t + 1 >= config.episode_len_max;
    Ok(EnvState {
        s: next,
        t,
        terminated: event || truncated,
        event_occurred: event,
    })
}

fn sample_noise(config: &EnvConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let support = config.effective_support();
    (0..config.state_dim)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = config.noise_probs.len() - 1;
            for (i, &p) in config.noise_probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            support[idx]
        })
        .collect()
}

/// Stochastic transition; draws noise from the configured support.
pub fn step(state: &EnvState, config: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<EnvState> {
    let w = sample_noise(config, rng);
    step_with_noise(state, config, &w)
}

/// All per-dimension noise combinations with their joint probabilities, in a
/// fixed dimension-major order. Probabilities multiply in dimension order, so
/// recomputing a combination's weight reproduces the oracle's value bit for bit.
pub fn noise_combinations(config: &EnvConfig) -> Vec<(Vec<f64>, f64)> {
    let support = config.effective_support();
    let k = support.len();
    let d = config.state_dim;
    let total = k.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let w: Vec<f64> = idx.iter().map(|&i| support[i]).collect();
        let mut p = 1.0;
        for &i in idx.iter() {
            p *= config.noise_probs[i];
        }
        out.push((w, p));
        for slot in (0..d).rev() {
            idx[slot] += 1;
            if idx[slot] < k {
                break;
            }
            idx[slot] = 0;
        }
    }
    out
}

/// Upper bound on the position over the next `h` steps, by propagating a
/// per-dimension upper box through the (entrywise nonnegative) closed loop
/// with maximal noise. Sound because the map is monotone in every coordinate.
fn position_upper_bound(s: &[f64], config: &EnvConfig, h: usize, wmax: f64) -> f64 {
    let d = config.state_dim;
    let keep = 1.0 - config.policy_gain;
    let mut hi = s.to_vec();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..h {
        let mut next = vec![0.0f64; d];
        for i in 0..d {
            let coupled = if i + 1 < d {
                config.coupling * hi[i + 1].max(0.0)
            } else {
                0.0
            };
            next[i] = keep * hi[i] + coupled + wmax;
        }
        hi = next;
        best = best.max(hi[0]);
    }
    best
}

/// Exact probability that the hazard fires within `horizon` steps of `state`,
/// by exhaustive enumeration of noise sequences. Ignores episode truncation:
/// the lookahead is over the dynamics alone.
pub fn true_criticality_at(state: &EnvState, config: &EnvConfig, horizon: usize) -> Result<f64> {
    config.validate()?;
    if state.event_occurred || state.s[0] >= config.hazard_threshold {
        return Ok(1.0);
    }
    let needed = (config.noise_support.len() as f64).powi((config.state_dim * horizon) as i32);
    if needed > config.enumeration_budget as f64 {
        return Err(Error::EnumerationBudget {
            needed,
            budget: config.enumeration_budget,
        });
    }
    let combos = noise_combinations(config);
    let support = config.effective_support();
    let wmax = support.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wmin = support.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(crit_rec(&state.s, config, horizon, &combos, wmax, wmin))
}

fn crit_rec(
    s: &[f64],
    config: &EnvConfig,
    h: usize,
    combos: &[(Vec<f64>, f64)],
    wmax: f64,
    wmin: f64,
) -> f64 {
    if s[0] >= config.hazard_threshold {
        return 1.0;
    }
    if h == 0 {
        return 0.0;
    }
    if position_upper_bound(s, config, h, wmax) < config.hazard_threshold {
        return 0.0;
    }
    // If even the most favorable noise cannot avoid crossing at the next step,
    // every sequence fires immediately.
    let d = config.state_dim;
    let keep = 1.0 - config.policy_gain;
    let coupled = if d > 1 { config.coupling * s[1] } else { 0.0 };
    if keep * s[0] + coupled + wmin >= config.hazard_threshold {
        return 1.0;
    }
    let mut acc = 0.0;
    let mut child = vec![0.0f64; d];
    for (w, p) in combos {
        for i in 0..d {
            let c = if i + 1 < d {
                config.coupling * s[i + 1]
            } else {
                0.0
            };
            child[i] = keep * s[i] + c + w[i];
        }
        acc += p * crit_rec(&child, config, h - 1, combos, wmax, wmin);
    }
    acc
}

/// Exact criticality at the configured horizon.
pub fn true_criticality(state: &EnvState, config: &EnvConfig) -> Result<f64> {
    true_criticality_at(state, config, config.horizon_h)
}

/// Monte-Carlo fallback for configurations whose exact enumeration exceeds the
/// budget. Seeded and deterministic.
pub fn monte_carlo_criticality(
    state: &EnvState,
    config: &EnvConfig,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    config.validate()?;
    if state.event_occurred || state.s[0] >= config.hazard_threshold {
        return Ok(1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let mut s = state.s.clone();
        for _ in 0..config.horizon_h {
            let w = sample_noise(config, &mut rng);
            let keep = 1.0 - config.policy_gain;
            let mut next = vec![0.0f64; config.state_dim];
            for i in 0..config.state_dim {
                let c = if i + 1 < config.state_dim {
                    config.coupling * s[i + 1]
                } else {
                    0.0
                };
                next[i] = keep * s[i] + c + w[i];
            }
            s = next;
            if s[0] >= config.hazard_threshold {
                hits += 1;
                break;
            }
        }
    }
    Ok(hits as f64 / n_samples as f64)
}

/// Roll out `n_episodes` independent seeded episodes.
pub fn generate_episodes(config: &EnvConfig, n_episodes: usize, seed: u64) -> Result<Vec<Episode>> {
    config.validate()?;
    if n_episodes == 0 {
        return Err(Error::Usage("n_episodes must be >= 1".into()));
    }
    if config.noise_support.len() < 2 {
        return Err(Error::Config(
            "episode generation needs |noise_support| >= 2".into(),
        ));
    }
    let mut episodes = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let mut rng = stream_rng(seed, i as u64);
        let mut state = reset_with_rng(config, &mut rng);
        let mut states = Vec::with_capacity(config.episode_len_max * config.state_dim);
        let mut actions = Vec::with_capacity(config.episode_len_max * config.state_dim);
        states.extend_from_slice(&state.s);
        actions.extend_from_slice(&config.policy_action(&state.s));
        while !state.terminated {
            state = step(&state, config, &mut rng)?;
            states.extend_from_slice(&state.s);
            actions.extend_from_slice(&config.policy_action(&state.s));
        }
        episodes.push(Episode {
            id: format!("e{:08x}-{:06}", seed, i),
            state_dim: config.state_dim,
            states,
            actions,
            critical: state.event_occurred,
        });
    }
    Ok(episodes)
}

/// Realized fraction of critical episodes.
pub fn critical_fraction(episodes: &[Episode]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    episodes.iter().filter(|e| e.critical).count() as f64 / episodes.len() as f64
}

/// Tune `rarity_scale` by bisection so that the pilot critical-episode rate
/// matches `target_rate`. Returns the tuned scale and the realized pilot rate.
pub fn calibrate_rarity(
    config: &EnvConfig,
    target_rate: f64,
    n_pilot: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    config.validate()?;
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::Config("target_rate must lie in (0, 1)".into()));
    }
    let rate_at = |scale: f64, s: u64| -> Result<f64> {
        let mut cfg = config.clone();
        cfg.rarity_scale = scale;
        let eps = generate_episodes(&cfg, n_pilot, s)?;
        Ok(critical_fraction(&eps))
    };
    let mut lo = config.rarity_scale;
    let mut hi = config.rarity_scale;
    // Expand until the target is bracketed.
    for i in 0..24 {
        if rate_at(lo, seed.wrapping_add(i))? <= target_rate {
            break;
        }
        lo *= 0.5;
    }
    for i in 0..24 {
        if rate_at(hi, seed.wrapping_add(100 + i))? >= target_rate {
            break;
        }
        hi *= 2.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for i in 0..14 {
        mid = 0.5 * (lo + hi);
        let r = rate_at(mid, seed.wrapping_add(200 + i))?;
        if r < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let realized = rate_at(mid, seed.wrapping_add(999))?;
    Ok((mid, realized))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_cfg() -> EnvConfig {
        EnvConfig::default()
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let cfg = default_cfg();
        let a = reset(&cfg, 7).unwrap();
        let b = reset(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = reset(&cfg, 8).unwrap();
        assert_ne!(a.s, c.s);
    }

    #[test]
    fn reset_zero_spread_hits_mean_exactly() {
        let mut cfg = default_cfg();
        cfg.init_spread = vec![0.0, 0.0];
        cfg.init_mean = vec![0.25, -0.1];
        let st = reset(&cfg, 3).unwrap();
        assert_eq!(st.s, vec![0.25, -0.1]);
        assert_eq!(st.t, 0);
        assert!(!st.terminated);
    }

    #[test]
    fn reset_rejects_bad_probs() {
        let mut cfg = default_cfg();
        cfg.noise_probs = vec![0.5, 0.2, 0.2];
        assert!(matches!(reset(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_noise_contracts_toward_equilibrium() {
        let mut cfg = default_cfg();
        cfg.noise_support = vec![0.0];
        cfg.noise_probs = vec![1.0];
        let st = EnvState {
            s: vec![0.5, 0.0],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        let next = step_with_noise(&st, &cfg, &[0.0, 0.0]).unwrap();
        assert!(next.s[0].abs() < st.s[0].abs());
        assert!(!next.event_occurred);
    }

    #[test]
    fn crossing_threshold_sets_event_and_terminates() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![0.9, 0.9],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        // keep*0.9 + 0.35*0.9 = 0.72 + 0.315 = 1.035 >= 1.0
        let next = step_with_noise(&st, &cfg, &[0.0, 0.0]).unwrap();
        assert!(next.event_occurred);
        assert!(next.terminated);
    }

    #[test]
    fn stepping_terminated_state_is_a_usage_error() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![1.2, 0.0],
            t: 3,
            terminated: true,
            event_occurred: true,
        };
        assert!(matches!(
            step_with_noise(&st, &cfg, &[0.0, 0.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn trajectories_are_bit_identical_across_runs() {
        let cfg = default_cfg();
        let a = generate_episodes(&cfg, 20, 42).unwrap();
        let b = generate_episodes(&cfg, 20, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_episodes_is_a_precondition_violation() {
        let cfg = default_cfg();
        assert!(matches!(
            generate_episodes(&cfg, 0, 1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn criticality_is_one_at_or_past_threshold() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![1.0, 0.0],
            t: 0,
            terminated: true,
            event_occurred: true,
        };
        assert_eq!(true_criticality(&st, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn criticality_is_zero_far_below_threshold_with_zero_noise() {
        let mut cfg = default_cfg();
        cfg.noise_support = vec![0.0];
        cfg.noise_probs = vec![1.0];
        let st = EnvState {
            s: vec![-0.5, 0.0],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        assert_eq!(true_criticality(&st, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn horizon_zero_base_case_is_zero() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![0.99, 0.5],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        assert_eq!(true_criticality_at(&st, &cfg, 0).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let mut cfg = default_cfg();
        cfg.enumeration_budget = 100;
        let st = EnvState {
            s: vec![0.8, 0.2],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        assert!(matches!(
            true_criticality(&st, &cfg),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn oracle_matches_monte_carlo_on_boundary_state() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![0.82, 0.25],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        let exact = true_criticality(&st, &cfg).unwrap();
        assert!(exact > 0.0 && exact < 1.0, "exact = {exact}");
        let n = 1_000_000usize;
        let mc = monte_carlo_criticality(&st, &cfg, n, 9).unwrap();
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (mc - exact).abs() <= 3.0 * sigma + 1e-9,
            "mc = {mc}, exact = {exact}, 3sigma = {}",
            3.0 * sigma
        );
    }

    #[test]
    fn oracle_satisfies_total_probability_recursion() {
        let cfg = default_cfg();
        let st = EnvState {
            s: vec![0.7, 0.3],
            t: 0,
            terminated: false,
            event_occurred: false,
        };
        let h = 4;
        let full = true_criticality_at(&st, &cfg, h).unwrap();
        let mut acc = 0.0;
        for (w, p) in noise_combinations(&cfg) {
            let child = step_with_noise(&st, &cfg, &w).unwrap();
            let v = if child.event_occurred {
                1.0
            } else {
                true_criticality_at(&child, &cfg, h - 1).unwrap()
            };
            acc += p * v;
        }
        assert!(
            (full - acc).abs() <= 1e-12,
            "recursion gap {}",
            (full - acc).abs()
        );
    }

    #[test]
    fn oracle_monotone_in_position() {
        let cfg = default_cfg();
        let mut prev = -1.0;
        for i in 0..25 {
            let p = -0.2 + i as f64 * 0.06;
            let st = EnvState {
                s: vec![p, 0.2],
                t: 0,
                terminated: false,
                event_occurred: false,
            };
            let c = true_criticality_at(&st, &cfg, 3).unwrap();
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= prev - 1e-15, "not monotone at position {p}");
            prev = c;
        }
    }

    #[test]
    fn episode_invariants_hold() {
        let cfg = default_cfg();
        let eps = generate_episodes(&cfg, 200, 5).unwrap();
        for e in &eps {
            assert!(e.n_states() >= 1);
            assert!(e.n_states() <= cfg.episode_len_max);
            let last = e.state(e.n_states() - 1);
            if e.critical {
                assert!(last[0] >= cfg.hazard_threshold);
            } else {
                assert!(last[0] < cfg.hazard_threshold);
            }
            // intermediate states never cross
            for k in 0..e.n_states() - 1 {
                assert!(e.state(k)[0] < cfg.hazard_threshold);
            }
        }
    }

    #[test]
    fn calibrate_rarity_hits_target_band() {
        let mut cfg = default_cfg();
        cfg.episode_len_max = 60;
        let target = 1e-2;
        let (scale, _) = calibrate_rarity(&cfg, target, 10_000, 77).unwrap();
        let mut tuned = cfg.clone();
        tuned.rarity_scale = scale;
        let eps = generate_episodes(&tuned, 10_000, 123_456).unwrap();
        let rate = critical_fraction(&eps);
        assert!(
            rate >= 0.5 * target && rate <= 2.0 * target,
            "rate {rate} outside [0.5x, 2x] of {target}"
        );
    }
}
