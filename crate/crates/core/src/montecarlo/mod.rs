//! Stochastic event-level simulation of the full experiment.
//!
//! Pairs are created by a Poisson process (continuous-wave pump); each pair
//! is routed through the analyzers into a table of path amplitudes, and
//! detection samples one outcome per pair, applies losses, detector
//! efficiency, Gaussian jitter and adds dark counts. Indistinguishable path
//! combinations (equal detection-time difference) interfere coherently with
//! a configurable visibility; everything else adds incoherently.
//!
//! Two equivalent engines produce timestamp streams: a literal per-pair
//! sampler ([`detect`]) and a marked-Poisson generator used by
//! [`run_experiment`] that draws each detection category as its own
//! thinned Poisson stream, which keeps long low-efficiency runs tractable.
//! Multi-pair accidentals arise in both from independent pairs landing
//! close in time.

mod route;
mod runner;
mod tagio;

pub use route::{route_pair, Analyzer, JointOutcome, PathAmplitudeTable, PathComponent};
pub use runner::{detect, run_experiment, OutcomeAtoms, RunMetadata, RunSpec};
pub use tagio::{read_tag_file, write_tag_file, TagSidecar};

use thiserror::Error;

pub const CHANNEL_SIGNAL: u8 = 0;
pub const CHANNEL_IDLER: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MonteCarloError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("analyzer path spacings differ beyond tolerance: signal {signal:.3e} s vs idler {idler:.3e} s")]
    MismatchedDelays { signal: f64, idler: f64 },
    #[error("per-pair probabilities exceed 1: {0}")]
    ProbabilityOverflow(f64),
    #[error("tag file: {0}")]
    TagFormat(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MonteCarloError>;

/// Pair-creation source parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceConfig {
    /// Mean pair-creation rate, pairs/s (proportional to pump power).
    pub pair_rate: f64,
    /// Coherence time of the individual photons, s.
    pub coherence_time: f64,
    /// Interference visibility of indistinguishable joint paths; 1 for a
    /// perfectly coherent source, lower when source or memory dephasing is
    /// modeled.
    pub visibility: f64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pair_rate < 0.0 || !self.pair_rate.is_finite() {
            return Err(MonteCarloError::InvalidConfig(format!(
                "pair_rate = {}",
                self.pair_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(MonteCarloError::InvalidConfig(format!(
                "visibility = {}",
                self.visibility
            )));
        }
        Ok(())
    }
}

/// Per-arm optical transmission (all filtering between source and detector)
/// plus a fixed propagation delay.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelConfig {
    pub transmission: f64,
    pub delay: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.transmission) {
            return Err(MonteCarloError::InvalidConfig(format!(
                "transmission = {}",
                self.transmission
            )));
        }
        Ok(())
    }
}

/// Detector model: quantum efficiency, dark-count rate, timing jitter.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_rate: f64,
    pub jitter_sigma: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency)
            || self.dark_rate < 0.0
            || self.jitter_sigma < 0.0
        {
            return Err(MonteCarloError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tag {
    /// Picosecond timestamp (little-endian u64 on disk).
    pub time_ps: u64,
    pub channel: u8,
}

/// Ordered stream of detector clicks over `[0, duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    /// Sorted by `(time_ps, channel)`.
    pub tags: Vec<Tag>,
    pub duration: f64,
}

impl TagStream {
    pub fn new(mut tags: Vec<Tag>, duration: f64) -> Self {
        tags.sort_unstable();
        TagStream { tags, duration }
    }

    /// Sorted timestamps of one channel.
    pub fn channel(&self, ch: u8) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.time_ps)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Poisson pair-creation times over `[0, duration)`, sorted, reproducible
/// under a fixed seed.
pub fn generate_pairs(cfg: &SourceConfig, duration: f64, seed: u64) -> Result<Vec<f64>> {
    use rand::Rng;
    use rand::SeedableRng;
    cfg.validate()?;
    if duration < 0.0 {
        return Err(MonteCarloError::InvalidConfig(format!(
            "duration = {duration}"
        )));
    }
    let mut times = Vec::new();
    if cfg.pair_rate == 0.0 || duration == 0.0 {
        return Ok(times);
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    loop {
        let u: f64 = rng.random::<f64>();
        t += -u.max(f64::MIN_POSITIVE).ln() / cfg.pair_rate;
        if t >= duration {
            break;
        }
        times.push(t);
    }
    Ok(times)
}

/// SplitMix64 step; used to derive independent per-atom, per-block seeds
/// from the master seed so generation order and thread count cannot change
/// the result.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
