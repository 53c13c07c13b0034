//! Detection sampling and experiment runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use super::route::{Analyzer, PathAmplitudeTable};
use super::{
    mix_seed, ChannelConfig, DetectorConfig, MonteCarloError, Result, SourceConfig, Tag,
    TagStream, CHANNEL_IDLER, CHANNEL_SIGNAL,
};

/// One detection category of a pair with everything folded in: arrival
/// probabilities, channel transmission and detector efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AtomKind {
    Joint { dt_signal: f64, dt_idler: f64 },
    SignalOnly { dt: f64 },
    IdlerOnly { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Atom {
    kind: AtomKind,
    probability: f64,
}

/// The per-pair detection categories derived from a path table; the
/// complement of their total is the no-click outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeAtoms {
    atoms: Vec<Atom>,
    /// Probability that the signal photon is detected (marginal).
    pub p_signal: f64,
    /// Probability that the idler photon is detected (marginal).
    pub p_idler: f64,
    /// Probability that both photons of the pair are detected.
    pub p_joint: f64,
}

impl OutcomeAtoms {
    pub fn build(
        table: &PathAmplitudeTable,
        visibility: f64,
        detectors: (&DetectorConfig, &DetectorConfig),
    ) -> Result<Self> {
        let (det_s, det_i) = detectors;
        det_s.validate()?;
        det_i.validate()?;
        let eff_s = det_s.efficiency;
        let eff_i = det_i.efficiency;

        let mut atoms = Vec::new();
        let classes = table.joint_classes(visibility);
        let mut joint_by_signal: Vec<f64> = vec![0.0; table.signal.len()];
        let mut joint_by_idler: Vec<f64> = vec![0.0; table.idler.len()];
        let mut p_joint = 0.0;
        for class in &classes {
            let p = class.probability * eff_s * eff_i;
            if p <= 0.0 {
                continue;
            }
            p_joint += p;
            atoms.push(Atom {
                kind: AtomKind::Joint {
                    dt_signal: class.dt_signal,
                    dt_idler: class.dt_idler,
                },
                probability: p,
            });
            // attribute joint mass to the member paths for the marginals
            let sj = table
                .signal
                .iter()
                .position(|c| (c.dt - class.dt_signal).abs() < 1e-15)
                .expect("class member from table");
            let ij = table
                .idler
                .iter()
                .position(|c| (c.dt - class.dt_idler).abs() < 1e-15)
                .expect("class member from table");
            joint_by_signal[sj] += p;
            joint_by_idler[ij] += p;
        }

        let mut p_signal = 0.0;
        for (comp, &joint) in table.signal.iter().zip(&joint_by_signal) {
            let detected = comp.amplitude.norm_sqr() * eff_s;
            p_signal += detected;
            let only = detected - joint;
            if only < -1e-9 {
                return Err(MonteCarloError::ProbabilityOverflow(-only));
            }
            if only > 0.0 {
                atoms.push(Atom {
                    kind: AtomKind::SignalOnly { dt: comp.dt },
                    probability: only,
                });
            }
        }
        let mut p_idler = 0.0;
        for (comp, &joint) in table.idler.iter().zip(&joint_by_idler) {
            let detected = comp.amplitude.norm_sqr() * eff_i;
            p_idler += detected;
            let only = detected - joint;
            if only < -1e-9 {
                return Err(MonteCarloError::ProbabilityOverflow(-only));
            }
            if only > 0.0 {
                atoms.push(Atom {
                    kind: AtomKind::IdlerOnly { dt: comp.dt },
                    probability: only,
                });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        if total > 1.0 + 1e-9 {
            return Err(MonteCarloError::ProbabilityOverflow(total));
        }
        Ok(OutcomeAtoms { atoms, p_signal, p_idler, p_joint })
    }

    /// Expected signal/idler singles and joint rates for a given pair rate
    /// (dark counts not included).
    pub fn rates(&self, pair_rate: f64) -> (f64, f64, f64) {
        (
            pair_rate * self.p_signal,
            pair_rate * self.p_idler,
            pair_rate * self.p_joint,
        )
    }
}

fn push_tag(
    tags: &mut Vec<Tag>,
    t: f64,
    jitter_sigma: f64,
    channel: u8,
    duration: f64,
    rng: &mut ChaCha12Rng,
) {
    let jit = if jitter_sigma > 0.0 {
        Normal::new(0.0, jitter_sigma).unwrap().sample(rng)
    } else {
        0.0
    };
    let t = t + jit;
    if t >= 0.0 && t < duration {
        tags.push(Tag {
            time_ps: (t * 1e12).round() as u64,
            channel,
        });
    }
}

/// Literal per-pair detection: samples one outcome category per pair table,
/// applies jitter, then appends independent Poisson dark counts per channel.
pub fn detect<'a, I>(
    paths: I,
    detectors: (&DetectorConfig, &DetectorConfig),
    visibility: f64,
    duration: f64,
    seed: u64,
) -> Result<TagStream>
where
    I: IntoIterator<Item = &'a PathAmplitudeTable>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut tags = Vec::new();
    let mut cached: Option<(PathAmplitudeTable, OutcomeAtoms)> = None;
    for table in paths {
        // identical tables (same analyzers for a run) share their atoms
        let rebuild = match &cached {
            Some((t, _)) => t.signal != table.signal || t.idler != table.idler,
            None => true,
        };
        if rebuild {
            let atoms = OutcomeAtoms::build(table, visibility, detectors)?;
            cached = Some((table.clone(), atoms));
        }
        let atoms = &cached.as_ref().unwrap().1;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for atom in &atoms.atoms {
            acc += atom.probability;
            if u < acc {
                match atom.kind {
                    AtomKind::Joint { dt_signal, dt_idler } => {
                        push_tag(
                            &mut tags,
                            table.t_pair + dt_signal,
                            detectors.0.jitter_sigma,
                            CHANNEL_SIGNAL,
                            duration,
                            &mut rng,
                        );
                        push_tag(
                            &mut tags,
                            table.t_pair + dt_idler,
                            detectors.1.jitter_sigma,
                            CHANNEL_IDLER,
                            duration,
                            &mut rng,
                        );
                    }
                    AtomKind::SignalOnly { dt } => push_tag(
                        &mut tags,
                        table.t_pair + dt,
                        detectors.0.jitter_sigma,
                        CHANNEL_SIGNAL,
                        duration,
                        &mut rng,
                    ),
                    AtomKind::IdlerOnly { dt } => push_tag(
                        &mut tags,
                        table.t_pair + dt,
                        detectors.1.jitter_sigma,
                        CHANNEL_IDLER,
                        duration,
                        &mut rng,
                    ),
                }
                break;
            }
        }
    }
    append_dark_counts(&mut tags, detectors.0.dark_rate, CHANNEL_SIGNAL, 0.0, duration, seed ^ 0xdead_beef);
    append_dark_counts(&mut tags, detectors.1.dark_rate, CHANNEL_IDLER, 0.0, duration, seed ^ 0xbeef_dead);
    Ok(TagStream::new(tags, duration))
}

fn append_dark_counts(
    tags: &mut Vec<Tag>,
    rate: f64,
    channel: u8,
    t0: f64,
    t1: f64,
    seed: u64,
) {
    let mean = rate * (t1 - t0);
    if mean <= 0.0 {
        return;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = Poisson::new(mean).unwrap().sample(&mut rng) as u64;
    for _ in 0..n {
        let t = t0 + rng.random::<f64>() * (t1 - t0);
        tags.push(Tag {
            time_ps: (t * 1e12).round() as u64,
            channel,
        });
    }
}

/// Full description of one stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub source: SourceConfig,
    pub signal_channel: ChannelConfig,
    pub idler_channel: ChannelConfig,
    pub signal_detector: DetectorConfig,
    pub idler_detector: DetectorConfig,
    pub signal_analyzer: Analyzer,
    pub idler_analyzer: Analyzer,
    /// Time-bin separation of the analyzers, s.
    pub tau: f64,
    pub duration: f64,
    pub seed: u64,
}

/// Effective rates and bookkeeping of a run, for reports and manifests.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunMetadata {
    pub duration: f64,
    pub seed: u64,
    pub expected_pairs: f64,
    /// Singles rates including dark counts, counts/s.
    pub signal_rate: f64,
    pub idler_rate: f64,
    /// Same-pair coincidence rate (all joint classes), counts/s.
    pub joint_rate: f64,
    /// Detected-signal marginal probability per pair.
    pub p_signal: f64,
    pub p_idler: f64,
    pub p_joint: f64,
    pub n_tags: u64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.signal_channel.validate()?;
        self.idler_channel.validate()?;
        self.signal_detector.validate()?;
        self.idler_detector.validate()?;
        if self.duration < 0.0 || self.tau <= 0.0 {
            return Err(MonteCarloError::InvalidConfig(format!(
                "duration = {}, tau = {}",
                self.duration, self.tau
            )));
        }
        Ok(())
    }

    /// Routing table shared by every pair of the run.
    pub fn table(&self) -> Result<PathAmplitudeTable> {
        route_pair_for(self)
    }

    /// Detection categories with all efficiencies folded in.
    pub fn atoms(&self) -> Result<OutcomeAtoms> {
        OutcomeAtoms::build(
            &self.table()?,
            self.source.visibility,
            (&self.signal_detector, &self.idler_detector),
        )
    }
}

fn route_pair_for(spec: &RunSpec) -> Result<PathAmplitudeTable> {
    super::route::route_pair(
        0.0,
        &spec.signal_analyzer,
        &spec.idler_analyzer,
        None,
        (&spec.signal_channel, &spec.idler_channel),
        spec.tau,
    )
}

/// Number of time blocks a run is partitioned into; each block gets derived
/// seeds per detection category, so results are independent of execution
/// order and thread count.
fn block_count(spec: &RunSpec, tag_rate: f64) -> usize {
    let total_tags = tag_rate * spec.duration;
    let blocks = (total_tags / 5e5).ceil().max(1.0) as usize;
    blocks.min(4096)
}

/// Generates the tags of one block (atom streams + dark counts), unsorted.
fn block_tags(
    spec: &RunSpec,
    atoms: &OutcomeAtoms,
    t0: f64,
    t1: f64,
    block_idx: usize,
) -> Vec<Tag> {
    let mut tags = Vec::new();
    let len = t1 - t0;
    for (atom_idx, atom) in atoms.atoms.iter().enumerate() {
        let rate = atom.probability * spec.source.pair_rate;
        if rate * len <= 0.0 {
            continue;
        }
        let seed = mix_seed(spec.seed, atom_idx as u64 + 1, block_idx as u64 + 1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = Poisson::new(rate * len).unwrap().sample(&mut rng) as u64;
        for _ in 0..n {
            let t_pair = t0 + rng.random::<f64>() * len;
            match atom.kind {
                AtomKind::Joint { dt_signal, dt_idler } => {
                    push_tag(
                        &mut tags,
                        t_pair + dt_signal,
                        spec.signal_detector.jitter_sigma,
                        CHANNEL_SIGNAL,
                        spec.duration,
                        &mut rng,
                    );
                    push_tag(
                        &mut tags,
                        t_pair + dt_idler,
                        spec.idler_detector.jitter_sigma,
                        CHANNEL_IDLER,
                        spec.duration,
                        &mut rng,
                    );
                }
                AtomKind::SignalOnly { dt } => push_tag(
                    &mut tags,
                    t_pair + dt,
                    spec.signal_detector.jitter_sigma,
                    CHANNEL_SIGNAL,
                    spec.duration,
                    &mut rng,
                ),
                AtomKind::IdlerOnly { dt } => push_tag(
                    &mut tags,
                    t_pair + dt,
                    spec.idler_detector.jitter_sigma,
                    CHANNEL_IDLER,
                    spec.duration,
                    &mut rng,
                ),
            }
        }
    }
    append_dark_counts(
        &mut tags,
        spec.signal_detector.dark_rate,
        CHANNEL_SIGNAL,
        t0,
        t1,
        mix_seed(spec.seed, 0x5151, block_idx as u64 + 1),
    );
    append_dark_counts(
        &mut tags,
        spec.idler_detector.dark_rate,
        CHANNEL_IDLER,
        t0,
        t1,
        mix_seed(spec.seed, 0x1d1d, block_idx as u64 + 1),
    );
    tags
}

/// Runs a scenario, returning the merged timestamp stream and the effective
/// rates. Deterministic: the same spec (seed included) produces a
/// byte-identical stream regardless of thread count.
pub fn run_experiment(spec: &RunSpec) -> Result<(TagStream, RunMetadata)> {
    spec.validate()?;
    let atoms = spec.atoms()?;
    let (sig_rate, idl_rate, joint_rate) = atoms.rates(spec.source.pair_rate);
    let tag_rate = sig_rate + idl_rate + spec.signal_detector.dark_rate
        + spec.idler_detector.dark_rate;
    let n_blocks = block_count(spec, tag_rate);
    let block_len = spec.duration / n_blocks as f64;

    let mut blocks: Vec<Vec<Tag>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            block_tags(
                spec,
                &atoms,
                b as f64 * block_len,
                (b + 1) as f64 * block_len,
                b,
            )
        })
        .collect();
    let mut tags = Vec::with_capacity(blocks.iter().map(Vec::len).sum());
    for block in &mut blocks {
        tags.append(block);
    }
    let stream = TagStream::new(tags, spec.duration);
    let metadata = RunMetadata {
        duration: spec.duration,
        seed: spec.seed,
        expected_pairs: spec.source.pair_rate * spec.duration,
        signal_rate: sig_rate + spec.signal_detector.dark_rate,
        idler_rate: idl_rate + spec.idler_detector.dark_rate,
        joint_rate,
        p_signal: atoms.p_signal,
        p_idler: atoms.p_idler,
        p_joint: atoms.p_joint,
        n_tags: stream.len() as u64,
    };
    Ok((stream, metadata))
}
