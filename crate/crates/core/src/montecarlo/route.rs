//! Per-pair routing through the analyzers into path amplitudes and joint
//! detection classes.

use num_complex::Complex64 as C64;

use super::{ChannelConfig, MonteCarloError, Result};
use crate::afc::EchoReport;

/// How one arm analyzes its photon.
#[derive(Debug, Clone, PartialEq)]
pub enum Analyzer {
    /// Straight to the detector.
    Direct,
    /// Unbalanced 50/50 interferometer with arms `0` and `tau` and relative
    /// phase `phase` on the long arm; half the amplitude leaves through the
    /// unmonitored port.
    Fiber { phase: f64 },
    /// The memory as analyzer: transmitted pulse plus every echo of the
    /// report, each with its own delay, amplitude and phase.
    Memory(EchoReport),
}

/// One possible arrival of a photon: delay relative to pair creation and
/// complex amplitude (channel transmission folded in).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub dt: f64,
    pub amplitude: C64,
}

/// Joint detection classes of one pair.
///
/// Path combinations with equal signal-minus-idler arrival difference are
/// indistinguishable under a continuous-wave pump and interfere with the
/// source visibility; distinguishable combinations add incoherently.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    pub dt_signal: f64,
    pub dt_idler: f64,
    /// Joint arrival probability of this member (detector efficiencies not
    /// included).
    pub probability: f64,
}

/// Amplitude table of a single pair created at `t_pair`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAmplitudeTable {
    pub t_pair: f64,
    pub signal: Vec<PathComponent>,
    pub idler: Vec<PathComponent>,
}

const DELAY_MATCH_TOL: f64 = 0.2e-9;

fn components(analyzer: &Analyzer, channel: &ChannelConfig, tau: f64) -> Vec<PathComponent> {
    let t = channel.transmission.sqrt();
    let base = match analyzer {
        Analyzer::Direct => vec![PathComponent { dt: 0.0, amplitude: C64::new(1.0, 0.0) }],
        Analyzer::Fiber { phase } => vec![
            PathComponent { dt: 0.0, amplitude: C64::new(0.5, 0.0) },
            PathComponent { dt: tau, amplitude: C64::from_polar(0.5, *phase) },
        ],
        Analyzer::Memory(report) => {
            let mut v = Vec::with_capacity(1 + report.echoes.len());
            if report.eta_trans > 0.0 {
                v.push(PathComponent {
                    dt: 0.0,
                    amplitude: C64::from_polar(report.eta_trans.sqrt(), report.trans_phase),
                });
            }
            for echo in &report.echoes {
                if echo.efficiency > 0.0 {
                    v.push(PathComponent {
                        dt: echo.delay,
                        amplitude: C64::from_polar(echo.efficiency.sqrt(), echo.phase),
                    });
                }
            }
            v
        }
    };
    base.into_iter()
        .map(|p| PathComponent {
            dt: p.dt + channel.delay,
            amplitude: p.amplitude * t,
        })
        .collect()
}

/// Smallest positive spacing between path delays, if the arm has two or
/// more paths.
fn path_spacing(paths: &[PathComponent]) -> Option<f64> {
    if paths.len() < 2 {
        return None;
    }
    let mut dts: Vec<f64> = paths.iter().map(|p| p.dt).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dts.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
}

/// Routes one pair through both analyzers.
///
/// When both arms form interferometers their delay spacings must agree with
/// `tau` within the jitter scale, otherwise the path combinations that are
/// supposed to interfere become distinguishable.
pub fn route_pair(
    t_pair: f64,
    signal_analyzer: &Analyzer,
    idler_analyzer: &Analyzer,
    memory: Option<&EchoReport>,
    channels: (&ChannelConfig, &ChannelConfig),
    tau: f64,
) -> Result<PathAmplitudeTable> {
    channels.0.validate()?;
    channels.1.validate()?;
    // a memory report supplied separately replaces the signal analyzer
    let signal_analyzer = match memory {
        Some(report) => Analyzer::Memory(report.clone()),
        None => signal_analyzer.clone(),
    };
    let signal = components(&signal_analyzer, channels.0, tau);
    let idler = components(idler_analyzer, channels.1, tau);

    if let (Some(ss), Some(is)) = (path_spacing(&signal), path_spacing(&idler)) {
        if (ss - is).abs() > DELAY_MATCH_TOL {
            return Err(MonteCarloError::MismatchedDelays { signal: ss, idler: is });
        }
    }

    let total: f64 = signal.iter().map(|p| p.amplitude.norm_sqr()).sum::<f64>()
        * idler.iter().map(|p| p.amplitude.norm_sqr()).sum::<f64>();
    if total > 1.0 + 1e-12 {
        return Err(MonteCarloError::ProbabilityOverflow(total));
    }

    Ok(PathAmplitudeTable { t_pair, signal, idler })
}

impl PathAmplitudeTable {
    /// Probability that the signal photon reaches its detector head.
    pub fn signal_arrival_prob(&self) -> f64 {
        self.signal.iter().map(|p| p.amplitude.norm_sqr()).sum()
    }

    /// Probability that the idler photon reaches its detector head.
    pub fn idler_arrival_prob(&self) -> f64 {
        self.idler.iter().map(|p| p.amplitude.norm_sqr()).sum()
    }

    /// Joint detection classes with coherence applied.
    ///
    /// Members are grouped by the ps-quantized difference of arrival times;
    /// within one group the class probability is
    /// `(1−V)·Σ|a|² + V·|Σa|²` and is redistributed over the members
    /// proportionally to their incoherent weights (the absolute-time split
    /// inside a class is not resolvable interferometrically).
    pub fn joint_classes(&self, visibility: f64) -> Vec<JointOutcome> {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<i64, Vec<(f64, f64, C64)>> = BTreeMap::new();
        for s in &self.signal {
            for i in &self.idler {
                let key = ((s.dt - i.dt) * 1e12).round() as i64;
                groups
                    .entry(key)
                    .or_default()
                    .push((s.dt, i.dt, s.amplitude * i.amplitude));
            }
        }
        let mut out = Vec::new();
        for members in groups.into_values() {
            let incoherent: f64 = members.iter().map(|m| m.2.norm_sqr()).sum();
            let coherent: f64 = members
                .iter()
                .fold(C64::new(0.0, 0.0), |acc, m| acc + m.2)
                .norm_sqr();
            let p_class = (1.0 - visibility) * incoherent + visibility * coherent;
            if incoherent <= 0.0 {
                continue;
            }
            for (dt_s, dt_i, amp) in &members {
                out.push(JointOutcome {
                    dt_signal: *dt_s,
                    dt_idler: *dt_i,
                    probability: p_class * amp.norm_sqr() / incoherent,
                });
            }
        }
        out
    }

    /// Sum of all joint-class probabilities; bounded by each arrival
    /// marginal.
    pub fn joint_total(&self, visibility: f64) -> f64 {
        self.joint_classes(visibility)
            .iter()
            .map(|c| c.probability)
            .sum()
    }
}
