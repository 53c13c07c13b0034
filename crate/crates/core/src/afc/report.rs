//! Echo extraction and comb calibration.

use num_complex::Complex64 as C64;

use super::transfer::{propagate, PhaseModel, TimeEnvelope};
use super::{build_comb, AfcError, FrequencyGrid, PeakShape, Result};

/// One recalled echo: where it was looked for, what was found.
///
/// Arrival time and phase are referenced to the transmitted pulse, which
/// shares the filter's overall group delay and carrier phase with the echo;
/// the common dispersive shift of the whole absorption band drops out, as it
/// does in a coincidence histogram referenced through the same crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoLine {
    /// Nominal delay relative to the input pulse, s.
    pub delay: f64,
    /// Energy-weighted centroid of the echo relative to the transmitted
    /// pulse, s.
    pub delay_measured: f64,
    /// Energy in the echo window divided by the input energy.
    pub efficiency: f64,
    /// Mean phase relative to the transmitted carrier, rad.
    pub phase: f64,
}

/// Transmission and echo budget extracted from one propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoReport {
    /// Energy in the transmitted-pulse window divided by the input energy.
    pub eta_trans: f64,
    /// Phase of the transmitted pulse relative to the input, rad.
    pub trans_phase: f64,
    pub echoes: Vec<EchoLine>,
}

impl EchoReport {
    /// Synthetic report for driving the event layer from nominal budgets
    /// instead of a propagated comb.
    pub fn synthetic(eta_trans: f64, echoes: &[(f64, f64, f64)]) -> Result<Self> {
        let report = EchoReport {
            eta_trans,
            trans_phase: 0.0,
            echoes: echoes
                .iter()
                .map(|&(delay, efficiency, phase)| EchoLine {
                    delay,
                    delay_measured: delay,
                    efficiency,
                    phase,
                })
                .collect(),
        };
        report.validate()?;
        Ok(report)
    }

    /// Pass-through memory: full transmission, no echo.
    pub fn pass_through() -> Self {
        EchoReport { eta_trans: 1.0, trans_phase: 0.0, echoes: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        let total: f64 =
            self.eta_trans + self.echoes.iter().map(|e| e.efficiency).sum::<f64>();
        if total > 1.0 + 1e-9 {
            return Err(AfcError::NotPassive(total));
        }
        Ok(())
    }

    /// Echo with the given nominal delay, if present.
    pub fn echo_at(&self, delay: f64) -> Option<&EchoLine> {
        self.echoes
            .iter()
            .find(|e| (e.delay - delay).abs() < 1e-12)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w -= std::f64::consts::TAU;
    }
    w
}

/// Matched-filter phase of `out` against a copy of `input` delayed by
/// `delay_bins`. The filter runs over the full record: everything that is
/// not the sought replica is rejected by the template's spectral and
/// temporal support, which keeps edge transients of the absorption window
/// out of the estimate.
fn matched_phase(input: &TimeEnvelope, out: &TimeEnvelope, delay_bins: i64) -> f64 {
    let n = out.samples.len() as i64;
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..n {
        let src = m - delay_bins;
        if src >= 0 && src < n {
            acc += out.samples[m as usize] * input.samples[src as usize].conj();
        }
    }
    acc.arg()
}

/// Extracts transmission and per-delay echo efficiencies/phases from a
/// propagated envelope.
///
/// Windows of width `window` are centered on the input centroid (for the
/// transmitted pulse) and on each expected delay; windows must be disjoint
/// and at least 3× the input FWHM wide.
pub fn echo_report(
    input: &TimeEnvelope,
    out: &TimeEnvelope,
    expected_delays: &[f64],
    window: f64,
) -> Result<EchoReport> {
    let fwhm = input.intensity_fwhm();
    if window < 3.0 * fwhm {
        return Err(AfcError::WindowTooNarrow { window, fwhm });
    }
    let e_in = input.energy();
    if e_in <= 0.0 {
        return Err(AfcError::InvalidParameter("input envelope has zero energy".into()));
    }
    let t_ref = input.centroid_in(input.t0, input.t0 + input.samples.len() as f64 * input.dt);

    let mut centers: Vec<f64> = Vec::with_capacity(expected_delays.len() + 1);
    centers.push(t_ref);
    centers.extend(expected_delays.iter().map(|d| t_ref + d));
    let mut sorted = centers.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in sorted.windows(2) {
        if pair[1] - pair[0] < window {
            return Err(AfcError::OverlappingWindows(
                pair[0] - window / 2.0,
                pair[0] + window / 2.0,
                pair[1] - window / 2.0,
                pair[1] + window / 2.0,
            ));
        }
    }

    let eta_trans = out.energy_in(t_ref - window / 2.0, t_ref + window / 2.0) / e_in;
    let trans_phase = matched_phase(input, out, 0);

    // reference clock: the transmitted pulse when it carries energy,
    // otherwise the input centroid
    let trans_centroid = out.centroid_in(t_ref - window / 2.0, t_ref + window / 2.0);
    let have_trans = eta_trans > 1e-9 && !trans_centroid.is_nan();
    let (t_out_ref, phase_ref) = if have_trans {
        (trans_centroid, trans_phase)
    } else {
        (t_ref, 0.0)
    };

    let mut echoes = Vec::with_capacity(expected_delays.len());
    for &delay in expected_delays {
        let (lo, hi) = (t_ref + delay - window / 2.0, t_ref + delay + window / 2.0);
        let efficiency = out.energy_in(lo, hi) / e_in;
        let centroid = out.centroid_in(lo, hi);
        let delay_measured = if centroid.is_nan() { f64::NAN } else { centroid - t_out_ref };
        let delay_bins = (delay / out.dt).round() as i64;
        let phase = wrap_angle(matched_phase(input, out, delay_bins) - phase_ref);
        echoes.push(EchoLine { delay, delay_measured, efficiency, phase });
    }

    let report = EchoReport { eta_trans, trans_phase, echoes };
    report.validate()?;
    Ok(report)
}

/// Result of the square-comb efficiency search.
#[derive(Debug, Clone, PartialEq)]
pub struct CombCalibration {
    pub finesse: f64,
    pub peak_depth: f64,
    pub efficiency: f64,
    pub eta_trans: f64,
}

/// Grid search over (finesse, peak depth ≤ cap) for the square comb with the
/// highest first-echo efficiency at the given storage time.
///
/// The optimum sits near `d/F = 2` where the recalled amplitude
/// `(d/F)·e^{−d/(2F)}` peaks, pushed to slightly higher finesse by the tooth
/// form factor.
pub fn calibrate_square_comb(
    period: f64,
    depth_cap: f64,
    bandwidth: f64,
    grid: FrequencyGrid,
) -> Result<CombCalibration> {
    let dt = grid.dt();
    let n = grid.n_points;
    let t_s = 1.0 / period;
    let input = TimeEnvelope::gaussian(n, dt, 3.0 * t_s, t_s / 5.0, 1.0);
    let window = 0.6 * t_s;

    let mut best: Option<CombCalibration> = None;
    let mut finesse = 1.5;
    while finesse <= 5.01 {
        for depth_frac in [0.5, 0.75, 1.0] {
            let depth = depth_cap * depth_frac;
            let comb = build_comb(
                period,
                finesse,
                depth,
                0.0,
                bandwidth,
                PeakShape::Square,
                0.0,
                grid,
            )?;
            let out = propagate(&input, &comb, PhaseModel::MinimumPhase)?;
            let report = echo_report(&input, &out, &[t_s], window)?;
            let eff = report.echoes[0].efficiency;
            if best.as_ref().map_or(true, |b| eff > b.efficiency) {
                best = Some(CombCalibration {
                    finesse,
                    peak_depth: depth,
                    efficiency: eff,
                    eta_trans: report.eta_trans,
                });
            }
        }
        finesse += 0.25;
    }
    Ok(best.expect("non-empty search grid"))
}
