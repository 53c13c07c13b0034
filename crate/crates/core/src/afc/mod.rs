//! Atomic-frequency-comb memory model.
//!
//! The inhomogeneously broadened absorber is reduced to a linear spectral
//! filter: a comb-shaped optical-depth profile `d(ν)` turns into the
//! transfer function `|H| = e^{−d/2}` with a causal minimum-phase response
//! (physical absorbers obey Kramers-Kronig, and echo efficiency is sensitive
//! to the associated dispersion). Propagating a photon wavepacket through
//! `H` produces a transmitted pulse at `t = 0` and photon-echo replicas at
//! multiples of the storage time `t_s = 1/Δ`, where `Δ` is the comb period.

mod report;
mod transfer;

pub use report::{calibrate_square_comb, echo_report, CombCalibration, EchoLine, EchoReport};
pub use transfer::{propagate, transfer_function, PhaseModel, TimeEnvelope};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AfcError {
    #[error("n_points {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("grid too coarse: resolution {resolution:.3e} Hz > period/50 = {limit:.3e} Hz")]
    GridTooCoarse { resolution: f64, limit: f64 },
    #[error("bandwidth {bandwidth:.3e} Hz exceeds span/4 = {limit:.3e} Hz")]
    BandwidthExceedsGrid { bandwidth: f64, limit: f64 },
    #[error("invalid comb parameter: {0}")]
    InvalidParameter(String),
    #[error("envelope does not match the comb grid: {0}")]
    GridMismatch(String),
    #[error("windows overlap: [{0:.3e}, {1:.3e}] s and [{2:.3e}, {3:.3e}] s")]
    OverlappingWindows(f64, f64, f64, f64),
    #[error("window {window:.3e} s narrower than 3x input FWHM {fwhm:.3e} s")]
    WindowTooNarrow { window: f64, fwhm: f64 },
    #[error("echo report inconsistent: eta_trans + sum(eta_echo) = {0} > 1")]
    NotPassive(f64),
}

pub type Result<T> = std::result::Result<T, AfcError>;

/// Uniform frequency grid used to discretize `d(ν)` and the matching time
/// axis (`dt = 1/span`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    /// Number of points, a power of two.
    pub n_points: usize,
    /// Full span in Hz; the grid covers `[-span/2, span/2)` around the
    /// photon carrier.
    pub span: f64,
    /// Center of the comb window relative to the photon carrier, Hz.
    pub center_offset: f64,
}

impl FrequencyGrid {
    pub fn new(n_points: usize, span: f64, center_offset: f64) -> Result<Self> {
        if !n_points.is_power_of_two() {
            return Err(AfcError::NotPowerOfTwo(n_points));
        }
        if span <= 0.0 {
            return Err(AfcError::InvalidParameter(format!("span = {span}")));
        }
        Ok(FrequencyGrid { n_points, span, center_offset })
    }

    /// Default grid: 2^20 points over 2 GHz (dt = 0.5 ns), resolving both
    /// the photon bandwidth and storage times of hundreds of ns.
    pub fn default_memory_grid() -> Self {
        FrequencyGrid { n_points: 1 << 20, span: 2e9, center_offset: 0.0 }
    }

    /// Smaller grid for quick scans; same span, 2^18 points.
    pub fn coarse_memory_grid() -> Self {
        FrequencyGrid { n_points: 1 << 18, span: 2e9, center_offset: 0.0 }
    }

    /// Frequency resolution, Hz per point.
    pub fn resolution(&self) -> f64 {
        self.span / self.n_points as f64
    }

    /// Time step of the paired time axis, `1/span`.
    pub fn dt(&self) -> f64 {
        1.0 / self.span
    }

    /// Physical frequency of a grid index (monotonic, centered layout).
    pub fn frequency(&self, idx: usize) -> f64 {
        (idx as f64 - (self.n_points / 2) as f64) * self.resolution()
    }
}

/// Tooth profile of the comb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakShape {
    /// Flat-topped teeth; the optimal shape for storage efficiency.
    Square,
    /// Gaussian teeth with the same FWHM.
    Gaussian,
}

/// Nominal parameters of one periodic comb structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombParams {
    /// Tooth spacing Δ in Hz; the storage time is `1/Δ`.
    pub period: f64,
    /// Tooth spacing divided by tooth FWHM, ≥ 1.
    pub finesse: f64,
    /// Optical depth at the tooth center.
    pub peak_depth: f64,
    /// Residual optical depth between teeth.
    pub background_depth: f64,
    /// Width of the absorbing window, Hz.
    pub bandwidth: f64,
    /// Displacement of the tooth pattern relative to the window center;
    /// shifts the echo phase by `2π·shift/Δ`.
    pub comb_shift: f64,
    pub shape: PeakShape,
}

/// Optical-depth profile on a frequency grid plus the nominal parameters it
/// was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CombSpectrum {
    pub grid: FrequencyGrid,
    /// Optical depth per grid point (monotonic frequency layout), ≥ 0.
    pub depth: Vec<f64>,
    /// Parameters of the (primary) periodic structure.
    pub params: CombParams,
    /// Set when superposing structures exceeded the available peak depth
    /// and the profile was clipped.
    pub clipped: bool,
}

impl CombSpectrum {
    /// Expected storage time `t_s = 1/Δ` of the primary structure.
    pub fn storage_time(&self) -> f64 {
        1.0 / self.params.period
    }

    /// Mean optical depth weighted by a spectral intensity profile.
    ///
    /// With uniform weights this is the band-average depth `d̄`; fed with
    /// the input photon spectrum it drives the absorption estimate used in
    /// the efficiency factorization.
    pub fn spectrum_mean_depth(&self, weights: &[f64]) -> f64 {
        assert_eq!(weights.len(), self.depth.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for (d, w) in self.depth.iter().zip(weights) {
            num += d * w;
            den += w;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Columnar text export `frequency_Hz<TAB>depth`, restricted to the
    /// window that actually carries structure (bandwidth plus one period on
    /// each side).
    pub fn to_columnar(&self) -> String {
        let mut out = String::from("frequency_Hz\tdepth\n");
        let margin = self.params.bandwidth / 2.0 + self.params.period;
        for (idx, d) in self.depth.iter().enumerate() {
            let nu = self.grid.frequency(idx);
            if (nu - self.grid.center_offset).abs() <= margin {
                out.push_str(&format!("{nu:.6e}\t{d:.9e}\n"));
            }
        }
        out
    }
}

fn validate_common(
    grid: &FrequencyGrid,
    period: f64,
    finesse: f64,
    peak_depth: f64,
    background_depth: f64,
    bandwidth: f64,
) -> Result<()> {
    if period <= 0.0 {
        return Err(AfcError::InvalidParameter(format!("period = {period}")));
    }
    if finesse < 1.0 {
        return Err(AfcError::InvalidParameter(format!("finesse = {finesse}")));
    }
    if peak_depth < background_depth || background_depth < 0.0 {
        return Err(AfcError::InvalidParameter(format!(
            "need peak_depth >= background_depth >= 0, got {peak_depth} and {background_depth}"
        )));
    }
    if bandwidth > grid.span / 4.0 {
        return Err(AfcError::BandwidthExceedsGrid {
            bandwidth,
            limit: grid.span / 4.0,
        });
    }
    let resolution = grid.resolution();
    if resolution > period / 50.0 {
        return Err(AfcError::GridTooCoarse { resolution, limit: period / 50.0 });
    }
    Ok(())
}

/// Periodic tooth pattern in [0, 1]: 1 at the tooth center, 0 between teeth.
fn tooth_pattern(nu: f64, period: f64, finesse: f64, shift: f64, shape: PeakShape) -> f64 {
    let u = (nu - shift).rem_euclid(period);
    let du = u.min(period - u);
    let width = period / finesse;
    match shape {
        PeakShape::Square => {
            if du <= width / 2.0 {
                1.0
            } else {
                0.0
            }
        }
        PeakShape::Gaussian => {
            let sigma = width / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
            (-du * du / (2.0 * sigma * sigma)).exp()
        }
    }
}

/// Builds a single periodic comb.
#[allow(clippy::too_many_arguments)]
pub fn build_comb(
    period: f64,
    finesse: f64,
    peak_depth: f64,
    background_depth: f64,
    bandwidth: f64,
    shape: PeakShape,
    comb_shift: f64,
    grid: FrequencyGrid,
) -> Result<CombSpectrum> {
    validate_common(&grid, period, finesse, peak_depth, background_depth, bandwidth)?;
    let n = grid.n_points;
    let mut depth = vec![0.0; n];
    let tooth_height = peak_depth - background_depth;
    for (idx, d) in depth.iter_mut().enumerate() {
        let nu = grid.frequency(idx);
        // the whole prepared structure (teeth and window) translates with
        // comb_shift, so a shifted comb is an exact translation of the
        // unshifted one
        let rel = nu - grid.center_offset - comb_shift;
        if rel.abs() <= bandwidth / 2.0 {
            *d = background_depth
                + tooth_height * tooth_pattern(rel, period, finesse, 0.0, shape);
        }
    }
    Ok(CombSpectrum {
        grid,
        depth,
        params: CombParams {
            period,
            finesse,
            peak_depth,
            background_depth,
            bandwidth,
            comb_shift,
            shape,
        },
        clipped: false,
    })
}

/// Double-readout comb: superposition of two periodic structures with
/// periods `1/t_short` and `1/t_long`, splitting the read-out into two
/// echoes whose intensity ratio follows `weight` and whose phases are
/// controlled independently through the per-structure shifts.
#[allow(clippy::too_many_arguments)]
pub fn double_readout_comb(
    t_short: f64,
    t_long: f64,
    weight: f64,
    phases: (f64, f64),
    peak_depth: f64,
    finesse: f64,
    bandwidth: f64,
    shape: PeakShape,
    grid: FrequencyGrid,
) -> Result<CombSpectrum> {
    if t_short <= 0.0 || t_long <= t_short {
        return Err(AfcError::InvalidParameter(format!(
            "need 0 < t_short < t_long, got {t_short} and {t_long}"
        )));
    }
    if !(0.0..1.0).contains(&weight) || weight == 0.0 {
        return Err(AfcError::InvalidParameter(format!("weight = {weight}")));
    }
    let period_short = 1.0 / t_short;
    let period_long = 1.0 / t_long;
    validate_common(&grid, period_long, finesse, peak_depth, 0.0, bandwidth)?;

    // phase-to-shift mapping: echo phase grows as 2π·shift/Δ
    let shift_short = phases.0 / std::f64::consts::TAU * period_short;
    let shift_long = phases.1 / std::f64::consts::TAU * period_long;

    let depth_short = weight * peak_depth;
    let depth_long = (1.0 - weight) * peak_depth;

    let n = grid.n_points;
    let mut depth = vec![0.0; n];
    let mut clipped = false;
    for (idx, d) in depth.iter_mut().enumerate() {
        let nu = grid.frequency(idx);
        let rel_s = nu - grid.center_offset - shift_short;
        let rel_l = nu - grid.center_offset - shift_long;
        let mut v = 0.0;
        if rel_s.abs() <= bandwidth / 2.0 {
            v += depth_short * tooth_pattern(rel_s, period_short, finesse, 0.0, shape);
        }
        if rel_l.abs() <= bandwidth / 2.0 {
            v += depth_long * tooth_pattern(rel_l, period_long, finesse, 0.0, shape);
        }
        if v > peak_depth {
            // optical pumping cannot exceed the material depth
            v = peak_depth;
            clipped = true;
        }
        *d = v;
    }
    Ok(CombSpectrum {
        grid,
        depth,
        params: CombParams {
            period: period_short,
            finesse,
            peak_depth,
            background_depth: 0.0,
            bandwidth,
            comb_shift: shift_short,
            shape,
        },
        clipped,
    })
}

#[cfg(test)]
mod tests;
