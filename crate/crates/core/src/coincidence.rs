//! Statistical analysis of timestamp streams: delay histograms, windowed
//! counting, g² cross-correlation, sinusoidal fringe fits and CHSH
//! correlators with Poissonian error propagation.
//!
//! All timestamps are integer picoseconds; histogramming is exact integer
//! arithmetic so that histograms from disjoint time slices merge by plain
//! bin-wise addition and time translations act exactly.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Classical bound on the cross-correlation for thermal marginals
/// (`g_s = g_i = 2`); values above it certify non-classical correlations.
pub const NONCLASSICAL_BOUND: f64 = 2.0;

/// Quantum maximum of the CHSH polynomial.
pub const CHSH_QUANTUM_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum CoincidenceError {
    #[error("invalid histogram spec: {0}")]
    InvalidSpec(String),
    #[error("histograms have different binning")]
    BinningMismatch,
    #[error("need at least 3 accidental windows, got {0}")]
    TooFewAccidentalWindows(usize),
    #[error("windows overlap (offset {0:.3e} s)")]
    WindowsOverlap(f64),
    #[error("window widths differ")]
    WindowWidthMismatch,
    #[error("all four counts are zero")]
    NoCounts,
    #[error("fit needs >= 4 distinct phases spanning more than pi")]
    InsufficientPhaseCoverage,
    #[error("phases and counts have different lengths")]
    LengthMismatch,
    #[error("degenerate design matrix")]
    DegenerateFit,
}

pub type Result<T> = std::result::Result<T, CoincidenceError>;

/// Histogram of signal-minus-idler detection-time differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistogram {
    bin_width_ps: i64,
    min_ps: i64,
    counts: Vec<u64>,
    n_start_tags: u64,
    n_stop_tags: u64,
}

impl DelayHistogram {
    /// Empty histogram for delays in `[range.0, range.1)` seconds with the
    /// given bin width; the range is widened to a whole number of bins.
    pub fn new(bin_width: f64, range: (f64, f64)) -> Result<Self> {
        let bin_width_ps = (bin_width * 1e12).round() as i64;
        if bin_width_ps <= 0 {
            return Err(CoincidenceError::InvalidSpec(format!(
                "bin width {bin_width} s"
            )));
        }
        if range.1 <= range.0 {
            return Err(CoincidenceError::InvalidSpec(format!(
                "range {:?} s",
                range
            )));
        }
        let min_ps = (range.0 * 1e12).round() as i64;
        let max_ps = (range.1 * 1e12).round() as i64;
        let n_bins = ((max_ps - min_ps) as f64 / bin_width_ps as f64).ceil() as usize;
        Ok(DelayHistogram {
            bin_width_ps,
            min_ps,
            counts: vec![0; n_bins.max(1)],
            n_start_tags: 0,
            n_stop_tags: 0,
        })
    }

    /// Adds all pairwise delays `t_signal − t_idler` falling inside the
    /// range. Both slices must be sorted ascending; the sweep is linear in
    /// the number of tags plus matches.
    pub fn accumulate(&mut self, signal: &[u64], idler: &[u64]) {
        self.n_start_tags += signal.len() as u64;
        self.n_stop_tags += idler.len() as u64;
        let max_ps = self.max_ps();
        let mut lo = 0usize; // first idler with t_i > t_s - max
        let mut hi = 0usize; // first idler with t_i > t_s - min
        for &ts in signal {
            let ts = ts as i64;
            while lo < idler.len() && (idler[lo] as i64) <= ts - max_ps {
                lo += 1;
            }
            if hi < lo {
                hi = lo;
            }
            while hi < idler.len() && (idler[hi] as i64) <= ts - self.min_ps {
                hi += 1;
            }
            for &ti in &idler[lo..hi] {
                let d = ts - ti as i64;
                let bin = (d - self.min_ps).div_euclid(self.bin_width_ps) as usize;
                if bin < self.counts.len() {
                    self.counts[bin] += 1;
                }
            }
        }
    }

    /// Bin-wise addition of two histograms with identical binning.
    pub fn merge(&mut self, other: &DelayHistogram) -> Result<()> {
        if self.bin_width_ps != other.bin_width_ps
            || self.min_ps != other.min_ps
            || self.counts.len() != other.counts.len()
        {
            return Err(CoincidenceError::BinningMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_start_tags += other.n_start_tags;
        self.n_stop_tags += other.n_stop_tags;
        Ok(())
    }

    fn max_ps(&self) -> i64 {
        self.min_ps + self.bin_width_ps * self.counts.len() as i64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_start_tags(&self) -> u64 {
        self.n_start_tags
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width_ps as f64 * 1e-12
    }

    /// Center of bin `idx` in seconds.
    pub fn bin_center(&self, idx: usize) -> f64 {
        (self.min_ps + self.bin_width_ps * idx as i64) as f64 * 1e-12
            + self.bin_width() / 2.0
    }

    /// Delay of the highest bin, seconds.
    pub fn peak_delay(&self) -> f64 {
        let idx = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.bin_center(idx)
    }

    /// Total counts in bins whose centers lie within
    /// `[center − width/2, center + width/2)`.
    pub fn window_count(&self, center: f64, width: f64) -> WindowCount {
        let lo = center - width / 2.0;
        let hi = center + width / 2.0;
        let mut count = 0u64;
        for (idx, &c) in self.counts.iter().enumerate() {
            let t = self.bin_center(idx);
            if t >= lo && t < hi {
                count += c;
            }
        }
        WindowCount { center, width, count }
    }

    /// CSV export `delay_s,counts`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_s,counts\n");
        for (idx, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.6e},{}\n", self.bin_center(idx), c));
        }
        out
    }
}

/// Builds a histogram from two sorted tag slices in one pass.
pub fn histogram(
    signal: &[u64],
    idler: &[u64],
    bin_width: f64,
    range: (f64, f64),
) -> Result<DelayHistogram> {
    let mut h = DelayHistogram::new(bin_width, range)?;
    h.accumulate(signal, idler);
    Ok(h)
}

/// Counts in one coincidence window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCount {
    /// Window center, seconds of delay.
    pub center: f64,
    /// Window width, seconds.
    pub width: f64,
    pub count: u64,
}

/// Cross-correlation estimate from a peak window and off-peak accidental
/// windows.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub g2: f64,
    pub sigma: f64,
    /// Set when no accidental count was found; `g2` is then the lower bound
    /// obtained by assuming one accidental count in total.
    pub lower_bound: bool,
    pub n_peak: u64,
    pub n_accidental: u64,
    pub n_accidental_windows: usize,
}

impl G2Estimate {
    /// `(g2 − 2) / sigma`, the distance to the classical bound.
    pub fn nonclassical_significance(&self) -> f64 {
        (self.g2 - NONCLASSICAL_BOUND) / self.sigma
    }
}

/// Estimates `g²_si = N_peak / mean(N_accidental)` with Poisson errors.
///
/// `accidental_offsets` are window centers (delays in seconds) far from the
/// coincidence peak; at least three are required and all windows (peak
/// included) must be pairwise disjoint.
pub fn g2si(
    hist: &DelayHistogram,
    peak: (f64, f64),
    accidental_offsets: &[f64],
) -> Result<G2Estimate> {
    if accidental_offsets.len() < 3 {
        return Err(CoincidenceError::TooFewAccidentalWindows(
            accidental_offsets.len(),
        ));
    }
    let (center, width) = peak;
    let mut all_centers = vec![center];
    all_centers.extend_from_slice(accidental_offsets);
    let mut sorted = all_centers.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in sorted.windows(2) {
        if pair[1] - pair[0] < width {
            return Err(CoincidenceError::WindowsOverlap(pair[0]));
        }
    }

    let n_peak = hist.window_count(center, width).count;
    let n_acc: u64 = accidental_offsets
        .iter()
        .map(|&c| hist.window_count(c, width).count)
        .sum();
    let k = accidental_offsets.len() as f64;

    if n_acc == 0 {
        return Ok(G2Estimate {
            g2: n_peak as f64 * k,
            sigma: n_peak as f64 * k,
            lower_bound: true,
            n_peak,
            n_accidental: 0,
            n_accidental_windows: accidental_offsets.len(),
        });
    }
    let g2 = n_peak as f64 * k / n_acc as f64;
    let rel = (1.0 / n_peak.max(1) as f64 + 1.0 / n_acc as f64).sqrt();
    Ok(G2Estimate {
        g2,
        sigma: g2 * rel,
        lower_bound: false,
        n_peak,
        n_accidental: n_acc,
        n_accidental_windows: accidental_offsets.len(),
    })
}

/// Bell correlator assembled from the four outcome counts.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorrelatorEstimate {
    /// `E = (N₊₊ + N₋₋ − N₊₋ − N₋₊) / ΣN`.
    pub e: f64,
    /// Poisson standard deviation of `E`.
    pub sigma: f64,
    /// `(N₊₊, N₊₋, N₋₊, N₋₋)`.
    pub counts: [u64; 4],
}

/// Builds a correlator estimate from four equal-width window counts ordered
/// `(N₊₊, N₊₋, N₋₊, N₋₋)`.
pub fn correlator(counts: &[WindowCount; 4]) -> Result<CorrelatorEstimate> {
    let w0 = counts[0].width;
    if counts.iter().any(|c| (c.width - w0).abs() > 1e-15) {
        return Err(CoincidenceError::WindowWidthMismatch);
    }
    let n: [u64; 4] = [
        counts[0].count,
        counts[1].count,
        counts[2].count,
        counts[3].count,
    ];
    correlator_from_counts(n)
}

/// Same as [`correlator`] but straight from raw counts.
pub fn correlator_from_counts(n: [u64; 4]) -> Result<CorrelatorEstimate> {
    let total: u64 = n.iter().sum();
    if total == 0 {
        return Err(CoincidenceError::NoCounts);
    }
    let plus = (n[0] + n[3]) as f64;
    let minus = (n[1] + n[2]) as f64;
    let tot = total as f64;
    let e = (plus - minus) / tot;
    // independent Poisson counts: Var(E) = 4 P M / N^3
    let sigma = 2.0 * (plus * minus).sqrt() / tot.powf(1.5);
    Ok(CorrelatorEstimate { e, sigma, counts: n })
}

/// CHSH combination of four correlators.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshEstimate {
    pub s: f64,
    pub sigma: f64,
    /// Set when `|S|` exceeds the quantum bound `2√2` beyond numerical
    /// tolerance; such a value cannot come from a quantum state and flags a
    /// biased estimate.
    pub unphysical: bool,
}

/// `S = Σ signᵢ·Eᵢ` with `σ_S = √(Σ σᵢ²)`.
pub fn chsh_s(correlators: &[CorrelatorEstimate; 4], signs: [f64; 4]) -> ChshEstimate {
    let s: f64 = correlators
        .iter()
        .zip(signs)
        .map(|(c, sg)| sg * c.e)
        .sum();
    let sigma = correlators
        .iter()
        .map(|c| c.sigma * c.sigma)
        .sum::<f64>()
        .sqrt();
    ChshEstimate {
        s,
        sigma,
        unphysical: s.abs() > CHSH_QUANTUM_BOUND + 1e-9,
    }
}

/// Result of the sinusoidal fringe fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    pub visibility_sigma: f64,
    /// Phase offset φ₀ in `counts ≈ A(1 + V cos(φ + φ₀))`.
    pub phase_offset: f64,
    pub phase_sigma: f64,
    pub baseline: f64,
}

/// Weighted least-squares fit of `counts ≈ A(1 + V cos(φ + φ₀))` with
/// Poisson weights.
///
/// The model is linearized as `A + B cos φ + C sin φ`. A first pass weights
/// by the observed counts, a second pass reweights by the fitted rates;
/// the refit removes the count-weight correlation bias of plain
/// `1/count` weighting. Visibility and phase follow from
/// `V = √(B²+C²)/A`, `φ₀ = atan2(−C, B)` with errors by the delta method on
/// the normal-equation covariance.
pub fn fit_visibility(phases: &[f64], counts: &[u64]) -> Result<VisibilityFit> {
    if phases.len() != counts.len() {
        return Err(CoincidenceError::LengthMismatch);
    }
    let mut distinct: Vec<f64> = phases.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 4
        || distinct.last().unwrap() - distinct.first().unwrap() <= std::f64::consts::PI
    {
        return Err(CoincidenceError::InsufficientPhaseCoverage);
    }

    let solve = |weights: &[f64]| -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut xtwx = Matrix3::<f64>::zeros();
        let mut xtwy = Vector3::<f64>::zeros();
        for ((&phi, &c), &w) in phases.iter().zip(counts).zip(weights) {
            let x = Vector3::new(1.0, phi.cos(), phi.sin());
            xtwx += x * x.transpose() * w;
            xtwy += x * (w * c as f64);
        }
        let cov = xtwx
            .try_inverse()
            .ok_or(CoincidenceError::DegenerateFit)?;
        Ok((cov * xtwy, cov))
    };

    // ordinary least squares first (exactly unbiased), then two
    // Fisher-scoring passes with model-based Poisson weights
    let mut weights = vec![1.0; phases.len()];
    let mut beta = Vector3::zeros();
    let mut cov = Matrix3::zeros();
    for _ in 0..3 {
        let (b, c) = solve(&weights)?;
        beta = b;
        cov = c;
        for (w, &phi) in weights.iter_mut().zip(phases) {
            let lam = beta[0] + beta[1] * phi.cos() + beta[2] * phi.sin();
            *w = 1.0 / lam.max(0.5);
        }
    }

    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if a.abs() < 1e-12 {
        return Err(CoincidenceError::DegenerateFit);
    }
    let r = (b * b + c * c).sqrt();
    let visibility = r / a;
    let phase_offset = (-c).atan2(b);

    // delta method: gradients of V and phi0 in (A, B, C)
    let gv = Vector3::new(-r / (a * a), b / (a * r.max(1e-300)), c / (a * r.max(1e-300)));
    let r2 = (b * b + c * c).max(1e-300);
    let gp = Vector3::new(0.0, c / r2, -b / r2);
    let visibility_sigma = (gv.transpose() * cov * gv)[0].max(0.0).sqrt();
    let phase_sigma = (gp.transpose() * cov * gp)[0].max(0.0).sqrt();

    Ok(VisibilityFit {
        visibility,
        visibility_sigma,
        phase_offset,
        phase_sigma,
        baseline: a,
    })
}
