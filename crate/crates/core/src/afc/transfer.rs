//! Transfer function and pulse propagation through the comb filter.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use super::{AfcError, CombSpectrum, Result};

thread_local! {
    static FFT_CACHE: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn run_fft(buf: &mut [C64], forward: bool) {
    let n = buf.len();
    let fft = FFT_CACHE.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((n, forward))
            .or_insert_with(|| {
                if forward {
                    planner.plan_fft_forward(n)
                } else {
                    planner.plan_fft_inverse(n)
                }
            })
            .clone()
    });
    fft.process(buf);
}

/// How the filter phase is derived from the absorption profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseModel {
    /// Causal minimum-phase response (discrete Hilbert transform of
    /// `ln|H|`); the physical choice.
    #[default]
    MinimumPhase,
    /// Zero phase everywhere. Not physical (violates causality); kept for
    /// pedagogy to show how dispersion redistributes the echo.
    AmplitudeOnly,
}

/// Complex field amplitude on the uniform time axis paired with a
/// [`super::FrequencyGrid`] (`dt = 1/span`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEnvelope {
    pub samples: Vec<C64>,
    /// Time step in seconds.
    pub dt: f64,
    /// Time of the first sample.
    pub t0: f64,
}

impl TimeEnvelope {
    /// Transform-limited Gaussian pulse with the given intensity FWHM,
    /// centered at `center`, normalized to `energy = Σ|a|²·dt`.
    pub fn gaussian(n: usize, dt: f64, center: f64, fwhm: f64, energy: f64) -> Self {
        let sigma_i = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        let mut samples = vec![C64::new(0.0, 0.0); n];
        let mut norm = 0.0;
        for (m, s) in samples.iter_mut().enumerate() {
            let t = m as f64 * dt;
            let a = (-(t - center) * (t - center) / (4.0 * sigma_i * sigma_i)).exp();
            *s = C64::new(a, 0.0);
            norm += a * a;
        }
        let scale = (energy / (norm * dt)).sqrt();
        for s in &mut samples {
            *s *= scale;
        }
        TimeEnvelope { samples, dt, t0: 0.0 }
    }

    pub fn zeros(n: usize, dt: f64) -> Self {
        TimeEnvelope { samples: vec![C64::new(0.0, 0.0); n], dt, t0: 0.0 }
    }

    /// Total energy `Σ|a|²·dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dt
    }

    /// Energy within `[t_lo, t_hi)`.
    pub fn energy_in(&self, t_lo: f64, t_hi: f64) -> f64 {
        self.iter_window(t_lo, t_hi)
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            * self.dt
    }

    /// Energy-weighted centroid time within `[t_lo, t_hi)`.
    pub fn centroid_in(&self, t_lo: f64, t_hi: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, a) in self.iter_window(t_lo, t_hi) {
            let w = a.norm_sqr();
            num += w * t;
            den += w;
        }
        if den == 0.0 {
            f64::NAN
        } else {
            num / den
        }
    }

    /// Intensity FWHM estimated from half-maximum crossings.
    pub fn intensity_fwhm(&self) -> f64 {
        let peak = self
            .samples
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0f64, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let half = peak / 2.0;
        let first = self.samples.iter().position(|a| a.norm_sqr() >= half);
        let last = self.samples.iter().rposition(|a| a.norm_sqr() >= half);
        match (first, last) {
            (Some(f), Some(l)) => (l - f) as f64 * self.dt,
            _ => 0.0,
        }
    }

    fn index_range(&self, t_lo: f64, t_hi: f64) -> (usize, usize) {
        let lo = ((t_lo - self.t0) / self.dt).ceil().max(0.0) as usize;
        let hi = (((t_hi - self.t0) / self.dt).ceil().max(0.0) as usize).min(self.samples.len());
        (lo.min(self.samples.len()), hi)
    }

    fn iter_window(&self, t_lo: f64, t_hi: f64) -> impl Iterator<Item = (f64, C64)> + '_ {
        let (lo, hi) = self.index_range(t_lo, t_hi);
        let (t0, dt) = (self.t0, self.dt);
        self.samples[lo..hi]
            .iter()
            .enumerate()
            .map(move |(k, &a)| (t0 + (lo + k) as f64 * dt, a))
    }

    /// Columnar text export `time_s<TAB>re<TAB>im` restricted to
    /// `[t_lo, t_hi)`.
    pub fn to_columnar(&self, t_lo: f64, t_hi: f64) -> String {
        let mut out = String::from("time_s\tre\tim\n");
        for (t, a) in self.iter_window(t_lo, t_hi) {
            out.push_str(&format!("{t:.6e}\t{:.9e}\t{:.9e}\n", a.re, a.im));
        }
        out
    }
}

/// Complex transfer function `H(ν)` per grid point, monotonic frequency
/// layout matching `comb.depth`.
///
/// `|H| = e^{−d/2}` everywhere; with [`PhaseModel::MinimumPhase`] the phase
/// is the discrete Hilbert transform of `ln|H|` so the impulse response is
/// causal. `H = 1` wherever `d = 0`.
pub fn transfer_function(comb: &CombSpectrum, phase_model: PhaseModel) -> Vec<C64> {
    let dft = transfer_function_dft(comb, phase_model);
    dft_to_centered(&dft)
}

/// Same as [`transfer_function`] but in DFT (wrap-around) frequency order,
/// ready to multiply onto an FFT'd envelope.
pub(crate) fn transfer_function_dft(comb: &CombSpectrum, phase_model: PhaseModel) -> Vec<C64> {
    let n = comb.grid.n_points;
    // log-magnitude in DFT order: centered index k -> dft index (k + n/2) % n
    let mut log_mag = vec![C64::new(0.0, 0.0); n];
    for (k, &d) in comb.depth.iter().enumerate() {
        log_mag[(k + n / 2) % n] = C64::new(-d / 2.0, 0.0);
    }
    match phase_model {
        PhaseModel::AmplitudeOnly => log_mag.iter().map(|l| C64::new(l.re.exp(), 0.0)).collect(),
        PhaseModel::MinimumPhase => {
            // real cepstrum
            let mut cep = log_mag;
            run_fft(&mut cep, false);
            let scale = 1.0 / n as f64;
            for c in &mut cep {
                *c *= scale;
            }
            // fold onto the causal half
            for (m, c) in cep.iter_mut().enumerate() {
                if m == 0 || m == n / 2 {
                    // keep
                } else if m < n / 2 {
                    *c *= 2.0;
                } else {
                    *c = C64::new(0.0, 0.0);
                }
            }
            let mut log_h = cep;
            run_fft(&mut log_h, true);
            log_h.iter().map(|l| l.exp()).collect()
        }
    }
}

fn dft_to_centered(dft: &[C64]) -> Vec<C64> {
    let n = dft.len();
    (0..n).map(|k| dft[(k + n / 2) % n]).collect()
}

/// Propagates a wavepacket through the comb filter:
/// `out = IFFT(H · FFT(in))`.
pub fn propagate(
    envelope: &TimeEnvelope,
    comb: &CombSpectrum,
    phase_model: PhaseModel,
) -> Result<TimeEnvelope> {
    let n = comb.grid.n_points;
    if envelope.samples.len() != n {
        return Err(AfcError::GridMismatch(format!(
            "envelope has {} samples, grid has {}",
            envelope.samples.len(),
            n
        )));
    }
    if (envelope.dt * comb.grid.span - 1.0).abs() > 1e-9 {
        return Err(AfcError::GridMismatch(format!(
            "envelope dt = {} s, grid requires {} s",
            envelope.dt,
            comb.grid.dt()
        )));
    }
    let h = transfer_function_dft(comb, phase_model);
    let mut spec = envelope.samples.clone();
    run_fft(&mut spec, true);
    for (s, hv) in spec.iter_mut().zip(&h) {
        *s *= hv;
    }
    run_fft(&mut spec, false);
    let scale = 1.0 / n as f64;
    for s in &mut spec {
        *s *= scale;
    }
    Ok(TimeEnvelope { samples: spec, dt: envelope.dt, t0: envelope.t0 })
}
