//! Analytic layer for the two Bell protocols.
//!
//! Covers the Franson coincidence law, the partial-readout analyzer settings
//! and the hybrid-qubit generalized measurement where one read-out echo and
//! the transmitted pulse form the two time-bins. The hybrid measurement is a
//! projection onto `cos θ ⟨L| + e^{iφ} sin θ ⟨E|` with
//! `tan θ = √(η_echo/η_trans)`; the imbalance of the memory acts as the
//! filtering operation that undoes the asymmetry of the stored state.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::qstate::Observable;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("visibility {0} outside [0, 1]")]
    VisibilityRange(f64),
    #[error("fidelity/visibility argument {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("echo and transmission efficiencies are both zero")]
    DegenerateBudget,
    #[error("absorption efficiency must be positive, got {0}")]
    ZeroAbsorption(f64),
    #[error("inconsistent budget: eta_echo = {echo}, eta_abs^2 * eta = {product}")]
    BudgetMismatch { echo: f64, product: f64 },
    #[error("efficiency {name} = {value} outside [0, 1]")]
    EfficiencyRange { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Which physical analyzer realizes a measurement setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyzerKind {
    /// Memory read out twice; the two echoes are the interferometer arms.
    PartialReadout,
    /// Unbalanced fiber (or Michelson) interferometer.
    FiberInterferometer,
    /// Single read-out plus transmitted pulse as the two bins.
    HybridMemory,
}

/// One analyzer setting: the physical device, its relative phase and, for
/// the hybrid analyzer, the projection angle θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerSetting {
    pub kind: AnalyzerKind,
    /// Relative phase between the two arms/bins, radians in [0, 2π).
    pub phase: f64,
    /// Projection angle, radians in [0, π/2]; only meaningful for
    /// `HybridMemory`.
    pub theta: f64,
}

impl AnalyzerSetting {
    pub fn partial_readout(phase: f64) -> Self {
        AnalyzerSetting {
            kind: AnalyzerKind::PartialReadout,
            phase: phase.rem_euclid(std::f64::consts::TAU),
            theta: std::f64::consts::FRAC_PI_4,
        }
    }

    pub fn fiber_interferometer(phase: f64) -> Self {
        AnalyzerSetting {
            kind: AnalyzerKind::FiberInterferometer,
            phase: phase.rem_euclid(std::f64::consts::TAU),
            theta: std::f64::consts::FRAC_PI_4,
        }
    }

    pub fn hybrid_memory(phase: f64, theta: f64) -> Self {
        AnalyzerSetting {
            kind: AnalyzerKind::HybridMemory,
            phase: phase.rem_euclid(std::f64::consts::TAU),
            theta,
        }
    }
}

/// Efficiency budget of the hybrid analyzer.
///
/// `eta_trans` and `eta_echo` are directly measurable; `eta_abs` is the
/// absorption by the comb peaks and `eta` the re-emission efficiency of the
/// stored excitation, related by `eta_echo = eta_abs² · eta`. Residual
/// absorption between the comb peaks makes `eta_trans ≠ 1 − eta_abs`, so no
/// such constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridBudget {
    pub eta_trans: f64,
    pub eta_echo: f64,
    pub eta_abs: f64,
    pub eta: f64,
}

impl HybridBudget {
    /// Builds a budget from the two measurable efficiencies plus the comb
    /// absorption, deriving `eta` from the factorization.
    pub fn from_measured(eta_trans: f64, eta_echo: f64, eta_abs: f64) -> Result<Self> {
        for (name, value) in [
            ("eta_trans", eta_trans),
            ("eta_echo", eta_echo),
            ("eta_abs", eta_abs),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProtocolError::EfficiencyRange { name, value });
            }
        }
        if eta_abs <= 0.0 {
            return Err(ProtocolError::ZeroAbsorption(eta_abs));
        }
        let eta = eta_echo / (eta_abs * eta_abs);
        if !(0.0..=1.0).contains(&eta) {
            return Err(ProtocolError::EfficiencyRange { name: "eta", value: eta });
        }
        Ok(HybridBudget { eta_trans, eta_echo, eta_abs, eta })
    }

    /// Builds a budget from all four efficiencies, enforcing the
    /// factorization `eta_echo = eta_abs² · eta` within 1e-9.
    pub fn new(eta_trans: f64, eta_echo: f64, eta_abs: f64, eta: f64) -> Result<Self> {
        for (name, value) in [
            ("eta_trans", eta_trans),
            ("eta_echo", eta_echo),
            ("eta_abs", eta_abs),
            ("eta", eta),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProtocolError::EfficiencyRange { name, value });
            }
        }
        let product = eta_abs * eta_abs * eta;
        if (product - eta_echo).abs() > 1e-9 {
            return Err(ProtocolError::BudgetMismatch { echo: eta_echo, product });
        }
        Ok(HybridBudget { eta_trans, eta_echo, eta_abs, eta })
    }

    /// Echo-to-transmission intensity ratio.
    pub fn ratio(&self) -> f64 {
        self.eta_echo / self.eta_trans
    }
}

/// Franson coincidence probability `(1 + V cos(Δφ_s + Δφ_i))/2`, normalized
/// so the phase average is 1/2.
pub fn franson_prob(dphi_s: f64, dphi_i: f64, visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(ProtocolError::VisibilityRange(visibility));
    }
    Ok((1.0 + visibility * (dphi_s + dphi_i).cos()) / 2.0)
}

/// Projection angle of the hybrid analyzer,
/// `θ = atan √(η_echo/η_trans) ∈ [0, π/2]`.
pub fn hybrid_theta(budget: &HybridBudget) -> Result<f64> {
    if budget.eta_trans + budget.eta_echo <= 0.0 {
        return Err(ProtocolError::DegenerateBudget);
    }
    Ok((budget.eta_echo / budget.eta_trans).sqrt().atan())
}

/// The signal-side operator measured by the hybrid analyzer at phase choice
/// `φ_s ∈ {0, π}`: `X = ±sin 2θ σ_x + cos 2θ σ_z` (eigenvalues ±1).
pub fn hybrid_observables(theta: f64, phi_s: f64) -> Observable {
    let sign = phi_s.cos().signum();
    Observable::combine(
        sign * (2.0 * theta).sin(),
        &Observable::sigma_x(),
        (2.0 * theta).cos(),
        &Observable::sigma_z(),
    )
}

/// Predicted CHSH value of the hybrid protocol, `S = 2cos 2θ + 2sin 2θ`.
pub fn hybrid_predicted_s(theta: f64) -> f64 {
    2.0 * (2.0 * theta).cos() + 2.0 * (2.0 * theta).sin()
}

/// The two conclusive elements of the hybrid generalized measurement, as
/// sub-normalized bra vectors `(⟨L| component, ⟨E_QM| component)`:
///
/// * `Π₊₁ = √η_trans ⟨L| + e^{iφ_s} √(η η_abs) ⟨E_QM|`
/// * `Π₋₁ = e^{i(φ_s+π)} √η η_abs ⟨L| + √(η_trans/η_abs) ⟨E_QM|`
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPovm {
    /// `(l, e)` components of the +1 projection vector.
    pub plus: [C64; 2],
    /// `(l, e)` components of the −1 projection vector.
    pub minus: [C64; 2],
}

impl HybridPovm {
    /// Largest eigenvalue of `Π₊†Π₊ + Π₋†Π₋`; conclusive-outcome
    /// completeness requires this to stay ≤ 1 (tolerance 1e-9).
    pub fn completeness_max_eigenvalue(&self) -> f64 {
        // sum of the two rank-1 operators |v⟩⟨v| built from the bra vectors
        let mut m = [[C64::new(0., 0.); 2]; 2];
        for v in [&self.plus, &self.minus] {
            // bra (l, e) corresponds to ket (l*, e*)
            let ket = [v[0].conj(), v[1].conj()];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += ket[i] * ket[j].conj();
                }
            }
        }
        // eigenvalues of a 2x2 Hermitian matrix
        let a = m[0][0].re;
        let d = m[1][1].re;
        let b2 = m[0][1].norm_sqr();
        let disc = ((a - d) / 2.0).powi(2) + b2;
        (a + d) / 2.0 + disc.sqrt()
    }

    /// Inner product `⟨Π₊|Π₋⟩` between the two projection directions;
    /// zero only when the magnitudes are balanced.
    pub fn overlap(&self) -> C64 {
        self.plus[0] * self.minus[0].conj() + self.plus[1] * self.minus[1].conj()
    }
}

/// Builds the conclusive POVM pair of the hybrid measurement at signal phase
/// `φ_s`.
pub fn hybrid_povm(budget: &HybridBudget, phi_s: f64) -> Result<HybridPovm> {
    if budget.eta_abs <= 0.0 {
        return Err(ProtocolError::ZeroAbsorption(budget.eta_abs));
    }
    let plus = [
        C64::new(budget.eta_trans.sqrt(), 0.0),
        C64::from_polar((budget.eta * budget.eta_abs).sqrt(), phi_s),
    ];
    let minus = [
        C64::from_polar(
            budget.eta.sqrt() * budget.eta_abs,
            phi_s + std::f64::consts::PI,
        ),
        C64::new((budget.eta_trans / budget.eta_abs).sqrt(), 0.0),
    ];
    Ok(HybridPovm { plus, minus })
}

/// Mean two-qubit fidelity implied by the Werner noise model,
/// `F = (1 + 3V̄)/4`.
pub fn fidelity_from_visibility(v_mean: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v_mean) {
        return Err(ProtocolError::OutOfRange(v_mean));
    }
    Ok((1.0 + 3.0 * v_mean) / 4.0)
}

/// Entanglement witness `F ≥ 0.5` (boundary inclusive).
pub fn peres_entangled(fidelity: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(ProtocolError::OutOfRange(fidelity));
    }
    Ok(fidelity >= 0.5)
}

/// Post-selected correlators of the hybrid measurement evaluated through the
/// POVM route on the physical (non-maximally entangled) state
/// `(α|E_QM E⟩ + |LL⟩)/√(1+α²)` with `α = √η_abs`.
///
/// Returns `(E(X Y₁), E(X Y₂), conclusive probability)` for the idler
/// measured in the time-of-arrival basis (`Y₁ = σ_z`, late ↦ +1) and the
/// superposition basis (`Y₂ = σ_x`). Inconclusive outcomes are discarded
/// (fair sampling); the conclusive probability is reported so the
/// post-selection fraction stays visible.
pub fn hybrid_povm_correlators(budget: &HybridBudget, phi_s: f64) -> Result<(f64, f64, f64)> {
    let povm = hybrid_povm(budget, phi_s)?;
    let alpha = budget.eta_abs.sqrt();
    let norm = 1.0 + alpha * alpha;
    // state components in the (L, E_QM) signal basis conditioned on the
    // idler bin: idler late -> signal L with amplitude 1, idler early ->
    // signal E_QM with amplitude alpha (both / sqrt(norm)).
    let apply = |v: &[C64; 2], sig_l: C64, sig_e: C64| -> f64 {
        (v[0] * sig_l + v[1] * sig_e).norm_sqr() / norm
    };
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let a = C64::new(alpha, 0.0);

    // Y1 eigenstates are the bins themselves
    let p_plus_late = apply(&povm.plus, one, zero);
    let p_minus_late = apply(&povm.minus, one, zero);
    let p_plus_early = apply(&povm.plus, zero, a);
    let p_minus_early = apply(&povm.minus, zero, a);
    let total_z = p_plus_late + p_minus_late + p_plus_early + p_minus_early;
    let e_y1 = (p_plus_late - p_minus_late - p_plus_early + p_minus_early) / total_z;

    // Y2 eigenstates (|E⟩ ± |L⟩)/√2 with outcomes ±1
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let p_pp = apply(&povm.plus, h, a * h);
    let p_mp = apply(&povm.minus, h, a * h);
    let p_pm = apply(&povm.plus, -h, a * h);
    let p_mm = apply(&povm.minus, -h, a * h);
    let total_x = p_pp + p_mp + p_pm + p_mm;
    let e_y2 = (p_pp - p_mp - p_pm + p_mm) / total_x;

    Ok((e_y1, e_y2, total_z))
}
