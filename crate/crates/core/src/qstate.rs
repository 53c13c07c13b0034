//! Exact complex linear algebra for two-qubit time-bin states and
//! dichotomic measurements.
//!
//! Everything here is deterministic, pure and allocation-light; the
//! stochastic layer is checked against these results. The two-qubit basis is
//! fixed as `{|EE⟩, |EL⟩, |LE⟩, |LL⟩}` with the signal qubit first and the
//! early bin mapped to the first single-qubit basis vector. Sub-normalized
//! state vectors are allowed and represent loss before post-selection; all
//! measurement operations renormalize.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Tolerance for Hermiticity checks.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance below which eigenvalues of a density matrix may go negative.
pub const EIGENVALUE_TOL: f64 = 1e-10;
/// Tsirelson bound, the quantum maximum of the CHSH polynomial.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum QStateError {
    #[error("state vector has (near-)zero norm: |psi|^2 = {0:.3e}")]
    ZeroNorm(f64),
    #[error("visibility {0} outside [0, 1]")]
    VisibilityRange(f64),
    #[error("matrix is not Hermitian: max |A - A^dagger| = {0:.3e}")]
    NotHermitian(f64),
    #[error("observable is not dichotomic: max |A^2 - I| = {0:.3e}")]
    NotDichotomic(f64),
    #[error("density matrix is not positive semidefinite: min eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("density matrix trace {0} outside (0, 1]")]
    TraceRange(f64),
}

pub type Result<T> = std::result::Result<T, QStateError>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A two-qubit pure state in the `{EE, EL, LE, LL}` basis.
///
/// The squared norm lies in `(0, 1]`; values below one represent amplitude
/// lost to filtering or memory absorption that post-selection will discard.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vector4<C64>);

impl StateVector {
    pub fn new(amplitudes: [C64; 4]) -> Self {
        StateVector(Vector4::from_row_slice(&amplitudes))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.0[k]
    }
}

/// A two-qubit density matrix, Hermitian and positive semidefinite with
/// trace in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub Matrix4<C64>);

impl DensityMatrix {
    /// Wraps a raw matrix after validating the type invariants.
    pub fn new(m: Matrix4<C64>) -> Result<Self> {
        let dev = hermiticity_deviation4(&m);
        if dev > HERMITICITY_TOL {
            return Err(QStateError::NotHermitian(dev));
        }
        let min_eig = min_eigenvalue(&m);
        if min_eig < -EIGENVALUE_TOL {
            return Err(QStateError::NotPositive(min_eig));
        }
        let tr = m.trace().re;
        if tr <= 0.0 || tr > 1.0 + HERMITICITY_TOL {
            return Err(QStateError::TraceRange(tr));
        }
        Ok(DensityMatrix(m))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    /// Smallest eigenvalue (exact dense Hermitian eigensolve).
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.0)
    }
}

fn hermiticity_deviation4(m: &Matrix4<C64>) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn hermiticity_deviation2(m: &Matrix2<C64>) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn min_eigenvalue(m: &Matrix4<C64>) -> f64 {
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e))
}

/// A single-qubit Hermitian observable; Bell-test settings are dichotomic
/// (eigenvalues ±1).
#[derive(Debug, Clone, PartialEq)]
pub struct Observable(pub Matrix2<C64>);

impl Observable {
    pub fn new(m: Matrix2<C64>) -> Result<Self> {
        let dev = hermiticity_deviation2(&m);
        if dev > HERMITICITY_TOL {
            return Err(QStateError::NotHermitian(dev));
        }
        Ok(Observable(m))
    }

    pub fn sigma_x() -> Self {
        Observable(Matrix2::new(c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)))
    }

    pub fn sigma_y() -> Self {
        Observable(Matrix2::new(c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)))
    }

    pub fn sigma_z() -> Self {
        Observable(Matrix2::new(c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)))
    }

    /// `n̂·σ` for the Bloch vector `(sin θ cos φ, sin θ sin φ, cos θ)`;
    /// always dichotomic.
    pub fn bloch(theta: f64, phi: f64) -> Self {
        let (st, ct) = (theta.sin(), theta.cos());
        let (sp, cp) = (phi.sin(), phi.cos());
        Observable(Matrix2::new(
            c(ct, 0.),
            c(st * cp, -st * sp),
            c(st * cp, st * sp),
            c(-ct, 0.),
        ))
    }

    /// Equatorial analyzer setting `cos φ σ_x + sin φ σ_y`, the observable
    /// measured by an unbalanced interferometer with relative phase `φ`.
    pub fn equatorial(phi: f64) -> Self {
        Self::bloch(std::f64::consts::FRAC_PI_2, phi)
    }

    /// Linear combination `a·A + b·B` of two observables.
    pub fn combine(a: f64, lhs: &Observable, b: f64, rhs: &Observable) -> Self {
        Observable(lhs.0 * c(a, 0.) + rhs.0 * c(b, 0.))
    }

    /// Deviation of `A²` from the identity; zero for dichotomic observables.
    pub fn dichotomy_deviation(&self) -> f64 {
        let sq = self.0 * self.0;
        let mut dev = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { c(1., 0.) } else { c(0., 0.) };
                dev = dev.max((sq[(i, j)] - id).norm());
            }
        }
        dev
    }

    fn ensure_dichotomic(&self) -> Result<()> {
        let dev = self.dichotomy_deviation();
        if dev > 1e-9 {
            return Err(QStateError::NotDichotomic(dev));
        }
        Ok(())
    }
}

/// Kronecker product `A ⊗ B` of two single-qubit operators, signal first.
pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

/// The post-selected time-bin Bell state `(|EE⟩ + e^{iφ}|LL⟩)/√2`.
pub fn bell_state(phase: f64) -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new([c(h, 0.), c(0., 0.), c(0., 0.), C64::from_polar(h, phase)])
}

/// Non-maximally entangled state `(α|EE⟩ + |LL⟩)/√(1+α²)`; the first-term
/// amplitude ratio α = √η_abs describes partial absorption into the memory.
pub fn asymmetric_state(alpha: f64) -> StateVector {
    let n = 1.0 / (1.0 + alpha * alpha).sqrt();
    StateVector::new([c(alpha * n, 0.), c(0., 0.), c(0., 0.), c(n, 0.)])
}

/// Projector density matrix `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
pub fn to_density(psi: &StateVector) -> Result<DensityMatrix> {
    let n2 = psi.norm_sqr();
    if n2 < 1e-30 {
        return Err(QStateError::ZeroNorm(n2));
    }
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = psi.0[i] * psi.0[j].conj() / c(n2, 0.);
        }
    }
    // exact Hermiticity by construction, but route through the validator
    DensityMatrix::new(m)
}

/// Werner mixture `V·|Φ(φ)⟩⟨Φ(φ)| + (1−V)·I/4`.
///
/// This is the white-noise model connecting fringe visibility to two-qubit
/// fidelity; `(1+3V)/4` reproduces the measured fidelity of the experiment.
pub fn werner(visibility: f64, phase: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(QStateError::VisibilityRange(visibility));
    }
    let pure = to_density(&bell_state(phase))?;
    let m = pure.0 * c(visibility, 0.)
        + Matrix4::identity() * c((1.0 - visibility) / 4.0, 0.);
    DensityMatrix::new(m)
}

/// Correlator `Tr[ρ (A ⊗ B)]` for dichotomic observables; real and in [−1, 1].
pub fn expectation(rho: &DensityMatrix, a: &Observable, b: &Observable) -> Result<f64> {
    a.ensure_dichotomic()?;
    b.ensure_dichotomic()?;
    let joint = kron(&a.0, &b.0);
    let val = (rho.0 * joint).trace();
    debug_assert!(val.im.abs() < 1e-10);
    Ok(val.re)
}

/// CHSH polynomial `S = E(X₁Y₁) + E(X₂Y₁) + E(X₁Y₂) − E(X₂Y₂)`.
pub fn chsh(
    rho: &DensityMatrix,
    x1: &Observable,
    x2: &Observable,
    y1: &Observable,
    y2: &Observable,
) -> Result<f64> {
    let s = expectation(rho, x1, y1)? + expectation(rho, x2, y1)?
        + expectation(rho, x1, y2)?
        - expectation(rho, x2, y2)?;
    debug_assert!(s.abs() <= TSIRELSON + 1e-9);
    Ok(s)
}

/// The canonical settings achieving the Tsirelson bound on `bell_state(0)`:
/// `X₁ = σ_x, X₂ = σ_z, Y₁ = (σ_x+σ_z)/√2, Y₂ = (σ_x−σ_z)/√2`.
pub fn canonical_chsh_settings() -> (Observable, Observable, Observable, Observable) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let x = Observable::sigma_x();
    let z = Observable::sigma_z();
    let y1 = Observable::combine(h, &x, h, &z);
    let y2 = Observable::combine(h, &x, -h, &z);
    (x, z, y1, y2)
}

/// Overlap `⟨ψ|ρ|ψ⟩` with a normalized reference state.
pub fn fidelity_to(rho: &DensityMatrix, psi: &StateVector) -> f64 {
    let mut acc = c(0., 0.);
    for i in 0..4 {
        for j in 0..4 {
            acc += psi.0[i].conj() * rho.0[(i, j)] * psi.0[j];
        }
    }
    acc.re
}
