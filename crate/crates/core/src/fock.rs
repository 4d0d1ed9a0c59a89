//! Truncated Fock-basis master equation for the cavity, with and without
//! detection feedback.
//!
//! This is the independent check on the trajectory engine: it evolves the full
//! density matrix instead of a single coherent amplitude, so it knows nothing
//! about coherent-state closure.
//!
//! The drive term is written so that its stationary state is the same
//! `(omega / kappa) e^{-i phi}` used by the trajectory engine, i.e.
//! `H = (i omega / 2)(e^{-i phi} c^dag - e^{i phi} c)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::CavityParams;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default population allowed in the highest retained Fock level.
pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 1e-6;

/// Smallest power of two with at least `4 * max_photons + 20` levels.
pub fn default_dimension(max_photons: f64) -> usize {
    let need = (4.0 * max_photons.max(0.0) + 20.0).ceil() as usize;
    need.next_power_of_two()
}

/// An operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub matrix: CMatrix,
}

impl FockOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator {
            matrix: self.matrix.adjoint(),
        }
    }
}

pub struct LadderOperators {
    pub c: FockOperator,
    pub c_dagger: FockOperator,
    pub identity: FockOperator,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::invalid("dim", format!("need at least 2 Fock levels, got {dim}")));
    }
    Ok(())
}

/// Annihilation and creation operators, `<n-1|c|n> = sqrt(n)`.
pub fn build_operators(dim: usize) -> Result<LadderOperators> {
    check_dim(dim)?;
    let mut c = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        c[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    let c = FockOperator { matrix: c };
    Ok(LadderOperators {
        c_dagger: c.adjoint(),
        c,
        identity: FockOperator {
            matrix: CMatrix::identity(dim, dim),
        },
    })
}

/// `D(beta) = exp(beta c^dag - beta^* c)`, exponentiated numerically on the
/// truncated space.
pub fn displacement(beta: Complex64, dim: usize) -> Result<FockOperator> {
    let ops = build_operators(dim)?;
    let generator = &ops.c_dagger.matrix * beta - &ops.c.matrix * beta.conj();
    Ok(FockOperator {
        matrix: generator.exp(),
    })
}

/// Fock amplitudes `e^{-|alpha|^2/2} alpha^n / sqrt(n!)` for `n < dim`.
pub fn coherent_vector(alpha: Complex64, dim: usize) -> DVector<Complex64> {
    let mut v = DVector::from_element(dim, ZERO);
    let mut amp = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        v[n] = amp;
    }
    v
}

/// Density matrix on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    pub matrix: CMatrix,
}

impl FockDensityMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut m = CMatrix::zeros(dim, dim);
        m[(0, 0)] = ONE;
        Ok(FockDensityMatrix { matrix: m })
    }

    pub fn from_pure(psi: &DVector<Complex64>) -> Self {
        FockDensityMatrix {
            matrix: psi * psi.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `<c^dag c>`.
    pub fn mean_photons(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.matrix[(n, n)].re).sum()
    }

    /// `<c>`.
    pub fn mean_amplitude(&self) -> Complex64 {
        (1..self.dim())
            .map(|n| self.matrix[(n, n - 1)] * (n as f64).sqrt())
            .sum()
    }

    pub fn top_population(&self) -> f64 {
        let d = self.dim() - 1;
        self.matrix[(d, d)].re
    }

    /// Largest entry of `|rho - rho^dag|`.
    pub fn hermiticity_error(&self) -> f64 {
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(hermitian)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace, positivity and truncation leakage.
    pub fn check_invariants(&self, leakage_threshold: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Validation(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-8 {
            return Err(Error::Validation(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::Validation(format!("negative eigenvalue {min:e}")));
        }
        let top = self.top_population();
        if top > leakage_threshold {
            return Err(Error::TruncationLeakage {
                population: top,
                threshold: leakage_threshold,
                time: f64::NAN,
            });
        }
        Ok(())
    }

    /// Hilbert-Schmidt distance to another state.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }
}

/// Pure coherent state `|alpha><alpha|`. Rejects truncations with fewer than
/// `4 |alpha|^2` levels or a truncated norm off by more than `1e-8`.
pub fn coherent_state(alpha: Complex64, dim: usize) -> Result<FockDensityMatrix> {
    check_dim(dim)?;
    let photons = alpha.norm_sqr();
    let required = (4.0 * photons).ceil() as usize;
    let v = coherent_vector(alpha, dim);
    let norm = v.norm_squared();
    if dim < required || (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InadequateTruncation {
            dim,
            mean_photons: photons,
            required: required.max(default_dimension(photons)),
        });
    }
    Ok(FockDensityMatrix::from_pure(&v))
}

/// Right-hand side of the cavity master equation on a fixed truncation.
pub struct CavityGenerator {
    dim: usize,
    kappa: f64,
    eta: f64,
    /// Coefficients of `A = (omega/2)(e^{-i phi} c^dag - e^{i phi} c)`;
    /// the drive contributes `A rho - rho A`.
    raise: Complex64,
    lower: Complex64,
    sqrt_n: Vec<f64>,
    feedback: Option<CMatrix>,
}

impl CavityGenerator {
    pub fn new(params: &CavityParams, dim: usize, with_feedback: bool) -> Result<Self> {
        params.validate()?;
        check_dim(dim)?;
        let half = 0.5 * params.omega;
        let feedback = if with_feedback && params.eta > 0.0 {
            Some(displacement(params.beta, dim)?.matrix)
        } else {
            None
        };
        Ok(CavityGenerator {
            dim,
            kappa: params.kappa,
            eta: params.eta,
            raise: Complex64::from_polar(half, -params.phi()),
            lower: -Complex64::from_polar(half, params.phi()),
            sqrt_n: (0..dim).map(|n| (n as f64).sqrt()).collect(),
            feedback,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `d rho / dt`.
    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim;
        let s = &self.sqrt_n;
        let kappa = self.kappa;
        // jump = c rho c^dag
        let mut jump = CMatrix::zeros(d, d);
        for j in 0..d - 1 {
            for i in 0..d - 1 {
                jump[(i, j)] = rho[(i + 1, j + 1)] * (s[i + 1] * s[j + 1]);
            }
        }

        let mut out = CMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                // (A rho)_{ij} = raise sqrt(i) rho_{i-1,j} + lower sqrt(i+1) rho_{i+1,j}
                let mut a_rho = ZERO;
                if i > 0 {
                    a_rho += self.raise * s[i] * rho[(i - 1, j)];
                }
                if i + 1 < d {
                    a_rho += self.lower * s[i + 1] * rho[(i + 1, j)];
                }
                // (rho A)_{ij} = rho_{i,j+1} raise sqrt(j+1) + rho_{i,j-1} lower sqrt(j)
                let mut rho_a = ZERO;
                if j + 1 < d {
                    rho_a += rho[(i, j + 1)] * self.raise * s[j + 1];
                }
                if j > 0 {
                    rho_a += rho[(i, j - 1)] * self.lower * s[j];
                }
                let number = 0.5 * kappa * (i + j) as f64;
                out[(i, j)] = a_rho - rho_a - rho[(i, j)] * number;
            }
        }

        match &self.feedback {
            Some(r) => {
                let displaced = r * &jump * r.adjoint();
                let undetected = kappa * (1.0 - self.eta);
                let detected = kappa * self.eta;
                out += jump * Complex64::new(undetected, 0.0);
                out += displaced * Complex64::new(detected, 0.0);
            }
            None => out += jump * Complex64::new(kappa, 0.0),
        }
        out
    }

    fn rk4_step(&self, rho: &CMatrix, h: f64) -> CMatrix {
        let half = Complex64::new(0.5 * h, 0.0);
        let k1 = self.rhs(rho);
        let k2 = self.rhs(&(rho + &k1 * half));
        let k3 = self.rhs(&(rho + &k2 * half));
        let k4 = self.rhs(&(rho + &k3 * Complex64::new(h, 0.0)));
        rho + (k1 + k4 + (k2 + k3) * Complex64::new(2.0, 0.0)) * Complex64::new(h / 6.0, 0.0)
    }
}

/// Time derivative of `rho` under the cavity master equation.
pub fn lindblad_rhs(
    rho: &FockDensityMatrix,
    params: &CavityParams,
    with_feedback: bool,
) -> Result<FockDensityMatrix> {
    let generator = CavityGenerator::new(params, rho.dim(), with_feedback)?;
    Ok(FockDensityMatrix {
        matrix: generator.rhs(&rho.matrix),
    })
}

/// Fourth-order Runge-Kutta integration over `[0, t]` with steps no longer
/// than `dt`. Fails if the top Fock level ever holds more than
/// [`DEFAULT_LEAKAGE_THRESHOLD`].
pub fn integrate(
    rho0: &FockDensityMatrix,
    params: &CavityParams,
    t: f64,
    dt: f64,
    with_feedback: bool,
) -> Result<FockDensityMatrix> {
    let mut out = None;
    evolve(rho0, params, &[t], dt, with_feedback, DEFAULT_LEAKAGE_THRESHOLD, |_, rho| {
        out = Some(rho.clone());
    })?;
    Ok(out.expect("one observation time"))
}

/// `<c^dag c>` at each of the ascending `times`.
pub fn mean_photon_curve(
    rho0: &FockDensityMatrix,
    params: &CavityParams,
    times: &[f64],
    dt: f64,
    with_feedback: bool,
    leakage_threshold: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    evolve(rho0, params, times, dt, with_feedback, leakage_threshold, |_, rho| {
        out.push(rho.mean_photons());
    })?;
    Ok(out)
}

/// Integrates through the ascending `times`, calling `observe` at each.
pub fn evolve(
    rho0: &FockDensityMatrix,
    params: &CavityParams,
    times: &[f64],
    dt: f64,
    with_feedback: bool,
    leakage_threshold: f64,
    mut observe: impl FnMut(f64, &FockDensityMatrix),
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if times.iter().any(|&t| !(t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("times", "must be ascending and >= 0"));
    }
    let generator = CavityGenerator::new(params, rho0.dim(), with_feedback)?;
    let mut rho = rho0.clone();
    let mut now = 0.0;
    for &target in times {
        let span = target - now;
        let steps = (span / dt).ceil() as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for k in 0..steps {
                rho.matrix = generator.rk4_step(&rho.matrix, h);
                let top = rho.top_population();
                if top > leakage_threshold {
                    return Err(Error::TruncationLeakage {
                        population: top,
                        threshold: leakage_threshold,
                        time: now + (k + 1) as f64 * h,
                    });
                }
            }
        }
        now = target;
        observe(now, &rho);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(alpha_sq: f64, phi: f64, eta: f64) -> CavityParams {
        CavityParams::from_photon_number(alpha_sq, phi, eta).unwrap()
    }

    #[test]
    fn ladder_entries() {
        let ops = build_operators(2).unwrap();
        assert_eq!(ops.c.matrix[(0, 1)], ONE);
        assert_eq!(ops.c.matrix.iter().filter(|z| z.norm() > 0.0).count(), 1);
        let ops = build_operators(4).unwrap();
        assert_relative_eq!(ops.c.matrix[(2, 3)].re, 3f64.sqrt());
        assert!(build_operators(1).is_err());
    }

    #[test]
    fn commutator_is_identity_below_truncation() {
        let dim = 12;
        let ops = build_operators(dim).unwrap();
        let comm = &ops.c.matrix * &ops.c_dagger.matrix - &ops.c_dagger.matrix * &ops.c.matrix;
        for n in 0..dim - 1 {
            assert!((comm[(n, n)] - ONE).norm() < 1e-14);
            for m in 0..dim - 1 {
                if m != n {
                    assert!(comm[(n, m)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn coherent_state_examples() {
        let vac = coherent_state(ZERO, 16).unwrap();
        assert_eq!(vac, FockDensityMatrix::vacuum(16).unwrap());
        let rho = coherent_state(Complex64::new(1.2, -1.5), 64).unwrap();
        assert_relative_eq!(rho.mean_photons(), 1.44 + 2.25, max_relative = 1e-10);
        assert!((rho.trace() - ONE).norm() < 1e-8);
        assert!(matches!(
            coherent_state(Complex64::new(4.0, 0.0), 32),
            Err(Error::InadequateTruncation { .. })
        ));
    }

    #[test]
    fn displaced_vacuum_is_coherent() {
        let dim = 64;
        for beta in [Complex64::new(2.0, 0.0), Complex64::new(-1.0, 1.5), Complex64::new(0.0, -2.0)] {
            let d = displacement(beta, dim).unwrap();
            let psi = d.matrix.column(0).into_owned();
            let expected = coherent_vector(beta, dim);
            assert!((psi - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn displacement_unitary_on_low_block() {
        let dim = 64;
        let d = displacement(Complex64::new(1.0, 1.0), dim).unwrap();
        let prod = d.matrix.adjoint() * &d.matrix;
        for i in 0..dim / 2 {
            for j in 0..dim / 2 {
                let expect = if i == j { ONE } else { ZERO };
                assert!((prod[(i, j)] - expect).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn stationary_state_without_feedback() {
        let p = params(4.0, 0.7, 0.5);
        let alpha = crate::trajectory::steady_state_alpha(&p).unwrap();
        let rho = coherent_state(alpha.value(), 64).unwrap();
        let d = lindblad_rhs(&rho, &p, false).unwrap();
        assert!(d.matrix.norm() < 1e-8);
    }

    #[test]
    fn vacuum_is_still_with_feedback() {
        let p = params(4.0, 0.3, 0.5).measurement_stage();
        let d = lindblad_rhs(&FockDensityMatrix::vacuum(16).unwrap(), &p, true).unwrap();
        assert!(d.matrix.norm() < 1e-15);
    }

    #[test]
    fn rhs_is_traceless() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 24;
        let mut m = CMatrix::zeros(dim, dim);
        for z in m.iter_mut() {
            *z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let mut h = &m * m.adjoint();
        let tr = h.trace();
        h /= tr;
        let rho = FockDensityMatrix { matrix: h };
        for (with_feedback, p) in [(false, params(2.0, 1.0, 0.5)), (true, params(2.0, 1.0, 0.7))] {
            let d = lindblad_rhs(&rho, &p, with_feedback).unwrap();
            assert!(d.trace().norm() < 1e-10);
        }
    }

    #[test]
    fn free_decay_matches_closed_form() {
        let p = params(4.0, 0.0, 0.5).measurement_stage();
        let rho0 = coherent_state(Complex64::new(2.0, 0.0), 64).unwrap();
        let times = [0.25, 0.5, 1.0];
        let n = mean_photon_curve(&rho0, &p, &times, 0.01, false, DEFAULT_LEAKAGE_THRESHOLD).unwrap();
        for (t, n) in times.iter().zip(n) {
            assert!((n - 4.0 * (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn steady_state_survives_integration() {
        let p = params(4.0, 1.1, 0.5);
        let alpha = crate::trajectory::steady_state_alpha(&p).unwrap();
        let rho0 = coherent_state(alpha.value(), 64).unwrap();
        let rho = integrate(&rho0, &p, 1.0, 0.01, false).unwrap();
        assert!(rho.distance(&rho0) < 1e-6);
        rho.check_invariants(DEFAULT_LEAKAGE_THRESHOLD).unwrap();
    }

    #[test]
    fn halving_step_converges() {
        let p = params(1.0, 0.3 * PI, 0.5).measurement_stage();
        let rho0 = coherent_state(Complex64::from_polar(1.0, -0.3 * PI), 64).unwrap();
        let coarse = mean_photon_curve(&rho0, &p, &[0.1], 0.01, true, 1e-6).unwrap()[0];
        let fine = mean_photon_curve(&rho0, &p, &[0.1], 0.005, true, 1e-6).unwrap()[0];
        assert!((coarse - fine).abs() < 1e-6);
    }

    #[test]
    fn leakage_is_reported() {
        let p = params(4.0, 0.0, 1.0).measurement_stage();
        let rho0 = coherent_state(Complex64::new(2.0, 0.0), 32).unwrap();
        let err = integrate(&rho0, &p, 1.0, 0.01, true).unwrap_err();
        assert!(matches!(err, Error::TruncationLeakage { .. }));
    }

    #[test]
    fn default_dimension_rule() {
        assert_eq!(default_dimension(4.0), 64);
        assert_eq!(default_dimension(1.0), 32);
        assert_eq!(default_dimension(12.0), 128);
    }
}
