//! Sequential two-outcome measurements on a qubit and the entangled state with
//! the same outcome statistics.
//!
//! `n` successive measurements with Kraus operators `K_i = |xi~_i><xi_i|` give
//! outcome string `i_1 ... i_n` with probability
//! `p = || K_{i_n} ... K_{i_1} psi ||^2`. A single-shot measurement of the
//! `n`-party state `sum sqrt(p) |xi_{i_1}> ... |xi_{i_n}>` in the `{xi_0, xi_1}`
//! basis reproduces exactly the same distribution.

use nalgebra::{DVector, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Qubit = Vector2<Complex64>;

const ORTHO_TOL: f64 = 1e-12;
const COMPLETENESS_TOL: f64 = 1e-10;

/// Two rank-one Kraus operators built on an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausPair {
    pub k0: Matrix2<Complex64>,
    pub k1: Matrix2<Complex64>,
    pub xi0: Qubit,
    pub xi1: Qubit,
}

impl KrausPair {
    /// `K_i = |tilde_i><xi_i|`; `xi0`, `xi1` must be orthonormal.
    pub fn new(xi0: Qubit, xi1: Qubit, tilde0: Qubit, tilde1: Qubit) -> Result<Self> {
        if (xi0.norm() - 1.0).abs() > ORTHO_TOL || (xi1.norm() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::invalid("xi", "basis states must be normalized"));
        }
        let overlap = xi0.dotc(&xi1).norm();
        if overlap > ORTHO_TOL {
            return Err(Error::invalid("xi", format!("basis states overlap by {overlap:e}")));
        }
        Ok(KrausPair {
            k0: tilde0 * xi0.adjoint(),
            k1: tilde1 * xi1.adjoint(),
            xi0,
            xi1,
        })
    }

    /// `K0 = |xi1><xi0|`, `K1 = |xi0><xi1|` in the computational basis.
    pub fn swap() -> Self {
        let (e0, e1) = computational_basis();
        Self::new(e0, e1, e1, e0).expect("computational basis is orthonormal")
    }

    /// Projective measurement in the computational basis.
    pub fn projective() -> Self {
        let (e0, e1) = computational_basis();
        Self::new(e0, e1, e0, e1).expect("computational basis is orthonormal")
    }

    pub fn operator(&self, outcome: usize) -> &Matrix2<Complex64> {
        if outcome == 0 {
            &self.k0
        } else {
            &self.k1
        }
    }

    pub fn basis(&self, outcome: usize) -> &Qubit {
        if outcome == 0 {
            &self.xi0
        } else {
            &self.xi1
        }
    }

    /// Largest entry of `|K0^dag K0 + K1^dag K1 - 1|`.
    pub fn completeness_error(&self) -> f64 {
        let sum = self.k0.adjoint() * self.k0 + self.k1.adjoint() * self.k1 - Matrix2::identity();
        sum.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn computational_basis() -> (Qubit, Qubit) {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    (Qubit::new(one, zero), Qubit::new(zero, one))
}

/// Outcome probabilities indexed by the string `i_1 ... i_n` read as a binary
/// number with `i_1` the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub n: usize,
    pub probabilities: Vec<f64>,
    /// Set when the pair is not a complete instrument; the table then holds raw
    /// norms that need not sum to one.
    pub warning: Option<String>,
}

impl OutcomeTable {
    pub fn label(&self, index: usize) -> String {
        outcome_label(index, self.n)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.label(i), p))
    }
}

pub fn outcome_label(index: usize, n: usize) -> String {
    (0..n)
        .map(|k| if (index >> (n - 1 - k)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn outcome_bit(index: usize, n: usize, k: usize) -> usize {
    (index >> (n - 1 - k)) & 1
}

fn check_inputs(psi: &Qubit, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one measurement"));
    }
    if n > 24 {
        return Err(Error::invalid("n", format!("{n} measurements would need 2^{n} outcomes")));
    }
    if (psi.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid("psi", "state must be normalized"));
    }
    Ok(())
}

/// Probability of every outcome string of `n` successive measurements.
pub fn sequential_measurement_distribution(pair: &KrausPair, psi: &Qubit, n: usize) -> Result<OutcomeTable> {
    check_inputs(psi, n)?;
    let mut probabilities = Vec::with_capacity(1 << n);
    for index in 0..1usize << n {
        let mut state = *psi;
        for k in 0..n {
            state = pair.operator(outcome_bit(index, n, k)) * state;
        }
        probabilities.push(state.norm_squared());
    }
    let err = pair.completeness_error();
    let warning = (err > COMPLETENESS_TOL)
        .then(|| format!("Kraus pair is not complete (error {err:e}); probabilities are raw norms"));
    Ok(OutcomeTable {
        n,
        probabilities,
        warning,
    })
}

/// Coefficients `sqrt(p_{i_1 ... i_n})` of the equivalent `n`-party state on
/// the product basis `|xi_{i_1}> ... |xi_{i_n}>`, in outcome-index order.
pub fn entangled_equivalent_state(pair: &KrausPair, psi: &Qubit, n: usize) -> Result<Vec<f64>> {
    let table = sequential_measurement_distribution(pair, psi, n)?;
    Ok(table.probabilities.iter().map(|p| p.sqrt()).collect())
}

/// The equivalent state written out in the computational basis of `n`
/// qubits (first party most significant).
pub fn expand_product_state(pair: &KrausPair, coefficients: &[f64], n: usize) -> DVector<Complex64> {
    let dim = 1usize << n;
    let mut out = DVector::from_element(dim, Complex64::new(0.0, 0.0));
    for (index, &c) in coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        // Kronecker product of the basis vectors named by the outcome string.
        let mut term = DVector::from_element(1, Complex64::new(c, 0.0));
        for k in 0..n {
            let v = pair.basis(outcome_bit(index, n, k));
            term = term.kronecker(v);
        }
        out += term;
    }
    out
}

/// Single-shot measurement of every party of an `n`-qubit state in the
/// `{xi_0, xi_1}` basis.
pub fn single_shot_distribution(pair: &KrausPair, state: &DVector<Complex64>, n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|index| {
            let mut projector = DVector::from_element(1, Complex64::new(1.0, 0.0));
            for k in 0..n {
                projector = projector.kronecker(pair.basis(outcome_bit(index, n, k)));
            }
            projector.dotc(state).norm_sqr()
        })
        .collect()
}
