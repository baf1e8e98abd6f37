//! Cholesky-based solves for symmetric positive-definite systems.
//!
//! Every SPD factorisation in the crate goes through [`cholesky_spd`],
//! which climbs a fixed diagonal-jitter ladder (1e-12 up to 1e-6) before
//! giving up. Assembled loss matrices can be numerically semidefinite —
//! small matching sets produce sums of nearly collinear outer products —
//! and a hair of jitter is the difference between a fit and a crash.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Jitter ladder added to the diagonal, in order, before failing.
pub const JITTER_LADDER: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

/// Factor a symmetric positive-definite matrix, with jitter fallback.
///
/// Returns the factorisation and the jitter that was needed (0.0 in the
/// healthy case). Fails with a condition estimate when even the largest
/// jitter cannot rescue the factorisation.
pub fn cholesky_spd(m: &DMatrix<f64>, context: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    debug_assert_eq!(m.nrows(), m.ncols());
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok((ch, 0.0));
    }
    for &jitter in &JITTER_LADDER {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(jittered) {
            return Ok((ch, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        context: context.to_string(),
        cond: condition_estimate(m),
    })
}

/// Signed eigenvalue-ratio condition estimate for error reporting: the
/// usual condition number for positive spectra, negative when the matrix
/// is indefinite (so the sign itself names the failure mode).
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min.abs() < f64::MIN_POSITIVE {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let (ch, _) = cholesky_spd(m, context)?;
    let mut inv = ch.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Solve `m x = b` for SPD `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let (ch, _) = cholesky_spd(m, context)?;
    Ok(ch.solve(b))
}

/// Force exact symmetry after operations that can leave ~1e-16 asymmetry.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
