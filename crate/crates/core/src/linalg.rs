//! Dense spectral primitives: singular spectra, eigenvalues, the `∞→2` norm,
//! and the bilinear-annihilating normal vectors `𝔫_{J,j}`.
//!
//! Everything here goes through LAPACK (via `ndarray-linalg`); solver
//! failures surface as explicit errors, never silent garbage. Matrices of
//! this size (n ≲ 2000) are handled with full decompositions rather than
//! iterative methods.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigVals, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::sampler::SpectralSample;

/// Default relative solver tolerance surfaced in every report.
pub const SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone)]
pub enum LinalgError {
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("eigenvalue sum {sum} deviates from trace {trace} beyond tolerance")]
    TraceMismatch { sum: Complex64, trace: Complex64 },
    #[error("exact infinity-to-2 norm is limited to 20 columns, got {0}")]
    TooManyColumns(usize),
    #[error("randomized infinity-to-2 norm needs at least one sample")]
    NoSamples,
    #[error("invalid normal vector input: {0}")]
    BadNormalVectorInput(String),
}

/// Full singular spectrum `s₁ ≥ … ≥ s_n` of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
    solver_tolerance: f64,
}

impl SingularSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn smin(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn smax(&self) -> f64 {
        self.values[0]
    }

    pub fn solver_tolerance(&self) -> f64 {
        self.solver_tolerance
    }
}

/// Unit vector in `C^J` annihilating, under the bilinear pairing
/// `⟨x, y⟩ = Σ xᵢyᵢ`, every shifted column `col_k(A_J − z·Id)` with
/// `k ∈ J∖{j}`.
#[derive(Debug, Clone)]
pub struct NormalVector {
    subset: Vec<usize>,
    excluded: usize,
    components: Vec<Complex64>,
}

impl NormalVector {
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Components indexed in the order of `subset`.
    pub fn components(&self) -> &[Complex64] {
        &self.components
    }
}

/// Bilinear (non-conjugated) pairing `Σ xᵢyᵢ`.
pub fn bilinear_pairing(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_finite(m: &Array2<Complex64>) -> Result<(), LinalgError> {
    for ((i, j), v) in m.indexed_iter() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(LinalgError::NonFinite { row: i, col: j });
        }
    }
    Ok(())
}

fn is_real(m: &Array2<Complex64>) -> bool {
    m.iter().all(|v| v.im == 0.0)
}

/// Singular values of a rectangular complex matrix, descending. A matrix
/// with a zero dimension has an empty spectrum. Purely real inputs are
/// routed through the real LAPACK driver.
pub fn singular_values(m: &Array2<Complex64>) -> Result<Vec<f64>, LinalgError> {
    check_finite(m)?;
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let s: Array1<f64> = if is_real(m) {
        let real = m.mapv(|v| v.re);
        let (_, s, _) = real
            .svd(false, false)
            .map_err(|e| LinalgError::Solver(e.to_string()))?;
        s
    } else {
        let (_, s, _) = m
            .svd(false, false)
            .map_err(|e| LinalgError::Solver(e.to_string()))?;
        s
    };
    Ok(s.to_vec())
}

/// Singular values of a real rectangular matrix, descending.
pub fn singular_values_real(m: &Array2<f64>) -> Result<Vec<f64>, LinalgError> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    for ((i, j), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(LinalgError::NonFinite { row: i, col: j });
        }
    }
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| LinalgError::Solver(e.to_string()))?;
    Ok(s.to_vec())
}

/// Full singular spectrum of a square complex matrix.
pub fn singular_spectrum(m: &Array2<Complex64>) -> Result<SingularSpectrum, LinalgError> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let values = singular_values(m)?;
    Ok(SingularSpectrum {
        values,
        solver_tolerance: SOLVER_TOL,
    })
}

/// Smallest singular value of a square complex matrix.
pub fn smallest_singular_value(m: &Array2<Complex64>) -> Result<f64, LinalgError> {
    Ok(singular_spectrum(m)?.smin())
}

/// Spectral norm (largest singular value) of a rectangular complex matrix.
pub fn spectral_norm(m: &Array2<Complex64>) -> Result<f64, LinalgError> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Spectral norm of a real rectangular matrix.
pub fn spectral_norm_real(m: &Array2<f64>) -> Result<f64, LinalgError> {
    Ok(singular_values_real(m)?.first().copied().unwrap_or(0.0))
}

fn trace_check(m_trace: Complex64, values: &[Complex64], scale: f64) -> Result<(), LinalgError> {
    let sum: Complex64 = values.iter().sum();
    let tol = 1e-8 * (1.0 + scale);
    if (sum - m_trace).norm() > tol {
        return Err(LinalgError::TraceMismatch { sum, trace: m_trace });
    }
    Ok(())
}

/// Eigenvalues (with multiplicity) of a square complex matrix. The sum is
/// checked against the trace as a solver sanity gate.
pub fn eigenvalues(m: &Array2<Complex64>) -> Result<Vec<Complex64>, LinalgError> {
    check_finite(m)?;
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Ok(Vec::new());
    }
    let values: Vec<Complex64> = if is_real(m) {
        let real = m.mapv(|v| v.re);
        real.eigvals()
            .map_err(|e| LinalgError::Solver(e.to_string()))?
            .to_vec()
    } else {
        m.eigvals()
            .map_err(|e| LinalgError::Solver(e.to_string()))?
            .to_vec()
    };
    let trace: Complex64 = (0..rows).map(|i| m[(i, i)]).sum();
    let scale: f64 = m.iter().map(|v| v.norm()).fold(0.0, f64::max) * rows as f64;
    trace_check(trace, &values, scale)?;
    Ok(values)
}

/// Eigenvalues of a square real matrix (complex in general).
pub fn eigenvalues_real(m: &Array2<f64>) -> Result<Vec<Complex64>, LinalgError> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Ok(Vec::new());
    }
    for ((i, j), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(LinalgError::NonFinite { row: i, col: j });
        }
    }
    let values = m
        .eigvals()
        .map_err(|e| LinalgError::Solver(e.to_string()))?
        .to_vec();
    let trace = Complex64::new(m.diag().sum(), 0.0);
    let scale: f64 = m.iter().map(|v| v.abs()).fold(0.0, f64::max) * rows as f64;
    trace_check(trace, &values, scale)?;
    Ok(values)
}

/// Evaluation mode for the `∞→2` norm.
#[derive(Debug, Clone, Copy)]
pub enum InfTo2Mode {
    /// Enumerates all `±1` sign vectors (the maximum of the convex map
    /// `x ↦ ‖Mx‖₂` over the cube is attained at a vertex). Limited to 20
    /// columns.
    Exact,
    /// Maximum over sampled sign vectors; a certified lower bound.
    Randomized { samples: usize, seed: u64 },
}

/// `sup ‖Mx‖₂` over real sign vectors `x ∈ {−1, 1}^cols` — exact, or a
/// sampled lower bound in randomized mode.
pub fn inf_to_2_norm(m: &Array2<f64>, mode: InfTo2Mode) -> Result<f64, LinalgError> {
    let (rows, cols) = m.dim();
    for ((i, j), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(LinalgError::NonFinite { row: i, col: j });
        }
    }
    if rows == 0 || cols == 0 {
        return Ok(0.0);
    }
    match mode {
        InfTo2Mode::Exact => {
            if cols > 20 {
                return Err(LinalgError::TooManyColumns(cols));
            }
            // Gray-code walk over the 2^(cols-1) sign vectors with x[0] = +1
            // (the norm is symmetric under global sign flip).
            let mut signs = vec![1.0f64; cols];
            let mut y: Vec<f64> = (0..rows).map(|i| m.row(i).sum()).collect();
            let mut best = norm2(&y);
            let steps: u64 = 1u64 << (cols - 1);
            for k in 1..steps {
                let flip = k.trailing_zeros() as usize + 1;
                let delta = -2.0 * signs[flip];
                signs[flip] = -signs[flip];
                for i in 0..rows {
                    y[i] += delta * m[(i, flip)];
                }
                best = best.max(norm2(&y));
            }
            Ok(best)
        }
        InfTo2Mode::Randomized { samples, seed } => {
            if samples == 0 {
                return Err(LinalgError::NoSamples);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut best = 0.0f64;
            let mut y = vec![0.0f64; rows];
            for _ in 0..samples {
                let signs: Vec<f64> = (0..cols)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = (0..cols).map(|j| m[(i, j)] * signs[j]).sum();
                }
                best = best.max(norm2(&y));
            }
            Ok(best)
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Computes `𝔫_{J,j}`: the unit vector annihilating, under the bilinear
/// pairing, all shifted columns of `A_J − z·Id` except column `j`. When the
/// annihilator space has dimension greater than one, the smallest singular
/// direction of the transposed column block is returned; the phase is fixed
/// by making the largest-magnitude component real positive.
pub fn normal_vector(
    sample: &SpectralSample,
    subset: &[usize],
    j: usize,
) -> Result<NormalVector, LinalgError> {
    let m = subset.len();
    if m < 2 {
        return Err(LinalgError::BadNormalVectorInput(format!(
            "|J| = {m} < 2"
        )));
    }
    let Some(excl_pos) = subset.iter().position(|&x| x == j) else {
        return Err(LinalgError::BadNormalVectorInput(format!(
            "j = {j} not in J"
        )));
    };
    let shifted = sample.shifted_principal_submatrix(subset);
    // rows of `block` are the transposed other columns, so the annihilator is
    // a right null vector of this (m-1) x m matrix
    let mut block = Array2::zeros((m - 1, m));
    let mut r = 0;
    for (pos, _) in subset.iter().enumerate() {
        if pos == excl_pos {
            continue;
        }
        for i in 0..m {
            block[(r, i)] = shifted[(i, pos)];
        }
        r += 1;
    }
    let (_, _, vt) = block
        .svd(false, true)
        .map_err(|e| LinalgError::Solver(e.to_string()))?;
    let vt = vt.expect("requested vt");
    // last row of V^H, conjugated, spans the smallest singular direction
    let mut components: Vec<Complex64> = (0..m).map(|i| vt[(m - 1, i)].conj()).collect();
    let norm: f64 = components.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in components.iter_mut() {
        *c /= norm;
    }
    let lead = components
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.norm()
                .partial_cmp(&b.norm())
                .unwrap()
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .expect("m >= 2");
    let phase = components[lead].conj() / components[lead].norm();
    for c in components.iter_mut() {
        *c *= phase;
    }
    Ok(NormalVector {
        subset: subset.to_vec(),
        excluded: j,
        components,
    })
}
