//! Computable lower-bound certificates for smallest singular values: the
//! block Gershgorin estimate, its shifted corollary, the iterative block
//! decomposition, and terminal-invertibility certification.
//!
//! Certificates consume measured spectral norms of the supplied blocks, so a
//! returned bound is sound for the realization at hand whenever its
//! precondition gate passes; a failed gate is reported, never fatal.

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::sampler::SpectralSample;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("invalid block partition: {0}")]
    BadPartition(String),
    #[error("kappa must lie in (0, 1], got {0}")]
    BadKappa(f64),
    #[error("shift must be non-zero")]
    ZeroShift,
    #[error("ambient dimension n = {n} must be at least the matrix dimension m = {m}")]
    BadAmbient { n: usize, m: usize },
    #[error("variance matrix entry ({row}, {col}) is negative or non-finite")]
    BadVariance { row: usize, col: usize },
    #[error("column {col} violates the premise: expected squared norm {sum} > {bound}")]
    ColumnPremise { col: usize, sum: f64, bound: f64 },
    #[error("subset is not a non-empty terminal: column {col} has profile squared norm {sum} > L^2 = {bound}")]
    NotATerminal { col: usize, sum: f64, bound: f64 },
    #[error("terminal subset must be non-empty")]
    EmptySubset,
    #[error("invalid subset: {0}")]
    BadSubset(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Block sizes plus the permutation that maps block-layout positions to
/// original indices (`permutation[p]` is the original index placed at
/// position `p`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockPartition {
    pub sizes: Vec<usize>,
    pub permutation: Vec<usize>,
}

impl BlockPartition {
    pub fn identity(sizes: Vec<usize>) -> Self {
        let m: usize = sizes.iter().sum();
        Self {
            sizes,
            permutation: (0..m).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn validate(&self, m: usize) -> Result<(), CertifyError> {
        if self.sizes.is_empty() || self.sizes.iter().any(|&s| s == 0) {
            return Err(CertifyError::BadPartition(
                "sizes must be non-empty and positive".into(),
            ));
        }
        if self.total() != m {
            return Err(CertifyError::BadPartition(format!(
                "sizes sum to {}, matrix dimension is {m}",
                self.total()
            )));
        }
        let mut seen = vec![false; m];
        if self.permutation.len() != m {
            return Err(CertifyError::BadPartition("permutation length mismatch".into()));
        }
        for &p in &self.permutation {
            if p >= m || seen[p] {
                return Err(CertifyError::BadPartition("not a permutation".into()));
            }
            seen[p] = true;
        }
        Ok(())
    }

    /// Block row/column offsets.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.k() + 1);
        let mut acc = 0;
        off.push(0);
        for &s in &self.sizes {
            acc += s;
            off.push(acc);
        }
        off
    }

    /// Sizes of the nested pruning sets `|I_ℓ|`, recovered from the block
    /// sizes (`|I_ℓ| = Σ_{i<k−ℓ} sizes[i]`).
    pub fn pruning_set_sizes(&self) -> Vec<usize> {
        let k = self.k();
        let mut out = Vec::with_capacity(k + 1);
        for ell in 0..=k {
            out.push(self.sizes.iter().take(k - ell).sum());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Gershgorin,
    CorollaryShifted,
    Terminal,
}

/// Outcome of a certificate evaluation. `lower_bound` is meaningful only
/// when `precondition_ok` holds.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    #[serde(rename = "bound")]
    pub lower_bound: f64,
    pub eps: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub k: usize,
    #[serde(rename = "zAbs", skip_serializing_if = "Option::is_none")]
    pub z_abs: Option<f64>,
    #[serde(rename = "preconditionOk")]
    pub precondition_ok: bool,
    /// 1-based block coordinates of the first failing norm check, when the
    /// failure is attributable to a block.
    #[serde(rename = "failedBlock", skip_serializing_if = "Option::is_none")]
    pub failed_block: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Certificate {
    fn refused(
        kind: CertificateKind,
        eps: f64,
        r: f64,
        k: usize,
        z_abs: Option<f64>,
        failed_block: Option<(usize, usize)>,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            kind,
            lower_bound: 0.0,
            eps,
            r,
            k,
            z_abs,
            precondition_ok: false,
            failed_block,
            reason: Some(reason.into()),
        }
    }
}

fn block_norms(
    m: &Array2<Complex64>,
    partition: &BlockPartition,
) -> Result<Vec<Vec<f64>>, CertifyError> {
    let off = partition.offsets();
    let k = partition.k();
    let mut norms = vec![vec![0.0; k]; k];
    for bi in 0..k {
        for bj in 0..k {
            let block = Array2::from_shape_fn(
                (partition.sizes[bi], partition.sizes[bj]),
                |(i, j)| m[(off[bi] + i, off[bj] + j)],
            );
            norms[bi][bj] = linalg::spectral_norm(&block)?;
        }
    }
    Ok(norms)
}

fn diag_blocks_are_identity(m: &Array2<Complex64>, partition: &BlockPartition) -> Option<usize> {
    let off = partition.offsets();
    for (b, _) in partition.sizes.iter().enumerate() {
        for i in off[b]..off[b + 1] {
            for j in off[b]..off[b + 1] {
                let expected = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                if m[(i, j)] != expected {
                    return Some(b);
                }
            }
        }
    }
    None
}

/// Block Gershgorin certificate: for `T` with identity diagonal blocks,
/// `‖T_{i,j}‖ ≤ R` above and `≤ ε` below the diagonal, and
/// `(4R)^k·ε·k ≤ 1/2`, certifies `s_min(T) ≥ ε·k`.
pub fn gershgorin_certificate(
    t: &Array2<Complex64>,
    partition: &BlockPartition,
    eps: f64,
    r: f64,
) -> Result<Certificate, CertifyError> {
    let (rows, cols) = t.dim();
    if rows != cols {
        return Err(CertifyError::BadPartition(format!(
            "matrix must be square, got {rows}x{cols}"
        )));
    }
    partition.validate(rows)?;
    let k = partition.k();
    let kind = CertificateKind::Gershgorin;
    if !(eps > 0.0 && eps <= 1.0) {
        return Ok(Certificate::refused(kind, eps, r, k, None, None, "eps outside (0, 1]"));
    }
    if !(r >= 1.0) {
        return Ok(Certificate::refused(kind, eps, r, k, None, None, "R below 1"));
    }
    if let Some(b) = diag_blocks_are_identity(t, partition) {
        return Ok(Certificate::refused(
            kind,
            eps,
            r,
            k,
            None,
            Some((b + 1, b + 1)),
            "diagonal block is not the identity",
        ));
    }
    let norms = block_norms(t, partition)?;
    for bi in 0..k {
        for bj in 0..k {
            if bi == bj {
                continue;
            }
            let limit = if bj > bi { r } else { eps };
            if norms[bi][bj] > limit {
                return Ok(Certificate::refused(
                    kind,
                    eps,
                    r,
                    k,
                    None,
                    Some((bi + 1, bj + 1)),
                    format!("block norm {} exceeds {limit}", norms[bi][bj]),
                ));
            }
        }
    }
    let gate = (4.0 * r).powi(k as i32) * eps * k as f64;
    if gate > 0.5 {
        return Ok(Certificate::refused(
            kind,
            eps,
            r,
            k,
            None,
            None,
            format!("(4R)^k eps k = {gate} exceeds 1/2"),
        ));
    }
    Ok(Certificate {
        kind,
        lower_bound: eps * k as f64,
        eps,
        r,
        k,
        z_abs: None,
        precondition_ok: true,
        failed_block: None,
        reason: None,
    })
}

/// Shifted corollary: for `X` with `‖X_{i,j}‖ ≤ ε|z|` on and below the block
/// diagonal, `‖X_{i,j}‖ ≤ R|z|` above, and `2(8R)^k·ε·k ≤ 1/2`, certifies
/// `s_min(X − z·Id) ≥ ε·k·|z|`.
pub fn corollary_certificate(
    x: &Array2<Complex64>,
    partition: &BlockPartition,
    z: Complex64,
    eps: f64,
    r: f64,
) -> Result<Certificate, CertifyError> {
    let (rows, cols) = x.dim();
    if rows != cols {
        return Err(CertifyError::BadPartition(format!(
            "matrix must be square, got {rows}x{cols}"
        )));
    }
    partition.validate(rows)?;
    let k = partition.k();
    let kind = CertificateKind::CorollaryShifted;
    let z_abs = z.norm();
    if z_abs == 0.0 {
        return Ok(Certificate::refused(
            kind,
            eps,
            r,
            k,
            Some(0.0),
            None,
            "shift must be non-zero",
        ));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Ok(Certificate::refused(kind, eps, r, k, Some(z_abs), None, "eps outside (0, 1]"));
    }
    if !(r >= 1.0) {
        return Ok(Certificate::refused(kind, eps, r, k, Some(z_abs), None, "R below 1"));
    }
    let norms = block_norms(x, partition)?;
    for bi in 0..k {
        for bj in 0..k {
            let limit = if bj > bi { r * z_abs } else { eps * z_abs };
            if norms[bi][bj] > limit {
                return Ok(Certificate::refused(
                    kind,
                    eps,
                    r,
                    k,
                    Some(z_abs),
                    Some((bi + 1, bj + 1)),
                    format!("block norm {} exceeds {limit}", norms[bi][bj]),
                ));
            }
        }
    }
    let gate = 2.0 * (8.0 * r).powi(k as i32) * eps * k as f64;
    if gate > 0.5 {
        return Ok(Certificate::refused(
            kind,
            eps,
            r,
            k,
            Some(z_abs),
            None,
            format!("2(8R)^k eps k = {gate} exceeds 1/2"),
        ));
    }
    Ok(Certificate {
        kind,
        lower_bound: eps * k as f64 * z_abs,
        eps,
        r,
        k,
        z_abs: Some(z_abs),
        precondition_ok: true,
        failed_block: None,
        reason: None,
    })
}

/// Iterative row pruning: given the matrix of entry variances (expected
/// squared magnitudes) with every column summing to at most `n^{−2κ}·|z|²`,
/// produces a permutation and block sizes so that every block on or below
/// the diagonal has all rows of expected squared norm at most `n^{−κ}·|z|²`.
/// Heavy rows (inclusive threshold) are collected innermost-first, so the
/// last surviving pruning set becomes the leading block.
pub fn block_decompose(
    variances: &Array2<f64>,
    n: usize,
    kappa: f64,
    z_abs: f64,
) -> Result<BlockPartition, CertifyError> {
    let (m, cols) = variances.dim();
    if m != cols || m == 0 {
        return Err(CertifyError::BadPartition(format!(
            "variance matrix must be square and non-empty, got {m}x{cols}"
        )));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(CertifyError::BadKappa(kappa));
    }
    if z_abs <= 0.0 {
        return Err(CertifyError::ZeroShift);
    }
    if n < m {
        return Err(CertifyError::BadAmbient { n, m });
    }
    for ((i, j), &v) in variances.indexed_iter() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(CertifyError::BadVariance { row: i, col: j });
        }
    }
    let nf = n as f64;
    let col_bound = nf.powf(-2.0 * kappa) * z_abs * z_abs;
    let slack = 1.0 + 1e-12;
    for j in 0..m {
        let sum: f64 = (0..m).map(|i| variances[(i, j)]).sum();
        if sum > col_bound * slack {
            return Err(CertifyError::ColumnPremise {
                col: j,
                sum,
                bound: col_bound,
            });
        }
    }
    let row_bound = nf.powf(-kappa) * z_abs * z_abs;

    // nested pruning sets I_0 ⊃ I_1 ⊃ …; stop when the heavy set is empty
    let mut sets: Vec<Vec<usize>> = vec![(0..m).collect()];
    loop {
        let current = sets.last().unwrap();
        let heavy: Vec<usize> = current
            .iter()
            .copied()
            .filter(|&i| {
                let row_sum: f64 = current.iter().map(|&j| variances[(i, j)]).sum();
                row_sum >= row_bound
            })
            .collect();
        if heavy.is_empty() {
            break;
        }
        sets.push(heavy);
    }
    let k = sets.len();
    let mut permutation = Vec::with_capacity(m);
    let mut sizes = Vec::with_capacity(k);
    let mut placed = vec![false; m];
    for ell in (0..k).rev() {
        let mut group: Vec<usize> = sets[ell].iter().copied().filter(|&i| !placed[i]).collect();
        group.sort_unstable();
        sizes.push(group.len());
        for &i in &group {
            placed[i] = true;
        }
        permutation.extend(group);
    }
    debug_assert!(k as f64 <= 1.0 / kappa + 1.0);
    Ok(BlockPartition { sizes, permutation })
}

/// The asymptotic invertibility target `n^{−κ/2}·|z|` for non-empty
/// terminals.
pub fn terminal_target(n: usize, kappa: f64, z_abs: f64) -> f64 {
    (n as f64).powf(-kappa / 2.0) * z_abs
}

/// Certifies a non-empty terminal: block-decomposes the profile variances on
/// `J`, measures the realized block norms of the unshifted `A_J`, and applies
/// the shifted corollary with `ε̂, R̂` read off the realization. A refused
/// gate means the probabilistic event failed for this realization — counted
/// by callers, not fatal.
pub fn certify_terminal(
    sample: &SpectralSample,
    subset: &[usize],
    kappa: f64,
) -> Result<Certificate, CertifyError> {
    if subset.is_empty() {
        return Err(CertifyError::EmptySubset);
    }
    let n = sample.n();
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() || subset.iter().any(|&i| i >= n) {
        return Err(CertifyError::BadSubset(
            "subset must be distinct indices below n".into(),
        ));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(CertifyError::BadKappa(kappa));
    }
    let z = sample.shift();
    let z_abs = z.norm();
    if z_abs == 0.0 {
        return Err(CertifyError::ZeroShift);
    }
    let profile = sample.profile();
    let nf = n as f64;
    let l_sq = nf.powf(-2.0 * kappa) * z_abs * z_abs;
    let slack = 1.0 + 1e-12;
    for &j in &sorted {
        let sum = profile.column_sq_norm_on(&sorted, j);
        if sum > l_sq * slack {
            return Err(CertifyError::NotATerminal {
                col: j,
                sum,
                bound: l_sq,
            });
        }
    }

    let m = sorted.len();
    let variances = Array2::from_shape_fn((m, m), |(a, b)| {
        profile.get(sorted[a], sorted[b]).powi(2)
    });
    let partition = block_decompose(&variances, n, kappa, z_abs)?;
    let k = partition.k();

    let permuted = Array2::from_shape_fn((m, m), |(a, b)| {
        sample.unshifted_entry(sorted[partition.permutation[a]], sorted[partition.permutation[b]])
    });
    let norms = block_norms(&permuted, &partition)?;

    let mut eps_hat = 0.0f64;
    let mut max_norm = 0.0f64;
    for (bi, row) in norms.iter().enumerate() {
        for (bj, &nrm) in row.iter().enumerate() {
            max_norm = max_norm.max(nrm);
            if bj <= bi {
                eps_hat = eps_hat.max(nrm / z_abs);
            }
        }
    }

    let kind = CertificateKind::Terminal;
    if max_norm == 0.0 {
        // the realized A_J vanishes, so A_J - z Id is exactly -z Id
        return Ok(Certificate {
            kind,
            lower_bound: z_abs,
            eps: 0.0,
            r: 0.0,
            k,
            z_abs: Some(z_abs),
            precondition_ok: true,
            failed_block: None,
            reason: None,
        });
    }

    let r_used = (max_norm / z_abs).max(1.0);
    let eps_used = if eps_hat > 0.0 {
        eps_hat
    } else {
        // strictly block-upper-triangular realization: every positive eps
        // bounds the lower blocks, so take the largest gate-admissible one
        (0.5 / (2.0 * (8.0 * r_used).powi(k as i32) * k as f64)).min(1.0)
    };
    if eps_used > 1.0 {
        return Ok(Certificate::refused(
            kind,
            eps_used,
            r_used,
            k,
            Some(z_abs),
            None,
            "measured eps exceeds 1",
        ));
    }
    let gate = 2.0 * (8.0 * r_used).powi(k as i32) * eps_used * k as f64;
    if gate > 0.5 {
        return Ok(Certificate::refused(
            kind,
            eps_used,
            r_used,
            k,
            Some(z_abs),
            None,
            format!("2(8R)^k eps k = {gate} exceeds 1/2"),
        ));
    }
    Ok(Certificate {
        kind,
        lower_bound: eps_used * k as f64 * z_abs,
        eps: eps_used,
        r: r_used,
        k,
        z_abs: Some(z_abs),
        precondition_ok: true,
        failed_block: None,
        reason: None,
    })
}
