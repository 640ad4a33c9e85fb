//! Variance profiles: the nonnegative matrix `V` of entry standard
//! deviations, its derived statistics, thresholding, and generators for the
//! standard profile families.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile entries must be nonnegative, found {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("profile must be square and non-empty, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("threshold delta must be nonnegative, got {0}")]
    NegativeDelta(f64),
    #[error("invalid family parameters: {0}")]
    InvalidFamily(String),
    #[error("mask is not 0/1 at ({row}, {col}): {value}")]
    NotBinaryMask { row: usize, col: usize, value: f64 },
    #[error("mask violates {d}-regularity: {kind} {index} has {count} ones")]
    NotRegular {
        d: usize,
        kind: &'static str,
        index: usize,
        count: usize,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Nonnegative matrix of entry standard deviations `V_{i,j}`.
///
/// Stored dense; immutable after construction and safe to share across
/// parallel trial workers.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    n: usize,
    entries: Array2<f64>,
}

/// Derived statistics of a profile.
///
/// `sigma_star` is the largest entry of `V`; `sigma` is the largest Euclidean
/// norm among all rows and columns of `V`; `sparsity_ratio = √n·σ*/σ` lies in
/// `[1, √n]` and is undefined for the all-zero profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileStats {
    pub sigma_star: f64,
    pub sigma: f64,
    pub sparsity_ratio: Option<f64>,
}

/// Profile with entries of magnitude at most `delta` replaced by zeros
/// (strict comparison: entries survive only if `V_{i,j} > delta`).
#[derive(Debug, Clone)]
pub struct ThresholdedProfile {
    base: VarianceProfile,
    delta: f64,
    entries: Array2<f64>,
}

/// Descriptors for the built-in profile families.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileFamily {
    /// All entries one.
    Full { n: usize },
    /// Ones on the diagonal, zero elsewhere.
    Diagonal { n: usize },
    /// Periodic band: `V_{i,j} = 1` iff `(i−j) mod n ≤ w` or `(j−i) mod n ≤ w`.
    PeriodicBand { n: usize, w: usize },
    /// Ones on and below the diagonal.
    LowerTriangular { n: usize },
    /// User 0/1 mask scaled by `1/√d`; at-most-`d` ones per row and column is
    /// validated, not enforced by construction.
    Masked { mask: Array2<f64>, d: usize },
    /// Superdiagonal `d×d` all-ones blocks at block positions `(ℓ, ℓ+1)`,
    /// zero elsewhere. Requires `d | n` and `n/d ≥ 2`.
    BlockShift { n: usize, d: usize },
}

impl VarianceProfile {
    /// Builds a profile from a square grid of nonnegative entries.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self, ProfileError> {
        let (rows, cols) = entries.dim();
        if rows != cols || rows == 0 {
            return Err(ProfileError::BadShape { rows, cols });
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !(v >= 0.0) {
                return Err(ProfileError::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        Ok(Self { n: rows, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    /// Entrywise rescaling by a nonnegative factor. Generators return unit
    /// profiles; callers scale explicitly (e.g. `1/√(2w+1)` for band ESD).
    pub fn scale(&self, factor: f64) -> Result<Self, ProfileError> {
        Self::from_entries(&self.entries * factor)
    }

    /// `σ*`, `σ` and the sparsity ratio `√n·σ*/σ`.
    pub fn stats(&self) -> ProfileStats {
        let sigma_star = self.entries.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut sigma_sq = 0.0f64;
        for j in 0..self.n {
            sigma_sq = sigma_sq.max(self.column(j).map(|v| v * v).sum());
        }
        for i in 0..self.n {
            sigma_sq = sigma_sq.max(self.row(i).map(|v| v * v).sum());
        }
        let sigma = sigma_sq.sqrt();
        let sparsity_ratio = if sigma > 0.0 {
            Some((self.n as f64).sqrt() * sigma_star / sigma)
        } else {
            None
        };
        ProfileStats {
            sigma_star,
            sigma,
            sparsity_ratio,
        }
    }

    /// Zeroes out entries of magnitude at most `delta` (strictly greater
    /// survives).
    pub fn threshold(&self, delta: f64) -> Result<ThresholdedProfile, ProfileError> {
        if !(delta >= 0.0) {
            return Err(ProfileError::NegativeDelta(delta));
        }
        let entries = self.entries.mapv(|v| if v > delta { v } else { 0.0 });
        Ok(ThresholdedProfile {
            base: self.clone(),
            delta,
            entries,
        })
    }

    /// Squared Euclidean norm of column `j` restricted to the row set
    /// `subset`, i.e. `Σ_{i∈subset} V_{i,j}²`.
    pub fn column_sq_norm_on(&self, subset: &[usize], j: usize) -> f64 {
        subset.iter().map(|&i| self.entries[(i, j)].powi(2)).sum()
    }

    /// The `subset × subset` principal submatrix of `V`.
    pub fn principal_submatrix(&self, subset: &[usize]) -> Array2<f64> {
        let m = subset.len();
        Array2::from_shape_fn((m, m), |(a, b)| self.entries[(subset[a], subset[b])])
    }

    fn row(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.entries.row(i).into_iter().copied()
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.entries.column(j).into_iter().copied()
    }

    /// Serializes to the matrix text format: first line `n`, then `n`
    /// whitespace-separated rows of reals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.n));
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.entries[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the matrix text format.
    pub fn from_text(text: &str) -> Result<Self, ProfileError> {
        let mut tokens = text.split_whitespace();
        let n: usize = tokens
            .next()
            .ok_or_else(|| ProfileError::Parse("empty input".into()))?
            .parse()
            .map_err(|e| ProfileError::Parse(format!("bad dimension: {e}")))?;
        if n == 0 {
            return Err(ProfileError::Parse("dimension must be positive".into()));
        }
        let mut entries = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let tok = tokens
                    .next()
                    .ok_or_else(|| ProfileError::Parse(format!("missing entry ({i}, {j})")))?;
                entries[(i, j)] = tok
                    .parse()
                    .map_err(|e| ProfileError::Parse(format!("bad entry ({i}, {j}): {e}")))?;
            }
        }
        if tokens.next().is_some() {
            return Err(ProfileError::Parse("trailing tokens after matrix".into()));
        }
        Self::from_entries(entries)
    }
}

impl ThresholdedProfile {
    pub fn base(&self) -> &VarianceProfile {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Builds a profile from a family descriptor.
pub fn make_profile(family: &ProfileFamily) -> Result<VarianceProfile, ProfileError> {
    match family {
        ProfileFamily::Full { n } => {
            check_dim(*n)?;
            VarianceProfile::from_entries(Array2::ones((*n, *n)))
        }
        ProfileFamily::Diagonal { n } => {
            check_dim(*n)?;
            VarianceProfile::from_entries(Array2::eye(*n))
        }
        ProfileFamily::PeriodicBand { n, w } => {
            check_dim(*n)?;
            if *w > n / 2 {
                return Err(ProfileError::InvalidFamily(format!(
                    "bandwidth w={w} exceeds n/2={}",
                    n / 2
                )));
            }
            let n = *n;
            let w = *w;
            let entries = Array2::from_shape_fn((n, n), |(i, j)| {
                let fwd = (i + n - j) % n;
                let bwd = (j + n - i) % n;
                if fwd <= w || bwd <= w {
                    1.0
                } else {
                    0.0
                }
            });
            VarianceProfile::from_entries(entries)
        }
        ProfileFamily::LowerTriangular { n } => {
            check_dim(*n)?;
            let entries = Array2::from_shape_fn((*n, *n), |(i, j)| if i >= j { 1.0 } else { 0.0 });
            VarianceProfile::from_entries(entries)
        }
        ProfileFamily::Masked { mask, d } => {
            let (rows, cols) = mask.dim();
            if rows != cols || rows == 0 {
                return Err(ProfileError::BadShape { rows, cols });
            }
            if *d == 0 {
                return Err(ProfileError::InvalidFamily("masked requires d >= 1".into()));
            }
            for ((i, j), &v) in mask.indexed_iter() {
                if v != 0.0 && v != 1.0 {
                    return Err(ProfileError::NotBinaryMask {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            for i in 0..rows {
                let count = mask.row(i).iter().filter(|&&v| v == 1.0).count();
                if count > *d {
                    return Err(ProfileError::NotRegular {
                        d: *d,
                        kind: "row",
                        index: i,
                        count,
                    });
                }
            }
            for j in 0..cols {
                let count = mask.column(j).iter().filter(|&&v| v == 1.0).count();
                if count > *d {
                    return Err(ProfileError::NotRegular {
                        d: *d,
                        kind: "column",
                        index: j,
                        count,
                    });
                }
            }
            let scale = 1.0 / (*d as f64).sqrt();
            VarianceProfile::from_entries(mask * scale)
        }
        ProfileFamily::BlockShift { n, d } => {
            check_dim(*n)?;
            if *d == 0 || n % d != 0 {
                return Err(ProfileError::InvalidFamily(format!(
                    "block_shift requires d | n, got n={n}, d={d}"
                )));
            }
            let blocks = n / d;
            if blocks < 2 {
                return Err(ProfileError::InvalidFamily(
                    "block_shift requires n/d >= 2".into(),
                ));
            }
            let (n, d) = (*n, *d);
            let entries = Array2::from_shape_fn((n, n), |(i, j)| {
                // block (ℓ, ℓ+1) for ℓ = 0..blocks-1 is all ones
                if j / d == i / d + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            VarianceProfile::from_entries(entries)
        }
    }
}

fn check_dim(n: usize) -> Result<(), ProfileError> {
    if n == 0 {
        Err(ProfileError::BadShape { rows: 0, cols: 0 })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stats_all_ones() {
        let p = make_profile(&ProfileFamily::Full { n: 9 }).unwrap();
        let s = p.stats();
        assert_eq!(s.sigma_star, 1.0);
        assert_abs_diff_eq!(s.sigma, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sparsity_ratio.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_diagonal() {
        let p = make_profile(&ProfileFamily::Diagonal { n: 16 }).unwrap();
        let s = p.stats();
        assert_eq!(s.sigma_star, 1.0);
        assert_eq!(s.sigma, 1.0);
        assert_abs_diff_eq!(s.sparsity_ratio.unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn stats_zero_profile_has_undefined_ratio() {
        let p = VarianceProfile::from_entries(Array2::zeros((3, 3))).unwrap();
        let s = p.stats();
        assert_eq!(s.sigma_star, 0.0);
        assert_eq!(s.sigma, 0.0);
        assert!(s.sparsity_ratio.is_none());
    }

    #[test]
    fn sigma_matches_brute_force_row_col_max() {
        // brute force over all 2n row/column norms, on an asymmetric profile
        let entries = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 7 + j * 3) % 4) as f64 * 0.25);
        let p = VarianceProfile::from_entries(entries.clone()).unwrap();
        let mut best = 0.0f64;
        for i in 0..5 {
            let r: f64 = (0..5).map(|j| entries[(i, j)].powi(2)).sum();
            let c: f64 = (0..5).map(|j| entries[(j, i)].powi(2)).sum();
            best = best.max(r).max(c);
        }
        assert_abs_diff_eq!(p.stats().sigma, best.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn threshold_is_strict_at_boundary() {
        let mut entries = Array2::zeros((2, 2));
        entries[(0, 0)] = 0.5;
        entries[(1, 1)] = 0.6;
        let p = VarianceProfile::from_entries(entries).unwrap();
        let t = p.threshold(0.5).unwrap();
        assert_eq!(t.get(0, 0), 0.0); // 0.5 > 0.5 is false
        assert_eq!(t.get(1, 1), 0.6);
    }

    #[test]
    fn threshold_zero_is_identity() {
        let p = make_profile(&ProfileFamily::LowerTriangular { n: 4 }).unwrap();
        let t = p.threshold(0.0).unwrap();
        assert_eq!(t.entries(), p.entries());
    }

    #[test]
    fn threshold_band_below_entries_is_identity() {
        let p = make_profile(&ProfileFamily::PeriodicBand { n: 8, w: 2 }).unwrap();
        let t = p.threshold(0.3).unwrap();
        assert_eq!(t.entries(), p.entries());
    }

    #[test]
    fn threshold_rejects_negative_delta() {
        let p = make_profile(&ProfileFamily::Full { n: 2 }).unwrap();
        assert!(p.threshold(-0.1).is_err());
    }

    #[test]
    fn band_n6_w1_has_three_ones_per_column() {
        let p = make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 1 }).unwrap();
        for j in 0..6 {
            let count = (0..6).filter(|&i| p.get(i, j) == 1.0).count();
            assert_eq!(count, 3, "column {j}");
        }
    }

    #[test]
    fn band_rows_and_columns_have_identical_sq_norm() {
        for (n, w) in [(6usize, 1usize), (9, 2), (10, 5)] {
            let p = make_profile(&ProfileFamily::PeriodicBand { n, w }).unwrap();
            let expected = (2 * w + 1).min(n) as f64;
            for k in 0..n {
                let row: f64 = (0..n).map(|j| p.get(k, j).powi(2)).sum();
                let col: f64 = (0..n).map(|i| p.get(i, k).powi(2)).sum();
                assert_eq!(row, expected);
                assert_eq!(col, expected);
            }
        }
    }

    #[test]
    fn block_shift_8_4_single_block() {
        let p = make_profile(&ProfileFamily::BlockShift { n: 8, d: 4 }).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i < 4 && j >= 4 { 1.0 } else { 0.0 };
                assert_eq!(p.get(i, j), expected, "({i}, {j})");
            }
        }
    }

    #[test]
    fn diagonal_3_is_identity_pattern() {
        let p = make_profile(&ProfileFamily::Diagonal { n: 3 }).unwrap();
        assert_eq!(p.entries(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn invalid_families_are_rejected() {
        assert!(make_profile(&ProfileFamily::PeriodicBand { n: 6, w: 4 }).is_err());
        assert!(make_profile(&ProfileFamily::BlockShift { n: 8, d: 3 }).is_err());
        assert!(make_profile(&ProfileFamily::BlockShift { n: 4, d: 4 }).is_err());
    }

    #[test]
    fn masked_validates_regularity_and_binary_entries() {
        let mut mask = Array2::zeros((3, 3));
        mask[(0, 0)] = 1.0;
        mask[(1, 0)] = 1.0;
        let p = make_profile(&ProfileFamily::Masked {
            mask: mask.clone(),
            d: 2,
        })
        .unwrap();
        assert_abs_diff_eq!(p.get(0, 0), 1.0 / 2.0f64.sqrt(), epsilon = 1e-15);
        // column 0 has 2 ones: d = 1 fails
        assert!(make_profile(&ProfileFamily::Masked {
            mask: mask.clone(),
            d: 1
        })
        .is_err());
        mask[(2, 2)] = 0.5;
        assert!(make_profile(&ProfileFamily::Masked { mask, d: 2 }).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = make_profile(&ProfileFamily::PeriodicBand { n: 5, w: 1 }).unwrap();
        let q = VarianceProfile::from_text(&p.to_text()).unwrap();
        assert_eq!(p.entries(), q.entries());
    }

    #[test]
    fn text_parse_rejects_garbage() {
        assert!(VarianceProfile::from_text("").is_err());
        assert!(VarianceProfile::from_text("2\n1 0 0").is_err());
        assert!(VarianceProfile::from_text("2\n1 0 0 x").is_err());
        assert!(VarianceProfile::from_text("2\n1 0 0 1 9").is_err());
    }

    #[test]
    fn negative_entries_rejected() {
        let mut entries = Array2::zeros((2, 2));
        entries[(0, 1)] = -1.0;
        assert!(VarianceProfile::from_entries(entries).is_err());
    }
}
