//! Sampling of realizations `A = V ⊙ W` and shifted matrices `A − z·Id`,
//! with reproducible seeding and counter-based per-trial substreams.

use std::sync::OnceLock;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{self, LinalgError};
use crate::profile::VarianceProfile;

/// Entry distributions for `W`. Every kind is centered with unit absolute
/// second moment; the complex kind has independent real and imaginary parts
/// of variance 1/2 each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    RealGaussian,
    RealUniformCentered,
    ComplexGaussianSplit,
}

/// Entry distribution plus its subgaussian norm hint `K` and normalized
/// density bound hint `ρ₀`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EntryDistribution {
    pub kind: DistributionKind,
    pub subgaussian_norm_hint: f64,
    pub density_bound_hint: f64,
}

impl EntryDistribution {
    pub fn new(kind: DistributionKind) -> Self {
        // K from E exp(|W|²/K²) ≤ 2; ρ₀ is the density sup of the
        // normalized real (resp. real/imaginary) part.
        let (k, rho0) = match kind {
            DistributionKind::RealGaussian => ((8.0f64 / 3.0).sqrt(), 1.0 / (2.0 * std::f64::consts::PI).sqrt()),
            DistributionKind::RealUniformCentered => {
                ((3.0f64 / std::f64::consts::LN_2).sqrt(), 1.0 / (2.0 * 3.0f64.sqrt()))
            }
            DistributionKind::ComplexGaussianSplit => {
                (2.0f64.sqrt(), 1.0 / std::f64::consts::PI.sqrt())
            }
        };
        Self {
            kind,
            subgaussian_norm_hint: k,
            density_bound_hint: rho0,
        }
    }

    pub fn real_gaussian() -> Self {
        Self::new(DistributionKind::RealGaussian)
    }

    pub fn real_uniform_centered() -> Self {
        Self::new(DistributionKind::RealUniformCentered)
    }

    pub fn complex_gaussian_split() -> Self {
        Self::new(DistributionKind::ComplexGaussianSplit)
    }

    pub fn is_real(&self) -> bool {
        !matches!(self.kind, DistributionKind::ComplexGaussianSplit)
    }

    /// Draws one normalized entry of `W`.
    pub fn draw(&self, rng: &mut ChaCha12Rng) -> Complex64 {
        match self.kind {
            DistributionKind::RealGaussian => {
                let g: f64 = StandardNormal.sample(rng);
                Complex64::new(g, 0.0)
            }
            DistributionKind::RealUniformCentered => {
                let half_width = 3.0f64.sqrt();
                let u = Uniform::new_inclusive(-half_width, half_width)
                    .expect("valid uniform range")
                    .sample(rng);
                Complex64::new(u, 0.0)
            }
            DistributionKind::ComplexGaussianSplit => {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            }
        }
    }
}

/// One sampled realization `A − z·Id` with its provenance and lazily cached
/// spectra. Immutable after construction; safe to share across threads.
#[derive(Debug)]
pub struct SpectralSample {
    profile: VarianceProfile,
    shift: Complex64,
    matrix: Array2<Complex64>,
    seed: u64,
    cached_singular_values: OnceLock<Result<Vec<f64>, LinalgError>>,
    cached_eigenvalues: OnceLock<Result<Vec<Complex64>, LinalgError>>,
}

impl SpectralSample {
    pub fn profile(&self) -> &VarianceProfile {
        &self.profile
    }

    pub fn shift(&self) -> Complex64 {
        self.shift
    }

    /// The full shifted matrix `A − z·Id`.
    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    /// Entry of the unshifted `A` (the stored matrix with `z` restored on the
    /// diagonal).
    pub fn unshifted_entry(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            self.matrix[(i, j)] + self.shift
        } else {
            self.matrix[(i, j)]
        }
    }

    /// Principal submatrix `A_J − z·Id` for a sorted index set `J`.
    pub fn shifted_principal_submatrix(&self, subset: &[usize]) -> Array2<Complex64> {
        let m = subset.len();
        Array2::from_shape_fn((m, m), |(a, b)| self.matrix[(subset[a], subset[b])])
    }

    /// Principal submatrix of the unshifted `A`.
    pub fn unshifted_principal_submatrix(&self, subset: &[usize]) -> Array2<Complex64> {
        let m = subset.len();
        Array2::from_shape_fn((m, m), |(a, b)| self.unshifted_entry(subset[a], subset[b]))
    }

    /// Descending singular values of `A − z·Id`, computed once and cached.
    pub fn singular_values(&self) -> Result<&[f64], LinalgError> {
        self.cached_singular_values
            .get_or_init(|| linalg::singular_spectrum(&self.matrix).map(|s| s.into_values()))
            .as_deref()
            .map_err(|e| e.clone())
    }

    /// Smallest singular value of `A − z·Id`.
    pub fn smin(&self) -> Result<f64, LinalgError> {
        let values = self.singular_values()?;
        Ok(*values.last().expect("n >= 1"))
    }

    /// Eigenvalues of `A − z·Id`, computed once and cached.
    pub fn eigenvalues(&self) -> Result<&[Complex64], LinalgError> {
        self.cached_eigenvalues
            .get_or_init(|| linalg::eigenvalues(&self.matrix))
            .as_deref()
            .map_err(|e| e.clone())
    }

    /// Serializes the shifted matrix to the complex matrix text format
    /// (entries as `re+imi`).
    pub fn matrix_to_text(&self) -> String {
        let n = self.n();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format_complex(self.matrix[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn format_complex(v: Complex64) -> String {
    if v.im >= 0.0 {
        format!("{}+{}i", v.re, v.im)
    } else {
        format!("{}-{}i", v.re, -v.im)
    }
}

/// Parses the complex matrix text format produced by
/// [`SpectralSample::matrix_to_text`].
pub fn matrix_from_text(text: &str) -> Result<Array2<Complex64>, String> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or("empty input")?
        .parse()
        .map_err(|e| format!("bad dimension: {e}"))?;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let tok = tokens.next().ok_or(format!("missing entry ({i}, {j})"))?;
            out[(i, j)] = parse_complex(tok).map_err(|e| format!("entry ({i}, {j}): {e}"))?;
        }
    }
    Ok(out)
}

fn parse_complex(tok: &str) -> Result<Complex64, String> {
    let body = tok.strip_suffix('i').ok_or("missing trailing 'i'")?;
    // split at the last +/- that is not an exponent sign and not leading
    let bytes = body.as_bytes();
    let mut split = None;
    for pos in (1..bytes.len()).rev() {
        let c = bytes[pos];
        if (c == b'+' || c == b'-') && !matches!(bytes[pos - 1], b'e' | b'E') {
            split = Some(pos);
            break;
        }
    }
    let pos = split.ok_or("missing imaginary part separator")?;
    let re: f64 = body[..pos].parse().map_err(|e| format!("bad real part: {e}"))?;
    let im: f64 = body[pos..].parse().map_err(|e| format!("bad imaginary part: {e}"))?;
    Ok(Complex64::new(re, im))
}

/// Draws `A = V ⊙ W` and forms `A − z·Id`. Deterministic for fixed
/// `(profile, dist, z, seed)`; entries are filled in row-major order from a
/// ChaCha12 stream seeded by `seed`. A zero profile entry forces an exact
/// zero in `A` regardless of the drawn `W` value.
pub fn sample(
    profile: &VarianceProfile,
    dist: &EntryDistribution,
    z: Complex64,
    seed: u64,
) -> SpectralSample {
    let n = profile.n();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let w = dist.draw(&mut rng);
            let v = profile.get(i, j);
            let mut a = if v == 0.0 { Complex64::new(0.0, 0.0) } else { w * v };
            if i == j {
                a -= z;
            }
            matrix[(i, j)] = a;
        }
    }
    SpectralSample {
        profile: profile.clone(),
        shift: z,
        matrix,
        seed,
        cached_singular_values: OnceLock::new(),
        cached_eigenvalues: OnceLock::new(),
    }
}


fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the substream seed for a trial. Counter-based, so parallel trials
/// need no shared RNG state; distinct trial indices give statistically
/// independent reproducible streams.
pub fn per_trial_stream(seed: u64, trial_index: u64) -> u64 {
    let mut s = seed;
    let master = splitmix64(&mut s);
    let mut t = master ^ trial_index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut t)
}
