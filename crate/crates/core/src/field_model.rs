//! Gaussian random fields given as finite generalized Fourier series
//! `u(x) = Σ g_k φ_k(x)` with centered Gaussian coefficients of covariance
//! `α_{k,m} = E[g_k g_m]`.
//!
//! The module provides the built-in basis families, the spatial correlation
//! function `R(x, y)`, its diagonal derivative jet `R_{k,ℓ}(x)` and seeded
//! sample paths.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Value and first two derivatives of a scalar function at a point.
pub type Jet = [f64; 3];

/// Relative tolerance for the positive semidefiniteness check of the
/// coefficient covariance.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Relative threshold below which `m33` or `det ℛ` count as degenerate.
pub const G2_TOLERANCE: f64 = 1e-12;

/// User supplied basis: `eval(k, x)` returns `(φ_k(x), φ_k'(x), φ_k''(x))`.
#[derive(Clone)]
pub struct CustomBasis {
    name: String,
    terms: usize,
    eval: Arc<dyn Fn(usize, f64) -> Jet + Send + Sync>,
}

impl CustomBasis {
    pub fn new(
        name: impl Into<String>,
        terms: usize,
        eval: impl Fn(usize, f64) -> Jet + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            terms,
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBasis")
            .field("name", &self.name)
            .field("terms", &self.terms)
            .finish_non_exhaustive()
    }
}

/// Basis family of a random series.
#[derive(Debug, Clone)]
pub enum Family {
    /// `T_k(x) = cos(k arccos x)` on `[-1, 1]`.
    Chebyshev,
    /// `cos(kπx)` on `[0, 1]`.
    CosineNeumann,
    /// `a_0` plus `a_k (g cos(2πkx/L) + g' sin(2πkx/L))` on `[0, L]`.
    /// The amplitudes enter through the coefficient variances `a_k²`.
    Periodic { length: f64, amplitudes: Vec<f64> },
    /// Monomials `x^k` on `[-3, 3]` with variances `binom(N, k)`.
    PolynomialBinomial,
    /// Monomials `x^k` on `[-3, 3]` with unit variances.
    PolynomialUnit,
    Custom(CustomBasis),
}

/// Covariance of the random coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Independent coefficients with the given variances.
    Diagonal(Vec<f64>),
    /// Full symmetric matrix, row-major.
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(v) => v.len(),
            Covariance::Full(m) => m.len(),
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Covariance::Diagonal(v) => {
                if i == j {
                    v[i]
                } else {
                    0.0
                }
            }
            Covariance::Full(m) => m[i][j],
        }
    }
}

/// Left factor `L` (row-major, `n × rank`) with `L Lᵀ = α`.
#[derive(Debug, Clone)]
enum Factor {
    Diagonal(Vec<f64>),
    Dense { rows: Vec<Vec<f64>>, rank: usize },
}

/// Symmetric pivoted Cholesky factorization of a positive semidefinite
/// matrix. Pivots below `tol` terminate the factorization; the remaining
/// Schur complement must then vanish to within `tol`.
fn pivoted_cholesky(a: &[Vec<f64>], tol: f64) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = a.len();
    let mut work: Vec<Vec<f64>> = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = vec![vec![0.0; n]; n];
    let mut rank = 0;

    for k in 0..n {
        let (piv, &dmax) = (k..n)
            .map(|i| (i, &work[perm[i]][perm[i]]))
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty pivot range");
        if dmax <= tol {
            for i in k..n {
                for j in k..n {
                    let v = work[perm[i]][perm[j]];
                    if v < -tol || (i != j && v.abs() > tol) {
                        return Err(Error::FactorizationFailure(format!(
                            "matrix is not positive semidefinite (residual entry {v:e} at ({}, {}))",
                            perm[i], perm[j]
                        )));
                    }
                }
            }
            break;
        }
        perm.swap(k, piv);
        let p = perm[k];
        let pivot = dmax.sqrt();
        l[p][k] = pivot;
        for &r in &perm[k + 1..] {
            l[r][k] = work[r][p] / pivot;
        }
        for &r in &perm[k + 1..] {
            for &c in &perm[k + 1..] {
                work[r][c] -= l[r][k] * l[c][k];
            }
        }
        rank += 1;
    }
    for row in &mut l {
        row.truncate(rank);
    }
    Ok((l, rank))
}

/// Upper triangular factor `R` of the QR decomposition of the `n × 3` matrix
/// with the given columns (overwritten).
fn householder_r(cols: &mut [Vec<f64>; 3]) -> [[f64; 3]; 3] {
    let n = cols[0].len();
    let mut r = [[0.0; 3]; 3];
    for j in 0..3.min(n) {
        let alpha = cols[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let beta = if cols[j][j] >= 0.0 { -alpha } else { alpha };
        let mut v = cols[j][j..].to_vec();
        v[0] -= beta;
        let vv: f64 = v.iter().map(|e| e * e).sum();
        for k in j + 1..3 {
            let s: f64 = v.iter().zip(&cols[k][j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vv;
            for (c, vi) in cols[k][j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        r[j][j] = beta;
    }
    for j in 1..3 {
        for i in 0..j.min(n) {
            r[i][j] = cols[j][i];
        }
    }
    r
}

/// A Gaussian random field `u(x) = Σ g_k φ_k(x)` on a compact interval.
#[derive(Debug, Clone)]
pub struct FieldModel {
    family: Family,
    terms: usize,
    covariance: Covariance,
    domain: (f64, f64),
    factor: Factor,
}

impl FieldModel {
    /// Builds a model from its parts, validating the covariance by
    /// factorization.
    pub fn new(family: Family, covariance: Covariance, domain: (f64, f64)) -> Result<Self> {
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidModel(format!("invalid domain [{a}, {b}]")));
        }
        let terms = match &family {
            Family::Periodic { length, amplitudes } => {
                if !(*length > 0.0) {
                    return Err(Error::InvalidModel(format!("period must be positive, got {length}")));
                }
                let nonzero = amplitudes.iter().filter(|&&a| a != 0.0).count();
                if nonzero < 2 {
                    return Err(Error::InvalidModel(
                        "periodic model needs at least two nonzero amplitudes".into(),
                    ));
                }
                2 * amplitudes.len() - 1
            }
            Family::Custom(basis) => basis.terms,
            _ => covariance.dim(),
        };
        if terms == 0 {
            return Err(Error::InvalidModel("model has no basis terms".into()));
        }
        if covariance.dim() != terms {
            return Err(Error::InvalidModel(format!(
                "covariance has dimension {} but the basis has {terms} terms",
                covariance.dim()
            )));
        }
        let factor = Self::factorize(&covariance)?;
        Ok(Self {
            family,
            terms,
            covariance,
            domain,
            factor,
        })
    }

    fn factorize(covariance: &Covariance) -> Result<Factor> {
        match covariance {
            Covariance::Diagonal(v) => {
                let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                let tol = PSD_TOLERANCE * scale;
                let mut sd = Vec::with_capacity(v.len());
                for (i, &var) in v.iter().enumerate() {
                    if !var.is_finite() || var < -tol {
                        return Err(Error::FactorizationFailure(format!(
                            "variance {var} of coefficient {i} is negative"
                        )));
                    }
                    sd.push(var.max(0.0).sqrt());
                }
                Ok(Factor::Diagonal(sd))
            }
            Covariance::Full(m) => {
                let n = m.len();
                if m.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidModel("covariance matrix is not square".into()));
                }
                let scale = (0..n).fold(0.0_f64, |s, i| s.max(m[i][i].abs()));
                let tol = PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE);
                for i in 0..n {
                    for j in 0..i {
                        if !m[i][j].is_finite() || (m[i][j] - m[j][i]).abs() > tol {
                            return Err(Error::FactorizationFailure(format!(
                                "covariance matrix is not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
                let (rows, rank) = pivoted_cholesky(m, tol)?;
                Ok(Factor::Dense { rows, rank })
            }
        }
    }

    /// Random Chebyshev polynomials `Σ_{k≤N} g_k T_k(x)` on `[-1, 1]`.
    pub fn chebyshev(n: usize) -> Self {
        Self::new(Family::Chebyshev, Covariance::Diagonal(vec![1.0; n + 1]), (-1.0, 1.0))
            .expect("unit variances are positive semidefinite")
    }

    /// Random cosine series `Σ_{k≤N} g_k cos(kπx)` on `[0, 1]`.
    pub fn cosine(n: usize) -> Self {
        Self::new(Family::CosineNeumann, Covariance::Diagonal(vec![1.0; n + 1]), (0.0, 1.0))
            .expect("unit variances are positive semidefinite")
    }

    /// Random `L`-periodic functions with amplitudes `a_0, a_1, …` on `[0, L]`.
    pub fn periodic(length: f64, amplitudes: Vec<f64>) -> Result<Self> {
        let mut variances = Vec::with_capacity(2 * amplitudes.len().max(1) - 1);
        for (k, &a) in amplitudes.iter().enumerate() {
            if k == 0 {
                variances.push(a * a);
            } else {
                variances.push(a * a);
                variances.push(a * a);
            }
        }
        Self::new(
            Family::Periodic { length, amplitudes },
            Covariance::Diagonal(variances),
            (0.0, length),
        )
    }

    /// Periodic model with `a_0 = 0` and `a_k = N^{-1/2}` for `k = 1..=N`, so
    /// that `Var u(x) = 1`.
    pub fn periodic_equal(n: usize, length: f64) -> Result<Self> {
        let mut amps = vec![0.0];
        amps.extend(std::iter::repeat_n((n as f64).powf(-0.5), n));
        Self::periodic(length, amps)
    }

    /// Random polynomials with coefficient variances `binom(N, k)` on `[-3, 3]`.
    pub fn binomial_polynomial(n: usize) -> Self {
        let mut var = Vec::with_capacity(n + 1);
        let mut c = 1.0_f64;
        for k in 0..=n {
            var.push(c);
            c = c * (n - k) as f64 / (k + 1) as f64;
        }
        Self::new(Family::PolynomialBinomial, Covariance::Diagonal(var), (-3.0, 3.0))
            .expect("binomial variances are positive")
    }

    /// Random polynomials with unit coefficient variances on `[-3, 3]`.
    pub fn unit_polynomial(n: usize) -> Self {
        Self::new(Family::PolynomialUnit, Covariance::Diagonal(vec![1.0; n + 1]), (-3.0, 3.0))
            .expect("unit variances are positive semidefinite")
    }

    /// Replaces the coefficient covariance, keeping basis and domain.
    pub fn with_covariance(self, covariance: Covariance) -> Result<Self> {
        Self::new(self.family, covariance, self.domain)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    /// Number of basis terms (length of the coefficient vector).
    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Short family label used in reports.
    pub fn family_name(&self) -> &str {
        match &self.family {
            Family::Chebyshev => "chebyshev",
            Family::CosineNeumann => "cosine",
            Family::Periodic { .. } => "periodic",
            Family::PolynomialBinomial => "binomial",
            Family::PolynomialUnit => "unit",
            Family::Custom(b) => b.name(),
        }
    }

    pub(crate) fn check_domain(&self, x: f64) -> Result<()> {
        let (a, b) = self.domain;
        let slack = 1e-12 * (b - a);
        if x.is_finite() && x >= a - slack && x <= b + slack {
            Ok(())
        } else {
            Err(Error::DomainViolation { x, a, b })
        }
    }

    /// Writes `(φ_k, φ_k', φ_k'')` for every term at `x` into `out`.
    /// No domain check.
    pub fn fill_basis(&self, x: f64, out: &mut [Jet]) {
        debug_assert_eq!(out.len(), self.terms);
        match &self.family {
            Family::Chebyshev => {
                // T_{k+1} = 2x T_k - T_{k-1}, differentiated term by term.
                let mut prev = [1.0, 0.0, 0.0];
                out[0] = prev;
                if out.len() == 1 {
                    return;
                }
                let mut cur = [x, 1.0, 0.0];
                out[1] = cur;
                for slot in out.iter_mut().skip(2) {
                    let next = [
                        2.0 * x * cur[0] - prev[0],
                        2.0 * cur[0] + 2.0 * x * cur[1] - prev[1],
                        4.0 * cur[1] + 2.0 * x * cur[2] - prev[2],
                    ];
                    *slot = next;
                    prev = cur;
                    cur = next;
                }
            }
            Family::CosineNeumann => {
                // Reflect to the nearer endpoint, where sin(kπx) is small and
                // must be evaluated to full relative accuracy. 1 − x is exact
                // for x ≥ 1/2.
                let (y, reflect) = if x > 0.5 { (1.0 - x, true) } else { (x, false) };
                for (k, slot) in out.iter_mut().enumerate() {
                    let w = k as f64 * PI;
                    let (mut s, mut c) = (w * y).sin_cos();
                    if reflect {
                        // cos kπ(1−y) = (−1)^k cos kπy, sin kπ(1−y) = (−1)^{k+1} sin kπy
                        if k % 2 == 1 {
                            c = -c;
                        } else {
                            s = -s;
                        }
                    }
                    *slot = [c, -w * s, -w * w * c];
                }
            }
            Family::Periodic { length, .. } => {
                out[0] = [1.0, 0.0, 0.0];
                let mut k = 1;
                while 2 * k < out.len() + 1 {
                    let w = 2.0 * PI * k as f64 / length;
                    let (s, c) = (w * x).sin_cos();
                    out[2 * k - 1] = [s, w * c, -w * w * s];
                    out[2 * k] = [c, -w * s, -w * w * c];
                    k += 1;
                }
            }
            Family::PolynomialBinomial | Family::PolynomialUnit => {
                // x^k, k x^{k-1}, k(k-1) x^{k-2} built incrementally.
                let mut pow = [1.0, 0.0, 0.0]; // x^k, x^{k-1}, x^{k-2}
                for (k, slot) in out.iter_mut().enumerate() {
                    let kf = k as f64;
                    *slot = [pow[0], kf * pow[1], kf * (kf - 1.0) * pow[2]];
                    pow = [pow[0] * x, pow[0], pow[1]];
                }
            }
            Family::Custom(basis) => {
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = (basis.eval)(k, x);
                }
            }
        }
    }

    /// All basis jets at `x`.
    pub fn basis_table(&self, x: f64) -> Vec<Jet> {
        let mut out = vec![[0.0; 3]; self.terms];
        self.fill_basis(x, &mut out);
        out
    }

    /// `(φ_k(x), φ_k'(x), φ_k''(x))`.
    pub fn basis_eval(&self, k: usize, x: f64) -> Result<Jet> {
        if k >= self.terms {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.terms,
            });
        }
        self.check_domain(x)?;
        Ok(self.basis_table(x)[k])
    }

    /// Bilinear form `Σ α_{i,j} p_i q_j`.
    fn covariance_form(&self, p: impl Fn(usize) -> f64, q: impl Fn(usize) -> f64) -> f64 {
        match &self.covariance {
            Covariance::Diagonal(v) => v.iter().enumerate().map(|(i, &a)| a * p(i) * q(i)).sum(),
            Covariance::Full(m) => {
                let mut s = 0.0;
                for (i, row) in m.iter().enumerate() {
                    let pi = p(i);
                    if pi == 0.0 {
                        continue;
                    }
                    let inner: f64 = row.iter().enumerate().map(|(j, &a)| a * q(j)).sum();
                    s += pi * inner;
                }
                s
            }
        }
    }

    /// Spatial correlation `R(x, y) = Σ α_{i,j} φ_i(x) φ_j(y)`.
    pub fn correlation(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_domain(y)?;
        // Fixed argument order keeps the result exactly symmetric.
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        let bx = self.basis_table(x);
        let by = self.basis_table(y);
        Ok(self.covariance_form(|i| bx[i][0], |j| by[j][0]))
    }

    /// Covariance of two linear functionals `Σ_p w_p u(x_p)`, evaluated in the
    /// coefficient space so that differences of nearby values are formed
    /// before squaring.
    pub fn functional_covariance(&self, points: &[f64], w1: &[f64], w2: &[f64]) -> Result<f64> {
        for &p in points {
            self.check_domain(p)?;
        }
        let tables: Vec<Vec<Jet>> = points.iter().map(|&p| self.basis_table(p)).collect();
        let combine = |w: &[f64], i: usize| -> f64 {
            tables.iter().zip(w).map(|(t, &c)| c * t[i][0]).sum()
        };
        Ok(self.covariance_form(|i| combine(w1, i), |j| combine(w2, j)))
    }

    /// Derivative jet of the correlation function on the diagonal. Performs no
    /// non-degeneracy check; see [`FieldModel::correlation_jet`].
    ///
    /// With `α = L Lᵀ`, `ℛ(x)` is the Gram matrix of the columns `Lᵀφ`,
    /// `Lᵀφ'`, `Lᵀφ''`. Its entries, minors and determinant are taken from a
    /// Householder QR factor of these columns, which avoids the cancellation
    /// in `R00 R11 − R10²` and in the cofactor expansion.
    pub fn jet(&self, x: f64) -> Result<CorrelationJet> {
        self.check_domain(x)?;
        let t = self.basis_table(x);
        let mut cols: [Vec<f64>; 3] = std::array::from_fn(|d| match &self.factor {
            Factor::Diagonal(sd) => sd.iter().zip(&t).map(|(s, jet)| s * jet[d]).collect(),
            Factor::Dense { rows, rank } => (0..*rank)
                .map(|r| rows.iter().zip(&t).map(|(row, jet)| row[r] * jet[d]).sum())
                .collect(),
        });
        Ok(CorrelationJet::from_gram_factor(x, householder_r(&mut cols)))
    }

    /// Derivative jet with the positive definiteness check on `ℛ(x)`.
    pub fn correlation_jet(&self, x: f64) -> Result<CorrelationJet> {
        let jet = self.jet(x)?;
        jet.check_positive_definite()?;
        Ok(jet)
    }

    /// Draws a sample path from a stream seeded by `seed`.
    pub fn sample_path(&self, seed: u64) -> SamplePath<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_path_with(&mut rng)
    }

    /// Draws a sample path using the supplied generator. One standard normal is
    /// consumed per basis term (per rank for dense factors).
    pub fn sample_path_with<R: Rng + ?Sized>(&self, rng: &mut R) -> SamplePath<'_> {
        let coefficients = match &self.factor {
            Factor::Diagonal(sd) => sd
                .iter()
                .map(|&s| {
                    let z: f64 = rng.sample(StandardNormal);
                    s * z
                })
                .collect(),
            Factor::Dense { rows, rank } => {
                let z: Vec<f64> = (0..*rank).map(|_| rng.sample(StandardNormal)).collect();
                rows.iter()
                    .map(|row| row.iter().zip(&z).map(|(l, z)| l * z).sum())
                    .collect()
            }
        };
        SamplePath {
            model: self,
            coefficients,
        }
    }

    /// Covariance entry `α_{i,j}`.
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.covariance.entry(i, j)
    }
}

/// One realization of a [`FieldModel`].
#[derive(Debug, Clone)]
pub struct SamplePath<'m> {
    model: &'m FieldModel,
    coefficients: Vec<f64>,
}

impl<'m> SamplePath<'m> {
    /// Path with explicitly given coefficients.
    pub fn from_coefficients(model: &'m FieldModel, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != model.terms() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                model.terms(),
                coefficients.len()
            )));
        }
        Ok(Self {
            model,
            coefficients,
        })
    }

    pub fn model(&self) -> &'m FieldModel {
        self.model
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `(u(x), u'(x))` as the exact finite sum.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let t = self.model.basis_table(x);
        t.iter()
            .zip(&self.coefficients)
            .fold((0.0, 0.0), |(u, du), (phi, g)| (u + g * phi[0], du + g * phi[1]))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// Deterministic threshold function `μ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Zero,
    Constant(f64),
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    /// `μ(x) = x − x³ + τ`.
    CubicShift(f64),
}

impl Threshold {
    /// `(μ(x), μ'(x), μ''(x))`.
    pub fn jet(&self, x: f64) -> Jet {
        match self {
            Threshold::Zero => [0.0, 0.0, 0.0],
            Threshold::Constant(t) => [*t, 0.0, 0.0],
            Threshold::CubicShift(t) => [x - x * x * x + t, 1.0 - 3.0 * x * x, -6.0 * x],
            Threshold::Polynomial(c) => {
                // Horner for the value and both derivatives.
                let mut p = [0.0, 0.0, 0.0];
                for &ck in c.iter().rev() {
                    p[2] = p[2] * x + 2.0 * p[1];
                    p[1] = p[1] * x + p[0];
                    p[0] = p[0] * x + ck;
                }
                p
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Threshold::Zero => true,
            Threshold::Constant(t) => *t == 0.0,
            Threshold::Polynomial(c) => c.iter().all(|&v| v == 0.0),
            Threshold::CubicShift(_) => false,
        }
    }
}

/// The values `R_{k,ℓ}(x)`, `k, ℓ ≤ 2`, together with the minors of `ℛ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationJet {
    pub x: f64,
    pub r00: f64,
    pub r10: f64,
    pub r11: f64,
    pub r20: f64,
    pub r21: f64,
    pub r22: f64,
    /// `R00 R11 − R10²`.
    pub m33: f64,
    /// `R00 R21 − R10 R20`.
    pub m32: f64,
    /// `R10 R21 − R11 R20`.
    pub m31: f64,
    pub det_r: f64,
}

impl CorrelationJet {
    pub fn from_values(x: f64, r00: f64, r10: f64, r11: f64, r20: f64, r21: f64, r22: f64) -> Self {
        let m33 = r00 * r11 - r10 * r10;
        let m32 = r00 * r21 - r10 * r20;
        let m31 = r10 * r21 - r11 * r20;
        // Cofactor expansion along the third row.
        let det_r = r20 * m31 - r21 * m32 + r22 * m33;
        Self {
            x,
            r00,
            r10,
            r11,
            r20,
            r21,
            r22,
            m33,
            m32,
            m31,
            det_r,
        }
    }

    /// Jet of the Gram matrix `ℛ = RᵀR` of an upper triangular `R`.
    pub fn from_gram_factor(x: f64, r: [[f64; 3]; 3]) -> Self {
        let [[a, b, c], [_, d, e], [_, _, f]] = r;
        Self {
            x,
            r00: a * a,
            r10: a * b,
            r11: b * b + d * d,
            r20: a * c,
            r21: b * c + d * e,
            r22: c * c + e * e + f * f,
            m33: (a * d).powi(2),
            m32: a * a * d * e,
            m31: a * d * (b * e - d * c),
            det_r: (a * d * f).powi(2),
        }
    }

    /// The symmetric matrix `ℛ(x)`.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.r00, self.r10, self.r20],
            [self.r10, self.r11, self.r21],
            [self.r20, self.r21, self.r22],
        ]
    }

    /// Scale of `R11` used by the degeneracy checks: `max(R11, √(R00 R22))`,
    /// so that a vanishing slope variance is caught even when `R11` itself is
    /// only rounding noise.
    pub fn slope_scale(&self) -> f64 {
        self.r11.max((self.r00 * self.r22).max(0.0).sqrt())
    }

    /// Checks `R00 > 0`, `m33 > 0` and `det ℛ > 0` against
    /// [`G2_TOLERANCE`] times their natural scales.
    pub fn check_positive_definite(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::G2Violation { x: self.x, reason });
        if !(self.r00 > 0.0) {
            return fail(format!("R00 = {} is not positive", self.r00));
        }
        let s11 = self.slope_scale();
        if !(self.m33 > G2_TOLERANCE * self.r00 * s11) {
            return fail(format!("m33 = {:e} is degenerate", self.m33));
        }
        if !(self.det_r > G2_TOLERANCE * self.r00 * s11 * self.r22) {
            return fail(format!("det R = {:e} is degenerate", self.det_r));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn chebyshev_basis_values() {
        let m = FieldModel::chebyshev(4);
        let j = m.basis_eval(2, 0.5).unwrap();
        assert!(close(j[0], -0.5, 1e-15) && close(j[1], 2.0, 1e-15) && close(j[2], 4.0, 1e-15));
        // Endpoint values T_k(1) = 1, T_k'(1) = k², T_k''(1) = k²(k²−1)/3.
        for k in 0..=4 {
            let j = m.basis_eval(k, 1.0).unwrap();
            let k2 = (k * k) as f64;
            assert!(close(j[0], 1.0, 1e-14));
            assert!(close(j[1], k2, 1e-14));
            assert!(close(j[2], k2 * (k2 - 1.0) / 3.0, 1e-14));
        }
    }

    #[test]
    fn cosine_and_monomial_basis_values() {
        let m = FieldModel::cosine(4);
        let j = m.basis_eval(3, 1.0 / 3.0).unwrap();
        assert!(close(j[0], -1.0, 1e-14));
        assert!(j[1].abs() < 1e-13);
        assert!(close(j[2], 9.0 * PI * PI, 1e-13));
        for x in [0.3, 0.5, 0.61, 0.97] {
            for k in 0..4 {
                let w = k as f64 * PI;
                let j = m.basis_eval(k, x).unwrap();
                assert!(close(j[0], (w * x).cos(), 1e-13));
                assert!(close(j[1], -w * (w * x).sin(), 1e-13));
            }
        }
        // Exact zero slope at the reflected endpoint.
        assert_eq!(m.basis_eval(3, 1.0).unwrap()[1], 0.0);

        let p = FieldModel::unit_polynomial(4);
        assert_eq!(p.basis_eval(3, 2.0).unwrap(), [8.0, 12.0, 12.0]);
    }

    #[test]
    fn basis_index_and_domain_errors() {
        let m = FieldModel::chebyshev(3);
        assert!(matches!(m.basis_eval(4, 0.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(m.basis_eval(1, 1.5), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn correlation_examples() {
        let b = FieldModel::binomial_polynomial(5);
        assert!(close(b.correlation(1.0, 1.0).unwrap(), 32.0, 1e-14));
        let c = FieldModel::chebyshev(1);
        assert!(close(c.correlation(0.3, -0.7).unwrap(), 1.0 - 0.21, 1e-14));
        let p = FieldModel::periodic_equal(5, 1.0).unwrap();
        assert!(close(p.correlation(0.37, 0.37).unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn binomial_jet_at_origin() {
        let b = FieldModel::binomial_polynomial(5);
        let j = b.correlation_jet(0.0).unwrap();
        let got = [j.r00, j.r10, j.r11, j.r20, j.r21, j.r22, j.m33, j.det_r];
        let want = [1.0, 0.0, 5.0, 0.0, 0.0, 40.0, 5.0, 200.0];
        for (g, w) in got.iter().zip(want) {
            assert!(close(*g, w, 1e-14), "{got:?}");
        }
    }

    #[test]
    fn periodic_jet_is_constant_matrix() {
        let p = FieldModel::periodic_equal(5, 1.0).unwrap();
        let j = p.correlation_jet(0.123).unwrap();
        let c1 = 4.0 * PI * PI * 11.0;
        let c2 = 16.0 * PI.powi(4) * 195.8;
        assert!(close(j.r00, 1.0, 1e-13));
        assert!(j.r10.abs() < 1e-12 && j.r21.abs() < 1e-9);
        assert!(close(j.r11, c1, 1e-13));
        assert!(close(j.r20, -c1, 1e-13));
        assert!(close(j.r22, c2, 1e-13));
    }

    #[test]
    fn single_constant_term_violates_g2() {
        let basis = CustomBasis::new("const", 1, |_, _| [1.0, 0.0, 0.0]);
        let m = FieldModel::new(Family::Custom(basis), Covariance::Diagonal(vec![1.0]), (0.0, 1.0))
            .unwrap();
        assert!(matches!(m.correlation_jet(0.5), Err(Error::G2Violation { .. })));
    }

    #[test]
    fn periodic_requires_two_amplitudes() {
        assert!(FieldModel::periodic(1.0, vec![0.0, 1.0]).is_err());
        assert!(FieldModel::periodic(1.0, vec![0.0, 1.0, 0.5]).is_ok());
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let cov = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        let basis = CustomBasis::new("lin", 2, |k, x| if k == 0 { [1.0, 0.0, 0.0] } else { [x, 1.0, 0.0] });
        let err = FieldModel::new(Family::Custom(basis), cov, (0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::FactorizationFailure(_)));
    }

    #[test]
    fn rank_deficient_full_covariance_samples_consistently() {
        // α = v vᵀ with v = (1, 2): every path has g_1 = 2 g_0.
        let cov = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        let basis = CustomBasis::new("lin", 2, |k, x| if k == 0 { [1.0, 0.0, 0.0] } else { [x, 1.0, 0.0] });
        let m = FieldModel::new(Family::Custom(basis), cov, (0.0, 1.0)).unwrap();
        for s in 0..20 {
            let p = m.sample_path(s);
            let g = p.coefficients();
            assert!((g[1] - 2.0 * g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_covariance_gives_zero_path() {
        let m = FieldModel::chebyshev(3).with_covariance(Covariance::Diagonal(vec![0.0; 4])).unwrap();
        let p = m.sample_path(7);
        assert_eq!(p.eval(0.3), (0.0, 0.0));
    }

    #[test]
    fn unit_coefficient_paths() {
        let m = FieldModel::chebyshev(3);
        let p = SamplePath::from_coefficients(&m, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.eval(0.4), (1.0, 0.0));

        let basis = CustomBasis::new("const", 1, |_, _| [1.0, 0.0, 0.0]);
        let c = FieldModel::new(Family::Custom(basis), Covariance::Diagonal(vec![1.0]), (0.0, 1.0))
            .unwrap();
        let p = c.sample_path(11);
        let g = p.coefficients()[0];
        assert_eq!(p.value(0.0), g);
        assert_eq!(p.value(0.9), g);
    }

    #[test]
    fn threshold_jets() {
        assert_eq!(Threshold::CubicShift(0.7).jet(1.0), [0.7, -2.0, -6.0]);
        assert_eq!(Threshold::Constant(2.5).jet(-0.4), [2.5, 0.0, 0.0]);
        assert_eq!(Threshold::Zero.jet(0.1), [0.0, 0.0, 0.0]);
        // 1 + 2x + 3x² at x = 2: (17, 14, 6)
        assert_eq!(Threshold::Polynomial(vec![1.0, 2.0, 3.0]).jet(2.0), [17.0, 14.0, 6.0]);
    }

    #[test]
    fn seed_determinism() {
        let m = FieldModel::cosine(6);
        let a = m.sample_path(42);
        let b = m.sample_path(42);
        assert_eq!(a.coefficients(), b.coefficients());
        assert_ne!(a.coefficients(), m.sample_path(43).coefficients());
    }
}
