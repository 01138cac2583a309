//! Asymptotic orthant factors `S_α`, the local covariance of
//! `(u(x), u(x + δ/2), u(x + δ))` with its small-δ eigen-expansions, and a
//! Monte Carlo estimate of the double-crossover probability.

use std::f64::consts::{PI, SQRT_2};

use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use libm::{erfc, tgamma};

use crate::table::{Cell, Table};
use crate::error::{Error, Result};
use crate::field_model::{CorrelationJet, FieldModel, Threshold};
use crate::planner::log_log_slope;
use crate::quadrature::integrate_fn;
use crate::rng::stream_rng;

/// Upper limit of the `S_α` integral, measured from `α₁`.
pub const S_ALPHA_TRUNCATION: f64 = 40.0;
const S_ALPHA_REL_TOL: f64 = 1e-14;
/// Errors at or below this level count as exact in convergence fits.
pub const ERROR_FLOOR: f64 = 1e-12;
/// Trials per random stream in [`crossover_prob_mc`].
pub const MC_CHUNK: u64 = 1 << 16;

/// `S_α` for an `n`-vector `α` (`n = alpha.len() ≥ 1`), by adaptive
/// quadrature of `∫_{α₁}^∞ (s − α₁)^{n−1} e^{−s²/2} ds`.
pub fn s_alpha(alpha: &[f64]) -> Result<f64> {
    let n = alpha.len();
    if n == 0 {
        return Err(Error::InvalidArgument("S_alpha needs n >= 1".into()));
    }
    let a1 = alpha[0];
    let tail: f64 = alpha[1..].iter().map(|a| a * a).sum();
    let half_n = n as f64 / 2.0;
    let prefactor = 2.0 / (2f64.powf(half_n) * tgamma(half_n));
    let power = (n - 1) as i32;
    let integral = integrate_fn(
        |s| (s - a1).powi(power) * (-0.5 * s * s).exp(),
        a1,
        a1 + S_ALPHA_TRUNCATION,
        S_ALPHA_REL_TOL,
    );
    Ok(prefactor * (-0.5 * tail).exp() * integral)
}

/// `∫_x^∞ e^{−s²/2} ds` through the complementary error function.
pub fn gaussian_tail(x: f64) -> f64 {
    (PI / 2.0).sqrt() * erfc(x / SQRT_2)
}

/// Closed form of `S_α` for `n = 3`.
pub fn s_alpha_n3_closed(alpha: [f64; 3]) -> f64 {
    let [a1, a2, a3] = alpha;
    (2.0 / PI).sqrt()
        * (-0.5 * (a2 * a2 + a3 * a3)).exp()
        * (-a1 * (-0.5 * a1 * a1).exp() + (1.0 + a1 * a1) * gaussian_tail(a1))
}

/// `S_α^± = S_α + S_{−α} = 2 e^{−(α₂²+α₃²)/2} (1 + α₁²)` for `n = 3`.
pub fn s_alpha_pm_n3(alpha: [f64; 3]) -> f64 {
    let [a1, a2, a3] = alpha;
    2.0 * (-0.5 * (a2 * a2 + a3 * a3)).exp() * (1.0 + a1 * a1)
}

fn limit_basis() -> [[f64; 3]; 3] {
    let s6 = 6f64.sqrt();
    let s3 = 3f64.sqrt();
    [
        [1.0 / s6, -2.0 / s6, 1.0 / s6],
        [1.0 / SQRT_2, 0.0, -1.0 / SQRT_2],
        [1.0 / s3, 1.0 / s3, 1.0 / s3],
    ]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `P M Pᵀ` for the limit basis `P`.
fn rotate(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let p = limit_basis();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    s += p[i][k] * m[k][l] * p[j][l];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// `Pᵀ w`.
fn unrotate(w: &[f64; 3]) -> [f64; 3] {
    let p = limit_basis();
    let mut v = [0.0; 3];
    for (k, row) in p.iter().enumerate() {
        for j in 0..3 {
            v[j] += row[j] * w[k];
        }
    }
    v
}

/// Characteristic coefficients `(tr, Σ principal 2×2 minors, det)`.
fn char_coefficients(w: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let c2 = w[0][0] + w[1][1] + w[2][2];
    let c1 = w[0][0] * w[1][1] - w[0][1] * w[1][0] + w[0][0] * w[2][2] - w[0][2] * w[2][0] + w[1][1] * w[2][2]
        - w[1][2] * w[2][1];
    let c0 = w[0][0] * (w[1][1] * w[2][2] - w[1][2] * w[2][1]) - w[0][1] * (w[1][0] * w[2][2] - w[1][2] * w[2][0])
        + w[0][2] * (w[1][0] * w[2][1] - w[1][1] * w[2][0]);
    (c2, c1, c0)
}

/// Eigen-decomposition of a symmetric 3×3 matrix: closed-form roots of the
/// characteristic cubic, Newton polish on the characteristic polynomial, and
/// eigenvectors from cross products of rows of `W − λI`. Eigenvalues are
/// ascending; eigenvector `k` is oriented so that its `k`-th coordinate is
/// nonnegative.
fn sym_eigen3(w: &[[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (c2, c1, c0) = char_coefficients(w);
    let q = c2 / 3.0;
    let off = w[0][1] * w[0][1] + w[0][2] * w[0][2] + w[1][2] * w[1][2];
    let p2 = (w[0][0] - q).powi(2) + (w[1][1] - q).powi(2) + (w[2][2] - q).powi(2) + 2.0 * off;
    let mut values = if p2 <= 0.0 {
        [q; 3]
    } else {
        let p = (p2 / 6.0).sqrt();
        let mut b = *w;
        for (i, row) in b.iter_mut().enumerate() {
            row[i] -= q;
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        let (_, _, det_b) = char_coefficients(&b);
        let phi = (0.5 * det_b).clamp(-1.0, 1.0).acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        [lo, 3.0 * q - hi - lo, hi]
    };

    let poly = |l: f64| ((l - c2) * l + c1) * l - c0;
    let slope = |l: f64| (3.0 * l - 2.0 * c2) * l + c1;
    let size = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let initial = values;
    for (k, v) in values.iter_mut().enumerate() {
        // Newton is only reliable for well separated roots.
        let gap = (0..3).filter(|&j| j != k).map(|j| (initial[j] - initial[k]).abs()).fold(f64::INFINITY, f64::min);
        if gap <= 1e-6 * initial[k].abs() || gap <= 64.0 * f64::EPSILON * size {
            continue;
        }
        for _ in 0..8 {
            let d = slope(*v);
            if d == 0.0 {
                break;
            }
            let step = poly(*v) / d;
            let next = *v - step;
            if !next.is_finite() || poly(next).abs() > poly(*v).abs() {
                break;
            }
            let done = step.abs() <= 4.0 * f64::EPSILON * next.abs();
            *v = next;
            if done {
                break;
            }
        }
    }
    values.sort_by(f64::total_cmp);

    let tiny = (1e-8 * size).powi(2);
    let null_vector = |l: f64| -> Option<[f64; 3]> {
        let rows = [
            [w[0][0] - l, w[0][1], w[0][2]],
            [w[1][0], w[1][1] - l, w[1][2]],
            [w[2][0], w[2][1], w[2][2] - l],
        ];
        let best = [cross(&rows[0], &rows[1]), cross(&rows[0], &rows[2]), cross(&rows[1], &rows[2])]
            .into_iter()
            .max_by(|a, b| norm(a).total_cmp(&norm(b)))?;
        let n = norm(&best);
        (n > tiny && n > 0.0).then(|| scale(&best, 1.0 / n))
    };
    let unit = |k: usize| {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        e
    };
    let orthogonal_to = |v: &[f64; 3], u: [f64; 3]| -> Option<[f64; 3]> {
        let p = dot(&u, v);
        let r = [u[0] - p * v[0], u[1] - p * v[1], u[2] - p * v[2]];
        let n = norm(&r);
        (n > 1e-8).then(|| scale(&r, 1.0 / n))
    };
    let v1 = null_vector(values[0]).unwrap_or(unit(0));
    let v3 = null_vector(values[2])
        .and_then(|v| orthogonal_to(&v1, v))
        .or_else(|| orthogonal_to(&v1, unit(2)))
        .or_else(|| orthogonal_to(&v1, unit(1)))
        .expect("some axis is not parallel to v1");
    let v2 = cross(&v3, &v1);
    let mut vectors = [v1, v2, v3];
    for (k, v) in vectors.iter_mut().enumerate() {
        if v[k] < 0.0 {
            *v = scale(v, -1.0);
        }
    }
    (values, vectors)
}

/// The Gaussian vector `T = (u(x), u(x + δ/2), u(x + δ))` and the threshold
/// vector `τ` at the same points.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGaussian {
    pub x: f64,
    pub delta: f64,
    /// Covariance `C(δ)` assembled from the correlation function.
    pub cov: [[f64; 3]; 3],
    /// `P C(δ) Pᵀ` in the basis of the limit eigenvectors, evaluated with the
    /// differences formed before squaring.
    pub rotated: [[f64; 3]; 3],
    pub tau: [f64; 3],
    eigenvalues: [f64; 3],
    rotated_vectors: [[f64; 3]; 3],
}

impl LocalGaussian {
    /// Direct-matrix mode: an explicit covariance and threshold vector.
    pub fn from_covariance(cov: [[f64; 3]; 3], tau: [f64; 3]) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                if cov[i][j] != cov[j][i] || !cov[i][j].is_finite() {
                    return Err(Error::InvalidArgument("covariance must be finite and symmetric".into()));
                }
            }
        }
        let rotated = rotate(&cov);
        let (values, vectors) = sym_eigen3(&rotated);
        if !(values[0] > 16.0 * f64::EPSILON * values[2].abs()) {
            return Err(Error::NotPositiveDefinite { x: f64::NAN, delta: f64::NAN });
        }
        Ok(Self {
            x: f64::NAN,
            delta: f64::NAN,
            cov,
            rotated,
            tau,
            eigenvalues: values,
            rotated_vectors: vectors,
        })
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        self.eigenvalues
    }

    /// Orthonormal eigenvectors of `C(δ)` in ascending eigenvalue order,
    /// oriented towards their small-δ limits.
    pub fn eigenvectors(&self) -> [[f64; 3]; 3] {
        self.rotated_vectors.map(|w| unrotate(&w))
    }

    /// `τ · v_k` for the three eigenvectors.
    pub fn projected_tau(&self) -> [f64; 3] {
        let p = limit_basis();
        let pt = [dot(&p[0], &self.tau), dot(&p[1], &self.tau), dot(&p[2], &self.tau)];
        self.rotated_vectors.map(|w| dot(&pt, &w))
    }

    /// `det C(δ)`.
    pub fn det(&self) -> f64 {
        char_coefficients(&self.rotated).2
    }

    /// Largest entrywise deviation of `Σ λ_k v_k v_kᵀ` from `C(δ)`, relative to
    /// the largest entry of `C(δ)`.
    pub fn reconstruction_error(&self) -> f64 {
        let vs = self.eigenvectors();
        let scale_ref = self.cov.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| self.eigenvalues[k] * vs[k][i] * vs[k][j]).sum();
                worst = worst.max((r - self.cov[i][j]).abs());
            }
        }
        worst / scale_ref
    }
}

/// [`LocalGaussian`] of a model at `x` with spacing `δ`.
pub fn local_gaussian(model: &FieldModel, threshold: &Threshold, x: f64, delta: f64) -> Result<LocalGaussian> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let points = [x, x + 0.5 * delta, x + delta];
    for &p in &points {
        model.check_domain(p)?;
    }
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = model.correlation(points[i], points[j])?;
        }
    }
    let p = limit_basis();
    let mut rotated = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = model.functional_covariance(&points, &p[i], &p[j])?;
            rotated[i][j] = v;
            rotated[j][i] = v;
        }
    }
    let (values, vectors) = sym_eigen3(&rotated);
    if !(values[0] > 0.0) || !(char_coefficients(&rotated).2 > 0.0) {
        return Err(Error::NotPositiveDefinite { x, delta });
    }
    Ok(LocalGaussian {
        x,
        delta,
        cov,
        rotated,
        tau: points.map(|t| threshold.value(t)),
        eigenvalues: values,
        rotated_vectors: vectors,
    })
}

/// Observed values and errors of one expanded quantity over the δ list.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionSeries {
    pub name: &'static str,
    pub predicted: f64,
    pub observed: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln(error)` against `ln δ` over the errors above
    /// [`ERROR_FLOOR`]; infinite when fewer than two remain.
    pub order: f64,
}

impl ExpansionSeries {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap_or(&f64::NAN)
    }
}

/// Report of [`eigen_expansion_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenExpansion {
    pub x: f64,
    pub deltas: Vec<f64>,
    pub jet: CorrelationJet,
    /// Largest reconstruction error of the decompositions.
    pub reconstruction_error: f64,
    pub series: Vec<ExpansionSeries>,
}

impl EigenExpansion {
    pub fn get(&self, name: &str) -> Option<&ExpansionSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Columns `quantity, delta, observed, predicted, error`.
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "delta", "observed", "predicted", "error"]);
        for s in &self.series {
            for (i, &d) in self.deltas.iter().enumerate() {
                t.row(vec![s.name.into(), d.into(), s.observed[i].into(), s.predicted.into(), s.errors[i].into()]);
            }
        }
        t
    }
}

fn convergence_order(deltas: &[f64], errors: &[f64]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = deltas
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > ERROR_FLOOR)
        .map(|(&d, &e)| (d, e))
        .unzip();
    if xs.len() < 2 { f64::INFINITY } else { log_log_slope(&xs, &ys) }
}

fn series(name: &'static str, predicted: f64, observed: Vec<f64>, deltas: &[f64], relative: bool) -> ExpansionSeries {
    let errors: Vec<f64> = observed
        .iter()
        .map(|&o| {
            let e = (o - predicted).abs();
            if relative && predicted != 0.0 { e / predicted.abs() } else { e }
        })
        .collect();
    ExpansionSeries {
        name,
        predicted,
        order: convergence_order(deltas, &errors),
        observed,
        errors,
    }
}

fn angle(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm(&cross(a, b)).atan2(dot(a, b))
}

/// Compares the eigen-decompositions of `C(δ)` over a decreasing list of
/// spacings with their leading-order small-δ expansions. Eigenvector errors
/// are angles to the limit vectors; projected thresholds with a vanishing
/// prediction use absolute errors.
pub fn eigen_expansion_check(model: &FieldModel, threshold: &Threshold, x: f64, deltas: &[f64]) -> Result<EigenExpansion> {
    if deltas.is_empty() || deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("delta list must be non-empty and strictly decreasing".into()));
    }
    let jet = model.correlation_jet(x)?;
    let [mu, dmu, ddmu] = threshold.jet(x);
    let locals = deltas
        .iter()
        .map(|&d| local_gaussian(model, threshold, x, d))
        .collect::<Result<Vec<_>>>()?;

    let limits = limit_basis();
    let mut obs: Vec<Vec<f64>> = vec![Vec::with_capacity(deltas.len()); 10];
    let mut reconstruction = 0.0f64;
    for (lg, &d) in locals.iter().zip(deltas) {
        let l = lg.eigenvalues();
        let v = lg.eigenvectors();
        let t = lg.projected_tau();
        reconstruction = reconstruction.max(lg.reconstruction_error());
        let row = [
            l[0] / d.powi(4),
            l[1] / (d * d),
            l[2],
            angle(&v[0], &limits[0]),
            angle(&v[1], &limits[1]),
            angle(&v[2], &limits[2]),
            t[0] / (d * d),
            t[1] / d,
            t[2],
            lg.det() / d.powi(6),
        ];
        for (o, r) in obs.iter_mut().zip(row) {
            o.push(r);
        }
    }
    let mut obs = obs.into_iter();
    let mut next = || obs.next().expect("ten series");
    let s6 = 6f64.sqrt();
    let series = vec![
        series("lambda1", jet.det_r / (96.0 * jet.m33), next(), deltas, true),
        series("lambda2", jet.m33 / (2.0 * jet.r00), next(), deltas, true),
        series("lambda3", 3.0 * jet.r00, next(), deltas, true),
        series("v1_angle", 0.0, next(), deltas, false),
        series("v2_angle", 0.0, next(), deltas, false),
        series("v3_angle", 0.0, next(), deltas, false),
        series(
            "tau_v1",
            (jet.m31 * mu - jet.m32 * dmu + jet.m33 * ddmu) / (4.0 * s6 * jet.m33),
            next(),
            deltas,
            true,
        ),
        series("tau_v2", (jet.r10 * mu - jet.r00 * dmu) / (SQRT_2 * jet.r00), next(), deltas, true),
        series("tau_v3", 3f64.sqrt() * mu, next(), deltas, true),
        series("det", jet.det_r / 64.0, next(), deltas, true),
    ];
    Ok(EigenExpansion {
        x,
        deltas: deltas.to_vec(),
        jet,
        reconstruction_error: reconstruction,
        series,
    })
}

/// Monte Carlo estimate of `p₊ + p₋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverEstimate {
    pub trials: u64,
    pub hits: u64,
    pub estimate: f64,
    pub standard_error: f64,
}

/// Frequency of the sign patterns `(≥, ≤, ≥)` and `(≤, ≥, ≤)` of `T − τ`.
/// Trials are split into chunks of [`MC_CHUNK`], chunk `c` drawing from stream
/// `c` of `seed`, so the result does not depend on the thread count.
pub fn crossover_prob_mc(local: &LocalGaussian, trials: u64, seed: u64) -> Result<CrossoverEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let sd = local.eigenvalues().map(|l| l.max(0.0).sqrt());
    let axes = local.eigenvectors();
    let tau = local.tau;
    let chunks = trials.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let n = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut hits = 0u64;
            for _ in 0..n {
                let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let mut d = [-tau[0], -tau[1], -tau[2]];
                for k in 0..3 {
                    let s = sd[k] * z[k];
                    for (di, a) in d.iter_mut().zip(&axes[k]) {
                        *di += s * a;
                    }
                }
                let plus = d[0] >= 0.0 && d[1] <= 0.0 && d[2] >= 0.0;
                let minus = d[0] <= 0.0 && d[1] >= 0.0 && d[2] <= 0.0;
                if plus || minus {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let q = hits as f64 / trials as f64;
    Ok(CrossoverEstimate {
        trials,
        hits,
        estimate: q,
        standard_error: (q * (1.0 - q) / trials as f64).sqrt(),
    })
}

/// Columns `delta, trials, hits, estimate, standard_error, predicted, ratio`,
/// where `predicted = C₀ δ³`.
pub fn crossover_table(rows: &[(f64, CrossoverEstimate)], c0: f64) -> Table {
    let mut t = Table::new(&["delta", "trials", "hits", "estimate", "standard_error", "predicted", "ratio"]);
    for (d, e) in rows {
        let predicted = c0 * d.powi(3);
        t.row(vec![
            (*d).into(),
            Cell::Int(e.trials),
            Cell::Int(e.hits),
            e.estimate.into(),
            e.standard_error.into(),
            predicted.into(),
            (e.estimate / predicted).into(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_alpha_reference_values() {
        for n in 1..=6 {
            assert!((s_alpha(&vec![0.0; n]).unwrap() - 1.0).abs() < 1e-12, "n={n}");
        }
        let v = s_alpha(&[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.15069).abs() < 2e-5);
        assert!((v - s_alpha_n3_closed([1.0, 0.0, 0.0])).abs() < 1e-10);
        assert!((s_alpha(&[0.0, 1.0, 0.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert!((s_alpha_n3_closed([0.0; 3]) - 1.0).abs() < 1e-15);
        let m = s_alpha_n3_closed([-1.0, 0.0, 0.0]);
        assert!((m - 3.84931).abs() < 2e-5);
        assert!((m + v - 4.0).abs() < 1e-12);
        assert_eq!(s_alpha_pm_n3([0.0; 3]), 2.0);
        assert_eq!(s_alpha_pm_n3([1.0, 0.0, 0.0]), 4.0);
        assert!(s_alpha(&[]).is_err());
    }

    #[test]
    fn large_shift_uses_tail() {
        let v = s_alpha_n3_closed([8.0, 0.0, 0.0]);
        let q = s_alpha(&[8.0, 0.0, 0.0]).unwrap();
        assert!(v > 0.0 && (v - q).abs() < 1e-12 * q.max(1e-300) + 1e-25);
    }

    #[test]
    fn eigen_of_diagonal_and_generic_matrices() {
        let (l, v) = sym_eigen3(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(l, [1.0; 3]);
        assert_eq!(v, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let (l, v) = sym_eigen3(&m);
        for k in 0..3 {
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * v[k][j]).sum();
                assert!((mv - l[k] * v[k][i]).abs() < 1e-13);
            }
        }
        assert!((l.iter().sum::<f64>() - 8.0).abs() < 1e-13);
    }

    #[test]
    fn direct_mode() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let lg = LocalGaussian::from_covariance(id, [0.0; 3]).unwrap();
        assert!(lg.reconstruction_error() < 1e-15);
        let e = crossover_prob_mc(&lg, 200_000, 3).unwrap();
        assert!((e.estimate - 0.25).abs() < 3.0 * e.standard_error);
        let ones = [[1.0; 3]; 3];
        assert!(matches!(
            LocalGaussian::from_covariance(ones, [0.0; 3]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn local_gaussian_entries() {
        let m = FieldModel::chebyshev(5);
        let lg = local_gaussian(&m, &Threshold::Zero, 0.2, 0.1).unwrap();
        assert_eq!(lg.cov[0][0], m.correlation(0.2, 0.2).unwrap());
        assert!(lg.reconstruction_error() < 1e-12);
        assert!(local_gaussian(&m, &Threshold::Zero, 0.95, 0.1).is_err());
        // Limits of the rotated and the plain covariance agree.
        for i in 0..3 {
            for j in 0..3 {
                assert!((rotate(&lg.cov)[i][j] - lg.rotated[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mc_is_independent_of_thread_count() {
        let m = FieldModel::periodic_equal(5, 1.0).unwrap();
        let lg = local_gaussian(&m, &Threshold::Zero, 0.3, 0.05).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| crossover_prob_mc(&lg, 300_000, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
