//! Sampling grids and the probabilistic correctness bounds attached to them.
//!
//! A topology-guided grid places `M + 1` points so that every cell carries
//! the same share of `K = ∫_a^b C^{1/3}`. The leading-order probability that
//! the cubical approximation has the correct number of components is then
//! `1 − K³/M²`. All bounds here drop the `O(1/M³)` remainder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::field_model::{FieldModel, Threshold};
use crate::quadrature::{golden_max, Cumulative};

/// Relative tolerance of the cumulative weight quadrature.
pub const QUAD_REL_TOL: f64 = 1e-12;
/// Absolute tolerance in `x` when inverting the cumulative weight.
pub const GRID_XTOL: f64 = 1e-12;
/// Points of the coarse scan used to locate `max C₀`.
pub const MAX_SCAN_POINTS: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Equal shares of `∫ C^{1/3}`.
    Topology,
    Uniform,
    /// Equal shares of the expected zero count `∫ D`.
    DensityGuided,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Topology, Strategy::Uniform, Strategy::DensityGuided];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Topology => "topology",
            Strategy::Uniform => "uniform",
            Strategy::DensityGuided => "density-guided",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topology" => Ok(Strategy::Topology),
            "uniform" => Ok(Strategy::Uniform),
            "density-guided" | "density" => Ok(Strategy::DensityGuided),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Leading-order bound with a flag for the clamped (vacuous) case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub vacuous: bool,
}

/// An `M`-discretization of `[a, b]` with its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub grid: Vec<f64>,
    pub strategy: Strategy,
    /// `∫_a^b C^{1/3}`.
    pub k: f64,
    /// `clamp(1 − K³/M², 0, 1)`.
    pub bound: f64,
    pub vacuous: bool,
    /// The guiding density vanished and a uniform grid was used instead.
    pub fallback_uniform: bool,
}

impl SamplingPlan {
    pub fn m(&self) -> usize {
        self.grid.len() - 1
    }
}

/// `∫_a^x w(t) dt` for a guiding weight `w` (`C^{1/3}` or `D`).
pub struct CumulativeWeight<F> {
    inner: Cumulative<F>,
}

impl<F: Fn(f64) -> Result<f64>> CumulativeWeight<F> {
    pub fn total(&self) -> f64 {
        self.inner.total()
    }

    pub fn at(&self, x: f64) -> Result<f64> {
        self.inner.at(x)
    }

    /// Grid with `F(x_k) = k K / M`; endpoints are exact.
    pub fn place_grid(&self, m: usize) -> Result<Vec<f64>> {
        if m == 0 {
            return Err(Error::InvalidArgument("M must be at least 1".into()));
        }
        let (a, b) = self.inner.bounds();
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::DegenerateDensity { a, b });
        }
        let mut grid = Vec::with_capacity(m + 1);
        grid.push(a);
        for k in 1..m {
            let x = self.inner.invert(total * k as f64 / m as f64, GRID_XTOL)?;
            let prev = *grid.last().expect("non-empty");
            grid.push(x.max(prev));
        }
        grid.push(b);
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateDensity { a, b });
        }
        Ok(grid)
    }
}

/// Cumulative weight of the nonnegative integrand `w` on `[a, b]`.
pub fn cumulative_weight<F: Fn(f64) -> Result<f64>>(w: F, a: f64, b: f64) -> Result<CumulativeWeight<F>> {
    let guarded = w;
    Ok(CumulativeWeight {
        inner: Cumulative::new(guarded, a, b, QUAD_REL_TOL)?,
    })
}

/// Cumulative `∫ C^{1/3}` from a density function `C`.
pub fn cube_root_weight<C: Fn(f64) -> Result<f64>>(
    c: C,
    a: f64,
    b: f64,
) -> Result<CumulativeWeight<impl Fn(f64) -> Result<f64>>> {
    cumulative_weight(
        move |x| {
            let v = c(x)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteDensity { x });
            }
            Ok(v.max(0.0).cbrt())
        },
        a,
        b,
    )
}

pub fn uniform_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|k| if k == m { b } else { a + (b - a) * k as f64 / m as f64 })
        .collect()
}

/// Leading-order probability bound `1 − K³/M²`, clamped to `[0, 1]`.
pub fn failure_bound(k: f64, m: usize) -> Bound {
    let raw = 1.0 - k.powi(3) / (m as f64).powi(2);
    Bound {
        value: raw.clamp(0.0, 1.0),
        vacuous: raw <= 0.0,
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Smallest `M ≥ 1` with `1 − K³/M² ≥ p`.
pub fn min_samples(k: f64, p: f64) -> Result<usize> {
    check_probability(p)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("K must be finite and nonnegative, got {k}")));
    }
    let ok = |m: usize| 1.0 - k.powi(3) / (m as f64).powi(2) >= p;
    let mut m = ((k.powf(1.5) / (1.0 - p).sqrt()).ceil() as usize).max(1);
    while m > 1 && ok(m - 1) {
        m -= 1;
    }
    while !ok(m) {
        m += 1;
    }
    Ok(m)
}

/// Smallest `M ≥ 1` for which the homogeneous bound
/// `(4/3) C₀max (b − a)³ / M²` does not exceed `1 − p`.
pub fn uniform_bound_samples(c0_max: f64, length: f64, p: f64) -> Result<usize> {
    check_probability(p)?;
    if !(c0_max >= 0.0 && length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need C0max >= 0 and positive length, got {c0_max}, {length}"
        )));
    }
    let need = 4.0 / 3.0 * c0_max * length.powi(3);
    let ok = |m: usize| need / (m as f64).powi(2) <= 1.0 - p;
    let mut m = (((need / (1.0 - p)).sqrt()).ceil() as usize).max(1);
    while m > 1 && ok(m - 1) {
        m -= 1;
    }
    while !ok(m) {
        m += 1;
    }
    Ok(m)
}

/// Grid with equal shares of `∫ D`.
pub fn density_guided_grid<D: Fn(f64) -> Result<f64>>(d: D, a: f64, b: f64, m: usize) -> Result<Vec<f64>> {
    cumulative_weight(d, a, b)?.place_grid(m)
}

/// Location and value of `max_x f(x)` by a coarse scan plus golden-section
/// refinement around the best scan point.
pub fn locate_max<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64) -> Result<(f64, f64)> {
    let n = MAX_SCAN_POINTS;
    let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let mut best = (a, f64::NEG_INFINITY, 0usize);
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteDensity { x });
        }
        if v > best.1 {
            best = (x, v, i);
        }
    }
    let lo = xs[best.2.saturating_sub(1)];
    let hi = xs[(best.2 + 1).min(n - 1)];
    let (x, v) = golden_max(|x| f(x).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-10);
    Ok(if v > best.1 { (x, v) } else { (best.0, best.1) })
}

/// `max_x C₀(x) = (3/4) max_x C(x)` for a model and threshold.
pub fn max_c0(model: &FieldModel, threshold: &Threshold) -> Result<(f64, f64)> {
    let profile = DensityProfile::new(model, threshold);
    let (a, b) = model.domain();
    let (x, c) = locate_max(|x| profile.c(x), a, b)?;
    Ok((x, 0.75 * c))
}

/// `K = ∫ C^{1/3}` for a model and threshold.
pub fn topology_weight(model: &FieldModel, threshold: &Threshold) -> Result<f64> {
    let profile = DensityProfile::new(model, threshold);
    let (a, b) = model.domain();
    let total = cube_root_weight(|x| profile.c(x), a, b)?.total();
    Ok(total)
}

/// Expected number of zeros `∫ D` over the model's domain.
pub fn expected_zeros(model: &FieldModel) -> Result<f64> {
    let th = Threshold::Zero;
    let profile = DensityProfile::new(model, &th);
    let (a, b) = model.domain();
    Ok(cumulative_weight(|x| profile.d(x), a, b)?.total())
}

/// Builds the `M`-point plan of the given strategy. The bound always refers to
/// `K = ∫ C^{1/3}` of the model, whatever grid is used.
pub fn build_plan(model: &FieldModel, threshold: &Threshold, strategy: Strategy, m: usize) -> Result<SamplingPlan> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let profile = DensityProfile::new(model, threshold);
    let (a, b) = model.domain();
    let weight = cube_root_weight(|x| profile.c(x), a, b)?;
    let k = weight.total();
    let (grid, fallback) = match strategy {
        Strategy::Uniform => (uniform_grid(a, b, m), false),
        Strategy::Topology => match weight.place_grid(m) {
            Ok(g) => (g, false),
            Err(Error::DegenerateDensity { .. }) => (uniform_grid(a, b, m), true),
            Err(e) => return Err(e),
        },
        Strategy::DensityGuided => match density_guided_grid(|x| profile.d(x), a, b, m) {
            Ok(g) => (g, false),
            Err(Error::DegenerateDensity { .. }) => (uniform_grid(a, b, m), true),
            Err(e) => return Err(e),
        },
    };
    let bound = failure_bound(k, m);
    Ok(SamplingPlan {
        grid,
        strategy,
        k,
        bound: bound.value,
        vacuous: bound.vacuous,
        fallback_uniform: fallback,
    })
}

/// Topology-guided plan with the smallest `M` whose bound reaches `p`.
pub fn plan_for_probability(
    model: &FieldModel,
    threshold: &Threshold,
    strategy: Strategy,
    p: f64,
) -> Result<SamplingPlan> {
    let k = topology_weight(model, threshold)?;
    build_plan(model, threshold, strategy, min_samples(k, p)?)
}

/// One row of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub expected_zeros: f64,
    pub m_topology: usize,
    pub m_uniform: usize,
    pub k: f64,
}

/// Sample counts required by the topology-guided and the homogeneous bound
/// for a family of models indexed by `N`. Rows are computed in parallel and
/// returned in the order of `ns`.
pub fn scaling_study<B>(build: B, ns: &[usize], threshold: &Threshold, p: f64) -> Result<Vec<ScalingRow>>
where
    B: Fn(usize) -> Result<FieldModel> + Sync,
{
    check_probability(p)?;
    ns.par_iter()
        .map(|&n| {
            let model = build(n)?;
            let k = topology_weight(&model, threshold)?;
            let (_, c0max) = max_c0(&model, threshold)?;
            let (a, b) = model.domain();
            Ok(ScalingRow {
                n,
                expected_zeros: expected_zeros(&model)?,
                m_topology: min_samples(k, p)?,
                m_uniform: uniform_bound_samples(c0max, b - a, p)?,
                k,
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_density_weight_and_grid() {
        let w = cube_root_weight(|_| Ok(1.0), 0.0, 1.0).unwrap();
        assert!((w.total() - 1.0).abs() < 1e-14);
        let g = w.place_grid(4).unwrap();
        for (x, e) in g.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((x - e).abs() < 1e-11);
        }
        assert_eq!(w.place_grid(1).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn arctan_weight_and_quantiles() {
        let w = cumulative_weight(|x| Ok(1.0 / (1.0 + x * x)), -3.0, 3.0).unwrap();
        assert!((w.total() - 2.0 * 3f64.atan()).abs() < 1e-11);
        let g = w.place_grid(4).unwrap();
        let q = (3f64.atan() / 2.0).tan();
        assert!((q - 0.72076).abs() < 1e-5);
        for (x, e) in g.iter().zip([-3.0, -q, 0.0, q, 3.0]) {
            assert!((x - e).abs() < 1e-10, "{x} vs {e}");
        }
    }

    #[test]
    fn binomial_weight() {
        let m = FieldModel::binomial_polynomial(5);
        let k = topology_weight(&m, &Threshold::Zero).unwrap();
        let expected = (5f64.sqrt() * 4.0 / (24.0 * PI)).cbrt() * 2.0 * 3f64.atan();
        assert!((k - expected).abs() < 1e-10 * expected);
        assert!((k - 1.2273).abs() < 5e-4);
    }

    #[test]
    fn zero_density_is_degenerate() {
        let w = cube_root_weight(|_| Ok(0.0), 0.0, 1.0).unwrap();
        assert_eq!(w.total(), 0.0);
        assert!(matches!(w.place_grid(3), Err(Error::DegenerateDensity { .. })));
    }

    #[test]
    fn bound_arithmetic() {
        assert!((failure_bound(2.0, 10).value - 0.92).abs() < 1e-15);
        let b = failure_bound(3.0, 2);
        assert_eq!(b.value, 0.0);
        assert!(b.vacuous);
        assert_eq!(min_samples(2.0, 0.95).unwrap(), 13);
        assert_eq!(min_samples(1.2273, 0.95).unwrap(), 7);
        assert_eq!(min_samples(2.0, 0.0).unwrap(), 3);
        assert!(matches!(min_samples(2.0, 1.0), Err(Error::InvalidProbability(_))));
        assert_eq!(uniform_bound_samples(0.0, 1.0, 0.95).unwrap(), 1);
        assert_eq!(uniform_bound_samples(0.75, 1.0, 0.95).unwrap(), 5);
        assert!(uniform_bound_samples(0.75, 1.0, 1.5).is_err());
    }

    #[test]
    fn binomial_bound_at_thirteen() {
        let m = FieldModel::binomial_polynomial(5);
        let k = topology_weight(&m, &Threshold::Zero).unwrap();
        let b = failure_bound(k, 13).value;
        assert!((b - (1.0 - k.powi(3) / 169.0)).abs() < 1e-15);
        assert!((b - 0.98906).abs() < 1e-4);
    }

    #[test]
    fn uniform_bound_dominates() {
        let m = FieldModel::binomial_polynomial(5);
        let (x, c0max) = max_c0(&m, &Threshold::Zero).unwrap();
        assert!(x.abs() < 1e-6);
        assert!((c0max - 0.75 * 5f64.sqrt() / (6.0 * PI)).abs() < 1e-12);
        let k = topology_weight(&m, &Threshold::Zero).unwrap();
        let mu = uniform_bound_samples(c0max, 6.0, 0.95).unwrap();
        assert!(mu >= min_samples(k, 0.95).unwrap());
    }

    #[test]
    fn min_samples_is_monotone() {
        let mut last = 0;
        for i in 0..50 {
            let p = i as f64 / 50.0;
            let m = min_samples(1.7, p).unwrap();
            assert!(m >= last);
            last = m;
        }
        let mut last = 0;
        for i in 0..50 {
            let m = min_samples(0.1 * i as f64, 0.9).unwrap();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn fallback_to_uniform_for_vanishing_density() {
        let m = FieldModel::chebyshev(5);
        let plan = build_plan(&m, &Threshold::Constant(1e3), Strategy::Topology, 4).unwrap();
        assert!(plan.fallback_uniform);
        assert_eq!(plan.grid, uniform_grid(-1.0, 1.0, 4));
        assert_eq!(plan.bound, 1.0);
    }
}
