//! Component counts of generalized nodal domains `N^± = {±(u − μ) ≥ 0}` and
//! of their cubical approximations on a sampling grid, plus the
//! double-crossover / admissibility diagnostics.

use crate::field_model::{FieldModel, SamplePath, Threshold};
use crate::quadrature::{bisect, golden_max};

/// Scan points per expected zero used by the oracle.
pub const SCAN_POINTS_PER_ZERO: usize = 4096;
/// Bracket width at which zero bisection stops.
pub const ZERO_XTOL: f64 = 1e-12;
/// `|u − μ|` minima below this level without a sign change flag a possible
/// double zero.
pub const DEGENERACY_LEVEL: f64 = 1e-9;
/// Default dyadic depth of the admissibility check.
pub const ADMISSIBILITY_DEPTH: u32 = 12;

/// Sign of `u − μ` at a grid point. An exact zero belongs to both
/// approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSign {
    Positive,
    Negative,
    Zero,
}

impl GridSign {
    pub fn of(v: f64) -> Self {
        if v > 0.0 {
            GridSign::Positive
        } else if v < 0.0 {
            GridSign::Negative
        } else {
            GridSign::Zero
        }
    }

    fn in_plus(self) -> bool {
        self != GridSign::Negative
    }

    fn in_minus(self) -> bool {
        self != GridSign::Positive
    }
}

fn count_runs(members: impl Iterator<Item = bool>) -> usize {
    let mut runs = 0;
    let mut inside = false;
    for m in members {
        if m && !inside {
            runs += 1;
        }
        inside = m;
    }
    runs
}

/// `(β₀(Q⁺), β₀(Q⁻))` for the cubical approximations built from the signs at
/// `x_0 … x_M`. Cell `k` is `[x_k, x_{k+1}]` with `x_{M+1} = x_M`, so the
/// components are the maximal runs of consecutive indices.
pub fn cubical_beta0(signs: &[GridSign]) -> (usize, usize) {
    (
        count_runs(signs.iter().map(|s| s.in_plus())),
        count_runs(signs.iter().map(|s| s.in_minus())),
    )
}

/// [`cubical_beta0`] on raw values of `u − μ`.
pub fn cubical_beta0_values(values: &[f64]) -> (usize, usize) {
    let signs: Vec<GridSign> = values.iter().map(|&v| GridSign::of(v)).collect();
    cubical_beta0(&signs)
}

/// Components of the true nodal domains of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub beta0_plus: usize,
    pub beta0_minus: usize,
    pub zeros: Vec<f64>,
    pub degenerate: bool,
}

/// Comparison of true and cubical component counts for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalReport {
    pub beta0_n_plus: usize,
    pub beta0_n_minus: usize,
    pub beta0_q_plus: usize,
    pub beta0_q_minus: usize,
    pub zeros: Vec<f64>,
    pub match_plus: bool,
    pub match_minus: bool,
    pub degenerate: bool,
}

impl NodalReport {
    pub fn matches_both(&self) -> bool {
        self.match_plus && self.match_minus
    }
}

/// Equispaced oracle scan of `[a, b]` with cached basis values, so that many
/// paths of the same model can be scanned cheaply.
pub struct OracleScanner<'m> {
    model: &'m FieldModel,
    threshold: Threshold,
    xs: Vec<f64>,
    basis: Vec<f64>,
    mu: Vec<f64>,
}

impl<'m> OracleScanner<'m> {
    pub fn new(model: &'m FieldModel, threshold: &Threshold, points: usize) -> Self {
        let (a, b) = model.domain();
        let n = points.max(2);
        let xs: Vec<f64> = (0..n)
            .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect();
        Self::at_points(model, threshold, xs)
    }

    /// Scanner on an arbitrary set of points, e.g. a sampling grid.
    pub fn at_points(model: &'m FieldModel, threshold: &Threshold, xs: Vec<f64>) -> Self {
        let terms = model.terms();
        let mut basis = vec![0.0; xs.len() * terms];
        let mut row = vec![[0.0; 3]; terms];
        for (i, &x) in xs.iter().enumerate() {
            model.fill_basis(x, &mut row);
            for (k, jet) in row.iter().enumerate() {
                basis[i * terms + k] = jet[0];
            }
        }
        let mu = xs.iter().map(|&x| threshold.value(x)).collect();
        Self {
            model,
            threshold: threshold.clone(),
            xs,
            basis,
            mu,
        }
    }

    /// Scanner with the default resolution `4096 · max(1, ⌈∫D⌉)`.
    pub fn with_default_resolution(model: &'m FieldModel, threshold: &Threshold, expected_zeros: f64) -> Self {
        Self::new(model, threshold, default_resolution(expected_zeros))
    }

    pub fn points(&self) -> &[f64] {
        &self.xs
    }

    /// Values of `u − μ` at the cached points.
    pub fn values(&self, path: &SamplePath<'_>) -> Vec<f64> {
        let g = path.coefficients();
        let terms = g.len();
        self.basis
            .chunks_exact(terms)
            .zip(&self.mu)
            .map(|(row, mu)| row.iter().zip(g).map(|(p, c)| p * c).sum::<f64>() - mu)
            .collect()
    }

    pub fn scan(&self, path: &SamplePath<'_>) -> OracleResult {
        debug_assert!(std::ptr::eq(path.model(), self.model));
        let v = self.values(path);
        let f = |x: f64| path.value(x) - self.threshold.value(x);
        nodal_components(&self.xs, &v, &f)
    }
}

pub fn default_resolution(expected_zeros: f64) -> usize {
    let z = if expected_zeros.is_finite() { expected_zeros.ceil().max(1.0) } else { 1.0 };
    SCAN_POINTS_PER_ZERO * z as usize
}

/// Zeros and component counts of `f` from its values `v` on the scan points
/// `xs`.
fn nodal_components<F: Fn(f64) -> f64>(xs: &[f64], v: &[f64], f: &F) -> OracleResult {
    let n = xs.len();
    let (a, b) = (xs[0], xs[n - 1]);
    if v.iter().all(|&x| x == 0.0) {
        return OracleResult {
            beta0_plus: 1,
            beta0_minus: 1,
            zeros: Vec::new(),
            degenerate: true,
        };
    }

    let mut zeros = Vec::new();
    let mut degenerate = false;
    let mut last: Option<usize> = None;
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        match last {
            None => {
                if i > 0 {
                    zeros.push(xs[0]);
                }
            }
            Some(j) => {
                let flipped = (v[i] > 0.0) != (v[j] > 0.0);
                if j + 1 == i {
                    if flipped {
                        zeros.push(bisect(f, xs[j], xs[i], ZERO_XTOL));
                    }
                } else if flipped {
                    zeros.push(xs[j + 1]);
                } else {
                    zeros.push(xs[j + 1]);
                    degenerate = true;
                }
            }
        }
        last = Some(i);
    }
    if let Some(j) = last {
        if j + 1 < n {
            zeros.push(xs[j + 1]);
        }
    }

    // Local minima of |u − μ| without a sign change: either a zero pair hidden
    // between scan points or a near-double zero.
    for i in 1..n.saturating_sub(1) {
        let (p, c, q) = (v[i - 1], v[i], v[i + 1]);
        if c == 0.0 || (p > 0.0) != (c > 0.0) || (q > 0.0) != (c > 0.0) || p == 0.0 || q == 0.0 {
            continue;
        }
        if c.abs() > p.abs() || c.abs() > q.abs() {
            continue;
        }
        let s = c.signum();
        let (xm, neg_min) = golden_max(|x| -s * f(x), xs[i - 1], xs[i + 1], 1e-13);
        let min = -neg_min;
        if min < 0.0 {
            zeros.push(bisect(f, xs[i - 1], xm, ZERO_XTOL));
            zeros.push(bisect(f, xm, xs[i + 1], ZERO_XTOL));
        } else if min < DEGENERACY_LEVEL {
            degenerate = true;
        }
    }

    zeros.sort_by(f64::total_cmp);
    zeros.dedup();

    // Alternate open segments and zero points along [a, b].
    let mut plus = Vec::with_capacity(2 * zeros.len() + 1);
    let mut minus = Vec::with_capacity(2 * zeros.len() + 1);
    let mut pos = a;
    let push_segment = |lo: f64, hi: f64, plus: &mut Vec<bool>, minus: &mut Vec<bool>| {
        let s = f(0.5 * (lo + hi));
        plus.push(s >= 0.0);
        minus.push(s <= 0.0);
    };
    for &z in &zeros {
        if z > pos {
            push_segment(pos, z, &mut plus, &mut minus);
        }
        plus.push(true);
        minus.push(true);
        pos = z;
    }
    if b > pos {
        push_segment(pos, b, &mut plus, &mut minus);
    }

    OracleResult {
        beta0_plus: count_runs(plus.into_iter()),
        beta0_minus: count_runs(minus.into_iter()),
        zeros,
        degenerate,
    }
}

/// `β₀(N^±)` of one path by a dense sign scan with `resolution` points.
pub fn oracle_beta0(path: &SamplePath<'_>, threshold: &Threshold, resolution: usize) -> OracleResult {
    OracleScanner::new(path.model(), threshold, resolution).scan(path)
}

/// `σ·vα ≥ 0, σ·vmid ≤ 0, σ·vβ ≥ 0` for some `σ ∈ {±1}`.
pub fn double_crossover(v_alpha: f64, v_mid: f64, v_beta: f64) -> bool {
    (v_alpha >= 0.0 && v_mid <= 0.0 && v_beta >= 0.0) || (v_alpha <= 0.0 && v_mid >= 0.0 && v_beta <= 0.0)
}

/// True iff `u − μ` has no double crossover on any dyadic subinterval of
/// `[alpha, beta]` of depth at most `depth`. This is a finite-depth
/// under-approximation of admissibility.
pub fn admissible_to_depth(path: &SamplePath<'_>, threshold: &Threshold, alpha: f64, beta: f64, depth: u32) -> bool {
    let f = |x: f64| path.value(x) - threshold.value(x);
    admissible_values(&f, alpha, beta, depth)
}

fn admissible_values<F: Fn(f64) -> f64>(f: &F, alpha: f64, beta: f64, depth: u32) -> bool {
    let level = depth + 1;
    let count = 1usize << level;
    let w: Vec<f64> = (0..=count)
        .map(|j| if j == count { beta } else { alpha + (beta - alpha) * j as f64 / count as f64 })
        .map(f)
        .collect();
    for n in 0..=depth {
        let step = 1usize << (level - n);
        for k in 0..(1usize << n) {
            let lo = k * step;
            if double_crossover(w[lo], w[lo + step / 2], w[lo + step]) {
                return false;
            }
        }
    }
    true
}

/// Leading term `(4/3) C₀(x) δ³` of the probability that `[x, x + δ]` is not
/// admissible. Diagnostic only.
pub fn non_admissible_probability(c0: f64, delta: f64) -> f64 {
    4.0 / 3.0 * c0 * delta.powi(3)
}

/// The three hypotheses of the validation criterion for one path and grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationCriterion {
    /// `u − μ` nonzero at every grid point.
    pub nonzero_at_grid: bool,
    /// No (near-)double zero detected.
    pub simple_zeros: bool,
    /// Every grid cell admissible to the checked depth.
    pub admissible: bool,
}

impl ValidationCriterion {
    pub fn holds(&self) -> bool {
        self.nonzero_at_grid && self.simple_zeros && self.admissible
    }
}

pub fn validation_criterion(
    path: &SamplePath<'_>,
    threshold: &Threshold,
    grid: &[f64],
    oracle: &OracleResult,
    depth: u32,
) -> ValidationCriterion {
    let f = |x: f64| path.value(x) - threshold.value(x);
    ValidationCriterion {
        nonzero_at_grid: grid.iter().all(|&x| f(x) != 0.0),
        simple_zeros: !oracle.degenerate,
        admissible: grid.windows(2).all(|w| admissible_values(&f, w[0], w[1], depth)),
    }
}

/// Oracle and cubical counts for one path on a grid.
pub fn verify_match(path: &SamplePath<'_>, threshold: &Threshold, grid: &[f64], resolution: usize) -> NodalReport {
    let oracle = oracle_beta0(path, threshold, resolution);
    let values: Vec<f64> = grid.iter().map(|&x| path.value(x) - threshold.value(x)).collect();
    compare(oracle, &values)
}

/// Combines an oracle result with the values of `u − μ` on a grid.
pub fn compare(oracle: OracleResult, grid_values: &[f64]) -> NodalReport {
    let (qp, qm) = cubical_beta0_values(grid_values);
    NodalReport {
        beta0_n_plus: oracle.beta0_plus,
        beta0_n_minus: oracle.beta0_minus,
        beta0_q_plus: qp,
        beta0_q_minus: qm,
        match_plus: oracle.beta0_plus == qp,
        match_minus: oracle.beta0_minus == qm,
        zeros: oracle.zeros,
        degenerate: oracle.degenerate,
    }
}

/// Reusable verification of many paths of one model against a fixed grid.
pub struct Verifier<'m> {
    scanner: OracleScanner<'m>,
    grid: OracleScanner<'m>,
}

impl<'m> Verifier<'m> {
    pub fn new(model: &'m FieldModel, threshold: &Threshold, grid: &[f64], resolution: usize) -> Self {
        Self {
            scanner: OracleScanner::new(model, threshold, resolution),
            grid: OracleScanner::at_points(model, threshold, grid.to_vec()),
        }
    }

    pub fn grid(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn oracle(&self, path: &SamplePath<'_>) -> OracleResult {
        self.scanner.scan(path)
    }

    pub fn verify(&self, path: &SamplePath<'_>) -> NodalReport {
        compare(self.scanner.scan(path), &self.grid.values(path))
    }
}
