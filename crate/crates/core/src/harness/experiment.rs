use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{HarnessError, HarnessResult};
use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::field_model::{FieldModel, Threshold};
use crate::planner::{
    build_plan, cube_root_weight, cumulative_weight, expected_zeros, min_samples, plan_for_probability, ScalingRow,
    SamplingPlan, Strategy,
};
use crate::rng::stream_rng;
use crate::table::{Cell, Table};
use crate::topology::{compare, default_resolution, NodalReport, OracleScanner};

/// Outcome of one sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial: u64,
    pub beta0_n_plus: usize,
    pub beta0_n_minus: usize,
    pub beta0_q_plus: usize,
    pub beta0_q_minus: usize,
    pub zeros: usize,
    pub degenerate: bool,
    pub match_plus: bool,
    pub match_minus: bool,
}

impl TrialRecord {
    fn new(trial: u64, r: &NodalReport) -> Self {
        Self {
            trial,
            beta0_n_plus: r.beta0_n_plus,
            beta0_n_minus: r.beta0_n_minus,
            beta0_q_plus: r.beta0_q_plus,
            beta0_q_minus: r.beta0_q_minus,
            zeros: r.zeros.len(),
            degenerate: r.degenerate,
            match_plus: r.match_plus,
            match_minus: r.match_minus,
        }
    }
}

/// Aggregated correctness of one plan over many paths. Degenerate paths are
/// counted but left out of the match counts and of the denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub strategy: Strategy,
    pub m: usize,
    pub k: f64,
    pub bound: f64,
    pub vacuous: bool,
    /// The plan fell back to a uniform grid.
    pub fallback_uniform: bool,
    pub trials: u64,
    pub valid: u64,
    pub degenerate: u64,
    pub matches_plus: u64,
    pub matches_minus: u64,
    pub matches_both: u64,
    /// `matches_both / valid`.
    pub correctness: f64,
    /// `√(q(1 − q)/valid)`.
    pub standard_error: f64,
    pub per_trial: Option<Vec<TrialRecord>>,
}

const RESULT_COLUMNS: [&str; 14] = [
    "strategy",
    "m",
    "k",
    "bound",
    "vacuous",
    "trials",
    "valid",
    "degenerate",
    "matches_plus",
    "matches_minus",
    "matches_both",
    "correctness",
    "standard_error",
    "fallback_uniform",
];

impl ExperimentResult {
    fn aggregate(plan: &SamplingPlan, records: Vec<TrialRecord>, keep_log: bool) -> Self {
        let trials = records.len() as u64;
        let mut r = Self {
            strategy: plan.strategy,
            m: plan.m(),
            k: plan.k,
            bound: plan.bound,
            vacuous: plan.vacuous,
            fallback_uniform: plan.fallback_uniform,
            trials,
            valid: 0,
            degenerate: 0,
            matches_plus: 0,
            matches_minus: 0,
            matches_both: 0,
            correctness: f64::NAN,
            standard_error: f64::NAN,
            per_trial: None,
        };
        for t in &records {
            if t.degenerate {
                r.degenerate += 1;
                continue;
            }
            r.valid += 1;
            r.matches_plus += t.match_plus as u64;
            r.matches_minus += t.match_minus as u64;
            r.matches_both += (t.match_plus && t.match_minus) as u64;
        }
        if r.valid > 0 {
            let n = r.valid as f64;
            let q = r.matches_both as f64 / n;
            r.correctness = q;
            r.standard_error = (q * (1.0 - q) / n).sqrt();
        }
        if keep_log {
            r.per_trial = Some(records);
        }
        r
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            self.strategy.name().into(),
            self.m.into(),
            self.k.into(),
            self.bound.into(),
            self.vacuous.into(),
            self.trials.into(),
            self.valid.into(),
            self.degenerate.into(),
            self.matches_plus.into(),
            self.matches_minus.into(),
            self.matches_both.into(),
            self.correctness.into(),
            self.standard_error.into(),
            self.fallback_uniform.into(),
        ]
    }

    /// One-row summary table.
    pub fn table(&self) -> Table {
        results_table(std::slice::from_ref(self))
    }

    /// Per-trial log, if it was kept.
    pub fn trial_table(&self) -> Option<Table> {
        let records = self.per_trial.as_ref()?;
        let mut t = Table::new(&[
            "trial",
            "beta0_n_plus",
            "beta0_n_minus",
            "beta0_q_plus",
            "beta0_q_minus",
            "zeros",
            "degenerate",
            "match_plus",
            "match_minus",
        ]);
        for r in records {
            t.row(vec![
                r.trial.into(),
                r.beta0_n_plus.into(),
                r.beta0_n_minus.into(),
                r.beta0_q_plus.into(),
                r.beta0_q_minus.into(),
                r.zeros.into(),
                r.degenerate.into(),
                r.match_plus.into(),
                r.match_minus.into(),
            ]);
        }
        Some(t)
    }
}

/// Summary table with one row per result.
pub fn results_table(results: &[ExperimentResult]) -> Table {
    let mut t = Table::new(&RESULT_COLUMNS);
    for r in results {
        t.row(r.cells());
    }
    t
}

fn resolve_resolution(model: &FieldModel, resolution: Option<usize>) -> Result<usize> {
    match resolution {
        Some(0) => Err(Error::InvalidArgument("oracle resolution must be positive".into())),
        Some(r) => Ok(r),
        None => Ok(default_resolution(expected_zeros(model)?)),
    }
}

/// Samples `trials` paths (path `t` from stream `t` of `seed`) and compares
/// each against every plan. The oracle scan is shared by all plans.
fn sample_against(
    model: &FieldModel,
    threshold: &Threshold,
    plans: &[SamplingPlan],
    trials: u64,
    seed: u64,
    resolution: usize,
) -> Vec<Vec<TrialRecord>> {
    let oracle = OracleScanner::new(model, threshold, resolution);
    let grids: Vec<OracleScanner<'_>> = plans
        .iter()
        .map(|p| OracleScanner::at_points(model, threshold, p.grid.clone()))
        .collect();
    let per_trial: Vec<Vec<TrialRecord>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let path = model.sample_path_with(&mut stream_rng(seed, t));
            let scan = oracle.scan(&path);
            grids
                .iter()
                .map(|g| TrialRecord::new(t, &compare(scan.clone(), &g.values(&path))))
                .collect()
        })
        .collect();
    // transpose to one record list per plan
    (0..plans.len())
        .map(|i| per_trial.iter().map(|row| row[i]).collect())
        .collect()
}

/// Monte Carlo correctness of a fixed plan. Deterministic in `seed` and
/// independent of the number of worker threads.
pub fn run_trials(
    model: &FieldModel,
    threshold: &Threshold,
    plan: &SamplingPlan,
    trials: u64,
    seed: u64,
    resolution: Option<usize>,
    keep_log: bool,
) -> Result<ExperimentResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let resolution = resolve_resolution(model, resolution)?;
    let mut records = sample_against(model, threshold, std::slice::from_ref(plan), trials, seed, resolution);
    Ok(ExperimentResult::aggregate(plan, records.remove(0), keep_log))
}

/// Builds the plan described by `config` and runs it.
pub fn run_experiment(config: &ExperimentConfig) -> HarnessResult<ExperimentResult> {
    config.validate()?;
    let model = config.model.build()?;
    let threshold = config.threshold.build();
    let plan = match (config.run.m, config.run.p) {
        (Some(m), _) => build_plan(&model, &threshold, config.strategy(), m),
        (None, Some(p)) => plan_for_probability(&model, &threshold, config.strategy(), p),
        (None, None) => unreachable!("validated"),
    }
    .map_err(HarnessError::at("planning"))?;
    run_trials(
        &model,
        &threshold,
        &plan,
        config.trials(),
        config.run.seed.expect("validated"),
        config.run.resolution,
        config.run.per_trial_log.is_some(),
    )
    .map_err(HarnessError::at("trials"))
}

/// Runs the topology, uniform and density-guided plans with `m` intervals on
/// the same paths.
pub fn compare_strategies(
    model: &FieldModel,
    threshold: &Threshold,
    m: usize,
    trials: u64,
    seed: u64,
    resolution: Option<usize>,
) -> Result<Vec<ExperimentResult>> {
    let plans = Strategy::ALL
        .iter()
        .map(|&s| build_plan(model, threshold, s, m))
        .collect::<Result<Vec<_>>>()?;
    run_plans(model, threshold, &plans, trials, seed, resolution)
}

/// Runs several plans on common paths; path `t` is the same for every plan
/// and for [`run_trials`] with the same seed.
pub fn run_plans(
    model: &FieldModel,
    threshold: &Threshold,
    plans: &[SamplingPlan],
    trials: u64,
    seed: u64,
    resolution: Option<usize>,
) -> Result<Vec<ExperimentResult>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let resolution = resolve_resolution(model, resolution)?;
    let records = sample_against(model, threshold, plans, trials, seed, resolution);
    Ok(plans
        .iter()
        .zip(records)
        .map(|(p, r)| ExperimentResult::aggregate(p, r, false))
        .collect())
}

/// Number of zeros per path against the Kac–Rice integral `∫ D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCountResult {
    pub trials: u64,
    pub mean: f64,
    /// Sample standard deviation over `√trials`.
    pub standard_error: f64,
    pub expected: f64,
    /// `(mean − expected) / expected`.
    pub relative_gap: f64,
    pub degenerate: u64,
}

impl ZeroCountResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["trials", "mean", "standard_error", "expected", "relative_gap", "degenerate"]);
        t.row(vec![
            self.trials.into(),
            self.mean.into(),
            self.standard_error.into(),
            self.expected.into(),
            self.relative_gap.into(),
            self.degenerate.into(),
        ]);
        t
    }

    /// `|mean − ∫D| ≤ z · SE`.
    pub fn within(&self, z: f64) -> bool {
        (self.mean - self.expected).abs() <= z * self.standard_error
    }
}

/// Mean number of zeros of `u` over `trials` paths, all paths included.
pub fn zero_count_experiment(
    model: &FieldModel,
    trials: u64,
    seed: u64,
    resolution: Option<usize>,
) -> Result<ZeroCountResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let expected = expected_zeros(model)?;
    let resolution = match resolution {
        Some(r) => r,
        None => default_resolution(expected),
    };
    let threshold = Threshold::Zero;
    let oracle = OracleScanner::new(model, &threshold, resolution);
    let counts: Vec<(usize, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let path = model.sample_path_with(&mut stream_rng(seed, t));
            let r = oracle.scan(&path);
            (r.zeros.len(), r.degenerate)
        })
        .collect();
    let n = trials as f64;
    let mean = counts.iter().map(|c| c.0 as f64).sum::<f64>() / n;
    let var = if trials > 1 {
        counts.iter().map(|c| (c.0 as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ZeroCountResult {
        trials,
        mean,
        standard_error: (var / n).sqrt(),
        expected,
        relative_gap: (mean - expected) / expected,
        degenerate: counts.iter().filter(|c| c.1).count() as u64,
    })
}

/// `C`, `C^{1/3}`, the threshold factor `S` and `D` on `points` equispaced
/// points, with `C^{1/3}` and `D` also normalized to unit integral. Rows where
/// the correlation matrix is degenerate carry the planning value of `C`, a
/// NaN `S` and the status `g2-violation`.
pub fn profile_dump(model: &FieldModel, threshold: &Threshold, points: usize) -> Result<Table> {
    if points < 2 {
        return Err(Error::InvalidArgument("a profile needs at least two points".into()));
    }
    let profile = DensityProfile::new(model, threshold);
    let (a, b) = model.domain();
    let k = cube_root_weight(|x| profile.c(x), a, b)?.total();
    let zeros = cumulative_weight(|x| profile.d(x), a, b)?.total();
    if !(k > 0.0 && zeros > 0.0) {
        return Err(Error::DegenerateDensity { a, b });
    }
    let mut t = Table::new(&["x", "c", "c_cbrt", "s", "d", "c_cbrt_normalized", "d_normalized", "status"]);
    for i in 0..points {
        let x = if i == points - 1 { b } else { a + (b - a) * i as f64 / (points - 1) as f64 };
        let (c, s, status) = match profile.breakdown(x) {
            Ok(br) => (br.c, br.s, "ok"),
            Err(Error::G2Violation { .. }) => (profile.c(x)?, f64::NAN, "g2-violation"),
            Err(e) => return Err(e),
        };
        let d = profile.d(x)?;
        let cbrt = c.max(0.0).cbrt();
        t.row(vec![
            x.into(),
            c.into(),
            cbrt.into(),
            s.into(),
            d.into(),
            (cbrt / k).into(),
            (d / zeros).into(),
            status.into(),
        ]);
    }
    Ok(t)
}

pub fn scaling_table(rows: &[ScalingRow]) -> Table {
    let mut t = Table::new(&["n", "expected_zeros", "k", "m_topology", "m_uniform"]);
    for r in rows {
        t.row(vec![r.n.into(), r.expected_zeros.into(), r.k.into(), r.m_topology.into(), r.m_uniform.into()]);
    }
    t
}

/// `M = min_samples(K, p)` for a model, as used by probability-driven runs.
pub fn samples_for_probability(model: &FieldModel, threshold: &Threshold, p: f64) -> Result<usize> {
    min_samples(crate::planner::topology_weight(model, threshold)?, p)
}
