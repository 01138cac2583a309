//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! family = "chebyshev"      # cosine | periodic | binomial | unit-polynomial | sinusoid | constant
//! n = 5
//! # length = 1.0            periodic, sinusoid, constant
//! # amplitudes = [0.0, 1.0] periodic
//! # variances = [...]       diagonal covariance override
//! # covariance = [[...]]    full covariance override
//!
//! [threshold]
//! kind = "zero"             # constant (value) | polynomial (coefficients) | cubic-shift (tau)
//!
//! [run]
//! strategy = "topology"     # uniform | density-guided
//! p = 0.95                  # or m = 40, never both
//! trials = 10000
//! seed = 7
//! # resolution = 16384
//! # output = "result.csv"
//! # per_trial_log = "trials.csv"
//! # threads = 4
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, HarnessResult};
use crate::field_model::{Covariance, CustomBasis, Family, FieldModel, Threshold};
use crate::planner::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl ModelSpec {
    pub fn family(name: &str, n: Option<usize>) -> Self {
        Self {
            family: name.to_string(),
            n,
            length: None,
            amplitudes: None,
            variances: None,
            covariance: None,
        }
    }

    fn degree(&self) -> HarnessResult<usize> {
        self.n
            .ok_or_else(|| HarnessError::Config(format!("family '{}' needs n", self.family)))
    }

    fn length(&self) -> HarnessResult<f64> {
        let l = self.length.unwrap_or(1.0);
        if l > 0.0 && l.is_finite() {
            Ok(l)
        } else {
            Err(HarnessError::Config(format!("length must be positive, got {l}")))
        }
    }

    pub fn build(&self) -> HarnessResult<FieldModel> {
        let model = match self.family.as_str() {
            "chebyshev" => FieldModel::chebyshev(self.degree()?),
            "cosine" => FieldModel::cosine(self.degree()?),
            "binomial" => FieldModel::binomial_polynomial(self.degree()?),
            "unit-polynomial" => FieldModel::unit_polynomial(self.degree()?),
            "periodic" => {
                let length = self.length()?;
                let built = match &self.amplitudes {
                    Some(a) => FieldModel::periodic(length, a.clone()),
                    None => FieldModel::periodic_equal(self.degree()?, length),
                };
                built.map_err(|e| HarnessError::Config(e.to_string()))?
            }
            "sinusoid" => sinusoid(self.length()?)?,
            "constant" => {
                let basis = CustomBasis::new("constant", 1, |_, _| [1.0, 0.0, 0.0]);
                FieldModel::new(Family::Custom(basis), Covariance::Diagonal(vec![1.0]), (0.0, self.length()?))
                    .map_err(|e| HarnessError::Config(e.to_string()))?
            }
            other => return Err(HarnessError::Config(format!("unknown model family '{other}'"))),
        };
        let covariance = match (&self.variances, &self.covariance) {
            (Some(_), Some(_)) => {
                return Err(HarnessError::Config("give either variances or covariance, not both".into()))
            }
            (Some(v), None) => Some(Covariance::Diagonal(v.clone())),
            (None, Some(m)) => Some(Covariance::Full(m.clone())),
            (None, None) => None,
        };
        match covariance {
            Some(c) => model.with_covariance(c).map_err(|e| HarnessError::Config(e.to_string())),
            None => Ok(model),
        }
    }
}

/// `g cos(2πx/L) + g' sin(2πx/L)` on `[0, L]` with unit variances.
fn sinusoid(length: f64) -> HarnessResult<FieldModel> {
    let w = 2.0 * PI / length;
    let basis = CustomBasis::new("sinusoid", 2, move |k, x| {
        let (s, c) = (w * x).sin_cos();
        if k == 0 {
            [c, -w * s, -w * w * c]
        } else {
            [s, w * c, -w * w * s]
        }
    });
    FieldModel::new(Family::Custom(basis), Covariance::Diagonal(vec![1.0, 1.0]), (0.0, length))
        .map_err(|e| HarnessError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThresholdSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    Polynomial { coefficients: Vec<f64> },
    CubicShift { tau: f64 },
}

impl ThresholdSpec {
    pub fn build(&self) -> Threshold {
        match self {
            ThresholdSpec::Zero => Threshold::Zero,
            ThresholdSpec::Constant { value } => Threshold::Constant(*value),
            ThresholdSpec::Polynomial { coefficients } => Threshold::Polynomial(coefficients.clone()),
            ThresholdSpec::CubicShift { tau } => Threshold::CubicShift(*tau),
        }
    }
}

impl std::str::FromStr for ThresholdSpec {
    type Err = HarnessError;

    /// `zero`, `constant=0.5`, `polynomial=1,0,-2` or `cubic-shift=0.1`.
    fn from_str(s: &str) -> HarnessResult<Self> {
        let (kind, arg) = match s.split_once('=') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let number = |a: Option<&str>| -> HarnessResult<f64> {
            a.ok_or_else(|| HarnessError::Config(format!("threshold '{kind}' needs a value")))?
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad threshold value in '{s}'")))
        };
        match kind {
            "zero" => Ok(ThresholdSpec::Zero),
            "constant" => Ok(ThresholdSpec::Constant { value: number(arg)? }),
            "cubic-shift" => Ok(ThresholdSpec::CubicShift { tau: number(arg)? }),
            "polynomial" => Ok(ThresholdSpec::Polynomial {
                coefficients: parse_list(arg.unwrap_or(""))?,
            }),
            other => Err(HarnessError::Config(format!("unknown threshold kind '{other}'"))),
        }
    }
}

/// Comma separated floats.
pub fn parse_list(s: &str) -> HarnessResult<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("not a number: '{t}'")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_trial_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub run: RunSpec,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            threshold: ThresholdSpec::Zero,
            run: RunSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn strategy(&self) -> Strategy {
        self.run.strategy.unwrap_or(Strategy::Topology)
    }

    pub fn trials(&self) -> u64 {
        self.run.trials.unwrap_or(1000)
    }

    /// Checks the invariants of an experiment: exactly one of `m` and `p`,
    /// at least one trial and a seed.
    pub fn validate(&self) -> HarnessResult<()> {
        match (self.run.m, self.run.p) {
            (Some(_), Some(_)) => return Err(HarnessError::Config("give either m or p, not both".into())),
            (None, None) => return Err(HarnessError::Config("one of m or p is required".into())),
            (Some(0), None) => return Err(HarnessError::Config("m must be at least 1".into())),
            (None, Some(p)) if !(0.0..1.0).contains(&p) => {
                return Err(HarnessError::Config(format!("p must lie in [0, 1), got {p}")))
            }
            _ => {}
        }
        if self.run.trials == Some(0) {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.run.seed.is_none() {
            return Err(HarnessError::Config("a seed is required".into()));
        }
        Ok(())
    }

    /// The configuration as written to JSON metadata. Output locations and the
    /// thread count are left out so that the echo does not depend on them.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.run.output = None;
        c.run.per_trial_log = None;
        c.run.threads = None;
        serde_json::to_value(c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let c = ExperimentConfig::from_toml(
            r#"
            [model]
            family = "periodic"
            length = 2.0
            amplitudes = [0.0, 1.0, 0.5]
            [threshold]
            kind = "constant"
            value = 0.25
            [run]
            strategy = "density-guided"
            m = 12
            trials = 5
            seed = 3
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.strategy(), Strategy::DensityGuided);
        assert_eq!(c.threshold.build(), Threshold::Constant(0.25));
        let m = c.model.build().unwrap();
        assert_eq!(m.domain(), (0.0, 2.0));
        assert_eq!(m.terms(), 5);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "[model]\nfamily = \"chebyshev\"\nn = 3\n";
        let both = format!("{base}[run]\nm = 3\np = 0.5\nseed = 1\n");
        assert!(ExperimentConfig::from_toml(&both).unwrap().validate().is_err());
        let zero_trials = format!("{base}[run]\nm = 3\ntrials = 0\nseed = 1\n");
        assert!(ExperimentConfig::from_toml(&zero_trials).unwrap().validate().is_err());
        let no_seed = format!("{base}[run]\nm = 3\n");
        assert!(ExperimentConfig::from_toml(&no_seed).unwrap().validate().is_err());
        assert!(ExperimentConfig::from_toml("[model]\nfamily = \"x\"\nbogus = 1\n").is_err());
        assert!(ModelSpec::family("nope", Some(2)).build().is_err());
        assert!(ModelSpec::family("chebyshev", None).build().is_err());
    }

    #[test]
    fn threshold_strings() {
        assert_eq!("zero".parse::<ThresholdSpec>().unwrap(), ThresholdSpec::Zero);
        assert_eq!(
            "polynomial=1, 0,-2".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Polynomial { coefficients: vec![1.0, 0.0, -2.0] }
        );
        assert_eq!("cubic-shift=0.1".parse::<ThresholdSpec>().unwrap(), ThresholdSpec::CubicShift { tau: 0.1 });
        assert!("constant".parse::<ThresholdSpec>().is_err());
    }

    #[test]
    fn sinusoid_and_constant_models() {
        let s = ModelSpec::family("sinusoid", None).build().unwrap();
        let j = s.jet(0.3).unwrap();
        assert!((j.r00 - 1.0).abs() < 1e-14);
        assert!((j.r11 - 4.0 * PI * PI).abs() < 1e-12);
        let c = ModelSpec::family("constant", None).build().unwrap();
        assert_eq!(c.terms(), 1);
    }
}
