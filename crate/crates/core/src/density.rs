//! Topology-guided sampling density `C(x)`, the local crossover coefficient
//! `C₀(x) = 3C(x)/4`, and the Kac–Rice zero density `D(x)`.
//!
//! With `ℛ(x)` the 3×3 matrix of diagonal correlation derivatives and
//! `m33, m32, m31` its trailing minors,
//!
//! ```text
//! C(x) = det ℛ / (48π m33^{3/2}) · (1 + A(x)) · exp(−B(x))
//! A(x) = (m31 μ − m32 μ' + m33 μ'')² / (m33 det ℛ)
//! B(x) = ((R10 μ − R00 μ')² + m33 μ²) / (2 R00 m33)
//! D(x) = m33^{1/2} / (π R00)
//! ```

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field_model::{CorrelationJet, FieldModel, Jet, Threshold};

/// All density quantities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityBreakdown {
    pub x: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    /// Threshold factor `(1 + A) e^{−B}`.
    pub s: f64,
    pub c0: f64,
    pub d: f64,
}

/// `C(x)` with its threshold corrections for a jet that satisfies the
/// positive definiteness check.
pub fn sampling_density(jet: &CorrelationJet, mu: Jet) -> Result<DensityBreakdown> {
    jet.check_positive_definite()?;
    density_terms(jet, mu)
}

fn density_terms(jet: &CorrelationJet, mu: Jet) -> Result<DensityBreakdown> {
    let [m, dm, ddm] = mu;
    let base = jet.det_r / (48.0 * PI * jet.m33.powf(1.5));

    let num = jet.m31 * m - jet.m32 * dm + jet.m33 * ddm;
    let a = (num * num) / (jet.m33 * jet.det_r);
    if !a.is_finite() {
        return Err(Error::G2Violation {
            x: jet.x,
            reason: format!("threshold correction overflows (det R = {:e})", jet.det_r),
        });
    }
    let lin = jet.r10 * m - jet.r00 * dm;
    let b = (lin * lin + jet.m33 * m * m) / (2.0 * jet.r00 * jet.m33);
    let s = (1.0 + a) * (-b).exp();
    let c = base * s;
    Ok(DensityBreakdown {
        x: jet.x,
        c,
        a,
        b,
        s,
        c0: 0.75 * c,
        d: zero_density(jet)?,
    })
}

/// `C(x)` for a constant threshold `μ ≡ τ`, evaluated through the dedicated
/// scaling factor `S(x)` rather than the general `A`, `B` terms.
pub fn sampling_density_constant_threshold(jet: &CorrelationJet, tau: f64) -> Result<DensityBreakdown> {
    jet.check_positive_definite()?;
    let t2 = tau * tau;
    let a = jet.m31 * jet.m31 * t2 / (jet.m33 * jet.det_r);
    if !a.is_finite() {
        return Err(Error::G2Violation {
            x: jet.x,
            reason: format!("threshold correction overflows (det R = {:e})", jet.det_r),
        });
    }
    let b = (jet.r10 * jet.r10 + jet.m33) / (2.0 * jet.r00 * jet.m33) * t2;
    let s = (1.0 + a) * (-b).exp();
    let c = jet.det_r / (48.0 * PI * jet.m33.powf(1.5)) * s;
    Ok(DensityBreakdown {
        x: jet.x,
        c,
        a,
        b,
        s,
        c0: 0.75 * c,
        d: zero_density(jet)?,
    })
}

/// Closed form of `C(x)` for a random `L`-periodic field with moment sums
/// `A_ℓ = Σ k^{2ℓ} a_k²`.
pub fn periodic_density_closed_form(a0: f64, a1: f64, a2: f64, length: f64, mu: Jet) -> Result<f64> {
    let gap = a0 * a2 - a1 * a1;
    if !(a0 > 0.0 && a1 > 0.0 && gap > 0.0 && length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "periodic moments must satisfy A0 > 0, A1 > 0, A0 A2 > A1² (got {a0}, {a1}, {a2})"
        )));
    }
    let [m, dm, ddm] = mu;
    let scale = length * length / (4.0 * PI * PI);
    let corr = a1 * m + a0 * ddm * scale;
    let s = (1.0 + corr * corr / (a0 * gap)) * (-(a1 * m * m + a0 * dm * dm * scale) / (2.0 * a0 * a1)).exp();
    Ok(PI * PI / (6.0 * length.powi(3)) * gap / (a0.powf(1.5) * a1.sqrt()) * s)
}

/// Moment sums `(A_0, A_1, A_2)` of a list of periodic amplitudes.
pub fn periodic_moments(amplitudes: &[f64]) -> (f64, f64, f64) {
    amplitudes.iter().enumerate().fold((0.0, 0.0, 0.0), |(s0, s1, s2), (k, &a)| {
        let k2 = (k * k) as f64;
        let a2 = a * a;
        (s0 + a2, s1 + k2 * a2, s2 + k2 * k2 * a2)
    })
}

/// Kac–Rice density of zeros `D(x) = m33^{1/2} / (π R00)`.
pub fn zero_density(jet: &CorrelationJet) -> Result<f64> {
    if !(jet.r00 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "zero density needs R00 > 0, got {} at x = {}",
            jet.r00, jet.x
        )));
    }
    Ok(jet.m33.max(0.0).sqrt() / (PI * jet.r00))
}

/// Pointwise density evaluation for a model and threshold.
#[derive(Debug, Clone, Copy)]
pub struct DensityProfile<'a> {
    pub model: &'a FieldModel,
    pub threshold: &'a Threshold,
}

impl<'a> DensityProfile<'a> {
    pub fn new(model: &'a FieldModel, threshold: &'a Threshold) -> Self {
        Self { model, threshold }
    }

    pub fn breakdown(&self, x: f64) -> Result<DensityBreakdown> {
        let jet = self.model.jet(x)?;
        sampling_density(&jet, self.threshold.jet(x))
    }

    /// `C(x)` for planning. Near-degenerate points that fail the relative
    /// check of [`CorrelationJet::check_positive_definite`] (e.g. close to the
    /// Neumann endpoints of the cosine family) still get the formula value as
    /// long as `R00`, `m33` and `det ℛ` are positive; points where one of them
    /// vanishes get `C = 0`. Threshold overflow is still reported.
    pub fn c(&self, x: f64) -> Result<f64> {
        let jet = self.model.jet(x)?;
        let mu = self.threshold.jet(x);
        match sampling_density(&jet, mu) {
            Ok(b) => Ok(b.c),
            Err(Error::G2Violation { .. }) if jet.r00 > 0.0 && jet.m33 > 0.0 && jet.det_r > 0.0 => {
                Ok(density_terms(&jet, mu)?.c)
            }
            Err(Error::G2Violation { .. }) if jet.r00 > 0.0 => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    pub fn d(&self, x: f64) -> Result<f64> {
        zero_density(&self.model.jet(x)?)
    }
}
