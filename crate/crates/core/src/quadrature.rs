//! Adaptive Simpson quadrature, monotone root bracketing and golden-section
//! search.

use crate::error::{Error, Result};

/// Number of panels the integration range is split into before adapting.
pub const MIN_PANELS: usize = 64;

const MAX_DEPTH: u32 = 48;
/// Integrand evaluations after which no interval is split further, so that a
/// noisy integrand cannot trigger unbounded refinement.
const MAX_EVALUATIONS: usize = 4_000_000;

#[derive(Debug, Clone, Copy)]
struct Leaf {
    right: f64,
    integral: f64,
}

fn checked<F: Fn(f64) -> Result<f64>>(f: &F, x: f64) -> Result<f64> {
    let v = f(x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteDensity { x })
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    leaves: &mut Vec<Leaf>,
    evaluations: &mut usize,
) -> Result<()> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = checked(f, lm)?;
    let frm = checked(f, rm)?;
    *evaluations += 2;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || *evaluations >= MAX_EVALUATIONS || delta.abs() <= 15.0 * tol || (b - a) <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
        leaves.push(Leaf {
            right: b,
            integral: left + right + delta / 15.0,
        });
        return Ok(());
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, leaves, evaluations)?;
    refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, leaves, evaluations)
}

/// Adaptive Simpson integration of `f` over `[a, b]`, returning the accepted
/// leaf intervals in increasing order.
fn leaves<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64, rel_tol: f64, panels: usize) -> Result<Vec<Leaf>> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let node = |i: usize| if i == panels { b } else { a + h * i as f64 };
    let mut coarse = Vec::with_capacity(panels);
    let mut estimate = 0.0;
    let mut fl = checked(f, a)?;
    for i in 0..panels {
        let (l, r) = (node(i), node(i + 1));
        let fm = checked(f, 0.5 * (l + r))?;
        let fr = checked(f, r)?;
        let s = simpson(l, r, fl, fm, fr);
        estimate += s.abs();
        coarse.push((l, r, fl, fm, fr, s));
        fl = fr;
    }
    let tol = (rel_tol * estimate).max(f64::MIN_POSITIVE) / panels as f64;
    let mut out = Vec::new();
    let mut evaluations = 2 * panels + 1;
    for (l, r, fl, fm, fr, s) in coarse {
        refine(f, l, r, fl, fm, fr, s, tol, 0, &mut out, &mut evaluations)?;
    }
    Ok(out)
}

/// `∫_a^b f` by adaptive Simpson to relative tolerance `rel_tol`.
pub fn integrate<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    Ok(leaves(&f, a, b, rel_tol, MIN_PANELS)?.iter().map(|l| l.integral).sum())
}

/// Same as [`integrate`] for an infallible integrand.
pub fn integrate_fn<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    integrate(|x| Ok(f(x)), a, b, rel_tol).unwrap_or(f64::NAN)
}

/// Cumulative integral `F(x) = ∫_a^x f` of a nonnegative integrand, stored
/// as the adaptive leaf partition plus running sums.
pub struct Cumulative<F> {
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    breaks: Vec<f64>,
    running: Vec<f64>,
}

impl<F: Fn(f64) -> Result<f64>> Cumulative<F> {
    pub fn new(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
        }
        let parts = leaves(&f, a, b, rel_tol, MIN_PANELS)?;
        let mut breaks = Vec::with_capacity(parts.len() + 1);
        let mut running = Vec::with_capacity(parts.len() + 1);
        breaks.push(a);
        running.push(0.0);
        let mut acc = 0.0;
        for leaf in &parts {
            acc += leaf.integral.max(0.0);
            breaks.push(leaf.right);
            running.push(acc);
        }
        *breaks.last_mut().expect("at least one leaf") = b;
        Ok(Self {
            f,
            a,
            b,
            rel_tol,
            breaks,
            running,
        })
    }

    pub fn total(&self) -> f64 {
        *self.running.last().expect("non-empty")
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Number of adaptive leaves.
    pub fn leaf_count(&self) -> usize {
        self.breaks.len() - 1
    }

    fn leaf_of(&self, x: f64) -> usize {
        let i = self.breaks.partition_point(|&t| t <= x);
        i.saturating_sub(1).min(self.breaks.len() - 2)
    }

    /// `F(x)`.
    pub fn at(&self, x: f64) -> Result<f64> {
        let x = x.clamp(self.a, self.b);
        let i = self.leaf_of(x);
        let l = self.breaks[i];
        if x == l {
            return Ok(self.running[i]);
        }
        let part = leaves(&self.f, l, x, self.rel_tol, 1)?
            .iter()
            .map(|leaf| leaf.integral)
            .sum::<f64>();
        let upper = self.running[i + 1];
        Ok((self.running[i] + part.max(0.0)).min(upper))
    }

    /// Smallest `x` with `F(x) = target`, by bisection to `xtol`.
    pub fn invert(&self, target: f64, xtol: f64) -> Result<f64> {
        if target <= 0.0 {
            return Ok(self.a);
        }
        if target >= self.total() {
            return Ok(self.b);
        }
        // Leaf i satisfies running[i] < target <= running[i + 1].
        let i = self.running.partition_point(|&v| v < target).saturating_sub(1);
        let (mut lo, mut hi) = (self.breaks[i], self.breaks[i + 1]);
        let base = self.running[i];
        let leaf_tol = self.rel_tol;
        while hi - lo > xtol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let part: f64 = leaves(&self.f, self.breaks[i], mid, leaf_tol, 1)?
                .iter()
                .map(|leaf| leaf.integral)
                .sum();
            if base + part < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Root of a continuous function with a sign change on `[lo, hi]`, by
/// bisection until the bracket is narrower than `xtol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > xtol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_and_arctan() {
        let v = integrate_fn(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate_fn(|x| 1.0 / (1.0 + x * x), -3.0, 3.0, 1e-12);
        assert!((v - 2.0 * 3f64.atan()).abs() < 1e-11);
    }

    #[test]
    fn cumulative_inverts_arctan_quantiles() {
        let c = Cumulative::new(|x: f64| Ok(1.0 / (1.0 + x * x)), -3.0, 3.0, 1e-12).unwrap();
        let k = c.total();
        assert!((k - 2.0 * 3f64.atan()).abs() < 1e-11);
        let x = c.invert(0.75 * k, 1e-13).unwrap();
        assert!((x - (3f64.atan() / 2.0).tan()).abs() < 1e-10);
        assert!((c.at(x).unwrap() - 0.75 * k).abs() < 1e-11);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate(|x| Ok(1.0 / x), 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::NonFiniteDensity { .. })));
    }

    #[test]
    fn bisect_and_golden() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8 && v <= 0.0);
        // maximum at a boundary
        let (x, _) = golden_max(|x| x, 0.0, 1.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-9);
    }
}
