use proptest::prelude::*;

use toposample::density::{sampling_density, sampling_density_constant_threshold, DensityProfile};
use toposample::orthant::{s_alpha, s_alpha_n3_closed, s_alpha_pm_n3};
use toposample::planner::{build_plan, cube_root_weight, min_samples, Strategy};
use toposample::rng::stream_rng;
use toposample::topology::{admissible_to_depth, oracle_beta0, validation_criterion, verify_match};
use toposample::{CorrelationJet, FieldModel, Threshold};

fn model(family: usize, n: usize) -> FieldModel {
    match family {
        0 => FieldModel::chebyshev(n),
        1 => FieldModel::cosine(n),
        2 => FieldModel::periodic_equal(n.max(2), 1.0).unwrap(),
        3 => FieldModel::binomial_polynomial(n),
        _ => FieldModel::unit_polynomial(n),
    }
}

/// Fraction `t ∈ [0, 1]` mapped into the domain with a margin on both sides.
fn inside(m: &FieldModel, t: f64, margin: f64) -> f64 {
    let (a, b) = m.domain();
    let w = b - a;
    a + margin * w + t * (1.0 - 2.0 * margin) * w
}

/// Fourth-order central difference weights for derivatives 0, 1, 2 on the
/// offsets -2..=2.
const STENCIL: [[f64; 5]; 3] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
];

fn fd_partial(m: &FieldModel, x: f64, h: f64, k: usize, l: usize) -> f64 {
    let mut s = 0.0;
    for (i, wi) in STENCIL[k].iter().enumerate() {
        for (j, wj) in STENCIL[l].iter().enumerate() {
            if *wi == 0.0 || *wj == 0.0 {
                continue;
            }
            let xi = x + (i as f64 - 2.0) * h;
            let yj = x + (j as f64 - 2.0) * h;
            s += wi * wj * m.correlation(xi, yj).unwrap();
        }
    }
    s / h.powi((k + l) as i32)
}

/// Step matched to the highest frequency of the model.
fn fd_step(m: &FieldModel, family: usize, n: usize) -> f64 {
    let (a, b) = m.domain();
    let w = match family {
        0 => (n * n) as f64,
        1 => std::f64::consts::PI * n as f64,
        2 => 2.0 * std::f64::consts::PI * n as f64,
        _ => n as f64,
    };
    (0.1 / w.max(1.0)).min(2e-2 * (b - a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_symmetric(family in 0usize..5, n in 1usize..=10, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let m = model(family, n);
        let (x, y) = (inside(&m, s, 0.0), inside(&m, t, 0.0));
        prop_assert_eq!(m.correlation(x, y).unwrap(), m.correlation(y, x).unwrap());
    }

    #[test]
    fn jet_matches_finite_differences(family in 0usize..5, n in 2usize..=10, t in 0.0f64..1.0) {
        let m = model(family, n);
        let h = fd_step(&m, family, n);
        let (a, b) = m.domain();
        let x = (a + 3.0 * h) + t * (b - a - 6.0 * h);
        let j = m.jet(x).unwrap();
        let stored = [[j.r00, 0.0, 0.0], [j.r10, j.r11, 0.0], [j.r20, j.r21, j.r22]];
        let diag = [j.r00, j.r11, j.r22];
        for k in 0..3 {
            for l in 0..=k {
                let fd = fd_partial(&m, x, h, k, l);
                let scale = (diag[k] * diag[l]).sqrt();
                prop_assert!(
                    (fd - stored[k][l]).abs() <= 1e-5 * scale,
                    "R{}{} at x={}: jet {} vs difference {}", k, l, x, stored[k][l], fd
                );
            }
        }
    }

    #[test]
    fn minors_agree_with_their_definitions(family in 0usize..5, n in 2usize..=10, t in 0.0f64..1.0) {
        let m = model(family, n);
        let x = inside(&m, t, 0.05);
        let j = m.jet(x).unwrap();
        let s = [j.r00, j.r11, j.r22];
        let tol = 1e-12;
        prop_assert!((j.m33 - (j.r00 * j.r11 - j.r10 * j.r10)).abs() <= tol * s[0] * s[1]);
        prop_assert!((j.m32 - (j.r00 * j.r21 - j.r10 * j.r20)).abs() <= tol * s[0] * (s[1] * s[2]).sqrt());
        prop_assert!((j.m31 - (j.r10 * j.r21 - j.r11 * j.r20)).abs() <= tol * (s[0] * s[2]).sqrt() * s[1]);
        let det = j.r20 * j.m31 - j.r21 * j.m32 + j.r22 * j.m33;
        prop_assert!((j.det_r - det).abs() <= 1e-10 * s[0] * s[1] * s[2]);
    }

    #[test]
    fn periodic_jet_is_position_independent(amps in prop::collection::vec(0.1f64..2.0, 2..6), length in 0.5f64..3.0) {
        let mut a = vec![0.3];
        a.extend(amps);
        let m = FieldModel::periodic(length, a).unwrap();
        let j0 = m.jet(0.0).unwrap();
        let base = [j0.r00, j0.r10, j0.r11, j0.r20, j0.r21, j0.r22];
        let scale = base.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..100 {
            let j = m.jet(length * i as f64 / 99.0).unwrap();
            let v = [j.r00, j.r10, j.r11, j.r20, j.r21, j.r22];
            for (p, q) in v.iter().zip(&base) {
                prop_assert!((p - q).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn sample_paths_are_seed_deterministic(family in 0usize..5, n in 1usize..=10, seed in any::<u64>()) {
        let m = model(family, n);
        let (p, q) = (m.sample_path(seed), m.sample_path(seed));
        prop_assert_eq!(p.coefficients(), q.coefficients());
    }

    #[test]
    fn threshold_derivatives_match_differences(
        coefficients in prop::collection::vec(-2.0f64..2.0, 1..6),
        tau in -1.0f64..1.0,
        x in -2.0f64..2.0,
    ) {
        let h = 1e-4;
        for th in [Threshold::Polynomial(coefficients.clone()), Threshold::CubicShift(tau), Threshold::Constant(tau)] {
            let [v, d1, d2] = th.jet(x);
            let (p, q) = (th.value(x + h), th.value(x - h));
            let fd1 = (p - q) / (2.0 * h);
            let fd2 = (p - 2.0 * v + q) / (h * h);
            let scale = 1.0 + v.abs() + d1.abs() + d2.abs();
            prop_assert!((fd1 - d1).abs() <= 1e-6 * scale);
            prop_assert!((fd2 - d2).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn density_terms_are_nonnegative(
        a in 0.1f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        d in 0.1f64..3.0, e in -3.0f64..3.0, f in 0.1f64..3.0,
        mu in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let jet = CorrelationJet::from_gram_factor(0.0, [[a, b, c], [0.0, d, e], [0.0, 0.0, f]]);
        let br = sampling_density(&jet, mu).unwrap();
        prop_assert!(br.a >= 0.0 && br.b >= 0.0 && br.c >= 0.0 && br.d >= 0.0);
        // C is positive unless e^{-B} underflows
        if br.b < 700.0 {
            prop_assert!(br.c > 0.0);
        }
        prop_assert_eq!(br.c0, 0.75 * br.c);
    }

    #[test]
    fn constant_threshold_tail(
        a in 0.1f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        d in 0.1f64..3.0, e in -3.0f64..3.0, f in 0.1f64..3.0,
        tau in -5.0f64..5.0,
    ) {
        let jet = CorrelationJet::from_gram_factor(0.0, [[a, b, c], [0.0, d, e], [0.0, 0.0, f]]);
        let zero = sampling_density_constant_threshold(&jet, 0.0).unwrap();
        let at = sampling_density_constant_threshold(&jet, tau).unwrap();
        prop_assert!(at.c <= zero.c * (1.0 + at.a) * (1.0 + 1e-12));
        let far = sampling_density_constant_threshold(&jet, 1e3 * (1.0 + tau.abs())).unwrap();
        prop_assert!(far.c < 1e-100 * zero.c.max(1.0));
    }

    #[test]
    fn s_identities(alpha in prop::array::uniform3(-3.0f64..3.0)) {
        let q = s_alpha(&alpha).unwrap();
        let neg = s_alpha(&alpha.map(|v| -v)).unwrap();
        prop_assert!((q - s_alpha_n3_closed(alpha)).abs() <= 1e-8);
        prop_assert!((q + neg - s_alpha_pm_n3(alpha)).abs() <= 1e-10);
    }

    #[test]
    fn min_samples_is_monotone(k in 0.0f64..20.0, dk in 0.0f64..5.0, p in 0.0f64..0.99, dp in 0.0f64..0.009) {
        let m = min_samples(k, p).unwrap();
        prop_assert!(min_samples(k + dk, p).unwrap() >= m);
        prop_assert!(min_samples(k, p + dp).unwrap() >= m);
        let bound = 1.0 - k.powi(3) / (m as f64).powi(2);
        prop_assert!(bound >= p);
    }
}

/// Composite 5-point Gauss–Legendre rule.
fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [0.0, -0.5384693101056831, 0.5384693101056831, -0.906179845938664, 0.906179845938664];
    const WEIGHTS: [f64; 5] = [
        0.5688888888888889,
        0.47862867049936647,
        0.47862867049936647,
        0.23692688505618908,
        0.23692688505618908,
    ];
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            s += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn topology_grids_split_weight_equally(family in prop::sample::select(vec![0usize, 3, 4]), n in 2usize..=10, m in 2usize..=30) {
        let model = model(family, n);
        let th = Threshold::Zero;
        let plan = build_plan(&model, &th, Strategy::Topology, m).unwrap();
        let profile = DensityProfile::new(&model, &th);
        let cbrt = |x: f64| profile.c(x).unwrap().cbrt();
        let share = plan.k / m as f64;
        for w in plan.grid.windows(2) {
            let part = gauss_legendre(cbrt, w[0], w[1], 200);
            prop_assert!((part - share).abs() <= 1e-8 * share, "cell [{}, {}]: {} vs {}", w[0], w[1], part, share);
        }
    }

    #[test]
    fn symmetric_densities_give_symmetric_grids(family in prop::sample::select(vec![0usize, 3]), n in 2usize..=10, m in 2usize..=30) {
        let model = model(family, n);
        let plan = build_plan(&model, &Threshold::Zero, Strategy::Topology, m).unwrap();
        let (a, b) = model.domain();
        for (x, y) in plan.grid.iter().zip(plan.grid.iter().rev()) {
            prop_assert!((x - a - (b - y)).abs() <= 1e-8);
        }
    }

    #[test]
    fn nodal_components_and_admissibility(family in 0usize..5, n in 2usize..=8, seed in any::<u64>()) {
        let model = model(family, n);
        let th = Threshold::Zero;
        let path = model.sample_path_with(&mut stream_rng(seed, 0));
        let (a, b) = model.domain();
        let r = oracle_beta0(&path, &th, 4096);
        let fine = oracle_beta0(&path, &th, 8192);
        prop_assert_eq!(
            (r.beta0_plus, r.beta0_minus, r.zeros.len()),
            (fine.beta0_plus, fine.beta0_minus, fine.zeros.len())
        );
        let interior = r.zeros.iter().all(|&z| z > a && z < b);
        if !r.degenerate && interior {
            prop_assert_eq!(r.beta0_plus + r.beta0_minus, r.zeros.len() + 1);
        }
        let (lo, hi) = (a + 0.1 * (b - a), a + 0.6 * (b - a));
        for depth in 1..=8 {
            if admissible_to_depth(&path, &th, lo, hi, depth) {
                prop_assert!(admissible_to_depth(&path, &th, lo, hi, depth - 1));
            }
        }
    }

    #[test]
    fn validation_criterion_implies_match(family in 0usize..5, n in 2usize..=8, m in 4usize..=40, seed in any::<u64>()) {
        let model = model(family, n);
        let th = Threshold::Zero;
        let plan = build_plan(&model, &th, Strategy::Uniform, m).unwrap();
        for trial in 0..8 {
            let path = model.sample_path_with(&mut stream_rng(seed, trial));
            let oracle = oracle_beta0(&path, &th, 4096);
            let crit = validation_criterion(&path, &th, &plan.grid, &oracle, 12);
            if crit.holds() {
                let rep = verify_match(&path, &th, &plan.grid, 4096);
                prop_assert!(rep.match_plus && rep.match_minus, "criterion holds but counts differ: {:?}", rep);
            }
        }
    }
}

#[test]
fn bound_is_the_same_through_c_and_c0() {
    for m in [FieldModel::chebyshev(6), FieldModel::binomial_polynomial(5), FieldModel::cosine(4)] {
        let th = Threshold::Zero;
        let profile = DensityProfile::new(&m, &th);
        let (a, b) = m.domain();
        let k = cube_root_weight(|x| profile.c(x), a, b).unwrap().total();
        let k0 = cube_root_weight(|x| Ok(0.75 * profile.c(x)?), a, b).unwrap().total();
        let samples = 17.0f64;
        let via_c0 = 4.0 / 3.0 * k0.powi(3) / (samples * samples);
        let via_c = k.powi(3) / (samples * samples);
        assert!((via_c0 - via_c).abs() <= 1e-14 * via_c.max(1.0), "{via_c0} vs {via_c}");
    }
}
