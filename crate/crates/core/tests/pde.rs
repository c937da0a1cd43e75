use qmc_core::cbc::{cbc_lattice, CbcConfig, CbcMode};
use qmc_core::estimate::fit_slope;
use qmc_core::pde::{
    exponential_covariance, kl_exponential_eigenpairs, CirculantField, CoefficientField, CoefficientSpec, LognormalKl,
    PdeModel, PdeProblem, UniformCoefficient,
};
use qmc_core::weights::pod_from_derivative_bounds;

/// Nodal values of the exact solution for a coefficient that is constant
/// on each element and a unit source: `a u' = C - x`.
fn piecewise_exact(a: &[f64]) -> Vec<f64> {
    let ne = a.len();
    let h = 1.0 / ne as f64;
    let sq = |k: usize| (k as f64 * h).powi(2);
    let c = (0..ne).map(|k| (sq(k + 1) - sq(k)) / (2.0 * a[k])).sum::<f64>() / (0..ne).map(|k| h / a[k]).sum::<f64>();
    let mut u = Vec::with_capacity(ne - 1);
    let mut acc = 0.0;
    for k in 0..ne - 1 {
        acc += (c * h - 0.5 * (sq(k + 1) - sq(k))) / a[k];
        u.push(acc);
    }
    u
}

#[test]
fn constant_coefficient_is_nodally_exact() {
    for m in [1usize, 4, 31] {
        let p = PdeProblem::unit_source(m).unwrap();
        let u = p.solve(&vec![1.0; m + 1]).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let x = (i + 1) as f64 * p.h();
            assert!((ui - 0.5 * x * (1.0 - x)).abs() < 1e-14, "m={m} i={i}");
        }
    }
}

#[test]
fn piecewise_constant_coefficient_is_nodally_exact() {
    let a: Vec<f64> = (0..16).map(|k| 1.0 + 0.7 * ((k * 5) % 7) as f64 / 7.0).collect();
    let p = PdeProblem::unit_source(15).unwrap();
    let u = p.solve(&a).unwrap();
    for (x, y) in u.iter().zip(piecewise_exact(&a)) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn zero_source_and_scaling() {
    let p = PdeProblem::new(20, |_| 0.0).unwrap();
    assert!(p.solve(&vec![1.5; 21]).unwrap().iter().all(|&u| u == 0.0));
    let p = PdeProblem::new(20, |x| 1.0 + x).unwrap();
    let a: Vec<f64> = p.midpoints().iter().map(|x| 1.0 + x * x).collect();
    let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    assert!((p.g(&a).unwrap() - 2.0 * p.g(&a2).unwrap()).abs() < 1e-15);
    assert!(p.g(&[1.0; 3]).is_err());
    let mut bad = a.clone();
    bad[4] = 0.0;
    assert!(p.g(&bad).is_err());
}

#[test]
fn functional_converges_at_second_order() {
    // G(u) = 1/12 for a = 1; the trapezoid sum of exact nodal values
    // gives 1/12 - h^2/12
    for m in [3usize, 7, 15, 31] {
        let p = PdeProblem::unit_source(m).unwrap();
        let h = p.h();
        let g = p.g(&vec![1.0; m + 1]).unwrap();
        assert!((g - (1.0 / 12.0 - h * h / 12.0)).abs() < 1e-14, "m={m}");
    }
}

#[test]
fn zero_amplitudes_give_a_deterministic_estimate() {
    let p = PdeProblem::unit_source(15).unwrap();
    let u = UniformCoefficient::new(1.0, vec![0.0; 3], &p.midpoints()).unwrap();
    let model = PdeModel::new(p.clone(), CoefficientField::Uniform(u)).unwrap();
    let w = qmc_core::WeightModel::geometric_product(0.5, 3).unwrap();
    let gv = cbc_lattice(&CbcConfig::new(31, 3, w, CbcMode::Fast)).unwrap().0;
    let est = model.expected_functional(&gv, 4, 1).unwrap();
    assert_eq!(est.se_or_zero(), 0.0);
    assert!((est.value - p.g(&[1.0; 16]).unwrap()).abs() < 1e-15);
}

#[test]
fn uniform_coefficient_stays_positive() {
    let p = PdeProblem::unit_source(63).unwrap();
    let u = UniformCoefficient::standard(100, &p.midpoints()).unwrap();
    assert!(u.a_min() >= 0.55 - 1e-12);
    assert!(UniformCoefficient::new(1.0, vec![1.5, 0.6], &p.midpoints()).is_err());
    let b = u.derivative_bounds();
    assert!(b.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn kl_eigenpairs_match_a_dense_solve() {
    let p = PdeProblem::unit_source(511).unwrap();
    let mids = p.midpoints();
    let dense = LognormalKl::from_dense(1.0, exponential_covariance(1.0, 0.3), 6, &mids).unwrap();
    let pairs = kl_exponential_eigenpairs(1.0, 0.3, 6).unwrap();
    for (k, (mu, _)) in pairs.iter().enumerate() {
        assert!((mu - dense.mu[k]).abs() < 1e-4 * mu, "k={k}: {mu} vs {}", dense.mu[k]);
    }
    assert!(pairs.windows(2).all(|w| w[1].0 < w[0].0));
    // the roots solve their characteristic equation
    for &(_, w) in &pairs {
        let r = (0.09 * w * w - 1.0) * w.sin() - 0.6 * w * w.cos();
        assert!(r.abs() < 1e-10 * w * w);
    }
}

#[test]
fn full_rank_dense_kl_reproduces_the_grid_covariance() {
    let p = PdeProblem::unit_source(31).unwrap();
    let mids = p.midpoints();
    let cov = exponential_covariance(0.5, 0.2);
    let kl = LognormalKl::from_dense(1.0, cov.clone(), 32, &mids).unwrap();
    for i in 0..32 {
        for k in 0..32 {
            let c: f64 = (0..32).map(|j| kl.mode(j, i) * kl.mode(j, k)).sum();
            assert!((c - cov(mids[i] - mids[k])).abs() < 1e-12, "{i},{k}");
        }
    }
}

#[test]
fn kl_and_circulant_fields_agree_in_mean() {
    // the full-rank dense KL and circulant embedding both sample the exact
    // grid covariance, so the expected functionals coincide
    let p = PdeProblem::unit_source(31).unwrap();
    let cov = exponential_covariance(0.5, 0.2);
    let kl = LognormalKl::from_dense(1.0, cov.clone(), 32, &p.midpoints()).unwrap();
    let circ = CirculantField::on_midpoints(1.0, cov, &p).unwrap();
    let a = PdeModel::new(p.clone(), CoefficientField::Kl(kl)).unwrap().monte_carlo(20_000, 11).unwrap();
    let b = PdeModel::new(p, CoefficientField::Circulant(circ)).unwrap().monte_carlo(20_000, 12).unwrap();
    assert!(a.agrees_with(&b, 3.0), "{a:?} vs {b:?}");
}

#[test]
fn spec_round_trip_and_build() {
    let p = PdeProblem::unit_source(15).unwrap();
    for spec in [
        CoefficientSpec::Uniform { a0: 1.0, s: 4, amplitudes: None },
        CoefficientSpec::Kl { a0: 1.0, sigma2: 0.4, ell: 0.5, s: 5 },
        CoefficientSpec::Circulant { a0: 2.0, sigma2: 1.0, ell: 0.3 },
    ] {
        let text = serde_json::to_string(&spec).unwrap();
        let back: CoefficientSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let field = spec.build(&p).unwrap();
        assert_eq!(field.midpoints(), 16);
    }
    let bad = CoefficientSpec::Uniform { a0: 1.0, s: 2, amplitudes: Some(vec![0.1]) };
    assert!(bad.build(&p).is_err());
}

#[test]
fn uniform_qmc_spread_decays() {
    let p = PdeProblem::unit_source(31).unwrap();
    let u = UniformCoefficient::standard(8, &p.midpoints()).unwrap();
    let weights = pod_from_derivative_bounds(&u.derivative_bounds(), 0.55).unwrap();
    let model = PdeModel::new(p, CoefficientField::Uniform(u)).unwrap();
    let mut ns = Vec::new();
    let mut errs = Vec::new();
    for m in 5..=11u32 {
        let n = 1u64 << m;
        let gv = cbc_lattice(&CbcConfig::new(n, 8, weights.clone(), CbcMode::Fast)).unwrap().0;
        let est = model.expected_functional(&gv, 16, 2024 + m as u64).unwrap();
        ns.push(n as f64);
        errs.push(est.se_or_zero());
    }
    let slope = fit_slope(&ns, &errs).unwrap();
    assert!(slope <= -0.8, "slope {slope}: {errs:?}");
}
