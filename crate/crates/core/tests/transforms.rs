use qmc_core::transforms::{
    gauss_hermite, gauss_legendre, integrate_line, map_points, normcdf, norminv, norminv_clamped, normpdf,
    preintegrate, Integrand, MarginalDensity, PreintegrationSpec,
};
use qmc_core::points::lattice_points;
use qmc_core::GeneratingVector;

#[test]
fn norminv_examples_and_symmetry() {
    assert_eq!(norminv(0.5).unwrap(), 0.0);
    assert!((norminv(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
    assert!((norminv(0.8413447460685429).unwrap() - 1.0).abs() < 1e-9);
    for p in [1e-6, 0.01, 0.1, 0.25, 0.4] {
        assert!((norminv(p).unwrap() + norminv(1.0 - p).unwrap()).abs() < 1e-9 * norminv(p).unwrap().abs());
    }
    assert!(norminv(-0.1).is_err() && norminv(f64::NAN).is_err());
    assert!(norminv_clamped(0.0).is_finite() && norminv_clamped(1.0).is_finite());
}

#[test]
fn norminv_round_trip() {
    let mut x = -5.0;
    while x <= 5.0 {
        let back = norminv(normcdf(x)).unwrap();
        assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0), "x = {x}: {back}");
        x += 0.05;
    }
}

#[test]
fn gauss_rules_are_exact_on_polynomials() {
    let gh = gauss_hermite(10);
    let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
    for (k, m) in moments.iter().enumerate() {
        assert!((gh.apply(|t| t.powi(k as i32)) - m).abs() < 1e-12 * m.max(1.0), "k={k}");
    }
    let gl = gauss_legendre(6);
    for k in 0..12 {
        let want = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
        assert!((gl.apply(|t| t.powi(k)) - want).abs() < 1e-14, "k={k}");
    }
}

#[test]
fn map_points_is_elementwise() {
    let gv = GeneratingVector::new(8, vec![1, 3]).unwrap();
    let ps = lattice_points(&gv, None).unwrap();
    let y = map_points(&ps, &MarginalDensity::normal());
    assert_eq!(y.len(), 16);
    assert_eq!(y[2 * 3], norminv(0.5).unwrap());
    // the origin row maps to a finite clamped value
    assert!(y[14].is_finite() && y[14] < -8.0);
    let u = map_points(&ps, &MarginalDensity::Uniform);
    for (a, b) in u.iter().zip(ps.coords()) {
        assert!((a - b).abs() <= 2.0 * f64::EPSILON);
    }
}

#[test]
fn density_masses_and_cdfs() {
    let dens = [
        MarginalDensity::normal(),
        MarginalDensity::logistic(0.7).unwrap(),
        MarginalDensity::student(3.0).unwrap(),
        MarginalDensity::student(10.0).unwrap(),
    ];
    for d in dens {
        assert!((d.total_mass() - 1.0).abs() < 1e-10, "{d:?}");
        for u in [1e-6, 0.05, 0.3, 0.5, 0.8, 0.999] {
            let x = d.inv_cdf(u);
            assert!((d.cdf(x) - u).abs() < 1e-10, "{d:?} u={u}");
        }
        // cdf against a composite Simpson integral of the pdf
        let (a, b, m) = (-60.0, 0.8, 200_000);
        let h = (b - a) / m as f64;
        let mut acc = d.pdf(a) + d.pdf(b);
        for i in 1..m {
            acc += d.pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let tail_left = d.cdf(a);
        assert!((acc * h / 3.0 + tail_left - d.cdf(b)).abs() < 1e-8, "{d:?}");
    }
    assert!(MarginalDensity::parse("student").is_err());
    assert_eq!(MarginalDensity::parse("logistic").unwrap(), MarginalDensity::logistic(1.0).unwrap());
}

#[test]
fn preintegration_of_independent_factor() {
    // f(y) = cos(y0) * y1^2 integrated over y0 gives exp(-1/2) * y1^2
    let f = Integrand::Smooth(Box::new(|y: &[f64]| y[0].cos() * y[1] * y[1]));
    let p = preintegrate(f, &PreintegrationSpec::along(0)).unwrap();
    for y1 in [-1.5, 0.0, 0.4, 2.0] {
        assert!((p.eval(&[y1]) - (-0.5f64).exp() * y1 * y1).abs() < 1e-13);
    }
}

#[test]
fn preintegration_of_kinks() {
    let half = integrate_line(|t| t, |t| t);
    assert!((half - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    for (a, b) in [(0.0, 1.0), (0.3, 2.0), (-1.2, 0.5), (4.0, 1.0), (-6.0, 1.0)] {
        let got = integrate_line(|t| a + b * t, |t| a + b * t);
        let want = a * normcdf(a / b) + b * normpdf(a / b);
        assert!((got - want).abs() < 1e-12 * want.max(1e-300) + 1e-16, "a={a} b={b}: {got} vs {want}");
    }
    // decreasing mu in the integrated coordinate, along the second axis
    let f = Integrand::Kinked { mu: Box::new(|y: &[f64]| y[0] - y[1]), value: Box::new(|y: &[f64]| y[0] - y[1]) };
    let p = preintegrate(f, &PreintegrationSpec::along(1)).unwrap();
    let a = 0.7;
    assert!((p.eval(&[a]) - (a * normcdf(a) + normpdf(a))).abs() < 1e-12);
}

#[test]
fn preintegration_never_crossing() {
    let zero = integrate_line(|_| -1.0, |_| 5.0);
    assert_eq!(zero, 0.0);
    let full = integrate_line(|_| 1.0, |t| t * t);
    assert!((full - 1.0).abs() < 1e-12);
}
