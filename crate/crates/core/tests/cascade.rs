use h4spec::classifier::*;
use h4spec::potential_lab::*;
use h4spec::quadrature::{build_grid_with_breaks, grid_for_potential, Potential, Scheme};

fn designs() -> Vec<(DesignedSolution, Kind)> {
    vec![
        (gaussian_bump_design(), Kind::First),
        (moment_designed_potential(Kind::First, 1.0).unwrap(), Kind::First),
        (moment_designed_potential(Kind::Second, 0.0).unwrap(), Kind::Second),
        (moment_designed_potential(Kind::Third, 0.0).unwrap(), Kind::Third),
        (angular_design(DEFAULT_SUPPORT).unwrap(), Kind::First),
    ]
}

fn dims(r: &ResonanceReport) -> (usize, usize, usize) {
    (r.dim_s1, r.dim_s2, r.dim_s3)
}

#[test]
fn designs_classify_and_are_stable_under_refinement() {
    for (d, kind) in designs() {
        let pot = d.potential();
        let g = grid_for_potential(&pot, 64).unwrap();
        let (rep, _) = classify(&pot, &g, Tolerances::default()).unwrap();
        assert_eq!(rep.kind, kind, "{}", d.name);
        assert!(rep.dim_s1 >= rep.dim_s2 && rep.dim_s2 >= rep.dim_s3);
        assert!(rep.dim_s1 - rep.dim_s2 <= 4 && rep.dim_s2 - rep.dim_s3 <= 6);
        let fine = grid_for_potential(&pot, 128).unwrap();
        let (rep2, _) = classify(&pot, &fine, Tolerances::default()).unwrap();
        assert_eq!((rep2.kind, dims(&rep2)), (kind, dims(&rep)), "{} refined", d.name);
        let reach = pot.effective_radius().max(10.0) * 1.5;
        let wide = build_grid_with_breaks(reach, 128, &pot.breakpoints, Scheme::GaussLegendreComposite).unwrap();
        let (rep3, _) = classify(&pot, &wide, Tolerances::default()).unwrap();
        assert_eq!((rep3.kind, dims(&rep3)), (kind, dims(&rep)), "{} widened", d.name);
    }
}

#[test]
fn expected_dimensions() {
    let expect = [(1, 0, 0), (1, 0, 0), (1, 1, 0), (5, 5, 5), (3, 0, 0)];
    for ((d, _), want) in designs().into_iter().zip(expect) {
        let pot = d.potential();
        let (rep, _) = classify(&pot, &grid_for_potential(&pot, 64).unwrap(), Tolerances::default()).unwrap();
        assert_eq!(dims(&rep), want, "{}", d.name);
    }
}

#[test]
fn designed_solutions_close_the_loop() {
    for (d, _) in designs() {
        let pot = d.potential();
        let (_, st) = classify(&pot, &grid_for_potential(&pot, 96).unwrap(), Tolerances::default()).unwrap();
        let s = st.sector(d.ell).unwrap();
        let ny = &st.ops.ny;
        let x = ny.coefficients(|r| pot.u(r) * pot.v(r) * d.psi(r));
        let xn = &x / x.norm();
        let b = s.s1();
        let proj = b * (b.transpose() * &xn);
        assert!((&xn - &proj).norm() < 1e-4, "{} angle", d.name);
        let rf = reconstruct_psi(&proj, d.ell, &st).unwrap();
        assert!(rf.consistency < 1e-8, "{} consistency {}", d.name, rf.consistency);
        assert!(rf.v_overlap.abs() < 1e-8, "{} <v,phi>", d.name);
        // ψ up to normalization on [0, R_max/2]
        let half = ny.r[ny.dim() - 1].max(10.0) / 2.0;
        let idx: Vec<usize> = (0..rf.r.len()).filter(|&i| rf.r[i] <= half).collect();
        let num: f64 = idx.iter().map(|&i| rf.psi[i] * d.psi(rf.r[i])).sum();
        let den: f64 = idx.iter().map(|&i| rf.psi[i] * rf.psi[i]).sum();
        let c = num / den;
        let mx = idx.iter().map(|&i| d.psi(rf.r[i]).abs()).fold(0.0, f64::max);
        let err = idx.iter().map(|&i| (c * rf.psi[i] - d.psi(rf.r[i])).abs()).fold(0.0, f64::max) / mx;
        assert!(err < 1e-3, "{} reconstruction {err}", d.name);
    }
}

#[test]
fn asymptotic_coefficients_follow_the_kind() {
    let first = moment_designed_potential(Kind::First, 1.0).unwrap();
    let second = moment_designed_potential(Kind::Second, 0.0).unwrap();
    let third = moment_designed_potential(Kind::Third, 0.0).unwrap();
    let run = |d: &DesignedSolution| {
        let pot = d.potential();
        let (_, st) = classify(&pot, &grid_for_potential(&pot, 96).unwrap(), Tolerances::default()).unwrap();
        let s = st.sector(d.ell).unwrap();
        let phi = s.s1().column(0).into_owned();
        let rf = reconstruct_psi(&phi, d.ell, &st).unwrap();
        // normalize against the design's own ψ outside the support; the profile carries Y₀₀ = 1/√(4π)
        let r0 = rf.r.iter().position(|&r| r > d.support * 1.5).unwrap();
        let scale = d.psi(rf.r[r0]) / rf.psi[r0] * (4.0 * std::f64::consts::PI).sqrt();
        (rf, scale)
    };
    let (rf, s) = run(&first);
    assert!((rf.c0 * s - 1.0).abs() < 1e-4, "c0 {}", rf.c0 * s);
    let (rf, s) = run(&second);
    assert!((rf.c0 * s).abs() < 1e-5 && (rf.c_linear * s).abs() < 1e-5);
    assert!((rf.c_quadratic * s).abs() > 1e-3);
    // ψ·r bounded and bounded away from zero on the outer shells
    let tail: Vec<f64> = rf.r.iter().zip(&rf.psi).filter(|(r, _)| **r > 2.0 * second.support).map(|(r, p)| (r * p).abs()).collect();
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(lo > 0.1 * hi && hi.is_finite());
    let (rf, s) = run(&third);
    for c in [rf.c0, rf.c_const, rf.c_linear, rf.c_quadratic] {
        assert!((c * s).abs() < 1e-5, "{} {} {} {} s={s}", rf.c0, rf.c_const, rf.c_linear, rf.c_quadratic);
    }
    // shell norms decrease and sum
    let sh = &rf.shell_norms;
    assert!(sh.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn t1_and_t2_quadratic_forms() {
    for (d, _) in designs() {
        let pot = d.potential();
        let (_, st) = classify(&pot, &grid_for_potential(&pot, 64).unwrap(), Tolerances::default()).unwrap();
        if let Some(v) = t1_decomposition_defect(&st) {
            assert!(v < 1e-8, "{} T1 {v}", d.name);
        }
        if let Some(v) = t2_moment_defect(&st, 16.0 / 3.0) {
            assert!(v < 1e-8, "{} T2 {v}", d.name);
        }
    }
}

#[test]
fn zero_energy_projection_fixes_the_eigenfunction() {
    let d = moment_designed_potential(Kind::Third, 0.0).unwrap();
    let pot = d.potential();
    let (_, st) = classify(&pot, &grid_for_potential(&pot, 96).unwrap(), Tolerances::default()).unwrap();
    let p = zero_energy_projection(&st, 8).unwrap();
    assert!(p.idempotency < 1e-6, "{}", p.idempotency);
    assert!(p.hermiticity < 1e-8);
    assert!(p.fixes_psi < 1e-5, "{}", p.fixes_psi);
    // A against the Gram matrix of the ψ's
    let scale = p.gram.norm();
    assert!((&p.a - &p.gram).norm() < 1e-6 * scale || (&p.a + &p.gram).norm() < 1e-6 * scale);
    let regular = Potential::gaussian_well(0.1, 1.0);
    let (_, st) = classify(&regular, &grid_for_potential(&regular, 64).unwrap(), Tolerances::default()).unwrap();
    assert!(zero_energy_projection(&st, 8).is_err());
}

#[test]
fn g4_form_and_conjugate_limit() {
    let d = moment_designed_potential(Kind::Third, 0.0).unwrap();
    let pot = d.potential();
    let (_, st) = classify(&pot, &grid_for_potential(&pot, 96).unwrap(), Tolerances::default()).unwrap();
    let g4 = verify_g4_negativity(&st, 8).unwrap();
    assert!(g4.magnitude_defect < 1e-4);
    assert!(g4.conjugate_defect < 1e-4);
    for row in &g4.rows {
        assert!(row.g0_norm2 > 0.0);
    }
}

#[test]
fn coupling_threshold_brackets_the_transition() {
    let shape = Potential::gaussian_well(1.0, 1.0);
    let a = coupling_threshold(&shape, (10.0, 90.0), 64).unwrap();
    let b = coupling_threshold(&shape, (10.0, 90.0), 128).unwrap();
    assert!(a.bracket.1 - a.bracket.0 < 1e-6);
    assert!((a.c_star - b.c_star).abs() < 1e-3 * a.c_star);
    assert_eq!(a.below, Kind::Regular);
    assert_ne!(a.at, Kind::Regular);
    assert!(coupling_threshold(&shape, (0.0, 10.0), 64).is_err());
    assert!(coupling_threshold(&shape, (1.0, 2.0), 64).is_err());
}

#[test]
fn report_text_round_trip() {
    let d = gaussian_bump_design();
    let pot = d.potential();
    let (rep, _) = classify(&pot, &grid_for_potential(&pot, 64).unwrap(), Tolerances::default()).unwrap();
    let txt = rep.to_text();
    assert!(txt.contains("classification: first kind"));
    assert!(txt.contains("dim_S1: 1"));
    assert!(rep.moments_csv().lines().count() >= 2);
}
