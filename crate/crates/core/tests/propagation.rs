use h4spec::classifier::Kind;
use h4spec::kernels::Sign;
use h4spec::potential_lab::moment_designed_potential;
use h4spec::propagator::*;
use h4spec::quadrature::{Potential, QuadratureGrid, PANEL_ORDER};
use h4spec::special::{gauss_legendre, sph_jn_all};
use h4spec::Complex64 as C64;
use std::f64::consts::PI;

fn rel_sup(a: &[C64], b: &[C64]) -> f64 {
    let m = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / m
}

fn small_well() -> Potential {
    Potential::gaussian_well(0.1, 1.0)
}

#[test]
fn tiny_potential_reduces_to_free_resolvent() {
    let f = InitialData::bump(1.0);
    let targets = default_targets(8.0, 16);
    let pot = Potential::gaussian_well(1e-15, 1.0);
    let med = Medium::from_potential(&pot, 32).unwrap();
    assert!(med.ops.is_some());
    for lam in [0.3, 1.5] {
        let a = resolvent_apply(&med, lam, Sign::Plus, &f, &targets).unwrap();
        let b = resolvent_apply(&Medium::free(), lam, Sign::Plus, &f, &targets).unwrap();
        assert!(rel_sup(&a, &b) < 1e-12);
    }
}

#[test]
fn plus_minus_jump_is_imaginary() {
    let f = InitialData::bump(1.0);
    let targets = default_targets(8.0, 16);
    let med = Medium::from_potential(&Potential::gaussian_well(1.0, 1.0), 32).unwrap();
    for lam in [0.2, 1.0] {
        let p = resolvent_apply(&med, lam, Sign::Plus, &f, &targets).unwrap();
        let m = resolvent_apply(&med, lam, Sign::Minus, &f, &targets).unwrap();
        let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in p.iter().zip(&m) {
            assert!((a - b).re.abs() < 1e-12 * scale);
        }
    }
}

#[test]
fn resolvent_identity_finite_difference() {
    // (Δ² + V − λ⁴)u = f with Δ²u = (ru)''''/r in the radial sector
    let f = InitialData::bump(1.0);
    let pot = Potential::gaussian_well(1.0, 1.0);
    let med = Medium::from_potential(&pot, 48).unwrap();
    let lam = 1.0;
    let h = 0.05;
    let stencil = [-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0];
    for r0 in [1.0, 2.0, 3.0] {
        let pts: Vec<f64> = (-3..=3).map(|k| r0 + k as f64 * h).collect();
        let u = resolvent_apply(&med, lam, Sign::Plus, &f, &pts).unwrap();
        let d4: C64 = stencil.iter().zip(&u).zip(&pts).map(|((c, u), r)| u * (c * r)).sum::<C64>() / (6.0 * h.powi(4));
        let lhs = d4 / r0 + u[3] * (pot.value(r0) - lam.powi(4));
        let rel = (lhs - f.value(r0)).norm() / f.value(r0).abs();
        assert!(rel < 1e-3, "r={r0} residual {rel:.3e}");
    }
}

#[test]
fn short_time_reproduces_data() {
    let f = InitialData::bump(4.0);
    let targets = default_targets(20.0, 40);
    let med = Medium::from_potential(&small_well(), 32).unwrap();
    let mut req = EvolutionRequest::new(f.clone(), vec![0.01]);
    req.targets = targets.clone();
    let ev = stone_evolve(&med, &req).unwrap();
    let fv: Vec<C64> = targets.iter().map(|&r| C64::new(f.value(r), 0.0)).collect();
    assert!(rel_sup(&ev.u[0], &fv) < 5e-2);
}

#[test]
fn free_evolution_matches_hankel_quadrature() {
    let f = InitialData::bump(1.0);
    let targets = default_targets(6.0, 12);
    let times = [0.05, 0.3];
    let ev = stone_evolve(&Medium::free(), &{
        let mut r = EvolutionRequest::new(f.clone(), times.to_vec());
        r.targets = targets.clone();
        r
    })
    .unwrap();
    // u = (2/π)∫ λ² j₀(λr) f̃(λ) e^{−itλ⁴} dλ by plain Gauss panels
    let (x, w) = gauss_legendre(32);
    for (k, &t) in times.iter().enumerate() {
        let mut exact = vec![C64::new(0.0, 0.0); targets.len()];
        let n = 1200;
        let lmax = 12.0;
        for p in 0..n {
            let (a, b) = (lmax * p as f64 / n as f64, lmax * (p + 1) as f64 / n as f64);
            for (xi, wi) in x.iter().zip(&w) {
                let l = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let base = C64::from_polar(0.5 * (b - a) * wi * 2.0 / PI * l * l * f.hankel(l), -t * l.powi(4));
                for (j, &r) in targets.iter().enumerate() {
                    exact[j] += base * sph_jn_all(0, l * r)[0];
                }
            }
        }
        assert!(rel_sup(&ev.u[k], &exact) < 1e-4, "t={t}");
    }
}

#[test]
fn free_mass_is_conserved() {
    let f = InitialData::bump(4.0);
    let g = QuadratureGrid::from_edges(&[0.0, 160.0], &[160], PANEL_ORDER);
    let mut req = EvolutionRequest::new(f.clone(), vec![1.0, 2.0]);
    req.targets = g.r.clone();
    let ev = stone_evolve(&Medium::free(), &req).unwrap();
    let m0: f64 = (0..g.len()).map(|i| g.omega[i] * g.r[i] * g.r[i] * f.value(g.r[i]).powi(2)).sum();
    for u in &ev.u {
        let m: f64 = (0..g.len()).map(|i| g.omega[i] * g.r[i] * g.r[i] * u[i].norm_sqr()).sum();
        assert!((m - m0).abs() < 1e-6 * m0, "{m} {m0}");
    }
}

#[test]
fn evolution_is_linear() {
    let f = InitialData::bump(1.0);
    let g = InitialData::new("shell", 0, |r| (-(r - 2.0) * (r - 2.0)).exp(), 8.0, 1.0);
    let fg = {
        let (f, g) = (f.clone(), g.clone());
        InitialData::new("combo", 0, move |r| 2.0 * f.value(r) - 0.5 * g.value(r), 8.0, 1.0)
    };
    let med = Medium::from_potential(&small_well(), 32).unwrap();
    let times = vec![1.0, 10.0];
    let plan = LambdaPlan::for_data(&InitialData::bump(1.0), 20.0);
    let run = |d: &InitialData| {
        let mut r = EvolutionRequest::new(d.clone(), times.clone());
        r.plan = Some(plan.clone());
        stone_evolve(&med, &r).unwrap()
    };
    let (a, b, c) = (run(&f), run(&g), run(&fg));
    for k in 0..times.len() {
        let comb: Vec<C64> = a.u[k].iter().zip(&b.u[k]).map(|(x, y)| x * 2.0 - y * 0.5).collect();
        assert!(rel_sup(&c.u[k], &comb) < 1e-12);
    }
}

#[test]
fn panel_doubling_is_stable() {
    let f = InitialData::bump(1.0);
    let med = Medium::from_potential(&small_well(), 32).unwrap();
    let mut req = EvolutionRequest::new(f, vec![5.0, 50.0]);
    req.convergence_tol = Some(1e-3);
    let ev = stone_evolve(&med, &req).unwrap();
    assert!(ev.refinement_change.unwrap() < 1e-3);
}

#[test]
fn free_decay_rate() {
    let times = log_times(10.0, 1000.0, 16);
    let ev = stone_evolve(&Medium::free(), &EvolutionRequest::new(InitialData::bump(0.5), times)).unwrap();
    let c = DecayCurve::from_evolution(&ev, &ev.u, 0.0, "full");
    assert!(c.clean);
    assert!((c.slope + 0.75).abs() < 0.08, "{}", c.slope);
}

#[test]
fn weighted_curve_with_zero_sigma_is_plain() {
    let times = log_times(1.0, 10.0, 4);
    let ev = stone_evolve(&Medium::free(), &EvolutionRequest::new(InitialData::bump(1.0), times)).unwrap();
    let c = DecayCurve::from_evolution(&ev, &ev.u, 0.0, "full");
    assert_eq!(c.values, c.weighted);
}

#[test]
fn third_kind_channel_has_rank_of_s3() {
    let d = moment_designed_potential(Kind::Third, 0.0).unwrap();
    let med = Medium::from_potential(&d.potential(), 32).unwrap();
    let chain = med.chains.iter().find(|c| c.ell == 2).unwrap().clone();
    let plan = LambdaPlan { lambda_min: 1e-3, geometric_end: 0.5, ratio: 1.5, width: 0.25, lambda_max: 4.0, filon_order: 8 };
    let b = finite_rank_channel_matrix(&med, 2, 20.0, &["S3".into()], &plan).unwrap();
    let sv = b.singular_values();
    let top = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-8 * top).count();
    assert_eq!(rank, chain.s3.ncols());
    // requesting a channel that the classification does not have
    let f = InitialData::sector_bump(0, 0.5, 0.0);
    assert!(finite_rank_channel(&med, &f, &[10.0], &["S3".into()], &[1.0]).is_err());
}

#[test]
fn channel_subtraction_is_exact() {
    let d = moment_designed_potential(Kind::Third, 0.0).unwrap();
    let med = Medium::from_potential(&d.potential(), 32).unwrap();
    let mut req = EvolutionRequest::new(InitialData::sector_bump(2, 0.5, 2.5), vec![10.0, 40.0]);
    req.subtract_channels = vec!["S3".into()];
    let ev = stone_evolve(&med, &req).unwrap();
    for k in 0..2 {
        let back: Vec<C64> = ev.subtracted()[k].iter().zip(&ev.channel[k]).map(|(a, b)| a + b).collect();
        assert!(rel_sup(&back, &ev.u[k]) < 1e-12);
    }
}

#[test]
fn oracle_free_unitarity_and_projection() {
    let f = InitialData::bump(4.0);
    let targets = default_targets(20.0, 20);
    let o = eigen_oracle(&Potential::zero(), &f, &[1.0, 5.0], &targets, 400.0, 600).unwrap();
    assert!(o.norm_defect.iter().all(|d| *d < 1e-10));
    assert_eq!(o.excluded_modes, 0);
    for (p, r) in o.projected.iter().zip(&targets) {
        assert!((p - f.value(*r)).abs() < 1e-10 * f.value(0.0));
    }
    assert!(o.unreliable.iter().all(|u| !u));
}

#[test]
fn oracle_flags_reflection() {
    let f = InitialData::bump(1.0);
    let o = eigen_oracle(&Potential::zero(), &f, &[50.0], &[0.0], 40.0, 200).unwrap();
    assert!(o.unreliable[0]);
}

#[test]
fn stone_agrees_with_oracle_at_short_times() {
    let f = InitialData::bump(4.0);
    let targets = default_targets(20.0, 40);
    let pot = Potential::gaussian_well(1.0, 2.0);
    let mut req = EvolutionRequest::new(f.clone(), vec![1.0]);
    req.targets = targets.clone();
    let ev = stone_evolve(&Medium::from_potential(&pot, 48).unwrap(), &req).unwrap();
    let o = eigen_oracle(&pot, &f, &[1.0], &targets, 800.0, 1200).unwrap();
    assert!(rel_sup(&ev.u[0], &o.u[0]) < 1e-6);
}

#[test]
fn orthogonality_gain_exponents() {
    let d = moment_designed_potential(Kind::Second, 0.0).unwrap();
    let med = Medium::from_potential(&d.potential(), 48).unwrap();
    let chain = med.chains.iter().find(|c| c.ell == 0).unwrap();
    let lams: Vec<f64> = (0..13).map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0)).collect();
    let ys = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
    for sign in [Sign::Plus, Sign::Minus] {
        let rows = orthogonality_gains(med.ops.as_ref().unwrap(), chain, sign, &lams, &ys).unwrap();
        let (q, full, s2) = gain_exponents(&rows);
        assert!(q.abs() < 0.1 && (full + 1.0).abs() < 0.1 && (s2 - 1.0).abs() < 0.1, "{q} {full} {s2}");
    }
}
