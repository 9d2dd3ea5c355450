//! Invariant suites behind `h4spec verify`.

use clap::ValueEnum;
use h4spec::birman_schwinger::{invert_a, verify_posdef_lemma, ThresholdOperators};
use h4spec::classifier::{classify, t1_decomposition_defect, zero_energy_projection, Kind, Tolerances};
use h4spec::kernels::{eval_free_resolvent, eval_kernel, expansion_remainder, reduce_partial_wave, ExpansionCoefficients, KernelFamily, Sign};
use h4spec::linalg::{linear_fit, RMat};
use h4spec::potential_lab::{gaussian_bump_design, moment_designed_potential};
use h4spec::propagator::{log_times, stone_evolve, DecayCurve, EvolutionRequest, InitialData, Medium};
use h4spec::quadrature::{grid_for_potential, Nystrom, Potential};
use h4spec::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Kernels,
    Operators,
    Cascade,
    Decay,
    All,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn below(suite: &'static str, name: &str, value: f64, limit: f64) -> Self {
        Self { suite, name: name.into(), value, limit, pass: value.is_finite() && value < limit }
    }

    fn flag(suite: &'static str, name: &str, ok: bool) -> Self {
        Self { suite, name: name.into(), value: ok as u8 as f64, limit: 1.0, pass: ok }
    }
}

pub fn to_csv(checks: &[Check]) -> String {
    let mut s = String::from("suite,check,value,limit,pass\n");
    for c in checks {
        s += &format!("{},{},{:.16e},{:.16e},{}\n", c.suite, c.name, c.value, c.limit, c.pass);
    }
    s
}

pub fn run(suite: Suite, seed: u64) -> Vec<Check> {
    match suite {
        Suite::Kernels => kernels(seed),
        Suite::Operators => operators(seed),
        Suite::Cascade => cascade(),
        Suite::Decay => decay(),
        Suite::All => [kernels(seed), operators(seed), cascade(), decay()].concat(),
    }
}

fn kernels(seed: u64) -> Vec<Check> {
    const S: &str = "kernels";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let lam = 10f64.powf(rng.random_range(-3.0..1.0));
        let r = 10f64.powf(rng.random_range(-3.0..2.0));
        let p = eval_free_resolvent(Sign::Plus, lam, r).unwrap();
        let m = eval_free_resolvent(Sign::Minus, lam, r).unwrap();
        let want = C64::new(0.0, (lam * r).sin() / (4.0 * PI * lam * lam * r));
        worst = worst.max((p - m - want).norm() / want.norm().max(p.norm()));
    }
    let c = ExpansionCoefficients::new();
    let target = 1.0 / (3.0 * (8.0 * PI).powi(2));
    let prod = [Sign::Plus, Sign::Minus].iter().map(|&s| (c.a(s) * c.a1(s) - target).norm() / target).fold(0.0, f64::max);
    let lams: Vec<f64> = (4..=14).map(|k| 2f64.powi(-k)).collect();
    let unit: Vec<f64> = (1..=40).map(|k| k as f64 / 40.0).collect();
    let mut out = vec![Check::below(S, "sine_identity_rel", worst, 1e-12), Check::below(S, "a_times_a1_rel", prod, 1e-15)];
    for (order, power, want) in [(3usize, 5.0, 4.0), (4, 6.0, 5.0)] {
        let ys: Vec<f64> = lams
            .iter()
            .map(|&l| unit.iter().map(|&r| expansion_remainder(Sign::Plus, l, r, order).unwrap().norm() / r.powf(power)).fold(0.0, f64::max).ln())
            .collect();
        let xs: Vec<f64> = lams.iter().map(|l| l.ln()).collect();
        let slope = linear_fit(&xs, &ys).0;
        out.push(Check::below(S, &format!("remainder_order{order}_exponent_gap"), (slope - want).abs(), 0.05));
    }
    let g0 = reduce_partial_wave(|r| eval_kernel(KernelFamily::G0, r), 0, 1.0, 1.0, 32).unwrap();
    out.push(Check::below(S, "g0_s_wave_example", (g0.re + 2.0 / 3.0).abs(), 1e-13));
    out
}

fn operators(seed: u64) -> Vec<Check> {
    const S: &str = "operators";
    let pot = Potential::gaussian_well(0.1, 1.0);
    let ops = ThresholdOperators::new(Nystrom::new(grid_for_potential(&pot, 48).unwrap(), pot).unwrap());
    let s1 = RMat::zeros(ops.dim(), ops.dim());
    let mut fesh = 0.0f64;
    for k in 1..=4 {
        let lam = 10f64.powi(-k);
        let (f, _) = invert_a(&ops, lam, Sign::Plus, &s1, 1e-6).unwrap();
        fesh = fesh.max(f.residual(&ops, lam, Sign::Plus, &s1).unwrap());
    }
    let sym = ops.sectors.iter().map(|s| (&s.t - s.t.transpose()).amax()).fold(0.0, f64::max);
    let pd = verify_posdef_lemma(100, seed);
    vec![Check::below(S, "feshbach_residual", fesh, 1e-10), Check::below(S, "t_symmetry", sym, 1e-12), Check::flag(S, "posdef_lemma_100_trials", pd.pass)]
}

fn cascade() -> Vec<Check> {
    const S: &str = "cascade";
    let mut out = Vec::new();
    let small = Potential::gaussian_well(0.1, 1.0);
    let (rep, _) = classify(&small, &grid_for_potential(&small, 64).unwrap(), Tolerances::default()).unwrap();
    out.push(Check::flag(S, "small_well_regular", rep.kind == Kind::Regular));
    let designs = [
        (gaussian_bump_design(), Kind::First),
        (moment_designed_potential(Kind::Second, 0.0).unwrap(), Kind::Second),
        (moment_designed_potential(Kind::Third, 0.0).unwrap(), Kind::Third),
    ];
    for (d, kind) in designs {
        let pot = d.potential();
        let (rep, st) = classify(&pot, &grid_for_potential(&pot, 64).unwrap(), Tolerances::default()).unwrap();
        out.push(Check::flag(S, &format!("{}_kind", d.name), rep.kind == kind));
        if let Some(t1) = t1_decomposition_defect(&st) {
            out.push(Check::below(S, &format!("{}_t1_defect", d.name), t1, 1e-8));
        }
        if kind == Kind::Third {
            let p = zero_energy_projection(&st, 8).unwrap();
            out.push(Check::below(S, "p0_fixes_psi", p.fixes_psi, 1e-5));
        }
    }
    out
}

fn decay() -> Vec<Check> {
    const S: &str = "decay";
    let times = log_times(10.0, 1000.0, 16);
    let ev = stone_evolve(&Medium::free(), &EvolutionRequest::new(InitialData::bump(0.5), times)).unwrap();
    let c = DecayCurve::from_evolution(&ev, &ev.u, 0.0, "full");
    vec![Check::below(S, "free_slope_gap", (c.slope + 0.75).abs(), 0.08), Check::below(S, "free_fit_residual", c.residual, 0.05)]
}
