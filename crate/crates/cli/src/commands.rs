use h4spec::birman_schwinger::{channel_decompose_minv, channel_envelope, fit_remainder_bound, CHANNELS};
use h4spec::classifier::{classify, CascadeState, ResonanceReport, Tolerances};
use h4spec::kernels::Sign;
use h4spec::linalg::spectral_norm;
use h4spec::potential_lab::coupling_threshold;
use h4spec::propagator::{default_targets, stone_evolve, CutoffSpec, DecayCurve, EvolutionRequest, InitialData, Medium};
use h4spec::quadrature::{build_grid_with_breaks, grid_for_potential, Potential, QuadratureGrid, Scheme};
use std::fmt::Write as _;
use std::path::Path;

use crate::config::{DataKind, DesignKind, ExperimentConfig, SignChoice};
use crate::potential::{self, builtin_design};
use crate::CliError;

/// What a command produced: files written and whether a rank decision was ambiguous.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub ambiguous: bool,
}

fn write(dir: &Path, name: &str, body: &str, out: &mut Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    out.files.push(name.to_string());
    Ok(())
}

fn tolerances(cfg: &ExperimentConfig) -> Tolerances {
    Tolerances { rank: cfg.tolerances.rank, inv: cfg.tolerances.inversion }
}

fn sign(cfg: &ExperimentConfig) -> Sign {
    match cfg.envelope.sign {
        SignChoice::Plus => Sign::Plus,
        SignChoice::Minus => Sign::Minus,
    }
}

pub fn grid(cfg: &ExperimentConfig, pot: &Potential) -> Result<QuadratureGrid, CliError> {
    let g = match cfg.grid.r_max {
        Some(r) => build_grid_with_breaks(r, cfg.grid.n, &pot.breakpoints, Scheme::GaussLegendreComposite),
        None => grid_for_potential(pot, cfg.grid.n),
    }
    .map_err(CliError::numerical("quadrature"))?;
    Ok(g.with_sectors(cfg.grid.sectors.clone()))
}

fn run_classification(cfg: &ExperimentConfig, pot: &Potential) -> Result<(ResonanceReport, CascadeState, QuadratureGrid), CliError> {
    if pot.effective_radius() <= 0.0 {
        return Err(CliError::Config("the free potential has no threshold structure to classify".into()));
    }
    let g = grid(cfg, pot)?;
    let (rep, st) = classify(pot, &g, tolerances(cfg)).map_err(CliError::numerical("classifier"))?;
    Ok((rep, st, g))
}

fn header(pot: &Potential, g: &QuadratureGrid) -> String {
    format!("potential: {}\ncoupling: {:.16e}\ngrid_nodes: {}\nr_max: {:.16e}\n", pot.name, pot.scale, g.len(), g.r_max)
}

fn threshold_outputs(cfg: &ExperimentConfig, st: &CascadeState, out: &mut Outcome, report: &mut String) -> Result<(), CliError> {
    let dir = &cfg.output.dir;
    let lams = cfg.envelope_lambdas();
    let chains = st.chains();
    let s = sign(cfg);
    let mut ch = String::from("lambda,ell,channel,norm\n");
    for &lam in &lams {
        let c = channel_decompose_minv(&st.ops, lam, s, &chains).map_err(CliError::numerical("birman_schwinger"))?;
        for name in CHANNELS {
            for (ell, blk) in c.parts.get(name).into_iter().flatten() {
                writeln!(ch, "{lam:.16e},{ell},{name},{:.16e}", spectral_norm(blk)).unwrap();
            }
        }
    }
    write(dir, "channels.csv", &ch, out)?;
    let rows = channel_envelope(&st.ops, s, &chains, &lams).map_err(CliError::numerical("birman_schwinger"))?;
    let mut env = String::from("lambda,channel,norm,dnorm\n");
    for r in &rows {
        writeln!(env, "{:.16e},{},{:.16e},{:.16e}", r.lambda, r.channel, r.norm, r.dnorm).unwrap();
    }
    write(dir, "envelope.csv", &env, out)?;
    for name in CHANNELS {
        if let Some(b) = fit_remainder_bound(&rows, name, cfg.envelope.lambda_min, cfg.envelope.lambda_max) {
            writeln!(report, "envelope_{name}: theta={:.16e} constant={:.16e} residual={:.16e}", b.theta, b.envelope, b.residual).unwrap();
        }
    }
    Ok(())
}

pub fn classify_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    classify_potential(cfg, &potential::build(&cfg.potential)?)
}

fn classify_potential(cfg: &ExperimentConfig, pot: &Potential) -> Result<Outcome, CliError> {
    let (rep, st, g) = run_classification(cfg, pot)?;
    let mut out = Outcome { ambiguous: rep.has_ambiguous_rank(), ..Default::default() };
    let mut report = header(pot, &g) + &rep.to_text();
    threshold_outputs(cfg, &st, &mut out, &mut report)?;
    write(&cfg.output.dir, "moments.csv", &rep.moments_csv(), &mut out)?;
    write(&cfg.output.dir, "report.txt", &report, &mut out)?;
    Ok(out)
}

fn curve_rows(c: &DecayCurve, body: &mut String, footer: &mut String) {
    for i in 0..c.times.len() {
        let inw = c.times[i] >= c.window.0 * (1.0 - 1e-12) && c.times[i] <= c.window.1 * (1.0 + 1e-12);
        writeln!(body, "{:.16e},{:.16e},{:.16e},{},{}", c.times[i], c.values[i], c.weighted[i], c.channel, inw as u8).unwrap();
    }
    writeln!(
        footer,
        "# channel={} sigma={:.16e} slope={:.16e} stderr={:.16e} residual={:.16e} clean={}",
        c.channel, c.sigma, c.slope, c.stderr, c.residual, c.clean
    )
    .unwrap();
}

pub fn evolve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let pot = &potential::build(&cfg.potential)?;
    let ev_cfg = &cfg.evolve;
    let mut out = Outcome::default();
    let mut report = String::new();
    let medium = if pot.effective_radius() <= 0.0 {
        writeln!(report, "potential: {}\nclassification: free", pot.name).unwrap();
        Medium::free()
    } else {
        let (rep, st, g) = run_classification(cfg, pot)?;
        out.ambiguous = rep.has_ambiguous_rank();
        report += &header(pot, &g);
        report += &rep.to_text();
        if !cfg.grid.sectors.contains(&ev_cfg.ell) {
            return Err(CliError::Config(format!("evolve.ell = {} is not among grid.sectors", ev_cfg.ell)));
        }
        Medium::from_state(&st)
    };
    let f = match ev_cfg.data {
        DataKind::Bump => {
            if ev_cfg.ell != 0 {
                return Err(CliError::Config("evolve.data = \"bump\" is radial; use \"sector_bump\" for ell > 0".into()));
            }
            InitialData::bump(ev_cfg.width)
        }
        DataKind::SectorBump => InitialData::sector_bump(ev_cfg.ell, ev_cfg.width, ev_cfg.sigma),
    };
    let mut req = EvolutionRequest::new(f, cfg.times());
    req.targets = default_targets(ev_cfg.target_radius, ev_cfg.target_count);
    req.cutoff = CutoffSpec { lambda0: ev_cfg.cutoff };
    req.subtract_channels = ev_cfg.subtract.clone();
    req.sigma = ev_cfg.sigma;
    req.convergence_tol = cfg.tolerances.quadrature;
    let ev = stone_evolve(&medium, &req).map_err(CliError::numerical("propagator"))?;
    let mut curves = vec![DecayCurve::from_evolution(&ev, &ev.u, ev_cfg.sigma, "full")];
    if !ev_cfg.subtract.is_empty() {
        let sub = ev.subtracted();
        curves.push(DecayCurve::from_evolution(&ev, &sub, ev_cfg.sigma, "subtracted"));
        curves.push(DecayCurve::from_evolution(&ev, &ev.channel, 0.0, &ev_cfg.subtract.join("+")));
    }
    if let Some(w) = cfg.time.fit_window {
        curves.iter_mut().for_each(|c| c.refit(w));
    }
    let mut body = String::from("t,sup_norm,weighted_sup_norm,channel,slope_window_flag\n");
    let mut footer = String::new();
    for c in &curves {
        curve_rows(c, &mut body, &mut footer);
        writeln!(report, "slope_{}: {:.16e} (stderr {:.16e}, residual {:.16e}, clean {})", c.channel, c.slope, c.stderr, c.residual, c.clean).unwrap();
    }
    writeln!(report, "lambda_nodes: {}\nmax_growth: {:.16e}", ev.lambda_nodes, ev.max_growth).unwrap();
    if let Some(r) = ev.refinement_change {
        writeln!(report, "refinement_change: {r:.16e}").unwrap();
    }
    write(&cfg.output.dir, "decay.csv", &(body + &footer), &mut out)?;
    write(&cfg.output.dir, "report.txt", &report, &mut out)?;
    Ok(out)
}

pub fn design_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = &cfg.design;
    let name = match d.kind {
        DesignKind::Bump => "gaussian_bump",
        DesignKind::First => "designed_first",
        DesignKind::Second => "designed_second",
        DesignKind::Third => "designed_third",
        DesignKind::Angular => "designed_angular",
    };
    let design = builtin_design(name, d.c0, d.support)?.expect("built-in design name");
    let pot = design.potential();
    let mut out = classify_potential(cfg, &pot)?;
    let reach = if d.kind == DesignKind::Bump { 10.0 } else { 3.0 * d.support };
    let mut csv = Vec::new();
    design.write_csv(&mut csv, reach, d.samples).map_err(|e| CliError::Io(e.to_string()))?;
    write(&cfg.output.dir, "design.csv", &String::from_utf8(csv).unwrap(), &mut out)?;
    if d.kind != DesignKind::Bump {
        write(&cfg.output.dir, "potential.toml", &design.descriptor(), &mut out)?;
    }
    Ok(out)
}

pub fn sweep_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let shape = potential::build(&cfg.potential)?;
    let s = &cfg.sweep;
    let mut out = Outcome::default();
    let mut csv = String::from("coupling,kind,dim_s1,dim_s2,dim_s3,ambiguous\n");
    for k in 0..s.steps {
        let c = s.c_min * (s.c_max / s.c_min).powf(k as f64 / (s.steps - 1) as f64);
        let pot = shape.scaled(c);
        let (rep, _, _) = run_classification(cfg, &pot)?;
        out.ambiguous |= rep.has_ambiguous_rank();
        writeln!(csv, "{c:.16e},{},{},{},{},{}", rep.kind, rep.dim_s1, rep.dim_s2, rep.dim_s3, rep.has_ambiguous_rank() as u8).unwrap();
    }
    write(&cfg.output.dir, "sweep.csv", &csv, &mut out)?;
    let mut report = format!("potential: {}\nsweep: {:.16e}..{:.16e} in {} steps\n", shape.name, s.c_min, s.c_max, s.steps);
    if s.threshold {
        let t = coupling_threshold(&shape, (s.c_min, s.c_max), cfg.grid.n).map_err(CliError::numerical("potential_lab"))?;
        writeln!(
            report,
            "c_star: {:.16e}\nbracket: {:.16e} {:.16e}\nbelow: {}\nat: {}\nabove: {}",
            t.c_star, t.bracket.0, t.bracket.1, t.below, t.at, t.above
        )
        .unwrap();
    }
    write(&cfg.output.dir, "report.txt", &report, &mut out)?;
    Ok(out)
}
