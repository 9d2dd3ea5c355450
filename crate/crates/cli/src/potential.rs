//! Potential descriptors: built-in names, closed-form expressions in r, CSV samples, designed sources.

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use h4spec::classifier::Kind;
use h4spec::potential_lab::{angular_design, design_from_source, gaussian_bump_design, moment_designed_potential, DesignedSolution, DEFAULT_SUPPORT};
use h4spec::quadrature::Potential;
use std::path::Path;

use crate::config::{PotentialConfig, PotentialKind};
use crate::CliError;

pub const BUILTINS: [&str; 7] = ["free", "gaussian_well", "gaussian_bump", "designed_first", "designed_second", "designed_third", "designed_angular"];

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Config(format!("potential.{key} is required for this kind")))
}

pub fn builtin_design(name: &str, c0: f64, support: f64) -> Result<Option<DesignedSolution>, CliError> {
    let d = match name {
        "gaussian_bump" => gaussian_bump_design(),
        "designed_first" => moment_designed_potential_with(Kind::First, if c0 == 0.0 { 1.0 } else { c0 }, support)?,
        "designed_second" => moment_designed_potential_with(Kind::Second, 0.0, support)?,
        "designed_third" => moment_designed_potential_with(Kind::Third, 0.0, support)?,
        "designed_angular" => angular_design(support).map_err(CliError::numerical("potential_lab"))?,
        _ => return Ok(None),
    };
    Ok(Some(d))
}

fn moment_designed_potential_with(kind: Kind, c0: f64, support: f64) -> Result<DesignedSolution, CliError> {
    let r = if support == DEFAULT_SUPPORT {
        moment_designed_potential(kind, c0)
    } else {
        h4spec::potential_lab::moment_designed_potential_with_support(kind, c0, support)
    };
    r.map_err(CliError::numerical("potential_lab"))
}

pub fn build(cfg: &PotentialConfig) -> Result<Potential, CliError> {
    let pot = match cfg.kind {
        PotentialKind::Builtin => {
            let name = need(&cfg.name, "name")?;
            if name == "free" {
                Potential::zero()
            } else if name == "gaussian_well" {
                let p = Potential::gaussian_well(cfg.depth.unwrap_or(1.0), cfg.width.unwrap_or(1.0));
                if let Some(a) = cfg.support {
                    p.with_support(a)
                } else {
                    p
                }
            } else if let Some(d) = builtin_design(&name, cfg.c0.unwrap_or(0.0), cfg.support.unwrap_or(DEFAULT_SUPPORT))? {
                d.potential()
            } else {
                return Err(CliError::Config(format!("unknown built-in potential '{name}' (known: {})", BUILTINS.join(", "))));
            }
        }
        PotentialKind::Expression => {
            let src = need(&cfg.expression, "expression")?;
            let p = expression_potential(cfg.name.as_deref().unwrap_or("expression"), &src)?;
            match cfg.support {
                Some(a) => p.with_support(a),
                None => p,
            }
        }
        PotentialKind::Csv => csv_potential(&need(&cfg.path, "path")?)?,
        PotentialKind::Designed => {
            let d = design_from_source(
                cfg.name.as_deref().unwrap_or("designed"),
                need(&cfg.ell, "ell")?,
                cfg.c0.unwrap_or(0.0),
                need(&cfg.support, "support")?,
                need(&cfg.source_coefficients, "source_coefficients")?,
            )
            .map_err(CliError::numerical("potential_lab"))?;
            d.potential()
        }
    };
    Ok(match cfg.coupling {
        Some(c) => pot.scaled(c),
        None => pot,
    })
}

/// V(r) from an evalexpr expression in the variable r.
pub fn expression_potential(name: &str, src: &str) -> Result<Potential, CliError> {
    let tree: Node<DefaultNumericTypes> = build_operator_tree(src).map_err(|e| CliError::Config(format!("potential.expression: {e}")))?;
    let eval = move |r: f64| -> Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("r".into(), Value::from_float(r)).map_err(|e| e.to_string())?;
        tree.eval_number_with_context(&ctx).map_err(|e| e.to_string())
    };
    for k in 0..=200 {
        let r = k as f64 * 0.1;
        match eval(r) {
            Ok(v) if v.is_finite() => {}
            Ok(v) => return Err(CliError::Config(format!("potential.expression is {v} at r = {r}"))),
            Err(e) => return Err(CliError::Config(format!("potential.expression at r = {r}: {e}"))),
        }
    }
    Ok(Potential::new(name, move |r| eval(r).unwrap_or(f64::NAN), f64::INFINITY))
}

/// Piecewise-linear V through (r, V) samples from a two-column CSV with a header; V = 0 past the last sample.
pub fn csv_potential(path: &Path) -> Result<Potential, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let num = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("{}: row {} column {} is not a number", path.display(), i + 2, j + 1)))
        };
        pts.push((num(0)?, num(1)?));
    }
    if pts.len() < 2 {
        return Err(CliError::Config(format!("{}: need at least two samples", path.display())));
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) || pts[0].0 < 0.0 {
        return Err(CliError::Config(format!("{}: radii must be non-negative and increasing", path.display())));
    }
    let support = pts.last().unwrap().0;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv").to_string();
    let f = move |r: f64| {
        let k = pts.partition_point(|p| p.0 <= r);
        if k == 0 {
            return pts[0].1;
        }
        if k == pts.len() {
            return pts[k - 1].1;
        }
        let (a, b) = (pts[k - 1], pts[k]);
        a.1 + (b.1 - a.1) * (r - a.0) / (b.0 - a.0)
    };
    Ok(Potential::new(&name, f, f64::INFINITY).with_support(support))
}
