//! e^{−itH}P_ac f through Stone's formula, finite-rank channels, decay fits and an eigen-expansion oracle.
//!
//! Data are sector functions f(r)·P_ℓ(cos θ); every quantity below is the radial profile.

use crate::birman_schwinger::{assemble_m_sector, channel_split, SubspaceChain, ThresholdOperators};
use crate::classifier::{classify_ops, CascadeState, Tolerances};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, PartialWaveKernel, Sign};
use crate::linalg::{linear_fit, to_complex, CMat, RMat};
use crate::quadrature::{grid_for_potential, Nystrom, Potential, QuadratureGrid, PANEL_ORDER};
use crate::special::{gauss_legendre, legendre, sph_jn_all};
use crate::Complex64 as C64;
use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn jl(ell: usize, x: f64) -> f64 {
    sph_jn_all(ell, x)[ell]
}

/// Initial datum f(r)·P_ℓ(cos θ).
#[derive(Clone)]
pub struct InitialData {
    pub name: String,
    pub ell: usize,
    f: RadialFn,
    /// f is negligible beyond this radius.
    pub radius: f64,
    /// Length scale used to size quadrature panels.
    pub width: f64,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InitialData({}, l={}, radius={})", self.name, self.ell, self.radius)
    }
}

impl InitialData {
    pub fn new<F>(name: &str, ell: usize, f: F, radius: f64, width: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), ell, f: Arc::new(f), radius, width }
    }

    /// e^{−r²/w²} normalized to unit L¹(ℝ³) norm.
    pub fn bump(width: f64) -> Self {
        let c = 1.0 / (PI.powf(1.5) * width.powi(3));
        Self::new("bump", 0, move |r| c * (-(r * r) / (width * width)).exp(), 6.5 * width, width)
    }

    /// r^ℓ e^{−r²/w²}·P_ℓ(cos θ), normalized to unit ⟨y⟩^σ-weighted L¹ norm.
    pub fn sector_bump(ell: usize, width: f64, sigma: f64) -> Self {
        let raw = move |r: f64| r.powi(ell as i32) * (-(r * r) / (width * width)).exp();
        let radius = 6.5 * width + ell as f64 * width;
        let g = QuadratureGrid::from_edges(&[0.0, radius], &[32], PANEL_ORDER);
        // ∫|P_ℓ| over the sphere
        let (x, w) = gauss_legendre(64);
        let ang: f64 = 2.0 * PI * x.iter().zip(&w).map(|(u, w)| w * legendre(ell, *u).abs()).sum::<f64>();
        let norm = ang / (4.0 * PI) * g.integrate(|r| raw(r).abs() * (1.0 + r * r).powf(0.5 * sigma));
        let c = 1.0 / norm;
        Self::new("sector_bump", ell, move |r| c * raw(r), radius, width)
    }

    pub fn value(&self, r: f64) -> f64 {
        if r > self.radius {
            0.0
        } else {
            (self.f)(r)
        }
    }

    fn grid(&self, lambda_max: f64) -> QuadratureGrid {
        let h = (0.5 * self.width).min(PI / lambda_max.max(1e-3));
        let panels = (self.radius / h).ceil().max(2.0) as usize;
        QuadratureGrid::from_edges(&[0.0, self.radius], &[panels], PANEL_ORDER)
    }

    /// f̃_ℓ(λ) = ∫ s² f(s) j_ℓ(λs) ds.
    pub fn hankel(&self, lambda: f64) -> f64 {
        let g = self.grid(lambda.max(1.0));
        (0..g.len()).map(|i| g.omega[i] * g.r[i] * g.r[i] * self.value(g.r[i]) * jl(self.ell, lambda * g.r[i])).sum()
    }

    /// Smallest λ beyond which λ²|f̃_ℓ(λ)| stays below tol·max.
    pub fn lambda_cutoff(&self, tol: f64) -> f64 {
        let step = 0.25 / self.width;
        let vals: Vec<(f64, f64)> = (1..=800).map(|k| (k as f64 * step, (k as f64 * step).powi(2) * self.hankel(k as f64 * step).abs())).collect();
        let mx = vals.iter().fold(0.0f64, |m, v| m.max(v.1));
        let last = vals.iter().rposition(|v| v.1 > tol * mx).unwrap_or(0);
        vals[(last + 1).min(vals.len() - 1)].0
    }
}

/// Smooth even cutoff: χ = 1 on |λ| < λ₀, 0 on |λ| > 2λ₀, quintic (C²) in between.
#[derive(Clone, Copy, Debug)]
pub struct CutoffSpec {
    pub lambda0: f64,
}

impl CutoffSpec {
    pub fn chi(&self, lambda: f64) -> f64 {
        let s = (lambda.abs() - self.lambda0) / self.lambda0;
        if s <= 0.0 {
            1.0
        } else if s >= 1.0 {
            0.0
        } else {
            1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
        }
    }

    pub fn chi_tilde(&self, lambda: f64) -> f64 {
        1.0 - self.chi(lambda)
    }
}

/// λ panels: geometric on [λ_min, λ_g], uniform of width `width` up to λ_max.
#[derive(Clone, Debug)]
pub struct LambdaPlan {
    pub lambda_min: f64,
    pub geometric_end: f64,
    pub ratio: f64,
    pub width: f64,
    pub lambda_max: f64,
    pub filon_order: usize,
}

impl LambdaPlan {
    pub fn for_data(f: &InitialData, r_out: f64) -> Self {
        let lambda_max = f.lambda_cutoff(1e-13);
        Self { lambda_min: 1e-3, geometric_end: 0.5f64.min(lambda_max / 2.0), ratio: 1.5, width: 0.25f64.min(2.0 / r_out.max(1.0)), lambda_max, filon_order: 16 }
    }

    pub fn panels(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut a = self.lambda_min;
        while a < self.geometric_end * (1.0 - 1e-12) {
            let b = (a * self.ratio).min(self.geometric_end);
            out.push((a, b));
            a = b;
        }
        let n = ((self.lambda_max - a) / self.width).ceil().max(1.0) as usize;
        let h = (self.lambda_max - a) / n as f64;
        for k in 0..n {
            out.push((a + k as f64 * h, a + (k + 1) as f64 * h));
        }
        out
    }

    /// Every panel split in two.
    pub fn refined(&self) -> Self {
        Self { ratio: self.ratio.sqrt(), width: 0.5 * self.width, ..self.clone() }
    }
}

/// Filon rule in μ = λ⁴: nodes λ_i and weights W_i(t) with ∫ e^{−itλ⁴} a(λ) dλ ≈ Σ W_i(t) a(λ_i).
struct FilonRule {
    lambdas: Vec<f64>,
    /// (panel start index, h, m) per panel.
    panels: Vec<(usize, f64, f64)>,
    xi: Vec<f64>,
    /// P_k(ξ_i)·w_i·(2k+1)/2, indexed [i][k].
    proj: Vec<Vec<f64>>,
}

impl FilonRule {
    fn new(plan: &LambdaPlan) -> Self {
        let p = plan.filon_order;
        let (xi, w) = gauss_legendre(p);
        let proj: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|k| legendre(k, xi[i]) * w[i] * (2 * k + 1) as f64 / 2.0).collect()).collect();
        let mut lambdas = Vec::new();
        let mut panels = Vec::new();
        for (a, b) in plan.panels() {
            let (ma, mb) = (a.powi(4), b.powi(4));
            let (h, m) = (0.5 * (mb - ma), 0.5 * (mb + ma));
            panels.push((lambdas.len(), h, m));
            for x in &xi {
                lambdas.push((m + h * x).powf(0.25));
            }
        }
        Self { lambdas, panels, xi, proj }
    }

    fn weights(&self, t: f64) -> Vec<C64> {
        let p = self.xi.len();
        let mut out = vec![C64::new(0.0, 0.0); self.lambdas.len()];
        for &(start, h, m) in &self.panels {
            let js = sph_jn_all(p - 1, t * h);
            let mom: Vec<C64> = (0..p).map(|k| C64::new(0.0, -1.0).powi(k as i32) * (2.0 * js[k])).collect();
            let ph = C64::from_polar(h, -t * m);
            for i in 0..p {
                let s: C64 = (0..p).map(|k| mom[k] * self.proj[i][k]).sum();
                let lam = self.lambdas[start + i];
                out[start + i] = ph * s / (4.0 * lam.powi(3));
            }
        }
        out
    }
}

/// Potential side of the evolution: Nyström data and cascade chains, or nothing for V = 0.
#[derive(Clone, Debug)]
pub struct Medium {
    pub ops: Option<ThresholdOperators>,
    pub chains: Vec<SubspaceChain>,
}

impl Medium {
    pub fn free() -> Self {
        Self { ops: None, chains: vec![] }
    }

    pub fn from_state(state: &CascadeState) -> Self {
        Self { ops: Some(state.ops.clone()), chains: state.chains() }
    }

    pub fn from_potential(potential: &Potential, n: usize) -> Result<Self> {
        if potential.effective_radius() <= 0.0 {
            return Ok(Self::free());
        }
        let grid = grid_for_potential(potential, n)?;
        let state = classify_ops(ThresholdOperators::new(Nystrom::new(grid, potential.clone())?), Tolerances::default());
        Ok(Self::from_state(&state))
    }

    fn chain(&self, ell: usize) -> Option<&SubspaceChain> {
        self.chains.iter().find(|c| c.ell == ell)
    }
}

/// M⁺(λ) in sector ℓ: the threshold-split form below λ = 1/2, the direct kernel above.
fn m_plus(ops: &ThresholdOperators, lambda: f64, ell: usize) -> Result<CMat> {
    if lambda < 0.5 {
        return assemble_m_sector(ops, lambda, Sign::Plus, ell);
    }
    let ny = &ops.ny;
    Ok(ny.sandwich(&PartialWaveKernel::new(KernelFamily::FreeResolventPlus { lambda }, ell)) + to_complex(&ny.u_matrix()))
}

/// f on its own product-integration grid: V = f|f| makes v·u = f.
fn data_nystrom(f: &InitialData, lambda_max: f64) -> Result<(Nystrom, DVector<C64>)> {
    let g = f.grid(lambda_max).with_sectors(vec![f.ell]);
    let ff = f.clone();
    let pseudo = Potential::new("data", move |r| ff.value(r) * ff.value(r).abs(), f64::INFINITY);
    let ny = Nystrom::new(g, pseudo)?;
    let coef = DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| C64::new(ny.sqrt_mu[i] * ny.u[i], 0.0)));
    Ok((ny, coef))
}

fn sign_kernel(sign: Sign, lambda: f64, ell: usize) -> PartialWaveKernel {
    let fam = match sign {
        Sign::Plus => KernelFamily::FreeResolventPlus { lambda },
        Sign::Minus => KernelFamily::FreeResolventMinus { lambda },
    };
    PartialWaveKernel::new(fam, ell)
}

/// R±_V(λ⁴)f = R±f − R±v M±(λ)⁻¹ vR±f at the given radii.
pub fn resolvent_apply(medium: &Medium, lambda: f64, sign: Sign, f: &InitialData, targets: &[f64]) -> Result<Vec<C64>> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let (fny, fc) = data_nystrom(f, lambda)?;
    let k = sign_kernel(sign, lambda, f.ell);
    let free = fny.eval_rows(&k, targets) * &fc;
    let Some(ops) = &medium.ops else {
        return Ok(free.iter().copied().collect());
    };
    let ny = &ops.ny;
    let rf = fny.eval_rows(&k, &ny.r) * &fc;
    let b = DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| rf[i] * (ny.sqrt_mu[i] * ny.v[i])));
    let m = match sign {
        Sign::Plus => m_plus(ops, lambda, f.ell)?,
        Sign::Minus => m_plus(ops, lambda, f.ell)?.conjugate(),
    };
    let y = m.lu().solve(&b).ok_or_else(|| Error::Inversion { what: "M(lambda)".into(), min_sv: 0.0 })?;
    let corr = ny.eval_rows(&k, targets) * y;
    Ok(free.iter().zip(corr.iter()).map(|(a, c)| a - c).collect())
}

/// Everything that does not depend on λ.
struct Prepared {
    f: InitialData,
    targets: Vec<f64>,
    fny: Nystrom,
    fc: DVector<C64>,
    /// G₀ rows at the targets and coefficients of vG₀f (channel outer factors).
    e0: Option<RMat>,
    g0f: Option<DVector<f64>>,
    chain: Option<SubspaceChain>,
    fgrid: QuadratureGrid,
}

struct Sample {
    full: Vec<f64>,
    channel: Vec<f64>,
    /// ‖M‖·‖y‖/‖b‖, a cheap conditioning indicator.
    growth: f64,
}

fn prepare(medium: &Medium, f: &InitialData, targets: &[f64], lambda_max: f64, channels: &[String]) -> Result<Prepared> {
    let (fny, fc) = data_nystrom(f, lambda_max)?;
    let fgrid = f.grid(lambda_max);
    let mut p = Prepared { f: f.clone(), targets: targets.to_vec(), fny, fc, e0: None, g0f: None, chain: None, fgrid };
    if channels.is_empty() {
        return Ok(p);
    }
    let ops = medium.ops.as_ref().ok_or_else(|| Error::Usage("channels requested for V = 0".into()))?;
    let chain = medium.chain(f.ell).ok_or_else(|| Error::Usage(format!("no cascade in sector {}", f.ell)))?;
    for c in channels {
        let dim = match c.as_str() {
            "S3" => chain.s3.ncols(),
            "S2" => chain.s2.ncols() - chain.s3.ncols(),
            "S1" => chain.s1.ncols() - chain.s2.ncols(),
            "Q" | "remainder" => 1,
            _ => return Err(Error::Usage(format!("unknown channel {c}"))),
        };
        if dim == 0 {
            return Err(Error::Usage(format!("channel {c} is absent for this classification")));
        }
    }
    let ny = &ops.ny;
    let g0 = PartialWaveKernel::new(KernelFamily::G0, f.ell);
    p.e0 = Some(ny.eval_rows(&g0, targets).map(|z| z.re));
    let g0f = p.fny.eval_rows(&g0, &ny.r) * &p.fc;
    p.g0f = Some(DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| g0f[i].re * ny.sqrt_mu[i] * ny.v[i])));
    p.chain = Some(chain.clone());
    Ok(p)
}

/// a(λ, r) = (4/π)λ³ Im(R⁺_V f)(r) and the G₀-sandwiched channel amplitude.
fn sample(medium: &Medium, prep: &Prepared, lambda: f64, channels: &[String]) -> Result<Sample> {
    let ell = prep.f.ell;
    let g = &prep.fgrid;
    let ft: f64 = (0..g.len()).map(|i| g.omega[i] * g.r[i] * g.r[i] * prep.f.value(g.r[i]) * jl(ell, lambda * g.r[i])).sum();
    let pref = 4.0 / PI * lambda.powi(3);
    let mut full: Vec<f64> = prep.targets.iter().map(|&r| pref * jl(ell, lambda * r) * ft / (2.0 * lambda)).collect();
    let mut channel = vec![0.0; prep.targets.len()];
    let mut growth = 1.0;
    if let Some(ops) = &medium.ops {
        let ny = &ops.ny;
        let k = sign_kernel(Sign::Plus, lambda, ell);
        let rf = prep.fny.eval_rows(&k, &ny.r) * &prep.fc;
        let b = DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| rf[i] * (ny.sqrt_mu[i] * ny.v[i])));
        let m = m_plus(ops, lambda, ell)?;
        let mnorm = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let lu = m.lu();
        let y = lu.solve(&b).ok_or_else(|| Error::Inversion { what: format!("M(lambda) at lambda = {lambda}"), min_sv: 0.0 })?;
        growth = mnorm * y.norm() / b.norm().max(1e-300);
        let corr = ny.eval_rows(&k, &prep.targets) * &y;
        for (a, c) in full.iter_mut().zip(corr.iter()) {
            *a -= pref * c.im;
        }
        if !channels.is_empty() {
            let chain = prep.chain.as_ref().expect("prepared chain");
            let minv = lu.try_inverse().ok_or_else(|| Error::Inversion { what: "M(lambda)".into(), min_sv: 0.0 })?;
            let parts = channel_split(ops, chain, &minv);
            let mut x = RMat::zeros(ny.dim(), ny.dim());
            for (name, blk) in parts {
                if channels.iter().any(|c| c == name) {
                    x += blk.map(|z| z.im);
                }
            }
            let e0 = prep.e0.as_ref().expect("prepared G0 rows");
            let vals = e0 * (x * prep.g0f.as_ref().expect("prepared G0 f"));
            for (a, v) in channel.iter_mut().zip(vals.iter()) {
                *a = -pref * v;
            }
        }
    }
    Ok(Sample { full, channel, growth })
}

#[derive(Clone, Debug)]
pub struct EvolutionRequest {
    pub f: InitialData,
    pub times: Vec<f64>,
    pub targets: Vec<f64>,
    pub plan: Option<LambdaPlan>,
    pub cutoff: CutoffSpec,
    /// Channels (names from the channel split) evolved alongside and subtracted.
    pub subtract_channels: Vec<String>,
    pub sigma: f64,
    /// Repeat with every λ panel halved and require agreement to this relative tolerance.
    pub convergence_tol: Option<f64>,
}

impl EvolutionRequest {
    pub fn new(f: InitialData, times: Vec<f64>) -> Self {
        Self {
            f,
            times,
            targets: default_targets(20.0, 80),
            plan: None,
            cutoff: CutoffSpec { lambda0: 0.5 },
            subtract_channels: vec![],
            sigma: 0.0,
            convergence_tol: None,
        }
    }
}

/// Origin plus n uniformly spaced radii on (0, r_out].
pub fn default_targets(r_out: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| r_out * k as f64 / n as f64).collect()
}

/// log-spaced times.
pub fn log_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 * (t1 / t0).powf(k as f64 / (n - 1) as f64)).collect()
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub targets: Vec<f64>,
    /// u[k][j] = u(t_k, r_j).
    pub u: Vec<Vec<C64>>,
    /// χ(λ) part of u.
    pub u_low: Vec<Vec<C64>>,
    /// Finite-rank channel part (zero when no channel was requested).
    pub channel: Vec<Vec<C64>>,
    pub lambda_nodes: usize,
    pub max_growth: f64,
    /// Largest relative change under panel refinement, when checked.
    pub refinement_change: Option<f64>,
}

impl Evolution {
    /// u − channel.
    pub fn subtracted(&self) -> Vec<Vec<C64>> {
        self.u.iter().zip(&self.channel).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect()
    }
}

fn sup(vals: &[C64], targets: &[f64], sigma: f64) -> f64 {
    vals.iter().zip(targets).map(|(v, r)| v.norm() * (1.0 + r * r).powf(-0.5 * sigma)).fold(0.0, f64::max)
}

fn evolve_once(medium: &Medium, req: &EvolutionRequest, plan: &LambdaPlan) -> Result<Evolution> {
    for &t in &req.times {
        if !(t > 0.0) {
            return Err(Error::Usage(format!("times must be positive, got {t}")));
        }
    }
    let rule = FilonRule::new(plan);
    let prep = prepare(medium, &req.f, &req.targets, plan.lambda_max, &req.subtract_channels)?;
    let samples: Vec<Result<Sample>> = rule.lambdas.par_iter().map(|&l| sample(medium, &prep, l, &req.subtract_channels)).collect();
    let samples: Vec<Sample> = samples.into_iter().collect::<Result<_>>()?;
    let nt = req.targets.len();
    let max_growth = samples.iter().map(|s| s.growth).fold(0.0, f64::max);
    // head [0, λ_min]: a ≈ a(λ₁)(λ/λ₁)^q with q from the two smallest nodes
    let (l1, l2) = (rule.lambdas[0], rule.lambdas[1]);
    let head = |pick: &dyn Fn(&Sample) -> &Vec<f64>| -> Vec<f64> {
        (0..nt)
            .map(|j| {
                let (a1, a2) = (pick(&samples[0])[j], pick(&samples[1])[j]);
                let q = if a1 * a2 > 0.0 { ((a2 / a1).ln() / (l2 / l1).ln()).clamp(-0.9, 6.0) } else { 2.0 };
                a1 * (plan.lambda_min / l1).powf(q) * plan.lambda_min / (q + 1.0)
            })
            .collect()
    };
    let head_full = head(&|s: &Sample| &s.full);
    let head_chan = head(&|s: &Sample| &s.channel);
    let chi: Vec<f64> = rule.lambdas.iter().map(|&l| req.cutoff.chi(l)).collect();
    let mut u = Vec::new();
    let mut u_low = Vec::new();
    let mut channel = Vec::new();
    for &t in &req.times {
        let w = rule.weights(t);
        let mut acc = vec![C64::new(0.0, 0.0); nt];
        let mut low = vec![C64::new(0.0, 0.0); nt];
        let mut ch = vec![C64::new(0.0, 0.0); nt];
        for (i, s) in samples.iter().enumerate() {
            for j in 0..nt {
                acc[j] += w[i] * s.full[j];
                low[j] += w[i] * (chi[i] * s.full[j]);
                ch[j] += w[i] * s.channel[j];
            }
        }
        // ∫_Λ^∞ e^{−itλ⁴} a dλ ≈ a(Λ) e^{−itΛ⁴}/(4itΛ³)
        let lam = plan.lambda_max;
        let tail = C64::from_polar(1.0, -t * lam.powi(4)) / C64::new(0.0, 4.0 * t * lam.powi(3));
        let last = samples.last().expect("nonempty rule");
        for j in 0..nt {
            acc[j] += head_full[j] + tail * last.full[j];
            low[j] += head_full[j];
            ch[j] += head_chan[j] + tail * last.channel[j];
        }
        u.push(acc);
        u_low.push(low);
        channel.push(ch);
    }
    Ok(Evolution { times: req.times.clone(), targets: req.targets.clone(), u, u_low, channel, lambda_nodes: rule.lambdas.len(), max_growth, refinement_change: None })
}

/// Scattering spreads the amplitude beyond the data's own band; push λ_max out until the
/// truncated tail, of size |a(Λ)|/(4 t_min Λ³), is negligible.
fn extend_plan(medium: &Medium, req: &EvolutionRequest, mut plan: LambdaPlan) -> Result<LambdaPlan> {
    if medium.ops.is_none() {
        return Ok(plan);
    }
    let t_min = req.times.iter().fold(f64::INFINITY, |m, t| m.min(*t));
    let amp = |l: f64| -> Result<f64> {
        let prep = prepare(medium, &req.f, &req.targets, l, &[])?;
        Ok(sample(medium, &prep, l, &[])?.full.iter().fold(0.0, |m, v| m.max(v.abs())))
    };
    let mut peak = 0.0f64;
    for k in 1..=8 {
        peak = peak.max(amp(plan.lambda_max * k as f64 / 8.0)?);
    }
    let mut lam = plan.lambda_max;
    while lam < LAMBDA_CAP && amp(lam)? / (4.0 * t_min * lam.powi(3)) > TAIL_TOL * peak.max(1e-300) * plan.lambda_max {
        lam *= 1.25;
    }
    plan.lambda_max = lam.min(LAMBDA_CAP);
    Ok(plan)
}

const LAMBDA_CAP: f64 = 64.0;
const TAIL_TOL: f64 = 1e-9;

/// Stone-formula evolution at the requested times.
pub fn stone_evolve(medium: &Medium, req: &EvolutionRequest) -> Result<Evolution> {
    let r_out = req.targets.iter().fold(0.0f64, |m, r| m.max(*r));
    let plan = match &req.plan {
        Some(p) => p.clone(),
        None => extend_plan(medium, req, LambdaPlan::for_data(&req.f, r_out))?,
    };
    let mut ev = evolve_once(medium, req, &plan)?;
    if let Some(tol) = req.convergence_tol {
        let fine = evolve_once(medium, req, &plan.refined())?;
        let mut worst: f64 = 0.0;
        for (a, b) in ev.u.iter().zip(&fine.u) {
            let s = sup(b, &req.targets, 0.0);
            worst = worst.max(sup(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>(), &req.targets, 0.0) / s);
        }
        ev.refinement_change = Some(worst);
        if worst > tol {
            return Err(Error::Quadrature(format!("panel doubling changed the evolution by {worst:.3e} > {tol:.1e}")));
        }
    }
    Ok(ev)
}

/// Operator f ↦ channel part of u(t) restricted to coefficient space: G₀v·B_t·vG₀, returned as B_t.
pub fn finite_rank_channel_matrix(medium: &Medium, ell: usize, t: f64, channels: &[String], plan: &LambdaPlan) -> Result<RMat> {
    let ops = medium.ops.as_ref().ok_or_else(|| Error::Usage("channels need a potential".into()))?;
    let chain = medium.chain(ell).ok_or_else(|| Error::Usage(format!("no cascade in sector {ell}")))?;
    let rule = FilonRule::new(plan);
    let w = rule.weights(t);
    let n = ops.dim();
    let parts: Vec<Result<(CMat, C64)>> = rule
        .lambdas
        .par_iter()
        .zip(w.par_iter())
        .map(|(&l, &wi)| {
            let m = m_plus(ops, l, ell)?;
            let minv = m.lu().try_inverse().ok_or_else(|| Error::Inversion { what: "M(lambda)".into(), min_sv: 0.0 })?;
            let mut x = CMat::zeros(n, n);
            for (name, blk) in channel_split(ops, chain, &minv) {
                if channels.iter().any(|c| c == name) {
                    x += blk.map(|z| C64::new(z.im, 0.0));
                }
            }
            Ok((x, wi * (-4.0 / PI * l.powi(3))))
        })
        .collect();
    let mut b = CMat::zeros(n, n);
    for p in parts {
        let (x, c) = p?;
        b += x * c;
    }
    // real and imaginary parts are both supported on the channel subspace; report the modulus-dominant real form
    let re = b.map(|z| z.re);
    let im = b.map(|z| z.im);
    Ok(if re.norm() >= im.norm() { re } else { im })
}

/// Channel-only evolution: u_c(t) at the targets.
pub fn finite_rank_channel(medium: &Medium, f: &InitialData, times: &[f64], channels: &[String], targets: &[f64]) -> Result<Evolution> {
    let mut req = EvolutionRequest::new(f.clone(), times.to_vec());
    req.targets = targets.to_vec();
    req.subtract_channels = channels.to_vec();
    let mut ev = stone_evolve(medium, &req)?;
    ev.u = ev.channel.clone();
    Ok(ev)
}

#[derive(Clone, Debug)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub weighted: Vec<f64>,
    pub sigma: f64,
    pub channel: String,
    pub window: (f64, f64),
    pub slope: f64,
    pub stderr: f64,
    pub residual: f64,
    /// Residual below 0.05 and at least 8 samples in the window.
    pub clean: bool,
}

impl DecayCurve {
    pub fn from_values(times: &[f64], values: Vec<f64>, weighted: Vec<f64>, sigma: f64, channel: &str) -> Self {
        let window = (times[0], times[times.len() - 1]);
        let mut c = Self { times: times.to_vec(), values, weighted, sigma, channel: channel.into(), window, slope: f64::NAN, stderr: f64::NAN, residual: f64::NAN, clean: false };
        c.refit(window);
        c
    }

    pub fn from_evolution(ev: &Evolution, which: &[Vec<C64>], sigma: f64, channel: &str) -> Self {
        let values = which.iter().map(|u| sup(u, &ev.targets, 0.0)).collect();
        let weighted = which.iter().map(|u| sup(u, &ev.targets, sigma)).collect();
        Self::from_values(&ev.times, values, weighted, sigma, channel)
    }

    /// Refit on a window; the weighted series is fitted when σ > 0.
    pub fn refit(&mut self, window: (f64, f64)) {
        let series = if self.sigma > 0.0 { &self.weighted } else { &self.values };
        let fit = decay_fit(&self.times, series, window);
        self.window = window;
        self.slope = fit.slope;
        self.stderr = fit.stderr;
        self.residual = fit.residual;
        self.clean = fit.clean;
    }

    /// CSV rows: t, sup_norm, weighted_sup_norm, channel, slope_window_flag.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,sup_norm,weighted_sup_norm,channel,slope_window_flag\n");
        for i in 0..self.times.len() {
            let inw = self.times[i] >= self.window.0 && self.times[i] <= self.window.1;
            s += &format!("{:.16e},{:.16e},{:.16e},{},{}\n", self.times[i], self.values[i], self.weighted[i], self.channel, inw as u8);
        }
        s += &format!("# slope={:.16e} stderr={:.16e} residual={:.16e} clean={}\n", self.slope, self.stderr, self.residual, self.clean);
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Fit {
    pub slope: f64,
    pub stderr: f64,
    pub residual: f64,
    pub samples: usize,
    pub clean: bool,
}

/// Least-squares slope of log(value) against log(t) on a window.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Fit {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= window.0 * (1.0 - 1e-12) && **t <= window.1 * (1.0 + 1e-12) && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .unzip();
    if x.len() < 2 {
        return Fit { slope: f64::NAN, stderr: f64::NAN, residual: f64::NAN, samples: x.len(), clean: false };
    }
    let (slope, _, stderr, rms) = linear_fit(&x, &y);
    Fit { slope, stderr, residual: rms, samples: x.len(), clean: x.len() >= 8 && rms < 0.05 }
}

/// sup_x ⟨x⟩^{−σ}|u − channel| curve for σ-weighted third-kind decay.
pub fn weighted_decay(medium: &Medium, req: &EvolutionRequest) -> Result<(DecayCurve, DecayCurve)> {
    let ev = stone_evolve(medium, req)?;
    let sub = ev.subtracted();
    let weighted = DecayCurve::from_evolution(&ev, &sub, req.sigma, "subtracted");
    let plain = DecayCurve::from_evolution(&ev, &sub, 0.0, "subtracted");
    Ok((weighted, plain))
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub u: Vec<Vec<C64>>,
    /// Projection of f onto the retained modes, at the targets.
    pub projected: Vec<f64>,
    pub energies: Vec<f64>,
    pub excluded_modes: usize,
    /// Fraction of ‖u(t)‖² in the outer 10% of the box.
    pub boundary_mass: Vec<f64>,
    pub unreliable: Vec<bool>,
    pub norm_defect: Vec<f64>,
    /// Heuristic time scale R²-like beyond which the box is felt.
    pub horizon: f64,
}

/// Eigen-expansion of e^{−itH} for radial data in a box [0, R]: H w = w'''' + V w on w = r f,
/// sine basis (w = w'' = 0 at both ends), negative modes excluded.
pub fn eigen_oracle(potential: &Potential, f: &InitialData, times: &[f64], targets: &[f64], box_radius: f64, modes: usize) -> Result<OracleResult> {
    if f.ell != 0 {
        return Err(Error::Usage("eigen oracle handles radial data only".into()));
    }
    if modes > 4000 || modes < 8 {
        return Err(Error::Usage(format!("modes must be in [8, 4000], got {modes}")));
    }
    let r = box_radius;
    let kk: Vec<f64> = (1..=modes).map(|k| k as f64 * PI / r).collect();
    let norm = (2.0 / r).sqrt();
    let basis = |k: usize, x: f64| norm * (kk[k] * x).sin();
    // potential matrix
    let reff = potential.effective_radius().min(r);
    let mut h = RMat::from_diagonal(&DVector::from_iterator(modes, kk.iter().map(|k| k.powi(4))));
    if reff > 0.0 {
        let per = ((reff * kk[modes - 1] / PI).ceil() as usize + 8).max(8);
        let g = QuadratureGrid::from_edges(&[0.0, reff], &[per], PANEL_ORDER);
        let vals: Vec<f64> = g.r.iter().map(|&x| potential.value(x)).collect();
        let phi = RMat::from_fn(g.len(), modes, |i, k| basis(k, g.r[i]) * (vals[i] * g.omega[i]).abs().sqrt());
        let sgn = RMat::from_diagonal(&DVector::from_iterator(g.len(), vals.iter().map(|v| v.signum())));
        h += phi.transpose() * sgn * &phi;
    }
    let eig = SymmetricEigen::new(h);
    let keep: Vec<usize> = (0..modes).filter(|&j| eig.eigenvalues[j] >= 0.0).collect();
    let excluded = modes - keep.len();
    // initial coefficients of w = r f
    let per = ((f.radius * kk[modes - 1] / PI).ceil() as usize + 8).max(8);
    let g = QuadratureGrid::from_edges(&[0.0, f.radius.min(r)], &[per], PANEL_ORDER);
    let c = DVector::from_iterator(modes, (0..modes).map(|k| (0..g.len()).map(|i| g.omega[i] * g.r[i] * f.value(g.r[i]) * basis(k, g.r[i])).sum::<f64>()));
    let u_mat = &eig.eigenvectors;
    let d = u_mat.transpose() * &c;
    // f(r) = w(r)/r, with the r → 0 limit
    let eval = |coef: &DVector<C64>, x: f64| -> C64 {
        if x < 1e-12 {
            (0..modes).map(|k| coef[k] * (norm * kk[k])).sum()
        } else {
            (0..modes).map(|k| coef[k] * (basis(k, x) / x)).sum()
        }
    };
    let (x10, w10) = {
        let q = QuadratureGrid::from_edges(&[0.9 * r, r], &[(0.1 * r * kk[modes - 1] / PI).ceil() as usize + 4], PANEL_ORDER);
        (q.r, q.omega)
    };
    let mut proj_d = DVector::zeros(modes);
    for &j in &keep {
        proj_d[j] = d[j];
    }
    let p0 = (u_mat * &proj_d).map(|x| C64::new(x, 0.0));
    let projected: Vec<f64> = targets.iter().map(|&x| eval(&p0, x).re).collect();
    let pnorm = proj_d.norm();
    let mut u = Vec::new();
    let mut boundary_mass = Vec::new();
    let mut unreliable = Vec::new();
    let mut norm_defect = Vec::new();
    for &t in times {
        let mut dt = DVector::from_element(modes, C64::new(0.0, 0.0));
        for &j in &keep {
            dt[j] = C64::from_polar(d[j], -t * eig.eigenvalues[j]);
        }
        let coef = u_mat.map(|x| C64::new(x, 0.0)) * &dt;
        u.push(targets.iter().map(|&x| eval(&coef, x)).collect());
        let outer: f64 = x10.iter().zip(&w10).map(|(x, w)| w * (0..modes).map(|k| coef[k] * basis(k, *x)).sum::<C64>().norm_sqr()).sum();
        let total = coef.norm_squared();
        boundary_mass.push(outer / total.max(1e-300));
        unreliable.push(outer / total.max(1e-300) > 0.01);
        norm_defect.push((dt.norm() - pnorm).abs() / pnorm.max(1e-300));
    }
    Ok(OracleResult { u, projected, energies: eig.eigenvalues.iter().copied().collect(), excluded_modes: excluded, boundary_mass, unreliable, norm_defect, horizon: r * r })
}

/// sup over sample radii y of the ℓ-sector L² norms of x ↦ [X v R±(λ⁴)](x, y), X ∈ {Q, 1, S₂(R − G₀)}.
#[derive(Clone, Debug)]
pub struct GainRow {
    pub lambda: f64,
    pub q_v_r: f64,
    pub v_r: f64,
    pub s2_v_r_minus_g0: f64,
}

pub fn orthogonality_gains(ops: &ThresholdOperators, chain: &SubspaceChain, sign: Sign, lambdas: &[f64], ys: &[f64]) -> Result<Vec<GainRow>> {
    let ny = &ops.ny;
    let n = ny.dim();
    let q = ops.q_matrix(chain.ell);
    let s2 = &chain.s2;
    if s2.ncols() == 0 {
        return Err(Error::Usage("S2 is trivial in this sector".into()));
    }
    let coeffs = crate::kernels::ExpansionCoefficients::new();
    lambdas
        .par_iter()
        .map(|&lam| {
            let k = sign_kernel(sign, lam, chain.ell);
            let tail = PartialWaveKernel::new(KernelFamily::ResolventTail { sign, lambda: lam, skip: 2 }, chain.ell);
            let a_over = if chain.ell == 0 { coeffs.a(sign) * (4.0 * PI / lam) } else { C64::new(0.0, 0.0) };
            let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
            for &y in ys {
                let col = |kern: &PartialWaveKernel, shift: C64| -> DVector<C64> {
                    DVector::from_iterator(n, (0..n).map(|i| (kern.eval_k(ny.r[i], y) + shift) * (ny.sqrt_mu[i] * ny.v[i] / (4.0 * PI).sqrt())))
                };
                let full = col(&k, C64::new(0.0, 0.0));
                let diff = col(&tail, a_over);
                a = a.max((to_complex(&q) * &full).norm());
                b = b.max(full.norm());
                c = c.max((to_complex(&s2.transpose()) * &diff).norm());
            }
            Ok(GainRow { lambda: lam, q_v_r: a, v_r: b, s2_v_r_minus_g0: c })
        })
        .collect()
}

/// Fitted λ-exponents of the three gain norms.
pub fn gain_exponents(rows: &[GainRow]) -> (f64, f64, f64) {
    let x: Vec<f64> = rows.iter().map(|r| r.lambda.ln()).collect();
    let fit = |pick: fn(&GainRow) -> f64| linear_fit(&x, &rows.iter().map(|r| pick(r).ln()).collect::<Vec<_>>()).0;
    (fit(|r| r.q_v_r), fit(|r| r.v_r), fit(|r| r.s2_v_r_minus_g0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_partition() {
        let c = CutoffSpec { lambda0: 0.3 };
        for k in 0..100 {
            let l = k as f64 * 0.01;
            assert!((c.chi(l) + c.chi_tilde(l) - 1.0).abs() < 1e-15);
        }
        assert_eq!(c.chi(0.2), 1.0);
        assert_eq!(c.chi(0.7), 0.0);
    }

    #[test]
    fn hankel_of_gaussian() {
        let w = 0.7;
        let f = InitialData::new("g", 0, move |r| (-(r * r) / (w * w)).exp(), 8.0 * w, w);
        for lam in [0.1, 1.0, 4.0] {
            let exact = PI.sqrt() * w.powi(3) / 4.0 * (-(lam * lam) * w * w / 4.0).exp();
            assert!((f.hankel(lam) - exact).abs() < 1e-13, "{lam}");
        }
    }

    #[test]
    fn filon_matches_closed_form_phase_integral() {
        // ∫₀^∞ e^{−itλ⁴} λ² e^{−λ²} dλ against dense quadrature at t = 3
        let plan = LambdaPlan { lambda_min: 1e-3, geometric_end: 0.5, ratio: 1.5, width: 0.1, lambda_max: 7.0, filon_order: 16 };
        let rule = FilonRule::new(&plan);
        let t = 3.0;
        let w = rule.weights(t);
        let got: C64 = rule.lambdas.iter().zip(&w).map(|(l, w)| w * (l * l * (-l * l).exp())).sum();
        let (x, wt) = gauss_legendre(64);
        let mut exact = C64::new(0.0, 0.0);
        let n = 2000;
        for p in 0..n {
            let (a, b) = (7.0 * p as f64 / n as f64, 7.0 * (p + 1) as f64 / n as f64);
            for (xi, wi) in x.iter().zip(&wt) {
                let l = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                exact += C64::from_polar(0.5 * (b - a) * wi * l * l * (-l * l).exp(), -t * l.powi(4));
            }
        }
        assert!((got - exact).norm() < 1e-9, "{got} {exact}");
    }

    #[test]
    fn decay_fit_synthetic() {
        let t = log_times(10.0, 1000.0, 16);
        let v: Vec<f64> = t.iter().map(|t| 2.0 * t.powf(-0.75)).collect();
        let f = decay_fit(&t, &v, (10.0, 1000.0));
        assert!((f.slope + 0.75).abs() < 1e-10 && f.clean);
        let v: Vec<f64> = t.iter().map(|t| t.powf(-0.25) + 5.0 * t.powf(-0.75)).collect();
        let late = decay_fit(&t, &v, (300.0, 1000.0));
        let early = decay_fit(&t, &v, (10.0, 30.0));
        assert!((late.slope + 0.25).abs() < (early.slope + 0.25).abs());
    }
}
