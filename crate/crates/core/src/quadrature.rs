//! Radial grids, potentials and Nyström assembly of sandwiched partial-wave operators.
//!
//! A function f(r)·Y_ℓm(x̂) in sector ℓ is stored through the coefficients
//! x_i = √μ_i f(r_i), μ_i = r_i² ω_i, so the Euclidean inner product of
//! coefficient vectors approximates the L²(ℝ³) inner product.

use crate::error::{Error, Result};
use crate::kernels::PartialWaveKernel;
use crate::linalg::{spectral_norm, spectral_norm_real, CMat, RMat};
use crate::special::gauss_legendre;
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

pub const PANEL_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    GaussLegendreComposite,
    TanhSinh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub r: Vec<f64>,
    /// Plain radial weights for ∫ dr.
    pub omega: Vec<f64>,
    /// Volume weights 4π r² ω.
    pub w: Vec<f64>,
    /// Interpolatory panels; empty for tanh-sinh grids.
    pub panels: Vec<Panel>,
    pub sectors: Vec<usize>,
    pub scheme: Scheme,
    pub r_max: f64,
}

impl QuadratureGrid {
    /// Composite Gauss–Legendre grid with `per_interval[k]` equal panels on [edges[k], edges[k+1]].
    pub fn from_edges(edges: &[f64], per_interval: &[usize], order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut r = Vec::new();
        let mut omega = Vec::new();
        let mut panels = Vec::new();
        for (k, win) in edges.windows(2).enumerate() {
            let m = per_interval[k].max(1);
            let h = (win[1] - win[0]) / m as f64;
            for p in 0..m {
                let a = win[0] + p as f64 * h;
                let b = a + h;
                panels.push(Panel { a, b, start: r.len(), len: order });
                for (x, wt) in gx.iter().zip(&gw) {
                    r.push(a + 0.5 * h * (x + 1.0));
                    omega.push(0.5 * h * wt);
                }
            }
        }
        let w = r.iter().zip(&omega).map(|(r, o)| 4.0 * PI * r * r * o).collect();
        let r_max = *edges.last().unwrap();
        Self { r, omega, w, panels, sectors: vec![0, 1, 2], scheme: Scheme::GaussLegendreComposite, r_max }
    }

    fn tanh_sinh(r_max: f64, n: usize) -> Self {
        let m = (n as i64 - 1) / 2;
        let h = 6.5 / m as f64;
        let mut r = Vec::new();
        let mut omega = Vec::new();
        for k in -m..=m {
            let t = k as f64 * h;
            let s = 0.5 * PI * t.sinh();
            let x = s.tanh();
            let dx = 0.5 * PI * t.cosh() / s.cosh().powi(2);
            let node = 0.5 * r_max * (1.0 + x);
            let wt = 0.5 * r_max * h * dx;
            if node > 0.0 && node < r_max && wt > 0.0 {
                r.push(node);
                omega.push(wt);
            }
        }
        let w = r.iter().zip(&omega).map(|(r, o)| 4.0 * PI * r * r * o).collect();
        Self { r, omega, w, panels: vec![], sectors: vec![0, 1, 2], scheme: Scheme::TanhSinh, r_max }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn with_sectors(mut self, sectors: Vec<usize>) -> Self {
        self.sectors = sectors;
        self
    }

    pub fn multiplicity(ell: usize) -> usize {
        2 * ell + 1
    }

    /// ∫_{|x|≤R_max} f(|x|) dx.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.r.iter().zip(&self.w).map(|(r, w)| w * f(*r)).sum()
    }

    /// Index of the panel whose interior contains x.
    pub fn panel_of(&self, x: f64) -> Option<usize> {
        let k = self.panels.partition_point(|p| p.b <= x);
        (k < self.panels.len() && self.panels[k].a < x).then_some(k)
    }
}

/// Composite Gauss–Legendre (panels of 16 nodes, n rounded up to a multiple) or tanh-sinh grid on [0, R_max].
pub fn build_grid(r_max: f64, n: usize, scheme: Scheme) -> Result<QuadratureGrid> {
    build_grid_with_breaks(r_max, n, &[], scheme)
}

/// As [`build_grid`], with panel edges forced at the given breakpoints.
pub fn build_grid_with_breaks(r_max: f64, n: usize, breaks: &[f64], scheme: Scheme) -> Result<QuadratureGrid> {
    if n < 16 {
        return Err(Error::Usage(format!("grid needs n >= 16, got {n}")));
    }
    if !(r_max >= 10.0 && r_max.is_finite()) {
        return Err(Error::Usage(format!("grid needs R_max >= 10, got {r_max}")));
    }
    match scheme {
        Scheme::TanhSinh => Ok(QuadratureGrid::tanh_sinh(r_max, n)),
        Scheme::GaussLegendreComposite => {
            let edges = edges_with_breaks(0.0, r_max, breaks);
            let per = allocate_panels(&edges, n.div_ceil(PANEL_ORDER));
            Ok(QuadratureGrid::from_edges(&edges, &per, PANEL_ORDER))
        }
    }
}

fn edges_with_breaks(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut e = vec![a];
    let mut bs: Vec<f64> = breaks.iter().copied().filter(|x| *x > a + 1e-12 && *x < b - 1e-12).collect();
    bs.sort_by(f64::total_cmp);
    bs.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    e.extend(bs);
    e.push(b);
    e
}

fn allocate_panels(edges: &[f64], total: usize) -> Vec<usize> {
    let len = edges.last().unwrap() - edges[0];
    edges
        .windows(2)
        .map(|w| (((w[1] - w[0]) / len) * total as f64).round().max(1.0) as usize)
        .collect()
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Real radial potential V(r) with factorization V = U v², v = |V|^{1/2}.
#[derive(Clone)]
pub struct Potential {
    pub name: String,
    f: RadialFn,
    pub scale: f64,
    /// Decay exponent metadata: |V(r)| ≲ ⟨r⟩^{−β}.
    pub beta: f64,
    /// Radii where V is nonsmooth or changes sign.
    pub breakpoints: Vec<f64>,
    /// V ≡ 0 for r > support.
    pub support: Option<f64>,
    pub closed_form: bool,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .field("beta", &self.beta)
            .field("breakpoints", &self.breakpoints)
            .field("support", &self.support)
            .finish()
    }
}

impl Potential {
    pub fn new<F>(name: &str, f: F, beta: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.to_string(), f: Arc::new(f), scale: 1.0, beta, breakpoints: vec![], support: None, closed_form: true }
    }

    pub fn with_support(mut self, a: f64) -> Self {
        self.support = Some(a);
        self.beta = f64::INFINITY;
        if a > 0.0 && !self.breakpoints.contains(&a) {
            self.breakpoints.push(a);
        }
        self
    }

    pub fn with_breakpoints(mut self, mut b: Vec<f64>) -> Self {
        if let Some(a) = self.support.filter(|a| *a > 0.0 && !b.contains(a)) {
            b.push(a);
        }
        self.breakpoints = b;
        self
    }

    pub fn zero() -> Self {
        Self::new("free", |_| 0.0, f64::INFINITY).with_support(0.0)
    }

    /// V(r) = −depth·e^{−r²/width²}.
    pub fn gaussian_well(depth: f64, width: f64) -> Self {
        Self::new("gaussian_well", move |r| -depth * (-(r * r) / (width * width)).exp(), f64::INFINITY)
    }

    /// Same shape, coupling multiplied by c.
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.scale *= c;
        p
    }

    pub fn value(&self, r: f64) -> f64 {
        if let Some(a) = self.support {
            if r > a {
                return 0.0;
            }
        }
        self.scale * (self.f)(r)
    }

    pub fn v(&self, r: f64) -> f64 {
        self.value(r).abs().sqrt()
    }

    pub fn u(&self, r: f64) -> f64 {
        // U = 1 where V ≥ 0
        if self.value(r) < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Radius beyond which |V| < 1e-30·max|V| (or the support radius).
    pub fn effective_radius(&self) -> f64 {
        if let Some(a) = self.support {
            return a;
        }
        let samples: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.05).collect();
        let vmax = samples.iter().map(|&r| self.value(r).abs()).fold(0.0, f64::max);
        let last = samples.iter().rposition(|&r| self.value(r).abs() >= 1e-30 * vmax);
        last.map_or(0.0, |k| samples[(k + 1).min(samples.len() - 1)])
    }

    /// ‖V‖₁ by composite Gauss–Legendre split at the breakpoints.
    pub fn l1_norm(&self) -> f64 {
        let reff = self.effective_radius();
        if reff <= 0.0 {
            return 0.0;
        }
        let edges = edges_with_breaks(0.0, reff, &self.breakpoints);
        let per: Vec<usize> = edges.windows(2).map(|w| ((w[1] - w[0]) * 8.0).ceil() as usize).collect();
        let g = QuadratureGrid::from_edges(&edges, &per, 24);
        g.integrate(|r| self.value(r).abs())
    }

    /// Sampled constant C in |V(r)| ≤ C⟨r⟩^{−β} over r ∈ [0, 50].
    pub fn decay_constant(&self, beta: f64) -> f64 {
        (0..=5000)
            .map(|k| {
                let r = k as f64 * 0.01;
                self.value(r).abs() * (1.0 + r * r).powf(0.5 * beta)
            })
            .fold(0.0, f64::max)
    }

    /// Decay needed for each cascade stage (regular test, first, second, third).
    pub fn stage_trusted(&self, stage: usize) -> bool {
        let need = [5.0, 7.0, 11.0, 15.0][stage.min(3)];
        self.beta > need
    }
}

/// Radial grid for a potential: n nodes on its effective support, split at its breakpoints.
pub fn grid_for_potential(potential: &Potential, n: usize) -> Result<QuadratureGrid> {
    let reff = potential.effective_radius();
    if reff <= 0.0 {
        return Err(Error::Domain("potential vanishes identically".into()));
    }
    let edges = edges_with_breaks(0.0, reff, &potential.breakpoints);
    let per = allocate_panels(&edges, n.div_ceil(PANEL_ORDER).max(edges.len() - 1));
    Ok(QuadratureGrid::from_edges(&edges, &per, PANEL_ORDER))
}

/// Nodes and plain weights for ∫_a^∞ F(r) dr through r = a/t, t ∈ (0, 1].
pub fn exterior_rule(a: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut r = Vec::new();
    let mut w = Vec::new();
    let h = 1.0 / panels as f64;
    for p in (0..panels).rev() {
        let t0 = p as f64 * h;
        for (x, wt) in gx.iter().zip(&gw).rev() {
            let t = t0 + 0.5 * h * (x + 1.0);
            r.push(a / t);
            w.push(0.5 * h * wt * a / (t * t));
        }
    }
    (r, w)
}

/// Role tag of an assembled operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Role {
    U,
    T,
    M,
    T1,
    T2,
    T3,
    Sandwich(String),
    Projection(String),
    Channel(String),
    Other(String),
}

#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub ell: usize,
    pub mat: CMat,
}

/// Dense operator, block diagonal over angular-momentum sectors.
#[derive(Clone, Debug)]
pub struct OperatorMat {
    pub role: Role,
    pub hermitian: bool,
    pub blocks: Vec<SectorBlock>,
}

impl OperatorMat {
    pub fn single(role: Role, ell: usize, mat: CMat, hermitian: bool) -> Self {
        Self { role, hermitian, blocks: vec![SectorBlock { ell, mat }] }
    }

    pub fn block(&self, ell: usize) -> Option<&CMat> {
        self.blocks.iter().find(|b| b.ell == ell).map(|b| &b.mat)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (&b.mat - b.mat.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm())))
            .fold(0.0, f64::max)
    }

    /// CSV dump with columns ell, i, j, re, im.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ell,i,j,re,im")?;
        for b in &self.blocks {
            for i in 0..b.mat.nrows() {
                for j in 0..b.mat.ncols() {
                    let z = b.mat[(i, j)];
                    writeln!(out, "{},{},{},{:.16e},{:.16e}", b.ell, i, j, z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Hilbert–Schmidt norm: Frobenius norm with each sector counted 2ℓ+1 times.
pub fn hs_norm(op: &OperatorMat) -> f64 {
    op.blocks
        .iter()
        .map(|b| QuadratureGrid::multiplicity(b.ell) as f64 * b.mat.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Spectral norm of the entrywise absolute value, maximized over sectors.
pub fn abs_bound_norm(op: &OperatorMat) -> f64 {
    op.blocks.iter().map(|b| spectral_norm_real(&b.mat.map(|z| z.norm()))).fold(0.0, f64::max)
}

pub fn operator_norm(op: &OperatorMat) -> f64 {
    op.blocks.iter().map(|b| spectral_norm(&b.mat)).fold(0.0, f64::max)
}

/// Nyström discretization restricted to the nodes where V ≠ 0.
#[derive(Clone, Debug)]
pub struct Nystrom {
    pub grid: QuadratureGrid,
    pub potential: Potential,
    /// Global grid indices of the active nodes.
    pub index: Vec<usize>,
    pub r: Vec<f64>,
    pub omega: Vec<f64>,
    pub sqrt_mu: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Panels in local (active) numbering.
    pub panels: Vec<Panel>,
}

struct PanelInterp {
    bary: Vec<f64>,
    nodes: Vec<f64>,
}

impl Nystrom {
    pub fn new(grid: QuadratureGrid, potential: Potential) -> Result<Self> {
        let mut index = Vec::new();
        let mut panels = Vec::new();
        if grid.panels.is_empty() {
            index = (0..grid.len()).filter(|&i| potential.value(grid.r[i]) != 0.0).collect();
        } else {
            for p in &grid.panels {
                let active = (p.start..p.start + p.len).any(|i| potential.value(grid.r[i]) != 0.0);
                if active {
                    panels.push(Panel { a: p.a, b: p.b, start: index.len(), len: p.len });
                    index.extend(p.start..p.start + p.len);
                }
            }
        }
        if index.is_empty() {
            return Err(Error::Domain("potential vanishes on the grid; v = 0 leaves P undefined".into()));
        }
        let r: Vec<f64> = index.iter().map(|&i| grid.r[i]).collect();
        let omega: Vec<f64> = index.iter().map(|&i| grid.omega[i]).collect();
        let sqrt_mu = r.iter().zip(&omega).map(|(r, o)| r * o.sqrt()).collect();
        let v = r.iter().map(|&x| potential.v(x)).collect();
        let u = r.iter().map(|&x| potential.u(x)).collect();
        Ok(Self { grid, potential, index, r, omega, sqrt_mu, v, u, panels })
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn sectors(&self) -> &[usize] {
        &self.grid.sectors
    }

    /// p with P = p pᵀ / pᵀp in the ℓ = 0 sector; pᵀp is the discrete ‖V‖₁.
    pub fn p_vector(&self) -> DVector<f64> {
        let c = (4.0 * PI).sqrt();
        DVector::from_iterator(self.dim(), self.sqrt_mu.iter().zip(&self.v).map(|(m, v)| c * m * v))
    }

    pub fn l1(&self) -> f64 {
        self.p_vector().norm_squared()
    }

    pub fn u_matrix(&self) -> RMat {
        RMat::from_diagonal(&DVector::from_vec(self.u.clone()))
    }

    /// Coefficients x_i = √μ_i f(r_i) of a radial profile.
    pub fn coefficients<F: Fn(f64) -> f64>(&self, f: F) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.r.iter().zip(&self.sqrt_mu).map(|(r, m)| m * f(*r)))
    }

    /// Radial profile values f(r_i) from coefficients.
    pub fn profile(&self, x: &DVector<f64>) -> Vec<f64> {
        x.iter().zip(&self.sqrt_mu).map(|(x, m)| x / m).collect()
    }

    /// Weighted moment Σ √μ_i r_i^k v_i x_i = ∫ r^k v φ r² dr.
    pub fn radial_moment(&self, x: &DVector<f64>, k: i32) -> f64 {
        (0..self.dim()).map(|i| self.sqrt_mu[i] * self.r[i].powi(k) * self.v[i] * x[i]).sum()
    }

    fn interp(&self) -> Vec<PanelInterp> {
        self.panels
            .iter()
            .map(|p| {
                let nodes: Vec<f64> = self.r[p.start..p.start + p.len].to_vec();
                let bary = (0..p.len)
                    .map(|j| {
                        let prod: f64 = (0..p.len).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
                        1.0 / prod
                    })
                    .collect();
                PanelInterp { bary, nodes }
            })
            .collect()
    }

    /// Weights W_j with ∫ red(x, s) F(s) ds ≈ Σ_j W_j F(r_j), split at s = x inside its panel.
    fn row_weights(&self, kernel: &PartialWaveKernel, x: f64, interp: &[PanelInterp], sub: &(Vec<f64>, Vec<f64>)) -> Vec<C64> {
        let n = self.dim();
        let mut w = vec![C64::new(0.0, 0.0); n];
        if self.panels.is_empty() {
            for j in 0..n {
                w[j] = kernel.eval(x, self.r[j]) * self.omega[j];
            }
            return w;
        }
        for (pi, p) in self.panels.iter().enumerate() {
            let inside = x > p.a + 1e-14 * p.b && x < p.b - 1e-14 * p.b;
            if !inside {
                for j in p.start..p.start + p.len {
                    w[j] = kernel.eval(x, self.r[j]) * self.omega[j];
                }
                continue;
            }
            let ip = &interp[pi];
            for (lo, hi) in [(p.a, x), (x, p.b)] {
                let h = 0.5 * (hi - lo);
                for (t, wt) in sub.0.iter().zip(&sub.1) {
                    let s = lo + h * (t + 1.0);
                    let kv = kernel.eval(x, s) * (h * wt);
                    let terms: Vec<f64> = ip.bary.iter().zip(&ip.nodes).map(|(b, xn)| b / (s - xn)).collect();
                    let denom: f64 = terms.iter().sum();
                    for (k, tk) in terms.iter().enumerate() {
                        w[p.start + k] += kv * (tk / denom);
                    }
                }
            }
        }
        w
    }

    /// Symmetric-basis matrix of φ ↦ v K_ℓ (v φ).
    pub fn sandwich(&self, kernel: &PartialWaveKernel) -> CMat {
        let n = self.dim();
        let interp = self.interp();
        let sub = gauss_legendre(PANEL_ORDER + 4);
        let rows: Vec<Vec<C64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let w = self.row_weights(kernel, self.r[i], &interp, &sub);
                let ci = self.sqrt_mu[i] * self.v[i] / self.r[i];
                (0..n).map(|j| w[j] * (ci * self.r[j] * self.v[j] / self.sqrt_mu[j])).collect()
            })
            .collect();
        let s = CMat::from_fn(n, n, |i, j| rows[i][j]);
        (&s + s.transpose()) * C64::new(0.5, 0.0)
    }

    pub fn sandwich_real(&self, kernel: &PartialWaveKernel) -> RMat {
        self.sandwich(kernel).map(|z| z.re)
    }

    /// Matrix E with (K_ℓ(v φ))(x_t) = Σ_j E_tj x_j for coefficient vectors x.
    pub fn eval_rows(&self, kernel: &PartialWaveKernel, targets: &[f64]) -> CMat {
        let n = self.dim();
        let interp = self.interp();
        let sub = gauss_legendre(PANEL_ORDER + 4);
        let rows: Vec<Vec<C64>> = targets
            .par_iter()
            .map(|&x| {
                // sectors ℓ ≥ 1 vanish at the origin
                if kernel.ell > 0 && x < 1e-9 {
                    return vec![C64::new(0.0, 0.0); n];
                }
                let x = x.max(1e-9);
                let w = self.row_weights(kernel, x, &interp, &sub);
                (0..n).map(|j| w[j] * (self.r[j] * self.v[j] / (x * self.sqrt_mu[j]))).collect()
            })
            .collect();
        CMat::from_fn(targets.len(), n, |i, j| rows[i][j])
    }
}

/// Sector matrix of φ ↦ v·K_ℓ·(vφ) as an operator.
pub fn assemble_sandwich(kernel: &PartialWaveKernel, grid: &QuadratureGrid, potential: &Potential) -> Result<OperatorMat> {
    if !grid.sectors.contains(&kernel.ell) {
        return Err(Error::Usage(format!("sector {} not in grid sectors {:?}", kernel.ell, grid.sectors)));
    }
    let ny = Nystrom::new(grid.clone(), potential.clone())?;
    let m = ny.sandwich(kernel);
    let herm = kernel.is_real();
    Ok(OperatorMat::single(Role::Sandwich(format!("{:?}", kernel.family)), kernel.ell, m, herm))
}
