//! The threshold cascade QTQ → T₁ → T₂ → T₃, resonance functions and the zero-energy projection.

use crate::birman_schwinger::{SubspaceChain, ThresholdOperators};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, PartialWaveKernel};
use crate::linalg::{orthonormalize, spectral_norm_real, sym_eigen_by_magnitude, RMat};
use crate::quadrature::{exterior_rule, Nystrom, Potential, QuadratureGrid};
use nalgebra::DVector;
use std::f64::consts::PI;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Regular,
    First,
    Second,
    Third,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Regular => "regular",
            Kind::First => "first kind",
            Kind::Second => "second kind",
            Kind::Third => "third kind",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Kernel threshold relative to the reference norm.
    pub rank: f64,
    /// Invertibility threshold relative to the reference norm.
    pub inv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rank: 1e-8, inv: 1e-6 }
    }
}

/// Approximate kernel of a symmetric operator restricted to an ambient subspace.
#[derive(Clone, Debug)]
pub struct KernelResult {
    /// Orthonormal kernel vectors in the full coefficient space.
    pub basis: RMat,
    /// Eigenvalues of the restricted operator, ascending in magnitude.
    pub eigenvalues: Vec<f64>,
    pub reference: f64,
    /// Largest |eigenvalue| counted as kernel (0 when none).
    pub kernel_max: f64,
    /// Smallest |eigenvalue| kept as invertible part (∞ when none).
    pub invertible_min: f64,
    pub gap_ratio: f64,
    pub warning: Option<String>,
}

impl KernelResult {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Kernel of `op` on span(ambient) with threshold tol·‖op‖.
pub fn riesz_kernel(op: &RMat, ambient: &RMat, tol: f64) -> KernelResult {
    let reference = spectral_norm_real(op);
    riesz_kernel_with_reference(op, ambient, tol, reference, 1e-6)
}

/// As [`riesz_kernel`] with an explicit reference norm and invertibility threshold.
pub fn riesz_kernel_with_reference(op: &RMat, ambient: &RMat, tol: f64, reference: f64, tol_inv: f64) -> KernelResult {
    let n = op.nrows();
    let k = ambient.ncols();
    if k == 0 {
        return KernelResult {
            basis: RMat::zeros(n, 0),
            eigenvalues: vec![],
            reference,
            kernel_max: 0.0,
            invertible_min: f64::INFINITY,
            gap_ratio: 0.0,
            warning: None,
        };
    }
    let restricted = ambient.transpose() * op * ambient;
    let (vals, vecs) = sym_eigen_by_magnitude(&restricted);
    let cut = tol * reference;
    let nk = vals.iter().take_while(|v| v.abs() < cut).count();
    let basis = if nk == 0 { RMat::zeros(n, 0) } else { ambient * vecs.columns(0, nk) };
    let kernel_max = if nk == 0 { 0.0 } else { vals[nk - 1].abs() };
    let invertible_min = vals.get(nk).map_or(f64::INFINITY, |v| v.abs());
    let gap_ratio = if invertible_min.is_finite() { kernel_max / invertible_min } else { 0.0 };
    let mut warning = None;
    if gap_ratio > 0.1 {
        warning = Some(format!("ambiguous rank: gap ratio {gap_ratio:.3e}"));
    } else if invertible_min < tol_inv * reference {
        warning = Some(format!("ambiguous rank: smallest invertible eigenvalue {invertible_min:.3e} below {:.1e}·ref", tol_inv));
    }
    KernelResult { basis, eigenvalues: vals, reference, kernel_max, invertible_min, gap_ratio, warning }
}

/// Per-sector cascade data; matrices act on full coefficient vectors unless noted.
#[derive(Clone, Debug)]
pub struct SectorCascade {
    pub ell: usize,
    pub stage1: KernelResult,
    pub stage2: KernelResult,
    pub stage3: KernelResult,
    /// QD₀Q with D₀ = (QTQ + S₁)⁻¹ on QL².
    pub d0: RMat,
    /// T₁ and T₂ as full matrices (before restriction).
    pub t1_full: RMat,
    pub t2_full: RMat,
    /// T₃ = S₃vG₄vS₃ and D₃ = T₃⁻¹ in S₃ coordinates.
    pub t3: RMat,
    pub d3: RMat,
    /// (T₁ + S₂)⁻¹ in S₁ coordinates and (T₂ + S₃)⁻¹ in S₂ coordinates.
    pub d1: RMat,
    pub d2: RMat,
}

impl SectorCascade {
    pub fn s1(&self) -> &RMat {
        &self.stage1.basis
    }
    pub fn s2(&self) -> &RMat {
        &self.stage2.basis
    }
    pub fn s3(&self) -> &RMat {
        &self.stage3.basis
    }
}

#[derive(Clone, Debug)]
pub struct CascadeState {
    pub ops: ThresholdOperators,
    pub sectors: Vec<SectorCascade>,
    pub tol: Tolerances,
}

impl CascadeState {
    pub fn sector(&self, ell: usize) -> Option<&SectorCascade> {
        self.sectors.iter().find(|s| s.ell == ell)
    }

    pub fn chains(&self) -> Vec<SubspaceChain> {
        self.sectors
            .iter()
            .map(|s| SubspaceChain { ell: s.ell, s1: s.s1().clone(), s2: s.s2().clone(), s3: s.s3().clone() })
            .collect()
    }

    fn dims(&self, pick: impl Fn(&SectorCascade) -> usize) -> usize {
        self.sectors.iter().map(|s| QuadratureGrid::multiplicity(s.ell) * pick(s)).sum()
    }

    pub fn kind(&self) -> Kind {
        if self.dims(|s| s.stage3.dim()) > 0 {
            Kind::Third
        } else if self.dims(|s| s.stage2.dim()) > 0 {
            Kind::Second
        } else if self.dims(|s| s.stage1.dim()) > 0 {
            Kind::First
        } else {
            Kind::Regular
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageDiag {
    pub stage: usize,
    pub ell: usize,
    pub kernel_dim: usize,
    pub kernel_max: f64,
    pub invertible_min: f64,
    pub gap_ratio: f64,
    pub reference: f64,
}

/// Moments of one S₁ basis vector; m1 and m2_frob are Euclidean/Frobenius norms over components.
#[derive(Clone, Debug)]
pub struct MomentRow {
    pub ell: usize,
    pub index: usize,
    pub c0: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2_trace: f64,
    pub m2_frob: f64,
}

#[derive(Clone, Debug)]
pub struct ResonanceReport {
    pub kind: Kind,
    pub dim_s1: usize,
    pub dim_s2: usize,
    pub dim_s3: usize,
    pub stages: Vec<StageDiag>,
    pub moments: Vec<MomentRow>,
    /// Decay admissibility for the regular, first, second and third stages.
    pub beta_flags: [bool; 4],
    pub warnings: Vec<String>,
}

impl ResonanceReport {
    pub fn has_ambiguous_rank(&self) -> bool {
        self.warnings.iter().any(|w| w.contains("ambiguous"))
    }

    /// key: value lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += &format!("classification: {}\n", self.kind);
        s += &format!("dim_S1: {}\ndim_S2: {}\ndim_S3: {}\n", self.dim_s1, self.dim_s2, self.dim_s3);
        for d in &self.stages {
            s += &format!(
                "stage{}_l{}: kernel_dim={} kernel_max={:.16e} invertible_min={:.16e} gap_ratio={:.16e} reference={:.16e}\n",
                d.stage, d.ell, d.kernel_dim, d.kernel_max, d.invertible_min, d.gap_ratio, d.reference
            );
        }
        s += &format!(
            "beta_trusted: regular={} first={} second={} third={}\n",
            self.beta_flags[0], self.beta_flags[1], self.beta_flags[2], self.beta_flags[3]
        );
        for w in &self.warnings {
            s += &format!("warning: {w}\n");
        }
        s
    }

    pub fn moments_csv(&self) -> String {
        let mut s = String::from("ell,index,c0,m0,m1,m2_trace,m2_frob\n");
        for m in &self.moments {
            s += &format!("{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n", m.ell, m.index, m.c0, m.m0, m.m1, m.m2_trace, m.m2_frob);
        }
        s
    }
}

fn q_basis(ops: &ThresholdOperators, ell: usize) -> RMat {
    let n = ops.dim();
    if ell != 0 {
        return RMat::identity(n, n);
    }
    let ph = ops.p_hat();
    let mut cols = vec![ph.clone()];
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        cols.push(e);
    }
    let b = orthonormalize(&cols, 1e-10);
    b.columns(1, b.ncols() - 1).into_owned()
}

fn inverse_on(basis: &RMat, op: &RMat) -> RMat {
    let k = basis.ncols();
    if k == 0 {
        return RMat::zeros(0, 0);
    }
    let a = basis.transpose() * op * basis;
    a.try_inverse().unwrap_or_else(|| RMat::zeros(k, k))
}

/// ‖V‖₁/(3(8π)²).
pub fn t1_coefficient(l1: f64) -> f64 {
    l1 / (3.0 * (8.0 * PI).powi(2))
}

/// Run the cascade on assembled threshold operators.
pub fn classify_ops(ops: ThresholdOperators, tol: Tolerances) -> CascadeState {
    let n = ops.dim();
    let c1 = t1_coefficient(ops.l1);
    let tn = ops.t_norm();
    let g1n = ops.sectors.iter().map(|s| spectral_norm_real(&s.g1)).fold(0.0, f64::max);
    let g3n = ops.sectors.iter().map(|s| spectral_norm_real(&s.g3)).fold(0.0, f64::max);
    let wn = ops.w.norm_squared();
    let ref1 = tn;
    let ref2 = tn * tn + c1 * g1n;
    let ref3 = g3n + 10.0 / 3.0 * wn;
    let mut sectors = Vec::new();
    for s in &ops.sectors {
        let ell = s.ell;
        let q = ops.q_matrix(ell);
        let p = ops.p_matrix(ell);
        let qb = q_basis(&ops, ell);
        let qtq = &q * &s.t * &q;
        let stage1 = riesz_kernel_with_reference(&qtq, &qb, tol.rank, ref1, tol.inv);
        let s1p = stage1.basis.clone() * stage1.basis.transpose();
        let x = &qtq + &s1p + &p;
        let d0 = &q * x.try_inverse().unwrap_or_else(|| RMat::zeros(n, n)) * &q;
        let t1_full = &s.t * &p * &s.t - &s.g1 * c1;
        let stage2 = riesz_kernel_with_reference(&t1_full, &stage1.basis, tol.rank, ref2, tol.inv);
        let t2_full = &s.g3 + ops.w_matrix(ell) * (10.0 / 3.0);
        let stage3 = riesz_kernel_with_reference(&t2_full, &stage2.basis, tol.rank, ref3, tol.inv);
        let b3 = &stage3.basis;
        let t3 = b3.transpose() * &s.g4 * b3;
        let d3 = t3.clone().try_inverse().unwrap_or_else(|| RMat::zeros(t3.nrows(), t3.ncols()));
        let s2p = stage2.basis.clone() * stage2.basis.transpose();
        let s3p = b3.clone() * b3.transpose();
        let d1 = inverse_on(&stage1.basis, &(&t1_full + &s2p));
        let d2 = inverse_on(&stage2.basis, &(&t2_full + &s3p));
        sectors.push(SectorCascade { ell, stage1, stage2, stage3, d0, t1_full, t2_full, t3, d3, d1, d2 });
    }
    CascadeState { ops, sectors, tol }
}

/// Moments of a coefficient vector in sector ℓ.
pub fn moments(ops: &ThresholdOperators, ell: usize, x: &DVector<f64>) -> MomentRow {
    let ny = &ops.ny;
    let sq4 = (4.0 * PI).sqrt();
    let mut row = MomentRow { ell, index: 0, c0: 0.0, m0: 0.0, m1: 0.0, m2_trace: 0.0, m2_frob: 0.0 };
    match ell {
        0 => {
            let t = &ops.sector(0).expect("sector 0").t;
            row.c0 = ops.p.dot(&(t * x)) / ops.l1;
            row.m0 = sq4 * ny.radial_moment(x, 0);
            row.m2_trace = sq4 * ny.radial_moment(x, 2);
            row.m2_frob = row.m2_trace.abs() / 3f64.sqrt();
        }
        1 => row.m1 = (4.0 * PI / 3.0).sqrt() * ny.radial_moment(x, 1).abs(),
        2 => row.m2_frob = (8.0 * PI / 15.0).sqrt() * ny.radial_moment(x, 2).abs(),
        _ => {}
    }
    row
}

fn report_from_state(state: &CascadeState, potential: &Potential) -> ResonanceReport {
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    let mut mom = Vec::new();
    for s in &state.sectors {
        for (k, st) in [(1, &s.stage1), (2, &s.stage2), (3, &s.stage3)] {
            stages.push(StageDiag {
                stage: k,
                ell: s.ell,
                kernel_dim: st.dim(),
                kernel_max: st.kernel_max,
                invertible_min: st.invertible_min,
                gap_ratio: st.gap_ratio,
                reference: st.reference,
            });
            if let Some(w) = &st.warning {
                warnings.push(format!("stage {k}, l={}: {w}", s.ell));
            }
        }
        for j in 0..s.stage1.dim() {
            let mut row = moments(&state.ops, s.ell, &s.s1().column(j).into_owned());
            row.index = j;
            mom.push(row);
        }
    }
    let kind = state.kind();
    let beta_flags = [0, 1, 2, 3].map(|k| potential.stage_trusted(k));
    let needed = match kind {
        Kind::Regular => 0,
        Kind::First => 1,
        Kind::Second => 2,
        Kind::Third => 3,
    };
    if !beta_flags[needed] {
        warnings.push(format!("decay beta = {} below the hypothesis for the {} stage", potential.beta, kind));
    }
    ResonanceReport {
        kind,
        dim_s1: state.dims(|s| s.stage1.dim()),
        dim_s2: state.dims(|s| s.stage2.dim()),
        dim_s3: state.dims(|s| s.stage3.dim()),
        stages,
        moments: mom,
        beta_flags,
        warnings,
    }
}

/// Classify the threshold behaviour of a potential on a grid.
pub fn classify(potential: &Potential, grid: &QuadratureGrid, tol: Tolerances) -> Result<(ResonanceReport, CascadeState)> {
    let ny = Nystrom::new(grid.clone(), potential.clone())?;
    let state = classify_ops(ThresholdOperators::new(ny), tol);
    let report = report_from_state(&state, potential);
    Ok((report, state))
}

/// T₂ assembled from v[c|x|²|y|² + 4(x·y)²]v in one sector.
pub fn simplified_t2_kernel(ops: &ThresholdOperators, ell: usize, trace_coefficient: f64) -> RMat {
    let ny = &ops.ny;
    let w2 = DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| ny.sqrt_mu[i] * ny.v[i] * ny.r[i] * ny.r[i]));
    let factor = match ell {
        0 => trace_coefficient * 4.0 * PI + 4.0 * 4.0 * PI / 3.0,
        2 => 4.0 * 8.0 * PI / 15.0,
        _ => 0.0,
    };
    &w2 * w2.transpose() * factor
}

/// max over S₂ of |⟨T₂φ,φ⟩ − (c|∫|y|²vφ|² + 4Σ|∫y_iy_jvφ|²)| relative to the stage-3 reference norm.
pub fn t2_moment_defect(state: &CascadeState, trace_coefficient: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for s in &state.sectors {
        for j in 0..s.stage2.dim() {
            let x = s.s2().column(j).into_owned();
            let lhs = x.dot(&(&s.t2_full * &x));
            let a = state.ops.ny.radial_moment(&x, 2);
            let rhs = match s.ell {
                0 => trace_coefficient * 4.0 * PI * a * a + 4.0 * 4.0 * PI * a * a / 3.0,
                2 => 4.0 * 8.0 * PI / 15.0 * a * a,
                _ => 0.0,
            };
            let d = (lhs - rhs).abs() / s.stage3.reference;
            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
        }
    }
    worst
}

/// max over S₁ of |⟨T₁φ,φ⟩ − ‖PTφ‖² − (2‖V‖₁/(3(8π)²))|∫yvφ|²| relative to the stage-2 reference norm.
pub fn t1_decomposition_defect(state: &CascadeState) -> Option<f64> {
    let ops = &state.ops;
    let c1 = t1_coefficient(ops.l1);
    let mut worst: Option<f64> = None;
    for s in &state.sectors {
        let sec = ops.sector(s.ell).ok()?;
        for j in 0..s.stage1.dim() {
            let x = s.s1().column(j).into_owned();
            let lhs = x.dot(&(&s.t1_full * &x));
            let ptx = ops.p_matrix(s.ell) * (&sec.t * &x);
            let m1 = moments(ops, s.ell, &x).m1;
            let rhs = ptx.norm_squared() + 2.0 * c1 * m1 * m1;
            let d = (lhs - rhs).abs() / s.stage2.reference;
            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
        }
    }
    worst
}

/// Evaluation radii and weights on [0, ∞): the Nyström nodes plus a mapped exterior rule.
#[derive(Clone, Debug)]
pub struct EvalGrid {
    pub r: Vec<f64>,
    pub omega: Vec<f64>,
}

impl EvalGrid {
    pub fn new(ny: &Nystrom, exterior_panels: usize) -> Self {
        let a = ny.panels.last().map_or(ny.r[ny.dim() - 1], |p| p.b);
        let mut r = ny.r.clone();
        let mut omega = ny.omega.clone();
        let (er, ew) = exterior_rule(a, exterior_panels);
        r.extend(er);
        omega.extend(ew);
        Self { r, omega }
    }

    pub fn sqrt_mu(&self) -> Vec<f64> {
        self.r.iter().zip(&self.omega).map(|(r, o)| r * o.sqrt()).collect()
    }

    /// ∫ |f|² r² dr over the grid for a radial profile.
    pub fn norm2(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.r).zip(&self.omega).map(|((f, r), o)| f * f * r * r * o).sum()
    }
}

#[derive(Clone, Debug)]
pub struct ResonanceFunction {
    pub ell: usize,
    pub phi: DVector<f64>,
    pub c0: f64,
    /// Radii and ψ radial profile (sector normalization f(r)·Y_ℓm).
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
    /// Least-squares far-field coefficients of ψ: constant, x_i/⟨x⟩ and x_ix_j/⟨x⟩³ channels.
    pub c_const: f64,
    pub c_linear: f64,
    pub c_quadratic: f64,
    /// ∫ |ψ|² over dyadic shells [R, 2R) beyond the support.
    pub shell_norms: Vec<f64>,
    /// max_i |v_i(U_i v_i ψ_i − φ_i)| relative to max|v φ|.
    pub consistency: f64,
    /// ⟨v, φ⟩.
    pub v_overlap: f64,
}

/// ψ = c₀ − G₀vφ for φ in span S₁ of its sector.
pub fn reconstruct_psi(phi: &DVector<f64>, ell: usize, state: &CascadeState) -> Result<ResonanceFunction> {
    let s = state.sector(ell).ok_or_else(|| Error::Usage(format!("sector {ell} not in cascade")))?;
    let b = s.s1();
    let defect = (phi - b * (b.transpose() * phi)).norm() / phi.norm().max(1e-300);
    if defect > 1e-6 {
        return Err(Error::Usage(format!("phi is not in span S1 (projection defect {defect:.3e})")));
    }
    let ops = &state.ops;
    let ny = &ops.ny;
    let m = moments(ops, ell, phi);
    let c0 = if ell == 0 { m.c0 } else { 0.0 };
    let shift = if ell == 0 { c0 * (4.0 * PI).sqrt() } else { 0.0 };
    let a = ny.panels.last().map_or(ny.r[ny.dim() - 1], |p| p.b);
    let mut targets = ny.r.clone();
    let far: Vec<f64> = (0..=200).map(|k| a * 1.5 * (1.0 + k as f64 * 0.1)).collect();
    targets.extend(&far);
    let kernel = PartialWaveKernel::new(KernelFamily::G0, ell);
    let e = ny.eval_rows(&kernel, &targets).map(|z| z.re);
    let g0vphi = &e * phi;
    let psi: Vec<f64> = g0vphi.iter().map(|g| shift - g).collect();
    let nloc = ny.dim();
    let mut consistency: f64 = 0.0;
    let mut vmax: f64 = 0.0;
    for i in 0..nloc {
        let phi_i = phi[i] / ny.sqrt_mu[i];
        let d = ny.v[i] * (ny.u[i] * ny.v[i] * psi[i] - phi_i);
        consistency = consistency.max(d.abs());
        vmax = vmax.max((ny.v[i] * phi_i).abs());
    }
    // far field fit
    let sq4 = (4.0 * PI).sqrt();
    let fr = &targets[nloc..];
    let fpsi = &psi[nloc..];
    // last column of each sector absorbs the faster-decaying remainder ψ̃
    let basis: Vec<Box<dyn Fn(f64) -> f64>> = match ell {
        0 => vec![Box::new(|_| 1.0), Box::new(|r: f64| r * r / (1.0 + r * r).powf(1.5)), Box::new(|r: f64| (1.0 + r * r).powf(-1.5))],
        1 => vec![Box::new(|r: f64| r / (1.0 + r * r).sqrt()), Box::new(|r: f64| r / (1.0 + r * r).powf(1.5))],
        _ => vec![Box::new(|r: f64| r * r / (1.0 + r * r).powf(1.5)), Box::new(|r: f64| r * r / (1.0 + r * r).powf(2.5))],
    };
    let a_mat = RMat::from_fn(fr.len(), basis.len(), |i, j| basis[j](fr[i]));
    let rhs = DVector::from_column_slice(fpsi);
    let coef = a_mat.clone().svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(basis.len()));
    let (mut c_const, mut c_linear, mut c_quadratic) = (0.0, 0.0, 0.0);
    match ell {
        0 => {
            c_const = coef[0] / sq4;
            c_quadratic = coef[1] / sq4;
        }
        1 => c_linear = coef[0],
        _ => c_quadratic = coef[0],
    }
    let mut shell_norms = Vec::new();
    let mut lo = a * 1.5;
    while lo * 2.0 <= *fr.last().unwrap() + 1e-9 {
        let hi = lo * 2.0;
        let q = QuadratureGrid::from_edges(&[lo, hi], &[4], 16);
        let ev = ny.eval_rows(&kernel, &q.r).map(|z| z.re) * phi;
        let val: f64 = q.r.iter().zip(&q.omega).zip(ev.iter()).map(|((r, o), g)| (shift - g).powi(2) * r * r * o).sum();
        shell_norms.push(val);
        lo = hi;
    }
    Ok(ResonanceFunction {
        ell,
        phi: phi.clone(),
        c0,
        r: targets,
        psi,
        c_const,
        c_linear,
        c_quadratic,
        shell_norms,
        consistency: consistency / vmax.max(1e-300),
        v_overlap: if ell == 0 { m.m0 } else { 0.0 },
    })
}

#[derive(Clone, Debug)]
pub struct ZeroEnergyProjection {
    pub ell: usize,
    pub grid: EvalGrid,
    /// P₀ in the eval-grid symmetric basis (one sector copy).
    pub p0: RMat,
    /// Columns: ψ_k = −G₀vφ_k in the eval-grid basis.
    pub psis: RMat,
    /// ⟨S₃vG₄vφ_j, φ_i⟩.
    pub a: RMat,
    /// ⟨ψ_j, ψ_i⟩.
    pub gram: RMat,
    pub idempotency: f64,
    pub hermiticity: f64,
    pub fixes_psi: f64,
}

/// P₀ = G₀vS₃[S₃vG₄vS₃]⁻¹S₃vG₀ on L²([0,∞), r²dr) of the sector carrying S₃.
pub fn zero_energy_projection(state: &CascadeState, exterior_panels: usize) -> Result<ZeroEnergyProjection> {
    let s = state
        .sectors
        .iter()
        .find(|s| s.stage3.dim() > 0)
        .ok_or_else(|| Error::Usage("dim S3 = 0: no zero-energy eigenspace".into()))?;
    let ny = &state.ops.ny;
    let grid = EvalGrid::new(ny, exterior_panels);
    let sm = grid.sqrt_mu();
    let e = ny.eval_rows(&PartialWaveKernel::new(KernelFamily::G0, s.ell), &grid.r).map(|z| z.re);
    let prof = &e * s.s3();
    let psis = RMat::from_fn(prof.nrows(), prof.ncols(), |i, j| -sm[i] * prof[(i, j)]);
    let p0 = &psis * &s.d3 * psis.transpose();
    let idempotency = (&p0 * &p0 - &p0).amax() / p0.amax();
    let hermiticity = (&p0 - p0.transpose()).amax();
    let fixes_psi = (&p0 * &psis - &psis).amax() / psis.amax();
    let gram = psis.transpose() * &psis;
    Ok(ZeroEnergyProjection { ell: s.ell, grid, p0, psis, a: s.t3.clone(), gram, idempotency, hermiticity, fixes_psi })
}

#[derive(Clone, Debug)]
pub struct G4Row {
    /// ⟨vG₄vφ, φ⟩ from the assembled kernel.
    pub form: f64,
    /// ‖G₀vφ‖².
    pub g0_norm2: f64,
    /// lim ⟨(R(H₀;−λ⁴) − G₀)vφ, vφ⟩/λ⁴ by Richardson extrapolation.
    pub conjugate_limit: f64,
}

#[derive(Clone, Debug)]
pub struct G4Report {
    pub rows: Vec<G4Row>,
    /// ⟨vG₄vφ,φ⟩ < 0 for every basis vector.
    pub all_negative: bool,
    /// max |form + ‖G₀vφ‖²| / ‖G₀vφ‖².
    pub stated_identity_defect: f64,
    /// max ||form| − ‖G₀vφ‖²| / ‖G₀vφ‖².
    pub magnitude_defect: f64,
    /// max |conjugate_limit + ‖G₀vφ‖²| / ‖G₀vφ‖².
    pub conjugate_defect: f64,
}

/// Check ⟨S₃vG₄vφ,φ⟩ = −‖G₀vφ‖² on the S₃ basis by two independent routes.
pub fn verify_g4_negativity(state: &CascadeState, exterior_panels: usize) -> Result<G4Report> {
    let s = state
        .sectors
        .iter()
        .find(|s| s.stage3.dim() > 0)
        .ok_or_else(|| Error::Usage("dim S3 = 0".into()))?;
    let ny = &state.ops.ny;
    let grid = EvalGrid::new(ny, exterior_panels);
    let e = ny.eval_rows(&PartialWaveKernel::new(KernelFamily::G0, s.ell), &grid.r).map(|z| z.re);
    let h = 0.02;
    let conj = |lam: f64| ny.sandwich_real(&PartialWaveKernel::new(KernelFamily::ConjugateTail { lambda: lam, skip: 2 }, s.ell)) / lam.powi(4);
    let (c1, c2, c3) = (conj(h), conj(h / 2.0), conj(h / 4.0));
    let climit = (c3 * 8.0 - c2 * 6.0 + c1) / 3.0;
    let mut rows = Vec::new();
    for j in 0..s.stage3.dim() {
        let x = s.s3().column(j).into_owned();
        let sec = state.ops.sector(s.ell)?;
        let form = x.dot(&(&sec.g4 * &x));
        let prof: Vec<f64> = (&e * &x).iter().copied().collect();
        let g0_norm2 = grid.norm2(&prof);
        let conjugate_limit = x.dot(&(&climit * &x));
        rows.push(G4Row { form, g0_norm2, conjugate_limit });
    }
    let all_negative = rows.iter().all(|r| r.form < 0.0);
    let mx = |f: &dyn Fn(&G4Row) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(G4Report {
        stated_identity_defect: mx(&|r| (r.form + r.g0_norm2).abs() / r.g0_norm2),
        magnitude_defect: mx(&|r| (r.form.abs() - r.g0_norm2).abs() / r.g0_norm2),
        conjugate_defect: mx(&|r| (r.conjugate_limit + r.g0_norm2).abs() / r.g0_norm2),
        all_negative,
        rows,
    })
}
