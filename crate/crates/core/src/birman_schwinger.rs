//! M±(λ) = U + vR±(H₀,λ⁴)v, its threshold expansion and structured inversions.

use crate::error::{Error, Result};
use crate::kernels::{ExpansionCoefficients, KernelFamily, PartialWaveKernel, Sign};
use crate::linalg::{inverse, min_singular_value, orthonormalize, spectral_norm_real, sym_eigen_by_magnitude, to_complex, CMat, RMat};
use crate::quadrature::{abs_bound_norm, Nystrom, OperatorMat, Role, SectorBlock};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// λ-independent sector operators vG_kv and T = U + vG0v.
#[derive(Clone, Debug)]
pub struct SectorOps {
    pub ell: usize,
    pub t: RMat,
    pub g0: RMat,
    pub g1: RMat,
    pub g3: RMat,
    pub g4: RMat,
}

#[derive(Clone, Debug)]
pub struct ThresholdOperators {
    pub ny: Arc<Nystrom>,
    /// Discrete ‖V‖₁ = pᵀp.
    pub l1: f64,
    pub p: DVector<f64>,
    /// w with vWv = w wᵀ in ℓ = 0, W(x,y) = |x|²|y|².
    pub w: DVector<f64>,
    pub sectors: Vec<SectorOps>,
    pub coeffs: ExpansionCoefficients,
}

impl ThresholdOperators {
    pub fn new(ny: Nystrom) -> Self {
        let ny = Arc::new(ny);
        let p = ny.p_vector();
        let l1 = p.norm_squared();
        let c = (4.0 * PI).sqrt();
        let w = DVector::from_iterator(ny.dim(), (0..ny.dim()).map(|i| c * ny.sqrt_mu[i] * ny.v[i] * ny.r[i] * ny.r[i]));
        let u = ny.u_matrix();
        let sectors = ny
            .sectors()
            .iter()
            .map(|&ell| {
                let g = |f| ny.sandwich_real(&PartialWaveKernel::new(f, ell));
                let g0 = g(KernelFamily::G0);
                SectorOps { ell, t: &u + &g0, g0, g1: g(KernelFamily::G1), g3: g(KernelFamily::G3), g4: g(KernelFamily::G4) }
            })
            .collect();
        Self { ny, l1, p, w, sectors, coeffs: ExpansionCoefficients::new() }
    }

    pub fn dim(&self) -> usize {
        self.ny.dim()
    }

    pub fn sector(&self, ell: usize) -> Result<&SectorOps> {
        self.sectors.iter().find(|s| s.ell == ell).ok_or_else(|| Error::Usage(format!("sector {ell} not assembled")))
    }

    pub fn p_hat(&self) -> DVector<f64> {
        &self.p / self.l1.sqrt()
    }

    /// P in the given sector (zero outside ℓ = 0).
    pub fn p_matrix(&self, ell: usize) -> RMat {
        if ell == 0 {
            let ph = self.p_hat();
            &ph * ph.transpose()
        } else {
            RMat::zeros(self.dim(), self.dim())
        }
    }

    pub fn q_matrix(&self, ell: usize) -> RMat {
        RMat::identity(self.dim(), self.dim()) - self.p_matrix(ell)
    }

    pub fn w_matrix(&self, ell: usize) -> RMat {
        if ell == 0 {
            &self.w * self.w.transpose()
        } else {
            RMat::zeros(self.dim(), self.dim())
        }
    }

    pub fn m1(&self, sign: Sign, ell: usize) -> Result<CMat> {
        Ok(to_complex(&self.sector(ell)?.g1) * self.coeffs.a1(sign))
    }

    pub fn m3(&self, sign: Sign, ell: usize) -> Result<CMat> {
        Ok(to_complex(&self.sector(ell)?.g3) * self.coeffs.a3(sign))
    }

    pub fn m4(&self, ell: usize) -> Result<CMat> {
        Ok(to_complex(&self.sector(ell)?.g4))
    }

    /// max over sectors of ‖T‖.
    pub fn t_norm(&self) -> f64 {
        self.sectors.iter().map(|s| spectral_norm_real(&s.t)).fold(0.0, f64::max)
    }

    /// A±(λ) = (a±‖V‖₁/λ)P + T in one sector.
    pub fn a_matrix(&self, lambda: f64, sign: Sign, ell: usize) -> Result<CMat> {
        let s = self.sector(ell)?;
        let mut a = to_complex(&s.t);
        if ell == 0 {
            a += to_complex(&(&self.p * self.p.transpose())) * (self.coeffs.a(sign) / lambda);
        }
        Ok(a)
    }

    pub fn as_operator(&self, role: Role, pick: impl Fn(&SectorOps) -> &RMat) -> OperatorMat {
        OperatorMat {
            role,
            hermitian: true,
            blocks: self.sectors.iter().map(|s| SectorBlock { ell: s.ell, mat: to_complex(pick(s)) }).collect(),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive, got {lambda}")))
    }
}

/// M±(λ) in one sector.
pub fn assemble_m_sector(ops: &ThresholdOperators, lambda: f64, sign: Sign, ell: usize) -> Result<CMat> {
    check_lambda(lambda)?;
    let ny = &ops.ny;
    let tail = ny.sandwich(&PartialWaveKernel::new(KernelFamily::ResolventTail { sign, lambda, skip: 1 }, ell));
    let mut m = tail + to_complex(&ny.u_matrix());
    if ell == 0 {
        m += to_complex(&(&ops.p * ops.p.transpose())) * (ops.coeffs.a(sign) / lambda);
    }
    Ok(m)
}

/// ∂_λ M±(λ) in one sector, from the analytic kernel derivative.
pub fn assemble_dm_sector(ops: &ThresholdOperators, lambda: f64, sign: Sign, ell: usize) -> Result<CMat> {
    check_lambda(lambda)?;
    let mut d = ops.ny.sandwich(&PartialWaveKernel::new(KernelFamily::ResolventTailDerivative { sign, lambda, skip: 1 }, ell));
    if ell == 0 {
        d -= to_complex(&(&ops.p * ops.p.transpose())) * (ops.coeffs.a(sign) / (lambda * lambda));
    }
    Ok(d)
}

/// v(R± − partial sum)v in one sector; `skip` as in [`KernelFamily::ResolventTail`].
pub fn assemble_tail_sector(ops: &ThresholdOperators, lambda: f64, sign: Sign, ell: usize, skip: usize) -> Result<CMat> {
    check_lambda(lambda)?;
    Ok(ops.ny.sandwich(&PartialWaveKernel::new(KernelFamily::ResolventTail { sign, lambda, skip }, ell)))
}

/// M±(λ) over all sectors.
pub fn assemble_m(ops: &ThresholdOperators, lambda: f64, sign: Sign) -> Result<OperatorMat> {
    let blocks = ops
        .sectors
        .iter()
        .map(|s| Ok(SectorBlock { ell: s.ell, mat: assemble_m_sector(ops, lambda, sign, s.ell)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(OperatorMat { role: Role::M, hermitian: false, blocks })
}

/// Feshbach data for (A±(λ) + S₁)⁻¹ = QD₀Q + g±(λ)S in the ℓ = 0 sector.
#[derive(Clone, Debug)]
pub struct FeshbachInverse {
    /// QD₀Q with D₀ = (QTQ + S₁)⁻¹ on QL².
    pub d0: RMat,
    pub s: RMat,
    /// c = Tr(PTP − PTQD₀QTP).
    pub c: f64,
    pub l1: f64,
    pub min_sv: f64,
}

impl FeshbachInverse {
    pub fn new(ops: &ThresholdOperators, s1: &RMat, tol_inv: f64) -> Result<Self> {
        let s0 = ops.sector(0)?;
        let q = ops.q_matrix(0);
        let p = ops.p_matrix(0);
        let x = &q * &s0.t * &q + s1 + &p;
        let min_sv = min_singular_value(&to_complex(&x));
        let tnorm = spectral_norm_real(&s0.t).max(1.0);
        if min_sv <= tol_inv * tnorm {
            return Err(Error::Inversion { what: "QTQ + S1 on QL2".into(), min_sv });
        }
        let xi = x.clone().try_inverse().ok_or(Error::Inversion { what: "QTQ + S1".into(), min_sv })?;
        let d0 = &q * xi * &q;
        let t = &s0.t;
        let ptd = &p * t * &d0;
        let dtp = &d0 * t * &p;
        let s = &p - &ptd - &dtp + &d0 * t * &p * t * &d0;
        let ph = ops.p_hat();
        let tp = t * &ph;
        let c = ph.dot(&tp) - tp.dot(&(&d0 * &tp));
        Ok(Self { d0, s, c, l1: ops.l1, min_sv })
    }

    pub fn g(&self, lambda: f64, sign: Sign) -> C64 {
        let a = ExpansionCoefficients::new().a(sign);
        C64::new(1.0, 0.0) / (a * self.l1 / lambda + self.c)
    }

    pub fn inverse_at(&self, lambda: f64, sign: Sign) -> CMat {
        to_complex(&self.d0) + to_complex(&self.s) * self.g(lambda, sign)
    }

    /// ‖(A±(λ)+S₁)(QD₀Q + gS) − I‖.
    pub fn residual(&self, ops: &ThresholdOperators, lambda: f64, sign: Sign, s1: &RMat) -> Result<f64> {
        let a = ops.a_matrix(lambda, sign, 0)? + to_complex(s1);
        let prod = a * self.inverse_at(lambda, sign) - CMat::identity(ops.dim(), ops.dim());
        Ok(crate::linalg::spectral_norm(&prod))
    }

    /// c from 1/⟨p̂,(A+S₁)⁻¹p̂⟩ − a‖V‖₁/λ with a direct dense inverse.
    pub fn c_from_direct_inverse(&self, ops: &ThresholdOperators, lambda: f64, sign: Sign, s1: &RMat) -> Result<C64> {
        let a = ops.a_matrix(lambda, sign, 0)? + to_complex(s1);
        let ai = inverse(&a, "A + S1", 1e-15)?;
        let ph = ops.p_hat().map(|x| C64::new(x, 0.0));
        let g = (ph.transpose() * ai * &ph)[(0, 0)];
        Ok(C64::new(1.0, 0.0) / g - ops.coeffs.a(sign) * ops.l1 / lambda)
    }
}

/// (A±(λ)+S₁)⁻¹ by the Feshbach formula; checks the residual.
pub fn invert_a(ops: &ThresholdOperators, lambda: f64, sign: Sign, s1: &RMat, tol_inv: f64) -> Result<(FeshbachInverse, CMat)> {
    check_lambda(lambda)?;
    let f = FeshbachInverse::new(ops, s1, tol_inv)?;
    let inv = f.inverse_at(lambda, sign);
    Ok((f, inv))
}

#[derive(Clone, Debug)]
pub enum JensenNenciu {
    Inverse(CMat),
    /// B = S − S(M+S)⁻¹S is singular on SL²; `kernel` spans ker B.
    Resonance { kernel: CMat, spectrum: Vec<f64> },
}

/// M⁻¹ = (M+S)⁻¹ + (M+S)⁻¹ S B⁻¹ S (M+S)⁻¹ with B = S − S(M+S)⁻¹S; `s` an orthogonal projection.
pub fn invert_with_projection(m: &CMat, s: &RMat) -> Result<JensenNenciu> {
    let n = m.nrows();
    let ms = m + to_complex(s);
    let msi = inverse(&ms, "M + S", 1e-15)?;
    let (vals, vecs) = sym_eigen_by_magnitude(s);
    let cols: Vec<DVector<f64>> = (0..n).filter(|&k| (vals[k] - 1.0).abs() < 0.5).map(|k| vecs.column(k).into_owned()).collect();
    if cols.is_empty() {
        return Ok(JensenNenciu::Inverse(msi));
    }
    let e = to_complex(&orthonormalize(&cols, 1e-8));
    let k = e.ncols();
    let b = CMat::identity(k, k) - e.transpose() * &msi * &e;
    let sv = b.clone().singular_values();
    let smax = sv.max().max(1.0);
    if sv.min() < 1e-10 * smax {
        let svd = b.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut kern = Vec::new();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s < 1e-10 * smax {
                kern.push(&e * vt.row(i).adjoint());
            }
        }
        let kernel = CMat::from_columns(&kern);
        return Ok(JensenNenciu::Resonance { kernel, spectrum: sv.iter().copied().collect() });
    }
    let bi = inverse(&b, "B", 1e-15)?;
    Ok(JensenNenciu::Inverse(&msi + &msi * &e * bi * e.transpose() * &msi))
}

#[derive(Clone, Debug)]
pub struct PosdefReport {
    pub values: Vec<f64>,
    pub bounds: Vec<f64>,
    pub pass: bool,
}

/// Randomized check of 0 ≤ ⟨(T+S)⁻¹z, z⟩ ≤ 1/α for T = α z⟨·,z⟩ and PSD S.
pub fn verify_posdef_lemma(trials: usize, seed: u64) -> PosdefReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(trials);
    let mut bounds = Vec::with_capacity(trials);
    let mut pass = true;
    for _ in 0..trials {
        let n = rng.random_range(2..12);
        let z: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let z = &z / z.norm();
        let alpha = 10f64.powf(rng.random_range(-1.0..1.0));
        let rank = rng.random_range(n - 1..=n);
        let a = RMat::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        let s = &a * a.transpose();
        let t = &z * z.transpose() * alpha;
        let Some(inv) = (t + s).try_inverse() else { continue };
        let val = (&inv * &z).dot(&z);
        let ok = val >= -1e-10 && val <= 1.0 / alpha + 1e-10;
        pass &= ok;
        values.push(val);
        bounds.push(1.0 / alpha);
    }
    PosdefReport { values, bounds, pass }
}

/// Nested subspaces S₃ ⊆ S₂ ⊆ S₁ ⊆ QL² of one sector, as orthonormal columns.
#[derive(Clone, Debug)]
pub struct SubspaceChain {
    pub ell: usize,
    pub s1: RMat,
    pub s2: RMat,
    pub s3: RMat,
}

/// Channel split of M⁻¹(λ); the parts telescope to M⁻¹ per sector.
#[derive(Clone, Debug)]
pub struct Channels {
    pub lambda: f64,
    pub minv: Vec<(usize, CMat)>,
    pub parts: BTreeMap<String, Vec<(usize, CMat)>>,
}

pub const CHANNELS: [&str; 5] = ["S3", "S2", "S1", "Q", "remainder"];

fn proj(b: &RMat, n: usize) -> CMat {
    to_complex(&crate::linalg::projector(b, n))
}

/// Telescoping split of a sector matrix along the chain: S₃, S₂∖S₃, S₁∖S₂, Q∖S₁, remainder.
pub fn channel_split(ops: &ThresholdOperators, chain: &SubspaceChain, x: &CMat) -> Vec<(&'static str, CMat)> {
    let n = ops.dim();
    let q = to_complex(&ops.q_matrix(chain.ell));
    let (p1, p2, p3) = (proj(&chain.s1, n), proj(&chain.s2, n), proj(&chain.s3, n));
    let sand = |p: &CMat| p * x * p;
    let (x3, x2, x1, xq) = (sand(&p3), sand(&p2), sand(&p1), sand(&q));
    vec![("S3", x3.clone()), ("S2", &x2 - &x3), ("S1", &x1 - &x2), ("Q", &xq - &x1), ("remainder", x - &xq)]
}

/// Split M±(λ)⁻¹ into S₃, S₂∖S₃, S₁∖S₂, Q∖S₁ and remainder blocks.
pub fn channel_decompose_minv(ops: &ThresholdOperators, lambda: f64, sign: Sign, chains: &[SubspaceChain]) -> Result<Channels> {
    let mut minv = Vec::new();
    let mut parts: BTreeMap<String, Vec<(usize, CMat)>> = BTreeMap::new();
    for chain in chains {
        let m = assemble_m_sector(ops, lambda, sign, chain.ell)?;
        let mi = inverse(&m, "M(lambda)", 1e-17)?;
        for (name, blk) in channel_split(ops, chain, &mi) {
            parts.entry(name.to_string()).or_default().push((chain.ell, blk));
        }
        minv.push((chain.ell, mi));
    }
    Ok(Channels { lambda, minv, parts })
}

#[derive(Clone, Debug)]
pub struct EnvelopeRow {
    pub lambda: f64,
    pub channel: String,
    pub norm: f64,
    pub dnorm: f64,
}

/// Absolute-bound norms of each channel of M⁻¹ and of its λ-derivative on a λ list.
pub fn channel_envelope(ops: &ThresholdOperators, sign: Sign, chains: &[SubspaceChain], lambdas: &[f64]) -> Result<Vec<EnvelopeRow>> {
    let rows: Vec<Result<Vec<EnvelopeRow>>> = lambdas
        .par_iter()
        .map(|&lam| {
            let mut acc: BTreeMap<&'static str, (f64, f64)> = BTreeMap::new();
            for chain in chains {
                let m = assemble_m_sector(ops, lam, sign, chain.ell)?;
                let dm = assemble_dm_sector(ops, lam, sign, chain.ell)?;
                let mi = inverse(&m, "M(lambda)", 1e-17)?;
                let dmi = -(&mi * dm * &mi);
                let a = channel_split(ops, chain, &mi);
                let b = channel_split(ops, chain, &dmi);
                for ((name, x), (_, dx)) in a.into_iter().zip(b) {
                    let nx = abs_bound_norm(&OperatorMat::single(Role::Other(String::new()), chain.ell, x, false));
                    let nd = abs_bound_norm(&OperatorMat::single(Role::Other(String::new()), chain.ell, dx, false));
                    let e = acc.entry(name).or_insert((0.0, 0.0));
                    e.0 = e.0.max(nx);
                    e.1 = e.1.max(nd);
                }
            }
            Ok(CHANNELS
                .iter()
                .map(|c| {
                    let (n, d) = acc.get(c).copied().unwrap_or((0.0, 0.0));
                    EnvelopeRow { lambda: lam, channel: c.to_string(), norm: n, dnorm: d }
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Fitted envelope exponent θ of a channel and sup λ^{−θ}(‖|Γ|‖ + λ‖|∂Γ|‖).
#[derive(Clone, Debug)]
pub struct RemainderBound {
    pub theta: f64,
    pub envelope: f64,
    pub residual: f64,
}

pub fn fit_remainder_bound(rows: &[EnvelopeRow], channel: &str, lo: f64, hi: f64) -> Option<RemainderBound> {
    let sel: Vec<&EnvelopeRow> = rows.iter().filter(|r| r.channel == channel && r.lambda >= lo && r.lambda <= hi && r.norm > 0.0).collect();
    if sel.len() < 3 {
        return None;
    }
    let x: Vec<f64> = sel.iter().map(|r| r.lambda.ln()).collect();
    let y: Vec<f64> = sel.iter().map(|r| (r.norm + r.lambda * r.dnorm).ln()).collect();
    let (theta, _, _, residual) = crate::linalg::linear_fit(&x, &y);
    let envelope = sel.iter().map(|r| r.lambda.powf(-theta) * (r.norm + r.lambda * r.dnorm)).fold(0.0, f64::max);
    Some(RemainderBound { theta, envelope, residual })
}

/// λ² Taylor coefficient of M(λ) − A(λ) − λM₁ by three-level Richardson extrapolation at step h.
pub fn m2_coefficient(ops: &ThresholdOperators, sign: Sign, ell: usize, h: f64) -> Result<CMat> {
    let n = |lam: f64| -> Result<CMat> { Ok(assemble_tail_sector(ops, lam, sign, ell, 3)? / C64::new(lam * lam, 0.0)) };
    let (a, b, c) = (n(h)?, n(h / 2.0)?, n(h / 4.0)?);
    Ok((c * C64::new(8.0, 0.0) - b * C64::new(6.0, 0.0) + a) / C64::new(3.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use crate::quadrature::{grid_for_potential, Potential};

    fn well_ops(n: usize) -> ThresholdOperators {
        well_ops_depth(n, 0.1)
    }

    fn well_ops_depth(n: usize, depth: f64) -> ThresholdOperators {
        let pot = Potential::gaussian_well(depth, 1.0);
        ThresholdOperators::new(Nystrom::new(grid_for_potential(&pot, n).unwrap(), pot).unwrap())
    }

    #[test]
    fn projections_and_symmetry() {
        let ops = well_ops(64);
        let p = ops.p_matrix(0);
        let q = ops.q_matrix(0);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert!((&q * &q - &q).amax() < 1e-12);
        assert!((&p * &q).amax() < 1e-12);
        for s in &ops.sectors {
            assert!((&s.t - s.t.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn m_approaches_a_linearly() {
        let ops = well_ops(64);
        let mut prev = None;
        for k in [2, 3, 4] {
            let lam = 10f64.powi(-k);
            let m = assemble_m_sector(&ops, lam, Sign::Plus, 0).unwrap();
            let a = ops.a_matrix(lam, Sign::Plus, 0).unwrap();
            let d = spectral_norm(&(m - a));
            if let Some(p) = prev {
                let ratio: f64 = p / d;
                assert!((ratio.log10() - 1.0).abs() < 0.05, "ratio {ratio}");
            }
            prev = Some(d);
        }
        assert!(assemble_m_sector(&ops, 0.0, Sign::Plus, 0).is_err());
    }

    #[test]
    fn derivative_consistent() {
        let ops = well_ops(48);
        let lam = 0.3;
        let h = 1e-5;
        let fd = (assemble_m_sector(&ops, lam + h, Sign::Minus, 1).unwrap() - assemble_m_sector(&ops, lam - h, Sign::Minus, 1).unwrap())
            / C64::new(2.0 * h, 0.0);
        let an = assemble_dm_sector(&ops, lam, Sign::Minus, 1).unwrap();
        assert!(spectral_norm(&(fd - &an)) < 1e-6 * spectral_norm(&an));
    }

    #[test]
    fn feshbach_regular_case() {
        let ops = well_ops(64);
        let s1 = RMat::zeros(ops.dim(), ops.dim());
        for k in 1..=4 {
            let lam = 10f64.powi(-k);
            let (f, _) = invert_a(&ops, lam, Sign::Plus, &s1, 1e-6).unwrap();
            assert!(f.residual(&ops, lam, Sign::Plus, &s1).unwrap() < 1e-10);
            let c2 = f.c_from_direct_inverse(&ops, lam, Sign::Plus, &s1).unwrap();
            assert!((c2.re - f.c).abs() < 1e-8 * (1.0 + f.c.abs()) && c2.im.abs() < 1e-8 * (1.0 + f.c.abs()));
        }
        let ops = well_ops_depth(64, 1.0);
        let (f, _) = invert_a(&ops, 1e-4, Sign::Plus, &s1, 1e-6).unwrap();
        let g = f.g(1e-4, Sign::Plus);
        let asym = C64::new(1e-4, 0.0) / (ops.coeffs.a_plus * ops.l1);
        assert!(((g - asym) / asym).norm() < 1e-3);
    }

    #[test]
    fn jensen_nenciu_plain_and_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20;
        let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = to_complex(&(&a + a.transpose()));
        let JensenNenciu::Inverse(mi) = invert_with_projection(&m, &RMat::zeros(n, n)).unwrap() else { panic!() };
        assert!(spectral_norm(&(&m * mi - CMat::identity(n, n))) < 1e-12);
    }

    #[test]
    fn posdef_examples() {
        let z = DVector::from_vec(vec![0.6, 0.8]);
        let alpha = 2.5;
        let t = &z * z.transpose() * alpha;
        let val = ((t + RMat::identity(2, 2)).try_inverse().unwrap() * &z).dot(&z);
        assert!((val - 1.0 / (1.0 + alpha)).abs() < 1e-15);
        assert!(verify_posdef_lemma(100, 1).pass);
    }
}
