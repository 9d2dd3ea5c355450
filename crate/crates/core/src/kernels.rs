//! Free resolvent of Δ² in ℝ³, the threshold expansion kernels and partial-wave reduction.
//!
//! Series convention: R±(λ)(ρ) = Σ_{n≥1} c_n λ^{n-2} ρ^{n-1} / (8π n!),
//! c_n = (±i)^n − (−1)^n. The n = 1, 2, 3, 5, 6 terms are a±/λ, G0, a1±λG1,
//! a3±λ³G3 and λ⁴G4; n = 4 vanishes.

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, legendre, sph_h1, sph_in_scaled, sph_jn_all, sph_kn_scaled};
use num_complex::Complex64 as C64;
use std::f64::consts::{PI, SQRT_2};

const EIGHT_PI: f64 = 8.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionCoefficients {
    pub a_plus: C64,
    pub a_minus: C64,
    pub a1_plus: C64,
    pub a1_minus: C64,
    pub a3_plus: C64,
    pub a3_minus: C64,
}

impl Default for ExpansionCoefficients {
    fn default() -> Self {
        Self::new()
    }
}

impl ExpansionCoefficients {
    pub fn new() -> Self {
        let p = C64::new(1.0, 1.0);
        let m = C64::new(1.0, -1.0);
        Self {
            a_plus: p / EIGHT_PI,
            a_minus: m / EIGHT_PI,
            a1_plus: m / (EIGHT_PI * 6.0),
            a1_minus: p / (EIGHT_PI * 6.0),
            a3_plus: p / (EIGHT_PI * 120.0),
            a3_minus: m / (EIGHT_PI * 120.0),
        }
    }

    pub fn a(&self, sign: Sign) -> C64 {
        match sign {
            Sign::Plus => self.a_plus,
            Sign::Minus => self.a_minus,
        }
    }

    pub fn a1(&self, sign: Sign) -> C64 {
        match sign {
            Sign::Plus => self.a1_plus,
            Sign::Minus => self.a1_minus,
        }
    }

    pub fn a3(&self, sign: Sign) -> C64 {
        match sign {
            Sign::Plus => self.a3_plus,
            Sign::Minus => self.a3_minus,
        }
    }
}

/// Radial kernels K(|x−y|) used by the operators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    G0,
    G1,
    G3,
    G4,
    FreeResolventPlus { lambda: f64 },
    FreeResolventMinus { lambda: f64 },
    /// Kernel of (Δ² + λ⁴)⁻¹.
    ConjugateResolvent { lambda: f64 },
    /// Σ_{n>skip} of the R± series; skip = 1 drops the pole, skip = 2 also G0, and so on.
    ResolventTail { sign: Sign, lambda: f64, skip: usize },
    /// ∂_λ of R±.
    ResolventDerivative { sign: Sign, lambda: f64 },
    /// ∂_λ of the tail with the given skip.
    ResolventTailDerivative { sign: Sign, lambda: f64, skip: usize },
    /// Conjugate-axis resolvent with its first `skip` series terms removed.
    ConjugateTail { lambda: f64, skip: usize },
}

impl KernelFamily {
    pub fn resolvent(sign: Sign, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(match sign {
            Sign::Plus => KernelFamily::FreeResolventPlus { lambda },
            Sign::Minus => KernelFamily::FreeResolventMinus { lambda },
        })
    }

    /// True when the kernel takes only real values.
    pub fn is_real(&self) -> bool {
        matches!(
            self,
            KernelFamily::G0
                | KernelFamily::G1
                | KernelFamily::G3
                | KernelFamily::G4
                | KernelFamily::ConjugateResolvent { .. }
                | KernelFamily::ConjugateTail { .. }
        )
    }

    fn oscillation(&self) -> f64 {
        match *self {
            KernelFamily::FreeResolventPlus { lambda }
            | KernelFamily::FreeResolventMinus { lambda }
            | KernelFamily::ConjugateResolvent { lambda }
            | KernelFamily::ResolventTail { lambda, .. }
            | KernelFamily::ResolventDerivative { lambda, .. }
            | KernelFamily::ResolventTailDerivative { lambda, .. }
            | KernelFamily::ConjugateTail { lambda, .. } => lambda,
            _ => 0.0,
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

fn c_n(sign: Sign, n: usize) -> C64 {
    let i_pow = match n % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, sign.value()),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -sign.value()),
    };
    let m = if n % 2 == 0 { 1.0 } else { -1.0 };
    i_pow - m
}

/// Σ_{n=from}^{∞} c_n λ^{n-2} r^{n-1}/(8π n!) and its λ-derivative.
fn resolvent_series(sign: Sign, lambda: f64, r: f64, from: usize, max_terms: usize) -> (C64, C64) {
    let mut t = 1.0 / lambda; // λ^{n-2} r^{n-1}/n! at n = 1
    let mut sum = C64::new(0.0, 0.0);
    let mut dsum = C64::new(0.0, 0.0);
    let mut n = 1;
    let mut used = 0;
    while used < max_terms {
        if n >= from {
            let c = c_n(sign, n);
            sum += c * t;
            dsum += c * (t * (n as f64 - 2.0) / lambda);
            used += 1;
            if t.abs() < 1e-18 * sum.norm() && used > 2 && n > 8 {
                break;
            }
        }
        n += 1;
        t *= lambda * r / n as f64;
        if t == 0.0 && n > from {
            break;
        }
    }
    (sum / EIGHT_PI, dsum / EIGHT_PI)
}

fn closed_resolvent(sign: Sign, lambda: f64, r: f64) -> (C64, C64) {
    let s = sign.value();
    let e = C64::from_polar(1.0, s * lambda * r);
    let d = (-lambda * r).exp();
    let f = (e - d) / (EIGHT_PI * lambda * lambda * r);
    let df = (C64::new(0.0, s) * e + d) / (EIGHT_PI * lambda * lambda) - f * (2.0 / lambda);
    (f, df)
}

/// Value of R±(H₀, λ⁴)(r).
pub fn eval_free_resolvent(sign: Sign, lambda: f64, r: f64) -> Result<C64> {
    check_lambda(lambda)?;
    if r < 0.0 {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    Ok(resolvent_value(sign, lambda, r).0)
}

/// ∂_λ R±(H₀, λ⁴)(r).
pub fn eval_free_resolvent_derivative(sign: Sign, lambda: f64, r: f64) -> Result<C64> {
    check_lambda(lambda)?;
    if r < 0.0 {
        return Err(Error::Domain(format!("r must be nonnegative, got {r}")));
    }
    Ok(resolvent_value(sign, lambda, r).1)
}

fn resolvent_value(sign: Sign, lambda: f64, r: f64) -> (C64, C64) {
    let x = lambda * r;
    if x < 1e-3 {
        let (f, _) = resolvent_series(sign, lambda, r, 1, 8);
        let (_, df) = resolvent_series(sign, lambda, r, 1, 40);
        (f, df)
    } else if x < 0.5 {
        // value is cancellation-safe here, the derivative is not
        let (f, _) = closed_resolvent(sign, lambda, r);
        let (_, df) = resolvent_series(sign, lambda, r, 1, 60);
        (f, df)
    } else {
        closed_resolvent(sign, lambda, r)
    }
}

fn tail_value(sign: Sign, lambda: f64, r: f64, skip: usize) -> (C64, C64) {
    if lambda * r < 2.0 {
        return resolvent_series(sign, lambda, r, skip + 1, 80);
    }
    let (mut f, mut df) = closed_resolvent(sign, lambda, r);
    let (p, dp) = resolvent_partial(sign, lambda, r, skip);
    f -= p;
    df -= dp;
    (f, df)
}

fn resolvent_partial(sign: Sign, lambda: f64, r: f64, upto: usize) -> (C64, C64) {
    let mut t = 1.0 / lambda;
    let mut sum = C64::new(0.0, 0.0);
    let mut dsum = C64::new(0.0, 0.0);
    for n in 1..=upto {
        if n > 1 {
            t *= lambda * r / n as f64;
        }
        let c = c_n(sign, n);
        sum += c * t;
        dsum += c * (t * (n as f64 - 2.0) / lambda);
    }
    (sum / EIGHT_PI, dsum / EIGHT_PI)
}

/// R(H₀; −λ⁴)(r) = e^{−κ} sin κ / (4πλ²r), κ = λr/√2.
fn conjugate_value(lambda: f64, r: f64, skip: usize) -> f64 {
    let kappa = lambda * r / SQRT_2;
    if skip > 0 || kappa < 1e-3 {
        if skip > 0 && kappa >= 2.0 {
            let full = (-kappa).exp() * kappa.sin() / (4.0 * PI * lambda * lambda * r);
            return full - conjugate_series(lambda, r, 1, skip);
        }
        return conjugate_series(lambda, r, skip + 1, usize::MAX);
    }
    (-kappa).exp() * kappa.sin() / (4.0 * PI * lambda * lambda * r)
}

fn conjugate_series(lambda: f64, r: f64, from: usize, to: usize) -> f64 {
    // Σ Im((−1+i)^n) (λ/√2)^n r^{n-1} / (n! 4πλ²)
    let q = lambda / SQRT_2;
    let z = C64::new(-1.0, 1.0);
    let mut zp = C64::new(1.0, 0.0);
    let mut t = q; // q^n r^{n-1}/n! at n = 1
    let mut sum = 0.0;
    let mut n = 1;
    while n <= to && n < 120 {
        zp *= z;
        if n >= from {
            let term = zp.im * t;
            sum += term;
            if n > from + 4 && term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        n += 1;
        t *= q * r / n as f64;
    }
    sum / (4.0 * PI * lambda * lambda)
}

/// Exact value of a kernel family at distance r ≥ 0.
pub fn eval_kernel(family: KernelFamily, r: f64) -> C64 {
    let re = |x: f64| C64::new(x, 0.0);
    match family {
        KernelFamily::G0 => re(-r / EIGHT_PI),
        KernelFamily::G1 => re(r * r),
        KernelFamily::G3 => re(r.powi(4)),
        KernelFamily::G4 => re(-r.powi(5) / (4.0 * PI * 720.0)),
        KernelFamily::FreeResolventPlus { lambda } => resolvent_value(Sign::Plus, lambda, r).0,
        KernelFamily::FreeResolventMinus { lambda } => resolvent_value(Sign::Minus, lambda, r).0,
        KernelFamily::ConjugateResolvent { lambda } => re(conjugate_value(lambda, r, 0)),
        KernelFamily::ResolventTail { sign, lambda, skip } => tail_value(sign, lambda, r, skip).0,
        KernelFamily::ResolventDerivative { sign, lambda } => resolvent_value(sign, lambda, r).1,
        KernelFamily::ResolventTailDerivative { sign, lambda, skip } => tail_value(sign, lambda, r, skip).1,
        KernelFamily::ConjugateTail { lambda, skip } => re(conjugate_value(lambda, r, skip)),
    }
}

/// R± minus its expansion through λ^order (order ∈ {1, 3, 4}).
pub fn expansion_remainder(sign: Sign, lambda: f64, r: f64, order: usize) -> Result<C64> {
    check_lambda(lambda)?;
    let skip = match order {
        1 => 3,
        3 => 5,
        4 => 6,
        _ => return Err(Error::Usage(format!("unsupported expansion order {order}"))),
    };
    Ok(tail_value(sign, lambda, r, skip).0)
}

/// 2πrs ∫_{-1}^{1} parent(|x−y|) P_ℓ(u) du by Gauss–Legendre, computed in the variable ρ = |x−y|.
pub fn reduce_partial_wave<F>(parent: F, ell: usize, r: f64, s: f64, gauss_order: usize) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    if ell > 4 {
        return Err(Error::Usage(format!("ell = {ell} exceeds 4")));
    }
    if gauss_order < 2 * ell + 8 {
        return Err(Error::Usage(format!("gauss_order {gauss_order} < 2·ell + 8")));
    }
    let (x, w) = gauss_legendre(gauss_order);
    Ok(reduce_with_rule(&parent, ell, r, s, &x, &w))
}

fn reduce_with_rule<F: Fn(f64) -> C64>(parent: &F, ell: usize, r: f64, s: f64, x: &[f64], w: &[f64]) -> C64 {
    let lo = (r - s).abs();
    let hi = r + s;
    if r <= 0.0 || s <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = C64::new(0.0, 0.0);
    for (xi, wi) in x.iter().zip(w) {
        let rho = mid + half * xi;
        let u = ((r * r + s * s - rho * rho) / (2.0 * r * s)).clamp(-1.0, 1.0);
        acc += parent(rho) * (wi * rho * legendre(ell, u));
    }
    acc * (2.0 * PI * half)
}

/// Sector-ℓ reduced kernel rs·k_ℓ(r, s) of a family.
#[derive(Clone, Debug)]
pub struct PartialWaveKernel {
    pub family: KernelFamily,
    pub ell: usize,
    pub gauss_order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PartialWaveKernel {
    pub fn new(family: KernelFamily, ell: usize) -> Self {
        Self::with_order(family, ell, 32)
    }

    pub fn with_order(family: KernelFamily, ell: usize, gauss_order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(gauss_order);
        Self { family, ell, gauss_order, nodes, weights }
    }

    pub fn is_real(&self) -> bool {
        self.family.is_real()
    }

    /// Reduced kernel rs·k_ℓ(r, s).
    pub fn eval(&self, r: f64, s: f64) -> C64 {
        if r <= 0.0 || s <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        if self.ell == 0 {
            match self.family {
                KernelFamily::FreeResolventPlus { lambda } => return resolvent_s_wave(Sign::Plus, lambda, r, s),
                KernelFamily::FreeResolventMinus { lambda } => return resolvent_s_wave(Sign::Minus, lambda, r, s),
                _ => {}
            }
        }
        let lam = self.family.oscillation();
        if lam * (r + s) > 8.0 && self.ell <= 2 {
            if let Some(v) = self.bessel_form(r, s) {
                return v;
            }
        }
        let span = 2.0 * r.min(s);
        let need = (8.0 + 1.5 * lam * span + 2.0 * self.ell as f64) as usize;
        let parent = |rho: f64| eval_kernel(self.family, rho);
        if need > self.gauss_order {
            let (x, w) = gauss_legendre(need.next_power_of_two());
            return reduce_with_rule(&parent, self.ell, r, s, &x, &w);
        }
        let v = reduce_with_rule(&parent, self.ell, r, s, &self.nodes, &self.weights);
        let vt = reduce_with_rule(&parent, self.ell, s, r, &self.nodes, &self.weights);
        if (v - vt).norm() > 1e-11 * v.norm().max(1e-300) {
            let (x, w) = gauss_legendre(2 * self.gauss_order);
            return reduce_with_rule(&parent, self.ell, r, s, &x, &w);
        }
        v
    }

    /// k_ℓ(r, s) without the rs factor.
    pub fn eval_k(&self, r: f64, s: f64) -> C64 {
        self.eval(r, s) / (r * s)
    }

    fn bessel_form(&self, r: f64, s: f64) -> Option<C64> {
        let (sign, lambda, deriv) = match self.family {
            KernelFamily::FreeResolventPlus { lambda } => (Sign::Plus, lambda, false),
            KernelFamily::FreeResolventMinus { lambda } => (Sign::Minus, lambda, false),
            KernelFamily::ResolventDerivative { sign, lambda } => (sign, lambda, true),
            KernelFamily::ResolventTail { sign, lambda, skip } => {
                let full = resolvent_bessel(sign, lambda, self.ell, r, s)?;
                return Some(full - self.partial_sum_wave(sign, lambda, skip, r, s));
            }
            KernelFamily::ResolventTailDerivative { sign, lambda, skip } => {
                let full = resolvent_bessel_derivative(sign, lambda, self.ell, r, s)?;
                return Some(full - self.partial_sum_wave_derivative(sign, lambda, skip, r, s));
            }
            _ => return None,
        };
        if deriv {
            resolvent_bessel_derivative(sign, lambda, self.ell, r, s)
        } else {
            resolvent_bessel(sign, lambda, self.ell, r, s)
        }
    }

    fn partial_sum_wave(&self, sign: Sign, lambda: f64, upto: usize, r: f64, s: f64) -> C64 {
        let parent = |rho: f64| resolvent_partial(sign, lambda, rho, upto).0;
        let (x, w) = gauss_legendre(self.gauss_order.max(upto + 8));
        reduce_with_rule(&parent, self.ell, r, s, &x, &w)
    }

    fn partial_sum_wave_derivative(&self, sign: Sign, lambda: f64, upto: usize, r: f64, s: f64) -> C64 {
        let parent = |rho: f64| resolvent_partial(sign, lambda, rho, upto).1;
        let (x, w) = gauss_legendre(self.gauss_order.max(upto + 8));
        reduce_with_rule(&parent, self.ell, r, s, &x, &w)
    }
}

/// rs·k_ℓ of R± via spherical Bessel functions:
/// k_ℓ = (1/(2λ²)) [iλ j_ℓ(λr<) h_ℓ(λr>) − (2λ/π) i_ℓ(λr<) k_ℓ(λr>)].
fn resolvent_bessel(sign: Sign, lambda: f64, ell: usize, r: f64, s: f64) -> Option<C64> {
    if ell > 2 {
        return None;
    }
    let (a, b) = if r < s { (r, s) } else { (s, r) };
    let xa = lambda * a;
    let xb = lambda * b;
    let j = sph_jn_all(ell, xa)[ell];
    let h = sph_h1(ell, xb);
    let ik = sph_in_scaled(ell, xa) * sph_kn_scaled(ell, xb) * (xa - xb).exp();
    let plus = (C64::new(0.0, lambda) * j * h - 2.0 * lambda / PI * ik) / (2.0 * lambda * lambda);
    let v = match sign {
        Sign::Plus => plus,
        Sign::Minus => plus.conj(),
    };
    Some(v * (r * s))
}

/// rs·k₀ of R± in closed form: [sin a·e^{ib} − sinh a·e^{−b}]/(2λ³), a = λr<, b = λr>.
fn resolvent_s_wave(sign: Sign, lambda: f64, r: f64, s: f64) -> C64 {
    let (a, b) = if r < s { (lambda * r, lambda * s) } else { (lambda * s, lambda * r) };
    let im = a.sin() * b.sin();
    let re = if b < 1.0 {
        // regroup so that the leading ab term is not a difference of O(a) numbers
        let odd_gap = |x: f64| {
            // sin x − sinh x
            let (mut term, mut sum, x4) = (x * x * x / 6.0, 0.0f64, x.powi(4));
            let mut k = 3.0;
            while term.abs() > 1e-18 * sum.abs().max(1e-300) {
                sum += term;
                term *= x4 / ((k + 1.0) * (k + 2.0) * (k + 3.0) * (k + 4.0));
                k += 4.0;
            }
            -2.0 * sum
        };
        let even_gap = |x: f64| {
            // cos x − cosh x
            let (mut term, mut sum, x4) = (x * x / 2.0, 0.0f64, x.powi(4));
            let mut k = 2.0;
            while term.abs() > 1e-18 * sum.abs().max(1e-300) {
                sum += term;
                term *= x4 / ((k + 1.0) * (k + 2.0) * (k + 3.0) * (k + 4.0));
                k += 4.0;
            }
            -2.0 * sum
        };
        odd_gap(a) * b.cos() + a.sinh() * even_gap(b) + a.sinh() * b.sinh()
    } else {
        a.sin() * b.cos() - 0.5 * ((a - b).exp() - (-a - b).exp())
    };
    let v = C64::new(re, im) / (2.0 * lambda.powi(3));
    match sign {
        Sign::Plus => v,
        Sign::Minus => v.conj(),
    }
}

fn resolvent_bessel_derivative(sign: Sign, lambda: f64, ell: usize, r: f64, s: f64) -> Option<C64> {
    // five-point stencil in λ on the closed form; only used where λ(r+s) > 8
    let h = 1e-3 * lambda;
    let f = |l: f64| resolvent_bessel(sign, l, ell, r, s);
    Some((f(lambda - 2.0 * h)? - f(lambda + 2.0 * h)? + 8.0 * (f(lambda + h)? - f(lambda - h)?)) / (12.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_wave_closed_form_matches_reduction() {
        for lambda in [1e-3, 0.05, 0.7, 3.0] {
            for (r, s) in [(0.01, 0.02), (0.5, 1.3), (2.0, 2.0), (4.0, 0.3)] {
                let k = PartialWaveKernel::new(KernelFamily::FreeResolventPlus { lambda }, 0);
                let exact = k.eval(r, s);
                let parent = |rho: f64| eval_kernel(KernelFamily::FreeResolventPlus { lambda }, rho);
                let (x, w) = gauss_legendre(64);
                let q = reduce_with_rule(&parent, 0, r, s, &x, &w);
                assert!((exact - q).norm() < 1e-11 * q.norm(), "{lambda} {r} {s}: {exact} {q}");
            }
        }
    }

    #[test]
    fn coefficient_products() {
        let c = ExpansionCoefficients::new();
        let target = 1.0 / (3.0 * EIGHT_PI * EIGHT_PI);
        for s in [Sign::Plus, Sign::Minus] {
            let p = c.a(s) * c.a1(s);
            assert!((p.re - target).abs() < 1e-17 && p.im.abs() < 1e-18);
        }
    }

    #[test]
    fn kernel_examples() {
        assert!((eval_kernel(KernelFamily::G0, 8.0 * PI).re + 1.0).abs() < 1e-15);
        assert_eq!(eval_kernel(KernelFamily::G1, 3.0).re, 9.0);
        assert!((eval_kernel(KernelFamily::G4, 1.0).re + 1.0 / (4.0 * PI * 720.0)).abs() < 1e-18);
    }

    #[test]
    fn resolvent_pole_limit() {
        let r = 0.7;
        let lam = 1e-7;
        let v = eval_free_resolvent(Sign::Plus, lam, r).unwrap() * lam;
        let a = C64::new(1.0, 1.0) / EIGHT_PI;
        assert!((v - a).norm() < 1e-7);
        let v0 = eval_free_resolvent(Sign::Plus, 0.4, 0.0).unwrap();
        assert!((v0 - a / 0.4).norm() < 1e-15);
    }

    #[test]
    fn sine_identity_at_pi() {
        let d = eval_free_resolvent(Sign::Plus, 1.0, PI).unwrap() - eval_free_resolvent(Sign::Minus, 1.0, PI).unwrap();
        assert!(d.norm() < 1e-16);
    }

    #[test]
    fn truncated_expansion_at_moderate_lambda() {
        let (lam, r) = (0.3, 0.5);
        let c = ExpansionCoefficients::new();
        let g = |f| eval_kernel(f, r);
        let partial = c.a_plus / lam
            + g(KernelFamily::G0)
            + c.a1_plus * lam * g(KernelFamily::G1)
            + c.a3_plus * lam.powi(3) * g(KernelFamily::G3)
            + lam.powi(4) * g(KernelFamily::G4);
        let direct = closed_resolvent(Sign::Plus, lam, r).0;
        let bound = lam.powi(5) * r.powi(6) / EIGHT_PI / 5040.0 * 2.0;
        assert!((direct - partial).norm() <= bound);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &(lam, r) in &[(0.2, 0.001), (0.5, 0.7), (1.0, 3.0), (0.1, 50.0)] {
            for s in [Sign::Plus, Sign::Minus] {
                let h = 1e-5;
                let fd = (eval_free_resolvent(s, lam + h, r).unwrap() - eval_free_resolvent(s, lam - h, r).unwrap())
                    / (2.0 * h);
                let an = eval_free_resolvent_derivative(s, lam, r).unwrap();
                assert!((fd - an).norm() < 1e-6 * an.norm(), "{lam} {r} {fd} {an}");
            }
        }
    }

    #[test]
    fn remainder_orders() {
        assert!(expansion_remainder(Sign::Plus, 0.1, 1.0, 2).is_err());
        let r1 = expansion_remainder(Sign::Plus, 1e-2, 1.0, 4).unwrap();
        let lead = c_n(Sign::Plus, 7) * 1e-10 / (EIGHT_PI * 5040.0);
        assert!((r1 - lead).norm() < 1e-3 * lead.norm());
    }

    #[test]
    fn conjugate_expansion() {
        let lam = 1e-2;
        let r = 1.3;
        let v = eval_kernel(KernelFamily::ConjugateResolvent { lambda: lam }, r).re;
        let s = SQRT_2 / (EIGHT_PI * lam) - r / EIGHT_PI + SQRT_2 * lam * r * r / (48.0 * PI)
            - SQRT_2 * lam.powi(3) * r.powi(4) / (960.0 * PI)
            + lam.powi(4) * r.powi(5) / (2880.0 * PI);
        assert!((v - s).abs() < 1e-12);
        let t = eval_kernel(KernelFamily::ConjugateTail { lambda: 0.5, skip: 2 }, 9.0).re;
        let full = eval_kernel(KernelFamily::ConjugateResolvent { lambda: 0.5 }, 9.0).re;
        assert!((t - (full - SQRT_2 / (EIGHT_PI * 0.5) + 9.0 / EIGHT_PI)).abs() < 1e-13);
    }

    #[test]
    fn partial_wave_examples() {
        let g1 = |r| eval_kernel(KernelFamily::G1, r);
        for &(r, s) in &[(0.3, 1.7), (2.0, 2.0), (5.0, 0.1)] {
            assert!(reduce_partial_wave(g1, 2, r, s, 32).unwrap().norm() < 1e-12);
        }
        let g0 = |r| eval_kernel(KernelFamily::G0, r);
        let v = reduce_partial_wave(g0, 0, 1.0, 1.0, 32).unwrap();
        assert!((v.re + 2.0 / 3.0).abs() < 1e-14);
        assert!(reduce_partial_wave(g0, 5, 1.0, 1.0, 32).is_err());
        assert!(reduce_partial_wave(g0, 2, 1.0, 1.0, 11).is_err());
    }

    #[test]
    fn g0_partial_waves_closed_form() {
        for ell in 0..=3usize {
            let k = PartialWaveKernel::new(KernelFamily::G0, ell);
            for &(r, s) in &[(0.4f64, 1.1f64), (2.5, 0.3), (1.0, 1.0)] {
                let (a, b) = if r < s { (r, s) } else { (s, r) };
                let l = ell as f64;
                let exact = -(1.0 / (2.0 * (2.0 * l + 1.0)))
                    * (a.powf(l + 2.0) / ((2.0 * l + 3.0) * b.powf(l + 1.0)) - a.powf(l) / ((2.0 * l - 1.0) * b.powf(l - 1.0)));
                assert!((k.eval_k(r, s).re - exact).abs() < 1e-13, "ell {ell} r {r} s {s}");
            }
        }
    }

    #[test]
    fn bessel_form_matches_quadrature() {
        for ell in 0..=2usize {
            for &(lam, r, s) in &[(3.0, 1.5, 2.0), (2.0, 0.2, 5.0), (10.0, 0.9, 1.0)] {
                let k = PartialWaveKernel::new(KernelFamily::FreeResolventPlus { lambda: lam }, ell);
                let b = k.eval(r, s);
                let parent = |rho| eval_kernel(KernelFamily::FreeResolventPlus { lambda: lam }, rho);
                let (x, w) = gauss_legendre(256);
                let q = reduce_with_rule(&parent, ell, r, s, &x, &w);
                assert!((b - q).norm() < 1e-11 * (1.0 + q.norm()), "ell {ell} lam {lam}: {b} vs {q}");
            }
        }
    }
}
