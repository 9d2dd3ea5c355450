//! Gauss–Legendre rules, Legendre polynomials and spherical Bessel functions.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs n >= 1");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Legendre polynomial P_l(x).
pub fn legendre(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => legendre_with_derivative(l, x).0,
    }
}

/// Values j_0(x)..j_nmax(x) for x >= 0.
pub fn sph_jn_all(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    let x = x.abs();
    if x < 1e-300 {
        out[0] = 1.0;
        return out;
    }
    if x < 0.5 {
        for (n, o) in out.iter_mut().enumerate() {
            *o = sph_jn_series(n, x);
        }
        return out;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if (nmax as f64) < x {
        out[0] = j0;
        if nmax >= 1 {
            out[1] = s / (x * x) - c / x;
        }
        for n in 1..nmax {
            out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        }
        return out;
    }
    // Miller backward recurrence
    let start = nmax + 20 + (x as usize) + (4.0 * (nmax as f64 + x).sqrt()) as usize;
    let mut jp1 = 0.0;
    let mut jn = 1e-300;
    let mut tmp = vec![0.0; nmax + 1];
    for n in (0..start).rev() {
        let jm1 = (2 * n + 3) as f64 / x * jn - jp1;
        jp1 = jn;
        jn = jm1;
        if n <= nmax {
            tmp[n] = jn;
        }
        if jn.abs() > 1e250 {
            jn *= 1e-250;
            jp1 *= 1e-250;
            for t in tmp.iter_mut() {
                *t *= 1e-250;
            }
        }
    }
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() > j1.abs() || nmax == 0 {
        j0 / tmp[0]
    } else {
        j1 / tmp[1]
    };
    for n in 0..=nmax {
        out[n] = tmp[n] * scale;
    }
    out
}

fn sph_jn_series(n: usize, x: f64) -> f64 {
    let mut df = 1.0;
    for k in 0..=n {
        df *= (2 * k + 1) as f64;
    }
    let lead = x.powi(n as i32) / df;
    let z = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= z / (k as f64 * (2 * n + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// Scaled modified spherical Bessel e^{-x} i_l(x), l <= 2.
pub fn sph_in_scaled(l: usize, x: f64) -> f64 {
    if x < 0.5 {
        let mut df = 1.0;
        for k in 0..=l {
            df *= (2 * k + 1) as f64;
        }
        let z = 0.5 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            term *= z / (k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        return x.powi(l as i32) / df * sum * (-x).exp();
    }
    let e2 = (-2.0 * x).exp();
    // sinh x e^{-x} = (1 - e^{-2x})/2, cosh x e^{-x} = (1 + e^{-2x})/2
    let sh = 0.5 * (1.0 - e2);
    let ch = 0.5 * (1.0 + e2);
    match l {
        0 => sh / x,
        1 => (x * ch - sh) / (x * x),
        2 => ((x * x + 3.0) * sh - 3.0 * x * ch) / (x * x * x),
        _ => panic!("sph_in_scaled supports l <= 2"),
    }
}

/// Scaled modified spherical Bessel e^{x} k_l(x), l <= 2, with k_0 = (pi/2) e^{-x}/x.
pub fn sph_kn_scaled(l: usize, x: f64) -> f64 {
    let h = 0.5 * PI;
    match l {
        0 => h / x,
        1 => h * (x + 1.0) / (x * x),
        2 => h * (x * x + 3.0 * x + 3.0) / (x * x * x),
        _ => panic!("sph_kn_scaled supports l <= 2"),
    }
}

/// Spherical Hankel h_l^{(1)}(x) for l <= 2, x > 0.
pub fn sph_h1(l: usize, x: f64) -> num_complex::Complex64 {
    use num_complex::Complex64 as C;
    let e = C::from_polar(1.0, x);
    let i = C::i();
    match l {
        0 => -i * e / x,
        1 => -e * (x + i) / (x * x),
        2 => i * e * (x * x + 3.0 * i * x - 3.0) / (x * x * x),
        _ => panic!("sph_h1 supports l <= 2"),
    }
}
