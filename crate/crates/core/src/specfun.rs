//! Complex-argument Bessel functions of integer order, Hankel functions of
//! the first kind, and square roots with an explicitly chosen branch.

use num_complex::Complex64 as C;
use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

pub const MAX_ORDER: i32 = 60;
pub const MIN_ABS_Z: f64 = 1e-3;
pub const MAX_ABS_Z: f64 = 100.0;

/// Below this modulus power series are used; above it, Hankel asymptotics.
const SERIES_RADIUS: f64 = 12.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BranchMode {
    /// `Re sqrt(w) > 0`; on the cut (`Re = 0`) the root with `Im >= 0`.
    PositiveReal,
    /// `Im sqrt(w) < 0`; on the cut (`Im = 0`) the root with `Re >= 0`.
    NegativeImag,
    Principal,
    /// `arg sqrt(w)` in `(-3pi/4, pi/4]`: the cut runs up the positive
    /// imaginary axis of `w`. With `w = kappa - lambda` this is the physical
    /// root for `Im lambda > 0` continued across `Im lambda = 0` on both sides
    /// of `kappa` (outgoing in open channels, decaying in closed ones).
    Outgoing,
}

pub fn branch_sqrt(w: C, mode: BranchMode) -> C {
    let r = w.sqrt();
    match mode {
        BranchMode::Principal => r,
        BranchMode::PositiveReal => {
            if r.re > 0.0 {
                r
            } else if r.re < 0.0 {
                -r
            } else {
                C::new(0.0, r.im.abs())
            }
        }
        BranchMode::Outgoing => {
            if r.arg() > std::f64::consts::FRAC_PI_4 {
                -r
            } else {
                r
            }
        }
        BranchMode::NegativeImag => {
            if r.im < 0.0 {
                r
            } else if r.im > 0.0 {
                -r
            } else {
                C::new(r.re.abs(), 0.0)
            }
        }
    }
}

fn check_range(n: i32, z: C) -> Result<()> {
    if n.abs() > MAX_ORDER {
        return Err(Error::SpecialFunction(format!(
            "order {n} outside supported range |n| <= {MAX_ORDER}"
        )));
    }
    let a = z.norm();
    if !(MIN_ABS_Z..=MAX_ABS_Z).contains(&a) || !a.is_finite() {
        return Err(Error::SpecialFunction(format!(
            "argument |z| = {a:e} outside supported range [{MIN_ABS_Z}, {MAX_ABS_Z}]"
        )));
    }
    Ok(())
}

/// `J_n(z)` for `n >= 0` by the ascending series.
fn j_series(n: usize, z: C) -> C {
    let h = z * 0.5;
    let mut lead = C::new(1.0, 0.0);
    for k in 1..=n {
        lead *= h / k as f64;
    }
    let q = -(h * h);
    let mut term = lead;
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// `Y_0` and `Y_1` by their logarithmic series.
fn y01_series(z: C) -> (C, C) {
    let h = z * 0.5;
    let log = h.ln() + EULER_GAMMA;
    let q = -(h * h);
    let j0 = j_series(0, z);
    let j1 = j_series(1, z);
    // Y0 = (2/pi)[(ln(z/2) + gamma) J0 + sum_{k>=1} (-1)^{k+1} H_k (z^2/4)^k / (k!)^2]
    let mut term = C::new(1.0, 0.0);
    let mut harmonic = 0.0;
    let mut s0 = C::new(0.0, 0.0);
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        harmonic += 1.0 / k as f64;
        let add = -term * harmonic;
        s0 += add;
        if add.norm() <= 1e-17 * s0.norm() && k > 2 {
            break;
        }
    }
    let y0 = (log * j0 + s0) * FRAC_2_PI;
    // Y1 = (2/pi)(ln(z/2) + gamma) J1 - 2/(pi z)
    //      - (1/pi) sum_{k>=0} (-1)^k (H_k + H_{k+1}) (z/2)^{2k+1} / (k!(k+1)!)
    let mut term = h;
    let mut hk = 0.0;
    let mut s1 = term * (hk + 1.0);
    for k in 1..200 {
        term *= q / (k as f64 * (k + 1) as f64);
        hk += 1.0 / k as f64;
        let add = term * (2.0 * hk + 1.0 / (k + 1) as f64);
        s1 += add;
        if add.norm() <= 1e-17 * s1.norm() && k > 2 {
            break;
        }
    }
    let y1 = log * j1 * FRAC_2_PI - FRAC_2_PI / z - s1 / PI;
    (y0, y1)
}

/// Hankel asymptotic expansions of `H^(1)_nu` and `H^(2)_nu` for `nu` in
/// `{0, 1}`; valid for `|z|` large and `|arg z| < pi`.
fn hankel_asymptotic(nu: u32, z: C) -> (C, C) {
    let mu = 4.0 * (nu * nu) as f64;
    let i = C::new(0.0, 1.0);
    let mut p1 = C::new(1.0, 0.0);
    let mut p2 = C::new(1.0, 0.0);
    let mut a = C::new(1.0, 0.0);
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * 8.0) / z;
        let mag = a.norm();
        if mag > prev {
            break;
        }
        prev = mag;
        let ik = i.powi(k as i32);
        p1 += a * ik;
        p2 += a * ik.conj();
        if mag < 1e-17 {
            break;
        }
    }
    let phase = z - (nu as f64) * FRAC_PI_2 - FRAC_PI_4;
    let pre = (C::new(FRAC_2_PI, 0.0) / z).sqrt();
    (pre * (i * phase).exp() * p1, pre * (-i * phase).exp() * p2)
}

/// `(J_0, J_1, Y_0, Y_1)`.
fn base_functions(z: C) -> (C, C, C, C) {
    if z.norm() <= SERIES_RADIUS {
        let (y0, y1) = y01_series(z);
        return (j_series(0, z), j_series(1, z), y0, y1);
    }
    if z.re < 0.0 {
        // Reflection to the right half-plane.
        let w = -z;
        let (j0, j1, y0, y1) = base_functions(w);
        let s = if z.im >= 0.0 { 2.0 } else { -2.0 };
        let i2 = C::new(0.0, s);
        return (j0, -j1, y0 + i2 * j0, -(y1 + i2 * j1));
    }
    let (h10, h20) = hankel_asymptotic(0, z);
    let (h11, h21) = hankel_asymptotic(1, z);
    let i2 = C::new(0.0, 2.0);
    (
        (h10 + h20) * 0.5,
        (h11 + h21) * 0.5,
        (h10 - h20) / i2,
        (h11 - h21) / i2,
    )
}

/// `J_0..=J_nmax` at `|z| > 12` by Miller's backward recurrence, scaled to
/// match whichever of `J_0`, `J_1` is larger.
fn j_miller(nmax: usize, z: C, j0: C, j1: C) -> Vec<C> {
    let start = nmax + 20 + (z.norm() as usize) + 20;
    let mut vals = vec![C::new(0.0, 0.0); start + 2];
    vals[start + 1] = C::new(0.0, 0.0);
    vals[start] = C::new(1e-30, 0.0);
    for k in (1..=start).rev() {
        vals[k - 1] = vals[k] * (2.0 * k as f64) / z - vals[k + 1];
        if vals[k - 1].norm() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let scale = if j0.norm() >= j1.norm() {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    vals.truncate(nmax + 1);
    vals.iter().map(|v| v * scale).collect()
}

/// `J_n(z)` and `Y_n(z)` for `0 <= n <= nmax`.
pub fn bessel_jy(nmax: usize, z: C) -> Result<(Vec<C>, Vec<C>)> {
    check_range(nmax as i32, z)?;
    let (j0, j1, y0, y1) = base_functions(z);
    let j: Vec<C> = if z.norm() <= SERIES_RADIUS {
        (0..=nmax).map(|n| j_series(n, z)).collect()
    } else {
        let mut v = j_miller(nmax.max(1), z, j0, j1);
        v[0] = j0;
        v[1] = j1;
        v.truncate(nmax + 1);
        v
    };
    let mut y = vec![y0, y1];
    for n in 1..nmax {
        let next = y[n] * (2.0 * n as f64) / z - y[n - 1];
        y.push(next);
    }
    y.truncate(nmax + 1);
    Ok((j, y))
}

/// `J_n(z)` for integer `n`.
pub fn bessel_j(n: i32, z: C) -> Result<C> {
    let (j, _) = bessel_jy(n.unsigned_abs() as usize, z)?;
    let v = j[n.unsigned_abs() as usize];
    Ok(if n < 0 && n % 2 != 0 { -v } else { v })
}

/// `H^(1)_0..=H^(1)_nmax` by forward recurrence.
fn hankel_table(nmax: usize, z: C) -> Vec<C> {
    let i = C::new(0.0, 1.0);
    let (h0, h1) = if z.norm() <= SERIES_RADIUS || z.re < 0.0 {
        let (j0, j1, y0, y1) = base_functions(z);
        (j0 + i * y0, j1 + i * y1)
    } else {
        (hankel_asymptotic(0, z).0, hankel_asymptotic(1, z).0)
    };
    let mut h = vec![h0, h1];
    for n in 1..nmax {
        let next = h[n] * (2.0 * n as f64) / z - h[n - 1];
        h.push(next);
    }
    h.truncate(nmax + 1);
    h
}

/// `(H^(1)_n(z), d/dz H^(1)_n(z))`.
pub fn hankel1(n: i32, z: C) -> Result<(C, C)> {
    check_range(n, z)?;
    let m = n.unsigned_abs() as usize;
    let h = hankel_table(m + 1, z);
    let d = if m == 0 {
        -h[1]
    } else {
        h[m - 1] - h[m] * (m as f64) / z
    };
    let sign = if n < 0 && m % 2 == 1 { -1.0 } else { 1.0 };
    Ok((h[m] * sign, d * sign))
}

/// Hankel values and derivatives for orders `0..=nmax` in one pass.
pub fn hankel1_orders(nmax: usize, z: C) -> Result<Vec<(C, C)>> {
    check_range(nmax as i32, z)?;
    let h = hankel_table(nmax + 1, z);
    Ok((0..=nmax)
        .map(|m| {
            let d = if m == 0 {
                -h[1]
            } else {
                h[m - 1] - h[m] * (m as f64) / z
            };
            (h[m], d)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn h0_at_one() {
        let (h, _) = hankel1(0, c(1.0, 0.0)).unwrap();
        assert!((h.re - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!((h.im - 0.088_256_964_215_676_96).abs() < 1e-12);
    }

    #[test]
    fn reference_values_real_axis() {
        // Tabulated values.
        let (j, y) = bessel_jy(2, c(20.0, 0.0)).unwrap();
        assert!((j[0].re - 0.167_024_664_340_583).abs() < 1e-11);
        assert!((y[0].re - 0.062_640_596_809_383_9).abs() < 1e-11);
        assert!((j[1].re - 0.066_833_124_175_850_0).abs() < 1e-11);
        assert!((y[1].re + 0.165_511_614_362_521).abs() < 1e-11);
        let (j, y) = bessel_jy(5, c(5.0, 0.0)).unwrap();
        assert!((j[5].re - 0.261_140_546_120_170).abs() < 1e-11);
        assert!((y[5].re + 0.453_694_822_491_101).abs() < 1e-11);
    }

    #[test]
    fn series_and_asymptotic_agree_at_switch() {
        for th in [-1.5, -1.2, -0.6, 0.0, 0.4, 1.0, 1.5] {
            let z = C::from_polar(SERIES_RADIUS, th);
            let (j0, j1, y0, y1) = base_functions(z);
            let (h10, h20) = hankel_asymptotic(0, z);
            let (h11, h21) = hankel_asymptotic(1, z);
            let i = c(0.0, 1.0);
            for (a, b) in [(j0, (h10 + h20) * 0.5), (j1, (h11 + h21) * 0.5)] {
                assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0), "J at {z}");
            }
            for (a, b) in [(y0, (h10 - h20) / (i * 2.0)), (y1, (h11 - h21) / (i * 2.0))] {
                assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0), "Y at {z}");
            }
        }
    }

    fn wronskian_error(n: usize, z: C) -> f64 {
        let (j, y) = bessel_jy(n + 1, z).unwrap();
        // J_n' = J_{n-1} - n/z J_n written via J_n' = (n/z) J_n - J_{n+1}.
        let jd = j[n] * (n as f64) / z - j[n + 1];
        let yd = y[n] * (n as f64) / z - y[n + 1];
        let w = j[n] * yd - jd * y[n];
        let want = C::new(FRAC_2_PI, 0.0) / z;
        (w - want).norm() / want.norm()
    }

    #[test]
    fn wronskian_fixed_point() {
        for n in 0..=10 {
            assert!(wronskian_error(n, c(2.0, 0.5)) < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn wronskian_complex_grid() {
        for re in [-40.0, -9.0, -0.7, 0.01, 0.5, 3.0, 11.0, 13.0, 30.0, 70.0] {
            for im in [-3.0, -0.5, -0.01, 0.0, 0.2, 2.0] {
                let z = c(re, im);
                if z.norm() < MIN_ABS_Z {
                    continue;
                }
                for n in [0, 1, 2, 5, 10, 20] {
                    let e = wronskian_error(n, z);
                    assert!(e < 1e-9, "n = {n}, z = {z}: {e:e}");
                }
            }
        }
    }

    #[test]
    fn conjugate_symmetry_of_j() {
        for z in [c(2.0, 0.7), c(15.0, -1.5), c(-4.0, 3.0), c(40.0, 0.3)] {
            let (a, _) = bessel_jy(8, z).unwrap();
            let (b, _) = bessel_jy(8, z.conj()).unwrap();
            for n in 0..=8 {
                assert!((a[n].conj() - b[n]).norm() <= 1e-12 * a[n].norm().max(1e-300));
            }
        }
    }

    #[test]
    fn hankel_leading_asymptotic() {
        let z = C::from_polar(80.0, -0.01);
        let (h, _) = hankel1(0, z).unwrap();
        let lead = (C::new(FRAC_2_PI, 0.0) / z).sqrt() * (C::new(0.0, 1.0) * (z - FRAC_PI_4)).exp();
        // The first correction is i/(8z), about 1.6e-3 here.
        let rel = (h - lead).norm() / lead.norm();
        assert!(rel < 1.05 / (8.0 * z.norm()), "{rel}");
    }

    #[test]
    fn negative_orders_and_derivative() {
        let z = c(3.0, -0.4);
        for n in 1..6 {
            let (hp, dp) = hankel1(n, z).unwrap();
            let (hm, dm) = hankel1(-n, z).unwrap();
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((hm - hp * s).norm() < 1e-14 * hp.norm());
            assert!((dm - dp * s).norm() < 1e-14 * dp.norm());
            // Centered difference of H_n.
            let e = 1e-5;
            let fd = (hankel1(n, z + e).unwrap().0 - hankel1(n, z - e).unwrap().0) / (2.0 * e);
            assert!((fd - dp).norm() < 1e-7 * dp.norm());
        }
        let tab = hankel1_orders(6, z).unwrap();
        for n in 0..=6 {
            let (h, d) = hankel1(n as i32, z).unwrap();
            assert_eq!(tab[n], (h, d));
        }
    }

    #[test]
    fn range_enforced() {
        assert!(hankel1(61, c(1.0, 0.0)).is_err());
        assert!(hankel1(0, c(1e-4, 0.0)).is_err());
        assert!(hankel1(0, c(101.0, 0.0)).is_err());
    }

    #[test]
    fn branch_examples() {
        assert_eq!(branch_sqrt(c(4.0, 0.0), BranchMode::PositiveReal), c(2.0, 0.0));
        let r = branch_sqrt(c(-1.0, 0.0), BranchMode::NegativeImag);
        assert!((r - c(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(branch_sqrt(c(-4.0, 0.0), BranchMode::PositiveReal), c(0.0, 2.0));
        assert_eq!(branch_sqrt(c(9.0, 0.0), BranchMode::NegativeImag), c(3.0, 0.0));
        let kappa = PI * PI / 4.0;
        let r = branch_sqrt(c(kappa - 2.5, 0.01), BranchMode::PositiveReal);
        assert!(r.re > 0.0);
        // Outgoing: physical above the axis, continued through it.
        let up = branch_sqrt(c(kappa - 2.5, -0.01), BranchMode::Outgoing);
        assert!(up.re > 0.0);
        let down = branch_sqrt(c(kappa - 2.5, 0.01), BranchMode::Outgoing);
        assert!(down.re < 0.0 && (down - up).norm() < 0.2);
        assert_eq!(branch_sqrt(c(4.0, 0.0), BranchMode::Outgoing), c(2.0, 0.0));
    }

    #[test]
    fn branch_continuity_path() {
        // Closed lower half-plane, passing above the threshold and ending on
        // the real axis where the tie-break takes over.
        let kappa = PI * PI / 4.0;
        let steps = 1000;
        let paths: [(BranchMode, Box<dyn Fn(f64) -> C>); 5] = [
            (BranchMode::Outgoing, Box::new(|t| c(2.0 + t, 0.02 - 0.04 * t))),
            (BranchMode::Outgoing, Box::new(|t| c(2.6 + 3.0 * t, -0.05 + 0.1 * t))),
            (BranchMode::PositiveReal, Box::new(|t| c(2.0 + t, -0.02 * (1.0 - t)))),
            (BranchMode::PositiveReal, Box::new(|t| c(1.0 + 0.5 * t, 0.02 - 0.04 * t))),
            (BranchMode::NegativeImag, Box::new(|t| c(0.5 + 4.0 * t, -0.3 * (1.0 - t)))),
        ];
        for (mode, path) in paths.iter() {
            let mut prev: Option<C> = None;
            for k in 0..=steps {
                let lam = path(k as f64 / steps as f64);
                let w = if *mode != BranchMode::NegativeImag { c(kappa, 0.0) - lam } else { lam };
                let r = branch_sqrt(w, *mode);
                if let Some(p) = prev {
                    assert!((r - p).norm() < 0.05, "jump at step {k}");
                }
                prev = Some(r);
            }
        }
    }

    proptest! {
        #[test]
        fn branch_squares_back(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let w = c(re, im);
            for mode in [BranchMode::PositiveReal, BranchMode::NegativeImag, BranchMode::Principal, BranchMode::Outgoing] {
                let r = branch_sqrt(w, mode);
                prop_assert!((r * r - w).norm() <= 1e-15 * w.norm().max(1e-300) * 4.0);
                match mode {
                    BranchMode::PositiveReal => prop_assert!(r.re > 0.0 || (r.re == 0.0 && r.im >= 0.0)),
                    BranchMode::NegativeImag => prop_assert!(r.im < 0.0 || (r.im == 0.0 && r.re >= 0.0)),
                    BranchMode::Principal => {}
                    BranchMode::Outgoing => {
                        let a = r.arg();
                        prop_assert!(a > -0.75 * PI - 1e-12 && a <= 0.25 * PI + 1e-12);
                    }
                }
            }
        }
    }
}
