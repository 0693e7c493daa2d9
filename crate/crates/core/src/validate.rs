//! Property suites run by `spectral-ends validate`: monotonicity of the
//! pencil curves, the counting bound and identity, the Bessel Wronskian,
//! branch continuity, the sigma-pencil against a determinant sweep, and the
//! rectangle NtD oracle.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_2_PI, PI};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::Result;
use crate::fem::{self, InterfaceBc};
use crate::geometry::build_preset;
use crate::mesh::generate_refined;
use crate::ntd::{r0_reference, Slice};
use crate::pipeline::{default_window, prepare, run_eigen, Prepared, ProblemConfig};
use crate::solver::{pencil_sigmas, window_bounds, DEFAULT_TOL};
use crate::specfun::{bessel_jy, branch_sqrt, BranchMode};
use crate::transverse::global_basis;

const SAMPLES: usize = 20;
const SLACK: f64 = 1e-9;

/// Deliberate defects used to check that the suites can fail.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FaultInjection {
    /// Negates the square root whenever `|w| < 1`.
    pub flip_branch_sign: bool,
}

impl FaultInjection {
    fn sqrt(&self, w: C, mode: BranchMode) -> C {
        let r = branch_sqrt(w, mode);
        if self.flip_branch_sign && w.norm() < 1.0 {
            -r
        } else {
            r
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub suites: Vec<SuiteResult>,
    pub rect_oracle_max_rel_error: f64,
    pub passed: bool,
    pub seconds: f64,
}

fn suite(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> SuiteResult {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn benchmark(geometry: &str, params: &[(&str, f64)], refine: usize, lambda_max: f64) -> Result<(Prepared, usize)> {
    let params: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let cfg = ProblemConfig::new(geometry, params, refine, lambda_max)?;
    let j = default_window(geometry);
    Ok((prepare(&cfg, j)?, j))
}

fn small_benchmarks() -> Result<Vec<(String, Prepared, usize)>> {
    let mut out = Vec::new();
    let (p, j) = benchmark("bent-waveguide", &[], 2, 30.0)?;
    out.push(("bent-waveguide".to_string(), p, j));
    let (p, j) = benchmark("obstructed-strip", &[("radius", 0.3)], 2, 30.0)?;
    out.push(("obstructed-strip".to_string(), p, j));
    Ok(out)
}

/// Ascending eigenvalues of `R + T` on the active rows, with `T` built from
/// the (possibly faulty) square root.
fn sampled_sum(p: &Prepared, j: usize, lambda: f64, faults: &FaultInjection) -> Result<Vec<f64>> {
    let d = &p.data;
    let slice = Slice::active(j, d.m());
    let r = d.interior_ntd(C::new(lambda, 0.0), slice)?;
    let n = slice.len();
    let mut a = DMatrix::from_fn(n, n, |i, k| 0.5 * (r[(i, k)].re + r[(k, i)].re));
    for (i, &kappa) in d.kappa[slice.start..slice.end].iter().enumerate() {
        a[(i, i)] += faults.sqrt(C::new(kappa - lambda, 0.0), BranchMode::PositiveReal).inv().re;
    }
    let mut e: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Every eigenvalue curve of `R + T` is nondecreasing between poles.
pub fn monotonicity_suite(faults: &FaultInjection) -> Result<(bool, String)> {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (name, p, j) in small_benchmarks()? {
        let (lo, hi) = p.default_search(j);
        let hi = hi.min(window_bounds(&p.data.kappa, j).1) - 1e-6;
        let mut intervals = Vec::new();
        let mut start = lo;
        for &mu in &p.data.mu {
            let margin = 1e-6f64.max(1e-6 * mu.abs());
            if mu + margin <= start || mu - margin >= hi {
                continue;
            }
            if mu - margin > start {
                intervals.push((start, mu - margin));
            }
            start = mu + margin;
        }
        intervals.push((start, hi));
        for (a, b) in intervals {
            let mut prev: Option<Vec<f64>> = None;
            for s in 0..SAMPLES {
                let x = a + (b - a) * s as f64 / (SAMPLES - 1) as f64;
                let e = sampled_sum(&p, j, x, faults)?;
                if let Some(q) = &prev {
                    for (u, v) in q.iter().zip(&e) {
                        let drop = u - v;
                        if drop > SLACK * u.abs().max(1.0) {
                            return Ok((false, format!("{name}: eigenvalue curve decreases by {drop:.3e} near {x:.6}")));
                        }
                        worst = worst.max(drop);
                    }
                }
                prev = Some(e);
                checked += 1;
            }
        }
    }
    Ok((true, format!("{checked} samples nondecreasing (largest drop {worst:.1e})")))
}

/// Findings never exceed the counting bound, and on the rectangle the
/// negative inertia of the discrete NtD equals `#{mu < L} - #{nu < L}`.
pub fn counting_suite() -> Result<(bool, String)> {
    let mut notes = Vec::new();
    for (name, mut p, j) in small_benchmarks()? {
        let out = run_eigen(&mut p, j, None, DEFAULT_TOL)?;
        if out.findings.len() > out.k_bound {
            return Ok((false, format!("{name}: {} findings exceed K = {}", out.findings.len(), out.k_bound)));
        }
        notes.push(format!("{name} {}<={}", out.findings.len(), out.k_bound));
    }
    let g = build_preset("rect-test", &BTreeMap::new())?;
    let mesh = generate_refined(&g, g.default_h0, 2)?;
    let neumann = fem::assemble(&mesh, &g, InterfaceBc::Neumann)?;
    let dirichlet = fem::assemble(&mesh, &g, InterfaceBc::Dirichlet)?;
    // One transverse mode per free interface node makes the load matrix
    // square, so the projected NtD is congruent to the nodal one.
    let m = neumann.free_nodes().len() - dirichlet.free_nodes().len();
    let tb = global_basis(&g, m)?;
    let mu = fem::neumann_eigs(&neumann, 120.0)?.mu;
    for big_l in [5.0, 15.0, 30.0, 55.0, 80.0] {
        let (r, _) = r0_reference(&neumann, &tb, &mesh, big_l, &mu)?;
        let neg = SymmetricEigen::new(r.map(|z| z.re)).eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let nm = fem::count_below(&neumann, big_l)?;
        let nd = fem::count_below(&dirichlet, big_l)?;
        if neg + nd != nm {
            return Ok((false, format!("rect-test L = {big_l}: neg = {neg}, #mu - #nu = {nm} - {nd}")));
        }
        notes.push(format!("L={big_l}: {neg}={nm}-{nd}"));
    }
    Ok((true, notes.join(", ")))
}

/// `J_n Y_n' - J_n' Y_n = 2/(pi z)` over a complex grid.
pub fn wronskian_suite() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for re in [-40.0, -9.0, -0.7, 0.05, 0.5, 3.0, 11.0, 13.0, 30.0, 70.0] {
        for im in [-3.0, -0.5, -0.01, 0.0, 0.2, 2.0] {
            let z = C::new(re, im);
            for n in [0usize, 1, 2, 5, 10, 20] {
                let (j, y) = bessel_jy(n + 1, z)?;
                let jd = j[n] * (n as f64) / z - j[n + 1];
                let yd = y[n] * (n as f64) / z - y[n + 1];
                let want = C::new(FRAC_2_PI, 0.0) / z;
                let e = (j[n] * yd - jd * y[n] - want).norm() / want.norm();
                worst = worst.max(e);
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-9, format!("{count} points, max relative error {worst:.2e}")))
}

/// Square roots along 1000-step paths that avoid the branch points move by
/// at most a small multiple of the step.
pub fn continuity_suite(faults: &FaultInjection) -> Result<(bool, String)> {
    let kappa = PI * PI / 4.0;
    let steps = 1000;
    type Path = Box<dyn Fn(f64) -> C>;
    let paths: Vec<(&str, BranchMode, bool, Path)> = vec![
        ("positive-real below axis", BranchMode::PositiveReal, true, Box::new(|t| C::new(2.0 + t, -0.02 * (1.0 - t)))),
        ("positive-real across axis below kappa", BranchMode::PositiveReal, true, Box::new(|t| C::new(1.0 + 0.5 * t, 0.02 - 0.04 * t))),
        ("outgoing across axis above kappa", BranchMode::Outgoing, true, Box::new(|t| C::new(2.0 + t, 0.02 - 0.04 * t))),
        ("negative-imag lower half-plane", BranchMode::NegativeImag, false, Box::new(|t| C::new(0.5 + 4.0 * t, -0.3 * (1.0 - t)))),
    ];
    for (name, mode, shifted, path) in &paths {
        let mut prev: Option<C> = None;
        let mut step_max: f64 = 0.0;
        for k in 0..=steps {
            let lam = path(k as f64 / steps as f64);
            let w = if *shifted { C::new(kappa, 0.0) - lam } else { lam };
            let r = faults.sqrt(w, *mode);
            if let Some(p) = prev {
                let dl = (lam - path((k - 1) as f64 / steps as f64)).norm();
                // |d sqrt(w)| <= |dw| / (2 sqrt|w|) up to second order.
                let allowed = 4.0 * dl / (2.0 * w.norm().sqrt()) + 1e-12;
                let jump = (r - p).norm();
                step_max = step_max.max(jump);
                if jump > allowed {
                    return Ok((false, format!("{name}: jump {jump:.3e} at step {k}")));
                }
            }
            prev = Some(r);
        }
    }
    Ok((true, format!("{} paths of {steps} steps continuous", paths.len())))
}

/// Sign-change roots of `det(sigma R - diag t)` on `[lo, hi]`, refined by
/// bisection.
pub fn determinant_sweep_roots(r: &DMatrix<f64>, t: &[f64], lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let f = |s: f64| {
        let a = DMatrix::from_fn(t.len(), t.len(), |i, j| s * r[(i, j)] - if i == j { t[i] } else { 0.0 });
        a.determinant()
    };
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = lo + (hi - lo) * i as f64 / n as f64;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// `pencil_sigmas` against the determinant sweep on seeded random 6x6
/// instances.
pub fn pencil_suite() -> Result<(bool, String)> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let n = 6;
    let mut tested = 0;
    let mut worst: f64 = 0.0;
    while tested < 20 {
        let mut r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        r = &r + r.transpose();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let p = pencil_sigmas(&r, &t, n, 0.0)?;
        let bound = p.sigma.iter().fold(0.0f64, |a, s| a.max(s.abs())) * 1.1 + 1.0;
        if bound > 200.0 {
            continue;
        }
        let mut want = determinant_sweep_roots(&r, &t, -bound, bound, 40000);
        want.sort_by(|a, b| b.total_cmp(a));
        if want.len() != p.sigma.len() {
            return Ok((false, format!("instance {tested}: {} sweep roots vs {} sigmas", want.len(), p.sigma.len())));
        }
        for (a, b) in want.iter().zip(&p.sigma) {
            let e = (a - b).abs() / b.abs().max(1.0);
            worst = worst.max(e);
        }
        tested += 1;
    }
    Ok((worst <= 1e-8, format!("{tested} instances, max sigma discrepancy {worst:.2e}")))
}

/// `cosh(s) / (s sinh(s))` with `s = sqrt(kappa - lambda)`: the NtD of the
/// unit square (Neumann at `x = 0`) on the mode with threshold `kappa`.
pub fn rect_oracle(kappa: f64, lambda: f64) -> f64 {
    let s = (kappa - lambda).sqrt();
    1.0 / (s * s.tanh())
}

/// Largest relative error of the first `modes` diagonal NtD entries of the
/// rectangle against the oracle, over the given points.
pub fn rect_oracle_error(refine: usize, lambda_max: f64, accelerate: bool, lambdas: &[f64], modes: usize) -> Result<f64> {
    let mut cfg = ProblemConfig::new("rect-test", BTreeMap::new(), refine, lambda_max)?;
    cfg.m = modes;
    cfg.accelerate = accelerate;
    let p = prepare(&cfg, 0)?;
    let mut worst: f64 = 0.0;
    for &l in lambdas {
        let r = if accelerate {
            p.data.interior_ntd(C::new(l, 0.0), Slice::all(modes))?
        } else {
            p.data.interior_direct(C::new(l, 0.0), Slice::all(modes))?
        };
        for k in 0..modes {
            let want = rect_oracle(p.data.kappa[k], l);
            worst = worst.max((r[(k, k)].re - want).abs() / want.abs());
        }
    }
    Ok(worst)
}

pub const RECT_LAMBDAS: [f64; 3] = [-2.0, 0.5, 1.5];

/// Runs every suite.
pub fn run_all(faults: &FaultInjection) -> ValidationReport {
    let t = Instant::now();
    let mut rect_err = f64::NAN;
    let suites = vec![
        suite("monotonicity", || monotonicity_suite(faults)),
        suite("counting", counting_suite),
        suite("wronskian", wronskian_suite),
        suite("branch-continuity", || continuity_suite(faults)),
        suite("pencil-vs-determinant", pencil_suite),
        suite("rect-oracle", || {
            rect_err = rect_oracle_error(4, 200.0, true, &RECT_LAMBDAS, 3)?;
            Ok((rect_err <= 1e-2, format!("max relative error {rect_err:.2e} (bound 1e-2)")))
        }),
    ];
    let passed = suites.iter().all(|s| s.passed);
    ValidationReport {
        suites,
        rect_oracle_max_rel_error: rect_err,
        passed,
        seconds: t.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_values() {
        // s = 2: coth(2)/2.
        assert!((rect_oracle(4.0, 0.0) - 1.0 / (2.0 * 2.0f64.tanh())).abs() < 1e-15);
        assert!(rect_oracle(PI * PI, 1.5) > 0.0);
    }

    #[test]
    fn continuity_and_wronskian_pass_clean() {
        assert!(continuity_suite(&FaultInjection::default()).unwrap().0);
        assert!(wronskian_suite().unwrap().0);
    }

    #[test]
    fn faulty_branch_breaks_continuity_and_monotonicity() {
        let f = FaultInjection { flip_branch_sign: true };
        assert!(!continuity_suite(&f).unwrap().0);
        assert!(!monotonicity_suite(&f).unwrap().0);
    }
}
