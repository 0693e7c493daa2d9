//! Real eigenvalues below or between thresholds: the sigma-pencil, the
//! Neumann-minus-Dirichlet counting bound and a bisection root search on
//! pole-free subintervals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ntd::{cylinder_ntd_diag, Exterior, NtdData, Slice};
use crate::specfun::BranchMode;

pub const DEFAULT_TOL: f64 = 1e-8;
/// Heuristic threshold on the orthogonality residual for flagging a
/// candidate as embedded.
pub const EMBEDDED_THRESHOLD: f64 = 1e-3;
const AUDIT_SAMPLES: usize = 20;
const AUDIT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct PencilSpectrum {
    /// Finite sigma-eigenvalues, descending.
    pub sigma: Vec<f64>,
    /// Unit coefficient vectors matching `sigma`.
    pub vectors: Vec<DVector<f64>>,
    pub lambda: f64,
}

/// Eigenvalues of `sigma R - T` from `eta = eig(T^-1/2 R T^-1/2)`,
/// `sigma = 1/eta`; returns the `k` largest finite ones.
pub fn pencil_sigmas(r: &DMatrix<f64>, t: &[f64], k: usize, lambda: f64) -> Result<PencilSpectrum> {
    let n = t.len();
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::Solver("pencil dimensions disagree".into()));
    }
    if let Some(bad) = t.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Solver(format!("T[{bad}] = {} is not positive: lambda outside the window", t[bad])));
    }
    let isq: Vec<f64> = t.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| 0.5 * (r[(i, j)] + r[(j, i)]) * isq[i] * isq[j]);
    a.fill_lower_triangle_with_upper_triangle();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(a);
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() > 1e-14 * scale)
        .map(|i| {
            let mut c = DVector::from_fn(n, |r, _| eig.eigenvectors[(r, i)] * isq[r]);
            c.normalize_mut();
            (1.0 / eig.eigenvalues[i], c)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(k);
    Ok(PencilSpectrum {
        sigma: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        lambda,
    })
}

/// `#{mu < L2} - #{nu < L2}`, clamped at zero; the second value carries a
/// warning when clamping happened.
pub fn count_bound(mu: &[f64], nu: &[f64], lambda2: f64, lambda_max: f64) -> Result<(usize, Option<String>)> {
    if lambda2 > lambda_max {
        return Err(Error::Solver(format!("Lambda2 = {lambda2} exceeds lambda_max = {lambda_max}")));
    }
    let nm = mu.iter().filter(|&&m| m < lambda2).count() as i64;
    let nd = nu.iter().filter(|&&m| m < lambda2).count() as i64;
    if nm < nd {
        Ok((0, Some(format!("count bound {nm} - {nd} is negative (discretization artifact); using 0"))))
    } else {
        Ok(((nm - nd) as usize, None))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenFinding {
    pub lambda: f64,
    /// 1-based position of the crossing curve among the decreasing
    /// eigenvalues of `sigma T - R` (which equal the pencil's sigma at -1).
    pub sigma_index: usize,
    /// Coefficients of the Neumann data in the active transverse modes.
    pub vector: Vec<f64>,
    pub orth_residual: Option<f64>,
    pub embedded_flag: Option<bool>,
    pub window: (f64, f64),
    /// `sigma_j(lambda -+ tol)` bracket -1.
    pub certified: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SearchReport {
    pub findings: Vec<EigenFinding>,
    pub subintervals: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Pencil data at one real point of a window.
struct Window<'a> {
    data: &'a NtdData,
    j: usize,
}

impl Window<'_> {
    fn active(&self) -> Slice {
        Slice::active(self.j, self.data.m())
    }

    fn parts(&self, lambda: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let r = self.data.interior_ntd(C::new(lambda, 0.0), self.active())?;
        let n = r.nrows();
        let r = DMatrix::from_fn(n, n, |i, k| 0.5 * (r[(i, k)].re + r[(k, i)].re));
        let t = cylinder_ntd_diag(&self.data.kappa, C::new(lambda, 0.0), BranchMode::PositiveReal, self.active())?
            .iter()
            .map(|z| z.re)
            .collect();
        Ok((r, t))
    }

    /// Ascending eigenvalues (and vectors) of `R + T`.
    fn sum_eigs(&self, lambda: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
        let (mut r, t) = self.parts(lambda)?;
        for (i, v) in t.iter().enumerate() {
            r[(i, i)] += v;
        }
        let e = SymmetricEigen::new(r);
        let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
        let vals = DVector::from_iterator(idx.len(), idx.iter().map(|&i| e.eigenvalues[i]));
        let vecs = DMatrix::from_fn(idx.len(), idx.len(), |r, c| e.eigenvectors[(r, idx[c])]);
        Ok(SymmetricEigen {
            eigenvalues: vals,
            eigenvectors: vecs,
        })
    }

    fn neg(&self, lambda: f64) -> Result<usize> {
        Ok(self.sum_eigs(lambda)?.eigenvalues.iter().filter(|&&v| v < 0.0).count())
    }

    /// Ascending `eta` values of `T^-1/2 R T^-1/2`.
    fn etas(&self, lambda: f64) -> Result<Vec<f64>> {
        let (r, t) = self.parts(lambda)?;
        let isq: Vec<f64> = t.iter().map(|v| 1.0 / v.sqrt()).collect();
        let a = DMatrix::from_fn(t.len(), t.len(), |i, k| r[(i, k)] * isq[i] * isq[k]);
        let mut e: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        Ok(e)
    }
}

/// Threshold `kappa_J` with `kappa_0 = -inf`.
pub fn window_bounds(kappa: &[f64], j: usize) -> (f64, f64) {
    let lo = if j == 0 { f64::NEG_INFINITY } else { kappa[j - 1] };
    let hi = kappa.get(j).copied().unwrap_or(f64::INFINITY);
    (lo, hi)
}

fn pole_margin(mu: f64) -> f64 {
    1e-6f64.max(1e-6 * mu.abs())
}

/// Roots of `sigma_j(lambda) = -1` in `[lo, hi]` inside window `J`.
///
/// Every eigenvalue of `R + T` is nondecreasing between poles, so the number
/// of roots on a pole-free subinterval is the drop in its negative count.
pub fn find_eigenvalues(data: &NtdData, j: usize, search: (f64, f64), tol: f64, k_bound: usize) -> Result<SearchReport> {
    if data.exterior != Exterior::Cylinder {
        return Err(Error::Solver("eigenvalue search needs cylindrical ends".into()));
    }
    let m = data.m();
    if j >= m {
        return Err(Error::InvalidArgument(format!("J = {j} must be below M = {m}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let window = window_bounds(&data.kappa, j);
    let (mut lo, mut hi) = search;
    if !(lo < hi) || lo < window.0 || hi > window.1 {
        return Err(Error::InvalidArgument(format!(
            "search [{lo}, {hi}] is not inside the window [{}, {})",
            window.0, window.1
        )));
    }
    let mut report = SearchReport::default();
    if k_bound == 0 {
        return Ok(report);
    }
    let edge = |v: f64| 1e-9 * v.abs().max(1.0);
    if hi >= window.1 - edge(window.1) {
        hi = window.1 - edge(window.1);
    }
    if j > 0 && lo <= window.0 + edge(window.0) {
        lo = window.0 + edge(window.0);
    }
    let w = Window { data, j };

    // Cut out margins around interior poles.
    let poles: Vec<f64> = data.mu.iter().copied().filter(|&p| p > lo - pole_margin(p) && p < hi + pole_margin(p)).collect();
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    for &p in &poles {
        let (a, b) = (p - pole_margin(p), p + pole_margin(p));
        match cuts.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => cuts.push((a, b)),
        }
    }
    let mut start = lo;
    for &(a, b) in &cuts {
        if a > start {
            report.subintervals.push((start, a.min(hi)));
        }
        start = start.max(b);
    }
    if start < hi {
        report.subintervals.push((start, hi));
    }

    let s_scale = data.s.norm();
    let mut prev_end: Option<(f64, usize)> = None;
    for &(a, b) in &report.subintervals.clone() {
        let na = w.neg(a)?;
        let nb = w.neg(b)?;
        audit(&w, a, b)?;
        if let Some((pb, np)) = prev_end {
            // Each pole with nonzero coupling adds one negative eigenvalue.
            let jumps: usize = data
                .mu
                .iter()
                .enumerate()
                .filter(|&(_, &p)| p > pb && p < a)
                .filter(|&(i, _)| {
                    let col = data.s.view((j, i), (m - j, 1));
                    col.norm() > 1e-8 * s_scale
                })
                .count();
            if na < np + jumps {
                report.warnings.push(format!(
                    "possible eigenvalue lost inside the pole margin between {pb:.10} and {a:.10}"
                ));
            }
        }
        prev_end = Some((b, nb));
        if nb > na {
            return Err(Error::Solver(format!(
                "negative count grows from {na} to {nb} on [{a}, {b}]: monotonicity violated"
            )));
        }
        for idx in nb..na {
            let (mut x0, mut x1) = (a, b);
            while x1 - x0 > tol {
                let mid = 0.5 * (x0 + x1);
                if w.neg(mid)? > idx {
                    x0 = mid;
                } else {
                    x1 = mid;
                }
            }
            let lam = 0.5 * (x0 + x1);
            report.findings.push(finding(&w, lam, idx, tol, window, (a, b))?);
        }
    }
    report.findings.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    if report.findings.len() > k_bound {
        report.warnings.push(format!(
            "{} roots exceed the counting bound K = {k_bound}",
            report.findings.len()
        ));
    }
    Ok(report)
}

fn finding(w: &Window, lam: f64, idx: usize, tol: f64, window: (f64, f64), sub: (f64, f64)) -> Result<EigenFinding> {
    let e = w.sum_eigs(lam)?;
    let c: Vec<f64> = e.eigenvectors.column(idx).iter().copied().collect();
    // The idx-th ascending eta crosses -1 together with the idx-th eigenvalue
    // of R + T (Sylvester inertia).
    let below = w.etas((lam - tol).max(sub.0))?;
    let above = w.etas((lam + tol).min(sub.1))?;
    let certified = below[idx] < -1.0 && above[idx] >= -1.0 - 1e-12;
    // Curves are numbered by the operator pencil `sigma T - R`, whose
    // eigenvalues are the etas, in decreasing order.
    let sigma_index = below.len() - idx;
    let (orth_residual, embedded_flag) = if w.j > 0 {
        let r = orthogonality_residual(&c, w.data, lam)?;
        (Some(r), Some(r < EMBEDDED_THRESHOLD))
    } else {
        (None, None)
    };
    Ok(EigenFinding {
        lambda: lam,
        sigma_index,
        vector: c,
        orth_residual,
        embedded_flag,
        window,
        certified,
    })
}

/// Samples each eigenvalue curve of `R + T` and checks it is nondecreasing.
fn audit(w: &Window, a: f64, b: f64) -> Result<()> {
    let mut prev: Option<DVector<f64>> = None;
    for s in 0..AUDIT_SAMPLES {
        let lam = a + (b - a) * s as f64 / (AUDIT_SAMPLES - 1) as f64;
        let e = w.sum_eigs(lam)?.eigenvalues;
        if let Some(p) = &prev {
            for (i, (x, y)) in p.iter().zip(e.iter()).enumerate() {
                if *y < *x - AUDIT_SLACK * x.abs().max(1.0) {
                    return Err(Error::Solver(format!(
                        "monotonicity audit failed on curve {} near lambda = {lam}: {x} -> {y}",
                        i + 1
                    )));
                }
            }
        }
        prev = Some(e);
    }
    Ok(())
}

/// `||B c|| / ||B||_2` with `B = R[1:J, J+1:M](lambda)`, the leftover
/// coupling to the open channels; `J = M - len(c)`.
pub fn orthogonality_residual(c: &[f64], data: &NtdData, lambda: f64) -> Result<f64> {
    let j = data.m().saturating_sub(c.len());
    if j == 0 {
        return Err(Error::Solver("orthogonality residual needs J > 0".into()));
    }
    let b = data.interior_block(C::new(lambda, 0.0), Slice::passive(j), Slice::active(j, data.m()))?;
    residual_of(&b, c)
}

/// `||B c|| / (||B||_2 ||c||)`.
pub fn residual_of(b: &DMatrix<C>, c: &[f64]) -> Result<f64> {
    if b.ncols() != c.len() {
        return Err(Error::Solver("residual dimensions disagree".into()));
    }
    let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let op = b.clone().svd(false, false).singular_values.max();
    if op == 0.0 || cn == 0.0 {
        return Ok(0.0);
    }
    let cv = DVector::from_iterator(c.len(), c.iter().map(|&v| C::new(v, 0.0)));
    Ok((b * cv).norm() / (op * cn))
}
