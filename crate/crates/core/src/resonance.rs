//! Complex continuation: the resonance matrix, condition-number and
//! determinant scans over grids in the lower half-plane, and zooming onto
//! local maxima.

use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ntd::{Exterior, NtdData, Slice};

pub const DEFAULT_RE_COUNT: usize = 101;
pub const DEFAULT_IM_COUNT: usize = 51;
pub const DEFAULT_LEVELS: usize = 3;
/// Grid nodes closer than this (relative) to a pole or branch point move.
const NUDGE_TRIGGER: f64 = 1e-9;
const NUDGE: f64 = 1e-6;
/// Resonances with `|Im| > FAR_FROM_AXIS |Re|` get the instability warning.
pub const FAR_FROM_AXIS: f64 = 1e-2;
const MAX_SHIFTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("axis {lo}:{hi}:{count} needs lo < hi and count >= 2")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + self.spacing() * i as f64
        }
    }

    /// Same count over `[c - 1.5 h, c + 1.5 h]` for spacing `h`.
    fn zoom(&self, c: f64) -> Self {
        let half = 1.5 * self.spacing();
        Self {
            lo: c - half,
            hi: c + half,
            count: self.count,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `lo:hi:n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("grid axis `{s}` is not lo:hi:n"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Axis::new(lo, hi, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub re: Axis,
    pub im: Axis,
}

impl GridSpec {
    pub fn new(re: Axis, im: Axis) -> Result<Self> {
        if im.hi > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grid reaches Im = {} > 0; scans stay in the lower half-plane",
                im.hi
            )));
        }
        Ok(Self { re, im })
    }

    pub fn node(&self, i_re: usize, i_im: usize) -> C {
        C::new(self.re.at(i_re), self.im.at(i_im))
    }

    fn len(&self) -> usize {
        self.re.count * self.im.count
    }

    /// Zoomed grid around `c`, pushed down if it would cross the real axis.
    fn zoom(&self, c: C) -> Self {
        let re = self.re.zoom(c.re);
        let mut im = self.im.zoom(c.im);
        if im.hi > 0.0 {
            im.lo -= im.hi;
            im.hi = 0.0;
        }
        Self { re, im }
    }

    fn contains(&self, z: C) -> bool {
        let tol = 1e-12 * z.norm().max(1.0);
        z.re >= self.re.lo - tol && z.re <= self.re.hi + tol && z.im >= self.im.lo - tol && z.im <= self.im.hi + tol
    }
}

/// Per-node diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NodeValue {
    /// Point actually evaluated (after any nudge).
    pub lambda: C,
    pub cond: f64,
    pub logabsdet: f64,
    pub valid: bool,
    pub nudged: bool,
}

/// Condition numbers and determinants, row-major with one row per `Im`
/// value.
#[derive(Clone, Debug, Serialize)]
pub struct ScanGrid {
    pub spec: GridSpec,
    pub values: Vec<NodeValue>,
}

impl ScanGrid {
    pub fn get(&self, i_re: usize, i_im: usize) -> &NodeValue {
        &self.values[i_im * self.spec.re.count + i_re]
    }

    pub fn invalid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.valid).count()
    }

    pub fn nudged_count(&self) -> usize {
        self.values.iter().filter(|v| v.nudged).count()
    }

    /// CSV with header `re,im,cond,logabsdet`; invalid nodes print `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,cond,logabsdet\n");
        for i_im in 0..self.spec.im.count {
            for i_re in 0..self.spec.re.count {
                let z = self.spec.node(i_re, i_im);
                let v = self.get(i_re, i_im);
                let (c, l) = if v.valid { (v.cond, v.logabsdet) } else { (f64::NAN, f64::NAN) };
                out.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}\n", z.re, z.im, c, l));
            }
        }
        out
    }

    fn neighbours(&self, i_re: usize, i_im: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nr, ni) = (self.spec.re.count as isize, self.spec.im.count as isize);
        (-1isize..=1)
            .flat_map(move |di| (-1isize..=1).map(move |dr| (dr, di)))
            .filter(|&(dr, di)| dr != 0 || di != 0)
            .map(move |(dr, di)| (i_re as isize + dr, i_im as isize + di))
            .filter(move |&(r, i)| r >= 0 && r < nr && i >= 0 && i < ni)
            .map(|(r, i)| (r as usize, i as usize))
    }

    /// Valid nodes whose condition number strictly exceeds every valid
    /// neighbour, in row-major order. Nodes on the grid edge are skipped
    /// (their neighbourhood is incomplete) except on a top row lying on the
    /// real axis.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i_im in 0..self.spec.im.count {
            for i_re in 0..self.spec.re.count {
                let v = self.get(i_re, i_im);
                if !v.valid || self.on_open_boundary(i_re, i_im) {
                    continue;
                }
                let mut any = false;
                let top = self.neighbours(i_re, i_im).all(|(r, i)| {
                    let n = self.get(r, i);
                    any |= n.valid;
                    !n.valid || v.cond > n.cond
                });
                if top && any {
                    out.push((i_re, i_im));
                }
            }
        }
        out
    }

    fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for i_im in 0..self.spec.im.count {
            for i_re in 0..self.spec.re.count {
                let v = self.get(i_re, i_im);
                if v.valid && best.is_none_or(|(_, c)| v.cond > c) {
                    best = Some(((i_re, i_im), v.cond));
                }
            }
        }
        best.map(|b| b.0)
    }

    fn is_det_local_min(&self, i_re: usize, i_im: usize) -> bool {
        let v = self.get(i_re, i_im);
        self.neighbours(i_re, i_im).all(|(r, i)| {
            let n = self.get(r, i);
            !n.valid || v.logabsdet <= n.logabsdet
        })
    }

    /// On the grid boundary, except the top row when it is the real axis
    /// (a hard limit of the search region).
    fn on_open_boundary(&self, i_re: usize, i_im: usize) -> bool {
        let top_is_axis = self.spec.im.hi == 0.0;
        i_re == 0
            || i_re + 1 == self.spec.re.count
            || i_im == 0
            || (i_im + 1 == self.spec.im.count && !top_is_axis)
    }
}

/// What the scan evaluates; a trait so the zoom logic can be exercised on
/// manufactured matrices.
pub trait ResonanceProblem: Sync {
    /// Resonance matrix and the exterior diagonal at `lambda`.
    fn matrices(&self, lambda: C) -> Result<(DMatrix<C>, Vec<C>)>;
    /// Whether `lambda` is too close to a pole or branch point.
    fn near_singular(&self, lambda: C) -> bool;
    /// Interior Neumann eigenvalues for hazard annotation.
    fn poles(&self) -> &[f64];
}

/// Interior NtD (full slice) matched to the continued exterior map:
/// `L + T` for cylindrical ends, `L - T` for the disc exterior (whose map
/// is written with the normal of the exterior region).
pub fn resonance_matrix(data: &NtdData, lambda: C) -> Result<DMatrix<C>> {
    Ok(data.matrices(lambda)?.0)
}

impl ResonanceProblem for NtdData {
    fn matrices(&self, lambda: C) -> Result<(DMatrix<C>, Vec<C>)> {
        let mut a = self.interior_ntd(lambda, Slice::all(self.m()))?;
        let t = self.exterior_diag(lambda)?;
        let sign = match self.exterior {
            Exterior::Cylinder => 1.0,
            Exterior::Disc { .. } => -1.0,
        };
        for (k, v) in t.iter().enumerate() {
            a[(k, k)] += sign * v;
        }
        Ok((a, t))
    }

    fn near_singular(&self, lambda: C) -> bool {
        self.near_pole(lambda, NUDGE_TRIGGER).is_some() || self.near_branch_point(lambda, NUDGE_TRIGGER)
    }

    fn poles(&self) -> &[f64] {
        &self.mu
    }
}

/// `log|det|` from an LU factorization, safe against overflow.
fn log_abs_det(a: DMatrix<C>) -> f64 {
    let lu = a.lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].norm().ln()).sum()
}

fn evaluate<P: ResonanceProblem + ?Sized>(p: &P, z: C) -> NodeValue {
    let mut lambda = z;
    let mut nudged = false;
    let mut tries = 0;
    while p.near_singular(lambda) && tries < 4 {
        lambda += NUDGE * lambda.norm().max(1.0);
        nudged = true;
        tries += 1;
    }
    match p.matrices(lambda) {
        Ok((a, t)) => {
            let sv = a.clone().svd(false, false).singular_values;
            let (smax, smin) = (sv.max(), sv.min());
            let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            let logt: f64 = t.iter().map(|v| v.norm().ln()).sum();
            let logabsdet = log_abs_det(a) - logt;
            NodeValue {
                lambda,
                cond,
                logabsdet,
                valid: cond.is_finite() && logabsdet.is_finite(),
                nudged,
            }
        }
        Err(_) => NodeValue {
            lambda,
            cond: f64::NAN,
            logabsdet: f64::NAN,
            valid: false,
            nudged,
        },
    }
}

/// Evaluates every node; results are stored in row-major order whatever the
/// completion order of the workers.
pub fn condition_scan<P: ResonanceProblem + ?Sized>(p: &P, spec: GridSpec, workers: usize) -> Result<ScanGrid> {
    let nr = spec.re.count;
    let run = || -> Vec<NodeValue> {
        (0..spec.len())
            .into_par_iter()
            .map(|idx| evaluate(p, spec.node(idx % nr, idx / nr)))
            .collect()
    };
    let values = if workers <= 1 {
        (0..spec.len()).map(|idx| evaluate(p, spec.node(idx % nr, idx / nr))).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Resonance(format!("worker pool: {e}")))?
            .install(run)
    };
    Ok(ScanGrid { spec, values })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceEstimate {
    pub lambda: C,
    /// `sqrt(lambda)` on the principal branch.
    pub wavenumber: C,
    pub zoom_level: usize,
    /// `(re, im)` spacing of the final grid.
    pub final_grid_spacing: (f64, f64),
    /// Condition number at the estimate.
    pub quality: f64,
    pub logabsdet: f64,
    /// Whether `log|det|` is a local minimum there (zero rather than pole).
    pub det_local_min: bool,
    pub nearby_neumann_pole: Option<f64>,
    /// "resonance" or "unresolved pole/zero pair".
    pub label: String,
    pub instability_warning: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ZoomOptions {
    pub levels: usize,
    pub workers: usize,
    /// Reason to distrust every estimate of this problem, if any.
    pub problem_warning: Option<String>,
}

/// Zooms from every local maximum of `scan` for `levels` rounds.
pub fn locate_and_zoom<P: ResonanceProblem + ?Sized>(
    p: &P,
    scan: &ScanGrid,
    opts: &ZoomOptions,
) -> Result<(Vec<ResonanceEstimate>, Vec<String>)> {
    if opts.levels == 0 {
        return Err(Error::InvalidArgument("zoom levels must be at least 1".into()));
    }
    let mut warnings = Vec::new();
    let mut estimates: Vec<ResonanceEstimate> = Vec::new();
    for (i_re, i_im) in scan.local_maxima() {
        let mut centre = scan.spec.node(i_re, i_im);
        let mut spec = scan.spec;
        let mut grid = None;
        for _level in 1..=opts.levels {
            let mut sub = spec.zoom(centre);
            let mut g = condition_scan(p, sub, opts.workers)?;
            let mut shifts = 0;
            let mut drifted = false;
            loop {
                let Some((r, i)) = g.argmax() else {
                    return Err(Error::Resonance(format!("zoom window around {centre} has no valid node")));
                };
                let best = g.spec.node(r, i);
                if !g.on_open_boundary(r, i) {
                    centre = best;
                    break;
                }
                if shifts >= MAX_SHIFTS {
                    warnings.push(format!(
                        "maximum near {best:.6} kept drifting after {MAX_SHIFTS} window shifts; no isolated peak, dropped"
                    ));
                    drifted = true;
                    break;
                }
                warnings.push(format!("maximum on zoom grid boundary at {best:.8}; window shifted"));
                sub = GridSpec {
                    re: Axis { lo: best.re - 0.5 * (sub.re.hi - sub.re.lo), hi: best.re + 0.5 * (sub.re.hi - sub.re.lo), ..sub.re },
                    im: {
                        let w = sub.im.hi - sub.im.lo;
                        let (mut lo, mut hi) = (best.im - 0.5 * w, best.im + 0.5 * w);
                        if hi > 0.0 {
                            lo -= hi;
                            hi = 0.0;
                        }
                        Axis { lo, hi, ..sub.im }
                    },
                };
                g = condition_scan(p, sub, opts.workers)?;
                shifts += 1;
            }
            if drifted {
                grid = None;
                break;
            }
            spec = g.spec;
            grid = Some(g);
        }
        let Some(g) = grid else { continue };
        let (r, i) = g.argmax().expect("checked above");
        let v = *g.get(r, i);
        let z = g.spec.node(r, i);
        let spacing = (g.spec.re.spacing(), g.spec.im.spacing());
        let nearby = p
            .poles()
            .iter()
            .copied()
            .filter(|&mu| g.spec.contains(C::new(mu, 0.0)))
            .min_by(|a, b| (a - z.re).abs().total_cmp(&(b - z.re).abs()));
        let unresolved = nearby.is_some_and(|mu| (z - mu).norm() <= 2.0 * spacing.0.max(spacing.1));
        let mut instability = opts.problem_warning.clone();
        if z.im.abs() > FAR_FROM_AXIS * z.re.abs() {
            instability = Some(format!(
                "resonance far from the real axis (|Im| > {FAR_FROM_AXIS} |Re|) is unstable under changes of mesh and radius"
            ));
        }
        let est = ResonanceEstimate {
            lambda: z,
            wavenumber: z.sqrt(),
            zoom_level: opts.levels,
            final_grid_spacing: spacing,
            quality: v.cond,
            logabsdet: v.logabsdet,
            det_local_min: g.is_det_local_min(r, i),
            nearby_neumann_pole: nearby,
            label: if unresolved { "unresolved pole/zero pair" } else { "resonance" }.to_string(),
            instability_warning: instability,
        };
        // Maxima that zoom onto the same point collapse to one estimate.
        let dup = estimates
            .iter()
            .any(|e| (e.lambda - est.lambda).norm() <= 2.0 * spacing.0.max(spacing.1).max(e.final_grid_spacing.0));
        if !dup {
            estimates.push(est);
        }
    }
    estimates.sort_by(|a, b| a.lambda.re.total_cmp(&b.lambda.re).then(a.lambda.im.total_cmp(&b.lambda.im)));
    Ok((estimates, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `diag(lambda - target)` padded with a constant block, no poles.
    struct Manufactured {
        target: C,
    }

    impl ResonanceProblem for Manufactured {
        fn matrices(&self, lambda: C) -> Result<(DMatrix<C>, Vec<C>)> {
            let mut a = DMatrix::identity(3, 3).map(|v: f64| C::new(v, 0.0));
            a[(0, 0)] = lambda - self.target;
            Ok((a, vec![C::new(1.0, 0.0); 3]))
        }
        fn near_singular(&self, _: C) -> bool {
            false
        }
        fn poles(&self) -> &[f64] {
            &[]
        }
    }

    #[test]
    fn axis_parsing_and_grid_checks() {
        let a: Axis = "5.1:5.3:101".parse().unwrap();
        assert_eq!(a.count, 101);
        assert!((a.spacing() - 0.002).abs() < 1e-15);
        assert_eq!(a.at(100), 5.3);
        assert!("1:2".parse::<Axis>().is_err());
        assert!("2:1:5".parse::<Axis>().is_err());
        assert!("1:2:1".parse::<Axis>().is_err());
        assert!(GridSpec::new(a, "-0.1:0.01:5".parse().unwrap()).is_err());
    }

    #[test]
    fn manufactured_zero_is_found() {
        let target = C::new(1.2345678, -0.0123456);
        let p = Manufactured { target };
        let spec = GridSpec::new(Axis::new(1.0, 1.5, 26).unwrap(), Axis::new(-0.05, 0.0, 11).unwrap()).unwrap();
        let scan = condition_scan(&p, spec, 1).unwrap();
        let (est, _) = locate_and_zoom(&p, &scan, &ZoomOptions { levels: 3, workers: 1, problem_warning: None }).unwrap();
        assert_eq!(est.len(), 1);
        let e = &est[0];
        assert!((e.lambda.re - target.re).abs() <= e.final_grid_spacing.0);
        assert!((e.lambda.im - target.im).abs() <= e.final_grid_spacing.1);
        assert!(e.det_local_min);
        assert_eq!(e.label, "resonance");
        assert!((e.final_grid_spacing.0 - spec.re.spacing() * (3.0f64 / 25.0).powi(3)).abs() < 1e-15);
        assert!(e.instability_warning.is_none());
    }

    #[test]
    fn scan_is_independent_of_workers_and_csv_shape() {
        let p = Manufactured { target: C::new(0.3, -0.2) };
        let spec = GridSpec::new(Axis::new(0.0, 1.0, 7).unwrap(), Axis::new(-0.5, 0.0, 4).unwrap()).unwrap();
        let a = condition_scan(&p, spec, 1).unwrap();
        let b = condition_scan(&p, spec, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        assert!(csv.starts_with("re,im,cond,logabsdet\n"));
        assert_eq!(csv.lines().count(), 1 + 28);
    }

    #[test]
    fn far_from_axis_is_flagged() {
        let p = Manufactured { target: C::new(2.0, -0.3) };
        let spec = GridSpec::new(Axis::new(1.5, 2.5, 11).unwrap(), Axis::new(-0.6, 0.0, 7).unwrap()).unwrap();
        let scan = condition_scan(&p, spec, 1).unwrap();
        let (est, _) = locate_and_zoom(&p, &scan, &ZoomOptions { levels: 2, workers: 1, problem_warning: None }).unwrap();
        assert!(est[0].instability_warning.is_some());
    }

    #[test]
    fn boundary_maximum_shifts_window() {
        // Zero sits just outside the first zoom window.
        let target = C::new(1.0 + 0.0014, -0.02);
        let p = Manufactured { target };
        let spec = GridSpec::new(Axis::new(0.9, 1.1, 101).unwrap(), Axis::new(-0.04, 0.0, 21).unwrap()).unwrap();
        let scan = condition_scan(&p, spec, 1).unwrap();
        let (est, _) = locate_and_zoom(&p, &scan, &ZoomOptions { levels: 2, workers: 1, problem_warning: None }).unwrap();
        assert!((est[0].lambda - target).norm() < 1e-4);
    }

    fn prepared(geometry: &str, params: &[(&str, f64)], refine: usize, lambda_max: f64, j: usize) -> crate::pipeline::Prepared {
        let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let cfg = crate::pipeline::ProblemConfig::new(geometry, params, refine, lambda_max).unwrap();
        crate::pipeline::prepare(&cfg, j).unwrap()
    }

    #[test]
    fn cylinder_matrix_is_complex_symmetric() {
        let p = prepared("obstructed-strip", &[("delta", 0.1), ("radius", 0.3)], 1, 30.0, 0);
        let a = resonance_matrix(&p.data, C::new(5.0, -0.01)).unwrap();
        assert!((&a - a.transpose()).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn bound_state_is_a_real_axis_singularity() {
        let mut p = prepared("bent-waveguide", &[], 2, 30.0, 0);
        let out = crate::pipeline::run_eigen(&mut p, 0, None, 1e-10).unwrap();
        assert_eq!(out.findings.len(), 1);
        let at = evaluate(&p.data, C::new(out.findings[0].lambda, 0.0));
        let off = evaluate(&p.data, C::new(out.findings[0].lambda - 0.1, 0.0));
        assert!(at.cond > 1e5 * off.cond, "{} vs {}", at.cond, off.cond);
    }

    #[test]
    fn regular_region_is_smooth() {
        let p = prepared("obstructed-strip", &[("delta", 0.1), ("radius", 0.3)], 2, 30.0, 0);
        let spec = GridSpec::new(Axis::new(1.0, 1.5, 11).unwrap(), Axis::new(-0.5, -0.2, 7).unwrap()).unwrap();
        let g = condition_scan(&p.data, spec, 1).unwrap();
        assert_eq!(g.invalid_count(), 0);
        for i in 0..spec.im.count {
            for r in 0..spec.re.count {
                for (nr, ni) in g.neighbours(r, i) {
                    let ratio = g.get(r, i).cond / g.get(nr, ni).cond;
                    assert!(ratio < 10.0 && ratio > 0.1);
                }
            }
        }
    }
}
