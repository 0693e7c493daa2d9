//! End-to-end driver: geometry, mesh, interior spectra, transverse bases,
//! NtD data, then either the real eigenvalue search or a resonance scan.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{self, InteriorEigenBasis, InterfaceBc};
use crate::geometry::{build_preset, GeometryDesc, Interface};
use crate::mesh::{generate_refined, Mesh};
use crate::ntd::{Exterior, NtdData};
use crate::resonance::{condition_scan, locate_and_zoom, GridSpec, ResonanceEstimate, ScanGrid, ZoomOptions};
use crate::solver::{self, count_bound, window_bounds, EigenFinding};
use crate::transverse::{global_basis, GlobalBasis, DEFAULT_M};

pub const DEFAULT_LAMBDA0: f64 = -1.0;

#[derive(Clone, Debug, Serialize)]
pub struct ProblemConfig {
    pub geometry: String,
    pub params: BTreeMap<String, f64>,
    pub refine: usize,
    pub h0: f64,
    pub lambda_max: f64,
    /// Transverse modes per interface (total for a circle).
    pub m: usize,
    pub lambda0: f64,
    pub accelerate: bool,
}

impl ProblemConfig {
    /// Defaults for a preset; `h0` is the preset's base mesh size.
    pub fn new(geometry: &str, params: BTreeMap<String, f64>, refine: usize, lambda_max: f64) -> Result<Self> {
        let g = build_preset(geometry, &params)?;
        let m = if g.artificial_circle.is_some() { 2 * DEFAULT_M + 1 } else { DEFAULT_M };
        Ok(Self {
            geometry: geometry.to_string(),
            params: g.params.clone(),
            refine,
            h0: g.default_h0,
            lambda_max,
            m,
            lambda0: DEFAULT_LAMBDA0,
            accelerate: true,
        })
    }
}

/// Everything computed once per problem.
pub struct Prepared {
    pub config: ProblemConfig,
    pub geometry: GeometryDesc,
    pub mesh: Mesh,
    pub neumann: fem::DiscreteOperator,
    pub basis: InteriorEigenBasis,
    pub transverse: GlobalBasis,
    pub data: NtdData,
    pub timings: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, key: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    timings.insert(key.to_string(), t.elapsed().as_secs_f64());
    out
}

/// Default active window: 1 for the obstructed strip, whose reported
/// eigenvalues sit above the zero threshold, 0 otherwise.
pub fn default_window(geometry: &str) -> usize {
    if geometry == "obstructed-strip" {
        1
    } else {
        0
    }
}

/// Builds the mesh, the Neumann basis and the NtD data with window `j`.
pub fn prepare(config: &ProblemConfig, j: usize) -> Result<Prepared> {
    if !(config.lambda_max > 0.0) {
        return Err(Error::InvalidArgument("lambda_max must be positive".into()));
    }
    if config.m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();
    let geometry = build_preset(&config.geometry, &config.params)?;
    if geometry.interfaces().is_empty() {
        return Err(Error::InvalidArgument(format!("preset '{}' has no interface", config.geometry)));
    }
    let mesh = timed(&mut timings, "mesh", || generate_refined(&geometry, config.h0, config.refine))?;
    let neumann = timed(&mut timings, "assemble", || fem::assemble(&mesh, &geometry, InterfaceBc::Neumann))?;
    let basis = timed(&mut timings, "neumann_eigs", || fem::neumann_eigs(&neumann, config.lambda_max))?;
    if basis.is_empty() {
        return Err(Error::Fem(format!("no Neumann eigenvalues below lambda_max = {}", config.lambda_max)));
    }
    if basis.mu[0] <= config.lambda0 {
        warnings.push(format!(
            "lambda0 = {} is above mu_1 = {}; the reference solve is indefinite",
            config.lambda0, basis.mu[0]
        ));
    }
    let transverse = global_basis(&geometry, config.m)?;
    let data = timed(&mut timings, "ntd", || {
        NtdData::build(&mesh, &neumann, &basis, &transverse, config.lambda0, j, config.accelerate)
    })?;
    if data.r0_asymmetry > 1e-6 {
        warnings.push(format!("R0 asymmetry {:.2e} exceeds 1e-6", data.r0_asymmetry));
    }
    Ok(Prepared {
        config: config.clone(),
        geometry,
        mesh,
        neumann,
        basis,
        transverse,
        data,
        timings,
        warnings,
    })
}

impl Prepared {
    /// Discrete Dirichlet-interface eigenvalues below `cap`.
    pub fn dirichlet_spectrum(&mut self, cap: f64) -> Result<Vec<f64>> {
        let g = &self.geometry;
        let mesh = &self.mesh;
        let op = fem::assemble(mesh, g, InterfaceBc::Dirichlet)?;
        timed(&mut self.timings, "dirichlet_eigs", || fem::dirichlet_eigs(&op, cap))
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.data.kappa.clone()
    }

    /// Default search interval inside window `j`.
    pub fn default_search(&self, j: usize) -> (f64, f64) {
        let (lo, hi) = window_bounds(&self.data.kappa, j);
        let lo = if j == 0 {
            if self.geometry.has_dirichlet() {
                0.0
            } else {
                -10.0
            }
        } else {
            lo
        };
        (lo, hi)
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            nodes: self.mesh.n_nodes(),
            triangles: self.mesh.triangles.len(),
            min_angle_deg: self.mesh.min_angle_deg(),
            max_edge: self.mesh.max_edge(),
            interfaces: self
                .geometry
                .interfaces()
                .iter()
                .map(|i| match i {
                    Interface::End { .. } => "end".to_string(),
                    Interface::Circle(_) => "circle".to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub nodes: usize,
    pub triangles: usize,
    pub min_angle_deg: f64,
    pub max_edge: f64,
    pub interfaces: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenOutcome {
    pub window_index: usize,
    pub search: (f64, f64),
    pub tol: f64,
    pub mu_count: usize,
    pub nu_count: usize,
    pub mu_below: usize,
    pub nu_below: usize,
    pub k_bound: usize,
    pub findings: Vec<EigenFinding>,
    pub subintervals: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Counting bound, root search and orthogonality checks in window `j`.
pub fn run_eigen(prep: &mut Prepared, j: usize, search: Option<(f64, f64)>, tol: f64) -> Result<EigenOutcome> {
    if prep.data.exterior != Exterior::Cylinder {
        return Err(Error::InvalidArgument(format!(
            "preset '{}' has an artificial circle; use resonance-scan",
            prep.config.geometry
        )));
    }
    if prep.data.j != j {
        return Err(Error::InvalidArgument(format!("data prepared for J = {}, asked for J = {j}", prep.data.j)));
    }
    let search = search.unwrap_or_else(|| prep.default_search(j));
    let lambda2 = search.1;
    if lambda2 > prep.config.lambda_max {
        return Err(Error::InvalidArgument(format!(
            "search end {lambda2} exceeds lambda_max = {}",
            prep.config.lambda_max
        )));
    }
    let nu = prep.dirichlet_spectrum(prep.config.lambda_max)?;
    let mut warnings = prep.warnings.clone();
    let (k_raw, warn) = count_bound(&prep.basis.mu, &nu, lambda2, prep.config.lambda_max)?;
    warnings.extend(warn);
    let k_bound = k_raw.min(prep.data.m() - j);
    let t = Instant::now();
    let report = solver::find_eigenvalues(&prep.data, j, search, tol, k_bound)?;
    prep.timings.insert("root_search".into(), t.elapsed().as_secs_f64());
    warnings.extend(report.warnings);
    if j > 0 {
        warnings.push(format!(
            "embedded_flag uses the heuristic threshold orth_residual < {}; it is not a proof of embeddedness",
            solver::EMBEDDED_THRESHOLD
        ));
    }
    Ok(EigenOutcome {
        window_index: j,
        search,
        tol,
        mu_count: prep.basis.len(),
        nu_count: nu.len(),
        mu_below: prep.basis.mu.iter().filter(|&&m| m < lambda2).count(),
        nu_below: nu.iter().filter(|&&m| m < lambda2).count(),
        k_bound,
        findings: report.findings,
        subintervals: report.subintervals,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceOutcome {
    pub grid: GridSpec,
    pub levels: usize,
    pub nudged_nodes: usize,
    pub invalid_nodes: usize,
    pub estimates: Vec<ResonanceEstimate>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub scan: ScanGrid,
}

/// Condition-number scan over `grid`, then `levels` zoom rounds from each
/// local maximum. Needs data prepared with `J = 0`.
pub fn run_resonance(prep: &mut Prepared, grid: GridSpec, levels: usize, workers: usize) -> Result<ResonanceOutcome> {
    if prep.data.j != 0 {
        return Err(Error::InvalidArgument("resonance scans use the full slice; prepare with J = 0".into()));
    }
    let mut warnings = prep.warnings.clone();
    let t = Instant::now();
    let scan = condition_scan(&prep.data, grid, workers)?;
    prep.timings.insert("scan".into(), t.elapsed().as_secs_f64());
    if scan.invalid_count() > 0 {
        warnings.push(format!("{} grid nodes could not be evaluated", scan.invalid_count()));
    }
    let problem_warning = prep.geometry.potential.as_ref().map(|_| {
        "the potential is truncated at the artificial circle; estimates are sensitive to its radius and the mesh".to_string()
    });
    let t = Instant::now();
    let (estimates, zoom_warnings) = if levels == 0 {
        (Vec::new(), Vec::new())
    } else {
        locate_and_zoom(&prep.data, &scan, &ZoomOptions { levels, workers, problem_warning })?
    };
    prep.timings.insert("zoom".into(), t.elapsed().as_secs_f64());
    warnings.extend(zoom_warnings);
    Ok(ResonanceOutcome {
        grid,
        levels,
        nudged_nodes: scan.nudged_count(),
        invalid_nodes: scan.invalid_count(),
        estimates,
        warnings,
        scan,
    })
}
