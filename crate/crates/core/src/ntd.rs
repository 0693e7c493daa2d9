//! Neumann-to-Dirichlet matrices: the interior map from the Neumann
//! eigen-expansion (optionally accelerated by a reference solve at `lambda0`)
//! and the diagonal exterior maps of straight ends and of the disc exterior.

use nalgebra::DMatrix;
use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::fem::{edge_load, DiscreteOperator, InteriorEigenBasis, NeumannBvp};
use crate::mesh::Mesh;
use crate::specfun::{branch_sqrt, hankel1, BranchMode};
use crate::transverse::GlobalBasis;

/// Relative distance to a pole below which an evaluation is refused.
pub const POLE_MARGIN: f64 = 1e-9;

/// Contiguous block of transverse rows, stored 0-based half-open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slice {
    pub start: usize,
    pub end: usize,
}

impl Slice {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn all(m: usize) -> Self {
        Self::new(0, m)
    }

    /// Rows `J+1:M` in 1-based notation.
    pub fn active(j: usize, m: usize) -> Self {
        Self::new(j, m)
    }

    /// Rows `1:J`.
    pub fn passive(j: usize) -> Self {
        Self::new(0, j)
    }

    /// Parses the 1-based inclusive `a:b` form.
    pub fn parse(s: &str, m: usize) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad slice `{s}` for M = {m}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a < 1 || a > b || b > m {
            return Err(bad());
        }
        Ok(Self::new(a - 1, b))
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// How the exterior is represented.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exterior {
    Cylinder,
    Disc { radius: f64 },
}

#[derive(Clone, Debug)]
pub struct NtdData {
    /// `S[k, m] = int conj(w_k) U_m` over the interface, M x N.
    pub s: DMatrix<C>,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Fourier orders for the disc exterior, empty otherwise.
    pub orders: Vec<i32>,
    pub r0: Option<DMatrix<C>>,
    /// `||R0 - R0^H|| / ||R0||` before symmetrization.
    pub r0_asymmetry: f64,
    pub lambda0: f64,
    pub j: usize,
    pub exterior: Exterior,
}

/// Columns `L[:, k] = int w_k phi_i` of the interface load matrix.
pub fn load_matrix(mesh: &Mesh, tb: &GlobalBasis) -> Result<Vec<Vec<C>>> {
    let mut out = Vec::with_capacity(tb.len());
    for mode in &tb.modes {
        if mesh.edges_with_tag(mode.tag).next().is_none() {
            return Err(Error::Ntd(format!("no mesh edges carry interface tag {}", mode.tag)));
        }
        out.push(edge_load(mesh, mode.tag, |p| mode.eval_at(p)));
    }
    Ok(out)
}

fn check_basis(basis: &InteriorEigenBasis, loads: &[Vec<C>]) -> Result<()> {
    if basis.is_empty() || loads.is_empty() {
        return Err(Error::Ntd("coupling needs M, N >= 1".into()));
    }
    let n = basis.modes[0].len();
    if loads.iter().any(|l| l.len() != n) {
        return Err(Error::Ntd("load vectors and modes disagree in length".into()));
    }
    Ok(())
}

fn coupling_from_loads(basis: &InteriorEigenBasis, loads: &[Vec<C>]) -> Result<DMatrix<C>> {
    check_basis(basis, loads)?;
    let mut s = DMatrix::zeros(loads.len(), basis.len());
    for (k, l) in loads.iter().enumerate() {
        // Interface loads are sparse; skip zero rows once.
        let nz: Vec<(usize, C)> = l.iter().enumerate().filter(|(_, z)| z.norm() != 0.0).map(|(i, z)| (i, z.conj())).collect();
        for (m, u) in basis.modes.iter().enumerate() {
            s[(k, m)] = nz.iter().map(|&(i, z)| z * u[i]).sum();
        }
    }
    Ok(s)
}

/// `S = L^H U`, i.e. `S[k, m] = int conj(w_k) U_m` with four-point Gauss per
/// interface edge.
pub fn coupling_matrix(basis: &InteriorEigenBasis, tb: &GlobalBasis, mesh: &Mesh) -> Result<DMatrix<C>> {
    coupling_from_loads(basis, &load_matrix(mesh, tb)?)
}

fn r0_from_loads(op: &DiscreteOperator, loads: &[Vec<C>], lambda0: f64, mu: &[f64]) -> Result<(DMatrix<C>, f64)> {
    let bvp = NeumannBvp::new(op, lambda0, mu)?;
    let m = loads.len();
    let mut phis = Vec::with_capacity(m);
    for (k, l) in loads.iter().enumerate() {
        let (x, res) = bvp.solve(l);
        if !(res < 1e-8) {
            return Err(Error::Ntd(format!("reference solve for mode {k} has residual {res:.2e}")));
        }
        phis.push(x);
    }
    let mut r = DMatrix::zeros(m, m);
    for (l, load) in loads.iter().enumerate() {
        let nz: Vec<(usize, C)> = load.iter().enumerate().filter(|(_, z)| z.norm() != 0.0).map(|(i, z)| (i, z.conj())).collect();
        for (k, phi) in phis.iter().enumerate() {
            r[(l, k)] = nz.iter().map(|&(i, z)| z * phi[i]).sum();
        }
    }
    let adj = r.adjoint();
    let norm = r.norm();
    let asym = if norm > 0.0 { (&r - &adj).norm() / norm } else { 0.0 };
    Ok(((r + adj) * C::new(0.5, 0.0), asym))
}

/// Reference matrix `R0(lambda0)` from one Neumann-data solve per transverse
/// mode; returns the Hermitian part and the relative asymmetry.
pub fn r0_reference(
    op: &DiscreteOperator,
    tb: &GlobalBasis,
    mesh: &Mesh,
    lambda0: f64,
    mu: &[f64],
) -> Result<(DMatrix<C>, f64)> {
    r0_from_loads(op, &load_matrix(mesh, tb)?, lambda0, mu)
}

impl NtdData {
    /// Assembles `S` and, when `accelerate` is set, `R0(lambda0)`.
    pub fn build(
        mesh: &Mesh,
        op: &DiscreteOperator,
        basis: &InteriorEigenBasis,
        tb: &GlobalBasis,
        lambda0: f64,
        j: usize,
        accelerate: bool,
    ) -> Result<Self> {
        if j >= tb.len() {
            return Err(Error::InvalidArgument(format!("J = {j} must be below M = {}", tb.len())));
        }
        let loads = load_matrix(mesh, tb)?;
        let s = coupling_from_loads(basis, &loads)?;
        let (r0, r0_asymmetry) = if accelerate {
            let (r, a) = r0_from_loads(op, &loads, lambda0, &basis.mu)?;
            (Some(r), a)
        } else {
            (None, 0.0)
        };
        let exterior = if tb.is_circle {
            match tb.modes[0].mode {
                crate::transverse::Mode::Fourier { radius, .. } => Exterior::Disc { radius },
                _ => unreachable!(),
            }
        } else {
            Exterior::Cylinder
        };
        Ok(Self {
            s,
            mu: basis.mu.clone(),
            kappa: tb.kappa(),
            orders: tb.modes.iter().filter_map(|m| m.order()).collect(),
            r0,
            r0_asymmetry,
            lambda0,
            j,
            exterior,
        })
    }

    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    pub fn n(&self) -> usize {
        self.s.ncols()
    }

    /// Index and distance of the nearest `mu` if `lambda` is within `margin`
    /// (relative, floored at 1) of it.
    pub fn near_pole(&self, lambda: C, margin: f64) -> Option<(usize, f64)> {
        self.mu
            .iter()
            .enumerate()
            .map(|(i, &m)| (i, (lambda - m).norm(), margin * m.abs().max(1.0)))
            .find(|&(_, d, tol)| d < tol)
            .map(|(i, d, _)| (i, d))
    }

    fn diag_weights(&self, lambda: C, accelerated: bool) -> Result<Vec<C>> {
        if let Some((i, _)) = self.near_pole(lambda, POLE_MARGIN) {
            return Err(Error::Ntd(format!(
                "lambda = {lambda} is at the interior Neumann eigenvalue mu_{} = {}",
                i + 1,
                self.mu[i]
            )));
        }
        Ok(self
            .mu
            .iter()
            .map(|&m| {
                let d = (C::new(m, 0.0) - lambda).inv();
                if accelerated {
                    // (mu - lambda)^-1 - (mu - lambda0)^-1 without cancellation.
                    (lambda - self.lambda0) * d / (m - self.lambda0)
                } else {
                    d
                }
            })
            .collect())
    }

    /// Block `R(lambda)[rows, cols]`, accelerated whenever `R0` is present.
    pub fn interior_block(&self, lambda: C, rows: Slice, cols: Slice) -> Result<DMatrix<C>> {
        let m = self.m();
        if rows.end > m || cols.end > m || rows.start > rows.end || cols.start > cols.end {
            return Err(Error::InvalidArgument(format!("slice out of range for M = {m}")));
        }
        let accelerated = self.r0.is_some();
        let d = self.diag_weights(lambda, accelerated)?;
        Ok(self.block_with(&d, rows, cols, accelerated))
    }

    fn block_with(&self, d: &[C], rows: Slice, cols: Slice, add_r0: bool) -> DMatrix<C> {
        let sr = self.s.rows(rows.start, rows.len());
        let sc = self.s.rows(cols.start, cols.len());
        let mut scaled = sr.clone_owned();
        for (mcol, &w) in d.iter().enumerate() {
            scaled.column_mut(mcol).iter_mut().for_each(|x| *x *= w);
        }
        let mut out = scaled * sc.adjoint();
        if let (true, Some(r0)) = (add_r0, &self.r0) {
            out += r0.view((rows.start, cols.start), (rows.len(), cols.len()));
        }
        out
    }

    /// Square diagonal block `R(lambda)[slice, slice]`.
    pub fn interior_ntd(&self, lambda: C, slice: Slice) -> Result<DMatrix<C>> {
        self.interior_block(lambda, slice, slice)
    }

    /// Plain truncated eigen-expansion, ignoring `R0`.
    pub fn interior_direct(&self, lambda: C, slice: Slice) -> Result<DMatrix<C>> {
        let d = self.diag_weights(lambda, false)?;
        Ok(self.block_with(&d, slice, slice, false))
    }

    /// Exterior diagonal on all rows with the resonance branches.
    pub fn exterior_diag(&self, lambda: C) -> Result<Vec<C>> {
        match self.exterior {
            Exterior::Cylinder => cylinder_ntd_diag(&self.kappa, lambda, BranchMode::Outgoing, Slice::all(self.m())),
            Exterior::Disc { radius } => disc_ntd_diag(radius, lambda, &self.orders),
        }
    }

    /// Whether `lambda` sits at a threshold of the cylinder exterior.
    pub fn near_branch_point(&self, lambda: C, margin: f64) -> bool {
        match self.exterior {
            Exterior::Cylinder => self.kappa.iter().any(|&k| (lambda - k).norm() < margin * k.abs().max(1.0)),
            Exterior::Disc { .. } => lambda.norm() < margin,
        }
    }
}

/// `T_kk = 1 / sqrt(kappa_k - lambda)` on the rows in `slice`.
pub fn cylinder_ntd_diag(kappa: &[f64], lambda: C, mode: BranchMode, slice: Slice) -> Result<Vec<C>> {
    if slice.end > kappa.len() {
        return Err(Error::InvalidArgument("slice beyond the transverse basis".into()));
    }
    kappa[slice.start..slice.end]
        .iter()
        .map(|&k| {
            let w = C::new(k, 0.0) - lambda;
            if w.norm() == 0.0 {
                return Err(Error::Ntd(format!("lambda = {lambda} is the threshold {k}")));
            }
            Ok(branch_sqrt(w, mode).inv())
        })
        .collect()
}

/// `H_n(rho k) / (k H_n'(rho k))` with `k = sqrt(lambda)` on the decaying
/// branch, in the given order list.
pub fn disc_ntd_diag(radius: f64, lambda: C, orders: &[i32]) -> Result<Vec<C>> {
    if lambda.norm() == 0.0 {
        return Err(Error::Ntd("lambda = 0 is the branch point of the disc exterior".into()));
    }
    let k = branch_sqrt(lambda, BranchMode::NegativeImag);
    let z = k * radius;
    let mut cache: Vec<Option<C>> = Vec::new();
    let mut out = Vec::with_capacity(orders.len());
    for &n in orders {
        let a = n.unsigned_abs() as usize;
        if cache.len() <= a {
            cache.resize(a + 1, None);
        }
        let v = match cache[a] {
            Some(v) => v,
            None => {
                let (h, dh) = hankel1(a as i32, z)?;
                if dh.norm() <= 1e-13 * h.norm().max(1.0) {
                    return Err(Error::Ntd(format!("H'_{a} vanishes at z = {z}: pole of the exterior map")));
                }
                let v = h / (k * dh);
                cache[a] = Some(v);
                v
            }
        };
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, neumann_eigs, InterfaceBc};
    use crate::geometry::build_preset;
    use crate::mesh::generate_refined;
    use crate::transverse::global_basis;
    use proptest::prelude::*;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    struct Rect {
        data: NtdData,
        mesh: Mesh,
        basis: InteriorEigenBasis,
        m: usize,
    }

    fn rect(refine: usize, lambda_max: f64, m: usize) -> Rect {
        let g = build_preset("rect-test", &BTreeMap::new()).unwrap();
        let mesh = generate_refined(&g, 0.25, refine).unwrap();
        let op = assemble(&mesh, &g, InterfaceBc::Neumann).unwrap();
        let basis = neumann_eigs(&op, lambda_max).unwrap();
        let tb = global_basis(&g, m).unwrap();
        let data = NtdData::build(&mesh, &op, &basis, &tb, -1.0, 0, true).unwrap();
        Rect { data, mesh, basis, m }
    }

    fn oracle(j: usize, lambda: f64) -> f64 {
        let s = ((j as f64 * PI).powi(2) - lambda).sqrt();
        1.0 / (s * s.tanh())
    }

    #[test]
    fn slice_parse() {
        assert_eq!(Slice::parse("2:5", 6).unwrap(), Slice::new(1, 5));
        assert!(Slice::parse("0:2", 6).is_err());
        assert!(Slice::parse("3:2", 6).is_err());
        assert!(Slice::parse("1:7", 6).is_err());
    }

    #[test]
    fn rect_coupling_reference_and_acceleration() {
        let r = rect(4, 200.0, 3);
        let d = &r.data;
        assert!(d.r0_asymmetry < 1e-6, "asym {}", d.r0_asymmetry);
        // R0 is diagonal with the analytic values.
        let r0 = d.r0.as_ref().unwrap();
        for k in 0..r.m {
            for l in 0..r.m {
                let want = if k == l { oracle(k + 1, -1.0) } else { 0.0 };
                assert!((r0[(k, l)].re - want).abs() < 1e-3, "R0[{k},{l}] = {} want {want}", r0[(k, l)]);
                assert!(r0[(k, l)].im.abs() < 1e-14);
            }
        }
        // One dominant coupling per column, parity zeros, Bessel inequality.
        let gamma: Vec<(usize, usize)> = r.mesh.edges_with_tag(100).collect();
        for mcol in 0..d.n() {
            // Degenerate clusters mix separable modes; high modes carry
            // larger discretization error.
            let isolated = d.mu[mcol] < 60.0 && d.mu.iter().enumerate().all(|(o, &v)| o == mcol || (v - d.mu[mcol]).abs() > 1e-2 * d.mu[mcol]);
            let col: Vec<f64> = (0..r.m).map(|k| d.s[(k, mcol)].re).collect();
            let big = col.iter().filter(|v| v.abs() > 1e-3).count();
            assert!(!isolated || big <= 1, "column {mcol}: {col:?}");
            let u = &r.basis.modes[mcol];
            let trace_sq: f64 = gamma
                .iter()
                .map(|&(i, j)| {
                    let len = (r.mesh.nodes[j] - r.mesh.nodes[i]).norm();
                    len * (u[i] * u[i] + u[i] * u[j] + u[j] * u[j]) / 3.0
                })
                .sum();
            let ssq: f64 = col.iter().map(|v| v * v).sum();
            assert!(ssq <= trace_sq + 1e-8, "Bessel {ssq} > {trace_sq}");
        }
        // At lambda0 the accelerated form returns R0 exactly.
        let at0 = d.interior_ntd(C::new(-1.0, 0.0), Slice::all(r.m)).unwrap();
        assert_eq!(&at0, r0);
        // Accelerated is close to the direct sum and closer to the oracle.
        let lam = C::new(1.0, 0.0);
        let acc = d.interior_ntd(lam, Slice::all(r.m)).unwrap();
        let dir = d.interior_direct(lam, Slice::all(r.m)).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..r.m {
            for l in 0..r.m {
                worst = worst.max((acc[(k, l)] - dir[(k, l)]).norm());
            }
            let o = oracle(k + 1, 1.0);
            let ea = (acc[(k, k)].re - o).abs();
            let ed = (dir[(k, k)].re - o).abs();
            assert!(ea < ed, "mode {k}: accelerated {ea} direct {ed}");
            assert!(ea < 1e-2 * o, "mode {k}: {ea} vs {o}, direct {ed}");
        }
        // The direct tail decays like 1/N, so the gap stays at a few percent.
        assert!(worst <= 5e-2, "difference {worst}");
        let asym = (&acc - acc.transpose()).norm();
        assert!(asym <= 1e-12 * acc.norm());
    }

    #[test]
    fn interior_monotone_in_lambda() {
        let r = rect(2, 80.0, 3);
        let d = &r.data;
        let g = nalgebra::DVector::from_vec(vec![C::new(0.3, 0.0), C::new(-1.0, 0.0), C::new(0.7, 0.0)]);
        // Sweep across one pole at mu_1 ~ pi^2 on both sides.
        let mu1 = d.mu[0];
        for (a, b) in [(-5.0, mu1 - 0.05), (mu1 + 0.05, d.mu[1] - 0.05)] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..50 {
                let lam = a + (b - a) * i as f64 / 49.0;
                let rm = d.interior_ntd(C::new(lam, 0.0), Slice::all(r.m)).unwrap();
                let q = (g.adjoint() * &rm * &g)[(0, 0)].re;
                assert!(q >= prev - 1e-12, "drop at {lam}");
                prev = q;
            }
        }
        assert!(d.interior_ntd(C::new(mu1, 0.0), Slice::all(r.m)).is_err());
    }

    #[test]
    fn r0_refuses_near_eigenvalue() {
        let g = build_preset("rect-test", &BTreeMap::new()).unwrap();
        let mesh = generate_refined(&g, 0.25, 1).unwrap();
        let op = assemble(&mesh, &g, InterfaceBc::Neumann).unwrap();
        let basis = neumann_eigs(&op, 120.0).unwrap();
        let tb = global_basis(&g, 3).unwrap();
        let err = r0_reference(&op, &tb, &mesh, basis.mu[2] + 1e-8, &basis.mu).unwrap_err();
        assert!(matches!(err, Error::NearNeumannEigenvalue { index: 2, .. }));
    }

    #[test]
    fn cylinder_diag_values() {
        let kappa = [PI * PI / 4.0, PI * PI];
        let t = cylinder_ntd_diag(&kappa, C::new(1.0, 0.0), BranchMode::PositiveReal, Slice::all(2)).unwrap();
        assert!((t[0].re - 0.825516).abs() < 1e-6 && t[0].im == 0.0);
        assert!(cylinder_ntd_diag(&kappa, C::new(kappa[1], 0.0), BranchMode::PositiveReal, Slice::all(2)).is_err());
        // Decreasing to zero as lambda -> -infinity.
        let mut prev = f64::INFINITY;
        for e in 0..8 {
            let lam = -(10f64.powi(e));
            let v = cylinder_ntd_diag(&kappa, C::new(lam, 0.0), BranchMode::PositiveReal, Slice::new(0, 1)).unwrap()[0].re;
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(prev < 1e-3);
        // Continuation just below the cut beyond kappa_1.
        let mut last = None;
        for i in 0..=400 {
            let lam = C::new(2.3 + 0.4 * i as f64 / 400.0, -0.01);
            let v = cylinder_ntd_diag(&kappa, lam, BranchMode::PositiveReal, Slice::new(0, 1)).unwrap()[0];
            assert!(v.re > 0.0);
            if let Some(p) = last {
                let p: C = p;
                assert!((v - p).norm() < 0.1 * v.norm(), "jump at {lam}");
            }
            last = Some(v);
        }
    }

    #[test]
    fn disc_diag_parity_radiation_and_asymptotics() {
        let orders: Vec<i32> = (0..=10).flat_map(|n| if n == 0 { vec![0] } else { vec![n, -n] }).collect();
        let t = disc_ntd_diag(1.5, C::new(5.0, 0.0), &orders).unwrap();
        for pair in t[1..].chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert!(t.iter().all(|v| v.im.abs() > 1e-12));
        let sign = t[0].im.signum();
        assert!(t.iter().all(|v| v.im.signum() == sign));
        // Large argument: entry ~ 1/(i k).
        let lam = C::new(900.0, 0.0);
        let k = lam.sqrt();
        let v = disc_ntd_diag(3.0, lam, &[0]).unwrap()[0];
        let lead = (C::i() * k).inv();
        assert!((v - lead).norm() < 0.05 * lead.norm());
        assert!(disc_ntd_diag(1.0, C::new(0.0, 0.0), &[0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn synthetic_block_is_hermitian(seed in 0u64..1000, lam in -5.0f64..0.5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let (m, n) = (4, 7);
            let s = DMatrix::from_fn(m, n, |_, _| C::new(rng.gen_range(-1.0..1.0), 0.0));
            let mu: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let mut d = NtdData {
                s, mu, kappa: vec![1.0; m], orders: vec![], r0: None, r0_asymmetry: 0.0,
                lambda0: -1.0, j: 0, exterior: Exterior::Cylinder,
            };
            let direct0 = d.interior_ntd(C::new(-1.0, 0.0), Slice::all(m)).unwrap();
            d.r0 = Some(direct0);
            let acc = d.interior_ntd(C::new(lam, 0.0), Slice::all(m)).unwrap();
            let dir = d.interior_direct(C::new(lam, 0.0), Slice::all(m)).unwrap();
            prop_assert!((&acc - &dir).norm() <= 1e-12 * dir.norm().max(1.0));
            prop_assert!((&acc - acc.adjoint()).norm() <= 1e-12 * acc.norm());
        }
    }
}
