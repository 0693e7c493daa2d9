//! P1 finite elements on the interior domain: assembly, the Neumann and
//! Dirichlet interior eigenproblems, and the Neumann-data boundary value
//! problem at a fixed reference spectral parameter.

use num_complex::Complex64;

use crate::eigen::{self, EigenPairs};
use crate::error::{Error, Result};
use crate::geometry::{GeometryDesc, Point, INTERFACE_TAG_BASE};
use crate::mesh::Mesh;
use crate::sparse::{Ldlt, Ordering, SymCsr, TripletBuilder};

/// Condition imposed on interface edges (tags `>= 100`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterfaceBc {
    Neumann,
    Dirichlet,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, four points.
pub const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_9),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_1),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_9),
];

#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    /// `int grad phi_i . grad phi_j + int q phi_i phi_j` over all nodes.
    pub stiffness: SymCsr,
    pub mass: SymCsr,
    /// `int (a/b) phi_i phi_j` over Robin boundary edges.
    pub robin: SymCsr,
    pub dirichlet_nodes: Vec<usize>,
    pub interface_bc: InterfaceBc,
    /// Free node indices in increasing order.
    free: Vec<usize>,
    /// Node -> position in `free`.
    free_index: Vec<Option<usize>>,
    coords: Vec<Point>,
}

impl DiscreteOperator {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn free_index(&self, node: usize) -> Option<usize> {
        self.free_index[node]
    }

    /// `(K + Robin, M)` restricted to the free nodes, plus their coordinates.
    pub fn free_system(&self) -> Result<(SymCsr, SymCsr, Vec<Point>)> {
        let k = SymCsr::combine(1.0, &self.stiffness, 1.0, &self.robin)?.submatrix(&self.free);
        let m = self.mass.submatrix(&self.free);
        let c = self.free.iter().map(|&i| self.coords[i]).collect();
        Ok((k, m, c))
    }

    /// Scatters a free-node vector to all nodes (zero on Dirichlet nodes).
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    pub fn restrict<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.free.iter().map(|&i| v[i]).collect()
    }
}

fn triangle_geometry(p: [Point; 3]) -> (f64, [Point; 3]) {
    let area = 0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
    // Gradients of barycentric coordinates.
    let mut g = [Point::zeros(); 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = Point::new(a.y - b.y, b.x - a.x) / (2.0 * area);
    }
    (area, g)
}

pub fn assemble(m: &Mesh, g: &GeometryDesc, interface_bc: InterfaceBc) -> Result<DiscreteOperator> {
    let n = m.n_nodes();
    let mut k = TripletBuilder::new(n);
    let mut ms = TripletBuilder::new(n);
    let mut rb = TripletBuilder::new(n);
    for tri in &m.triangles {
        let p = [m.nodes[tri[0]], m.nodes[tri[1]], m.nodes[tri[2]]];
        let (area, grad) = triangle_geometry(p);
        if area <= 0.0 {
            return Err(Error::Fem("non-positive triangle area".into()));
        }
        // Edge-midpoint rule for the potential, exact for quadratics.
        let qmid = g.potential.as_ref().map(|pot| {
            [
                pot.eval(&((p[0] + p[1]) * 0.5)),
                pot.eval(&((p[1] + p[2]) * 0.5)),
                pot.eval(&((p[2] + p[0]) * 0.5)),
            ]
        });
        for a in 0..3 {
            for b in a..3 {
                let mut kab = area * grad[a].dot(&grad[b]);
                if let Some(q) = qmid {
                    // phi_a at midpoint of edge (e, e+1) is 1/2 if a in {e, e+1}.
                    let mut s = 0.0;
                    for (e, qe) in q.iter().enumerate() {
                        let on = |c: usize| c == e || c == (e + 1) % 3;
                        if on(a) && on(b) {
                            s += qe * 0.25;
                        }
                    }
                    kab += area / 3.0 * s;
                }
                let mab = if a == b { area / 6.0 } else { area / 12.0 };
                k.add_sym(tri[a], tri[b], kab);
                ms.add_sym(tri[a], tri[b], mab);
            }
        }
    }
    let mut is_dirichlet = vec![false; n];
    for &(i, j, tag) in &m.boundary_edges {
        let ratio = if tag >= INTERFACE_TAG_BASE {
            if g.curve_for_tag(tag).is_none() {
                return Err(Error::Fem(format!("edge tag {tag} absent from geometry table")));
            }
            match interface_bc {
                InterfaceBc::Neumann => Some(0.0),
                InterfaceBc::Dirichlet => None,
            }
        } else {
            let c = g
                .coeff_for_tag(tag)
                .ok_or_else(|| Error::Fem(format!("edge tag {tag} absent from geometry table")))?;
            c.robin_ratio()
        };
        match ratio {
            None => {
                is_dirichlet[i] = true;
                is_dirichlet[j] = true;
            }
            Some(r) if r != 0.0 => {
                let len = (m.nodes[j] - m.nodes[i]).norm();
                let (mut aii, mut aij, mut ajj) = (0.0, 0.0, 0.0);
                for (t, w) in GAUSS4 {
                    let (pi, pj) = (1.0 - t, t);
                    aii += w * pi * pi;
                    aij += w * pi * pj;
                    ajj += w * pj * pj;
                }
                rb.add_sym(i, i, r * len * aii);
                rb.add_sym(i, j, r * len * aij);
                rb.add_sym(j, j, r * len * ajj);
            }
            Some(_) => {}
        }
    }
    let dirichlet_nodes: Vec<usize> = (0..n).filter(|&i| is_dirichlet[i]).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !is_dirichlet[i]).collect();
    let mut free_index = vec![None; n];
    for (k, &i) in free.iter().enumerate() {
        free_index[i] = Some(k);
    }
    Ok(DiscreteOperator {
        stiffness: k.build(),
        mass: ms.build(),
        robin: rb.build(),
        dirichlet_nodes,
        interface_bc,
        free,
        free_index,
        coords: m.nodes.clone(),
    })
}

/// Interior Neumann eigenpairs below the cutoff, with nodal modes over all
/// nodes (zero at Dirichlet nodes) normalized in the mass inner product.
#[derive(Clone, Debug)]
pub struct InteriorEigenBasis {
    pub mu: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub lambda_max: f64,
    pub max_residual: f64,
}

impl InteriorEigenBasis {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Nodal values of mode `m` at the given nodes.
    pub fn trace(&self, m: usize, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&i| self.modes[m][i]).collect()
    }
}

fn solve_eigs(op: &DiscreteOperator, lambda_max: f64, vectors: bool) -> Result<EigenPairs> {
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_max = {lambda_max} must be positive")));
    }
    let (k, m, c) = op.free_system()?;
    eigen::eigs_below(&k, &m, lambda_max, &c, vectors)
}

pub fn neumann_eigs(op: &DiscreteOperator, lambda_max: f64) -> Result<InteriorEigenBasis> {
    if op.interface_bc != InterfaceBc::Neumann {
        return Err(Error::Fem("neumann_eigs needs an operator with Neumann interface".into()));
    }
    let p = solve_eigs(op, lambda_max, true)?;
    Ok(InteriorEigenBasis {
        modes: p.vectors.iter().map(|v| op.expand(v)).collect(),
        mu: p.values,
        lambda_max,
        max_residual: p.max_residual,
    })
}

pub fn dirichlet_eigs(op: &DiscreteOperator, lambda_max: f64) -> Result<Vec<f64>> {
    if op.interface_bc != InterfaceBc::Dirichlet {
        return Err(Error::Fem("dirichlet_eigs needs an operator with Dirichlet interface".into()));
    }
    Ok(solve_eigs(op, lambda_max, false)?.values)
}

/// `#{mu < shift}` for the operator's interior pencil, from inertia.
pub fn count_below(op: &DiscreteOperator, shift: f64) -> Result<usize> {
    let (k, m, c) = op.free_system()?;
    eigen::count_below(&k, &m, shift, &c)
}

/// Load vector `int_edges f phi_i` over the edges with `tag`, four-point
/// Gauss per edge; `f` is evaluated at physical points.
pub fn edge_load(m: &Mesh, tag: i32, f: impl Fn(&Point) -> Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.n_nodes()];
    for (i, j) in m.edges_with_tag(tag) {
        let (pi, pj) = (m.nodes[i], m.nodes[j]);
        let len = (pj - pi).norm();
        for (t, w) in GAUSS4 {
            let v = f(&(pi + (pj - pi) * t)) * (w * len);
            out[i] += v * (1.0 - t);
            out[j] += v * t;
        }
    }
    out
}

/// Factorization of `K + Robin - lambda0 M` on the free nodes for repeated
/// Neumann-data solves.
pub struct NeumannBvp<'a> {
    op: &'a DiscreteOperator,
    matrix: SymCsr,
    factor: Ldlt,
    pub lambda0: f64,
}

impl<'a> NeumannBvp<'a> {
    /// Refuses `lambda0` within `1e-6` of a discrete Neumann eigenvalue in
    /// `mu` (the caller passes the computed spectrum).
    pub fn new(op: &'a DiscreteOperator, lambda0: f64, mu: &[f64]) -> Result<Self> {
        if op.interface_bc != InterfaceBc::Neumann {
            return Err(Error::Fem("Neumann data problem needs a Neumann interface".into()));
        }
        if let Some((index, &near)) = mu
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - lambda0).abs().total_cmp(&(b.1 - lambda0).abs()))
        {
            let margin = (near - lambda0).abs();
            if margin < 1e-6 {
                return Err(Error::NearNeumannEigenvalue {
                    lambda0,
                    index,
                    mu: near,
                    margin,
                });
            }
        }
        let (k, m, c) = op.free_system()?;
        let matrix = SymCsr::combine(1.0, &k, -lambda0, &m)?;
        let factor = Ldlt::factor(&matrix, &Ordering::Geometric(c))?;
        Ok(Self {
            op,
            matrix,
            factor,
            lambda0,
        })
    }

    /// Solves for a full-length complex load vector; returns the full-length
    /// nodal solution and the relative residual.
    pub fn solve(&self, load: &[Complex64]) -> (Vec<Complex64>, f64) {
        let lf: Vec<Complex64> = self.op.restrict(load);
        let re: Vec<f64> = lf.iter().map(|z| z.re).collect();
        let im: Vec<f64> = lf.iter().map(|z| z.im).collect();
        let xr = self.factor.solve(&re);
        let xi = self.factor.solve(&im);
        let rr = self.matrix.apply(&xr);
        let ri = self.matrix.apply(&xi);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for k in 0..lf.len() {
            num += (rr[k] - re[k]).powi(2) + (ri[k] - im[k]).powi(2);
            den += re[k].powi(2) + im[k].powi(2);
        }
        let rel = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        let full_r = self.op.expand(&xr);
        let full_i = self.op.expand(&xi);
        let x = full_r
            .into_iter()
            .zip(full_i)
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        (x, rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_preset, closed_rectangle, RobinCoeff};
    use crate::mesh::{generate, generate_refined};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn square_dirichlet_first(h: f64) -> f64 {
        let g = closed_rectangle(1.0, 1.0, RobinCoeff::dirichlet());
        let m = generate(&g, h).unwrap();
        let op = assemble(&m, &g, InterfaceBc::Neumann).unwrap();
        let (k, mm, c) = op.free_system().unwrap();
        eigen::eigs_below(&k, &mm, 25.0, &c, false).unwrap().values[0]
    }

    #[test]
    fn square_dirichlet_converges_quadratically() {
        let exact = 2.0 * PI * PI;
        let e: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&h| square_dirichlet_first(h) - exact)
            .collect();
        assert!(e[1].abs() / exact < 0.02);
        for w in e.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn square_dirichlet_count_below_30() {
        // Only 2 pi^2 ~ 19.74 lies below 30.
        let g = closed_rectangle(1.0, 1.0, RobinCoeff::dirichlet());
        let m = generate(&g, 1.0 / 16.0).unwrap();
        let op = assemble(&m, &g, InterfaceBc::Neumann).unwrap();
        assert_eq!(count_below(&op, 30.0).unwrap(), 1);
    }

    fn rect_ops(refine: usize) -> (Mesh, GeometryDesc, DiscreteOperator, DiscreteOperator) {
        let g = build_preset("rect-test", &BTreeMap::new()).unwrap();
        let m = generate_refined(&g, 0.25, refine).unwrap();
        let n = assemble(&m, &g, InterfaceBc::Neumann).unwrap();
        let d = assemble(&m, &g, InterfaceBc::Dirichlet).unwrap();
        (m, g, n, d)
    }

    /// Separation of variables on the unit square with Dirichlet at y = 0, 1,
    /// Neumann at x = 0 and the given condition at x = 1.
    fn rect_spectrum(neumann_at_1: bool, below: f64) -> Vec<f64> {
        let mut v = Vec::new();
        for j in 1..20 {
            for k in 0..20 {
                let kx = if neumann_at_1 {
                    k as f64 * PI
                } else {
                    if k == 0 {
                        continue;
                    }
                    (k as f64 - 0.5) * PI
                };
                let e = (j as f64 * PI).powi(2) + kx * kx;
                if e <= below {
                    v.push(e);
                }
            }
        }
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn rect_test_spectra_match_separation() {
        let (_, _, n, d) = rect_ops(3);
        let mu = neumann_eigs(&n, 50.0).unwrap();
        let exact_n = rect_spectrum(true, 50.0);
        assert_eq!(mu.len(), exact_n.len());
        for (a, b) in mu.mu.iter().zip(&exact_n) {
            assert!((a - b).abs() / b < 1e-2, "{a} vs {b}");
        }
        let nu = dirichlet_eigs(&d, 50.0).unwrap();
        let exact_d = rect_spectrum(false, 50.0);
        assert_eq!(nu.len(), exact_d.len());
        for (a, b) in nu.iter().zip(&exact_d) {
            assert!((a - b).abs() / b < 1e-2, "{a} vs {b}");
        }
        assert!(nu[0] > mu.mu[0]);
    }

    #[test]
    fn modes_are_mass_orthonormal_and_rayleigh_exact() {
        let (_, _, n, _) = rect_ops(3);
        let b = neumann_eigs(&n, 120.0).unwrap();
        let kk = SymCsr::combine(1.0, &n.stiffness, 1.0, &n.robin).unwrap();
        for (i, u) in b.modes.iter().enumerate() {
            for (j, v) in b.modes.iter().enumerate() {
                let g = n.mass.bilinear(u, v);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() <= 1e-8);
            }
            let rq = kk.bilinear(u, u) / n.mass.bilinear(u, u);
            assert!((rq - b.mu[i]).abs() <= 1e-10 * b.mu[i]);
        }
    }

    #[test]
    fn robin_edge_matrix() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = closed_rectangle(1.0, 1.0, RobinCoeff::new(s, s).unwrap());
        let m = generate(&g, 0.5).unwrap();
        let op = assemble(&m, &g, InterfaceBc::Neumann).unwrap();
        // Each boundary edge of length 1/2 contributes len/6 [2 1; 1 2].
        let (i, j, _) = m.boundary_edges[0];
        assert!((op.robin.get(i, j) - 0.5 / 6.0).abs() < 1e-15);
        let total: f64 = (0..m.n_nodes()).flat_map(|r| op.robin.row(r).map(|(_, v)| v).collect::<Vec<_>>()).sum();
        assert!((total - 4.0).abs() < 1e-13, "integral of 1 over boundary = perimeter");
        assert!(op.dirichlet_nodes.is_empty());
    }

    #[test]
    fn bvp_zero_and_near_eigenvalue() {
        let (m, _, n, _) = rect_ops(2);
        let mu = neumann_eigs(&n, 30.0).unwrap();
        let bvp = NeumannBvp::new(&n, -1.0, &mu.mu).unwrap();
        let (x, _) = bvp.solve(&vec![Complex64::new(0.0, 0.0); m.n_nodes()]);
        assert!(x.iter().all(|z| z.norm() == 0.0));
        match NeumannBvp::new(&n, mu.mu[0], &mu.mu) {
            Err(Error::NearNeumannEigenvalue { index, .. }) => assert_eq!(index, 0),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected refusal"),
        }
    }

    #[test]
    fn bvp_rectangle_trace_matches_analytic() {
        // v = cosh(s x) sin(pi y) sqrt2 / (s sinh s) solves the Neumann-data
        // problem with data w_1 at x = 1; its trace there is coth(s)/s w_1.
        let (m, _, n, _) = rect_ops(4);
        let mu = neumann_eigs(&n, 30.0).unwrap();
        let bvp = NeumannBvp::new(&n, -1.0, &mu.mu).unwrap();
        let w1 = |p: &Point| Complex64::new(2f64.sqrt() * (PI * p.y).sin(), 0.0);
        let load = edge_load(&m, 100, w1);
        let (x, res) = bvp.solve(&load);
        assert!(res < 1e-10);
        let s = (PI * PI + 1.0f64).sqrt();
        let coef = 1.0 / (s * s.tanh());
        let mut err: f64 = 0.0;
        for (i, j) in m.edges_with_tag(100) {
            for k in [i, j] {
                let p = m.nodes[k];
                err = err.max((x[k].re - coef * w1(&p).re).abs());
            }
        }
        assert!(err < 2e-3 * coef, "err {err}");
    }
}
