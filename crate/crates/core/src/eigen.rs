//! All eigenpairs below a cutoff of the symmetric-definite pencil `(K, M)`.
//!
//! The number of wanted pairs is fixed in advance by the inertia of
//! `K - lambda_max M`, so the solver knows exactly when it is done. Small
//! problems are solved densely; larger ones by shift-invert Lanczos with full
//! reorthogonalization in the `M` inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::sparse::{Ldlt, Ordering, SymCsr};

/// Problems up to this size use the dense path.
pub const DENSE_LIMIT: usize = 600;

/// Relative residual accepted for a Ritz pair.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// `M`-orthonormal columns, one per value.
    pub vectors: Vec<Vec<f64>>,
    /// Largest relative residual `|Kx - mu Mx| / (|Kx| + (|mu| + |s|) |Mx|)`
    /// with `s` the inversion shift (1 on the dense path).
    pub max_residual: f64,
    /// Size of the Krylov subspace used (0 for the dense path).
    pub subspace: usize,
}

/// Number of eigenvalues of `(K, M)` strictly below `shift`.
pub fn count_below(k: &SymCsr, m: &SymCsr, shift: f64, coords: &[Point]) -> Result<usize> {
    let a = SymCsr::combine(1.0, k, -shift, m)?;
    let f = Ldlt::factor(&a, &Ordering::Geometric(coords.to_vec()))?;
    Ok(f.negative_count())
}

/// All eigenpairs with eigenvalue `<= lambda_max`.
pub fn eigs_below(
    k: &SymCsr,
    m: &SymCsr,
    lambda_max: f64,
    coords: &[Point],
    want_vectors: bool,
) -> Result<EigenPairs> {
    let n = k.nrows();
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            max_residual: 0.0,
            subspace: 0,
        });
    }
    if n <= DENSE_LIMIT {
        return dense(k, m, lambda_max, want_vectors);
    }
    // Counting at a slightly raised cutoff keeps values equal to lambda_max.
    let cut = lambda_max + 1e-12 * lambda_max.abs().max(1.0);
    let count = count_below(k, m, cut, coords)?;
    lanczos(k, m, cut, count, coords, want_vectors)
}

fn dense(k: &SymCsr, m: &SymCsr, lambda_max: f64, want_vectors: bool) -> Result<EigenPairs> {
    let kd = k.to_dense();
    let md = m.to_dense();
    let chol = md
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigensolver("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("mass Cholesky factor singular".into()))?;
    let mut c = &linv * &kd * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cut = lambda_max + 1e-12 * lambda_max.abs().max(1.0);
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    let mut max_residual: f64 = 0.0;
    for idx in order {
        let mu = eig.eigenvalues[idx];
        if mu > cut {
            break;
        }
        let y = eig.eigenvectors.column(idx);
        let x: DVector<f64> = linv.transpose() * y;
        let kx = &kd * &x;
        let mx = &md * &x;
        let mu_rq = x.dot(&kx) / x.dot(&mx);
        let res = (&kx - &mx * mu_rq).norm() / (kx.norm() + (mu_rq.abs() + 1.0) * mx.norm()).max(1e-300);
        max_residual = max_residual.max(res);
        values.push(mu_rq);
        if want_vectors {
            let nrm = x.dot(&mx).sqrt();
            vectors.push((x / nrm).iter().copied().collect());
        }
    }
    Ok(EigenPairs {
        values,
        vectors,
        max_residual,
        subspace: 0,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Basis {
    q: Vec<Vec<f64>>,
    mq: Vec<Vec<f64>>,
}

impl Basis {
    /// Removes components along the basis (twice), returning the
    /// coefficients of the first pass plus corrections.
    fn orthogonalize(&self, w: &mut [f64]) -> Vec<f64> {
        let mut coef = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (i, (qi, mqi)) in self.q.iter().zip(&self.mq).enumerate() {
                let c = dot(mqi, w);
                coef[i] += c;
                axpy(-c, qi, w);
            }
        }
        coef
    }
}

fn lanczos(
    k: &SymCsr,
    m: &SymCsr,
    cut: f64,
    count: usize,
    coords: &[Point],
    want_vectors: bool,
) -> Result<EigenPairs> {
    let n = k.nrows();
    if count == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            max_residual: 0.0,
            subspace: 0,
        });
    }
    // Shift below the spectrum so the wanted values are the largest ones of
    // the inverted operator.
    let mut sigma = -1.0;
    let factor = loop {
        let a = SymCsr::combine(1.0, k, -sigma, m)?;
        let f = Ldlt::factor(&a, &Ordering::Geometric(coords.to_vec()))?;
        if f.negative_count() == 0 {
            break f;
        }
        sigma = 4.0 * sigma - 1.0;
        if sigma < -1e12 {
            return Err(Error::Eigensolver("pencil unbounded below".into()));
        }
    };
    let theta_cut = 1.0 / (cut - sigma);
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed_1a2c);
    let mut basis = Basis {
        q: Vec::new(),
        mq: Vec::new(),
    };
    let max_dim = n.min(8 * count + 400);
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut next_check = (count + 20).min(max_dim);
    let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut beta_prev;
    // Basis entry.
    {
        basis.orthogonalize(&mut w);
        let mw = m.apply(&w);
        let nrm = dot(&w, &mw).sqrt();
        w.iter_mut().for_each(|x| *x /= nrm);
        basis.mq.push(mw.iter().map(|x| x / nrm).collect());
        basis.q.push(w);
    }
    loop {
        let j = basis.q.len() - 1;
        let mut wv = basis.mq[j].clone();
        factor.solve_in_place(&mut wv);
        let coef = basis.orthogonalize(&mut wv);
        let mut mw = m.apply(&wv);
        let mut beta = dot(&wv, &mw).max(0.0).sqrt();
        h.push(coef);
        let scale = h[j][j].abs().max(theta_cut);
        if beta <= 1e-10 * scale {
            // Invariant subspace: continue from a fresh random direction.
            wv = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            basis.orthogonalize(&mut wv);
            mw = m.apply(&wv);
            beta = dot(&wv, &mw).sqrt();
            beta_prev = 0.0;
        } else {
            beta_prev = beta;
        }
        let dim = basis.q.len();
        if dim >= next_check || dim >= max_dim {
            let hm = projected(&h, dim);
            let eig = SymmetricEigen::new(hm);
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let wanted: Vec<usize> = order[..count.min(dim)].to_vec();
            let converged = wanted.iter().all(|&i| {
                let th = eig.eigenvalues[i];
                let est = (beta_prev * eig.eigenvectors[(dim - 1, i)]).abs();
                th > theta_cut * (1.0 - 1e-12) && est <= 1e-3 * RESIDUAL_TOL * th
            }) && wanted.len() == count;
            if converged || dim >= max_dim {
                let pairs = extract(k, m, &basis, &eig, &wanted, sigma);
                let ok = pairs.max_residual <= RESIDUAL_TOL
                    && pairs.values.iter().all(|&mu| mu <= cut)
                    && pairs.values.len() == count;
                if ok {
                    let mut p = pairs;
                    p.subspace = dim;
                    if !want_vectors {
                        p.vectors.clear();
                    }
                    return Ok(p);
                }
                if dim >= max_dim {
                    return Err(Error::Eigensolver(format!(
                        "Lanczos did not converge: {count} eigenvalues wanted below {cut}, \
                         subspace size {dim}, max residual {:.3e}",
                        pairs.max_residual
                    )));
                }
                // Missing copies of a repeated eigenvalue: inject a new
                // random direction.
                wv = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                basis.orthogonalize(&mut wv);
                mw = m.apply(&wv);
                beta = dot(&wv, &mw).sqrt();
                }
            next_check = (dim + (dim / 5).max(10)).min(max_dim);
        }
        wv.iter_mut().for_each(|x| *x /= beta);
        mw.iter_mut().for_each(|x| *x /= beta);
        basis.q.push(wv);
        basis.mq.push(mw);
    }
}

/// Symmetric projected matrix from the Gram-Schmidt coefficients; the
/// strictly lower part of column `j` follows from symmetry of the operator
/// in the `M` inner product.
fn projected(h: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    let mut hm = DMatrix::zeros(dim, dim);
    for (j, col) in h.iter().enumerate().take(dim) {
        for (i, &v) in col.iter().enumerate().take(dim) {
            if i <= j {
                hm[(i, j)] = v;
                hm[(j, i)] = v;
            }
        }
    }
    hm
}

fn extract(
    k: &SymCsr,
    m: &SymCsr,
    basis: &Basis,
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    wanted: &[usize],
    shift: f64,
) -> EigenPairs {
    let n = k.nrows();
    let dim = eig.eigenvalues.len();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(wanted.len());
    let mut max_residual: f64 = 0.0;
    for &i in wanted {
        let mut x = vec![0.0; n];
        for (jj, q) in basis.q.iter().enumerate().take(dim) {
            axpy(eig.eigenvectors[(jj, i)], q, &mut x);
        }
        let kx = k.apply(&x);
        let mx = m.apply(&x);
        let xmx = dot(&x, &mx);
        let mu = dot(&x, &kx) / xmx;
        let r: f64 = kx
            .iter()
            .zip(&mx)
            .map(|(a, b)| (a - mu * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let nk = dot(&kx, &kx).sqrt();
        let nm = dot(&mx, &mx).sqrt();
        // The shift keeps the scale meaningful for a zero eigenvalue.
        max_residual = max_residual.max(r / (nk + (mu.abs() + shift.abs()) * nm).max(1e-300));
        let s = xmx.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        pairs.push((mu, x));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    EigenPairs {
        values: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        max_residual,
        subspace: dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    /// 1D P1 Dirichlet Laplacian on (0, 1): closed-form discrete spectrum.
    fn p1_chain(n: usize) -> (SymCsr, SymCsr, Vec<Point>) {
        let h = 1.0 / (n + 1) as f64;
        let mut k = TripletBuilder::new(n);
        let mut m = TripletBuilder::new(n);
        for i in 0..n {
            k.add_sym(i, i, 2.0 / h);
            m.add_sym(i, i, 4.0 * h / 6.0);
            if i + 1 < n {
                k.add_sym(i, i + 1, -1.0 / h);
                m.add_sym(i, i + 1, h / 6.0);
            }
        }
        let coords = (0..n).map(|i| Point::new(i as f64 * h, 0.0)).collect();
        (k.build(), m.build(), coords)
    }

    fn chain_exact(n: usize, j: usize) -> f64 {
        let h = 1.0 / (n + 1) as f64;
        let c = (j as f64 * std::f64::consts::PI * h).cos();
        6.0 / (h * h) * (1.0 - c) / (2.0 + c)
    }

    #[test]
    fn dense_and_lanczos_agree_with_closed_form() {
        for n in [200, 2000] {
            let (k, m, coords) = p1_chain(n);
            let lmax = 2000.0;
            let p = eigs_below(&k, &m, lmax, &coords, true).unwrap();
            let expected: Vec<f64> = (1..=n).map(|j| chain_exact(n, j)).filter(|&v| v <= lmax).collect();
            assert_eq!(p.values.len(), expected.len(), "n = {n}");
            for (a, b) in p.values.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-9 * b, "{a} vs {b}");
            }
            for (i, x) in p.vectors.iter().enumerate() {
                for (j, y) in p.vectors.iter().enumerate() {
                    let g = m.bilinear(x, y);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn repeated_eigenvalues_found() {
        // Two uncoupled copies of the same chain: every eigenvalue doubled.
        let n = 700;
        let (k1, m1, _) = p1_chain(n);
        let mut k = TripletBuilder::new(2 * n);
        let mut m = TripletBuilder::new(2 * n);
        for off in [0, n] {
            for i in 0..n {
                for (j, v) in k1.row(i) {
                    if j >= i {
                        k.add_sym(off + i, off + j, v);
                    }
                }
                for (j, v) in m1.row(i) {
                    if j >= i {
                        m.add_sym(off + i, off + j, v);
                    }
                }
            }
        }
        let coords: Vec<Point> = (0..2 * n).map(|i| Point::new((i % n) as f64, (i / n) as f64)).collect();
        let p = eigs_below(&k.build(), &m.build(), 500.0, &coords, false).unwrap();
        let single: Vec<f64> = (1..=n).map(|j| chain_exact(n, j)).filter(|&v| v <= 500.0).collect();
        assert_eq!(p.values.len(), 2 * single.len());
        for (i, v) in single.iter().enumerate() {
            assert!((p.values[2 * i] - v).abs() < 1e-8 * v);
            assert!((p.values[2 * i + 1] - v).abs() < 1e-8 * v);
        }
    }

    #[test]
    fn inertia_count() {
        let (k, m, coords) = p1_chain(50);
        let c = count_below(&k, &m, 100.0, &coords).unwrap();
        let e = (1..=50).filter(|&j| chain_exact(50, j) < 100.0).count();
        assert_eq!(c, e);
    }
}
