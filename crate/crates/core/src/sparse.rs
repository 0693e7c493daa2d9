//! Sparse symmetric matrices and an LDL^T factorization with inertia.
//!
//! The factorization is the classical up-looking scheme driven by the
//! elimination tree, applied after a fill-reducing permutation. For FEM
//! matrices the permutation is a geometric nested dissection computed from
//! node coordinates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Symmetric matrix in compressed-row form with both triangles stored.
#[derive(Clone, Debug)]
pub struct SymCsr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

/// Accumulates `(i, j, v)` contributions; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    n: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![BTreeMap::new(); n],
        }
    }

    /// Adds `v` at `(i, j)` and, when `i != j`, at `(j, i)`.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        *self.rows[i].entry(j).or_default() += v;
        if i != j {
            *self.rows[j].entry(i).or_default() += v;
        }
    }

    pub fn build(self) -> SymCsr {
        let mut indptr = Vec::with_capacity(self.n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in self.rows {
            for (j, v) in row {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        SymCsr {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }
}

impl SymCsr {
    pub fn zeros(n: usize) -> Self {
        TripletBuilder::new(n).build()
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// `alpha A + beta B`; the union of both patterns.
    pub fn combine(alpha: f64, a: &SymCsr, beta: f64, b: &SymCsr) -> Result<SymCsr> {
        if a.n != b.n {
            return Err(Error::InvalidArgument(format!(
                "matrix sizes differ: {} vs {}",
                a.n, b.n
            )));
        }
        let mut indptr = Vec::with_capacity(a.n + 1);
        let mut indices = Vec::with_capacity(a.nnz().max(b.nnz()));
        let mut data = Vec::with_capacity(a.nnz().max(b.nnz()));
        indptr.push(0);
        for i in 0..a.n {
            let mut ra = a.row(i).peekable();
            let mut rb = b.row(i).peekable();
            loop {
                match (ra.peek().copied(), rb.peek().copied()) {
                    (Some((ja, va)), Some((jb, vb))) => {
                        if ja == jb {
                            indices.push(ja);
                            data.push(alpha * va + beta * vb);
                            ra.next();
                            rb.next();
                        } else if ja < jb {
                            indices.push(ja);
                            data.push(alpha * va);
                            ra.next();
                        } else {
                            indices.push(jb);
                            data.push(beta * vb);
                            rb.next();
                        }
                    }
                    (Some((ja, va)), None) => {
                        indices.push(ja);
                        data.push(alpha * va);
                        ra.next();
                    }
                    (None, Some((jb, vb))) => {
                        indices.push(jb);
                        data.push(beta * vb);
                        rb.next();
                    }
                    (None, None) => break,
                }
            }
            indptr.push(indices.len());
        }
        Ok(SymCsr {
            n: a.n,
            indptr,
            indices,
            data,
        })
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> SymCsr {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut indptr = Vec::with_capacity(keep.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for &i in keep {
            let mut row: Vec<(usize, f64)> = self
                .row(i)
                .filter(|(j, _)| map[*j] != usize::MAX)
                .map(|(j, v)| (map[j], v))
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            for (j, v) in row {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        SymCsr {
            n: keep.len(),
            indptr,
            indices,
            data,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m = m.max((v - self.get(j, i)).abs());
            }
        }
        m
    }
}

/// Fill-reducing orderings.
#[derive(Clone, Debug)]
pub enum Ordering {
    Natural,
    /// Nested dissection by recursive coordinate bisection.
    Geometric(Vec<Point>),
}

/// Permutation `perm[k] = original index of the k-th pivot`.
pub fn compute_ordering(a: &SymCsr, ordering: &Ordering) -> Vec<usize> {
    match ordering {
        Ordering::Natural => (0..a.n).collect(),
        Ordering::Geometric(coords) => {
            assert_eq!(coords.len(), a.n, "one coordinate per unknown");
            let mut perm = Vec::with_capacity(a.n);
            let mut mark = vec![0u32; a.n];
            let all: Vec<usize> = (0..a.n).collect();
            dissect(a, coords, all, &mut perm, &mut mark, 1);
            perm
        }
    }
}

const LEAF_SIZE: usize = 48;

fn dissect(
    a: &SymCsr,
    coords: &[Point],
    mut set: Vec<usize>,
    perm: &mut Vec<usize>,
    mark: &mut [u32],
    stamp: u32,
) {
    if set.len() <= LEAF_SIZE {
        perm.extend(set);
        return;
    }
    let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
    for &i in &set {
        lo = lo.inf(&coords[i]);
        hi = hi.sup(&coords[i]);
    }
    let axis = if hi.x - lo.x >= hi.y - lo.y { 0 } else { 1 };
    let mid = set.len() / 2;
    set.select_nth_unstable_by(mid, |&i, &j| {
        coords[i][axis]
            .total_cmp(&coords[j][axis])
            .then(i.cmp(&j))
    });
    let right: Vec<usize> = set[mid..].to_vec();
    let mut left: Vec<usize> = set[..mid].to_vec();
    // Nodes on the left adjacent to the right half form the separator.
    let tag = 2 * stamp;
    for &i in &right {
        mark[i] = tag;
    }
    let (sep, rest): (Vec<usize>, Vec<usize>) = left
        .drain(..)
        .partition(|&i| a.row(i).any(|(j, _)| mark[j] == tag));
    dissect(a, coords, rest, perm, mark, 2 * stamp + 1);
    dissect(a, coords, right, perm, mark, 2 * stamp + 1);
    perm.extend(sep);
}

/// `P A P^T = L D L^T` with unit lower-triangular `L`.
#[derive(Clone, Debug)]
pub struct Ldlt {
    n: usize,
    perm: Vec<usize>,
    /// Column pointers of L (strictly lower part, column-wise).
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl Ldlt {
    pub fn factor(a: &SymCsr, ordering: &Ordering) -> Result<Self> {
        let perm = compute_ordering(a, ordering);
        Self::factor_with_perm(a, perm)
    }

    pub fn factor_with_perm(a: &SymCsr, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        // Symbolic: elimination tree and column counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (j, _) in a.row(perm[k]) {
                let mut i = pinv[j];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == usize::MAX {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|c| *c = 0);
        flag.iter_mut().for_each(|f| *f = usize::MAX);
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (j, v) in a.row(perm[k]) {
                let mut i = pinv[j];
                if i <= k {
                    y[i] += v;
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let (start, end) = (lp[i], lp[i] + lnz[i]);
                for p in start..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                lnz[i] += 1;
            }
            if d[k] == 0.0 || !d[k].is_finite() || d[k].abs() < 1e-14 * scale {
                return Err(Error::Eigensolver(format!(
                    "LDL^T pivot {k} is numerically zero ({:e}); shift is at an eigenvalue",
                    d[k]
                )));
            }
        }
        Ok(Self {
            n,
            perm,
            lp,
            li,
            lx,
            d,
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// Number of negative pivots; by Sylvester's law, the number of negative
    /// eigenvalues of the factored matrix.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
