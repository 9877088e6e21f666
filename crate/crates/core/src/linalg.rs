//! Small dense linear algebra: row-major square matrices, LU solves and
//! the Perron root of nonnegative matrices.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Row vector times matrix, `x^T A`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Solves `a x = b` by LU with partial pivoting. Returns `None` when a pivot
/// falls below `rel_pivot_tol * max|a|`.
pub fn lu_solve(a: &Matrix, b: &[f64], rel_pivot_tol: f64) -> Option<Vec<f64>> {
    let n = a.dim();
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmax <= rel_pivot_tol * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.data.swap(col * n + j, piv * n + j);
            }
            x.swap(col, piv);
        }
        let p = m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|j| m[(col, j)] * x[j]).sum();
        x[col] = (x[col] - s) / m[(col, col)];
    }
    Some(x)
}

/// Stationary law of a stochastic-like operator: solves `pi A = 0`,
/// `sum(pi) = 1` where `A` is `J - I` (discrete) or a generator (fluid).
///
/// The transposed system has one redundant row (columns of `A^T` sum to
/// zero); it is replaced by the normalization row.
pub(crate) fn null_left_vector(a: &Matrix) -> Option<Vec<f64>> {
    let n = a.dim();
    let mut t = a.transpose();
    for j in 0..n {
        t[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mut pi = lu_solve(&t, &rhs, 1e-12)?;
    // Round-off may leave tiny negative entries.
    let floor = 1e-13;
    if pi.iter().any(|&p| p < -floor) {
        return None;
    }
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Some(pi)
}

/// Perron root of an entrywise nonnegative matrix whose Perron vector is
/// strictly positive.
///
/// Iterates `x <- M^(2^k) 1` by repeated squaring and brackets the root
/// with Collatz-Wielandt bounds `min (Mx)_i/x_i <= rho <= max (Mx)_i/x_i`,
/// stopping once the bracket is narrower than `1e-14` relative.
pub fn perron_root(m: &Matrix) -> Result<f64> {
    perron_pair(m).map(|(root, _)| root)
}

/// Perron root together with the (max-normalized) iterate it was read from.
fn perron_pair(m: &Matrix) -> Result<(f64, Vec<f64>)> {
    const MAX_SQUARINGS: usize = 80;
    const REL_TOL: f64 = 1e-14;
    let n = m.dim();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    if n == 1 {
        return Ok((m[(0, 0)], vec![1.0]));
    }
    let mut power = m.clone();
    normalize_max(&mut power);
    let mut x = vec![1.0; n];
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..MAX_SQUARINGS {
        x = power.mul_vec(&x);
        let xmax = x.iter().fold(0.0_f64, |a, &b| a.max(b));
        if !(xmax > 0.0) || !xmax.is_finite() {
            return Err(Error::NonConvergence {
                what: "Perron root",
                iterations: 0,
            });
        }
        x.iter_mut().for_each(|v| *v /= xmax);
        let (lo, hi) = collatz_wielandt(m, &x);
        if hi == 0.0 {
            return Ok((0.0, x));
        }
        let gap = (hi - lo) / hi;
        if gap <= REL_TOL {
            return Ok((0.5 * (lo + hi), polish(&power, x)));
        }
        if gap < best_gap * 0.5 {
            best_gap = gap;
            stalled = 0;
        } else {
            stalled += 1;
            // Round-off floor: accept once the bracket stops shrinking.
            if stalled >= 4 && gap <= 1e-11 {
                return Ok((0.5 * (lo + hi), polish(&power, x)));
            }
        }
        power = power.mul(&power);
        normalize_max(&mut power);
    }
    Err(Error::NonConvergence {
        what: "Perron root",
        iterations: MAX_SQUARINGS,
    })
}

/// One more pass of the accumulated power. The root bracket can close while
/// the iterate still carries errors well above round-off; by now `power` is
/// close to rank one, so a single product removes them.
fn polish(power: &Matrix, x: Vec<f64>) -> Vec<f64> {
    let mut y = power.mul_vec(&x);
    let ymax = y.iter().fold(0.0_f64, |a, &b| a.max(b));
    if !(ymax > 0.0) || !ymax.is_finite() {
        return x;
    }
    y.iter_mut().for_each(|v| *v /= ymax);
    y
}

fn normalize_max(m: &mut Matrix) {
    let s = m.max_abs();
    if s > 0.0 && s.is_finite() {
        m.scale_in_place(1.0 / s);
    }
}

fn collatz_wielandt(m: &Matrix, x: &[f64]) -> (f64, f64) {
    let mx = m.mul_vec(x);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (a, b) in mx.iter().zip(x) {
        if *b > 0.0 {
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

/// Largest real eigenvalue of an essentially nonnegative (Metzler) matrix,
/// via a diagonal shift to a nonnegative matrix.
pub fn spectral_abscissa_metzler(a: &Matrix) -> Result<f64> {
    let n = a.dim();
    let shift = (0..n).map(|i| -a[(i, i)]).fold(0.0_f64, f64::max) + 1.0;
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += shift;
    }
    let (root, v) = perron_pair(&shifted)?;
    let coarse = root - shift;
    Ok(newton_abscissa(a, &v, coarse)
        .filter(|mu| (mu - coarse).abs() <= 1e-9 * shift.max(coarse.abs()))
        .unwrap_or(coarse))
}

/// Polishes the abscissa of `a` from a Perron vector estimate.
///
/// Subtracting the diagonal shift loses every digit the abscissa lacks
/// next to the diagonal. Here the vector is written as `1 + d` around its
/// largest entry with the small offsets `d` stored directly, and Newton's
/// method is run on
/// `s_i (1 + d_i) + sum_{j != i} a_ij (d_j - d_i) = mu (1 + d_i)`
/// with `s_i` the row sums. Nothing in that residual cancels.
fn newton_abscissa(a: &Matrix, v: &[f64], mu0: f64) -> Option<f64> {
    let n = a.dim();
    if n < 2 || v.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let r = (0..n).max_by(|&i, &j| v[i].total_cmp(&v[j]))?;
    let mut d: Vec<f64> = v.iter().map(|x| (x - v[r]) / v[r]).collect();
    let sums: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut mu = mu0;
    for _ in 0..6 {
        let res: Vec<f64> = (0..n)
            .map(|i| {
                let coupling: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)] * (d[j] - d[i])).sum();
                (sums[i] - mu) * (1.0 + d[i]) + coupling
            })
            .collect();
        let mut jac = a.clone();
        for i in 0..n {
            jac[(i, i)] -= mu;
            jac[(i, r)] = -(1.0 + d[i]);
        }
        let step = lu_solve(&jac, &res.iter().map(|x| -x).collect::<Vec<_>>(), 1e-13)?;
        for k in 0..n {
            if k == r {
                mu += step[k];
            } else {
                d[k] += step[k];
            }
        }
        if !mu.is_finite() {
            return None;
        }
        if step[r].abs() <= 4.0 * f64::EPSILON * mu.abs() {
            break;
        }
    }
    Some(mu)
}

/// Period of the closed class of a chain given its stationary support.
/// Returns 1 for aperiodic chains.
pub(crate) fn period_on_support(adj: &Matrix, support: &[bool]) -> usize {
    let n = adj.dim();
    let Some(start) = support.iter().position(|&s| s) else {
        return 1;
    };
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !support[v] || adj[(u, v)] <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let d = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, d);
            }
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
