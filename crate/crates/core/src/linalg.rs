//! Dense linear algebra over a generic field: echelon forms, null spaces, solves.

use crate::scalar::Scalar;

pub type Vector<T> = Vec<T>;
/// Row-major dense matrix.
pub type Matrix<T> = Vec<Vec<T>>;

pub fn zeros<T: Scalar>(n: usize) -> Vector<T> {
    vec![T::zero(); n]
}

pub fn unit<T: Scalar>(n: usize, i: usize) -> Vector<T> {
    let mut v = zeros(n);
    v[i] = T::one();
    v
}

pub fn identity<T: Scalar>(n: usize) -> Matrix<T> {
    (0..n).map(|i| unit(n, i)).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vector<T> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vector<T> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect()
}

pub fn scale<T: Scalar>(s: &T, a: &[T]) -> Vector<T> {
    a.iter().map(|x| s.clone() * x.clone()).collect()
}

pub fn neg<T: Scalar>(a: &[T]) -> Vector<T> {
    a.iter().map(|x| -x.clone()).collect()
}

/// `a + s * b`
pub fn axpy<T: Scalar>(a: &[T], s: &T, b: &[T]) -> Vector<T> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.clone() + s.clone() * y.clone())
        .collect()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn is_zero_vec<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_negligible())
}

pub fn mat_vec<T: Scalar>(m: &Matrix<T>, v: &[T]) -> Vector<T> {
    m.iter().map(|row| dot(row, v)).collect()
}

pub fn mat_mul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    row.iter()
                        .zip(b)
                        .fold(T::zero(), |acc, (x, brow)| acc + x.clone() * brow[j].clone())
                })
                .collect()
        })
        .collect()
}

pub fn transpose<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| m.iter().map(|row| row[j].clone()).collect())
        .collect()
}

/// Reduced row echelon form. Returns the nonzero rows and their pivot columns.
pub fn rref<T: Scalar>(mut rows: Matrix<T>) -> (Matrix<T>, Vec<usize>) {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        // Largest magnitude pivot keeps the float path stable; exact types are unaffected.
        let Some(p) = (r..rows.len())
            .filter(|&i| !rows[i][c].is_negligible())
            .max_by(|&a, &b| {
                rows[a][c]
                    .abs()
                    .partial_cmp(&rows[b][c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        else {
            continue;
        };
        rows.swap(r, p);
        let inv = T::one() / rows[r][c].clone();
        for x in rows[r].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                let pivot_row = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&pivot_row) {
                    *x = x.clone() - f.clone() * y.clone();
                }
                rows[i][c] = T::zero();
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    (rows, pivots)
}

pub fn rank<T: Scalar>(rows: &Matrix<T>) -> usize {
    rref(rows.clone()).1.len()
}

/// Basis of `{x : m x = 0}` where `m` has `ncols` columns.
pub fn null_space<T: Scalar>(m: &Matrix<T>, ncols: usize) -> Matrix<T> {
    let (r, pivots) = rref(m.clone());
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = zeros(ncols);
            v[f] = T::one();
            for (row, &p) in r.iter().zip(&pivots) {
                v[p] = -row[f].clone();
            }
            v
        })
        .collect()
}

/// One solution of `m x = b`, if any.
pub fn solve<T: Scalar>(m: &Matrix<T>, b: &[T], ncols: usize) -> Option<Vector<T>> {
    let aug: Matrix<T> = m
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let (r, pivots) = rref(aug);
    if pivots.last() == Some(&ncols) {
        return None;
    }
    let mut x = zeros(ncols);
    for (row, &p) in r.iter().zip(&pivots) {
        x[p] = row[ncols].clone();
    }
    Some(x)
}

pub fn inverse<T: Scalar>(m: &Matrix<T>) -> Option<Matrix<T>> {
    let n = m.len();
    let aug: Matrix<T> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend(unit::<T>(n, i));
            r
        })
        .collect();
    let (r, pivots) = rref(aug);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return None;
    }
    Some(r.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Determinant by Gaussian elimination.
pub fn determinant<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.len();
    let mut a = m.clone();
    let mut det = T::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_negligible()) else {
            return T::zero();
        };
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det = det * a[c][c].clone();
        for i in c + 1..n {
            let f = a[i][c].clone() / a[c][c].clone();
            for j in c..n {
                let v = a[c][j].clone();
                a[i][j] = a[i][j].clone() - f.clone() * v;
            }
        }
    }
    det
}

/// A linear subspace stored by its reduced row echelon basis, so equality is structural.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T> {
    pub ambient_dim: usize,
    pub basis: Matrix<T>,
    pivots: Vec<usize>,
}

impl<T: Scalar> Subspace<T> {
    pub fn span(ambient_dim: usize, vectors: Matrix<T>) -> Self {
        let (basis, pivots) = if vectors.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            rref(vectors)
        };
        Self {
            ambient_dim,
            basis,
            pivots,
        }
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Self::span(ambient_dim, Vec::new())
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self::span(ambient_dim, identity(ambient_dim))
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_zero(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Canonical representative of `v` modulo the subspace: pivot coordinates cleared.
    pub fn reduce(&self, v: &[T]) -> Vector<T> {
        let mut out = v.to_vec();
        for (row, &p) in self.basis.iter().zip(&self.pivots) {
            if !out[p].is_zero() {
                let f = out[p].clone();
                out = axpy(&out, &(-f), row);
            }
        }
        out
    }

    /// Coordinates of `v` in the echelon basis, if `v` lies in the subspace.
    pub fn coordinates(&self, v: &[T]) -> Option<Vector<T>> {
        let coords: Vector<T> = self.pivots.iter().map(|&p| v[p].clone()).collect();
        let mut rebuilt = zeros(self.ambient_dim);
        for (c, row) in coords.iter().zip(&self.basis) {
            rebuilt = axpy(&rebuilt, c, row);
        }
        is_zero_vec(&sub(&rebuilt, v)).then_some(coords)
    }

    pub fn contains(&self, v: &[T]) -> bool {
        is_zero_vec(&self.reduce(v))
    }

    pub fn contains_subspace(&self, other: &Subspace<T>) -> bool {
        other.basis.iter().all(|v| self.contains(v))
    }

    pub fn sum(&self, other: &Subspace<T>) -> Subspace<T> {
        let mut vs = self.basis.clone();
        vs.extend(other.basis.iter().cloned());
        Subspace::span(self.ambient_dim, vs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;

    fn m(rows: &[&[i64]]) -> Matrix<BigRational> {
        rows.iter()
            .map(|r| r.iter().map(|&x| rat(x, 1)).collect())
            .collect()
    }

    #[test]
    fn null_space_of_rank_deficient_matrix() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6]]);
        let ns = null_space(&a, 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(is_zero_vec(&mat_vec(&a, v)));
        }
    }

    #[test]
    fn solve_and_inverse() {
        let a = m(&[&[2, 1], &[1, 1]]);
        let x = solve(&a, &[rat(3, 1), rat(2, 1)], 2).unwrap();
        assert_eq!(x, vec![rat(1, 1), rat(1, 1)]);
        let inv = inverse(&a).unwrap();
        assert_eq!(mat_mul(&a, &inv), identity(2));
        assert_eq!(determinant(&a), rat(1, 1));
        assert!(solve(&m(&[&[1, 1], &[1, 1]]), &[rat(1, 1), rat(2, 1)], 2).is_none());
        assert!(inverse(&m(&[&[1, 1], &[1, 1]])).is_none());
    }

    #[test]
    fn subspace_equality_is_basis_independent() {
        let a = Subspace::span(3, m(&[&[1, 1, 0], &[0, 1, 1]]));
        let b = Subspace::span(3, m(&[&[1, 2, 1], &[1, 0, -1]]));
        assert_eq!(a, b);
        assert!(a.contains(&[rat(2, 1), rat(3, 1), rat(1, 1)]));
        assert!(!a.contains(&[rat(0, 1), rat(0, 1), rat(1, 1)]));
        let c = a.coordinates(&[rat(2, 1), rat(3, 1), rat(1, 1)]).unwrap();
        assert_eq!(c.len(), 2);
    }
}
