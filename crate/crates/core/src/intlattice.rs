//! Integer lattices in `Z^n` through Hermite normal form with tracked transforms.

use num_integer::Integer;

use crate::linalg;
use crate::scalar::ExactScalar;

/// Row Hermite normal form of a list of integer generators.
///
/// `h = v * generators` with `v` unimodular; the first `rank` rows of `h` are
/// in echelon form with positive pivots and reduced entries above each pivot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hnf {
    pub ncols: usize,
    pub h: Vec<Vec<i64>>,
    pub v: Vec<Vec<i64>>,
    pub pivots: Vec<usize>,
}

fn row_axpy(dst: &mut [i64], q: i64, src: &[i64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = d
            .checked_sub(q.checked_mul(*s).expect("integer overflow in lattice arithmetic"))
            .expect("integer overflow in lattice arithmetic");
    }
}

impl Hnf {
    pub fn new(generators: &[Vec<i64>], ncols: usize) -> Self {
        let n = generators.len();
        let mut a: Vec<Vec<i64>> = generators.to_vec();
        let mut v: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..ncols {
            if r == n {
                break;
            }
            loop {
                let Some(p) = (r..n)
                    .filter(|&i| a[i][c] != 0)
                    .min_by_key(|&i| a[i][c].unsigned_abs())
                else {
                    break;
                };
                a.swap(r, p);
                v.swap(r, p);
                let mut done = true;
                for i in r + 1..n {
                    if a[i][c] != 0 {
                        let q = Integer::div_floor(&a[i][c], &a[r][c]);
                        let (pr, pv) = (a[r].clone(), v[r].clone());
                        row_axpy(&mut a[i], q, &pr);
                        row_axpy(&mut v[i], q, &pv);
                        done &= a[i][c] == 0;
                    }
                }
                if done {
                    break;
                }
            }
            if a[r][c] == 0 {
                continue;
            }
            if a[r][c] < 0 {
                a[r].iter_mut().for_each(|x| *x = -*x);
                v[r].iter_mut().for_each(|x| *x = -*x);
            }
            let p = a[r][c];
            for i in 0..r {
                let q = Integer::div_floor(&a[i][c], &p);
                if q != 0 {
                    let (pr, pv) = (a[r].clone(), v[r].clone());
                    row_axpy(&mut a[i], q, &pr);
                    row_axpy(&mut v[i], q, &pv);
                }
            }
            pivots.push(c);
            r += 1;
        }
        Self {
            ncols,
            h: a,
            v,
            pivots,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Echelon basis of the lattice.
    pub fn basis(&self) -> &[Vec<i64>] {
        &self.h[..self.rank()]
    }

    /// Canonical representative of `x` modulo the lattice, and coefficients
    /// `c` on the original generators with `x - residue = sum c_i g_i`.
    pub fn reduce(&self, x: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let mut out = x.to_vec();
        let mut coeffs = vec![0i64; self.v.len()];
        for (k, &pc) in self.pivots.iter().enumerate() {
            let q = Integer::div_floor(&out[pc], &self.h[k][pc]);
            if q != 0 {
                row_axpy(&mut out, q, &self.h[k]);
                row_axpy(&mut coeffs, -q, &self.v[k]);
            }
        }
        (out, coeffs)
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.reduce(x).0.iter().all(|&e| e == 0)
    }

    /// Integer coefficients on the original generators summing to `x`, if any.
    pub fn solve(&self, x: &[i64]) -> Option<Vec<i64>> {
        let (res, coeffs) = self.reduce(x);
        res.iter().all(|&e| e == 0).then_some(coeffs)
    }

    /// Basis of the integer relations among the generators.
    pub fn relations(&self) -> Vec<Vec<i64>> {
        self.v[self.rank()..].to_vec()
    }

    /// Index in `Z^ncols`, or `None` when the lattice is not of full rank.
    pub fn index(&self) -> Option<u128> {
        if self.rank() < self.ncols {
            return None;
        }
        Some(
            self.pivots
                .iter()
                .enumerate()
                .map(|(k, &c)| self.h[k][c] as u128)
                .product(),
        )
    }

    /// A complete residue system of `Z^ncols` modulo a full-rank lattice.
    pub fn residues(&self) -> Option<Vec<Vec<i64>>> {
        self.index()?;
        let diag: Vec<i64> = (0..self.ncols).map(|k| self.h[k][self.pivots[k]]).collect();
        let mut out = vec![vec![0i64; self.ncols]];
        for (c, &d) in diag.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * d as usize);
            for r in &out {
                for t in 0..d {
                    let mut r = r.clone();
                    r[c] = t;
                    next.push(r);
                }
            }
            out = next;
        }
        Some(out)
    }
}

/// Integer kernel `{x in Z^n : m x = 0}` of an integer matrix with `n` columns.
pub fn integer_kernel(m: &[Vec<i64>], n: usize) -> Vec<Vec<i64>> {
    let cols: Vec<Vec<i64>> = (0..n).map(|j| m.iter().map(|row| row[j]).collect()).collect();
    Hnf::new(&cols, m.len()).relations()
}

/// An integer solution of `m x = d`, if one exists.
pub fn solve_integer(m: &[Vec<i64>], d: &[i64], n: usize) -> Option<Vec<i64>> {
    let cols: Vec<Vec<i64>> = (0..n).map(|j| m.iter().map(|row| row[j]).collect()).collect();
    Hnf::new(&cols, m.len()).solve(d)
}

/// Clears denominators of a rational vector, keeping the direction.
pub fn primitive_integer_vector<T: ExactScalar>(v: &[T]) -> Vec<i64> {
    let mut l = 1i64;
    for x in v {
        let d = x.to_rational().denom().clone();
        let d: i64 = num_traits::ToPrimitive::to_i64(&d).expect("denominator fits in i64");
        l = l.lcm(&d);
    }
    let scaled: Vec<i64> = v
        .iter()
        .map(|x| {
            (x.clone() * T::from_i64(l).expect("small"))
                .to_integer()
                .expect("cleared denominator")
        })
        .collect();
    let g = scaled.iter().fold(0i64, |g, &x| g.gcd(&x));
    if g > 1 {
        scaled.iter().map(|x| x / g).collect()
    } else {
        scaled
    }
}

/// `V ∩ Z^n` for a rational subspace `V` given by spanning rows.
pub fn saturated_lattice<T: ExactScalar>(span: &[Vec<T>], n: usize) -> Vec<Vec<i64>> {
    if span.is_empty() {
        return Vec::new();
    }
    let annihilator: Vec<Vec<i64>> = linalg::null_space(&span.to_vec(), n)
        .iter()
        .map(|v| primitive_integer_vector(v))
        .collect();
    if annihilator.is_empty() {
        return (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
    }
    integer_kernel(&annihilator, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_vec(m: &[Vec<i64>], x: &[i64]) -> Vec<i64> {
        m.iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn hnf_of_simple_lattice() {
        let h = Hnf::new(&[vec![4, 6], vec![6, 9], vec![2, 0]], 2);
        assert_eq!(h.rank(), 2);
        assert_eq!(h.index(), Some(6));
        assert_eq!(h.residues().unwrap().len(), 6);
        assert_eq!(h.relations().len(), 1);
        let r = &h.relations()[0];
        let combo: Vec<i64> = (0..2)
            .map(|c| r[0] * [4, 6][c] + r[1] * [6, 9][c] + r[2] * [2, 0][c])
            .collect();
        assert_eq!(combo, vec![0, 0]);
    }

    #[test]
    fn reduction_is_canonical() {
        let h = Hnf::new(&[vec![2, 0], vec![1, 3]], 2);
        let a = h.reduce(&[5, 7]).0;
        let b = h.reduce(&[5 + 2 * 3 - 1, 7 - 3]).0;
        assert_eq!(a, b);
        let (res, c) = h.reduce(&[5, 7]);
        let back: Vec<i64> = (0..2).map(|k| res[k] + c[0] * [2, 0][k] + c[1] * [1, 3][k]).collect();
        assert_eq!(back, vec![5, 7]);
    }

    #[test]
    fn kernel_and_solve() {
        let m = vec![vec![0, -2, 0]];
        let k = integer_kernel(&m, 3);
        assert_eq!(k.len(), 2);
        for v in &k {
            assert_eq!(mat_vec(&m, v), vec![0]);
        }
        let x = solve_integer(&[vec![2, 4], vec![0, 3]], &[6, 3], 2).unwrap();
        assert_eq!(mat_vec(&[vec![2, 4], vec![0, 3]], &x), vec![6, 3]);
        assert!(solve_integer(&[vec![2, 4]], &[3], 2).is_none());
    }
}
