//! Nilpotent Lie algebras given by structure constants in a fixed basis.
//!
//! Everything here is exact when instantiated with a rational scalar. The
//! same code runs over `f64` for the adapted orthonormal frames used by the
//! geometry layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::scalar::{format_rational, parse_rational, rational_to_scalar, Scalar};
use num_rational::BigRational;
use num_traits::Zero;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("antisymmetry fails at c[{i}][{j}][{k}]")]
    AntisymmetryViolation { i: usize, j: usize, k: usize },
    #[error("derived series stabilizes at a nonzero subspace of dimension {0}")]
    NonTerminating(usize),
    #[error("subspace is not an ideal: [b_{basis}, v_{vector}] leaves it")]
    NotAnIdeal { basis: usize, vector: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed algebra input: {0}")]
    Parse(String),
}

/// One failing instance of the Jacobi identity.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiViolation<T> {
    pub triple: (usize, usize, usize),
    /// Cyclic sum `[[b_i,b_j],b_l] + [[b_j,b_l],b_i] + [[b_l,b_i],b_j]`.
    pub residual: Vector<T>,
}

/// Bracket table `c[i][j][k]`: coefficient of `b_k` in `[b_i, b_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants<T> {
    pub dim: usize,
    pub labels: Vec<String>,
    c: Vec<Vec<Vec<T>>>,
    /// Nonzero entries `(i, j, k, c)`, used by `bracket`.
    terms: Vec<(usize, usize, usize, T)>,
}

impl<T: Scalar> StructureConstants<T> {
    /// Builds the table from brackets `[b_i, b_j] = sum coef * b_k` given for
    /// `i < j` or `i > j`; the antisymmetric partner is filled in.
    pub fn from_brackets(labels: Vec<String>, brackets: &[(usize, usize, usize, T)]) -> Self {
        let dim = labels.len();
        let mut c = vec![vec![vec![T::zero(); dim]; dim]; dim];
        for (i, j, k, v) in brackets {
            c[*i][*j][*k] = v.clone();
            c[*j][*i][*k] = -v.clone();
        }
        Self::from_table(labels, c)
    }

    /// Takes the table verbatim; antisymmetry is not enforced (see [`Self::check_jacobi`]).
    pub fn from_table(labels: Vec<String>, c: Vec<Vec<Vec<T>>>) -> Self {
        let dim = labels.len();
        let mut terms = Vec::new();
        for (i, ci) in c.iter().enumerate() {
            for (j, cij) in ci.iter().enumerate() {
                for (k, v) in cij.iter().enumerate() {
                    if !v.is_zero() {
                        terms.push((i, j, k, v.clone()));
                    }
                }
            }
        }
        Self {
            dim,
            labels,
            c,
            terms,
        }
    }

    pub fn abelian(dim: usize) -> Self {
        let labels = (1..=dim).map(|i| format!("e{i}")).collect();
        Self::from_brackets(labels, &[])
    }

    pub fn coefficient(&self, i: usize, j: usize, k: usize) -> &T {
        &self.c[i][j][k]
    }

    pub fn table(&self) -> &Vec<Vec<Vec<T>>> {
        &self.c
    }

    pub fn is_abelian(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn basis_vector(&self, i: usize) -> Vector<T> {
        linalg::unit(self.dim, i)
    }

    pub fn bracket(&self, x: &[T], y: &[T]) -> Vector<T> {
        let mut out = linalg::zeros::<T>(self.dim);
        for (i, j, k, v) in &self.terms {
            if x[*i].is_zero() || y[*j].is_zero() {
                continue;
            }
            out[*k] = out[*k].clone() + x[*i].clone() * y[*j].clone() * v.clone();
        }
        out
    }

    /// Matrix of `ad(x)` acting on column vectors.
    pub fn ad_matrix(&self, x: &[T]) -> Matrix<T> {
        let cols: Matrix<T> = (0..self.dim)
            .map(|j| self.bracket(x, &self.basis_vector(j)))
            .collect();
        linalg::transpose(&cols)
    }

    /// `ad(x)(g)` as a subspace.
    pub fn ad_image(&self, x: &[T]) -> Subspace<T> {
        let vs = (0..self.dim)
            .map(|j| self.bracket(x, &self.basis_vector(j)))
            .collect();
        Subspace::span(self.dim, vs)
    }

    /// `[A, B]` for subspaces.
    pub fn bracket_subspaces(&self, a: &Subspace<T>, b: &Subspace<T>) -> Subspace<T> {
        let mut vs = Vec::new();
        for x in &a.basis {
            for y in &b.basis {
                vs.push(self.bracket(x, y));
            }
        }
        Subspace::span(self.dim, vs)
    }

    /// Checks antisymmetry, then scans every basis triple for Jacobi failures.
    pub fn check_jacobi(&self) -> Result<Vec<JacobiViolation<T>>, AlgebraError> {
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    if self.c[i][j][k] != -self.c[j][i][k].clone() {
                        return Err(AlgebraError::AntisymmetryViolation { i, j, k });
                    }
                }
            }
        }
        let mut out = Vec::new();
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                for l in j + 1..self.dim {
                    let (bi, bj, bl) = (
                        self.basis_vector(i),
                        self.basis_vector(j),
                        self.basis_vector(l),
                    );
                    let s = linalg::add(
                        &linalg::add(
                            &self.bracket(&self.bracket(&bi, &bj), &bl),
                            &self.bracket(&self.bracket(&bj, &bl), &bi),
                        ),
                        &self.bracket(&self.bracket(&bl, &bi), &bj),
                    );
                    if !linalg::is_zero_vec(&s) {
                        out.push(JacobiViolation {
                            triple: (i, j, l),
                            residual: s,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// `[g,g], [g,[g,g]], ...` ending with the zero subspace.
    pub fn derived_series(&self) -> Result<Vec<Subspace<T>>, AlgebraError> {
        let full = Subspace::full(self.dim);
        let mut series = Vec::new();
        let mut current = self.bracket_subspaces(&full, &full);
        loop {
            let done = current.is_zero();
            series.push(current.clone());
            if done {
                return Ok(series);
            }
            let next = self.bracket_subspaces(&full, &current);
            if next.dim() == current.dim() {
                return Err(AlgebraError::NonTerminating(next.dim()));
            }
            current = next;
        }
    }

    /// Nilpotency step: index of the first zero term of the derived series.
    pub fn step(&self) -> Result<usize, AlgebraError> {
        Ok(self.derived_series()?.len())
    }

    pub fn center(&self) -> Subspace<T> {
        // Row (j, k) of the stacked system reads ([x, b_j])_k = sum_i x_i c[i][j][k].
        let mut rows = Vec::with_capacity(self.dim * self.dim);
        for j in 0..self.dim {
            for k in 0..self.dim {
                rows.push((0..self.dim).map(|i| self.c[i][j][k].clone()).collect());
            }
        }
        Subspace::span(self.dim, linalg::null_space(&rows, self.dim))
    }

    pub fn is_central(&self, x: &[T]) -> bool {
        (0..self.dim).all(|j| linalg::is_zero_vec(&self.bracket(x, &self.basis_vector(j))))
    }

    pub fn check_ideal(&self, ideal: &Subspace<T>) -> Result<(), AlgebraError> {
        for b in 0..self.dim {
            for (vi, v) in ideal.basis.iter().enumerate() {
                if !ideal.contains(&self.bracket(&self.basis_vector(b), v)) {
                    return Err(AlgebraError::NotAnIdeal {
                        basis: b,
                        vector: vi,
                    });
                }
            }
        }
        Ok(())
    }

    /// Quotient by an ideal, using the non-pivot standard basis vectors as a complement.
    pub fn quotient(&self, ideal: &Subspace<T>) -> Result<Quotient<T>, AlgebraError> {
        self.check_ideal(ideal)?;
        let kept: Vec<usize> = (0..self.dim)
            .filter(|c| !ideal.pivots().contains(c))
            .collect();
        let q = kept.len();
        let projection: Matrix<T> = kept
            .iter()
            .map(|&c| {
                (0..self.dim)
                    .map(|i| ideal.reduce(&self.basis_vector(i))[c].clone())
                    .collect()
            })
            .collect();
        let section: Matrix<T> = kept.iter().map(|&c| self.basis_vector(c)).collect();
        let mut c = vec![vec![vec![T::zero(); q]; q]; q];
        for a in 0..q {
            for b in 0..q {
                let br = self.bracket(&section[a], &section[b]);
                let p = linalg::mat_vec(&projection, &br);
                c[a][b] = p;
            }
        }
        let labels = kept.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(Quotient {
            algebra: StructureConstants::from_table(labels, c),
            projection,
            section,
            ideal: ideal.clone(),
        })
    }

    /// Strict nonsingularity: for every noncentral `x`, `ad(x)(g)` contains the center.
    ///
    /// Basis directions and their pairwise sums are checked exactly, followed by
    /// `samples` seeded random integer combinations.
    pub fn strict_nonsingularity(&self, samples: usize, seed: u64) -> NonsingularityVerdict<T> {
        let center = self.center();
        let mut tests: Vec<Vector<T>> = (0..self.dim).map(|i| self.basis_vector(i)).collect();
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                tests.push(linalg::add(&self.basis_vector(i), &self.basis_vector(j)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            tests.push(
                (0..self.dim)
                    .map(|_| T::from_i64(rng.gen_range(-5..=5)).expect("small integer"))
                    .collect(),
            );
        }
        let mut certificates = 0;
        for x in tests {
            if center.contains(&x) {
                continue;
            }
            if !self.ad_image(&x).contains_subspace(&center) {
                return NonsingularityVerdict {
                    holds: false,
                    counterexample: Some(x),
                    certificates,
                    sampled: true,
                };
            }
            certificates += 1;
        }
        NonsingularityVerdict {
            holds: true,
            counterexample: None,
            certificates,
            sampled: true,
        }
    }

    pub fn is_strictly_nonsingular(&self) -> bool {
        self.strict_nonsingularity(64, 0x5eed).holds
    }

    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U) -> StructureConstants<U> {
        let c = self
            .c
            .iter()
            .map(|ci| ci.iter().map(|cij| cij.iter().map(&f).collect()).collect())
            .collect();
        StructureConstants::from_table(self.labels.clone(), c)
    }

    /// Structure constants in a new basis whose vectors are the rows of `basis`.
    pub fn change_basis(&self, basis: &Matrix<T>, labels: Vec<String>) -> Option<Self> {
        let inv_t = linalg::transpose(&linalg::inverse(&linalg::transpose(basis))?);
        // coords of v in the new basis: solve basis^T a = v, i.e. a = (basis^T)^{-1} v.
        let n = self.dim;
        let to_new = linalg::transpose(&inv_t);
        let mut c = vec![vec![vec![T::zero(); n]; n]; n];
        for a in 0..n {
            for b in 0..n {
                c[a][b] = linalg::mat_vec(&to_new, &self.bracket(&basis[a], &basis[b]));
            }
        }
        Some(Self::from_table(labels, c))
    }
}

/// Result of [`StructureConstants::strict_nonsingularity`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonsingularityVerdict<T> {
    pub holds: bool,
    pub counterexample: Option<Vector<T>>,
    /// Number of noncentral test vectors whose ad-image was shown to contain the center.
    pub certificates: usize,
    /// `true` when a positive verdict rests on finitely many test vectors.
    pub sampled: bool,
}

/// `g / ideal` together with the linear maps relating it to `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quotient<T> {
    pub algebra: StructureConstants<T>,
    /// `q x n` matrix of the canonical projection.
    pub projection: Matrix<T>,
    /// `q` representatives in `g` of the quotient basis.
    pub section: Matrix<T>,
    pub ideal: Subspace<T>,
}

impl<T: Scalar> Quotient<T> {
    pub fn project(&self, v: &[T]) -> Vector<T> {
        linalg::mat_vec(&self.projection, v)
    }
}

/// JSON form: `{"dim", "labels", "brackets": [{"i","j","coeffs": {"k": "p/q"}}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlgebraJson {
    pub dim: usize,
    pub labels: Vec<String>,
    pub brackets: Vec<BracketJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BracketJson {
    pub i: usize,
    pub j: usize,
    pub coeffs: BTreeMap<String, String>,
}

impl AlgebraJson {
    pub fn to_algebra<T: Scalar>(&self) -> Result<StructureConstants<T>, AlgebraError> {
        if self.labels.len() != self.dim {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.dim,
                got: self.labels.len(),
            });
        }
        let mut entries = Vec::new();
        for b in &self.brackets {
            if b.i >= self.dim || b.j >= self.dim {
                return Err(AlgebraError::Parse(format!("index out of range in [{}, {}]", b.i, b.j)));
            }
            for (k, v) in &b.coeffs {
                let k: usize = k
                    .parse()
                    .map_err(|_| AlgebraError::Parse(format!("bad index {k}")))?;
                if k >= self.dim {
                    return Err(AlgebraError::Parse(format!("index {k} out of range")));
                }
                let q = parse_rational(v)
                    .ok_or_else(|| AlgebraError::Parse(format!("bad rational {v}")))?;
                entries.push((b.i, b.j, k, rational_to_scalar::<T>(&q)));
            }
        }
        Ok(StructureConstants::from_brackets(self.labels.clone(), &entries))
    }

    pub fn from_algebra(sc: &StructureConstants<BigRational>) -> Self {
        let mut brackets = Vec::new();
        for i in 0..sc.dim {
            for j in i + 1..sc.dim {
                let coeffs: BTreeMap<String, String> = (0..sc.dim)
                    .filter(|&k| !sc.coefficient(i, j, k).is_zero())
                    .map(|k| (k.to_string(), format_rational(sc.coefficient(i, j, k))))
                    .collect();
                if !coeffs.is_empty() {
                    brackets.push(BracketJson { i, j, coeffs });
                }
            }
        }
        Self {
            dim: sc.dim,
            labels: sc.labels.clone(),
            brackets,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::scalar::rat;

    type Q = BigRational;

    fn heisenberg_plus_line() -> StructureConstants<Q> {
        let labels = ["X", "Y", "Z", "U"].map(String::from).to_vec();
        StructureConstants::from_brackets(labels, &[(0, 1, 2, rat(1, 1))])
    }

    #[test]
    fn example_v_algebra_is_a_lie_algebra() {
        let g = catalog::seven_dim_algebra();
        assert!(g.check_jacobi().unwrap().is_empty());
        assert!(StructureConstants::<Q>::abelian(4).check_jacobi().unwrap().is_empty());
    }

    #[test]
    fn deleting_a_bracket_breaks_jacobi() {
        let g = catalog::seven_dim_algebra();
        // [X1, Z1] = W removed; (X1, X2, Y2) then fails.
        let mut entries = Vec::new();
        for i in 0..7 {
            for j in i + 1..7 {
                for k in 0..7 {
                    let v = g.coefficient(i, j, k);
                    if !v.is_zero() && !(i == 0 && j == 4) {
                        entries.push((i, j, k, v.clone()));
                    }
                }
            }
        }
        let broken = StructureConstants::from_brackets(g.labels.clone(), &entries);
        assert!(!broken.check_jacobi().unwrap().is_empty());
    }

    #[test]
    fn antisymmetry_violation_is_reported() {
        let mut c = vec![vec![vec![rat(0, 1); 3]; 3]; 3];
        c[0][1][2] = rat(1, 1);
        let sc = StructureConstants::from_table(["a", "b", "c"].map(String::from).to_vec(), c);
        assert_eq!(
            sc.check_jacobi(),
            Err(AlgebraError::AntisymmetryViolation { i: 0, j: 1, k: 2 })
        );
    }

    #[test]
    fn derived_series_of_catalog_algebras() {
        let g = catalog::seven_dim_algebra();
        let s = g.derived_series().unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], Subspace::span(7, (4..7).map(|i| g.basis_vector(i)).collect()));
        assert_eq!(s[1], Subspace::span(7, vec![g.basis_vector(6)]));
        assert!(s[2].is_zero());

        let h = catalog::five_dim_algebra();
        let s = h.derived_series().unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], Subspace::span(5, vec![h.basis_vector(3), h.basis_vector(4)]));
        assert_eq!(s[1], Subspace::span(5, vec![h.basis_vector(4)]));

        assert_eq!(StructureConstants::<Q>::abelian(3).step().unwrap(), 1);
    }

    #[test]
    fn non_nilpotent_series_is_rejected() {
        // [a, b] = b is solvable but not nilpotent.
        let sc = StructureConstants::from_brackets(
            ["a", "b"].map(String::from).to_vec(),
            &[(0, 1, 1, rat(1, 1))],
        );
        assert_eq!(sc.derived_series(), Err(AlgebraError::NonTerminating(1)));
    }

    #[test]
    fn centers() {
        let g = catalog::seven_dim_algebra();
        assert_eq!(g.center(), Subspace::span(7, vec![g.basis_vector(6)]));
        assert_eq!(g.center(), g.derived_series().unwrap()[1]);
        assert_eq!(StructureConstants::<Q>::abelian(3).center().dim(), 3);
        let q = g.quotient(&g.center()).unwrap();
        let qc = q.algebra.center();
        assert_eq!(
            qc,
            Subspace::span(6, vec![linalg::unit(6, 4), linalg::unit(6, 5)])
        );
    }

    #[test]
    fn strict_nonsingularity() {
        assert!(catalog::seven_dim_algebra().is_strictly_nonsingular());
        assert!(catalog::five_dim_algebra().is_strictly_nonsingular());
        assert!(StructureConstants::<Q>::abelian(2).is_strictly_nonsingular());
        let v = heisenberg_plus_line().strict_nonsingularity(32, 1);
        assert!(!v.holds);
        assert!(v.counterexample.is_some());
    }

    #[test]
    fn quotients() {
        let g = catalog::seven_dim_algebra();
        let q = g.quotient(&g.derived_series().unwrap()[1]).unwrap();
        let a = &q.algebra;
        assert_eq!(a.dim, 6);
        assert_eq!(a.step().unwrap(), 2);
        // [X1,Y1] = [X2,Y2] = Z1, [X1,Y2] = Z2
        assert_eq!(a.coefficient(0, 2, 4), &rat(1, 1));
        assert_eq!(a.coefficient(1, 3, 4), &rat(1, 1));
        assert_eq!(a.coefficient(0, 3, 5), &rat(1, 1));
        assert_eq!(a.coefficient(2, 3, 4), &rat(0, 1));

        let same = g.quotient(&Subspace::zero(7)).unwrap();
        assert_eq!(same.algebra.table(), g.table());

        let h = catalog::five_dim_algebra();
        let hq = h.quotient(&h.center()).unwrap().algebra;
        assert_eq!(hq.dim, 4);
        assert_eq!(hq.coefficient(0, 1, 3), &rat(1, 1));
        assert_eq!(hq.center().dim(), 2);

        let not_ideal = Subspace::span(7, vec![g.basis_vector(0)]);
        assert!(matches!(g.quotient(&not_ideal), Err(AlgebraError::NotAnIdeal { .. })));
    }

    #[test]
    fn json_round_trip() {
        let g = catalog::five_dim_algebra();
        let js = AlgebraJson::from_algebra(&g);
        let text = serde_json::to_string(&js).unwrap();
        let back: AlgebraJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_algebra::<Q>().unwrap(), g);
    }

    #[test]
    fn change_of_basis_preserves_step() {
        let g = catalog::seven_dim_algebra();
        let mut perm: Matrix<Q> = (0..7).map(|i| g.basis_vector(6 - i)).collect();
        perm[0][0] = rat(1, 1); // W + X1 in first slot
        let h = g.change_basis(&perm, g.labels.clone()).unwrap();
        assert!(h.check_jacobi().unwrap().is_empty());
        assert_eq!(h.step().unwrap(), 3);
        assert_eq!(h.center().dim(), 1);
    }
}
