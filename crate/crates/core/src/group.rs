//! Group law by the truncated Campbell-Baker-Hausdorff series, lattices with
//! Malcev-ordered generators, and conjugacy classes in lattices of step at most three.

use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

use crate::algebra::{AlgebraError, Quotient, StructureConstants};
use crate::intlattice::{self, Hnf};
use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::scalar::{format_rational, parse_rational, rational_to_scalar, ExactScalar, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("step {0} is not supported; the group law is implemented for step at most 3")]
    UnsupportedStep(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("element is not in the lattice: exponent of generator {generator} would be {value}")]
    NotInLattice { generator: usize, value: String },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("conjugacy classes need a strictly nonsingular algebra")]
    NotStrictlyNonsingular,
    #[error("malformed lattice input: {0}")]
    Parse(String),
}

/// A point `exp(sum v_i b_i)` of the simply connected group, by first-kind coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement<T> {
    pub log: Vector<T>,
}

impl<T: Scalar> GroupElement<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            log: linalg::zeros(dim),
        }
    }

    pub fn from_log(log: Vector<T>) -> Self {
        Self { log }
    }

    pub fn is_identity(&self) -> bool {
        linalg::is_zero_vec(&self.log)
    }
}

/// `log(exp x exp y)` truncated for the given step.
pub fn bch<T: Scalar>(sc: &StructureConstants<T>, x: &[T], y: &[T], step: usize) -> Vector<T> {
    let mut out = linalg::add(x, y);
    if step >= 2 {
        let xy = sc.bracket(x, y);
        if !linalg::is_zero_vec(&xy) {
            out = linalg::axpy(&out, &T::from_ratio(1, 2), &xy);
            if step >= 3 {
                let twelfth = T::from_ratio(1, 12);
                out = linalg::axpy(&out, &twelfth, &sc.bracket(x, &xy));
                out = linalg::axpy(&out, &(-twelfth), &sc.bracket(y, &xy));
            }
        }
    }
    out
}

/// `x * y` in the group with Lie algebra `sc`, of nilpotency `step`.
pub fn bch_product<T: Scalar>(
    sc: &StructureConstants<T>,
    x: &GroupElement<T>,
    y: &GroupElement<T>,
    step: usize,
) -> Result<GroupElement<T>, GroupError> {
    if step > 3 {
        return Err(GroupError::UnsupportedStep(step));
    }
    Ok(GroupElement::from_log(bch(sc, &x.log, &y.log, step)))
}

/// A simply connected nilpotent Lie group of step at most 3.
#[derive(Debug, Clone, PartialEq)]
pub struct NilpotentGroup<T> {
    pub algebra: StructureConstants<T>,
    pub step: usize,
}

impl<T: Scalar> NilpotentGroup<T> {
    pub fn new(algebra: StructureConstants<T>) -> Result<Self, GroupError> {
        let step = algebra.step()?;
        if step > 3 {
            return Err(GroupError::UnsupportedStep(step));
        }
        Ok(Self { algebra, step })
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim
    }

    pub fn identity(&self) -> GroupElement<T> {
        GroupElement::identity(self.dim())
    }

    pub fn mul(&self, x: &GroupElement<T>, y: &GroupElement<T>) -> GroupElement<T> {
        GroupElement::from_log(bch(&self.algebra, &x.log, &y.log, self.step))
    }

    pub fn mul_log(&self, x: &[T], y: &[T]) -> Vector<T> {
        bch(&self.algebra, x, y, self.step)
    }

    pub fn inverse(&self, x: &GroupElement<T>) -> GroupElement<T> {
        GroupElement::from_log(linalg::neg(&x.log))
    }

    /// `x^n = exp(n log x)`.
    pub fn power(&self, x: &GroupElement<T>, n: i64) -> GroupElement<T> {
        GroupElement::from_log(linalg::scale(&T::from_i64(n).expect("small exponent"), &x.log))
    }

    /// `Ad(exp a) v = e^{ad a} v`.
    pub fn adjoint(&self, a: &[T], v: &[T]) -> Vector<T> {
        let mut out = v.to_vec();
        let mut term = v.to_vec();
        for k in 1..self.step {
            term = self.algebra.bracket(a, &term);
            if linalg::is_zero_vec(&term) {
                break;
            }
            let f = T::one() / T::from_u64(factorial(k)).expect("small factorial");
            out = linalg::axpy(&out, &f, &term);
        }
        out
    }

    /// `a x a^{-1}`.
    pub fn conjugate(&self, a: &GroupElement<T>, x: &GroupElement<T>) -> GroupElement<T> {
        GroupElement::from_log(self.adjoint(&a.log, &x.log))
    }

    /// `a x a^{-1} x^{-1}`.
    pub fn commutator(&self, a: &GroupElement<T>, x: &GroupElement<T>) -> GroupElement<T> {
        self.mul(&self.conjugate(a, x), &self.inverse(x))
    }
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

/// Generators of a lattice in the order used for normal-form words.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec<T> {
    pub name: String,
    pub generators: Vec<Vector<T>>,
}

/// Exponents `(n_1, ..., n_r)` of the word `g_1^{n_1} ... g_r^{n_r}`.
pub type CanonicalWord = Vec<i64>;

/// JSON form: `{"name", "generators": [["p/q", ...], ...], "order": [labels]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatticeJson {
    pub name: String,
    pub generators: Vec<Vec<String>>,
    #[serde(default)]
    pub order: Vec<String>,
}

impl LatticeJson {
    pub fn to_spec<T: Scalar>(&self) -> Result<LatticeSpec<T>, GroupError> {
        let generators = self
            .generators
            .iter()
            .map(|g| {
                g.iter()
                    .map(|s| {
                        parse_rational(s)
                            .map(|q| rational_to_scalar::<T>(&q))
                            .ok_or_else(|| GroupError::Parse(format!("bad rational {s}")))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(LatticeSpec {
            name: self.name.clone(),
            generators,
        })
    }

    pub fn from_spec<T: ExactScalar>(spec: &LatticeSpec<T>, labels: Vec<String>) -> Self {
        Self {
            name: spec.name.clone(),
            generators: spec
                .generators
                .iter()
                .map(|g| g.iter().map(|x| format_rational(&x.to_rational())).collect())
                .collect(),
            order: labels,
        }
    }
}

/// A lattice with validated Malcev-ordered generators.
///
/// Generators are sorted into three blocks: outer ones (outside `[g,g]`),
/// middle ones (in `[g,g]` but not in the last derived term) and top ones
/// (in the last nonzero derived term, which is central). Each tail
/// `span(log g_i, ..., log g_r)` is an ideal, so words are unique.
#[derive(Debug, Clone)]
pub struct Lattice<T> {
    pub group: NilpotentGroup<T>,
    pub spec: LatticeSpec<T>,
    tails: Vec<Subspace<T>>,
    to_coords: Matrix<T>,
    outer: Range<usize>,
    middle: Range<usize>,
    top: Range<usize>,
}

impl<T: ExactScalar> Lattice<T> {
    pub fn new(group: NilpotentGroup<T>, spec: LatticeSpec<T>) -> Result<Self, GroupError> {
        let n = group.dim();
        let r = spec.generators.len();
        if r != n || spec.generators.iter().any(|g| g.len() != n) {
            return Err(GroupError::InvalidLattice(format!(
                "expected {n} generators of length {n}"
            )));
        }
        let to_coords = linalg::inverse(&linalg::transpose(&spec.generators)).ok_or_else(|| {
            GroupError::InvalidLattice("generators are linearly dependent".into())
        })?;
        let mut tails = Vec::with_capacity(r + 1);
        for i in 0..=r {
            let tail = Subspace::span(n, spec.generators[i..].to_vec());
            group.algebra.check_ideal(&tail).map_err(|_| {
                GroupError::InvalidLattice(format!(
                    "span of generators {}.. is not an ideal",
                    i + 1
                ))
            })?;
            tails.push(tail);
        }
        let series = group.algebra.derived_series()?;
        let step = series.len();
        let derived = series[0].clone();
        let last = if step >= 2 {
            series[step - 2].clone()
        } else {
            Subspace::zero(n)
        };
        let outer_len = n - derived.dim();
        let top_len = if step >= 2 { last.dim() } else { 0 };
        if tails[outer_len] != derived || tails[n - top_len] != last {
            return Err(GroupError::InvalidLattice(
                "generators are not ordered by the derived series".into(),
            ));
        }
        Ok(Self {
            group,
            spec,
            tails,
            to_coords,
            outer: 0..outer_len,
            middle: outer_len..n - top_len,
            top: n - top_len..n,
        })
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn outer(&self) -> Range<usize> {
        self.outer.clone()
    }

    pub fn middle(&self) -> Range<usize> {
        self.middle.clone()
    }

    pub fn top(&self) -> Range<usize> {
        self.top.clone()
    }

    pub fn generator(&self, i: usize) -> GroupElement<T> {
        GroupElement::from_log(self.spec.generators[i].clone())
    }

    /// Coordinates of an algebra vector in the basis of generator logarithms.
    pub fn linear_coords(&self, v: &[T]) -> Vector<T> {
        linalg::mat_vec(&self.to_coords, v)
    }

    pub fn word_to_element(&self, w: &[i64]) -> GroupElement<T> {
        let mut acc = linalg::zeros(self.dim());
        for (i, &e) in w.iter().enumerate() {
            if e != 0 {
                let g = linalg::scale(&T::from_i64(e).expect("small exponent"), &self.spec.generators[i]);
                acc = self.group.mul_log(&acc, &g);
            }
        }
        GroupElement::from_log(acc)
    }

    /// Peels generators off in order; fails if an exponent is not an integer.
    pub fn element_to_word(&self, x: &GroupElement<T>) -> Result<CanonicalWord, GroupError> {
        let mut rem = x.log.clone();
        let mut word = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let g = &self.spec.generators[i];
            let rr = self.tails[i + 1].reduce(&rem);
            let rg = self.tails[i + 1].reduce(g);
            let p = rg
                .iter()
                .position(|x| !x.is_zero())
                .expect("generators are independent");
            let c = rr[p].clone() / rg[p].clone();
            if !linalg::is_zero_vec(&linalg::sub(&rr, &linalg::scale(&c, &rg))) {
                return Err(GroupError::NotInLattice {
                    generator: i,
                    value: "non-collinear remainder".into(),
                });
            }
            let e = c.to_integer().ok_or_else(|| GroupError::NotInLattice {
                generator: i,
                value: format_rational(&c.to_rational()),
            })?;
            word.push(e);
            if e != 0 {
                rem = self.group.mul_log(&linalg::scale(&-c, g), &rem);
            }
        }
        Ok(word)
    }

    pub fn contains(&self, x: &GroupElement<T>) -> bool {
        self.element_to_word(x).is_ok()
    }

    /// Product of words, as a word.
    pub fn word_mul(&self, a: &[i64], b: &[i64]) -> CanonicalWord {
        let p = self.group.mul(&self.word_to_element(a), &self.word_to_element(b));
        self.element_to_word(&p).expect("lattice is closed under products")
    }

    pub fn word_inverse(&self, a: &[i64]) -> CanonicalWord {
        let p = self.group.inverse(&self.word_to_element(a));
        self.element_to_word(&p).expect("lattice is closed under inverses")
    }

    pub fn word_conjugate(&self, d: &[i64], x: &[i64]) -> CanonicalWord {
        let p = self
            .group
            .conjugate(&self.word_to_element(d), &self.word_to_element(x));
        self.element_to_word(&p).expect("lattice is closed under conjugation")
    }

    fn integer(&self, x: &T, what: &str) -> Result<i64, GroupError> {
        x.to_integer().ok_or_else(|| GroupError::NotInLattice {
            generator: 0,
            value: format!("{what}: {}", format_rational(&x.to_rational())),
        })
    }

    /// Matrix whose column `j` gives the middle-block exponent shift caused by
    /// conjugating an element with outer exponents `a` by the `j`-th outer generator.
    pub fn middle_shift_matrix(&self, a: &[i64]) -> Result<Vec<Vec<i64>>, GroupError> {
        let mut big_a = linalg::zeros(self.dim());
        for (i, &e) in self.outer.clone().zip(a) {
            big_a = linalg::axpy(&big_a, &T::from_i64(e).expect("small"), &self.spec.generators[i]);
        }
        let mut m = vec![vec![0i64; self.outer.len()]; self.middle.len()];
        for j in self.outer.clone() {
            let br = self.group.algebra.bracket(&self.spec.generators[j], &big_a);
            let c = self.linear_coords(&br);
            for (row, k) in self.middle.clone().enumerate() {
                m[row][j - self.outer.start] = self.integer(&c[k], "middle shift")?;
            }
        }
        Ok(m)
    }

    fn word_from_blocks(&self, a: &[i64], b: &[i64], c: &[i64]) -> CanonicalWord {
        let mut w = Vec::with_capacity(self.dim());
        w.extend_from_slice(a);
        w.extend_from_slice(b);
        w.extend_from_slice(c);
        w
    }

    fn outer_product(&self, alpha: &[i64]) -> CanonicalWord {
        let mut w = vec![0i64; self.dim()];
        w[self.outer.clone()].copy_from_slice(alpha);
        w
    }

    /// Top-block exponents of `s x s^{-1} x^{-1}`, which must be central.
    fn top_commutator(&self, s: &[i64], x: &[i64]) -> Result<Vec<i64>, GroupError> {
        let c = self.group.commutator(&self.word_to_element(s), &self.word_to_element(x));
        let w = self.element_to_word(&c)?;
        debug_assert!(w[..self.top.start].iter().all(|&e| e == 0));
        Ok(w[self.top.clone()].to_vec())
    }

    /// Canonical representative of the conjugacy class of `w` in the lattice,
    /// with a conjugator `d` such that `d w d^{-1}` equals it.
    ///
    /// Middle exponents are reduced modulo the lattice of shifts reachable by
    /// outer conjugators, then top exponents modulo the image of the
    /// commutator homomorphism on the stabilizer of the middle exponents.
    pub fn nice_representative(&self, w: &[i64]) -> Result<NiceRepresentative, GroupError> {
        let a = &w[self.outer.clone()];
        let b = &w[self.middle.clone()];
        let m = self.middle_shift_matrix(a)?;
        let cols: Vec<Vec<i64>> = (0..self.outer.len())
            .map(|j| m.iter().map(|row| row[j]).collect())
            .collect();
        let hm = Hnf::new(&cols, self.middle.len());
        let (b_res, coeffs) = hm.reduce(b);
        let alpha: Vec<i64> = coeffs.iter().map(|x| -x).collect();
        let d1 = self.outer_product(&alpha);
        let w1 = self.word_conjugate(&d1, w);
        debug_assert_eq!(&w1[self.middle.clone()], &b_res[..]);

        let mut stabilizer: Vec<CanonicalWord> = hm
            .relations()
            .iter()
            .map(|k| self.outer_product(k))
            .collect();
        for i in self.middle.clone() {
            let mut e = vec![0i64; self.dim()];
            e[i] = 1;
            stabilizer.push(e);
        }
        let shifts: Vec<Vec<i64>> = stabilizer
            .iter()
            .map(|s| self.top_commutator(s, &w1))
            .collect::<Result<_, _>>()?;
        let h3 = Hnf::new(&shifts, self.top.len());
        let (c_res, c_coeffs) = h3.reduce(&w1[self.top.clone()]);
        let mut d2 = vec![0i64; self.dim()];
        for (s, &e) in stabilizer.iter().zip(&c_coeffs) {
            if e != 0 {
                let p = self.group.power(&self.word_to_element(s), -e);
                d2 = self.word_mul(&d2, &self.element_to_word(&p)?);
            }
        }
        let word = self.word_from_blocks(a, &b_res, &c_res);
        let conjugator = self.word_mul(&d2, &d1);
        debug_assert_eq!(self.word_conjugate(&conjugator, w), word);
        Ok(NiceRepresentative {
            word,
            conjugator,
            top_index: h3.index(),
        })
    }

    /// Exact conjugacy test with a witness `d` satisfying `d x d^{-1} = y`.
    ///
    /// `conjugator_bound` is only reported against: the decision itself is
    /// exact and needs no search.
    pub fn lattice_conjugacy_condition(
        &self,
        x: &[i64],
        y: &[i64],
        conjugator_bound: i64,
    ) -> Result<ConjugacyVerdict, GroupError> {
        let nx = self.nice_representative(x)?;
        let ny = self.nice_representative(y)?;
        if nx.word != ny.word {
            return Ok(ConjugacyVerdict {
                conjugate: false,
                witness: None,
                within_bound: false,
                bound: conjugator_bound,
            });
        }
        let witness = self.word_mul(&self.word_inverse(&ny.conjugator), &nx.conjugator);
        let within_bound = witness.iter().all(|e| e.abs() <= conjugator_bound);
        Ok(ConjugacyVerdict {
            conjugate: true,
            witness: Some(witness),
            within_bound,
            bound: conjugator_bound,
        })
    }

    /// Intersection with the last derived term, as top-block generators.
    pub fn central_generators(&self) -> Vec<Vector<T>> {
        self.spec.generators[self.top.clone()].to_vec()
    }

    /// Whether `Γ ∩ Z(G)` agrees with that of `other`, as subgroups.
    ///
    /// Assumes the center is the last derived term, so both intersections are
    /// generated by the top-block generators.
    pub fn same_center_intersection(&self, other: &Lattice<T>) -> bool {
        let a = self.central_generators();
        let b = other.central_generators();
        if a.len() != b.len() {
            return false;
        }
        let express = |gens: &[Vector<T>], targets: &[Vector<T>]| -> bool {
            let cols = linalg::transpose(&gens.to_vec());
            targets.iter().all(|t| {
                linalg::solve(&cols, t, gens.len())
                    .is_some_and(|c| c.iter().all(|x| x.to_integer().is_some()))
            })
        };
        express(&a, &b) && express(&b, &a)
    }

    /// Image of the lattice in `G / G^(k-1)`, generated by the projected outer
    /// and middle generators in the same order.
    pub fn quotient_lattice(&self, q: &Quotient<T>) -> Result<Lattice<T>, GroupError> {
        let spec = LatticeSpec {
            name: format!("{}/center", self.spec.name),
            generators: (0..self.top.start)
                .map(|i| q.project(&self.spec.generators[i]))
                .collect(),
        };
        Lattice::new(NilpotentGroup::new(q.algebra.clone())?, spec)
    }

    /// The same lattice over another exact scalar type.
    pub fn convert<U: ExactScalar>(&self) -> Result<Lattice<U>, GroupError> {
        let conv = |x: &T| {
            U::from_rational(&x.to_rational()).ok_or_else(|| {
                GroupError::InvalidLattice("coefficient out of range for the target scalar".into())
            })
        };
        let mut table = Vec::with_capacity(self.dim());
        for plane in self.group.algebra.table() {
            let mut p = Vec::with_capacity(plane.len());
            for row in plane {
                p.push(row.iter().map(conv).collect::<Result<Vec<U>, _>>()?);
            }
            table.push(p);
        }
        let sc = StructureConstants::from_table(self.group.algebra.labels.clone(), table);
        let generators = self
            .spec
            .generators
            .iter()
            .map(|g| g.iter().map(conv).collect::<Result<Vec<U>, _>>())
            .collect::<Result<_, _>>()?;
        Lattice::new(
            NilpotentGroup::new(sc)?,
            LatticeSpec {
                name: self.spec.name.clone(),
                generators,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiceRepresentative {
    pub word: CanonicalWord,
    pub conjugator: CanonicalWord,
    /// Number of top-block residues for this middle residue, `None` if infinite.
    pub top_index: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConjugacyVerdict {
    pub conjugate: bool,
    pub witness: Option<CanonicalWord>,
    /// Whether every exponent of the witness is within `bound`.
    pub within_bound: bool,
    pub bound: i64,
}

/// A conjugacy class of a lattice, by its canonical representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConjugacyClass {
    pub representative: CanonicalWord,
    pub lattice: String,
    pub window: i64,
}

/// Number of lattice classes inside one conjugacy class of the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ClassCount {
    Finite(u128),
    Infinite,
}

impl ClassCount {
    pub fn add(self, other: ClassCount) -> ClassCount {
        match (self, other) {
            (ClassCount::Finite(a), ClassCount::Finite(b)) => ClassCount::Finite(a + b),
            _ => ClassCount::Infinite,
        }
    }

    pub fn finite(self) -> Option<u128> {
        match self {
            ClassCount::Finite(n) => Some(n),
            ClassCount::Infinite => None,
        }
    }
}

/// Conjugacy classes of a strictly nonsingular group of step at most 3.
///
/// For noncentral `x`, the class of `x` is the full preimage of the class of
/// its image in `G / G^(k-1)`, a group of step at most 2 where the class of
/// `exp X` is `exp(X + ad(X)(g))`. A central element is its own class.
#[derive(Debug, Clone)]
pub struct GClasses<T> {
    pub group: NilpotentGroup<T>,
    pub quotient: Option<Quotient<T>>,
    center: Subspace<T>,
}

/// Invariant of a conjugacy class of the group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GClassKey<T> {
    /// Central element, by its logarithm.
    Central(Vector<T>),
    /// Noncentral element, by the reduced image of its logarithm in the quotient.
    Noncentral(Vector<T>),
}

impl<T: Scalar> GClasses<T> {
    pub fn new(group: NilpotentGroup<T>) -> Result<Self, GroupError> {
        if !group.algebra.is_strictly_nonsingular() {
            return Err(GroupError::NotStrictlyNonsingular);
        }
        let center = group.algebra.center();
        let quotient = if group.step >= 2 {
            let series = group.algebra.derived_series()?;
            Some(group.algebra.quotient(&series[group.step - 2])?)
        } else {
            None
        };
        Ok(Self {
            group,
            quotient,
            center,
        })
    }

    /// Class invariant of a quotient vector, given the image of ad there.
    pub fn reduce_in_quotient(&self, xbar: &[T]) -> Vector<T> {
        let q = self.quotient.as_ref().expect("noncentral elements need a quotient");
        q.algebra.ad_image(xbar).reduce(xbar)
    }

    pub fn key(&self, x: &GroupElement<T>) -> GClassKey<T> {
        match &self.quotient {
            Some(q) if !self.center.contains(&x.log) => {
                GClassKey::Noncentral(self.reduce_in_quotient(&q.project(&x.log)))
            }
            _ => GClassKey::Central(x.log.clone()),
        }
    }

    /// Quotient image of a noncentral class, or the logarithm of a central one.
    pub fn representative_log(&self, key: &GClassKey<T>) -> Vector<T> {
        match key {
            GClassKey::Central(v) | GClassKey::Noncentral(v) => v.clone(),
        }
    }

    /// Exact number of lattice classes inside the group class `key`.
    pub fn count_in_class(
        &self,
        lat: &Lattice<T>,
        key: &GClassKey<T>,
    ) -> Result<(ClassCount, Vec<CanonicalWord>), GroupError>
    where
        T: ExactScalar,
    {
        let xbar = match key {
            GClassKey::Central(v) => {
                let x = GroupElement::from_log(v.clone());
                return Ok(match lat.element_to_word(&x) {
                    Ok(w) => (ClassCount::Finite(1), vec![w]),
                    Err(_) => (ClassCount::Finite(0), vec![]),
                });
            }
            GClassKey::Noncentral(v) => v,
        };
        let q = self.quotient.as_ref().expect("noncentral classes need a quotient");
        let outer = lat.outer();
        let middle = lat.middle();
        // Quotient images of outer and middle generators form a basis of the quotient.
        let basis: Matrix<T> = outer
            .clone()
            .chain(middle.clone())
            .map(|i| q.project(&lat.spec.generators[i]))
            .collect();
        let inv = linalg::inverse(&linalg::transpose(&basis))
            .ok_or_else(|| GroupError::InvalidLattice("quotient images are dependent".into()))?;
        let coords = linalg::mat_vec(&inv, xbar);
        let mut a = Vec::with_capacity(outer.len());
        for c in &coords[..outer.len()] {
            match c.to_integer() {
                Some(e) => a.push(e),
                None => return Ok((ClassCount::Finite(0), vec![])),
            }
        }
        let ga = lat.word_to_element(&lat.outer_product(&a));
        let pa = q.project(&ga.log);
        let diff = linalg::sub(xbar, &pa);
        let dc = linalg::mat_vec(&inv, &diff);
        debug_assert!(dc[..outer.len()].iter().all(|x| x.is_zero()));
        let t: Vector<T> = dc[outer.len()..].to_vec();
        let image = q.algebra.ad_image(xbar);
        let image_mid: Matrix<T> = image
            .basis
            .iter()
            .map(|v| linalg::mat_vec(&inv, v)[outer.len()..].to_vec())
            .collect();
        let l2 = middle.len();
        let lambda = if image_mid.is_empty() {
            Vec::new()
        } else {
            intlattice::saturated_lattice(&image_mid, l2)
        };
        // Integer point b0 of t + span(image).
        let annihilator: Vec<Vec<i64>> = if image_mid.is_empty() {
            (0..l2).map(|i| (0..l2).map(|j| i64::from(i == j)).collect()).collect()
        } else {
            linalg::null_space(&image_mid, l2)
                .iter()
                .map(|v| intlattice::primitive_integer_vector(v))
                .collect()
        };
        let mut rhs = Vec::with_capacity(annihilator.len());
        for row in &annihilator {
            let s = row
                .iter()
                .zip(&t)
                .fold(T::zero(), |acc, (r, ti)| acc + T::from_i64(*r).expect("small") * ti.clone());
            match s.to_integer() {
                Some(e) => rhs.push(e),
                None => return Ok((ClassCount::Finite(0), vec![])),
            }
        }
        let b0 = if annihilator.is_empty() {
            vec![0i64; l2]
        } else {
            match intlattice::solve_integer(&annihilator, &rhs, l2) {
                Some(b) => b,
                None => return Ok((ClassCount::Finite(0), vec![])),
            }
        };
        // Residues of lambda modulo the reachable shifts.
        let m = lat.middle_shift_matrix(&a)?;
        let hl = Hnf::new(&lambda, l2);
        let mut shifts_in_lambda = Vec::new();
        for j in 0..outer.len() {
            let col: Vec<i64> = m.iter().map(|row| row[j]).collect();
            let y = hl.solve(&col).ok_or_else(|| {
                GroupError::InvalidLattice("shift outside the class lattice".into())
            })?;
            shifts_in_lambda.push(y);
        }
        let hs = Hnf::new(&shifts_in_lambda, lambda.len());
        let Some(residues) = hs.residues() else {
            return Ok((ClassCount::Infinite, vec![]));
        };
        let mut total = ClassCount::Finite(0);
        let mut reps = Vec::with_capacity(residues.len());
        for rho in residues {
            let mut b = b0.clone();
            for (coef, lv) in rho.iter().zip(&lambda) {
                for (bi, li) in b.iter_mut().zip(lv) {
                    *bi += coef * li;
                }
            }
            let w = lat.word_from_blocks(&a, &b, &vec![0i64; lat.top().len()]);
            let nice = lat.nice_representative(&w)?;
            total = total.add(match nice.top_index {
                Some(n) => ClassCount::Finite(n),
                None => ClassCount::Infinite,
            });
            reps.push(nice.word);
        }
        Ok((total, reps))
    }
}
