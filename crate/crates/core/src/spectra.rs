//! Length spectra.
//!
//! Noncentral classes of a three-step group get their periods from the image
//! in `G / G⁽²⁾`, where the two-step closed forms apply. Central classes of a
//! three-step group only get the obvious period `|log γ|`. Periods depend on
//! the conjugacy class in `G` alone, so every count below is "periods of a
//! `G`-class" times "lattice classes inside it".

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::geometry::{
    integrate_fixed, translation_defect, AdaptedFrame, GeodesicState, GeometryError, MetricSpec,
};
use crate::group::{CanonicalWord, ClassCount, GClassKey, GClasses, GroupElement, GroupError};
use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::morphisms::{
    self, eberlein_factorization_check, AutomorphismSpec, Factorization, FactorizationOutcome,
    MorphismError, ParamTemplate, ScanReport,
};
use crate::report::round_float;
use crate::scalar::{format_rational, rational_to_scalar, ExactScalar};
use crate::{Algebra, Group, Lattice, Rational, SmallRational};

/// Absolute tolerance for comparing lengths that are not both symbolic.
pub const LENGTH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("not a Riemannian direct sum of a Heisenberg group and a flat factor: {0}")]
    NotAFactorGroup(String),
    #[error("shooting did not converge after {starts} starts (best defect {best:e})")]
    NoConvergence { starts: usize, best: f64 },
    #[error("the lattices meet the center in different subgroups")]
    HypothesisFails,
    #[error("precondition fails: {0}")]
    PreconditionFail(String),
    #[error("infinitely many lattice classes inside one group class")]
    InfiniteClassCount,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

// ---------------------------------------------------------------- lengths

/// `c0 + c1 π + c2 π²` with rational coefficients: the square of a length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PiPoly {
    pub c: [Rational; 3],
}

impl PiPoly {
    pub fn rational(q: Rational) -> Self {
        Self {
            c: [q, Rational::zero(), Rational::zero()],
        }
    }

    pub fn new(c0: Rational, c1: Rational, c2: Rational) -> Self {
        Self { c: [c0, c1, c2] }
    }

    pub fn value(&self) -> f64 {
        let f = |q: &Rational| q.to_f64().unwrap_or(f64::NAN);
        f(&self.c[0]) + PI * f(&self.c[1]) + PI * PI * f(&self.c[2])
    }

    pub fn add_rational(&self, q: &Rational) -> Self {
        let mut c = self.c.clone();
        c[0] = &c[0] + q;
        Self { c }
    }

    /// Expression for the square root, e.g. `sqrt(4*pi*(7-pi))`.
    pub fn render_sqrt(&self) -> String {
        let [c0, c1, c2] = &self.c;
        if c1.is_zero() && c2.is_zero() {
            return match sqrt_exact(c0) {
                Some(r) => format_rational(&r),
                None => format!("sqrt({})", format_rational(c0)),
            };
        }
        let mut inner = String::new();
        if !c0.is_zero() {
            inner.push_str(&format_rational(c0));
        }
        if c2.is_negative() && c1.is_positive() {
            // c1 π + c2 π² = a π (b - π)
            let a = -c2.clone();
            let b = c1 / &a;
            if !inner.is_empty() {
                inner.push('+');
            }
            inner.push_str(&format!("{}pi*({}-pi)", coef(&a), format_rational(&b)));
        } else {
            for (q, sym) in [(c1, "pi"), (c2, "pi^2")] {
                if q.is_zero() {
                    continue;
                }
                if q.is_negative() {
                    inner.push('-');
                } else if !inner.is_empty() {
                    inner.push('+');
                }
                inner.push_str(&format!("{}{sym}", coef(&q.abs())));
            }
        }
        format!("sqrt({inner})")
    }
}

fn coef(q: &Rational) -> String {
    if q.is_one() {
        String::new()
    } else {
        format!("{}*", format_rational(q))
    }
}

/// Exact square root of a nonnegative rational, when it is rational.
pub fn sqrt_exact(q: &Rational) -> Option<Rational> {
    if q.is_negative() {
        return None;
    }
    let root = |n: &BigInt| {
        let r = n.sqrt();
        (&r * &r == *n).then_some(r)
    };
    Some(Rational::new(root(q.numer())?, root(q.denom())?))
}

/// A length, exact when its square is a known combination of powers of π.
#[derive(Debug, Clone)]
pub struct Length {
    pub value: f64,
    pub square: Option<PiPoly>,
}

impl Length {
    pub fn exact(square: PiPoly) -> Self {
        Self {
            value: square.value().max(0.0).sqrt(),
            square: Some(square),
        }
    }

    /// Square root of a rational.
    pub fn from_square(q: Rational) -> Self {
        Self::exact(PiPoly::rational(q))
    }

    pub fn approx(value: f64) -> Self {
        Self { value, square: None }
    }

    pub fn zero() -> Self {
        Self::from_square(Rational::zero())
    }

    pub fn symbolic(&self) -> Option<String> {
        self.square.as_ref().map(PiPoly::render_sqrt)
    }

    /// Exact comparison when both are symbolic, else within `tol`.
    pub fn same(&self, other: &Length, tol: f64) -> bool {
        match (&self.square, &other.square) {
            (Some(a), Some(b)) => a == b,
            _ => (self.value - other.value).abs() <= tol,
        }
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Length", 2)?;
        st.serialize_field("value", &round_float(self.value))?;
        st.serialize_field("symbolic", &self.symbolic())?;
        st.end()
    }
}

// ------------------------------------------------------ exact projections

fn inner(gram: &Matrix<Rational>, u: &[Rational], v: &[Rational]) -> Rational {
    linalg::dot(u, &linalg::mat_vec(gram, v))
}

/// Orthogonal projection onto the span of `basis` (rows, independent).
fn project_onto(basis: &Matrix<Rational>, gram: &Matrix<Rational>, x: &[Rational]) -> Vector<Rational> {
    let n = x.len();
    if basis.is_empty() {
        return linalg::zeros(n);
    }
    let gb: Matrix<Rational> = basis.iter().map(|b| linalg::mat_vec(gram, b)).collect();
    let m: Matrix<Rational> = gb
        .iter()
        .map(|row| basis.iter().map(|b| linalg::dot(row, b)).collect())
        .collect();
    let rhs: Vector<Rational> = gb.iter().map(|row| linalg::dot(row, x)).collect();
    let c = linalg::solve(&m, &rhs, basis.len()).expect("Gram matrix of a basis is invertible");
    let mut out = linalg::zeros(n);
    for (ci, b) in c.iter().zip(basis) {
        out = linalg::axpy(&out, ci, b);
    }
    out
}

/// Basis of the orthogonal complement of the span of `basis`.
fn complement(basis: &Matrix<Rational>, gram: &Matrix<Rational>, n: usize) -> Matrix<Rational> {
    if basis.is_empty() {
        return linalg::identity(n);
    }
    let rows: Matrix<Rational> = basis.iter().map(|b| linalg::mat_vec(gram, b)).collect();
    linalg::null_space(&rows, n)
}

// ------------------------------------------------------- two-step formulas

/// `log γ = V* + Z*` with `Z*` central and `V* ⊥ z`; `Z**` is the part of
/// `Z*` orthogonal to `[V*, n]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepLengthData {
    #[serde(serialize_with = "ser_vec")]
    pub v_star: Vector<Rational>,
    #[serde(serialize_with = "ser_vec")]
    pub z_star: Vector<Rational>,
    #[serde(serialize_with = "ser_vec")]
    pub z_double_star: Vector<Rational>,
    #[serde(serialize_with = "ser_q")]
    pub v_norm_sq: Rational,
    #[serde(serialize_with = "ser_q")]
    pub z_star_norm_sq: Rational,
    #[serde(serialize_with = "ser_q")]
    pub z_double_star_norm_sq: Rational,
}

fn ser_vec<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(format_rational))
}

fn ser_q<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(q))
}

pub fn two_step_data(sc: &Algebra, gram: &Matrix<Rational>, x: &[Rational]) -> TwoStepLengthData {
    let center = sc.center();
    let z_star = project_onto(&center.basis, gram, x);
    let v_star = linalg::sub(x, &z_star);
    let image = sc.ad_image(&v_star);
    let z2 = linalg::sub(&z_star, &project_onto(&image.basis, gram, &z_star));
    TwoStepLengthData {
        v_norm_sq: inner(gram, &v_star, &v_star),
        z_star_norm_sq: inner(gram, &z_star, &z_star),
        z_double_star_norm_sq: inner(gram, &z2, &z2),
        v_star,
        z_star,
        z_double_star: z2,
    }
}

/// Where a class's period data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthSource {
    /// Flat torus: the single period `|log γ|`.
    Abelian,
    /// Two-step closed forms: bracket plus one or two guaranteed periods.
    TwoStep,
    /// Heisenberg times flat factor: the complete period set.
    Heisenberg,
    /// Central in a three-step group: only `|log γ|` is known.
    CentralGuaranteed,
}

/// What is known about the periods of one class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassLengths {
    /// Periods known to occur.
    pub known: Vec<Length>,
    /// Every period is at least this.
    pub lower: Length,
    /// Every period is at most this, when a bound is known.
    pub upper: Option<Length>,
    /// Whether `known` is the full period set.
    pub complete: bool,
    /// Whether `lower` is a period exactly when it appears in `known`.
    pub lower_decided: bool,
    pub source: LengthSource,
}

/// Whether a length is a period of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Yes,
    No,
    Unknown,
}

impl ClassLengths {
    pub fn status(&self, lambda: &Length, tol: f64) -> Membership {
        if self.known.iter().any(|k| k.same(lambda, tol)) {
            return Membership::Yes;
        }
        if self.complete || lambda.value < self.lower.value - tol {
            return Membership::No;
        }
        if self.upper.as_ref().is_some_and(|u| lambda.value > u.value + tol) {
            return Membership::No;
        }
        if self.lower_decided && self.lower.same(lambda, tol) {
            return Membership::No;
        }
        Membership::Unknown
    }

    /// Whether some period might be at most `lambda_max`.
    pub fn may_reach(&self, lambda_max: f64) -> bool {
        if self.known.iter().any(|k| k.value <= lambda_max + LENGTH_TOL) {
            return true;
        }
        !self.complete && self.lower.value <= lambda_max + LENGTH_TOL
    }
}

/// Periods of `exp(x)` in a two-step group.
///
/// Guaranteed: `√(|V*|² + |Z**|²)`, and `|V*|` exactly when `Z** = 0`. Every
/// period lies between the two. Intermediate periods are not excluded when
/// `V* ≠ 0 ≠ Z**`, so those classes are bound-only.
pub fn two_step_lengths(sc: &Algebra, gram: &Matrix<Rational>, x: &[Rational]) -> ClassLengths {
    let d = two_step_data(sc, gram, x);
    let lower = Length::from_square(d.v_norm_sq.clone());
    let upper = Length::from_square(&d.v_norm_sq + &d.z_double_star_norm_sq);
    let z2_zero = d.z_double_star_norm_sq.is_zero();
    let v_zero = d.v_norm_sq.is_zero();
    ClassLengths {
        known: if v_zero && z2_zero { vec![] } else { vec![upper.clone()] },
        lower,
        upper: Some(upper),
        complete: z2_zero,
        lower_decided: true,
        source: LengthSource::TwoStep,
    }
}

/// A two-step metric Lie algebra that splits as `h₁ ⊕ a`, Heisenberg times
/// flat, orthogonally.
#[derive(Debug, Clone)]
pub struct HeisenbergFactor {
    /// `X`, `Y`, `Z`: orthogonal (not normalized) basis of `h₁`, with `Z` spanning `[g, g]`.
    pub basis: [Vector<Rational>; 3],
    /// Basis of the flat factor.
    pub flat: Matrix<Rational>,
    /// `|[X, Y]|²` for unit `X`, `Y`.
    pub theta_sq: Rational,
    gram: Matrix<Rational>,
}

impl HeisenbergFactor {
    pub fn detect(sc: &Algebra, gram: &Matrix<Rational>) -> Result<Self, SpectraError> {
        let n = sc.dim;
        let fail = |m: &str| Err(SpectraError::NotAFactorGroup(m.into()));
        let series = sc.derived_series()?;
        if series.len() != 2 || series[0].dim() != 1 {
            return fail("derived algebra is not one-dimensional");
        }
        let d = series[0].basis[0].clone();
        let dd = vec![d.clone()];
        let center = sc.center();
        let flat_vecs: Matrix<Rational> = center
            .basis
            .iter()
            .map(|c| linalg::sub(c, &project_onto(&dd, gram, c)))
            .collect();
        let flat = Subspace::span(n, flat_vecs).basis;
        let h = complement(&flat, gram, n);
        if h.len() != 3 {
            return fail("orthogonal complement of the flat part is not three-dimensional");
        }
        let horiz = Subspace::span(
            n,
            h.iter().map(|v| linalg::sub(v, &project_onto(&dd, gram, v))).collect(),
        )
        .basis;
        if horiz.len() != 2 {
            return fail("Heisenberg part has no two-dimensional horizontal space");
        }
        let x = horiz[0].clone();
        let y = linalg::sub(&horiz[1], &project_onto(&[x.clone()].to_vec(), gram, &horiz[1]));
        let xy = sc.bracket(&x, &y);
        if linalg::is_zero_vec(&xy) {
            return fail("horizontal vectors commute");
        }
        let theta_sq = inner(gram, &xy, &xy) / (inner(gram, &x, &x) * inner(gram, &y, &y));
        Ok(Self {
            basis: [x, y, d],
            flat,
            theta_sq,
            gram: gram.clone(),
        })
    }

    /// The Heisenberg factor alone, in the basis `X, Y, Z`, with its metric.
    pub fn factor_algebra(&self, sc: &Algebra) -> (Algebra, MetricSpec) {
        let n = sc.dim;
        let mut full: Matrix<Rational> = self.basis.to_vec();
        full.extend(self.flat.iter().cloned());
        let labels: Vec<String> = (0..n).map(|i| format!("h{}", i + 1)).collect();
        let changed = sc
            .change_basis(&full, labels)
            .expect("factor basis is a basis");
        let c = (0..3)
            .map(|i| (0..3).map(|j| changed.table()[i][j][..3].to_vec()).collect())
            .collect();
        let alg = Algebra::from_table(vec!["X".into(), "Y".into(), "Z".into()], c);
        let gram_h = (0..3)
            .map(|i| (0..3).map(|j| inner(&self.gram, &self.basis[i], &self.basis[j])).collect())
            .collect();
        (alg, MetricSpec::from_gram(gram_h).expect("restriction of a metric"))
    }

    /// Coordinates of the Heisenberg component of `x` in the basis `X, Y, Z`.
    pub fn factor_coordinates(&self, x: &[Rational]) -> Vector<Rational> {
        let xh = linalg::sub(x, &project_onto(&self.flat, &self.gram, x));
        self.basis
            .iter()
            .map(|b| inner(&self.gram, &xh, b) / inner(&self.gram, b, b))
            .collect()
    }

    /// The complete period set of `exp(x)`.
    pub fn lengths(&self, x: &[Rational]) -> ClassLengths {
        let g = &self.gram;
        let xa = project_onto(&self.flat, g, x);
        let xh = linalg::sub(x, &xa);
        let flat_sq = inner(g, &xa, &xa);
        let zline = vec![self.basis[2].clone()];
        let vh = linalg::sub(&xh, &project_onto(&zline, g, &xh));
        let known = if !linalg::is_zero_vec(&vh) {
            vec![Length::from_square(inner(g, &vh, &vh) + &flat_sq)]
        } else if !linalg::is_zero_vec(&xh) {
            central_heisenberg(&inner(g, &xh, &xh), &self.theta_sq, &flat_sq)
        } else if !flat_sq.is_zero() {
            vec![Length::from_square(flat_sq.clone())]
        } else {
            vec![]
        };
        let upper = known.iter().max_by(|a, b| a.value.total_cmp(&b.value)).cloned();
        ClassLengths {
            lower: Length::from_square(flat_sq),
            upper,
            known,
            complete: true,
            lower_decided: true,
            source: LengthSource::Heisenberg,
        }
    }
}

/// Periods of `exp(tZ)` in a Heisenberg group with `[X, Y] = θ Z` orthonormal,
/// each squared length shifted by `flat_sq`:
/// `t` and `√((4πk/θ)(t − πk/θ))` for integers `1 ≤ k < θt/2π`.
fn central_heisenberg(t_sq: &Rational, theta_sq: &Rational, flat_sq: &Rational) -> Vec<Length> {
    let mut out = vec![Length::from_square(t_sq + flat_sq)];
    let t_theta = (t_sq * theta_sq).to_f64().unwrap_or(0.0).sqrt();
    let ratio = sqrt_exact(&(t_sq / theta_sq));
    let inv = theta_sq.recip();
    let flat = flat_sq.to_f64().unwrap_or(0.0);
    let mut k = 1i64;
    while (k as f64) < t_theta / (2.0 * PI) {
        let kq = Rational::from_integer(BigInt::from(k));
        let four = Rational::from_integer(BigInt::from(4));
        out.push(match &ratio {
            Some(r) => Length::exact(PiPoly::new(
                flat_sq.clone(),
                &four * &kq * r,
                -(&four * &kq * &kq * &inv),
            )),
            None => {
                let t_over = (t_sq / theta_sq).to_f64().unwrap_or(0.0).sqrt();
                let kf = k as f64;
                let invf = inv.to_f64().unwrap_or(0.0);
                Length::approx((4.0 * PI * kf * t_over - 4.0 * PI * PI * kf * kf * invf + flat).sqrt())
            }
        });
        k += 1;
    }
    out
}

/// Full period set of `exp(x)` when the group is Heisenberg times flat.
///
/// For `x` noncentral in the Heisenberg factor this is the single period
/// `|x|`; for `x` central it is the finite family of helices.
pub fn heisenberg_central_lengths(
    sc: &Algebra,
    gram: &Matrix<Rational>,
    x: &[Rational],
) -> Result<Vec<Length>, SpectraError> {
    let f = HeisenbergFactor::detect(sc, gram)?;
    let mut k = f.lengths(x).known;
    k.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(k)
}

// ------------------------------------------------------- class bookkeeping

/// Position of a class relative to the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    /// `γ ∈ Z(G)`.
    Central,
    /// `γ ∉ Z(G)` but its image in `G / G⁽²⁾` is central there.
    QuotientCentral,
    /// Image in `G / G⁽²⁾` is noncentral.
    Generic,
}

/// Periods of `G`-classes for one group and metric.
#[derive(Debug, Clone)]
pub struct LengthModel {
    pub classes: GClasses<Rational>,
    pub gram: Matrix<Rational>,
    step: usize,
    /// Two-step algebra carrying the closed forms, with its metric.
    target: Option<(Algebra, Matrix<Rational>)>,
    heisenberg: Option<HeisenbergFactor>,
}

impl LengthModel {
    pub fn new(group: &Group, metric: &MetricSpec) -> Result<Self, SpectraError> {
        let classes = GClasses::new(group.clone())?;
        let step = group.step;
        let target = match step {
            0 | 1 => None,
            2 => Some((group.algebra.clone(), metric.gram.clone())),
            _ => {
                let q = classes.quotient.as_ref().expect("step three has a quotient");
                Some((q.algebra.clone(), metric.quotient_metric(q).gram))
            }
        };
        let heisenberg = target
            .as_ref()
            .and_then(|(a, g)| HeisenbergFactor::detect(a, g).ok());
        Ok(Self {
            classes,
            gram: metric.gram.clone(),
            step,
            target,
            heisenberg,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn heisenberg(&self) -> Option<&HeisenbergFactor> {
        self.heisenberg.as_ref()
    }

    /// The two-step algebra and metric used for closed forms.
    pub fn target(&self) -> Option<(&Algebra, &Matrix<Rational>)> {
        self.target.as_ref().map(|(a, g)| (a, g))
    }

    /// Vector of the target algebra representing a class.
    fn target_vector(&self, key: &GClassKey<Rational>) -> Vector<Rational> {
        match key {
            GClassKey::Central(v) => v.clone(),
            GClassKey::Noncentral(v) if self.step == 2 => {
                let q = self.classes.quotient.as_ref().expect("quotient");
                let mut x = linalg::zeros(self.gram.len());
                for (c, s) in v.iter().zip(&q.section) {
                    x = linalg::axpy(&x, c, s);
                }
                x
            }
            GClassKey::Noncentral(v) => v.clone(),
        }
    }

    fn closed_form(&self, x: &[Rational]) -> ClassLengths {
        let (alg, gram) = self.target.as_ref().expect("closed forms need step two or three");
        match &self.heisenberg {
            Some(f) => f.lengths(x),
            None => two_step_lengths(alg, gram, x),
        }
    }

    pub fn class_info(&self, key: &GClassKey<Rational>) -> (ClassKind, ClassLengths) {
        match key {
            GClassKey::Central(v) => {
                let sq = inner(&self.gram, v, v);
                let lengths = match self.step {
                    0 | 1 => {
                        let l = Length::from_square(sq);
                        ClassLengths {
                            known: vec![l.clone()],
                            lower: l.clone(),
                            upper: Some(l),
                            complete: true,
                            lower_decided: true,
                            source: LengthSource::Abelian,
                        }
                    }
                    2 => self.closed_form(v),
                    _ => ClassLengths {
                        known: vec![Length::from_square(sq)],
                        lower: Length::zero(),
                        upper: None,
                        complete: false,
                        lower_decided: false,
                        source: LengthSource::CentralGuaranteed,
                    },
                };
                (ClassKind::Central, lengths)
            }
            GClassKey::Noncentral(_) => {
                let x = self.target_vector(key);
                let (alg, gram) = self.target.as_ref().expect("noncentral classes need a quotient");
                let d = two_step_data(alg, gram, &x);
                let kind = if self.step >= 3 && d.v_norm_sq.is_zero() {
                    ClassKind::QuotientCentral
                } else {
                    ClassKind::Generic
                };
                (kind, self.closed_form(&x))
            }
        }
    }

    /// Periods of the class of `γ`, a word in `lat`.
    pub fn word_lengths(&self, lat: &Lattice, w: &[i64]) -> (GClassKey<Rational>, ClassKind, ClassLengths) {
        let key = self.classes.key(&lat.word_to_element(w));
        let (kind, l) = self.class_info(&key);
        (key, kind, l)
    }
}

/// Image of a three-step lattice element in `G / G⁽²⁾`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    /// False for central elements, whose periods are not determined by the image.
    pub applicable: bool,
    #[serde(serialize_with = "ser_vec")]
    pub quotient_log: Vector<Rational>,
    /// Word in the quotient lattice generated by the projected outer and middle generators.
    pub quotient_word: CanonicalWord,
}

pub fn reduce_to_quotient(lat: &Lattice, w: &[i64]) -> Result<Reduction, SpectraError> {
    let classes = GClasses::new(lat.group.clone())?;
    if lat.group.step != 3 {
        return Err(SpectraError::PreconditionFail("group is not three-step".into()));
    }
    let q = classes.quotient.as_ref().expect("three-step groups have a quotient");
    let x = lat.word_to_element(w);
    let qlog = q.project(&x.log);
    let qlat = lat.quotient_lattice(q)?;
    let quotient_word = qlat.element_to_word(&GroupElement::from_log(qlog.clone()))?;
    Ok(Reduction {
        applicable: !linalg::is_zero_vec(&qlog),
        quotient_log: qlog,
        quotient_word,
    })
}

/// Exact number of lattice classes inside a `G`-class.
pub fn count_classes_in_g_class(
    model: &LengthModel,
    lat: &Lattice,
    key: &GClassKey<Rational>,
) -> Result<u128, SpectraError> {
    match model.classes.count_in_class(lat, key)?.0 {
        ClassCount::Finite(n) => Ok(n),
        ClassCount::Infinite => Err(SpectraError::InfiniteClassCount),
    }
}

/// A `G`-class met by the lattice, with its lattice classes.
#[derive(Debug, Clone, Serialize)]
pub struct SurveyedClass {
    #[serde(serialize_with = "ser_key")]
    pub key: GClassKey<Rational>,
    pub kind: ClassKind,
    pub lengths: ClassLengths,
    /// Lattice classes inside the `G`-class.
    pub count: u128,
    /// Nice representatives, each standing for `classes` lattice classes that
    /// differ only in the central block.
    pub representatives: Vec<(CanonicalWord, u128)>,
}

fn ser_key<S: Serializer>(k: &GClassKey<Rational>, s: S) -> Result<S::Ok, S::Error> {
    let (tag, v) = match k {
        GClassKey::Central(v) => ("central", v),
        GClassKey::Noncentral(v) => ("noncentral", v),
    };
    let mut st = s.serialize_struct("GClassKey", 2)?;
    st.serialize_field("kind", tag)?;
    st.serialize_field("log", &v.iter().map(format_rational).collect::<Vec<_>>())?;
    st.end()
}

/// Every `G`-class represented by a word with exponents in `[-window, window]`
/// whose periods may reach `lambda_max`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassSurvey {
    pub lattice: String,
    pub window: i64,
    pub lambda_max: f64,
    pub classes: Vec<SurveyedClass>,
}

/// Odometer over `[-w, w]^k`.
fn for_each_exponent(k: usize, w: i64, mut f: impl FnMut(&[i64])) {
    let mut e = vec![-w; k];
    loop {
        f(&e);
        let mut i = 0;
        loop {
            if i == k {
                return;
            }
            if e[i] < w {
                e[i] += 1;
                break;
            }
            e[i] = -w;
            i += 1;
        }
    }
}

/// `G`-class keys from window words, pruned by `|V*| ≤ λ_max` (every period
/// of a noncentral class is at least `|V*|`).
pub fn enumerate_keys(
    model: &LengthModel,
    lat: &Lattice,
    window: i64,
    lambda_max: f64,
) -> Result<BTreeSet<GClassKey<Rational>>, SpectraError> {
    let mut keys = BTreeSet::new();
    let n = lat.dim();
    if model.step <= 1 {
        for_each_exponent(n, window, |e| {
            let x = lat.word_to_element(e);
            if !x.is_identity() {
                keys.insert(GClassKey::Central(x.log));
            }
        });
        return Ok(keys);
    }
    let q = model.classes.quotient.as_ref().expect("quotient");
    let qlat = lat.quotient_lattice(q)?;
    let (alg, gram) = model.target.as_ref().expect("target");
    let r = lat.top().start;
    // V* of each generator, in target coordinates.
    let vstars: Vec<Vector<Rational>> = (0..r)
        .map(|i| {
            let g = &lat.spec.generators[i];
            let x = if model.step == 2 { g.clone() } else { q.project(g) };
            two_step_data(alg, gram, &x).v_star
        })
        .collect();
    let moving: Vec<usize> = (0..r).filter(|&i| !linalg::is_zero_vec(&vstars[i])).collect();
    let still: Vec<usize> = (0..r).filter(|&i| linalg::is_zero_vec(&vstars[i])).collect();
    let gram_f: Vec<Vec<f64>> = moving
        .iter()
        .map(|&i| {
            moving
                .iter()
                .map(|&j| inner(gram, &vstars[i], &vstars[j]).to_f64().unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect();
    let bound = lambda_max * lambda_max + 1e-9;
    let mut word = vec![0i64; r];
    for_each_exponent(moving.len(), window, |em| {
        let mut v2 = 0.0;
        for a in 0..em.len() {
            for b in 0..em.len() {
                v2 += gram_f[a][b] * (em[a] * em[b]) as f64;
            }
        }
        if v2 > bound {
            return;
        }
        for (&i, &e) in moving.iter().zip(em) {
            word[i] = e;
        }
        for_each_exponent(still.len(), window, |es| {
            for (&i, &e) in still.iter().zip(es) {
                word[i] = e;
            }
            let xbar = qlat.word_to_element(&word).log;
            if !linalg::is_zero_vec(&xbar) {
                keys.insert(GClassKey::Noncentral(model.classes.reduce_in_quotient(&xbar)));
            }
        });
    });
    // Central classes: products of the central generators.
    for_each_exponent(lat.top().len(), window, |e| {
        if e.iter().all(|&x| x == 0) {
            return;
        }
        let mut w = vec![0i64; n];
        w[lat.top()].copy_from_slice(e);
        keys.insert(GClassKey::Central(lat.word_to_element(&w).log));
    });
    Ok(keys)
}

fn survey_key(
    model: &LengthModel,
    lat: &Lattice,
    key: &GClassKey<Rational>,
    kind: ClassKind,
    lengths: ClassLengths,
) -> Result<SurveyedClass, SpectraError> {
    let (count, reps) = model.classes.count_in_class(lat, key)?;
    let count = count.finite().ok_or(SpectraError::InfiniteClassCount)?;
    let representatives = reps
        .into_iter()
        .map(|w| {
            let k = match key {
                GClassKey::Central(_) => Some(1),
                GClassKey::Noncentral(_) => lat.nice_representative(&w)?.top_index,
            };
            Ok((w, k.ok_or(SpectraError::InfiniteClassCount)?))
        })
        .collect::<Result<Vec<_>, SpectraError>>()?;
    Ok(SurveyedClass {
        key: key.clone(),
        kind,
        lengths,
        count,
        representatives,
    })
}

pub fn survey_classes(
    model: &LengthModel,
    lat: &Lattice,
    window: i64,
    lambda_max: f64,
) -> Result<ClassSurvey, SpectraError> {
    let keys = enumerate_keys(model, lat, window, lambda_max)?;
    let mut classes = Vec::new();
    for key in keys {
        let (kind, lengths) = model.class_info(&key);
        if !lengths.may_reach(lambda_max) {
            continue;
        }
        classes.push(survey_key(model, lat, &key, kind, lengths)?);
    }
    Ok(ClassSurvey {
        lattice: lat.name().to_string(),
        window,
        lambda_max,
        classes,
    })
}

/// How a class's membership at a length was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certainty {
    /// Closed form, or the guaranteed period of a central class.
    Exact,
    /// Only the period bracket covers the length.
    BoundOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassRecord {
    pub representative: CanonicalWord,
    /// Lattice classes sharing this representative's noncentral part.
    pub classes: u128,
    pub kind: ClassKind,
    pub certainty: Certainty,
    /// False when other periods of the class may exist.
    pub complete: bool,
}

/// One length with its multiplicity, `m_total = m_central + m_noncentral`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub length: f64,
    pub length_symbolic: Option<String>,
    #[serde(skip)]
    pub exact: Length,
    pub m_total: u128,
    pub m_central: u128,
    pub m_noncentral: u128,
    /// Part of `m_noncentral` from classes whose image in `G / G⁽²⁾` is central.
    pub m_quotient_central: u128,
    /// Lattice classes in the window for which the length is neither confirmed nor excluded.
    pub undecided: u128,
    pub class_representatives: Vec<ClassRecord>,
    pub undecided_representatives: Vec<ClassRecord>,
    pub window: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub lattice: String,
    pub window: i64,
    pub lambda_max: f64,
    pub classes_examined: usize,
    pub entries: Vec<SpectrumEntry>,
}

/// Distinct known lengths up to `lambda_max`, ascending.
fn distinct_lengths<'a>(all: impl Iterator<Item = &'a ClassLengths>, lambda_max: f64) -> Vec<Length> {
    let mut ls: Vec<Length> = all
        .flat_map(|c| c.known.iter())
        .filter(|l| l.value <= lambda_max + LENGTH_TOL && l.value > 0.0)
        .cloned()
        .collect();
    ls.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<Length> = Vec::new();
    for l in ls {
        if !out.iter().rev().take_while(|o| l.value - o.value <= 1e-3).any(|o| o.same(&l, LENGTH_TOL)) {
            out.push(l);
        }
    }
    out
}

pub fn assemble_entries(survey: &ClassSurvey) -> Vec<SpectrumEntry> {
    let lengths = distinct_lengths(survey.classes.iter().map(|c| &c.lengths), survey.lambda_max);
    lengths
        .into_iter()
        .map(|lambda| {
            let mut e = SpectrumEntry {
                length: round_float(lambda.value),
                length_symbolic: lambda.symbolic(),
                exact: lambda.clone(),
                m_total: 0,
                m_central: 0,
                m_noncentral: 0,
                m_quotient_central: 0,
                undecided: 0,
                class_representatives: vec![],
                undecided_representatives: vec![],
                window: survey.window,
            };
            for c in &survey.classes {
                let status = c.lengths.status(&lambda, LENGTH_TOL);
                let records = |certainty| {
                    c.representatives.iter().map(move |(w, k)| ClassRecord {
                        representative: w.clone(),
                        classes: *k,
                        kind: c.kind,
                        certainty,
                        complete: c.lengths.complete,
                    })
                };
                match status {
                    Membership::Yes => {
                        match c.kind {
                            ClassKind::Central => e.m_central += c.count,
                            ClassKind::QuotientCentral => {
                                e.m_noncentral += c.count;
                                e.m_quotient_central += c.count;
                            }
                            ClassKind::Generic => e.m_noncentral += c.count,
                        }
                        e.class_representatives.extend(records(Certainty::Exact));
                    }
                    Membership::Unknown => {
                        e.undecided += c.count;
                        e.undecided_representatives.extend(records(Certainty::BoundOnly));
                    }
                    Membership::No => {}
                }
            }
            e.m_total = e.m_central + e.m_noncentral;
            e
        })
        .collect()
}

/// Length spectrum up to `lambda_max` over the classes met by window words.
pub fn length_spectrum(
    lat: &Lattice,
    metric: &MetricSpec,
    window: i64,
    lambda_max: f64,
) -> Result<SpectrumReport, SpectraError> {
    let model = LengthModel::new(&lat.group, metric)?;
    let survey = survey_classes(&model, lat, window, lambda_max)?;
    Ok(SpectrumReport {
        lattice: survey.lattice.clone(),
        window,
        lambda_max,
        classes_examined: survey.classes.len(),
        entries: assemble_entries(&survey),
    })
}

// ------------------------------------------------------------ comparisons

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Same,
    Different,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyCounts {
    #[serde(serialize_with = "ser_key")]
    pub key: GClassKey<Rational>,
    pub kind: ClassKind,
    pub count1: u128,
    pub count2: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct LengthRow {
    pub length: f64,
    pub length_symbolic: Option<String>,
    pub m1: u128,
    pub m2: u128,
    /// Range of `m1 − m2` over all ways of resolving undecided classes.
    pub difference_min: i128,
    pub difference_max: i128,
}

#[derive(Debug, Clone, Serialize)]
pub struct LengthComparison {
    pub verdict: Verdict,
    pub window: i64,
    pub lambda_max: f64,
    pub rows: Vec<LengthRow>,
    pub keys: Vec<KeyCounts>,
}

/// Compares two lattices of one group class by class.
///
/// Periods depend only on the `G`-class, so equal counts in every `G`-class
/// give equal spectra. A length is decided different when `m1 − m2` keeps one
/// sign however the undecided classes resolve; an undecided class resolves the
/// same way in both lattices.
pub fn compare_lengths(
    lat1: &Lattice,
    lat2: &Lattice,
    metric: &MetricSpec,
    window: i64,
    lambda_max: f64,
) -> Result<LengthComparison, SpectraError> {
    let model = LengthModel::new(&lat1.group, metric)?;
    let mut keys = enumerate_keys(&model, lat1, window, lambda_max)?;
    keys.extend(enumerate_keys(&model, lat2, window, lambda_max)?);
    let mut table = Vec::new();
    for key in keys {
        let (kind, lengths) = model.class_info(&key);
        if !lengths.may_reach(lambda_max) {
            continue;
        }
        let c1 = count_classes_in_g_class(&model, lat1, &key)?;
        let c2 = count_classes_in_g_class(&model, lat2, &key)?;
        table.push((key, kind, lengths, c1, c2));
    }
    let ls = distinct_lengths(table.iter().map(|t| &t.2), lambda_max);
    let mut rows = Vec::new();
    let mut decided_different = false;
    for lambda in ls {
        let (mut m1, mut m2, mut dmin, mut dmax) = (0u128, 0u128, 0i128, 0i128);
        for (_, _, lengths, c1, c2) in &table {
            let d = *c1 as i128 - *c2 as i128;
            match lengths.status(&lambda, LENGTH_TOL) {
                Membership::Yes => {
                    m1 += c1;
                    m2 += c2;
                    dmin += d;
                    dmax += d;
                }
                Membership::Unknown => {
                    dmin += d.min(0);
                    dmax += d.max(0);
                }
                Membership::No => {}
            }
        }
        decided_different |= dmin > 0 || dmax < 0;
        rows.push(LengthRow {
            length: round_float(lambda.value),
            length_symbolic: lambda.symbolic(),
            m1,
            m2,
            difference_min: dmin,
            difference_max: dmax,
        });
    }
    let all_equal = table.iter().all(|t| t.3 == t.4);
    let verdict = if decided_different {
        Verdict::Different
    } else if all_equal {
        Verdict::Same
    } else {
        Verdict::Inconclusive
    };
    Ok(LengthComparison {
        verdict,
        window,
        lambda_max,
        rows,
        keys: table
            .into_iter()
            .map(|(key, kind, _, count1, count2)| KeyCounts {
                key,
                kind,
                count1,
                count2,
            })
            .collect(),
    })
}

/// Per-length equality of central class counts, under equal central intersections.
#[derive(Debug, Clone, Serialize)]
pub struct CentralCheck {
    pub hypothesis_holds: bool,
    pub equal: bool,
    /// `(length, count in lattice 1, count in lattice 2)`.
    pub per_length: Vec<(Length, u128, u128)>,
    pub window: i64,
}

pub fn central_multiplicity_check(
    lat1: &Lattice,
    lat2: &Lattice,
    metric: &MetricSpec,
    window: i64,
) -> Result<CentralCheck, SpectraError> {
    if !lat1.same_center_intersection(lat2) {
        return Err(SpectraError::HypothesisFails);
    }
    let central_lengths = |lat: &Lattice| {
        let mut v = Vec::new();
        for_each_exponent(lat.top().len(), window, |e| {
            if e.iter().all(|&x| x == 0) {
                return;
            }
            let mut w = vec![0i64; lat.dim()];
            w[lat.top()].copy_from_slice(e);
            let x = lat.word_to_element(&w).log;
            v.push(Length::from_square(inner(&metric.gram, &x, &x)));
        });
        v
    };
    let a = central_lengths(lat1);
    let b = central_lengths(lat2);
    let mut per: Vec<(Length, u128, u128)> = Vec::new();
    for (l, side) in a.iter().map(|l| (l, 0)).chain(b.iter().map(|l| (l, 1))) {
        match per.iter_mut().find(|p| p.0.same(l, LENGTH_TOL)) {
            Some(p) => {
                if side == 0 {
                    p.1 += 1
                } else {
                    p.2 += 1
                }
            }
            None => per.push((l.clone(), u128::from(side == 0), u128::from(side == 1))),
        }
    }
    per.sort_by(|x, y| x.0.value.total_cmp(&y.0.value));
    Ok(CentralCheck {
        hypothesis_holds: true,
        equal: per.iter().all(|p| p.1 == p.2),
        per_length: per,
        window,
    })
}

/// An isomorphism `Φ: Γ1 → Γ2` given by an automorphism of the algebra.
#[derive(Debug, Clone)]
pub struct MarkingSpec {
    pub automorphism: AutomorphismSpec,
    pub source: Lattice,
    pub target: Lattice,
}

impl MarkingSpec {
    /// Checks bracket preservation and `Φ(Γ1) = Γ2` on generators.
    pub fn new(automorphism: AutomorphismSpec, source: Lattice, target: Lattice) -> Result<Self, SpectraError> {
        let check = morphisms::is_automorphism(&automorphism.matrix, &source.group.algebra)?;
        if !check.holds {
            return Err(SpectraError::PreconditionFail(format!(
                "{} does not preserve the bracket of basis pair {:?}",
                automorphism.name, check.violation
            )));
        }
        let inv = automorphism.inverse()?;
        let maps_into = |m: &AutomorphismSpec, from: &Lattice, to: &Lattice| {
            from.spec
                .generators
                .iter()
                .all(|g| to.contains(&GroupElement::from_log(m.apply(g))))
        };
        if !maps_into(&automorphism, &source, &target) || !maps_into(&inv, &target, &source) {
            return Err(SpectraError::PreconditionFail(format!(
                "{} does not carry {} onto {}",
                automorphism.name,
                source.name(),
                target.name()
            )));
        }
        Ok(Self {
            automorphism,
            source,
            target,
        })
    }

    pub fn inverse(&self) -> Result<Self, SpectraError> {
        Ok(Self {
            automorphism: self.automorphism.inverse()?,
            source: self.target.clone(),
            target: self.source.clone(),
        })
    }

    pub fn image_word(&self, w: &[i64]) -> Result<CanonicalWord, SpectraError> {
        let x = self.source.word_to_element(w);
        Ok(self
            .target
            .element_to_word(&GroupElement::from_log(self.automorphism.apply(&x.log)))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassVerdict {
    Same,
    Different,
    Undecided,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkedRow {
    pub representative: CanonicalWord,
    pub image: CanonicalWord,
    pub lengths: ClassLengths,
    pub image_lengths: ClassLengths,
    pub verdict: ClassVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkedComparison {
    pub verdict: Verdict,
    pub window: i64,
    pub lambda_max: f64,
    pub per_class: Vec<MarkedRow>,
}

fn compare_class(a: &ClassLengths, b: &ClassLengths, same_key: bool, tol: f64) -> ClassVerdict {
    if same_key {
        return ClassVerdict::Same;
    }
    let excluded = |x: &ClassLengths, y: &ClassLengths| {
        x.known.iter().any(|l| y.status(l, tol) == Membership::No)
    };
    if excluded(a, b) || excluded(b, a) {
        return ClassVerdict::Different;
    }
    if a.complete && b.complete {
        // Neither excludes the other's periods, so the sets agree.
        return ClassVerdict::Same;
    }
    ClassVerdict::Undecided
}

/// Compares the periods of `γ` and `Φ(γ)` for each class met by window words.
pub fn compare_marked(
    spec: &MarkingSpec,
    metric: &MetricSpec,
    window: i64,
    lambda_max: f64,
    tol: f64,
) -> Result<MarkedComparison, SpectraError> {
    let model = LengthModel::new(&spec.source.group, metric)?;
    let survey = survey_classes(&model, &spec.source, window, lambda_max)?;
    let mut rows = Vec::new();
    for c in &survey.classes {
        for (w, _) in &c.representatives {
            let image = spec.image_word(w)?;
            let (key2, _, l2) = model.word_lengths(&spec.target, &image);
            let verdict = compare_class(&c.lengths, &l2, key2 == c.key, tol);
            rows.push(MarkedRow {
                representative: w.clone(),
                image,
                lengths: c.lengths.clone(),
                image_lengths: l2,
                verdict,
            });
        }
    }
    let verdict = if rows.iter().any(|r| r.verdict == ClassVerdict::Different) {
        Verdict::Different
    } else if rows.iter().all(|r| r.verdict == ClassVerdict::Same) {
        Verdict::Same
    } else {
        Verdict::Inconclusive
    };
    Ok(MarkedComparison {
        verdict,
        window,
        lambda_max,
        per_class: rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkingReport {
    /// `Same` when this isomorphism marks; `Inconclusive` when it does not
    /// (another isomorphism might).
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub factorization: Option<Factorization>,
    pub window: i64,
}

/// Hypotheses shared by the one-dimensional-center route.
fn one_dim_preconditions(lat1: &Lattice, lat2: &Lattice) -> Result<(), SpectraError> {
    let g = &lat1.group;
    if g.step != 3 {
        return Err(SpectraError::PreconditionFail("group is not three-step".into()));
    }
    if !g.algebra.is_strictly_nonsingular() {
        return Err(SpectraError::PreconditionFail("algebra is not strictly nonsingular".into()));
    }
    if g.algebra.center().dim() != 1 {
        return Err(SpectraError::PreconditionFail("center is not one-dimensional".into()));
    }
    if !lat1.same_center_intersection(lat2) {
        return Err(SpectraError::PreconditionFail(
            "lattices meet the center in different subgroups".into(),
        ));
    }
    Ok(())
}

/// Quotient data shared by the marking checks: the quotient lattice of `lat`
/// in machine rationals when they suffice, and the quotient metric.
struct QuotientSetup {
    quotient: crate::algebra::Quotient<Rational>,
    lattice: Lattice,
    gram: Matrix<Rational>,
}

impl QuotientSetup {
    fn new(lat: &Lattice, metric: &MetricSpec) -> Result<Self, SpectraError> {
        let classes = GClasses::new(lat.group.clone())?;
        let quotient = classes.quotient.clone().expect("three-step quotient");
        let lattice = lat.quotient_lattice(&quotient)?;
        let gram = metric.quotient_metric(&quotient).gram;
        Ok(Self {
            quotient,
            lattice,
            gram,
        })
    }

    fn factorize(&self, m: &Matrix<Rational>, window: i64) -> FactorizationOutcome {
        let small = self.lattice.convert::<SmallRational>();
        let to_small = |mm: &Matrix<Rational>| -> Option<Matrix<SmallRational>> {
            mm.iter()
                .map(|r| r.iter().map(SmallRational::from_rational).collect())
                .collect()
        };
        match (small, to_small(m), to_small(&self.gram)) {
            (Ok(l), Some(ms), Some(gs)) => eberlein_factorization_check(&ms, &l, &gs, window),
            _ => eberlein_factorization_check(m, &self.lattice, &self.gram, window),
        }
    }
}

/// Marking through the quotient: `Φ` marks when `Φ̄` factors as an isometry
/// times a Γ-almost-inner automorphism and `Φ` fixes or inverts the central generator.
pub fn one_dim_center_marking(
    spec: &MarkingSpec,
    metric: &MetricSpec,
    window: i64,
) -> Result<MarkingReport, SpectraError> {
    one_dim_preconditions(&spec.source, &spec.target)?;
    let mut checks = vec![Check {
        name: "automorphism".into(),
        holds: true,
        detail: "bracket preserved on all basis pairs; generators map into the target lattice".into(),
    }];
    let c = spec.source.central_generators()[0].clone();
    let img = spec.automorphism.apply(&c);
    let central_ok = img == c || img == linalg::neg(&c);
    checks.push(Check {
        name: "central generator".into(),
        holds: central_ok,
        detail: if img == c {
            "fixed".into()
        } else if central_ok {
            "inverted".into()
        } else {
            "neither fixed nor inverted".into()
        },
    });
    let setup = QuotientSetup::new(&spec.source, metric)?;
    let induced = spec
        .automorphism
        .induced_on_quotient(&setup.quotient)
        .ok_or_else(|| SpectraError::PreconditionFail("last derived term is not invariant".into()))?;
    let outcome = setup.factorize(&induced.matrix, window);
    let found = outcome.is_found();
    checks.push(Check {
        name: "quotient factorization".into(),
        holds: found,
        detail: match &outcome {
            FactorizationOutcome::Found(f) => format!(
                "isometry times almost-inner; {} window elements witnessed",
                f.almost_inner_verdict.witnessed
            ),
            FactorizationOutcome::NoFactorization { reason } => reason.clone(),
        },
    });
    let factorization = match outcome {
        FactorizationOutcome::Found(f) => Some(f),
        FactorizationOutcome::NoFactorization { .. } => None,
    };
    Ok(MarkingReport {
        verdict: if central_ok && found {
            Verdict::Same
        } else {
            Verdict::Inconclusive
        },
        checks,
        factorization,
        window,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyMarkingReport {
    /// `Different` when no member of the family marks.
    pub verdict: Verdict,
    pub scan: ScanReport,
    /// Why automorphisms in the family failed, with counts.
    pub failure_reasons: BTreeMap<String, u64>,
    pub window: i64,
}

/// Runs the quotient factorization test over every member of a family of
/// candidate quotient isomorphisms.
pub fn one_dim_center_family(
    lat1: &Lattice,
    lat2: &Lattice,
    metric: &MetricSpec,
    template: &ParamTemplate,
    window: i64,
) -> Result<FamilyMarkingReport, SpectraError> {
    one_dim_preconditions(lat1, lat2)?;
    let setup = QuotientSetup::new(lat1, metric)?;
    let small_lat = setup.lattice.convert::<SmallRational>()?;
    let gram: Matrix<SmallRational> = setup.gram.iter().map(|r| r.iter().map(rational_to_scalar).collect()).collect();
    let sc = small_lat.group.algebra.clone();
    let reasons = Mutex::new(BTreeMap::<String, u64>::new());
    let projection = morphisms::complement_projection(&sc, &gram);
    let derived = sc.derived_series()?[0].clone();
    let center = sc.center();
    let scan = morphisms::isomorphism_family_scan(template, &sc, |_, m: &Matrix<SmallRational>| {
        // The cheap necessary conditions first; the lattice scan only for survivors.
        if let Err(reason) = morphisms::isometric_factor(m, &sc, &gram, &projection, &derived, &center) {
            *reasons.lock().expect("poisoned").entry(reason).or_default() += 1;
            return false;
        }
        match eberlein_factorization_check(m, &small_lat, &gram, window) {
            FactorizationOutcome::Found(_) => true,
            FactorizationOutcome::NoFactorization { reason } => {
                *reasons.lock().expect("poisoned").entry(reason).or_default() += 1;
                false
            }
        }
    });
    Ok(FamilyMarkingReport {
        verdict: if scan.satisfying.is_empty() {
            Verdict::Different
        } else {
            Verdict::Inconclusive
        },
        scan,
        failure_reasons: reasons.into_inner().expect("poisoned"),
        window,
    })
}

// --------------------------------------------------------------- shooting

#[derive(Debug, Clone, Serialize)]
pub struct ShootingOptions {
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// RK4 steps per unit length during the solve.
    pub steps_per_unit: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            seed: 0x5eed,
            tol: 1e-6,
            max_iter: 80,
            steps_per_unit: 40,
        }
    }
}

/// A translated geodesic: `σ(s) = exp(-a) σ₀(s)` with `σ₀` from the identity
/// with unit velocity `velocity`, and `γ σ(s) = σ(s + λ)`.
#[derive(Debug, Clone, Serialize)]
pub struct Shot {
    pub lambda: f64,
    pub velocity: Vec<f64>,
    pub conjugator: Vec<f64>,
    pub defect: f64,
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Levenberg-Marquardt with forward-difference Jacobians.
fn levenberg_marquardt(f: impl Fn(&[f64]) -> Option<Vec<f64>>, x0: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let Some(mut r) = f(&x) else {
        return (x, f64::INFINITY);
    };
    let mut mu = 1e-3;
    let p = x.len();
    for _ in 0..max_iter {
        let cost = sq_norm(&r);
        if cost < 1e-26 {
            break;
        }
        let mut jac = vec![vec![0.0; p]; r.len()];
        for j in 0..p {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let Some(rp) = f(&xp) else {
                return (x, cost.sqrt());
            };
            for i in 0..r.len() {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let mut jtj = vec![vec![0.0; p]; p];
        let mut jtr = vec![0.0; p];
        for i in 0..r.len() {
            for a in 0..p {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..p {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += mu * (jtj[a][a] + 1e-9);
            }
            let Some(delta) = solve_dense(m, jtr.iter().map(|v| -v).collect()) else {
                mu *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            if let Some(rn) = f(&xn) {
                if sq_norm(&rn) < cost {
                    x = xn;
                    r = rn;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let c = sq_norm(&r).sqrt();
    (x, c)
}

/// Residual of the translation condition for unknowns `(v, λ, a)`.
fn shooting_residual(frame: &AdaptedFrame<f64>, gamma: &[f64], steps: usize, u: &[f64]) -> Option<Vec<f64>> {
    let n = frame.dim();
    let v = &u[..n];
    let lambda = u[n];
    let a = &u[n + 1..];
    if lambda <= 1e-9 || !lambda.is_finite() {
        return None;
    }
    let traj = integrate_fixed(frame, &GeodesicState::at_identity(v.to_vec()), lambda, steps);
    let end = traj.end();
    let target = frame.group.adjoint(a, gamma);
    let mut r = linalg::sub(&end.position, &target);
    r.extend(linalg::sub(&end.velocity, v));
    r.push(sq_norm(v) - 1.0);
    Some(r)
}

/// Translation defect of a candidate, on a fine fixed-step trajectory.
fn final_defect(frame: &AdaptedFrame<f64>, gamma: &[f64], shot: &Shot) -> f64 {
    let steps = ((shot.lambda * 400.0).ceil() as usize).max(400);
    let traj = integrate_fixed(frame, &GeodesicState::at_identity(shot.velocity.clone()), shot.lambda * 1.001, steps);
    let conj = frame.group.adjoint(&shot.conjugator, gamma);
    translation_defect(frame, &conj, &traj, shot.lambda)
}

/// Solves for a translated geodesic of `γ` (frame coordinates) from one start.
pub fn shoot_translated(
    frame: &AdaptedFrame<f64>,
    gamma: &[f64],
    lambda_init: f64,
    v_init: &[f64],
    tol: f64,
) -> Result<Shot, SpectraError> {
    shoot_once(frame, gamma, lambda_init, v_init, &vec![0.0; frame.dim()], &ShootingOptions {
        tol,
        ..ShootingOptions::default()
    })
}

fn shoot_once(
    frame: &AdaptedFrame<f64>,
    gamma: &[f64],
    lambda_init: f64,
    v_init: &[f64],
    a_init: &[f64],
    opts: &ShootingOptions,
) -> Result<Shot, SpectraError> {
    let n = frame.dim();
    let nv = sq_norm(v_init).sqrt().max(1e-12);
    let mut u: Vec<f64> = v_init.iter().map(|x| x / nv).collect();
    u.push(lambda_init.max(1e-3));
    u.extend_from_slice(a_init);
    let coarse = ((lambda_init.max(0.5) * opts.steps_per_unit as f64).ceil() as usize).max(16);
    let mut best = f64::INFINITY;
    for steps in [coarse, 4 * coarse] {
        let (x, _) = levenberg_marquardt(|p| shooting_residual(frame, gamma, steps, p), &u, opts.max_iter);
        u = x;
    }
    let v = &u[..n];
    let nv = sq_norm(v).sqrt();
    if nv > 0.0 && u[n] > 0.0 {
        let shot = Shot {
            lambda: u[n],
            velocity: v.iter().map(|x| x / nv).collect(),
            conjugator: u[n + 1..].to_vec(),
            defect: 0.0,
        };
        let d = final_defect(frame, gamma, &shot);
        if d < opts.tol {
            return Ok(Shot { defect: d, ..shot });
        }
        best = d;
    }
    Err(SpectraError::NoConvergence { starts: 1, best })
}

/// Multi-start shooting: seeds from random unit velocities with `λ` at the
/// bracket endpoints and between. Returns distinct periods, ascending.
pub fn shoot_multistart(
    frame: &AdaptedFrame<f64>,
    gamma: &[f64],
    bracket: (f64, f64),
    opts: &ShootingOptions,
) -> Result<Vec<Shot>, SpectraError> {
    let n = frame.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lo, hi) = (bracket.0.max(1e-3), bracket.1.max(bracket.0).max(1e-3));
    let mut found: Vec<Shot> = Vec::new();
    let mut best = f64::INFINITY;
    for s in 0..opts.starts {
        let lambda0 = match s % 4 {
            0 => hi,
            1 => lo,
            _ => lo + (hi - lo) * rng.gen::<f64>(),
        };
        let v0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let a0: Vec<f64> = (0..n).map(|_| 0.0).collect();
        match shoot_once(frame, gamma, lambda0, &v0, &a0, opts) {
            Ok(shot) => {
                if !found.iter().any(|f| (f.lambda - shot.lambda).abs() < 1e-5) {
                    found.push(shot);
                }
            }
            Err(SpectraError::NoConvergence { best: b, .. }) => best = best.min(b),
            Err(e) => return Err(e),
        }
    }
    if found.is_empty() {
        return Err(SpectraError::NoConvergence {
            starts: opts.starts,
            best,
        });
    }
    found.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(found)
}

/// `γ` in frame coordinates from its logarithm in structural coordinates.
pub fn frame_vector(frame: &AdaptedFrame<f64>, log: &[Rational]) -> Vec<f64> {
    frame.from_structural_exact(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{load_example, ExampleId};
    use crate::scalar::rat;

    fn q(xs: &[i64]) -> Vector<Rational> {
        xs.iter().map(|&x| rat(x, 1)).collect()
    }

    #[test]
    fn symbolic_rendering() {
        let l = Length::exact(PiPoly::new(rat(0, 1), rat(28, 1), rat(-4, 1)));
        assert_eq!(l.symbolic().unwrap(), "sqrt(4*pi*(7-pi))");
        assert!((l.value - (4.0 * PI * (7.0 - PI)).sqrt()).abs() < 1e-12);
        assert_eq!(Length::from_square(rat(9, 4)).symbolic().unwrap(), "3/2");
        assert_eq!(Length::from_square(rat(2, 1)).symbolic().unwrap(), "sqrt(2)");
    }

    #[test]
    fn heisenberg_seven() {
        let h = Algebra::from_brackets(vec!["X".into(), "Y".into(), "Z".into()], &[(0, 1, 2, rat(1, 1))]);
        let g = linalg::identity(3);
        let ls = heisenberg_central_lengths(&h, &g, &q(&[0, 0, 7])).unwrap();
        assert_eq!(ls.len(), 2);
        assert!((ls[0].value - (4.0 * PI * (7.0 - PI)).sqrt()).abs() < 1e-12);
        assert_eq!(ls[1].symbolic().unwrap(), "7");
        let one = heisenberg_central_lengths(&h, &g, &q(&[0, 0, 1])).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn non_factor_is_rejected() {
        let ex = load_example(ExampleId::III).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        let (a, g) = model.target().unwrap();
        assert!(matches!(
            HeisenbergFactor::detect(a, g),
            Err(SpectraError::NotAFactorGroup(_))
        ));
    }

    #[test]
    fn example_three_quotient_closed_forms() {
        let ex = load_example(ExampleId::III).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        let (a, g) = model.target().unwrap();
        // Quotient basis X1 X2 Y1 Y2 Z1 Z2.
        let y2 = two_step_lengths(a, g, &q(&[0, 0, 0, 1, 0, 0]));
        assert!(y2.complete);
        assert_eq!(y2.known[0].symbolic().unwrap(), "1");
        let z1 = two_step_lengths(a, g, &q(&[0, 0, 0, 0, 1, 0]));
        assert!(!z1.complete);
        assert_eq!(z1.known[0].symbolic().unwrap(), "1");
        let d = two_step_data(a, g, &q(&[0, 0, 1, 0, 0, 1]));
        assert!(d.z_double_star_norm_sq <= d.z_star_norm_sq);
    }

    #[test]
    fn flat_torus() {
        let sc = Algebra::abelian(2);
        let group = Group::new(sc).unwrap();
        let lat = Lattice::new(
            group,
            crate::group::LatticeSpec {
                name: "Z2".into(),
                generators: vec![q(&[1, 0]), q(&[0, 1])],
            },
        )
        .unwrap();
        let rep = length_spectrum(&lat, &MetricSpec::standard(2), 2, 2.0).unwrap();
        let ms: Vec<(String, u128)> = rep
            .entries
            .iter()
            .map(|e| (e.length_symbolic.clone().unwrap(), e.m_total))
            .collect();
        assert_eq!(
            ms,
            vec![("1".into(), 4), ("sqrt(2)".into(), 4), ("2".into(), 4)]
        );
    }

    #[test]
    fn central_reduction_not_applicable() {
        let ex = load_example(ExampleId::III).unwrap();
        let r = reduce_to_quotient(&ex.lattices[0], &[0, 0, 0, 0, 0, 0, 3]).unwrap();
        assert!(!r.applicable);
        let r = reduce_to_quotient(&ex.lattices[0], &[0, 0, 0, 1, 2, 0, 3]).unwrap();
        assert!(r.applicable);
        assert_eq!(r.quotient_word, vec![0, 0, 0, 1, 2, 0]);
    }

    #[test]
    fn identity_marks() {
        let ex = load_example(ExampleId::III).unwrap();
        let spec = MarkingSpec::new(
            AutomorphismSpec::identity("id", 7),
            ex.lattices[0].clone(),
            ex.lattices[0].clone(),
        )
        .unwrap();
        let c = compare_marked(&spec, &ex.metric, 1, 2.0, LENGTH_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::Same);
        let r = one_dim_center_marking(&spec, &ex.metric, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Same);
    }

    #[test]
    fn rescaled_center_fails_hypothesis() {
        let ex = load_example(ExampleId::IV).unwrap();
        let mut spec = ex.lattices[1].spec.clone();
        spec.generators[4] = q(&[0, 0, 0, 0, 2]);
        let l2 = Lattice::new(ex.group.clone(), spec).unwrap();
        assert_eq!(
            central_multiplicity_check(&ex.lattices[0], &l2, &ex.metric, 3).unwrap_err(),
            SpectraError::HypothesisFails
        );
        let ok = central_multiplicity_check(&ex.lattices[0], &ex.lattices[1], &ex.metric, 3).unwrap();
        assert!(ok.equal);
    }
}
