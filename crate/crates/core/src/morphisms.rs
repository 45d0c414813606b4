//! Automorphisms: bracket preservation, isometry, inner and almost-inner
//! membership, the isometry times almost-inner factorization, and scans over
//! parameterized families.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::StructureConstants;
use crate::group::{Lattice, NilpotentGroup};
use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::scalar::{format_rational, parse_rational, rational_to_scalar, ExactScalar, Scalar};
use crate::worker_count;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphismError {
    #[error("matrix is singular")]
    Singular,
    #[error("matrix has shape {rows}x{cols}, expected {dim}x{dim}")]
    Shape { rows: usize, cols: usize, dim: usize },
    #[error("malformed automorphism input: {0}")]
    Parse(String),
}

/// A linear map on the algebra; `matrix[i][j]` is the coefficient of `b_i` in `Φ(b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutomorphismSpec {
    pub name: String,
    pub matrix: Matrix<BigRational>,
}

impl AutomorphismSpec {
    /// From the images `Φ(b_j)` of the basis vectors.
    pub fn from_images(name: &str, images: &[Vector<BigRational>]) -> Self {
        Self {
            name: name.to_string(),
            matrix: linalg::transpose(&images.to_vec()),
        }
    }

    pub fn identity(name: &str, dim: usize) -> Self {
        Self {
            name: name.to_string(),
            matrix: linalg::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, v: &[BigRational]) -> Vector<BigRational> {
        linalg::mat_vec(&self.matrix, v)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AutomorphismSpec) -> AutomorphismSpec {
        AutomorphismSpec {
            name: format!("{}*{}", self.name, other.name),
            matrix: linalg::mat_mul(&self.matrix, &other.matrix),
        }
    }

    pub fn inverse(&self) -> Result<AutomorphismSpec, MorphismError> {
        Ok(AutomorphismSpec {
            name: format!("{}^-1", self.name),
            matrix: linalg::inverse(&self.matrix).ok_or(MorphismError::Singular)?,
        })
    }

    pub fn matrix_as<T: Scalar>(&self) -> Matrix<T> {
        self.matrix
            .iter()
            .map(|r| r.iter().map(rational_to_scalar).collect())
            .collect()
    }

    /// The induced map on `g / ideal`, when the ideal is invariant.
    pub fn induced_on_quotient(
        &self,
        q: &crate::algebra::Quotient<BigRational>,
    ) -> Option<AutomorphismSpec> {
        let images: Vec<Vector<BigRational>> = q
            .section
            .iter()
            .map(|s| q.project(&self.apply(s)))
            .collect();
        for b in &q.ideal.basis {
            if !q.ideal.contains(&self.apply(b)) {
                return None;
            }
        }
        Some(AutomorphismSpec::from_images(&format!("{}bar", self.name), &images))
    }
}

/// JSON form of an automorphism, optionally with a parameter template.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AutomorphismJson {
    pub name: String,
    #[serde(default)]
    pub matrix: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateJson>,
}

impl AutomorphismJson {
    pub fn from_spec(spec: &AutomorphismSpec) -> Self {
        Self {
            name: spec.name.clone(),
            matrix: spec
                .matrix
                .iter()
                .map(|r| r.iter().map(format_rational).collect())
                .collect(),
            template: None,
        }
    }

    pub fn to_spec(&self, dim: usize) -> Result<AutomorphismSpec, MorphismError> {
        let rows = self.matrix.len();
        if rows != dim || self.matrix.iter().any(|r| r.len() != dim) {
            return Err(MorphismError::Shape {
                rows,
                cols: self.matrix.first().map_or(0, Vec::len),
                dim,
            });
        }
        let matrix = self
            .matrix
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| {
                        parse_rational(s).ok_or_else(|| MorphismError::Parse(format!("bad rational {s}")))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        Ok(AutomorphismSpec {
            name: self.name.clone(),
            matrix,
        })
    }
}

/// Outcome of [`is_automorphism`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutomorphismCheck {
    pub holds: bool,
    /// First basis pair `(i, j)` with `Φ[b_i,b_j] != [Φb_i, Φb_j]`.
    pub violation: Option<(usize, usize)>,
}

/// Exact bracket preservation over all basis pairs.
pub fn is_automorphism<T: Scalar>(
    m: &Matrix<T>,
    sc: &StructureConstants<T>,
) -> Result<AutomorphismCheck, MorphismError> {
    let n = sc.dim;
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(MorphismError::Shape {
            rows: m.len(),
            cols: m.first().map_or(0, Vec::len),
            dim: n,
        });
    }
    if linalg::determinant(m).is_negligible() {
        return Err(MorphismError::Singular);
    }
    let cols: Matrix<T> = linalg::transpose(m);
    for i in 0..n {
        for j in i + 1..n {
            let lhs = linalg::mat_vec(m, &sc.bracket(&sc.basis_vector(i), &sc.basis_vector(j)));
            let rhs = sc.bracket(&cols[i], &cols[j]);
            if !linalg::is_zero_vec(&linalg::sub(&lhs, &rhs)) {
                return Ok(AutomorphismCheck {
                    holds: false,
                    violation: Some((i, j)),
                });
            }
        }
    }
    Ok(AutomorphismCheck {
        holds: true,
        violation: None,
    })
}

/// Exact check of `mᵀ G m = G`.
pub fn is_isometric_automorphism<T: Scalar>(m: &Matrix<T>, gram: &Matrix<T>) -> bool {
    let lhs = linalg::mat_mul(&linalg::transpose(m), &linalg::mat_mul(gram, m));
    lhs.iter()
        .zip(gram)
        .all(|(a, b)| linalg::is_zero_vec(&linalg::sub(a, b)))
}

/// Signs `s_i` with `m e_i = s_i e_i` for every basis row `e_i`, if they exist.
pub fn signed_basis_action<T: Scalar>(m: &Matrix<T>, basis: &Matrix<T>) -> Option<Vec<i8>> {
    basis
        .iter()
        .map(|e| {
            let img = linalg::mat_vec(m, e);
            if linalg::is_zero_vec(&linalg::sub(&img, e)) {
                Some(1)
            } else if linalg::is_zero_vec(&linalg::add(&img, e)) {
                Some(-1)
            } else {
                None
            }
        })
        .collect()
}

/// Solves `e^{ad a} x_k = y_k` for one `a` common to all pairs.
///
/// For step at most 3 the system is linear modulo the last derived term, and
/// linear again in the remaining freedom once a particular solution is fixed.
pub fn solve_conjugator<T: Scalar>(
    group: &NilpotentGroup<T>,
    xs: &[Vector<T>],
    ys: &[Vector<T>],
) -> Option<Vector<T>> {
    let sc = &group.algebra;
    let n = sc.dim;
    let ds: Vec<Vector<T>> = xs.iter().zip(ys).map(|(x, y)| linalg::sub(y, x)).collect();
    if group.step <= 1 {
        return ds.iter().all(|d| linalg::is_zero_vec(d)).then(|| linalg::zeros(n));
    }
    let half = T::from_ratio(1, 2);
    // [a, x] = -ad(x) a
    let neg_ad = |x: &[T]| -> Matrix<T> {
        sc.ad_matrix(x)
            .into_iter()
            .map(|r| linalg::neg(&r))
            .collect()
    };
    let series = sc.derived_series().ok()?;
    let last = if group.step == 3 {
        series[1].clone()
    } else {
        Subspace::zero(n)
    };
    let reduce_rows = |m: &Matrix<T>| -> Matrix<T> {
        // Rows of the equations modulo `last`: map each column through reduce.
        let cols = linalg::transpose(m);
        let reduced: Matrix<T> = cols.iter().map(|c| last.reduce(c)).collect();
        linalg::transpose(&reduced)
    };
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (x, d) in xs.iter().zip(&ds) {
        let m = reduce_rows(&neg_ad(x));
        rows.extend(m);
        rhs.extend(last.reduce(d));
    }
    let a0 = linalg::solve(&rows, &rhs, n)?;
    if group.step == 2 {
        return Some(a0);
    }
    let kernel = linalg::null_space(&rows, n);
    let mut rows2: Matrix<T> = Vec::new();
    let mut rhs2 = Vec::new();
    for (x, d) in xs.iter().zip(&ds) {
        let a0x = sc.bracket(&a0, x);
        let shifted = linalg::axpy(x, &half, &a0x);
        let target = linalg::sub(
            &linalg::sub(d, &a0x),
            &linalg::scale(&half, &sc.bracket(&a0, &a0x)),
        );
        let cols: Matrix<T> = kernel.iter().map(|k| sc.bracket(k, &shifted)).collect();
        let block = if cols.is_empty() {
            vec![Vec::new(); n]
        } else {
            linalg::transpose(&cols)
        };
        rows2.extend(block);
        rhs2.extend(target);
    }
    if kernel.is_empty() {
        return linalg::is_zero_vec(&rhs2).then_some(a0);
    }
    let t = linalg::solve(&rows2, &rhs2, kernel.len())?;
    let mut a = a0;
    for (ti, k) in t.iter().zip(&kernel) {
        a = linalg::axpy(&a, ti, k);
    }
    Some(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlmostInnerKind {
    Inner,
    AlmostInner,
    GammaAlmostInner,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlmostInnerVerdict {
    pub kind: AlmostInnerKind,
    /// Conjugator for `Φ` as a whole when it is inner.
    pub inner_witness: Option<Vec<String>>,
    /// Number of test elements, each with a verified conjugator.
    pub witnessed: usize,
    /// A few `(x, a_x)` pairs, as rational strings.
    pub sample_witnesses: Vec<(Vec<String>, Vec<String>)>,
    /// Test element with no conjugator, when the verdict is negative.
    pub failure: Option<Vec<String>>,
    /// For lattice tests, the exponent bound of the window.
    pub window: Option<i64>,
}

fn to_strings<T: ExactScalar>(v: &[T]) -> Vec<String> {
    v.iter().map(|x| format_rational(&x.to_rational())).collect()
}

fn check_witness<T: Scalar>(group: &NilpotentGroup<T>, a: &[T], x: &[T], y: &[T]) -> bool {
    linalg::is_zero_vec(&linalg::sub(&group.adjoint(a, x), y))
}

const SAMPLE_WITNESSES: usize = 8;

/// Whether `Φ` is inner, or agrees with an inner automorphism on each sampled element.
pub fn is_almost_inner<T: ExactScalar>(
    m: &Matrix<T>,
    group: &NilpotentGroup<T>,
    samples: usize,
    seed: u64,
) -> AlmostInnerVerdict {
    let n = group.dim();
    let basis: Vec<Vector<T>> = (0..n).map(|i| linalg::unit(n, i)).collect();
    let images: Vec<Vector<T>> = basis.iter().map(|b| linalg::mat_vec(m, b)).collect();
    if let Some(a) = solve_conjugator(group, &basis, &images) {
        return AlmostInnerVerdict {
            kind: AlmostInnerKind::Inner,
            inner_witness: Some(to_strings(&a)),
            witnessed: n,
            sample_witnesses: vec![],
            failure: None,
            window: None,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = basis;
    for i in 0..n {
        for j in i + 1..n {
            tests.push(linalg::add(&tests[i].clone(), &tests[j].clone()));
        }
    }
    for _ in 0..samples {
        tests.push(
            (0..n)
                .map(|_| T::from_ratio(rng.gen_range(-12..=12), rng.gen_range(1..=4)))
                .collect(),
        );
    }
    test_elements(m, group, tests.into_iter(), AlmostInnerKind::AlmostInner, None)
}

fn test_elements<T: ExactScalar>(
    m: &Matrix<T>,
    group: &NilpotentGroup<T>,
    tests: impl Iterator<Item = Vector<T>>,
    success: AlmostInnerKind,
    window: Option<i64>,
) -> AlmostInnerVerdict {
    let mut witnessed = 0;
    let mut sample = Vec::new();
    for x in tests {
        let y = linalg::mat_vec(m, &x);
        match solve_conjugator(group, std::slice::from_ref(&x), std::slice::from_ref(&y)) {
            Some(a) if check_witness(group, &a, &x, &y) => {
                witnessed += 1;
                if sample.len() < SAMPLE_WITNESSES && !linalg::is_zero_vec(&x) {
                    sample.push((to_strings(&x), to_strings(&a)));
                }
            }
            _ => {
                return AlmostInnerVerdict {
                    kind: AlmostInnerKind::No,
                    inner_witness: None,
                    witnessed,
                    sample_witnesses: sample,
                    failure: Some(to_strings(&x)),
                    window,
                }
            }
        }
    }
    AlmostInnerVerdict {
        kind: success,
        inner_witness: None,
        witnessed,
        sample_witnesses: sample,
        failure: None,
        window,
    }
}

/// Every word `g_1^{n_1}...g_r^{n_r}` with `|n_i| <= window`, split into `parts` slices.
pub fn window_words(dim: usize, window: i64, part: usize, parts: usize) -> impl Iterator<Item = Vec<i64>> {
    let side = (2 * window + 1) as u64;
    let total = side.pow(dim as u32);
    let chunk = total.div_ceil(parts as u64);
    let start = chunk * part as u64;
    let end = (start + chunk).min(total);
    (start..end).map(move |mut idx| {
        let mut w = vec![0i64; dim];
        for e in w.iter_mut().rev() {
            *e = (idx % side) as i64 - window;
            idx /= side;
        }
        w
    })
}

/// Γ-almost-inner test over all lattice words with exponents in `[-window, window]`.
///
/// Work is split across `NILSPEC_THREADS` workers; the verdict does not depend
/// on the split.
pub fn is_gamma_almost_inner<T: ExactScalar>(
    m: &Matrix<T>,
    lattice: &Lattice<T>,
    window: i64,
) -> AlmostInnerVerdict {
    let group = &lattice.group;
    let n = group.dim();
    let basis: Vec<Vector<T>> = (0..n).map(|i| linalg::unit(n, i)).collect();
    let images: Vec<Vector<T>> = basis.iter().map(|b| linalg::mat_vec(m, b)).collect();
    if let Some(a) = solve_conjugator(group, &basis, &images) {
        return AlmostInnerVerdict {
            kind: AlmostInnerKind::Inner,
            inner_witness: Some(to_strings(&a)),
            witnessed: n,
            sample_witnesses: vec![],
            failure: None,
            window: Some(window),
        };
    }
    let parts = worker_count();
    let results: Vec<AlmostInnerVerdict> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..parts)
            .map(|p| {
                s.spawn(move || {
                    let elems = window_words(n, window, p, parts).map(|w| lattice.word_to_element(&w).log);
                    test_elements(m, group, elems, AlmostInnerKind::GammaAlmostInner, Some(window))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = AlmostInnerVerdict {
        kind: AlmostInnerKind::GammaAlmostInner,
        inner_witness: None,
        witnessed: 0,
        sample_witnesses: vec![],
        failure: None,
        window: Some(window),
    };
    for r in results {
        out.witnessed += r.witnessed;
        if out.sample_witnesses.len() < SAMPLE_WITNESSES {
            out.sample_witnesses.extend(r.sample_witnesses);
            out.sample_witnesses.truncate(SAMPLE_WITNESSES);
        }
        if r.kind == AlmostInnerKind::No && out.failure.is_none() {
            out.kind = AlmostInnerKind::No;
            out.failure = r.failure;
        }
    }
    out
}

/// `Φ = Φ1 ∘ Φ2` with `Φ1` an isometric automorphism and `Φ2` Γ-almost-inner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factorization {
    pub isometry: Vec<Vec<String>>,
    pub almost_inner: Vec<Vec<String>>,
    pub almost_inner_verdict: AlmostInnerVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FactorizationOutcome {
    Found(Factorization),
    NoFactorization { reason: String },
}

impl FactorizationOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, FactorizationOutcome::Found(_))
    }
}

/// Matrix of the orthogonal projection onto the complement of the center.
pub fn complement_projection<T: Scalar>(sc: &StructureConstants<T>, gram: &Matrix<T>) -> Matrix<T> {
    let n = sc.dim;
    let center = sc.center();
    // Orthogonal complement: {v : z^T G v = 0 for z in center}.
    let constraints: Matrix<T> = center.basis.iter().map(|z| linalg::mat_vec(&linalg::transpose(gram), z)).collect();
    let comp = if constraints.is_empty() {
        linalg::identity(n)
    } else {
        linalg::null_space(&constraints, n)
    };
    // Columns of [comp | center] form a basis; P keeps the comp coordinates.
    let mut basis_cols = comp.clone();
    basis_cols.extend(center.basis.iter().cloned());
    let b = linalg::transpose(&basis_cols);
    let binv = linalg::inverse(&b).expect("complement and center span the algebra");
    let mut keep = linalg::identity::<T>(n);
    for (i, row) in keep.iter_mut().enumerate() {
        if i >= comp.len() {
            *row = linalg::zeros(n);
        }
    }
    linalg::mat_mul(&b, &linalg::mat_mul(&keep, &binv))
}

/// Quick necessary conditions for a two-step factorization, without the lattice scan.
///
/// Returns the isometric factor `Φ1` on success.
pub fn isometric_factor<T: Scalar>(
    m: &Matrix<T>,
    sc: &StructureConstants<T>,
    gram: &Matrix<T>,
    projection: &Matrix<T>,
    derived: &Subspace<T>,
    center: &Subspace<T>,
) -> Result<Matrix<T>, String> {
    let n = sc.dim;
    // On v = z^⊥: Φ1 = P_v Φ, and the discarded part must lie in [n, n]. On z: Φ1 = Φ.
    let mut cols: Matrix<T> = Vec::with_capacity(n);
    for j in 0..n {
        let e = linalg::unit(n, j);
        let img = linalg::mat_vec(m, &e);
        let e_v = linalg::mat_vec(projection, &e);
        let e_z = linalg::sub(&e, &e_v);
        let img_v = linalg::mat_vec(m, &e_v);
        let kept = linalg::mat_vec(projection, &img_v);
        let dropped = linalg::sub(&img_v, &kept);
        if !derived.contains(&dropped) {
            return Err(format!(
                "image of basis vector {j} has a central component outside the derived algebra"
            ));
        }
        let img_z = linalg::mat_vec(m, &e_z);
        if !center.contains(&img_z) {
            return Err("center is not preserved".into());
        }
        let _ = img;
        cols.push(linalg::add(&kept, &img_z));
    }
    let phi1 = linalg::transpose(&cols);
    if !is_automorphism(&phi1, sc).map(|c| c.holds).unwrap_or(false) {
        return Err("isometric candidate is not an automorphism".into());
    }
    if !is_isometric_automorphism(&phi1, gram) {
        return Err("isometric candidate is not an isometry".into());
    }
    Ok(phi1)
}

/// Searches for `Φ = Φ1 ∘ Φ2` on a two-step group, `Φ1` an isometric
/// automorphism and `Φ2` almost-inner on the lattice words in `window`.
///
/// The factorization is unique when it exists: `Φ1` must agree with `Φ` on the
/// center and with the projection of `Φ` onto the orthogonal complement of the
/// center elsewhere, because `Φ2` moves vectors only within `[n, n]`.
pub fn eberlein_factorization_check<T: ExactScalar>(
    m: &Matrix<T>,
    lattice: &Lattice<T>,
    gram: &Matrix<T>,
    window: i64,
) -> FactorizationOutcome {
    let sc = &lattice.group.algebra;
    if lattice.group.step > 2 {
        return FactorizationOutcome::NoFactorization {
            reason: "factorization applies to step at most two".into(),
        };
    }
    let projection = complement_projection(sc, gram);
    let derived = sc
        .derived_series()
        .map(|s| s[0].clone())
        .unwrap_or_else(|_| Subspace::zero(sc.dim));
    let center = sc.center();
    let phi1 = match isometric_factor(m, sc, gram, &projection, &derived, &center) {
        Ok(p) => p,
        Err(reason) => return FactorizationOutcome::NoFactorization { reason },
    };
    let phi1_inv = linalg::inverse(&phi1).expect("automorphism is invertible");
    let phi2 = linalg::mat_mul(&phi1_inv, m);
    let verdict = is_gamma_almost_inner(&phi2, lattice, window);
    if verdict.kind == AlmostInnerKind::No {
        return FactorizationOutcome::NoFactorization {
            reason: "remaining factor is not almost-inner on the lattice window".into(),
        };
    }
    let strings = |mm: &Matrix<T>| mm.iter().map(|r| to_strings(r)).collect();
    FactorizationOutcome::Found(Factorization {
        isometry: strings(&phi1),
        almost_inner: strings(&phi2),
        almost_inner_verdict: verdict,
    })
}

/// `c + sum_p coef_p * p` over named integer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: BigRational,
    pub terms: BTreeMap<String, BigRational>,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self {
            constant: BigRational::zero(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: BigRational) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn term(name: &str, coef: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(name.to_string(), coef);
        Self {
            constant: BigRational::zero(),
            terms,
        }
    }

    pub fn plus(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.constant = out.constant + other.constant.clone();
        for (k, v) in &other.terms {
            let e = out.terms.entry(k.clone()).or_insert_with(BigRational::zero);
            *e = e.clone() + v.clone();
        }
        out
    }

    pub fn eval(&self, params: &BTreeMap<String, i64>) -> BigRational {
        self.terms.iter().fold(self.constant.clone(), |acc, (k, v)| {
            acc + v.clone() * BigRational::from_integer(params.get(k).copied().unwrap_or(0).into())
        })
    }

    /// Parses sums like `"1/2*h3 - eY + 1/4"`.
    pub fn parse(s: &str) -> Result<Self, MorphismError> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(MorphismError::Parse("empty expression".into()));
        }
        let mut out = AffineExpr::zero();
        let mut pieces = Vec::new();
        let mut cur = String::new();
        for (i, ch) in compact.chars().enumerate() {
            if (ch == '+' || ch == '-') && i > 0 && !cur.ends_with('*') && !cur.ends_with('/') {
                pieces.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
        }
        pieces.push(cur);
        for piece in pieces {
            let (sign, body) = match piece.strip_prefix('-') {
                Some(b) => (-BigRational::one(), b),
                None => (BigRational::one(), piece.trim_start_matches('+')),
            };
            let bad = || MorphismError::Parse(format!("cannot parse term {piece:?} in {s:?}"));
            let (coef, name) = match body.rsplit_once('*') {
                Some((c, n)) => (parse_rational(c).ok_or_else(bad)?, Some(n)),
                None => match parse_rational(body) {
                    Some(c) => (c, None),
                    None => (BigRational::one(), Some(body)),
                },
            };
            let coef = sign * coef;
            match name {
                Some(n) if n.chars().all(|c| c.is_alphanumeric() || c == '_') && !n.is_empty() => {
                    out = out.plus(&AffineExpr::term(n, coef));
                }
                Some(_) => return Err(bad()),
                None => out.constant = out.constant + coef,
            }
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        for (k, v) in &self.terms {
            if !v.is_zero() {
                parts.push(format!("{}*{}", format_rational(v), k));
            }
        }
        if !self.constant.is_zero() || parts.is_empty() {
            parts.push(format_rational(&self.constant));
        }
        parts.join(" + ")
    }
}

/// An integer parameter ranging over `[lo, hi]`, optionally skipping zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub range: (i64, i64),
    #[serde(default)]
    pub exclude_zero: bool,
}

impl ParamSpec {
    pub fn range(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_string(),
            range: (lo, hi),
            exclude_zero: false,
        }
    }

    pub fn signs(name: &str) -> Self {
        Self {
            name: name.to_string(),
            range: (-1, 1),
            exclude_zero: true,
        }
    }

    pub fn values(&self) -> Vec<i64> {
        (self.range.0..=self.range.1)
            .filter(|&v| !(self.exclude_zero && v == 0))
            .collect()
    }
}

/// A linear map whose entries are affine in integer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTemplate {
    pub name: String,
    pub params: Vec<ParamSpec>,
    /// `columns[j][i]`: coefficient of `b_i` in `Φ(b_j)`.
    pub columns: Vec<Vec<AffineExpr>>,
    /// Each group must contain a parameter that is nonzero.
    pub nonzero_any: Vec<Vec<String>>,
}

impl ParamTemplate {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn total(&self) -> u64 {
        self.params.iter().map(|p| p.values().len() as u64).product()
    }

    /// The `idx`-th parameter assignment in lexicographic order.
    pub fn assignment(&self, mut idx: u64) -> BTreeMap<String, i64> {
        let mut out = BTreeMap::new();
        for p in self.params.iter().rev() {
            let vals = p.values();
            let k = vals.len() as u64;
            out.insert(p.name.clone(), vals[(idx % k) as usize]);
            idx /= k;
        }
        out
    }

    pub fn satisfies_constraints(&self, params: &BTreeMap<String, i64>) -> bool {
        self.nonzero_any
            .iter()
            .all(|g| g.iter().any(|n| params.get(n).copied().unwrap_or(0) != 0))
    }

    pub fn instantiate<T: Scalar>(&self, params: &BTreeMap<String, i64>) -> Matrix<T> {
        let n = self.dim();
        let mut m = vec![vec![T::zero(); n]; n];
        for (j, col) in self.columns.iter().enumerate() {
            for (i, e) in col.iter().enumerate() {
                m[i][j] = rational_to_scalar(&e.eval(params));
            }
        }
        m
    }

    pub fn to_json(&self) -> TemplateJson {
        let n = self.dim();
        TemplateJson {
            params: self.params.clone(),
            matrix: (0..n)
                .map(|i| (0..n).map(|j| self.columns[j][i].render()).collect())
                .collect(),
            nonzero: self.nonzero_any.clone(),
        }
    }
}

/// JSON form of a template; `matrix[i][j]` follows the automorphism convention.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TemplateJson {
    pub params: Vec<ParamSpec>,
    pub matrix: Vec<Vec<String>>,
    #[serde(default)]
    pub nonzero: Vec<Vec<String>>,
}

impl TemplateJson {
    pub fn to_template(&self, name: &str) -> Result<ParamTemplate, MorphismError> {
        let n = self.matrix.len();
        let mut columns = vec![Vec::with_capacity(n); n];
        for row in &self.matrix {
            if row.len() != n {
                return Err(MorphismError::Shape {
                    rows: n,
                    cols: row.len(),
                    dim: n,
                });
            }
            for (j, e) in row.iter().enumerate() {
                columns[j].push(AffineExpr::parse(e)?);
            }
        }
        Ok(ParamTemplate {
            name: name.to_string(),
            params: self.params.clone(),
            columns,
            nonzero_any: self.nonzero.clone(),
        })
    }
}

/// A template with coefficients converted once, for tight scan loops.
struct CompiledTemplate<T> {
    names: Vec<String>,
    values: Vec<Vec<i64>>,
    /// `(row, col, constant, [(param, coef)])` for each nonzero entry.
    entries: Vec<(usize, usize, T, Vec<(usize, T)>)>,
    nonzero: Vec<Vec<usize>>,
    dim: usize,
}

impl<T: Scalar> CompiledTemplate<T> {
    fn new(t: &ParamTemplate) -> Self {
        let names: Vec<String> = t.params.iter().map(|p| p.name.clone()).collect();
        let index = |n: &str| names.iter().position(|m| m == n);
        let mut entries = Vec::new();
        for (j, col) in t.columns.iter().enumerate() {
            for (i, e) in col.iter().enumerate() {
                let terms: Vec<(usize, T)> = e
                    .terms
                    .iter()
                    .filter(|(_, c)| !c.is_zero())
                    .filter_map(|(n, c)| index(n).map(|k| (k, rational_to_scalar(c))))
                    .collect();
                if !terms.is_empty() || !e.constant.is_zero() {
                    entries.push((i, j, rational_to_scalar(&e.constant), terms));
                }
            }
        }
        let nonzero = t
            .nonzero_any
            .iter()
            .map(|g| g.iter().filter_map(|n| index(n)).collect())
            .collect();
        Self {
            values: t.params.iter().map(ParamSpec::values).collect(),
            names,
            entries,
            nonzero,
            dim: t.dim(),
        }
    }

    /// Same order as [`ParamTemplate::assignment`].
    fn assignment(&self, mut idx: u64) -> Vec<i64> {
        let mut out = vec![0; self.values.len()];
        for (k, vals) in self.values.iter().enumerate().rev() {
            let len = vals.len() as u64;
            out[k] = vals[(idx % len) as usize];
            idx /= len;
        }
        out
    }

    fn satisfies_constraints(&self, vals: &[i64]) -> bool {
        self.nonzero.iter().all(|g| g.iter().any(|&k| vals[k] != 0))
    }

    fn instantiate(&self, vals: &[i64]) -> Matrix<T> {
        let mut m = vec![vec![T::zero(); self.dim]; self.dim];
        for (i, j, c, terms) in &self.entries {
            let mut x = c.clone();
            for (k, coef) in terms {
                if vals[*k] != 0 {
                    x = x + coef.clone() * T::from_i64(vals[*k]).expect("small parameter");
                }
            }
            m[*i][*j] = x;
        }
        m
    }

    fn named(&self, vals: &[i64]) -> BTreeMap<String, i64> {
        self.names.iter().cloned().zip(vals.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub scanned: u64,
    pub passed_constraints: u64,
    pub automorphisms: u64,
    pub satisfying: Vec<BTreeMap<String, i64>>,
}

/// Enumerates the template's parameters, keeping assignments that satisfy the
/// side constraints, give an automorphism, and pass `predicate`.
pub fn isomorphism_family_scan<T, F>(
    template: &ParamTemplate,
    sc: &StructureConstants<T>,
    predicate: F,
) -> ScanReport
where
    T: Scalar,
    F: Fn(&BTreeMap<String, i64>, &Matrix<T>) -> bool + Sync,
{
    let total = if template.params.is_empty() { 0 } else { template.total() };
    let parts = worker_count() as u64;
    let chunk = total.div_ceil(parts.max(1));
    let compiled = CompiledTemplate::<T>::new(template);
    let compiled = &compiled;
    let partial: Vec<ScanReport> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..parts)
            .map(|p| {
                let predicate = &predicate;
                s.spawn(move || {
                    let mut r = ScanReport {
                        scanned: 0,
                        passed_constraints: 0,
                        automorphisms: 0,
                        satisfying: vec![],
                    };
                    let start = p * chunk;
                    let end = (start + chunk).min(total);
                    for idx in start..end {
                        r.scanned += 1;
                        let vals = compiled.assignment(idx);
                        if !compiled.satisfies_constraints(&vals) {
                            continue;
                        }
                        r.passed_constraints += 1;
                        let m: Matrix<T> = compiled.instantiate(&vals);
                        if !is_automorphism(&m, sc).map(|c| c.holds).unwrap_or(false) {
                            continue;
                        }
                        r.automorphisms += 1;
                        let params = compiled.named(&vals);
                        if predicate(&params, &m) {
                            r.satisfying.push(params);
                        }
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = ScanReport {
        scanned: 0,
        passed_constraints: 0,
        automorphisms: 0,
        satisfying: vec![],
    };
    for r in partial {
        out.scanned += r.scanned;
        out.passed_constraints += r.passed_constraints;
        out.automorphisms += r.automorphisms;
        out.satisfying.extend(r.satisfying);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, ExampleId};
    use crate::scalar::rat;

    #[test]
    fn example_five_phi_is_automorphism_and_flip_is_not() {
        let ex = catalog::load_example(ExampleId::V).unwrap();
        let phi = ex.automorphism("Phi").unwrap();
        assert!(is_automorphism(&phi.matrix, &ex.algebra).unwrap().holds);
        let mut bad = phi.matrix.clone();
        bad[6][6] = rat(1, 1);
        let c = is_automorphism(&bad, &ex.algebra).unwrap();
        assert!(!c.holds);
        assert!(c.violation.is_some());
        let id = linalg::identity::<BigRational>(7);
        assert!(is_automorphism(&id, &ex.algebra).unwrap().holds);
        let zero = vec![vec![rat(0, 1); 7]; 7];
        assert_eq!(is_automorphism(&zero, &ex.algebra), Err(MorphismError::Singular));
    }

    #[test]
    fn inner_automorphism_is_recognized() {
        let ex = catalog::load_example(ExampleId::II).unwrap();
        let a = vec![rat(1, 1), rat(-2, 1), rat(1, 3), rat(1, 1), rat(0, 1)];
        let n = 5;
        let images: Vec<_> = (0..n)
            .map(|j| ex.group.adjoint(&a, &linalg::unit(n, j)))
            .collect();
        let m = linalg::transpose(&images);
        let v = is_almost_inner(&m, &ex.group, 8, 1);
        assert_eq!(v.kind, AlmostInnerKind::Inner);
    }

    #[test]
    fn affine_parsing() {
        let e = AffineExpr::parse("1/2*h3 - eY + 1/4").unwrap();
        let mut p = BTreeMap::new();
        p.insert("h3".to_string(), 3);
        p.insert("eY".to_string(), -1);
        assert_eq!(e.eval(&p), rat(3, 2) + rat(1, 1) + rat(1, 4));
        assert_eq!(AffineExpr::parse(&e.render()).unwrap(), e);
        assert!(AffineExpr::parse("2*").is_err());
    }

    #[test]
    fn empty_family_scans_nothing() {
        let t = ParamTemplate {
            name: "empty".into(),
            params: vec![ParamSpec::range("h", 1, 0)],
            columns: vec![vec![AffineExpr::term("h", rat(1, 1))]],
            nonzero_any: vec![],
        };
        let sc = StructureConstants::<BigRational>::abelian(1);
        let r = isomorphism_family_scan(&t, &sc, |_, _| true);
        assert_eq!(r.scanned, 0);
        assert!(r.satisfying.is_empty());
    }
}
