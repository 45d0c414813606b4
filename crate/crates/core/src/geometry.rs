//! Left-invariant metrics, adapted orthonormal frames, the Levi-Civita
//! connection, geodesic integration and the submersion onto the quotient by
//! the last derived term.

use std::fmt::Write as _;

use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, Quotient, StructureConstants};
use crate::group::NilpotentGroup;
use crate::linalg::{self, Matrix, Subspace, Vector};
use crate::scalar::{format_rational, parse_rational, Scalar};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("gram matrix is not symmetric")]
    NotSymmetric,
    #[error("gram matrix is not positive definite (leading minor {0} is not positive)")]
    NotPositiveDefinite(usize),
    #[error("expected a {expected}x{expected} matrix")]
    Shape { expected: usize },
    #[error("orthonormal basis matrix is singular")]
    SingularBasis,
    #[error("frame has step {found}, this operation needs step {expected}")]
    StepMismatch { expected: usize, found: usize },
    #[error("step {0} is not supported; at most 3")]
    UnsupportedStep(usize),
    #[error("speed drift {drift:e} exceeds tolerance {tol:e} at the smallest step")]
    ToleranceNotMet { drift: f64, tol: f64 },
    #[error("metric input needs exactly one of `gram` or `orthonormal_basis`")]
    MetricInput,
    #[error("malformed rational {0:?}")]
    Parse(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// An inner product on the algebra, exact, in the structural basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub gram: Matrix<Rational>,
    /// Rows orthonormal for `gram`, when the metric was given that way.
    pub orthonormal_basis: Option<Matrix<Rational>>,
}

impl MetricSpec {
    /// The structural basis is orthonormal.
    pub fn standard(n: usize) -> Self {
        Self {
            gram: linalg::identity(n),
            orthonormal_basis: None,
        }
    }

    pub fn from_gram(gram: Matrix<Rational>) -> Result<Self, GeometryError> {
        let n = gram.len();
        if gram.iter().any(|r| r.len() != n) {
            return Err(GeometryError::Shape { expected: n });
        }
        for i in 0..n {
            for j in 0..i {
                if gram[i][j] != gram[j][i] {
                    return Err(GeometryError::NotSymmetric);
                }
            }
        }
        for k in 1..=n {
            let minor: Matrix<Rational> = gram[..k].iter().map(|r| r[..k].to_vec()).collect();
            if linalg::determinant(&minor) <= Rational::zero() {
                return Err(GeometryError::NotPositiveDefinite(k));
            }
        }
        Ok(Self {
            gram,
            orthonormal_basis: None,
        })
    }

    /// Metric making the rows of `basis` orthonormal: `gram = (Sᵀ S)⁻¹`.
    pub fn from_orthonormal_basis(basis: Matrix<Rational>) -> Result<Self, GeometryError> {
        let n = basis.len();
        if basis.iter().any(|r| r.len() != n) {
            return Err(GeometryError::Shape { expected: n });
        }
        let sts = linalg::mat_mul(&linalg::transpose(&basis), &basis);
        let gram = linalg::inverse(&sts).ok_or(GeometryError::SingularBasis)?;
        let mut m = Self::from_gram(gram)?;
        m.orthonormal_basis = Some(basis);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.gram.len()
    }

    pub fn inner(&self, u: &[Rational], v: &[Rational]) -> Rational {
        linalg::dot(u, &linalg::mat_vec(&self.gram, v))
    }

    /// Metric on `g / ideal` making the projection an isometry on the orthogonal
    /// complement of the ideal: the quotient cometric is `π G⁻¹ πᵀ`.
    pub fn quotient_metric(&self, q: &Quotient<Rational>) -> MetricSpec {
        let ginv = linalg::inverse(&self.gram).expect("positive definite");
        let co = linalg::mat_mul(&q.projection, &linalg::mat_mul(&ginv, &linalg::transpose(&q.projection)));
        let orthonormal_basis = self.orthonormal_basis.as_ref().and_then(|basis| {
            // Keep basis rows orthogonal to the ideal, projected.
            let kept: Matrix<Rational> = basis
                .iter()
                .filter(|b| q.ideal.basis.iter().all(|z| self.inner(b, z).is_zero()))
                .map(|b| q.project(b))
                .collect();
            (kept.len() == q.algebra.dim).then_some(kept)
        });
        MetricSpec {
            gram: linalg::inverse(&co).expect("projection has full rank"),
            orthonormal_basis,
        }
    }
}

/// JSON form of a metric: exactly one of `gram` or `orthonormal_basis`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthonormal_basis: Option<Vec<Vec<String>>>,
}

fn strings(m: &Matrix<Rational>) -> Vec<Vec<String>> {
    m.iter().map(|r| r.iter().map(format_rational).collect()).collect()
}

fn parse_matrix(m: &[Vec<String>]) -> Result<Matrix<Rational>, GeometryError> {
    m.iter()
        .map(|r| {
            r.iter()
                .map(|s| parse_rational(s).ok_or_else(|| GeometryError::Parse(s.clone())))
                .collect()
        })
        .collect()
}

impl MetricJson {
    pub fn from_spec(spec: &MetricSpec) -> Self {
        match &spec.orthonormal_basis {
            Some(b) => Self {
                gram: None,
                orthonormal_basis: Some(strings(b)),
            },
            None => Self {
                gram: Some(strings(&spec.gram)),
                orthonormal_basis: None,
            },
        }
    }

    pub fn to_spec(&self) -> Result<MetricSpec, GeometryError> {
        match (&self.gram, &self.orthonormal_basis) {
            (Some(g), None) => MetricSpec::from_gram(parse_matrix(g)?),
            (None, Some(b)) => MetricSpec::from_orthonormal_basis(parse_matrix(b)?),
            _ => Err(GeometryError::MetricInput),
        }
    }
}

fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("float literal")
}

fn norm<F: Scalar + Float>(v: &[F]) -> F {
    Float::sqrt(linalg::dot(v, v))
}

fn max_abs<F: Scalar + Float>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |m, x| Float::max(m, Float::abs(*x)))
}

/// Orthonormal frame adapted to `g = ν ⊕ ζ ⊕ g⁽²⁾`, with bracket constants in
/// that frame. All vectors below are in frame coordinates unless noted.
#[derive(Debug, Clone)]
pub struct AdaptedFrame<F> {
    /// Frame vectors as rows, in structural coordinates: `X_i`, then `Z_k`, then `W_t`.
    pub vectors: Matrix<F>,
    pub nu: usize,
    pub zeta: usize,
    pub top: usize,
    pub step: usize,
    /// Brackets in the frame basis.
    pub algebra: StructureConstants<F>,
    pub group: NilpotentGroup<F>,
    /// `[X_i, X_j] = Σ A[k][i][j] Z_k + Σ B[t][i][j] W_t`.
    pub a: Vec<Vec<Vec<F>>>,
    pub b: Vec<Vec<Vec<F>>>,
    /// `[X_i, Z_k] = Σ C[t][i][k] W_t`.
    pub c: Vec<Vec<Vec<F>>>,
    /// Ratio of largest to smallest pre-normalization length in the orthogonalization.
    pub condition: f64,
    to_frame: Matrix<F>,
}

impl<F: Scalar + Float> AdaptedFrame<F> {
    /// Filtration-respecting Gram-Schmidt: `g⁽²⁾` first, then the rest of
    /// `g⁽¹⁾`, then the rest of `g`. Orthogonalization is exact; only the final
    /// normalization is in floating point.
    pub fn new(sc: &StructureConstants<Rational>, metric: &MetricSpec) -> Result<Self, GeometryError> {
        let n = sc.dim;
        if metric.dim() != n {
            return Err(GeometryError::Shape { expected: n });
        }
        let series = sc.derived_series()?;
        let step = series.len();
        if step > 3 {
            return Err(GeometryError::UnsupportedStep(step));
        }
        let g1 = series[0].clone();
        let g2 = if step == 3 { series[1].clone() } else { Subspace::zero(n) };
        let mut ortho: Vec<Vector<Rational>> = Vec::new();
        let push_all = |cands: &[Vector<Rational>], ortho: &mut Vec<Vector<Rational>>| {
            for v in cands {
                let mut u = v.clone();
                for w in ortho.iter() {
                    let coef = metric.inner(&u, w) / metric.inner(w, w);
                    u = linalg::axpy(&u, &(-coef), w);
                }
                if !linalg::is_zero_vec(&u) {
                    ortho.push(u);
                }
            }
        };
        push_all(&g2.basis, &mut ortho);
        let top = ortho.len();
        push_all(&g1.basis, &mut ortho);
        let zeta = ortho.len() - top;
        let std: Vec<Vector<Rational>> = (0..n).map(|i| linalg::unit(n, i)).collect();
        push_all(&std, &mut ortho);
        let nu = n - zeta - top;
        // Reorder to ν, ζ, g⁽²⁾.
        let mut order: Vec<Vector<Rational>> = ortho[top + zeta..].to_vec();
        order.extend(ortho[top..top + zeta].iter().cloned());
        order.extend(ortho[..top].iter().cloned());
        let sq: Vec<Rational> = order.iter().map(|u| metric.inner(u, u)).collect();
        let lens: Vec<f64> = sq.iter().map(|q| q.to_f64_lossy().sqrt()).collect();
        let condition = lens.iter().cloned().fold(0.0, f64::max) / lens.iter().cloned().fold(f64::INFINITY, f64::min);
        let inv_len: Vec<F> = lens.iter().map(|&l| lit::<F>(1.0 / l)).collect();
        let vectors: Matrix<F> = order
            .iter()
            .zip(&inv_len)
            .map(|(u, s)| u.iter().map(|x| lit::<F>(x.to_f64_lossy()) * *s).collect())
            .collect();
        // Coefficient of f_c in [f_a, f_b] is <[u_a,u_b], u_c> / (|u_a||u_b||u_c|).
        let gu: Matrix<Rational> = order.iter().map(|u| linalg::mat_vec(&metric.gram, u)).collect();
        let mut table = vec![vec![vec![F::zero(); n]; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let br = sc.bracket(&order[a], &order[b]);
                if linalg::is_zero_vec(&br) {
                    continue;
                }
                for c in 0..n {
                    let num = linalg::dot(&br, &gu[c]);
                    if num.is_zero() {
                        continue;
                    }
                    let v = lit::<F>(num.to_f64_lossy()) * inv_len[a] * inv_len[b] * inv_len[c];
                    table[a][b][c] = v;
                    table[b][a][c] = -v;
                }
            }
        }
        let labels = (0..nu)
            .map(|i| format!("X{}", i + 1))
            .chain((0..zeta).map(|k| format!("Z{}", k + 1)))
            .chain((0..top).map(|t| format!("W{}", t + 1)))
            .collect();
        let algebra = StructureConstants::from_table(labels, table.clone());
        let group = NilpotentGroup {
            algebra: algebra.clone(),
            step,
        };
        let a = (0..zeta)
            .map(|k| (0..nu).map(|i| (0..nu).map(|j| table[i][j][nu + k]).collect()).collect())
            .collect();
        let b = (0..top)
            .map(|t| (0..nu).map(|i| (0..nu).map(|j| table[i][j][nu + zeta + t]).collect()).collect())
            .collect();
        let c = (0..top)
            .map(|t| {
                (0..nu)
                    .map(|i| (0..zeta).map(|k| table[i][nu + k][nu + zeta + t]).collect())
                    .collect()
            })
            .collect();
        let gram_f: Matrix<F> = metric
            .gram
            .iter()
            .map(|r| r.iter().map(|x| lit::<F>(x.to_f64_lossy())).collect())
            .collect();
        let to_frame = linalg::mat_mul(&vectors, &gram_f);
        Ok(Self {
            vectors,
            nu,
            zeta,
            top,
            step,
            algebra,
            group,
            a,
            b,
            c,
            condition,
            to_frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn bracket(&self, u: &[F], v: &[F]) -> Vector<F> {
        self.algebra.bracket(u, v)
    }

    /// Frame coordinates of a structural vector.
    pub fn from_structural(&self, v: &[F]) -> Vector<F> {
        linalg::mat_vec(&self.to_frame, v)
    }

    pub fn from_structural_exact(&self, v: &[Rational]) -> Vector<F> {
        let f: Vector<F> = v.iter().map(|x| lit::<F>(x.to_f64_lossy())).collect();
        self.from_structural(&f)
    }

    pub fn to_structural(&self, v: &[F]) -> Vector<F> {
        linalg::mat_vec(&linalg::transpose(&self.vectors), v)
    }

    /// Largest violation of the mixed Jacobi relation among `A` and `C`.
    pub fn mixed_jacobi_residual(&self) -> F {
        let mut worst = F::zero();
        for t in 0..self.top {
            for i in 0..self.nu {
                for j in 0..self.nu {
                    for l in 0..self.nu {
                        let mut s = F::zero();
                        for k in 0..self.zeta {
                            s = s + self.a[k][j][l] * self.c[t][i][k]
                                + self.a[k][i][j] * self.c[t][l][k]
                                + self.a[k][l][i] * self.c[t][j][k];
                        }
                        worst = Float::max(worst, Float::abs(s));
                    }
                }
            }
        }
        worst
    }

    /// The frame restricted to `ν ⊕ ζ`, as a frame of the quotient by `g⁽²⁾`.
    pub fn quotient_frame(&self) -> Result<AdaptedFrame<F>, GeometryError> {
        if self.step != 3 {
            return Err(GeometryError::StepMismatch {
                expected: 3,
                found: self.step,
            });
        }
        let q = self.nu + self.zeta;
        let mut table = vec![vec![vec![F::zero(); q]; q]; q];
        for (i, ti) in table.iter_mut().enumerate() {
            for (j, tij) in ti.iter_mut().enumerate() {
                for (k, x) in tij.iter_mut().enumerate() {
                    *x = self.algebra.coefficient(i, j, k).clone();
                }
            }
        }
        let algebra = StructureConstants::from_table(self.algebra.labels[..q].to_vec(), table);
        let group = NilpotentGroup {
            algebra: algebra.clone(),
            step: 2,
        };
        let vectors = linalg::identity(q);
        Ok(AdaptedFrame {
            vectors: vectors.clone(),
            nu: self.nu,
            zeta: self.zeta,
            top: 0,
            step: 2,
            algebra,
            group,
            a: self.a.clone(),
            b: vec![],
            c: vec![],
            condition: 1.0,
            to_frame: vectors,
        })
    }
}

/// `∇_U V` for left-invariant fields, from the Koszul formula in an orthonormal frame.
pub fn koszul_connection<F: Scalar + Float>(frame: &AdaptedFrame<F>, u: &[F], v: &[F]) -> Vector<F> {
    let n = frame.dim();
    let half = lit::<F>(0.5);
    let uv = frame.bracket(u, v);
    (0..n)
        .map(|e| {
            let ee = linalg::unit::<F>(n, e);
            half * (linalg::dot(&frame.bracket(&ee, u), v) + linalg::dot(&frame.bracket(&ee, v), u) + uv[e])
        })
        .collect()
}

/// Largest deviation of the connection from the closed-form covariant
/// derivative table of a three-step frame.
pub fn covariant_table_residual<F: Scalar + Float>(frame: &AdaptedFrame<F>) -> F {
    let (nu, zeta, top) = (frame.nu, frame.zeta, frame.top);
    let n = frame.dim();
    let x = |i: usize| linalg::unit::<F>(n, i);
    let z = |k: usize| linalg::unit::<F>(n, nu + k);
    let w = |t: usize| linalg::unit::<F>(n, nu + zeta + t);
    let half = lit::<F>(0.5);
    let mut worst = F::zero();
    let mut check = |got: Vector<F>, want: Vector<F>| {
        worst = Float::max(worst, max_abs(&linalg::sub(&got, &want)));
    };
    for i in 0..nu {
        for j in 0..nu {
            let mut want = linalg::zeros(n);
            for k in 0..zeta {
                want[nu + k] = half * frame.a[k][i][j];
            }
            for t in 0..top {
                want[nu + zeta + t] = half * frame.b[t][i][j];
            }
            check(koszul_connection(frame, &x(i), &x(j)), want);
        }
        for k in 0..zeta {
            let mut xz = linalg::zeros(n);
            let mut zx = linalg::zeros(n);
            for j in 0..nu {
                xz[j] = half * frame.a[k][j][i];
                zx[j] = half * frame.a[k][j][i];
            }
            for t in 0..top {
                xz[nu + zeta + t] = half * frame.c[t][i][k];
                zx[nu + zeta + t] = -half * frame.c[t][i][k];
            }
            check(koszul_connection(frame, &x(i), &z(k)), xz);
            check(koszul_connection(frame, &z(k), &x(i)), zx);
        }
        for t in 0..top {
            let mut want = linalg::zeros(n);
            for j in 0..nu {
                want[j] = half * frame.b[t][j][i];
            }
            for k in 0..zeta {
                want[nu + k] = -half * frame.c[t][i][k];
            }
            check(koszul_connection(frame, &x(i), &w(t)), want.clone());
            check(koszul_connection(frame, &w(t), &x(i)), want);
        }
    }
    for k in 0..zeta {
        for h in 0..zeta {
            check(koszul_connection(frame, &z(k), &z(h)), linalg::zeros(n));
        }
        for t in 0..top {
            let mut want = linalg::zeros(n);
            for j in 0..nu {
                want[j] = half * frame.c[t][j][k];
            }
            check(koszul_connection(frame, &z(k), &w(t)), want.clone());
            check(koszul_connection(frame, &w(t), &z(k)), want);
        }
    }
    for t in 0..top {
        for r in 0..top {
            check(koszul_connection(frame, &w(t), &w(r)), linalg::zeros(n));
        }
    }
    worst
}

/// Position in exponential coordinates of the frame basis, and left-trivialized velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState<F> {
    pub position: Vector<F>,
    pub velocity: Vector<F>,
    pub s: F,
}

impl<F: Scalar + Float> GeodesicState<F> {
    pub fn at_identity(velocity: Vector<F>) -> Self {
        Self {
            position: linalg::zeros(velocity.len()),
            velocity,
            s: F::zero(),
        }
    }
}

/// Time derivative of a [`GeodesicState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate<F> {
    pub position: Vector<F>,
    pub velocity: Vector<F>,
}

/// `ṗ = v + ½[p,v] + 1/12 [p,[p,v]]` (inverse differential of exp, exact for step ≤ 3).
fn position_rate<F: Scalar + Float>(frame: &AdaptedFrame<F>, p: &[F], v: &[F]) -> Vector<F> {
    let pv = frame.bracket(p, v);
    let ppv = frame.bracket(p, &pv);
    let r = linalg::axpy(v, &lit(0.5), &pv);
    linalg::axpy(&r, &lit(1.0 / 12.0), &ppv)
}

/// Left-trivialized geodesic equation: `⟨v̇, u⟩ = ⟨v, [v, u]⟩`.
pub fn geodesic_rhs_general<F: Scalar + Float>(frame: &AdaptedFrame<F>, state: &GeodesicState<F>) -> StateRate<F> {
    let n = frame.dim();
    let v = &state.velocity;
    // ⟨v, [v, e_u]⟩ = Σ_{a,c} v_a v_c C[a][u][c]
    let mut acc = linalg::zeros::<F>(n);
    for a in 0..n {
        if v[a].is_zero() {
            continue;
        }
        for (u, out) in acc.iter_mut().enumerate() {
            let row = &frame.algebra.table()[a][u];
            *out = *out + v[a] * linalg::dot(row, v);
        }
    }
    StateRate {
        position: position_rate(frame, &state.position, v),
        velocity: acc,
    }
}

/// Conserved momentum `P = (e^{-ad p})ᵀ v`; equals the initial velocity of a geodesic from the identity.
pub fn conserved_momentum<F: Scalar + Float>(frame: &AdaptedFrame<F>, state: &GeodesicState<F>) -> Vector<F> {
    let n = frame.dim();
    let minus_p = linalg::neg(&state.position);
    (0..n)
        .map(|a| linalg::dot(&state.velocity, &frame.group.adjoint(&minus_p, &linalg::unit(n, a))))
        .collect()
}

/// Position rate from the explicit three-step system, given the momentum `bars`.
pub fn geodesic_rhs_threestep<F: Scalar + Float>(
    frame: &AdaptedFrame<F>,
    position: &[F],
    bars: &[F],
) -> Result<Vector<F>, GeometryError> {
    if frame.step != 3 {
        return Err(GeometryError::StepMismatch {
            expected: 3,
            found: frame.step,
        });
    }
    let (nj, nk, nt) = (frame.nu, frame.zeta, frame.top);
    let x = &position[..nj];
    let z = &position[nj..nj + nk];
    let xb = &bars[..nj];
    let zb = &bars[nj..nj + nk];
    let wb = &bars[nj + nk..];
    let (a, b, c) = (&frame.a, &frame.b, &frame.c);
    let half = lit::<F>(0.5);
    let sixth = lit::<F>(1.0 / 6.0);
    let mut xd = vec![F::zero(); nj];
    for j in 0..nj {
        let mut s = xb[j];
        for l in 0..nj {
            for k in 0..nk {
                s = s - x[l] * a[k][j][l] * zb[k];
            }
            for t in 0..nt {
                s = s - x[l] * b[t][j][l] * wb[t];
            }
        }
        for k in 0..nk {
            for t in 0..nt {
                s = s - z[k] * c[t][j][k] * wb[t];
            }
        }
        for i in 0..nj {
            for l in 0..nj {
                for k in 0..nk {
                    for t in 0..nt {
                        s = s - half * x[i] * x[l] * wb[t] * c[t][i][k] * a[k][j][l];
                    }
                }
            }
        }
        xd[j] = s;
    }
    let mut zd = vec![F::zero(); nk];
    for k in 0..nk {
        let mut s = zb[k];
        for i in 0..nj {
            for j in 0..nj {
                s = s + half * x[i] * xd[j] * a[k][i][j];
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                s = s + x[j] * wb[t] * c[t][j][k];
            }
        }
        zd[k] = s;
    }
    let mut wd = vec![F::zero(); nt];
    for t in 0..nt {
        let mut s = wb[t];
        for i in 0..nj {
            for j in 0..nj {
                s = s + half * x[i] * xd[j] * b[t][i][j];
            }
        }
        for j in 0..nj {
            for k in 0..nk {
                s = s - half * xd[j] * z[k] * c[t][j][k] + half * x[j] * zd[k] * c[t][j][k];
            }
        }
        for i in 0..nj {
            for j in 0..nj {
                for l in 0..nj {
                    for k in 0..nk {
                        s = s - sixth * x[i] * xd[j] * x[l] * c[t][i][k] * a[k][l][j];
                    }
                }
            }
        }
        wd[t] = s;
    }
    let mut out = xd;
    out.extend(zd);
    out.extend(wd);
    Ok(out)
}

/// Sampled geodesic with the step used and the worst speed drift.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    pub states: Vec<GeodesicState<F>>,
    pub step: F,
    pub max_speed_drift: F,
}

impl<F: Scalar + Float> Trajectory<F> {
    pub fn start(&self) -> &GeodesicState<F> {
        &self.states[0]
    }

    pub fn end(&self) -> &GeodesicState<F> {
        self.states.last().expect("nonempty trajectory")
    }

    /// CSV with columns `s`, `p1..pn`, `v1..vn`, `drift`.
    pub fn to_csv(&self) -> String {
        let n = self.start().position.len();
        let mut out = String::from("s");
        for i in 1..=n {
            let _ = write!(out, ",p{i}");
        }
        for i in 1..=n {
            let _ = write!(out, ",v{i}");
        }
        out.push_str(",drift\n");
        let speed0 = norm(&self.start().velocity);
        for st in &self.states {
            let _ = write!(out, "{}", crate::report::fmt_float(st.s.to_f64_lossy()));
            for x in st.position.iter().chain(&st.velocity) {
                let _ = write!(out, ",{}", crate::report::fmt_float(x.to_f64_lossy()));
            }
            let drift = Float::abs(norm(&st.velocity) - speed0);
            let _ = writeln!(out, ",{}", crate::report::fmt_float(drift.to_f64_lossy()));
        }
        out
    }
}

fn rk4_step<F: Scalar + Float>(frame: &AdaptedFrame<F>, st: &GeodesicState<F>, h: F) -> GeodesicState<F> {
    let half = lit::<F>(0.5);
    let shift = |s: &GeodesicState<F>, r: &StateRate<F>, c: F| GeodesicState {
        position: linalg::axpy(&s.position, &c, &r.position),
        velocity: linalg::axpy(&s.velocity, &c, &r.velocity),
        s: s.s + c,
    };
    let k1 = geodesic_rhs_general(frame, st);
    let k2 = geodesic_rhs_general(frame, &shift(st, &k1, half * h));
    let k3 = geodesic_rhs_general(frame, &shift(st, &k2, half * h));
    let k4 = geodesic_rhs_general(frame, &shift(st, &k3, h));
    let sixth = h / lit(6.0);
    let two = lit::<F>(2.0);
    let comb = |a: &[F], b: &[F], c: &[F], d: &[F]| -> Vector<F> {
        (0..a.len()).map(|i| sixth * (a[i] + two * b[i] + two * c[i] + d[i])).collect()
    };
    GeodesicState {
        position: linalg::add(&st.position, &comb(&k1.position, &k2.position, &k3.position, &k4.position)),
        velocity: linalg::add(&st.velocity, &comb(&k1.velocity, &k2.velocity, &k3.velocity, &k4.velocity)),
        s: st.s + h,
    }
}

/// Fixed-step RK4 over `steps` equal steps.
pub fn integrate_fixed<F: Scalar + Float>(
    frame: &AdaptedFrame<F>,
    initial: &GeodesicState<F>,
    s_max: F,
    steps: usize,
) -> Trajectory<F> {
    let h = s_max / lit(steps as f64);
    let speed0 = norm(&initial.velocity);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial.clone());
    let mut drift = F::zero();
    let mut cur = initial.clone();
    for k in 1..=steps {
        cur = rk4_step(frame, &cur, h);
        cur.s = initial.s + h * lit(k as f64);
        drift = Float::max(drift, Float::abs(norm(&cur.velocity) - speed0));
        states.push(cur.clone());
    }
    Trajectory {
        states,
        step: h,
        max_speed_drift: drift,
    }
}

/// Initial step length before halving.
pub const INITIAL_STEP: f64 = 0.05;
const MAX_HALVINGS: usize = 12;

/// RK4 with step halving until the speed drift is below `tol`.
pub fn integrate_geodesic<F: Scalar + Float>(
    frame: &AdaptedFrame<F>,
    initial: &GeodesicState<F>,
    s_max: F,
    tol: F,
) -> Result<Trajectory<F>, GeometryError> {
    let mut steps = ((s_max.to_f64_lossy() / INITIAL_STEP).ceil() as usize).max(8);
    let mut last = None;
    for _ in 0..=MAX_HALVINGS {
        let t = integrate_fixed(frame, initial, s_max, steps);
        if t.max_speed_drift < tol {
            return Ok(t);
        }
        last = Some(t.max_speed_drift);
        steps *= 2;
    }
    Err(GeometryError::ToleranceNotMet {
        drift: last.map_or(f64::NAN, |d| d.to_f64_lossy()),
        tol: tol.to_f64_lossy(),
    })
}

/// RK4 on the explicit three-step position system with fixed momentum.
pub fn integrate_threestep<F: Scalar + Float>(
    frame: &AdaptedFrame<F>,
    position: &[F],
    bars: &[F],
    s_max: F,
    steps: usize,
) -> Result<Vec<Vector<F>>, GeometryError> {
    let h = s_max / lit(steps as f64);
    let half = lit::<F>(0.5);
    let mut p = position.to_vec();
    let mut out = vec![p.clone()];
    for _ in 0..steps {
        let k1 = geodesic_rhs_threestep(frame, &p, bars)?;
        let k2 = geodesic_rhs_threestep(frame, &linalg::axpy(&p, &(half * h), &k1), bars)?;
        let k3 = geodesic_rhs_threestep(frame, &linalg::axpy(&p, &(half * h), &k2), bars)?;
        let k4 = geodesic_rhs_threestep(frame, &linalg::axpy(&p, &h, &k3), bars)?;
        let sixth = h / lit(6.0);
        let two = lit::<F>(2.0);
        p = (0..p.len())
            .map(|i| p[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect();
        out.push(p.clone());
    }
    Ok(out)
}

/// Trajectory pushed to the quotient by `g⁽²⁾`, in the quotient frame's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTrajectory<F> {
    pub trajectory: Trajectory<F>,
    /// Length of the vertical part of the initial velocity; nonzero means not horizontal.
    pub vertical_component: F,
}

/// Projection onto `G / G⁽²⁾`: drops the `W` coordinates of positions and velocities.
pub fn submersion_project<F: Scalar + Float>(frame: &AdaptedFrame<F>, traj: &Trajectory<F>) -> ProjectedTrajectory<F> {
    let q = frame.nu + frame.zeta;
    let states = traj
        .states
        .iter()
        .map(|s| GeodesicState {
            position: s.position[..q].to_vec(),
            velocity: s.velocity[..q].to_vec(),
            s: s.s,
        })
        .collect::<Vec<_>>();
    let speed0 = norm(&states[0].velocity);
    let drift = states
        .iter()
        .fold(F::zero(), |m, s| Float::max(m, Float::abs(norm(&s.velocity) - speed0)));
    ProjectedTrajectory {
        vertical_component: norm(&traj.start().velocity[q..]),
        trajectory: Trajectory {
            states,
            step: traj.step,
            max_speed_drift: drift,
        },
    }
}

/// Horizontal lift through `base` of the quotient geodesic with initial
/// velocity `qvel` (in quotient-frame coordinates).
pub fn horizontal_lift<F: Scalar + Float>(
    frame: &AdaptedFrame<F>,
    qvel: &[F],
    base: &[F],
    s_max: F,
    tol: F,
) -> Result<Trajectory<F>, GeometryError> {
    let mut v = qvel.to_vec();
    v.resize(frame.dim(), F::zero());
    let initial = GeodesicState {
        position: base.to_vec(),
        velocity: v,
        s: F::zero(),
    };
    integrate_geodesic(frame, &initial, s_max, tol)
}

/// `|log(x⁻¹ y)|` in the frame norm.
pub fn log_distance<F: Scalar + Float>(frame: &AdaptedFrame<F>, x: &[F], y: &[F]) -> F {
    let d = frame.group.mul_log(&linalg::neg(x), y);
    norm(&d)
}

/// Advances to exactly `s` from the nearest earlier sample.
fn state_at<F: Scalar + Float>(frame: &AdaptedFrame<F>, traj: &Trajectory<F>, s: F) -> GeodesicState<F> {
    let start = traj.start().s;
    let idx = (((s - start) / traj.step).to_f64_lossy().floor().max(0.0) as usize).min(traj.states.len() - 1);
    let base = &traj.states[idx];
    let rem = s - base.s;
    if Float::abs(rem) <= lit::<F>(1e-12) * Float::max(F::one(), Float::abs(s)) {
        return base.clone();
    }
    let pieces = ((rem / traj.step).to_f64_lossy().abs().ceil() as usize).max(1);
    let h = rem / lit(pieces as f64);
    let mut cur = base.clone();
    for _ in 0..pieces {
        cur = rk4_step(frame, &cur, h);
    }
    cur
}

/// Position and velocity mismatch of `γ σ(s) = σ(s + λ)` at `s = 0`.
///
/// Left translates of geodesics are geodesics, so agreement of the 1-jets at a
/// single parameter already forces agreement for all `s`.
pub fn translation_defect<F: Scalar + Float>(frame: &AdaptedFrame<F>, gamma: &[F], traj: &Trajectory<F>, lambda: F) -> F {
    let s0 = traj.start();
    let sl = state_at(frame, traj, s0.s + lambda);
    let moved = frame.group.mul_log(gamma, &s0.position);
    log_distance(frame, &sl.position, &moved) + norm(&linalg::sub(&sl.velocity, &s0.velocity))
}

/// Orthonormal basis (frame coordinates) of the span of `vectors`, dropping
/// directions shorter than `eps`.
pub fn orthonormalize<F: Scalar + Float>(vectors: &[Vector<F>], eps: F) -> Vec<Vector<F>> {
    let mut out: Vec<Vector<F>> = Vec::new();
    for v in vectors {
        let mut u = v.clone();
        for _ in 0..2 {
            for w in &out {
                let c = linalg::dot(&u, w);
                u = linalg::axpy(&u, &(-c), w);
            }
        }
        let l = norm(&u);
        if l > eps {
            out.push(linalg::scale(&(F::one() / l), &u));
        }
    }
    out
}

/// Residual of `⟨L_{p*}[log(p⁻¹γp), g], σ̇(0)⟩ = 0` at `p = σ(0)`.
pub fn theorem311_check<F: Scalar + Float>(frame: &AdaptedFrame<F>, gamma: &[F], traj: &Trajectory<F>) -> F {
    let n = frame.dim();
    let s0 = traj.start();
    let p = &s0.position;
    let conj = frame
        .group
        .mul_log(&frame.group.mul_log(&linalg::neg(p), gamma), p);
    let image: Vec<Vector<F>> = (0..n)
        .map(|e| frame.bracket(&conj, &linalg::unit(n, e)))
        .collect();
    orthonormalize(&image, lit(1e-9))
        .iter()
        .fold(F::zero(), |m, b| Float::max(m, Float::abs(linalg::dot(b, &s0.velocity))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, ExampleId};
    use crate::scalar::rat;

    fn frame_v() -> AdaptedFrame<f64> {
        let ex = catalog::load_example(ExampleId::V).unwrap();
        AdaptedFrame::new(&ex.algebra, &ex.metric).unwrap()
    }

    #[test]
    fn orthonormal_basis_metric_round_trip() {
        let basis = catalog::example_five_basis();
        let m = MetricSpec::from_orthonormal_basis(basis.clone()).unwrap();
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate() {
                let want = if i == j { rat(1, 1) } else { rat(0, 1) };
                assert_eq!(m.inner(u, v), want);
            }
        }
        let json = MetricJson::from_spec(&m);
        assert_eq!(json.to_spec().unwrap(), m);
        let bad = vec![vec![rat(1, 1), rat(2, 1)], vec![rat(2, 1), rat(1, 1)]];
        assert_eq!(MetricSpec::from_gram(bad), Err(GeometryError::NotPositiveDefinite(2)));
    }

    #[test]
    fn frame_blocks_and_identities() {
        let f = frame_v();
        assert_eq!((f.nu, f.zeta, f.top), (4, 2, 1));
        assert!(f.mixed_jacobi_residual() < 1e-12);
        assert!(covariant_table_residual(&f) < 1e-12);
        for k in 0..f.zeta {
            for h in 0..f.zeta {
                let zk = linalg::unit::<f64>(7, 4 + k);
                let zh = linalg::unit::<f64>(7, 4 + h);
                assert!(max_abs(&f.bracket(&zk, &zh)) < 1e-14);
            }
        }
    }

    #[test]
    fn abelian_lines_are_exact() {
        let sc = StructureConstants::<Rational>::abelian(3);
        let f: AdaptedFrame<f64> = AdaptedFrame::new(&sc, &MetricSpec::standard(3)).unwrap();
        let v = vec![0.6, 0.0, 0.8];
        let t = integrate_geodesic(&f, &GeodesicState::at_identity(v.clone()), 2.0, 1e-12).unwrap();
        for st in &t.states {
            for i in 0..3 {
                assert!((st.position[i] - st.s * v[i]).abs() < 1e-14);
            }
        }
        assert_eq!(
            geodesic_rhs_threestep(&f, &[0.0; 3], &v),
            Err(GeometryError::StepMismatch { expected: 3, found: 1 })
        );
    }

    #[test]
    fn central_direction_has_no_acceleration() {
        let f = frame_v();
        let w = linalg::unit::<f64>(7, 6);
        let r = geodesic_rhs_general(&f, &GeodesicState::at_identity(w));
        assert!(max_abs(&r.velocity) < 1e-15);
    }
}
