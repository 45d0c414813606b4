//! Built-in examples: algebras, metrics, lattice pairs and automorphisms.

use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::algebra::{AlgebraJson, StructureConstants};
use crate::geometry::{MetricJson, MetricSpec};
use crate::group::{GroupError, Lattice, LatticeJson, LatticeSpec, NilpotentGroup};
use crate::linalg::{self, Matrix, Vector};
use crate::morphisms::{AffineExpr, AutomorphismJson, AutomorphismSpec, ParamSpec, ParamTemplate};
use crate::scalar::rat;
use crate::{Algebra, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown example {0:?}; expected one of I, II, III, IV, V")]
    UnknownExample(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ExampleId {
    I,
    II,
    III,
    IV,
    V,
}

impl ExampleId {
    pub const ALL: [ExampleId; 5] = [
        ExampleId::I,
        ExampleId::II,
        ExampleId::III,
        ExampleId::IV,
        ExampleId::V,
    ];
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExampleId::I => "I",
            ExampleId::II => "II",
            ExampleId::III => "III",
            ExampleId::IV => "IV",
            ExampleId::V => "V",
        };
        f.write_str(s)
    }
}

impl FromStr for ExampleId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(ExampleId::I),
            "II" | "2" => Ok(ExampleId::II),
            "III" | "3" => Ok(ExampleId::III),
            "IV" | "4" => Ok(ExampleId::IV),
            "V" | "5" => Ok(ExampleId::V),
            _ => Err(CatalogError::UnknownExample(s.to_string())),
        }
    }
}

/// How far a tabulated property can be checked here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlagStatus {
    /// Checked by the length and marked-length machinery.
    Verifiable,
    /// Recorded as published; rests on arguments not reproduced here.
    Asserted,
    /// Laplace spectra and representation theory: stored, never tested.
    NonExecutable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Flag {
    pub value: bool,
    pub status: FlagStatus,
}

/// One row of the table of expected properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectedRow {
    pub id: ExampleId,
    pub dim: usize,
    pub same_p_form_spectrum: Flag,
    pub representation_equivalent: Flag,
    pub isomorphic_fundamental_groups: Flag,
    pub same_length_spectrum: Flag,
    pub same_marked_length_spectrum: Flag,
}

#[derive(Debug, Clone)]
pub struct ExampleRecord {
    pub id: ExampleId,
    pub algebra: Algebra,
    pub group: NilpotentGroup<Rational>,
    pub metric: MetricSpec,
    pub lattices: Vec<Lattice<Rational>>,
    /// Automorphisms of the full algebra.
    pub automorphisms: Vec<AutomorphismSpec>,
    /// Automorphisms of the quotient by the last derived term.
    pub quotient_automorphisms: Vec<AutomorphismSpec>,
    /// Candidate isomorphisms at the quotient level, as a parameter family.
    pub quotient_family: Option<ParamTemplate>,
    pub expected: ExpectedRow,
}

impl ExampleRecord {
    pub fn automorphism(&self, name: &str) -> Option<&AutomorphismSpec> {
        self.automorphisms.iter().find(|a| a.name == name)
    }

    pub fn quotient_automorphism(&self, name: &str) -> Option<&AutomorphismSpec> {
        self.quotient_automorphisms.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> ExampleJson {
        let labels = self.algebra.labels.clone();
        ExampleJson {
            id: self.id,
            algebra: AlgebraJson::from_algebra(&self.algebra),
            metric: MetricJson::from_spec(&self.metric),
            lattices: self
                .lattices
                .iter()
                .map(|l| LatticeJson::from_spec(&l.spec, labels.clone()))
                .collect(),
            automorphisms: self.automorphisms.iter().map(AutomorphismJson::from_spec).collect(),
            quotient_automorphisms: self
                .quotient_automorphisms
                .iter()
                .map(AutomorphismJson::from_spec)
                .collect(),
            expected: self.expected.clone(),
        }
    }
}

/// Serializable export of an [`ExampleRecord`].
#[derive(Debug, Clone, Serialize)]
pub struct ExampleJson {
    pub id: ExampleId,
    pub algebra: AlgebraJson,
    pub metric: MetricJson,
    pub lattices: Vec<LatticeJson>,
    pub automorphisms: Vec<AutomorphismJson>,
    pub quotient_automorphisms: Vec<AutomorphismJson>,
    pub expected: ExpectedRow,
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `[X1,Y1] = [X2,Y2] = Z1`, `[X1,Y2] = Z2`, `[X1,Z1] = [X2,Z2] = [Y1,Y2] = W`.
pub fn seven_dim_algebra() -> Algebra {
    let one = rat(1, 1);
    StructureConstants::from_brackets(
        labels(&["X1", "X2", "Y1", "Y2", "Z1", "Z2", "W"]),
        &[
            (0, 2, 4, one.clone()),
            (1, 3, 4, one.clone()),
            (0, 3, 5, one.clone()),
            (0, 4, 6, one.clone()),
            (1, 5, 6, one.clone()),
            (2, 3, 6, one),
        ],
    )
}

/// `[X1,Y1] = Z`, `[X1,Z] = [Y1,Y2] = W`.
pub fn five_dim_algebra() -> Algebra {
    let one = rat(1, 1);
    StructureConstants::from_brackets(
        labels(&["X1", "Y1", "Y2", "Z", "W"]),
        &[(0, 1, 3, one.clone()), (0, 3, 4, one.clone()), (1, 2, 4, one)],
    )
}

/// Vector from `(index, numerator, denominator)` entries.
fn vq(dim: usize, entries: &[(usize, i64, i64)]) -> Vector<Rational> {
    let mut v = linalg::zeros(dim);
    for &(i, n, d) in entries {
        v[i] = rat(n, d);
    }
    v
}

fn diag_lattice(name: &str, scales: &[(i64, i64)]) -> LatticeSpec<Rational> {
    let n = scales.len();
    LatticeSpec {
        name: name.to_string(),
        generators: scales
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| vq(n, &[(i, p, q)]))
            .collect(),
    }
}

fn flag(value: bool, status: FlagStatus) -> Flag {
    Flag { value, status }
}

/// Table rows. The first three columns and Example I are recorded as published.
pub fn expected_matrix() -> Vec<ExpectedRow> {
    use FlagStatus::*;
    let row = |id, dim, p: bool, r: bool, iso: bool, len: bool, marked: bool| {
        let verifiable = id != ExampleId::I;
        ExpectedRow {
            id,
            dim,
            same_p_form_spectrum: flag(p, NonExecutable),
            representation_equivalent: flag(r, NonExecutable),
            isomorphic_fundamental_groups: flag(iso, Asserted),
            same_length_spectrum: flag(len, if verifiable { Verifiable } else { Asserted }),
            same_marked_length_spectrum: flag(marked, if verifiable { Verifiable } else { Asserted }),
        }
    };
    vec![
        row(ExampleId::I, 7, true, true, false, false, false),
        row(ExampleId::II, 5, true, true, true, true, false),
        row(ExampleId::III, 7, false, false, false, false, false),
        row(ExampleId::IV, 5, false, false, false, false, false),
        row(ExampleId::V, 7, false, false, true, true, true),
    ]
}

/// Orthonormal basis `E1..E7` of the metric of Example V, in structural coordinates.
pub fn example_five_basis() -> Matrix<Rational> {
    vec![
        vq(7, &[(0, 1, 1), (1, -1, 2), (3, -1, 4)]),
        vq(7, &[(1, 1, 1), (2, -1, 4)]),
        vq(7, &[(2, 1, 1)]),
        vq(7, &[(2, 1, 1), (3, 1, 1)]),
        vq(7, &[(4, 1, 1)]),
        vq(7, &[(4, 1, 2), (5, 1, 1)]),
        vq(7, &[(6, 1, 1)]),
    ]
}

fn example_five_phi() -> AutomorphismSpec {
    AutomorphismSpec::from_images(
        "Phi",
        &[
            vq(7, &[(0, -1, 1), (1, 1, 1), (2, 1, 4), (3, 1, 2)]),
            vq(7, &[(1, 1, 1), (2, -1, 2), (4, 1, 4)]),
            vq(7, &[(2, -1, 1)]),
            vq(7, &[(2, 2, 1), (3, 1, 1), (5, 1, 1)]),
            vq(7, &[(4, 1, 1), (6, 1, 2)]),
            vq(7, &[(4, -1, 1), (5, -1, 1), (6, 1, 4)]),
            vq(7, &[(6, -1, 1)]),
        ],
    )
}

fn example_five_psi() -> Vec<AutomorphismSpec> {
    let psi1 = AutomorphismSpec::from_images(
        "Psi1",
        &[
            vq(6, &[(0, -1, 1), (1, 1, 1), (2, 1, 4), (3, 1, 2)]),
            vq(6, &[(1, 1, 1), (2, -1, 2)]),
            vq(6, &[(2, -1, 1)]),
            vq(6, &[(2, 2, 1), (3, 1, 1)]),
            vq(6, &[(4, 1, 1)]),
            vq(6, &[(4, -1, 1), (5, -1, 1)]),
        ],
    );
    let psi2 = AutomorphismSpec::from_images(
        "Psi2",
        &[
            vq(6, &[(0, 1, 1)]),
            vq(6, &[(1, 1, 1), (4, 1, 4)]),
            vq(6, &[(2, 1, 1)]),
            vq(6, &[(3, 1, 1), (4, -1, 1), (5, -1, 1)]),
            vq(6, &[(4, 1, 1)]),
            vq(6, &[(5, 1, 1)]),
        ],
    );
    vec![psi1, psi2]
}

/// Quotient-level candidates `X1 -> eX X1 + h3/2 Y1 + h4/2 Y2`,
/// `Y1 -> eY (Y1 + Z/2) + h1 Y2 + h2 Z`, `Y2 -> e2 Y2`, `Z -> eZ Z`,
/// with `h3^2 + h4^2 != 0`. Central corrections left open in the published
/// family are set to zero.
pub fn example_two_family(bound: i64) -> ParamTemplate {
    let sign = |n: &str| ParamSpec::signs(n);
    let h = |n: &str| ParamSpec::range(n, -bound, bound);
    let e = AffineExpr::zero;
    let p = |name: &str, n: i64, d: i64| AffineExpr::term(name, rat(n, d));
    let x1 = vec![p("eX", 1, 1), p("h3", 1, 2), p("h4", 1, 2), e()];
    let y1 = vec![e(), p("eY", 1, 1), p("h1", 1, 1), p("eY", 1, 2).plus(&p("h2", 1, 1))];
    let y2 = vec![e(), e(), p("e2", 1, 1), e()];
    let z = vec![e(), e(), e(), p("eZ", 1, 1)];
    ParamTemplate {
        name: "quotient isomorphisms".into(),
        params: vec![
            sign("eX"),
            sign("eY"),
            sign("e2"),
            sign("eZ"),
            h("h1"),
            h("h2"),
            h("h3"),
            h("h4"),
        ],
        columns: vec![x1, y1, y2, z],
        nonzero_any: vec![vec!["h3".into(), "h4".into()]],
    }
}

pub fn load_example(id: ExampleId) -> Result<ExampleRecord, CatalogError> {
    let seven = matches!(id, ExampleId::I | ExampleId::III | ExampleId::V);
    let algebra = if seven {
        seven_dim_algebra()
    } else {
        five_dim_algebra()
    };
    let n = algebra.dim;
    let group = NilpotentGroup::new(algebra.clone())?;
    let standard = MetricSpec::standard(n);
    let (metric, specs, automorphisms, quotient_automorphisms, family) = match id {
        ExampleId::I => {
            let g1 = diag_lattice("Gamma1", &[(2, 1), (2, 1), (1, 1), (1, 1), (1, 1), (1, 1), (1, 1)]);
            let mut g2 = g1.clone();
            g2.name = "Gamma2".into();
            g2.generators[3] = vq(7, &[(3, 1, 1), (5, 1, 2)]);
            (standard, vec![g1, g2], vec![], vec![], None)
        }
        ExampleId::II => {
            let g1 = diag_lattice("Gamma1", &[(2, 1), (1, 1), (1, 1), (1, 1), (1, 1)]);
            let mut g2 = g1.clone();
            g2.name = "Gamma2".into();
            g2.generators[1] = vq(5, &[(1, 1, 1), (3, 1, 2)]);
            (standard, vec![g1, g2], vec![], vec![], Some(example_two_family(8)))
        }
        ExampleId::III => {
            let g1 = diag_lattice("Gamma1", &[(2, 1), (2, 1), (1, 1), (1, 1), (1, 1), (1, 1), (1, 1)]);
            let g2 = diag_lattice("Gamma2", &[(1, 1), (1, 1), (2, 1), (2, 1), (1, 1), (1, 1), (1, 1)]);
            (standard, vec![g1, g2], vec![], vec![], None)
        }
        ExampleId::IV => {
            let g1 = diag_lattice("Gamma1", &[(2, 1), (1, 1), (1, 1), (1, 1), (1, 1)]);
            let g2 = diag_lattice("Gamma2", &[(1, 1), (2, 1), (2, 1), (1, 1), (1, 1)]);
            (standard, vec![g1, g2], vec![], vec![], None)
        }
        ExampleId::V => {
            let metric = MetricSpec::from_orthonormal_basis(example_five_basis())
                .expect("basis is invertible");
            let g1 = diag_lattice("Gamma1", &[(2, 1), (2, 1), (1, 1), (1, 1), (1, 1), (1, 1), (1, 1)]);
            let phi = example_five_phi();
            let g2 = LatticeSpec {
                name: "Gamma2".into(),
                generators: g1.generators.iter().map(|g| phi.apply(g)).collect(),
            };
            (metric, vec![g1, g2], vec![phi], example_five_psi(), None)
        }
    };
    let lattices = specs
        .into_iter()
        .map(|s| Lattice::new(group.clone(), s))
        .collect::<Result<Vec<_>, _>>()?;
    let expected = expected_matrix()
        .into_iter()
        .find(|r| r.id == id)
        .expect("every example has a row");
    Ok(ExampleRecord {
        id,
        algebra,
        group,
        metric,
        lattices,
        automorphisms,
        quotient_automorphisms,
        quotient_family: family,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_loads_and_is_valid() {
        for id in ExampleId::ALL {
            let ex = load_example(id).unwrap();
            assert!(ex.algebra.check_jacobi().unwrap().is_empty(), "{id}");
            assert_eq!(ex.group.step, 3, "{id}");
            assert!(ex.algebra.is_strictly_nonsingular(), "{id}");
            assert!(ex.lattices[0].same_center_intersection(&ex.lattices[1]), "{id}");
        }
    }

    #[test]
    fn shared_algebras() {
        let a = load_example(ExampleId::I).unwrap().algebra;
        assert_eq!(a, load_example(ExampleId::III).unwrap().algebra);
        assert_eq!(a, load_example(ExampleId::V).unwrap().algebra);
        let b = load_example(ExampleId::II).unwrap().algebra;
        assert_eq!(b, load_example(ExampleId::IV).unwrap().algebra);
    }

    #[test]
    fn displayed_entries() {
        let v = load_example(ExampleId::V).unwrap();
        let phi = v.automorphism("Phi").unwrap();
        assert_eq!(phi.apply(&vq(7, &[(6, 1, 1)])), vq(7, &[(6, -1, 1)]));
        let ii = load_example(ExampleId::II).unwrap();
        assert_eq!(ii.lattices[1].spec.generators[1], vq(5, &[(1, 1, 1), (3, 1, 2)]));
        let i = load_example(ExampleId::I).unwrap();
        assert_eq!(i.lattices[1].spec.generators[3], vq(7, &[(3, 1, 1), (5, 1, 2)]));
        assert!("VI".parse::<ExampleId>().is_err());
    }

    #[test]
    fn table_rows() {
        let t = expected_matrix();
        let row = |id| t.iter().find(|r| r.id == id).unwrap().clone();
        assert!(row(ExampleId::II).same_length_spectrum.value);
        assert!(!row(ExampleId::II).same_marked_length_spectrum.value);
        assert!(row(ExampleId::V).same_marked_length_spectrum.value);
        assert!(!row(ExampleId::III).same_length_spectrum.value);
        assert!(!row(ExampleId::IV).same_marked_length_spectrum.value);
        assert_eq!(row(ExampleId::I).same_marked_length_spectrum.status, FlagStatus::Asserted);
    }
}
