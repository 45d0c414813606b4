use nilspec::catalog::{load_example, ExampleId};
use nilspec::group::{GroupElement, NilpotentGroup};
use nilspec::scalar::rat;
use nilspec::spectra::{self, two_step_data, LengthModel, Verdict};
use nilspec::{Algebra, Rational};
use proptest::prelude::*;

fn elem(v: &[(i64, i64)]) -> GroupElement<Rational> {
    GroupElement::from_log(v.iter().map(|&(n, d)| rat(n, d)).collect())
}

fn rational_vec(n: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    proptest::collection::vec((-6i64..=6, 1i64..=3), n)
}

fn groups() -> Vec<(ExampleId, NilpotentGroup<Rational>)> {
    // Examples share algebras; callers dedupe where it matters.
    ExampleId::ALL
        .iter()
        .map(|&id| (id, load_example(id).unwrap().group))
        .collect()
}

fn bch_laws(g: &NilpotentGroup<Rational>, cases: u32) {
    let n = g.dim();
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig {
        cases,
        ..ProptestConfig::default()
    });
    runner
        .run(&(rational_vec(n), rational_vec(n), rational_vec(n)), |(a, b, c)| {
            let (x, y, z) = (elem(&a), elem(&b), elem(&c));
            let left = g.mul(&g.mul(&x, &y), &z);
            let right = g.mul(&x, &g.mul(&y, &z));
            prop_assert_eq!(left, right);
            prop_assert!(g.mul(&x, &g.inverse(&x)).is_identity());
            prop_assert_eq!(g.mul(&g.identity(), &y), y.clone());
            Ok(())
        })
        .unwrap();
}

#[test]
fn bch_associativity_and_inverses() {
    let mut seen: Vec<Algebra> = Vec::new();
    for (_, g) in groups() {
        if seen.contains(&g.algebra) {
            continue;
        }
        seen.push(g.algebra.clone());
        bch_laws(&g, 500);
    }
    let heis = Algebra::from_brackets(vec!["X".into(), "Y".into(), "Z".into()], &[(0, 1, 2, rat(1, 1))]);
    bch_laws(&NilpotentGroup::new(heis).unwrap(), 500);
}

#[test]
fn jacobi_holds_for_every_catalog_algebra() {
    for (id, g) in groups() {
        assert!(g.algebra.check_jacobi().unwrap().is_empty(), "{id}");
    }
}

#[test]
fn multiplicity_split_on_every_entry() {
    for (id, window, lmax) in [(ExampleId::III, 2, 2.0), (ExampleId::IV, 3, 4.0), (ExampleId::II, 2, 3.0), (ExampleId::V, 1, 2.0)] {
        let ex = load_example(id).unwrap();
        for lat in &ex.lattices {
            let rep = spectra::length_spectrum(lat, &ex.metric, window, lmax).unwrap();
            assert!(!rep.entries.is_empty(), "{id}");
            for e in &rep.entries {
                assert_eq!(e.m_total, e.m_central + e.m_noncentral, "{id} {}", e.length);
                assert!(e.m_quotient_central <= e.m_noncentral);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Every lift of a quotient element gets the same period data.
    #[test]
    fn fiber_consistency_example_three(q in proptest::collection::vec(-2i64..=2, 6)) {
        let ex = load_example(ExampleId::III).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        for lat in &ex.lattices {
            let mut reference = None;
            for j in -2..=2 {
                let mut w = q.clone();
                w.push(j);
                let red = spectra::reduce_to_quotient(lat, &w).unwrap();
                if !red.applicable {
                    continue;
                }
                let (alg, gram) = model.target().unwrap();
                let l = spectra::two_step_lengths(alg, gram, &red.quotient_log);
                let sig: Vec<Option<String>> = l.known.iter().map(|x| x.symbolic()).collect();
                let sig = (sig, l.complete, l.lower.symbolic());
                match &reference {
                    None => reference = Some(sig),
                    Some(r) => prop_assert_eq!(r, &sig),
                }
            }
        }
    }

    #[test]
    fn two_step_decomposition(x in proptest::collection::vec((-5i64..=5, 1i64..=2), 6)) {
        let ex = load_example(ExampleId::V).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        let (alg, gram) = model.target().unwrap();
        let v: Vec<Rational> = x.iter().map(|&(n, d)| rat(n, d)).collect();
        let d = two_step_data(alg, gram, &v);
        prop_assert!(d.z_double_star_norm_sq <= d.z_star_norm_sq);
        let ip = |a: &[Rational], b: &[Rational]| {
            nilspec::linalg::dot(a, &nilspec::linalg::mat_vec(gram, b))
        };
        prop_assert_eq!(ip(&d.v_star, &d.z_star), rat(0, 1));
        if d.v_norm_sq == rat(0, 1) {
            prop_assert_eq!(&d.z_double_star, &d.z_star);
        }
        // Periods lie in the bracket.
        let l = spectra::two_step_lengths(alg, gram, &v);
        for k in &l.known {
            prop_assert!(k.value >= l.lower.value - 1e-12);
            prop_assert!(k.value <= l.upper.as_ref().unwrap().value + 1e-12);
        }
    }
}

#[test]
fn marking_symmetry_example_five() {
    let ex = load_example(ExampleId::V).unwrap();
    let spec = spectra::MarkingSpec::new(
        ex.automorphism("Phi").unwrap().clone(),
        ex.lattices[0].clone(),
        ex.lattices[1].clone(),
    )
    .unwrap();
    let fwd = spectra::compare_marked(&spec, &ex.metric, 1, 1.5, 1e-6).unwrap();
    let back = spectra::compare_marked(&spec.inverse().unwrap(), &ex.metric, 1, 1.5, 1e-6).unwrap();
    assert_eq!(fwd.verdict, back.verdict);
    assert_ne!(fwd.verdict, Verdict::Different);
}
