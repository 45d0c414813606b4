use std::f64::consts::PI;
use std::time::Instant;

use nilspec::catalog::{load_example, ExampleId};
use nilspec::spectra::{self, ClassKind, Length, PiPoly, Verdict};
use nilspec::scalar::rat;

fn target_length() -> Length {
    Length::exact(PiPoly::new(rat(0, 1), rat(28, 1), rat(-4, 1)))
}

#[test]
fn example_four_multiplicities() {
    let ex = load_example(ExampleId::IV).unwrap();
    let t = Instant::now();
    let mut ms = vec![];
    for lat in &ex.lattices {
        let rep = spectra::length_spectrum(lat, &ex.metric, 14, 7.0).unwrap();
        let e = rep
            .entries
            .iter()
            .find(|e| e.exact.same(&target_length(), 0.0))
            .expect("length present");
        assert_eq!(e.length_symbolic.as_deref(), Some("sqrt(4*pi*(7-pi))"));
        assert!((e.length - (4.0 * PI * (7.0 - PI)).sqrt()).abs() < 1e-9);
        // Only central classes, whose periods beyond |log γ| are not characterized, stay open.
        assert!(e.undecided_representatives.iter().all(|r| r.kind == ClassKind::Central));
        assert_eq!(e.m_central, 0);
        ms.push(e.m_total);
    }
    eprintln!("IV spectra in {:?}", t.elapsed());
    assert_eq!(ms, vec![28, 14]);
}

#[test]
fn example_three_length_one() {
    let ex = load_example(ExampleId::III).unwrap();
    let t = Instant::now();
    let mut out = vec![];
    for lat in &ex.lattices {
        let rep = spectra::length_spectrum(lat, &ex.metric, 4, 1.0).unwrap();
        let e = rep
            .entries
            .iter()
            .find(|e| e.length_symbolic.as_deref() == Some("1"))
            .unwrap();
        assert_eq!(e.m_total, e.m_central + e.m_noncentral);
        out.push((e.m_noncentral - e.m_quotient_central, e.m_quotient_central, e.m_central));
    }
    eprintln!("III spectra in {:?}: {:?}", t.elapsed(), out);
    assert_eq!(out[0].0, 12);
    assert_eq!(out[1].0, 12);
    assert_eq!(out[0].1, 2 * out[1].1);
}

#[test]
fn example_comparisons() {
    let t = Instant::now();
    let ex = load_example(ExampleId::II).unwrap();
    let c = spectra::compare_lengths(&ex.lattices[0], &ex.lattices[1], &ex.metric, 3, 4.0).unwrap();
    eprintln!("II compare in {:?}: {:?} over {} keys", t.elapsed(), c.verdict, c.keys.len());
    assert_eq!(c.verdict, Verdict::Same);
    let ex = load_example(ExampleId::IV).unwrap();
    let c = spectra::compare_lengths(&ex.lattices[0], &ex.lattices[1], &ex.metric, 7, 7.0).unwrap();
    assert_eq!(c.verdict, Verdict::Different);
    let ex = load_example(ExampleId::III).unwrap();
    let c = spectra::compare_lengths(&ex.lattices[0], &ex.lattices[1], &ex.metric, 3, 1.0).unwrap();
    assert_eq!(c.verdict, Verdict::Different);
    eprintln!("all compares in {:?}", t.elapsed());
}

#[test]
fn example_five_marks() {
    let ex = load_example(ExampleId::V).unwrap();
    let t = Instant::now();
    let spec = spectra::MarkingSpec::new(
        ex.automorphism("Phi").unwrap().clone(),
        ex.lattices[0].clone(),
        ex.lattices[1].clone(),
    )
    .unwrap();
    let r = spectra::one_dim_center_marking(&spec, &ex.metric, 4).unwrap();
    eprintln!("V marking in {:?}: {:?}", t.elapsed(), r.checks);
    assert_eq!(r.verdict, Verdict::Same);
}

#[test]
fn example_two_family() {
    let ex = load_example(ExampleId::II).unwrap();
    let t = Instant::now();
    let r = spectra::one_dim_center_family(
        &ex.lattices[0],
        &ex.lattices[1],
        &ex.metric,
        ex.quotient_family.as_ref().unwrap(),
        2,
    )
    .unwrap();
    eprintln!("II family in {:?}: {:?} {:?}", t.elapsed(), r.scan.automorphisms, r.failure_reasons);
    assert_eq!(r.verdict, Verdict::Different);
}

mod shooting {
    use super::*;
    use nilspec::geometry::{AdaptedFrame, MetricSpec};
    use nilspec::spectra::{shoot_multistart, shoot_translated, HeisenbergFactor, LengthModel, ShootingOptions};
    use nilspec::{Algebra, Frame};

    #[test]
    fn abelian_line() {
        let f: Frame = AdaptedFrame::new(&Algebra::abelian(2), &MetricSpec::standard(2)).unwrap();
        let s = shoot_translated(&f, &[3.0, 4.0], 4.0, &[1.0, 1.0], 1e-6).unwrap();
        assert!((s.lambda - 5.0).abs() < 1e-8);
        assert!((s.velocity[0] - 0.6).abs() < 1e-8);
    }

    #[test]
    fn example_three_quotient() {
        let ex = load_example(ExampleId::III).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        let (a, g) = model.target().unwrap();
        let metric = MetricSpec::from_gram(g.clone()).unwrap();
        let f: Frame = AdaptedFrame::new(a, &metric).unwrap();
        let log = vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1), rat(1, 1), rat(0, 1)];
        let gamma = f.from_structural_exact(&log);
        let t = Instant::now();
        let shots = shoot_multistart(&f, &gamma, (1.0, 1.0), &ShootingOptions::default()).unwrap();
        eprintln!("III shots in {:?}: {:?}", t.elapsed(), shots.iter().map(|s| (s.lambda, s.defect)).collect::<Vec<_>>());
        assert!(shots.iter().all(|s| (s.lambda - 1.0).abs() < 1e-6 && s.defect < 1e-6));
    }

    #[test]
    fn example_four_heisenberg_factor() {
        let ex = load_example(ExampleId::IV).unwrap();
        let model = LengthModel::new(&ex.group, &ex.metric).unwrap();
        let (a, g) = model.target().unwrap();
        let h = HeisenbergFactor::detect(a, g).unwrap();
        let (ha, hm) = h.factor_algebra(a);
        let f: Frame = AdaptedFrame::new(&ha, &hm).unwrap();
        // exp(7 Zbar) in quotient coordinates X1 Y1 Y2 Z.
        let coords = h.factor_coordinates(&[rat(0, 1), rat(0, 1), rat(0, 1), rat(7, 1)]);
        let gamma = f.from_structural_exact(&coords);
        let t = Instant::now();
        let shots = shoot_multistart(&f, &gamma, (0.0, 7.0), &ShootingOptions::default()).unwrap();
        eprintln!("IV shots in {:?}: {:?}", t.elapsed(), shots.iter().map(|s| (s.lambda, s.defect)).collect::<Vec<_>>());
        let helix = (4.0 * PI * (7.0 - PI)).sqrt();
        assert!(shots.iter().any(|s| (s.lambda - helix).abs() < 1e-6));
        assert!(shots.iter().any(|s| (s.lambda - 7.0).abs() < 1e-6));
        assert!(shots.iter().all(|s| s.lambda <= 7.0 + 1e-6 && s.defect < 1e-6));
    }
}
