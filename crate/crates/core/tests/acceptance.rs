//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nilspec::catalog::{example_five_basis, load_example, ExampleId};
use nilspec::geometry::{
    conserved_momentum, covariant_table_residual, geodesic_rhs_general, geodesic_rhs_threestep,
    integrate_geodesic, submersion_project, AdaptedFrame, GeodesicState, MetricSpec,
};
use nilspec::group::{GClasses, GroupElement, NilpotentGroup};
use nilspec::morphisms::{self, AlmostInnerKind, AutomorphismJson};
use nilspec::scalar::rat;
use nilspec::spectra::{self, HeisenbergFactor, Length, LengthModel, PiPoly, ShootingOptions, Verdict};
use nilspec::{Algebra, Frame, Rational, SmallRational};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(t: Instant, limit: u64) -> Result<Duration, String> {
    let d = t.elapsed();
    ensure(d < Duration::from_secs(limit), format!("took {d:?}, limit {limit} s"))?;
    Ok(d)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let ex = load_example(ExampleId::IV).map_err(err)?;
    let target = Length::exact(PiPoly::new(rat(0, 1), rat(28, 1), rat(-4, 1)));
    let mut ms = vec![];
    for lat in &ex.lattices {
        let rep = spectra::length_spectrum(lat, &ex.metric, 14, 7.0).map_err(err)?;
        let e = rep
            .entries
            .iter()
            .find(|e| e.exact.same(&target, 0.0))
            .ok_or("length missing from spectrum")?;
        ensure(e.length_symbolic.as_deref() == Some("sqrt(4*pi*(7-pi))"), "symbolic form")?;
        ensure((e.length - (4.0 * PI * (7.0 - PI)).sqrt()).abs() < 1e-9, "float value")?;
        ms.push(e.m_total);
    }
    let d = within(t, 60)?;
    ensure(ms == [28, 14], format!("m_total = {ms:?}"))?;
    Ok(format!("m_total 28 / 14 at {} = {:.10}, window 14, {d:.1?}", "sqrt(4*pi*(7-pi))", target.value))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let ex = load_example(ExampleId::III).map_err(err)?;
    let mut rows = vec![];
    for lat in &ex.lattices {
        let rep = spectra::length_spectrum(lat, &ex.metric, 4, 1.0).map_err(err)?;
        let e = rep
            .entries
            .iter()
            .find(|e| e.length_symbolic.as_deref() == Some("1"))
            .ok_or("length 1 missing")?;
        rows.push((e.m_noncentral - e.m_quotient_central, e.m_quotient_central));
    }
    let d = within(t, 120)?;
    ensure(rows[0].0 == 12 && rows[1].0 == 12, format!("noncentral {rows:?}"))?;
    ensure(rows[0].1 == 2 * rows[1].1 && rows[1].1 > 0, format!("central-form {rows:?}"))?;
    Ok(format!(
        "noncentral 12 / 12, central-form {} / {} at window 4, {d:.1?}",
        rows[0].1, rows[1].1
    ))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let ex = load_example(ExampleId::II).map_err(err)?;
    let c = spectra::compare_lengths(&ex.lattices[0], &ex.lattices[1], &ex.metric, 3, f64::INFINITY).map_err(err)?;
    let d = within(t, 120)?;
    let unequal = c.keys.iter().filter(|k| k.count1 != k.count2).count();
    ensure(unequal == 0, format!("{unequal} group classes with unequal counts"))?;
    ensure(c.verdict == Verdict::Same, format!("{:?}", c.verdict))?;
    Ok(format!("{} group classes from words with exponents <= 3, all counts equal, {d:.1?}", c.keys.len()))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let ex = load_example(ExampleId::V).map_err(err)?;
    let phi = ex.automorphism("Phi").ok_or("Phi missing")?.clone();
    let chk = morphisms::is_automorphism(&phi.matrix, &ex.algebra).map_err(err)?;
    ensure(chk.holds, format!("bracket violated at {:?}", chk.violation))?;
    let spec = spectra::MarkingSpec::new(phi.clone(), ex.lattices[0].clone(), ex.lattices[1].clone()).map_err(err)?;

    let quotient = GClasses::new(ex.group.clone()).map_err(err)?.quotient.ok_or("no quotient")?;
    let psi1 = ex.quotient_automorphism("Psi1").ok_or("Psi1 missing")?;
    let psi2 = ex.quotient_automorphism("Psi2").ok_or("Psi2 missing")?;
    let ebar: Vec<Vec<Rational>> = example_five_basis()[..6].iter().map(|e| quotient.project(e)).collect();
    let signs = morphisms::signed_basis_action(&psi1.matrix, &ebar).ok_or("Psi1 does not act by signs")?;

    let qlat = ex.lattices[0].quotient_lattice(&quotient).map_err(err)?;
    let small = qlat.convert::<SmallRational>().map_err(err)?;
    let v = morphisms::is_gamma_almost_inner(&psi2.matrix_as::<SmallRational>(), &small, 4);
    ensure(v.kind == AlmostInnerKind::GammaAlmostInner, format!("Psi2 is {:?}", v.kind))?;
    ensure(v.witnessed == 9usize.pow(6), format!("{} witnesses", v.witnessed))?;

    let r = spectra::one_dim_center_marking(&spec, &ex.metric, 4).map_err(err)?;
    ensure(r.verdict == Verdict::Same, format!("marking verdict {:?}", r.verdict))?;
    let f = r.factorization.ok_or("no factorization")?;
    ensure(f.isometry == AutomorphismJson::from_spec(psi1).matrix, "isometric factor differs from Psi1")?;
    ensure(f.almost_inner == AutomorphismJson::from_spec(psi2).matrix, "almost-inner factor differs from Psi2")?;
    let phibar = phi.induced_on_quotient(&quotient).ok_or("Phi does not descend")?;
    ensure(phibar.matrix == psi1.compose(psi2).matrix, "Phibar != Psi1 o Psi2")?;
    let d = t.elapsed();
    Ok(format!(
        "Phi exact automorphism onto Gamma2; Psi1 signs {signs:?}; Psi2 almost-inner on {} words; Phibar = Psi1 o Psi2; SAME, {d:.1?}",
        v.witnessed
    ))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let ex = load_example(ExampleId::II).map_err(err)?;
    let family = ex.quotient_family.as_ref().ok_or("family missing")?;
    let bound = family.params.iter().find(|p| p.name == "h3").map(|p| p.range.1);
    ensure(bound == Some(8), format!("bound {bound:?}"))?;
    let r = spectra::one_dim_center_family(&ex.lattices[0], &ex.lattices[1], &ex.metric, family, 2).map_err(err)?;
    ensure(r.verdict == Verdict::Different, format!("{:?}", r.verdict))?;
    ensure(r.scan.automorphisms > 0, "no automorphisms in family")?;
    let failures: u64 = r.failure_reasons.values().sum();
    ensure(failures == r.scan.automorphisms, "unaccounted members")?;
    Ok(format!(
        "{} automorphisms in the h-family (bound 8), none factors isometrically; DIFFERENT, {:.1?}",
        r.scan.automorphisms,
        t.elapsed()
    ))
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / l).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut a, mut b, mut c, mut dd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for id in ExampleId::ALL {
        let ex = load_example(id).map_err(err)?;
        let f: Frame = AdaptedFrame::new(&ex.algebra, &ex.metric).map_err(err)?;
        let n = f.dim();
        a = a.max(covariant_table_residual(&f));
        for _ in 0..100 {
            let st = GeodesicState {
                position: (0..n).map(|_| 3.0 * rng.gen::<f64>() - 1.5).collect(),
                velocity: (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect(),
                s: 0.0,
            };
            let g = geodesic_rhs_general(&f, &st).position;
            let e = geodesic_rhs_threestep(&f, &st.position, &conserved_momentum(&f, &st)).map_err(err)?;
            b = g.iter().zip(&e).fold(b, |m, (x, y)| m.max((x - y).abs()));
        }
        let v = unit((0..n).map(|_| rng.gen::<f64>() - 0.5).collect());
        c = c.max(integrate_geodesic(&f, &GeodesicState::at_identity(v), 10.0, 1e-9).map_err(err)?.max_speed_drift);
        let qf = f.quotient_frame().map_err(err)?;
        let qv = unit((0..qf.dim()).map(|_| rng.gen::<f64>() - 0.5).collect());
        let mut up = qv.clone();
        up.resize(n, 0.0);
        let top = integrate_geodesic(&f, &GeodesicState::at_identity(up), 5.0, 1e-11).map_err(err)?;
        let down = submersion_project(&f, &top);
        let below = integrate_geodesic(&qf, &GeodesicState::at_identity(qv), 5.0, 1e-11).map_err(err)?;
        let (x, y) = (down.trajectory.end(), below.end());
        dd = x
            .position
            .iter()
            .zip(&y.position)
            .chain(x.velocity.iter().zip(&y.velocity))
            .fold(dd, |m, (p, q)| m.max((p - q).abs()));
    }
    ensure(a < 1e-12, format!("covariant table residual {a:e}"))?;
    ensure(b < 1e-10, format!("explicit vs general {b:e}"))?;
    ensure(c < 1e-9, format!("speed drift {c:e}"))?;
    ensure(dd < 1e-6, format!("submersion gap {dd:e}"))?;
    Ok(format!("(a) {a:.1e} (b) {b:.1e} (c) {c:.1e} (d) {dd:.1e} over all five metrics"))
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let opts = ShootingOptions::default();
    let mut report = vec![];
    // Example III quotient, exp(Y2bar + Z1bar).
    let ex = load_example(ExampleId::III).map_err(err)?;
    let model = LengthModel::new(&ex.group, &ex.metric).map_err(err)?;
    let (alg, gram) = model.target().ok_or("no quotient")?;
    let x: Vec<Rational> = [0, 0, 0, 1, 1, 0].iter().map(|&k| rat(k, 1)).collect();
    let bracket = spectra::two_step_lengths(alg, gram, &x);
    let f: Frame = AdaptedFrame::new(alg, &MetricSpec::from_gram(gram.clone()).map_err(err)?).map_err(err)?;
    let shots = spectra::shoot_multistart(&f, &f.from_structural_exact(&x), (bracket.lower.value, 1.0), &opts).map_err(err)?;
    let (lo, hi) = (bracket.lower.value, bracket.upper.as_ref().ok_or("no upper bound")?.value);
    ensure(shots.iter().any(|s| (s.lambda - 1.0).abs() < 1e-6), "lambda = 1 not found")?;
    for s in &shots {
        ensure(s.defect < 1e-6, format!("defect {}", s.defect))?;
        ensure(s.lambda >= lo - 1e-6 && s.lambda <= hi + 1e-6, format!("{} outside [{lo}, {hi}]", s.lambda))?;
    }
    report.push(format!("III: {:?}", shots.iter().map(|s| s.lambda).collect::<Vec<_>>()));

    // Example IV, Heisenberg factor, exp(7 Zbar).
    let ex = load_example(ExampleId::IV).map_err(err)?;
    let model = LengthModel::new(&ex.group, &ex.metric).map_err(err)?;
    let (alg, gram) = model.target().ok_or("no quotient")?;
    let x: Vec<Rational> = [0, 0, 0, 7].iter().map(|&k| rat(k, 1)).collect();
    let closed = spectra::two_step_lengths(alg, gram, &x);
    let (lo, hi) = (closed.lower.value, closed.upper.as_ref().ok_or("no upper bound")?.value);
    let h = HeisenbergFactor::detect(alg, gram).map_err(err)?;
    let (ha, hm): (Algebra, MetricSpec) = h.factor_algebra(alg);
    let f: Frame = AdaptedFrame::new(&ha, &hm).map_err(err)?;
    let gamma = f.from_structural_exact(&h.factor_coordinates(&x));
    let shots = spectra::shoot_multistart(&f, &gamma, (lo, hi), &opts).map_err(err)?;
    let helix = (4.0 * PI * (7.0 - PI)).sqrt();
    for want in [7.0, helix] {
        ensure(shots.iter().any(|s| (s.lambda - want).abs() < 1e-6), format!("{want} not found"))?;
    }
    for s in &shots {
        ensure(s.defect < 1e-6, format!("defect {}", s.defect))?;
        ensure(s.lambda >= lo - 1e-6 && s.lambda <= hi + 1e-6, format!("{} outside [{lo}, {hi}]", s.lambda))?;
    }
    report.push(format!("IV: {:?}", shots.iter().map(|s| s.lambda).collect::<Vec<_>>()));
    Ok(format!("{}; all in bracket, {:.1?}", report.join("; "), t.elapsed()))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let mut algebras: Vec<Algebra> = vec![];
    for id in ExampleId::ALL {
        let ex = load_example(id).map_err(err)?;
        ensure(ex.algebra.check_jacobi().map_err(err)?.is_empty(), format!("Jacobi fails for {id}"))?;
        if !algebras.contains(&ex.algebra) {
            algebras.push(ex.algebra);
        }
    }
    for alg in &algebras {
        let g = NilpotentGroup::new(alg.clone()).map_err(err)?;
        let n = g.dim();
        let q = proptest::collection::vec((-6i64..=6, 1i64..=3), n);
        let elem = |v: &[(i64, i64)]| GroupElement::from_log(v.iter().map(|&(a, b)| rat(a, b)).collect());
        let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
        runner
            .run(&(q.clone(), q.clone(), q), |(a, b, c)| {
                let (x, y, z) = (elem(&a), elem(&b), elem(&c));
                prop_assert_eq!(g.mul(&g.mul(&x, &y), &z), g.mul(&x, &g.mul(&y, &z)));
                prop_assert!(g.mul(&x, &g.inverse(&x)).is_identity());
                Ok(())
            })
            .map_err(|e| format!("BCH laws: {e}"))?;
    }
    let mut entries = 0;
    for (id, window, lmax) in [(ExampleId::II, 2, 3.0), (ExampleId::III, 2, 2.0), (ExampleId::IV, 3, 4.0), (ExampleId::V, 1, 2.0)] {
        let ex = load_example(id).map_err(err)?;
        for lat in &ex.lattices {
            for e in spectra::length_spectrum(lat, &ex.metric, window, lmax).map_err(err)?.entries {
                ensure(e.m_total == e.m_central + e.m_noncentral, format!("split fails in {id}"))?;
                entries += 1;
            }
        }
    }
    // Every lift of a quotient word in the window-2 fiber gets the same period data.
    let ex = load_example(ExampleId::III).map_err(err)?;
    let model = LengthModel::new(&ex.group, &ex.metric).map_err(err)?;
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    runner
        .run(&proptest::collection::vec(-2i64..=2, 6), |q| {
            for lat in &ex.lattices {
                let sigs: Vec<_> = (-2..=2)
                    .map(|j| {
                        let mut w = q.clone();
                        w.push(j);
                        let (key, kind, l) = model.word_lengths(lat, &w);
                        let known: Vec<Option<String>> = l.known.iter().map(Length::symbolic).collect();
                        (matches!(key, nilspec::group::GClassKey::Central(_)), kind, known, l.complete)
                    })
                    .filter(|s| !s.0)
                    .collect();
                prop_assert!(sigs.windows(2).all(|p| p[0] == p[1]));
            }
            Ok(())
        })
        .map_err(|e| format!("fiber consistency: {e}"))?;
    Ok(format!(
        "BCH on {} algebras x 500 triples, Jacobi on 5, split on {entries} entries, 200 window-2 fibers, {:.1?}",
        algebras.len(),
        t.elapsed()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Example IV multiplicity", criterion_1),
        ("Example III length-one multiplicities", criterion_2),
        ("Example II length spectrum equality", criterion_3),
        ("Example V marked verdict via factorization", criterion_4),
        ("Example II marked verdict via family scan", criterion_5),
        ("geometry oracle suite", criterion_6),
        ("shooting vs closed form", criterion_7),
        ("property suites", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {label}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {label}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
