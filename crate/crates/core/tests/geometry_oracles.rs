use nilspec::catalog::{load_example, ExampleId};
use nilspec::geometry::{
    conserved_momentum, covariant_table_residual, geodesic_rhs_general, geodesic_rhs_threestep,
    integrate_geodesic, submersion_project, AdaptedFrame, GeodesicState,
};
use nilspec::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames() -> Vec<(ExampleId, Frame)> {
    ExampleId::ALL
        .iter()
        .map(|&id| {
            let ex = load_example(id).unwrap();
            (id, AdaptedFrame::new(&ex.algebra, &ex.metric).unwrap())
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (rng.gen::<f64>() * 2.0 - 1.0)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= l);
    v
}

#[test]
fn covariant_table_on_every_frame() {
    for (id, f) in frames() {
        let r = covariant_table_residual(&f);
        assert!(r < 1e-12, "{id}: {r}");
    }
}

#[test]
fn explicit_three_step_system_matches_general_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (id, f) in frames() {
        let n = f.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let state = GeodesicState {
                position: random_vec(&mut rng, n, 1.5),
                velocity: random_vec(&mut rng, n, 1.0),
                s: 0.0,
            };
            let general = geodesic_rhs_general(&f, &state).position;
            let bars = conserved_momentum(&f, &state);
            let explicit = geodesic_rhs_threestep(&f, &state.position, &bars).unwrap();
            for (a, b) in general.iter().zip(&explicit) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-10, "{id}: {worst}");
    }
}

#[test]
fn unit_speed_is_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (id, f) in frames() {
        let v = unit(random_vec(&mut rng, f.dim(), 1.0));
        let t = integrate_geodesic(&f, &GeodesicState::at_identity(v), 10.0, 1e-9).unwrap();
        assert!(t.max_speed_drift < 1e-9, "{id}: {}", t.max_speed_drift);
    }
}

#[test]
fn horizontal_geodesics_project_to_geodesics() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (id, f) in frames() {
        let qf = f.quotient_frame().unwrap();
        let q = qf.dim();
        let mut v = unit(random_vec(&mut rng, q, 1.0));
        let qv = v.clone();
        v.resize(f.dim(), 0.0);
        let up = integrate_geodesic(&f, &GeodesicState::at_identity(v), 5.0, 1e-11).unwrap();
        let down = submersion_project(&f, &up);
        assert_eq!(down.vertical_component, 0.0);
        let below = integrate_geodesic(&qf, &GeodesicState::at_identity(qv), 5.0, 1e-11).unwrap();
        let last = down.trajectory.end();
        let other = below.end();
        let gap = last
            .position
            .iter()
            .zip(&other.position)
            .chain(last.velocity.iter().zip(&other.velocity))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap < 1e-6, "{id}: {gap}");
    }
}
