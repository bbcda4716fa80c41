use flexsim::dataset::{Dataset, Labels};
use flexsim::learners::{loss_and_gradient, train, LearnerKind, LearnerSpec, ParamVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;

fn spec(kind: LearnerKind, n_features: usize, l2: f64) -> LearnerSpec {
    LearnerSpec {
        kind,
        n_features,
        l2,
        lr: 1e-3,
        epochs: 1,
        batch_size: usize::MAX,
        seed: 0,
    }
}

fn random_instance(rng: &mut ChaCha8Rng, kind: LearnerKind, rows: usize, cols: usize) -> (ParamVector, Dataset, f64) {
    let x = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    let labels = match kind {
        LearnerKind::LinearRegression => Labels::Real((0..rows).map(|_| rng.sample(StandardNormal)).collect()),
        LearnerKind::LogisticRegression => Labels::Class((0..rows).map(|_| rng.random_range(0..2)).collect()),
    };
    let d = Dataset::from_arrays(x, Some(labels)).unwrap();
    let l2 = rng.random_range(0.0..1.0);
    let values = (0..=cols).map(|_| rng.sample(StandardNormal)).collect();
    let p = ParamVector::new(values, spec(kind, cols, l2).shape_tag()).unwrap();
    (p, d, l2)
}

fn loss_at(s: &LearnerSpec, p: &ParamVector, values: Vec<f64>, d: &Dataset) -> f64 {
    loss_and_gradient(s, &p.with_values(values).unwrap(), d).unwrap().0
}

/// Relative error with a floor on the denominator so coordinates whose
/// gradient is essentially zero are compared in absolute terms.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn check_gradients(kind: LearnerKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(20 + kind as u64);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (p, d, l2) = random_instance(&mut rng, kind, 8, 3);
        let s = spec(kind, 3, l2);
        let (_, grad) = loss_and_gradient(&s, &p, &d).unwrap();
        for j in 0..p.len() {
            let mut up = p.values().to_vec();
            let mut down = p.values().to_vec();
            up[j] += STEP;
            down[j] -= STEP;
            let fd = (loss_at(&s, &p, up, &d) - loss_at(&s, &p, down, &d)) / (2.0 * STEP);
            let e = rel_err(grad.values()[j], fd);
            worst = worst.max(e);
            assert!(e <= REL_TOL, "{kind:?} coordinate {j}: analytic {} vs fd {fd}", grad.values()[j]);
        }
    }
    eprintln!("{kind:?}: worst relative gradient error {worst:e}");
}

#[test]
fn linear_gradient_matches_finite_differences() {
    check_gradients(LearnerKind::LinearRegression);
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    check_gradients(LearnerKind::LogisticRegression);
}

#[test]
fn small_full_batch_step_never_increases_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [LearnerKind::LinearRegression, LearnerKind::LogisticRegression] {
        for _ in 0..30 {
            let (p, d, l2) = random_instance(&mut rng, kind, 12, 4);
            let s = spec(kind, 4, l2);
            let before = loss_and_gradient(&s, &p, &d).unwrap().0;
            let stepped = train(&s, &p, &d).unwrap();
            let after = loss_and_gradient(&s, &stepped, &d).unwrap().0;
            assert!(after <= before, "{kind:?}: {before} -> {after}");
        }
    }
}

#[test]
fn gradient_of_concatenation_is_mean_of_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in [LearnerKind::LinearRegression, LearnerKind::LogisticRegression] {
        let (p, d, l2) = random_instance(&mut rng, kind, 20, 3);
        let s = spec(kind, 3, l2);
        let parts: Vec<Dataset> = (0..4).map(|k| d.select_rows(&(k * 5..k * 5 + 5).collect::<Vec<_>>())).collect();
        let (_, whole) = loss_and_gradient(&s, &p, &d).unwrap();
        let mut mean = vec![0.0; p.len()];
        for part in &parts {
            let (_, g) = loss_and_gradient(&s, &p, part).unwrap();
            for (m, v) in mean.iter_mut().zip(g.values()) {
                *m += v / parts.len() as f64;
            }
        }
        for (a, b) in whole.values().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12, "{kind:?}: {a} vs {b}");
        }
    }
}

#[test]
fn training_is_a_pure_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (p, d, _) = random_instance(&mut rng, LearnerKind::LogisticRegression, 50, 3);
    let mut s = spec(LearnerKind::LogisticRegression, 3, 0.1);
    s.epochs = 4;
    s.batch_size = 7;
    s.seed = 99;
    assert_eq!(train(&s, &p, &d).unwrap(), train(&s, &p, &d).unwrap());
    s.seed = 100;
    assert_ne!(train(&s, &p, &d).unwrap(), train(&{ let mut t = s.clone(); t.seed = 99; t }, &p, &d).unwrap());
}
