mod common;

use appraise_rl::appraisal::AppraisalVector;
use appraise_rl::classifier::{default_grid, model_precision, Target};
use appraise_rl::scherer::{build_corpus, Emotion, LabeledSample};
use appraise_rl::svm::kernel::{Gram, Point, SubKernel};
use appraise_rl::svm::smo::{dual_objective, solve, SmoOptions};
use appraise_rl::svm::{argmax, TrainingSet};
use appraise_rl::{assets, seed};
use proptest::prelude::*;

const EXP1: [Emotion; 7] = [
    Emotion::Happiness,
    Emotion::Joy,
    Emotion::Pride,
    Emotion::Boredom,
    Emotion::Fear,
    Emotion::Sadness,
    Emotion::Shame,
];
const EXP3: [Emotion; 4] = [Emotion::Anxiety, Emotion::Despair, Emotion::Irritation, Emotion::Rage];

fn corpus(emotions: &[Emotion], n_per: usize, s: u64) -> Vec<LabeledSample> {
    build_corpus(&assets::patterns().unwrap(), &assets::level_mapping().unwrap(), emotions, n_per, s).unwrap()
}

fn point() -> impl Strategy<Value = Point> {
    [0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0]
}

fn labelled_points(max: usize) -> impl Strategy<Value = (Vec<Point>, Vec<f64>)> {
    (2..=max).prop_flat_map(|n| {
        (proptest::collection::vec(point(), n), proptest::collection::vec(any::<bool>(), n)).prop_map(|(p, mut l)| {
            // both classes present
            l[0] = true;
            l[1] = false;
            (p, l.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smo_matches_the_brute_force_oracle((points, y) in labelled_points(6), c in 0.01f64..10.0, gamma in 0.1f64..5.0) {
        let gram = Gram::new(&points, gamma);
        let idx: Vec<usize> = (0..points.len()).collect();
        let k = SubKernel::new(&gram, &idx);
        let sol = solve(&k, &y, c, &SmoOptions::default()).unwrap();
        let dense: Vec<Vec<f64>> = (0..points.len()).map(|i| (0..points.len()).map(|j| gram.get(i, j)).collect()).collect();
        let (oracle, _) = common::brute_force_qp(&dense, &y, c);
        let direct = dual_objective(&k, &y, &sol.alpha);
        prop_assert!((direct - oracle).abs() <= 1e-4, "smo {direct} oracle {oracle}");
        prop_assert!((sol.objective - direct).abs() <= 1e-9);
        for &a in &sol.alpha {
            prop_assert!(a >= -1e-6 && a <= c + 1e-6);
        }
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(eq.abs() <= 1e-6);
    }

    #[test]
    fn smo_duals_are_feasible((points, y) in labelled_points(40), c in 0.001f64..100.0) {
        let gram = Gram::new(&points, 1.5);
        let idx: Vec<usize> = (0..points.len()).collect();
        let sol = solve(&SubKernel::new(&gram, &idx), &y, c, &SmoOptions::default()).unwrap();
        for &a in &sol.alpha {
            prop_assert!(a >= 0.0 && a <= c);
        }
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(eq.abs() <= 1e-6, "{eq}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn intensities_are_normalised_and_equivariant(
        s in any::<u64>(),
        c in 0.001f64..5.0,
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        probe in proptest::collection::vec(point(), 5),
    ) {
        let classes = [Emotion::Fear, Emotion::Joy, Emotion::Boredom];
        let base = corpus(&classes, 40, s);
        let relabel = |e: Emotion| classes[perm[classes.iter().position(|x| *x == e).unwrap()]];
        let renamed: Vec<LabeledSample> = base.iter().map(|x| LabeledSample { vector: x.vector, label: relabel(x.label) }).collect();
        let m1 = TrainingSet::new(&base, None).unwrap().train(c, 9).unwrap();
        let m2 = TrainingSet::new(&renamed, None).unwrap().train(c, 9).unwrap();
        for p in probe {
            let v = AppraisalVector::from_array(p);
            let d1 = m1.predict_intensities(&v);
            let d2 = m2.predict_intensities(&v);
            prop_assert!((d1.values().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(d1.values().all(|x| (0.0..=1.0).contains(x)));
            for (e, p1) in &d1 {
                let p2 = d2[&relabel(*e)];
                prop_assert!((p1 - p2).abs() < 5e-3, "{e}: {p1} vs {p2}");
            }
        }
    }
}

#[test]
fn experiment_one_corpus_is_learnable() {
    let train = corpus(&EXP1, 500, seed::derive(0, "corpus"));
    let test = corpus(&EXP1, 100, 12345);
    let model = TrainingSet::new(&train, None).unwrap().train(1.0, 0).unwrap();
    let correct = test.iter().filter(|x| model.predict(&x.vector) == x.label).count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.9, "held-out accuracy {acc}");
}

#[test]
fn reference_profiles_are_classified_as_their_emotion() {
    let set3 = TrainingSet::new(&corpus(&EXP3, 500, 3), None).unwrap();
    let m3 = set3.train(0.014, 3).unwrap();
    let despair = m3.predict_intensities(&AppraisalVector::new(0.81, 1.0, 0.0, 0.0));
    let anxiety = m3.predict_intensities(&AppraisalVector::new(0.2, 1.0, 0.0, 0.0));
    assert_eq!(argmax(&despair), Some(Emotion::Despair));
    assert_eq!(argmax(&anxiety), Some(Emotion::Anxiety));

    let set1 = TrainingSet::new(&corpus(&EXP1, 500, 1), None).unwrap();
    let m1 = set1.train(0.014, 1).unwrap();
    assert_eq!(m1.predict(&AppraisalVector::new(0.8, 1.0, 0.0, 0.0)), Emotion::Fear);
}

#[test]
fn precision_rises_with_c_on_the_experiment_one_corpus() {
    // fixed reference profiles, so the check does not depend on training noise
    let targets: Vec<Target> = [
        (Emotion::Happiness, [0.0, 0.67, 0.83, 0.95]),
        (Emotion::Joy, [0.8, 1.0, 1.0, 0.0]),
        (Emotion::Pride, [0.5, 1.0, 1.0, 0.1]),
        (Emotion::Boredom, [0.0, 0.0, 0.5, 0.6]),
        (Emotion::Fear, [0.8, 1.0, 0.0, 0.0]),
        (Emotion::Sadness, [0.2, 1.0, 0.0, 0.0]),
        (Emotion::Shame, [0.79, 1.0, 0.0, 0.5]),
    ]
    .into_iter()
    .map(|(emotion, v)| Target { vector: AppraisalVector::from_array(v), emotion })
    .collect();
    let set = TrainingSet::new(&corpus(&EXP1, 500, seed::derive(0, "corpus")), None).unwrap();
    let fold_seed = seed::derive(0, "folds");
    let mut last = f64::NEG_INFINITY;
    for c in default_grid() {
        let p = model_precision(&set.train(c, fold_seed).unwrap(), &targets).unwrap();
        assert!(p >= last - 0.02, "precision fell to {p} at c = {c} (was {last})");
        last = last.max(p);
    }
}

#[test]
fn uniform_predictions_give_chance_precision() {
    // tiny c leaves decision values near zero and sigmoids at the prior
    let set = TrainingSet::new(&corpus(&EXP1, 100, 5), None).unwrap();
    let model = set.train(1e-7, 5).unwrap();
    let targets: Vec<Target> = EXP1.iter().map(|&e| Target { vector: AppraisalVector::new(0.5, 0.5, 0.5, 0.5), emotion: e }).collect();
    let p = model_precision(&model, &targets).unwrap();
    assert!((p - 1.0 / 7.0).abs() < 1e-6, "{p}");
}
