//! One-vs-one RBF SVM with Platt-scaled pairwise probabilities coupled into
//! a distribution over emotions.

pub mod coupling;
pub mod kernel;
pub mod platt;
pub mod smo;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appraisal::AppraisalVector;
use crate::scherer::{Emotion, LabeledSample};
use crate::seed;
use kernel::{rbf, Gram, Point, SubKernel};
use smo::SmoOptions;

/// Held-out folds used to fit each pairwise sigmoid.
pub const PLATT_FOLDS: usize = 5;
/// Pairwise probabilities are kept away from 0 and 1 before coupling.
pub const MIN_PAIR_PROB: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SvmError {
    #[error("degenerate corpus: {0}")]
    Degenerate(String),
    #[error("penalty c must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("kernel bandwidth must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("SMO did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
}

/// Binary classifier between `positive` and `negative`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub positive: Emotion,
    pub negative: Emotion,
    pub support_vectors: Vec<Point>,
    /// α_i y_i for each support vector.
    pub coefficients: Vec<f64>,
    pub rho: f64,
    pub prob_a: f64,
    pub prob_b: f64,
}

impl PairClassifier {
    pub fn decision(&self, x: &Point, gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf(sv, x, gamma))
            .sum::<f64>()
            - self.rho
    }

    /// P(positive | positive or negative).
    pub fn probability(&self, x: &Point, gamma: f64) -> f64 {
        platt::sigmoid_predict(self.decision(x, gamma), self.prob_a, self.prob_b)
            .clamp(MIN_PAIR_PROB, 1.0 - MIN_PAIR_PROB)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<Emotion>,
    pub gamma: f64,
    pub c: f64,
    /// Pairs (i, j), i < j, in class order.
    pub pairs: Vec<PairClassifier>,
}

/// Intensity per emotion; sums to 1.
pub type EmotionDistribution = BTreeMap<Emotion, f64>;

impl SvmModel {
    pub fn predict_intensities(&self, v: &AppraisalVector) -> EmotionDistribution {
        let x = v.to_array();
        let k = self.classes.len();
        let mut r = vec![vec![0.0; k]; k];
        let mut pairs = self.pairs.iter();
        for i in 0..k {
            for j in i + 1..k {
                let p = pairs.next().expect("one classifier per pair").probability(&x, self.gamma);
                r[i][j] = p;
                r[j][i] = 1.0 - p;
            }
        }
        let probs = coupling::multiclass_probability(&r);
        self.classes.iter().copied().zip(probs).collect()
    }

    pub fn predict(&self, v: &AppraisalVector) -> Emotion {
        argmax(&self.predict_intensities(v)).expect("model has classes")
    }

    pub fn n_support(&self) -> usize {
        self.pairs.iter().map(|p| p.support_vectors.len()).sum()
    }
}

/// Emotion with the largest intensity; ties go to the earlier emotion.
pub fn argmax(d: &EmotionDistribution) -> Option<Emotion> {
    d.iter()
        .fold(None, |best: Option<(Emotion, f64)>, (&e, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((e, p)),
        })
        .map(|(e, _)| e)
}

/// A corpus with its kernel matrix precomputed, for training many models
/// that differ only in `c` or seed.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    points: Vec<Point>,
    labels: Vec<Emotion>,
    classes: Vec<Emotion>,
    by_class: Vec<Vec<usize>>,
    gamma: f64,
    gram: Arc<Gram>,
    smo: SmoOptions,
}

impl TrainingSet {
    /// `gamma = None` uses [`kernel::scale_gamma`] on the corpus.
    pub fn new(corpus: &[LabeledSample], gamma: Option<f64>) -> Result<Self, SvmError> {
        let mut classes: Vec<Emotion> = corpus.iter().map(|s| s.label).collect();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(SvmError::Degenerate("need at least two classes".into()));
        }
        let by_class: Vec<Vec<usize>> = classes
            .iter()
            .map(|c| (0..corpus.len()).filter(|&i| corpus[i].label == *c).collect())
            .collect();
        if let Some((c, _)) = classes.iter().zip(&by_class).find(|(_, idx)| idx.len() < 2) {
            return Err(SvmError::Degenerate(format!("class {c} has fewer than two samples")));
        }
        let points: Vec<Point> = corpus.iter().map(|s| s.vector.to_array()).collect();
        let gamma = gamma.unwrap_or_else(|| kernel::scale_gamma(&points));
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SvmError::InvalidGamma(gamma));
        }
        let gram = Arc::new(Gram::new(&points, gamma));
        Ok(Self {
            points,
            labels: corpus.iter().map(|s| s.label).collect(),
            classes,
            by_class,
            gamma,
            gram,
            smo: SmoOptions::default(),
        })
    }

    pub fn with_smo_options(mut self, smo: SmoOptions) -> Self {
        self.smo = smo;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn classes(&self) -> &[Emotion] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> &[Emotion] {
        &self.labels
    }

    /// Trains every pairwise classifier and its sigmoid. `seed` fixes the
    /// fold assignment used for the sigmoid fit.
    pub fn train(&self, c: f64, seed: u64) -> Result<SvmModel, SvmError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(SvmError::InvalidC(c));
        }
        let fold_of = self.fold_assignment(seed);
        let k = self.classes.len();
        let pair_ids: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
        let pairs = pair_ids
            .into_par_iter()
            .map(|(i, j)| self.train_pair(i, j, c, &fold_of))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SvmModel { classes: self.classes.clone(), gamma: self.gamma, c, pairs })
    }

    /// Fold index per corpus sample, from one seeded permutation.
    fn fold_assignment(&self, seed: u64) -> Vec<usize> {
        let n = self.points.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(seed::derive(seed, "platt-folds")));
        let mut fold_of = vec![0; n];
        for (rank, &idx) in perm.iter().enumerate() {
            fold_of[idx] = rank * PLATT_FOLDS / n;
        }
        fold_of
    }

    fn train_pair(&self, i: usize, j: usize, c: f64, fold_of: &[usize]) -> Result<PairClassifier, SvmError> {
        let mut idx: Vec<usize> = self.by_class[i].iter().chain(&self.by_class[j]).copied().collect();
        idx.sort_unstable();
        let positive = self.classes[i];
        let y: Vec<f64> = idx.iter().map(|&g| if self.labels[g] == positive { 1.0 } else { -1.0 }).collect();

        let (prob_a, prob_b) = self.fit_sigmoid(&idx, &y, c, fold_of)?;

        let sol = smo::solve(&SubKernel::new(&self.gram, &idx), &y, c, &self.smo)?;
        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(self.points[idx[t]]);
                coefficients.push(a * y[t]);
            }
        }
        Ok(PairClassifier {
            positive,
            negative: self.classes[j],
            support_vectors,
            coefficients,
            rho: sol.rho,
            prob_a,
            prob_b,
        })
    }

    /// Cross-validated decision values for the pair, then a sigmoid fit.
    fn fit_sigmoid(&self, idx: &[usize], y: &[f64], c: f64, fold_of: &[usize]) -> Result<(f64, f64), SvmError> {
        let mut dec = vec![0.0; idx.len()];
        for fold in 0..PLATT_FOLDS {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..idx.len()).partition(|&t| fold_of[idx[t]] != fold);
            if test.is_empty() {
                continue;
            }
            let n_pos = train.iter().filter(|&&t| y[t] > 0.0).count();
            let n_neg = train.len() - n_pos;
            if n_pos == 0 || n_neg == 0 {
                let v = match (n_pos, n_neg) {
                    (0, 0) => 0.0,
                    (_, 0) => 1.0,
                    _ => -1.0,
                };
                for &t in &test {
                    dec[t] = v;
                }
                continue;
            }
            let sub_idx: Vec<usize> = train.iter().map(|&t| idx[t]).collect();
            let sub_y: Vec<f64> = train.iter().map(|&t| y[t]).collect();
            let sol = smo::solve(&SubKernel::new(&self.gram, &sub_idx), &sub_y, c, &self.smo)?;
            let coef = sol.coefficients(&sub_y);
            for &t in &test {
                let row = self.gram.row(idx[t]);
                let s: f64 = sub_idx.iter().zip(&coef).filter(|(_, c)| **c != 0.0).map(|(&g, c)| c * row[g]).sum();
                dec[t] = s - sol.rho;
            }
        }
        let positive: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
        Ok(platt::sigmoid_train(&dec, &positive))
    }
}

/// Trains on `corpus` with penalty `c`; `gamma = None` picks the bandwidth
/// from the corpus.
pub fn train_svm(corpus: &[LabeledSample], c: f64, gamma: Option<f64>, seed: u64) -> Result<SvmModel, SvmError> {
    TrainingSet::new(corpus, gamma)?.train(c, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: [f64; 4], label: Emotion) -> LabeledSample {
        LabeledSample { vector: v.into(), label }
    }

    fn blobs(n: usize) -> Vec<LabeledSample> {
        let mut rng = seed::rng(1);
        use rand::Rng;
        let mut out = Vec::new();
        for _ in 0..n {
            let j = |rng: &mut rand_chacha::ChaCha8Rng| rng.random::<f64>() * 0.1;
            out.push(sample([j(&mut rng), j(&mut rng), 0.0, 0.0], Emotion::Fear));
            out.push(sample([0.9 + j(&mut rng), 0.9 + j(&mut rng), 0.0, 0.0], Emotion::Joy));
            out.push(sample([0.0, 0.9 + j(&mut rng), 0.9 + j(&mut rng), 0.5], Emotion::Rage));
        }
        out
    }

    #[test]
    fn separable_blobs_are_learned() {
        let corpus = blobs(20);
        let model = train_svm(&corpus, 10.0, None, 0).unwrap();
        assert_eq!(model.classes, vec![Emotion::Joy, Emotion::Fear, Emotion::Rage]);
        assert_eq!(model.pairs.len(), 3);
        for s in &corpus {
            assert_eq!(model.predict(&s.vector), s.label);
        }
        for p in &model.pairs {
            assert!(p.coefficients.iter().all(|c| c.abs() <= 10.0 + 1e-12));
        }
    }

    #[test]
    fn distributions_are_normalised() {
        let model = train_svm(&blobs(10), 1.0, None, 0).unwrap();
        for v in [[0.0; 4], [1.0; 4], [0.3, 0.7, 0.1, 0.9]] {
            let d = model.predict_intensities(&v.into());
            assert!((d.values().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.values().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn degenerate_corpora_rejected() {
        let one = vec![sample([0.0; 4], Emotion::Fear), sample([1.0; 4], Emotion::Fear)];
        assert!(matches!(train_svm(&one, 1.0, None, 0), Err(SvmError::Degenerate(_))));
        let thin = vec![sample([0.0; 4], Emotion::Fear), sample([1.0; 4], Emotion::Fear), sample([0.5; 4], Emotion::Joy)];
        assert!(matches!(train_svm(&thin, 1.0, None, 0), Err(SvmError::Degenerate(_))));
        assert!(matches!(train_svm(&blobs(3), -1.0, None, 0), Err(SvmError::InvalidC(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let model = train_svm(&blobs(5), 1.0, None, 3).unwrap();
        let back: SvmModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn argmax_prefers_earlier_on_ties() {
        let d: EmotionDistribution = [(Emotion::Joy, 0.5), (Emotion::Fear, 0.5)].into_iter().collect();
        assert_eq!(argmax(&d), Some(Emotion::Joy));
    }
}
