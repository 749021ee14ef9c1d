//! Precision of a classifier on target profiles, calibration of the penalty
//! `c` against a human precision level, and simulated participants.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::appraisal::AppraisalVector;
use crate::scherer::Emotion;
use crate::seed;
use crate::svm::{SvmError, SvmModel, TrainingSet};

/// An appraisal profile and the emotion it is meant to elicit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub vector: AppraisalVector,
    pub emotion: Emotion,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("target precision {target} outside the achievable range [{min}, {max}] of the grid")]
    OutOfRange { target: f64, min: f64, max: f64 },
    #[error("calibration grid must hold positive values spanning at least two decades")]
    BadGrid,
    #[error("precision statistics must lie in [0, 1] (mean {mean}, variance {var})")]
    BadPrecision { mean: f64, var: f64 },
    #[error("no targets given")]
    NoTargets,
    #[error("target emotion {0} is not a class of the model")]
    UnknownTarget(Emotion),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// Mean intensity assigned to each target's emotion.
pub fn model_precision(model: &SvmModel, targets: &[Target]) -> Result<f64, ClassifierError> {
    if targets.is_empty() {
        return Err(ClassifierError::NoTargets);
    }
    let mut sum = 0.0;
    for t in targets {
        let d = model.predict_intensities(&t.vector);
        sum += *d.get(&t.emotion).ok_or(ClassifierError::UnknownTarget(t.emotion))?;
    }
    Ok(sum / targets.len() as f64)
}

/// `n` values log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// 1e-4 to 1e-1 at eight points per decade.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-4, 1e-1, 25)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub grid: Vec<f64>,
    /// Fold seed shared by every probe model.
    pub seed: u64,
    /// Extra probes spent narrowing the bracket around the target.
    pub refine_steps: usize,
    /// Refinement stops once a probe is this close to the target.
    pub refine_tolerance: f64,
    /// Relative tolerance for the variance match.
    pub var_tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { grid: default_grid(), seed: 0, refine_steps: 8, refine_tolerance: 0.005, var_tolerance: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c_mean: f64,
    pub c_var: f64,
    /// Probed (c, precision) points, sorted by c.
    pub precision_curve: Vec<(f64, f64)>,
    /// Measured precision of the model trained at `c_mean`.
    pub precision_at_c_mean: f64,
    pub target_mean: f64,
    pub target_var: f64,
    /// Precision variance implied by `c_var` through the curve.
    pub implied_var: f64,
    /// Whether `implied_var` is within the variance tolerance of the target.
    pub var_matched: bool,
    /// Set when the target lay outside the achievable range and the nearest
    /// end of the curve was used instead.
    #[serde(default)]
    pub clamped: bool,
}

impl CalibrationResult {
    pub fn c_std(&self) -> f64 {
        self.c_var.sqrt()
    }

    /// Curve value at `c`, linear in log c between probes and flat beyond.
    pub fn precision_at(&self, c: f64) -> f64 {
        interpolate(&self.precision_curve, c)
    }
}

fn interpolate(curve: &[(f64, f64)], c: f64) -> f64 {
    let first = curve[0];
    let last = curve[curve.len() - 1];
    if c <= first.0 {
        return first.1;
    }
    if c >= last.0 {
        return last.1;
    }
    let k = curve.partition_point(|&(x, _)| x <= c);
    let (c0, p0) = curve[k - 1];
    let (c1, p1) = curve[k];
    let w = (c.ln() - c0.ln()) / (c1.ln() - c0.ln());
    p0 + w * (p1 - p0)
}

fn log_interp_c(a: (f64, f64), b: (f64, f64), target: f64) -> f64 {
    if (b.1 - a.1).abs() < f64::EPSILON {
        return a.0;
    }
    let w = ((target - a.1) / (b.1 - a.1)).clamp(0.0, 1.0);
    (a.0.ln() + w * (b.0.ln() - a.0.ln())).exp()
}

/// Picks `c_mean` whose model precision on `targets` best matches
/// `human_mean`, then a spread `c_var` under which the precision variance
/// matches `human_var`.
pub fn calibrate_c(
    set: &TrainingSet,
    targets: &[Target],
    human_mean: f64,
    human_var: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult, ClassifierError> {
    let mut curve = probe_grid(set, targets, opts)?;
    let (min, max) = achievable(&curve);
    if human_mean < min - 1e-12 || human_mean > max + 1e-12 {
        return Err(ClassifierError::OutOfRange { target: human_mean, min, max });
    }
    finish(set, targets, human_mean, human_var, opts, &mut curve, false)
}

/// As [`calibrate_c`], but a target outside the achievable range is moved
/// to the nearest end of the range and the result is flagged `clamped`.
pub fn calibrate_c_nearest(
    set: &TrainingSet,
    targets: &[Target],
    human_mean: f64,
    human_var: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult, ClassifierError> {
    let mut curve = probe_grid(set, targets, opts)?;
    let (min, max) = achievable(&curve);
    let clamped = human_mean < min || human_mean > max;
    let mut res = finish(set, targets, human_mean.clamp(min, max), human_var, opts, &mut curve, clamped)?;
    res.target_mean = human_mean;
    Ok(res)
}

fn achievable(curve: &[(f64, f64)]) -> (f64, f64) {
    curve.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, p)| (lo.min(p), hi.max(p)))
}

fn probe_grid(set: &TrainingSet, targets: &[Target], opts: &CalibrationOptions) -> Result<Vec<(f64, f64)>, ClassifierError> {
    if targets.is_empty() {
        return Err(ClassifierError::NoTargets);
    }
    let mut grid: Vec<f64> = opts.grid.clone();
    if grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(ClassifierError::BadGrid);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 || grid[grid.len() - 1] / grid[0] < 100.0 * (1.0 - 1e-9) {
        return Err(ClassifierError::BadGrid);
    }
    grid.par_iter()
        .map(|&c| Ok((c, model_precision(&set.train(c, opts.seed)?, targets)?)))
        .collect()
}

fn finish(
    set: &TrainingSet,
    targets: &[Target],
    target: f64,
    human_var: f64,
    opts: &CalibrationOptions,
    curve: &mut Vec<(f64, f64)>,
    clamped: bool,
) -> Result<CalibrationResult, ClassifierError> {
    if !(0.0..=1.0).contains(&target) || !(0.0..=1.0).contains(&human_var) {
        return Err(ClassifierError::BadPrecision { mean: target, var: human_var });
    }
    // closest grid point; earliest wins ties
    let best = |curve: &[(f64, f64)]| {
        (0..curve.len())
            .min_by(|&a, &b| (curve[a].1 - target).abs().total_cmp(&(curve[b].1 - target).abs()))
            .expect("non-empty curve")
    };
    let k = best(curve);
    let bracket = |curve: &[(f64, f64)], k: usize| -> Option<(usize, usize)> {
        let crosses = |a: usize, b: usize| (curve[a].1 - target) * (curve[b].1 - target) < 0.0;
        if k > 0 && crosses(k - 1, k) {
            Some((k - 1, k))
        } else if k + 1 < curve.len() && crosses(k, k + 1) {
            Some((k, k + 1))
        } else {
            None
        }
    };

    if (curve[k].1 - target).abs() > opts.refine_tolerance {
        if let Some((lo, hi)) = bracket(curve, k) {
            let (mut a, mut b) = (curve[lo], curve[hi]);
            for _ in 0..opts.refine_steps {
                let c = log_interp_c(a, b, target);
                if c <= a.0 || c >= b.0 {
                    break;
                }
                let p = model_precision(&set.train(c, opts.seed)?, targets)?;
                curve.push((c, p));
                if (p - target).abs() <= opts.refine_tolerance {
                    break;
                }
                if (a.1 - target) * (p - target) < 0.0 {
                    b = (c, p);
                } else {
                    a = (c, p);
                }
            }
            curve.sort_by(|x, y| x.0.total_cmp(&y.0));
        }
    }

    let k = best(curve);
    let (c_mean, precision_at_c_mean) = curve[k];
    let (sigma, implied_var) = fit_spread(curve, c_mean, human_var);
    let var_matched = if human_var == 0.0 {
        implied_var == 0.0
    } else {
        ((implied_var - human_var) / human_var).abs() <= opts.var_tolerance
    };
    Ok(CalibrationResult {
        c_mean,
        c_var: sigma * sigma,
        precision_curve: curve.clone(),
        precision_at_c_mean,
        target_mean: target,
        target_var: human_var,
        implied_var,
        var_matched,
        clamped,
    })
}

const SPREAD_QUANTILES: usize = 2000;

/// Variance of curve(c) for c ~ Normal(c_mean, sigma) truncated to c > 0,
/// by midpoint quantile quadrature.
pub fn implied_precision_var(curve: &[(f64, f64)], c_mean: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let std = Normal::standard();
    let lo = std.cdf(-c_mean / sigma);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for m in 0..SPREAD_QUANTILES {
        let u = lo + (1.0 - lo) * (m as f64 + 0.5) / SPREAD_QUANTILES as f64;
        let c = (c_mean + sigma * std.inverse_cdf(u)).max(f64::MIN_POSITIVE);
        let p = interpolate(curve, c);
        sum += p;
        sum2 += p * p;
    }
    let n = SPREAD_QUANTILES as f64;
    let mean = sum / n;
    (sum2 / n - mean * mean).max(0.0)
}

/// Smallest spread whose implied variance reaches `target_var`, or the
/// spread of largest implied variance if none does. Returns (sigma, var).
fn fit_spread(curve: &[(f64, f64)], c_mean: f64, target_var: f64) -> (f64, f64) {
    if target_var <= 0.0 {
        return (0.0, 0.0);
    }
    let scan: Vec<f64> = (0..=120).map(|r| c_mean * 10f64.powf(-3.0 + r as f64 * 0.05)).collect();
    let mut prev = 0.0;
    for &s in &scan {
        let v = implied_precision_var(curve, c_mean, s);
        if v >= target_var {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..60 {
                let mid = if lo > 0.0 { (lo * hi).sqrt() } else { hi / 2.0 };
                if implied_precision_var(curve, c_mean, mid) >= target_var {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return (hi, implied_precision_var(curve, c_mean, hi));
        }
        prev = s;
    }
    scan.iter()
        .map(|&s| (s, implied_precision_var(curve, c_mean, s)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty scan")
}

/// Penalties for `n` simulated participants: c ~ Normal(c_mean, sqrt(c_var))
/// redrawn until positive.
pub fn participant_cs(cal: &CalibrationResult, n: usize, seed: u64) -> Vec<f64> {
    let sigma = cal.c_std();
    (0..n as u64)
        .map(|k| {
            if sigma == 0.0 {
                return cal.c_mean;
            }
            let mut rng = seed::rng(seed::derive_indexed(seed, "participant", k));
            for _ in 0..10_000 {
                let z: f64 = StandardNormal.sample(&mut rng);
                let c = cal.c_mean + sigma * z;
                if c > 0.0 {
                    return c;
                }
            }
            cal.c_mean
        })
        .collect()
}

/// One classifier per simulated participant. All share the fold seed, so
/// equal penalties give equal models.
pub fn sample_participants(
    cal: &CalibrationResult,
    set: &TrainingSet,
    n: usize,
    seed: u64,
) -> Result<Vec<SvmModel>, ClassifierError> {
    participant_cs(cal, n, seed)
        .into_par_iter()
        .map(|c| Ok(set.train(c, seed)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> Vec<(f64, f64)> {
        vec![(1e-3, 0.2), (1e-2, 0.6), (1e-1, 0.8)]
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = default_grid();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[24] - 1e-1).abs() < 1e-15);
        assert!((g[8] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_linear_in_log_c() {
        let c = curve();
        assert_eq!(interpolate(&c, 1e-4), 0.2);
        assert_eq!(interpolate(&c, 1.0), 0.8);
        assert!((interpolate(&c, 10f64.powf(-2.5)) - 0.4).abs() < 1e-12);
        assert!((log_interp_c(c[0], c[1], 0.4) - 10f64.powf(-2.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_spread_has_zero_variance() {
        assert_eq!(implied_precision_var(&curve(), 1e-2, 0.0), 0.0);
        assert_eq!(fit_spread(&curve(), 1e-2, 0.0), (0.0, 0.0));
    }

    #[test]
    fn spread_matches_reachable_variance() {
        let c = curve();
        let (s, v) = fit_spread(&c, 1e-2, 0.01);
        assert!(s > 0.0);
        assert!((v - 0.01).abs() < 1e-4, "{v}");
        // the curve spans 0.6, so variance above 0.09 cannot be reached
        let (_, v) = fit_spread(&c, 1e-2, 0.2);
        assert!(v < 0.09 + 1e-9);
    }

    #[test]
    fn participant_draws() {
        let cal = CalibrationResult {
            c_mean: 0.01,
            c_var: 0.0,
            precision_curve: curve(),
            precision_at_c_mean: 0.6,
            target_mean: 0.6,
            target_var: 0.0,
            implied_var: 0.0,
            var_matched: true,
            clamped: false,
        };
        assert_eq!(participant_cs(&cal, 5, 1), vec![0.01; 5]);
        let wide = CalibrationResult { c_var: 1e-4, ..cal };
        let cs = participant_cs(&wide, 200, 1);
        assert!(cs.iter().all(|&c| c > 0.0));
        assert_eq!(cs, participant_cs(&wide, 200, 1));
        assert_ne!(cs, participant_cs(&wide, 200, 2));
    }
}
