//! Sequential minimal optimisation for the soft-margin SVM dual
//!
//!   min ½ αᵀQα − eᵀα   s.t. yᵀα = 0, 0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//!
//! using second-order working-set selection and no shrinking.

use super::kernel::SubKernel;
use super::SvmError;

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoOptions {
    /// Stopping tolerance on the maximal KKT violation.
    pub eps: f64,
    /// Iteration cap; `None` uses max(10⁷, 100·n).
    pub max_iter: Option<usize>,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self { eps: 1e-3, max_iter: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Offset: the decision value is Σ α_i y_i K(x_i, x) − rho.
    pub rho: f64,
    /// Dual objective ½ αᵀQα − eᵀα at the solution.
    pub objective: f64,
    pub iterations: usize,
}

impl SmoSolution {
    /// α_i y_i per point.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        self.alpha.iter().zip(y).map(|(a, y)| a * y).collect()
    }
}

/// Solves the dual for labels `y ∈ {−1, +1}`.
pub fn solve(k: &SubKernel<'_>, y: &[f64], c: f64, opts: &SmoOptions) -> Result<SmoSolution, SvmError> {
    let n = k.len();
    assert_eq!(n, y.len(), "label count must match kernel size");
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::InvalidC(c));
    }
    let max_iter = opts.max_iter.unwrap_or_else(|| (100 * n).max(10_000_000));
    let qd: Vec<f64> = (0..n).map(|i| k.get(i, i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut ki = vec![0.0; n];
    let mut kj = vec![0.0; n];

    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        // first index: maximal violation among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !is_upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if !is_lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        if i != usize::MAX {
            k.fill_row(i, &mut ki);
            let mut obj_min = f64::INFINITY;
            for t in 0..n {
                // y_i · Q_it = y_t · K_it
                let yq = y[t] * ki[t];
                if y[t] > 0.0 {
                    if !is_lower(alpha[t]) {
                        let gdiff = gmax + grad[t];
                        if grad[t] >= gmax2 {
                            gmax2 = grad[t];
                        }
                        if gdiff > 0.0 {
                            let quad = qd[i] + qd[t] - 2.0 * yq;
                            let obj = -(gdiff * gdiff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                j = t;
                                obj_min = obj;
                            }
                        }
                    }
                } else if !is_upper(alpha[t]) {
                    let gdiff = gmax - grad[t];
                    if -grad[t] >= gmax2 {
                        gmax2 = -grad[t];
                    }
                    if gdiff > 0.0 {
                        let quad = qd[i] + qd[t] + 2.0 * yq;
                        let obj = -(gdiff * gdiff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            j = t;
                            obj_min = obj;
                        }
                    }
                }
            }
        }
        if gmax + gmax2 < opts.eps || j == usize::MAX {
            break;
        }
        if iter >= max_iter {
            return Err(SvmError::NoConvergence { iterations: iter });
        }
        iter += 1;

        k.fill_row(j, &mut kj);
        let kij = ki[j];
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_ai, old_aj);
        if y[i] != y[j] {
            // Q_ij = −K_ij, so Q_ii + Q_jj + 2 Q_ij = K_ii + K_jj − 2 K_ij
            let mut quad = qd[i] + qd[j] - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let dai = ai - old_ai;
        let daj = aj - old_aj;
        // G_t += Q_ti Δα_i + Q_tj Δα_j
        let (yi, yj) = (y[i], y[j]);
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * dai + yj * kj[t] * daj);
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() / 2.0;
    Ok(SmoSolution { alpha, rho, objective, iterations: iter })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// ½ αᵀQα − eᵀα evaluated directly.
pub fn dual_objective(k: &SubKernel<'_>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::super::kernel::{Gram, Point};
    use super::*;

    fn setup(points: &[Point], gamma: f64) -> (Gram, Vec<usize>) {
        (Gram::new(points, gamma), (0..points.len()).collect())
    }

    #[test]
    fn two_points_closed_form() {
        // α1 = α2 = a minimises a²(1 − k) − 2a, so a = 1/(1 − k) when below C
        let pts = [[0.0; 4], [1.0, 0.0, 0.0, 0.0]];
        let (g, idx) = setup(&pts, 1.0);
        let k = SubKernel::new(&g, &idx);
        let y = [1.0, -1.0];
        let kk = g.get(0, 1);
        let s = solve(&k, &y, 100.0, &SmoOptions::default()).unwrap();
        let a = 1.0 / (1.0 - kk);
        assert!((s.alpha[0] - a).abs() < 1e-9, "{s:?} {a}");
        assert!((s.alpha[1] - a).abs() < 1e-9);
        assert!(s.rho.abs() < 1e-9);
        let small = solve(&k, &y, 0.5, &SmoOptions::default()).unwrap();
        assert_eq!(small.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn objective_tracks_direct_evaluation() {
        let pts = [[0.0; 4], [0.3, 0.1, 0.0, 0.0], [0.9, 0.8, 0.1, 0.0], [1.0, 1.0, 0.0, 0.2]];
        let (g, idx) = setup(&pts, 1.5);
        let k = SubKernel::new(&g, &idx);
        let y = [1.0, 1.0, -1.0, -1.0];
        let s = solve(&k, &y, 1.0, &SmoOptions::default()).unwrap();
        assert!((s.objective - dual_objective(&k, &y, &s.alpha)).abs() < 1e-10);
        let eq: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-12);
    }

    #[test]
    fn invalid_c() {
        let (g, idx) = setup(&[[0.0; 4], [1.0; 4]], 1.0);
        let k = SubKernel::new(&g, &idx);
        assert!(matches!(solve(&k, &[1.0, -1.0], 0.0, &SmoOptions::default()), Err(SvmError::InvalidC(_))));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let pts: Vec<Point> = (0..8).map(|i| [i as f64 / 8.0, 0.0, 0.0, 0.0]).collect();
        let (g, idx) = setup(&pts, 1.0);
        let k = SubKernel::new(&g, &idx);
        let y: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let opts = SmoOptions { eps: 1e-3, max_iter: Some(1) };
        assert!(matches!(solve(&k, &y, 10.0, &opts), Err(SvmError::NoConvergence { .. })));
    }
}
