//! Nelder-Mead simplex maximization with restarts.
//!
//! Objectives are maximized. An objective may return `f64::NEG_INFINITY` to
//! reject a proposal (non-stationary AR polynomial, parameter outside its
//! box, ...). Such points rank below every finite point; their values never
//! enter centroid arithmetic because the centroid is built from coordinates
//! only. A `NaN` objective value is a hard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("starting point is empty")]
    EmptyStart,
    #[error("objective is -inf or non-finite at the starting point")]
    InfeasibleStart,
    #[error("objective returned NaN at {x:?}")]
    NotANumber { x: Vec<f64> },
    #[error("step vector has length {got}, expected {expected}")]
    StepLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Initial simplex edge, relative to `max(|x0_i|, 1)` per coordinate.
    pub init_step: f64,
    /// Function-value spread tolerance, relative to `max(|f_best|, 1)`.
    pub ftol: f64,
    /// Coordinate spread tolerance, relative to `max(|x_best_i|, 1)`.
    pub xtol: f64,
    pub max_iters: usize,
    /// Maximum number of restarts from the incumbent after convergence.
    pub restarts: usize,
    /// Seeds the sign pattern of restart simplices.
    pub seed: u64,
    pub record_trace: bool,
    /// Dimension-dependent expansion, contraction and shrink coefficients
    /// (`1 + 2/n`, `3/4 - 1/(2n)`, `1 - 1/n`), which hold up better than the
    /// standard ones beyond a handful of parameters.
    pub adaptive: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            init_step: 0.1,
            ftol: 1e-8,
            xtol: 1e-8,
            max_iters: 20_000,
            restarts: 2,
            seed: 0,
            record_trace: false,
            adaptive: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iters < 1 {
            return Err("max_iters must be at least 1".into());
        }
        if !(self.ftol > 0.0 && self.xtol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if !(self.init_step > 0.0) {
            return Err("init_step must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Incumbent value after every iteration, when requested.
    pub trace: Option<Vec<f64>>,
}

/// Maximizes `objective` from `x0` with per-coordinate steps
/// `cfg.init_step * max(|x0_i|, 1)`.
pub fn nelder_mead<F>(
    objective: F,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizerResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let steps: Vec<f64> = x0.iter().map(|v| cfg.init_step * v.abs().max(1.0)).collect();
    nelder_mead_with_steps(objective, x0, &steps, cfg)
}

/// Maximizes `objective` from `x0` using explicit initial simplex edges.
pub fn nelder_mead_with_steps<F>(
    mut objective: F,
    x0: &[f64],
    steps: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizerResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    if x0.is_empty() {
        return Err(OptimError::EmptyStart);
    }
    if steps.len() != x0.len() {
        return Err(OptimError::StepLength {
            expected: x0.len(),
            got: steps.len(),
        });
    }
    let mut evaluations = 0usize;
    // Internally minimize g = -f, with +inf as the rejection sentinel.
    let mut eval = |x: &[f64]| -> Result<f64, OptimError> {
        evaluations += 1;
        let f = objective(x);
        if f.is_nan() {
            return Err(OptimError::NotANumber { x: x.to_vec() });
        }
        Ok(if f == f64::INFINITY { f64::NEG_INFINITY } else { -f })
    };

    let g0 = eval(x0)?;
    if !g0.is_finite() {
        return Err(OptimError::InfeasibleStart);
    }

    let mut trace = cfg.record_trace.then(Vec::new);
    let mut best_x = x0.to_vec();
    let mut best_g = g0;
    let mut iterations = 0usize;
    let mut converged;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut run = 0usize;
    loop {
        let signs: Vec<f64> = if run == 0 {
            vec![1.0; x0.len()]
        } else {
            (0..x0.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        };
        let start_g = best_g;
        let outcome = simplex_run(
            &mut eval,
            &best_x,
            best_g,
            steps,
            &signs,
            cfg,
            cfg.max_iters - iterations,
            &mut trace,
        )?;
        iterations += outcome.iterations;
        converged = outcome.converged;
        if outcome.g < best_g {
            best_g = outcome.g;
            best_x = outcome.x;
        }
        run += 1;
        let improvement = start_g - best_g;
        let confirmed = run > 1 && improvement <= cfg.ftol * best_g.abs().max(1.0);
        if !converged || confirmed || run > cfg.restarts || iterations >= cfg.max_iters {
            break;
        }
    }

    Ok(OptimizerResult {
        x: best_x,
        fval: -best_g,
        iterations,
        evaluations,
        converged,
        trace,
    })
}

struct RunOutcome {
    x: Vec<f64>,
    g: f64,
    iterations: usize,
    converged: bool,
}

#[allow(clippy::too_many_arguments)]
fn simplex_run<E>(
    eval: &mut E,
    start: &[f64],
    start_g: f64,
    steps: &[f64],
    signs: &[f64],
    cfg: &OptimizerConfig,
    budget: usize,
    trace: &mut Option<Vec<f64>>,
) -> Result<RunOutcome, OptimError>
where
    E: FnMut(&[f64]) -> Result<f64, OptimError>,
{
    let n = start.len();
    let (expand, contract, shrink) = if cfg.adaptive && n > 1 {
        let nf = n as f64;
        (1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (EXPAND, CONTRACT, SHRINK)
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    pts.push(start.to_vec());
    vals.push(start_g);
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += signs[i] * steps[i];
        vals.push(eval(&p)?);
        pts.push(p);
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut iterations = 0usize;
    let mut converged = false;

    loop {
        // Stable sort keeps ties in index order.
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let b = order[0];
        let w = order[n];
        let s = order[n.saturating_sub(1)];

        if has_converged(&pts, &vals, &order, cfg) {
            converged = true;
            break;
        }
        if iterations >= budget {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |coef: f64, from: &[f64], out: &mut [f64]| {
            for ((o, c), f) in out.iter_mut().zip(&centroid).zip(from) {
                *o = c + coef * (c - f);
            }
        };

        along(REFLECT, &pts[w], &mut trial);
        let g_r = eval(&trial)?;
        if g_r < vals[b] {
            let reflected = trial.clone();
            along(expand, &pts[w], &mut trial);
            let g_e = eval(&trial)?;
            if g_e < g_r {
                pts[w].copy_from_slice(&trial);
                vals[w] = g_e;
            } else {
                pts[w] = reflected;
                vals[w] = g_r;
            }
        } else if g_r < vals[s] {
            pts[w].copy_from_slice(&trial);
            vals[w] = g_r;
        } else {
            let accepted = if g_r < vals[w] {
                let reflected = trial.clone();
                for ((t, c), r) in trial.iter_mut().zip(&centroid).zip(&reflected) {
                    *t = c + contract * (r - c);
                }
                let g_c = eval(&trial)?;
                (g_c <= g_r).then_some(g_c)
            } else {
                along(-contract, &pts[w], &mut trial);
                let g_c = eval(&trial)?;
                (g_c < vals[w]).then_some(g_c)
            };
            match accepted {
                Some(g_c) => {
                    pts[w].copy_from_slice(&trial);
                    vals[w] = g_c;
                }
                None => {
                    let anchor = pts[b].clone();
                    for &i in &order[1..] {
                        for (v, a) in pts[i].iter_mut().zip(&anchor) {
                            *v = a + shrink * (*v - a);
                        }
                        vals[i] = eval(&pts[i])?;
                    }
                }
            }
        }

        if let Some(t) = trace.as_mut() {
            let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
            t.push(-best);
        }
    }

    let b = order[0];
    Ok(RunOutcome {
        x: pts[b].clone(),
        g: vals[b],
        iterations,
        converged,
    })
}

fn has_converged(pts: &[Vec<f64>], vals: &[f64], order: &[usize], cfg: &OptimizerConfig) -> bool {
    let b = order[0];
    let w = order[order.len() - 1];
    let spread = vals[w] - vals[b];
    if !(spread <= cfg.ftol * vals[b].abs().max(1.0)) {
        return false;
    }
    let best = &pts[b];
    pts.iter().all(|p| {
        p.iter()
            .zip(best)
            .all(|(v, c)| (v - c).abs() <= cfg.xtol * c.abs().max(1.0))
    })
}

/// Central finite-difference Hessian of `f` at `x` with step `h`.
pub fn hessian_fd<F>(mut f: F, x: &[f64], h: f64) -> nalgebra::DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    let mut hess = nalgebra::DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut g = |di: f64, dj: f64| {
                y[i] = x[i] + di;
                y[j] = x[j] + dj;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Number of near-zero curvature directions of a Hessian: eigenvalues whose
/// magnitude is below `rel` times the largest one (all of them when the
/// Hessian is numerically zero or not finite).
pub fn flat_directions(hess: &nalgebra::DMatrix<f64>, rel: f64) -> usize {
    if hess.iter().any(|v| !v.is_finite()) {
        return hess.nrows();
    }
    let eig = hess.clone().symmetric_eigen().eigenvalues;
    let top = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if top < 1e-8 {
        return hess.nrows();
    }
    eig.iter().filter(|v| v.abs() < rel * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let cfg = OptimizerConfig::default();
        let r = nelder_mead(|x| -(x[0] * x[0] + x[1] * x[1]), &[1.0, 1.0], &cfg).unwrap();
        assert!(r.converged);
        assert!(r.x.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x);
        assert!(r.fval.abs() < 1e-10);
        assert!(r.evaluations >= r.iterations);
    }

    #[test]
    fn one_dimensional() {
        let cfg = OptimizerConfig::default();
        let r = nelder_mead(|x| -(x[0] - 2.0).powi(2), &[0.0], &cfg).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let cfg = OptimizerConfig {
            max_iters: 50_000,
            ..Default::default()
        };
        let r = nelder_mead(
            |x| -(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            &[-1.2, 1.0],
            &cfg,
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sentinel_values_are_worst_rank() {
        // Feasible region x > 0; the maximum sits on the boundary side.
        let cfg = OptimizerConfig::default();
        let r = nelder_mead(
            |x| if x[0] <= 0.5 { f64::NEG_INFINITY } else { -(x[0] - 0.4).powi(2) },
            &[2.0],
            &cfg,
        )
        .unwrap();
        assert!(r.fval.is_finite());
        assert!(r.x[0] > 0.5 && r.x[0] < 0.5 + 1e-6);
    }

    #[test]
    fn start_errors() {
        let cfg = OptimizerConfig::default();
        assert_eq!(
            nelder_mead(|_| f64::NEG_INFINITY, &[0.0], &cfg).unwrap_err(),
            OptimError::InfeasibleStart
        );
        assert!(matches!(
            nelder_mead(|x| if x[0] > 0.05 { f64::NAN } else { -x[0] * x[0] }, &[0.0], &cfg),
            Err(OptimError::NotANumber { .. })
        ));
        assert_eq!(
            nelder_mead(|_| 0.0, &[], &cfg).unwrap_err(),
            OptimError::EmptyStart
        );
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let cfg = OptimizerConfig {
            max_iters: 3,
            restarts: 0,
            ..Default::default()
        };
        let r = nelder_mead(|x| -(x[0] * x[0] + x[1] * x[1]), &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(r.iterations, 3);
        assert!(!r.converged);
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let cfg = OptimizerConfig {
            record_trace: true,
            seed: 7,
            ..Default::default()
        };
        let f = |x: &[f64]| -((x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + x[0] * x[1]);
        let a = nelder_mead(f, &[0.3, 0.3], &cfg).unwrap();
        let b = nelder_mead(f, &[0.3, 0.3], &cfg).unwrap();
        let ta = a.trace.clone().unwrap();
        assert_eq!(ta.len(), a.iterations);
        assert!(ta.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a, b);
        assert!(a.fval >= *ta.last().unwrap());
    }
}
