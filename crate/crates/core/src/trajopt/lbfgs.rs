//! Limited-memory quasi-Newton descent with Armijo backtracking over the
//! trajectory decision vector.

use super::cost::Problem;
use super::{PiecewiseTrajectory, TrajoptError};

#[derive(Debug, Clone, Copy, Default)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
}

const HISTORY: usize = 8;
const ARMIJO_C1: f64 = 1e-4;

/// Minimize the problem cost starting from `init`. The returned cost never
/// exceeds the initial cost; iteration count is capped by the parameters so
/// a planning cycle has a deterministic work bound.
pub fn optimize(
    problem: &Problem,
    init: &PiecewiseTrajectory,
) -> Result<(PiecewiseTrajectory, OptimizeReport), TrajoptError> {
    let mut z = problem.pack(init);
    let (mut f, mut g) = problem.cost_and_gradient(&z);
    if !f.is_finite() {
        return Err(TrajoptError::NonFiniteInit);
    }
    let mut report = OptimizeReport {
        iterations: 0,
        initial_cost: f,
        final_cost: f,
    };
    let params = problem_params(problem);
    let n = z.len();
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    for _ in 0..params.0 {
        let gnorm = g.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if gnorm < 1e-9 * f.abs().max(1.0) {
            break;
        }

        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|&v| -v).collect();
        if !s_hist.is_empty() {
            let k = s_hist.len();
            let mut alphas = vec![0.0; k];
            for i in (0..k).rev() {
                let a = rho_hist[i] * dot(&s_hist[i], &d);
                alphas[i] = a;
                axpy(&mut d, -a, &y_hist[i]);
            }
            let gamma = {
                let sy = dot(&s_hist[k - 1], &y_hist[k - 1]);
                let yy = dot(&y_hist[k - 1], &y_hist[k - 1]);
                if yy > 0.0 {
                    sy / yy
                } else {
                    1.0
                }
            };
            for v in d.iter_mut() {
                *v *= gamma;
            }
            for i in 0..k {
                let b = rho_hist[i] * dot(&y_hist[i], &d);
                axpy(&mut d, alphas[i] - b, &s_hist[i]);
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &d);
        }

        // Backtracking line search.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand = z.clone();
            axpy(&mut cand, alpha, &d);
            let fc = problem.cost(&cand);
            if fc.is_finite() && fc <= f + ARMIJO_C1 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((z_new, f_new)) = accepted else {
            break;
        };
        let (_, g_new) = {
            let (fv, gv) = problem.cost_and_gradient(&z_new);
            (fv, gv)
        };

        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            s[i] = z_new[i] - z[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }

        let rel_change = (f - f_new).abs() / f.abs().max(1.0);
        z = z_new;
        f = f_new;
        g = g_new;
        report.iterations += 1;
        if rel_change < params.1 {
            break;
        }
    }
    report.final_cost = f;
    Ok((problem.trajectory(&z), report))
}

fn problem_params(problem: &Problem) -> (usize, f64) {
    (problem.max_iters(), problem.tol())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}
