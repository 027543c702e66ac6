//! Derivative-free simplex minimization (Nelder-Mead).
//!
//! Deterministic given the start point and step sizes; constraint handling
//! is the caller's business (penalties in the objective).

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex collapses below this size in every coordinate.
    pub x_tol: f64,
    /// Stop when the objective spread across the simplex falls below this.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            x_tol: 1e-7,
            f_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert_eq!(steps.len(), dim);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut scores: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        if scores[worst] - scores[best] <= opts.f_tol {
            converged = true;
            break;
        }
        let spread = (0..dim)
            .map(|d| {
                simplex
                    .iter()
                    .map(|p| (p[d] - simplex[best][d]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &idx in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[idx][d] / dim as f64;
            }
        }

        let reflected: Vec<f64> = (0..dim)
            .map(|d| centroid[d] + alpha * (centroid[d] - simplex[worst][d]))
            .collect();
        let f_r = eval(&reflected, &mut evals);

        if f_r < scores[best] {
            let expanded: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + gamma * (reflected[d] - centroid[d]))
                .collect();
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[worst] = expanded;
                scores[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                scores[worst] = f_r;
            }
        } else if f_r < scores[second_worst] {
            simplex[worst] = reflected;
            scores[worst] = f_r;
        } else {
            let contracted: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + rho * (simplex[worst][d] - centroid[d]))
                .collect();
            let f_c = eval(&contracted, &mut evals);
            if f_c < scores[worst] {
                simplex[worst] = contracted;
                scores[worst] = f_c;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for idx in 0..=dim {
                    if idx == best {
                        continue;
                    }
                    for d in 0..dim {
                        simplex[idx][d] = best_point[d] + sigma * (simplex[idx][d] - best_point[d]);
                    }
                    scores[idx] = eval(&simplex[idx], &mut evals);
                    if evals >= opts.max_evals {
                        break;
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=dim {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    NelderMeadResult {
        x: simplex[best].clone(),
        fx: scores[best],
        evaluations: evals,
        converged,
    }
}
