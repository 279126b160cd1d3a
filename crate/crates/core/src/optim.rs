//! Bounded Nelder-Mead simplex minimizer.
//!
//! Standard reflection/expansion/contraction/shrink coefficients
//! (1, 2, 1/2, 1/2). Every trial point is clamped into the box before it is
//! evaluated. After convergence the simplex is rebuilt around the best vertex
//! and the search restarted, up to `restarts` times, while that keeps
//! improving the minimum.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Converged once the simplex diameter (max vertex distance to the best
    /// vertex, sup-norm) drops below this.
    pub xtol: f64,
    /// Converged once `f(worst) - f(best)` drops below this.
    pub ftol: f64,
    pub initial_step: f64,
    pub restarts: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            xtol: 1e-8,
            ftol: 1e-12,
            initial_step: 0.1,
            restarts: 2,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
    lower: f64,
    upper: f64,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &mut [f64]) -> f64 {
        for v in x.iter_mut() {
            *v = v.clamp(self.lower, self.upper);
        }
        self.evals += 1;
        let fx = (self.f)(x);
        if fx.is_nan() {
            f64::INFINITY
        } else {
            fx
        }
    }
}

pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut obj = Counted {
        f,
        evals: 0,
        lower: opts.lower,
        upper: opts.upper,
    };
    let mut best_x = x0.to_vec();
    let mut best_f = obj.eval(&mut best_x);
    if opts.max_iters == 0 || x0.is_empty() {
        return NelderMeadResult {
            x: best_x,
            fx: best_f,
            iterations: 0,
            evaluations: obj.evals,
            converged: opts.max_iters == 0,
        };
    }

    let mut iterations = 0;
    let mut converged;
    let mut restarts_left = opts.restarts;
    loop {
        let before = best_f;
        let (x, fx, its, conv) = run_simplex(&mut obj, &best_x, best_f, opts, opts.max_iters - iterations);
        iterations += its;
        converged = conv;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        let improved = before - best_f > opts.ftol;
        if !converged || !improved || restarts_left == 0 || iterations >= opts.max_iters {
            break;
        }
        restarts_left -= 1;
    }

    NelderMeadResult {
        x: best_x,
        fx: best_f,
        iterations,
        evaluations: obj.evals,
        converged,
    }
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x0: &[f64],
    f0: f64,
    opts: &NelderMeadOptions,
    budget: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    values.push(f0);
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        if v[i] > opts.upper {
            v[i] = x0[i] - opts.initial_step;
        }
        let fv = obj.eval(&mut v);
        simplex.push(v);
        values.push(fv);
    }

    let mut idx: Vec<usize> = (0..=dim).collect();
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut trial2 = vec![0.0; dim];
    let mut its = 0;
    let mut converged = false;

    loop {
        // stable order: ties keep lower vertex index first
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let best = idx[0];
        let worst = idx[dim];
        let second = idx[dim - 1];

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter <= opts.xtol || spread <= opts.ftol {
            converged = true;
            break;
        }
        if its >= budget {
            break;
        }
        its += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &k in &idx[..dim] {
            for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);

        let along = |out: &mut [f64], coef: f64, from: &[f64]| {
            for ((o, c), x) in out.iter_mut().zip(&centroid).zip(from) {
                *o = c + coef * (x - c);
            }
        };

        along(&mut trial, -1.0, &simplex[worst]);
        let fr = obj.eval(&mut trial);
        if fr < values[best] {
            along(&mut trial2, -2.0, &simplex[worst]);
            let fe = obj.eval(&mut trial2);
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }
        let (coef, bound) = if fr < values[worst] {
            (-0.5, fr)
        } else {
            (0.5, values[worst])
        };
        along(&mut trial2, coef, &simplex[worst]);
        let fc = obj.eval(&mut trial2);
        if fc < bound {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        let anchor = simplex[best].clone();
        for k in 0..=dim {
            if k == best {
                continue;
            }
            for (x, a) in simplex[k].iter_mut().zip(&anchor) {
                *x = a + 0.5 * (*x - a);
            }
            let mut v = std::mem::take(&mut simplex[k]);
            values[k] = obj.eval(&mut v);
            simplex[k] = v;
        }
    }

    let best = idx[0];
    (simplex[best].clone(), values[best], its, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            max_iters: 5000,
            ftol: 1e-20,
            xtol: 1e-12,
            ..Default::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let opts = NelderMeadOptions {
            max_iters: 0,
            ..Default::default()
        };
        let r = nelder_mead(rosenbrock, &[0.5, 0.5], &opts);
        assert_eq!(r.x, vec![0.5, 0.5]);
        assert_eq!(r.fx, rosenbrock(&[0.5, 0.5]));
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn respects_box() {
        let opts = NelderMeadOptions {
            lower: -1.0,
            upper: 1.0,
            ..Default::default()
        };
        let r = nelder_mead(|x| (x[0] - 5.0).powi(2) + x[1] * x[1], &[0.0, 0.3], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!(r.x.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn best_value_never_exceeds_start() {
        let start = [3.0, -2.0, 0.5];
        let f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>();
        let r = nelder_mead(f, &start, &NelderMeadOptions::default());
        assert!(r.fx <= f(&start));
    }
}
