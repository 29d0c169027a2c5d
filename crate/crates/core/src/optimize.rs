//! Derivative-free local minimization used by the synthesizers.

/// Result of a local minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Edge length of the initial simplex.
    pub step: f64,
    pub max_evaluations: usize,
    /// Stop once the spread of simplex values falls below this.
    pub value_tol: f64,
    /// Stop once the objective falls below this.
    pub target: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            step: 0.3,
            max_evaluations: 4000,
            value_tol: 1e-15,
            target: f64::NEG_INFINITY,
        }
    }
}

impl NelderMead {
    /// Adaptive Nelder–Mead (dimension-dependent coefficients).
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let nf = n.max(1) as f64;
        let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), v0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += self.step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        loop {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if n == 0
                || evals >= self.max_evaluations
                || best <= self.target
                || (worst - best).abs() <= self.value_tol
            {
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in simplex.iter().take(n) {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let vr = eval(&xr, &mut evals);
            if vr < simplex[0].1 {
                let xe = along(alpha * gamma);
                let ve = eval(&xe, &mut evals);
                simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
                continue;
            }
            if vr < simplex[n - 1].1 {
                simplex[n] = (xr, vr);
                continue;
            }
            let (xc, vc) = if vr < worst {
                let xc = along(alpha * rho);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            } else {
                let xc = along(-rho);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            };
            if vc < worst.min(vr) {
                simplex[n] = (xc, vc);
                continue;
            }
            // shrink toward the best vertex
            let x_best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, xi)| b + sigma * (xi - b))
                    .collect();
                let v = eval(&x, &mut evals);
                *vertex = (x, v);
            }
        }

        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            evaluations: evals,
        }
    }
}

/// Best of several restarts; ties go to the lowest restart index.
pub fn best_of<I>(results: I) -> Option<(usize, Minimum)>
where
    I: IntoIterator<Item = Minimum>,
{
    let mut best: Option<(usize, Minimum)> = None;
    for (i, m) in results.into_iter().enumerate() {
        if best.as_ref().map_or(true, |(_, b)| m.value < b.value) {
            best = Some((i, m));
        }
    }
    best
}
