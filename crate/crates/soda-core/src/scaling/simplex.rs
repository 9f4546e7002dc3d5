//! Derivative-free local minimization (Nelder–Mead) used by the parametric
//! loss-surface fit.
//!
//! Hand-rolled because the fit needs a deterministic, dependency-stable
//! optimizer: the multi-start procedure ranks candidate minima and breaks
//! ties by start order, so the exact iteration sequence is part of the
//! fit's reproducibility story.

/// Stopping rules and simplex construction parameters.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop when the simplex's objective spread falls below this.
    pub f_tol: f64,
    /// Stop when every vertex coordinate is within this of the best vertex.
    pub x_tol: f64,
    /// Initial per-coordinate displacement, relative to coordinate size.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> SimplexOptions {
        SimplexOptions {
            max_iter: 2_000,
            f_tol: 1e-13,
            x_tol: 1e-10,
            initial_step: 0.10,
        }
    }
}

/// Result of one local minimization.
#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with the standard reflection/expansion/
/// contraction/shrink coefficients (1, 2, 1/2, 1/2).
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &SimplexOptions,
) -> SimplexOutcome {
    let n = x0.len();
    assert!(n > 0, "cannot minimize over zero dimensions");

    // Initial simplex: x0 plus one displaced vertex per coordinate.
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = opts.initial_step * v[i].abs().max(1.0);
        v[i] += step;
        verts.push(v);
    }
    let mut fvals: Vec<f64> = verts.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        // Order vertices best..worst (stable: equal values keep their order,
        // which keeps the search deterministic).
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| {
            fvals[a]
                .partial_cmp(&fvals[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let best = idx[0];
        let worst = idx[n];
        let second_worst = idx[n - 1];

        let spread = fvals[worst] - fvals[best];
        let x_spread = verts
            .iter()
            .flat_map(|v| v.iter().zip(&verts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread.abs() <= opts.f_tol && x_spread <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (k, v) in verts.iter().enumerate() {
            if k == worst {
                continue;
            }
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c += vi;
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let f_reflected = f(&reflected);
        if f_reflected < fvals[best] {
            let expanded = blend(2.0);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                verts[worst] = expanded;
                fvals[worst] = f_expanded;
            } else {
                verts[worst] = reflected;
                fvals[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < fvals[second_worst] {
            verts[worst] = reflected;
            fvals[worst] = f_reflected;
            continue;
        }
        let contracted = if f_reflected < fvals[worst] {
            blend(0.5) // outside contraction
        } else {
            blend(-0.5) // inside contraction
        };
        let f_contracted = f(&contracted);
        if f_contracted < fvals[worst].min(f_reflected) {
            verts[worst] = contracted;
            fvals[worst] = f_contracted;
            continue;
        }
        // Shrink every vertex toward the best.
        let anchor = verts[best].clone();
        for (k, v) in verts.iter_mut().enumerate() {
            if k == best {
                continue;
            }
            for (vi, &ai) in v.iter_mut().zip(&anchor) {
                *vi = ai + 0.5 * (*vi - ai);
            }
            fvals[k] = f(v);
        }
    }

    let best = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap();
    SimplexOutcome {
        x: verts[best].clone(),
        fx: fvals[best],
        iterations,
        converged,
    }
}
