//! Central finite-difference verification of recorded gradients.
//!
//! Each sampled coordinate is probed with forward and backward one-sided
//! differences at steps `h` and `h / 10`. Unless both pairs agree with each
//! other and the two central estimates agree, the step is shrunk (up to two
//! times by 10x); a coordinate that stays non-smooth sits on a kink and is
//! reported as skipped rather than compared.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Graph, Result, Tensor, Var};

#[derive(Clone, Debug)]
pub struct FdOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates probed; all of them when the tensor is smaller.
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor for the relative error of near-zero gradients.
    pub floor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            samples: 32,
            seed: 0,
            floor: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    /// Flat indices skipped as non-smooth points.
    pub skipped: Vec<usize>,
    pub max_rel_error: f64,
    /// Flat index attaining `max_rel_error`.
    pub worst: Option<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for FdReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} checked={} skipped={} max_rel_error={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.checked,
            self.skipped.len(),
            self.max_rel_error,
            self.tolerance
        )?;
        if !self.skipped.is_empty() {
            write!(f, " (non-smooth point skipped)")?;
        }
        Ok(())
    }
}

/// Compares `analytic` against finite differences of `loss` around `at`.
pub fn finite_diff_check(
    loss: impl Fn(&Tensor) -> Result<f64>,
    at: &Tensor,
    analytic: &Tensor,
    opts: &FdOptions,
) -> Result<FdReport> {
    assert!(opts.step > 0.0, "finite-difference step must be positive");
    assert_eq!(at.shape(), analytic.shape(), "gradient shape differs from parameter");
    let n = at.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut indices: Vec<usize> = if n <= opts.samples {
        (0..n).collect()
    } else {
        sample(&mut rng, n, opts.samples).into_vec()
    };
    indices.sort_unstable();

    let f0 = loss(at)?;
    let mut report = FdReport {
        checked: 0,
        skipped: Vec::new(),
        max_rel_error: 0.0,
        worst: None,
        tolerance: opts.tolerance,
        passed: false,
    };
    let probe = |i: usize, delta: f64| -> Result<f64> {
        let mut data = at.data().to_vec();
        data[i] += delta;
        loss(&Tensor::new(at.shape(), data)?)
    };
    for &i in &indices {
        let mut estimate = None;
        let mut h = opts.step;
        let sides = |h: f64| -> Result<(f64, f64)> { Ok(((probe(i, h)? - f0) / h, (f0 - probe(i, -h)?) / h)) };
        let (mut fwd, mut bwd) = sides(h)?;
        for _ in 0..3 {
            let (fwd_fine, bwd_fine) = sides(0.1 * h)?;
            let central = 0.5 * (fwd + bwd);
            let fine = 0.5 * (fwd_fine + bwd_fine);
            let scale = fwd.abs().max(bwd.abs()).max(opts.floor);
            if (fwd - bwd).abs() <= opts.tolerance * scale && (central - fine).abs() <= opts.tolerance * scale {
                estimate = Some(central);
                break;
            }
            (fwd, bwd, h) = (fwd_fine, bwd_fine, 0.1 * h);
        }
        let Some(numeric) = estimate else {
            report.skipped.push(i);
            continue;
        };
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(i);
        }
    }
    report.passed = report.checked > 0 && report.max_rel_error <= opts.tolerance;
    Ok(report)
}

/// Records `build` on a fresh graph with `at` as the parameter, takes the
/// analytic gradient, and checks it against finite differences of the same
/// expression.
pub fn check_gradient(
    build: impl for<'g> Fn(Var<'g>) -> Result<Var<'g>>,
    at: &Tensor,
    opts: &FdOptions,
) -> Result<FdReport> {
    let analytic = {
        let g = Graph::new();
        let p = g.param(at.clone());
        let loss = build(p)?;
        g.backward(loss, &[p])?.get(p).cloned().expect("requested")
    };
    finite_diff_check(
        |x| {
            let g = Graph::new();
            let loss = build(g.constant(x.clone()))?;
            let v = loss.value().item();
            Ok(v)
        },
        at,
        &analytic,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let at = Tensor::from_vec(vec![0.3, -1.2, 2.5, 0.7]);
        let report = check_gradient(
            |x| {
                let c = x.graph().constant(Tensor::from_vec(vec![1.0, 2.0, -1.0, 0.5]));
                x.sub(c)?.square()?.sum()
            },
            &at,
            &FdOptions::default(),
        )
        .unwrap();
        assert!(report.passed);
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error < 1e-6, "{report}");
    }

    #[test]
    fn clamp_at_edge_is_skipped() {
        let at = Tensor::from_vec(vec![1.0, 0.5]);
        let report = check_gradient(|x| x.clamp(0.0, 1.0)?.sum(), &at, &FdOptions::default()).unwrap();
        assert_eq!(report.skipped, vec![0]);
        assert_eq!(report.checked, 1);
        assert!(report.passed);
        assert!(report.to_string().contains("non-smooth point skipped"));
    }

    #[test]
    fn wrong_gradient_fails() {
        let at = Tensor::from_vec(vec![1.0, 2.0]);
        let wrong = Tensor::from_vec(vec![2.0, 5.0]);
        let report = finite_diff_check(
            |x| Ok(x.data().iter().map(|v| v * v).sum()),
            &at,
            &wrong,
            &FdOptions::default(),
        )
        .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, Some(1));
    }

    #[test]
    fn samples_at_least_32_coordinates() {
        let at = Tensor::from_fn2(10, 10, |y, x| (y * 10 + x) as f64 * 0.01);
        let report = check_gradient(|x| x.exp()?.mean(), &at, &FdOptions::default()).unwrap();
        assert_eq!(report.checked + report.skipped.len(), 32);
        assert!(report.passed, "{report}");
    }
}
