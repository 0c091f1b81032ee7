//! Monotone least-squares regression by pool-adjacent-violators, the
//! calibration map for market-implied probabilities.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsotonicError {
    #[error("need equal-length non-empty samples")]
    BadInput,
}

/// A fitted nondecreasing step function. Knots sit at the distinct
/// training inputs; evaluation between knots is stepwise-constant and
/// clamped at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    knots: Vec<(f64, f64)>,
}

impl IsotonicFit {
    /// Solves min Σ (y_i − f(x_i))² over nondecreasing f. Ties in x are
    /// averaged (weighted) before pooling, which is the exact solution
    /// of the tied problem.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self, IsotonicError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(IsotonicError::BadInput);
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());

        // collapse tied x to weighted points
        let mut points: Vec<(f64, f64, f64)> = Vec::new(); // (x, mean y, weight)
        for &i in &order {
            match points.last_mut() {
                Some((px, py, pw)) if *px == x[i] => {
                    *py = (*py * *pw + y[i]) / (*pw + 1.0);
                    *pw += 1.0;
                }
                _ => points.push((x[i], y[i], 1.0)),
            }
        }

        // PAVA over weighted blocks
        struct Block {
            sum_wy: f64,
            sum_w: f64,
            first: usize,
            last: usize,
        }
        impl Block {
            fn mean(&self) -> f64 {
                self.sum_wy / self.sum_w
            }
        }
        let mut blocks: Vec<Block> = Vec::with_capacity(points.len());
        for (idx, (_, py, pw)) in points.iter().enumerate() {
            blocks.push(Block {
                sum_wy: py * pw,
                sum_w: *pw,
                first: idx,
                last: idx,
            });
            while blocks.len() > 1 {
                let n = blocks.len();
                if blocks[n - 2].mean() > blocks[n - 1].mean() {
                    let top = blocks.pop().unwrap();
                    let prev = blocks.last_mut().unwrap();
                    prev.sum_wy += top.sum_wy;
                    prev.sum_w += top.sum_w;
                    prev.last = top.last;
                } else {
                    break;
                }
            }
        }

        let mut knots = Vec::with_capacity(points.len());
        for b in &blocks {
            let v = b.mean();
            for p in &points[b.first..=b.last] {
                knots.push((p.0, v));
            }
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Stepwise-constant evaluation: the fitted value of the greatest
    /// knot at or below `x`, clamped to the first knot below the range.
    pub fn predict(&self, x: f64) -> f64 {
        match self
            .knots
            .partition_point(|(kx, _)| *kx <= x)
            .checked_sub(1)
        {
            Some(i) => self.knots[i].1,
            None => self.knots[0].1,
        }
    }

    /// Training squared error against the original sample.
    pub fn training_sse(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| {
                let d = yi - self.predict(*xi);
                d * d
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn already_monotone_is_interpolated_exactly() {
        let x = vec![0.1, 0.4, 0.9];
        let y = vec![0.0, 0.5, 1.0];
        let fit = IsotonicFit::fit(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(fit.predict(*xi), *yi);
        }
    }

    #[test]
    fn violating_pair_is_pooled() {
        let fit = IsotonicFit::fit(&[0.3, 0.7], &[1.0, 0.0]).unwrap();
        assert_eq!(fit.predict(0.3), 0.5);
        assert_eq!(fit.predict(0.7), 0.5);
    }

    #[test]
    fn constant_labels_give_constant_fit() {
        let fit = IsotonicFit::fit(&[0.1, 0.5, 0.9], &[0.4, 0.4, 0.4]).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(fit.predict(x), 0.4);
        }
    }

    #[test]
    fn tied_inputs_are_averaged() {
        // f must be a function of x: tied x share one fitted value
        let fit = IsotonicFit::fit(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert_eq!(fit.predict(0.5), 0.5);
    }

    #[test]
    fn clamped_outside_range() {
        let fit = IsotonicFit::fit(&[0.4, 0.6], &[0.2, 0.8]).unwrap();
        assert_eq!(fit.predict(0.0), 0.2);
        assert_eq!(fit.predict(1.0), 0.8);
    }

    proptest! {
        /// Output is nondecreasing for every input.
        #[test]
        fn fit_is_nondecreasing(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let fit = IsotonicFit::fit(&x, &y).unwrap();
            for w in fit.knots().windows(2) {
                prop_assert!(w[0].1 <= w[1].1 + 1e-12);
            }
        }

        /// Least-squares optimality implies the fit never does worse
        /// than the identity map on the training sample.
        #[test]
        fn no_worse_than_identity(
            pairs in proptest::collection::vec((0.0f64..1.0, prop_oneof![Just(0.0), Just(1.0)]), 1..40)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let fit = IsotonicFit::fit(&x, &y).unwrap();
            let fitted_sse = fit.training_sse(&x, &y);
            let identity_sse: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(fitted_sse <= identity_sse + 1e-9);
        }
    }
}
