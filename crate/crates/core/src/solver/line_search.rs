use ndarray::Array2;

use crate::linalg::sq_norm;

/// Backtracking line search shared by every gradient block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub c: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            c: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Accepted {
    pub point: Array2<f64>,
    pub value: f64,
    pub step: f64,
}

impl LineSearch {
    /// Try `candidate(x - t g)` for `t = initial_step, initial_step*shrink, ...`
    /// and accept the first point with
    /// `f(new) <= f0 - (c / t) ‖new - x‖²`.
    ///
    /// For an identity `candidate` this is the Armijo condition
    /// `f0 - c t ‖g‖²`; with a projection it is its projected-gradient
    /// analogue. Returns `None` when every trial fails, leaving `x` as is.
    pub fn search<P, F>(
        &self,
        x: &Array2<f64>,
        f0: f64,
        g: &Array2<f64>,
        mut candidate: P,
        mut eval: F,
    ) -> Option<Accepted>
    where
        P: FnMut(Array2<f64>) -> Array2<f64>,
        F: FnMut(&Array2<f64>) -> f64,
    {
        if sq_norm(g) == 0.0 {
            return None;
        }
        let mut t = self.initial_step;
        for _ in 0..=self.max_backtracks {
            let mut trial = x.clone();
            trial.scaled_add(-t, g);
            let trial = candidate(trial);
            let value = eval(&trial);
            let moved = sq_norm(&(&trial - x));
            if value.is_finite() && value <= f0 - (self.c / t) * moved {
                return Some(Accepted {
                    point: trial,
                    value,
                    step: t,
                });
            }
            t *= self.shrink;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn armijo_on_quadratic() {
        // f(x) = 10 ‖x‖², gradient 20 x; step 1 overshoots, 1/16 = 0.0625 works
        let f = |x: &Array2<f64>| 10.0 * sq_norm(x);
        let x = array![[1.0, -2.0]];
        let g = &x * 20.0;
        let acc = LineSearch::default()
            .search(&x, f(&x), &g, |p| p, f)
            .unwrap();
        assert!(acc.value < f(&x));
        assert!(acc.step <= 0.0625 && acc.step > 0.0);
        assert_eq!(acc.step, 0.0625);
    }

    #[test]
    fn zero_gradient_is_rejected() {
        let x = array![[1.0]];
        let g = array![[0.0]];
        assert!(LineSearch::default()
            .search(&x, 0.0, &g, |p| p, |_| 0.0)
            .is_none());
    }

    #[test]
    fn gives_up_when_nothing_decreases() {
        let x = array![[0.0]];
        let g = array![[1.0]];
        let mut calls = 0;
        let res = LineSearch::default().search(
            &x,
            0.0,
            &g,
            |p| p,
            |_| {
                calls += 1;
                1.0
            },
        );
        assert!(res.is_none());
        assert_eq!(calls, 31);
    }
}
