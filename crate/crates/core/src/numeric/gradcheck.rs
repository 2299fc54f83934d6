use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Max over coordinates of `|analytic - numeric| / max(1, |analytic|)`.
    pub max_rel_error: f64,
    /// Coordinate attaining the maximum.
    pub worst_index: usize,
    /// First coordinate where either side was not finite.
    pub non_finite_at: Option<usize>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite_at.is_none() && self.max_rel_error <= tol
    }
}

/// Check the tape gradient of a scalar function `f` at `point` using step `eps`.
///
/// `f` receives a fresh tape and the leaf holding the (possibly perturbed) point.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    let analytic = tape.backward(y)?.get_or_zeros(x, point.shape());

    let eval = |p: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p);
        let y = f(&mut tape, x)?;
        tape.value(y).item()
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        non_finite_at: None,
    };
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        if !numeric.is_finite() || !a.is_finite() {
            report.non_finite_at.get_or_insert(i);
            report.max_rel_error = f64::NAN;
            report.worst_index = i;
            continue;
        }
        let err = (a - numeric).abs() / a.abs().max(1.0);
        if report.non_finite_at.is_none() && err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let point = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let r = grad_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq, None)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let r = grad_check(
            |t, _x| Ok(t.constant(Tensor::scalar(4.0))),
            &Tensor::vector(vec![0.5, -1.0]),
            1e-5,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn nan_reported_with_index() {
        // x1 sits closer to 0 than eps, so only its minus-side probe hits log of a negative.
        let r = grad_check(
            |t, x| {
                let a = t.slice(x, 0, 0, 1)?;
                let b = t.slice(x, 0, 1, 2)?;
                let sq = t.mul(a, a)?;
                let l = t.log(b);
                let s = t.add(sq, l)?;
                t.sum(s, None)
            },
            &Tensor::vector(vec![1.0, 1e-6]),
            1e-5,
        )
        .unwrap();
        assert_eq!(r.non_finite_at, Some(1));
        assert!(!r.passed(1.0));
    }
}
