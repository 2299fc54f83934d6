use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    /// Absent when no target entry is strictly positive.
    pub smape: Option<f64>,
}

/// Running sums for metrics pooled over many windows.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    abs: f64,
    sq: f64,
    n: usize,
    smape: f64,
    smape_n: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: &Tensor, target: &Tensor) -> Result<()> {
        if pred.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "compute_metrics",
                lhs: pred.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        self.add_slices(pred.data(), target.data());
        Ok(())
    }

    pub fn add_slices(&mut self, pred: &[f64], target: &[f64]) {
        for (p, y) in pred.iter().zip(target) {
            let e = p - y;
            self.abs += e.abs();
            self.sq += e * e;
            if *y > 0.0 {
                self.smape += 2.0 * e.abs() / (p.abs() + y.abs());
                self.smape_n += 1;
            }
        }
        self.n += pred.len();
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.n == 0 {
            return Err(Error::Contract("metrics over zero entries".into()));
        }
        let n = self.n as f64;
        Ok(Metrics {
            mae: self.abs / n,
            mse: self.sq / n,
            smape: (self.smape_n > 0).then(|| 100.0 * self.smape / self.smape_n as f64),
        })
    }
}

/// MAE, MSE and SMAPE (0–200 scale, over entries with `y > 0`).
pub fn compute_metrics(pred: &Tensor, target: &Tensor) -> Result<Metrics> {
    let mut acc = MetricAccumulator::default();
    acc.add(pred, target)?;
    acc.finish()
}

/// Relative change in percent; negative means the second error is lower.
pub fn delta_improvement(err_base: f64, err_cotsfa: f64) -> Option<f64> {
    (err_base > 0.0).then(|| (err_cotsfa - err_base) / err_base * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Strong,
    Weak,
    None,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Significance::Strong
        } else if p < 0.05 {
            Significance::Weak
        } else {
            Significance::None
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Significance::Strong => "✓✓",
            Significance::Weak => "✓",
            Significance::None => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub tier: Significance,
    /// Every paired difference was zero; `t` and `p` are NaN.
    pub degenerate: bool,
    /// The differences had zero variance but nonzero mean, so `t` is infinite.
    pub zero_variance: bool,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!(
            "paired t-test needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if d.iter().all(|x| *x == 0.0) {
        return Ok(TTest {
            t: f64::NAN,
            p: f64::NAN,
            tier: Significance::None,
            degenerate: true,
            zero_variance: true,
        });
    }
    if var == 0.0 {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
            tier: Significance::Strong,
            degenerate: false,
            zero_variance: true,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Domain(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        tier: Significance::from_p(p),
        degenerate: false,
        zero_variance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let y = Tensor::vector(vec![0.0, 2.0]);
        assert_eq!(
            compute_metrics(&y, &y).unwrap(),
            Metrics {
                mae: 0.0,
                mse: 0.0,
                smape: Some(0.0)
            }
        );
        let m = compute_metrics(&Tensor::vector(vec![1.0, 2.0]), &y).unwrap();
        assert_eq!((m.mae, m.mse, m.smape), (0.5, 0.5, Some(0.0)));
        let m = compute_metrics(&Tensor::vector(vec![1.0]), &Tensor::vector(vec![2.0])).unwrap();
        assert!((m.smape.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        let m = compute_metrics(&Tensor::vector(vec![1.0]), &Tensor::vector(vec![-1.0])).unwrap();
        assert_eq!(m.smape, None);
        assert!(compute_metrics(&Tensor::vector(vec![1.0]), &y).is_err());
    }

    #[test]
    fn delta_examples() {
        assert!((delta_improvement(0.369, 0.357).unwrap() + 3.252).abs() < 1e-3);
        assert_eq!(delta_improvement(0.5, 0.5), Some(0.0));
        assert!((delta_improvement(0.2, 0.3).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(delta_improvement(0.0, 0.3), None);
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.tier, Significance::None);

        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b: Vec<f64> = a.iter().map(|x| x - 1.0).collect();
        let r = paired_t_test(&a, &b).unwrap();
        assert!(r.zero_variance && !r.degenerate);
        assert_eq!(r.t, f64::INFINITY);
        assert_eq!(r.tier, Significance::Strong);
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn t_test_matches_tabulated_value() {
        // t = 2.776 is the two-sided 5% critical value at 4 degrees of freedom.
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mean = 3.0;
        let sd = (2.5f64).sqrt();
        let shift = 2.776 * sd / 5f64.sqrt() - mean;
        let a: Vec<f64> = d.iter().map(|x| x + shift).collect();
        let r = paired_t_test(&a, &[0.0; 5]).unwrap();
        assert!((r.t - 2.776).abs() < 1e-12);
        assert!((r.p - 0.05).abs() < 1e-4, "{}", r.p);
        assert_eq!(r.tier, Significance::None);
    }
}
