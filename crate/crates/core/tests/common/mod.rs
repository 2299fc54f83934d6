use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cotsfa::numeric::Tensor;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

pub fn nested(t: &Tensor) -> Vec<Vec<f64>> {
    let f = t.shape()[1];
    t.data().chunks(f).map(|r| r.to_vec()).collect()
}

/// Time-averaged similarity of original `i` and its view `a`, written as a
/// double loop over the full denominator with no log-sum-exp. `aug` is
/// view-major: view `k` of original `j` sits at `k·B + j`.
pub fn brute_similarity(
    orig: &[Vec<Vec<f64>>],
    aug: &[Vec<Vec<f64>>],
    views: usize,
    tau: f64,
    i: usize,
    a: usize,
) -> f64 {
    let b = orig.len();
    let steps = orig[i].len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() / tau;
    let mut total = 0.0;
    for t in 0..steps {
        let u = &orig[i][t];
        let num = dot(u, &aug[a * b + i][t]).exp();
        let mut den = 0.0;
        for j in 0..b {
            den += dot(u, &aug[a * b + j][t]).exp();
            if j != i {
                den += dot(u, &orig[j][t]).exp();
            }
        }
        for k in 0..views {
            den += dot(u, &aug[k * b + i][t]).exp();
        }
        total += -(num / den).ln();
    }
    total / steps as f64
}
