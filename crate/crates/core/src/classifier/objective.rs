//! One-vs-all objective over averaged embeddings.
//!
//! Generic over the float type so training can run in `f32` while gradient
//! checks run the very same code in `f64`. Matrices are row-major slices:
//! `emb` is `rows x dim`, `out` is `labels x dim`.

use num_traits::Float;

/// Mean of the embedding rows named by `ids`; zero vector when empty.
pub fn hidden<T: Float>(emb: &[T], dim: usize, ids: &[u32]) -> Vec<T> {
    let mut h = vec![T::zero(); dim];
    if ids.is_empty() {
        return h;
    }
    for &id in ids {
        let row = &emb[id as usize * dim..(id as usize + 1) * dim];
        for (acc, &v) in h.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    let n = T::from(ids.len()).unwrap();
    h.iter_mut().for_each(|v| *v = *v / n);
    h
}

pub fn logits<T: Float>(out: &[T], dim: usize, h: &[T]) -> Vec<T> {
    out.chunks_exact(dim).map(|w| w.iter().zip(h).fold(T::zero(), |acc, (&a, &b)| acc + a * b)).collect()
}

pub fn sigmoid<T: Float>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Float>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Summed binary cross-entropy over all labels for one sample.
pub fn loss<T: Float>(emb: &[T], out: &[T], dim: usize, ids: &[u32], targets: &[bool]) -> T {
    let h = hidden(emb, dim, ids);
    logits(out, dim, &h).into_iter().zip(targets).fold(T::zero(), |acc, (z, &y)| acc + if y { softplus(-z) } else { softplus(z) })
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub loss: T,
    /// `labels x dim`, d loss / d output weights.
    pub output: Vec<T>,
    /// d loss / d hidden. A row occurring `c` times among `n` ids gets
    /// `hidden * c / n`.
    pub hidden: Vec<T>,
}

pub fn gradients<T: Float>(emb: &[T], out: &[T], dim: usize, ids: &[u32], targets: &[bool]) -> Gradients<T> {
    let h = hidden(emb, dim, ids);
    let z = logits(out, dim, &h);
    let mut total = T::zero();
    let mut g_out = vec![T::zero(); out.len()];
    let mut g_hidden = vec![T::zero(); dim];
    for (label, (&zl, &y)) in z.iter().zip(targets).enumerate() {
        total = total + if y { softplus(-zl) } else { softplus(zl) };
        let err = sigmoid(zl) - if y { T::one() } else { T::zero() };
        let w = &out[label * dim..(label + 1) * dim];
        let gw = &mut g_out[label * dim..(label + 1) * dim];
        for d in 0..dim {
            gw[d] = err * h[d];
            g_hidden[d] = g_hidden[d] + err * w[d];
        }
    }
    Gradients { loss: total, output: g_out, hidden: g_hidden }
}

/// Gradient of the loss with respect to embedding row `row`.
pub fn embedding_row_gradient<T: Float>(g: &Gradients<T>, ids: &[u32], row: u32) -> Vec<T> {
    let count = ids.iter().filter(|&&i| i == row).count();
    if count == 0 {
        return vec![T::zero(); g.hidden.len()];
    }
    let scale = T::from(count).unwrap() / T::from(ids.len()).unwrap();
    g.hidden.iter().map(|&v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_is_mean_of_rows() {
        let emb = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(hidden(&emb, 2, &[]), vec![0.0, 0.0]);
        assert_eq!(hidden(&emb, 2, &[1]), vec![3.0, 4.0]);
        assert_eq!(hidden(&emb, 2, &[0, 2]), vec![3.0, 4.0]);
    }

    #[test]
    fn zero_weights_give_k_ln2() {
        let emb = [0.3f64, -0.2, 0.1, 0.4];
        let out = [0.0f64; 6];
        let l = loss(&emb, &out, 2, &[0, 1], &[true, false, false]);
        assert!((l - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(3.0f64) - 0.9525741268224334).abs() < 1e-15);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(softplus(800.0f64).is_finite());
    }

    #[test]
    fn gradient_matches_finite_difference_on_one_weight() {
        let emb = [0.3f64, -0.2, 0.1, 0.4, -0.5, 0.25];
        let mut out = [0.2f64, -0.1, 0.7, 0.3];
        let ids = [0, 2, 2];
        let targets = [true, false];
        let g = gradients(&emb, &out, 2, &ids, &targets);
        let eps = 1e-5;
        out[3] += eps;
        let up = loss(&emb, &out, 2, &ids, &targets);
        out[3] -= 2.0 * eps;
        let down = loss(&emb, &out, 2, &ids, &targets);
        let fd = (up - down) / (2.0 * eps);
        assert!((fd - g.output[3]).abs() / fd.abs() < 1e-6);
    }
}
