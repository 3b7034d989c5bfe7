//! Parameter initializers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal initialization of a `rows × cols` matrix (row-major), scaled by
/// `gain`. When the matrix is not square the result is semi-orthogonal.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f32, rng: &mut R) -> Vec<f32> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix so the distribution is uniform over orthogonal matrices
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0f32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out[i * cols + j] = (v * gain as f64) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn columns_orthonormal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for (r, c) in [(8, 5), (5, 8), (6, 6)] {
            let w = orthogonal(r, c, 1.0, &mut rng);
            let m = DMatrix::from_row_slice(r, c, &w.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let gram = if r >= c { m.transpose() * &m } else { &m * m.transpose() };
            let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
            assert!((gram - eye).abs().max() < 1e-5);
        }
    }

    #[test]
    fn gain_scales() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let w = orthogonal(4, 4, 0.01, &mut rng);
        let norm: f32 = w.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 0.02).abs() < 1e-6);
    }
}
