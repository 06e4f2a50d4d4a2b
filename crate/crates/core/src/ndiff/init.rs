use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, NdiffError};

/// Glorot/Xavier uniform initialization drawn from `rng`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Matrix, NdiffError> {
    if rows == 0 || cols == 0 {
        return Err(NdiffError::InvalidArgument(format!("xavier init needs positive dims, got ({rows}, {cols})")));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Ok(Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound)))
}

/// Seeded variant of [`xavier_uniform`].
pub fn xavier_init(shape: (usize, usize), seed: u64) -> Result<Matrix, NdiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_uniform(shape.0, shape.1, &mut rng)
}
