use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, Sample};
use crate::tensor::Tensor;

/// Toy task: sample `i` has class `i % classes`, and its image carries a
/// one-pixel checkerboard patch inside the cell of a `r x r` layout
/// (`r = ceil(sqrt(classes))`, quadrants for 4 classes) that belongs to its
/// class. The background is mild uniform noise. Images are `3 x m x n`.
pub fn synthetic_classification(n: usize, grid: (usize, usize), classes: usize, seed: u64) -> DatasetSplit {
    assert!(classes > 0, "need at least one class");
    let (m, w) = grid;
    let r = (classes as f64).sqrt().ceil() as usize;
    let (ch, cw) = (m / r, w / r);
    assert!(ch >= 2 && cw >= 2, "grid {m}x{w} too small for {classes} classes");
    let (ph, pw) = ((ch / 2).max(2), (cw / 2).max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let label = i % classes;
            let (cy, cx) = (label / r * ch, label % r * cw);
            let oy = cy + rng.random_range(0..=ch - ph);
            let ox = cx + rng.random_range(0..=cw - pw);
            let mut data: Vec<f64> = (0..3 * m * w).map(|_| rng.random_range(0.3..0.7)).collect();
            for c in 0..3 {
                for y in oy..oy + ph {
                    for x in ox..ox + pw {
                        data[(c * m + y) * w + x] = ((y + x) % 2) as f64;
                    }
                }
            }
            Sample { image: Tensor::new(&[3, m, w], data).expect("sized above"), label }
        })
        .collect();
    DatasetSplit::new(samples, classes, seed).expect("labels below classes")
}
