//! Coded synthetic embeddings: every sentence structure gets a fixed random
//! code inside a random low-dimensional subspace of the 768-d space, and each
//! sentence adds its own isotropic Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::EMBEDDING_DIM;
use crate::util::derive_seed;

pub const DEFAULT_SUBSPACE: usize = 64;
pub const DEFAULT_NOISE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct SyntheticCoder {
    seed: u64,
    noise: f64,
    subspace: usize,
    /// `subspace` orthonormal 768-d basis vectors, one after another.
    basis: Vec<f64>,
}

impl SyntheticCoder {
    pub fn new(seed: u64, subspace: usize, noise: f64) -> Self {
        assert!(subspace > 0 && subspace <= EMBEDDING_DIM);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "basis"));
        let mut basis: Vec<f64> = Vec::with_capacity(subspace * EMBEDDING_DIM);
        for i in 0..subspace {
            let mut v: Vec<f64> = (0..EMBEDDING_DIM)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            // modified Gram-Schmidt
            for j in 0..i {
                let b = &basis[j * EMBEDDING_DIM..(j + 1) * EMBEDDING_DIM];
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            basis.extend(v.iter().map(|x| x / n));
        }
        Self {
            seed,
            noise,
            subspace,
            basis,
        }
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(seed, DEFAULT_SUBSPACE, DEFAULT_NOISE)
    }

    /// Noise-free embedding shared by every sentence with this structure.
    pub fn prototype(&self, structure: &str) -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("code\0{structure}")));
        let code: Vec<f64> = (0..self.subspace)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut out = vec![0.0; EMBEDDING_DIM];
        for (c, b) in code.iter().zip(self.basis.chunks(EMBEDDING_DIM)) {
            out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
        }
        out
    }

    /// Prototype plus per-sentence `N(0, noise^2)` noise keyed by `sentence_id`.
    pub fn embed(&self, sentence_id: &str, structure: &str) -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("noise\0{sentence_id}")));
        let mut v = self.prototype(structure);
        for x in &mut v {
            let e: f64 = rng.sample(StandardNormal);
            *x += self.noise * e;
        }
        v
    }
}
