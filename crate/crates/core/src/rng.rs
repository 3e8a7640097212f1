//! Deterministic per-task random streams.
//!
//! Every parallel unit of work derives its own generator from the user seed
//! and its coordinates, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Stream domains, kept distinct so that e.g. design and response draws for
/// the same indices never coincide.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    Response = 2,
    Scenario = 3,
    McNull = 4,
    McDgp = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `domain` at coordinates `path`.
pub fn derive_seed(seed: u64, domain: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(domain as u64));
    for &c in path {
        h = splitmix(h ^ splitmix(c.wrapping_add(0x1234_5678)));
    }
    h
}

pub fn stream(seed: u64, domain: Stream, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, path))
}

pub fn standard_normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::of(v)
}

/// `n x p` matrix of independent standard normals, filled row by row.
pub fn normal_matrix<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            m[(i, j)] = standard_normal(rng);
        }
    }
    m
}
