#![allow(dead_code)]

use hyperspread::scenario::{generate_scenario, random_state, GenOptions, Scenario};
use hyperspread::{Domain, SquareMatrix};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generated scenario whose size varies with the seed.
pub fn scenario(seed: u64, viruses: usize) -> Scenario {
    let opts = GenOptions { n: 2 + (seed % 5) as usize, m: (seed % 3) as usize, viruses, ..Default::default() };
    generate_scenario(&opts, seed).expect("generator")
}

/// The §7 setup: five population nodes, two resource nodes.
pub fn desk_scenario(seed: u64, viruses: usize) -> Scenario {
    generate_scenario(&GenOptions { viruses, ..Default::default() }, seed).expect("generator")
}

pub fn point(domain: &Domain, seed: u64) -> Vec<f64> {
    random_state(domain, &mut rng(seed))
}

/// Interior point strictly inside the box, away from the pair-sum faces.
pub fn interior_point(domain: &Domain, seed: u64) -> Vec<f64> {
    point(domain, seed).iter().zip(&domain.upper).map(|(z, u)| 0.05 * u + 0.9 * z).collect()
}

/// `max |a − b| / max(1, |a|)` entrywise.
pub fn rel_diff(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Spectral radius from the dense eigensolver, taken blockwise over strongly connected components.
pub fn dense_radius(m: &SquareMatrix) -> f64 {
    let n = m.dim();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || m[(i, j)] != 0.0).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= reach[i][k] && reach[k][j];
            }
        }
    }
    let mut best = 0.0_f64;
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let block: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        block.iter().for_each(|&j| seen[j] = true);
        let sub = DMatrix::from_fn(block.len(), block.len(), |a, b| m[(block[a], block[b])]);
        if block.len() == 1 {
            best = best.max(sub[(0, 0)].abs());
        } else {
            best = best.max(sub.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    best
}
