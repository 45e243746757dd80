#![allow(dead_code)]

use lqrlab::certificates::sample_sublevel;
use lqrlab::lqr_core::{solve_riccati_kleinman, Plant};
use lqrlab::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn spd(n: usize, rng: &mut impl Rng) -> Mat {
    let g = gaussian(n, n, rng);
    &g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.5
}

pub fn orthogonal(n: usize, rng: &mut impl Rng) -> Mat {
    gaussian(n, n, rng).qr().q()
}

/// `U (Λ + N) Uᵀ` with `Λ` negative diagonal and `N` strictly upper triangular.
pub fn hurwitz(n: usize, rng: &mut impl Rng) -> Mat {
    let u = orthogonal(n, rng);
    let t = Mat::from_fn(n, n, |i, j| {
        if i == j {
            -rng.gen_range(0.1..3.0)
        } else if j > i {
            rng.gen_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    &u * t * u.transpose()
}

/// Random plant with a possibly unstable `A`, redrawn until `f⋆ ≤ 100 n`.
pub fn random_plant(n: usize, m: usize, rng: &mut impl Rng) -> Plant {
    loop {
        let a = gaussian(n, n, rng) * 0.6;
        let b = gaussian(n, m, rng);
        let plant = Plant::new(a, b, spd(n, rng), spd(m, rng), spd(n, rng)).expect("valid plant");
        if let Ok(ric) = solve_riccati_kleinman(&plant, None) {
            if ric.f_star(&plant) <= 100.0 * n as f64 {
                return plant;
            }
        }
    }
}

/// Stabilizing gains drawn in `S_K(factor · f⋆)`.
pub fn stabilizing_gains(plant: &Plant, factor: f64, count: usize, seed: u64) -> Vec<Mat> {
    let ric = solve_riccati_kleinman(plant, None).expect("riccati");
    let a = factor * ric.f_star(plant);
    sample_sublevel(plant, a, count, seed, &ric.k_star, &[]).expect("samples")
}

pub fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
