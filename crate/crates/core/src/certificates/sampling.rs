use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LqrError, Result};
use crate::lqr_core::{lqr_cost, Plant};
use crate::lyap_kernel::Mat;
use crate::parallel::map_indexed;
use crate::sim_engine::RngStream;

const MAX_ATTEMPTS: usize = 8;
const BISECTIONS: usize = 40;

/// Largest `t` with `f(center + s·d) ≤ a` for `s ∈ [0, t]`, located by
/// doubling then bisection on the first crossing.
fn ray_extent(plant: &Plant, center: &Mat, d: &Mat, a: f64) -> f64 {
    let inside = |t: f64| lqr_cost(plant, &(center + d * t)).value() <= a;
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while inside(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return lo;
        }
    }
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `count` gains in `S_K(a)`: `center` plus random Gaussian directions scaled
/// uniformly inside the sublevel extent along each ray, each accepted by a
/// cost test. Members of `trajectory` with cost at most `a` are appended.
///
/// Sample `i` draws from stream `i` of `seed`, so the output does not depend
/// on the thread count.
pub fn sample_sublevel(plant: &Plant, a: f64, count: usize, seed: u64, center: &Mat, trajectory: &[Mat]) -> Result<Vec<Mat>> {
    let fc = lqr_cost(plant, center).value();
    if !(fc <= a) {
        return Err(LqrError::Sampling(format!("center has cost {fc} above the sublevel value {a}")));
    }
    let (m, n) = (plant.m(), plant.n());
    let draws = map_indexed(count, |i| -> Option<Mat> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        for _ in 0..MAX_ATTEMPTS {
            let g = Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            if norm == 0.0 {
                continue;
            }
            let d = g / norm;
            let extent = ray_extent(plant, center, &d, a);
            let k = center + &d * (extent * rng.gen::<f64>());
            if lqr_cost(plant, &k).value() <= a {
                return Some(k);
            }
        }
        None
    });
    let mut out = Vec::with_capacity(count + trajectory.len());
    for (i, d) in draws.into_iter().enumerate() {
        match d {
            Some(k) => out.push(k),
            None => {
                return Err(LqrError::Sampling(format!(
                    "sample {i}: no gain in the sublevel set after {MAX_ATTEMPTS} attempts"
                )))
            }
        }
    }
    out.extend(trajectory.iter().filter(|k| lqr_cost(plant, k).value() <= a).cloned());
    Ok(out)
}
