//! Explicit matrix representations of linear maps into the symmetric matrices.
//!
//! Symmetric matrices are coordinatized by the orthonormal `svec` basis
//! (diagonal entries, then off-diagonal entries scaled by √2), general
//! matrices by column-major `vec`. Both preserve the Frobenius inner
//! product, so the 2-norm of a representation is the operator norm.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dense::{spectral_norm, symmetrize, unvec, vec_of, Mat, Vector};
use crate::error::{LqrError, Result};

/// Dimension of the symmetric `n × n` matrices.
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn svec(m: &Mat) -> Vector {
    let n = m.nrows();
    let mut v = Vector::zeros(sym_dim(n));
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            v[idx] = if i == j {
                m[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)])
            };
            idx += 1;
        }
    }
    v
}

pub fn smat(v: &Vector, n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, i)] = v[idx];
            } else {
                let x = v[idx] / std::f64::consts::SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            idx += 1;
        }
    }
    m
}

/// Input space of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Symmetric(usize),
    General { rows: usize, cols: usize },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Symmetric(n) => sym_dim(n),
            Domain::General { rows, cols } => rows * cols,
        }
    }

    pub fn encode(&self, m: &Mat) -> Result<Vector> {
        match *self {
            Domain::Symmetric(n) => {
                if m.shape() != (n, n) {
                    return Err(LqrError::Dimension(format!("expected {n}x{n} symmetric input")));
                }
                Ok(svec(m))
            }
            Domain::General { rows, cols } => {
                if m.shape() != (rows, cols) {
                    return Err(LqrError::Dimension(format!("expected {rows}x{cols} input")));
                }
                Ok(vec_of(m))
            }
        }
    }

    pub fn decode(&self, v: &Vector) -> Mat {
        match *self {
            Domain::Symmetric(n) => smat(v, n),
            Domain::General { rows, cols } => unvec(v, rows, cols),
        }
    }

    fn basis(&self, k: usize) -> Mat {
        let mut e = Vector::zeros(self.dim());
        e[k] = 1.0;
        self.decode(&e)
    }
}

/// A linear map `domain → 𝕊ⁿ` stored as an explicit matrix in orthonormal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOperatorRep {
    domain: Domain,
    n: usize,
    matrix: Mat,
}

impl SymOperatorRep {
    /// Builds the representation by applying `op` to every basis element.
    pub fn from_fn(domain: Domain, n: usize, op: impl Fn(&Mat) -> Mat) -> Self {
        let cols: Vec<Vector> = (0..domain.dim()).map(|k| svec(&op(&domain.basis(k)))).collect();
        let matrix = Mat::from_columns(&cols);
        Self { domain, n, matrix }
    }

    pub fn identity(n: usize) -> Self {
        let d = sym_dim(n);
        Self { domain: Domain::Symmetric(n), n, matrix: Mat::identity(d, d) }
    }

    /// `X ↦ F X + X Fᵀ`.
    pub fn lyapunov(f: &Mat) -> Self {
        let n = f.nrows();
        let ft = f.transpose();
        Self::from_fn(Domain::Symmetric(n), n, |x| f * x + x * &ft)
    }

    /// `P ↦ Fᵀ P + P F`.
    pub fn adjoint_lyapunov(f: &Mat) -> Self {
        Self::lyapunov(&f.transpose())
    }

    /// `Y ↦ B Y + Yᵀ Bᵀ` for `B ∈ ℝ^{n×m}`, `Y ∈ ℝ^{m×n}`.
    pub fn input_map(b: &Mat) -> Self {
        let (n, m) = b.shape();
        let bt = b.transpose();
        Self::from_fn(Domain::General { rows: m, cols: n }, n, |y| b * y + y.transpose() * &bt)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn codomain_dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn apply(&self, m: &Mat) -> Result<Mat> {
        let v = &self.matrix * self.domain.encode(m)?;
        Ok(smat(&v, self.n))
    }

    /// Adjoint applied to a symmetric matrix, returned in domain shape.
    pub fn apply_adjoint(&self, s: &Mat) -> Mat {
        let v = self.matrix.transpose() * svec(&symmetrize(s));
        self.domain.decode(&v)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { matrix: &self.matrix * c, ..self.clone() }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &SymOperatorRep) -> Result<Self> {
        if self.domain != Domain::Symmetric(inner.n) {
            return Err(LqrError::Dimension("operator composition shape mismatch".into()));
        }
        Ok(Self { domain: inner.domain, n: self.n, matrix: &self.matrix * &inner.matrix })
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.domain != Domain::Symmetric(self.n) {
            return Err(LqrError::Dimension("only maps 𝕊ⁿ → 𝕊ⁿ are invertible here".into()));
        }
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| LqrError::Singular("operator representation".into()))?;
        Ok(Self { matrix: inv, ..self.clone() })
    }

    pub fn singular_values(&self) -> Vector {
        self.matrix.singular_values()
    }

    /// Ratio of smallest to largest singular value.
    pub fn inverse_condition(&self) -> f64 {
        let s = self.singular_values();
        let (lo, hi) = (s.min(), s.max());
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

/// Largest singular value of the representation: `sup ‖ℳ(M)‖_F / ‖M‖_F`.
pub fn operator_two_norm(rep: &SymOperatorRep) -> f64 {
    spectral_norm(rep.matrix())
}

fn spectral_ratio(rep: &SymOperatorRep, m: &Mat) -> (f64, Mat) {
    let image = rep.apply(m).expect("domain-shaped input");
    let eig = SymmetricEigen::new(image);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, &l)| if l.abs() > best.1 { (i, l.abs()) } else { best });
    let lambda = eig.eigenvalues[k];
    let u = eig.eigenvectors.column(k).into_owned();
    let s = if lambda < 0.0 { -1.0 } else { 1.0 };
    (lambda.abs(), &u * u.transpose() * s)
}

/// Maximizer of `⟨G, M⟩` over the unit spectral-norm ball of the domain.
fn unit_ball_vertex(domain: Domain, g: &Mat) -> Mat {
    match domain {
        Domain::Symmetric(_) => {
            let eig = SymmetricEigen::new(symmetrize(g));
            let d = eig.eigenvalues.map(|l| if l < 0.0 { -1.0 } else { 1.0 });
            &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
        }
        Domain::General { .. } => {
            let svd = g.clone().svd(true, true);
            svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
        }
    }
}

fn random_unit(domain: Domain, rng: &mut ChaCha8Rng) -> Mat {
    let g = domain.decode(&Vector::from_fn(domain.dim(), |_, _| StandardNormal.sample(rng)));
    let g = match domain {
        Domain::Symmetric(_) => symmetrize(&g),
        Domain::General { .. } => g,
    };
    let s = spectral_norm(&g);
    if s > 0.0 {
        g / s
    } else {
        unit_ball_vertex(domain, &Mat::identity(g.nrows(), g.ncols()))
    }
}

/// Lower estimate of `sup_M ‖ℳ(M)‖₂ / ‖M‖₂` (spectral norms on both sides).
///
/// Each sample draws a random unit-spectral-norm input and climbs by
/// repeatedly jumping to the unit-ball vertex aligned with the current
/// subgradient, which never decreases the objective. The running maximum
/// over samples is returned, so more samples never lower the estimate.
pub fn operator_spectral_induced_norm_estimate(rep: &SymOperatorRep, samples: usize, seed: u64) -> f64 {
    let domain = rep.domain();
    let mut best = 0.0_f64;
    for i in 0..samples.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let start = random_unit(domain, &mut rng);
        let (mut value, mut dir) = spectral_ratio(rep, &start);
        for _ in 0..200 {
            let g = rep.apply_adjoint(&dir);
            let next = unit_ball_vertex(domain, &g);
            let (v, d) = spectral_ratio(rep, &next);
            if v <= value * (1.0 + 1e-14) {
                break;
            }
            value = v;
            dir = d;
        }
        best = best.max(value);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_inner_product() {
        let a = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0]);
        let b = Mat::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let lhs = svec(&a).dot(&svec(&b));
        let rhs = super::super::dense::inner(&a, &b);
        assert!((lhs - rhs).abs() < 1e-13);
        assert_eq!(smat(&svec(&a), 3), a);
    }

    #[test]
    fn scalar_closed_loop() {
        let rep = SymOperatorRep::lyapunov(&Mat::from_element(1, 1, -1.0));
        assert_eq!(rep.matrix()[(0, 0)], -2.0);
    }

    #[test]
    fn identity_norms() {
        let id = SymOperatorRep::identity(3);
        assert_eq!(operator_two_norm(&id), 1.0);
        assert_eq!(operator_two_norm(&id.scaled(2.0)), 2.0);
        assert!((operator_spectral_induced_norm_estimate(&id, 1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_composition() {
        let a = SymOperatorRep::lyapunov(&Mat::from_element(1, 1, 1.0));
        let b = SymOperatorRep::input_map(&Mat::from_element(1, 1, 1.0));
        let ainv_b = a.inverse().unwrap().compose(&b).unwrap();
        assert!((operator_two_norm(&ainv_b) - 1.0).abs() < 1e-15);
        let s = operator_spectral_induced_norm_estimate(&ainv_b, 3, 7);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_scaling_estimate() {
        let d = Mat::from_diagonal(&Vector::from_vec(vec![3.0_f64.sqrt(), 1.0]));
        let rep = SymOperatorRep::from_fn(Domain::Symmetric(2), 2, |m| &d * m * &d);
        let est = operator_spectral_induced_norm_estimate(&rep, 5, 1);
        assert!((est - 3.0).abs() <= 0.03);
    }

    #[test]
    fn estimate_monotone_in_samples() {
        let f = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -2.0, 1.0, 0.5, 0.0, -3.0]);
        let rep = SymOperatorRep::lyapunov(&f).inverse().unwrap();
        let mut last = 0.0;
        for s in 1..8 {
            let e = operator_spectral_induced_norm_estimate(&rep, s, 11);
            assert!(e >= last);
            last = e;
        }
    }
}
