//! Deterministic grids and seeded random samples on Sⁿ and on the cap Y.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::sphere::{project, GeomError, UnitVector};

/// Uniform point on the unit sphere in ℝ^dim (normalised Gaussian).
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> UnitVector {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(u) = UnitVector::new(v) {
            if u.iter().all(|c| c.is_finite()) {
                return u;
            }
        }
    }
}

/// Point in Y = {y : rᵀy ≤ γ}.
///
/// Rejection from the uniform distribution on the sphere; caps too small for
/// rejection to succeed quickly fall back to a height drawn uniformly in
/// [−1, γ] (the exact uniform law on S²) and a uniform tangent direction.
pub fn uniform_in_cap<R: Rng + ?Sized>(rng: &mut R, r: &UnitVector, gamma: f64) -> UnitVector {
    for _ in 0..64 {
        let y = uniform_sphere(rng, r.dim());
        if r.dot(&y) <= gamma {
            return y;
        }
    }
    let c = -1.0 + (gamma + 1.0) * rng.random::<f64>();
    let t = loop {
        let w = uniform_sphere(rng, r.dim());
        let t = project(r, &w);
        let n = t.norm();
        if n > 1e-6 {
            break t / n;
        }
    };
    let y = r.as_vector() * c + t * (1.0 - c * c).max(0.0).sqrt();
    UnitVector::new(y).expect("cap sample is nonzero")
}

/// Fibonacci lattice of `n` nearly uniform points on S².
pub fn fibonacci_sphere(n: usize) -> Vec<UnitVector> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rad = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            UnitVector::from_slice(&[rad * phi.cos(), rad * phi.sin(), z]).expect("lattice point")
        })
        .collect()
}

/// A deterministic point set on the sphere in ℝ^dim: the Fibonacci lattice
/// for S², otherwise `n` Gaussian samples from a fixed seed.
pub fn sphere_grid(dim: usize, n: usize) -> Vec<UnitVector> {
    if dim == 3 {
        return fibonacci_sphere(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..n).map(|_| uniform_sphere(&mut rng, dim)).collect()
}

/// Orthonormal basis of the tangent space at `r` (n vectors for r ∈ Sⁿ).
pub fn tangent_basis(r: &UnitVector) -> Vec<DVector<f64>> {
    let dim = r.dim();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim - 1);
    for i in 0..dim {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v = project(r, &v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let n = v.norm();
        if n > 1e-6 {
            basis.push(v / n);
        }
        if basis.len() == dim - 1 {
            break;
        }
    }
    basis
}

/// Product grid on Y ⊂ S²: `levels` heights rᵀy spaced on [−1, γ] (both ends
/// included, so the boundary ∂Y is hit exactly) times `azimuths` angles.
/// The pole −r appears once.
pub fn cap_grid(r: &UnitVector, gamma: f64, levels: usize, azimuths: usize) -> Result<Vec<UnitVector>, GeomError> {
    if r.dim() != 3 {
        return Err(GeomError::DimensionMismatch(r.dim(), 3));
    }
    let basis = tangent_basis(r);
    let mut pts = Vec::with_capacity(levels * azimuths);
    for l in 0..levels {
        let c = if levels == 1 { gamma } else { -1.0 + (gamma + 1.0) * l as f64 / (levels - 1) as f64 };
        let s = (1.0 - c * c).max(0.0).sqrt();
        let count = if l == 0 { 1 } else { azimuths };
        for a in 0..count {
            let th = 2.0 * PI * a as f64 / azimuths as f64;
            let v = r.as_vector() * c + (&basis[0] * th.cos() + &basis[1] * th.sin()) * s;
            pts.push(UnitVector::new(v)?);
        }
    }
    Ok(pts)
}
