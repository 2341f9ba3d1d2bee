//! Seeded random operators: Haar unitaries, isometries, states.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{c, ComplexMatrix};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of diag(R) absorbed into Q.
pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g: DMatrix<Complex64> = ginibre(d, d, rng).to_nalgebra();
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = ComplexMatrix::from_nalgebra(&q);
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            u[(i, j)] *= phase;
        }
    }
    u
}

/// `rows x cols` isometry (`V†V = I`), the first `cols` columns of a Haar unitary.
pub fn random_isometry(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let u = haar_unitary(rows, rng);
    ComplexMatrix::from_fn(rows, cols, |i, j| u[(i, j)])
}

/// Random full-rank density matrix `G G† / tr(G G†)`.
pub fn random_density(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ginibre(d, d, rng);
    let m = &g * &g.adjoint();
    let t = m.trace().re;
    m.scale_real(1.0 / t)
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ginibre(d, d, rng).hermitian_part()
}

/// Random point on the probability simplex (normalized exponentials).
pub fn random_weights(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary_and_seeded() {
        let u = haar_unitary(3, &mut rng(5));
        assert!((&u * &u.adjoint()).approx_eq(&ComplexMatrix::identity(3), 1e-12));
        assert!(u.approx_eq(&haar_unitary(3, &mut rng(5)), 0.0));
        assert!(u.frobenius_distance(&haar_unitary(3, &mut rng(6))) > 1e-3);
    }

    #[test]
    fn isometry_and_density() {
        let mut r = rng(1);
        let v = random_isometry(6, 2, &mut r);
        assert!((&v.adjoint() * &v).approx_eq(&ComplexMatrix::identity(2), 1e-12));
        let rho = random_density(3, &mut r);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(crate::tensor::is_psd(&rho, 1e-12).unwrap());
        let w = random_weights(4, &mut r);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
