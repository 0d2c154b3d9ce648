//! Seeded random states, unitaries, observables and measurements.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, kron, sqrt_psd, CMatrix, CVector, DensityMatrix, HermitianMatrix};
use crate::phase::Povm;

fn gaussian(rng: &mut impl Rng) -> num_complex::Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im)
}

pub fn ginibre(d: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| gaussian(rng))
}

/// Haar-random unit vector.
pub fn haar_state(d: usize, rng: &mut impl Rng) -> CVector {
    let v = CVector::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase fix.
pub fn haar_unitary(d: usize, rng: &mut impl Rng) -> CMatrix {
    let qr = ginibre(d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            c(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Convex mixture of `n_pure` Haar-random pure states with uniform random weights.
pub fn random_mixture(d: usize, n_pure: usize, rng: &mut impl Rng) -> DensityMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut total = 0.0;
    for _ in 0..n_pure.max(1) {
        let w: f64 = rng.random::<f64>() + 1e-3;
        let v = haar_state(d, rng);
        m += (&v * v.adjoint()).scale(w);
        total += w;
    }
    DensityMatrix::from_computed(&m.unscale(total)).expect("mixture is a valid state")
}

/// Random state drawn from the Hilbert-Schmidt-like ensemble `G G^dagger / Tr`.
pub fn random_density(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    let g = ginibre(d, rng);
    DensityMatrix::from_computed(&(&g * g.adjoint())).expect("Wishart matrix is PSD")
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::from_computed(&ginibre(d, rng))
}

/// Random rank-1 projector onto a Haar-random direction.
pub fn random_projector(d: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::outer(&haar_state(d, rng))
}

/// Random `n`-outcome POVM `S^{-1/2} G_m S^{-1/2}` with `S = sum G_m`.
pub fn random_povm(d: usize, n: usize, rng: &mut impl Rng) -> Povm {
    let gs: Vec<CMatrix> = (0..n)
        .map(|_| {
            let g = ginibre(d, rng);
            &g * g.adjoint()
        })
        .collect();
    let s = gs.iter().fold(CMatrix::zeros(d, d), |a, g| a + g);
    let si = sqrt_psd(&s)
        .expect("sum of Gram matrices")
        .try_inverse()
        .expect("sum is invertible");
    let elems = gs
        .iter()
        .map(|g| HermitianMatrix::from_computed(&(&si * g * &si)))
        .collect();
    Povm::new(elems).expect("construction sums to identity")
}

/// Informationally complete projective measurement settings.
///
/// For `d = 2^n` these are the `3^n` tensor products of single-qubit
/// X/Y/Z eigenbases; otherwise the computational basis together with the
/// pairwise real and imaginary superposition bases.
pub fn ic_settings(d: usize) -> Vec<Povm> {
    if d.is_power_of_two() && d > 1 {
        let n = d.trailing_zeros() as usize;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let bases: [[CVector; 2]; 3] = [
            [
                CVector::from_vec(vec![c(r, 0.0), c(r, 0.0)]),
                CVector::from_vec(vec![c(r, 0.0), c(-r, 0.0)]),
            ],
            [
                CVector::from_vec(vec![c(r, 0.0), c(0.0, r)]),
                CVector::from_vec(vec![c(r, 0.0), c(0.0, -r)]),
            ],
            [
                CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
                CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]),
            ],
        ];
        let mut out = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let mut choice = Vec::with_capacity(n);
            let mut x = code;
            for _ in 0..n {
                choice.push(x % 3);
                x /= 3;
            }
            let mut elems = Vec::with_capacity(d);
            for outcome in 0..d {
                let mut m = CMatrix::identity(1, 1);
                for (q, &b) in choice.iter().enumerate() {
                    let bit = (outcome >> (n - 1 - q)) & 1;
                    let v = &bases[b][bit];
                    m = kron(&m, &(v * v.adjoint()));
                }
                elems.push(HermitianMatrix::from_computed(&m));
            }
            out.push(Povm::new(elems).expect("product basis"));
        }
        return out;
    }
    let basis = |i: usize| {
        let mut v = CVector::zeros(d);
        v[i] = c(1.0, 0.0);
        v
    };
    let mut out = vec![
        Povm::new((0..d).map(|i| HermitianMatrix::outer(&basis(i))).collect()).expect("basis"),
    ];
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for l in j + 1..d {
            for phase in [c(1.0, 0.0), c(0.0, 1.0)] {
                // the pair basis on {j, l}, completed by the other basis states
                let mut elems = Vec::with_capacity(d);
                for sign in [1.0, -1.0] {
                    let v = (basis(j) + basis(l) * (phase * sign)).scale(r);
                    elems.push(HermitianMatrix::outer(&v));
                }
                for i in (0..d).filter(|&i| i != j && i != l) {
                    elems.push(HermitianMatrix::outer(&basis(i)));
                }
                out.push(Povm::new(elems).expect("pair basis"));
            }
        }
    }
    out
}

/// Real matrix of i.i.d. standard normals (used for random directions).
pub fn gaussian_real(r: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, cols, |_, _| StandardNormal.sample(rng))
}
