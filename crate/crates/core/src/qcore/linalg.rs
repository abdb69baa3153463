//! Dense complex helpers: matrix exponential, Hermitian spectra, matrix
//! functions of positive matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Matrix exponential (nalgebra's scaling-and-squaring Padé).
pub fn expm(a: &CMat) -> CMat {
    assert_eq!(a.nrows(), a.ncols(), "expm requires a square matrix");
    a.exp()
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are returned in
/// ascending order with matching eigenvector columns.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let herm = (a + a.adjoint()) * c(0.5);
    let eig = herm.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    eigh(a).0.first().copied().unwrap_or(0.0)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(a);
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let fv = c(f(*v));
        for r in 0..n {
            scaled[(r, k)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Principal square root of a positive semidefinite matrix; small negative
/// eigenvalues from rounding are clipped to zero.
pub fn sqrtm_psd(a: &CMat) -> CMat {
    hermitian_fn(a, |x| x.max(0.0).sqrt())
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().sum()
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    let n = a.nrows();
    if n != a.ncols() {
        return false;
    }
    (0..n).all(|i| (i..n).all(|j| (a[(i, j)] - a[(j, i)].conj()).norm() <= tol))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Trace norm distance ½‖a − b‖₁ for Hermitian arguments.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let (vals, _) = eigh(&(a - b));
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// Column-stacking vectorization.
pub fn vec_of(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

pub fn unvec(v: &CVec, dim: usize) -> CMat {
    assert_eq!(v.len(), dim * dim);
    CMat::from_column_slice(dim, dim, v.as_slice())
}

pub fn pauli(k: usize) -> CMat {
    let z = c(0.0);
    let o = c(1.0);
    match k {
        0 => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -I, I, z]),
        3 => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("pauli index {k} out of range"),
    }
}

/// Haar-ish random pure state from normally distributed amplitudes.
pub fn random_ket<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CVec {
    use rand_distr::{Distribution, StandardNormal};
    let v = CVec::from_fn(dim, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let n = v.norm();
    v / c(n)
}

/// Random full-rank density matrix G G† / Tr(G G†) with Ginibre G.
pub fn random_density<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    let g = CMat::from_fn(dim, dim, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let rho = &g * g.adjoint();
    let tr = trace(&rho).re;
    rho / c(tr)
}

/// Random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    let g = CMat::from_fn(dim, dim, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q.clone();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / c(d.norm()) } else { c(1.0) };
        for row in 0..dim {
            u[(row, k)] *= phase;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMat::zeros(5, 5);
        assert!(max_abs_diff(&expm(&z), &CMat::identity(5, 5)) < 1e-15);
    }

    #[test]
    fn expm_matches_spectral_exponential_of_hermitian_generator() {
        // exp(-i H t) computed from eigenpairs is an independent route.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [2, 4, 16] {
            let h = random_density(dim, &mut rng) * c(37.0);
            let t = 0.83;
            let direct = expm(&(&h * (-I * t)));
            let (vals, vecs) = eigh(&h);
            let d = CMat::from_diagonal(&CVec::from_iterator(dim, vals.iter().map(|v| (-I * (v * t)).exp())));
            let spectral = &vecs * d * vecs.adjoint();
            assert!(max_abs_diff(&direct, &spectral) < 1e-11, "dim {dim}");
        }
    }

    #[test]
    fn expm_agrees_with_nalgebra_on_non_normal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_unitary(6, &mut rng) * c(4.0) + random_density(6, &mut rng) * c(20.0);
        let reference = a.clone().exp();
        let scale = reference.norm();
        assert!(max_abs_diff(&expm(&a), &reference) / scale < 1e-11);
    }

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_density(5, &mut rng);
        let (vals, vecs) = eigh(&a);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMat::from_diagonal(&CVec::from_iterator(5, vals.iter().map(|&v| c(v))));
        assert!(max_abs_diff(&(&vecs * d * vecs.adjoint()), &a) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_unitary(4, &mut rng);
        assert!(max_abs_diff(&(&u * u.adjoint()), &CMat::identity(4, 4)) < 1e-12);
    }
}
