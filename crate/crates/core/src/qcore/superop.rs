//! Superoperators on column-stacked density matrices.
//!
//! With vec(X) stacking columns, vec(A X B) = (Bᵀ ⊗ A) vec(X). Left
//! multiplication by H is therefore I ⊗ H and right multiplication is
//! Hᵀ ⊗ I.

use super::linalg::{c, eigh, expm, max_abs_diff, trace, unvec, vec_of, CMat, I};
use super::state::DensityMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    mat: CMat,
}

impl SuperOperator {
    pub fn from_matrix(dim: usize, mat: CMat) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: mat.nrows() });
        }
        Ok(SuperOperator { dim, mat })
    }

    pub fn zero(dim: usize) -> Self {
        SuperOperator { dim, mat: CMat::zeros(dim * dim, dim * dim) }
    }

    pub fn identity(dim: usize) -> Self {
        SuperOperator { dim, mat: CMat::identity(dim * dim, dim * dim) }
    }

    /// −i[H, ·] (ħ = 1).
    pub fn hamiltonian(h: &CMat) -> Self {
        let d = h.nrows();
        let eye = CMat::identity(d, d);
        let mat = (eye.kronecker(h) - h.transpose().kronecker(&eye)) * (-I);
        SuperOperator { dim: d, mat }
    }

    /// 𝒥_σ ρ = σ ρ σ†.
    pub fn jump(sigma: &CMat) -> Self {
        let d = sigma.nrows();
        SuperOperator { dim: d, mat: sigma.conjugate().kronecker(sigma) }
    }

    /// 𝒟_σ ρ = σ ρ σ† − ½ σ†σ ρ − ½ ρ σ†σ.
    pub fn dissipator(sigma: &CMat) -> Self {
        let d = sigma.nrows();
        let eye = CMat::identity(d, d);
        let ss = sigma.adjoint() * sigma;
        let mat =
            sigma.conjugate().kronecker(sigma) - eye.kronecker(&ss) * c(0.5) - ss.transpose().kronecker(&eye) * c(0.5);
        SuperOperator { dim: d, mat }
    }

    /// ρ ↦ U ρ U†.
    pub fn unitary(u: &CMat) -> Self {
        let d = u.nrows();
        SuperOperator { dim: d, mat: u.conjugate().kronecker(u) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn scale(&self, factor: f64) -> Self {
        SuperOperator { dim: self.dim, mat: &self.mat * c(factor) }
    }

    pub fn add(&self, other: &SuperOperator) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(SuperOperator { dim: self.dim, mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &SuperOperator) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(SuperOperator { dim: self.dim, mat: &self.mat - &other.mat })
    }

    /// `self` after `first`: the map ρ ↦ self(first(ρ)).
    pub fn after(&self, first: &SuperOperator) -> Result<Self> {
        self.check_dim(first.dim)?;
        Ok(SuperOperator { dim: self.dim, mat: &self.mat * &first.mat })
    }

    /// exp(G t).
    pub fn exp(&self, t: f64) -> Self {
        SuperOperator { dim: self.dim, mat: expm(&(&self.mat * c(t))) }
    }

    pub fn apply_mat(&self, rho: &CMat) -> Result<CMat> {
        if rho.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.nrows() });
        }
        Ok(unvec(&(&self.mat * vec_of(rho)), self.dim))
    }

    /// Applies the map; the output keeps the register and is flagged
    /// unnormalized when its trace drifts from 1.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_mat(rho.mat())?;
        let normalized = rho.is_normalized() && (trace(&out).re - 1.0).abs() <= 1e-10;
        DensityMatrix::from_raw(rho.register().clone(), out, normalized)
    }

    /// Largest |Tr(G(E_ij))| − δ_ij-deviation: for a generator this should
    /// vanish, for a channel the trace of every E_ij image must equal δ_ij.
    fn trace_functional(&self) -> Vec<num_complex::Complex64> {
        // row vector vec(I)ᵀ · M
        let d = self.dim;
        (0..d * d).map(|col| (0..d).map(|k| self.mat[(k + k * d, col)]).sum()).collect()
    }

    /// vec(I)ᵀ · G = 0 within `tol`.
    pub fn is_trace_annihilating(&self, tol: f64) -> bool {
        self.trace_functional().iter().all(|z| z.norm() <= tol)
    }

    /// vec(I)ᵀ · Φ = vec(I)ᵀ within `tol`.
    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        let d = self.dim;
        self.trace_functional().iter().enumerate().all(|(col, z)| {
            let target = if col % d == col / d { 1.0 } else { 0.0 };
            (z - c(target)).norm() <= tol
        })
    }

    /// Choi matrix Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|), input factor first.
    pub fn choi(&self) -> CMat {
        choi_of_transfer(&self.mat, self.dim, self.dim)
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        eigh(&self.choi()).0[0]
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: dim });
        }
        Ok(())
    }
}

/// Choi matrix of a column-stacking transfer matrix of shape
/// (d_out², d_in²), ordered input ⊗ output.
pub fn choi_of_transfer(transfer: &CMat, din: usize, dout: usize) -> CMat {
    let n = din * dout;
    let mut choi = CMat::zeros(n, n);
    for i in 0..din {
        for j in 0..din {
            let col = i + j * din;
            for x in 0..dout {
                for y in 0..dout {
                    choi[(i * dout + x, j * dout + y)] = transfer[(x + y * dout, col)];
                }
            }
        }
    }
    choi
}

/// exp(G t) applied to ρ.
pub fn propagate(generator: &SuperOperator, t: f64, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if t < 0.0 {
        return Err(Error::param("t", "propagation time must be nonnegative"));
    }
    if rho.dim() != generator.dim() {
        return Err(Error::DimensionMismatch { expected: generator.dim(), found: rho.dim() });
    }
    generator.exp(t).apply(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{random_density, random_unitary};
    use crate::qcore::state::Register;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lowering() -> CMat {
        // |g⟩⟨e| with basis (g, e)
        CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])
    }

    fn excited() -> DensityMatrix {
        let mut m = CMat::zeros(2, 2);
        m[(1, 1)] = c(1.0);
        DensityMatrix::new(Register::single("q", 2), m, true).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let g = SuperOperator::dissipator(&lowering()).scale(5.0);
        let rho = excited();
        let out = propagate(&g, 0.0, &rho).unwrap();
        assert!(max_abs_diff(out.mat(), rho.mat()) < 1e-15);
    }

    #[test]
    fn pure_decay_matches_exponential() {
        let g = SuperOperator::dissipator(&lowering()).scale(5.0);
        let out = propagate(&g, 0.2, &excited()).unwrap();
        let expected = (-1.0f64).exp();
        assert!((out.mat()[(1, 1)].re - expected).abs() < 1e-12);
        assert!((out.mat()[(0, 0)].re - (1.0 - expected)).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_flow_conserves_purity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_density(4, &mut rng) * c(10.0);
        let g = SuperOperator::hamiltonian(&h);
        let rho = DensityMatrix::new(Register::single("x", 4), random_density(4, &mut rng), true).unwrap();
        for t in [0.1, 1.0, 7.3] {
            let out = propagate(&g, t, &rho).unwrap();
            assert!((out.purity() - rho.purity()).abs() < 1e-10);
        }
    }

    #[test]
    fn generator_trace_and_semigroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_density(3, &mut rng);
        let sigma = random_unitary(3, &mut rng);
        let g = SuperOperator::hamiltonian(&h).add(&SuperOperator::dissipator(&sigma)).unwrap();
        assert!(g.is_trace_annihilating(1e-12));
        let reg = Register::single("x", 3);
        for _ in 0..100 {
            let rho = random_density(3, &mut rng);
            let d = g.apply_mat(&rho).unwrap();
            assert!(trace(&d).norm() < 1e-10);
        }
        let rho = DensityMatrix::new(reg, random_density(3, &mut rng), true).unwrap();
        let (t1, t2) = (0.37, 1.21);
        let once = propagate(&g, t1 + t2, &rho).unwrap();
        let twice = propagate(&g, t2, &propagate(&g, t1, &rho).unwrap()).unwrap();
        assert!(max_abs_diff(once.mat(), twice.mat()) < 1e-10);
    }

    #[test]
    fn unitary_channel_choi_is_rank_one_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = random_unitary(2, &mut rng);
        let ch = SuperOperator::unitary(&u);
        assert!(ch.is_trace_preserving(1e-12));
        let (vals, _) = eigh(&ch.choi());
        assert!(vals[0] > -1e-12);
        assert!((vals[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = SuperOperator::identity(3);
        assert!(propagate(&g, 1.0, &excited()).is_err());
    }
}
