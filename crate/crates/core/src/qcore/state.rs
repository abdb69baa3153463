//! Labeled registers, kets, operators and density matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{c, eigh, is_hermitian, trace, CMat, CVec};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Ordered subsystem tags with their local dimensions. The first tag is the
/// most significant factor of the Kronecker product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl Register {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, dims: Vec<usize>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: dims.len() });
        }
        if dims.contains(&0) {
            return Err(Error::InvalidState("zero subsystem dimension".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::LabelCollision(l.clone()));
            }
        }
        Ok(Register { labels, dims })
    }

    pub fn qubits<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let dims = vec![2; labels.len()];
        Register::new(labels, dims)
    }

    pub fn single(label: &str, dim: usize) -> Self {
        Register { labels: vec![label.to_string()], dims: vec![dim] }
    }

    pub fn empty() -> Self {
        Register { labels: Vec::new(), dims: Vec::new() }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn concat(&self, other: &Register) -> Result<Register> {
        if let Some(l) = other.labels.iter().find(|l| self.labels.contains(l)) {
            return Err(Error::LabelCollision(l.clone()));
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut dims = self.dims.clone();
        dims.extend(other.dims.iter().copied());
        Ok(Register { labels, dims })
    }

    /// Register with subsystem `k` replaced by the given tags and dimensions.
    pub fn replace(&self, k: usize, labels: &[&str], dims: &[usize]) -> Result<Register> {
        let mut l: Vec<String> = self.labels[..k].to_vec();
        l.extend(labels.iter().map(|s| s.to_string()));
        l.extend(self.labels[k + 1..].iter().cloned());
        let mut d: Vec<usize> = self.dims[..k].to_vec();
        d.extend_from_slice(dims);
        d.extend_from_slice(&self.dims[k + 1..]);
        Register::new(l, d)
    }

    fn split(&self, k: usize) -> (usize, usize, usize) {
        let before: usize = self.dims[..k].iter().product();
        let after: usize = self.dims[k + 1..].iter().product();
        (before, self.dims[k], after)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    register: Register,
    amps: CVec,
}

impl Ket {
    pub fn new(register: Register, amps: CVec) -> Result<Self> {
        if register.dim() != amps.len() {
            return Err(Error::DimensionMismatch { expected: register.dim(), found: amps.len() });
        }
        Ok(Ket { register, amps })
    }

    /// Normalizes the amplitudes; rejects the zero vector.
    pub fn normalized(register: Register, amps: CVec) -> Result<Self> {
        let n = amps.norm();
        if n < 1e-300 {
            return Err(Error::InvalidState("zero vector cannot be normalized".into()));
        }
        Ket::new(register, amps / c(n))
    }

    pub fn basis(register: Register, index: usize) -> Result<Self> {
        let dim = register.dim();
        if index >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: index });
        }
        let mut amps = CVec::zeros(dim);
        amps[index] = c(1.0);
        Ket::new(register, amps)
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn amps(&self) -> &CVec {
        &self.amps
    }

    pub fn into_amps(self) -> CVec {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn inner(&self, other: &Ket) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn projector(&self) -> DensityMatrix {
        let m = &self.amps * self.amps.adjoint();
        DensityMatrix { register: self.register.clone(), mat: m, normalized: true }
    }

    /// Applies `op` to subsystem `label`.
    pub fn apply_local(&self, op: &CMat, label: &str) -> Result<Ket> {
        let k = self.register.position(label)?;
        let (before, d, after) = self.register.split(k);
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: op.nrows() });
        }
        let mut out = CVec::zeros(self.dim());
        for a in 0..before {
            for b in 0..after {
                for x in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for y in 0..d {
                        acc += op[(x, y)] * self.amps[(a * d + y) * after + b];
                    }
                    out[(a * d + x) * after + b] = acc;
                }
            }
        }
        Ok(Ket { register: self.register.clone(), amps: out })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    register: Register,
    mat: CMat,
    hermitian: bool,
}

impl Operator {
    pub fn new(register: Register, mat: CMat) -> Result<Self> {
        let d = register.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mat.nrows() });
        }
        Ok(Operator { register, mat, hermitian: false })
    }

    /// Builds an operator flagged Hermitian; rejects matrices with A ≠ A†
    /// beyond 1e-12.
    pub fn hermitian(register: Register, mat: CMat) -> Result<Self> {
        let mut op = Operator::new(register, mat)?;
        if !is_hermitian(&op.mat, 1e-12) {
            return Err(Error::InvalidState("operator flagged Hermitian is not".into()));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    register: Register,
    mat: CMat,
    normalized: bool,
}

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

impl DensityMatrix {
    /// Validated constructor: Hermitian, PSD, and unit trace when
    /// `normalized`, trace in [0, 1] otherwise.
    pub fn new(register: Register, mat: CMat, normalized: bool) -> Result<Self> {
        let rho = DensityMatrix::from_raw(register, mat, normalized)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Constructor that checks only shapes. Intermediate, unnormalized
    /// branches go through here.
    pub fn from_raw(register: Register, mat: CMat, normalized: bool) -> Result<Self> {
        let d = register.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mat.nrows() });
        }
        Ok(DensityMatrix { register, mat, normalized })
    }

    pub fn validate(&self) -> Result<()> {
        if !is_hermitian(&self.mat, HERMITIAN_TOL) {
            return Err(Error::InvalidState("not Hermitian".into()));
        }
        let tr = self.trace();
        if self.normalized {
            if (tr - 1.0).abs() > TRACE_TOL {
                return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
            }
        } else if !(-TRACE_TOL..=1.0 + TRACE_TOL).contains(&tr) {
            return Err(Error::InvalidState(format!("trace {tr} outside [0, 1]")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn from_ket(ket: &Ket) -> Self {
        ket.projector()
    }

    pub fn maximally_mixed(register: Register) -> Self {
        let d = register.dim();
        let mat = CMat::identity(d, d) * c(1.0 / d as f64);
        DensityMatrix { register, mat, normalized: true }
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.mat * &self.mat)).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.mat).0.first().copied().unwrap_or(0.0)
    }

    /// Divides by the trace and marks the state normalized.
    pub fn normalize(&self) -> Result<DensityMatrix> {
        let tr = self.trace();
        if tr <= 1e-300 {
            return Err(Error::Numerical(format!("cannot normalize branch with trace {tr:.3e}")));
        }
        Ok(DensityMatrix { register: self.register.clone(), mat: &self.mat / c(tr), normalized: true })
    }

    /// Scales entries and flags the result as an unnormalized branch.
    pub fn scaled(&self, factor: f64) -> DensityMatrix {
        DensityMatrix { register: self.register.clone(), mat: &self.mat * c(factor), normalized: false }
    }

    pub fn relabel(&self, register: Register) -> Result<DensityMatrix> {
        DensityMatrix::from_raw(register, self.mat.clone(), self.normalized)
    }

    /// ⟨ψ|ρ|ψ⟩.
    pub fn expectation_ket(&self, ket: &Ket) -> Result<f64> {
        if ket.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: ket.dim() });
        }
        Ok((ket.amps().adjoint() * &self.mat * ket.amps())[(0, 0)].re)
    }

    pub fn expectation(&self, op: &CMat) -> C64 {
        trace(&(op * &self.mat))
    }

    /// Reduced state over the subsystems in `keep`, in register order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let reg = &self.register;
        let mut kept: Vec<usize> = keep.iter().map(|l| reg.position(l)).collect::<Result<_>>()?;
        kept.sort_unstable();
        kept.dedup();
        let n = reg.len();
        let dims = reg.dims();
        let traced: Vec<usize> = (0..n).filter(|k| !kept.contains(k)).collect();
        let keep_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
        let tr_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
        let dk: usize = keep_dims.iter().product();
        let dt: usize = tr_dims.iter().product();

        // strides of each subsystem in the full index
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let offsets = |sub: &[usize], sub_dims: &[usize], mut idx: usize| -> usize {
            let mut off = 0;
            for (pos, &k) in sub.iter().enumerate().rev() {
                let d = sub_dims[pos];
                off += (idx % d) * strides[k];
                idx /= d;
            }
            off
        };
        let keep_off: Vec<usize> = (0..dk).map(|i| offsets(&kept, &keep_dims, i)).collect();
        let tr_off: Vec<usize> = (0..dt).map(|i| offsets(&traced, &tr_dims, i)).collect();

        let mut out = CMat::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &tr_off {
                    acc += self.mat[(keep_off[i] + t, keep_off[j] + t)];
                }
                out[(i, j)] = acc;
            }
        }
        let labels: Vec<String> = kept.iter().map(|&k| reg.labels()[k].clone()).collect();
        let register = Register::new(labels, keep_dims)?;
        Ok(DensityMatrix { register, mat: out, normalized: self.normalized })
    }

    /// Unnormalized branch (P⊗I) ρ (P⊗I) and its probability.
    pub fn measure_project(&self, projector: &CMat, label: &str) -> Result<(DensityMatrix, f64)> {
        let k = self.register.position(label)?;
        let d = self.register.dims()[k];
        if projector.nrows() != d || projector.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: projector.nrows() });
        }
        if !is_hermitian(projector, 1e-10) {
            return Err(Error::InvalidProjector("not Hermitian".into()));
        }
        let sq = projector * projector;
        if super::linalg::max_abs_diff(&sq, projector) > 1e-10 {
            return Err(Error::InvalidProjector("not idempotent".into()));
        }
        let left = apply_local_left(&self.mat, projector, self.register.dims(), k);
        let both = apply_local_right(&left, projector, self.register.dims(), k);
        let branch = DensityMatrix { register: self.register.clone(), mat: both, normalized: false };
        let p = branch.trace().max(0.0);
        Ok((branch, p))
    }

    /// U ρ U† with U acting on subsystem `label`.
    pub fn apply_unitary(&self, u: &CMat, label: &str) -> Result<DensityMatrix> {
        let k = self.register.position(label)?;
        let d = self.register.dims()[k];
        if u.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: u.nrows() });
        }
        let left = apply_local_left(&self.mat, u, self.register.dims(), k);
        let both = apply_local_right(&left, &u.adjoint(), self.register.dims(), k);
        Ok(DensityMatrix { register: self.register.clone(), mat: both, normalized: self.normalized })
    }

    /// Applies a linear map given as a column-stacking transfer matrix of
    /// shape (d_out², d_in²) to subsystem `label`. The subsystem is replaced
    /// by `out_labels` with dimensions `out_dims` (product d_out).
    pub fn apply_local_map(
        &self,
        transfer: &CMat,
        label: &str,
        out_labels: &[&str],
        out_dims: &[usize],
    ) -> Result<DensityMatrix> {
        let k = self.register.position(label)?;
        let (before, din, after) = self.register.split(k);
        let dout: usize = out_dims.iter().product();
        if transfer.ncols() != din * din || transfer.nrows() != dout * dout {
            return Err(Error::DimensionMismatch { expected: dout * dout * din * din, found: transfer.len() });
        }
        let register = self.register.replace(k, out_labels, out_dims)?;
        let dnew = before * dout * after;
        let mut out = CMat::zeros(dnew, dnew);
        let old = |a: usize, y: usize, b: usize| (a * din + y) * after + b;
        let new = |a: usize, x: usize, b: usize| (a * dout + x) * after + b;
        for a in 0..before {
            for b in 0..after {
                for a2 in 0..before {
                    for b2 in 0..after {
                        for y2 in 0..din {
                            for y in 0..din {
                                let v = self.mat[(old(a, y, b), old(a2, y2, b2))];
                                if v == C64::new(0.0, 0.0) {
                                    continue;
                                }
                                let col = y + y2 * din;
                                for x2 in 0..dout {
                                    for x in 0..dout {
                                        let t = transfer[(x + x2 * dout, col)];
                                        out[(new(a, x, b), new(a2, x2, b2))] += t * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(DensityMatrix { register, mat: out, normalized: false })
    }
}

/// (I ⊗ op ⊗ I) · m, with `op` on subsystem `k`.
pub fn apply_local_left(m: &CMat, op: &CMat, dims: &[usize], k: usize) -> CMat {
    let before: usize = dims[..k].iter().product();
    let d = dims[k];
    let after: usize = dims[k + 1..].iter().product();
    let n = m.ncols();
    let mut out = CMat::zeros(m.nrows(), n);
    for j in 0..n {
        for a in 0..before {
            for b in 0..after {
                for x in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for y in 0..d {
                        acc += op[(x, y)] * m[((a * d + y) * after + b, j)];
                    }
                    out[((a * d + x) * after + b, j)] = acc;
                }
            }
        }
    }
    out
}

/// m · (I ⊗ op ⊗ I), with `op` on subsystem `k`.
pub fn apply_local_right(m: &CMat, op: &CMat, dims: &[usize], k: usize) -> CMat {
    let before: usize = dims[..k].iter().product();
    let d = dims[k];
    let after: usize = dims[k + 1..].iter().product();
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for a in 0..before {
            for b in 0..after {
                for x in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for y in 0..d {
                        acc += m[(i, (a * d + y) * after + b)] * op[(y, x)];
                    }
                    out[(i, (a * d + x) * after + b)] = acc;
                }
            }
        }
    }
    out
}

/// Kronecker product with concatenated labels.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

impl Tensor for Ket {
    fn tensor(&self, other: &Ket) -> Result<Ket> {
        let register = self.register.concat(&other.register)?;
        Ket::new(register, self.amps.kronecker(&other.amps))
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Operator) -> Result<Operator> {
        let register = self.register.concat(&other.register)?;
        Ok(Operator { register, mat: self.mat.kronecker(&other.mat), hermitian: self.hermitian && other.hermitian })
    }
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let register = self.register.concat(&other.register)?;
        Ok(DensityMatrix {
            register,
            mat: self.mat.kronecker(&other.mat),
            normalized: self.normalized && other.normalized,
        })
    }
}

/// JSON document for density matrices: row-major real and imaginary parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub dim: usize,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default = "default_true")]
    pub normalized: bool,
}

fn default_true() -> bool {
    true
}

impl DensityMatrix {
    pub fn to_doc(&self) -> MatrixDoc {
        let d = self.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(self.mat[(i, j)].re);
                im.push(self.mat[(i, j)].im);
            }
        }
        MatrixDoc {
            dim: d,
            labels: self.register.labels().to_vec(),
            dims: Some(self.register.dims().to_vec()),
            re,
            im,
            normalized: self.normalized,
        }
    }

    pub fn from_doc(doc: &MatrixDoc) -> Result<DensityMatrix> {
        let d = doc.dim;
        if doc.re.len() != d * d || doc.im.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: doc.re.len().min(doc.im.len()) });
        }
        let dims = match &doc.dims {
            Some(dims) => dims.clone(),
            None if doc.labels.len() == 1 => vec![d],
            None if 1usize.checked_shl(doc.labels.len() as u32) == Some(d) => vec![2; doc.labels.len()],
            None => return Err(Error::Parse("cannot infer subsystem dimensions; add `dims`".into())),
        };
        let register = Register::new(doc.labels.clone(), dims)?;
        let mat = DMatrix::from_fn(d, d, |i, j| C64::new(doc.re[i * d + j], doc.im[i * d + j]));
        DensityMatrix::new(register, mat, doc.normalized)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("matrix documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<DensityMatrix> {
        let doc: MatrixDoc = serde_json::from_str(text)?;
        DensityMatrix::from_doc(&doc)
    }
}
