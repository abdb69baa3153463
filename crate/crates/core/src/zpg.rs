//! Zero-photon-generator conditioning and the time-integrated spin-photon
//! emission process map.
//!
//! The photonic qubit uses |0⟩ = |R⟩, |1⟩ = |L⟩. The map takes a 2×2 spin
//! density matrix to a 4×4 (photon ⊗ spin) density matrix and is stored as
//! a 16×4 column-stacking transfer matrix.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{eigh, pauli, trace, unvec, vec_of};
use crate::qcore::{c, choi_of_transfer, CMat, DensityMatrix, SuperOperator, I};
use crate::trion::{self, OverhauserSample, TrionParams};

/// Polarization p = (cos θ, sin θ e^{iφ}) in the (H, V) basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationAxis {
    pub theta: f64,
    pub phi: f64,
}

impl PolarizationAxis {
    pub fn new(theta: f64, phi: f64) -> Self {
        PolarizationAxis { theta, phi }
    }

    pub fn r() -> Self {
        PolarizationAxis::new(FRAC_PI_4, -FRAC_PI_2)
    }

    pub fn l() -> Self {
        PolarizationAxis::new(FRAC_PI_4, FRAC_PI_2)
    }

    pub fn h() -> Self {
        PolarizationAxis::new(0.0, 0.0)
    }

    pub fn v() -> Self {
        PolarizationAxis::new(FRAC_PI_2, 0.0)
    }

    pub fn d() -> Self {
        PolarizationAxis::new(FRAC_PI_4, 0.0)
    }

    pub fn a() -> Self {
        PolarizationAxis::new(FRAC_PI_4, PI)
    }

    /// The six cardinal polarizations in the order R, L, H, V, D, A.
    pub fn cardinal() -> [PolarizationAxis; 6] {
        [Self::r(), Self::l(), Self::h(), Self::v(), Self::d(), Self::a()]
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "R" => Ok(Self::r()),
            "L" => Ok(Self::l()),
            "H" => Ok(Self::h()),
            "V" => Ok(Self::v()),
            "D" => Ok(Self::d()),
            "A" => Ok(Self::a()),
            other => Err(Error::Parse(format!("unknown polarization `{other}`"))),
        }
    }

    /// Orthogonal polarization, up to a global phase that the jump
    /// superoperator does not see.
    pub fn orthogonal(&self) -> Self {
        PolarizationAxis::new(FRAC_PI_2 - self.theta, self.phi + PI)
    }

    /// Coefficients (c_R, c_L) with σ_p = c_R σ_R + c_L σ_L.
    pub fn circular_components(&self) -> (C64, C64) {
        let h = c(self.theta.cos());
        let v = C64::from_polar(self.theta.sin(), self.phi);
        ((h + I * v) * FRAC_1_SQRT_2, (h - I * v) * FRAC_1_SQRT_2)
    }

    /// σ_p = cos θ σ_H + sin θ e^{iφ} σ_V on the trion space.
    pub fn dipole(&self) -> CMat {
        trion::sigma_h() * c(self.theta.cos()) + trion::sigma_v() * C64::from_polar(self.theta.sin(), self.phi)
    }

    /// Photon state selected by a detector behind this polarizer, in the
    /// (R, L) basis: ⟨p|R⟩ = c_R, ⟨p|L⟩ = c_L.
    pub fn photon_ket(&self) -> [C64; 2] {
        let (cr, cl) = self.circular_components();
        [cr.conj(), cl.conj()]
    }

    pub fn photon_projector(&self) -> CMat {
        let k = self.photon_ket();
        CMat::from_fn(2, 2, |i, j| k[i] * k[j].conj())
    }

    /// |p⟩⟨p| − |p̄⟩⟨p̄|.
    pub fn photon_observable(&self) -> CMat {
        self.photon_projector() - self.orthogonal().photon_projector()
    }
}

/// Polarization pairs used to measure photonic σ_x, σ_y and σ_z, given by
/// their "+" axes. The identity correlator uses the σ_z pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationFrame {
    pub axes: [PolarizationAxis; 3],
}

impl Default for PolarizationFrame {
    fn default() -> Self {
        PolarizationFrame { axes: [PolarizationAxis::h(), PolarizationAxis::d(), PolarizationAxis::r()] }
    }
}

impl PolarizationFrame {
    fn describe(&self) -> String {
        self.axes.iter().map(|a| format!("(θ={:.4}, φ={:.4})", a.theta, a.phi)).collect::<Vec<_>>().join(", ")
    }
}

/// Piece of an emission interval: free evolution for a duration (ns) or an
/// instantaneous spin rotation pulse by the given angle (rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Evolve(f64),
    Osrp(f64),
}

impl Segment {
    fn duration(&self) -> f64 {
        match self {
            Segment::Evolve(dt) => *dt,
            Segment::Osrp(_) => 0.0,
        }
    }
}

pub fn schedule_duration(schedule: &[Segment]) -> f64 {
    schedule.iter().map(Segment::duration).sum()
}

/// 𝓛 − η𝓙_p − η̄𝓙_p̄, where the jumps carry the radiative rate γ.
pub fn zpg_generator(
    l: &SuperOperator,
    gamma: f64,
    p: &PolarizationAxis,
    eta: u8,
    eta_bar: u8,
) -> Result<SuperOperator> {
    if eta > 1 || eta_bar > 1 {
        return Err(Error::param("eta", "detector efficiencies must be 0 or 1"));
    }
    let mut g = l.clone();
    if eta == 1 {
        g = g.sub(&SuperOperator::jump(&p.dipole()).scale(gamma))?;
    }
    if eta_bar == 1 {
        g = g.sub(&SuperOperator::jump(&p.orthogonal().dipole()).scale(gamma))?;
    }
    Ok(g)
}

/// Propagator of a segmented schedule under generator `g`, with spin
/// rotation pulses built from `params`.
pub fn schedule_propagator(g: &SuperOperator, schedule: &[Segment], params: &TrionParams) -> Result<SuperOperator> {
    let mut out = SuperOperator::identity(g.dim());
    for seg in schedule {
        let step = match *seg {
            Segment::Evolve(dt) => {
                if !(dt >= 0.0) {
                    return Err(Error::param("t", "segment duration must be nonnegative"));
                }
                g.exp(dt)
            }
            Segment::Osrp(theta) => trion::osrp_channel(params, theta)?,
        };
        out = step.after(&out)?;
    }
    Ok(out)
}

/// Unnormalized threshold-detection conditioned states at time t.
#[derive(Clone, Debug)]
pub struct ThresholdQuartet {
    pub rho_00: DensityMatrix,
    pub rho_10: DensityMatrix,
    pub rho_01: DensityMatrix,
    pub rho_11: DensityMatrix,
    pub p: PolarizationAxis,
    pub t: f64,
}

impl ThresholdQuartet {
    /// Probability of at least one p click and no p̄ click.
    pub fn detection_probability(&self) -> f64 {
        self.rho_10.trace()
    }

    pub fn sum(&self) -> CMat {
        self.rho_00.mat() + self.rho_10.mat() + self.rho_01.mat() + self.rho_11.mat()
    }
}

pub fn threshold_quartet(
    rho0: &DensityMatrix,
    p: &PolarizationAxis,
    t: f64,
    l: &SuperOperator,
    gamma: f64,
) -> Result<ThresholdQuartet> {
    if !(t >= 0.0) {
        return Err(Error::param("t", "evaluation time must be nonnegative"));
    }
    let evolve = |eta, eta_bar| -> Result<CMat> {
        let g = zpg_generator(l, gamma, p, eta, eta_bar)?;
        g.exp(t).apply_mat(rho0.mat())
    };
    let z00 = evolve(0, 0)?;
    let z10 = evolve(1, 0)?;
    let z01 = evolve(0, 1)?;
    let z11 = evolve(1, 1)?;
    let reg = rho0.register().clone();
    let mk = |m: CMat| -> Result<DensityMatrix> {
        let tr = trace(&m).re;
        if tr < -1e-8 {
            return Err(Error::Numerical(format!("conditioned state with negative trace {tr:.3e}")));
        }
        DensityMatrix::from_raw(reg.clone(), m, false)
    };
    Ok(ThresholdQuartet {
        rho_00: mk(z11.clone())?,
        rho_10: mk(&z01 - &z11)?,
        rho_01: mk(&z10 - &z11)?,
        rho_11: mk(&z00 - &z10 - &z01 + &z11)?,
        p: *p,
        t,
    })
}

/// Spin state conditioned on a p click and no p̄ click, with its
/// probability.
#[derive(Clone, Debug)]
pub struct ConditionalSpin {
    pub axis: PolarizationAxis,
    pub state: CMat,
    pub probability: f64,
}

/// Propagators for the six cardinal polarizations of one emission interval:
/// K_p = E_{p̄} − E_{both}, where E_q evolves with 𝓛 − 𝓙_q.
struct EmissionKernels {
    excitation: SuperOperator,
    detect: Vec<(PolarizationAxis, SuperOperator)>,
}

impl EmissionKernels {
    fn new(
        params: &TrionParams,
        s: &OverhauserSample,
        schedule: &[Segment],
        axes: &[PolarizationAxis],
    ) -> Result<Self> {
        let l = trion::liouvillian(params, s)?;
        let gamma = params.gamma();
        let both = l
            .sub(&SuperOperator::jump(&trion::sigma_r()).scale(gamma))?
            .sub(&SuperOperator::jump(&trion::sigma_l()).scale(gamma))?;
        let e_both = schedule_propagator(&both, schedule, params)?;
        let detect = axes
            .par_iter()
            .map(|p| {
                let g = zpg_generator(&l, gamma, p, 0, 1)?;
                let e = schedule_propagator(&g, schedule, params)?;
                Ok((*p, e.sub(&e_both)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmissionKernels { excitation: trion::excitation_channel(params)?, detect })
    }

    fn conditionals(&self, spin: &CMat) -> Result<Vec<ConditionalSpin>> {
        let rho0 = self.excitation.apply_mat(&trion::embed_spin(spin))?;
        self.detect
            .iter()
            .map(|(axis, k)| {
                let out = k.apply_mat(&rho0)?;
                let state = trion::ground_block(&out);
                let probability = trace(&state).re;
                if probability < -1e-8 {
                    return Err(Error::Numerical(format!("negative detection probability {probability:.3e}")));
                }
                Ok(ConditionalSpin { axis: *axis, state, probability })
            })
            .collect()
    }
}

fn frame_axes(frame: &PolarizationFrame) -> Vec<PolarizationAxis> {
    frame.axes.iter().flat_map(|a| [*a, a.orthogonal()]).collect()
}

/// Conditional spin states for every polarization of `frame` and its
/// orthogonal partners, for one spin input and emission interval.
pub fn conditional_spin_states(
    params: &TrionParams,
    s: &OverhauserSample,
    schedule: &[Segment],
    frame: &PolarizationFrame,
    spin: &CMat,
) -> Result<Vec<ConditionalSpin>> {
    EmissionKernels::new(params, s, schedule, &frame_axes(frame))?.conditionals(spin)
}

/// Post-selected spin-photon process map at a fixed time after the
/// excitation pulse.
#[derive(Clone, Debug)]
pub struct ProcessMap {
    transfer: CMat,
    time: f64,
    post_selected: bool,
    detection_probability: f64,
    condition: f64,
}

/// Spin inputs |0⟩, |1⟩, |+⟩, |i⟩ as Bloch vectors.
const INPUT_BLOCH: [[f64; 3]; 4] = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

pub const MAX_CONDITION: f64 = 1e8;

fn bloch_state(r: &[f64; 3]) -> CMat {
    (pauli(0) + pauli(1) * c(r[0]) + pauli(2) * c(r[1]) + pauli(3) * c(r[2])) * c(0.5)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl ProcessMap {
    pub fn from_transfer(transfer: CMat, time: f64, post_selected: bool) -> Result<Self> {
        if transfer.nrows() != 16 || transfer.ncols() != 4 {
            return Err(Error::DimensionMismatch { expected: 64, found: transfer.len() });
        }
        Ok(ProcessMap { transfer, time, post_selected, detection_probability: 1.0, condition: 1.0 })
    }

    /// Inverts the 64 correlators ⟨σ_i^(e) σ_j^(p)⟩ measured on four spin
    /// inputs. Each correlator is normalized by the detection probability of
    /// its polarization pair.
    pub fn reconstruct(
        params: &TrionParams,
        s: &OverhauserSample,
        schedule: &[Segment],
        frame: &PolarizationFrame,
    ) -> Result<Self> {
        let axes = frame_axes(frame);
        let kernels = EmissionKernels::new(params, s, schedule, &axes)?;

        // photon observables: identity, then the three frame pairs
        let mut m = DMatrix::<f64>::zeros(4, 4);
        m[(0, 0)] = 1.0;
        for (k, a) in frame.axes.iter().enumerate() {
            let obs = a.photon_observable();
            for j in 0..4 {
                m[(k + 1, j)] = 0.5 * trace(&(&obs * pauli(j))).re;
            }
        }
        let mut r = DMatrix::<f64>::zeros(4, 4);
        for (k, b) in INPUT_BLOCH.iter().enumerate() {
            r[(k, 0)] = 1.0;
            for a in 0..3 {
                r[(k, a + 1)] = b[a];
            }
        }
        let design = m.kronecker(&DMatrix::<f64>::identity(4, 4)).kronecker(&r);
        let condition = condition_number(&design);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition, bases: frame.describe() });
        }

        let mut obs = vec![0.0; 64];
        let mut detection = 0.0;
        for (kin, b) in INPUT_BLOCH.iter().enumerate() {
            let cond = kernels.conditionals(&bloch_state(b))?;
            let pair = |k: usize| (&cond[2 * k], &cond[2 * k + 1]);
            let (zp, zm) = pair(2);
            let norm_z = zp.probability + zm.probability;
            if kin < 2 {
                detection += 0.5 * norm_z;
            }
            for i in 0..4 {
                let sp = pauli(i);
                let ev = |x: &ConditionalSpin| trace(&(&sp * &x.state)).re;
                for k in 0..4 {
                    let value = if k == 0 {
                        (ev(zp) + ev(zm)) / norm_z
                    } else {
                        let (plus, minus) = pair(k - 1);
                        let norm = plus.probability + minus.probability;
                        if !(norm > 1e-9) {
                            return Err(Error::Numerical(format!(
                                "detection probability {norm:.3e} too small at t = {:.4} ns",
                                schedule_duration(schedule)
                            )));
                        }
                        (ev(plus) - ev(minus)) / norm
                    };
                    obs[(k * 4 + i) * 4 + kin] = value;
                }
            }
        }

        let pinv = design.pseudo_inverse(1e-12).map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
        let coeffs = pinv * nalgebra::DVector::from_vec(obs);

        let mut transfer = CMat::zeros(16, 4);
        for j in 0..4 {
            for i in 0..4 {
                let out = vec_of(&pauli(j).kronecker(&pauli(i))) * c(0.25);
                for mm in 0..4 {
                    let a = coeffs[(j * 4 + i) * 4 + mm];
                    if a == 0.0 {
                        continue;
                    }
                    let input = vec_of(&pauli(mm).transpose());
                    transfer += &out * input.transpose() * c(a);
                }
            }
        }
        Ok(ProcessMap {
            transfer,
            time: schedule_duration(schedule),
            post_selected: true,
            detection_probability: detection,
            condition,
        })
    }

    /// Same map metadata with a new transfer matrix and evaluation time,
    /// for maps followed by further spin-only channels.
    pub fn with_transfer(&self, transfer: CMat, time: f64) -> Result<Self> {
        let mut m = ProcessMap::from_transfer(transfer, time, self.post_selected)?;
        m.detection_probability = self.detection_probability;
        m.condition = self.condition;
        Ok(m)
    }

    pub fn transfer(&self) -> &CMat {
        &self.transfer
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_post_selected(&self) -> bool {
        self.post_selected
    }

    /// P_R + P_L averaged over the |↑⟩ and |↓⟩ inputs.
    pub fn detection_probability(&self) -> f64 {
        self.detection_probability
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Applies the map to a 2×2 spin density matrix, giving the 4×4
    /// (photon ⊗ spin) output.
    pub fn apply(&self, spin: &CMat) -> Result<CMat> {
        if spin.nrows() != 2 || spin.ncols() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: spin.nrows() });
        }
        Ok(unvec(&(&self.transfer * vec_of(spin)), 4))
    }

    /// Choi matrix, input ⊗ (photon ⊗ spin).
    pub fn choi(&self) -> CMat {
        choi_of_transfer(&self.transfer, 2, 4)
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        eigh(&self.choi()).0[0]
    }

    pub fn to_doc(&self) -> TransferDoc {
        let (rows, cols) = self.transfer.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(self.transfer[(i, j)].re);
                im.push(self.transfer[(i, j)].im);
            }
        }
        TransferDoc { rows, cols, re, im, time_ns: self.time, post_selected: self.post_selected }
    }

    pub fn from_doc(doc: &TransferDoc) -> Result<Self> {
        if doc.re.len() != doc.rows * doc.cols || doc.im.len() != doc.rows * doc.cols {
            return Err(Error::DimensionMismatch { expected: doc.rows * doc.cols, found: doc.re.len() });
        }
        let t = CMat::from_fn(doc.rows, doc.cols, |i, j| C64::new(doc.re[i * doc.cols + j], doc.im[i * doc.cols + j]));
        ProcessMap::from_transfer(t, doc.time_ns, doc.post_selected)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("transfer documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ProcessMap::from_doc(&serde_json::from_str(text)?)
    }
}

/// Row-major transfer matrix document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferDoc {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub time_ns: f64,
    pub post_selected: bool,
}

/// Process map evaluated `t` ns after the excitation pulse.
pub fn emission_process_map(params: &TrionParams, s: &OverhauserSample, t: f64) -> Result<ProcessMap> {
    ProcessMap::reconstruct(params, s, &[Segment::Evolve(t)], &PolarizationFrame::default())
}

/// Process map over a segmented emission interval.
pub fn emission_process_map_schedule(
    params: &TrionParams,
    s: &OverhauserSample,
    schedule: &[Segment],
) -> Result<ProcessMap> {
    ProcessMap::reconstruct(params, s, schedule, &PolarizationFrame::default())
}
