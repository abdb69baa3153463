//! Four-level trion model of a negatively charged quantum dot.
//!
//! Levels are ordered |↑⟩, |↓⟩, |↓↑⇑⟩, |↓↑⇓⟩. The optical lowering operators
//! are σ_R = |↑⟩⟨↓↑⇑| and σ_L = |↓⟩⟨↓↑⇓|; the static field points along y.
//! Times are in ns, fields in mT, and energies are angular frequencies in
//! rad/ns.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{c, CMat, Operator, Register, SuperOperator, I};

/// Bohr magneton divided by ħ, in rad·ns⁻¹·mT⁻¹ (CODATA μ_B/h =
/// 13.996 244 936 GHz/T).
pub const MU_B: f64 = 2.0 * PI * 13.996_244_936e-3;

pub const TRION_DIM: usize = 4;
pub const TRION_LABEL: &str = "trion";

/// Level indices of the trion basis.
pub mod level {
    pub const UP: usize = 0;
    pub const DOWN: usize = 1;
    pub const TRION_UP: usize = 2;
    pub const TRION_DOWN: usize = 3;
}

fn ketbra(i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(TRION_DIM, TRION_DIM);
    m[(i, j)] = c(1.0);
    m
}

pub fn sigma_r() -> CMat {
    ketbra(level::UP, level::TRION_UP)
}

pub fn sigma_l() -> CMat {
    ketbra(level::DOWN, level::TRION_DOWN)
}

/// σ_H = (σ_L + σ_R)/√2.
pub fn sigma_h() -> CMat {
    (sigma_l() + sigma_r()) * c(FRAC_1_SQRT_2)
}

/// σ_V = −i(σ_L − σ_R)/√2.
pub fn sigma_v() -> CMat {
    (sigma_l() - sigma_r()) * (-I * FRAC_1_SQRT_2)
}

pub fn sigma_x_e() -> CMat {
    ketbra(level::UP, level::DOWN) + ketbra(level::DOWN, level::UP)
}

/// σ_y^(e) = i(|↓⟩⟨↑| − |↑⟩⟨↓|).
pub fn sigma_y_e() -> CMat {
    (ketbra(level::DOWN, level::UP) - ketbra(level::UP, level::DOWN)) * I
}

pub fn sigma_z_e() -> CMat {
    ketbra(level::UP, level::UP) - ketbra(level::DOWN, level::DOWN)
}

/// σ_y^(h) = i(|↓↑⇓⟩⟨↓↑⇑| − |↓↑⇑⟩⟨↓↑⇓|).
pub fn sigma_y_h() -> CMat {
    (ketbra(level::TRION_DOWN, level::TRION_UP) - ketbra(level::TRION_UP, level::TRION_DOWN)) * I
}

pub fn sigma_z_h() -> CMat {
    ketbra(level::TRION_UP, level::TRION_UP) - ketbra(level::TRION_DOWN, level::TRION_DOWN)
}

pub fn ground_projector() -> CMat {
    ketbra(level::UP, level::UP) + ketbra(level::DOWN, level::DOWN)
}

/// Embeds a 2×2 spin operator into the ground block of the trion space.
pub fn embed_spin(spin: &CMat) -> CMat {
    let mut m = CMat::zeros(TRION_DIM, TRION_DIM);
    m.view_mut((0, 0), (2, 2)).copy_from(spin);
    m
}

/// Ground-manifold block of a trion operator.
pub fn ground_block(m: &CMat) -> CMat {
    m.view((0, 0), (2, 2)).into_owned()
}

/// Pulse-area convention of the excitation rotation. The literal generator
/// cos φ σ_{y,H} + sin φ σ_{y,V} couples each circular transition with
/// strength 1/√2, so its "π" pulse transfers sin²(π/2√2) ≈ 0.80 of the
/// population. `Normalized` rescales the generator by √2 for full inversion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseArea {
    #[default]
    Literal,
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDoc", try_from = "ParamsDoc")]
pub struct TrionParams {
    /// Radiative lifetime T1 (ns).
    pub t1: f64,
    /// Static field along y (mT).
    pub b: f64,
    /// Excitation pulse period (ns).
    pub tau_ex: f64,
    /// OSRP timing after excitation (ns).
    pub tau_osrp: f64,
    /// Overhauser field standard deviation (mT).
    pub b_oh_sigma: f64,
    pub g_e: f64,
    pub g_h: f64,
    pub lambda_ex: f64,
    /// Excitation polarization angle (rad).
    pub phi_ex: f64,
    pub lambda_osrp: f64,
    /// Rotation produced by a nominal π OSRP (rad).
    pub theta_osrp: f64,
    pub pulse_area: PulseArea,
}

impl TrionParams {
    /// Fixed and fitted operating point of the experiment.
    pub fn measured() -> Self {
        TrionParams {
            t1: 0.200,
            b: 60.0,
            tau_ex: 0.600,
            tau_osrp: 0.300,
            b_oh_sigma: 9.0,
            g_e: 0.60,
            g_h: 0.30,
            lambda_ex: 0.94,
            phi_ex: 0.02 * PI,
            lambda_osrp: 0.74,
            theta_osrp: 1.03 * PI,
            pulse_area: PulseArea::Literal,
        }
    }

    /// Vanishing-imperfection limit: no Overhauser field, unit purities,
    /// T1 = 1 ps and an electron g factor chosen so that the mean
    /// post-emission precession over one pulse period is exactly π/2.
    pub fn ideal() -> Self {
        TrionParams::ideal_with_lifetime(1e-3)
    }

    pub fn ideal_with_lifetime(t1: f64) -> Self {
        let base = TrionParams::measured();
        let g_e = (PI / 2.0) / (MU_B * base.b * (base.tau_ex - t1));
        TrionParams {
            t1,
            b_oh_sigma: 0.0,
            g_e,
            g_h: 0.0,
            lambda_ex: 1.0,
            phi_ex: 0.0,
            lambda_osrp: 1.0,
            theta_osrp: PI,
            ..base
        }
    }

    /// Near-term positive-trion source: 100 ps lifetime, ten-fold longer
    /// spin coherence and a 0.995 process-fidelity spin rotation.
    pub fn near_term() -> Self {
        let mut p = TrionParams {
            t1: 0.100,
            b_oh_sigma: 0.9,
            lambda_ex: 1.0,
            phi_ex: 0.0,
            lambda_osrp: 0.99,
            theta_osrp: PI,
            ..TrionParams::measured()
        };
        p.tau_ex = p.quarter_period_spacing();
        p.tau_osrp = p.tau_ex / 2.0;
        p
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "measured" => Ok(TrionParams::measured()),
            "ideal" => Ok(TrionParams::ideal()),
            "near-term" | "near_term" => Ok(TrionParams::near_term()),
            other => Err(Error::Parse(format!("unknown parameter preset `{other}`"))),
        }
    }

    pub fn delta_e(&self) -> f64 {
        MU_B * self.g_e * self.b
    }

    pub fn delta_h(&self) -> f64 {
        MU_B * self.g_h * self.b
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.t1
    }

    pub fn larmor_period(&self) -> f64 {
        2.0 * PI / self.delta_e()
    }

    /// Pure electron precession time for a π/2 rotation.
    pub fn quarter_period(&self) -> f64 {
        PI / (2.0 * self.delta_e())
    }

    /// Pulse spacing whose mean effective precession is π/2 once the
    /// hole-precession interval during the lifetime is accounted for.
    pub fn quarter_period_spacing(&self) -> f64 {
        (PI / 2.0 + (self.delta_e() - self.delta_h()) * self.t1) / self.delta_e()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("t1", self.t1),
            ("b", self.b),
            ("tau_ex", self.tau_ex),
            ("tau_osrp", self.tau_osrp),
            ("b_oh_sigma", self.b_oh_sigma),
            ("g_e", self.g_e),
            ("g_h", self.g_h),
            ("lambda_ex", self.lambda_ex),
            ("phi_ex", self.phi_ex),
            ("lambda_osrp", self.lambda_osrp),
            ("theta_osrp", self.theta_osrp),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::param(name, "must be finite"));
        }
        if self.t1 <= 0.0 {
            return Err(Error::param("t1", "lifetime must be positive"));
        }
        check_purity("lambda_ex", self.lambda_ex)?;
        check_purity("lambda_osrp", self.lambda_osrp)?;
        if self.b_oh_sigma < 0.0 {
            return Err(Error::param("b_oh_sigma", "standard deviation must be nonnegative"));
        }
        if self.tau_ex <= 0.0 {
            return Err(Error::param("tau_ex", "pulse period must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ParamsDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        TrionParams::try_from(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ParamsDoc::from(self.clone())).expect("flat parameter table serializes")
    }
}

fn check_purity(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::param(name, format!("purity {v} outside (0, 1]")));
    }
    Ok(())
}

/// Flat key-value document using the laboratory units of the parameter
/// table (ps, mT, multiples of π).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub t1_ps: f64,
    pub b_mt: f64,
    pub tau_ex_ps: f64,
    pub tau_osrp_ps: f64,
    pub b_oh_mt: f64,
    pub g_e: f64,
    pub g_h: f64,
    pub lambda_ex: f64,
    pub phi_ex_pi: f64,
    pub lambda_osrp: f64,
    pub theta_osrp_pi: f64,
    #[serde(default)]
    pub pulse_area: PulseArea,
}

impl From<TrionParams> for ParamsDoc {
    fn from(p: TrionParams) -> Self {
        ParamsDoc {
            t1_ps: p.t1 * 1e3,
            b_mt: p.b,
            tau_ex_ps: p.tau_ex * 1e3,
            tau_osrp_ps: p.tau_osrp * 1e3,
            b_oh_mt: p.b_oh_sigma,
            g_e: p.g_e,
            g_h: p.g_h,
            lambda_ex: p.lambda_ex,
            phi_ex_pi: p.phi_ex / PI,
            lambda_osrp: p.lambda_osrp,
            theta_osrp_pi: p.theta_osrp / PI,
            pulse_area: p.pulse_area,
        }
    }
}

impl TryFrom<ParamsDoc> for TrionParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        let p = TrionParams {
            t1: d.t1_ps * 1e-3,
            b: d.b_mt,
            tau_ex: d.tau_ex_ps * 1e-3,
            tau_osrp: d.tau_osrp_ps * 1e-3,
            b_oh_sigma: d.b_oh_mt,
            g_e: d.g_e,
            g_h: d.g_h,
            lambda_ex: d.lambda_ex,
            phi_ex: d.phi_ex_pi * PI,
            lambda_osrp: d.lambda_osrp,
            theta_osrp: d.theta_osrp_pi * PI,
            pulse_area: d.pulse_area,
        };
        p.validate()?;
        Ok(p)
    }
}

/// One-standard-deviation uncertainties of the fitted parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamUncertainty {
    pub b_oh_sigma: f64,
    pub g_e: f64,
    pub g_h: f64,
    pub lambda_ex: f64,
    pub phi_ex: f64,
    pub lambda_osrp: f64,
    pub theta_osrp: f64,
}

impl ParamUncertainty {
    pub fn measured() -> Self {
        ParamUncertainty {
            b_oh_sigma: 0.5,
            g_e: 0.04,
            g_h: 0.06,
            lambda_ex: 0.06,
            phi_ex: 0.02 * PI,
            lambda_osrp: 0.09,
            theta_osrp: 0.05 * PI,
        }
    }

    /// Draws a parameter set from independent normals around `mean`,
    /// clamping purities into (0, 1] and the field spread to ≥ 0.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &TrionParams, rng: &mut R) -> TrionParams {
        let mut draw = |m: f64, s: f64| {
            if s > 0.0 {
                Normal::new(m, s).expect("positive std-dev").sample(rng)
            } else {
                m
            }
        };
        let mut p = mean.clone();
        p.b_oh_sigma = draw(mean.b_oh_sigma, self.b_oh_sigma).max(0.0);
        p.g_e = draw(mean.g_e, self.g_e);
        p.g_h = draw(mean.g_h, self.g_h);
        p.lambda_ex = draw(mean.lambda_ex, self.lambda_ex).clamp(1e-6, 1.0);
        p.phi_ex = draw(mean.phi_ex, self.phi_ex);
        p.lambda_osrp = draw(mean.lambda_osrp, self.lambda_osrp).clamp(1e-6, 1.0);
        p.theta_osrp = draw(mean.theta_osrp, self.theta_osrp);
        p
    }
}

/// Quasi-static Overhauser field (mT).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverhauserSample {
    pub b: [f64; 3],
}

impl OverhauserSample {
    pub fn zero() -> Self {
        OverhauserSample { b: [0.0; 3] }
    }

    pub fn new(b: [f64; 3]) -> Result<Self> {
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("b_oh", "field components must be finite"));
        }
        Ok(OverhauserSample { b })
    }
}

/// Three independent normal draws with mean 0 and standard deviation
/// `sigma`.
pub fn sample_overhauser<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<OverhauserSample> {
    if !(sigma >= 0.0) {
        return Err(Error::param("sigma", "standard deviation must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(OverhauserSample::zero());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
    Ok(OverhauserSample { b: [normal.sample(rng), normal.sample(rng), normal.sample(rng)] })
}

fn trion_register() -> Register {
    Register::single(TRION_LABEL, TRION_DIM)
}

/// H + H_O = (Δ_e/2)σ_y^(e) + (Δ_h/2)σ_y^(h) + ½ g_e μ_B B_OH·σ^(e).
pub fn hamiltonian(p: &TrionParams, s: &OverhauserSample) -> Result<Operator> {
    p.validate()?;
    let zeeman = sigma_y_e() * c(p.delta_e() / 2.0) + sigma_y_h() * c(p.delta_h() / 2.0);
    let k = 0.5 * p.g_e * MU_B;
    let overhauser = sigma_x_e() * c(k * s.b[0]) + sigma_y_e() * c(k * s.b[1]) + sigma_z_e() * c(k * s.b[2]);
    Operator::hermitian(trion_register(), zeeman + overhauser)
}

/// 𝓛 = −i[H + H_O, ·] + γ𝒟_{σ_R} + γ𝒟_{σ_L}.
pub fn liouvillian(p: &TrionParams, s: &OverhauserSample) -> Result<SuperOperator> {
    let h = hamiltonian(p, s)?;
    let gamma = p.gamma();
    let l = SuperOperator::hamiltonian(h.mat())
        .add(&SuperOperator::dissipator(&sigma_r()).scale(gamma))?
        .add(&SuperOperator::dissipator(&sigma_l()).scale(gamma))?;
    Ok(l)
}

/// R_ex(φ) = exp(−iπ(cos φ σ_{y,H} + sin φ σ_{y,V})/2), where
/// σ_{y,X} = −i(σ_X − σ_X†).
pub fn excitation_unitary(phi: f64, area: PulseArea) -> CMat {
    let y_of = |s: CMat| (&s - s.adjoint()) * (-I);
    let mut g = y_of(sigma_h()) * c(phi.cos()) + y_of(sigma_v()) * c(phi.sin());
    if area == PulseArea::Normalized {
        g *= c(std::f64::consts::SQRT_2);
    }
    crate::qcore::expm(&(g * (-I * PI / 2.0)))
}

/// R_osrp(θ) = exp(−iθσ_z^(e)/2); acts trivially on the trion levels.
pub fn osrp_unitary(theta: f64) -> CMat {
    crate::qcore::expm(&(sigma_z_e() * (-I * theta / 2.0)))
}

/// 𝒞_deph(λ) = exp[−½ log(λ) 𝒟_{σ_z}].
pub fn dephasing_channel(sigma_z: &CMat, lambda: f64, name: &str) -> Result<SuperOperator> {
    check_purity(name, lambda)?;
    Ok(SuperOperator::dissipator(sigma_z).exp(-0.5 * lambda.ln()))
}

/// Instantaneous excitation followed by hole-spin pure dephasing.
pub fn excitation_channel(p: &TrionParams) -> Result<SuperOperator> {
    check_purity("lambda_ex", p.lambda_ex)?;
    let rot = SuperOperator::unitary(&excitation_unitary(p.phi_ex, p.pulse_area));
    dephasing_channel(&sigma_z_h(), p.lambda_ex, "lambda_ex")?.after(&rot)
}

/// Phase rotation about z by `theta` followed by electron pure dephasing.
pub fn osrp_channel(p: &TrionParams, theta: f64) -> Result<SuperOperator> {
    check_purity("lambda_osrp", p.lambda_osrp)?;
    let rot = SuperOperator::unitary(&osrp_unitary(theta));
    dephasing_channel(&sigma_z_e(), p.lambda_osrp, "lambda_osrp")?.after(&rot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{eigh, max_abs_diff, random_density, trace};
    use crate::qcore::{propagate, DensityMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bohr_magneton_matches_codata() {
        // μ_B = 9.2740100783e-24 J/T, ħ = 1.054571817e-34 J s
        let from_si = 9.274_010_078_3e-24 / 1.054_571_817e-34 * 1e-9 * 1e-3;
        assert!((MU_B - from_si).abs() / from_si < 1e-9);
    }

    #[test]
    fn polarization_basis_definitions() {
        let h = (sigma_l() + sigma_r()) / c(2f64.sqrt());
        let v = (sigma_l() - sigma_r()) * (-I) / c(2f64.sqrt());
        assert!(max_abs_diff(&sigma_h(), &h) < 1e-15);
        assert!(max_abs_diff(&sigma_v(), &v) < 1e-15);
        assert_eq!(sigma_r()[(level::UP, level::TRION_UP)], c(1.0));
        assert_eq!(sigma_l()[(level::DOWN, level::TRION_DOWN)], c(1.0));
    }

    #[test]
    fn zero_field_hamiltonian_vanishes() {
        let p = TrionParams { b: 0.0, ..TrionParams::measured() };
        let h = hamiltonian(&p, &OverhauserSample::zero()).unwrap();
        assert!(h.mat().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn larmor_period_at_operating_point() {
        let p = TrionParams::measured();
        // period h / (g_e μ_B B) with μ_B/h = 13.996 GHz/T
        let period = 1.0 / (0.6 * 13.996_244_936 * 0.060);
        assert!((p.larmor_period() - period).abs() < 1e-12);
        assert!((p.larmor_period() - 1.985).abs() < 1e-3);
        let h = hamiltonian(&p, &OverhauserSample::zero()).unwrap();
        let (vals, _) = eigh(&ground_block(h.mat()));
        assert!(((vals[1] - vals[0]) - p.delta_e()).abs() < 1e-12);
    }

    #[test]
    fn overhauser_y_component_adds_to_splitting() {
        let p = TrionParams::measured();
        let b = 3.7;
        let with_field = hamiltonian(&p, &OverhauserSample::new([0.0, b, 0.0]).unwrap()).unwrap();
        let base = hamiltonian(&p, &OverhauserSample::zero()).unwrap();
        let extra = sigma_y_e() * c(0.5 * p.g_e * MU_B * b);
        assert!(max_abs_diff(with_field.mat(), &(base.mat() + extra)) < 1e-15);
        let (vals, _) = eigh(&ground_block(with_field.mat()));
        let expected = p.g_e * MU_B * (p.b + b);
        assert!(((vals[1] - vals[0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn liouvillian_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = TrionParams::measured();
        let s = sample_overhauser(p.b_oh_sigma, &mut rng).unwrap();
        let l = liouvillian(&p, &s).unwrap();
        assert!(l.is_trace_annihilating(1e-12));
        for _ in 0..100 {
            let rho = random_density(4, &mut rng);
            assert!(trace(&l.apply_mat(&rho).unwrap()).norm() < 1e-10);
        }
        assert!((p.gamma() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trion_decay_at_zero_field() {
        let p = TrionParams { b: 0.0, t1: 0.2, ..TrionParams::measured() };
        let l = liouvillian(&p, &OverhauserSample::zero()).unwrap();
        let mut m = CMat::zeros(4, 4);
        m[(level::TRION_UP, level::TRION_UP)] = c(1.0);
        let rho = DensityMatrix::new(trion_register(), m, true).unwrap();
        let out = propagate(&l, 0.2, &rho).unwrap();
        let ground = trace(&(ground_projector() * out.mat())).re;
        assert!((ground - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn liouvillian_semigroup_is_completely_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = TrionParams::measured();
        let s = sample_overhauser(p.b_oh_sigma, &mut rng).unwrap();
        let l = liouvillian(&p, &s).unwrap();
        for t in [0.05, 0.2, 1.0] {
            assert!(l.exp(t).choi_min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn free_precession_is_larmor_rotation() {
        let p = TrionParams { g_h: 0.0, b_oh_sigma: 0.0, ..TrionParams::measured() };
        let l = liouvillian(&p, &OverhauserSample::zero()).unwrap();
        let rho = DensityMatrix::new(trion_register(), ketbra(0, 0), true).unwrap();
        for t in [0.1, 0.37, 0.9, 2.5] {
            let out = propagate(&l, t, &rho).unwrap();
            let sz = trace(&(sigma_z_e() * out.mat())).re;
            assert!((sz - (p.delta_e() * t).cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_purity_excitation_is_unitary() {
        let p = TrionParams { lambda_ex: 1.0, ..TrionParams::measured() };
        let ch = excitation_channel(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let psi = crate::qcore::linalg::random_ket(4, &mut rng);
        let rho = &psi * psi.adjoint();
        let out = ch.apply_mat(&rho).unwrap();
        assert!((trace(&(&out * &out)).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn literal_pulse_area_population_transfer() {
        // The literal generator restricted to {|↑⟩, |↓↑⇑⟩} is
        // (1/√2)·[[0, -i], [i, 0]]; rotating by π/2 times that gives
        // cos(π/(2√2)) and sin(π/(2√2)) amplitudes.
        let u = excitation_unitary(0.0, PulseArea::Literal);
        let pop = u[(level::TRION_UP, level::UP)].norm_sqr();
        let oracle = (PI / (2.0 * 2f64.sqrt())).sin().powi(2);
        assert!((pop - oracle).abs() < 1e-12);
        assert!((pop - 0.8020).abs() < 1e-3);

        let full = excitation_unitary(0.0, PulseArea::Normalized);
        assert!((full[(level::TRION_UP, level::UP)].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn excitation_phase_imprints_relative_phase() {
        let phi = 0.3;
        let u = excitation_unitary(phi, PulseArea::Normalized);
        let a = u[(level::TRION_UP, level::UP)];
        let b = u[(level::TRION_DOWN, level::DOWN)];
        let rel = (a / b).arg();
        assert!((rel + 2.0 * phi).abs() < 1e-12);
    }

    #[test]
    fn osrp_pi_is_z_gate() {
        let p = TrionParams { lambda_osrp: 1.0, ..TrionParams::measured() };
        let ch = osrp_channel(&p, PI).unwrap();
        let plus = embed_spin(&(CMat::from_element(2, 2, c(0.5))));
        let out = ch.apply_mat(&plus).unwrap();
        let mut minus = CMat::from_element(2, 2, c(0.5));
        minus[(0, 1)] = c(-0.5);
        minus[(1, 0)] = c(-0.5);
        assert!(max_abs_diff(&out, &embed_spin(&minus)) < 1e-12);
    }

    #[test]
    fn osrp_zero_is_identity() {
        let p = TrionParams { lambda_osrp: 1.0, ..TrionParams::measured() };
        let ch = osrp_channel(&p, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let rho = random_density(4, &mut rng);
            assert!(max_abs_diff(&ch.apply_mat(&rho).unwrap(), &rho) < 1e-12);
        }
    }

    #[test]
    fn dephasing_scales_targeted_coherence_by_lambda() {
        for lambda in [0.94, 0.74, 0.3] {
            let ch = dephasing_channel(&sigma_z_e(), lambda, "l").unwrap();
            let mut rho = CMat::from_element(4, 4, c(0.25));
            rho[(0, 1)] = c(0.25);
            let out = ch.apply_mat(&rho).unwrap();
            assert!(((out[(0, 1)] / rho[(0, 1)]).re - lambda).abs() < 1e-10);
            let ch = dephasing_channel(&sigma_z_h(), lambda, "l").unwrap();
            let out = ch.apply_mat(&rho).unwrap();
            assert!(((out[(2, 3)] / rho[(2, 3)]).re - lambda).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_purities_rejected() {
        let p = TrionParams { lambda_ex: 0.0, ..TrionParams::measured() };
        assert!(excitation_channel(&p).is_err());
        let p = TrionParams { lambda_osrp: 1.2, ..TrionParams::measured() };
        assert!(osrp_channel(&p, PI).is_err());
    }

    #[test]
    fn channels_cp_tp_over_parameter_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let unc = ParamUncertainty::measured();
        let mean = TrionParams::measured();
        let wide = ParamUncertainty {
            b_oh_sigma: 3.0 * unc.b_oh_sigma,
            g_e: 3.0 * unc.g_e,
            g_h: 3.0 * unc.g_h,
            lambda_ex: 3.0 * unc.lambda_ex,
            phi_ex: 3.0 * unc.phi_ex,
            lambda_osrp: 3.0 * unc.lambda_osrp,
            theta_osrp: 3.0 * unc.theta_osrp,
        };
        for _ in 0..40 {
            let p = wide.sample(&mean, &mut rng);
            for ch in [excitation_channel(&p).unwrap(), osrp_channel(&p, p.theta_osrp).unwrap()] {
                assert!(ch.is_trace_preserving(1e-10));
                assert!(ch.choi_min_eigenvalue() > -1e-8);
            }
        }
    }

    #[test]
    fn overhauser_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        assert_eq!(sample_overhauser(0.0, &mut rng).unwrap(), OverhauserSample::zero());
        assert!(sample_overhauser(-1.0, &mut rng).is_err());

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(sample_overhauser(9.0, &mut a).unwrap(), sample_overhauser(9.0, &mut b).unwrap());

        let n = 100_000;
        let sigma = 9.0;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let s = sample_overhauser(sigma, &mut rng).unwrap();
            for k in 0..3 {
                sum[k] += s.b[k];
            }
        }
        let bound = 3.0 * sigma / (n as f64).sqrt();
        for k in 0..3 {
            assert!((sum[k] / n as f64).abs() < bound);
        }
    }

    #[test]
    fn params_document_round_trip() {
        let p = TrionParams::measured();
        let text = p.to_toml();
        assert!(text.contains("t1_ps = 200"));
        let back = TrionParams::from_toml(&text).unwrap();
        assert!((back.theta_osrp - p.theta_osrp).abs() < 1e-12);
        assert!((back.t1 - p.t1).abs() < 1e-15);
        assert!(TrionParams::from_toml(&text.replace("lambda_ex = 0.94", "lambda_ex = 1.5")).is_err());
    }

    #[test]
    fn ideal_spacing_is_quarter_precession() {
        let p = TrionParams::ideal();
        assert!((p.delta_e() * (p.tau_ex - p.t1) - PI / 2.0).abs() < 1e-12);
        let q = TrionParams::measured();
        // 600 ps with a 200 ps lifetime and g_h = 0.3 sits within 1% of π/2
        assert!((q.quarter_period_spacing() - 0.6).abs() < 0.01);
    }
}
