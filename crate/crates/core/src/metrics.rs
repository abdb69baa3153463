//! Figures of merit: fidelity, concurrence, visibility and the
//! time-shift-maximized fidelity, plus the two- and four-partite fidelity
//! table of the four graph-state protocols.

use std::f64::consts::PI;
use std::fmt::Write as _;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ideal::{self, ry, SPIN_LABEL};
use crate::protocol::{
    average_joint, herald_and_readout, overhauser_samples, run_samples, Circular, JointState, PulseProgram,
};
use crate::qcore::linalg::{eigh, sqrtm_psd};
use crate::qcore::{c, CMat, DensityMatrix, Ket};
use crate::trion::{ParamUncertainty, TrionParams};

/// Time-shift grid step, ns.
pub const TIMESHIFT_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityReport {
    pub value: f64,
    pub target: String,
    pub time_ns: f64,
    pub shift_ns: f64,
    pub uncertainty: Option<f64>,
}

/// ⟨ψ|ρ|ψ⟩.
pub fn fidelity(rho: &DensityMatrix, target: &Ket) -> Result<f64> {
    Ok(rho.expectation_ket(target)?.clamp(0.0, 1.0))
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))².
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let sr = sqrtm_psd(rho.mat());
    let inner = &sr * sigma.mat() * &sr;
    // rounding noise in the null space would otherwise add √ε terms
    let (vals, _) = eigh(&inner);
    let cut = 1e-12 * vals.last().copied().unwrap_or(0.0).max(0.0);
    let f: f64 = vals.iter().filter(|&&v| v > cut).map(|v| v.sqrt()).sum();
    Ok((f * f).clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.dim() });
    }
    if rho.min_eigenvalue() < -1e-8 {
        return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", rho.min_eigenvalue())));
    }
    let yy = {
        let y = crate::qcore::pauli(2);
        y.kronecker(&y)
    };
    let m = rho.mat();
    let tilde = &yy * m.conjugate() * &yy;
    let sr = sqrtm_psd(m);
    let (vals, _) = eigh(&(&sr * tilde * &sr));
    let mut l: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    Ok((l[0] - l[1] - l[2] - l[3]).max(0.0))
}

/// Four-photon coincidences for a herald R₁ and photons 2–4 in R/L.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct VisibilityCounts {
    pub rrrr: f64,
    pub rlll: f64,
    pub rrrl: f64,
    pub rllr: f64,
}

impl VisibilityCounts {
    /// Coincidence probabilities of the photons of a heralded joint state,
    /// which must hold p2, p3, p4 and the spin.
    pub fn from_state(js: &JointState) -> Result<Self> {
        let photons = js.state.partial_trace(&["p2", "p3", "p4"])?;
        let p = |bits: [usize; 3]| {
            photons.mat()[(bits[0] * 4 + bits[1] * 2 + bits[2], bits[0] * 4 + bits[1] * 2 + bits[2])].re
        };
        let w = js.probability;
        Ok(VisibilityCounts {
            rrrr: w * p([0, 0, 0]),
            rlll: w * p([1, 1, 1]),
            rrrl: w * p([0, 0, 1]),
            rllr: w * p([1, 1, 0]),
        })
    }
}

pub fn visibility(n: &VisibilityCounts) -> Result<f64> {
    let all = [n.rrrr, n.rlll, n.rrrl, n.rllr];
    if all.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::param("counts", "must be nonnegative"));
    }
    let den: f64 = all.iter().sum();
    if !(den > 0.0) {
        return Err(Error::param("counts", "zero denominator"));
    }
    Ok((n.rrrr + n.rlll - n.rrrl - n.rllr) / den)
}

/// Maximum of F(ρ, target(t')) over t' ∈ [t − window, t + window] on a 1 ps
/// grid.
pub fn max_fidelity_timeshift(
    rho: &DensityMatrix,
    target_of_t: impl Fn(f64) -> Result<Ket>,
    t: f64,
    window: f64,
    label: &str,
) -> Result<FidelityReport> {
    if !(window >= 0.0) {
        return Err(Error::param("window", "must be nonnegative"));
    }
    let steps = (window / TIMESHIFT_STEP + 1e-9).floor() as i64;
    let mut best =
        FidelityReport { value: -1.0, target: label.to_string(), time_ns: t, shift_ns: 0.0, uncertainty: None };
    for k in -steps..=steps {
        let shift = k as f64 * TIMESHIFT_STEP;
        let f = fidelity(rho, &target_of_t(t + shift)?)?;
        // ties resolve to the smallest shift
        if f > best.value + 1e-15 || (f >= best.value - 1e-15 && shift.abs() < best.shift_ns.abs()) {
            best.value = f;
            best.shift_ns = shift;
        }
    }
    if best.value < 0.0 {
        return Err(Error::param("window", "empty grid"));
    }
    Ok(best)
}

/// The four graph-state protocols of the fidelity table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Protocol {
    Lc,
    Ghz,
    Rlc1,
    Rlc2,
}

impl Protocol {
    pub fn all() -> [Protocol; 4] {
        [Protocol::Lc, Protocol::Ghz, Protocol::Rlc1, Protocol::Rlc2]
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Lc => "LC",
            Protocol::Ghz => "GHZ",
            Protocol::Rlc1 => "RLC1",
            Protocol::Rlc2 => "RLC2",
        }
    }

    pub fn program(self, p: &TrionParams) -> PulseProgram {
        match self {
            Protocol::Lc => PulseProgram::lc4(p),
            Protocol::Ghz => PulseProgram::ghz4(p),
            Protocol::Rlc1 => PulseProgram::rlc1(p),
            Protocol::Rlc2 => PulseProgram::rlc2(p),
        }
    }

    /// (herald, readout) columns reported for this protocol.
    pub fn columns(self) -> Vec<(Circular, Circular)> {
        use Circular::{L, R};
        match self {
            Protocol::Lc => vec![(R, R), (R, L), (L, R), (L, L)],
            _ => vec![(R, R), (R, L)],
        }
    }
}

/// Ideal ket of photons 2–4 and spin at the end of `prog`, for the spin
/// heralded by `herald`, with the spin evolved by a further Larmor
/// rotation of `shift` ns.
pub fn ideal_target(p: &TrionParams, prog: &PulseProgram, herald: Circular, shift: f64) -> Result<Ket> {
    let (gates, tail) = prog.ideal_gates(p)?;
    let mut all = gates;
    all.extend(tail);
    let init = match herald {
        Circular::R => [c(1.0), c(0.0)],
        Circular::L => [c(0.0), c(1.0)],
    };
    let ket = ideal::ideal_protocol_state_from(&all, init, 2)?;
    if shift == 0.0 {
        Ok(ket)
    } else {
        ket.apply_local(&ry(p.delta_e() * shift), SPIN_LABEL)
    }
}

/// Two-photon target after reading out the last photon and tracing the
/// spin; the ideal remainder is pure for every protocol in the table.
pub fn two_photon_target(full: &Ket, readout: Circular) -> Result<Ket> {
    let rho = DensityMatrix::from_ket(full);
    let js = JointState { state: rho, probability: 1.0, herald: Circular::R };
    let (reduced, _) = herald_and_readout(&js, readout)?;
    let (vals, vecs) = eigh(reduced.mat());
    let top = *vals.last().unwrap();
    if top < 1.0 - 1e-9 {
        return Err(Error::InvalidState(format!("ideal two-photon target is mixed (largest eigenvalue {top:.6})")));
    }
    Ket::normalized(reduced.register().clone(), vecs.column(vals.len() - 1).into_owned())
}

/// One column of the fidelity table.
#[derive(Clone, Debug, Serialize)]
pub struct TableEntry {
    pub protocol: Protocol,
    pub herald: Circular,
    pub readout: Circular,
    pub f2: f64,
    pub concurrence: f64,
    pub f4: f64,
    pub f4_shift_ns: f64,
    pub f2_sigma: Option<f64>,
    pub f4_sigma: Option<f64>,
}

/// Values of one table column for one parameter set.
#[derive(Clone, Copy, Debug)]
struct ColumnValues {
    f2: f64,
    concurrence: f64,
    f4: f64,
    f4_shift: f64,
}

/// Overhauser-averaged table values for one parameter set. F₄ is taken
/// from the herald-R joint state of each protocol with target shifts up to
/// ±T1.
fn table_values(p: &TrionParams, n_samples: usize, seed: u64) -> Result<Vec<(Protocol, Vec<ColumnValues>)>> {
    let samples = overhauser_samples(p.b_oh_sigma, n_samples, seed)?;
    Protocol::all()
        .iter()
        .map(|&proto| {
            let prog = proto.program(p);
            let heralds = Circular::both();
            let runs = run_samples(p, &prog, &samples, &heralds)?;
            let avg = [average_joint(&runs[0])?, average_joint(&runs[1])?];
            let t = prog.evaluation_time();
            let f4 = max_fidelity_timeshift(
                &avg[0].state,
                |tt| ideal_target(p, &prog, Circular::R, tt - t),
                t,
                p.t1,
                proto.name(),
            )?;
            let cols = proto
                .columns()
                .into_iter()
                .map(|(h, r)| {
                    let js = &avg[h.index()];
                    let (two, _) = herald_and_readout(js, r)?;
                    let target = two_photon_target(&ideal_target(p, &prog, h, 0.0)?, r)?;
                    Ok(ColumnValues {
                        f2: fidelity(&two, &target)?,
                        concurrence: concurrence(&two)?,
                        f4: f4.value,
                        f4_shift: f4.shift_ns,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((proto, cols))
        })
        .collect()
}

/// Fidelity table at the mean parameters. With `n_param_sets > 0`, the
/// fitted parameters are additionally resampled from their uncertainties
/// and the spread of the table values is reported as σ.
pub fn fidelity_table(p: &TrionParams, n_samples: usize, n_param_sets: usize, seed: u64) -> Result<Vec<TableEntry>> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let central = table_values(p, n_samples, seed)?;
    let spreads: Option<Vec<Vec<ColumnValues>>> = if n_param_sets > 0 {
        let unc = ParamUncertainty::measured();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f7a_b1e5);
        let sets: Vec<(TrionParams, u64)> =
            (0..n_param_sets).map(|k| (unc.sample(p, &mut rng), seed.wrapping_add(1 + k as u64))).collect();
        let vals = sets
            .par_iter()
            .map(|(q, s)| {
                table_values(q, n_samples, *s).map(|t| t.into_iter().flat_map(|(_, cols)| cols).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Some(vals)
    } else {
        None
    };
    let std = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len().max(2) - 1) as f64).sqrt()
    };
    let mut out = Vec::new();
    let mut flat = 0;
    for (proto, cols) in central {
        for ((h, r), v) in proto.columns().into_iter().zip(cols) {
            let (f2_sigma, f4_sigma) = match &spreads {
                Some(sets) => {
                    let f2: Vec<f64> = sets.iter().map(|s| s[flat].f2).collect();
                    let f4: Vec<f64> = sets.iter().map(|s| s[flat].f4).collect();
                    (Some(std(&f2)), Some(std(&f4)))
                }
                None => (None, None),
            };
            out.push(TableEntry {
                protocol: proto,
                herald: h,
                readout: r,
                f2: v.f2,
                concurrence: v.concurrence,
                f4: v.f4,
                f4_shift_ns: v.f4_shift,
                f2_sigma,
                f4_sigma,
            });
            flat += 1;
        }
    }
    Ok(out)
}

/// CSV with columns protocol, herald, readout, F2, C, F4, σ (σ of F₂, empty
/// when no parameter resampling was done).
pub fn table_csv(entries: &[TableEntry]) -> String {
    let mut s = String::from("protocol,herald,readout,F2,C,F4,sigma\n");
    for e in entries {
        let sigma = e.f2_sigma.map(|x| format!("{x:.4}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4},{:.4},{}",
            e.protocol.name(),
            e.herald.name(),
            e.readout.name(),
            e.f2,
            e.concurrence,
            e.f4,
            sigma
        );
    }
    s
}

/// Visibility of the scan program at each φ₂, Overhauser-averaged with
/// herald R.
pub fn visibility_scan(p: &TrionParams, phis: &[f64], n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let samples = overhauser_samples(p.b_oh_sigma, n_samples.max(1), seed)?;
    phis.iter()
        .map(|&phi| {
            let prog = PulseProgram::visibility_scan(p, phi);
            let runs = run_samples(p, &prog, &samples, &[Circular::R])?;
            let mut n = VisibilityCounts::default();
            for js in &runs[0] {
                let k = VisibilityCounts::from_state(js)?;
                n.rrrr += k.rrrr;
                n.rlll += k.rlll;
                n.rrrl += k.rrrl;
                n.rllr += k.rllr;
            }
            visibility(&n)
        })
        .collect()
}

/// Least-squares line y = a + b·x with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("points", "need at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit { intercept, slope, r_squared })
}

/// y(t) = offset + amplitude·exp(−(t/decay)²)·cos(2πt/period + phase), the
/// shape of a precession trace dephased by a Gaussian field distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DampedCosine {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub decay: f64,
    pub rms_residual: f64,
}

impl DampedCosine {
    /// Time at which the envelope has fallen to half its initial value.
    pub fn half_life(&self) -> f64 {
        self.decay * std::f64::consts::LN_2.sqrt()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset
            + self.amplitude * (-(t / self.decay).powi(2)).exp() * (2.0 * PI * t / self.period + self.phase).cos()
    }
}

/// For fixed (period, decay) the model is linear in (offset, A cos φ, A sin φ);
/// returns those and the residual sum of squares.
fn damped_linear_part(ts: &[f64], ys: &[f64], period: f64, decay: f64) -> Option<([f64; 3], f64)> {
    let rows: Vec<[f64; 3]> = ts
        .iter()
        .map(|&t| {
            let env = (-(t / decay).powi(2)).exp();
            let w = 2.0 * PI * t / period;
            [1.0, env * w.cos(), -env * w.sin()]
        })
        .collect();
    let a = nalgebra::DMatrix::from_fn(ts.len(), 3, |i, j| rows[i][j]);
    let y = nalgebra::DVector::from_column_slice(ys);
    let x = a.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let rss = (a * &x - y).norm_squared();
    Some(([x[0], x[1], x[2]], rss))
}

struct DampedCost<'a>(&'a [f64], &'a [f64]);

impl CostFunction for DampedCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if !(v[0] > 0.0 && v[1] > 0.0) {
            return Ok(f64::INFINITY);
        }
        Ok(damped_linear_part(self.0, self.1, v[0], v[1]).map_or(f64::INFINITY, |(_, rss)| rss))
    }
}

/// Least-squares damped-cosine fit. The period is seeded from the mean
/// spacing of sign changes about the mean, then period and decay are refined
/// by Nelder-Mead with the linear parameters solved exactly at each step.
pub fn fit_damped_cosine(ts: &[f64], ys: &[f64]) -> Result<DampedCosine> {
    if ts.len() != ys.len() || ts.len() < 6 {
        return Err(Error::param("trace", "need at least six paired points"));
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut crossings = Vec::new();
    for i in 1..ts.len() {
        let (a, b) = (ys[i - 1] - mean, ys[i] - mean);
        if a * b < 0.0 {
            crossings.push(ts[i - 1] + (ts[i] - ts[i - 1]) * a / (a - b));
        }
    }
    if crossings.len() < 2 {
        return Err(Error::Numerical("trace has fewer than two sign changes".into()));
    }
    let p0 = 2.0 * (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let span = ts[ts.len() - 1] - ts[0];
    let simplex = vec![vec![p0, span], vec![p0 * 1.05, span], vec![p0, span * 0.5]];
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(DampedCost(ts, ys), solver)
        .configure(|s| s.max_iters(2000))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let best =
        res.state().get_best_param().cloned().ok_or_else(|| Error::Numerical("damped-cosine fit diverged".into()))?;
    let (lin, rss) = damped_linear_part(ts, ys, best[0], best[1])
        .ok_or_else(|| Error::Numerical("damped-cosine fit is singular".into()))?;
    Ok(DampedCosine {
        offset: lin[0],
        amplitude: lin[1].hypot(lin[2]),
        period: best[0],
        phase: lin[2].atan2(lin[1]),
        decay: best[1],
        rms_residual: (rss / ts.len() as f64).sqrt(),
    })
}

/// Density matrix of a pure ket, convenience for callers holding kets.
pub fn ket_density(k: &Ket) -> DensityMatrix {
    DensityMatrix::from_ket(k)
}

/// Two-qubit Werner state p|Φ+⟩⟨Φ+| + (1 − p) I/4.
pub fn werner(p: f64) -> DensityMatrix {
    let mut phi = CMat::zeros(4, 4);
    for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        phi[(i, j)] = c(0.5);
    }
    let m = phi * c(p) + CMat::identity(4, 4) * c((1.0 - p) / 4.0);
    DensityMatrix::from_raw(crate::qcore::Register::qubits(["a", "b"]).unwrap(), m, true).unwrap()
}
