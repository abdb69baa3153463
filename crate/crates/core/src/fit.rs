//! Derivative-free estimation of the fitted trion parameters from target
//! two-photon density matrices.
//!
//! The objective is 1 − mean Uhlmann fidelity between simulated and target
//! states. Every evaluation reuses the same Overhauser draws (common random
//! numbers), so the objective is a deterministic, smooth function of the
//! parameters. Search runs in units of the tabulated uncertainties.

use std::sync::atomic::{AtomicUsize, Ordering};

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::uhlmann_fidelity;
use crate::protocol::{average_joint, herald_and_readout, overhauser_samples, run_samples, Circular, PulseProgram};
use crate::qcore::{DensityMatrix, MatrixDoc};
use crate::trion::{OverhauserSample, ParamUncertainty, TrionParams};

/// The seven fitted model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    BOh,
    GE,
    GH,
    LambdaEx,
    PhiEx,
    LambdaOsrp,
    ThetaOsrp,
}

impl FitParam {
    pub fn all() -> [FitParam; 7] {
        use FitParam::*;
        [BOh, GE, GH, LambdaEx, PhiEx, LambdaOsrp, ThetaOsrp]
    }

    pub fn name(self) -> &'static str {
        match self {
            FitParam::BOh => "b_oh",
            FitParam::GE => "g_e",
            FitParam::GH => "g_h",
            FitParam::LambdaEx => "lambda_ex",
            FitParam::PhiEx => "phi_ex",
            FitParam::LambdaOsrp => "lambda_osrp",
            FitParam::ThetaOsrp => "theta_osrp",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FitParam::BOh => "Overhauser field spread (mT)",
            FitParam::GE => "Electron g factor",
            FitParam::GH => "Hole g factor",
            FitParam::LambdaEx => "Excitation purity",
            FitParam::PhiEx => "Excitation polarization angle (rad)",
            FitParam::LambdaOsrp => "OSRP purity",
            FitParam::ThetaOsrp => "OSRP rotation (rad)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FitParam::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown fit parameter `{s}`")))
    }

    pub fn get(self, p: &TrionParams) -> f64 {
        match self {
            FitParam::BOh => p.b_oh_sigma,
            FitParam::GE => p.g_e,
            FitParam::GH => p.g_h,
            FitParam::LambdaEx => p.lambda_ex,
            FitParam::PhiEx => p.phi_ex,
            FitParam::LambdaOsrp => p.lambda_osrp,
            FitParam::ThetaOsrp => p.theta_osrp,
        }
    }

    pub fn set(self, p: &mut TrionParams, v: f64) {
        match self {
            FitParam::BOh => p.b_oh_sigma = v,
            FitParam::GE => p.g_e = v,
            FitParam::GH => p.g_h = v,
            FitParam::LambdaEx => p.lambda_ex = v,
            FitParam::PhiEx => p.phi_ex = v,
            FitParam::LambdaOsrp => p.lambda_osrp = v,
            FitParam::ThetaOsrp => p.theta_osrp = v,
        }
    }

    pub fn uncertainty(self, u: &ParamUncertainty) -> f64 {
        match self {
            FitParam::BOh => u.b_oh_sigma,
            FitParam::GE => u.g_e,
            FitParam::GH => u.g_h,
            FitParam::LambdaEx => u.lambda_ex,
            FitParam::PhiEx => u.phi_ex,
            FitParam::LambdaOsrp => u.lambda_osrp,
            FitParam::ThetaOsrp => u.theta_osrp,
        }
    }

    /// Physical range, independent of the search bounds.
    fn domain(self) -> (f64, f64) {
        match self {
            FitParam::BOh => (0.0, f64::INFINITY),
            FitParam::LambdaEx | FitParam::LambdaOsrp => (1e-6, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub param: FitParam,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    /// ±5 tabulated standard deviations around `center`, cut to the
    /// physical range.
    pub fn around(param: FitParam, center: &TrionParams) -> Self {
        let s = param.uncertainty(&ParamUncertainty::measured());
        let (lo, hi) = param.domain();
        let v = param.get(center);
        FreeParam { param, lower: (v - 5.0 * s).max(lo), upper: (v + 5.0 * s).min(hi) }
    }
}

/// A simulated herald/readout branch and the state it should reproduce.
#[derive(Clone, Debug)]
pub struct FitTarget {
    pub name: String,
    pub program: PulseProgram,
    pub herald: Circular,
    pub readout: Circular,
    pub target: DensityMatrix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetMode {
    /// Refit once per target with that target removed.
    #[default]
    LeaveOneOut,
    None,
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub base: TrionParams,
    pub free: Vec<FreeParam>,
    pub targets: Vec<FitTarget>,
    pub n_samples: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: u64,
    pub subsets: SubsetMode,
    /// Start the first restart at `base` instead of a random point.
    pub start_at_base: bool,
}

impl FitConfig {
    pub fn new(base: TrionParams, targets: Vec<FitTarget>) -> Self {
        let free = FitParam::all().iter().map(|&p| FreeParam::around(p, &base)).collect();
        FitConfig {
            base,
            free,
            targets,
            n_samples: 20,
            restarts: 3,
            seed: 0,
            max_iters: 400,
            subsets: SubsetMode::LeaveOneOut,
            start_at_base: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::param("targets", "at least one target is required"));
        }
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts", "must be at least 1"));
        }
        for f in &self.free {
            let v = f.param.get(&self.base);
            if !(f.lower < f.upper) {
                return Err(Error::param(f.param.name(), "lower bound must be below upper bound"));
            }
            if v < f.lower || v > f.upper {
                return Err(Error::param(f.param.name(), format!("base value {v} outside [{}, {}]", f.lower, f.upper)));
            }
        }
        self.base.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: FitConfigDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.resolve()
    }
}

/// Text form of a fit configuration. Programs are preset names or inline
/// program tables; targets are matrix documents.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfigDoc {
    pub base: TrionParams,
    #[serde(default)]
    pub free: Vec<FreeParamDoc>,
    pub targets: Vec<FitTargetDoc>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_iters")]
    pub max_iters: u64,
    #[serde(default)]
    pub subsets: SubsetMode,
    #[serde(default)]
    pub start_at_base: bool,
}

fn default_samples() -> usize {
    20
}
fn default_restarts() -> usize {
    3
}
fn default_iters() -> u64 {
    400
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParamDoc {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProgramRef {
    Preset(String),
    Inline(PulseProgram),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitTargetDoc {
    pub name: String,
    pub program: ProgramRef,
    pub herald: String,
    pub readout: String,
    pub target: MatrixDoc,
}

impl FitConfigDoc {
    pub fn resolve(self) -> Result<FitConfig> {
        let targets = self
            .targets
            .iter()
            .map(|t| {
                let program = match &t.program {
                    ProgramRef::Preset(name) => PulseProgram::preset(name, &self.base)?,
                    ProgramRef::Inline(p) => p.clone(),
                };
                Ok(FitTarget {
                    name: t.name.clone(),
                    program,
                    herald: Circular::parse(&t.herald)?,
                    readout: Circular::parse(&t.readout)?,
                    target: DensityMatrix::from_doc(&t.target)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = FitConfig::new(self.base.clone(), targets);
        if !self.free.is_empty() {
            cfg.free = self
                .free
                .iter()
                .map(|f| {
                    let param = FitParam::parse(&f.name)?;
                    let d = FreeParam::around(param, &self.base);
                    Ok(FreeParam { param, lower: f.lower.unwrap_or(d.lower), upper: f.upper.unwrap_or(d.upper) })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        cfg.n_samples = self.n_samples;
        cfg.restarts = self.restarts;
        cfg.seed = self.seed;
        cfg.max_iters = self.max_iters;
        cfg.subsets = self.subsets;
        cfg.start_at_base = self.start_at_base;
        Ok(cfg)
    }
}

/// Simulated two-photon state of every target, grouping targets that share
/// a program so each program is compiled once per Overhauser draw.
pub fn simulate_targets(
    p: &TrionParams,
    targets: &[FitTarget],
    samples: &[OverhauserSample],
) -> Result<Vec<DensityMatrix>> {
    let mut programs: Vec<&PulseProgram> = Vec::new();
    let mut which = Vec::with_capacity(targets.len());
    for t in targets {
        match programs.iter().position(|q| *q == &t.program) {
            Some(i) => which.push(i),
            None => {
                which.push(programs.len());
                programs.push(&t.program);
            }
        }
    }
    let mut out: Vec<Option<DensityMatrix>> = vec![None; targets.len()];
    for (i, prog) in programs.iter().enumerate() {
        let runs = run_samples(p, prog, samples, &Circular::both())?;
        let avg = [average_joint(&runs[0])?, average_joint(&runs[1])?];
        for (k, t) in targets.iter().enumerate() {
            if which[k] == i {
                let (rho, _) = herald_and_readout(&avg[t.herald.index()], t.readout)?;
                out[k] = Some(rho);
            }
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every target belongs to a program")).collect())
}

/// Objective over a fixed set of Overhauser draws.
pub struct Objective<'a> {
    base: &'a TrionParams,
    free: &'a [FreeParam],
    targets: Vec<&'a FitTarget>,
    /// Standard-normal draws, scaled by the current field spread.
    unit_samples: Vec<OverhauserSample>,
    scale: Vec<f64>,
    center: Vec<f64>,
    evaluations: AtomicUsize,
}

impl<'a> Objective<'a> {
    fn new(cfg: &'a FitConfig, subset: &[usize]) -> Result<Self> {
        let unc = ParamUncertainty::measured();
        Ok(Objective {
            base: &cfg.base,
            free: &cfg.free,
            targets: subset.iter().map(|&k| &cfg.targets[k]).collect(),
            unit_samples: overhauser_samples(1.0, cfg.n_samples, cfg.seed)?,
            scale: cfg.free.iter().map(|f| f.param.uncertainty(&unc).max(1e-9)).collect(),
            center: cfg.free.iter().map(|f| f.param.get(&cfg.base)).collect(),
            evaluations: AtomicUsize::new(0),
        })
    }

    fn to_z(&self, p: &TrionParams) -> Vec<f64> {
        self.free.iter().enumerate().map(|(i, f)| (f.param.get(p) - self.center[i]) / self.scale[i]).collect()
    }

    /// Parameters at scaled coordinates `z`, clamped into the bounds, and
    /// the squared distance (in scaled units) by which `z` lies outside.
    fn params_at(&self, z: &[f64]) -> (TrionParams, f64) {
        let mut p = self.base.clone();
        let mut excess = 0.0;
        for (i, f) in self.free.iter().enumerate() {
            let raw = self.center[i] + z[i] * self.scale[i];
            let v = raw.clamp(f.lower, f.upper);
            excess += ((raw - v) / self.scale[i]).powi(2);
            f.param.set(&mut p, v);
        }
        (p, excess)
    }

    /// Free-parameter values at scaled coordinates, after clamping.
    fn values_at(&self, z: &[f64]) -> Vec<f64> {
        let (p, _) = self.params_at(z);
        self.free.iter().map(|f| f.param.get(&p)).collect()
    }

    pub fn fidelities(&self, p: &TrionParams) -> Result<Vec<f64>> {
        let samples: Vec<OverhauserSample> =
            self.unit_samples.iter().map(|s| OverhauserSample { b: s.b.map(|x| x * p.b_oh_sigma) }).collect();
        let owned: Vec<FitTarget> = self.targets.iter().map(|t| (*t).clone()).collect();
        let sims = simulate_targets(p, &owned, &samples)?;
        sims.iter().zip(&self.targets).map(|(s, t)| uhlmann_fidelity(s, &t.target)).collect()
    }

    pub fn value(&self, p: &TrionParams) -> Result<f64> {
        let f = self.fidelities(p)?;
        Ok(1.0 - f.iter().sum::<f64>() / f.len() as f64)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

/// Borrowing adapter so one objective can serve several searches.
struct Cost<'o, 'a>(&'o Objective<'a>);

impl CostFunction for Cost<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let obj = self.0;
        obj.evaluations.fetch_add(1, Ordering::Relaxed);
        let (p, excess) = obj.params_at(z);
        let v = obj.value(&p).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        Ok(v + excess)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartSummary {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub objective: f64,
    /// Best objective over this and all earlier restarts.
    pub best_so_far: f64,
    pub iterations: u64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    pub best: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub params: Vec<ParamEstimate>,
    pub objective: f64,
    pub target_fidelities: Vec<(String, f64)>,
    pub subsets: Vec<Vec<String>>,
    pub restarts: Vec<RestartSummary>,
    pub converged: bool,
    #[serde(skip)]
    pub best_params: TrionParams,
}

impl FitResult {
    /// Parameter table: name, description, fitted mean, standard deviation,
    /// best full-data value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,description,value,sigma,best\n");
        for e in &self.params {
            let desc = FitParam::parse(&e.name).map(|p| p.description()).unwrap_or("");
            s.push_str(&format!("{},\"{}\",{:.6},{:.6},{:.6}\n", e.name, desc, e.mean, e.std, e.best));
        }
        s
    }
}

struct LocalFit {
    z: Vec<f64>,
    objective: f64,
    iterations: u64,
    evaluations: usize,
    converged: bool,
}

fn local_search(obj: &Objective, start: &[f64], max_iters: u64) -> Result<LocalFit> {
    let n = start.len();
    let mut simplex = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += 1.0;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-7).map_err(|e| Error::Numerical(e.to_string()))?;
    let before = obj.evaluations();
    let res = Executor::new(Cost(obj), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let z = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    let converged =
        matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    Ok(LocalFit {
        z,
        objective: state.get_best_cost(),
        iterations: state.get_iter(),
        evaluations: obj.evaluations() - before,
        converged,
    })
}

/// Multi-start Nelder–Mead fit followed by subset refits for the spread.
pub fn fit_parameters(cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let all: Vec<usize> = (0..cfg.targets.len()).collect();
    let obj = Objective::new(cfg, &all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xf17_5eed);

    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut best: Option<LocalFit> = None;
    for r in 0..cfg.restarts {
        let start: Vec<f64> = if r == 0 && cfg.start_at_base {
            vec![0.0; cfg.free.len()]
        } else {
            cfg.free
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let lo = ((f.lower - obj.center[i]) / obj.scale[i]).max(-3.0);
                    let hi = ((f.upper - obj.center[i]) / obj.scale[i]).min(3.0);
                    rng.random_range(lo..=hi)
                })
                .collect()
        };
        let fit = local_search(&obj, &start, cfg.max_iters)?;
        let improved = best.as_ref().is_none_or(|b| fit.objective < b.objective);
        let summary = RestartSummary {
            start: obj.values_at(&start),
            end: obj.values_at(&fit.z),
            objective: fit.objective,
            best_so_far: if improved { fit.objective } else { best.as_ref().unwrap().objective },
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            converged: fit.converged,
        };
        restarts.push(summary);
        if improved {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");
    let (best_params, _) = obj.params_at(&best.z);
    let fids = obj.fidelities(&best_params)?;

    // subset refits start from the full-data optimum
    let subsets: Vec<Vec<usize>> = match cfg.subsets {
        SubsetMode::LeaveOneOut if cfg.targets.len() > 1 => {
            (0..cfg.targets.len()).map(|k| all.iter().copied().filter(|&j| j != k).collect()).collect()
        }
        _ => vec![all.clone()],
    };
    let mut estimates: Vec<Vec<f64>> = Vec::with_capacity(subsets.len());
    for sub in &subsets {
        let vals = if sub.len() == all.len() {
            best.z.clone()
        } else {
            let o = Objective::new(cfg, sub)?;
            let start = o.to_z(&best_params);
            local_search(&o, &start, cfg.max_iters)?.z
        };
        estimates.push(obj.values_at(&vals));
    }
    let params = cfg
        .free
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let xs: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = if xs.len() > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
            } else {
                0.0
            };
            ParamEstimate { name: f.param.name().to_string(), best: f.param.get(&best_params), mean, std: var.sqrt() }
        })
        .collect();
    Ok(FitResult {
        params,
        objective: best.objective,
        target_fidelities: cfg.targets.iter().map(|t| t.name.clone()).zip(fids).collect(),
        subsets: subsets.iter().map(|s| s.iter().map(|&k| cfg.targets[k].name.clone()).collect()).collect(),
        converged: restarts.iter().any(|r| r.converged),
        restarts,
        best_params,
    })
}

/// Targets of the four graph-state protocols in every reported
/// herald/readout branch, simulated at `truth`.
pub fn synthetic_targets(truth: &TrionParams, n_samples: usize, seed: u64) -> Result<Vec<FitTarget>> {
    use crate::metrics::Protocol;
    let unit = overhauser_samples(1.0, n_samples, seed)?;
    let samples: Vec<OverhauserSample> =
        unit.iter().map(|s| OverhauserSample { b: s.b.map(|x| x * truth.b_oh_sigma) }).collect();
    let mut targets = Vec::new();
    for proto in Protocol::all() {
        let prog = proto.program(truth);
        for (h, r) in proto.columns() {
            let name = format!("{}-{}{}", proto.name(), h.name(), r.name());
            let placeholder = DensityMatrix::maximally_mixed(crate::qcore::Register::qubits(["p2", "p3"])?);
            targets.push(FitTarget { name, program: prog.clone(), herald: h, readout: r, target: placeholder });
        }
    }
    let sims = simulate_targets(truth, &targets, &samples)?;
    for (t, s) in targets.iter_mut().zip(sims) {
        t.target = s;
    }
    Ok(targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(free: &[FitParam]) -> FitConfig {
        let truth = TrionParams::measured();
        let targets = synthetic_targets(&truth, 4, 3).unwrap();
        let mut cfg = FitConfig::new(truth.clone(), targets);
        cfg.free = free.iter().map(|&p| FreeParam::around(p, &truth)).collect();
        cfg.n_samples = 4;
        cfg.seed = 3;
        cfg
    }

    #[test]
    fn objective_is_deterministic_and_zero_at_truth() {
        let cfg = small_config(&[FitParam::GE]);
        let all: Vec<usize> = (0..cfg.targets.len()).collect();
        let obj = Objective::new(&cfg, &all).unwrap();
        let a = obj.value(&cfg.base).unwrap();
        let b = obj.value(&cfg.base).unwrap();
        assert_eq!(a, b);
        assert!(a.abs() < 1e-9, "{a}");
        let mut off = cfg.base.clone();
        off.g_e += 0.05;
        assert!(obj.value(&off).unwrap() > a + 1e-4);
    }

    #[test]
    fn start_at_truth_stays_put() {
        let mut cfg = small_config(&[FitParam::GE, FitParam::LambdaOsrp]);
        cfg.restarts = 1;
        cfg.start_at_base = true;
        cfg.subsets = SubsetMode::None;
        cfg.max_iters = 60;
        let r = fit_parameters(&cfg).unwrap();
        assert!(r.objective < 1e-4);
        assert!((r.params[0].best - 0.60).abs() < 0.01);
        assert!(r.params.iter().all(|e| e.std == 0.0));
    }

    #[test]
    fn restarts_report_monotone_best() {
        let mut cfg = small_config(&[FitParam::GE]);
        cfg.restarts = 3;
        cfg.subsets = SubsetMode::None;
        cfg.max_iters = 40;
        let r = fit_parameters(&cfg).unwrap();
        for w in r.restarts.windows(2) {
            assert!(w[1].best_so_far <= w[0].best_so_far);
        }
        assert!((r.params[0].best - 0.60).abs() < 0.02, "{:?}", r.params);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small_config(&[FitParam::GE]);
        cfg.free[0].lower = 0.7;
        assert!(fit_parameters(&cfg).is_err());
        let mut cfg = small_config(&[FitParam::GE]);
        cfg.targets.clear();
        assert!(fit_parameters(&cfg).is_err());
    }

    #[test]
    fn config_document_round_trip() {
        let truth = TrionParams::measured();
        let target = DensityMatrix::maximally_mixed(crate::qcore::Register::qubits(["p2", "p3"]).unwrap());
        let doc = FitConfigDoc {
            base: truth.clone(),
            free: vec![FreeParamDoc { name: "g_e".into(), lower: Some(0.4), upper: None }],
            targets: vec![FitTargetDoc {
                name: "lc".into(),
                program: ProgramRef::Preset("lc4".into()),
                herald: "R".into(),
                readout: "L".into(),
                target: target.to_doc(),
            }],
            n_samples: 5,
            restarts: 2,
            seed: 9,
            max_iters: 10,
            subsets: SubsetMode::None,
            start_at_base: false,
        };
        let text = toml::to_string(&doc).unwrap();
        let cfg = FitConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.free.len(), 1);
        assert_eq!(cfg.free[0].lower, 0.4);
        assert!((cfg.free[0].upper - 0.8).abs() < 1e-12);
        assert_eq!(cfg.targets[0].readout, Circular::L);
        assert_eq!(cfg.targets[0].program, PulseProgram::lc4(&truth));
    }
}
