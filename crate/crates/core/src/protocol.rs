//! Pulse programs compiled into multipartite spin-photon states.
//!
//! Each excitation pulse is represented by the emission process map of the
//! interval that follows it, which carries the spin precession and any
//! phase pulses up to the next excitation (or the evaluation time). The
//! first photon heralds the spin and is consumed; later photons are
//! inserted in front of the spin, giving registers [p2, …, pn, s].

use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideal::{self, GateSymbol, IntervalGate, SPIN_LABEL};
use crate::qcore::SuperOperator;
use crate::qcore::{c, CMat, DensityMatrix, Register};
use crate::trion::{
    dephasing_channel, ground_block, hamiltonian, osrp_unitary, sample_overhauser, sigma_z_e, OverhauserSample,
    TrionParams,
};
use crate::zpg::{emission_process_map_schedule, schedule_duration, ProcessMap, Segment};

/// Largest number of photons kept in a dense joint register (dimension
/// 2^(n+1)).
pub const MAX_PHOTONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Circular {
    R,
    L,
}

impl Circular {
    pub fn index(self) -> usize {
        match self {
            Circular::R => 0,
            Circular::L => 1,
        }
    }

    pub fn both() -> [Circular; 2] {
        [Circular::R, Circular::L]
    }

    pub fn name(self) -> &'static str {
        match self {
            Circular::R => "R",
            Circular::L => "L",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Circular::R),
            "L" | "l" => Ok(Circular::L),
            other => Err(Error::Parse(format!("expected R or L, got `{other}`"))),
        }
    }

    pub fn projector(self) -> CMat {
        let mut m = CMat::zeros(2, 2);
        m[(self.index(), self.index())] = c(1.0);
        m
    }
}

/// Times in ns, angles in rad. OSRP angles are nominal: the applied rotation
/// is θ·θ_osrp/π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Excite { at: f64 },
    Osrp { at: f64, theta: f64 },
    End { at: f64 },
}

impl Event {
    pub fn at(&self) -> f64 {
        match *self {
            Event::Excite { at } | Event::Osrp { at, .. } | Event::End { at } => at,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProgramDoc", into = "ProgramDoc")]
pub struct PulseProgram {
    events: Vec<Event>,
    herald: Circular,
    readout: Circular,
}

impl PulseProgram {
    pub fn new(events: Vec<Event>, herald: Circular, readout: Circular) -> Result<Self> {
        let prog = PulseProgram { events, herald, readout };
        prog.validate()?;
        Ok(prog)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProgram(m.to_string()));
        match self.events.first() {
            None => return bad("program has no events"),
            Some(Event::Excite { .. }) => {}
            Some(_) => return bad("first event must be an excitation"),
        }
        if !matches!(self.events.last(), Some(Event::End { .. })) {
            return bad("last event must be the end of the sequence");
        }
        if self.events.iter().filter(|e| matches!(e, Event::End { .. })).count() != 1 {
            return bad("exactly one end event is required");
        }
        for w in self.events.windows(2) {
            if !(w[1].at() > w[0].at()) {
                return bad("event times must be strictly increasing");
            }
        }
        if self.events.iter().any(|e| !e.at().is_finite()) {
            return bad("event times must be finite");
        }
        if let Some(Event::Osrp { theta, .. }) =
            self.events.iter().find(|e| matches!(e, Event::Osrp { theta, .. } if !theta.is_finite()))
        {
            return Err(Error::InvalidProgram(format!("non-finite rotation {theta}")));
        }
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn herald(&self) -> Circular {
        self.herald
    }

    pub fn readout(&self) -> Circular {
        self.readout
    }

    pub fn with_herald(mut self, herald: Circular) -> Self {
        self.herald = herald;
        self
    }

    pub fn with_readout(mut self, readout: Circular) -> Self {
        self.readout = readout;
        self
    }

    pub fn excitations(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Excite { .. })).count()
    }

    fn excite_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| matches!(e, Event::Excite { .. })).map(Event::at).collect()
    }

    /// Time from the last excitation to the end of the sequence.
    pub fn evaluation_time(&self) -> f64 {
        let end = self.events.last().map(Event::at).unwrap_or(0.0);
        end - self.excite_times().last().copied().unwrap_or(0.0)
    }

    /// One emission schedule per excitation.
    pub fn intervals(&self, p: &TrionParams) -> Vec<Vec<Segment>> {
        let scale = p.theta_osrp / PI;
        let mut out: Vec<Vec<Segment>> = Vec::new();
        let mut clock = 0.0;
        for e in &self.events {
            match *e {
                Event::Excite { at } => {
                    if let Some(cur) = out.last_mut() {
                        push_evolve(cur, at - clock);
                    }
                    out.push(Vec::new());
                    clock = at;
                }
                Event::Osrp { at, theta } => {
                    let cur = out.last_mut().expect("validated: first event excites");
                    push_evolve(cur, at - clock);
                    cur.push(Segment::Osrp(theta * scale));
                    clock = at;
                }
                Event::End { at } => {
                    let cur = out.last_mut().expect("validated: first event excites");
                    push_evolve(cur, at - clock);
                    clock = at;
                }
            }
        }
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ProgramDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        PulseProgram::try_from(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ProgramDoc::from(self.clone())).expect("program documents serialize")
    }

    /// Four equally spaced pulses, no phase pulses.
    pub fn lc4(p: &TrionParams) -> Self {
        four_pulse(p, &[], p.tau_ex * 3.0)
    }

    /// π phase pulses between pulses 2–3 and 3–4.
    pub fn ghz4(p: &TrionParams) -> Self {
        four_pulse(p, &[(1, PI), (2, PI)], p.tau_ex * 3.0)
    }

    /// π phase pulse between pulses 2–3 only.
    pub fn rlc1(p: &TrionParams) -> Self {
        four_pulse(p, &[(1, PI)], p.tau_ex * 3.0)
    }

    /// π phase pulse between pulses 3–4 only.
    pub fn rlc2(p: &TrionParams) -> Self {
        four_pulse(p, &[(2, PI)], p.tau_ex * 3.0)
    }

    /// U(π/2, π) between pulses 2–3 and U(π, φ₂) between pulses 3–4. The last
    /// interval adds a further quarter precession, with the phase pulse
    /// after the first quarter.
    pub fn visibility_scan(p: &TrionParams, phi2: f64) -> Self {
        let tau = p.tau_ex;
        let last = 2.0 * tau + tau + p.quarter_period();
        let events = vec![
            Event::Excite { at: 0.0 },
            Event::Excite { at: tau },
            Event::Osrp { at: tau + p.tau_osrp, theta: PI },
            Event::Excite { at: 2.0 * tau },
            Event::Osrp { at: 3.0 * tau, theta: phi2 },
            Event::Excite { at: last },
            Event::End { at: last + tau },
        ];
        PulseProgram::new(events, Circular::R, Circular::R).expect("preset is valid")
    }

    pub fn preset(name: &str, p: &TrionParams) -> Result<Self> {
        match name {
            "lc4" => Ok(PulseProgram::lc4(p)),
            "ghz4" => Ok(PulseProgram::ghz4(p)),
            "rlc1" => Ok(PulseProgram::rlc1(p)),
            "rlc2" => Ok(PulseProgram::rlc2(p)),
            "visibility-scan" => Ok(PulseProgram::visibility_scan(p, 0.0)),
            other => Err(Error::Parse(format!("unknown program preset `{other}`"))),
        }
    }

    pub fn preset_names() -> [&'static str; 5] {
        ["lc4", "ghz4", "rlc1", "rlc2", "visibility-scan"]
    }

    /// Ideal gate list (from the heralded spin) for a program whose intervals
    /// realize θ ∈ {0, π/2, π} and φ ∈ {0, π}; the gates of the final interval
    /// are returned separately.
    pub fn ideal_gates(&self, p: &TrionParams) -> Result<(Vec<GateSymbol>, Vec<GateSymbol>)> {
        let intervals = self.intervals(p);
        let scale = p.theta_osrp / PI;
        let mut per_interval = Vec::with_capacity(intervals.len());
        for sched in &intervals {
            let evolve: f64 = sched.iter().map(|s| if let Segment::Evolve(dt) = s { *dt } else { 0.0 }).sum();
            let phase: f64 = sched.iter().map(|s| if let Segment::Osrp(t) = s { *t / scale } else { 0.0 }).sum();
            let theta = p.delta_e() * evolve - (p.delta_e() - p.delta_h()) * p.t1;
            let snap = |x: f64, grid: &[f64]| grid.iter().copied().find(|g| (x - g).abs() < 0.15);
            let theta = snap(theta, &[0.0, FRAC_PI_2, PI])
                .ok_or_else(|| Error::InvalidGates(format!("interval precession {theta:.3} rad is not 0, π/2 or π")))?;
            let phi = phase.rem_euclid(2.0 * PI);
            let phi = snap(phi, &[0.0, PI, 2.0 * PI])
                .map(|v| if v == 2.0 * PI { 0.0 } else { v })
                .ok_or_else(|| Error::InvalidGates(format!("interval phase {phi:.3} rad is not 0 or π")))?;
            per_interval.push(ideal::interval_unitary(theta, phi)?);
        }
        let mut gates = per_interval[0].clone();
        let last = per_interval.len() - 1;
        for u in &per_interval[1..last.max(1)] {
            gates.push(GateSymbol::Es);
            gates.extend(u.iter().copied());
        }
        if last >= 1 {
            gates.push(GateSymbol::Es);
        }
        let tail = if last >= 1 { per_interval[last].clone() } else { Vec::new() };
        Ok((gates, tail))
    }
}

/// Where phase pulses act relative to the emission map of their interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OsrpPlacement {
    /// The emission map is evaluated up to the pulse; the pulse and the rest
    /// of the interval act on the spin alone.
    #[default]
    OnSpin,
    /// The pulse acts on the full trion state inside the emission evolution,
    /// so population still excited at the pulse is not rotated.
    InEmission,
}

/// Spin-only channel of a schedule: ground-manifold precession (including
/// the Overhauser field) and phase pulses with their dephasing.
pub fn spin_channel(p: &TrionParams, s: &OverhauserSample, schedule: &[Segment]) -> Result<SuperOperator> {
    let h = ground_block(hamiltonian(p, s)?.mat());
    let free = SuperOperator::hamiltonian(&h);
    let sz = ground_block(&sigma_z_e());
    let mut acc = SuperOperator::identity(2);
    for seg in schedule {
        let step = match *seg {
            Segment::Evolve(dt) => free.exp(dt),
            Segment::Osrp(theta) => {
                let rot = SuperOperator::unitary(&ground_block(&osrp_unitary(theta)));
                dephasing_channel(&sz, p.lambda_osrp, "lambda_osrp")?.after(&rot)?
            }
        };
        acc = step.after(&acc)?;
    }
    Ok(acc)
}

/// Applies a spin channel to the spin output of an emission transfer matrix.
fn compose_spin(transfer: &CMat, k: &SuperOperator) -> CMat {
    let km = k.mat();
    let mut out = CMat::zeros(16, 4);
    for col in 0..4 {
        for p in 0..2 {
            for q in 0..2 {
                for t in 0..2 {
                    for u in 0..2 {
                        let mut acc = c(0.0);
                        for s in 0..2 {
                            for s2 in 0..2 {
                                acc += km[(t + u * 2, s + s2 * 2)] * transfer[((p * 2 + s) + (q * 2 + s2) * 4, col)];
                            }
                        }
                        out[((p * 2 + t) + (q * 2 + u) * 4, col)] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Emission map of one interval under the given phase-pulse placement.
pub fn interval_map(
    p: &TrionParams,
    s: &OverhauserSample,
    schedule: &[Segment],
    placement: OsrpPlacement,
) -> Result<ProcessMap> {
    let split = schedule.iter().position(|seg| matches!(seg, Segment::Osrp(_)));
    match (placement, split) {
        (OsrpPlacement::OnSpin, Some(k)) if k > 0 => {
            let head = emission_process_map_schedule(p, s, &schedule[..k])?;
            let tail = spin_channel(p, s, &schedule[k..])?;
            let total = schedule_duration(schedule);
            head.with_transfer(compose_spin(head.transfer(), &tail), total)
        }
        _ => emission_process_map_schedule(p, s, schedule),
    }
}

/// Schedules equal up to rounding of the event clock.
fn same_schedule(a: &[Segment], b: &[Segment]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Segment::Evolve(u), Segment::Evolve(v)) | (Segment::Osrp(u), Segment::Osrp(v)) => (u - v).abs() < 1e-12,
            _ => false,
        })
}

fn push_evolve(sched: &mut Vec<Segment>, dt: f64) {
    if dt > 0.0 {
        sched.push(Segment::Evolve(dt));
    }
}

/// Pulses at 0, τ, 2τ and `last`, phase pulses at τ_osrp after the listed
/// pulse indices, ending τ after the last pulse.
fn four_pulse(p: &TrionParams, osrp: &[(usize, f64)], last: f64) -> PulseProgram {
    let tau = p.tau_ex;
    let excites = [0.0, tau, 2.0 * tau, last];
    let mut events = Vec::new();
    for (k, &t) in excites.iter().enumerate() {
        events.push(Event::Excite { at: t });
        if let Some(&(_, theta)) = osrp.iter().find(|(i, _)| *i == k) {
            events.push(Event::Osrp { at: t + p.tau_osrp, theta });
        }
    }
    events.push(Event::End { at: last + tau });
    PulseProgram::new(events, Circular::R, Circular::R).expect("preset is valid")
}

/// Text form of a program: times in ps, OSRP angles in units of π.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramDoc {
    pub herald: String,
    pub readout: String,
    pub events: Vec<EventDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDoc {
    pub kind: String,
    pub at_ps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_pi: Option<f64>,
}

impl From<PulseProgram> for ProgramDoc {
    fn from(p: PulseProgram) -> Self {
        let events = p
            .events
            .iter()
            .map(|e| match *e {
                Event::Excite { at } => EventDoc { kind: "excite".into(), at_ps: at * 1e3, theta_pi: None },
                Event::Osrp { at, theta } => {
                    EventDoc { kind: "osrp".into(), at_ps: at * 1e3, theta_pi: Some(theta / PI) }
                }
                Event::End { at } => EventDoc { kind: "end".into(), at_ps: at * 1e3, theta_pi: None },
            })
            .collect();
        ProgramDoc { herald: p.herald.name().into(), readout: p.readout.name().into(), events }
    }
}

impl TryFrom<ProgramDoc> for PulseProgram {
    type Error = Error;

    fn try_from(d: ProgramDoc) -> Result<Self> {
        let events = d
            .events
            .iter()
            .map(|e| {
                let at = e.at_ps * 1e-3;
                match e.kind.as_str() {
                    "excite" => Ok(Event::Excite { at }),
                    "end" => Ok(Event::End { at }),
                    "osrp" => {
                        let theta =
                            e.theta_pi.ok_or_else(|| Error::InvalidProgram("osrp event needs theta_pi".into()))?;
                        Ok(Event::Osrp { at, theta: theta * PI })
                    }
                    other => Err(Error::InvalidProgram(format!("unknown event kind `{other}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PulseProgram::new(events, Circular::parse(&d.herald)?, Circular::parse(&d.readout)?)
    }
}

/// Joint state of photons 2…n and the spin after heralding.
#[derive(Clone, Debug)]
pub struct JointState {
    pub state: DensityMatrix,
    /// Probability of the herald outcome.
    pub probability: f64,
    pub herald: Circular,
}

impl JointState {
    pub fn photon_labels(&self) -> Vec<String> {
        self.state.register().labels().iter().filter(|l| l.as_str() != SPIN_LABEL).cloned().collect()
    }
}

/// Emission maps of one program for one Overhauser sample, computed once
/// per distinct interval schedule.
#[derive(Clone, Debug)]
pub struct CompiledSequence {
    maps: Vec<ProcessMap>,
    index: Vec<usize>,
}

impl CompiledSequence {
    pub fn new(p: &TrionParams, prog: &PulseProgram, s: &OverhauserSample) -> Result<Self> {
        CompiledSequence::with_placement(p, prog, s, OsrpPlacement::default())
    }

    pub fn with_placement(
        p: &TrionParams,
        prog: &PulseProgram,
        s: &OverhauserSample,
        placement: OsrpPlacement,
    ) -> Result<Self> {
        let intervals = prog.intervals(p);
        if intervals.is_empty() {
            return Err(Error::InvalidProgram("program has no excitation".into()));
        }
        if intervals.len() - 1 > MAX_PHOTONS {
            return Err(Error::RegisterTooLarge { requested: intervals.len() - 1, cap: MAX_PHOTONS });
        }
        let mut keys: Vec<&Vec<Segment>> = Vec::new();
        let mut index = Vec::with_capacity(intervals.len());
        for sched in &intervals {
            match keys.iter().position(|k| same_schedule(k, sched)) {
                Some(i) => index.push(i),
                None => {
                    index.push(keys.len());
                    keys.push(sched);
                }
            }
        }
        let maps = keys.iter().map(|sched| interval_map(p, s, sched, placement)).collect::<Result<Vec<_>>>()?;
        Ok(CompiledSequence { maps, index })
    }

    pub fn map(&self, k: usize) -> &ProcessMap {
        &self.maps[self.index[k]]
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn distinct_maps(&self) -> usize {
        self.maps.len()
    }

    /// Spin state after the herald photon is measured, with the herald
    /// probability.
    pub fn heralded_spin(&self, herald: Circular) -> Result<(CMat, f64)> {
        let mixed = CMat::identity(2, 2) * c(0.5);
        let out = self.map(0).apply(&mixed)?;
        let h = herald.index() * 2;
        let spin = out.view((h, h), (2, 2)).into_owned();
        let prob = crate::qcore::linalg::trace(&spin).re;
        if !(prob > 1e-12) {
            return Err(Error::Numerical(format!("herald probability {prob:.3e} vanishes")));
        }
        Ok((spin / c(prob), prob))
    }

    pub fn run(&self, herald: Circular) -> Result<JointState> {
        let (spin, probability) = self.heralded_spin(herald)?;
        let mut state = DensityMatrix::from_raw(Register::single(SPIN_LABEL, 2), spin, true)?;
        for k in 1..self.len() {
            let label = ideal::photon_label(k + 1);
            state =
                state.apply_local_map(self.map(k).transfer(), SPIN_LABEL, &[label.as_str(), SPIN_LABEL], &[2, 2])?;
        }
        let state = state.normalize()?;
        Ok(JointState { state, probability, herald })
    }
}

pub fn run_sequence(p: &TrionParams, prog: &PulseProgram, s: &OverhauserSample) -> Result<JointState> {
    CompiledSequence::new(p, prog, s)?.run(prog.herald())
}

/// Projects the last photon on `readout`, traces it and the spin out, and
/// returns the normalized state of the remaining photons with the readout
/// probability.
pub fn herald_and_readout(js: &JointState, readout: Circular) -> Result<(DensityMatrix, f64)> {
    let photons = js.photon_labels();
    if photons.len() < 2 {
        return Err(Error::InvalidProgram(format!(
            "readout needs at least two photons after the herald, found {}",
            photons.len()
        )));
    }
    let last = photons.last().unwrap();
    let (branch, prob) = js.state.measure_project(&readout.projector(), last)?;
    let keep: Vec<&str> = photons[..photons.len() - 1].iter().map(String::as_str).collect();
    let reduced = branch.partial_trace(&keep)?;
    if !(prob > 1e-12) {
        return Err(Error::Numerical(format!("readout probability {prob:.3e} vanishes")));
    }
    Ok((reduced.normalize()?, prob))
}

/// `n` Overhauser draws from ChaCha8 seeded with `seed`.
pub fn overhauser_samples(sigma: f64, n: usize, seed: u64) -> Result<Vec<OverhauserSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_overhauser(sigma, &mut rng)).collect()
}

/// Probability-weighted mean of per-sample joint states. Samples run in
/// parallel; the reduction follows sample order.
pub fn average_joint(states: &[JointState]) -> Result<JointState> {
    let first = states.first().ok_or_else(|| Error::param("n_samples", "must be at least 1"))?;
    let mut acc = CMat::zeros(first.state.dim(), first.state.dim());
    let mut weight = 0.0;
    for js in states {
        acc += js.state.mat() * c(js.probability);
        weight += js.probability;
    }
    let mat = acc / c(weight);
    let state = DensityMatrix::from_raw(first.state.register().clone(), mat, true)?;
    Ok(JointState { state, probability: weight / states.len() as f64, herald: first.herald })
}

/// Runs every herald branch for each Overhauser sample; result is indexed
/// [herald][sample].
pub fn run_samples(
    p: &TrionParams,
    prog: &PulseProgram,
    samples: &[OverhauserSample],
    heralds: &[Circular],
) -> Result<Vec<Vec<JointState>>> {
    let per_sample: Vec<Vec<JointState>> = samples
        .par_iter()
        .map(|s| {
            let seq = CompiledSequence::new(p, prog, s)?;
            heralds.iter().map(|&h| seq.run(h)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..heralds.len()).map(|h| per_sample.iter().map(|v| v[h].clone()).collect()).collect())
}

pub fn overhauser_average(p: &TrionParams, prog: &PulseProgram, n_samples: usize, seed: u64) -> Result<JointState> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let samples = overhauser_samples(p.b_oh_sigma, n_samples, seed)?;
    let runs = run_samples(p, prog, &samples, &[prog.herald()])?;
    average_joint(&runs[0])
}

/// Conditional S_z = (I_R − I_L)/(I_R + I_L) of the second photon after
/// heralding the spin with an R photon, for two pulses separated by each
/// delay. With `osrp_theta`, a phase pulse is placed halfway between them.
pub fn spin_sz_trace(
    p: &TrionParams,
    delays: &[f64],
    osrp_theta: Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if delays.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::param("delays", "must be positive"));
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let samples = overhauser_samples(p.b_oh_sigma, n_samples, seed)?;
    delays
        .par_iter()
        .map(|&d| {
            let mut events = vec![Event::Excite { at: 0.0 }];
            if let Some(theta) = osrp_theta {
                events.push(Event::Osrp { at: d / 2.0, theta });
            }
            events.push(Event::Excite { at: d });
            events.push(Event::End { at: d + p.tau_ex });
            let prog = PulseProgram::new(events, Circular::R, Circular::R)?;
            let (mut ir, mut il) = (0.0, 0.0);
            for s in &samples {
                let js = CompiledSequence::new(p, &prog, s)?.run(Circular::R)?;
                let photon = js.state.partial_trace(&["p2"])?;
                ir += js.probability * photon.mat()[(0, 0)].re;
                il += js.probability * photon.mat()[(1, 1)].re;
            }
            Ok((ir - il) / (ir + il))
        })
        .collect()
}

/// Environment of the fidelity contraction ⟨ψ|ρ|ψ⟩ with the photons summed
/// out: E[a][b][s][t] pairs ideal spin indices (a, b) with simulated spin
/// indices (s, t).
#[derive(Clone, Debug)]
struct Environment([[[[num_complex::Complex64; 2]; 2]; 2]; 2]);

impl Environment {
    fn new(ideal_spin: &[num_complex::Complex64; 2], rho: &CMat) -> Self {
        let mut e = [[[[c(0.0); 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for s in 0..2 {
                    for t in 0..2 {
                        e[a][b][s][t] = ideal_spin[a].conj() * rho[(s, t)] * ideal_spin[b];
                    }
                }
            }
        }
        Environment(e)
    }

    /// Adds one photon: ideal isometry `v` (4×2, photon ⊗ spin) against the
    /// simulated transfer matrix (16×4).
    fn step(&self, v: &CMat, transfer: &CMat) -> Self {
        let mut out = [[[[c(0.0); 2]; 2]; 2]; 2];
        // W[p][p'][t][t'] over (s, s') contracted first
        let mut w = [[[[[[c(0.0); 2]; 2]; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for p in 0..2 {
                    for q in 0..2 {
                        for t in 0..2 {
                            for u in 0..2 {
                                let row = (p * 2 + t) + (q * 2 + u) * 4;
                                let mut acc = c(0.0);
                                for s in 0..2 {
                                    for s2 in 0..2 {
                                        acc += transfer[(row, s + s2 * 2)] * self.0[a][b][s][s2];
                                    }
                                }
                                w[a][b][p][q][t][u] = acc;
                            }
                        }
                    }
                }
            }
        }
        for a2 in 0..2 {
            for b2 in 0..2 {
                for t in 0..2 {
                    for u in 0..2 {
                        let mut acc = c(0.0);
                        for p in 0..2 {
                            for q in 0..2 {
                                for a in 0..2 {
                                    for b in 0..2 {
                                        acc += v[(p * 2 + a2, a)].conj() * v[(q * 2 + b2, b)] * w[a][b][p][q][t][u];
                                    }
                                }
                            }
                        }
                        out[a2][b2][t][u] = acc;
                    }
                }
            }
        }
        Environment(out)
    }

    fn fidelity(&self) -> f64 {
        let mut f = c(0.0);
        for a in 0..2 {
            for b in 0..2 {
                f += self.0[a][b][a][b];
            }
        }
        f.re
    }
}

/// A 10-photon caterpillar: R_y intervals open new spine nodes and Z
/// intervals attach the next photon to the current node.
pub const CATERPILLAR_10: [IntervalGate; 10] = {
    use IntervalGate::{Ry, Z};
    [Ry, Ry, Z, Ry, Z, Z, Ry, Ry, Z, Ry]
};

/// Pulse program of a heralded chain: an initialization interval followed by
/// one interval per photon. `Z` intervals carry a π phase pulse at τ_osrp.
pub fn chain_program(p: &TrionParams, init: IntervalGate, pattern: &[IntervalGate]) -> Result<PulseProgram> {
    let tau = p.tau_ex;
    let mut events = Vec::new();
    let gates = std::iter::once(init).chain(pattern.iter().copied());
    for (k, g) in gates.enumerate() {
        let t = k as f64 * tau;
        events.push(Event::Excite { at: t });
        if g == IntervalGate::Z {
            events.push(Event::Osrp { at: t + p.tau_osrp, theta: PI });
        }
    }
    events.push(Event::End { at: (pattern.len() as f64 + 1.0) * tau });
    PulseProgram::new(events, Circular::R, Circular::R)
}

/// Fidelity of the heralded chain (photons 2…n+1 and spin) to its ideal ket
/// after every emission, averaged over Overhauser samples with herald
/// weights. Memory is independent of chain length.
pub fn chain_fidelities(
    p: &TrionParams,
    init: IntervalGate,
    pattern: &[IntervalGate],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if pattern.is_empty() {
        return Err(Error::param("pattern", "chain needs at least one photon"));
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    let samples = overhauser_samples(p.b_oh_sigma, n_samples, seed)?;
    let tau = p.tau_ex;
    let plain = vec![Segment::Evolve(tau)];
    let split = vec![Segment::Evolve(p.tau_osrp), Segment::Osrp(p.theta_osrp), Segment::Evolve(tau - p.tau_osrp)];
    let schedule = |g: IntervalGate| if g == IntervalGate::Z { split.clone() } else { plain.clone() };
    let es = ideal::emission_isometry();
    let ideal_v = |g: IntervalGate| {
        let mut u = CMat::zeros(4, 4);
        u.view_mut((0, 0), (2, 2)).copy_from(&g.matrix());
        u.view_mut((2, 2), (2, 2)).copy_from(&g.matrix());
        u * &es
    };
    let ideal_init = init.matrix();
    let psi0 = [ideal_init[(0, 0)], ideal_init[(1, 0)]];

    let per_sample: Vec<(f64, Vec<f64>)> = samples
        .par_iter()
        .map(|s| {
            let placement = OsrpPlacement::default();
            let herald_map = interval_map(p, s, &schedule(init), placement)?;
            let ry_map = interval_map(p, s, &plain, placement)?;
            let z_map = interval_map(p, s, &split, placement)?;
            let mixed = CMat::identity(2, 2) * c(0.5);
            let out = herald_map.apply(&mixed)?;
            let spin = out.view((0, 0), (2, 2)).into_owned();
            let prob = crate::qcore::linalg::trace(&spin).re;
            let mut env = Environment::new(&psi0, &(spin / c(prob)));
            let mut fids = Vec::with_capacity(pattern.len());
            for &g in pattern {
                let map = if g == IntervalGate::Z { &z_map } else { &ry_map };
                env = env.step(&ideal_v(g), map.transfer());
                fids.push(env.fidelity());
            }
            Ok((prob, fids))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = per_sample.iter().map(|(w, _)| w).sum();
    Ok((0..pattern.len()).map(|k| per_sample.iter().map(|(w, f)| w * f[k]).sum::<f64>() / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::ideal_protocol_state_from;
    use crate::qcore::linalg::max_abs_diff;

    #[test]
    fn preset_timings() {
        let p = TrionParams::measured();
        let ghz = PulseProgram::ghz4(&p);
        assert_eq!(ghz.excitations(), 4);
        let iv = ghz.intervals(&p);
        assert_eq!(iv.len(), 4);
        assert_eq!(iv[0], vec![Segment::Evolve(0.6)]);
        match iv[1].as_slice() {
            [Segment::Evolve(a), Segment::Osrp(th), Segment::Evolve(b)] => {
                assert!((a - 0.3).abs() < 1e-12 && (b - 0.3).abs() < 1e-12);
                assert!((th - 1.03 * PI).abs() < 1e-12);
            }
            other => panic!("unexpected schedule {other:?}"),
        }
        assert!((ghz.evaluation_time() - 0.6).abs() < 1e-12);
        let vis = PulseProgram::visibility_scan(&p, 0.0);
        let last = vis.intervals(&p)[2].iter().map(|s| if let Segment::Evolve(d) = s { *d } else { 0.0 }).sum::<f64>();
        assert!((last - 1.0961).abs() < 1e-3);
    }

    #[test]
    fn program_validation() {
        let ex = |t| Event::Excite { at: t };
        assert!(PulseProgram::new(vec![], Circular::R, Circular::R).is_err());
        assert!(PulseProgram::new(
            vec![Event::Osrp { at: 0.0, theta: PI }, ex(0.6), Event::End { at: 1.0 }],
            Circular::R,
            Circular::R
        )
        .is_err());
        assert!(PulseProgram::new(vec![ex(0.0), ex(0.0), Event::End { at: 1.0 }], Circular::R, Circular::R).is_err());
        assert!(PulseProgram::new(vec![ex(0.0), ex(0.6)], Circular::R, Circular::R).is_err());
        assert!(PulseProgram::new(vec![ex(0.0), Event::End { at: 0.6 }], Circular::R, Circular::R).is_ok());
    }

    #[test]
    fn program_document_round_trip() {
        let p = TrionParams::measured();
        let prog = PulseProgram::ghz4(&p).with_herald(Circular::L);
        let text = prog.to_toml();
        assert!(text.contains("kind = \"osrp\""));
        let back = PulseProgram::from_toml(&text).unwrap();
        assert_eq!(back.herald(), Circular::L);
        assert_eq!(back.events().len(), prog.events().len());
        for (a, b) in back.events().iter().zip(prog.events()) {
            assert!((a.at() - b.at()).abs() < 1e-12);
        }
    }

    #[test]
    fn map_cache_shares_intervals() {
        let p = TrionParams::measured();
        let s = OverhauserSample::zero();
        assert_eq!(CompiledSequence::new(&p, &PulseProgram::lc4(&p), &s).unwrap().distinct_maps(), 1);
        assert_eq!(CompiledSequence::new(&p, &PulseProgram::ghz4(&p), &s).unwrap().distinct_maps(), 2);
        assert_eq!(CompiledSequence::new(&p, &PulseProgram::rlc1(&p), &s).unwrap().distinct_maps(), 2);
    }

    #[test]
    fn register_growth_and_branch_completeness() {
        let p = TrionParams::measured();
        let prog = PulseProgram::lc4(&p);
        let seq = CompiledSequence::new(&p, &prog, &OverhauserSample::new([1.0, -2.0, 0.5]).unwrap()).unwrap();
        let mut total = 0.0;
        for h in Circular::both() {
            let js = seq.run(h).unwrap();
            assert_eq!(js.state.register().labels(), &["p2", "p3", "p4", "s"]);
            for r in Circular::both() {
                let (_, pr) = herald_and_readout(&js, r).unwrap();
                total += js.probability * pr;
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ideal_limit_matches_gate_model() {
        let p = TrionParams::ideal();
        for (name, prog) in [("lc4", PulseProgram::lc4(&p)), ("ghz4", PulseProgram::ghz4(&p))] {
            let js = run_sequence(&p, &prog, &OverhauserSample::zero()).unwrap();
            let (gates, tail) = prog.ideal_gates(&p).unwrap();
            let mut all = gates.clone();
            all.extend(tail);
            let k = ideal_protocol_state_from(&all, [c(1.0), c(0.0)], 2).unwrap();
            let f = js.state.expectation_ket(&k).unwrap();
            assert!(f > 0.999, "{name}: {f}");
        }
    }

    #[test]
    fn zero_sigma_average_is_single_run() {
        let p = TrionParams { b_oh_sigma: 0.0, ..TrionParams::measured() };
        let prog = PulseProgram::rlc2(&p);
        let avg = overhauser_average(&p, &prog, 3, 1).unwrap();
        let one = run_sequence(&p, &prog, &OverhauserSample::zero()).unwrap();
        assert!(max_abs_diff(avg.state.mat(), one.state.mat()) < 1e-12);
    }

    #[test]
    fn contraction_matches_dense_fidelity() {
        let p = TrionParams::measured();
        let pattern = [IntervalGate::Ry, IntervalGate::Z, IntervalGate::Ry];
        let f = chain_fidelities(&p, IntervalGate::Ry, &pattern, 2, 5).unwrap();
        let prog = chain_program(&p, IntervalGate::Ry, &pattern).unwrap();
        let samples = overhauser_samples(p.b_oh_sigma, 2, 5).unwrap();
        let runs = run_samples(&p, &prog, &samples, &[Circular::R]).unwrap();
        let avg = average_joint(&runs[0]).unwrap();
        let mut gates = vec![GateSymbol::Ry(FRAC_PI_2)];
        for g in pattern {
            gates.push(GateSymbol::Es);
            gates.push(g.symbol());
        }
        let k = ideal_protocol_state_from(&gates, [c(1.0), c(0.0)], 2).unwrap();
        let dense = avg.state.expectation_ket(&k).unwrap();
        assert!((f[2] - dense).abs() < 1e-10, "{} vs {dense}", f[2]);
    }
}
