//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! numbers underneath. Exits nonzero when any hard criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use qdgraph::fit::{fit_parameters, synthetic_targets, FitConfig, FitParam, SubsetMode};
use qdgraph::ideal::{self, apply_clifford_words, random_graph_state, GateSymbol, IntervalGate, PhotonRef};
use qdgraph::metrics::{self, fidelity, fit_damped_cosine, ideal_target, linear_regression, Protocol};
use qdgraph::protocol::{chain_fidelities, overhauser_samples, run_sequence, spin_sz_trace, Circular, CATERPILLAR_10};
use qdgraph::qcore::linalg::{random_density, random_ket, trace, trace_distance};
use qdgraph::qcore::{c, CMat, DensityMatrix, Register};
use qdgraph::tomography::{reconstruct, simulate_counts, MeasurementSetting, Shots};
use qdgraph::trion::{self, OverhauserSample, ParamUncertainty, TrionParams, MU_B};
use qdgraph::zpg::{emission_process_map, threshold_quartet, PolarizationAxis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, details: Vec::new() }
    }

    /// Records one check; the criterion fails if any check fails.
    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("     {line}"));
    }
}

fn table_s2() -> Outcome {
    let mut out = Outcome::new();
    let p = TrionParams::measured();
    let entries = metrics::fidelity_table(&p, 300, 0, 7).expect("fidelity table");
    let f2 = |proto: Protocol, h: Circular, r: Circular| -> f64 {
        entries.iter().find(|e| e.protocol == proto && e.herald == h && e.readout == r).expect("column").f2
    };
    let f4 = |proto: Protocol| entries.iter().find(|e| e.protocol == proto).expect("column").f4;
    use Circular::{L, R};
    let expect_f2 = [
        (Protocol::Lc, R, R, 0.70),
        (Protocol::Lc, R, L, 0.71),
        (Protocol::Lc, L, R, 0.71),
        (Protocol::Lc, L, L, 0.72),
        (Protocol::Ghz, R, R, 0.67),
        (Protocol::Ghz, R, L, 0.68),
        (Protocol::Rlc1, R, R, 0.58),
        (Protocol::Rlc1, R, L, 0.57),
        (Protocol::Rlc2, R, R, 0.68),
        (Protocol::Rlc2, R, L, 0.68),
    ];
    for (proto, h, r, want) in expect_f2 {
        let got = f2(proto, h, r);
        out.check(
            (got - want).abs() <= 0.05,
            format!("F2 {} {}{}: {got:.3} vs {want:.2} ± 0.05", proto.name(), h.name(), r.name()),
        );
    }
    for (proto, want) in [(Protocol::Lc, 0.66), (Protocol::Ghz, 0.45), (Protocol::Rlc1, 0.53), (Protocol::Rlc2, 0.53)] {
        let got = f4(proto);
        out.check((got - want).abs() <= 0.06, format!("F4 {}: {got:.3} vs {want:.2} ± 0.06", proto.name()));
    }
    out
}

fn ideal_limit() -> Outcome {
    let mut out = Outcome::new();
    let p = TrionParams::ideal();
    for proto in Protocol::all() {
        for h in Circular::both() {
            let prog = proto.program(&p).with_herald(h);
            let js = run_sequence(&p, &prog, &OverhauserSample::zero()).expect("simulate");
            let f = fidelity(&js.state, &ideal_target(&p, &prog, h, 0.0).expect("target")).expect("fidelity");
            out.check(f >= 0.999, format!("{} herald {}: F = {f:.6} (≥ 0.999)", proto.name(), h.name()));
        }
    }
    out
}

fn zpg_identities() -> Outcome {
    let mut out = Outcome::new();
    let p = TrionParams::measured();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = overhauser_samples(p.b_oh_sigma, 20, 4).expect("samples");
    let reg = Register::single("qd", 4);
    let excite = trion::excitation_channel(&p).expect("excitation");
    let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
    let (mut completeness, mut double, mut rise, mut choi) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    let mut cases = 0;
    for s in &samples {
        let l = trion::liouvillian(&p, s).expect("liouvillian");
        // excited spin states, so that at most one photon can be emitted
        let spin = random_density(2, &mut rng);
        let rho0 = excite.apply_mat(&trion::embed_spin(&spin)).expect("excite");
        let rho0 = DensityMatrix::new(reg.clone(), rho0, true).expect("state");
        let unconditioned = l.exp(0.6).apply_mat(rho0.mat()).expect("evolve");
        for axis in PolarizationAxis::cardinal() {
            cases += 1;
            let q = threshold_quartet(&rho0, &axis, 0.6, &l, p.gamma()).expect("quartet");
            completeness = completeness.max(qdgraph::qcore::linalg::max_abs_diff(&q.sum(), &unconditioned));
            double = double.max(trace(q.rho_11.mat()).re);
            let mut prev = f64::INFINITY;
            for &t in &times {
                let tr = threshold_quartet(&rho0, &axis, t, &l, p.gamma()).expect("quartet").rho_00.trace();
                rise = rise.max(tr - prev);
                prev = tr;
            }
        }
        choi = choi.min(emission_process_map(&p, s, 0.6).expect("map").choi_min_eigenvalue());
    }
    out.note(format!("{cases} state/axis cases over 20 Overhauser samples"));
    out.check(
        completeness <= 1e-8,
        format!("quartet sum vs unconditioned state: max |Δ| = {completeness:.2e} (≤ 1e-8)"),
    );
    out.check(double <= 1e-6, format!("double-click trace for one emission: max {double:.2e} (≤ 1e-6)"));
    out.check(rise <= 1e-12, format!("zero-photon trace monotone in t: max increase {rise:.2e}"));
    out.check(choi >= -1e-6, format!("Choi of the emission map: min eigenvalue {choi:.2e} (≥ −1e-6)"));
    out
}

fn visibility() -> Outcome {
    let mut out = Outcome::new();
    let phis = [0.0, FRAC_PI_2, PI];
    let want = [-1.0, 0.0, 1.0];
    // the residual at finite T1 is emission-time jitter, ≈ (Δe·T1)²/2
    let limit = TrionParams::ideal_with_lifetime(1e-4);
    let v = metrics::visibility_scan(&limit, &phis, 1, 0).expect("scan");
    let dev = v.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.check(dev <= 1e-6, format!("ideal limit (T1 = 0.1 ps): V = {v:.8?}, max deviation {dev:.2e} (≤ 1e-6)"));
    let preset = TrionParams::ideal();
    let v3 = metrics::visibility_scan(&preset, &phis, 1, 0).expect("scan");
    let dev3 = v3.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.note(format!(
        "ideal preset (T1 = 1 ps): max deviation {dev3:.2e}, jitter estimate {:.2e}",
        (preset.delta_e() * preset.t1).powi(2) / 2.0
    ));
    let grid: Vec<f64> = (0..=36).map(|k| k as f64 * 3.0 * PI / 36.0).collect();
    let vs = metrics::visibility_scan(&TrionParams::measured(), &grid, 100, 7).expect("scan");
    let (lo, hi) = vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let amp = (hi - lo) / 2.0;
    out.check(
        (amp - 0.6).abs() <= 0.1,
        format!("fitted parameters: V ∈ [{lo:.3}, {hi:.3}], amplitude {amp:.3} (0.6 ± 0.1)"),
    );
    out
}

fn larmor() -> Outcome {
    let mut out = Outcome::new();
    let delays: Vec<f64> = (1..=80).map(|k| k as f64 * 0.05).collect();
    let trace_fit = |g_e: f64| {
        let p = TrionParams { g_e, ..TrionParams::measured() };
        let sz = spin_sz_trace(&p, &delays, None, 100, 5).expect("trace");
        (p.larmor_period(), fit_damped_cosine(&delays, &sz).expect("fit"))
    };
    let (expected, f) = trace_fit(0.60);
    let rel = (f.period - expected).abs() / expected;
    out.check(
        rel <= 0.01,
        format!("period {:.4} ns vs 2π/(g_e μ_B B) = {expected:.4} ns, {:.2}% (≤ 1%)", f.period, 100.0 * rel),
    );
    let half = f.half_life();
    out.check((1.5..=3.0).contains(&half), format!("envelope half-life {half:.3} ns at B_OH = 9 mT (1.5 to 3 ns)"));
    let (_, fast) = trace_fit(0.64);
    let (_, slow) = trace_fit(0.56);
    let contains = (fast.period..=slow.period).contains(&1.85);
    out.check(
        contains,
        format!("g_e ∈ [0.56, 0.64] period bracket [{:.4}, {:.4}] ns contains 1.85 ns", fast.period, slow.period),
    );
    let b = TrionParams::measured().b;
    out.note(format!(
        "bare-field bracket [{:.4}, {:.4}] ns",
        2.0 * PI / (0.64 * MU_B * b),
        2.0 * PI / (0.56 * MU_B * b)
    ));
    out
}

fn fit_round_trip() -> Outcome {
    let mut out = Outcome::new();
    let truth = TrionParams::measured();
    // targets from Overhauser draws independent of those in the objective
    let targets = synthetic_targets(&truth, 100, 99).expect("targets");
    let mut cfg = FitConfig::new(truth.clone(), targets);
    cfg.n_samples = 20;
    cfg.seed = 11;
    cfg.restarts = 3;
    cfg.subsets = SubsetMode::None;
    let result = fit_parameters(&cfg).expect("fit");
    let unc = ParamUncertainty::measured();
    for (k, r) in result.restarts.iter().enumerate() {
        let mut worst = (0.0f64, "");
        for (i, f) in cfg.free.iter().enumerate() {
            let z = (r.end[i] - f.param.get(&truth)).abs() / f.param.uncertainty(&unc);
            if z > worst.0 {
                worst = (z, f.param.name());
            }
        }
        out.check(
            worst.0 <= 1.5,
            format!("restart {k}: objective {:.2e}, worst |Δ|/σ = {:.2} ({}) (≤ 1.5)", r.objective, worst.0, worst.1),
        );
    }
    for (i, p) in FitParam::all().iter().enumerate() {
        let ends: Vec<String> = result.restarts.iter().map(|r| format!("{:.4}", r.end[i])).collect();
        out.note(format!("{}: truth {:.4}, ends [{}]", p.name(), p.get(&truth), ends.join(", ")));
    }
    out
}

fn scaling() -> (Outcome, Outcome) {
    let mut out = Outcome::new();
    let p = TrionParams::near_term();
    out.note(format!("T1 = {} ns, λ_osrp = {}, B_OH = {} mT", p.t1, p.lambda_osrp, p.b_oh_sigma));
    let xs: Vec<f64> = (1..=10).map(|n| n as f64).collect();
    for (name, pattern) in [("GHZ", [IntervalGate::Z; 10]), ("LC", [IntervalGate::Ry; 10])] {
        let f = chain_fidelities(&p, IntervalGate::Ry, &pattern, 100, 7).expect("chain");
        let monotone = f.windows(2).all(|w| w[1] < w[0]);
        let ys: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        let reg = linear_regression(&xs, &ys).expect("regression");
        out.check(monotone, format!("{name}: fidelity decreasing over 1..10 photons ({:.3} → {:.3})", f[0], f[9]));
        out.check(
            reg.r_squared >= 0.98,
            format!("{name}: log-fidelity R² = {:.5} (≥ 0.98), slope {:.4}", reg.r_squared, reg.slope),
        );
    }
    let mut soft = Outcome::new();
    let cat = chain_fidelities(&p, IntervalGate::Ry, &CATERPILLAR_10, 100, 7).expect("chain");
    soft.check((0.75..=0.85).contains(&cat[9]), format!("10-photon caterpillar F = {:.3} ([0.75, 0.85])", cat[9]));
    (out, soft)
}

fn tomography() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut exact = 0.0f64;
    for n in 1..=3 {
        let labels: Vec<String> = (0..n).map(|k| format!("q{k}")).collect();
        for _ in 0..5 {
            let rho =
                DensityMatrix::new(Register::qubits(labels.clone()).unwrap(), random_density(1 << n, &mut rng), true)
                    .unwrap();
            let t = simulate_counts(&rho, &MeasurementSetting::complete(n), Shots::Analytic, 0).unwrap();
            exact = exact.max(qdgraph::qcore::linalg::max_abs_diff(reconstruct(&t).unwrap().mat(), rho.mat()));
        }
    }
    out.check(exact <= 1e-8, format!("noiseless 1–3 qubit reconstruction: max |Δ| = {exact:.2e} (≤ 1e-8)"));
    let labels = ["q0", "q1"];
    let mut total = 0.0;
    for k in 0..50 {
        // alternate mixed and pure states
        let m: CMat = if k % 2 == 0 {
            random_density(4, &mut rng)
        } else {
            let v = random_ket(4, &mut rng);
            &v * v.adjoint()
        };
        let rho = DensityMatrix::new(Register::qubits(labels).unwrap(), m, true).unwrap();
        let t = simulate_counts(&rho, &MeasurementSetting::complete(2), Shots::Finite(1_000_000), 100 + k).unwrap();
        total += trace_distance(reconstruct(&t).unwrap().mat(), rho.mat());
    }
    let mean = total / 50.0;
    out.check(
        mean < 0.01,
        format!("50 random 2-qubit states, 10⁶ shots per setting: mean trace distance {mean:.2e} (< 0.01)"),
    );
    out
}

fn equivalences() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zp = GateSymbol::Zp(PhotonRef::Last);
    let identities: [(&str, Vec<GateSymbol>, Vec<GateSymbol>); 2] = [
        ("Z_p Z E_s = E_s", vec![GateSymbol::Es, GateSymbol::Z, zp], vec![GateSymbol::Es]),
        (
            "Z_p R_y(π/2) E_s = H E_s",
            vec![GateSymbol::Es, GateSymbol::Ry(FRAC_PI_2), zp],
            vec![GateSymbol::Es, GateSymbol::H],
        ),
    ];
    for (name, lhs, rhs) in identities {
        let mut worst = 0.0f64;
        for k in 0..50 {
            let init = random_graph_state(1 + k % 5, &mut rng).expect("graph");
            let (mut a, mut b) = (init.clone(), init);
            lhs.iter().for_each(|g| a.apply(g).expect("gate"));
            rhs.iter().for_each(|g| b.apply(g).expect("gate"));
            worst = worst.max((1.0 - ideal::overlap(a.amps(), b.amps())).abs());
        }
        out.check(worst <= 1e-10, format!("{name}: 50 random graph states, max |1 − |⟨a|b⟩|| = {worst:.1e} (≤ 1e-10)"));
    }
    for eq in ideal::protocol_equivalences() {
        let gates = ideal::parse_gates(eq.gates).expect("gates");
        let state = ideal::ideal_protocol_state_from(&gates, [c(1.0), c(0.0)], 2).expect("state");
        let mapped = apply_clifford_words(state.amps(), &eq.words).expect("words");
        let dev = (1.0 - ideal::overlap(&mapped, &eq.graph.state_amps().expect("graph"))).abs();
        out.check(
            dev <= 1e-10,
            format!("{} ≅ graph state via local Cliffords {:?}: deviation {dev:.1e}", eq.protocol, eq.words),
        );
    }
    out
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "fidelity table, 300 Overhauser samples", table_s2),
        ("2", "ideal-limit exactness", ideal_limit),
        ("3", "zero-photon-generator identities", zpg_identities),
        ("4", "visibility scan", visibility),
        ("5", "Larmor period and envelope", larmor),
        ("6", "fit round trip, 3 random starts", fit_round_trip),
        ("8", "tomography round trip", tomography),
        ("9", "local-Clifford equivalences", equivalences),
    ];
    let mut failed = Vec::new();
    let mut report = |id: &str, name: &str, o: &Outcome, soft: bool, secs: f64| {
        let verdict = match (o.pass, soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "SOFT-FAIL",
        };
        println!("[{id}] {verdict} {name} ({secs:.1} s)");
        for d in &o.details {
            println!("      {d}");
        }
        if !o.pass && !soft {
            failed.push(id.to_string());
        }
    };
    for (id, name, run) in criteria {
        let t = Instant::now();
        let o = run();
        report(id, name, &o, false, t.elapsed().as_secs_f64());
        if id == "6" {
            let t = Instant::now();
            let (hard, soft) = scaling();
            let secs = t.elapsed().as_secs_f64();
            report("7", "scaling with photon number", &hard, false, secs);
            report("7s", "caterpillar soft check", &soft, true, secs);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all hard criteria pass");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
