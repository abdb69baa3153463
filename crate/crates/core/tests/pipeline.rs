use approx::assert_abs_diff_eq;

use qdgraph::fit::{synthetic_targets, FitConfig, FitConfigDoc, FitTargetDoc, FreeParamDoc, ProgramRef, SubsetMode};
use qdgraph::metrics::{self, fidelity, ideal_target, Protocol};
use qdgraph::protocol::{
    average_joint, herald_and_readout, overhauser_samples, run_sequence, Circular, CompiledSequence, OsrpPlacement,
    PulseProgram,
};
use qdgraph::qcore::linalg::{eigh, max_abs_diff};
use qdgraph::tomography::{simulate_counts, CountTable, MeasurementSetting, Shots};
use qdgraph::trion::{OverhauserSample, TrionParams};

#[test]
fn joint_states_are_physical() {
    let p = TrionParams::measured();
    let samples = overhauser_samples(p.b_oh_sigma, 3, 1).unwrap();
    for proto in Protocol::all() {
        let prog = proto.program(&p);
        for s in &samples {
            let js = run_sequence(&p, &prog, s).unwrap();
            let m = js.state.mat();
            assert_abs_diff_eq!(js.state.trace(), 1.0, epsilon = 1e-10);
            assert!(max_abs_diff(m, &m.adjoint()) < 1e-10);
            let (vals, _) = eigh(m);
            assert!(vals[0] > -1e-9, "{} min eigenvalue {}", proto.name(), vals[0]);
            assert!(js.probability > 0.0 && js.probability <= 1.0);
        }
    }
}

#[test]
fn placements_agree_without_phase_pulses() {
    let p = TrionParams::measured();
    let prog = PulseProgram::lc4(&p);
    let s = OverhauserSample::new([1.0, -2.0, 3.0]).unwrap();
    let a = CompiledSequence::with_placement(&p, &prog, &s, OsrpPlacement::OnSpin).unwrap().run(Circular::R).unwrap();
    let b =
        CompiledSequence::with_placement(&p, &prog, &s, OsrpPlacement::InEmission).unwrap().run(Circular::R).unwrap();
    assert!(max_abs_diff(a.state.mat(), b.state.mat()) < 1e-10);
}

#[test]
fn averaging_identical_runs_is_idempotent() {
    let p = TrionParams::measured();
    let js = run_sequence(&p, &PulseProgram::ghz4(&p), &OverhauserSample::zero()).unwrap();
    let avg = average_joint(&[js.clone(), js.clone(), js.clone()]).unwrap();
    assert!(max_abs_diff(avg.state.mat(), js.state.mat()) < 1e-12);
}

#[test]
fn readout_branches_carry_the_full_probability() {
    let p = TrionParams::measured();
    let js = run_sequence(&p, &PulseProgram::rlc1(&p), &OverhauserSample::zero()).unwrap();
    let (_, pr) = herald_and_readout(&js, Circular::R).unwrap();
    let (_, pl) = herald_and_readout(&js, Circular::L).unwrap();
    assert_abs_diff_eq!(pr + pl, 1.0, epsilon = 1e-10);
}

#[test]
fn ideal_simulation_matches_ideal_target_for_both_heralds() {
    let p = TrionParams::ideal();
    for proto in Protocol::all() {
        for h in Circular::both() {
            let prog = proto.program(&p).with_herald(h);
            let js = run_sequence(&p, &prog, &OverhauserSample::zero()).unwrap();
            let f = fidelity(&js.state, &ideal_target(&p, &prog, h, 0.0).unwrap()).unwrap();
            assert!(f > 0.999, "{} {}: {f}", proto.name(), h.name());
        }
    }
}

#[test]
fn program_documents_round_trip_for_every_preset() {
    let p = TrionParams::measured();
    for name in ["lc4", "ghz4", "rlc1", "rlc2"] {
        let prog = PulseProgram::preset(name, &p).unwrap();
        let back = PulseProgram::from_toml(&prog.to_toml()).unwrap();
        assert_eq!(back.excitations(), prog.excitations());
        assert_eq!(back.intervals(&p).len(), prog.intervals(&p).len());
    }
    assert!(PulseProgram::preset("nope", &p).is_err());
}

#[test]
fn parameter_documents_round_trip() {
    for p in [TrionParams::measured(), TrionParams::ideal(), TrionParams::near_term()] {
        let back = TrionParams::from_toml(&p.to_toml()).unwrap();
        assert_abs_diff_eq!(back.g_e, p.g_e, epsilon = 1e-12);
        assert_abs_diff_eq!(back.theta_osrp, p.theta_osrp, epsilon = 1e-12);
        assert_abs_diff_eq!(back.t1, p.t1, epsilon = 1e-12);
    }
    assert!(TrionParams::from_toml("t1_ps = 200").is_err());
}

#[test]
fn fit_config_reads_from_toml() {
    let base = TrionParams::measured();
    let targets = synthetic_targets(&base, 2, 1).unwrap();
    let t = &targets[1];
    let doc = FitConfigDoc {
        base: base.clone(),
        free: vec![FreeParamDoc { name: "g_e".into(), lower: Some(0.5), upper: None }],
        targets: vec![FitTargetDoc {
            name: t.name.clone(),
            program: ProgramRef::Preset("lc4".into()),
            herald: t.herald.name().into(),
            readout: t.readout.name().into(),
            target: t.target.to_doc(),
        }],
        n_samples: 3,
        restarts: 2,
        seed: 9,
        max_iters: 50,
        subsets: SubsetMode::None,
        start_at_base: true,
    };
    let text = toml::to_string(&doc).unwrap();
    let cfg = FitConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.free.len(), 1);
    assert_abs_diff_eq!(cfg.free[0].lower, 0.5);
    assert!(cfg.free[0].upper > base.g_e);
    assert_eq!((cfg.n_samples, cfg.restarts, cfg.seed), (3, 2, 9));
    assert!(max_abs_diff(cfg.targets[0].target.mat(), t.target.mat()) < 1e-12);
    assert!(FitConfig::from_toml(&text.replace("g_e", "g_x")).is_err());
}

#[test]
fn fidelity_table_is_deterministic_for_a_seed() {
    let p = TrionParams::measured();
    let a = metrics::table_csv(&metrics::fidelity_table(&p, 2, 0, 5).unwrap());
    let b = metrics::table_csv(&metrics::fidelity_table(&p, 2, 0, 5).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with("protocol,herald,readout,F2,C,F4,sigma\n"));
    assert_eq!(a.lines().count(), 11);
}

#[test]
fn count_tables_round_trip_through_csv() {
    let p = TrionParams::measured();
    let js = run_sequence(&p, &PulseProgram::lc4(&p), &OverhauserSample::zero()).unwrap();
    let (rho, _) = herald_and_readout(&js, Circular::L).unwrap();
    let t = simulate_counts(&rho, &MeasurementSetting::complete(2), Shots::Finite(5000), 3).unwrap();
    let back = CountTable::from_csv(&t.to_csv().unwrap()).unwrap();
    assert_eq!(back.counts, t.counts);
    assert_eq!(back.shots, Shots::Finite(5000));
}
