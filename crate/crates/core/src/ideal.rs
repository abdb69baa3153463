//! Exact pure-state model of the emitter protocol and graph-state
//! constructions.
//!
//! Kets are ordered [photons in emission order, spin]. Photonic |0⟩ = |R⟩
//! and |1⟩ = |L⟩; spin |0⟩ = |↑⟩, |1⟩ = |↓⟩.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::random_ket;
use crate::qcore::{c, CMat, CVec, Ket, Register, I};

/// Statevector size limit of the ideal backend.
pub const MAX_QUBITS: usize = 20;

pub const SPIN_LABEL: &str = "s";

pub fn photon_label(n: usize) -> String {
    format!("p{n}")
}

/// Photon addressed by emission index (1-based within the ket) or the most
/// recent one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhotonRef {
    Index(usize),
    Last,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureBasis {
    /// Spin ↑/↓, photon R/L.
    Z,
    /// (|0⟩ ± |1⟩)/√2.
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateSymbol {
    /// α|↑⟩ + β|↓⟩ ↦ α|R⟩|↑⟩ + β|L⟩|↓⟩.
    Es,
    Ry(f64),
    Rz(f64),
    Z,
    H,
    Zp(PhotonRef),
    MeasureSpin {
        basis: MeasureBasis,
        outcome: u8,
    },
    MeasurePhoton {
        photon: PhotonRef,
        basis: MeasureBasis,
        outcome: u8,
    },
}

fn fmt_angle(x: f64) -> String {
    let r = x / PI;
    let times_pi = |k: f64| match k as i64 {
        0 => "0".to_string(),
        1 => "pi".to_string(),
        -1 => "-pi".to_string(),
        k => format!("{k}pi"),
    };
    if (r - r.round()).abs() < 1e-12 {
        times_pi(r.round())
    } else if (2.0 * r - (2.0 * r).round()).abs() < 1e-12 {
        format!("{}/2", times_pi((2.0 * r).round()))
    } else {
        format!("{x}")
    }
}

impl fmt::Display for GateSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let photon = |p: &PhotonRef| match p {
            PhotonRef::Index(n) => n.to_string(),
            PhotonRef::Last => "last".into(),
        };
        let basis = |b: &MeasureBasis| match b {
            MeasureBasis::Z => "z",
            MeasureBasis::X => "x",
        };
        match self {
            GateSymbol::Es => write!(f, "Es"),
            GateSymbol::Ry(t) => write!(f, "Ry({})", fmt_angle(*t)),
            GateSymbol::Rz(t) => write!(f, "Rz({})", fmt_angle(*t)),
            GateSymbol::Z => write!(f, "Z"),
            GateSymbol::H => write!(f, "H"),
            GateSymbol::Zp(p) => write!(f, "Zp({})", photon(p)),
            GateSymbol::MeasureSpin { basis: b, outcome } => write!(f, "Ms({},{outcome})", basis(b)),
            GateSymbol::MeasurePhoton { photon: p, basis: b, outcome } => {
                write!(f, "Mp({},{},{outcome})", photon(p), basis(b))
            }
        }
    }
}

fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim().replace(' ', "");
    let bad = || Error::Parse(format!("bad angle `{s}`"));
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().map_err(|_| bad())?),
        None => (s.clone(), 1.0),
    };
    let value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.trim_end_matches('*');
        let k = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        k * PI
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    Ok(value / den)
}

fn parse_photon(s: &str) -> Result<PhotonRef> {
    match s.trim() {
        "last" | "new" => Ok(PhotonRef::Last),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .map(PhotonRef::Index)
            .ok_or_else(|| Error::Parse(format!("bad photon index `{n}`"))),
    }
}

fn parse_basis(s: &str) -> Result<MeasureBasis> {
    match s.trim() {
        "z" | "Z" | "RL" => Ok(MeasureBasis::Z),
        "x" | "X" | "+-" => Ok(MeasureBasis::X),
        b => Err(Error::Parse(format!("bad measurement basis `{b}`"))),
    }
}

fn parse_outcome(s: &str) -> Result<u8> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        o => Err(Error::Parse(format!("bad outcome `{o}`"))),
    }
}

impl std::str::FromStr for GateSymbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<GateSymbol> {
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], Some(&s[i + 1..s.len() - 1])),
            Some(_) => return Err(Error::Parse(format!("unbalanced parentheses in `{s}`"))),
            None => (s, None),
        };
        let args: Vec<&str> = arg.map(|a| a.split(',').collect()).unwrap_or_default();
        let want = |n: usize| -> Result<()> {
            if args.len() != n {
                return Err(Error::Parse(format!("`{name}` takes {n} argument(s)")));
            }
            Ok(())
        };
        match name {
            "Es" | "E" => {
                want(0)?;
                Ok(GateSymbol::Es)
            }
            "Ry" => {
                want(1)?;
                Ok(GateSymbol::Ry(parse_angle(args[0])?))
            }
            "Rz" => {
                want(1)?;
                Ok(GateSymbol::Rz(parse_angle(args[0])?))
            }
            "Z" => {
                want(0)?;
                Ok(GateSymbol::Z)
            }
            "H" => {
                want(0)?;
                Ok(GateSymbol::H)
            }
            "Zp" => {
                want(1)?;
                Ok(GateSymbol::Zp(parse_photon(args[0])?))
            }
            "Ms" => {
                want(2)?;
                Ok(GateSymbol::MeasureSpin { basis: parse_basis(args[0])?, outcome: parse_outcome(args[1])? })
            }
            "Mp" => {
                want(3)?;
                Ok(GateSymbol::MeasurePhoton {
                    photon: parse_photon(args[0])?,
                    basis: parse_basis(args[1])?,
                    outcome: parse_outcome(args[2])?,
                })
            }
            other => Err(Error::Parse(format!("unknown gate `{other}`"))),
        }
    }
}

/// Parses a comma- or whitespace-separated gate list, e.g.
/// `Ry(pi/2) Es Z Es`.
pub fn parse_gates(text: &str) -> Result<Vec<GateSymbol>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                cur.push(ch);
            }
            ',' | ' ' | '\n' | '\t' | ';' if depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push(cur.trim().parse()?);
                }
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().parse()?);
    }
    Ok(out)
}

pub fn format_gates(gates: &[GateSymbol]) -> String {
    gates.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ")
}

/// R_y(θ) = exp(−iθσ_y/2).
pub fn ry(theta: f64) -> CMat {
    let (s, co) = (theta / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
}

/// R_z(φ) = exp(−iφσ_z/2).
pub fn rz(phi: f64) -> CMat {
    let z = C64::from_polar(1.0, -phi / 2.0);
    CMat::from_row_slice(2, 2, &[z, c(0.0), c(0.0), z.conj()])
}

pub fn z_gate() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn hadamard() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(-1.0)]) * c(FRAC_1_SQRT_2)
}

pub fn s_gate() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), I])
}

/// U(θ, φ) = R_y(θ/2) R_z(φ) R_y(θ/2).
pub fn u_gate(theta: f64, phi: f64) -> CMat {
    ry(theta / 2.0) * rz(phi) * ry(theta / 2.0)
}

/// E_s as a 4×2 isometry from spin to (photon ⊗ spin).
pub fn emission_isometry() -> CMat {
    let mut v = CMat::zeros(4, 2);
    v[(0, 0)] = c(1.0);
    v[(3, 1)] = c(1.0);
    v
}

/// Pure state over `[photons..., spin]` built gate by gate.
#[derive(Clone, Debug)]
pub struct IdealState {
    amps: CVec,
    first_photon: usize,
    photons: usize,
}

fn apply_1q(amps: &mut CVec, u: &CMat, n_qubits: usize, q: usize) {
    let after = 1usize << (n_qubits - 1 - q);
    let before = 1usize << q;
    for a in 0..before {
        for b in 0..after {
            let i0 = (a * 2) * after + b;
            let i1 = (a * 2 + 1) * after + b;
            let (x0, x1) = (amps[i0], amps[i1]);
            amps[i0] = u[(0, 0)] * x0 + u[(0, 1)] * x1;
            amps[i1] = u[(1, 0)] * x0 + u[(1, 1)] * x1;
        }
    }
}

impl IdealState {
    /// Spin-only state; photons emitted later are labeled from
    /// `first_photon` upward.
    pub fn new(spin: [C64; 2], first_photon: usize) -> Result<Self> {
        let norm = (spin[0].norm_sqr() + spin[1].norm_sqr()).sqrt();
        if !(norm > 1e-12) {
            return Err(Error::InvalidState("zero spin ket".into()));
        }
        Ok(IdealState { amps: CVec::from_vec(vec![spin[0] / norm, spin[1] / norm]), first_photon, photons: 0 })
    }

    /// Takes an arbitrary state whose last qubit is the spin.
    pub fn from_amps(amps: CVec, photons: usize, first_photon: usize) -> Result<Self> {
        if amps.len() != 1usize << (photons + 1) {
            return Err(Error::DimensionMismatch { expected: 1 << (photons + 1), found: amps.len() });
        }
        Ok(IdealState { amps, first_photon, photons })
    }

    pub fn up(first_photon: usize) -> Self {
        IdealState::new([c(1.0), c(0.0)], first_photon).expect("nonzero")
    }

    pub fn down(first_photon: usize) -> Self {
        IdealState::new([c(0.0), c(1.0)], first_photon).expect("nonzero")
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn amps(&self) -> &CVec {
        &self.amps
    }

    fn n_qubits(&self) -> usize {
        self.photons + 1
    }

    fn photon_position(&self, p: PhotonRef) -> Result<usize> {
        match p {
            PhotonRef::Last if self.photons > 0 => Ok(self.photons - 1),
            PhotonRef::Index(n) if n >= self.first_photon && n - self.first_photon < self.photons => {
                Ok(n - self.first_photon)
            }
            _ => Err(Error::InvalidGates(format!("photon {p:?} has not been emitted"))),
        }
    }

    pub fn apply_spin(&mut self, u: &CMat) {
        let n = self.n_qubits();
        apply_1q(&mut self.amps, u, n, n - 1);
    }

    pub fn apply_photon(&mut self, u: &CMat, p: PhotonRef) -> Result<()> {
        let q = self.photon_position(p)?;
        let n = self.n_qubits();
        apply_1q(&mut self.amps, u, n, q);
        Ok(())
    }

    pub fn emit(&mut self) -> Result<()> {
        if self.n_qubits() + 1 > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: self.photons + 1, cap: MAX_QUBITS - 1 });
        }
        let old = self.amps.len();
        let mut out = CVec::zeros(2 * old);
        for u in 0..old / 2 {
            for s in 0..2 {
                // new index: (u, p = s, s)
                out[(u * 2 + s) * 2 + s] = self.amps[u * 2 + s];
            }
        }
        self.amps = out;
        self.photons += 1;
        Ok(())
    }

    fn project(&mut self, q: usize, basis: MeasureBasis, outcome: u8) -> Result<()> {
        let n = self.n_qubits();
        if basis == MeasureBasis::X {
            apply_1q(&mut self.amps, &hadamard(), n, q);
        }
        let after = 1usize << (n - 1 - q);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i / after) % 2) as u8 != outcome {
                *a = c(0.0);
            }
        }
        if basis == MeasureBasis::X {
            apply_1q(&mut self.amps, &hadamard(), n, q);
        }
        let norm = self.amps.norm();
        if !(norm > 1e-12) {
            return Err(Error::InvalidGates("measurement outcome has zero probability".into()));
        }
        self.amps /= c(norm);
        Ok(())
    }

    pub fn apply(&mut self, g: &GateSymbol) -> Result<()> {
        match *g {
            GateSymbol::Es => self.emit()?,
            GateSymbol::Ry(t) => self.apply_spin(&ry(t)),
            GateSymbol::Rz(t) => self.apply_spin(&rz(t)),
            GateSymbol::Z => self.apply_spin(&z_gate()),
            GateSymbol::H => self.apply_spin(&hadamard()),
            GateSymbol::Zp(p) => self.apply_photon(&z_gate(), p)?,
            GateSymbol::MeasureSpin { basis, outcome } => {
                let q = self.n_qubits() - 1;
                self.project(q, basis, outcome)?
            }
            GateSymbol::MeasurePhoton { photon, basis, outcome } => {
                let q = self.photon_position(photon)?;
                self.project(q, basis, outcome)?
            }
        }
        Ok(())
    }

    pub fn register(&self) -> Register {
        let mut labels: Vec<String> = (0..self.photons).map(|k| photon_label(self.first_photon + k)).collect();
        labels.push(SPIN_LABEL.to_string());
        Register::qubits(labels).expect("distinct labels")
    }

    pub fn to_ket(&self) -> Ket {
        Ket::new(self.register(), self.amps.clone()).expect("consistent dimensions")
    }
}

/// Runs `gates` from the spin ket `init`, labeling photons p1, p2, ….
pub fn ideal_protocol_state(gates: &[GateSymbol], init: [C64; 2]) -> Result<Ket> {
    ideal_protocol_state_from(gates, init, 1)
}

pub fn ideal_protocol_state_from(gates: &[GateSymbol], init: [C64; 2], first_photon: usize) -> Result<Ket> {
    let mut st = IdealState::new(init, first_photon)?;
    for g in gates {
        st.apply(g)?;
    }
    Ok(st.to_ket())
}

/// |⟨a|b⟩| for normalized vectors.
pub fn overlap(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).norm()
}

/// Simple undirected graph on `n` vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
        }
        Ok(Graph { n, edges })
    }

    pub fn path(n: usize) -> Self {
        Graph { n, edges: (1..n).map(|k| (k - 1, k)).collect() }
    }

    pub fn star(n: usize, center: usize) -> Self {
        Graph { n, edges: (0..n).filter(|&k| k != center).map(|k| (center, k)).collect() }
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &self.edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// |+⟩^⊗n followed by CZ on every edge; vertex 0 is the most
    /// significant qubit.
    pub fn state_amps(&self) -> Result<CVec> {
        if self.n > MAX_QUBITS {
            return Err(Error::RegisterTooLarge { requested: self.n, cap: MAX_QUBITS });
        }
        let dim = 1usize << self.n;
        let amp = (dim as f64).sqrt().recip();
        Ok(CVec::from_fn(dim, |i, _| {
            let bit = |v: usize| (i >> (self.n - 1 - v)) & 1;
            let parity = self.edges.iter().filter(|&&(a, b)| bit(a) & bit(b) == 1).count();
            c(if parity % 2 == 0 { amp } else { -amp })
        }))
    }

    pub fn state(&self) -> Result<Ket> {
        if !self.is_connected() {
            return Err(Error::InvalidGraph("graph is disconnected".into()));
        }
        let labels: Vec<String> = (1..=self.n).map(|k| format!("q{k}")).collect();
        Ket::new(Register::qubits(labels)?, self.state_amps()?)
    }

    /// Relabels vertex v as perm[v].
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        Graph { n: self.n, edges: self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect() }
    }
}

/// Path of spine nodes, each carrying a number of leaf qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaterpillarGraph {
    pub spine: Vec<usize>,
    pub pendants: Vec<usize>,
}

impl CaterpillarGraph {
    pub fn new(spine_len: usize, pendants: Vec<usize>) -> Result<Self> {
        if spine_len == 0 {
            return Err(Error::InvalidGraph("empty spine".into()));
        }
        if pendants.len() != spine_len {
            return Err(Error::InvalidGraph(format!("{} pendant counts for {spine_len} spine nodes", pendants.len())));
        }
        Ok(CaterpillarGraph { spine: (0..spine_len).collect(), pendants })
    }

    pub fn path(n: usize) -> Self {
        CaterpillarGraph { spine: (0..n).collect(), pendants: vec![0; n] }
    }

    /// Vertex order: each spine node followed by its leaves.
    pub fn to_graph(&self) -> Result<Graph> {
        if self.spine.is_empty() || self.pendants.len() != self.spine.len() {
            return Err(Error::InvalidGraph("malformed caterpillar".into()));
        }
        let mut edges = Vec::new();
        let mut next = 0usize;
        let mut prev_spine: Option<usize> = None;
        for &k in &self.pendants {
            let node = next;
            next += 1;
            if let Some(p) = prev_spine {
                edges.push((p, node));
            }
            for _ in 0..k {
                edges.push((node, next));
                next += 1;
            }
            prev_spine = Some(node);
        }
        Graph::new(next, edges)
    }
}

pub fn caterpillar_state(g: &CaterpillarGraph) -> Result<Ket> {
    g.to_graph()?.state()
}

/// Random graph state on `photons` photons plus the spin, returned as an
/// ideal state whose last qubit is the spin.
pub fn random_graph_state<R: Rng + ?Sized>(photons: usize, rng: &mut R) -> Result<IdealState> {
    let n = photons + 1;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    let g = Graph::new(n, edges)?;
    IdealState::from_amps(g.state_amps()?, photons, 1)
}

/// Checks that `lhs` followed by `corrections` and `rhs` produce the same
/// ket up to global phase on `trials` random graph states.
pub fn verify_equivalence<R: Rng + ?Sized>(
    lhs: &[GateSymbol],
    corrections: &[GateSymbol],
    rhs: &[GateSymbol],
    trials: usize,
    rng: &mut R,
) -> Result<bool> {
    let emitted = |gs: &[GateSymbol]| gs.iter().filter(|g| **g == GateSymbol::Es).count();
    if emitted(lhs) + emitted(corrections) != emitted(rhs) {
        return Err(Error::InvalidGates("sequences emit different numbers of photons".into()));
    }
    for _ in 0..trials {
        let photons = rng.random_range(0..4);
        let init = random_graph_state(photons, rng)?;
        let mut a = init.clone();
        for g in lhs.iter().chain(corrections) {
            a.apply(g)?;
        }
        let mut b = init;
        for g in rhs {
            b.apply(g)?;
        }
        if (overlap(a.amps(), b.amps()) - 1.0).abs() > 1e-10 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The 24 single-qubit Cliffords modulo phase, as words in H and S found by
/// breadth-first search (identity first).
pub fn clifford_group() -> Vec<(String, CMat)> {
    fn key(m: &CMat) -> Vec<(i64, i64)> {
        // fix the global phase on the first entry of largest modulus
        let pivot = m.iter().find(|z| z.norm() > 0.5).copied().unwrap();
        let ph = pivot / pivot.norm();
        m.iter()
            .map(|z| {
                let w = z / ph;
                ((w.re * 1e6).round() as i64, (w.im * 1e6).round() as i64)
            })
            .collect()
    }
    let gens = [("H", hadamard()), ("S", s_gate())];
    let mut seen: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
    let mut out = vec![(String::new(), CMat::identity(2, 2))];
    seen.insert(key(&out[0].1), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for (name, g) in &gens {
            let m = g * &out[i].1;
            let k = key(&m);
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(k) {
                e.insert(out.len());
                let word = format!("{name}{}", out[i].0);
                out.push((word, m));
                queue.push_back(out.len() - 1);
            }
        }
    }
    out
}

/// Matrix of a Clifford word; letters act right to left, so "HS" is H·S.
pub fn clifford_from_word(word: &str) -> Result<CMat> {
    let mut m = CMat::identity(2, 2);
    for ch in word.chars() {
        let g = match ch {
            'H' => hadamard(),
            'S' => s_gate(),
            other => return Err(Error::Parse(format!("unknown Clifford letter `{other}`"))),
        };
        m *= g;
    }
    Ok(m)
}

fn apply_product(amps: &CVec, ops: &[&CMat]) -> CVec {
    let n = ops.len();
    let mut out = amps.clone();
    for (q, u) in ops.iter().enumerate() {
        apply_1q(&mut out, u, n, q);
    }
    out
}

/// Searches for single-qubit Cliffords C_1 ⊗ … ⊗ C_n with
/// |⟨target| C |state⟩| = 1, returning their H/S words. Exhaustive over
/// 24^n, so intended for n ≤ 5.
pub fn find_local_clifford(state: &CVec, target: &CVec) -> Option<Vec<String>> {
    let n = state.len().trailing_zeros() as usize;
    if state.len() != target.len() || n > 5 {
        return None;
    }
    let group = clifford_group();
    let total = group.len().pow(n as u32);
    for code in 0..total {
        let mut idx = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            idx.push(rest % group.len());
            rest /= group.len();
        }
        let ops: Vec<&CMat> = idx.iter().map(|&i| &group[i].1).collect();
        if (overlap(target, &apply_product(state, &ops)) - 1.0).abs() < 1e-9 {
            return Some(idx.iter().map(|&i| group[i].0.clone()).collect());
        }
    }
    None
}

/// Applies per-qubit Clifford words to a state.
pub fn apply_clifford_words(state: &CVec, words: &[&str]) -> Result<CVec> {
    let mats = words.iter().map(|w| clifford_from_word(w)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&CMat> = mats.iter().collect();
    if 1usize << refs.len() != state.len() {
        return Err(Error::DimensionMismatch { expected: state.len(), found: 1 << refs.len() });
    }
    Ok(apply_product(state, &refs))
}

/// Local-Clifford correspondence between a heralded four-qubit protocol
/// state (photons 2–4 and spin, heralded in |↑⟩) and a canonical graph
/// state. Applying `words[q]` to qubit q of the protocol state gives the
/// graph state up to global phase.
#[derive(Clone, Debug)]
pub struct GraphEquivalence {
    pub protocol: &'static str,
    pub gates: &'static str,
    pub graph: Graph,
    pub words: [&'static str; 4],
}

/// Correction strings found by exhaustive search over the 24⁴ local
/// Cliffords with [`find_local_clifford`].
pub fn protocol_equivalences() -> Vec<GraphEquivalence> {
    vec![
        GraphEquivalence {
            protocol: "lc4",
            gates: "Ry(pi/2) Es Ry(pi/2) Es Ry(pi/2) Es",
            graph: Graph::path(4),
            words: ["SSHSSH", "", "", "H"],
        },
        GraphEquivalence {
            protocol: "ghz4",
            gates: "Ry(pi/2) Es Z Es Z Es",
            graph: Graph::star(4, 0),
            words: ["", "H", "H", "H"],
        },
        GraphEquivalence {
            protocol: "rlc1",
            gates: "Ry(pi/2) Es Z Es Ry(pi/2) Es",
            graph: Graph::path(4),
            words: ["H", "", "", "H"],
        },
        GraphEquivalence {
            protocol: "rlc2",
            gates: "Ry(pi/2) Es Ry(pi/2) Es Z Es",
            graph: Graph::star(4, 0),
            words: ["SSHSS", "H", "H", "H"],
        },
    ]
}

/// Spin gate realized by one inter-pulse interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IntervalGate {
    /// Quarter precession, R_y(π/2).
    Ry,
    /// Quarter precession split by a π phase pulse, equal to Z.
    Z,
}

impl IntervalGate {
    pub fn matrix(&self) -> CMat {
        match self {
            IntervalGate::Ry => ry(FRAC_PI_2),
            IntervalGate::Z => z_gate(),
        }
    }

    pub fn symbol(&self) -> GateSymbol {
        match self {
            IntervalGate::Ry => GateSymbol::Ry(FRAC_PI_2),
            IntervalGate::Z => GateSymbol::Z,
        }
    }
}

/// Gate list of a heralded protocol: the initialization gate, then for each
/// emitted photon E_s followed by its interval gate. The trailing gate after
/// the last emission is omitted.
pub fn protocol_gates(init: IntervalGate, intervals: &[IntervalGate]) -> Vec<GateSymbol> {
    let mut gates = vec![init.symbol()];
    for (k, g) in intervals.iter().enumerate() {
        gates.push(GateSymbol::Es);
        if k + 1 < intervals.len() {
            gates.push(g.symbol());
        }
    }
    gates
}

/// Ideal gate for an interval of precession θ and phase pulse φ, if it is one
/// of the supported Clifford settings θ ∈ {0, π/2, π}, φ ∈ {0, π}.
pub fn interval_unitary(theta: f64, phi: f64) -> Result<Vec<GateSymbol>> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let theta_ok = [0.0, FRAC_PI_2, PI].iter().any(|&t| close(theta, t));
    let phi_ok = [0.0, PI].iter().any(|&p| close(phi, p));
    if !theta_ok || !phi_ok {
        return Err(Error::InvalidGates(format!(
            "interval (θ={theta:.4}, φ={phi:.4}) is not a supported Clifford setting"
        )));
    }
    let mut gates = Vec::new();
    if close(phi, PI) {
        // R_y(θ/2) Z R_y(θ/2) = Z
        gates.push(GateSymbol::Z);
    } else if !close(theta, 0.0) {
        gates.push(GateSymbol::Ry(theta));
    }
    Ok(gates)
}

/// Random normalized spin ket.
pub fn random_spin<R: Rng + ?Sized>(rng: &mut R) -> [C64; 2] {
    let v = random_ket(2, rng);
    [v[0], v[1]]
}
