//! Synthetic polarization tomography: Born-rule coincidence counts with
//! optional multinomial shot noise, and linear-inversion reconstruction
//! projected onto physical states.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::linalg::{eigh, CVec};
use crate::qcore::{c, CMat, DensityMatrix, Register};
use crate::zpg::PolarizationAxis;

/// Analysis basis of one photon. The first outcome is R, H or D.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    RL,
    HV,
    DA,
}

impl Basis {
    pub fn all() -> [Basis; 3] {
        [Basis::RL, Basis::HV, Basis::DA]
    }

    pub fn outcome_letters(self) -> [char; 2] {
        match self {
            Basis::RL => ['R', 'L'],
            Basis::HV => ['H', 'V'],
            Basis::DA => ['D', 'A'],
        }
    }

    fn axes(self) -> [PolarizationAxis; 2] {
        match self {
            Basis::RL => [PolarizationAxis::r(), PolarizationAxis::l()],
            Basis::HV => [PolarizationAxis::h(), PolarizationAxis::v()],
            Basis::DA => [PolarizationAxis::d(), PolarizationAxis::a()],
        }
    }

    /// Projectors of the two outcomes in the photon qubit basis.
    pub fn projectors(self) -> [CMat; 2] {
        self.axes().map(|a| {
            let k = a.photon_ket();
            let v = CVec::from_column_slice(&k);
            &v * v.adjoint()
        })
    }

    /// P₀ − P₁, a Pauli operator up to sign.
    pub fn observable(self) -> CMat {
        let [p0, p1] = self.projectors();
        p0 - p1
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "RL" => Ok(Basis::RL),
            "HV" => Ok(Basis::HV),
            "DA" => Ok(Basis::DA),
            other => Err(Error::Parse(format!("unknown analysis basis `{other}`"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Basis::RL => "RL",
            Basis::HV => "HV",
            Basis::DA => "DA",
        }
    }
}

/// One analysis basis per photon, written "RL,HV".
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeasurementSetting(pub Vec<Basis>);

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|b| b.name()).collect();
        write!(f, "{}", names.join(","))
    }
}

impl FromStr for MeasurementSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',').map(|t| Basis::parse(t.trim())).collect::<Result<Vec<_>>>().map(MeasurementSetting)
    }
}

impl MeasurementSetting {
    /// All 3ⁿ settings on `n` photons.
    pub fn complete(n: usize) -> Vec<MeasurementSetting> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<Basis>| {
                    Basis::all().into_iter().map(move |b| {
                        let mut v = prefix.clone();
                        v.push(b);
                        v
                    })
                })
                .collect();
        }
        out.into_iter().map(MeasurementSetting).collect()
    }

    /// Outcome string such as "RH" for outcome indices `bits`.
    pub fn outcome_label(&self, bits: &[usize]) -> String {
        self.0.iter().zip(bits).map(|(b, &k)| b.outcome_letters()[k]).collect()
    }

    fn parse_outcome(&self, label: &str) -> Result<Vec<usize>> {
        let chars: Vec<char> = label.chars().collect();
        if chars.len() != self.0.len() {
            return Err(Error::Parse(format!("outcome `{label}` does not match setting {self}")));
        }
        self.0
            .iter()
            .zip(chars)
            .map(|(b, ch)| {
                b.outcome_letters()
                    .iter()
                    .position(|&l| l == ch)
                    .ok_or_else(|| Error::Parse(format!("outcome `{ch}` is not in basis {}", b.name())))
            })
            .collect()
    }
}

/// Shot budget per setting. `Analytic` stores Born probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    Analytic,
    Finite(u64),
}

/// Counts keyed by setting, indexed by outcome with the first photon as
/// the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    pub n_photons: usize,
    pub counts: BTreeMap<MeasurementSetting, Vec<f64>>,
    pub shots: Shots,
    pub seed: u64,
}

impl CountTable {
    pub fn setting_total(&self, s: &MeasurementSetting) -> Option<f64> {
        self.counts.get(s).map(|v| v.iter().sum())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["setting", "outcome", "count"]).map_err(csv_err)?;
        for (s, v) in &self.counts {
            for (k, n) in v.iter().enumerate() {
                let bits = index_bits(k, self.n_photons);
                w.write_record([s.to_string(), s.outcome_label(&bits), format!("{n}")]).map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut counts: BTreeMap<MeasurementSetting, Vec<f64>> = BTreeMap::new();
        let mut n_photons = None;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns, found {}", rec.len())));
            }
            let setting: MeasurementSetting = rec[0].parse()?;
            let n = setting.0.len();
            if *n_photons.get_or_insert(n) != n {
                return Err(Error::Parse("settings disagree on the number of photons".into()));
            }
            let bits = setting.parse_outcome(rec[1].trim())?;
            let count: f64 = rec[2].trim().parse().map_err(|_| Error::Parse(format!("bad count `{}`", &rec[2])))?;
            if !(count >= 0.0) {
                return Err(Error::Parse(format!("negative count {count}")));
            }
            let idx = bits.iter().fold(0, |acc, &b| acc * 2 + b);
            counts.entry(setting).or_insert_with(|| vec![0.0; 1 << n])[idx] += count;
        }
        let n_photons = n_photons.ok_or_else(|| Error::Parse("count table is empty".into()))?;
        let integral = counts.values().flatten().all(|x| x.fract() == 0.0);
        let shots = match counts.values().next().map(|v| v.iter().sum::<f64>()) {
            Some(total) if integral => Shots::Finite(total as u64),
            _ => Shots::Analytic,
        };
        Ok(CountTable { n_photons, counts, shots, seed: 0 })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn index_bits(k: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| (k >> (n - 1 - j)) & 1).collect()
}

fn kron_all(ops: impl IntoIterator<Item = CMat>) -> CMat {
    ops.into_iter().fold(CMat::identity(1, 1), |acc, m| acc.kronecker(&m))
}

/// Born probabilities of every outcome of `setting`.
pub fn born_probabilities(rho: &DensityMatrix, setting: &MeasurementSetting) -> Result<Vec<f64>> {
    let n = setting.0.len();
    if rho.dim() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: rho.dim() });
    }
    let projs: Vec<[CMat; 2]> = setting.0.iter().map(|b| b.projectors()).collect();
    Ok((0..1usize << n)
        .map(|k| {
            let bits = index_bits(k, n);
            let p = kron_all(bits.iter().zip(&projs).map(|(&b, pr)| pr[b].clone()));
            rho.expectation(&p).re.max(0.0)
        })
        .collect())
}

/// Simulated counts for each setting. Each setting draws from its own
/// ChaCha8 stream, so results do not depend on setting order.
pub fn simulate_counts(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    shots: Shots,
    seed: u64,
) -> Result<CountTable> {
    let n = settings.first().map(|s| s.0.len()).ok_or_else(|| Error::IncompleteSettings("no settings given".into()))?;
    if settings.iter().any(|s| s.0.len() != n) {
        return Err(Error::param("settings", "all settings must cover the same photons"));
    }
    let mut counts = BTreeMap::new();
    for s in settings {
        let probs = born_probabilities(rho, s)?;
        let row = match shots {
            Shots::Analytic => {
                let z: f64 = probs.iter().sum();
                probs.iter().map(|p| p / z).collect()
            }
            Shots::Finite(total) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(setting_stream(s));
                multinomial(total, &probs, &mut rng)?
            }
        };
        counts.insert(s.clone(), row);
    }
    Ok(CountTable { n_photons: n, counts, shots, seed })
}

fn setting_stream(s: &MeasurementSetting) -> u64 {
    s.0.iter().fold(1u64, |acc, b| acc * 3 + *b as u64)
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial<R: rand::Rng + ?Sized>(total: u64, probs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let z: f64 = probs.iter().sum();
    let mut left = total;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (k, p) in probs.iter().enumerate() {
        let p = p / z;
        let draw = if k + 1 == probs.len() || left == 0 {
            left
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng)
        };
        out.push(draw as f64);
        left -= draw;
        mass -= p;
    }
    Ok(out)
}

/// Linear inversion followed by projection onto unit-trace PSD matrices.
pub fn reconstruct(table: &CountTable) -> Result<DensityMatrix> {
    let raw = linear_inversion(table)?;
    let mat = project_physical(&raw);
    let labels: Vec<String> = (0..table.n_photons).map(|k| format!("q{k}")).collect();
    DensityMatrix::new(Register::qubits(labels)?, mat, true)
}

/// Hermitian, unit-trace estimate Σ ⟨O_s⟩ O_s / 2ⁿ. Each Pauli string
/// expectation is averaged over every setting that measures it.
pub fn linear_inversion(table: &CountTable) -> Result<CMat> {
    let n = table.n_photons;
    let missing: Vec<String> = MeasurementSetting::complete(n)
        .into_iter()
        .filter(|s| table.counts.get(s).is_none_or(|v| v.iter().sum::<f64>() <= 0.0))
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteSettings(missing.join("; ")));
    }
    let dim = 1usize << n;
    let mut rho = CMat::zeros(dim, dim);
    // Pauli strings as digits 0 (identity) or 1..=3 (basis index + 1)
    for code in 0..4usize.pow(n as u32) {
        let digits: Vec<usize> = (0..n).map(|j| (code / 4usize.pow((n - 1 - j) as u32)) % 4).collect();
        let mut acc = 0.0;
        let mut m = 0usize;
        for (s, v) in &table.counts {
            let matches = digits.iter().zip(&s.0).all(|(&d, b)| d == 0 || Basis::all()[d - 1] == *b);
            if !matches {
                continue;
            }
            let total: f64 = v.iter().sum();
            let mut e = 0.0;
            for (k, cnt) in v.iter().enumerate() {
                let bits = index_bits(k, n);
                let sign: i32 =
                    digits.iter().zip(&bits).map(|(&d, &b)| if d != 0 && b == 1 { -1 } else { 1 }).product();
                e += sign as f64 * cnt;
            }
            acc += e / total;
            m += 1;
        }
        let expectation = acc / m as f64;
        let op =
            kron_all(
                digits.iter().map(|&d| if d == 0 { CMat::identity(2, 2) } else { Basis::all()[d - 1].observable() }),
            );
        rho += op * c(expectation / dim as f64);
    }
    Ok((&rho + rho.adjoint()) * c(0.5))
}

/// Nearest unit-trace PSD matrix in Frobenius norm: the spectrum is
/// projected onto the probability simplex.
pub fn project_physical(m: &CMat) -> CMat {
    let (vals, vecs) = eigh(m);
    let proj = simplex_projection(&vals);
    let mut scaled = vecs.clone();
    for (k, v) in proj.iter().enumerate() {
        for r in 0..m.nrows() {
            scaled[(r, k)] *= c(*v);
        }
    }
    scaled * vecs.adjoint()
}

/// Euclidean projection onto {x ≥ 0, Σx = 1}.
pub fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::{max_abs_diff, random_density, trace_distance};

    fn two_qubits() -> Register {
        Register::qubits(["q0", "q1"]).unwrap()
    }

    #[test]
    fn basis_observables_are_orthogonal_paulis() {
        let obs: Vec<CMat> = Basis::all().iter().map(|b| b.observable()).collect();
        for (i, a) in obs.iter().enumerate() {
            assert!(max_abs_diff(&(a * a), &CMat::identity(2, 2)) < 1e-12);
            for b in &obs[i + 1..] {
                assert!(crate::qcore::linalg::trace(&(a * b)).norm() < 1e-12);
            }
        }
        assert!(max_abs_diff(&Basis::RL.observable(), &crate::qcore::pauli(3)) < 1e-12);
    }

    #[test]
    fn analytic_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let rho = DensityMatrix::new(two_qubits(), random_density(4, &mut rng), true).unwrap();
            let t = simulate_counts(&rho, &MeasurementSetting::complete(2), Shots::Analytic, 0).unwrap();
            let back = reconstruct(&t).unwrap();
            assert!(max_abs_diff(back.mat(), rho.mat()) < 1e-8);
        }
    }

    #[test]
    fn shot_totals_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = DensityMatrix::new(two_qubits(), random_density(4, &mut rng), true).unwrap();
        let settings = MeasurementSetting::complete(2);
        let a = simulate_counts(&rho, &settings, Shots::Finite(1000), 11).unwrap();
        let b = simulate_counts(&rho, &settings, Shots::Finite(1000), 11).unwrap();
        assert_eq!(a, b);
        for s in &settings {
            assert_eq!(a.setting_total(s), Some(1000.0));
        }
        let mut rev = settings.clone();
        rev.reverse();
        let c = simulate_counts(&rho, &rev, Shots::Finite(1000), 11).unwrap();
        assert_eq!(a, c);
        assert_eq!(reconstruct(&a).unwrap().mat(), reconstruct(&c).unwrap().mat());
    }

    #[test]
    fn incomplete_settings_are_listed() {
        let rho = DensityMatrix::maximally_mixed(two_qubits());
        let settings: Vec<_> =
            MeasurementSetting::complete(2).into_iter().filter(|s| s.to_string() != "HV,DA").collect();
        let t = simulate_counts(&rho, &settings, Shots::Analytic, 0).unwrap();
        match reconstruct(&t) {
            Err(Error::IncompleteSettings(m)) => assert_eq!(m, "HV,DA"),
            other => panic!("expected incomplete settings, got {other:?}"),
        }
    }

    #[test]
    fn projection_is_physical() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![c(0.7), c(0.5), c(-0.1), c(-0.1)]));
        let p = project_physical(&m);
        let (vals, _) = eigh(&p);
        assert!(vals[0] >= -1e-12);
        assert!((crate::qcore::linalg::trace(&p).re - 1.0).abs() < 1e-12);
        assert_eq!(simplex_projection(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        let q = simplex_projection(&[2.0, 0.0]);
        assert!((q[0] - 1.0).abs() < 1e-15 && q[1] == 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = DensityMatrix::new(two_qubits(), random_density(4, &mut rng), true).unwrap();
        let t = simulate_counts(&rho, &MeasurementSetting::complete(2), Shots::Finite(500), 3).unwrap();
        let text = t.to_csv().unwrap();
        assert!(text.starts_with("setting,outcome,count\n\"RL,RL\",RR,"));
        let back = CountTable::from_csv(&text).unwrap();
        assert_eq!(back.counts, t.counts);
        assert_eq!(back.shots, Shots::Finite(500));
    }

    #[test]
    fn finite_shot_reconstruction_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho = DensityMatrix::new(two_qubits(), random_density(4, &mut rng), true).unwrap();
        let t = simulate_counts(&rho, &MeasurementSetting::complete(2), Shots::Finite(100_000), 5).unwrap();
        let back = reconstruct(&t).unwrap();
        assert!(trace_distance(back.mat(), rho.mat()) < 0.02);
    }
}
