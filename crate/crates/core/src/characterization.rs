//! Test-suite generation, execution and the characterization archive.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::circuit::{validate, Circuit, Coupling, DeviceTopology};
use crate::distribution::{Counts, OutcomeDistribution};
use crate::error::{Error, Result};
use crate::noise::Granularity;
use crate::Real;

/// Hadamard sequence lengths used when Hadamard tests are requested
/// without explicit lengths.
pub const DEFAULT_HADAMARD_LENGTHS: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// One test circuit family. Serialized as its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestKind {
    InitMeasure(usize),
    XTest(usize),
    XXTest(usize),
    HadamardSequence { qubit: usize, length: usize },
    BellTest { control: usize, target: usize },
}

impl TestKind {
    pub fn label(&self) -> String {
        self.to_string()
    }

    /// Short family name: `init`, `x`, `xx`, `hseq` or `bell`.
    pub fn family(&self) -> &'static str {
        match self {
            TestKind::InitMeasure(_) => "init",
            TestKind::XTest(_) => "x",
            TestKind::XXTest(_) => "xx",
            TestKind::HadamardSequence { .. } => "hseq",
            TestKind::BellTest { .. } => "bell",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            TestKind::InitMeasure(q) | TestKind::XTest(q) | TestKind::XXTest(q) => vec![q],
            TestKind::HadamardSequence { qubit, .. } => vec![qubit],
            TestKind::BellTest { control, target } => vec![control, target],
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            TestKind::HadamardSequence { length, .. } if length < 2 || length % 2 == 1 => {
                Err(Error::OddHadamardLength(length))
            }
            TestKind::BellTest { control, target } if control == target => {
                Err(Error::QubitCollision(control))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TestKind::InitMeasure(q) => write!(f, "init:q{q}"),
            TestKind::XTest(q) => write!(f, "x:q{q}"),
            TestKind::XXTest(q) => write!(f, "xx:q{q}"),
            TestKind::HadamardSequence { qubit, length } => write!(f, "hseq:q{qubit}:len{length}"),
            TestKind::BellTest { control, target } => write!(f, "bell:q{control}-q{target}"),
        }
    }
}

fn parse_qubit(s: &str, label: &str) -> Result<usize> {
    s.strip_prefix('q')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad qubit '{s}' in label '{label}'")))
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(label: &str) -> Result<Self> {
        let parts: Vec<&str> = label.split(':').collect();
        let kind = match parts.as_slice() {
            ["init", q] => TestKind::InitMeasure(parse_qubit(q, label)?),
            ["x", q] => TestKind::XTest(parse_qubit(q, label)?),
            ["xx", q] => TestKind::XXTest(parse_qubit(q, label)?),
            ["hseq", q, len] => TestKind::HadamardSequence {
                qubit: parse_qubit(q, label)?,
                length: len
                    .strip_prefix("len")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad length in label '{label}'")))?,
            },
            ["bell", pair] => {
                let (a, b) = pair
                    .split_once('-')
                    .ok_or_else(|| Error::Parse(format!("bad pair in label '{label}'")))?;
                TestKind::BellTest {
                    control: parse_qubit(a, label)?,
                    target: parse_qubit(b, label)?,
                }
            }
            _ => return Err(Error::Parse(format!("unknown test label '{label}'"))),
        };
        kind.check()?;
        Ok(kind)
    }
}

impl TryFrom<String> for TestKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestKind> for String {
    fn from(k: TestKind) -> String {
        k.to_string()
    }
}

/// Test circuit for `test` and its ideal outcome distribution.
///
/// The register is sized to the largest qubit index used; the Bell test
/// measures the control into bit 0 and the target into bit 1.
pub fn materialize<T: Real>(test: TestKind) -> (Circuit, OutcomeDistribution<T>) {
    let width = test.qubits().into_iter().max().unwrap_or(0) + 1;
    let label = test.label();
    let (circuit, expected) = match test {
        TestKind::InitMeasure(q) => {
            let mut c = Circuit::new(label, width, 1);
            c.measure(q, 0);
            (c, "0")
        }
        TestKind::XTest(q) => {
            let mut c = Circuit::new(label, width, 1);
            c.x(q).measure(q, 0);
            (c, "1")
        }
        TestKind::XXTest(q) => {
            let mut c = Circuit::new(label, width, 1);
            c.x(q).x(q).measure(q, 0);
            (c, "0")
        }
        TestKind::HadamardSequence { qubit, length } => {
            let mut c = Circuit::new(label, width, 1);
            for _ in 0..length {
                c.h(qubit);
            }
            c.measure(qubit, 0);
            (c, "0")
        }
        TestKind::BellTest { control, target } => {
            let mut c = Circuit::new(label, width, 2);
            c.h(control).cnot(control, target).measure(control, 0).measure(target, 1);
            let half = T::lit(0.5);
            let bell = OutcomeDistribution::new(2, BTreeMap::from([("00".into(), half), ("11".into(), half)]))
                .expect("valid Bell distribution");
            return (c, bell);
        }
    };
    (circuit, OutcomeDistribution::point(expected).expect("valid point mass"))
}

/// A test circuit with its observed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Characterization<T: Real = f64> {
    pub kind: TestKind,
    pub circuit: Circuit,
    pub counts: Counts,
    pub expected_ideal: OutcomeDistribution<T>,
}

impl<T: Real> Characterization<T> {
    pub fn new(kind: TestKind, counts: Counts) -> Self {
        let (circuit, expected_ideal) = materialize(kind);
        Self {
            kind,
            circuit,
            counts,
            expected_ideal,
        }
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub granularity: Granularity,
    #[serde(default)]
    pub hadamard_lengths: Vec<usize>,
    pub shots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuitePlan {
    pub tests: Vec<TestKind>,
    pub shots: u64,
    pub seed: u64,
}

impl SuitePlan {
    pub fn labels(&self) -> Vec<String> {
        self.tests.iter().map(TestKind::label).collect()
    }
}

/// Per qubit in scope: init, X, XX and one Hadamard sequence per length;
/// then one Bell test per link with both ends in scope, oriented as
/// stored in the topology.
pub fn build_suite(topo: &DeviceTopology, config: &SuiteConfig) -> Result<SuitePlan> {
    if let Some(&bad) = config.hadamard_lengths.iter().find(|&&l| l < 2 || l % 2 == 1) {
        return Err(Error::OddHadamardLength(bad));
    }
    let qubits: BTreeSet<usize> = match &config.granularity {
        Granularity::PerElement | Granularity::RegisterAverage => (0..topo.num_qubits()).collect(),
        Granularity::SubsetAverage(qs) => {
            if let Some(&q) = qs.iter().find(|&&q| q >= topo.num_qubits()) {
                return Err(Error::OutOfRange {
                    gate: None,
                    index: q,
                    bound: topo.num_qubits(),
                });
            }
            qs.iter().copied().collect()
        }
    };
    let mut tests = Vec::new();
    for &q in &qubits {
        tests.extend([TestKind::InitMeasure(q), TestKind::XTest(q), TestKind::XXTest(q)]);
        tests.extend(
            config
                .hadamard_lengths
                .iter()
                .map(|&length| TestKind::HadamardSequence { qubit: q, length }),
        );
    }
    for link in topo.links() {
        if qubits.contains(&link.low()) && qubits.contains(&link.high()) {
            let (control, target) = topo.orientation(link);
            tests.push(TestKind::BellTest { control, target });
        }
    }
    Ok(SuitePlan {
        tests,
        shots: config.shots,
        seed: config.seed,
    })
}

/// Experiment cost of a plan, with the `N_s(2q + 2c + 1)` formula shown
/// alongside for comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentCount {
    pub circuits: usize,
    pub total_shots: u64,
    pub qubits: usize,
    pub couplings: usize,
    /// `None` for an empty plan.
    pub formula_shots: Option<u64>,
}

pub fn count_experiments(plan: &SuitePlan) -> ExperimentCount {
    let qubits: BTreeSet<usize> = plan.tests.iter().flat_map(|t| t.qubits()).collect();
    let couplings: BTreeSet<Coupling> = plan
        .tests
        .iter()
        .filter_map(|t| match *t {
            TestKind::BellTest { control, target } => Some(Coupling::new(control, target)),
            _ => None,
        })
        .collect();
    let (q, c) = (qubits.len() as u64, couplings.len() as u64);
    ExperimentCount {
        circuits: plan.tests.len(),
        total_shots: plan.shots * plan.tests.len() as u64,
        qubits: qubits.len(),
        couplings: couplings.len(),
        formula_shots: (!plan.tests.is_empty()).then(|| plan.shots * (2 * q + 2 * c + 1)),
    }
}

/// Runs every test of `plan` on `backend` in one call. Either every
/// characterization is returned or none.
pub fn run_suite<T: Real>(plan: &SuitePlan, backend: &dyn Backend) -> Result<Vec<Characterization<T>>> {
    if plan.shots == 0 {
        return Err(Error::InvalidConfig("shots must be at least 1".into()));
    }
    if plan.shots > backend.max_shots() {
        return Err(Error::InvalidConfig(format!(
            "{} shots exceeds the backend limit of {}",
            plan.shots,
            backend.max_shots()
        )));
    }
    let prepared: Vec<(Circuit, OutcomeDistribution<T>)> = plan.tests.iter().map(|&t| materialize(t)).collect();
    for (c, _) in &prepared {
        validate(c, backend.topology())?;
    }
    let circuits: Vec<Circuit> = prepared.iter().map(|(c, _)| c.clone()).collect();
    let counts = backend.run(&circuits, plan.shots, plan.seed)?;
    if counts.len() != circuits.len() {
        return Err(Error::ArityMismatch {
            expected: circuits.len(),
            found: counts.len(),
        });
    }
    plan.tests
        .iter()
        .zip(prepared)
        .zip(counts)
        .map(|((&kind, (circuit, expected_ideal)), counts)| {
            if counts.shots() != plan.shots {
                return Err(Error::InvalidConfig(format!(
                    "{kind}: backend returned {} shots, plan requires {}",
                    counts.shots(),
                    plan.shots
                )));
            }
            Ok(Characterization {
                kind,
                circuit,
                counts,
                expected_ideal,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub label: String,
    pub kind: String,
    #[serde(flatten)]
    pub counts: Counts,
}

/// On-disk characterization archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterizationArchive {
    pub metadata: ArchiveMetadata,
    pub config: SuiteConfig,
    pub entries: Vec<ArchiveEntry>,
}

impl CharacterizationArchive {
    pub fn new<T: Real>(config: SuiteConfig, metadata: ArchiveMetadata, chars: &[Characterization<T>]) -> Self {
        Self {
            metadata,
            config,
            entries: chars
                .iter()
                .map(|c| ArchiveEntry {
                    label: c.label(),
                    kind: c.kind.family().to_string(),
                    counts: c.counts.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("archive serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn counts_by_label(&self) -> BTreeMap<String, Counts> {
        self.entries.iter().map(|e| (e.label.clone(), e.counts.clone())).collect()
    }

    /// Every entry as a characterization, in archive order.
    pub fn characterizations<T: Real>(&self) -> Result<Vec<Characterization<T>>> {
        self.entries
            .iter()
            .map(|e| Ok(Characterization::new(e.label.parse()?, e.counts.clone())))
            .collect()
    }

    /// Characterizations for the tests of `plan`, in plan order.
    pub fn join<T: Real>(&self, plan: &SuitePlan) -> Result<Vec<Characterization<T>>> {
        join_counts(&self.counts_by_label(), plan)
    }
}

/// Joins labeled counts to a plan, listing every label the plan needs but
/// `counts` lacks.
pub fn join_counts<T: Real>(counts: &BTreeMap<String, Counts>, plan: &SuitePlan) -> Result<Vec<Characterization<T>>> {
    let missing: Vec<String> = plan
        .labels()
        .into_iter()
        .filter(|l| !counts.contains_key(l))
        .collect();
    if !missing.is_empty() {
        return Err(Error::LabelMismatch { missing });
    }
    Ok(plan
        .tests
        .iter()
        .map(|&k| Characterization::new(k, counts[&k.label()].clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::simulate_ideal;

    fn cfg(granularity: Granularity, hadamard_lengths: Vec<usize>) -> SuiteConfig {
        SuiteConfig {
            granularity,
            hadamard_lengths,
            shots: 8192,
            seed: 1,
        }
    }

    #[test]
    fn labels_roundtrip() {
        let kinds = [
            TestKind::InitMeasure(3),
            TestKind::XTest(3),
            TestKind::XXTest(3),
            TestKind::HadamardSequence { qubit: 3, length: 8 },
            TestKind::BellTest { control: 3, target: 4 },
        ];
        let labels: Vec<String> = kinds.iter().map(TestKind::label).collect();
        assert_eq!(labels, ["init:q3", "x:q3", "xx:q3", "hseq:q3:len8", "bell:q3-q4"]);
        for (k, l) in kinds.iter().zip(&labels) {
            assert_eq!(l.parse::<TestKind>().unwrap(), *k);
        }
        assert!("hseq:q1:len3".parse::<TestKind>().is_err());
        assert!("bell:q1".parse::<TestKind>().is_err());
        assert!("ghz:q1".parse::<TestKind>().is_err());
    }

    #[test]
    fn materialized_circuits_match_expectations() {
        for kind in [
            TestKind::InitMeasure(2),
            TestKind::XTest(0),
            TestKind::XXTest(1),
            TestKind::HadamardSequence { qubit: 0, length: 2 },
            TestKind::HadamardSequence { qubit: 1, length: 6 },
            TestKind::BellTest { control: 0, target: 1 },
            TestKind::BellTest { control: 4, target: 3 },
        ] {
            let (c, expected) = materialize::<f64>(kind);
            let ideal = simulate_ideal::<f64>(&c).unwrap();
            for (k, p) in expected.iter() {
                assert!((ideal.probability(k) - p).abs() < 1e-12, "{kind}");
            }
            assert_eq!(c.label, kind.label());
        }
        let (bell, _) = materialize::<f64>(TestKind::BellTest { control: 0, target: 1 });
        assert_eq!(bell.census().h, 1);
        assert_eq!(bell.census().cnot, 1);
        assert_eq!(bell.census().measure, 2);
    }

    #[test]
    fn two_qubit_suite_has_seven_circuits() {
        let plan = build_suite(&DeviceTopology::line(2), &cfg(Granularity::PerElement, vec![])).unwrap();
        assert_eq!(plan.tests.len(), 7);
        let n = count_experiments(&plan);
        assert_eq!(n.circuits, 7);
        assert_eq!(n.total_shots, 57344);
        assert_eq!(n.formula_shots, Some(57344));
    }

    #[test]
    fn poughkeepsie_census() {
        let topo = DeviceTopology::poughkeepsie();
        let plan = build_suite(&topo, &cfg(Granularity::PerElement, vec![])).unwrap();
        let n = count_experiments(&plan);
        assert_eq!(n.circuits, 3 * 20 + 23);
        assert_eq!(n.formula_shots, Some(8192 * 87));
        // every qubit in at least three tests, every link in one
        for q in 0..20 {
            assert!(plan.tests.iter().filter(|t| t.qubits().contains(&q)).count() >= 3);
        }
        for link in topo.links() {
            assert_eq!(
                plan.tests
                    .iter()
                    .filter(|t| matches!(t, TestKind::BellTest { control, target }
                        if Coupling::new(*control, *target) == link))
                    .count(),
                1
            );
        }
    }

    #[test]
    fn subset_and_empty_plans() {
        let topo = DeviceTopology::poughkeepsie();
        let plan = build_suite(&topo, &cfg(Granularity::SubsetAverage(vec![0, 1]), vec![2, 4])).unwrap();
        assert_eq!(plan.tests.len(), 2 * 5 + 1);
        let empty = build_suite(&topo, &cfg(Granularity::SubsetAverage(vec![]), vec![])).unwrap();
        assert!(empty.tests.is_empty());
        let n = count_experiments(&empty);
        assert_eq!((n.circuits, n.total_shots, n.formula_shots), (0, 0, None));
    }

    #[test]
    fn odd_hadamard_length_rejected() {
        let r = build_suite(&DeviceTopology::line(2), &cfg(Granularity::PerElement, vec![2, 3]));
        assert!(matches!(r, Err(Error::OddHadamardLength(3))));
    }

    #[test]
    fn join_reports_missing_labels() {
        let plan = build_suite(&DeviceTopology::line(2), &cfg(Granularity::PerElement, vec![])).unwrap();
        let mut counts: BTreeMap<String, Counts> = plan
            .labels()
            .into_iter()
            .map(|l| (l, Counts::new(BTreeMap::from([("0".to_string(), 8192)])).unwrap()))
            .collect();
        counts.remove("bell:q0-q1");
        match join_counts::<f64>(&counts, &plan) {
            Err(Error::LabelMismatch { missing }) => assert_eq!(missing, ["bell:q0-q1"]),
            other => panic!("{other:?}"),
        }
    }
}
