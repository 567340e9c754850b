//! GHZ and Bernstein-Vazirani application circuits.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{embed_path, Circuit, DeviceTopology};
use crate::distribution::{Counts, Frequencies};
use crate::error::{Error, Result};
use crate::noise::CompositeNoiseModel;
use crate::Real;

/// GHZ(n) along the lexicographically first path of `n` qubits: H on the
/// head, a CNOT chain down the path, then every path qubit measured in
/// path order.
pub fn build_ghz(n: usize, topo: &DeviceTopology) -> Result<Circuit> {
    let path = embed_path(topo, n)?;
    let mut c = Circuit::new(format!("ghz:{n}"), topo.num_qubits(), n);
    c.h(path[0]);
    for w in path.windows(2) {
        c.cnot(w[0], w[1]);
    }
    for (i, &q) in path.iter().enumerate() {
        c.measure(q, i);
    }
    Ok(c)
}

/// Bernstein-Vazirani secret; bit `i` is read by classical bit `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SecretString(Vec<bool>);

impl SecretString {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Parse("secret string is empty".into()));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming_weight(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// All `2^m` secrets of length `m`, in binary counting order of the
    /// written string.
    pub fn all(m: usize) -> Vec<SecretString> {
        (0..1u64 << m)
            .map(|v| Self((0..m).map(|i| v >> (m - 1 - i) & 1 == 1).collect()))
            .collect()
    }
}

impl fmt::Display for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SecretString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("secret '{s}' is not a bit string"))),
            })
            .collect::<Result<_>>()?;
        Self::new(bits)
    }
}

impl TryFrom<String> for SecretString {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SecretString> for String {
    fn from(s: SecretString) -> String {
        s.to_string()
    }
}

/// Bernstein-Vazirani circuit: X, H on the oracle; H on the data qubits;
/// CNOT from each data qubit whose secret bit is 1 onto the oracle; H on
/// the data qubits; H, X on the oracle; measure data qubit `i` into
/// classical bit `i`.
pub fn build_bv(secret: &SecretString, data: &[usize], oracle: usize, topo: &DeviceTopology) -> Result<Circuit> {
    if data.len() != secret.len() {
        return Err(Error::ArityMismatch {
            expected: secret.len(),
            found: data.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for &q in data.iter().chain([&oracle]) {
        if q >= topo.num_qubits() {
            return Err(Error::OutOfRange {
                gate: None,
                index: q,
                bound: topo.num_qubits(),
            });
        }
        if !seen.insert(q) {
            return Err(Error::QubitCollision(q));
        }
    }
    for (&q, &bit) in data.iter().zip(secret.bits()) {
        if bit && !topo.are_coupled(q, oracle) {
            return Err(Error::OracleNotAdjacent { oracle, data: q });
        }
    }
    let joined: Vec<String> = data.iter().map(|q| q.to_string()).collect();
    let mut c = Circuit::new(format!("bv:{secret}@{}/{oracle}", joined.join(",")), topo.num_qubits(), data.len());
    c.x(oracle).h(oracle);
    for &q in data {
        c.h(q);
    }
    for (&q, &bit) in data.iter().zip(secret.bits()) {
        if bit {
            c.cnot(q, oracle);
        }
    }
    for &q in data {
        c.h(q);
    }
    c.h(oracle).x(oracle);
    for (i, &q) in data.iter().enumerate() {
        c.measure(q, i);
    }
    Ok(c)
}

/// Frequency of observing the secret.
pub fn bv_accuracy<T: Real>(counts: &Counts, secret: &SecretString) -> Result<T> {
    if let Some(w) = Frequencies::<T>::width(counts) {
        if w != secret.len() {
            return Err(Error::ArityMismatch {
                expected: secret.len(),
                found: w,
            });
        }
    }
    Ok(counts.frequency(&secret.to_string()))
}

/// Application spelling on the command line: `ghz:<n>`, `ghz:<a>..<b>`
/// or `bv:<secret>@<d1,d2,...>/<oracle>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppSpec {
    Ghz { sizes: Vec<usize> },
    Bv { secret: SecretString, data: Vec<usize>, oracle: usize },
}

impl AppSpec {
    pub fn circuits(&self, topo: &DeviceTopology) -> Result<Vec<Circuit>> {
        match self {
            AppSpec::Ghz { sizes } => sizes.iter().map(|&n| build_ghz(n, topo)).collect(),
            AppSpec::Bv { secret, data, oracle } => Ok(vec![build_bv(secret, data, *oracle, topo)?]),
        }
    }
}

fn parse_usize(s: &str, spec: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number '{s}' in '{spec}'")))
}

impl FromStr for AppSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        if let Some(rest) = spec.strip_prefix("ghz:") {
            let sizes = match rest.split_once("..") {
                Some((a, b)) => {
                    let (a, b) = (parse_usize(a, spec)?, parse_usize(b, spec)?);
                    if a > b {
                        return Err(Error::Parse(format!("empty range in '{spec}'")));
                    }
                    (a..=b).collect()
                }
                None => vec![parse_usize(rest, spec)?],
            };
            return Ok(AppSpec::Ghz { sizes });
        }
        if let Some(rest) = spec.strip_prefix("bv:") {
            let (secret, place) = rest
                .split_once('@')
                .ok_or_else(|| Error::Parse(format!("'{spec}' lacks '@<data>/<oracle>'")))?;
            let (data, oracle) = place
                .split_once('/')
                .ok_or_else(|| Error::Parse(format!("'{spec}' lacks '/<oracle>'")))?;
            return Ok(AppSpec::Bv {
                secret: secret.parse()?,
                data: data.split(',').map(|d| parse_usize(d, spec)).collect::<Result<_>>()?,
                oracle: parse_usize(oracle, spec)?,
            });
        }
        Err(Error::Parse(format!("unknown application '{spec}'")))
    }
}

/// Chooses an oracle and `m` neighbors minimizing the summed `p_cnot` of
/// the used links. Ties go to the lower oracle index, then lower data
/// indices. Returns `(data, oracle)` with data sorted ascending.
pub fn pick_bv_star<T: Real>(
    topo: &DeviceTopology,
    m: usize,
    model: &CompositeNoiseModel<T>,
) -> Option<(Vec<usize>, usize)> {
    let mut best: Option<(T, Vec<usize>, usize)> = None;
    for oracle in 0..topo.num_qubits() {
        let mut nbrs: Vec<(T, usize)> = topo
            .neighbors(oracle)
            .iter()
            .map(|&d| (model.cnot_for(d, oracle).unwrap_or_else(|_| T::infinity()), d))
            .collect();
        if nbrs.len() < m {
            continue;
        }
        nbrs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let cost: T = nbrs[..m].iter().map(|p| p.0).sum();
        let mut data: Vec<usize> = nbrs[..m].iter().map(|p| p.1).collect();
        data.sort_unstable();
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, data, oracle));
        }
    }
    best.map(|(_, d, o)| (d, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::simulate_ideal;

    #[test]
    fn ghz_census_and_output() {
        let topo = DeviceTopology::poughkeepsie();
        for n in 2..=20 {
            let c = build_ghz(n, &topo).unwrap();
            let census = c.census();
            assert_eq!((census.h, census.cnot, census.measure), (1, n - 1, n));
            if n <= 12 {
                let d = simulate_ideal::<f64>(&c).unwrap();
                assert_eq!(d.support().len(), 2);
                assert_eq!(d.probability(&"0".repeat(n)), 0.5);
                assert!((d.probability(&"1".repeat(n)) - 0.5).abs() < 1e-12);
            }
        }
        assert!(matches!(build_ghz(21, &topo), Err(Error::NoPath { .. })));
    }

    #[test]
    fn bv_layout_and_correctness() {
        let topo = DeviceTopology::poughkeepsie();
        let s: SecretString = "101".parse().unwrap();
        let c = build_bv(&s, &[6, 8, 12], 7, &topo).unwrap();
        let cnots: Vec<_> = c
            .gates
            .iter()
            .filter_map(|g| match g {
                crate::circuit::GateKind::Cnot { control, target } => Some((*control, *target)),
                _ => None,
            })
            .collect();
        assert_eq!(cnots, [(6, 7), (12, 7)]);
        for secret in SecretString::all(3) {
            let c = build_bv(&secret, &[6, 8, 12], 7, &topo).unwrap();
            let d = simulate_ideal::<f64>(&c).unwrap();
            assert!((d.probability(&secret.to_string()) - 1.0).abs() < 1e-12, "{secret}");
        }
        let zero = build_bv(&"000".parse().unwrap(), &[6, 8, 12], 7, &topo).unwrap();
        assert_eq!(zero.census().cnot, 0);
    }

    #[test]
    fn bv_errors() {
        let topo = DeviceTopology::poughkeepsie();
        let s: SecretString = "11".parse().unwrap();
        assert!(matches!(build_bv(&s, &[6, 0], 7, &topo), Err(Error::OracleNotAdjacent { oracle: 7, data: 0 })));
        assert!(matches!(build_bv(&s, &[6, 6], 7, &topo), Err(Error::QubitCollision(6))));
        assert!(matches!(build_bv(&s, &[6], 7, &topo), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn accuracy_examples() {
        let s: SecretString = "101".parse().unwrap();
        let full = Counts::new([("101".to_string(), 8192)].into()).unwrap();
        assert_eq!(bv_accuracy::<f64>(&full, &s).unwrap(), 1.0);
        let half = Counts::new([("101".to_string(), 4096), ("001".to_string(), 4096)].into()).unwrap();
        assert_eq!(bv_accuracy::<f64>(&half, &s).unwrap(), 0.5);
        let narrow = Counts::new([("10".to_string(), 1)].into()).unwrap();
        assert!(bv_accuracy::<f64>(&narrow, &s).is_err());
    }

    #[test]
    fn app_specs_parse() {
        assert_eq!("ghz:4".parse::<AppSpec>().unwrap(), AppSpec::Ghz { sizes: vec![4] });
        assert_eq!("ghz:2..4".parse::<AppSpec>().unwrap(), AppSpec::Ghz { sizes: vec![2, 3, 4] });
        assert_eq!(
            "bv:101@6,8,12/7".parse::<AppSpec>().unwrap(),
            AppSpec::Bv {
                secret: "101".parse().unwrap(),
                data: vec![6, 8, 12],
                oracle: 7
            }
        );
        assert!("qft:3".parse::<AppSpec>().is_err());
        assert!("bv:10@1,2".parse::<AppSpec>().is_err());
    }

    #[test]
    fn star_picker_prefers_quiet_links() {
        let topo = DeviceTopology::poughkeepsie();
        let mut model = CompositeNoiseModel::uniform(&topo, crate::noise::ReadoutModel::ideal(), 0.0, 0.05).unwrap();
        for (a, b) in [(6, 7), (7, 8), (7, 12)] {
            model
                .cnot
                .insert(crate::circuit::Coupling::new(a, b), crate::noise::DepolarizingParam::new(0.01).unwrap());
        }
        assert_eq!(pick_bv_star(&topo, 3, &model), Some((vec![6, 8, 12], 7)));
        assert_eq!(pick_bv_star(&topo, 5, &model), None);
    }
}
