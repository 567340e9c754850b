use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected qubit pair, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coupling(usize, usize);

impl Coupling {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Coupling(a, b)
        } else {
            Coupling(b, a)
        }
    }

    pub fn low(&self) -> usize {
        self.0
    }

    pub fn high(&self) -> usize {
        self.1
    }

    pub fn contains(&self, q: usize) -> bool {
        self.0 == q || self.1 == q
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}-q{}", self.0, self.1)
    }
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    num_qubits: usize,
    couplings: Vec<(usize, usize)>,
}

/// Register size and directed coupling set of a device.
///
/// Couplings are kept in the direction they were given, but every
/// connectivity query treats them as undirected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyFile", into = "TopologyFile")]
pub struct DeviceTopology {
    num_qubits: usize,
    couplings: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl TryFrom<TopologyFile> for DeviceTopology {
    type Error = Error;

    fn try_from(f: TopologyFile) -> Result<Self> {
        DeviceTopology::new(f.num_qubits, f.couplings)
    }
}

impl From<DeviceTopology> for TopologyFile {
    fn from(t: DeviceTopology) -> Self {
        TopologyFile {
            num_qubits: t.num_qubits,
            couplings: t.couplings,
        }
    }
}

impl DeviceTopology {
    pub fn new(num_qubits: usize, couplings: Vec<(usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![BTreeSet::new(); num_qubits];
        for &(a, b) in &couplings {
            if a >= num_qubits || b >= num_qubits {
                return Err(Error::InvalidTopology(format!(
                    "coupling ({a},{b}) outside a {num_qubits}-qubit register"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop on qubit {a}")));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        Ok(Self {
            num_qubits,
            couplings,
            adjacency: adjacency
                .into_iter()
                .map(|s| s.into_iter().collect())
                .collect(),
        })
    }

    /// Linear chain `0-1-...-(n-1)`.
    pub fn line(n: usize) -> Self {
        let couplings = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, couplings).expect("line topology is valid")
    }

    /// The 20-qubit layout of IBM's poughkeepsie device: four rows of five
    /// qubits with seven vertical links (23 couplings).
    pub fn poughkeepsie() -> Self {
        let mut couplings = Vec::new();
        for row in 0..4 {
            for col in 0..4 {
                let q = row * 5 + col;
                couplings.push((q, q + 1));
            }
        }
        couplings.extend([(0, 5), (4, 9), (5, 10), (7, 12), (9, 14), (10, 15), (14, 19)]);
        Self::new(20, couplings).expect("poughkeepsie topology is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    /// Couplings as stored, including direction.
    pub fn directed_couplings(&self) -> &[(usize, usize)] {
        &self.couplings
    }

    pub fn are_coupled(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|n| n.binary_search(&b).is_ok())
    }

    /// Sorted neighbor list of `q`.
    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.adjacency[q]
    }

    /// Distinct undirected links in ascending order.
    pub fn links(&self) -> Vec<Coupling> {
        let set: BTreeSet<Coupling> = self
            .couplings
            .iter()
            .map(|&(a, b)| Coupling::new(a, b))
            .collect();
        set.into_iter().collect()
    }

    /// Number of undirected links (`c`).
    pub fn num_links(&self) -> usize {
        self.links().len()
    }

    /// Stored orientation of a link: the first stored direction wins.
    pub fn orientation(&self, link: Coupling) -> (usize, usize) {
        self.couplings
            .iter()
            .copied()
            .find(|&(a, b)| Coupling::new(a, b) == link)
            .unwrap_or((link.low(), link.high()))
    }
}

/// Finds a simple path of `length` qubits.
///
/// Depth-first search starting from the lowest qubit index, always trying
/// neighbors in ascending order, so the result is the lexicographically
/// smallest valid path.
pub fn embed_path(topo: &DeviceTopology, length: usize) -> Result<Vec<usize>> {
    if length < 2 {
        return Err(Error::InvalidConfig(format!(
            "path length must be at least 2, got {length}"
        )));
    }
    if length > topo.num_qubits() {
        return Err(Error::NoPath { length });
    }
    let mut visited = vec![false; topo.num_qubits()];
    let mut path = Vec::with_capacity(length);
    for start in 0..topo.num_qubits() {
        path.push(start);
        visited[start] = true;
        if extend(topo, length, &mut path, &mut visited) {
            return Ok(path);
        }
        visited[start] = false;
        path.pop();
    }
    Err(Error::NoPath { length })
}

fn extend(topo: &DeviceTopology, length: usize, path: &mut Vec<usize>, visited: &mut [bool]) -> bool {
    if path.len() == length {
        return true;
    }
    let last = *path.last().expect("nonempty path");
    for &next in topo.neighbors(last) {
        if visited[next] {
            continue;
        }
        visited[next] = true;
        path.push(next);
        if extend(topo, length, path, visited) {
            return true;
        }
        path.pop();
        visited[next] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_path() {
        assert_eq!(embed_path(&DeviceTopology::line(3), 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn length_two_is_smallest_edge() {
        let topo = DeviceTopology::new(5, vec![(3, 4), (1, 2), (2, 4)]).unwrap();
        assert_eq!(embed_path(&topo, 2).unwrap(), vec![1, 2]);
        let p = DeviceTopology::poughkeepsie();
        assert_eq!(embed_path(&p, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn pigeonhole() {
        let p = DeviceTopology::poughkeepsie();
        assert!(matches!(embed_path(&p, 21), Err(Error::NoPath { length: 21 })));
    }

    #[test]
    fn star_has_no_long_path() {
        let topo = DeviceTopology::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(embed_path(&topo, 3).unwrap(), vec![1, 0, 2]);
        assert!(matches!(embed_path(&topo, 4), Err(Error::NoPath { .. })));
    }

    #[test]
    fn poughkeepsie_shape() {
        let p = DeviceTopology::poughkeepsie();
        assert_eq!(p.num_qubits(), 20);
        assert_eq!(p.num_links(), 23);
        // BV star used on hardware: oracle 7 with data 6, 8, 12
        for d in [6, 8, 12] {
            assert!(p.are_coupled(7, d));
        }
        for n in 2..=20 {
            let path = embed_path(&p, n).unwrap();
            assert_eq!(path.len(), n);
            assert!(path.windows(2).all(|w| p.are_coupled(w[0], w[1])));
        }
    }

    #[test]
    fn json_roundtrip_and_rejects_self_loop() {
        let topo = DeviceTopology::new(3, vec![(1, 0), (1, 2)]).unwrap();
        let s = serde_json::to_string(&topo).unwrap();
        assert_eq!(s, r#"{"num_qubits":3,"couplings":[[1,0],[1,2]]}"#);
        let back: DeviceTopology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, topo);
        assert!(back.are_coupled(0, 1));
        assert!(serde_json::from_str::<DeviceTopology>(r#"{"num_qubits":2,"couplings":[[1,1]]}"#).is_err());
        assert!(serde_json::from_str::<DeviceTopology>(r#"{"num_qubits":2,"couplings":[[0,2]]}"#).is_err());
    }
}
