//! Circuit intermediate representation over the abstract gate set
//! `{H, X, CNOT, Measure, Identity}`.
//!
//! Qubit indices are physical register indices of the target device.
//! Outcome strings are indexed by classical bit: character `i` of an
//! outcome string is classical bit `i` (bit 0 is the leftmost character).

mod topology;

pub use topology::{embed_path, Coupling, DeviceTopology};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum GateKind {
    H { target: usize },
    X { target: usize },
    Cnot { control: usize, target: usize },
    Measure { target: usize, clbit: usize },
    Identity { target: usize },
}

impl GateKind {
    /// Qubits the gate acts on, control first.
    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            GateKind::Cnot { control, target } => (control, Some(target)),
            GateKind::H { target }
            | GateKind::X { target }
            | GateKind::Measure { target, .. }
            | GateKind::Identity { target } => (target, None),
        };
        std::iter::once(a).chain(b)
    }

    pub fn is_measure(&self) -> bool {
        matches!(self, GateKind::Measure { .. })
    }
}

/// Gate counts of a circuit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCensus {
    pub h: usize,
    pub x: usize,
    pub cnot: usize,
    pub measure: usize,
    pub identity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub label: String,
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub gates: Vec<GateKind>,
}

impl Circuit {
    pub fn new(label: impl Into<String>, num_qubits: usize, num_clbits: usize) -> Self {
        Self {
            label: label.into(),
            num_qubits,
            num_clbits,
            gates: Vec::new(),
        }
    }

    pub fn h(&mut self, target: usize) -> &mut Self {
        self.push(GateKind::H { target })
    }

    pub fn x(&mut self, target: usize) -> &mut Self {
        self.push(GateKind::X { target })
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> &mut Self {
        self.push(GateKind::Cnot { control, target })
    }

    pub fn measure(&mut self, target: usize, clbit: usize) -> &mut Self {
        self.push(GateKind::Measure { target, clbit })
    }

    pub fn id(&mut self, target: usize) -> &mut Self {
        self.push(GateKind::Identity { target })
    }

    pub fn push(&mut self, gate: GateKind) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn census(&self) -> GateCensus {
        let mut c = GateCensus::default();
        for g in &self.gates {
            match g {
                GateKind::H { .. } => c.h += 1,
                GateKind::X { .. } => c.x += 1,
                GateKind::Cnot { .. } => c.cnot += 1,
                GateKind::Measure { .. } => c.measure += 1,
                GateKind::Identity { .. } => c.identity += 1,
            }
        }
        c
    }

    /// Sorted list of qubits touched by any gate.
    pub fn active_qubits(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.gates.iter().flat_map(|g| g.qubits()).collect();
        set.into_iter().collect()
    }

    /// `(qubit, clbit)` pairs in gate order.
    pub fn measurements(&self) -> Vec<(usize, usize)> {
        self.gates
            .iter()
            .filter_map(|g| match *g {
                GateKind::Measure { target, clbit } => Some((target, clbit)),
                _ => None,
            })
            .collect()
    }

    /// Structural checks that do not depend on a device.
    ///
    /// Measurements must be terminal: no gate may act on a qubit after it
    /// has been measured.
    pub fn check(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::InvalidCircuit("empty label".into()));
        }
        if self.num_clbits > 64 {
            return Err(Error::InvalidCircuit(format!(
                "{} classical bits exceeds the 64-bit outcome limit",
                self.num_clbits
            )));
        }
        let mut written = BTreeSet::new();
        let mut measured = BTreeSet::new();
        for (i, g) in self.gates.iter().enumerate() {
            for q in g.qubits() {
                if q >= self.num_qubits {
                    return Err(Error::OutOfRange {
                        gate: Some(i),
                        index: q,
                        bound: self.num_qubits,
                    });
                }
                if measured.contains(&q) {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {i} acts on qubit {q} after it was measured"
                    )));
                }
            }
            match *g {
                GateKind::Cnot { control, target } if control == target => {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {i}: CNOT control equals target ({control})"
                    )));
                }
                GateKind::Measure { target, clbit } => {
                    if clbit >= self.num_clbits {
                        return Err(Error::OutOfRange {
                            gate: Some(i),
                            index: clbit,
                            bound: self.num_clbits,
                        });
                    }
                    if !written.insert(clbit) {
                        return Err(Error::InvalidCircuit(format!(
                            "gate {i}: classical bit {clbit} written twice"
                        )));
                    }
                    measured.insert(target);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Checks a circuit against a device: structure, register bounds and
/// CNOT connectivity (either stored direction is accepted).
pub fn validate(circuit: &Circuit, topo: &DeviceTopology) -> Result<()> {
    circuit.check()?;
    for (i, g) in circuit.gates.iter().enumerate() {
        for q in g.qubits() {
            if q >= topo.num_qubits() {
                return Err(Error::OutOfRange {
                    gate: Some(i),
                    index: q,
                    bound: topo.num_qubits(),
                });
            }
        }
        if let GateKind::Cnot { control, target } = *g {
            if !topo.are_coupled(control, target) {
                return Err(Error::UncoupledPair {
                    gate: i,
                    control,
                    target,
                });
            }
        }
    }
    Ok(())
}
