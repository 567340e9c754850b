//! JSON schema of a noise-model file.

use serde::{Deserialize, Serialize};

use super::{CompositeNoiseModel, DepolarizingParam, Granularity, NoiseFlags, ReadoutModel};
use crate::circuit::Coupling;
use crate::error::Error;
use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReadoutEntry<T> {
    pub qubit: usize,
    #[serde(flatten)]
    pub model: ReadoutModel<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SingleQubitEntry<T> {
    pub qubit: usize,
    pub p: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CnotEntry<T> {
    pub qubits: [usize; 2],
    pub p_cnot: T,
}

/// On-disk layout of [`CompositeNoiseModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NoiseModelFile<T> {
    pub granularity: Granularity,
    pub flags: NoiseFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default)]
    pub readout: Vec<ReadoutEntry<T>>,
    #[serde(default)]
    pub x_gate: Vec<SingleQubitEntry<T>>,
    #[serde(default)]
    pub h_gate: Vec<SingleQubitEntry<T>>,
    #[serde(default)]
    pub cnot: Vec<CnotEntry<T>>,
}

impl<T: Real> From<CompositeNoiseModel<T>> for NoiseModelFile<T> {
    fn from(m: CompositeNoiseModel<T>) -> Self {
        let single = |map: &std::collections::BTreeMap<usize, DepolarizingParam<T>>| {
            map.iter()
                .map(|(&qubit, p)| SingleQubitEntry { qubit, p: p.value() })
                .collect()
        };
        Self {
            granularity: m.granularity.clone(),
            flags: m.flags,
            window: m.window.clone(),
            provenance: m.provenance.clone(),
            readout: m
                .readout
                .iter()
                .map(|(&qubit, &model)| ReadoutEntry { qubit, model })
                .collect(),
            x_gate: single(&m.x_gate),
            h_gate: single(&m.h_gate),
            cnot: m
                .cnot
                .iter()
                .map(|(l, p)| CnotEntry {
                    qubits: [l.low(), l.high()],
                    p_cnot: p.value(),
                })
                .collect(),
        }
    }
}

impl<T: Real> TryFrom<NoiseModelFile<T>> for CompositeNoiseModel<T> {
    type Error = Error;

    fn try_from(f: NoiseModelFile<T>) -> Result<Self, Error> {
        let mut m = CompositeNoiseModel::noiseless();
        m.granularity = f.granularity;
        m.flags = f.flags;
        m.window = f.window;
        m.provenance = f.provenance;
        for e in f.readout {
            e.model.validate()?;
            if m.readout.insert(e.qubit, e.model).is_some() {
                return Err(Error::Parse(format!("duplicate readout entry for q{}", e.qubit)));
            }
        }
        for e in f.x_gate {
            m.x_gate.insert(e.qubit, DepolarizingParam::new(e.p)?);
        }
        for e in f.h_gate {
            m.h_gate.insert(e.qubit, DepolarizingParam::new(e.p)?);
        }
        for e in f.cnot {
            let [a, b] = e.qubits;
            if a == b {
                return Err(Error::Parse(format!("cnot entry on a single qubit {a}")));
            }
            m.cnot.insert(Coupling::new(a, b), DepolarizingParam::new(e.p_cnot)?);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::DeviceTopology;

    #[test]
    fn model_json_roundtrip() {
        let topo = DeviceTopology::line(3);
        let mut m = CompositeNoiseModel::uniform(&topo, ReadoutModel::aro(0.02, 0.07).unwrap(), 0.003, 0.02)
            .unwrap();
        m.readout.insert(1, ReadoutModel::sro(0.04).unwrap());
        m.window = Some("w1".into());
        let s = serde_json::to_string_pretty(&m).unwrap();
        assert!(s.contains(r#""model": "sro""#));
        assert!(s.contains(r#""p_cnot": 0.02"#));
        let back: CompositeNoiseModel<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_probability() {
        let s = r#"{"granularity":{"kind":"per_element"},"flags":{"readout_on":true,"cnot_dp_on":false},
                   "readout":[{"qubit":0,"model":"aro","p0":1.2,"p1":0.1}]}"#;
        assert!(serde_json::from_str::<CompositeNoiseModel<f64>>(s).is_err());
        let s = r#"{"granularity":{"kind":"subset_average","qubits":[0,1]},"flags":{"readout_on":true,"cnot_dp_on":true},
                   "cnot":[{"qubits":[1,0],"p_cnot":0.5}]}"#;
        let m: CompositeNoiseModel<f64> = serde_json::from_str(s).unwrap();
        assert_eq!(m.granularity, Granularity::SubsetAverage(vec![0, 1]));
        assert_eq!(m.cnot_for(0, 1).unwrap(), 0.5);
    }
}
