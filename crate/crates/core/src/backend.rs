//! Execution backends: a simulated QPU and recorded counts files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::CharacterizationArchive;
use crate::circuit::{validate, Circuit, DeviceTopology};
use crate::distribution::{Counts, LabeledCounts};
use crate::error::{Error, Result};
use crate::noise::CompositeNoiseModel;
use crate::rng::{derive_seed, SimRng};
use crate::simulator::{simulate_noisy_sampled_with, ClassicalChannel};
use crate::Real;

/// Anything that executes circuits and returns counts.
pub trait Backend: Sync {
    fn topology(&self) -> &DeviceTopology;
    fn max_shots(&self) -> u64;
    /// One `Counts` per circuit, in order.
    fn run(&self, circuits: &[Circuit], shots: u64, seed: u64) -> Result<Vec<Counts>>;
}

/// Noise the fitted model family cannot represent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HiddenEffects {
    /// Per-bit extra flip probability added per 1 in the pre-readout
    /// register value.
    #[serde(default)]
    pub state_dependent_readout: f64,
}

impl HiddenEffects {
    pub fn is_off(&self) -> bool {
        self.state_dependent_readout == 0.0
    }
}

impl ClassicalChannel for HiddenEffects {
    fn apply(&self, pre: u64, post: u64, measured: u64, rng: &mut SimRng) -> u64 {
        let ones = (pre & measured).count_ones() as f64;
        let p = (self.state_dependent_readout * ones).min(1.0);
        if p <= 0.0 {
            return post;
        }
        let mut out = post;
        let mut bits = measured;
        while bits != 0 {
            let b = bits.trailing_zeros();
            bits &= bits - 1;
            if rng.gen::<f64>() < p {
                out ^= 1 << b;
            }
        }
        out
    }
}

/// Ground-truth noise for the mock QPU. On disk: a noise-model file with
/// an optional `hidden_effects` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MockGroundTruth<T: Real> {
    #[serde(flatten)]
    pub model: CompositeNoiseModel<T>,
    #[serde(default, skip_serializing_if = "HiddenEffects::is_off")]
    pub hidden_effects: HiddenEffects,
}

impl<T: Real> MockGroundTruth<T> {
    pub fn new(model: CompositeNoiseModel<T>) -> Self {
        Self {
            model,
            hidden_effects: HiddenEffects::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let truth: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let s = truth.hidden_effects.state_dependent_readout;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::ProbabilityOutOfRange {
                name: "state_dependent_readout".into(),
                value: s,
            });
        }
        Ok(truth)
    }
}

/// Simulated QPU: sampled trajectories under a hidden ground truth.
#[derive(Debug, Clone)]
pub struct MockBackend<T: Real> {
    topology: DeviceTopology,
    truth: MockGroundTruth<T>,
    max_shots: u64,
}

impl<T: Real> MockBackend<T> {
    pub const DEFAULT_MAX_SHOTS: u64 = 1 << 20;

    pub fn new(topology: DeviceTopology, truth: MockGroundTruth<T>) -> Self {
        Self {
            topology,
            truth,
            max_shots: Self::DEFAULT_MAX_SHOTS,
        }
    }

    pub fn with_max_shots(mut self, max_shots: u64) -> Self {
        self.max_shots = max_shots;
        self
    }

    pub fn truth(&self) -> &MockGroundTruth<T> {
        &self.truth
    }
}

impl<T: Real> Backend for MockBackend<T> {
    fn topology(&self) -> &DeviceTopology {
        &self.topology
    }

    fn max_shots(&self) -> u64 {
        self.max_shots
    }

    /// Circuit `i` is sampled with the sub-seed `derive_seed(seed, i)`.
    fn run(&self, circuits: &[Circuit], shots: u64, seed: u64) -> Result<Vec<Counts>> {
        for c in circuits {
            validate(c, &self.topology)?;
        }
        let hidden = (!self.truth.hidden_effects.is_off()).then_some(&self.truth.hidden_effects as &dyn ClassicalChannel);
        circuits
            .par_iter()
            .enumerate()
            .map(|(i, c)| simulate_noisy_sampled_with(c, &self.truth.model, shots, derive_seed(seed, i as u64), hidden))
            .collect()
    }
}

/// Replays recorded counts, matched to circuits by label.
#[derive(Debug, Clone)]
pub struct FileBackend {
    topology: DeviceTopology,
    counts: BTreeMap<String, Counts>,
}

impl FileBackend {
    pub fn new(topology: DeviceTopology, counts: BTreeMap<String, Counts>) -> Self {
        Self { topology, counts }
    }

    pub fn open(topology: DeviceTopology, path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(topology, load_counts(path)?))
    }
}

impl Backend for FileBackend {
    fn topology(&self) -> &DeviceTopology {
        &self.topology
    }

    fn max_shots(&self) -> u64 {
        u64::MAX
    }

    /// `seed` is ignored; recorded shot counts must equal `shots`.
    fn run(&self, circuits: &[Circuit], shots: u64, _seed: u64) -> Result<Vec<Counts>> {
        let missing: Vec<String> = circuits
            .iter()
            .filter(|c| !self.counts.contains_key(&c.label))
            .map(|c| c.label.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::LabelMismatch { missing });
        }
        circuits
            .iter()
            .map(|c| {
                let counts = &self.counts[&c.label];
                if counts.shots() != shots {
                    return Err(Error::InvalidConfig(format!(
                        "{}: recorded {} shots, requested {shots}",
                        c.label,
                        counts.shots()
                    )));
                }
                Ok(counts.clone())
            })
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CountsFile {
    Archive(CharacterizationArchive),
    List(Vec<LabeledCounts>),
    Single(LabeledCounts),
}

/// Reads labeled counts from a characterization archive, a JSON list of
/// counts records or a single record.
pub fn load_counts(path: impl AsRef<Path>) -> Result<BTreeMap<String, Counts>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let records: Vec<(String, Counts)> = match serde_json::from_value::<CountsFile>(value.clone()) {
        Ok(CountsFile::Archive(a)) => a.entries.into_iter().map(|e| (e.label, e.counts)).collect(),
        Ok(CountsFile::List(l)) => l.into_iter().map(|e| (e.label, e.counts)).collect(),
        Ok(CountsFile::Single(e)) => vec![(e.label, e.counts)],
        // retry the likeliest shape to surface a specific message
        Err(_) => match value.get("entries") {
            Some(_) => serde_json::from_value::<CharacterizationArchive>(value)
                .map(|_| Vec::new())
                .map_err(|e| Error::Parse(e.to_string()))?,
            None => serde_json::from_value::<Vec<LabeledCounts>>(value)
                .map(|_| Vec::new())
                .map_err(|e| Error::Parse(e.to_string()))?,
        },
    };
    let mut out = BTreeMap::new();
    for (label, counts) in records {
        if out.insert(label.clone(), counts).is_some() {
            return Err(Error::Parse(format!("duplicate label '{label}'")));
        }
    }
    Ok(out)
}
