//! Noise channels and the composite, spatially resolved device model.
//!
//! Gate noise is an isotropic depolarizing channel applied after the ideal
//! gate: with probability `p` one of `X`, `Y`, `Z` (each `p/3`). A CNOT
//! carries two independent single-qubit channels with the same parameter.
//! Readout noise acts on the classical bit after measurement through the
//! column-stochastic matrix `[[1-p0, p1], [p0, 1-p1]]`.

mod file;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Coupling, DeviceTopology, GateKind};
use crate::distribution::{outcome_string, parse_outcome, OutcomeDistribution};
use crate::error::{check_probability, Error, Result};
use crate::Real;

pub use file::{CnotEntry, NoiseModelFile, ReadoutEntry, SingleQubitEntry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", bound = "T: Real")]
pub enum ReadoutModel<T> {
    /// One flip probability for both states.
    Sro { p_sro: T },
    /// `p0`: P(read 1 | state 0); `p1`: P(read 0 | state 1).
    Aro { p0: T, p1: T },
}

impl<T: Real> ReadoutModel<T> {
    pub fn sro(p_sro: T) -> Result<Self> {
        Ok(Self::Sro {
            p_sro: check_probability("p_sro", p_sro)?,
        })
    }

    pub fn aro(p0: T, p1: T) -> Result<Self> {
        Ok(Self::Aro {
            p0: check_probability("p0", p0)?,
            p1: check_probability("p1", p1)?,
        })
    }

    pub fn ideal() -> Self {
        Self::Aro {
            p0: T::zero(),
            p1: T::zero(),
        }
    }

    pub fn p0(&self) -> T {
        match *self {
            Self::Sro { p_sro } => p_sro,
            Self::Aro { p0, .. } => p0,
        }
    }

    pub fn p1(&self) -> T {
        match *self {
            Self::Sro { p_sro } => p_sro,
            Self::Aro { p1, .. } => p1,
        }
    }

    /// Probability that a bit with true value `bit` is read flipped.
    pub fn flip_probability(&self, bit: bool) -> T {
        if bit {
            self.p1()
        } else {
            self.p0()
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.p0() == T::zero() && self.p1() == T::zero()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_probability("p0", self.p0())?;
        check_probability("p1", self.p1())?;
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        match self {
            Self::Sro { .. } => 1,
            Self::Aro { .. } => 2,
        }
    }
}

/// Depolarizing probability `p` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct DepolarizingParam<T>(T);

impl<T: Real> DepolarizingParam<T> {
    pub fn new(p: T) -> Result<Self> {
        Ok(Self(check_probability("p", p)?))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn value(&self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "qubits", rename_all = "snake_case")]
pub enum Granularity {
    PerElement,
    RegisterAverage,
    SubsetAverage(Vec<usize>),
}

/// `per-element`, `register` or `subset:<q1,q2,...>`.
impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-element" | "spatial" => Ok(Granularity::PerElement),
            "register" => Ok(Granularity::RegisterAverage),
            _ => {
                let list = s
                    .strip_prefix("subset:")
                    .ok_or_else(|| Error::Parse(format!("unknown granularity '{s}'")))?;
                let qubits = list
                    .split(',')
                    .map(|q| q.trim().parse().map_err(|_| Error::Parse(format!("bad qubit '{q}' in '{s}'"))))
                    .collect::<Result<Vec<usize>>>()?;
                Ok(Granularity::SubsetAverage(qubits))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NoiseFlags {
    pub readout_on: bool,
    pub cnot_dp_on: bool,
    /// Gates the `x_gate` / `h_gate` channels.
    #[serde(default)]
    pub single_qubit_dp_on: bool,
}

impl NoiseFlags {
    pub fn all() -> Self {
        Self {
            readout_on: true,
            cnot_dp_on: true,
            single_qubit_dp_on: true,
        }
    }
}

/// Readout family used by a model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutKind {
    Sro,
    Aro,
}

/// The composite-model ablations compared on the Bell circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelVariant {
    Noiseless,
    Sro,
    Aro,
    Dp,
    SroDp,
    AroDp,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Noiseless,
        ModelVariant::Sro,
        ModelVariant::Aro,
        ModelVariant::Dp,
        ModelVariant::SroDp,
        ModelVariant::AroDp,
    ];

    pub fn flags(self) -> NoiseFlags {
        let (readout_on, cnot_dp_on) = match self {
            ModelVariant::Noiseless => (false, false),
            ModelVariant::Sro | ModelVariant::Aro => (true, false),
            ModelVariant::Dp => (false, true),
            ModelVariant::SroDp | ModelVariant::AroDp => (true, true),
        };
        NoiseFlags {
            readout_on,
            cnot_dp_on,
            single_qubit_dp_on: false,
        }
    }

    /// Readout family the variant simulates with, if any.
    pub fn readout_kind(self) -> Option<ReadoutKind> {
        match self {
            ModelVariant::Sro | ModelVariant::SroDp => Some(ReadoutKind::Sro),
            ModelVariant::Aro | ModelVariant::AroDp => Some(ReadoutKind::Aro),
            ModelVariant::Noiseless | ModelVariant::Dp => None,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Noiseless => "noiseless",
            ModelVariant::Sro => "sro",
            ModelVariant::Aro => "aro",
            ModelVariant::Dp => "dp",
            ModelVariant::SroDp => "sro+dp",
            ModelVariant::AroDp => "aro+dp",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "noiseless" | "none" => ModelVariant::Noiseless,
            "sro" => ModelVariant::Sro,
            "aro" => ModelVariant::Aro,
            "dp" => ModelVariant::Dp,
            "sro+dp" => ModelVariant::SroDp,
            "aro+dp" => ModelVariant::AroDp,
            other => return Err(Error::Parse(format!("unknown model variant '{other}'"))),
        })
    }
}

/// Per-element readout and depolarizing parameters for a device.
///
/// Averaged granularities hold constant maps over the elements they were
/// fitted on; lookups for other elements fall back to the map average,
/// which is the same broadcast that [`expand_granularity`] materializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    bound = "T: Real",
    try_from = "NoiseModelFile<T>",
    into = "NoiseModelFile<T>"
)]
pub struct CompositeNoiseModel<T: Real> {
    pub granularity: Granularity,
    pub flags: NoiseFlags,
    pub readout: BTreeMap<usize, ReadoutModel<T>>,
    pub x_gate: BTreeMap<usize, DepolarizingParam<T>>,
    pub h_gate: BTreeMap<usize, DepolarizingParam<T>>,
    pub cnot: BTreeMap<Coupling, DepolarizingParam<T>>,
    /// Calibration-window tag the parameters belong to.
    pub window: Option<String>,
    /// Hash of the characterization data the model was fitted from.
    pub provenance: Option<String>,
}

impl<T: Real> Default for CompositeNoiseModel<T> {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl<T: Real> CompositeNoiseModel<T> {
    pub fn noiseless() -> Self {
        Self {
            granularity: Granularity::PerElement,
            flags: NoiseFlags::default(),
            readout: BTreeMap::new(),
            x_gate: BTreeMap::new(),
            h_gate: BTreeMap::new(),
            cnot: BTreeMap::new(),
            window: None,
            provenance: None,
        }
    }

    /// Same parameters on every qubit and link of `topo`, all flags on.
    pub fn uniform(
        topo: &DeviceTopology,
        readout: ReadoutModel<T>,
        p_x: T,
        p_cnot: T,
    ) -> Result<Self> {
        let px = DepolarizingParam::new(p_x)?;
        let pc = DepolarizingParam::new(p_cnot)?;
        readout.validate()?;
        let qubits = 0..topo.num_qubits();
        Ok(Self {
            granularity: Granularity::PerElement,
            flags: NoiseFlags::all(),
            readout: qubits.clone().map(|q| (q, readout)).collect(),
            x_gate: qubits.map(|q| (q, px)).collect(),
            h_gate: BTreeMap::new(),
            cnot: topo.links().into_iter().map(|l| (l, pc)).collect(),
            window: None,
            provenance: None,
        })
    }

    fn averaged(&self) -> bool {
        !matches!(self.granularity, Granularity::PerElement)
    }

    /// Readout channel applied to qubit `q`'s measurement.
    pub fn readout_for(&self, q: usize) -> Result<ReadoutModel<T>> {
        if !self.flags.readout_on {
            return Ok(ReadoutModel::ideal());
        }
        if let Some(r) = self.readout.get(&q) {
            return Ok(*r);
        }
        if self.averaged() {
            if let Some(r) = average_readout(self.readout.values()) {
                return Ok(r);
            }
        }
        Err(Error::MissingCoverage {
            missing: vec![format!("readout q{q}")],
        })
    }

    pub fn x_for(&self, q: usize) -> Result<T> {
        if !self.flags.single_qubit_dp_on {
            return Ok(T::zero());
        }
        lookup_single(&self.x_gate, q, self.averaged()).ok_or_else(|| Error::MissingCoverage {
            missing: vec![format!("x q{q}")],
        })
    }

    /// Hadamard noise; absent entries mean a noiseless H.
    pub fn h_for(&self, q: usize) -> T {
        if !self.flags.single_qubit_dp_on {
            return T::zero();
        }
        lookup_single(&self.h_gate, q, self.averaged()).unwrap_or_else(T::zero)
    }

    pub fn cnot_for(&self, a: usize, b: usize) -> Result<T> {
        if !self.flags.cnot_dp_on {
            return Ok(T::zero());
        }
        let link = Coupling::new(a, b);
        if let Some(p) = self.cnot.get(&link) {
            return Ok(p.value());
        }
        if self.averaged() && !self.cnot.is_empty() {
            return Ok(mean(self.cnot.values().map(|p| p.value())));
        }
        Err(Error::MissingCoverage {
            missing: vec![format!("cnot {link}")],
        })
    }

    /// Checks that every element a circuit touches has parameters.
    pub fn check_coverage(&self, circuit: &Circuit) -> Result<()> {
        let mut missing = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(Error::MissingCoverage { missing: m }) = r {
                missing.extend(m);
            }
        };
        for g in &circuit.gates {
            match *g {
                GateKind::X { target } => note(self.x_for(target).map(drop)),
                GateKind::Cnot { control, target } => note(self.cnot_for(control, target).map(drop)),
                GateKind::Measure { target, .. } => note(self.readout_for(target).map(drop)),
                GateKind::H { .. } | GateKind::Identity { .. } => {}
            }
        }
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingCoverage { missing })
        }
    }

    /// Number of free parameters the enabled channels carry.
    pub fn parameter_count(&self) -> usize {
        let averaged = self.averaged();
        let mut n = 0;
        if self.flags.readout_on {
            n += if averaged {
                average_readout(self.readout.values()).map_or(0, |r| r.parameter_count())
            } else {
                self.readout.values().map(|r| r.parameter_count()).sum()
            };
        }
        if self.flags.cnot_dp_on {
            n += if averaged { usize::from(!self.cnot.is_empty()) } else { self.cnot.len() };
        }
        if self.flags.single_qubit_dp_on {
            for m in [&self.x_gate, &self.h_gate] {
                n += if averaged { usize::from(!m.is_empty()) } else { m.len() };
            }
        }
        n
    }

    /// `true` when no enabled channel has a nonzero parameter.
    pub fn is_noiseless(&self) -> bool {
        let z = T::zero();
        (!self.flags.readout_on || self.readout.values().all(|r| r.is_ideal()))
            && (!self.flags.cnot_dp_on || self.cnot.values().all(|p| p.value() == z))
            && (!self.flags.single_qubit_dp_on
                || self.x_gate.values().chain(self.h_gate.values()).all(|p| p.value() == z))
    }

    pub fn validate(&self) -> Result<()> {
        for r in self.readout.values() {
            r.validate()?;
        }
        for p in self.x_gate.values().chain(self.h_gate.values()).chain(self.cnot.values()) {
            check_probability("p", p.value())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn mean<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        T::zero()
    } else {
        sum / T::from_usize_lossy(n)
    }
}

fn lookup_single<T: Real>(map: &BTreeMap<usize, DepolarizingParam<T>>, q: usize, averaged: bool) -> Option<T> {
    match map.get(&q) {
        Some(p) => Some(p.value()),
        None if averaged && !map.is_empty() => Some(mean(map.values().map(|p| p.value()))),
        None => None,
    }
}

/// Averages readout models; all-SRO input stays SRO.
fn average_readout<'a, T: Real>(
    models: impl Iterator<Item = &'a ReadoutModel<T>> + Clone,
) -> Option<ReadoutModel<T>> {
    let n = models.clone().count();
    if n == 0 {
        return None;
    }
    let all_sro = models.clone().all(|r| matches!(r, ReadoutModel::Sro { .. }));
    let p0 = mean(models.clone().map(|r| r.p0()));
    if all_sro {
        Some(ReadoutModel::Sro { p_sro: p0 })
    } else {
        Some(ReadoutModel::Aro {
            p0,
            p1: mean(models.map(|r| r.p1())),
        })
    }
}

/// Closed-form `(g_X(0), g_XX(0))`: probability of reading 0 after one and
/// after two noisy X gates on `|0>`.
pub fn predicted_x_test_frequencies<T: Real>(p0: T, p1: T, p_x: T) -> Result<(T, T)> {
    check_probability("p0", p0)?;
    check_probability("p1", p1)?;
    check_probability("p_x", p_x)?;
    Ok(x_test_frequencies_unchecked(p0, p1, p_x))
}

/// Same as [`predicted_x_test_frequencies`] without range checks, for the
/// root finder which may step outside `[0, 1]`.
pub(crate) fn x_test_frequencies_unchecked<T: Real>(p0: T, p1: T, p_x: T) -> (T, T) {
    let one = T::one();
    let flip = T::lit(2.0) * p_x / T::lit(3.0);
    let g_x = flip * (one - p0) + p1 * (one - flip);
    let stay = (one - flip).powi(2) + flip.powi(2);
    let g_xx = (one - p0) * stay + p1 * (T::lit(4.0) * p_x / T::lit(3.0) * (one - flip));
    (g_x, g_xx)
}

/// Bell-test outcome frequencies with both qubits depolarized by `p_cnot`
/// and ideal readout.
pub fn bell_frequencies<T: Real>(p_cnot: T) -> Result<OutcomeDistribution<T>> {
    check_probability("p_cnot", p_cnot)?;
    let odd = T::lit(2.0) / T::lit(3.0) * p_cnot - T::lit(4.0) / T::lit(9.0) * p_cnot * p_cnot;
    let even = T::lit(0.5) - odd;
    Ok(OutcomeDistribution::from_map_unchecked(
        2,
        BTreeMap::from([
            ("00".to_string(), even),
            ("01".to_string(), odd),
            ("10".to_string(), odd),
            ("11".to_string(), even),
        ]),
    ))
}

/// Applies independent per-bit readout channels; `readout[i]` acts on
/// classical bit `i`.
pub fn apply_readout_to_distribution<T: Real>(
    dist: &OutcomeDistribution<T>,
    readout: &[ReadoutModel<T>],
) -> Result<OutcomeDistribution<T>> {
    if readout.len() != dist.num_bits() {
        return Err(Error::ArityMismatch {
            expected: dist.num_bits(),
            found: readout.len(),
        });
    }
    let n = dist.num_bits();
    let mut current: BTreeMap<u64, T> = dist
        .iter()
        .map(|(k, p)| (parse_outcome(k).expect("validated outcome"), p))
        .collect();
    for (bit, model) in readout.iter().enumerate() {
        let mut next = BTreeMap::new();
        for (&mask, &p) in &current {
            let flip = model.flip_probability(mask >> bit & 1 == 1);
            let kept = next.entry(mask).or_insert_with(T::zero);
            *kept = *kept + p * (T::one() - flip);
            if flip > T::zero() {
                let flipped = next.entry(mask ^ (1 << bit)).or_insert_with(T::zero);
                *flipped = *flipped + p * flip;
            }
        }
        current = next;
    }
    Ok(OutcomeDistribution::from_map_unchecked(
        n,
        current
            .into_iter()
            .map(|(m, p)| (outcome_string(m, n), p))
            .collect(),
    ))
}

/// Broadcasts an averaged model to constant per-element maps over `topo`.
///
/// `RegisterAverage` averages every entry; `SubsetAverage(qs)` averages
/// qubit entries in `qs` and couplings with both ends in `qs`.
pub fn expand_granularity<T: Real>(
    model: &CompositeNoiseModel<T>,
    topo: &DeviceTopology,
) -> CompositeNoiseModel<T> {
    let in_scope: Box<dyn Fn(usize) -> bool> = match &model.granularity {
        Granularity::PerElement => return model.clone(),
        Granularity::RegisterAverage => Box::new(|_| true),
        Granularity::SubsetAverage(qs) => {
            let qs = qs.clone();
            Box::new(move |q| qs.contains(&q))
        }
    };
    let readout = average_readout(
        model
            .readout
            .iter()
            .filter(|(q, _)| in_scope(**q))
            .map(|(_, r)| r)
            .collect::<Vec<_>>()
            .into_iter(),
    );
    let single = |m: &BTreeMap<usize, DepolarizingParam<T>>| {
        let vals: Vec<T> = m.iter().filter(|(q, _)| in_scope(**q)).map(|(_, p)| p.value()).collect();
        (!vals.is_empty()).then(|| DepolarizingParam(mean(vals.into_iter())))
    };
    let x = single(&model.x_gate);
    let h = single(&model.h_gate);
    let cnot_vals: Vec<T> = model
        .cnot
        .iter()
        .filter(|(l, _)| in_scope(l.low()) && in_scope(l.high()))
        .map(|(_, p)| p.value())
        .collect();
    let cnot = (!cnot_vals.is_empty()).then(|| DepolarizingParam(mean(cnot_vals.into_iter())));

    let qubits = 0..topo.num_qubits();
    let broadcast = |v: Option<DepolarizingParam<T>>| -> BTreeMap<usize, DepolarizingParam<T>> {
        v.map(|p| qubits.clone().map(|q| (q, p)).collect()).unwrap_or_default()
    };
    CompositeNoiseModel {
        granularity: Granularity::PerElement,
        flags: model.flags,
        readout: readout
            .map(|r| qubits.clone().map(|q| (q, r)).collect())
            .unwrap_or_default(),
        x_gate: broadcast(x),
        h_gate: broadcast(h),
        cnot: cnot
            .map(|p| topo.links().into_iter().map(|l| (l, p)).collect())
            .unwrap_or_default(),
        window: model.window.clone(),
        provenance: model.provenance.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn x_test_zero_gate_noise() {
        let (gx, gxx) = predicted_x_test_frequencies(0.03, 0.08, 0.0).unwrap();
        assert_eq!((gx, gxx), (0.08, 0.97));
    }

    #[test]
    fn x_test_ideal_readout() {
        let px = 0.01;
        let (gx, gxx) = predicted_x_test_frequencies(0.0, 0.0, px).unwrap();
        let u = 2.0 * px / 3.0;
        assert!(close(gx, u, 1e-15));
        assert!(close(gxx, (1.0 - u).powi(2) + u * u, 1e-15));
    }

    #[test]
    fn x_test_device_averages() {
        // (2*0.0033/3)(1-0.0212) + 0.0681(1 - 2*0.0033/3), evaluated by hand
        let (gx, _) = predicted_x_test_frequencies(0.0212, 0.0681, 0.0033).unwrap();
        let expected = 0.0022 * 0.9788 + 0.0681 * 0.9978;
        assert!(close(gx, expected, 1e-15));
        assert!(close(gx, 0.07010, 5e-6));
    }

    #[test]
    fn x_test_rejects_out_of_range() {
        assert!(predicted_x_test_frequencies(-0.1, 0.0, 0.0).is_err());
        assert!(predicted_x_test_frequencies(0.0, 1.1, 0.0).is_err());
    }

    #[test]
    fn bell_examples() {
        let d = bell_frequencies(0.0).unwrap();
        assert_eq!(d.probability("00"), 0.5);
        assert_eq!(d.probability("01"), 0.0);
        let d = bell_frequencies(0.75).unwrap();
        for k in ["00", "01", "10", "11"] {
            assert!(close(d.probability(k), 0.25, 1e-15));
        }
        let d = bell_frequencies(0.05).unwrap();
        // 1/2 - (2/3)(0.05) + (4/9)(0.0025) = 0.467777...
        assert!(close(d.probability("00"), 0.5 - 0.1 / 3.0 + 0.01 / 9.0, 1e-15));
        assert!(close(d.probability("11"), 0.46778, 5e-6));
        assert!(close(d.probability("10"), 0.03222, 5e-6));
        assert!(bell_frequencies(1.5).is_err());
    }

    #[test]
    fn bell_is_generic_over_f32() {
        let d = bell_frequencies(0.05f32).unwrap();
        assert!((d.probability("01") - 0.032222f32).abs() < 1e-6);
    }

    #[test]
    fn readout_identity_and_full_randomization() {
        let d = bell_frequencies(0.1).unwrap();
        let same = apply_readout_to_distribution(&d, &[ReadoutModel::ideal(); 2]).unwrap();
        for (k, p) in d.iter() {
            assert_eq!(same.probability(k), p);
        }
        let ghz = bell_frequencies(0.0).unwrap();
        let half = ReadoutModel::sro(0.5).unwrap();
        let u = apply_readout_to_distribution(&ghz, &[half, half]).unwrap();
        for k in ["00", "01", "10", "11"] {
            assert!(close(u.probability(k), 0.25, 1e-15));
        }
        assert!(matches!(
            apply_readout_to_distribution(&ghz, &[half]),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn readout_matches_hand_expansion() {
        let (p0, p1) = (0.02, 0.07);
        let f = bell_frequencies(0.05).unwrap();
        let r = ReadoutModel::aro(p0, p1).unwrap();
        let h = apply_readout_to_distribution(&f, &[r, r]).unwrap();
        let (f00, f01, f10, f11) = (
            f.probability("00"),
            f.probability("01"),
            f.probability("10"),
            f.probability("11"),
        );
        let h00 = (1.0 - p0) * (1.0 - p0) * f00 + (1.0 - p0) * p1 * f01 + p1 * (1.0 - p0) * f10 + p1 * p1 * f11;
        assert!(close(h.probability("00"), h00, 1e-12));
        let h11 = p0 * p0 * f00 + p0 * (1.0 - p1) * f01 + (1.0 - p1) * p0 * f10 + (1.0 - p1) * (1.0 - p1) * f11;
        assert!(close(h.probability("11"), h11, 1e-12));
    }

    #[test]
    fn register_average_broadcasts() {
        let topo = DeviceTopology::poughkeepsie();
        let mut m = CompositeNoiseModel::<f64>::noiseless();
        m.granularity = Granularity::RegisterAverage;
        m.flags = NoiseFlags::all();
        m.readout.insert(0, ReadoutModel::aro(0.0212, 0.0681).unwrap());
        m.cnot.insert(Coupling::new(0, 1), DepolarizingParam::new(0.03).unwrap());
        let e = expand_granularity(&m, &topo);
        assert_eq!(e.granularity, Granularity::PerElement);
        assert_eq!(e.readout.len(), 20);
        assert!(e.readout.values().all(|r| *r == ReadoutModel::Aro { p0: 0.0212, p1: 0.0681 }));
        assert_eq!(e.cnot.len(), 23);
        // expansion is idempotent
        assert_eq!(expand_granularity(&e, &topo), e);
    }

    #[test]
    fn subset_average_uses_subset_only() {
        let topo = DeviceTopology::line(3);
        let mut m = CompositeNoiseModel::<f64>::noiseless();
        m.granularity = Granularity::SubsetAverage(vec![0, 1]);
        m.flags = NoiseFlags::all();
        m.readout.insert(0, ReadoutModel::aro(0.01, 0.05).unwrap());
        m.readout.insert(1, ReadoutModel::aro(0.03, 0.07).unwrap());
        m.readout.insert(2, ReadoutModel::aro(0.5, 0.5).unwrap());
        m.cnot.insert(Coupling::new(0, 1), DepolarizingParam::new(0.02).unwrap());
        m.cnot.insert(Coupling::new(1, 2), DepolarizingParam::new(0.4).unwrap());
        let e = expand_granularity(&m, &topo);
        let r = e.readout[&2];
        assert!(close(r.p0(), 0.02, 1e-15) && close(r.p1(), 0.06, 1e-15));
        assert_eq!(e.cnot[&Coupling::new(1, 2)].value(), 0.02);
    }

    #[test]
    fn flags_gate_lookups() {
        let topo = DeviceTopology::line(2);
        let mut m =
            CompositeNoiseModel::uniform(&topo, ReadoutModel::aro(0.1, 0.2).unwrap(), 0.01, 0.05).unwrap();
        assert_eq!(m.cnot_for(1, 0).unwrap(), 0.05);
        m.flags.cnot_dp_on = false;
        m.flags.readout_on = false;
        assert_eq!(m.cnot_for(0, 1).unwrap(), 0.0);
        assert!(m.readout_for(0).unwrap().is_ideal());
        assert!(m.readout_for(7).is_ok());
        m.flags.readout_on = true;
        assert!(matches!(m.readout_for(7), Err(Error::MissingCoverage { .. })));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
        }
        assert!("aro+xx".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn granularity_spellings() {
        assert_eq!("per-element".parse::<Granularity>().unwrap(), Granularity::PerElement);
        assert_eq!("register".parse::<Granularity>().unwrap(), Granularity::RegisterAverage);
        assert_eq!(
            "subset:2, 3".parse::<Granularity>().unwrap(),
            Granularity::SubsetAverage(vec![2, 3])
        );
        assert!("subset:a".parse::<Granularity>().is_err());
        assert!("global".parse::<Granularity>().is_err());
    }

    proptest! {
        // readout application keeps a valid distribution
        #[test]
        fn readout_is_stochastic(
            raw in prop::collection::vec(0.0f64..1.0, 8),
            ps in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 3),
        ) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let dense: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / 8.0) / total).collect();
            let d = OutcomeDistribution::from_dense(3, &dense).unwrap();
            let models: Vec<_> = ps.iter().map(|&(a, b)| ReadoutModel::aro(a, b).unwrap()).collect();
            let out = apply_readout_to_distribution(&d, &models).unwrap();
            let sum: f64 = out.iter().map(|(_, p)| p).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|(_, p)| p >= 0.0));
        }

        #[test]
        fn sro_equals_aro_with_equal_rates(p in 0.0f64..=1.0, pc in 0.0f64..=1.0) {
            let f = bell_frequencies(pc).unwrap();
            let a = apply_readout_to_distribution(&f, &[ReadoutModel::aro(p, p).unwrap(); 2]).unwrap();
            let s = apply_readout_to_distribution(&f, &[ReadoutModel::sro(p).unwrap(); 2]).unwrap();
            prop_assert_eq!(a, s);
        }
    }
}
