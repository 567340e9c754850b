//! Outcome distributions and shot counts.
//!
//! Outcome strings are written classical bit 0 first: the outcome where only
//! bit 0 reads 1 on a 3-bit register is `"100"`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Renders the low `n` bits of `mask`, bit 0 leftmost.
pub fn outcome_string(mask: u64, n: usize) -> String {
    (0..n)
        .map(|i| if mask >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parses an outcome string into a bit mask (bit 0 = first character).
pub fn parse_outcome(s: &str) -> Result<u64> {
    if s.len() > 64 {
        return Err(Error::Parse(format!("outcome '{s}' longer than 64 bits")));
    }
    s.chars().enumerate().try_fold(0u64, |acc, (i, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << i),
        _ => Err(Error::Parse(format!("outcome '{s}' is not a bit string"))),
    })
}

fn uniform_width<'a>(keys: impl Iterator<Item = &'a String>) -> Result<Option<usize>> {
    let mut width = None;
    for k in keys {
        parse_outcome(k)?;
        match width {
            None => width = Some(k.len()),
            Some(w) if w != k.len() => {
                return Err(Error::InvalidDistribution(format!(
                    "outcome '{k}' has {} bits, expected {w}",
                    k.len()
                )))
            }
            _ => {}
        }
    }
    Ok(width)
}

/// Exact probability distribution over `num_bits`-bit outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OutcomeDistribution<T> {
    num_bits: usize,
    probabilities: BTreeMap<String, T>,
}

impl<T: Real> OutcomeDistribution<T> {
    pub fn normalization_tolerance() -> T {
        T::lit(1e-9).max(T::epsilon() * T::lit(1024.0))
    }

    pub fn new(num_bits: usize, probabilities: BTreeMap<String, T>) -> Result<Self> {
        if let Some(w) = uniform_width(probabilities.keys())? {
            if w != num_bits {
                return Err(Error::ArityMismatch {
                    expected: num_bits,
                    found: w,
                });
            }
        }
        let mut total = T::zero();
        for (k, &p) in &probabilities {
            if p.is_nan() || p < T::zero() {
                return Err(Error::InvalidDistribution(format!("P({k}) = {p} is negative")));
            }
            total = total + p;
        }
        if (total - T::one()).abs() > Self::normalization_tolerance() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            num_bits,
            probabilities,
        })
    }

    /// Builds a distribution from a dense vector indexed by outcome mask.
    pub fn from_dense(num_bits: usize, dense: &[T]) -> Result<Self> {
        debug_assert_eq!(dense.len(), 1usize << num_bits);
        Self::from_masks(num_bits, dense.iter().enumerate().map(|(i, &p)| (i as u64, p)))
    }

    /// Builds a distribution from `(outcome mask, probability)` pairs,
    /// dropping floating-point residue below [`Real::chop`] and
    /// renormalizing. Repeated masks are summed.
    pub fn from_masks(num_bits: usize, entries: impl IntoIterator<Item = (u64, T)>) -> Result<Self> {
        let mut acc: BTreeMap<u64, T> = BTreeMap::new();
        for (m, p) in entries {
            let e = acc.entry(m).or_insert_with(T::zero);
            *e = *e + p;
        }
        let chop = T::chop();
        acc.retain(|_, p| *p > chop);
        let total: T = acc.values().copied().sum();
        let probabilities = acc
            .into_iter()
            .map(|(m, p)| (outcome_string(m, num_bits), p / total))
            .collect();
        Self::new(num_bits, probabilities)
    }

    /// All mass on one outcome.
    pub fn point(outcome: &str) -> Result<Self> {
        parse_outcome(outcome)?;
        Self::new(outcome.len(), BTreeMap::from([(outcome.to_string(), T::one())]))
    }

    pub fn from_counts(counts: &Counts) -> Result<Self> {
        if counts.shots() == 0 {
            return Err(Error::InvalidDistribution("no shots".into()));
        }
        let n = T::from_u64(counts.shots()).expect("shots representable");
        let probabilities = counts
            .iter()
            .map(|(k, c)| (k.to_string(), T::from_u64(c).expect("count representable") / n))
            .collect();
        Self::new(counts.num_bits().unwrap_or(0), probabilities)
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn probability(&self, outcome: &str) -> T {
        self.probabilities.get(outcome).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.probabilities.iter().map(|(k, &p)| (k.as_str(), p))
    }

    /// Outcomes with nonzero probability.
    pub fn support(&self) -> Vec<&str> {
        self.iter()
            .filter(|(_, p)| *p > T::zero())
            .map(|(k, _)| k)
            .collect()
    }

    /// Dense vector indexed by outcome mask (only for small widths).
    pub fn to_dense(&self) -> Vec<T> {
        let mut v = vec![T::zero(); 1usize << self.num_bits];
        for (k, p) in self.iter() {
            v[parse_outcome(k).expect("validated outcome") as usize] = p;
        }
        v
    }

    pub(crate) fn from_map_unchecked(num_bits: usize, probabilities: BTreeMap<String, T>) -> Self {
        Self {
            num_bits,
            probabilities,
        }
    }
}

#[derive(Deserialize)]
struct RawCounts {
    shots: u64,
    counts: BTreeMap<String, u64>,
}

/// Raw shot counts: `counts` sum to `shots`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCounts")]
pub struct Counts {
    shots: u64,
    counts: BTreeMap<String, u64>,
}

impl TryFrom<RawCounts> for Counts {
    type Error = Error;

    fn try_from(raw: RawCounts) -> Result<Self> {
        let c = Counts::new(raw.counts)?;
        if c.shots != raw.shots {
            return Err(Error::Parse(format!(
                "counts sum to {} but shots = {}",
                c.shots, raw.shots
            )));
        }
        Ok(c)
    }
}

impl Counts {
    /// Shots are the sum of the counts. Zero entries are dropped.
    pub fn new(mut counts: BTreeMap<String, u64>) -> Result<Self> {
        uniform_width(counts.keys())?;
        counts.retain(|_, c| *c > 0);
        let shots = counts.values().sum();
        Ok(Self { shots, counts })
    }

    pub(crate) fn from_masks(num_bits: usize, tally: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut counts = BTreeMap::new();
        for (mask, c) in tally {
            if c > 0 {
                *counts.entry(outcome_string(mask, num_bits)).or_insert(0) += c;
            }
        }
        let shots = counts.values().sum();
        Self { shots, counts }
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn get(&self, outcome: &str) -> u64 {
        self.counts.get(outcome).copied().unwrap_or(0)
    }

    pub fn frequency<T: Real>(&self, outcome: &str) -> T {
        if self.shots == 0 {
            return T::zero();
        }
        T::from_u64(self.get(outcome)).expect("count") / T::from_u64(self.shots).expect("shots")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_str(), c))
    }

    /// Bit width of the outcomes, `None` when there are no counts.
    pub fn num_bits(&self) -> Option<usize> {
        self.counts.keys().next().map(|k| k.len())
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// One record of a counts file: `{ "label", "shots", "counts" }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCounts {
    pub label: String,
    #[serde(flatten)]
    pub counts: Counts,
}

impl LabeledCounts {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Anything that can be read as outcome frequencies `f_k`.
pub trait Frequencies<T: Real> {
    /// Outcome width, `None` when empty.
    fn width(&self) -> Option<usize>;
    fn frequencies(&self) -> BTreeMap<&str, T>;
}

impl<T: Real> Frequencies<T> for Counts {
    fn width(&self) -> Option<usize> {
        self.num_bits()
    }

    fn frequencies(&self) -> BTreeMap<&str, T> {
        self.iter().map(|(k, _)| (k, self.frequency(k))).collect()
    }
}

impl<T: Real> Frequencies<T> for OutcomeDistribution<T> {
    fn width(&self) -> Option<usize> {
        Some(self.num_bits)
    }

    fn frequencies(&self) -> BTreeMap<&str, T> {
        self.iter().collect()
    }
}
