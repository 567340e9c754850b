//! Model scoring by total variation distance, comparison, selection and
//! scaling analysis.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterization::Characterization;
use crate::circuit::{Circuit, DeviceTopology};
use crate::distribution::{Counts, Frequencies};
use crate::error::{Error, Result};
use crate::estimation::{fit_composite, FitConfig};
use crate::noise::{CompositeNoiseModel, Granularity, ModelVariant};
use crate::rng::derive_seed;
use crate::simulator::{simulate_noisy_exact, simulate_noisy_sampled};
use crate::Real;

/// Total variation distance: half the L1 distance between outcome
/// frequencies over the union of supports.
pub fn tvd<T: Real>(a: &impl Frequencies<T>, b: &impl Frequencies<T>) -> Result<T> {
    if let (Some(wa), Some(wb)) = (a.width(), b.width()) {
        if wa != wb {
            return Err(Error::ArityMismatch { expected: wa, found: wb });
        }
    }
    let (fa, fb) = (a.frequencies(), b.frequencies());
    let keys: BTreeSet<&str> = fa.keys().chain(fb.keys()).copied().collect();
    let sum: T = keys
        .into_iter()
        .map(|k| {
            let x = fa.get(k).copied().unwrap_or_else(T::zero);
            let y = fb.get(k).copied().unwrap_or_else(T::zero);
            (x - y).abs()
        })
        .sum();
    Ok((sum / T::lit(2.0)).min(T::one()))
}

/// An application circuit with its observed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationRun {
    pub circuit: Circuit,
    pub counts: Counts,
}

impl ApplicationRun {
    pub fn new(circuit: Circuit, counts: Counts) -> Result<Self> {
        if counts.shots() == 0 {
            return Err(Error::InvalidConfig(format!("{}: run has no shots", circuit.label)));
        }
        let measured = circuit.measurements().len();
        if let Some(w) = counts.num_bits() {
            if w != circuit.num_clbits {
                return Err(Error::ArityMismatch {
                    expected: circuit.num_clbits,
                    found: w,
                });
            }
        }
        if measured != circuit.num_clbits {
            return Err(Error::InvalidCircuit(format!(
                "{}: {measured} of {} classical bits are measured",
                circuit.label, circuit.num_clbits
            )));
        }
        Ok(Self { circuit, counts })
    }
}

/// Scoring protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub sim_shots: u64,
    pub resamples: usize,
    pub seed: u64,
    /// Score against the exact model distribution instead of resampling.
    #[serde(default)]
    pub exact: bool,
}

impl ScoreConfig {
    pub fn sampled(sim_shots: u64, resamples: usize, seed: u64) -> Self {
        Self {
            sim_shots,
            resamples,
            seed,
            exact: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelScore<T> {
    pub id: String,
    /// Mean TVD over resamples.
    pub tvd: T,
    /// Standard deviation of TVD over resamples.
    pub tvd_std: T,
    pub tvd_per_cnot: T,
    pub cnot_count: usize,
    pub param_count: usize,
    pub resamples: usize,
}

fn mean_std<T: Real>(v: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(v.len().max(1));
    let mean = v.iter().copied().sum::<T>() / n;
    if v.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = v.iter().map(|x| (*x - mean) * (*x - mean)).sum();
    (mean, (ss / T::from_usize_lossy(v.len() - 1)).sqrt())
}

/// Scores `model` against a run. Resample `r` is simulated with seed
/// `derive_seed(seed, r)`, so every model sees the same random streams.
pub fn score_model<T: Real>(
    run: &ApplicationRun,
    model: &CompositeNoiseModel<T>,
    id: &str,
    cfg: &ScoreConfig,
) -> Result<ModelScore<T>> {
    model.check_coverage(&run.circuit)?;
    let values: Vec<T> = if cfg.exact {
        vec![tvd(&run.counts, &simulate_noisy_exact(&run.circuit, model)?)?]
    } else {
        if cfg.resamples == 0 || cfg.sim_shots == 0 {
            return Err(Error::InvalidConfig("resamples and sim_shots must be positive".into()));
        }
        (0..cfg.resamples)
            .into_par_iter()
            .map(|r| {
                let sim = simulate_noisy_sampled(&run.circuit, model, cfg.sim_shots, derive_seed(cfg.seed, r as u64))?;
                tvd(&run.counts, &sim)
            })
            .collect::<Result<_>>()?
    };
    let (mean, std) = mean_std(&values);
    let cnot_count = run.circuit.census().cnot;
    Ok(ModelScore {
        id: id.to_string(),
        tvd: mean,
        tvd_std: std,
        tvd_per_cnot: mean / T::from_usize_lossy(cnot_count.max(1)),
        cnot_count,
        param_count: model.parameter_count(),
        resamples: values.len(),
    })
}

fn rank<T: Real>(scores: &mut [ModelScore<T>]) {
    scores.sort_by(|a, b| {
        a.tvd
            .partial_cmp(&b.tvd)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.param_count.cmp(&b.param_count))
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Scores every variant under one protocol and ranks them by mean TVD,
/// then by fewer parameters.
pub fn compare_models<T: Real>(
    run: &ApplicationRun,
    variants: &[(String, CompositeNoiseModel<T>)],
    cfg: &ScoreConfig,
) -> Result<Vec<ModelScore<T>>> {
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no models to compare".into()));
    }
    let mut scores = variants
        .iter()
        .map(|(id, m)| score_model(run, m, id, cfg))
        .collect::<Result<Vec<_>>>()?;
    rank(&mut scores);
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Selection<T: Real> {
    pub id: String,
    pub model: CompositeNoiseModel<T>,
    pub score: ModelScore<T>,
    pub iterations: usize,
    pub threshold_unmet: bool,
    /// Scores of every model tried, in ladder order.
    pub trace: Vec<ModelScore<T>>,
}

/// Walks `ladder` in order and returns the first model whose mean TVD is
/// within `threshold`, or the best one flagged `threshold_unmet`.
pub fn select_model<T: Real>(
    run: &ApplicationRun,
    ladder: &[(String, CompositeNoiseModel<T>)],
    threshold: T,
    cfg: &ScoreConfig,
) -> Result<Selection<T>> {
    if ladder.is_empty() {
        return Err(Error::EmptyLadder);
    }
    let mut trace: Vec<ModelScore<T>> = Vec::new();
    for (i, (id, model)) in ladder.iter().enumerate() {
        let score = score_model(run, model, id, cfg)?;
        trace.push(score.clone());
        if score.tvd <= threshold {
            return Ok(Selection {
                id: id.clone(),
                model: model.clone(),
                score,
                iterations: i + 1,
                threshold_unmet: false,
                trace,
            });
        }
    }
    let mut ranked = trace.clone();
    rank(&mut ranked);
    let best = ranked.swap_remove(0);
    let model = ladder.iter().find(|(id, _)| *id == best.id).expect("scored model").1.clone();
    Ok(Selection {
        id: best.id.clone(),
        model,
        score: best,
        iterations: ladder.len(),
        threshold_unmet: true,
        trace,
    })
}

/// The default ladder: subset-average, register-average, then
/// fully-spatial models, each as SRO, ARO, SRO+DP and ARO+DP.
pub fn standard_ladder<T: Real>(
    chars: &[Characterization<T>],
    topo: &DeviceTopology,
    subset: &[usize],
) -> Result<Vec<(String, CompositeNoiseModel<T>)>> {
    let levels = [
        ("subset", Granularity::SubsetAverage(subset.to_vec())),
        ("register", Granularity::RegisterAverage),
        ("spatial", Granularity::PerElement),
    ];
    let mut ladder = Vec::new();
    for (name, granularity) in levels {
        for variant in [ModelVariant::Sro, ModelVariant::Aro, ModelVariant::SroDp, ModelVariant::AroDp] {
            let mut cfg = FitConfig::new(granularity.clone(), variant);
            if granularity == Granularity::PerElement {
                cfg.topology = Some(topo.clone());
            }
            ladder.push((format!("{name}:{variant}"), fit_composite(chars, &cfg)?.model));
        }
    }
    Ok(ladder)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScalingRow<T> {
    pub n: usize,
    pub cnot_count: usize,
    pub tvd_mean: T,
    pub tvd_std: T,
    pub tvd_per_cnot: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScalingReport<T> {
    pub rows: Vec<ScalingRow<T>>,
    /// Coefficient of variation of `tvd_per_cnot` across rows.
    pub cv_tvd_per_cnot: T,
}

impl<T: Real> ScalingReport<T> {
    /// CSV with columns `n, cnot_count, tvd_mean, tvd_std, tvd_per_cnot`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "cnot_count", "tvd_mean", "tvd_std", "tvd_per_cnot"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.cnot_count.to_string(),
                r.tvd_mean.to_string(),
                r.tvd_std.to_string(),
                r.tvd_per_cnot.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores `model` on each run; `n` is the number of measured bits.
pub fn scaling_report<T: Real>(
    runs: &[ApplicationRun],
    model: &CompositeNoiseModel<T>,
    cfg: &ScoreConfig,
) -> Result<ScalingReport<T>> {
    let mut rows = Vec::new();
    for run in runs {
        let s = score_model(run, model, &run.circuit.label, cfg)?;
        rows.push(ScalingRow {
            n: run.circuit.num_clbits,
            cnot_count: s.cnot_count,
            tvd_mean: s.tvd,
            tvd_std: s.tvd_std,
            tvd_per_cnot: s.tvd_per_cnot,
        });
    }
    let per: Vec<T> = rows.iter().map(|r| r.tvd_per_cnot).collect();
    let cv = if per.len() < 2 {
        T::zero()
    } else {
        let n = T::from_usize_lossy(per.len());
        let mean = per.iter().copied().sum::<T>() / n;
        let var = per.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / n;
        if mean > T::zero() {
            var.sqrt() / mean
        } else {
            T::zero()
        }
    };
    Ok(ScalingReport {
        rows,
        cv_tvd_per_cnot: cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::OutcomeDistribution;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn dist(pairs: &[(&str, f64)]) -> OutcomeDistribution<f64> {
        OutcomeDistribution::new(
            pairs[0].0.len(),
            pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tvd_examples() {
        let a = dist(&[("00", 0.5), ("11", 0.5)]);
        assert_eq!(tvd(&a, &a).unwrap(), 0.0);
        let b = dist(&[("01", 0.5), ("10", 0.5)]);
        assert_eq!(tvd(&a, &b).unwrap(), 1.0);
        let c = dist(&[("00", 0.4), ("11", 0.4), ("01", 0.1), ("10", 0.1)]);
        assert!((tvd(&a, &c).unwrap() - 0.2).abs() < 1e-15);
        let narrow = dist(&[("0", 1.0)]);
        assert!(matches!(tvd(&a, &narrow), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn tvd_mixes_counts_and_distributions() {
        let c = Counts::new(BTreeMap::from([("0".to_string(), 3), ("1".to_string(), 1)])).unwrap();
        let d = dist(&[("0", 0.5), ("1", 0.5)]);
        assert!((tvd(&c, &d).unwrap() - 0.25).abs() < 1e-15);
    }

    fn simplex3() -> impl Strategy<Value = OutcomeDistribution<f64>> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_filter_map("nonzero", |(a, b, c)| {
            let s = a + b + c;
            (s > 1e-9).then(|| dist(&[("00", a / s), ("01", b / s), ("10", c / s)]))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn tvd_is_a_metric(a in simplex3(), b in simplex3(), c in simplex3()) {
            let ab = tvd(&a, &b).unwrap();
            let ba = tvd(&b, &a).unwrap();
            let bc = tvd(&b, &c).unwrap();
            let ac = tvd(&a, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(tvd(&a, &a).unwrap(), 0.0);
            if ab == 0.0 {
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn tvd_is_relabeling_invariant(a in simplex3(), b in simplex3()) {
            let swap = |d: &OutcomeDistribution<f64>| {
                let m: BTreeMap<String, f64> = d.iter().map(|(k, p)| (k.chars().rev().collect(), p)).collect();
                OutcomeDistribution::new(2, m).unwrap()
            };
            prop_assert!((tvd(&a, &b).unwrap() - tvd(&swap(&a), &swap(&b)).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_row_scaling_has_zero_cv() {
        let mut c = Circuit::new("ghz:2", 2, 2);
        c.h(0).cnot(0, 1).measure(0, 0).measure(1, 1);
        let counts = Counts::new(BTreeMap::from([("00".to_string(), 50), ("11".to_string(), 50)])).unwrap();
        let run = ApplicationRun::new(c, counts).unwrap();
        let report = scaling_report(&[run], &CompositeNoiseModel::<f64>::noiseless(), &ScoreConfig::sampled(1000, 3, 1)).unwrap();
        assert_eq!(report.cv_tvd_per_cnot, 0.0);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,cnot_count,tvd_mean,tvd_std,tvd_per_cnot\n2,1,"));
    }
}
