//! Parameter estimation from characterization records.

pub mod optimize;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::characterization::{Characterization, TestKind};
use crate::circuit::{Coupling, DeviceTopology};
use crate::distribution::parse_outcome;
use crate::error::{check_probability, Error, Result};
use crate::noise::{
    x_test_frequencies_unchecked, CompositeNoiseModel, DepolarizingParam, Granularity, ModelVariant, ReadoutKind,
    ReadoutModel,
};
use crate::Real;

use optimize::{least_squares_1d, newton_2d};

/// A fitted parameter with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimationResult<T> {
    pub parameter: String,
    /// `raw_value` clamped to `[0, 1]`.
    pub value: T,
    pub raw_value: T,
    pub stderr: T,
    pub feasible: bool,
    pub residual: T,
    pub iterations: usize,
}

impl<T: Real> EstimationResult<T> {
    fn from_raw(parameter: impl Into<String>, raw: T, stderr: T, residual: T, iterations: usize) -> Self {
        let feasible = crate::is_probability(raw);
        Self {
            parameter: parameter.into(),
            value: if feasible { raw } else { raw.max(T::zero()).min(T::one()) },
            raw_value: raw,
            stderr: if stderr.is_finite() { stderr.max(T::zero()) } else { T::infinity() },
            feasible,
            residual,
            iterations,
        }
    }
}

/// Observed outcome frequencies of one test and the frequency `g(k)` of
/// `k` bit errors relative to the nearest ideal outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ErrorFrequencyTable<T> {
    pub label: String,
    pub frequencies: BTreeMap<String, T>,
    pub errors: BTreeMap<usize, T>,
}

pub fn error_frequencies<T: Real>(c: &Characterization<T>) -> ErrorFrequencyTable<T> {
    let ideal: Vec<u64> = c
        .expected_ideal
        .support()
        .into_iter()
        .map(|k| parse_outcome(k).expect("validated outcome"))
        .collect();
    let mut frequencies = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (k, _) in c.counts.iter() {
        let f: T = c.counts.frequency(k);
        let mask = parse_outcome(k).expect("validated outcome");
        let distance = ideal.iter().map(|&i| (i ^ mask).count_ones() as usize).min().unwrap_or(0);
        frequencies.insert(k.to_string(), f);
        let e = errors.entry(distance).or_insert_with(T::zero);
        *e = *e + f;
    }
    ErrorFrequencyTable {
        label: c.label(),
        frequencies,
        errors,
    }
}

fn expect_kind<T: Real>(c: &Characterization<T>, family: &str) -> Result<()> {
    if c.kind.family() != family {
        return Err(Error::WrongKind {
            expected: family.to_string(),
            found: c.kind.family().to_string(),
        });
    }
    if c.counts.shots() == 0 {
        return Err(Error::InvalidConfig(format!("{}: no shots", c.label())));
    }
    Ok(())
}

fn shots_of<T: Real>(c: &Characterization<T>) -> T {
    T::from_u64(c.counts.shots()).expect("shots representable")
}

fn binomial_var<T: Real>(f: T, n: T) -> T {
    f * (T::one() - f) / n
}

fn root_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(16.0))
}

/// `p0` as the frequency of reading 1 right after initialization. Also
/// the `p_sro` estimate.
pub fn estimate_p0<T: Real>(init: &Characterization<T>) -> Result<EstimationResult<T>> {
    expect_kind(init, "init")?;
    let v: T = init.counts.frequency("1");
    let q = init.kind.qubits()[0];
    Ok(EstimationResult::from_raw(
        format!("p0[q{q}]"),
        v,
        binomial_var(v, shots_of(init)).sqrt(),
        T::zero(),
        0,
    ))
}

/// `(p1, p_x)` from the X and XX tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AroEstimate<T> {
    pub p1: EstimationResult<T>,
    pub p_x: EstimationResult<T>,
    /// Covariance of the raw `(p0, p1)` pair, for propagation into
    /// downstream fits.
    pub cov_p0_p1: T,
}

struct AroRaw<T> {
    x: [T; 2],
    residual: T,
    iterations: usize,
    /// `d(p1, p_x)/d(g_X0, g_XX0)`.
    inverse_jacobian: [[T; 2]; 2],
    /// `d(p1, p_x)/d p0`.
    d_dp0: [T; 2],
}

fn solve_aro_raw<T: Real>(g_x0: T, g_xx0: T, p0: T) -> Result<AroRaw<T>> {
    let f = |[p1, px]: [T; 2], p0: T| {
        let (a, b) = x_test_frequencies_unchecked(p0, p1, px);
        [a - g_x0, b - g_xx0]
    };
    let sol = newton_2d(|x| f(x, p0), [g_x0, T::lit(0.001)], root_tolerance(), 200)?;
    let h = T::lit(1e-7).max(T::epsilon().cbrt());
    let mut jac = [[T::zero(); 2]; 2];
    for j in 0..2 {
        let (mut xp, mut xm) = (sol.x, sol.x);
        xp[j] = xp[j] + h;
        xm[j] = xm[j] - h;
        let (fp, fm) = (f(xp, p0), f(xm, p0));
        for i in 0..2 {
            jac[i][j] = (fp[i] - fm[i]) / (h + h);
        }
    }
    let (fp, fm) = (f(sol.x, p0 + h), f(sol.x, p0 - h));
    let b = [(fp[0] - fm[0]) / (h + h), (fp[1] - fm[1]) / (h + h)];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let inv = [
        [jac[1][1] / det, -jac[0][1] / det],
        [-jac[1][0] / det, jac[0][0] / det],
    ];
    let d_dp0 = [
        -(inv[0][0] * b[0] + inv[0][1] * b[1]),
        -(inv[1][0] * b[0] + inv[1][1] * b[1]),
    ];
    Ok(AroRaw {
        x: sol.x,
        residual: sol.residual,
        iterations: sol.iterations,
        inverse_jacobian: inv,
        d_dp0,
    })
}

/// Solves the X/XX system for `(p1, p_x)` given `p0`, with zero stderr.
/// Use [`estimate_aro`] for propagated uncertainties.
pub fn solve_aro_system<T: Real>(g_x0: T, g_xx0: T, p0: T) -> Result<AroEstimate<T>> {
    check_probability("g_X(0)", g_x0)?;
    check_probability("g_XX(0)", g_xx0)?;
    check_probability("p0", p0)?;
    let raw = solve_aro_raw(g_x0, g_xx0, p0)?;
    Ok(AroEstimate {
        p1: EstimationResult::from_raw("p1", raw.x[0], T::zero(), raw.residual, raw.iterations),
        p_x: EstimationResult::from_raw("p_x", raw.x[1], T::zero(), raw.residual, raw.iterations),
        cov_p0_p1: T::zero(),
    })
}

/// `p0`, `p1` and `p_x` for one qubit with delta-method standard errors.
pub fn estimate_aro<T: Real>(
    init: &Characterization<T>,
    x: &Characterization<T>,
    xx: &Characterization<T>,
) -> Result<(EstimationResult<T>, AroEstimate<T>)> {
    expect_kind(x, "x")?;
    expect_kind(xx, "xx")?;
    let p0 = estimate_p0(init)?;
    let q = init.kind.qubits()[0];
    let g_x0: T = x.counts.frequency("0");
    let g_xx0: T = xx.counts.frequency("0");
    let raw = solve_aro_raw(g_x0, g_xx0, p0.value)?;
    let var_g = [binomial_var(g_x0, shots_of(x)), binomial_var(g_xx0, shots_of(xx))];
    let var_p0 = p0.stderr * p0.stderr;
    let a = raw.inverse_jacobian;
    let var = |i: usize| a[i][0] * a[i][0] * var_g[0] + a[i][1] * a[i][1] * var_g[1] + raw.d_dp0[i] * raw.d_dp0[i] * var_p0;
    let est = AroEstimate {
        p1: EstimationResult::from_raw(format!("p1[q{q}]"), raw.x[0], var(0).sqrt(), raw.residual, raw.iterations),
        p_x: EstimationResult::from_raw(format!("p_x[q{q}]"), raw.x[1], var(1).sqrt(), raw.residual, raw.iterations),
        cov_p0_p1: raw.d_dp0[0] * var_p0,
    };
    Ok((p0, est))
}

/// Readout-corrected survival of a Hadamard sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HadamardObservation<T> {
    pub length: usize,
    /// Observed frequency of reading 0.
    pub g0: T,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HadamardEstimate<T> {
    pub result: EstimationResult<T>,
    pub include_in_model: bool,
}

fn survival<T: Real>(p: T, length: usize) -> T {
    let half = T::lit(0.5);
    half + half * (T::one() - T::lit(4.0) * p / T::lit(3.0)).powi(length as i32)
}

/// Fits `survival(L) = 1/2 + 1/2 (1 - 4 p_h / 3)^L` to readout-corrected
/// survival frequencies over `p_h` in `[0, 3/4]`.
///
/// `include_in_model` holds when `p_h` exceeds ten standard errors and,
/// if `leading` (the largest other gate error) is given, is at least a
/// tenth of it.
pub fn fit_hadamard<T: Real>(
    observations: &[HadamardObservation<T>],
    readout: &ReadoutModel<T>,
    leading: Option<T>,
) -> Result<HadamardEstimate<T>> {
    let lengths: BTreeSet<usize> = observations.iter().map(|o| o.length).collect();
    if lengths.len() < 2 {
        return Err(Error::InsufficientLengths(lengths.len()));
    }
    let scale = T::one() - readout.p0() - readout.p1();
    if scale <= T::zero() {
        return Err(Error::InvalidConfig("readout model inverts the bit (p0 + p1 >= 1)".into()));
    }
    let s: Vec<T> = observations.iter().map(|o| (o.g0 - readout.p1()) / scale).collect();
    let residuals = |p: T| -> Vec<T> {
        observations
            .iter()
            .zip(&s)
            .map(|(o, &si)| survival(p, o.length) - si)
            .collect()
    };
    let fit = least_squares_1d(residuals, T::zero(), T::lit(0.75), root_tolerance());
    let h = T::lit(1e-6);
    let mut den = T::zero();
    let slopes: Vec<T> = observations
        .iter()
        .map(|o| {
            let lo = (fit.x - h).max(T::zero());
            let hi = fit.x + h;
            (survival(hi, o.length) - survival(lo, o.length)) / (hi - lo)
        })
        .collect();
    for d in &slopes {
        den = den + *d * *d;
    }
    let mut var = T::zero();
    for (o, d) in observations.iter().zip(&slopes) {
        let n = T::from_u64(o.shots.max(1)).expect("shots representable");
        let var_s = binomial_var(o.g0, n) / (scale * scale);
        let w = *d / den;
        var = var + w * w * var_s;
    }
    let result = EstimationResult::from_raw("p_h", fit.x, var.sqrt(), fit.cost.sqrt(), fit.iterations);
    let significant = result.value > T::lit(10.0) * result.stderr;
    let material = leading.is_none_or(|l| result.value * T::lit(10.0) >= l);
    Ok(HadamardEstimate {
        include_in_model: significant && material && result.value > T::zero(),
        result,
    })
}

/// Per-gate Hadamard error from Hadamard-sequence characterizations.
pub fn estimate_hadamard_error<'a, T: Real>(
    chars: impl IntoIterator<Item = &'a Characterization<T>>,
    readout: &ReadoutModel<T>,
    leading: Option<T>,
) -> Result<HadamardEstimate<T>> {
    let mut obs = Vec::new();
    let mut qubit = None;
    for c in chars {
        expect_kind(c, "hseq")?;
        if let TestKind::HadamardSequence { qubit: q, length } = c.kind {
            qubit = Some(q);
            obs.push(HadamardObservation {
                length,
                g0: c.counts.frequency("0"),
                shots: c.counts.shots(),
            });
        }
    }
    let mut est = fit_hadamard(&obs, readout, leading)?;
    if let Some(q) = qubit {
        est.result.parameter = format!("p_h[q{q}]");
    }
    Ok(est)
}

/// Bell-test frequencies after readout, indexed by outcome mask (bit 0 is
/// the control). Defined for any real `p` so derivatives can step past
/// the bounds.
fn bell_after_readout<T: Real>(p: T, rj: &ReadoutModel<T>, rk: &ReadoutModel<T>) -> [T; 4] {
    let odd = T::lit(2.0) / T::lit(3.0) * p - T::lit(4.0) / T::lit(9.0) * p * p;
    let even = T::lit(0.5) - odd;
    let ideal = [even, odd, odd, even];
    let read = |r: &ReadoutModel<T>, truth: usize, seen: usize| {
        let flip = if truth == 1 { r.p1() } else { r.p0() };
        if truth == seen {
            T::one() - flip
        } else {
            flip
        }
    };
    let mut out = [T::zero(); 4];
    for (o, slot) in out.iter_mut().enumerate() {
        for (t, &pt) in ideal.iter().enumerate() {
            *slot = *slot + pt * read(rj, t & 1, o & 1) * read(rk, t >> 1, o >> 1);
        }
    }
    out
}

/// Uncertainty of a fitted readout model, for propagation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReadoutUncertainty<T> {
    pub var_p0: T,
    pub var_p1: T,
    pub cov_p0_p1: T,
}

/// Least-squares `p_cnot` in `[0, 1]` from Bell-test frequencies `g`
/// (indexed by outcome mask, control bit first) observed over `shots`.
pub fn fit_pcnot_frequencies<T: Real>(
    g: [T; 4],
    shots: u64,
    rj: &ReadoutModel<T>,
    rk: &ReadoutModel<T>,
    uncertainty: Option<(ReadoutUncertainty<T>, ReadoutUncertainty<T>)>,
) -> EstimationResult<T> {
    let residuals = |p: T| -> Vec<T> {
        let h = bell_after_readout(p, rj, rk);
        (0..4).map(|i| h[i] - g[i]).collect()
    };
    let fit = least_squares_1d(residuals, T::zero(), T::one(), root_tolerance());
    let p = fit.x;
    let h = T::lit(1e-6);
    let (hp, h0, hm) = (bell_after_readout(p + h, rj, rk), bell_after_readout(p, rj, rk), bell_after_readout(p - h, rj, rk));
    let d1: Vec<T> = (0..4).map(|i| (hp[i] - hm[i]) / (h + h)).collect();
    let d2: Vec<T> = (0..4).map(|i| (hp[i] - h0[i] - h0[i] + hm[i]) / (h * h)).collect();
    let den: T = (0..4).map(|i| d1[i] * d1[i] + (h0[i] - g[i]) * d2[i]).sum();
    let n = T::from_u64(shots.max(1)).expect("shots representable");
    let mut var = T::zero();
    if den > T::zero() {
        let grad: Vec<T> = d1.iter().map(|d| *d / den).collect();
        for a in 0..4 {
            for b in 0..4 {
                let cov = if a == b { g[a] * (T::one() - g[a]) } else { -g[a] * g[b] } / n;
                var = var + grad[a] * grad[b] * cov;
            }
        }
        if let Some((uj, uk)) = uncertainty {
            // dp/dtheta = -sum_c h'_c dh_c/dtheta / den
            let shift = |which: usize, dp0: T, dp1: T| {
                let bump = |r: &ReadoutModel<T>, s: T| ReadoutModel::Aro {
                    p0: r.p0() + dp0 * s,
                    p1: r.p1() + dp1 * s,
                };
                let (up, down) = if which == 0 {
                    (bell_after_readout(p, &bump(rj, h), rk), bell_after_readout(p, &bump(rj, -h), rk))
                } else {
                    (bell_after_readout(p, rj, &bump(rk, h)), bell_after_readout(p, rj, &bump(rk, -h)))
                };
                -(0..4).map(|i| d1[i] * (up[i] - down[i]) / (h + h)).sum::<T>() / den
            };
            for (which, u) in [(0, uj), (1, uk)] {
                let a0 = shift(which, T::one(), T::zero());
                let a1 = shift(which, T::zero(), T::one());
                var = var + a0 * a0 * u.var_p0 + a1 * a1 * u.var_p1 + T::lit(2.0) * a0 * a1 * u.cov_p0_p1;
            }
        }
    }
    EstimationResult::from_raw("p_cnot", p, var.max(T::zero()).sqrt(), fit.cost.sqrt(), fit.iterations)
}

fn bell_masks<T: Real>(bell: &Characterization<T>) -> [T; 4] {
    let mut g = [T::zero(); 4];
    for (k, _) in bell.counts.iter() {
        if let Ok(m) = parse_outcome(k) {
            if m < 4 && k.len() == 2 {
                g[m as usize] = bell.counts.frequency(k);
            }
        }
    }
    g
}

/// `p_cnot` from a Bell test with the readout models of its two qubits
/// (`readout_j` for the control).
pub fn fit_pcnot<T: Real>(
    bell: &Characterization<T>,
    readout_j: &ReadoutModel<T>,
    readout_k: &ReadoutModel<T>,
) -> Result<EstimationResult<T>> {
    fit_pcnot_propagated(bell, readout_j, readout_k, None)
}

/// [`fit_pcnot`] with readout-parameter uncertainty added to the stderr.
pub fn fit_pcnot_propagated<T: Real>(
    bell: &Characterization<T>,
    readout_j: &ReadoutModel<T>,
    readout_k: &ReadoutModel<T>,
    uncertainty: Option<(ReadoutUncertainty<T>, ReadoutUncertainty<T>)>,
) -> Result<EstimationResult<T>> {
    expect_kind(bell, "bell")?;
    let mut r = fit_pcnot_frequencies(bell_masks(bell), bell.counts.shots(), readout_j, readout_k, uncertainty);
    if let TestKind::BellTest { control, target } = bell.kind {
        r.parameter = format!("p_cnot[{}]", Coupling::new(control, target));
    }
    Ok(r)
}

/// What to fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub granularity: Granularity,
    pub variant: ModelVariant,
    /// Attach fitted X-gate (and, when warranted, Hadamard) depolarizing
    /// channels.
    pub single_qubit_dp: bool,
    /// When set, Bell tests are required for every in-scope link.
    pub topology: Option<DeviceTopology>,
}

impl FitConfig {
    pub fn new(granularity: Granularity, variant: ModelVariant) -> Self {
        Self {
            granularity,
            variant,
            single_qubit_dp: false,
            topology: None,
        }
    }
}

/// A fitted model and the per-parameter estimates behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompositeFit<T: Real> {
    pub model: CompositeNoiseModel<T>,
    pub diagnostics: Vec<EstimationResult<T>>,
    pub hadamard: Vec<HadamardEstimate<T>>,
}

struct QubitFit<T: Real> {
    p0: EstimationResult<T>,
    aro: Option<AroEstimate<T>>,
}

fn mean<T: Real>(v: impl Iterator<Item = T>) -> T {
    let (s, n) = v.fold((T::zero(), 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        T::zero()
    } else {
        s / T::from_usize_lossy(n)
    }
}

/// Fits a composite model of the requested variant and granularity.
///
/// Readout is fitted per qubit, `p_cnot` per coupling against the
/// variant's readout model (SRO variants refit against SRO readout; the
/// DP-only variant uses the ARO fit). Averaged granularities fit each
/// element and then store the scope average for every element.
pub fn fit_composite<T: Real>(chars: &[Characterization<T>], config: &FitConfig) -> Result<CompositeFit<T>> {
    let variant = config.variant;
    let mut flags = variant.flags();
    flags.single_qubit_dp_on = config.single_qubit_dp && variant != ModelVariant::Noiseless;
    let mut model = CompositeNoiseModel::noiseless();
    model.granularity = config.granularity.clone();
    model.flags = flags;
    if variant == ModelVariant::Noiseless {
        return Ok(CompositeFit {
            model,
            diagnostics: Vec::new(),
            hadamard: Vec::new(),
        });
    }

    let by_kind: BTreeMap<TestKind, &Characterization<T>> = chars.iter().map(|c| (c.kind, c)).collect();
    let in_scope = |q: usize| match &config.granularity {
        Granularity::SubsetAverage(qs) => qs.contains(&q),
        _ => true,
    };
    let mut qubits: BTreeSet<usize> = match &config.granularity {
        Granularity::SubsetAverage(qs) => qs.iter().copied().collect(),
        _ => chars.iter().flat_map(|c| c.kind.qubits()).collect(),
    };
    if let (Some(topo), false) = (&config.topology, matches!(config.granularity, Granularity::SubsetAverage(_))) {
        qubits.extend(0..topo.num_qubits());
    }

    let needs_aro = variant.readout_kind() != Some(ReadoutKind::Sro) || flags.single_qubit_dp_on;
    let mut missing = Vec::new();
    for &q in &qubits {
        let mut required = vec![TestKind::InitMeasure(q)];
        if needs_aro {
            required.extend([TestKind::XTest(q), TestKind::XXTest(q)]);
        }
        missing.extend(required.into_iter().filter(|k| !by_kind.contains_key(k)).map(|k| k.label()));
    }
    let bells: Vec<&Characterization<T>> = chars
        .iter()
        .filter(|c| matches!(c.kind, TestKind::BellTest { control, target } if in_scope(control) && in_scope(target)))
        .collect();
    if flags.cnot_dp_on {
        let have: BTreeSet<Coupling> = bells
            .iter()
            .flat_map(|c| match c.kind {
                TestKind::BellTest { control, target } => Some(Coupling::new(control, target)),
                _ => None,
            })
            .collect();
        match &config.topology {
            Some(topo) => {
                for link in topo.links() {
                    if qubits.contains(&link.low()) && qubits.contains(&link.high()) && !have.contains(&link) {
                        let (control, target) = topo.orientation(link);
                        missing.push(TestKind::BellTest { control, target }.label());
                    }
                }
            }
            None if bells.is_empty() => missing.push("bell tests".into()),
            None => {}
        }
        for c in &bells {
            for q in c.kind.qubits() {
                if !qubits.contains(&q) {
                    missing.push(TestKind::InitMeasure(q).label());
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingCoverage { missing });
    }

    let mut diagnostics = Vec::new();
    let mut fits: BTreeMap<usize, QubitFit<T>> = BTreeMap::new();
    for &q in &qubits {
        let init = by_kind[&TestKind::InitMeasure(q)];
        let fit = if needs_aro {
            let (p0, aro) = estimate_aro(init, by_kind[&TestKind::XTest(q)], by_kind[&TestKind::XXTest(q)])?;
            QubitFit { p0, aro: Some(aro) }
        } else {
            QubitFit {
                p0: estimate_p0(init)?,
                aro: None,
            }
        };
        diagnostics.push(fit.p0.clone());
        if let Some(a) = &fit.aro {
            diagnostics.push(a.p1.clone());
            diagnostics.push(a.p_x.clone());
        }
        fits.insert(q, fit);
    }

    let sro = variant.readout_kind() == Some(ReadoutKind::Sro);
    let readout_of = |q: usize| -> (ReadoutModel<T>, ReadoutUncertainty<T>) {
        let f = &fits[&q];
        let var_p0 = f.p0.stderr * f.p0.stderr;
        match (&f.aro, sro) {
            (Some(a), false) => (
                ReadoutModel::Aro {
                    p0: f.p0.value,
                    p1: a.p1.value,
                },
                ReadoutUncertainty {
                    var_p0,
                    var_p1: a.p1.stderr * a.p1.stderr,
                    cov_p0_p1: a.cov_p0_p1,
                },
            ),
            _ => (
                ReadoutModel::Sro { p_sro: f.p0.value },
                ReadoutUncertainty {
                    var_p0,
                    var_p1: var_p0,
                    cov_p0_p1: var_p0,
                },
            ),
        }
    };

    if flags.readout_on {
        for &q in &qubits {
            model.readout.insert(q, readout_of(q).0);
        }
    }
    let mut leading = T::zero();
    if flags.cnot_dp_on {
        for c in &bells {
            let [j, k] = [c.kind.qubits()[0], c.kind.qubits()[1]];
            let ((rj, uj), (rk, uk)) = (readout_of(j), readout_of(k));
            let r = fit_pcnot_propagated(c, &rj, &rk, Some((uj, uk)))?;
            leading = leading.max(r.value);
            model.cnot.insert(Coupling::new(j, k), DepolarizingParam::new(r.value)?);
            diagnostics.push(r);
        }
    }
    let mut hadamard = Vec::new();
    if flags.single_qubit_dp_on {
        for (&q, f) in &fits {
            if let Some(a) = &f.aro {
                model.x_gate.insert(q, DepolarizingParam::new(a.p_x.value)?);
                leading = leading.max(a.p_x.value);
            }
        }
        for &q in &qubits {
            let seqs: Vec<&Characterization<T>> = chars
                .iter()
                .filter(|c| matches!(c.kind, TestKind::HadamardSequence { qubit, .. } if qubit == q))
                .collect();
            if seqs.is_empty() {
                continue;
            }
            let est = estimate_hadamard_error(seqs, &readout_of(q).0, Some(leading))?;
            if est.include_in_model {
                model.h_gate.insert(q, DepolarizingParam::new(est.result.value)?);
            }
            diagnostics.push(est.result.clone());
            hadamard.push(est);
        }
    }

    if !matches!(config.granularity, Granularity::PerElement) {
        average_in_place(&mut model);
    }
    Ok(CompositeFit {
        model,
        diagnostics,
        hadamard,
    })
}

fn average_in_place<T: Real>(model: &mut CompositeNoiseModel<T>) {
    if !model.readout.is_empty() {
        let p0 = mean(model.readout.values().map(|r| r.p0()));
        let avg = if model.readout.values().all(|r| matches!(r, ReadoutModel::Sro { .. })) {
            ReadoutModel::Sro { p_sro: p0 }
        } else {
            ReadoutModel::Aro {
                p0,
                p1: mean(model.readout.values().map(|r| r.p1())),
            }
        };
        model.readout.values_mut().for_each(|r| *r = avg);
    }
    fn flatten<K, T: Real>(m: &mut BTreeMap<K, DepolarizingParam<T>>) {
        let avg = mean(m.values().map(|p| p.value()));
        if let Ok(p) = DepolarizingParam::new(avg) {
            m.values_mut().for_each(|v| *v = p);
        }
    }
    flatten(&mut model.x_gate);
    flatten(&mut model.h_gate);
    flatten(&mut model.cnot);
}
