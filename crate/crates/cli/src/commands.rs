use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use noisy_circuit::applications::{build_ghz, bv_accuracy, pick_bv_star, AppSpec, SecretString};
use noisy_circuit::backend::{Backend, FileBackend, HiddenEffects, MockBackend, MockGroundTruth};
use noisy_circuit::characterization::{
    build_suite, count_experiments, run_suite, ArchiveMetadata, Characterization, CharacterizationArchive,
    SuiteConfig,
};
use noisy_circuit::circuit::{Circuit, DeviceTopology};
use noisy_circuit::estimation::{fit_composite, FitConfig};
use noisy_circuit::evaluation::{compare_models, scaling_report, select_model, ApplicationRun, ModelScore, ScoreConfig};
use noisy_circuit::noise::{CompositeNoiseModel, DepolarizingParam, ReadoutModel};
use noisy_circuit::rng::derive_seed;
use noisy_circuit::simulator::simulate_noisy_exact;
use noisy_circuit::{Error, Granularity, ModelVariant, NoiseFlags};

use crate::output::{config_hash, sha256_hex, write_csv, write_json, CliError, CliResult};
use crate::{BackendArgs, CharacterizeArgs, DemoArgs, EvaluateArgs, FitArgs};

fn load_device(spec: &str) -> CliResult<DeviceTopology> {
    match spec.strip_prefix("builtin:") {
        Some("poughkeepsie") => Ok(DeviceTopology::poughkeepsie()),
        Some(other) => match other.strip_prefix("line:").map(str::parse::<usize>) {
            Some(Ok(n)) if n >= 1 => Ok(DeviceTopology::line(n)),
            _ => Err(CliError::config(format!("unknown builtin device '{other}'"))),
        },
        None => Ok(DeviceTopology::load(spec)?),
    }
}

fn open_backend(args: &BackendArgs, topo: &DeviceTopology) -> CliResult<Box<dyn Backend>> {
    if args.shots == 0 {
        return Err(CliError::config("--shots must be at least 1"));
    }
    if let Some(path) = args.backend.strip_prefix("mock:") {
        let truth = MockGroundTruth::<f64>::load(path)?;
        return Ok(Box::new(MockBackend::new(topo.clone(), truth)));
    }
    if let Some(path) = args.backend.strip_prefix("file:") {
        return Ok(Box::new(FileBackend::open(topo.clone(), path)?));
    }
    Err(CliError::config(format!(
        "backend '{}' is neither mock:<truth> nor file:<archive>",
        args.backend
    )))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn characterize(args: &CharacterizeArgs, out: &Path) -> CliResult<Value> {
    let topo = load_device(&args.backend.device)?;
    let backend = open_backend(&args.backend, &topo)?;
    let config = SuiteConfig {
        granularity: args.granularity.parse()?,
        hadamard_lengths: args.hadamard_lengths.clone(),
        shots: args.backend.shots,
        seed: args.backend.seed,
    };
    let plan = build_suite(&topo, &config)?;
    let chars: Vec<Characterization<f64>> = run_suite(&plan, backend.as_ref())?;
    let meta = ArchiveMetadata {
        window: args.window.clone(),
        created: None,
    };
    let archive = CharacterizationArchive::new(config, meta, &chars);
    let archive_path = out.join("archive.json");
    archive.write(&archive_path)?;
    let count = count_experiments(&plan);
    let summary = json!({
        "command": "characterize",
        "config_hash": config_hash(args),
        "archive": path_str(&archive_path),
        "entries": archive.entries.len(),
        "experiment_count": count,
    });
    write_json(out, "experiment_count.json", &summary)?;
    Ok(summary)
}

pub fn fit(args: &FitArgs, out: &Path) -> CliResult<Value> {
    let variant: ModelVariant = args.flags.parse()?;
    let mut cfg = FitConfig::new(args.granularity.parse()?, variant);
    cfg.single_qubit_dp = args.single_qubit_dp;
    cfg.topology = args.device.as_deref().map(load_device).transpose()?;

    let bytes = std::fs::read(&args.archive)?;
    let archive: CharacterizationArchive = serde_json::from_slice(&bytes).map_err(Error::from)?;
    let chars: Vec<Characterization<f64>> = archive.characterizations()?;
    let fit = fit_composite(&chars, &cfg)?;

    let digest = sha256_hex(&bytes);
    let mut model = fit.model;
    model.provenance = Some(format!("sha256:{digest}"));
    model.window = archive.metadata.window.clone();
    let model_path = write_json(out, &format!("{}.json", args.name), &model)?;

    let feasible = fit.diagnostics.iter().all(|d| d.feasible);
    let diagnostics = json!({
        "command": "fit",
        "config_hash": config_hash(args),
        "archive_sha256": digest,
        "variant": variant.to_string(),
        "parameter_count": model.parameter_count(),
        "all_feasible": feasible,
        "estimates": fit.diagnostics,
        "hadamard": fit.hadamard,
    });
    let diag_path = write_json(out, &format!("{}.diagnostics.json", args.name), &diagnostics)?;
    Ok(json!({
        "command": "fit",
        "model": path_str(&model_path),
        "diagnostics": path_str(&diag_path),
        "parameter_count": model.parameter_count(),
        "all_feasible": feasible,
    }))
}

fn load_models(specs: &[String]) -> CliResult<Vec<(String, CompositeNoiseModel<f64>)>> {
    specs
        .iter()
        .map(|s| {
            let (id, path) = match s.split_once('=') {
                Some((id, path)) => (id.to_string(), PathBuf::from(path)),
                None => {
                    let path = PathBuf::from(s);
                    let id = path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_else(|| s.clone());
                    (id, path)
                }
            };
            Ok((id, CompositeNoiseModel::load(&path)?))
        })
        .collect()
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    app: &'a str,
    model: &'a str,
    tvd: f64,
    tvd_std: f64,
    tvd_per_cnot: f64,
    cnot_count: usize,
    param_count: usize,
}

impl<'a> ScoreRow<'a> {
    fn new(app: &'a str, s: &'a ModelScore<f64>) -> Self {
        Self {
            app,
            model: &s.id,
            tvd: s.tvd,
            tvd_std: s.tvd_std,
            tvd_per_cnot: s.tvd_per_cnot,
            cnot_count: s.cnot_count,
            param_count: s.param_count,
        }
    }
}

#[derive(Serialize)]
struct BvRow {
    model: String,
    secret: String,
    predicted: f64,
    observed: f64,
}

fn bv_rows(
    run: &ApplicationRun,
    secret: &SecretString,
    models: &[(String, CompositeNoiseModel<f64>)],
) -> CliResult<Vec<BvRow>> {
    let observed: f64 = bv_accuracy(&run.counts, secret)?;
    models
        .iter()
        .map(|(id, m)| {
            Ok(BvRow {
                model: id.clone(),
                secret: secret.to_string(),
                predicted: simulate_noisy_exact(&run.circuit, m)?.probability(&secret.to_string()),
                observed,
            })
        })
        .collect()
}

fn run_apps(backend: &dyn Backend, circuits: Vec<Circuit>, shots: u64, seed: u64) -> CliResult<Vec<ApplicationRun>> {
    let counts = backend.run(&circuits, shots, seed)?;
    circuits
        .into_iter()
        .zip(counts)
        .map(|(c, k)| Ok(ApplicationRun::new(c, k)?))
        .collect()
}

pub fn evaluate(args: &EvaluateArgs, out: &Path) -> CliResult<Value> {
    if args.select && args.threshold.is_none() {
        return Err(CliError::config("--select requires --threshold"));
    }
    if let Some(t) = args.threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::config(format!("--threshold {t} is outside (0, 1]")));
        }
    }
    if args.sim_shots == 0 || args.resamples == 0 {
        return Err(CliError::config("--sim-shots and --resamples must be at least 1"));
    }
    let topo = load_device(&args.backend.device)?;
    let backend = open_backend(&args.backend, &topo)?;
    let app: AppSpec = args.app.parse()?;
    let models = load_models(&args.models)?;
    let runs = run_apps(backend.as_ref(), app.circuits(&topo)?, args.backend.shots, args.backend.seed)?;
    let cfg = ScoreConfig {
        sim_shots: args.sim_shots,
        resamples: args.resamples,
        seed: derive_seed(args.backend.seed, 1),
        exact: args.exact,
    };
    let hash = config_hash(args);
    let mut report = json!({ "command": "evaluate", "config_hash": hash, "app": args.app });
    let mut files = Vec::new();

    if args.scaling {
        if !matches!(app, AppSpec::Ghz { .. }) || models.len() != 1 {
            return Err(CliError::config("--scaling takes a ghz range and exactly one model"));
        }
        let scaling = scaling_report(&runs, &models[0].1, &cfg)?;
        let path = out.join("scaling.csv");
        scaling.write_csv(std::fs::File::create(&path)?)?;
        files.push(path);
        report["mode"] = json!("scaling");
        report["model"] = json!(models[0].0);
        report["scaling"] = serde_json::to_value(&scaling).map_err(Error::from)?;
    } else if args.select {
        let threshold = args.threshold.expect("checked above");
        let mut selections = Vec::new();
        let mut rows = Vec::new();
        for run in &runs {
            let sel = select_model(run, &models, threshold, &cfg)?;
            selections.push(json!({
                "app": run.circuit.label,
                "selected": sel.id,
                "iterations": sel.iterations,
                "threshold_unmet": sel.threshold_unmet,
                "score": sel.score,
                "trace": sel.trace,
            }));
            rows.extend(sel.trace.into_iter().map(|s| (run.circuit.label.clone(), s)));
        }
        let rows: Vec<ScoreRow> = rows.iter().map(|(a, s)| ScoreRow::new(a, s)).collect();
        files.push(write_csv(out, "select.csv", &rows)?);
        report["mode"] = json!("select");
        report["threshold"] = json!(threshold);
        report["selections"] = json!(selections);
    } else {
        let mut ranked = Vec::new();
        for run in &runs {
            ranked.push((run.circuit.label.clone(), compare_models(run, &models, &cfg)?));
        }
        let rows: Vec<ScoreRow> = ranked
            .iter()
            .flat_map(|(a, scores)| scores.iter().map(move |s| ScoreRow::new(a, s)))
            .collect();
        files.push(write_csv(out, "compare.csv", &rows)?);
        report["mode"] = json!("compare");
        report["rankings"] = ranked
            .iter()
            .map(|(a, s)| json!({ "app": a, "scores": s }))
            .collect::<Vec<_>>()
            .into();
    }

    if let AppSpec::Bv { secret, .. } = &app {
        let rows = bv_rows(&runs[0], secret, &models)?;
        files.push(write_csv(out, "bv_accuracy.csv", &rows)?);
        report["bv_accuracy"] = serde_json::to_value(&rows).map_err(Error::from)?;
    }
    files.push(write_json(out, "evaluate.json", &report)?);
    Ok(json!({
        "command": "evaluate",
        "config_hash": hash,
        "files": files.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
    }))
}

/// Spatially varied ground truth at the scale of a superconducting device.
fn device_scale_truth(topo: &DeviceTopology, seed: u64) -> CompositeNoiseModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CompositeNoiseModel::noiseless();
    m.flags = NoiseFlags::all();
    for q in 0..topo.num_qubits() {
        let r = ReadoutModel::aro(rng.gen_range(0.01..0.035), rng.gen_range(0.04..0.10)).expect("in range");
        m.readout.insert(q, r);
        m.x_gate.insert(q, DepolarizingParam::new(rng.gen_range(0.001..0.006)).expect("in range"));
    }
    for link in topo.links() {
        m.cnot.insert(link, DepolarizingParam::new(rng.gen_range(0.01..0.04)).expect("in range"));
    }
    m
}

#[derive(Serialize)]
struct ScalingCsvRow<'a> {
    model: &'a str,
    n: usize,
    cnot_count: usize,
    tvd_mean: f64,
    tvd_std: f64,
    tvd_per_cnot: f64,
}

pub fn demo(args: &DemoArgs, out: &Path) -> CliResult<Value> {
    if args.shots == 0 || args.resamples == 0 {
        return Err(CliError::config("--shots and --resamples must be at least 1"));
    }
    let seed = |i| derive_seed(args.seed, i);
    let topo = DeviceTopology::poughkeepsie();
    let mut truth = MockGroundTruth::new(device_scale_truth(&topo, seed(0)));
    truth.hidden_effects = HiddenEffects {
        state_dependent_readout: 0.03,
    };
    write_json(out, "truth.json", &truth)?;
    let mock = MockBackend::new(topo.clone(), truth);

    let config = SuiteConfig {
        granularity: Granularity::PerElement,
        hadamard_lengths: vec![],
        shots: args.shots,
        seed: seed(1),
    };
    let plan = build_suite(&topo, &config)?;
    let chars: Vec<Characterization<f64>> = run_suite(&plan, &mock)?;
    let archive = CharacterizationArchive::new(config, ArchiveMetadata::default(), &chars);
    archive.write(out.join("archive.json"))?;
    let digest = sha256_hex(archive.to_json().as_bytes());

    let mut variants = Vec::new();
    for v in ModelVariant::ALL {
        let mut cfg = FitConfig::new(Granularity::PerElement, v);
        cfg.topology = Some(topo.clone());
        let mut model = fit_composite(&chars, &cfg)?.model;
        model.provenance = Some(format!("sha256:{digest}"));
        write_json(out, &format!("model_{}.json", v.to_string().replace('+', "_")), &model)?;
        variants.push((v.to_string(), model));
    }
    let spatial = variants.iter().find(|(id, _)| id == "aro+dp").expect("fitted").clone();
    let score_cfg = |i| ScoreConfig::sampled(args.shots, args.resamples, seed(i));

    // Bell pair: every variant against the same run
    let bell = run_apps(&mock, vec![build_ghz(2, &topo)?], args.shots, seed(2))?.remove(0);
    let bell_scores = compare_models(&bell, &variants, &score_cfg(3))?;
    let rows: Vec<ScoreRow> = bell_scores.iter().map(|s| ScoreRow::new("ghz:2", s)).collect();
    write_csv(out, "bell_compare.csv", &rows)?;

    // GHZ 2..10: fitted spatial model against the noiseless baseline
    let ghz = run_apps(&mock, (2..=10).map(|n| build_ghz(n, &topo)).collect::<Result<_, _>>()?, args.shots, seed(4))?;
    let fitted = scaling_report(&ghz, &spatial.1, &score_cfg(5))?;
    let baseline = scaling_report(&ghz, &CompositeNoiseModel::noiseless(), &score_cfg(6))?;
    let rows: Vec<ScalingCsvRow> = [("aro+dp", &fitted), ("noiseless", &baseline)]
        .into_iter()
        .flat_map(|(model, rep)| {
            rep.rows.iter().map(move |r| ScalingCsvRow {
                model,
                n: r.n,
                cnot_count: r.cnot_count,
                tvd_mean: r.tvd_mean,
                tvd_std: r.tvd_std,
                tvd_per_cnot: r.tvd_per_cnot,
            })
        })
        .collect();
    write_csv(out, "ghz_scaling.csv", &rows)?;

    // Bernstein-Vazirani on the best star under the fitted model
    let (data, oracle) = pick_bv_star(&topo, 3, &spatial.1).ok_or_else(|| CliError::config("no 3-neighbor star"))?;
    let mut bv = Vec::new();
    for (i, secret) in SecretString::all(3).into_iter().enumerate() {
        let circuit = noisy_circuit::applications::build_bv(&secret, &data, oracle, &topo)?;
        let run = run_apps(&mock, vec![circuit], args.shots, seed(100 + i as u64))?.remove(0);
        bv.extend(bv_rows(&run, &secret, std::slice::from_ref(&spatial))?);
    }
    write_csv(out, "bv_accuracy.csv", &bv)?;

    let report = json!({
        "command": "demo full-paper",
        "config_hash": config_hash(args),
        "archive_sha256": digest,
        "bell_ranking": bell_scores.iter().map(|s| json!({ "model": s.id, "tvd": s.tvd })).collect::<Vec<_>>(),
        "ghz_cv_tvd_per_cnot": { "aro+dp": fitted.cv_tvd_per_cnot, "noiseless": baseline.cv_tvd_per_cnot },
        "bv_star": { "data": data, "oracle": oracle },
        "bv_accuracy": bv,
    });
    write_json(out, "demo_report.json", &report)?;
    Ok(report)
}
