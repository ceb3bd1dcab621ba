//! The five subcommands. Each resolves its settings, fresh from flags and
//! config files or replayed from a manifest, runs the library pipeline and
//! writes its outputs together with a manifest that reproduces the run.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use scotopic::analysis::{merit_from_replications, MeritConfig, MeritReport};
use scotopic::nmax::{calibrate_cutoff, calibration_cache_key, CutoffCalibration, DetectConfig};
use scotopic::pipeline::{
    prior_recovery_check, run_reconstruction, run_replications, true_ensemble_accuracies,
    CellReport, ReplicationPlan,
};
use scotopic::prior::{PriorSpec, EXTENSION_SHAPE};
use scotopic::rng::derive_seed;
use scotopic::simulate::run_experiment;

use crate::config::{
    check_schema, load_json, write_json, CalibrationSpec, CellSpec, ReconstructConfig,
    SimulateConfig, SweepConfig, SCHEMA_VERSION,
};
use crate::docs::{CalibrationFile, CellFile, EnsembleRow, NmaxFile, SimFile, SummaryFile};
use crate::export;
use crate::manifest::{self, fingerprint, RunManifest};
use crate::{CalibrateArgs, ReconstructArgs, ReportArgs, SimulateArgs, SweepArgs};

// Sub-stream tags keeping the independent random consumers of one master
// seed apart.
const CALIBRATION_STREAM: u64 = 1;
const RECONSTRUCTION_STREAM: u64 = 2;
const FLAT_CHECK_STREAM: u64 = 3;
const MERIT_STREAM: u64 = 4;
const CELL_STREAM: u64 = 5;

const FULL_SCALE_REPLICATIONS: usize = 100;

pub fn simulate(args: SimulateArgs) -> Result<bool> {
    let (cfg, seed, reused): (SimulateConfig, u64, Option<RunManifest>) =
        match &args.from_manifest {
            Some(path) => {
                let m = manifest::load_for("simulate", path)?;
                let cfg = serde_json::from_value(m.config.clone())
                    .context("reading the config embedded in the manifest")?;
                (cfg, m.master_seed, Some(m))
            }
            None => {
                let path = args.config.as_ref().expect("clap requires --config");
                let cfg: SimulateConfig = load_json(path)?;
                check_schema(cfg.schema_version, "simulate config")?;
                (cfg, args.seed, None)
            }
        };

    let source = cfg.source.build()?;
    let model = cfg.model.build(source.nbar_max)?;
    let result = run_experiment(&source, &model, seed)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_json(
        &args.out.join("sim.json"),
        &SimFile { schema_version: SCHEMA_VERSION, result: result.clone() },
    )?;
    let manifest = reused.unwrap_or_else(|| {
        RunManifest::new("simulate", seed, serde_json::to_value(&cfg).expect("config is plain data"))
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;

    let truth = true_ensemble_accuracies(&model, &source)?;
    let fractions = result.correct_fractions();
    let grid = source.nbar_grid();
    println!("point      nbar   sigma  fraction     model");
    for d in 0..grid.len() {
        println!(
            "{d:>5}{:>10.4}{:>8}{:>10.4}{:>10.4}",
            grid[d], result.correct[d], fractions[d], truth[d]
        );
    }
    println!("wrote {}", args.out.join("sim.json").display());
    Ok(false)
}

pub fn reconstruct(args: ReconstructArgs) -> Result<bool> {
    let sim_bytes =
        fs::read(&args.sim).with_context(|| format!("reading {}", args.sim.display()))?;
    let sim_file: SimFile = serde_json::from_slice(&sim_bytes)
        .with_context(|| format!("parsing {}", args.sim.display()))?;
    check_schema(sim_file.schema_version, "sim file")?;
    let sim = sim_file.result;

    let (cfg, seed, reused): (ReconstructConfig, u64, Option<RunManifest>) =
        match &args.from_manifest {
            Some(path) => {
                let m = manifest::load_for("reconstruct", path)?;
                if m.input_fingerprint.as_deref() != Some(fingerprint(&sim_bytes).as_str()) {
                    bail!(
                        "{} does not match the manifest's input fingerprint",
                        args.sim.display()
                    );
                }
                let cfg = serde_json::from_value(m.config.clone())
                    .context("reading the config embedded in the manifest")?;
                (cfg, m.master_seed, Some(m))
            }
            None => {
                let mut cfg = match &args.config {
                    Some(path) => {
                        let cfg: ReconstructConfig = load_json(path)?;
                        check_schema(cfg.schema_version, "reconstruct config")?;
                        cfg
                    }
                    None => ReconstructConfig::default(),
                };
                cfg.accuracy_floor |= args.accuracy_floor;
                cfg.flat_check |= args.flat_check;
                (cfg, args.seed, None)
            }
        };

    let calibration = match reused.as_ref().and_then(|m| m.calibration.clone()) {
        Some(c) => c,
        None => load_or_calibrate(&args.cache_dir, cfg.low.n_mult, &cfg.calibration, seed)?,
    };
    let template = PriorSpec::new(1, cfg.p_min)?;
    let detect = cfg.detect();

    let recon = run_reconstruction(
        &sim,
        &template,
        &detect,
        &calibration,
        cfg.hdi_mass,
        derive_seed(seed, &[RECONSTRUCTION_STREAM]),
    )?;
    let prior_recovery = if cfg.flat_check {
        Some(prior_recovery_check(
            &sim.config,
            &template,
            &detect,
            &calibration,
            derive_seed(seed, &[FLAT_CHECK_STREAM]),
        )?)
    } else {
        None
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let grid = sim.config.nbar_grid();
    let ensemble = (0..grid.len())
        .map(|d| EnsembleRow {
            nbar: grid[d],
            raw_fraction: recon.raw_fractions[d],
            posterior_mean: recon.ensemble_posterior_mean[d],
            truth: recon.truth_ensemble[d],
        })
        .collect();
    let summary = SummaryFile {
        schema_version: SCHEMA_VERSION,
        n_max_final: recon.detection.n_max_final,
        p_min_final: recon.detection.chains.p_min,
        flagged: recon.flagged,
        r_sd: recon.r_sd,
        mse: recon.mse,
        ensemble_vote: recon.ensemble_vote,
        accuracy_summaries: recon.accuracy_summaries.clone(),
        extension_summary: recon.extension_summary.clone(),
        truth: recon.truth.clone(),
        ensemble,
        record: recon.record,
        prior_recovery,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    write_json(
        &args.out.join("nmax.json"),
        &NmaxFile {
            schema_version: SCHEMA_VERSION,
            n_max_final: recon.detection.n_max_final,
            trace: recon.detection.trace.clone(),
        },
    )?;
    export::write_chains_csv(&args.out.join("chains.csv"), &recon.detection.chains)?;

    let manifest = match reused {
        Some(m) => m,
        None => {
            let mut m = RunManifest::new(
                "reconstruct",
                seed,
                serde_json::to_value(&cfg).expect("config is plain data"),
            );
            m.input_fingerprint = Some(fingerprint(&sim_bytes));
            m.calibration_key = Some(calibration.cache_key());
            m.calibration = Some(calibration);
            m
        }
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;

    println!(
        "n_max = {} after {} sampler runs, probe floor {:.4}",
        recon.detection.n_max_final,
        recon.detection.trace.len(),
        recon.detection.chains.p_min
    );
    println!(
        "r_sd = {:.2} dB, mse = {:.3e}, ensemble beats raw fractions: {}",
        recon.r_sd, recon.mse, recon.ensemble_vote
    );
    if let Some(ok) = prior_recovery {
        println!("prior recovery check: {}", if ok { "pass" } else { "fail" });
    }
    if recon.flagged {
        log::warn!("chains flagged by the split R-hat check");
    }
    Ok(recon.flagged)
}

pub fn calibrate(args: CalibrateArgs) -> Result<bool> {
    let calibration =
        calibrate_cutoff(args.chains, args.draws, args.replications, EXTENSION_SHAPE, args.seed)?;
    let key = calibration.cache_key();
    fs::create_dir_all(&args.cache_dir)
        .with_context(|| format!("creating {}", args.cache_dir.display()))?;
    let path = args.cache_dir.join(format!("{key}.json"));
    let file = CalibrationFile {
        schema_version: SCHEMA_VERSION,
        key: key.clone(),
        calibration: calibration.clone(),
    };
    write_json(&path, &file)?;
    if let Some(out) = &args.out {
        write_json(out, &file)?;
    }
    println!(
        "threshold {:.6} for {} chains per group ({} draws, {} replications)",
        calibration.cutoff, args.chains, args.draws, args.replications
    );
    println!("cached at {}", path.display());
    Ok(false)
}

pub fn sweep(args: SweepArgs) -> Result<bool> {
    let (cfg, seed, reused): (SweepConfig, u64, Option<RunManifest>) = match &args.from_manifest {
        Some(path) => {
            let m = manifest::load_for("sweep", path)?;
            let cfg = serde_json::from_value(m.config.clone())
                .context("reading the config embedded in the manifest")?;
            (cfg, m.master_seed, Some(m))
        }
        None => {
            let path = args.config.as_ref().expect("clap requires --config");
            let mut cfg: SweepConfig = load_json(path)?;
            if args.full_scale {
                cfg.replications = FULL_SCALE_REPLICATIONS;
            }
            (cfg, args.seed, None)
        }
    };
    cfg.validate()?;

    let cells = cfg.cells();
    let cell_seeds: Vec<u64> = (0..cells.len() as u64)
        .map(|i| derive_seed(seed, &[CELL_STREAM, i]))
        .collect();
    let calibration = match reused.as_ref().and_then(|m| m.calibration.clone()) {
        Some(c) => c,
        None => load_or_calibrate(&args.cache_dir, cfg.low.n_mult, &cfg.calibration, seed)?,
    };

    let cells_dir = args.out.join("cells");
    fs::create_dir_all(&cells_dir)
        .with_context(|| format!("creating {}", cells_dir.display()))?;
    let run_fp = fingerprint(&serde_json::to_vec(&(&cfg, seed)).expect("config is plain data"));

    let template = PriorSpec::new(1, cfg.p_min)?;
    let detect = cfg.detect();
    let mut files: Vec<CellFile> = Vec::with_capacity(cells.len());
    for (cell, &cell_seed) in cells.iter().zip(&cell_seeds) {
        let path = cells_dir.join(format!("cell_{:04}.json", cell.index));
        if let Some(done) = finished_cell(&path, cell, cell_seed, &run_fp) {
            log::info!("cell {:04} already finished, skipping", cell.index);
            files.push(done);
            continue;
        }
        let file = run_cell(cell, cell_seed, &run_fp, &cfg, &template, &detect, &calibration);
        write_json(&path, &file)?;
        print_cell_line(&file);
        files.push(file);
    }

    export::write_combined_csv(&args.out.join("combined.csv"), &files)?;
    let manifest = match reused {
        Some(m) => m,
        None => {
            let mut m = RunManifest::new(
                "sweep",
                seed,
                serde_json::to_value(&cfg).expect("config is plain data"),
            );
            m.cell_seeds = cell_seeds;
            m.calibration_key = Some(calibration.cache_key());
            m.calibration = Some(calibration);
            m
        }
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!("{} cells -> {}", files.len(), args.out.join("combined.csv").display());

    Ok(files.iter().any(cell_needs_attention))
}

pub fn report(args: ReportArgs) -> Result<bool> {
    let cells_dir = args.dir.join("cells");
    let entries = fs::read_dir(&cells_dir)
        .with_context(|| format!("reading {}", cells_dir.display()))?;
    let mut files: Vec<CellFile> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !(name.starts_with("cell_") && name.ends_with(".json")) {
            continue;
        }
        let file: CellFile = load_json(&path)?;
        check_schema(file.schema_version, "cell file")?;
        files.push(file);
    }
    if files.is_empty() {
        bail!("no finished cells under {}", cells_dir.display());
    }
    files.sort_by_key(|f| f.cell.index);

    let out = args.out.clone().unwrap_or_else(|| args.dir.join("combined.csv"));
    export::write_combined_csv(&out, &files)?;

    let mut ranked: Vec<(&CellFile, &MeritReport)> = files
        .iter()
        .filter_map(|f| f.merits.first().and_then(|m| m.as_ref()).map(|m| (f, m)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.p_success
            .mean
            .partial_cmp(&a.1.p_success.mean)
            .expect("success rates are finite")
    });
    if let Some((f, _)) = ranked.first() {
        println!("designs ranked at threshold {}:", f.thresholds[0]);
    }
    for (f, m) in ranked.iter().take(5) {
        println!(
            "  cell {:04}: nbar {}-{} x{}, T={}, p1={}, noise {} -> p(success) {:.3} [{:.3}, {:.3}]",
            f.cell.index,
            f.cell.nbar_min,
            f.cell.nbar_max,
            f.cell.points,
            f.cell.trials,
            f.cell.p1,
            f.cell.noise_scale,
            m.p_success.mean,
            m.p_success.low,
            m.p_success.high
        );
    }
    println!("wrote {}", out.display());
    Ok(false)
}

/// Loads a cached threshold for these settings, calibrating and caching one
/// on a miss.
fn load_or_calibrate(
    cache_dir: &Path,
    n_mult: usize,
    spec: &CalibrationSpec,
    seed: u64,
) -> Result<CutoffCalibration> {
    let key = calibration_cache_key(n_mult, EXTENSION_SHAPE);
    let path = cache_dir.join(format!("{key}.json"));
    if path.exists() {
        let file: CalibrationFile = load_json(&path)?;
        check_schema(file.schema_version, "calibration cache entry")?;
        if file.key != key || file.calibration.cache_key() != key {
            bail!("calibration cache entry {} does not match its key", path.display());
        }
        log::info!(
            "threshold {:.4} from cache ({} draws, {} null replications)",
            file.calibration.cutoff,
            file.calibration.n_mc,
            file.calibration.replications
        );
        return Ok(file.calibration);
    }
    log::info!("no cached threshold for {key}, calibrating");
    let calibration = calibrate_cutoff(
        n_mult,
        spec.draws,
        spec.replications,
        EXTENSION_SHAPE,
        derive_seed(seed, &[CALIBRATION_STREAM]),
    )?;
    fs::create_dir_all(cache_dir)
        .with_context(|| format!("creating {}", cache_dir.display()))?;
    write_json(
        &path,
        &CalibrationFile { schema_version: SCHEMA_VERSION, key, calibration: calibration.clone() },
    )?;
    Ok(calibration)
}

/// A finished cell usable as-is: parses, and matches the cell, seed and
/// resolved settings of this run. Anything else forces a recompute.
fn finished_cell(path: &Path, cell: &CellSpec, seed: u64, run_fp: &str) -> Option<CellFile> {
    if !path.exists() {
        return None;
    }
    let file: CellFile = load_json(path).ok()?;
    let matches = file.schema_version == SCHEMA_VERSION
        && file.fingerprint == run_fp
        && file.cell == *cell
        && file.seed == seed;
    matches.then_some(file)
}

fn run_cell(
    cell: &CellSpec,
    seed: u64,
    run_fp: &str,
    cfg: &SweepConfig,
    template: &PriorSpec,
    detect: &DetectConfig,
    calibration: &CutoffCalibration,
) -> CellFile {
    let mut file = CellFile {
        schema_version: SCHEMA_VERSION,
        cell: cell.clone(),
        seed,
        fingerprint: run_fp.to_string(),
        thresholds: cfg.r_sd_thresholds.clone(),
        report: None,
        merits: vec![None; cfg.r_sd_thresholds.len()],
        error: None,
    };
    let outcome = (|| -> Result<(CellReport, Vec<Option<MeritReport>>)> {
        let plan = ReplicationPlan {
            source: cell.source()?,
            model: cell.model()?,
            replications: cfg.replications,
            hdi_mass: cfg.hdi_mass,
            detect: detect.clone(),
            merit: merit_config(cfg, cfg.r_sd_thresholds[0], seed),
        };
        let report = run_replications(&plan, template, calibration, seed)?;
        let mut merits = Vec::with_capacity(cfg.r_sd_thresholds.len());
        for &threshold in &cfg.r_sd_thresholds {
            merits.push(if report.records.len() >= 2 {
                Some(merit_from_replications(&report.records, &merit_config(cfg, threshold, seed))?)
            } else {
                None
            });
        }
        Ok((report, merits))
    })();
    match outcome {
        Ok((report, merits)) => {
            file.report = Some(report);
            file.merits = merits;
        }
        Err(e) => file.error = Some(format!("{e:#}")),
    }
    file
}

fn merit_config(cfg: &SweepConfig, threshold: f64, cell_seed: u64) -> MeritConfig {
    MeritConfig {
        r_sd_threshold: threshold,
        fixed_denominator_posterior: cfg.fixed_denominator,
        seed: derive_seed(cell_seed, &[MERIT_STREAM]),
        ..MeritConfig::default()
    }
}

fn cell_needs_attention(file: &CellFile) -> bool {
    match &file.report {
        Some(r) => !r.failures.is_empty() || r.flagged_replications > 0,
        None => true,
    }
}

fn print_cell_line(file: &CellFile) {
    let c = &file.cell;
    let head = format!(
        "cell {:04}: nbar {}-{} x{}, T={}, p1={}, noise {}",
        c.index, c.nbar_min, c.nbar_max, c.points, c.trials, c.p1, c.noise_scale
    );
    match (&file.report, &file.error) {
        (Some(r), _) => {
            let total = r.records.len() + r.failures.len();
            let merit = file
                .merits
                .first()
                .and_then(|m| m.as_ref())
                .map(|m| format!(", p(success) {:.3}", m.p_success.mean))
                .unwrap_or_default();
            println!("{head} -> {}/{total} replications{merit}", r.records.len());
        }
        (None, Some(e)) => println!("{head} -> error: {e}"),
        (None, None) => println!("{head} -> empty"),
    }
}
