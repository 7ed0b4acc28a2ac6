use crate::config::{Purpose, RunConfig};
use crate::CliError;
use log::info;
use onlinefilter::agents::Snapshot;
use onlinefilter::dataset::{load_dir, save_dir, write_image};
use onlinefilter::detector::{
    build_oracle_table, Detector, OracleTable, RemoteDetector, SurrogateDetector,
};
use onlinefilter::env::{parse_log, records_to_csv, run_round, IterationRecord};
use onlinefilter::filters::apply_noise;
use onlinefilter::metrics::{
    export_comparison, export_series, export_summary, running_accuracy, running_reward,
};
use onlinefilter::texgen::generate;
use onlinefilter::{Agent, LinUcbAgent, NamedImage, NoiseKind, QTableAgent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

fn check(cfg: &RunConfig, purpose: Purpose) -> Result<(), CliError> {
    let errs = cfg.violations(purpose);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(errs))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Originals from `paths.images`, or generated textures.
pub fn load_originals(cfg: &RunConfig) -> Result<Vec<NamedImage>, CliError> {
    match &cfg.paths.images {
        Some(dir) => load_dir(dir).map_err(CliError::runtime),
        None => Ok(generate(&cfg.texgen)),
    }
}

pub fn make_detector(
    cfg: &RunConfig,
    originals: &[NamedImage],
) -> Result<Box<dyn Detector>, CliError> {
    match cfg.detector.kind.as_str() {
        "remote" => Ok(Box::new(RemoteDetector::new(
            cfg.detector.url.clone().unwrap_or_default(),
            Duration::from_secs_f64(cfg.detector.timeout_secs),
        ))),
        _ => SurrogateDetector::new(cfg.surrogate.clone(), originals)
            .map(|d| Box::new(d) as Box<dyn Detector>)
            .map_err(|e| CliError::config(e.to_string())),
    }
}

pub fn make_agent(cfg: &RunConfig) -> Result<Box<dyn Agent>, CliError> {
    let agent: Box<dyn Agent> = match cfg.agent.as_str() {
        "linucb" => Box::new(
            LinUcbAgent::new(cfg.linucb.alpha).map_err(|e| CliError::config(e.to_string()))?,
        ),
        _ => {
            Box::new(QTableAgent::new(cfg.q_config()).map_err(|e| CliError::config(e.to_string()))?)
        }
    };
    Ok(agent)
}

/// Writes `<stem>_<kind>.ppm` for every original and kind into `out`, and
/// the originals themselves when `originals` is set. Returns the number of
/// files written.
pub fn cmd_synth(
    cfg: &RunConfig,
    out: &Path,
    kinds: &[NoiseKind],
    originals: bool,
) -> Result<usize, CliError> {
    check(cfg, Purpose::Synth)?;
    if kinds.is_empty() && !originals {
        return Err(CliError::config(
            "nothing to write: give --kinds or --originals",
        ));
    }
    let set = load_originals(cfg)?;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let mut written = 0;
    if originals {
        save_dir(out, &set).map_err(CliError::runtime)?;
        written += set.len();
    }
    for img in &set {
        for &kind in kinds {
            let noisy = apply_noise(&img.image, kind, &cfg.filters).map_err(CliError::runtime)?;
            let name = format!("{}_{}.ppm", img.stem(), kind);
            write_image(out, &name, &noisy).map_err(CliError::runtime)?;
            written += 1;
        }
    }
    info!("wrote {written} images to {}", out.display());
    Ok(written)
}

/// Scores every original and writes the oracle table CSV to `out`.
pub fn cmd_oracle(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<OracleTable, CliError> {
    check(cfg, Purpose::Oracle)?;
    let set = load_originals(cfg)?;
    let det = make_detector(cfg, &set)?;
    let table = build_oracle_table(&set, det.as_ref(), jobs).map_err(CliError::runtime)?;
    write_file(out, table.to_csv().as_bytes())?;
    info!("scored {} originals into {}", table.len(), out.display());
    Ok(table)
}

pub struct RunOutcome {
    pub records: Vec<IterationRecord>,
    pub snapshot: Snapshot,
}

/// A failed run keeps the records produced before the failure.
pub struct RunFailure {
    pub records: Vec<IterationRecord>,
    pub error: CliError,
}

impl From<CliError> for RunFailure {
    fn from(error: CliError) -> Self {
        RunFailure {
            records: Vec::new(),
            error,
        }
    }
}

/// Runs the configured experiment without writing any files.
pub fn simulate(cfg: &RunConfig, jobs: usize) -> Result<RunOutcome, RunFailure> {
    check(cfg, Purpose::Run)?;
    let set = load_originals(cfg)?;
    let det = make_detector(cfg, &set)?;
    let table = match &cfg.paths.oracle {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            OracleTable::from_csv(&text)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
        }
        None => build_oracle_table(&set, det.as_ref(), jobs).map_err(CliError::runtime)?,
    };
    let mut env = cfg.env_config();
    env.sense.brightness_ref = table.brightness_ref;
    let mut agent = make_agent(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records: Vec<IterationRecord> = Vec::with_capacity(set.len() * cfg.rounds as usize);
    for round in 1..=cfg.rounds {
        let first = records.len() as u64 + 1;
        match run_round(
            agent.as_mut(),
            &set,
            &table,
            det.as_ref(),
            &env,
            round,
            first,
            &mut rng,
        ) {
            Ok(batch) => records.extend(batch),
            Err(e) => {
                return Err(RunFailure {
                    records,
                    error: CliError::runtime(format!("round {round}: {e}")),
                })
            }
        }
        let acc = running_accuracy(&records).last().unwrap_or(0.0);
        info!("round {round}/{}: running accuracy {acc:.4}", cfg.rounds);
    }
    Ok(RunOutcome {
        records,
        snapshot: agent.snapshot(),
    })
}

/// Runs the experiment and writes the log (partial on failure) and snapshot.
pub fn cmd_run(cfg: &RunConfig, jobs: usize) -> Result<RunOutcome, CliError> {
    let out = match simulate(cfg, jobs) {
        Ok(out) => out,
        Err(fail) => {
            if !fail.records.is_empty() {
                write_file(&cfg.paths.log, records_to_csv(&fail.records).as_bytes())?;
                return Err(CliError::runtime(format!(
                    "{} (partial log of {} records in {})",
                    fail.error,
                    fail.records.len(),
                    cfg.paths.log.display()
                )));
            }
            return Err(fail.error);
        }
    };
    write_file(&cfg.paths.log, records_to_csv(&out.records).as_bytes())?;
    if let Some(path) = &cfg.paths.snapshot {
        write_file(path, &out.snapshot.to_bytes())?;
    }
    Ok(out)
}

/// `final running accuracy` and `mean reward` line printed after a run.
pub fn run_summary_line(records: &[IterationRecord]) -> String {
    format!(
        "iterations {} final running accuracy {:.4} mean reward {:.4}",
        records.len(),
        running_accuracy(records).last().unwrap_or(f64::NAN),
        running_reward(records).last().unwrap_or(f64::NAN)
    )
}

fn read_log(path: &Path) -> Result<Vec<IterationRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    parse_log(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Writes `summary.csv` and `series.csv` for `log` into `out`, plus
/// `comparison.csv` when other logs are given. Returns the written paths.
pub fn cmd_report(log: &Path, compare: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let main = read_log(log)?;
    let others = compare
        .iter()
        .map(|p| read_log(p))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<(), CliError> {
        let path = out.join(name);
        write_file(&path, text.as_bytes())?;
        written.push(path);
        Ok(())
    };
    emit("summary.csv", export_summary(&main))?;
    emit("series.csv", export_series(&main))?;
    if !others.is_empty() {
        let mut labels = vec![label_of(log)];
        labels.extend(compare.iter().map(|p| label_of(p)));
        // Disambiguate repeated file stems.
        for i in 1..labels.len() {
            if labels[..i].contains(&labels[i]) {
                labels[i] = format!("{}{}", labels[i], i + 1);
            }
        }
        let mut runs: Vec<(&str, &[IterationRecord])> = vec![(&labels[0], &main[..])];
        for (label, recs) in labels[1..].iter().zip(&others) {
            runs.push((label, &recs[..]));
        }
        emit("comparison.csv", export_comparison(&runs))?;
    }
    Ok(written)
}
