use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use phasesync::drift::{drift_coefficient_with, EvalProtocol};
use phasesync::estimator::{estimate, EstimateOptions};
use phasesync::model::TimestampTrace;
use phasesync::noise::classify;
use phasesync::sim::run_session;
use phasesync::synth::generate;

use crate::config;
use crate::csvio::{self, TraceCsvRecord};
use crate::error::CliError;
use crate::report::{
    sha256_hex, to_json, AnalysisOptions, AnalysisReport, DeviceEntry, DriftEntry, FitEntry,
    NoiseEntry, Real, SessionReport, SessionResult, SimulationSummary, SCHEMA_VERSION,
    TOOLKIT_VERSION,
};

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    Ok((text, bytes))
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub protocol: EvalProtocol,
    pub refine: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            protocol: EvalProtocol::default(),
            refine: true,
        }
    }
}

#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub report: AnalysisReport,
    pub json: String,
    pub failed_devices: usize,
}

/// Fits, classifies and evaluates drift for every device in a trace CSV.
///
/// Per-device problems become warnings in the report; a device whose fit
/// fails is marked `failed` and counted.
pub fn cmd_analyze(input: &Path, options: &AnalyzeOptions) -> Result<AnalyzeOutcome, CliError> {
    options
        .protocol
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let bytes = read(input)?;
    let devices = csvio::parse(&bytes, input)?;
    let est_opts = EstimateOptions {
        refine: options.refine,
        ..EstimateOptions::default()
    };
    let mut entries = Vec::with_capacity(devices.len());
    let mut failed = 0;
    for rows in devices {
        let mut warnings = Vec::new();
        let mut entry = DeviceEntry {
            device_id: rows.device_id.clone(),
            n_timestamps: rows.timestamps.len(),
            status: "ok",
            fit: None,
            noise: None,
            drift: Vec::new(),
            warnings: Vec::new(),
        };
        let trace = match TimestampTrace::recorded(rows.device_id.clone(), rows.timestamps.clone())
        {
            Ok(t) => t,
            Err(e) => {
                failed += 1;
                entry.status = "failed";
                entry.warnings.push(format!("invalid trace: {e}"));
                entries.push(entry);
                continue;
            }
        };
        match estimate(&trace, &est_opts) {
            Ok(fit) => {
                let est_gaps = fit.assignment.gaps();
                let seq_gaps: Vec<i64> = rows.frame_seq.windows(2).map(|w| w[1] - w[0]).collect();
                let mismatches: Vec<usize> = est_gaps
                    .iter()
                    .zip(&seq_gaps)
                    .enumerate()
                    .filter(|(_, (a, b))| a != b)
                    .map(|(i, _)| i + 1)
                    .collect();
                if let Some(first) = mismatches.first() {
                    warnings.push(format!(
                        "frame_seq gaps disagree with estimated slot gaps at {} of {} positions (first at row {first} of the device)",
                        mismatches.len(),
                        est_gaps.len()
                    ));
                }
                entry.fit = Some(FitEntry::from(&fit));
            }
            Err(e) => {
                failed += 1;
                entry.status = "failed";
                warnings.push(format!("fit failed: {e}"));
            }
        }
        match classify(&trace) {
            Ok(c) => entry.noise = Some(NoiseEntry::from(&c)),
            Err(e) => warnings.push(format!("noise classification skipped: {e}")),
        }
        for &train in &options.protocol.train_sizes {
            match drift_coefficient_with(&trace, train, options.protocol.test_size, &est_opts) {
                Ok(r) => entry.drift.push(DriftEntry::from(&r)),
                Err(e) => warnings.push(format!("drift at train size {train} skipped: {e}")),
            }
        }
        entry.warnings.extend(warnings);
        entries.push(entry);
    }
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION,
        command: "analyze",
        input_sha256: sha256_hex(&bytes),
        options: AnalysisOptions {
            train_sizes: options.protocol.train_sizes.clone(),
            test_size: options.protocol.test_size,
            refine: options.refine,
        },
        devices: entries,
    };
    let json = to_json(&report);
    Ok(AnalyzeOutcome {
        report,
        json,
        failed_devices: failed,
    })
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text.as_bytes()),
        None => {
            // A reader that closed early is not an error.
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Write {
                    path: "<stdout>".into(),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

/// Writes the synthetic trace described by a spec file as CSV; returns the row count.
pub fn cmd_generate(spec_path: &Path, out: &Path) -> Result<usize, CliError> {
    let (text, _) = read_text(spec_path)?;
    let spec = config::trace_spec(&text, spec_path)?;
    let g = generate(&spec).map_err(|e| CliError::Config {
        path: spec_path.to_path_buf(),
        field: "<spec>".into(),
        message: e.to_string(),
    })?;
    if let Some(&t) = g.trace.timestamps().first() {
        if t < 0 {
            return Err(CliError::Config {
                path: spec_path.to_path_buf(),
                field: "phase_ns".into(),
                message: format!("first generated timestamp is negative ({t} ns); raise phase_ns"),
            });
        }
    }
    let rows: Vec<TraceCsvRecord> = g
        .trace
        .timestamps()
        .iter()
        .zip(g.true_indices.indices())
        .map(|(&t, &n)| TraceCsvRecord {
            device_id: spec.device_id.clone(),
            frame_seq: n,
            timestamp_ns: t,
        })
        .collect();
    let mut buf = Vec::new();
    csvio::write(&mut buf, &rows).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(out, &buf)?;
    Ok(rows.len())
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub summary: SimulationSummary,
    pub summary_line: String,
    pub files: Vec<PathBuf>,
}

/// Mixes a session seed into the camera stream seed so the network and the
/// cameras never share a stream.
pub fn camera_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_5EED
}

/// Runs `seeds` sessions from one config, writing one report per seed plus a summary.
pub fn cmd_simulate(
    config_path: &Path,
    seeds: u64,
    out_dir: &Path,
) -> Result<SimulateOutcome, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let (text, bytes) = read_text(config_path)?;
    let setup = config::session(&text, config_path)?;
    let digest = sha256_hex(&bytes);
    fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let mut max_skews = Vec::new();
    let mut seed_list = Vec::new();
    let mut failed = 0;
    for i in 0..seeds {
        let seed = setup.base_seed.wrapping_add(i);
        seed_list.push(seed);
        let mut net = setup.network.clone();
        net.seed = seed;
        let mut cfg = setup.session.clone();
        cfg.seed = camera_seed(seed);
        let (status, error, result) = match run_session(&setup.devices, &net, &cfg) {
            Ok(r) => {
                max_skews.push(r.max_skew_ns());
                ("ok", None, Some(SessionResult::from(&r)))
            }
            Err(e) => {
                failed += 1;
                ("failed", Some(e.to_string()), None)
            }
        };
        let report = SessionReport {
            schema_version: SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION,
            command: "simulate",
            config_sha256: digest.clone(),
            seed,
            status,
            error,
            result,
        };
        let path = out_dir.join(format!("session_{seed}.json"));
        write(&path, to_json(&report).as_bytes())?;
        files.push(path);
    }
    let within = max_skews
        .iter()
        .filter(|s| **s <= setup.skew_threshold_ns)
        .count();
    let mut sorted = max_skews.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    };
    let max = sorted.last().copied();
    let fraction = within as f64 / seeds as f64;
    let summary = SimulationSummary {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION,
        command: "simulate",
        config_sha256: digest,
        seeds: seed_list,
        sessions: seeds as usize,
        failed,
        skew_threshold_ns: Real(setup.skew_threshold_ns),
        max_skew_ns: max.map(Real),
        median_max_skew_ns: median.map(Real),
        fraction_within_threshold: Real(fraction),
    };
    let path = out_dir.join("summary.json");
    write(&path, to_json(&summary).as_bytes())?;
    files.push(path);
    let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x}"));
    let summary_line = format!(
        "sessions={} failed={} max_skew_ns={} median_max_skew_ns={} within_{}ns={}",
        seeds,
        failed,
        fmt(max),
        fmt(median),
        setup.skew_threshold_ns,
        fraction
    );
    Ok(SimulateOutcome {
        summary,
        summary_line,
        files,
    })
}
