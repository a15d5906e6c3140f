//! The subcommands.

use std::path::{Path, PathBuf};

use patchflow_core::corpus::{calibrate, check_corpus, spectral_identities, Constants, CorpusKind, CALIBRATION_SEED};
use patchflow_core::field::Grid;
use patchflow_core::limit_lab::{compare_limit, member_config, run_sweep, SweepOptions};
use patchflow_core::patch::{build_patch_density, build_tangential_family, interface_regularity, MarkerCurve};
use patchflow_core::record::{csv_header, csv_row, parse_csv, DiagnosticsRecord};
use patchflow_core::run::{Event, RunSummary, Trajectory};
use patchflow_core::scenario::RunConfig;
use patchflow_core::spectral::SpectralOps;
use patchflow_core::striated::family_norm;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, parse_as, Format, LoadedConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, write_json, OutputDir};
use crate::snapshot::Snapshot;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "curve.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub config_hash: String,
    pub error: Option<String>,
    /// Most recent snapshot, relative to the output directory.
    pub last_snapshot: Option<String>,
    pub summary: RunSummary,
}

fn snapshot_name(steps: u64) -> String {
    format!("snapshots/step_{steps:09}.sns")
}

/// Drives a trajectory, writing snapshots as they come and the CSV and
/// summary at the end, also when a step fails.
fn drive(mut traj: Trajectory, loaded: &LoadedConfig, out: &OutputDir, prior_rows: Vec<DiagnosticsRecord>) -> CliResult<RunOutcome> {
    let mut csv = csv_header(&loaded.hash);
    for r in &prior_rows {
        csv.push_str(&csv_row(r));
    }
    let mut last_snapshot = None;
    let result = traj.run(&mut |e| {
        match e {
            Event::Record { record, .. } => csv.push_str(&csv_row(record)),
            Event::Snapshot(t) => {
                let name = snapshot_name(t.book.steps);
                Snapshot::of(t, &loaded.canonical, &loaded.hash)
                    .write(&out.file(&name))
                    .map_err(|e| patchflow_core::Error::InvalidParameter(e.to_string()))?;
                last_snapshot = Some(name);
            }
        }
        Ok(())
    });
    write_atomic(&out.file(DIAGNOSTICS_FILE), csv.as_bytes())?;
    if let Some(m) = &traj.markers {
        write_atomic(&out.file(CURVE_FILE), m.to_csv().as_bytes())?;
    }
    let outcome = RunOutcome {
        status: if result.is_ok() { RunStatus::Completed } else { RunStatus::Failed },
        config_hash: loaded.hash.clone(),
        error: result.as_ref().err().map(|e| e.to_string()),
        last_snapshot,
        summary: traj.summary(),
    };
    write_json(&out.file(SUMMARY_FILE), &outcome)?;
    match result {
        Ok(_) => Ok(outcome),
        Err(source) => Err(CliError::Step {
            t: traj.state.t,
            source,
        }),
    }
}

pub fn run(config: &Path, out: &OutputDir) -> CliResult<RunOutcome> {
    let loaded = load_config(config)?;
    write_atomic(&out.file("config.json"), loaded.canonical.as_bytes())?;
    let traj = Trajectory::start(&loaded.config).map_err(|e| CliError::Config {
        path: config.to_path_buf(),
        message: e.to_string(),
    })?;
    drive(traj, &loaded, out, Vec::new())
}

/// Continues from a snapshot; an explicit config must hash to the snapshot's.
///
/// Rows of an existing diagnostics file up to the snapshot time are kept.
pub fn resume(snapshot: &Path, config: Option<&Path>, out: &OutputDir) -> CliResult<RunOutcome> {
    let snap = Snapshot::read(snapshot)?;
    let loaded = match config {
        Some(path) => {
            let l = load_config(path)?;
            if l.hash != snap.header.config_hash {
                return Err(CliError::Snapshot {
                    path: snapshot.to_path_buf(),
                    message: format!("config hash {} does not match the snapshot's {}", l.hash, snap.header.config_hash),
                });
            }
            l
        }
        None => {
            let config: RunConfig = parse_as(&snap.header.config, Format::Json).map_err(|message| CliError::Snapshot {
                path: snapshot.to_path_buf(),
                message,
            })?;
            LoadedConfig::from_config(config)
        }
    };
    let t_snap = snap.header.t;
    let prior = match std::fs::read_to_string(out.file(DIAGNOSTICS_FILE)) {
        Ok(text) => match parse_csv(&text) {
            Ok((hash, rows)) if hash == loaded.hash => rows
                .into_iter()
                .filter(|r| r.t.is_some_and(|t| t <= t_snap + 1e-12 * t_snap.abs().max(1.0)))
                .collect(),
            _ => Vec::new(),
        },
        Err(_) => Vec::new(),
    };
    let traj = Trajectory::resume(&loaded.config, snap.state, snap.family, snap.markers, snap.header.bookkeeping)?;
    drive(traj, &loaded, out, prior)
}

/// Contents of a sweep manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base configuration, relative to the manifest.
    pub base: PathBuf,
    pub nus: Vec<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub compare_interval: Option<f64>,
    #[serde(default = "default_true")]
    pub with_reference: bool,
}

fn default_bootstrap() -> usize {
    200
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub nu: f64,
    pub lambda: f64,
    pub config_hash: String,
    pub diagnostics: String,
    pub error: Option<String>,
    pub metrics: Option<patchflow_core::limit_lab::MemberMetrics>,
}

/// The sweep manifest written next to the member outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub base_config_hash: String,
    pub nus: Vec<f64>,
    pub dt: Option<f64>,
    pub members: Vec<MemberEntry>,
    pub reference: Option<patchflow_core::limit_lab::ReferenceSummary>,
    pub div_fit: Option<patchflow_core::limit_lab::ScalingFit>,
    pub residual_fit: Option<patchflow_core::limit_lab::ScalingFit>,
    pub monotone: Option<bool>,
    pub convergence_table: Option<String>,
    pub partial: bool,
    pub warnings: Vec<String>,
}

pub fn sweep(manifest: &Path, workers: usize, out: &OutputDir) -> CliResult<SweepManifest> {
    let text = std::fs::read_to_string(manifest).map_err(|e| CliError::io(manifest, e))?;
    let bad = |message: String| CliError::Config {
        path: manifest.to_path_buf(),
        message,
    };
    let spec: SweepSpec = parse_as(&text, Format::of(manifest)).map_err(bad)?;
    let base_path = manifest.parent().unwrap_or(Path::new(".")).join(&spec.base);
    let base = load_config(&base_path)?;
    patchflow_core::limit_lab::validate_nus(&spec.nus, base.config.simulation.mu).map_err(|e| bad(e.to_string()))?;
    let seed = base.config.simulation.seed;
    let opts = SweepOptions {
        workers,
        seed,
        bootstrap: spec.bootstrap,
        compare_interval: spec.compare_interval,
        with_reference: spec.with_reference,
    };
    let result = run_sweep(&base.config, &spec.nus, &opts).map_err(|e| bad(e.to_string()))?;
    let mut members = Vec::new();
    for (k, m) in result.members.iter().enumerate() {
        let loaded = LoadedConfig::from_config(member_config(&base.config, m.nu, result.dt));
        let name = format!("member_{k:02}/{DIAGNOSTICS_FILE}");
        let mut csv = csv_header(&loaded.hash);
        for r in &m.records {
            csv.push_str(&csv_row(r));
        }
        write_atomic(&out.file(&name), csv.as_bytes())?;
        members.push(MemberEntry {
            nu: m.nu,
            lambda: m.config.simulation.lambda,
            config_hash: loaded.hash,
            diagnostics: name,
            error: m.error.clone(),
            metrics: m.metrics.clone(),
        });
    }
    let table = compare_limit(&result, spec.bootstrap, seed).ok();
    let convergence_table = match &table {
        Some(t) => {
            write_atomic(&out.file("convergence.csv"), t.to_csv().as_bytes())?;
            Some("convergence.csv".to_string())
        }
        None => None,
    };
    let doc = SweepManifest {
        base_config_hash: base.hash,
        nus: result.nus.clone(),
        dt: result.dt,
        members,
        reference: result.reference.clone(),
        div_fit: result.div_fit.clone(),
        residual_fit: table.as_ref().and_then(|t| t.residual_fit.clone()),
        monotone: table.as_ref().map(|t| t.monotone),
        convergence_table,
        partial: result.partial,
        warnings: result.warnings.clone(),
    };
    write_json(&out.file("sweep.json"), &doc)?;
    if doc.partial {
        return Err(CliError::Partial(format!("sweep incomplete: {}", doc.warnings.join("; "))));
    }
    Ok(doc)
}

pub const SUITES: [&str; 2] = ["spectral-identities", "inequalities"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteLine {
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub lines: Vec<SuiteLine>,
    pub details: serde_json::Value,
}

pub struct VerifyOptions<'a> {
    pub seed: u64,
    pub samples: Option<usize>,
    pub constants: Option<&'a Path>,
    pub workers: usize,
}

pub fn verify(suite: &str, opts: &VerifyOptions, out: &OutputDir) -> CliResult<SuiteReport> {
    let report = match suite {
        "spectral-identities" => {
            let rows = spectral_identities(opts.seed, opts.samples.unwrap_or(100), opts.workers);
            SuiteReport {
                suite: suite.into(),
                seed: opts.seed,
                passed: rows.iter().all(|r| r.passed),
                lines: rows
                    .iter()
                    .map(|r| SuiteLine {
                        property: r.name.clone(),
                        passed: r.passed,
                        detail: format!("max relative error {:.3e} (tolerance {:.0e})", r.max_error, r.tolerance),
                    })
                    .collect(),
                details: serde_json::to_value(&rows).expect("reports serialize"),
            }
        }
        "inequalities" => {
            let constants = match opts.constants {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    serde_json::from_str::<Constants>(&text).map_err(|e| CliError::Config {
                        path: p.to_path_buf(),
                        message: e.to_string(),
                    })?
                }
                None => Constants::committed(),
            };
            let mut reports = Vec::new();
            for kind in CorpusKind::ALL {
                reports.push(check_corpus(kind, &constants, opts.seed, opts.samples.unwrap_or(1000), opts.workers)?);
            }
            SuiteReport {
                suite: suite.into(),
                seed: opts.seed,
                passed: reports.iter().all(|r| r.passed),
                lines: reports
                    .iter()
                    .map(|r| SuiteLine {
                        property: serde_json::to_value(r.kind).expect("kind").as_str().unwrap_or("?").to_string(),
                        passed: r.passed,
                        detail: format!(
                            "max ratio {:.4e} vs constant {:.4e}, min margin {:.4e}, {} violations, {} errors",
                            r.max_ratio,
                            r.constant,
                            r.min_margin,
                            r.violations.len(),
                            r.errors.len()
                        ),
                    })
                    .collect(),
                details: serde_json::to_value(&reports).expect("reports serialize"),
            }
        }
        other => {
            return Err(CliError::Usage(format!("unknown suite {other:?}; known suites: {}", SUITES.join(", "))));
        }
    };
    write_json(&out.file(&format!("verify_{suite}.json")), &report)?;
    Ok(report)
}

pub fn calibrate_constants(seed: Option<u64>, workers: usize, path: &Path) -> CliResult<Constants> {
    let c = calibrate(seed.unwrap_or(CALIBRATION_SEED), workers)?;
    write_atomic(path, c.to_json().as_bytes())?;
    Ok(c)
}

/// The reference patch: a disc of density 2 in a box of side 16 with an
/// off-center vortex, `mu = 1`, `nu = 10`, `gamma = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDemoReport {
    pub config_hash: String,
    pub n: usize,
    pub markers: usize,
    pub area: f64,
    pub perimeter: f64,
    pub curvature_max: f64,
    pub w2p_seminorm: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub nondegeneracy: f64,
    pub family_norm: f64,
}

/// Writes the reference patch config, its initial snapshot, the marker curve and geometry figures.
pub fn patch_demo(n: usize, t_end: f64, out: &OutputDir) -> CliResult<PatchDemoReport> {
    let cfg = RunConfig::reference_patch(n, t_end);
    cfg.validate()?;
    let loaded = LoadedConfig::from_config(cfg);
    let toml_text = toml::to_string_pretty(&loaded.config).map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&out.file("patch.toml"), toml_text.as_bytes())?;
    let grid = Grid::new(n, 16.0)?;
    let spec = loaded.config.initial.patch().expect("reference config is a patch");
    let rho = build_patch_density(spec, &grid)?;
    let family = build_tangential_family(spec, &grid, loaded.config.simulation.striated_p)?;
    let markers = MarkerCurve::for_grid(&spec.boundary, &grid)?;
    write_atomic(&out.file(CURVE_FILE), markers.to_csv().as_bytes())?;
    let traj = Trajectory::start(&loaded.config)?;
    Snapshot::of(&traj, &loaded.canonical, &loaded.hash).write(&out.file("initial.sns"))?;
    let geometry = interface_regularity(&markers, loaded.config.simulation.striated_p)?;
    let report = PatchDemoReport {
        config_hash: loaded.hash.clone(),
        n,
        markers: markers.len(),
        area: markers.area(),
        perimeter: markers.perimeter(),
        curvature_max: geometry.curvature_max,
        w2p_seminorm: geometry.w2p_seminorm,
        rho_min: rho.min(),
        rho_max: rho.max(),
        nondegeneracy: family.nondegeneracy().value,
        family_norm: family_norm(&SpectralOps::new(grid), &family, family.p)?,
    };
    write_json(&out.file("patch_demo.json"), &report)?;
    Ok(report)
}
