use std::path::{Path, PathBuf};

use corrdiv::{
    calibrate_attenuation_constant, empirical_cdf, median_gain_db, run_scenario, Calibration, ScenarioResult,
};

use crate::error::{CliError, Position};
use crate::output::{self, GainRow};
use crate::scenario_file::{resolved_path, ScenarioFile};

pub const DROPS_FILE: &str = "drops.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "scenario.toml";
pub const CDF_FILE: &str = "cdf.csv";
pub const GAINS_FILE: &str = "gains.csv";

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the default pool size.
    pub workers: usize,
}

impl Overrides {
    fn load(&self, path: &Path) -> Result<ScenarioFile, CliError> {
        let mut sf = ScenarioFile::read(path)?;
        if let Some(seed) = self.seed {
            sf.scenario.seed = seed;
        }
        Ok(sf)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    /// Resolved scenario, with the calibrated constant filled in when requested.
    pub scenario: ScenarioFile,
    pub calibration: Option<Calibration>,
    pub result: ScenarioResult,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub labels: Vec<String>,
    pub results: Vec<ScenarioResult>,
    pub gains: Vec<GainRow>,
    pub calibration: Option<Calibration>,
}

#[derive(Debug)]
pub struct CalibrateOutcome {
    pub calibration: Calibration,
    pub resolved: ScenarioFile,
    pub written: PathBuf,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Replaces a calibration request by the computed constant.
fn resolve_calibration(sf: &mut ScenarioFile, cal: &Calibration) {
    sf.scenario.geometry.attenuation_constant = cal.attenuation_constant;
    sf.calibrate = false;
}

/// Runs one scenario and writes `drops.csv`, `summary.csv` and the resolved
/// `scenario.toml` into `out_dir`.
pub fn cmd_run(scenario_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<RunOutcome, CliError> {
    let mut sf = overrides.load(scenario_path)?;
    let calibration = if sf.calibrate {
        let cal = calibrate_attenuation_constant(&sf.scenario)?;
        resolve_calibration(&mut sf, &cal);
        Some(cal)
    } else {
        None
    };
    let result = run_scenario(&sf.scenario, overrides.workers)?;

    create_dir(out_dir)?;
    output::write_drops(&out_dir.join(DROPS_FILE), &result)?;
    output::write_summary(&out_dir.join(SUMMARY_FILE), &result.summary, sf.scenario.geometry.attenuation_constant)?;
    write_text(&out_dir.join(MANIFEST_FILE), &sf.to_toml())?;
    Ok(RunOutcome { scenario: sf, calibration, result })
}

fn label_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Runs several comparable scenarios and writes their expected-SNR CDFs and
/// the pairwise median gains (later file over earlier file).
///
/// Scenarios that request calibration share one constant, computed from the
/// first of them, so differences reflect correlation alone.
pub fn cmd_compare(scenario_paths: &[PathBuf], out_dir: &Path, overrides: &Overrides) -> Result<CompareOutcome, CliError> {
    if scenario_paths.len() < 2 {
        return Err(CliError::Usage("compare needs at least two scenarios".into()));
    }
    let mut files = scenario_paths.iter().map(|p| overrides.load(p)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = scenario_paths.iter().map(|p| label_of(p)).collect();
    for (sf, label) in files.iter().zip(&labels).skip(1) {
        if sf.calibrate != files[0].calibrate {
            return Err(CliError::Incompatible(format!("{label} and {} disagree on geometry.calibrate", labels[0])));
        }
        files[0].scenario.check_comparable(&sf.scenario).map_err(|e| match e {
            corrdiv::Error::InvalidParameter { reason, .. } => {
                CliError::Incompatible(format!("{label} vs {}: {reason}", labels[0]))
            }
            other => CliError::Run(other),
        })?;
    }
    let calibration = if files[0].calibrate {
        let cal = calibrate_attenuation_constant(&files[0].scenario)?;
        files.iter_mut().for_each(|sf| resolve_calibration(sf, &cal));
        Some(cal)
    } else {
        None
    };

    let results = files
        .iter()
        .map(|sf| run_scenario(&sf.scenario, overrides.workers))
        .collect::<Result<Vec<_>, _>>()?;
    let mut curves = Vec::with_capacity(results.len());
    for (label, r) in labels.iter().zip(&results) {
        curves.push((label.clone(), empirical_cdf(&r.expected_snr_db())?, empirical_cdf(&r.closed_form_snr_db())?));
    }
    let mut gains = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let (a, b) = (&results[i].summary, &results[j].summary);
            gains.push(GainRow {
                from: i,
                from_label: labels[i].clone(),
                to: j,
                to_label: labels[j].clone(),
                median_gain_sim_db: median_gain_db(a, b),
                median_gain_cf_db: b.closed_form_snr_db.median - a.closed_form_snr_db.median,
            });
        }
    }

    create_dir(out_dir)?;
    output::write_cdfs(&out_dir.join(CDF_FILE), &curves)?;
    output::write_gains(&out_dir.join(GAINS_FILE), &gains)?;
    for (i, sf) in files.iter().enumerate() {
        write_text(&out_dir.join(format!("scenario_{i}.toml")), &sf.to_toml())?;
    }
    Ok(CompareOutcome { labels, results, gains, calibration })
}

/// Calibrates the attenuation constant of a scenario with
/// `geometry.calibrate = true` and writes the resolved scenario as
/// `<stem>.calibrated.toml` in `out_dir` (default: next to the input).
pub fn cmd_calibrate(
    scenario_path: &Path,
    out_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<CalibrateOutcome, CliError> {
    let mut sf = overrides.load(scenario_path)?;
    if !sf.calibrate {
        return Err(CliError::Parse {
            path: scenario_path.to_path_buf(),
            position: Position::default(),
            message: "geometry.calibrate: must be true for the calibrate command".into(),
        });
    }
    let calibration = calibrate_attenuation_constant(&sf.scenario)?;
    resolve_calibration(&mut sf, &calibration);
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => scenario_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    create_dir(&dir)?;
    let written = resolved_path(&dir, scenario_path, "calibrated");
    write_text(&written, &sf.to_toml())?;
    Ok(CalibrateOutcome { calibration, resolved: sf, written })
}

