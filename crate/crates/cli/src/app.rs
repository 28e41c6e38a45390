//! Argument parsing and dispatch for the `corrdiv` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::{cmd_calibrate, cmd_compare, cmd_run, CliError, Overrides};

/// Zero-forcing MU-MIMO correlation-diversity simulator.
#[derive(Parser)]
#[command(name = "corrdiv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for drop-level parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write drops.csv, summary.csv and scenario.toml.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate several comparable scenarios and write CDFs and median gains.
    Compare {
        /// Repeat for each scenario (at least two).
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the attenuation constant so the 5th-percentile SNR is 0 dB.
    Calibrate {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for the resolved scenario (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 2 for bad input, 1 for run failures.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let overrides = Overrides { seed: cli.seed, workers: cli.workers };
    match dispatch(cli.command, &overrides, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, overrides: &Overrides, w: &mut dyn Write) -> Result<(), CliError> {
    // Console output is best effort; results live in the written files.
    macro_rules! say {
        ($($arg:tt)*) => { let _ = writeln!(w, $($arg)*); };
    }
    match command {
        Command::Run { scenario, out } => {
            let o = cmd_run(&scenario, &out, overrides)?;
            if let Some(cal) = o.calibration {
                say!("calibrated attenuation constant {}", cal.attenuation_constant);
            }
            let s = &o.result.summary;
            say!(
                "{} drops ({} aborted): median expected SNR {:.3} dB simulated, {:.3} dB closed form; median |gap| {:.3} dB",
                s.drops,
                s.aborted_drops,
                s.expected_snr_db.median,
                s.closed_form_snr_db.median,
                s.median_abs_gap_db
            );
            say!("wrote {}", out.display());
        }
        Command::Compare { scenario, out } => {
            let o = cmd_compare(&scenario, &out, overrides)?;
            for (label, r) in o.labels.iter().zip(&o.results) {
                say!("{label}: median expected SNR {:.3} dB", r.summary.expected_snr_db.median);
            }
            for g in &o.gains {
                say!(
                    "{} -> {}: {:+.3} dB simulated, {:+.3} dB closed form",
                    g.from_label,
                    g.to_label,
                    g.median_gain_sim_db,
                    g.median_gain_cf_db
                );
            }
            say!("wrote {}", out.display());
        }
        Command::Calibrate { scenario, out } => {
            let o = cmd_calibrate(&scenario, out.as_deref(), overrides)?;
            say!("attenuation_constant = {}", o.calibration.attenuation_constant);
            say!("achieved 5th percentile = {} dB", o.calibration.achieved_percentile_db);
            say!("wrote {}", o.written.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::commands::{DROPS_FILE, MANIFEST_FILE, SUMMARY_FILE};
    use crate::output::DROPS_HEADER;
    use crate::ScenarioFile;

    const MINIMAL: &str = "m = 8\nl = 2\n\n[model]\ntype = \"exponential\"\nxi = 0.9\n\n[run]\nn_drops = 2\nn_fading = 10\nseed = 7\n";

    fn invoke(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("corrdiv").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn read(path: impl AsRef<Path>) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn minimal_run_writes_one_row_per_drop_and_terminal() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "minimal.toml", MINIMAL);
        let out = dir.path().join("out");
        let (code, _, err) = invoke(&["run", "--scenario", &scenario, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");

        let drops = read(out.join(DROPS_FILE));
        let mut lines = drops.lines();
        assert_eq!(lines.next().unwrap(), DROPS_HEADER.join(","));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.split(',').count() == DROPS_HEADER.len()));
        assert!(read(out.join(SUMMARY_FILE)).starts_with("metric,value\n"));
    }

    #[test]
    fn invalid_xi_exits_2_and_names_key() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "bad.toml", &MINIMAL.replace("xi = 0.9", "xi = 1.5"));
        let (code, _, err) = invoke(&["run", "--scenario", &scenario, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(code, 2);
        assert!(err.contains("model.xi") && err.contains("bad.toml:6:"), "{err}");
        assert!(!dir.path().join("o").exists());
    }

    #[test]
    fn unknown_key_and_missing_file_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "typo.toml", &MINIMAL.replace("seed = 7", "sead = 7"));
        let (code, _, err) = invoke(&["run", "--scenario", &scenario, "--out", "unused"]);
        assert_eq!(code, 2);
        assert!(err.contains("sead"), "{err}");
        let (code, _, _) = invoke(&["run", "--scenario", "/nonexistent/s.toml", "--out", "unused"]);
        assert_eq!(code, 1);
        let (code, _, _) = invoke(&["run", "--scenario"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn reruns_are_byte_identical_for_any_worker_count() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "s.toml", &MINIMAL.replace("n_drops = 2", "n_drops = 6"));
        let mut outputs = Vec::new();
        for (i, workers) in ["1", "1", "3"].iter().enumerate() {
            let out = dir.path().join(format!("out{i}"));
            let (code, _, err) = invoke(&["run", "--scenario", &scenario, "--out", out.to_str().unwrap(), "--workers", workers]);
            assert_eq!(code, 0, "{err}");
            outputs.push([DROPS_FILE, SUMMARY_FILE, MANIFEST_FILE].map(|f| std::fs::read(out.join(f)).unwrap()));
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn seed_override_lands_in_manifest_and_changes_results() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "s.toml", MINIMAL);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        assert_eq!(invoke(&["run", "--scenario", &scenario, "--out", a.to_str().unwrap()]).0, 0);
        assert_eq!(invoke(&["--seed", "99", "run", "--scenario", &scenario, "--out", b.to_str().unwrap()]).0, 0);
        let manifest = ScenarioFile::read(&b.join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.scenario.seed, 99);
        assert_ne!(read(a.join(DROPS_FILE)), read(b.join(DROPS_FILE)));
    }

    #[test]
    fn manifest_round_trips_to_identical_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(
            dir.path(),
            "s.toml",
            "m = 8\nl = 3\nrho_t_db = 2.5\n[model]\ntype = \"one_ring\"\nangular_spread_deg = \"measured\"\n\
             mean_doa = [-45, 45]\n[model.measured]\nspread_std_deg = 4.0\n[geometry]\nattenuation_constant = 3e-7\n\
             [run]\nn_drops = 2\nn_fading = 5\nseed = 12345678901234\n",
        );
        let out = dir.path().join("out");
        assert_eq!(invoke(&["run", "--scenario", &scenario, "--out", out.to_str().unwrap()]).0, 0);
        let original = ScenarioFile::read(Path::new(&scenario)).unwrap();
        let manifest = ScenarioFile::read(&out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(original, manifest);
        assert_eq!(manifest.to_toml(), read(out.join(MANIFEST_FILE)));
    }

    #[test]
    fn self_comparison_gives_zero_gain() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "s.toml", MINIMAL);
        let out = dir.path().join("cmp");
        let (code, stdout, err) = invoke(&["compare", "--scenario", &scenario, "--scenario", &scenario, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        assert!(stdout.contains("+0.000 dB simulated"), "{stdout}");
        let gains = read(out.join("gains.csv"));
        let row: Vec<&str> = gains.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&row[4..], ["0", "0"]);
        // Two scenarios × (sim, cf) × 4 samples each.
        assert_eq!(read(out.join("cdf.csv")).lines().count(), 1 + 2 * 2 * 4);
    }

    #[test]
    fn incompatible_comparison_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.toml", MINIMAL);
        let b = write(dir.path(), "b.toml", &MINIMAL.replace("l = 2", "l = 3"));
        let (code, _, err) = invoke(&["compare", "--scenario", &a, "--scenario", &b, "--out", "unused"]);
        assert_eq!(code, 2);
        assert!(err.contains("incompatible") && err.contains("differ in l"), "{err}");
        let (code, _, _) = invoke(&["compare", "--scenario", &a, "--out", "unused"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn calibrate_requires_flag() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "s.toml", MINIMAL);
        let (code, _, err) = invoke(&["calibrate", "--scenario", &scenario]);
        assert_eq!(code, 2);
        assert!(err.contains("geometry.calibrate"), "{err}");
    }

    #[test]
    fn calibrate_is_deterministic_and_writes_resolved_file() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = write(dir.path(), "cal.toml", &format!("{MINIMAL}[geometry]\ncalibrate = true\n"));
        let (code, first, err) = invoke(&["calibrate", "--scenario", &scenario]);
        assert_eq!(code, 0, "{err}");
        let (_, second, _) = invoke(&["calibrate", "--scenario", &scenario]);
        assert_eq!(first, second);

        let resolved = ScenarioFile::read(&dir.path().join("cal.calibrated.toml")).unwrap();
        assert!(!resolved.calibrate);
        let a: f64 = first.lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
        assert_eq!(resolved.scenario.geometry.attenuation_constant, a);
    }
}
