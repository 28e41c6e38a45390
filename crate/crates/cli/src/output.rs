//! Comma-separated result tables. Floats use Rust's shortest round-trip
//! formatting, so values survive a text round trip exactly.

use std::path::Path;

use corrdiv::{to_db, EmpiricalCdf, Percentiles, RunSummary, ScenarioResult};

use crate::error::CliError;

pub const DROPS_HEADER: [&str; 7] =
    ["drop", "terminal", "distance_m", "beta_db", "expected_snr_sim_db", "expected_snr_cf_db", "trace_sq"];
pub const SUMMARY_HEADER: [&str; 2] = ["metric", "value"];
pub const CDF_HEADER: [&str; 6] = ["scenario", "label", "quantity", "rank", "snr_db", "cdf"];
pub const GAINS_HEADER: [&str; 6] = ["from", "from_label", "to", "to_label", "median_gain_sim_db", "median_gain_cf_db"];

fn write_table<R>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError>
where
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// One row per drop per terminal.
pub fn write_drops(path: &Path, result: &ScenarioResult) -> Result<(), CliError> {
    let rows = result.drops.iter().flat_map(|d| {
        d.terminals.iter().enumerate().map(move |(t, term)| {
            vec![
                d.drop_index.to_string(),
                t.to_string(),
                term.distance_m.to_string(),
                to_db(term.link_gain).to_string(),
                d.per_terminal_expected_snr_db[t].to_string(),
                d.per_terminal_closed_form_snr_db[t].to_string(),
                d.trace_sq.to_string(),
            ]
        })
    });
    write_table(path, &DROPS_HEADER, rows)
}

pub fn summary_rows(summary: &RunSummary, attenuation_constant: f64) -> Vec<(String, String)> {
    let mut rows = vec![
        ("drops".to_string(), summary.drops.to_string()),
        ("aborted_drops".to_string(), summary.aborted_drops.to_string()),
        ("rejected_trials".to_string(), summary.rejected_trials.to_string()),
        ("attenuation_constant".to_string(), attenuation_constant.to_string()),
    ];
    let mut stats = |prefix: &str, p: &Percentiles| {
        for (name, v) in [("mean", p.mean), ("median", p.median), ("p5", p.p5), ("p95", p.p95)] {
            rows.push((format!("{prefix}_{name}"), v.to_string()));
        }
    };
    stats("expected_snr_sim_db", &summary.expected_snr_db);
    stats("expected_snr_cf_db", &summary.closed_form_snr_db);
    stats("sum_se_sim_bits", &summary.sum_se_sim_bits);
    stats("sum_se_cf_bits", &summary.sum_se_cf_bits);
    rows.extend([
        ("mean_abs_gap_db".to_string(), summary.mean_abs_gap_db.to_string()),
        ("median_abs_gap_db".to_string(), summary.median_abs_gap_db.to_string()),
        ("mean_trace_sq".to_string(), summary.mean_trace_sq.to_string()),
        ("mean_eta_cv".to_string(), summary.mean_eta_cv.to_string()),
    ]);
    rows
}

pub fn write_summary(path: &Path, summary: &RunSummary, attenuation_constant: f64) -> Result<(), CliError> {
    let rows = summary_rows(summary, attenuation_constant).into_iter().map(|(k, v)| [k, v]);
    write_table(path, &SUMMARY_HEADER, rows)
}

/// Empirical CDFs of simulated and closed-form expected SNR, stacked per scenario.
pub fn write_cdfs(path: &Path, curves: &[(String, EmpiricalCdf, EmpiricalCdf)]) -> Result<(), CliError> {
    let rows = curves.iter().enumerate().flat_map(|(i, (label, sim, cf))| {
        [("sim", sim), ("cf", cf)].into_iter().flat_map(move |(quantity, cdf)| {
            cdf.points().into_iter().enumerate().map(move |(rank, (x, f))| {
                vec![i.to_string(), label.clone(), quantity.to_string(), rank.to_string(), x.to_string(), f.to_string()]
            })
        })
    });
    write_table(path, &CDF_HEADER, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub from: usize,
    pub from_label: String,
    pub to: usize,
    pub to_label: String,
    pub median_gain_sim_db: f64,
    pub median_gain_cf_db: f64,
}

pub fn write_gains(path: &Path, gains: &[GainRow]) -> Result<(), CliError> {
    let rows = gains.iter().map(|g| {
        vec![
            g.from.to_string(),
            g.from_label.clone(),
            g.to.to_string(),
            g.to_label.clone(),
            g.median_gain_sim_db.to_string(),
            g.median_gain_cf_db.to_string(),
        ]
    });
    write_table(path, &GAINS_HEADER, rows)
}
