//! TOML scenario files.
//!
//! ```toml
//! m = 64
//! l = 6
//! rho_t_db = 5.0
//!
//! [model]
//! type = "clerckx"
//! xi = 0.9
//! phase_range_deg = [0.0, 14.0]
//!
//! [geometry]
//! calibrate = true
//!
//! [run]
//! n_drops = 200
//! n_fading = 500
//! seed = 1
//! ```
//!
//! Every key is checked at parse time; errors carry the line and column of
//! the offending key.

use std::ops::Range;
use std::path::{Path, PathBuf};

use corrdiv::{
    ClosedFormVariant, CorrelationModelSpec, DoaSpec, Error as CoreError, GeometryConfig, MeasuredAngularModel, Scenario,
    SpreadSpec,
};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::CliError;

/// A parsed scenario plus the file-level calibration request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    /// When set, the attenuation constant is computed before running.
    pub calibrate: bool,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        parse(&text, path)
    }

    /// Resolved form: every key explicit, so parsing it back gives the same value.
    pub fn to_toml(&self) -> String {
        let s = &self.scenario;
        let model = match s.model {
            CorrelationModelSpec::Identity => OutModel { kind: "identity", ..OutModel::default() },
            CorrelationModelSpec::Exponential { xi } => OutModel { kind: "exponential", xi: Some(xi), ..OutModel::default() },
            CorrelationModelSpec::Clerckx { xi, phase_range_deg: (lo, hi) } => OutModel {
                kind: "clerckx",
                xi: Some(xi),
                phase_range_deg: Some([lo, hi]),
                ..OutModel::default()
            },
            CorrelationModelSpec::OneRing { angular_spread, mean_doa, spacing_wavelengths } => OutModel {
                kind: "one_ring",
                angular_spread_deg: Some(match angular_spread {
                    SpreadSpec::Fixed(v) => AngleValue::Degrees(v),
                    SpreadSpec::Measured => AngleValue::Keyword(MEASURED.to_string()),
                }),
                mean_doa: Some(match mean_doa {
                    DoaSpec::Fixed(v) => AngleValue::Degrees(v),
                    DoaSpec::Uniform { low_deg, high_deg } => AngleValue::Range([low_deg, high_deg]),
                    DoaSpec::Measured => AngleValue::Keyword(MEASURED.to_string()),
                }),
                spacing_wavelengths: Some(spacing_wavelengths),
                measured: s.measured_model.map(|mm| OutMeasured {
                    spread_mean_deg: mm.spread_mean_deg,
                    spread_std_deg: mm.spread_std_deg,
                    spread_floor_deg: mm.spread_floor_deg,
                }),
                ..OutModel::default()
            },
        };
        let g = &s.geometry;
        let out = OutScenario {
            m: s.m,
            l: s.l,
            rho_t_db: s.rho_t_db,
            sigma2: s.sigma2,
            closed_form: match s.closed_form {
                ClosedFormVariant::Derived => "derived",
                ClosedFormVariant::Literal => "literal",
            },
            model,
            geometry: OutGeometry {
                cell_radius_m: g.cell_radius_m,
                reference_distance_m: g.reference_distance_m,
                alpha: g.attenuation_exponent,
                sigma_sh_db: g.shadowing_std_db,
                attenuation_constant: (!self.calibrate).then_some(g.attenuation_constant),
                calibrate: self.calibrate.then_some(true),
            },
            run: OutRun { n_drops: s.n_drops as u64, n_fading: s.n_fading as u64, seed: s.seed },
        };
        toml::to_string(&out).expect("scenario serializes to TOML")
    }
}

const MEASURED: &str = "measured";

/// Parses and validates scenario text. `path` is only used in diagnostics.
pub fn parse(text: &str, path: &Path) -> Result<ScenarioFile, CliError> {
    let at = |span: Option<Range<usize>>, message: String| CliError::parse(path, text, span, message);
    let raw: RawScenario = toml::from_str(text).map_err(|e| at(e.span(), e.message().trim().to_string()))?;
    let diag = Diagnostics { path, text, raw: &raw };

    let model = diag.model()?;
    let (geometry, calibrate) = diag.geometry()?;
    let run = raw.run.as_ref().map(|r| r.get_ref());
    let closed_form = match raw.closed_form.as_ref() {
        None => ClosedFormVariant::Derived,
        Some(v) => match v.get_ref().as_str() {
            "derived" => ClosedFormVariant::Derived,
            "literal" => ClosedFormVariant::Literal,
            other => return Err(at(Some(v.span()), format!("closed_form: expected \"derived\" or \"literal\", got \"{other}\""))),
        },
    };
    let measured_model = raw
        .model
        .get_ref()
        .measured
        .as_ref()
        .map(|mm| {
            let mm = mm.get_ref();
            let d = MeasuredAngularModel::default();
            MeasuredAngularModel {
                spread_mean_deg: value_or(&mm.spread_mean_deg, d.spread_mean_deg),
                spread_std_deg: value_or(&mm.spread_std_deg, d.spread_std_deg),
                spread_floor_deg: value_or(&mm.spread_floor_deg, d.spread_floor_deg),
                ..d
            }
        });
    let base = Scenario::baseline();
    let scenario = Scenario {
        m: to_usize(&raw.m),
        l: to_usize(&raw.l),
        rho_t_db: value_or(&raw.rho_t_db, base.rho_t_db),
        sigma2: value_or(&raw.sigma2, base.sigma2),
        model,
        geometry,
        measured_model,
        n_drops: run.and_then(|r| r.n_drops.as_ref()).map_or(base.n_drops, to_usize),
        n_fading: run.and_then(|r| r.n_fading.as_ref()).map_or(base.n_fading, to_usize),
        seed: run.and_then(|r| r.seed.as_ref()).map_or(base.seed, |s| *s.get_ref()),
        closed_form,
    };
    scenario.validate().map_err(|e| diag.locate(e))?;
    Ok(ScenarioFile { scenario, calibrate })
}

fn value_or(v: &Option<Spanned<f64>>, default: f64) -> f64 {
    v.as_ref().map_or(default, |s| *s.get_ref())
}

/// Negative counts become 0, which validation then rejects at the same key.
fn to_usize(v: &Spanned<i64>) -> usize {
    usize::try_from(*v.get_ref()).unwrap_or(0)
}

struct Diagnostics<'a> {
    path: &'a Path,
    text: &'a str,
    raw: &'a RawScenario,
}

impl Diagnostics<'_> {
    fn error(&self, span: Option<Range<usize>>, message: String) -> CliError {
        CliError::parse(self.path, self.text, span, message)
    }

    fn model(&self) -> Result<CorrelationModelSpec, CliError> {
        let spanned = &self.raw.model;
        let m = spanned.get_ref();
        let kind = m.kind.get_ref().as_str();
        let allowed: &[&str] = match kind {
            "identity" => &[],
            "exponential" => &["xi"],
            "clerckx" => &["xi", "phase_range_deg"],
            "one_ring" => &["angular_spread_deg", "mean_doa", "spacing_wavelengths", "measured"],
            other => {
                return Err(self.error(
                    Some(m.kind.span()),
                    format!("model.type: expected one of \"identity\", \"exponential\", \"clerckx\", \"one_ring\", got \"{other}\""),
                ))
            }
        };
        for (key, span) in m.present() {
            if !allowed.contains(&key) {
                return Err(self.error(Some(span), format!("model.{key}: not used by model type \"{kind}\"")));
            }
        }
        let required = |v: Option<&Spanned<f64>>, key: &str| -> Result<f64, CliError> {
            v.map(|s| *s.get_ref())
                .ok_or_else(|| self.error(Some(spanned.span()), format!("model.{key}: required for model type \"{kind}\"")))
        };
        let keyword = |s: &Spanned<AngleValue>, key: &str, allow_range: bool| -> Result<AngleValue, CliError> {
            match s.get_ref() {
                AngleValue::Keyword(k) if k != MEASURED => {
                    Err(self.error(Some(s.span()), format!("model.{key}: expected a number of degrees or \"measured\", got \"{k}\"")))
                }
                AngleValue::Range(_) if !allow_range => {
                    Err(self.error(Some(s.span()), format!("model.{key}: expected a number of degrees or \"measured\"")))
                }
                v => Ok(v.clone()),
            }
        };
        Ok(match kind {
            "identity" => CorrelationModelSpec::Identity,
            "exponential" => CorrelationModelSpec::Exponential { xi: required(m.xi.as_ref(), "xi")? },
            "clerckx" => {
                let range = m.phase_range_deg.as_ref().ok_or_else(|| {
                    self.error(Some(spanned.span()), "model.phase_range_deg: required for model type \"clerckx\"".into())
                })?;
                let [lo, hi] = *range.get_ref();
                CorrelationModelSpec::Clerckx { xi: required(m.xi.as_ref(), "xi")?, phase_range_deg: (lo, hi) }
            }
            _ => {
                let missing = |key: &str| self.error(Some(spanned.span()), format!("model.{key}: required for model type \"one_ring\""));
                let spread = m.angular_spread_deg.as_ref().ok_or_else(|| missing("angular_spread_deg"))?;
                let doa = m.mean_doa.as_ref().ok_or_else(|| missing("mean_doa"))?;
                let angular_spread = match keyword(spread, "angular_spread_deg", false)? {
                    AngleValue::Degrees(v) => SpreadSpec::Fixed(v),
                    _ => SpreadSpec::Measured,
                };
                let mean_doa = match keyword(doa, "mean_doa", true)? {
                    AngleValue::Degrees(v) => DoaSpec::Fixed(v),
                    AngleValue::Range([low_deg, high_deg]) => DoaSpec::Uniform { low_deg, high_deg },
                    AngleValue::Keyword(_) => DoaSpec::Measured,
                };
                if m.measured.is_some()
                    && !matches!(angular_spread, SpreadSpec::Measured)
                    && !matches!(mean_doa, DoaSpec::Measured)
                {
                    let span = m.measured.as_ref().map(|s| s.span());
                    return Err(self.error(span, "model.measured: only used when a one-ring parameter is \"measured\"".into()));
                }
                CorrelationModelSpec::OneRing {
                    angular_spread,
                    mean_doa,
                    spacing_wavelengths: m.spacing_wavelengths.as_ref().map_or(0.5, |s| *s.get_ref()),
                }
            }
        })
    }

    fn geometry(&self) -> Result<(GeometryConfig, bool), CliError> {
        let d = GeometryConfig::default();
        let Some(spanned) = self.raw.geometry.as_ref() else {
            return Ok((d, false));
        };
        let g = spanned.get_ref();
        let calibrate = g.calibrate.as_ref().is_some_and(|c| *c.get_ref());
        if calibrate {
            if let Some(a) = &g.attenuation_constant {
                return Err(self.error(
                    Some(a.span()),
                    "geometry.attenuation_constant: cannot be combined with calibrate = true".into(),
                ));
            }
        }
        Ok((
            GeometryConfig {
                cell_radius_m: value_or(&g.cell_radius_m, d.cell_radius_m),
                reference_distance_m: value_or(&g.reference_distance_m, d.reference_distance_m),
                attenuation_exponent: value_or(&g.alpha, d.attenuation_exponent),
                shadowing_std_db: value_or(&g.sigma_sh_db, d.shadowing_std_db),
                attenuation_constant: value_or(&g.attenuation_constant, d.attenuation_constant),
            },
            calibrate,
        ))
    }

    /// Attaches the file position of the key a core validation error refers to.
    fn locate(&self, err: CoreError) -> CliError {
        let CoreError::InvalidParameter { name, reason } = &err else {
            return self.error(None, err.to_string());
        };
        let r = self.raw;
        let model = r.model.get_ref();
        let geometry = r.geometry.as_ref().map(|g| g.get_ref());
        let measured = model.measured.as_ref().map(|m| m.get_ref());
        let run = r.run.as_ref().map(|g| g.get_ref());
        let f = |v: &Option<Spanned<f64>>| v.as_ref().map(|s| s.span());
        let (key, span) = match *name {
            "m" => ("m", Some(r.m.span())),
            "l" => ("l", Some(r.l.span())),
            "rho_t_db" => ("rho_t_db", f(&r.rho_t_db)),
            "sigma2" => ("sigma2", f(&r.sigma2)),
            "xi" => ("model.xi", f(&model.xi)),
            "phase_range_deg" => ("model.phase_range_deg", model.phase_range_deg.as_ref().map(|s| s.span())),
            "angular_spread_deg" => ("model.angular_spread_deg", model.angular_spread_deg.as_ref().map(|s| s.span())),
            "mean_doa" => ("model.mean_doa", model.mean_doa.as_ref().map(|s| s.span())),
            "spacing_wavelengths" => ("model.spacing_wavelengths", f(&model.spacing_wavelengths)),
            "spread_mean_deg" => ("model.measured.spread_mean_deg", measured.and_then(|m| f(&m.spread_mean_deg))),
            "spread_std_deg" => ("model.measured.spread_std_deg", measured.and_then(|m| f(&m.spread_std_deg))),
            "spread_floor_deg" => ("model.measured.spread_floor_deg", measured.and_then(|m| f(&m.spread_floor_deg))),
            "reference_distance_m" => (
                "geometry.reference_distance_m",
                geometry.and_then(|g| f(&g.reference_distance_m).or(f(&g.cell_radius_m))),
            ),
            "alpha" => ("geometry.alpha", geometry.and_then(|g| f(&g.alpha))),
            "sigma_sh_db" => ("geometry.sigma_sh_db", geometry.and_then(|g| f(&g.sigma_sh_db))),
            "attenuation_constant" => ("geometry.attenuation_constant", geometry.and_then(|g| f(&g.attenuation_constant))),
            "n_drops" => ("run.n_drops", run.and_then(|r| r.n_drops.as_ref().map(|s| s.span()))),
            "n_fading" => ("run.n_fading", run.and_then(|r| r.n_fading.as_ref().map(|s| s.span()))),
            other => (other, None),
        };
        self.error(span, format!("{key}: {reason}"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    m: Spanned<i64>,
    l: Spanned<i64>,
    rho_t_db: Option<Spanned<f64>>,
    sigma2: Option<Spanned<f64>>,
    closed_form: Option<Spanned<String>>,
    model: Spanned<RawModel>,
    geometry: Option<Spanned<RawGeometry>>,
    run: Option<Spanned<RawRun>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "type")]
    kind: Spanned<String>,
    xi: Option<Spanned<f64>>,
    phase_range_deg: Option<Spanned<[f64; 2]>>,
    angular_spread_deg: Option<Spanned<AngleValue>>,
    mean_doa: Option<Spanned<AngleValue>>,
    spacing_wavelengths: Option<Spanned<f64>>,
    measured: Option<Spanned<RawMeasured>>,
}

impl RawModel {
    fn present(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut keys = Vec::new();
        let mut push = |k, s: Option<Range<usize>>| {
            if let Some(s) = s {
                keys.push((k, s));
            }
        };
        push("xi", self.xi.as_ref().map(|s| s.span()));
        push("phase_range_deg", self.phase_range_deg.as_ref().map(|s| s.span()));
        push("angular_spread_deg", self.angular_spread_deg.as_ref().map(|s| s.span()));
        push("mean_doa", self.mean_doa.as_ref().map(|s| s.span()));
        push("spacing_wavelengths", self.spacing_wavelengths.as_ref().map(|s| s.span()));
        push("measured", self.measured.as_ref().map(|s| s.span()));
        keys
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasured {
    spread_mean_deg: Option<Spanned<f64>>,
    spread_std_deg: Option<Spanned<f64>>,
    spread_floor_deg: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    cell_radius_m: Option<Spanned<f64>>,
    reference_distance_m: Option<Spanned<f64>>,
    alpha: Option<Spanned<f64>>,
    sigma_sh_db: Option<Spanned<f64>>,
    attenuation_constant: Option<Spanned<f64>>,
    calibrate: Option<Spanned<bool>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n_drops: Option<Spanned<i64>>,
    n_fading: Option<Spanned<i64>>,
    seed: Option<Spanned<u64>>,
}

/// Degrees, a keyword such as "measured", or a [low, high] range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum AngleValue {
    Degrees(f64),
    Keyword(String),
    Range([f64; 2]),
}

#[derive(Serialize)]
struct OutScenario {
    m: usize,
    l: usize,
    rho_t_db: f64,
    sigma2: f64,
    closed_form: &'static str,
    model: OutModel,
    geometry: OutGeometry,
    run: OutRun,
}

#[derive(Serialize, Default)]
struct OutModel {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase_range_deg: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    angular_spread_deg: Option<AngleValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_doa: Option<AngleValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing_wavelengths: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured: Option<OutMeasured>,
}

#[derive(Serialize)]
struct OutMeasured {
    spread_mean_deg: f64,
    spread_std_deg: f64,
    spread_floor_deg: f64,
}

#[derive(Serialize)]
struct OutGeometry {
    cell_radius_m: f64,
    reference_distance_m: f64,
    alpha: f64,
    sigma_sh_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    attenuation_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibrate: Option<bool>,
}

#[derive(Serialize)]
struct OutRun {
    n_drops: u64,
    n_fading: u64,
    seed: u64,
}

/// Output path for a resolved copy of `scenario_path` inside `dir`.
pub fn resolved_path(dir: &Path, scenario_path: &Path, suffix: &str) -> PathBuf {
    let stem = scenario_path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    dir.join(format!("{stem}.{suffix}.toml"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Result<ScenarioFile, CliError> {
        parse(text, Path::new("test.toml"))
    }

    const MINIMAL: &str = "m = 8\nl = 2\n[model]\ntype = \"exponential\"\nxi = 0.9\n";

    #[test]
    fn minimal_file_takes_baseline_defaults() {
        let sf = p(MINIMAL).unwrap();
        assert!(!sf.calibrate);
        assert_eq!(
            sf.scenario,
            Scenario { m: 8, l: 2, ..Scenario::baseline() }
        );
    }

    #[test]
    fn out_of_range_xi_names_key_and_line() {
        let err = p("m = 8\nl = 2\n[model]\ntype = \"exponential\"\nxi = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.xi"), "{msg}");
        assert!(msg.contains("test.toml:5:"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let msg = p("m = 8\nl = 2\nfoo = 1\n[model]\ntype = \"identity\"\n").unwrap_err().to_string();
        assert!(msg.contains("foo") && msg.contains(":3:"), "{msg}");
        let msg = p("m = 8\nl = 2\n[model]\ntype = \"identity\"\n[run]\nseeds = 3\n").unwrap_err().to_string();
        assert!(msg.contains("seeds"), "{msg}");
    }

    #[test]
    fn keys_foreign_to_model_type_rejected() {
        let msg = p("m = 8\nl = 2\n[model]\ntype = \"exponential\"\nxi = 0.5\nmean_doa = 3\n").unwrap_err().to_string();
        assert!(msg.contains("model.mean_doa") && msg.contains(":6:"), "{msg}");
    }

    #[test]
    fn missing_required_model_key() {
        let msg = p("m = 8\nl = 2\n[model]\ntype = \"clerckx\"\nxi = 0.5\n").unwrap_err().to_string();
        assert!(msg.contains("phase_range_deg"), "{msg}");
    }

    #[test]
    fn calibrate_and_constant_conflict() {
        let msg = p(&format!("{MINIMAL}[geometry]\ncalibrate = true\nattenuation_constant = 2.0\n")).unwrap_err().to_string();
        assert!(msg.contains("attenuation_constant"), "{msg}");
    }

    #[test]
    fn dimension_errors_point_at_key() {
        let msg = p("m = 4\nl = 6\n[model]\ntype = \"identity\"\n").unwrap_err().to_string();
        assert!(msg.contains(":2:") && msg.contains("l:"), "{msg}");
        let msg = p("m = -4\nl = 6\n[model]\ntype = \"identity\"\n").unwrap_err().to_string();
        assert!(msg.contains(":1:"), "{msg}");
    }

    #[test]
    fn one_ring_forms_round_trip() {
        for (spread, doa) in [("14.02", "30"), ("\"measured\"", "\"measured\""), ("7", "[-60.0, 60.0]")] {
            let text = format!(
                "m = 16\nl = 3\n[model]\ntype = \"one_ring\"\nangular_spread_deg = {spread}\nmean_doa = {doa}\n\
                 [model.measured]\nspread_std_deg = 5.0\n[geometry]\ncalibrate = true\n"
            );
            let text = if spread.starts_with('"') || doa.starts_with('"') {
                text
            } else {
                text.replace("[model.measured]\nspread_std_deg = 5.0\n", "")
            };
            let sf = p(&text).unwrap();
            assert!(sf.calibrate);
            let again = p(&sf.to_toml()).unwrap();
            assert_eq!(sf, again, "{}", sf.to_toml());
        }
    }

    #[test]
    fn bad_keyword_rejected() {
        let msg = p("m = 8\nl = 2\n[model]\ntype = \"one_ring\"\nangular_spread_deg = \"wide\"\nmean_doa = 0\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("angular_spread_deg") && msg.contains(":5:"), "{msg}");
    }
}
