//! Scenario files: operating parameters, species, initial state, horizon and
//! tolerances, in TOML.
//!
//! ```toml
//! name = "canonical"            # optional
//!
//! [chemostat]
//! dilution = 1.0                # D > 0
//! s_in = 10.0                   # S_in > 0
//!
//! [[species]]
//! id = "A"
//! kind = "monod"                # monod | hill | table
//! mu_max = 3.0
//! k = 1.0
//! # hill:  mu_max, k, p (p >= 1)
//! # table: points = [[0, 0], [1, 0.5], ...]
//!
//! [initial]
//! s = 10.0
//! x = [0.01]                    # one entry per species
//!
//! [run]                         # optional
//! horizon = 80.0                # default 100 / D
//! dense_dt = 0.04               # default horizon / 2000
//!
//! [tolerances]                  # optional, see `Tolerances`
//! [certificate]                 # optional, see `CertificateSettings`
//! [certificate_override]        # optional, see `CertificateOverride`
//! ```

use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use crate::certificate::{
    CertificateOptions, CertificateOverride, DEFAULT_DELTA_MIN_FACTOR, DEFAULT_GRID_N,
};
use crate::dynamics::{Chemostat, ChemostatParams, State};
use crate::growth::{
    BreakEvenOptions, GrowthFunction, DEFAULT_EQ_TOL, DEFAULT_PROBE_FACTOR, DEFAULT_ROOT_TOL,
};
use crate::integrate::IntegratorSettings;

/// Environment variable overriding the default relative tolerance.
pub const ENV_REL_TOL: &str = "CHEMOSTAT_REL_TOL";
/// Environment variable overriding the default absolute tolerance.
pub const ENV_ABS_TOL: &str = "CHEMOSTAT_ABS_TOL";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: `{key}`: {message}")]
    Invalid {
        key: String,
        line: usize,
        message: String,
    },
    #[error("`{key}`: {message}")]
    Syntax { key: String, message: String },
    #[error("environment variable {name}={value:?} is not a tolerance in (0, 1)")]
    Env { name: String, value: String },
}

impl ScenarioError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Env { name, .. } => Some(name),
            ScenarioError::Invalid { key, .. } | ScenarioError::Syntax { key, .. } => Some(key),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeciesSpec {
    pub id: String,
    pub growth: GrowthFunction,
}

/// Thresholds used by the integrator and by the verification checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Final proportion below which a losing species counts as extinct.
    pub eps_p: f64,
    pub eps_final: f64,
    pub eps_mass: f64,
    pub eps_washout: f64,
    pub eps_floor: f64,
    /// Allowed excess of a fitted log-ratio slope over `-nu`, as a fraction of `nu`.
    pub slope_slack: f64,
    /// Exits from an interval shorter than this are ignored.
    pub persistence_grace: f64,
    pub pack_ratio_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            eps_p: 1e-4,
            eps_final: 1e-3,
            eps_mass: 1e-6,
            eps_washout: 1e-4,
            eps_floor: 1e-3,
            slope_slack: 0.1,
            persistence_grace: 0.0,
            pack_ratio_tol: 1e-6,
        }
    }
}

impl Tolerances {
    /// Defaults with the integrator tolerances taken from the environment when set.
    pub fn from_env() -> Result<Self, ScenarioError> {
        let read = |name: &str| -> Result<Option<f64>, ScenarioError> {
            let Ok(raw) = std::env::var(name) else {
                return Ok(None);
            };
            match raw.trim().parse::<f64>() {
                Ok(v) if v > 0.0 && v < 1.0 => Ok(Some(v)),
                _ => Err(ScenarioError::Env {
                    name: name.to_string(),
                    value: raw,
                }),
            }
        };
        let mut t = Tolerances::default();
        if let Some(v) = read(ENV_REL_TOL)? {
            t.rel_tol = v;
        }
        if let Some(v) = read(ENV_ABS_TOL)? {
            t.abs_tol = v;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSettings {
    pub grid_n: usize,
    pub eq_tol: f64,
    pub root_tol: f64,
    /// Break-even probe bound as a multiple of `S_in`.
    pub probe_factor: f64,
    pub delta_min_factor: f64,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        CertificateSettings {
            grid_n: DEFAULT_GRID_N,
            eq_tol: DEFAULT_EQ_TOL,
            root_tol: DEFAULT_ROOT_TOL,
            probe_factor: DEFAULT_PROBE_FACTOR,
            delta_min_factor: DEFAULT_DELTA_MIN_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: Option<String>,
    pub params: ChemostatParams,
    pub species: Vec<SpeciesSpec>,
    pub initial: State,
    pub horizon: f64,
    pub dense_dt: f64,
    pub tolerances: Tolerances,
    pub certificate: CertificateSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_override: Option<CertificateOverride>,
}

impl Scenario {
    pub fn model(&self) -> Chemostat {
        Chemostat::new(
            self.params,
            self.species.iter().map(|sp| sp.growth.clone()).collect(),
        )
    }

    pub fn named_growths(&self) -> Vec<(String, GrowthFunction)> {
        self.species
            .iter()
            .map(|sp| (sp.id.clone(), sp.growth.clone()))
            .collect()
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        IntegratorSettings {
            dense_dt: self.dense_dt,
            ..IntegratorSettings::new(
                self.horizon,
                self.tolerances.rel_tol,
                self.tolerances.abs_tol,
            )
        }
    }

    pub fn break_even_options(&self) -> BreakEvenOptions {
        BreakEvenOptions {
            root_tol: self.certificate.root_tol,
            s_probe_max: self.certificate.probe_factor * self.params.s_in,
        }
    }

    pub fn certificate_options(&self) -> CertificateOptions {
        CertificateOptions {
            grid_n: self.certificate.grid_n,
            delta_min_factor: self.certificate.delta_min_factor,
        }
    }

    /// SHA-256 of the canonical JSON form of the scenario.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    chemostat: Spanned<RawChemostat>,
    species: Spanned<Vec<Spanned<RawSpecies>>>,
    initial: Spanned<RawInitial>,
    run: Option<RawRun>,
    tolerances: Option<Spanned<RawTolerances>>,
    certificate: Option<Spanned<CertificateSettings>>,
    certificate_override: Option<CertificateOverride>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    eps_p: Option<f64>,
    eps_final: Option<f64>,
    eps_mass: Option<f64>,
    eps_washout: Option<f64>,
    eps_floor: Option<f64>,
    slope_slack: Option<f64>,
    persistence_grace: Option<f64>,
    pack_ratio_tol: Option<f64>,
}

impl RawTolerances {
    fn over(&self, d: &Tolerances) -> Tolerances {
        Tolerances {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            eps_p: self.eps_p.unwrap_or(d.eps_p),
            eps_final: self.eps_final.unwrap_or(d.eps_final),
            eps_mass: self.eps_mass.unwrap_or(d.eps_mass),
            eps_washout: self.eps_washout.unwrap_or(d.eps_washout),
            eps_floor: self.eps_floor.unwrap_or(d.eps_floor),
            slope_slack: self.slope_slack.unwrap_or(d.slope_slack),
            persistence_grace: self.persistence_grace.unwrap_or(d.persistence_grace),
            pack_ratio_tol: self.pack_ratio_tol.unwrap_or(d.pack_ratio_tol),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChemostat {
    dilution: Spanned<f64>,
    s_in: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    id: Spanned<String>,
    kind: Spanned<String>,
    mu_max: Option<Spanned<f64>>,
    k: Option<Spanned<f64>>,
    p: Option<Spanned<f64>>,
    points: Option<Spanned<Vec<(f64, f64)>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    s: Spanned<f64>,
    x: Spanned<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<Spanned<f64>>,
    dense_dt: Option<Spanned<f64>>,
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line_of(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn invalid(&self, key: &str, span: Range<usize>, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            key: key.to_string(),
            line: self.line_of(span),
            message: message.into(),
        }
    }
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text, &Tolerances::from_env()?)
}

/// Parses scenario text; `defaults` supplies tolerances absent from the file.
pub fn parse_scenario_str(text: &str, defaults: &Tolerances) -> Result<Scenario, ScenarioError> {
    let lines = Lines(text);
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = message
            .split('`')
            .nth(1)
            .unwrap_or("<document>")
            .to_string();
        match e.span() {
            Some(span) => lines.invalid(&key, span, message),
            None => ScenarioError::Syntax { key, message },
        }
    })?;

    let d = &raw.chemostat.get_ref().dilution;
    if !(*d.get_ref() > 0.0 && d.get_ref().is_finite()) {
        return Err(lines.invalid("chemostat.dilution", d.span(), "must be > 0"));
    }
    let s_in = &raw.chemostat.get_ref().s_in;
    if !(*s_in.get_ref() > 0.0 && s_in.get_ref().is_finite()) {
        return Err(lines.invalid("chemostat.s_in", s_in.span(), "must be > 0"));
    }
    let params = ChemostatParams {
        d: *d.get_ref(),
        s_in: *s_in.get_ref(),
    };

    if raw.species.get_ref().is_empty() {
        return Err(lines.invalid(
            "species",
            raw.species.span(),
            "at least one species is required",
        ));
    }
    let mut seen = HashSet::new();
    let mut species = Vec::new();
    for sp in raw.species.get_ref() {
        species.push(species_from_raw(sp, &lines, &mut seen)?);
    }

    let init = raw.initial.get_ref();
    if !(*init.s.get_ref() >= 0.0 && init.s.get_ref().is_finite()) {
        return Err(lines.invalid("initial.s", init.s.span(), "must be finite and >= 0"));
    }
    let x = init.x.get_ref();
    if x.len() != species.len() {
        return Err(lines.invalid(
            "initial.x",
            init.x.span(),
            format!(
                "has {} entries but {} species are declared",
                x.len(),
                species.len()
            ),
        ));
    }
    if let Some(bad) = x.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(lines.invalid(
            "initial.x",
            init.x.span(),
            format!("entry {bad} must be finite and >= 0"),
        ));
    }
    let initial = State::new(*init.s.get_ref(), x.clone());

    let mut horizon = 100.0 / params.d;
    let mut dense_dt = None;
    if let Some(run) = &raw.run {
        if let Some(h) = &run.horizon {
            if !(*h.get_ref() > 0.0 && h.get_ref().is_finite()) {
                return Err(lines.invalid("run.horizon", h.span(), "must be > 0"));
            }
            horizon = *h.get_ref();
        }
        if let Some(dt) = &run.dense_dt {
            if !(*dt.get_ref() > 0.0 && *dt.get_ref() <= horizon) {
                return Err(lines.invalid("run.dense_dt", dt.span(), "must lie in (0, horizon]"));
            }
            dense_dt = Some(*dt.get_ref());
        }
    }

    let tolerances = match &raw.tolerances {
        None => *defaults,
        Some(t) => {
            let merged = t.get_ref().over(defaults);
            for (key, v) in [
                ("tolerances.rel_tol", merged.rel_tol),
                ("tolerances.abs_tol", merged.abs_tol),
            ] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(lines.invalid(key, t.span(), "must lie in (0, 1)"));
                }
            }
            for (key, v) in [
                ("tolerances.eps_p", merged.eps_p),
                ("tolerances.eps_final", merged.eps_final),
                ("tolerances.eps_mass", merged.eps_mass),
                ("tolerances.eps_washout", merged.eps_washout),
                ("tolerances.eps_floor", merged.eps_floor),
                ("tolerances.slope_slack", merged.slope_slack),
                ("tolerances.persistence_grace", merged.persistence_grace),
                ("tolerances.pack_ratio_tol", merged.pack_ratio_tol),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(lines.invalid(key, t.span(), "must be finite and >= 0"));
                }
            }
            merged
        }
    };

    let certificate = match &raw.certificate {
        None => CertificateSettings::default(),
        Some(c) => {
            let v = *c.get_ref();
            if v.grid_n < 2 {
                return Err(lines.invalid("certificate.grid_n", c.span(), "must be >= 2"));
            }
            for (key, x) in [
                ("certificate.eq_tol", v.eq_tol),
                ("certificate.root_tol", v.root_tol),
                ("certificate.probe_factor", v.probe_factor),
                ("certificate.delta_min_factor", v.delta_min_factor),
            ] {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(lines.invalid(key, c.span(), "must be finite and > 0"));
                }
            }
            v
        }
    };

    Ok(Scenario {
        name: raw.name,
        params,
        species,
        initial,
        horizon,
        dense_dt: dense_dt.unwrap_or(horizon / 2000.0),
        tolerances,
        certificate,
        certificate_override: raw.certificate_override.filter(|o| !o.is_empty()),
    })
}

fn species_from_raw(
    sp: &Spanned<RawSpecies>,
    lines: &Lines<'_>,
    seen: &mut HashSet<String>,
) -> Result<SpeciesSpec, ScenarioError> {
    let r = sp.get_ref();
    let id = r.id.get_ref().trim().to_string();
    if id.is_empty() {
        return Err(lines.invalid("species.id", r.id.span(), "must not be empty"));
    }
    if id.contains(',') {
        return Err(lines.invalid("species.id", r.id.span(), "must not contain commas"));
    }
    if !seen.insert(id.clone()) {
        return Err(lines.invalid("species.id", r.id.span(), format!("duplicate id `{id}`")));
    }
    let need = |field: &Option<Spanned<f64>>, key: &str| -> Result<f64, ScenarioError> {
        field.as_ref().map(|v| *v.get_ref()).ok_or_else(|| {
            lines.invalid(
                &format!("species.{key}"),
                sp.span(),
                format!("species `{id}` needs `{key}`"),
            )
        })
    };
    let kind = r.kind.get_ref().as_str();
    let growth = match kind {
        "monod" => GrowthFunction::monod(need(&r.mu_max, "mu_max")?, need(&r.k, "k")?),
        "hill" => GrowthFunction::hill(
            need(&r.mu_max, "mu_max")?,
            need(&r.k, "k")?,
            need(&r.p, "p")?,
        ),
        "table" => {
            let points = r.points.as_ref().ok_or_else(|| {
                lines.invalid(
                    "species.points",
                    sp.span(),
                    format!("species `{id}` needs `points`"),
                )
            })?;
            GrowthFunction::table(points.get_ref().clone())
        }
        other => {
            return Err(lines.invalid(
                "species.kind",
                r.kind.span(),
                format!("unknown kind `{other}` (expected monod, hill or table)"),
            ))
        }
    }
    .map_err(|e| lines.invalid("species", sp.span(), format!("species `{id}`: {e}")))?;
    Ok(SpeciesSpec { id, growth })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
name = "canonical"

[chemostat]
dilution = 1
s_in = 10

[[species]]
id = "A"
kind = "monod"
mu_max = 3
k = 1

[[species]]
id = "B"
kind = "monod"
mu_max = 4
k = 2

[[species]]
id = "C"
kind = "monod"
mu_max = 5
k = 3

[initial]
s = 10
x = [0.01, 0.01, 0.01]

[run]
horizon = 80
"#;

    fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        parse_scenario_str(text, &Tolerances::default())
    }

    #[test]
    fn parses_canonical() {
        let sc = parse(CANONICAL).unwrap();
        assert_eq!(sc.species.len(), 3);
        assert_eq!(sc.horizon, 80.0);
        assert_eq!(sc.dense_dt, 0.04);
        assert_eq!(sc.tolerances, Tolerances::default());
        assert_eq!(
            sc.species[1].growth,
            GrowthFunction::monod(4.0, 2.0).unwrap()
        );
        assert_eq!(sc.digest().len(), 64);
    }

    #[test]
    fn default_horizon_is_100_over_d() {
        let text = CANONICAL
            .replace("[run]\nhorizon = 80\n", "")
            .replace("dilution = 1", "dilution = 0.5");
        let sc = parse(&text).unwrap();
        assert_eq!(sc.horizon, 200.0);
        assert_eq!(sc.dense_dt, 0.1);
    }

    #[test]
    fn dimension_mismatch_names_key_and_line() {
        let text = CANONICAL.replace("x = [0.01, 0.01, 0.01]", "x = [0.01, 0.01]");
        match parse(&text).unwrap_err() {
            ScenarioError::Invalid { key, line, .. } => {
                assert_eq!(key, "initial.x");
                assert_eq!(line, 28);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_ids_and_bad_params() {
        let text = CANONICAL.replace("id = \"B\"", "id = \"A\"");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.key(), Some("species.id"));
        assert!(err.to_string().contains("duplicate"));

        let text = CANONICAL.replace("s_in = 10", "s_in = -1");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.key(), Some("chemostat.s_in"));
        assert!(err.to_string().starts_with("line 6:"), "{err}");

        let text = CANONICAL.replace("mu_max = 4\n", "");
        assert_eq!(parse(&text).unwrap_err().key(), Some("species.mu_max"));
    }

    #[test]
    fn missing_required_key() {
        let text = CANONICAL.replace("s_in = 10\n", "");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.key(), Some("s_in"), "{err}");
        let text = CANONICAL.replace("dilution = 1", "dilution = 1\nvolume = 3");
        assert_eq!(parse(&text).unwrap_err().key(), Some("volume"));
    }

    #[test]
    fn tolerance_defaults_merge() {
        let text = format!("{CANONICAL}\n[tolerances]\neps_final = 0.01\n");
        let dflt = Tolerances {
            rel_tol: 1e-6,
            ..Tolerances::default()
        };
        let sc = parse_scenario_str(&text, &dflt).unwrap();
        assert_eq!(sc.tolerances.rel_tol, 1e-6);
        assert_eq!(sc.tolerances.eps_final, 0.01);
    }

    #[test]
    fn table_and_hill_kinds() {
        let text = CANONICAL
            .replace(
                "kind = \"monod\"\nmu_max = 3\nk = 1",
                "kind = \"table\"\npoints = [[0, 0], [1, 1.5], [4, 2.5]]",
            )
            .replace(
                "kind = \"monod\"\nmu_max = 4\nk = 2",
                "kind = \"hill\"\nmu_max = 4\nk = 2\np = 2",
            );
        let sc = parse(&text).unwrap();
        assert!(matches!(sc.species[0].growth, GrowthFunction::Table { .. }));
        assert!(matches!(sc.species[1].growth, GrowthFunction::Hill { .. }));
        let bad = text.replace("p = 2", "p = 0.5");
        assert_eq!(parse(&bad).unwrap_err().key(), Some("species"));
    }

    #[test]
    fn override_section() {
        let text = format!("{CANONICAL}\n[certificate_override]\nnu = 5.0\n");
        let sc = parse(&text).unwrap();
        assert_eq!(sc.certificate_override.unwrap().nu, Some(5.0));
    }
}
