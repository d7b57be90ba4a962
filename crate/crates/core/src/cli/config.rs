//! Run configuration. Command-line flags and JSON files go through the same
//! field-by-field validation and end up as the same `RunConfig`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::caccioppoli::WeightSpec;
use crate::conditions::{BalanceSpec, Region};
use crate::density::DensityModel;
use crate::error::{ConfigError, FieldIssue};
use crate::field::FieldSpec;
use crate::mesh::DomainSpec;
use crate::spec_string::{parse_list, parse_number};

/// Pipelines the tool can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    DensityValidate,
    Nitsche,
    Solve,
    Caccioppoli,
    Conditions,
    Transform,
    Sweep,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Self::DensityValidate,
        Self::Nitsche,
        Self::Solve,
        Self::Caccioppoli,
        Self::Conditions,
        Self::Transform,
        Self::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DensityValidate => "density-validate",
            Self::Nitsche => "nitsche",
            Self::Solve => "solve",
            Self::Caccioppoli => "caccioppoli",
            Self::Conditions => "conditions",
            Self::Transform => "transform",
            Self::Sweep => "sweep",
        }
    }

    /// Configuration keys the command reads.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Self::DensityValidate => &["density", "r_max", "out"],
            Self::Nitsche => &["density", "levels", "t_max", "out", "csv", "plot"],
            Self::Solve => &["density", "domain", "h", "field", "tol", "out", "report"],
            Self::Caccioppoli => &["density", "field", "weight", "radii", "domain", "h", "out", "report", "plot"],
            Self::Conditions => &["field", "check", "region", "radii", "domain", "h", "out"],
            Self::Transform => &["density", "e1", "e2", "field", "domain", "h", "tol", "out"],
            Self::Sweep => &["density", "field", "weight", "radii", "h", "tol", "out", "report", "plot"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Keys accepted by every command.
const COMMON_KEYS: [&str; 3] = ["command", "seed", "manifest"];

/// A validated run. Command-specific defaults are filled in, so two configs
/// describing the same run compare equal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<BalanceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e2: Option<[f64; 2]>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

impl<'de> Deserialize<'de> for RunConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        RunConfig::from_json_value(&value).map_err(serde::de::Error::custom)
    }
}

/// Collects issues while reading raw entries.
struct Reader<'a> {
    entries: &'a BTreeMap<String, Value>,
    issues: Vec<FieldIssue>,
}

impl<'a> Reader<'a> {
    fn issue(&mut self, field: &str, message: impl Into<String>) {
        self.issues.push(FieldIssue { field: field.to_string(), message: message.into() });
    }

    fn spec<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key)? {
            Value::String(s) => match s.parse() {
                Ok(v) => Some(v),
                Err(e) => {
                    self.issue(key, e.to_string());
                    None
                }
            },
            other => {
                self.issue(key, format!("expected a string, got {other}"));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        let parsed = match self.entries.get(key)? {
            Value::Number(n) => n.as_f64().ok_or_else(|| "not representable as f64".to_string()),
            Value::String(s) => parse_number(s, key).map_err(|e| e.to_string()),
            other => Err(format!("expected a number, got {other}")),
        };
        match parsed {
            Ok(v) if v.is_finite() => Some(v),
            Ok(v) => {
                self.issue(key, format!("must be finite, got {v}"));
                None
            }
            Err(e) => {
                self.issue(key, e);
                None
            }
        }
    }

    fn positive(&mut self, key: &str) -> Option<f64> {
        let v = self.number(key)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.issue(key, format!("must be positive, got {v}"));
            None
        }
    }

    fn integer(&mut self, key: &str) -> Option<u64> {
        let raw = self.entries.get(key)?;
        let parsed = match raw {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        if parsed.is_none() {
            self.issue(key, format!("expected a non-negative integer, got {raw}"));
        }
        parsed
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let parsed = match self.entries.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| format!("expected numbers, got {v}")))
                .collect::<Result<Vec<f64>, String>>(),
            Value::String(s) => parse_list(s, key).map_err(|e| e.to_string()),
            other => Err(format!("expected a list of numbers, got {other}")),
        };
        match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) => Some(v),
            Ok(_) => {
                self.issue(key, "entries must be finite");
                None
            }
            Err(e) => {
                self.issue(key, e);
                None
            }
        }
    }

    fn pair(&mut self, key: &str) -> Option<[f64; 2]> {
        let v = self.list(key)?;
        match v.as_slice() {
            [a, b] => Some([*a, *b]),
            _ => {
                self.issue(key, format!("expected two components, got {}", v.len()));
                None
            }
        }
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        match self.entries.get(key)? {
            Value::String(s) if !s.is_empty() => Some(PathBuf::from(s)),
            other => {
                self.issue(key, format!("expected a non-empty path, got {other}"));
                None
            }
        }
    }
}

impl RunConfig {
    /// Validates raw entries for `command`, reporting every invalid or
    /// missing field, and fills in command defaults.
    pub fn from_entries(command: Command, entries: &BTreeMap<String, Value>) -> Result<Self, ConfigError> {
        let mut r = Reader { entries, issues: Vec::new() };
        for key in entries.keys() {
            if !COMMON_KEYS.contains(&key.as_str()) && !command.keys().contains(&key.as_str()) {
                let message = if ALL_KEYS.contains(&key.as_str()) {
                    format!("not used by `{command}`")
                } else {
                    "unknown key".to_string()
                };
                r.issue(key, message);
            }
        }
        let mut cfg = RunConfig {
            command,
            density: r.spec("density"),
            domain: r.spec("domain"),
            region: r.spec("region"),
            field: r.spec("field"),
            weight: r.spec("weight"),
            check: r.spec("check"),
            h: r.positive("h"),
            tol: r.positive("tol"),
            radii: r.list("radii"),
            levels: r.integer("levels").map(|v| v as usize),
            t_max: r.positive("t_max"),
            r_max: r.positive("r_max"),
            e1: r.pair("e1"),
            e2: r.pair("e2"),
            seed: r.integer("seed").unwrap_or(0),
            out: r.path("out"),
            csv: r.path("csv"),
            report: r.path("report"),
            plot: r.path("plot"),
            manifest: r.path("manifest"),
        };
        cfg.fill_defaults(entries, &mut r);
        if r.issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError { issues: r.issues })
        }
    }

    fn fill_defaults(&mut self, entries: &BTreeMap<String, Value>, r: &mut Reader<'_>) {
        let given = |key: &str| entries.contains_key(key);
        let command = self.command;
        let require = |present: bool, key: &str, r: &mut Reader<'_>| {
            if !present && !given(key) {
                r.issue(key, format!("required by `{command}`"));
            }
        };
        match self.command {
            Command::DensityValidate => {
                require(self.density.is_some(), "density", r);
                self.r_max.get_or_insert(1e6);
            }
            Command::Nitsche => {
                require(self.density.is_some(), "density", r);
                if !given("levels") {
                    self.levels = Some(20);
                }
                if let Some(levels) = self.levels {
                    if !(8..=60).contains(&levels) {
                        r.issue("levels", format!("must lie in [8, 60], got {levels}"));
                    } else if !given("t_max") {
                        self.t_max = Some(2f64.powi(levels as i32));
                    } else if let Some(t) = self.t_max {
                        if t < 2f64.powi(levels as i32) {
                            r.issue("t_max", format!("must be at least 2^levels = {}", 2f64.powi(levels as i32)));
                        }
                    }
                }
            }
            Command::Solve => {
                require(self.density.is_some(), "density", r);
                require(self.field.is_some(), "field", r);
                if !given("domain") {
                    self.domain = Some(DomainSpec::square(1.0));
                }
                if !given("h") {
                    self.h = Some(0.05);
                }
                if !given("tol") {
                    self.tol = Some(1e-10);
                }
                if matches!(self.field, Some(FieldSpec::FromFile(_))) {
                    r.issue("field", "boundary data must be a closed-form field");
                }
            }
            Command::Caccioppoli => {
                require(self.density.is_some(), "density", r);
                require(self.field.is_some(), "field", r);
                require(self.weight.is_some(), "weight", r);
                require(self.radii.is_some(), "radii", r);
                self.check_file_mesh(entries, r);
            }
            Command::Sweep => {
                require(self.density.is_some(), "density", r);
                require(self.weight.is_some(), "weight", r);
                require(self.radii.is_some(), "radii", r);
                if !given("field") {
                    self.field = Some(FieldSpec::ArctanShear);
                }
                if !given("h") {
                    self.h = Some(0.1);
                }
                if !given("tol") {
                    self.tol = Some(1e-10);
                }
                if matches!(self.field, Some(FieldSpec::FromFile(_))) {
                    r.issue("field", "boundary data must be a closed-form field");
                }
            }
            Command::Conditions => {
                require(self.field.is_some(), "field", r);
                require(self.check.is_some(), "check", r);
                if matches!(self.check, Some(BalanceSpec::RhoAverage { .. })) {
                    require(self.radii.is_some(), "radii", r);
                } else {
                    require(self.region.is_some(), "region", r);
                }
                self.check_file_mesh(entries, r);
            }
            Command::Transform => {
                require(self.density.is_some(), "density", r);
                require(self.e1.is_some(), "e1", r);
                require(self.e2.is_some(), "e2", r);
                if !given("field") {
                    self.field = Some(FieldSpec::Product);
                }
                if matches!(self.field, Some(FieldSpec::FromFile(_))) {
                    r.issue("field", "the transform check needs a closed-form field");
                }
                if given("domain") {
                    if !given("h") {
                        self.h = Some(0.1);
                    }
                    if !given("tol") {
                        self.tol = Some(1e-10);
                    }
                }
                if let (Some([a, b]), Some([c, d])) = (self.e1, self.e2) {
                    if !((a * d - b * c).abs() > 1e-14 * a.hypot(b) * c.hypot(d)) {
                        r.issue("e2", "E1 and E2 must be linearly independent");
                    }
                }
            }
        }
        if let Some(radii) = &self.radii {
            if radii.is_empty() || radii.iter().any(|v| !(*v > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
                r.issue("radii", "must be positive and strictly increasing");
            }
        }
        if let Some(w) = &self.weight {
            if let Err(e) = w.validate() {
                r.issue("weight", e.to_string());
            }
        }
    }

    fn check_file_mesh(&mut self, entries: &BTreeMap<String, Value>, r: &mut Reader<'_>) {
        if matches!(self.field, Some(FieldSpec::FromFile(_))) {
            for key in ["domain", "h"] {
                if !entries.contains_key(key) {
                    r.issue(key, "required to rebuild the mesh of a from-file field");
                }
            }
        }
    }

    /// Parses a JSON object with a `command` key.
    pub fn from_json_value(value: &Value) -> Result<Self, ConfigError> {
        let Value::Object(map) = value else {
            return Err(ConfigError::single("config", "expected a JSON object"));
        };
        let entries: BTreeMap<String, Value> = map.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let command = match entries.get("command") {
            Some(Value::String(s)) => s.parse::<Command>().map_err(|e| ConfigError::single("command", e))?,
            Some(other) => return Err(ConfigError::single("command", format!("expected a string, got {other}"))),
            None => return Err(ConfigError::single("command", "missing")),
        };
        Self::from_entries(command, &entries)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::single("config", format!("invalid JSON: {e}")))?;
        Self::from_json_value(&value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Equivalent command line.
    pub fn command_line(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config serializes to an object")
        };
        let mut parts = vec![self.command.to_string()];
        for (key, value) in map {
            if key == "command" {
                continue;
            }
            let text = match value {
                Value::String(s) => s,
                Value::Array(items) => items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                other => other.to_string(),
            };
            parts.push(format!("--{} {}", flag_for_key(&key), text));
        }
        parts.join(" ")
    }
}

const ALL_KEYS: [&str; 20] = [
    "density", "domain", "region", "field", "weight", "check", "h", "tol", "radii", "levels", "t_max", "r_max", "e1",
    "e2", "seed", "out", "csv", "report", "plot", "manifest",
];

fn flag_for_key(key: &str) -> &str {
    match key {
        "radii" => "R",
        "t_max" => "tmax",
        "r_max" => "r-max",
        "e1" => "E1",
        "e2" => "E2",
        other => other,
    }
}

/// Flags shared by all subcommands; each subcommand reads the subset listed
/// by `Command::keys` and rejects the rest.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Density: minimal-surface, power:s=1.5, nearly-linear, regularized:eps=0.1
    #[arg(long, allow_hyphen_values = true)]
    pub density: Option<String>,
    /// Domain: square:L=2 or disk:R=100
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Sample region: disk:R=100
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Field or boundary data: affine:a=1,b=2,c=0, product, scherk, arctan-shear, from-file:u.csv
    #[arg(long, visible_alias = "boundary", allow_hyphen_values = true)]
    pub field: Option<String>,
    /// Weight: power:alpha=-0.4, log, rho:log-shift (append dir=2 for the second derivative)
    #[arg(long, allow_hyphen_values = true)]
    pub weight: Option<String>,
    /// Condition: power-balance:m=0.5,K=10,dir=1, log-balance:K=1, rho-pointwise:rho=log-shift,c=10, rho-average
    #[arg(long, allow_hyphen_values = true)]
    pub check: Option<String>,
    /// Mesh size
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    /// Newton tolerance on the interior residual
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
    /// Radii, comma separated
    #[arg(long = "R", visible_alias = "radii", allow_hyphen_values = true)]
    pub radii: Option<String>,
    /// Number of dyadic levels
    #[arg(long, allow_hyphen_values = true)]
    pub levels: Option<String>,
    /// Upper end of the Θ integral
    #[arg(long = "tmax", allow_hyphen_values = true)]
    pub t_max: Option<String>,
    /// Largest sampled gradient norm
    #[arg(long = "r-max", allow_hyphen_values = true)]
    pub r_max: Option<String>,
    /// First frame vector, e.g. 1,1
    #[arg(long = "E1", allow_hyphen_values = true)]
    pub e1: Option<String>,
    /// Second frame vector, e.g. 1,-1
    #[arg(long = "E2", allow_hyphen_values = true)]
    pub e2: Option<String>,
    /// Seed for randomized sampling
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Primary output file
    #[arg(long)]
    pub out: Option<String>,
    /// Tabular side output
    #[arg(long)]
    pub csv: Option<String>,
    /// JSON report
    #[arg(long)]
    pub report: Option<String>,
    /// SVG plot
    #[arg(long)]
    pub plot: Option<String>,
    /// Run manifest; printed to stdout when absent
    #[arg(long)]
    pub manifest: Option<String>,
}

impl Flags {
    fn entries(&self) -> BTreeMap<String, Value> {
        let pairs = [
            ("density", &self.density),
            ("domain", &self.domain),
            ("region", &self.region),
            ("field", &self.field),
            ("weight", &self.weight),
            ("check", &self.check),
            ("h", &self.h),
            ("tol", &self.tol),
            ("radii", &self.radii),
            ("levels", &self.levels),
            ("t_max", &self.t_max),
            ("r_max", &self.r_max),
            ("e1", &self.e1),
            ("e2", &self.e2),
            ("seed", &self.seed),
            ("out", &self.out),
            ("csv", &self.csv),
            ("report", &self.report),
            ("plot", &self.plot),
            ("manifest", &self.manifest),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), Value::String(v.clone())))).collect()
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum CliCommand {
    /// Check the density hypotheses on a log-polar gradient grid
    DensityValidate(Flags),
    /// Classify convergence of the integral of Θ
    Nitsche(Flags),
    /// Minimize the discrete energy with Dirichlet data
    Solve(Flags),
    /// Evaluate weighted Caccioppoli quantities of a field
    Caccioppoli(Flags),
    /// Check a balance condition on a field
    Conditions(Flags),
    /// Apply a direction frame to a density and a field
    Transform(Flags),
    /// Solve on growing disks and evaluate Caccioppoli quantities
    Sweep(Flags),
}

impl CliCommand {
    fn split(&self) -> (Command, &Flags) {
        match self {
            Self::DensityValidate(f) => (Command::DensityValidate, f),
            Self::Nitsche(f) => (Command::Nitsche, f),
            Self::Solve(f) => (Command::Solve, f),
            Self::Caccioppoli(f) => (Command::Caccioppoli, f),
            Self::Conditions(f) => (Command::Conditions, f),
            Self::Transform(f) => (Command::Transform, f),
            Self::Sweep(f) => (Command::Sweep, f),
        }
    }
}

/// Numerical laboratory for planar variational problems of linear and
/// nearly linear growth.
#[derive(Debug, Clone, Parser)]
#[command(name = "bernstein-lab", version, about, args_conflicts_with_subcommands = true)]
pub struct Cli {
    /// JSON run configuration, used instead of a subcommand
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<CliCommand>,
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        match (self.config, self.command) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ConfigError::single("config", format!("{}: {e}", path.display())))?;
                RunConfig::from_json_str(&text)
            }
            (None, Some(cmd)) => {
                let (command, flags) = cmd.split();
                RunConfig::from_entries(command, &flags.entries())
            }
            (None, None) => Err(ConfigError::single("command", "missing; give a subcommand or --config")),
        }
    }
}

/// Parses an argument vector (program name first).
pub fn parse_args<I, T>(args: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| ConfigError::single("arguments", e.to_string()))?;
    cli.into_config()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(line: &str) -> Vec<String> {
        std::iter::once("bernstein-lab".to_string()).chain(line.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn nitsche_flags_parse_with_defaults() {
        let cfg = parse_args(args("nitsche --density power:s=1.5 --levels 16")).unwrap();
        assert_eq!(cfg.command, Command::Nitsche);
        assert_eq!(cfg.density, Some(DensityModel::Power { s: 1.5 }));
        assert_eq!(cfg.levels, Some(16));
        assert_eq!(cfg.t_max, Some(65536.0));
    }

    #[test]
    fn negative_mesh_size_names_h() {
        let err = parse_args(args("solve --density minimal-surface --boundary scherk --h -0.1")).unwrap_err();
        assert!(err.names("h"), "{err}");
        assert_eq!(err.issues.len(), 1);
    }

    #[test]
    fn every_invalid_field_is_listed() {
        let err = parse_args(args("sweep --density bogus --weight power:alpha=-0.6 --R 2,1 --h 0")).unwrap_err();
        for key in ["density", "weight", "radii", "h"] {
            assert!(err.names(key), "{key} missing from {err}");
        }
    }

    #[test]
    fn json_matches_flags_and_round_trips() {
        let from_flags =
            parse_args(args("caccioppoli --density nearly-linear --field scherk --weight log --R 0.1,0.2 --out s.csv"))
                .unwrap();
        let json = r#"{"command": "caccioppoli", "density": "nearly-linear", "field": "scherk",
                       "weight": "log", "radii": [0.1, 0.2], "out": "s.csv"}"#;
        let from_json = RunConfig::from_json_str(json).unwrap();
        assert_eq!(from_flags, from_json);
        let again: RunConfig = serde_json::from_str(&from_json.to_json()).unwrap();
        assert_eq!(again, from_json);
    }

    #[test]
    fn irrelevant_and_unknown_keys_are_rejected() {
        let err = RunConfig::from_json_str(r#"{"command": "nitsche", "density": "nearly-linear", "h": 0.1, "zzz": 1}"#)
            .unwrap_err();
        assert!(err.names("h") && err.names("zzz"));
        assert!(parse_args(args("solve --density nearly-linear")).unwrap_err().names("field"));
    }

    #[test]
    fn command_line_reparses_to_the_same_config() {
        for line in [
            "transform --E1 1,1 --E2 1,-1 --density nearly-linear --domain disk:R=1",
            "conditions --field product --check power-balance:m=0.5,K=10,dir=1 --region disk:R=100",
            "density-validate --density regularized:eps=0.1",
        ] {
            let cfg = parse_args(args(line)).unwrap();
            let again = parse_args(args(&cfg.command_line())).unwrap();
            assert_eq!(cfg, again, "{line}");
        }
    }
}
