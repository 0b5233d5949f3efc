//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use otto_core::config::{EngineConfig, Numerics, WorkingSubstance};
use otto_core::error::OttoError;
use otto_core::optimize::{linear_grid, HeatStrokeTime, OptimizerSettings, SweepMode, DEFAULT_JUMP_THRESHOLD};

/// Where a value came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Default,
    File { path: PathBuf, line: usize },
    Cli,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => write!(f, "default"),
            Source::File { path, line } => write!(f, "{}:{line}", path.display()),
            Source::Cli => write!(f, "command line"),
        }
    }
}

/// A configuration problem, located at the line or flag that caused it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{source_}: {message}")]
pub struct ConfigError {
    pub source_: Source,
    pub message: String,
}

impl ConfigError {
    fn at(source: &Source, message: impl Into<String>) -> Self {
        ConfigError {
            source_: source.clone(),
            message: message.into(),
        }
    }
}

macro_rules! keys {
    ($( $field:ident = $default:expr, $help:literal; )*) => {
        /// Every accepted key, in the order used for the resolved-config echo.
        pub const KEYS: &[&str] = &[$(stringify!($field)),*];

        fn default_value(key: &str) -> Option<&'static str> {
            match key {
                $(stringify!($field) => $default,)*
                _ => None,
            }
        }

        /// Overrides of configuration keys; each takes precedence over the file.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Overrides {
            $(
                #[doc = $help]
                #[arg(long, value_name = "VALUE", help_heading = "Configuration keys")]
                pub $field: Option<String>,
            )*
        }

        impl Overrides {
            fn entries(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

keys! {
    substance = Some("ho"), "Working substance: ho or tls";
    omega1 = Some("1"), "Frequency during the cold stroke";
    omega2 = Some("2"), "Frequency during the hot stroke";
    delta = Some("1"), "Two-level coupling delta";
    beta_h = Some("0.1"), "Hot-bath inverse temperature";
    beta_c = Some("0.5"), "Cold-bath inverse temperature";
    tau_u = Some("1"), "Total work-stroke time";
    r_u = Some("0.5"), "Compression share of tau_u";
    tau_b = Some("inf"), "Total heat-stroke time (inf for perfect thermalization)";
    r_b = Some("0.5"), "Hot-bath share of tau_b";
    kappa = Some("0.01"), "Oscillator damping rate";
    gamma = Some("0.01"), "Two-level damping rate";
    n_cut = Some("50"), "Oscillator basis size";
    ode_tol = Some("1e-10"), "Stroke integrator tolerance";
    weak_coupling_max = Some("0.05"), "Bound on rate (n+1)/energy";
    r_min = Some("0.001"), "Smallest allowed asymmetry";
    max_leakage = Some("1e-6"), "Largest accepted probability leakage per cycle";
    mode = Some("perfect"), "Heat strokes: perfect or finite";
    tau_b_ratio = None, "Finite mode: tau_b = tau_b_ratio * tau_u";
    r_grid_min = Some("0.005"), "First r_u of sweeps";
    r_grid_max = Some("0.995"), "Last r_u of sweeps";
    r_grid_count = Some("199"), "Number of r_u values";
    tau_grid_min = None, "First tau_u of sweeps";
    tau_grid_max = None, "Last tau_u of sweeps";
    tau_grid_count = None, "Number of tau_u values";
    refine = Some("true"), "Refine optima by golden-section search";
    refine_tol = Some("1e-4"), "Golden-section resolution in r_u";
    jump_threshold = Some("0.05"), "Smallest |delta r| reported as a discontinuity";
    match_tol = Some("2e-4"), "Largest |r_a - r_b| counted as co-optimal";
    precision = Some("12"), "Significant digits in CSV output";
    output = None, "Output file (default: standard output)";
    sweep_output = None, "Sweep-table file for optimize";
    jobs = Some("1"), "Worker threads";
}

/// Raw values with their sources after merging defaults, file and overrides.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    values: BTreeMap<&'static str, (String, Source)>,
}

fn known_key(key: &str, source: &Source) -> Result<&'static str, ConfigError> {
    KEYS.iter()
        .copied()
        .find(|k| *k == key)
        .ok_or_else(|| ConfigError::at(source, format!("unknown key `{key}`")))
}

impl RawConfig {
    pub fn defaults() -> Self {
        let mut raw = RawConfig::default();
        for key in KEYS {
            if let Some(v) = default_value(key) {
                raw.values.insert(key, (v.to_string(), Source::Default));
            }
        }
        raw
    }

    /// Applies a `key = value` text. Blank lines and lines starting with `#`
    /// are skipped; a key may appear only once per file.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let mut seen = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let source = Source::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::at(&source, format!("expected `key = value`, found `{line}`")));
            };
            let key = known_key(key.trim(), &source)?;
            if let Some(first) = seen.insert(key, i + 1) {
                return Err(ConfigError::at(&source, format!("duplicate key `{key}` (first set on line {first})")));
            }
            self.values.insert(key, (value.trim().to_string(), source));
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::at(&Source::File { path: path.to_path_buf(), line: 0 }, e.to_string()))?;
        Ok(self.apply_text(&text, path)?)
    }

    pub fn apply_overrides(&mut self, overrides: &Overrides) {
        for (key, value) in overrides.entries() {
            self.values.insert(key, (value.trim().to_string(), Source::Cli));
        }
    }

    fn raw(&self, key: &'static str) -> Option<&(String, Source)> {
        self.values.get(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &'static str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, _)) if v.is_empty() => Ok(None),
            Some((v, source)) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::at(source, format!("invalid value `{v}` for `{key}`: expected {what}"))),
        }
    }

    fn number(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parse(key, "a number")?;
        if let Some(x) = v {
            if x.is_nan() {
                let (_, source) = self.raw(key).unwrap();
                return Err(ConfigError::at(source, format!("invalid value for `{key}`: NaN")));
            }
        }
        Ok(v)
    }

    fn required_number(&self, key: &'static str) -> Result<f64, ConfigError> {
        self.number(key)?
            .ok_or_else(|| ConfigError::at(&Source::Default, format!("missing value for `{key}`")))
    }

    fn count(&self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        self.parse(key, "a non-negative integer")
    }

    fn source_of(&self, key: &str) -> Source {
        self.values
            .iter()
            .find(|(k, _)| **k == key)
            .map(|(_, (_, s))| s.clone())
            .unwrap_or(Source::Default)
    }

    /// Points a validation error from the library at the key's origin.
    pub fn locate(&self, err: OttoError) -> anyhow::Error {
        match &err {
            OttoError::Validation { key, .. } => {
                let key = match *key {
                    "r_grid" => "r_grid_count",
                    "tau_grid" | "tau_u_grid" => "tau_grid_count",
                    k => k,
                };
                let source = self.source_of(key);
                anyhow::Error::new(err).context(format!("configuration error ({source})"))
            }
            _ => anyhow::Error::new(err),
        }
    }
}

/// Minimum, maximum and count of an evenly spaced grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Perfect,
    Finite,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub mode: Mode,
    pub tau_b_ratio: Option<f64>,
    pub r_grid: GridSpec,
    pub tau_grid: Option<GridSpec>,
    pub refine: bool,
    pub refine_tol: f64,
    pub jump_threshold: f64,
    pub match_tol: f64,
    pub precision: usize,
    pub output: Option<PathBuf>,
    pub sweep_output: Option<PathBuf>,
    pub jobs: usize,
    raw: RawConfig,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut raw = RawConfig::defaults();
        if let Some(path) = file {
            raw.apply_file(path)?;
        }
        raw.apply_overrides(overrides);
        Self::resolve(raw)
    }

    pub fn resolve(raw: RawConfig) -> anyhow::Result<Self> {
        let err_at = |key: &'static str, msg: String| -> anyhow::Error {
            ConfigError::at(&raw.source_of(key), format!("invalid value for `{key}`: {msg}")).into()
        };
        let substance_name = raw.raw("substance").map(|(v, _)| v.clone()).unwrap_or_default();
        let delta = raw.required_number("delta")?;
        let substance = match substance_name.as_str() {
            "ho" => WorkingSubstance::HarmonicOscillator,
            "tls" => WorkingSubstance::TwoLevel { delta },
            other => return Err(err_at("substance", format!("expected `ho` or `tls`, found `{other}`"))),
        };
        let mode = match raw.raw("mode").map(|(v, _)| v.as_str()) {
            Some("perfect") => Mode::Perfect,
            Some("finite") => Mode::Finite,
            other => return Err(err_at("mode", format!("expected `perfect` or `finite`, found `{}`", other.unwrap_or("")))),
        };
        let n_cut = raw.count("n_cut")?.unwrap_or(50);
        let numerics = Numerics {
            ode_tol: raw.required_number("ode_tol")?,
            weak_coupling_max: raw.required_number("weak_coupling_max")?,
            r_min: raw.required_number("r_min")?,
            max_leakage: raw.required_number("max_leakage")?,
        };
        let engine = EngineConfig {
            omega1: raw.required_number("omega1")?,
            omega2: raw.required_number("omega2")?,
            beta_h: raw.required_number("beta_h")?,
            beta_c: raw.required_number("beta_c")?,
            tau_u: raw.required_number("tau_u")?,
            tau_b: raw.required_number("tau_b")?,
            r_u: raw.required_number("r_u")?,
            r_b: raw.required_number("r_b")?,
            kappa: raw.required_number("kappa")?,
            gamma: raw.required_number("gamma")?,
            n_cut,
            substance,
            numerics,
        };
        let tau_b_ratio = raw.number("tau_b_ratio")?;
        if let Some(ratio) = tau_b_ratio {
            if !(ratio >= 0.0 && ratio.is_finite()) {
                return Err(err_at("tau_b_ratio", format!("must be finite and non-negative (got {ratio})")));
            }
        }
        let r_grid = GridSpec {
            min: raw.required_number("r_grid_min")?,
            max: raw.required_number("r_grid_max")?,
            count: raw.count("r_grid_count")?.unwrap_or(0),
        };
        let tau_grid = match (raw.number("tau_grid_min")?, raw.number("tau_grid_max")?, raw.count("tau_grid_count")?) {
            (None, None, None) => None,
            (Some(min), Some(max), Some(count)) => Some(GridSpec { min, max, count }),
            _ => {
                return Err(err_at(
                    "tau_grid_count",
                    "tau_grid_min, tau_grid_max and tau_grid_count must be given together".into(),
                ))
            }
        };
        let refine = raw.parse::<bool>("refine", "`true` or `false`")?.unwrap_or(true);
        let refine_tol = raw.required_number("refine_tol")?;
        let jump_threshold = raw.number("jump_threshold")?.unwrap_or(DEFAULT_JUMP_THRESHOLD);
        let match_tol = raw.required_number("match_tol")?;
        for (key, v) in [("refine_tol", refine_tol), ("jump_threshold", jump_threshold), ("match_tol", match_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(err_at(key, format!("must be positive and finite (got {v})")));
            }
        }
        let precision = raw.count("precision")?.unwrap_or(12);
        if !(1..=17).contains(&precision) {
            return Err(err_at("precision", format!("must lie in 1..=17 (got {precision})")));
        }
        let jobs = raw.count("jobs")?.unwrap_or(1);
        if jobs == 0 {
            return Err(err_at("jobs", "must be at least 1".into()));
        }
        let path = |key: &'static str| raw.raw(key).filter(|(v, _)| !v.is_empty()).map(|(v, _)| PathBuf::from(v));
        let config = RunConfig {
            engine,
            mode,
            tau_b_ratio,
            r_grid,
            tau_grid,
            refine,
            refine_tol,
            jump_threshold,
            match_tol,
            precision,
            output: path("output"),
            sweep_output: path("sweep_output"),
            jobs,
            raw: raw.clone(),
        };
        config.engine_at(config.engine.tau_u, config.engine.r_u).validate().map_err(|e| raw.locate(e))?;
        config.r_values()?;
        config.tau_values()?;
        Ok(config)
    }

    pub fn sweep_mode(&self) -> SweepMode {
        match (self.mode, self.tau_b_ratio) {
            (Mode::Perfect, _) => SweepMode::Perfect,
            (Mode::Finite, Some(ratio)) => SweepMode::Finite(HeatStrokeTime::Proportional(ratio)),
            (Mode::Finite, None) => SweepMode::Finite(HeatStrokeTime::Fixed(self.engine.tau_b)),
        }
    }

    /// The engine evaluated at one grid point, with `tau_b` set by the mode.
    pub fn engine_at(&self, tau_u: f64, r_u: f64) -> EngineConfig {
        self.sweep_mode().configure(&self.engine, tau_u, r_u)
    }

    pub fn r_values(&self) -> anyhow::Result<Vec<f64>> {
        let g = self.r_grid;
        let values = linear_grid("r_grid", g.min, g.max, g.count).map_err(|e| self.raw.locate(e))?;
        if values.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            let source = self.raw.source_of("r_grid_min");
            return Err(ConfigError::at(&source, "r_u grid must lie strictly inside (0, 1)").into());
        }
        Ok(values)
    }

    /// The `tau_u` grid, or the single configured `tau_u` when no grid is set.
    pub fn tau_values(&self) -> anyhow::Result<Vec<f64>> {
        match self.tau_grid {
            None => Ok(vec![self.engine.tau_u]),
            Some(g) => {
                let values = linear_grid("tau_grid", g.min, g.max, g.count).map_err(|e| self.raw.locate(e))?;
                if values.iter().any(|&t| !(t > 0.0)) {
                    let source = self.raw.source_of("tau_grid_min");
                    return Err(ConfigError::at(&source, "tau_u grid must be positive").into());
                }
                Ok(values)
            }
        }
    }

    pub fn optimizer_settings(&self) -> anyhow::Result<OptimizerSettings> {
        Ok(OptimizerSettings {
            r_grid: self.r_values()?,
            refine: self.refine,
            refine_tol: self.refine_tol,
            jump_threshold: self.jump_threshold,
            match_tol: self.match_tol,
            jobs: self.jobs,
        })
    }

    pub fn source_of(&self, key: &str) -> Source {
        self.raw.source_of(key)
    }

    /// `key = value` lines of every set key, in [`KEYS`] order.
    pub fn echo(&self) -> Vec<String> {
        KEYS.iter()
            .filter_map(|key| {
                let (v, _) = self.raw.raw(key)?;
                (!v.is_empty()).then(|| format!("{key} = {v}"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_text(text: &str, overrides: &Overrides) -> anyhow::Result<RunConfig> {
        let mut raw = RawConfig::defaults();
        raw.apply_text(text, Path::new("run.cfg"))?;
        raw.apply_overrides(overrides);
        RunConfig::resolve(raw)
    }

    #[test]
    fn precedence_is_cli_file_default() {
        let overrides = Overrides {
            beta_h: Some("0.2".into()),
            ..Overrides::default()
        };
        let c = load_text("beta_h = 0.15\nomega2 = 1.8\n", &overrides).unwrap();
        assert_eq!(c.engine.beta_h, 0.2);
        assert_eq!(c.engine.omega2, 1.8);
        assert_eq!(c.engine.beta_c, 0.5);
        assert!(c.engine.tau_b.is_infinite());
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = load_text("# header\nomega2 = 2\nbeta_h = abc\n", &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("run.cfg:3") && msg.contains("beta_h"), "{msg}");

        let err = load_text("omeg2 = 2\n", &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("run.cfg:1: unknown key `omeg2`"));

        let err = load_text("beta_c = 0.05\n", &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("run.cfg:1") && msg.contains("beta_c"), "{msg}");

        let err = load_text("tau_b\n", &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("expected `key = value`"));
        assert!(load_text("n_cut = 5\nn_cut = 6\n", &Overrides::default()).is_err());
    }

    #[test]
    fn empty_tau_grid_is_rejected() {
        let err = load_text("tau_grid_min = 1\ntau_grid_max = 2\ntau_grid_count = 0\n", &Overrides::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("tau_grid") && msg.contains("run.cfg:3"), "{msg}");
    }

    #[test]
    fn echo_reloads_to_the_same_config() {
        let c = load_text("substance = tls\ntau_grid_min = 1\ntau_grid_max = 3\ntau_grid_count = 5\n", &Overrides::default())
            .unwrap();
        let text = c.echo().join("\n");
        let again = load_text(&text, &Overrides::default()).unwrap();
        assert_eq!(again.echo(), c.echo());
        assert_eq!(again.engine, c.engine);
        assert_eq!(again.tau_values().unwrap(), c.tau_values().unwrap());
    }

    #[test]
    fn finite_mode_uses_ratio() {
        let c = load_text("mode = finite\ntau_b_ratio = 10\ntau_u = 2\n", &Overrides::default()).unwrap();
        assert_eq!(c.engine_at(3.0, 0.4).tau_b, 30.0);
        let c = load_text("mode = finite\ntau_b = 7\n", &Overrides::default()).unwrap();
        assert_eq!(c.engine_at(3.0, 0.4).tau_b, 7.0);
    }
}
