//! Run configuration: one JSON document, unknown keys rejected, every
//! validation error tied to the field path that caused it.

use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use reslab::asymptotics::DecaySettings;
use reslab::diagnostics::{energy_grid, grid_offset, DosMethod, Thresholds};
use reslab::resonance::ResonanceSettings;
use reslab::verify::SuiteSettings;
use reslab::{Distribution, EtaLadder, Graph, OperatorModel, TopologySpec, TreeBoundary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Green,
    Dos,
    GammaScan,
    Resonance,
    Lyapunov,
    PhaseScan,
    VerifyAll,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Green => "green",
            Command::Dos => "dos",
            Command::GammaScan => "gamma-scan",
            Command::Resonance => "resonance",
            Command::Lyapunov => "lyapunov",
            Command::PhaseScan => "phase-scan",
            Command::VerifyAll => "verify-all",
        }
    }

    fn needs_model(&self) -> bool {
        *self != Command::VerifyAll
    }

    fn needs_tree(&self) -> bool {
        matches!(self, Command::Resonance | Command::Lyapunov | Command::PhaseScan)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the command given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub topology: Option<TopologySpec>,
    pub dist: Option<Distribution>,
    pub lambda: Option<f64>,
    pub seed: u64,
    /// Explicit energies; excludes `energy_grid`.
    pub energies: Option<Vec<f64>>,
    /// Evenly spaced energies, shifted off exact eigenvalues of `A`.
    pub energy_grid: Option<GridSpec>,
    /// Disorder strengths of a phase scan; defaults to `[lambda]`.
    pub lambdas: Option<Vec<f64>>,
    pub ladder: EtaLadder,
    pub thresholds: Thresholds,
    pub replicates: usize,
    /// Spectral broadening of the density of states.
    pub eta: f64,
    pub dos_method: DosMethod,
    /// Site of the Green function; the origin by default.
    pub site: Option<usize>,
    /// Tree boundary for green, dos and gamma-scan.
    pub boundary: TreeBoundary,
    /// Sphere radius `R` of the resonance count.
    pub radius: usize,
    /// Replicates of the `|g|` floor sweep run alongside `resonance`; 0 skips it.
    pub g_sweep_replicates: usize,
    pub resonance: ResonanceSettings,
    pub decay: DecaySettings,
    pub verify: SuiteSettings,
    /// Output directory; the command line wins.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; the command line wins. Never affects outputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            topology: None,
            dist: None,
            lambda: None,
            seed: 0,
            energies: None,
            energy_grid: None,
            lambdas: None,
            ladder: EtaLadder::default(),
            thresholds: Thresholds::default(),
            replicates: 100,
            eta: 1e-3,
            dos_method: DosMethod::SpectralAverage,
            site: None,
            boundary: TreeBoundary::FreeTree,
            radius: 10,
            g_sweep_replicates: 0,
            resonance: ResonanceSettings::default(),
            decay: DecaySettings::default(),
            verify: SuiteSettings::default(),
            out: None,
            workers: None,
        }
    }
}

/// A configuration problem at `path`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
    pub suggestion: Option<String>,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
            suggestion: None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)?;
        if let Some(s) = &self.suggestion {
            write!(f, " (did you mean `{s}`?)")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::new(path, message))
}

/// Backticked names in a serde message: the offending key first, then the
/// accepted ones.
fn backticked(msg: &str) -> Vec<&str> {
    msg.split('`').skip(1).step_by(2).collect()
}

fn closest<'a>(key: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(key, c), *c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 3))
        .min()
        .map(|(_, c)| c)
}

fn schema_error(e: serde_path_to_error::Error<serde_json::Error>) -> ConfigError {
    let path = e.path().to_string();
    let message = e.inner().to_string();
    let base = if path == "." { String::new() } else { path };
    if message.starts_with("unknown field") {
        let names = backticked(&message);
        if let Some((key, expected)) = names.split_first() {
            let path = if base.is_empty() {
                key.to_string()
            } else if base.ends_with(key) {
                base
            } else {
                format!("{base}.{key}")
            };
            return ConfigError {
                path,
                message: format!("unknown key `{key}`"),
                suggestion: closest(key, expected).map(str::to_string),
            };
        }
    }
    ConfigError::new(if base.is_empty() { "<root>".to_string() } else { base }, message)
}

/// Parse and schema-check a configuration. Command-specific checks run in
/// [`RunConfig::check_for`]; if the document names a command they run here too.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(schema_error)?;
    cfg.validate()?;
    if let Some(cmd) = cfg.command {
        cfg.check_for(cmd)?;
    }
    Ok(cfg)
}

impl RunConfig {
    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ladder.eta0 > 0.0 && self.ladder.eta0.is_finite()) {
            return err("ladder.eta0", format!("must be positive and finite, got {}", self.ladder.eta0));
        }
        let windows = self.thresholds.fit_rungs.max(self.thresholds.plateau_rungs);
        if self.ladder.rungs < windows.max(2) {
            return err(
                "ladder.rungs",
                format!("{} rungs is shorter than the verdict windows ({windows})", self.ladder.rungs),
            );
        }
        self.thresholds
            .validate()
            .or_else(|e| err("thresholds", e.to_string()))?;
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return err("lambda", format!("must be finite and nonnegative, got {l}"));
            }
        }
        if let Some(d) = &self.dist {
            d.validate().or_else(|e| err("dist", e.to_string()))?;
        }
        if let Some(es) = &self.energies {
            if es.is_empty() {
                return err("energies", "must not be empty");
            }
            if let Some(i) = es.iter().position(|e| !e.is_finite()) {
                return err(&format!("energies[{i}]"), "must be finite");
            }
            if self.energy_grid.is_some() {
                return err("energy_grid", "conflicts with `energies`; give one of them");
            }
        }
        if let Some(g) = &self.energy_grid {
            if g.n == 0 {
                return err("energy_grid.n", "must be positive");
            }
            if !(g.lo.is_finite() && g.hi.is_finite() && g.lo <= g.hi) {
                return err("energy_grid.hi", "need finite lo <= hi");
            }
        }
        if let Some(ls) = &self.lambdas {
            if ls.is_empty() {
                return err("lambdas", "must not be empty");
            }
            if let Some(i) = ls.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
                return err(&format!("lambdas[{i}]"), "must be finite and nonnegative");
            }
        }
        if self.replicates == 0 {
            return err("replicates", "must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return err("eta", format!("must be positive, got {}", self.eta));
        }
        if self.radius == 0 {
            return err("radius", "must be positive");
        }
        if self.workers == Some(0) {
            return err("workers", "must be at least 1");
        }
        self.resonance
            .validate()
            .or_else(|e| err("resonance", e.to_string()))?;
        self.decay.validate().or_else(|e| err("decay", e.to_string()))?;
        self.verify.validate().or_else(|e| err("verify", e.to_string()))?;
        Ok(())
    }

    /// Checks that tie parameters to the command, e.g. tree-only commands.
    pub fn check_for(&self, cmd: Command) -> Result<(), ConfigError> {
        if let Some(c) = self.command {
            if c != cmd {
                return err("command", format!("config is for `{c}` but `{cmd}` was requested"));
            }
        }
        if !cmd.needs_model() {
            return Ok(());
        }
        let topology = match &self.topology {
            Some(t) => t,
            None => return err("topology", format!("required by `{cmd}`")),
        };
        let dist = match &self.dist {
            Some(d) => d,
            None => return err("dist", format!("required by `{cmd}`")),
        };
        if self.lambda.is_none() {
            return err("lambda", format!("required by `{cmd}`"));
        }
        let depth = match topology {
            TopologySpec::Tree { depth, .. } => Some(*depth),
            _ => None,
        };
        if cmd.needs_tree() && depth.is_none() {
            return err("topology", format!("`{cmd}` needs a tree topology"));
        }
        if cmd != Command::Green && self.site.is_some() {
            return err("site", format!("only used by `green`, not `{cmd}`"));
        }
        if cmd != Command::PhaseScan && self.lambdas.is_some() {
            return err("lambdas", format!("only used by `phase-scan`, not `{cmd}`"));
        }
        if matches!(cmd, Command::Dos | Command::GammaScan) && self.replicates < 100 {
            return err("replicates", format!("`{cmd}` needs at least 100 replicates"));
        }
        if cmd == Command::Dos && !dist.has_density() {
            return err("dist", format!("`dos` needs a distribution with a density, got {}", dist.name()));
        }
        if cmd == Command::Resonance {
            if self.energies(cmd).len() != 1 {
                return err("energies", "`resonance` runs at a single energy");
            }
            if self.replicates < 2 {
                return err("replicates", "`resonance` needs at least 2 replicates");
            }
            if self.lambda == Some(0.0) || !dist.has_density() {
                return err("lambda", "`resonance` needs λV with a density");
            }
        }
        if let Some(d) = depth {
            if cmd == Command::Resonance && self.radius > d {
                return err("radius", format!("radius {} exceeds tree depth {d}", self.radius));
            }
            if matches!(cmd, Command::Lyapunov | Command::PhaseScan) && self.decay.d_max + 2 > d {
                return err(
                    "decay.d_max",
                    format!("{} must stay two shells inside tree depth {d}", self.decay.d_max),
                );
            }
            if self.site.is_some_and(|s| s != 0) {
                return err("site", "the tree engine evaluates the root only");
            }
        }
        Ok(())
    }

    /// Energies to scan: explicit list, grid, or the command default.
    pub fn energies(&self, cmd: Command) -> Vec<f64> {
        if let Some(e) = &self.energies {
            return e.clone();
        }
        match &self.energy_grid {
            Some(g) => energy_grid(g.lo, g.hi, g.n),
            None if matches!(cmd, Command::Resonance | Command::Lyapunov) => vec![grid_offset()],
            None => energy_grid(-3.0, 3.0, 13),
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.lambdas
            .clone()
            .unwrap_or_else(|| vec![self.lambda.unwrap_or(0.0)])
    }

    /// Build the operator model; run after [`check_for`](Self::check_for).
    pub fn model(&self) -> Result<OperatorModel, ConfigError> {
        let (Some(t), Some(d), Some(l)) = (&self.topology, self.dist, self.lambda) else {
            return err("topology", "model fields missing");
        };
        let graph = Graph::build(t).or_else(|e| err("topology", e.to_string()))?;
        let model = OperatorModel::new(graph, d, l, self.seed).or_else(|e| err("dist", e.to_string()))?;
        if let Some(s) = self.site {
            if s >= model.vertex_count() {
                return err("site", format!("{s} is out of range for {} vertices", model.vertex_count()));
            }
        }
        Ok(model)
    }

    /// Canonical bytes of everything that determines the outputs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut c = self.clone();
        c.out = None;
        c.workers = None;
        serde_json::to_vec(&c).expect("config serializes")
    }
}
