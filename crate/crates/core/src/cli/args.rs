//! Command-line flags, the optional JSON config file, and their merge into a
//! [`RunConfig`]. Flags take precedence over the file; the file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::ModelKind;
use crate::model::McmcConfig;
use crate::sim::ScenarioSpec;

#[derive(Parser, Debug)]
#[command(name = "swolca", version, about = "Survey-weighted supervised latent class analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to a survey CSV.
    Fit(FitArgs),
    /// Run a simulation scenario and report bias, interval width and coverage.
    Simulate(SimulateArgs),
    /// Recompute summary.json (and figures) from an existing run directory.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct McmcArgs {
    /// Total Gibbs iterations per stage.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Burn-in iterations discarded per stage (half of `--iters` when that
    /// would otherwise leave nothing to keep).
    #[arg(long)]
    pub burn: Option<usize>,
    /// Keep every `thin`-th draw after burn-in.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of classes in the overfitted adaptive stage.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Minimum class share counted as occupied.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Apply the design-based variance adjustment (weighted model only).
    #[arg(long, overrides_with = "no_adjust")]
    pub adjust: bool,
    /// Skip the variance adjustment.
    #[arg(long, overrides_with = "adjust")]
    pub no_adjust: bool,
    /// Bootstrap replicates used for the score covariance.
    #[arg(long)]
    pub boot_reps: Option<usize>,
}

impl McmcArgs {
    fn apply(&self, base: McmcConfig) -> McmcConfig {
        let mut c = base;
        if let Some(v) = self.iters {
            c.n_iter = v;
            if self.burn.is_none() && c.n_burn >= v {
                c.n_burn = v / 2;
            }
        }
        if let Some(v) = self.burn {
            c.n_burn = v;
        }
        if let Some(v) = self.thin {
            c.thin = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.kmax {
            c.k_max = v;
        }
        if let Some(v) = self.cutoff {
            c.class_cutoff = v;
        }
        if self.adjust {
            c.adjust_variance = true;
        }
        if self.no_adjust {
            c.adjust_variance = false;
        }
        if let Some(v) = self.boot_reps {
            c.n_boot_reps = v;
        }
        c
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct FitArgs {
    /// Survey CSV: item_1..item_J, y, weight, stratum, cluster, covariates.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// swolca (default), solca or wolca.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Level count per item, one value for all items or a comma list.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<usize>,
    /// Covariate profile for outcome probabilities, e.g. "class=1,stratum2=1".
    /// Repeatable; omitted covariates are 0, omitted class means every class.
    #[arg(long)]
    pub profile: Vec<String>,
    /// Write patterns.svg and probabilities.svg.
    #[arg(long)]
    pub plot: bool,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimulateArgs {
    /// Preset scenario 1-9.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Custom scenario JSON file (a ScenarioSpec).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of replicate samples.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated models to compare.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<ModelKind>,
    /// Output directory for metrics.json, metrics.md and replicates.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SummarizeArgs {
    /// Run directory holding chain.csv and run.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the profiles recorded at fit time.
    #[arg(long)]
    pub profile: Vec<String>,
    #[arg(long)]
    pub plot: bool,
}

/// Contents of `--config`. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub levels: Option<Vec<usize>>,
    pub profiles: Option<Vec<String>>,
    pub plot: Option<bool>,
    pub mcmc: Option<McmcConfig>,
    pub scenario: Option<u8>,
    pub spec: Option<ScenarioSpec>,
    pub replicates: Option<usize>,
    pub models: Option<Vec<ModelKind>>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))
    }

    fn load(path: Option<&PathBuf>) -> Result<Self> {
        path.map(|p| Self::read(p)).transpose().map(Option::unwrap_or_default)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Fit,
    Simulate,
    Summarize,
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelKind,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub levels: Vec<usize>,
    pub mcmc: McmcConfig,
    pub scenario: Option<ScenarioSpec>,
    pub models: Vec<ModelKind>,
    pub profiles: Vec<String>,
    pub plot: bool,
}

impl RunConfig {
    pub fn for_fit(args: &FitArgs) -> Result<Self> {
        let file = ConfigFile::load(args.config.as_ref())?;
        let input = args.input.clone().or(file.input);
        if input.is_none() {
            return Err(Error::invalid("fit needs --input (or `input` in the config file)"));
        }
        Ok(RunConfig {
            command: CommandKind::Fit,
            model: args.model.or(file.model).unwrap_or(ModelKind::Swolca),
            input,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("swolca_out")),
            levels: if args.levels.is_empty() { file.levels.unwrap_or_default() } else { args.levels.clone() },
            mcmc: args.mcmc.apply(file.mcmc.unwrap_or_default()),
            scenario: None,
            models: Vec::new(),
            profiles: if args.profile.is_empty() { file.profiles.unwrap_or_default() } else { args.profile.clone() },
            plot: args.plot || file.plot.unwrap_or(false),
        })
    }

    pub fn for_simulate(args: &SimulateArgs) -> Result<Self> {
        let file = ConfigFile::load(args.config.as_ref())?;
        let mut spec = match (args.scenario, &args.spec) {
            (Some(_), Some(_)) => return Err(Error::invalid("give either --scenario or --spec, not both")),
            (Some(id), None) => ScenarioSpec::preset(id)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::invalid(format!("cannot read scenario {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::invalid(format!("scenario {}: {e}", path.display())))?
            }
            (None, None) => match (file.spec, file.scenario) {
                (Some(s), _) => s,
                (None, Some(id)) => ScenarioSpec::preset(id)?,
                (None, None) => ScenarioSpec::preset(2)?,
            },
        };
        if let Some(r) = args.replicates.or(file.replicates) {
            spec.replicates = r;
        }
        let models = if !args.models.is_empty() {
            args.models.clone()
        } else {
            file.models.unwrap_or_else(|| ModelKind::ALL.to_vec())
        };
        Ok(RunConfig {
            command: CommandKind::Simulate,
            model: models.first().copied().unwrap_or(ModelKind::Swolca),
            input: None,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("swolca_sim")),
            levels: Vec::new(),
            mcmc: args.mcmc.apply(file.mcmc.unwrap_or_default()),
            scenario: Some(spec),
            models,
            profiles: Vec::new(),
            plot: false,
        })
    }
}

/// One `--profile` query: an optional 1-based class and named covariate values.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub text: String,
    pub class: Option<usize>,
    pub values: Vec<(String, f64)>,
}

impl Profile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut class = None;
        let mut values = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("profile entry '{part}' is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "class" {
                let c: usize = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("profile class '{value}' is not a positive integer")))?;
                if c == 0 {
                    return Err(Error::invalid("profile classes are numbered from 1"));
                }
                class = Some(c);
            } else {
                let v: f64 = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("profile value '{value}' for {key} is not a number")))?;
                values.push((key.to_string(), v));
            }
        }
        Ok(Profile { text: text.to_string(), class, values })
    }

    /// Covariate vector in dataset column order; unnamed columns are 0.
    pub fn covariates(&self, names: &[String]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; names.len()];
        for (key, v) in &self.values {
            let idx = names
                .iter()
                .position(|n| n == key)
                .ok_or_else(|| Error::invalid(format!("profile covariate '{key}' is not a column; have {names:?}")))?;
            out[idx] = *v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_parse() {
        let p = Profile::parse("class=2, stratum2=1").unwrap();
        assert_eq!(p.class, Some(2));
        assert_eq!(p.covariates(&["age".into(), "stratum2".into()]).unwrap(), vec![0.0, 1.0]);
        assert!(Profile::parse("class=0").is_err());
        assert!(Profile::parse("stratum2").is_err());
        assert!(Profile::parse("x=1").unwrap().covariates(&["y".into()]).is_err());
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"input":"a.csv","model":"solca","mcmc":{"n_iter":500,"n_burn":100,"seed":9}}"#)
            .unwrap();
        let args = FitArgs {
            config: Some(path),
            mcmc: McmcArgs { seed: Some(3), no_adjust: true, ..Default::default() },
            ..Default::default()
        };
        let rc = RunConfig::for_fit(&args).unwrap();
        assert_eq!(rc.model, ModelKind::Solca);
        assert_eq!((rc.mcmc.n_iter, rc.mcmc.n_burn, rc.mcmc.seed), (500, 100, 3));
        assert!(!rc.mcmc.adjust_variance);
        assert_eq!(rc.mcmc.thin, 5);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"iterations": 10}"#).unwrap();
        assert!(ConfigFile::read(&path).is_err());
    }

    #[test]
    fn simulate_defaults_and_custom_spec() {
        let rc = RunConfig::for_simulate(&SimulateArgs { scenario: Some(1), replicates: Some(5), ..Default::default() })
            .unwrap();
        let spec = rc.scenario.unwrap();
        assert_eq!((spec.id, spec.replicates), (Some(1), 5));
        assert_eq!(rc.models, ModelKind::ALL.to_vec());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let custom = ScenarioSpec { id: None, n: 800, ..ScenarioSpec::preset(2).unwrap() };
        fs::write(&path, serde_json::to_string(&custom).unwrap()).unwrap();
        let rc = RunConfig::for_simulate(&SimulateArgs { spec: Some(path), ..Default::default() }).unwrap();
        let spec = rc.scenario.unwrap();
        let seven = ScenarioSpec::preset(7).unwrap();
        assert_eq!((spec.design, spec.association, spec.n, spec.pattern), (seven.design, seven.association, seven.n, seven.pattern));
    }
}
