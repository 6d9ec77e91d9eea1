use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bandit::{AgentKind, AgentParams};
use crate::control::{ContinualConfig, EpisodicConfig};
use crate::domains::MnistConfig;
use crate::error::{config, Error, Result};
use crate::memory::{SelectionConfig, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Infer,
    Bandit,
    CartpoleEpisodic,
    CartpoleContinual,
    Mnist,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Infer,
        ExperimentKind::Bandit,
        ExperimentKind::CartpoleEpisodic,
        ExperimentKind::CartpoleContinual,
        ExperimentKind::Mnist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Infer => "infer",
            ExperimentKind::Bandit => "bandit",
            ExperimentKind::CartpoleEpisodic => "cartpole-episodic",
            ExperimentKind::CartpoleContinual => "cartpole-continual",
            ExperimentKind::Mnist => "mnist",
        }
    }

    /// Name of the config section holding this experiment's settings.
    pub fn section(self) -> &'static str {
        match self {
            ExperimentKind::Infer => "infer",
            ExperimentKind::Bandit => "bandit",
            ExperimentKind::CartpoleEpisodic => "cartpole_episodic",
            ExperimentKind::CartpoleContinual => "cartpole_continual",
            ExperimentKind::Mnist => "mnist",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| config("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(config("profile", format!("unknown profile `{s}` (expected desk or full)"))),
        }
    }
}

/// One learner of the sinusoid-tracking experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InferMethod {
    Recursive,
    Bocd {
        hazard: f64,
    },
    Forgetting {
        alpha: f64,
    },
    PowerPrior {
        alpha: f64,
    },
    Bam {
        lambda: f64,
        #[serde(default)]
        strategy: Strategy,
        #[serde(default = "default_quantile")]
        quantile_q: f64,
    },
}

fn default_quantile() -> f64 {
    SelectionConfig::default().quantile_q
}

impl InferMethod {
    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        match *self {
            InferMethod::Recursive => Ok(()),
            InferMethod::Bocd { hazard } if !(hazard > 0.0 && hazard <= 1.0) => {
                Err(("hazard", format!("{hazard} is outside (0, 1]")))
            }
            InferMethod::Forgetting { alpha } | InferMethod::PowerPrior { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(("alpha", format!("{alpha} is outside [0, 1]")))
            }
            InferMethod::Bam { lambda, strategy, quantile_q } => SelectionConfig {
                lambda,
                strategy,
                quantile_q,
                ..SelectionConfig::default()
            }
            .validate()
            .map_err(|e| match e {
                Error::InvalidParameter { name, reason } => (name, reason),
                other => ("lambda", other.to_string()),
            }),
            _ => Ok(()),
        }
    }
}

/// Sinusoidal Binomial tracking: theta_t = offset + amplitude sin(2 pi t / period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub steps: usize,
    /// Binomial trials per step.
    pub trials: u64,
    pub amplitude: f64,
    pub offset: f64,
    pub period: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub methods: BTreeMap<String, InferMethod>,
}

impl Default for InferConfig {
    fn default() -> Self {
        let methods = [
            ("recursive", InferMethod::Recursive),
            ("bocd", InferMethod::Bocd { hazard: 0.01 }),
            ("bf", InferMethod::Forgetting { alpha: 0.8 }),
            ("bam", InferMethod::Bam { lambda: 0.0, strategy: Strategy::BottomUp, quantile_q: 0.5 }),
            ("bam_reg", InferMethod::Bam { lambda: 0.1, strategy: Strategy::BottomUp, quantile_q: 0.5 }),
        ];
        Self {
            steps: 500,
            trials: 15,
            amplitude: 0.3,
            offset: 0.5,
            period: 100.0,
            prior_alpha: 1.0,
            prior_beta: 1.0,
            methods: methods.into_iter().map(|(k, m)| (k.to_string(), m)).collect(),
        }
    }
}

impl InferConfig {
    pub fn theta(&self, t: usize) -> f64 {
        self.offset + self.amplitude * (2.0 * std::f64::consts::PI * t as f64 / self.period).sin()
    }

    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("infer.{k}");
        if self.steps == 0 {
            return Err(config(key("steps"), "must be positive"));
        }
        if self.trials == 0 {
            return Err(config(key("trials"), "must be positive"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(config(key("period"), "must be positive and finite"));
        }
        let (lo, hi) = (self.offset - self.amplitude.abs(), self.offset + self.amplitude.abs());
        if !(lo >= 0.0 && hi <= 1.0) {
            return Err(config(key("amplitude"), format!("theta range [{lo}, {hi}] leaves [0, 1]")));
        }
        for (name, v) in [("prior_alpha", self.prior_alpha), ("prior_beta", self.prior_beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(key(name), "must be positive and finite"));
            }
        }
        if self.methods.is_empty() {
            return Err(config(key("methods"), "no methods configured"));
        }
        for (label, m) in &self.methods {
            m.validate()
                .map_err(|(field, reason)| config(format!("infer.methods.{label}.{field}"), reason))?;
        }
        Ok(())
    }
}

/// Switching-arm bandit protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    /// Arm counts to run; each gets its own random configurations.
    pub arms: Vec<usize>,
    pub horizon: usize,
    /// Random arm configurations per arm count.
    pub configs: usize,
    pub switch_rate: f64,
    pub noise_sd: f64,
    pub agents: Vec<AgentKind>,
    pub params: AgentParams,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            arms: vec![10],
            horizon: 5000,
            configs: 5,
            switch_rate: 0.016,
            noise_sd: 0.25,
            agents: AgentKind::ALL.to_vec(),
            params: AgentParams::default(),
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("bandit.{k}");
        if self.arms.is_empty() || self.arms.iter().any(|&k| k < 2) {
            return Err(config(key("arms"), "need a non-empty list of arm counts, each >= 2"));
        }
        if self.horizon == 0 {
            return Err(config(key("horizon"), "must be positive"));
        }
        if self.configs == 0 {
            return Err(config(key("configs"), "must be positive"));
        }
        if !(self.switch_rate > 0.0 && self.switch_rate < 1.0) {
            return Err(config(key("switch_rate"), format!("{} is outside (0, 1)", self.switch_rate)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(config(key("noise_sd"), "must be finite and >= 0"));
        }
        if self.agents.is_empty() {
            return Err(config(key("agents"), "no agents configured"));
        }
        let p = &self.params;
        for (name, ok) in [
            ("prior_mean", p.prior_mean.is_finite()),
            ("prior_variance", p.prior_variance > 0.0 && p.prior_variance.is_finite()),
            ("noise_variance", p.noise_variance > 0.0 && p.noise_variance.is_finite()),
            ("forgetting_alpha", (0.0..=1.0).contains(&p.forgetting_alpha)),
            ("bocd_hazard", p.bocd_hazard > 0.0 && p.bocd_hazard <= 1.0),
            ("ucbam_lambda", p.ucbam_lambda >= 0.0 && p.ucbam_lambda.is_finite()),
        ] {
            if !ok {
                return Err(config(format!("bandit.params.{name}"), "out of range"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Settings {
    Infer(InferConfig),
    Bandit(BanditConfig),
    CartpoleEpisodic(EpisodicConfig),
    CartpoleContinual(ContinualConfig),
    Mnist(MnistConfig),
}

/// A fully resolved experiment: profile preset plus file overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub profile: Profile,
    /// Replicate indices; each expands to its own random streams.
    pub seeds: Vec<u64>,
    /// Directory with IDX files (mnist only).
    pub data_dir: Option<PathBuf>,
    pub settings: Settings,
}

const TOP_LEVEL_KEYS: [&str; 4] = ["experiment", "profile", "seeds", "data_dir"];

impl ExperimentConfig {
    /// Built-in settings for a profile.
    pub fn preset(kind: ExperimentKind, profile: Profile) -> Self {
        let full = profile == Profile::Full;
        let (seeds, settings): (u64, Settings) = match kind {
            ExperimentKind::Infer => (20, Settings::Infer(InferConfig::default())),
            ExperimentKind::Bandit => (
                5,
                Settings::Bandit(if full {
                    BanditConfig { arms: vec![10, 50], horizon: 10_000, ..BanditConfig::default() }
                } else {
                    BanditConfig::default()
                }),
            ),
            ExperimentKind::CartpoleEpisodic => (
                5,
                Settings::CartpoleEpisodic(if full {
                    EpisodicConfig::default()
                } else {
                    EpisodicConfig { trial_length: 100, trials_per_episode: 10, ..EpisodicConfig::default() }
                }),
            ),
            ExperimentKind::CartpoleContinual => (
                5,
                Settings::CartpoleContinual(if full {
                    ContinualConfig::default()
                } else {
                    ContinualConfig { trial_length: 100, ..ContinualConfig::default() }
                }),
            ),
            ExperimentKind::Mnist => (
                10,
                Settings::Mnist(if full { MnistConfig::default() } else { MnistConfig::desk() }),
            ),
        };
        let data_dir = match (kind, profile) {
            (ExperimentKind::Mnist, Profile::Full) => Some(PathBuf::from("data/mnist")),
            (ExperimentKind::Mnist, Profile::Desk) => Some(PathBuf::from("data/mnist-subset")),
            _ => None,
        };
        Self { experiment: kind, profile, seeds: (0..seeds).collect(), data_dir, settings }
    }

    /// Parses a TOML file body. `kind` is the experiment requested by the
    /// caller; `profile` overrides the file's `profile` key when given.
    pub fn from_toml_str(text: &str, kind: ExperimentKind, profile: Option<Profile>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config("<file>", e.message().to_string()))?;
        if let Some(v) = table.remove("experiment") {
            let named: ExperimentKind = field("experiment", v)?;
            if named != kind {
                return Err(config("experiment", format!("file is for `{named}` but `{kind}` was requested")));
            }
        }
        let file_profile: Option<Profile> = table.remove("profile").map(|v| field("profile", v)).transpose()?;
        let mut cfg = Self::preset(kind, profile.or(file_profile).unwrap_or_default());
        if let Some(v) = table.remove("seeds") {
            cfg.seeds = field("seeds", v)?;
        }
        if let Some(v) = table.remove("data_dir") {
            cfg.data_dir = Some(field("data_dir", v)?);
        }
        if let Some(v) = table.remove(kind.section()) {
            let toml::Value::Table(overrides) = v else {
                return Err(config(kind.section(), "expected a table"));
            };
            cfg.settings = cfg.settings.merged(kind, overrides)?;
        }
        if let Some(key) = table.keys().next() {
            let reason = if ExperimentKind::ALL.iter().any(|k| k.section() == key) {
                format!("section does not apply to experiment `{kind}`")
            } else {
                format!("unknown key (expected one of {}, {})", TOP_LEVEL_KEYS.join(", "), kind.section())
            };
            return Err(config(key.clone(), reason));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, kind: ExperimentKind, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, kind, profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config("seeds", "seed list is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(config("seeds", "seed list has duplicates"));
        }
        let section = self.experiment.section();
        let prefixed = |e: Error| match e {
            Error::InvalidParameter { name, reason } => config(format!("{section}.{name}"), reason),
            other => other,
        };
        match &self.settings {
            Settings::Infer(c) => c.validate(),
            Settings::Bandit(c) => c.validate(),
            Settings::CartpoleEpisodic(c) => c.validate().map_err(prefixed),
            Settings::CartpoleContinual(c) => c.validate().map_err(prefixed),
            Settings::Mnist(c) => c.validate().map_err(prefixed),
        }
    }

    /// The resolved configuration as TOML, loadable by [`Self::from_toml_str`].
    pub fn to_toml_string(&self) -> Result<String> {
        let mut table = toml::Table::new();
        table.insert("experiment".into(), toml::Value::String(self.experiment.name().into()));
        table.insert("profile".into(), toml::Value::try_from(self.profile).map_err(ser_err)?);
        table.insert("seeds".into(), toml::Value::try_from(&self.seeds).map_err(ser_err)?);
        if let Some(dir) = &self.data_dir {
            table.insert("data_dir".into(), toml::Value::String(dir.display().to_string()));
        }
        table.insert(self.experiment.section().into(), self.settings.to_value()?);
        toml::to_string(&table).map_err(ser_err)
    }
}

fn ser_err(e: impl fmt::Display) -> Error {
    Error::Numerical(format!("config serialisation failed: {e}"))
}

fn field<T: DeserializeOwned>(key: &str, v: toml::Value) -> Result<T> {
    T::deserialize(v).map_err(|e| config(key, e.to_string()))
}

/// Deserialises `value` reporting the dotted path of the offending key.
fn section_from<T: DeserializeOwned>(section: &str, value: toml::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let mut reason = e.into_inner().to_string();
        let mut key = if path == "." { section.to_string() } else { format!("{section}.{path}") };
        if let Some(name) = reason.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            if !key.ends_with(&format!(".{name}")) {
                key = format!("{key}.{name}");
            }
            reason = format!("unknown key; {reason}");
        }
        config(key, reason)
    })
}

/// Recursively overlays `overrides` onto `base`. Tables merge key by key;
/// everything else, and the `methods` table, is replaced wholesale.
fn overlay(base: &mut toml::Table, overrides: toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "methods" => overlay(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Settings {
    fn to_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(ser_err)
    }

    fn merged(&self, kind: ExperimentKind, overrides: toml::Table) -> Result<Self> {
        let toml::Value::Table(mut base) = self.to_value()? else {
            return Err(ser_err("settings did not serialise to a table"));
        };
        overlay(&mut base, overrides);
        let v = toml::Value::Table(base);
        let s = kind.section();
        Ok(match kind {
            ExperimentKind::Infer => Settings::Infer(section_from(s, v)?),
            ExperimentKind::Bandit => Settings::Bandit(section_from(s, v)?),
            ExperimentKind::CartpoleEpisodic => Settings::CartpoleEpisodic(section_from(s, v)?),
            ExperimentKind::CartpoleContinual => Settings::CartpoleContinual(section_from(s, v)?),
            ExperimentKind::Mnist => Settings::Mnist(section_from(s, v)?),
        })
    }
}
