use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{AnyEnv, DilemmaConfig, DilemmaEnv, GridEnv, GridEnvConfig};
use crate::error::{Error, Result};
use crate::governance::{KernelConfig, ShapingMode};
use crate::kernel::{DomainDescriptor, KernelSpec, Scope, SignMode};
use crate::learner::LearnerConfig;
use crate::scheduler::{plan_rounds, Objective, SearchOptions};

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// One experiment: an environment, how it is governed, a learner, and the
/// seeds to repeat it over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Training timesteps per seed.
    pub budget: u64,
    pub env: EnvSection,
    #[serde(default)]
    pub governance: GovernanceSection,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub search: Option<SearchSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSection {
    Grid(GridEnvConfig),
    Dilemma(DilemmaConfig),
}

impl EnvSection {
    pub fn domain(&self) -> DomainDescriptor {
        match self {
            EnvSection::Grid(g) => DomainDescriptor::Grid(g.dims.clone()),
            EnvSection::Dilemma(d) => d.domain(),
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            EnvSection::Grid(g) => g.n_agents,
            EnvSection::Dilemma(d) => d.n_agents,
        }
    }

    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match self {
            EnvSection::Grid(g) => AnyEnv::Grid(GridEnv::new(g.clone())?),
            EnvSection::Dilemma(d) => AnyEnv::Dilemma(DilemmaEnv::new(d.clone())?),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GovernanceSection {
    #[default]
    None,
    Mors,
    Fixed(FixedGovernance),
    Search(SearchGovernance),
}

impl GovernanceSection {
    pub fn kind(&self) -> &'static str {
        match self {
            GovernanceSection::None => "none",
            GovernanceSection::Mors => "mors",
            GovernanceSection::Fixed(_) => "fixed",
            GovernanceSection::Search(_) => "search",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedGovernance {
    #[serde(default)]
    pub mode: ShapingMode,
    /// Shaping discount; the learner's when unset.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    /// Kernel configuration files, relative to the experiment file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernel_files: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchGovernance {
    #[serde(default)]
    pub mode: ShapingMode,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Sign mode of sampled kernels.
    #[serde(default = "all_positive")]
    pub sign_mode: SignMode,
}

fn all_positive() -> SignMode {
    SignMode::AllPositive
}

fn default_eta() -> u64 {
    3
}
fn default_top_k() -> usize {
    3
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_unit() -> u64 {
    1000
}

/// Search settings. Budgets are in resource units of
/// `timesteps_per_unit` environment steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub total: u64,
    pub rounds: u32,
    #[serde(default = "default_eta")]
    pub eta: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "half")]
    pub mutation_prob: f64,
    #[serde(default = "half")]
    pub superimpose_prob: f64,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "yes")]
    pub resume: bool,
    #[serde(default = "default_unit")]
    pub timesteps_per_unit: u64,
    /// Search seed; the first experiment seed when unset.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SearchSection {
    pub fn options(&self, fallback_seed: u64, workers: usize) -> SearchOptions {
        SearchOptions {
            total: self.total,
            rounds: self.rounds,
            eta: self.eta,
            top_k: self.top_k,
            mutation_prob: self.mutation_prob,
            superimpose_prob: self.superimpose_prob,
            objective: self.objective,
            resume: self.resume,
            workers: workers.max(1),
            seed: self.seed.unwrap_or(fallback_seed),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors name the offending field.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
        })
    }

    /// Reads, resolves kernel files against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_files(path.parent().unwrap_or(Path::new(".")))?;
        config.validate()?;
        Ok(config)
    }

    /// Inlines `governance.kernel_files`.
    pub fn resolve_files(&mut self, base: &Path) -> Result<()> {
        if let GovernanceSection::Fixed(f) = &mut self.governance {
            for (i, file) in std::mem::take(&mut f.kernel_files).into_iter().enumerate() {
                let where_ = format!("governance.kernel_files[{i}]");
                let text = fs::read_to_string(base.join(&file))
                    .map_err(|e| Error::config(&where_, format!("{}: {e}", file.display())))?;
                let kernels = KernelConfig::from_toml(&text)
                    .map_err(|e| Error::config(&where_, e.to_string()))?;
                f.kernels.extend(kernels.components);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget", "must be positive"));
        }
        match &self.env {
            EnvSection::Grid(g) => g.validate()?,
            EnvSection::Dilemma(d) => d.validate()?,
        }
        self.learner.validate()?;
        let domain = self.env.domain();
        let n_agents = self.env.n_agents();
        match &self.governance {
            GovernanceSection::None => {}
            GovernanceSection::Mors => {
                if !matches!(self.env, EnvSection::Grid(_)) {
                    return Err(Error::config("governance.kind", "mors needs the delivery grid"));
                }
            }
            GovernanceSection::Fixed(f) => {
                check_gamma(f.gamma)?;
                if f.kernels.is_empty() && f.kernel_files.is_empty() {
                    return Err(Error::config("governance.kernels", "fixed governance needs kernels"));
                }
                for (i, spec) in f.kernels.iter().enumerate() {
                    let at = |field: &str| format!("governance.kernels[{i}]{field}");
                    spec.validate().map_err(|e| Error::config(at(""), e.to_string()))?;
                    spec.check_domain(&domain)
                        .map_err(|e| Error::config(at(".family"), e.to_string()))?;
                    if let Scope::AgentSpecific(a) = spec.scope {
                        if a >= n_agents {
                            return Err(Error::config(
                                at(".scope"),
                                format!("agent {a} but the environment has {n_agents}"),
                            ));
                        }
                    }
                }
                // Builds the fields once so anchor and sign-mode problems
                // surface before any training.
                if f.kernel_files.is_empty() {
                    let env = self.env.build()?;
                    crate::governance::Governed::from_kernels(
                        env,
                        KernelConfig::new(f.kernels.clone()),
                        f.mode,
                        f.gamma.unwrap_or(self.learner.gamma),
                        0,
                    )
                    .map_err(|e| Error::config("governance.kernels", e.to_string()))?;
                }
            }
            GovernanceSection::Search(s) => check_gamma(s.gamma)?,
        }
        match (&self.governance, &self.search) {
            (GovernanceSection::Search(_), None) => {
                return Err(Error::config("search", "search governance needs a [search] section"))
            }
            (GovernanceSection::Search(_), Some(s)) => {
                s.options(self.seeds[0], 1).validate()?;
                if s.timesteps_per_unit == 0 {
                    return Err(Error::config("search.timesteps_per_unit", "must be positive"));
                }
                plan_rounds(s.total, s.rounds, s.eta)
                    .map_err(|e| Error::config("search.total", e.to_string()))?;
            }
            (_, Some(_)) => {
                return Err(Error::config(
                    "search",
                    format!("a [search] section needs governance kind `search`, not `{}`", self.governance.kind()),
                ))
            }
            (_, None) => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form. Formatting and comments in the
    /// source file do not affect it.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Shaping discount for governed runs.
    pub fn shaping_gamma(&self) -> f64 {
        let own = match &self.governance {
            GovernanceSection::Fixed(f) => f.gamma,
            GovernanceSection::Search(s) => s.gamma,
            _ => None,
        };
        own.unwrap_or(self.learner.gamma)
    }
}

fn check_gamma(gamma: Option<f64>) -> Result<()> {
    match gamma {
        Some(g) if !(0.0..=1.0).contains(&g) => {
            Err(Error::config("governance.gamma", format!("{g} outside [0, 1]")))
        }
        _ => Ok(()),
    }
}
