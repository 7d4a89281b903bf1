use std::path::{Path, PathBuf};
use std::time::Duration;

use duostore_conic::MipOptions;
use duostore_core::degradation::DegradationParams;
use duostore_core::economics::EconParams;
use duostore_core::net::{load_network, validate_scenario, HybridNetwork, Scenario, Stage, Tariff};
use duostore_core::storage::DeviceParams;
use duostore_core::thermal::ThermalParams;
use duostore_dispatch::DispatchOptions;
use duostore_search::{PlanContext, SearchConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: String,
    pub file: PathBuf,
    pub weight_days: u32,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mip_gap: f64,
    /// Branch-and-bound node budget per dispatch solve.
    pub node_limit: usize,
    /// Wall-clock budget per dispatch solve, seconds.
    pub time_limit_s: Option<f64>,
    /// Worker threads; all cores when unset.
    pub jobs: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let mip = MipOptions::default();
        Self {
            mip_gap: mip.mip_gap,
            node_limit: mip.node_limit,
            time_limit_s: None,
            jobs: None,
        }
    }
}

/// Everything a run needs, read from one TOML file. Relative paths are
/// taken from the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: PathBuf,
    #[serde(default)]
    pub tariff: Option<PathBuf>,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Overrides `search.seed` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "yes")]
    pub thermal_model: bool,
    /// Cap on module rent over the event, $; the project budget when unset.
    #[serde(default)]
    pub rent_budget: Option<f64>,
    #[serde(default)]
    pub econ: EconParams,
    #[serde(default)]
    pub thermal: ThermalParams,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub degradation: DegradationParams,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

/// Validated network and scenarios of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub net: HybridNetwork,
    pub scenarios: Vec<Scenario>,
}

impl Inputs {
    pub fn stage(&self, stage: Stage) -> Vec<Scenario> {
        self.scenarios.iter().filter(|s| s.stage == stage).cloned().collect()
    }

    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CliError::Validation(format!("no scenario named {id}")))
    }
}

impl RunConfig {
    /// Parses a configuration whose relative paths hang off `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        Self::parse(text, base, base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path, path.parent().unwrap_or(Path::new(".")))
    }

    fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Format {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.network);
        if let Some(t) = &mut self.tariff {
            join(t);
        }
        join(&mut self.out);
        for s in &mut self.scenarios {
            join(&mut s.file);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.search.seed)
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            seed: self.seed(),
            ..self.search.clone()
        }
    }

    pub fn dispatch_options(&self) -> DispatchOptions {
        DispatchOptions {
            device: self.device.clone(),
            thermal: self.thermal.clone(),
            econ: self.econ.clone(),
            degradation: self.degradation.clone(),
            penalty_relaxed: false,
            thermal_model: self.thermal_model,
        }
    }

    pub fn mip_options(&self) -> MipOptions {
        MipOptions {
            mip_gap: self.solver.mip_gap,
            node_limit: self.solver.node_limit,
            time_limit: self.solver.time_limit_s.map(Duration::from_secs_f64),
            ..Default::default()
        }
    }

    pub fn rent_budget(&self) -> f64 {
        self.rent_budget.unwrap_or(self.econ.budget)
    }

    pub fn context(&self, inputs: &Inputs, stage: Stage) -> PlanContext {
        PlanContext {
            net: inputs.net.clone(),
            scenarios: inputs.stage(stage),
            opts: self.dispatch_options(),
            mip: self.mip_options(),
        }
    }

    /// Checks parameters and referenced files without reading them.
    pub fn validate(&self) -> Result<()> {
        self.econ.validate()?;
        self.thermal.validate()?;
        self.device.validate()?;
        self.degradation.validate()?;
        self.search_config().validate()?;
        if !(self.solver.mip_gap >= 0.0) || self.solver.node_limit == 0 {
            return Err(CliError::Validation("solver needs mip_gap >= 0 and node_limit >= 1".into()));
        }
        if self.solver.time_limit_s.is_some_and(|t| !(t > 0.0)) {
            return Err(CliError::Validation("time_limit_s must be positive".into()));
        }
        if self.solver.jobs == Some(0) {
            return Err(CliError::Validation("jobs must be at least 1".into()));
        }
        if self.rent_budget.is_some_and(|b| !(b >= 0.0)) {
            return Err(CliError::Validation("rent_budget must be non-negative".into()));
        }
        let mut files: Vec<&Path> = vec![&self.network];
        files.extend(self.tariff.as_deref());
        files.extend(self.scenarios.iter().map(|s| s.file.as_path()));
        for f in files {
            if !f.is_file() {
                return Err(CliError::Validation(format!("missing file {}", f.display())));
            }
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if self.scenarios[..i].iter().any(|o| o.id == s.id) {
                return Err(CliError::Validation(format!("scenario id {} used twice", s.id)));
            }
            if s.weight_days == 0 {
                return Err(CliError::Validation(format!("scenario {} has zero weight", s.id)));
            }
        }
        if self.out.exists() && !self.out.is_dir() {
            return Err(CliError::Validation(format!("{} is not a directory", self.out.display())));
        }
        Ok(())
    }

    /// Validates the configuration, then reads and checks the network and
    /// every scenario against it.
    pub fn inputs(&self) -> Result<Inputs> {
        self.validate()?;
        let net = load_network(&self.network)?;
        let tariff = match &self.tariff {
            Some(p) => Tariff::load(p)?,
            None => Tariff::default_tou(),
        };
        let scenarios = self
            .scenarios
            .iter()
            .map(|e| {
                let s = Scenario::load_csv(&e.file, &e.id, e.weight_days, e.stage, Some(&tariff))?;
                Ok(validate_scenario(s, &net)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Inputs { net, scenarios })
    }

    /// Creates the output directory and checks that it takes files.
    pub fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let probe = self.out.join(".write-check");
        std::fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
        std::fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))?;
        Ok(())
    }
}
