//! Run configuration: a versioned JSON document with one block per stage.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use chronoflow::factorization::DEFAULT_RHO_FLOOR;
use chronoflow::hydro::{Form, Region};
use chronoflow::model::ModelParams;
use chronoflow::trajectories::{IntegrationSettings, TrajectoryMode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Potential parameters and both coordinate grids.
    pub model: ModelParams,
    pub propagation: PropagationConfig,
    pub factorization: FactorizationConfig,
    pub residuals: ResidualConfig,
    pub trajectories: TrajectoryConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelParams::default(),
            propagation: PropagationConfig::default(),
            factorization: FactorizationConfig::default(),
            residuals: ResidualConfig::default(),
            trajectories: TrajectoryConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// Time step; derived from the populated kinetic band when absent.
    pub dt: Option<f64>,
    /// Cap on the derived time step.
    pub dt_max: f64,
    /// Spectral population below this fraction is ignored when deriving `dt`.
    pub band_threshold: f64,
    pub snapshot_stride: usize,
    /// Fixed step count. When absent the run stops on `stop_marginal_peak_below`
    /// or `t_max`.
    pub n_steps: Option<usize>,
    pub stop_marginal_peak_below: f64,
    pub t_max: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt: None,
            dt_max: 0.1,
            band_threshold: 1e-10,
            snapshot_stride: 50,
            n_steps: None,
            stop_marginal_peak_below: -2.0,
            t_max: 3000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationConfig {
    /// Marginal density below which `φ` is left undefined.
    pub rho_floor: f64,
    /// `|χ|²` above which a clock point enters the adiabaticity report.
    pub report_threshold: f64,
    /// `|χ|²` below which conditional panels are left blank.
    pub display_threshold: f64,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        FactorizationConfig { rho_floor: DEFAULT_RHO_FLOOR, report_threshold: 1e-8, display_threshold: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    /// Any of `cdse`, `cdhje`, `cdce`, `cdce_flux`, `tdhje`, `tdce`, `tdce1`.
    pub equations: Vec<String>,
    /// `clock` or `time_clock` for the clock-dependent equations.
    pub form: Form,
    /// Evaluate at every n-th snapshot (the last snapshot is always included).
    pub every: usize,
    pub region: Region,
    /// Grid scale factors for a refinement study at `refinement_times`; empty
    /// to skip. Each factor multiplies both node counts.
    pub refinements: Vec<f64>,
    pub refinement_times: Vec<f64>,
    /// Time step of the refinement runs, shared by all levels; defaults to the
    /// run's `dt` divided by the largest factor.
    pub refinement_dt: Option<f64>,
}

pub const EQUATIONS: [&str; 7] = ["cdse", "cdhje", "cdce", "cdce_flux", "tdhje", "tdce", "tdce1"];

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            equations: EQUATIONS.iter().map(|s| s.to_string()).collect(),
            form: Form::TimeClock,
            every: 10,
            region: Region::default(),
            refinements: Vec::new(),
            refinement_times: vec![300.0, 600.0],
            refinement_dt: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    /// Start points where the joint density exceeds a fraction of its maximum.
    Significant,
    /// Start points drawn from the joint density.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub clock_modes: Vec<TrajectoryMode>,
    pub clock_count: usize,
    pub seeding: Seeding,
    /// Density fraction for `significant` seeding.
    pub significance: f64,
    pub bohmian_count: usize,
    pub seed: u64,
    /// Coarse-graining block, in grid cells per side, of the Bohmian density check.
    pub l1_block: usize,
    /// Fraction of the conditional peak a clock trajectory must stay above to
    /// count as following `|φ|²`.
    pub follow_threshold: f64,
    pub integration: IntegrationSettings,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            clock_modes: vec![TrajectoryMode::ClockFull, TrajectoryMode::ClockSimplified],
            clock_count: 20,
            seeding: Seeding::Significant,
            significance: 0.1,
            bohmian_count: 1000,
            seed: 1,
            l1_block: 16,
            follow_threshold: 0.1,
            integration: IntegrationSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when no `--out` is given.
    pub dir: Option<PathBuf>,
    /// External times of the rendered snapshot panels; the nearest stored
    /// snapshot is used.
    pub render_times: Vec<f64>,
    /// Electron-coordinate window of the heatmaps; the full grid when absent.
    pub view_system: Option<[f64; 2]>,
    /// Number of Born-Oppenheimer surfaces to tabulate.
    pub bo_states: usize,
    /// Heatmap resolution cap per axis.
    pub max_pixels: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            render_times: vec![0.0, 400.0, 800.0, 1200.0],
            view_system: Some([-15.0, 15.0]),
            bo_states: 2,
            max_pixels: 192,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text, &[])
    }

    /// Parses `text` after applying `key=value` overrides to the JSON tree.
    pub fn from_json(text: &str, overrides: &[String]) -> anyhow::Result<Self> {
        let mut tree: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(tree).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default config with overrides applied.
    pub fn with_overrides(overrides: &[String]) -> anyhow::Result<Self> {
        let text = serde_json::to_string(&RunConfig::default())?;
        Self::from_json(&text, overrides)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        self.model.validate().context("model")?;
        let p = &self.propagation;
        if let Some(dt) = p.dt {
            ensure!(dt.is_finite() && dt > 0.0, "propagation.dt must be positive");
        }
        ensure!(p.dt_max > 0.0, "propagation.dt_max must be positive");
        ensure!(p.snapshot_stride > 0, "propagation.snapshot_stride must be positive");
        if let Some(n) = p.n_steps {
            ensure!(n % p.snapshot_stride == 0, "propagation.snapshot_stride must divide n_steps");
        } else {
            ensure!(p.t_max > 0.0, "propagation.t_max must be positive");
        }
        ensure!(self.factorization.rho_floor > 0.0, "factorization.rho_floor must be positive");
        let r = &self.residuals;
        for e in &r.equations {
            ensure!(EQUATIONS.contains(&e.as_str()), "unknown residual equation {e:?}");
        }
        if r.form == Form::Time {
            bail!("residuals.form must be clock or time_clock");
        }
        ensure!(r.every > 0, "residuals.every must be positive");
        ensure!(r.refinements.iter().all(|s| *s >= 1.0), "residuals.refinements must be >= 1");
        let t = &self.trajectories;
        t.integration.validate().context("trajectories.integration")?;
        ensure!(
            t.clock_modes.iter().all(|m| *m != TrajectoryMode::Bohmian),
            "trajectories.clock_modes takes clock_full or clock_simplified"
        );
        ensure!(t.significance > 0.0 && t.significance <= 1.0, "trajectories.significance must lie in (0, 1]");
        ensure!(t.l1_block > 0, "trajectories.l1_block must be positive");
        if let Some([a, b]) = self.output.view_system {
            ensure!(a < b, "output.view_system must be increasing");
        }
        ensure!(self.output.max_pixels >= 8, "output.max_pixels must be at least 8");
        ensure!(self.output.bo_states >= 2, "output.bo_states must be at least 2");
        Ok(())
    }
}

/// Sets the value at a dotted path. The value is parsed as JSON and taken as a
/// plain string when that fails.
pub fn apply_override(tree: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec.split_once('=').with_context(|| format!("override {spec:?} is not key=value"))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let i: usize = part.parse().with_context(|| format!("{key}: {part:?} is not an index"))?;
                let len = items.len();
                let slot = items.get_mut(i).with_context(|| format!("{key}: index {i} out of {len}"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => bail!("{key}: cannot descend into a scalar at {part:?}"),
        };
    }
    unreachable!("loop returns on the last component")
}
