//! Experiment configuration: a `[section]` / `key = value` file with environment overrides.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use d2d_effcap::channel::{dbm_to_watts, pathloss_db};
use d2d_effcap::optimizer::{GdConfig, GradientMode};
use d2d_effcap::{
    defaults, Duplex, LinkBudget, Model, OutageMode, Prior, Scenario, Schedule, Selection, SiLaw, SirModel,
    SystemParams, ThresholdRule,
};

/// Prefix of environment overrides, `D2D_EFFCAP_<SECTION>_<KEY>=<value>`.
pub const ENV_PREFIX: &str = "D2D_EFFCAP_";

const SECTIONS: [&str; 6] = ["system", "geometry", "modeselect", "harq", "sweep", "montecarlo"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiLawKey {
    Quality,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplexKey {
    Full,
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageKey {
    Exact,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SirKey {
    InterferenceLimited,
    WithNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKey {
    Underlay,
    Overlay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKey {
    Midpoint,
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKey {
    TrueBest,
    Uniform,
    PaperLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GdModeKey {
    Numeric,
    AnalyticFrozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    R,
    Theta,
    Sigma,
    Beta,
    L,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::R => "r",
            SweepVar::Theta => "theta",
            SweepVar::Sigma => "sigma",
            SweepVar::Beta => "beta",
            SweepVar::L => "l",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub bandwidth: f64,
    pub noise_dbm: f64,
    pub p_dt_dbm: f64,
    pub p_micro_dbm: f64,
    pub p_macro_dbm: f64,
    pub p_ut_dbm: f64,
    pub si_alpha: f64,
    pub si_beta: f64,
    pub si_law: SiLawKey,
    pub block_len: u32,
    pub rate: f64,
    pub theta: f64,
    pub max_tx: usize,
    pub duplex: DuplexKey,
    pub outage_mode: OutageKey,
    pub sir_model: SirKey,
    pub schedule_first: ScenarioKey,
    pub schedule_rest: ScenarioKey,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = defaults::params::<f64>();
        SystemSection {
            bandwidth: p.bandwidth,
            noise_dbm: defaults::NOISE_DBM,
            p_dt_dbm: defaults::P_DT_DBM,
            p_micro_dbm: defaults::P_MICRO_DBM,
            p_macro_dbm: defaults::P_MACRO_DBM,
            p_ut_dbm: defaults::P_UT_DBM,
            si_alpha: p.si_alpha,
            si_beta: p.si_beta,
            si_law: SiLawKey::Quality,
            block_len: p.block_len,
            rate: p.rate,
            theta: p.theta,
            max_tx: p.max_tx,
            duplex: DuplexKey::Full,
            outage_mode: OutageKey::Exact,
            sir_model: SirKey::InterferenceLimited,
            schedule_first: ScenarioKey::Underlay,
            schedule_rest: ScenarioKey::Overlay,
        }
    }
}

/// Pathloss of every link, either in dB or as a distance in km.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_d_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_d_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_micro_ul_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_micro_ul_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_micro_dl_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_micro_dl_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_macro_ul_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_macro_ul_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_macro_dl_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_macro_dl_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_dr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_dr_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_micro_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_micro_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_macro_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ut_macro_km: Option<f64>,
}

const LINKS: [&str; 8] =
    ["l_d", "l_micro_ul", "l_micro_dl", "l_macro_ul", "l_macro_dl", "l_ut_dr", "l_ut_micro", "l_ut_macro"];

impl GeometrySection {
    fn pairs(&mut self) -> [(&mut Option<f64>, &mut Option<f64>); 8] {
        [
            (&mut self.l_d_db, &mut self.l_d_km),
            (&mut self.l_micro_ul_db, &mut self.l_micro_ul_km),
            (&mut self.l_micro_dl_db, &mut self.l_micro_dl_km),
            (&mut self.l_macro_ul_db, &mut self.l_macro_ul_km),
            (&mut self.l_macro_dl_db, &mut self.l_macro_dl_km),
            (&mut self.l_ut_dr_db, &mut self.l_ut_dr_km),
            (&mut self.l_ut_micro_db, &mut self.l_ut_micro_km),
            (&mut self.l_ut_macro_db, &mut self.l_ut_macro_km),
        ]
    }

    /// Replace distances and gaps by dB values.
    fn resolve(&mut self) -> Result<()> {
        for ((db, km), (name, default)) in self.pairs().into_iter().zip(LINKS.iter().zip(defaults::LOSSES_DB)) {
            *db = match (*db, *km) {
                (Some(_), Some(_)) => bail!("[geometry] sets both {name}_db and {name}_km"),
                (Some(v), None) => Some(v),
                (None, Some(d)) => Some(pathloss_db(d).map_err(|e| anyhow!("[geometry] {name}_km: {e}"))?),
                (None, None) => Some(default),
            };
            *km = None;
        }
        Ok(())
    }

    pub fn losses_db(&self) -> [f64; 8] {
        let mut g = self.clone();
        g.pairs().map(|(db, _)| db.expect("geometry not resolved"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeselectSection {
    pub sigma: f64,
    pub thresholds: RuleKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_ab: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bc: Option<f64>,
    pub prior: PriorKey,
    pub mc_trials: usize,
}

impl Default for ModeselectSection {
    fn default() -> Self {
        ModeselectSection {
            sigma: 1.0,
            thresholds: RuleKey::Midpoint,
            c_ab: None,
            c_bc: None,
            prior: PriorKey::TrueBest,
            mc_trials: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarqSection {
    pub zeta_samples: usize,
    pub gd_mode: GdModeKey,
    pub gd_step: f64,
    pub gd_max_iters: usize,
    pub gd_grad_tol: f64,
    pub gd_r_init: f64,
    pub gd_fd_step: f64,
    pub gd_r_min: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_steps: usize,
    /// Replace the EC objective by `-(r - c)^2` (test hook).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy_optimum: Option<f64>,
}

impl Default for HarqSection {
    fn default() -> Self {
        HarqSection {
            zeta_samples: defaults::ZETA_SAMPLES,
            gd_mode: GdModeKey::Numeric,
            gd_step: 0.01,
            gd_max_iters: 200,
            gd_grad_tol: 0.05,
            gd_r_init: 1.0,
            gd_fd_step: 1e-3,
            gd_r_min: 0.05,
            grid_lo: 0.05,
            grid_hi: 8.0,
            grid_steps: 200,
            toy_optimum: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub variable: SweepVar,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub spacing: Spacing,
    /// Paths and blocks of the per-point simulation behind the CI columns; 0 disables it.
    pub mc_paths: usize,
    pub mc_blocks: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            variable: SweepVar::R,
            lo: 0.05,
            hi: 8.0,
            steps: 60,
            spacing: Spacing::Linear,
            mc_paths: 1000,
            mc_blocks: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MontecarloSection {
    pub num_paths: usize,
    pub num_blocks: usize,
    pub arrival_rate: f64,
    pub seed: u64,
}

impl Default for MontecarloSection {
    fn default() -> Self {
        MontecarloSection { num_paths: 10_000, num_blocks: 1000, arrival_rate: 0.0, seed: defaults::SEED }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub geometry: GeometrySection,
    pub modeselect: ModeselectSection,
    pub harq: HarqSection,
    pub sweep: SweepSection,
    pub montecarlo: MontecarloSection,
}

/// Parse a TOML scalar, falling back to a bare string.
fn env_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_env<I>(table: &mut toml::Table, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (k, v) in vars {
        let rest = k[ENV_PREFIX.len()..].to_ascii_lowercase();
        let (section, key) = rest.split_once('_').ok_or_else(|| anyhow!("malformed override {k}"))?;
        if !SECTIONS.contains(&section) {
            bail!("override {k}: unknown section [{section}]");
        }
        let sec = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("[{section}] is not a section"))?;
        sec.insert(key.to_string(), env_value(&v));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parse `text`, apply overrides from `env`, fill defaults and resolve geometry.
    pub fn parse<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| anyhow!("config parse error: {e}"))?;
        apply_env(&mut table, env)?;
        let mut cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e| anyhow!("config error: {e}"))?;
        cfg.geometry.resolve()?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, std::env::vars()).with_context(|| format!("in {}", path.display()))
    }

    fn check(&self) -> Result<()> {
        let m = &self.modeselect;
        if m.thresholds == RuleKey::Explicit && (m.c_ab.is_none() || m.c_bc.is_none()) {
            bail!("[modeselect] thresholds = \"explicit\" needs c_ab and c_bc");
        }
        if m.thresholds == RuleKey::Midpoint && (m.c_ab.is_some() || m.c_bc.is_some()) {
            bail!("[modeselect] c_ab / c_bc are only used with thresholds = \"explicit\"");
        }
        if self.sweep.steps == 0 {
            bail!("[sweep] empty grid");
        }
        if !(self.sweep.lo <= self.sweep.hi) {
            bail!("[sweep] needs lo <= hi");
        }
        if self.sweep.spacing == Spacing::Log && !(self.sweep.lo > 0.0) {
            bail!("[sweep] log spacing needs lo > 0");
        }
        self.model()?.params.validate()?;
        self.model()?.budget.validate()?;
        self.gd().validate()?;
        Ok(())
    }

    /// The resolved configuration as it is echoed into output headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> SystemParams<f64> {
        let s = &self.system;
        SystemParams {
            bandwidth: s.bandwidth,
            noise: dbm_to_watts(s.noise_dbm),
            p_dt: dbm_to_watts(s.p_dt_dbm),
            p_micro: dbm_to_watts(s.p_micro_dbm),
            p_macro: dbm_to_watts(s.p_macro_dbm),
            p_ut: dbm_to_watts(s.p_ut_dbm),
            si_alpha: s.si_alpha,
            si_beta: s.si_beta,
            si_law: match s.si_law {
                SiLawKey::Quality => SiLaw::Quality,
                SiLawKey::Literal => SiLaw::Literal,
            },
            block_len: s.block_len,
            rate: s.rate,
            theta: s.theta,
            max_tx: s.max_tx,
            duplex: match s.duplex {
                DuplexKey::Full => Duplex::Full,
                DuplexKey::Half => Duplex::Half,
            },
        }
    }

    pub fn rule(&self) -> ThresholdRule<f64> {
        match self.modeselect.thresholds {
            RuleKey::Midpoint => ThresholdRule::Midpoint,
            RuleKey::Explicit => ThresholdRule::Explicit(
                self.modeselect.c_ab.unwrap_or(f64::NAN),
                self.modeselect.c_bc.unwrap_or(f64::NAN),
            ),
        }
    }

    pub fn prior(&self) -> Prior {
        match self.modeselect.prior {
            PriorKey::TrueBest => Prior::TrueBest,
            PriorKey::Uniform => Prior::Uniform,
            PriorKey::PaperLiteral => Prior::PaperLiteral,
        }
    }

    pub fn model(&self) -> Result<Model<f64>> {
        let sc = |k: ScenarioKey| match k {
            ScenarioKey::Underlay => Scenario::Underlay,
            ScenarioKey::Overlay => Scenario::Overlay,
        };
        Ok(Model {
            params: self.params(),
            budget: LinkBudget::from_db(self.geometry.losses_db()),
            selection: Selection { sigma: self.modeselect.sigma, rule: self.rule(), prior: self.prior() },
            outage_mode: match self.system.outage_mode {
                OutageKey::Exact => OutageMode::Exact,
                OutageKey::Paper => OutageMode::Paper,
            },
            sir_model: match self.system.sir_model {
                SirKey::InterferenceLimited => SirModel::InterferenceLimited,
                SirKey::WithNoise => SirModel::WithNoise,
            },
            schedule: Schedule { first: sc(self.system.schedule_first), rest: sc(self.system.schedule_rest) },
            zeta_samples: self.harq.zeta_samples,
            seed: self.montecarlo.seed,
        })
    }

    pub fn gd(&self) -> GdConfig<f64> {
        let h = &self.harq;
        GdConfig {
            step: h.gd_step,
            max_iters: h.gd_max_iters,
            grad_tol: h.gd_grad_tol,
            r_init: h.gd_r_init,
            mode: match h.gd_mode {
                GdModeKey::Numeric => GradientMode::Numeric,
                GdModeKey::AnalyticFrozen => GradientMode::AnalyticFrozen,
            },
            fd_step: h.gd_fd_step,
            r_min: h.gd_r_min,
        }
    }
}
