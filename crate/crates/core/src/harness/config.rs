//! Run configuration: one TOML file, sections `run`, `base`, `model`,
//! `simulate`, `attractor`, `lyapunov`, `curves`, `verify`.
//!
//! Any key can be overridden from the environment as
//! `RDSP_<SECTION>__<KEY>=<toml value>`, e.g. `RDSP_BASE__SEED=7` or
//! `RDSP_LYAPUNOV__CERTIFICATE__RADIUS=0.05`. Values that do not parse as
//! TOML are taken as strings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::base::BaseFlow;
use crate::error::{Error, Result};
use crate::models::{self, Params, DEFAULT_STEPS_PER_PERIOD};
use crate::sde::{build_cocycle, Integrator, SdeSpec, SdeSystem};

pub const ENV_PREFIX: &str = "RDSP_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Attractor,
    Lyapunov,
    Curves,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Simulate,
        Stage::Attractor,
        Stage::Lyapunov,
        Stage::Curves,
        Stage::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Attractor => "attractor",
            Stage::Lyapunov => "lyapunov",
            Stage::Curves => "curves",
            Stage::Verify => "verify",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Simulate | Stage::Attractor => &[],
            Stage::Lyapunov | Stage::Curves => &[Stage::Attractor],
            Stage::Verify => &[Stage::Attractor, Stage::Curves],
        }
    }
}

/// Requested stages plus their dependencies, in execution order.
pub fn with_dependencies(stages: &[Stage]) -> Vec<Stage> {
    let mut all: Vec<Stage> = stages
        .iter()
        .flat_map(|s| s.dependencies().iter().copied().chain(std::iter::once(*s)))
        .collect();
    all.sort();
    all.dedup();
    all
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub stages: Vec<Stage>,
    pub out_dir: String,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "run".into(),
            stages: Stage::ALL.to_vec(),
            out_dir: "runs".into(),
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    pub seed: u64,
    /// Defaults to a Wiener shift of the model's noise dimension.
    pub flow: Option<BaseFlow>,
}

impl Default for BaseSection {
    fn default() -> Self {
        Self { seed: 1, flow: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// A registered field (`zero`, `linear`, `forced_linear`, ...) or a zoo
    /// entry such as `forced_linear_noisy`.
    pub name: String,
    pub integrator: Integrator,
    pub steps_per_period: u64,
    pub escape_radius: f64,
    pub params: Params,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "forced_linear".into(),
            integrator: Integrator::HeunStratonovich,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            escape_radius: 1e6,
            params: Params::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub s0: f64,
    pub initial: Option<Vec<f64>>,
    pub periods: u64,
    pub record_every: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            s0: 0.0,
            initial: None,
            periods: 20,
            record_every: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorSection {
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
    pub grid_per_axis: usize,
    pub horizon: u64,
    pub bins: usize,
    pub tol_k: Option<f64>,
    /// Ball radius for the covering profile; defaults to half the gap threshold.
    pub covering_eps: Option<f64>,
}

impl Default for AttractorSection {
    fn default() -> Self {
        Self {
            box_lo: None,
            box_hi: None,
            grid_per_axis: 8,
            horizon: 50,
            bins: 256,
            tol_k: None,
            covering_eps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSection {
    pub enabled: bool,
    pub radius: f64,
    pub c: f64,
    pub delta: f64,
    pub k_max: u64,
    pub samples_per_bin: usize,
    pub bin_stride: usize,
}

impl Default for CertificateSection {
    fn default() -> Self {
        Self {
            enabled: true,
            radius: 0.1,
            c: 2.0,
            delta: 0.9,
            k_max: 64,
            samples_per_bin: 10,
            bin_stride: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    /// Spectrum run length in periods.
    pub periods: u64,
    /// QR re-orthonormalization stride in steps.
    pub qr_stride: u64,
    pub paths: usize,
    pub initial: Option<Vec<f64>>,
    /// Independent pullback clouds for the extremal exponent.
    pub cloud_paths: usize,
    /// `Φ_n` grid `2^lo ..= 2^hi` periods.
    pub n_grid_lo: u32,
    pub n_grid_hi: u32,
    pub points_per_path: usize,
    pub lambda_prime: f64,
    pub lambda: Option<f64>,
    /// Agreement required with a model's known top exponent.
    pub known_tolerance: f64,
    pub certificate: CertificateSection,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self {
            periods: 200,
            qr_stride: 10,
            paths: 8,
            initial: None,
            cloud_paths: 2,
            n_grid_lo: 4,
            n_grid_hi: 8,
            points_per_path: 20,
            lambda_prime: -0.5,
            lambda: None,
            known_tolerance: 0.05,
            certificate: CertificateSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSection {
    pub strips: usize,
    /// Defaults to `10 · tol_K`.
    pub gap_threshold: Option<f64>,
    pub jump_threshold: Option<f64>,
    pub tol_match: Option<f64>,
    pub ambiguity_margin: Option<f64>,
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self {
            strips: 8,
            gap_threshold: None,
            jump_threshold: None,
            tol_match: None,
            ambiguity_margin: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Periods between the two base points.
    pub k: u64,
    /// Defaults to `5 · tol_K`.
    pub tol_period: Option<f64>,
    /// Pullback horizon at the earlier base point; defaults to 1.5× the attractor horizon.
    pub prev_horizon: Option<u64>,
    /// Base shifts checked for invariance of `n` and the periods.
    pub shifts: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            k: 1,
            tol_period: None,
            prev_horizon: None,
            shifts: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub base: BaseSection,
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub attractor: AttractorSection,
    pub lyapunov: LyapunovSection,
    pub curves: CurvesSection,
    pub verify: VerifySection,
}

/// Writes `value` at the dotted `path` of a TOML table, creating tables on the way.
fn insert_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path
        .split_last()
        .ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses non-table key `{p}`")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Parses TOML text, applies `RDSP_*` overrides from `env`, and validates.
    pub fn from_toml_str<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..]
                .split("__")
                .map(str::to_ascii_lowercase)
                .collect();
            insert_path(&mut table, &path, parse_env_value(&raw))?;
        }
        let cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.model.steps_per_period == 0 {
            return bad("model.steps_per_period: expected a positive integer".into());
        }
        if self.attractor.bins == 0 || self.attractor.grid_per_axis == 0 {
            return bad("attractor.bins and attractor.grid_per_axis: expected positive integers".into());
        }
        if self.attractor.horizon < 2 {
            return bad("attractor.horizon: expected at least 2 periods".into());
        }
        if self.curves.strips < 3 {
            return bad("curves.strips: expected at least 3".into());
        }
        if self.lyapunov.n_grid_lo > self.lyapunov.n_grid_hi || self.lyapunov.n_grid_hi > 20 {
            return bad("lyapunov.n_grid_lo/n_grid_hi: expected lo <= hi <= 20".into());
        }
        if self.lyapunov.paths == 0 || self.lyapunov.cloud_paths == 0 {
            return bad("lyapunov.paths and lyapunov.cloud_paths: expected positive integers".into());
        }
        if let (Some(lo), Some(hi)) = (&self.attractor.box_lo, &self.attractor.box_hi) {
            if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return bad("attractor.box_lo/box_hi: expected equal lengths with lo < hi".into());
            }
        }
        models::resolve_params_or_zoo(&self.model.name, &self.model.params)?;
        Ok(())
    }

    /// Builds the cocycle described by the `model` and `base` sections.
    pub fn build_system(&self) -> Result<SdeSystem> {
        let field = models::resolve_params_or_zoo(&self.model.name, &self.model.params)?;
        let mut spec = SdeSpec::new(field, self.model.integrator, self.model.steps_per_period);
        spec.escape_radius = self.model.escape_radius;
        let flow = self.base_flow(spec.field.noise_dim());
        build_cocycle(spec, &flow).map_err(|e| Error::Config(e.to_string()))
    }

    fn base_flow(&self, noise_dim: usize) -> BaseFlow {
        self.base.flow.clone().unwrap_or(BaseFlow::Wiener { dim: noise_dim })
    }

    /// Copy with every defaulted tolerance made explicit, for the manifest.
    pub fn resolved(&self) -> Result<Self> {
        let sys = self.build_system()?;
        let d = sys.field().dim();
        let mut c = self.clone();
        c.base.flow = Some(self.base_flow(sys.field().noise_dim()));
        let a = &mut c.attractor;
        a.box_lo.get_or_insert_with(|| vec![-2.0; d]);
        a.box_hi.get_or_insert_with(|| vec![2.0; d]);
        if a.box_lo.as_ref().map(Vec::len) != Some(d) || a.box_hi.as_ref().map(Vec::len) != Some(d) {
            return Err(Error::Config(format!("attractor.box_lo/box_hi: expected {d} entries")));
        }
        let diam = a
            .box_lo
            .iter()
            .flatten()
            .zip(a.box_hi.iter().flatten())
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt();
        let tol_k = *a.tol_k.get_or_insert(1e-3 * diam);
        let gap = *c.curves.gap_threshold.get_or_insert(10.0 * tol_k);
        c.attractor.covering_eps.get_or_insert(gap / 2.0);
        c.verify.tol_period.get_or_insert(5.0 * tol_k);
        c.verify
            .prev_horizon
            .get_or_insert(c.attractor.horizon + c.attractor.horizon / 2);
        c.simulate.initial.get_or_insert_with(|| vec![0.5; d]);
        c.lyapunov.initial.get_or_insert_with(|| vec![0.5; d]);
        Ok(c)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("", no_env()).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_toml_str("[attractor]\nhorizn = 3\n", no_env()).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("horizn")), "{err}");
    }

    #[test]
    fn wrong_type_is_reported() {
        let err = Config::from_toml_str("[attractor]\nbins = \"many\"\n", no_env()).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("bins")), "{err}");
    }

    #[test]
    fn env_overrides_apply() {
        let env = vec![
            ("RDSP_BASE__SEED".to_string(), "42".to_string()),
            ("RDSP_MODEL__NAME".to_string(), "double_well".to_string()),
            ("RDSP_LYAPUNOV__CERTIFICATE__RADIUS".to_string(), "0.25".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let c = Config::from_toml_str("[base]\nseed = 1\n", env).unwrap();
        assert_eq!(c.base.seed, 42);
        assert_eq!(c.model.name, "double_well");
        assert_eq!(c.lyapunov.certificate.radius, 0.25);
    }

    #[test]
    fn unknown_model_is_a_config_error() {
        let err = Config::from_toml_str("[model]\nname = \"nope\"\n", no_env()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn resolution_fills_every_tolerance() {
        let c = Config::default().resolved().unwrap();
        assert_eq!(c.attractor.box_lo, Some(vec![-2.0]));
        assert_eq!(c.attractor.tol_k, Some(4e-3));
        assert_eq!(c.curves.gap_threshold, Some(4e-2));
        assert_eq!(c.verify.tol_period, Some(2e-2));
        assert_eq!(c.verify.prev_horizon, Some(75));
        assert_eq!(c.resolved().unwrap(), c);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.base.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default().resolved().unwrap();
        assert_eq!(Config::from_toml_str(&c.to_toml(), no_env()).unwrap(), c);
    }

    #[test]
    fn dependencies_are_added_in_order() {
        assert_eq!(
            with_dependencies(&[Stage::Verify]),
            vec![Stage::Attractor, Stage::Curves, Stage::Verify]
        );
        assert_eq!(with_dependencies(&[Stage::Simulate]), vec![Stage::Simulate]);
    }
}
