//! Stage execution: simulate → attractor → lyapunov → curves → verify.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::{with_dependencies, Config, Stage};
use super::manifest::{
    create_run_dir, Check, OutputSink, RunManifest, RunSummary, StageRecord, StageStatus, MANIFEST_SCHEMA,
};
use crate::attractor::{covering_number, fibre_cardinality, pullback_attractor, FibreCloud, PullbackConfig};
use crate::base::NoisePath;
use crate::cocycle::{self, advance_path, discrete_reduction, noise_path, CocycleSystem, CylinderState};
use crate::curves::{
    extract_curves, verify_period_shift_invariance, verify_random_periodicity, ExtractionConfig, PeriodicCurveSet,
};
use crate::error::{Error, Result};
use crate::lyapunov::{
    contraction_certificate, estimate_spectrum_ensemble, extremal_exponent, fit_adjusted_variable, geometric_grid,
    CertificateConfig,
};
use crate::models::{known_facts, KnownFacts};
use crate::sde::SdeSystem;

/// Per-invocation overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Replaces `run.stages`; dependencies are added.
    pub stages: Option<Vec<Stage>>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

struct Context {
    cfg: Config,
    sys: SdeSystem,
    facts: Option<KnownFacts>,
    sink: OutputSink,
    seeds: BTreeMap<String, Vec<u64>>,
    thresholds: BTreeMap<String, f64>,
    acceptance: BTreeMap<String, Check>,
    summary: RunSummary,
    cloud: Option<FibreCloud>,
    curves: Option<PeriodicCurveSet>,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn f64_cell(v: f64) -> String {
    format!("{v:.17e}")
}

impl Context {
    fn path(&self, seed: u64) -> NoisePath {
        noise_path(&self.sys, seed)
    }

    fn pullback_config(&self, horizon: u64) -> PullbackConfig {
        let a = &self.cfg.attractor;
        let mut p = PullbackConfig::new(
            a.box_lo.clone().unwrap_or_default(),
            a.box_hi.clone().unwrap_or_default(),
        );
        p.grid_per_axis = a.grid_per_axis;
        p.horizon = horizon;
        p.bins = a.bins;
        p.tol_k = a.tol_k;
        p
    }

    fn extraction_config(&self) -> ExtractionConfig {
        let c = &self.cfg.curves;
        ExtractionConfig {
            strips: c.strips,
            gap_threshold: c.gap_threshold.unwrap_or_default(),
            jump_threshold: c.jump_threshold,
            tol_match: c.tol_match,
            ambiguity_margin: c.ambiguity_margin,
        }
    }

    fn cloud(&self) -> Result<&FibreCloud> {
        self.cloud
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("attractor stage did not produce a cloud".into()))
    }

    fn simulate(&mut self) -> Result<()> {
        let s = &self.cfg.simulate;
        let z = CylinderState::new(s.s0, s.initial.clone().unwrap_or_default());
        let n = s.periods * self.sys.steps_per_period();
        let path = self.path(self.cfg.base.seed);
        let rows = cocycle::trajectory(&self.sys, n, &path, &z, s.record_every)?;
        let schema = "cylinder-rds/trajectory/v1";
        let mut buf = Vec::new();
        for line in self.sink.csv_header(schema) {
            buf.extend_from_slice(format!("# {line}\n").as_bytes());
        }
        cocycle::write_trajectory_csv(&mut buf, &rows).map_err(|e| Error::Io(e.to_string()))?;
        self.sink.write_bytes("trajectory.csv", schema, &buf)
    }

    fn attractor(&mut self) -> Result<()> {
        let path = self.path(self.cfg.base.seed);
        let cloud = pullback_attractor(&self.sys, &path, &self.pullback_config(self.cfg.attractor.horizon))?;
        let gap = self.cfg.curves.gap_threshold.unwrap_or_default();
        let eps = self.cfg.attractor.covering_eps.unwrap_or(gap / 2.0);
        let covering = covering_number(&cloud, eps)?;
        let cardinality = if cloud.accepted {
            fibre_cardinality(&cloud, gap).ok()
        } else {
            None
        };
        self.acceptance.insert(
            "attractor.converged".into(),
            check(
                cloud.accepted,
                format!("gap {:.3e} vs tol_K {:.3e}", cloud.convergence_gap, cloud.tol_k),
            ),
        );
        if let (Some(f), Some(card)) = (self.facts.as_ref().and_then(|f| f.fibre_count.as_ref()), &cardinality) {
            self.acceptance.insert(
                "attractor.fibre_count".into(),
                check(
                    card.n == f.value,
                    format!("{} points per fibre, expected {}", card.n, f.value),
                ),
            );
        }
        if let Some(f) = self.facts.as_ref().and_then(|f| f.analytic_curve) {
            let err = analytic_distance(&cloud, f);
            self.thresholds.insert("attractor.analytic_distance".into(), err);
        }
        self.summary.convergence_gap = Some(cloud.convergence_gap);

        let schema = "cylinder-rds/cloud/v1";
        let mut buf = Vec::new();
        for line in self.sink.csv_header(schema) {
            buf.extend_from_slice(format!("# {line}\n").as_bytes());
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut head = vec!["bin".to_string(), "s".to_string()];
            head.extend((1..=cloud.dim).map(|k| format!("x{k}")));
            w.write_record(&head).map_err(|e| Error::Io(e.to_string()))?;
            for (b, pts) in cloud.bins.iter().enumerate() {
                for p in pts {
                    let mut row = vec![b.to_string(), f64_cell(cloud.bin_phase(b))];
                    row.extend(p.iter().map(|v| f64_cell(*v)));
                    w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
                }
            }
            w.flush()?;
        }
        self.sink.write_bytes("cloud.csv", schema, &buf)?;

        #[derive(Serialize)]
        struct Report<'a> {
            horizon: u64,
            bins: usize,
            points: usize,
            convergence_gap: f64,
            tol_k: f64,
            accepted: bool,
            covering: &'a crate::attractor::CoveringProfile,
            cardinality: Option<&'a crate::attractor::FibreCardinality>,
        }
        self.sink.write_json(
            "attractor.json",
            "cylinder-rds/attractor/v1",
            &Report {
                horizon: cloud.horizon,
                bins: cloud.bin_count(),
                points: cloud.len(),
                convergence_gap: cloud.convergence_gap,
                tol_k: cloud.tol_k,
                accepted: cloud.accepted,
                covering: &covering,
                cardinality: cardinality.as_ref(),
            },
        )?;
        self.cloud = Some(cloud);
        Ok(())
    }

    fn lyapunov(&mut self) -> Result<()> {
        let l = self.cfg.lyapunov.clone();
        let seeds: Vec<u64> = (0..l.paths as u64).map(|i| self.cfg.base.seed + 1000 + i).collect();
        let paths: Vec<NoisePath> = seeds.iter().map(|s| self.path(*s)).collect();
        let z = CylinderState::new(0.0, l.initial.clone().unwrap_or_default());
        let n_steps = l.periods * self.sys.steps_per_period();
        let spectrum = estimate_spectrum_ensemble(&self.sys, &paths, &z, n_steps, l.qr_stride)?;
        self.seeds.insert("lyapunov_paths".into(), seeds);
        self.summary.top_exponent = Some(spectrum.top());
        self.summary.top_exponent_std_err = Some(spectrum.std_err[0]);
        if let Some(f) = self.facts.as_ref().and_then(|f| f.top_exponent.as_ref()) {
            let tol = l.known_tolerance.max(3.0 * spectrum.std_err[0]);
            let err = (spectrum.top() - f.value).abs();
            self.acceptance.insert(
                "lyapunov.top_exponent".into(),
                check(
                    err <= tol,
                    format!("{:.5} vs known {} (tolerance {tol:.3e})", spectrum.top(), f.value),
                ),
            );
        }

        // One cloud per path; the first is the attractor stage's cloud.
        let main = self.cloud()?.clone();
        let mut clouds = vec![main.clone()];
        let mut cloud_seeds = vec![self.cfg.base.seed];
        for i in 1..l.cloud_paths as u64 {
            let seed = self.cfg.base.seed + 2000 + i;
            cloud_seeds.push(seed);
            clouds.push(pullback_attractor(
                &self.sys,
                &self.path(seed),
                &self.pullback_config(self.cfg.attractor.horizon),
            )?);
        }
        self.seeds.insert("cloud_paths".into(), cloud_seeds);
        let grid = geometric_grid(l.n_grid_lo, l.n_grid_hi);
        let extremal = extremal_exponent(&self.sys, &clouds, &grid, l.points_per_path)?;
        self.summary.extremal_exponent = Some(extremal.value);
        let mut semi = fit_adjusted_variable(&extremal.records, l.lambda_prime)?;
        if let Some(lambda) = l.lambda {
            semi = semi.with_rate_bound(&extremal.records, lambda);
        }
        self.acceptance.insert(
            "lyapunov.semiuniform".into(),
            check(
                semi.passed(),
                std::iter::once(format!(
                    "{} violations with λ' = {}",
                    semi.violations.len(),
                    l.lambda_prime
                ))
                .chain(semi.notes.iter().filter(|n| n.contains("vacuous")).cloned())
                .collect::<Vec<_>>()
                .join("; "),
            ),
        );
        let certificate = if l.certificate.enabled {
            let c = &l.certificate;
            let cfg = CertificateConfig {
                radius: c.radius,
                c: c.c,
                delta: c.delta,
                k_max: c.k_max,
                samples_per_bin: c.samples_per_bin,
                bin_stride: c.bin_stride,
                seed: self.cfg.base.seed,
            };
            let rep = contraction_certificate(&self.sys, &main, &cfg)?;
            self.acceptance.insert(
                "lyapunov.contraction_certificate".into(),
                check(
                    rep.pass,
                    format!("worst margin {:.3e} at k = {}", rep.worst_margin, rep.worst_k),
                ),
            );
            Some(rep)
        } else {
            None
        };

        #[derive(Serialize)]
        struct Report<'a> {
            spectrum: &'a crate::lyapunov::LyapunovEstimate,
            extremal: &'a crate::lyapunov::ExtremalReport,
            semiuniform: &'a crate::lyapunov::SemiuniformReport,
            certificate: Option<&'a crate::lyapunov::CertificateReport>,
        }
        self.sink.write_json(
            "lyapunov.json",
            "cylinder-rds/lyapunov/v1",
            &Report {
                spectrum: &spectrum,
                extremal: &extremal,
                semiuniform: &semi,
                certificate: certificate.as_ref(),
            },
        )
    }

    fn curves(&mut self) -> Result<()> {
        let cloud = self.cloud()?;
        let set = extract_curves(cloud, &self.extraction_config())?;
        let recon = set.reconstruction_residual(cloud);
        let tol_k = cloud.tol_k;
        let th = set.thresholds;
        self.thresholds
            .insert("curves.jump_threshold".into(), th.jump_threshold);
        self.thresholds.insert("curves.tol_match".into(), th.tol_match);
        self.thresholds
            .insert("curves.ambiguity_margin".into(), th.ambiguity_margin);
        self.acceptance.insert(
            "curves.reconstruction".into(),
            check(
                recon <= 2.0 * tol_k,
                format!("Hausdorff {recon:.3e} vs 2·tol_K {:.3e}", 2.0 * tol_k),
            ),
        );
        let total: u32 = set.periods().iter().sum();
        self.acceptance.insert(
            "curves.winding_conservation".into(),
            check(
                total as usize == set.labels,
                format!("Στ = {total}, labels = {}", set.labels),
            ),
        );
        if let Some(f) = self.facts.as_ref().and_then(|f| f.curves.as_ref()) {
            let mut got = set.periods();
            got.sort_unstable();
            let mut want = f.value.windings.clone();
            want.sort_unstable();
            self.acceptance.insert(
                "curves.known_periods".into(),
                check(
                    set.n() == f.value.count && got == want,
                    format!(
                        "n = {}, τ = {got:?}; expected n = {}, τ = {want:?}",
                        set.n(),
                        f.value.count
                    ),
                ),
            );
        }
        self.summary.n = Some(set.n());
        self.summary.periods = Some(set.periods());
        self.summary.permutation = Some(set.permutation.to_string());

        let schema = "cylinder-rds/curves/v1";
        let mut buf = Vec::new();
        set.write_csv(&mut buf, &self.sink.csv_header(schema))?;
        self.sink.write_bytes("curves.csv", schema, &buf)?;
        #[derive(Serialize)]
        struct Report<'a> {
            n: usize,
            periods: Vec<u32>,
            permutation: String,
            labels: usize,
            reconstruction_residual: f64,
            thresholds: &'a crate::curves::ResolvedThresholds,
            continuity: Vec<f64>,
        }
        self.sink.write_json(
            "curves.json",
            "cylinder-rds/curves-report/v1",
            &Report {
                n: set.n(),
                periods: set.periods(),
                permutation: set.permutation.to_string(),
                labels: set.labels,
                reconstruction_residual: recon,
                thresholds: &th,
                continuity: set.curves.iter().map(|c| c.continuity).collect(),
            },
        )?;
        self.curves = Some(set);
        Ok(())
    }

    fn verify(&mut self) -> Result<()> {
        let v = self.cfg.verify.clone();
        let now = self
            .curves
            .clone()
            .ok_or_else(|| Error::InvalidArgument("curves stage did not produce curves".into()))?;
        let hat = discrete_reduction(&self.sys);
        let path = self.path(self.cfg.base.seed);
        let prev_path = advance_path(&hat, &path, -(v.k as i64));
        let prev_horizon = v.prev_horizon.unwrap_or(self.cfg.attractor.horizon);
        let prev_cloud = pullback_attractor(&self.sys, &prev_path, &self.pullback_config(prev_horizon))?;
        let ecfg = self.extraction_config();
        let prev = extract_curves(&prev_cloud, &ecfg)?;
        let periodicity = verify_random_periodicity(&self.sys, &now, &prev, v.k, v.tol_period)?;
        self.acceptance.insert(
            "verify.random_periodicity".into(),
            check(
                periodicity.pass,
                format!(
                    "residuals {:?} vs tol {:.3e}",
                    periodicity.residuals, periodicity.tol_period
                ),
            ),
        );

        #[derive(Serialize)]
        struct ShiftRecord {
            shift: u64,
            n: usize,
            periods: Vec<u32>,
            equal: bool,
        }
        let mut shifts = Vec::new();
        for j in 1..=v.shifts {
            let p = advance_path(&hat, &path, -(j as i64));
            let cloud = pullback_attractor(&self.sys, &p, &self.pullback_config(self.cfg.attractor.horizon))?;
            let set = extract_curves(&cloud, &ecfg)?;
            let rep = verify_period_shift_invariance(&now, &set);
            shifts.push(ShiftRecord {
                shift: j,
                n: set.n(),
                equal: rep.equal && set.n() == now.n(),
                periods: rep.periods_shifted,
            });
        }
        let mismatches = shifts.iter().filter(|s| !s.equal).count();
        self.acceptance.insert(
            "verify.shift_invariance".into(),
            check(
                mismatches == 0,
                format!("{mismatches} mismatches over {} shifts", shifts.len()),
            ),
        );

        #[derive(Serialize)]
        struct Report<'a> {
            n: usize,
            periods: Vec<u32>,
            residuals: &'a [f64],
            pass: bool,
            k: u64,
            tol_period: f64,
            s_return_error: f64,
            prev_horizon: u64,
            shifts: Vec<ShiftRecord>,
        }
        self.sink.write_json(
            "verify.json",
            "cylinder-rds/verify/v1",
            &Report {
                n: periodicity.n,
                periods: periodicity.periods.clone(),
                residuals: &periodicity.residuals,
                pass: periodicity.pass && mismatches == 0,
                k: v.k,
                tol_period: periodicity.tol_period,
                s_return_error: periodicity.s_return_error,
                prev_horizon,
                shifts,
            },
        )
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Simulate => self.simulate(),
            Stage::Attractor => self.attractor(),
            Stage::Lyapunov => self.lyapunov(),
            Stage::Curves => self.curves(),
            Stage::Verify => self.verify(),
        }
    }
}

/// Largest distance from a cloud point to the nearest of `±curve(s)`.
fn analytic_distance(cloud: &FibreCloud, curve: fn(f64) -> Vec<f64>) -> f64 {
    (0..cloud.bin_count())
        .map(|b| {
            let c = curve(cloud.bin_phase(b));
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            cloud.bins[b]
                .iter()
                .map(|p| crate::linalg::dist(p, &c).min(crate::linalg::dist(p, &neg)))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Runs the configured stages into a fresh run directory. Stage failures are
/// recorded in the manifest and stop downstream stages; only configuration
/// and run-directory errors are returned as `Err`.
pub fn run_pipeline(cfg: &Config, opts: &RunOptions) -> Result<RunManifest> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.base.seed = seed;
    }
    if let Some(stages) = &opts.stages {
        cfg.run.stages = stages.clone();
    }
    if let Some(out) = &opts.out_dir {
        cfg.run.out_dir = out.to_string_lossy().into_owned();
    }
    let cfg = cfg.resolved()?;
    // The output root is not part of the numerical identity of a run.
    let mut identity = cfg.clone();
    identity.run.out_dir = String::new();
    let config_hash = identity.hash();
    let started_unix = unix_now();
    let dir = create_run_dir(Path::new(&cfg.run.out_dir), &cfg.run.name, &config_hash)?;
    let sys = cfg.build_system()?;
    let facts = known_facts(&cfg.model.name, &cfg.model.params);
    let stages = with_dependencies(&cfg.run.stages);
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut ctx = Context {
        sys,
        facts,
        sink: OutputSink::new(dir.clone(), config_hash.clone()),
        seeds: BTreeMap::from([("base".to_string(), vec![cfg.base.seed])]),
        thresholds: BTreeMap::new(),
        acceptance: BTreeMap::new(),
        summary: RunSummary::default(),
        cloud: None,
        curves: None,
        cfg: cfg.clone(),
    };
    let mut records = Vec::new();
    let mut halted = false;
    for stage in stages {
        if halted {
            records.push(StageRecord {
                name: stage.name().into(),
                status: StageStatus::Skipped,
                error: None,
                seconds: 0.0,
            });
            continue;
        }
        let t = Instant::now();
        let res = ctx.run_stage(stage);
        let seconds = t.elapsed().as_secs_f64();
        let (status, error) = match res {
            Ok(()) => (StageStatus::Ok, None),
            Err(e) => {
                halted = true;
                (StageStatus::Failed, Some(e.to_string()))
            }
        };
        records.push(StageRecord {
            name: stage.name().into(),
            status,
            error,
            seconds,
        });
    }
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::to_value(&cfg).expect("config serializes"),
        config_hash,
        seeds: ctx.seeds,
        derived_thresholds: ctx.thresholds,
        started_unix,
        finished_unix: unix_now(),
        run_dir: dir.to_string_lossy().into_owned(),
        stages: records,
        outputs: ctx.sink.records,
        acceptance: ctx.acceptance,
        summary: ctx.summary,
    };
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Result of re-running a manifest's configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub original: String,
    pub replay: String,
    pub identical: bool,
    pub mismatched: Vec<String>,
}

/// Re-runs the configuration stored in a manifest and compares every output hash.
pub fn replay(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<(RunManifest, ReplayReport)> {
    let cfg: Config = serde_json::from_value(manifest.config.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let opts = RunOptions {
        out_dir: out_dir.map(Path::to_path_buf),
        ..RunOptions::default()
    };
    let again = run_pipeline(&cfg, &opts)?;
    let diff = super::manifest::compare_runs(manifest, &again);
    let mismatched = match diff {
        Ok(d) => d.outputs,
        Err(e) => vec![e.to_string()],
    };
    let report = ReplayReport {
        original: manifest.run_dir.clone(),
        replay: again.run_dir.clone(),
        identical: mismatched.is_empty() && manifest.outputs.len() == again.outputs.len(),
        mismatched,
    };
    Ok((again, report))
}
