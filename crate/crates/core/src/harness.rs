//! Scenario files, runs and manifests.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "lemma41_n2"
//! model = "sl"                 # sl | wl | kuramoto
//! seed = 7                     # required by the `random` preset
//!
//! [grid]
//! points = [256]
//! extent = [32.0]
//! momentum_points = [256]      # wl only, defaults to the x points
//!
//! [dynamics]
//! N = 2
//! K = 1.0
//! T = 10.0
//! dt = 1e-3
//! sample_every = 10
//! snapshot_every = 100
//! renormalize = false
//!
//! [potential]
//! kind = "harmonic"            # zero | constant | harmonic | file
//! omega = 1.0
//!
//! [initial]
//! preset = "overlap"           # gaussian_offsets | overlap | homogeneous | random
//! ...
//!
//! [checks]
//! closed_form = 1e-6           # tolerance, or `true` for the default
//! correlation_decay = true
//! ```
//!
//! A run writes `<out>/<name>-<hash>/` containing `config.snapshot`,
//! `observables.csv`, `fields/` and `report.json`. Everything is first
//! written to a scratch directory which is renamed into place at the end.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corr::{
    check_correlation_decay, check_diameter_bound, correlation_reports, pairs, z12_closed_form,
    SyncReport, SyncStatus,
};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::fit::fit_rate;
use crate::grid::{PhaseGrid, SpatialGrid};
use crate::hydro::{
    continuity_residuals_of, h1_sync_check_of, hydro_series, momentum_residuals_of,
    polar_identity_defects, Residuals, CONTINUITY_NAMES, MOMENTUM_MASK, MOMENTUM_NAMES, VACUUM_EPS,
};
use crate::kuramoto::{
    evolve_kuramoto, pair_difference_exact, reduce_homogeneous, unwrap, KuramotoState,
    KuramotoTrajectory,
};
use crate::potential::Potential;
use crate::presets::{
    gaussian, gaussian_offsets, homogeneous, random, with_overlap, GaussianOffsets,
};
use crate::sl::{evolve_partial, EvolveOptions, SLTrajectory};
use crate::snapshot::Snapshot;
use crate::state::EnsembleState;
use crate::wigner::{
    evolve_wl_partial, wigner_transform, WignerLoheState, WlOptions, WlTrajectory,
};
use crate::C64;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default tolerances, by check name.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("norm_drift", 1e-7),
    ("closed_form", 1e-6),
    ("kuramoto_reduction", 1e-6),
    ("pair_exact", 1e-8),
    ("continuity", 1e-4),
    ("momentum", 1e-2),
    ("polar_identity", 1e-8),
    ("flux_identity", 1e-10),
    ("mass_balance", 1e-7),
    ("wl_mass", 1e-4),
    ("moyal_rate", 0.02),
    ("pipeline", 1e-4),
];

pub fn default_tolerance(check: &str) -> Option<f64> {
    DEFAULT_TOLERANCES
        .iter()
        .find(|(n, _)| *n == check)
        .map(|(_, t)| *t)
}

const SL_CHECKS: &[&str] = &[
    "norm_drift",
    "closed_form",
    "correlation_decay",
    "diameter_bound",
    "kuramoto_reduction",
    "hydro",
    "h1_sync",
];
const WL_CHECKS: &[&str] = &[
    "wl_mass",
    "moyal_rate",
    "distance_decay",
    "correlation_decay",
    "pipeline",
];
const KURAMOTO_CHECKS: &[&str] = &["pair_exact", "phase_sync"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Sl,
    Wl,
    Kuramoto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: Vec<usize>,
    pub extent: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_points: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub sample_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub renormalize: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant {
        value: f64,
    },
    Harmonic {
        omega: f64,
        /// Defaults to the box center.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    GaussianOffsets {
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
        phases: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momenta: Option<Vec<Vec<f64>>>,
    },
    /// Two oscillators: a Gaussian and a partner with prescribed overlap
    /// `z0 = [re, im]`, built from an auxiliary Gaussian.
    Overlap {
        z0: [f64; 2],
        center: Vec<f64>,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
        aux_center: Vec<f64>,
        aux_width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aux_momentum: Option<Vec<f64>>,
    },
    Homogeneous {
        thetas: Vec<f64>,
    },
    Random {
        smoothness: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuramotoSpec {
    pub theta0: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckSpec {
    Enabled(bool),
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub dynamics: Dynamics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kuramoto: Option<KuramotoSpec>,
    #[serde(default)]
    pub checks: BTreeMap<String, CheckSpec>,
}

fn lookup<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut parts = path.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
        for key in [
            "name",
            "model",
            "dynamics",
            "dynamics.K",
            "dynamics.T",
            "dynamics.dt",
        ] {
            if lookup(&table, key).is_none() {
                return Err(Error::config(key, "missing required key"));
            }
        }
        let model = lookup(&table, "model")
            .and_then(|v| v.as_str())
            .unwrap_or("");
        let required: &[&str] = match model {
            "kuramoto" => &["kuramoto", "kuramoto.theta0", "kuramoto.omega"],
            _ => &[
                "grid",
                "grid.points",
                "grid.extent",
                "dynamics.N",
                "potential",
                "initial",
            ],
        };
        for key in required {
            if lookup(&table, key).is_none() {
                return Err(Error::config(*key, "missing required key"));
            }
        }
        let s: Scenario = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::config("name", "use letters, digits, '_' or '-'"));
        }
        let d = &self.dynamics;
        if !(d.k.is_finite() && d.k >= 0.0) {
            return Err(Error::config(
                "dynamics.K",
                "must be finite and non-negative",
            ));
        }
        if !(d.t.is_finite() && d.t >= 0.0) {
            return Err(Error::config(
                "dynamics.T",
                "must be finite and non-negative",
            ));
        }
        if !(d.dt.is_finite() && d.dt > 0.0) {
            return Err(Error::config("dynamics.dt", "must be positive"));
        }
        if d.sample_every == 0 || d.snapshot_every == Some(0) {
            return Err(Error::config("dynamics", "cadences must be positive"));
        }
        if matches!(self.initial, Some(InitialSpec::Random { .. })) && self.seed.is_none() {
            return Err(Error::config("seed", "the random preset requires a seed"));
        }
        let allowed = match self.model {
            Model::Sl => SL_CHECKS,
            Model::Wl => WL_CHECKS,
            Model::Kuramoto => KURAMOTO_CHECKS,
        };
        for name in self.checks.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::config(
                    format!("checks.{name}"),
                    "unknown check for this model",
                ));
            }
        }
        Ok(())
    }

    /// Deterministic TOML rendering; the scenario hash is taken over it.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// First 12 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical()?.as_bytes());
        Ok(hex::encode(digest)[..12].to_string())
    }

    /// Declared checks with their tolerances (`None` for verdict-only checks).
    pub fn declared_checks(&self) -> Vec<(String, Option<f64>)> {
        self.checks
            .iter()
            .filter_map(|(name, spec)| match spec {
                CheckSpec::Enabled(false) => None,
                CheckSpec::Enabled(true) => Some((name.clone(), default_tolerance(name))),
                CheckSpec::Tolerance(t) => Some((name.clone(), Some(*t))),
            })
            .collect()
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::config("grid", "missing required key"))?;
        SpatialGrid::new(&g.points, &g.extent)
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        let g = self.grid()?;
        match self.grid.as_ref().and_then(|s| s.momentum_points.as_ref()) {
            Some(m) => PhaseGrid::with_momentum_points(g, m),
            None => Ok(PhaseGrid::new(g)),
        }
    }

    pub fn build_potential(&self, grid: &SpatialGrid) -> Result<Potential> {
        match self
            .potential
            .as_ref()
            .ok_or_else(|| Error::config("potential", "missing required key"))?
        {
            PotentialSpec::Zero => Ok(Potential::zero(grid)),
            PotentialSpec::Constant { value } => Potential::constant(grid, *value),
            PotentialSpec::Harmonic { omega, center } => {
                let c = center
                    .clone()
                    .unwrap_or_else(|| grid.extents().iter().map(|l| 0.5 * l).collect());
                Potential::harmonic(grid, *omega, &c)
            }
            PotentialSpec::File { path } => Potential::from_file(grid, path),
        }
    }

    pub fn initial_fields(&self, grid: &SpatialGrid) -> Result<Vec<ComplexField>> {
        let n = self
            .dynamics
            .n
            .ok_or_else(|| Error::config("dynamics.N", "missing required key"))?;
        let fields = match self
            .initial
            .as_ref()
            .ok_or_else(|| Error::config("initial", "missing required key"))?
        {
            InitialSpec::GaussianOffsets {
                centers,
                widths,
                phases,
                momenta,
            } => gaussian_offsets(
                grid,
                &GaussianOffsets {
                    centers: centers.clone(),
                    widths: widths.clone(),
                    phases: phases.clone(),
                    momenta: momenta.clone(),
                },
            )?,
            InitialSpec::Overlap {
                z0,
                center,
                width,
                momentum,
                aux_center,
                aux_width,
                aux_momentum,
            } => {
                let zero = vec![0.0; grid.dim()];
                let a = gaussian(
                    grid,
                    center,
                    *width,
                    0.0,
                    momentum.as_deref().unwrap_or(&zero),
                )?;
                let aux = gaussian(
                    grid,
                    aux_center,
                    *aux_width,
                    0.0,
                    aux_momentum.as_deref().unwrap_or(&zero),
                )?;
                let b = with_overlap(&a, C64::new(z0[0], z0[1]), &aux)?;
                vec![a, b]
            }
            InitialSpec::Homogeneous { thetas } => homogeneous(grid, thetas)?,
            InitialSpec::Random { smoothness } => {
                let seed = self
                    .seed
                    .ok_or_else(|| Error::config("seed", "the random preset requires a seed"))?;
                random(grid, n, seed, *smoothness)?
            }
        };
        if fields.len() != n {
            return Err(Error::config(
                "dynamics.N",
                format!(
                    "N = {n} but the initial preset yields {} fields",
                    fields.len()
                ),
            ));
        }
        Ok(fields)
    }

    pub fn initial_state(&self) -> Result<EnsembleState> {
        let grid = self.grid()?;
        let v = self.build_potential(&grid)?;
        EnsembleState::new(self.initial_fields(&grid)?, self.dynamics.k, v)
    }

    pub fn kuramoto_state(&self) -> Result<KuramotoState> {
        let k = self
            .kuramoto
            .as_ref()
            .ok_or_else(|| Error::config("kuramoto", "missing required key"))?;
        KuramotoState::new(k.theta0.clone(), k.omega.clone(), self.dynamics.k)
    }

    fn sl_options(&self) -> EvolveOptions {
        EvolveOptions {
            sample_every: self.dynamics.sample_every,
            snapshot_every: self.dynamics.snapshot_every,
            renormalize: self.dynamics.renormalize,
        }
    }
}

/// Outcome of one declared check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<SyncReport>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl CheckResult {
    fn measured(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            pass: value.is_finite() && value < tolerance,
            value: Some(value),
            tolerance: Some(tolerance),
            message: None,
            reports: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    fn from_reports(name: &str, reports: Vec<SyncReport>) -> Self {
        Self {
            name: name.to_string(),
            pass: !reports.is_empty() && reports.iter().all(|r| r.pass),
            value: None,
            tolerance: None,
            message: None,
            reports,
            details: BTreeMap::new(),
        }
    }

    fn failed(name: &str, message: String) -> Self {
        Self {
            name: name.to_string(),
            pass: false,
            value: None,
            tolerance: None,
            message: Some(message),
            reports: Vec::new(),
            details: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub model: Model,
    pub scenario_hash: String,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub run_dir: PathBuf,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckResult>,
    /// Set when the solver stopped early; outputs then hold the prefix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub pass: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let p = if path.is_dir() {
            path.join("report.json")
        } else {
            path.to_path_buf()
        };
        Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} ({:?}) hash {} version {} in {:.2}s\n",
            self.name, self.model, self.scenario_hash, self.code_version, self.wall_clock_seconds
        );
        if let Some(f) = &self.failure {
            s += &format!("  solver failure: {f}\n");
        }
        for c in &self.checks {
            s += &format!("  {:<20} {}", c.name, if c.pass { "PASS" } else { "FAIL" });
            if let (Some(v), Some(t)) = (c.value, c.tolerance) {
                s += &format!("  value {v:.3e} (tolerance {t:.1e})");
            }
            if let Some(m) = &c.message {
                s += &format!("  {m}");
            }
            s.push('\n');
            for r in &c.reports {
                s += &format!("      {:<18} {:?}", r.observable, r.status);
                if let Some(p) = r.pair {
                    s += &format!(" pair ({}, {})", p.0, p.1);
                }
                if let Some(rate) = r.fitted_rate {
                    s += &format!(" rate {rate:.4} target {:.4}", r.target_rate);
                }
                s.push('\n');
            }
        }
        s += &format!("overall: {}\n", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `t, norm_1..norm_N, diameter, r_jk..., s_jk...`
pub fn write_sl_csv(path: &Path, traj: &SLTrajectory) -> Result<()> {
    let n = traj.final_state.len();
    let ps = pairs(n);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("norm_{i}")));
    header.push("diameter".into());
    header.extend(ps.iter().map(|(j, k)| format!("r_{}{}", j + 1, k + 1)));
    header.extend(ps.iter().map(|(j, k)| format!("s_{}{}", j + 1, k + 1)));
    let rows = (0..traj.times.len()).map(|i| {
        let mut row = vec![fmt(traj.times[i])];
        row.extend(traj.norms[i].iter().map(|v| fmt(*v)));
        row.push(fmt(traj.diameters[i]));
        let c = &traj.correlations[i];
        row.extend(ps.iter().map(|(j, k)| fmt(c.r(*j, *k))));
        row.extend(ps.iter().map(|(j, k)| fmt(c.s(*j, *k))));
        row
    });
    write_rows(path, &header, rows)
}

/// `t, mass_j..., re_z_jk..., im_z_jk..., w_dist2`
pub fn write_wl_csv(path: &Path, traj: &WlTrajectory) -> Result<()> {
    let n = traj.final_state.len();
    let ps = pairs(n);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("mass_{i}")));
    header.extend(ps.iter().map(|(j, k)| format!("re_z_{}{}", j + 1, k + 1)));
    header.extend(ps.iter().map(|(j, k)| format!("im_z_{}{}", j + 1, k + 1)));
    header.push("w_dist2".into());
    let rows = (0..traj.times.len()).map(|i| {
        let mut row = vec![fmt(traj.times[i])];
        row.extend(traj.masses[i].iter().map(|v| fmt(*v)));
        let c = &traj.correlations[i];
        row.extend(ps.iter().map(|(j, k)| fmt(c.r(*j, *k))));
        row.extend(ps.iter().map(|(j, k)| fmt(c.s(*j, *k))));
        row.push(fmt(traj.w_dist2[i]));
        row
    });
    write_rows(path, &header, rows)
}

/// `t, theta_1..theta_N`
pub fn write_kuramoto_csv(path: &Path, traj: &KuramotoTrajectory, every: usize) -> Result<()> {
    let n = traj.thetas[0].len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    let last = traj.times.len() - 1;
    let rows = (0..traj.times.len())
        .filter(|i| i % every.max(1) == 0 || *i == last)
        .map(|i| {
            let mut row = vec![fmt(traj.times[i])];
            row.extend(traj.thetas[i].iter().map(|v| fmt(*v)));
            row
        });
    write_rows(path, &header, rows)
}

/// `t, mass1, mass2, r12, s12, rho_d_int, h1_dist, grad_sqrho_d, lambda_d,
/// resid_rho1..resid_Ja`; residual columns are empty at the end points.
pub fn write_hydro_csv(path: &Path, snapshots: &[EnsembleState]) -> Result<(Residuals, Residuals)> {
    let s = hydro_series(snapshots, VACUUM_EPS)?;
    let cont = continuity_residuals_of(snapshots, VACUUM_EPS)?;
    let mom = momentum_residuals_of(snapshots, VACUUM_EPS, MOMENTUM_MASK)?;
    let mut header: Vec<String> = [
        "t",
        "mass1",
        "mass2",
        "r12",
        "s12",
        "rho_d_int",
        "h1_dist",
        "grad_sqrho_d",
        "lambda_d",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(
        CONTINUITY_NAMES
            .iter()
            .chain(&MOMENTUM_NAMES)
            .map(|n| format!("resid_{n}")),
    );
    let last = s.times.len() - 1;
    let rows = (0..s.times.len()).map(|i| {
        let mut row: Vec<String> = [
            s.times[i],
            s.mass1[i],
            s.mass2[i],
            s.r12[i],
            s.s12[i],
            s.rho_d_int[i],
            s.h1_dist[i],
            s.grad_sqrt_rho_d[i],
            s.lambda_d[i],
        ]
        .iter()
        .map(|v| fmt(*v))
        .collect();
        for r in [&cont, &mom] {
            for e in 0..4 {
                row.push(if i == 0 || i == last {
                    String::new()
                } else {
                    fmt(r.series[e][i - 1])
                });
            }
        }
        row
    });
    write_rows(path, &header, rows)?;
    Ok((cont, mom))
}

fn save_sl_snapshots(dir: &Path, snapshots: &[EnsembleState]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (s, state) in snapshots.iter().enumerate() {
        for (j, f) in state.psi().iter().enumerate() {
            let name = format!("psi{}_{s:05}.bin", j + 1);
            Snapshot::spatial(f.grid(), f.values())?.save(&dir.join(&name))?;
            out.push(format!("fields/{name}"));
        }
    }
    Ok(out)
}

/// Reads `fields/psi*_*.bin` of an SL run back into states.
pub fn load_sl_snapshots(run_dir: &Path, scenario: &Scenario) -> Result<Vec<EnsembleState>> {
    let every = scenario
        .dynamics
        .snapshot_every
        .ok_or_else(|| Error::config("dynamics.snapshot_every", "run stored no snapshots"))?;
    let n = scenario.dynamics.n.unwrap_or(0);
    let grid = scenario.grid()?;
    let v = scenario.build_potential(&grid)?;
    let (_, dt) = crate::sl::step_plan(scenario.dynamics.t, scenario.dynamics.dt)?;
    let mut out = Vec::new();
    for s in 0.. {
        let first = run_dir.join("fields").join(format!("psi1_{s:05}.bin"));
        if !first.exists() {
            break;
        }
        let mut psi = Vec::with_capacity(n);
        for j in 1..=n {
            let snap = Snapshot::load(&run_dir.join("fields").join(format!("psi{j}_{s:05}.bin")))?;
            psi.push(ComplexField::new(
                snap.spatial_grid()?,
                snap.complex_values()?.to_vec(),
            )?);
        }
        let t = (s * every) as f64 * dt;
        out.push(EnsembleState::new(psi, scenario.dynamics.k, v.clone())?.at_time(t));
    }
    Ok(out)
}

fn save_wl_snapshots(dir: &Path, snapshots: &[WignerLoheState]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (s, state) in snapshots.iter().enumerate() {
        let n = state.len();
        for j in 0..n {
            for k in j..n {
                let w = state.pair(j, k);
                let name = format!("w{}{}_{s:05}.bin", j + 1, k + 1);
                w.snapshot(j == k)?.save(&dir.join(&name))?;
                out.push(format!("fields/{name}"));
            }
        }
    }
    Ok(out)
}

struct Staging {
    tmp: PathBuf,
    fin: PathBuf,
}

impl Staging {
    fn new(out: &Path, name: &str, hash: &str) -> Result<Self> {
        fs::create_dir_all(out)?;
        let fin = out.join(format!("{name}-{hash}"));
        let tmp = out.join(format!(".{name}-{hash}.tmp{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(tmp.join("fields"))?;
        Ok(Self { tmp, fin })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    fn commit(self) -> Result<PathBuf> {
        if self.fin.exists() {
            fs::remove_dir_all(&self.fin)?;
        }
        fs::rename(&self.tmp, &self.fin)?;
        Ok(self.fin)
    }
}

fn guard(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult::failed(name, e.to_string()))
}

fn max_abs_series(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn sl_check(
    name: &str,
    tol: Option<f64>,
    traj: &SLTrajectory,
    init: &EnsembleState,
) -> CheckResult {
    let tol = tol.unwrap_or(f64::INFINITY);
    guard(name, || match name {
        "norm_drift" => Ok(CheckResult::measured(name, traj.max_norm_drift(), tol)),
        "closed_form" => {
            if init.len() != 2 {
                return Ok(CheckResult::failed(name, "requires N = 2".into()));
            }
            let z0 = traj.correlations[0].get(0, 1);
            let mut err = 0.0f64;
            for (t, c) in traj.times.iter().zip(&traj.correlations) {
                let exact = z12_closed_form(z0, traj.coupling, t - traj.times[0])?;
                err = err.max((c.get(0, 1) - exact).norm());
            }
            Ok(CheckResult::measured(name, err, tol))
        }
        "correlation_decay" => Ok(CheckResult::from_reports(
            name,
            check_correlation_decay(traj)?,
        )),
        "diameter_bound" => Ok(CheckResult::from_reports(
            name,
            vec![check_diameter_bound(traj)?],
        )),
        "kuramoto_reduction" => {
            let ks = reduce_homogeneous(init)?;
            let t_end = traj.times.last().unwrap() - traj.times[0];
            let kt = evolve_kuramoto(&ks, t_end, traj.dt)?;
            let mut err = 0.0f64;
            let sl_phases: Vec<Vec<f64>> = traj
                .snapshots
                .iter()
                .map(|s| {
                    s.psi()
                        .iter()
                        .map(|f| -(f.values().iter().sum::<C64>()).arg())
                        .collect()
                })
                .collect();
            if sl_phases.len() < 2 {
                return Ok(CheckResult::failed(name, "needs snapshots".into()));
            }
            for i in 1..init.len() {
                let sl_d = unwrap(&sl_phases.iter().map(|th| th[i] - th[0]).collect::<Vec<_>>());
                let k_d: Vec<f64> = traj
                    .snapshots
                    .iter()
                    .map(|s| {
                        let idx = ((s.t() - traj.times[0]) / kt.dt).round() as usize;
                        kt.thetas[idx][i] - kt.thetas[idx][0]
                    })
                    .collect();
                let shift = (k_d[0] - sl_d[0]) / (2.0 * std::f64::consts::PI);
                let shift = shift.round() * 2.0 * std::f64::consts::PI;
                let sl_d: Vec<f64> = sl_d.iter().map(|v| v + shift).collect();
                err = err.max(max_abs_series(&sl_d, &k_d));
            }
            Ok(CheckResult::measured(name, err, tol))
        }
        "hydro" => hydro_check(name, &traj.snapshots),
        "h1_sync" => Ok(CheckResult::from_reports(
            name,
            vec![h1_sync_check_of(&traj.snapshots)?],
        )),
        _ => Err(Error::config(format!("checks.{name}"), "unknown check")),
    })
}

fn hydro_check(name: &str, snapshots: &[EnsembleState]) -> Result<CheckResult> {
    let tol = |n| default_tolerance(n).unwrap();
    let cont = continuity_residuals_of(snapshots, VACUUM_EPS)?;
    let mom = momentum_residuals_of(snapshots, VACUUM_EPS, MOMENTUM_MASK)?;
    let mut polar = 0.0f64;
    let mut flux = 0.0f64;
    let mut mass = 0.0f64;
    for s in snapshots {
        for f in s.psi() {
            let (a, b) = polar_identity_defects(f, VACUUM_EPS, 1e-6);
            polar = polar.max(a);
            flux = flux.max(b);
            mass = mass.max((crate::field::l2_norm(f).powi(2) - 1.0).abs());
        }
    }
    let mut details = BTreeMap::new();
    for (r, names) in [(&cont, CONTINUITY_NAMES), (&mom, MOMENTUM_NAMES)] {
        for (e, m) in r.max().iter().enumerate() {
            details.insert(format!("resid_{}", names[e]), *m);
        }
    }
    details.insert("polar_identity".into(), polar);
    details.insert("flux_identity".into(), flux);
    details.insert("mass_balance".into(), mass);
    let cmax = cont.max().into_iter().fold(0.0, f64::max);
    let mmax = mom.max().into_iter().fold(0.0, f64::max);
    let pass = cmax < tol("continuity")
        && mmax < tol("momentum")
        && polar < tol("polar_identity")
        && flux < tol("flux_identity")
        && mass < tol("mass_balance");
    Ok(CheckResult {
        name: name.to_string(),
        pass,
        value: Some(cmax),
        tolerance: Some(tol("continuity")),
        message: None,
        reports: Vec::new(),
        details,
    })
}

/// d/dt log ||w1 - w2||^2 against -K r12 (relative, after t = 1).
pub fn moyal_rate_error(traj: &WlTrajectory) -> f64 {
    let t0 = traj.times[0];
    let mut worst = 0.0f64;
    for i in 1..traj.times.len().saturating_sub(1) {
        if traj.times[i] - t0 < 1.0 {
            continue;
        }
        let d = (traj.w_dist2[i + 1].ln() - traj.w_dist2[i - 1].ln())
            / (traj.times[i + 1] - traj.times[i - 1]);
        let target = -traj.coupling * traj.correlations[i].r(0, 1);
        worst = worst.max(((d - target) / target).abs());
    }
    worst
}

fn wl_check(name: &str, tol: Option<f64>, scenario: &Scenario, traj: &WlTrajectory) -> CheckResult {
    let tol = tol.unwrap_or(f64::INFINITY);
    guard(name, || match name {
        "wl_mass" => {
            let m0 = &traj.masses[0];
            let drift = traj
                .masses
                .iter()
                .flat_map(|m| m.iter().zip(m0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            Ok(CheckResult::measured(name, drift, tol))
        }
        "moyal_rate" => Ok(CheckResult::measured(name, moyal_rate_error(traj), tol)),
        "distance_decay" => {
            let t_end = *traj.times.last().unwrap();
            let fit = fit_rate(&traj.times, &traj.w_dist2, (0.5 * t_end, t_end))?;
            let k = traj.coupling;
            let mut r = CheckResult::measured(name, (fit.rate / k - 1.0).abs(), 0.1);
            r.details.insert("rate".into(), fit.rate);
            Ok(r)
        }
        "correlation_decay" => Ok(CheckResult::from_reports(
            name,
            correlation_reports(&traj.times, &traj.correlations, traj.coupling)?,
        )),
        "pipeline" => {
            let c = compare_pipelines(scenario)?;
            let mut r = CheckResult::measured(name, c.max(), tol);
            r.details = c.maxima();
            Ok(r)
        }
        _ => Err(Error::config(format!("checks.{name}"), "unknown check")),
    })
}

fn kuramoto_check(name: &str, tol: Option<f64>, traj: &KuramotoTrajectory, k: f64) -> CheckResult {
    let tol = tol.unwrap_or(f64::INFINITY);
    guard(name, || match name {
        "pair_exact" => {
            if traj.thetas[0].len() != 2 {
                return Ok(CheckResult::failed(name, "requires N = 2".into()));
            }
            let d = traj.difference(0, 1);
            let t0 = traj.times[0];
            let err = traj
                .times
                .iter()
                .zip(&d)
                .map(|(t, v)| (v - pair_difference_exact(d[0], k, t - t0)).abs())
                .fold(0.0, f64::max);
            Ok(CheckResult::measured(name, err, tol))
        }
        "phase_sync" => {
            let diam = traj.phase_diameter();
            let mut r = SyncReport::new("phase_diameter", k, &traj.times, &diam);
            let end = *diam.last().unwrap();
            r.set_status(if end < diam[0] {
                SyncStatus::Pass
            } else {
                SyncStatus::Fail
            });
            r.details.insert("final".into(), end);
            Ok(CheckResult::from_reports(name, vec![r]))
        }
        _ => Err(Error::config(format!("checks.{name}"), "unknown check")),
    })
}

fn finish(
    scenario: &Scenario,
    stage: Staging,
    started: Instant,
    mut outputs: Vec<String>,
    checks: Vec<CheckResult>,
    failure: Option<Error>,
) -> Result<RunManifest> {
    outputs.insert(0, "config.snapshot".into());
    fs::write(stage.path("config.snapshot"), scenario.canonical()?)?;
    outputs.push("report.json".into());
    let pass = failure.is_none() && checks.iter().all(|c| c.pass);
    let mut manifest = RunManifest {
        name: scenario.name.clone(),
        model: scenario.model,
        scenario_hash: scenario.hash()?,
        code_version: CODE_VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        run_dir: stage.fin.clone(),
        outputs,
        checks,
        failure: failure.as_ref().map(|e| e.to_string()),
        pass,
    };
    fs::write(
        stage.path("report.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    let dir = stage.commit()?;
    manifest.run_dir = dir.clone();
    match failure {
        Some(e) => Err(Error::RunFailed {
            dir,
            message: e.to_string(),
        }),
        None => Ok(manifest),
    }
}

/// Executes a scenario and writes its run directory under `out`.
pub fn run(scenario: &Scenario, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let stage = Staging::new(out, &scenario.name, &scenario.hash()?)?;
    let declared = scenario.declared_checks();
    let d = &scenario.dynamics;
    let fields_dir = stage.path("fields");
    match scenario.model {
        Model::Sl => {
            let init = scenario.initial_state()?;
            let (traj, failure) = evolve_partial(&init, d.t, d.dt, &scenario.sl_options(), &mut []);
            write_sl_csv(&stage.path("observables.csv"), &traj)?;
            let mut outputs = vec!["observables.csv".to_string()];
            outputs.extend(save_sl_snapshots(&fields_dir, &traj.snapshots)?);
            if init.len() == 2 && traj.snapshots.len() >= 3 {
                write_hydro_csv(&stage.path("hydro.csv"), &traj.snapshots)?;
                outputs.push("hydro.csv".into());
            }
            let checks = if failure.is_none() {
                declared
                    .iter()
                    .map(|(n, t)| sl_check(n, *t, &traj, &init))
                    .collect()
            } else {
                Vec::new()
            };
            finish(scenario, stage, started, outputs, checks, failure)
        }
        Model::Wl => {
            let init = WignerLoheState::from_ensemble(
                &scenario.initial_state()?,
                &scenario.phase_grid()?,
            )?;
            let opts = WlOptions {
                sample_every: d.sample_every,
                snapshot_every: d.snapshot_every,
            };
            let (traj, failure) = evolve_wl_partial(&init, d.t, d.dt, &opts);
            write_wl_csv(&stage.path("observables.csv"), &traj)?;
            let mut outputs = vec!["observables.csv".to_string()];
            outputs.extend(save_wl_snapshots(&fields_dir, &traj.snapshots)?);
            let checks = if failure.is_none() {
                declared
                    .iter()
                    .map(|(n, t)| wl_check(n, *t, scenario, &traj))
                    .collect()
            } else {
                Vec::new()
            };
            finish(scenario, stage, started, outputs, checks, failure)
        }
        Model::Kuramoto => {
            let ks = scenario.kuramoto_state()?;
            let traj = evolve_kuramoto(&ks, d.t, d.dt)?;
            write_kuramoto_csv(&stage.path("observables.csv"), &traj, d.sample_every)?;
            let checks = declared
                .iter()
                .map(|(n, t)| kuramoto_check(n, *t, &traj, d.k))
                .collect();
            finish(
                scenario,
                stage,
                started,
                vec!["observables.csv".into()],
                checks,
                None,
            )
        }
    }
}

/// Post-processes the snapshots of a finished SL run into `hydro.csv` and
/// residual summaries.
pub fn hydro_from_run(run_dir: &Path) -> Result<CheckResult> {
    let scenario = Scenario::load(&run_dir.join("config.snapshot"))?;
    let snaps = load_sl_snapshots(run_dir, &scenario)?;
    let tmp = run_dir.join(".hydro.csv.tmp");
    write_hydro_csv(&tmp, &snaps)?;
    fs::rename(&tmp, run_dir.join("hydro.csv"))?;
    hydro_check("hydro", &snaps)
}

/// Wigner transform of spatial snapshot files; real output when both
/// inputs are the same file.
pub fn transform_files(psi: &Path, phi: Option<&Path>, out: &Path) -> Result<()> {
    let a = Snapshot::load(psi)?;
    let fa = ComplexField::new(a.spatial_grid()?, a.complex_values()?.to_vec())?;
    let fb = match phi {
        Some(p) => {
            let b = Snapshot::load(p)?;
            ComplexField::new(b.spatial_grid()?, b.complex_values()?.to_vec())?
        }
        None => fa.clone(),
    };
    let pg = PhaseGrid::new(*fa.grid());
    let w = wigner_transform(&fa, &fb, &pg)?;
    w.snapshot(phi.is_none())?.save(out)
}

/// Discrepancies between the transformed SL trajectory and the W-L run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineComparison {
    pub times: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w12: Vec<f64>,
    pub z12: Vec<f64>,
}

impl PipelineComparison {
    pub fn maxima(&self) -> BTreeMap<String, f64> {
        let m = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        BTreeMap::from([
            ("w1".to_string(), m(&self.w1)),
            ("w2".to_string(), m(&self.w2)),
            ("w12".to_string(), m(&self.w12)),
            ("z12".to_string(), m(&self.z12)),
        ])
    }

    pub fn max(&self) -> f64 {
        self.maxima().into_values().fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["t", "dw1", "dw2", "dw12", "dz12"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows = (0..self.times.len()).map(|i| {
            [
                self.times[i],
                self.w1[i],
                self.w2[i],
                self.w12[i],
                self.z12[i],
            ]
            .iter()
            .map(|v| fmt(*v))
            .collect()
        });
        write_rows(path, &header, rows)
    }
}

/// Runs an N = 2 scenario through both the Schrödinger-Lohe and the
/// Wigner-Lohe integrators and compares them at every snapshot.
pub fn compare_pipelines(scenario: &Scenario) -> Result<PipelineComparison> {
    let init = scenario.initial_state()?;
    if init.len() != 2 {
        return Err(Error::config(
            "dynamics.N",
            "pipeline comparison needs N = 2",
        ));
    }
    let d = &scenario.dynamics;
    let every = d.snapshot_every.unwrap_or(d.sample_every);
    let pg = scenario.phase_grid()?;
    let sl = crate::sl::evolve(
        &init,
        d.t,
        d.dt,
        &EvolveOptions {
            sample_every: every,
            snapshot_every: Some(every),
            renormalize: false,
        },
        &mut [],
    )?;
    let wl = crate::wigner::evolve_wl(
        &WignerLoheState::from_ensemble(&init, &pg)?,
        d.t,
        d.dt,
        &WlOptions {
            sample_every: every,
            snapshot_every: Some(every),
        },
    )?;
    let mut c = PipelineComparison {
        times: Vec::new(),
        w1: Vec::new(),
        w2: Vec::new(),
        w12: Vec::new(),
        z12: Vec::new(),
    };
    for (s, w) in sl.snapshots.iter().zip(&wl.snapshots) {
        let psi = s.psi();
        c.times.push(s.t());
        for (j, k, out) in [(0, 0, &mut c.w1), (1, 1, &mut c.w2), (0, 1, &mut c.w12)] {
            let t = wigner_transform(&psi[j], &psi[k], &pg)?;
            out.push(t.sub(w.pair(j, k))?.l2_norm());
        }
        let z = crate::field::inner_product(&psi[0], &psi[1])?;
        c.z12.push((z - w.correlations().get(0, 1)).norm());
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEMMA: &str = r#"
name = "lemma"
model = "sl"

[grid]
points = [128]
extent = [32.0]

[dynamics]
N = 2
K = 1.0
T = 1.0
dt = 2e-3
sample_every = 25

[potential]
kind = "harmonic"
omega = 1.0

[initial]
preset = "overlap"
z0 = [0.3, 0.4]
center = [15.0]
width = 1.0
aux_center = [17.0]
aux_width = 1.2

[checks]
closed_form = true
norm_drift = 1e-9
"#;

    #[test]
    fn parses_and_hashes_deterministically() {
        let s = Scenario::from_toml_str(LEMMA).unwrap();
        assert_eq!(s.dynamics.n, Some(2));
        assert_eq!(
            s.hash().unwrap(),
            Scenario::from_toml_str(LEMMA).unwrap().hash().unwrap()
        );
        let again = Scenario::from_toml_str(&s.canonical().unwrap()).unwrap();
        assert_eq!(again, s);
        let mut other = s.clone();
        other.dynamics.k = 2.0;
        assert_ne!(other.hash().unwrap(), s.hash().unwrap());
        assert_eq!(
            s.declared_checks(),
            vec![
                ("closed_form".to_string(), Some(1e-6)),
                ("norm_drift".to_string(), Some(1e-9))
            ]
        );
    }

    #[test]
    fn missing_coupling_names_the_key() {
        let text = LEMMA.replace("K = 1.0\n", "");
        match Scenario::from_toml_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "dynamics.K"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_preset_needs_seed() {
        let text = LEMMA.replace(
            "preset = \"overlap\"\nz0 = [0.3, 0.4]\ncenter = [15.0]\nwidth = 1.0\naux_center = [17.0]\naux_width = 1.2",
            "preset = \"random\"\nsmoothness = 0.5",
        );
        match Scenario::from_toml_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "seed"),
            other => panic!("{other:?}"),
        }
        let seeded = format!("seed = 3\n{text}");
        let s = Scenario::from_toml_str(&seeded).unwrap();
        assert_eq!(s.initial_state().unwrap().len(), 2);
    }

    #[test]
    fn unknown_check_rejected() {
        let text = LEMMA.replace("closed_form = true", "moyal_rate = true");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn overlap_preset_hits_z0() {
        let s = Scenario::from_toml_str(LEMMA).unwrap();
        let st = s.initial_state().unwrap();
        let z = crate::field::inner_product(&st.psi()[0], &st.psi()[1]).unwrap();
        assert!((z - C64::new(0.3, 0.4)).norm() < 1e-14);
    }

    #[test]
    fn run_writes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::from_toml_str(LEMMA).unwrap();
        let m = run(&s, dir.path()).unwrap();
        assert!(m.pass, "{}", m.summary());
        assert_eq!(
            m.run_dir,
            dir.path().join(format!("lemma-{}", s.hash().unwrap()))
        );
        for f in [
            "config.snapshot",
            "observables.csv",
            "report.json",
            "fields",
        ] {
            assert!(m.run_dir.join(f).exists(), "{f}");
        }
        let csv = fs::read_to_string(m.run_dir.join("observables.csv")).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "t,norm_1,norm_2,diameter,r_12,s_12"
        );
        assert_eq!(csv.lines().count(), 1 + 21);
        let back = RunManifest::load(&m.run_dir).unwrap();
        assert_eq!(back.checks, m.checks);
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
