//! Experiment runner: JSON run specifications, algorithm selection, the
//! time-domain and WOLA pipelines, CSV output and the bandwidth comparison.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::danse::{DanseState, OnlineDanse};
use crate::error::{Error, Result};
use crate::estimator::{embed_local, OnlineCentralized, OnlineEstimator, OnlineLocal};
use crate::filters::{centralized_filter, local_filter};
use crate::idanse::{idanse_cycle, OnlineIdanse};
use crate::linalg::{self, CMat};
use crate::metrics::{self, ReportRow, RunReport};
use crate::scene::anechoic::{generate_anechoic, AnechoicParams};
use crate::scene::{generate_scene, Activity, ActivitySchedule, NodeLayout, SceneConfig, SelectionMatrix};
use crate::scm::ScmSet;
use crate::wola::{self, Stft, WolaConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A per-node count given either once for all nodes or as a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Same(usize),
    Each(Vec<usize>),
}

impl PerNode {
    pub fn expand(&self, nodes: usize, field: &str) -> Result<Vec<usize>> {
        match self {
            PerNode::Same(v) => Ok(vec![*v; nodes]),
            PerNode::Each(v) if v.len() == nodes => Ok(v.clone()),
            PerNode::Each(v) => Err(Error::Config(format!(
                "`{field}` lists {} values for {nodes} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScmMode {
    /// Exact SCMs from the scene model; DANSE does one update per frame.
    True,
    /// Exponentially averaged SCMs segmented by activity label.
    Online,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Wola,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WolaSpec {
    pub frame_len: usize,
    pub overlap: f64,
    pub sample_rate: u32,
    pub duration_s: f64,
    pub max_delay: usize,
    /// Hops per activity segment.
    pub segment_hops: usize,
}

impl Default for WolaSpec {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            overlap: 0.5,
            sample_rate: 16_000,
            duration_s: 10.0,
            max_delay: 16,
            segment_hops: 8,
        }
    }
}

impl WolaSpec {
    pub fn config(&self) -> WolaConfig {
        WolaConfig {
            frame_len: self.frame_len,
            overlap: self.overlap,
        }
    }

    pub fn params(&self) -> Result<AnechoicParams> {
        let cfg = self.config();
        cfg.validate()?;
        if !(self.duration_s > 0.0) || self.segment_hops == 0 {
            return Err(Error::Config("WOLA duration and segment length must be positive".into()));
        }
        Ok(AnechoicParams {
            sample_rate: self.sample_rate as f64,
            samples: (self.duration_s * self.sample_rate as f64).round() as usize,
            max_delay: self.max_delay,
            segment_len: self.segment_hops * cfg.hop(),
        })
    }
}

fn default_name() -> String {
    "run".into()
}
fn zero() -> PerNode {
    PerNode::Same(0)
}
fn default_snr() -> f64 {
    0.0
}
fn default_frac() -> f64 {
    0.1
}
fn default_frame_len() -> usize {
    250
}
fn default_frames() -> usize {
    2000
}
fn default_forgetting() -> f64 {
    0.995
}
fn default_schedule() -> String {
    "AGN".into()
}
fn default_mode() -> ScmMode {
    ScmMode::Online
}
fn default_domain() -> Domain {
    Domain::Time
}
fn default_delta() -> f64 {
    0.5
}
fn default_max_cycles() -> usize {
    50
}

/// One experiment, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub nodes: usize,
    pub sensors: PerNode,
    #[serde(default)]
    pub global_desired: usize,
    #[serde(default = "zero")]
    pub local_desired: PerNode,
    #[serde(default)]
    pub global_noise: usize,
    #[serde(default = "zero")]
    pub local_noise: PerNode,
    /// Defaults to the global desired count plus the largest local desired
    /// count, capped by the smallest node.
    #[serde(default)]
    pub target_channels: Option<usize>,
    #[serde(default = "default_snr")]
    pub target_snr_db: f64,
    #[serde(default = "default_frac")]
    pub sensor_noise_frac: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frame_len")]
    pub frame_len: usize,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_forgetting")]
    pub forgetting_factor: f64,
    /// Algorithm identifiers; see [`Algorithm::parse`]. Empty means the
    /// default comparison set.
    #[serde(default)]
    pub algorithms: Vec<String>,
    #[serde(default = "default_mode")]
    pub scm_mode: ScmMode,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    /// Cyclic activity pattern over `A` (all active), `G` (global sources
    /// only) and `N` (noise only).
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default)]
    pub wola: WolaSpec,
    /// CSV file name; defaults to `<name>.csv`.
    #[serde(default)]
    pub output: Option<String>,
    /// Frames excluded from the whole-run output SNR (convergence transient).
    #[serde(default)]
    pub warmup_frames: usize,
    #[serde(default = "default_delta")]
    pub bandwidth_delta_db: f64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
}

impl RunSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Config("missing schema_version".into())),
        }
        let spec: RunSpec = serde_json::from_value(value)?;
        spec.scene_config()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run spec serializes")
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        let k = self.nodes;
        if k == 0 {
            return Err(Error::Config("at least one node is required".into()));
        }
        let sensors = self.sensors.expand(k, "sensors")?;
        let local_desired = self.local_desired.expand(k, "local_desired")?;
        let local_noise = self.local_noise.expand(k, "local_noise")?;
        let min_m = sensors.iter().cloned().min().unwrap_or(0);
        let max_local = local_desired.iter().cloned().max().unwrap_or(0);
        let target_channels = self
            .target_channels
            .unwrap_or_else(|| (self.global_desired + max_local).clamp(1, min_m.max(1)));
        if !(0.0..1.0).contains(&self.forgetting_factor) {
            return Err(Error::Config(format!(
                "forgetting factor {} outside [0, 1)",
                self.forgetting_factor
            )));
        }
        let cfg = SceneConfig {
            sensors,
            global_desired: self.global_desired,
            local_desired,
            global_noise: self.global_noise,
            local_noise,
            target_channels,
            target_snr_db: self.target_snr_db,
            sensor_noise_frac: self.sensor_noise_frac,
            seed: self.seed,
            frame_len: self.frame_len,
            frames: self.frames,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn activity_schedule(&self) -> Result<ActivitySchedule> {
        ActivitySchedule::parse(&self.schedule)
    }

    /// Parsed algorithm list with duplicates (same label) removed.
    pub fn algorithm_list(&self, cfg: &SceneConfig) -> Result<Vec<Algorithm>> {
        let ids: Vec<String> = if self.algorithms.is_empty() {
            let mut ids = vec!["centralized", "local", "danse"];
            if cfg.global_desired > 0 {
                ids.push("danse-global");
            }
            ids.push("idanse");
            ids.into_iter().map(String::from).collect()
        } else {
            self.algorithms.clone()
        };
        let mut out: Vec<Algorithm> = Vec::new();
        for id in &ids {
            let alg = Algorithm::parse(id, cfg)?;
            if !out.iter().any(|a| a.label() == alg.label()) {
                out.push(alg);
            }
        }
        Ok(out)
    }

    fn csv_name(&self) -> String {
        self.output.clone().unwrap_or_else(|| format!("{}.csv", self.name))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Centralized,
    Local,
    /// Sequential DANSE broadcasting `fused` channels per node.
    Danse { fused: usize },
    /// One-shot iDANSE broadcasting `fused` channels per node.
    Idanse { fused: usize },
}

impl Algorithm {
    /// Identifiers: `centralized`, `local`, `danse` (all `J` target
    /// channels fused), `danse-global` (as many as global desired sources),
    /// `danse:Q`, `idanse` (`J` channels) and `idanse:Q`.
    pub fn parse(id: &str, cfg: &SceneConfig) -> Result<Self> {
        let j = cfg.target_channels;
        let id = id.trim().to_ascii_lowercase();
        let width = |text: &str| -> Result<usize> {
            text.parse::<usize>()
                .ok()
                .filter(|q| *q > 0)
                .ok_or_else(|| Error::UnknownAlgorithm(id.clone()))
        };
        let alg = match id.split_once(':') {
            None => match id.as_str() {
                "centralized" => Algorithm::Centralized,
                "local" => Algorithm::Local,
                "danse" => Algorithm::Danse { fused: j },
                "danse-global" => {
                    if cfg.global_desired == 0 {
                        return Err(Error::Config(
                            "danse-global needs at least one global desired source".into(),
                        ));
                    }
                    Algorithm::Danse {
                        fused: cfg.global_desired,
                    }
                }
                "idanse" => Algorithm::Idanse { fused: j },
                _ => return Err(Error::UnknownAlgorithm(id)),
            },
            Some(("danse", q)) => Algorithm::Danse { fused: width(q)? },
            Some(("idanse", q)) => Algorithm::Idanse { fused: width(q)? },
            Some(_) => return Err(Error::UnknownAlgorithm(id)),
        };
        if let Algorithm::Danse { fused } = alg {
            if fused > j {
                return Err(Error::Config(format!(
                    "DANSE cannot fuse {fused} channels with J = {j} targets"
                )));
            }
        }
        if let Algorithm::Idanse { fused } = alg {
            let min_m = cfg.sensors.iter().cloned().min().unwrap_or(0);
            if fused > min_m {
                return Err(Error::Config(format!(
                    "iDANSE cannot fuse {fused} channels from nodes with {min_m} sensors"
                )));
            }
        }
        Ok(alg)
    }

    pub fn label(&self) -> String {
        match self {
            Algorithm::Centralized => "centralized".into(),
            Algorithm::Local => "local".into(),
            Algorithm::Danse { fused } => format!("DANSE_{fused}"),
            Algorithm::Idanse { fused } => format!("iDANSE_{fused}"),
        }
    }

    pub fn online(
        &self,
        layout: &NodeLayout,
        targets: &[SelectionMatrix],
        forgetting: f64,
    ) -> Result<Box<dyn OnlineEstimator>> {
        let (layout, targets) = (layout.clone(), targets.to_vec());
        Ok(match *self {
            Algorithm::Centralized => Box::new(OnlineCentralized::new(layout, targets, forgetting)),
            Algorithm::Local => Box::new(OnlineLocal::new(layout, targets, forgetting)),
            Algorithm::Danse { fused } => Box::new(OnlineDanse::new(layout, targets, fused, forgetting)?),
            Algorithm::Idanse { fused } => Box::new(OnlineIdanse::new(layout, targets, fused, forgetting)?),
        })
    }
}

/// Filters driven by exact SCMs.
enum ExactRunner {
    Fixed(Vec<CMat>),
    Danse(DanseState),
}

impl ExactRunner {
    fn new(alg: Algorithm, scms: &ScmSet, targets: &[SelectionMatrix]) -> Result<Self> {
        let layout = &scms.layout;
        Ok(match alg {
            Algorithm::Centralized => ExactRunner::Fixed(centralized_filters(scms, targets)?),
            Algorithm::Local => ExactRunner::Fixed(
                targets
                    .iter()
                    .enumerate()
                    .map(|(k, t)| Ok(embed_local(layout, k, &local_filter(scms, k, t)?.w)))
                    .collect::<Result<_>>()?,
            ),
            Algorithm::Idanse { fused } => ExactRunner::Fixed(
                idanse_cycle(scms, targets, fused)?
                    .into_iter()
                    .map(|r| r.network_wide)
                    .collect(),
            ),
            Algorithm::Danse { fused } => {
                ExactRunner::Danse(DanseState::new(layout.clone(), targets.to_vec(), fused)?)
            }
        })
    }

    fn next(&mut self, scms: &ScmSet) -> Result<Vec<CMat>> {
        match self {
            ExactRunner::Fixed(w) => Ok(w.clone()),
            ExactRunner::Danse(state) => {
                state.step_true(scms)?;
                Ok((0..scms.layout.nodes()).map(|k| state.network_wide(k)).collect())
            }
        }
    }
}

/// Per-bin filter source of the WOLA pipeline.
enum BinRunner {
    Exact(ExactRunner),
    Online(Box<dyn OnlineEstimator>),
}

impl BinRunner {
    fn new(
        alg: Algorithm,
        scms: Option<&ScmSet>,
        layout: &NodeLayout,
        targets: &[SelectionMatrix],
        forgetting: f64,
    ) -> Result<Self> {
        Ok(match scms {
            Some(scms) => BinRunner::Exact(ExactRunner::new(alg, scms, targets)?),
            None => BinRunner::Online(alg.online(layout, targets, forgetting)?),
        })
    }

    fn filters(&mut self, scms: Option<&ScmSet>, y: &CMat, label: Option<Activity>) -> Result<Vec<CMat>> {
        match (self, scms) {
            (BinRunner::Exact(r), Some(scms)) => r.next(scms),
            (BinRunner::Online(e), _) => Ok(e.process(y, label)?.network_wide),
            (BinRunner::Exact(_), None) => Err(Error::Config("exact runner without SCMs".into())),
        }
    }
}

fn centralized_filters(scms: &ScmSet, targets: &[SelectionMatrix]) -> Result<Vec<CMat>> {
    targets
        .iter()
        .enumerate()
        .map(|(k, t)| Ok(centralized_filter(scms, k, t)?.w))
        .collect()
}

fn max_gap(filters: &[CMat], reference: &[CMat]) -> f64 {
    filters
        .iter()
        .zip(reference)
        .map(|(w, r)| linalg::rel_frobenius(w, r))
        .fold(0.0, f64::max)
}

/// First-channel output power of each node for one component.
fn first_channel_power(filters: &[CMat], component: &CMat) -> Vec<f64> {
    filters
        .iter()
        .map(|w| {
            let out = linalg::adjoint_mul(&w.columns(0, 1).into_owned(), component);
            out.iter().map(|z| z.norm_sqr()).sum()
        })
        .collect()
}

fn mean_db(desired: &[f64], residual: &[f64]) -> f64 {
    desired
        .iter()
        .zip(residual)
        .map(|(d, r)| metrics::snr_db(*d, *r))
        .sum::<f64>()
        / desired.len() as f64
}

/// Run a specification and return the per-frame report.
pub fn run(spec: &RunSpec) -> Result<RunReport> {
    let cfg = spec.scene_config()?;
    let algorithms = spec.algorithm_list(&cfg)?;
    match spec.domain {
        Domain::Time => run_time(spec, &cfg, &algorithms),
        Domain::Wola => run_wola(spec, &cfg, &algorithms),
    }
}

fn run_time(spec: &RunSpec, cfg: &SceneConfig, algorithms: &[Algorithm]) -> Result<RunReport> {
    let scene = generate_scene(cfg)?.with_schedule(spec.activity_schedule()?);
    let layout = scene.layout().clone();
    let targets = scene.targets().to_vec();
    let scms = scene.true_scms();
    let reference = centralized_filters(&scms, &targets)?;
    let k_nodes = layout.nodes();

    let mut exact = Vec::new();
    let mut online = Vec::new();
    for alg in algorithms {
        match spec.scm_mode {
            ScmMode::True => exact.push(ExactRunner::new(*alg, &scms, &targets)?),
            ScmMode::Online => online.push(alg.online(&layout, &targets, spec.forgetting_factor)?),
        }
    }

    let mut report = RunReport {
        config: spec.to_json(),
        seed: cfg.seed,
        ..Default::default()
    };
    let mut pd_in = vec![0.0; k_nodes];
    let mut pn_in = vec![0.0; k_nodes];
    let mut pd_out = vec![vec![0.0; k_nodes]; algorithms.len()];
    let mut pn_out = vec![vec![0.0; k_nodes]; algorithms.len()];

    for l in 0..cfg.frames {
        let frame = scene.frame(l);
        let (full, desired, noise) = (frame.full(), frame.desired(), frame.noise());
        let truth: Vec<CMat> = (0..k_nodes).map(|k| scene.target(&frame, k)).collect();
        let counted = l >= spec.warmup_frames;
        for k in 0..k_nodes {
            let r = layout.offset(k);
            if counted {
                pd_in[k] += desired.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>();
                pn_in[k] += noise.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        let observed = (spec.scm_mode == ScmMode::Online).then(|| frame.observed());
        for (a, alg) in algorithms.iter().enumerate() {
            let filters = match spec.scm_mode {
                ScmMode::True => exact[a].next(&scms)?,
                ScmMode::Online => {
                    let y = observed.as_ref().expect("observed frame");
                    online[a].process(y, Some(frame.label))?.network_wide
                }
            };
            let estimates: Vec<CMat> = filters.iter().map(|w| linalg::adjoint_mul(w, &full)).collect();
            let pd = first_channel_power(&filters, &desired);
            let pn = first_channel_power(&filters, &noise);
            for k in 0..k_nodes {
                if counted {
                    pd_out[a][k] += pd[k];
                    pn_out[a][k] += pn[k];
                }
            }
            report.rows.push(ReportRow {
                frame: l,
                algorithm: alg.label(),
                mse_d: metrics::mse_d(&estimates, &truth)?,
                snr_db: mean_db(&pd, &pn),
                filter_gap: max_gap(&filters, &reference),
            });
        }
    }

    report.snr_before = pd_in.iter().zip(&pn_in).map(|(d, n)| metrics::snr_db(*d, *n)).collect();
    for (a, alg) in algorithms.iter().enumerate() {
        let per_node = pd_out[a].iter().zip(&pn_out[a]).map(|(d, n)| metrics::snr_db(*d, *n)).collect();
        report.snr_after.insert(alg.label(), per_node);
    }
    Ok(report)
}

fn run_wola(spec: &RunSpec, cfg: &SceneConfig, algorithms: &[Algorithm]) -> Result<RunReport> {
    let wcfg = spec.wola.config();
    let params = spec.wola.params()?;
    let signals = generate_anechoic(cfg, &params, spec.activity_schedule()?)?;
    let layout = signals.layout.clone();
    let k_nodes = layout.nodes();
    let j = cfg.target_channels;
    let targets = layout
        .sizes()
        .iter()
        .map(|&m| SelectionMatrix::first(m, j))
        .collect::<Result<Vec<_>>>()?;

    let observed = wola::analyze(&signals.observed, &wcfg)?;
    let desired = wola::analyze(&signals.desired, &wcfg)?;
    let noise = wola::analyze(&signals.noise, &wcfg)?;
    let frames = observed.frames().min(spec.frames);
    let bins = wcfg.bins();
    let (l_len, hop) = (wcfg.frame_len, wcfg.hop());
    let labels: Vec<_> = (0..frames).map(|l| signals.window_label(l * hop, l_len)).collect();

    let n_alg = algorithms.len();
    let central_idx = algorithms.iter().position(|a| *a == Algorithm::Centralized);
    let mut mse = vec![vec![0.0; frames]; n_alg];
    let mut gap = vec![vec![0.0; frames]; n_alg];
    // per algorithm, node, frame: first-channel output power summed over bins
    let mut pd = vec![vec![vec![0.0; frames]; k_nodes]; n_alg];
    let mut pn = vec![vec![vec![0.0; frames]; k_nodes]; n_alg];
    let empty = || Stft {
        config: wcfg.clone(),
        bins: vec![CMat::zeros(1, frames); bins],
    };
    let mut out_desired: Vec<Vec<Stft>> = (0..n_alg).map(|_| (0..k_nodes).map(|_| empty()).collect()).collect();
    let mut out_noise = out_desired.clone();

    let bin_scms = match spec.scm_mode {
        ScmMode::True => Some(signals.bin_scms(&wcfg)?),
        ScmMode::Online => None,
    };

    for f in 0..bins {
        let scms = bin_scms.as_ref().map(|all| &all[f]);
        let mut runners = algorithms
            .iter()
            .map(|a| BinRunner::new(*a, scms, &layout, &targets, spec.forgetting_factor))
            .collect::<Result<Vec<_>>>()?;
        let mut hidden_reference = match central_idx {
            Some(_) => None,
            None => Some(BinRunner::new(
                Algorithm::Centralized,
                scms,
                &layout,
                &targets,
                spec.forgetting_factor,
            )?),
        };
        for l in 0..frames {
            let y = observed.frame_vector(f, l);
            let dv = desired.frame_vector(f, l);
            let nv = noise.frame_vector(f, l);
            let full = &dv + &nv;
            let outputs = runners
                .iter_mut()
                .map(|r| r.filters(scms, &y, labels[l]))
                .collect::<Result<Vec<_>>>()?;
            let reference = match (&mut hidden_reference, central_idx) {
                (Some(r), _) => r.filters(scms, &y, labels[l])?,
                (None, Some(c)) => outputs[c].clone(),
                (None, None) => unreachable!(),
            };
            for (a, filters) in outputs.iter().enumerate() {
                gap[a][l] += max_gap(filters, &reference) / bins as f64;
                for (k, w) in filters.iter().enumerate() {
                    let est = linalg::adjoint_mul(w, &full);
                    let truth = targets[k].select_rows(&layout.node_rows(k, &dv));
                    mse[a][l] += (est - truth).norm_squared();
                    let od = linalg::adjoint_mul(w, &dv)[(0, 0)];
                    let on = linalg::adjoint_mul(w, &nv)[(0, 0)];
                    pd[a][k][l] += od.norm_sqr();
                    pn[a][k][l] += on.norm_sqr();
                    out_desired[a][k].bins[f][(0, l)] = od;
                    out_noise[a][k].bins[f][(0, l)] = on;
                }
            }
        }
    }

    let mut report = RunReport {
        config: spec.to_json(),
        seed: cfg.seed,
        ..Default::default()
    };
    let norm = (k_nodes * j * bins) as f64;
    for l in 0..frames {
        for (a, alg) in algorithms.iter().enumerate() {
            let d: Vec<f64> = (0..k_nodes).map(|k| pd[a][k][l]).collect();
            let n: Vec<f64> = (0..k_nodes).map(|k| pn[a][k][l]).collect();
            report.rows.push(ReportRow {
                frame: l,
                algorithm: alg.label(),
                mse_d: mse[a][l] / norm,
                snr_db: mean_db(&d, &n),
                filter_gap: gap[a][l],
            });
        }
    }

    // Broadband SNR on the resynthesized signals, away from the edges.
    let synth_len = (frames - 1) * hop + l_len;
    let interior = (spec.warmup_frames * hop).max(l_len)..synth_len.saturating_sub(l_len);
    if interior.is_empty() {
        return Err(Error::Config("WOLA run too short for a broadband SNR".into()));
    }
    let power = |x: &[f64]| x[interior.clone()].iter().map(|v| v * v).sum::<f64>();
    report.snr_before = (0..k_nodes)
        .map(|k| {
            let r = layout.offset(k);
            let d: Vec<f64> = signals.desired.row(r).iter().cloned().collect();
            let n: Vec<f64> = signals.noise.row(r).iter().cloned().collect();
            metrics::snr_db(power(&d), power(&n))
        })
        .collect();
    for (a, alg) in algorithms.iter().enumerate() {
        let per_node = (0..k_nodes)
            .map(|k| {
                let d = wola::synthesize(&out_desired[a][k])?;
                let n = wola::synthesize(&out_noise[a][k])?;
                let d: Vec<f64> = d.row(0).iter().cloned().collect();
                let n: Vec<f64> = n.row(0).iter().cloned().collect();
                Ok(metrics::snr_db(power(&d), power(&n)))
            })
            .collect::<Result<Vec<f64>>>()?;
        report.snr_after.insert(alg.label(), per_node);
    }
    Ok(report)
}

/// Summary CSV: mean output SNR per algorithm, plus the unprocessed input.
pub fn summary_csv(report: &RunReport) -> String {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mut out = String::from("algorithm,snr_db\n");
    out.push_str(&format!("unprocessed,{}\n", mean(&report.snr_before)));
    for alg in report.algorithms() {
        if let Some(v) = report.snr_after.get(&alg) {
            out.push_str(&format!("{alg},{}\n", mean(v)));
        }
    }
    out
}

/// Run and write `<csv>` and `<name>_summary.csv` into `out_dir`.
pub fn run_to_dir(spec: &RunSpec, out_dir: &Path) -> Result<(RunReport, Vec<PathBuf>)> {
    let report = run(spec)?;
    fs::create_dir_all(out_dir)?;
    let csv = out_dir.join(spec.csv_name());
    report.write_csv(std::io::BufWriter::new(fs::File::create(&csv)?))?;
    let summary = out_dir.join(format!("{}_summary.csv", spec.name));
    fs::write(&summary, summary_csv(&report))?;
    Ok((report, vec![csv, summary]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthRow {
    pub algorithm: String,
    /// Channels each node sends per cycle (raw sensors for centralized).
    pub channels_per_node: usize,
    /// Cycles needed to get within the tolerance of the centralized MSE.
    pub cycles: usize,
    /// `channels_per_node * max(cycles, 1)`; raw streaming counts as one cycle.
    pub channel_cycles: usize,
    pub reached: bool,
    /// Final network MSE relative to centralized, in dB.
    pub mse_gap_db: f64,
}

pub const BANDWIDTH_HEADER: &str = "algorithm,channels_per_node,cycles,channel_cycles,reached,mse_gap_db";

fn network_mse(filters: &[CMat], scms: &ScmSet, targets: &[SelectionMatrix]) -> f64 {
    filters
        .iter()
        .enumerate()
        .map(|(k, w)| metrics::expected_mse(w, scms, &targets[k].network(&scms.layout, k)))
        .sum::<f64>()
        / filters.len() as f64
}

/// Communication needed by each algorithm to come within
/// `bandwidth_delta_db` of the centralized MSE, from exact SCMs.
pub fn compare_bandwidth(spec: &RunSpec) -> Result<Vec<BandwidthRow>> {
    let cfg = spec.scene_config()?;
    let algorithms = spec.algorithm_list(&cfg)?;
    let scene = generate_scene(&cfg)?;
    let scms = scene.true_scms();
    let targets = scene.targets().to_vec();
    let k_nodes = scene.layout().nodes();
    let optimum = network_mse(&centralized_filters(&scms, &targets)?, &scms, &targets);
    let gap_db = |m: f64| 10.0 * (m / optimum).log10();
    let within = |m: f64| gap_db(m) <= spec.bandwidth_delta_db;
    let max_m = cfg.sensors.iter().cloned().max().unwrap_or(0);

    let mut rows = Vec::new();
    for alg in algorithms {
        let (channels, cycles, final_mse, reached) = match alg {
            Algorithm::Centralized | Algorithm::Local | Algorithm::Idanse { .. } => {
                let filters = match ExactRunner::new(alg, &scms, &targets)? {
                    ExactRunner::Fixed(w) => w,
                    ExactRunner::Danse(_) => unreachable!(),
                };
                let m = network_mse(&filters, &scms, &targets);
                match alg {
                    Algorithm::Centralized => (max_m, 0, m, true),
                    Algorithm::Local => (0, 0, m, within(m)),
                    Algorithm::Idanse { fused } => (fused, 1, m, within(m)),
                    Algorithm::Danse { .. } => unreachable!(),
                }
            }
            Algorithm::Danse { fused } => {
                let mut state = DanseState::new(scene.layout().clone(), targets.clone(), fused)?;
                let mut cycles = 0;
                let mut m = f64::INFINITY;
                while cycles < spec.max_cycles {
                    for _ in 0..k_nodes {
                        state.step_true(&scms)?;
                    }
                    cycles += 1;
                    let filters: Vec<CMat> = (0..k_nodes).map(|k| state.network_wide(k)).collect();
                    m = network_mse(&filters, &scms, &targets);
                    if within(m) {
                        break;
                    }
                }
                (fused, cycles, m, within(m))
            }
        };
        rows.push(BandwidthRow {
            algorithm: alg.label(),
            channels_per_node: channels,
            cycles,
            channel_cycles: channels * cycles.max(1),
            reached,
            mse_gap_db: gap_db(final_mse),
        });
    }
    Ok(rows)
}

pub fn bandwidth_csv(rows: &[BandwidthRow]) -> String {
    let mut out = format!("{BANDWIDTH_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.algorithm, r.channels_per_node, r.cycles, r.channel_cycles, r.reached, r.mse_gap_db
        ));
    }
    out
}

/// Write the observed, desired and noise signals of the spec's WOLA scene as
/// float WAV files (channels ordered node by node).
pub fn export_wav(spec: &RunSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = spec.scene_config()?;
    let signals = generate_anechoic(&cfg, &spec.wola.params()?, spec.activity_schedule()?)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (suffix, data) in [
        ("observed", &signals.observed),
        ("desired", &signals.desired),
        ("noise", &signals.noise),
    ] {
        let path = out_dir.join(format!("{}_{suffix}.wav", spec.name));
        wola::write_wav(&path, data, spec.wola.sample_rate)?;
        written.push(path);
    }
    Ok(written)
}
