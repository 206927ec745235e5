//! Synthetic scenes following the latent-subspace sensor model.
//!
//! Every sensor signal is a sum of four contributions: global desired
//! sources seen by all nodes, local desired sources seen by one node, global
//! noise sources, and local noise (local noise sources plus sensor noise).
//! Steering matrices are drawn once per scene; latent samples are drawn per
//! frame from a counter-based generator keyed by `(seed, frame index)`, so
//! any frame can be regenerated independently and in any order.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, ONE, ZERO};
use crate::scm::{Provenance, ScmSet};

pub mod anechoic;

/// Channel bookkeeping for the stacked network vector `y = [y_1; ...; y_K]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl NodeLayout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &m in &sizes {
            offsets.push(acc);
            acc += m;
        }
        Self { sizes, offsets }
    }

    pub fn nodes(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sizes[k]
    }

    /// Rows of node `k` from a network-level `M x n` matrix.
    pub fn node_rows(&self, k: usize, x: &CMat) -> CMat {
        x.rows(self.offset(k), self.size(k)).into_owned()
    }

    /// Diagonal block `(k, k)` of a network-level `M x M` matrix.
    pub fn node_block(&self, k: usize, r: &CMat) -> CMat {
        let (o, m) = (self.offset(k), self.size(k));
        r.view((o, o), (m, m)).into_owned()
    }
}

/// Selection of `J` target channels out of a node's `M_k` sensors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMatrix {
    node_dim: usize,
    channels: Vec<usize>,
}

impl SelectionMatrix {
    pub fn new(node_dim: usize, channels: Vec<usize>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("selection needs at least one channel".into()));
        }
        if channels.len() > node_dim {
            return Err(Error::Config(format!(
                "cannot select {} channels out of {}",
                channels.len(),
                node_dim
            )));
        }
        for (i, &c) in channels.iter().enumerate() {
            if c >= node_dim {
                return Err(Error::Config(format!("channel {c} out of range {node_dim}")));
            }
            if channels[..i].contains(&c) {
                return Err(Error::Config(format!("channel {c} selected twice")));
            }
        }
        Ok(Self { node_dim, channels })
    }

    /// The first `width` channels of the node.
    pub fn first(node_dim: usize, width: usize) -> Result<Self> {
        Self::new(node_dim, (0..width).collect())
    }

    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// Keep the first `width` selected channels.
    pub fn truncated(&self, width: usize) -> Result<Self> {
        Self::new(self.node_dim, self.channels.iter().take(width).cloned().collect())
    }

    /// `E_kk`, `M_k x J`.
    pub fn local(&self) -> CMat {
        let mut e = CMat::zeros(self.node_dim, self.width());
        for (col, &row) in self.channels.iter().enumerate() {
            e[(row, col)] = ONE;
        }
        e
    }

    /// `E_k`, the `M x J` network-level extension for node `k`.
    pub fn network(&self, layout: &NodeLayout, k: usize) -> CMat {
        self.embedded(layout.total(), layout.offset(k))
    }

    /// Selection placed at row `offset` of a `dim`-row matrix.
    pub fn embedded(&self, dim: usize, offset: usize) -> CMat {
        let mut e = CMat::zeros(dim, self.width());
        for (col, &row) in self.channels.iter().enumerate() {
            e[(offset + row, col)] = ONE;
        }
        e
    }

    /// `E^T x` for a node-level `M_k x n` matrix.
    pub fn select_rows(&self, x: &CMat) -> CMat {
        CMat::from_fn(self.width(), x.ncols(), |i, j| x[(self.channels[i], j)])
    }
}

/// Oracle voice-activity label of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activity {
    /// Every source and the sensor noise are active.
    AllActive,
    /// Only the global sources (desired and noise) are active.
    GlobalOnly,
    /// Desired sources are silent; all noise is active.
    NoiseOnly,
}

impl Activity {
    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Activity::AllActive),
            'G' => Some(Activity::GlobalOnly),
            'N' => Some(Activity::NoiseOnly),
            _ => None,
        }
    }
}

/// Deterministic cyclic pattern of frame labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivitySchedule {
    pattern: Vec<Activity>,
}

impl ActivitySchedule {
    pub fn cyclic(pattern: Vec<Activity>) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::Config("empty activity pattern".into()));
        }
        Ok(Self { pattern })
    }

    pub fn all_active() -> Self {
        Self {
            pattern: vec![Activity::AllActive],
        }
    }

    /// Parse a pattern such as `"AGN"` (all-active, global-only, noise-only).
    pub fn parse(text: &str) -> Result<Self> {
        let pattern = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| {
                Activity::from_char(c)
                    .ok_or_else(|| Error::Config(format!("unknown activity label `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::cyclic(pattern)
    }

    pub fn label(&self, frame: usize) -> Activity {
        self.pattern[frame % self.pattern.len()]
    }

    pub fn pattern(&self) -> &[Activity] {
        &self.pattern
    }
}

impl Default for ActivitySchedule {
    fn default() -> Self {
        Self {
            pattern: vec![Activity::AllActive, Activity::GlobalOnly, Activity::NoiseOnly],
        }
    }
}

/// Parameters of a synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Sensors per node, one entry per node.
    pub sensors: Vec<usize>,
    pub global_desired: usize,
    /// Local desired sources per node.
    pub local_desired: Vec<usize>,
    pub global_noise: usize,
    /// Local noise sources per node (sensor noise comes on top).
    pub local_noise: Vec<usize>,
    /// Target channels `J` estimated at every node.
    pub target_channels: usize,
    pub target_snr_db: f64,
    /// Sensor-noise power as a fraction of each node's first-sensor power.
    pub sensor_noise_frac: f64,
    pub seed: u64,
    /// Samples per frame (`B`).
    pub frame_len: usize,
    pub frames: usize,
}

impl SceneConfig {
    /// Identical nodes.
    pub fn uniform(
        nodes: usize,
        sensors: usize,
        global_desired: usize,
        local_desired: usize,
        global_noise: usize,
        local_noise: usize,
        target_channels: usize,
    ) -> Self {
        Self {
            sensors: vec![sensors; nodes],
            global_desired,
            local_desired: vec![local_desired; nodes],
            global_noise,
            local_noise: vec![local_noise; nodes],
            target_channels,
            target_snr_db: 0.0,
            sensor_noise_frac: 0.1,
            seed: 0,
            frame_len: 250,
            frames: 100,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn nodes(&self) -> usize {
        self.sensors.len()
    }

    pub fn total_sensors(&self) -> usize {
        self.sensors.iter().sum()
    }

    pub fn total_local_desired(&self) -> usize {
        self.local_desired.iter().sum()
    }

    pub fn total_local_noise(&self) -> usize {
        self.local_noise.iter().sum()
    }

    pub fn max_local_desired(&self) -> usize {
        self.local_desired.iter().cloned().max().unwrap_or(0)
    }

    /// `J >= S + N` over the global sources: the one-shot optimality regime.
    pub fn theorem1_regime(&self) -> bool {
        self.target_channels >= self.global_desired + self.global_noise
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.nodes();
        if k == 0 {
            return Err(Error::Config("at least one node is required".into()));
        }
        if self.local_desired.len() != k || self.local_noise.len() != k {
            return Err(Error::Config(format!(
                "per-node source lists must have {k} entries (got {} and {})",
                self.local_desired.len(),
                self.local_noise.len()
            )));
        }
        if self.target_channels == 0 {
            return Err(Error::Config("target channel count J must be >= 1".into()));
        }
        let min_m = self.sensors.iter().cloned().min().unwrap_or(0);
        if self.target_channels > min_m {
            return Err(Error::Config(format!(
                "J = {} exceeds the smallest node size {min_m}",
                self.target_channels
            )));
        }
        if self.frame_len == 0 {
            return Err(Error::Config("frame length must be >= 1".into()));
        }
        if !self.target_snr_db.is_finite() {
            return Err(Error::Config("target SNR must be finite".into()));
        }
        if !(self.sensor_noise_frac >= 0.0) || !self.sensor_noise_frac.is_finite() {
            return Err(Error::Config("sensor noise fraction must be >= 0".into()));
        }
        Ok(())
    }
}

/// Latent source samples of one frame; rows are sources, columns samples.
#[derive(Clone, Debug)]
pub struct Latents {
    pub global_desired: CMat,
    pub local_desired: CMat,
    pub global_noise: CMat,
    pub local_noise: CMat,
    pub sensor_noise: CMat,
}

/// One frame of sensor signals, split by contribution (all sources active).
#[derive(Clone, Debug)]
pub struct SceneFrame {
    pub index: usize,
    pub label: Activity,
    pub latents: Latents,
    pub global_desired: CMat,
    pub local_desired: CMat,
    pub global_noise: CMat,
    /// Local noise sources plus sensor noise.
    pub local_noise: CMat,
}

impl SceneFrame {
    pub fn desired(&self) -> CMat {
        &self.global_desired + &self.local_desired
    }

    pub fn noise(&self) -> CMat {
        &self.global_noise + &self.local_noise
    }

    /// All contributions, regardless of the frame label.
    pub fn full(&self) -> CMat {
        self.desired() + self.noise()
    }

    /// Global component `s_glob + n_glob`.
    pub fn global_component(&self) -> CMat {
        &self.global_desired + &self.global_noise
    }

    /// What the sensors record under the frame's activity label.
    pub fn observed(&self) -> CMat {
        match self.label {
            Activity::AllActive => self.full(),
            Activity::GlobalOnly => self.global_component(),
            Activity::NoiseOnly => self.noise(),
        }
    }

    pub fn samples(&self) -> usize {
        self.global_desired.ncols()
    }
}

/// A generated scene: steering matrices, noise levels and the frame source.
#[derive(Clone, Debug)]
pub struct Scene {
    config: SceneConfig,
    layout: NodeLayout,
    global_desired: CMat,
    local_desired: Vec<CMat>,
    global_noise: CMat,
    local_noise: Vec<CMat>,
    sensor_noise_var: Vec<f64>,
    desired_scale: C64,
    schedule: ActivitySchedule,
    targets: Vec<SelectionMatrix>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circularly-symmetric complex standard normal entries.
fn complex_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    })
}

fn row_power(m: &CMat, row: usize) -> f64 {
    m.row(row).iter().map(|z| z.norm_sqr()).sum()
}

/// Generate a scene; deterministic in `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let layout = NodeLayout::new(config.sensors.clone());
    let k_nodes = layout.nodes();
    let m = layout.total();

    let mut rng = stream_rng(config.seed, 0);
    let global_desired = complex_normal(&mut rng, m, config.global_desired);
    let local_desired: Vec<CMat> = (0..k_nodes)
        .map(|k| complex_normal(&mut rng, layout.size(k), config.local_desired[k]))
        .collect();
    let mut global_noise = complex_normal(&mut rng, m, config.global_noise);
    let mut local_noise: Vec<CMat> = (0..k_nodes)
        .map(|k| complex_normal(&mut rng, layout.size(k), config.local_noise[k]))
        .collect();

    let snr = 10f64.powf(config.target_snr_db / 10.0);
    let frac = config.sensor_noise_frac;
    let mut sensor_noise_var = vec![0.0; k_nodes];
    for k in 0..k_nodes {
        let o = layout.offset(k);
        let mk = layout.size(k);
        let desired_at = |r: usize| row_power(&global_desired, o + r) + row_power(&local_desired[k], r);
        let noise_at = |r: usize| row_power(&global_noise, o + r) + row_power(&local_noise[k], r);
        let desired_avg = (0..mk).map(desired_at).sum::<f64>() / mk as f64;
        let noise_avg = (0..mk).map(noise_at).sum::<f64>() / mk as f64;
        let (d1, n1) = (desired_at(0), noise_at(0));

        // Solve desired_avg / (g^2 noise_avg + frac (d1 + g^2 n1)) = snr for g^2.
        let denom = noise_avg + frac * n1;
        let mut gain_sq = 1.0;
        if denom > 0.0 && desired_avg > 0.0 {
            let numer = desired_avg / snr - frac * d1;
            if numer <= 0.0 {
                return Err(Error::Config(format!(
                    "node {k}: target SNR {} dB unreachable with sensor noise fraction {frac}",
                    config.target_snr_db
                )));
            }
            gain_sq = numer / denom;
        }
        let gain = C64::new(gain_sq.sqrt(), 0.0);
        for r in 0..mk {
            for c in 0..global_noise.ncols() {
                global_noise[(o + r, c)] *= gain;
            }
        }
        local_noise[k] *= gain;
        sensor_noise_var[k] = frac * (d1 + gain_sq * n1);
    }

    let targets = (0..k_nodes)
        .map(|k| SelectionMatrix::first(layout.size(k), config.target_channels))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        config: config.clone(),
        layout,
        global_desired,
        local_desired,
        global_noise,
        local_noise,
        sensor_noise_var,
        desired_scale: ONE,
        schedule: ActivitySchedule::default(),
        targets,
    })
}

fn block_diagonal(layout: &NodeLayout, blocks: &[CMat]) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(layout.total(), cols);
    let mut c0 = 0;
    for (k, b) in blocks.iter().enumerate() {
        out.view_mut((layout.offset(k), c0), (b.nrows(), b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

impl Scene {
    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn targets(&self) -> &[SelectionMatrix] {
        &self.targets
    }

    pub fn schedule(&self) -> &ActivitySchedule {
        &self.schedule
    }

    pub fn with_schedule(mut self, schedule: ActivitySchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Multiply every desired latent stream by `c`.
    pub fn with_desired_scale(mut self, c: C64) -> Self {
        self.desired_scale = c;
        self
    }

    /// `A_glob`, `M x S_glob`.
    pub fn global_desired_steering(&self) -> &CMat {
        &self.global_desired
    }

    /// Per-node non-zero blocks `A'_k` of the local desired steering matrix.
    pub fn local_desired_blocks(&self) -> &[CMat] {
        &self.local_desired
    }

    /// Block-diagonal `M x S_loc` local desired steering matrix.
    pub fn local_desired_steering(&self) -> CMat {
        block_diagonal(&self.layout, &self.local_desired)
    }

    pub fn global_noise_steering(&self) -> &CMat {
        &self.global_noise
    }

    pub fn local_noise_blocks(&self) -> &[CMat] {
        &self.local_noise
    }

    pub fn local_noise_steering(&self) -> CMat {
        block_diagonal(&self.layout, &self.local_noise)
    }

    /// Sensor-noise variance per node (same on every sensor of a node).
    pub fn sensor_noise_var(&self) -> &[f64] {
        &self.sensor_noise_var
    }

    fn sensor_noise_diag(&self) -> Vec<f64> {
        (0..self.layout.nodes())
            .flat_map(|k| std::iter::repeat(self.sensor_noise_var[k]).take(self.layout.size(k)))
            .collect()
    }

    /// Generate frame `index` (`B` samples). Any frame can be generated in
    /// isolation; the result only depends on the seed and the index.
    pub fn frame(&self, index: usize) -> SceneFrame {
        let b = self.config.frame_len;
        let layout = &self.layout;
        let mut rng = stream_rng(self.config.seed, index as u64 + 1);

        let mut s_glob = complex_normal(&mut rng, self.config.global_desired, b);
        let mut s_loc = complex_normal(&mut rng, self.config.total_local_desired(), b);
        s_glob *= self.desired_scale;
        s_loc *= self.desired_scale;
        let n_glob = complex_normal(&mut rng, self.config.global_noise, b);
        let n_loc = complex_normal(&mut rng, self.config.total_local_noise(), b);
        let mut sensor = complex_normal(&mut rng, layout.total(), b);
        for (row, var) in self.sensor_noise_diag().into_iter().enumerate() {
            let sd = var.sqrt();
            for c in 0..b {
                sensor[(row, c)] *= sd;
            }
        }

        let global_desired = linalg::matmul(&self.global_desired, &s_glob);
        let global_noise = linalg::matmul(&self.global_noise, &n_glob);
        let local_desired = self.apply_blocks(&self.local_desired, &s_loc);
        let local_noise = self.apply_blocks(&self.local_noise, &n_loc) + &sensor;

        SceneFrame {
            index,
            label: self.schedule.label(index),
            latents: Latents {
                global_desired: s_glob,
                local_desired: s_loc,
                global_noise: n_glob,
                local_noise: n_loc,
                sensor_noise: sensor,
            },
            global_desired,
            local_desired,
            global_noise,
            local_noise,
        }
    }

    /// Block-diagonal steering times stacked per-node latents.
    fn apply_blocks(&self, blocks: &[CMat], latents: &CMat) -> CMat {
        let b = latents.ncols();
        let mut out = CMat::from_element(self.layout.total(), b, ZERO);
        let mut src = 0;
        for (k, block) in blocks.iter().enumerate() {
            let n_src = block.ncols();
            if n_src > 0 {
                let lat = latents.rows(src, n_src).into_owned();
                let part = linalg::matmul(block, &lat);
                out.rows_mut(self.layout.offset(k), self.layout.size(k)).copy_from(&part);
            }
            src += n_src;
        }
        out
    }

    /// Target `d_k = E_kk^T s_k` (`J x B`) of node `k` for a frame.
    pub fn target(&self, frame: &SceneFrame, k: usize) -> CMat {
        let s_k = self.layout.node_rows(k, &frame.desired());
        self.targets[k].select_rows(&s_k)
    }

    /// Exact SCMs implied by the steering matrices and latent powers.
    pub fn true_scms(&self) -> ScmSet {
        let p_desired = self.desired_scale.norm_sqr();
        let a_loc = self.local_desired_steering();
        let b_loc = self.local_noise_steering();
        let mut rss = (&self.global_desired * self.global_desired.adjoint() + &a_loc * a_loc.adjoint())
            * C64::new(p_desired, 0.0);
        let mut rnn = &self.global_noise * self.global_noise.adjoint() + &b_loc * b_loc.adjoint();
        for (i, var) in self.sensor_noise_diag().into_iter().enumerate() {
            rnn[(i, i)] += C64::new(var, 0.0);
        }
        linalg::hermitize(&mut rss);
        linalg::hermitize(&mut rnn);
        let ryy = &rss + &rnn;

        let global = (0..self.layout.nodes())
            .map(|k| {
                let a = self.layout.node_rows(k, &self.global_desired);
                let bn = self.layout.node_rows(k, &self.global_noise);
                let mut r = &a * a.adjoint() * C64::new(p_desired, 0.0) + &bn * bn.adjoint();
                linalg::hermitize(&mut r);
                r
            })
            .collect();

        ScmSet {
            layout: self.layout.clone(),
            ryy,
            rnn,
            rss,
            global,
            provenance: Provenance::True,
        }
    }

    /// Average desired-to-noise power ratio over the sensors of node `k`.
    pub fn node_snr_db(&self, k: usize) -> f64 {
        let scms = self.true_scms();
        let rss = self.layout.node_block(k, &scms.rss);
        let rnn = self.layout.node_block(k, &scms.rnn);
        10.0 * (linalg::trace_re(&rss) / linalg::trace_re(&rnn)).log10()
    }
}

/// Free-function form of [`Scene::true_scms`].
pub fn true_scms(scene: &Scene) -> ScmSet {
    scene.true_scms()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn large_config() -> SceneConfig {
        SceneConfig::uniform(10, 8, 1, 5, 1, 3, 6).with_seed(11)
    }

    #[test]
    fn large_config_dimensions() {
        let scene = generate_scene(&large_config()).unwrap();
        assert_eq!(scene.layout().total(), 80);
        assert_eq!(scene.local_desired_steering().ncols(), 50);
        assert_eq!(scene.global_desired_steering().shape(), (80, 1));
        assert_eq!(scene.local_noise_steering().ncols(), 30);
    }

    #[test]
    fn local_steering_is_block_sparse() {
        for seed in 0..5 {
            let cfg = SceneConfig {
                sensors: vec![3, 4, 2],
                local_desired: vec![2, 0, 3],
                ..SceneConfig::uniform(3, 3, 1, 1, 1, 1, 2).with_seed(seed)
            };
            let scene = generate_scene(&cfg).unwrap();
            let a = scene.local_desired_steering();
            let layout = scene.layout();
            let mut col0 = 0;
            for k in 0..3 {
                let cols = col0..col0 + cfg.local_desired[k];
                for r in 0..layout.total() {
                    for c in 0..a.ncols() {
                        let inside = layout.range(k).contains(&r) && cols.contains(&c);
                        if !inside && cols.contains(&c) {
                            assert_eq!(a[(r, c)], ZERO);
                        }
                    }
                }
                col0 += cfg.local_desired[k];
            }
        }
    }

    #[test]
    fn per_node_snr_hits_target() {
        for snr in [-5.0, 0.0, 7.5] {
            let cfg = SceneConfig {
                target_snr_db: snr,
                ..large_config()
            };
            let scene = generate_scene(&cfg).unwrap();
            for k in 0..cfg.nodes() {
                assert!((scene.node_snr_db(k) - snr).abs() < 0.5, "node {k}");
            }
        }
    }

    #[test]
    fn sensor_noise_is_fraction_of_first_sensor_power() {
        let scene = generate_scene(&large_config()).unwrap();
        let scms = scene.true_scms();
        for k in 0..scene.layout().nodes() {
            let first = scene.layout().offset(k);
            let source_power = scms.ryy[(first, first)].re - scene.sensor_noise_var()[k];
            assert!((scene.sensor_noise_var()[k] - 0.1 * source_power).abs() < 1e-12 * source_power);
        }
    }

    #[test]
    fn single_node_degenerate_scene() {
        let cfg = SceneConfig::uniform(1, 3, 1, 0, 0, 0, 1).with_seed(2);
        let scene = generate_scene(&cfg).unwrap();
        let f = scene.frame(0);
        assert_eq!(f.local_desired.norm(), 0.0);
        assert_eq!(f.global_noise.norm(), 0.0);
        let expected = linalg::matmul(scene.global_desired_steering(), &f.latents.global_desired)
            + &f.latents.sensor_noise;
        assert!(linalg::rel_frobenius(&f.full(), &expected) < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&large_config()).unwrap();
        let b = generate_scene(&large_config()).unwrap();
        assert_eq!(a.global_desired_steering(), b.global_desired_steering());
        assert_eq!(a.local_noise_steering(), b.local_noise_steering());
        assert_eq!(a.frame(7).full(), b.frame(7).full());
        // frames are independent of generation order
        let _ = a.frame(3);
        assert_eq!(a.frame(7).latents.sensor_noise, b.frame(7).latents.sensor_noise);
    }

    #[test]
    fn frame_satisfies_stacked_model_exactly() {
        let cfg = SceneConfig::uniform(3, 4, 1, 2, 1, 1, 2).with_seed(5);
        let scene = generate_scene(&cfg).unwrap();
        let f = scene.frame(2);
        let y = &scene.global_desired * &f.latents.global_desired
            + scene.local_desired_steering() * &f.latents.local_desired
            + &scene.global_noise * &f.latents.global_noise
            + scene.local_noise_steering() * &f.latents.local_noise
            + &f.latents.sensor_noise;
        assert!(linalg::rel_frobenius(&f.full(), &y) < 1e-14);
    }

    #[test]
    fn oversized_target_is_rejected() {
        let cfg = SceneConfig::uniform(2, 2, 1, 0, 0, 0, 3);
        assert!(matches!(generate_scene(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn true_scm_two_sensor_example() {
        // A = [1; 0], unit latent, sensor noise 0.1 on both sensors.
        let cfg = SceneConfig::uniform(1, 2, 1, 0, 0, 0, 1);
        let mut scene = generate_scene(&cfg).unwrap();
        scene.global_desired = CMat::from_column_slice(2, 1, &[ONE, ZERO]);
        scene.sensor_noise_var = vec![0.1];
        let r = scene.true_scms().ryy;
        let expected = CMat::from_row_slice(
            2,
            2,
            &[C64::new(1.1, 0.0), ZERO, ZERO, C64::new(0.1, 0.0)],
        );
        assert!(linalg::rel_frobenius(&r, &expected) < 1e-15);
    }

    #[test]
    fn true_scms_decompose_exactly() {
        let scene = generate_scene(&SceneConfig::uniform(3, 4, 1, 2, 1, 1, 2).with_seed(1)).unwrap();
        let scms = scene.true_scms();
        assert!(linalg::rel_frobenius(&(&scms.ryy - &scms.rnn), &scms.rss) < 1e-15);
        for r in [&scms.ryy, &scms.rnn, &scms.rss] {
            assert_eq!(linalg::hermitian_defect(r), 0.0);
            let eig = nalgebra::SymmetricEigen::new(r.clone());
            assert!(eig.eigenvalues.min() > -1e-12 * r.norm());
        }
    }

    #[test]
    fn desired_scaling_only_touches_desired_scms() {
        let scene = generate_scene(&SceneConfig::uniform(2, 3, 1, 1, 1, 1, 1).with_seed(4)).unwrap();
        let base = scene.true_scms();
        let c = C64::new(0.6, -1.3);
        let scaled = scene.with_desired_scale(c).true_scms();
        let expected = &base.rss * C64::new(c.norm_sqr(), 0.0);
        assert!(linalg::rel_frobenius(&scaled.rss, &expected) < 1e-14);
        assert_eq!(scaled.rnn, base.rnn);
    }

    #[test]
    fn observed_frame_follows_label() {
        let scene = generate_scene(&SceneConfig::uniform(2, 2, 1, 1, 1, 1, 1).with_seed(3)).unwrap();
        let g = scene.frame(1);
        assert_eq!(g.label, Activity::GlobalOnly);
        assert_eq!(g.observed(), g.global_component());
        let n = scene.frame(2);
        assert_eq!(n.label, Activity::NoiseOnly);
        assert_eq!(n.observed(), n.noise());
    }

    #[test]
    fn schedule_parsing() {
        let s = ActivitySchedule::parse("AAGN").unwrap();
        assert_eq!(s.label(5), Activity::AllActive);
        assert_eq!(s.label(6), Activity::GlobalOnly);
        assert!(ActivitySchedule::parse("AX").is_err());
        assert!(ActivitySchedule::parse("").is_err());
    }

    #[test]
    fn selection_matrix_invariants() {
        let e = SelectionMatrix::new(4, vec![2, 0]).unwrap();
        let m = e.local();
        for c in 0..2 {
            assert_eq!(m.column(c).iter().filter(|z| **z == ONE).count(), 1);
        }
        assert!(SelectionMatrix::new(4, vec![1, 1]).is_err());
        assert!(SelectionMatrix::first(2, 3).is_err());
        let layout = NodeLayout::new(vec![2, 4]);
        let net = e.network(&layout, 1);
        assert_eq!(net[(4, 0)], ONE);
        assert_eq!(net[(2, 1)], ONE);
    }
}
