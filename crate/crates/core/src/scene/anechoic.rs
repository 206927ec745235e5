//! Real-valued time-domain scenes for the WOLA pipeline.
//!
//! Each source reaches each sensor in its footprint through a single path
//! with a random gain and an integer delay (no reverberation). Global sources
//! reach every sensor; local sources only the sensors of their node. Sources
//! are white Gaussian signals. Activity is switched per segment of samples
//! following the cyclic schedule, exactly like the frame labels of the
//! latent-model scene.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activity, ActivitySchedule, NodeLayout, SceneConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::scm::{Provenance, ScmSet};
use crate::wola::WolaConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnechoicParams {
    pub sample_rate: f64,
    pub samples: usize,
    /// Largest propagation delay in samples.
    pub max_delay: usize,
    /// Samples per activity segment.
    pub segment_len: usize,
}

impl Default for AnechoicParams {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            samples: 160_000,
            max_delay: 16,
            segment_len: 8 * 512,
        }
    }
}

/// One propagation path per sensor in the footprint of a source.
#[derive(Clone, Debug)]
struct SourcePaths {
    rows: Vec<usize>,
    gains: Vec<f64>,
    delays: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct AnechoicSignals {
    pub layout: NodeLayout,
    pub sample_rate: f64,
    /// What the sensors record under the activity schedule, `M x n`.
    pub observed: DMatrix<f64>,
    /// Desired contribution with all sources active.
    pub desired: DMatrix<f64>,
    /// Noise contribution (including sensor noise) with all sources active.
    pub noise: DMatrix<f64>,
    pub schedule: ActivitySchedule,
    pub segment_len: usize,
    paths: ScenePaths,
    sensor_var: Vec<f64>,
}

#[derive(Clone, Debug)]
struct ScenePaths {
    global_desired: Vec<SourcePaths>,
    local_desired: Vec<SourcePaths>,
    global_noise: Vec<SourcePaths>,
    local_noise: Vec<SourcePaths>,
}

impl AnechoicSignals {
    /// Activity label of sample `t`.
    pub fn label_at(&self, t: usize) -> Activity {
        self.schedule.label(t / self.segment_len)
    }

    /// Label of the window `[start, start + len)` if it lies in one segment.
    pub fn window_label(&self, start: usize, len: usize) -> Option<Activity> {
        let first = start / self.segment_len;
        let last = (start + len - 1) / self.segment_len;
        (first == last).then(|| self.schedule.label(first))
    }

    /// Exact per-bin SCMs of the analysis frames of `config`.
    ///
    /// Two delayed copies of a white source correlate through the window
    /// autocorrelation at their delay difference, so the cross term of rows
    /// with delays `t1`, `t2` at bin `f` is `g1 g2 r_w(t2 - t1) e^{j 2 pi f (t2 - t1) / L}`.
    pub fn bin_scms(&self, config: &WolaConfig) -> Result<Vec<ScmSet>> {
        config.validate()?;
        let window = config.window();
        let l = config.frame_len;
        let acf = |d: usize| -> f64 { (0..l - d).map(|n| window[n] * window[n + d]).sum() };
        let max_delay = self
            .paths
            .all()
            .flat_map(|p| p.delays.iter().copied())
            .max()
            .unwrap_or(0)
            .min(l - 1);
        let r_w: Vec<f64> = (0..=max_delay).map(acf).collect();
        let m = self.layout.total();

        let accumulate = |out: &mut CMat, paths: &[SourcePaths], f: usize, rows: Option<std::ops::Range<usize>>| {
            for p in paths {
                for (i, (&ri, (&gi, &ti))) in p.rows.iter().zip(p.gains.iter().zip(&p.delays)).enumerate() {
                    for (&rj, (&gj, &tj)) in p.rows.iter().zip(p.gains.iter().zip(&p.delays)).skip(i) {
                        let d = tj as i64 - ti as i64;
                        let phase = 2.0 * std::f64::consts::PI * (f as f64) * d as f64 / l as f64;
                        let v = C64::from_polar(gi * gj * r_w[d.unsigned_abs() as usize], phase);
                        let (a, b) = match &rows {
                            Some(r) if !(r.contains(&ri) && r.contains(&rj)) => continue,
                            Some(r) => (ri - r.start, rj - r.start),
                            None => (ri, rj),
                        };
                        out[(a, b)] += v;
                        if a != b {
                            out[(b, a)] += v.conj();
                        }
                    }
                }
            }
        };

        (0..config.bins())
            .map(|f| {
                let mut rss = CMat::zeros(m, m);
                accumulate(&mut rss, &self.paths.global_desired, f, None);
                accumulate(&mut rss, &self.paths.local_desired, f, None);
                let mut rnn = CMat::zeros(m, m);
                accumulate(&mut rnn, &self.paths.global_noise, f, None);
                accumulate(&mut rnn, &self.paths.local_noise, f, None);
                for (i, var) in self.sensor_var.iter().enumerate() {
                    rnn[(i, i)] += C64::new(var * r_w[0], 0.0);
                }
                linalg::hermitize(&mut rss);
                linalg::hermitize(&mut rnn);
                let global = (0..self.layout.nodes())
                    .map(|k| {
                        let range = self.layout.range(k);
                        let mut g = CMat::zeros(range.len(), range.len());
                        accumulate(&mut g, &self.paths.global_desired, f, Some(range.clone()));
                        accumulate(&mut g, &self.paths.global_noise, f, Some(range));
                        linalg::hermitize(&mut g);
                        g
                    })
                    .collect();
                Ok(ScmSet {
                    layout: self.layout.clone(),
                    ryy: &rss + &rnn,
                    rnn,
                    rss,
                    global,
                    provenance: Provenance::True,
                })
            })
            .collect()
    }
}

impl ScenePaths {
    fn all(&self) -> impl Iterator<Item = &SourcePaths> {
        self.global_desired
            .iter()
            .chain(&self.local_desired)
            .chain(&self.global_noise)
            .chain(&self.local_noise)
    }
}

fn draw_paths(rng: &mut ChaCha8Rng, rows: std::ops::Range<usize>, max_delay: usize) -> SourcePaths {
    let rows: Vec<usize> = rows.collect();
    let gains = rows.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let delays = rows.iter().map(|_| rng.random_range(0..=max_delay)).collect();
    SourcePaths { rows, gains, delays }
}

fn paths_power_at(paths: &[SourcePaths], row: usize) -> f64 {
    paths
        .iter()
        .flat_map(|p| p.rows.iter().zip(&p.gains))
        .filter(|(r, _)| **r == row)
        .map(|(_, g)| g * g)
        .sum()
}

fn render(out: &mut DMatrix<f64>, paths: &SourcePaths, source: &[f64], max_delay: usize) {
    let n = out.ncols();
    for ((&row, &gain), &delay) in paths.rows.iter().zip(&paths.gains).zip(&paths.delays) {
        let start = max_delay - delay;
        for t in 0..n {
            out[(row, t)] += gain * source[start + t];
        }
    }
}

fn white(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Generate the time-domain scene. Source counts, SNR target and sensor
/// noise fraction come from `config`; its frame fields are ignored.
pub fn generate_anechoic(
    config: &SceneConfig,
    params: &AnechoicParams,
    schedule: ActivitySchedule,
) -> Result<AnechoicSignals> {
    config.validate()?;
    if params.samples == 0 || params.segment_len == 0 {
        return Err(Error::Config("anechoic scene needs samples and a segment length".into()));
    }
    let layout = NodeLayout::new(config.sensors.clone());
    let m = layout.total();
    let k_nodes = layout.nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);

    let global_desired: Vec<SourcePaths> =
        (0..config.global_desired).map(|_| draw_paths(&mut rng, 0..m, params.max_delay)).collect();
    let mut local_desired = Vec::new();
    for k in 0..k_nodes {
        for _ in 0..config.local_desired[k] {
            local_desired.push(draw_paths(&mut rng, layout.range(k), params.max_delay));
        }
    }
    let mut global_noise: Vec<SourcePaths> =
        (0..config.global_noise).map(|_| draw_paths(&mut rng, 0..m, params.max_delay)).collect();
    let mut local_noise = Vec::new();
    for k in 0..k_nodes {
        for _ in 0..config.local_noise[k] {
            local_noise.push(draw_paths(&mut rng, layout.range(k), params.max_delay));
        }
    }

    // Per-node noise gains hitting the target SNR (same rule as the latent scene).
    let snr = 10f64.powf(config.target_snr_db / 10.0);
    let frac = config.sensor_noise_frac;
    let mut sensor_sd = vec![0.0; m];
    for k in 0..k_nodes {
        let range = layout.range(k);
        let desired_at = |r: usize| paths_power_at(&global_desired, r) + paths_power_at(&local_desired, r);
        let noise_at = |r: usize| paths_power_at(&global_noise, r) + paths_power_at(&local_noise, r);
        let mk = range.len() as f64;
        let desired_avg = range.clone().map(desired_at).sum::<f64>() / mk;
        let noise_avg = range.clone().map(noise_at).sum::<f64>() / mk;
        let (d1, n1) = (desired_at(range.start), noise_at(range.start));
        let denom = noise_avg + frac * n1;
        let mut gain_sq = 1.0;
        if denom > 0.0 && desired_avg > 0.0 {
            let numer = desired_avg / snr - frac * d1;
            if numer <= 0.0 {
                return Err(Error::Config(format!("node {k}: target SNR unreachable")));
            }
            gain_sq = numer / denom;
        }
        let gain = gain_sq.sqrt();
        for p in global_noise.iter_mut().chain(local_noise.iter_mut()) {
            for (r, g) in p.rows.iter().zip(p.gains.iter_mut()) {
                if range.contains(r) {
                    *g *= gain;
                }
            }
        }
        let sd = (frac * (d1 + gain_sq * n1)).sqrt();
        for r in range {
            sensor_sd[r] = sd;
        }
    }

    let n = params.samples;
    let src_len = n + params.max_delay;
    let mut stream = 1u64;
    let mut group = |paths: &[SourcePaths]| {
        let mut out = DMatrix::<f64>::zeros(m, n);
        for p in paths {
            render(&mut out, p, &white(config.seed, stream, src_len), params.max_delay);
            stream += 1;
        }
        out
    };
    let gd = group(&global_desired);
    let ld = group(&local_desired);
    let gn = group(&global_noise);
    let mut ln = group(&local_noise);
    let sensor = white(config.seed, u64::MAX, m * n);
    for r in 0..m {
        for t in 0..n {
            ln[(r, t)] += sensor_sd[r] * sensor[r * n + t];
        }
    }

    let desired = &gd + &ld;
    let noise = &gn + &ln;
    let mut observed = DMatrix::<f64>::zeros(m, n);
    for t in 0..n {
        let label = schedule.label(t / params.segment_len);
        for r in 0..m {
            observed[(r, t)] = match label {
                Activity::AllActive => desired[(r, t)] + noise[(r, t)],
                Activity::GlobalOnly => gd[(r, t)] + gn[(r, t)],
                Activity::NoiseOnly => noise[(r, t)],
            };
        }
    }

    Ok(AnechoicSignals {
        layout,
        sample_rate: params.sample_rate,
        observed,
        desired,
        noise,
        schedule,
        segment_len: params.segment_len,
        paths: ScenePaths {
            global_desired,
            local_desired,
            global_noise,
            local_noise,
        },
        sensor_var: sensor_sd.iter().map(|s| s * s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (SceneConfig, AnechoicParams) {
        let cfg = SceneConfig::uniform(3, 2, 1, 1, 1, 1, 1).with_seed(3);
        let params = AnechoicParams {
            samples: 4000,
            segment_len: 500,
            ..Default::default()
        };
        (cfg, params)
    }

    #[test]
    fn deterministic_and_consistent() {
        let (cfg, params) = small();
        let a = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        let b = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        assert_eq!(a.observed, b.observed);
        // all-active segment: observed = desired + noise
        for t in 0..500 {
            for r in 0..6 {
                assert_eq!(a.observed[(r, t)], a.desired[(r, t)] + a.noise[(r, t)]);
            }
        }
        // noise-only segment
        assert_eq!(a.label_at(1200), Activity::NoiseOnly);
        assert_eq!(a.observed[(2, 1200)], a.noise[(2, 1200)]);
    }

    #[test]
    fn local_sources_stay_local() {
        let (mut cfg, params) = small();
        cfg.global_desired = 0;
        cfg.local_desired = vec![1, 0, 0];
        let sig = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        for r in 2..6 {
            assert!(sig.desired.row(r).iter().all(|x| *x == 0.0));
        }
        assert!(sig.desired.row(0).iter().any(|x| *x != 0.0));
    }

    #[test]
    fn snr_near_target() {
        let (cfg, mut params) = small();
        params.samples = 100_000;
        let sig = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        for k in 0..3 {
            let rows = sig.layout.range(k);
            let pd: f64 = rows.clone().map(|r| sig.desired.row(r).norm_squared()).sum();
            let pn: f64 = rows.map(|r| sig.noise.row(r).norm_squared()).sum();
            let snr = 10.0 * (pd / pn).log10();
            assert!(snr.abs() < 0.5, "node {k}: {snr}");
        }
    }

    #[test]
    fn bin_scms_match_sample_averages() {
        let (cfg, mut params) = small();
        params.samples = 200_000;
        let sig = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        let wcfg = WolaConfig {
            frame_len: 64,
            overlap: 0.5,
        };
        let scms = sig.bin_scms(&wcfg).unwrap();
        let desired = crate::wola::analyze(&sig.desired, &wcfg).unwrap();
        let noise = crate::wola::analyze(&sig.noise, &wcfg).unwrap();
        let frames = desired.frames() as f64;
        for f in [0, 5, 17, 32] {
            let rss = linalg::gram(&desired.bins[f]) / C64::new(frames, 0.0);
            let rnn = linalg::gram(&noise.bins[f]) / C64::new(frames, 0.0);
            assert!(linalg::rel_frobenius(&rss, &scms[f].rss) < 0.1, "bin {f} rss");
            assert!(linalg::rel_frobenius(&rnn, &scms[f].rnn) < 0.1, "bin {f} rnn");
        }
    }

    #[test]
    fn window_labels() {
        let (cfg, params) = small();
        let sig = generate_anechoic(&cfg, &params, ActivitySchedule::default()).unwrap();
        assert_eq!(sig.window_label(0, 500), Some(Activity::AllActive));
        assert_eq!(sig.window_label(400, 200), None);
        assert_eq!(sig.window_label(500, 100), Some(Activity::GlobalOnly));
    }
}
