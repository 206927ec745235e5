//! Spatial covariance matrix estimation: batch averages, exponentially
//! averaged online estimates, and label-segmented sets of online estimates.

use std::cell::OnceCell;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::scene::{Activity, NodeLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    True,
    Batch,
    Online,
}

/// Network-level SCMs plus the per-node global-component SCMs.
#[derive(Clone, Debug)]
pub struct ScmSet {
    pub layout: NodeLayout,
    pub ryy: CMat,
    pub rnn: CMat,
    pub rss: CMat,
    /// `E[y_glob,k y_glob,k^H]`, one `M_k x M_k` matrix per node.
    pub global: Vec<CMat>,
    pub provenance: Provenance,
}

impl ScmSet {
    pub fn node_ryy(&self, k: usize) -> CMat {
        self.layout.node_block(k, &self.ryy)
    }

    pub fn node_rss(&self, k: usize) -> CMat {
        self.layout.node_block(k, &self.rss)
    }

    pub fn node_rnn(&self, k: usize) -> CMat {
        self.layout.node_block(k, &self.rnn)
    }

    /// Propagate to node `k`'s observation domain `y~ = C^H y`.
    pub fn tilde(&self, transform: &CMat) -> TildeScms {
        let mut ryy = transform.ad_mul(&(&self.ryy * transform));
        let mut rss = transform.ad_mul(&(&self.rss * transform));
        linalg::hermitize(&mut ryy);
        linalg::hermitize(&mut rss);
        TildeScms { ryy, rss }
    }
}

/// SCMs of a node's stacked observation `[y_k; z_-k]`.
#[derive(Clone, Debug)]
pub struct TildeScms {
    pub ryy: CMat,
    pub rss: CMat,
}

/// `(1/n) Y Y^H` over the columns of `samples`.
pub fn batch_scm(samples: &CMat) -> Result<CMat> {
    if samples.ncols() == 0 {
        return Err(Error::EmptyInput("batch SCM over zero samples"));
    }
    Ok(linalg::gram(samples) / C64::new(samples.ncols() as f64, 0.0))
}

/// Frames up to this many samples are accumulated with a direct loop.
const SHORT_FRAME: usize = 16;

/// Exponentially averaged SCM, `R <- lambda R + (1 - lambda) Y Y^H / B`.
#[derive(Clone, Debug)]
pub struct OnlineScm {
    state: CMat,
    forgetting: f64,
    frames_seen: usize,
    samples_seen: usize,
    // lambda^frames_seen, kept for the zero-init bias correction
    decay: f64,
}

impl OnlineScm {
    pub fn new(channels: usize, forgetting: f64) -> Self {
        assert!((0.0..1.0).contains(&forgetting), "forgetting factor must lie in [0, 1)");
        Self {
            state: CMat::zeros(channels, channels),
            forgetting,
            frames_seen: 0,
            samples_seen: 0,
            decay: 1.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.state.nrows()
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// The raw recursion state (starts from zero).
    pub fn state(&self) -> &CMat {
        &self.state
    }

    /// Ready once the averaged samples could span every channel.
    pub fn is_ready(&self) -> bool {
        self.frames_seen > 0 && self.samples_seen >= self.channels()
    }

    /// State divided by `1 - lambda^l`, i.e. a properly normalized weighted
    /// average of the frame SCMs seen so far.
    pub fn normalized(&self) -> Option<CMat> {
        if self.frames_seen == 0 {
            return None;
        }
        let weight = 1.0 - self.decay;
        Some(&self.state / C64::new(weight, 0.0))
    }

    pub fn update(&mut self, frame: &CMat) -> Result<()> {
        if frame.nrows() != self.channels() {
            return Err(Error::dim("online SCM update", self.channels(), frame.nrows()));
        }
        let b = frame.ncols();
        if b == 0 {
            return Err(Error::EmptyInput("online SCM update with an empty frame"));
        }
        let lambda = self.forgetting;
        let weight = (1.0 - lambda) / b as f64;
        if b <= SHORT_FRAME {
            // Upper triangle in place, mirrored so the state stays exactly Hermitian.
            let n = self.channels();
            for j in 0..n {
                for i in 0..=j {
                    let mut acc = C64::new(0.0, 0.0);
                    for t in 0..b {
                        acc += frame[(i, t)] * frame[(j, t)].conj();
                    }
                    let v = self.state[(i, j)] * lambda + acc * weight;
                    self.state[(i, j)] = v;
                    self.state[(j, i)] = v.conj();
                }
            }
        } else {
            self.state *= C64::new(lambda, 0.0);
            self.state += linalg::gram(frame) * C64::new(weight, 0.0);
            linalg::hermitize(&mut self.state);
        }
        self.frames_seen += 1;
        self.samples_seen += frame.ncols();
        self.decay *= lambda;
        Ok(())
    }

    /// Value-style form of [`OnlineScm::update`].
    pub fn updated(mut self, frame: &CMat) -> Result<Self> {
        self.update(frame)?;
        Ok(self)
    }

    pub fn reset(&mut self) {
        self.state.fill(C64::new(0.0, 0.0));
        self.frames_seen = 0;
        self.samples_seen = 0;
        self.decay = 1.0;
    }
}

/// Online estimates split by oracle activity label: `R_yy` from all-active
/// frames, `R_nn` from noise-only frames and the global-component SCM from
/// global-only frames.
#[derive(Clone, Debug)]
pub struct SegmentedScm {
    all_active: OnlineScm,
    noise_only: OnlineScm,
    global_only: OnlineScm,
    // floored R_ss, cleared whenever R_yy or R_nn moves
    rss_cache: OnceCell<CMat>,
}

impl SegmentedScm {
    pub fn new(channels: usize, forgetting: f64) -> Self {
        Self {
            all_active: OnlineScm::new(channels, forgetting),
            noise_only: OnlineScm::new(channels, forgetting),
            global_only: OnlineScm::new(channels, forgetting),
            rss_cache: OnceCell::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.all_active.channels()
    }

    pub fn update(&mut self, frame: &CMat, label: Activity) -> Result<()> {
        match label {
            Activity::AllActive => self.all_active.update(frame)?,
            Activity::NoiseOnly => self.noise_only.update(frame)?,
            Activity::GlobalOnly => return self.global_only.update(frame),
        }
        self.rss_cache.take();
        Ok(())
    }

    fn ready(est: &OnlineScm, what: &'static str) -> Result<CMat> {
        if est.is_ready() {
            Ok(est.normalized().expect("ready implies at least one frame"))
        } else {
            Err(Error::NotReady(what))
        }
    }

    pub fn ryy(&self) -> Result<CMat> {
        Self::ready(&self.all_active, "R_yy has too few all-active frames")
    }

    pub fn rnn(&self) -> Result<CMat> {
        Self::ready(&self.noise_only, "R_nn has too few noise-only frames")
    }

    pub fn global(&self) -> Result<CMat> {
        Self::ready(&self.global_only, "global-component SCM has too few global-only frames")
    }

    /// `R_yy - R_nn` with negative eigenvalues clipped.
    pub fn rss(&self) -> Result<CMat> {
        if let Some(r) = self.rss_cache.get() {
            return Ok(r.clone());
        }
        let diff = self.ryy()? - self.rnn()?;
        Ok(self.rss_cache.get_or_init(|| linalg::psd_floor(&diff)).clone())
    }

    pub fn frames_seen(&self, label: Activity) -> usize {
        match label {
            Activity::AllActive => self.all_active.frames_seen(),
            Activity::NoiseOnly => self.noise_only.frames_seen(),
            Activity::GlobalOnly => self.global_only.frames_seen(),
        }
    }
}

/// Run segmented estimation over a stream of `M x B` frames and return the
/// resulting SCM set. Fails with [`Error::NotReady`] if some segment never
/// collected enough frames.
pub fn segmented_scms(
    frames: &[CMat],
    labels: &[Activity],
    forgetting: f64,
    layout: &NodeLayout,
) -> Result<ScmSet> {
    if frames.len() != labels.len() {
        return Err(Error::dim("segmented SCMs: labels per frame", frames.len(), labels.len()));
    }
    let mut network = SegmentedScm::new(layout.total(), forgetting);
    for (frame, &label) in frames.iter().zip(labels) {
        network.update(frame, label)?;
    }
    let ryy = network.ryy()?;
    let rnn = network.rnn()?;
    let rss = network.rss()?;
    let glob = network.global()?;
    let global = (0..layout.nodes()).map(|k| layout.node_block(k, &glob)).collect();
    Ok(ScmSet {
        layout: layout.clone(),
        ryy,
        rnn,
        rss,
        global,
        provenance: Provenance::Online,
    })
}
