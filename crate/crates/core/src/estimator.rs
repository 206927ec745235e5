//! Frame-by-frame estimator interface shared by all algorithms, plus the
//! online centralized and local-only baselines.

use crate::error::{Error, Result};
use crate::filters::solve_mwf;
use crate::linalg::CMat;
use crate::scene::{Activity, NodeLayout, SelectionMatrix};
use crate::scm::SegmentedScm;

/// Filters in force for one frame and the resulting node estimates.
#[derive(Clone, Debug)]
pub struct FrameOutput {
    /// `J x B` estimate per node.
    pub estimates: Vec<CMat>,
    /// `M x J` filter that maps the stacked sensor signals to each node's
    /// estimate for this frame.
    pub network_wide: Vec<CMat>,
}

pub trait OnlineEstimator {
    /// Consume one `M x B` frame of observed sensor signals.
    fn process(&mut self, frame: &CMat, label: Option<Activity>) -> Result<FrameOutput>;

    /// Channels each node broadcasts per frame.
    fn broadcast_channels(&self, node: usize) -> usize;
}

/// A frame with this label moved the `R_yy` or `R_nn` estimates.
pub(crate) fn moves_signal_stats(label: Option<Activity>) -> bool {
    matches!(label, Some(Activity::AllActive | Activity::NoiseOnly))
}

/// A frame with this label moved the `R_yy` or global-component estimates.
pub(crate) fn moves_global_stats(label: Option<Activity>) -> bool {
    matches!(label, Some(Activity::AllActive | Activity::GlobalOnly))
}

fn check_frame(layout: &NodeLayout, frame: &CMat) -> Result<()> {
    if frame.nrows() != layout.total() {
        return Err(Error::dim("frame channels", layout.total(), frame.nrows()));
    }
    Ok(())
}

/// Centralized MWF re-estimated every frame from segmented SCMs.
pub struct OnlineCentralized {
    layout: NodeLayout,
    targets: Vec<SelectionMatrix>,
    scm: SegmentedScm,
    filters: Vec<CMat>,
}

impl OnlineCentralized {
    pub fn new(layout: NodeLayout, targets: Vec<SelectionMatrix>, forgetting: f64) -> Self {
        let filters = targets
            .iter()
            .enumerate()
            .map(|(k, t)| t.network(&layout, k))
            .collect();
        Self {
            scm: SegmentedScm::new(layout.total(), forgetting),
            layout,
            targets,
            filters,
        }
    }
}

impl OnlineEstimator for OnlineCentralized {
    fn process(&mut self, frame: &CMat, label: Option<Activity>) -> Result<FrameOutput> {
        check_frame(&self.layout, frame)?;
        if let Some(label) = label {
            self.scm.update(frame, label)?;
        }
        if moves_signal_stats(label) {
            if let (Ok(ryy), Ok(rss)) = (self.scm.ryy(), self.scm.rss()) {
                for (k, target) in self.targets.iter().enumerate() {
                    let e = target.network(&self.layout, k);
                    self.filters[k] = solve_mwf(&ryy, &(&rss * e))?.w;
                }
            }
        }
        let estimates = self.filters.iter().map(|w| w.ad_mul(frame)).collect();
        Ok(FrameOutput {
            estimates,
            network_wide: self.filters.clone(),
        })
    }

    fn broadcast_channels(&self, node: usize) -> usize {
        self.layout.size(node)
    }
}

/// Per-node MWF using only the node's own sensors.
pub struct OnlineLocal {
    layout: NodeLayout,
    targets: Vec<SelectionMatrix>,
    scms: Vec<SegmentedScm>,
    filters: Vec<CMat>,
}

impl OnlineLocal {
    pub fn new(layout: NodeLayout, targets: Vec<SelectionMatrix>, forgetting: f64) -> Self {
        let scms = (0..layout.nodes())
            .map(|k| SegmentedScm::new(layout.size(k), forgetting))
            .collect();
        let filters = targets.iter().map(|t| t.local()).collect();
        Self {
            layout,
            targets,
            scms,
            filters,
        }
    }
}

/// Place a node-level `M_k x J` filter into an `M x J` network-wide filter.
pub fn embed_local(layout: &NodeLayout, k: usize, w: &CMat) -> CMat {
    let mut out = CMat::zeros(layout.total(), w.ncols());
    out.rows_mut(layout.offset(k), layout.size(k)).copy_from(w);
    out
}

impl OnlineEstimator for OnlineLocal {
    fn process(&mut self, frame: &CMat, label: Option<Activity>) -> Result<FrameOutput> {
        check_frame(&self.layout, frame)?;
        let mut estimates = Vec::with_capacity(self.layout.nodes());
        let mut network_wide = Vec::with_capacity(self.layout.nodes());
        for k in 0..self.layout.nodes() {
            let y_k = self.layout.node_rows(k, frame);
            if let Some(label) = label {
                self.scms[k].update(&y_k, label)?;
            }
            if moves_signal_stats(label) {
                if let (Ok(ryy), Ok(rss)) = (self.scms[k].ryy(), self.scms[k].rss()) {
                    self.filters[k] = solve_mwf(&ryy, &(rss * self.targets[k].local()))?.w;
                }
            }
            estimates.push(self.filters[k].ad_mul(&y_k));
            network_wide.push(embed_local(&self.layout, k, &self.filters[k]));
        }
        Ok(FrameOutput {
            estimates,
            network_wide,
        })
    }

    fn broadcast_channels(&self, _node: usize) -> usize {
        0
    }
}
