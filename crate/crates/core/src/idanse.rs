//! One-shot (iterationless) DANSE.
//!
//! Every node first estimates the global component of its own sensor signals
//! with a local MWF and broadcasts that estimate. Each node then solves a
//! single MWF on its own sensors plus the received estimates. The fusion
//! filters never depend on the second-stage filters, so one cycle suffices;
//! with at least as many fused channels as global sources the result equals
//! the centralized MWF.

use crate::danse::{assemble_observation, fuse, tilde_transform};
use crate::error::{Error, Result};
use crate::estimator::{moves_global_stats, moves_signal_stats, FrameOutput, OnlineEstimator};
use crate::filters::{centralized_filter, local_global_fusion_filter, solve_mwf};
use crate::linalg::{self, CMat};
use crate::scene::{generate_scene, Activity, NodeLayout, SceneConfig, SelectionMatrix};
use crate::scm::{ScmSet, SegmentedScm, TildeScms};

/// Channels of node `k` whose global component is estimated and broadcast.
/// Uses the target channels first, then the following sensors.
pub fn fusion_selection(target: &SelectionMatrix, width: usize) -> Result<SelectionMatrix> {
    if width <= target.width() {
        return target.truncated(width);
    }
    let mut channels = target.channels().to_vec();
    for c in 0..target.node_dim() {
        if channels.len() == width {
            break;
        }
        if !channels.contains(&c) {
            channels.push(c);
        }
    }
    SelectionMatrix::new(target.node_dim(), channels)
}

/// Stacked network-wide filter of node `k`: block `k` is `W_kk`, block
/// `q != k` is `P_q G_kq`.
pub fn network_wide_filter(
    layout: &NodeLayout,
    k: usize,
    fusion: &[CMat],
    tilde: &CMat,
) -> Result<CMat> {
    if fusion.len() != layout.nodes() {
        return Err(Error::dim("fusion matrices", layout.nodes(), fusion.len()));
    }
    let width: usize = fusion
        .iter()
        .enumerate()
        .filter(|(q, _)| *q != k)
        .map(|(_, p)| p.ncols())
        .sum();
    let mk = layout.size(k);
    if tilde.nrows() != mk + width {
        return Err(Error::dim("tilde filter rows", mk + width, tilde.nrows()));
    }
    let j = tilde.ncols();
    let mut out = CMat::zeros(layout.total(), j);
    out.rows_mut(layout.offset(k), mk).copy_from(&tilde.rows(0, mk));
    let mut r0 = mk;
    for (q, p) in fusion.iter().enumerate() {
        if q == k {
            continue;
        }
        if p.nrows() != layout.size(q) {
            return Err(Error::dim("fusion matrix rows", layout.size(q), p.nrows()));
        }
        let gain = tilde.rows(r0, p.ncols());
        out.rows_mut(layout.offset(q), layout.size(q)).copy_from(&(p * gain));
        r0 += p.ncols();
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct IdanseNodeResult {
    pub node: usize,
    /// `P_k`, `M_k x Q`.
    pub fusion: CMat,
    /// `W~_k`, `M~_k x J`.
    pub tilde: CMat,
    /// `W_k^NW`, `M x J`.
    pub network_wide: CMat,
    neighbor_gains: Vec<(usize, CMat)>,
    own_rows: usize,
}

impl IdanseNodeResult {
    fn new(layout: &NodeLayout, node: usize, fusion: &[CMat], tilde: CMat) -> Result<Self> {
        let network_wide = network_wide_filter(layout, node, fusion, &tilde)?;
        let own_rows = layout.size(node);
        let mut r0 = own_rows;
        let mut neighbor_gains = Vec::new();
        for (q, p) in fusion.iter().enumerate() {
            if q == node {
                continue;
            }
            neighbor_gains.push((q, tilde.rows(r0, p.ncols()).into_owned()));
            r0 += p.ncols();
        }
        Ok(Self {
            node,
            fusion: fusion[node].clone(),
            tilde,
            network_wide,
            neighbor_gains,
            own_rows,
        })
    }

    /// `W_kk`.
    pub fn own_block(&self) -> CMat {
        self.tilde.rows(0, self.own_rows).into_owned()
    }

    /// `G_kq` applied to the fused signal of neighbor `q`.
    pub fn gain(&self, q: usize) -> Option<&CMat> {
        self.neighbor_gains.iter().find(|(n, _)| *n == q).map(|(_, g)| g)
    }
}

/// Phase one: every node's global-component fusion filter.
pub fn fusion_filters(scms: &ScmSet, targets: &[SelectionMatrix], width: usize) -> Result<Vec<CMat>> {
    targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let sel = fusion_selection(t, width)?;
            Ok(local_global_fusion_filter(&scms.node_ryy(k), &scms.global[k], &sel)?.w)
        })
        .collect()
}

/// One full processing cycle on a given SCM set (exact or batch-estimated).
/// Observation SCMs are propagated through the fusion filters analytically.
pub fn idanse_cycle(
    scms: &ScmSet,
    targets: &[SelectionMatrix],
    fused_width: usize,
) -> Result<Vec<IdanseNodeResult>> {
    let layout = &scms.layout;
    if targets.len() != layout.nodes() {
        return Err(Error::dim("iDANSE targets", layout.nodes(), targets.len()));
    }
    let fusion = fusion_filters(scms, targets, fused_width)?;
    // Barrier: phase two starts once every fusion filter is available.
    (0..layout.nodes())
        .map(|k| {
            let c = tilde_transform(layout, k, &fusion);
            let TildeScms { ryy, rss } = scms.tilde(&c);
            let e = targets[k].embedded(c.ncols(), 0);
            let w = solve_mwf(&ryy, &(rss * e))?.w;
            IdanseNodeResult::new(layout, k, &fusion, w)
        })
        .collect()
}

/// Apply a completed cycle to an `M x B` frame through the distributed route:
/// fuse, exchange, stack, filter.
pub fn estimate_frame(layout: &NodeLayout, results: &[IdanseNodeResult], frame: &CMat) -> Result<Vec<CMat>> {
    let locals: Vec<CMat> = (0..layout.nodes()).map(|k| layout.node_rows(k, frame)).collect();
    let fused = results
        .iter()
        .zip(&locals)
        .map(|(r, y)| fuse(&r.fusion, y))
        .collect::<Result<Vec<_>>>()?;
    results
        .iter()
        .map(|r| Ok(r.tilde.ad_mul(&assemble_observation(r.node, &locals[r.node], &fused)?)))
        .collect()
}

/// Relative Frobenius distance between iDANSE and centralized network-wide
/// filters, per node.
#[derive(Clone, Debug)]
pub struct GapReport {
    pub per_node: Vec<f64>,
    pub max: f64,
}

/// Generate the scene of `config` with `J = width`, run one exact-SCM cycle
/// and compare with the centralized filters.
pub fn theorem1_gap(config: &SceneConfig, width: usize) -> Result<GapReport> {
    let mut cfg = config.clone();
    cfg.target_channels = width;
    let scene = generate_scene(&cfg)?;
    let scms = scene.true_scms();
    let results = idanse_cycle(&scms, scene.targets(), width)?;
    let per_node = results
        .iter()
        .map(|r| {
            let central = centralized_filter(&scms, r.node, &scene.targets()[r.node])?.w;
            Ok(linalg::rel_frobenius(&r.network_wide, &central))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = per_node.iter().cloned().fold(0.0, f64::max);
    Ok(GapReport { per_node, max })
}

/// iDANSE on a frame stream with segmented online SCMs. Fusion filters and
/// observation filters are refreshed on every frame once their statistics
/// are ready; until then nodes pass their target channels through.
pub struct OnlineIdanse {
    layout: NodeLayout,
    targets: Vec<SelectionMatrix>,
    fusion_sel: Vec<SelectionMatrix>,
    local_scms: Vec<SegmentedScm>,
    tilde_scms: Vec<SegmentedScm>,
    fusion: Vec<CMat>,
    tilde: Vec<CMat>,
}

impl OnlineIdanse {
    pub fn new(
        layout: NodeLayout,
        targets: Vec<SelectionMatrix>,
        fused_width: usize,
        forgetting: f64,
    ) -> Result<Self> {
        let k_nodes = layout.nodes();
        if targets.len() != k_nodes {
            return Err(Error::dim("iDANSE targets", k_nodes, targets.len()));
        }
        if fused_width == 0 || layout.sizes().iter().any(|&m| m < fused_width) {
            return Err(Error::Config(format!("invalid iDANSE fused width {fused_width}")));
        }
        let fusion_sel = targets
            .iter()
            .map(|t| fusion_selection(t, fused_width))
            .collect::<Result<Vec<_>>>()?;
        let fusion: Vec<CMat> = fusion_sel.iter().map(|s| s.local()).collect();
        let tilde_dim = |k: usize| layout.size(k) + fused_width * (k_nodes - 1);
        let tilde = (0..k_nodes).map(|k| targets[k].embedded(tilde_dim(k), 0)).collect();
        Ok(Self {
            local_scms: (0..k_nodes).map(|k| SegmentedScm::new(layout.size(k), forgetting)).collect(),
            tilde_scms: (0..k_nodes).map(|k| SegmentedScm::new(tilde_dim(k), forgetting)).collect(),
            layout,
            targets,
            fusion_sel,
            fusion,
            tilde,
        })
    }

    pub fn fusion(&self) -> &[CMat] {
        &self.fusion
    }
}

impl OnlineEstimator for OnlineIdanse {
    fn process(&mut self, frame: &CMat, label: Option<Activity>) -> Result<FrameOutput> {
        let layout = &self.layout;
        if frame.nrows() != layout.total() {
            return Err(Error::dim("frame channels", layout.total(), frame.nrows()));
        }
        let locals: Vec<CMat> = (0..layout.nodes()).map(|k| layout.node_rows(k, frame)).collect();

        // Phase one: local statistics, fusion filters, broadcast.
        for k in 0..layout.nodes() {
            let seg = &mut self.local_scms[k];
            if let Some(label) = label {
                seg.update(&locals[k], label)?;
            }
            if !moves_global_stats(label) {
                continue;
            }
            if let (Ok(ryy), Ok(glob)) = (seg.ryy(), seg.global()) {
                self.fusion[k] = local_global_fusion_filter(&ryy, &glob, &self.fusion_sel[k])?.w;
            }
        }
        let fused = locals
            .iter()
            .zip(&self.fusion)
            .map(|(y, p)| fuse(p, y))
            .collect::<Result<Vec<_>>>()?;

        // Phase two: observation statistics and filters.
        let mut estimates = Vec::with_capacity(layout.nodes());
        let mut network_wide = Vec::with_capacity(layout.nodes());
        for k in 0..layout.nodes() {
            let obs = assemble_observation(k, &locals[k], &fused)?;
            let seg = &mut self.tilde_scms[k];
            if let Some(label) = label {
                seg.update(&obs, label)?;
            }
            if moves_signal_stats(label) {
                if let (Ok(ryy), Ok(rss)) = (seg.ryy(), seg.rss()) {
                    let e = self.targets[k].embedded(obs.nrows(), 0);
                    self.tilde[k] = solve_mwf(&ryy, &(rss * e))?.w;
                }
            }
            estimates.push(self.tilde[k].ad_mul(&obs));
            network_wide.push(network_wide_filter(layout, k, &self.fusion, &self.tilde[k])?);
        }
        Ok(FrameOutput {
            estimates,
            network_wide,
        })
    }

    fn broadcast_channels(&self, node: usize) -> usize {
        self.fusion[node].ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ONE};

    fn signal(rows: usize, cols: usize, seed: u64) -> CMat {
        CMat::from_fn(rows, cols, |i, j| {
            let t = (seed as f64 + 0.5) * (i as f64 * 0.93 + j as f64 * 0.17 + 0.1);
            C64::new(t.cos(), (1.3 * t).sin())
        })
    }

    #[test]
    fn identity_gains_reproduce_fusion_blocks() {
        let layout = NodeLayout::new(vec![3, 2, 4]);
        let fusion: Vec<CMat> = (0..3)
            .map(|q| SelectionMatrix::first(layout.size(q), 2).unwrap().local())
            .collect();
        // W~_1 = [W_11; I; I] with W_11 arbitrary
        let mut tilde = CMat::zeros(2 + 4, 2);
        tilde.rows_mut(0, 2).copy_from(&signal(2, 2, 1));
        tilde.rows_mut(2, 2).copy_from(&CMat::identity(2, 2));
        tilde.rows_mut(4, 2).copy_from(&CMat::identity(2, 2));
        let nw = network_wide_filter(&layout, 1, &fusion, &tilde).unwrap();
        assert_eq!(nw.rows(0, 3).into_owned(), fusion[0]);
        assert_eq!(nw.rows(5, 4).into_owned(), fusion[2]);
        assert_eq!(nw.rows(3, 2).into_owned(), signal(2, 2, 1));
    }

    #[test]
    fn zero_gains_leave_only_own_block() {
        let layout = NodeLayout::new(vec![2, 2, 2]);
        let fusion: Vec<CMat> = (0..3).map(|q| signal(2, 1, q)).collect();
        let mut tilde = CMat::zeros(4, 1);
        tilde[(0, 0)] = ONE;
        tilde[(1, 0)] = ONE;
        let nw = network_wide_filter(&layout, 0, &fusion, &tilde).unwrap();
        assert!(nw.rows(2, 4).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let layout = NodeLayout::new(vec![2, 2]);
        let fusion = vec![signal(2, 1, 1), signal(2, 1, 2)];
        assert!(network_wide_filter(&layout, 0, &fusion, &CMat::zeros(4, 1)).is_err());
        assert!(network_wide_filter(&layout, 0, &fusion[..1], &CMat::zeros(3, 1)).is_err());
    }

    #[test]
    fn network_wide_agrees_with_transform_route() {
        let layout = NodeLayout::new(vec![3, 4, 2]);
        let fusion: Vec<CMat> = (0..3).map(|q| signal(layout.size(q), 2, q as u64 + 3)).collect();
        for k in 0..3 {
            let c = tilde_transform(&layout, k, &fusion);
            let tilde = signal(c.ncols(), 2, k as u64 + 10);
            let a = network_wide_filter(&layout, k, &fusion, &tilde).unwrap();
            assert!(linalg::rel_frobenius(&a, &(&c * &tilde)) < 1e-15);
        }
    }

    #[test]
    fn single_node_reduces_to_centralized() {
        let cfg = SceneConfig::uniform(1, 4, 1, 1, 1, 1, 2).with_seed(5);
        let scene = generate_scene(&cfg).unwrap();
        let scms = scene.true_scms();
        let r = idanse_cycle(&scms, scene.targets(), 2).unwrap();
        let c = centralized_filter(&scms, 0, &scene.targets()[0]).unwrap();
        assert!(linalg::rel_frobenius(&r[0].network_wide, &c.w) < 1e-12);
    }

    #[test]
    fn reaches_centralized_in_small_scene() {
        let cfg = SceneConfig::uniform(3, 4, 1, 2, 1, 1, 2).with_seed(21);
        let gap = theorem1_gap(&cfg, 2).unwrap();
        assert!(gap.max < 1e-8, "{:?}", gap.per_node);
    }

    #[test]
    fn cycle_is_stateless() {
        let cfg = SceneConfig::uniform(3, 3, 1, 1, 1, 1, 2).with_seed(4);
        let scene = generate_scene(&cfg).unwrap();
        let scms = scene.true_scms();
        let a = idanse_cycle(&scms, scene.targets(), 2).unwrap();
        let b = idanse_cycle(&scms, scene.targets(), 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.tilde, y.tilde);
            assert_eq!(x.fusion, y.fusion);
        }
    }

    #[test]
    fn distributed_route_matches_network_wide_filter() {
        let cfg = SceneConfig::uniform(3, 4, 1, 1, 1, 1, 2).with_seed(8);
        let scene = generate_scene(&cfg).unwrap();
        let scms = scene.true_scms();
        let results = idanse_cycle(&scms, scene.targets(), 2).unwrap();
        let y = scene.frame(0).full();
        let est = estimate_frame(scene.layout(), &results, &y).unwrap();
        for (r, d) in results.iter().zip(&est) {
            let direct = r.network_wide.ad_mul(&y);
            assert!((d - direct).iter().all(|z| z.norm() < 1e-12 * y.norm()));
            assert_eq!(r.gain((r.node + 1) % 3).unwrap().shape(), (2, 2));
            assert!(r.gain(r.node).is_none());
        }
    }

    #[test]
    fn fusion_selection_extends_past_targets() {
        let t = SelectionMatrix::new(4, vec![2]).unwrap();
        assert_eq!(fusion_selection(&t, 3).unwrap().channels(), &[2, 0, 1]);
        assert_eq!(fusion_selection(&SelectionMatrix::first(4, 3).unwrap(), 2).unwrap().channels(), &[0, 1]);
    }
}
