//! DANSE with sequential round-robin node updating.
//!
//! Each node compresses its sensors into `Q` fused channels `z_k = P_k^H y_k`
//! and estimates its `J`-channel target from `y~_k = [y_k; z_-k]`. Only the
//! updating node re-solves its LMMSE problem; its fusion matrix then becomes
//! the first `Q` columns of the sensor block of the new filter.

use crate::error::{Error, Result};
use crate::estimator::{FrameOutput, OnlineEstimator};
use crate::filters::solve_mwf;
use crate::idanse::network_wide_filter;
use crate::linalg::{CMat, ONE};
use crate::scene::{Activity, NodeLayout, SceneConfig, SelectionMatrix};
use crate::scm::{ScmSet, SegmentedScm, TildeScms};

/// `z_k = P_k^H y_k`.
pub fn fuse(fusion: &CMat, y_k: &CMat) -> Result<CMat> {
    if fusion.nrows() != y_k.nrows() {
        return Err(Error::dim("fusion input channels", fusion.nrows(), y_k.nrows()));
    }
    Ok(fusion.ad_mul(y_k))
}

/// `y~_k = [y_k; z_1; ..; z_{k-1}; z_{k+1}; ..; z_K]`.
///
/// `fused` holds one entry per node (the own entry is ignored); neighbors are
/// stacked in ascending node order.
pub fn assemble_observation(k: usize, y_k: &CMat, fused: &[CMat]) -> Result<CMat> {
    if k >= fused.len() {
        return Err(Error::dim("fused signals per node", k + 1, fused.len()));
    }
    let cols = y_k.ncols();
    let mut rows = y_k.nrows();
    let mut width = None;
    for (q, z) in fused.iter().enumerate() {
        if q == k {
            continue;
        }
        if z.ncols() != cols {
            return Err(Error::dim("fused signal length", cols, z.ncols()));
        }
        match width {
            None => width = Some(z.nrows()),
            Some(w) if w != z.nrows() => {
                return Err(Error::dim("fused signal channels", w, z.nrows()));
            }
            _ => {}
        }
        rows += z.nrows();
    }
    let mut out = CMat::zeros(rows, cols);
    out.rows_mut(0, y_k.nrows()).copy_from(y_k);
    let mut r0 = y_k.nrows();
    for (q, z) in fused.iter().enumerate() {
        if q == k {
            continue;
        }
        out.rows_mut(r0, z.nrows()).copy_from(z);
        r0 += z.nrows();
    }
    Ok(out)
}

/// `C_k` (`M x M~_k`) with `y~_k = C_k^H y`: identity on node `k`'s sensors,
/// neighbor `q`'s fusion matrix in the column block of `z_q`.
pub fn tilde_transform(layout: &NodeLayout, k: usize, fusion: &[CMat]) -> CMat {
    let width: usize = fusion
        .iter()
        .enumerate()
        .filter(|(q, _)| *q != k)
        .map(|(_, p)| p.ncols())
        .sum();
    let mk = layout.size(k);
    let mut c = CMat::zeros(layout.total(), mk + width);
    for i in 0..mk {
        c[(layout.offset(k) + i, i)] = ONE;
    }
    let mut c0 = mk;
    for (q, p) in fusion.iter().enumerate() {
        if q == k {
            continue;
        }
        c.view_mut((layout.offset(q), c0), (p.nrows(), p.ncols())).copy_from(p);
        c0 += p.ncols();
    }
    c
}

/// Whether `J >= S_glob + max_k S_loc,k`. Necessary, not sufficient, for
/// DANSE to reach the centralized estimate; used to label runs only.
pub fn check_span_condition(config: &SceneConfig) -> bool {
    config.target_channels >= config.global_desired + config.max_local_desired()
}

#[derive(Clone, Debug)]
pub struct DanseState {
    layout: NodeLayout,
    targets: Vec<SelectionMatrix>,
    fused_width: usize,
    fusion: Vec<CMat>,
    tilde: Vec<CMat>,
    iteration: usize,
    next_node: usize,
}

impl DanseState {
    /// `P_k^0 = E_kk` (first `Q` target channels) and `W~_k^0 = [E_kk; 0]`,
    /// i.e. every node starts from its unprocessed target channels.
    pub fn new(layout: NodeLayout, targets: Vec<SelectionMatrix>, fused_width: usize) -> Result<Self> {
        if targets.len() != layout.nodes() {
            return Err(Error::dim("DANSE targets", layout.nodes(), targets.len()));
        }
        let j = targets.first().map(|t| t.width()).unwrap_or(0);
        if fused_width == 0 || fused_width > j {
            return Err(Error::Config(format!(
                "DANSE fused channels must lie in 1..={j}, got {fused_width}"
            )));
        }
        let fusion = targets
            .iter()
            .map(|t| t.truncated(fused_width).map(|s| s.local()))
            .collect::<Result<Vec<_>>>()?;
        let k_nodes = layout.nodes();
        let tilde = targets
            .iter()
            .enumerate()
            .map(|(k, t)| t.embedded(layout.size(k) + fused_width * (k_nodes - 1), 0))
            .collect();
        Ok(Self {
            layout,
            targets,
            fused_width,
            fusion,
            tilde,
            iteration: 0,
            next_node: 0,
        })
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn fusion(&self) -> &[CMat] {
        &self.fusion
    }

    pub fn tilde_filters(&self) -> &[CMat] {
        &self.tilde
    }

    pub fn fused_width(&self) -> usize {
        self.fused_width
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn next_node(&self) -> usize {
        self.next_node
    }

    /// `M~_k = M_k + Q (K - 1)`.
    pub fn tilde_dim(&self, k: usize) -> usize {
        self.layout.size(k) + self.fused_width * (self.layout.nodes() - 1)
    }

    pub fn transform(&self, k: usize) -> CMat {
        tilde_transform(&self.layout, k, &self.fusion)
    }

    /// `E~_k`: node `k`'s target channels inside its observation vector.
    pub fn own_selection(&self, k: usize) -> CMat {
        self.targets[k].embedded(self.tilde_dim(k), 0)
    }

    /// `W_kk` block of node `k`'s current filter.
    pub fn own_block(&self, k: usize) -> CMat {
        self.tilde[k].rows(0, self.layout.size(k)).into_owned()
    }

    pub fn network_wide(&self, k: usize) -> CMat {
        network_wide_filter(&self.layout, k, &self.fusion, &self.tilde[k])
            .expect("state shapes are consistent")
    }

    /// Solve node `k`'s LMMSE problem on its observation SCMs and refresh its
    /// fusion matrix. Other nodes are untouched.
    pub fn update(&mut self, k: usize, tilde: &TildeScms) -> Result<()> {
        let dim = self.tilde_dim(k);
        if tilde.ryy.nrows() != dim || tilde.rss.nrows() != dim {
            return Err(Error::dim("DANSE observation SCM", dim, tilde.ryy.nrows()));
        }
        let w = solve_mwf(&tilde.ryy, &(&tilde.rss * self.own_selection(k)))?.w;
        self.fusion[k] = w.view((0, 0), (self.layout.size(k), self.fused_width)).into_owned();
        self.tilde[k] = w;
        self.iteration += 1;
        self.next_node = (k + 1) % self.layout.nodes();
        Ok(())
    }

    /// The scheduled node skips its turn (statistics not ready).
    pub fn skip(&mut self) {
        self.next_node = (self.next_node + 1) % self.layout.nodes();
    }

    /// Observation SCMs of node `k` propagated exactly from network SCMs.
    pub fn true_tilde(&self, k: usize, scms: &ScmSet) -> TildeScms {
        scms.tilde(&self.transform(k))
    }

    /// One sequential update of the scheduled node using exact SCMs.
    /// Returns the node that updated.
    pub fn step_true(&mut self, scms: &ScmSet) -> Result<usize> {
        let k = self.next_node;
        let tilde = self.true_tilde(k, scms);
        self.update(k, &tilde)?;
        Ok(k)
    }
}

/// Free-function form of [`DanseState::update`].
pub fn danse_update(mut state: DanseState, k: usize, tilde: &TildeScms) -> Result<DanseState> {
    state.update(k, tilde)?;
    Ok(state)
}

/// DANSE on a frame stream: observation SCMs are exponentially averaged
/// across fusion-matrix changes, and one node updates per frame.
pub struct OnlineDanse {
    state: DanseState,
    tilde_scms: Vec<SegmentedScm>,
}

impl OnlineDanse {
    pub fn new(
        layout: NodeLayout,
        targets: Vec<SelectionMatrix>,
        fused_width: usize,
        forgetting: f64,
    ) -> Result<Self> {
        let state = DanseState::new(layout, targets, fused_width)?;
        let tilde_scms = (0..state.layout.nodes())
            .map(|k| SegmentedScm::new(state.tilde_dim(k), forgetting))
            .collect();
        Ok(Self { state, tilde_scms })
    }

    pub fn state(&self) -> &DanseState {
        &self.state
    }
}

impl OnlineEstimator for OnlineDanse {
    fn process(&mut self, frame: &CMat, label: Option<Activity>) -> Result<FrameOutput> {
        let layout = self.state.layout.clone();
        if frame.nrows() != layout.total() {
            return Err(Error::dim("frame channels", layout.total(), frame.nrows()));
        }
        let locals: Vec<CMat> = (0..layout.nodes()).map(|k| layout.node_rows(k, frame)).collect();
        let fused = locals
            .iter()
            .zip(&self.state.fusion)
            .map(|(y, p)| fuse(p, y))
            .collect::<Result<Vec<_>>>()?;
        let mut observations = Vec::with_capacity(layout.nodes());
        for k in 0..layout.nodes() {
            let obs = assemble_observation(k, &locals[k], &fused)?;
            if let Some(label) = label {
                self.tilde_scms[k].update(&obs, label)?;
            }
            observations.push(obs);
        }

        // Filters for this frame use the fusion matrices that produced `fused`.
        let fusion_used = self.state.fusion.clone();
        let u = self.state.next_node;
        let seg = &self.tilde_scms[u];
        match (seg.ryy(), seg.rss()) {
            (Ok(ryy), Ok(rss)) => self.state.update(u, &TildeScms { ryy, rss })?,
            _ => self.state.skip(),
        }

        let estimates = observations
            .iter()
            .zip(&self.state.tilde)
            .map(|(obs, w)| w.ad_mul(obs))
            .collect();
        let network_wide = (0..layout.nodes())
            .map(|k| network_wide_filter(&layout, k, &fusion_used, &self.state.tilde[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameOutput {
            estimates,
            network_wide,
        })
    }

    fn broadcast_channels(&self, _node: usize) -> usize {
        self.state.fused_width
    }
}
