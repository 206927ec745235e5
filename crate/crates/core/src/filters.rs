//! Closed-form multichannel Wiener filters.

use nalgebra::LU;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, HermitianFactor, C64};
use crate::scene::SelectionMatrix;
use crate::scm::ScmSet;

/// Diagonal loading ladder, relative to `trace(R) / dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    pub initial: f64,
    pub max: f64,
    pub step: f64,
    /// Pivots at or below this fraction of the largest diagonal entry count
    /// as a failed factorization.
    pub pivot_tol: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            max: 1e-4,
            step: 10.0,
            pivot_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MwfFilter {
    /// `input_dim x J` filter; the estimate is `W^H y`.
    pub w: CMat,
    /// Absolute diagonal loading that was added to `R_yy`.
    pub regularization: f64,
    /// Squared pivot ratio of the factorization (rough condition number).
    pub condition: f64,
}

const HERMITIAN_TOL: f64 = 1e-10;

/// Solve `(R_yy + eps I) W = R_yd`, starting without loading and escalating
/// only when the Hermitian factorization breaks down.
pub fn solve_mwf(ryy: &CMat, ryd: &CMat) -> Result<MwfFilter> {
    solve_mwf_with(ryy, ryd, &Regularization::default())
}

pub fn solve_mwf_with(ryy: &CMat, ryd: &CMat, reg: &Regularization) -> Result<MwfFilter> {
    let n = ryy.nrows();
    if ryy.ncols() != n {
        return Err(Error::dim("MWF covariance", format!("{n}x{n}"), format!("{n}x{}", ryy.ncols())));
    }
    if ryd.nrows() != n {
        return Err(Error::dim("MWF cross-covariance rows", n, ryd.nrows()));
    }
    let defect = linalg::hermitian_defect(ryy);
    if defect > HERMITIAN_TOL * ryy.norm() {
        return Err(Error::NotHermitian { defect });
    }
    if ryd.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(MwfFilter {
            w: CMat::zeros(n, ryd.ncols()),
            regularization: 0.0,
            condition: 1.0,
        });
    }

    let scale = linalg::trace_re(ryy) / n.max(1) as f64;
    if !(scale > 0.0) {
        return Err(Error::Singular { max_regularization: 0.0 });
    }

    let mut loads = vec![0.0];
    let mut eps = reg.initial * scale;
    while eps <= reg.max * scale * (1.0 + 1e-12) {
        loads.push(eps);
        eps *= reg.step;
    }

    for &load in &loads {
        let loaded = with_load(ryy, load);
        if let Some(factor) = HermitianFactor::new(&loaded, reg.pivot_tol) {
            let w = factor.solve(ryd);
            if w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok(MwfFilter {
                    w,
                    regularization: load,
                    condition: factor.pivot_condition(),
                });
            }
        }
    }

    // Indefinite input (e.g. a noisy subtraction): pivoted LU at maximum load.
    let load = reg.max * scale;
    let loaded = with_load(ryy, load);
    match LU::new(loaded).solve(ryd) {
        Some(w) if w.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => Ok(MwfFilter {
            w,
            regularization: load,
            condition: f64::INFINITY,
        }),
        _ => Err(Error::Singular { max_regularization: load }),
    }
}

fn with_load(r: &CMat, load: f64) -> CMat {
    let mut out = r.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += C64::new(load, 0.0);
    }
    out
}

/// Network-wide MWF of node `k`: `W_k = R_yy^-1 R_ss E_k`.
pub fn centralized_filter(scms: &ScmSet, k: usize, target: &SelectionMatrix) -> Result<MwfFilter> {
    let e = target.network(&scms.layout, k);
    solve_mwf(&scms.ryy, &(&scms.rss * e))
}

/// MWF of node `k` restricted to its own sensors.
pub fn local_filter(scms: &ScmSet, k: usize, target: &SelectionMatrix) -> Result<MwfFilter> {
    let ryy = scms.node_ryy(k);
    let rss = scms.node_rss(k);
    solve_mwf(&ryy, &(rss * target.local()))
}

/// Fusion filter estimating the global component `E^T (s_glob + n_glob)` of
/// node `k` from its own sensors: `P_k = R_{y_k y_k}^-1 R_glob,k E`.
pub fn local_global_fusion_filter(
    node_ryy: &CMat,
    node_global: &CMat,
    selection: &SelectionMatrix,
) -> Result<MwfFilter> {
    if node_global.shape() != node_ryy.shape() {
        return Err(Error::dim(
            "global-component SCM",
            format!("{:?}", node_ryy.shape()),
            format!("{:?}", node_global.shape()),
        ));
    }
    solve_mwf(node_ryy, &(node_global * selection.local()))
}
