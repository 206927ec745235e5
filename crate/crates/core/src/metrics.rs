//! Evaluation metrics and the per-frame run report.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::scm::ScmSet;

/// Frame MSE averaged over nodes, target channels and samples:
/// `1/(K J B) sum_k sum_n ||d_hat_k[n] - d_k[n]||^2`.
pub fn mse_d(estimates: &[CMat], targets: &[CMat]) -> Result<f64> {
    if estimates.len() != targets.len() {
        return Err(Error::dim("mse_d node count", targets.len(), estimates.len()));
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("mse_d over zero nodes"));
    }
    let shape = targets[0].shape();
    let mut total = 0.0;
    for (est, tgt) in estimates.iter().zip(targets) {
        if est.shape() != tgt.shape() || tgt.shape() != shape {
            return Err(Error::dim(
                "mse_d frame shape",
                format!("{shape:?}"),
                format!("{:?}", est.shape()),
            ));
        }
        total += (est - tgt).norm_squared();
    }
    let (j, b) = shape;
    Ok(total / (estimates.len() * j * b) as f64)
}

/// Expected per-channel MSE of the estimate `W^H y` of `d = E^T s`:
/// `(tr(E^H R_ss E) - 2 Re tr(W^H R_ss E) + tr(W^H R_yy W)) / J`.
pub fn expected_mse(w: &CMat, scms: &ScmSet, e: &CMat) -> f64 {
    let rss_e = &scms.rss * e;
    let target = linalg::trace_re(&e.ad_mul(&rss_e));
    let cross = linalg::trace_re(&w.ad_mul(&rss_e));
    let output = linalg::trace_re(&w.ad_mul(&(&scms.ryy * w)));
    (target - 2.0 * cross + output) / e.ncols() as f64
}

/// `10 log10(desired / residual)`, `+inf` when the residual vanishes.
pub fn snr_db(desired_power: f64, residual_power: f64) -> f64 {
    if residual_power == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (desired_power / residual_power).log10()
    }
}

/// SNR on the first channel of each node's estimate, averaged in dB over
/// nodes. `desired[k]` and `residual[k]` are the filter outputs for the
/// desired-only and noise-only inputs of node `k` (`J x n`).
pub fn snr_first_channel(desired: &[CMat], residual: &[CMat]) -> Result<f64> {
    if desired.len() != residual.len() || desired.is_empty() {
        return Err(Error::dim("SNR node count", desired.len(), residual.len()));
    }
    let mut acc = 0.0;
    for (d, r) in desired.iter().zip(residual) {
        if d.shape() != r.shape() || d.nrows() == 0 {
            return Err(Error::dim("SNR component shape", format!("{:?}", d.shape()), format!("{:?}", r.shape())));
        }
        let pd: f64 = d.row(0).iter().map(|z| z.norm_sqr()).sum();
        let pr: f64 = r.row(0).iter().map(|z| z.norm_sqr()).sum();
        acc += snr_db(pd, pr);
    }
    Ok(acc / desired.len() as f64)
}

/// Real-valued variant for time-domain audio (one channel per node).
pub fn snr_first_channel_real(desired: &[Vec<f64>], residual: &[Vec<f64>]) -> Result<f64> {
    if desired.len() != residual.len() || desired.is_empty() {
        return Err(Error::dim("SNR node count", desired.len(), residual.len()));
    }
    let mut acc = 0.0;
    for (d, r) in desired.iter().zip(residual) {
        if d.len() != r.len() {
            return Err(Error::dim("SNR signal length", d.len(), r.len()));
        }
        let pd: f64 = d.iter().map(|x| x * x).sum();
        let pr: f64 = r.iter().map(|x| x * x).sum();
        acc += snr_db(pd, pr);
    }
    Ok(acc / desired.len() as f64)
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub frame: usize,
    pub algorithm: String,
    pub mse_d: f64,
    pub snr_db: f64,
    pub filter_gap: f64,
}

pub const CSV_HEADER: &str = "frame,algorithm,mse_d,snr_db,filter_gap";

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    /// JSON echo of the configuration that produced the run.
    pub config: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// Input SNR per node (first sensor).
    pub snr_before: Vec<f64>,
    /// Output SNR per node and algorithm, over the whole run.
    pub snr_after: BTreeMap<String, Vec<f64>>,
}

impl RunReport {
    pub fn algorithms(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.algorithm) {
                seen.push(r.algorithm.clone());
            }
        }
        seen
    }

    pub fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn mse_trace(&self, algorithm: &str) -> Vec<f64> {
        self.rows_for(algorithm).map(|r| r.mse_d).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.frame, r.algorithm, r.mse_d, r.snr_db, r.filter_gap
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
