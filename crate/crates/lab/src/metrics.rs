use adp_core::Signal64;
use anyhow::{ensure, Result};

use crate::presets::psnr_of;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `|x - x_ref|` in the grid-weighted norm.
    pub l2_error: f64,
    /// `20 log10(max|x_ref| / rmse)`; infinite for an exact match.
    pub psnr: f64,
}

pub fn metrics(x: &Signal64, x_ref: &Signal64) -> Result<Metrics> {
    ensure!(
        x.len() == x_ref.len(),
        "metrics need signals of equal length, got {} and {}",
        x.len(),
        x_ref.len()
    );
    ensure!(x.same_grid(x_ref), "metrics need signals on the same grid");
    let diff = x.try_sub(x_ref)?;
    let residual = diff.samples().to_vec();
    Ok(Metrics {
        l2_error: diff.norm(),
        psnr: psnr_of(x_ref.max_abs(), &residual),
    })
}

/// CSV text for a float; `inf` is the sentinel for an exact reconstruction.
/// Shortest round-trip form, in exponent notation for tiny or huge values.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
