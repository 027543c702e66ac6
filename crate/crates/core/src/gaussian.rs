//! Canonical-quadrature Gaussian description of the planar spin ensemble.
//!
//! In the planar limit the collective spin maps to a single bosonic mode
//! with `x = Jx / sqrt(<Jz>)`, `p = Jy / sqrt(<Jz>)`; a coherent spin state
//! maps to vacuum with covariance `diag(1/2, 1/2)`. This module carries the
//! first and second canonical moments, the ideal squeezing operation and
//! phase-space rotations, the closed-form single-mode fidelity, and the
//! displaced initial states used for the squeezing-fidelity study.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::moments::{self, MomentState};
use crate::{Error, Result};

/// Mean vector and covariance matrix of the canonical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    /// `(<x>, <p>)`.
    pub mean: [f64; 2],
    /// Row-major symmetric covariance; vacuum is `diag(1/2, 1/2)`.
    pub cov: [[f64; 2]; 2],
}

impl GaussianMoments {
    pub fn vacuum() -> Self {
        Self {
            mean: [0.0, 0.0],
            cov: [[0.5, 0.0], [0.0, 0.5]],
        }
    }

    pub fn det_cov(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    /// Uncertainty relation and positivity, up to `1e-9` slack.
    pub fn is_physical(&self) -> bool {
        let tol = 1e-9;
        self.cov[0][0] > 0.0
            && self.cov[1][1] > 0.0
            && (self.cov[0][1] - self.cov[1][0]).abs() < tol
            && self.det_cov() >= 0.25 - tol
    }
}

/// Map a moment state to canonical Gaussian moments.
///
/// Fails when `<Jz>` has dropped below a tenth of its initial `N/2` (planar
/// limit lost).
pub fn to_gaussian(s: &MomentState, n_atoms: u64) -> Result<GaussianMoments> {
    let jz = s.jz();
    if jz <= 0.05 * n_atoms as f64 {
        return Err(Error::PlanarLimit { jz });
    }
    let root = jz.sqrt();
    let (vxx, vyy, vxy) = moments::transverse_covariance(s);
    Ok(GaussianMoments {
        mean: [s.jp.re / root, s.jp.im / root],
        cov: [[vxx / jz, vxy / jz], [vxy / jz, vyy / jz]],
    })
}

/// Perfect squeezing `{x, p} -> {s x, p / s}`.
pub fn ideal_squeeze(g: &GaussianMoments, s: f64) -> GaussianMoments {
    debug_assert!(s > 0.0);
    GaussianMoments {
        mean: [s * g.mean[0], g.mean[1] / s],
        cov: [
            [s * s * g.cov[0][0], g.cov[0][1]],
            [g.cov[1][0], g.cov[1][1] / (s * s)],
        ],
    }
}

/// Phase-space rotation by `phi`.
pub fn rotate(g: &GaussianMoments, phi: f64) -> GaussianMoments {
    let (sn, cs) = phi.sin_cos();
    let r = [[cs, -sn], [sn, cs]];
    let mean = [
        r[0][0] * g.mean[0] + r[0][1] * g.mean[1],
        r[1][0] * g.mean[0] + r[1][1] * g.mean[1],
    ];
    let mut rc = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            rc[i][j] = r[i][0] * g.cov[0][j] + r[i][1] * g.cov[1][j];
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov[i][j] = rc[i][0] * r[j][0] + rc[i][1] * r[j][1];
        }
    }
    GaussianMoments { mean, cov }
}

/// Closed-form fidelity of two single-mode Gaussian states.
///
/// Symmetric in its arguments and equal to the squared state overlap when
/// both states are pure.
pub fn fidelity(g1: &GaussianMoments, g2: &GaussianMoments) -> Result<f64> {
    if !g1.is_physical() || !g2.is_physical() {
        return Err(Error::Unphysical(
            "covariance violates the uncertainty relation".into(),
        ));
    }
    let sum = [
        [g1.cov[0][0] + g2.cov[0][0], g1.cov[0][1] + g2.cov[0][1]],
        [g1.cov[1][0] + g2.cov[1][0], g1.cov[1][1] + g2.cov[1][1]],
    ];
    let det_sum = sum[0][0] * sum[1][1] - sum[0][1] * sum[1][0];
    let lambda = 4.0 * (g1.det_cov() - 0.25) * (g2.det_cov() - 0.25);
    let lambda = lambda.max(0.0);
    let denom = (det_sum + lambda).sqrt() - lambda.sqrt();

    let d = [g2.mean[0] - g1.mean[0], g2.mean[1] - g1.mean[1]];
    // (A + B)^{-1} applied to the mean difference.
    let inv_det = 1.0 / det_sum;
    let md = inv_det
        * (d[0] * (sum[1][1] * d[0] - sum[0][1] * d[1])
            + d[1] * (sum[0][0] * d[1] - sum[1][0] * d[0]));
    Ok(((-0.5 * md).exp() / denom).clamp(0.0, 1.0))
}

/// Coherent spin state displaced to canonical radius `r` at angle `phase`,
/// as a moment state: `to_gaussian` yields mean `(r cos, r sin)(phase)` and
/// vacuum covariance. Second moments are mean-field factorized on top of the
/// coherent-state covariance.
pub fn displaced_css(n_atoms: u64, r: f64, phase: f64) -> Result<MomentState> {
    let n = n_atoms as f64;
    if r * r >= 0.1 * n {
        return Err(Error::PlanarLimit {
            jz: 0.5 * n - 0.5 * r * r,
        });
    }
    let jz = 0.5 * n - 0.5 * r * r;
    let jp = jz.sqrt() * r * C64::new(0.0, phase).exp();
    Ok(MomentState {
        jp,
        jp2: jp * jp,
        jpjm: jz * (2.0 + r * r),
        jmjp: jz * r * r,
        na: 0.5 * n + jz,
        nb: 0.5 * n - jz,
    })
}

/// Phase-averaged infidelity of a squeezing scheme.
///
/// `per_phase` runs the scheme (optimizing its knobs) for one initial phase
/// and returns the infidelity `1 - F` against the ideal target; phases are
/// the `n_phases` equally spaced angles. Failed phases are skipped and
/// counted.
#[derive(Debug, Clone)]
pub struct AverageInfidelity {
    pub epsilon: f64,
    pub per_phase: Vec<Option<f64>>,
    pub failed_phases: usize,
}

pub fn average_infidelity<F>(mut per_phase: F, s: f64, r: f64, n_phases: usize) -> Result<AverageInfidelity>
where
    F: FnMut(f64, f64, f64) -> Result<f64>,
{
    if n_phases < 4 {
        return Err(Error::InvalidParams("need at least 4 phases".into()));
    }
    let mut results = Vec::with_capacity(n_phases);
    let mut sum = 0.0;
    let mut ok = 0usize;
    for k in 0..n_phases {
        let phase = 2.0 * std::f64::consts::PI * k as f64 / n_phases as f64;
        match per_phase(s, r, phase) {
            Ok(eps) => {
                results.push(Some(eps));
                sum += eps;
                ok += 1;
            }
            Err(_) => results.push(None),
        }
    }
    if ok == 0 {
        return Err(Error::Integration(
            "every phase of the infidelity average failed".into(),
        ));
    }
    Ok(AverageInfidelity {
        epsilon: sum / ok as f64,
        per_phase: results,
        failed_phases: n_phases - ok,
    })
}
