//! Effective open-system model of the driven atom-cavity ensemble.
//!
//! Translates the physical drive/cavity parameters into the coefficients of
//! the effective ground-manifold Hamiltonian and Lindblad operators obtained
//! after adiabatic elimination of the excited state and the cavity field.
//! All rates are expressed in units of the total excited-state decay rate
//! (so a "nominal" parameter set has `gamma_a + gamma_b + gamma_o = 1`), and
//! times in the inverse of that rate.
//!
//! The effective Hamiltonian is parameterized as
//! `H = -1/2 (H_{+-} J+J- + H_{++} J+J+ + h.c.)` and the per-atom Lindblad
//! operators as
//! `L_x^(k) = sqrt(gamma_x) (chi1 |x><a| + chi2 |x><b| + chi3 |x><a|J+
//!            + chi4 |x><b|J- + chi5 |x><a|J- + chi6 |x><b|J+)`,
//! with a collective cavity-decay operator `kappa1 J- + kappa2 J+`.
//!
//! Each Lindblad coefficient carries two rotating components (the two
//! bichromatic drive tones rotate against each other at twice the two-photon
//! detuning). Their interference terms average to zero, so dissipators are
//! evaluated as the sum over the two components; [`EffectiveModel::chi_prod`]
//! and friends encode exactly that product rule.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Serialize complex numbers as `[re, im]` arrays in JSON configs.
pub mod c64_pair {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// Laser, cavity, and atomic parameters of the squeezing setup.
///
/// `omega1`/`omega3` drive the a-e transition (detuning `delta1`),
/// `omega2`/`omega4` the b-e transition (detuning `delta2`); `delta` is the
/// two-photon detuning of the Raman processes against the cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    #[serde(with = "c64_pair")]
    pub omega1: C64,
    #[serde(with = "c64_pair")]
    pub omega2: C64,
    #[serde(with = "c64_pair")]
    pub omega3: C64,
    #[serde(with = "c64_pair")]
    pub omega4: C64,
    #[serde(with = "c64_pair")]
    pub g_a: C64,
    #[serde(with = "c64_pair")]
    pub g_b: C64,
    pub delta1: f64,
    pub delta2: f64,
    /// Two-photon detuning.
    pub delta: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    /// Decay branching into ground states outside the {a, b} manifold.
    pub gamma_o: f64,
    /// Cavity intensity decay rate.
    pub kappa: f64,
    pub n_atoms: u64,
    /// Ground-state splitting; recorded for validity reporting only.
    pub omega_b: f64,
}

impl PhysicalParams {
    /// Total excited-state decay rate (1 for a nominal parameter set).
    pub fn gamma_total(&self) -> f64 {
        self.gamma_a + self.gamma_b + self.gamma_o
    }

    /// Detuning of the second drive tone on the a-e transition.
    pub fn delta3(&self) -> f64 {
        self.delta1 + 2.0 * self.delta
    }

    /// Detuning of the second drive tone on the b-e transition.
    pub fn delta4(&self) -> f64 {
        self.delta2 + 2.0 * self.delta
    }

    /// Single-atom cooperativity `C = |g_a g_b| / (kappa Gamma)`.
    ///
    /// The two transitions may couple with different strengths; the geometric
    /// mean reduces to the usual `g^2/(kappa Gamma)` when they are equal.
    pub fn cooperativity(&self) -> f64 {
        let g2 = (self.g_a * self.g_b).norm();
        if g2 == 0.0 {
            return 0.0;
        }
        g2 / (self.kappa * self.gamma_total())
    }

    /// Collective cooperativity `N C`.
    pub fn collective_cooperativity(&self) -> f64 {
        self.n_atoms as f64 * self.cooperativity()
    }

    /// Check the structural invariants of a nominal parameter set.
    pub fn validate(&self) -> Result<()> {
        if self.gamma_a < 0.0 || self.gamma_b < 0.0 || self.gamma_o < 0.0 {
            return Err(Error::InvalidParams("negative decay rate".into()));
        }
        if (self.gamma_total() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "gamma_a + gamma_b + gamma_o = {} but rates are in units of the total decay",
                self.gamma_total()
            )));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParams("negative cavity decay".into()));
        }
        if self.delta1 == 0.0 || self.delta2 == 0.0 {
            return Err(Error::InvalidParams("delta1, delta2 must be nonzero".into()));
        }
        if self.n_atoms < 2 {
            return Err(Error::InvalidParams("need at least two atoms".into()));
        }
        Ok(())
    }
}

/// One rotating component of the effective Lindblad coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LindbladComponent {
    /// `chi[0..6]` = chi1..chi6 in the order documented on the module.
    pub chi: [C64; 6],
    /// Coefficient of `J-` in the collective cavity-decay operator.
    pub kappa1: C64,
    /// Coefficient of `J+` in the collective cavity-decay operator.
    pub kappa2: C64,
}

/// Effective-model coefficients evaluated at fixed mean populations.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    /// Coefficient of `J+J-` (only its real part enters the dynamics).
    pub h_plusminus: C64,
    /// Coefficient of `J+J+`.
    pub h_plusplus: C64,
    /// Component of the Lindblad coefficients driven by the (Omega1, Omega2) tones.
    pub co: LindbladComponent,
    /// Component driven by the (Omega3, Omega4) tones.
    pub counter: LindbladComponent,
    /// Cavity decay rate modified by the atom-cavity coupling.
    pub kappa_tilde: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub gamma_o: f64,
    pub n_atoms: u64,
}

impl EffectiveModel {
    pub fn gamma_total(&self) -> f64 {
        self.gamma_a + self.gamma_b + self.gamma_o
    }

    /// Model with every coupling switched off (free evolution).
    pub fn zeroed(n_atoms: u64) -> Self {
        Self {
            h_plusminus: C64::default(),
            h_plusplus: C64::default(),
            co: LindbladComponent::default(),
            counter: LindbladComponent::default(),
            kappa_tilde: 0.0,
            gamma_a: 0.0,
            gamma_b: 0.0,
            gamma_o: 0.0,
            n_atoms,
        }
    }

    /// Ideal two-axis countertwisting `alpha (J_theta^2 - J_{theta+pi/2}^2)`
    /// with no dissipation.
    pub fn ideal_two_axis(alpha: f64, theta: f64, n_atoms: u64) -> Self {
        let mut m = Self::zeroed(n_atoms);
        m.h_plusplus = -alpha * (C64::new(0.0, -2.0 * theta)).exp();
        m
    }

    /// Ideal one-axis twisting `alpha J_theta^2` with no dissipation.
    pub fn ideal_one_axis(alpha: f64, theta: f64, n_atoms: u64) -> Self {
        let mut m = Self::zeroed(n_atoms);
        m.h_plusplus = -0.5 * alpha * (C64::new(0.0, -2.0 * theta)).exp();
        m.h_plusminus = C64::new(-0.5 * alpha, 0.0);
        m
    }

    /// Attach a single collective-decay operator `kappa1 J- + kappa2 J+`.
    pub fn with_collective_pair(mut self, kappa1: C64, kappa2: C64) -> Self {
        self.co.kappa1 = kappa1;
        self.co.kappa2 = kappa2;
        self
    }

    /// Component-summed product `sum_c chi_i^(c) conj(chi_j^(c))`, the value
    /// every `chi_i chi_j^*` cross term in the moment equations takes after
    /// the counter-rotating interference has been averaged away.
    /// Indices are zero-based (0 -> chi1, ..., 5 -> chi6).
    pub fn chi_prod(&self, i: usize, j: usize) -> C64 {
        self.co.chi[i] * self.co.chi[j].conj() + self.counter.chi[i] * self.counter.chi[j].conj()
    }

    /// `sum_c |chi_i^(c)|^2`.
    pub fn chi_abs2(&self, i: usize) -> f64 {
        self.co.chi[i].norm_sqr() + self.counter.chi[i].norm_sqr()
    }

    /// `sum_c |kappa1^(c)|^2`.
    pub fn kappa11(&self) -> f64 {
        self.co.kappa1.norm_sqr() + self.counter.kappa1.norm_sqr()
    }

    /// `sum_c |kappa2^(c)|^2`.
    pub fn kappa22(&self) -> f64 {
        self.co.kappa2.norm_sqr() + self.counter.kappa2.norm_sqr()
    }

    /// `sum_c kappa1^(c) conj(kappa2^(c))`.
    pub fn kappa12(&self) -> C64 {
        self.co.kappa1 * self.co.kappa2.conj() + self.counter.kappa1 * self.counter.kappa2.conj()
    }
}

/// Modified cavity decay rate at the given mean populations.
pub fn kappa_tilde(p: &PhysicalParams, mean_na: f64, mean_nb: f64) -> f64 {
    let gamma = p.gamma_total();
    let da = 4.0 * p.delta2 * p.delta2 + gamma * gamma;
    let db = 4.0 * p.delta1 * p.delta1 + gamma * gamma;
    p.kappa
        + gamma
            * (4.0 * mean_na * p.g_a.norm_sqr() / da + 4.0 * mean_nb * p.g_b.norm_sqr() / db)
}

/// Evaluate the effective-model coefficients for `p` with the number
/// operators replaced by the supplied mean occupations.
pub fn build_effective_model(
    p: &PhysicalParams,
    mean_na: f64,
    mean_nb: f64,
) -> Result<EffectiveModel> {
    if p.gamma_a < 0.0 || p.gamma_b < 0.0 || p.gamma_o < 0.0 || p.kappa < 0.0 {
        return Err(Error::InvalidParams("negative decay rate".into()));
    }
    if mean_na < 0.0 || mean_nb < 0.0 {
        return Err(Error::InvalidParams("negative mean occupation".into()));
    }
    let gamma = p.gamma_total();
    let kt = kappa_tilde(p, mean_na, mean_nb);
    if p.delta == 0.0 && kt == 0.0 {
        return Err(Error::ZeroResolvent);
    }

    let r_plus = C64::new(p.delta, 0.5 * kt);
    let r_minus = C64::new(p.delta, -0.5 * kt);
    let s1 = 2.0 * p.delta1 * p.delta1 + 0.5 * gamma * gamma;
    let s2 = 2.0 * p.delta2 * p.delta2 + 0.5 * gamma * gamma;
    let d1 = C64::new(2.0 * p.delta1, -gamma);
    let d2 = C64::new(2.0 * p.delta2, -gamma);
    let p1 = 0.5 * d1;
    let p2 = 0.5 * d2;

    // Hamiltonian: the J-J+ coefficient is folded onto J+J- (normal ordering;
    // the leftover collective J_z rotation is dropped, as in the moment
    // equations), and the J-J- coefficient onto J+J+ through the h.c. sum.
    let cpm = (p.g_b.norm_sqr() * p.delta1 * p.delta1 / (s1 * s1))
        * (p.omega3.norm_sqr() / r_minus - p.omega1.norm_sqr() / r_plus);
    let cmp = (p.g_a.norm_sqr() * p.delta2 * p.delta2 / (s2 * s2))
        * (p.omega4.norm_sqr() / r_minus - p.omega2.norm_sqr() / r_plus);
    let gmm = p.g_a * p.g_b.conj() * p.delta1 * p.delta2 / (s1 * s2);
    let gpp = p.g_a.conj() * p.g_b * p.delta1 * p.delta2 / (s1 * s2);
    let cmm = gmm * (p.omega3 * p.omega4.conj() / r_minus - p.omega1 * p.omega2.conj() / r_plus);
    let cpp = gpp
        * (p.omega3.conj() * p.omega4 / r_minus - p.omega1.conj() * p.omega2 / r_plus);

    let h_plusminus = cpm + cmp;
    let h_plusplus = cpp + cmm.conj();

    let sqrt_kappa = p.kappa.sqrt();
    let component = |om_a: C64, om_b: C64, r: C64, sign: f64| LindbladComponent {
        chi: [
            om_a / d1,
            om_b / d2,
            sign * (p.g_a.norm_sqr() / s2) * (p.delta2 / p2) * (om_b / r),
            sign * (p.g_b.norm_sqr() / s1) * (p.delta1 / p1) * (om_a / r),
            sign * (p.g_a * p.g_b.conj() / s1) * (p.delta1 / p2) * (om_a / r),
            sign * (p.g_a.conj() * p.g_b / s2) * (p.delta2 / p1) * (om_b / r),
        ],
        kappa1: sign * sqrt_kappa * (p.g_b.conj() * p.delta1 / s1) * (om_a / r),
        kappa2: sign * sqrt_kappa * (p.g_a.conj() * p.delta2 / s2) * (om_b / r),
    };

    Ok(EffectiveModel {
        h_plusminus,
        h_plusplus,
        co: component(p.omega1, p.omega2, r_plus, 1.0),
        counter: component(p.omega3, p.omega4, r_minus, -1.0),
        kappa_tilde: kt,
        gamma_a: p.gamma_a,
        gamma_b: p.gamma_b,
        gamma_o: p.gamma_o,
        n_atoms: p.n_atoms,
    })
}

/// Raman coupling of the (Omega1, g_b) path: `2 Omega1 g_b^* Delta1 / (4 Delta1^2 + Gamma^2)`.
pub fn chi_path_a(p: &PhysicalParams) -> C64 {
    let gamma = p.gamma_total();
    2.0 * p.omega1 * p.g_b.conj() * p.delta1 / (4.0 * p.delta1 * p.delta1 + gamma * gamma)
}

/// Raman coupling of the (Omega2, g_a) path: `2 Omega2 g_a^* Delta2 / (4 Delta2^2 + Gamma^2)`.
pub fn chi_path_b(p: &PhysicalParams) -> C64 {
    let gamma = p.gamma_total();
    2.0 * p.omega2 * p.g_a.conj() * p.delta2 / (4.0 * p.delta2 * p.delta2 + gamma * gamma)
}

/// Tune the four drive tones for two-axis countertwisting at Raman coupling
/// `chi`: both Raman paths are matched (the second with a pi/2 phase lead)
/// and the second tone pair mirrors the first with `Omega3 = -Omega1`,
/// `Omega4 = Omega2`.
///
/// Fails if either required drive would exceed `weak_drive_cap * detuning`.
pub fn tune_two_axis(base: &PhysicalParams, chi: C64, weak_drive_cap: f64) -> Result<PhysicalParams> {
    if base.g_a == C64::default()
        || base.g_b == C64::default()
        || base.delta1 == 0.0
        || base.delta2 == 0.0
    {
        return Err(Error::InvalidParams(
            "two-axis tuning needs nonzero cavity couplings and detunings".into(),
        ));
    }
    let gamma = base.gamma_total();
    let s1 = 2.0 * base.delta1 * base.delta1 + 0.5 * gamma * gamma;
    let s2 = 2.0 * base.delta2 * base.delta2 + 0.5 * gamma * gamma;
    let omega1 = chi * s1 / (base.g_b.conj() * base.delta1);
    let omega2 = chi * s2 / (C64::i() * base.g_a.conj() * base.delta2);
    for (om, det) in [(omega1, base.delta1), (omega2, base.delta2)] {
        let ratio = om.norm() / det.abs();
        if ratio > weak_drive_cap * (1.0 + 1e-12) {
            return Err(Error::WeakDriveCap {
                required: ratio,
                cap: weak_drive_cap,
            });
        }
    }
    let mut p = base.clone();
    p.omega1 = omega1;
    p.omega2 = omega2;
    p.omega3 = -omega1;
    p.omega4 = omega2;
    Ok(p)
}

/// Tune the two-tone (one-axis) scheme so both Raman paths have magnitude
/// `|chi_tilde|` and the twisting axis sits at `theta`; the second tone pair
/// is off.
pub fn tune_one_axis(
    base: &PhysicalParams,
    chi_tilde: C64,
    theta: f64,
    weak_drive_cap: f64,
) -> Result<PhysicalParams> {
    if base.g_a == C64::default()
        || base.g_b == C64::default()
        || base.delta1 == 0.0
        || base.delta2 == 0.0
    {
        return Err(Error::InvalidParams(
            "one-axis tuning needs nonzero cavity couplings and detunings".into(),
        ));
    }
    let gamma = base.gamma_total();
    let s1 = 2.0 * base.delta1 * base.delta1 + 0.5 * gamma * gamma;
    let s2 = 2.0 * base.delta2 * base.delta2 + 0.5 * gamma * gamma;
    let omega1 = chi_tilde * s1 / (base.g_b.conj() * base.delta1);
    let omega2 =
        chi_tilde * C64::new(0.0, -2.0 * theta).exp() * s2 / (base.g_a.conj() * base.delta2);
    for (om, det) in [(omega1, base.delta1), (omega2, base.delta2)] {
        let ratio = om.norm() / det.abs();
        if ratio > weak_drive_cap * (1.0 + 1e-12) {
            return Err(Error::WeakDriveCap {
                required: ratio,
                cap: weak_drive_cap,
            });
        }
    }
    let mut p = base.clone();
    p.omega1 = omega1;
    p.omega2 = omega2;
    p.omega3 = C64::default();
    p.omega4 = C64::default();
    Ok(p)
}

/// Two-axis twisting rate `alpha = 16 |chi|^2 delta / (4 delta^2 + kappa_tilde^2)`.
pub fn two_axis_rate(chi: C64, delta: f64, kappa_tilde: f64) -> f64 {
    debug_assert!(
        delta != 0.0 || kappa_tilde != 0.0,
        "two_axis_rate needs (delta, kappa_tilde) != (0, 0)"
    );
    16.0 * chi.norm_sqr() * delta / (4.0 * delta * delta + kappa_tilde * kappa_tilde)
}

/// Thresholds used by [`validity_report`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidityThresholds {
    /// Factor standing in for "much greater than"; margins must beat it.
    pub separation_factor: f64,
    /// Weak-drive cap on `|Omega| / Delta`.
    pub weak_drive_cap: f64,
}

impl Default for ValidityThresholds {
    fn default() -> Self {
        Self {
            separation_factor: 10.0,
            weak_drive_cap: 1.0 / 50.0,
        }
    }
}

/// Margins for the approximations behind the effective model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityReport {
    /// `min(|Delta1|, |Delta2|) / (N C Gamma)`; must be large.
    pub cavity_shift_margin: f64,
    pub cavity_shift_ok: bool,
    /// `8 N |chi|^2 |delta| / (4 delta^2 + kappa^2)`; must be small.
    pub adiabatic_margin: f64,
    pub adiabatic_ok: bool,
    /// `max_i |Omega_i| / Delta_i`; must stay under the weak-drive cap.
    pub weak_drive_margin: f64,
    pub weak_drive_ok: bool,
    pub cooperativity: f64,
    pub collective_cooperativity: f64,
    pub thresholds: ValidityThresholds,
}

/// Evaluate the validity margins of the adiabatic eliminations for `p`.
pub fn validity_report(p: &PhysicalParams, thresholds: ValidityThresholds) -> ValidityReport {
    let gamma = p.gamma_total();
    let c = p.cooperativity();
    let nc = p.collective_cooperativity();

    let cavity_shift_margin = if nc == 0.0 {
        f64::INFINITY
    } else {
        p.delta1.abs().min(p.delta2.abs()) / (nc * gamma)
    };

    let chi2 = (chi_path_a(p) * chi_path_b(p)).norm();
    let adiabatic_margin = if p.delta == 0.0 && p.kappa == 0.0 {
        0.0
    } else {
        8.0 * p.n_atoms as f64 * chi2 * p.delta.abs()
            / (4.0 * p.delta * p.delta + p.kappa * p.kappa)
    };

    let weak_drive_margin = [
        p.omega1.norm() / p.delta1.abs(),
        p.omega3.norm() / p.delta1.abs(),
        p.omega2.norm() / p.delta2.abs(),
        p.omega4.norm() / p.delta2.abs(),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);

    ValidityReport {
        cavity_shift_margin,
        cavity_shift_ok: cavity_shift_margin >= thresholds.separation_factor,
        adiabatic_margin,
        adiabatic_ok: adiabatic_margin <= 1.0 / thresholds.separation_factor,
        weak_drive_margin,
        weak_drive_ok: weak_drive_margin <= thresholds.weak_drive_cap * (1.0 + 1e-12),
        cooperativity: c,
        collective_cooperativity: nc,
        thresholds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn test_params() -> PhysicalParams {
        PhysicalParams {
            omega1: C64::new(4.0, 0.0),
            omega2: C64::new(0.0, -3.0),
            omega3: C64::new(-4.0, 0.0),
            omega4: C64::new(0.0, -3.0),
            g_a: C64::new(0.3, 0.1),
            g_b: C64::new(0.25, -0.05),
            delta1: 400.0,
            delta2: 300.0,
            delta: 8.0,
            gamma_a: 1.0 / 3.0,
            gamma_b: 1.0 / 3.0,
            gamma_o: 1.0 / 3.0,
            kappa: 1.0,
            n_atoms: 1000,
            omega_b: 100.0,
        }
    }

    #[test]
    fn no_cavity_coupling_kills_cavity_mediated_terms() {
        let mut p = test_params();
        p.g_a = C64::default();
        p.g_b = C64::default();
        let m = build_effective_model(&p, 900.0, 100.0).unwrap();
        for comp in [&m.co, &m.counter] {
            for i in 2..6 {
                assert_eq!(comp.chi[i], C64::default());
            }
            assert_eq!(comp.kappa1, C64::default());
            assert_eq!(comp.kappa2, C64::default());
        }
        assert_eq!(m.kappa_tilde, p.kappa);
        assert_eq!(m.h_plusplus, C64::default());
        assert_eq!(m.h_plusminus, C64::default());
        // The laser-only decay coefficients survive.
        assert!(m.co.chi[0].norm() > 0.0);
    }

    #[test]
    fn kappa_tilde_single_species() {
        // All atoms in |a>, coupling g on the a-transition only.
        let mut p = test_params();
        p.g_a = C64::new(0.5, 0.0);
        p.g_b = C64::default();
        p.delta2 = 70.0;
        let n = p.n_atoms as f64;
        let kt = kappa_tilde(&p, n, 0.0);
        let expect = p.kappa + 4.0 * n * 0.25 / (4.0 * 70.0 * 70.0 + 1.0);
        assert_relative_eq!(kt, expect, max_relative = 1e-14);
    }

    #[test]
    fn two_axis_tuning_reduces_to_pure_countertwisting() {
        let p = test_params();
        let chi = C64::new(2.0e-3, 0.9e-3);
        let tuned = tune_two_axis(&p, chi, 1.0 / 50.0).unwrap();
        assert_eq!(tuned.omega3, -tuned.omega1);
        assert_eq!(tuned.omega4, tuned.omega2);
        // Both Raman paths match the requested coupling.
        assert_relative_eq!((chi_path_a(&tuned) - chi).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            (C64::i() * chi_path_b(&tuned) - chi).norm(),
            0.0,
            epsilon = 1e-15
        );

        let n = tuned.n_atoms as f64;
        let m = build_effective_model(&tuned, n, 0.0).unwrap();
        // The J+J- part of the Hamiltonian cancels (purely imaginary coefficient).
        assert_abs_diff_eq!(m.h_plusminus.re, 0.0, epsilon = 1e-12 * m.h_plusminus.norm());
        // The J+J+ part reduces to the pure countertwisting rate: |H++| = alpha
        // with a pi/2 phase (axis at theta = +-pi/4).
        let alpha = two_axis_rate(chi, tuned.delta, m.kappa_tilde);
        assert_relative_eq!(m.h_plusplus.im.abs(), alpha.abs(), max_relative = 1e-12);
        assert_abs_diff_eq!(m.h_plusplus.re, 0.0, epsilon = 1e-12 * alpha.abs());
    }

    #[test]
    fn two_axis_tuning_phase_relation() {
        // Real equal couplings and equal detunings: Omega2/Omega1 = -i.
        let mut p = test_params();
        p.g_a = C64::new(0.3, 0.0);
        p.g_b = C64::new(0.3, 0.0);
        p.delta2 = p.delta1;
        let tuned = tune_two_axis(&p, C64::new(1e-3, 0.0), 1.0 / 50.0).unwrap();
        let ratio = tuned.omega2 / tuned.omega1;
        assert_relative_eq!((ratio - C64::new(0.0, -1.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_axis_tuning_zero_chi_and_cap() {
        let p = test_params();
        let tuned = tune_two_axis(&p, C64::default(), 1.0 / 50.0).unwrap();
        assert_eq!(tuned.omega1, C64::default());
        assert_eq!(tuned.omega2, C64::default());
        assert_eq!(tuned.omega3, C64::default());
        assert_eq!(tuned.omega4, C64::default());

        let err = tune_two_axis(&p, C64::new(1.0, 0.0), 1.0 / 50.0).unwrap_err();
        assert!(matches!(err, Error::WeakDriveCap { .. }));
    }

    #[test]
    fn two_axis_rate_examples() {
        assert_eq!(two_axis_rate(C64::default(), 3.0, 1.0), 0.0);
        assert_eq!(two_axis_rate(C64::new(0.2, 0.0), 0.0, 1.0), 0.0);
        let alpha = two_axis_rate(C64::new(0.1, 0.0), 10.0, 1.0);
        assert_relative_eq!(alpha, 16.0 * 0.01 * 10.0 / 401.0, max_relative = 1e-14);
        assert_relative_eq!(alpha, 3.9900e-3, max_relative = 1e-4);
        // Sign follows the sign of the detuning.
        assert!(two_axis_rate(C64::new(0.1, 0.0), -10.0, 1.0) < 0.0);
    }

    #[test]
    fn validity_examples() {
        let thr = ValidityThresholds::default();

        let mut p = test_params();
        p.g_a = C64::default();
        p.g_b = C64::default();
        let r = validity_report(&p, thr);
        assert_eq!(r.cooperativity, 0.0);
        assert!(r.cavity_shift_ok);

        // Paper operating point: Delta = 20 NC Gamma gives margin 20.
        let mut p = test_params();
        p.g_a = C64::new(0.1, 0.0);
        p.g_b = C64::new(0.1, 0.0);
        let nc = p.collective_cooperativity();
        p.delta1 = 20.0 * nc;
        p.delta2 = 20.0 * nc;
        let r = validity_report(&p, thr);
        assert_relative_eq!(r.cavity_shift_margin, 20.0, max_relative = 1e-12);
        assert!(r.cavity_shift_ok);

        // Omega/Delta = 1/16 violates the weak-drive cap.
        let mut p = test_params();
        p.omega1 = C64::new(p.delta1 / 16.0, 0.0);
        let r = validity_report(&p, thr);
        assert_relative_eq!(r.weak_drive_margin, 1.0 / 16.0, max_relative = 1e-12);
        assert!(!r.weak_drive_ok);
    }

    #[test]
    fn scaling_covariance() {
        let p = test_params();
        let s = 2.0;
        let mut ps = p.clone();
        ps.omega1 *= s;
        ps.omega2 *= s;
        ps.omega3 *= s;
        ps.omega4 *= s;
        ps.g_a *= s;
        ps.g_b *= s;
        ps.delta1 *= s;
        ps.delta2 *= s;
        ps.delta *= s;
        ps.kappa *= s;
        ps.gamma_a *= s;
        ps.gamma_b *= s;
        ps.gamma_o *= s;

        let na = 700.0;
        let nb = 300.0;
        let m = build_effective_model(&p, na, nb).unwrap();
        let ms = build_effective_model(&ps, na, nb).unwrap();

        assert_relative_eq!(ms.kappa_tilde, s * m.kappa_tilde, max_relative = 1e-12);
        assert_relative_eq!(
            (ms.h_plusplus - s * m.h_plusplus).norm(),
            0.0,
            epsilon = 1e-12 * m.h_plusplus.norm() * s
        );
        assert_relative_eq!(
            (ms.h_plusminus - s * m.h_plusminus).norm(),
            0.0,
            epsilon = 1e-12 * m.h_plusminus.norm() * s
        );
        for (cs, c) in [(&ms.co, &m.co), (&ms.counter, &m.counter)] {
            for i in 0..6 {
                assert_relative_eq!(
                    (cs.chi[i] - c.chi[i]).norm(),
                    0.0,
                    epsilon = 1e-12 * c.chi[i].norm().max(1e-30)
                );
            }
            assert_relative_eq!(
                (cs.kappa1 - s.sqrt() * c.kappa1).norm(),
                0.0,
                epsilon = 1e-12 * c.kappa1.norm()
            );
            assert_relative_eq!(
                (cs.kappa2 - s.sqrt() * c.kappa2).norm(),
                0.0,
                epsilon = 1e-12 * c.kappa2.norm()
            );
        }
    }

    #[test]
    fn one_axis_reduction_is_rank_one() {
        // anders1 tuning: both Raman paths equal in magnitude; the quadratic
        // form in (J+^2, J-^2, sym J+J-) must be rank one.
        let p = test_params();
        let theta = 0.7;
        let tuned = tune_one_axis(&p, C64::new(1.5e-3, 0.5e-3), theta, 1.0 / 50.0).unwrap();
        assert_eq!(tuned.omega3, C64::default());
        assert_eq!(tuned.omega4, C64::default());
        let m = build_effective_model(&tuned, tuned.n_atoms as f64, 0.0).unwrap();
        // M = [[c_pp, c_pm], [c_pm, c_pp^*]] with c_pp = -H++/2, c_pm = -Re(H+-)/2.
        let cpp = -0.5 * m.h_plusplus;
        let cpm = -0.5 * m.h_plusminus.re;
        let det = (cpp * cpp.conj()).re - cpm * cpm;
        assert_abs_diff_eq!(det, 0.0, epsilon = 1e-12 * (cpm * cpm).abs());
        // Axis angle encoded in the phase of H++ matches the request.
        let phase = (-m.h_plusplus / C64::new(cpm.abs() * 2.0, 0.0)).arg();
        let theta_rec = -0.5 * phase;
        let d = (theta_rec - theta).rem_euclid(std::f64::consts::PI);
        assert!(d < 1e-9 || (std::f64::consts::PI - d) < 1e-9, "theta_rec={theta_rec}");
    }

    #[test]
    fn kappa_tilde_monotone() {
        let p = test_params();
        let base = kappa_tilde(&p, 500.0, 100.0);
        assert!(kappa_tilde(&p, 600.0, 100.0) >= base);
        assert!(kappa_tilde(&p, 500.0, 200.0) >= base);
        let mut pg = p.clone();
        pg.g_a *= 1.5;
        assert!(kappa_tilde(&pg, 500.0, 100.0) >= base);
        let mut pg = p.clone();
        pg.g_b *= 1.5;
        assert!(kappa_tilde(&pg, 500.0, 100.0) >= base);
        assert!(base >= p.kappa);
    }

    #[test]
    fn build_rejects_zero_resolvent_and_negative_rates() {
        let mut p = test_params();
        p.delta = 0.0;
        p.kappa = 0.0;
        p.g_a = C64::default();
        p.g_b = C64::default();
        assert!(matches!(
            build_effective_model(&p, 1.0, 0.0),
            Err(Error::ZeroResolvent)
        ));
        let mut p = test_params();
        p.gamma_a = -0.1;
        assert!(build_effective_model(&p, 1.0, 0.0).is_err());
    }

    #[test]
    fn params_json_round_trip_uses_pair_encoding() {
        let p = test_params();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"omega1\":[4.0,0.0]"));
        let back: PhysicalParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
