//! Exact reference solvers on the symmetric collective-spin space.
//!
//! Pure-state Schroedinger evolution and collective-Lindblad master-equation
//! propagation work on the `J = N/2` ladder (dimension `N + 1`); a
//! product-space master equation over all `2^N` ground configurations backs
//! them up at very small `N`, where the per-atom effective Lindblads can be
//! treated without any symmetry assumption. These solvers are the oracles
//! the linearized moment dynamics are validated against.

use num_complex::Complex64 as C64;

use crate::linalg;
use crate::model::{EffectiveModel, PhysicalParams};
use crate::moments::MomentState;
use crate::ode::{self, OdeOptions, RhsStatus, StopReason};
use crate::scheme::Scheme;
use crate::{Error, Result};

/// `J+` matrix element `sqrt(j(j+1) - m(m+1))` from ladder index `k`
/// (`m = -j + k`), connecting `k -> k+1`.
fn ladder_up(n_atoms: u64, k: usize) -> f64 {
    let j = 0.5 * n_atoms as f64;
    let m = -j + k as f64;
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

/// Pure state on the `J = N/2` ladder; `amps[k]` is the amplitude of
/// `m = -N/2 + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeState {
    pub n_atoms: u64,
    pub amps: Vec<C64>,
}

impl DickeState {
    /// `|m = +N/2>`: every atom in `|a>`.
    pub fn css_top(n_atoms: u64) -> Self {
        let dim = n_atoms as usize + 1;
        let mut amps = vec![C64::default(); dim];
        amps[dim - 1] = C64::new(1.0, 0.0);
        Self { n_atoms, amps }
    }

    pub fn dim(&self) -> usize {
        self.n_atoms as usize + 1
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in self.amps.iter_mut() {
                *a /= n;
            }
        }
    }

    /// Exact collective-spin moments of this state.
    pub fn expectations(&self) -> MomentState {
        let n = self.n_atoms;
        let j = 0.5 * n as f64;
        let mut jp = C64::default();
        let mut jp2 = C64::default();
        let mut jpjm = 0.0;
        let mut jmjp = 0.0;
        let mut jz = 0.0;
        for k in 0..self.dim() {
            let p = self.amps[k].norm_sqr();
            let m = -j + k as f64;
            jz += p * m;
            if k > 0 {
                jpjm += p * ladder_up(n, k - 1) * ladder_up(n, k - 1);
            }
            if k + 1 < self.dim() {
                jmjp += p * ladder_up(n, k) * ladder_up(n, k);
                jp += self.amps[k + 1].conj() * ladder_up(n, k) * self.amps[k];
            }
            if k + 2 < self.dim() {
                jp2 += self.amps[k + 2].conj()
                    * ladder_up(n, k + 1)
                    * ladder_up(n, k)
                    * self.amps[k];
            }
        }
        MomentState {
            jp,
            jp2,
            jpjm,
            jmjp,
            na: j + jz,
            nb: j - jz,
        }
    }
}

/// Density matrix on the ladder, row-major `(N+1) x (N+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeDensity {
    pub n_atoms: u64,
    pub rho: Vec<C64>,
}

impl DickeDensity {
    pub fn pure(state: &DickeState) -> Self {
        let dim = state.dim();
        let mut rho = vec![C64::default(); dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                rho[r * dim + c] = state.amps[r] * state.amps[c].conj();
            }
        }
        Self {
            n_atoms: state.n_atoms,
            rho,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_atoms as usize + 1
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.rho, self.dim())
    }

    /// Trace 1 within 1e-10, Hermitian within 1e-12, eigenvalues >= -1e-10.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Unphysical(format!("trace = {tr}")));
        }
        for r in 0..dim {
            for c in r..dim {
                let d = self.rho[r * dim + c] - self.rho[c * dim + r].conj();
                if d.norm() > 1e-12 {
                    return Err(Error::Unphysical(format!(
                        "hermiticity violated at ({r},{c}) by {}",
                        d.norm()
                    )));
                }
            }
        }
        let min = linalg::hermitian_eigenvalues(&self.rho, dim)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::Unphysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn expectations(&self) -> MomentState {
        let n = self.n_atoms;
        let dim = self.dim();
        let j = 0.5 * n as f64;
        let mut jp = C64::default();
        let mut jp2 = C64::default();
        let mut jpjm = 0.0;
        let mut jmjp = 0.0;
        let mut jz = 0.0;
        for r in 0..dim {
            let p = self.rho[r * dim + r].re;
            let m = -j + r as f64;
            jz += p * m;
            if r > 0 {
                jpjm += p * ladder_up(n, r - 1) * ladder_up(n, r - 1);
            }
            if r + 1 < dim {
                jmjp += p * ladder_up(n, r) * ladder_up(n, r);
                jp += self.rho[r * dim + r + 1] * ladder_up(n, r);
            }
            if r + 2 < dim {
                jp2 += self.rho[r * dim + r + 2] * ladder_up(n, r) * ladder_up(n, r + 1);
            }
        }
        MomentState {
            jp,
            jp2,
            jpjm,
            jmjp,
            na: j + jz,
            nb: j - jz,
        }
    }
}

/// Banded complex matrix on the ladder; row `r` holds columns
/// `r - half_bw ..= r + half_bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    pub dim: usize,
    pub half_bw: usize,
    data: Vec<C64>,
}

impl Banded {
    pub fn zeros(dim: usize, half_bw: usize) -> Self {
        Self {
            dim,
            half_bw,
            data: vec![C64::default(); dim * (2 * half_bw + 1)],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        let off = c as isize - r as isize;
        if off.unsigned_abs() > self.half_bw {
            return C64::default();
        }
        self.data[r * (2 * self.half_bw + 1) + (off + self.half_bw as isize) as usize]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        let off = c as isize - r as isize + self.half_bw as isize;
        self.data[r * (2 * self.half_bw + 1) + off as usize] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: C64) {
        let off = c as isize - r as isize + self.half_bw as isize;
        self.data[r * (2 * self.half_bw + 1) + off as usize] += v;
    }

    pub fn scale(&mut self, s: C64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let hb = self.half_bw as isize;
        for r in 0..self.dim {
            let mut acc = C64::default();
            let lo = (r as isize - hb).max(0) as usize;
            let hi = ((r as isize + hb) as usize).min(self.dim - 1);
            for c in lo..=hi {
                acc += self.get(r, c) * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn adjoint(&self) -> Banded {
        let mut out = Banded::zeros(self.dim, self.half_bw);
        for r in 0..self.dim {
            let lo = r.saturating_sub(self.half_bw);
            let hi = (r + self.half_bw).min(self.dim - 1);
            for c in lo..=hi {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn mul(&self, other: &Banded) -> Banded {
        assert_eq!(self.dim, other.dim);
        let hb = self.half_bw + other.half_bw;
        let mut out = Banded::zeros(self.dim, hb);
        for r in 0..self.dim {
            let klo = r.saturating_sub(self.half_bw);
            let khi = (r + self.half_bw).min(self.dim - 1);
            for k in klo..=khi {
                let a = self.get(r, k);
                if a == C64::default() {
                    continue;
                }
                let clo = k.saturating_sub(other.half_bw);
                let chi = (k + other.half_bw).min(self.dim - 1);
                for c in clo..=chi {
                    out.add_at(r, c, a * other.get(k, c));
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Banded) -> Banded {
        let hb = self.half_bw.max(other.half_bw);
        let mut out = Banded::zeros(self.dim, hb);
        for r in 0..self.dim {
            let lo = r.saturating_sub(hb);
            let hi = (r + hb).min(self.dim - 1);
            for c in lo..=hi {
                out.set(r, c, self.get(r, c) + other.get(r, c));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<C64> {
        let mut m = vec![C64::default(); self.dim * self.dim];
        for r in 0..self.dim {
            let lo = r.saturating_sub(self.half_bw);
            let hi = (r + self.half_bw).min(self.dim - 1);
            for c in lo..=hi {
                m[r * self.dim + c] = self.get(r, c);
            }
        }
        m
    }

    /// Frobenius distance to the adjoint; zero for Hermitian matrices.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        let mut s = 0.0;
        for r in 0..self.dim {
            let lo = r.saturating_sub(self.half_bw);
            let hi = (r + self.half_bw).min(self.dim - 1);
            for c in lo..=hi {
                s += (self.get(r, c) - adj.get(r, c)).norm_sqr();
            }
        }
        s.sqrt()
    }
}

/// Linear combination of collective spin operators,
/// `c+ J+ + c- J- + cx Jx + cy Jy + cz Jz`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CollectiveOperator {
    pub n_atoms: u64,
    pub c_plus: C64,
    pub c_minus: C64,
    pub c_x: C64,
    pub c_y: C64,
    pub c_z: C64,
}

impl CollectiveOperator {
    pub fn raising(n_atoms: u64, c: C64) -> Self {
        Self {
            n_atoms,
            c_plus: c,
            ..Default::default()
        }
    }

    /// `kappa1 J- + kappa2 J+`.
    pub fn cavity_pair(n_atoms: u64, kappa1: C64, kappa2: C64) -> Self {
        Self {
            n_atoms,
            c_plus: kappa2,
            c_minus: kappa1,
            ..Default::default()
        }
    }

    /// Tridiagonal ladder realization.
    pub fn to_banded(&self) -> Banded {
        let dim = self.n_atoms as usize + 1;
        let j = 0.5 * self.n_atoms as f64;
        let i = C64::i();
        let a_plus = self.c_plus + 0.5 * (self.c_x - i * self.c_y);
        let a_minus = self.c_minus + 0.5 * (self.c_x + i * self.c_y);
        let mut m = Banded::zeros(dim, 1);
        for k in 0..dim {
            m.set(k, k, self.c_z * (-j + k as f64));
            if k + 1 < dim {
                let e = ladder_up(self.n_atoms, k);
                m.set(k + 1, k, a_plus * e); // J+: k -> k+1
                m.set(k, k + 1, a_minus * e); // J-: k+1 -> k
            }
        }
        m
    }
}

/// Twisting Hamiltonian on the ladder: `alpha J_theta^2` (one-axis) or
/// `alpha (J_theta^2 - J_{theta+pi/2}^2)` (two-axis), as a pentadiagonal
/// Hermitian matrix.
pub fn build_hamiltonian(kind: Scheme, alpha: f64, theta: f64, n_atoms: u64) -> Banded {
    let axis = |th: f64| CollectiveOperator {
        n_atoms,
        c_x: C64::new(th.cos(), 0.0),
        c_y: C64::new(th.sin(), 0.0),
        ..Default::default()
    };
    let a = axis(theta).to_banded();
    let mut h = a.mul(&a);
    if kind == Scheme::TwoAxis {
        let b = axis(theta + std::f64::consts::FRAC_PI_2).to_banded();
        let b2 = b.mul(&b);
        let mut neg = b2;
        neg.scale(C64::new(-1.0, 0.0));
        h = h.add(&neg);
    }
    h.scale(C64::new(alpha, 0.0));
    h
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
        }
    }
}

/// Unitary evolution under a (banded, Hermitian) Hamiltonian, sampling the
/// state at each requested time.
pub fn evolve_pure_sampled<F>(
    state0: &DickeState,
    hamiltonian: &Banded,
    times: &[f64],
    opts: &SolverOptions,
    mut observe: F,
) -> Result<DickeState>
where
    F: FnMut(f64, &DickeState),
{
    let dim = state0.dim();
    assert_eq!(hamiltonian.dim, dim);
    let mut y0 = vec![0.0; 2 * dim];
    for (k, a) in state0.amps.iter().enumerate() {
        y0[2 * k] = a.re;
        y0[2 * k + 1] = a.im;
    }
    let mut psi = vec![C64::default(); dim];
    let mut hpsi = vec![C64::default(); dim];
    let ode_opts = OdeOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let mut last = state0.clone();
    let reason = ode::integrate_sampled(
        |_t, y, dy| {
            for k in 0..dim {
                psi[k] = C64::new(y[2 * k], y[2 * k + 1]);
            }
            hamiltonian.apply(&psi, &mut hpsi);
            for k in 0..dim {
                let v = -C64::i() * hpsi[k];
                dy[2 * k] = v.re;
                dy[2 * k + 1] = v.im;
            }
            RhsStatus::Ok
        },
        0.0,
        &y0,
        times,
        &ode_opts,
        |t, y| {
            let mut s = DickeState {
                n_atoms: state0.n_atoms,
                amps: (0..dim).map(|k| C64::new(y[2 * k], y[2 * k + 1])).collect(),
            };
            let drift = (s.norm() - 1.0).abs();
            if drift > 1e-10 {
                s.normalize();
            }
            observe(t, &s);
            last = s;
        },
    );
    match reason {
        StopReason::Done => Ok(last),
        _ => Err(Error::Integration(
            "pure-state propagation failed before the final time".into(),
        )),
    }
}

/// Unitary evolution to a single final time.
pub fn evolve_pure(
    state0: &DickeState,
    hamiltonian: &Banded,
    t: f64,
    opts: &SolverOptions,
) -> Result<DickeState> {
    if t == 0.0 {
        return Ok(state0.clone());
    }
    evolve_pure_sampled(state0, hamiltonian, &[t], opts, |_t, _s| {})
}

/// `L rho L†`, with `L` banded and `rho` dense row-major.
fn sandwich(l: &Banded, l_adj: &Banded, rho: &[C64], dim: usize, scratch: &mut [C64], out: &mut [C64]) {
    banded_dense(l, rho, dim, scratch);
    dense_banded(scratch, l_adj, dim, out);
}

/// `out = A rho` with banded `A`.
fn banded_dense(a: &Banded, rho: &[C64], dim: usize, out: &mut [C64]) {
    let hb = a.half_bw;
    for r in 0..dim {
        let lo = r.saturating_sub(hb);
        let hi = (r + hb).min(dim - 1);
        for c in 0..dim {
            let mut acc = C64::default();
            for k in lo..=hi {
                acc += a.get(r, k) * rho[k * dim + c];
            }
            out[r * dim + c] = acc;
        }
    }
}

/// `out = rho A` with banded `A`.
fn dense_banded(rho: &[C64], a: &Banded, dim: usize, out: &mut [C64]) {
    let hb = a.half_bw;
    for r in 0..dim {
        for c in 0..dim {
            let lo = c.saturating_sub(hb);
            let hi = (c + hb).min(dim - 1);
            let mut acc = C64::default();
            for k in lo..=hi {
                acc += rho[r * dim + k] * a.get(k, c);
            }
            out[r * dim + c] = acc;
        }
    }
}

/// Lindblad dissipator `L rho L† - 1/2 {L†L, rho}` for a collective operator.
pub fn dissipator_apply(l: &Banded, rho: &[C64]) -> Vec<C64> {
    let dim = l.dim;
    let l_adj = l.adjoint();
    let ll = l_adj.mul(l);
    let mut scratch = vec![C64::default(); dim * dim];
    let mut out = vec![C64::default(); dim * dim];
    sandwich(l, &l_adj, rho, dim, &mut scratch, &mut out);
    let mut tmp = vec![C64::default(); dim * dim];
    banded_dense(&ll, rho, dim, &mut tmp);
    for i in 0..dim * dim {
        out[i] -= 0.5 * tmp[i];
    }
    dense_banded(rho, &ll, dim, &mut tmp);
    for i in 0..dim * dim {
        out[i] -= 0.5 * tmp[i];
    }
    out
}

/// Collective-Lindblad master equation, sampling the density matrix at each
/// requested time.
pub fn evolve_master_collective_sampled<F>(
    rho0: &DickeDensity,
    hamiltonian: Option<&Banded>,
    lindblads: &[Banded],
    times: &[f64],
    opts: &SolverOptions,
    mut observe: F,
) -> Result<DickeDensity>
where
    F: FnMut(f64, &DickeDensity),
{
    let dim = rho0.dim();
    let n2 = dim * dim;
    let pairs: Vec<(Banded, Banded, Banded)> = lindblads
        .iter()
        .map(|l| {
            let adj = l.adjoint();
            let ll = adj.mul(l);
            (l.clone(), adj, ll)
        })
        .collect();

    let mut y0 = vec![0.0; 2 * n2];
    for (k, v) in rho0.rho.iter().enumerate() {
        y0[2 * k] = v.re;
        y0[2 * k + 1] = v.im;
    }
    let mut rho = vec![C64::default(); n2];
    let mut acc = vec![C64::default(); n2];
    let mut tmp = vec![C64::default(); n2];
    let mut tmp2 = vec![C64::default(); n2];
    let ode_opts = OdeOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let mut last = rho0.clone();
    let reason = ode::integrate_sampled(
        |_t, y, dy| {
            for k in 0..n2 {
                rho[k] = C64::new(y[2 * k], y[2 * k + 1]);
            }
            acc.iter_mut().for_each(|v| *v = C64::default());
            if let Some(h) = hamiltonian {
                banded_dense(h, &rho, dim, &mut tmp);
                dense_banded(&rho, h, dim, &mut tmp2);
                let i = C64::i();
                for k in 0..n2 {
                    acc[k] += -i * (tmp[k] - tmp2[k]);
                }
            }
            for (l, l_adj, ll) in &pairs {
                sandwich(l, l_adj, &rho, dim, &mut tmp, &mut tmp2);
                for k in 0..n2 {
                    acc[k] += tmp2[k];
                }
                banded_dense(ll, &rho, dim, &mut tmp);
                dense_banded(&rho, ll, dim, &mut tmp2);
                for k in 0..n2 {
                    acc[k] -= 0.5 * (tmp[k] + tmp2[k]);
                }
            }
            for k in 0..n2 {
                dy[2 * k] = acc[k].re;
                dy[2 * k + 1] = acc[k].im;
            }
            RhsStatus::Ok
        },
        0.0,
        &y0,
        times,
        &ode_opts,
        |t, y| {
            let d = DickeDensity {
                n_atoms: rho0.n_atoms,
                rho: (0..n2).map(|k| C64::new(y[2 * k], y[2 * k + 1])).collect(),
            };
            observe(t, &d);
            last = d;
        },
    );
    match reason {
        StopReason::Done => {
            let tr = last.trace();
            if (tr.re - 1.0).abs() > 1e-8 {
                return Err(Error::Integration(format!(
                    "master equation lost trace: {tr}"
                )));
            }
            Ok(last)
        }
        _ => Err(Error::Integration(
            "master-equation propagation failed before the final time".into(),
        )),
    }
}

/// Collective-Lindblad master equation to a single final time.
pub fn evolve_master_collective(
    rho0: &DickeDensity,
    hamiltonian: Option<&Banded>,
    lindblads: &[Banded],
    t: f64,
    opts: &SolverOptions,
) -> Result<DickeDensity> {
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    evolve_master_collective_sampled(rho0, hamiltonian, lindblads, &[t], opts, |_t, _d| {})
}

/// Ladder realization of an effective model without its per-atom decay:
/// the reduced Hamiltonian and the collective cavity Lindblads (one per
/// rotating component).
pub fn ladder_model(model: &EffectiveModel) -> (Banded, Vec<Banded>) {
    let n = model.n_atoms;
    let jp = CollectiveOperator::raising(n, C64::new(1.0, 0.0)).to_banded();
    let jm = jp.adjoint();
    let jp2 = jp.mul(&jp);
    let jm2 = jp2.adjoint();
    let jpjm = jp.mul(&jm);

    let dim = n as usize + 1;
    let mut h = Banded::zeros(dim, 2);
    let hpm = C64::new(model.h_plusminus.re, 0.0);
    for r in 0..dim {
        let lo = r.saturating_sub(2);
        let hi = (r + 2).min(dim - 1);
        for c in lo..=hi {
            let v = -hpm * jpjm.get(r, c)
                - 0.5
                    * (model.h_plusplus * jp2.get(r, c)
                        + model.h_plusplus.conj() * jm2.get(r, c));
            h.set(r, c, v);
        }
    }

    let mut ls = Vec::new();
    for comp in [&model.co, &model.counter] {
        if comp.kappa1 == C64::default() && comp.kappa2 == C64::default() {
            continue;
        }
        ls.push(
            CollectiveOperator::cavity_pair(n, comp.kappa1, comp.kappa2).to_banded(),
        );
    }
    (h, ls)
}

/// The equivalent static dissipation pair replacing the rotating collective
/// Lindblad operator: `sqrt(gamma_c) (Jx cos + Jy sin)(theta)` and its
/// orthogonal partner.
pub fn appendix_c_pair(n_atoms: u64, gamma_c: f64, theta: f64) -> [CollectiveOperator; 2] {
    let s = gamma_c.sqrt();
    [
        CollectiveOperator {
            n_atoms,
            c_x: C64::new(s * theta.cos(), 0.0),
            c_y: C64::new(s * theta.sin(), 0.0),
            ..Default::default()
        },
        CollectiveOperator {
            n_atoms,
            c_x: C64::new(-s * theta.sin(), 0.0),
            c_y: C64::new(s * theta.cos(), 0.0),
            ..Default::default()
        },
    ]
}

// ---------------------------------------------------------------------------
// Tiny-N product-space oracle.
// ---------------------------------------------------------------------------

/// Density matrix over all `2^N` ground configurations (bit k set means atom
/// k is in `|b>`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDensity {
    pub n_atoms: u64,
    pub rho: Vec<C64>,
}

impl ProductDensity {
    pub fn dim(&self) -> usize {
        1usize << self.n_atoms
    }

    /// All atoms in `|a>`.
    pub fn css(n_atoms: u64) -> Self {
        let dim = 1usize << n_atoms;
        let mut rho = vec![C64::default(); dim * dim];
        rho[0] = C64::new(1.0, 0.0);
        Self { n_atoms, rho }
    }

    pub fn expectations(&self) -> MomentState {
        let n = self.n_atoms as usize;
        let dim = self.dim();
        let ops = ProductOps::new(self.n_atoms);
        let jp = ops.expect(&self.rho, &ops.j_plus);
        let jp2 = ops.expect(&self.rho, &linalg::matmul(&ops.j_plus, &ops.j_plus, dim));
        let j_minus = linalg::adjoint(&ops.j_plus, dim);
        let jpjm = ops
            .expect(&self.rho, &linalg::matmul(&ops.j_plus, &j_minus, dim))
            .re;
        let jmjp = ops
            .expect(&self.rho, &linalg::matmul(&j_minus, &ops.j_plus, dim))
            .re;
        let mut na = 0.0;
        for idx in 0..dim {
            na += self.rho[idx * dim + idx].re * (n - (idx as u64).count_ones() as usize) as f64;
        }
        let mut nb = 0.0;
        for idx in 0..dim {
            nb += self.rho[idx * dim + idx].re * (idx as u64).count_ones() as f64;
        }
        MomentState {
            jp,
            jp2,
            jpjm,
            jmjp,
            na,
            nb,
        }
    }
}

struct ProductOps {
    n_atoms: u64,
    j_plus: Vec<C64>,
}

impl ProductOps {
    fn new(n_atoms: u64) -> Self {
        let n = n_atoms as usize;
        let dim = 1usize << n;
        // J+ = sum_k |a>_k <b|: clears bit k.
        let mut j_plus = vec![C64::default(); dim * dim];
        for idx in 0..dim {
            for k in 0..n {
                if idx & (1 << k) != 0 {
                    let to = idx & !(1 << k);
                    j_plus[to * dim + idx] += C64::new(1.0, 0.0);
                }
            }
        }
        Self { n_atoms, j_plus }
    }

    /// Single-atom transfer `|x>_k <y|` as a dense matrix.
    fn transfer(&self, k: usize, to_b: bool, from_b: bool) -> Vec<C64> {
        let dim = 1usize << self.n_atoms;
        let mut m = vec![C64::default(); dim * dim];
        for idx in 0..dim {
            let bit = idx & (1 << k) != 0;
            if bit == from_b {
                let target = if to_b { idx | (1 << k) } else { idx & !(1 << k) };
                m[target * dim + idx] += C64::new(1.0, 0.0);
            }
        }
        m
    }

    fn expect(&self, rho: &[C64], op: &[C64]) -> C64 {
        let dim = 1usize << self.n_atoms;
        let mut acc = C64::default();
        for r in 0..dim {
            for k in 0..dim {
                acc += rho[r * dim + k] * op[k * dim + r];
            }
        }
        acc
    }
}

/// Exact master equation over the `2^N` ground manifold with all per-atom
/// effective Lindblads, the collective cavity decay, and the effective
/// Hamiltonian, using the same time-averaged (component-split) dissipators
/// as the moment equations. Requires `N <= 5` and `gamma_o = 0`.
pub fn evolve_master_product_sampled<F>(
    params: &PhysicalParams,
    times: &[f64],
    opts: &SolverOptions,
    mut observe: F,
) -> Result<ProductDensity>
where
    F: FnMut(f64, &ProductDensity),
{
    if params.n_atoms > 5 {
        return Err(Error::DimensionGuard {
            n: params.n_atoms,
            max: 5,
        });
    }
    if params.gamma_o != 0.0 {
        return Err(Error::InvalidParams(
            "product-space oracle requires gamma_o = 0 (closed ground manifold)".into(),
        ));
    }
    let n = params.n_atoms as usize;
    let dim = 1usize << n;
    let nf = params.n_atoms as f64;
    let model = crate::model::build_effective_model(params, nf, 0.0)?;

    let ops = ProductOps::new(params.n_atoms);
    let j_plus = ops.j_plus.clone();
    let j_minus = linalg::adjoint(&j_plus, dim);

    // Effective Hamiltonian in the same reduced form as the moment equations.
    let jpjm = linalg::matmul(&j_plus, &j_minus, dim);
    let jp2 = linalg::matmul(&j_plus, &j_plus, dim);
    let jm2 = linalg::adjoint(&jp2, dim);
    let mut h = vec![C64::default(); dim * dim];
    let hpm = C64::new(model.h_plusminus.re, 0.0);
    for i in 0..dim * dim {
        h[i] = -hpm * jpjm[i] - 0.5 * (model.h_plusplus * jp2[i] + model.h_plusplus.conj() * jm2[i]);
    }

    // Per-atom Lindblads, split by rotating component and carrier group so
    // that exactly the interference terms kept by the moment equations
    // survive. gamma_o = 0, so x runs over {a, b}.
    let mut lindblads: Vec<Vec<C64>> = Vec::new();
    let scale = |m: &[C64], s: C64| -> Vec<C64> { m.iter().map(|v| s * v).collect() };
    let add3 = |a: &[C64], b: &[C64], c: &[C64]| -> Vec<C64> {
        (0..dim * dim).map(|i| a[i] + b[i] + c[i]).collect()
    };
    for k in 0..n {
        let p_aa = ops.transfer(k, false, false); // |a><a|
        let p_ab = ops.transfer(k, false, true); // |a><b|
        let p_ba = ops.transfer(k, true, false); // |b><a|
        let p_bb = ops.transfer(k, true, true); // |b><b|
        for (gamma_x, to_b) in [(params.gamma_a, false), (params.gamma_b, true)] {
            if gamma_x == 0.0 {
                continue;
            }
            let root = gamma_x.sqrt();
            let (p_xa, p_xb) = if to_b { (&p_ba, &p_bb) } else { (&p_aa, &p_ab) };
            for comp in [&model.co, &model.counter] {
                // Carrier group of the a-transition tone: chi1, chi4, chi6.
                let g1 = add3(
                    &scale(p_xa, root * comp.chi[0]),
                    &scale(&linalg::matmul(p_xb, &j_minus, dim), root * comp.chi[3]),
                    &scale(&linalg::matmul(p_xb, &j_plus, dim), root * comp.chi[5]),
                );
                // Carrier group of the b-transition tone: chi2, chi3, chi5.
                let g2 = add3(
                    &scale(p_xb, root * comp.chi[1]),
                    &scale(&linalg::matmul(p_xa, &j_plus, dim), root * comp.chi[2]),
                    &scale(&linalg::matmul(p_xa, &j_minus, dim), root * comp.chi[4]),
                );
                lindblads.push(g1);
                lindblads.push(g2);
            }
        }
    }
    for comp in [&model.co, &model.counter] {
        let l: Vec<C64> = (0..dim * dim)
            .map(|i| comp.kappa1 * j_minus[i] + comp.kappa2 * j_plus[i])
            .collect();
        lindblads.push(l);
    }

    let prepared: Vec<(Vec<C64>, Vec<C64>, Vec<C64>)> = lindblads
        .into_iter()
        .map(|l| {
            let adj = linalg::adjoint(&l, dim);
            let ll = linalg::matmul(&adj, &l, dim);
            (l, adj, ll)
        })
        .collect();

    let rho0 = ProductDensity::css(params.n_atoms);
    let n2 = dim * dim;
    let mut y0 = vec![0.0; 2 * n2];
    y0[0] = 1.0;
    let mut rho = vec![C64::default(); n2];
    let ode_opts = OdeOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let mut last = rho0.clone();
    let reason = ode::integrate_sampled(
        |_t, y, dy| {
            for k in 0..n2 {
                rho[k] = C64::new(y[2 * k], y[2 * k + 1]);
            }
            let hr = linalg::matmul(&h, &rho, dim);
            let rh = linalg::matmul(&rho, &h, dim);
            let i = C64::i();
            let mut acc: Vec<C64> = (0..n2).map(|k| -i * (hr[k] - rh[k])).collect();
            for (l, adj, ll) in &prepared {
                let lr = linalg::matmul(l, &rho, dim);
                let lrl = linalg::matmul(&lr, adj, dim);
                let llr = linalg::matmul(ll, &rho, dim);
                let rll = linalg::matmul(&rho, ll, dim);
                for k in 0..n2 {
                    acc[k] += lrl[k] - 0.5 * (llr[k] + rll[k]);
                }
            }
            for k in 0..n2 {
                dy[2 * k] = acc[k].re;
                dy[2 * k + 1] = acc[k].im;
            }
            RhsStatus::Ok
        },
        0.0,
        &y0,
        times,
        &ode_opts,
        |t, y| {
            let d = ProductDensity {
                n_atoms: params.n_atoms,
                rho: (0..n2).map(|k| C64::new(y[2 * k], y[2 * k + 1])).collect(),
            };
            observe(t, &d);
            last = d;
        },
    );
    match reason {
        StopReason::Done => Ok(last),
        _ => Err(Error::Integration(
            "product-space propagation failed before the final time".into(),
        )),
    }
}

/// Product-space master equation to a single final time.
pub fn evolve_master_product(
    params: &PhysicalParams,
    t: f64,
    opts: &SolverOptions,
) -> Result<ProductDensity> {
    if t == 0.0 {
        return Ok(ProductDensity::css(params.n_atoms));
    }
    evolve_master_product_sampled(params, &[t], opts, |_t, _d| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn random_density(n_atoms: u64, rng: &mut ChaCha8Rng) -> DickeDensity {
        let dim = n_atoms as usize + 1;
        let mut a = vec![C64::default(); dim * dim];
        for v in a.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let adj = linalg::adjoint(&a, dim);
        let mut rho = linalg::matmul(&a, &adj, dim);
        let tr = linalg::trace(&rho, dim).re;
        for v in rho.iter_mut() {
            *v /= tr;
        }
        DickeDensity { n_atoms, rho }
    }

    #[test]
    fn top_state_matches_css_moments() {
        let s = DickeState::css_top(8);
        let m = s.expectations();
        let css = moments::initial_css(8);
        assert_relative_eq!((m.jp - css.jp).norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(m.jpjm, css.jpjm, max_relative = 1e-14);
        assert_relative_eq!(m.jmjp, css.jmjp, max_relative = 1e-14);
        assert_relative_eq!(m.na, css.na, max_relative = 1e-14);
    }

    #[test]
    fn maximally_mixed_ladder_expectations() {
        let n = 2u64;
        let dim = 3;
        let mut rho = vec![C64::default(); dim * dim];
        for k in 0..dim {
            rho[k * dim + k] = C64::new(1.0 / 3.0, 0.0);
        }
        let m = DickeDensity { n_atoms: n, rho }.expectations();
        assert_abs_diff_eq!(m.na - m.nb, 0.0, epsilon = 1e-14);
        assert_relative_eq!(m.jpjm, 4.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(m.jmjp, 4.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn expectations_satisfy_commutator_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let d = random_density(6, &mut rng);
            let m = d.expectations();
            assert_abs_diff_eq!(m.commutator_residual(), 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn two_axis_hamiltonian_matches_ladder_form() {
        // alpha (J_{-pi/4}^2 - J_{pi/4}^2) = (i alpha / 2)(J+^2 - J-^2).
        let n = 6u64;
        let alpha = 0.37;
        let h = build_hamiltonian(Scheme::TwoAxis, alpha, -FRAC_PI_4, n);
        assert!(h.hermiticity_defect() < 1e-13);

        let jp = CollectiveOperator::raising(n, C64::new(1.0, 0.0)).to_banded();
        let jp2 = jp.mul(&jp);
        let jm2 = jp2.adjoint();
        let dim = n as usize + 1;
        for r in 0..dim {
            for c in 0..dim {
                let expect = 0.5 * alpha * C64::i() * (jp2.get(r, c) - jm2.get(r, c));
                assert!(
                    (h.get(r, c) - expect).norm() < 1e-14 * alpha * (n * n) as f64,
                    "({r},{c})"
                );
            }
        }
    }

    #[test]
    fn one_axis_hamiltonian_n2_eigenvalues() {
        // alpha Jx^2 for N = 2 (spin 1) has eigenvalues {0, alpha, alpha}.
        let alpha = 0.8;
        let h = build_hamiltonian(Scheme::OneAxis, alpha, 0.0, 2);
        assert!(h.hermiticity_defect() < 1e-14);
        let evals = linalg::hermitian_eigenvalues(&h.to_dense(), 3);
        assert_abs_diff_eq!(evals[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(evals[1], alpha, max_relative = 1e-12);
        assert_relative_eq!(evals[2], alpha, max_relative = 1e-12);
    }

    #[test]
    fn zero_hamiltonian_is_identity_evolution() {
        let s = DickeState::css_top(5);
        let h = build_hamiltonian(Scheme::TwoAxis, 0.0, -FRAC_PI_4, 5);
        let out = evolve_pure(&s, &h, 2.0, &SolverOptions::default()).unwrap();
        for (a, b) in out.amps.iter().zip(s.amps.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn n2_two_axis_rabi_between_extremal_levels() {
        // For N = 2 the countertwisting couples only m = +-1, so <Jz>(t)
        // oscillates as cos(2 alpha t) and m = 0 stays empty.
        let n = 2u64;
        let alpha = 0.31;
        let h = build_hamiltonian(Scheme::TwoAxis, alpha, -FRAC_PI_4, n);
        let s0 = DickeState::css_top(n);
        for &t in &[0.3, 0.9, 2.2] {
            let s = evolve_pure(&s0, &h, t, &SolverOptions::default()).unwrap();
            let m = s.expectations();
            let jz = 0.5 * (m.na - m.nb);
            assert_relative_eq!(jz, (2.0 * alpha * t).cos(), epsilon = 1e-8);
            assert!(s.amps[1].norm() < 1e-9, "m = 0 populated");
        }
    }

    #[test]
    fn master_without_lindblads_matches_pure_evolution() {
        let n = 8u64;
        let alpha = 0.15;
        let h = build_hamiltonian(Scheme::TwoAxis, alpha, -FRAC_PI_4, n);
        let s0 = DickeState::css_top(n);
        let t = 0.35;
        let pure = evolve_pure(&s0, &h, t, &SolverOptions::default()).unwrap();
        let rho = evolve_master_collective(
            &DickeDensity::pure(&s0),
            Some(&h),
            &[],
            t,
            &SolverOptions::default(),
        )
        .unwrap();
        let expect = DickeDensity::pure(&pure);
        let dim = n as usize + 1;
        for i in 0..dim * dim {
            assert!((rho.rho[i] - expect.rho[i]).norm() < 1e-10, "entry {i}");
        }
        rho.validate().unwrap();
    }

    #[test]
    fn pure_dephasing_damps_coherences_by_level_distance() {
        // L = sqrt(gamma) Jz: rho_{mm'}(t) = rho_{mm'}(0) exp(-gamma (m-m')^2 t / 2).
        let n = 4u64;
        let dim = n as usize + 1;
        let gamma: f64 = 0.6;
        let t = 0.8;
        // CSS along +x: binomial amplitudes.
        let amps: Vec<C64> = (0..dim)
            .map(|k| {
                let c = binomial(n as usize, k) as f64;
                C64::new(c.sqrt() / 2f64.powi(n as i32 / 2), 0.0)
            })
            .collect();
        let s0 = DickeState { n_atoms: n, amps };
        assert_relative_eq!(s0.norm(), 1.0, max_relative = 1e-12);

        let l = CollectiveOperator {
            n_atoms: n,
            c_z: C64::new(gamma.sqrt(), 0.0),
            ..Default::default()
        }
        .to_banded();
        let rho0 = DickeDensity::pure(&s0);
        let rho = evolve_master_collective(&rho0, None, &[l], t, &SolverOptions::default())
            .unwrap();
        for r in 0..dim {
            for c in 0..dim {
                let d = (r as f64) - (c as f64);
                let expect = rho0.rho[r * dim + c] * (-0.5 * gamma * d * d * t).exp();
                assert!(
                    (rho.rho[r * dim + c] - expect).norm() < 1e-8,
                    "({r},{c}): {} vs {expect}",
                    rho.rho[r * dim + c]
                );
            }
        }

        fn binomial(n: usize, k: usize) -> u64 {
            (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
        }
    }

    #[test]
    fn appendix_pair_has_no_preferred_axis() {
        let n = 10u64;
        let gamma_c = 0.42;
        let mut rng = ChaCha8Rng::seed_from_u64(20250810);
        let base = appendix_c_pair(n, gamma_c, 0.0);
        let dim = n as usize + 1;
        for trial in 0..20 {
            let theta = rng.gen_range(-3.0..3.0);
            let rotated = appendix_c_pair(n, gamma_c, theta);
            let rho = random_density(n, &mut rng);
            let mut d_base = vec![C64::default(); dim * dim];
            let mut d_rot = vec![C64::default(); dim * dim];
            for op in &base {
                let l = op.to_banded();
                let d = dissipator_apply(&l, &rho.rho);
                for i in 0..dim * dim {
                    d_base[i] += d[i];
                }
            }
            for op in &rotated {
                let l = op.to_banded();
                let d = dissipator_apply(&l, &rho.rho);
                for i in 0..dim * dim {
                    d_rot[i] += d[i];
                }
            }
            let err: f64 = (0..dim * dim)
                .map(|i| (d_base[i] - d_rot[i]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-10, "trial {trial}: {err}");
        }

        // theta = pi/4 reproduces the sqrt(gamma_c/2)(Jx +- Jy) pair.
        let pair = appendix_c_pair(n, gamma_c, FRAC_PI_4);
        let half = (gamma_c / 2.0).sqrt();
        assert_relative_eq!(pair[0].c_x.re, half, max_relative = 1e-12);
        assert_relative_eq!(pair[0].c_y.re, half, max_relative = 1e-12);
        assert_relative_eq!(pair[1].c_x.re, -half, max_relative = 1e-12);
        assert_relative_eq!(pair[1].c_y.re, half, max_relative = 1e-12);

        // gamma_c = 0 gives zero operators.
        let zero = appendix_c_pair(n, 0.0, 1.0);
        assert_eq!(zero[0].c_x, C64::default());
        assert_eq!(zero[1].c_y, C64::default());
    }

    #[test]
    fn product_oracle_constant_without_couplings() {
        let mut p = crate::scheme::paper_preset(3, 0.003);
        p.g_a = C64::default();
        p.g_b = C64::default();
        p.gamma_a = 0.5;
        p.gamma_b = 0.5;
        p.gamma_o = 0.0;
        let rho = evolve_master_product(&p, 2.0, &SolverOptions::default()).unwrap();
        let css = ProductDensity::css(3);
        for i in 0..rho.rho.len() {
            assert!((rho.rho[i] - css.rho[i]).norm() < 1e-10);
        }
        let m = rho.expectations();
        assert_relative_eq!(m.na, 3.0, max_relative = 1e-10);
    }

    #[test]
    fn product_oracle_rejects_large_n_and_open_manifold() {
        let mut p = crate::scheme::paper_preset(6, 0.006);
        p.gamma_o = 0.0;
        p.gamma_a = 0.5;
        p.gamma_b = 0.5;
        assert!(matches!(
            evolve_master_product(&p, 0.1, &SolverOptions::default()),
            Err(Error::DimensionGuard { .. })
        ));
        let p2 = crate::scheme::paper_preset(3, 0.003);
        assert!(evolve_master_product(&p2, 0.1, &SolverOptions::default()).is_err());
    }

    #[test]
    fn product_oracle_preserves_permutation_symmetry() {
        use crate::model::tune_two_axis;
        let mut base = crate::scheme::paper_preset(3, 1.5);
        base.gamma_a = 0.5;
        base.gamma_b = 0.5;
        base.gamma_o = 0.0;
        base.delta = 1.2;
        let chi = C64::new(0.3 * (base.g_a * base.g_b).norm().sqrt() / 50.0, 0.0);
        let tuned = tune_two_axis(&base, chi, 1.0 / 50.0).unwrap();
        let rho = evolve_master_product(&tuned, 0.5 / tuned.kappa, &SolverOptions::default())
            .unwrap();
        let dim = rho.dim();
        // Swap atoms 0 and 1 by permuting basis indices.
        let perm = |idx: usize| -> usize {
            let b0 = (idx >> 0) & 1;
            let b1 = (idx >> 1) & 1;
            (idx & !0b11) | (b0 << 1) | b1
        };
        let mut residual = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                let d = rho.rho[perm(r) * dim + perm(c)] - rho.rho[r * dim + c];
                residual = residual.max(d.norm());
            }
        }
        assert!(residual < 1e-10, "swap residual {residual}");
        let tr = linalg::trace(&rho.rho, dim);
        assert_relative_eq!(tr.re, 1.0, max_relative = 1e-9);
    }
}
