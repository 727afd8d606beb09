//! Six-level two-spin model of a biased double quantum dot: Hamiltonian
//! construction, exchange coupling, energy levels, entangling gate time, and
//! embedded single-qubit rotations.
//!
//! Ordered basis: {|up,up>, |up,dn>, |dn,up>, |dn,dn>, S20, S02}. The first
//! four states form the computational subspace; the last two are the doubly
//! occupied singlets reached through the tunnel coupling.

use nalgebra::{Matrix2, Matrix6};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR_UEV_NS, MU_B_UEV_PER_T};
use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Matrix6c = Matrix6<C64>;

/// Physical and bias parameters of the two-dot system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub bl_t: f64,
    pub br_t: f64,
    pub gl: f64,
    pub gr: f64,
    /// Tunnel coupling, ueV.
    pub tc_uev: f64,
    /// On-site charging energies of the (2,0) and (0,2) configurations, ueV.
    pub u0_uev: f64,
    pub u0p_uev: f64,
    /// Detuning at the entangling bias point, ueV.
    pub epsilon_on_uev: f64,
    /// Idle detuning, ueV. At 0 the residual exchange is ~2.5e-5 of the
    /// on-point value and the dots are far from both charge resonances.
    pub epsilon_off_uev: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            bl_t: 0.5,
            br_t: 0.4,
            gl: 2.0,
            gr: 2.0,
            tc_uev: 1.0,
            u0_uev: 10_000.0,
            u0p_uev: 10_000.0,
            epsilon_on_uev: 9_860.0,
            epsilon_off_uev: 0.0,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bl_t,
            self.br_t,
            self.gl,
            self.gr,
            self.tc_uev,
            self.u0_uev,
            self.u0p_uev,
            self.epsilon_on_uev,
            self.epsilon_off_uev,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("device parameter is not finite".into()));
        }
        if self.tc_uev < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tunnel coupling must be >= 0, got {}",
                self.tc_uev
            )));
        }
        // Perturbative validity: the bias point must stay far from the charge
        // resonance relative to the tunnel coupling.
        if self.u0_uev - self.epsilon_on_uev < 10.0 * self.tc_uev {
            return Err(Error::InvalidConfig(format!(
                "bias too close to resonance: U0 - epsilon_on = {} < 10 tc = {}",
                self.u0_uev - self.epsilon_on_uev,
                10.0 * self.tc_uev
            )));
        }
        Ok(())
    }
}

/// Which spin a single-qubit rotation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    Left,
    Right,
}

/// (E_z, E_z1) = mu_B (gL BL +- gR BR), ueV.
pub fn zeeman_splittings(p: &DeviceParams) -> (f64, f64) {
    let l = p.gl * p.bl_t;
    let r = p.gr * p.br_t;
    (MU_B_UEV_PER_T * (l + r), MU_B_UEV_PER_T * (l - r))
}

/// Full 6x6 Hamiltonian at detuning `epsilon + delta_eps` with quasi-static
/// effective nuclear fields on the two spins, ueV.
///
/// Diagonal: (Ez/2, Ez1/2, -Ez1/2, -Ez/2, U0 - eps, U0' + eps) plus the
/// nuclear Zeeman shifts (+-bL +- bR)/2 on the computational states only —
/// the doubly occupied singlets carry zero net spin z. Off-diagonal: the
/// tunnel coupling connects |up,dn> to both singlets with +tc and |dn,up>
/// with -tc.
pub fn build_hamiltonian(
    p: &DeviceParams,
    epsilon: f64,
    delta_eps: f64,
    b_eff_l: f64,
    b_eff_r: f64,
) -> Result<Matrix6c> {
    p.validate()?;
    let (ez, ez1) = zeeman_splittings(p);
    let bl = p.gl * MU_B_UEV_PER_T * b_eff_l;
    let br = p.gr * MU_B_UEV_PER_T * b_eff_r;
    let eps = epsilon + delta_eps;
    let mut h = Matrix6c::zeros();
    let re = |v: f64| C64::new(v, 0.0);
    h[(0, 0)] = re(ez / 2.0 + (bl + br) / 2.0);
    h[(1, 1)] = re(ez1 / 2.0 + (bl - br) / 2.0);
    h[(2, 2)] = re(-ez1 / 2.0 + (-bl + br) / 2.0);
    h[(3, 3)] = re(-ez / 2.0 - (bl + br) / 2.0);
    h[(4, 4)] = re(p.u0_uev - eps);
    h[(5, 5)] = re(p.u0p_uev + eps);
    let tc = re(p.tc_uev);
    h[(1, 4)] = tc;
    h[(4, 1)] = tc;
    h[(1, 5)] = tc;
    h[(5, 1)] = tc;
    h[(2, 4)] = -tc;
    h[(4, 2)] = -tc;
    h[(2, 5)] = -tc;
    h[(5, 2)] = -tc;
    Ok(h)
}

/// Second-order exchange coupling J = 2 tc^2 (1/(U0 - eps) + 1/(U0' + eps)),
/// ueV. Used as the analytic seed for the gate-time solver.
pub fn exchange_estimate(p: &DeviceParams, epsilon: f64) -> Result<f64> {
    let dl = p.u0_uev - epsilon;
    let dr = p.u0p_uev + epsilon;
    if dl <= 0.0 || dr <= 0.0 {
        return Err(Error::Numerical(format!(
            "exchange estimate at or past resonance: U0 - eps = {dl}, U0' + eps = {dr}"
        )));
    }
    Ok(2.0 * p.tc_uev * p.tc_uev * (1.0 / dl + 1.0 / dr))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// (w t / hbar) mod 2pi in double-double arithmetic. Plain f64 loses ~1e-10
/// rad at the ~1e6 rad phases the meV-scale levels accumulate, which would
/// break the exact composition property of split propagations.
fn phase_mod_2pi(w: f64, t: f64) -> f64 {
    const TWO_PI_HI: f64 = 6.283_185_307_179_586;
    const TWO_PI_LO: f64 = 2.449_293_598_294_706_4e-16;
    let (p_hi, p_lo) = two_prod(w, t);
    let q_hi = p_hi / HBAR_UEV_NS;
    let q_lo = (q_hi.mul_add(-HBAR_UEV_NS, p_hi) + p_lo) / HBAR_UEV_NS;
    let n = (q_hi / TWO_PI_HI).round();
    let (m_hi, m_lo) = two_prod(n, TWO_PI_HI);
    (q_hi - m_hi) + (q_lo - m_lo - n * TWO_PI_LO)
}

/// exp(-i H t / hbar) for Hermitian H, by eigendecomposition. Exact up to
/// floating point; no step-size error.
pub fn propagator(h: &Matrix6c, t_ns: f64) -> Matrix6c {
    let eig = nalgebra::SymmetricEigen::new(*h);
    let mut d = Matrix6c::zeros();
    for k in 0..6 {
        let phase = -phase_mod_2pi(eig.eigenvalues[k], t_ns);
        d[(k, k)] = C64::new(phase.cos(), phase.sin());
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Conditional phase arg(u11) + arg(u44) - arg(u22) - arg(u33) of the
/// computational diagonal; pi for an entangling CZ-class gate.
pub fn conditional_phase(u: &Matrix6c) -> f64 {
    u[(0, 0)].arg() + u[(3, 3)].arg() - u[(1, 1)].arg() - u[(2, 2)].arg()
}

/// Half the alternating sum of the computational diagonal phases; measures
/// the accumulated single-spin phase of the right qubit and defines the
/// rotating-frame reference for mid-sequence rotations.
pub fn right_qubit_phase(u: &Matrix6c) -> f64 {
    let th = |k: usize| -u[(k, k)].arg();
    (th(0) - th(1) + th(2) - th(3)) / 2.0
}

fn wrap_pi(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Smallest t > 0 at which the noise-free propagator at the on bias
/// accumulates conditional phase pi. Bisection around the analytic seed
/// pi hbar / J, absolute tolerance 1e-6 ns.
pub fn solve_gate_time(p: &DeviceParams) -> Result<f64> {
    p.validate()?;
    let j = exchange_estimate(p, p.epsilon_on_uev)?;
    if j <= 0.0 {
        return Err(Error::GateTimeSolver(format!(
            "exchange coupling is {j} ueV; no conditional phase accumulates"
        )));
    }
    let h = build_hamiltonian(p, p.epsilon_on_uev, 0.0, 0.0, 0.0)?;
    let seed = std::f64::consts::PI * HBAR_UEV_NS / j;
    let f = |t: f64| wrap_pi(conditional_phase(&propagator(&h, t)) - std::f64::consts::PI);
    let (mut lo, mut hi) = (0.7 * seed, 1.4 * seed);
    let (flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::GateTimeSolver(format!(
            "no sign change in bracket [{lo}, {hi}] ns: f(lo) = {flo}, f(hi) = {fhi}"
        )));
    }
    let mut flo = flo;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Six eigenvalues of the noise-free Hamiltonian at the given detuning,
/// ascending, ueV.
pub fn energy_levels(p: &DeviceParams, epsilon: f64) -> Result<[f64; 6]> {
    let h = build_hamiltonian(p, epsilon, 0.0, 0.0, 0.0)?;
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut w = [0.0; 6];
    for k in 0..6 {
        w[k] = eig.eigenvalues[k];
    }
    w.sort_by(|a, b| a.total_cmp(b));
    Ok(w)
}

/// Rotation by `theta` about the in-plane axis at angle `axis_phi` from x,
/// applied to one spin on the computational block; identity on the doubly
/// occupied singlets. `axis_phi = 0` is a plain exp(-i theta sigma_x / 2).
pub fn embed_single_qubit_rotation(theta: f64, axis_phi: f64, target: Qubit) -> Matrix6c {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let e = C64::new(axis_phi.cos(), axis_phi.sin());
    let mi = C64::new(0.0, -1.0);
    // [[c, -i s e^{-i phi}], [-i s e^{i phi}, c]]
    let r = Matrix2::new(c, mi * s * e.conj(), mi * s * e, c);
    let id = Matrix2::identity();
    let blk = match target {
        Qubit::Left => r.kronecker(&id),
        Qubit::Right => id.kronecker(&r),
    };
    let mut u = Matrix6c::identity();
    for i in 0..4 {
        for j in 0..4 {
            u[(i, j)] = blk[(i, j)];
        }
    }
    u
}

/// exp(-i theta sigma_x / 2) on the target spin.
pub fn embed_single_qubit_rx(theta: f64, target: Qubit) -> Matrix6c {
    embed_single_qubit_rotation(theta, 0.0, target)
}
