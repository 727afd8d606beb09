//! Per-trajectory stochastic noise: random-telegraph trap occupancy and
//! quasi-static effective nuclear (Overhauser) fields.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR_UEV_NS, MU_B_UEV_PER_T};
use crate::error::{Error, Result};

/// Telegraph switching record for every trap over one gate duration.
///
/// Occupancy convention: state 1 contributes the trap's full interdot shift,
/// state 0 contributes nothing. States alternate at each switch event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtnTrajectory {
    pub initial_states: Vec<u8>,
    /// Per trap, strictly increasing switch times in (0, duration], ns.
    pub switch_events: Vec<Vec<f64>>,
    pub duration_ns: f64,
}

impl RtnTrajectory {
    pub fn empty(n_traps: usize, duration_ns: f64) -> Self {
        Self {
            initial_states: vec![0; n_traps],
            switch_events: vec![Vec::new(); n_traps],
            duration_ns,
        }
    }

    /// Occupancy of trap `i` at time `t` (0 or 1).
    pub fn state_at(&self, i: usize, t_ns: f64) -> u8 {
        let flips = self.switch_events[i].partition_point(|&s| s <= t_ns);
        self.initial_states[i] ^ (flips as u8 & 1)
    }

    /// All switch times of all traps within (0, horizon), ascending.
    pub fn switch_times_until(&self, horizon_ns: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .switch_events
            .iter()
            .flatten()
            .copied()
            .filter(|&t| t < horizon_ns)
            .collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        times
    }
}

/// Quasi-static effective nuclear fields on the two spins, T. Constant
/// within one gate operation, redrawn between operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverhauserSample {
    pub b_eff_l: f64,
    pub b_eff_r: f64,
}

/// One trajectory's complete noise state: trap switching plus nuclear fields
/// plus the per-trap detuning shifts of the device it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRealization {
    pub rtn: RtnTrajectory,
    pub overhauser: OverhauserSample,
    /// ueV, one per trap; borrowed from the device's trap set.
    pub shifts_uev: Vec<f64>,
    /// Constant offset subtracted from the summed trap contribution, ueV.
    /// Zero by default; set to half the total shift to remove the ensemble
    /// mean of the telegraph process for sensitivity studies.
    #[serde(default)]
    pub baseline_uev: f64,
}

impl NoiseRealization {
    pub fn noiseless(duration_ns: f64) -> Self {
        Self {
            rtn: RtnTrajectory::empty(0, duration_ns),
            overhauser: OverhauserSample::default(),
            shifts_uev: Vec::new(),
            baseline_uev: 0.0,
        }
    }
}

/// Symmetric two-level fluctuators: stationary Bernoulli(1/2) initial state,
/// i.i.d. Exponential(mean tau) waiting times between switches.
pub fn sample_rtn<R: Rng + ?Sized>(
    n_traps: usize,
    tau_ns: f64,
    duration_ns: f64,
    rng: &mut R,
) -> Result<RtnTrajectory> {
    if !(tau_ns > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "RTN characteristic time must be > 0, got {tau_ns}"
        )));
    }
    if !(duration_ns >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "RTN duration must be >= 0, got {duration_ns}"
        )));
    }
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let wait = Exp::new(1.0 / tau_ns).expect("positive rate");
    let mut initial_states = Vec::with_capacity(n_traps);
    let mut switch_events = Vec::with_capacity(n_traps);
    for _ in 0..n_traps {
        initial_states.push(coin.sample(rng) as u8);
        let mut events = Vec::new();
        let mut t = wait.sample(rng);
        while t <= duration_ns {
            events.push(t);
            t += wait.sample(rng);
        }
        switch_events.push(events);
    }
    Ok(RtnTrajectory {
        initial_states,
        switch_events,
        duration_ns,
    })
}

/// Instantaneous detuning perturbation Sum_i s_i(t) * shift_i, ueV.
pub fn delta_epsilon_at(t_ns: f64, real: &NoiseRealization) -> f64 {
    let occupied: f64 = real
        .shifts_uev
        .iter()
        .enumerate()
        .map(|(i, &shift)| real.rtn.state_at(i, t_ns) as f64 * shift)
        .sum();
    occupied - real.baseline_uev
}

/// Gaussian quasi-static field width reproducing a free-induction-decay
/// envelope exp(-(t/T2*)^2): sigma_B = sqrt(2) hbar / (g mu_B T2*).
pub fn calibrate_overhauser_sigma(t2_star_ns: f64, g: f64) -> Result<f64> {
    if !(t2_star_ns > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "T2* must be > 0, got {t2_star_ns}"
        )));
    }
    if !(g > 0.0) {
        return Err(Error::InvalidConfig(format!("g-factor must be > 0, got {g}")));
    }
    Ok(std::f64::consts::SQRT_2 * HBAR_UEV_NS / (g * MU_B_UEV_PER_T * t2_star_ns))
}

/// Draws i.i.d. Normal(0, sigma_B^2) fields for the two spins.
pub fn sample_overhauser<R: Rng + ?Sized>(sigma_b_t: f64, rng: &mut R) -> Result<OverhauserSample> {
    if !(sigma_b_t >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma_B must be >= 0, got {sigma_b_t}"
        )));
    }
    if sigma_b_t == 0.0 {
        return Ok(OverhauserSample::default());
    }
    let normal = Normal::new(0.0, sigma_b_t).expect("positive sigma");
    Ok(OverhauserSample {
        b_eff_l: normal.sample(rng),
        b_eff_r: normal.sample(rng),
    })
}

/// Monte Carlo free-induction-decay coherence <cos(g mu_B B t / hbar)> of a
/// single spin under sampled quasi-static fields. Oracle for the calibration
/// formula: at sigma_B from `calibrate_overhauser_sigma` this approaches
/// exp(-(t/T2*)^2).
pub fn fid_coherence_mc<R: Rng + ?Sized>(
    sigma_b_t: f64,
    g: f64,
    t_ns: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("FID oracle needs >= 1 sample".into()));
    }
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let b = sample_overhauser(sigma_b_t, rng)?.b_eff_l;
        acc += (g * MU_B_UEV_PER_T * b * t_ns / HBAR_UEV_NS).cos();
    }
    Ok(acc / n_samples as f64)
}
