//! Two-level Monte Carlo orchestration: an outer ensemble of random devices
//! (trap configurations) and an inner ensemble of noise trajectories per
//! device, with deterministic seeding, rayon parallelism, and
//! histogram/CDF/percentile summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device_model::DeviceParams;
use crate::error::{Error, Result};
use crate::noise_processes::{
    calibrate_overhauser_sigma, sample_rtn, NoiseRealization, OverhauserSample,
};
use crate::trajectory_engine::{
    composite_schedule, cz_schedule, propagate, propagator_fidelity, PulseSchedule,
};
use crate::trap_ensemble::{build_trap_set, DotGeometry, SamplingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Cz,
    Composite,
}

/// Everything a reproducible experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub device: DeviceParams,
    pub sampling: SamplingSpec,
    pub geometry: DotGeometry,
    pub gate: GateKind,
    pub n_devices: usize,
    pub n_trajectories: usize,
    pub t2_star_ns: f64,
    pub tau_rtn_ns: f64,
    pub master_seed: u64,
    pub histogram_bins: usize,
    /// Swap the two rotation angles of the composite sequence (palindrome
    /// variant).
    pub composite_reversed: bool,
    /// Subtract the ensemble-mean telegraph offset (half the total shift)
    /// from the detuning noise. Off by default: the quasi-static offset is
    /// itself the dominant noise and the ideal reference is noise-free.
    pub subtract_ensemble_mean: bool,
    /// Test hook: multiplies every trap's detuning shift.
    pub shift_scale: f64,
    /// Disables Overhauser sampling when false (RTN is governed by the trap
    /// density alone).
    pub overhauser_enabled: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            sampling: SamplingSpec::default(),
            geometry: DotGeometry::default(),
            gate: GateKind::Cz,
            n_devices: 1000,
            n_trajectories: 200,
            t2_star_ns: 1e5,
            tau_rtn_ns: 1e6,
            master_seed: 0,
            histogram_bins: 40,
            composite_reversed: false,
            subtract_ensemble_mean: false,
            shift_scale: 1.0,
            overhauser_enabled: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.sampling.validate()?;
        self.geometry.validate()?;
        if self.n_devices == 0 || self.n_trajectories == 0 {
            return Err(Error::InvalidConfig(
                "device and trajectory counts must be >= 1".into(),
            ));
        }
        if self.histogram_bins == 0 {
            return Err(Error::InvalidConfig("histogram needs >= 1 bin".into()));
        }
        if !(self.t2_star_ns > 0.0) || !(self.tau_rtn_ns > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "T2* and tau must be > 0, got {} and {}",
                self.t2_star_ns, self.tau_rtn_ns
            )));
        }
        if !self.shift_scale.is_finite() {
            return Err(Error::InvalidConfig("shift_scale must be finite".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<PulseSchedule> {
        match self.gate {
            GateKind::Cz => cz_schedule(&self.device),
            GateKind::Composite => composite_schedule(&self.device, self.composite_reversed),
        }
    }
}

// --- deterministic stream derivation -------------------------------------

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Child seed for (master, device, trajectory, purpose): a splitmix64 chain
/// mixing each component in turn. Bit-exact contract — any device or
/// trajectory can be reproduced in isolation.
pub fn child_seed(master: u64, device: u64, trajectory: u64, purpose: &str) -> u64 {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ device);
    s = splitmix64(s ^ trajectory);
    splitmix64(s ^ fnv1a(purpose))
}

/// ChaCha12 stream for a derived child seed.
pub fn child_rng(master: u64, device: u64, trajectory: u64, purpose: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(child_seed(master, device, trajectory, purpose))
}

// --- results --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceResult {
    pub device_index: usize,
    pub trap_count: usize,
    pub total_static_shift_uev: f64,
    pub mean_fidelity: f64,
    pub fidelity_std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// bins + 1 edges, uniform over the observed range.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub devices: Vec<DeviceResult>,
    pub summary: Summary,
    pub histogram: Histogram,
    /// (sorted sample value, cumulative fraction) pairs; monotone from
    /// 1/n to 1.
    pub cumulative: Vec<[f64; 2]>,
}

/// Per-device total interdot shifts without any propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDistribution {
    pub trap_counts: Vec<usize>,
    pub total_shifts_uev: Vec<f64>,
    pub summary: Summary,
    pub histogram: Histogram,
    pub cumulative: Vec<[f64; 2]>,
}

/// Linear-interpolation quantile on the sorted samples with the (n - 1)
/// index convention: q maps to fractional rank q/100 * (n - 1).
pub fn percentile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("percentile of empty sample set".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidConfig(format!("quantile {q} outside [0, 100]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

fn summarize(samples: &[f64]) -> Result<Summary> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(Summary {
        mean,
        median: percentile(samples, 50.0)?,
        p05: percentile(samples, 5.0)?,
        p25: percentile(samples, 25.0)?,
        p50: percentile(samples, 50.0)?,
        p75: percentile(samples, 75.0)?,
        p95: percentile(samples, 95.0)?,
    })
}

/// Uniform-bin histogram over the observed range; a degenerate range is
/// widened by +-0.5 so all mass lands mid-histogram.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram> {
    if samples.is_empty() || bins == 0 {
        return Err(Error::InvalidConfig("histogram needs samples and bins".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in samples {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let idx = (((s - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

fn cumulative(samples: &[f64]) -> Vec<[f64; 2]> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &v)| [v, (k + 1) as f64 / n])
        .collect()
}

/// Simulates one device: trap sampling at stream (seed, index, 0, "traps"),
/// then `n_trajectories` noise realizations at (seed, index, j, "traj"),
/// averaging the propagator fidelity.
pub fn run_device(config: &ExperimentConfig, device_index: usize) -> Result<DeviceResult> {
    let wrap = |e: Error| Error::Device {
        device_index,
        source: Box::new(e),
    };
    config.validate().map_err(wrap)?;
    let mut trap_rng = child_rng(config.master_seed, device_index as u64, 0, "traps");
    let mut traps =
        build_trap_set(&config.sampling, &config.geometry, &mut trap_rng).map_err(wrap)?;
    if config.shift_scale != 1.0 {
        for s in &mut traps.detuning_shifts {
            *s *= config.shift_scale;
        }
    }
    let schedule = config.schedule().map_err(wrap)?;
    let duration = schedule.total_two_qubit_time();
    let ideal = propagate(&schedule, &config.device, None).map_err(wrap)?;

    let sigma_l = calibrate_overhauser_sigma(config.t2_star_ns, config.device.gl).map_err(wrap)?;
    let sigma_r = calibrate_overhauser_sigma(config.t2_star_ns, config.device.gr).map_err(wrap)?;
    let baseline = if config.subtract_ensemble_mean {
        traps.total_shift() / 2.0
    } else {
        0.0
    };

    let n = config.n_trajectories;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for j in 0..n {
        let mut rng = child_rng(config.master_seed, device_index as u64, j as u64, "traj");
        let rtn = sample_rtn(traps.traps.len(), config.tau_rtn_ns, duration, &mut rng)
            .map_err(wrap)?;
        let overhauser = if config.overhauser_enabled {
            OverhauserSample {
                b_eff_l: Normal::new(0.0, sigma_l)
                    .map_err(|e| wrap(Error::Numerical(e.to_string())))?
                    .sample(&mut rng),
                b_eff_r: Normal::new(0.0, sigma_r)
                    .map_err(|e| wrap(Error::Numerical(e.to_string())))?
                    .sample(&mut rng),
            }
        } else {
            OverhauserSample::default()
        };
        let real = NoiseRealization {
            rtn,
            overhauser,
            shifts_uev: traps.detuning_shifts.clone(),
            baseline_uev: baseline,
        };
        let noisy = propagate(&schedule, &config.device, Some(&real)).map_err(wrap)?;
        let f = propagator_fidelity(&noisy, &ideal);
        sum += f;
        sumsq += f * f;
    }
    let mean = sum / n as f64;
    let std_error = if n > 1 {
        let var = ((sumsq - sum * sum / n as f64) / (n as f64 - 1.0)).max(0.0);
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(DeviceResult {
        device_index,
        trap_count: traps.in_area_count,
        total_static_shift_uev: traps.total_shift(),
        mean_fidelity: mean,
        fidelity_std_error: std_error,
    })
}

/// Runs the full device ensemble in parallel. Aggregation is an ordered
/// collect by device index, so results are independent of worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let results: Vec<Result<DeviceResult>> = (0..config.n_devices)
        .into_par_iter()
        .map(|i| run_device(config, i))
        .collect();
    let mut devices = Vec::with_capacity(config.n_devices);
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(d) => devices.push(d),
            Err(_) => failed.push(i),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Numerical(format!(
            "{} of {} devices failed: indices {:?}",
            failed.len(),
            config.n_devices,
            &failed[..failed.len().min(20)]
        )));
    }
    let fidelities: Vec<f64> = devices.iter().map(|d| d.mean_fidelity).collect();
    Ok(EnsembleResult {
        summary: summarize(&fidelities)?,
        histogram: histogram(&fidelities, config.histogram_bins)?,
        cumulative: cumulative(&fidelities),
        devices,
    })
}

/// Trap statistics only: per-device total interdot shift, no propagation.
pub fn summarize_shifts(config: &ExperimentConfig) -> Result<ShiftDistribution> {
    config.validate()?;
    let rows: Vec<Result<(usize, f64)>> = (0..config.n_devices)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(config.master_seed, i as u64, 0, "traps");
            let set = build_trap_set(&config.sampling, &config.geometry, &mut rng)
                .map_err(|e| Error::Device {
                    device_index: i,
                    source: Box::new(e),
                })?;
            Ok((set.in_area_count, set.total_shift() * config.shift_scale))
        })
        .collect();
    let mut trap_counts = Vec::with_capacity(config.n_devices);
    let mut total_shifts = Vec::with_capacity(config.n_devices);
    for r in rows {
        let (c, s) = r?;
        trap_counts.push(c);
        total_shifts.push(s);
    }
    Ok(ShiftDistribution {
        summary: summarize(&total_shifts)?,
        histogram: histogram(&total_shifts, config.histogram_bins)?,
        cumulative: cumulative(&total_shifts),
        trap_counts,
        total_shifts_uev: total_shifts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_devices: 8,
            n_trajectories: 4,
            ..Default::default()
        }
    }

    #[test]
    fn percentile_conventions() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&s, 50.0).unwrap(), 2.5);
        assert_eq!(percentile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&s, 100.0).unwrap(), 4.0);
        let c = [7.0; 5];
        for q in [0.0, 13.0, 50.0, 99.0] {
            assert_eq!(percentile(&c, q).unwrap(), 7.0);
        }
        assert!(percentile(&[], 50.0).is_err());
        assert!(percentile(&s, 101.0).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = child_seed(0, 0, 0, "traps");
        let b = child_seed(0, 0, 0, "traj");
        let c = child_seed(0, 1, 0, "traps");
        let d = child_seed(1, 0, 0, "traps");
        assert!(a != b && a != c && a != d && b != c);
        // regression-pin the derivation so the documented contract holds
        assert_eq!(a, child_seed(0, 0, 0, "traps"));
    }

    #[test]
    fn histogram_mass_and_degenerate_range() {
        let h = histogram(&[0.0, 0.25, 0.5, 0.99, 1.0], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.edges.len(), 5);
        let d = histogram(&[3.0; 10], 4).unwrap();
        assert_eq!(d.counts.iter().sum::<u64>(), 10);
        assert!(d.edges[0] < 3.0 && *d.edges.last().unwrap() > 3.0);
    }

    #[test]
    fn noiseless_device_has_unit_fidelity() {
        let cfg = ExperimentConfig {
            sampling: SamplingSpec {
                density_per_cm2: 0.0,
                ..Default::default()
            },
            overhauser_enabled: false,
            n_trajectories: 3,
            ..tiny_config()
        };
        for gate in [GateKind::Cz, GateKind::Composite] {
            let cfg = ExperimentConfig { gate, ..cfg.clone() };
            let d = run_device(&cfg, 0).unwrap();
            assert!((d.mean_fidelity - 1.0).abs() < 1e-9, "{:?}", d);
            assert_eq!(d.trap_count, 0);
            assert_eq!(d.total_static_shift_uev, 0.0);
        }
    }

    #[test]
    fn device_results_are_deterministic() {
        let cfg = tiny_config();
        let a = run_device(&cfg, 3).unwrap();
        let b = run_device(&cfg, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn experiment_is_deterministic_across_thread_counts() {
        let cfg = ExperimentConfig {
            n_devices: 6,
            n_trajectories: 2,
            ..Default::default()
        };
        let a = run_experiment(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_device_summary_collapses() {
        let cfg = ExperimentConfig {
            n_devices: 1,
            n_trajectories: 2,
            ..Default::default()
        };
        let r = run_experiment(&cfg).unwrap();
        let f = r.devices[0].mean_fidelity;
        for v in [r.summary.mean, r.summary.p05, r.summary.p25, r.summary.p95] {
            assert_eq!(v, f);
        }
        assert_eq!(r.cumulative, vec![[f, 1.0]]);
    }

    #[test]
    fn ensemble_invariants() {
        let cfg = ExperimentConfig {
            n_devices: 20,
            n_trajectories: 3,
            ..Default::default()
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.devices.len(), 20);
        assert!(r
            .devices
            .iter()
            .all(|d| (0.0..=1.0).contains(&d.mean_fidelity) && d.fidelity_std_error >= 0.0));
        assert_eq!(r.histogram.counts.iter().sum::<u64>(), 20);
        assert!(r.cumulative.windows(2).all(|w| w[0][0] <= w[1][0] && w[0][1] < w[1][1]));
        assert_eq!(r.cumulative.last().unwrap()[1], 1.0);
        // devices ordered by index
        assert!(r
            .devices
            .windows(2)
            .all(|w| w[0].device_index + 1 == w[1].device_index));
    }

    #[test]
    fn scaling_shifts_up_does_not_raise_mean_fidelity() {
        let base = ExperimentConfig {
            n_devices: 30,
            n_trajectories: 5,
            overhauser_enabled: false,
            ..Default::default()
        };
        let scaled = ExperimentConfig {
            shift_scale: 3.0,
            ..base.clone()
        };
        let f0 = run_experiment(&base).unwrap().summary.mean;
        let f3 = run_experiment(&scaled).unwrap().summary.mean;
        assert!(f3 <= f0 + 1e-6, "{f0} -> {f3}");
    }

    #[test]
    fn trajectory_convergence_within_reported_error() {
        let cfg = ExperimentConfig {
            n_devices: 12,
            n_trajectories: 40,
            ..Default::default()
        };
        let doubled = ExperimentConfig {
            n_trajectories: 80,
            ..cfg.clone()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&doubled).unwrap();
        let ok = a
            .devices
            .iter()
            .zip(&b.devices)
            .filter(|(x, y)| {
                let tol = 3.0 * x.fidelity_std_error.max(1e-12) + 3.0 * y.fidelity_std_error;
                (x.mean_fidelity - y.mean_fidelity).abs() <= tol
            })
            .count();
        assert!(ok * 100 >= 95 * a.devices.len(), "{ok}/{}", a.devices.len());
    }

    #[test]
    fn shift_distribution_has_zero_trap_peak() {
        let cfg = ExperimentConfig {
            n_devices: 2000,
            ..Default::default()
        };
        let s = summarize_shifts(&cfg).unwrap();
        let zeros = s
            .trap_counts
            .iter()
            .zip(&s.total_shifts_uev)
            .filter(|&(&c, &sh)| c == 0 && sh == 0.0)
            .count();
        let frac = zeros as f64 / 2000.0;
        assert!((frac - (-2.0f64).exp()).abs() < 0.03, "{frac}");
        // nonzero-trap devices span the few-to-tens-of-ueV scale
        let max_abs = s
            .total_shifts_uev
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max_abs > 3.0 && max_abs < 500.0, "{max_abs}");
    }

    #[test]
    fn degenerate_shift_distribution_at_zero_density() {
        let cfg = ExperimentConfig {
            sampling: SamplingSpec {
                density_per_cm2: 0.0,
                ..Default::default()
            },
            n_devices: 50,
            ..Default::default()
        };
        let s = summarize_shifts(&cfg).unwrap();
        assert!(s.total_shifts_uev.iter().all(|&v| v == 0.0));
        assert_eq!(s.summary.mean, 0.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = tiny_config();
        cfg.n_devices = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.t2_star_ns = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.histogram_bins = 0;
        assert!(cfg.validate().is_err());
    }
}
