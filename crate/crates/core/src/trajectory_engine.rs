//! Pulse schedules (plain entangling gate and the noise-robust composite
//! sequence), piecewise-exact propagation of noisy trajectories, propagator
//! fidelity, and rotating-frame state traces.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::device_model::{
    build_hamiltonian, embed_single_qubit_rotation, propagator, right_qubit_phase, solve_gate_time,
    DeviceParams, Matrix6c, Qubit, C64,
};
use crate::error::{Error, Result};
use crate::noise_processes::{delta_epsilon_at, NoiseRealization};

/// Fixed rotation angle offset of the robust composite sequence, rad.
pub const THETA_STAR: f64 = 0.674;

/// One element of a pulse schedule. Two-qubit segments evolve the full
/// Hamiltonian at a fixed detuning; rotations are instantaneous ideal
/// single-qubit gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseSegment {
    TwoQubit {
        epsilon_uev: f64,
        duration_ns: f64,
    },
    Rotation {
        theta: f64,
        /// In-plane rotation-axis angle from x, rad. Referenced to the
        /// accumulated single-qubit phase of the ideal evolution so the
        /// rotation acts as a pure x-rotation in the qubit frame.
        axis_phi: f64,
        target: Qubit,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<PulseSegment>,
}

impl PulseSchedule {
    pub fn total_two_qubit_time(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s {
                PulseSegment::TwoQubit { duration_ns, .. } => *duration_ns,
                PulseSegment::Rotation { .. } => 0.0,
            })
            .sum()
    }
}

/// A 6x6 evolution operator with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub matrix: Matrix6c,
    pub ideal: bool,
}

impl Propagator {
    /// Row-major JSON array of [re, im] pairs, for regression fixtures.
    pub fn to_json(&self) -> String {
        let rows: Vec<String> = (0..6)
            .map(|i| {
                let cells: Vec<String> = (0..6)
                    .map(|j| {
                        let c = self.matrix[(i, j)];
                        format!("[{:.15e},{:.15e}]", c.re, c.im)
                    })
                    .collect();
                format!("[{}]", cells.join(","))
            })
            .collect();
        format!("{{\"ideal\":{},\"matrix\":[{}]}}", self.ideal, rows.join(","))
    }
}

/// Single square detuning pulse accumulating a conditional phase of pi.
pub fn cz_schedule(p: &DeviceParams) -> Result<PulseSchedule> {
    let t_gate = solve_gate_time(p)?;
    Ok(PulseSchedule {
        segments: vec![PulseSegment::TwoQubit {
            epsilon_uev: p.epsilon_on_uev,
            duration_ns: t_gate,
        }],
    })
}

/// Five-element robust sequence S(b) R(th) S(2pi) R(-th) S(b) with
/// th = pi - THETA_STAR and b = -pi sec(th); each ZZ angle a maps to a
/// segment of duration (a/pi) * t_CZ at the same bias. The rotation axes are
/// referenced to the right qubit's accumulated ideal phase at each insertion
/// point, making them x-rotations in the qubit's own rotating frame.
/// `reversed` swaps the two rotation angles (the sequence is a palindrome in
/// its two-qubit parts).
pub fn composite_schedule(p: &DeviceParams, reversed: bool) -> Result<PulseSchedule> {
    let t_gate = solve_gate_time(p)?;
    let theta = std::f64::consts::PI - THETA_STAR;
    let theta_bar = -std::f64::consts::PI / theta.cos();
    debug_assert!(theta_bar > 0.0);
    let t1 = theta_bar / std::f64::consts::PI * t_gate;
    let t2 = 2.0 * t_gate;

    let h0 = build_hamiltonian(p, p.epsilon_on_uev, 0.0, 0.0, 0.0)?;
    let phi1 = right_qubit_phase(&propagator(&h0, t1));
    let phi12 = right_qubit_phase(&propagator(&h0, t1 + t2));
    let (a1, a2) = if reversed { (-theta, theta) } else { (theta, -theta) };

    let zz = |d: f64| PulseSegment::TwoQubit {
        epsilon_uev: p.epsilon_on_uev,
        duration_ns: d,
    };
    Ok(PulseSchedule {
        segments: vec![
            zz(t1),
            PulseSegment::Rotation {
                theta: a1,
                axis_phi: phi1,
                target: Qubit::Right,
            },
            zz(t2),
            PulseSegment::Rotation {
                theta: a2,
                axis_phi: phi12,
                target: Qubit::Right,
            },
            zz(t1),
        ],
    })
}

fn check_unitary(u: &Matrix6c) -> Result<()> {
    let defect = (u.adjoint() * u - Matrix6c::identity()).norm();
    if defect > 1e-9 {
        return Err(Error::Numerical(format!(
            "propagator lost unitarity: ||U*U - I|| = {defect:.3e}"
        )));
    }
    Ok(())
}

/// Propagates the schedule starting at absolute time `t_start_ns` within the
/// noise realization's clock. Each two-qubit segment is split at the RTN
/// switch times it contains; within each piece the Hamiltonian is constant
/// and exponentiated exactly.
pub fn propagate_from(
    schedule: &PulseSchedule,
    p: &DeviceParams,
    realization: Option<&NoiseRealization>,
    t_start_ns: f64,
) -> Result<Propagator> {
    let mut u = Matrix6c::identity();
    let mut t_abs = t_start_ns;
    for seg in &schedule.segments {
        match *seg {
            PulseSegment::Rotation {
                theta,
                axis_phi,
                target,
            } => {
                u = embed_single_qubit_rotation(theta, axis_phi, target) * u;
            }
            PulseSegment::TwoQubit {
                epsilon_uev,
                duration_ns,
            } => {
                let t_end = t_abs + duration_ns;
                let mut cuts = vec![t_abs];
                if let Some(real) = realization {
                    cuts.extend(
                        real.rtn
                            .switch_times_until(t_end)
                            .into_iter()
                            .filter(|&s| s > t_abs),
                    );
                }
                cuts.push(t_end);
                for w in cuts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if b <= a {
                        continue;
                    }
                    let (deps, bl, br) = match realization {
                        Some(real) => (
                            delta_epsilon_at(a, real),
                            real.overhauser.b_eff_l,
                            real.overhauser.b_eff_r,
                        ),
                        None => (0.0, 0.0, 0.0),
                    };
                    let h = build_hamiltonian(p, epsilon_uev, deps, bl, br)?;
                    u = propagator(&h, b - a) * u;
                }
                t_abs = t_end;
            }
        }
    }
    check_unitary(&u)?;
    Ok(Propagator {
        matrix: u,
        ideal: realization.is_none(),
    })
}

/// Propagates from time zero; `None` yields the ideal (noise-free) twin.
pub fn propagate(
    schedule: &PulseSchedule,
    p: &DeviceParams,
    realization: Option<&NoiseRealization>,
) -> Result<Propagator> {
    propagate_from(schedule, p, realization, 0.0)
}

/// Trace overlap of the computational blocks,
/// |Tr(A B*)| / sqrt(Tr(A A*) Tr(B B*)) with A, B the 4x4 blocks of the
/// noisy and ideal propagators. Global-phase invariant, in [0, 1] by the
/// Cauchy-Schwarz inequality, and reduced by leakage out of the
/// computational subspace.
pub fn propagator_fidelity(noisy: &Propagator, ideal: &Propagator) -> f64 {
    let mut tr_ab = C64::new(0.0, 0.0);
    let (mut tr_aa, mut tr_bb) = (0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            let a = noisy.matrix[(i, j)];
            let b = ideal.matrix[(i, j)];
            tr_ab += a * b.conj();
            tr_aa += a.norm_sqr();
            tr_bb += b.norm_sqr();
        }
    }
    (tr_ab.norm() / (tr_aa * tr_bb).sqrt()).min(1.0)
}

/// One point of a state trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t_ns: f64,
    pub p_plus: f64,
}

/// Probability of the right qubit's |+> state versus time, in the frame
/// co-rotating with the right qubit's ideal single-spin phase (so an ideal
/// entangling gate with the left qubit in |1> carries P from 1 to 0).
/// Sampled every `dt_ns`; the final schedule time is always included.
pub fn state_trace(
    schedule: &PulseSchedule,
    p: &DeviceParams,
    realization: Option<&NoiseRealization>,
    initial: &Vector6<C64>,
    dt_ns: f64,
) -> Result<Vec<TracePoint>> {
    if !(dt_ns > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt_ns}")));
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "initial state not normalized: |psi| = {norm}"
        )));
    }
    let total = schedule.total_two_qubit_time();
    let mut sample_times: Vec<f64> = (0..)
        .map(|k| k as f64 * dt_ns)
        .take_while(|&t| t < total)
        .collect();
    sample_times.push(total);

    let mut out = Vec::with_capacity(sample_times.len());
    let mut psi = *initial;
    let mut frame = Matrix6c::identity(); // ideal cumulative propagator
    let mut t_abs = 0.0;
    let mut next = 0usize;

    let mut record = |t: f64, psi: &Vector6<C64>, frame: &Matrix6c| -> Result<()> {
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Numerical(format!("state norm drifted to {n} at t = {t}")));
        }
        // right-qubit frame phase: |+_phi> = (|up> + e^{i phi} |dn>)/sqrt(2)
        let phi = -frame[(0, 0)].arg() + frame[(1, 1)].arg();
        let e = C64::new(phi.cos(), -phi.sin());
        // projector I_L (x) |+_phi><+_phi| over the computational block
        let a_up = (psi[0] + e * psi[1]) / C64::new(std::f64::consts::SQRT_2, 0.0);
        let a_dn = (psi[2] + e * psi[3]) / C64::new(std::f64::consts::SQRT_2, 0.0);
        out.push(TracePoint {
            t_ns: t,
            p_plus: (a_up.norm_sqr() + a_dn.norm_sqr()).clamp(0.0, 1.0),
        });
        Ok(())
    };

    for seg in &schedule.segments {
        match *seg {
            PulseSegment::Rotation {
                theta,
                axis_phi,
                target,
            } => {
                let r = embed_single_qubit_rotation(theta, axis_phi, target);
                psi = r * psi;
                frame = r * frame;
            }
            PulseSegment::TwoQubit {
                epsilon_uev,
                duration_ns,
            } => {
                let t_end = t_abs + duration_ns;
                let mut cuts = vec![t_abs];
                while next < sample_times.len() && sample_times[next] < t_end {
                    cuts.push(sample_times[next]);
                    next += 1;
                }
                if let Some(real) = realization {
                    cuts.extend(
                        real.rtn
                            .switch_times_until(t_end)
                            .into_iter()
                            .filter(|&s| s > t_abs),
                    );
                }
                cuts.push(t_end);
                cuts.sort_by(|a, b| a.total_cmp(b));
                cuts.dedup();
                let h_ideal = build_hamiltonian(p, epsilon_uev, 0.0, 0.0, 0.0)?;
                for w in cuts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if b <= a {
                        continue;
                    }
                    // record at the left edge if it is a sample time
                    if sample_times.binary_search_by(|s| s.total_cmp(&a)).is_ok() {
                        record(a, &psi, &frame)?;
                    }
                    let (deps, bl, br) = match realization {
                        Some(real) => (
                            delta_epsilon_at(a, real),
                            real.overhauser.b_eff_l,
                            real.overhauser.b_eff_r,
                        ),
                        None => (0.0, 0.0, 0.0),
                    };
                    let h = build_hamiltonian(p, epsilon_uev, deps, bl, br)?;
                    psi = propagator(&h, b - a) * psi;
                    frame = propagator(&h_ideal, b - a) * frame;
                }
                t_abs = t_end;
            }
        }
    }
    record(total, &psi, &frame)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_processes::{OverhauserSample, RtnTrajectory};

    fn params() -> DeviceParams {
        DeviceParams::default()
    }

    fn plus_right_with_left_one() -> Vector6<C64> {
        let mut v = Vector6::zeros();
        let a = C64::new(1.0 / std::f64::consts::SQRT_2, 0.0);
        v[2] = a; // |dn,up>
        v[3] = a; // |dn,dn>
        v
    }

    #[test]
    fn cz_schedule_structure() {
        let p = params();
        let s = cz_schedule(&p).unwrap();
        assert_eq!(s.segments.len(), 1);
        let t = s.total_two_qubit_time();
        assert!((t - 143.504).abs() < 0.05, "{t}");
        let u = propagate(&s, &p, None).unwrap();
        let phi = crate::device_model::conditional_phase(&u.matrix);
        let dev = (phi - std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(dev.min(2.0 * std::f64::consts::PI - dev) < 1e-5, "{phi}");
    }

    #[test]
    fn composite_timing_and_angles() {
        let p = params();
        let s = composite_schedule(&p, false).unwrap();
        assert_eq!(s.segments.len(), 5);
        let t_cz = cz_schedule(&p).unwrap().total_two_qubit_time();
        let ratio = s.total_two_qubit_time() / t_cz;
        assert!((ratio - 4.5597).abs() < 0.001, "{ratio}");
        match (s.segments[1], s.segments[3]) {
            (
                PulseSegment::Rotation { theta: a, .. },
                PulseSegment::Rotation { theta: b, .. },
            ) => {
                assert!((a - 2.467593).abs() < 1e-6, "{a}");
                assert!((b + 2.467593).abs() < 1e-6, "{b}");
            }
            other => panic!("unexpected segments {other:?}"),
        }
        // middle ZZ segment lasts 2 t_CZ, outer ones (theta_bar/pi) t_CZ
        match (s.segments[0], s.segments[2], s.segments[4]) {
            (
                PulseSegment::TwoQubit { duration_ns: d1, .. },
                PulseSegment::TwoQubit { duration_ns: d2, .. },
                PulseSegment::TwoQubit { duration_ns: d3, .. },
            ) => {
                assert_eq!(d1, d3);
                assert!((d2 / t_cz - 2.0).abs() < 1e-9);
                assert!((d1 / t_cz - 1.279866).abs() < 1e-4, "{}", d1 / t_cz);
            }
            other => panic!("unexpected segments {other:?}"),
        }
    }

    #[test]
    fn empty_schedule_is_identity() {
        let s = PulseSchedule { segments: vec![] };
        let u = propagate(&s, &params(), None).unwrap();
        assert!((u.matrix - Matrix6c::identity()).norm() < 1e-15);
    }

    #[test]
    fn ideal_propagators_are_unitary() {
        let p = params();
        for s in [cz_schedule(&p).unwrap(), composite_schedule(&p, false).unwrap()] {
            let u = propagate(&s, &p, None).unwrap();
            assert!((u.matrix.adjoint() * u.matrix - Matrix6c::identity()).norm() < 1e-9);
            assert!(u.ideal);
        }
    }

    #[test]
    fn cz_leakage_is_perturbatively_small() {
        let p = params();
        let u = propagate(&cz_schedule(&p).unwrap(), &p, None).unwrap();
        // leakage amplitude^2 out of each computational column
        let bound = (p.tc_uev / 140.0).powi(2); // ~5e-5
        for j in 0..4 {
            let leak: f64 = (4..6).map(|i| u.matrix[(i, j)].norm_sqr()).sum();
            assert!(leak <= 4.0 * bound, "column {j}: {leak}");
        }
    }

    #[test]
    fn group_property_split_at_interior_time() {
        let p = params();
        let real = NoiseRealization {
            rtn: RtnTrajectory {
                initial_states: vec![1, 0],
                switch_events: vec![vec![40.0], vec![77.5]],
                duration_ns: 200.0,
            },
            overhauser: OverhauserSample {
                b_eff_l: 5e-8,
                b_eff_r: -3e-8,
            },
            shifts_uev: vec![1.5, -0.8],
            baseline_uev: 0.0,
        };
        let eps = p.epsilon_on_uev;
        let seg = |d: f64| PulseSchedule {
            segments: vec![PulseSegment::TwoQubit {
                epsilon_uev: eps,
                duration_ns: d,
            }],
        };
        let full = propagate(&seg(120.0), &p, Some(&real)).unwrap();
        // split times exactly representable so durations sum without rounding
        for t0 in [13.375, 40.0, 60.0, 77.5, 119.0] {
            let first = propagate_from(&seg(t0), &p, Some(&real), 0.0).unwrap();
            let second = propagate_from(&seg(120.0 - t0), &p, Some(&real), t0).unwrap();
            let combined = second.matrix * first.matrix;
            assert!(
                (combined - full.matrix).norm() < 1e-12,
                "split at {t0}: {}",
                (combined - full.matrix).norm()
            );
        }
    }

    #[test]
    fn fidelity_identities() {
        let p = params();
        let u = propagate(&cz_schedule(&p).unwrap(), &p, None).unwrap();
        assert!((propagator_fidelity(&u, &u) - 1.0).abs() < 1e-12);
        // global phase invariance
        let mut v = u.clone();
        let phase = C64::new(0.0, 0.7).exp();
        v.matrix *= phase;
        assert!((propagator_fidelity(&v, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_of_conditional_sign_error() {
        // A = B diag(1,1,1,-1) on the computational block: |3 - 1|/4 = 0.5
        let ident = Propagator {
            matrix: Matrix6c::identity(),
            ideal: true,
        };
        let mut flipped = ident.clone();
        flipped.matrix[(3, 3)] = C64::new(-1.0, 0.0);
        let f = propagator_fidelity(&flipped, &ident);
        assert!((f - 0.5).abs() < 1e-12, "{f}");
    }

    #[test]
    fn noise_free_fidelity_is_one() {
        let p = params();
        for s in [cz_schedule(&p).unwrap(), composite_schedule(&p, false).unwrap()] {
            let ui = propagate(&s, &p, None).unwrap();
            let un = propagate(&s, &p, Some(&NoiseRealization::noiseless(1000.0))).unwrap();
            let f = propagator_fidelity(&un, &ui);
            assert!((f - 1.0).abs() < 1e-9, "{f}");
        }
    }

    fn quasi_static_infidelity(
        schedule: &PulseSchedule,
        p: &DeviceParams,
        deps: f64,
    ) -> f64 {
        let ui = propagate(schedule, p, None).unwrap();
        let real = NoiseRealization {
            rtn: RtnTrajectory {
                initial_states: vec![1],
                switch_events: vec![vec![]],
                duration_ns: 1e6,
            },
            overhauser: OverhauserSample::default(),
            shifts_uev: vec![deps],
            baseline_uev: 0.0,
        };
        let un = propagate(schedule, p, Some(&real)).unwrap();
        1.0 - propagator_fidelity(&un, &ui)
    }

    #[test]
    fn composite_suppresses_quasi_static_detuning_noise() {
        let p = params();
        let cz = cz_schedule(&p).unwrap();
        let comp = composite_schedule(&p, false).unwrap();
        for deps in [0.5, 1.0, 2.0, 5.0] {
            let icz = quasi_static_infidelity(&cz, &p, deps);
            let icomp = quasi_static_infidelity(&comp, &p, deps);
            assert!(
                icomp < icz,
                "deps {deps}: composite {icomp:.3e} vs plain {icz:.3e}"
            );
        }
        // frozen ratio oracle at deps = 1 ueV
        let r = quasi_static_infidelity(&comp, &p, 1.0) / quasi_static_infidelity(&cz, &p, 1.0);
        assert!((r - 0.132).abs() < 0.01, "{r}");
    }

    #[test]
    fn reversed_composite_is_equally_robust() {
        let p = params();
        let comp = composite_schedule(&p, true).unwrap();
        let cz = cz_schedule(&p).unwrap();
        let r = quasi_static_infidelity(&comp, &p, 1.0) / quasi_static_infidelity(&cz, &p, 1.0);
        assert!(r < 0.2, "{r}");
    }

    #[test]
    fn trace_starts_at_one_and_ends_near_zero() {
        let p = params();
        let s = cz_schedule(&p).unwrap();
        let trace = state_trace(&s, &p, None, &plus_right_with_left_one(), 1.0).unwrap();
        assert_eq!(trace[0].t_ns, 0.0);
        assert!((trace[0].p_plus - 1.0).abs() < 1e-12);
        let last = trace.last().unwrap();
        assert!((last.t_ns - s.total_two_qubit_time()).abs() < 1e-9);
        assert!(last.p_plus < 1e-4, "{}", last.p_plus);
        assert!(trace.iter().all(|pt| (0.0..=1.0).contains(&pt.p_plus)));
        // samples every 1 ns plus the end point
        assert_eq!(trace.len(), 145);
    }

    #[test]
    fn trace_rejects_bad_inputs() {
        let p = params();
        let s = cz_schedule(&p).unwrap();
        let psi = plus_right_with_left_one();
        assert!(state_trace(&s, &p, None, &psi, 0.0).is_err());
        let unnorm = psi * C64::new(0.5, 0.0);
        assert!(state_trace(&s, &p, None, &unnorm, 1.0).is_err());
    }

    #[test]
    fn noisy_trace_differs_from_ideal() {
        let p = params();
        let s = cz_schedule(&p).unwrap();
        let psi = plus_right_with_left_one();
        let ideal = state_trace(&s, &p, None, &psi, 1.0).unwrap();
        let real = NoiseRealization {
            rtn: RtnTrajectory {
                initial_states: vec![1],
                switch_events: vec![vec![]],
                duration_ns: 1e6,
            },
            overhauser: OverhauserSample::default(),
            shifts_uev: vec![5.0],
            baseline_uev: 0.0,
        };
        let noisy = state_trace(&s, &p, Some(&real), &psi, 1.0).unwrap();
        let end_gap = (ideal.last().unwrap().p_plus - noisy.last().unwrap().p_plus).abs();
        assert!(end_gap > 3e-4, "{end_gap}");
    }

    #[test]
    fn propagator_json_shape() {
        let u = Propagator {
            matrix: Matrix6c::identity(),
            ideal: true,
        };
        let v: serde_json::Value = serde_json::from_str(&u.to_json()).unwrap();
        assert_eq!(v["ideal"], true);
        assert_eq!(v["matrix"].as_array().unwrap().len(), 6);
        assert_eq!(v["matrix"][0][0][0], 1.0);
    }
}
