//! Random interface charge-trap configurations and their screened Coulomb
//! perturbation of the interdot detuning.
//!
//! Trap counts follow a Poisson point process over the sampling region.
//! Sampling traps directly from the Poisson law over the device region is
//! statistically identical to scattering traps over a much larger region at
//! the same areal density and keeping the ones that land inside; the direct
//! form is used because it is cheaper.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::constants::{trap_potential_prefactor, Q_TF_PER_NM};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// In-plane trap position at the oxide interface, plus the depth parameter d
/// of the screened potential (d = 0 for interface traps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapPosition {
    pub x_nm: f64,
    pub y_nm: f64,
    #[serde(default)]
    pub d_nm: f64,
}

impl TrapPosition {
    pub fn new(x_nm: f64, y_nm: f64) -> Self {
        Self { x_nm, y_nm, d_nm: 0.0 }
    }
}

/// One device realization: trap positions and the per-trap interdot detuning
/// shifts Delta-eps_i = <L|V_i|L> - <R|V_i|R>.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSet {
    pub traps: Vec<TrapPosition>,
    /// ueV, one entry per trap; empty until shifts are evaluated.
    pub detuning_shifts: Vec<f64>,
    /// Traps with both coordinates inside the central L0 x L0 square.
    pub in_area_count: usize,
}

impl TrapSet {
    pub fn total_shift(&self) -> f64 {
        self.detuning_shifts.iter().sum()
    }
}

/// Geometry of the two dots relative to the trap plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DotGeometry {
    pub center_l_nm: [f64; 2],
    pub center_r_nm: [f64; 2],
    /// Gaussian radius of the dot probability density, |psi|^2 ~ exp(-r^2/sigma^2).
    pub sigma_nm: f64,
    /// Vertical offset between the trap plane and the dot plane. Regularizes
    /// the 1/r^3 kernel for traps directly above a dot.
    pub z_setback_nm: f64,
    /// Evaluate the potential at the dot centers instead of integrating.
    pub point_mode: bool,
}

impl Default for DotGeometry {
    fn default() -> Self {
        // 35 nm dot separation centered in the patterning area. The vertical
        // setback is calibrated so that the interdot shift distribution spans
        // the few-to-tens-of-ueV range (see README for the sensitivity sweep).
        Self {
            center_l_nm: [-17.5, 0.0],
            center_r_nm: [17.5, 0.0],
            sigma_nm: 10.0,
            z_setback_nm: 13.0,
            point_mode: false,
        }
    }
}

impl DotGeometry {
    pub fn validate(&self) -> Result<()> {
        if !self.point_mode && !(self.sigma_nm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_nm must be > 0 in integrated mode, got {}",
                self.sigma_nm
            )));
        }
        let dx = self.center_l_nm[0] - self.center_r_nm[0];
        let dy = self.center_l_nm[1] - self.center_r_nm[1];
        if dx * dx + dy * dy == 0.0 {
            return Err(Error::InvalidConfig("dot centers coincide".into()));
        }
        if !(self.z_setback_nm >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "z_setback_nm must be >= 0, got {}",
                self.z_setback_nm
            )));
        }
        Ok(())
    }
}

/// Areal trap density and sampling region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub density_per_cm2: f64,
    /// Side L0 of the patterning area, nm.
    pub area_side_nm: f64,
    /// Extra border around the patterning area in which traps are also
    /// sampled, nm. Traps in the border contribute potential but are not
    /// counted by `in_area_count`.
    pub margin_nm: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            density_per_cm2: 2e10,
            area_side_nm: 100.0,
            margin_nm: 0.0,
        }
    }
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.density_per_cm2.is_finite() || self.density_per_cm2 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "trap density must be finite and >= 0, got {}",
                self.density_per_cm2
            )));
        }
        if !(self.area_side_nm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "area_side_nm must be > 0, got {}",
                self.area_side_nm
            )));
        }
        if !(self.margin_nm >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "margin_nm must be >= 0, got {}",
                self.margin_nm
            )));
        }
        Ok(())
    }

    /// Side of the full sampling region, nm.
    pub fn region_side_nm(&self) -> f64 {
        self.area_side_nm + 2.0 * self.margin_nm
    }

    /// Mean trap count over the full sampling region.
    pub fn mean_count(&self) -> f64 {
        let side = self.region_side_nm();
        self.density_per_cm2 * 1e-14 * side * side
    }
}

/// Draws trap positions for one device. Shifts are left empty.
pub fn sample_traps<R: Rng + ?Sized>(spec: &SamplingSpec, rng: &mut R) -> Result<TrapSet> {
    spec.validate()?;
    let mean = spec.mean_count();
    let count = if mean == 0.0 {
        0
    } else {
        Poisson::new(mean)
            .map_err(|e| Error::Numerical(format!("poisson({mean}): {e}")))?
            .sample(rng) as usize
    };
    let half_region = spec.region_side_nm() / 2.0;
    let half_area = spec.area_side_nm / 2.0;
    let mut traps = Vec::with_capacity(count);
    let mut in_area = 0;
    for _ in 0..count {
        let x = rng.gen_range(-half_region..half_region);
        let y = rng.gen_range(-half_region..half_region);
        if x.abs() <= half_area && y.abs() <= half_area {
            in_area += 1;
        }
        traps.push(TrapPosition::new(x, y));
    }
    Ok(TrapSet {
        traps,
        detuning_shifts: Vec::new(),
        in_area_count: in_area,
    })
}

/// Thomas-Fermi screened trap potential at a 3D point, ueV.
///
/// V = e^2/(4 pi eps_si r^3) * (1 + q_TF d)/q_TF^2 with
/// r^2 = (x - X_T)^2 + (y - Y_T)^2 + z^2.
pub fn screened_potential(trap: &TrapPosition, point_nm: [f64; 3]) -> Result<f64> {
    let dx = point_nm[0] - trap.x_nm;
    let dy = point_nm[1] - trap.y_nm;
    let z = point_nm[2];
    let r2 = dx * dx + dy * dy + z * z;
    if r2 == 0.0 {
        return Err(Error::Numerical(
            "screened_potential evaluated at zero distance from the trap".into(),
        ));
    }
    Ok(trap_potential_prefactor() * (1.0 + Q_TF_PER_NM * trap.d_nm) / (r2 * r2.sqrt()))
}

fn gl_cached(order: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static GL32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL64: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match order {
        32 => GL32.get_or_init(|| gauss_legendre(32)),
        64 => GL64.get_or_init(|| gauss_legendre(64)),
        _ => unreachable!("unsupported cached quadrature order"),
    }
}

/// Gaussian-density-weighted expectation of the screened potential over one
/// dot, by tensor-product Gauss-Legendre on a +-4 sigma box.
fn dot_expectation(trap: &TrapPosition, center: [f64; 2], geom: &DotGeometry, order: usize) -> f64 {
    let (nodes, weights) = gl_cached(order);
    let sigma = geom.sigma_nm;
    let half = 4.0 * sigma;
    let z2 = geom.z_setback_nm * geom.z_setback_nm;
    let pref = trap_potential_prefactor() * (1.0 + Q_TF_PER_NM * trap.d_nm);
    let norm = 1.0 / (std::f64::consts::PI * sigma * sigma);
    let mut acc = 0.0;
    for (i, &xi) in nodes.iter().enumerate() {
        let x = center[0] + half * xi;
        let dx2 = (x - center[0]) * (x - center[0]);
        let tx2 = (x - trap.x_nm) * (x - trap.x_nm);
        for (j, &yj) in nodes.iter().enumerate() {
            let y = center[1] + half * yj;
            let dy = y - center[1];
            let ty = y - trap.y_nm;
            let dens = (-(dx2 + dy * dy) / (sigma * sigma)).exp() * norm;
            let r2 = tx2 + ty * ty + z2;
            acc += weights[i] * weights[j] * dens * pref / (r2 * r2.sqrt());
        }
    }
    acc * half * half
}

/// Interdot detuning shift of one trap: <L|V|L> - <R|V|R>, ueV.
///
/// In point mode the potential is evaluated at the two dot centers with the
/// vertical setback; otherwise by quadrature against the Gaussian dot
/// densities. Antisymmetric under swapping the two dots.
pub fn interdot_shift(trap: &TrapPosition, geom: &DotGeometry) -> Result<f64> {
    geom.validate()?;
    if geom.point_mode {
        let z = geom.z_setback_nm;
        let vl = screened_potential(trap, [geom.center_l_nm[0], geom.center_l_nm[1], z])?;
        let vr = screened_potential(trap, [geom.center_r_nm[0], geom.center_r_nm[1], z])?;
        return Ok(vl - vr);
    }
    let coarse = dot_expectation(trap, geom.center_l_nm, geom, 32)
        - dot_expectation(trap, geom.center_r_nm, geom, 32);
    let fine = dot_expectation(trap, geom.center_l_nm, geom, 64)
        - dot_expectation(trap, geom.center_r_nm, geom, 64);
    let bound = (fine - coarse).abs();
    if bound > (1e-4 * fine.abs()).max(1e-9) {
        return Err(Error::QuadratureNonConvergence {
            estimate: fine,
            error_bound: bound,
        });
    }
    Ok(fine)
}

/// Samples one device and evaluates the shift of every trap.
/// Deterministic for a given rng state.
pub fn build_trap_set<R: Rng + ?Sized>(
    spec: &SamplingSpec,
    geom: &DotGeometry,
    rng: &mut R,
) -> Result<TrapSet> {
    let mut set = sample_traps(spec, rng)?;
    set.detuning_shifts = set
        .traps
        .iter()
        .map(|t| interdot_shift(t, geom))
        .collect::<Result<Vec<_>>>()?;
    Ok(set)
}

fn fmt_g15(v: f64) -> String {
    // 15 significant digits
    format!("{v:.14e}")
}

/// JSON document for a trap set, numbers at 15 significant digits.
pub fn trap_set_to_json(
    set: &TrapSet,
    seed: u64,
    spec: &SamplingSpec,
    geom: &DotGeometry,
) -> String {
    let traps: Vec<String> = set
        .traps
        .iter()
        .map(|t| {
            format!(
                "{{\"x\":{},\"y\":{},\"d\":{}}}",
                fmt_g15(t.x_nm),
                fmt_g15(t.y_nm),
                fmt_g15(t.d_nm)
            )
        })
        .collect();
    let shifts: Vec<String> = set.detuning_shifts.iter().map(|&s| fmt_g15(s)).collect();
    format!(
        concat!(
            "{{\"seed\":{},",
            "\"spec\":{{\"density_per_cm2\":{},\"area_side_nm\":{},\"margin_nm\":{}}},",
            "\"geometry\":{{\"center_l_nm\":[{},{}],\"center_r_nm\":[{},{}],",
            "\"sigma_nm\":{},\"z_setback_nm\":{},\"point_mode\":{}}},",
            "\"traps\":[{}],\"shifts_ueV\":[{}],\"in_area_count\":{}}}"
        ),
        seed,
        fmt_g15(spec.density_per_cm2),
        fmt_g15(spec.area_side_nm),
        fmt_g15(spec.margin_nm),
        fmt_g15(geom.center_l_nm[0]),
        fmt_g15(geom.center_l_nm[1]),
        fmt_g15(geom.center_r_nm[0]),
        fmt_g15(geom.center_r_nm[1]),
        fmt_g15(geom.sigma_nm),
        fmt_g15(geom.z_setback_nm),
        geom.point_mode,
        traps.join(","),
        shifts.join(","),
        set.in_area_count
    )
}
