//! Physical constants in the unit system used throughout the crate:
//! energy in ueV, time in ns, length in nm, magnetic field in T.

/// Reduced Planck constant, ueV ns.
pub const HBAR_UEV_NS: f64 = 0.658212;

/// Bohr magneton, ueV/T.
pub const MU_B_UEV_PER_T: f64 = 57.8838;

/// Coulomb constant e^2/(4 pi eps0), ueV nm.
pub const COULOMB_UEV_NM: f64 = 1.43996454e6;

/// Relative dielectric constant of silicon.
pub const EPS_SI_REL: f64 = 11.7;

/// Thomas-Fermi screening wave vector, 1/nm.
pub const Q_TF_PER_NM: f64 = 2.0 / 3.0;

/// Prefactor of the screened trap potential at d = 0:
/// e^2/(4 pi eps_si q_TF^2), ueV nm^3.
pub fn trap_potential_prefactor() -> f64 {
    COULOMB_UEV_NM / EPS_SI_REL / (Q_TF_PER_NM * Q_TF_PER_NM)
}
