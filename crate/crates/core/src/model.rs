//! Lagrangian L = ½(ṙ² + r²θ̇²) − f(r)θ̇ − V(r) in the polar chart of the
//! disk r < 4, its Legendre dual and first integrals.
//!
//! V is zero for the magnetic scenarios. A radial potential is supported so
//! that a rotationally symmetric control system can run through the same
//! pipeline.

use crate::magnetic_profile::MagneticProfile;
use serde::{Deserialize, Serialize};

pub const DISK_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub r: f64,
    pub theta: f64,
    pub rdot: f64,
    pub thetadot: f64,
}

impl LagrangianState {
    pub fn new(r: f64, theta: f64, rdot: f64, thetadot: f64) -> Self {
        LagrangianState { r, theta, rdot, thetadot }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.theta, self.rdot, self.thetadot]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        LagrangianState::new(x[0], x[1], x[2], x[3])
    }

    pub fn in_disk(&self) -> bool {
        self.r > 0.0 && self.r < DISK_RADIUS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianState {
    pub r: f64,
    pub theta: f64,
    pub p_r: f64,
    pub p_theta: f64,
}

impl HamiltonianState {
    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.theta, self.p_r, self.p_theta]
    }
}

/// Radial potential V(r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadialPotential {
    None,
    /// V = c·r⁴/4.
    Quartic {
        c: f64,
    },
}

impl RadialPotential {
    /// (V, V′, V″).
    pub fn eval(&self, r: f64) -> [f64; 3] {
        match *self {
            RadialPotential::None => [0.0; 3],
            RadialPotential::Quartic { c } => [0.25 * c * r.powi(4), c * r.powi(3), 3.0 * c * r * r],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub profile: MagneticProfile,
    pub potential: RadialPotential,
}

impl Model {
    pub fn new(profile: MagneticProfile) -> Self {
        Model { profile, potential: RadialPotential::None }
    }

    pub fn with_potential(profile: MagneticProfile, potential: RadialPotential) -> Self {
        Model { profile, potential }
    }

    /// (f, f′, f″, V, V′, V″) at r.
    pub fn coeffs(&self, r: f64) -> Coeffs {
        let [f, f1, f2, _] = self.profile.eval_all(r);
        let [v, v1, v2] = self.potential.eval(r);
        Coeffs { f, f1, f2, v, v1, v2 }
    }

    pub fn id(&self) -> String {
        match self.potential {
            RadialPotential::None => self.profile.id.clone(),
            RadialPotential::Quartic { c } => format!("{}+quartic({c})", self.profile.id),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Coeffs {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
}

pub fn kinetic_energy(s: &LagrangianState) -> f64 {
    0.5 * (s.rdot * s.rdot + s.r * s.r * s.thetadot * s.thetadot)
}

/// Kinetic plus potential energy.
pub fn energy(m: &Model, s: &LagrangianState) -> f64 {
    kinetic_energy(s) + m.potential.eval(s.r)[0]
}

pub fn lagrangian(m: &Model, s: &LagrangianState) -> f64 {
    let c = m.coeffs(s.r);
    kinetic_energy(s) - c.f * s.thetadot - c.v
}

pub fn legendre(m: &Model, s: &LagrangianState) -> HamiltonianState {
    let f = m.profile.f(s.r);
    HamiltonianState { r: s.r, theta: s.theta, p_r: s.rdot, p_theta: s.r * s.r * s.thetadot - f }
}

pub fn inverse_legendre(m: &Model, h: &HamiltonianState) -> LagrangianState {
    let f = m.profile.f(h.r);
    LagrangianState::new(h.r, h.theta, h.p_r, (h.p_theta + f) / (h.r * h.r))
}

/// H = ½p_r² + (p_θ + f)²/(2r²) + V.
pub fn hamiltonian(m: &Model, h: &HamiltonianState) -> f64 {
    let c = m.coeffs(h.r);
    let w = h.p_theta + c.f;
    0.5 * h.p_r * h.p_r + 0.5 * w * w / (h.r * h.r) + c.v
}

/// r²θ̇ − f(r), the momentum conjugate to θ.
pub fn momentum_integral(m: &Model, s: &LagrangianState) -> f64 {
    s.r * s.r * s.thetadot - m.profile.f(s.r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeBound {
    /// ½·sup (f/r)².
    pub weighted: f64,
    /// ½·sup f².
    pub crude: f64,
}

pub fn mane_upper_bound(p: &MagneticProfile) -> ManeBound {
    let (mut sf, mut sr) = (0.0f64, 0.0f64);
    for r in p.grid() {
        let f = p.f(r);
        sf = sf.max(f.abs());
        sr = sr.max((f / r).abs());
    }
    ManeBound { weighted: 0.5 * sr * sr, crude: 0.5 * sf * sf }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_energy_at_scenario_orbits() {
        assert_eq!(kinetic_energy(&LagrangianState::new(2.0, 0.0, 0.0, 0.5)), 0.5);
        assert!((kinetic_energy(&LagrangianState::new(2.5, 0.0, 0.0, 0.4)) - 0.5).abs() < 1e-15);
        assert_eq!(kinetic_energy(&LagrangianState::new(1.0, 0.3, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn lagrangian_examples() {
        let fs = Model::new(MagneticProfile::fstar());
        let f2 = fs.profile.f(2.0);
        let l = lagrangian(&fs, &LagrangianState::new(2.0, 0.0, 0.0, 0.5));
        assert!((l - (0.5 - 0.5 * f2)).abs() < 1e-15);
        assert_eq!(lagrangian(&fs, &LagrangianState::new(0.5, 0.0, 0.0, 2.0)), 0.5);
        let z = Model::new(MagneticProfile::zero());
        assert_eq!(lagrangian(&z, &LagrangianState::new(1.0, 0.0, 1.0, 0.0)), 0.5);
    }

    #[test]
    fn legendre_examples() {
        let z = Model::new(MagneticProfile::zero());
        let h = legendre(&z, &LagrangianState::new(1.0, 0.0, 0.3, 0.7));
        assert_eq!((h.p_r, h.p_theta), (0.3, 0.7));
        let fs = Model::new(MagneticProfile::fstar());
        let h = legendre(&fs, &LagrangianState::new(2.0, 0.0, 0.0, 0.5));
        assert_eq!(h.p_theta, 2.0 - fs.profile.f(2.0));
    }

    #[test]
    fn mane_bound_scales_quadratically() {
        let p = MagneticProfile::fstar();
        let b1 = mane_upper_bound(&p);
        let b2 = mane_upper_bound(&p.scaled(2.0));
        assert!((b2.weighted - 4.0 * b1.weighted).abs() < 1e-14);
        assert!((b2.crude - 4.0 * b1.crude).abs() < 1e-14);
        assert_eq!(mane_upper_bound(&MagneticProfile::zero()).weighted, 0.0);
    }
}
