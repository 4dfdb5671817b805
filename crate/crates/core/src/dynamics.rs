//! Euler–Lagrange flow, its variational equations and the Jacobi system.

use crate::error::{Error, Result};
use crate::model::{energy, momentum_integral, LagrangianState, Model};
use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3};
use serde::Serialize;

pub const R_MIN: f64 = 0.05;
pub const R_MAX: f64 = 3.95;
pub const CONSERVATION_TOL: f64 = 1e-8;

type State = [f64; 4];

/// (ṙ, θ̇, r̈, θ̈) with r̈ = rθ̇² − f′θ̇ − V′ and θ̈ from conservation of r²θ̇ − f.
pub fn el_vector_field(m: &Model, s: &LagrangianState) -> Result<LagrangianState> {
    if !(s.r > 0.0) {
        return Err(Error::Domain(format!("vector field at r = {}", s.r)));
    }
    Ok(LagrangianState::from_array(field(m, &s.to_array())))
}

fn field(m: &Model, x: &State) -> State {
    let [r, _, rd, td] = *x;
    let c = m.coeffs(r);
    let rdd = r * td * td - c.f1 * td - c.v1;
    let tdd = (c.f1 * rd - 2.0 * r * rd * td) / (r * r);
    [rd, td, rdd, tdd]
}

/// Jacobian of `field` in (r, θ, ṙ, θ̇). Needs f′, f″ and V″ only.
pub fn field_jacobian(m: &Model, x: &State) -> Matrix4<f64> {
    let [r, _, rd, td] = *x;
    let c = m.coeffs(r);
    let num = c.f1 * rd - 2.0 * r * rd * td;
    let r2 = r * r;
    Matrix4::new(
        0.0,
        0.0,
        1.0,
        0.0,
        0.0,
        0.0,
        0.0,
        1.0,
        td * td - c.f2 * td - c.v2,
        0.0,
        0.0,
        2.0 * r * td - c.f1,
        (c.f2 * rd - 2.0 * rd * td) / r2 - 2.0 * num / (r2 * r),
        0.0,
        (c.f1 - 2.0 * r * td) / r2,
        -2.0 * rd / r,
    )
}

fn axpy(x: &State, h: f64, k: &State) -> State {
    [x[0] + h * k[0], x[1] + h * k[1], x[2] + h * k[2], x[3] + h * k[3]]
}

fn rk4_step(m: &Model, x: &State, h: f64) -> State {
    let k1 = field(m, x);
    let k2 = field(m, &axpy(x, 0.5 * h, &k1));
    let k3 = field(m, &axpy(x, 0.5 * h, &k2));
    let k4 = field(m, &axpy(x, h, &k3));
    let mut out = *x;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LagrangianState>,
    pub step: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
}

impl Trajectory {
    pub fn period(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last(&self) -> &LagrangianState {
        self.states.last().unwrap()
    }

    pub fn to_csv(&self, m: &Model) -> String {
        let mut s = String::from("t,r,theta,rdot,thetadot,E,J\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t},{},{},{},{},{},{}\n", x.r, x.theta, x.rdot, x.thetadot, energy(m, x), momentum_integral(m, x)));
        }
        s
    }
}

pub fn integrate_orbit(m: &Model, s0: &LagrangianState, period: f64, n_steps: usize) -> Result<Trajectory> {
    integrate_orbit_tol(m, s0, period, n_steps, CONSERVATION_TOL)
}

/// Fixed-step RK4. Fails with `ConservationFailure` when the energy drift
/// exceeds 100 × `tol`.
pub fn integrate_orbit_tol(m: &Model, s0: &LagrangianState, period: f64, n_steps: usize, tol: f64) -> Result<Trajectory> {
    if n_steps < 100 || !(period > 0.0) {
        return Err(Error::Domain(format!("n_steps = {n_steps} (>= 100) and period = {period} (> 0)")));
    }
    let h = period / n_steps as f64;
    let e0 = energy(m, s0);
    let j0 = momentum_integral(m, s0);
    let mut x = s0.to_array();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let (mut de, mut dj) = (0.0f64, 0.0f64);
    times.push(0.0);
    states.push(*s0);
    for i in 1..=n_steps {
        x = rk4_step(m, &x, h);
        let t = if i == n_steps { period } else { i as f64 * h };
        let s = LagrangianState::from_array(x);
        if !(s.r > R_MIN && s.r < R_MAX) {
            return Err(Error::LeftDomain { t, r: s.r });
        }
        de = de.max((energy(m, &s) - e0).abs());
        dj = dj.max((momentum_integral(m, &s) - j0).abs());
        times.push(t);
        states.push(s);
    }
    if de > 100.0 * tol {
        return Err(Error::ConservationFailure { drift: de, limit: 100.0 * tol });
    }
    Ok(Trajectory { times, states, step: h, energy_drift: de, momentum_drift: dj })
}

/// Jacobian of the Legendre map (r, θ, ṙ, θ̇) ↦ (r, θ, p_r, p_θ).
pub fn legendre_jacobian(m: &Model, s: &LagrangianState) -> Matrix4<f64> {
    let f1 = m.profile.eval_all(s.r)[1];
    let mut d = Matrix4::identity();
    d[(3, 0)] = 2.0 * s.r * s.thetadot - f1;
    d[(3, 3)] = s.r * s.r;
    d
}

/// Standard symplectic matrix for (q, p) = (r, θ, p_r, p_θ).
pub fn j4() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    j
}

#[derive(Debug, Clone)]
pub struct LinearizedPath {
    pub times: Vec<f64>,
    /// Φ(t) in canonical coordinates (r, θ, p_r, p_θ).
    pub matrices: Vec<Matrix4<f64>>,
    /// Φ(t) in (r, θ, ṙ, θ̇).
    pub lagrangian: Vec<Matrix4<f64>>,
    pub frame: &'static str,
}

impl LinearizedPath {
    pub fn max_symplectic_defect(&self) -> f64 {
        let j = j4();
        self.matrices.iter().map(|p| (p.transpose() * j * p - j).norm()).fold(0.0, f64::max)
    }
}

/// Fundamental solution of the variational equations along `traj`, on the
/// same step grid.
pub fn linearized_flow(m: &Model, traj: &Trajectory) -> Result<LinearizedPath> {
    let h = traj.step;
    let mut x = traj.states[0].to_array();
    let mut phi = Matrix4::<f64>::identity();
    let d0inv = legendre_jacobian(m, &traj.states[0]).try_inverse().ok_or_else(|| Error::Domain("singular Legendre jacobian".into()))?;
    let mut lag = Vec::with_capacity(traj.times.len());
    let mut can = Vec::with_capacity(traj.times.len());
    lag.push(phi);
    can.push(Matrix4::identity());
    for _ in 1..traj.times.len() {
        let a1 = field_jacobian(m, &x);
        let k1 = field(m, &x);
        let x2 = axpy(&x, 0.5 * h, &k1);
        let a2 = field_jacobian(m, &x2);
        let k2 = field(m, &x2);
        let x3 = axpy(&x, 0.5 * h, &k2);
        let a3 = field_jacobian(m, &x3);
        let k3 = field(m, &x3);
        let x4 = axpy(&x, h, &k3);
        let a4 = field_jacobian(m, &x4);
        let k4 = field(m, &x4);
        let p1 = a1 * phi;
        let p2 = a2 * (phi + p1 * (0.5 * h));
        let p3 = a3 * (phi + p2 * (0.5 * h));
        let p4 = a4 * (phi + p3 * h);
        phi += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
        for i in 0..4 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let s = LagrangianState::from_array(x);
        lag.push(phi);
        can.push(legendre_jacobian(m, &s) * phi * d0inv);
    }
    Ok(LinearizedPath { times: traj.times.clone(), matrices: can, lagrangian: lag, frame: "canonical (r, theta, p_r, p_theta)" })
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobiData {
    pub times: Vec<f64>,
    /// F = −f′(r)/r.
    pub f_along: Vec<f64>,
    /// K = −rθ̇·F′(r) + F².
    pub k_along: Vec<f64>,
}

pub fn jacobi_coefficients(m: &Model, traj: &Trajectory) -> JacobiData {
    let mut f_along = Vec::with_capacity(traj.states.len());
    let mut k_along = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        let c = m.coeffs(s.r);
        let f = -c.f1 / s.r;
        let fprime = -c.f2 / s.r + c.f1 / (s.r * s.r);
        f_along.push(f);
        k_along.push(-s.r * s.thetadot * fprime + f * f);
    }
    JacobiData { times: traj.times.clone(), f_along, k_along }
}

#[derive(Debug, Clone)]
pub struct JacobiSolution {
    /// Fundamental solution of ÿ + Ky = 0 in (y, ẏ).
    pub yy: Matrix2<f64>,
    /// Fundamental solution of ẋ = −Fy, ÿ = −Ky in (x, y, ẏ).
    pub xy: Matrix3<f64>,
}

/// Integrates the Jacobi system over [0, T] with coefficients linearly
/// interpolated from the samples in `jd`.
pub fn integrate_jacobi(jd: &JacobiData, period: f64) -> JacobiSolution {
    let n = (jd.times.len().max(2) - 1).max(1024);
    let h = period / n as f64;
    let coef = |t: f64| -> (f64, f64) {
        let ts = &jd.times;
        if ts.len() < 2 {
            return (jd.f_along[0], jd.k_along[0]);
        }
        let i = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
        let w = ((t - ts[i - 1]) / (ts[i] - ts[i - 1])).clamp(0.0, 1.0);
        (jd.f_along[i - 1] * (1.0 - w) + jd.f_along[i] * w, jd.k_along[i - 1] * (1.0 - w) + jd.k_along[i] * w)
    };
    let a = |t: f64| {
        let (f, k) = coef(t);
        Matrix3::new(0.0, -f, 0.0, 0.0, 0.0, 1.0, 0.0, -k, 0.0)
    };
    let mut phi = Matrix3::<f64>::identity();
    for i in 0..n {
        let t = i as f64 * h;
        let p1 = a(t) * phi;
        let p2 = a(t + 0.5 * h) * (phi + p1 * (0.5 * h));
        let p3 = a(t + 0.5 * h) * (phi + p2 * (0.5 * h));
        let p4 = a(t + h) * (phi + p3 * h);
        phi += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * (h / 6.0);
    }
    let yy = phi.fixed_view::<2, 2>(1, 1).into_owned();
    JacobiSolution { yy, xy: phi }
}

/// Closed-form (y, ẏ) fundamental solution for constant K.
pub fn jacobi_closed_form(k: f64, t: f64) -> Matrix2<f64> {
    if k > 0.0 {
        let w = k.sqrt();
        let (s, c) = (w * t).sin_cos();
        Matrix2::new(c, s / w, -w * s, c)
    } else if k == 0.0 {
        Matrix2::new(1.0, t, 0.0, 1.0)
    } else {
        let w = (-k).sqrt();
        Matrix2::new((w * t).cosh(), (w * t).sinh() / w, w * (w * t).sinh(), (w * t).cosh())
    }
}

/// Lagrangian variation (δr, δθ, δṙ, δθ̇) for Jacobi data (x, y, ẏ) on a
/// circular orbit of radius ρ and angular speed a; δθ̇ keeps the energy fixed.
pub fn jacobi_to_lagrangian(rho: f64, a: f64, v: &Vector3<f64>) -> nalgebra::Vector4<f64> {
    let dr = -rho * a * v[1];
    nalgebra::Vector4::new(dr, a * v[0], -rho * a * v[2], -a * dr / rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetic_profile::MagneticProfile;

    #[test]
    fn circular_state_is_stationary() {
        let m = Model::new(MagneticProfile::fstar());
        let d = el_vector_field(&m, &LagrangianState::new(2.0, 0.0, 0.0, 0.5)).unwrap();
        assert!(d.rdot.abs() < 1e-15 && d.thetadot.abs() < 1e-15);
    }

    #[test]
    fn free_radial_motion_is_straight() {
        let m = Model::new(MagneticProfile::zero());
        let d = el_vector_field(&m, &LagrangianState::new(1.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!((d.rdot, d.thetadot), (0.0, 0.0));
        assert!(el_vector_field(&m, &LagrangianState::new(0.0, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let m = Model::new(MagneticProfile::fstar());
        let x = [2.1, 0.3, 0.2, 0.45];
        let a = field_jacobian(&m, &x);
        for j in 0..4 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (field(&m, &xp), field(&m, &xm));
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - a[(i, j)]).abs() < 1e-7, "({i},{j}) {fd} vs {}", a[(i, j)]);
            }
        }
    }

    #[test]
    fn closed_form_jacobi_is_a_rotation() {
        let m = jacobi_closed_form(0.125, 4.0 * std::f64::consts::PI);
        let ang = (0.125f64).sqrt() * 4.0 * std::f64::consts::PI;
        assert!((m.trace() - 2.0 * ang.cos()).abs() < 1e-14);
        assert!((m.determinant() - 1.0).abs() < 1e-14);
    }
}
