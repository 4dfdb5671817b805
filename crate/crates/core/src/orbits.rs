//! Circular periodic orbits, their continuation in energy (orbit cylinders),
//! period derivatives and the correction term χ = sign(−T′).

use crate::dynamics::{el_vector_field, integrate_orbit_tol, linearized_flow};
use crate::error::{Error, Result};
use crate::model::{energy, LagrangianState, Model};
use nalgebra::{DMatrix, DVector, Vector4};
use serde::Serialize;
use std::f64::consts::PI;

pub const TPRIME_FLOOR: f64 = 1e-8;
pub const DEFAULT_HALF_WIDTH: f64 = 0.05;
const BRACKET_CELLS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircularOrbit {
    pub k: f64,
    pub rho: f64,
    pub a: f64,
    pub period: f64,
    pub profile_id: String,
}

impl CircularOrbit {
    pub fn state(&self) -> LagrangianState {
        LagrangianState::new(self.rho, 0.0, 0.0, self.a)
    }
}

/// Residual of the circular-orbit condition ρa² − af′ − V′ = 0 divided by a,
/// with a = √(2(k − V))/ρ. Without a potential this is √(2k) − f′(ρ).
fn residual(m: &Model, k: f64, rho: f64) -> Option<f64> {
    let c = m.coeffs(rho);
    let w2 = 2.0 * (k - c.v);
    if w2 <= 0.0 {
        return None;
    }
    let w = w2.sqrt();
    Some(w - c.f1 - c.v1 * rho / w)
}

pub fn find_circular_orbit(m: &Model, k: f64, rho_seed: f64) -> Result<CircularOrbit> {
    find_circular_orbit_in(m, k, rho_seed - DEFAULT_HALF_WIDTH, rho_seed + DEFAULT_HALF_WIDTH)
}

/// Finds the unique root of the circular-orbit condition in [lo, hi].
pub fn find_circular_orbit_in(m: &Model, k: f64, lo: f64, hi: f64) -> Result<CircularOrbit> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("energy k = {k} must be positive")));
    }
    let lo = lo.max(crate::dynamics::R_MIN);
    let hi = hi.min(crate::dynamics::R_MAX);
    let xs: Vec<f64> = (0..=BRACKET_CELLS).map(|i| lo + (hi - lo) * i as f64 / BRACKET_CELLS as f64).collect();
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| residual(m, k, x)).collect();
    let mut brackets = Vec::new();
    for i in 0..BRACKET_CELLS {
        if let (Some(u), Some(v)) = (vals[i], vals[i + 1]) {
            if u == 0.0 {
                brackets.push((xs[i], xs[i]));
            } else if u * v < 0.0 {
                brackets.push((xs[i], xs[i + 1]));
            }
        }
    }
    if let Some(Some(0.0)) = vals.last() {
        brackets.push((hi, hi));
    }
    match brackets.len() {
        0 => Err(Error::NoRoot { lo, hi }),
        1 => {
            let (a0, b0) = brackets[0];
            let rho = if a0 == b0 { a0 } else { bisect(|x| residual(m, k, x).unwrap_or(f64::NAN), a0, b0) };
            let c = m.coeffs(rho);
            let a = (2.0 * (k - c.v)).sqrt() / rho;
            let orbit = CircularOrbit { k, rho, a, period: 2.0 * PI / a, profile_id: m.id() };
            let d = el_vector_field(m, &orbit.state())?;
            if d.rdot.abs() > 1e-12 * (1.0 + a * a * rho) {
                return Err(Error::NoRoot { lo, hi });
            }
            Ok(orbit)
        }
        count => Err(Error::AmbiguousRoot { lo, hi, count }),
    }
}

/// Bisection to adjacent floats; exact sign information only.
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = mid;
            ga = gm;
        } else {
            b = mid;
        }
    }
    if g(b).abs() < ga.abs() {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderDerivatives {
    pub rhoprime: f64,
    pub aprime: f64,
    pub tprime: f64,
    /// dp_θ/dk along the family; equals 1/a.
    pub pthetaprime: f64,
}

/// Implicit differentiation of the circular-orbit condition along the family.
/// Without a potential: ρ′ = 1/(√(2k)·f″(ρ)) and
/// T′ = 2π(f′ρ′ − ρf″ρ′)/f′².
pub fn period_derivative_analytic(m: &Model, orb: &CircularOrbit) -> Result<(f64, f64)> {
    let d = cylinder_derivatives(m, orb)?;
    Ok((d.rhoprime, d.tprime))
}

pub fn cylinder_derivatives(m: &Model, orb: &CircularOrbit) -> Result<CylinderDerivatives> {
    let (rho, a) = (orb.rho, orb.a);
    let c = m.coeffs(rho);
    let a_k = 1.0 / (rho * rho * a);
    let a_rho = -c.v1 / (rho * rho * a) - a / rho;
    let lever = 2.0 * rho * a - c.f1;
    let g_k = lever * a_k;
    let g_rho = a * a - a * c.f2 - c.v2 + lever * a_rho;
    if g_rho.abs() < 1e-10 {
        return Err(Error::DegenerateCylinder(format!("radius equation is singular at rho = {rho} (f'' = {:e})", c.f2)));
    }
    let rhoprime = -g_k / g_rho;
    let aprime = a_k + a_rho * rhoprime;
    let tprime = -2.0 * PI * aprime / (a * a);
    let pthetaprime = 2.0 * rho * a * rhoprime + rho * rho * aprime - c.f1 * rhoprime;
    Ok(CylinderDerivatives { rhoprime, aprime, tprime, pthetaprime })
}

pub fn correction_term(tprime: f64) -> Result<i32> {
    correction_term_floor(tprime, TPRIME_FLOOR)
}

pub fn correction_term_floor(tprime: f64, floor: f64) -> Result<i32> {
    if !(tprime.abs() > floor) {
        return Err(Error::DegenerateCylinder(format!("|T'| = {:e} below floor {floor:e}", tprime.abs())));
    }
    Ok(if tprime > 0.0 { -1 } else { 1 })
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderSample {
    pub s: f64,
    pub orbit: CircularOrbit,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitCylinder {
    pub k: f64,
    pub epsilon: f64,
    pub samples: Vec<CylinderSample>,
    pub tprime_fd: f64,
    pub tprime_analytic: f64,
    pub rhoprime_analytic: f64,
    pub chi: i32,
}

impl OrbitCylinder {
    pub fn center(&self) -> &CircularOrbit {
        &self.samples[self.samples.len() / 2].orbit
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,rho,a,T\n");
        for x in &self.samples {
            let o = &x.orbit;
            s.push_str(&format!("{},{},{},{}\n", o.k, o.rho, o.a, o.period));
        }
        s
    }

    /// Largest second difference of T across the samples.
    pub fn max_second_difference(&self) -> f64 {
        self.samples.windows(3).map(|w| (w[0].orbit.period - 2.0 * w[1].orbit.period + w[2].orbit.period).abs()).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> CylinderSummary {
        let o = self.center();
        CylinderSummary {
            k: self.k,
            rho: o.rho,
            a: o.a,
            period: o.period,
            tprime_analytic: self.tprime_analytic,
            tprime_fd: self.tprime_fd,
            rhoprime: self.rhoprime_analytic,
            chi: self.chi,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderSummary {
    pub k: f64,
    pub rho: f64,
    pub a: f64,
    pub period: f64,
    pub tprime_analytic: f64,
    pub tprime_fd: f64,
    pub rhoprime: f64,
    pub chi: i32,
}

/// Samples the family at k + s for s on a symmetric grid of `n_samples`
/// points in [−ε, ε], continuing outward from the center orbit.
pub fn orbit_cylinder(m: &Model, k: f64, rho_seed: f64, epsilon: f64, n_samples: usize) -> Result<OrbitCylinder> {
    if n_samples < 3 || n_samples.is_multiple_of(2) || !(epsilon > 0.0) {
        return Err(Error::Domain(format!("n_samples = {n_samples} must be odd >= 3 and epsilon > 0")));
    }
    let half = n_samples / 2;
    let ss: Vec<f64> = (0..n_samples).map(|i| epsilon * (i as f64 - half as f64) / half as f64).collect();
    let center = find_circular_orbit(m, k, rho_seed)?;
    let mut orbits: Vec<Option<CircularOrbit>> = vec![None; n_samples];
    orbits[half] = Some(center.clone());
    let step_width = |prev: &CircularOrbit, s_prev: f64, s: f64| {
        // ρ moves by about ρ′·Δs; bracket generously around that.
        let drho = cylinder_derivatives(m, prev).map(|d| d.rhoprime * (s - s_prev)).unwrap_or(0.0);
        (prev.rho + drho, 4.0 * drho.abs() + 1e-6)
    };
    for dir in [1isize, -1] {
        let mut prev = center.clone();
        let mut s_prev = 0.0;
        for j in 1..=half {
            let idx = (half as isize + dir * j as isize) as usize;
            let s = ss[idx];
            let (guess, w) = step_width(&prev, s_prev, s);
            let o = find_circular_orbit_in(m, k + s, guess - w, guess + w)
                .map_err(|e| Error::ContinuationBreakdown { k: k + s, reason: e.to_string() })?;
            orbits[idx] = Some(o.clone());
            prev = o;
            s_prev = s;
        }
    }
    let samples: Vec<CylinderSample> = ss.iter().zip(orbits).map(|(&s, o)| CylinderSample { s, orbit: o.unwrap() }).collect();
    let t = |i: usize| samples[i].orbit.period;
    let central = |j: usize| (t(half + j) - t(half - j)) / (2.0 * ss[half + j]);
    let tprime_fd = if half.is_multiple_of(2) { (4.0 * central(half / 2) - central(half)) / 3.0 } else { central(1) };
    let d = cylinder_derivatives(m, &center)?;
    let chi = correction_term(d.tprime)?;
    Ok(OrbitCylinder { k, epsilon, samples, tprime_fd, tprime_analytic: d.tprime, rhoprime_analytic: d.rhoprime, chi })
}

/// Canonical state (r, θ, p_r, p_θ) at time t on a circular orbit.
pub fn circular_canonical(m: &Model, o: &CircularOrbit, t: f64) -> Vector4<f64> {
    let f = m.profile.f(o.rho);
    Vector4::new(o.rho, o.a * t, 0.0, o.rho * o.rho * o.a - f)
}

/// Cylinder tangent ∂_s y_s(t) at s = 0 in canonical coordinates, by central
/// differences of the two samples adjacent to the center.
pub fn cylinder_tangent_fd(m: &Model, cyl: &OrbitCylinder, t: f64) -> Vector4<f64> {
    let half = cyl.samples.len() / 2;
    let (lo, hi) = (&cyl.samples[half - 1], &cyl.samples[half + 1]);
    (circular_canonical(m, &hi.orbit, t) - circular_canonical(m, &lo.orbit, t)) / (hi.s - lo.s)
}

/// Analytic cylinder tangent at t = 0: (ρ′, 0, 0, p_θ′).
pub fn cylinder_tangent(m: &Model, orb: &CircularOrbit) -> Result<Vector4<f64>> {
    let d = cylinder_derivatives(m, orb)?;
    Ok(Vector4::new(d.rhoprime, 0.0, 0.0, d.pthetaprime))
}

/// Jacobi coefficients (F, K) on a circular orbit: F = −f′/ρ and
/// K = −ρa·F′ + F².
pub fn jacobi_coeffs_circular(m: &Model, o: &CircularOrbit) -> (f64, f64) {
    let c = m.coeffs(o.rho);
    let f = -c.f1 / o.rho;
    let fprime = -c.f2 / o.rho + c.f1 / (o.rho * o.rho);
    (f, -o.rho * o.a * fprime + f * f)
}

/// Hamiltonian vector field in canonical coordinates.
pub fn hamiltonian_field(m: &Model, y: &Vector4<f64>) -> Vector4<f64> {
    let c = m.coeffs(y[0]);
    let w = y[3] + c.f;
    let r = y[0];
    Vector4::new(y[2], w / (r * r), w * w / (r * r * r) - w * c.f1 / (r * r) - c.v1, 0.0)
}

/// dH in canonical coordinates.
pub fn hamiltonian_gradient(m: &Model, y: &Vector4<f64>) -> Vector4<f64> {
    let c = m.coeffs(y[0]);
    let r = y[0];
    let w = y[3] + c.f;
    Vector4::new(-w * w / (r * r * r) + w * c.f1 / (r * r) + c.v1, 0.0, y[2], w / (r * r))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedOrbit {
    pub state: LagrangianState,
    pub period: f64,
    pub defect: f64,
    pub iterations: usize,
}

/// Shooting Newton for a periodic orbit of energy `k` winding once: unknowns
/// (r₀, θ̇₀, T) with θ₀ = 0 and ṙ₀ fixed as phase condition; equations are the
/// four return defects (θ advanced by 2π) and the energy.
pub fn refine_periodic_orbit(m: &Model, guess: &LagrangianState, t_guess: f64, k: f64) -> Result<RefinedOrbit> {
    const STEPS: usize = 4096;
    const MAX_IT: usize = 50;
    let defect_of = |s: &LagrangianState, t: f64| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let traj = integrate_orbit_tol(m, s, t, STEPS, f64::INFINITY)?;
        let lp = linearized_flow(m, &traj)?;
        let end = traj.last();
        let phi = lp.lagrangian.last().unwrap();
        let fend = crate::dynamics::el_vector_field(m, end)?.to_array();
        let res = DVector::from_vec(vec![
            end.r - s.r,
            end.theta - s.theta - 2.0 * PI,
            end.rdot - s.rdot,
            end.thetadot - s.thetadot,
            energy(m, s) - k,
        ]);
        // Columns: ∂/∂r₀, ∂/∂θ̇₀, ∂/∂T.
        let mut jac = DMatrix::zeros(5, 3);
        for (col, var) in [(0usize, 0usize), (1, 3)] {
            for i in 0..4 {
                jac[(i, col)] = phi[(i, var)] - if i == var { 1.0 } else { 0.0 };
            }
        }
        for i in 0..4 {
            jac[(i, 2)] = fend[i];
        }
        let c = m.coeffs(s.r);
        jac[(4, 0)] = s.r * s.thetadot * s.thetadot + c.v1;
        jac[(4, 1)] = s.r * s.r * s.thetadot;
        Ok((res, jac))
    };
    let mut s = LagrangianState::new(guess.r, 0.0, guess.rdot, guess.thetadot);
    let mut t = t_guess;
    let fail = |defect: f64, it: usize| Error::NoConvergence { iterations: it, defect };
    let (mut res, mut jac) = defect_of(&s, t).map_err(|_| fail(f64::INFINITY, 0))?;
    if res.norm() > 0.1 {
        return Err(fail(res.norm(), 0));
    }
    for it in 0..MAX_IT {
        if res.norm() <= 1e-10 {
            return Ok(RefinedOrbit { state: s, period: t, defect: res.norm(), iterations: it });
        }
        let step = jac.clone().svd(true, true).solve(&res, 1e-14).map_err(|_| fail(res.norm(), it))?;
        s.r -= step[0];
        s.thetadot -= step[1];
        t -= step[2];
        let next = defect_of(&s, t).map_err(|_| fail(res.norm(), it))?;
        res = next.0;
        jac = next.1;
    }
    if res.norm() <= 1e-10 {
        return Ok(RefinedOrbit { state: s, period: t, defect: res.norm(), iterations: MAX_IT });
    }
    Err(fail(res.norm(), MAX_IT))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub k: f64,
    pub rho: Option<f64>,
    pub a: Option<f64>,
    pub period: Option<f64>,
    pub tprime: Option<f64>,
    pub chi: Option<i32>,
    pub error: Option<String>,
}

/// T(k) along the branch through (k_seed, rho_seed), continued outwards from
/// the sample nearest k_seed. Rows past a breakdown are marked with the error.
pub fn scan_energy(m: &Model, k_range: (f64, f64), samples: usize, seed: (f64, f64)) -> Vec<ScanRow> {
    let ks: Vec<f64> = (0..samples)
        .map(
            |i| if samples == 1 { k_range.0 } else { (k_range.0 * (samples - 1 - i) as f64 + k_range.1 * i as f64) / (samples - 1) as f64 },
        )
        .collect();
    let mut rows: Vec<Option<ScanRow>> = vec![None; samples];
    let Some(start) = (0..samples).min_by(|&i, &j| (ks[i] - seed.0).abs().total_cmp(&(ks[j] - seed.0).abs())) else {
        return Vec::new();
    };
    // the seed orbit, then each direction
    let first = find_circular_orbit(m, seed.0, seed.1);
    for order in [(start..samples).collect::<Vec<_>>(), (0..start).rev().collect()] {
        let mut prev = first.clone().ok();
        for i in order {
            let k = ks[i];
            let found = match &prev {
                Some(p) => {
                    let drho = cylinder_derivatives(m, p).map(|d| d.rhoprime * (k - p.k)).unwrap_or(0.0);
                    let w = 1.5 * drho.abs() + 1e-6;
                    find_circular_orbit_in(m, k, p.rho + drho - w, p.rho + drho + w)
                }
                None => Err(first.clone().err().unwrap_or(Error::ContinuationBreakdown { k, reason: "branch lost".into() })),
            };
            let row = found.and_then(|o| {
                let d = cylinder_derivatives(m, &o)?;
                prev = Some(o.clone());
                Ok(ScanRow {
                    k,
                    rho: Some(o.rho),
                    a: Some(o.a),
                    period: Some(o.period),
                    tprime: Some(d.tprime),
                    chi: correction_term(d.tprime).ok(),
                    error: None,
                })
            });
            rows[i] = Some(row.unwrap_or_else(|e| {
                prev = None;
                ScanRow { k, rho: None, a: None, period: None, tprime: None, chi: None, error: Some(e.to_string()) }
            }));
        }
    }
    rows.into_iter().flatten().collect()
}

pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("k,rho,a,T,Tprime,chi\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        match &r.error {
            None => s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k,
                opt(r.rho),
                opt(r.a),
                opt(r.period),
                opt(r.tprime),
                r.chi.map(|c| c.to_string()).unwrap_or_default()
            )),
            Some(_) => s.push_str(&format!("{},,,,,breakdown\n", r.k)),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetic_profile::MagneticProfile;

    #[test]
    fn correction_term_signs() {
        assert_eq!(correction_term(4.0 * 2f64.sqrt() * PI).unwrap(), -1);
        assert_eq!(correction_term(-1.0).unwrap(), 1);
        assert!(correction_term(0.0).is_err());
    }

    #[test]
    fn fstar_orbit() {
        let m = Model::new(MagneticProfile::fstar());
        let o = find_circular_orbit(&m, 0.5, 2.0).unwrap();
        assert!((o.rho - 2.0).abs() < 1e-12);
        assert!((o.period - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn no_root_above_max_slope() {
        let m = Model::new(MagneticProfile::fstar());
        assert!(matches!(find_circular_orbit(&m, 50.0, 2.0), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn scan_of_empty_range_is_header_only() {
        let m = Model::new(MagneticProfile::fstar());
        assert_eq!(scan_to_csv(&scan_energy(&m, (0.3, 0.7), 0, (0.5, 2.0))), "k,rho,a,T,Tprime,chi\n");
    }
}
