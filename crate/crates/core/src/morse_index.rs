//! Discretized free-period and fixed-period action functionals, their
//! Hessians and Morse indices.
//!
//! A loop is sampled at N nodes q_i = (r_i, θ_i), i = 0..N−1, closed by
//! q_N = (r_0, θ_0 + 2πw). With τ = T/N, Δ = q_{i+1} − q_i and r_m the
//! midpoint radius, the action is
//!
//!   S(q, T) = Σ (Δr² + r_m²Δθ²)/(2τ) + τ(k − V(r_m)) − f(r_m)Δθ,
//!
//! the midpoint rule for T∫(L(q, q̇/T) + k) with the magnetic term written as
//! the line integral of −f dθ. Variables are ordered (r_0, θ_0, r_1, ...,
//! θ_{N−1}) with T last.

use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::indices::{analyze_circular_orbit, OrbitIndices};
use crate::magnetic_profile::MagneticProfile;
use crate::model::{Model, RadialPotential};
use crate::orbits::{cylinder_derivatives, find_circular_orbit, jacobi_coeffs_circular, CircularOrbit};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;

pub const GRADIENT_TOL: f64 = 1e-6;
/// Band edge ambiguity factor for inertia counts.
pub const BAND_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteLoop {
    pub n: usize,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub winding: i64,
    pub period: f64,
    pub k: f64,
}

impl DiscreteLoop {
    pub fn new(r: Vec<f64>, theta: Vec<f64>, winding: i64, period: f64, k: f64) -> Result<Self> {
        let n = r.len();
        if n < 3 || theta.len() != n {
            return Err(Error::Shape(format!("loop needs ≥ 3 nodes, got {} radii and {} angles", n, theta.len())));
        }
        if !(period > 0.0) {
            return Err(Error::Domain(format!("period {period} must be positive")));
        }
        if let Some(&bad) = r.iter().find(|&&x| !(x > 0.05 && x < 3.95)) {
            return Err(Error::Domain(format!("node radius {bad} outside (0.05, 3.95)")));
        }
        Ok(DiscreteLoop { n, r, theta, winding, period, k })
    }

    /// Nodes of a circular orbit, θ_i = 2πi/N.
    pub fn circular(orbit: &CircularOrbit, n: usize) -> Result<Self> {
        let theta = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        Self::new(vec![orbit.rho; n], theta, 1, orbit.period, orbit.k)
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(2 * self.n + 1);
        for i in 0..self.n {
            v[2 * i] = self.r[i];
            v[2 * i + 1] = self.theta[i];
        }
        v[2 * self.n] = self.period;
        v
    }

    pub fn with_vector(&self, v: &DVector<f64>) -> Self {
        DiscreteLoop {
            n: self.n,
            r: (0..self.n).map(|i| v[2 * i]).collect(),
            theta: (0..self.n).map(|i| v[2 * i + 1]).collect(),
            winding: self.winding,
            period: v[2 * self.n],
            k: self.k,
        }
    }

    /// (r_i, θ_i, r_{i+1}, θ_{i+1}) of segment i, closing with the winding.
    fn segment(&self, i: usize) -> (f64, f64, f64, f64) {
        let j = (i + 1) % self.n;
        let lift = if j == 0 { 2.0 * PI * self.winding as f64 } else { 0.0 };
        (self.r[i], self.theta[i], self.r[j], self.theta[j] + lift)
    }
}

/// Global variable indices touched by segment i: r_i, θ_i, r_{i+1}, θ_{i+1}, T.
fn segment_slots(n: usize, i: usize) -> [usize; 5] {
    let j = (i + 1) % n;
    [2 * i, 2 * i + 1, 2 * j, 2 * j + 1, 2 * n]
}

/// S(q, T); the fixed-period functional is the same number at fixed T.
pub fn discrete_action(m: &Model, lp: &DiscreteLoop) -> f64 {
    let tau = lp.period / lp.n as f64;
    (0..lp.n)
        .map(|i| {
            let (r0, t0, r1, t1) = lp.segment(i);
            let (dr, dt, rm) = (r1 - r0, t1 - t0, 0.5 * (r0 + r1));
            let c = m.coeffs(rm);
            (dr * dr + rm * rm * dt * dt) / (2.0 * tau) + tau * (lp.k - c.v) - c.f * dt
        })
        .sum()
}

pub fn discrete_action_fixed(m: &Model, lp: &DiscreteLoop) -> f64 {
    discrete_action(m, lp)
}

/// ∂S in the variables (q, T).
pub fn discrete_gradient(m: &Model, lp: &DiscreteLoop) -> DVector<f64> {
    let n = lp.n;
    let tau = lp.period / n as f64;
    let mut g = DVector::zeros(2 * n + 1);
    for i in 0..n {
        let (r0, t0, r1, t1) = lp.segment(i);
        let (dr, dt, rm) = (r1 - r0, t1 - t0, 0.5 * (r0 + r1));
        let c = m.coeffs(rm);
        let s_dr = dr / tau;
        let s_dt = rm * rm * dt / tau - c.f;
        let s_rm = rm * dt * dt / tau - tau * c.v1 - c.f1 * dt;
        let s_t = (-(dr * dr + rm * rm * dt * dt) / (2.0 * tau * tau) + lp.k - c.v) / n as f64;
        let [a, b, cc, d, e] = segment_slots(n, i);
        g[a] += -s_dr + 0.5 * s_rm;
        g[b] += -s_dt;
        g[cc] += s_dr + 0.5 * s_rm;
        g[d] += s_dt;
        g[e] += s_t;
    }
    g
}

/// Hessian of S in (q, T), assembled from the per-segment Hessian in
/// u = (Δr, Δθ, r_m, T).
pub fn discrete_hessian(m: &Model, lp: &DiscreteLoop) -> DMatrix<f64> {
    let n = lp.n;
    let nf = n as f64;
    let tau = lp.period / nf;
    let mut h = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    // du/d(r_i, θ_i, r_{i+1}, θ_{i+1}, T)
    let p = nalgebra::SMatrix::<f64, 4, 5>::from_row_slice(&[
        -1.0, 0.0, 1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, 1.0, 0.0, //
        0.5, 0.0, 0.5, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    for i in 0..n {
        let (r0, t0, r1, t1) = lp.segment(i);
        let (dr, dt, rm) = (r1 - r0, t1 - t0, 0.5 * (r0 + r1));
        let c = m.coeffs(rm);
        let mut s = nalgebra::Matrix4::<f64>::zeros();
        s[(0, 0)] = 1.0 / tau;
        s[(0, 3)] = -dr / (tau * tau * nf);
        s[(1, 1)] = rm * rm / tau;
        s[(1, 2)] = 2.0 * rm * dt / tau - c.f1;
        s[(1, 3)] = -rm * rm * dt / (tau * tau * nf);
        s[(2, 2)] = dt * dt / tau - tau * c.v2 - c.f2 * dt;
        s[(2, 3)] = (-rm * dt * dt / (tau * tau) - c.v1) / nf;
        s[(3, 3)] = (dr * dr + rm * rm * dt * dt) / (tau * tau * tau * nf * nf);
        for a in 0..4 {
            for b in 0..a {
                s[(a, b)] = s[(b, a)];
            }
        }
        let local = p.transpose() * s * p;
        let slots = segment_slots(n, i);
        for a in 0..5 {
            for b in 0..5 {
                h[(slots[a], slots[b])] += local[(a, b)];
            }
        }
    }
    h
}

/// Central differences of the analytic gradient, step `h` times
/// max(1, |x_j|), symmetrized.
pub fn hessian_fd(m: &Model, lp: &DiscreteLoop, h: f64) -> DMatrix<f64> {
    let x = lp.to_vector();
    let dim = x.len();
    let mut out = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = h * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (discrete_gradient(m, &lp.with_vector(&xp)) - discrete_gradient(m, &lp.with_vector(&xm))) / (2.0 * step);
        out.set_column(j, &col);
    }
    (&out + out.transpose()) * 0.5
}

#[derive(Debug, Clone, Serialize)]
pub struct HessianPair {
    #[serde(skip)]
    pub fixed: DMatrix<f64>,
    #[serde(skip)]
    pub free: DMatrix<f64>,
    pub n: usize,
    pub scheme: String,
    pub gradient_norm: f64,
    /// max |analytic − difference-of-gradient| over the free Hessian.
    pub fd_deviation: f64,
}

/// Analytic Hessians at a discrete critical point, cross-checked against
/// differences of the gradient.
pub fn hessians(m: &Model, lp: &DiscreteLoop) -> Result<HessianPair> {
    let gradient_norm = discrete_gradient(m, lp).norm();
    if gradient_norm > GRADIENT_TOL {
        return Err(Error::NotCritical(gradient_norm));
    }
    let free = discrete_hessian(m, lp);
    let fd_deviation = (&free - hessian_fd(m, lp, 1e-5)).amax();
    let d = lp.dim();
    let fixed = free.view((0, 0), (d, d)).into_owned();
    Ok(HessianPair {
        fixed,
        free,
        n: lp.n,
        scheme: "midpoint rule, analytic second derivatives; gradient differences with step 1e-5".into(),
        gradient_norm,
        fd_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InertiaResult {
    pub n_minus: usize,
    pub n_zero: usize,
    pub n_plus: usize,
    /// Smallest |λ| outside the null band.
    pub margin: f64,
    pub band: f64,
}

/// Null band √ε·max|λ|.
pub fn default_null_band(eigs: &[f64]) -> f64 {
    f64::EPSILON.sqrt() * eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

pub fn inertia_of(eigs: &[f64], band: f64) -> Result<InertiaResult> {
    let (mut n_minus, mut n_zero, mut n_plus) = (0, 0, 0);
    let mut margin = f64::INFINITY;
    for &l in eigs {
        let a = l.abs();
        if a > band / BAND_FACTOR && a < band * BAND_FACTOR {
            return Err(Error::BandAmbiguity { value: l, band });
        }
        if a < band {
            n_zero += 1;
        } else {
            margin = margin.min(a);
            if l < 0.0 {
                n_minus += 1;
            } else {
                n_plus += 1;
            }
        }
    }
    Ok(InertiaResult { n_minus, n_zero, n_plus, margin, band })
}

/// Inertia of a symmetric matrix; `band` defaults to `default_null_band`.
pub fn inertia(h: &DMatrix<f64>, band: Option<f64>) -> Result<InertiaResult> {
    let asym = (h - h.transpose()).amax();
    if asym > 1e-9 * h.amax().max(1.0) {
        return Err(Error::Shape(format!("matrix not symmetric ({asym:e})")));
    }
    let eigs: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    let band = band.unwrap_or_else(|| default_null_band(&eigs));
    inertia_of(&eigs, band)
}

/// Discretized cylinder vector (ρ′ in r slots, 0 in θ slots, T′).
pub fn cylinder_vector(n: usize, rhoprime: f64, tprime: f64) -> DVector<f64> {
    let mut v = DVector::zeros(2 * n + 1);
    for i in 0..n {
        v[2 * i] = rhoprime;
    }
    v[2 * n] = tprime;
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderIdentities {
    /// (H v)_T, expected −1.
    pub period_slot: f64,
    /// max over q-slots of |(H v)_q|, expected 0.
    pub q_slots_max: f64,
    /// vᵀHv, expected −T′.
    pub diagonal: f64,
    pub tprime: f64,
    pub pass: bool,
}

pub fn hessian_cylinder(free: &DMatrix<f64>, n: usize, rhoprime: f64, tprime: f64) -> CylinderIdentities {
    let v = cylinder_vector(n, rhoprime, tprime);
    let hv = free * &v;
    let period_slot = hv[2 * n];
    let q_slots_max = hv.rows(0, 2 * n).amax();
    let diagonal = v.dot(&hv);
    let pass = (period_slot + 1.0).abs() <= 1e-3 && q_slots_max <= 1e-3 && (diagonal + tprime).abs() <= 1e-3 * tprime.abs().max(1.0);
    CylinderIdentities { period_slot, q_slots_max, diagonal, tprime, pass }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexTheoremReport {
    pub profile: String,
    pub n: usize,
    pub i_t: usize,
    pub i_free: usize,
    pub chi: i32,
    pub tprime: f64,
    pub fixed: InertiaResult,
    pub free: InertiaResult,
    /// Lower bound for |⟨null eigenvector, discretized q̇⟩| of the
    /// fixed-period Hessian.
    pub kernel_overlap: f64,
    pub hessian: HessianPair,
    pub cylinder: CylinderIdentities,
    /// i_free − i_T = (1 − χ)/2.
    pub holds: bool,
}

pub fn verify_index_theorem(m: &Model, orbit: &CircularOrbit, n: usize) -> Result<IndexTheoremReport> {
    let d = cylinder_derivatives(m, orbit)?;
    let chi = crate::orbits::correction_term(d.tprime)?;
    let lp = DiscreteLoop::circular(orbit, n)?;
    let hp = hessians(m, &lp)?;
    let eigs: Vec<f64> = hp.fixed.clone().symmetric_eigenvalues().iter().copied().collect();
    let fixed = inertia_of(&eigs, default_null_band(&eigs))?;
    if fixed.n_zero != 1 {
        return Err(Error::Domain(format!("fixed-period Hessian has {} null eigenvalues, expected 1", fixed.n_zero)));
    }
    // With a one-dimensional null band, a unit vector e with ‖He‖ = η has
    // overlap ≥ √(1 − (η/margin)²) with the null eigenvector.
    let qdot = DVector::from_fn(2 * n, |i, _| if i % 2 == 1 { 1.0 } else { 0.0 }).normalize();
    let eta = (&hp.fixed * &qdot).norm();
    let kernel_overlap = (1.0 - (eta / fixed.margin).powi(2)).max(0.0).sqrt();
    let free = inertia(&hp.free, None)?;
    let cylinder = hessian_cylinder(&hp.free, n, d.rhoprime, d.tprime);
    let holds = 2 * (free.n_minus as i64 - fixed.n_minus as i64) == 1 - chi as i64;
    Ok(IndexTheoremReport {
        profile: m.id(),
        n,
        i_t: fixed.n_minus,
        i_free: free.n_minus,
        chi,
        tprime: d.tprime,
        fixed,
        free,
        kernel_overlap,
        hessian: hp,
        cylinder,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DuistermaatReport {
    pub i_t: usize,
    pub i_free: usize,
    pub mu_cz: HalfInt,
    pub mu_rab: HalfInt,
    /// i_T = μ_CZ − ½.
    pub holds: bool,
    /// i_free = μ_Rab.
    pub free_matches_rab: bool,
}

pub fn duistermaat_check(theorem: &IndexTheoremReport, idx: &OrbitIndices) -> DuistermaatReport {
    let mu_cz = idx.record.mu_cz;
    let mu_rab = idx.record.mu_rab;
    DuistermaatReport {
        i_t: theorem.i_t,
        i_free: theorem.i_free,
        mu_cz,
        mu_rab,
        holds: HalfInt::from_int(theorem.i_t as i64) == mu_cz - HalfInt::HALF,
        free_matches_rab: HalfInt::from_int(theorem.i_free as i64) == mu_rab,
    }
}

/// Counts negative directions of the constant-coefficient second variation
///
///   Q = ½u̇² + ½αu² + c·u·v̇ + ½ρ²v̇²
///
/// on T-periodic (u, v) = (δr, δθ), Fourier mode by mode up to `modes`.
/// Mode 0 contributes 1 when α < 0; mode n ≥ 1 contributes 2 when
/// (ω² + α)ρ² < c² with ω = 2πn/T.
pub fn fourier_count(alpha: f64, c: f64, rho: f64, period: f64, modes: usize) -> usize {
    let mut count = usize::from(alpha < 0.0);
    for n in 1..=modes {
        let w = 2.0 * PI * n as f64 / period;
        if (w * w + alpha) * rho * rho < c * c {
            count += 2;
        }
    }
    count
}

/// i_T from the profile data at a circular orbit: α = a² − af″ − V″,
/// c = 2ρa − f′.
pub fn fourier_index_oracle(m: &Model, orbit: &CircularOrbit, modes: usize) -> usize {
    let cf = m.coeffs(orbit.rho);
    let a = orbit.a;
    let alpha = a * a - a * cf.f2 - cf.v2;
    let c = 2.0 * orbit.rho * a - cf.f1;
    fourier_count(alpha, c, orbit.rho, orbit.period, modes)
}

/// The same count from the Jacobi coefficients F = −f′/r and K of a circular
/// orbit without potential: α = a² + aF + F² − K, c = ρ(2a + F).
pub fn fourier_index_fk(f: f64, k: f64, rho: f64, a: f64, period: f64, modes: usize) -> usize {
    fourier_count(a * a + a * f + f * f - k, rho * (2.0 * a + f), rho, period, modes)
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlReport {
    pub k: f64,
    pub rho: f64,
    pub period: f64,
    pub tprime: f64,
    pub chi: i32,
    pub theorem: IndexTheoremReport,
    pub fourier_i_t: usize,
    pub indices: OrbitIndices,
    pub duistermaat: DuistermaatReport,
    pub pass: bool,
}

/// The rotationally symmetric control system: no magnetic field, potential
/// V = r⁴/4, circular orbit at k = ¾ of radius 1.
pub fn control_model() -> Model {
    Model::with_potential(MagneticProfile::zero(), RadialPotential::Quartic { c: 1.0 })
}

pub fn control_case_radial(n: usize, steps: usize) -> Result<ControlReport> {
    let m = control_model();
    let orbit = find_circular_orbit(&m, 0.75, 1.0)?;
    let theorem = verify_index_theorem(&m, &orbit, n)?;
    let fourier_i_t = fourier_index_oracle(&m, &orbit, 64);
    let indices = analyze_circular_orbit(&m, &orbit, steps)?;
    let duistermaat = duistermaat_check(&theorem, &indices);
    let pass = theorem.chi == 1
        && theorem.i_free == theorem.i_t
        && theorem.holds
        && fourier_i_t == theorem.i_t
        && duistermaat.holds
        && duistermaat.free_matches_rab;
    Ok(ControlReport {
        k: orbit.k,
        rho: orbit.rho,
        period: orbit.period,
        tprime: theorem.tprime,
        chi: theorem.chi,
        theorem,
        fourier_i_t,
        indices,
        duistermaat,
        pass,
    })
}

/// Fourier count from the Jacobi coefficients of the orbit; magnetic
/// systems only.
pub fn fourier_index_from_jacobi(m: &Model, orbit: &CircularOrbit, modes: usize) -> Result<usize> {
    if m.potential != RadialPotential::None {
        return Err(Error::Domain("Jacobi coefficients (F, K) assume no potential".into()));
    }
    let (f, k) = jacobi_coeffs_circular(m, orbit);
    Ok(fourier_index_fk(f, k, orbit.rho, orbit.a, orbit.period, modes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_profile_constant_loop() {
        let m = Model::new(MagneticProfile::zero());
        let lp = DiscreteLoop::new(vec![1.5; 8], vec![0.3; 8], 0, 2.7, 0.4).unwrap();
        assert!((discrete_action(&m, &lp) - 2.7 * 0.4).abs() < 1e-14);
    }

    #[test]
    fn inertia_examples() {
        let r = inertia(&DMatrix::identity(5, 5), None).unwrap();
        assert_eq!((r.n_minus, r.n_zero, r.n_plus), (0, 0, 5));
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[-2.0, 0.0, 3.0]));
        let r = inertia(&d, Some(1e-8)).unwrap();
        assert_eq!((r.n_minus, r.n_zero, r.n_plus), (1, 1, 1));
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(&[-2.0, 2e-8, 3.0]));
        assert!(matches!(inertia(&d, Some(1e-8)), Err(Error::BandAmbiguity { .. })));
    }

    #[test]
    fn fourier_counts_of_scenarios() {
        // f★: α = 1/8, c = 1, ρ = 2, T = 4π
        assert_eq!(fourier_count(0.125, 1.0, 2.0, 4.0 * PI, 64), 0);
        // f₂: α = −1/25, c = 1, ρ = 5/2, T = 5π
        assert_eq!(fourier_count(-0.04, 1.0, 2.5, 5.0 * PI, 64), 3);
        // control: α = −2, c = 2, ρ = 1, T = 2π
        assert_eq!(fourier_count(-2.0, 2.0, 1.0, 2.0 * PI, 64), 5);
    }

    #[test]
    fn fk_count_grows_with_k() {
        let mut last = 0;
        for i in 0..40 {
            let k = 0.25 * i as f64;
            let c = fourier_index_fk(-0.5, k, 2.0, 0.5, 4.0 * PI, 64);
            assert!(c >= last);
            last = c;
        }
        assert!(last > 5);
    }
}
