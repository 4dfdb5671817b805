//! Spectral flow of paths of symmetric matrices over s ∈ [−1, 1] and the
//! correction formula for bordered paths
//!
//!   [[A(s), h(s)], [h(s)ᵀ, τ(s)]].
//!
//! The flow is computed from the endpoints of the δ-regularized path
//! A(s) − δβ(s)·1 (β from −1 to 1) and cross-checked by counting eigenvalue
//! sign changes along the interpolated path.

use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const SYMMETRY_TOL: f64 = 1e-12;
/// Fractions of the endpoint spectral gap used as δ.
pub const DELTA_SCHEDULE: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone)]
pub struct OperatorPath {
    pub s: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
}

impl OperatorPath {
    pub fn new(s: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if s.len() != matrices.len() || s.len() < 2 {
            return Err(Error::Shape(format!("{} samples for {} matrices", s.len(), matrices.len())));
        }
        if s[0] != -1.0 || *s.last().unwrap() != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Shape("samples must increase from -1 to 1".into()));
        }
        let n = matrices[0].nrows();
        for a in &matrices {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Shape("matrices must be square and of one size".into()));
            }
            let asym = (a - a.transpose()).amax();
            if asym > SYMMETRY_TOL {
                return Err(Error::Domain(format!("matrix not symmetric ({asym:e})")));
            }
        }
        Ok(OperatorPath { s, matrices })
    }

    /// Samples `f` at n+1 equispaced points of [−1, 1].
    pub fn from_fn(n: usize, f: impl Fn(f64) -> DMatrix<f64>) -> Result<Self> {
        let s: Vec<f64> = (0..=n).map(|i| if i == n { 1.0 } else { -1.0 + 2.0 * i as f64 / n as f64 }).collect();
        let m = s.iter().map(|&x| f(x)).collect();
        Self::new(s, m)
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn minus(&self) -> &DMatrix<f64> {
        &self.matrices[0]
    }

    pub fn plus(&self) -> &DMatrix<f64> {
        self.matrices.last().unwrap()
    }

    pub fn direct_sum(&self, other: &OperatorPath) -> Result<Self> {
        if self.s != other.s {
            return Err(Error::Shape("direct sum needs a common parameter grid".into()));
        }
        let (p, q) = (self.dim(), other.dim());
        let m = self
            .matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| {
                let mut c = DMatrix::zeros(p + q, p + q);
                c.view_mut((0, 0), (p, p)).copy_from(a);
                c.view_mut((p, p), (q, q)).copy_from(b);
                c
            })
            .collect();
        Self::new(self.s.clone(), m)
    }
}

/// h(s) and τ(s) on the grid of an OperatorPath.
#[derive(Debug, Clone)]
pub struct BorderData {
    pub h: Vec<DVector<f64>>,
    pub tau: Vec<f64>,
}

impl BorderData {
    pub fn bordered(&self, path: &OperatorPath) -> Result<OperatorPath> {
        if self.h.len() != path.s.len() || self.tau.len() != path.s.len() {
            return Err(Error::Shape("border data must match the path grid".into()));
        }
        let m = path.matrices.iter().zip(&self.h).zip(&self.tau).map(|((a, h), &t)| border(a, h, t)).collect();
        OperatorPath::new(path.s.clone(), m)
    }
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// n₊ − n₋ with |λ| < tol counted as zero.
pub fn signature(a: &DMatrix<f64>, tol: f64) -> Result<i64> {
    let mut sig = 0;
    for l in eigenvalues(a) {
        if l.abs() > tol && l.abs() < 10.0 * tol {
            return Err(Error::ToleranceAmbiguity { value: l, tol, factor: 10.0 });
        }
        if l >= 10.0 * tol {
            sig += 1;
        } else if l <= -10.0 * tol {
            sig -= 1;
        }
    }
    Ok(sig)
}

/// Smallest eigenvalue magnitude of the endpoints above the null threshold;
/// 1 when both endpoints vanish.
pub fn endpoint_gap(path: &OperatorPath) -> f64 {
    let mut gap = f64::INFINITY;
    for a in [path.minus(), path.plus()] {
        let null = 1e-10 * a.norm().max(1.0);
        for l in eigenvalues(a) {
            if l.abs() > null {
                gap = gap.min(l.abs());
            }
        }
    }
    if gap.is_finite() {
        gap
    } else {
        1.0
    }
}

/// ½sign(A⁺ − δ) − ½sign(A⁻ + δ).
pub fn spectral_flow(path: &OperatorPath, delta: f64) -> Result<HalfInt> {
    let gap = endpoint_gap(path);
    if !(delta > 0.0) || delta >= 0.5 * gap {
        return Err(Error::DeltaTooLarge { delta, gap });
    }
    let n = path.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let tol = 1e-3 * delta;
    let sp = signature(&(path.plus() - &id * delta), tol)?;
    let sm = signature(&(path.minus() + &id * delta), tol)?;
    Ok(HalfInt::from_twice(sp - sm))
}

/// Spectral flow over the δ schedule; errors if it does not stabilize.
pub fn spectral_flow_stable(path: &OperatorPath) -> Result<HalfInt> {
    let gap = endpoint_gap(path);
    let vals: Vec<HalfInt> = DELTA_SCHEDULE.iter().map(|f| spectral_flow(path, f * gap)).collect::<Result<_>>()?;
    if vals.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Domain(format!("spectral flow does not stabilize: {vals:?}")));
    }
    Ok(vals[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingCount {
    pub up: usize,
    pub down: usize,
}

impl CrossingCount {
    pub fn net(&self) -> i64 {
        self.up as i64 - self.down as i64
    }
}

/// Counts sign changes of the eigenvalues of A(s) − δs·1 along the piecewise
/// linear interpolation of the samples, subdividing intervals that contain a
/// sign change.
pub fn crossing_count(path: &OperatorPath, delta: f64) -> CrossingCount {
    let n = path.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let at = |i: usize, w: f64| -> DMatrix<f64> {
        let s = path.s[i] + w * (path.s[i + 1] - path.s[i]);
        &path.matrices[i] * (1.0 - w) + &path.matrices[i + 1] * w - &id * (delta * s)
    };
    let mut count = CrossingCount { up: 0, down: 0 };
    fn walk(at: &dyn Fn(f64) -> DMatrix<f64>, w0: f64, w1: f64, e0: &[f64], depth: u32, count: &mut CrossingCount) -> Vec<f64> {
        let e1 = eigenvalues(&at(w1));
        let changes = e0.iter().zip(&e1).any(|(a, b)| (*a < 0.0) != (*b < 0.0));
        if changes && depth < 4 {
            let wm = 0.5 * (w0 + w1);
            let em = walk(at, w0, wm, e0, depth + 1, count);
            return walk(at, wm, w1, &em, depth + 1, count);
        }
        // sorted eigenvalues move continuously; a sign change of the k-th one
        // is a crossing
        for (a, b) in e0.iter().zip(&e1) {
            if *a < 0.0 && *b >= 0.0 {
                count.up += 1;
            } else if *a >= 0.0 && *b < 0.0 {
                count.down += 1;
            }
        }
        e1
    }
    let mut e = eigenvalues(&at(0, 0.0));
    for i in 0..path.s.len() - 1 {
        let f = |w: f64| at(i, w);
        e = walk(&f, 0.0, 1.0, &e, 0, &mut count);
    }
    count
}

/// Eigenpairs of a symmetric matrix with |λ| above a relative threshold.
fn range_pairs(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(a.clone());
    let cut = 1e-10 * a.norm().max(1.0);
    let (mut l, mut u) = (Vec::new(), Vec::new());
    for (i, &x) in eig.eigenvalues.iter().enumerate() {
        if x.abs() > cut {
            l.push(x);
            u.push(eig.eigenvectors.column(i).into_owned());
        }
    }
    (l, u)
}

/// ⟨v, h⟩ for the minimum-norm solution of Av = h.
pub fn lambda_ah(a: &DMatrix<f64>, h: &DVector<f64>, tol: f64) -> Result<f64> {
    let (l, u) = range_pairs(a);
    let mut v = DVector::zeros(h.len());
    for (x, e) in l.iter().zip(&u) {
        v += e * (e.dot(h) / x);
    }
    let res = (a * &v - h).norm();
    if res > tol * (1.0 + h.norm()) {
        return Err(Error::NotInRange(res));
    }
    Ok(v.dot(h))
}

/// Orthogonal projection onto range(A).
fn project_range(a: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let (_, u) = range_pairs(a);
    u.iter().fold(DVector::zeros(h.len()), |acc, e| acc + e * e.dot(h))
}

pub fn border(a: &DMatrix<f64>, h: &DVector<f64>, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut b = DMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        b[(i, n)] = h[i];
        b[(n, i)] = h[i];
    }
    b[(n, n)] = tau;
    b
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionCheck {
    pub lhs: HalfInt,
    pub rhs: HalfInt,
    pub flow_a: HalfInt,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub equal: bool,
}

pub const REGULARITY_TOL: f64 = 1e-8;

/// Flow of the bordered path against flow(A) + ½sign(τ⁺ − λ⁺) − ½sign(τ⁻ − λ⁻).
pub fn verify_cf(path: &OperatorPath, bd: &BorderData, delta: f64) -> Result<CorrectionCheck> {
    let bordered = bd.bordered(path)?;
    let (hm, hp) = (&bd.h[0], bd.h.last().unwrap());
    let (tm, tp) = (bd.tau[0], *bd.tau.last().unwrap());
    let lm = lambda_ah(path.minus(), hm, 1e-8)?;
    let lp = lambda_ah(path.plus(), hp, 1e-8)?;
    for (t, l) in [(tm, lm), (tp, lp)] {
        if (t - l).abs() <= REGULARITY_TOL {
            return Err(Error::NotRegular(t - l));
        }
    }
    let sgn = |x: f64| if x > 0.0 { 1 } else { -1 };
    let flow_a = spectral_flow(path, delta)?;
    let lhs = spectral_flow(&bordered, delta)?;
    let rhs = flow_a + HalfInt::from_twice(sgn(tp - lp) - sgn(tm - lm));
    Ok(CorrectionCheck { lhs, rhs, flow_a, lambda_minus: lm, lambda_plus: lp, equal: lhs == rhs })
}

/// Smallest δ that is safe for both the path and its bordering.
fn joint_delta(path: &OperatorPath, bordered: &OperatorPath, frac: f64) -> f64 {
    frac * endpoint_gap(path).min(endpoint_gap(bordered))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub dim: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub trials: usize,
    pub base_seed: u64,
    pub degenerate_endpoint_trials: usize,
    pub interior_crossings: usize,
    pub failures: Vec<TrialFailure>,
    pub pass: bool,
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, kernel: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DVector::from_fn(n, |i, _| {
        if i < kernel {
            0.0
        } else {
            let m: f64 = rng.random_range(0.2..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        }
    });
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Smooth step from 0 at s ≤ −0.8 to 1 at s ≥ 0.8.
fn ramp(s: f64) -> f64 {
    let x = ((s + 0.8) / 1.6).clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Bump supported in (−0.8, 0.8).
fn bump(s: f64) -> f64 {
    let x = s / 0.8;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - x * x).powi(2)
    }
}

/// A random path with regular endpoint triples; endpoints are degenerate
/// (with h orthogonal to the kernel) when `kernel > 0`.
pub fn random_triple_path(rng: &mut ChaCha8Rng, n: usize, kernel: usize, samples: usize) -> Result<(OperatorPath, BorderData)> {
    let am = random_symmetric(rng, n, kernel);
    let ap = random_symmetric(rng, n, kernel);
    let c = symmetrize(DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0)));
    let endpoint_h = |rng: &mut ChaCha8Rng, a: &DMatrix<f64>| -> DVector<f64> {
        let h = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        // (A, h) admits λ only for h in range(A)
        project_range(a, &h)
    };
    let hm = endpoint_h(rng, &am);
    let hp = endpoint_h(rng, &ap);
    let hb = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let pick_tau = |rng: &mut ChaCha8Rng, a: &DMatrix<f64>, h: &DVector<f64>| -> Result<f64> {
        let l = lambda_ah(a, h, 1e-8)?;
        loop {
            let t: f64 = rng.random_range(-3.0..3.0);
            if (t - l).abs() > 0.1 {
                return Ok(t);
            }
        }
    };
    let tm = pick_tau(rng, &am, &hm)?;
    let tp = pick_tau(rng, &ap, &hp)?;
    let tb: f64 = rng.random_range(-2.0..2.0);
    let path = OperatorPath::from_fn(samples, |s| {
        let w = ramp(s);
        &am * (1.0 - w) + &ap * w + &c * bump(s)
    })?;
    let h = path.s.iter().map(|&s| &hm * (1.0 - ramp(s)) + &hp * ramp(s) + &hb * bump(s)).collect();
    let tau = path.s.iter().map(|&s| tm * (1.0 - ramp(s)) + tp * ramp(s) + tb * bump(s)).collect();
    Ok((path, BorderData { h, tau }))
}

const TRIAL_SAMPLES: usize = 96;

fn run_trial(trial: usize, seed: u64) -> std::result::Result<(bool, usize), String> {
    let err = |e: Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=20usize);
    let kernel = if trial % 4 == 3 { rng.random_range(1..=2usize.min(n - 1)) } else { 0 };
    let (path, bd) = random_triple_path(&mut rng, n, kernel, TRIAL_SAMPLES).map_err(err)?;
    let bordered = bd.bordered(&path).map_err(err)?;
    let mut checks = Vec::new();
    for frac in DELTA_SCHEDULE {
        let delta = joint_delta(&path, &bordered, frac);
        let cf = verify_cf(&path, &bd, delta).map_err(err)?;
        if !cf.equal {
            return Err(format!("delta {delta:e}: lhs {} != rhs {}", cf.lhs, cf.rhs));
        }
        checks.push(cf);
    }
    if checks.windows(2).any(|w| w[0].lhs != w[1].lhs || w[0].flow_a != w[1].flow_a) {
        return Err("flow does not stabilize over the delta schedule".into());
    }
    let delta = joint_delta(&path, &bordered, DELTA_SCHEDULE[1]);
    let mut crossings = 0;
    for (name, p, flow) in [("A", &path, checks[1].flow_a), ("bordered", &bordered, checks[1].lhs)] {
        let c = crossing_count(p, delta);
        crossings += c.up + c.down;
        if HalfInt::from_int(c.net()) != flow {
            return Err(format!("{name}: endpoint formula {flow} but crossing count {}", c.net()));
        }
    }

    // constant path
    let a0 = random_symmetric(&mut rng, n, 0);
    let constant = OperatorPath::from_fn(3, |_| a0.clone()).map_err(err)?;
    let f = spectral_flow_stable(&constant).map_err(err)?;
    if f != HalfInt::ZERO {
        return Err(format!("constant path has flow {f}"));
    }
    // direct sum
    let sum = path.direct_sum(&bordered).map_err(err)?;
    let f = spectral_flow_stable(&sum).map_err(err)?;
    if f != checks[1].flow_a + checks[1].lhs {
        return Err(format!("direct sum flow {f} != {} + {}", checks[1].flow_a, checks[1].lhs));
    }
    // interior perturbation, counted by crossings
    let c = symmetrize(DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0)));
    let bumped =
        OperatorPath::new(path.s.clone(), path.s.iter().zip(&path.matrices).map(|(&s, m)| m + &c * bump(s)).collect()).map_err(err)?;
    let moved = crossing_count(&bumped, delta);
    crossings += moved.up + moved.down;
    if HalfInt::from_int(moved.net()) != checks[1].flow_a {
        return Err(format!("interior perturbation changes the flow to {}", moved.net()));
    }
    Ok((kernel > 0, crossings))
}

/// Randomized check of the correction formula and of the endpoint formula
/// against crossing counts. Trial i uses seed `base_seed + i`.
pub fn randomized_suite(trials: usize, base_seed: u64) -> SuiteReport {
    let mut failures = Vec::new();
    let (mut degenerate, mut interior) = (0, 0);
    for trial in 0..trials {
        let seed = base_seed.wrapping_add(trial as u64);
        match run_trial(trial, seed) {
            Ok((deg, c)) => {
                degenerate += deg as usize;
                interior += c;
            }
            Err(reason) => {
                let dim = ChaCha8Rng::seed_from_u64(seed).random_range(2..=20usize);
                failures.push(TrialFailure { trial, seed, dim, reason })
            }
        }
    }
    SuiteReport {
        trials,
        base_seed,
        degenerate_endpoint_trials: degenerate,
        interior_crossings: interior,
        pass: failures.is_empty(),
        failures,
    }
}
