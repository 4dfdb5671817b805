//! Symplectic paths along an orbit and their indices.
//!
//! Paths are stored in the layout (x | y) with ω(u, v) = uᵀJ₀v and
//! J₀ = [[0, I], [−I, 0]]. In the polar chart the coordinate frame is
//! x = (p_r, p_θ), y = (r, θ).
//!
//! The relative Maslov index of graph(Ψ) against the diagonal is computed from
//! the unitary (Souriau) angles of the pair; `crossing_form_maslov` is the
//! brute-force crossing count used to cross-check it.

use crate::dynamics::{integrate_orbit, j4, linearized_flow, LinearizedPath};
use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::model::Model;
use crate::orbits::{circular_canonical, cylinder_derivatives, cylinder_tangent, hamiltonian_field, CircularOrbit};
use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector4, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SYMPLECTIC_TOL: f64 = 1e-7;
pub const NULLITY_TOL: f64 = 1e-6;
pub const AMBIGUITY_FACTOR: f64 = 10.0;
/// Unitary angles closer than this to 0 mod 2π count as intersections.
pub const ANGLE_TOL: f64 = 1e-6;
pub const OFFDIAG_TOL: f64 = 1e-5;

/// Global sign fixed by the shear calibration: the shear path
/// [[1, 0], [−tT′/T, 1]] must give ½·sign(−T′).
const ORIENTATION: f64 = 1.0;

/// J₀ in the (x | y) layout.
pub fn j0(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// ‖MᵀJ₀M − J₀‖ / (1 + ‖M‖²).
pub fn symplectic_defect(mat: &DMatrix<f64>) -> f64 {
    let j = j0(mat.nrows() / 2);
    (mat.transpose() * &j * mat - &j).norm() / (1.0 + mat.norm_squared())
}

#[derive(Debug, Clone)]
pub struct SymplecticPath {
    pub times: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
    pub m: usize,
}

impl SymplecticPath {
    pub fn new(times: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.len() != matrices.len() || times.len() < 2 {
            return Err(Error::Shape(format!("{} times for {} matrices", times.len(), matrices.len())));
        }
        let n = matrices[0].nrows();
        if n == 0 || n % 2 == 1 || matrices.iter().any(|a| a.nrows() != n || a.ncols() != n) {
            return Err(Error::Shape("path matrices must be 2m×2m and of one size".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Shape("times must increase".into()));
        }
        let start = (&matrices[0] - DMatrix::<f64>::identity(n, n)).norm();
        if start > SYMPLECTIC_TOL {
            return Err(Error::Domain(format!("path starts {start:e} away from the identity")));
        }
        for (t, a) in times.iter().zip(&matrices) {
            let d = symplectic_defect(a);
            if d > SYMPLECTIC_TOL {
                return Err(Error::Domain(format!("matrix at t = {t} is not symplectic (defect {d:e})")));
            }
        }
        Ok(SymplecticPath { times, matrices, m: n / 2 })
    }

    /// Samples `f` on n+1 equispaced times in [0, period].
    pub fn from_fn(period: f64, n: usize, f: impl Fn(f64) -> DMatrix<f64>) -> Result<Self> {
        let times: Vec<f64> = (0..=n).map(|i| period * i as f64 / n as f64).collect();
        let matrices = times.iter().map(|&t| f(t)).collect();
        Self::new(times, matrices)
    }

    pub fn end(&self) -> &DMatrix<f64> {
        self.matrices.last().unwrap()
    }

    pub fn period(&self) -> f64 {
        self.times.last().unwrap() - self.times[0]
    }

    /// t ↦ Ψ(T − t)Ψ(T)⁻¹.
    pub fn reversed(&self) -> Result<Self> {
        let inv = symplectic_inverse(self.end());
        let t_end = *self.times.last().unwrap();
        let times = self.times.iter().rev().map(|t| t_end - t).collect();
        let matrices = self.matrices.iter().rev().map(|a| a * &inv).collect();
        Self::new(times, matrices)
    }

    /// Block sum in the (x | y) layout; both paths must share the time grid.
    pub fn direct_sum(&self, other: &SymplecticPath) -> Result<Self> {
        if self.times.len() != other.times.len() {
            return Err(Error::Shape("direct sum needs a common time grid".into()));
        }
        let matrices = self.matrices.iter().zip(&other.matrices).map(|(a, b)| block_sum(a, b)).collect();
        Self::new(self.times.clone(), matrices)
    }

    /// Keeps every `k`-th sample (and the last).
    pub fn subsampled(&self, k: usize) -> Result<Self> {
        let n = self.times.len();
        let idx: Vec<usize> = (0..n).step_by(k.max(1)).chain(std::iter::once(n - 1)).collect();
        let mut idx = idx;
        idx.dedup();
        Self::new(idx.iter().map(|&i| self.times[i]).collect(), idx.iter().map(|&i| self.matrices[i].clone()).collect())
    }
}

/// −J₀AᵀJ₀.
pub fn symplectic_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let j = j0(a.nrows() / 2);
    -(&j * a.transpose() * &j)
}

pub fn block_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = (a.nrows() / 2, b.nrows() / 2);
    let n = p + q;
    // position of the i-th coordinate of each summand in the sum
    let pa = |i: usize| if i < p { i } else { n + i - p };
    let pb = |i: usize| if i < q { p + i } else { n + p + i - q };
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..2 * p {
        for j in 0..2 * p {
            s[(pa(i), pa(j))] = a[(i, j)];
        }
    }
    for i in 0..2 * q {
        for j in 0..2 * q {
            s[(pb(i), pb(j))] = b[(i, j)];
        }
    }
    s
}

/// Symmetric unitary W(Ψ) whose eigenvalues e^{iφ} are the Souriau angles of
/// the pair (graph Ψ, Δ) in the doubled space (ℝ²ⁿ × ℝ²ⁿ, −ω ⊕ ω).
fn souriau_unitary(psi: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = psi.nrows();
    let m = n / 2;
    // Doubled space is identified with ℂ²ᵐ via ((v, w)) ↦ (v_x, w_x) + i(−v_y, w_y).
    let mut z = DMatrix::<Complex64>::zeros(n, n);
    let mut b = DMatrix::<Complex64>::zeros(n, n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..n {
        for i in 0..m {
            let v_x = if i == j { 1.0 } else { 0.0 };
            let v_y = if m + i == j { 1.0 } else { 0.0 };
            z[(i, j)] = Complex64::new(v_x, -v_y);
            z[(m + i, j)] = Complex64::new(psi[(i, j)], psi[(m + i, j)]);
            b[(i, j)] = Complex64::new(v_x, -v_y) * s;
            b[(m + i, j)] = Complex64::new(v_x, v_y) * s;
        }
    }
    let re = z.map(|c| c.re);
    let im = z.map(|c| c.im);
    let g = re.transpose() * &re + im.transpose() * &im;
    let ginv = g.try_inverse().expect("graph frame has full rank").map(|x| Complex64::new(x, 0.0));
    let u = &z * ginv * z.transpose();
    b.adjoint() * u * b.map(|c| c.conj())
}

/// Principal angles in [0, 2π), with values within ANGLE_TOL of 0 mod 2π
/// snapped to 0.
fn unitary_angles(w: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    // W = X + iY with X, Y real symmetric and commuting; a generic combination
    // diagonalizes both.
    let x = w.map(|c| c.re);
    let y = w.map(|c| c.im);
    let alpha: f64 = 0.713_901_2;
    let mix = &x * alpha.cos() + &y * alpha.sin();
    let eig = SymmetricEigen::new(mix);
    let mut out = Vec::with_capacity(w.nrows());
    for k in 0..w.nrows() {
        let v = eig.eigenvectors.column(k);
        let c = (v.transpose() * &x * v)[(0, 0)];
        let s = (v.transpose() * &y * v)[(0, 0)];
        let mut phi = s.atan2(c);
        let d = phi.abs();
        if d > ANGLE_TOL / AMBIGUITY_FACTOR && d < ANGLE_TOL * AMBIGUITY_FACTOR {
            return Err(Error::ToleranceAmbiguity { value: d, tol: ANGLE_TOL, factor: AMBIGUITY_FACTOR });
        }
        if d <= ANGLE_TOL {
            phi = 0.0;
        } else if phi < 0.0 {
            phi += 2.0 * PI;
        }
        out.push(phi);
    }
    Ok(out)
}

/// ½ − φ/2π off the intersection, 0 on it.
fn endpoint_weight(phi: f64) -> f64 {
    if phi == 0.0 {
        0.0
    } else {
        0.5 - phi / (2.0 * PI)
    }
}

/// Relative Maslov index of graph(Ψ) against the diagonal.
pub fn rs_maslov(path: &SymplecticPath) -> Result<HalfInt> {
    rs_maslov_oriented(path, false)
}

/// As `rs_maslov`; `flip` reverses the orientation convention (used to show
/// that the calibration tests detect a wrong sign).
pub fn rs_maslov_oriented(path: &SymplecticPath, flip: bool) -> Result<HalfInt> {
    let ws: Vec<DMatrix<Complex64>> = path.matrices.iter().map(souriau_unitary).collect();
    let mut winding = 0.0;
    let mut prev = ws[0].determinant();
    for (i, w) in ws.iter().enumerate().skip(1) {
        let d = w.determinant();
        let step = (d / prev).arg();
        if step.abs() > PI / 2.0 {
            return Err(Error::CrossingResolutionFailure(format!(
                "unitary phase jumps by {step:.3} between t = {} and t = {}; refine the path",
                path.times[i - 1],
                path.times[i]
            )));
        }
        winding += step;
        prev = d;
    }
    let a0 = unitary_angles(&ws[0])?;
    let a1 = unitary_angles(ws.last().unwrap())?;
    let raw =
        winding / (2.0 * PI) + a1.iter().map(|&p| endpoint_weight(p)).sum::<f64>() - a0.iter().map(|&p| endpoint_weight(p)).sum::<f64>();
    let (h, err) = HalfInt::nearest(raw);
    if err > 1e-6 {
        return Err(Error::CrossingResolutionFailure(format!("index {raw} is not a half-integer")));
    }
    let sign = if flip { -ORIENTATION } else { ORIENTATION };
    Ok(if sign > 0.0 { h } else { -h })
}

/// Crossing-form count for a path given as a function: locate t with
/// Ψ(t) − I singular, evaluate Γ(v) = vᵀJ₀Ψ̇v on the kernel and add
/// signatures, half-weighted at the endpoints.
pub fn crossing_form_maslov(psi: &dyn Fn(f64) -> DMatrix<f64>, period: f64, grid: usize) -> Result<HalfInt> {
    let n = psi(0.0).nrows();
    let j = j0(n / 2);
    let smin = |t: f64| {
        let a = psi(t) - DMatrix::<f64>::identity(n, n);
        SVD::new(a, false, false).singular_values.min()
    };
    let form = |t: f64| -> Result<i64> {
        let h = 1e-6 * period;
        let (lo, hi) = ((t - h).max(0.0), (t + h).min(period));
        let dpsi = (psi(hi) - psi(lo)) / (hi - lo);
        let a = psi(t) - DMatrix::<f64>::identity(n, n);
        let svd = SVD::new(a, false, true);
        let vt = svd.v_t.unwrap();
        let scale = 1.0 + psi(t).norm();
        let ker: Vec<usize> = (0..n).filter(|&k| svd.singular_values[k] < 1e-7 * scale).collect();
        if ker.is_empty() {
            return Err(Error::CrossingResolutionFailure(format!("no kernel at t = {t}")));
        }
        let kmat = DMatrix::from_fn(n, ker.len(), |r, c| vt[(ker[c], r)]);
        let g = kmat.transpose() * &j * dpsi * &kmat;
        let g = (&g + g.transpose()) * 0.5;
        let tol = 1e-6 * (1.0 + g.norm());
        let ev = SymmetricEigen::new(g).eigenvalues;
        Ok(ev
            .iter()
            .map(|&e| {
                if e > tol {
                    1
                } else if e < -tol {
                    -1
                } else {
                    0
                }
            })
            .sum())
    };
    let dt = period / grid as f64;
    let vals: Vec<f64> = (0..=grid).map(|i| smin(i as f64 * dt)).collect();
    let mut crossings = Vec::new();
    for i in 1..grid {
        if vals[i] <= vals[i - 1] && vals[i] < vals[i + 1] {
            // golden-section on the bracket around the local minimum
            let (mut a, mut b) = ((i - 1) as f64 * dt, (i + 1) as f64 * dt);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            while b - a > 1e-10 * period {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if smin(c) < smin(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let t = 0.5 * (a + b);
            if smin(t) < 1e-7 {
                if let Some(&last) = crossings.last() {
                    if t - last < 1e-8 * period {
                        return Err(Error::CrossingResolutionFailure(format!("crossings at {last} and {t} unresolved")));
                    }
                }
                crossings.push(t);
            }
        }
    }
    let mut twice = form(0.0)?;
    if smin(period) < 1e-7 {
        twice += form(period)?;
    }
    for t in crossings {
        twice += 2 * form(t)?;
    }
    Ok(HalfInt::from_twice(twice))
}

/// ½·sign(−T′), or 0 when T′ = 0.
pub fn shear_block_value(tprime: f64) -> HalfInt {
    if tprime > 0.0 {
        -HalfInt::HALF
    } else if tprime < 0.0 {
        HalfInt::HALF
    } else {
        HalfInt::ZERO
    }
}

/// t ↦ [[1, 0], [−tT′/T, 1]] on [0, T].
pub fn shear_path(tprime: f64, period: f64, n: usize) -> Result<SymplecticPath> {
    SymplecticPath::from_fn(period, n, |t| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -t * tprime / period, 1.0]))
}

/// Counterclockwise rotation of the (x, y) plane by total angle `angle`.
pub fn rotation_path(angle: f64, period: f64, n: usize) -> Result<SymplecticPath> {
    SymplecticPath::from_fn(period, n, |t| rotation(angle * t / period))
}

pub fn rotation(a: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationCase {
    pub path: String,
    pub expected: HalfInt,
    pub measured: Option<HalfInt>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub flip: bool,
    pub cases: Vec<CalibrationCase>,
    pub pass: bool,
}

/// Shear paths for T′ ∈ {−1, 0, 1} and full rotations against their known
/// indices. `flip` injects the wrong orientation.
pub fn calibration(flip: bool) -> CalibrationReport {
    let mut cases = Vec::new();
    let mut push = |name: String, expected: HalfInt, path: Result<SymplecticPath>| {
        let measured = path.and_then(|p| rs_maslov_oriented(&p, flip)).ok();
        cases.push(CalibrationCase { path: name, expected, pass: measured == Some(expected), measured });
    };
    for tp in [-1.0, 0.0, 1.0] {
        push(format!("shear T'={tp}"), shear_block_value(tp), shear_path(tp, 1.0, 64));
    }
    for turns in [1i64, -1, 2] {
        let angle = 2.0 * PI * turns as f64;
        push(format!("rotation {turns} turns"), HalfInt::from_int(2 * turns), rotation_path(angle, 1.0, 256));
    }
    let pass = cases.iter().all(|c| c.pass);
    CalibrationReport { flip, cases, pass }
}

pub fn monodromy(lp: &LinearizedPath) -> Result<Matrix4<f64>> {
    let m = *lp.matrices.last().unwrap();
    let j = j4();
    let d = (m.transpose() * j * m - j).norm() / (1.0 + m.norm_squared());
    if d > SYMPLECTIC_TOL {
        return Err(Error::Domain(format!("monodromy is not symplectic (defect {d:e})")));
    }
    Ok(m)
}

/// Number of singular values of M − I below tol·‖M‖.
pub fn nullity(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let n = m.nrows();
    let thr = tol * m.norm().max(1.0);
    let sv = SVD::new(m - DMatrix::<f64>::identity(n, n), false, false).singular_values;
    for &s in sv.iter() {
        if s > thr / AMBIGUITY_FACTOR && s < thr * AMBIGUITY_FACTOR {
            return Err(Error::ToleranceAmbiguity { value: s, tol: thr, factor: AMBIGUITY_FACTOR });
        }
    }
    Ok(sv.iter().filter(|&&s| s < thr).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

/// Eigenvalues of the monodromy sorted by (im, re).
pub fn floquet_multipliers(m: &Matrix4<f64>) -> Vec<Multiplier> {
    let mut v: Vec<Multiplier> = m.complex_eigenvalues().iter().map(|c| Multiplier { re: c.re, im: c.im }).collect();
    v.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    v
}

/// Largest distance from a multiplier μ to the nearest 1/μ̄ in the list.
pub fn floquet_pairing_defect(mults: &[Multiplier]) -> f64 {
    let cs: Vec<Complex64> = mults.iter().map(|m| Complex64::new(m.re, m.im)).collect();
    cs.iter()
        .map(|&z| {
            let partner = 1.0 / z.conj();
            cs.iter().map(|&w| (w - partner).norm()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct IrrationalityCheck {
    /// Rotation angle of the transverse block in [0, π].
    pub angle: f64,
    pub min_distance: f64,
    pub worst_q: u32,
    pub pass: bool,
}

/// Distance of the transverse rotation angle from 2πp/q for q ≤ 32.
/// Hyperbolic blocks have no rotation and pass.
pub fn irrationality_check(transverse: &Matrix2<f64>) -> IrrationalityCheck {
    let half_trace = 0.5 * transverse.trace();
    if half_trace.abs() > 1.0 {
        return IrrationalityCheck { angle: f64::NAN, min_distance: f64::INFINITY, worst_q: 0, pass: true };
    }
    let angle = half_trace.acos();
    let (mut best, mut worst_q) = (f64::INFINITY, 0);
    for q in 1..=32u32 {
        let step = 2.0 * PI / q as f64;
        let d = (angle - (angle / step).round() * step).abs();
        if d < best {
            best = d;
            worst_q = q;
        }
    }
    IrrationalityCheck { angle, min_distance: best, worst_q, pass: best >= 1e-3 }
}

/// ω in canonical coordinates (r, θ, p_r, p_θ): ω(u, v) = u_p·v_q − u_q·v_p.
pub fn omega4(u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
    u[2] * v[0] + u[3] * v[1] - u[0] * v[2] - u[1] * v[3]
}

/// Symplectic frame [ξ̂, t₁, X_H, t₂] (columns, canonical coordinates) with
/// ω(ξ̂, X_H) = ω(t₁, t₂) = 1 and span{t₁, t₂} the ω-complement of the
/// cylinder plane.
pub fn split_frame(xh: &Vector4<f64>, xi: &Vector4<f64>) -> Result<Matrix4<f64>> {
    let pair = omega4(xi, xh);
    if pair.abs() < 1e-8 {
        return Err(Error::FrameDegenerate(pair));
    }
    let xi = xi / pair;
    let proj = |v: Vector4<f64>| v - xi * omega4(&v, xh) + xh * omega4(&v, &xi);
    let e: Vec<Vector4<f64>> = (0..4).map(|i| proj(Vector4::ith(i, 1.0))).collect();
    let (mut best, mut ij) = (0.0f64, (0, 1));
    for i in 0..4 {
        for j in i + 1..4 {
            let w = omega4(&e[i], &e[j]);
            if w.abs() > best.abs() {
                best = w;
                ij = (i, j);
            }
        }
    }
    let (t1, t2) = (e[ij.0], e[ij.1] / best);
    Ok(Matrix4::from_columns(&[xi, t1, *xh, t2]))
}

/// Serializes a fixed-size matrix as a list of rows.
pub fn rows<S: serde::Serializer, const R: usize, const C: usize>(
    m: &nalgebra::SMatrix<f64, R, C>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Vec<f64>> = (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect();
    v.serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonodromySplit {
    #[serde(serialize_with = "rows")]
    pub full: Matrix4<f64>,
    /// In the basis (X_H, ξ̂): [[1, −T′], [0, 1]].
    #[serde(serialize_with = "rows")]
    pub cylinder_block: Matrix2<f64>,
    /// In the basis (t₁, t₂).
    #[serde(serialize_with = "rows")]
    pub transverse_block: Matrix2<f64>,
    #[serde(serialize_with = "rows")]
    pub frame: Matrix4<f64>,
    pub offdiag_norm: f64,
}

impl MonodromySplit {
    /// −T′ read off the cylinder block.
    pub fn minus_tprime(&self) -> f64 {
        self.cylinder_block[(0, 1)]
    }
}

fn in_frame(frame: &Matrix4<f64>, inv: &Matrix4<f64>, m: &Matrix4<f64>) -> (Matrix2<f64>, Matrix2<f64>, f64) {
    let n = inv * m * frame;
    let cyl = Matrix2::new(n[(0, 0)], n[(0, 2)], n[(2, 0)], n[(2, 2)]);
    let tr = Matrix2::new(n[(1, 1)], n[(1, 3)], n[(3, 1)], n[(3, 3)]);
    let mut off = 0.0;
    for i in [0, 2] {
        for j in [1, 3] {
            off += n[(i, j)].powi(2) + n[(j, i)].powi(2);
        }
    }
    (cyl, tr, off.sqrt())
}

pub fn split_monodromy(m: &Matrix4<f64>, xh: &Vector4<f64>, xi0: &Vector4<f64>) -> Result<MonodromySplit> {
    let frame = split_frame(xh, xi0)?;
    let inv = frame.try_inverse().ok_or(Error::FrameDegenerate(0.0))?;
    let (cyl, transverse_block, offdiag_norm) = in_frame(&frame, &inv, m);
    // (ξ̂, X_H) order → (X_H, ξ̂) order
    let cylinder_block = Matrix2::new(cyl[(1, 1)], cyl[(1, 0)], cyl[(0, 1)], cyl[(0, 0)]);
    Ok(MonodromySplit { full: *m, cylinder_block, transverse_block, frame, offdiag_norm })
}

#[derive(Debug, Clone)]
pub struct SplitPath {
    /// Basis (ξ̂ | X_H).
    pub cylinder: SymplecticPath,
    /// Basis (t₁ | t₂).
    pub transverse: SymplecticPath,
    /// Full 4×4 path in the split frame.
    pub full: SymplecticPath,
    pub max_offdiag: f64,
}

/// The linearized flow in a constant frame; blocks are invariant when the
/// frame is adapted to an orbit cylinder of circular orbits.
pub fn split_path(lp: &LinearizedPath, frame: &Matrix4<f64>) -> Result<SplitPath> {
    let inv = frame.try_inverse().ok_or(Error::FrameDegenerate(0.0))?;
    let (mut cyl, mut tr, mut full) = (Vec::new(), Vec::new(), Vec::new());
    let mut max_offdiag: f64 = 0.0;
    for m in &lp.matrices {
        let (c, t, off) = in_frame(frame, &inv, m);
        max_offdiag = max_offdiag.max(off);
        cyl.push(DMatrix::from_column_slice(2, 2, c.as_slice()));
        tr.push(DMatrix::from_column_slice(2, 2, t.as_slice()));
        let n = inv * m * frame;
        full.push(DMatrix::from_column_slice(4, 4, n.as_slice()));
    }
    if max_offdiag > OFFDIAG_TOL {
        return Err(Error::Domain(format!("frame does not split the flow: coupling {max_offdiag:e}")));
    }
    Ok(SplitPath {
        cylinder: SymplecticPath::new(lp.times.clone(), cyl)?,
        transverse: SymplecticPath::new(lp.times.clone(), tr)?,
        full: SymplecticPath::new(lp.times.clone(), full)?,
        max_offdiag,
    })
}

/// Linearized flow in the coordinate frame x = (p_r, p_θ), y = (r, θ).
pub fn coordinate_path(lp: &LinearizedPath) -> Result<SymplecticPath> {
    const P: [usize; 4] = [2, 3, 0, 1];
    let ms = lp.matrices.iter().map(|m| DMatrix::from_fn(4, 4, |i, j| m[(P[i], P[j])])).collect();
    SymplecticPath::new(lp.times.clone(), ms)
}

#[derive(Debug, Clone)]
pub enum Trivialization {
    /// Polar coordinate frame.
    Coordinate,
    /// Constant frame from `split_frame`.
    Split(Matrix4<f64>),
}

pub fn cz_index(lp: &LinearizedPath, triv: &Trivialization) -> Result<HalfInt> {
    match triv {
        Trivialization::Coordinate => rs_maslov(&coordinate_path(lp)?),
        Trivialization::Split(f) => rs_maslov(&split_path(lp, f)?.full),
    }
}

pub fn transverse_cz_index(split: &SplitPath) -> Result<HalfInt> {
    rs_maslov(&split.transverse)
}

pub fn mu_rab(mu_cz: HalfInt, chi: i32) -> HalfInt {
    mu_cz - HalfInt::from_twice(chi as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub mu_cz: HalfInt,
    pub mu_cz_transverse: HalfInt,
    pub mu_rab: HalfInt,
    pub nullity: usize,
    pub chi: i32,
    pub floquet: Vec<Multiplier>,
}

impl IndexRecord {
    /// μ_Rab − μ_CZ + χ/2, zero by construction.
    pub fn rab_defect(&self) -> HalfInt {
        self.mu_rab - mu_rab(self.mu_cz, self.chi)
    }
}

/// μ_Rab(minus) − μ_Rab(plus) − 1.
pub fn virtual_dimension(minus: &IndexRecord, plus: &IndexRecord) -> HalfInt {
    minus.mu_rab - plus.mu_rab - HalfInt::from_int(1)
}

/// Everything the index pipeline computes for one circular orbit.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitIndices {
    pub profile: String,
    pub k: f64,
    pub rho: f64,
    pub period: f64,
    pub tprime: f64,
    pub steps: usize,
    pub record: IndexRecord,
    /// Record of the time-reversed orbit.
    pub reversed: IndexRecord,
    pub cz_coordinate: HalfInt,
    pub cylinder_index: HalfInt,
    pub product_axiom: bool,
    pub split: MonodromySplit,
    pub symplectic_defect: f64,
    pub floquet_pairing_defect: f64,
    pub irrationality: IrrationalityCheck,
}

pub fn analyze_circular_orbit(m: &Model, orbit: &CircularOrbit, steps: usize) -> Result<OrbitIndices> {
    let traj = integrate_orbit(m, &orbit.state(), orbit.period, steps)?;
    let lp = linearized_flow(m, &traj)?;
    let mono = monodromy(&lp)?;
    let y0 = circular_canonical(m, orbit, 0.0);
    let xh = hamiltonian_field(m, &y0);
    let xi = cylinder_tangent(m, orbit)?;
    let d = cylinder_derivatives(m, orbit)?;
    let chi = crate::orbits::correction_term(d.tprime)?;
    let split = split_monodromy(&mono, &xh, &xi)?;
    let sp = split_path(&lp, &split.frame)?;
    let mu_cz = rs_maslov(&sp.full)?;
    let cz_coordinate = rs_maslov(&coordinate_path(&lp)?)?;
    let cylinder_index = rs_maslov(&sp.cylinder)?;
    let mu_t = transverse_cz_index(&sp)?;
    let dm = DMatrix::from_column_slice(4, 4, mono.as_slice());
    let nul = nullity(&dm, NULLITY_TOL)?;
    let floquet = floquet_multipliers(&mono);
    let record = IndexRecord { mu_cz, mu_cz_transverse: mu_t, mu_rab: mu_rab(mu_cz, chi), nullity: nul, chi, floquet: floquet.clone() };
    let rev_cz = rs_maslov(&sp.full.reversed()?)?;
    let rev_mono = symplectic_inverse(&dm);
    let rev_floquet = floquet_multipliers(&Matrix4::from_column_slice(rev_mono.as_slice()));
    let reversed = IndexRecord {
        mu_cz: rev_cz,
        mu_cz_transverse: rs_maslov(&sp.transverse.reversed()?)?,
        mu_rab: mu_rab(rev_cz, -chi),
        nullity: nul,
        chi: -chi,
        floquet: rev_floquet,
    };
    Ok(OrbitIndices {
        profile: m.id(),
        k: orbit.k,
        rho: orbit.rho,
        period: orbit.period,
        tprime: d.tprime,
        steps,
        product_axiom: cylinder_index + mu_t == mu_cz,
        cz_coordinate,
        cylinder_index,
        record,
        reversed,
        symplectic_defect: lp.max_symplectic_defect(),
        floquet_pairing_defect: floquet_pairing_defect(&floquet),
        irrationality: irrationality_check(&split.transverse_block),
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_calibration() {
        for (tp, want) in [(2.0, -1), (-3.0, 1)] {
            let p = shear_path(tp, 5.0, 200).unwrap();
            assert_eq!(rs_maslov(&p).unwrap(), HalfInt::from_twice(want));
            assert_eq!(shear_block_value(tp), HalfInt::from_twice(want));
        }
        assert_eq!(shear_block_value(0.0), HalfInt::ZERO);
    }

    #[test]
    fn full_turn_is_two() {
        let p = rotation_path(2.0 * PI, 1.0, 400).unwrap();
        assert_eq!(rs_maslov(&p).unwrap(), HalfInt::from_int(2));
    }

    #[test]
    fn flipped_orientation_fails_calibration() {
        let p = shear_path(2.0, 5.0, 200).unwrap();
        assert_eq!(rs_maslov_oriented(&p, true).unwrap(), HalfInt::HALF);
    }

    #[test]
    fn direct_sum_layout() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 7.0]);
        let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let s = block_sum(&a, &b);
        assert_eq!(s[(0, 2)], 2.0);
        assert_eq!(s[(1, 3)], 6.0);
        assert_eq!(s[(3, 3)], 8.0);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn nullity_examples() {
        let i4 = DMatrix::<f64>::identity(4, 4);
        assert_eq!(nullity(&i4, NULLITY_TOL).unwrap(), 4);
        let r = block_sum(&rotation(1.0), &rotation(2.0_f64.sqrt()));
        assert_eq!(nullity(&r, NULLITY_TOL).unwrap(), 0);
        let near = DMatrix::from_row_slice(2, 2, &[1.0 + 2e-6, 0.0, 0.0, 1.0 / (1.0 + 2e-6)]);
        assert!(matches!(nullity(&near, NULLITY_TOL), Err(Error::ToleranceAmbiguity { .. })));
    }

    #[test]
    fn irrationality_guard() {
        assert!(irrationality_check(&Matrix2::new(1.0f64.cos(), -1.0f64.sin(), 1.0f64.sin(), 1.0f64.cos())).pass);
        let a = 2.0 * PI / 7.0;
        assert!(!irrationality_check(&Matrix2::new(a.cos(), -a.sin(), a.sin(), a.cos())).pass);
        assert!(irrationality_check(&Matrix2::new(2.0, 0.0, 0.0, 0.5)).pass);
    }

    #[test]
    fn frame_is_symplectic() {
        let xh = Vector4::new(0.0, 0.5, 0.0, 0.0);
        let xi = Vector4::new(4.0, 0.0, 0.0, 2.0);
        let f = split_frame(&xh, &xi).unwrap();
        let om = -j4();
        let g = f.transpose() * om * f;
        let j = Matrix4::from_column_slice(j0(2).as_slice());
        assert!((g - j).norm() < 1e-14);
        assert!(matches!(split_frame(&xh, &xh), Err(Error::FrameDegenerate(_))));
    }

    #[test]
    fn crossing_form_oracle_agrees_on_planar_paths() {
        let cases: Vec<(Box<dyn Fn(f64) -> DMatrix<f64>>, f64)> = vec![
            (Box::new(|t| rotation(PI * 2f64.sqrt() * t)), 1.0),
            (Box::new(|t| rotation(-PI * 5f64.sqrt() * t)), 1.0),
            (Box::new(|t| rotation(2.0 * PI * t)), 1.0),
            (Box::new(|t| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -4.0 * t, 1.0])), 1.0),
            (Box::new(|t| DMatrix::from_row_slice(2, 2, &[(2.0 * t).exp(), 0.0, 0.0, (-2.0 * t).exp()])), 1.0),
        ];
        for (f, period) in cases {
            let oracle = crossing_form_maslov(&*f, period, 400).unwrap();
            let path = SymplecticPath::from_fn(period, 400, &*f).unwrap();
            assert_eq!(rs_maslov(&path).unwrap(), oracle);
        }
    }

    #[test]
    fn reversal_negates() {
        let p = rotation_path(PI * 2f64.sqrt(), 1.0, 300).unwrap();
        let v = rs_maslov(&p).unwrap();
        assert_eq!(v, HalfInt::from_int(1));
        assert_eq!(rs_maslov(&p.reversed().unwrap()).unwrap(), -v);
    }
}
