//! Radial magnetic profile f with compact support in (1, 3).
//!
//! The profile is a C² piecewise quintic in Hermite form. Knots sit at the
//! support endpoints, at the anchor radii and at one shape knot between each
//! consecutive pair of those. The endpoints carry zero data, each anchor
//! carries its prescribed (f′, f″), and everything else (anchor values, shape
//! knot data) minimizes ∫(f‴)² under linear shape constraints.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const GLUING_TOL: f64 = 1e-9;
pub const GRID_POINTS: usize = 20_000;
pub const GRID_MAX: f64 = 4.0;
const MARGIN: f64 = 1e-3;
const SAMPLES_PER_PIECE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub r: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupBoundMode {
    StrictSupFLt1,
    WeightedSupFOverRLt1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub support: (f64, f64),
    pub anchors: Vec<Anchor>,
    pub smoothness_order: u32,
    pub sup_bound_mode: SupBoundMode,
}

impl ProfileSpec {
    pub fn new(support: (f64, f64), anchors: Vec<Anchor>) -> Self {
        ProfileSpec { support, anchors, smoothness_order: 2, sup_bound_mode: SupBoundMode::StrictSupFLt1 }
    }

    /// f′(2) = 1, f″(2) = 1/4 on (1.2, 2.9).
    pub fn fstar() -> Self {
        Self::new((1.2, 2.9), vec![Anchor { r: 2.0, d1: 1.0, d2: 0.25 }])
    }

    /// f′(5/2) = 1, f″(5/2) = 1/2 on (1.2, 2.9).
    pub fn f2() -> Self {
        Self::new((1.2, 2.9), vec![Anchor { r: 2.5, d1: 1.0, d2: 0.5 }])
    }

    pub fn zero() -> Self {
        Self::new((1.2, 2.9), vec![])
    }

    pub fn check(&self) -> Result<()> {
        let (a, b) = self.support;
        if !(a.is_finite() && b.is_finite() && 1.0 < a && a < b && b < 3.0) {
            return Err(Error::InvalidSpec(format!("support ({a}, {b}) must satisfy 1 < a < b < 3")));
        }
        if self.smoothness_order < 2 {
            return Err(Error::InvalidSpec("smoothness_order must be at least 2".into()));
        }
        if self.smoothness_order > 2 {
            return Err(Error::InvalidSpec(format!(
                "smoothness_order {} unsupported: the quintic construction is C2",
                self.smoothness_order
            )));
        }
        let mut radii: Vec<f64> = self.anchors.iter().map(|an| an.r).collect();
        radii.sort_by(f64::total_cmp);
        for w in radii.windows(2) {
            if w[1] - w[0] < 1e-9 {
                return Err(Error::InvalidSpec(format!("duplicate anchor radius {}", w[0])));
            }
        }
        for an in &self.anchors {
            if !(an.r > a && an.r < b) || !an.d1.is_finite() || !an.d2.is_finite() {
                return Err(Error::InvalidSpec(format!("anchor radius {} must lie strictly inside ({a}, {b})", an.r)));
            }
        }
        Ok(())
    }
}

// Quintic Hermite basis on [0,1], coefficients of t^0..t^5.
const P0: [f64; 6] = [1.0, 0.0, 0.0, -10.0, 15.0, -6.0];
const M0: [f64; 6] = [0.0, 1.0, 0.0, -6.0, 8.0, -3.0];
const C0: [f64; 6] = [0.0, 0.0, 0.5, -1.5, 1.5, -0.5];
const C1: [f64; 6] = [0.0, 0.0, 0.0, 0.5, -1.0, 0.5];
const M1: [f64; 6] = [0.0, 0.0, 0.0, -4.0, 7.0, -3.0];
const P1: [f64; 6] = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Piece {
    x0: f64,
    h: f64,
    c: [f64; 6],
}

impl Piece {
    fn hermite(x0: f64, x1: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        let h = x1 - x0;
        let w = [(P0, left[0]), (M0, h * left[1]), (C0, h * h * left[2]), (C1, h * h * right[2]), (M1, h * right[1]), (P1, right[0])];
        let mut c = [0.0; 6];
        for (basis, coef) in w {
            for (ci, bi) in c.iter_mut().zip(basis) {
                *ci += coef * bi;
            }
        }
        Piece { x0, h, c }
    }

    /// (f, f′, f″, f‴) at local coordinate t.
    fn eval_t(&self, t: f64) -> [f64; 4] {
        let c = &self.c;
        let p = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
        let d1 = (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
        let d2 = ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2];
        let d3 = (60.0 * c[5] * t + 24.0 * c[4]) * t + 6.0 * c[3];
        let h = self.h;
        [p, d1 / h, d2 / (h * h), d3 / (h * h * h)]
    }
}

fn assemble(knots: &[f64], data: &[[f64; 3]]) -> Vec<Piece> {
    knots.windows(2).zip(data.windows(2)).map(|(x, d)| Piece::hermite(x[0], x[1], d[0], d[1])).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagneticProfile {
    pub id: String,
    pub spec: ProfileSpec,
    knots: Vec<f64>,
    pieces: Vec<Piece>,
    scale: f64,
    /// Values f(r_j) chosen at the anchors.
    pub anchor_values: Vec<f64>,
    /// True when the strict sup bound failed and the weighted bound was used.
    pub fallback_used: bool,
}

/// Builds the profile for `spec`. Deterministic given the spec.
pub fn build_profile(spec: &ProfileSpec) -> Result<MagneticProfile> {
    build_named("custom", spec)
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Fixed(f64),
    Free(usize),
}

// Knot data as fixed numbers or indices into the free-variable vector.
struct Layout {
    knots: Vec<f64>,
    slots: Vec<[Slot; 3]>,
    n_free: usize,
}

impl Layout {
    fn new(spec: &ProfileSpec) -> Self {
        let (a, b) = spec.support;
        let mut anchors = spec.anchors.clone();
        anchors.sort_by(|x, y| x.r.total_cmp(&y.r));
        let mut primary: Vec<(f64, Option<Anchor>)> = vec![(a, None)];
        primary.extend(anchors.iter().map(|an| (an.r, Some(*an))));
        primary.push((b, None));
        let mut knots = Vec::new();
        let mut slots = Vec::new();
        let mut n_free = 0;
        let mut free = || {
            n_free += 1;
            Slot::Free(n_free - 1)
        };
        for (i, (x, an)) in primary.iter().enumerate() {
            if i > 0 {
                knots.push(0.5 * (primary[i - 1].0 + x));
                slots.push([free(), free(), free()]);
            }
            knots.push(*x);
            slots.push(match an {
                Some(an) => [free(), Slot::Fixed(an.d1), Slot::Fixed(an.d2)],
                None => [Slot::Fixed(0.0); 3],
            });
        }
        Layout { knots, slots, n_free }
    }

    /// d-th derivative at local coordinate t of piece j as c + row·z.
    fn functional(&self, j: usize, t: f64, d: usize) -> (f64, Vec<f64>) {
        let h = self.knots[j + 1] - self.knots[j];
        let basis = |b: &[f64; 6]| -> f64 {
            let mut c = *b;
            for _ in 0..d {
                for k in 0..5 {
                    c[k] = (k + 1) as f64 * c[k + 1];
                }
                c[5] = 0.0;
            }
            c.iter().rev().fold(0.0, |acc, ci| acc * t + ci) / h.powi(d as i32)
        };
        let l = &self.slots[j];
        let r = &self.slots[j + 1];
        let terms = [
            (basis(&P0), l[0]),
            (h * basis(&M0), l[1]),
            (h * h * basis(&C0), l[2]),
            (h * h * basis(&C1), r[2]),
            (h * basis(&M1), r[1]),
            (basis(&P1), r[0]),
        ];
        let mut c = 0.0;
        let mut row = vec![0.0; self.n_free];
        for (w, slot) in terms {
            match slot {
                Slot::Fixed(v) => c += w * v,
                Slot::Free(i) => row[i] += w,
            }
        }
        (c, row)
    }

    fn data(&self, z: &[f64]) -> Vec<[f64; 3]> {
        self.slots
            .iter()
            .map(|s| {
                s.map(|x| match x {
                    Slot::Fixed(v) => v,
                    Slot::Free(i) => z[i],
                })
            })
            .collect()
    }
}

/// Half-width of the window around each anchor on which f′ must stay
/// monotone, so the circular-orbit branch through the anchor can be continued
/// in energy.
pub const MONOTONE_WINDOW: f64 = 0.1;

pub fn build_named(id: &str, spec: &ProfileSpec) -> Result<MagneticProfile> {
    spec.check()?;
    let layout = Layout::new(spec);
    let z = if spec.anchors.is_empty() { vec![0.0; layout.n_free] } else { solve_shape_qp(spec, &layout)? };
    let data = layout.data(&z);
    let pieces = assemble(&layout.knots, &data);
    let anchor_values = spec.anchors.iter().map(|an| data[layout.knots.iter().position(|&k| k == an.r).unwrap()][0]).collect();
    let mut p = MagneticProfile {
        id: id.to_string(),
        spec: spec.clone(),
        knots: layout.knots,
        pieces,
        scale: 1.0,
        anchor_values,
        fallback_used: false,
    };
    let min_f = p.grid().iter().map(|&r| p.f(r)).fold(f64::INFINITY, f64::min);
    if min_f < 0.0 {
        return Err(Error::InfeasibleSpec(format!("constructed profile dips to {min_f:e}")));
    }

    let (sup_f, sup_f_over_r) = p.sups();
    match spec.sup_bound_mode {
        SupBoundMode::StrictSupFLt1 if sup_f < 1.0 => {}
        SupBoundMode::StrictSupFLt1 | SupBoundMode::WeightedSupFOverRLt1 => {
            if sup_f_over_r >= 1.0 {
                return Err(Error::InfeasibleSpec(format!("sup f = {sup_f:.4}, sup f/r = {sup_f_over_r:.4}; relax the anchors")));
            }
            p.fallback_used = spec.sup_bound_mode == SupBoundMode::StrictSupFLt1;
        }
    }
    Ok(p)
}

fn margin(x: f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let u = (x - a) * (b - x) / (half * half);
    MARGIN * u.max(0.0).powi(3)
}

/// Minimizes ∫(f‴)² over the free knot data subject to
///   f‴ = 0 at every anchor,
///   f ≥ margin on a fine grid,
///   ±f‴ ≥ margin at the support ends (f grows like a positive cubic there),
///   sign(f″(r_j))·f″ ≥ 0 within `MONOTONE_WINDOW` of every anchor.
fn solve_shape_qp(spec: &ProfileSpec, layout: &Layout) -> Result<Vec<f64>> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};

    let n = layout.n_free;
    let (a, b) = spec.support;
    let s = (0.6f64).sqrt();
    let gauss = [(0.5 * (1.0 - s), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 * (1.0 + s), 5.0 / 18.0)];
    let n_pieces = layout.knots.len() - 1;

    // Objective ½zᵀPz + qᵀz with P = 2RᵀR, q = 2Rᵀc from f‴ = c + R z.
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut q = DVector::<f64>::zeros(n);
    for j in 0..n_pieces {
        let h = layout.knots[j + 1] - layout.knots[j];
        for (t, w) in gauss {
            let (c, row) = layout.functional(j, t, 3);
            let row = DVector::from_vec(row);
            p += &row * row.transpose() * (2.0 * w * h);
            q += &row * (2.0 * w * h * c);
        }
    }
    p += DMatrix::identity(n, n) * 1e-12;

    // Equality rows first: f‴ = 0 on both sides of each anchor, so that
    // the circular-orbit family is smooth enough for differencing in energy.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for an in &spec.anchors {
        let j = layout.knots.iter().position(|&k| k == an.r).unwrap();
        for (piece, t) in [(j - 1, 1.0), (j, 0.0)] {
            let (c, row) = layout.functional(piece, t, 3);
            rows.push(row);
            rhs.push(-c);
        }
    }
    let n_eq = rows.len();
    // Inequalities as −row·z ≤ c − bound for "c + row·z ≥ bound".
    let mut geq = |(c, row): (f64, Vec<f64>), bound: f64| {
        rows.push(row.iter().map(|x| -x).collect());
        rhs.push(c - bound);
    };
    for j in 0..n_pieces {
        let h = layout.knots[j + 1] - layout.knots[j];
        for i in 1..SAMPLES_PER_PIECE {
            let t = i as f64 / SAMPLES_PER_PIECE as f64;
            let x = layout.knots[j] + t * h;
            geq(layout.functional(j, t, 0), margin(x, a, b));
            for an in &spec.anchors {
                if (x - an.r).abs() <= MONOTONE_WINDOW && an.d2 != 0.0 {
                    let (c, row) = layout.functional(j, t, 2);
                    let sg = an.d2.signum();
                    geq((sg * c, row.iter().map(|v| sg * v).collect()), 0.0);
                }
            }
        }
    }
    geq(layout.functional(0, 0.0, 3), MARGIN);
    let (c, row) = layout.functional(n_pieces - 1, 1.0, 3);
    geq((-c, row.iter().map(|v| -v).collect()), MARGIN);

    let m = rows.len() - n_eq;
    let dense_csc = |get: &dyn Fn(usize, usize) -> f64, nr: usize, nc: usize, upper: bool| {
        let mut colptr = vec![0usize];
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        for jc in 0..nc {
            for ir in 0..nr {
                if upper && ir > jc {
                    break;
                }
                let v = get(ir, jc);
                if v != 0.0 {
                    rowval.push(ir);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(nr, nc, colptr, rowval, nzval)
    };
    let pm = dense_csc(&|i, j| p[(i, j)], n, n, true);
    let am = dense_csc(&|i, j| rows[i][j], n_eq + m, n, false);
    let qv: Vec<f64> = q.iter().copied().collect();
    let settings =
        DefaultSettings { verbose: false, tol_gap_abs: 1e-12, tol_gap_rel: 1e-12, tol_feas: 1e-12, ..DefaultSettings::default() };
    let cones = [ZeroConeT(n_eq), NonnegativeConeT(m)];
    let mut solver = DefaultSolver::new(&pm, &qv, &am, &rhs, &cones, settings)
        .map_err(|e| Error::InfeasibleSpec(format!("shape program rejected: {e:?}")))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(solver.solution.x.clone()),
        other => Err(Error::InfeasibleSpec(format!("shape program status {other:?}"))),
    }
}

impl MagneticProfile {
    pub fn zero() -> Self {
        build_named("zero", &ProfileSpec::zero()).expect("zero profile")
    }

    pub fn fstar() -> Self {
        build_named("fstar", &ProfileSpec::fstar()).expect("fstar profile")
    }

    pub fn f2() -> Self {
        build_named("f2", &ProfileSpec::f2()).expect("f2 profile")
    }

    /// `c·f`, which no longer satisfies the anchor constraints for c ≠ 1.
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.scale *= c;
        p.id = format!("{}*{}", self.id, c);
        p
    }

    pub fn support(&self) -> (f64, f64) {
        self.spec.support
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// (f, f′, f″, f‴); zero outside the support. Callers ensure r > 0.
    pub fn eval_all(&self, r: f64) -> [f64; 4] {
        let (a, b) = self.spec.support;
        if r <= a || r >= b || self.pieces.is_empty() {
            return [0.0; 4];
        }
        let i = self.knots.partition_point(|&k| k <= r).saturating_sub(1).min(self.pieces.len() - 1);
        let p = &self.pieces[i];
        let v = p.eval_t((r - p.x0) / p.h);
        v.map(|x| x * self.scale)
    }

    pub fn eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        if r.is_nan() || r <= 0.0 {
            return Err(Error::Domain(format!("profile evaluated at r = {r}")));
        }
        let [f, d1, d2, _] = self.eval_all(r);
        Ok((f, d1, d2))
    }

    pub fn f(&self, r: f64) -> f64 {
        self.eval_all(r)[0]
    }

    pub fn grid(&self) -> Vec<f64> {
        (1..=GRID_POINTS).map(|i| GRID_MAX * i as f64 / GRID_POINTS as f64).collect()
    }

    fn sups(&self) -> (f64, f64) {
        self.grid().iter().fold((0.0f64, 0.0f64), |(sf, sr), &r| {
            let f = self.f(r);
            (sf.max(f.abs()), sr.max((f / r).abs()))
        })
    }

    /// ∫ f′ over the support by per-piece five-point Gauss–Legendre.
    pub fn integral_of_derivative(&self) -> f64 {
        let x = [0.0, -0.5384693101056831, 0.5384693101056831, -0.906179845938664, 0.906179845938664];
        let w = [0.5688888888888889, 0.47862867049936647, 0.47862867049936647, 0.23692688505618908, 0.23692688505618908];
        self.pieces
            .iter()
            .map(|p| x.iter().zip(w).map(|(xi, wi)| wi * 0.5 * p.h * p.eval_t(0.5 * (1.0 + xi))[1] * self.scale).sum::<f64>())
            .sum()
    }

    /// Largest jump of (f, f′, f″) across any knot, including the support ends.
    pub fn max_gluing_jump(&self) -> f64 {
        if self.pieces.is_empty() {
            return 0.0;
        }
        let mut worst = 0.0f64;
        let zero = [0.0; 4];
        let first = self.pieces[0].eval_t(0.0);
        let last = self.pieces.last().unwrap().eval_t(1.0);
        for (l, r) in [(zero, first), (last, zero)] {
            for d in 0..3 {
                worst = worst.max((l[d] - r[d]).abs() * self.scale.abs());
            }
        }
        for w in self.pieces.windows(2) {
            let l = w[0].eval_t(1.0);
            let r = w[1].eval_t(0.0);
            for d in 0..3 {
                worst = worst.max((l[d] - r[d]).abs() * self.scale.abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,f,df,d2f\n");
        for r in self.grid() {
            let [f, d1, d2, _] = self.eval_all(r);
            s.push_str(&format!("{r},{f},{d1},{d2}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
    /// Allowed deviation for `Eq`; unused otherwise.
    pub tol: f64,
    pub pass: bool,
}

impl ConstraintResult {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, bound: f64, tol: f64) -> Self {
        let mut c = ConstraintResult { name: name.into(), measured, relation, bound, tol, pass: false };
        c.pass = c.holds();
        c
    }

    pub fn holds(&self) -> bool {
        let (m, b) = (self.measured, self.bound);
        match self.relation {
            Relation::Lt => m < b,
            Relation::Le => m <= b,
            Relation::Ge => m >= b,
            Relation::Eq => (m - b).abs() <= self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub profile: String,
    pub grid_points: usize,
    pub constraints: Vec<ConstraintResult>,
    pub sup_f: f64,
    pub sup_f_over_r: f64,
    pub mane_upper_bound: f64,
    pub crude_mane_bound: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintResult> {
        self.constraints.iter().filter(|c| !c.pass)
    }
}

pub fn validate_profile(p: &MagneticProfile) -> ValidationReport {
    validate_against(p, &p.spec.anchors)
}

/// Validates `p` with `anchors` as the required derivative data, which need
/// not be the anchors it was built from.
pub fn validate_against(p: &MagneticProfile, anchors: &[Anchor]) -> ValidationReport {
    let grid = p.grid();
    let (a, b) = p.support();
    let mut cs = Vec::new();

    let outside = grid
        .iter()
        .filter(|&&r| r <= a || r >= b)
        .map(|&r| p.eval_all(r)[..3].iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .fold(0.0f64, f64::max);
    cs.push(ConstraintResult::new("vanishes outside support", outside, Relation::Le, 0.0, 0.0));
    cs.push(ConstraintResult::new("C2 gluing", p.max_gluing_jump(), Relation::Le, GLUING_TOL, 0.0));

    let min_f = grid.iter().map(|&r| p.f(r)).fold(f64::INFINITY, f64::min);
    cs.push(ConstraintResult::new("f >= 0", min_f, Relation::Ge, 0.0, 0.0));

    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for &r in grid.iter().filter(|&&r| r > a && r < b) {
        let [_, d1, d2, _] = p.eval_all(r);
        e1 = e1.max((d1 - fd1(p, r)).abs() / (1.0 + d1.abs()));
        e2 = e2.max((d2 - fd2(p, r)).abs() / (1.0 + d2.abs()));
    }
    cs.push(ConstraintResult::new("f' matches differences of f", e1, Relation::Le, 1e-6, 0.0));
    cs.push(ConstraintResult::new("f'' matches differences of f'", e2, Relation::Le, 1e-6, 0.0));
    cs.push(ConstraintResult::new("integral of f' over support", p.integral_of_derivative(), Relation::Eq, 0.0, 1e-8));

    for an in anchors {
        let tol1 = 1e-6 * (1.0 + an.d1.abs());
        let tol2 = 1e-6 * (1.0 + an.d2.abs());
        cs.push(ConstraintResult::new(format!("f'({})={}", an.r, an.d1), fd1(p, an.r), Relation::Eq, an.d1, tol1));
        cs.push(ConstraintResult::new(format!("f''({})={}", an.r, an.d2), fd2(p, an.r), Relation::Eq, an.d2, tol2));
    }

    let (sup_f, sup_f_over_r) = p.sups();
    match p.spec.sup_bound_mode {
        SupBoundMode::StrictSupFLt1 if !p.fallback_used => cs.push(ConstraintResult::new("sup f < 1", sup_f, Relation::Lt, 1.0, 0.0)),
        _ => cs.push(ConstraintResult::new("sup f/r < 1", sup_f_over_r, Relation::Lt, 1.0, 0.0)),
    }
    let mane = 0.5 * sup_f_over_r * sup_f_over_r;
    cs.push(ConstraintResult::new("mane bound < 1/2", mane, Relation::Lt, 0.5, 0.0));

    let pass = cs.iter().all(|c| c.pass);
    ValidationReport {
        profile: p.id.clone(),
        grid_points: grid.len(),
        constraints: cs,
        sup_f,
        sup_f_over_r,
        mane_upper_bound: mane,
        crude_mane_bound: 0.5 * sup_f * sup_f,
        pass,
    }
}

/// Central difference of f. f⁗ is bounded, so h = 1e-5 is accurate to ~1e-10.
pub fn fd1(p: &MagneticProfile, r: f64) -> f64 {
    let h = 1e-5;
    (p.f(r + h) - p.f(r - h)) / (2.0 * h)
}

/// Central difference of f′. f‴ jumps at knots, so the error is h·|jump|/4
/// there; h = 1e-8 keeps it below 1e-6.
pub fn fd2(p: &MagneticProfile, r: f64) -> f64 {
    let h = 1e-8;
    (p.eval_all(r + h)[1] - p.eval_all(r - h)[1]) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_piece_reproduces_end_data() {
        let p = Piece::hermite(1.0, 1.5, [0.2, -0.3, 0.7], [0.9, 1.1, -0.4]);
        let l = p.eval_t(0.0);
        let r = p.eval_t(1.0);
        for (got, want) in l[..3].iter().zip([0.2, -0.3, 0.7]) {
            assert!((got - want).abs() < 1e-13);
        }
        for (got, want) in r[..3].iter().zip([0.9, 1.1, -0.4]) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn fstar_anchor_is_exact() {
        let p = MagneticProfile::fstar();
        let (_, d1, d2) = p.eval(2.0).unwrap();
        assert_eq!(d1, 1.0);
        assert!((d2 - 0.25).abs() < 1e-14);
    }

    #[test]
    fn zero_profile_is_zero() {
        let p = MagneticProfile::zero();
        assert!(p.grid().iter().all(|&r| p.eval_all(r) == [0.0; 4]));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = ProfileSpec::fstar();
        s.support = (0.5, 2.9);
        assert!(matches!(build_profile(&s), Err(Error::InvalidSpec(_))));
        let mut s = ProfileSpec::fstar();
        s.anchors[0].r = 2.95;
        assert!(matches!(build_profile(&s), Err(Error::InvalidSpec(_))));
        assert!(MagneticProfile::fstar().eval(0.0).is_err());
    }

    #[test]
    fn steep_anchor_is_infeasible() {
        let s = ProfileSpec::new((1.2, 2.9), vec![Anchor { r: 2.0, d1: 6.0, d2: 0.0 }]);
        assert!(matches!(build_profile(&s), Err(Error::InfeasibleSpec(_))));
    }
}
