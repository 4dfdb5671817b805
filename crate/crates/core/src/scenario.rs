//! The two-orbit scenario on the disk: a profile with f′(2) = 1, f″(2) = ¼
//! (T′ > 0, χ = −1) and one with f′(5/2) = 1, f″(5/2) = ½ (T′ < 0, χ = +1),
//! run through every module and collected into one report.

use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::indices::{analyze_circular_orbit, calibration, virtual_dimension, CalibrationReport, IndexRecord, Multiplier, OrbitIndices};
use crate::magnetic_profile::{build_named, validate_against, Anchor, MagneticProfile, ProfileSpec, SupBoundMode, ValidationReport};
use crate::model::{mane_upper_bound, ManeBound, Model};
use crate::morse_index::{duistermaat_check, fourier_index_from_jacobi, fourier_index_oracle, verify_index_theorem, CylinderIdentities};
use crate::orbits::{find_circular_orbit, orbit_cylinder, period_derivative_analytic};
use crate::spectral_flow::{randomized_suite, SuiteReport};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub support: (f64, f64),
    /// (r, f′(r), f″(r)) triples.
    pub anchors: Vec<[f64; 3]>,
    pub seed_radius: f64,
    pub sup_bound_mode: SupBoundMode,
}

impl ProfileConfig {
    pub fn spec(&self) -> ProfileSpec {
        let anchors = self.anchors.iter().map(|a| Anchor { r: a[0], d1: a[1], d2: a[2] }).collect();
        let mut s = ProfileSpec::new(self.support, anchors);
        s.sup_bound_mode = self.sup_bound_mode;
        s
    }

    fn from_spec(s: &ProfileSpec, seed_radius: f64) -> Self {
        ProfileConfig {
            support: s.support,
            anchors: s.anchors.iter().map(|a| [a.r, a.d1, a.d2]).collect(),
            seed_radius,
            sup_bound_mode: s.sup_bound_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Energy level.
    pub k: f64,
    /// Nodes of the discrete loops.
    pub n: usize,
    pub steps_per_period: usize,
    pub cylinder_eps: f64,
    pub cylinder_samples: usize,
    pub fourier_modes: usize,
    /// Relative tolerance for T′ by differences against the analytic value.
    pub tprime_rel_tol: f64,
    /// Tolerance for the Hessian–cylinder identities.
    pub hessian_tol: f64,
    /// Tolerance for the transverse trace against 2cos(√K·T).
    pub trace_tol: f64,
    pub seed: u64,
    pub spectral_trials: usize,
    pub output_dir: Option<String>,
    pub fstar: ProfileConfig,
    pub f2: ProfileConfig,
    pub scan: ScanConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub profile: String,
    pub k_min: f64,
    pub k_max: f64,
    /// Zero gives a header-only CSV.
    pub samples: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { profile: "fstar".into(), k_min: 0.3, k_max: 0.7, samples: 41 }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            k: 0.5,
            n: 512,
            steps_per_period: 4096,
            cylinder_eps: 1e-3,
            cylinder_samples: 9,
            fourier_modes: 64,
            tprime_rel_tol: 1e-4,
            hessian_tol: 1e-3,
            trace_tol: 1e-5,
            seed: 20_240_601,
            spectral_trials: 500,
            output_dir: None,
            fstar: ProfileConfig::from_spec(&ProfileSpec::fstar(), 2.0),
            f2: ProfileConfig::from_spec(&ProfileSpec::f2(), 2.5),
            scan: ScanConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.k > 0.0) {
            return bad(format!("k = {} must be positive", self.k));
        }
        if !self.n.is_power_of_two() || !(128..=4096).contains(&self.n) {
            return bad(format!("n = {} must be a power of two in [128, 4096]", self.n));
        }
        if self.steps_per_period < 100 {
            return bad("steps_per_period must be at least 100".into());
        }
        if self.cylinder_samples < 3 || self.cylinder_samples.is_multiple_of(2) {
            return bad("cylinder_samples must be odd and at least 3".into());
        }
        for (name, v) in [
            ("cylinder_eps", self.cylinder_eps),
            ("tprime_rel_tol", self.tprime_rel_tol),
            ("hessian_tol", self.hessian_tol),
            ("trace_tol", self.trace_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if self.fourier_modes == 0 || self.spectral_trials == 0 {
            return bad("fourier_modes and spectral_trials must be positive".into());
        }
        if !(self.scan.k_min > 0.0 && self.scan.k_min <= self.scan.k_max && self.scan.k_max.is_finite()) {
            return bad(format!("scan range [{}, {}] is not a positive interval", self.scan.k_min, self.scan.k_max));
        }
        self.profile(&self.scan.profile)?;
        self.fstar.spec().check()?;
        self.f2.spec().check()?;
        Ok(())
    }

    /// Profile table and expected orbit data by name ("fstar" or "f2").
    pub fn profile(&self, name: &str) -> Result<(&ProfileConfig, &'static OrbitClaim)> {
        match name {
            "fstar" => Ok((&self.fstar, &FSTAR_CLAIM)),
            "f2" => Ok((&self.f2, &F2_CLAIM)),
            _ => Err(Error::InvalidSpec(format!("unknown profile {name:?}; expected fstar or f2"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

/// What the scenario expects of an orbit, independent of the configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitClaim {
    pub anchor: Anchor,
    pub chi: i32,
    /// i − i_T.
    pub index_jump: usize,
}

pub const FSTAR_CLAIM: OrbitClaim = OrbitClaim { anchor: Anchor { r: 2.0, d1: 1.0, d2: 0.25 }, chi: -1, index_jump: 1 };
pub const F2_CLAIM: OrbitClaim = OrbitClaim { anchor: Anchor { r: 2.5, d1: 1.0, d2: 0.5 }, chi: 1, index_jump: 0 };

#[derive(Debug, Clone, Serialize)]
pub struct OrbitReport {
    pub name: String,
    pub validation_pass: bool,
    pub mane: ManeBound,
    pub k: f64,
    pub rho: f64,
    pub a: f64,
    pub period: f64,
    pub tprime_analytic: f64,
    pub tprime_fd: f64,
    pub rhoprime: f64,
    pub chi: i32,
    pub nullity: usize,
    pub floquet: Vec<Multiplier>,
    pub mu_cz: HalfInt,
    pub mu_cz_transverse: HalfInt,
    pub mu_rab: HalfInt,
    pub i_t: usize,
    pub i_free: usize,
    pub fourier_i_t: usize,
    pub cylinder_block_12: f64,
    pub transverse_trace: f64,
    /// 2cos(√K·T) with K = a·f″(ρ).
    pub transverse_trace_expected: f64,
    pub hessian_cylinder: CylinderIdentities,
    pub n: usize,
    pub checks: Vec<Check>,
}

impl OrbitReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Builds the profile, failing with the validation report when the built
/// profile does not meet `claim`.
pub fn build_checked(name: &str, pc: &ProfileConfig, claim: &OrbitClaim) -> Result<(MagneticProfile, ValidationReport)> {
    let p = build_named(name, &pc.spec())?;
    let mut anchors = pc.spec().anchors;
    if !anchors.iter().any(|a| a == &claim.anchor) {
        anchors.push(claim.anchor);
    }
    let rep = validate_against(&p, &anchors);
    Ok((p, rep))
}

#[derive(Debug, Clone)]
pub struct OrbitRun {
    pub report: OrbitReport,
    pub indices: OrbitIndices,
}

pub fn run_orbit(name: &str, pc: &ProfileConfig, claim: &OrbitClaim, cfg: &ScenarioConfig) -> Result<OrbitRun> {
    let (p, validation) = build_checked(name, pc, claim)?;
    if !validation.pass {
        let failed: Vec<String> = validation.failures().map(|c| c.name.clone()).collect();
        return Err(Error::ValidationFailed(format!("{name}: {}", failed.join(", "))));
    }
    let m = Model::new(p.clone());
    let orbit = find_circular_orbit(&m, cfg.k, pc.seed_radius)?;
    let cyl = orbit_cylinder(&m, cfg.k, pc.seed_radius, cfg.cylinder_eps, cfg.cylinder_samples)?;
    let (rhoprime, tprime) = period_derivative_analytic(&m, &orbit)?;
    let idx = analyze_circular_orbit(&m, &orbit, cfg.steps_per_period)?;
    let thm = verify_index_theorem(&m, &orbit, cfg.n)?;
    let dui = duistermaat_check(&thm, &idx);
    let fourier_i_t = fourier_index_oracle(&m, &orbit, cfg.fourier_modes);
    let fourier_jacobi = fourier_index_from_jacobi(&m, &orbit, cfg.fourier_modes)?;
    let cf = m.coeffs(orbit.rho);
    let kk = orbit.a * cf.f2;
    let trace_expected = if kk >= 0.0 { 2.0 * (kk.sqrt() * orbit.period).cos() } else { 2.0 * ((-kk).sqrt() * orbit.period).cosh() };
    let trace = idx.split.transverse_block.trace();
    let c12 = idx.split.minus_tprime();
    let rec: &IndexRecord = &idx.record;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    let expected_period = 2.0 * PI * orbit.rho / (2.0 * (cfg.k)).sqrt();

    let checks = vec![
        check("profile validation", validation.pass, format!("{} constraints", validation.constraints.len())),
        check("mane bound < 1/2", validation.mane_upper_bound < 0.5, format!("{:e}", validation.mane_upper_bound)),
        check("orbit at anchor radius", (orbit.rho - claim.anchor.r).abs() <= 1e-10, format!("rho = {}", orbit.rho)),
        check("period = 2 pi rho / sqrt(2k)", (orbit.period - expected_period).abs() <= 1e-10, format!("T = {}", orbit.period)),
        check(
            "T' by differences",
            rel(cyl.tprime_fd, tprime) <= cfg.tprime_rel_tol,
            format!("fd {} vs analytic {}", cyl.tprime_fd, tprime),
        ),
        check("chi", cyl.chi == claim.chi, format!("chi = {} (expected {})", cyl.chi, claim.chi)),
        check("nullity 1", rec.nullity == 1, format!("nullity = {}", rec.nullity)),
        check("floquet pairs", idx.floquet_pairing_defect <= 1e-6, format!("{:e}", idx.floquet_pairing_defect)),
        check("symplectic flow", idx.symplectic_defect <= 1e-7, format!("{:e}", idx.symplectic_defect)),
        check("transverse angle away from rationals", idx.irrationality.pass, format!("{:?}", idx.irrationality)),
        check("monodromy splits", idx.split.offdiag_norm <= 1e-5, format!("{:e}", idx.split.offdiag_norm)),
        check("cylinder block entry = -T'", rel(c12, -tprime) <= 1e-3, format!("{c12} vs {}", -tprime)),
        check(
            "transverse trace = 2cos(sqrt(K) T)",
            (trace - trace_expected).abs() <= cfg.trace_tol,
            format!("{trace} vs {trace_expected}"),
        ),
        check("product of block indices", idx.product_axiom, format!("{} + {}", idx.cylinder_index, rec.mu_cz_transverse)),
        check("coordinate frame agrees", idx.cz_coordinate == rec.mu_cz, format!("{} vs {}", idx.cz_coordinate, rec.mu_cz)),
        check("mu_cz is a proper half-integer", !rec.mu_cz.is_integer(), rec.mu_cz.to_string()),
        check(
            "mu_rab = mu_cz - chi/2 = transverse",
            rec.mu_rab == rec.mu_cz_transverse,
            format!("{} vs {}", rec.mu_rab, rec.mu_cz_transverse),
        ),
        check("reversed orbit negates mu_rab", idx.reversed.mu_rab == -rec.mu_rab, idx.reversed.mu_rab.to_string()),
        check("index theorem", thm.holds, format!("i = {}, i_T = {}, chi = {}", thm.i_free, thm.i_t, thm.chi)),
        check(
            "index jump as claimed",
            thm.i_free == thm.i_t + claim.index_jump,
            format!("i - i_T = {}", thm.i_free as i64 - thm.i_t as i64),
        ),
        check("duistermaat i_T = mu_cz - 1/2", dui.holds, format!("{} vs {}", thm.i_t, rec.mu_cz)),
        check("i = mu_rab", dui.free_matches_rab, format!("{} vs {}", thm.i_free, rec.mu_rab)),
        check("fourier oracle for i_T", fourier_i_t == thm.i_t && fourier_jacobi == thm.i_t, format!("{fourier_i_t}, {fourier_jacobi}")),
        check("fixed-period kernel is reparametrization", thm.kernel_overlap >= 0.999, format!("{}", thm.kernel_overlap)),
        check(
            "hessian on cylinder vector",
            (thm.cylinder.period_slot + 1.0).abs() <= cfg.hessian_tol
                && thm.cylinder.q_slots_max <= cfg.hessian_tol
                && (thm.cylinder.diagonal + tprime).abs() <= cfg.hessian_tol * tprime.abs(),
            format!("{:?}", thm.cylinder),
        ),
    ];
    let report = OrbitReport {
        name: name.into(),
        validation_pass: validation.pass,
        mane: mane_upper_bound(&p),
        k: cfg.k,
        rho: orbit.rho,
        a: orbit.a,
        period: orbit.period,
        tprime_analytic: tprime,
        tprime_fd: cyl.tprime_fd,
        rhoprime,
        chi: cyl.chi,
        nullity: rec.nullity,
        floquet: rec.floquet.clone(),
        mu_cz: rec.mu_cz,
        mu_cz_transverse: rec.mu_cz_transverse,
        mu_rab: rec.mu_rab,
        i_t: thm.i_t,
        i_free: thm.i_free,
        fourier_i_t,
        cylinder_block_12: c12,
        transverse_trace: trace,
        transverse_trace_expected: trace_expected,
        hessian_cylinder: thm.cylinder.clone(),
        n: cfg.n,
        checks,
    };
    Ok(OrbitRun { report, indices: idx })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioBundle {
    pub tool: String,
    pub version: String,
    pub config: ScenarioConfig,
    pub orbits: Vec<OrbitReport>,
    /// μ_Rab(f₂ orbit) − μ_Rab(f★ orbit) − 1.
    pub virtual_dimension: HalfInt,
    pub failed: Vec<String>,
    pub pass: bool,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioBundle> {
    cfg.check()?;
    let a = run_orbit("fstar", &cfg.fstar, &FSTAR_CLAIM, cfg)?;
    let b = run_orbit("f2", &cfg.f2, &F2_CLAIM, cfg)?;
    let virtual_dimension = virtual_dimension(&b.indices.record, &a.indices.record);
    let orbits = vec![a.report, b.report];
    let failed: Vec<String> =
        orbits.iter().flat_map(|o| o.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}: {}", o.name, c.name))).collect();
    Ok(ScenarioBundle {
        tool: "orbindex".into(),
        version: VERSION.into(),
        config: cfg.clone(),
        orbits,
        virtual_dimension,
        pass: failed.is_empty(),
        failed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub tool: String,
    pub version: String,
    pub spectral: SuiteReport,
    pub calibration: CalibrationReport,
    pub pass: bool,
}

/// The randomized spectral-flow suite and the index calibration paths.
/// `flip` injects a wrong orientation into the calibration.
pub fn selftest(trials: usize, seed: u64, flip: bool) -> SelftestReport {
    let spectral = randomized_suite(trials, seed);
    let calibration = calibration(flip);
    SelftestReport { tool: "orbindex".into(), version: VERSION.into(), pass: spectral.pass && calibration.pass, spectral, calibration }
}
