//! Python bindings. Reports cross the boundary as JSON strings; configs are
//! passed as JSON objects with the same keys as the TOML config.

use orbindex::indices::{analyze_circular_orbit, calibration, rs_maslov, shear_block_value, shear_path};
use orbindex::model::Model;
use orbindex::morse_index::verify_index_theorem;
use orbindex::orbits::{cylinder_derivatives, find_circular_orbit};
use orbindex::scenario::{build_checked, run_scenario as run, selftest as run_selftest, ScenarioConfig, VERSION};
use orbindex::spectral_flow::{spectral_flow_stable, OperatorPath};
use orbindex::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidSpec(_) | Error::ValidationFailed(_) | Error::InfeasibleSpec(_) | Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn config(json: Option<&str>) -> PyResult<ScenarioConfig> {
    let cfg: ScenarioConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    cfg.check().map_err(py_err)?;
    Ok(cfg)
}

fn model(cfg: &ScenarioConfig, name: &str) -> PyResult<(Model, f64)> {
    let (pc, claim) = cfg.profile(name).map_err(py_err)?;
    let (p, rep) = build_checked(name, pc, claim).map_err(py_err)?;
    if !rep.pass {
        let names: Vec<&str> = rep.failures().map(|c| c.name.as_str()).collect();
        return Err(py_err(Error::ValidationFailed(names.join(", "))));
    }
    Ok((Model::new(p), pc.seed_radius))
}

#[pyfunction]
fn version() -> &'static str {
    VERSION
}

/// Full two-orbit report as JSON.
#[pyfunction]
#[pyo3(signature = (config_json=None))]
fn run_scenario(config_json: Option<&str>) -> PyResult<String> {
    let cfg = config(config_json)?;
    to_json(&run(&cfg).map_err(py_err)?)
}

#[pyfunction]
#[pyo3(signature = (name, config_json=None))]
fn validate_profile(name: &str, config_json: Option<&str>) -> PyResult<String> {
    let cfg = config(config_json)?;
    let (pc, claim) = cfg.profile(name).map_err(py_err)?;
    let (_, rep) = build_checked(name, pc, claim).map_err(py_err)?;
    to_json(&rep)
}

#[derive(Serialize)]
struct OrbitOut {
    orbit: orbindex::orbits::CircularOrbit,
    derivatives: orbindex::orbits::CylinderDerivatives,
}

#[pyfunction]
#[pyo3(signature = (name, k=None, config_json=None))]
fn find_orbit(name: &str, k: Option<f64>, config_json: Option<&str>) -> PyResult<String> {
    let cfg = config(config_json)?;
    let (m, seed) = model(&cfg, name)?;
    let orbit = find_circular_orbit(&m, k.unwrap_or(cfg.k), seed).map_err(py_err)?;
    let derivatives = cylinder_derivatives(&m, &orbit).map_err(py_err)?;
    to_json(&OrbitOut { orbit, derivatives })
}

#[derive(Serialize)]
struct IndicesOut {
    indices: orbindex::indices::OrbitIndices,
    morse: orbindex::morse_index::IndexTheoremReport,
}

#[pyfunction]
#[pyo3(signature = (name, config_json=None))]
fn orbit_indices(name: &str, config_json: Option<&str>) -> PyResult<String> {
    let cfg = config(config_json)?;
    let (m, seed) = model(&cfg, name)?;
    let orbit = find_circular_orbit(&m, cfg.k, seed).map_err(py_err)?;
    let indices = analyze_circular_orbit(&m, &orbit, cfg.steps_per_period).map_err(py_err)?;
    let morse = verify_index_theorem(&m, &orbit, cfg.n).map_err(py_err)?;
    to_json(&IndicesOut { indices, morse })
}

/// Maslov index of the shear path with the given T′, and the expected value.
#[pyfunction]
fn shear_index(tprime: f64) -> PyResult<(String, String)> {
    let p = shear_path(tprime, 1.0, 64).map_err(py_err)?;
    Ok((rs_maslov(&p).map_err(py_err)?.to_string(), shear_block_value(tprime).to_string()))
}

/// ½sign(A⁺) − ½sign(A⁻) of a sampled path of symmetric matrices, as "p/2".
#[pyfunction]
fn spectral_flow(samples: Vec<Vec<Vec<f64>>>) -> PyResult<String> {
    let mats = samples
        .iter()
        .map(|rows| {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(PyValueError::new_err("matrices must be square"));
            }
            Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let m = mats.len();
    if m < 2 {
        return Err(PyValueError::new_err("need at least two samples"));
    }
    let s = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let path = OperatorPath::new(s, mats).map_err(py_err)?;
    Ok(spectral_flow_stable(&path).map_err(py_err)?.to_string())
}

#[pyfunction]
#[pyo3(signature = (trials=50, seed=20_240_601, flip=false))]
fn selftest(trials: usize, seed: u64, flip: bool) -> PyResult<String> {
    to_json(&run_selftest(trials, seed, flip))
}

#[pyfunction]
#[pyo3(signature = (flip=false))]
fn calibrate(flip: bool) -> PyResult<String> {
    to_json(&calibration(flip))
}

#[pymodule]
fn orbindex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(validate_profile, m)?)?;
    m.add_function(wrap_pyfunction!(find_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(orbit_indices, m)?)?;
    m.add_function(wrap_pyfunction!(shear_index, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_flow, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
