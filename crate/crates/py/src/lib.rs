//! Python bindings. The extension module is importable as `metriplex`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use metriplex::analysis::{self, CorrelationCurve};
use metriplex::datagen::{self, DpdGasSpec, Forcing};
use metriplex::dpd::{self, DpdCalibConfig, DpdParams};
use metriplex::dynamics::{verify_structure, VerifyOptions};
use metriplex::geometry::{BoundaryMode, SimBox};
use metriplex::io;
use metriplex::nn::{Architecture, ModelParams};
use metriplex::thermo::Closures;
use metriplex::training::{self, TrainConfig};
use metriplex::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Parse { .. } | Error::InconsistentFrame { .. } | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<f64>>;
type EpochRow = (usize, f64, f64, f64);

fn rows(v: &[[f64; 3]], dim: usize) -> Rows {
    v.iter().map(|x| x[..dim].to_vec()).collect()
}

/// Learned model parameters.
#[pyclass(name = "Model", module = "metriplex", skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Randomly initialised model.
    #[staticmethod]
    #[pyo3(signature = (dim, cutoff, width=50, hidden_layers=2, solid=false, seed=0, kb=None))]
    fn random(dim: usize, cutoff: f64, width: usize, hidden_layers: usize, solid: bool, seed: u64, kb: Option<f64>) -> PyResult<Self> {
        if dim != 2 && dim != 3 {
            return Err(PyValueError::new_err("dim must be 2 or 3"));
        }
        let arch = Architecture {
            dim,
            solid,
            cutoff,
            width,
            hidden_layers,
        };
        let mut inner = ModelParams::random(&arch, seed);
        if let Some(k) = kb {
            inner.log_kb = k.ln();
        }
        Ok(Self { inner })
    }

    /// Model with all interactions switched off.
    #[staticmethod]
    #[pyo3(signature = (dim, cutoff, width=50, seed=0))]
    fn free_flight(dim: usize, cutoff: f64, width: usize, seed: u64) -> Self {
        Self {
            inner: ModelParams::free_flight(&Architecture::fluid(dim, cutoff, width), seed),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ModelParams::load(&path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn cutoff(&self) -> f64 {
        self.inner.cutoff()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    #[getter]
    fn kb(&self) -> f64 {
        self.inner.kb()
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    /// Flat parameter vector.
    fn parameters(&self) -> Vec<f64> {
        self.inner.flatten().0
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(dim={}, cutoff={}, width={}, solid={}, n_params={})",
            self.inner.dim(),
            self.inner.cutoff(),
            self.inner.arch.width,
            self.inner.arch.solid,
            self.inner.n_params()
        )
    }
}

/// Recorded snapshots of positions and velocities.
#[pyclass(name = "Trajectory", module = "metriplex", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrajectory {
    inner: metriplex::trajectory::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        io::read_dump(&path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_dump(&self.inner, &path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles()
    }

    fn positions(&self, k: usize) -> PyResult<Rows> {
        Ok(rows(&self.frame(k)?.r, self.inner.dim))
    }

    fn velocities(&self, k: usize) -> PyResult<Rows> {
        Ok(rows(&self.frame(k)?.v, self.inner.dim))
    }

    fn times(&self) -> Vec<f64> {
        self.inner.frames.iter().map(|f| f.time).collect()
    }

    /// Frames `start..stop`.
    fn slice(&self, start: usize, stop: usize) -> PyResult<Self> {
        if start >= stop || stop > self.inner.len() {
            return Err(PyValueError::new_err("invalid frame range"));
        }
        Ok(Self {
            inner: self.inner.slice(start..stop),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(frames={}, particles={}, dim={}, dt={})",
            self.inner.len(),
            self.inner.n_particles(),
            self.inner.dim,
            self.inner.dt
        )
    }
}

impl PyTrajectory {
    fn frame(&self, k: usize) -> PyResult<&metriplex::trajectory::Frame> {
        self.inner
            .frames
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("frame {k} out of range")))
    }

}

fn curve(c: CorrelationCurve) -> (Vec<f64>, Vec<f64>) {
    (c.abscissa, c.values)
}

/// Equilibrated DPD gas. `forcing` is "none", "taylor_green" or "shear".
#[pyfunction]
#[pyo3(signature = (n, dim, length, h, dt, n_snapshots, alpha=25.0, sigma=3.0, m=1.0, kbt=1.0,
                    equilibration_steps=1000, stride=1, seed=0, forcing="none", rate=0.0, amplitude=1.0))]
#[allow(clippy::too_many_arguments)]
fn generate_dpd(
    py: Python<'_>,
    n: usize,
    dim: usize,
    length: f64,
    h: f64,
    dt: f64,
    n_snapshots: usize,
    alpha: f64,
    sigma: f64,
    m: f64,
    kbt: f64,
    equilibration_steps: usize,
    stride: usize,
    seed: u64,
    forcing: &str,
    rate: f64,
    amplitude: f64,
) -> PyResult<PyTrajectory> {
    let forcing = match forcing {
        "none" => Forcing::None,
        "taylor_green" => Forcing::TaylorGreen { amplitude },
        "shear" => Forcing::Shear { rate },
        other => return Err(PyValueError::new_err(format!("unknown forcing `{other}`"))),
    };
    let spec = DpdGasSpec {
        n,
        dim,
        length,
        h,
        dt,
        params: DpdParams { alpha, sigma, m, kbt },
        forcing,
        equilibration_steps,
        n_snapshots,
        stride,
        seed,
    };
    py.detach(|| datagen::gen_dpd_gas(&spec))
        .map(|inner| PyTrajectory { inner })
        .map_err(py_err)
}

/// Rollout of `model` from a lattice state of `n` particles in a periodic
/// cube, recording positions and velocities.
#[pyfunction]
#[pyo3(signature = (model, n, length, n_snapshots, dt, seed=0, stride=1, velocity_variance=0.01))]
#[allow(clippy::too_many_arguments)]
fn generate_from_model(
    py: Python<'_>,
    model: &PyModel,
    n: usize,
    length: f64,
    n_snapshots: usize,
    dt: f64,
    seed: u64,
    stride: usize,
    velocity_variance: f64,
) -> PyResult<PyTrajectory> {
    let dim = model.inner.dim();
    let b = SimBox::cube(dim, length, BoundaryMode::Periodic, 0.0);
    let mut init = datagen::lattice(n, &b, velocity_variance, seed);
    if model.inner.arch.solid {
        init.r0 = Some(init.r.clone());
    }
    py.detach(|| datagen::gen_from_model(&model.inner, &init, n_snapshots, dt, seed, stride))
        .map(|inner| PyTrajectory { inner })
        .map_err(py_err)
}

/// Train `model` on `traj`. Returns the best model and the per-epoch
/// (epoch, train NLL, validation NLL, wall time) history.
#[pyfunction]
#[pyo3(signature = (traj, model, epochs=100, learning_rate=1e-2, batch=1, split=0.75, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    traj: &PyTrajectory,
    model: &PyModel,
    epochs: usize,
    learning_rate: f64,
    batch: usize,
    split: f64,
    seed: u64,
) -> PyResult<(PyModel, Vec<EpochRow>)> {
    let cfg = TrainConfig {
        epochs,
        learning_rate,
        batch,
        split,
        seed,
    };
    let mut t = traj.inner.clone();
    if model.inner.arch.solid && t.r0.is_none() {
        t.r0 = Some(t.frames[0].r.clone());
    }
    let rep = py.detach(|| training::train(&t, &model.inner, &cfg)).map_err(py_err)?;
    let hist = rep.history.iter().map(|e| (e.epoch, e.train_nll, e.val_nll, e.wall_time)).collect();
    Ok((PyModel { inner: rep.params }, hist))
}

/// Mean transition NLL of `model` over consecutive snapshots of `traj`.
#[pyfunction]
fn nll(py: Python<'_>, traj: &PyTrajectory, model: &PyModel) -> PyResult<f64> {
    let t = &traj.inner;
    if t.len() < 2 {
        return Err(PyValueError::new_err("need at least two snapshots"));
    }
    py.detach(|| {
        let mut s = 0.0;
        for k in 0..t.len() - 1 {
            s += training::transition_nll(&model.inner, t, k)?;
        }
        Ok(s / (t.len() - 1) as f64)
    })
    .map_err(py_err)
}

/// Roll `model` out for `n_steps` from frame `start` of `traj`.
#[pyfunction]
#[pyo3(signature = (model, traj, n_steps, seed=0, start=0, stride=1))]
fn rollout(py: Python<'_>, model: &PyModel, traj: &PyTrajectory, n_steps: usize, seed: u64, start: usize, stride: usize) -> PyResult<PyTrajectory> {
    if start >= traj.inner.len() {
        return Err(PyValueError::new_err("start frame out of range"));
    }
    let mut init = traj.inner.system(start);
    if model.inner.arch.solid && init.r0.is_none() {
        init.r0 = Some(init.r.clone());
    }
    let dt = traj.inner.dt;
    py.detach(|| training::rollout(&init, &model.inner, n_steps, dt, seed, stride))
        .map(|mut inner| {
            inner.entropy = None;
            PyTrajectory { inner }
        })
        .map_err(py_err)
}

/// Velocity autocorrelation: (lag times, values).
#[pyfunction]
fn vacf(traj: &PyTrajectory, max_lag: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    analysis::vacf(&traj.inner, max_lag).map(curve).map_err(py_err)
}

/// Mean squared displacement: (lag times, values).
#[pyfunction]
fn msd(traj: &PyTrajectory, max_lag: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    analysis::msd(&traj.inner, max_lag).map(curve).map_err(py_err)
}

/// Radial distribution function: (bin centres, values).
#[pyfunction]
#[pyo3(signature = (traj, r_max, n_bins=200))]
fn rdf(traj: &PyTrajectory, r_max: f64, n_bins: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    analysis::rdf(&traj.inner, r_max, n_bins).map(curve).map_err(py_err)
}

/// Per-particle D²min between frames `a` and `b`.
#[pyfunction]
fn d2min(traj: &PyTrajectory, a: usize, b: usize, h: f64) -> PyResult<Vec<f64>> {
    let f = &traj.inner.frames;
    if a >= f.len() || b >= f.len() {
        return Err(PyValueError::new_err("frame out of range"));
    }
    analysis::d2min(&f[a], &f[b], h).map_err(py_err)
}

/// ‖gt − pred‖ / ‖gt‖.
#[pyfunction]
fn l2_rel_error(gt: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    let mk = |values: Vec<f64>| CorrelationCurve {
        metric: String::new(),
        abscissa_name: String::new(),
        abscissa: (0..values.len()).map(|k| k as f64).collect(),
        counts: vec![1; values.len()],
        values,
        n_origins: 1,
    };
    analysis::l2_rel_error(&mk(gt), &mk(pred)).map_err(py_err)
}

/// Fit (α, σ, m, k_BT) to `traj` with the mass held at its initial value.
#[pyfunction]
#[pyo3(signature = (traj, h, alpha=25.0, sigma=3.0, m=1.0, kbt=1.0, epochs=200, learning_rate=2e-2, seed=0))]
#[allow(clippy::too_many_arguments)]
fn dpd_calibrate<'py>(
    py: Python<'py>,
    traj: &PyTrajectory,
    h: f64,
    alpha: f64,
    sigma: f64,
    m: f64,
    kbt: f64,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let init = DpdParams { alpha, sigma, m, kbt };
    let cfg = DpdCalibConfig {
        epochs,
        learning_rate,
        seed,
        ..DpdCalibConfig::default()
    };
    let fit = py.detach(|| dpd::dpd_calibrate(&traj.inner, h, &init, &cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("alpha", fit.params.alpha)?;
    d.set_item("sigma", fit.params.sigma)?;
    d.set_item("m", fit.params.m)?;
    d.set_item("kbt", fit.params.kbt)?;
    d.set_item("val_nll", fit.best_val)?;
    Ok(d)
}

/// Structural checks of `model` on a lattice state; a list of dicts.
#[pyfunction]
#[pyo3(signature = (model, n=100, length=1.0, samples=20000, dt=5e-4, seed=0))]
fn verify<'py>(py: Python<'py>, model: &PyModel, n: usize, length: f64, samples: usize, dt: f64, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p = &model.inner;
    let b = SimBox::cube(p.dim(), length, BoundaryMode::Periodic, 0.0);
    let cl = Closures::new(p);
    let mut sys = datagen::lattice(n, &b, 0.01, seed);
    if p.arch.solid {
        sys.r0 = Some(sys.r.clone());
    }
    let opts = VerifyOptions {
        n_samples: samples,
        dt,
        seed,
        ..VerifyOptions::default()
    };
    let rep = py
        .detach(|| {
            sys.s = training::teacher_entropy(&sys, &cl)?;
            verify_structure(&sys, &cl, &opts)
        })
        .map_err(py_err)?;
    rep.checks
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item("kind", format!("{:?}", c.kind).to_lowercase())?;
            d.set_item("value", c.value)?;
            d.set_item("tolerance", c.tolerance)?;
            d.set_item("passed", c.passed)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "metriplex")]
fn metriplex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(generate_dpd, m)?)?;
    m.add_function(wrap_pyfunction!(generate_from_model, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(nll, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(vacf, m)?)?;
    m.add_function(wrap_pyfunction!(msd, m)?)?;
    m.add_function(wrap_pyfunction!(rdf, m)?)?;
    m.add_function(wrap_pyfunction!(d2min, m)?)?;
    m.add_function(wrap_pyfunction!(l2_rel_error, m)?)?;
    m.add_function(wrap_pyfunction!(dpd_calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
