//! Python bindings for `qmeasure`. Matrices cross the boundary as nested lists
//! of Python `complex` (row-major); real numbers are accepted where complex
//! entries are expected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qmeasure::dynamics::{self, LindbladSpec, MasterEquation, Method, TimeGrid};
use qmeasure::experiments::{self, ExperimentConfig, OutputFormat, ParamValue};
use qmeasure::linalg::ComplexMatrix;
use qmeasure::measurement::{self, KrausSet};
use qmeasure::weak::{self, CoinModelSpec, PrePostPair};
use qmeasure::{Error, C64};

type Rows = Vec<Vec<C64>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(msg) => PyIOError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Rows) -> PyResult<ComplexMatrix> {
    let n = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix rows must be non-empty and of equal length"));
    }
    Ok(ComplexMatrix::from_rows(&rows))
}

fn rows(m: &ComplexMatrix) -> Rows {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

fn method(name: &str) -> PyResult<Method> {
    name.parse::<Method>().map_err(to_py)
}

/// Normalized pure state given by its amplitudes.
#[pyclass(frozen, skip_from_py_object, module = "qmeasure_py")]
#[derive(Clone)]
struct PureState {
    inner: qmeasure::PureState,
}

#[pymethods]
impl PureState {
    #[new]
    fn new(amplitudes: Vec<C64>) -> PyResult<Self> {
        qmeasure::PureState::from_amplitudes(&amplitudes)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn amplitudes(&self) -> Vec<C64> {
        self.inner.amplitudes().entries().to_vec()
    }

    fn density(&self) -> DensityMatrix {
        DensityMatrix {
            inner: self.inner.density(),
        }
    }

    fn expectation(&self, obs: Rows) -> PyResult<f64> {
        self.inner.expectation(&matrix(obs)?).map_err(to_py)
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[pyclass(frozen, skip_from_py_object, module = "qmeasure_py")]
#[derive(Clone)]
struct DensityMatrix {
    inner: qmeasure::DensityMatrix,
}

#[pymethods]
impl DensityMatrix {
    #[new]
    fn new(rows: Rows) -> PyResult<Self> {
        qmeasure::DensityMatrix::new(matrix(rows)?)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn maximally_mixed(dim: usize) -> Self {
        Self {
            inner: qmeasure::DensityMatrix::maximally_mixed(dim),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Rows {
        rows(self.inner.matrix())
    }

    fn population(&self, n: usize) -> PyResult<f64> {
        if n >= self.inner.dim() {
            return Err(to_py(Error::IndexOutOfRange {
                index: n,
                len: self.inner.dim(),
            }));
        }
        Ok(self.inner.population(n))
    }

    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues()
    }

    fn expectation(&self, obs: Rows) -> PyResult<f64> {
        self.inner.expectation(&matrix(obs)?).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("DensityMatrix(dim={}, purity={:.6})", self.inner.dim(), self.inner.purity())
    }
}

/// Complete set of Kraus operators.
#[pyclass(frozen, module = "qmeasure_py")]
struct Kraus {
    inner: KrausSet,
}

#[pymethods]
impl Kraus {
    #[new]
    fn new(operators: Vec<Rows>) -> PyResult<Self> {
        let ops = operators.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        KrausSet::new(ops).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Kraus form of `Tr_E[U (rho_S x rho_E) U^dagger]` for system and
    /// environment dimensions `dims`.
    #[staticmethod]
    fn from_unitary(u: Rows, rho_env: &DensityMatrix, dims: (usize, usize)) -> PyResult<Self> {
        measurement::kraus_from_unitary(&matrix(u)?, &rho_env.inner, dims)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn operators(&self) -> Vec<Rows> {
        self.inner.operators().iter().map(rows).collect()
    }

    fn completeness_residual(&self) -> f64 {
        self.inner.completeness_residual()
    }

    fn apply(&self, rho: &DensityMatrix) -> PyResult<DensityMatrix> {
        measurement::apply_channel(&self.inner, &rho.inner)
            .map(|inner| DensityMatrix { inner })
            .map_err(to_py)
    }
}

/// Time-ordered states with named expectation series.
#[pyclass(frozen, module = "qmeasure_py")]
struct Trajectory {
    inner: dynamics::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn state(&self, index: usize) -> PyResult<DensityMatrix> {
        self.inner
            .states
            .get(index)
            .map(|rho| DensityMatrix { inner: rho.clone() })
            .ok_or_else(|| {
                to_py(Error::IndexOutOfRange {
                    index,
                    len: self.inner.len(),
                })
            })
    }

    fn observable(&self, name: &str) -> Option<Vec<f64>> {
        self.inner.observable(name).map(<[f64]>::to_vec)
    }

    fn observable_names(&self) -> Vec<String> {
        self.inner.observables.keys().cloned().collect()
    }
}

/// Integrates `d rho/dt = -i[H, rho] + rate * sum (L rho L^dagger - {L^dagger L, rho}/2)`
/// on `[t0, t1]` with step `dt`; `method` is `"rk4"` or `"superoperator-exponential"`.
#[pyfunction]
#[pyo3(signature = (hamiltonian, jump_ops, rate, rho0, t0, t1, dt, method = "rk4"))]
#[allow(clippy::too_many_arguments)]
fn lindblad_evolve(
    hamiltonian: Rows,
    jump_ops: Vec<Rows>,
    rate: f64,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    dt: f64,
    method: &str,
) -> PyResult<Trajectory> {
    let jumps = jump_ops.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    let spec = LindbladSpec::new(matrix(hamiltonian)?, jumps, rate).map_err(to_py)?;
    let grid = TimeGrid::new(t0, t1, dt).map_err(to_py)?;
    let method = self::method(method)?;
    dynamics::integrate(&MasterEquation::Lindblad(spec), &rho0.inner, &grid, method)
        .map(|inner| Trajectory { inner })
        .map_err(to_py)
}

/// Continuously monitored spin flip from `|+>` with a `"survival"` series.
#[pyfunction]
#[pyo3(signature = (omega0, lambda_, t1, dt, method = "superoperator-exponential"))]
fn zeno_continuous(omega0: f64, lambda_: f64, t1: f64, dt: f64, method: &str) -> PyResult<Trajectory> {
    let grid = TimeGrid::new(0.0, t1, dt).map_err(to_py)?;
    dynamics::zeno_continuous_with(omega0, lambda_, &grid, self::method(method)?)
        .map(|inner| Trajectory { inner })
        .map_err(to_py)
}

/// Survival probability of `psi0` under `n` equally spaced projective checks.
#[pyfunction]
fn zeno_projective(hamiltonian: Rows, psi0: &PureState, total_time: f64, n: u64) -> PyResult<f64> {
    dynamics::zeno_projective(&matrix(hamiltonian)?, &psi0.inner, total_time, n).map_err(to_py)
}

#[pyfunction]
fn max_equal_detection_probability() -> f64 {
    measurement::max_equal_detection_probability()
}

#[pyfunction]
fn no_detection_min_eigenvalue(p: f64) -> f64 {
    measurement::no_detection_min_eigenvalue(p)
}

/// `<post|obs^n|pre> / <post|pre>`
#[pyfunction]
#[pyo3(signature = (pre, post, obs, n = 1))]
fn weak_value(pre: &PureState, post: &PureState, obs: Rows, n: u32) -> PyResult<C64> {
    let pair = PrePostPair::new(pre.inner.clone(), post.inner.clone()).map_err(to_py)?;
    weak::weak_value(&pair, &matrix(obs)?, n).map_err(to_py)
}

/// The tilted spin pair used for the weak-value table: returns `(pre, post)`.
#[pyfunction]
fn tilted_spin_pair(theta: f64) -> (PureState, PureState) {
    let pair = PrePostPair::tilted_spin(theta);
    (
        PureState {
            inner: pair.pre().clone(),
        },
        PureState {
            inner: pair.post().clone(),
        },
    )
}

/// Classical coin weak value: `(analytic, monte_carlo_estimate, standard_error)`.
#[pyfunction]
#[pyo3(signature = (strength, delta, seed = 1, trials = 1_000_000))]
fn coin_weak_value(strength: f64, delta: f64, seed: u64, trials: usize) -> PyResult<(f64, f64, f64)> {
    let spec = CoinModelSpec::new(strength, delta, seed, trials).map_err(to_py)?;
    let analytic = weak::coin_weak_value_analytic(&spec).map_err(to_py)?;
    let (estimate, se) = weak::coin_weak_value_monte_carlo(&spec).map_err(to_py)?;
    Ok((analytic, estimate, se))
}

/// Expectation of `obs` in `rho` evaluated through the `A/B/C` operator decomposition.
#[pyfunction]
fn decomposed_expectation(obs: Rows, rho: &DensityMatrix) -> PyResult<f64> {
    measurement::observable_decomposition(&matrix(obs)?)
        .and_then(|d| d.expectation(&rho.inner))
        .map_err(to_py)
}

/// Quantum non-demolition residuals for the discrete von Neumann coupling of
/// dimension `dim`, meter ready in its first basis state.
#[pyfunction]
fn qnd_residuals<'py>(py: Python<'py>, obs: Rows, dim: usize) -> PyResult<Bound<'py, PyDict>> {
    let coupling = measurement::discrete_von_neumann_coupling(dim).map_err(to_py)?;
    let ready = qmeasure::ComplexVector::basis(dim, 0);
    let report = measurement::qnd_check(&matrix(obs)?, &coupling.evolution, &ready, Some(&coupling.hamiltonian))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("ready_state", report.ready_state_residual)?;
    out.set_item("commutator", report.commutator_residual)?;
    out.set_item("hamiltonian", report.hamiltonian_residual)?;
    out.set_item("all_pass", report.all_pass())?;
    Ok(out)
}

#[pyfunction]
fn list_experiments() -> String {
    experiments::describe_experiments()
}

/// Runs a CLI experiment. Parameter values are converted with `str()` and
/// parsed exactly as command-line flags. Returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (experiment, out, params = None, format = "csv", seed = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    out: PathBuf,
    params: Option<&Bound<'py, PyDict>>,
    format: &str,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let format = match format {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
    };
    let mut config = ExperimentConfig::new(experiment, out).with_format(format);
    if let Some(seed) = seed {
        config = config.with_seed(seed);
    }
    let mut given = BTreeMap::new();
    if let Some(params) = params {
        for (k, v) in params.iter() {
            given.insert(k.extract::<String>()?, v.str()?.to_string());
        }
    }
    for (name, value) in given {
        config = config.with_param(&name, ParamValue::Text(value));
    }
    let report = py.detach(|| experiments::run(&config)).map_err(to_py)?;

    let checks = report
        .checks
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", &c.name)?;
            d.set_item("expected", c.expected)?;
            d.set_item("actual", c.actual)?;
            d.set_item("tolerance", c.tolerance)?;
            d.set_item("pass", c.pass)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let result = PyDict::new(py);
    result.set_item("experiment", &report.experiment)?;
    result.set_item("all_passed", report.all_passed())?;
    result.set_item("checks", checks)?;
    result.set_item("artifacts", &report.artifacts)?;
    result.set_item("wall_time", report.wall_time)?;
    Ok(result)
}

#[pymodule]
fn qmeasure_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PureState>()?;
    m.add_class::<DensityMatrix>()?;
    m.add_class::<Kraus>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(lindblad_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(zeno_continuous, m)?)?;
    m.add_function(wrap_pyfunction!(zeno_projective, m)?)?;
    m.add_function(wrap_pyfunction!(max_equal_detection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(no_detection_min_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(weak_value, m)?)?;
    m.add_function(wrap_pyfunction!(tilted_spin_pair, m)?)?;
    m.add_function(wrap_pyfunction!(coin_weak_value, m)?)?;
    m.add_function(wrap_pyfunction!(decomposed_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(qnd_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
