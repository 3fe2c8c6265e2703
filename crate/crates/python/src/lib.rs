//! Python bindings: catalog fields, abstract components, pressures, profiles,
//! the discrete eigensolver, the rate function and the Feynman–Kac estimator.

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use semiclassical::eigensolver::{interpolate, refined_argmax, solve_field, tube_statistics};
use semiclassical::model::{
    benchmark_field, build_component, Anchor, FieldModel, FieldParams, Killing, RecurrentComponent, TrigSeries,
};
use semiclassical::pressure::{build_lyapunov_scalar, global_pressure, Convention};
use semiclassical::profiles::{blowup_profile, cycle_density, torus_density, DEFAULT_TRUNCATION};
use semiclassical::ratefn::{action_minimize, extremal_shoot, feynman_kac_mc, McOptions};
use semiclassical::Error;

create_exception!(semiclassical_py, SemiclassicalError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        other => SemiclassicalError::new_err(other.to_string()),
    }
}

/// `(m1, m2, cos, sin)` tuples to a series with the given mean.
fn series(mean: f64, terms: Option<Vec<(i32, i32, f64, f64)>>) -> TrigSeries {
    terms
        .unwrap_or_default()
        .into_iter()
        .fold(TrigSeries::constant(mean), |s, (m1, m2, c, si)| s.with_term([m1, m2], c, si))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn convention(name: &str) -> PyResult<Convention> {
    match name {
        "stable" => Ok(Convention::Stable),
        "unstable" => Ok(Convention::Unstable),
        _ => Err(PyValueError::new_err(format!("unknown convention `{name}`"))),
    }
}

/// A catalog field on the circle or the torus.
#[pyclass(frozen, module = "semiclassical_py")]
struct Field {
    inner: FieldModel,
}

#[pymethods]
impl Field {
    #[new]
    #[pyo3(signature = (name, pi = 4.0, k = None, killing_mean = 0.0, killing_terms = None))]
    fn new(
        name: &str,
        pi: f64,
        k: Option<(f64, f64)>,
        killing_mean: f64,
        killing_terms: Option<Vec<(i32, i32, f64, f64)>>,
    ) -> PyResult<Self> {
        let mut params = FieldParams { pi, killing: series(killing_mean, killing_terms), ..Default::default() };
        if let Some((a, b)) = k {
            params.k = [a, b];
        }
        Ok(Self { inner: benchmark_field(name, &params).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn drift(&self, x: f64, y: f64) -> (f64, f64) {
        let d = self.inner.drift([x, y]);
        (d[0], d[1])
    }

    fn lyapunov(&self, x: f64, y: f64) -> f64 {
        self.inner.lyapunov([x, y])
    }

    fn psi(&self, x: f64, y: f64) -> f64 {
        self.inner.psi([x, y])
    }

    fn killing(&self, x: f64, y: f64) -> f64 {
        self.inner.killing_at([x, y])
    }

    fn components(&self) -> Vec<Component> {
        self.inner.components.iter().map(|c| Component { inner: c.clone() }).collect()
    }

    fn distance_to_recurrent_set(&self, x: f64, y: f64) -> f64 {
        self.inner.distance_to_recurrent_set([x, y])
    }

    fn __repr__(&self) -> String {
        format!("Field({:?}, pi={})", self.inner.name, self.inner.pi)
    }
}

/// A hyperbolic recurrent component: point, cycle or torus.
#[pyclass(frozen, from_py_object, module = "semiclassical_py")]
#[derive(Clone)]
struct Component {
    inner: RecurrentComponent,
}

#[pymethods]
impl Component {
    #[staticmethod]
    fn point(label: &str, b: Vec<Vec<f64>>, c: f64) -> PyResult<Self> {
        let inner = build_component(label, Killing::Point(c), matrix(&b)?, Anchor::Abstract).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (label, b, mean, terms = None, period = 1.0))]
    fn cycle(label: &str, b: Vec<Vec<f64>>, mean: f64, terms: Option<Vec<(i32, i32, f64, f64)>>, period: f64) -> PyResult<Self> {
        let killing = Killing::Cycle { period, c: series(mean, terms) };
        let inner = build_component(label, killing, matrix(&b)?, Anchor::Abstract).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (label, k, mean, terms = None))]
    fn torus(label: &str, k: (f64, f64), mean: f64, terms: Option<Vec<(i32, i32, f64, f64)>>) -> PyResult<Self> {
        let killing = Killing::Torus { k: [k.0, k.1], c: series(mean, terms) };
        let inner = build_component(label, killing, DMatrix::zeros(0, 0), Anchor::Everywhere).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn stable_dim(&self) -> usize {
        self.inner.splitting.stable_dim()
    }

    /// Blow-up profile data for scalar weight `pi`.
    #[pyo3(signature = (pi = 4.0, n_long = 256))]
    fn profile<'py>(&self, py: Python<'py>, pi: f64, n_long: usize) -> PyResult<Bound<'py, PyDict>> {
        let lyap = build_lyapunov_scalar(&self.inner.splitting, pi).map_err(to_py)?;
        let p = blowup_profile(&self.inner, &lyap, n_long).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("s", rows(&p.s))?;
        d.set_item("stable_dim", p.stable_dim)?;
        d.set_item("eigenvalue", p.lambda_profile)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Component({:?}, {})", self.inner.label, self.inner.kind().as_str())
    }
}

/// Component pressures, the global value, and the support-eligible labels.
#[pyfunction]
#[pyo3(signature = (components, convention = "stable"))]
fn pressure<'py>(py: Python<'py>, components: Vec<Component>, convention: &str) -> PyResult<Bound<'py, PyDict>> {
    let comps: Vec<RecurrentComponent> = components.into_iter().map(|c| c.inner).collect();
    let r = global_pressure(&comps, self::convention(convention)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("tp", r.tp)?;
    d.set_item("tp_stable", r.tp_stable)?;
    d.set_item("tp_unstable", r.tp_unstable)?;
    let label = |i: &usize| comps[*i].label.clone();
    d.set_item("argmax", r.argmax.iter().map(label).collect::<Vec<_>>())?;
    d.set_item("eligible", r.eligible.iter().map(label).collect::<Vec<_>>())?;
    let per: Vec<(String, f64, f64)> = r.components.iter().map(|c| (c.label.clone(), c.stable, c.unstable)).collect();
    d.set_item("components", per)?;
    Ok(d)
}

/// Longitudinal density along a cycle from uniform samples of `c`.
#[pyfunction]
#[pyo3(signature = (c, period = 1.0))]
fn cycle_density_samples(c: Vec<f64>, period: f64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let d = cycle_density(&c, period).map_err(to_py)?;
    Ok((d.theta, d.f, d.residual))
}

/// Transport density on the torus; returns `(f row-major n×n, mean, residual)`.
#[pyfunction]
#[pyo3(signature = (k, mean, terms = None, n = 64))]
fn torus_density_grid(k: (f64, f64), mean: f64, terms: Option<Vec<(i32, i32, f64, f64)>>, n: usize) -> PyResult<(Vec<f64>, f64, f64)> {
    let d = torus_density(&series(mean, terms), [k.0, k.1], DEFAULT_TRUNCATION, n).map_err(to_py)?;
    Ok((d.f, d.mu2, d.residual))
}

/// Controllability Gramian `∫₀^∞ e^{tB} e^{tBᵀ} dt` of a stable matrix.
#[pyfunction]
fn infinite_gramian(b: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&semiclassical::speclin::infinite_gramian(&matrix(&b)?).map_err(to_py)?))
}

/// Principal eigenpair on an `n` (or `n×n`) periodic grid.
#[pyfunction]
fn eigen<'py>(py: Python<'py>, field: &Field, eps: f64, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let f = &field.inner;
    let run = py
        .detach(|| solve_field(f, eps, n, &Default::default(), &Default::default()))
        .map_err(to_py)?;
    let grid = run.op.grid;
    let (masses, gammas) = tube_statistics(f, &run.measure, grid, eps);
    let argmax = refined_argmax(&run.measure, grid);
    let d = PyDict::new(py);
    d.set_item("lambda", run.pair.lambda)?;
    d.set_item("residual", run.pair.residual)?;
    d.set_item("u", run.pair.u)?;
    d.set_item("v_rel", run.measure.v_rel)?;
    d.set_item("argmax", (argmax[0], argmax[1]))?;
    d.set_item("labels", f.components.iter().map(|c| c.label.clone()).collect::<Vec<_>>())?;
    d.set_item("tube_masses", masses)?;
    d.set_item("gammas", gammas)?;
    Ok(d)
}

/// Rate function `I_T(x)` by extremal shooting and by direct minimization.
#[pyfunction]
#[pyo3(signature = (field, x, t, segments = 256))]
fn rate(py: Python<'_>, field: &Field, x: (f64, f64), t: f64, segments: usize) -> PyResult<(f64, f64)> {
    let f = &field.inner;
    py.detach(|| {
        let s = extremal_shoot(f, [x.0, x.1], t, &Default::default())?;
        let d = action_minimize(f, [x.0, x.1], t, segments)?;
        Ok((s.action, d.action))
    })
    .map_err(to_py)
}

/// Feynman–Kac estimate of `e^{−λt} v(x)` next to the eigensolver value.
/// Returns `(estimate, standard error, eigensolver value)`.
#[pyfunction]
#[pyo3(signature = (field, x, t, eps, n_paths = 100_000, seed = 0, grid = 512))]
#[allow(clippy::too_many_arguments)]
fn feynman_kac(
    py: Python<'_>,
    field: &Field,
    x: (f64, f64),
    t: f64,
    eps: f64,
    n_paths: usize,
    seed: u64,
    grid: usize,
) -> PyResult<(f64, f64, f64)> {
    let f = &field.inner;
    py.detach(|| {
        let run = solve_field(f, eps, grid, &Default::default(), &Default::default())?;
        let g = run.op.grid;
        let v = |p: [f64; 2]| interpolate(g, &run.measure.v_rel, p);
        let opts = McOptions { n_paths, seed, ..Default::default() };
        let est = feynman_kac_mc(f, [x.0, x.1], t, eps, &v, &opts)?;
        Ok((est.mean, est.std_error, (-run.pair.lambda * t).exp() * v([x.0, x.1])))
    })
    .map_err(to_py)
}

/// Run the command-line tool in-process; returns its exit status.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("semiclassical".to_string()).chain(args).collect();
    py.detach(|| semiclassical::cli::run(argv))
}

#[pymodule]
fn semiclassical_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SemiclassicalError", m.py().get_type::<SemiclassicalError>())?;
    m.add("CATALOG", semiclassical::model::CATALOG.to_vec())?;
    m.add_class::<Field>()?;
    m.add_class::<Component>()?;
    m.add_function(wrap_pyfunction!(pressure, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_density_samples, m)?)?;
    m.add_function(wrap_pyfunction!(torus_density_grid, m)?)?;
    m.add_function(wrap_pyfunction!(infinite_gramian, m)?)?;
    m.add_function(wrap_pyfunction!(eigen, m)?)?;
    m.add_function(wrap_pyfunction!(rate, m)?)?;
    m.add_function(wrap_pyfunction!(feynman_kac, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
