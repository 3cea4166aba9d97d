//! Python module `nll`. Result records come back as plain dicts.

use nll_core as core;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "QuadratureConfig", from_py_object)]
#[derive(Clone, Copy)]
struct PyConfig(core::QuadratureConfig);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (tol = None, r_in = None, r_out = None, depth = None, angular = None))]
    fn new(
        tol: Option<f64>,
        r_in: Option<f64>,
        r_out: Option<f64>,
        depth: Option<u32>,
        angular: Option<usize>,
    ) -> PyResult<Self> {
        let mut c = core::QuadratureConfig::default();
        c.tol = tol.unwrap_or(c.tol);
        c.r_in = r_in.unwrap_or(c.r_in);
        c.r_out = r_out.unwrap_or(c.r_out);
        c.depth = depth.unwrap_or(c.depth);
        c.angular = angular.unwrap_or(c.angular);
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[getter]
    fn tol(&self) -> f64 {
        self.0.tol
    }

    #[getter]
    fn r_in(&self) -> f64 {
        self.0.r_in
    }

    #[getter]
    fn r_out(&self) -> f64 {
        self.0.r_out
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.0.depth
    }

    #[getter]
    fn angular(&self) -> usize {
        self.0.angular
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!(
            "QuadratureConfig(tol={:e}, r_in={:e}, r_out={:e}, depth={}, angular={})",
            c.tol, c.r_in, c.r_out, c.depth, c.angular
        )
    }
}

fn config(c: Option<PyConfig>) -> core::QuadratureConfig {
    c.map_or_else(core::QuadratureConfig::default, |c| c.0)
}

#[pyclass(name = "Kernel", frozen)]
struct PyKernel(core::Kernel);

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn fractional(n: usize, s: f64) -> PyResult<Self> {
        core::make_fractional_kernel(n, s).map(Self).map_err(err)
    }

    /// `profile(direction) -> float`, even and within `[lam, big_lam]`.
    #[staticmethod]
    fn anisotropic(n: usize, s: f64, lam: f64, big_lam: f64, profile: Py<PyAny>) -> PyResult<Self> {
        let params = core::KernelParams::new(n, s, lam, big_lam).map_err(err)?;
        let a = move |d: &[f64]| {
            Python::attach(|py| {
                profile
                    .call1(py, (d.to_vec(),))
                    .and_then(|v| v.extract::<f64>(py))
                    .unwrap_or(f64::NAN)
            })
        };
        core::make_anisotropic_kernel(params, a)
            .map(Self)
            .map_err(err)
    }

    /// Piecewise-linear angular profile from `(angle, value)` rows.
    #[staticmethod]
    fn table(n: usize, s: f64, lam: f64, big_lam: f64, rows: Vec<(f64, f64)>) -> PyResult<Self> {
        let params = core::KernelParams::new(n, s, lam, big_lam).map_err(err)?;
        core::make_table_kernel(params, &rows)
            .map(Self)
            .map_err(err)
    }

    fn with_lower_bound(&self, lam: f64) -> PyResult<Self> {
        self.0.clone().with_lower_bound(lam).map(Self).map_err(err)
    }

    fn __call__(&self, z: Vec<f64>) -> PyResult<f64> {
        if z.len() != self.0.dimension() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(self.0.eval(&z))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.dimension()
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.params().s
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Py<PyAny>> {
        to_py(py, self.0.params())
    }

    fn validate<'py>(&self, py: Python<'py>, samples: Option<usize>) -> PyResult<Py<PyAny>> {
        to_py(py, &core::validate_kernel(&self.0, samples.unwrap_or(256)))
    }

    fn __repr__(&self) -> String {
        format!("Kernel({})", self.0.label())
    }
}

#[pyclass(name = "Field", frozen)]
struct PyField(core::ScalarField);

#[pymethods]
impl PyField {
    /// Named field, e.g. `Field.named(2, 0.5, kind="bump", scale=1.0)`.
    #[staticmethod]
    #[pyo3(signature = (n, s, **spec))]
    fn named(py: Python<'_>, n: usize, s: f64, spec: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let text: String = match spec {
            Some(d) => py.import("json")?.call_method1("dumps", (d,))?.extract()?,
            None => return Err(PyValueError::new_err("missing kind")),
        };
        let spec: core::FieldSpec =
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        spec.build(n, s).map(Self).map_err(err)
    }

    #[staticmethod]
    fn bump(n: usize) -> PyResult<Self> {
        core::make_bump(n).map(Self).map_err(err)
    }

    #[staticmethod]
    fn bubble(n: usize, s: f64) -> PyResult<Self> {
        core::bubble(n, s).map(Self).map_err(err)
    }

    #[staticmethod]
    fn power(n: usize, beta: f64, c: f64) -> Self {
        Self(core::power_decay(n, beta, c))
    }

    #[staticmethod]
    fn sharpness(n: usize, s: f64, q: f64, c: f64) -> PyResult<Self> {
        core::SharpnessProfile::new(n, s, q, c)
            .map(|p| Self(p.field().clone()))
            .map_err(err)
    }

    /// Wraps `f(x: list[float]) -> float`. The operator needs to bound the exterior:
    /// declare `decay=(beta, constant)` for `|u(x)| <= constant (1 + |x|)^-beta`, or
    /// `support=(center, radius)`.
    #[staticmethod]
    #[pyo3(signature = (n, f, label = "python", decay = None, support = None))]
    fn from_callable(
        n: usize,
        f: Py<PyAny>,
        label: &str,
        decay: Option<(f64, f64)>,
        support: Option<(Vec<f64>, f64)>,
    ) -> Self {
        let mut u = core::ScalarField::new(n, label, move |x: &[f64]| {
            Python::attach(|py| {
                f.call1(py, (x.to_vec(),))
                    .and_then(|v| v.extract::<f64>(py))
                    .unwrap_or(f64::NAN)
            })
        });
        if let Some((beta, c)) = decay {
            u = u.with_decay(beta, c);
        }
        if let Some((center, radius)) = support {
            u = u.with_support(center, radius);
        }
        Self(u)
    }

    fn shifted(&self, center: Vec<f64>) -> Self {
        Self(self.0.shifted(&center))
    }

    fn dilated(&self, scale: f64) -> Self {
        Self(self.0.dilated(scale))
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.0.dimension() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        self.0.try_eval(&x).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.dimension()
    }

    fn __repr__(&self) -> String {
        format!("Field({})", self.0.label())
    }
}

/// `L_K u(x)` as `{value, error_estimate, tail_bound, evaluations, best_effort}`.
#[pyfunction]
#[pyo3(signature = (u, k, x, config = None))]
fn pv_integrate(
    py: Python<'_>,
    u: &PyField,
    k: &PyKernel,
    x: Vec<f64>,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let r = py
        .detach(|| core::pv_integrate(&u.0, &k.0, &x, &cfg))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (u, k, points, config = None))]
fn apply_operator(
    py: Python<'_>,
    u: &PyField,
    k: &PyKernel,
    points: Vec<Vec<f64>>,
    config: Option<PyConfig>,
) -> PyResult<Vec<f64>> {
    let cfg = self::config(config);
    let r = py
        .detach(|| core::apply_operator(&k.0, &u.0, &points, &cfg))
        .map_err(err)?;
    Ok(r.iter().map(|q| q.value).collect())
}

#[pyfunction]
#[pyo3(signature = (k, scales, config = None))]
fn verify_cutoff_bound(
    py: Python<'_>,
    k: &PyKernel,
    scales: Vec<f64>,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let family = core::CutoffFamily::new(k.0.dimension(), 1.0).map_err(err)?;
    let r = py
        .detach(|| core::verify_cutoff_bound(&k.0, &family, &scales, &cfg))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k, f, g, domain_radius, config = None))]
fn pairing(
    py: Python<'_>,
    k: &PyKernel,
    f: &PyField,
    g: &PyField,
    domain_radius: f64,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let r = py
        .detach(|| core::pairing(&k.0, &f.0, &g.0, &cfg, domain_radius))
        .map_err(err)?;
    to_py(py, &r)
}

/// `S(R) = int_{B_R} u^q`.
#[pyfunction]
#[pyo3(signature = (u, q, radius, angular = 64))]
fn mass(py: Python<'_>, u: &PyField, q: f64, radius: f64, angular: usize) -> PyResult<f64> {
    py.detach(|| core::mass(&u.0, q, radius, angular))
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (u, q, k, radii, k_max = 40))]
fn verify_dyadic_inequality(
    py: Python<'_>,
    u: &PyField,
    q: f64,
    k: &PyKernel,
    radii: Vec<f64>,
    k_max: u32,
) -> PyResult<Py<PyAny>> {
    let params = *k.0.params();
    let r = py
        .detach(|| core::verify_dyadic_inequality(&u.0, q, &params, &radii, k_max))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn classify(py: Python<'_>, n: usize, s: f64, q: f64) -> PyResult<Py<PyAny>> {
    let input = core::RegimeInput::new(n, s, q).map_err(err)?;
    to_py(py, &core::classify(&input).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (n, s, q, c0 = 1.0, cbar = 1.0, max_steps = 200))]
fn iterate_exponents(
    py: Python<'_>,
    n: usize,
    s: f64,
    q: f64,
    c0: f64,
    cbar: f64,
    max_steps: usize,
) -> PyResult<Py<PyAny>> {
    let input = core::RegimeInput::new(n, s, q).map_err(err)?;
    to_py(
        py,
        &core::iterate_exponents(&input, c0, cbar, max_steps).map_err(err)?,
    )
}

/// `gamma_{m+1} = a + gamma_m / q` with no regime check on `(a, q)`.
#[pyfunction]
#[pyo3(signature = (a, q, gamma0, c0 = 1.0, cbar = 1.0, steps = 200))]
fn iterate_recurrence(
    py: Python<'_>,
    a: f64,
    q: f64,
    gamma0: f64,
    c0: f64,
    cbar: f64,
    steps: usize,
) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &core::iterate_recurrence(a, q, gamma0, c0, cbar, steps).map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (u, k, q, rho, config = None))]
fn critical_scan(
    py: Python<'_>,
    u: &PyField,
    k: &PyKernel,
    q: f64,
    rho: f64,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let r = py
        .detach(|| core::critical_scan(&u.0, &k.0, q, rho, &cfg))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k, q, radii, safety = 0.5, config = None))]
fn calibrate_c(
    py: Python<'_>,
    k: &PyKernel,
    q: f64,
    radii: Vec<f64>,
    safety: f64,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let template =
        core::SharpnessProfile::new(k.0.dimension(), k.0.params().s, q, 1.0).map_err(err)?;
    let r = py
        .detach(|| core::calibrate_c(&template, &k.0, &radii, safety, &cfg))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k, q, c, radii, config = None))]
fn pointwise_margin(
    py: Python<'_>,
    k: &PyKernel,
    q: f64,
    c: f64,
    radii: Vec<f64>,
    config: Option<PyConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config);
    let profile =
        core::SharpnessProfile::new(k.0.dimension(), k.0.params().s, q, c).map_err(err)?;
    let r = py
        .detach(|| core::pointwise_margin(&profile, &k.0, &radii, &cfg))
        .map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn nll(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(pv_integrate, m)?)?;
    m.add_function(wrap_pyfunction!(apply_operator, m)?)?;
    m.add_function(wrap_pyfunction!(verify_cutoff_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pairing, m)?)?;
    m.add_function(wrap_pyfunction!(mass, m)?)?;
    m.add_function(wrap_pyfunction!(verify_dyadic_inequality, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(critical_scan, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_c, m)?)?;
    m.add_function(wrap_pyfunction!(pointwise_margin, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
