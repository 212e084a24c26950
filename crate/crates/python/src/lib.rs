//! Python bindings for the `nisio` envelope library.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use nisio::envelope::{self, Partition};
use nisio::funcspace::{self, PNorm};
use nisio::kernels::FamilySpec;
use nisio::{reference, Error};

create_exception!(nisio_py, NoEnvelopeBoundError, PyValueError);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NoEnvelopeBound => NoEnvelopeBoundError::new_err(err.to_string()),
        Error::Io(_) => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn norm(p: f64) -> PyResult<PNorm> {
    PNorm::new(p).map_err(to_py)
}

/// Uniform grid on `[lower, upper]` with `n_nodes` nodes.
#[pyclass(frozen, skip_from_py_object, module = "nisio_py")]
#[derive(Clone, Copy)]
struct Grid(funcspace::Grid);

#[pymethods]
impl Grid {
    #[new]
    fn new(lower: f64, upper: f64, n_nodes: usize) -> PyResult<Self> {
        funcspace::Grid::new(lower, upper, n_nodes)
            .map(Grid)
            .map_err(to_py)
    }

    #[getter]
    fn lower(&self) -> f64 {
        self.0.lower()
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.0.upper()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.0.n_nodes()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    fn nodes(&self) -> Vec<f64> {
        self.0.nodes().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}, {}, {})",
            self.0.lower(),
            self.0.upper(),
            self.0.n_nodes()
        )
    }
}

/// Samples of a function at the nodes of a grid; zero outside the grid.
#[pyclass(frozen, skip_from_py_object, module = "nisio_py")]
#[derive(Clone)]
struct GridFunction(funcspace::GridFunction);

#[pymethods]
impl GridFunction {
    #[new]
    fn new(grid: &Grid, samples: Vec<f64>) -> PyResult<Self> {
        funcspace::GridFunction::new(grid.0, samples)
            .map(GridFunction)
            .map_err(to_py)
    }

    /// Smooth compactly supported bump.
    #[staticmethod]
    #[pyo3(signature = (grid, center=0.0, radius=1.0, height=1.0))]
    fn bump(grid: &Grid, center: f64, radius: f64, height: f64) -> Self {
        GridFunction(funcspace::bump(grid.0, center, radius, height))
    }

    #[staticmethod]
    #[pyo3(signature = (grid, center=0.0, width=1.0, height=1.0))]
    fn gaussian(grid: &Grid, center: f64, width: f64, height: f64) -> Self {
        GridFunction(funcspace::gaussian_profile(grid.0, center, width, height))
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid(*self.0.grid())
    }

    fn samples(&self) -> Vec<f64> {
        self.0.samples().to_vec()
    }

    fn lp_norm(&self, p: f64) -> PyResult<f64> {
        Ok(funcspace::lp_norm(&self.0, norm(p)?))
    }

    fn sup_norm(&self) -> f64 {
        self.0.sup_norm()
    }

    /// True when `self <= other + tol` at every node.
    #[pyo3(signature = (other, tol=0.0))]
    fn leq(&self, other: &GridFunction, tol: f64) -> PyResult<bool> {
        funcspace::pointwise_leq(&self.0, &other.0, tol)
            .map(|c| c.holds)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.samples().len()
    }
}

/// Family of linear semigroups indexed by an uncertainty set.
#[pyclass(frozen, module = "nisio_py")]
struct Family(nisio::kernels::KernelFamily);

#[pymethods]
impl Family {
    /// `kind` is `gaussian_drift`, `compound_poisson` or `pure_shift`; give exactly one of
    /// `lambda_interval` and `lambda_list`. `jump_atoms` holds `(offset, weight)` pairs.
    #[new]
    #[pyo3(signature = (kind, lambda_interval=None, lambda_list=None, jump_atoms=None))]
    fn new(
        kind: String,
        lambda_interval: Option<(f64, f64)>,
        lambda_list: Option<Vec<f64>>,
        jump_atoms: Option<Vec<(f64, f64)>>,
    ) -> PyResult<Self> {
        let spec = FamilySpec {
            family: kind,
            lambda_interval: lambda_interval.map(|(lo, hi)| [lo, hi]),
            lambda_list,
            jump_atoms: jump_atoms.map(|v| v.into_iter().map(|(y, w)| [y, w]).collect()),
        };
        spec.build().map(Family).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn has_upper_bound(&self) -> bool {
        self.0.has_upper_bound()
    }

    /// One member `S_λ(t) f`.
    fn apply_member(&self, lam: f64, t: f64, f: &GridFunction) -> PyResult<GridFunction> {
        self.0
            .apply_member(lam, t, &f.0)
            .map(GridFunction)
            .map_err(to_py)
    }

    /// One envelope step `J_h f = sup_λ S_λ(h) f`.
    fn step(&self, h: f64, f: &GridFunction) -> PyResult<GridFunction> {
        envelope::step_j(&self.0, h, &f.0)
            .map(GridFunction)
            .map_err(to_py)
    }

    /// `J_π f` for the partition with the given increasing times starting at 0.
    fn apply_partition(&self, times: Vec<f64>, f: &GridFunction) -> PyResult<GridFunction> {
        let pi = Partition::new(times).map_err(to_py)?;
        envelope::apply_partition(&self.0, &pi, &f.0)
            .map(GridFunction)
            .map_err(to_py)
    }

    /// Dominating function `C(h) f`; raises `NoEnvelopeBoundError` without a bound.
    #[pyo3(signature = (h, f, p=2.0))]
    fn upper_bound(&self, h: f64, f: &GridFunction, p: f64) -> PyResult<GridFunction> {
        self.0
            .upper_bound_c(h, &f.0, norm(p)?)
            .map(GridFunction)
            .map_err(to_py)
    }
}

#[pyclass(frozen, module = "nisio_py")]
struct EnvelopeResult(envelope::EnvelopeResult);

#[pymethods]
impl EnvelopeResult {
    #[getter]
    fn final_iterate(&self) -> GridFunction {
        GridFunction(self.0.final_iterate.clone())
    }

    #[getter]
    fn levels_used(&self) -> u32 {
        self.0.levels_used
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn upper_bound_margin(&self) -> Option<f64> {
        self.0.upper_bound_margin
    }

    #[getter]
    fn upper_bound_pass(&self) -> Option<bool> {
        self.0.upper_bound_pass
    }

    #[getter]
    fn boundary_leakage(&self) -> f64 {
        self.0.boundary_leakage
    }

    /// `‖T_n f − T_{n−1} f‖_p` per level.
    fn increments(&self) -> Vec<f64> {
        self.0.levels.iter().map(|r| r.increment_lp).collect()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }
}

/// Dyadic envelope iteration until the relative increment drops below `tol_rel`.
#[pyfunction]
#[pyo3(signature = (family, t, f, tol_rel=1e-4, n_max=10, p=2.0))]
fn nisio_dyadic(
    family: &Family,
    t: f64,
    f: &GridFunction,
    tol_rel: f64,
    n_max: u32,
    p: f64,
) -> PyResult<EnvelopeResult> {
    envelope::nisio_dyadic(&family.0, t, &f.0, tol_rel, n_max, norm(p)?)
        .map(EnvelopeResult)
        .map_err(to_py)
}

/// Explicit monotone upwind solution of `u_t = ½u_xx + λ̄|u_x|`.
#[pyfunction]
#[pyo3(signature = (f0, t, lambda_bar, cfl=0.5))]
fn hjb_upwind(f0: &GridFunction, t: f64, lambda_bar: f64, cfl: f64) -> PyResult<GridFunction> {
    reference::hjb_upwind(&f0.0, t, lambda_bar, cfl)
        .map(GridFunction)
        .map_err(to_py)
}

/// RK4 solution of the jump-family HJB equation.
#[pyfunction]
#[pyo3(signature = (family, f0, t, dt=1e-3))]
fn ode_reference(family: &Family, f0: &GridFunction, t: f64, dt: f64) -> PyResult<GridFunction> {
    reference::ode_reference(&family.0, &f0.0, t, dt)
        .map(GridFunction)
        .map_err(to_py)
}

/// Rows `(epsilon, norm_lp, control_lp)` of the uncertain-shift blow-up scan.
#[pyfunction]
fn counterexample_scan(
    grid: &Grid,
    p: f64,
    t: f64,
    epsilons: Vec<f64>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let table = reference::counterexample_scan(grid.0, p, t, &epsilons).map_err(to_py)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.epsilon, r.norm_lp, r.control_lp))
        .collect())
}

#[pymodule]
fn nisio_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<GridFunction>()?;
    m.add_class::<Family>()?;
    m.add_class::<EnvelopeResult>()?;
    m.add_function(wrap_pyfunction!(nisio_dyadic, m)?)?;
    m.add_function(wrap_pyfunction!(hjb_upwind, m)?)?;
    m.add_function(wrap_pyfunction!(ode_reference, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_scan, m)?)?;
    m.add(
        "NoEnvelopeBoundError",
        m.py().get_type::<NoEnvelopeBoundError>(),
    )?;
    Ok(())
}
