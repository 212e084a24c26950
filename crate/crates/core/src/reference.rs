//! Independent oracles and the negative example.
//!
//! * [`hjb_upwind`]: explicit monotone finite differences for `u_t = ½u_xx + λ̄|u_x|`.
//! * [`ode_reference`]: classical RK4 for `u' = Bu` when `B` is bounded (compound Poisson).
//! * [`counterexample_scan`]: norms of `J_t f_ε` for the uncertain-shift family, which blow
//!   up as the regularization of an L^p pole is removed.

use serde::Serialize;

use crate::envelope::step_j;
use crate::error::{Error, Result};
use crate::funcspace::{bump, lp_norm, lp_norm_slice, Grid, GridFunction, PNorm};
use crate::kernels::{FamilyKind, KernelFamily, LambdaSet};

/// Discretization of the Hamiltonian `λ̄|u_x|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpwindForm {
    /// `λ̄·max(D⁺u, −D⁻u, 0)`
    Monotone,
    /// `λ̄·max(−D⁺u, D⁻u, 0)`, a sign-flipped stencil kept as a mutation fixture.
    SignFlipped,
}

/// Explicit Euler for `u_t = ½u_xx + λ̄|u_x|` with zero Dirichlet data.
///
/// The step is `dt = cfl / (1/dx² + λ̄/dx)`, which satisfies `dt ≤ cfl·min(dx², dx/λ̄)` and
/// keeps every update a convex combination of neighbours.
pub fn hjb_upwind(f0: &GridFunction, t: f64, lambda_bar: f64, cfl: f64) -> Result<GridFunction> {
    hjb_upwind_with(f0, t, lambda_bar, cfl, UpwindForm::Monotone)
}

pub fn hjb_upwind_with(
    f0: &GridFunction,
    t: f64,
    lambda_bar: f64,
    cfl: f64,
    form: UpwindForm,
) -> Result<GridFunction> {
    if !(t >= 0.0) {
        return Err(Error::usage(format!("time must be nonnegative, got {t}")));
    }
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::config(
            "hjb.cfl",
            format!("cfl must lie in (0, 1], got {cfl}"),
        ));
    }
    if !(lambda_bar >= 0.0) {
        return Err(Error::usage("lambda_bar must be nonnegative"));
    }
    let dx = f0.grid().dx();
    let dt_max = cfl / (1.0 / (dx * dx) + lambda_bar / dx);
    let steps = (t / dt_max).ceil() as usize;
    let mut u = f0.samples().to_vec();
    let n = u.len();
    if steps == 0 {
        return Ok(f0.clone());
    }
    let dt = t / steps as f64;
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            let dp = (right - u[i]) / dx;
            let dm = (u[i] - left) / dx;
            let diffusion = 0.5 * (right - 2.0 * u[i] + left) / (dx * dx);
            let hamiltonian = match form {
                UpwindForm::Monotone => dp.max(-dm).max(0.0),
                UpwindForm::SignFlipped => (-dp).max(dm).max(0.0),
            };
            next[i] = u[i] + dt * (diffusion + lambda_bar * hamiltonian);
        }
        next[0] = 0.0;
        next[n - 1] = 0.0;
        std::mem::swap(&mut u, &mut next);
    }
    GridFunction::new(*f0.grid(), u)
}

/// Classical four-stage Runge–Kutta for `u' = Bu`, `B = sup_λ A_λ`, on a compound Poisson
/// family. Uses `round(t/dt)` equal steps.
pub fn ode_reference(
    fam: &KernelFamily,
    f0: &GridFunction,
    t: f64,
    dt: f64,
) -> Result<GridFunction> {
    if !matches!(fam.kind(), FamilyKind::CompoundPoisson(_)) {
        return Err(Error::usage(
            "ode_reference needs a compound Poisson family (bounded generator)",
        ));
    }
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::usage("ode_reference needs dt > 0 and t >= 0"));
    }
    let steps = (t / dt).round().max(if t > 0.0 { 1.0 } else { 0.0 }) as usize;
    if steps == 0 {
        return Ok(f0.clone());
    }
    let h = t / steps as f64;
    let mut u = f0.clone();
    for _ in 0..steps {
        let k1 = fam.sup_generator(&u);
        let k2 = fam.sup_generator(&u.axpy(0.5 * h, &k1));
        let k3 = fam.sup_generator(&u.axpy(0.5 * h, &k2));
        let k4 = fam.sup_generator(&u.axpy(h, &k3));
        let incr = k1.axpy(2.0, &k2).axpy(2.0, &k3).add(&k4);
        u = u.axpy(h / 6.0, &incr);
    }
    Ok(u)
}

/// `f_ε(x) = min(ε^{−1/(2p)}, |x|^{−1/(2p)})·1_{[−1,1]}(x)`.
pub fn regularized_pole(grid: Grid, p: f64, eps: f64) -> GridFunction {
    let cap = eps.powf(-1.0 / (2.0 * p));
    GridFunction::from_fn(grid, |x| {
        if x.abs() <= 1.0 {
            if x.abs() <= eps {
                cap
            } else {
                x.abs().powf(-1.0 / (2.0 * p))
            }
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub epsilon: f64,
    /// `‖J_t f_ε‖_p`
    pub norm_lp: f64,
    /// `‖J_t g‖_p` for the bounded control input `g`
    pub control_lp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTable {
    pub p: f64,
    pub t: f64,
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// `‖J_t f_{ε_{k+1}}‖ / ‖J_t f_{ε_k}‖` for consecutive rows.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].norm_lp / w[0].norm_lp)
            .collect()
    }

    /// `epsilon,norm_lp`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,norm_lp\n");
        for r in &self.rows {
            out.push_str(&format!("{:.16e},{:.16e}\n", r.epsilon, r.norm_lp));
        }
        out
    }
}

/// Applies one step `J_t` of the uncertain-shift family (Λ = `lambdas`) to `f_ε` for each
/// ε and to a bounded control bump. Every ε must be at least `4·dx`.
pub fn counterexample_scan_with(
    grid: Grid,
    p: f64,
    t: f64,
    epsilons: &[f64],
    lambdas: LambdaSet,
) -> Result<ScanTable> {
    let norm = PNorm::new(p)?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::config(
            "counterexample.t",
            format!("t must lie in (0, 1), got {t}"),
        ));
    }
    if epsilons.is_empty() {
        return Err(Error::config(
            "counterexample.epsilons",
            "need at least one ε",
        ));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config(
            "counterexample.epsilons",
            "ε values must be strictly decreasing",
        ));
    }
    let eps_min = epsilons[epsilons.len() - 1];
    if !(eps_min >= 4.0 * grid.dx()) {
        let needed = ((grid.len() / (eps_min / 4.0)).ceil() as usize) + 1;
        return Err(Error::config(
            "counterexample.epsilons",
            format!(
                "ε = {eps_min} is not resolved by dx = {:.3e}; need dx <= ε/4, i.e. at least {needed} nodes on [{}, {}]",
                grid.dx(),
                grid.lower(),
                grid.upper()
            ),
        ));
    }
    let fam = KernelFamily::pure_shift(lambdas)?;
    let control = bump(grid, 0.0, 0.5, 1.0);
    let control_lp = lp_norm(&step_j(&fam, t, &control)?, norm);
    let rows = epsilons
        .iter()
        .map(|&eps| {
            let f = regularized_pole(grid, p, eps);
            let j = step_j(&fam, t, &f)?;
            Ok(ScanRow {
                epsilon: eps,
                norm_lp: lp_norm_slice(j.samples(), grid.dx(), norm),
                control_lp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanTable { p, t, rows })
}

/// [`counterexample_scan_with`] for Λ = [−1, 1].
pub fn counterexample_scan(grid: Grid, p: f64, t: f64, epsilons: &[f64]) -> Result<ScanTable> {
    counterexample_scan_with(grid, p, t, epsilons, LambdaSet::interval(-1.0, 1.0)?)
}

/// Distances between two functions over the interior window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub abs_err: f64,
    pub rel_err: f64,
    pub max_err: f64,
    pub margin: f64,
}

/// L^p and sup distances over `grid.interior(boundary_margin)`; `rel_err` is relative to `a`.
pub fn compare(
    a: &GridFunction,
    b: &GridFunction,
    norm: PNorm,
    boundary_margin: f64,
) -> Result<Comparison> {
    crate::funcspace::check_same_grid(a, b)?;
    let range = a.grid().interior(boundary_margin);
    let dx = a.grid().dx();
    let diff: Vec<f64> = a.samples()[range.clone()]
        .iter()
        .zip(&b.samples()[range.clone()])
        .map(|(x, y)| x - y)
        .collect();
    let abs_err = lp_norm_slice(&diff, dx, norm);
    let denom = lp_norm_slice(&a.samples()[range], dx, norm).max(1e-14);
    Ok(Comparison {
        abs_err,
        rel_err: abs_err / denom,
        max_err: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
        margin: boundary_margin,
    })
}
