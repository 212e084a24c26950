//! Difference-quotient calculus for the computed envelope `S̃`.
//!
//! Generator quotients `(S̃(h)f − f)/h`, one-sided directional derivatives
//! `S̃′±(t,x)y`, the derivative and integral identities along `Bf`, and sampled
//! Lipschitz/growth probes.
//!
//! Every probe that compares `S̃(t)` at nearby arguments uses one fixed dyadic level, so
//! the operator being differentiated is a single convex monotone map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope::{dyadic_iterate, nisio_dyadic, DEFAULT_N_MAX, DEFAULT_TOL_REL};
use crate::error::{Error, Result};
use crate::funcspace::{bump, lp_norm, lp_norm_window, pointwise_leq, Grid, GridFunction, PNorm};
use crate::kernels::{heat_convolve, KernelFamily};

pub const DEFAULT_H0: f64 = 0.1;
pub const DEFAULT_HALVINGS: usize = 6;
pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_IDENTITY_TOL: f64 = 5e-2;
/// Seed for all sampled probes unless the caller supplies one.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// How `S̃(t)` is resolved in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Resolution {
    /// Dyadic refinement until the relative increment is below `tol_rel`.
    Adaptive { tol_rel: f64, n_max: u32 },
    /// Fixed number `2^level` of equal steps.
    Level { level: u32 },
    /// Smallest dyadic level whose step does not exceed `max_step`.
    MaxStep { max_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub resolution: Resolution,
    pub norm: PNorm,
    /// Fraction of nodes dropped on each side in generator-space comparisons.
    pub boundary_margin: f64,
}

impl EnvelopeParams {
    pub fn new(resolution: Resolution, norm: PNorm) -> Self {
        EnvelopeParams {
            resolution,
            norm,
            boundary_margin: DEFAULT_MARGIN,
        }
    }

    pub fn adaptive(norm: PNorm) -> Self {
        Self::new(
            Resolution::Adaptive {
                tol_rel: DEFAULT_TOL_REL,
                n_max: DEFAULT_N_MAX,
            },
            norm,
        )
    }

    /// Dyadic level used at horizon `t`; `None` for adaptive resolution.
    pub fn level_for(&self, t: f64) -> Option<u32> {
        match self.resolution {
            Resolution::Adaptive { .. } => None,
            Resolution::Level { level } => Some(level),
            Resolution::MaxStep { max_step } => Some(level_for_step(t, max_step)),
        }
    }

    /// `S̃(t) f`.
    pub fn evolve(&self, fam: &KernelFamily, t: f64, f: &GridFunction) -> Result<GridFunction> {
        self.evolve_min_level(fam, t, f, 0)
    }

    pub fn evolve_min_level(
        &self,
        fam: &KernelFamily,
        t: f64,
        f: &GridFunction,
        min_level: u32,
    ) -> Result<GridFunction> {
        if t == 0.0 {
            return Ok(f.clone());
        }
        match self.resolution {
            Resolution::Adaptive { tol_rel, n_max } => {
                let r = nisio_dyadic(fam, t, f, tol_rel, n_max.max(min_level), self.norm)?;
                if r.levels_used >= min_level {
                    Ok(r.final_iterate)
                } else {
                    dyadic_iterate(fam, t, min_level, f)
                }
            }
            _ => {
                let level = self.level_for(t).expect("fixed resolution").max(min_level);
                dyadic_iterate(fam, t, level, f)
            }
        }
    }

    /// Freezes adaptive resolution to the level it selects for `(t, f)`, so the same
    /// operator can be applied to perturbed arguments.
    pub fn frozen_at(
        &self,
        fam: &KernelFamily,
        t: f64,
        f: &GridFunction,
    ) -> Result<EnvelopeParams> {
        match self.resolution {
            Resolution::Adaptive { tol_rel, n_max } if t > 0.0 => {
                let r = nisio_dyadic(fam, t, f, tol_rel, n_max, self.norm)?;
                Ok(EnvelopeParams {
                    resolution: Resolution::Level {
                        level: r.levels_used,
                    },
                    ..*self
                })
            }
            _ => Ok(*self),
        }
    }

    fn window_norm(&self, f: &GridFunction) -> f64 {
        lp_norm_window(f, self.norm, self.boundary_margin)
    }
}

fn level_for_step(t: f64, max_step: f64) -> u32 {
    let mut level = 0;
    while t / (1u64 << level) as f64 > max_step && level < 40 {
        level += 1;
    }
    level
}

/// Generator quotients over a halving schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEstimate {
    pub h_schedule: Vec<f64>,
    pub quotients: Vec<GridFunction>,
    /// `‖q_h − Bf‖_p` over the interior window.
    pub errors_vs_b: Vec<f64>,
    /// First-order Richardson extrapolation `2 q_{h/2} − q_h` from the two smallest `h`.
    pub extrapolated: GridFunction,
    pub sup_generator: GridFunction,
}

impl GeneratorEstimate {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors_vs_b.windows(2).all(|w| w[1] < w[0])
    }

    /// `h,error_lp`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,error_lp\n");
        for (h, e) in self.h_schedule.iter().zip(&self.errors_vs_b) {
            out.push_str(&format!("{h:.16e},{e:.16e}\n"));
        }
        out
    }
}

/// `(S̃(h)f − f)/h` for `h = h0·2^{−k}`, `k = 0..=k_steps`, each `S̃(h)` resolved with at
/// least four steps.
pub fn generator_fd(
    fam: &KernelFamily,
    f: &GridFunction,
    h0: f64,
    k_steps: usize,
    params: &EnvelopeParams,
) -> Result<GeneratorEstimate> {
    if !(h0 > 0.0) {
        return Err(Error::usage("h0 must be positive"));
    }
    let b = fam.sup_generator(f);
    let h_schedule: Vec<f64> = (0..=k_steps).map(|k| h0 / (1u64 << k) as f64).collect();
    let quotients = h_schedule
        .iter()
        .map(|&h| {
            let s = params.evolve_min_level(fam, h, f, 2)?;
            Ok(s.sub(f).scale(1.0 / h))
        })
        .collect::<Result<Vec<_>>>()?;
    let errors_vs_b = quotients
        .iter()
        .map(|q| params.window_norm(&q.sub(&b)))
        .collect();
    let extrapolated = match quotients.len() {
        1 => quotients[0].clone(),
        n => quotients[n - 1].scale(2.0).sub(&quotients[n - 2]),
    };
    Ok(GeneratorEstimate {
        h_schedule,
        quotients,
        errors_vs_b,
        extrapolated,
        sup_generator: b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

/// One-sided directional derivatives of `S̃(t)` at `x` in direction `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeProbe {
    pub t: f64,
    pub x: GridFunction,
    pub y: GridFunction,
    pub h_schedule: Vec<f64>,
    /// `(S̃(t)(x + hy) − S̃(t)x)/h` per `h`.
    pub plus_quotients: Vec<GridFunction>,
    /// `(S̃(t)x − S̃(t)(x − hy))/h` per `h`.
    pub minus_quotients: Vec<GridFunction>,
    pub plus: GridFunction,
    pub minus: GridFunction,
    /// `‖plus − minus‖_p`
    pub gap: f64,
    /// Plus quotients non-increasing and minus quotients non-decreasing as `h ↓ 0`.
    pub quotient_monotone: bool,
    /// Largest monotonicity violation observed.
    pub monotonicity_violation: f64,
    /// `max(minus − plus)`; nonpositive up to rounding.
    pub ordering_violation: f64,
}

impl DerivativeProbe {
    pub fn estimate(&self, side: Side) -> &GridFunction {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

pub const QUOTIENT_TOL: f64 = 1e-9;

pub fn directional_derivative(
    fam: &KernelFamily,
    t: f64,
    x: &GridFunction,
    y: &GridFunction,
    h_schedule: &[f64],
    params: &EnvelopeParams,
) -> Result<DerivativeProbe> {
    if !(t >= 0.0) {
        return Err(Error::usage("t must be nonnegative"));
    }
    if h_schedule.is_empty()
        || h_schedule.windows(2).any(|w| !(w[1] < w[0]))
        || h_schedule[0] <= 0.0
    {
        return Err(Error::usage(
            "h_schedule must be positive and strictly decreasing",
        ));
    }
    let frozen = params.frozen_at(fam, t, x)?;
    let base = frozen.evolve(fam, t, x)?;
    let mut plus_quotients = Vec::with_capacity(h_schedule.len());
    let mut minus_quotients = Vec::with_capacity(h_schedule.len());
    for &h in h_schedule {
        let up = frozen.evolve(fam, t, &x.axpy(h, y))?;
        let down = frozen.evolve(fam, t, &x.axpy(-h, y))?;
        plus_quotients.push(up.sub(&base).scale(1.0 / h));
        minus_quotients.push(base.sub(&down).scale(1.0 / h));
    }
    let mut violation = f64::NEG_INFINITY;
    for k in 1..h_schedule.len() {
        // smaller h: plus may only go down, minus may only go up
        violation =
            violation.max(pointwise_leq(&plus_quotients[k], &plus_quotients[k - 1], 0.0)?.worst);
        violation =
            violation.max(pointwise_leq(&minus_quotients[k - 1], &minus_quotients[k], 0.0)?.worst);
    }
    let (plus, minus) = if t == 0.0 {
        (y.clone(), y.clone())
    } else {
        (
            plus_quotients[plus_quotients.len() - 1].clone(),
            minus_quotients[minus_quotients.len() - 1].clone(),
        )
    };
    let ordering_violation = pointwise_leq(&minus, &plus, 0.0)?.worst;
    let gap = lp_norm(&plus.sub(&minus), params.norm);
    Ok(DerivativeProbe {
        t,
        x: x.clone(),
        y: y.clone(),
        h_schedule: h_schedule.to_vec(),
        plus_quotients,
        minus_quotients,
        plus,
        minus,
        gap,
        quotient_monotone: violation <= QUOTIENT_TOL,
        monotonicity_violation: if violation.is_finite() {
            violation
        } else {
            0.0
        },
        ordering_violation,
    })
}

/// Pairwise comparison of the forward time quotient with `S̃′±(t,f)(Bf)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub t: f64,
    pub h: f64,
    /// relative distance forward vs plus
    pub forward_vs_plus: f64,
    pub forward_vs_minus: f64,
    pub plus_vs_minus: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares (a) `(S̃(t+h)f − S̃(t)f)/h`, (b) `S̃′₊(t,f)(Bf)` and (c) `S̃′₋(t,f)(Bf)`.
///
/// `S̃(t+h)` is evaluated on a partition of `[0, t+h]` that contains `t`, i.e. as
/// `S̃(t)(S̃(h)f)`, so both terms of the forward quotient share the operator `S̃(t)`.
pub fn derivative_identity_check(
    fam: &KernelFamily,
    t: f64,
    f: &GridFunction,
    h_schedule: &[f64],
    params: &EnvelopeParams,
    tolerance: f64,
) -> Result<IdentityReport> {
    let b = fam.sup_generator(f);
    let frozen = params.frozen_at(fam, t, f)?;
    let h = *h_schedule
        .last()
        .ok_or_else(|| Error::usage("h_schedule must be nonempty"))?;
    let base = frozen.evolve(fam, t, f)?;
    let short = params.evolve_min_level(fam, h, f, 2)?;
    let forward = frozen.evolve(fam, t, &short)?.sub(&base).scale(1.0 / h);
    let probe = directional_derivative(fam, t, f, &b, h_schedule, &frozen)?;
    let scale = params.window_norm(&probe.plus).max(1e-14);
    let rel = |a: &GridFunction, c: &GridFunction| params.window_norm(&a.sub(c)) / scale;
    let forward_vs_plus = rel(&forward, &probe.plus);
    let forward_vs_minus = rel(&forward, &probe.minus);
    let plus_vs_minus = rel(&probe.plus, &probe.minus);
    Ok(IdentityReport {
        t,
        h,
        forward_vs_plus,
        forward_vs_minus,
        plus_vs_minus,
        tolerance,
        pass: forward_vs_plus <= tolerance
            && forward_vs_minus <= tolerance
            && plus_vs_minus <= tolerance,
    })
}

/// `‖S̃(t)f − f − ∫₀ᵗ S̃′₊(s,f)(Bf) ds‖_p / ‖S̃(t)f − f‖_p`, with composite Simpson over
/// `quad_nodes` equispaced times and the derivative taken as a quotient at step `h`.
pub fn integral_identity_check(
    fam: &KernelFamily,
    t: f64,
    f: &GridFunction,
    quad_nodes: usize,
    h: f64,
    params: &EnvelopeParams,
) -> Result<f64> {
    if quad_nodes < 3 || quad_nodes.is_multiple_of(2) {
        return Err(Error::usage("quad_nodes must be odd and at least 3"));
    }
    if !(h > 0.0) {
        return Err(Error::usage("derivative step must be positive"));
    }
    let total = params.evolve(fam, t, f)?.sub(f);
    let total_norm = params.window_norm(&total);
    if total_norm < 1e-12 {
        return Ok(0.0);
    }
    let b = fam.sup_generator(f);
    let ds = t / (quad_nodes - 1) as f64;
    let mut integral = GridFunction::zeros(*f.grid());
    for k in 0..quad_nodes {
        let s = k as f64 * ds;
        let weight = if k == 0 || k == quad_nodes - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let derivative = if k == 0 {
            b.clone()
        } else {
            let frozen = params.frozen_at(fam, s, f)?;
            let base = frozen.evolve(fam, s, f)?;
            frozen
                .evolve(fam, s, &f.axpy(h, &b))?
                .sub(&base)
                .scale(1.0 / h)
        };
        integral = integral.axpy(weight * ds / 3.0, &derivative);
    }
    Ok(params.window_norm(&total.sub(&integral)) / total_norm)
}

/// Smooth pseudo-random function: white noise mollified by one heat step of length dx²,
/// tapered to the middle 60% of the domain.
pub fn smooth_noise(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    let samples: Vec<f64> = (0..grid.n_nodes())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let noise = GridFunction::from_vec(grid, samples);
    let smooth = heat_convolve(&noise, grid.dx() * grid.dx());
    let center = 0.5 * (grid.lower() + grid.upper());
    let taper = bump(grid, center, 0.3 * grid.len(), 1.0);
    smooth.zip_map(&taper, |a, b| a * b)
}

/// Random element of the sphere of radius `r` around `x0` (radius scaled by `rho ∈ [0,1]`).
fn ball_sample(
    x0: &GridFunction,
    r: f64,
    rho: f64,
    norm: PNorm,
    rng: &mut ChaCha8Rng,
) -> GridFunction {
    let dir = smooth_noise(*x0.grid(), rng);
    let len = lp_norm(&dir, norm).max(1e-300);
    x0.axpy(rho * r / len, &dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    /// `max ‖S̃(t)y − S̃(t)z‖ / ‖y − z‖` over sampled pairs in `B(x0, r)`.
    pub l_estimate: f64,
    pub pairs_used: usize,
    /// Sampled `sup_{‖y‖≤r} ‖T y‖` for `T = S̃(t)(·) − S̃(t)0`.
    pub b: f64,
    /// Worst `‖T y‖ / ((2b/r)‖y‖)` over the samples; ≤ 1 means the inequality held.
    pub ball_ratio: f64,
    pub ball_holds: bool,
}

pub fn lipschitz_probe(
    fam: &KernelFamily,
    t: f64,
    x0: &GridFunction,
    r: f64,
    samples: usize,
    params: &EnvelopeParams,
    seed: u64,
) -> Result<LipschitzReport> {
    if !(r > 0.0) || samples < 2 {
        return Err(Error::usage(
            "lipschitz_probe needs r > 0 and at least 2 samples",
        ));
    }
    let norm = params.norm;
    let frozen = params.frozen_at(fam, t, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut l_estimate: f64 = 0.0;
    let mut pairs_used = 0;
    for _ in 0..samples {
        let rho_y = rng.gen_range(0.0..1.0);
        let rho_z = rng.gen_range(0.0..1.0);
        let y = ball_sample(x0, r, rho_y, norm, &mut rng);
        let z = ball_sample(x0, r, rho_z, norm, &mut rng);
        let denom = lp_norm(&y.sub(&z), norm);
        if denom == 0.0 {
            continue;
        }
        let num = lp_norm(
            &frozen.evolve(fam, t, &y)?.sub(&frozen.evolve(fam, t, &z)?),
            norm,
        );
        l_estimate = l_estimate.max(num / denom);
        pairs_used += 1;
    }

    let zero = GridFunction::zeros(*x0.grid());
    let at_zero = frozen.evolve(fam, t, &zero)?;
    let mut b: f64 = 0.0;
    let mut recentred = Vec::with_capacity(samples);
    for _ in 0..samples {
        let rho = rng.gen_range(0.0..1.0);
        let y = ball_sample(&zero, r, 1.0, norm, &mut rng);
        for s in [1.0, -1.0] {
            let ys = y.scale(s);
            let ty = lp_norm(&frozen.evolve(fam, t, &ys)?.sub(&at_zero), norm);
            b = b.max(ty);
        }
        let inner = y.scale(rho);
        let t_inner = lp_norm(&frozen.evolve(fam, t, &inner)?.sub(&at_zero), norm);
        recentred.push((lp_norm(&inner, norm), t_inner));
    }
    let mut ball_ratio: f64 = 0.0;
    for (ny, ty) in recentred {
        if ny > 0.0 && b > 0.0 {
            ball_ratio = ball_ratio.max(ty / (2.0 * b / r * ny));
        }
    }
    Ok(LipschitzReport {
        l_estimate,
        pairs_used,
        b,
        ball_ratio,
        ball_holds: ball_ratio <= 1.0 + 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    #[serde(rename = "M")]
    pub m: f64,
    pub omega: f64,
}

/// Least-squares fit of `log sup_f ‖S̃(t)f‖/‖f‖ ≈ log M + ω t`.
pub fn growth_bound_estimate(
    fam: &KernelFamily,
    t_grid: &[f64],
    f_samples: &[GridFunction],
    params: &EnvelopeParams,
) -> Result<GrowthFit> {
    if t_grid.len() < 2 || f_samples.is_empty() {
        return Err(Error::usage("growth fit needs two times and one sample"));
    }
    let norm = params.norm;
    let mut logs = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut best = f64::NEG_INFINITY;
        for f in f_samples {
            let nf = lp_norm(f, norm);
            if nf == 0.0 {
                continue;
            }
            best = best.max(lp_norm(&params.evolve(fam, t, f)?, norm) / nf);
        }
        logs.push(best.ln());
    }
    let n = t_grid.len() as f64;
    let mt = t_grid.iter().sum::<f64>() / n;
    let my = logs.iter().sum::<f64>() / n;
    let sxy: f64 = t_grid
        .iter()
        .zip(&logs)
        .map(|(t, y)| (t - mt) * (y - my))
        .sum();
    let sxx: f64 = t_grid.iter().map(|t| (t - mt) * (t - mt)).sum();
    let omega = sxy / sxx;
    Ok(GrowthFit {
        m: (my - omega * mt).exp(),
        omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosednessReport {
    /// `‖f_n − f‖_p`
    pub input_distances: Vec<f64>,
    /// `‖q(f_n) − q(f)‖_p` at fixed `h`
    pub quotient_distances: Vec<f64>,
    /// `(L + 1)/h` with `L` the Lipschitz constant of `S̃(h)` implied by `C(h)`.
    pub lipschitz_factor: f64,
    pub pass: bool,
}

/// Quotients of bump dilations `f_n` (radius `a(1 + 2^{−n})`) converge to the quotient of
/// the limit bump, at a rate controlled by the input distance.
pub fn closedness_regression(
    fam: &KernelFamily,
    grid: Grid,
    radius: f64,
    h: f64,
    n_terms: usize,
    params: &EnvelopeParams,
) -> Result<ClosednessReport> {
    let norm = params.norm;
    let limit = bump(grid, 0.0, radius, 1.0);
    let quotient = |f: &GridFunction| -> Result<GridFunction> {
        Ok(params.evolve_min_level(fam, h, f, 2)?.sub(f).scale(1.0 / h))
    };
    let q_limit = quotient(&limit)?;
    let lip = fam.upper_bound_norm_factor(h, norm).unwrap_or(1.0);
    let lipschitz_factor = (lip + 1.0) / h;
    let mut input_distances = Vec::new();
    let mut quotient_distances = Vec::new();
    let mut pass = true;
    for n in 1..=n_terms {
        let fn_ = bump(grid, 0.0, radius * (1.0 + 0.5f64.powi(n as i32)), 1.0);
        let d_in = lp_norm(&fn_.sub(&limit), norm);
        let d_q = lp_norm(&quotient(&fn_)?.sub(&q_limit), norm);
        pass &= d_q <= lipschitz_factor * d_in + 1e-12;
        if let Some(&prev) = quotient_distances.last() {
            pass &= d_q < prev;
        }
        input_distances.push(d_in);
        quotient_distances.push(d_q);
    }
    Ok(ClosednessReport {
        input_distances,
        quotient_distances,
        lipschitz_factor,
        pass,
    })
}
