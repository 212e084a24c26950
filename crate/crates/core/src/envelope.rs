//! Nisio construction of the semigroup envelope.
//!
//! `J_h f = sup_λ S_λ(h) f` is the one-step supremum, `J_π` composes one-step suprema
//! along a partition, and the envelope is `S(t) f = sup_{π ∈ P_t} J_π f`. Nested dyadic
//! partitions give a non-decreasing sequence bounded by `C(t) f`; [`nisio_dyadic`] runs
//! it to a relative L^p tolerance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::funcspace::{
    interp_shift, lp_norm, lp_norm_slice, pointwise_max, window_sup, GridFunction, PNorm,
};
use crate::kernels::{heat_convolve, FamilyKind, KernelFamily, LambdaSet};

pub const DEFAULT_TOL_REL: f64 = 1e-4;
pub const DEFAULT_N_MAX: u32 = 12;

/// Finite time grid `0 = t_0 < t_1 < … < t_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    times: Vec<f64>,
    mesh: f64,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::usage("a partition needs at least two time points"));
        }
        if times[0] != 0.0 {
            return Err(Error::usage("a partition must start at 0"));
        }
        let mut mesh: f64 = 0.0;
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            if !(gap > 0.0) || !w[1].is_finite() {
                return Err(Error::usage("partition times must be strictly increasing"));
            }
            mesh = mesh.max(gap);
        }
        Ok(Partition { times, mesh })
    }

    /// `{k·t/2^n : k = 0..=2^n}`
    pub fn dyadic(t: f64, level: u32) -> Result<Self> {
        let steps = 1usize << level;
        Self::new((0..=steps).map(|k| t * k as f64 / steps as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `|π|_∞`
    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Increments `t_j − t_{j−1}`, in time order.
    pub fn increments(&self) -> impl DoubleEndedIterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    pub fn is_refinement_of(&self, coarse: &Partition) -> bool {
        coarse.times.iter().all(|t| self.times.contains(t))
    }

    /// Union of the time points of both partitions.
    pub fn merge(&self, other: &Partition) -> Result<Partition> {
        let mut times: Vec<f64> = self.times.iter().chain(&other.times).copied().collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        Partition::new(times)
    }
}

/// `J_h f = sup_{λ∈Λ} S_λ(h) f`.
///
/// Interval Λ for the Gaussian and shift families is handled exactly at interpolant level:
/// `S_λ(h) f (x) = g(x + λh)` with `g` the heat-smoothed (or raw) function, so the sup
/// over λ is a max filter of `g` over `[x + λ_ h, x + λ̄ h]`.
pub fn step_j(fam: &KernelFamily, h: f64, f: &GridFunction) -> Result<GridFunction> {
    if !(h > 0.0) {
        return Err(Error::usage(format!("step size must be positive, got {h}")));
    }
    let lambdas = fam.lambdas();
    match (fam.kind(), lambdas) {
        (FamilyKind::GaussianDrift, LambdaSet::Interval { lo, hi }) => {
            Ok(window_sup(&heat_convolve(f, h), lo * h, hi * h))
        }
        (FamilyKind::PureShift, LambdaSet::Interval { lo, hi }) => {
            Ok(window_sup(f, lo * h, hi * h))
        }
        (FamilyKind::GaussianDrift, LambdaSet::Finite(values)) => {
            let smooth = heat_convolve(f, h);
            let members: Vec<_> = values
                .iter()
                .map(|&l| interp_shift(&smooth, l * h))
                .collect();
            pointwise_max(&members)
        }
        _ => {
            let members = lambdas
                .sample_points(fam.interval_samples)
                .into_iter()
                .map(|l| fam.apply_member(l, h, f))
                .collect::<Result<Vec<_>>>()?;
            pointwise_max(&members)
        }
    }
}

/// `J_π f = J_{t_1−t_0} ⋯ J_{t_m−t_{m−1}} f`: the last increment acts first.
pub fn apply_partition(
    fam: &KernelFamily,
    pi: &Partition,
    f: &GridFunction,
) -> Result<GridFunction> {
    let mut current = f.clone();
    for h in pi.increments().rev() {
        current = step_j(fam, h, &current)?;
    }
    Ok(current)
}

/// `J_π f` on the dyadic partition with `2^level` equal steps.
pub fn dyadic_iterate(
    fam: &KernelFamily,
    t: f64,
    level: u32,
    f: &GridFunction,
) -> Result<GridFunction> {
    if t == 0.0 {
        return Ok(f.clone());
    }
    let steps = 1usize << level;
    let h = t / steps as f64;
    let mut current = f.clone();
    for _ in 0..steps {
        current = step_j(fam, h, &current)?;
    }
    Ok(current)
}

/// One row of the dyadic convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: u32,
    pub steps: u64,
    pub h: f64,
    /// `‖T_n f − T_{n−1} f‖_p`; zero at level 0.
    pub increment_lp: f64,
    /// `‖T_n f‖_p`
    pub norm_lp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeResult {
    pub final_iterate: GridFunction,
    pub levels: Vec<LevelRecord>,
    pub levels_used: u32,
    pub converged: bool,
    /// Max pointwise excess of the final iterate over `C(t) f`; `None` without a bound.
    pub upper_bound_margin: Option<f64>,
    pub upper_bound_pass: Option<bool>,
    /// `‖T f‖_p` restricted to the outer 5% of the domain on each side.
    pub boundary_leakage: f64,
    /// `min_n (‖T_n f‖_p − ‖T_{n−1} f‖_p)`, the worst norm decrease between levels.
    pub min_norm_increase: f64,
}

#[derive(Serialize)]
struct EnvelopeJson<'a> {
    levels_used: u32,
    converged: bool,
    upper_bound_margin: Option<f64>,
    upper_bound_pass: Option<bool>,
    boundary_leakage: f64,
    increments: Vec<f64>,
    levels: &'a [LevelRecord],
}

impl EnvelopeResult {
    pub fn to_json(&self) -> String {
        let body = EnvelopeJson {
            levels_used: self.levels_used,
            converged: self.converged,
            upper_bound_margin: self.upper_bound_margin,
            upper_bound_pass: self.upper_bound_pass,
            boundary_leakage: self.boundary_leakage,
            increments: self.levels.iter().skip(1).map(|r| r.increment_lp).collect(),
            levels: &self.levels,
        };
        serde_json::to_string_pretty(&body).expect("plain data serializes")
    }

    /// `level,steps,h,increment_lp,norm_lp`
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("level,steps,h,increment_lp,norm_lp\n");
        for r in &self.levels {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e}\n",
                r.level, r.steps, r.h, r.increment_lp, r.norm_lp
            ));
        }
        out
    }
}

/// Outer-region L^p mass used to monitor zero-extension artifacts.
pub fn boundary_leakage(f: &GridFunction, norm: PNorm) -> f64 {
    let n = f.grid().n_nodes();
    let m = ((0.05 * n as f64).ceil() as usize).min(n / 2);
    let v = f.samples();
    let dx = f.grid().dx();
    let left = lp_norm_slice(&v[..m], dx, norm).powf(norm.p());
    let right = lp_norm_slice(&v[n - m..], dx, norm).powf(norm.p());
    (left + right).powf(1.0 / norm.p())
}

/// Dyadic Nisio iteration `T_n f = J_{π_n} f` for `n = 0, 1, …` until the relative
/// increment drops below `tol_rel` or `n = n_max`. Each level is built from scratch.
pub fn nisio_dyadic(
    fam: &KernelFamily,
    t: f64,
    f: &GridFunction,
    tol_rel: f64,
    n_max: u32,
    norm: PNorm,
) -> Result<EnvelopeResult> {
    if !(t > 0.0) {
        return Err(Error::usage(format!(
            "envelope horizon must be positive, got {t}"
        )));
    }
    if !(tol_rel > 0.0) {
        return Err(Error::usage(format!(
            "tol_rel must be positive, got {tol_rel}"
        )));
    }
    let f_norm = lp_norm(f, norm);
    let mut previous = dyadic_iterate(fam, t, 0, f)?;
    let mut levels = vec![LevelRecord {
        level: 0,
        steps: 1,
        h: t,
        increment_lp: 0.0,
        norm_lp: lp_norm(&previous, norm),
    }];
    let mut converged = false;
    let mut min_norm_increase = f64::INFINITY;
    let mut level = 0;
    while level < n_max {
        level += 1;
        let next = dyadic_iterate(fam, t, level, f)?;
        let increment = lp_norm(&next.sub(&previous), norm);
        let norm_lp = lp_norm(&next, norm);
        min_norm_increase = min_norm_increase.min(norm_lp - levels[levels.len() - 1].norm_lp);
        levels.push(LevelRecord {
            level,
            steps: 1u64 << level,
            h: t / (1u64 << level) as f64,
            increment_lp: increment,
            norm_lp,
        });
        previous = next;
        if increment <= tol_rel * f_norm {
            converged = true;
            break;
        }
    }
    let (margin, pass) = match certificate_margin(fam, t, &previous, f, norm)? {
        Certificate::Available { margin, pass } => (Some(margin), Some(pass)),
        Certificate::Unavailable => (None, None),
    };
    Ok(EnvelopeResult {
        boundary_leakage: boundary_leakage(&previous, norm),
        final_iterate: previous,
        levels,
        levels_used: level,
        converged,
        upper_bound_margin: margin,
        upper_bound_pass: pass,
        min_norm_increase: if min_norm_increase.is_finite() {
            min_norm_increase
        } else {
            0.0
        },
    })
}

/// Result of comparing an envelope iterate with `C(t) f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certificate {
    Available { margin: f64, pass: bool },
    Unavailable,
}

fn certificate_margin(
    fam: &KernelFamily,
    t: f64,
    iterate: &GridFunction,
    f: &GridFunction,
    norm: PNorm,
) -> Result<Certificate> {
    let bound = match fam.upper_bound_c(t, f, norm) {
        Ok(b) => b,
        Err(Error::NoEnvelopeBound) => return Ok(Certificate::Unavailable),
        Err(Error::Usage(_)) if norm.q().is_none() => return Ok(Certificate::Unavailable),
        Err(e) => return Err(e),
    };
    let margin = iterate
        .samples()
        .iter()
        .zip(bound.samples())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Certificate::Available {
        margin,
        pass: margin <= 1e-6 * (1.0 + f.sup_norm()),
    })
}

/// Checks `J_π f ≤ C(t) f` for the final iterate of `result`.
pub fn check_upper_bound(
    fam: &KernelFamily,
    t: f64,
    result: &EnvelopeResult,
    f: &GridFunction,
    norm: PNorm,
) -> Result<Certificate> {
    certificate_margin(fam, t, &result.final_iterate, f, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{bump, pointwise_leq, Grid};
    use crate::kernels::JumpDistribution;

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 2001).unwrap()
    }

    fn gd() -> KernelFamily {
        KernelFamily::gaussian_drift(LambdaSet::interval(-1.0, 1.0).unwrap()).unwrap()
    }

    fn cp01() -> KernelFamily {
        KernelFamily::compound_poisson(
            LambdaSet::finite(vec![0.0, 1.0]).unwrap(),
            JumpDistribution::dirac(1.0),
        )
        .unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0.0]).is_err());
        assert!(Partition::new(vec![0.1, 0.2]).is_err());
        assert!(Partition::new(vec![0.0, 0.2, 0.2]).is_err());
        let p = Partition::new(vec![0.0, 0.1, 0.5, 0.6]).unwrap();
        assert!((p.mesh() - 0.4).abs() < 1e-15);
        let d = Partition::dyadic(1.0, 2).unwrap();
        assert_eq!(d.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(Partition::dyadic(1.0, 3).unwrap().is_refinement_of(&d));
    }

    #[test]
    fn step_j_rejects_nonpositive_h() {
        let f = bump(grid(), 0.0, 1.0, 1.0);
        assert!(matches!(step_j(&gd(), 0.0, &f), Err(Error::Usage(_))));
    }

    #[test]
    fn singleton_step_is_the_member() {
        let f = bump(grid(), 0.0, 1.0, 1.0);
        for fam in [
            gd().with_lambdas(LambdaSet::finite(vec![0.3]).unwrap())
                .unwrap(),
            gd().with_lambdas(LambdaSet::interval(0.3, 0.3).unwrap())
                .unwrap(),
            cp01()
                .with_lambdas(LambdaSet::finite(vec![0.7]).unwrap())
                .unwrap(),
        ] {
            let j = step_j(&fam, 0.1, &f).unwrap();
            let m = fam
                .apply_member(0.3_f64.max(fam.lambdas().inf()), 0.1, &f)
                .unwrap();
            assert_eq!(j, m);
        }
    }

    #[test]
    fn step_j_preserves_constants() {
        let c = GridFunction::constant(grid(), 1.5);
        for fam in [gd(), cp01()] {
            let out = step_j(&fam, 0.2, &c).unwrap();
            for &v in &out.samples()[grid().interior(0.2)] {
                assert!((v - 1.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn step_j_matches_lambda_scan() {
        let f = bump(grid(), 0.3, 1.0, 1.0);
        let fam = gd();
        let j = step_j(&fam, 0.1, &f).unwrap();
        let members: Vec<_> = (0..=2000)
            .map(|k| fam.apply_member(-1.0 + k as f64 / 1000.0, 0.1, &f).unwrap())
            .collect();
        let brute = pointwise_max(&members).unwrap();
        for (a, b) in j.samples().iter().zip(brute.samples()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn partition_composition_order() {
        let f = bump(grid(), 0.0, 1.0, 1.0);
        let fam = cp01();
        let two = Partition::new(vec![0.0, 0.5]).unwrap();
        assert_eq!(
            apply_partition(&fam, &two, &f).unwrap(),
            step_j(&fam, 0.5, &f).unwrap()
        );
        // J_{0.1} J_{0.4} f: the 0.4 step acts first
        let pi = Partition::new(vec![0.0, 0.1, 0.5]).unwrap();
        let manual = step_j(&fam, 0.1, &step_j(&fam, 0.4, &f).unwrap()).unwrap();
        assert_eq!(apply_partition(&fam, &pi, &f).unwrap(), manual);
        let d = Partition::dyadic(0.5, 2).unwrap();
        let mut unrolled = f.clone();
        for _ in 0..4 {
            unrolled = step_j(&fam, 0.125, &unrolled).unwrap();
        }
        assert_eq!(apply_partition(&fam, &d, &f).unwrap(), unrolled);
        assert_eq!(dyadic_iterate(&fam, 0.5, 2, &f).unwrap(), unrolled);
    }

    #[test]
    fn halving_refines_upward() {
        let f = bump(grid(), 0.0, 1.0, 1.0);
        let fam = cp01();
        let coarse = apply_partition(&fam, &Partition::new(vec![0.0, 1.0]).unwrap(), &f).unwrap();
        let fine =
            apply_partition(&fam, &Partition::new(vec![0.0, 0.5, 1.0]).unwrap(), &f).unwrap();
        assert!(pointwise_leq(&coarse, &fine, 1e-9).unwrap().holds);
    }

    #[test]
    fn nisio_singleton_converges_immediately() {
        let f = bump(grid(), 0.0, 1.0, 1.0);
        let fam = gd()
            .with_lambdas(LambdaSet::finite(vec![0.0]).unwrap())
            .unwrap();
        let norm = PNorm::new(2.0).unwrap();
        let r = nisio_dyadic(&fam, 0.5, &f, 1e-4, 8, norm).unwrap();
        assert!(r.converged);
        assert_eq!(r.levels_used, 1);
    }

    #[test]
    fn nisio_certificates() {
        let norm = PNorm::new(2.0).unwrap();
        let f = bump(grid(), 0.0, 1.0, 1.0);
        let r = nisio_dyadic(&gd(), 0.5, &f, 1e-4, 8, norm).unwrap();
        assert_eq!(r.upper_bound_pass, Some(true));
        let cert = check_upper_bound(&gd(), 0.5, &r, &f, norm).unwrap();
        assert!(matches!(cert, Certificate::Available { pass: true, .. }));

        let r = nisio_dyadic(&cp01(), 1.0, &f, 1e-4, 8, norm).unwrap();
        assert_eq!(r.upper_bound_pass, Some(true));
        assert!(r.min_norm_increase >= -1e-9);

        let zero = GridFunction::zeros(grid());
        let r = nisio_dyadic(&gd(), 0.5, &zero, 1e-4, 3, norm).unwrap();
        assert!(r.upper_bound_margin.unwrap() <= 0.0);

        let shift = KernelFamily::pure_shift(LambdaSet::interval(-1.0, 1.0).unwrap()).unwrap();
        let r = nisio_dyadic(&shift, 0.5, &f, 1e-4, 2, norm).unwrap();
        assert_eq!(r.upper_bound_margin, None);
        assert_eq!(
            check_upper_bound(&shift, 0.5, &r, &f, norm).unwrap(),
            Certificate::Unavailable
        );
    }

    #[test]
    fn non_convergence_is_reported() {
        let norm = PNorm::new(2.0).unwrap();
        let f = bump(grid(), 0.0, 1.0, 1.0);
        let r = nisio_dyadic(&gd(), 0.5, &f, 1e-14, 2, norm).unwrap();
        assert!(!r.converged);
        assert_eq!(r.levels_used, 2);
        assert_eq!(r.levels.len(), 3);
        let csv = r.convergence_csv();
        assert!(csv.starts_with("level,steps,h,increment_lp,norm_lp\n"));
        assert_eq!(csv.lines().count(), 4);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["increments"].as_array().unwrap().len(), 2);
    }
}
