//! Base families of linear monotone convolution semigroups.
//!
//! Three families are supported:
//!
//! * uncertain-drift Gaussian, `S_λ(t)f(x) = E[f(x + W_t + λt)]`;
//! * compound Poisson with uncertain intensity and a finite-atom jump law μ;
//! * pure shift, `S_λ(t)f(x) = f(x + λt)`, which has no dominating operator `C(t)` on L^p.
//!
//! Each family provides its members `S_λ(t)`, their generators `A_λ`, the pointwise
//! supremum `B = sup_λ A_λ` and (where it exists) the upper-bound operator `C(h)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{interp_shift, pointwise_max, GridFunction, PNorm};

/// Gaussian kernels are truncated at this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 8.0;
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
pub const DEFAULT_INTERVAL_SAMPLES: usize = 9;

/// Summary of a Lévy triplet `(b, Σ, ∫ 1∧|y|² dμ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyTriplet {
    pub b: f64,
    pub sigma2: f64,
    pub jump_mass: f64,
}

impl LevyTriplet {
    pub fn size(&self) -> f64 {
        self.b.abs() + self.sigma2.abs() + self.jump_mass
    }
}

/// Uncertainty set Λ.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSet {
    Interval { lo: f64, hi: f64 },
    Finite(Vec<f64>),
}

impl LambdaSet {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::config(
                "family.lambda_interval",
                format!("need finite lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(LambdaSet::Interval { lo, hi })
    }

    pub fn finite(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("family.lambda_list", "Λ must be nonempty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("family.lambda_list", "Λ must be bounded"));
        }
        values.sort_by(|a, b| a.total_cmp(b));
        values.dedup();
        Ok(LambdaSet::Finite(values))
    }

    pub fn inf(&self) -> f64 {
        match self {
            LambdaSet::Interval { lo, .. } => *lo,
            LambdaSet::Finite(v) => v[0],
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            LambdaSet::Interval { hi, .. } => *hi,
            LambdaSet::Finite(v) => v[v.len() - 1],
        }
    }

    /// `λ̄ = sup_{λ∈Λ} |λ|`
    pub fn sup_abs(&self) -> f64 {
        self.inf().abs().max(self.sup().abs())
    }

    pub fn contains(&self, lambda: f64) -> bool {
        let tol = 1e-12 * (1.0 + lambda.abs());
        match self {
            LambdaSet::Interval { lo, hi } => lambda >= lo - tol && lambda <= hi + tol,
            LambdaSet::Finite(v) => v.iter().any(|x| (x - lambda).abs() <= tol),
        }
    }

    /// Endpoints of an interval, or all points of a finite set.
    pub fn extreme_points(&self) -> Vec<f64> {
        match self {
            LambdaSet::Interval { lo, hi } if lo == hi => vec![*lo],
            LambdaSet::Interval { lo, hi } => vec![*lo, *hi],
            LambdaSet::Finite(v) => v.clone(),
        }
    }

    /// Endpoints plus `interior` equispaced points for an interval; the set itself otherwise.
    pub fn sample_points(&self, interior: usize) -> Vec<f64> {
        match self {
            LambdaSet::Interval { lo, hi } if lo == hi => vec![*lo],
            LambdaSet::Interval { lo, hi } => {
                let m = interior + 1;
                (0..=m)
                    .map(|k| {
                        if k == m {
                            *hi
                        } else {
                            lo + (hi - lo) * k as f64 / m as f64
                        }
                    })
                    .collect()
            }
            LambdaSet::Finite(v) => v.clone(),
        }
    }
}

/// Finite-atom probability measure μ.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDistribution {
    atoms: Vec<(f64, f64)>,
}

impl JumpDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::config(
                "family.jump_atoms",
                "μ needs at least one atom",
            ));
        }
        if atoms.iter().any(|&(y, w)| !y.is_finite() || !(w > 0.0)) {
            return Err(Error::config(
                "family.jump_atoms",
                "atoms need finite offsets and positive weights",
            ));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "family.jump_atoms",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        Ok(JumpDistribution { atoms })
    }

    pub fn dirac(offset: f64) -> Self {
        JumpDistribution {
            atoms: vec![(offset, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `(μ ∗ f)(x) = Σ_j w_j f(x + y_j)`
    pub fn convolve(&self, f: &GridFunction) -> GridFunction {
        let mut acc = GridFunction::zeros(*f.grid());
        for &(y, w) in &self.atoms {
            acc = acc.axpy(w, &interp_shift(f, y));
        }
        acc
    }

    fn truncated_mass(&self) -> f64 {
        self.atoms.iter().map(|&(y, w)| w * (y * y).min(1.0)).sum()
    }

    fn small_jump_mean(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|(y, _)| y.abs() <= 1.0)
            .map(|&(y, w)| w * y)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    GaussianDrift,
    CompoundPoisson(JumpDistribution),
    PureShift,
}

/// A family `(S_λ)_{λ∈Λ}` of linear convolution semigroups.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFamily {
    kind: FamilyKind,
    lambdas: LambdaSet,
    /// Dropped Poisson tail probability.
    pub series_tol: f64,
    /// Interior λ samples used for the one-step sup of interval compound Poisson families.
    pub interval_samples: usize,
}

impl KernelFamily {
    pub fn new(kind: FamilyKind, lambdas: LambdaSet) -> Result<Self> {
        if let FamilyKind::CompoundPoisson(_) = kind {
            if lambdas.inf() < 0.0 {
                return Err(Error::config(
                    "family",
                    "compound Poisson intensities must be nonnegative",
                ));
            }
        }
        let fam = KernelFamily {
            kind,
            lambdas,
            series_tol: DEFAULT_SERIES_TOL,
            interval_samples: DEFAULT_INTERVAL_SAMPLES,
        };
        let summary = fam.levcond_summary();
        if !summary.is_finite() {
            return Err(Error::config(
                "family",
                "Lévy triplets are not uniformly bounded",
            ));
        }
        Ok(fam)
    }

    pub fn gaussian_drift(lambdas: LambdaSet) -> Result<Self> {
        Self::new(FamilyKind::GaussianDrift, lambdas)
    }

    pub fn compound_poisson(lambdas: LambdaSet, mu: JumpDistribution) -> Result<Self> {
        Self::new(FamilyKind::CompoundPoisson(mu), lambdas)
    }

    pub fn pure_shift(lambdas: LambdaSet) -> Result<Self> {
        Self::new(FamilyKind::PureShift, lambdas)
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn lambdas(&self) -> &LambdaSet {
        &self.lambdas
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::GaussianDrift => "gaussian_drift",
            FamilyKind::CompoundPoisson(_) => "compound_poisson",
            FamilyKind::PureShift => "pure_shift",
        }
    }

    /// Same kind of family with a different uncertainty set.
    pub fn with_lambdas(&self, lambdas: LambdaSet) -> Result<Self> {
        let mut fam = Self::new(self.kind.clone(), lambdas)?;
        fam.series_tol = self.series_tol;
        fam.interval_samples = self.interval_samples;
        Ok(fam)
    }

    pub fn triplet(&self, lambda: f64) -> LevyTriplet {
        match &self.kind {
            FamilyKind::GaussianDrift => LevyTriplet {
                b: lambda,
                sigma2: 1.0,
                jump_mass: 0.0,
            },
            FamilyKind::CompoundPoisson(mu) => LevyTriplet {
                b: lambda * mu.small_jump_mean(),
                sigma2: 0.0,
                jump_mass: lambda * mu.truncated_mass(),
            },
            FamilyKind::PureShift => LevyTriplet {
                b: lambda,
                sigma2: 0.0,
                jump_mass: 0.0,
            },
        }
    }

    /// `sup_λ |b| + |Σ| + ∫ 1∧|y|² dμ`; every component is affine in λ, so the extreme
    /// points of Λ suffice.
    pub fn levcond_summary(&self) -> f64 {
        self.lambdas
            .extreme_points()
            .into_iter()
            .map(|l| self.triplet(l).size())
            .fold(0.0, f64::max)
    }

    pub fn has_upper_bound(&self) -> bool {
        !matches!(self.kind, FamilyKind::PureShift)
    }

    fn check_member(&self, lambda: f64) -> Result<()> {
        if self.lambdas.contains(lambda) {
            Ok(())
        } else {
            Err(Error::usage(format!("λ = {lambda} is not in Λ")))
        }
    }

    /// `S_λ(t) f`.
    pub fn apply_member(&self, lambda: f64, t: f64, f: &GridFunction) -> Result<GridFunction> {
        if !(t >= 0.0) {
            return Err(Error::usage(format!("time must be nonnegative, got {t}")));
        }
        self.check_member(lambda)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        Ok(match &self.kind {
            FamilyKind::GaussianDrift => interp_shift(&heat_convolve(f, t), lambda * t),
            FamilyKind::CompoundPoisson(mu) => poisson_apply(mu, lambda * t, self.series_tol, f),
            FamilyKind::PureShift => interp_shift(f, lambda * t),
        })
    }

    /// `A_λ f` with second-order finite differences.
    pub fn member_generator(&self, lambda: f64, f: &GridFunction) -> GridFunction {
        match &self.kind {
            FamilyKind::GaussianDrift => {
                let d1 = first_difference(f);
                let d2 = second_difference(f);
                d2.zip_map(&d1, |a, b| 0.5 * a + lambda * b)
            }
            FamilyKind::CompoundPoisson(mu) => mu.convolve(f).sub(f).scale(lambda),
            FamilyKind::PureShift => first_difference(f).scale(lambda),
        }
    }

    /// `B f = sup_λ A_λ f`, per node.
    pub fn sup_generator(&self, f: &GridFunction) -> GridFunction {
        match (&self.kind, &self.lambdas) {
            (FamilyKind::GaussianDrift, LambdaSet::Interval { lo, hi }) => {
                let d1 = first_difference(f);
                let d2 = second_difference(f);
                d2.zip_map(&d1, |a, b| 0.5 * a + (lo * b).max(hi * b))
            }
            (FamilyKind::PureShift, LambdaSet::Interval { lo, hi }) => {
                first_difference(f).map(|b| (lo * b).max(hi * b))
            }
            (FamilyKind::CompoundPoisson(mu), LambdaSet::Interval { lo, hi }) => {
                // sup of λ·d over [lo, hi] is λ̄·d⁺ − λ_·d⁻
                mu.convolve(f).sub(f).map(|d| (lo * d).max(hi * d))
            }
            (_, LambdaSet::Finite(values)) => {
                let members: Vec<_> = values
                    .iter()
                    .map(|&l| self.member_generator(l, f))
                    .collect();
                pointwise_max(&members).expect("Λ is nonempty")
            }
        }
    }

    /// Upper-bound operator `C(h)` dominating every `J_π` with `max π = h`.
    pub fn upper_bound_c(&self, h: f64, f: &GridFunction, norm: PNorm) -> Result<GridFunction> {
        if !(h > 0.0) {
            return Err(Error::usage(format!("C(h) needs h > 0, got {h}")));
        }
        let p = norm.p();
        let abs_p = f.map(|v| v.abs().powf(p));
        match &self.kind {
            FamilyKind::GaussianDrift => {
                let lbar = self.lambdas.sup_abs();
                let factor = match norm.q() {
                    Some(q) => ((q - 1.0) * h * lbar * lbar / 2.0).exp(),
                    None if lbar == 0.0 => 1.0,
                    None => {
                        return Err(Error::usage(
                            "C(h) is unbounded for p = 1 with nonzero drift uncertainty",
                        ))
                    }
                };
                Ok(heat_convolve(&abs_p, h).map(|v| v.max(0.0).powf(1.0 / p) * factor))
            }
            FamilyKind::CompoundPoisson(mu) => {
                let (lo, hi) = (self.lambdas.inf(), self.lambdas.sup());
                let factor = ((hi - lo) * h).exp();
                let smoothed = poisson_apply(mu, hi * h, self.series_tol, &abs_p);
                Ok(smoothed.map(|v| v.max(0.0).powf(1.0 / p) * factor))
            }
            FamilyKind::PureShift => Err(Error::NoEnvelopeBound),
        }
    }

    /// Growth factor `‖C(h)f‖_p / ‖f‖_p` implied by the construction of `C`.
    pub fn upper_bound_norm_factor(&self, h: f64, norm: PNorm) -> Option<f64> {
        match &self.kind {
            FamilyKind::GaussianDrift => {
                let lbar = self.lambdas.sup_abs();
                match norm.q() {
                    Some(q) => Some((q * h * lbar * lbar / (2.0 * norm.p())).exp()),
                    None if lbar == 0.0 => Some(1.0),
                    None => None,
                }
            }
            FamilyKind::CompoundPoisson(_) => {
                Some(((self.lambdas.sup() - self.lambdas.inf()) * h).exp())
            }
            FamilyKind::PureShift => None,
        }
    }
}

/// Normalized, truncated, sampled heat kernel `φ₀(t, k·dx)`, `k = −K..=K`.
pub fn heat_kernel(dx: f64, t: f64) -> Vec<f64> {
    let reach = TRUNCATION_SIGMAS * t.sqrt();
    let half = (reach / dx).floor() as usize;
    let mut w: Vec<f64> = (0..=2 * half)
        .map(|j| {
            let y = (j as f64 - half as f64) * dx;
            (-y * y / (2.0 * t)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// `(f ∗ φ₀(t,·))(x_i)` with zero extension; identity for `t = 0`.
pub fn heat_convolve(f: &GridFunction, t: f64) -> GridFunction {
    if t == 0.0 {
        return f.clone();
    }
    let w = heat_kernel(f.grid().dx(), t);
    convolve_symmetric(f, &w)
}

fn convolve_symmetric(f: &GridFunction, w: &[f64]) -> GridFunction {
    let half = (w.len() / 2) as isize;
    let src = f.samples();
    let n = src.len() as isize;
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
        for (o, slot) in chunk.iter_mut().enumerate() {
            let i = (c * 1024 + o) as isize;
            let k_lo = (-half).max(-i);
            let k_hi = half.min(n - 1 - i);
            let mut acc = 0.0;
            let mut k = k_lo;
            while k <= k_hi {
                acc += w[(k + half) as usize] * src[(i + k) as usize];
                k += 1;
            }
            *slot = acc;
        }
    });
    GridFunction::from_vec(*f.grid(), out)
}

/// Smallest `N` such that the Chernoff bound on `P(Poisson(m) > N)` is at most `tol`.
pub fn poisson_truncation(m: f64, tol: f64) -> usize {
    if m <= 0.0 {
        return 0;
    }
    let log_tol = tol.ln();
    let mut n = m.floor() as usize;
    loop {
        let k = (n + 1) as f64;
        if k > m {
            let log_bound = -m + k * (1.0 + m.ln() - k.ln());
            if log_bound <= log_tol {
                return n;
            }
        }
        n += 1;
    }
}

/// Renormalized truncated Poisson weights `e^{−m} m^n / n!`, `n = 0..=N`.
pub fn poisson_weights(m: f64, tol: f64) -> Vec<f64> {
    let n_max = poisson_truncation(m, tol);
    let mut w = Vec::with_capacity(n_max + 1);
    let mut term = (-m).exp();
    w.push(term);
    for n in 1..=n_max {
        term *= m / n as f64;
        w.push(term);
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// `Σ_n p_n(m) (μ^{∗n} ∗ f)`.
fn poisson_apply(mu: &JumpDistribution, m: f64, tol: f64, f: &GridFunction) -> GridFunction {
    let weights = poisson_weights(m, tol);
    let mut power = f.clone();
    let mut acc = f.scale(weights[0]);
    for &w in &weights[1..] {
        power = mu.convolve(&power);
        acc = acc.axpy(w, &power);
    }
    acc
}

/// Central first difference, second-order one-sided at the two boundary nodes.
pub fn first_difference(f: &GridFunction) -> GridFunction {
    let v = f.samples();
    let n = v.len();
    let dx = f.grid().dx();
    let mut out = vec![0.0; n];
    if n < 3 {
        let d = (v[n - 1] - v[0]) / dx;
        out.iter_mut().for_each(|o| *o = d);
        return GridFunction::from_vec(*f.grid(), out);
    }
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
    GridFunction::from_vec(*f.grid(), out)
}

/// Central second difference, second-order one-sided at the two boundary nodes.
pub fn second_difference(f: &GridFunction) -> GridFunction {
    let v = f.samples();
    let n = v.len();
    let dx2 = f.grid().dx() * f.grid().dx();
    let mut out = vec![0.0; n];
    if n < 4 {
        if n == 3 {
            let d = (v[0] - 2.0 * v[1] + v[2]) / dx2;
            out.iter_mut().for_each(|o| *o = d);
        }
        return GridFunction::from_vec(*f.grid(), out);
    }
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / dx2;
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / dx2;
    }
    out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / dx2;
    GridFunction::from_vec(*f.grid(), out)
}

/// Configuration form of a family:
/// `{"family": "gaussian_drift", "lambda_interval": [-1, 1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_atoms: Option<Vec<[f64; 2]>>,
}

impl FamilySpec {
    pub fn build(&self) -> Result<KernelFamily> {
        let lambdas = match (&self.lambda_interval, &self.lambda_list) {
            (Some([lo, hi]), None) => LambdaSet::interval(*lo, *hi)?,
            (None, Some(list)) => LambdaSet::finite(list.clone())?,
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "family.lambda_list",
                    "give either lambda_interval or lambda_list, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "family.lambda_interval",
                    "missing uncertainty set (lambda_interval or lambda_list)",
                ))
            }
        };
        match self.family.as_str() {
            "gaussian_drift" => KernelFamily::gaussian_drift(lambdas),
            "pure_shift" => KernelFamily::pure_shift(lambdas),
            "compound_poisson" => {
                let atoms = self.jump_atoms.as_ref().ok_or_else(|| {
                    Error::config("family.jump_atoms", "compound_poisson needs jump_atoms")
                })?;
                let mu = JumpDistribution::new(atoms.iter().map(|a| (a[0], a[1])).collect())?;
                KernelFamily::compound_poisson(lambdas, mu)
                    .map_err(|_| Error::config("family.lambda_list", "intensities must be >= 0"))
            }
            other => Err(Error::config(
                "family.family",
                format!("unknown family `{other}` (expected gaussian_drift, compound_poisson or pure_shift)"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{bump, lp_norm, Grid};

    fn gd(lo: f64, hi: f64) -> KernelFamily {
        KernelFamily::gaussian_drift(LambdaSet::interval(lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn lambda_set_extremes() {
        let s = LambdaSet::interval(-0.5, 2.0).unwrap();
        assert_eq!(s.sup_abs(), 2.0);
        assert_eq!(s.inf(), -0.5);
        assert!(s.contains(1.3) && !s.contains(2.1));
        let f = LambdaSet::finite(vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f, LambdaSet::Finite(vec![0.0, 1.0]));
        assert!(LambdaSet::finite(vec![]).is_err());
        assert!(LambdaSet::interval(1.0, 0.0).is_err());
        assert_eq!(s.sample_points(9).len(), 11);
    }

    #[test]
    fn jump_distribution_validation() {
        assert!(JumpDistribution::new(vec![(1.0, 0.5), (-1.0, 0.5)]).is_ok());
        assert!(JumpDistribution::new(vec![(1.0, 0.6)]).is_err());
        assert!(JumpDistribution::new(vec![(1.0, 1.5), (2.0, -0.5)]).is_err());
        let mu = JumpDistribution::dirac(0.5);
        assert!(
            KernelFamily::compound_poisson(LambdaSet::finite(vec![-1.0]).unwrap(), mu).is_err()
        );
    }

    #[test]
    fn levcond_summary_is_finite() {
        let fam = KernelFamily::compound_poisson(
            LambdaSet::interval(0.0, 2.0).unwrap(),
            JumpDistribution::new(vec![(0.5, 0.5), (3.0, 0.5)]).unwrap(),
        )
        .unwrap();
        // λ = 2: b = 2·0.25, jump mass = 2·(0.125 + 0.5)
        assert!((fam.levcond_summary() - (0.5 + 1.25)).abs() < 1e-12);
        assert_eq!(gd(-1.0, 1.0).levcond_summary(), 2.0);
    }

    #[test]
    fn apply_member_rejects_bad_arguments() {
        let g = Grid::new(-1.0, 1.0, 21).unwrap();
        let f = bump(g, 0.0, 0.5, 1.0);
        let fam = gd(-1.0, 1.0);
        assert!(matches!(
            fam.apply_member(0.0, -0.1, &f),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            fam.apply_member(1.5, 0.1, &f),
            Err(Error::Usage(_))
        ));
        assert_eq!(fam.apply_member(0.3, 0.0, &f).unwrap(), f);
    }

    #[test]
    fn gaussian_preserves_constants_and_transports_ramps() {
        let g = Grid::new(-10.0, 10.0, 2001).unwrap();
        let fam = gd(-1.0, 1.0);
        let c = GridFunction::constant(g, 2.5);
        let out = fam.apply_member(0.7, 0.3, &c).unwrap();
        for &v in &out.samples()[g.interior(0.25)] {
            assert!((v - 2.5).abs() < 1e-10);
        }
        let x = GridFunction::from_fn(g, |x| x);
        let out = fam.apply_member(1.0, 0.25, &x).unwrap();
        for i in g.interior(0.25) {
            assert!((out.samples()[i] - (g.node(i) + 0.25)).abs() < 1e-10);
        }
    }

    #[test]
    fn compound_poisson_matches_direct_series() {
        let g = Grid::new(-10.0, 10.0, 2001).unwrap();
        let fam = KernelFamily::compound_poisson(
            LambdaSet::finite(vec![1.0]).unwrap(),
            JumpDistribution::dirac(1.0),
        )
        .unwrap();
        let f = GridFunction::from_fn(g, |x| {
            (-(x + 2.0) * (x + 2.0)).exp() + 0.1 * (x / 3.0).sin()
        });
        let t = std::f64::consts::LN_2;
        let out = fam.apply_member(1.0, t, &f).unwrap();
        // oracle: ½ Σ_{n≤30} (ln 2)^n / n! · f(x + n), straight from the closed form
        for i in (0..2001).step_by(37) {
            let x = g.node(i);
            let mut expect = 0.0;
            let mut coeff = 0.5;
            for n in 0..=30 {
                if n > 0 {
                    coeff *= t / n as f64;
                }
                let y = x + n as f64;
                let fy = if y <= 10.0 + 1e-9 {
                    (-(y + 2.0) * (y + 2.0)).exp() + 0.1 * (y / 3.0).sin()
                } else {
                    0.0
                };
                expect += coeff * fy;
            }
            assert!((out.samples()[i] - expect).abs() < 1e-11, "node {i}");
        }
    }

    #[test]
    fn poisson_truncation_bound() {
        assert_eq!(poisson_truncation(0.0, 1e-12), 0);
        for &m in &[0.01, 0.5, 1.0, 3.0, 10.0] {
            let n = poisson_truncation(m, 1e-12);
            // exact tail from the series
            let mut term = (-m).exp();
            let mut cdf = term;
            for k in 1..=n {
                term *= m / k as f64;
                cdf += term;
            }
            assert!(1.0 - cdf <= 1e-12 + 1e-15, "m = {m}, N = {n}");
            let w = poisson_weights(m, 1e-12);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn generators_on_constants_vanish() {
        let g = Grid::new(-3.0, 3.0, 301).unwrap();
        let c = GridFunction::constant(g, 4.0);
        let fams = [
            gd(-1.0, 1.0),
            KernelFamily::compound_poisson(
                LambdaSet::interval(0.0, 2.0).unwrap(),
                JumpDistribution::dirac(0.5),
            )
            .unwrap(),
            KernelFamily::pure_shift(LambdaSet::interval(-1.0, 1.0).unwrap()).unwrap(),
        ];
        for fam in &fams {
            let a = fam.member_generator(fam.lambdas().sup(), &c);
            for &v in &a.samples()[g.interior(0.2)] {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gaussian_generator_on_sine() {
        let g = Grid::new(-3.0, 3.0, 6001).unwrap();
        let f = GridFunction::from_fn(g, f64::sin);
        let a = gd(-2.0, 2.0).member_generator(2.0, &f);
        let mut worst: f64 = 0.0;
        for i in 0..g.n_nodes() {
            let x = g.node(i);
            worst = worst.max((a.samples()[i] - (-0.5 * x.sin() + 2.0 * x.cos())).abs());
        }
        // second-order stencils, one-sided ends included
        assert!(worst < 1e-4, "worst = {worst}");
    }

    #[test]
    fn compound_poisson_generator_single_atom() {
        let g = Grid::new(-5.0, 5.0, 101).unwrap();
        let f = GridFunction::from_fn(g, |x| x * x);
        let fam = KernelFamily::compound_poisson(
            LambdaSet::finite(vec![2.0]).unwrap(),
            JumpDistribution::dirac(1.0),
        )
        .unwrap();
        let a = fam.member_generator(2.0, &f);
        for i in 0..91 {
            let x = g.node(i);
            let expect = 2.0 * ((x + 1.0) * (x + 1.0) - x * x);
            assert!((a.samples()[i] - expect).abs() < 1e-9);
        }
        let two = fam
            .with_lambdas(LambdaSet::finite(vec![0.0, 1.0]).unwrap())
            .unwrap();
        let b = two.sup_generator(&f);
        for i in 0..91 {
            let x = g.node(i);
            let expect = ((x + 1.0) * (x + 1.0) - x * x).max(0.0);
            assert!((b.samples()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn sup_generator_matches_lambda_scan() {
        let g = Grid::new(-4.0, 4.0, 801).unwrap();
        let f = GridFunction::from_fn(g, f64::sin);
        let fam = gd(-1.0, 1.0);
        let b = fam.sup_generator(&f);
        let mut scan = fam.member_generator(-1.0, &f);
        for k in 0..=1000 {
            let l = -1.0 + 2.0 * k as f64 / 1000.0;
            scan = pointwise_max(&[scan, fam.member_generator(l, &f)]).unwrap();
        }
        for (a, s) in b.samples().iter().zip(scan.samples()) {
            assert!((a - s).abs() < 1e-12);
        }
        // at a critical point the sup reduces to the diffusion term
        let d2 = second_difference(&f);
        let i = g
            .interior(0.0)
            .find(|&i| (g.node(i) - std::f64::consts::FRAC_PI_2).abs() < 0.006)
            .unwrap();
        let d1 = first_difference(&f).samples()[i];
        assert!((b.samples()[i] - 0.5 * d2.samples()[i] - d1.abs()).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_norm_identities() {
        let g = Grid::new(-10.0, 10.0, 2049).unwrap();
        let f = bump(g, 0.0, 1.0, 1.0);
        let norm = PNorm::new(2.0).unwrap();
        let fam = gd(-1.0, 1.0);
        let c = fam.upper_bound_c(0.1, &f, norm).unwrap();
        let ratio = lp_norm(&c, norm) / lp_norm(&f, norm);
        assert!((ratio / 0.05f64.exp() - 1.0).abs() < 1e-3);

        let cp = KernelFamily::compound_poisson(
            LambdaSet::finite(vec![0.0, 1.0]).unwrap(),
            JumpDistribution::dirac(1.0),
        )
        .unwrap();
        let c = cp.upper_bound_c(0.5, &f, norm).unwrap();
        let ratio = lp_norm(&c, norm) / lp_norm(&f, norm);
        assert!((ratio / 0.5f64.exp() - 1.0).abs() < 1e-3);

        let shift = KernelFamily::pure_shift(LambdaSet::interval(-1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            shift.upper_bound_c(0.5, &f, norm),
            Err(Error::NoEnvelopeBound)
        ));
    }

    #[test]
    fn upper_bound_of_constant() {
        let g = Grid::new(-10.0, 10.0, 1001).unwrap();
        let c = GridFunction::constant(g, 3.0);
        let norm = PNorm::new(2.0).unwrap();
        let out = gd(-1.0, 1.0).upper_bound_c(0.2, &c, norm).unwrap();
        let expect = 3.0 * (0.2f64 / 2.0).exp();
        for &v in &out.samples()[g.interior(0.2)] {
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn family_spec_parsing() {
        let spec: FamilySpec = serde_json::from_str(
            r#"{"family":"compound_poisson","lambda_list":[0,1],"jump_atoms":[[1,1]]}"#,
        )
        .unwrap();
        let fam = spec.build().unwrap();
        assert_eq!(fam.name(), "compound_poisson");
        let bad: FamilySpec =
            serde_json::from_str(r#"{"family":"levy","lambda_interval":[0,1]}"#).unwrap();
        assert!(matches!(bad.build(), Err(Error::Config { key, .. }) if key == "family.family"));
        let missing: FamilySpec = serde_json::from_str(r#"{"family":"pure_shift"}"#).unwrap();
        assert!(missing.build().is_err());
    }
}
