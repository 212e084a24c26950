//! Discretized function space on a uniform 1-D mesh.
//!
//! A [`GridFunction`] is the sampled stand-in for an element of L^p(ℝ). Functions are
//! zero-extended outside `[lower, upper]`, norms use the rectangle rule with a fixed
//! left-to-right summation order, and shifts use linear interpolation, which keeps every
//! shift a positive (order-preserving) linear map.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offsets closer than this to an integer number of cells are treated as exact reindexing.
const SNAP_TOL: f64 = 1e-9;

/// Uniform mesh `x_i = lower + i·dx`, `i = 0..n_nodes`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: f64,
    upper: f64,
    n_nodes: usize,
    dx: f64,
}

impl Grid {
    pub fn new(lower: f64, upper: f64, n_nodes: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::config("grid", "endpoints must be finite"));
        }
        if upper <= lower {
            return Err(Error::config(
                "grid.upper",
                format!("upper ({upper}) must exceed lower ({lower})"),
            ));
        }
        if n_nodes < 2 {
            return Err(Error::config(
                "grid.n_nodes",
                format!("need at least 2 nodes, got {n_nodes}"),
            ));
        }
        Ok(Grid {
            lower,
            upper,
            n_nodes,
            dx: (upper - lower) / (n_nodes - 1) as f64,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.node(i))
    }

    /// Index range `[m, n - m)` that drops `margin·n` nodes on each side.
    pub fn interior(&self, margin: f64) -> std::ops::Range<usize> {
        let m = ((margin.clamp(0.0, 0.5)) * self.n_nodes as f64).floor() as usize;
        let m = m.min(self.n_nodes / 2);
        m..(self.n_nodes - m)
    }
}

/// Exponent of an L^p norm together with its conjugate `q` (`None` encodes q = ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PNorm {
    p: f64,
    q: Option<f64>,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::config(
                "norm.p",
                format!("p must lie in [1, ∞), got {p}"),
            ));
        }
        let q = if p == 1.0 { None } else { Some(p / (p - 1.0)) };
        Ok(PNorm { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> Option<f64> {
        self.q
    }
}

/// Samples of a real function on a [`Grid`]. Every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_nodes() {
            return Err(Error::usage(format!(
                "expected {} samples, got {}",
                grid.n_nodes(),
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!("sample {i} is not finite")));
        }
        Ok(GridFunction { grid, samples })
    }

    /// Internal constructor for values produced by finite arithmetic on finite inputs.
    pub(crate) fn from_vec(grid: Grid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_nodes());
        GridFunction { grid, samples }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let samples = grid.nodes().map(f).collect();
        GridFunction { grid, samples }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            samples: vec![c; grid.n_nodes()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_vec(self.grid, self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_same_grid(self, other);
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        GridFunction::from_vec(self.grid, samples)
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &GridFunction) -> GridFunction {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `x,value` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 48 + 8);
        out.push_str("x,value\n");
        for (i, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.grid.node(i), v);
        }
        out
    }

    /// Reads the CSV format written by [`GridFunction::write_csv`] onto `grid`; the `x`
    /// column must reproduce the grid nodes.
    pub fn read_csv<R: BufRead>(grid: Grid, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::config("initial.path", "empty CSV file"))?;
        if header.trim() != "x,value" {
            return Err(Error::config(
                "initial.path",
                "CSV header must be `x,value`",
            ));
        }
        let mut samples = Vec::with_capacity(grid.n_nodes());
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (x, v) = line.split_once(',').ok_or_else(|| {
                Error::config("initial.path", format!("row {row}: expected two columns"))
            })?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::config("initial.path", format!("row {row}: {e}")))
            };
            let (x, v) = (parse(x)?, parse(v)?);
            if row >= grid.n_nodes() || (x - grid.node(row)).abs() > 1e-9 * grid.dx().max(1.0) {
                return Err(Error::config(
                    "initial.path",
                    format!("row {row}: x = {x} does not match the configured grid"),
                ));
            }
            samples.push(v);
        }
        GridFunction::new(grid, samples).map_err(|e| Error::config("initial.path", e.to_string()))
    }
}

fn assert_same_grid(a: &GridFunction, b: &GridFunction) {
    assert!(a.grid == b.grid, "grid functions live on different grids");
}

pub fn check_same_grid(a: &GridFunction, b: &GridFunction) -> Result<()> {
    if a.grid == b.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub fn make_grid(lower: f64, upper: f64, n_nodes: usize) -> Result<Grid> {
    Grid::new(lower, upper, n_nodes)
}

/// `(Σ_i |f_i|^p dx)^{1/p}`, summed left to right.
pub fn lp_norm(f: &GridFunction, norm: PNorm) -> f64 {
    lp_norm_slice(&f.samples, f.grid.dx, norm)
}

/// L^p norm restricted to the nodes of `grid.interior(margin)`.
pub fn lp_norm_window(f: &GridFunction, norm: PNorm, margin: f64) -> f64 {
    let range = f.grid.interior(margin);
    lp_norm_slice(&f.samples[range], f.grid.dx, norm)
}

pub(crate) fn lp_norm_slice(values: &[f64], dx: f64, norm: PNorm) -> f64 {
    let p = norm.p();
    let mut acc = 0.0;
    if p == 1.0 {
        for v in values {
            acc += v.abs();
        }
        acc * dx
    } else if p == 2.0 {
        for v in values {
            acc += v * v;
        }
        (acc * dx).sqrt()
    } else {
        for v in values {
            acc += v.abs().powf(p);
        }
        (acc * dx).powf(1.0 / p)
    }
}

/// Offset in cells, snapped to the nearest integer when within [`SNAP_TOL`].
fn cells(delta: f64, dx: f64) -> f64 {
    let s = delta / dx;
    let r = s.round();
    if (s - r).abs() <= SNAP_TOL {
        r
    } else {
        s
    }
}

/// Value of the zero-extended interpolant at `x_i + s·dx`.
#[inline]
fn sample_at(values: &[f64], i: usize, s: f64) -> f64 {
    let n = values.len() as isize;
    let k = s.floor();
    let theta = s - k;
    let j = i as isize + k as isize;
    if theta == 0.0 {
        if (0..n).contains(&j) {
            values[j as usize]
        } else {
            0.0
        }
    } else if j >= 0 && j + 1 < n {
        (1.0 - theta) * values[j as usize] + theta * values[j as usize + 1]
    } else {
        0.0
    }
}

/// `g(x_i) = f(x_i + delta)` by linear interpolation, zero outside `[lower, upper]`.
pub fn interp_shift(f: &GridFunction, delta: f64) -> GridFunction {
    let s = cells(delta, f.grid.dx);
    let samples = (0..f.samples.len())
        .map(|i| sample_at(&f.samples, i, s))
        .collect();
    GridFunction::from_vec(f.grid, samples)
}

/// Supremum over `δ ∈ [lo, hi]` of the zero-extended interpolant at `x_i + δ`.
///
/// The interpolant is piecewise linear inside the grid and zero outside, so the sup is
/// attained at a grid node in the window, at one of the two window endpoints, or (when
/// the window leaves the grid) equals 0. Nodes are scanned with a monotone deque, so the
/// cost is O(n) regardless of the window width.
pub fn window_sup(f: &GridFunction, lo: f64, hi: f64) -> GridFunction {
    assert!(lo <= hi, "window must satisfy lo <= hi");
    let n = f.samples.len();
    let dx = f.grid.dx;
    let a = cells(lo, dx);
    let b = cells(hi, dx);
    let ka = a.ceil() as isize;
    let kb = b.floor() as isize;
    let values = &f.samples;

    let mut out = Vec::with_capacity(n);
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut next = 0isize;
    for i in 0..n {
        let mut best = sample_at(values, i, a).max(sample_at(values, i, b));
        if i as f64 + a < 0.0 || i as f64 + b > (n - 1) as f64 {
            best = best.max(0.0);
        }
        if ka <= kb {
            let lo_j = (i as isize + ka).max(0);
            let hi_j = (i as isize + kb).min(n as isize - 1);
            while next <= hi_j {
                if next >= 0 {
                    let v = values[next as usize];
                    while let Some(&back) = deque.back() {
                        if values[back] <= v {
                            deque.pop_back();
                        } else {
                            break;
                        }
                    }
                    deque.push_back(next as usize);
                }
                next += 1;
            }
            while let Some(&front) = deque.front() {
                if (front as isize) < lo_j {
                    deque.pop_front();
                } else {
                    break;
                }
            }
            if lo_j <= hi_j {
                if let Some(&front) = deque.front() {
                    best = best.max(values[front]);
                }
            }
        }
        out.push(best);
    }
    GridFunction::from_vec(f.grid, out)
}

/// Nodewise maximum of a nonempty list of functions on one grid.
pub fn pointwise_max(fs: &[GridFunction]) -> Result<GridFunction> {
    let (first, rest) = fs
        .split_first()
        .ok_or_else(|| Error::usage("pointwise_max needs a nonempty list"))?;
    let mut out = first.samples.clone();
    for g in rest {
        check_same_grid(first, g)?;
        for (o, &v) in out.iter_mut().zip(&g.samples) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(GridFunction::from_vec(first.grid, out))
}

/// Outcome of a pointwise order test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderCheck {
    pub holds: bool,
    /// `max_i (f_i − g_i)`
    pub worst: f64,
}

/// Is `f ≤ g + tol` at every node?
pub fn pointwise_leq(f: &GridFunction, g: &GridFunction, tol: f64) -> Result<OrderCheck> {
    check_same_grid(f, g)?;
    let worst = f
        .samples
        .iter()
        .zip(&g.samples)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(OrderCheck {
        holds: worst <= tol,
        worst,
    })
}

/// Smooth compactly supported bump `height·exp(1 − 1/(1 − ((x − center)/radius)²))`,
/// normalized so the peak equals `height`.
pub fn bump(grid: Grid, center: f64, radius: f64, height: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| {
        let u = (x - center) / radius;
        if u.abs() < 1.0 {
            height * (1.0 - 1.0 / (1.0 - u * u)).exp()
        } else {
            0.0
        }
    })
}

pub fn gaussian_profile(grid: Grid, center: f64, width: f64, height: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| {
        let u = (x - center) / width;
        height * (-0.5 * u * u).exp()
    })
}

pub fn ramp(grid: Grid, slope: f64, offset: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| slope * x + offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn make_grid_spacing() {
        let g = make_grid(-10.0, 10.0, 2001).unwrap();
        assert!((g.dx() - 0.01).abs() < 1e-15);
        let g = make_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.dx(), 1.0);
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0, 1.0]);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(matches!(make_grid(0.0, 1.0, 1), Err(Error::Config { .. })));
        assert!(matches!(make_grid(1.0, 1.0, 5), Err(Error::Config { .. })));
        assert!(matches!(make_grid(2.0, 1.0, 5), Err(Error::Config { .. })));
    }

    #[test]
    fn pnorm_conjugate() {
        let n = PNorm::new(2.0).unwrap();
        assert_eq!(n.q(), Some(2.0));
        let n = PNorm::new(3.0).unwrap();
        assert!((1.0 / 3.0 + 1.0 / n.q().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(PNorm::new(1.0).unwrap().q(), None);
        assert!(PNorm::new(0.5).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let g = unit_grid(101);
        let one = GridFunction::constant(g, 1.0);
        // rectangle rule: 101 nodes · dx 0.01 = 1.01
        let expect = 1.01f64.sqrt();
        assert!((lp_norm(&one, PNorm::new(2.0).unwrap()) - expect).abs() < 1e-12);
        assert_eq!(
            lp_norm(&GridFunction::zeros(g), PNorm::new(2.0).unwrap()),
            0.0
        );

        let fine = unit_grid(100_001);
        let x = GridFunction::from_fn(fine, |x| x);
        let n1 = lp_norm(&x, PNorm::new(1.0).unwrap());
        // rectangle rule over-counts by dx/2
        assert!((n1 - 0.5).abs() < 1e-5 + 0.5 * fine.dx());
    }

    #[test]
    fn interp_shift_examples() {
        let g = unit_grid(11);
        let c = GridFunction::constant(g, 3.0);
        let s = interp_shift(&c, 0.05);
        for v in &s.samples()[..9] {
            assert!((v - 3.0).abs() < 1e-15);
        }
        let r = ramp(g, 1.0, 0.0);
        let s = interp_shift(&r, 0.05);
        for i in 0..10 {
            assert!((s.samples()[i] - (g.node(i) + 0.05)).abs() < 1e-14);
        }
        // past the right end the interpolant is zero
        assert_eq!(s.samples()[10], 0.0);

        let f = GridFunction::from_fn(g, |x| (7.0 * x).sin());
        let s = interp_shift(&f, 3.0 * g.dx());
        for i in 0..8 {
            assert_eq!(s.samples()[i], f.samples()[i + 3]);
        }
        assert_eq!(&s.samples()[8..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pointwise_max_examples() {
        let g = Grid::new(0.0, 2.0, 3).unwrap();
        let a = GridFunction::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let b = GridFunction::new(g, vec![2.0, 0.0, 1.0]).unwrap();
        let c = GridFunction::new(g, vec![1.0, 2.0, 0.0]).unwrap();
        let m = pointwise_max(&[a.clone(), b, c]).unwrap();
        assert_eq!(m.samples(), &[2.0, 2.0, 2.0]);
        assert_eq!(pointwise_max(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(matches!(pointwise_max(&[]), Err(Error::Usage(_))));
        let other = GridFunction::zeros(Grid::new(0.0, 1.0, 3).unwrap());
        assert!(matches!(
            pointwise_max(&[a, other]),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn pointwise_leq_examples() {
        let g = Grid::new(0.0, 1.0, 2).unwrap();
        let f = GridFunction::new(g, vec![0.0, 2.0]).unwrap();
        let r = pointwise_leq(&f, &f, 0.0).unwrap();
        assert!(r.holds && r.worst <= 0.0);
        let zero = GridFunction::zeros(g);
        let tiny = GridFunction::constant(g, -1e-12);
        assert!(pointwise_leq(&zero, &tiny, 1e-9).unwrap().holds);
        let h = GridFunction::new(g, vec![1.0, 1.0]).unwrap();
        let r = pointwise_leq(&f, &h, 0.0).unwrap();
        assert!(!r.holds);
        assert_eq!(r.worst, 1.0);
    }

    #[test]
    fn window_sup_matches_dense_scan() {
        let g = Grid::new(-1.0, 1.0, 41).unwrap();
        let f = GridFunction::from_fn(g, |x| (3.0 * x).sin() + 0.3 * (11.0 * x).cos());
        for &(lo, hi) in &[
            (-0.13, 0.07),
            (-0.3, 0.3),
            (0.0, 0.0),
            (-0.01, 0.01),
            (0.05, 0.5),
        ] {
            let w = window_sup(&f, lo, hi);
            let mut brute = interp_shift(&f, lo);
            for k in 0..=4000 {
                let d = lo + (hi - lo) * k as f64 / 4000.0;
                brute = pointwise_max(&[brute, interp_shift(&f, d)]).unwrap();
            }
            for (a, b) in w.samples().iter().zip(brute.samples()) {
                assert!(a >= b, "window sup below scan: {a} < {b}");
                // the dense scan approaches the sup from below at rate O(step · slope)
                assert!(a - b < 2e-3, "window sup too large: {a} vs {b}");
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let g = Grid::new(-1.0, 1.0, 9).unwrap();
        let f = GridFunction::from_fn(g, |x| x.exp() / 3.0);
        let text = f.to_csv_string();
        assert!(text.starts_with("x,value\n"));
        let back = GridFunction::read_csv(g, text.as_bytes()).unwrap();
        assert_eq!(back, f);
        let wrong = Grid::new(-2.0, 1.0, 9).unwrap();
        assert!(GridFunction::read_csv(wrong, text.as_bytes()).is_err());
    }

    #[test]
    fn interior_window() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        assert_eq!(g.interior(0.05), 5..96);
        assert_eq!(g.interior(0.0), 0..101);
    }
}
