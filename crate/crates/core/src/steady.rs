//! Homogeneous stationary states, their hysteresis structure and their
//! stability against transverse perturbations.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DimensionlessParams;

/// Re λ at or below this counts as stable.
pub const STABILITY_TOL: f64 = 1e-9;
pub const DEFAULT_NQ: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    /// cos φ > 0: the field follows the holding beam (f < 0).
    Inphase,
    /// cos φ < 0 (f > 0).
    Antiphase,
    /// No holding beam, phase is free.
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousBranchPoint {
    pub intensity: f64,
    pub phi: f64,
    pub i_in: f64,
    pub theta: f64,
    pub label: BranchLabel,
    pub stable: bool,
    pub max_growth: f64,
}

impl HomogeneousBranchPoint {
    pub fn amplitude(&self) -> C64 {
        C64::from_polar(self.intensity.sqrt(), self.phi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionResult {
    pub q: Vec<f64>,
    pub lambda: Vec<[C64; 2]>,
    pub max_increment: f64,
}

/// I(θ² + f(I)²), the squared modulus of the stationary equation.
#[inline]
pub fn response(i: f64, p: &DimensionlessParams) -> f64 {
    let f = p.gain(i);
    i * (p.theta * p.theta + f * f)
}

#[inline]
fn response_slope(i: f64, p: &DimensionlessParams) -> f64 {
    let f = p.gain(i);
    p.theta * p.theta + f * f + 2.0 * i * f * p.gain_slope(i)
}

fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Upper end of the intensity range that can host roots for `i_in`.
fn intensity_ceiling(i_in: f64, p: &DimensionlessParams) -> f64 {
    // f ≤ −1/2 once I ≥ b(2g0 − 1), so the response exceeds I/4 beyond it
    2.0 * (p.b * (2.0 * p.g0 - 1.0)).max(4.0 * i_in).max(1.0)
}

/// Turning points of the response on (lo, hi), ascending.
pub fn response_folds(lo: f64, hi: f64, p: &DimensionlessParams) -> Vec<f64> {
    const N: usize = 4000;
    let (l0, l1) = (lo.ln(), hi.ln());
    let mut out = Vec::new();
    let mut prev_i = lo;
    let mut prev = response_slope(lo, p);
    for k in 1..=N {
        let i = (l0 + (l1 - l0) * k as f64 / N as f64).exp();
        let s = response_slope(i, p);
        if (s > 0.0) != (prev > 0.0) {
            out.push(bisect(prev_i, i, |x| response_slope(x, p)));
        }
        prev = s;
        prev_i = i;
    }
    out
}

/// Closed-form roots of a 2×2 stability block.
fn block_eigs(p: &DimensionlessParams, i: f64, q2: f64) -> [C64; 2] {
    let f = p.gain(i);
    let fi = p.gain_slope(i) * i;
    let w = p.theta - q2;
    let s = C64::new(fi * fi - w * w, 0.0).sqrt();
    let c = C64::new(f + fi, 0.0);
    [c + s, c - s]
}

/// Growth spectrum of perturbations e^{iq·ρ} about the homogeneous state.
pub fn homogeneous_stability(point: &HomogeneousBranchPoint, p: &DimensionlessParams, q_max: Option<f64>, n_q: usize) -> DispersionResult {
    let i = point.intensity;
    let fi = p.gain_slope(i) * i;
    let q_max = q_max.unwrap_or_else(|| 4.0 * (fi.abs().max(p.theta.abs()) + 1.0).sqrt());
    let n_q = n_q.max(2);
    let mut q: Vec<f64> = (0..n_q).map(|k| q_max * k as f64 / (n_q - 1) as f64).collect();
    if p.theta > 0.0 && p.theta.sqrt() < q_max {
        // the band edge where θ = q² maximizes the growth
        q.push(p.theta.sqrt());
        q.sort_by(f64::total_cmp);
    }
    let lambda: Vec<[C64; 2]> = q.iter().map(|qq| block_eigs(p, i, qq * qq)).collect();
    let max_increment = lambda.iter().flat_map(|l| l.iter().map(|v| v.re)).fold(f64::NEG_INFINITY, f64::max);
    DispersionResult { q, lambda, max_increment }
}

fn make_point(i: f64, i_in: f64, p: &DimensionlessParams) -> HomogeneousBranchPoint {
    let f = p.gain(i);
    let (phi, label) = if i_in > 0.0 && i > 0.0 {
        let phi = -C64::new(-f, -p.theta).arg();
        (phi, if f < 0.0 { BranchLabel::Inphase } else { BranchLabel::Antiphase })
    } else {
        (0.0, BranchLabel::Free)
    };
    let mut pt = HomogeneousBranchPoint { intensity: i, phi, i_in, theta: p.theta, label, stable: false, max_growth: 0.0 };
    let d = homogeneous_stability(&pt, p, None, DEFAULT_NQ);
    pt.max_growth = d.max_increment;
    pt.stable = d.max_increment <= STABILITY_TOL;
    pt
}

/// All homogeneous states for holding intensity `i_in`, ascending in I.
pub fn homogeneous_solutions(i_in: f64, p: &DimensionlessParams) -> Result<Vec<HomogeneousBranchPoint>> {
    p.validate()?;
    if !(i_in >= 0.0 && i_in.is_finite()) {
        return Err(Error::Domain(format!("holding intensity must be non-negative, got {i_in}")));
    }
    let mut roots = Vec::new();
    if i_in == 0.0 {
        roots.push(0.0);
        if p.theta == 0.0 {
            roots.extend(p.gain_zeros());
        }
    } else {
        let fmax = (1.0 + p.a0).max((p.g0 - 1.0).abs()).max(1.0);
        let lo = 0.5 * i_in / (p.theta * p.theta + fmax * fmax);
        let hi = intensity_ceiling(i_in, p);
        let mut nodes = vec![lo];
        nodes.extend(response_folds(lo, hi, p));
        nodes.push(hi);
        let g = |x: f64| response(x, p) - i_in;
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ga, gb) = (g(a), g(b));
            if ga == 0.0 {
                roots.push(a);
            } else if (ga > 0.0) != (gb > 0.0) {
                roots.push(bisect(a, b, g));
            }
        }
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs());
    }
    Ok(roots.into_iter().map(|i| make_point(i, i_in, p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub points: Vec<HomogeneousBranchPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub i_in: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hysteresis {
    pub theta: f64,
    pub branches: Vec<Branch>,
    pub folds: Vec<Fold>,
    /// Holding-intensity intervals where at least two stable states coexist.
    pub bistable: Vec<(f64, f64)>,
}

impl Hysteresis {
    /// Number of states at `i_in` (from the fold structure).
    pub fn count_at(&self, i_in: f64) -> usize {
        self.branches
            .iter()
            .filter(|b| {
                let (x0, x1) = (b.points.first().unwrap().i_in, b.points.last().unwrap().i_in);
                let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
                i_in >= lo && i_in < hi
            })
            .count()
    }

    pub fn is_bistable(&self, i_in: f64) -> bool {
        self.bistable.iter().any(|(a, b)| i_in >= *a && i_in <= *b)
    }
}

/// Tracks every branch of the response curve across [i_in_lo, i_in_hi].
///
/// The curve I_in = I(θ² + f²) is single valued in I, so branches are the
/// monotone pieces between its turning points and folds are located to
/// bisection precision. Each branch is sampled at the sweep values of I_in
/// it covers (found by bisection within the branch) plus its end points.
pub fn branch_continuation(i_in_grid: &[f64], p: &DimensionlessParams) -> Result<Hysteresis> {
    p.validate()?;
    if i_in_grid.windows(2).any(|w| !(w[1] > w[0])) || i_in_grid.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParams("sweep grid must be non-negative and strictly increasing".into()));
    }
    let top = i_in_grid.last().copied().unwrap_or(0.0);
    let hi = intensity_ceiling(top, p);
    let lo = 1e-12;
    let turning = response_folds(lo, hi, p);
    let mut nodes = vec![lo];
    nodes.extend(&turning);
    nodes.push(hi);
    let folds = turning.iter().map(|i| Fold { i_in: response(*i, p), intensity: *i }).collect();

    let mut branches = Vec::new();
    for (id, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (ra, rb) = (response(a, p), response(b, p));
        let (rlo, rhi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let mut is: Vec<f64> = vec![a];
        for &x in i_in_grid.iter().filter(|x| **x > rlo && **x < rhi) {
            is.push(bisect(a, b, |i| response(i, p) - x));
        }
        is.push(b);
        is.sort_by(f64::total_cmp);
        let points = is.into_iter().map(|i| make_point(i, response(i, p), p)).collect();
        branches.push(Branch { id, points });
    }
    let bistable = bistable_intervals(&nodes, p);
    Ok(Hysteresis { theta: p.theta, branches, folds, bistable })
}

/// Intervals of I_in over which at least two stable states coexist.
fn bistable_intervals(nodes: &[f64], p: &DimensionlessParams) -> Vec<(f64, f64)> {
    const SAMPLES: usize = 400;
    let stable_at = |i: f64| make_point(i, response(i, p), p).stable;
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for w in nodes.windows(2) {
        let (l0, l1) = (w[0].ln(), w[1].ln());
        let mut grid: Vec<f64> = (0..=SAMPLES).map(|k| (l0 + (l1 - l0) * k as f64 / SAMPLES as f64).exp()).collect();
        grid[0] = w[0];
        grid[SAMPLES] = w[1];
        let flags: Vec<bool> = grid.iter().map(|i| stable_at(*i)).collect();
        let mut start: Option<f64> = None;
        for k in 0..=SAMPLES {
            let edge = |a: f64, b: f64| {
                // refine the stability change between two samples
                let sa = stable_at(a);
                let (mut a, mut b) = (a, b);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if stable_at(m) == sa { a = m } else { b = m }
                }
                0.5 * (a + b)
            };
            match (start, flags[k]) {
                (None, true) => start = Some(if k == 0 { grid[0] } else { edge(grid[k - 1], grid[k]) }),
                (Some(s), false) => {
                    runs.push((s, edge(grid[k - 1], grid[k])));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, grid[SAMPLES]));
        }
    }
    // map intensity runs to I_in intervals and find double coverage
    let mut iv: Vec<(f64, f64)> = runs
        .iter()
        .map(|(a, b)| {
            let (x, y) = (response(*a, p), response(*b, p));
            if x < y { (x, y) } else { (y, x) }
        })
        .collect();
    if p.theta == 0.0 {
        // the zero state is stable whenever f(0) < 0 and sits at I_in = 0
        if p.gain(0.0) < 0.0 {
            iv.push((0.0, 0.0));
        }
    }
    let mut events: Vec<(f64, i32)> = Vec::new();
    for (a, b) in &iv {
        events.push((*a, 1));
        events.push((*b, -1));
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
    let mut out = Vec::new();
    let mut depth = 0;
    let mut open = 0.0;
    for (x, d) in events {
        let before = depth;
        depth += d;
        if before < 2 && depth >= 2 {
            open = x;
        } else if before >= 2 && depth < 2 && x > open {
            out.push((open, x));
        }
    }
    out
}

/// Bistability intervals for a set of detunings, computed in parallel.
pub fn bistability_map(thetas: &[f64], i_in_max: f64, p: &DimensionlessParams) -> Result<Vec<Hysteresis>> {
    thetas
        .par_iter()
        .map(|th| {
            let q = DimensionlessParams { theta: *th, ..p.clone() };
            branch_continuation(&[0.0, i_in_max], &q)
        })
        .collect()
}
