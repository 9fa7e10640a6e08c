//! Relaxation of a soliton under holding radiation and the locking verdicts
//! built on it.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{embed_profile, SolitonProfile};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, GridSpec};
use crate::integrator::{FieldModel, Integrator};
use crate::params::DimensionlessParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Locked,
    Beating,
    Delocalized,
    Extinguished,
    /// No holding beam: the soliton rotates at its own frequency.
    FreeRunning,
}

impl Outcome {
    pub fn code(outcome: Option<Outcome>) -> i32 {
        match outcome {
            Some(Outcome::Locked) => 0,
            Some(Outcome::Beating) => 1,
            Some(Outcome::Delocalized) => 2,
            Some(Outcome::Extinguished) => 3,
            Some(Outcome::FreeRunning) => 4,
            None => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Detector sampling period.
    pub sample_every: f64,
    pub deriv_tol: f64,
    pub beat_tol: f64,
    /// Shortest trailing window over which the derivative must stay small.
    pub lock_window: f64,
    pub delocalize_factor: f64,
    pub extinction_ratio: f64,
    pub keep_profile: bool,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            t_end: 2000.0,
            dt: 0.05,
            sample_every: 1.0,
            deriv_tol: 1e-6,
            beat_tol: 1e-4,
            lock_window: 50.0,
            delocalize_factor: 4.0,
            extinction_ratio: 2.0,
            keep_profile: true,
        }
    }
}

impl RelaxConfig {
    /// Run length of at least 2000 units or ten free-running periods.
    pub fn for_soliton(s: &SolitonProfile) -> Self {
        let t = if s.nu_s != 0.0 { (10.0 / s.nu_s.abs()).min(1e5) } else { 0.0 };
        RelaxConfig { t_end: t.max(2000.0), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.t_end, self.dt, self.sample_every, self.deriv_tol, self.beat_tol, self.delocalize_factor, self.extinction_ratio];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.lock_window >= 0.0) {
            return Err(Error::InvalidParams(format!("relaxation settings must be positive: {self:?}")));
        }
        if self.sample_every < self.dt {
            return Err(Error::InvalidParams("sample_every must be at least dt".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockingVerdict {
    pub theta: f64,
    pub i_in: f64,
    pub outcome: Option<Outcome>,
    /// Set when no detector fired before t_end.
    pub undecided: bool,
    pub beat_frequency: Option<f64>,
    pub t_final: f64,
    pub derivative_norm: f64,
    pub peak_amplitude: f64,
    pub background_amplitude: f64,
    pub initial_radius: f64,
    pub radius: f64,
    #[serde(skip)]
    pub final_profile: Option<ComplexField>,
}

struct Sample {
    t: f64,
    rate: f64,
    peak: f64,
    centre: C64,
    radius: f64,
}

/// Second moment of the intensity excess over the background.
pub fn localization_radius(f: &ComplexField) -> f64 {
    let bg = f.edge_amplitude();
    let bg2 = bg * bg;
    let xs = f.grid.coords(0);
    let ys = if f.grid.dim == 2 { f.grid.coords(1) } else { vec![0.0] };
    let nx = f.grid.n[0];
    let (mut w, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (k, v) in f.values.iter().enumerate() {
        let e = (v.norm_sqr() - bg2).max(0.0);
        w += e;
        mx += e * xs[k % nx];
        my += e * ys[k / nx];
    }
    if w == 0.0 {
        return 0.0;
    }
    let (cx, cy) = (mx / w, my / w);
    let mut s = 0.0;
    for (k, v) in f.values.iter().enumerate() {
        let e = (v.norm_sqr() - bg2).max(0.0);
        let (dx, dy) = (xs[k % nx] - cx, ys[k / nx] - cy);
        s += e * (dx * dx + dy * dy);
    }
    (s / w).sqrt()
}

/// Mean rotation rate ν of the sampled centre value, E ∝ e^{−iνt}.
fn winding_rate(samples: &[Sample]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mut phase = Vec::with_capacity(samples.len());
    let mut acc = samples[0].centre.arg();
    phase.push(acc);
    for w in samples.windows(2) {
        acc += (w[1].centre * w[0].centre.conj()).arg();
        phase.push(acc);
    }
    // least-squares slope
    let n = samples.len() as f64;
    let tm = samples.iter().map(|s| s.t).sum::<f64>() / n;
    let pm = phase.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (s, p) in samples.iter().zip(&phase) {
        num += (s.t - tm) * (p - pm);
        den += (s.t - tm) * (s.t - tm);
    }
    -num / den
}

/// Integrates the field equation with holding radiation from the free
/// soliton `s` (embedded on `grid`) and classifies the outcome.
pub fn relax_synchronized_soliton(s: &SolitonProfile, p: &DimensionlessParams, grid: &GridSpec, cfg: &RelaxConfig) -> Result<LockingVerdict> {
    cfg.validate()?;
    p.validate()?;
    let mut f = embed_profile(s, grid)?;
    let mut integ = Integrator::new(FieldModel::Reduced(p.clone()), grid, cfg.dt)?;
    let centre = f.argmax_abs();
    let per = (cfg.sample_every / cfg.dt).round().max(1.0) as usize;
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let r0 = localization_radius(&f);
    let mut samples: Vec<Sample> = Vec::new();
    let mut outcome = None;
    let mut rate = f64::NAN;
    for k in 1..=steps {
        if k % per != 0 {
            integ.step(&mut f)?;
            continue;
        }
        rate = integ.step_with_rate(&mut f)?;
        let t = integ.time();
        let peak = f.max_abs();
        let bg = f.edge_amplitude();
        let radius = localization_radius(&f);
        samples.push(Sample { t, rate, peak, centre: f.values[centre], radius });
        if p.e_in == 0.0 {
            continue;
        }
        if bg > 0.0 && peak < cfg.extinction_ratio * bg {
            outcome = Some(Outcome::Extinguished);
            break;
        }
        let tail = &samples[samples.len().saturating_sub(5)..];
        if radius > cfg.delocalize_factor * r0 && tail.len() == 5 && tail.windows(2).all(|w| w[1].radius > w[0].radius) {
            outcome = Some(Outcome::Delocalized);
            break;
        }
        let window = (0.1 * t).max(cfg.lock_window);
        if t >= 2.0 * window && samples.iter().rev().take_while(|s| s.t >= t - window).all(|s| s.rate <= cfg.deriv_tol) {
            outcome = Some(Outcome::Locked);
            break;
        }
    }
    let t_final = integ.time();
    let half: Vec<&Sample> = samples.iter().filter(|s| s.t >= 0.5 * t_final).collect();
    let mut beat_frequency = None;
    if outcome.is_none() {
        let tail: Vec<Sample> = half.iter().map(|s| Sample { t: s.t, rate: s.rate, peak: s.peak, centre: s.centre, radius: s.radius }).collect();
        if p.e_in == 0.0 {
            outcome = Some(Outcome::FreeRunning);
            beat_frequency = Some(winding_rate(&tail));
        } else {
            let hi = tail.iter().map(|s| s.peak).fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().map(|s| s.peak).fold(f64::INFINITY, f64::min);
            // a beat needs at least one full phase slip inside the window
            let nu = winding_rate(&tail);
            let span = tail.last().map_or(0.0, |l| l.t - tail[0].t);
            if tail.len() > 1 && (hi - lo) / (hi + lo) >= cfg.beat_tol && nu.abs() * span >= 2.0 * std::f64::consts::PI {
                outcome = Some(Outcome::Beating);
                beat_frequency = Some(nu);
            }
        }
    }
    let last = samples.last();
    Ok(LockingVerdict {
        theta: p.theta,
        i_in: p.i_in(),
        outcome,
        undecided: outcome.is_none(),
        beat_frequency,
        t_final,
        derivative_norm: rate,
        peak_amplitude: f.max_abs(),
        background_amplitude: f.edge_amplitude(),
        initial_radius: r0,
        radius: last.map(|s| s.radius).unwrap_or(r0),
        final_profile: cfg.keep_profile.then_some(f),
    })
}

/// Rotation rate of the free soliton under the time integrator itself at
/// θ = 0. It differs from the Newton eigenvalue by the splitting error and
/// is the reference for centring detuning scans.
pub fn free_running_frequency(s: &SolitonProfile, grid: &GridSpec, dt: f64) -> Result<f64> {
    let p = DimensionlessParams { theta: 0.0, e_in: 0.0, ..s.params.clone() };
    let mut f = embed_profile(s, grid)?;
    let mut integ = Integrator::new(FieldModel::Reduced(p), grid, dt)?;
    let centre = f.argmax_abs();
    let per = (1.0 / dt).round().max(1.0) as usize;
    let mut samples = Vec::new();
    for k in 1..=per * 60 {
        integ.step(&mut f)?;
        if k % per == 0 && k >= per * 10 {
            samples.push(Sample { t: integ.time(), rate: 0.0, peak: 0.0, centre: f.values[centre], radius: 0.0 });
        }
    }
    Ok(winding_rate(&samples) + s.params.theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockScan {
    pub thetas: Vec<f64>,
    pub i_ins: Vec<f64>,
    /// Row-major in θ: cell (a, b) is `cells[a * i_ins.len() + b]`.
    pub cells: Vec<LockingVerdict>,
    /// Smallest locking I_in per θ (undecided cells excluded).
    pub lower_boundary: Vec<(f64, f64)>,
    pub upper_boundary: Vec<(f64, f64)>,
    pub min_locking: Option<(f64, f64)>,
    pub undecided: usize,
}

/// Detuning grid centred on the free-running frequency with half-width
/// K √I_max, and a log-spaced holding intensity grid.
pub fn scan_grid(nu_run: f64, adler: f64, i_min: f64, i_max: f64, n_theta: usize, n_i: usize) -> (Vec<f64>, Vec<f64>) {
    let half = adler * i_max.sqrt();
    let thetas = (0..n_theta)
        .map(|k| if n_theta == 1 { nu_run } else { nu_run + half * (2.0 * k as f64 / (n_theta - 1) as f64 - 1.0) })
        .collect();
    let (a, b) = (i_min.ln(), i_max.ln());
    let i_ins = (0..n_i).map(|k| if n_i == 1 { i_min } else { (a + (b - a) * k as f64 / (n_i - 1) as f64).exp() }).collect();
    (thetas, i_ins)
}

/// Relaxes the soliton for every (θ, I_in) pair in parallel.
pub fn locking_domain_scan(s: &SolitonProfile, thetas: &[f64], i_ins: &[f64], grid: &GridSpec, cfg: &RelaxConfig) -> Result<LockScan> {
    if thetas.is_empty() || i_ins.is_empty() || i_ins.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParams("scan grids must be non-empty with I_in >= 0".into()));
    }
    let cfg = RelaxConfig { keep_profile: false, ..cfg.clone() };
    let jobs: Vec<(f64, f64)> = thetas.iter().flat_map(|t| i_ins.iter().map(move |i| (*t, *i))).collect();
    let cells = jobs
        .par_iter()
        .map(|(theta, i_in)| {
            let p = DimensionlessParams { theta: *theta, e_in: i_in.sqrt(), ..s.params.clone() };
            relax_synchronized_soliton(s, &p, grid, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (a, th) in thetas.iter().enumerate() {
        let locked: Vec<f64> = cells[a * i_ins.len()..(a + 1) * i_ins.len()]
            .iter()
            .filter(|c| c.outcome == Some(Outcome::Locked))
            .map(|c| c.i_in)
            .collect();
        if let (Some(lo), Some(hi)) = (locked.iter().cloned().reduce(f64::min), locked.iter().cloned().reduce(f64::max)) {
            lower.push((*th, lo));
            upper.push((*th, hi));
        }
    }
    let min_locking = lower.iter().cloned().reduce(|a, b| if b.1 < a.1 { b } else { a });
    let undecided = cells.iter().filter(|c| c.undecided).count();
    Ok(LockScan { thetas: thetas.to_vec(), i_ins: i_ins.to_vec(), cells, lower_boundary: lower, upper_boundary: upper, min_locking, undecided })
}
