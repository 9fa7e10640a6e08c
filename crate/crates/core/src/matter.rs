//! Full field + matter dynamics (seven coupled equations), used to audit
//! the adiabatic closure.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Frame, GridSpec, Spectral};
use crate::integrator::{FieldModel, Integrator};
use crate::params::{atomic_steady_state, DimensionalParams, DimensionlessParams};

#[derive(Clone, Debug, PartialEq)]
pub struct MatterState {
    pub a: ComplexField,
    pub sigma: Vec<C64>,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub pi: Vec<C64>,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
}

pub const VARIABLES: [&str; 7] = ["a", "sigma", "sigma1", "sigma2", "pi", "pi1", "pi2"];

impl MatterState {
    /// Atoms at their adiabatic means for the given field.
    pub fn adiabatic(a: ComplexField, d: &DimensionalParams) -> Self {
        let n = a.values.len();
        let mut s = MatterState::zeros(a.grid.clone(), a.frame);
        for k in 0..n {
            let m = atomic_steady_state(a.values[k], d);
            s.sigma[k] = m.sigma;
            s.sigma1[k] = m.sigma1;
            s.sigma2[k] = m.sigma2;
            s.pi[k] = m.pi;
            s.pi1[k] = m.pi1;
            s.pi2[k] = m.pi2;
        }
        s.a = a;
        s
    }

    pub fn zeros(grid: GridSpec, frame: Frame) -> Self {
        let n = grid.len();
        MatterState {
            a: ComplexField::zeros(grid, frame),
            sigma: vec![C64::new(0.0, 0.0); n],
            sigma1: vec![0.0; n],
            sigma2: vec![0.0; n],
            pi: vec![C64::new(0.0, 0.0); n],
            pi1: vec![0.0; n],
            pi2: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.a.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite()
            && self.sigma.iter().chain(&self.pi).all(|v| v.re.is_finite() && v.im.is_finite())
            && self.sigma1.iter().chain(&self.sigma2).chain(&self.pi1).chain(&self.pi2).all(|v| v.is_finite())
    }

    /// All seven variables as complex fields, tagged by name.
    pub fn named_fields(&self) -> Vec<(&'static str, ComplexField)> {
        let wrap = |v: Vec<C64>| ComplexField { grid: self.a.grid.clone(), values: v, frame: self.a.frame };
        let real = |v: &[f64]| wrap(v.iter().map(|x| C64::new(*x, 0.0)).collect());
        vec![
            ("a", self.a.clone()),
            ("sigma", wrap(self.sigma.clone())),
            ("sigma1", real(&self.sigma1)),
            ("sigma2", real(&self.sigma2)),
            ("pi", wrap(self.pi.clone())),
            ("pi1", real(&self.pi1)),
            ("pi2", real(&self.pi2)),
        ]
    }

    pub fn from_named_fields(fields: &[(String, ComplexField)]) -> Result<Self> {
        let get = |name: &str| {
            fields
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, f)| f)
                .ok_or_else(|| Error::Format(format!("missing variable '{name}'")))
        };
        let a = get("a")?.clone();
        let real = |name: &str| get(name).map(|f| f.values.iter().map(|v| v.re).collect::<Vec<_>>());
        let s = MatterState {
            sigma: get("sigma")?.values.clone(),
            sigma1: real("sigma1")?,
            sigma2: real("sigma2")?,
            pi: get("pi")?.values.clone(),
            pi1: real("pi1")?,
            pi2: real("pi2")?,
            a,
        };
        let n = s.len();
        if [s.sigma.len(), s.sigma1.len(), s.sigma2.len(), s.pi.len(), s.pi1.len(), s.pi2.len()].iter().any(|l| *l != n) {
            return Err(Error::Format("variables live on different grids".into()));
        }
        Ok(s)
    }
}

/// Linear decay/rotation coefficients of the atomic variables.
#[derive(Clone, Copy, Debug)]
struct AtomRates {
    sigma: C64,
    sigma1: f64,
    sigma2: f64,
    pi: C64,
    pi1: f64,
    pi2: f64,
}

fn atom_rates(d: &DimensionalParams, omega: f64) -> AtomRates {
    AtomRates {
        sigma: C64::new(-d.gamma_a, d.delta_a + omega),
        sigma1: -d.gamma_a1,
        sigma2: -d.gamma_a2,
        pi: C64::new(-d.gamma_p, d.delta_p + omega),
        pi1: -d.gamma_p1,
        pi2: -d.gamma_p2,
    }
}

/// Coupling (non-decay) terms of all seven equations.
fn couplings(s: &MatterState, d: &DimensionalParams, injection: C64) -> MatterState {
    let n = s.len();
    let mut out = MatterState::zeros(s.a.grid.clone(), s.a.frame);
    for k in 0..n {
        let a = s.a.values[k];
        let ex = 2.0 * d.g * (s.sigma[k].conj() * a).re;
        let exp_ = 2.0 * d.g_p * (s.pi[k].conj() * a).re;
        out.a.values[k] = 0.5 * d.kappa * injection + d.g * s.sigma[k] + d.g_p * s.pi[k];
        out.sigma[k] = d.g * (s.sigma2[k] - s.sigma1[k]) * a;
        out.sigma1[k] = ex;
        out.sigma2[k] = d.r_a - ex;
        out.pi[k] = d.g_p * (s.pi2[k] - s.pi1[k]) * a;
        out.pi1[k] = d.r_p + exp_;
        out.pi2[k] = -exp_;
    }
    out
}

/// Right-hand sides of the seven equations in the cavity frame at time `t`.
pub fn matter_rhs(state: &MatterState, d: &DimensionalParams, t: f64) -> MatterState {
    let inj = C64::from_polar(d.a_in, -d.nu_in * t);
    let mut out = couplings(state, d, inj);
    let r = atom_rates(d, 0.0);
    let mut lap = state.a.values.clone();
    let mut sp = Spectral::new(&state.a.grid);
    sp.forward(&mut lap);
    for (v, q2) in lap.iter_mut().zip(sp.q_squared()) {
        *v *= C64::new(0.0, -d.c / (2.0 * d.k0) * q2);
    }
    sp.inverse(&mut lap);
    for k in 0..state.len() {
        out.a.values[k] += lap[k] - 0.5 * d.kappa * state.a.values[k];
        out.sigma[k] += r.sigma * state.sigma[k];
        out.sigma1[k] += r.sigma1 * state.sigma1[k];
        out.sigma2[k] += r.sigma2 * state.sigma2[k];
        out.pi[k] += r.pi * state.pi[k];
        out.pi1[k] += r.pi1 * state.pi1[k];
        out.pi2[k] += r.pi2 * state.pi2[k];
    }
    out
}

/// φ1(z) = (e^z − 1)/z and φ2(z) = (e^z − 1 − z)/z², with series near 0.
fn phis(z: C64) -> (C64, C64) {
    if z.norm() < 0.5 {
        let (mut p1, mut p2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let mut term = C64::new(1.0, 0.0); // z^k / k!
        for k in 0..20 {
            p1 += term / (k as f64 + 1.0);
            p2 += term / ((k as f64 + 1.0) * (k as f64 + 2.0));
            term = term * z / (k as f64 + 1.0);
        }
        (p1, p2)
    } else {
        let e = z.exp();
        ((e - 1.0) / z, (e - 1.0 - z) / (z * z))
    }
}

/// ETD2 coefficients for one linear rate: (e^{ch}, hφ1, hφ2).
#[derive(Clone, Copy, Debug)]
struct Etd {
    e: C64,
    p1: C64,
    p2: C64,
}

impl Etd {
    fn new(c: C64, h: f64) -> Self {
        let (p1, p2) = phis(c * h);
        Etd { e: (c * h).exp(), p1: p1 * h, p2: p2 * h }
    }
}

struct EtdTable {
    field: Vec<Etd>,
    sigma: Etd,
    sigma1: Etd,
    sigma2: Etd,
    pi: Etd,
    pi1: Etd,
    pi2: Etd,
}

impl EtdTable {
    fn new(d: &DimensionalParams, q2: &[f64], h: f64) -> Self {
        let r = atom_rates(d, d.nu_in);
        let disp = d.c / (2.0 * d.k0);
        let re = |x: f64| Etd::new(C64::new(x, 0.0), h);
        EtdTable {
            field: q2.iter().map(|q| Etd::new(C64::new(-0.5 * d.kappa, d.nu_in - disp * q), h)).collect(),
            sigma: Etd::new(r.sigma, h),
            sigma1: re(r.sigma1),
            sigma2: re(r.sigma2),
            pi: Etd::new(r.pi, h),
            pi1: re(r.pi1),
            pi2: re(r.pi2),
        }
    }
}

/// Result of [`evolve_full`].
#[derive(Clone, Debug)]
pub struct MatterEvolution {
    pub state: MatterState,
    pub time: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// (t, mean β_p|a|²) at the requested observation period.
    pub history: Vec<(f64, f64)>,
    /// max(Γ's, γ's)/κ.
    pub stiffness_ratio: f64,
    pub warnings: Vec<String>,
}

/// Relative local error accepted per step before it is split in two.
const LOCAL_TOL: f64 = 1e-6;
const MAX_SPLIT_DEPTH: u32 = 24;
const NEGATIVE_ABORT: f64 = 1e-6;

/// Largest rate of the explicitly treated couplings: slow populations
/// relaxing under saturation, the field and the holding detuning.
pub fn explicit_rate(state: &MatterState, d: &DimensionalParams) -> f64 {
    let n2 = state.a.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let i = (d.beta() * n2).max(1.0);
    let ip = (d.beta_p() * n2).max(1.0);
    [d.kappa, d.gamma_a2 * (1.0 + i), d.gamma_p1 * (1.0 + ip), d.nu_in.abs()]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Integrates the seven equations in the holding-field frame with a
/// second-order exponential time-differencing scheme. Linear decay and
/// diffraction are exact; couplings are explicit. Steps whose local error
/// estimate is too large, or that produce invalid states, are split.
pub fn evolve_full(state: &MatterState, dt: f64, t_end: f64, d: &DimensionalParams, observe_every: Option<f64>) -> Result<MatterEvolution> {
    d.validate()?;
    if state.a.frame != Frame::HoldingPhysical {
        return Err(Error::InvalidParams("matter state must be in the physical holding frame".into()));
    }
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("need dt > 0 and t_end >= 0, got {dt}, {t_end}")));
    }
    let rate = explicit_rate(state, d);
    if dt * rate > 0.1 {
        return Err(Error::InvalidParams(format!(
            "dt * explicit rate = {:.3e} exceeds 0.1; reduce dt below {:.3e}",
            dt * rate,
            0.1 / rate
        )));
    }
    let max_rate = [d.gamma_a, d.gamma_a1, d.gamma_a2, d.gamma_p, d.gamma_p1, d.gamma_p2].into_iter().fold(0.0, f64::max);
    let stiffness_ratio = max_rate / d.kappa;
    let mut warnings: Vec<String> = d.validate()?.warnings;

    let mut sp = Spectral::new(&state.a.grid);
    let q2 = sp.q_squared().to_vec();
    let mut tables: Vec<EtdTable> = Vec::new();
    let table = |tables: &mut Vec<EtdTable>, depth: u32| {
        while tables.len() <= depth as usize {
            let h = dt / f64::powi(2.0, tables.len() as i32);
            tables.push(EtdTable::new(d, &q2, h));
        }
    };
    let scales = PopScales::new(d);

    let steps = (t_end / dt).round() as usize;
    let obs_every = observe_every.map(|p| ((p / dt).round() as usize).max(1));
    let mut s = state.clone();
    let mut history = Vec::new();
    let mut accepted = 0;
    let mut rejected = 0;
    let mut t = 0.0;
    let bp = d.beta_p();
    let mean_i = |s: &MatterState| bp * s.a.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64;
    if obs_every.is_some() {
        history.push((0.0, mean_i(&s)));
    }
    for k in 1..=steps {
        // stack of pending sub-steps: depth
        let mut pending = vec![0u32];
        while let Some(depth) = pending.pop() {
            table(&mut tables, depth);
            let tab = &tables[depth as usize];
            match etd2_step(&s, d, tab, &mut sp, &scales) {
                Ok(next) => {
                    s = next;
                    accepted += 1;
                }
                Err(reason) => {
                    rejected += 1;
                    if depth >= MAX_SPLIT_DEPTH {
                        return Err(reason.into_error(t, dt));
                    }
                    pending.push(depth + 1);
                    pending.push(depth + 1);
                }
            }
        }
        t = k as f64 * dt;
        if let Some(e) = obs_every {
            if k % e == 0 {
                history.push((t, mean_i(&s)));
            }
        }
    }
    for k in 0..s.len() {
        for (v, sc) in [(s.sigma1[k], scales.s1), (s.sigma2[k], scales.s2), (s.pi1[k], scales.p1), (s.pi2[k], scales.p2)] {
            if v < 0.0 && sc > 0.0 {
                warnings.push(format!("small negative population {v:e} at cell {k}"));
            }
        }
    }
    warnings.dedup();
    Ok(MatterEvolution { state: s, time: t, accepted_steps: accepted, rejected_steps: rejected, history, stiffness_ratio, warnings })
}

struct PopScales {
    s1: f64,
    s2: f64,
    p1: f64,
    p2: f64,
}

impl PopScales {
    fn new(d: &DimensionalParams) -> Self {
        PopScales {
            s1: d.r_a / d.gamma_a1,
            s2: d.r_a / d.gamma_a2,
            p1: d.r_p / d.gamma_p1,
            p2: d.r_p / d.gamma_p2,
        }
    }
}

enum Reject {
    NonFinite,
    Negative { index: usize, value: f64, scale: f64 },
    Error,
}

impl Reject {
    fn into_error(self, time: f64, dt: f64) -> Error {
        match self {
            Reject::NonFinite => Error::NonFinite { step: 0, time },
            Reject::Negative { index, value, scale } => Error::NegativePopulation { index, value, scale },
            Reject::Error => Error::StepRejected { dt: dt / f64::powi(2.0, MAX_SPLIT_DEPTH as i32), time },
        }
    }
}

fn etd_apply(u: &MatterState, n0: &MatterState, n1: Option<(&MatterState, &MatterState)>, tab: &EtdTable, sp: &mut Spectral) -> MatterState {
    // u_new = e u + hφ1 N0 [+ hφ2 (N1 − N0) for the corrector, applied to `base`]
    let mut out = u.clone();
    let len = u.len();
    match n1 {
        None => {
            let mut fa = u.a.values.clone();
            let mut fn0 = n0.a.values.clone();
            sp.forward(&mut fa);
            sp.forward(&mut fn0);
            for q in 0..len {
                let c = tab.field[q];
                fa[q] = c.e * fa[q] + c.p1 * fn0[q];
            }
            sp.inverse(&mut fa);
            out.a.values = fa;
            for k in 0..len {
                out.sigma[k] = tab.sigma.e * u.sigma[k] + tab.sigma.p1 * n0.sigma[k];
                out.sigma1[k] = (tab.sigma1.e * u.sigma1[k] + tab.sigma1.p1 * n0.sigma1[k]).re;
                out.sigma2[k] = (tab.sigma2.e * u.sigma2[k] + tab.sigma2.p1 * n0.sigma2[k]).re;
                out.pi[k] = tab.pi.e * u.pi[k] + tab.pi.p1 * n0.pi[k];
                out.pi1[k] = (tab.pi1.e * u.pi1[k] + tab.pi1.p1 * n0.pi1[k]).re;
                out.pi2[k] = (tab.pi2.e * u.pi2[k] + tab.pi2.p1 * n0.pi2[k]).re;
            }
        }
        Some((base, n_pred)) => {
            // here `u` is the predictor a_n and `base` is unused beyond shape
            let _ = base;
            let mut diff: Vec<C64> = n_pred.a.values.iter().zip(&n0.a.values).map(|(x, y)| x - y).collect();
            let mut fa = u.a.values.clone();
            sp.forward(&mut diff);
            sp.forward(&mut fa);
            for q in 0..len {
                fa[q] += tab.field[q].p2 * diff[q];
            }
            sp.inverse(&mut fa);
            out.a.values = fa;
            for k in 0..len {
                out.sigma[k] = u.sigma[k] + tab.sigma.p2 * (n_pred.sigma[k] - n0.sigma[k]);
                out.sigma1[k] = u.sigma1[k] + (tab.sigma1.p2 * (n_pred.sigma1[k] - n0.sigma1[k])).re;
                out.sigma2[k] = u.sigma2[k] + (tab.sigma2.p2 * (n_pred.sigma2[k] - n0.sigma2[k])).re;
                out.pi[k] = u.pi[k] + tab.pi.p2 * (n_pred.pi[k] - n0.pi[k]);
                out.pi1[k] = u.pi1[k] + (tab.pi1.p2 * (n_pred.pi1[k] - n0.pi1[k])).re;
                out.pi2[k] = u.pi2[k] + (tab.pi2.p2 * (n_pred.pi2[k] - n0.pi2[k])).re;
            }
        }
    }
    out
}

fn etd2_step(u: &MatterState, d: &DimensionalParams, tab: &EtdTable, sp: &mut Spectral, sc: &PopScales) -> std::result::Result<MatterState, Reject> {
    let inj = C64::new(d.a_in, 0.0);
    let n0 = couplings(u, d, inj);
    let pred = etd_apply(u, &n0, None, tab, sp);
    let n1 = couplings(&pred, d, inj);
    let next = etd_apply(&pred, &n0, Some((u, &n1)), tab, sp);
    if !next.is_finite() {
        return Err(Reject::NonFinite);
    }
    // predictor/corrector gap as local error estimate
    let mut err: f64 = 0.0;
    let a_scale = next.a.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-12 * (1.0 + d.a_in));
    for k in 0..u.len() {
        err = err.max((next.a.values[k] - pred.a.values[k]).norm() / a_scale);
        for (x, y, s) in [
            (next.sigma1[k], pred.sigma1[k], sc.s1),
            (next.sigma2[k], pred.sigma2[k], sc.s2),
            (next.pi1[k], pred.pi1[k], sc.p1),
            (next.pi2[k], pred.pi2[k], sc.p2),
        ] {
            if s > 0.0 {
                err = err.max((x - y).abs() / s);
            }
        }
    }
    for k in 0..u.len() {
        for (v, s) in [(next.sigma1[k], sc.s1), (next.sigma2[k], sc.s2), (next.pi1[k], sc.p1), (next.pi2[k], sc.p2)] {
            if v < -NEGATIVE_ABORT * s {
                return Err(Reject::Negative { index: k, value: v, scale: s });
            }
        }
    }
    if err > LOCAL_TOL.sqrt() {
        return Err(Reject::Error);
    }
    Ok(next)
}

/// One row of the adiabatic audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticPoint {
    /// κ / min(atomic rates).
    pub ratio: f64,
    /// Γ2/Γ1 = γ1/γ2 used for this ratio.
    pub hierarchy: f64,
    /// Steady reduced intensity β_p|a|² of the full model.
    pub intensity_full: f64,
    /// Same for the closed field equation.
    pub intensity_closed: f64,
    /// |I_full − I_closed| / I_closed at the end of the run.
    pub steady_discrepancy: f64,
    /// max_t |I_full(t) − I_closed(t)| / I_closed(end).
    pub trajectory_discrepancy: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticConfig {
    /// Grid points of the uniform test field.
    pub n: usize,
    /// Initial reduced intensity |E|².
    pub initial_intensity: f64,
    /// Run length in units of 1/κ.
    pub t_end_kappa: f64,
    /// Matter step in units of the slowest atomic time.
    pub dt_matter: f64,
    /// Closed-equation step in reduced time units.
    pub dt_closed: f64,
    /// Hierarchy as a function of the ratio: hierarchy = ratio^exponent.
    pub hierarchy_exponent: f64,
}

impl Default for AdiabaticConfig {
    fn default() -> Self {
        AdiabaticConfig {
            n: 16,
            initial_intensity: 3.0,
            t_end_kappa: 150.0,
            dt_matter: 0.01,
            dt_closed: 0.02,
            hierarchy_exponent: 2.0,
        }
    }
}

/// Runs the full model and the closed equation from the same uniform state
/// for each field-to-atom rate ratio and compares the intensities.
pub fn adiabatic_check(p: &DimensionlessParams, ratios: &[f64], cfg: &AdiabaticConfig) -> Result<Vec<AdiabaticPoint>> {
    p.validate()?;
    let mut out = Vec::new();
    for &ratio in ratios {
        let h = ratio.powf(cfg.hierarchy_exponent);
        let d = DimensionalParams::adiabatic_family(p, ratio, h)?;
        let grid = GridSpec::line(cfg.n, 1.0)?;
        let scales = d.scales()?;
        let a0 = C64::new(cfg.initial_intensity.sqrt() * scales.field, 0.0);
        let field = ComplexField::from_fn(grid.clone(), Frame::HoldingPhysical, |_, _| a0);
        let t_end = cfg.t_end_kappa / d.kappa;
        let n_obs = 300usize;
        let period = t_end / n_obs as f64;

        let full = evolve_full(&MatterState::adiabatic(field.clone(), &d), cfg.dt_matter, t_end, &d, Some(period))?;

        let dt_c = cfg.dt_closed * scales.time;
        let per_obs = ((period / dt_c).round() as usize).max(1);
        let dt_c = period / per_obs as f64;
        let mut integ = Integrator::new(FieldModel::Physical(d.clone()), &grid, dt_c)?;
        let mut f = field;
        let bp = d.beta_p();
        let mean_i = |f: &ComplexField| bp * f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / f.values.len() as f64;
        let mut closed = vec![(0.0, mean_i(&f))];
        for j in 1..=n_obs {
            for _ in 0..per_obs {
                integ.step(&mut f)?;
            }
            closed.push((j as f64 * period, mean_i(&f)));
        }
        let ic = closed.last().unwrap().1;
        let ifull = full.history.last().unwrap().1;
        let traj = full
            .history
            .iter()
            .zip(&closed)
            .map(|((_, x), (_, y))| (x - y).abs())
            .fold(0.0, f64::max)
            / ic;
        out.push(AdiabaticPoint {
            ratio,
            hierarchy: h,
            intensity_full: ifull,
            intensity_closed: ic,
            steady_discrepancy: (ifull - ic).abs() / ic,
            trajectory_discrepancy: traj,
            t_end,
        });
    }
    Ok(out)
}
