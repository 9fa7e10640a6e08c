//! Split-step pseudospectral integration of the closed field equation.

use log::warn;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Frame, GridSpec, Spectral};
use crate::noise::{sample_noise_scaled, NoiseScaling};
use crate::params::{gain_rhs_holding, DimensionalParams, DimensionlessParams};

/// Below this many cells the pointwise step stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Local part of the field equation, in the holding-field frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldModel {
    Reduced(DimensionlessParams),
    Physical(DimensionalParams),
}

impl FieldModel {
    #[inline]
    pub fn local_rhs(&self, e: C64) -> C64 {
        match self {
            FieldModel::Reduced(p) => p.e_in + C64::new(p.gain(e.norm_sqr()), p.theta) * e,
            FieldModel::Physical(d) => gain_rhs_holding(e, d),
        }
    }

    /// Coefficient D in ∂E/∂t = iDΔE.
    pub fn dispersion(&self) -> f64 {
        match self {
            FieldModel::Reduced(_) => 1.0,
            FieldModel::Physical(d) => d.c / (2.0 * d.k0),
        }
    }

    pub fn frame(&self) -> Frame {
        match self {
            FieldModel::Reduced(_) => Frame::Holding,
            FieldModel::Physical(_) => Frame::HoldingPhysical,
        }
    }

    /// Upper bound of |f| over all intensities, in the model's time units.
    pub fn gain_bound(&self) -> f64 {
        match self {
            FieldModel::Reduced(p) => (1.0 + p.a0).max((p.g0 - 1.0).abs()).max(1.0),
            FieldModel::Physical(d) => 0.5 * (d.kappa + d.gain_a() + d.gain_p()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    StrangSplit,
    EulerMaruyamaSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    /// Time, L2 norm, max |E|, centroid and spectral tail fraction.
    Summary,
    /// Full field copy.
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub noise: bool,
    pub observers: Vec<(f64, Probe)>,
    pub seed: u64,
}

impl EvolveConfig {
    pub fn deterministic(dt: f64, t_end: f64) -> Self {
        EvolveConfig { dt, t_end, scheme: Scheme::StrangSplit, noise: false, observers: Vec::new(), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.noise && self.scheme != Scheme::EulerMaruyamaSplit {
            return Err(Error::InvalidParams("noise requires the euler-maruyama-split scheme".into()));
        }
        for (p, _) in &self.observers {
            if !(*p > 0.0) {
                return Err(Error::InvalidParams(format!("observer period must be positive, got {p}")));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverRecord {
    pub time: f64,
    pub l2: f64,
    pub max_abs: f64,
    pub centroid: [f64; 2],
    /// Fraction of spectral energy in the top third of |q|.
    pub tail: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub field: ComplexField,
    pub time: f64,
    pub steps: usize,
    pub records: Vec<ObserverRecord>,
    pub snapshots: Vec<ComplexField>,
    pub warnings: Vec<String>,
}

/// Exact spectral propagation over `dt`: E_q → E_q exp(−i D q² dt).
pub fn linear_step(field: &mut ComplexField, dt: f64, dispersion: f64) {
    let mut sp = Spectral::new(&field.grid);
    sp.forward(&mut field.values);
    for (v, q2) in field.values.iter_mut().zip(sp.q_squared()) {
        *v *= C64::from_polar(1.0, -dispersion * q2 * dt);
    }
    sp.inverse(&mut field.values);
}

/// Pointwise RK4 on dE/dt = E_in + iθE + f(|E|²)E.
pub fn nonlinear_step(field: &mut ComplexField, dt: f64, p: &DimensionlessParams) -> Result<()> {
    let model = FieldModel::Reduced(p.clone());
    rk4_all(&model, &mut field.values, dt);
    if !field.is_finite() {
        return Err(Error::NonFinite { step: 0, time: dt });
    }
    Ok(())
}

#[inline]
fn rk4(model: &FieldModel, e: C64, dt: f64) -> C64 {
    let k1 = model.local_rhs(e);
    let k2 = model.local_rhs(e + k1 * (0.5 * dt));
    let k3 = model.local_rhs(e + k2 * (0.5 * dt));
    let k4 = model.local_rhs(e + k3 * dt);
    e + (k1 + 2.0 * (k2 + k3) + k4) * (dt / 6.0)
}

fn rk4_all(model: &FieldModel, values: &mut [C64], dt: f64) {
    if values.len() >= PAR_THRESHOLD {
        values.par_iter_mut().for_each(|v| *v = rk4(model, *v, dt));
    } else {
        values.iter_mut().for_each(|v| *v = rk4(model, *v, dt));
    }
}

/// Reusable stepper bound to one grid, model and step size.
pub struct Integrator {
    model: FieldModel,
    spectral: Spectral,
    half: Vec<C64>,
    dt: f64,
    noise: Option<(DimensionalParams, NoiseScaling, u64)>,
    step: u64,
    time: f64,
    prev: Vec<C64>,
}

impl Integrator {
    pub fn new(model: FieldModel, grid: &GridSpec, dt: f64) -> Result<Self> {
        grid.validate()?;
        if let FieldModel::Reduced(p) = &model {
            p.validate()?;
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        let spectral = Spectral::new(grid);
        let d = model.dispersion();
        let half = spectral.q_squared().iter().map(|q2| C64::from_polar(1.0, -d * q2 * 0.5 * dt)).collect();
        Ok(Integrator { model, spectral, half, dt, noise: None, step: 0, time: 0.0, prev: Vec::new() })
    }

    /// Enables Langevin sources; reduced-model fields are converted with the
    /// scales of `d`.
    pub fn with_noise(mut self, d: DimensionalParams, seed: u64) -> Result<Self> {
        d.validate()?;
        let scaling = match self.model {
            FieldModel::Reduced(_) => NoiseScaling::reduced(&d, self.spectral.grid().dim)?,
            FieldModel::Physical(_) => NoiseScaling::PHYSICAL,
        };
        self.noise = Some((d, scaling, seed));
        Ok(self)
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64, step: u64) {
        self.time = t;
        self.step = step;
    }

    /// Advances one Strang step L(dt/2) N(dt) L(dt/2), adding the noise
    /// increment after the nonlinear substep when enabled.
    pub fn step(&mut self, field: &mut ComplexField) -> Result<()> {
        let increment = match &self.noise {
            Some((d, scaling, seed)) => {
                let s = sample_noise_scaled(field, d, self.dt, *seed, self.step, *scaling)?;
                Some(s)
            }
            None => None,
        };
        self.apply_half(&mut field.values);
        rk4_all(&self.model, &mut field.values, self.dt);
        if let Some(s) = increment {
            for ((v, a), b) in field.values.iter_mut().zip(&s.phi.values).zip(&s.phi_p.values) {
                *v += (a + b) * self.dt;
            }
        }
        self.apply_half(&mut field.values);
        self.step += 1;
        self.time += self.dt;
        if !field.is_finite() {
            return Err(Error::NonFinite { step: self.step as usize, time: self.time });
        }
        Ok(())
    }

    /// One step, returning max |E(t+dt) − E(t)| / dt.
    pub fn step_with_rate(&mut self, field: &mut ComplexField) -> Result<f64> {
        self.prev.clear();
        self.prev.extend_from_slice(&field.values);
        self.step(field)?;
        let m = self.prev.iter().zip(&field.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        Ok(m / self.dt)
    }

    fn apply_half(&mut self, values: &mut [C64]) {
        self.spectral.forward(values);
        for (v, m) in values.iter_mut().zip(&self.half) {
            *v *= m;
        }
        self.spectral.inverse(values);
    }

    /// Fraction of spectral energy above two thirds of the largest |q|.
    pub fn spectral_tail(&mut self, field: &ComplexField) -> f64 {
        let mut buf = field.values.clone();
        self.spectral.forward(&mut buf);
        let q2 = self.spectral.q_squared();
        let qmax2 = q2.iter().cloned().fold(0.0, f64::max);
        let cut = qmax2 * 4.0 / 9.0;
        let (mut tot, mut tail) = (0.0, 0.0);
        for (v, q) in buf.iter().zip(q2) {
            let e = v.norm_sqr();
            tot += e;
            if *q > cut {
                tail += e;
            }
        }
        if tot == 0.0 { 0.0 } else { tail / tot }
    }

    fn record(&mut self, field: &ComplexField) -> ObserverRecord {
        ObserverRecord {
            time: self.time,
            l2: field.l2_norm(),
            max_abs: field.max_abs(),
            centroid: field.centroid(),
            tail: self.spectral_tail(field),
        }
    }
}

pub const TAIL_WARN: f64 = 1e-8;

/// Runs `cfg` from `field`. With noise on, `d` supplies the source model.
pub fn evolve(field: &ComplexField, cfg: &EvolveConfig, model: FieldModel, d: Option<&DimensionalParams>) -> Result<Trajectory> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let bound = cfg.dt * model.gain_bound();
    if bound > 0.5 {
        let w = format!("dt * max|f| = {bound:.3} exceeds 0.5");
        warn!("{w}");
        warnings.push(w);
    }
    if field.frame != model.frame() {
        return Err(Error::InvalidParams(format!(
            "field frame '{}' does not match the model frame '{}'",
            field.frame.tag(),
            model.frame().tag()
        )));
    }
    let mut integ = Integrator::new(model, &field.grid, cfg.dt)?;
    if cfg.noise {
        let d = d.ok_or_else(|| Error::InvalidParams("noise requires dimensional parameters".into()))?;
        integ = integ.with_noise(d.clone(), cfg.seed)?;
    }
    let mut f = field.clone();
    let steps = cfg.steps();
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut observe = |integ: &mut Integrator, f: &ComplexField, k: usize| {
        for (period, probe) in &cfg.observers {
            let per = (period / cfg.dt).round().max(1.0) as usize;
            if k % per == 0 {
                match probe {
                    Probe::Summary => records.push(integ.record(f)),
                    Probe::Snapshot => snapshots.push(f.clone()),
                }
            }
        }
    };
    observe(&mut integ, &f, 0);
    for k in 1..=steps {
        integ.step(&mut f)?;
        observe(&mut integ, &f, k);
    }
    let tail = integ.spectral_tail(&f);
    if tail > TAIL_WARN {
        let w = format!("spectral tail energy fraction {tail:.3e} exceeds {TAIL_WARN:e}");
        warn!("{w}");
        warnings.push(w);
    }
    Ok(Trajectory { field: f, time: integ.time(), steps, records, snapshots, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reference(theta: f64, e_in: f64) -> DimensionlessParams {
        DimensionlessParams::new(2.08, 2.0, 10.0, theta, e_in).unwrap()
    }

    #[test]
    fn plane_wave_is_exact() {
        let g = GridSpec::line(64, 20.0).unwrap();
        let q = 2.0 * PI * 5.0 / 20.0;
        let dt = 0.37;
        let mut f = ComplexField::from_fn(g, Frame::Holding, |x, _| C64::from_polar(1.0, q * x));
        let want: Vec<C64> = f.values.iter().map(|v| v * C64::from_polar(1.0, -q * q * dt)).collect();
        linear_step(&mut f, dt, 1.0);
        let err = f.values.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn uniform_field_unchanged_by_diffraction() {
        let g = GridSpec::square(16, 5.0).unwrap();
        let mut f = ComplexField::from_fn(g, Frame::Holding, |_, _| C64::new(0.3, -0.2));
        let before = f.clone();
        linear_step(&mut f, 1.3, 1.0);
        assert!(f.max_diff(&before) < 1e-15);
    }

    #[test]
    fn even_data_keeps_hermitian_spectrum() {
        let g = GridSpec::line(64, 16.0).unwrap();
        let mut f = ComplexField::from_fn(g.clone(), Frame::Holding, |x, _| C64::new((-x * x / 4.0).exp(), 0.0));
        linear_step(&mut f, 0.8, 1.0);
        // real-even data maps to a spectrum with E_{-q} = E_q
        let mut sp = Spectral::new(&g);
        sp.forward(&mut f.values);
        // coordinates are centred at n/2, so the transform picks up (−1)^k
        let n = 64;
        for k in 1..n / 2 {
            let (a, b) = (f.values[k], f.values[n - k]);
            assert!((a - b).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn nonlinear_substep_cases() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let mut z = ComplexField::zeros(g.clone(), Frame::Holding);
        nonlinear_step(&mut z, 0.1, &reference(0.0, 0.0)).unwrap();
        assert!(z.values.iter().all(|v| *v == C64::new(0.0, 0.0)));
        let loss = DimensionlessParams::new(0.0, 0.0, 1.0, 0.0, 0.0).unwrap();
        let mut f = ComplexField::from_fn(g.clone(), Frame::Holding, |x, _| C64::new(1.0 + x, 0.5));
        let start = f.clone();
        nonlinear_step(&mut f, 0.05, &loss).unwrap();
        for (a, b) in f.values.iter().zip(&start.values) {
            // RK4 truncation is h⁵/120 ≈ 2.6e-9 here
            assert!((a.norm() - b.norm() * (-0.05f64).exp()).abs() < 1e-8 * b.norm());
        }
        let p = reference(0.0, 0.0);
        let root = p.gain_zeros()[0];
        let e = C64::from_polar(root.sqrt(), 0.4);
        assert!(FieldModel::Reduced(p).local_rhs(e).norm() <= 1e-10);
    }

    #[test]
    fn free_evolution_conserves_norm() {
        let g = GridSpec::line(128, 30.0).unwrap();
        let f0 = ComplexField::from_fn(g.clone(), Frame::Holding, |x, _| C64::new((-x * x).exp(), 0.3 * (-(x - 2.0).powi(2)).exp()));
        let neutral = DimensionlessParams { g0: 1.0, a0: 0.0, b: 1e300, theta: 0.0, e_in: 0.0, s_a: None, s_p: None };
        // f ≡ −1 + g0/(1+I/b) ≈ 0
        let mut integ = Integrator::new(FieldModel::Reduced(neutral), &g, 0.01).unwrap();
        let mut f = f0.clone();
        for _ in 0..1000 {
            integ.step(&mut f).unwrap();
        }
        assert!((f.l2_norm() - f0.l2_norm()).abs() < 1e-10 * f0.l2_norm());
    }

    #[test]
    fn translation_and_gauge() {
        let g = GridSpec::line(64, 20.0).unwrap();
        let p = reference(0.3, 0.0);
        let f0 = ComplexField::from_fn(g.clone(), Frame::Holding, |x, _| C64::new(2.0 * (-(x - 1.0).powi(2)).exp(), 0.3 * x.sin()));
        let cfg = EvolveConfig::deterministic(0.01, 1.0);
        let base = evolve(&f0, &cfg, FieldModel::Reduced(p.clone()), None).unwrap().field;
        let m = 7;
        let mut shifted = f0.clone();
        shifted.values.rotate_right(m);
        let mut s = evolve(&shifted, &cfg, FieldModel::Reduced(p.clone()), None).unwrap().field;
        s.values.rotate_left(m);
        assert!(s.max_diff(&base) < 1e-12);
        let rot = C64::from_polar(1.0, 0.9);
        let mut r0 = f0.clone();
        r0.values.iter_mut().for_each(|v| *v *= rot);
        let r = evolve(&r0, &cfg, FieldModel::Reduced(p), None).unwrap().field;
        let err = r.values.iter().zip(&base.values).map(|(a, b)| (a - b * rot).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn frame_mismatch_rejected() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let f = ComplexField::zeros(g, Frame::Cavity);
        let cfg = EvolveConfig::deterministic(0.1, 1.0);
        assert!(evolve(&f, &cfg, FieldModel::Reduced(reference(0.0, 0.0)), None).is_err());
    }

    #[test]
    fn non_finite_aborts() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let mut f = ComplexField::zeros(g.clone(), Frame::Holding);
        f.values[3] = C64::new(f64::NAN, 0.0);
        let mut integ = Integrator::new(FieldModel::Reduced(reference(0.0, 0.0)), &g, 0.1).unwrap();
        assert!(matches!(integ.step(&mut f), Err(Error::NonFinite { .. })));
    }
}
