//! Free laser solitons: stationary localized solutions E = A(ρ) e^{−iν t} of
//! the field equation without holding radiation, their stability, and their
//! synchronization by a weak holding beam.
//!
//! Substituting the ansatz gives ΔA + (ν + θ)A = i f(|A|²)A, a nonlinear
//! eigenproblem for (A, ν). It is discretized on a periodic Fourier grid and
//! reduced to the even half of the domain, so a 1D line and the radial
//! problem of a 2D axisymmetric soliton share one representation: samples
//! on the centred grid x_j = (j − n/2)dx, with r = |x| in the radial case.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Frame, GridSpec};
use crate::params::DimensionlessParams;

pub mod locking;
pub mod stability;

pub use locking::{
    free_running_frequency, localization_radius, locking_domain_scan, relax_synchronized_soliton, scan_grid, LockScan,
    LockingVerdict, Outcome, RelaxConfig,
};
pub use stability::{adler_coefficient, soliton_stability, Mode, NeutralKind, StabilityReport};

pub const NEWTON_MAX_ITER: usize = 200;
/// Converged once the max-norm residual falls below this times max|A|.
pub const NEWTON_TOL: f64 = 1e-11;
/// Peak over background below which a profile counts as homogeneous.
pub const LOCALIZATION_RATIO: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// One transverse dimension.
    Line,
    /// Two transverse dimensions with radial symmetry; the line holds A(|x|).
    Radial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub geometry: Geometry,
    pub field: ComplexField,
    pub nu_s: f64,
    pub params: DimensionlessParams,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub stable: Option<bool>,
    pub peak_amplitude: f64,
    pub background_amplitude: f64,
}

impl SolitonProfile {
    /// ν + θ, the rotation rate that enters the stationary equation.
    pub fn omega(&self) -> f64 {
        self.nu_s + self.params.theta
    }

    /// (r, A) for r = 0 .. R, the stored half of the profile.
    pub fn radial_samples(&self) -> (Vec<f64>, Vec<C64>) {
        let n = self.field.grid.n[0];
        let dx = self.field.grid.dx();
        let c = n / 2;
        (0..=n / 2).map(|k| (k as f64 * dx, self.field.values[(c + k) % n])).unzip()
    }

    pub fn peak_intensity(&self) -> f64 {
        self.peak_amplitude * self.peak_amplitude
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolitonGuess {
    /// √I_top sech(ρ/w), with I_top the upper root of f.
    Sech { amplitude: f64, width: f64, omega: f64 },
    /// An explicit profile on the target grid plus a frequency guess ν + θ.
    Profile { values: Vec<C64>, omega: f64 },
}

impl SolitonGuess {
    /// The default starts: widths 1, 2, 4 at the upper zero of f.
    pub fn defaults(p: &DimensionlessParams) -> Vec<SolitonGuess> {
        let top = p.gain_zeros().last().copied().unwrap_or(p.g0 * p.b).max(1.0);
        [1.0, 2.0, 4.0]
            .iter()
            .map(|w| SolitonGuess::Sech { amplitude: top.sqrt(), width: *w, omega: 0.0 })
            .collect()
    }
}

/// Dense circulant generated by the spectral multiplier `mult(q)`.
pub(crate) fn circulant(n: usize, length: f64, mult: impl Fn(f64, bool) -> f64) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<C64> = (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            C64::new(mult(2.0 * std::f64::consts::PI * kk / length, k == n / 2), 0.0)
        })
        .collect();
    ifft.process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

/// First derivative multiplier iq has an imaginary spectrum; its kernel is
/// produced from sin transforms directly.
pub(crate) fn derivative_kernel(n: usize, length: f64) -> Vec<f64> {
    let dx = length / n as f64;
    // c_j = Σ_k i q_k e^{i q_k x_j} / n with the Nyquist mode dropped
    (0..n)
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            let mut s = 0.0;
            for k in 1..n / 2 {
                let q = 2.0 * std::f64::consts::PI * k as f64 / length;
                s -= 2.0 * q * (q * j as f64 * dx).sin();
            }
            s / n as f64
        })
        .collect()
}

/// Operators on one parity class of the centred periodic grid.
#[derive(Clone, Debug)]
pub(crate) struct ParityBasis {
    pub n: usize,
    pub dx: f64,
    pub odd: bool,
    /// Offsets k ≥ 0 from the centre that carry unknowns.
    pub offsets: Vec<usize>,
}

impl ParityBasis {
    pub fn new(n: usize, dx: f64, odd: bool, skip_centre: bool) -> Self {
        let offsets = (0..=n / 2).filter(|k| !(odd && (*k == 0 || *k == n / 2)) && !(skip_centre && *k == 0)).collect();
        ParityBasis { n, dx, odd, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    fn sign(&self) -> f64 {
        if self.odd { -1.0 } else { 1.0 }
    }

    /// Restricts a full circulant (kernel c, D_jk = c_{j−k}) to this class.
    fn reduce(&self, c: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let cen = n / 2;
        let s = self.sign();
        let m = self.len();
        let mut out = DMatrix::zeros(m, m);
        for (r, &kr) in self.offsets.iter().enumerate() {
            let row = (cen + kr) % n;
            for (col, &kc) in self.offsets.iter().enumerate() {
                let a = (cen + kc) % n;
                let b = (cen + n - kc) % n;
                let mut v = c[(row + n - a) % n];
                if b != a {
                    v += s * c[(row + n - b) % n];
                }
                out[(r, col)] = v;
            }
        }
        out
    }

    /// Transverse Laplacian on this class; `azimuthal` selects the radial
    /// operator A'' + A'/r − m²A/r² instead of the line operator.
    pub fn laplacian(&self, azimuthal: Option<u32>) -> DMatrix<f64> {
        let length = self.n as f64 * self.dx;
        let d2 = circulant(self.n, length, |q, _| -q * q);
        let mut lap = self.reduce(&d2);
        if let Some(m) = azimuthal {
            let d1 = self.reduce(&derivative_kernel(self.n, length));
            let m2 = (m * m) as f64;
            for (r, &k) in self.offsets.iter().enumerate() {
                if k == 0 {
                    // regularity at the origin: Δ = 2 A''
                    let row = lap.row(r).clone_owned();
                    lap.row_mut(r).copy_from(&(row * 2.0));
                    continue;
                }
                let x = k as f64 * self.dx;
                for c in 0..self.len() {
                    lap[(r, c)] += d1[(r, c)] / x;
                }
                lap[(r, r)] -= m2 / (x * x);
            }
        }
        lap
    }

    pub fn gather(&self, full: &[C64]) -> (DVector<f64>, DVector<f64>) {
        let cen = self.n / 2;
        let u = DVector::from_iterator(self.len(), self.offsets.iter().map(|k| full[(cen + k) % self.n].re));
        let v = DVector::from_iterator(self.len(), self.offsets.iter().map(|k| full[(cen + k) % self.n].im));
        (u, v)
    }

    pub fn scatter(&self, u: &DVector<f64>, v: &DVector<f64>) -> Vec<C64> {
        let n = self.n;
        let cen = n / 2;
        let s = self.sign();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, &k) in self.offsets.iter().enumerate() {
            let z = C64::new(u[i], v[i]);
            out[(cen + k) % n] = z;
            out[(cen + n - k) % n] = z * s;
        }
        out
    }
}

fn stationary_residual(lap: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, omega: f64, p: &DimensionlessParams) -> (DVector<f64>, DVector<f64>) {
    let lu = lap * u;
    let lv = lap * v;
    let m = u.len();
    let mut ru = DVector::zeros(m);
    let mut rv = DVector::zeros(m);
    for i in 0..m {
        let f = p.gain(u[i] * u[i] + v[i] * v[i]);
        ru[i] = lu[i] + omega * u[i] + f * v[i];
        rv[i] = lv[i] + omega * v[i] - f * u[i];
    }
    (ru, rv)
}

fn max_norm(ru: &DVector<f64>, rv: &DVector<f64>, gauge: f64) -> f64 {
    ru.amax().max(rv.amax()).max(gauge.abs())
}

struct NewtonOutcome {
    u: DVector<f64>,
    v: DVector<f64>,
    omega: f64,
    history: Vec<f64>,
    converged: bool,
}

/// Newton with backtracking on the max-norm residual. Unknowns are the even
/// samples (u, v) and ω = ν + θ; Im A(0) = 0 fixes the phase.
fn newton(lap: &DMatrix<f64>, mut u: DVector<f64>, mut v: DVector<f64>, mut omega: f64, p: &DimensionlessParams) -> NewtonOutcome {
    let m = u.len();
    let mut history = Vec::new();
    let (mut ru, mut rv) = stationary_residual(lap, &u, &v, omega, p);
    let mut r = max_norm(&ru, &rv, v[0]);
    history.push(r);
    for _ in 0..NEWTON_MAX_ITER {
        let amp = u.iter().zip(v.iter()).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
        if r <= NEWTON_TOL * amp.max(1e-300) && amp > 0.0 {
            return NewtonOutcome { u, v, omega, history, converged: true };
        }
        let mut j = DMatrix::<f64>::zeros(2 * m + 1, 2 * m + 1);
        j.view_mut((0, 0), (m, m)).copy_from(lap);
        j.view_mut((m, m), (m, m)).copy_from(lap);
        for i in 0..m {
            let int = u[i] * u[i] + v[i] * v[i];
            let f = p.gain(int);
            let fp = p.gain_slope(int);
            j[(i, i)] += omega + 2.0 * fp * u[i] * v[i];
            j[(i, m + i)] = f + 2.0 * fp * v[i] * v[i];
            j[(i, 2 * m)] = u[i];
            j[(m + i, i)] = -f - 2.0 * fp * u[i] * u[i];
            j[(m + i, m + i)] += omega - 2.0 * fp * u[i] * v[i];
            j[(m + i, 2 * m)] = v[i];
        }
        j[(2 * m, m)] = 1.0;
        let mut rhs = DVector::zeros(2 * m + 1);
        rhs.rows_mut(0, m).copy_from(&(-&ru));
        rhs.rows_mut(m, m).copy_from(&(-&rv));
        rhs[2 * m] = -v[0];
        let Some(d) = j.lu().solve(&rhs) else {
            break;
        };
        if !d.iter().all(|x| x.is_finite()) {
            break;
        }
        let mut lam = 1.0;
        let accepted = loop {
            let u2 = &u + d.rows(0, m) * lam;
            let v2 = &v + d.rows(m, m) * lam;
            let o2 = omega + lam * d[2 * m];
            let (a, b) = stationary_residual(lap, &u2, &v2, o2, p);
            let r2 = max_norm(&a, &b, v2[0]);
            if r2 < (1.0 - 1e-4 * lam) * r {
                u = u2;
                v = v2;
                omega = o2;
                ru = a;
                rv = b;
                r = r2;
                break true;
            }
            lam *= 0.5;
            if lam < 1e-4 {
                break false;
            }
        };
        history.push(r);
        if !accepted {
            break;
        }
    }
    let amp = u.iter().zip(v.iter()).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    let converged = amp > 0.0 && r <= NEWTON_TOL * amp;
    NewtonOutcome { u, v, omega, history, converged }
}

/// The line grid on which a profile of `geometry` lives.
pub fn profile_grid(n: usize, length: f64) -> Result<GridSpec> {
    GridSpec::line(n, length)
}

/// Finds a free soliton (E_in = 0). Without an explicit guess the default
/// sech starts are tried and the converged profile with the largest peak is
/// returned, which for the laser-with-absorber family is the stable one.
pub fn find_free_soliton(p: &DimensionlessParams, geometry: Geometry, grid: &GridSpec, guess: Option<SolitonGuess>) -> Result<SolitonProfile> {
    p.validate()?;
    grid.validate()?;
    if grid.dim != 1 {
        return Err(Error::InvalidParams("soliton profiles live on a 1D grid (radial samples in 2D)".into()));
    }
    if p.e_in != 0.0 {
        return Err(Error::InvalidParams(format!("free solitons need E_in = 0, got {}", p.e_in)));
    }
    let n = grid.n[0];
    let basis = ParityBasis::new(n, grid.dx(), false, false);
    let lap = basis.laplacian(match geometry {
        Geometry::Line => None,
        Geometry::Radial => Some(0),
    });
    let guesses = match guess {
        Some(g) => vec![g],
        None => SolitonGuess::defaults(p),
    };
    let xs = grid.coords(0);
    let mut best: Option<SolitonProfile> = None;
    let mut last_err = None;
    for g in guesses {
        let (full, omega) = match g {
            SolitonGuess::Sech { amplitude, width, omega } => {
                (xs.iter().map(|x| C64::new(amplitude / (x / width).cosh(), 0.0)).collect::<Vec<_>>(), omega)
            }
            SolitonGuess::Profile { values, omega } => {
                if values.len() != n {
                    return Err(Error::InvalidParams(format!("guess has {} samples, grid has {n}", values.len())));
                }
                (values, omega)
            }
        };
        // rotate so the centre sample is real, matching the gauge
        let c = full[n / 2];
        let rot = if c.norm() > 0.0 { c.conj() / c.norm() } else { C64::new(1.0, 0.0) };
        let full: Vec<C64> = full.iter().map(|z| z * rot).collect();
        let (u, v) = basis.gather(&full);
        let out = newton(&lap, u, v, omega, p);
        let field = ComplexField::from_values(grid.clone(), basis.scatter(&out.u, &out.v), Frame::Holding)?;
        let peak = field.max_abs();
        let background = field.edge_amplitude();
        let residual = *out.history.last().unwrap();
        if peak < 1e-8 || peak < LOCALIZATION_RATIO * background {
            let ratio = if background > 0.0 { peak / background } else { 1.0 };
            last_err = Some(Error::EscapedToHomogeneous { ratio });
            continue;
        }
        if !out.converged {
            last_err = Some(Error::NoConvergence { iterations: out.history.len() - 1, residual });
            continue;
        }
        let prof = SolitonProfile {
            geometry,
            field,
            nu_s: out.omega - p.theta,
            params: p.clone(),
            residual,
            residual_history: out.history,
            stable: None,
            peak_amplitude: peak,
            background_amplitude: background,
        };
        if best.as_ref().is_none_or(|b| prof.peak_amplitude > b.peak_amplitude + 1e-9) {
            best = Some(prof);
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY }))
}

/// Max-norm residual of the stationary equation for (A, ω) on the full grid.
pub fn profile_residual(s: &SolitonProfile) -> f64 {
    let n = s.field.grid.n[0];
    let basis = ParityBasis::new(n, s.field.grid.dx(), false, false);
    let lap = basis.laplacian(match s.geometry {
        Geometry::Line => None,
        Geometry::Radial => Some(0),
    });
    let (u, v) = basis.gather(&s.field.values);
    let (ru, rv) = stationary_residual(&lap, &u, &v, s.omega(), &s.params);
    ru.amax().max(rv.amax())
}

/// Trigonometric interpolant of a periodic line field, evaluated at `x`.
pub(crate) struct LineInterpolant {
    coef: Vec<(f64, C64)>,
    nyquist: (f64, C64),
    half_length: f64,
}

impl LineInterpolant {
    pub fn new(field: &ComplexField) -> Self {
        let n = field.grid.n[0];
        let length = field.grid.length[0];
        let mut buf = field.values.clone();
        FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
        let mut coef = Vec::with_capacity(n);
        for (k, v) in buf.iter().enumerate().take(n) {
            if k == n / 2 {
                continue;
            }
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            // x_j = (j − n/2)dx brings a factor (−1)^k
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            coef.push((2.0 * std::f64::consts::PI * kk / length, v * (sign / n as f64)));
        }
        let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let nyquist = (std::f64::consts::PI * n as f64 / length, buf[n / 2] * (sign / n as f64));
        LineInterpolant { coef, nyquist, half_length: 0.5 * length }
    }

    pub fn eval(&self, x: f64) -> C64 {
        let mut s = self.nyquist.1 * (self.nyquist.0 * x).cos();
        for (q, c) in &self.coef {
            s += c * C64::from_polar(1.0, q * x);
        }
        s
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }
}

/// Places a profile on `grid` (a line, or a square for radial profiles).
/// Points beyond the stored half-width take the edge value.
pub fn embed_profile(s: &SolitonProfile, grid: &GridSpec) -> Result<ComplexField> {
    grid.validate()?;
    let interp = LineInterpolant::new(&s.field);
    let edge = s.field.values[0];
    let r_max = interp.half_length();
    match (s.geometry, grid.dim) {
        (Geometry::Line, 1) => {
            if grid == &s.field.grid {
                return Ok(s.field.clone());
            }
            let xs = grid.coords(0);
            let vals = xs.iter().map(|x| if x.abs() <= r_max { interp.eval(*x) } else { edge }).collect();
            ComplexField::from_values(grid.clone(), vals, Frame::Holding)
        }
        (Geometry::Radial, 2) => {
            let xs = grid.coords(0);
            let ys = grid.coords(1);
            let mut cache = std::collections::HashMap::new();
            let mut vals = Vec::with_capacity(grid.len());
            for y in &ys {
                for x in &xs {
                    let r = x.hypot(*y);
                    let v = if r <= r_max {
                        *cache.entry(r.to_bits()).or_insert_with(|| interp.eval(r))
                    } else {
                        edge
                    };
                    vals.push(v);
                }
            }
            ComplexField::from_values(grid.clone(), vals, Frame::Holding)
        }
        _ => Err(Error::InvalidParams("line profiles embed on lines, radial profiles on squares".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> DimensionlessParams {
        DimensionlessParams::new(2.08, 2.0, 10.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn reduced_laplacian_matches_spectral() {
        let n = 64;
        let l = 20.0;
        let g = GridSpec::line(n, l).unwrap();
        let basis = ParityBasis::new(n, g.dx(), false, false);
        let lap = basis.laplacian(None);
        let xs = g.coords(0);
        let full: Vec<C64> = xs.iter().map(|x| C64::new((-x * x / 2.0).exp(), 0.0)).collect();
        let (u, _) = basis.gather(&full);
        let lu = &lap * &u;
        for (i, &k) in basis.offsets.iter().enumerate() {
            let x = k as f64 * g.dx();
            let exact = (x * x - 1.0) * (-x * x / 2.0).exp();
            assert!((lu[i] - exact).abs() < 1e-10, "x={x}");
        }
        let odd = ParityBasis::new(n, g.dx(), true, false);
        let full: Vec<C64> = xs.iter().map(|x| C64::new(x * (-x * x / 2.0).exp(), 0.0)).collect();
        let (u, _) = odd.gather(&full);
        // derivative of an odd function is even, so test the odd second derivative instead
        let lap_odd = odd.laplacian(None);
        let lu = &lap_odd * &u;
        for (i, &k) in odd.offsets.iter().enumerate() {
            let x = k as f64 * g.dx();
            let exact = (x * x * x - 3.0 * x) * (-x * x / 2.0).exp();
            assert!((lu[i] - exact).abs() < 1e-10);
        }
        assert_eq!(odd.len(), n / 2 - 1);
    }

    #[test]
    fn radial_laplacian_of_gaussian() {
        let n = 128;
        let g = GridSpec::line(n, 24.0).unwrap();
        let b = ParityBasis::new(n, g.dx(), false, false);
        let lap = b.laplacian(Some(0));
        let full: Vec<C64> = g.coords(0).iter().map(|x| C64::new((-x * x).exp(), 0.0)).collect();
        let (u, _) = b.gather(&full);
        let lu = &lap * &u;
        for (i, &k) in b.offsets.iter().enumerate() {
            let r = k as f64 * g.dx();
            // 2D: Δ e^{−r²} = (4r² − 4) e^{−r²}
            let exact = (4.0 * r * r - 4.0) * (-r * r).exp();
            assert!((lu[i] - exact).abs() < 1e-9, "r={r}: {} vs {exact}", lu[i]);
        }
    }

    #[test]
    fn interpolant_reproduces_samples_and_smooth_values() {
        let g = GridSpec::line(64, 20.0).unwrap();
        let f = ComplexField::from_fn(g.clone(), Frame::Holding, |x, _| C64::new((-x * x / 3.0).exp(), 0.2 * (-x * x).exp()));
        let it = LineInterpolant::new(&f);
        for (x, v) in g.coords(0).iter().zip(&f.values) {
            assert!((it.eval(*x) - v).norm() < 1e-12);
        }
        let x: f64 = 0.123;
        let want = C64::new((-x * x / 3.0).exp(), 0.2 * (-x * x).exp());
        assert!((it.eval(x) - want).norm() < 1e-10);
    }

    #[test]
    fn free_soliton_1d() {
        let p = reference();
        let g = GridSpec::line(256, 64.0).unwrap();
        let s = find_free_soliton(&p, Geometry::Line, &g, None).unwrap();
        assert!(s.residual <= 1e-8 * s.peak_amplitude);
        assert_relative_eq!(s.peak_intensity(), 7.41603, max_relative = 1e-4);
        assert_relative_eq!(s.nu_s, 0.0469847, max_relative = 1e-4);
        assert!(s.background_amplitude < 1e-3 * s.peak_amplitude);
        assert!(profile_residual(&s) <= 1e-8 * s.peak_amplitude);
        // evenness about the centre
        let n = 256;
        for k in 1..n / 2 {
            assert!((s.field.values[n / 2 + k] - s.field.values[n / 2 - k]).norm() <= 1e-12);
        }
    }

    #[test]
    fn low_gain_has_no_soliton() {
        let p = DimensionlessParams::new(1.5, 2.0, 10.0, 0.0, 0.0).unwrap();
        // f is negative everywhere at this gain
        assert!((0..2000).all(|k| p.gain(k as f64 * 0.05) < 0.0));
        let g = GridSpec::line(128, 48.0).unwrap();
        match find_free_soliton(&p, Geometry::Line, &g, None) {
            Err(Error::EscapedToHomogeneous { .. }) | Err(Error::NoConvergence { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn injected_params_rejected() {
        let p = DimensionlessParams::new(2.08, 2.0, 10.0, 0.0, 0.01).unwrap();
        let g = GridSpec::line(64, 32.0).unwrap();
        assert!(matches!(find_free_soliton(&p, Geometry::Line, &g, None), Err(Error::InvalidParams(_))));
    }
}
