//! Langevin correlators of both media, composition of the adiabatic sources
//! and Gaussian sampling of the discrete noise field.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Frame};
use crate::params::{atomic_steady_state, AtomicMeans, DimensionalParams, DimensionlessParams};

/// Active-medium source moments, per unit time and area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseCorrelatorsActive {
    /// ⟨F*F⟩
    pub fdf: f64,
    /// ⟨FF⟩
    pub ff: C64,
    /// ⟨F1 F⟩
    pub f1f: C64,
    pub f2f2: f64,
    pub f1f1: f64,
    pub f2f1: f64,
}

/// Passive-medium source moments, per unit time and area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseCorrelatorsPassive {
    /// ⟨G*G⟩
    pub gdg: f64,
    /// ⟨GG⟩
    pub gg: C64,
    /// ⟨G2 G⟩
    pub g2g: C64,
    pub g1g1: f64,
    pub g2g2: f64,
    pub g1g2: f64,
}

pub fn base_correlators_active(a: C64, m: &AtomicMeans, d: &DimensionalParams) -> BaseCorrelatorsActive {
    // g(a*σ + aσ*) = 2 Re(a* gσ)
    let exch = 2.0 * (a.conj() * m.g_sigma).re;
    BaseCorrelatorsActive {
        fdf: d.gamma_a1 * m.sigma2 + d.r_a,
        ff: 2.0 * m.g_sigma * a,
        f1f: d.gamma_a1 * m.sigma,
        f2f2: d.gamma_a2 * m.sigma2 + d.r_a * (1.0 - d.s_a) - exch,
        f1f1: d.gamma_a1 * m.sigma1 - exch,
        f2f1: exch,
    }
}

pub fn base_correlators_passive(a: C64, m: &AtomicMeans, d: &DimensionalParams) -> BaseCorrelatorsPassive {
    let exch = 2.0 * (a.conj() * m.gp_pi).re;
    BaseCorrelatorsPassive {
        gdg: d.r_p + d.gamma_p1 * m.pi2 - d.gamma_p1 * m.pi1 + d.gamma_p2 * m.pi2 + 2.0 * exch,
        gg: 2.0 * m.gp_pi * a,
        g2g: d.gamma_p2 * m.pi,
        g1g1: d.gamma_p1 * m.pi1 + d.r_p * (1.0 - d.s_p) - exch,
        g2g2: d.gamma_p2 * m.pi2 - exch,
        g1g2: exch,
    }
}

/// Second moments of the adiabatic sources Φ (active) and Φ_p (passive).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseMoments {
    pub phi_phi: C64,
    pub phi_abs: f64,
    pub phip_phip: C64,
    pub phip_abs: f64,
}

const REALIZABLE_TOL: f64 = 1e-12;

impl NoiseMoments {
    pub fn active_samplable(&self) -> bool {
        self.phi_abs >= 0.0 && self.phi_phi.norm() <= self.phi_abs * (1.0 + REALIZABLE_TOL)
    }

    pub fn passive_samplable(&self) -> bool {
        self.phip_abs >= 0.0 && self.phip_phip.norm() <= self.phip_abs * (1.0 + REALIZABLE_TOL)
    }

    pub fn samplable(&self) -> bool {
        self.active_samplable() && self.passive_samplable()
    }

    pub fn scaled(&self, s: f64) -> NoiseMoments {
        NoiseMoments {
            phi_phi: self.phi_phi * s,
            phi_abs: self.phi_abs * s,
            phip_phip: self.phip_phip * s,
            phip_abs: self.phip_abs * s,
        }
    }
}

pub fn adiabatic_moments(a: C64, d: &DimensionalParams) -> NoiseMoments {
    let beta = d.beta();
    let beta_p = d.beta_p();
    let i = beta * a.norm_sqr();
    let ip = beta_p * a.norm_sqr();
    let ka = beta / (1.0 + i);
    let kp = beta_p / (1.0 + ip);
    let act = 0.5 * d.r_a * (1.0 + 0.5 * d.s_a);
    let pas = 0.5 * d.r_p * (1.0 - 0.5 * d.s_p);
    let phip_abs = kp * kp * a.norm_sqr() * pas;
    // |⟨Φ_p²⟩| = ⟨|Φ_p|²⟩ identically; build it from the phase so the two
    // agree to rounding
    let dir = if a.norm() > 0.0 { a / a.norm() } else { C64::new(1.0, 0.0) };
    NoiseMoments {
        phi_phi: -(a * ka) * (a * ka) * act,
        phi_abs: beta * d.r_a / (1.0 + i) - ka * ka * a.norm_sqr() * act,
        phip_phip: dir * dir * phip_abs,
        phip_abs,
    }
}

/// Real covariance of (Re X, Im X, X1, X2) for one medium.
fn base_covariance(p: f64, c: C64, x1x: C64, x2x: C64, x11: f64, x22: f64, x12: f64) -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    s[(0, 0)] = 0.5 * (p + c.re);
    s[(1, 1)] = 0.5 * (p - c.re);
    s[(0, 1)] = 0.5 * c.im;
    s[(1, 0)] = 0.5 * c.im;
    s[(2, 0)] = x1x.re;
    s[(0, 2)] = x1x.re;
    s[(2, 1)] = x1x.im;
    s[(1, 2)] = x1x.im;
    s[(3, 0)] = x2x.re;
    s[(0, 3)] = x2x.re;
    s[(3, 1)] = x2x.im;
    s[(1, 3)] = x2x.im;
    s[(2, 2)] = x11;
    s[(3, 3)] = x22;
    s[(2, 3)] = x12;
    s[(3, 2)] = x12;
    s
}

impl BaseCorrelatorsActive {
    /// Covariance of (Re F, Im F, F1, F2); ⟨F2 F⟩ vanishes.
    pub fn covariance(&self) -> Matrix4<f64> {
        base_covariance(self.fdf, self.ff, self.f1f, C64::new(0.0, 0.0), self.f1f1, self.f2f2, self.f2f1)
    }
}

impl BaseCorrelatorsPassive {
    /// Covariance of (Re G, Im G, G1, G2); ⟨G1 G⟩ vanishes.
    pub fn covariance(&self) -> Matrix4<f64> {
        base_covariance(self.gdg, self.gg, C64::new(0.0, 0.0), self.g2g, self.g1g1, self.g2g2, self.g1g2)
    }
}

type Row = [C64; 4];

/// ⟨(L v)(M v)⟩ for real covariance `s`.
fn bilinear(l: &Row, m: &Row, s: &Matrix4<f64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += l[i] * m[j] * s[(i, j)];
        }
    }
    acc
}

fn conj_row(l: &Row) -> Row {
    [l[0].conj(), l[1].conj(), l[2].conj(), l[3].conj()]
}

/// Linear maps from the base sources to ξ_a, ξ_2 and Φ.
fn active_maps(a: C64, d: &DimensionalParams) -> (Row, Row, Row) {
    let k = 2.0 * d.g / d.gamma_a1;
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let xi_a = [C64::new(k, 0.0), C64::new(0.0, k), -a * (k * d.g / d.gamma_a1), z];
    let xi_2 = [
        C64::new(-2.0 * k * a.re, 0.0),
        C64::new(-2.0 * k * a.im, 0.0),
        C64::new(k * k * a.norm_sqr(), 0.0),
        one,
    ];
    let w = a * (0.5 * d.beta() / (1.0 + d.beta() * a.norm_sqr()));
    let phi = std::array::from_fn(|i| w * xi_2[i] + xi_a[i]);
    (xi_a, xi_2, phi)
}

/// Linear maps from the base sources to ξ_pa, ξ_p1 and Φ_p.
fn passive_maps(a: C64, d: &DimensionalParams) -> (Row, Row, Row) {
    let k = 2.0 * d.g_p / d.gamma_p2;
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let xi_pa = [C64::new(k, 0.0), C64::new(0.0, k), z, a * (k * d.g_p / d.gamma_p2)];
    let xi_p1 = [
        C64::new(2.0 * k * a.re, 0.0),
        C64::new(2.0 * k * a.im, 0.0),
        one,
        C64::new(k * k * a.norm_sqr(), 0.0),
    ];
    let w = a * (-0.5 * d.beta_p() / (1.0 + d.beta_p() * a.norm_sqr()));
    let phi = std::array::from_fn(|i| w * xi_p1[i] + xi_pa[i]);
    (xi_pa, xi_p1, phi)
}

/// Moments of the intermediate sources obtained from the base correlators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiMoments {
    pub xi2_xi2: f64,
    /// ⟨ξ_a* ξ_a⟩
    pub xia_abs: f64,
    pub xia_xia: C64,
    pub xia_xi2: C64,
    pub xip1_xip1: f64,
    /// ⟨ξ_pa* ξ_pa⟩
    pub xipa_abs: f64,
    pub xipa_xipa: C64,
    pub xipa_xip1: C64,
}

pub fn compose_xi(act: &BaseCorrelatorsActive, pas: &BaseCorrelatorsPassive, a: C64, d: &DimensionalParams) -> XiMoments {
    let sa = act.covariance();
    let sp = pas.covariance();
    let (xa, x2, _) = active_maps(a, d);
    let (xpa, xp1, _) = passive_maps(a, d);
    XiMoments {
        xi2_xi2: bilinear(&x2, &x2, &sa).re,
        xia_abs: bilinear(&conj_row(&xa), &xa, &sa).re,
        xia_xia: bilinear(&xa, &xa, &sa),
        xia_xi2: bilinear(&xa, &x2, &sa),
        xip1_xip1: bilinear(&xp1, &xp1, &sp).re,
        xipa_abs: bilinear(&conj_row(&xpa), &xpa, &sp).re,
        xipa_xipa: bilinear(&xpa, &xpa, &sp),
        xipa_xip1: bilinear(&xpa, &xp1, &sp),
    }
}

/// Φ and Φ_p moments composed exactly from the base correlators at the
/// stationary means, at the finite hierarchy of `d`.
pub fn composed_moments(a: C64, d: &DimensionalParams) -> NoiseMoments {
    let m = atomic_steady_state(a, d);
    let sa = base_correlators_active(a, &m, d).covariance();
    let sp = base_correlators_passive(a, &m, d).covariance();
    let (_, _, phi) = active_maps(a, d);
    let (_, _, phip) = passive_maps(a, d);
    NoiseMoments {
        phi_phi: bilinear(&phi, &phi, &sa),
        phi_abs: bilinear(&conj_row(&phi), &phi, &sa).re,
        phip_phip: bilinear(&phip, &phip, &sp),
        phip_abs: bilinear(&conj_row(&phip), &phip, &sp).re,
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub std_err: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionEstimate {
    pub samples: usize,
    /// Whether the base covariance is positive semidefinite (a classical
    /// Gaussian). When false the estimate is a signed quasi-probability one.
    pub base_realizable: bool,
    /// Most negative eigenvalue of the scaled base covariance.
    pub min_eigenvalue: f64,
    /// Whether (Re Φ, Im Φ) has a positive semidefinite covariance, in which
    /// case every sample carries positive weight.
    pub projected_realizable: bool,
    pub square: Estimate<C64>,
    pub abs: Estimate<f64>,
}

/// Which medium a composition estimate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medium {
    Active,
    Passive,
}

/// Samples base sources with the printed covariance and pushes them through
/// the linear source maps, estimating ⟨Φ²⟩ and ⟨|Φ|²⟩ (or the Φ_p pair).
///
/// The base covariance need not be positive. Only its restriction to the
/// two directions read by the map matters, so the sampled covariance keeps
/// Σ exactly there and inflates the kernel block until it is positive.
/// If the restricted 2×2 block is itself indefinite, its negative part is
/// drawn as a separate ensemble and subtracted, which stays unbiased for
/// any second moment.
pub fn monte_carlo_composition(a: C64, d: &DimensionalParams, medium: Medium, samples: usize, seed: u64) -> CompositionEstimate {
    let m = atomic_steady_state(a, d);
    let (sigma, phi) = match medium {
        Medium::Active => (base_correlators_active(a, &m, d).covariance(), active_maps(a, d).2),
        Medium::Passive => (base_correlators_passive(a, &m, d).covariance(), passive_maps(a, d).2),
    };
    let (pos, neg, min_eigenvalue) = source_weights(&sigma, &phi);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s_sq, mut s_sq2_re, mut s_sq2_im) = (C64::new(0.0, 0.0), 0.0, 0.0);
    let (mut s_ab, mut s_ab2) = (0.0, 0.0);
    for _ in 0..samples {
        let mut yp = C64::new(0.0, 0.0);
        for w in &pos {
            let z: f64 = rng.sample(StandardNormal);
            yp += w * z;
        }
        let mut yn = C64::new(0.0, 0.0);
        for w in &neg {
            let z: f64 = rng.sample(StandardNormal);
            yn += w * z;
        }
        let sq = yp * yp - yn * yn;
        let ab = yp.norm_sqr() - yn.norm_sqr();
        s_sq += sq;
        s_sq2_re += sq.re * sq.re;
        s_sq2_im += sq.im * sq.im;
        s_ab += ab;
        s_ab2 += ab * ab;
    }
    let n = samples as f64;
    let mean_sq = s_sq / n;
    let mean_ab = s_ab / n;
    let se = |s2: f64, mean: f64| ((s2 / n - mean * mean).max(0.0) / (n - 1.0).max(1.0)).sqrt();
    CompositionEstimate {
        samples,
        base_realizable: min_eigenvalue >= -1e-12,
        projected_realizable: neg.is_empty(),
        min_eigenvalue,
        square: Estimate {
            value: mean_sq,
            std_err: C64::new(se(s_sq2_re, mean_sq.re), se(s_sq2_im, mean_sq.im)),
        },
        abs: Estimate { value: mean_ab, std_err: se(s_ab2, mean_ab) },
    }
}

/// Complex weights (Φ = Σ w z, z standard normal) for the positive and
/// negative ensembles, plus the most negative eigenvalue of the scaled Σ.
fn source_weights(sigma: &Matrix4<f64>, phi: &Row) -> (Vec<C64>, Vec<C64>, f64) {
    // balance by row magnitude; some diagonals vanish analytically while
    // their cross terms do not
    let scale: [f64; 4] = std::array::from_fn(|i| {
        let v = (0..4).fold(0.0f64, |m, j| m.max(sigma[(i, j)].abs()));
        if v > 0.0 { v.sqrt() } else { 1.0 }
    });
    let st = Matrix4::from_fn(|i, j| sigma[(i, j)] / (scale[i] * scale[j]));
    let min_eigenvalue = SymmetricEigen::new(st).eigenvalues.min();
    let ph: [C64; 4] = std::array::from_fn(|i| phi[i] * scale[i]);

    // right singular vectors of the real 2×4 map, range first
    let gram = Matrix4::from_fn(|i, j| (ph[i].conj() * ph[j]).re);
    let ge = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| ge.eigenvalues[b].total_cmp(&ge.eigenvalues[a]));
    let gmax = ge.eigenvalues[order[0]].max(0.0);
    let r = order.iter().filter(|&&k| ge.eigenvalues[k] > 1e-12 * gmax).count().min(2);
    let v = Matrix4::from_fn(|i, c| ge.eigenvectors[(i, order[c])]);
    let sp = v.transpose() * st * v;
    let push = |u: &nalgebra::Vector4<f64>| -> C64 {
        let x = v * u;
        (0..4).map(|i| ph[i] * x[i]).sum()
    };

    let c = DMatrix::from_fn(r, r, |i, j| sp[(i, j)]);
    let ce = SymmetricEigen::new(c);
    let cmax = ce.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let ctol = 1e-14 * cmax;
    let mut neg = Vec::new();
    // C₊ and the projector onto its support
    let mut cplus = DMatrix::zeros(r, r);
    let mut cpinv = DMatrix::zeros(r, r);
    let mut proj = DMatrix::zeros(r, r);
    for k in 0..r {
        let l = ce.eigenvalues[k];
        let q = ce.eigenvectors.column(k);
        if l > ctol {
            cplus += l * q * q.transpose();
            cpinv += (1.0 / l) * q * q.transpose();
            proj += q * q.transpose();
        } else if l < -ctol {
            let mut u = nalgebra::Vector4::zeros();
            for i in 0..r {
                u[i] = q[i];
            }
            neg.push(push(&u) * (-l).sqrt());
        }
    }
    let nk = 4 - r;
    let s_rk = DMatrix::from_fn(r, nk, |i, j| sp[(i, r + j)]);
    let s_rk = &proj * s_rk;
    let kk = DMatrix::from_fn(nk, nk, |i, j| sp[(r + i, r + j)]);
    let schur = &kk - s_rk.transpose() * &cpinv * &s_rk;
    let lift = if nk > 0 {
        let m = SymmetricEigen::new(schur).eigenvalues.min();
        (-m).max(0.0) * (1.0 + 1e-9) + 1e-12 * cmax.max(1.0)
    } else {
        0.0
    };
    let mut full = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            full[(i, j)] = match (i < r, j < r) {
                (true, true) => cplus[(i, j)],
                (true, false) => s_rk[(i, j - r)],
                (false, true) => s_rk[(j, i - r)],
                (false, false) => kk[(i - r, j - r)] + if i == j { lift } else { 0.0 },
            };
        }
    }
    let fe = SymmetricEigen::new(full);
    let mut pos = Vec::new();
    for k in 0..4 {
        let l = fe.eigenvalues[k];
        if l > 0.0 {
            let u: nalgebra::Vector4<f64> = fe.eigenvectors.column(k).into();
            pos.push(push(&u) * l.sqrt());
        }
    }
    (pos, neg, min_eigenvalue)
}

/// Cells per independently seeded random stream.
pub const NOISE_BLOCK: usize = 256;
const STREAMS_PER_STEP: u64 = 1 << 24;

/// One step's worth of source increments on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseFieldSample {
    pub phi: ComplexField,
    pub phi_p: ComplexField,
    pub seed: u64,
    pub step: u64,
}

/// Maps field values to the physical amplitude and noise moments back to
/// the field's units. Identity for fields in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScaling {
    /// a = E · field
    pub field: f64,
    /// moments in field units per field time and area = physical · moment
    pub moment: f64,
}

impl NoiseScaling {
    pub const PHYSICAL: NoiseScaling = NoiseScaling { field: 1.0, moment: 1.0 };

    /// Scaling for a field in reduced units; `dim` is the transverse
    /// dimension (a line has unit physical thickness).
    pub fn reduced(d: &DimensionalParams, dim: usize) -> Result<Self> {
        let s = d.scales()?;
        Ok(NoiseScaling {
            field: s.field,
            moment: 2.0 * d.beta_p() / d.kappa / s.length.powi(dim as i32),
        })
    }
}

/// Draws one Euler–Maruyama increment set: per cell, Φ and Φ_p with
/// covariance equal to the continuum moments divided by Δt·ΔA.
pub fn sample_noise(field: &ComplexField, d: &DimensionalParams, dt: f64, seed: u64, step: u64) -> Result<NoiseFieldSample> {
    let scaling = match field.frame {
        Frame::Holding => NoiseScaling::reduced(d, field.grid.dim)?,
        _ => NoiseScaling::PHYSICAL,
    };
    sample_noise_scaled(field, d, dt, seed, step, scaling)
}

pub fn sample_noise_scaled(
    field: &ComplexField,
    d: &DimensionalParams,
    dt: f64,
    seed: u64,
    step: u64,
    scaling: NoiseScaling,
) -> Result<NoiseFieldSample> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("time step must be positive, got {dt}")));
    }
    let norm = scaling.moment / (dt * field.grid.cell_area());
    let n = field.values.len();
    let mut phi = vec![C64::new(0.0, 0.0); n];
    let mut phi_p = vec![C64::new(0.0, 0.0); n];
    let bad = phi
        .par_chunks_mut(NOISE_BLOCK)
        .zip(phi_p.par_chunks_mut(NOISE_BLOCK))
        .enumerate()
        .map(|(blk, (out, out_p))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(step * STREAMS_PER_STEP + blk as u64);
            for (k, (o, op)) in out.iter_mut().zip(out_p.iter_mut()).enumerate() {
                let idx = blk * NOISE_BLOCK + k;
                let a = field.values[idx] * scaling.field;
                let m = adiabatic_moments(a, d);
                if !m.samplable() {
                    return Some((idx, m));
                }
                let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                *o = draw_pair(m.phi_abs * norm, m.phi_phi * norm, z[0], z[1]);
                // degenerate passive source: one real degree of freedom
                let rot = C64::from_polar(1.0, 0.5 * m.phip_phip.arg());
                *op = rot * ((m.phip_abs * norm).sqrt() * z[2]);
            }
            None
        })
        .find_first(|r| r.is_some())
        .flatten();
    if let Some((index, moments)) = bad {
        return Err(Error::NonRealizableNoise { index, moments });
    }
    Ok(NoiseFieldSample {
        phi: ComplexField { grid: field.grid.clone(), values: phi, frame: field.frame },
        phi_p: ComplexField { grid: field.grid.clone(), values: phi_p, frame: field.frame },
        seed,
        step,
    })
}

/// Complex Gaussian with ⟨|X|²⟩ = p and ⟨X²⟩ = c, built in the frame
/// aligned with arg(c)/2.
#[inline]
fn draw_pair(p: f64, c: C64, z1: f64, z2: f64) -> C64 {
    let cm = c.norm();
    let su = (0.5 * (p + cm)).max(0.0).sqrt();
    let sv = (0.5 * (p - cm)).max(0.0).sqrt();
    C64::from_polar(1.0, 0.5 * c.arg()) * C64::new(su * z1, sv * z2)
}

/// Monte-Carlo composition against the closed adiabatic forms at one
/// operating point, for both media.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionCheck {
    pub s_a: f64,
    pub s_p: f64,
    /// Saturation parameter β|a|² of the active medium.
    pub intensity: f64,
    pub hierarchy: f64,
    pub closed: NoiseMoments,
    pub active: CompositionEstimate,
    pub passive: CompositionEstimate,
    /// |estimate − closed| / standard error for ⟨Φ²⟩ (re, im), ⟨|Φ|²⟩,
    /// ⟨Φ_p²⟩ (re, im), ⟨|Φ_p|²⟩. Components with zero error are reported
    /// as 0 when they match exactly.
    pub z_scores: [f64; 6],
}

impl CompositionCheck {
    pub fn max_z(&self) -> f64 {
        self.z_scores.iter().cloned().fold(0.0, f64::max)
    }
}

fn z(est: f64, se: f64, want: f64) -> f64 {
    let d = (est - want).abs();
    if se > 0.0 {
        d / se
    } else if d <= 1e-12 * want.abs().max(1e-300) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs the composition oracle for the reference gain family with the given
/// pump statistics, at active saturation `intensity`. The fast atomic rates
/// exceed the slow ones by 1/`hierarchy`, so the composed moments approach
/// the closed forms as `hierarchy` → 0.
pub fn composition_check(p: &DimensionlessParams, intensity: f64, hierarchy: f64, samples: usize, seed: u64) -> Result<CompositionCheck> {
    if !(intensity >= 0.0) || samples < 2 {
        return Err(Error::InvalidParams(format!("need I >= 0 and at least 2 samples, got {intensity}, {samples}")));
    }
    let d = DimensionalParams::adiabatic_family(p, 0.01, hierarchy)?;
    let a = C64::from_polar((intensity / d.beta()).sqrt(), 0.37);
    let closed = adiabatic_moments(a, &d);
    let active = monte_carlo_composition(a, &d, Medium::Active, samples, seed);
    let passive = monte_carlo_composition(a, &d, Medium::Passive, samples, seed.wrapping_add(1));
    let z_scores = [
        z(active.square.value.re, active.square.std_err.re, closed.phi_phi.re),
        z(active.square.value.im, active.square.std_err.im, closed.phi_phi.im),
        z(active.abs.value, active.abs.std_err, closed.phi_abs),
        z(passive.square.value.re, passive.square.std_err.re, closed.phip_phip.re),
        z(passive.square.value.im, passive.square.std_err.im, closed.phip_phip.im),
        z(passive.abs.value, passive.abs.std_err, closed.phip_abs),
    ];
    Ok(CompositionCheck {
        s_a: p.s_a.unwrap_or(0.0),
        s_p: p.s_p.unwrap_or(0.0),
        intensity,
        hierarchy,
        closed,
        active,
        passive,
        z_scores,
    })
}
