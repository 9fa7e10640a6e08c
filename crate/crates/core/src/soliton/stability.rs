//! Linear stability of stationary solitons.
//!
//! Perturbations δ = δu + iδv about a stationary A in the frame rotating at
//! ω obey d(δu, δv)/dt = L(δu, δv) with
//!
//!   L = [ F + 2F'u²          −(Δ + ω) + 2F'uv ]
//!       [ (Δ + ω) + 2F'uv    F + 2F'v²        ],  F = f(|A|²), F' = f'(|A|²).
//!
//! L commutes with reflection (and with rotations for radial profiles), so
//! it splits into small blocks: even/odd on a line, azimuthal orders m on a
//! disc. Each block is searched with shift-invert Arnoldi.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derivative_kernel, Geometry, ParityBasis, SolitonProfile};
use crate::error::{Error, Result};
use crate::grid::ComplexField;
use crate::params::DimensionlessParams;

/// Modes with |λ| below this are candidates for symmetry modes.
pub const NEUTRAL_TOL: f64 = 1e-6;
pub const NEUTRAL_OVERLAP: f64 = 0.99;
/// Discretization splits a defective zero eigenvalue into ±√ε; members of
/// such a cluster are gathered within this radius and averaged.
const CLUSTER_RADIUS: f64 = 1e-3;
/// Stable if every non-neutral Re λ is at most this.
pub const GROWTH_TOL: f64 = 1e-6;
const KRYLOV_DIM: usize = 80;
const RITZ_TOL: f64 = 1e-9;
/// Shift-invert targets; the spectrum is symmetric under conjugation.
const SHIFTS: [(f64, f64); 5] = [(0.5, 0.0), (0.5, 1.0), (0.5, 2.0), (0.5, 3.5), (0.5, 6.0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeutralKind {
    Phase,
    Translation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub lambda: C64,
    /// "even"/"odd" on a line, "m=0", "m=1", ... on a disc.
    pub block: String,
    pub residual: f64,
    pub neutral: Option<NeutralKind>,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Converged eigenvalues, largest real part first.
    pub leading: Vec<Mode>,
    /// Largest Re λ with the symmetry modes removed.
    pub max_growth: f64,
    pub stable: bool,
    pub phase_mode: Option<Mode>,
    pub translation_mode: Option<Mode>,
}

pub(crate) struct Block {
    pub name: String,
    pub basis: ParityBasis,
    pub op: DMatrix<f64>,
    pub neutral: Option<(NeutralKind, DVector<f64>)>,
}

fn linearization(lap: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>, omega: f64, p: &DimensionlessParams) -> DMatrix<f64> {
    let m = u.len();
    let mut l = DMatrix::zeros(2 * m, 2 * m);
    l.view_mut((0, m), (m, m)).copy_from(&(-lap));
    l.view_mut((m, 0), (m, m)).copy_from(lap);
    for i in 0..m {
        let int = u[i] * u[i] + v[i] * v[i];
        let f = p.gain(int);
        let fp = p.gain_slope(int);
        l[(i, i)] = f + 2.0 * fp * u[i] * u[i];
        l[(m + i, m + i)] = f + 2.0 * fp * v[i] * v[i];
        l[(i, m + i)] += -omega + 2.0 * fp * u[i] * v[i];
        l[(m + i, i)] += omega + 2.0 * fp * u[i] * v[i];
    }
    l
}

/// Spectral x-derivative of a line field, full grid.
fn derivative(field: &ComplexField) -> Vec<C64> {
    let n = field.grid.n[0];
    let c = derivative_kernel(n, field.grid.length[0]);
    (0..n).map(|j| (0..n).map(|k| field.values[k] * c[(j + n - k) % n]).sum()).collect()
}

pub(crate) fn blocks(s: &SolitonProfile, omega: f64, p: &DimensionlessParams) -> Vec<Block> {
    let n = s.field.grid.n[0];
    let dx = s.field.grid.dx();
    let dadx = derivative(&s.field);
    let orders: Vec<(String, bool, bool, Option<u32>)> = match s.geometry {
        Geometry::Line => vec![("even".into(), false, false, None), ("odd".into(), true, false, None)],
        Geometry::Radial => (0..4u32).map(|m| (format!("m={m}"), m % 2 == 1, m >= 1, Some(m))).collect(),
    };
    orders
        .into_iter()
        .map(|(name, odd, skip, az)| {
            let basis = ParityBasis::new(n, dx, odd, skip);
            let lap = basis.laplacian(az);
            let (u, v) = basis.gather(&s.field.values);
            let op = linearization(&lap, &u, &v, omega, p);
            let neutral = match (odd, az) {
                (false, None) | (false, Some(0)) => {
                    let mut t = DVector::zeros(2 * basis.len());
                    t.rows_mut(0, basis.len()).copy_from(&(-&v));
                    t.rows_mut(basis.len(), basis.len()).copy_from(&u);
                    Some((NeutralKind::Phase, t))
                }
                (true, None) | (true, Some(1)) => {
                    let (du, dv) = basis.gather(&dadx);
                    let mut t = DVector::zeros(2 * basis.len());
                    t.rows_mut(0, basis.len()).copy_from(&du);
                    t.rows_mut(basis.len(), basis.len()).copy_from(&dv);
                    Some((NeutralKind::Translation, t))
                }
                _ => None,
            };
            Block { name, basis, op, neutral }
        })
        .collect()
}

pub(crate) struct RitzPair {
    pub lambda: C64,
    pub vector: DVector<C64>,
    pub residual: f64,
}

/// Eigenpairs of `a` nearest `sigma`, from an Arnoldi factorization of
/// (a − σ)⁻¹. Returns the pairs whose true residual ‖ax − λx‖ is small and
/// the smallest residual seen (for stagnation reports).
pub(crate) fn shift_invert_arnoldi(a: &DMatrix<C64>, sigma: C64, kdim: usize, seed: u64) -> (Vec<RitzPair>, f64) {
    let nn = a.nrows();
    let k = kdim.min(nn);
    let shifted = a - DMatrix::<C64>::identity(nn, nn) * sigma;
    let lu = shifted.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q0 = DVector::<C64>::from_fn(nn, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    q0 /= C64::new(q0.norm(), 0.0);
    let mut basis: Vec<DVector<C64>> = vec![q0];
    let mut h = DMatrix::<C64>::zeros(k + 1, k);
    let mut steps = k;
    for j in 0..k {
        let Some(mut w) = lu.solve(&basis[j]) else {
            steps = j;
            break;
        };
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for (i, qi) in basis.iter().enumerate() {
                let c = qi.dotc(&w);
                h[(i, j)] += c;
                w -= qi * c;
            }
        }
        let beta = w.norm();
        h[(j + 1, j)] = C64::new(beta, 0.0);
        if beta < 1e-14 {
            steps = j + 1;
            break;
        }
        basis.push(w / C64::new(beta, 0.0));
    }
    if steps == 0 {
        return (Vec::new(), f64::INFINITY);
    }
    let hk = h.view((0, 0), (steps, steps)).clone_owned();
    let Some(mus) = hk.clone().schur().eigenvalues() else {
        return (Vec::new(), f64::INFINITY);
    };
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    for mu in mus.iter() {
        if mu.norm() < 1e-300 {
            continue;
        }
        // eigenvector of the small Hessenberg matrix by inverse iteration
        let eps = C64::new(1e-13 * (1.0 + mu.norm()), 0.0);
        let m = &hk - DMatrix::<C64>::identity(steps, steps) * (mu + eps);
        let mlu = m.lu();
        let mut y = DVector::<C64>::from_element(steps, C64::new(1.0, 0.0));
        for _ in 0..3 {
            match mlu.solve(&y) {
                Some(z) if z.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let nz = z.norm();
                    y = z / C64::new(nz, 0.0);
                }
                _ => break,
            }
        }
        let mut x = DVector::<C64>::zeros(nn);
        for (i, yi) in y.iter().enumerate() {
            x += &basis[i] * *yi;
        }
        let nx = x.norm();
        if nx == 0.0 {
            continue;
        }
        x /= C64::new(nx, 0.0);
        let lambda = sigma + C64::new(1.0, 0.0) / mu;
        let r = (a * &x - &x * lambda).norm();
        best = best.min(r);
        if r <= RITZ_TOL * (1.0 + lambda.norm()) {
            out.push(RitzPair { lambda, vector: x, residual: r });
        }
    }
    (out, best)
}

fn overlap(t: &DVector<f64>, x: &DVector<C64>) -> f64 {
    let tn = t.norm();
    if tn == 0.0 {
        return 0.0;
    }
    let dot: C64 = t.iter().zip(x.iter()).map(|(a, b)| b * *a).sum();
    dot.norm() / (tn * x.norm())
}

fn analyse(blocks: Vec<Block>) -> Result<StabilityReport> {
    let mut modes: Vec<Mode> = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        let a = b.op.map(|v| C64::new(v, 0.0));
        let mut found = 0;
        let mut worst = f64::INFINITY;
        for (si, (re, im)) in SHIFTS.iter().enumerate() {
            let (pairs, best) = shift_invert_arnoldi(&a, C64::new(*re, *im), KRYLOV_DIM, (bi * 16 + si) as u64);
            worst = worst.min(best);
            found += pairs.len();
            for pr in pairs {
                let mut lam = pr.lambda;
                if lam.im.abs() < 1e-12 {
                    lam.im = 0.0;
                }
                let (neutral, ov) = match &b.neutral {
                    Some((kind, t)) if lam.norm() <= CLUSTER_RADIUS => {
                        let o = overlap(t, &pr.vector);
                        (if o >= NEUTRAL_OVERLAP { Some(*kind) } else { None }, o)
                    }
                    _ => (None, 0.0),
                };
                let dup = modes.iter_mut().find(|m| m.block == b.name && (m.lambda - lam).norm() <= 1e-8 * (1.0 + lam.norm()));
                match dup {
                    Some(m) => {
                        if pr.residual < m.residual {
                            m.residual = pr.residual;
                        }
                    }
                    None => modes.push(Mode { lambda: lam, block: b.name.clone(), residual: pr.residual, neutral, overlap: ov }),
                }
            }
        }
        if found == 0 {
            return Err(Error::EigenStagnation { residual: worst });
        }
    }
    modes.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re));
    // the neutral eigenvalue of a symmetry is the mean of its cluster
    let pick = |k: NeutralKind| {
        let cl: Vec<&Mode> = modes.iter().filter(|m| m.neutral == Some(k)).collect();
        if cl.is_empty() {
            return None;
        }
        let mean = cl.iter().map(|m| m.lambda).sum::<C64>() / cl.len() as f64;
        let mut rep = cl[0].clone();
        rep.lambda = mean;
        rep.residual = cl.iter().map(|m| m.residual).fold(0.0, f64::max);
        rep.overlap = cl.iter().map(|m| m.overlap).fold(1.0, f64::min);
        Some(rep)
    };
    let phase_mode = pick(NeutralKind::Phase);
    let translation_mode = pick(NeutralKind::Translation);
    let neutral_ok = [&phase_mode, &translation_mode].iter().all(|m| m.as_ref().is_none_or(|m| m.lambda.norm() <= NEUTRAL_TOL));
    let max_growth = modes.iter().filter(|m| m.neutral.is_none()).map(|m| m.lambda.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport { stable: max_growth <= GROWTH_TOL && neutral_ok, leading: modes, max_growth, phase_mode, translation_mode })
}

/// Leading eigenvalues of the linearization about a free soliton.
pub fn soliton_stability(s: &SolitonProfile) -> Result<StabilityReport> {
    analyse(blocks(s, s.omega(), &s.params))
}

/// The same analysis about a stationary state of the injected problem in
/// the holding frame (ω = θ); the constant E_in drops out of L.
pub fn stationary_stability(s: &SolitonProfile, p: &DimensionlessParams) -> Result<StabilityReport> {
    analyse(blocks(s, p.theta, p))
}

/// All eigenvalues of every block by dense QR, for cross-checks.
pub fn dense_spectrum(s: &SolitonProfile) -> Vec<(String, C64)> {
    let mut out = Vec::new();
    for b in blocks(s, s.omega(), &s.params) {
        for l in b.op.complex_eigenvalues().iter() {
            out.push((b.name.clone(), *l));
        }
    }
    out.sort_by(|a, b| b.1.re.total_cmp(&a.1.re));
    out
}

/// Locking coefficient K: a uniform holding field E_in captures the soliton
/// when |θ − (ν_s + θ_0)| ≤ K E_in, to first order in E_in. K follows from
/// projecting the uniform forcing on the phase mode with the adjoint null
/// vector of the symmetric block.
pub fn adler_coefficient(s: &SolitonProfile) -> Result<f64> {
    let b = blocks(s, s.omega(), &s.params).into_iter().next().expect("symmetric block");
    let m = b.basis.len();
    let lt = b.op.transpose();
    let eps = 1e-10;
    let shifted = &lt - DMatrix::<f64>::identity(2 * m, 2 * m) * eps;
    let lu = shifted.lu();
    let mut psi = DVector::<f64>::from_element(2 * m, 1.0);
    for _ in 0..4 {
        let z = lu.solve(&psi).ok_or(Error::EigenStagnation { residual: f64::INFINITY })?;
        psi = &z / z.norm();
    }
    let residual = (&lt * &psi).amax();
    if residual > 1e-6 {
        return Err(Error::EigenStagnation { residual });
    }
    let (_, t) = b.neutral.expect("phase mode template");
    let denom = psi.dot(&t);
    let cu: f64 = psi.rows(0, m).sum();
    let cv: f64 = psi.rows(m, m).sum();
    Ok(cu.hypot(cv) / denom.abs())
}
