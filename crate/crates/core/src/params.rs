//! Model parameters, unit reduction, the saturable gain law and the
//! stationary atomic means.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical rates and couplings of the two-medium laser.
///
/// Rates are in 1/s, pump rates are areal densities per unit time. The
/// saturation parameters are derived from the couplings, see [`Self::beta`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalParams {
    pub kappa: f64,
    /// Active coherence decay Γ.
    pub gamma_a: f64,
    /// Active lower-level relaxation Γ1.
    pub gamma_a1: f64,
    /// Active upper-level relaxation Γ2.
    pub gamma_a2: f64,
    /// Passive coherence decay γ.
    pub gamma_p: f64,
    pub gamma_p1: f64,
    pub gamma_p2: f64,
    pub r_a: f64,
    pub r_p: f64,
    pub s_a: f64,
    pub s_p: f64,
    #[serde(default)]
    pub delta_a: f64,
    #[serde(default)]
    pub delta_p: f64,
    pub g: f64,
    pub g_p: f64,
    pub k0: f64,
    pub c: f64,
    #[serde(default)]
    pub nu_in: f64,
    #[serde(default)]
    pub a_in: f64,
}

/// Scale separations recorded by [`DimensionalParams::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// κ over the smallest atomic rate.
    pub adiabatic_ratio: f64,
    /// Γ2/Γ1.
    pub active_hierarchy: f64,
    /// γ1/γ2.
    pub passive_hierarchy: f64,
    pub warnings: Vec<String>,
}

/// Conversion factors between the physical and the reduced description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Seconds per reduced time unit (2/κ).
    pub time: f64,
    /// Metres per reduced length unit, sqrt(c/(κ k0)).
    pub length: f64,
    /// Physical amplitude per reduced amplitude, 1/sqrt(β_p).
    pub field: f64,
}

impl DimensionalParams {
    pub fn beta(&self) -> f64 {
        4.0 * self.g * self.g / (self.gamma_a1 * self.gamma_a2)
    }

    pub fn beta_p(&self) -> f64 {
        4.0 * self.g_p * self.g_p / (self.gamma_p1 * self.gamma_p2)
    }

    /// Unsaturated gain A = βR_a.
    pub fn gain_a(&self) -> f64 {
        self.beta() * self.r_a
    }

    /// Unsaturated absorption A_p = β_pR_p.
    pub fn gain_p(&self) -> f64 {
        self.beta_p() * self.r_p
    }

    pub fn min_atomic_rate(&self) -> f64 {
        [self.gamma_a, self.gamma_a1, self.gamma_a2, self.gamma_p, self.gamma_p1, self.gamma_p2]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Rejects nonpositive rates and out-of-range pump statistics; scale
    /// separation problems only produce warnings.
    pub fn validate(&self) -> Result<RegimeReport> {
        let rates = [
            ("kappa", self.kappa),
            ("gamma_a", self.gamma_a),
            ("gamma_a1", self.gamma_a1),
            ("gamma_a2", self.gamma_a2),
            ("gamma_p", self.gamma_p),
            ("gamma_p1", self.gamma_p1),
            ("gamma_p2", self.gamma_p2),
            ("k0", self.k0),
            ("c", self.c),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("s_a", self.s_a), ("s_p", self.s_p)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("r_a", self.r_a), ("r_p", self.r_p), ("g", self.g), ("g_p", self.g_p), ("a_in", self.a_in)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.nu_in.is_finite() && self.delta_a.is_finite() && self.delta_p.is_finite()) {
            return Err(Error::InvalidParams("detunings must be finite".into()));
        }

        let report_ratio = self.kappa / self.min_atomic_rate();
        let active = self.gamma_a2 / self.gamma_a1;
        let passive = self.gamma_p1 / self.gamma_p2;
        let mut warnings = Vec::new();
        if report_ratio > 0.1 {
            warnings.push(format!("field is not slow: kappa/min(rate) = {report_ratio:.3e}"));
        }
        if active > 0.1 {
            warnings.push(format!("weak active inversion hierarchy: Gamma2/Gamma1 = {active:.3e}"));
        }
        if passive > 0.1 {
            warnings.push(format!("weak passive hierarchy: gamma1/gamma2 = {passive:.3e}"));
        }
        if self.delta_a != 0.0 || self.delta_p != 0.0 {
            warnings.push("nonzero atomic detunings are carried but ignored by the reduced model".into());
        }
        Ok(RegimeReport {
            adiabatic_ratio: report_ratio,
            active_hierarchy: active,
            passive_hierarchy: passive,
            warnings,
        })
    }

    pub fn scales(&self) -> Result<Scales> {
        let beta_p = self.beta_p();
        if self.kappa == 0.0 || self.beta() == 0.0 || beta_p == 0.0 || self.k0 == 0.0 {
            return Err(Error::Domain("kappa, beta, beta_p and k0 must be nonzero".into()));
        }
        Ok(Scales {
            time: 2.0 / self.kappa,
            length: (self.c / (self.kappa * self.k0)).sqrt(),
            field: 1.0 / beta_p.sqrt(),
        })
    }

    /// Reduced parameters plus the scale factors relating both descriptions.
    pub fn to_dimensionless(&self) -> Result<(DimensionlessParams, Scales)> {
        let scales = self.scales()?;
        let beta = self.beta();
        let beta_p = self.beta_p();
        let p = DimensionlessParams {
            g0: beta * self.r_a / self.kappa,
            a0: beta_p * self.r_p / self.kappa,
            b: beta_p / beta,
            theta: 2.0 * self.nu_in / self.kappa,
            e_in: beta_p.sqrt() * self.a_in,
            s_a: Some(self.s_a),
            s_p: Some(self.s_p),
        };
        Ok((p, scales))
    }

    /// Inverse of [`Self::to_dimensionless`]: keeps the rates of `base` and
    /// adjusts pumps, passive coupling and holding field to reproduce `p`.
    pub fn from_dimensionless(p: &DimensionlessParams, base: &DimensionalParams) -> Result<Self> {
        let beta = base.beta();
        if beta == 0.0 || base.kappa == 0.0 {
            return Err(Error::Domain("base parameters need nonzero kappa and beta".into()));
        }
        let beta_p = p.b * beta;
        let mut d = base.clone();
        d.g_p = (beta_p * d.gamma_p1 * d.gamma_p2 / 4.0).sqrt();
        d.r_a = p.g0 * d.kappa / beta;
        d.r_p = p.a0 * d.kappa / beta_p;
        d.nu_in = p.theta * d.kappa / 2.0;
        d.a_in = p.e_in / beta_p.sqrt();
        if let Some(s) = p.s_a {
            d.s_a = s;
        }
        if let Some(s) = p.s_p {
            d.s_p = s;
        }
        Ok(d)
    }

    /// A consistent parameter set for the reduced model `p` with field-to-atom
    /// rate ratio `adiabatic_ratio` and inversion hierarchy `hierarchy`.
    ///
    /// Slow atomic rates (Γ2, γ1) are 1, fast ones (Γ1, γ2) are 1/hierarchy,
    /// coherences decay at the mean of the two level rates, β = 1 and
    /// k0 = c = 1.
    pub fn adiabatic_family(p: &DimensionlessParams, adiabatic_ratio: f64, hierarchy: f64) -> Result<Self> {
        if !(adiabatic_ratio > 0.0 && hierarchy > 0.0 && hierarchy <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "need adiabatic_ratio > 0 and 0 < hierarchy <= 1, got {adiabatic_ratio}, {hierarchy}"
            )));
        }
        let fast = 1.0 / hierarchy;
        let base = DimensionalParams {
            kappa: adiabatic_ratio,
            gamma_a: 0.5 * (fast + 1.0),
            gamma_a1: fast,
            gamma_a2: 1.0,
            gamma_p: 0.5 * (fast + 1.0),
            gamma_p1: 1.0,
            gamma_p2: fast,
            r_a: 0.0,
            r_p: 0.0,
            s_a: p.s_a.unwrap_or(0.0),
            s_p: p.s_p.unwrap_or(0.0),
            delta_a: 0.0,
            delta_p: 0.0,
            g: (fast / 4.0).sqrt(),
            g_p: 0.0,
            k0: 1.0,
            c: 1.0,
            nu_in: 0.0,
            a_in: 0.0,
        };
        let d = Self::from_dimensionless(p, &base)?;
        d.validate()?;
        Ok(d)
    }
}

/// Parameters of the reduced field equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessParams {
    pub g0: f64,
    pub a0: f64,
    pub b: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub e_in: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_p: Option<f64>,
}

impl DimensionlessParams {
    pub fn new(g0: f64, a0: f64, b: f64, theta: f64, e_in: f64) -> Result<Self> {
        let p = DimensionlessParams { g0, a0, b, theta, e_in, s_a: None, s_p: None };
        p.validate()?;
        Ok(p)
    }

    /// g0 = 0 is accepted as the pure-loss limit.
    pub fn validate(&self) -> Result<()> {
        let ok = self.g0 >= 0.0
            && self.a0 >= 0.0
            && self.b > 0.0
            && self.e_in >= 0.0
            && [self.g0, self.a0, self.b, self.theta, self.e_in].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidParams(format!(
                "need g0 >= 0, a0 >= 0, b > 0, E_in >= 0, all finite; got {self:?}"
            )));
        }
        for s in [self.s_a, self.s_p].into_iter().flatten() {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidParams(format!("pump statistics must lie in [0, 1], got {s}")));
            }
        }
        Ok(())
    }

    pub fn i_in(&self) -> f64 {
        self.e_in * self.e_in
    }

    /// f(I) without the domain check; callers guarantee I >= 0.
    #[inline]
    pub fn gain(&self, i: f64) -> f64 {
        -1.0 - self.a0 / (1.0 + i) + self.g0 / (1.0 + i / self.b)
    }

    /// df/dI.
    #[inline]
    pub fn gain_slope(&self, i: f64) -> f64 {
        let s = 1.0 + i / self.b;
        self.a0 / ((1.0 + i) * (1.0 + i)) - self.g0 / (self.b * s * s)
    }

    /// Positive zeros of f, ascending. Clearing denominators gives
    /// I² + (b + 1 + a0 − g0 b) I − b (g0 − a0 − 1) = 0.
    pub fn gain_zeros(&self) -> Vec<f64> {
        let bq = self.b + 1.0 + self.a0 - self.g0 * self.b;
        let cq = -self.b * (self.g0 - self.a0 - 1.0);
        let disc = bq * bq - 4.0 * cq;
        if disc < 0.0 {
            return Vec::new();
        }
        let sq = disc.sqrt();
        // stable pair: q = -(b + sign(b) sqrt(disc))/2, roots q and c/q
        let q = -0.5 * (bq + bq.signum() * sq);
        let mut roots: Vec<f64> = if q == 0.0 { vec![0.0] } else { vec![q, cq / q] };
        roots.retain(|r| *r > 0.0 && r.is_finite());
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        roots
    }
}

/// f(I) = −1 − a0/(1+I) + g0/(1+I/b).
pub fn nonlinear_gain(i: f64, p: &DimensionlessParams) -> Result<f64> {
    if !(i >= 0.0) {
        return Err(Error::Domain(format!("intensity must be non-negative, got {i}")));
    }
    Ok(p.gain(i))
}

/// Adiabatic atomic means at field value `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeans {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma: C64,
    pub g_sigma: C64,
    pub pi1: f64,
    pub pi2: f64,
    pub pi: C64,
    pub gp_pi: C64,
    pub intensity: f64,
    pub intensity_p: f64,
}

pub fn atomic_steady_state(a: C64, d: &DimensionalParams) -> AtomicMeans {
    let beta = d.beta();
    let beta_p = d.beta_p();
    let i = beta * a.norm_sqr();
    let ip = beta_p * a.norm_sqr();
    // σ̄ written without dividing by g so that g = 0 stays finite
    let sigma = a * (2.0 * d.g * d.r_a / (d.gamma_a1 * d.gamma_a2 * (1.0 + i)));
    let pi = a * (-2.0 * d.g_p * d.r_p / (d.gamma_p1 * d.gamma_p2 * (1.0 + ip)));
    AtomicMeans {
        sigma1: d.r_a / d.gamma_a1 * i / (1.0 + i),
        sigma2: d.r_a / d.gamma_a2 / (1.0 + i),
        sigma,
        g_sigma: a * (0.5 * beta * d.r_a / (1.0 + i)),
        pi1: d.r_p / d.gamma_p1 / (1.0 + ip),
        pi2: d.r_p / d.gamma_p2 * ip / (1.0 + ip),
        pi,
        gp_pi: a * (-0.5 * beta_p * d.r_p / (1.0 + ip)),
        intensity: i,
        intensity_p: ip,
    }
}

/// Local deterministic right-hand side of the closed field equation in the
/// cavity frame at time `t`.
pub fn gain_rhs(a: C64, d: &DimensionalParams, t: f64) -> C64 {
    let inj = C64::from_polar(d.a_in, -d.nu_in * t);
    -0.5 * d.kappa * (a - inj) + saturable_term(a, d)
}

/// Same as [`gain_rhs`] in the frame rotating with the holding field.
pub fn gain_rhs_holding(a: C64, d: &DimensionalParams) -> C64 {
    C64::new(0.0, d.nu_in) * a - 0.5 * d.kappa * (a - d.a_in) + saturable_term(a, d)
}

#[inline]
fn saturable_term(a: C64, d: &DimensionalParams) -> C64 {
    let n = a.norm_sqr();
    a * (0.5 * (d.gain_a() / (1.0 + d.beta() * n) - d.gain_p() / (1.0 + d.beta_p() * n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> DimensionlessParams {
        DimensionlessParams::new(2.08, 2.0, 10.0, 0.0, 0.0).unwrap()
    }

    fn sample_dim() -> DimensionalParams {
        DimensionalParams {
            kappa: 0.3,
            gamma_a: 40.0,
            gamma_a1: 70.0,
            gamma_a2: 1.5,
            gamma_p: 35.0,
            gamma_p1: 0.8,
            gamma_p2: 60.0,
            r_a: 0.9,
            r_p: 0.11,
            s_a: 0.4,
            s_p: 0.7,
            delta_a: 0.0,
            delta_p: 0.0,
            g: 3.1,
            g_p: 2.2,
            k0: 5.0,
            c: 7.0,
            nu_in: 0.013,
            a_in: 0.05,
        }
    }

    #[test]
    fn gain_at_zero_and_infinity() {
        let p = reference();
        assert_relative_eq!(nonlinear_gain(0.0, &p).unwrap(), -0.92, epsilon = 1e-15);
        assert_relative_eq!(p.gain(1e12), -1.0, epsilon = 1e-9);
        assert!(nonlinear_gain(-1e-3, &p).is_err());
    }

    #[test]
    fn gain_zeros_match_quadratic() {
        // 0.1 I² − 0.78 I + 0.92 = 0
        let disc: f64 = 0.78 * 0.78 - 4.0 * 0.1 * 0.92;
        let lo = (0.78 - disc.sqrt()) / 0.2;
        let hi = (0.78 + disc.sqrt()) / 0.2;
        let z = reference().gain_zeros();
        assert_eq!(z.len(), 2);
        assert_relative_eq!(z[0], lo, max_relative = 1e-12);
        assert_relative_eq!(z[1], hi, max_relative = 1e-12);
        assert_relative_eq!(lo, 1.4485, epsilon = 1e-4);
        assert_relative_eq!(hi, 6.3515, epsilon = 1e-4);
        for r in z {
            assert!(reference().gain(r).abs() < 1e-13);
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let p = reference();
        for &i in &[0.01, 0.3, 1.7, 6.0, 40.0] {
            let h = 1e-6 * (1.0 + i);
            let fd = (p.gain(i + h) - p.gain((i - h).max(0.0))) / (i + h - (i - h).max(0.0));
            assert_relative_eq!(p.gain_slope(i), fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_saturation_gives_unit_b() {
        let mut d = sample_dim();
        // make beta_p = beta
        d.g_p = (d.beta() * d.gamma_p1 * d.gamma_p2 / 4.0).sqrt();
        let (p, _) = d.to_dimensionless().unwrap();
        assert_relative_eq!(p.b, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gain_from_pump() {
        let mut d = sample_dim();
        d.r_a = 2.08 * d.kappa / d.beta();
        let (p, _) = d.to_dimensionless().unwrap();
        assert_relative_eq!(p.g0, 2.08, epsilon = 1e-14);
    }

    #[test]
    fn zero_scale_is_domain_error() {
        let mut d = sample_dim();
        d.g = 0.0;
        assert!(matches!(d.to_dimensionless(), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip() {
        let d = sample_dim();
        let (p, _) = d.to_dimensionless().unwrap();
        let back = DimensionalParams::from_dimensionless(&p, &d).unwrap();
        let (q, _) = back.to_dimensionless().unwrap();
        for (x, y) in [(p.g0, q.g0), (p.a0, q.a0), (p.b, q.b), (p.theta, q.theta), (p.e_in, q.e_in)] {
            assert_relative_eq!(x, y, max_relative = 1e-13);
        }
    }

    #[test]
    fn validation() {
        let mut d = sample_dim();
        assert!(d.validate().unwrap().warnings.len() >= 1);
        d.gamma_a2 = 0.0;
        assert!(d.validate().is_err());
        let mut d = sample_dim();
        d.s_a = 1.5;
        assert!(d.validate().is_err());
        assert!(DimensionlessParams::new(2.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(DimensionlessParams::new(2.0, 1.0, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn zero_field_means() {
        let d = sample_dim();
        let m = atomic_steady_state(C64::new(0.0, 0.0), &d);
        assert_eq!(m.sigma1, 0.0);
        assert_relative_eq!(m.sigma2, d.r_a / d.gamma_a2);
        assert_eq!(m.g_sigma, C64::new(0.0, 0.0));
        assert_relative_eq!(m.pi1, d.r_p / d.gamma_p1);
        assert_eq!(m.pi2, 0.0);
    }

    #[test]
    fn unit_intensity_halves_upper_population() {
        let d = sample_dim();
        let a = C64::from_polar((1.0 / d.beta()).sqrt(), 0.7);
        let m = atomic_steady_state(a, &d);
        assert_relative_eq!(m.sigma2, d.r_a / (2.0 * d.gamma_a2), max_relative = 1e-14);
        let big = atomic_steady_state(C64::new(1e8, 0.0), &d);
        assert!(big.sigma2 < 1e-10 && big.pi1 < 1e-10);
    }

    #[test]
    fn gain_rhs_simple_points() {
        let d = sample_dim();
        assert_eq!(gain_rhs(C64::new(0.0, 0.0), &DimensionalParams { a_in: 0.0, ..d.clone() }, 3.0), C64::new(0.0, 0.0));
        let t = 2.5;
        let r = gain_rhs(C64::new(0.0, 0.0), &d, t);
        let want = C64::from_polar(0.5 * d.kappa * d.a_in, -d.nu_in * t);
        assert_relative_eq!((r - want).norm(), 0.0, epsilon = 1e-16);
    }

    // stationary equations of the reduced atomic model, written out
    // independently of atomic_steady_state
    fn reduced_residuals(a: C64, m: &AtomicMeans, d: &DimensionalParams) -> [f64; 6] {
        // σ relaxes at Γ1/2 once the hierarchy removes σ1 from the inversion
        let s_eq = -0.5 * d.gamma_a1 * m.sigma + d.g * m.sigma2 * a;
        let s2_eq = d.r_a - d.gamma_a2 * m.sigma2 - 2.0 * d.g * (m.sigma.conj() * a).re;
        let s1_eq = -d.gamma_a1 * m.sigma1 + 2.0 * d.g * (m.sigma.conj() * a).re;
        let p_eq = -0.5 * d.gamma_p2 * m.pi - d.g_p * m.pi1 * a;
        let p1_eq = d.r_p - d.gamma_p1 * m.pi1 + 2.0 * d.g_p * (m.pi.conj() * a).re;
        let p2_eq = -d.gamma_p2 * m.pi2 - 2.0 * d.g_p * (m.pi.conj() * a).re;
        let sa = d.r_a;
        let sp = d.r_p;
        [
            s_eq.norm() / (d.g * sa / d.gamma_a2 * a.norm()).max(1e-300),
            s2_eq.abs() / sa,
            s1_eq.abs() / sa,
            p_eq.norm() / (d.g_p * sp / d.gamma_p1 * a.norm()).max(1e-300),
            p1_eq.abs() / sp,
            p2_eq.abs() / sp,
        ]
    }

    proptest! {
        #[test]
        fn gain_matches_reduced_rhs(re in -3.0f64..3.0, im in -3.0f64..3.0, scale in 0.2f64..5.0) {
            let mut d = sample_dim();
            d.g *= scale;
            d.a_in = 0.0;
            d.nu_in = 0.0;
            let (p, sc) = d.to_dimensionless().unwrap();
            let e = C64::new(re, im);
            let a = e * sc.field;
            let lhs = gain_rhs_holding(a, &d) * (2.0 / d.kappa) / sc.field;
            let rhs = e * p.gain(e.norm_sqr());
            prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1e-300) + 1e-300);
        }

        #[test]
        fn holding_frame_reduction(re in -2.0f64..2.0, im in -2.0f64..2.0, nu in -0.2f64..0.2, ain in 0.0f64..0.3) {
            let mut d = sample_dim();
            d.nu_in = nu;
            d.a_in = ain;
            let (p, sc) = d.to_dimensionless().unwrap();
            let e = C64::new(re, im);
            let lhs = gain_rhs_holding(e * sc.field, &d) * (2.0 / d.kappa) / sc.field;
            let rhs = p.e_in + C64::new(0.0, p.theta) * e + e * p.gain(e.norm_sqr());
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn stationary_residuals_vanish(re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let d = sample_dim();
            let a = C64::new(re, im) * 0.3;
            let m = atomic_steady_state(a, &d);
            for r in reduced_residuals(a, &m, &d) {
                prop_assert!(r <= 1e-12, "residual {}", r);
            }
        }

        #[test]
        fn phase_equivariance(re in -2.0f64..2.0, im in -2.0f64..2.0, chi in -3.2f64..3.2) {
            let d = sample_dim();
            let a = C64::new(re, im) * 0.4;
            let rot = C64::from_polar(1.0, chi);
            let m0 = atomic_steady_state(a, &d);
            let m1 = atomic_steady_state(a * rot, &d);
            prop_assert!((m1.g_sigma - m0.g_sigma * rot).norm() <= 1e-13 * (1.0 + m0.g_sigma.norm()));
            prop_assert!((m1.gp_pi - m0.gp_pi * rot).norm() <= 1e-13 * (1.0 + m0.gp_pi.norm()));
            prop_assert!((m1.sigma2 - m0.sigma2).abs() <= 1e-13 * m0.sigma2);
            prop_assert!((m1.pi1 - m0.pi1).abs() <= 1e-13 * m0.pi1);
            // collinear / anti-collinear with a
            if a.norm() > 1e-6 {
                prop_assert!((m0.g_sigma * a.conj()).im.abs() <= 1e-12 * m0.g_sigma.norm() * a.norm());
                prop_assert!((m0.g_sigma * a.conj()).re >= 0.0);
                prop_assert!((m0.gp_pi * a.conj()).re <= 0.0);
            }
        }

        #[test]
        fn gain_bounded(i in 0.0f64..1e6, g0 in 0.0f64..5.0, a0 in 0.0f64..5.0, b in 0.1f64..20.0) {
            let p = DimensionlessParams::new(g0, a0, b, 0.0, 0.0).unwrap();
            let f = p.gain(i);
            prop_assert!(f.is_finite());
            prop_assert!(f >= -1.0 - a0 && f <= -1.0 + g0);
        }
    }
}
