use lsol::integrator::{evolve, EvolveConfig, FieldModel};
use lsol::soliton::{
    embed_profile, find_free_soliton, relax_synchronized_soliton, soliton_stability, Geometry, Outcome, RelaxConfig, SolitonProfile,
};
use lsol::{DimensionlessParams, GridSpec};

fn line_soliton() -> (SolitonProfile, GridSpec) {
    let p = DimensionlessParams::new(2.08, 2.0, 10.0, 0.0, 0.0).unwrap();
    let g = GridSpec::line(256, 64.0).unwrap();
    (find_free_soliton(&p, Geometry::Line, &g, None).unwrap(), g)
}

fn rel_l2(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn newton_converges_quadratically() {
    let (s, _) = line_soliton();
    let r = &s.residual_history;
    assert!(r.len() >= 4);
    assert!(s.residual <= 1e-8);
    // last three steps, ignoring the rounding floor
    let tail: Vec<f64> = r.iter().rev().take(4).rev().cloned().collect();
    for w in tail.windows(2) {
        if w[1] > 1e-12 {
            assert!(w[1] <= 100.0 * w[0] * w[0], "{tail:?}");
        }
    }
}

#[test]
fn line_profile_is_stationary_in_its_own_frame() {
    let (s, g) = line_soliton();
    // rotating with the soliton adds ν_s to the detuning
    let p = DimensionlessParams { theta: s.omega(), ..s.params.clone() };
    let f0 = embed_profile(&s, &g).unwrap();
    let tr = evolve(&f0, &EvolveConfig::deterministic(0.001, 100.0), FieldModel::Reduced(p), None).unwrap();
    let drift = tr.field.max_diff(&f0);
    assert!(drift <= 1e-6, "drift {drift:e}");
}

#[test]
fn radial_soliton_survives_on_the_square_grid() {
    let p = DimensionlessParams::new(2.11, 2.0, 10.0, 0.0, 0.0).unwrap();
    let s = find_free_soliton(&p, Geometry::Radial, &GridSpec::line(256, 64.0).unwrap(), None).unwrap();
    assert!(s.residual <= 1e-8);
    let peak = s.peak_intensity();
    assert!(peak > 1.0 && peak.is_finite());
    assert!(soliton_stability(&s).unwrap().stable);

    let sq = GridSpec::square(128, 64.0).unwrap();
    let f0 = embed_profile(&s, &sq).unwrap();
    let pr = DimensionlessParams { theta: s.omega(), ..p };
    let tr = evolve(&f0, &EvolveConfig::deterministic(0.02, 100.0), FieldModel::Reduced(pr), None).unwrap();
    let drift = tr.field.max_diff(&f0) / f0.max_abs();
    assert!(drift <= 1e-4, "shape drift {drift:e}");
}

#[test]
fn weak_holding_beam_locks_the_soliton() {
    let (s, g) = line_soliton();
    let p = DimensionlessParams { theta: 0.043, e_in: 0.02, ..s.params.clone() };
    let cfg = RelaxConfig { t_end: 6000.0, ..RelaxConfig::default() };
    let v = relax_synchronized_soliton(&s, &p, &g, &cfg).unwrap();
    assert_eq!(v.outcome, Some(Outcome::Locked), "{v:?}");
    assert!(v.derivative_norm <= 1e-6);
    assert!(v.background_amplitude > 0.01 && v.background_amplitude < 0.04, "{}", v.background_amplitude);
    // compare moduli: the locked profile carries the holding-beam phase
    let f = v.final_profile.unwrap();
    let free = embed_profile(&s, &g).unwrap();
    let shift = (f.argmax_abs() as isize - free.argmax_abs() as isize).rem_euclid(g.n[0] as isize) as usize;
    let mut a: Vec<_> = f.values.iter().map(|v| num_complex::Complex64::new(v.norm(), 0.0)).collect();
    a.rotate_left(shift);
    let b: Vec<_> = free.values.iter().map(|v| num_complex::Complex64::new(v.norm(), 0.0)).collect();
    assert!(rel_l2(&a, &b) <= 0.1, "{}", rel_l2(&a, &b));
}

#[test]
fn without_holding_beam_the_soliton_runs_free() {
    let (s, g) = line_soliton();
    let p = DimensionlessParams { theta: 0.02, ..s.params.clone() };
    let cfg = RelaxConfig { t_end: 300.0, ..RelaxConfig::default() };
    let v = relax_synchronized_soliton(&s, &p, &g, &cfg).unwrap();
    assert_eq!(v.outcome, Some(Outcome::FreeRunning));
    // in the θ frame the phase turns at ν_s − θ
    let nu = v.beat_frequency.unwrap();
    assert!((nu - (s.nu_s - 0.02)).abs() < 1e-4, "{nu} vs {}", s.nu_s - 0.02);
}

#[test]
fn detuned_weak_beam_beats() {
    let (s, g) = line_soliton();
    let p = DimensionlessParams { theta: s.nu_s + 0.1, e_in: 1e-4, ..s.params.clone() };
    let cfg = RelaxConfig { t_end: 500.0, ..RelaxConfig::default() };
    let v = relax_synchronized_soliton(&s, &p, &g, &cfg).unwrap();
    assert_eq!(v.outcome, Some(Outcome::Beating), "{v:?}");
    assert!((v.beat_frequency.unwrap().abs() - 0.1).abs() < 0.01, "{:?}", v.beat_frequency);
}

#[test]
fn strong_beam_delocalizes() {
    let (s, g) = line_soliton();
    let p = DimensionlessParams { theta: 0.043, e_in: 0.3, ..s.params.clone() };
    let cfg = RelaxConfig { t_end: 500.0, ..RelaxConfig::default() };
    let v = relax_synchronized_soliton(&s, &p, &g, &cfg).unwrap();
    assert!(matches!(v.outcome, Some(Outcome::Delocalized)), "{v:?}");
    assert!(v.radius > 4.0 * v.initial_radius);
}
