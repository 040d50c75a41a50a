//! Stability envelope properties on the example certificates.

use adaptive_stab::bounds::*;
use adaptive_stab::examples::*;
use adaptive_stab::lyapunov::LyapunovCertificate;
use adaptive_stab::scalar::log_grid;

const DELTA: f64 = 0.1;
const T0: u64 = 1000;

fn pwa() -> ExampleBundle {
    build_pwa(&PwaExampleParams::default()).unwrap()
}

/// Envelope on the PWA certificate with `T0` fixed and `e` taken from the schedule.
fn pwa_envelope(b: &ExampleBundle, x0: f64, e_scale: f64, lyap: &LyapunovCertificate) -> StabilityEnvelope {
    let p = b.bound_problem();
    let opts = EnvelopeOptions { window: 512, ..EnvelopeOptions::default() };
    let e = error_series(&p, DELTA / 2.0, x0, T0 + opts.window + 1).unwrap();
    let window: Vec<f64> = (0..=opts.window + 1).map(|j| e_scale * e[(T0 + j - 1) as usize]).collect();
    let plateau = state_bound(T0 + 1, DELTA / 6.0, x0, &p.cfs, p.u_max, p.sigma_w, p.n).unwrap();
    StabilityEnvelope::construct(DELTA, lyap, T0, plateau, &window, opts).unwrap()
}

#[test]
fn lambda_is_a_strict_contraction() {
    let b = pwa();
    let env = pwa_envelope(&b, 0.5, 1.0, b.lyapunov().unwrap());
    for s in log_grid(1e-6, 1e6, 241) {
        let l = env.lambda(s).unwrap();
        assert!(l < s && l >= 0.0, "lambda({s}) = {l}");
    }
    assert_eq!(env.lambda(0.0).unwrap(), 0.0);
    let v = 3.0;
    assert!(env.lambda_pow(v, 40).unwrap() < env.lambda_pow(v, 39).unwrap());
}

#[test]
fn eta_is_non_increasing() {
    let b = pwa();
    let env = pwa_envelope(&b, 0.5, 1.0, b.lyapunov().unwrap());
    let mut prev = f64::INFINITY;
    for t in 0..=100_000u64 {
        let e = env.eta(t);
        assert!(e <= prev && e.is_finite(), "eta({t}) = {e} after {prev}");
        prev = e;
    }
    assert!(env.eta_tilde(T0).is_some() && env.eta_tilde(100_000).is_none());
    assert_eq!(env.eta(0), env.eta_head);
}

#[test]
fn offset_ignores_initial_state_and_error_schedule() {
    let b = pwa();
    let lyap = b.lyapunov().unwrap();
    let base = pwa_envelope(&b, 0.5, 1.0, lyap).c2;
    assert!(base > 0.0 && base.is_finite());
    for x0 in [0.1, 0.5, 2.0] {
        for scale in [1.0, 10.0] {
            let env = pwa_envelope(&b, x0, scale, lyap);
            assert_eq!(env.c2, base, "x0 = {x0}, scale = {scale}");
        }
    }
    let scaled = pwa_envelope(&b, 0.5, 10.0, lyap);
    let plain = pwa_envelope(&b, 0.5, 1.0, lyap);
    assert!(scaled.eta(T0 + 600) >= plain.eta(T0 + 600));
}

#[test]
fn zero_offset_gives_zero_c2() {
    let b = pwa();
    let mut lyap = b.lyapunov().unwrap().clone();
    lyap.d_tilde = 0.0;
    assert_eq!(pwa_envelope(&b, 0.5, 1.0, &lyap).c2, 0.0);
}

#[test]
fn window_length_is_checked() {
    let b = pwa();
    let lyap = b.lyapunov().unwrap();
    let opts = EnvelopeOptions { window: 8, ..EnvelopeOptions::default() };
    assert!(StabilityEnvelope::construct(DELTA, lyap, 5, 1.0, &[0.1; 9], opts).is_err());
    assert!(StabilityEnvelope::construct(DELTA, lyap, 5, 1.0, &[0.1; 10], opts).is_ok());
    assert!(StabilityEnvelope::construct(DELTA, lyap, 5, 1.0, &[-0.1; 10], opts).is_err());
}

#[test]
fn linear_example_envelope_is_finite_and_x0_free() {
    let mut c2 = Vec::new();
    for x0 in [0.1, 0.5, 2.0] {
        let b = build_linear(&LinearExampleParams { x0: vec![x0], h_samples: 20_000, ..Default::default() }).unwrap();
        let p = b.bound_problem();
        let s = BoundSchedule::compute(&p, DELTA, b.x0_norm(), 1, 10_000).unwrap();
        assert_eq!(s.times.contained, Horizon::Infinite);
        assert!(s.condition_half.holds);
        let env = stability_envelope(&p, &s, b.lyapunov().unwrap(), EnvelopeOptions::default()).unwrap();
        assert!(env.eta(0).is_finite() && env.eta(u64::MAX).is_finite());
        assert!(env.eta(u64::MAX) <= env.eta(0));
        c2.push(env.c2);
    }
    assert!(c2.iter().all(|c| *c == c2[0]));
}
