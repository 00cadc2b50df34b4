//! Entropy-estimation properties over the simulated pipeline.

use qrng_core::calibration::{effective_resolution, fit, run_sweep, SweepSource};
use qrng_core::dsp::{ConditionedBlock, Conditioner, DspConfig};
use qrng_core::entropy::{
    h_min_classical, h_min_conditional, purity, quadrature_moments,
};
use qrng_core::stattests::special::erfc;
use qrng_core::{SourceParams, SyntheticSource};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

fn calibrate(params: &SourceParams, cfg: &DspConfig) -> qrng_core::calibration::CalibrationResult {
    let points = run_sweep(
        &SweepSource::Synthetic(params.clone()),
        cfg,
        &[0.0, 5e-3, 10e-3, 15e-3, 20e-3],
        500_000,
    )
    .unwrap();
    let eff = effective_resolution(cfg, &params.capture_meta()).unwrap();
    fit(&points, eff, 20e-3).unwrap()
}

fn conditioned_pairs(params: &SourceParams, cfg: &DspConfig, pairs: usize) -> Vec<ConditionedBlock> {
    let src = SyntheticSource::new(params.clone()).unwrap();
    let mut cond = Conditioner::new(cfg.clone(), params.capture_meta()).unwrap();
    let mut out = Vec::new();
    let mut total = 0usize;
    let mut offset = 0u64;
    while total < pairs {
        let raw = src.generate_block(offset, 1 << 21).unwrap();
        offset += 1 << 21;
        let c = cond.push_block(&raw).unwrap();
        total += c.len();
        out.push(c);
    }
    out
}

#[test]
fn conditional_bound_stays_below_classical_entropy() {
    let params = SourceParams::default();
    let cfg = DspConfig::default();
    let cal = calibrate(&params, &cfg);
    for &power in &[2e-3, 6e-3, 20e-3] {
        let p = params.with_lo_power(power).with_seed(31 + power.to_bits());
        let blocks = conditioned_pairs(&p, &cfg, 1_200_000);
        let h_cond = h_min_conditional(cal.delta_q(power), cal.delta_p(power)).unwrap();
        let h_class = h_min_classical(&blocks, 8).unwrap();
        assert!(
            h_cond < h_class,
            "ordering violated at {power} W: cond {h_cond} vs class {h_class}"
        );
    }
}

#[test]
fn histogram_and_gaussian_fit_agree_on_vacuum_stream() {
    // Shot-only source, 1e7 pairs: histogram estimate within 0.02 bit of the
    // Gaussian modal-mass closed form.
    let params = SourceParams {
        electronic_noise_variance: 0.0,
        seed: 97,
        ..SourceParams::default()
    };
    let cfg = DspConfig::default();
    let blocks = conditioned_pairs(&params, &cfg, 10_000_000);
    let h_hist = h_min_classical(&blocks, 8).unwrap();

    // Gaussian route from the measured per-channel moments.
    let eff = blocks[0].effective_resolution;
    let mut mq = qrng_core::stats::Moments::new();
    let mut mp = qrng_core::stats::Moments::new();
    for b in &blocks {
        mq.push_slice_f32(&b.channel_q);
        mp.push_slice_f32(&b.channel_p);
    }
    let phi = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let modal = |mean: f64, sigma: f64| -> f64 {
        let k = (mean / eff).round();
        let lo = (k - 0.5) * eff;
        let hi = (k + 0.5) * eff;
        phi((hi - mean) / sigma) - phi((lo - mean) / sigma)
    };
    let h_gauss = -(modal(mq.mean(), mq.variance().sqrt())
        * modal(mp.mean(), mp.variance().sqrt()))
    .log2();
    let diff = (h_hist - h_gauss).abs();
    assert!(diff < 0.02, "histogram {h_hist} vs gaussian {h_gauss} (diff {diff})");
}

#[test]
fn purity_matches_closed_form_on_synthetic_gaussian_state() {
    // Conditioned blocks built directly from a known covariance: the purity
    // from measured moments matches 1/(2 sigma_q sigma_p) within 3 SE.
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(123);
    let (var_q, var_p) = (0.62f64, 0.55f64);
    let pairs = 2_000_000usize;
    // Work in "volts" with a fictitious conversion of 1 (slope 0.5, P 1).
    let block = ConditionedBlock {
        channel_q: (0..pairs)
            .map(|_| (var_q.sqrt() * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect(),
        channel_p: (0..pairs)
            .map(|_| (var_p.sqrt() * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect(),
        sample_rate: 2e9,
        effective_resolution: 1e-3,
    };
    let cal = qrng_core::calibration::CalibrationResult {
        slope_q: 0.5,
        slope_q_se: 0.0,
        slope_p: 0.5,
        slope_p_se: 0.0,
        intercept_q: 0.0,
        intercept_q_se: 0.0,
        intercept_p: 0.0,
        intercept_p_se: 0.0,
        r_squared_q: 1.0,
        r_squared_p: 1.0,
        effective_resolution: 1e-3,
        reference_lo_power: 1.0,
        delta_q_at_reference: 1e-3,
        delta_p_at_reference: 1e-3,
        timestamp_unix: 0,
        config_hash: String::new(),
    };
    let m = quadrature_moments(&[block], &cal, 1.0).unwrap();
    let mu = purity(m.variance_q_vu, m.variance_p_vu, 3.0 * m.se_q_vu.max(m.se_p_vu)).unwrap();
    let expect = 1.0 / (2.0 * (var_q * var_p).sqrt());
    let se_mu = expect * (m.se_q_vu / m.variance_q_vu + m.se_p_vu / m.variance_p_vu) / 2.0;
    assert!(
        (mu - expect).abs() < 3.0 * se_mu,
        "purity {mu} vs {expect} (3se = {})",
        3.0 * se_mu
    );
}

#[test]
fn shot_only_stream_sits_at_the_vacuum_variance() {
    let params = SourceParams {
        electronic_noise_variance: 0.0,
        seed: 55,
        ..SourceParams::default()
    };
    let cfg = DspConfig::default();
    let cal = calibrate(&params, &cfg);
    let blocks = conditioned_pairs(&params, &cfg, 1_200_000);
    let m = quadrature_moments(&blocks, &cal, params.lo_power).unwrap();
    assert!(
        (m.variance_q_vu - 0.5).abs() < 3.0 * m.se_q_vu + 0.002,
        "vacuum variance {} VU",
        m.variance_q_vu
    );
}

#[test]
fn clearance_ratio_sets_the_vu_variance() {
    // shot/electronic = 10^0.9 -> sigma^2 ~ 0.5 (1 + 10^-0.9) ~ 0.563 VU,
    // classical noise included, never subtracted.
    let ratio = 10f64.powf(0.9);
    let base = SourceParams::default();
    let params = SourceParams {
        electronic_noise_variance: base.shot_slope_q * base.lo_power / ratio,
        seed: 21,
        ..base
    };
    let cfg = DspConfig::default();
    let cal = calibrate(&params, &cfg);
    let blocks = conditioned_pairs(&params, &cfg, 1_200_000);
    let m = quadrature_moments(&blocks, &cal, params.lo_power).unwrap();
    let expect = 0.5 * (1.0 + 1.0 / ratio);
    assert!(
        (m.variance_q_vu - expect).abs() < 0.004,
        "variance {} VU vs {expect}",
        m.variance_q_vu
    );
}

#[test]
fn uniform_codes_reach_the_code_space_entropy() {
    let mut q = Vec::new();
    let mut p = Vec::new();
    for a in -8i32..8 {
        for b in -8i32..8 {
            for _ in 0..10 {
                q.push(a);
                p.push(b);
            }
        }
    }
    let h = qrng_core::entropy::h_min_classical_from_codes(&q, &p, 4).unwrap();
    assert!((h - 8.0).abs() < 1e-12, "h = {h}");
}
