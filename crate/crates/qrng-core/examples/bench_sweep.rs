use qrng_core::calibration::{run_sweep, SweepSource};
use qrng_core::dsp::DspConfig;
use qrng_core::SourceParams;
use std::time::Instant;

fn main() {
    // Criterion-5-scale config: 5 GSps input, same band, 2 GSps out.
    let params = SourceParams { adc_rate: 5e9, ..SourceParams::default() };
    let dsp = DspConfig::default();
    let t = Instant::now();
    let pts = run_sweep(
        &SweepSource::Synthetic(params.clone()),
        &dsp,
        &[0.0, 10e-3, 20e-3],
        10_000_000,
    )
    .unwrap();
    let dt = t.elapsed();
    println!("3 points x 1e7 conditioned @5GSps: {:.2?} ({:.1} ms/point)", dt, dt.as_millis() as f64 / 3.0);
    println!("var(q) at max: {:.3e}", pts[2].variance_q);

    // Default 25 GSps for comparison, fewer samples.
    let params25 = SourceParams::default();
    let t = Instant::now();
    run_sweep(&SweepSource::Synthetic(params25), &dsp, &[0.0, 10e-3, 20e-3], 1_000_000).unwrap();
    println!("3 points x 1e6 conditioned @25GSps: {:.2?}", t.elapsed());
}
