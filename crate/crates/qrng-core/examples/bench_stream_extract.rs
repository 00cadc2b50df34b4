use qrng_core::dsp::{Conditioner, DspConfig};
use qrng_core::extractor::StreamExtractor;
use qrng_core::pipeline::{self, PipelineConfig};
use qrng_core::{SourceParams, SyntheticSource};
use std::time::Instant;

fn main() {
    let mut cfg = PipelineConfig::default();
    cfg.sweep.samples_per_point = 300_000;
    let art = pipeline::run_calibration(&cfg).unwrap();
    let params = pipeline::extractor_params_for(&cfg, &art.calibration, 20e-3, 8).unwrap();
    let sp = SourceParams::default();
    let src = SyntheticSource::new(sp.clone()).unwrap();
    let mut cond = Conditioner::new(DspConfig::default(), sp.capture_meta()).unwrap();
    let mut blocks = Vec::new();
    let mut pairs = 0usize;
    let mut offset = 0u64;
    while pairs < 2_000_000 {
        let raw = src.generate_block(offset, 1 << 21).unwrap();
        offset += 1 << 21;
        let c = cond.push_block(&raw).unwrap();
        pairs += c.len();
        blocks.push(c);
    }
    let mut ex = StreamExtractor::new(params.clone(), 8).unwrap();
    for b in &blocks { ex.push_block(b).unwrap(); }
    let _ = ex.finish();
    let t = Instant::now();
    let mut bits_out = 0usize;
    for _ in 0..3 {
        let mut ex = StreamExtractor::new(params.clone(), 8).unwrap();
        for b in &blocks { ex.push_block(b).unwrap(); }
        bits_out += ex.finish().bits.len();
    }
    let dt = t.elapsed().as_secs_f64();
    println!("extract_stream: {:.1} Mbit/s", bits_out as f64 / dt / 1e6);
}
