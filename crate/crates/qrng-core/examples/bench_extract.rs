use qrng_core::bits::BitBuffer;
use qrng_core::extractor::{extract, size_extractor};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use std::time::Instant;

fn main() {
    let params = size_extractor(10.106, 16, 1e-17, 17600)
        .unwrap()
        .seed_from_value(7)
        .unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let mut block = BitBuffer::with_capacity(17600);
    for _ in 0..17600 / 64 {
        block.push_bits(rng.gen::<u64>(), 64);
    }
    // warm
    let mut sink = 0u64;
    for _ in 0..100 {
        sink ^= extract(&block, &params).unwrap().words()[0];
    }
    let iters = 3000;
    let t = Instant::now();
    for _ in 0..iters {
        sink ^= extract(&block, &params).unwrap().words()[0];
    }
    let dt = t.elapsed().as_secs_f64();
    let bits_out = iters as f64 * params.output_bits as f64;
    println!(
        "extract m=17600 n={}: {:.1} us/block, {:.1} Mbit/s output (sink {sink})",
        params.output_bits,
        dt / iters as f64 * 1e6,
        bits_out / dt / 1e6
    );
}
