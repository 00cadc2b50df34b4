//! Embedded statistical test battery, an SP800-22-style subset: Frequency,
//! BlockFrequency, CumulativeSums (forward/backward), Runs, LongestRun,
//! DFT, ApproximateEntropy and Serial (both statistics).
//!
//! Each test follows its published definition; block-size defaults are
//! documented on `BatteryConfig`. Not a certified replacement for the
//! reference tool — bits can be exported in its ASCII format instead.

pub mod special;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::error::{Error, Result};
use special::{erfc, igamc, normal_cdf};

/// Outcome of one statistical test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub p_value: f64,
    /// p_value >= significance.
    pub passed: bool,
    pub bits_tested: u64,
    pub parameters: BTreeMap<String, f64>,
}

impl TestResult {
    fn new(name: &str, p_value: f64, significance: f64, bits: u64) -> Self {
        Self {
            test_name: name.into(),
            p_value,
            passed: p_value >= significance,
            bits_tested: bits,
            parameters: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.into(), value);
        self
    }
}

/// A test that could not run on the given input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedTest {
    pub test_name: String,
    pub reason: String,
}

/// Battery configuration.
///
/// Defaults: significance 0.01; BlockFrequency block length picked as
/// max(128, ceil(n/99)) so the block count stays below 100 with blocks
/// longer than 1% of the stream; ApproximateEntropy m = 10; Serial m = 16.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    pub significance: f64,
    /// BlockFrequency block length; 0 picks the automatic value.
    pub block_frequency_len: usize,
    pub approximate_entropy_m: u32,
    pub serial_m: u32,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            significance: 0.01,
            block_frequency_len: 0,
            approximate_entropy_m: 10,
            serial_m: 16,
        }
    }
}

/// Results of a battery run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryReport {
    pub significance: f64,
    pub bits_tested: u64,
    pub results: Vec<TestResult>,
    pub skipped: Vec<SkippedTest>,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn pass_count(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }
}

/// Run every test that fits the input length.
pub fn run_battery(bits: &BitBuffer, cfg: &BatteryConfig) -> Result<BatteryReport> {
    let n = bits.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!(
            "battery needs at least 100 bits, got {n}"
        )));
    }
    let alpha = cfg.significance;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let skip = |name: &str, reason: String, skipped: &mut Vec<SkippedTest>| {
        skipped.push(SkippedTest { test_name: name.into(), reason });
    };

    results.push(frequency_test(bits, alpha));
    let m_bf = if cfg.block_frequency_len > 0 {
        cfg.block_frequency_len
    } else {
        128usize.max(n.div_ceil(99))
    };
    if n >= m_bf {
        results.push(block_frequency_test(bits, m_bf, alpha));
    } else {
        skip("BlockFrequency", format!("needs >= {m_bf} bits"), &mut skipped);
    }
    results.extend(cumulative_sums_tests(bits, alpha));
    results.push(runs_test(bits, alpha));
    if n >= 128 {
        results.push(longest_run_test(bits, alpha));
    } else {
        skip("LongestRun", "needs >= 128 bits".into(), &mut skipped);
    }
    if n >= 1000 {
        results.push(dft_test(bits, alpha));
    } else {
        skip("DFT", "needs >= 1000 bits".into(), &mut skipped);
    }
    let m_ae = cfg.approximate_entropy_m;
    if (m_ae as f64) < (n as f64).log2() - 5.0 {
        results.push(approximate_entropy_test(bits, m_ae, alpha));
    } else {
        skip(
            "ApproximateEntropy",
            format!("m = {m_ae} too large for {n} bits (needs m < log2(n) - 5)"),
            &mut skipped,
        );
    }
    let m_se = cfg.serial_m;
    if (m_se as f64) < (n as f64).log2() - 2.0 {
        results.extend(serial_tests(bits, m_se, alpha));
    } else {
        skip(
            "Serial",
            format!("m = {m_se} too large for {n} bits (needs m < log2(n) - 2)"),
            &mut skipped,
        );
    }
    Ok(BatteryReport { significance: alpha, bits_tested: n as u64, results, skipped })
}

// ---------------------------------------------------------------------------
// Individual tests
// ---------------------------------------------------------------------------

/// Frequency (monobit) test.
pub fn frequency_test(bits: &BitBuffer, alpha: f64) -> TestResult {
    let n = bits.len() as f64;
    let ones = bits.count_ones() as f64;
    let s = 2.0 * ones - n;
    let s_obs = s.abs() / n.sqrt();
    let p = erfc(s_obs / std::f64::consts::SQRT_2);
    TestResult::new("Frequency", p, alpha, bits.len() as u64).with("partial_sum", s)
}

/// Frequency within a block.
pub fn block_frequency_test(bits: &BitBuffer, block_len: usize, alpha: f64) -> TestResult {
    let n = bits.len();
    let blocks = n / block_len;
    let mut chi2 = 0.0;
    for b in 0..blocks {
        let ones = count_ones_range(bits, b * block_len, (b + 1) * block_len) as f64;
        let pi = ones / block_len as f64;
        chi2 += (pi - 0.5) * (pi - 0.5);
    }
    chi2 *= 4.0 * block_len as f64;
    let p = igamc(blocks as f64 / 2.0, chi2 / 2.0);
    TestResult::new("BlockFrequency", p, alpha, n as u64)
        .with("block_len", block_len as f64)
        .with("blocks", blocks as f64)
        .with("chi_squared", chi2)
}

/// Cumulative sums, forward and backward.
pub fn cumulative_sums_tests(bits: &BitBuffer, alpha: f64) -> [TestResult; 2] {
    let n = bits.len();
    // One pass: track running sum, its extremes, and the total. The
    // backward statistic is max_j |S_n - S_j|.
    let mut s = 0i64;
    let mut min_s = 0i64;
    let mut max_s = 0i64;
    for w in 0..bits.words().len() {
        let word = bits.words()[w];
        let valid = (n - w * 64).min(64);
        for b in 0..valid {
            s += if (word >> b) & 1 == 1 { 1 } else { -1 };
            min_s = min_s.min(s);
            max_s = max_s.max(s);
        }
    }
    let z_fwd = max_s.max(-min_s).max(1) as f64;
    let z_bwd = (s - min_s).max(max_s - s).max(1) as f64;
    let p = |z: f64| cusum_p_value(n as f64, z);
    [
        TestResult::new("CumulativeSums", p(z_fwd), alpha, n as u64)
            .with("mode", 0.0)
            .with("z", z_fwd),
        TestResult::new("CumulativeSums", p(z_bwd), alpha, n as u64)
            .with("mode", 1.0)
            .with("z", z_bwd),
    ]
}

fn cusum_p_value(n: f64, z: f64) -> f64 {
    let sq = n.sqrt();
    let mut p = 1.0;
    let k_lo = ((-n / z + 1.0) / 4.0).floor() as i64;
    let k_hi = ((n / z - 1.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        p -= normal_cdf((4.0 * k + 1.0) * z / sq) - normal_cdf((4.0 * k - 1.0) * z / sq);
    }
    let k_lo = ((-n / z - 3.0) / 4.0).floor() as i64;
    let k_hi = ((n / z - 3.0) / 4.0).floor() as i64;
    for k in k_lo..=k_hi {
        let k = k as f64;
        p += normal_cdf((4.0 * k + 3.0) * z / sq) - normal_cdf((4.0 * k + 1.0) * z / sq);
    }
    p.clamp(0.0, 1.0)
}

/// Runs test.
pub fn runs_test(bits: &BitBuffer, alpha: f64) -> TestResult {
    let n = bits.len();
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        // Prerequisite frequency check failed; the test is not applicable
        // and reports p = 0 per the published procedure.
        return TestResult::new("Runs", 0.0, alpha, n as u64).with("pi", pi);
    }
    // Count transitions word-wise: w ^ (w >> 1) marks within-word bit flips.
    let words = bits.words();
    let mut transitions = 0u64;
    for (w, &word) in words.iter().enumerate() {
        let valid = (n - w * 64).min(64);
        let x = word ^ (word >> 1);
        let mask = if valid >= 64 { u64::MAX >> 1 } else { (1u64 << (valid - 1)) - 1 };
        transitions += (x & mask).count_ones() as u64;
        // Boundary pair with the next word.
        let next_start = (w + 1) * 64;
        if valid == 64 && next_start < n {
            let last = (word >> 63) & 1;
            let first = words[w + 1] & 1;
            transitions += (last ^ first) as u64;
        }
    }
    let v_obs = transitions as f64 + 1.0;
    let p = erfc(
        (v_obs - 2.0 * nf * pi * (1.0 - pi)).abs()
            / (2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi)),
    );
    TestResult::new("Runs", p, alpha, n as u64).with("pi", pi).with("v_obs", v_obs)
}

/// Longest run of ones in a block.
pub fn longest_run_test(bits: &BitBuffer, alpha: f64) -> TestResult {
    let n = bits.len();
    let (m, classes, probs): (usize, &[u64], &[f64]) = if n >= 750_000 {
        (
            10_000,
            &[10, 11, 12, 13, 14, 15, 16],
            &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        )
    } else if n >= 6272 {
        (128, &[4, 5, 6, 7, 8, 9], &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (8, &[1, 2, 3, 4], &[0.2148, 0.3672, 0.2305, 0.1875])
    };
    let blocks = n / m;
    let k = classes.len() - 1;
    let mut counts = vec![0u64; classes.len()];
    for b in 0..blocks {
        let longest = longest_one_run(bits, b * m, (b + 1) * m);
        let lo = classes[0];
        let hi = classes[k];
        let idx = longest.clamp(lo, hi) - lo;
        counts[idx as usize] += 1;
    }
    let nb = blocks as f64;
    let mut chi2 = 0.0;
    for (c, &pi) in counts.iter().zip(probs) {
        let expect = nb * pi;
        chi2 += (*c as f64 - expect) * (*c as f64 - expect) / expect;
    }
    let p = igamc(k as f64 / 2.0, chi2 / 2.0);
    TestResult::new("LongestRun", p, alpha, n as u64)
        .with("block_len", m as f64)
        .with("blocks", nb)
        .with("chi_squared", chi2)
}

fn longest_one_run(bits: &BitBuffer, start: usize, end: usize) -> u64 {
    let mut longest = 0u64;
    let mut current = 0u64;
    let words = bits.words();
    let mut i = start;
    while i < end {
        let w = i / 64;
        let b = i % 64;
        let take = (64 - b).min(end - i);
        let mut chunk = (words[w] >> b) & mask_lo(take);
        // Scan runs inside the chunk.
        while chunk != 0 {
            let tz = chunk.trailing_zeros() as u64;
            if tz > 0 {
                longest = longest.max(current);
                current = 0;
                chunk >>= tz;
                i += tz as usize;
                continue;
            }
            let ones = chunk.trailing_ones() as u64;
            current += ones;
            chunk = if ones >= 64 { 0 } else { chunk >> ones };
            i += ones as usize;
        }
        let consumed = (i - (w * 64 + b)) as u64;
        let zeros_rest = take as u64 - consumed;
        if zeros_rest > 0 {
            longest = longest.max(current);
            current = 0;
        }
        i = w * 64 + b + take;
    }
    longest.max(current)
}

#[inline]
fn mask_lo(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Spectral (DFT) test.
pub fn dft_test(bits: &BitBuffer, alpha: f64) -> TestResult {
    use realfft::RealFftPlanner;
    let n = bits.len();
    let mut x = vec![0.0f32; n];
    for (i, v) in x.iter_mut().enumerate() {
        *v = if bits.get(i) { 1.0 } else { -1.0 };
    }
    let mut planner = RealFftPlanner::<f32>::new();
    let fft = planner.plan_fft_forward(n);
    let mut spectrum = fft.make_output_vec();
    fft.process(&mut x, &mut spectrum).expect("dft sizing");
    drop(x);
    let threshold = ((1.0 / 0.05f64).ln() * n as f64).sqrt();
    let half = n / 2;
    let below = spectrum
        .iter()
        .take(half)
        .filter(|c| (c.norm_sqr() as f64).sqrt() < threshold)
        .count() as f64;
    let n0 = 0.95 * half as f64;
    let d = (below - n0) / (n as f64 * 0.95 * 0.05 / 4.0).sqrt();
    let p = erfc(d.abs() / std::f64::consts::SQRT_2);
    TestResult::new("DFT", p, alpha, n as u64).with("threshold", threshold).with("below", below)
}

/// Approximate entropy with block length m.
pub fn approximate_entropy_test(bits: &BitBuffer, m: u32, alpha: f64) -> TestResult {
    let n = bits.len();
    let counts_m1 = cyclic_pattern_counts(bits, m + 1);
    let counts_m = fold_counts(&counts_m1);
    let phi = |counts: &[u64], blocks: f64| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let pi = c as f64 / blocks;
                pi * pi.ln()
            })
            .sum()
    };
    let apen = phi(&counts_m, n as f64) - phi(&counts_m1, n as f64);
    let chi2 = 2.0 * n as f64 * (std::f64::consts::LN_2 - apen);
    let p = igamc(2f64.powi(m as i32 - 1), chi2 / 2.0);
    TestResult::new("ApproximateEntropy", p, alpha, n as u64)
        .with("m", m as f64)
        .with("apen", apen)
        .with("chi_squared", chi2)
}

/// Serial test with block length m; returns both statistics.
pub fn serial_tests(bits: &BitBuffer, m: u32, alpha: f64) -> [TestResult; 2] {
    let n = bits.len() as f64;
    let counts_m = cyclic_pattern_counts(bits, m);
    let counts_m1 = fold_counts(&counts_m);
    let counts_m2 = fold_counts(&counts_m1);
    let psi2 = |counts: &[u64], m: u32| -> f64 {
        let sum: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
        2f64.powi(m as i32) / n * sum - n
    };
    let psi_m = psi2(&counts_m, m);
    let psi_m1 = psi2(&counts_m1, m - 1);
    let psi_m2 = if m >= 2 { psi2(&counts_m2, m - 2) } else { 0.0 };
    let d1 = psi_m - psi_m1;
    let d2 = psi_m - 2.0 * psi_m1 + psi_m2;
    let p1 = igamc(2f64.powi(m as i32 - 2), d1 / 2.0);
    let p2 = igamc(2f64.powi(m as i32 - 3), d2 / 2.0);
    let bits_n = bits.len() as u64;
    [
        TestResult::new("Serial", p1, alpha, bits_n)
            .with("m", m as f64)
            .with("statistic", 1.0)
            .with("delta_psi2", d1),
        TestResult::new("Serial", p2, alpha, bits_n)
            .with("m", m as f64)
            .with("statistic", 2.0)
            .with("delta2_psi2", d2),
    ]
}

/// Counts of every m-bit pattern over the cyclically extended sequence
/// (each of the n positions contributes one window).
fn cyclic_pattern_counts(bits: &BitBuffer, m: u32) -> Vec<u64> {
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    // Seed the window with the first m-1 bits.
    let mut w = 0usize;
    for i in 0..(m - 1) as usize {
        w = (w << 1) | bits.get(i % n) as usize;
    }
    w &= mask >> 1;
    for i in (m - 1) as usize..n + (m - 1) as usize {
        w = ((w << 1) | bits.get(i % n) as usize) & mask;
        counts[w] += 1;
    }
    counts
}

/// Counts of (m-1)-bit patterns from m-bit pattern counts: windows at the
/// same cyclic positions drop their newest bit.
fn fold_counts(counts: &[u64]) -> Vec<u64> {
    let half = counts.len() / 2;
    let mut out = vec![0u64; half];
    for (v, &c) in counts.iter().enumerate() {
        out[v >> 1] += c;
    }
    out
}

fn count_ones_range(bits: &BitBuffer, start: usize, end: usize) -> u64 {
    let words = bits.words();
    let mut total = 0u64;
    let mut i = start;
    while i < end {
        let w = i / 64;
        let b = i % 64;
        let take = (64 - b).min(end - i);
        total += ((words[w] >> b) & mask_lo(take)).count_ones() as u64;
        i += take;
    }
    total
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

/// Aggregate pass/fail view over a set of results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryReport {
    pub rows: Vec<TestResult>,
    pub pass_count: usize,
    pub total: usize,
    pub all_passed: bool,
}

pub fn p_value_summary(results: &[TestResult]) -> Result<SummaryReport> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("no test results to summarize".into()));
    }
    Ok(SummaryReport {
        rows: results.to_vec(),
        pass_count: results.iter().filter(|r| r.passed).count(),
        total: results.len(),
        all_passed: results.iter().all(|r| r.passed),
    })
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:>10}  {}", "Test", "p-value", "Result")?;
        writeln!(f, "{:-<22} {:->10}  {:-<7}", "", "", "")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:>10.6}  {}",
                r.test_name,
                r.p_value,
                if r.passed { "PASSED" } else { "FAILED" }
            )?;
        }
        write!(f, "{}/{} passed", self.pass_count, self.total)
    }
}
