//! FIR design (Kaiser-windowed sinc and root-raised-cosine prototypes) and
//! the streaming polyphase stages used by the conditioning chain.
//!
//! All stages index the input stream by absolute sample position and compute
//! each output as a fixed-order dot product over a window of that stream, so
//! chunk boundaries never change results: processing a stream in one call or
//! split at arbitrary block boundaries is bit-identical.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function, series expansion.
fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let half_x2 = (x / 2.0) * (x / 2.0);
    for k in 1..200 {
        term *= half_x2 / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Kaiser shape parameter for a target stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Kaiser estimate of the tap count needed for the given attenuation and
/// normalized transition width (Hz / sample rate); forced odd.
pub fn kaiser_tap_count(atten_db: f64, transition_norm: f64) -> usize {
    let n = ((atten_db - 7.95) / (2.285 * 2.0 * PI * transition_norm)).ceil() as usize + 1;
    n | 1
}

fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc low-pass, unit DC gain. `cutoff_norm` is
/// cutoff / sample_rate.
pub fn design_lowpass(taps: usize, cutoff_norm: f64, beta: f64) -> Vec<f64> {
    assert!(taps % 2 == 1, "linear-phase design wants an odd tap count");
    let m = (taps - 1) as f64 / 2.0;
    let w = kaiser_window(taps, beta);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| 2.0 * cutoff_norm * sinc(2.0 * cutoff_norm * (n as f64 - m)) * w[n])
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Root-raised-cosine (root-Nyquist) low-pass via frequency sampling.
///
/// The amplitude response is ~1 below `(1-rolloff)*cutoff`, crosses 1/sqrt(2)
/// at `cutoff` and vanishes above `(1+rolloff)*cutoff`, with
/// |H(c-x)|^2 + |H(c+x)|^2 = 1 across the rolloff. The aliased power of a
/// critically resampled white input is therefore flat, which is what lets
/// resampling at `2*cutoff` remove the correlation the low-pass introduces.
pub fn design_root_raised_cosine(taps: usize, cutoff_norm: f64, rolloff: f64) -> Vec<f64> {
    assert!(taps % 2 == 1, "linear-phase design wants an odd tap count");
    assert!(rolloff > 0.0 && rolloff < 1.0);
    assert!(cutoff_norm * (1.0 + rolloff) < 0.5, "rolloff extends past Nyquist");
    let n = taps;
    let m = (n - 1) / 2;
    let target = |f: f64| -> f64 {
        let lo = (1.0 - rolloff) * cutoff_norm;
        let hi = (1.0 + rolloff) * cutoff_norm;
        if f <= lo {
            1.0
        } else if f >= hi {
            0.0
        } else {
            let rc = 0.5 * (1.0 + (PI * (f - lo) / (hi - lo)).cos());
            rc.sqrt()
        }
    };
    // Zero-phase frequency sampling on the length-n DFT grid, shifted to a
    // causal center tap at m.
    let half = (n - 1) / 2;
    let mut h = vec![0.0f64; n];
    for (i, v) in h.iter_mut().enumerate() {
        let t = i as f64 - m as f64;
        let mut acc = target(0.0);
        for k in 1..=half {
            let f = k as f64 / n as f64;
            acc += 2.0 * target(f) * (2.0 * PI * f * t).cos();
        }
        *v = acc / n as f64;
    }
    h
}

/// Amplitude response of a real tap set at a normalized frequency.
pub fn amplitude_response(taps: &[f64], freq_norm: f64) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (n, &h) in taps.iter().enumerate() {
        let phase = -2.0 * PI * freq_norm * n as f64;
        re += h * phase.cos();
        im += h * phase.sin();
    }
    (re * re + im * im).sqrt()
}

// ---------------------------------------------------------------------------
// Dot-product kernel
// ---------------------------------------------------------------------------

/// Dense f32 dot product with a fixed accumulation order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2")
            && std::arch::is_x86_feature_detected!("fma")
        {
            return unsafe { dot_avx2(a, b) };
        }
    }
    dot_scalar(a, b)
}

fn dot_scalar(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[cfg(target_arch = "x86_64")]
#[inline]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    use std::arch::x86_64::*;
    let n = a.len();
    let mut acc0 = _mm256_setzero_ps();
    let mut acc1 = _mm256_setzero_ps();
    let mut acc2 = _mm256_setzero_ps();
    let mut acc3 = _mm256_setzero_ps();
    let mut i = 0;
    while i + 32 <= n {
        let pa = a.as_ptr().add(i);
        let pb = b.as_ptr().add(i);
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(pa), _mm256_loadu_ps(pb), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(pa.add(8)), _mm256_loadu_ps(pb.add(8)), acc1);
        acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(pa.add(16)), _mm256_loadu_ps(pb.add(16)), acc2);
        acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(pa.add(24)), _mm256_loadu_ps(pb.add(24)), acc3);
        i += 32;
    }
    while i + 8 <= n {
        acc0 = _mm256_fmadd_ps(
            _mm256_loadu_ps(a.as_ptr().add(i)),
            _mm256_loadu_ps(b.as_ptr().add(i)),
            acc0,
        );
        i += 8;
    }
    let sum = _mm256_add_ps(_mm256_add_ps(acc0, acc1), _mm256_add_ps(acc2, acc3));
    let hi = _mm256_extractf128_ps(sum, 1);
    let lo = _mm256_castps256_ps128(sum);
    let s = _mm_add_ps(lo, hi);
    let s = _mm_hadd_ps(s, s);
    let s = _mm_hadd_ps(s, s);
    let mut total = _mm_cvtss_f32(s);
    while i < n {
        total += a[i] * b[i];
        i += 1;
    }
    total
}

// ---------------------------------------------------------------------------
// Streaming stages
// ---------------------------------------------------------------------------

fn to_f32(taps: &[f64]) -> Vec<f32> {
    taps.iter().map(|&t| t as f32).collect()
}

/// FIR decimator: emits y[j] = sum_i h[i] x[jD - i] with the input
/// zero-padded before t = 0.
pub struct Decimator {
    taps_rev: Vec<f32>,
    factor: usize,
    /// x[t - (N-1) .. t] carried between pushes.
    carry: Vec<f32>,
    consumed: u64,
    next_out_t: u64,
    work: Vec<f32>,
}

impl Decimator {
    pub fn new(taps: &[f64], factor: usize) -> Self {
        assert!(factor >= 1);
        let mut taps_rev = to_f32(taps);
        taps_rev.reverse();
        let n = taps_rev.len();
        Self {
            taps_rev,
            factor,
            carry: vec![0.0; n - 1],
            consumed: 0,
            next_out_t: 0,
            work: Vec::new(),
        }
    }

    pub fn push(&mut self, input: &[f32], out: &mut Vec<f32>) {
        let n = self.taps_rev.len();
        self.work.clear();
        self.work.extend_from_slice(&self.carry);
        self.work.extend_from_slice(input);
        let t_start = self.consumed;
        let t_end = self.consumed + input.len() as u64;
        while self.next_out_t < t_end {
            let base = (self.next_out_t - t_start) as usize;
            out.push(dot(&self.work[base..base + n], &self.taps_rev));
            self.next_out_t += self.factor as u64;
        }
        self.consumed = t_end;
        let keep = n - 1;
        let len = self.work.len();
        self.carry.clear();
        self.carry.extend_from_slice(&self.work[len - keep..]);
    }
}

/// Polyphase zero-stuffing interpolator: emits
/// z[k] = sum_j h[k - jD] y[j] for every full-rate index k < D * (inputs so
/// far). Passband gain D should be folded into the taps by the caller.
///
/// The D outputs of one input share the same window, so the taps are stored
/// transposed (lag-major, phases contiguous) and each input broadcasts into
/// all D phase accumulators at once.
pub struct Interpolator {
    /// taps_t[q * padded + r] = h[r + q D]; rows padded to a multiple of 8.
    taps_t: Vec<f32>,
    factor: usize,
    padded: usize,
    depth: usize,
    /// y[j - (P-1) .. j] carried between pushes.
    carry: Vec<f32>,
    consumed: u64,
    work: Vec<f32>,
    stage: Vec<f32>,
}

impl Interpolator {
    pub fn new(taps: &[f64], factor: usize) -> Self {
        let depth = taps.len().div_ceil(factor);
        let padded = factor.next_multiple_of(8);
        let mut taps_t = vec![0.0f32; depth * padded];
        for r in 0..factor {
            for q in 0..depth {
                let idx = r + q * factor;
                if idx < taps.len() {
                    taps_t[q * padded + r] = taps[idx] as f32;
                }
            }
        }
        Self {
            taps_t,
            factor,
            padded,
            depth,
            carry: vec![0.0; depth - 1],
            consumed: 0,
            work: Vec::new(),
            stage: vec![0.0; padded],
        }
    }

    pub fn push(&mut self, input: &[f32], out: &mut Vec<f32>) {
        if input.is_empty() {
            return;
        }
        self.work.clear();
        self.work.extend_from_slice(&self.carry);
        self.work.extend_from_slice(input);
        let j_start = self.consumed;
        let j_end = self.consumed + input.len() as u64;
        out.reserve(input.len() * self.factor);
        // Emit z[k] for k in [D * j_start, D * j_end): z[k] needs y up to
        // floor(k / D) which is available once j = floor(k/D) < j_end.
        for j in j_start..j_end {
            let hi = (j - j_start) as usize + self.depth; // one past y[j] in work
            let window = &self.work[hi - self.depth..hi];
            broadcast_mac(window, &self.taps_t, self.padded, &mut self.stage);
            out.extend_from_slice(&self.stage[..self.factor]);
        }
        self.consumed = j_end;
        let keep = self.depth - 1;
        let len = self.work.len();
        self.carry.clear();
        self.carry.extend_from_slice(&self.work[len - keep..]);
    }
}

/// stage[r] = sum_q window[depth-1-q] * taps_t[q * padded + r].
#[inline]
fn broadcast_mac(window: &[f32], taps_t: &[f32], padded: usize, stage: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2")
            && std::arch::is_x86_feature_detected!("fma")
        {
            return unsafe { broadcast_mac_avx2(window, taps_t, padded, stage) };
        }
    }
    broadcast_mac_scalar(window, taps_t, padded, stage)
}

fn broadcast_mac_scalar(window: &[f32], taps_t: &[f32], padded: usize, stage: &mut [f32]) {
    stage.fill(0.0);
    let depth = window.len();
    for q in 0..depth {
        let y = window[depth - 1 - q];
        let row = &taps_t[q * padded..(q + 1) * padded];
        for (s, &t) in stage.iter_mut().zip(row) {
            *s += y * t;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[inline]
#[target_feature(enable = "avx2,fma")]
unsafe fn broadcast_mac_avx2(window: &[f32], taps_t: &[f32], padded: usize, stage: &mut [f32]) {
    use std::arch::x86_64::*;
    let depth = window.len();
    for chunk in 0..padded / 8 {
        let mut acc = _mm256_setzero_ps();
        let mut q = 0;
        while q < depth {
            let y = _mm256_set1_ps(*window.get_unchecked(depth - 1 - q));
            let t = _mm256_loadu_ps(taps_t.as_ptr().add(q * padded + chunk * 8));
            acc = _mm256_fmadd_ps(y, t, acc);
            q += 1;
        }
        _mm256_storeu_ps(stage.as_mut_ptr().add(chunk * 8), acc);
    }
}

/// Rational L/D resampler with a prototype designed at the virtual rate
/// `input_rate * L` (passband gain L folded in). Emits
/// out[n] = sum_m h[nD - mL] x[m].
pub struct Resampler {
    phase_taps_rev: Vec<Vec<f32>>,
    up: usize,
    down: usize,
    depth: usize,
    carry: Vec<f32>,
    consumed: u64,
    next_out: u64,
    /// Phase r = (next_out * down) % up and input index m = floor(next_out *
    /// down / up), advanced incrementally.
    phase: usize,
    m_next: u64,
    work: Vec<f32>,
}

impl Resampler {
    /// `taps` is the f64 prototype at the virtual rate with unit DC gain;
    /// the interpolation gain L is applied here.
    pub fn new(taps: &[f64], up: usize, down: usize) -> Self {
        assert!(up >= 1 && down >= 1);
        let depth = taps.len().div_ceil(up);
        let mut phase_taps_rev = Vec::with_capacity(up);
        for r in 0..up {
            let mut ph = vec![0.0f32; depth];
            for q in 0..depth {
                let idx = r + q * up;
                if idx < taps.len() {
                    ph[depth - 1 - q] = (taps[idx] * up as f64) as f32;
                }
            }
            phase_taps_rev.push(ph);
        }
        Self {
            phase_taps_rev,
            up,
            down,
            depth,
            carry: vec![0.0; depth - 1],
            consumed: 0,
            next_out: 0,
            phase: 0,
            m_next: 0,
            work: Vec::new(),
        }
    }

    /// Output sample count produced for a total of `m` consumed inputs:
    /// out[n] needs x up to floor(nD/L), so n is emittable iff nD < mL.
    fn outputs_available(&self, m: u64) -> u64 {
        ((m as u128 * self.up as u128).div_ceil(self.down as u128)) as u64
    }

    pub fn push(&mut self, input: &[f32], out: &mut Vec<f32>) {
        if input.is_empty() {
            return;
        }
        self.work.clear();
        self.work.extend_from_slice(&self.carry);
        self.work.extend_from_slice(input);
        let m_start = self.consumed;
        let m_end = self.consumed + input.len() as u64;
        let out_end = self.outputs_available(m_end);
        let (m_step, r_step) = (self.down / self.up, self.down % self.up);
        while self.next_out < out_end {
            let hi = (self.m_next - m_start) as usize + self.depth; // one past x[m]
            out.push(dot(&self.work[hi - self.depth..hi], &self.phase_taps_rev[self.phase]));
            self.next_out += 1;
            self.m_next += m_step as u64;
            self.phase += r_step;
            if self.phase >= self.up {
                self.phase -= self.up;
                self.m_next += 1;
            }
        }
        self.consumed = m_end;
        let keep = self.depth - 1;
        let len = self.work.len();
        self.carry.clear();
        self.carry.extend_from_slice(&self.work[len - keep..]);
    }
}

/// Pure delay of `delay` samples (zero-padded start).
pub struct DelayLine {
    carry: Vec<f32>,
    work: Vec<f32>,
}

impl DelayLine {
    pub fn new(delay: usize) -> Self {
        Self { carry: vec![0.0; delay], work: Vec::new() }
    }

    pub fn delay(&self) -> usize {
        self.carry.len()
    }

    pub fn push(&mut self, input: &[f32], out: &mut Vec<f32>) {
        let delay = self.carry.len();
        self.work.clear();
        self.work.extend_from_slice(&self.carry);
        self.work.extend_from_slice(input);
        out.extend_from_slice(&self.work[..input.len()]);
        let len = self.work.len();
        self.carry.clear();
        self.carry.extend_from_slice(&self.work[len - delay..]);
    }
}
