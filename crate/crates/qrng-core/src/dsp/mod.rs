//! Pre-processing chain: high-pass filter, band selection by real sine
//! mixing (high-side by default), root-Nyquist low-pass and rational
//! resampling, plus spectral diagnostics.
//!
//! The high-pass is realized as a delay-minus-narrowband-lowpass, with the
//! lowpass branch running decimated (the branch only carries content below
//! ~2x the cutoff, so it can be computed at a small fraction of the input
//! rate and interpolated back). The resampling low-pass is a square-root
//! raised cosine centered on the output Nyquist frequency: the aliased power
//! of critically resampled in-band noise is then spectrally flat, so the
//! decimation itself removes the correlation the filter would otherwise
//! leave behind.

pub mod fir;
pub mod welch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::qraw::CaptureMeta;
use crate::signal::{rationalize, SampleBlock};
use fir::{DelayLine, Decimator, Interpolator, Resampler};

/// Configuration of the conditioning chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    /// High-pass cutoff in Hz; 0 disables the stage.
    pub highpass_cutoff: f64,
    /// Lower edge of the retained spectral window, Hz.
    pub band_low: f64,
    /// Upper edge of the retained spectral window, Hz.
    pub band_high: f64,
    /// Real mixing frequency, Hz; 0 disables the stage. Defaults to
    /// `band_high` (high-side mixing), which lands the window on
    /// [0, band_high - band_low] spectrally inverted. High-side mixing keeps
    /// the conditioned record stationary: the sin² variance-modulation term
    /// sits at 2 * mix_frequency, beyond the squared low-pass response, so
    /// it integrates out. Mixing at band_low leaves that term at
    /// 2 * band_low inside the filter bandwidth and the record becomes
    /// cyclostationary, which depresses the measured classical min-entropy
    /// below the certified conditional bound.
    pub mix_frequency: f64,
    /// Anti-alias low-pass cutoff, Hz. Defaults to band_high - band_low.
    pub lowpass_cutoff: f64,
    /// Conditioned output rate, samples/s.
    pub output_rate: f64,
    /// Resampling prototype length at the virtual (upsampled) rate;
    /// 0 picks an automatic length from the attenuation target.
    pub filter_taps: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            highpass_cutoff: 48e6,
            band_low: 400e6,
            band_high: 1400e6,
            mix_frequency: 1400e6,
            lowpass_cutoff: 1000e6,
            output_rate: 2e9,
            filter_taps: 0,
        }
    }
}

/// Stopband attenuation target for every designed filter, dB.
const STOPBAND_DB: f64 = 52.0;
/// Root-raised-cosine rolloff of the resampling prototype.
const RRC_ROLLOFF: f64 = 0.12;

impl DspConfig {
    /// A chain that passes samples through untouched (all stages disabled).
    pub fn passthrough(rate: f64) -> Self {
        Self {
            highpass_cutoff: 0.0,
            band_low: 0.0,
            band_high: rate / 2.0,
            mix_frequency: 0.0,
            lowpass_cutoff: rate / 2.0,
            output_rate: rate,
            filter_taps: 0,
        }
    }

    pub fn validate(&self, input_rate: f64) -> Result<()> {
        let nyquist = input_rate / 2.0;
        if self.mix_frequency > 0.0 {
            if !(self.band_low < self.band_high && self.band_high < nyquist) {
                return Err(Error::InvalidConfig(format!(
                    "need band_low < band_high < input Nyquist, got [{}, {}] at rate {}",
                    self.band_low, self.band_high, input_rate
                )));
            }
            if input_rate <= 2.0 * self.band_high {
                return Err(Error::InvalidConfig(
                    "input sample rate must exceed twice band_high".into(),
                ));
            }
        }
        if self.highpass_cutoff > 0.0 && self.mix_frequency > 0.0
            && self.highpass_cutoff >= self.band_low
        {
            return Err(Error::InvalidConfig(
                "highpass_cutoff must lie below band_low".into(),
            ));
        }
        if !(self.lowpass_cutoff > 0.0) {
            return Err(Error::InvalidConfig("lowpass_cutoff must be > 0".into()));
        }
        if self.output_rate < 2.0 * self.lowpass_cutoff {
            return Err(Error::InvalidConfig(format!(
                "output_rate {} would alias the retained band (< 2 * lowpass_cutoff {})",
                self.output_rate, self.lowpass_cutoff
            )));
        }
        if self.output_rate > input_rate {
            return Err(Error::InvalidConfig(
                "output_rate above the input rate is not supported".into(),
            ));
        }
        Ok(())
    }

    /// Resampling ratio output/input as a reduced rational.
    fn resample_ratio(&self, input_rate: f64) -> Result<(usize, usize)> {
        if (self.output_rate - input_rate).abs() < 1e-9 * input_rate {
            return Ok((1, 1));
        }
        let (p, q) = rationalize(self.output_rate / input_rate, 1024);
        let achieved = input_rate * p as f64 / q as f64;
        if (achieved - self.output_rate).abs() > 1e-6 * self.output_rate {
            return Err(Error::InvalidConfig(format!(
                "output_rate {} is not a small rational fraction of the input rate {}",
                self.output_rate, input_rate
            )));
        }
        Ok((p as usize, q as usize))
    }
}

/// Conditioned two-channel samples in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBlock {
    pub channel_q: Vec<f32>,
    pub channel_p: Vec<f32>,
    pub sample_rate: f64,
    /// Quantization step of the conditioned record: ADC LSB scaled by the
    /// chain's passband gain, volts.
    pub effective_resolution: f64,
}

impl ConditionedBlock {
    pub fn len(&self) -> usize {
        self.channel_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_q.is_empty()
    }
}

/// Real sine mixer with an exact rational phase, advanced incrementally.
struct Mixer {
    table: Vec<f32>,
    p: usize,
    q: usize,
    phase: usize,
}

impl Mixer {
    fn new(freq: f64, rate: f64) -> Result<Self> {
        let (p, q) = rationalize(freq / rate, 1 << 20);
        if q > 1 << 16 {
            return Err(Error::InvalidConfig(format!(
                "mix frequency {freq} Hz is not a small rational fraction of the sample rate"
            )));
        }
        let table = (0..q)
            .map(|m| (2.0 * std::f64::consts::PI * m as f64 / q as f64).sin() as f32)
            .collect();
        Ok(Self { table, p: p as usize, q: q as usize, phase: 0 })
    }

    fn process(&mut self, buf: &mut [f32]) {
        let (p, q) = (self.p, self.q);
        let mut m = self.phase;
        for v in buf.iter_mut() {
            *v *= self.table[m];
            m += p;
            if m >= q {
                m -= q;
            }
        }
        self.phase = m;
    }
}

/// High-pass as delay minus a decimated low-pass branch.
struct MultirateHighpass {
    delay: DelayLine,
    dec: Decimator,
    interp: Interpolator,
    /// Delayed input samples not yet matched with a low-pass sample.
    pending_direct: Vec<f32>,
    /// Low-pass branch samples not yet matched with a delayed sample; the
    /// interpolator runs ahead of the direct path by up to one decimation
    /// factor.
    pending_lp: Vec<f32>,
    scratch_dec: Vec<f32>,
    scratch_delay: Vec<f32>,
}

impl MultirateHighpass {
    /// Group delay of the subtraction path in input samples.
    fn delay_samples(&self) -> usize {
        self.delay.delay()
    }

    fn new(cutoff: f64, input_rate: f64) -> Self {
        // Suppress [0, 1.1 * cutoff] and pass flat above ~1.9 * cutoff; both
        // branch filters use the same prototype so the subtraction cancels
        // the passband to twice the per-filter ripple.
        let pass_edge = 1.1 * cutoff;
        let stop_edge = 1.9 * cutoff;
        let factor = ((input_rate / (2.2 * stop_edge)).floor() as usize).max(1);
        let transition = (stop_edge - pass_edge) / input_rate;
        // The branch filters need more attenuation than the resampler: the
        // interpolator's residual images subtract from the delayed path and
        // ripple the high-pass passband at the stopband level, which shows
        // up as conditioned-stream autocorrelation.
        let atten = STOPBAND_DB + 14.0;
        let taps_len = fir::kaiser_tap_count(atten, transition);
        let cutoff_norm = (pass_edge + stop_edge) / 2.0 / input_rate;
        let taps = fir::design_lowpass(taps_len, cutoff_norm, fir::kaiser_beta(atten));
        let gain_d: Vec<f64> = taps.iter().map(|&t| t * factor as f64).collect();
        let delay = taps_len - 1; // (N-1)/2 twice
        Self {
            delay: DelayLine::new(delay),
            dec: Decimator::new(&taps, factor),
            interp: Interpolator::new(&gain_d, factor),
            pending_direct: Vec::new(),
            pending_lp: Vec::new(),
            scratch_dec: Vec::new(),
            scratch_delay: Vec::new(),
        }
    }

    fn push(&mut self, input: &[f32], out: &mut Vec<f32>) {
        self.scratch_delay.clear();
        self.delay.push(input, &mut self.scratch_delay);
        self.pending_direct.extend_from_slice(&self.scratch_delay);

        self.scratch_dec.clear();
        self.dec.push(input, &mut self.scratch_dec);
        self.interp.push(&self.scratch_dec, &mut self.pending_lp);

        let n = self.pending_lp.len().min(self.pending_direct.len());
        for i in 0..n {
            out.push(self.pending_direct[i] - self.pending_lp[i]);
        }
        self.pending_direct.drain(..n);
        self.pending_lp.drain(..n);
        debug_assert!(self.pending_direct.len() < 4096 && self.pending_lp.len() < 4096);
    }
}

/// Per-channel streaming chain.
struct ChannelChain {
    highpass: Option<MultirateHighpass>,
    mixer: Option<Mixer>,
    resampler: Option<Resampler>,
    scratch_hp: Vec<f32>,
    /// Output samples still inside the filter start-up transient; dropped.
    settle_remaining: usize,
}

impl ChannelChain {
    fn new(cfg: &DspConfig, input_rate: f64) -> Result<Self> {
        let highpass = (cfg.highpass_cutoff > 0.0)
            .then(|| MultirateHighpass::new(cfg.highpass_cutoff, input_rate));
        let mixer = if cfg.mix_frequency > 0.0 {
            Some(Mixer::new(cfg.mix_frequency, input_rate)?)
        } else {
            None
        };
        let (up, down) = cfg.resample_ratio(input_rate)?;
        let mut transient_inputs = 0usize;
        if let Some(hp) = &highpass {
            transient_inputs += hp.delay_samples();
        }
        let resampler = if up == 1 && down == 1 && cfg.lowpass_cutoff >= 0.499 * input_rate {
            None
        } else {
            let virtual_rate = input_rate * up as f64;
            let cutoff_norm = (cfg.lowpass_cutoff / virtual_rate).min(0.4999);
            let taps_len = if cfg.filter_taps > 0 {
                cfg.filter_taps | 1
            } else {
                // Twice the Kaiser estimate: the frequency-sampled design
                // needs several grid points across the rolloff for its
                // between-sample response to follow the root-Nyquist curve.
                (2 * fir::kaiser_tap_count(STOPBAND_DB, RRC_ROLLOFF * cutoff_norm * 2.0)) | 1
            };
            let taps = fir::design_root_raised_cosine(taps_len, cutoff_norm, RRC_ROLLOFF);
            transient_inputs += taps_len.div_ceil(up);
            Some(Resampler::new(&taps, up, down))
        };
        // Outputs covering the zero-padded filter start-up are dropped so
        // downstream statistics see a settled stream.
        let settle_remaining =
            (transient_inputs as f64 * up as f64 / down as f64).ceil() as usize + 64;
        Ok(Self { highpass, mixer, resampler, scratch_hp: Vec::new(), settle_remaining })
    }

    fn process(&mut self, mut volts: Vec<f32>, out: &mut Vec<f32>) {
        if let Some(hp) = &mut self.highpass {
            self.scratch_hp.clear();
            hp.push(&volts, &mut self.scratch_hp);
            volts.clear();
            volts.extend_from_slice(&self.scratch_hp);
        }
        if let Some(m) = &mut self.mixer {
            m.process(&mut volts);
        }
        let start = out.len();
        match &mut self.resampler {
            Some(r) => r.push(&volts, out),
            None => out.extend_from_slice(&volts),
        }
        if self.settle_remaining > 0 {
            let produced = out.len() - start;
            let drop = self.settle_remaining.min(produced);
            out.drain(start..start + drop);
            self.settle_remaining -= drop;
        }
    }
}

/// Streaming conditioner. Filter state carries across consecutive blocks, so
/// concatenated processing equals whole-stream processing.
pub struct Conditioner {
    cfg: DspConfig,
    meta: CaptureMeta,
    chains: [ChannelChain; 2],
    effective_resolution: f64,
    next_offset: Option<u64>,
}

impl Conditioner {
    pub fn new(cfg: DspConfig, meta: CaptureMeta) -> Result<Self> {
        cfg.validate(meta.sample_rate)?;
        let chains =
            [ChannelChain::new(&cfg, meta.sample_rate)?, ChannelChain::new(&cfg, meta.sample_rate)?];
        let gain = chain_passband_gain(&cfg, meta.sample_rate)?;
        let lsb = meta.adc_full_scale / (1u64 << meta.adc_bits) as f64;
        Ok(Self {
            cfg,
            meta,
            chains,
            effective_resolution: lsb * gain,
            next_offset: None,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    pub fn effective_resolution(&self) -> f64 {
        self.effective_resolution
    }

    pub fn output_rate(&self) -> f64 {
        self.cfg.output_rate
    }

    pub fn push_block(&mut self, block: &SampleBlock) -> Result<ConditionedBlock> {
        if block.sample_rate != self.meta.sample_rate
            || block.adc_bits != self.meta.adc_bits
            || block.adc_full_scale != self.meta.adc_full_scale
        {
            return Err(Error::InvalidParameter(
                "block rate/bit-depth/full-scale does not match the conditioner's stream".into(),
            ));
        }
        if let Some(expected) = self.next_offset {
            if block.stream_offset != expected {
                return Err(Error::InvalidParameter(format!(
                    "non-contiguous stream: expected offset {expected}, got {}",
                    block.stream_offset
                )));
            }
        }
        self.next_offset = Some(block.stream_offset + block.len() as u64);

        let lsb = block.lsb_volts() as f32;
        let mut out_q = Vec::new();
        let mut out_p = Vec::new();
        for (ch, (codes, out)) in
            [(&block.channel_q, &mut out_q), (&block.channel_p, &mut out_p)]
                .into_iter()
                .enumerate()
        {
            let volts: Vec<f32> = codes.iter().map(|&c| c as f32 * lsb).collect();
            self.chains[ch].process(volts, out);
        }
        debug_assert_eq!(out_q.len(), out_p.len());
        Ok(ConditionedBlock {
            channel_q: out_q,
            channel_p: out_p,
            sample_rate: self.cfg.output_rate,
            effective_resolution: self.effective_resolution,
        })
    }
}

/// Condition a whole stream of blocks at once.
pub fn condition_blocks(
    cfg: &DspConfig,
    blocks: &[SampleBlock],
    meta: CaptureMeta,
) -> Result<Vec<ConditionedBlock>> {
    let mut cond = Conditioner::new(cfg.clone(), meta)?;
    blocks.iter().map(|b| cond.push_block(b)).collect()
}

/// Amplitude gain of the chain for an in-band tone, measured by probing a
/// fresh chain with a unit tone at the center of the retained window.
pub fn chain_passband_gain(cfg: &DspConfig, input_rate: f64) -> Result<f64> {
    let mut chain = ChannelChain::new(cfg, input_rate)?;
    let f_probe = if cfg.mix_frequency > 0.0 {
        (cfg.band_low + cfg.band_high) / 2.0
    } else {
        // No translation: probe the middle of the retained low band.
        0.25 * cfg.lowpass_cutoff.min(cfg.output_rate / 2.0)
    };
    let (p, q) = rationalize(f_probe / input_rate, 1 << 20);
    // Long enough to flush start-up transients and average many periods.
    let total: usize = 1 << 21;
    let chunk: usize = 1 << 16;
    let mut out = Vec::new();
    let mut k = 0u64;
    let mut buf = vec![0.0f32; chunk];
    while (k as usize) < total {
        for v in buf.iter_mut() {
            let m = ((k % q) as u128 * p as u128 % q as u128) as u64;
            *v = (2.0 * std::f64::consts::PI * m as f64 / q as f64).sin() as f32;
            k += 1;
        }
        chain.process(buf.clone(), &mut out);
    }
    // Drop the leading transient, keep an integer-ish number of periods.
    let settled = &out[out.len() / 4..];
    let power: f64 = settled.iter().map(|&v| v as f64 * v as f64).sum::<f64>()
        / settled.len() as f64;
    Ok((2.0 * power).sqrt())
}
