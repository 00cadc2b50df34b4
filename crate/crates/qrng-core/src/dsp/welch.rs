//! Welch-averaged periodogram and the LO-on/LO-off clearance report.

use std::io::Write;

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampleBlock;

/// One-sided power spectral density estimate.
#[derive(Debug, Clone)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    /// V²/Hz per bin.
    pub values: Vec<f64>,
    pub segment_count: usize,
}

impl Psd {
    /// Integral of the PSD over frequency (should equal the signal variance).
    pub fn integrated_power(&self) -> f64 {
        if self.frequencies.len() < 2 {
            return 0.0;
        }
        let df = self.frequencies[1] - self.frequencies[0];
        self.values.iter().sum::<f64>() * df
    }
}

/// Welch PSD with a Hann window. `overlap` is in samples (< segment_len);
/// the normalization makes the integral of the PSD equal the signal variance.
pub fn welch_psd(
    samples: &[f32],
    sample_rate: f64,
    segment_len: usize,
    overlap: usize,
) -> Result<Psd> {
    if segment_len < 4 {
        return Err(Error::InvalidParameter("segment_len must be >= 4".into()));
    }
    if overlap >= segment_len {
        return Err(Error::InvalidParameter("overlap must be < segment_len".into()));
    }
    if samples.len() < segment_len {
        return Err(Error::InsufficientData(format!(
            "need at least one full segment of {segment_len} samples, got {}",
            samples.len()
        )));
    }
    let hop = segment_len - overlap;
    let window: Vec<f64> = (0..segment_len)
        .map(|n| {
            let x = std::f64::consts::PI * n as f64 / segment_len as f64;
            let s = x.sin();
            s * s // periodic Hann
        })
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(segment_len);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0f64; bins];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + segment_len <= samples.len() {
        for (i, v) in input.iter_mut().enumerate() {
            *v = samples[start + i] as f64 * window[i];
        }
        fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
            .map_err(|e| Error::InvalidParameter(format!("fft: {e}")))?;
        for (k, s) in spectrum.iter().enumerate() {
            acc[k] += s.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let norm = 1.0 / (sample_rate * window_power * segments as f64);
    let values: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            // One-sided: double everything except DC and Nyquist.
            let one_sided = if k == 0 || (segment_len % 2 == 0 && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            a * norm * one_sided
        })
        .collect();
    let frequencies = (0..bins).map(|k| k as f64 * sample_rate / segment_len as f64).collect();
    Ok(Psd { frequencies, values, segment_count: segments })
}

/// PSD of a raw capture stream, codes converted to volts.
pub fn welch_psd_blocks(blocks: &[SampleBlock], segment_len: usize, overlap: usize) -> Result<Psd> {
    if blocks.is_empty() {
        return Err(Error::InsufficientData("no blocks".into()));
    }
    let rate = blocks[0].sample_rate;
    let lsb = blocks[0].lsb_volts() as f32;
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    let mut volts = Vec::with_capacity(total);
    for b in blocks {
        volts.extend(b.channel_q.iter().map(|&c| c as f32 * lsb));
    }
    welch_psd(&volts, rate, segment_len, overlap)
}

/// Elementwise 10*log10(psd_on / psd_off).
pub fn clearance_db(psd_on: &[f64], psd_off: &[f64]) -> Result<Vec<f64>> {
    if psd_on.len() != psd_off.len() {
        return Err(Error::InvalidParameter("PSD arrays differ in length".into()));
    }
    psd_on
        .iter()
        .zip(psd_off)
        .map(|(&on, &off)| {
            if on <= 0.0 || off <= 0.0 {
                Err(Error::InvalidParameter(
                    "clearance needs strictly positive PSD bins".into(),
                ))
            } else {
                Ok(10.0 * (on / off).log10())
            }
        })
        .collect()
}

/// PSDs with the LO at power P and with the LO off, plus the derived
/// per-bin clearance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub frequencies_hz: Vec<f64>,
    pub psd_on: Vec<f64>,
    pub psd_off: Vec<f64>,
    pub clearance_db: Vec<f64>,
}

impl SpectrumReport {
    pub fn new(frequencies_hz: Vec<f64>, psd_on: Vec<f64>, psd_off: Vec<f64>) -> Result<Self> {
        if frequencies_hz.len() != psd_on.len() || psd_on.len() != psd_off.len() {
            return Err(Error::InvalidParameter("spectrum arrays differ in length".into()));
        }
        if !frequencies_hz.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("frequencies must be strictly increasing".into()));
        }
        let clearance = clearance_db(&psd_on, &psd_off)?;
        Ok(Self { frequencies_hz, psd_on, psd_off, clearance_db: clearance })
    }

    /// Mean clearance over [f_lo, f_hi].
    pub fn clearance_in_band(&self, f_lo: f64, f_hi: f64) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &f) in self.frequencies_hz.iter().enumerate() {
            if f >= f_lo && f <= f_hi {
                sum += self.clearance_db[i];
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }

    /// Minimum clearance over [f_lo, f_hi].
    pub fn min_clearance_in_band(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.frequencies_hz
            .iter()
            .zip(&self.clearance_db)
            .filter(|(&f, _)| f >= f_lo && f <= f_hi)
            .map(|(_, &c)| c)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frequency_hz,psd_on,psd_off,clearance_db")?;
        for i in 0..self.frequencies_hz.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.frequencies_hz[i], self.psd_on[i], self.psd_off[i], self.clearance_db[i]
            )?;
        }
        Ok(())
    }
}
