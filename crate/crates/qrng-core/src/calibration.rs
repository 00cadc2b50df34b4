//! LO power sweep, variance-vs-power fit and vacuum-unit conversion.
//!
//! Variances are measured on the conditioned record. One vacuum unit of
//! variance (1/2) corresponds to `slope * P` volts² at LO power P, so a
//! conditioned amplitude x converts as x / sqrt(2 * slope * P) and the
//! phase-space resolution per channel is
//! `delta_ch(P) = effective_resolution / sqrt(2 * slope_ch * P)`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dsp::{chain_passband_gain, Conditioner, DspConfig};
use crate::error::{Error, Result};
use crate::signal::qraw::{read_capture, CaptureMeta};
use crate::signal::{SourceParams, SyntheticSource};
use crate::stats::Moments;

/// Raw samples per generation chunk while sweeping.
const SWEEP_CHUNK: usize = 1 << 21;

/// Saturation gate: calibration is invalid when at least this fraction of
/// raw codes sits on a rail.
pub const SATURATION_LIMIT: f64 = 1e-3;

/// Linearity gate on the per-channel fit.
pub const R_SQUARED_GATE: f64 = 0.99;

/// One LO power point of the calibration sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lo_power: f64,
    pub lo_power_uncertainty: f64,
    pub variance_q: f64,
    pub variance_p: f64,
    /// Standard errors of the variances, sigma^2 * sqrt(2/(N-1)).
    pub se_q: f64,
    pub se_p: f64,
    pub sample_count: u64,
}

/// Per-channel slope/intercept of variance vs LO power plus the conversion
/// factors derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub slope_q: f64,
    pub slope_q_se: f64,
    pub slope_p: f64,
    pub slope_p_se: f64,
    pub intercept_q: f64,
    pub intercept_q_se: f64,
    pub intercept_p: f64,
    pub intercept_p_se: f64,
    pub r_squared_q: f64,
    pub r_squared_p: f64,
    /// Quantization step of the conditioned record, volts.
    pub effective_resolution: f64,
    pub reference_lo_power: f64,
    pub delta_q_at_reference: f64,
    pub delta_p_at_reference: f64,
    #[serde(default)]
    pub timestamp_unix: u64,
    #[serde(default)]
    pub config_hash: String,
}

impl CalibrationResult {
    /// Phase-space resolution of the q channel at LO power P, vacuum units.
    pub fn delta_q(&self, lo_power: f64) -> f64 {
        self.effective_resolution / (2.0 * self.slope_q * lo_power).sqrt()
    }

    pub fn delta_p(&self, lo_power: f64) -> f64 {
        self.effective_resolution / (2.0 * self.slope_p * lo_power).sqrt()
    }

    /// Convert conditioned volts² to vacuum units at LO power P.
    pub fn variance_to_vu(&self, variance_volts2: f64, slope: f64, lo_power: f64) -> f64 {
        variance_volts2 / (2.0 * slope * lo_power)
    }

    /// delta_q * delta_p < pi is required for any certifiable entropy.
    pub fn certifiable(&self, lo_power: f64) -> bool {
        self.delta_q(lo_power) * self.delta_p(lo_power) < std::f64::consts::PI
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_q > 0.0 && self.slope_p > 0.0) {
            return Err(Error::Calibration("non-positive fitted slope".into()));
        }
        if self.r_squared_q < R_SQUARED_GATE || self.r_squared_p < R_SQUARED_GATE {
            return Err(Error::Calibration(format!(
                "poor linearity: R² = ({:.6}, {:.6}) below the {} gate",
                self.r_squared_q, self.r_squared_p, R_SQUARED_GATE
            )));
        }
        Ok(())
    }
}

/// What the sweep draws its raw samples from.
pub enum SweepSource {
    Synthetic(SourceParams),
    /// QRAW captures, one per LO power (power read from each header).
    Captures(Vec<PathBuf>),
}

/// Run the LO power sweep and measure conditioned variances.
///
/// `samples_per_point` is the number of conditioned samples per channel on
/// which each point's variance is computed. For a synthetic source the grid
/// lists the LO powers to visit; for captures the powers come from the file
/// headers and the grid is ignored.
pub fn run_sweep(
    source: &SweepSource,
    dsp: &DspConfig,
    power_grid: &[f64],
    samples_per_point: usize,
) -> Result<Vec<SweepPoint>> {
    match source {
        SweepSource::Synthetic(params) => {
            let mut distinct: Vec<f64> = power_grid.to_vec();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            if distinct.len() < 3 || !distinct.iter().any(|&p| p == 0.0) {
                return Err(Error::InvalidParameter(
                    "insufficient distinct powers: need >= 3 including 0".into(),
                ));
            }
            distinct
                .iter()
                .map(|&p| {
                    // Decorrelate points: each power gets its own sub-seed.
                    let mut s = params.seed ^ p.to_bits().rotate_left(17);
                    s = s.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
                    let point_params = params.with_lo_power(p).with_seed(s);
                    let src = SyntheticSource::new(point_params)?;
                    sweep_point_synthetic(&src, dsp, samples_per_point)
                })
                .collect()
        }
        SweepSource::Captures(paths) => {
            if paths.len() < 3 {
                return Err(Error::InvalidParameter(
                    "insufficient distinct powers: need >= 3 captures".into(),
                ));
            }
            let mut points: Vec<SweepPoint> = paths
                .iter()
                .map(|p| sweep_point_capture(p, dsp, samples_per_point))
                .collect::<Result<_>>()?;
            points.sort_by(|a, b| a.lo_power.partial_cmp(&b.lo_power).unwrap());
            Ok(points)
        }
    }
}

fn sweep_point_synthetic(
    src: &SyntheticSource,
    dsp: &DspConfig,
    samples_per_point: usize,
) -> Result<SweepPoint> {
    let meta = src.params().capture_meta();
    let mut cond = Conditioner::new(dsp.clone(), meta)?;
    let mut mq = Moments::new();
    let mut mp = Moments::new();
    let mut rail = [0u64; 2];
    let mut raw_total = 0u64;
    let mut offset = 0u64;
    while (mq.count() as usize) < samples_per_point {
        let block = src.generate_block(offset, SWEEP_CHUNK)?;
        offset += SWEEP_CHUNK as u64;
        let (sq, sp) = block.saturation_fraction();
        rail[0] += (sq * block.len() as f64) as u64;
        rail[1] += (sp * block.len() as f64) as u64;
        raw_total += block.len() as u64;
        let out = cond.push_block(&block)?;
        accumulate(&mut mq, &out.channel_q, samples_per_point);
        accumulate(&mut mp, &out.channel_p, samples_per_point);
    }
    let rail_frac = rail.iter().copied().max().unwrap() as f64 / raw_total as f64;
    if rail_frac >= SATURATION_LIMIT {
        return Err(Error::Calibration(format!(
            "saturation at P = {} W: {:.3}% of codes on the rails",
            src.params().lo_power,
            rail_frac * 100.0
        )));
    }
    Ok(point_from_moments(src.params().lo_power, 0.0, &mq, &mp))
}

fn sweep_point_capture(
    path: &PathBuf,
    dsp: &DspConfig,
    samples_per_point: usize,
) -> Result<SweepPoint> {
    let reader = read_capture(path, SWEEP_CHUNK)?;
    let meta = reader.meta();
    let mut cond = Conditioner::new(dsp.clone(), meta)?;
    let mut mq = Moments::new();
    let mut mp = Moments::new();
    let mut rail = 0u64;
    let mut raw_total = 0u64;
    for block in reader {
        let block = block?;
        let (sq, sp) = block.saturation_fraction();
        rail += (sq.max(sp) * block.len() as f64) as u64;
        raw_total += block.len() as u64;
        let out = cond.push_block(&block)?;
        accumulate(&mut mq, &out.channel_q, samples_per_point);
        accumulate(&mut mp, &out.channel_p, samples_per_point);
        if mq.count() as usize >= samples_per_point {
            break;
        }
    }
    if mq.count() < 2 {
        return Err(Error::InsufficientData(format!(
            "capture {} yields too few conditioned samples",
            path.display()
        )));
    }
    let rail_frac = rail as f64 / raw_total.max(1) as f64;
    if rail_frac >= SATURATION_LIMIT {
        return Err(Error::Calibration(format!(
            "saturation in {}: {:.3}% of codes on the rails",
            path.display(),
            rail_frac * 100.0
        )));
    }
    Ok(point_from_moments(meta.lo_power, 0.0, &mq, &mp))
}

fn accumulate(m: &mut Moments, samples: &[f32], cap: usize) {
    let take = (cap - m.count() as usize).min(samples.len());
    m.push_slice_f32(&samples[..take]);
}

fn point_from_moments(lo_power: f64, lo_unc: f64, mq: &Moments, mp: &Moments) -> SweepPoint {
    SweepPoint {
        lo_power,
        lo_power_uncertainty: lo_unc,
        variance_q: mq.variance(),
        variance_p: mp.variance(),
        se_q: mq.variance_standard_error(),
        se_p: mp.variance_standard_error(),
        sample_count: mq.count(),
    }
}

struct WlsFit {
    slope: f64,
    slope_se: f64,
    intercept: f64,
    intercept_se: f64,
    r_squared: f64,
}

/// Weighted least squares of y on x with weights 1/se²; falls back to equal
/// weights if any se is non-positive (noise-free synthetic points).
fn wls(x: &[f64], y: &[f64], se: &[f64]) -> WlsFit {
    let w: Vec<f64> = if se.iter().any(|&s| !(s > 0.0)) {
        vec![1.0; x.len()]
    } else {
        se.iter().map(|&s| 1.0 / (s * s)).collect()
    };
    let s: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(&w, &x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(&w, &y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(&w, &x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(&w, (&x, &y))| w * x * y).sum();
    let delta = s * sxx - sx * sx;
    let slope = (s * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let slope_se = (s / delta).sqrt();
    let intercept_se = (sxx / delta).sqrt();

    let y_mean = sy / s;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..x.len() {
        let fit = intercept + slope * x[i];
        ss_res += w[i] * (y[i] - fit) * (y[i] - fit);
        ss_tot += w[i] * (y[i] - y_mean) * (y[i] - y_mean);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    WlsFit { slope, slope_se, intercept, intercept_se, r_squared }
}

/// Fit the sweep and derive the vacuum-unit conversion.
///
/// `reference_lo_power` picks the power at which `delta_*_at_reference` are
/// reported (normally the maximum of the sweep).
pub fn fit(
    points: &[SweepPoint],
    effective_resolution: f64,
    reference_lo_power: f64,
) -> Result<CalibrationResult> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter("fit needs at least 3 sweep points".into()));
    }
    let mut nonzero: Vec<f64> = points.iter().map(|p| p.lo_power).filter(|&p| p > 0.0).collect();
    nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nonzero.dedup();
    if nonzero.len() < 2 {
        return Err(Error::InvalidParameter(
            "fit needs at least 2 distinct nonzero powers".into(),
        ));
    }
    let x: Vec<f64> = points.iter().map(|p| p.lo_power).collect();
    let fq = wls(
        &x,
        &points.iter().map(|p| p.variance_q).collect::<Vec<_>>(),
        &points.iter().map(|p| p.se_q).collect::<Vec<_>>(),
    );
    let fp = wls(
        &x,
        &points.iter().map(|p| p.variance_p).collect::<Vec<_>>(),
        &points.iter().map(|p| p.se_p).collect::<Vec<_>>(),
    );
    let result = CalibrationResult {
        slope_q: fq.slope,
        slope_q_se: fq.slope_se,
        slope_p: fp.slope,
        slope_p_se: fp.slope_se,
        intercept_q: fq.intercept,
        intercept_q_se: fq.intercept_se,
        intercept_p: fp.intercept,
        intercept_p_se: fp.intercept_se,
        r_squared_q: fq.r_squared,
        r_squared_p: fp.r_squared,
        effective_resolution,
        reference_lo_power,
        delta_q_at_reference: 0.0,
        delta_p_at_reference: 0.0,
        timestamp_unix: 0,
        config_hash: String::new(),
    };
    result.validate()?;
    Ok(CalibrationResult {
        delta_q_at_reference: result.delta_q(reference_lo_power),
        delta_p_at_reference: result.delta_p(reference_lo_power),
        ..result
    })
}

/// Quantization step of the conditioned record: the ADC LSB scaled by the
/// DSP chain's passband gain.
pub fn effective_resolution(cfg: &DspConfig, meta: &CaptureMeta) -> Result<f64> {
    let lsb = meta.adc_full_scale / (1u64 << meta.adc_bits) as f64;
    Ok(lsb * chain_passband_gain(cfg, meta.sample_rate)?)
}
