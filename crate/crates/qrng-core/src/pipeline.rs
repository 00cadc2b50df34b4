//! End-to-end orchestration: configuration, calibration, bit generation and
//! entropy sweeps. The CLI and the Python bindings are thin shells over
//! these functions.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::bits::BitBuffer;
use crate::calibration::{
    effective_resolution, fit, run_sweep, CalibrationResult, SweepPoint, SweepSource,
};
use crate::dsp::welch::{welch_psd_blocks, SpectrumReport};
use crate::dsp::{Conditioner, ConditionedBlock, DspConfig};
use crate::entropy::{entropy_report, EntropyReport};
use crate::error::{Error, Result};
use crate::extractor::{
    size_extractor, ExtractorParams, ExtractorSidecar, RandomBitstream, StreamExtractor,
};
use crate::hash::fnv1a_hex;
use crate::signal::qraw::read_capture;
use crate::signal::{SourceParams, SyntheticSource};

/// Raw samples per generation/ingestion chunk.
const PIPELINE_CHUNK: usize = 1 << 21;

/// Where raw samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    /// Parametric synthetic source.
    Synthetic { params: SourceParams },
    /// One recorded capture (generation/analysis at its header power).
    Capture { path: PathBuf },
    /// One capture per LO power for calibration sweeps.
    CaptureSweep { paths: Vec<PathBuf> },
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self::Synthetic { params: SourceParams::default() }
    }
}

/// LO power sweep configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub powers_watts: Vec<f64>,
    /// Conditioned samples per channel on which each point's variance is
    /// computed.
    pub samples_per_point: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            powers_watts: vec![0.0, 4e-3, 8e-3, 12e-3, 16e-3, 20e-3],
            samples_per_point: 1_000_000,
        }
    }
}

/// Extractor sizing overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub epsilon: f64,
    pub input_bits: usize,
    /// Explicit output size; 0 defers to the leftover-hashing-lemma sizing.
    pub output_bits_override: usize,
    /// Extractor seed value; 0 derives it from the pipeline seed.
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { epsilon: 1e-17, input_bits: 17600, output_bits_override: 0, seed: 0 }
    }
}

/// Full pipeline configuration (TOML on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub dsp: DspConfig,
    pub sweep: SweepConfig,
    pub extractor: ExtractorConfig,
    pub significance: f64,
    pub calibration_max_age_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            source: SourceConfig::default(),
            dsp: DspConfig::default(),
            sweep: SweepConfig::default(),
            extractor: ExtractorConfig::default(),
            significance: 0.01,
            calibration_max_age_secs: 86_400,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidConfig("significance must lie in (0, 1)".into()));
        }
        match &self.source {
            SourceConfig::Synthetic { params } => {
                params.validate()?;
                self.dsp.validate(params.adc_rate)?;
            }
            SourceConfig::Capture { path } => {
                if !path.exists() {
                    return Err(Error::InvalidConfig(format!(
                        "capture path {} does not exist",
                        path.display()
                    )));
                }
            }
            SourceConfig::CaptureSweep { paths } => {
                for path in paths {
                    if !path.exists() {
                        return Err(Error::InvalidConfig(format!(
                            "capture path {} does not exist",
                            path.display()
                        )));
                    }
                }
            }
        }
        if self.sweep.samples_per_point == 0 {
            return Err(Error::InvalidConfig("samples_per_point must be > 0".into()));
        }
        Ok(())
    }

    /// Stable digest of the whole configuration for artifact provenance.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        fnv1a_hex(&canonical)
    }

    /// Synthetic params with the pipeline seed applied.
    fn seeded_params(&self) -> Result<SourceParams> {
        match &self.source {
            SourceConfig::Synthetic { params } => Ok(params.with_seed(self.seed)),
            _ => Err(Error::InvalidConfig(
                "this operation needs a synthetic source".into(),
            )),
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Calibration outputs: fitted conversion plus the spectral diagnostics
/// behind the clearance figure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationArtifacts {
    pub calibration: CalibrationResult,
    pub points: Vec<SweepPoint>,
    pub spectrum: SpectrumReport,
    /// Mean clearance over the retained band at the maximum sweep power.
    pub band_clearance_db: f64,
}

/// Run the LO sweep, fit it, and measure the LO-on/LO-off spectra.
pub fn run_calibration(cfg: &PipelineConfig) -> Result<CalibrationArtifacts> {
    cfg.validate()?;
    let (source, meta) = match &cfg.source {
        SourceConfig::Synthetic { .. } => {
            let params = cfg.seeded_params()?;
            let meta = params.capture_meta();
            (SweepSource::Synthetic(params), meta)
        }
        SourceConfig::CaptureSweep { paths } => {
            let meta = read_capture(&paths[0], 1024)?.meta();
            (SweepSource::Captures(paths.clone()), meta)
        }
        SourceConfig::Capture { .. } => {
            return Err(Error::InvalidConfig(
                "calibration needs a synthetic source or a capture sweep".into(),
            ));
        }
    };
    let points = run_sweep(&source, &cfg.dsp, &cfg.sweep.powers_watts, cfg.sweep.samples_per_point)?;
    let eff_res = effective_resolution(&cfg.dsp, &meta)?;
    let reference = points.iter().map(|p| p.lo_power).fold(0.0, f64::max);
    let mut calibration = fit(&points, eff_res, reference)?;
    calibration.timestamp_unix = unix_now();
    calibration.config_hash = cfg.config_hash();

    let spectrum = measure_spectrum(&source, reference)?;
    let band_clearance_db = spectrum.clearance_in_band(cfg.dsp.band_low, cfg.dsp.band_high);
    Ok(CalibrationArtifacts { calibration, points, spectrum, band_clearance_db })
}

/// LO-on (reference power) vs LO-off PSDs of the raw stream.
fn measure_spectrum(
    source: &SweepSource,
    reference_power: f64,
) -> Result<SpectrumReport> {
    let segment = 8192;
    let samples = 1 << 21;
    let (on_blocks, off_blocks) = match source {
        SweepSource::Synthetic(params) => {
            let on = SyntheticSource::new(params.with_lo_power(reference_power))?;
            let off = SyntheticSource::new(params.with_lo_power(0.0))?;
            (vec![on.generate_block(0, samples)?], vec![off.generate_block(0, samples)?])
        }
        SweepSource::Captures(paths) => {
            // Highest- and lowest-power captures stand in for LO on/off.
            let mut metas: Vec<(f64, &PathBuf)> = Vec::new();
            for p in paths {
                metas.push((read_capture(p, 1024)?.meta().lo_power, p));
            }
            metas.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let read_blocks = |path: &PathBuf| -> Result<Vec<_>> {
                read_capture(path, samples)?.take(1).collect()
            };
            (read_blocks(metas.last().unwrap().1)?, read_blocks(metas[0].1)?)
        }
    };
    let on = welch_psd_blocks(&on_blocks, segment, segment / 2)?;
    let off = welch_psd_blocks(&off_blocks, segment, segment / 2)?;
    // Drop the DC bin: the clearance ratio needs strictly positive PSDs and
    // DC carries no information here.
    SpectrumReport::new(
        on.frequencies[1..].to_vec(),
        on.values[1..].to_vec(),
        off.values[1..].to_vec(),
    )
}

/// Generated bits plus everything needed to audit them.
#[derive(Debug)]
pub struct GenerateArtifacts {
    pub bitstream: RandomBitstream,
    pub sidecar: ExtractorSidecar,
    pub entropy: EntropyReport,
    pub params: ExtractorParams,
}

/// Certified extractor parameters for the configured stream.
pub fn extractor_params_for(
    cfg: &PipelineConfig,
    cal: &CalibrationResult,
    lo_power: f64,
    adc_bits: u8,
) -> Result<ExtractorParams> {
    let (h_point, h_sigma) = crate::entropy::h_min_conditional_certified(cal, lo_power)?;
    let h_certified = h_point - 3.0 * h_sigma;
    if h_certified <= 0.0 {
        return Err(Error::SecurityGate(format!(
            "certified min-entropy is {h_certified:.4} bits per pair"
        )));
    }
    let bits_per_pair = 2 * adc_bits as u32;
    let params = size_extractor(
        h_certified,
        bits_per_pair,
        cfg.extractor.epsilon,
        cfg.extractor.input_bits,
    )?;
    let params = if cfg.extractor.output_bits_override > 0 {
        params.with_dimensions(cfg.extractor.input_bits, cfg.extractor.output_bits_override)?
    } else {
        params
    };
    let seed_value = if cfg.extractor.seed != 0 { cfg.extractor.seed } else { cfg.seed };
    params.seed_from_value(seed_value)
}

/// Check calibration freshness against the configured staleness bound.
pub fn check_calibration_fresh(cfg: &PipelineConfig, cal: &CalibrationResult) -> Result<()> {
    let age = unix_now().saturating_sub(cal.timestamp_unix);
    if age > cfg.calibration_max_age_secs {
        return Err(Error::SecurityGate(format!(
            "calibration is {age} s old, older than the {} s bound",
            cfg.calibration_max_age_secs
        )));
    }
    Ok(())
}

/// Run the full generation pipeline until `byte_budget` bytes of extracted
/// output are available; output is truncated to exactly that size.
pub fn generate_bits(
    cfg: &PipelineConfig,
    cal: &CalibrationResult,
    byte_budget: usize,
) -> Result<GenerateArtifacts> {
    cfg.validate()?;
    cal.validate()?;
    check_calibration_fresh(cfg, cal)?;
    if byte_budget == 0 {
        return Err(Error::InvalidParameter("byte budget must be > 0".into()));
    }

    enum Raw {
        Synthetic(SyntheticSource),
        Capture(PathBuf),
    }
    let (raw, meta, lo_power) = match &cfg.source {
        SourceConfig::Synthetic { .. } => {
            let params = cfg.seeded_params()?;
            let meta = params.capture_meta();
            let power = params.lo_power;
            (Raw::Synthetic(SyntheticSource::new(params)?), meta, power)
        }
        SourceConfig::Capture { path } => {
            let meta = read_capture(path, 1024)?.meta();
            (Raw::Capture(path.clone()), meta, meta.lo_power)
        }
        SourceConfig::CaptureSweep { .. } => {
            return Err(Error::InvalidConfig(
                "generation needs a single capture or a synthetic source".into(),
            ));
        }
    };

    let params = extractor_params_for(cfg, cal, lo_power, meta.adc_bits)?;
    let mut conditioner = Conditioner::new(cfg.dsp.clone(), meta)?;
    let mut extractor = StreamExtractor::new(params.clone(), meta.adc_bits)?;

    // Conditioned blocks retained for the entropy report (>= 1e6 pairs).
    let mut report_blocks: Vec<ConditionedBlock> = Vec::new();
    let mut report_pairs = 0usize;

    let target_bits = byte_budget * 8;
    let mut offset = 0u64;
    let mut capture_reader = match &raw {
        Raw::Capture(path) => Some(read_capture(path, PIPELINE_CHUNK)?),
        Raw::Synthetic(_) => None,
    };
    // The entropy report needs >= 1e6 pairs even when the byte budget is
    // tiny, so the stream keeps flowing until both quotas are met.
    const REPORT_PAIRS: usize = 1_050_000;
    while extractor.output_len() < target_bits || report_pairs < REPORT_PAIRS {
        let block = match &raw {
            Raw::Synthetic(src) => {
                let b = src.generate_block(offset, PIPELINE_CHUNK)?;
                offset += PIPELINE_CHUNK as u64;
                b
            }
            Raw::Capture(_) => match capture_reader.as_mut().unwrap().next() {
                Some(b) => b?,
                None => {
                    return Err(Error::InsufficientData(format!(
                        "capture exhausted with {} of {} output bits extracted",
                        extractor.output_len(),
                        target_bits
                    )));
                }
            },
        };
        let conditioned = conditioner.push_block(&block)?;
        if report_pairs < REPORT_PAIRS {
            report_pairs += conditioned.len();
            report_blocks.push(conditioned.clone());
        }
        if extractor.output_len() < target_bits {
            extractor.push_block(&conditioned)?;
        }
    }

    let entropy = entropy_report(
        &report_blocks,
        cal,
        lo_power,
        conditioner.output_rate(),
        meta.adc_bits,
    )?;
    let mut stream = extractor.finish();
    stream.bits.truncate(target_bits);
    let sidecar = ExtractorSidecar::new(&params, &stream);
    Ok(GenerateArtifacts { bitstream: stream, sidecar, entropy, params })
}

/// Entropy reports across the sweep grid (the data behind the
/// entropy/purity-vs-power figures).
pub fn entropy_sweep(cfg: &PipelineConfig, cal: &CalibrationResult) -> Result<Vec<EntropyReport>> {
    cfg.validate()?;
    let params = cfg.seeded_params()?;
    let mut reports = Vec::new();
    for &power in &cfg.sweep.powers_watts {
        if power <= 0.0 {
            continue;
        }
        let mut s = params.seed ^ power.to_bits().rotate_left(17);
        s = s.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        let src = SyntheticSource::new(params.with_lo_power(power).with_seed(s))?;
        let meta = src.params().capture_meta();
        let mut conditioner = Conditioner::new(cfg.dsp.clone(), meta)?;
        let mut blocks = Vec::new();
        let mut pairs = 0usize;
        let mut offset = 0u64;
        let needed = cfg.sweep.samples_per_point.max(1_000_000);
        while pairs < needed {
            let raw = src.generate_block(offset, PIPELINE_CHUNK)?;
            offset += PIPELINE_CHUNK as u64;
            let cond = conditioner.push_block(&raw)?;
            pairs += cond.len();
            blocks.push(cond);
        }
        reports.push(entropy_report(&blocks, cal, power, conditioner.output_rate(), meta.adc_bits)?);
    }
    Ok(reports)
}

/// Emit a QRAW capture from the synthetic source.
pub fn simulate_capture(
    cfg: &PipelineConfig,
    lo_power: Option<f64>,
    blocks: usize,
    block_len: usize,
    path: &std::path::Path,
) -> Result<u64> {
    let mut params = cfg.seeded_params()?;
    if let Some(p) = lo_power {
        params.lo_power = p;
    }
    let src = SyntheticSource::new(params)?;
    let meta = src.params().capture_meta();
    let file = std::fs::File::create(path)?;
    let mut writer = crate::signal::qraw::CaptureWriter::new(std::io::BufWriter::new(file), meta)?;
    for i in 0..blocks {
        let block = src.generate_block((i * block_len) as u64, block_len)?;
        writer.write_block(&block)?;
    }
    writer.finish()
}

/// Write extracted bits as packed bytes.
pub fn write_bits_file(path: &std::path::Path, bits: &BitBuffer) -> Result<u64> {
    let bytes = bits.to_bytes();
    std::fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.sweep.samples_per_point = 200_000;
        cfg
    }

    #[test]
    fn config_roundtrips_and_hashes_stably() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.config_hash(), back.config_hash());
        let mut other = PipelineConfig::default();
        other.seed = 999;
        assert_ne!(cfg.config_hash(), other.config_hash());
    }

    #[test]
    fn calibration_pipeline_runs_on_synthetic_source() {
        let cfg = desk_config();
        let art = run_calibration(&cfg).unwrap();
        assert!(art.calibration.r_squared_q > 0.999);
        assert!(art.calibration.slope_q > 0.0);
        assert!(art.band_clearance_db > 8.0, "clearance {}", art.band_clearance_db);
        // delta at the reference power must certify entropy.
        assert!(art.calibration.certifiable(art.calibration.reference_lo_power));
    }

    #[test]
    fn generate_respects_byte_budget_and_gates() {
        let cfg = desk_config();
        let art = run_calibration(&cfg).unwrap();
        let gen = generate_bits(&cfg, &art.calibration, 64 * 1024).unwrap();
        assert_eq!(gen.bitstream.bits.len(), 64 * 1024 * 8);
        assert!(gen.entropy.h_min_conditional > 0.0);
        assert!(gen.sidecar.lhl_satisfied);

        // Stale calibration trips the security gate.
        let mut stale = art.calibration.clone();
        stale.timestamp_unix = 1;
        assert!(matches!(
            generate_bits(&cfg, &stale, 1024),
            Err(Error::SecurityGate(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = desk_config();
        let art = run_calibration(&cfg).unwrap();
        let a = generate_bits(&cfg, &art.calibration, 32 * 1024).unwrap();
        let b = generate_bits(&cfg, &art.calibration, 32 * 1024).unwrap();
        assert_eq!(a.bitstream.bits, b.bitstream.bits);
        assert_eq!(a.sidecar.params_hash, b.sidecar.params_hash);
    }
}
