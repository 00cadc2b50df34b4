//! Python bindings for the QRNG post-detection pipeline.
//!
//! Exposes the synthetic source, the conditioning chain, the entropy
//! formulas, the Toeplitz extractor and the statistical battery. Reports
//! cross the boundary as JSON strings so Python gets plain dicts via
//! `json.loads`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qrng_core::bits::BitBuffer;
use qrng_core::dsp;
use qrng_core::error::Error;
use qrng_core::extractor;
use qrng_core::pipeline::{self, PipelineConfig};
use qrng_core::signal;
use qrng_core::stattests;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Serialization(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Synthetic two-channel heterodyne source.
#[pyclass]
struct SourceParams {
    inner: signal::SourceParams,
}

#[pymethods]
impl SourceParams {
    #[new]
    #[pyo3(signature = (
        lo_power = 20e-3,
        shot_slope = 1.805e-2,
        electronic_noise_variance = 3.61e-5,
        analog_bandwidth = 2.5e9,
        adc_rate = 25e9,
        adc_bits = 8,
        adc_full_scale = 0.2373,
        seed = 1,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lo_power: f64,
        shot_slope: f64,
        electronic_noise_variance: f64,
        analog_bandwidth: f64,
        adc_rate: f64,
        adc_bits: u8,
        adc_full_scale: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = signal::SourceParams {
            lo_power,
            shot_slope_q: shot_slope,
            shot_slope_p: shot_slope,
            electronic_noise_variance,
            analog_bandwidth,
            adc_rate,
            adc_bits,
            adc_full_scale,
            seed,
            ..signal::SourceParams::default()
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Generate one block of ADC codes: (channel_q, channel_p).
    fn generate_block(&self, offset: u64, length: usize) -> PyResult<(Vec<i16>, Vec<i16>)> {
        let src = signal::SyntheticSource::new(self.inner.clone()).map_err(to_py_err)?;
        let block = src.generate_block(offset, length).map_err(to_py_err)?;
        Ok((block.channel_q, block.channel_p))
    }

    fn lsb_volts(&self) -> f64 {
        self.inner.lsb_volts()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Conditioning chain configuration.
#[pyclass]
#[derive(Clone)]
struct DspConfig {
    inner: dsp::DspConfig,
}

#[pymethods]
impl DspConfig {
    #[new]
    #[pyo3(signature = (
        highpass_cutoff = 48e6,
        band_low = 400e6,
        band_high = 1400e6,
        mix_frequency = 1400e6,
        lowpass_cutoff = 1000e6,
        output_rate = 2e9,
    ))]
    fn new(
        highpass_cutoff: f64,
        band_low: f64,
        band_high: f64,
        mix_frequency: f64,
        lowpass_cutoff: f64,
        output_rate: f64,
    ) -> Self {
        Self {
            inner: dsp::DspConfig {
                highpass_cutoff,
                band_low,
                band_high,
                mix_frequency,
                lowpass_cutoff,
                output_rate,
                filter_taps: 0,
            },
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Streaming conditioner bound to one source's stream metadata.
#[pyclass]
struct Conditioner {
    inner: dsp::Conditioner,
    meta: qrng_core::CaptureMeta,
    next_offset: u64,
}

#[pymethods]
impl Conditioner {
    #[new]
    fn new(config: DspConfig, source: &SourceParams) -> PyResult<Self> {
        let meta = source.inner.capture_meta();
        let inner = dsp::Conditioner::new(config.inner, meta).map_err(to_py_err)?;
        Ok(Self { inner, meta, next_offset: 0 })
    }

    /// Push one block of codes; returns conditioned (q, p) volts.
    fn push(
        &mut self,
        channel_q: Vec<i16>,
        channel_p: Vec<i16>,
        lo_power: f64,
    ) -> PyResult<(Vec<f32>, Vec<f32>)> {
        let len = channel_q.len() as u64;
        let block = signal::SampleBlock {
            channel_q,
            channel_p,
            sample_rate: self.meta.sample_rate,
            adc_bits: self.meta.adc_bits,
            adc_full_scale: self.meta.adc_full_scale,
            lo_power,
            stream_offset: self.next_offset,
        };
        let out = self.inner.push_block(&block).map_err(to_py_err)?;
        self.next_offset += len;
        Ok((out.channel_q, out.channel_p))
    }

    /// Quantization step of the conditioned record, volts.
    fn effective_resolution(&self) -> f64 {
        self.inner.effective_resolution()
    }

    fn output_rate(&self) -> f64 {
        self.inner.output_rate()
    }
}

/// Toeplitz extractor with a fixed seed.
#[pyclass]
struct ToeplitzExtractor {
    params: extractor::ExtractorParams,
}

#[pymethods]
impl ToeplitzExtractor {
    /// Dimensions are free here; use `size_extractor` for LHL-compliant
    /// sizing.
    #[new]
    fn new(input_bits: usize, output_bits: usize, seed: u64) -> PyResult<Self> {
        let params = extractor::size_extractor(16.0, 16, 1.0, 1600)
            .map_err(to_py_err)?
            .with_dimensions(input_bits, output_bits)
            .map_err(to_py_err)?
            .seed_from_value(seed)
            .map_err(to_py_err)?;
        Ok(Self { params })
    }

    /// Hash one packed input block (LSB-first bytes) of exactly input_bits.
    fn extract(&self, data: &[u8]) -> PyResult<Vec<u8>> {
        let bits =
            BitBuffer::from_bytes(data, self.params.input_bits).map_err(to_py_err)?;
        let out = extractor::extract(&bits, &self.params).map_err(to_py_err)?;
        Ok(out.to_bytes())
    }

    fn params_hash(&self) -> String {
        format!("{:016x}", self.params.params_hash())
    }
}

/// Conditional min-entropy bound -log2(delta_q * delta_p / pi), bits/pair.
#[pyfunction]
fn h_min_conditional(delta_q: f64, delta_p: f64) -> PyResult<f64> {
    qrng_core::entropy::h_min_conditional(delta_q, delta_p).map_err(to_py_err)
}

/// Secure rate R_sc = h_min * pair_rate, bits/s.
#[pyfunction]
fn secure_rate(h_min: f64, pair_rate: f64) -> PyResult<f64> {
    qrng_core::entropy::secure_rate(h_min, pair_rate).map_err(to_py_err)
}

/// Leftover-hashing-lemma extractor sizing; returns a JSON dict with
/// input_bits, output_bits, lhl_max_output_bits and lhl_satisfied.
#[pyfunction]
fn size_extractor(
    h_min_per_pair: f64,
    bits_per_pair: u32,
    epsilon: f64,
    input_bits: usize,
) -> PyResult<String> {
    let p = extractor::size_extractor(h_min_per_pair, bits_per_pair, epsilon, input_bits)
        .map_err(to_py_err)?;
    Ok(serde_json::json!({
        "input_bits": p.input_bits,
        "output_bits": p.output_bits,
        "lhl_max_output_bits": p.lhl_max_output_bits,
        "lhl_satisfied": p.lhl_satisfied,
        "epsilon": p.epsilon,
    })
    .to_string())
}

/// Run the embedded statistical battery over packed bits; JSON report.
#[pyfunction]
#[pyo3(signature = (data, nbits = 0, significance = 0.01))]
fn run_battery(data: &[u8], nbits: usize, significance: f64) -> PyResult<String> {
    let nbits = if nbits == 0 { data.len() * 8 } else { nbits };
    let bits = BitBuffer::from_bytes(data, nbits).map_err(to_py_err)?;
    let cfg = stattests::BatteryConfig { significance, ..Default::default() };
    let report = stattests::run_battery(&bits, &cfg).map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Run the calibration pipeline from a JSON PipelineConfig (empty string for
/// defaults); returns the calibration artifacts as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = ""))]
fn run_calibration(config_json: &str) -> PyResult<String> {
    let cfg: PipelineConfig = if config_json.trim().is_empty() {
        PipelineConfig::default()
    } else {
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?
    };
    let artifacts = pipeline::run_calibration(&cfg).map_err(to_py_err)?;
    serde_json::to_string(&artifacts).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Generate extracted random bytes against a calibration produced by
/// `run_calibration`; returns (bytes, sidecar_json).
#[pyfunction]
fn generate_bits(
    config_json: &str,
    calibration_json: &str,
    byte_budget: usize,
) -> PyResult<(Vec<u8>, String)> {
    let cfg: PipelineConfig = if config_json.trim().is_empty() {
        PipelineConfig::default()
    } else {
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?
    };
    let cal = serde_json::from_str(calibration_json)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let artifacts = pipeline::generate_bits(&cfg, &cal, byte_budget).map_err(to_py_err)?;
    let mut sidecar = serde_json::to_value(&artifacts.sidecar)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    sidecar["entropy_report"] = serde_json::to_value(&artifacts.entropy)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((artifacts.bitstream.bits.to_bytes(), sidecar.to_string()))
}

#[pymodule]
fn qrng_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<SourceParams>()?;
    m.add_class::<DspConfig>()?;
    m.add_class::<Conditioner>()?;
    m.add_class::<ToeplitzExtractor>()?;
    m.add_function(wrap_pyfunction!(h_min_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(secure_rate, m)?)?;
    m.add_function(wrap_pyfunction!(size_extractor, m)?)?;
    m.add_function(wrap_pyfunction!(run_battery, m)?)?;
    m.add_function(wrap_pyfunction!(run_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(generate_bits, m)?)?;
    Ok(())
}
