//! Command-line front end for the QRNG post-detection pipeline.
//!
//! Subcommands: calibrate, generate, analyze, report, simulate.
//! Exit codes: 0 ok, 1 validation failure, 2 I/O error, 3 security gate.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qrng_core::bits::BitBuffer;
use qrng_core::calibration::CalibrationResult;
use qrng_core::error::Error;
use qrng_core::pipeline::{
    self, run_calibration, simulate_capture, write_bits_file, PipelineConfig,
};
use qrng_core::stattests::{p_value_summary, run_battery, BatteryConfig};

#[derive(Parser)]
#[command(
    name = "qrng",
    about = "Heterodyne source-device-independent QRNG post-detection pipeline",
    version
)]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the pipeline seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the LO power sweep, fit the calibration and write the spectrum
    /// diagnostics.
    Calibrate {
        /// Output directory for calibration.json, spectrum.json, spectrum.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate extracted random bits against a fresh calibration.
    Generate {
        /// Calibration JSON produced by `calibrate`.
        #[arg(long)]
        calibration: PathBuf,
        /// Output bit file (packed bytes); a .json sidecar sits next to it.
        #[arg(long)]
        out: PathBuf,
        /// Exact number of output bytes to emit.
        #[arg(long)]
        bytes: u64,
    },
    /// Run the statistical battery over a packed bit file.
    Analyze {
        /// Packed bit file (e.g. the output of `generate`).
        file: PathBuf,
        /// Significance level.
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        /// Also export the bits in the ASCII '0'/'1' format consumed by the
        /// reference SP800-22 tool.
        #[arg(long)]
        export_ascii: Option<PathBuf>,
    },
    /// Entropy/purity-vs-power series from a completed calibration.
    Report {
        #[arg(long)]
        calibration: PathBuf,
        /// Output directory for entropy_sweep.json / entropy_sweep.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a synthetic QRAW capture.
    Simulate {
        /// Output QRAW path.
        #[arg(long)]
        out: PathBuf,
        /// LO power in watts (defaults to the configured source power).
        #[arg(long)]
        power: Option<f64>,
        /// Number of blocks to write.
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        /// Samples per block.
        #[arg(long, default_value_t = 1 << 20)]
        block_len: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::SecurityGate(_) => 3,
        Error::Io(_) | Error::Format(_) | Error::Serialization(_) => 2,
        Error::InvalidParameter(_)
        | Error::InvalidConfig(_)
        | Error::Calibration(_)
        | Error::InsufficientData(_) => 1,
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<PipelineConfig, Error> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str::<PipelineConfig>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_calibration(path: &Path) -> Result<CalibrationResult, Error> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let cfg = load_config(&cli.config, cli.seed)?;
    match cli.command {
        Command::Calibrate { out } => cmd_calibrate(&cfg, &out),
        Command::Generate { calibration, out, bytes } => {
            cmd_generate(&cfg, &calibration, &out, bytes)
        }
        Command::Analyze { file, significance, export_ascii } => {
            cmd_analyze(&file, significance, export_ascii.as_deref())
        }
        Command::Report { calibration, out } => cmd_report(&cfg, &calibration, &out),
        Command::Simulate { out, power, blocks, block_len } => {
            let bytes = simulate_capture(&cfg, power, blocks, block_len, &out)?;
            println!("wrote {} ({bytes} bytes, {blocks} x {block_len} samples)", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_calibrate(cfg: &PipelineConfig, out: &Path) -> Result<ExitCode, Error> {
    fs::create_dir_all(out)?;
    let artifacts = run_calibration(cfg)?;
    let cal_path = out.join("calibration.json");
    fs::write(&cal_path, serde_json::to_string_pretty(&artifacts.calibration)?)?;
    fs::write(out.join("sweep_points.json"), serde_json::to_string_pretty(&artifacts.points)?)?;
    fs::write(out.join("spectrum.json"), serde_json::to_string_pretty(&artifacts.spectrum)?)?;
    let mut csv = Vec::new();
    artifacts.spectrum.write_csv(&mut csv)?;
    fs::write(out.join("spectrum.csv"), csv)?;

    let c = &artifacts.calibration;
    println!("calibration written to {}", cal_path.display());
    println!(
        "  slope_q = {:.4e} ± {:.1e} V²/W   slope_p = {:.4e} ± {:.1e} V²/W",
        c.slope_q, c.slope_q_se, c.slope_p, c.slope_p_se
    );
    println!("  R² = ({:.6}, {:.6})", c.r_squared_q, c.r_squared_p);
    println!(
        "  delta_q = {:.4e} VU, delta_p = {:.4e} VU at P = {:.4} mW",
        c.delta_q_at_reference,
        c.delta_p_at_reference,
        c.reference_lo_power * 1e3
    );
    println!("  band clearance = {:.2} dB", artifacts.band_clearance_db);
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(
    cfg: &PipelineConfig,
    calibration: &Path,
    out: &Path,
    bytes: u64,
) -> Result<ExitCode, Error> {
    let cal = load_calibration(calibration)?;
    let artifacts = pipeline::generate_bits(cfg, &cal, bytes as usize)?;
    write_bits_file(out, &artifacts.bitstream.bits)?;
    let mut sidecar = serde_json::to_value(&artifacts.sidecar)?;
    sidecar["config_hash"] = serde_json::Value::String(cfg.config_hash());
    sidecar["entropy_report"] = serde_json::to_value(&artifacts.entropy)?;
    let sidecar_path = out.with_extension("json");
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;

    let e = &artifacts.entropy;
    println!("wrote {bytes} bytes to {}", out.display());
    println!("  H_min(X|E) = {:.4} bits/pair (certified)", e.h_min_conditional);
    println!(
        "  secure rate R_sc = {:.4} Gbps at R_rw = {:.2} GSps",
        e.secure_rate / 1e9,
        e.raw_rate / 1e9
    );
    if !artifacts.sidecar.lhl_satisfied {
        println!(
            "  note: output_bits {} exceeds the LHL limit {} (explicit override)",
            artifacts.sidecar.output_bits, artifacts.sidecar.lhl_max_output_bits
        );
    }
    println!("  sidecar: {}", sidecar_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(
    file: &Path,
    significance: f64,
    export_ascii: Option<&Path>,
) -> Result<ExitCode, Error> {
    let bytes = fs::read(file)?;
    let bits = BitBuffer::from_bytes(&bytes, bytes.len() * 8)?;
    if bits.len() < 1_000_000 {
        return Err(Error::InsufficientData(format!(
            "analysis needs >= 1e6 bits, {} holds {}",
            file.display(),
            bits.len()
        )));
    }
    if let Some(path) = export_ascii {
        let f = fs::File::create(path)?;
        bits.write_ascii(std::io::BufWriter::new(f))?;
        println!("ASCII bits exported to {}", path.display());
    }
    let battery_cfg = BatteryConfig { significance, ..BatteryConfig::default() };
    let report = run_battery(&bits, &battery_cfg)?;
    let summary = p_value_summary(&report.results)?;
    println!("{summary}");
    for s in &report.skipped {
        println!("skipped {}: {}", s.test_name, s.reason);
    }
    if summary.all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn cmd_report(cfg: &PipelineConfig, calibration: &Path, out: &Path) -> Result<ExitCode, Error> {
    let cal = load_calibration(calibration)?;
    let reports = pipeline::entropy_sweep(cfg, &cal)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("entropy_sweep.json"), serde_json::to_string_pretty(&reports)?)?;
    let mut csv = String::from(
        "lo_power_w,h_min_conditional,h_min_classical,entropy_loss,variance_q_vu,variance_p_vu,purity,secure_rate_bps\n",
    );
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.lo_power,
            r.h_min_conditional,
            r.h_min_classical,
            r.entropy_loss,
            r.variance_q_vu,
            r.variance_p_vu,
            r.purity,
            r.secure_rate
        ));
    }
    fs::write(out.join("entropy_sweep.csv"), csv)?;

    println!(
        "{:<10} {:>10} {:>10} {:>8} {:>8} {:>12}",
        "P_LO (mW)", "Hmin(X|E)", "Hmin(X)", "loss", "purity", "R_sc (Gbps)"
    );
    for r in &reports {
        println!(
            "{:<10.3} {:>10.4} {:>10.4} {:>8.4} {:>8.4} {:>12.4}",
            r.lo_power * 1e3,
            r.h_min_conditional,
            r.h_min_classical,
            r.entropy_loss,
            r.purity,
            r.secure_rate / 1e9
        );
    }
    std::io::stdout().flush().ok();
    Ok(ExitCode::SUCCESS)
}
