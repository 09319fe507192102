//! Compressed-beamforming pipeline driver.
//!
//! Stages write their artifacts into the output directory so each can be
//! rerun independently: `simulate` produces raw channel data, `beamform` the
//! classical reference lines, `xample` the low-rate beamformed coefficients,
//! `recover` the sparse lines, `render` images, and `run` the whole chain
//! plus the rate report and comparison metrics.

use cbeam_core::config::{Mode, PipelineConfig, ResolvedConfig};
use cbeam_core::containers::{load_coefficients, load_lines, save_coefficients, save_lines};
use cbeam_core::error::Error;
use cbeam_core::imaging::{write_image, ImageFormat};
use cbeam_core::phantom::{load_raw, save_raw};
use cbeam_core::pipeline;
use cbeam_core::xampling::{load_operator_cache, save_operator_cache};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cbeam", about = "Sub-Nyquist compressed beamforming pipeline")]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Compressed path selection: reference | exact | approx.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Truncation energy fraction override.
    #[arg(long, global = true)]
    rho: Option<f64>,

    /// Beam count override.
    #[arg(long, global = true)]
    beams: Option<usize>,

    /// Worker thread count (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize raw channel data for the configured phantom.
    Simulate,
    /// Classical full-rate beamforming of stored raw data.
    Beamform,
    /// Project stored raw data onto low-rate beamformed coefficients.
    Xample {
        /// Load (or build and save) the offline operator cache
        /// `operators.snoc` in the output directory.
        #[arg(long)]
        use_operator_cache: bool,
    },
    /// Recover sparse lines from stored coefficients.
    Recover,
    /// Render a stored lines file to an image.
    Render {
        /// Lines container to render; reference_polar.snln when omitted.
        lines: Option<PathBuf>,
    },
    /// Full pipeline: simulate, both paths, metrics, artifacts.
    Run,
    /// Print the rate accounting (uses stored coefficients when present).
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) | Error::InvalidArgument(_) | Error::BandViolation { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(3),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ResolvedConfig, Error> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    // re-parse raw structure to apply overrides before validation
    let mut cfg: PipelineConfig = toml::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config syntax: {e}")))?;
    if let Some(mode) = &cli.mode {
        cfg.mode = Mode::parse(mode)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = Some(out.clone());
    }
    if let Some(rho) = cli.rho {
        cfg.truncation.rho = rho;
    }
    if let Some(beams) = cli.beams {
        cfg.scan.beams = beams;
    }
    cfg.resolve()
}

fn out_dir(cfg: &ResolvedConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg);
    match &cli.command {
        Command::Simulate => {
            std::fs::create_dir_all(&dir)?;
            let (raw, sigma) = pipeline::simulate(&cfg)?;
            let path = dir.join("raw.snbf");
            save_raw(&raw, &path)?;
            println!(
                "wrote {} ({} beams x {} elements x {} samples, noise sigma {sigma:.3e})",
                path.display(),
                raw.num_beams(),
                raw.num_elements(),
                raw.num_samples()
            );
            Ok(())
        }
        Command::Beamform => {
            std::fs::create_dir_all(&dir)?;
            let raw = load_checked(&cfg, &dir)?;
            let polar = pipeline::reference_polar(&cfg, &raw)?;
            save_lines(&polar, &dir.join("reference_polar.snln"))?;
            let image = pipeline::render(&cfg, &polar)?;
            write_image(&image, &dir.join("reference.pgm"), ImageFormat::Pgm)?;
            println!(
                "wrote {} and reference.pgm ({} lines of {} cells)",
                dir.join("reference_polar.snln").display(),
                polar.num_beams(),
                polar.num_radial()
            );
            Ok(())
        }
        Command::Xample { use_operator_cache } => {
            if cfg.mode == Mode::Reference {
                return Err(Error::InvalidArgument(
                    "xample needs --mode exact or approx".to_string(),
                ));
            }
            std::fs::create_dir_all(&dir)?;
            let raw = load_checked(&cfg, &dir)?;
            let cache = if *use_operator_cache && cfg.mode == Mode::Approx {
                let path = dir.join("operators.snoc");
                let key = pipeline::operator_cache_key(&cfg);
                match load_operator_cache(&path, &key) {
                    Ok(cache) => {
                        println!("loaded operator cache {}", path.display());
                        Some(cache)
                    }
                    Err(Error::Io(_)) | Err(Error::StaleCache(_)) => {
                        let cache = pipeline::build_operator_cache(&cfg)?;
                        save_operator_cache(&cache, &path)?;
                        println!("built and saved operator cache {}", path.display());
                        Some(cache)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let coef =
                pipeline::compressed_coefficients_cached(&cfg, &raw, cfg.mode, cache.as_ref())?;
            save_coefficients(&coef, &dir.join("coefficients.sncf"))?;
            let rate = pipeline::rate_report(&cfg, Some(&coef));
            println!("wrote {}", dir.join("coefficients.sncf").display());
            print_kv(&rate.key_values());
            Ok(())
        }
        Command::Recover => {
            let coef = load_coefficients(&dir.join("coefficients.sncf"))?;
            let (recovered, polar, degenerate) = pipeline::recover_lines(&cfg, &coef)?;
            let name = format!("compressed_{}_polar.snln", coef.mode_name);
            save_lines(&polar, &dir.join(&name))?;
            let atoms: usize = recovered.iter().map(|x| x.len()).sum();
            println!(
                "wrote {} ({} beams, {atoms} recovered atoms, {degenerate} degenerate)",
                dir.join(&name).display(),
                polar.num_beams()
            );
            Ok(())
        }
        Command::Render { lines } => {
            let lines_path = lines
                .clone()
                .unwrap_or_else(|| dir.join("reference_polar.snln"));
            let polar = load_lines(&lines_path)?;
            let image = pipeline::render(&cfg, &polar)?;
            let img_path = lines_path.with_extension("pgm");
            write_image(&image, &img_path, ImageFormat::Pgm)?;
            if cfg.write_png {
                write_image(&image, &lines_path.with_extension("png"), ImageFormat::Png)?;
            }
            println!("wrote {}", img_path.display());
            Ok(())
        }
        Command::Run => {
            let mut cfg = cfg;
            cfg.out_dir = Some(dir.clone());
            let out = pipeline::run_pipeline(&cfg)?;
            println!(
                "pipeline complete: {} beams, mode {}",
                out.reference_polar.num_beams(),
                cfg.mode.name()
            );
            print_kv(&out.metrics);
            println!("artifacts in {}", dir.display());
            Ok(())
        }
        Command::Report => {
            let coef_path = dir.join("coefficients.sncf");
            let coef = if coef_path.exists() {
                Some(load_coefficients(&coef_path)?)
            } else {
                None
            };
            let rate = pipeline::rate_report(&cfg, coef.as_ref());
            print_kv(&rate.key_values());
            Ok(())
        }
    }
}

fn load_checked(
    cfg: &ResolvedConfig,
    dir: &Path,
) -> Result<cbeam_core::phantom::RawChannelData, Error> {
    let raw = load_raw(&dir.join("raw.snbf"))?;
    if raw.geometry_fingerprint() != cfg.geometry.fingerprint() {
        return Err(Error::StaleCache(format!(
            "raw data was simulated for a different geometry (fingerprint {:#010x} vs {:#010x})",
            raw.geometry_fingerprint(),
            cfg.geometry.fingerprint()
        )));
    }
    if raw.num_beams() != cfg.beams.len() {
        return Err(Error::StaleCache(format!(
            "raw data holds {} beams, config asks for {}",
            raw.num_beams(),
            cfg.beams.len()
        )));
    }
    Ok(raw)
}

fn print_kv(kv: &[(String, String)]) {
    for (k, v) in kv {
        println!("{k}={v}");
    }
}
