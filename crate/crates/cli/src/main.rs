//! `dcffs`: file-level access to the connectivity segmentation pipeline.
//!
//! Exit codes: 0 success, 2 malformed or unreadable input, 3 consistency
//! error (weights, config, or dims disagree), 64 usage error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dcffs_core::connectivity::{
    decode_masks, encode_connectivity, BorderPartner, BoundaryConvention, ConnectivityMask,
};
use dcffs_core::io::{load_mask, load_ntf, load_pgm, save_mask, save_ntf};
use dcffs_core::metrics::{dice_iou, MetricsReport};
use dcffs_core::network::{count_cost, init_weights, Network, NetworkConfig, IMAGE_CHANNELS};
use dcffs_core::params::Fill;
use dcffs_core::weights::WeightStore;
use dcffs_core::{Error, Shape, Tensor};

#[derive(Parser, Debug)]
#[command(name = "dcffs", version, about = "Connectivity-mask segmentation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a binary PGM mask as an 8-channel connectivity NTF tensor.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Boundary::Self_)]
        boundary: Boundary,
    },
    /// Vote, aggregate and threshold an 8-channel NTF map into a PGM mask.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0.5, value_parser = parse_threshold)]
        threshold: f32,
        /// Partner value for directions that leave the image.
        #[arg(long, value_enum, default_value_t = Border::SelfPair)]
        border: Border,
    },
    /// Run the network on one image.
    Forward {
        /// One `(1, 3, H, W)` NTF tensor, or three PGM channel planes.
        #[arg(long, num_args = 1..=3, required = true)]
        image: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        /// Output path prefix; files are `<prefix>output1.ntf`, `<prefix>output2.ntf`, `<prefix>mask.pgm`.
        #[arg(long)]
        out: String,
        /// TOML network config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth PGM; prints a metrics line when given.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Print Dice and IoU between two PGM masks.
    Metrics { pred: PathBuf, truth: PathBuf },
    /// Print parameter and FLOP counts as `key=value` lines.
    Cost {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a complete DCFW weight file for a config.
    InitWeights {
        #[arg(long)]
        config: Option<PathBuf>,
        /// ChaCha8 seed for the documented uniform ranges.
        #[arg(long, conflicts_with = "zero")]
        seed: Option<u64>,
        /// All-zero parameters.
        #[arg(long)]
        zero: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Boundary {
    Classic,
    #[value(name = "self")]
    Self_,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Border {
    SelfPair,
    Neutral,
}

fn parse_threshold(s: &str) -> Result<f32, String> {
    let t: f32 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("threshold {t} must lie strictly between 0 and 1"))
    }
}

enum Failure {
    Malformed(String),
    Consistency(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Malformed(_) => 2,
            Failure::Consistency(_) => 3,
            Failure::Usage(_) => 64,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Malformed(m) | Failure::Consistency(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_malformed_input() {
            Failure::Malformed(e.to_string())
        } else {
            Failure::Consistency(e.to_string())
        }
    }
}

/// Attaches the offending path to read errors.
fn reading<T>(path: &Path, r: dcffs_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Malformed(m) => Failure::Malformed(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_config(path: Option<&Path>) -> Result<NetworkConfig, Failure> {
    match path {
        Some(p) => reading(p, NetworkConfig::load(p)),
        None => Ok(NetworkConfig::default()),
    }
}

/// Drops trailing zeros: `1.000000` prints as `1`, `0.500000` as `0.5`.
fn fmt_metric(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn metrics_line(m: &MetricsReport) -> String {
    format!("dice={} iou={}", fmt_metric(m.dice), fmt_metric(m.iou))
}

fn load_image(paths: &[PathBuf]) -> Result<Tensor, Failure> {
    match paths {
        [one] => {
            let t = reading(one, load_ntf(one))?;
            if t.shape().n != 1 || t.shape().c != IMAGE_CHANNELS {
                return Err(Failure::Malformed(format!(
                    "{}: expected a (1, 3, H, W) image, got {}",
                    one.display(),
                    t.shape()
                )));
            }
            Ok(t)
        }
        [r, g, b] => {
            let planes = [r, g, b]
                .iter()
                .map(|p| reading(p, load_pgm(p)))
                .collect::<Result<Vec<_>, _>>()?;
            let (w, h) = (planes[0].width, planes[0].height);
            if planes.iter().any(|p| (p.width, p.height) != (w, h)) {
                return Err(Failure::Consistency("image planes differ in size".into()));
            }
            Ok(Tensor::from_fn(Shape::new(1, IMAGE_CHANNELS, h, w), |_, c, y, x| {
                planes[c].pixels[y * w + x] as f32 / 255.0
            }))
        }
        _ => Err(Failure::Usage("--image takes one NTF file or three PGM files".into())),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Encode {
            input,
            output,
            boundary,
        } => {
            let mask = reading(&input, load_mask(&input))?;
            let conv = match boundary {
                Boundary::Classic => BoundaryConvention::ClassicZero,
                Boundary::Self_ => BoundaryConvention::SameAsSelf,
            };
            save_ntf(&output, encode_connectivity(&mask, conv).tensor())?;
        }
        Command::Decode {
            input,
            output,
            threshold,
            border,
        } => {
            let t = reading(&input, load_ntf(&input))?;
            let s = t.shape();
            if s.c != 8 || s.n != 1 {
                return Err(Failure::Malformed(format!(
                    "{}: expected a (1, 8, H, W) connectivity map, got {s}",
                    input.display()
                )));
            }
            let border = match border {
                Border::SelfPair => BorderPartner::SelfPair,
                Border::Neutral => BorderPartner::Neutral,
            };
            let mask = decode_masks(&ConnectivityMask::new(t)?, threshold, border)?.remove(0);
            save_mask(&output, &mask)?;
        }
        Command::Forward {
            image,
            weights,
            out,
            config,
            truth,
        } => {
            let cfg = load_config(config.as_deref())?;
            let store = reading(&weights, WeightStore::load(&weights))?;
            let x = load_image(&image)?;
            let truth = truth.map(|p| reading(&p, load_mask(&p))).transpose()?;
            let net = Network::build(&cfg, &store)?;
            let result = net.forward(&x)?;
            let mask = decode_masks(
                &ConnectivityMask::new(result.output2.clone())?,
                cfg.decode_threshold,
                BorderPartner::default(),
            )?
            .remove(0);
            let metrics = truth.map(|t| dice_iou(&mask, &t)).transpose()?;

            save_ntf(format!("{out}output1.ntf"), &result.output1)?;
            save_ntf(format!("{out}output2.ntf"), &result.output2)?;
            save_mask(format!("{out}mask.pgm"), &mask)?;
            if let Some(m) = metrics {
                println!("{}", metrics_line(&m));
            }
        }
        Command::Metrics { pred, truth } => {
            let p = reading(&pred, load_mask(&pred))?;
            let t = reading(&truth, load_mask(&truth))?;
            println!("{}", metrics_line(&dice_iou(&p, &t)?));
        }
        Command::Cost { config } => {
            let cfg = load_config(config.as_deref())?;
            let report = count_cost(&cfg)?;
            println!("total_params={}", report.total_params);
            println!("total_flops={}", report.total_flops);
            for m in &report.modules {
                println!("{}.params={}", m.name, m.params);
                println!("{}.flops={}", m.name, m.flops);
            }
        }
        Command::InitWeights {
            config,
            seed,
            zero,
            out,
        } => {
            let fill = match (seed, zero) {
                (Some(s), false) => Fill::Seeded(s),
                (None, true) => Fill::Zeros,
                _ => return Err(Failure::Usage("pass exactly one of --seed or --zero".into())),
            };
            let cfg = load_config(config.as_deref())?;
            init_weights(&cfg, fill)?.save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_formatting() {
        assert_eq!(fmt_metric(1.0), "1");
        assert_eq!(fmt_metric(0.0), "0");
        assert_eq!(fmt_metric(0.5), "0.5");
        assert_eq!(fmt_metric(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn threshold_parser() {
        assert_eq!(parse_threshold("0.25"), Ok(0.25));
        assert!(parse_threshold("1.5").is_err());
        assert!(parse_threshold("0").is_err());
        assert!(parse_threshold("x").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
