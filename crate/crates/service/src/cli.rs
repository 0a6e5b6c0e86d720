//! The `retouch` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use retouch_core::agent::{Agent, MemoryBank};
use retouch_core::augment::{export_dataset, load_manifest, prepare_dataset, AugmentConfig};
use retouch_core::instruction::{self, Instruction};
use retouch_core::parammap::build_map;
use retouch_core::raster::psnr;
use retouch_core::retouch::{render, TransferConfig};
use retouch_core::scoring::score_all_regions;
use retouch_core::segmentation::load_segmentation;
use retouch_core::{AttributeVector, Image, ParameterMap, SegmentationMap};
use serde::Serialize;
use serde_json::json;

use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::SCHEMA;

#[derive(Debug, Parser)]
#[command(name = "retouch", version, about = "Region-aware parametric photo retouching")]
pub struct Cli {
    /// Write errors to stderr as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-region attribute scores.
    Score { image: PathBuf, mask: PathBuf },

    /// Measure an image into a parameter map file.
    BuildMap {
        image: PathBuf,
        mask: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Render an image so its regions match a parameter map.
    Apply {
        image: PathBuf,
        pmap: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// TOML file whose `[transfer]` table overrides the render settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },

    /// Build an augmented training set from a manifest of image and mask paths.
    Augment {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "replace-prob", default_value_t = 0.1)]
        replace_prob: f64,
        #[arg(long, default_value_t = 0.05)]
        jitter: f64,
        /// Blur sigma range in pixels, as two numbers.
        #[arg(long = "blur-sigma", num_args = 2, value_names = ["MIN", "MAX"])]
        blur_sigma: Option<Vec<f64>>,
    },

    /// Run one instruction through the agent.
    Instruct {
        image: PathBuf,
        mask: PathBuf,
        text: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Memory bank (JSON lines); created if missing.
        #[arg(long)]
        memory: Option<PathBuf>,
        /// Start from this map instead of the memory-derived default.
        #[arg(long)]
        start: Option<PathBuf>,
        /// Also write the final parameter map.
        #[arg(long = "map-out")]
        map_out: Option<PathBuf>,
        /// Service configuration supplying agent settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra scene tags.
        #[arg(long = "tag")]
        tags: Vec<String>,
    },

    /// Peak signal-to-noise ratio between two images, in decibels.
    Psnr { a: PathBuf, b: PathBuf },

    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
}

type CliResult = Result<(), ServiceError>;

fn input<T>(r: retouch_core::Result<T>) -> Result<T, ServiceError> {
    r.map_err(ServiceError::Input)
}

fn load_pair(image: &Path, mask: &Path) -> Result<(Image, Arc<SegmentationMap>), ServiceError> {
    let img = input(Image::load(image))?;
    let seg = input(load_segmentation(mask, img.width(), img.height()))?;
    Ok((img, Arc::new(seg)))
}

fn load_config(path: Option<&Path>) -> Result<ServiceConfig, ServiceError> {
    match path {
        Some(p) => ServiceConfig::load(p),
        None => Ok(ServiceConfig::default()),
    }
}

fn print_json(value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| ServiceError::Core(e.into()))?;
    println!("{text}");
    Ok(())
}

fn scores_by_region(seg: &SegmentationMap, scores: &[AttributeVector]) -> serde_json::Value {
    let labels: BTreeMap<String, &str> = seg.regions().iter().map(|r| (r.id.to_string(), r.label.as_str())).collect();
    let by_id: BTreeMap<String, AttributeVector> =
        seg.regions().iter().zip(scores).map(|(r, &s)| (r.id.to_string(), s)).collect();
    json!({ "schema": SCHEMA, "labels": labels, "scores": by_id })
}

fn score(image: &Path, mask: &Path) -> CliResult {
    let (img, seg) = load_pair(image, mask)?;
    let scores = score_all_regions(&img, &seg, &TransferConfig::default().anchors);
    print_json(&scores_by_region(&seg, &scores))
}

fn build(image: &Path, mask: &Path, output: &Path) -> CliResult {
    let (img, seg) = load_pair(image, mask)?;
    build_map(&img, seg)?.save(output)?;
    Ok(())
}

fn apply(image: &Path, pmap: &Path, output: &Path, config: Option<&Path>) -> CliResult {
    let cfg = load_config(config)?;
    let img = input(Image::load(image))?;
    let map = input(ParameterMap::load(pmap))?;
    if !map.seg().matches(&img) {
        return Err(ServiceError::Input(retouch_core::Error::InvalidArgument(format!(
            "map is {}x{}, image is {}x{}",
            map.seg().width(),
            map.seg().height(),
            img.width(),
            img.height()
        ))));
    }
    render(&img, &map, &cfg.transfer)?.save_png(output)?;
    Ok(())
}

fn augment(
    manifest: &Path,
    output: &Path,
    seed: u64,
    replace_prob: f64,
    jitter: f64,
    blur_sigma: Option<&[f64]>,
) -> CliResult {
    let mut cfg = AugmentConfig {
        seed,
        replacement_probability: replace_prob,
        jitter_amplitude: jitter,
        ..AugmentConfig::default()
    };
    if let Some(&[lo, hi]) = blur_sigma {
        cfg.blur_sigma_range = [lo, hi];
    }
    cfg.validate().map_err(|e| ServiceError::Usage(e.to_string()))?;
    let samples = input(load_manifest(manifest))?;
    let stems: Vec<String> = samples.iter().map(|s| s.stem.clone()).collect();
    let inputs: Vec<(Image, SegmentationMap)> = samples.into_iter().map(|s| (s.image, s.seg)).collect();
    let dataset = prepare_dataset(&inputs, &cfg)?;
    export_dataset(&dataset, &stems, output)?;
    eprintln!("wrote {} samples to {}", stems.len(), output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn instruct(
    image: &Path,
    mask: &Path,
    text: &str,
    output: &Path,
    memory: Option<&Path>,
    start: Option<&Path>,
    map_out: Option<&Path>,
    config: Option<&Path>,
    tags: &[String],
    as_json: bool,
) -> CliResult {
    let cfg = load_config(config)?;
    let instr = instruction::parse(text)?;
    let (img, seg) = load_pair(image, mask)?;
    let bank = match memory {
        Some(p) => MemoryBank::open(p)?,
        None => MemoryBank::in_memory(),
    };
    let start = match start {
        Some(p) => Some(input(ParameterMap::load(p))?),
        None => None,
    };
    let agent = Agent::new(cfg.agent_config())?;
    let (map, out, rounds, saturated) = match &instr {
        Instruction::Weak => {
            let w = agent.weak_edit(&img, seg.clone(), &bank, tags)?;
            (w.map, w.image, 1, false)
        }
        Instruction::Strong(s) => {
            let e = agent.strong_edit(&img, seg.clone(), &bank, s, start.as_ref())?;
            (e.map, e.image, e.rounds, e.saturated)
        }
    };
    out.save_png(output)?;
    if let Some(p) = map_out {
        map.save(p)?;
    }
    let scores = score_all_regions(&out, &seg, &cfg.transfer.anchors);
    if as_json {
        let mut doc = scores_by_region(&seg, &scores);
        doc["instruction"] = json!(instruction::format(&instr));
        doc["rounds"] = json!(rounds);
        doc["saturated"] = json!(saturated);
        print_json(&doc)
    } else {
        println!("rounds: {rounds}{}", if saturated { " (saturated)" } else { "" });
        for (r, s) in seg.regions().iter().zip(&scores) {
            println!(
                "{} {}: colorfulness {:.4} contrast {:.4} temperature {:.4} brightness {:.4}",
                r.id, r.label, s.colorfulness, s.contrast, s.temperature, s.brightness
            );
        }
        Ok(())
    }
}

fn psnr_cmd(a: &Path, b: &Path, as_json: bool) -> CliResult {
    let a = input(Image::load(a))?;
    let b = input(Image::load(b))?;
    let db = input(psnr(&a, &b))?;
    if as_json {
        let value = if db.is_finite() { json!(db) } else { json!(null) };
        print_json(&json!({ "schema": SCHEMA, "psnr_db": value, "identical": db.is_infinite() }))
    } else {
        println!("{}", if db.is_finite() { format!("{db:.4}") } else { "inf".into() });
        Ok(())
    }
}

fn serve(config: Option<&Path>, listen: Option<String>) -> CliResult {
    let mut cfg = load_config(config)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let svc = Arc::new(crate::session::Service::new(cfg)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ServiceError::Core(e.into()))?;
    runtime.block_on(async move {
        let addr = &svc.config().listen;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| ServiceError::Usage(format!("cannot listen on {addr}: {e}")))?;
        if let Ok(local) = listener.local_addr() {
            eprintln!("listening on http://{local}");
        }
        crate::http::serve(listener, svc, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Core(e.into()))
    })
}

pub fn execute(cli: Cli) -> CliResult {
    let as_json = cli.json;
    match cli.command {
        Command::Score { image, mask } => score(&image, &mask),
        Command::BuildMap { image, mask, output } => build(&image, &mask, &output),
        Command::Apply {
            image,
            pmap,
            output,
            config,
        } => apply(&image, &pmap, &output, config.as_deref()),
        Command::Augment {
            manifest,
            output,
            seed,
            replace_prob,
            jitter,
            blur_sigma,
        } => augment(&manifest, &output, seed, replace_prob, jitter, blur_sigma.as_deref()),
        Command::Instruct {
            image,
            mask,
            text,
            output,
            memory,
            start,
            map_out,
            config,
            tags,
        } => instruct(
            &image,
            &mask,
            &text,
            &output,
            memory.as_deref(),
            start.as_deref(),
            map_out.as_deref(),
            config.as_deref(),
            &tags,
            as_json,
        ),
        Command::Psnr { a, b } => psnr_cmd(&a, &b, as_json),
        Command::Serve { config, listen } => serve(config.as_deref(), listen),
    }
}

fn report(err: &ServiceError, as_json: bool) {
    let mut stderr = std::io::stderr().lock();
    if as_json {
        let _ = writeln!(stderr, "{}", serde_json::to_string(&err.body()).unwrap_or_default());
    } else {
        let _ = writeln!(stderr, "error: {err}");
    }
}

/// Runs the command line and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let wants_json = args.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if wants_json {
                report(&ServiceError::Usage(e.kind().to_string()), true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, wants_json);
            ExitCode::from(e.exit_code())
        }
    }
}
