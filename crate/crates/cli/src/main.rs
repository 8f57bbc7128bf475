//! `dociiw`: synthesis, training, inference, evaluation and self-checks.
//!
//! Exit status: 0 on success, 1 when a run fails or a check does not pass,
//! 2 for usage and configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dociiw::io::read_image;
use dociiw::pipeline::{
    decompose, evaluate_manifest, evaluate_pairs, load_pairs, load_smtnet, load_wbnet, train_smtnet, train_wbnet,
    write_preview, Progress,
};
use dociiw::synth::{build_dataset, Manifest, Split, MANIFEST_NAME};
use dociiw::verify::{gradcheck, selftest, Report};
use dociiw::{Config, Error};

#[derive(Parser)]
#[command(name = "dociiw", version, about = "Document reflectance estimation toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for synthesis and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true, env = "DOCIIW_THREADS")]
    threads: Option<usize>,
    /// OCR command template containing `{input}`.
    #[arg(long, global = true)]
    ocr_cmd: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f32>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Synthetic image side length.
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Number of synthetic training samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic dataset and its manifest.
    Synth {
        /// Directory of texture images; procedural pages when absent.
        #[arg(long)]
        textures: Option<PathBuf>,
    },
    /// Train the white-balance network.
    TrainWb(TrainArgs),
    /// Train the material/shading separator.
    TrainSmt {
        #[command(flatten)]
        train: TrainArgs,
        /// Balance inputs with this frozen white-balance checkpoint instead
        /// of using the ground-truth balanced images.
        #[arg(long)]
        wb_checkpoint: Option<PathBuf>,
    },
    /// Decompose images with trained checkpoints.
    Infer {
        /// PFM (linear) or PNG (sRGB) images.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        wb_ckpt: PathBuf,
        #[arg(long)]
        smt_ckpt: PathBuf,
        /// Known texture, same size as every input.
        #[arg(long)]
        texture: Option<PathBuf>,
        /// Linear value shown as white in the preview strip.
        #[arg(long, default_value_t = 1.0)]
        exposure: f32,
    },
    /// Score a dataset split or a list of image pairs.
    Eval {
        /// Dataset directory or manifest file.
        #[arg(long, conflicts_with = "pairs", requires_all = ["wb_ckpt", "smt_ckpt"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        wb_ckpt: Option<PathBuf>,
        #[arg(long)]
        smt_ckpt: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Val)]
        split: SplitArg,
        /// JSONL of {"id", "image", "reference", "text"?} records.
        #[arg(long, required_unless_present = "manifest")]
        pairs: Option<PathBuf>,
    },
    /// Finite-difference gradient checks.
    Gradcheck,
    /// Physics identities, round trips and the oracle-path reconstruction.
    Selftest,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Continue from an epoch checkpoint of an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
}

/// Errors that mean the invocation itself was wrong.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn resolve(g: &Global) -> anyhow::Result<Config> {
    let mut c = match &g.config {
        Some(p) => Config::load(p).map_err(|e| Usage(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(s) = g.seed {
        c.synth.seed = s;
        c.train.seed = s;
    }
    if let Some(v) = &g.ocr_cmd {
        c.eval.ocr_cmd = Some(v.clone());
    }
    if let Some(v) = g.epochs {
        c.train.epochs = v;
    }
    if let Some(v) = g.lr {
        c.train.lr = v;
    }
    if let Some(v) = g.batch {
        c.train.batch = v;
    }
    if let Some(v) = g.size {
        c.synth.size = v;
    }
    if let Some(v) = g.samples {
        c.synth.train_samples = v;
    }
    Ok(c)
}

fn out_dir(g: &Global, fallback: &Path) -> PathBuf {
    g.out.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn print_report(report: &Report) -> anyhow::Result<()> {
    println!("{report}");
    if !report.passed() {
        bail!("{} check(s) failed", report.failures().count());
    }
    Ok(())
}

fn train_progress(p: Progress) {
    match p {
        Progress::Epoch { epoch, train } => eprintln!("epoch {epoch:3}  train {:.6}", train.total),
        Progress::Validation { epoch, validation } => eprintln!("epoch {epoch:3}  val   {:.6}", validation.loss.total),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let mut config = resolve(g)?;

    match &cli.command {
        Command::Synth { textures } => {
            let out = out_dir(g, Path::new("data"));
            config.synth.validate().map_err(|e| Usage(e.to_string()))?;
            config.record(&out)?;
            let m = build_dataset(textures.as_deref(), &config.synth, &out)?;
            eprintln!("wrote {} samples to {}", m.entries.len(), out.join(MANIFEST_NAME).display());
        }
        Command::TrainWb(args) | Command::TrainSmt { train: args, .. } => {
            let out = out_dir(g, &config.train.out);
            config.train.out = out.clone();
            if let Some(m) = &args.manifest {
                config.train.manifest = m.clone();
            }
            if args.resume.is_some() {
                config.train.resume = args.resume.clone();
            }
            if let Command::TrainSmt { wb_checkpoint: Some(w), .. } = &cli.command {
                config.train.wb_checkpoint = Some(w.clone());
            }
            config.train.validate().map_err(|e| Usage(e.to_string()))?;
            config.record(&out)?;
            let summary = match &cli.command {
                Command::TrainWb(_) => train_wbnet(&config.train, &mut train_progress)?,
                _ => train_smtnet(&config.train, &mut train_progress)?,
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Infer { inputs, wb_ckpt, smt_ckpt, texture, exposure } => {
            let out = out_dir(g, Path::new("decompositions"));
            if !(*exposure > 0.0 && exposure.is_finite()) {
                return Err(Usage(format!("--exposure must be > 0, got {exposure}")).into());
            }
            config.record(&out)?;
            let wb = load_wbnet(wb_ckpt)?;
            let smt = load_smtnet(smt_ckpt)?;
            let texture = texture.as_deref().map(|t| read_image(t, true)).transpose()?;
            for path in inputs {
                let image = read_image(path, true).with_context(|| format!("reading {}", path.display()))?;
                let d = decompose(&image, &wb, &smt, texture.as_ref())
                    .with_context(|| format!("decomposing {}", path.display()))?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
                d.save(&out.join(stem))?;
                write_preview(&out.join(format!("{stem}_preview.png")), &d.preview(&image, *exposure)?)?;
                eprintln!("{} -> {}", path.display(), out.join(stem).display());
            }
        }
        Command::Eval { manifest, wb_ckpt, smt_ckpt, split, pairs } => {
            let out = out_dir(g, Path::new("eval"));
            config.eval.validate().map_err(|e| Usage(e.to_string()))?;
            config.record(&out)?;
            let report = match (manifest, pairs) {
                (Some(m), _) => {
                    let path = if m.is_dir() { m.join(MANIFEST_NAME) } else { m.clone() };
                    let manifest = Manifest::load(&path)?;
                    let (Some(w), Some(s)) = (wb_ckpt, smt_ckpt) else {
                        return Err(Usage("--manifest needs --wb-ckpt and --smt-ckpt".into()).into());
                    };
                    let split = match split {
                        SplitArg::Train => Split::Train,
                        SplitArg::Val => Split::Val,
                    };
                    evaluate_manifest(&manifest, split, &load_wbnet(w)?, &load_smtnet(s)?, &config.eval)?
                }
                (None, Some(p)) => evaluate_pairs(&load_pairs(p)?, &config.eval)?,
                (None, None) => return Err(Usage("give --manifest or --pairs".into()).into()),
            };
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            std::fs::write(out.join("report.txt"), report.table())?;
            print!("{}", report.table());
        }
        Command::Gradcheck => {
            let out = out_dir(g, Path::new("gradcheck"));
            config.record(&out)?;
            let report = gradcheck::run(config.train.seed)?;
            std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            print_report(&report)?;
        }
        Command::Selftest => {
            let out = out_dir(g, Path::new("selftest"));
            config.record(&out)?;
            let report = selftest::run(config.synth.seed, &out)?;
            std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            print_report(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some() || matches!(e.downcast_ref::<Error>(), Some(Error::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
