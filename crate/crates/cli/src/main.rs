use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use recap_core::config::RunConfig;
use recap_core::filterbank::{band_triptych, write_band_file, FilterBank};
use recap_core::harness::{self, ArchRequest, Scenario};
use recap_core::synth::{write_corpus, SplitSpec, SynthConfig};
use recap_core::Variant;

#[derive(Parser)]
#[command(name = "recap", version, about = "Recaptured document image detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic genuine/recaptured corpus.
    Synth(SynthArgs),
    /// Write frequency-band files for images.
    Preprocess(PreprocessArgs),
    /// Train a detector and save the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on cross-domain scenarios.
    Eval(EvalArgs),
    /// Train and evaluate every model variant over several seeds.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    templates: usize,
    /// Images per template and device profile (even).
    #[arg(long, default_value_t = 40)]
    per_template: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 75)]
    jpeg_q: u8,
    #[arg(long, default_value_t = 224)]
    side: usize,
    /// Train/val/test template counts, e.g. 8/2/2.
    #[arg(long)]
    split: Option<String>,
    #[arg(long, default_value = "corpus")]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 224)]
    side: usize,
    /// Also write a side-by-side PNG of the three bands.
    #[arg(long)]
    triptych: bool,
    #[arg(long, default_value = "bands")]
    out: PathBuf,
}

/// Overrides applied on top of the run-config file.
#[derive(Args)]
struct ConfigArgs {
    /// Run-config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scales: Option<usize>,
    #[arg(long)]
    no_xattn: bool,
    /// Batch 64 and 20 epochs.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.paper_scale {
            cfg = cfg.paper_scale();
        }
        if let Some(s) = self.scales {
            cfg.scales = s;
        }
        if self.no_xattn {
            cfg.xattn_enabled = false;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(c) = &self.corpus {
            cfg.paths.corpus = c.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSON-lines log file; stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "corpus")]
    corpus: PathBuf,
    /// Repeatable; all four scenarios when omitted.
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    /// Refuse the checkpoint unless it has this many scales.
    #[arg(long)]
    scales: Option<usize>,
    /// Refuse the checkpoint unless cross-attention is disabled.
    #[arg(long)]
    no_xattn: bool,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Comma-separated subset of variants; all five when omitted.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
    #[arg(long, default_value = "ablation")]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

fn parse_scenarios(names: &[String]) -> Result<Vec<Scenario>> {
    if names.is_empty() {
        return Ok(Scenario::ALL.to_vec());
    }
    Ok(names.iter().map(|n| Scenario::parse(n)).collect::<recap_core::Result<_>>()?)
}

fn log_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let split = match &a.split {
        Some(s) => {
            let parts: Vec<usize> = s
                .split('/')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("split {s:?} is not train/val/test"))?;
            let [train, val, test] = parts[..] else {
                bail!("split {s:?} is not train/val/test");
            };
            SplitSpec { train, val, test }
        }
        None => SplitSpec::default(),
    };
    let cfg = SynthConfig {
        n_templates: a.templates,
        per_template: a.per_template,
        seed: a.seed,
        side: a.side,
        jpeg_quality: a.jpeg_q,
        split,
    };
    let manifest = write_corpus(&a.out, &cfg)?;
    eprintln!("wrote {} images to {}", manifest.samples.len(), a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let fb = FilterBank::new(a.k, a.side)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for path in &a.images {
        let img = image::open(path)
            .with_context(|| format!("reading {}", path.display()))?
            .to_rgb8();
        let band = fb.apply(&img)?;
        let stem = path.file_stem().context("image path has no file name")?;
        let out = a.out.join(stem).with_extension("bands");
        write_band_file(&out, &band)?;
        if a.triptych {
            let png = a.out.join(stem).with_extension("bands.png");
            band_triptych(&band).save(&png).with_context(|| format!("writing {}", png.display()))?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.cfg.resolve()?;
    if let Some(c) = a.checkpoint {
        cfg.paths.checkpoint = c;
    }
    let mut log = log_sink(a.log.as_deref())?;
    let outcome = harness::train(&cfg, &mut log)?;
    log.flush()?;
    harness::save_checkpoint(&cfg.paths.checkpoint, &outcome.checkpoint)?;
    eprintln!(
        "best epoch {} (val AUC {}), checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_auc.map_or("n/a".into(), |a| format!("{a:.2}")),
        cfg.paths.checkpoint.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let scenarios = parse_scenarios(&a.scenarios)?;
    let request = ArchRequest {
        scales: a.scales,
        xattn_enabled: a.no_xattn.then_some(false),
        variant: a.variant.as_deref().map(str::parse::<Variant>).transpose()?,
    };
    let ckpt = harness::read_checkpoint(&a.checkpoint)?;
    let bundle = harness::evaluate_checkpoint(&ckpt, &a.corpus, &scenarios, &request)?;
    bundle.write(&a.out)?;
    for (scenario, table) in bundle.csv_tables() {
        println!("# {scenario}\n{table}");
    }
    if bundle.reports.len() != scenarios.len() {
        bail!("only {} of {} scenarios produced reports", bundle.reports.len(), scenarios.len());
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let scenarios = parse_scenarios(&a.scenarios)?;
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.iter().map(|v| v.parse()).collect::<recap_core::Result<_>>()?
    };
    let mut log = log_sink(a.log.as_deref())?;
    let result = harness::ablate(&cfg, &variants, &a.seeds, &scenarios, &mut log)?;
    log.flush()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let json = a.out.join("ablation.json");
    fs::write(&json, serde_json::to_vec_pretty(&result)?).with_context(|| format!("writing {}", json.display()))?;
    for s in &scenarios {
        let table = result.csv(*s);
        let path = a.out.join(format!("{}.csv", s.name()));
        fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
        println!("# {}\n{table}", s.name());
    }
    let failed: Vec<String> = result
        .entries
        .iter()
        .filter_map(|e| e.error.as_ref().map(|err| format!("{} seed {}: {err}", e.variant, e.seed)))
        .collect();
    if !failed.is_empty() {
        bail!("{} runs failed:\n{}", failed.len(), failed.join("\n"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
