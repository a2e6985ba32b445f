//! Training, scenario evaluation and ablation over a synthetic corpus.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recap_tensor::checkpoint::Checkpoint;
use recap_tensor::{adam_step, AdamState, BnMode, ParamStore, Scalar, Tensor, TensorError};
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, Precision, RunConfig};
use crate::error::{io_err, Error, Result};
use crate::filterbank::{rgb_planes, FilterBank};
use crate::metrics::{auc, csv_table, eer, EvalReport, HterMode};
use crate::model::{trainable_params, Detector, Variant};
use crate::nn::Ctx;
use crate::synth::{load_image, load_manifest, Manifest, Quality, SampleRecord, Split};

/// One preprocessed sample: band image and RGB planes, both `[3, S, S]`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub band: Vec<f32>,
    pub rgb: Vec<f32>,
    pub label: u8,
}

#[derive(Clone, Debug)]
pub struct PreparedSet {
    pub side: usize,
    pub items: Vec<Prepared>,
}

impl PreparedSet {
    pub fn from_records(root: &Path, records: &[&SampleRecord], k: usize, side: usize) -> Result<Self> {
        let fb = FilterBank::new(k, side)?;
        let items = records
            .iter()
            .map(|r| {
                let img = load_image(root, r)?;
                Ok(Prepared {
                    band: fb.apply(&img)?.channels.into_data(),
                    rgb: rgb_planes(&img, side)?.cast::<f32>().into_data(),
                    label: r.label.index(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSet { side, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|p| p.label).collect()
    }

    fn batch<T: Scalar>(&self, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>, Vec<usize>)> {
        let s = self.side;
        let shape = [idx.len(), 3, s, s];
        let gather = |f: fn(&Prepared) -> &[f32]| -> Vec<T> {
            idx.iter()
                .flat_map(|&i| f(&self.items[i]).iter().map(|&v| T::of(v as f64)))
                .collect()
        };
        Ok((
            Tensor::new(&shape, gather(|p| &p.band))?,
            Tensor::new(&shape, gather(|p| &p.rgb))?,
            idx.iter().map(|&i| self.items[i].label as usize).collect(),
        ))
    }
}

/// Evaluation scenarios; all use the held-out test templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Training device, lossless.
    Intra,
    /// Other device, lossless.
    CrossDataset,
    /// Training device, JPEG duplicates.
    CrossQuality,
    /// Other device, JPEG duplicates.
    Combined,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Intra,
        Scenario::CrossDataset,
        Scenario::CrossQuality,
        Scenario::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Intra => "intra",
            Scenario::CrossDataset => "cross-dataset",
            Scenario::CrossQuality => "cross-quality",
            Scenario::Combined => "cross-dataset+quality",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }

    /// `(device profile, quality)` of the evaluation images.
    pub fn selector(self, jpeg_quality: u8) -> (usize, Quality) {
        match self {
            Scenario::Intra => (0, Quality::Lossless),
            Scenario::CrossDataset => (1, Quality::Lossless),
            Scenario::CrossQuality => (0, Quality::Jpeg(jpeg_quality)),
            Scenario::Combined => (1, Quality::Jpeg(jpeg_quality)),
        }
    }

    pub fn load(self, manifest: &Manifest, root: &Path, k: usize, side: usize) -> Result<PreparedSet> {
        let (device, quality) = self.selector(manifest.config.jpeg_quality);
        let records = manifest.select(Split::Test, device, quality);
        if records.is_empty() {
            return Err(Error::Config(format!("corpus has no test images for scenario {}", self.name())));
        }
        PreparedSet::from_records(root, &records, k, side)
    }
}

/// Training split (device 0, lossless) and validation split if present.
pub fn load_training_data(cfg: &RunConfig, manifest: &Manifest, root: &Path) -> Result<(PreparedSet, Option<PreparedSet>)> {
    let train = manifest.select(Split::Train, 0, Quality::Lossless);
    if train.is_empty() {
        return Err(Error::Config("corpus has no training images".into()));
    }
    let train = PreparedSet::from_records(root, &train, cfg.k, cfg.input_side)?;
    let val = manifest.select(Split::Val, 0, Quality::Lossless);
    let val = if val.is_empty() {
        None
    } else {
        Some(PreparedSet::from_records(root, &val, cfg.k, cfg.input_side)?)
    };
    Ok((train, val))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum LogLine<'a> {
    Start {
        config_hash: &'a str,
        variant: String,
        train_size: usize,
        val_size: usize,
        trainable_params: usize,
    },
    Epoch(&'a EpochLog),
    Done {
        best_epoch: usize,
        best_val_auc: Option<f64>,
        stopped_early: bool,
    },
}

fn log_line(log: &mut dyn Write, line: &LogLine<'_>) -> Result<()> {
    let text = serde_json::to_string(line)?;
    writeln!(log, "{text}")
        .and_then(|()| log.flush())
        .map_err(io_err("training log"))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch without a
    /// validation split).
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochLog>,
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    pub trainable_params: usize,
}

/// Load the corpus named in `cfg` and train.
pub fn train(cfg: &RunConfig, log: &mut dyn Write) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.paths.corpus)?;
    let (train_set, val_set) = load_training_data(cfg, &manifest, &cfg.paths.corpus)?;
    train_on(cfg, &train_set, val_set.as_ref(), log)
}

pub fn train_on(cfg: &RunConfig, train: &PreparedSet, val: Option<&PreparedSet>, log: &mut dyn Write) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.side != cfg.input_side {
        return Err(Error::Config(format!(
            "training data is {} pixels wide, config expects {}",
            train.side, cfg.input_side
        )));
    }
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, train, val, log),
        Precision::F64 => train_typed::<f64>(cfg, train, val, log),
    }
}

/// Epoch, (val AUC, val log-loss) when validated, and the snapshot.
type Best = (usize, Option<(f64, f64)>, Checkpoint);

fn train_typed<T: Scalar>(cfg: &RunConfig, train: &PreparedSet, val: Option<&PreparedSet>, log: &mut dyn Write) -> Result<TrainOutcome> {
    let hash = cfg.hash();
    let hash_hex = hex::encode(hash);
    let json = cfg.to_json();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_5EED_5EED);
    let mut store = ParamStore::<T>::new();
    let detector = Detector::new(&cfg.model_config(), &mut store, &mut init_rng)?;
    let mut adam = AdamState::new(&store, cfg.lr);
    let params = trainable_params(&store);
    log_line(
        log,
        &LogLine::Start {
            config_hash: &hash_hex,
            variant: cfg.variant().to_string(),
            train_size: train.len(),
            val_size: val.map_or(0, PreparedSet::len),
            trainable_params: params,
        },
    )?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let mut best: Option<Best> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        // batch norm needs two samples; a trailing singleton is skipped
        for idx in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let (band, rgb, labels) = train.batch::<T>(idx)?;
            let mut ctx = Ctx::new(&mut store, BnMode::Train);
            let (b, r) = (ctx.input(band), ctx.input(rgb));
            let forward = detector
                .forward(&mut ctx, b, r)
                .and_then(|logits| Ok(ctx.graph.cross_entropy(logits, &labels)?));
            let loss = match forward {
                Ok(loss) => loss,
                // NaN reached an operator before the loss
                Err(Error::Tensor(TensorError::Numeric { op, reason })) => {
                    return Err(Error::Divergence {
                        epoch,
                        reason: format!("{op}: {reason}"),
                    })
                }
                Err(e) => return Err(e),
            };
            let value = ctx.graph.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("loss became {value}"),
                });
            }
            ctx.backward(loss)?;
            adam_step(&mut store, &mut adam)?;
            store.zero_grad();
            step_losses.push(value);
            loss_sum += value * idx.len() as f64;
            seen += idx.len();
        }
        if seen == 0 {
            return Err(Error::Config("training split yields no batch of two or more".into()));
        }
        if cfg.recalibrate_bn {
            recalibrate_bn(&detector, &mut store, train, &order, cfg.batch_size)?;
        }
        let val_score = match val {
            Some(v) => {
                let scores = score_store(&detector, &mut store, v, cfg.batch_size)?;
                let labels = v.labels();
                Some((auc(&scores, &labels)?, mean_log_loss(&scores, &labels)))
            }
            None => None,
        };
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_auc: val_score.map(|v| v.0),
            val_loss: val_score.map(|v| v.1),
            seconds: start.elapsed().as_secs_f64(),
        };
        log_line(log, &LogLine::Epoch(&entry))?;
        epochs.push(entry);
        // AUC ties are common once validation saturates; the lower
        // validation loss then picks the better calibrated epoch
        let improved = match (&best, val_score) {
            (_, None) | (None, _) => true,
            (Some((_, Some(b), _)), Some(a)) => a.0 > b.0 || (a.0 == b.0 && a.1 < b.1),
            (Some((_, None, _)), Some(_)) => true,
        };
        if improved {
            best = Some((epoch, val_score, Checkpoint::from_store(&store, hash, json.clone())));
        }
        if let (Some(target), Some((a, _))) = (cfg.target_val_auc, val_score) {
            if a >= target {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    let (best_epoch, best_val, checkpoint) = best.expect("at least one epoch ran");
    let best_val_auc = best_val.map(|v| v.0);
    log_line(
        log,
        &LogLine::Done {
            best_epoch,
            best_val_auc,
            stopped_early,
        },
    )?;
    Ok(TrainOutcome {
        checkpoint,
        epochs,
        step_losses,
        best_epoch,
        best_val_auc,
        trainable_params: params,
    })
}

/// Replace every batch-norm running statistic with the average of its batch
/// statistics over `set`, batched as in `order`, at the current weights. The
/// exponential average kept during training lags weights that moved within
/// the epoch.
fn recalibrate_bn<T: Scalar>(
    detector: &Detector,
    store: &mut ParamStore<T>,
    set: &PreparedSet,
    order: &[usize],
    batch: usize,
) -> Result<()> {
    for (i, chunk) in order.chunks(batch).filter(|c| c.len() >= 2).enumerate() {
        let (band, rgb, _) = set.batch::<T>(chunk)?;
        let mut ctx = Ctx::new(store, BnMode::Train);
        // cumulative mean: the first batch overwrites, later ones average in
        ctx.bn_momentum = 1.0 / (i + 1) as f64;
        let (b, r) = (ctx.input(band), ctx.input(rgb));
        detector.forward(&mut ctx, b, r)?;
    }
    Ok(())
}

/// Mean binary cross-entropy of recapture probabilities.
fn mean_log_loss(scores: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &l)| -(if l == 1 { p } else { 1.0 - p }).max(1e-300).ln())
        .sum();
    total / scores.len() as f64
}

/// Recapture probabilities in eval mode.
fn score_store<T: Scalar>(detector: &Detector, store: &mut ParamStore<T>, set: &PreparedSet, batch: usize) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (band, rgb, _) = set.batch::<T>(chunk)?;
        let mut ctx = Ctx::new(store, BnMode::Eval);
        let (b, r) = (ctx.input(band), ctx.input(rgb));
        let logits = detector.forward(&mut ctx, b, r)?;
        for row in ctx.graph.value(logits).data().chunks(2) {
            let margin = row[0].as_f64() - row[1].as_f64();
            scores.push(1.0 / (1.0 + margin.exp()));
        }
    }
    Ok(scores)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    ckpt.write_to(std::io::BufWriter::new(file))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(Checkpoint::read_from(std::io::BufReader::new(file))?)
}

/// Architecture flags a caller expects a checkpoint to have.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArchRequest {
    pub scales: Option<usize>,
    pub xattn_enabled: Option<bool>,
    pub variant: Option<Variant>,
}

/// A detector with `f32` weights, ready for scoring.
pub struct LoadedModel {
    pub config: RunConfig,
    pub config_hash: [u8; 32],
    detector: Detector,
    store: ParamStore<f32>,
}

impl LoadedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if hash_json(&ckpt.config_json) != ckpt.config_hash {
            return Err(Error::Config("checkpoint config does not match its recorded hash".into()));
        }
        let config: RunConfig = serde_json::from_str(&ckpt.config_json)?;
        let mut model = Self::fresh(&config)?;
        ckpt.load_into(&mut model.store)?;
        model.config_hash = ckpt.config_hash;
        Ok(model)
    }

    /// Freshly initialized weights for `config`.
    pub fn fresh(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let detector = Detector::new(&config.model_config(), &mut store, &mut rng)?;
        Ok(LoadedModel {
            config: config.clone(),
            config_hash: config.hash(),
            detector,
            store,
        })
    }

    pub fn check_arch(&self, req: &ArchRequest) -> Result<()> {
        let c = &self.config;
        let conflict = |what: &str, want: String, have: String| {
            Error::Config(format!(
                "checkpoint {} was trained with {what} = {have}, requested {want}",
                hex::encode(&self.config_hash[..6])
            ))
        };
        if let Some(s) = req.scales {
            if s != c.scales {
                return Err(conflict("scales", s.to_string(), c.scales.to_string()));
            }
        }
        if let Some(x) = req.xattn_enabled {
            if x != c.xattn_enabled {
                return Err(conflict("cross-attention", x.to_string(), c.xattn_enabled.to_string()));
            }
        }
        if let Some(v) = req.variant {
            if v != c.variant() {
                return Err(conflict("variant", v.to_string(), c.variant().to_string()));
            }
        }
        Ok(())
    }

    pub fn score(&mut self, set: &PreparedSet) -> Result<Vec<f64>> {
        if set.side != self.config.input_side {
            return Err(Error::Config(format!(
                "evaluation data is {} pixels wide, model expects {}",
                set.side, self.config.input_side
            )));
        }
        score_store(&self.detector, &mut self.store, set, self.config.batch_size)
    }

    /// HTER operating threshold per the configured mode; `dev` is the
    /// validation split for the EER-threshold mode.
    pub fn hter_threshold(&mut self, dev: Option<&PreparedSet>) -> Result<f64> {
        match self.config.hter_mode {
            HterMode::Fixed => Ok(self.config.threshold),
            HterMode::DevEer => {
                let dev = dev.ok_or_else(|| Error::Config("dev-EER threshold needs a validation split".into()))?;
                let scores = self.score(dev)?;
                Ok(eer(&scores, &dev.labels())?.1)
            }
        }
    }

    pub fn evaluate(&mut self, scenario: Scenario, set: &PreparedSet, hter_threshold: f64) -> Result<EvalReport> {
        let scores = self.score(set)?;
        EvalReport::compute(scenario.name(), scores, set.labels(), self.config.threshold, hter_threshold)
    }
}

/// Reports for one model, tagged with its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config_hash: String,
    pub config: RunConfig,
    pub model: String,
    pub reports: Vec<EvalReport>,
}

impl ReportBundle {
    /// One CSV table per scenario, keyed by scenario name.
    pub fn csv_tables(&self) -> Vec<(String, String)> {
        self.reports
            .iter()
            .map(|r| (r.scenario.clone(), csv_table([(self.model.as_str(), r)])))
            .collect()
    }

    /// `report.json` plus `<scenario>.csv` files under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json = dir.join("report.json");
        fs::write(&json, serde_json::to_vec_pretty(self)?).map_err(io_err(&json))?;
        for (scenario, table) in self.csv_tables() {
            let path = dir.join(format!("{scenario}.csv"));
            fs::write(&path, table).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Evaluate a checkpoint on the requested scenarios against the corpus.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    corpus: &Path,
    scenarios: &[Scenario],
    request: &ArchRequest,
) -> Result<ReportBundle> {
    let mut model = LoadedModel::from_checkpoint(ckpt)?;
    model.check_arch(request)?;
    let manifest = load_manifest(corpus)?;
    let (k, side) = (model.config.k, model.config.input_side);
    let dev = match model.config.hter_mode {
        HterMode::Fixed => None,
        HterMode::DevEer => {
            let records = manifest.select(Split::Val, 0, Quality::Lossless);
            Some(PreparedSet::from_records(corpus, &records, k, side)?)
        }
    };
    let hter_threshold = model.hter_threshold(dev.as_ref())?;
    let reports = scenarios
        .iter()
        .map(|&s| model.evaluate(s, &s.load(&manifest, corpus, k, side)?, hter_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportBundle {
        config_hash: hex::encode(model.config_hash),
        model: model.config.variant().to_string(),
        config: model.config,
        reports,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationEntry {
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub trainable_params: usize,
    pub reports: Vec<EvalReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationResult {
    pub entries: Vec<AblationEntry>,
}

impl AblationResult {
    /// Mean of `metric` over the successful seeds of `variant` on `scenario`.
    pub fn mean(&self, variant: Variant, scenario: Scenario, metric: fn(&EvalReport) -> f64) -> Option<f64> {
        let name = variant.to_string();
        let values: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.variant == name && e.error.is_none())
            .flat_map(|e| e.reports.iter().filter(|r| r.scenario == scenario.name()).map(metric))
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Seed-averaged table for one scenario, rows in ablation order.
    pub fn csv(&self, scenario: Scenario) -> String {
        let mut out = String::from(crate::metrics::CSV_HEADER);
        out.push('\n');
        for v in Variant::ALL {
            let cols: Vec<Option<f64>> = [
                (|r: &EvalReport| r.acc) as fn(&EvalReport) -> f64,
                |r| r.auc,
                |r| r.eer,
                |r| r.ap,
                |r| r.hter,
            ]
            .into_iter()
            .map(|m| self.mean(v, scenario, m))
            .collect();
            if cols.iter().all(Option::is_none) {
                continue;
            }
            let cells: Vec<String> = cols
                .iter()
                .map(|c| c.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}")))
                .collect();
            out.push_str(&format!("{v},{}\n", cells.join(",")));
        }
        out
    }
}

/// Train and evaluate every variant for every seed. A failing variant is
/// recorded in its entry and the rest still run.
pub fn ablate(
    cfg: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    scenarios: &[Scenario],
    log: &mut dyn Write,
) -> Result<AblationResult> {
    let manifest = load_manifest(&cfg.paths.corpus)?;
    let (train, val) = load_training_data(cfg, &manifest, &cfg.paths.corpus)?;
    let sets = scenarios
        .iter()
        .map(|&s| Ok((s, s.load(&manifest, &cfg.paths.corpus, cfg.k, cfg.input_side)?)))
        .collect::<Result<Vec<_>>>()?;
    ablate_on(cfg, variants, seeds, &train, val.as_ref(), &sets, log)
}

pub fn ablate_on(
    cfg: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    train: &PreparedSet,
    val: Option<&PreparedSet>,
    sets: &[(Scenario, PreparedSet)],
    log: &mut dyn Write,
) -> Result<AblationResult> {
    let mut entries = Vec::new();
    for &variant in variants {
        for &seed in seeds {
            let mut run = cfg.clone();
            run.set_variant(variant);
            run.seed = seed;
            let mut entry = AblationEntry {
                variant: variant.to_string(),
                seed,
                config_hash: run.hash_hex(),
                trainable_params: 0,
                reports: Vec::new(),
                error: None,
            };
            let result = (|| -> Result<()> {
                let outcome = train_on(&run, train, val, log)?;
                entry.trainable_params = outcome.trainable_params;
                let mut model = LoadedModel::from_checkpoint(&outcome.checkpoint)?;
                let threshold = model.hter_threshold(val)?;
                for (scenario, set) in sets {
                    entry.reports.push(model.evaluate(*scenario, set, threshold)?);
                }
                Ok(())
            })();
            if let Err(e) = result {
                entry.error = Some(e.to_string());
            }
            entries.push(entry);
        }
    }
    Ok(AblationResult { entries })
}
