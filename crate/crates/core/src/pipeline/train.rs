//! Mini-batch training for both stages.
//!
//! Each batch item is evaluated on its own tape (in parallel); gradients are
//! summed in index order, averaged, and applied with Adam. Validation runs
//! before the first epoch, every `val_every` epochs and after the last one,
//! and each validation writes a checkpoint.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::data::{load_smt, load_smt_reference, load_wb, SmtExample, SmtReference, WbExample, WbInput};
use super::infer::load_wbnet;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::{apply_wb, Mask, DIV_EPS};
use crate::losses::{chromaticity, smt_objective, wbn_objective, LossReport, LossWeights};
use crate::metrics::{angular_error, implied_illuminant};
use crate::nn::{Adam, Checkpoint, NetConfig, UNet};
use crate::synth::{Manifest, Split, MANIFEST_NAME};

/// Consecutive non-finite steps tolerated before a run aborts.
pub const MAX_NONFINITE_STREAK: usize = 10;

/// Tags that must never appear on a separation-training tape.
pub const WITHHELD_TAGS: [&str; 2] = ["material_gt", "shading_gt"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Dataset directory or its `manifest.jsonl`.
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    /// Final learning rate as a fraction of `lr`, reached by cosine decay
    /// over the run; 1 keeps it constant.
    pub lr_final_ratio: f32,
    pub weights: LossWeights,
    pub seed: u64,
    pub val_every: usize,
    pub depth: usize,
    pub width: usize,
    /// Continue from a checkpoint written at an epoch boundary.
    pub resume: Option<PathBuf>,
    /// Separation stage only: feed inputs balanced by this frozen
    /// white-balance network instead of the ground-truth balanced images.
    pub wb_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            epochs: 30,
            batch: 4,
            lr: 5e-3,
            lr_final_ratio: 0.05,
            weights: LossWeights::default(),
            seed: 0,
            val_every: 5,
            depth: NetConfig::DEFAULT_DEPTH,
            width: NetConfig::DEFAULT_WIDTH,
            resume: None,
            wb_checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("epochs", self.epochs), ("batch", self.batch), ("val_every", self.val_every), ("depth", self.depth), ("width", self.width)];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.lr_final_ratio) {
            return Err(Error::Config(format!("lr_final_ratio must lie in [0, 1], got {}", self.lr_final_ratio)));
        }
        self.weights.validate()
    }

    /// Learning rate for 1-based `step` out of `total`.
    pub fn lr_at(&self, step: u64, total: u64) -> f32 {
        let t = (step.saturating_sub(1)) as f64 / (total.max(2) - 1) as f64;
        let r = self.lr_final_ratio as f64;
        let k = r + (1.0 - r) * 0.5 * (1.0 + (std::f64::consts::PI * t.min(1.0)).cos());
        (self.lr as f64 * k) as f32
    }

    fn manifest_path(&self) -> PathBuf {
        if self.manifest.is_dir() {
            self.manifest.join(MANIFEST_NAME)
        } else {
            self.manifest.clone()
        }
    }
}

/// Validation loss plus named diagnostics that are not optimised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub loss: LossReport,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Validation {
    pub fn diagnostic(&self, name: &str) -> f64 {
        self.diagnostics.get(name).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stage: String,
    pub epochs: usize,
    pub steps: u64,
    pub skipped_steps: u64,
    pub initial: Validation,
    pub last: Validation,
    pub checkpoint: PathBuf,
}

/// Progress events, for callers that want to report as training runs.
pub enum Progress<'a> {
    Epoch { epoch: usize, train: &'a LossReport },
    Validation { epoch: usize, validation: &'a Validation },
}

trait Objective: Sync {
    fn train_len(&self) -> usize;
    /// Loss report and parameter gradients for training example `i`.
    fn example_grads(&self, net: &UNet, i: usize, w: &LossWeights) -> Result<(LossReport, Vec<Tensor>)>;
    fn validate(&self, net: &UNet, w: &LossWeights) -> Result<Validation>;
}

fn collect_grads(tape: &Tape, total: Var, bound: &[Var]) -> Result<Vec<Tensor>> {
    let mut grads = tape.backward(total)?;
    Ok(bound
        .iter()
        .map(|v| grads.take(*v).unwrap_or_else(|| Tensor::zeros(tape.shape(*v))))
        .collect())
}

fn mean_abs(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len().max(1) as f64
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

struct WbObjective {
    train: Vec<WbExample>,
    val: Vec<WbExample>,
}

impl WbObjective {
    fn graph(tape: &mut Tape, net: &UNet, ex: &WbExample, bound: &[Var], w: &LossWeights) -> Result<(Var, crate::losses::WbnTerms)> {
        let image = tape.tagged_constant(ex.image.clone(), "input")?;
        let kernel_gt = tape.tagged_constant(ex.kernel.clone(), "kernel_gt")?;
        let wb_gt = tape.tagged_constant(ex.wb.clone(), "wb_gt")?;
        let mask = tape.tagged_constant(ex.mask.clone(), "mask")?;
        let kernel = net.forward(tape, image, bound)?[0];
        let terms = wbn_objective(tape, image, kernel, kernel_gt, wb_gt, mask, w)?;
        Ok((kernel, terms))
    }
}

impl Objective for WbObjective {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn example_grads(&self, net: &UNet, i: usize, w: &LossWeights) -> Result<(LossReport, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape)?;
        let (_, terms) = Self::graph(&mut tape, net, &self.train[i], &bound, w)?;
        Ok((terms.report(&tape, w), collect_grads(&tape, terms.total, &bound)?))
    }

    fn validate(&self, net: &UNet, w: &LossWeights) -> Result<Validation> {
        let rows: Vec<(LossReport, f64, Option<f64>)> = self
            .val
            .par_iter()
            .map(|ex| {
                let mut tape = Tape::new();
                let bound = net.bind_frozen(&mut tape)?;
                let (kernel, terms) = Self::graph(&mut tape, net, ex, &bound, w)?;
                let k = tape.value(kernel).clone();
                let kernel_l1 = mean_abs(k.data(), ex.kernel.data());
                let angular = match ex.illuminant {
                    Some(light) => {
                        let image = ex.image.to_image()?;
                        let balanced = apply_wb(&k.to_kernel()?, &image)?;
                        let mask = mask_of(&ex.mask)?;
                        let est = implied_illuminant(&image, &balanced, &mask)?;
                        Some(angular_error(est, light.map(f64::from))?)
                    }
                    None => None,
                };
                Ok((terms.report(&tape, w), kernel_l1, angular))
            })
            .collect::<Result<_>>()?;
        let reports: Vec<LossReport> = rows.iter().map(|r| r.0.clone()).collect();
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("kernel_l1".into(), mean(rows.iter().map(|r| r.1)));
        diagnostics.insert("angular_single".into(), mean(rows.iter().filter_map(|r| r.2)));
        diagnostics.insert("single_light_count".into(), rows.iter().filter(|r| r.2.is_some()).count() as f64);
        Ok(Validation {
            loss: LossReport::mean(&reports).ok_or_else(|| Error::Config("empty validation split".into()))?,
            diagnostics,
        })
    }
}

fn mask_of(t: &Tensor) -> Result<Mask> {
    let (_, h, w) = t.chw()?;
    Mask::new(w, h, t.data()[..w * h].iter().map(|v| *v > 0.5).collect())
}

/// Fails if any withheld ground truth was attached to `tape`.
pub fn audit_firewall(tape: &Tape) -> Result<()> {
    match tape.leaf_tags().find(|t| WITHHELD_TAGS.contains(t)) {
        Some(tag) => Err(Error::InvalidValue(format!("withheld ground truth `{tag}` reached a training graph"))),
        None => Ok(()),
    }
}

struct SmtObjective {
    train: Vec<SmtExample>,
    val: Vec<SmtExample>,
    reference: Vec<SmtReference>,
}

struct SmtGraph {
    terms: crate::losses::SmtTerms,
    derived: crate::losses::SmtDerived,
    m_hat: Var,
    lambda_p: Var,
    iwb: Var,
    #[allow(dead_code)]
    texture: Var,
}

impl SmtObjective {
    fn graph(tape: &mut Tape, net: &UNet, ex: &SmtExample, bound: &[Var], w: &LossWeights) -> Result<SmtGraph> {
        let iwb = tape.tagged_constant(ex.iwb.clone(), "wb_image")?;
        let texture = tape.tagged_constant(ex.texture.clone(), "texture")?;
        let outs = net.forward(tape, iwb, bound)?;
        let (m_hat, lambda_p) = (outs[0], outs[1]);
        let (terms, derived) = smt_objective(tape, iwb, texture, m_hat, lambda_p, w)?;
        audit_firewall(tape)?;
        Ok(SmtGraph {
            terms,
            derived,
            m_hat,
            lambda_p,
            iwb,
            texture,
        })
    }
}

impl Objective for SmtObjective {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn example_grads(&self, net: &UNet, i: usize, w: &LossWeights) -> Result<(LossReport, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape)?;
        let g = Self::graph(&mut tape, net, &self.train[i], &bound, w)?;
        Ok((g.terms.report(&tape, w), collect_grads(&tape, g.terms.total, &bound)?))
    }

    fn validate(&self, net: &UNet, w: &LossWeights) -> Result<Validation> {
        let rows: Vec<(LossReport, [f64; 6])> = self
            .val
            .par_iter()
            .zip(&self.reference)
            .map(|(ex, r)| {
                let mut tape = Tape::new();
                let bound = net.bind_frozen(&mut tape)?;
                let g = Self::graph(&mut tape, net, ex, &bound, w)?;
                let report = g.terms.report(&tape, w);
                // Diagnostics below use withheld ground truth on a tape that
                // is never differentiated.
                let c_r = chromaticity(&mut tape, g.derived.reflectance, DIV_EPS)?;
                let c_wb = chromaticity(&mut tape, g.iwb, DIV_EPS)?;
                let texture = ex.texture.data();
                let r_gt: Vec<f32> = r.material.data().iter().zip(texture).map(|(m, t)| m * t).collect();
                let r_gt = tape.constant(Tensor::new(r.material.shape().to_vec(), r_gt)?)?;
                let c_gt = chromaticity(&mut tape, r_gt, DIV_EPS)?;
                let v = |x: Var| tape.value(x).data();
                Ok((
                    report,
                    [
                        mean_abs(v(g.lambda_p), v(g.derived.shading_estimated)),
                        mean_abs(v(c_r), v(c_wb)),
                        mean_abs(v(g.lambda_p), r.shading.data()),
                        mean_abs(v(g.m_hat), r.material.data()),
                        mean_abs(v(c_r), v(c_gt)),
                        mean_abs(v(g.derived.reconstruction), v(g.iwb)),
                    ],
                ))
            })
            .collect::<Result<_>>()?;
        let names = ["shading_consistency", "chroma_consistency", "shading_gt_err", "material_gt_err", "chroma_gt_err", "recon_l1"];
        let diagnostics = names
            .iter()
            .enumerate()
            .map(|(k, n)| (n.to_string(), mean(rows.iter().map(|r| r.1[k]))))
            .collect();
        let reports: Vec<LossReport> = rows.into_iter().map(|r| r.0).collect();
        Ok(Validation {
            loss: LossReport::mean(&reports).ok_or_else(|| Error::Config("empty validation split".into()))?,
            diagnostics,
        })
    }
}

fn report_record(step: u64, epoch: usize, split: &str, report: &LossReport, extra: &BTreeMap<String, f64>) -> Value {
    let mut m = Map::new();
    m.insert("step".into(), json!(step));
    m.insert("epoch".into(), json!(epoch));
    m.insert("split".into(), json!(split));
    m.insert("loss".into(), json!(report.total));
    for (k, v) in report.terms.iter().chain(extra) {
        m.insert(k.clone(), json!(v));
    }
    Value::Object(m)
}

struct Log {
    out: BufWriter<File>,
}

impl Log {
    /// Opens the log, keeping records up to `keep_step` when resuming.
    fn open(path: &Path, keep_step: Option<u64>) -> Result<Self> {
        let mut kept = Vec::new();
        if let (Some(limit), Ok(f)) = (keep_step, File::open(path)) {
            for line in BufReader::new(f).lines() {
                let line = line?;
                let v: Value = serde_json::from_str(&line)?;
                if v.get("step").and_then(Value::as_u64).is_some_and(|s| s <= limit) {
                    kept.push(line);
                }
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        for line in kept {
            writeln!(out, "{line}")?;
        }
        Ok(Self { out })
    }

    fn write(&mut self, v: &Value) -> Result<()> {
        writeln!(self.out, "{}", serde_json::to_string(v)?)?;
        self.out.flush()?;
        Ok(())
    }
}

fn run(
    stage: &str,
    cfg: &TrainConfig,
    net_config: NetConfig,
    objective: &dyn Objective,
    progress: &mut dyn FnMut(Progress),
) -> Result<TrainSummary> {
    let n = objective.train_len();
    if cfg.batch > n {
        return Err(Error::Config(format!("batch {} exceeds the {n} training samples", cfg.batch)));
    }
    let steps_per_epoch = n.div_ceil(cfg.batch) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let ckpt_dir = cfg.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    fs::write(cfg.out.join("config.json"), serde_json::to_string_pretty(&json!({ "stage": stage, "train": cfg }))?)?;

    let mut net = UNet::new(net_config.clone(), cfg.seed)?;
    let mut adam = Adam::new(cfg.lr, net.params().tensors());
    let mut step = 0u64;
    let mut start_epoch = 0usize;
    if let Some(path) = &cfg.resume {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.config != net_config {
            return Err(Error::CheckpointMismatch(format!("{} was trained with a different network config", path.display())));
        }
        if ckpt.seed != cfg.seed {
            return Err(Error::CheckpointMismatch(format!("{} has seed {}, run uses {}", path.display(), ckpt.seed, cfg.seed)));
        }
        if ckpt.step % steps_per_epoch != 0 {
            return Err(Error::CheckpointMismatch(format!("{} is not at an epoch boundary", path.display())));
        }
        net = ckpt.network()?;
        if let Some((s, m, v)) = ckpt.optimizer_state() {
            adam.restore(s, m, v)?;
        }
        step = ckpt.step;
        start_epoch = (ckpt.step / steps_per_epoch) as usize;
    }
    let mut log = Log::open(&cfg.out.join("log.jsonl"), cfg.resume.as_ref().map(|_| step))?;

    let save = |net: &UNet, adam: &Adam, step: u64, path: &Path| Checkpoint::from_net(net, Some(adam), step, cfg.seed).save(path);
    let epoch_ckpt = |epoch: usize| ckpt_dir.join(format!("epoch_{epoch:03}.ckpt"));

    let initial = objective.validate(&net, &cfg.weights)?;
    if cfg.resume.is_none() {
        log.write(&report_record(step, 0, "val", &initial.loss, &initial.diagnostics))?;
        save(&net, &adam, step, &epoch_ckpt(0))?;
        progress(Progress::Validation { epoch: 0, validation: &initial });
    }

    let mut last = initial.clone();
    let mut skipped = 0u64;
    let mut streak = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in start_epoch + 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1_000_000 + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut epoch_reports = Vec::with_capacity(n);
        for batch in order.chunks(cfg.batch) {
            step += 1;
            adam.lr = cfg.lr_at(step, total_steps);
            let results: Vec<Result<(LossReport, Vec<Tensor>)>> =
                batch.par_iter().map(|&i| objective.example_grads(&net, i, &cfg.weights)).collect();
            let mut reports = Vec::with_capacity(batch.len());
            let mut sum: Option<Vec<Tensor>> = None;
            let mut finite = true;
            for r in results {
                match r {
                    Ok((report, grads)) => {
                        reports.push(report);
                        match &mut sum {
                            None => sum = Some(grads),
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&grads) {
                                    a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                                }
                            }
                        }
                    }
                    Err(Error::NonFiniteDetected(_)) => finite = false,
                    Err(e) => return Err(e),
                }
            }
            let applied = finite
                && match sum {
                    Some(mut grads) => {
                        let k = 1.0 / batch.len() as f32;
                        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= k));
                        match adam.step(net.params_mut().tensors_mut(), &grads) {
                            Ok(()) => true,
                            Err(Error::NonFiniteDetected(_)) => false,
                            Err(e) => return Err(e),
                        }
                    }
                    None => false,
                };
            if applied {
                streak = 0;
                let report = LossReport::mean(&reports).expect("non-empty batch");
                log.write(&report_record(step, epoch, "train", &report, &BTreeMap::new()))?;
                epoch_reports.push(report);
            } else {
                skipped += 1;
                streak += 1;
                log.write(&json!({ "step": step, "epoch": epoch, "split": "train", "skipped": true }))?;
                if streak >= MAX_NONFINITE_STREAK {
                    return Err(Error::NonFiniteDetected(format!("{streak} consecutive training steps")));
                }
            }
        }
        if let Some(r) = LossReport::mean(&epoch_reports) {
            progress(Progress::Epoch { epoch, train: &r });
        }

        if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            last = objective.validate(&net, &cfg.weights)?;
            log.write(&report_record(step, epoch, "val", &last.loss, &last.diagnostics))?;
            save(&net, &adam, step, &epoch_ckpt(epoch))?;
            progress(Progress::Validation { epoch, validation: &last });
        }
    }

    let final_path = cfg.out.join("final.ckpt");
    save(&net, &adam, step, &final_path)?;
    let summary = TrainSummary {
        stage: stage.to_string(),
        epochs: cfg.epochs,
        steps: step,
        skipped_steps: skipped,
        initial,
        last,
        checkpoint: final_path,
    };
    fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Trains the white-balance network. Writes `config.json`, `log.jsonl`,
/// `checkpoints/epoch_NNN.ckpt`, `final.ckpt` and `summary.json` under
/// `cfg.out`.
pub fn train_wbnet(cfg: &TrainConfig, progress: &mut dyn FnMut(Progress)) -> Result<TrainSummary> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest_path())?;
    let objective = WbObjective {
        train: load_wb(&manifest, Split::Train)?,
        val: load_wb(&manifest, Split::Val)?,
    };
    run("wb", cfg, NetConfig::wbnet(cfg.depth, cfg.width), &objective, progress)
}

/// Trains the material/shading network from the separation loss alone.
/// Material and shading ground truth are loaded only for validation
/// diagnostics and never enter a differentiated graph.
pub fn train_smtnet(cfg: &TrainConfig, progress: &mut dyn FnMut(Progress)) -> Result<TrainSummary> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.manifest_path())?;
    let wb_net = cfg.wb_checkpoint.as_deref().map(load_wbnet).transpose()?;
    let source = match &wb_net {
        Some(net) => WbInput::Predicted(net),
        None => WbInput::GroundTruth,
    };
    let objective = SmtObjective {
        train: load_smt(&manifest, Split::Train, &source)?,
        val: load_smt(&manifest, Split::Val, &source)?,
        reference: load_smt_reference(&manifest, Split::Val)?,
    };
    run("smt", cfg, NetConfig::smtnet(cfg.depth, cfg.width), &objective, progress)
}

/// Ignores progress events.
pub fn quiet(_: Progress) {}
