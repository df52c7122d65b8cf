//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use floorvec::data::{
    export_svg, generate_dataset, image_to_input, load_dataset, save_dataset, validate_xml,
    DatasetRecord,
};
use floorvec::geometry::Floorplan;
use floorvec::metrics::{evaluate_dataset, MetricsReport};
use floorvec::model::{load_checkpoint, save_checkpoint, Model};
use floorvec::train::{train_ctl, Sample};
use floorvec::DenseArray;

use crate::config::{echo_config, AppConfig};

/// Generate `count` records and persist them with the effective config.
pub fn gen_data(cfg: &AppConfig, count: usize, out: &Path) -> Result<()> {
    cfg.generator.validate().context("generator config")?;
    cfg.model.validate().context("model config")?;
    let t0 = Instant::now();
    let records = generate_dataset(&cfg.generator, count, cfg.model.seq_len)
        .context("generating dataset")?;
    save_dataset(out, &cfg.generator, &records).context("saving dataset")?;
    echo_config(cfg, out)?;
    println!("wrote {} records to {} in {:.1?}", records.len(), out.display(), t0.elapsed());
    Ok(())
}

/// Periodic free-running evaluation settings for `train`.
pub struct EvalPolicy {
    /// Evaluate every this many epochs; 0 disables.
    pub every: usize,
    /// Cap on how many training records each evaluation generates.
    pub count: Option<usize>,
    /// Stop early once room F1 reaches this.
    pub stop_room_f1: Option<f64>,
    /// Stop early once corner F1 also reaches this.
    pub stop_corner_f1: Option<f64>,
}

/// Train a fresh model on a saved dataset; keep the best-evaluated weights.
pub fn train(cfg: &AppConfig, data: &Path, out: &Path, policy: &EvalPolicy) -> Result<()> {
    cfg.model.validate().context("model config")?;
    let (_, records) = load_dataset(data).context("loading dataset")?;
    if records.is_empty() {
        bail!("dataset {} is empty", data.display());
    }
    check_resolution(&records, &cfg.model)?;
    let samples: Vec<Sample<f32>> = records
        .iter()
        .map(|r| {
            let img = image_to_input::<f32>(&r.image, cfg.model.in_channels);
            Sample::from_floorplan(&cfg.model, img, &r.floorplan)
                .with_context(|| format!("record {}", r.id))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    echo_config(cfg, out)?;
    let log_path = out.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;

    let mut model = Model::<f32>::new(cfg.model.clone(), cfg.train.seed);
    let eval_n = policy.count.unwrap_or(records.len()).min(records.len());
    let mut best: Option<(f64, f64, usize, Vec<DenseArray<f32>>)> = None;
    let t0 = Instant::now();
    let report = train_ctl(&mut model, &samples, &cfg.train, |log, m| {
        let line = serde_json::json!({
            "epoch": log.epoch, "total": log.total, "coord": log.coord,
            "token": log.token, "sem": log.sem, "grad_norm": log.grad_norm,
        });
        let _ = writeln!(log_file, "{line}");
        if log.epoch % 10 == 0 {
            println!(
                "epoch {:>4}  total {:>9.4}  coord {:>8.4}  token {:>8.4}  sem {:>8.4}  t {:.0?}",
                log.epoch, log.total, log.coord, log.token, log.sem, t0.elapsed()
            );
        }
        if policy.every > 0 && (log.epoch + 1) % policy.every == 0 {
            let rep = free_running_report(m, &records[..eval_n], &cfg.model);
            let (rf1, cf1) = (rep.room.f1, rep.corner.f1);
            let line = serde_json::json!({"epoch": log.epoch, "room_f1": rf1, "corner_f1": cf1});
            let _ = writeln!(log_file, "{line}");
            println!("  eval @ {:>4}: room F1 {rf1:.3}  corner F1 {cf1:.3}", log.epoch);
            let better = best.as_ref().map_or(true, |(r, c, _, _)| (rf1, cf1) > (*r, *c));
            if better {
                best = Some((rf1, cf1, log.epoch, m.store.snapshot()));
            }
            let room_done = policy.stop_room_f1.map_or(false, |t| rf1 >= t);
            let corner_done = policy.stop_corner_f1.map_or(true, |t| cf1 >= t);
            if policy.stop_room_f1.is_some() && room_done && corner_done {
                return false;
            }
        }
        true
    })
    .context("training")?;

    if let Some((rf1, cf1, epoch, snap)) = &best {
        println!("keeping epoch-{epoch} weights (room F1 {rf1:.3}, corner F1 {cf1:.3})");
        model.store.restore(snap);
    }
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&model, &ckpt).context("saving checkpoint")?;
    println!(
        "trained {} epochs in {:.1?}; checkpoint at {}",
        report.epochs.len(),
        t0.elapsed(),
        ckpt.display()
    );
    Ok(())
}

/// Run generation over a dataset's images, writing one prediction JSON per
/// record (and optionally an SVG rendering).
pub fn infer(checkpoint: &Path, data: &Path, out: &Path, svg: bool) -> Result<()> {
    let model = load_checkpoint::<f32>(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let (_, records) = load_dataset(data).context("loading dataset")?;
    check_resolution(&records, &model.cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let t0 = Instant::now();
    let mut truncated = 0usize;
    for r in &records {
        let img = image_to_input::<f32>(&r.image, model.cfg.in_channels);
        let gen = model.generate(&img);
        truncated += usize::from(gen.truncated);
        let path = out.join(format!("{:05}.json", r.id));
        write_plan(&gen.floorplan, &path)?;
        if svg {
            let doc = export_svg(&gen.floorplan);
            fs::write(out.join(format!("{:05}.svg", r.id)), doc)
                .with_context(|| format!("writing SVG for record {}", r.id))?;
        }
    }
    println!(
        "generated {} predictions ({} truncated) to {} in {:.1?}",
        records.len(),
        truncated,
        out.display(),
        t0.elapsed()
    );
    Ok(())
}

/// Score predictions against ground truth matched by file stem.
pub fn eval(pred: &Path, gt: &Path, out: Option<&Path>) -> Result<MetricsReport> {
    let pred_files = plan_files(pred)?;
    let gt_files = plan_files(gt)?;
    let stems = |v: &[PathBuf]| -> Vec<String> {
        v.iter().map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect()
    };
    if stems(&pred_files) != stems(&gt_files) {
        bail!(
            "prediction and ground-truth sets differ: {} vs {} plans",
            pred_files.len(),
            gt_files.len()
        );
    }
    if pred_files.is_empty() {
        bail!("no plan files under {}", pred.display());
    }
    let preds: Vec<Floorplan> = pred_files.iter().map(|p| read_plan(p)).collect::<Result<_>>()?;
    let gts: Vec<Floorplan> = gt_files.iter().map(|p| read_plan(p)).collect::<Result<_>>()?;
    let report = evaluate_dataset(gts.iter().zip(&preds)).context("evaluating")?;
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report).context("serializing report")?;
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "plans {}  room F1 {:.3}  corner F1 {:.3}  angle F1 {:.3}  sem F1 {:.3}  \
         window/door F1 {:.3}  seg IoU {:.3}",
        pred_files.len(),
        report.room.f1,
        report.corner.f1,
        report.angle.f1,
        report.room_semantic.f1,
        report.window_door.f1,
        report.segmentation.iou
    );
    Ok(report)
}

/// Render floorplan JSON (one file or a directory) to SVG files.
pub fn export(input: &Path, out: &Path) -> Result<()> {
    let files = if input.is_dir() { plan_files(input)? } else { vec![input.to_path_buf()] };
    if files.is_empty() {
        bail!("no plan files under {}", input.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for f in &files {
        let plan = read_plan(f)?;
        let doc = export_svg(&plan);
        validate_xml(&doc).map_err(|e| anyhow::anyhow!("internal SVG error: {e}"))?;
        let stem = f.file_stem().unwrap_or_default().to_string_lossy();
        fs::write(out.join(format!("{stem}.svg")), doc)
            .with_context(|| format!("writing SVG for {}", f.display()))?;
    }
    println!("rendered {} SVG files to {}", files.len(), out.display());
    Ok(())
}

/// Generate on `records` and report pooled metrics against their plans.
fn free_running_report(
    model: &Model<f32>,
    records: &[DatasetRecord],
    cfg: &floorvec::model::ModelConfig,
) -> MetricsReport {
    let pairs: Vec<(Floorplan, Floorplan)> = records
        .iter()
        .map(|r| {
            let img = image_to_input::<f32>(&r.image, cfg.in_channels);
            (r.floorplan.clone(), model.generate(&img).floorplan)
        })
        .collect();
    evaluate_dataset(pairs.iter().map(|(g, p)| (g, p))).expect("same-resolution pairs")
}

fn check_resolution(records: &[DatasetRecord], cfg: &floorvec::model::ModelConfig) -> Result<()> {
    for r in records {
        if r.image.width != cfg.image_size || r.image.height != cfg.image_size {
            bail!(
                "record {id} is {w}x{h} but the model expects {s}x{s}",
                id = r.id,
                w = r.image.width,
                h = r.image.height,
                s = cfg.image_size
            );
        }
    }
    Ok(())
}

/// Plan files of a directory: `plans/` inside a dataset, else its `*.json`.
fn plan_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let root =
        if dir.join("manifest.json").is_file() { dir.join("plans") } else { dir.to_path_buf() };
    let mut out = Vec::new();
    let entries =
        fs::read_dir(&root).with_context(|| format!("listing {}", root.display()))?;
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", root.display()))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_plan(path: &Path) -> Result<Floorplan> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_plan(plan: &Floorplan, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(plan).context("serializing floorplan")?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}
