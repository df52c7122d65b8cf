//! Scratch calibration run: overfit timing on the desk profile.

use std::time::Instant;

use floorvec::data::{generate_dataset, image_to_input, GeneratorConfig};
use floorvec::metrics::evaluate_dataset;
use floorvec::model::{Model, ModelConfig};
use floorvec::tensor::AdamWConfig;
use floorvec::train::{train_ctl, LossWeights, Sample, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let clip: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let bs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8);
    let jitter: f64 = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let eval_every: usize = args.get(11).and_then(|s| s.parse().ok()).unwrap_or(0);
    let lr_final: f64 = args.get(12).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let mut mcfg = ModelConfig::desk();
    mcfg.dropout = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    mcfg.feat_fusion = args.get(8).map(|s| s != "nofuse").unwrap_or(true);
    let gcfg = GeneratorConfig { seed: 7, ..GeneratorConfig::default() };
    let t0 = Instant::now();
    let records = generate_dataset(&gcfg, n, mcfg.seq_len).unwrap();
    let samples: Vec<Sample<f32>> = records
        .iter()
        .map(|r| {
            let img = image_to_input::<f32>(&r.image, mcfg.in_channels);
            Sample::from_floorplan(&mcfg, img, &r.floorplan).unwrap()
        })
        .collect();
    println!("data: {} samples in {:.1?}", samples.len(), t0.elapsed());

    let ckpt = std::env::var("CKPT").ok();
    let mut model = match &ckpt {
        Some(path) if std::path::Path::new(path).exists() => {
            println!("resuming from {path}");
            floorvec::model::load_checkpoint::<f32>(std::path::Path::new(path)).unwrap()
        }
        _ => Model::<f32>::new(mcfg.clone(), 42),
    };
    let tcfg = TrainConfig {
        epochs,
        batch_size: bs,
        optim: AdamWConfig { lr, max_grad_norm: clip, ..AdamWConfig::default() },
        weights: LossWeights {
            token: args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1.0),
            coord: args.get(9).and_then(|s| s.parse().ok()).unwrap_or(20.0),
            ..LossWeights::default()
        },
        coord_jitter: jitter,
        lr_final_factor: lr_final,
        seed: 1,
    };

    let gen_f1 = |m: &Model<f32>| -> (f64, f64) {
        let pairs: Vec<_> = records
            .iter()
            .map(|r| {
                let img = image_to_input::<f32>(&r.image, mcfg.in_channels);
                (r.floorplan.clone(), m.generate(&img).floorplan)
            })
            .collect();
        let rep = evaluate_dataset(pairs.iter().map(|(g, p)| (g, p))).unwrap();
        (rep.room.f1, rep.corner.f1)
    };

    let t1 = Instant::now();
    let mut best: Option<(f64, f64, usize, Vec<floorvec::DenseArray<f32>>)> = None;
    let report = train_ctl(&mut model, &samples, &tcfg, |log, m| {
        if log.epoch % 5 == 0 || log.epoch + 1 == epochs {
            println!(
                "epoch {:>4}  total {:>9.4}  coord {:>8.4}  token {:>8.4}  sem {:>8.4}  |g| {:>8.3}  t {:.0?}",
                log.epoch, log.total, log.coord, log.token, log.sem, log.grad_norm, t1.elapsed()
            );
        }
        if eval_every > 0 && (log.epoch + 1) % eval_every == 0 {
            let (rf1, cf1) = gen_f1(m);
            println!("  eval @ {:>4}: room F1 {rf1:.3}  corner F1 {cf1:.3}", log.epoch);
            let better = best.as_ref().map(|(r, c, _, _)| (rf1, cf1) > (*r, *c)).unwrap_or(true);
            if better {
                best = Some((rf1, cf1, log.epoch, m.store.snapshot()));
            }
            if rf1 >= 0.95 && cf1 >= 0.85 {
                return false;
            }
        }
        true
    })
    .unwrap();
    println!("trained {} epochs in {:.1?}", report.epochs.len(), t1.elapsed());
    if let Some((rf1, cf1, ep, snap)) = &best {
        println!("best eval: room F1 {rf1:.3} corner F1 {cf1:.3} at epoch {ep}");
        model.store.restore(snap);
    }
    if let Some(path) = &ckpt {
        floorvec::model::save_checkpoint(&model, std::path::Path::new(path)).unwrap();
    }

    let t2 = Instant::now();
    let pairs: Vec<_> = records
        .iter()
        .map(|r| {
            let img = image_to_input::<f32>(&r.image, mcfg.in_channels);
            (r.floorplan.clone(), model.generate(&img).floorplan)
        })
        .collect();
    let rep = evaluate_dataset(pairs.iter().map(|(g, p)| (g, p))).unwrap();
    if std::env::var("DUMP").is_ok() {
        let (g0, p0) = &pairs[0];
        println!("GT:   {}", serde_json::to_string(g0).unwrap());
        println!("PRED: {}", serde_json::to_string(p0).unwrap());
    }
    println!(
        "gen+eval in {:.1?}: room F1 {:.3}  corner F1 {:.3}  angle F1 {:.3}  sem F1 {:.3}  wd F1 {:.3}  segIoU {:.3}",
        t2.elapsed(),
        rep.room.f1,
        rep.corner.f1,
        rep.angle.f1,
        rep.room_semantic.f1,
        rep.window_door.f1,
        rep.segmentation.iou
    );
}
