//! Scratch calibration probe for the reduced generalization benchmark:
//! `smallbench <train_n> <eval_n> <epochs> <variant: full|fixed|nofuse> [seed]`

use std::time::Instant;

use floorvec::data::{generate_dataset, image_to_input, GeneratorConfig};
use floorvec::geometry::Floorplan;
use floorvec::metrics::evaluate_dataset;
use floorvec::model::{AnchorMode, Model, ModelConfig};
use floorvec::tensor::AdamWConfig;
use floorvec::train::{train_ctl, LossWeights, Sample, TrainConfig};
use floorvec::DenseArray;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let train_n: usize = args[1].parse().unwrap();
    let eval_n: usize = args[2].parse().unwrap();
    let epochs: usize = args[3].parse().unwrap();
    let variant = args.get(4).map(String::as_str).unwrap_or("full").to_string();
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(5);

    let gcfg = GeneratorConfig {
        image_size: 64,
        margin: 4,
        rooms_min: 2,
        rooms_max: 4,
        min_room_side: 12,
        wall_px: 2,
        merge_prob: 0.2,
        door_rate: 0.7,
        window_rate: 0.5,
        ..GeneratorConfig::default()
    };
    let mut mcfg = ModelConfig::desk();
    mcfg.image_size = 64;
    mcfg.backbone_channels = vec![16, 32, 64];
    mcfg.hidden = 64;
    mcfg.ffn = 256;
    mcfg.heads = 4;
    mcfg.enc_layers = 1;
    mcfg.dec_layers = 1;
    mcfg.seq_len = 128;
    mcfg.bins = 16;
    mcfg.dropout = 0.0;
    match variant.as_str() {
        "full" => {}
        "fixed" => mcfg.anchor_mode = AnchorMode::FixedGrid,
        "nofuse" => mcfg.feat_fusion = false,
        other => panic!("unknown variant {other}"),
    }
    let tcfg = TrainConfig {
        epochs,
        batch_size: 8,
        optim: AdamWConfig { lr: 1e-3, max_grad_norm: 1.0, ..AdamWConfig::default() },
        weights: LossWeights { coord: 1.0, token: 5.0, sem: 1.0 },
        coord_jitter: 2.0,
        lr_final_factor: 0.2,
        seed,
    };

    let t0 = Instant::now();
    let records = generate_dataset(&gcfg, train_n + eval_n, mcfg.seq_len).unwrap();
    println!("generated {} records in {:.1?}", records.len(), t0.elapsed());
    let (train_recs, eval_recs) = records.split_at(train_n);
    let train_samples: Vec<Sample<f32>> = train_recs
        .iter()
        .map(|r| {
            let img = image_to_input::<f32>(&r.image, mcfg.in_channels);
            Sample::from_floorplan(&mcfg, img, &r.floorplan).expect("fits")
        })
        .collect();
    let held_out: Vec<(Floorplan, DenseArray<f32>)> = eval_recs
        .iter()
        .map(|r| (r.floorplan.clone(), image_to_input::<f32>(&r.image, mcfg.in_channels)))
        .collect();

    let score = |model: &Model<f32>, n: usize| -> (f64, f64) {
        let pairs: Vec<(Floorplan, Floorplan)> = held_out[..n.min(held_out.len())]
            .iter()
            .map(|(fp, img)| (fp.clone(), model.generate(img).floorplan))
            .collect();
        let rep = evaluate_dataset(pairs.iter().map(|(g, p)| (g, p))).unwrap();
        (rep.room.f1, rep.corner.f1)
    };

    let mut model = Model::<f32>::new(mcfg.clone(), tcfg.seed);
    let mut last = Instant::now();
    train_ctl(&mut model, &train_samples, &tcfg, |log, m| {
        let dt = last.elapsed();
        last = Instant::now();
        print!(
            "epoch {:>3}  total {:>8.4}  coord {:>7.4}  token {:>7.4}  sem {:>7.4}  t {:>5.1?}",
            log.epoch, log.total, log.coord, log.token, log.sem, dt
        );
        if (log.epoch + 1) % 2 == 0 {
            let (rf1, cf1) = score(m, 50);
            println!("  | eval50 room {rf1:.3} corner {cf1:.3}");
        } else {
            println!();
        }
        true
    })
    .unwrap();

    let (rf1, cf1) = score(&model, held_out.len());
    println!(
        "[{variant}] final held-out ({} plans): room F1 {rf1:.3}  corner F1 {cf1:.3}  total {:.1?}",
        held_out.len(),
        t0.elapsed()
    );
}
