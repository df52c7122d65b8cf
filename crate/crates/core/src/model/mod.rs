//! The anchor-guided encoder–decoder.
//!
//! A small convolutional backbone downsamples the raster image into a feature
//! map, transformer encoder layers refine it, and a causal transformer
//! decoder emits per-position predictions: a 3-way token type (corner / sep /
//! eos), a semantic class, and continuous (x, y) coordinates. Each decoder
//! query position `l` owns a 2-D anchor; its sigmoid is both the reference
//! point for deformable image sampling and the base of the coordinate head,
//! which predicts `S * sigmoid(anchor + delta)`.
//!
//! Corner coordinates are embedded by bilinear interpolation into a learned
//! `bins x bins` codebook grid, so the embedding is differentiable in the
//! coordinates and exact at grid nodes.

mod checkpoint;
mod forward;
mod state;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use forward::TeacherOutputs;
pub use state::{DecoderState, StepOutput};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::ClassSpec;
use crate::scalar::Scalar;
use crate::tensor::array::DenseArray;
use crate::tensor::params::{normal_init, xavier_uniform, ParamId, ParamStore};

/// How decoder anchors are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Grid-initialized, trained with everything else (the full model).
    Learnable,
    /// Random positions, never updated.
    FrozenRandom,
    /// Uniform grid positions, never updated (ablation baseline).
    FixedGrid,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Square raster input size S; coordinates live in `[0, S]`.
    pub image_size: usize,
    pub in_channels: usize,
    /// Output channels of each stride-2 backbone stage; the last must equal
    /// `hidden`.
    pub backbone_channels: Vec<usize>,
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Deformable sampling points per attention head.
    pub points: usize,
    /// Maximum token sequence length (one anchor per position).
    pub seq_len: usize,
    /// Coordinate codebook resolution per axis.
    pub bins: usize,
    pub room_classes: usize,
    pub dropout: f64,
    pub anchor_mode: AnchorMode,
    /// When true, decoder self-attention keys/values include the encoded
    /// image tokens; when false they cover only the polygon tokens.
    pub feat_fusion: bool,
}

/// Configuration errors surfaced before building a model.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("hidden size {0} must be divisible by 4 (positional features) and by heads {1}")]
    BadHidden(usize, usize),
    #[error("image size {0} is not divisible by 2^{1} (backbone stages)")]
    BadImageSize(usize, usize),
    #[error("last backbone channel {0} must equal hidden size {1}")]
    BackboneMismatch(usize, usize),
    #[error("need at least one {0}")]
    Empty(&'static str),
    #[error("bins must be >= 2, got {0}")]
    BadBins(usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Desk-scale profile: trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            image_size: 128,
            in_channels: 1,
            backbone_channels: vec![32, 64, 128],
            hidden: 128,
            ffn: 512,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            points: 4,
            seq_len: 256,
            bins: 32,
            room_classes: 6,
            dropout: 0.1,
            anchor_mode: AnchorMode::Learnable,
            feat_fusion: true,
        }
    }

    /// Full-scale profile (reference only; training it needs GPU-days).
    pub fn full() -> Self {
        Self {
            image_size: 256,
            in_channels: 1,
            backbone_channels: vec![32, 64, 128, 256],
            hidden: 256,
            ffn: 1024,
            heads: 8,
            enc_layers: 6,
            dec_layers: 6,
            points: 4,
            seq_len: 512,
            bins: 32,
            room_classes: 6,
            dropout: 0.1,
            anchor_mode: AnchorMode::Learnable,
            feat_fusion: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden % 4 != 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(ConfigError::BadHidden(self.hidden, self.heads));
        }
        if self.backbone_channels.is_empty() {
            return Err(ConfigError::Empty("backbone stage"));
        }
        let stages = self.backbone_channels.len();
        if self.image_size == 0 || self.image_size % (1 << stages) != 0 {
            return Err(ConfigError::BadImageSize(self.image_size, stages));
        }
        if *self.backbone_channels.last().unwrap() != self.hidden {
            return Err(ConfigError::BackboneMismatch(*self.backbone_channels.last().unwrap(), self.hidden));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(ConfigError::Empty("encoder/decoder layer"));
        }
        if self.seq_len == 0 || self.points == 0 || self.room_classes == 0 {
            return Err(ConfigError::Empty("seq position / sampling point / room class"));
        }
        if self.bins < 2 {
            return Err(ConfigError::BadBins(self.bins));
        }
        Ok(())
    }

    /// Feature map side length after the backbone.
    pub fn feat_side(&self) -> usize {
        self.image_size >> self.backbone_channels.len()
    }

    /// Number of image tokens entering the encoder.
    pub fn image_tokens(&self) -> usize {
        self.feat_side() * self.feat_side()
    }

    pub fn class_spec(&self) -> ClassSpec {
        ClassSpec { room_classes: self.room_classes }
    }

    /// Total semantic classes (rooms + window + door).
    pub fn classes(&self) -> usize {
        self.class_spec().total()
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

pub(crate) struct LnIds {
    pub g: ParamId,
    pub b: ParamId,
}

pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

pub(crate) struct DeformIds {
    pub w_val: ParamId,
    pub b_val: ParamId,
    pub w_off: ParamId,
    pub b_off: ParamId,
    pub w_att: ParamId,
    pub b_att: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

pub(crate) struct EncLayerIds {
    pub ln1: LnIds,
    pub attn: AttnIds,
    pub ln2: LnIds,
    pub ffn: FfnIds,
}

pub(crate) struct DecLayerIds {
    pub ln1: LnIds,
    pub self_attn: AttnIds,
    pub ln2: LnIds,
    pub deform: DeformIds,
    pub ln3: LnIds,
    pub ffn: FfnIds,
}

pub(crate) struct HeadIds {
    pub token_w: ParamId,
    pub token_b: ParamId,
    pub sem_w: ParamId,
    pub sem_b: ParamId,
    pub coord_w: ParamId,
    pub coord_b: ParamId,
}

pub(crate) struct ParamIds {
    pub convs: Vec<(ParamId, ParamId)>,
    pub enc: Vec<EncLayerIds>,
    pub enc_final_ln: LnIds,
    pub dec: Vec<DecLayerIds>,
    pub dec_final_ln: LnIds,
    pub kind_emb: ParamId,
    pub class_emb: ParamId,
    pub codebook: ParamId,
    pub anchors: ParamId,
    pub anchor_pe_w: ParamId,
    pub anchor_pe_b: ParamId,
    pub heads: HeadIds,
}

/// The model: a config plus its parameter store.
pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    pub store: ParamStore<T>,
    pub(crate) ids: ParamIds,
}

impl<T: Scalar> std::fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("cfg", &self.cfg)
            .field("elements", &self.store.element_count())
            .finish()
    }
}

impl<T: Scalar> Model<T> {
    /// Build a freshly initialized model. Initialization draws from a ChaCha
    /// stream in f64, so a given seed yields the same model in f32 and f64.
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        cfg.validate().expect("invalid model config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.hidden;

        let ln = |store: &mut ParamStore<T>, name: &str| LnIds {
            g: store.register(&format!("{name}.g"), DenseArray::filled(&[d], T::one()), true),
            b: store.register(&format!("{name}.b"), DenseArray::zeros(&[d]), true),
        };
        let linear = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
            (
                store.register(&format!("{name}.w"), xavier_uniform(rng, i, o), true),
                store.register(&format!("{name}.b"), DenseArray::zeros(&[o]), true),
            )
        };

        let mut convs = Vec::new();
        let mut cin = cfg.in_channels;
        for (i, &cout) in cfg.backbone_channels.iter().enumerate() {
            let (w, b) = linear(&mut store, &mut rng, &format!("backbone.{i}"), 9 * cin, cout);
            convs.push((w, b));
            cin = cout;
        }

        let attn = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str| {
            let (wq, bq) = linear(store, rng, &format!("{name}.q"), d, d);
            let (wk, bk) = linear(store, rng, &format!("{name}.k"), d, d);
            let (wv, bv) = linear(store, rng, &format!("{name}.v"), d, d);
            let (wo, bo) = linear(store, rng, &format!("{name}.o"), d, d);
            AttnIds { wq, bq, wk, bk, wv, bv, wo, bo }
        };
        let ffn = |store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str| {
            let (w1, b1) = linear(store, rng, &format!("{name}.1"), d, cfg.ffn);
            let (w2, b2) = linear(store, rng, &format!("{name}.2"), cfg.ffn, d);
            FfnIds { w1, b1, w2, b2 }
        };

        let mut enc = Vec::new();
        for i in 0..cfg.enc_layers {
            enc.push(EncLayerIds {
                ln1: ln(&mut store, &format!("enc.{i}.ln1")),
                attn: attn(&mut store, &mut rng, &format!("enc.{i}.attn")),
                ln2: ln(&mut store, &format!("enc.{i}.ln2")),
                ffn: ffn(&mut store, &mut rng, &format!("enc.{i}.ffn")),
            });
        }
        let enc_final_ln = ln(&mut store, "enc.final_ln");

        let hk = cfg.heads * cfg.points;
        let mut dec = Vec::new();
        for i in 0..cfg.dec_layers {
            let ln1 = ln(&mut store, &format!("dec.{i}.ln1"));
            let self_attn = attn(&mut store, &mut rng, &format!("dec.{i}.self_attn"));
            let ln2 = ln(&mut store, &format!("dec.{i}.ln2"));
            let (w_val, b_val) = linear(&mut store, &mut rng, &format!("dec.{i}.deform.val"), d, d);
            // Offsets and weights start near zero: initial sampling sits at
            // the reference point with uniform point weights.
            let w_off = store.register(
                &format!("dec.{i}.deform.off.w"),
                normal_init(&mut rng, &[d, hk * 2], 0.01),
                true,
            );
            let b_off = store.register(&format!("dec.{i}.deform.off.b"), DenseArray::zeros(&[hk * 2]), true);
            let w_att = store.register(
                &format!("dec.{i}.deform.att.w"),
                normal_init(&mut rng, &[d, hk], 0.01),
                true,
            );
            let b_att = store.register(&format!("dec.{i}.deform.att.b"), DenseArray::zeros(&[hk]), true);
            let (w_out, b_out) = linear(&mut store, &mut rng, &format!("dec.{i}.deform.out"), d, d);
            let ln3 = ln(&mut store, &format!("dec.{i}.ln3"));
            let f = ffn(&mut store, &mut rng, &format!("dec.{i}.ffn"));
            dec.push(DecLayerIds {
                ln1,
                self_attn,
                ln2,
                deform: DeformIds { w_val, b_val, w_off, b_off, w_att, b_att, w_out, b_out },
                ln3,
                ffn: f,
            });
        }
        let dec_final_ln = ln(&mut store, "dec.final_ln");

        let kind_emb = store.register("embed.kind", normal_init(&mut rng, &[4, d], 0.02), true);
        let class_emb =
            store.register("embed.class", normal_init(&mut rng, &[cfg.classes(), d], 0.02), true);
        let codebook = store.register(
            "embed.codebook",
            normal_init(&mut rng, &[cfg.bins * cfg.bins, d], 0.02),
            true,
        );

        let (anchor_init, anchors_trainable) = match cfg.anchor_mode {
            AnchorMode::Learnable => (anchor_grid_logits::<T>(cfg.seq_len), true),
            AnchorMode::FixedGrid => (anchor_grid_logits::<T>(cfg.seq_len), false),
            AnchorMode::FrozenRandom => (anchor_random_logits::<T>(cfg.seq_len, &mut rng), false),
        };
        let anchors = store.register("anchor.logits", anchor_init, anchors_trainable);
        let (anchor_pe_w, anchor_pe_b) = linear(&mut store, &mut rng, "anchor.pe", d, d);

        let (token_w, token_b) = linear(&mut store, &mut rng, "head.token", d, 3);
        let (sem_w, sem_b) = linear(&mut store, &mut rng, "head.sem", d, cfg.classes());
        let (coord_w, coord_b) = linear(&mut store, &mut rng, "head.coord", d, 2);

        let ids = ParamIds {
            convs,
            enc,
            enc_final_ln,
            dec,
            dec_final_ln,
            kind_emb,
            class_emb,
            codebook,
            anchors,
            anchor_pe_w,
            anchor_pe_b,
            heads: HeadIds { token_w, token_b, sem_w, sem_b, coord_w, coord_b },
        };
        Self { cfg, store, ids }
    }

    /// Map image coordinates to continuous codebook bin units: `[0, S]` maps
    /// linearly onto `[0, bins-1]`.
    pub fn coord_to_bin_units(&self, x: f64, y: f64) -> (f64, f64) {
        let s = (self.cfg.bins - 1) as f64 / self.cfg.image_size as f64;
        (x * s, y * s)
    }

    /// Coordinate embedding: bilinear blend of the four surrounding codebook
    /// rows (exact at grid nodes, weights summing to 1).
    pub fn quantize_embed(&self, x: f64, y: f64) -> DenseArray<T> {
        let (bx, by) = self.coord_to_bin_units(x, y);
        let book = self.store.value(self.ids.codebook);
        let d = book.cols();
        let mut out = vec![T::zero(); d];
        for ((ix, iy), w) in bilinear_weights(bx, by, self.cfg.bins) {
            let row = &book.data()[(iy * self.cfg.bins + ix) * d..(iy * self.cfg.bins + ix + 1) * d];
            let wt = T::from_f64_lossy(w);
            for (o, &e) in out.iter_mut().zip(row) {
                *o += wt * e;
            }
        }
        DenseArray::from_vec(&[d], out)
    }
}

/// The four (cell, weight) terms of the clamped bilinear quantizer on a
/// `bins x bins` grid, for a point already in bin units. Weights are
/// `(1-fx)(1-fy), fx(1-fy), (1-fx)fy, fx fy` over the cells
/// `(x0,y0), (x1,y0), (x0,y1), (x1,y1)` with `x1 = min(x0+1, bins-1)`; they
/// always sum to exactly 1 and collapse onto a single cell at grid nodes.
pub fn bilinear_weights(x: f64, y: f64, bins: usize) -> [((usize, usize), f64); 4] {
    let max = (bins - 1) as f64;
    let cx = x.clamp(0.0, max);
    let cy = y.clamp(0.0, max);
    let x0 = cx.floor() as usize;
    let y0 = cy.floor() as usize;
    let x1 = (x0 + 1).min(bins - 1);
    let y1 = (y0 + 1).min(bins - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    [
        ((x0, y0), (1.0 - fx) * (1.0 - fy)),
        ((x1, y0), fx * (1.0 - fy)),
        ((x0, y1), (1.0 - fx) * fy),
        ((x1, y1), fx * fy),
    ]
}

/// Anchor logits for a uniform grid covering the unit square.
fn anchor_grid_logits<T: Scalar>(n: usize) -> DenseArray<T> {
    let side = (n as f64).sqrt().ceil() as usize;
    let mut data = Vec::with_capacity(n * 2);
    for l in 0..n {
        let gx = (l % side) as f64;
        let gy = (l / side) as f64;
        let u = (gx + 0.5) / side as f64;
        let v = (gy + 0.5) / side as f64;
        data.push(T::from_f64_lossy(logit(u)));
        data.push(T::from_f64_lossy(logit(v)));
    }
    DenseArray::from_vec(&[n, 2], data)
}

fn anchor_random_logits<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> DenseArray<T> {
    use rand::Rng;
    let data = (0..n * 2).map(|_| T::from_f64_lossy(logit(rng.gen_range(0.05..0.95)))).collect();
    DenseArray::from_vec(&[n, 2], data)
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Sinusoidal features of 2-D positions in `[0,1]^2`, laid out as
/// `[sin(f(x)..), sin(f(y)..), cos(f(x)..), cos(f(y)..)]` with `hidden/4`
/// geometric frequencies per axis — `hidden` features total.
pub(crate) fn positional_features<T: Scalar>(uv: &[(f64, f64)], hidden: usize) -> DenseArray<T> {
    let nf = hidden / 4;
    let mut data = Vec::with_capacity(uv.len() * hidden);
    for &(u, v) in uv {
        let mut args = Vec::with_capacity(nf * 2);
        for k in 0..nf {
            let omega = 10_000f64.powf(-(k as f64) / nf as f64);
            args.push(u * std::f64::consts::TAU * omega);
        }
        for k in 0..nf {
            let omega = 10_000f64.powf(-(k as f64) / nf as f64);
            args.push(v * std::f64::consts::TAU * omega);
        }
        for &a in &args {
            data.push(T::from_f64_lossy(a.sin()));
        }
        for &a in &args {
            data.push(T::from_f64_lossy(a.cos()));
        }
    }
    DenseArray::from_vec(&[uv.len(), hidden], data)
}

/// The frequency matrix used to build anchor positional features on the
/// graph: `ref01 [L,2] x freq [2, hidden/2]` gives sin/cos arguments matching
/// [`positional_features`].
pub(crate) fn pe_frequency_matrix<T: Scalar>(hidden: usize) -> DenseArray<T> {
    let nf = hidden / 4;
    let cols = hidden / 2;
    let mut m = DenseArray::zeros(&[2, cols]);
    for k in 0..nf {
        let omega = 10_000f64.powf(-(k as f64) / nf as f64) * std::f64::consts::TAU;
        m.set(0, k, T::from_f64_lossy(omega));
        m.set(1, nf + k, T::from_f64_lossy(omega));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid_and_model_builds() {
        let cfg = ModelConfig::desk();
        cfg.validate().unwrap();
        assert_eq!(cfg.feat_side(), 16);
        assert_eq!(cfg.image_tokens(), 256);
        assert_eq!(cfg.classes(), 8);
        let m: Model<f32> = Model::new(cfg, 1);
        // Around a million parameters at desk scale.
        let n = m.store.element_count();
        assert!((500_000..3_000_000).contains(&n), "unexpected param count {n}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ModelConfig::desk();
        cfg.backbone_channels = vec![32, 64, 100];
        assert!(matches!(cfg.validate(), Err(ConfigError::BackboneMismatch(100, 128))));
        let mut cfg = ModelConfig::desk();
        cfg.image_size = 100; // not divisible by 8
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk();
        cfg.hidden = 126;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::desk();
        cfg.bins = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a: Model<f32> = Model::new(ModelConfig::desk(), 7);
        let b: Model<f32> = Model::new(ModelConfig::desk(), 7);
        let c: Model<f32> = Model::new(ModelConfig::desk(), 8);
        let id = a.store.id_of("enc.0.attn.q.w").unwrap();
        assert_eq!(a.store.value(id), b.store.value(id));
        assert_ne!(a.store.value(id), c.store.value(id));
    }

    #[test]
    fn bilinear_weights_sum_to_one_and_are_exact_at_nodes() {
        for &(x, y) in &[(0.0, 0.0), (3.0, 7.0), (31.0, 31.0), (2.25, 9.75), (-4.0, 50.0)] {
            let w = bilinear_weights(x, y, 32);
            let sum: f64 = w.iter().map(|(_, wt)| wt).sum();
            assert!((sum - 1.0).abs() < 1e-12, "weights at ({x},{y}) sum to {sum}");
        }
        // Exact node: all weight on one cell.
        let w = bilinear_weights(5.0, 9.0, 32);
        assert_eq!(w[0], ((5, 9), 1.0));
        assert_eq!(w[1].1 + w[2].1 + w[3].1, 0.0);
        // Top corner clamps without losing mass.
        let w = bilinear_weights(31.0, 31.0, 32);
        assert_eq!(w[0], ((31, 31), 1.0));
    }

    #[test]
    fn quantize_embed_reproduces_codebook_rows_at_nodes() {
        let m: Model<f64> = Model::new(ModelConfig::desk(), 3);
        let bins = m.cfg.bins;
        let s = m.cfg.image_size as f64;
        // Image coordinate that lands exactly on bin node (4, 10).
        let x = 4.0 * s / (bins - 1) as f64;
        let y = 10.0 * s / (bins - 1) as f64;
        let e = m.quantize_embed(x, y);
        let book = m.store.value(m.ids.codebook);
        let d = book.cols();
        let row = &book.data()[(10 * bins + 4) * d..(10 * bins + 4 + 1) * d];
        for (a, b) in e.data().iter().zip(row) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_modes_control_trainability() {
        let learn: Model<f32> = Model::new(ModelConfig::desk(), 1);
        assert!(learn.store.is_trainable(learn.ids.anchors));
        let mut cfg = ModelConfig::desk();
        cfg.anchor_mode = AnchorMode::FixedGrid;
        let fixed: Model<f32> = Model::new(cfg, 1);
        assert!(!fixed.store.is_trainable(fixed.ids.anchors));
        // Learnable and fixed-grid share the same starting positions.
        assert_eq!(
            learn.store.value(learn.ids.anchors).data(),
            fixed.store.value(fixed.ids.anchors).data()
        );
        let mut cfg = ModelConfig::desk();
        cfg.anchor_mode = AnchorMode::FrozenRandom;
        let frozen: Model<f32> = Model::new(cfg, 1);
        assert!(!frozen.store.is_trainable(frozen.ids.anchors));
        assert_ne!(
            frozen.store.value(frozen.ids.anchors).data(),
            fixed.store.value(fixed.ids.anchors).data()
        );
    }

    #[test]
    fn positional_feature_layout_matches_frequency_matrix() {
        // positional_features and the graph-side (matmul + sin/cos + concat)
        // construction must produce identical layouts.
        let uv = [(0.25, 0.75), (0.0, 1.0)];
        let direct: DenseArray<f64> = positional_features(&uv, 16);
        let freq: DenseArray<f64> = pe_frequency_matrix(16);
        let refs = DenseArray::from_f64(&[2, 2], &[0.25, 0.75, 0.0, 1.0]);
        let args = crate::tensor::array::matmul(&refs, &freq);
        for (i, _) in uv.iter().enumerate() {
            for c in 0..8 {
                assert!((direct.at(i, c) - args.at(i, c).sin()).abs() < 1e-12);
                assert!((direct.at(i, 8 + c) - args.at(i, c).cos()).abs() < 1e-12);
            }
        }
    }
}
