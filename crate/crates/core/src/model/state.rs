//! Incremental decoding with per-layer key/value caches.
//!
//! This is a from-scratch array implementation of the decoder math (no
//! autodiff tape): the encoder output and the per-layer projections of the
//! image tokens are computed once, then each generated token runs a single
//! row through the decoder and appends its key/value rows to the caches. The
//! full-prefix graph forward in `forward.rs` is the reference it is tested
//! against.

use crate::codec::{Token, TokenKind};
use crate::model::{pe_frequency_matrix, Model};
use crate::scalar::Scalar;
use crate::tensor::array::{matmul, DenseArray};
use crate::tensor::graph::{bilinear_corners, gelu_fwd, Graph};

/// Predictions for the next token after feeding one input token.
#[derive(Clone, Debug)]
pub struct StepOutput<T> {
    /// Corner/sep/eos logits.
    pub token_logits: [T; 3],
    /// Semantic class logits, `classes` long.
    pub sem_logits: Vec<T>,
    /// Predicted coordinates in image units.
    pub coord: [T; 2],
}

struct LayerCache<T> {
    /// Projected image keys/values (present when feature fusion is on).
    k_img: Option<DenseArray<T>>,
    v_img: Option<DenseArray<T>>,
    /// Deformable value map `[feat^2, hidden]`.
    vmap: DenseArray<T>,
    /// Appended polygon keys/values, one row per consumed token.
    k_poly: Vec<T>,
    v_poly: Vec<T>,
}

/// Decoding state for one image.
pub struct DecoderState<'m, T: Scalar> {
    model: &'m Model<T>,
    layers: Vec<LayerCache<T>>,
    /// Anchor reference points scaled to feature-map pixels `[seq_len, 2]`.
    ref_px: DenseArray<T>,
    /// Positional query embedding per position `[seq_len, hidden]`.
    q_pos: DenseArray<T>,
    pos: usize,
}

fn linear_row<T: Scalar>(x: &[T], w: &DenseArray<T>, b: &DenseArray<T>) -> Vec<T> {
    let xa = DenseArray::from_vec(&[1, x.len()], x.to_vec());
    let mut y = matmul(&xa, w);
    assert_eq!(y.len(), b.len());
    for (o, &bv) in y.data_mut().iter_mut().zip(b.data()) {
        *o += bv;
    }
    y.data().to_vec()
}

/// Same formula and evaluation order as the tape's layer_norm, one row.
fn layer_norm_row<T: Scalar>(x: &[T], g: &[T], b: &[T]) -> Vec<T> {
    let n = x.len();
    let nt = T::from_f64_lossy(n as f64);
    let eps = T::from_f64_lossy(1e-5);
    let mean = x.iter().copied().sum::<T>() / nt;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
    let istd = T::one() / (var + eps).sqrt();
    (0..n).map(|j| (x[j] - mean) * istd * g[j] + b[j]).collect()
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let mx = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut denom = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - mx).exp();
        denom += *x;
    }
    for x in xs.iter_mut() {
        *x /= denom;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Scalar> Model<T> {
    /// Run the encoder on an image and set up caches for token-by-token
    /// decoding.
    pub fn begin_decode(&self, image: &DenseArray<T>) -> DecoderState<'_, T> {
        // The encoder has no causal structure, so the graph implementation is
        // reused here (eval mode: no dropout, values only).
        let mut g = Graph::<T>::eval();
        let pn = self.param_nodes(&mut g);
        let f_node = self.encode_image_graph(&mut g, image, &pn);
        let f_img = g.value(f_node).clone();
        drop(g);

        let store = &self.store;
        let layers = self
            .ids
            .dec
            .iter()
            .map(|layer| {
                let (k_img, v_img) = if self.cfg.feat_fusion {
                    let a = &layer.self_attn;
                    let mut k = matmul(&f_img, store.value(a.wk));
                    add_row_bias(&mut k, store.value(a.bk));
                    let mut v = matmul(&f_img, store.value(a.wv));
                    add_row_bias(&mut v, store.value(a.bv));
                    (Some(k), Some(v))
                } else {
                    (None, None)
                };
                let mut vmap = matmul(&f_img, store.value(layer.deform.w_val));
                add_row_bias(&mut vmap, store.value(layer.deform.b_val));
                LayerCache { k_img, v_img, vmap, k_poly: Vec::new(), v_poly: Vec::new() }
            })
            .collect();

        // Anchor-derived tables, mirroring the graph construction op-for-op.
        let logits = store.value(self.ids.anchors);
        let l = self.cfg.seq_len;
        let mut ref01 = DenseArray::zeros(&[l, 2]);
        for i in 0..l * 2 {
            ref01.data_mut()[i] = sigmoid(logits.data()[i]);
        }
        let side = T::from_f64_lossy(self.cfg.feat_side() as f64 - 1.0);
        let mut ref_px = ref01.clone();
        for row in ref_px.data_mut().chunks_exact_mut(2) {
            row[0] *= side;
            row[1] *= side;
        }
        let freq: DenseArray<T> = pe_frequency_matrix(self.cfg.hidden);
        let args = matmul(&ref01, &freq);
        let half = self.cfg.hidden / 2;
        let mut feats = DenseArray::zeros(&[l, self.cfg.hidden]);
        for i in 0..l {
            for j in 0..half {
                let a = args.at(i, j);
                feats.set(i, j, a.sin());
                feats.set(i, half + j, a.cos());
            }
        }
        let mut q_pos = matmul(&feats, store.value(self.ids.anchor_pe_w));
        add_row_bias(&mut q_pos, store.value(self.ids.anchor_pe_b));

        DecoderState { model: self, layers, ref_px, q_pos, pos: 0 }
    }
}

fn add_row_bias<T: Scalar>(m: &mut DenseArray<T>, b: &DenseArray<T>) {
    let n = m.cols();
    assert_eq!(b.len(), n);
    for row in m.data_mut().chunks_exact_mut(n) {
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
}

impl<'m, T: Scalar> DecoderState<'m, T> {
    /// Position the next fed token will occupy.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Feed one input token; returns predictions for the following token.
    /// Panics when the sequence budget is exhausted.
    pub fn step(&mut self, token: &Token) -> StepOutput<T> {
        let m = self.model;
        let cfg = &m.cfg;
        let store = &m.store;
        let l = self.pos;
        assert!(l < cfg.seq_len, "decoder already consumed {l} of {} positions", cfg.seq_len);
        let d = cfg.hidden;
        let dh = cfg.head_dim();
        let q_pos_l = {
            let s = &self.q_pos.data()[l * d..(l + 1) * d];
            s.to_vec()
        };

        // Token embedding: kind + (corner-only) class + codebook blend.
        let kind_row = token.kind.embed_index();
        let ke = store.value(m.ids.kind_emb);
        let mut x: Vec<T> = ke.data()[kind_row * d..(kind_row + 1) * d].to_vec();
        if token.kind == TokenKind::Corner {
            let class = token.class.min(cfg.classes() - 1);
            let ce = store.value(m.ids.class_emb);
            for (o, &e) in x.iter_mut().zip(&ce.data()[class * d..(class + 1) * d]) {
                *o += e;
            }
            let (bx, by) = m.coord_to_bin_units(token.x, token.y);
            let book = store.value(m.ids.codebook);
            let c = bilinear_corners::<T>(
                T::from_f64_lossy(bx),
                T::from_f64_lossy(by),
                cfg.bins,
                cfg.bins,
            );
            let mut blend = vec![T::zero(); d];
            for (cell, wgt) in c.cells() {
                if wgt == T::zero() {
                    continue;
                }
                for (o, &e) in blend.iter_mut().zip(&book.data()[cell * d..(cell + 1) * d]) {
                    *o += wgt * e;
                }
            }
            for (o, b) in x.iter_mut().zip(blend) {
                *o += b;
            }
        }

        for (li, layer_ids) in m.ids.dec.iter().enumerate() {
            let cache = &mut self.layers[li];
            // Self-attention against image keys plus all poly keys so far.
            let xn = layer_norm_row(
                &x,
                store.value(layer_ids.ln1.g).data(),
                store.value(layer_ids.ln1.b).data(),
            );
            let q_row: Vec<T> = xn.iter().zip(&q_pos_l).map(|(&a, &b)| a + b).collect();
            let a = &layer_ids.self_attn;
            let k_new = linear_row(&q_row, store.value(a.wk), store.value(a.bk));
            let v_new = linear_row(&xn, store.value(a.wv), store.value(a.bv));
            cache.k_poly.extend_from_slice(&k_new);
            cache.v_poly.extend_from_slice(&v_new);
            let q = linear_row(&q_row, store.value(a.wq), store.value(a.bq));
            let attn = attend_row(cfg.heads, dh, &q, cache, l + 1, d);
            let attn = linear_row(&attn, store.value(a.wo), store.value(a.bo));
            for (o, v) in x.iter_mut().zip(attn) {
                *o += v;
            }

            // Deformable sampling around this position's reference point.
            let xn2 = layer_norm_row(
                &x,
                store.value(layer_ids.ln2.g).data(),
                store.value(layer_ids.ln2.b).data(),
            );
            let qd: Vec<T> = xn2.iter().zip(&q_pos_l).map(|(&a, &b)| a + b).collect();
            let dfm = &layer_ids.deform;
            let off = linear_row(&qd, store.value(dfm.w_off), store.value(dfm.b_off));
            let att = linear_row(&qd, store.value(dfm.w_att), store.value(dfm.b_att));
            let k = cfg.points;
            let side = cfg.feat_side();
            let (rx, ry) = (self.ref_px.at(l, 0), self.ref_px.at(l, 1));
            let mut merged = vec![T::zero(); d];
            let mut smp = vec![T::zero(); dh];
            for hh in 0..cfg.heads {
                let mut w = att[hh * k..(hh + 1) * k].to_vec();
                softmax_in_place(&mut w);
                let out = &mut merged[hh * dh..(hh + 1) * dh];
                for p in 0..k {
                    let px = rx + off[(hh * k + p) * 2];
                    let py = ry + off[(hh * k + p) * 2 + 1];
                    let c = bilinear_corners(px, py, side, side);
                    smp.iter_mut().for_each(|v| *v = T::zero());
                    for (cell, wgt) in c.cells() {
                        if wgt == T::zero() {
                            continue;
                        }
                        let row = &cache.vmap.data()[cell * d + hh * dh..cell * d + (hh + 1) * dh];
                        for (o, &e) in smp.iter_mut().zip(row) {
                            *o += wgt * e;
                        }
                    }
                    for (o, &s) in out.iter_mut().zip(&smp) {
                        *o += w[p] * s;
                    }
                }
            }
            let dout = linear_row(&merged, store.value(dfm.w_out), store.value(dfm.b_out));
            for (o, v) in x.iter_mut().zip(dout) {
                *o += v;
            }

            // Feed-forward.
            let xn3 = layer_norm_row(
                &x,
                store.value(layer_ids.ln3.g).data(),
                store.value(layer_ids.ln3.b).data(),
            );
            let f = &layer_ids.ffn;
            let mut h = linear_row(&xn3, store.value(f.w1), store.value(f.b1));
            for v in &mut h {
                *v = gelu_fwd(*v);
            }
            let fo = linear_row(&h, store.value(f.w2), store.value(f.b2));
            for (o, v) in x.iter_mut().zip(fo) {
                *o += v;
            }
        }

        let xf = layer_norm_row(
            &x,
            store.value(m.ids.dec_final_ln.g).data(),
            store.value(m.ids.dec_final_ln.b).data(),
        );
        let hd = &m.ids.heads;
        let tk = linear_row(&xf, store.value(hd.token_w), store.value(hd.token_b));
        let sem_logits = linear_row(&xf, store.value(hd.sem_w), store.value(hd.sem_b));
        let delta = linear_row(&xf, store.value(hd.coord_w), store.value(hd.coord_b));
        let anchors = store.value(m.ids.anchors);
        let s = T::from_f64_lossy(cfg.image_size as f64);
        let coord = [
            sigmoid(delta[0] + anchors.at(l, 0)) * s,
            sigmoid(delta[1] + anchors.at(l, 1)) * s,
        ];
        self.pos += 1;
        StepOutput { token_logits: [tk[0], tk[1], tk[2]], sem_logits, coord }
    }
}

/// Multi-head attention of one query row over `[image keys; poly keys]`,
/// with `n_poly` poly rows visible.
#[allow(clippy::too_many_arguments)]
fn attend_row<T: Scalar>(
    heads: usize,
    dh: usize,
    q: &[T],
    cache: &LayerCache<T>,
    n_poly: usize,
    d: usize,
) -> Vec<T> {
    let n_img = cache.k_img.as_ref().map_or(0, |k| k.rows());
    let total = n_img + n_poly;
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let mut out = vec![T::zero(); d];
    let mut scores = vec![T::zero(); total];
    for hh in 0..heads {
        let qs = &q[hh * dh..(hh + 1) * dh];
        for j in 0..n_img {
            let krow = &cache.k_img.as_ref().unwrap().data()[j * d + hh * dh..j * d + (hh + 1) * dh];
            let mut acc = T::zero();
            for (&a, &b) in qs.iter().zip(krow) {
                acc += a * b;
            }
            scores[j] = acc * scale;
        }
        for j in 0..n_poly {
            let krow = &cache.k_poly[j * d + hh * dh..j * d + (hh + 1) * dh];
            let mut acc = T::zero();
            for (&a, &b) in qs.iter().zip(krow) {
                acc += a * b;
            }
            scores[n_img + j] = acc * scale;
        }
        softmax_in_place(&mut scores);
        let os = &mut out[hh * dh..(hh + 1) * dh];
        for j in 0..n_img {
            let vrow = &cache.v_img.as_ref().unwrap().data()[j * d + hh * dh..j * d + (hh + 1) * dh];
            for (o, &v) in os.iter_mut().zip(vrow) {
                *o += scores[j] * v;
            }
        }
        for j in 0..n_poly {
            let vrow = &cache.v_poly[j * d + hh * dh..j * d + (hh + 1) * dh];
            for (o, &v) in os.iter_mut().zip(vrow) {
                *o += scores[n_img + j] * v;
            }
        }
    }
    out
}
