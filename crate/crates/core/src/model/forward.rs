//! Graph (autodiff) forward passes: image encoding and teacher-forced
//! decoding over a whole token sequence at once. The incremental cached
//! decoder in `state.rs` is an independent implementation of the same math;
//! the equivalence tests compare the two.

use std::sync::Arc;

use crate::codec::{Token, TokenKind};
use crate::model::{pe_frequency_matrix, positional_features, AttnIds, FfnIds, Model};
use crate::scalar::Scalar;
use crate::tensor::array::DenseArray;
use crate::tensor::graph::{Graph, NodeId};

/// Per-position predictions for a teacher-forced sequence: position `l`
/// estimates token `l+1`.
pub struct TeacherOutputs {
    /// `[L, 3]` corner/sep/eos logits.
    pub token_logits: NodeId,
    /// `[L, classes]` semantic logits.
    pub sem_logits: NodeId,
    /// `[L, 2]` predicted coordinates in image units.
    pub coords: NodeId,
}

impl TokenKind {
    /// Row in the kind-embedding table.
    pub fn embed_index(self) -> usize {
        match self {
            TokenKind::Bos => 0,
            TokenKind::Corner => 1,
            TokenKind::Sep => 2,
            TokenKind::Eos => 3,
        }
    }
}

impl<T: Scalar> Model<T> {
    /// One graph node per stored parameter, indexable by `ParamId::index`.
    pub(crate) fn param_nodes(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.store.ids().collect::<Vec<_>>().into_iter().map(|id| g.param(&self.store, id)).collect()
    }

    /// Backbone + encoder: raster image `[S*S, in_channels]` to image tokens
    /// `[feat_side^2, hidden]`.
    pub(crate) fn encode_image_graph(
        &self,
        g: &mut Graph<T>,
        image: &DenseArray<T>,
        pn: &[NodeId],
    ) -> NodeId {
        let cfg = &self.cfg;
        assert_eq!(
            image.shape(),
            &[cfg.image_size * cfg.image_size, cfg.in_channels],
            "image shape"
        );
        let mut x = g.constant(image.clone());
        let (mut h, mut w) = (cfg.image_size, cfg.image_size);
        let mut cin = cfg.in_channels;
        for (i, &cout) in cfg.backbone_channels.iter().enumerate() {
            let (wid, bid) = self.ids.convs[i];
            let cols = g.im2col(x, h, w, cin, 3, 2, 1);
            let conv = g.matmul(cols, pn[wid.index()]);
            let biased = g.add_row_broadcast(conv, pn[bid.index()]);
            x = g.relu(biased);
            h /= 2;
            w /= 2;
            cin = cout;
        }
        debug_assert_eq!((h, w), (cfg.feat_side(), cfg.feat_side()));

        // Fixed sinusoidal position features over pixel centers.
        let side = cfg.feat_side();
        let uv: Vec<(f64, f64)> = (0..side * side)
            .map(|i| {
                let (y, x) = (i / side, i % side);
                ((x as f64 + 0.5) / side as f64, (y as f64 + 0.5) / side as f64)
            })
            .collect();
        let pe = g.constant(positional_features(&uv, cfg.hidden));
        x = g.add(x, pe);

        for layer in &self.ids.enc {
            let xn = g.layer_norm(x, pn[layer.ln1.g.index()], pn[layer.ln1.b.index()]);
            let attn = self.mha(g, pn, &layer.attn, xn, xn, xn, None);
            let attn = g.dropout(attn, cfg.dropout);
            x = g.add(x, attn);
            let xn2 = g.layer_norm(x, pn[layer.ln2.g.index()], pn[layer.ln2.b.index()]);
            let f = self.ffn(g, pn, &layer.ffn, xn2);
            let f = g.dropout(f, cfg.dropout);
            x = g.add(x, f);
        }
        g.layer_norm(x, pn[self.ids.enc_final_ln.g.index()], pn[self.ids.enc_final_ln.b.index()])
    }

    /// Multi-head attention: projections, per-head masked softmax, merge.
    fn mha(
        &self,
        g: &mut Graph<T>,
        pn: &[NodeId],
        ids: &AttnIds,
        q_in: NodeId,
        k_in: NodeId,
        v_in: NodeId,
        mask: Option<Arc<Vec<bool>>>,
    ) -> NodeId {
        let dh = self.cfg.head_dim();
        let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
        let q = g.matmul(q_in, pn[ids.wq.index()]);
        let q = g.add_row_broadcast(q, pn[ids.bq.index()]);
        let k = g.matmul(k_in, pn[ids.wk.index()]);
        let k = g.add_row_broadcast(k, pn[ids.bk.index()]);
        let v = g.matmul(v_in, pn[ids.wv.index()]);
        let v = g.add_row_broadcast(v, pn[ids.bv.index()]);
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for hh in 0..self.cfg.heads {
            let qh = g.slice_cols(q, hh * dh, dh);
            let kh = g.slice_cols(k, hh * dh, dh);
            let vh = g.slice_cols(v, hh * dh, dh);
            let scores = g.matmul_nt(qh, kh);
            let scaled = g.scale(scores, scale);
            let probs = g.softmax_rows_masked(scaled, mask.clone());
            heads.push(g.matmul(probs, vh));
        }
        let merged = g.concat_cols(&heads);
        let out = g.matmul(merged, pn[ids.wo.index()]);
        g.add_row_broadcast(out, pn[ids.bo.index()])
    }

    fn ffn(&self, g: &mut Graph<T>, pn: &[NodeId], ids: &FfnIds, x: NodeId) -> NodeId {
        let h = g.matmul(x, pn[ids.w1.index()]);
        let h = g.add_row_broadcast(h, pn[ids.b1.index()]);
        let h = g.gelu(h);
        let o = g.matmul(h, pn[ids.w2.index()]);
        g.add_row_broadcast(o, pn[ids.b2.index()])
    }

    /// Token embeddings `[L, hidden]`: kind + (corners only) class + bilinear
    /// codebook blend of the coordinates.
    fn embed_tokens(&self, g: &mut Graph<T>, pn: &[NodeId], tokens: &[Token]) -> NodeId {
        let cfg = &self.cfg;
        let l = tokens.len();
        let kinds: Vec<usize> = tokens.iter().map(|t| t.kind.embed_index()).collect();
        let classes: Vec<usize> =
            tokens.iter().map(|t| if t.kind == TokenKind::Corner { t.class.min(cfg.classes() - 1) } else { 0 }).collect();
        let corner_mask: Vec<f64> =
            tokens.iter().map(|t| if t.kind == TokenKind::Corner { 1.0 } else { 0.0 }).collect();
        let mut pts = DenseArray::<T>::zeros(&[l, 2]);
        for (i, t) in tokens.iter().enumerate() {
            let (bx, by) = self.coord_to_bin_units(t.x, t.y);
            pts.set(i, 0, T::from_f64_lossy(bx));
            pts.set(i, 1, T::from_f64_lossy(by));
        }

        let kind_e = g.embedding_gather(pn[self.ids.kind_emb.index()], kinds);
        let class_all = g.embedding_gather(pn[self.ids.class_emb.index()], classes);
        let cm = g.constant(DenseArray::from_f64(&[l], &corner_mask));
        let class_e = g.mul_col_broadcast(class_all, cm);
        let pts_node = g.constant(pts);
        let coord_all = g.grid_sample(pn[self.ids.codebook.index()], pts_node, cfg.bins, cfg.bins);
        let coord_e = g.mul_col_broadcast(coord_all, cm);
        let ke = g.add(kind_e, class_e);
        g.add(ke, coord_e)
    }

    /// Anchor-derived quantities for the first `l` positions: reference
    /// points in `[0,1]^2`, reference points in feature-map pixels, the
    /// positional query embedding, and the raw logits.
    fn anchor_nodes(&self, g: &mut Graph<T>, pn: &[NodeId], l: usize) -> AnchorNodes {
        let cfg = &self.cfg;
        let full = pn[self.ids.anchors.index()];
        let logits = g.slice_rows(full, 0, l);
        let ref01 = g.sigmoid(logits);
        let side = cfg.feat_side() as f64 - 1.0;
        let to_px = g.constant(DenseArray::from_f64(&[2], &[side, side]));
        let ref_px = g.mul_row_broadcast(ref01, to_px);
        let freq = g.constant(pe_frequency_matrix(cfg.hidden));
        let args = g.matmul(ref01, freq);
        let s = g.sin(args);
        let c = g.cos(args);
        let feats = g.concat_cols(&[s, c]);
        let proj = g.matmul(feats, pn[self.ids.anchor_pe_w.index()]);
        let q_pos = g.add_row_broadcast(proj, pn[self.ids.anchor_pe_b.index()]);
        AnchorNodes { logits, ref_px, q_pos }
    }

    /// Full teacher-forced pass: encode the image, embed the input tokens,
    /// run the causal decoder, and apply the three prediction heads.
    pub fn forward_teacher(
        &self,
        g: &mut Graph<T>,
        image: &DenseArray<T>,
        tokens: &[Token],
    ) -> TeacherOutputs {
        let pn = self.param_nodes(g);
        let f_img = self.encode_image_graph(g, image, &pn);
        self.decode_teacher(g, &pn, f_img, tokens)
    }

    /// Teacher-forced pass in eval mode, returning the plain output arrays
    /// (token logits `[L, 3]`, class logits `[L, C]`, coords `[L, 2]`).
    pub fn teacher_eval(
        &self,
        image: &DenseArray<T>,
        tokens: &[Token],
    ) -> (DenseArray<T>, DenseArray<T>, DenseArray<T>) {
        let mut g = Graph::<T>::eval();
        let out = self.forward_teacher(&mut g, image, tokens);
        (
            g.value(out.token_logits).clone(),
            g.value(out.sem_logits).clone(),
            g.value(out.coords).clone(),
        )
    }

    /// Decoder half of [`Model::forward_teacher`], reusing encoded image
    /// tokens (useful when probing several sequences against one image).
    pub(crate) fn decode_teacher(
        &self,
        g: &mut Graph<T>,
        pn: &[NodeId],
        f_img: NodeId,
        tokens: &[Token],
    ) -> TeacherOutputs {
        let cfg = &self.cfg;
        let l = tokens.len();
        assert!(l >= 1 && l <= cfg.seq_len, "token count {l} outside 1..={}", cfg.seq_len);
        let l_img = cfg.image_tokens();
        let side = cfg.feat_side();

        let mut x = self.embed_tokens(g, pn, tokens);
        let anchors = self.anchor_nodes(g, pn, l);

        // Causal mask over poly keys; image keys (when fused) stay open.
        let img_cols = if cfg.feat_fusion { l_img } else { 0 };
        let total = img_cols + l;
        let mut mask = Vec::with_capacity(l * total);
        for row in 0..l {
            for _ in 0..img_cols {
                mask.push(true);
            }
            for j in 0..l {
                mask.push(j <= row);
            }
        }
        let mask = Some(Arc::new(mask));

        for layer in &self.ids.dec {
            // Masked self-attention; anchors position both queries and poly keys.
            let xn = g.layer_norm(x, pn[layer.ln1.g.index()], pn[layer.ln1.b.index()]);
            let q_in = g.add(xn, anchors.q_pos);
            let (k_in, v_in) = if cfg.feat_fusion {
                (g.concat_rows(f_img, q_in), g.concat_rows(f_img, xn))
            } else {
                (q_in, xn)
            };
            let attn = self.mha(g, pn, &layer.self_attn, q_in, k_in, v_in, mask.clone());
            let attn = g.dropout(attn, cfg.dropout);
            x = g.add(x, attn);

            // Deformable image cross-attention around the anchor references.
            let xn2 = g.layer_norm(x, pn[layer.ln2.g.index()], pn[layer.ln2.b.index()]);
            let qd = g.add(xn2, anchors.q_pos);
            let d = &layer.deform;
            let vmap = g.matmul(f_img, pn[d.w_val.index()]);
            let vmap = g.add_row_broadcast(vmap, pn[d.b_val.index()]);
            let off = g.matmul(qd, pn[d.w_off.index()]);
            let off = g.add_row_broadcast(off, pn[d.b_off.index()]);
            let att = g.matmul(qd, pn[d.w_att.index()]);
            let att = g.add_row_broadcast(att, pn[d.b_att.index()]);
            let k = cfg.points;
            let dh = cfg.head_dim();
            let ref_rep = g.repeat_rows(anchors.ref_px, k);
            let mut head_outs = Vec::with_capacity(cfg.heads);
            for hh in 0..cfg.heads {
                let off_h = g.slice_cols(off, hh * k * 2, k * 2);
                let off_pts = g.reshape(off_h, &[l * k, 2]);
                let pts = g.add(ref_rep, off_pts);
                let att_h = g.slice_cols(att, hh * k, k);
                let att_sm = g.softmax_rows_masked(att_h, None);
                let att_col = g.reshape(att_sm, &[l * k, 1]);
                let vmap_h = g.slice_cols(vmap, hh * dh, dh);
                let smp = g.grid_sample(vmap_h, pts, side, side);
                let weighted = g.mul_col_broadcast(smp, att_col);
                head_outs.push(g.sum_group_rows(weighted, k));
            }
            let merged = g.concat_cols(&head_outs);
            let dout = g.matmul(merged, pn[d.w_out.index()]);
            let dout = g.add_row_broadcast(dout, pn[d.b_out.index()]);
            let dout = g.dropout(dout, cfg.dropout);
            x = g.add(x, dout);

            let xn3 = g.layer_norm(x, pn[layer.ln3.g.index()], pn[layer.ln3.b.index()]);
            let f = self.ffn(g, pn, &layer.ffn, xn3);
            let f = g.dropout(f, cfg.dropout);
            x = g.add(x, f);
        }

        let xf = g.layer_norm(
            x,
            pn[self.ids.dec_final_ln.g.index()],
            pn[self.ids.dec_final_ln.b.index()],
        );
        let h = &self.ids.heads;
        let token_logits = g.matmul(xf, pn[h.token_w.index()]);
        let token_logits = g.add_row_broadcast(token_logits, pn[h.token_b.index()]);
        let sem_logits = g.matmul(xf, pn[h.sem_w.index()]);
        let sem_logits = g.add_row_broadcast(sem_logits, pn[h.sem_b.index()]);
        let delta = g.matmul(xf, pn[h.coord_w.index()]);
        let delta = g.add_row_broadcast(delta, pn[h.coord_b.index()]);
        // Coordinates decode relative to each position's anchor.
        let based = g.add(delta, anchors.logits);
        let unit = g.sigmoid(based);
        let coords = g.scale(unit, T::from_f64_lossy(self.cfg.image_size as f64));
        TeacherOutputs { token_logits, sem_logits, coords }
    }
}

struct AnchorNodes {
    logits: NodeId,
    ref_px: NodeId,
    q_pos: NodeId,
}
