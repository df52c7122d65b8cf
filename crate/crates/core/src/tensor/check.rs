//! Central finite-difference gradient checking, always in f64.
//!
//! The acceptance gate runs [`all_op_checks`] (every tape op against numeric
//! derivatives) plus a composed-model check; the same helpers back the unit
//! tests here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::array::DenseArray;
use crate::tensor::graph::{Graph, NodeId};

/// Relative error `|a - b| / max(1, |a|, |b|)` — absolute near zero,
/// relative for large magnitudes.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

/// Outcome of checking one scalar-valued function.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    /// Flattened count of checked partial derivatives.
    pub checked: usize,
}

/// Seed used for every check so dropout masks are identical across the
/// analytic pass and each finite-difference rebuild.
const CHECK_SEED: u64 = 0x5eed;

/// Compare tape gradients of `build` (a scalar-rooted graph over the given
/// input leaves) against central finite differences on every input element.
pub fn check_scalar_fn(
    name: &str,
    inputs: &[DenseArray<f64>],
    build: &dyn Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
) -> CheckResult {
    let eval = |xs: &[DenseArray<f64>]| -> f64 {
        let mut g = Graph::<f64>::train(CHECK_SEED);
        let ids: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
        let root = build(&mut g, &ids);
        let v = g.value(root);
        assert_eq!(v.len(), 1, "check target {name} must produce a scalar");
        v.data()[0]
    };

    let mut g = Graph::<f64>::train(CHECK_SEED);
    let ids: Vec<NodeId> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let root = build(&mut g, &ids);
    let grads = g.backward(root).expect("scalar root");

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut work: Vec<DenseArray<f64>> = inputs.to_vec();
    for (ii, id) in ids.iter().enumerate() {
        let analytic = grads
            .of(*id)
            .cloned()
            .unwrap_or_else(|| DenseArray::zeros(inputs[ii].shape()));
        for e in 0..inputs[ii].len() {
            let x0 = work[ii].data()[e];
            let h = 1e-5 * x0.abs().max(1.0);
            work[ii].data_mut()[e] = x0 + h;
            let fp = eval(&work);
            work[ii].data_mut()[e] = x0 - h;
            let fm = eval(&work);
            work[ii].data_mut()[e] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            max_rel = max_rel.max(relative_error(analytic.data()[e], numeric));
            checked += 1;
        }
    }
    CheckResult { name: name.to_string(), max_rel_err: max_rel, checked }
}

fn rand_arr(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> DenseArray<f64> {
    let n: usize = shape.iter().product();
    DenseArray::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Values bounded away from zero, for kinked ops (abs, relu).
fn rand_arr_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            s * rng.gen_range(0.2..1.2)
        })
        .collect();
    DenseArray::from_vec(shape, data)
}

/// Run the finite-difference check on every tape operation with small random
/// operands. Each entry covers the op's gradient w.r.t. every input.
pub fn all_op_checks() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
    let mut out = Vec::new();

    out.push(check_scalar_fn(
        "matmul",
        &[rand_arr(&mut rng, &[3, 4], -1.0, 1.0), rand_arr(&mut rng, &[4, 2], -1.0, 1.0)],
        &|g, xs| {
            let m = g.matmul(xs[0], xs[1]);
            g.sum_all(m)
        },
    ));
    out.push(check_scalar_fn(
        "matmul_nt",
        &[rand_arr(&mut rng, &[3, 4], -1.0, 1.0), rand_arr(&mut rng, &[2, 4], -1.0, 1.0)],
        &|g, xs| {
            let m = g.matmul_nt(xs[0], xs[1]);
            g.sum_all(m)
        },
    ));
    // Squared roots below make the incoming gradient non-uniform, which
    // exercises more of each backward than a plain sum would.
    out.push(check_scalar_fn(
        "add",
        &[rand_arr(&mut rng, &[2, 3], -1.0, 1.0), rand_arr(&mut rng, &[2, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.add(xs[0], xs[1]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "sub",
        &[rand_arr(&mut rng, &[2, 3], -1.0, 1.0), rand_arr(&mut rng, &[2, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.sub(xs[0], xs[1]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "mul_elem",
        &[rand_arr(&mut rng, &[2, 3], -1.0, 1.0), rand_arr(&mut rng, &[2, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.mul_elem(xs[0], xs[1]);
            g.sum_all(y)
        },
    ));
    out.push(check_scalar_fn("scale", &[rand_arr(&mut rng, &[2, 3], -1.0, 1.0)], &|g, xs| {
        let y = g.scale(xs[0], -2.5);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn(
        "add_row_broadcast",
        &[rand_arr(&mut rng, &[3, 4], -1.0, 1.0), rand_arr(&mut rng, &[4], -1.0, 1.0)],
        &|g, xs| {
            let y = g.add_row_broadcast(xs[0], xs[1]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "mul_row_broadcast",
        &[rand_arr(&mut rng, &[3, 4], -1.0, 1.0), rand_arr(&mut rng, &[4], -1.0, 1.0)],
        &|g, xs| {
            let y = g.mul_row_broadcast(xs[0], xs[1]);
            g.sum_all(y)
        },
    ));
    out.push(check_scalar_fn(
        "mul_col_broadcast",
        &[rand_arr(&mut rng, &[3, 4], -1.0, 1.0), rand_arr(&mut rng, &[3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.mul_col_broadcast(xs[0], xs[1]);
            g.sum_all(y)
        },
    ));
    out.push(check_scalar_fn("abs", &[rand_arr_off_zero(&mut rng, &[3, 3])], &|g, xs| {
        let y = g.abs(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("relu", &[rand_arr_off_zero(&mut rng, &[3, 3])], &|g, xs| {
        let y = g.relu(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("gelu", &[rand_arr(&mut rng, &[3, 3], -2.0, 2.0)], &|g, xs| {
        let y = g.gelu(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("sigmoid", &[rand_arr(&mut rng, &[3, 3], -3.0, 3.0)], &|g, xs| {
        let y = g.sigmoid(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("sin", &[rand_arr(&mut rng, &[2, 3], -3.0, 3.0)], &|g, xs| {
        let y = g.sin(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("cos", &[rand_arr(&mut rng, &[2, 3], -3.0, 3.0)], &|g, xs| {
        let y = g.cos(xs[0]);
        g.sum_all(y)
    }));
    out.push(check_scalar_fn("sum_all", &[rand_arr(&mut rng, &[4, 2], -1.0, 1.0)], &|g, xs| {
        g.sum_all(xs[0])
    }));
    out.push(check_scalar_fn(
        "layer_norm",
        &[
            rand_arr(&mut rng, &[3, 6], -1.0, 1.0),
            rand_arr(&mut rng, &[6], 0.5, 1.5),
            rand_arr(&mut rng, &[6], -0.5, 0.5),
        ],
        &|g, xs| {
            let y = g.layer_norm(xs[0], xs[1], xs[2]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "softmax_rows_masked",
        &[rand_arr(&mut rng, &[3, 5], -2.0, 2.0)],
        &|g, xs| {
            let mask = std::sync::Arc::new(vec![
                true, true, true, false, true, //
                true, false, true, true, true, //
                true, true, true, true, true,
            ]);
            let y = g.softmax_rows_masked(xs[0], Some(mask));
            let w = g.constant(DenseArray::from_f64(
                &[3, 5],
                &[0.3, -1.0, 0.7, 9.0, 0.2, 1.1, 9.0, -0.4, 0.8, -1.2, 0.5, 0.6, -0.7, 0.9, 1.3],
            ));
            let p = g.mul_elem(y, w);
            g.sum_all(p)
        },
    ));
    out.push(check_scalar_fn(
        "log_softmax_rows",
        &[rand_arr(&mut rng, &[3, 5], -2.0, 2.0)],
        &|g, xs| {
            let y = g.log_softmax_rows(xs[0]);
            let w = g.constant(DenseArray::from_f64(
                &[3, 5],
                &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            ));
            let p = g.mul_elem(y, w);
            g.sum_all(p)
        },
    ));
    out.push(check_scalar_fn(
        "embedding_gather",
        &[rand_arr(&mut rng, &[5, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.embedding_gather(xs[0], vec![0, 3, 3, 1]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "grid_sample",
        &[
            rand_arr(&mut rng, &[12, 2], -1.0, 1.0), // 3x4 map, d=2
            rand_arr(&mut rng, &[5, 2], 0.3, 1.7),   // interior points (h-1=2, w-1=3)
        ],
        &|g, xs| {
            let y = g.grid_sample(xs[0], xs[1], 3, 4);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn(
        "concat_rows",
        &[rand_arr(&mut rng, &[2, 3], -1.0, 1.0), rand_arr(&mut rng, &[3, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.concat_rows(xs[0], xs[1]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn("slice_rows", &[rand_arr(&mut rng, &[5, 3], -1.0, 1.0)], &|g, xs| {
        let y = g.slice_rows(xs[0], 1, 3);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn("slice_cols", &[rand_arr(&mut rng, &[3, 6], -1.0, 1.0)], &|g, xs| {
        let y = g.slice_cols(xs[0], 2, 3);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn(
        "concat_cols",
        &[
            rand_arr(&mut rng, &[3, 2], -1.0, 1.0),
            rand_arr(&mut rng, &[3, 3], -1.0, 1.0),
            rand_arr(&mut rng, &[3, 1], -1.0, 1.0),
        ],
        &|g, xs| {
            let y = g.concat_cols(&[xs[0], xs[1], xs[2]]);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn("reshape", &[rand_arr(&mut rng, &[2, 6], -1.0, 1.0)], &|g, xs| {
        let y = g.reshape(xs[0], &[4, 3]);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn("repeat_rows", &[rand_arr(&mut rng, &[3, 2], -1.0, 1.0)], &|g, xs| {
        let y = g.repeat_rows(xs[0], 4);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn(
        "sum_group_rows",
        &[rand_arr(&mut rng, &[8, 3], -1.0, 1.0)],
        &|g, xs| {
            let y = g.sum_group_rows(xs[0], 4);
            let sq = g.mul_elem(y, y);
            g.sum_all(sq)
        },
    ));
    out.push(check_scalar_fn("dropout", &[rand_arr(&mut rng, &[4, 4], -1.0, 1.0)], &|g, xs| {
        let y = g.dropout(xs[0], 0.3);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn("im2col", &[rand_arr(&mut rng, &[16, 2], -1.0, 1.0)], &|g, xs| {
        // 4x4, cin=2, k=3, stride=2, pad=1 -> 2x2 patches.
        let y = g.im2col(xs[0], 4, 4, 2, 3, 2, 1);
        let sq = g.mul_elem(y, y);
        g.sum_all(sq)
    }));
    out.push(check_scalar_fn(
        "composite_attention_block",
        &[
            rand_arr(&mut rng, &[4, 6], -0.5, 0.5),  // x
            rand_arr(&mut rng, &[6, 6], -0.5, 0.5),  // wq
            rand_arr(&mut rng, &[6, 6], -0.5, 0.5),  // wk
            rand_arr(&mut rng, &[6, 6], -0.5, 0.5),  // wv
            rand_arr(&mut rng, &[6], 0.8, 1.2),      // ln gamma
            rand_arr(&mut rng, &[6], -0.1, 0.1),     // ln beta
        ],
        &|g, xs| {
            // Pre-norm single-head attention with residual, then a GELU FFN taste.
            let xn = g.layer_norm(xs[0], xs[4], xs[5]);
            let q = g.matmul(xn, xs[1]);
            let k = g.matmul(xn, xs[2]);
            let v = g.matmul(xn, xs[3]);
            let scores = g.matmul_nt(q, k);
            let scaled = g.scale(scores, 1.0 / (6.0f64).sqrt());
            let mask = std::sync::Arc::new(
                (0..4).flat_map(|i| (0..4).map(move |j| j <= i)).collect::<Vec<_>>(),
            );
            let p = g.softmax_rows_masked(scaled, Some(mask));
            let attn = g.matmul(p, v);
            let res = g.add(xs[0], attn);
            let act = g.gelu(res);
            let sq = g.mul_elem(act, act);
            g.sum_all(sq)
        },
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_absolute_near_zero_and_relative_when_large() {
        assert!((relative_error(1e-9, 2e-9) - 1e-9).abs() < 1e-24);
        assert!((relative_error(100.0, 101.0) - 1.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn every_op_passes_finite_difference_check() {
        for r in all_op_checks() {
            assert!(
                r.max_rel_err < 1e-5,
                "op {} failed gradient check: max rel err {:.3e} over {} partials",
                r.name,
                r.max_rel_err,
                r.checked
            );
        }
    }
}
