//! Scratch probe: do teacher outputs react to a changed input token?

use floorvec::codec::Token;
use floorvec::model::{Model, ModelConfig};
use floorvec::tensor::DenseArray;

fn main() {
    let cfg = ModelConfig::desk();
    let model = Model::<f64>::new(cfg.clone(), 9);
    let n = cfg.image_size * cfg.image_size;
    let image = DenseArray::from_vec(
        &[n, cfg.in_channels],
        (0..n).map(|i| ((i % 17) as f64) / 17.0).collect(),
    );
    let base = vec![
        Token::bos(),
        Token::corner(30.0, 40.0, 2),
        Token::corner(30.0, 90.0, 2),
        Token::corner(80.0, 90.0, 2),
        Token::corner(80.0, 40.0, 2),
        Token::sep(),
        Token::corner(12.0, 12.0, 1),
    ];
    let mut alt = base.clone();
    alt[1] = Token::corner(100.0, 20.0, 4);

    let (tl_a, sl_a, co_a) = model.teacher_eval(&image, &base);
    let (tl_b, sl_b, co_b) = model.teacher_eval(&image, &alt);
    println!("rows {} cols {}", tl_a.rows(), tl_a.cols());
    for l in 0..base.len() {
        let dt: f64 = (0..tl_a.cols())
            .map(|c| (tl_a.at(l, c) - tl_b.at(l, c)).abs())
            .fold(0.0, f64::max);
        let ds: f64 = (0..sl_a.cols())
            .map(|c| (sl_a.at(l, c) - sl_b.at(l, c)).abs())
            .fold(0.0, f64::max);
        let dc: f64 = (0..2).map(|c| (co_a.at(l, c) - co_b.at(l, c)).abs()).fold(0.0, f64::max);
        println!("pos {l}: dtoken {dt:.3e} dsem {ds:.3e} dcoord {dc:.3e}");
    }
}
