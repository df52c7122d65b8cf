//! Render floorplans to raster images: black wall strokes on white,
//! doors as gaps with a thin leaf stroke, windows as double strokes.

use std::path::Path;

use crate::geometry::{EntityKind, Floorplan, Point};
use crate::tensor::DenseArray;
use crate::Scalar;

use super::DataError;

/// An 8-bit RGB image in row-major `[h][w][3]` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn white(width: usize, height: usize) -> RasterImage {
        RasterImage { width, height, pixels: vec![255; width * height * 3] }
    }

    /// Paint every pixel whose center lies inside the rect `[x0,x1]×[y0,y1]`.
    fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, gray: u8) {
        // Pixel j has center j + 0.5; centers in [a, b) are j in [ceil(a-0.5), ceil(b-0.5)).
        let lo = |a: f64| (a - 0.5).ceil().max(0.0) as usize;
        let jx0 = lo(x0);
        let jy0 = lo(y0);
        let jx1 = (lo(x1)).min(self.width);
        let jy1 = (lo(y1)).min(self.height);
        for y in jy0..jy1 {
            for x in jx0..jx1 {
                let p = (y * self.width + x) * 3;
                self.pixels[p] = gray;
                self.pixels[p + 1] = gray;
                self.pixels[p + 2] = gray;
            }
        }
    }

    /// Stroke the segment `a -> b` (axis-aligned) with the given thickness,
    /// extending both ends by half a thickness so corners close.
    fn stroke_segment(&mut self, a: Point, b: Point, thick: f64, gray: u8) {
        let h = thick / 2.0;
        let (x0, x1) = (a[0].min(b[0]), a[0].max(b[0]));
        let (y0, y1) = (a[1].min(b[1]), a[1].max(b[1]));
        assert!(x0 == x1 || y0 == y1, "wall segments must be axis-aligned");
        self.fill_rect(x0 - h, y0 - h, x1 + h, y1 + h, gray);
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DataError> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions");
        img.save(path).map_err(|e| DataError::Image {
            path: path.display().to_string(),
            err: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<RasterImage, DataError> {
        let err = |e: String| DataError::Image { path: path.display().to_string(), err: e };
        let img = image::ImageReader::open(path)
            .map_err(|e| err(e.to_string()))?
            .decode()
            .map_err(|e| err(e.to_string()))?
            .to_rgb8();
        Ok(RasterImage {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.into_raw(),
        })
    }
}

/// Render a floorplan: white background, black wall strokes of `wall_px`
/// centered on room edges, doors as wall gaps crossed by a thin stroke,
/// windows as double parallel thin strokes.
pub fn rasterize_plan(fp: &Floorplan, wall_px: usize) -> RasterImage {
    let mut img = RasterImage::white(fp.width as usize, fp.height as usize);
    let thick = wall_px.max(1) as f64;
    for room in fp.of_kind(EntityKind::Room) {
        let n = room.corners.len();
        for i in 0..n {
            img.stroke_segment(room.corners[i], room.corners[(i + 1) % n], thick, 0);
        }
    }
    // Openings interrupt the wall; clear a band slightly wider than the wall.
    let gap = thick + 2.0;
    for e in &fp.entities {
        if e.kind == EntityKind::Room || e.corners.len() != 2 {
            continue;
        }
        let (a, b) = (e.corners[0], e.corners[1]);
        img.stroke_segment(a, b, gap, 255);
        match e.kind {
            EntityKind::Door => img.stroke_segment(a, b, 1.0, 0),
            EntityKind::Window => {
                // Two thin strokes offset to either side of the wall line.
                let off = (thick / 2.0).max(1.0);
                let (dx, dy) = if a[0] == b[0] { (off, 0.0) } else { (0.0, off) };
                let shift = |p: Point, s: f64| [p[0] + s * dx, p[1] + s * dy];
                img.stroke_segment(shift(a, -1.0), shift(b, -1.0), 1.0, 0);
                img.stroke_segment(shift(a, 1.0), shift(b, 1.0), 1.0, 0);
            }
            EntityKind::Room => unreachable!(),
        }
    }
    img
}

/// Convert an RGB render to the model's `[h*w, channels]` input in `[0, 1]`.
/// One channel takes the luminance; three channels pass RGB through.
pub fn image_to_input<T: Scalar>(img: &RasterImage, channels: usize) -> DenseArray<T> {
    assert!(channels == 1 || channels == 3, "supported channel counts are 1 and 3");
    let n = img.width * img.height;
    let mut out = DenseArray::zeros(&[n, channels]);
    for i in 0..n {
        let (r, g, b) =
            (img.pixels[3 * i] as f64, img.pixels[3 * i + 1] as f64, img.pixels[3 * i + 2] as f64);
        if channels == 1 {
            let lum = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
            out.set(i, 0, T::from_f64_lossy(lum));
        } else {
            out.set(i, 0, T::from_f64_lossy(r / 255.0));
            out.set(i, 1, T::from_f64_lossy(g / 255.0));
            out.set(i, 2, T::from_f64_lossy(b / 255.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_floorplan, GeneratorConfig};
    use crate::geometry::Entity;

    fn gray_at(img: &RasterImage, x: usize, y: usize) -> u8 {
        img.pixels[(y * img.width + x) * 3]
    }

    #[test]
    fn empty_plan_renders_all_white() {
        let fp = Floorplan { width: 32, height: 32, entities: vec![] };
        let img = rasterize_plan(&fp, 3);
        assert!(img.pixels.iter().all(|&p| p == 255));
    }

    #[test]
    fn wall_stroke_is_centered_with_configured_thickness() {
        let room = Entity {
            kind: EntityKind::Room,
            label: 0,
            corners: vec![[8.0, 8.0], [8.0, 24.0], [24.0, 24.0], [24.0, 8.0]],
        };
        let img = rasterize_plan(&Floorplan { width: 32, height: 32, entities: vec![room] }, 3);
        // Vertical wall at x=8: centers in [6.5, 9.5) -> columns 6, 7, 8.
        for x in [6, 7, 8] {
            assert_eq!(gray_at(&img, x, 16), 0);
        }
        for x in [5, 9] {
            assert_eq!(gray_at(&img, x, 16), 255);
        }
        assert_eq!(gray_at(&img, 16, 16), 255, "room interior stays white");
    }

    #[test]
    fn door_clears_the_wall_and_leaves_a_thin_stroke() {
        let room = Entity {
            kind: EntityKind::Room,
            label: 0,
            corners: vec![[8.0, 8.0], [8.0, 24.0], [24.0, 24.0], [24.0, 8.0]],
        };
        let door = Entity {
            kind: EntityKind::Door,
            label: 7,
            corners: vec![[8.0, 12.0], [8.0, 20.0]],
        };
        let img =
            rasterize_plan(&Floorplan { width: 32, height: 32, entities: vec![room, door] }, 3);
        // Mid-door: gap band white except the 1px leaf at the wall line
        // (the leaf rect [7.5, 8.5) lands on column 7).
        assert_eq!(gray_at(&img, 7, 16), 0, "door leaf stroke");
        assert_eq!(gray_at(&img, 6, 16), 255, "gap west of leaf");
        assert_eq!(gray_at(&img, 8, 16), 255, "gap east of leaf");
        // Wall intact away from the door (gap band covers rows 9..=21).
        assert_eq!(gray_at(&img, 7, 22), 0);
    }

    #[test]
    fn window_renders_double_strokes_off_the_wall_line() {
        let room = Entity {
            kind: EntityKind::Room,
            label: 0,
            corners: vec![[8.0, 8.0], [8.0, 24.0], [24.0, 24.0], [24.0, 8.0]],
        };
        let win = Entity {
            kind: EntityKind::Window,
            label: 6,
            corners: vec![[8.0, 12.0], [8.0, 20.0]],
        };
        let img =
            rasterize_plan(&Floorplan { width: 32, height: 32, entities: vec![room, win] }, 3);
        assert_eq!(gray_at(&img, 8, 16), 255, "center line cleared");
        // Strokes at x = 8 ± 1.5: pixel centers 6.5 and 9.5 land in cols 6 and 9.
        assert_eq!(gray_at(&img, 6, 16), 0, "west pane stroke");
        assert_eq!(gray_at(&img, 9, 16), 0, "east pane stroke");
    }

    #[test]
    fn identical_plans_render_byte_identical() {
        let cfg = GeneratorConfig::default();
        let fp = generate_floorplan(&cfg, 9).unwrap();
        let a = rasterize_plan(&fp, cfg.wall_px);
        let b = rasterize_plan(&fp, cfg.wall_px);
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn png_round_trip_preserves_bytes() {
        let cfg = GeneratorConfig::default();
        let fp = generate_floorplan(&cfg, 2).unwrap();
        let img = rasterize_plan(&fp, cfg.wall_px);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.png");
        img.save_png(&path).unwrap();
        assert_eq!(RasterImage::load_png(&path).unwrap(), img);
    }

    #[test]
    fn grayscale_input_is_normalized() {
        let mut img = RasterImage::white(4, 4);
        img.fill_rect(0.0, 0.0, 1.0, 1.0, 0);
        let x = image_to_input::<f64>(&img, 1);
        assert_eq!(x.shape(), &[16, 1]);
        assert_eq!(x.at(0, 0), 0.0);
        assert_eq!(x.at(1, 0), 1.0);
    }
}
