//! Procedural document pages: dark glyph-like strokes in lines of words on
//! a light ground.

use rand::Rng;

use super::SynthesisParams;
use crate::imaging::LinearImage;

pub const BACKGROUND_RANGE: (f32, f32) = (0.85, 0.98);
pub const INK_RANGE: (f32, f32) = (0.04, 0.25);

/// Draws one page. With `text_density == 0` the page is blank.
pub fn gen_text_texture<R: Rng>(rng: &mut R, params: &SynthesisParams) -> LinearImage {
    let n = params.size;
    let bg = rng.gen_range(BACKGROUND_RANGE.0..=BACKGROUND_RANGE.1);
    let ink = rng.gen_range(INK_RANGE.0..=INK_RANGE.1);
    let mut page = vec![false; n * n];
    if params.text_density > 0.0 {
        draw_lines(rng, &mut page, n, params.text_density);
    }
    LinearImage::from_fn(n, n, |x, y| if page[y * n + x] { [ink; 3] } else { [bg; 3] })
}

fn draw_lines<R: Rng>(rng: &mut R, page: &mut [bool], n: usize, density: f32) {
    let margin = (n / 16).max(1);
    let mut y = margin + rng.gen_range(0..=margin);
    while y + 5 < n - margin {
        let glyph_h = rng.gen_range(4..=6usize);
        let line_h = glyph_h + rng.gen_range(2..=4usize);
        if y + glyph_h >= n - margin {
            break;
        }
        if rng.gen::<f32>() < density {
            let mut x = margin + rng.gen_range(0..=margin);
            while x + 3 < n - margin {
                let letters = rng.gen_range(2..=6usize);
                for _ in 0..letters {
                    let gw = rng.gen_range(2..=4usize);
                    if x + gw >= n - margin {
                        break;
                    }
                    draw_glyph(rng, page, n, x, y, gw, glyph_h);
                    x += gw + 1;
                }
                x += rng.gen_range(2..=3usize);
            }
        }
        y += line_h;
    }
}

/// A glyph is a few strokes inside its box: verticals, a top or bottom bar,
/// or a middle crossbar.
fn draw_glyph<R: Rng>(rng: &mut R, page: &mut [bool], n: usize, x0: usize, y0: usize, w: usize, h: usize) {
    let mut set = |x: usize, y: usize| page[y * n + x] = true;
    let strokes: u8 = rng.gen_range(1..16);
    if strokes & 1 != 0 {
        (y0..y0 + h).for_each(|y| set(x0, y));
    }
    if strokes & 2 != 0 {
        (y0..y0 + h).for_each(|y| set(x0 + w - 1, y));
    }
    if strokes & 4 != 0 {
        let row = if rng.gen_bool(0.5) { y0 } else { y0 + h - 1 };
        (x0..x0 + w).for_each(|x| set(x, row));
    }
    if strokes & 8 != 0 {
        (x0..x0 + w).for_each(|x| set(x, y0 + h / 2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Raster;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn luminance(px: &[f32]) -> f32 {
        0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2]
    }

    #[test]
    fn blank_page_is_constant() {
        let p = SynthesisParams {
            text_density: 0.0,
            ..SynthesisParams::default()
        };
        let t = gen_text_texture(&mut ChaCha8Rng::seed_from_u64(1), &p);
        let first = t.pixel(0, 0);
        assert!(t.data().chunks_exact(3).all(|px| px == first));
        assert!(luminance(&first) > 0.8);
    }

    #[test]
    fn deterministic() {
        let p = SynthesisParams::default();
        let a = gen_text_texture(&mut ChaCha8Rng::seed_from_u64(2), &p);
        let b = gen_text_texture(&mut ChaCha8Rng::seed_from_u64(2), &p);
        assert_eq!(a, b);
    }

    #[test]
    fn luminance_histogram_is_bimodal() {
        let p = SynthesisParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hist = [0usize; 10];
        for _ in 0..50 {
            let t = gen_text_texture(&mut rng, &p);
            for px in t.data().chunks_exact(3) {
                assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
                let l = luminance(px);
                hist[((l * 10.0) as usize).min(9)] += 1;
            }
        }
        let dark: usize = hist[..3].iter().sum();
        let light: usize = hist[8..].iter().sum();
        let middle: usize = hist[3..8].iter().sum();
        assert_eq!(middle, 0, "{hist:?}");
        assert!(dark > 0 && light > dark, "{hist:?}");
        // ink covers a visible but minor share of the page
        let ink_share = dark as f64 / (dark + light) as f64;
        assert!((0.03..0.5).contains(&ink_share), "{ink_share}");
    }
}
