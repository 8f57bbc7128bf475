//! A 5×7 bitmap font (A–Z, 0–9) for rendering pages with known text.

use rand::Rng;

use crate::imaging::LinearImage;

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Rows top to bottom, bit 4 is the leftmost column.
const GLYPHS: [(char, [u8; GLYPH_H]); 36] = [
    ('A', [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('B', [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E]),
    ('C', [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E]),
    ('D', [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E]),
    ('E', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F]),
    ('F', [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10]),
    ('G', [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F]),
    ('H', [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11]),
    ('I', [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('J', [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C]),
    ('K', [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11]),
    ('L', [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F]),
    ('M', [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11]),
    ('N', [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11]),
    ('O', [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('P', [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10]),
    ('Q', [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D]),
    ('R', [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11]),
    ('S', [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E]),
    ('T', [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04]),
    ('U', [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E]),
    ('V', [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04]),
    ('W', [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A]),
    ('X', [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11]),
    ('Y', [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04]),
    ('Z', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F]),
    ('0', [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E]),
    ('1', [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E]),
    ('2', [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F]),
    ('3', [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E]),
    ('4', [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02]),
    ('5', [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E]),
    ('6', [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E]),
    ('7', [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08]),
    ('8', [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E]),
    ('9', [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C]),
];

fn glyph(c: char) -> Option<&'static [u8; GLYPH_H]> {
    GLYPHS.iter().find(|(g, _)| *g == c.to_ascii_uppercase()).map(|(_, rows)| rows)
}

const WORDS: [&str; 24] = [
    "THE", "PAGE", "LIGHT", "PAPER", "COLOR", "SHADE", "TEXT", "INK", "WHITE", "PRINT", "LINE", "NOTE", "DATA",
    "FORM", "BOOK", "READ", "MARK", "TONE", "PLAIN", "SCAN", "LEVEL", "FIELD", "2024", "17",
];

/// Pixel size of one character cell (glyph plus one-pixel gap) and one line
/// (glyph plus three-pixel leading), before scaling.
pub fn cell(scale: usize) -> (usize, usize) {
    ((GLYPH_W + 1) * scale, (GLYPH_H + 3) * scale)
}

/// Random lines of words, each at most `max_chars` long.
pub fn random_lines<R: Rng>(rng: &mut R, lines: usize, max_chars: usize) -> Vec<String> {
    (0..lines)
        .map(|_| {
            let mut line = String::new();
            loop {
                let w = WORDS[rng.gen_range(0..WORDS.len())];
                let extra = if line.is_empty() { w.len() } else { w.len() + 1 };
                if line.len() + extra > max_chars {
                    break;
                }
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(w);
            }
            line
        })
        .collect()
}

/// Renders `lines` in ink on a uniform ground, starting `margin` pixels from
/// the top left. Characters outside the font render as blanks; text past
/// the page edge is cut off.
pub fn render_text(lines: &[String], width: usize, height: usize, scale: usize, margin: usize, ink: f32, ground: f32) -> LinearImage {
    let (cw, lh) = cell(scale);
    let mut page = vec![false; width * height];
    for (row, line) in lines.iter().enumerate() {
        for (col, ch) in line.chars().enumerate() {
            let Some(bits) = glyph(ch) else { continue };
            let (x0, y0) = (margin + col * cw, margin + row * lh);
            for (gy, bits) in bits.iter().enumerate() {
                for gx in 0..GLYPH_W {
                    if bits & (0x10 >> gx) == 0 {
                        continue;
                    }
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let (x, y) = (x0 + gx * scale + dx, y0 + gy * scale + dy);
                            if x < width && y < height {
                                page[y * width + x] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    LinearImage::from_fn(width, height, |x, y| if page[y * width + x] { [ink; 3] } else { [ground; 3] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Raster;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glyphs_are_distinct_and_fit() {
        for (i, (a, ga)) in GLYPHS.iter().enumerate() {
            assert!(ga.iter().all(|r| *r < 0x20), "{a}");
            for (b, gb) in &GLYPHS[i + 1..] {
                assert_ne!(ga, gb, "{a} {b}");
            }
        }
    }

    #[test]
    fn renders_ink_only_inside_text_box() {
        let lines = vec!["HI".to_string()];
        let img = render_text(&lines, 40, 30, 2, 3, 0.1, 0.9);
        let (cw, lh) = cell(2);
        for y in 0..30 {
            for x in 0..40 {
                let v = img.pixel(x, y)[0];
                if v == 0.1 {
                    assert!(x >= 3 && x < 3 + 2 * cw && y >= 3 && y < 3 + lh);
                }
            }
        }
        let inked = img.data().iter().filter(|v| **v == 0.1).count() / 3;
        let bits: u32 = ['H', 'I'].iter().map(|c| glyph(*c).unwrap().iter().map(|r| r.count_ones()).sum::<u32>()).sum();
        assert_eq!(inked, bits as usize * 4);
    }

    #[test]
    fn random_lines_respect_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for l in random_lines(&mut rng, 20, 12) {
            assert!(!l.is_empty() && l.len() <= 12, "{l}");
            assert!(l.chars().all(|c| c == ' ' || glyph(c).is_some()));
        }
    }
}
