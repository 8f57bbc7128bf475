//! End-to-end OCR check: text pages rendered under coloured, shaded light
//! are transcribed before and after the pipeline. Needs an external OCR
//! command; without one the outcome is `Unavailable`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_png;
use crate::metrics::{edit_distance, run_ocr};
use crate::pipeline::{decompose, normalize_text, EvalOptions, Separator, WhiteBalancer};
use crate::synth::font::{cell, random_lines, render_text};
use crate::synth::{synth_sample, SynthesisParams};

pub const DEMO_IMAGES: usize = 20;
pub const DEMO_SIZE: usize = 192;
const SCALE: usize = 3;
const MARGIN: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OcrDemo {
    Unavailable(String),
    /// Aggregate error rates: total edit distance over total reference
    /// length, across all pages.
    Completed {
        images: usize,
        cer_before: f64,
        cer_after: f64,
        wer_before: f64,
        wer_after: f64,
    },
}

#[derive(Default)]
struct Tally {
    chars: usize,
    char_edits: usize,
    words: usize,
    word_edits: usize,
}

impl Tally {
    fn add(&mut self, reference: &str, hypothesis: &str) {
        let (r, h) = (normalize_text(reference), normalize_text(hypothesis));
        let (rc, hc): (Vec<char>, Vec<char>) = (r.chars().collect(), h.chars().collect());
        let (rw, hw): (Vec<&str>, Vec<&str>) = (r.split(' ').collect(), h.split_whitespace().collect());
        self.chars += rc.len();
        self.char_edits += edit_distance(&rc, &hc);
        self.words += rw.len();
        self.word_edits += edit_distance(&rw, &hw);
    }

    fn rates(&self) -> (f64, f64) {
        (self.char_edits as f64 / self.chars as f64, self.word_edits as f64 / self.words as f64)
    }
}

/// Renders `DEMO_IMAGES` pages, runs the OCR command on each input and on
/// its recovered reflectance, and totals the error rates. Images are
/// written under `scratch`.
pub fn run(
    wb: &(dyn WhiteBalancer + Sync),
    separator: &(dyn Separator + Sync),
    opts: &EvalOptions,
    seed: u64,
    scratch: &Path,
) -> Result<OcrDemo> {
    let Some(cmd) = &opts.ocr_cmd else {
        return Ok(OcrDemo::Unavailable("no OCR command configured".into()));
    };
    std::fs::create_dir_all(scratch)?;
    let params = SynthesisParams {
        size: DEMO_SIZE,
        seed,
        ..SynthesisParams::default()
    };
    let (cw, lh) = cell(SCALE);
    let (cols, rows) = ((DEMO_SIZE - 2 * MARGIN) / cw, (DEMO_SIZE - 2 * MARGIN) / lh);
    let (mut before, mut after) = (Tally::default(), Tally::default());
    for i in 0..DEMO_IMAGES {
        let mut rng = params.sample_rng(i as u64);
        let lines = random_lines(&mut rng, rows, cols);
        let texture = render_text(&lines, DEMO_SIZE, DEMO_SIZE, SCALE, MARGIN, 0.1, 0.9);
        let sample = synth_sample(&texture, &params, &mut rng)?;
        let d = decompose(&sample.input, wb, separator, None)?;
        let (raw, clean) = (scratch.join(format!("page{i:02}_input.png")), scratch.join(format!("page{i:02}_reflectance.png")));
        write_png(&raw, &sample.input, true, false)?;
        write_png(&clean, &d.reflectance, true, false)?;
        let truth = lines.join("\n");
        for (path, tally) in [(&raw, &mut before), (&clean, &mut after)] {
            match run_ocr(path, cmd, opts.timeout()) {
                Ok(text) => tally.add(&truth, &text),
                Err(e @ (Error::OcrUnavailable(_) | Error::Timeout(_))) => return Ok(OcrDemo::Unavailable(e.to_string())),
                Err(e) => return Err(e),
            }
        }
    }
    let ((cer_before, wer_before), (cer_after, wer_after)) = (before.rates(), after.rates());
    Ok(OcrDemo::Completed {
        images: DEMO_IMAGES,
        cer_before,
        cer_after,
        wer_before,
        wer_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{OracleSeparator, OracleWhiteBalancer};
    use crate::imaging::{LinearImage, ShadingMap, WBKernel};

    #[test]
    fn tally_totals_over_pages() {
        let mut t = Tally::default();
        t.add("AB CD", "AB CD");
        t.add("EFGH", "EFGX");
        let (c, w) = t.rates();
        assert!((c - 1.0 / 9.0).abs() < 1e-12);
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_command_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let n = DEMO_SIZE;
        let wb = OracleWhiteBalancer(WBKernel::constant(n, n, [1.0; 3]));
        let sep = OracleSeparator { material: LinearImage::constant(n, n, [1.0; 3]), shading: ShadingMap::constant(n, n, 1.0).unwrap() };
        let none = run(&wb, &sep, &EvalOptions::default(), 0, dir.path()).unwrap();
        assert!(matches!(none, OcrDemo::Unavailable(_)));
        let opts = EvalOptions { ocr_cmd: Some("no-such-ocr-binary-xyz {input}".into()), ..EvalOptions::default() };
        assert!(matches!(run(&wb, &sep, &opts, 0, dir.path()).unwrap(), OcrDemo::Unavailable(_)));
    }

    #[test]
    fn echo_command_runs_every_page() {
        // echo returns the path rather than the page text, but exercises the loop.
        let dir = tempfile::tempdir().unwrap();
        let n = DEMO_SIZE;
        let wb = OracleWhiteBalancer(WBKernel::constant(n, n, [1.0; 3]));
        let sep = OracleSeparator { material: LinearImage::constant(n, n, [1.0; 3]), shading: ShadingMap::constant(n, n, 1.0).unwrap() };
        let opts = EvalOptions { ocr_cmd: Some("echo {input}".into()), ..EvalOptions::default() };
        match run(&wb, &sep, &opts, 0, dir.path()).unwrap() {
            OcrDemo::Completed { images, cer_before, cer_after, .. } => {
                assert_eq!(images, DEMO_IMAGES);
                assert!(cer_before > 0.5 && cer_after > 0.5);
            }
            other => panic!("{other:?}"),
        }
        assert!(dir.path().join("page19_reflectance.png").exists());
    }
}
