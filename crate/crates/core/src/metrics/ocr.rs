//! Optional external OCR. Nothing else depends on an OCR engine being
//! installed.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "{input}";

/// Runs `template` with `{input}` replaced by `image` and returns its
/// standard output. The template is split on whitespace; no shell is
/// involved. A missing program or non-zero exit yields `OcrUnavailable`.
pub fn run_ocr(image: &Path, template: &str, timeout: Duration) -> Result<String> {
    if !template.contains(PLACEHOLDER) {
        return Err(Error::InvalidValue(format!("OCR command must contain {PLACEHOLDER}")));
    }
    let path = image.to_string_lossy();
    let mut parts = template.split_whitespace().map(|t| t.replace(PLACEHOLDER, &path));
    let program = parts.next().ok_or_else(|| Error::InvalidValue("empty OCR command".into()))?;
    let mut child = Command::new(&program)
        .args(parts)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::OcrUnavailable(format!("{program}: {e}")))?;

    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out = thread::spawn(move || {
        let mut s = Vec::new();
        stdout.read_to_end(&mut s).map(|_| s)
    });
    let err = thread::spawn(move || {
        let mut s = Vec::new();
        let _ = stderr.read_to_end(&mut s);
        s
    });

    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Timeout(timeout));
        }
        thread::sleep(Duration::from_millis(10));
    };
    let stdout = out.join().map_err(|_| Error::OcrUnavailable("reader thread panicked".into()))??;
    let stderr = err.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::OcrUnavailable(format!(
            "{program} exited with {status}: {}",
            String::from_utf8_lossy(&stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&stdout).into_owned())
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    #[test]
    fn captures_stdout() {
        let text = run_ocr(Path::new("page.png"), "echo recognised {input}", Duration::from_secs(5)).unwrap();
        assert_eq!(text.trim(), "recognised page.png");
    }

    #[test]
    fn missing_program_is_unavailable() {
        let r = run_ocr(Path::new("x.png"), "no-such-ocr-binary-xyz {input}", Duration::from_secs(1));
        assert!(matches!(r, Err(Error::OcrUnavailable(_))));
    }

    #[test]
    fn failing_program_is_unavailable() {
        let r = run_ocr(Path::new("x.png"), "false {input}", Duration::from_secs(5));
        assert!(matches!(r, Err(Error::OcrUnavailable(_))));
    }

    #[test]
    fn slow_program_times_out() {
        let r = run_ocr(Path::new("5"), "sleep {input}", Duration::from_millis(200));
        assert!(matches!(r, Err(Error::Timeout(_))));
    }

    #[test]
    fn template_needs_placeholder() {
        assert!(matches!(run_ocr(Path::new("x"), "echo hi", Duration::from_secs(1)), Err(Error::InvalidValue(_))));
    }
}
