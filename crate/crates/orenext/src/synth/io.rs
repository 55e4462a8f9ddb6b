//! Bit-exact dataset files.
//!
//! Layout of a dataset directory:
//!
//! * `manifest.txt` — version line, scene count, the generator spec (TOML
//!   between `spec-begin`/`spec-end` markers), then one `file <name> <sha256>`
//!   line per stored file.
//! * `scene_<index>.pgm` — the image as binary 8-bit PGM (`P5`).
//! * `scene_<index>.ann` — plain-text annotations: per instance a box line,
//!   a polygon block (floats printed with Rust's shortest-round-trip
//!   formatting, so parsing reproduces the exact bits), and the mask as a
//!   run-length encoding (alternating zero/one run lengths, row-major,
//!   starting with a zero-run).
//!
//! Reads verify every checksum before parsing and name the offending file
//! on mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{BoxF, Pt};

use super::{InstanceAnnotation, Mask, Scene, SceneSpec};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const MANIFEST_VERSION: &str = "orenext-dataset 1";

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// Serializes a grayscale image as binary PGM.
pub fn write_pgm(w: usize, h: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary 8-bit PGM produced by [`write_pgm`].
pub fn read_pgm(bytes: &[u8], file: &str) -> Result<(usize, usize, Vec<u8>)> {
    let corrupt = |reason: &str| Error::Corrupt {
        file: file.to_string(),
        reason: reason.to_string(),
    };
    // Header: three whitespace-separated tokens after the magic, then a
    // single whitespace byte, then raw pixels.
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Option<(usize, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then_some((start, pos))
    };
    let (s, e) = token(bytes).ok_or_else(|| corrupt("missing magic"))?;
    if &bytes[s..e] != b"P5" {
        return Err(corrupt("not a binary PGM"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let (s, e) = token(bytes).ok_or_else(|| corrupt("truncated header"))?;
        *d = std::str::from_utf8(&bytes[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| corrupt("bad header integer"))?;
    }
    let [w, h, maxval] = dims;
    if maxval != 255 {
        return Err(corrupt("only 8-bit images are supported"));
    }
    pos += 1; // the single whitespace byte after the header
    if bytes.len() < pos || bytes.len() - pos != w * h {
        return Err(corrupt("pixel payload has the wrong length"));
    }
    Ok((w, h, bytes[pos..].to_vec()))
}

/// Run-length encodes a mask row-major: alternating zero/one run lengths,
/// starting with a zero-run (possibly of length 0).
pub fn rle_encode(mask: &Mask) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0usize;
    for &bit in &mask.data {
        if bit == current {
            len += 1;
        } else {
            runs.push(len);
            current = bit;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

/// Inverse of [`rle_encode`].
pub fn rle_decode(runs: &[usize], h: usize, w: usize, file: &str) -> Result<Mask> {
    let total: usize = runs.iter().sum();
    if total != h * w {
        return Err(Error::Corrupt {
            file: file.to_string(),
            reason: format!("mask runs cover {total} pixels, grid has {}", h * w),
        });
    }
    let mut data = Vec::with_capacity(h * w);
    let mut value = false;
    for &run in runs {
        data.extend(std::iter::repeat_n(value, run));
        value = !value;
    }
    Ok(Mask { h, w, data })
}

/// Serializes a scene's annotations as plain text.
pub fn write_ann(scene: &Scene) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scene {}", scene.index);
    let _ = writeln!(out, "size {} {}", scene.h, scene.w);
    let _ = writeln!(out, "count {}", scene.instances.len());
    for ann in &scene.instances {
        let _ = writeln!(out, "instance {}", ann.id);
        let _ = writeln!(
            out,
            "box {} {} {} {}",
            ann.box_.x0, ann.box_.y0, ann.box_.x1, ann.box_.y1
        );
        let _ = writeln!(out, "polygon {}", ann.polygon.len());
        for p in &ann.polygon {
            let _ = writeln!(out, "{} {}", p.x, p.y);
        }
        let runs = rle_encode(&ann.mask);
        let _ = writeln!(out, "mask {}", runs.len());
        let mut line = String::new();
        for (i, r) in runs.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{r}");
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

/// Tokenizing line reader for the annotation grammar.
struct Lines<'a> {
    file: &'a str,
    lines: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, file: &'a str) -> Self {
        Lines { file, lines: text.lines(), lineno: 0 }
    }

    fn corrupt(&self, reason: String) -> Error {
        Error::Corrupt {
            file: self.file.to_string(),
            reason: format!("line {}: {reason}", self.lineno),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.lines
            .next()
            .ok_or_else(|| self.corrupt("unexpected end of file".to_string()))
    }

    /// Reads a line of the form `<keyword> <fields...>`.
    fn keyword_line(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_ascii_whitespace();
        match parts.next() {
            Some(k) if k == keyword => Ok(parts.collect()),
            got => Err(self.corrupt(format!("expected '{keyword}', got {got:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.corrupt(format!("cannot parse token '{tok}'")))
    }
}

/// Parses the text produced by [`write_ann`].
pub fn read_ann(text: &str, file: &str) -> Result<(u64, usize, usize, Vec<InstanceAnnotation>)> {
    let mut r = Lines::new(text, file);
    let idx_tok = r.keyword_line("scene")?;
    let index: u64 = r.parse(idx_tok.first().copied().unwrap_or(""))?;
    let size_tok = r.keyword_line("size")?;
    if size_tok.len() != 2 {
        return Err(r.corrupt("size needs two fields".to_string()));
    }
    let h: usize = r.parse(size_tok[0])?;
    let w: usize = r.parse(size_tok[1])?;
    let count_tok = r.keyword_line("count")?;
    let count: usize = r.parse(count_tok.first().copied().unwrap_or(""))?;

    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let id_tok = r.keyword_line("instance")?;
        let id: usize = r.parse(id_tok.first().copied().unwrap_or(""))?;
        let box_tok = r.keyword_line("box")?;
        if box_tok.len() != 4 {
            return Err(r.corrupt("box needs four fields".to_string()));
        }
        let box_ = BoxF::new(
            r.parse(box_tok[0])?,
            r.parse(box_tok[1])?,
            r.parse(box_tok[2])?,
            r.parse(box_tok[3])?,
        );
        let poly_tok = r.keyword_line("polygon")?;
        let k: usize = r.parse(poly_tok.first().copied().unwrap_or(""))?;
        let mut polygon = Vec::with_capacity(k);
        for _ in 0..k {
            let line = r.next_line()?;
            let mut parts = line.split_ascii_whitespace();
            let x: f64 = r.parse(parts.next().unwrap_or(""))?;
            let y: f64 = r.parse(parts.next().unwrap_or(""))?;
            polygon.push(Pt::new(x, y));
        }
        let mask_tok = r.keyword_line("mask")?;
        let n_runs: usize = r.parse(mask_tok.first().copied().unwrap_or(""))?;
        let run_line = r.next_line()?;
        let runs: Vec<usize> = run_line
            .split_ascii_whitespace()
            .map(|t| r.parse(t))
            .collect::<Result<_>>()?;
        if runs.len() != n_runs {
            return Err(r.corrupt(format!("expected {n_runs} runs, got {}", runs.len())));
        }
        let mask = rle_decode(&runs, h, w, file)?;
        instances.push(InstanceAnnotation { id, mask, polygon, box_ });
    }
    Ok((index, h, w, instances))
}

fn scene_basename(index: u64) -> String {
    format!("scene_{index:06}")
}

/// Writes scenes plus a checksummed manifest into `dir` (created if
/// missing). Returns the manifest path.
pub fn write_dataset(scenes: &[Scene], spec: &SceneSpec, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "{MANIFEST_VERSION}");
    let _ = writeln!(manifest, "scenes {}", scenes.len());
    let _ = writeln!(manifest, "spec-begin");
    let spec_toml = toml::to_string(spec)
        .map_err(|e| Error::config(format!("spec does not serialize: {e}")))?;
    manifest.push_str(&spec_toml);
    let _ = writeln!(manifest, "spec-end");

    for scene in scenes {
        let base = scene_basename(scene.index);
        let pgm = write_pgm(scene.w, scene.h, &scene.image);
        let ann = write_ann(scene).into_bytes();
        for (ext, bytes) in [("pgm", &pgm), ("ann", &ann)] {
            let name = format!("{base}.{ext}");
            std::fs::write(dir.join(&name), bytes)?;
            let _ = writeln!(manifest, "file {name} {}", sha256_hex(bytes));
        }
    }
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, manifest)?;
    Ok(path)
}

/// Reads a dataset directory back, verifying every checksum first.
pub fn read_dataset(dir: &Path) -> Result<(SceneSpec, Vec<Scene>)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest = std::fs::read_to_string(&manifest_path)?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MANIFEST_VERSION) {
        return Err(Error::Corrupt {
            file: MANIFEST_NAME.to_string(),
            reason: "unknown version line".to_string(),
        });
    }
    let corrupt_manifest = |reason: String| Error::Corrupt {
        file: MANIFEST_NAME.to_string(),
        reason,
    };
    let scene_count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("scenes "))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| corrupt_manifest("bad scene count line".to_string()))?;
    if lines.next() != Some("spec-begin") {
        return Err(corrupt_manifest("missing spec-begin".to_string()));
    }
    let mut spec_text = String::new();
    for line in lines.by_ref() {
        if line == "spec-end" {
            break;
        }
        spec_text.push_str(line);
        spec_text.push('\n');
    }
    let spec: SceneSpec = toml::from_str(&spec_text)
        .map_err(|e| corrupt_manifest(format!("spec does not parse: {e}")))?;

    // Verify all checksums before trusting any content.
    let mut files = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("file ")
            .ok_or_else(|| corrupt_manifest(format!("unrecognized line '{line}'")))?;
        let (name, want) = rest
            .split_once(' ')
            .ok_or_else(|| corrupt_manifest(format!("malformed file line '{line}'")))?;
        let bytes = std::fs::read(dir.join(name))?;
        let got = sha256_hex(&bytes);
        if got != want {
            return Err(Error::Corrupt {
                file: name.to_string(),
                reason: "checksum mismatch".to_string(),
            });
        }
        files.push((name.to_string(), bytes));
    }

    let mut scenes = Vec::with_capacity(scene_count);
    for pair in files.chunks(2) {
        let [(pgm_name, pgm_bytes), (ann_name, ann_bytes)] = pair else {
            return Err(corrupt_manifest("odd number of scene files".to_string()));
        };
        let (w, h, image) = read_pgm(pgm_bytes, pgm_name)?;
        let text = std::str::from_utf8(ann_bytes).map_err(|_| Error::Corrupt {
            file: ann_name.clone(),
            reason: "not valid UTF-8".to_string(),
        })?;
        let (index, ann_h, ann_w, instances) = read_ann(text, ann_name)?;
        if (ann_h, ann_w) != (h, w) {
            return Err(Error::Corrupt {
                file: ann_name.clone(),
                reason: format!("annotation grid {ann_h}x{ann_w} vs image {h}x{w}"),
            });
        }
        scenes.push(Scene { index, h, w, image, instances });
    }
    if scenes.len() != scene_count {
        return Err(corrupt_manifest(format!(
            "manifest promises {scene_count} scenes, found {}",
            scenes.len()
        )));
    }
    Ok((spec, scenes))
}
