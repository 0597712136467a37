//! Binary file formats.
//!
//! - `.nmap`: norm map. Magic `NMAP`, version u16 (=1), width u32, height
//!   u32, then width*height little-endian f32 nx row-major, then ny.
//! - `.patch`: ground-truth surface. Magic `PTCH`, version u16 (=1), dims,
//!   then four f32 planes: nx, ny, nz, albedo.
//! - `.lpc`: latent codec. Per record: magic `LPC1`, d u32, m u32, f32 mean
//!   (d), f32 basis rows (m*d), f32 variances (m), then width u32, height
//!   u32, scope u8 (0 = x, 1 = y, 2 = joint), f32 total variance. A pair
//!   file is the x record followed by the y record.
//! - `.pgm`: binary 16-bit P5, maxval 65535, big-endian samples, plus a JSON
//!   sidecar carrying the rig metadata a capture set needs beyond pixels.
//!
//! All integers little-endian except PGM samples (big-endian per the PGM
//! convention). Writers go through a temp file and rename, so readers never
//! observe a half-written file.

use std::fs;
use std::path::{Path, PathBuf};

use papergrain_core::config::CaptureMode;
use papergrain_core::{
    CaptureSet, CodecPair, CodecScope, Component, LatentCodec, LightConfig, NormMap, SurfacePatch,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const NMAP_MAGIC: &[u8; 4] = b"NMAP";
pub const PATCH_MAGIC: &[u8; 4] = b"PTCH";
pub const LPC_MAGIC: &[u8; 4] = b"LPC1";
pub const FORMAT_VERSION: u16 = 1;

/// Writes via a sibling temp file and rename; creates parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(CliError::io(&parent))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::format(path, "path has no file name"))?;
    let tmp = parent.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(CliError::io(path))
}

/// Sequential reader over one loaded file; every shortfall names the file.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Cursor { buf, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CliError::format(self.path, "file truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4], kind: &str) -> Result<()> {
        if self.take(4)? != expected {
            return Err(CliError::format(self.path, format!("not a {kind} file (bad magic)")));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn finish(&self) -> Result<()> {
        if !self.at_end() {
            return Err(CliError::format(self.path, "trailing bytes after payload"));
        }
        Ok(())
    }
}

fn check_version(path: &Path, version: u16) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(CliError::format(path, format!("unsupported format version {version}")));
    }
    Ok(())
}

fn checked_dims(path: &Path, w: u32, h: u32) -> Result<(usize, usize)> {
    let (w, h) = (w as usize, h as usize);
    // Any real payload check happens via buffer length; this only guards the
    // multiplication used to compute it.
    w.checked_mul(h)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| CliError::format(path, "dimensions overflow"))?;
    Ok((w, h))
}

fn push_f32s<'a>(buf: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

// ---------------------------------------------------------------- norm maps

pub fn write_nmap(path: &Path, map: &NormMap) -> Result<()> {
    let (w, h) = map.dims();
    let mut buf = Vec::with_capacity(14 + 8 * map.len());
    buf.extend_from_slice(NMAP_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    push_f32s(&mut buf, map.nx());
    push_f32s(&mut buf, map.ny());
    write_atomic(path, &buf)
}

pub fn read_nmap(path: &Path) -> Result<NormMap> {
    let buf = read_file(path)?;
    let mut c = Cursor::new(&buf, path);
    c.magic(NMAP_MAGIC, "norm map")?;
    let version = c.u16()?;
    check_version(path, version)?;
    let (w, h) = checked_dims(path, c.u32()?, c.u32()?)?;
    let nx = c.f32_vec(w * h)?;
    let ny = c.f32_vec(w * h)?;
    c.finish()?;
    Ok(NormMap::new(w, h, nx, ny)?)
}

// ------------------------------------------------------------------ patches

pub fn write_patch(path: &Path, patch: &SurfacePatch) -> Result<()> {
    let (w, h) = (patch.width(), patch.height());
    let n = w * h;
    let mut buf = Vec::with_capacity(14 + 16 * n);
    buf.extend_from_slice(PATCH_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    for axis in 0..3 {
        push_f32s(&mut buf, patch.normals().iter().map(|v| &v[axis]));
    }
    push_f32s(&mut buf, patch.albedo());
    write_atomic(path, &buf)
}

/// Loads a patch; surface statistics (roughness, correlation length) are
/// re-estimated from the stored fields since the format does not carry them.
pub fn read_patch(path: &Path) -> Result<SurfacePatch> {
    let buf = read_file(path)?;
    let mut c = Cursor::new(&buf, path);
    c.magic(PATCH_MAGIC, "surface patch")?;
    let version = c.u16()?;
    check_version(path, version)?;
    let (w, h) = checked_dims(path, c.u32()?, c.u32()?)?;
    let n = w * h;
    let nx = c.f32_vec(n)?;
    let ny = c.f32_vec(n)?;
    let nz = c.f32_vec(n)?;
    let albedo = c.f32_vec(n)?;
    c.finish()?;
    let normals = (0..n).map(|i| [nx[i], ny[i], nz[i]]).collect();
    Ok(SurfacePatch::from_normals_albedo(w, h, normals, albedo)?)
}

// ------------------------------------------------------------------- codecs

/// Contents of an `.lpc` file: one codec or a per-component pair.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecFile {
    Pair(CodecPair),
    Single(LatentCodec),
}

impl CodecFile {
    /// The per-component pair the attack drivers need; a single-codec file
    /// (for example a joint fit) is a domain error here.
    pub fn into_pair(self, path: &Path) -> Result<CodecPair> {
        match self {
            CodecFile::Pair(pair) => Ok(pair),
            CodecFile::Single(_) => Err(CliError::format(
                path,
                "attack drivers need a per-component codec pair, not a single codec",
            )),
        }
    }
}

fn scope_tag(scope: CodecScope) -> u8 {
    match scope {
        CodecScope::Component(Component::X) => 0,
        CodecScope::Component(Component::Y) => 1,
        CodecScope::Joint => 2,
    }
}

fn scope_from_tag(path: &Path, tag: u8) -> Result<CodecScope> {
    match tag {
        0 => Ok(CodecScope::Component(Component::X)),
        1 => Ok(CodecScope::Component(Component::Y)),
        2 => Ok(CodecScope::Joint),
        _ => Err(CliError::format(path, format!("unknown codec scope tag {tag}"))),
    }
}

fn push_codec(buf: &mut Vec<u8>, codec: &LatentCodec) {
    let (w, h) = codec.dims();
    buf.extend_from_slice(LPC_MAGIC);
    buf.extend_from_slice(&(codec.d() as u32).to_le_bytes());
    buf.extend_from_slice(&(codec.m() as u32).to_le_bytes());
    push_f32s(buf, codec.mean());
    push_f32s(buf, codec.basis());
    push_f32s(buf, codec.explained_variance());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.push(scope_tag(codec.scope()));
    buf.extend_from_slice(&(codec.total_variance() as f32).to_le_bytes());
}

fn parse_codec(c: &mut Cursor) -> Result<LatentCodec> {
    c.magic(LPC_MAGIC, "latent codec")?;
    let d = c.u32()? as usize;
    let m = c.u32()? as usize;
    if m == 0 || d == 0 {
        return Err(CliError::format(c.path, "codec dimensions must be positive"));
    }
    if m > d || d.checked_mul(m).map_or(true, |n| n > c.buf.len() / 4) {
        return Err(CliError::format(c.path, "codec dimensions exceed file size"));
    }
    let mean = c.f32_vec(d)?;
    let basis = c.f32_vec(m * d)?;
    let variances = c.f32_vec(m)?;
    let (w, h) = checked_dims(c.path, c.u32()?, c.u32()?)?;
    let scope = scope_from_tag(c.path, c.u8()?)?;
    let total_variance = c.f32()?;
    let expected_d = match scope {
        CodecScope::Component(_) => w * h,
        CodecScope::Joint => 2 * w * h,
    };
    if d != expected_d {
        return Err(CliError::format(c.path, "codec dimension disagrees with stored scope"));
    }
    Ok(LatentCodec::from_raw(scope, w, h, mean, basis, variances, total_variance)?)
}

pub fn write_codec_pair(path: &Path, pair: &CodecPair) -> Result<()> {
    let mut buf = Vec::new();
    push_codec(&mut buf, &pair.x);
    push_codec(&mut buf, &pair.y);
    write_atomic(path, &buf)
}

pub fn write_codec_single(path: &Path, codec: &LatentCodec) -> Result<()> {
    let mut buf = Vec::new();
    push_codec(&mut buf, codec);
    write_atomic(path, &buf)
}

pub fn read_codec(path: &Path) -> Result<CodecFile> {
    let buf = read_file(path)?;
    let mut c = Cursor::new(&buf, path);
    let first = parse_codec(&mut c)?;
    if c.at_end() {
        return Ok(CodecFile::Single(first));
    }
    let second = parse_codec(&mut c)?;
    c.finish()?;
    let scopes = (first.scope(), second.scope());
    if scopes != (CodecScope::Component(Component::X), CodecScope::Component(Component::Y)) {
        return Err(CliError::format(path, "pair file must hold the x codec then the y codec"));
    }
    if first.dims() != second.dims() {
        return Err(CliError::format(path, "pair codecs disagree on dimensions"));
    }
    Ok(CodecFile::Pair(CodecPair { x: first, y: second }))
}

// ----------------------------------------------------------------- captures

/// Everything a capture set carries beyond pixel data, stored as a JSON
/// sidecar next to the PGM images it names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub mode: CaptureMode,
    pub intensity: f64,
    pub max_shift: usize,
    pub specular_weight: f64,
    pub specular_exponent: f64,
    pub directions: Vec<[f64; 3]>,
    /// Residual per-image translation; all zeros once aligned.
    pub misalignment: Vec<[i32; 2]>,
    /// Image file names, relative to this sidecar.
    pub images: Vec<String>,
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u16]) -> Result<()> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut buf = format!("P5\n{width} {height}\n65535\n").into_bytes();
    buf.reserve(2 * pixels.len());
    for p in pixels {
        buf.extend_from_slice(&p.to_be_bytes());
    }
    write_atomic(path, &buf)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let buf = read_file(path)?;
    if buf.get(..2) != Some(b"P5".as_slice()) {
        return Err(CliError::format(path, "not a binary PGM (P5) file"));
    }
    let mut pos = 2usize;
    let mut token = |what: &str| -> Result<u64> {
        // Skip whitespace and '#' comment lines between header tokens.
        loop {
            match buf.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        std::str::from_utf8(&buf[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::format(path, format!("bad PGM header: {what}")))
    };
    let width = token("width")? as usize;
    let height = token("height")? as usize;
    let maxval = token("maxval")?;
    if maxval != 65535 {
        return Err(CliError::format(path, format!("expected 16-bit PGM, got maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| CliError::format(path, "dimensions overflow"))?;
    let data = buf.get(pos..).unwrap_or(&[]);
    if data.len() != 2 * n {
        return Err(CliError::format(
            path,
            format!("expected {} sample bytes, found {}", 2 * n, data.len()),
        ));
    }
    let pixels = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, pixels))
}

/// Writes `<stem>_<i>.pgm` for each image next to the sidecar `json_path`.
pub fn write_capture(json_path: &Path, capture: &CaptureSet) -> Result<()> {
    let stem = json_path
        .file_stem()
        .ok_or_else(|| CliError::format(json_path, "path has no file stem"))?
        .to_string_lossy()
        .into_owned();
    let dir = json_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut images = Vec::with_capacity(capture.images.len());
    for (i, img) in capture.images.iter().enumerate() {
        let name = format!("{stem}_{i}.pgm");
        write_pgm(&dir.join(&name), capture.width, capture.height, img)?;
        images.push(name);
    }
    let meta = CaptureMeta {
        width: capture.width,
        height: capture.height,
        noise_sigma: capture.noise_sigma,
        mode: capture.lights.mode,
        intensity: capture.lights.intensity,
        max_shift: capture.lights.max_shift,
        specular_weight: capture.lights.specular_weight,
        specular_exponent: capture.lights.specular_exponent,
        directions: capture.lights.directions.clone(),
        misalignment: capture.misalignment.clone(),
        images,
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::format(json_path, e.to_string()))?;
    write_atomic(json_path, json.as_bytes())
}

pub fn read_capture(json_path: &Path) -> Result<CaptureSet> {
    let raw = read_file(json_path)?;
    let meta: CaptureMeta = serde_json::from_slice(&raw)
        .map_err(|e| CliError::format(json_path, format!("bad capture sidecar: {e}")))?;
    let dir = json_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let mut images = Vec::with_capacity(meta.images.len());
    for name in &meta.images {
        let path = dir.join(name);
        let (w, h, pixels) = read_pgm(&path)?;
        if (w, h) != (meta.width, meta.height) {
            return Err(CliError::format(&path, "image dimensions disagree with sidecar"));
        }
        images.push(pixels);
    }
    let lights = LightConfig {
        directions: meta.directions,
        intensity: meta.intensity,
        mode: meta.mode,
        max_shift: meta.max_shift,
        specular_weight: meta.specular_weight,
        specular_exponent: meta.specular_exponent,
    };
    Ok(CaptureSet::new(
        meta.width,
        meta.height,
        images,
        lights,
        meta.misalignment,
        meta.noise_sigma,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use papergrain_core::{generate_patch, render, true_norm_map};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn nmap_round_trip_is_bit_exact() {
        let dir = tmp();
        let path = dir.path().join("a.nmap");
        let patch = generate_patch(7, 16, 2.0, 0.08).unwrap();
        let map = true_norm_map(&patch);
        write_nmap(&path, &map).unwrap();
        assert_eq!(read_nmap(&path).unwrap(), map);
    }

    #[test]
    fn nmap_rejects_corrupt_files() {
        let dir = tmp();
        let path = dir.path().join("bad.nmap");
        let patch = generate_patch(7, 16, 2.0, 0.08).unwrap();
        write_nmap(&path, &true_norm_map(&patch)).unwrap();
        let good = std::fs::read(&path).unwrap();

        std::fs::write(&path, b"MAPN").unwrap();
        assert!(read_nmap(&path).is_err());

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(read_nmap(&path).is_err());

        let mut long = good.clone();
        long.push(0);
        std::fs::write(&path, &long).unwrap();
        assert!(read_nmap(&path).is_err());

        let mut wrong_version = good;
        wrong_version[4] = 9;
        std::fs::write(&path, &wrong_version).unwrap();
        assert!(read_nmap(&path).is_err());
    }

    #[test]
    fn patch_round_trip_preserves_fields_to_f32() {
        let dir = tmp();
        let path = dir.path().join("a.patch");
        let patch = generate_patch(11, 24, 2.0, 0.08).unwrap();
        write_patch(&path, &patch).unwrap();
        let back = read_patch(&path).unwrap();
        assert_eq!(back.width(), patch.width());
        assert_eq!(back.height(), patch.height());
        for (a, b) in back.normals().iter().zip(patch.normals()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6, "normal drifted: {a:?} vs {b:?}");
            }
        }
        for (a, b) in back.albedo().iter().zip(patch.albedo()) {
            assert!((a - b).abs() < 1e-6);
        }
        // Statistics are re-estimated, not stored; they stay in the ballpark.
        assert!((back.roughness() - patch.roughness()).abs() / patch.roughness() < 0.25);
    }

    #[test]
    fn capture_round_trip_is_exact() {
        let dir = tmp();
        let patch = generate_patch(3, 20, 2.0, 0.08).unwrap();
        let lights = LightConfig::scanner(40_000.0);
        let capture = render(&patch, &lights, 250.0, 5).unwrap();
        let json = dir.path().join("scan.json");
        write_capture(&json, &capture).unwrap();
        assert_eq!(read_capture(&json).unwrap(), capture);
        assert!(dir.path().join("scan_3.pgm").exists());
    }

    #[test]
    fn pgm_parses_comments_and_rejects_8_bit() {
        let dir = tmp();
        let path = dir.path().join("c.pgm");
        let mut buf = b"P5\n# a comment\n2 1\n65535\n".to_vec();
        buf.extend_from_slice(&500u16.to_be_bytes());
        buf.extend_from_slice(&65535u16.to_be_bytes());
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (2, 1, vec![500, 65535]));

        std::fs::write(&path, b"P5\n2 1\n255\n\x01\x02").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn codec_pair_round_trip_reproduces_decodes() {
        use papergrain_core::{CodecPair, PaperStock};
        let dir = tmp();
        let stock = PaperStock::new(3, 16, 2.0, 0.08, 0.5, 4).unwrap();
        let holdout: Vec<_> =
            (0..6).map(|i| true_norm_map(&stock.sheet(i))).collect();
        let pair = CodecPair::fit(&holdout, 0.99).unwrap();
        let path = dir.path().join("codec.lpc");
        write_codec_pair(&path, &pair).unwrap();
        let back = read_codec(&path).unwrap().into_pair(&path).unwrap();
        assert_eq!(back.x.m(), pair.x.m());
        assert_eq!(back.dims(), pair.dims());

        let zx = vec![0.01; pair.x.m()];
        let zy = vec![-0.02; pair.y.m()];
        let a = pair.decode_map(&zx, &zy).unwrap();
        let b = back.decode_map(&zx, &zy).unwrap();
        for (u, v) in a.nx().iter().zip(b.nx()) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn joint_codec_file_is_single_and_refuses_pair_use() {
        use papergrain_core::{LatentCodec, PaperStock};
        let dir = tmp();
        let stock = PaperStock::new(4, 16, 2.0, 0.08, 0.5, 4).unwrap();
        let holdout: Vec<_> =
            (0..5).map(|i| true_norm_map(&stock.sheet(i))).collect();
        let codec = LatentCodec::fit_joint(&holdout, 0.99).unwrap();
        let path = dir.path().join("joint.lpc");
        write_codec_single(&path, &codec).unwrap();
        match read_codec(&path).unwrap() {
            CodecFile::Single(c) => assert_eq!(c.scope(), CodecScope::Joint),
            CodecFile::Pair(_) => panic!("joint file parsed as pair"),
        }
        assert!(read_codec(&path).unwrap().into_pair(&path).is_err());
    }
}
