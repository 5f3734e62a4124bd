//! Dataset files and the plain-text correspondence format.
//!
//! A dataset file is a header followed by one self-contained record per pair:
//!
//! ```text
//! header  "GMDS" | version u32 | metadata length u32 | metadata (UTF-8)
//! record  id u64 | N u32 | flags u32
//!         N × (x, y, x', y') f64
//!         N label bytes (0 outlier, 1 inlier, 2 unlabelled)
//!         E (9 f64, row-major) | R (9 f64) | t (3 f64)
//!         H (9 f64) if flags bit 0 is set
//! ```
//!
//! All integers and floats are little-endian. The metadata holds the
//! effective configuration that produced the file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use geomoe_core::geometry::{Correspondence, EssentialMatrix, RelativePose};
use geomoe_core::homography::Homography;
use geomoe_core::linalg::Mat3;
use geomoe_core::synth::LabeledPair;

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"GMDS";
pub const DATASET_VERSION: u32 = 1;
const FLAG_HOMOGRAPHY: u32 = 1;

/// Bytes of the file header for a given metadata string.
pub fn header_size(metadata: &str) -> usize {
    4 + 4 + 4 + metadata.len()
}

/// Bytes of one record with `n` correspondences.
pub fn record_size(n: usize, has_homography: bool) -> usize {
    8 + 4 + 4 + 32 * n + n + 8 * (9 + 12) + if has_homography { 72 } else { 0 }
}

fn put_mat(buf: &mut Vec<u8>, m: &Mat3) {
    for row in m {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn encode_record(pair: &LabeledPair) -> Vec<u8> {
    let n = pair.correspondences.len();
    let mut buf = Vec::with_capacity(record_size(n, pair.gt_homography.is_some()));
    buf.extend_from_slice(&pair.id.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    let flags = if pair.gt_homography.is_some() { FLAG_HOMOGRAPHY } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for c in &pair.correspondences {
        for v in [c.x[0], c.x[1], c.x_prime[0], c.x_prime[1]] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend(pair.correspondences.iter().map(|c| match c.label {
        Some(false) => 0u8,
        Some(true) => 1,
        None => 2,
    }));
    put_mat(&mut buf, &pair.gt_essential.e);
    put_mat(&mut buf, &pair.gt_pose.rotation);
    for v in pair.gt_pose.translation {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(h) = &pair.gt_homography {
        put_mat(&mut buf, &h.h);
    }
    buf
}

/// Streams records to a file.
pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
    written: usize,
}

impl DatasetWriter {
    pub fn create(path: &Path, metadata: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self { out: BufWriter::new(file), path: path.to_path_buf(), written: 0 };
        let mut head = Vec::with_capacity(header_size(metadata));
        head.extend_from_slice(DATASET_MAGIC);
        head.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        head.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
        head.extend_from_slice(metadata.as_bytes());
        w.write_bytes(&head)?;
        Ok(w)
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, pair: &LabeledPair) -> Result<()> {
        self.write_bytes(&encode_record(pair))?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and returns the number of records written.
    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.written)
    }
}

pub fn write_dataset(path: &Path, metadata: &str, pairs: &[LabeledPair]) -> Result<()> {
    let mut w = DatasetWriter::create(path, metadata)?;
    for p in pairs {
        w.write(p)?;
    }
    w.finish().map(|_| ())
}

/// Streams records from a file.
pub struct DatasetReader<R> {
    input: R,
    path: PathBuf,
    metadata: String,
    next_index: usize,
    done: bool,
}

/// Fills `buf` as far as the input allows and returns the byte count.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file), path)
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut input: R, path: &Path) -> Result<Self> {
        let mut head = [0u8; 12];
        let got = read_full(&mut input, &mut head).map_err(|e| Error::io(path, e))?;
        if got < 12 || &head[..4] != DATASET_MAGIC {
            return Err(Error::format(path, "not a dataset file (missing GMDS header)"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported dataset version {version} (this build reads version {DATASET_VERSION})"),
            ));
        }
        let len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut meta = vec![0u8; len];
        if read_full(&mut input, &mut meta).map_err(|e| Error::io(path, e))? < len {
            return Err(Error::format(path, "truncated header"));
        }
        let metadata = String::from_utf8(meta).map_err(|_| Error::format(path, "header metadata is not UTF-8"))?;
        Ok(Self { input, path: path.to_path_buf(), metadata, next_index: 0, done: false })
    }

    /// Configuration text recorded by the writer.
    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    fn truncated(&self) -> Error {
        let last = match self.next_index {
            0 => "no complete record".to_string(),
            i => format!("last complete record is #{} ", i - 1),
        };
        Error::format(&self.path, format!("truncated in record #{}; {}", self.next_index, last.trim_end()))
    }

    fn take(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let got = read_full(&mut self.input, &mut buf).map_err(|e| Error::io(&self.path, e))?;
        if got < n {
            return Err(self.truncated());
        }
        Ok(buf)
    }

    fn read_record(&mut self) -> Result<Option<LabeledPair>> {
        let mut head = [0u8; 16];
        let got = read_full(&mut self.input, &mut head).map_err(|e| Error::io(&self.path, e))?;
        if got == 0 {
            return Ok(None);
        }
        if got < 16 {
            return Err(self.truncated());
        }
        let id = u64::from_le_bytes(head[0..8].try_into().unwrap());
        let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let flags = u32::from_le_bytes(head[12..16].try_into().unwrap());
        if flags & !FLAG_HOMOGRAPHY != 0 {
            return Err(Error::format(&self.path, format!("record #{}: unknown flags {flags:#x}", self.next_index)));
        }
        let has_h = flags & FLAG_HOMOGRAPHY != 0;
        let body = self.take(record_size(n, has_h) - 16)?;
        let f = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().unwrap());
        let labels = &body[32 * n..33 * n];
        let mut correspondences = Vec::with_capacity(n);
        for i in 0..n {
            let label = match labels[i] {
                0 => Some(false),
                1 => Some(true),
                2 => None,
                b => {
                    return Err(Error::format(
                        &self.path,
                        format!("record #{}: invalid label byte {b} at correspondence {i}", self.next_index),
                    ))
                }
            };
            correspondences.push(Correspondence { x: [f(4 * i), f(4 * i + 1)], x_prime: [f(4 * i + 2), f(4 * i + 3)], label });
        }
        let base = 33 * n;
        let g = |i: usize| f64::from_le_bytes(body[base + 8 * i..base + 8 * i + 8].try_into().unwrap());
        let mat = |o: usize| [[g(o), g(o + 1), g(o + 2)], [g(o + 3), g(o + 4), g(o + 5)], [g(o + 6), g(o + 7), g(o + 8)]];
        let gt_essential = EssentialMatrix { e: mat(0) };
        let gt_pose = RelativePose { rotation: mat(9), translation: [g(18), g(19), g(20)] };
        let gt_homography = has_h.then(|| Homography { h: mat(21) });
        self.next_index += 1;
        Ok(Some(LabeledPair { id, correspondences, gt_essential, gt_pose, gt_homography }))
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<LabeledPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(p)) => Some(Ok(p)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole dataset file, returning its metadata and records.
pub fn read_dataset(path: &Path) -> Result<(String, Vec<LabeledPair>)> {
    let mut reader = DatasetReader::open(path)?;
    let pairs = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((reader.metadata, pairs))
}

/// Parses the text format: one `x1 y1 x2 y2 [label]` line per correspondence.
///
/// Blank lines and lines starting with `#` are skipped. Labels are `1`/`0`
/// (or `true`/`false`).
pub fn parse_correspondences(text: &str, path: &Path) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| Error::format(path, format!("line {}: {m}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(bad("expected `x1 y1 x2 y2 [label]`"));
        }
        let mut v = [0.0; 4];
        for (slot, s) in v.iter_mut().zip(&fields) {
            *slot = s.parse::<f64>().map_err(|_| bad(&format!("invalid number `{s}`")))?;
            if !slot.is_finite() {
                return Err(bad("coordinates must be finite"));
            }
        }
        let label = match fields.get(4) {
            None => None,
            Some(&"1") | Some(&"true") => Some(true),
            Some(&"0") | Some(&"false") => Some(false),
            Some(s) => return Err(bad(&format!("invalid label `{s}`"))),
        };
        out.push(Correspondence { x: [v[0], v[1]], x_prime: [v[2], v[3]], label });
    }
    Ok(out)
}

pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    BufReader::new(file).read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    parse_correspondences(&text, path)
}

/// Renders correspondences in the text format (shortest round-trip floats).
pub fn format_correspondences(corrs: &[Correspondence]) -> String {
    let mut s = String::new();
    for c in corrs {
        s.push_str(&format!("{} {} {} {}", c.x[0], c.x[1], c.x_prime[0], c.x_prime[1]));
        if let Some(l) = c.label {
            s.push_str(if l { " 1" } else { " 0" });
        }
        s.push('\n');
    }
    s
}

/// Reads one number per line, skipping comments and the `R`/`t` pose lines
/// that `filter --pose` appends.
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("R ") || line.starts_with("t ") {
            continue;
        }
        let v = line
            .parse::<f64>()
            .map_err(|_| Error::format(path, format!("line {}: invalid weight `{line}`", lineno + 1)))?;
        out.push(v);
    }
    Ok(out)
}
