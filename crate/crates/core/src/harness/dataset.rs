use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::{io_err, malformed, HarnessError, HarnessResult};
use crate::geometry::{normalize_unit_cube, Point, PointCloud};

pub const PACKED_MAGIC: &[u8; 4] = b"PCAD";
pub const PACKED_VERSION: u32 = 1;
/// Label index of an ascii-dir dataset: one `file label` pair per line.
pub const LABEL_FILE: &str = "labels.txt";
/// Optional class names, one per line, beside either format.
pub const CLASS_FILE: &str = "classes.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// Binary `PCAD` file.
    Packed,
    /// Directory of `x y z` text files plus a label index.
    AsciiDir,
}

impl std::str::FromStr for DatasetFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> HarnessResult<Self> {
        match s {
            "packed" => Ok(Self::Packed),
            "ascii-dir" => Ok(Self::AsciiDir),
            _ => Err(HarnessError::Config(format!("unknown dataset format {s:?}"))),
        }
    }
}

/// Labeled clouds sharing one point count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    /// Split tag such as `train` or `test`.
    pub split: String,
    pub class_names: Vec<String>,
    pub points: usize,
}

impl Dataset {
    pub fn new(clouds: Vec<PointCloud>, split: impl Into<String>, class_names: Vec<String>) -> HarnessResult<Self> {
        let points = clouds.first().map_or(0, PointCloud::len);
        let d = Self {
            clouds,
            split: split.into(),
            class_names,
            points,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label().unwrap_or(usize::MAX)).collect()
    }

    pub fn validate(&self) -> HarnessResult<()> {
        for (i, c) in self.clouds.iter().enumerate() {
            if c.len() != self.points {
                return Err(HarnessError::Config(format!("cloud {i} has {} points, expected {}", c.len(), self.points)));
            }
            match c.label() {
                Some(l) if l < self.classes() => {}
                Some(l) => {
                    return Err(HarnessError::LabelOutOfRange {
                        label: l,
                        classes: self.classes(),
                    })
                }
                None => return Err(HarnessError::Config(format!("cloud {i} has no label"))),
            }
        }
        Ok(())
    }

    /// The first `n` clouds (all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        Self {
            clouds: self.clouds[..n.min(self.len())].to_vec(),
            ..self.clone()
        }
    }
}

pub fn default_class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|i| format!("class{i}")).collect()
}

/// Normalization applied on load: unit cube, then storage precision.
pub fn canonical_cloud(cloud: &PointCloud) -> HarnessResult<PointCloud> {
    Ok(normalize_unit_cube(cloud)?.quantized())
}

fn class_names_beside(dir: &Path, classes: usize) -> HarnessResult<Vec<String>> {
    let path = dir.join(CLASS_FILE);
    if !path.exists() {
        return Ok(default_class_names(classes));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if names.len() != classes {
        return Err(malformed(&path, format!("{} class names for {classes} classes", names.len())));
    }
    Ok(names)
}

fn split_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string()
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> HarnessResult<Dataset> {
    match format {
        DatasetFormat::Packed => load_packed(path),
        DatasetFormat::AsciiDir => load_ascii_dir(path),
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path, format: DatasetFormat) -> HarnessResult<()> {
    dataset.validate()?;
    match format {
        DatasetFormat::Packed => {
            fs::write(path, encode_packed(dataset)).map_err(io_err(path))?;
            if let Some(dir) = path.parent() {
                write_class_names(dataset, dir)?;
            }
            Ok(())
        }
        DatasetFormat::AsciiDir => save_ascii_dir(dataset, path),
    }
}

fn write_class_names(dataset: &Dataset, dir: &Path) -> HarnessResult<()> {
    let path = dir.join(CLASS_FILE);
    let mut text = dataset.class_names.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Packed layout: magic, version, cloud count, points per cloud, class count
/// (u32 each), then per cloud a u32 label and N×3 f32 coordinates, all
/// little-endian.
pub fn encode_packed(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + dataset.len() * (4 + 12 * dataset.points));
    out.extend_from_slice(PACKED_MAGIC);
    for v in [PACKED_VERSION, dataset.len() as u32, dataset.points as u32, dataset.classes() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in &dataset.clouds {
        out.extend_from_slice(&(c.label().unwrap_or(0) as u32).to_le_bytes());
        for v in c.flat() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_packed(bytes: &[u8], path: &Path) -> HarnessResult<Dataset> {
    let word = |at: usize| -> HarnessResult<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
            .ok_or_else(|| malformed(path, format!("truncated at byte {at}")))
    };
    if bytes.get(..4) != Some(PACKED_MAGIC.as_slice()) {
        return Err(malformed(path, "missing PCAD magic"));
    }
    let version = word(4)?;
    if version != PACKED_VERSION {
        return Err(HarnessError::Version {
            found: version,
            expected: PACKED_VERSION,
        });
    }
    let (count, n, classes) = (word(8)? as usize, word(12)? as usize, word(16)? as usize);
    if n == 0 || classes == 0 {
        return Err(malformed(path, "zero points per cloud or zero classes"));
    }
    let record = 4 + 12 * n;
    let expected = 20 + count * record;
    if bytes.len() != expected {
        return Err(malformed(path, format!("{} bytes, header implies {expected}", bytes.len())));
    }
    let mut clouds = Vec::with_capacity(count);
    for i in 0..count {
        let base = 20 + i * record;
        let label = word(base)? as usize;
        if label >= classes {
            return Err(HarnessError::LabelOutOfRange { label, classes });
        }
        let pts: Vec<Point> = bytes[base + 4..base + record]
            .chunks_exact(12)
            .map(|p| [0, 4, 8].map(|o| f32::from_le_bytes(p[o..o + 4].try_into().expect("four bytes")) as f64))
            .collect();
        let cloud = PointCloud::new(pts).map_err(|e| malformed(path, format!("cloud {i}: {e}")))?;
        clouds.push(canonical_cloud(&cloud.with_label(label))?);
    }
    let names = match path.parent() {
        Some(dir) => class_names_beside(dir, classes)?,
        None => default_class_names(classes),
    };
    let mut d = Dataset::new(clouds, split_of(path), names)?;
    d.points = n;
    Ok(d)
}

fn load_packed(path: &Path) -> HarnessResult<Dataset> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_packed(&bytes, path)
}

fn parse_xyz(text: &str, path: &Path) -> HarnessResult<Vec<Point>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| malformed(path, format!("line {}: {e}", no + 1)))?;
            match v[..] {
                [x, y, z] => Ok([x, y, z]),
                _ => Err(malformed(path, format!("line {}: expected 3 values, got {}", no + 1, v.len()))),
            }
        })
        .collect()
}

fn load_ascii_dir(dir: &Path) -> HarnessResult<Dataset> {
    let index = dir.join(LABEL_FILE);
    let text = fs::read_to_string(&index).map_err(io_err(&index))?;
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(file), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(&index, format!("line {}: expected `file label`", no + 1)));
        };
        let label: usize = label.parse().map_err(|e| malformed(&index, format!("line {}: {e}", no + 1)))?;
        entries.push((file.to_string(), label));
    }
    let classes = match fs::read_to_string(dir.join(CLASS_FILE)) {
        Ok(t) => t.lines().filter(|l| !l.trim().is_empty()).count(),
        Err(_) => entries.iter().map(|e| e.1 + 1).max().unwrap_or(1),
    };
    let mut clouds = Vec::with_capacity(entries.len());
    let mut n = None;
    for (file, label) in entries {
        if label >= classes {
            return Err(HarnessError::LabelOutOfRange { label, classes });
        }
        let path = dir.join(&file);
        let pts = parse_xyz(&fs::read_to_string(&path).map_err(io_err(&path))?, &path)?;
        if *n.get_or_insert(pts.len()) != pts.len() {
            return Err(malformed(&path, format!("{} points, expected {}", pts.len(), n.unwrap_or(0))));
        }
        let cloud = PointCloud::new(pts).map_err(|e| malformed(&path, e.to_string()))?;
        clouds.push(canonical_cloud(&cloud.with_label(label))?);
    }
    Dataset::new(clouds, split_of(dir), class_names_beside(dir, classes)?)
}

fn save_ascii_dir(dataset: &Dataset, dir: &Path) -> HarnessResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut index = String::new();
    for (i, c) in dataset.clouds.iter().enumerate() {
        let file = format!("cloud_{i:05}.xyz");
        let mut text = String::with_capacity(c.len() * 40);
        for p in c.points() {
            // f32 round-trips exactly through its shortest decimal form
            text.push_str(&format!("{} {} {}\n", p[0] as f32, p[1] as f32, p[2] as f32));
        }
        let path = dir.join(&file);
        fs::write(&path, text).map_err(io_err(&path))?;
        index.push_str(&format!("{file} {}\n", c.label().unwrap_or(0)));
    }
    let path = dir.join(LABEL_FILE);
    fs::write(&path, index).map_err(io_err(&path))?;
    write_class_names(dataset, dir)
}
