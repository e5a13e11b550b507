//! File formats: LDG1 binary grids, CSV tables and key=value run manifests.
//!
//! LDG1 layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `b"LDG1"`                         |
//! | 4      | 2    | format version (`u16`, currently 1)     |
//! | 6      | 4    | `nq` (`u32`)                            |
//! | 10     | 4    | `np` (`u32`)                            |
//! | 14     | 32   | `q_min, q_max, p_min, p_max` (`f64`)    |
//! | 46     | 1    | kind tag: 0 classical, 1 quantum, 2 difference |
//! | 47     | 8·nq·np | values (`f64`), row-major, `q` fastest |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::classical::{FieldKind, FieldMeta, GridSpec, LdField};
use crate::error::{Error, Result};

pub const GRID_MAGIC: [u8; 4] = *b"LDG1";
pub const GRID_FORMAT_VERSION: u16 = 1;
pub const GRID_HEADER_LEN: usize = 47;

/// Decoded LDG1 header.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridFileHeader {
    pub format_version: u16,
    pub grid: GridSpec,
    pub kind: FieldKind,
}

impl GridFileHeader {
    pub fn payload_len(&self) -> u64 {
        8 * self.grid.nq as u64 * self.grid.np as u64
    }
}

fn encode_header(field: &LdField) -> Result<[u8; GRID_HEADER_LEN]> {
    let g = &field.grid;
    let nq = u32::try_from(g.nq).map_err(|_| Error::InvalidParameter(format!("nq = {} exceeds u32", g.nq)))?;
    let np = u32::try_from(g.np).map_err(|_| Error::InvalidParameter(format!("np = {} exceeds u32", g.np)))?;
    let mut h = [0u8; GRID_HEADER_LEN];
    h[0..4].copy_from_slice(&GRID_MAGIC);
    h[4..6].copy_from_slice(&GRID_FORMAT_VERSION.to_le_bytes());
    h[6..10].copy_from_slice(&nq.to_le_bytes());
    h[10..14].copy_from_slice(&np.to_le_bytes());
    for (i, v) in [g.q_min, g.q_max, g.p_min, g.p_max].iter().enumerate() {
        h[14 + 8 * i..22 + 8 * i].copy_from_slice(&v.to_le_bytes());
    }
    h[46] = field.kind().tag();
    Ok(h)
}

/// Serializes `field` to LDG1 bytes.
pub fn encode_grid(field: &LdField) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(GRID_HEADER_LEN + 8 * field.values.len());
    out.extend_from_slice(&encode_header(field)?);
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn decode_header(bytes: &[u8], path: &Path) -> Result<GridFileHeader> {
    let truncated = || Error::Truncated {
        path: path.to_path_buf(),
        expected: GRID_HEADER_LEN as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != GRID_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    if bytes.len() < GRID_HEADER_LEN {
        return Err(truncated());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GRID_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let nq = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let np = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let kind = FieldKind::from_tag(bytes[46]).ok_or_else(|| Error::UnknownKind {
        path: path.to_path_buf(),
        tag: bytes[46],
    })?;
    let grid = GridSpec {
        q_min: f64_at(bytes, 14),
        q_max: f64_at(bytes, 22),
        p_min: f64_at(bytes, 30),
        p_max: f64_at(bytes, 38),
        nq,
        np,
    };
    Ok(GridFileHeader {
        format_version: version,
        grid,
        kind,
    })
}

/// Parses LDG1 bytes. `path` is only used in error messages.
pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<LdField> {
    let header = decode_header(bytes, path)?;
    let expected = GRID_HEADER_LEN as u64 + header.payload_len();
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::TrailingData {
            path: path.to_path_buf(),
            extra: found - expected,
        });
    }
    let values = bytes[GRID_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LdField::new(header.grid, values, FieldMeta::bare(header.kind))
}

pub fn write_grid_file(field: &LdField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_grid(field)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an LDG1 file. Only the field kind is restored into the metadata.
pub fn read_grid_file(path: impl AsRef<Path>) -> Result<LdField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes, path)
}

pub fn read_grid_header(path: impl AsRef<Path>) -> Result<GridFileHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_header(&bytes, path)
}

/// One CSV cell. Floats print in shortest round-trip form.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:?}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

/// Rectangular table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::InvalidParameter(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// `q,p,value` rows in the field's row-major order.
    pub fn from_field(field: &LdField) -> Self {
        let mut t = Table::new(["q", "p", "value"]);
        for (idx, v) in field.values.iter().enumerate() {
            let (iq, ip) = field.grid.coords(idx);
            t.rows.push(vec![field.grid.q(iq).into(), field.grid.p(ip).into(), (*v).into()]);
        }
        t
    }

    pub fn to_csv_bytes(&self) -> std::result::Result<Vec<u8>, csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = table.to_csv_bytes().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads back a CSV written by [`write_csv`]; every cell is kept as text.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Ordered `key=value` run manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        let mut m = Self::default();
        m.set("manifest_version", MANIFEST_FORMAT_VERSION);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records `file.<label>=<name>` and `sha256.<label>=<digest>` for an
    /// output file.
    pub fn add_file(&mut self, label: &str, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.set(&format!("file.{label}"), name);
        self.set(&format!("sha256.{label}"), digest);
        Ok(())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.render().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}
