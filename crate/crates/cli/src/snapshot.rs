//! The SNSV1 snapshot file.
//!
//! ```text
//! "SNSV1"                      5 bytes
//! endianness tag 0x01020304    u32, little-endian
//! header length                u64, little-endian
//! header                       UTF-8 JSON, see SnapshotHeader
//! payload                      f64 little-endian, fields at their manifest offsets
//! ```
//!
//! Grid fields are row-major with x fastest; a field with `components` parts
//! stores them one after another. Markers are stored as the `x, y` pairs in order.

use std::path::Path;

use patchflow_core::field::{Grid, ScalarField, VectorField};
use patchflow_core::patch::MarkerCurve;
use patchflow_core::run::{Bookkeeping, Trajectory};
use patchflow_core::striated::VectorFieldFamily;
use patchflow_core::FluidState;
use serde::{Deserialize, Serialize};

use crate::config::hash_hex;
use crate::error::{CliError, CliResult};
use crate::output::write_atomic;

pub const MAGIC: &[u8; 5] = b"SNSV1";
pub const ENDIAN_TAG: u32 = 0x0102_0304;
const PREAMBLE: usize = 5 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub name: String,
    pub components: usize,
    /// Values per component.
    pub count: usize,
    /// Byte offset from the start of the payload.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub n: usize,
    pub length: f64,
    pub t: f64,
    pub endianness: String,
    /// SHA-256 of `config`.
    pub config_hash: String,
    /// Canonical JSON of the run configuration.
    pub config: String,
    pub family_p: Option<f64>,
    pub fields: Vec<FieldEntry>,
    pub bookkeeping: Bookkeeping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub state: FluidState,
    pub family: Option<VectorFieldFamily>,
    pub markers: Option<MarkerCurve>,
}

impl Snapshot {
    pub fn of(traj: &Trajectory, canonical: &str, hash: &str) -> Self {
        let grid = traj.state.grid();
        Self {
            header: SnapshotHeader {
                n: grid.n(),
                length: grid.length(),
                t: traj.state.t,
                endianness: "little".into(),
                config_hash: hash.into(),
                config: canonical.into(),
                family_p: traj.family.as_ref().map(|f| f.p),
                fields: Vec::new(),
                bookkeeping: traj.book.clone(),
            },
            state: traj.state.clone(),
            family: traj.family.clone(),
            markers: traj.markers.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cells = self.state.rho.data.len();
        let mut payload: Vec<f64> = Vec::new();
        let mut fields = Vec::new();
        let mut push = |name: &str, parts: &[&[f64]], count: usize| {
            fields.push(FieldEntry {
                name: name.into(),
                components: parts.len(),
                count,
                offset: 8 * payload.len() as u64,
            });
            for p in parts {
                payload.extend_from_slice(p);
            }
        };
        push("rho", &[&self.state.rho.data], cells);
        push("u", &[&self.state.u.x, &self.state.u.y], cells);
        if let Some(f) = &self.family {
            let parts: Vec<&[f64]> = f.members.iter().flat_map(|m| [&m.x[..], &m.y[..]]).collect();
            push("family", &parts, cells);
        }
        if let Some(m) = &self.markers {
            let xs: Vec<f64> = m.points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = m.points.iter().map(|p| p.1).collect();
            push("markers", &[&xs, &ys], m.points.len());
        }
        let mut header = self.header.clone();
        header.fields = fields;
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + 8 * payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&ENDIAN_TAG.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < PREAMBLE {
            return Err(format!("file is {} bytes, shorter than the preamble", bytes.len()));
        }
        if &bytes[..5] != MAGIC {
            return Err("bad magic, not an SNSV1 snapshot".into());
        }
        let tag = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
        if tag != ENDIAN_TAG {
            return Err(format!("endianness tag {tag:#010x} is not {ENDIAN_TAG:#010x}"));
        }
        let hlen = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")) as usize;
        let body = &bytes[PREAMBLE..];
        if body.len() < hlen {
            return Err("truncated header".into());
        }
        let header: SnapshotHeader = serde_json::from_slice(&body[..hlen]).map_err(|e| format!("header: {e}"))?;
        if header.endianness != "little" {
            return Err(format!("unsupported endianness {:?}", header.endianness));
        }
        if hash_hex(&header.config) != header.config_hash {
            return Err("embedded configuration does not match its hash".into());
        }
        let payload = &body[hlen..];
        let grid = Grid::new(header.n, header.length).map_err(|e| e.to_string())?;
        let cells = grid.len();
        let mut end = 0u64;
        for f in &header.fields {
            if f.offset != end {
                return Err(format!("field {} starts at {} instead of {end}", f.name, f.offset));
            }
            if f.name != "markers" && f.count != cells {
                return Err(format!("field {} holds {} values per component, expected n^2 = {cells}", f.name, f.count));
            }
            end += 8 * (f.components * f.count) as u64;
        }
        if payload.len() as u64 != end {
            return Err(format!("payload is {} bytes, manifest needs {end}", payload.len()));
        }
        let read = |f: &FieldEntry, c: usize| -> Vec<f64> {
            let start = f.offset as usize + 8 * c * f.count;
            payload[start..start + 8 * f.count]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        };
        let find = |name: &str| header.fields.iter().find(|f| f.name == name);
        let need = |name: &str, components: Option<usize>| -> Result<&FieldEntry, String> {
            let f = find(name).ok_or_else(|| format!("missing field {name}"))?;
            match components {
                Some(c) if f.components != c => Err(format!("field {name} has {} components, expected {c}", f.components)),
                _ => Ok(f),
            }
        };
        let rho = ScalarField::from_vec(grid, read(need("rho", Some(1))?, 0)).map_err(|e| e.to_string())?;
        let uf = need("u", Some(2))?;
        let u = VectorField {
            grid,
            x: read(uf, 0),
            y: read(uf, 1),
        };
        let state = FluidState::new(rho, u, header.t).map_err(|e| e.to_string())?;
        let family = match find("family") {
            Some(f) => {
                if f.components % 2 != 0 || f.components == 0 {
                    return Err(format!("family has {} components, expected an even count", f.components));
                }
                let p = header.family_p.ok_or("family without its exponent")?;
                let members = (0..f.components / 2)
                    .map(|m| VectorField {
                        grid,
                        x: read(f, 2 * m),
                        y: read(f, 2 * m + 1),
                    })
                    .collect();
                Some(VectorFieldFamily::new(members, p).map_err(|e| e.to_string())?)
            }
            None => None,
        };
        let markers = match find("markers") {
            Some(f) if f.components == 2 => {
                let (xs, ys) = (read(f, 0), read(f, 1));
                Some(MarkerCurve::new(xs.into_iter().zip(ys).collect()).map_err(|e| e.to_string())?)
            }
            Some(f) => return Err(format!("markers have {} components, expected 2", f.components)),
            None => None,
        };
        Ok(Self {
            header,
            state,
            family,
            markers,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| CliError::Snapshot {
            path: path.to_path_buf(),
            message,
        })
    }
}
