//! Snapshot files: one line of JSON header, then raw little-endian f64
//! pairs `(re, im)`, component-major, nodes in row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use iiblab_core::error::LabError;
use iiblab_core::flow::{FlowState, Formulation};
use iiblab_core::grid::{GridSpec, TorusGrid, C64};
use iiblab_core::metric::{HermitianMetricField, VolumeForm};
use iiblab_core::tensor::TensorField;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "iiblab-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub rank: usize,
    pub components: usize,
    pub nodes: usize,
    /// Byte offset from the start of the data block.
    pub offset: u64,
    /// Length in bytes.
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub grid: GridSpec,
    pub t: f64,
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formulation: Option<Formulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<[f64; 2]>,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub arrays: Vec<TensorField>,
}

fn corrupt(offset: u64, message: impl Into<String>) -> LabError {
    LabError::Snapshot { offset, message: message.into() }
}

impl Snapshot {
    pub fn new(grid: &TorusGrid, t: f64, step: usize, named: Vec<(String, TensorField)>) -> Self {
        let mut offset = 0;
        let mut entries = Vec::new();
        let mut arrays = Vec::new();
        for (name, field) in named {
            let length = (field.component_count() * field.node_count() * 16) as u64;
            entries.push(ArrayEntry {
                name,
                rank: field.rank(),
                components: field.component_count(),
                nodes: field.node_count(),
                offset,
                length,
            });
            offset += length;
            arrays.push(field);
        }
        Self {
            header: SnapshotHeader {
                format: FORMAT.into(),
                version: VERSION,
                endianness: "little".into(),
                grid: grid.spec(),
                t,
                step,
                formulation: None,
                volume: None,
                arrays: entries,
            },
            arrays,
        }
    }

    pub fn of_state(state: &FlowState, step: usize) -> Self {
        let mut s = Self::new(
            state.metric.grid(),
            state.t,
            step,
            vec![("metric".into(), state.metric.tensor().clone())],
        );
        s.header.formulation = Some(state.formulation);
        s.header.volume = Some([state.volume.c.re, state.volume.c.im]);
        s
    }

    /// The flow state stored in the snapshot.
    pub fn state(&self) -> Result<FlowState, LabError> {
        let (Some(formulation), Some(vol)) = (self.header.formulation, self.header.volume) else {
            return Err(corrupt(0, "snapshot does not hold a flow state"));
        };
        let metric = HermitianMetricField::from_tensor(self.array("metric")?.clone())?;
        let mut state = FlowState::new(metric, formulation, VolumeForm::new(C64::new(vol[0], vol[1]))?)?;
        state.t = self.header.t;
        Ok(state)
    }

    pub fn array(&self, name: &str) -> Result<&TensorField, LabError> {
        self.header
            .arrays
            .iter()
            .position(|a| a.name == name)
            .map(|i| &self.arrays[i])
            .ok_or_else(|| corrupt(0, format!("no array named `{name}`")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), LabError> {
        let mut line = serde_json::to_vec(&self.header).map_err(|e| corrupt(0, e.to_string()))?;
        line.push(b'\n');
        w.write_all(&line)?;
        let mut buf = Vec::new();
        for field in &self.arrays {
            for comp in field.components() {
                for v in comp {
                    buf.extend_from_slice(&v.re.to_le_bytes());
                    buf.extend_from_slice(&v.im.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), LabError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, LabError> {
        let mut r = BufReader::new(r);
        let (header, start) = read_header_from(&mut r)?;
        let grid = Arc::new(TorusGrid::from_spec(&header.grid).map_err(|e| corrupt(0, e.to_string()))?);
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let expected: u64 = header.arrays.iter().map(|a| a.length).sum();
        if data.len() as u64 != expected {
            let at = start + (data.len() as u64).min(expected);
            return Err(corrupt(at, format!("data block holds {} bytes, header declares {expected}", data.len())));
        }
        let mut arrays = Vec::new();
        for a in &header.arrays {
            let at = start + a.offset;
            if a.nodes != grid.node_count() {
                return Err(corrupt(at, format!("array `{}` has {} nodes, grid has {}", a.name, a.nodes, grid.node_count())));
            }
            if a.components != grid.n().pow(a.rank as u32) || a.length != (a.components * a.nodes * 16) as u64 {
                return Err(corrupt(at, format!("array `{}` has an inconsistent shape", a.name)));
            }
            let bytes = data
                .get(a.offset as usize..(a.offset + a.length) as usize)
                .ok_or_else(|| corrupt(at, format!("array `{}` lies outside the data block", a.name)))?;
            let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
            let comps = (0..a.components)
                .map(|c| {
                    (0..a.nodes)
                        .map(|node| {
                            let i = (c * a.nodes + node) * 16;
                            C64::new(f(i), f(i + 8))
                        })
                        .collect()
                })
                .collect();
            arrays.push(TensorField::from_components(grid.clone(), a.rank, comps).map_err(|e| corrupt(at, e.to_string()))?);
        }
        Ok(Self { header, arrays })
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Parses the header line; returns it with the byte offset of the data block.
fn read_header_from(r: &mut impl BufRead) -> Result<(SnapshotHeader, u64), LabError> {
    let mut line = Vec::new();
    let len = r.read_until(b'\n', &mut line)? as u64;
    if line.last() != Some(&b'\n') {
        return Err(corrupt(len, "header line is not terminated"));
    }
    let header: SnapshotHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| corrupt(e.column().saturating_sub(1) as u64, format!("corrupt header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(corrupt(0, format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.endianness != "little" {
        return Err(corrupt(0, format!("unsupported endianness `{}`", header.endianness)));
    }
    Ok((header, len))
}

pub fn read_header(path: &Path) -> Result<SnapshotHeader, LabError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    Ok(read_header_from(&mut r)?.0)
}
