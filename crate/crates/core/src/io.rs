//! CSV and JSON output schemas. Floats are written with 17 significant
//! digits, so every value parses back to the same bits.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{block_map, BoundaryPair, FlowSnapshot};
use crate::sde::PathRealization;

/// Version tag of the JSON envelope.
pub const FORMAT_VERSION: &str = "1";

pub const MEANDER_HEADER: [&str; 4] = ["path_id", "t", "value", "weight"];
pub const BOUNDARY_HEADER: [&str; 4] = ["path_id", "t", "alpha", "beta"];
pub const FLOW_HEADER: [&str; 4] = ["particle_id", "t", "position", "survivor_id"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanderRow {
    pub path_id: u64,
    pub t: f64,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub path_id: u64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub particle_id: u64,
    pub t: f64,
    pub position: f64,
    pub survivor_id: u64,
}

/// {version, config, results}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<C, R> {
    pub version: String,
    pub config: C,
    pub results: R,
}

impl<C, R> Envelope<C, R> {
    pub fn new(config: C, results: R) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            config,
            results,
        }
    }
}

/// Full-precision rendering: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("i/o: {e}"))
}

pub trait CsvRow: Sized {
    const HEADER: [&'static str; 4];
    fn fields(&self) -> [String; 4];
    fn parse(fields: &csv::StringRecord) -> Result<Self>;
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("bad CSV field {i} in {rec:?}")))
}

impl CsvRow for MeanderRow {
    const HEADER: [&'static str; 4] = MEANDER_HEADER;

    fn fields(&self) -> [String; 4] {
        [self.path_id.to_string(), fmt_f64(self.t), fmt_f64(self.value), fmt_f64(self.weight)]
    }

    fn parse(r: &csv::StringRecord) -> Result<Self> {
        Ok(Self {
            path_id: field(r, 0)?,
            t: field(r, 1)?,
            value: field(r, 2)?,
            weight: field(r, 3)?,
        })
    }
}

impl CsvRow for BoundaryRow {
    const HEADER: [&'static str; 4] = BOUNDARY_HEADER;

    fn fields(&self) -> [String; 4] {
        [self.path_id.to_string(), fmt_f64(self.t), fmt_f64(self.alpha), fmt_f64(self.beta)]
    }

    fn parse(r: &csv::StringRecord) -> Result<Self> {
        Ok(Self {
            path_id: field(r, 0)?,
            t: field(r, 1)?,
            alpha: field(r, 2)?,
            beta: field(r, 3)?,
        })
    }
}

impl CsvRow for FlowRow {
    const HEADER: [&'static str; 4] = FLOW_HEADER;

    fn fields(&self) -> [String; 4] {
        [
            self.particle_id.to_string(),
            fmt_f64(self.t),
            fmt_f64(self.position),
            self.survivor_id.to_string(),
        ]
    }

    fn parse(r: &csv::StringRecord) -> Result<Self> {
        Ok(Self {
            particle_id: field(r, 0)?,
            t: field(r, 1)?,
            position: field(r, 2)?,
            survivor_id: field(r, 3)?,
        })
    }
}

pub fn write_csv<W: Write, R: CsvRow>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::HEADER).map_err(io_err)?;
    for row in rows {
        w.write_record(row.fields()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_csv<Rd: Read, R: CsvRow>(input: Rd) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(io_err)?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(Error::InvalidArgument(format!(
            "expected header {:?}, got {header:?}",
            R::HEADER
        )));
    }
    r.records().map(|rec| R::parse(&rec.map_err(io_err)?)).collect()
}

pub fn write_json<W: Write, T: Serialize>(out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(out, value).map_err(io_err)
}

pub fn read_json<Rd: Read, T: DeserializeOwned>(input: Rd) -> Result<T> {
    serde_json::from_reader(input).map_err(io_err)
}

/// Rows of one-dimensional paths, ordered by path then time.
pub fn meander_rows(paths: &[PathRealization]) -> Vec<MeanderRow> {
    paths
        .iter()
        .enumerate()
        .flat_map(|(id, p)| {
            (0..p.len()).map(move |k| MeanderRow {
                path_id: id as u64,
                t: p.times[k],
                value: p.value(k)[0],
                weight: p.weight,
            })
        })
        .collect()
}

pub fn boundary_rows(pairs: &[BoundaryPair]) -> Vec<BoundaryRow> {
    pairs
        .iter()
        .enumerate()
        .flat_map(|(id, b)| {
            (0..b.path.len()).map(move |k| BoundaryRow {
                path_id: id as u64,
                t: b.path.times[k],
                alpha: b.alpha(k),
                beta: b.beta(k),
            })
        })
        .collect()
}

/// One row per initial particle and snapshot: the position of its block and
/// the block identifier.
pub fn flow_rows(history: &[FlowSnapshot], n_particles: usize) -> Vec<FlowRow> {
    let per_time: Vec<(Vec<usize>, &FlowSnapshot)> =
        history.iter().map(|s| (block_map(&s.ids, n_particles), s)).collect();
    let mut rows = Vec::with_capacity(n_particles * history.len());
    for i in 0..n_particles {
        for (map, snap) in &per_time {
            let block = map[i];
            let k = snap.ids.partition_point(|&id| id < block);
            rows.push(FlowRow {
                particle_id: i as u64,
                t: snap.t,
                position: snap.positions[k],
                survivor_id: block as u64,
            });
        }
    }
    rows
}

/// Rebuilds paths from meander rows (metadata is not part of the schema).
pub fn paths_from_rows(rows: &[MeanderRow]) -> Result<Vec<PathRealization>> {
    let mut out: Vec<PathRealization> = Vec::new();
    for r in rows {
        if out.len() as u64 == r.path_id {
            out.push(PathRealization {
                times: Vec::new(),
                values: Vec::new(),
                dim: 1,
                weight: r.weight,
                meta: Default::default(),
            });
        } else if out.len() as u64 != r.path_id + 1 {
            return Err(Error::InvalidArgument(format!("rows out of order at path {}", r.path_id)));
        }
        let p = out.last_mut().expect("pushed above");
        p.times.push(r.t);
        p.values.push(r.value);
    }
    for p in &out {
        p.validate()?;
    }
    Ok(out)
}
