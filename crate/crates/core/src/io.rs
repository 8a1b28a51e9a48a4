//! Trajectory CSV ingestion and output.
//!
//! Files have the header `obj_id,timestamp,lon,lat` and one sample per line.
//! Output coordinates are location cell centers mapped back through the
//! bounding box, so writing and re-reading with the same box reproduces the
//! dataset exactly.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::geo::{snap_to_location, BBox, Dataset, RawSample, Trajectory};
use crate::{Error, Result};

pub const HEADER: [&str; 4] = ["obj_id", "timestamp", "lon", "lat"];

/// Counters collected while reading a file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub lines: usize,
    pub malformed: usize,
    pub outside_bbox: usize,
    /// Objects whose samples were not in timestamp order and got sorted.
    pub unsorted_objects: usize,
    pub trajectories: usize,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub bbox: BBox,
    pub stats: IngestStats,
}

fn parse_row(row: &csv::StringRecord) -> Option<RawSample> {
    if row.len() != 4 {
        return None;
    }
    let object_id = row.get(0)?.trim();
    let timestamp: f64 = row.get(1)?.trim().parse().ok()?;
    let lon: f64 = row.get(2)?.trim().parse().ok()?;
    let lat: f64 = row.get(3)?.trim().parse().ok()?;
    let valid = !object_id.is_empty()
        && timestamp.is_finite()
        && (-180.0..=180.0).contains(&lon)
        && (-90.0..=90.0).contains(&lat);
    valid.then(|| RawSample {
        object_id: object_id.to_string(),
        timestamp,
        lon,
        lat,
    })
}

/// Reads raw samples, skipping (and counting) malformed lines.
pub fn read_samples<R: Read>(reader: R) -> Result<(Vec<RawSample>, IngestStats)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Config(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut stats = IngestStats::default();
    let mut samples = Vec::new();
    for row in rdr.records() {
        stats.lines += 1;
        match row.ok().as_ref().and_then(parse_row) {
            Some(s) => samples.push(s),
            None => stats.malformed += 1,
        }
    }
    Ok((samples, stats))
}

/// Groups samples into trajectories (in order of each object's first
/// appearance), sorts each by timestamp with ties kept in input order, and
/// snaps coordinates to the finest grid. Samples outside `bbox` are
/// dropped.
pub fn build_dataset(samples: &[RawSample], bbox: &BBox, granularity: u32, stats: &mut IngestStats) -> Dataset {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<&RawSample>)> = Vec::new();
    for s in samples {
        if !bbox.contains(s.lon, s.lat) {
            stats.outside_bbox += 1;
            continue;
        }
        let i = *slot.entry(&s.object_id).or_insert_with(|| {
            groups.push((&s.object_id, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(s);
    }
    let trajectories: Vec<Trajectory> = groups
        .into_iter()
        .map(|(id, mut group)| {
            if group.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
                stats.unsorted_objects += 1;
                group.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            }
            let pts = group
                .iter()
                .map(|s| {
                    let p = bbox.normalize(s.lon, s.lat).expect("filtered above");
                    (snap_to_location(p, granularity), s.timestamp)
                })
                .collect();
            Trajectory::new(0, id, pts)
        })
        .collect();
    let dataset = Dataset::new(trajectories, granularity);
    stats.trajectories = dataset.len();
    stats.points = dataset.total_points();
    dataset
}

/// Reads a trajectory file. Without `bbox`, the tight box around all valid
/// samples is used.
pub fn ingest(path: &Path, bbox: Option<BBox>, granularity: u32) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (samples, mut stats) = read_samples(std::io::BufReader::new(file))?;
    let bbox = match bbox {
        Some(b) => b,
        None => BBox::enclosing(&samples).ok_or_else(|| Error::EmptyDataset(path.display().to_string()))?,
    };
    let dataset = build_dataset(&samples, &bbox, granularity, &mut stats);
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(Ingested { dataset, bbox, stats })
}

/// Writes raw samples with the standard header.
pub fn write_samples<W: Write>(writer: W, samples: &[RawSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for s in samples {
        w.write_record([
            s.object_id.clone(),
            s.timestamp.to_string(),
            s.lon.to_string(),
            s.lat.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Converts a dataset back to raw samples at cell centers.
pub fn to_samples(dataset: &Dataset, bbox: &BBox) -> Vec<RawSample> {
    dataset
        .trajectories
        .iter()
        .flat_map(|t| {
            t.points.iter().map(move |p| {
                let (lon, lat) = bbox.denormalize(p.location.center);
                RawSample {
                    object_id: t.object_id.clone(),
                    timestamp: p.timestamp,
                    lon,
                    lat,
                }
            })
        })
        .collect()
}

pub fn write_dataset<W: Write>(writer: W, dataset: &Dataset, bbox: &BBox) -> Result<()> {
    write_samples(writer, &to_samples(dataset, bbox))
}

pub fn write_dataset_file(path: &Path, dataset: &Dataset, bbox: &BBox) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(std::io::BufWriter::new(file), dataset, bbox)
}

/// Same trajectories, points, locations and timestamps, ignoring internal
/// point uids.
pub fn same_content(a: &Dataset, b: &Dataset) -> bool {
    a.len() == b.len()
        && a.trajectories.iter().zip(&b.trajectories).all(|(x, y)| {
            x.object_id == y.object_id
                && x.len() == y.len()
                && x.points
                    .iter()
                    .zip(&y.points)
                    .all(|(p, q)| p.location == q.location && p.timestamp == q.timestamp)
        })
}
