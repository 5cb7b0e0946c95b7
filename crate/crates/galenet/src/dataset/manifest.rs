//! Manifest schema and CSV ingestion.
//!
//! The manifest is UTF-8 JSON tying together disasters (track + weather
//! files), buildings (geometry, split, optional label), and embedding files
//! per scenario and crop scale. All file paths are resolved relative to the
//! manifest's directory.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{HurricaneTrack, TrackPoint, WeatherSeries};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub disasters: Vec<DisasterEntry>,
    pub buildings: Vec<BuildingEntry>,
    pub embeddings: EmbeddingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ManifestMetadata>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisasterEntry {
    pub id: String,
    pub track_file: String,
    pub weather_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingEntry {
    pub id: String,
    pub disaster_id: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub lon: f64,
    pub lat: f64,
    pub polygon_px: Vec<[f64; 2]>,
    pub area_px2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre: Option<ScalePaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<ScalePaths>,
}

/// Embedding file per crop scale, zoomed-out to zoomed-in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalePaths {
    pub scale1: String,
    pub scale4: String,
    pub scale16: String,
    pub scale32: String,
}

impl ScalePaths {
    pub fn as_array(&self) -> [&str; 4] {
        [&self.scale1, &self.scale4, &self.scale16, &self.scale32]
    }
}

/// Optional bookkeeping; `expected_split_sizes`, when present, is validated
/// against the building list (real corpora record their canonical split
/// sizes here rather than hard-coding them anywhere).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_split_sizes: Option<SplitSizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = std::fs::read(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_string_pretty(manifest)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Reads a track CSV with header `timestamp_utc,lat,lon,wind_kt,pressure_mb`.
pub fn read_track_csv(path: &Path, name: &str) -> Result<HurricaneTrack> {
    let file = std::fs::File::open(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    expect_headers(
        &mut reader,
        &["timestamp_utc", "lat", "lon", "wind_kt", "pressure_mb"],
        path,
    )?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let ts: i64 = parse_field(&record, 0, path)?;
        let lat: f64 = parse_field(&record, 1, path)?;
        let lon: f64 = parse_field(&record, 2, path)?;
        let wind: f64 = parse_field(&record, 3, path)?;
        let pressure: f64 = parse_field(&record, 4, path)?;
        points.push(TrackPoint::new(GeoPoint::new(lat, lon)?, ts, wind, pressure)?);
    }
    HurricaneTrack::new(name, points)
}

pub fn write_track_csv(path: &Path, track: &HurricaneTrack) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::fs::File::create(path)?);
    w.write_record(["timestamp_utc", "lat", "lon", "wind_kt", "pressure_mb"])?;
    for p in track.points() {
        w.write_record([
            p.timestamp.to_string(),
            format!("{}", p.position.lat()),
            format!("{}", p.position.lon()),
            format!("{}", p.wind_kt),
            format!("{}", p.pressure_mb),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a weather CSV with header `disaster_id,timestamp_utc,f0..f{F-1}`;
/// every row must carry `expected_disaster`'s id.
pub fn read_weather_csv(path: &Path, expected_disaster: &str) -> Result<WeatherSeries> {
    let file = std::fs::File::open(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "disaster_id" || &headers[1] != "timestamp_utc" {
        return Err(Error::Schema(format!(
            "{}: weather header must start with disaster_id,timestamp_utc,f0..",
            path.display()
        )));
    }
    let n_features = headers.len() - 2;
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("f{i}") {
            return Err(Error::Schema(format!(
                "{}: weather feature column {} named {h:?}, expected f{i}",
                path.display(),
                i + 2
            )));
        }
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if &record[0] != expected_disaster {
            return Err(Error::Schema(format!(
                "{}: row for disaster {:?}, expected {:?}",
                path.display(),
                &record[0],
                expected_disaster
            )));
        }
        for i in 0..n_features {
            let v: f64 = parse_field(&record, i + 2, path)?;
            values.push(v);
        }
        rows += 1;
    }
    WeatherSeries::new(rows, n_features, values)
}

pub fn write_weather_csv(path: &Path, disaster_id: &str, series: &WeatherSeries, timestamps: &[i64]) -> Result<()> {
    if timestamps.len() != series.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} timestamps for {} weather rows",
            timestamps.len(),
            series.rows()
        )));
    }
    let mut w = csv::Writer::from_writer(std::fs::File::create(path)?);
    let mut header = vec!["disaster_id".to_string(), "timestamp_utc".to_string()];
    header.extend((0..series.cols()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (r, ts) in timestamps.iter().enumerate() {
        let mut record = vec![disaster_id.to_string(), ts.to_string()];
        record.extend(series.row(r).iter().map(|v| format!("{v}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn expect_headers(reader: &mut csv::Reader<std::fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let headers = reader.headers()?;
    let actual: Vec<&str> = headers.iter().collect();
    if actual != expected {
        return Err(Error::Schema(format!(
            "{}: header {actual:?}, expected {expected:?}",
            path.display()
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, path: &Path) -> Result<T> {
    record[idx]
        .trim()
        .parse()
        .map_err(|_| Error::Schema(format!(
            "{}: cannot parse field {idx} from {:?}",
            path.display(),
            &record[idx]
        )))
}
