//! Deterministic synthetic datasets for desk-scale experiments.
//!
//! The generator plants complementary class signal across modalities:
//!
//! - image embeddings shift by a fixed per-scale pattern for odd-severity
//!   classes (minor, destroyed);
//! - building placement puts high-severity classes (major, destroyed) close
//!   to the hurricane track, so the closest-approach distance separates the
//!   severity pair;
//! - track wind and the leading weather features scale with the mean
//!   severity of each disaster's buildings.
//!
//! No single modality determines the class; together they do. All effects
//! scale with `signal_strength` and vanish at zero, leaving a chance-level
//! task. Generation is a pure function of the config, so equal configs give
//! byte-identical datasets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::embeddings::{write_embeddings, EmbeddingMatrix};
use crate::dataset::manifest::{
    write_manifest, write_track_csv, write_weather_csv, BuildingEntry, DisasterEntry,
    EmbeddingSection, Manifest, ManifestMetadata, ScalePaths, SplitSizes,
};
use crate::dataset::{BuildingRecord, DamageLabel, DatasetHandle, Split, N_SCALES};
use crate::error::{Error, Result};
use crate::featurize::{HurricaneTrack, TrackPoint, WeatherSeries};
use crate::geo::{BuildingPolygon, GeoPoint, PixelPoint, EARTH_RADIUS_KM};
use crate::nn::rng::{StreamKind, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_examples: usize,
    /// Class prior over the four severity levels; must sum to 1.
    pub class_probs: [f64; 4],
    /// Scales every class-dependent effect; 0 gives a chance-level task.
    pub signal_strength: f64,
    pub seed: u64,
    pub image_dim: usize,
    pub weather_features: usize,
    pub n_disasters: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_examples: 2000,
            class_probs: [0.48, 0.33, 0.11, 0.08],
            signal_strength: 2.0,
            seed: 0,
            image_dim: 32,
            weather_features: 16,
            n_disasters: 2,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n_examples == 0 {
            return Err(Error::InvalidParameter("n_examples must be positive".into()));
        }
        let sum: f64 = self.class_probs.iter().sum();
        if self.class_probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "class_probs must be non-negative and sum to 1, got {:?}",
                self.class_probs
            )));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return Err(Error::InvalidParameter(
                "signal_strength must be finite and non-negative".into(),
            ));
        }
        if self.image_dim == 0 || self.weather_features == 0 || self.n_disasters == 0 {
            return Err(Error::InvalidParameter(
                "image_dim, weather_features and n_disasters must be positive".into(),
            ));
        }
        Ok(())
    }
}

const TRACK_FIXES: usize = 24;
const TRACK_SPACING_KM: f64 = 60.0;
const WEATHER_ROWS: usize = 56; // 7 days x 8 points/day
const WEATHER_SPACING_S: i64 = 10_800;

struct SyntheticParts {
    buildings: Vec<BuildingRecord>,
    tracks: BTreeMap<String, HurricaneTrack>,
    weather: BTreeMap<String, (WeatherSeries, Vec<i64>)>,
    pre: [EmbeddingMatrix; N_SCALES],
    post: [EmbeddingMatrix; N_SCALES],
}

/// Great-circle destination from `start` along `bearing_deg` for `km`.
fn destination(start: GeoPoint, bearing_deg: f64, km: f64) -> GeoPoint {
    let lat1 = start.lat().to_radians();
    let lon1 = start.lon().to_radians();
    let theta = bearing_deg.to_radians();
    let delta = km / EARTH_RADIUS_KM;
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = lon1
        + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    GeoPoint::new(lat2.to_degrees(), lon2.to_degrees()).expect("destination in range")
}

/// Initial great-circle bearing from `a` to `b`, degrees.
fn initial_bearing(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat().to_radians();
    let lat2 = b.lat().to_radians();
    let dlon = (b.lon() - a.lon()).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    y.atan2(x).to_degrees()
}

fn disaster_id(d: usize) -> String {
    format!("synth-d{d}")
}

fn track_positions(d: usize) -> Vec<GeoPoint> {
    let mut positions = Vec::with_capacity(TRACK_FIXES);
    let mut p = GeoPoint::new(14.0 + 2.5 * d as f64, -72.0 - 3.0 * d as f64).unwrap();
    let bearing = 300.0 + 5.0 * d as f64;
    positions.push(p);
    for _ in 1..TRACK_FIXES {
        p = destination(p, bearing, TRACK_SPACING_KM);
        positions.push(p);
    }
    positions
}

fn generate_parts(config: &SyntheticConfig) -> Result<SyntheticParts> {
    config.validate()?;
    let mut rng = StreamRng::new(config.seed, StreamKind::Synthetic);
    let n = config.n_examples;
    let s = config.signal_strength;

    let classes: Vec<usize> = (0..n).map(|_| rng.categorical(&config.class_probs)).collect();
    let splits: Vec<Split> = (0..n)
        .map(|_| {
            let u = rng.uniform();
            if u < 0.70 {
                Split::Train
            } else if u < 0.85 {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    let disasters: Vec<usize> = (0..n).map(|_| rng.below(config.n_disasters)).collect();

    // Mean severity per disaster drives its wind and weather scaling.
    let mut sev = vec![0.0f64; config.n_disasters];
    let mut cnt = vec![0usize; config.n_disasters];
    for (&c, &d) in classes.iter().zip(&disasters) {
        sev[d] += c as f64;
        cnt[d] += 1;
    }
    for (v, c) in sev.iter_mut().zip(&cnt) {
        if *c > 0 {
            *v /= *c as f64;
        }
    }

    let positions: Vec<Vec<GeoPoint>> = (0..config.n_disasters).map(track_positions).collect();

    // Buildings: high-severity classes are planted close to their disaster's
    // track; the mix weight saturates with signal strength.
    let sat = s / (1.0 + s);
    let mut buildings = Vec::with_capacity(n);
    for i in 0..n {
        let seg = rng.below(TRACK_FIXES - 1);
        let frac = rng.uniform();
        let side = if rng.uniform() < 0.5 { 90.0 } else { -90.0 };
        let base = rng.uniform_in(5.0, 305.0);
        let near = rng.uniform_in(5.0, 80.0);
        let far = rng.uniform_in(230.0, 305.0);
        let area = rng.uniform_in(60.0, 600.0);
        let cx = rng.uniform_in(100.0, 900.0);
        let cy = rng.uniform_in(100.0, 900.0);

        let d = disasters[i];
        let class = classes[i];
        let high_severity = class >= 2;
        let target = if high_severity { near } else { far };
        let lateral_km = (1.0 - sat) * base + sat * target;

        let fixes = &positions[d];
        let anchor_bearing = initial_bearing(fixes[seg], fixes[seg + 1]);
        let anchor = destination(fixes[seg], anchor_bearing, frac * TRACK_SPACING_KM);
        let location = destination(anchor, anchor_bearing + side, lateral_km);

        let half = area.sqrt() / 2.0;
        let vertices = vec![
            PixelPoint::new(cx - half, cy - half),
            PixelPoint::new(cx + half, cy - half),
            PixelPoint::new(cx + half, cy + half),
            PixelPoint::new(cx - half, cy + half),
        ];
        buildings.push(BuildingRecord {
            id: format!("b{i:06}"),
            polygon: BuildingPolygon::new(vertices, location, area)?,
            location,
            disaster_id: disaster_id(d),
            split: splits[i],
            label: Some(DamageLabel::from_index(classes[i] as u8)?),
        });
    }

    // Image embeddings: unit noise plus a fixed pattern for odd classes
    // (minor, destroyed), independent draws for pre and post.
    let dim = config.image_dim;
    let amp = s / (dim as f64).sqrt();
    let make_section = |rng: &mut StreamRng| -> Result<[EmbeddingMatrix; N_SCALES]> {
        let mut out = Vec::with_capacity(N_SCALES);
        for scale in 0..N_SCALES {
            let mut values = Vec::with_capacity(n * dim);
            for class in classes.iter().take(n) {
                let odd = class % 2 == 1;
                for j in 0..dim {
                    let pattern = if (j + scale) % 2 == 0 { 1.0 } else { -1.0 };
                    let mean = if odd { amp * pattern } else { 0.0 };
                    values.push((mean + rng.normal()) as f32);
                }
            }
            out.push(EmbeddingMatrix::new(n, dim, values)?);
        }
        Ok(out.try_into().expect("four scales"))
    };
    let pre = make_section(&mut rng)?;
    let post = make_section(&mut rng)?;

    // Tracks: wind profile peaks mid-track, scaled by the disaster's mean
    // severity; pressure moves inversely with wind.
    let global_mean_class: f64 = classes.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let mut tracks = BTreeMap::new();
    for (d, fixes) in positions.iter().enumerate() {
        let t0 = 1_470_000_000i64 + d as i64 * 2_592_000;
        let factor = 1.0 + 0.08 * s * (sev[d] - global_mean_class);
        let points: Vec<TrackPoint> = fixes
            .iter()
            .enumerate()
            .map(|(k, &pos)| {
                let profile =
                    45.0 + 45.0 * (std::f64::consts::PI * k as f64 / (TRACK_FIXES - 1) as f64).sin();
                let wind = (profile * factor).max(0.0);
                let pressure = 1012.0 - 0.65 * wind;
                TrackPoint::new(pos, t0 + k as i64 * 3600, wind, pressure)
            })
            .collect::<Result<_>>()?;
        tracks.insert(disaster_id(d), HurricaneTrack::new(disaster_id(d), points)?);
    }

    // Weather: seven days of 3-hourly rows preceding each track, the leading
    // four features carrying the severity scaling.
    let f_dim = config.weather_features;
    let mut weather = BTreeMap::new();
    for d in 0..config.n_disasters {
        let t0 = 1_470_000_000i64 + d as i64 * 2_592_000;
        let bump = 0.1 * s * (sev[d] - global_mean_class);
        let mut values = Vec::with_capacity(WEATHER_ROWS * f_dim);
        let timestamps: Vec<i64> = (0..WEATHER_ROWS)
            .map(|r| t0 - 7 * 86_400 + r as i64 * WEATHER_SPACING_S)
            .collect();
        for r in 0..WEATHER_ROWS {
            for f in 0..f_dim {
                let diurnal =
                    3.0 * (std::f64::consts::TAU * (r % 8) as f64 / 8.0 + 0.3 * f as f64).sin();
                let base = 10.0 + f as f64 + diurnal;
                let class_term = if f < 4 { bump * base } else { 0.0 };
                values.push(base + class_term + 0.5 * rng.normal());
            }
        }
        weather.insert(
            disaster_id(d),
            (WeatherSeries::new(WEATHER_ROWS, f_dim, values)?, timestamps),
        );
    }

    Ok(SyntheticParts {
        buildings,
        tracks,
        weather,
        pre,
        post,
    })
}

/// Generates an in-memory dataset handle, deterministic in the config.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<DatasetHandle> {
    let parts = generate_parts(config)?;
    Ok(DatasetHandle::from_memory(
        parts.buildings,
        parts.tracks,
        parts.weather.into_iter().map(|(k, (s, _))| (k, s)).collect(),
        Some(parts.pre),
        Some(parts.post),
    ))
}

/// Materializes a synthetic dataset under `dir` (manifest, track and
/// weather CSVs, pre/post embedding files) and returns the manifest path.
/// Equal configs produce byte-identical trees.
pub fn write_synthetic_dataset(config: &SyntheticConfig, dir: &Path) -> Result<PathBuf> {
    let parts = generate_parts(config)?;
    std::fs::create_dir_all(dir)?;

    let mut disasters = Vec::new();
    for (id, track) in &parts.tracks {
        let track_file = format!("track_{id}.csv");
        write_track_csv(&dir.join(&track_file), track)?;
        let weather_file = format!("weather_{id}.csv");
        let (series, timestamps) = &parts.weather[id];
        write_weather_csv(&dir.join(&weather_file), id, series, timestamps)?;
        disasters.push(DisasterEntry {
            id: id.clone(),
            track_file,
            weather_file,
        });
    }

    let scale_names = ["scale1", "scale4", "scale16", "scale32"];
    let mut sections = Vec::new();
    for (prefix, matrices) in [("pre", &parts.pre), ("post", &parts.post)] {
        let mut paths = Vec::new();
        for (name, matrix) in scale_names.iter().zip(matrices.iter()) {
            let file = format!("{prefix}_{name}.emb");
            write_embeddings(&dir.join(&file), matrix)?;
            paths.push(file);
        }
        sections.push(ScalePaths {
            scale1: paths[0].clone(),
            scale4: paths[1].clone(),
            scale16: paths[2].clone(),
            scale32: paths[3].clone(),
        });
    }
    let post_paths = sections.pop().unwrap();
    let pre_paths = sections.pop().unwrap();

    let buildings = parts
        .buildings
        .iter()
        .map(|b| BuildingEntry {
            id: b.id.clone(),
            disaster_id: b.disaster_id.clone(),
            split: b.split.as_str().to_string(),
            label: b.label.map(|l| l.index() as u8),
            lon: b.location.lon(),
            lat: b.location.lat(),
            polygon_px: b.polygon.vertices.iter().map(|p| [p.x, p.y]).collect(),
            area_px2: b.polygon.area_px2,
        })
        .collect();

    let mut split_sizes = SplitSizes {
        train: 0,
        val: 0,
        test: 0,
    };
    for b in &parts.buildings {
        match b.split {
            Split::Train => split_sizes.train += 1,
            Split::Val => split_sizes.val += 1,
            Split::Test => split_sizes.test += 1,
        }
    }

    let manifest = Manifest {
        disasters,
        buildings,
        embeddings: EmbeddingSection {
            pre: Some(pre_paths),
            post: Some(post_paths),
        },
        metadata: Some(ManifestMetadata {
            expected_split_sizes: Some(split_sizes),
            note: Some(format!(
                "synthetic dataset (seed {}, signal {})",
                config.seed, config.signal_strength
            )),
        }),
    };
    let manifest_path = dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::assemble_examples;
    use crate::dataset::Scenario;

    #[test]
    fn default_class_probs_follow_the_observed_distribution() {
        let config = SyntheticConfig::default();
        assert_eq!(config.class_probs, [0.48, 0.33, 0.11, 0.08]);
        assert_eq!(config.n_examples, 2000);
    }

    #[test]
    fn invalid_probability_vector_is_rejected() {
        let config = SyntheticConfig {
            class_probs: [0.5, 0.5, 0.5, -0.5],
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&config).is_err());
        let config = SyntheticConfig {
            class_probs: [0.3, 0.3, 0.3, 0.3],
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&config).is_err());
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let config = SyntheticConfig {
            n_examples: 120,
            image_dim: 6,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(a.buildings(), b.buildings());
        let ea = assemble_examples(&a, Scenario::Proactive).unwrap();
        let eb = assemble_examples(&b, Scenario::Proactive).unwrap();
        assert_eq!(ea.train, eb.train);
        assert_eq!(ea.val, eb.val);
        assert_eq!(ea.test, eb.test);
    }

    #[test]
    fn different_seeds_differ() {
        let base = SyntheticConfig {
            n_examples: 50,
            image_dim: 4,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&base).unwrap();
        let b = generate_synthetic(&SyntheticConfig { seed: 1, ..base }).unwrap();
        assert_ne!(a.buildings(), b.buildings());
    }

    #[test]
    fn zero_signal_equalizes_class_conditional_means() {
        let config = SyntheticConfig {
            n_examples: 1600,
            signal_strength: 0.0,
            image_dim: 8,
            ..SyntheticConfig::default()
        };
        let handle = generate_synthetic(&config).unwrap();
        let data = assemble_examples(&handle, Scenario::Proactive).unwrap();
        let all: Vec<_> = data
            .train
            .iter()
            .chain(&data.val)
            .chain(&data.test)
            .collect();

        // Per-class mean of the first image coordinate and of the (raw-scale
        // standardized) trajectory distance; with zero signal these are equal
        // in distribution, so sample means agree within a few standard errors.
        for feature in ["image", "distance"] {
            let mut means = Vec::new();
            for class in 0..4usize {
                let vals: Vec<f64> = all
                    .iter()
                    .filter(|e| e.label.index() == class)
                    .map(|e| match feature {
                        "image" => e.image[0][0],
                        _ => e.trajectory[0],
                    })
                    .collect();
                assert!(vals.len() > 40, "class {class} undersampled");
                means.push(vals.iter().sum::<f64>() / vals.len() as f64);
            }
            let spread = means
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
                - means.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 0.45, "{feature}: class means spread {spread}");
        }
    }

    #[test]
    fn written_dataset_is_byte_identical_across_runs() {
        let config = SyntheticConfig {
            n_examples: 40,
            image_dim: 5,
            ..SyntheticConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_synthetic_dataset(&config, dir_a.path()).unwrap();
        write_synthetic_dataset(&config, dir_b.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.contains(&"manifest.json".to_string()));
        for name in names {
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name} differs between runs");
        }
    }

    #[test]
    fn written_dataset_loads_back() {
        let config = SyntheticConfig {
            n_examples: 30,
            image_dim: 4,
            ..SyntheticConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_dataset(&config, dir.path()).unwrap();
        let from_disk = crate::dataset::load_manifest(&manifest).unwrap();
        let in_memory = generate_synthetic(&config).unwrap();
        assert_eq!(from_disk.buildings().len(), in_memory.buildings().len());
        let a = assemble_examples(&from_disk, Scenario::Reactive).unwrap();
        let b = assemble_examples(&in_memory, Scenario::Reactive).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        // Embeddings round-trip bitwise; CSV floats round-trip through the
        // shortest decimal representation; the two paths must agree exactly.
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x, y);
        }
    }
}
