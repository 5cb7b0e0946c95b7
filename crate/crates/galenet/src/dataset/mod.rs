//! Dataset ingestion and per-building modality alignment.
//!
//! A [`DatasetHandle`] holds validated buildings, tracks and weather series;
//! embedding payloads stay on disk until [`assemble_examples`] pulls in the
//! files for the requested scenario, so a proactive run never opens
//! post-disaster embedding files.

pub mod embeddings;
pub mod manifest;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{
    closest_approach_batch, featurize_weather, HurricaneTrack, TrajectoryFeatures, WeatherSeries,
    DEFAULT_STEP_KM,
};
use crate::geo::{BuildingPolygon, GeoPoint, PixelPoint};

pub use embeddings::{
    read_embedding_header, read_embeddings, write_embeddings, EmbeddingMatrix,
    DEFAULT_EMBEDDING_DIM, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use manifest::{
    read_manifest, write_manifest, BuildingEntry, DisasterEntry, EmbeddingSection, Manifest,
    ManifestMetadata, ScalePaths, SplitSizes,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// Number of image crop scales per building.
pub const N_SCALES: usize = 4;

/// Four-level damage severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum DamageLabel {
    NoDamage = 0,
    Minor = 1,
    Major = 2,
    Destroyed = 3,
}

impl DamageLabel {
    pub const ALL: [DamageLabel; 4] = [
        DamageLabel::NoDamage,
        DamageLabel::Minor,
        DamageLabel::Major,
        DamageLabel::Destroyed,
    ];

    pub fn from_index(v: u8) -> Result<Self> {
        match v {
            0 => Ok(DamageLabel::NoDamage),
            1 => Ok(DamageLabel::Minor),
            2 => Ok(DamageLabel::Major),
            3 => Ok(DamageLabel::Destroyed),
            other => Err(Error::Schema(format!(
                "damage label must be 0..=3, got {other}"
            ))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DamageLabel::NoDamage => "No Damage",
            DamageLabel::Minor => "Minor Damage",
            DamageLabel::Major => "Major Damage",
            DamageLabel::Destroyed => "Destroyed",
        }
    }

    /// Map color per severity class.
    pub fn severity_color(self) -> &'static str {
        match self {
            DamageLabel::NoDamage => "green",
            DamageLabel::Minor => "wheat",
            DamageLabel::Major => "orange",
            DamageLabel::Destroyed => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Schema(format!(
                "split must be train/val/test, got {other:?}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Which image embeddings feed the models: pre-disaster evidence only
/// (proactive) or post-disaster imagery (reactive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Proactive,
    Reactive,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Proactive => "proactive",
            Scenario::Reactive => "reactive",
        }
    }
}

/// Which embedding files to validate at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingCheck {
    /// Touch no embedding files (featurization-only workloads).
    None,
    /// Validate only the given scenario's files.
    Scenario(Scenario),
    /// Validate every embedding section present in the manifest.
    All,
}

/// A validated building: the alignment anchor for all modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub id: String,
    pub polygon: BuildingPolygon,
    pub location: GeoPoint,
    pub disaster_id: String,
    pub split: Split,
    pub label: Option<DamageLabel>,
}

#[derive(Debug, Clone)]
enum EmbeddingSource {
    Files {
        root: PathBuf,
        pre: Option<ScalePaths>,
        post: Option<ScalePaths>,
    },
    Memory {
        pre: Option<[EmbeddingMatrix; N_SCALES]>,
        post: Option<[EmbeddingMatrix; N_SCALES]>,
    },
}

/// A loaded, validated dataset: buildings plus per-disaster tracks and
/// weather, with embedding payloads resolved lazily per scenario.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    buildings: Vec<BuildingRecord>,
    tracks: BTreeMap<String, HurricaneTrack>,
    weather: BTreeMap<String, WeatherSeries>,
    embeddings: EmbeddingSource,
}

impl DatasetHandle {
    pub fn buildings(&self) -> &[BuildingRecord] {
        &self.buildings
    }

    pub fn track(&self, disaster_id: &str) -> Option<&HurricaneTrack> {
        self.tracks.get(disaster_id)
    }

    pub fn weather(&self, disaster_id: &str) -> Option<&WeatherSeries> {
        self.weather.get(disaster_id)
    }

    pub fn split_counts(&self) -> SplitSizes {
        let mut sizes = SplitSizes {
            train: 0,
            val: 0,
            test: 0,
        };
        for b in &self.buildings {
            match b.split {
                Split::Train => sizes.train += 1,
                Split::Val => sizes.val += 1,
                Split::Test => sizes.test += 1,
            }
        }
        sizes
    }

    pub fn has_scenario(&self, scenario: Scenario) -> bool {
        match (&self.embeddings, scenario) {
            (EmbeddingSource::Files { pre, .. }, Scenario::Proactive) => pre.is_some(),
            (EmbeddingSource::Files { post, .. }, Scenario::Reactive) => post.is_some(),
            (EmbeddingSource::Memory { pre, .. }, Scenario::Proactive) => pre.is_some(),
            (EmbeddingSource::Memory { post, .. }, Scenario::Reactive) => post.is_some(),
        }
    }

    /// Loads the four per-scale matrices for a scenario, validating row
    /// counts and a shared dim.
    fn load_scales(&self, scenario: Scenario) -> Result<[EmbeddingMatrix; N_SCALES]> {
        let n = self.buildings.len();
        let matrices: [EmbeddingMatrix; N_SCALES] = match &self.embeddings {
            EmbeddingSource::Files { root, pre, post } => {
                let paths = match scenario {
                    Scenario::Proactive => pre.as_ref(),
                    Scenario::Reactive => post.as_ref(),
                }
                .ok_or(Error::MissingScenario {
                    scenario: scenario.as_str(),
                })?;
                let mut out = Vec::with_capacity(N_SCALES);
                for rel in paths.as_array() {
                    out.push(read_embeddings(&root.join(rel))?);
                }
                out.try_into().expect("four scales")
            }
            EmbeddingSource::Memory { pre, post } => match scenario {
                Scenario::Proactive => pre.clone(),
                Scenario::Reactive => post.clone(),
            }
            .ok_or(Error::MissingScenario {
                scenario: scenario.as_str(),
            })?,
        };
        let dim = matrices[0].dim();
        for (i, m) in matrices.iter().enumerate() {
            if m.count() != n {
                return Err(Error::CountMismatch {
                    path: format!("{} scale index {i}", scenario.as_str()),
                    embedding_rows: m.count(),
                    buildings: n,
                });
            }
            if m.dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "{} scale index {i} has dim {}, scale1 has {dim}",
                    scenario.as_str(),
                    m.dim()
                )));
            }
        }
        Ok(matrices)
    }

    fn from_memory(
        buildings: Vec<BuildingRecord>,
        tracks: BTreeMap<String, HurricaneTrack>,
        weather: BTreeMap<String, WeatherSeries>,
        pre: Option<[EmbeddingMatrix; N_SCALES]>,
        post: Option<[EmbeddingMatrix; N_SCALES]>,
    ) -> Self {
        Self {
            buildings,
            tracks,
            weather,
            embeddings: EmbeddingSource::Memory { pre, post },
        }
    }
}

/// Loads and fully validates a manifest, checking every embedding section
/// present. Equivalent to [`load_manifest_with`] with
/// [`EmbeddingCheck::All`].
pub fn load_manifest(path: &Path) -> Result<DatasetHandle> {
    load_manifest_with(path, EmbeddingCheck::All)
}

/// Loads a manifest, restricting embedding validation to `check`. Embedding
/// headers (magic, version, row count) are verified here; payloads are read
/// only at assembly.
pub fn load_manifest_with(path: &Path, check: EmbeddingCheck) -> Result<DatasetHandle> {
    let manifest = read_manifest(path)?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    if manifest.disasters.is_empty() {
        return Err(Error::Schema("manifest lists no disasters".into()));
    }

    let mut tracks = BTreeMap::new();
    let mut weather = BTreeMap::new();
    let mut weather_dims = None;
    for d in &manifest.disasters {
        if tracks.contains_key(&d.id) {
            return Err(Error::Schema(format!("duplicate disaster id {:?}", d.id)));
        }
        let track = manifest::read_track_csv(&root.join(&d.track_file), &d.id)?;
        let series = manifest::read_weather_csv(&root.join(&d.weather_file), &d.id)?;
        match weather_dims {
            None => weather_dims = Some((series.rows(), series.cols())),
            Some((t, f)) => {
                if series.cols() != f {
                    return Err(Error::Schema(format!(
                        "disaster {:?} has {} weather features, expected {f}",
                        d.id,
                        series.cols()
                    )));
                }
                if series.rows() != t {
                    return Err(Error::Schema(format!(
                        "disaster {:?} has {} weather rows, expected {t}",
                        d.id,
                        series.rows()
                    )));
                }
            }
        }
        tracks.insert(d.id.clone(), track);
        weather.insert(d.id.clone(), series);
    }

    let mut seen_ids = HashSet::new();
    let mut buildings = Vec::with_capacity(manifest.buildings.len());
    for b in &manifest.buildings {
        if !seen_ids.insert(b.id.clone()) {
            return Err(Error::DuplicateId(b.id.clone()));
        }
        if !tracks.contains_key(&b.disaster_id) {
            return Err(Error::Schema(format!(
                "building {:?} references unknown disaster {:?}",
                b.id, b.disaster_id
            )));
        }
        let location = GeoPoint::new(b.lat, b.lon)?;
        let vertices: Vec<PixelPoint> = b
            .polygon_px
            .iter()
            .map(|&[x, y]| PixelPoint::new(x, y))
            .collect();
        let polygon = BuildingPolygon::new(vertices, location, b.area_px2)?;
        let label = b.label.map(DamageLabel::from_index).transpose()?;
        buildings.push(BuildingRecord {
            id: b.id.clone(),
            polygon,
            location,
            disaster_id: b.disaster_id.clone(),
            split: Split::parse(&b.split)?,
            label,
        });
    }

    let handle = DatasetHandle {
        buildings,
        tracks,
        weather,
        embeddings: EmbeddingSource::Files {
            root: root.clone(),
            pre: manifest.embeddings.pre.clone(),
            post: manifest.embeddings.post.clone(),
        },
    };

    let check_section = |paths: &ScalePaths| -> Result<()> {
        let mut dim = None;
        for rel in paths.as_array() {
            let full = root.join(rel);
            let (count, d) = read_embedding_header(&full)?;
            if count != handle.buildings.len() {
                return Err(Error::CountMismatch {
                    path: full.display().to_string(),
                    embedding_rows: count,
                    buildings: handle.buildings.len(),
                });
            }
            match dim {
                None => dim = Some(d),
                Some(expected) if d != expected => {
                    return Err(Error::ShapeMismatch(format!(
                        "{}: dim {d}, sibling scales have {expected}",
                        full.display()
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    };

    match check {
        EmbeddingCheck::None => {}
        EmbeddingCheck::Scenario(s) => {
            let paths = match s {
                Scenario::Proactive => manifest.embeddings.pre.as_ref(),
                Scenario::Reactive => manifest.embeddings.post.as_ref(),
            }
            .ok_or(Error::MissingScenario {
                scenario: s.as_str(),
            })?;
            check_section(paths)?;
        }
        EmbeddingCheck::All => {
            if let Some(paths) = manifest.embeddings.pre.as_ref() {
                check_section(paths)?;
            }
            if let Some(paths) = manifest.embeddings.post.as_ref() {
                check_section(paths)?;
            }
        }
    }

    if let Some(meta) = &manifest.metadata {
        if let Some(expected) = meta.expected_split_sizes {
            let actual = handle.split_counts();
            if actual != expected {
                return Err(Error::Schema(format!(
                    "split sizes {actual:?} do not match declared {expected:?}"
                )));
            }
        }
    }

    let counts = handle.split_counts();
    log::info!(
        "loaded {} buildings (train {}, val {}, test {}) across {} disasters",
        handle.buildings.len(),
        counts.train,
        counts.val,
        counts.test,
        handle.tracks.len()
    );
    Ok(handle)
}

/// Per-feature standardization statistics, fitted on the train split only.
/// Features with zero variance standardize to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub weather_mean: Vec<f64>,
    pub weather_std: Vec<f64>,
    pub traj_mean: Vec<f64>,
    pub traj_std: Vec<f64>,
}

impl NormStats {
    fn fit(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        (mean, std)
    }

    fn apply(values: &mut [f64], mean: &[f64], std: &[f64]) {
        for ((v, m), s) in values.iter_mut().zip(mean).zip(std) {
            *v = if *s > 1e-12 { (*v - m) / s } else { 0.0 };
        }
    }

    pub fn standardize_weather(&self, values: &mut [f64]) {
        Self::apply(values, &self.weather_mean, &self.weather_std);
    }

    pub fn standardize_trajectory(&self, values: &mut [f64]) {
        Self::apply(values, &self.traj_mean, &self.traj_std);
    }
}

/// One aligned, standardized example: four image-scale embeddings, the
/// weather vector and the trajectory triple.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalExample {
    pub building_id: String,
    pub image: [Vec<f64>; N_SCALES],
    pub weather: Vec<f64>,
    pub trajectory: Vec<f64>,
    pub label: DamageLabel,
}

/// Assembly output: examples per split plus the train-fitted statistics.
#[derive(Debug, Clone)]
pub struct AssembledDataset {
    pub train: Vec<MultimodalExample>,
    pub val: Vec<MultimodalExample>,
    pub test: Vec<MultimodalExample>,
    pub norm: NormStats,
    pub image_dim: usize,
    pub weather_dim: usize,
}

impl AssembledDataset {
    pub fn split(&self, split: Split) -> &[MultimodalExample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Raw (unstandardized) per-building features, shared by assembly and the
/// featurization cache.
pub struct RawFeatures {
    pub trajectory: Vec<TrajectoryFeatures>,
    pub weather: BTreeMap<String, Vec<f64>>,
}

/// Trajectory and weather features for every building, in manifest order.
pub fn compute_raw_features(handle: &DatasetHandle) -> Result<RawFeatures> {
    let mut weather = BTreeMap::new();
    for (id, series) in &handle.weather {
        weather.insert(id.clone(), featurize_weather(series).0);
    }
    // Group buildings per disaster so each track is featurized in one batch.
    let mut trajectory = vec![None; handle.buildings.len()];
    for disaster_id in handle.tracks.keys() {
        let indices: Vec<usize> = handle
            .buildings
            .iter()
            .enumerate()
            .filter(|(_, b)| &b.disaster_id == disaster_id)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        let locations: Vec<GeoPoint> = indices.iter().map(|&i| handle.buildings[i].location).collect();
        let track = &handle.tracks[disaster_id];
        let features = closest_approach_batch(track, &locations, DEFAULT_STEP_KM)?;
        for (&i, f) in indices.iter().zip(features) {
            trajectory[i] = Some(f);
        }
    }
    Ok(RawFeatures {
        trajectory: trajectory.into_iter().map(|t| t.expect("every building featurized")).collect(),
        weather,
    })
}

fn build_examples(
    handle: &DatasetHandle,
    scenario: Scenario,
    raw: &RawFeatures,
) -> Result<Vec<(usize, [Vec<f64>; N_SCALES], Vec<f64>, Vec<f64>)>> {
    let scales = handle.load_scales(scenario)?;
    let mut rows = Vec::with_capacity(handle.buildings.len());
    for (i, b) in handle.buildings.iter().enumerate() {
        let image: [Vec<f64>; N_SCALES] = [
            scales[0].row_f64(i),
            scales[1].row_f64(i),
            scales[2].row_f64(i),
            scales[3].row_f64(i),
        ];
        let weather = raw.weather[&b.disaster_id].clone();
        let trajectory = raw.trajectory[i].to_array().to_vec();
        rows.push((i, image, weather, trajectory));
    }
    Ok(rows)
}

/// Aligns all modalities per building for `scenario` and standardizes the
/// weather and trajectory features with train-split statistics (population
/// std). Image embeddings are left as produced. Every building must carry a
/// label.
pub fn assemble_examples(handle: &DatasetHandle, scenario: Scenario) -> Result<AssembledDataset> {
    let raw = compute_raw_features(handle)?;
    let rows = build_examples(handle, scenario, &raw)?;
    let image_dim = rows.first().map_or(0, |r| r.1[0].len());
    let weather_dim = rows.first().map_or(0, |r| r.2.len());

    let train_weather: Vec<Vec<f64>> = rows
        .iter()
        .filter(|(i, ..)| handle.buildings[*i].split == Split::Train)
        .map(|(_, _, w, _)| w.clone())
        .collect();
    if train_weather.is_empty() {
        return Err(Error::EmptySplit(
            "train split is empty; cannot fit standardization statistics".into(),
        ));
    }
    let train_traj: Vec<Vec<f64>> = rows
        .iter()
        .filter(|(i, ..)| handle.buildings[*i].split == Split::Train)
        .map(|(_, _, _, t)| t.clone())
        .collect();
    let (weather_mean, weather_std) = NormStats::fit(&train_weather);
    let (traj_mean, traj_std) = NormStats::fit(&train_traj);
    let norm = NormStats {
        weather_mean,
        weather_std,
        traj_mean,
        traj_std,
    };

    let mut out = AssembledDataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        norm,
        image_dim,
        weather_dim,
    };
    for (i, image, mut weather, mut trajectory) in rows {
        let b = &handle.buildings[i];
        let label = b.label.ok_or_else(|| {
            Error::Schema(format!("building {:?} has no label; cannot assemble training examples", b.id))
        })?;
        out.norm.standardize_weather(&mut weather);
        out.norm.standardize_trajectory(&mut trajectory);
        let example = MultimodalExample {
            building_id: b.id.clone(),
            image,
            weather,
            trajectory,
            label,
        };
        match b.split {
            Split::Train => out.train.push(example),
            Split::Val => out.val.push(example),
            Split::Test => out.test.push(example),
        }
    }
    Ok(out)
}

/// One building's standardized features for inference; the label tags along
/// when the manifest has one.
#[derive(Debug, Clone)]
pub struct PredictionInput {
    pub building_id: String,
    pub image: [Vec<f64>; N_SCALES],
    pub weather: Vec<f64>,
    pub trajectory: Vec<f64>,
    pub label: Option<DamageLabel>,
}

/// Assembles features for prediction using externally supplied (checkpoint)
/// standardization statistics; labels are optional.
pub fn assemble_features(
    handle: &DatasetHandle,
    scenario: Scenario,
    norm: &NormStats,
) -> Result<Vec<PredictionInput>> {
    let raw = compute_raw_features(handle)?;
    let rows = build_examples(handle, scenario, &raw)?;
    Ok(rows
        .into_iter()
        .map(|(i, image, mut weather, mut trajectory)| {
            let b = &handle.buildings[i];
            norm.standardize_weather(&mut weather);
            norm.standardize_trajectory(&mut trajectory);
            PredictionInput {
                building_id: b.id.clone(),
                image,
                weather,
                trajectory,
                label: b.label,
            }
        })
        .collect())
}
