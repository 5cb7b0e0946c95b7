//! GeoJSON export of per-building severity predictions.
//!
//! The manifest stores building footprints in image pixels plus a lon/lat
//! centroid; for map output the pixel polygon is re-anchored around the
//! centroid at a nominal 0.5 m/px ground sampling distance. Colors follow
//! the fixed severity palette: green, wheat, orange, red.

use galenet::dataset::{BuildingRecord, DamageLabel, Scenario};
use galenet::geo::polygon_centroid_area;
use serde_json::{json, Value};

/// Nominal ground sampling distance of the source imagery.
const METERS_PER_PIXEL: f64 = 0.5;
/// Metres per degree of latitude (WGS-84 mean).
const M_PER_DEG_LAT: f64 = 110_574.0;
/// Metres per degree of longitude at the equator.
const M_PER_DEG_LON: f64 = 111_319.49;

/// One building's prediction: class probabilities are non-negative and sum
/// to one.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub building_id: String,
    pub predicted: DamageLabel,
    pub probs: [f64; 4],
    pub scenario: Scenario,
}

/// Pixel footprint re-anchored at the building's lon/lat centroid, as a
/// closed GeoJSON linear ring.
fn footprint_ring(building: &BuildingRecord) -> Vec<[f64; 2]> {
    let geom = polygon_centroid_area(&building.polygon.vertices)
        .expect("validated at ingestion");
    let (cx, cy) = (geom.centroid.x, geom.centroid.y);
    let lat = building.location.lat();
    let lon = building.location.lon();
    let lon_scale = METERS_PER_PIXEL / (M_PER_DEG_LON * lat.to_radians().cos().max(1e-6));
    let lat_scale = METERS_PER_PIXEL / M_PER_DEG_LAT;
    let mut ring: Vec<[f64; 2]> = building
        .polygon
        .vertices
        .iter()
        .map(|p| {
            [
                lon + (p.x - cx) * lon_scale,
                // Pixel y grows downward, latitude upward.
                lat - (p.y - cy) * lat_scale,
            ]
        })
        .collect();
    if let (Some(&first), Some(&last)) = (ring.first(), ring.last()) {
        if first != last {
            ring.push(first);
        }
    }
    ring
}

/// One GeoJSON Feature; `label` adds ground truth and correctness when the
/// manifest carries it.
pub fn feature(record: &PredictionRecord, building: &BuildingRecord) -> Value {
    let mut properties = json!({
        "id": record.building_id,
        "predicted": record.predicted.display_name(),
        "probs": record.probs,
        "severity_color": record.predicted.severity_color(),
        "scenario": record.scenario.as_str(),
    });
    if let Some(label) = building.label {
        let map = properties.as_object_mut().unwrap();
        map.insert("label".into(), json!(label.display_name()));
        map.insert("correct".into(), json!(label == record.predicted));
    }
    json!({
        "type": "Feature",
        "geometry": {
            "type": "Polygon",
            "coordinates": [footprint_ring(building)],
        },
        "properties": properties,
    })
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use galenet::dataset::Split;
    use galenet::geo::{BuildingPolygon, GeoPoint, PixelPoint};

    fn building(label: Option<DamageLabel>) -> BuildingRecord {
        let location = GeoPoint::new(20.0, -75.0).unwrap();
        BuildingRecord {
            id: "b0".into(),
            polygon: BuildingPolygon::new(
                vec![
                    PixelPoint::new(0.0, 0.0),
                    PixelPoint::new(10.0, 0.0),
                    PixelPoint::new(10.0, 10.0),
                    PixelPoint::new(0.0, 10.0),
                ],
                location,
                100.0,
            )
            .unwrap(),
            location,
            disaster_id: "d0".into(),
            split: Split::Test,
            label,
        }
    }

    #[test]
    fn argmax_class_maps_to_name_and_color() {
        let record = PredictionRecord {
            building_id: "b0".into(),
            predicted: DamageLabel::Destroyed,
            probs: [0.1, 0.2, 0.3, 0.4],
            scenario: Scenario::Proactive,
        };
        let f = feature(&record, &building(None));
        assert_eq!(f["properties"]["predicted"], "Destroyed");
        assert_eq!(f["properties"]["severity_color"], "red");
        assert!(f["properties"].get("label").is_none());
        assert!(f["properties"].get("correct").is_none());
    }

    #[test]
    fn labels_add_correctness() {
        let record = PredictionRecord {
            building_id: "b0".into(),
            predicted: DamageLabel::Minor,
            probs: [0.2, 0.5, 0.2, 0.1],
            scenario: Scenario::Reactive,
        };
        let f = feature(&record, &building(Some(DamageLabel::Minor)));
        assert_eq!(f["properties"]["label"], "Minor Damage");
        assert_eq!(f["properties"]["correct"], true);
    }

    #[test]
    fn ring_is_closed_and_centered_near_the_location() {
        let record = PredictionRecord {
            building_id: "b0".into(),
            predicted: DamageLabel::NoDamage,
            probs: [1.0, 0.0, 0.0, 0.0],
            scenario: Scenario::Proactive,
        };
        let f = feature(&record, &building(None));
        let ring = f["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.first(), ring.last());
        assert_eq!(ring.len(), 5);
        for point in ring {
            let lon = point[0].as_f64().unwrap();
            let lat = point[1].as_f64().unwrap();
            assert!((lon - -75.0).abs() < 1e-3);
            assert!((lat - 20.0).abs() < 1e-3);
        }
    }
}
