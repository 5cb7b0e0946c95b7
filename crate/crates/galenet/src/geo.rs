//! Geodesic and polygon primitives.
//!
//! Distances use the haversine formula on a sphere of mean radius
//! [`EARTH_RADIUS_KM`]. Polygon centroid/area work in image-plane pixels via
//! the shoelace formula. Crop-window geometry derives the per-scale zoom
//! factor `m * 11 / sqrt(area)` so the building spans roughly 11 px in the
//! base crop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Side length of every crop window, in pixels.
pub const CROP_SIDE_PX: u32 = 224;

/// Numerator of the base scale factor: the building spans ~11 px at Scale-1x.
pub const SCALE_NUMERATOR: f64 = 11.0;

/// Default crop-scale multipliers, from zoomed-out to zoomed-in.
pub const DEFAULT_SCALE_MULTIPLIERS: [f64; 4] = [1.0, 4.0, 16.0, 32.0];

/// A point on the WGS-84 sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates latitude and normalizes longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidCoordinate(format!(
                "non-finite lat/lon ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoordinate(format!(
                "latitude {lat} outside [-90, 90]"
            )));
        }
        // In-range longitudes pass through untouched so the normalization is
        // idempotent (re-ingesting serialized coordinates is bit-exact).
        let lon = if (-180.0..180.0).contains(&lon) {
            lon
        } else {
            let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
            if wrapped >= 180.0 {
                -180.0
            } else {
                wrapped
            }
        };
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Unit vector on the sphere, used for great-circle interpolation.
    pub(crate) fn to_unit_vector(self) -> [f64; 3] {
        let lat = self.lat.to_radians();
        let lon = self.lon.to_radians();
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    pub(crate) fn from_unit_vector(v: [f64; 3]) -> Self {
        let lat = v[2].clamp(-1.0, 1.0).asin().to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        // Already in range by construction.
        Self { lat, lon }
    }
}

/// A point in the image plane, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A building footprint: pixel-space vertices plus its geolocation anchor.
///
/// xBD polygons may self-intersect; that is tolerated. Only `area_px2 > 0`
/// and at least 3 vertices are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingPolygon {
    pub vertices: Vec<PixelPoint>,
    pub centroid: GeoPoint,
    pub area_px2: f64,
}

impl BuildingPolygon {
    pub fn new(vertices: Vec<PixelPoint>, centroid: GeoPoint, area_px2: f64) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if !(area_px2 > 0.0) {
            return Err(Error::DegenerateArea(format!(
                "area_px2 must be positive, got {area_px2}"
            )));
        }
        Ok(Self {
            vertices,
            centroid,
            area_px2,
        })
    }
}

/// One crop window: scale the source image by `scale_factor` in each
/// dimension, then crop `side_px`² around the scaled `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub scale_factor: f64,
    pub center: PixelPoint,
    pub side_px: u32,
}

/// Centroid and area of a pixel polygon, with a degeneracy signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolygonGeometry {
    pub centroid: PixelPoint,
    pub area_px2: f64,
    /// True when the shoelace area vanished and the centroid fell back to the
    /// vertex mean.
    pub degenerate: bool,
}

/// Great-circle distance between two points, in kilometres.
///
/// Symmetric and non-negative; at most `pi * EARTH_RADIUS_KM`.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();

    let sin_dlat = (dlat * 0.5).sin();
    let sin_dlon = (dlon * 0.5).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    // atan2 form is stable for antipodal points where h -> 1.
    let central = 2.0 * h.sqrt().atan2((1.0 - h).max(0.0).sqrt());
    EARTH_RADIUS_KM * central
}

/// Shoelace area (absolute) and area-weighted centroid of a pixel polygon.
///
/// Zero-area polygons fall back to the vertex mean and set
/// [`PolygonGeometry::degenerate`]. Fewer than 3 vertices is an error.
pub fn polygon_centroid_area(vertices: &[PixelPoint]) -> Result<PolygonGeometry> {
    if vertices.len() < 3 {
        return Err(Error::InvalidPolygon(format!(
            "need at least 3 vertices, got {}",
            vertices.len()
        )));
    }
    let n = vertices.len();
    let mut cross_sum = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cross_sum += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    let signed_area = 0.5 * cross_sum;
    let area = signed_area.abs();
    if area <= f64::EPSILON * 16.0 {
        let inv = 1.0 / n as f64;
        let mean = PixelPoint::new(
            vertices.iter().map(|p| p.x).sum::<f64>() * inv,
            vertices.iter().map(|p| p.y).sum::<f64>() * inv,
        );
        return Ok(PolygonGeometry {
            centroid: mean,
            area_px2: 0.0,
            degenerate: true,
        });
    }
    let centroid = PixelPoint::new(cx / (6.0 * signed_area), cy / (6.0 * signed_area));
    Ok(PolygonGeometry {
        centroid,
        area_px2: area,
        degenerate: false,
    })
}

/// Crop windows for a building of pixel area `area_px2`, one per multiplier.
///
/// Each window's scale factor is `m * 11 / sqrt(area_px2)`; all windows are
/// centred on `center` and are [`CROP_SIDE_PX`] pixels on a side after
/// scaling.
pub fn crop_windows(
    center: PixelPoint,
    area_px2: f64,
    multipliers: &[f64],
) -> Result<Vec<CropWindow>> {
    if !(area_px2 > 0.0) || !area_px2.is_finite() {
        return Err(Error::DegenerateArea(format!(
            "crop geometry needs a positive finite area, got {area_px2}"
        )));
    }
    let base = SCALE_NUMERATOR / area_px2.sqrt();
    multipliers
        .iter()
        .map(|&m| {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "scale multiplier must be positive, got {m}"
                )));
            }
            Ok(CropWindow {
                scale_factor: m * base,
                center,
                side_px: CROP_SIDE_PX,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn haversine_identity_is_zero() {
        assert_eq!(haversine_km(gp(0.0, 0.0), gp(0.0, 0.0)), 0.0);
    }

    #[test]
    fn haversine_one_degree_on_equator() {
        // Analytic arc: 6371 * pi / 180.
        let d = haversine_km(gp(0.0, 0.0), gp(0.0, 1.0));
        assert!((d - 111.1949).abs() < 1e-3, "got {d}");
    }

    #[test]
    fn haversine_quarter_meridian() {
        // Analytic arc: 6371 * pi / 2.
        let d = haversine_km(gp(0.0, 0.0), gp(90.0, 0.0));
        assert!((d - 10007.543).abs() < 1e-2, "got {d}");
    }

    #[test]
    fn latitude_out_of_range_is_rejected() {
        assert!(GeoPoint::new(90.5, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn longitude_normalizes_into_half_open_range() {
        assert_eq!(gp(0.0, 180.0).lon(), -180.0);
        assert_eq!(gp(0.0, -180.0).lon(), -180.0);
        assert_eq!(gp(0.0, 190.0).lon(), -170.0);
        assert_eq!(gp(0.0, 540.0).lon(), -180.0);
        assert_eq!(gp(0.0, -190.0).lon(), 170.0);
    }

    #[test]
    fn unit_square_centroid_and_area() {
        let square = vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(1.0, 0.0),
            PixelPoint::new(1.0, 1.0),
            PixelPoint::new(0.0, 1.0),
        ];
        let g = polygon_centroid_area(&square).unwrap();
        assert_eq!(g.centroid, PixelPoint::new(0.5, 0.5));
        assert_eq!(g.area_px2, 1.0);
        assert!(!g.degenerate);
    }

    #[test]
    fn triangle_centroid_and_area() {
        let tri = vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(2.0, 0.0),
            PixelPoint::new(0.0, 2.0),
        ];
        let g = polygon_centroid_area(&tri).unwrap();
        assert!((g.centroid.x - 2.0 / 3.0).abs() < 1e-12);
        assert!((g.centroid.y - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.area_px2, 2.0);
    }

    #[test]
    fn two_vertices_is_invalid() {
        let line = vec![PixelPoint::new(0.0, 0.0), PixelPoint::new(1.0, 1.0)];
        assert!(matches!(
            polygon_centroid_area(&line),
            Err(Error::InvalidPolygon(_))
        ));
    }

    #[test]
    fn collinear_polygon_falls_back_to_vertex_mean() {
        let line = vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(1.0, 1.0),
            PixelPoint::new(2.0, 2.0),
        ];
        let g = polygon_centroid_area(&line).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.centroid, PixelPoint::new(1.0, 1.0));
        assert_eq!(g.area_px2, 0.0);
    }

    #[test]
    fn scale_factors_for_area_121() {
        // 11 / sqrt(121) = 1, so factors equal the multipliers.
        let ws = crop_windows(PixelPoint::new(5.0, 5.0), 121.0, &DEFAULT_SCALE_MULTIPLIERS)
            .unwrap();
        let factors: Vec<f64> = ws.iter().map(|w| w.scale_factor).collect();
        assert_eq!(factors, vec![1.0, 4.0, 16.0, 32.0]);
        assert!(ws.iter().all(|w| w.side_px == 224));
    }

    #[test]
    fn scale_factor_for_area_484() {
        let ws = crop_windows(PixelPoint::new(0.0, 0.0), 484.0, &[1.0]).unwrap();
        assert!((ws[0].scale_factor - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_area_is_degenerate() {
        assert!(matches!(
            crop_windows(PixelPoint::new(0.0, 0.0), 0.0, &[1.0]),
            Err(Error::DegenerateArea(_))
        ));
    }

    #[test]
    fn default_scale_ratios_are_4_4_2() {
        let ws = crop_windows(PixelPoint::new(0.0, 0.0), 33.0, &DEFAULT_SCALE_MULTIPLIERS)
            .unwrap();
        let f: Vec<f64> = ws.iter().map(|w| w.scale_factor).collect();
        assert!(f.windows(2).all(|p| p[1] > p[0]));
        assert!((f[1] / f[0] - 4.0).abs() < 1e-12);
        assert!((f[2] / f[1] - 4.0).abs() < 1e-12);
        assert!((f[3] / f[2] - 2.0).abs() < 1e-12);
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0..=90.0f64, -180.0..180.0f64).prop_map(|(lat, lon)| gp(lat, lon))
    }

    proptest! {
        #[test]
        fn haversine_is_symmetric(a in arb_point(), b in arb_point()) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
        }

        #[test]
        fn haversine_is_bounded_by_half_circumference(a in arb_point(), b in arb_point()) {
            let d = haversine_km(a, b);
            prop_assert!(d >= 0.0);
            prop_assert!(d <= std::f64::consts::PI * EARTH_RADIUS_KM + 1e-9);
        }

        #[test]
        fn haversine_triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine_km(a, b);
            let bc = haversine_km(b, c);
            let ac = haversine_km(a, c);
            prop_assert!(ac <= ab + bc + 1e-6);
        }

        #[test]
        fn polygon_area_invariant_under_reversal_and_rotation(
            pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..12),
            rot in 0usize..12,
        ) {
            let verts: Vec<PixelPoint> = pts.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect();
            let base = polygon_centroid_area(&verts).unwrap();

            let reversed: Vec<PixelPoint> = verts.iter().rev().copied().collect();
            let rev = polygon_centroid_area(&reversed).unwrap();
            prop_assert!((base.area_px2 - rev.area_px2).abs() <= 1e-9 * (1.0 + base.area_px2));

            let k = rot % verts.len();
            let rotated: Vec<PixelPoint> =
                verts[k..].iter().chain(verts[..k].iter()).copied().collect();
            let rotg = polygon_centroid_area(&rotated).unwrap();
            prop_assert!((base.area_px2 - rotg.area_px2).abs() <= 1e-9 * (1.0 + base.area_px2));
        }
    }
}
