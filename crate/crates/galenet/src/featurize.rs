//! Fixed-length feature vectors from hurricane tracks and weather series.
//!
//! A track becomes the triple (closest-approach distance, wind, pressure);
//! a weather series becomes the per-feature mean over its time points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint};
use crate::par;

/// Distance ties within this many kilometres resolve to max wind/pressure.
pub const TIE_TOLERANCE_KM: f64 = 1e-6;

/// Sentinel step that disables segment densification: only the raw track
/// fixes are considered.
pub const DISCRETE_STEP_KM: f64 = f64::INFINITY;

/// Default spacing of interpolated track samples, in kilometres.
pub const DEFAULT_STEP_KM: f64 = 1.0;

/// Per-segment subdivision cap; keeps pathological step sizes bounded.
const MAX_SUBDIVISIONS: u64 = 1 << 22;

/// One track fix: position, time, wind speed and central pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub position: GeoPoint,
    /// UTC seconds.
    pub timestamp: i64,
    /// Wind speed in knots, non-negative.
    pub wind_kt: f64,
    /// Central pressure in millibars, positive.
    pub pressure_mb: f64,
}

impl TrackPoint {
    pub fn new(position: GeoPoint, timestamp: i64, wind_kt: f64, pressure_mb: f64) -> Result<Self> {
        if !wind_kt.is_finite() || wind_kt < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "wind speed must be finite and non-negative, got {wind_kt}"
            )));
        }
        if !pressure_mb.is_finite() || pressure_mb <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pressure must be finite and positive, got {pressure_mb}"
            )));
        }
        Ok(Self {
            position,
            timestamp,
            wind_kt,
            pressure_mb,
        })
    }
}

/// An ordered, non-empty hurricane track with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurricaneTrack {
    pub name: String,
    points: Vec<TrackPoint>,
}

impl HurricaneTrack {
    pub fn new(name: impl Into<String>, points: Vec<TrackPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyTrack);
        }
        for w in points.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::InvalidParameter(format!(
                    "track timestamps must be strictly increasing ({} then {})",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            points,
        })
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }
}

/// The trajectory embedding: distance to the track plus the wind and
/// pressure read at the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeatures {
    pub distance_km: f64,
    pub wind_kt: f64,
    pub pressure_mb: f64,
}

impl TrajectoryFeatures {
    pub fn to_array(self) -> [f64; 3] {
        [self.distance_km, self.wind_kt, self.pressure_mb]
    }

    pub const DIM: usize = 3;
}

/// A raw weather time series: `rows` time points by `cols` features,
/// row-major, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSeries(format!(
                "series must have at least one row and one feature, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidSeries(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

/// The weather embedding: one mean per feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherFeatures(pub Vec<f64>);

impl WeatherFeatures {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Great-circle interpolation between two unit vectors.
///
/// The symmetric form `(sin((1-t)w)u + sin(tw)v) / sin(w)` makes the sample
/// set identical when the segment endpoints are swapped with `t -> 1-t`.
fn slerp(u: [f64; 3], v: [f64; 3], t: f64) -> [f64; 3] {
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-12 {
        return u;
    }
    let s = omega.sin();
    let a = ((1.0 - t) * omega).sin() / s;
    let b = (t * omega).sin() / s;
    [
        a * u[0] + b * v[0],
        a * u[1] + b * v[1],
        a * u[2] + b * v[2],
    ]
}

/// Number of subdivisions for a segment of length `seg_km` at spacing
/// `step_km`. Always a power of two, so halving the step only refines the
/// existing sample set (dyadic nesting keeps the returned distance monotone
/// under refinement).
fn subdivisions(seg_km: f64, step_km: f64) -> u64 {
    if !step_km.is_finite() || seg_km == 0.0 {
        return 1;
    }
    let raw = (seg_km / step_km).ceil().max(1.0);
    let raw = if raw >= MAX_SUBDIVISIONS as f64 {
        MAX_SUBDIVISIONS
    } else {
        raw as u64
    };
    raw.next_power_of_two().min(MAX_SUBDIVISIONS)
}

/// Visits every candidate (distance, wind, pressure) along the densified
/// track. Interior fixes are visited twice (segment end and next start);
/// min/max folds are unaffected.
fn for_each_candidate<F: FnMut(f64, f64, f64)>(
    track: &HurricaneTrack,
    building: GeoPoint,
    step_km: f64,
    mut visit: F,
) {
    let pts = track.points();
    if pts.len() == 1 {
        let p = &pts[0];
        visit(
            haversine_km(building, p.position),
            p.wind_kt,
            p.pressure_mb,
        );
        return;
    }
    for w in pts.windows(2) {
        let (p0, p1) = (&w[0], &w[1]);
        let seg = haversine_km(p0.position, p1.position);
        let n = subdivisions(seg, step_km);
        let u = p0.position.to_unit_vector();
        let v = p1.position.to_unit_vector();
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let pos = if k == 0 {
                p0.position
            } else if k == n {
                p1.position
            } else {
                GeoPoint::from_unit_vector(slerp(u, v, t))
            };
            let wind = (1.0 - t) * p0.wind_kt + t * p1.wind_kt;
            let pressure = (1.0 - t) * p0.pressure_mb + t * p1.pressure_mb;
            visit(haversine_km(building, pos), wind, pressure);
        }
    }
}

/// Closest approach of `track` to `building`.
///
/// Each segment is densified by great-circle interpolation at roughly
/// `step_km` spacing, with wind and pressure interpolated linearly along the
/// segment. Among candidates tied within [`TIE_TOLERANCE_KM`] of the minimum
/// distance, the maximum wind and maximum pressure are returned. Pass
/// [`DISCRETE_STEP_KM`] to restrict candidates to the raw fixes.
pub fn closest_approach(
    track: &HurricaneTrack,
    building: GeoPoint,
    step_km: f64,
) -> Result<TrajectoryFeatures> {
    if !(step_km > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step_km must be positive, got {step_km}"
        )));
    }
    // Two passes keep the result independent of visit order: first the exact
    // minimum, then an order-free max fold over the tied candidates.
    let mut min_d = f64::INFINITY;
    for_each_candidate(track, building, step_km, |d, _, _| {
        min_d = min_d.min(d);
    });
    let mut wind = f64::NEG_INFINITY;
    let mut pressure = f64::NEG_INFINITY;
    for_each_candidate(track, building, step_km, |d, w, p| {
        if d <= min_d + TIE_TOLERANCE_KM {
            wind = wind.max(w);
            pressure = pressure.max(p);
        }
    });
    Ok(TrajectoryFeatures {
        distance_km: min_d,
        wind_kt: wind,
        pressure_mb: pressure,
    })
}

/// [`closest_approach`] for many buildings against one track; parallel with
/// the `parallel` feature, order-preserving either way.
pub fn closest_approach_batch(
    track: &HurricaneTrack,
    buildings: &[GeoPoint],
    step_km: f64,
) -> Result<Vec<TrajectoryFeatures>> {
    if !(step_km > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step_km must be positive, got {step_km}"
        )));
    }
    Ok(par::map_slice(buildings, |b| {
        closest_approach(track, *b, step_km).expect("validated step")
    }))
}

/// Column means of a weather series: element `j` of the output is the
/// arithmetic mean of feature `j` over all time points.
pub fn featurize_weather(series: &WeatherSeries) -> WeatherFeatures {
    let mut sums = vec![0.0f64; series.cols()];
    for r in 0..series.rows() {
        for (s, v) in sums.iter_mut().zip(series.row(r)) {
            *s += v;
        }
    }
    let inv = 1.0 / series.rows() as f64;
    WeatherFeatures(sums.into_iter().map(|s| s * inv).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn tp(lat: f64, lon: f64, ts: i64, wind: f64, pressure: f64) -> TrackPoint {
        TrackPoint::new(gp(lat, lon), ts, wind, pressure).unwrap()
    }

    #[test]
    fn single_point_track_returns_that_point() {
        let track = HurricaneTrack::new("t", vec![tp(10.0, 20.0, 0, 100.0, 950.0)]).unwrap();
        let b = gp(10.0, 21.0);
        let f = closest_approach(&track, b, 1.0).unwrap();
        let d = haversine_km(b, gp(10.0, 20.0));
        assert_eq!(f.distance_km, d);
        assert_eq!(f.wind_kt, 100.0);
        assert_eq!(f.pressure_mb, 950.0);
    }

    #[test]
    fn tie_takes_max_wind_and_max_pressure() {
        // Building on the equator, two fixes mirrored north/south: equidistant.
        let track = HurricaneTrack::new(
            "t",
            vec![tp(1.0, 0.0, 0, 100.0, 960.0), tp(-1.0, 0.0, 3600, 120.0, 950.0)],
        )
        .unwrap();
        let f = closest_approach(&track, gp(0.0, 0.0), DISCRETE_STEP_KM).unwrap();
        assert_eq!(f.wind_kt, 120.0);
        assert_eq!(f.pressure_mb, 960.0);
    }

    #[test]
    fn building_on_a_fix_gives_zero_distance() {
        let track = HurricaneTrack::new(
            "t",
            vec![tp(5.0, 5.0, 0, 80.0, 990.0), tp(6.0, 6.0, 3600, 90.0, 980.0)],
        )
        .unwrap();
        let f = closest_approach(&track, gp(5.0, 5.0), 1.0).unwrap();
        assert_eq!(f.distance_km, 0.0);
        assert_eq!(f.wind_kt, 80.0);
        assert_eq!(f.pressure_mb, 990.0);
    }

    #[test]
    fn empty_track_is_rejected() {
        assert!(matches!(
            HurricaneTrack::new("t", vec![]),
            Err(Error::EmptyTrack)
        ));
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let pts = vec![tp(0.0, 0.0, 100, 50.0, 1000.0), tp(0.0, 1.0, 100, 50.0, 1000.0)];
        assert!(HurricaneTrack::new("t", pts).is_err());
    }

    #[test]
    fn densified_distance_beats_raw_fixes() {
        // Building near the midpoint of a long segment: interpolation must
        // find a closer point than either endpoint.
        let track = HurricaneTrack::new(
            "t",
            vec![tp(0.0, -5.0, 0, 60.0, 1000.0), tp(0.0, 5.0, 3600, 80.0, 990.0)],
        )
        .unwrap();
        let b = gp(0.5, 0.0);
        let raw = closest_approach(&track, b, DISCRETE_STEP_KM).unwrap();
        let dense = closest_approach(&track, b, 1.0).unwrap();
        assert!(dense.distance_km < raw.distance_km);
        // Roughly 0.5 degrees of latitude off the equator path.
        assert!((dense.distance_km - 55.6).abs() < 1.0, "{}", dense.distance_km);
    }

    #[test]
    fn constant_series_averages_to_itself() {
        let series = WeatherSeries::new(4, 3, vec![2.5, -1.0, 7.0].repeat(4)).unwrap();
        assert_eq!(featurize_weather(&series).0, vec![2.5, -1.0, 7.0]);
    }

    #[test]
    fn arithmetic_sequence_means_to_midpoint() {
        let vals: Vec<f64> = (0..56).map(|i| i as f64).collect();
        let series = WeatherSeries::new(56, 1, vals).unwrap();
        assert_eq!(featurize_weather(&series).0, vec![27.5]);
    }

    #[test]
    fn single_row_passes_through() {
        let series = WeatherSeries::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(featurize_weather(&series).0, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn non_finite_series_is_invalid() {
        assert!(matches!(
            WeatherSeries::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::InvalidSeries(_))
        ));
    }

    fn arb_track(max_pts: usize) -> impl Strategy<Value = HurricaneTrack> {
        prop::collection::vec(
            (-60.0..60.0f64, -120.0..120.0f64, 0.0..160.0f64, 900.0..1020.0f64),
            1..max_pts,
        )
        .prop_map(|pts| {
            let points = pts
                .into_iter()
                .enumerate()
                .map(|(i, (lat, lon, w, p))| tp(lat, lon, i as i64 * 3600, w, p))
                .collect();
            HurricaneTrack::new("prop", points).unwrap()
        })
    }

    proptest! {
        #[test]
        fn densified_distance_never_exceeds_raw_minimum(
            track in arb_track(8),
            lat in -60.0..60.0f64,
            lon in -120.0..120.0f64,
        ) {
            let b = gp(lat, lon);
            let dense = closest_approach(&track, b, 5.0).unwrap();
            let raw_min = track
                .points()
                .iter()
                .map(|p| haversine_km(b, p.position))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(dense.distance_km <= raw_min + 1e-12);
        }

        #[test]
        fn reversal_leaves_output_unchanged(
            track in arb_track(8),
            lat in -60.0..60.0f64,
            lon in -120.0..120.0f64,
        ) {
            let b = gp(lat, lon);
            let fwd = closest_approach(&track, b, 10.0).unwrap();
            let rev_points: Vec<TrackPoint> = track
                .points()
                .iter()
                .rev()
                .enumerate()
                .map(|(i, p)| TrackPoint { timestamp: i as i64 * 3600, ..*p })
                .collect();
            let rev_track = HurricaneTrack::new("rev", rev_points).unwrap();
            let rev = closest_approach(&rev_track, b, 10.0).unwrap();
            prop_assert_eq!(fwd, rev);
        }

        #[test]
        fn refinement_is_monotone(
            track in arb_track(6),
            lat in -60.0..60.0f64,
            lon in -120.0..120.0f64,
        ) {
            let b = gp(lat, lon);
            let coarse = closest_approach(&track, b, 64.0).unwrap();
            let mid = closest_approach(&track, b, 8.0).unwrap();
            let fine = closest_approach(&track, b, 1.0).unwrap();
            prop_assert!(mid.distance_km <= coarse.distance_km);
            prop_assert!(fine.distance_km <= mid.distance_km);
        }

        #[test]
        fn weather_mean_is_row_permutation_invariant_and_linear(
            rows in prop::collection::vec(
                prop::collection::vec(-100.0..100.0f64, 3),
                1..12,
            ),
            alpha in -3.0..3.0f64,
            beta in -3.0..3.0f64,
        ) {
            let t = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let series = WeatherSeries::new(t, 3, flat.clone()).unwrap();
            let base = featurize_weather(&series);

            let mut shuffled = rows.clone();
            shuffled.rotate_left(t / 2);
            let series_sh =
                WeatherSeries::new(t, 3, shuffled.into_iter().flatten().collect()).unwrap();
            let sh = featurize_weather(&series_sh);
            for (a, b) in base.0.iter().zip(&sh.0) {
                prop_assert!((a - b).abs() < 1e-9);
            }

            // Linearity: featurize(alpha X + beta X) = (alpha + beta) featurize(X).
            let combo: Vec<f64> = flat.iter().map(|v| alpha * v + beta * v).collect();
            let series_c = WeatherSeries::new(t, 3, combo).unwrap();
            let c = featurize_weather(&series_c);
            for (cv, bv) in c.0.iter().zip(&base.0) {
                prop_assert!((cv - (alpha + beta) * bv).abs() < 1e-9);
            }
        }
    }
}
