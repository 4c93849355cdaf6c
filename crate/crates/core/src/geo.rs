//! Geodesic helpers shared by the road network, simulator and metrics.

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `(lat, lon)` points given in degrees.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Local equirectangular frame anchored at an origin. East/north offsets in meters.
///
/// Used for square windows and synthetic grids, where a few kilometers of
/// extent keep the projection error far below the lattice spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub lat0: f64,
    pub lon0: f64,
    cos_lat0: f64,
}

impl LocalFrame {
    pub fn new(lat0: f64, lon0: f64) -> Self {
        Self {
            lat0,
            lon0,
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    /// `(east_m, north_m)` of a point relative to the origin.
    pub fn to_local(&self, lat: f64, lon: f64) -> (f64, f64) {
        let east = (lon - self.lon0).to_radians() * EARTH_RADIUS_M * self.cos_lat0;
        let north = (lat - self.lat0).to_radians() * EARTH_RADIUS_M;
        (east, north)
    }

    /// `(lat, lon)` of a local offset.
    pub fn to_geo(&self, east_m: f64, north_m: f64) -> (f64, f64) {
        let lat = self.lat0 + (north_m / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon0 + (east_m / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        (lat, lon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_of_latitude() {
        let d = haversine_m(0.0, 0.0, 1.0, 0.0);
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((d - expected).abs() < 1e-6);
    }

    #[test]
    fn symmetric_and_zero_on_identity() {
        let a = (-33.8688, 151.2093);
        let b = (-33.8700, 151.2200);
        assert_eq!(haversine_m(a.0, a.1, a.0, a.1), 0.0);
        let ab = haversine_m(a.0, a.1, b.0, b.1);
        let ba = haversine_m(b.0, b.1, a.0, a.1);
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn local_frame_round_trip() {
        let f = LocalFrame::new(-33.87, 151.21);
        let (lat, lon) = f.to_geo(1234.5, -987.0);
        let (e, n) = f.to_local(lat, lon);
        assert!((e - 1234.5).abs() < 1e-6);
        assert!((n + 987.0).abs() < 1e-6);
    }

    #[test]
    fn local_offsets_agree_with_haversine_at_km_scale() {
        let f = LocalFrame::new(-33.87, 151.21);
        let (lat, lon) = f.to_geo(300.0, 0.0);
        let d = haversine_m(f.lat0, f.lon0, lat, lon);
        assert!((d - 300.0).abs() < 0.01, "{d}");
    }
}
