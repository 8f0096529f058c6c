use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Metres per degree of latitude on the spherical Earth.
pub const METERS_PER_DEG: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Shift by a local east/north displacement in metres.
    pub fn offset(&self, east_m: f64, north_m: f64) -> LatLon {
        let dlat = north_m / METERS_PER_DEG;
        let dlon = east_m / (METERS_PER_DEG * self.lat.to_radians().cos());
        LatLon::new(self.lat + dlat, self.lon + dlon)
    }

    pub fn to_unit(&self) -> UnitVec {
        let (slat, clat) = self.lat.to_radians().sin_cos();
        let (slon, clon) = self.lon.to_radians().sin_cos();
        UnitVec([clat * clon, clat * slon, slat])
    }
}

/// Great-circle distance in metres.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Point on the unit sphere. Chord length is monotone in great-circle distance, so
/// radius tests can compare squared chords without trigonometry per pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec(pub [f64; 3]);

impl UnitVec {
    pub fn chord2(&self, other: &UnitVec) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        dx * dx + dy * dy + dz * dz
    }

    /// Great-circle distance in metres.
    pub fn distance(&self, other: &UnitVec) -> f64 {
        chord2_to_meters(self.chord2(other))
    }
}

/// Squared chord of the unit sphere corresponding to a great-circle distance.
pub fn meters_to_chord2(meters: f64) -> f64 {
    let half_angle = (meters / EARTH_RADIUS_M / 2.0).min(std::f64::consts::FRAC_PI_2);
    let c = 2.0 * half_angle.sin();
    c * c
}

pub fn chord2_to_meters(chord2: f64) -> f64 {
    2.0 * EARTH_RADIUS_M * (chord2.sqrt() / 2.0).min(1.0).asin()
}

/// Flat metres-to-degrees conversion fixed at one reference latitude, used to apply
/// isotropic metre-scale noise uniformly across a metro region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    m_per_deg_lat: f64,
    m_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn at_latitude(lat: f64) -> Self {
        LocalFrame {
            m_per_deg_lat: METERS_PER_DEG,
            m_per_deg_lon: METERS_PER_DEG * lat.to_radians().cos(),
        }
    }

    pub fn offset(&self, p: LatLon, east_m: f64, north_m: f64) -> LatLon {
        LatLon::new(p.lat + north_m / self.m_per_deg_lat, p.lon + east_m / self.m_per_deg_lon)
    }

    /// East/north displacement in metres from `origin` to `p`.
    pub fn delta(&self, origin: LatLon, p: LatLon) -> (f64, f64) {
        ((p.lon - origin.lon) * self.m_per_deg_lon, (p.lat - origin.lat) * self.m_per_deg_lat)
    }
}

/// Arithmetic mean of coordinates; adequate at metro scale away from the antimeridian.
pub fn mean_location<'a>(points: impl IntoIterator<Item = &'a LatLon>) -> Option<LatLon> {
    let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        lat += p.lat;
        lon += p.lon;
        n += 1;
    }
    (n > 0).then(|| LatLon::new(lat / n as f64, lon / n as f64))
}
