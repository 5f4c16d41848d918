//! Two-hop channel generation: BS -> surface (line-of-sight dominated) and
//! surface -> MS (Rayleigh), with distance-based path loss folded into the
//! entries.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, CMatrix, C64};

/// A point in the 2D deployment plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector pointing from `self` towards `to`.
    fn direction_to(&self, to: &Point2) -> (f64, f64) {
        let d = distance(*self, *to);
        ((to.x - self.x) / d, (to.y - self.y) / d)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub bs_pos: Point2,
    pub ms_pos: Point2,
    pub surface_pos: Point2,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs_pos: Point2::new(0.0, 0.0),
            ms_pos: Point2::new(100.0, 0.0),
            surface_pos: Point2::new(95.0, 1.0),
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let pts = [self.bs_pos, self.ms_pos, self.surface_pos];
        if !pts.iter().all(Point2::is_finite) {
            return Err(Error::invalid("geometry coordinates must be finite"));
        }
        if self.bs_pos == self.ms_pos
            || self.bs_pos == self.surface_pos
            || self.ms_pos == self.surface_pos
        {
            return Err(Error::invalid("geometry positions must be pairwise distinct"));
        }
        Ok(())
    }
}

/// Log-distance path loss with separate exponents for the two hops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossModel {
    pub ref_loss_db: f64,
    pub ref_distance: f64,
    pub exponent_hop1: f64,
    pub exponent_hop2: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            ref_loss_db: -30.0,
            ref_distance: 1.0,
            exponent_hop1: 2.0,
            exponent_hop2: 2.8,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.ref_distance > 0.0) || !self.ref_distance.is_finite() {
            return Err(Error::invalid("reference distance must be positive"));
        }
        if !(self.exponent_hop1 >= 0.0 && self.exponent_hop2 >= 0.0) {
            return Err(Error::invalid("path-loss exponents must be non-negative"));
        }
        if !self.ref_loss_db.is_finite() {
            return Err(Error::invalid("reference loss must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Hop1Kind {
    PureLos,
    Rician { kappa_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hop2Kind {
    Rayleigh,
}

/// Fading laws and array sizes. Arrays are uniform linear arrays whose axis
/// orientation is given in degrees from the x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingSpec {
    pub hop1: Hop1Kind,
    pub hop2: Hop2Kind,
    pub bs_antennas: usize,
    pub ms_antennas: usize,
    pub surface_elements: usize,
    /// Element/antenna spacing in wavelengths.
    pub element_spacing: f64,
    pub bs_axis_deg: f64,
    pub surface_axis_deg: f64,
}

impl Default for FadingSpec {
    fn default() -> Self {
        Self {
            hop1: Hop1Kind::Rician { kappa_db: 10.0 },
            hop2: Hop2Kind::Rayleigh,
            bs_antennas: 8,
            ms_antennas: 2,
            surface_elements: 100,
            element_spacing: 0.5,
            bs_axis_deg: 90.0,
            surface_axis_deg: 90.0,
        }
    }
}

impl FadingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bs_antennas == 0 || self.ms_antennas == 0 || self.surface_elements == 0 {
            return Err(Error::invalid("antenna and element counts must be at least 1"));
        }
        if !(self.element_spacing > 0.0) || !self.element_spacing.is_finite() {
            return Err(Error::invalid("element spacing must be positive"));
        }
        if let Hop1Kind::Rician { kappa_db } = self.hop1 {
            if !kappa_db.is_finite() {
                return Err(Error::invalid("Rician factor must be finite"));
            }
        }
        Ok(())
    }
}

/// BS -> surface (`h1`, N x Nt) and surface -> MS (`h2`, Nr x N) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub h1: CMatrix,
    pub h2: CMatrix,
}

impl ChannelPair {
    pub fn new(h1: CMatrix, h2: CMatrix) -> Result<Self> {
        if h1.nrows() != h2.ncols() {
            return Err(Error::invalid(format!(
                "hop dimensions disagree: h1 has {} rows, h2 has {} columns",
                h1.nrows(),
                h2.ncols()
            )));
        }
        if !all_finite(&h1) || !all_finite(&h2) {
            return Err(Error::invalid("channel entries must be finite"));
        }
        Ok(Self { h1, h2 })
    }

    pub fn n_elements(&self) -> usize {
        self.h1.nrows()
    }

    pub fn bs_antennas(&self) -> usize {
        self.h1.ncols()
    }

    pub fn ms_antennas(&self) -> usize {
        self.h2.nrows()
    }

    /// Channels seen by a device made of the given subset of elements, in order.
    pub fn restrict(&self, elements: &[usize]) -> ChannelPair {
        let h1 = self.h1.select_rows(elements);
        let h2 = self.h2.select_columns(elements);
        ChannelPair { h1, h2 }
    }

    /// Stable digest of the exact channel bits.
    pub fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for m in [&self.h1, &self.h2] {
            m.nrows().hash(&mut h);
            m.ncols().hash(&mut h);
            for z in m.iter() {
                z.re.to_bits().hash(&mut h);
                z.im.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

pub fn distance(a: Point2, b: Point2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Path gain in dB (negative for a loss) at distance `d`.
pub fn path_loss_db(d: f64, exponent: f64, model: &PathLossModel) -> Result<f64> {
    if !(d >= model.ref_distance) {
        return Err(Error::NearField {
            distance: d,
            reference: model.ref_distance,
        });
    }
    Ok(model.ref_loss_db - 10.0 * exponent * (d / model.ref_distance).log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Unit-modulus ULA response towards the unit direction `dir`.
pub fn steering_vector(n: usize, spacing: f64, axis_deg: f64, dir: (f64, f64)) -> Vec<C64> {
    let axis = axis_deg.to_radians();
    let proj = dir.0 * axis.cos() + dir.1 * axis.sin();
    (0..n)
        .map(|m| C64::from_polar(1.0, 2.0 * PI * spacing * m as f64 * proj))
        .collect()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// BS -> surface channel, N x Nt.
pub fn gen_hop1<R: Rng + ?Sized>(
    spec: &FadingSpec,
    geom: &Geometry,
    pl: &PathLossModel,
    rng: &mut R,
) -> Result<CMatrix> {
    spec.validate()?;
    geom.validate()?;
    pl.validate()?;
    let d = distance(geom.bs_pos, geom.surface_pos);
    let amp = db_to_linear(path_loss_db(d, pl.exponent_hop1, pl)?).sqrt();
    let a_surf = steering_vector(
        spec.surface_elements,
        spec.element_spacing,
        spec.surface_axis_deg,
        geom.surface_pos.direction_to(&geom.bs_pos),
    );
    let a_bs = steering_vector(
        spec.bs_antennas,
        spec.element_spacing,
        spec.bs_axis_deg,
        geom.bs_pos.direction_to(&geom.surface_pos),
    );
    let (w_los, w_nlos) = match spec.hop1 {
        Hop1Kind::PureLos => (1.0, 0.0),
        Hop1Kind::Rician { kappa_db } => {
            let k = db_to_linear(kappa_db);
            ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
        }
    };
    let (n, nt) = (spec.surface_elements, spec.bs_antennas);
    let mut h = CMatrix::zeros(n, nt);
    for i in 0..n {
        for j in 0..nt {
            let los = a_surf[i] * a_bs[j].conj();
            let entry = if w_nlos > 0.0 {
                los * w_los + complex_gaussian(rng) * w_nlos
            } else {
                los
            };
            h[(i, j)] = entry * amp;
        }
    }
    Ok(h)
}

/// Surface -> MS channel, Nr x N.
pub fn gen_hop2<R: Rng + ?Sized>(
    spec: &FadingSpec,
    geom: &Geometry,
    pl: &PathLossModel,
    rng: &mut R,
) -> Result<CMatrix> {
    spec.validate()?;
    geom.validate()?;
    pl.validate()?;
    let d = distance(geom.surface_pos, geom.ms_pos);
    let amp = db_to_linear(path_loss_db(d, pl.exponent_hop2, pl)?).sqrt();
    let (nr, n) = (spec.ms_antennas, spec.surface_elements);
    let mut h = CMatrix::zeros(nr, n);
    match spec.hop2 {
        Hop2Kind::Rayleigh => {
            for i in 0..nr {
                for j in 0..n {
                    h[(i, j)] = complex_gaussian(rng) * amp;
                }
            }
        }
    }
    Ok(h)
}

/// Draws hop 1 then hop 2 from the same stream.
pub fn generate_channels<R: Rng + ?Sized>(
    spec: &FadingSpec,
    geom: &Geometry,
    pl: &PathLossModel,
    rng: &mut R,
) -> Result<ChannelPair> {
    let h1 = gen_hop1(spec, geom, pl, rng)?;
    let h2 = gen_hop2(spec, geom, pl, rng)?;
    ChannelPair::new(h1, h2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_examples() {
        assert_eq!(distance(Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)), 100.0);
        assert_eq!(distance(Point2::new(95.0, 1.0), Point2::new(95.0, 1.0)), 0.0);
        let d = distance(Point2::new(0.0, 0.0), Point2::new(95.0, 1.0));
        assert!((d - 95.00526).abs() < 1e-5);
    }

    #[test]
    fn path_loss_examples() {
        let pl = PathLossModel::default();
        assert_eq!(path_loss_db(1.0, 2.8, &pl).unwrap(), -30.0);
        assert!((path_loss_db(100.0, 2.0, &pl).unwrap() + 70.0).abs() < 1e-12);
        let d = 26f64.sqrt();
        assert!((path_loss_db(d, 2.8, &pl).unwrap() + 49.81).abs() < 5e-3);
        assert!(matches!(path_loss_db(0.5, 2.0, &pl), Err(Error::NearField { .. })));
    }

    #[test]
    fn single_element_los_has_path_loss_magnitude() {
        let spec = FadingSpec {
            hop1: Hop1Kind::PureLos,
            bs_antennas: 1,
            surface_elements: 1,
            ..FadingSpec::default()
        };
        let geom = Geometry::default();
        let pl = PathLossModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = gen_hop1(&spec, &geom, &pl, &mut rng).unwrap();
        let d = distance(geom.bs_pos, geom.surface_pos);
        let expect = db_to_linear(path_loss_db(d, 2.0, &pl).unwrap()).sqrt();
        assert!((h[(0, 0)].norm() - expect).abs() < 1e-15);
    }

    #[test]
    fn pure_los_is_rank_one() {
        let spec = FadingSpec {
            hop1: Hop1Kind::PureLos,
            ..FadingSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = gen_hop1(&spec, &Geometry::default(), &PathLossModel::default(), &mut rng).unwrap();
        let sv = h.singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[1] < 1e-10 * s[0]);
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = FadingSpec::default();
        let geom = Geometry::default();
        let pl = PathLossModel::default();
        let a = generate_channels(&spec, &geom, &pl, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_channels(&spec, &geom, &pl, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert!(a.h1.iter().zip(b.h1.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits()));
    }

    #[test]
    fn reference_loss_scales_power_exactly() {
        let spec = FadingSpec::default();
        let geom = Geometry::default();
        let pl = PathLossModel::default();
        let pl_up = PathLossModel {
            ref_loss_db: pl.ref_loss_db + 7.0,
            ..pl
        };
        let a = generate_channels(&spec, &geom, &pl, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_channels(&spec, &geom, &pl_up, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let factor = db_to_linear(7.0);
        for (x, y) in a.h1.iter().chain(a.h2.iter()).zip(b.h1.iter().chain(b.h2.iter())) {
            let ratio = y.norm_sqr() / x.norm_sqr();
            assert!((ratio / factor - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geometry_rejects_coincident_points() {
        let g = Geometry {
            surface_pos: Point2::new(0.0, 0.0),
            ..Geometry::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn restrict_selects_elements() {
        let spec = FadingSpec {
            surface_elements: 6,
            ..FadingSpec::default()
        };
        let ch = generate_channels(
            &spec,
            &Geometry::default(),
            &PathLossModel::default(),
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let sub = ch.restrict(&[1, 4]);
        assert_eq!(sub.n_elements(), 2);
        assert_eq!(sub.h1.row(1), ch.h1.row(4));
        assert_eq!(sub.h2.column(0), ch.h2.column(1));
    }

    proptest! {
        #[test]
        fn path_loss_strictly_decreasing(d in 1.0f64..1e4, step in 1e-3f64..100.0, exp in 0.1f64..5.0) {
            let pl = PathLossModel::default();
            let a = path_loss_db(d, exp, &pl).unwrap();
            let b = path_loss_db(d + step, exp, &pl).unwrap();
            prop_assert!(b < a);
        }
    }
}
