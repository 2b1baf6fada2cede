//! Direct-ray radio model: LoS test against building footprints, distance
//! path loss and a parabolic directional beam pattern.

use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Point};
use crate::scenario::{Beam, Building, Scenario, Sector, Site};
use crate::seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Free-space loss at 1 m and 1 Hz, in dB: `20·log10(4π/c)`.
const FSPL_CONSTANT_DB: f64 = -147.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossModel {
    FreeSpace,
    /// Free space for LoS links, a steeper distance exponent for NLoS.
    UmiLosNlos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub model: PathLossModel,
    /// Added to the free-space exponent of 2 on NLoS links.
    pub nlos_extra_loss_exponent: f64,
    /// dB; 0 disables shadowing.
    pub shadow_fading_sigma: f64,
    /// dBm; RSRP is clamped from below at this level.
    pub noise_floor: f64,
    pub ue_height: f64,
    /// Let rays pass over buildings lower than the ray at the crossing.
    pub height_aware_los: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            model: PathLossModel::UmiLosNlos,
            nlos_extra_loss_exponent: 1.5,
            shadow_fading_sigma: 0.0,
            noise_floor: -140.0,
            ue_height: 1.5,
            height_aware_los: false,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shadow_fading_sigma >= 0.0) {
            return Err(Error::InvalidArgument("shadow_fading_sigma must be >= 0".into()));
        }
        if !(self.nlos_extra_loss_exponent >= 0.0) {
            return Err(Error::InvalidArgument("nlos_extra_loss_exponent must be >= 0".into()));
        }
        if !(self.ue_height > 0.0) {
            return Err(Error::InvalidArgument("ue_height must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub distance_3d: f64,
    /// Direction from transmitter to UE, degrees in (-180, 180].
    pub azimuth_to_ue: f64,
    pub elevation_to_ue: f64,
    pub los: bool,
}

/// True iff the segment from `p` (height `hp`) to `q` (height `hq`) passes
/// through no building. In 2-D mode any crossing of a footprint interior
/// blocks; in height-aware mode a building blocks only if it is taller than
/// the lowest point of the ray over its footprint.
pub fn line_of_sight(
    p: &Point,
    hp: f64,
    q: &Point,
    hq: f64,
    buildings: &[Building],
    height_aware: bool,
) -> bool {
    buildings.iter().all(|b| {
        match b.footprint().segment_interior_span(p, q) {
            None => true,
            Some(_) if !height_aware => false,
            Some((t0, t1)) => {
                let h0 = hp + t0 * (hq - hp);
                let h1 = hp + t1 * (hq - hp);
                b.height <= h0.min(h1)
            }
        }
    })
}

pub fn link_geometry(site: &Site, ue: &Point, config: &PropagationConfig, buildings: &[Building]) -> LinkGeometry {
    let dx = ue.x - site.position.x;
    let dy = ue.y - site.position.y;
    let dz = config.ue_height - site.height;
    let horizontal = dx.hypot(dy);
    LinkGeometry {
        distance_3d: horizontal.hypot(dz),
        azimuth_to_ue: wrap_degrees(dy.atan2(dx).to_degrees()),
        elevation_to_ue: dz.atan2(horizontal).to_degrees(),
        los: line_of_sight(
            &site.position,
            site.height,
            ue,
            config.ue_height,
            buildings,
            config.height_aware_los,
        ),
    }
}

/// Path loss in dB. Distances below 1 m are clamped to 1 m.
pub fn path_loss(geometry: &LinkGeometry, freq_ghz: f64, config: &PropagationConfig) -> f64 {
    let d = geometry.distance_3d.max(1.0);
    let log_d = d.log10();
    let fspl = 20.0 * log_d + 20.0 * (freq_ghz * 1e9).log10() + FSPL_CONSTANT_DB;
    match config.model {
        PathLossModel::FreeSpace => fspl,
        PathLossModel::UmiLosNlos if geometry.los => fspl,
        PathLossModel::UmiLosNlos => fspl + 10.0 * config.nlos_extra_loss_exponent * log_d,
    }
}

/// Beam gain in dBi for a direction `azimuth_off`, `elevation_off` degrees
/// away from the beam axis.
pub fn antenna_gain(beam: &Beam, azimuth_off: f64, elevation_off: f64) -> f64 {
    let az = wrap_degrees(azimuth_off) / beam.azimuth_beamwidth;
    let el = elevation_off / beam.elevation_beamwidth;
    let attenuation = (12.0 * (az * az + el * el)).min(beam.front_to_back);
    beam.max_gain() - attenuation
}

/// Zero-mean log-normal shadowing term for the `(location, site)` pair.
pub fn shadowing_db(scenario_seed: u64, location: &Point, site_id: u32, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let base = seed::derive(scenario_seed, seed::stream::SHADOWING, 0);
    let s = seed::hash_words(base, &[location.x.to_bits(), location.y.to_bits(), site_id as u64]);
    let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(s));
    sigma * z
}

fn rsrp_from_parts(
    tx_power: f64,
    sector: &Sector,
    beam: &Beam,
    geometry: &LinkGeometry,
    loss: f64,
    noise_floor: f64,
) -> f64 {
    let az_off = geometry.azimuth_to_ue - (sector.boresight_azimuth + beam.steer_azimuth);
    let el_off = geometry.elevation_to_ue - beam.steer_elevation;
    (tx_power + antenna_gain(beam, az_off, el_off) - loss).max(noise_floor)
}

/// RSRP in dBm of one beam at `location`.
pub fn beam_rsrp(
    location: &Point,
    beam: &Beam,
    sector: &Sector,
    scenario: &Scenario,
    config: &PropagationConfig,
) -> Result<f64> {
    if scenario.inside_building(location) {
        return Err(Error::InsideBuilding { x: location.x, y: location.y });
    }
    let site = scenario
        .sites
        .iter()
        .find(|s| s.sectors.iter().any(|c| c.cell_id == sector.cell_id))
        .ok_or_else(|| Error::InvalidArgument(format!("cell {} not in scenario", sector.cell_id)))?;
    let geometry = link_geometry(site, location, config, &scenario.buildings);
    let loss = path_loss(&geometry, scenario.carrier_frequency_ghz, config)
        - shadowing_db(scenario.rng_seed, location, site.id, config.shadow_fading_sigma);
    Ok(rsrp_from_parts(sector.tx_power, sector, beam, &geometry, loss, config.noise_floor))
}

/// One entry of a location's RSRP fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamMeasurement {
    pub cell_id: u32,
    pub beam_id: u32,
    pub rsrp: f64,
}

/// Per-site LoS flags and every beam RSRP at `location`, computing the
/// geometry once per site. Measurements sit in scenario order (site, sector,
/// beam) and include clamped values.
pub fn location_fingerprint(
    location: &Point,
    scenario: &Scenario,
    config: &PropagationConfig,
) -> Result<(Vec<BeamMeasurement>, Vec<(u32, bool)>)> {
    if scenario.inside_building(location) {
        return Err(Error::InsideBuilding { x: location.x, y: location.y });
    }
    let mut out = Vec::with_capacity(scenario.num_beams());
    let mut los = Vec::with_capacity(scenario.num_cells());
    for site in &scenario.sites {
        let geometry = link_geometry(site, location, config, &scenario.buildings);
        let loss = path_loss(&geometry, scenario.carrier_frequency_ghz, config)
            - shadowing_db(scenario.rng_seed, location, site.id, config.shadow_fading_sigma);
        for sector in &site.sectors {
            los.push((sector.cell_id, geometry.los));
            for beam in &sector.beams {
                out.push(BeamMeasurement {
                    cell_id: sector.cell_id,
                    beam_id: beam.beam_id,
                    rsrp: rsrp_from_parts(sector.tx_power, sector, beam, &geometry, loss, config.noise_floor),
                });
            }
        }
    }
    Ok((out, los))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, BlockLayout, ScenarioConfig};

    fn beam() -> Beam {
        Beam {
            beam_id: 0,
            steer_azimuth: 0.0,
            steer_elevation: 0.0,
            azimuth_beamwidth: 65.0,
            elevation_beamwidth: 65.0,
            element_gain: 8.0,
            front_to_back: 30.0,
            array_gain: 10.0 * 32f64.log10(),
        }
    }

    fn geom(d: f64, los: bool) -> LinkGeometry {
        LinkGeometry { distance_3d: d, azimuth_to_ue: 0.0, elevation_to_ue: 0.0, los }
    }

    #[test]
    fn free_space_at_one_meter() {
        let cfg = PropagationConfig { model: PathLossModel::FreeSpace, ..Default::default() };
        // 20·log10(28e9) − 147.55 evaluated by hand: 208.9432 − 147.55
        let expected = 20.0 * 28e9f64.log10() - 147.55;
        let pl = path_loss(&geom(1.0, true), 28.0, &cfg);
        assert!((pl - expected).abs() < 1e-12);
        assert!((pl - 61.4).abs() < 0.05);
        // below 1 m clamps
        assert_eq!(path_loss(&geom(0.2, true), 28.0, &cfg), pl);
    }

    #[test]
    fn doubling_distance_adds_six_db() {
        let cfg = PropagationConfig { model: PathLossModel::FreeSpace, ..Default::default() };
        for d in [1.0, 7.5, 123.0] {
            let diff = path_loss(&geom(2.0 * d, true), 28.0, &cfg) - path_loss(&geom(d, true), 28.0, &cfg);
            assert!((diff - 20.0 * 2f64.log10()).abs() < 1e-9);
            assert!((diff - 6.02).abs() < 0.001);
        }
    }

    #[test]
    fn nlos_never_cheaper() {
        let cfg = PropagationConfig::default();
        for i in 0..200 {
            let d = 0.5 + i as f64 * 3.7;
            assert!(path_loss(&geom(d, false), 28.0, &cfg) >= path_loss(&geom(d, true), 28.0, &cfg));
        }
    }

    #[test]
    fn gain_pattern_points() {
        let b = beam();
        assert_eq!(antenna_gain(&b, 0.0, 0.0), b.max_gain());
        assert!((antenna_gain(&b, 32.5, 0.0) - (b.max_gain() - 3.0)).abs() < 1e-12);
        assert!((antenna_gain(&b, 0.0, -32.5) - (b.max_gain() - 3.0)).abs() < 1e-12);
        assert_eq!(antenna_gain(&b, 180.0, 0.0), b.max_gain() - 30.0);
        assert_eq!(antenna_gain(&b, -180.0, 0.0), b.max_gain() - 30.0);
    }

    #[test]
    fn empty_scene_is_los() {
        assert!(line_of_sight(&Point::new(0.0, 0.0), 10.0, &Point::new(50.0, 3.0), 1.5, &[], false));
    }

    #[test]
    fn building_blocks() {
        let b = Building {
            min_corner: Point::new(10.0, -5.0),
            max_corner: Point::new(20.0, 5.0),
            height: 30.0,
        };
        let p = Point::new(0.0, 0.0);
        let q = Point::new(40.0, 0.0);
        assert!(!line_of_sight(&p, 10.0, &q, 1.5, std::slice::from_ref(&b), false));
        assert!(!line_of_sight(&q, 1.5, &p, 10.0, std::slice::from_ref(&b), true));
        let low = Building { height: 5.0, ..b.clone() };
        // ray height over the footprint is between 7.9 and 6.2 m
        assert!(!line_of_sight(&p, 10.0, &q, 1.5, std::slice::from_ref(&low), false));
        assert!(line_of_sight(&p, 10.0, &q, 1.5, std::slice::from_ref(&low), true));
        let mid = Building { height: 7.0, ..b };
        assert!(!line_of_sight(&p, 10.0, &q, 1.5, std::slice::from_ref(&mid), true));
    }

    fn single_site() -> Scenario {
        build_scenario(&ScenarioConfig {
            site_rows: 1,
            site_cols: 1,
            area_margin: 100.0,
            blocks: BlockLayout { enabled: false, ..Default::default() },
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn boresight_rsrp_composition() {
        let s = single_site();
        let cfg = PropagationConfig { model: PathLossModel::FreeSpace, ..Default::default() };
        let site = &s.sites[0];
        let sector = &site.sectors[0];
        let b = &sector.beams[7];
        let az = (sector.boresight_azimuth + b.steer_azimuth).to_radians();
        let ue = Point::new(site.position.x + 40.0 * az.cos(), site.position.y + 40.0 * az.sin());
        let g = link_geometry(site, &ue, &cfg, &[]);
        let expected = 30.0 + antenna_gain(b, 0.0, g.elevation_to_ue - b.steer_elevation)
            - path_loss(&g, 28.0, &cfg);
        let got = beam_rsrp(&ue, b, sector, &s, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn rsrp_decreases_along_boresight() {
        let s = single_site();
        let cfg = PropagationConfig { model: PathLossModel::FreeSpace, ..Default::default() };
        let site = &s.sites[0];
        let sector = &site.sectors[0];
        let single = Beam { steer_azimuth: 0.0, steer_elevation: -5.0, ..sector.beams[0].clone() };
        let dir = sector.boresight_azimuth.to_radians();
        let mut last = f64::INFINITY;
        for k in 1..80 {
            let d = k as f64;
            let ue = Point::new(site.position.x + d * dir.cos(), site.position.y + d * dir.sin());
            let g = link_geometry(site, &ue, &cfg, &[]);
            let b = Beam { steer_elevation: g.elevation_to_ue, ..single.clone() };
            let r = beam_rsrp(&ue, &b, sector, &s, &cfg).unwrap();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn inside_building_is_error() {
        let b = Building {
            min_corner: Point::new(10.0, 10.0),
            max_corner: Point::new(20.0, 20.0),
            height: 30.0,
        };
        let mut s = single_site();
        s.buildings.push(b);
        let sector = &s.sites[0].sectors[0];
        let err = beam_rsrp(&Point::new(15.0, 15.0), &sector.beams[0], sector, &s, &PropagationConfig::default());
        assert!(matches!(err, Err(Error::InsideBuilding { .. })));
    }

    #[test]
    fn rsrp_clamped_at_noise_floor() {
        let s = single_site();
        let cfg = PropagationConfig { noise_floor: -20.0, ..Default::default() };
        let sector = &s.sites[0].sectors[0];
        let r = beam_rsrp(&Point::new(0.0, 0.0), &sector.beams[0], sector, &s, &cfg).unwrap();
        assert_eq!(r, -20.0);
    }

    #[test]
    fn shadowing_is_seeded_and_stable() {
        let p = Point::new(12.0, 7.0);
        assert_eq!(shadowing_db(3, &p, 1, 0.0), 0.0);
        let a = shadowing_db(3, &p, 1, 4.0);
        assert_eq!(a, shadowing_db(3, &p, 1, 4.0));
        assert_ne!(a, shadowing_db(3, &p, 2, 4.0));
        assert_ne!(a, shadowing_db(4, &p, 1, 4.0));
    }

    #[test]
    fn tx_power_offset_shifts_rsrp() {
        let mut s = single_site();
        let cfg = PropagationConfig::default();
        let ue = Point::new(130.0, 120.0);
        let before = location_fingerprint(&ue, &s, &cfg).unwrap().0;
        for sector in &mut s.sites[0].sectors {
            sector.tx_power += 4.25;
        }
        let after = location_fingerprint(&ue, &s, &cfg).unwrap().0;
        for (a, b) in before.iter().zip(&after) {
            assert!((b.rsrp - a.rsrp - 4.25).abs() < 1e-9);
        }
    }
}
