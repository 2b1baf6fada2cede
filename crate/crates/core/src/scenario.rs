//! Synthetic urban deployment: city blocks, sites at street intersections,
//! three sectors per site and a grid of SSB beams per sector.
//!
//! Sites sit on a `site_rows × site_cols` lattice of street intersections.
//! Streets of `street_width` run through every site row and column, and the
//! remaining land is filled with rectangular city blocks, optionally split
//! into several buildings separated by alleys. Building heights are drawn
//! from the scenario seed; nothing else is random.
//!
//! Angles follow the mathematical convention: azimuth in degrees
//! counter-clockwise from the +x axis, elevation positive above the horizon.

use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Point, Rect};
use crate::seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SECTORS_PER_SITE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min_corner: Point,
    pub max_corner: Point,
    pub height: f64,
}

impl Building {
    pub fn footprint(&self) -> Rect {
        Rect::new(self.min_corner, self.max_corner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub beam_id: u32,
    /// Relative to the sector boresight.
    pub steer_azimuth: f64,
    /// Absolute elevation of the beam axis (negative points below the horizon).
    pub steer_elevation: f64,
    pub azimuth_beamwidth: f64,
    pub elevation_beamwidth: f64,
    pub element_gain: f64,
    pub front_to_back: f64,
    pub array_gain: f64,
}

impl Beam {
    /// Peak gain in dBi.
    pub fn max_gain(&self) -> f64 {
        self.element_gain + self.array_gain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub cell_id: u32,
    pub boresight_azimuth: f64,
    pub mechanical_downtilt: f64,
    /// dBm
    pub tx_power: f64,
    pub beams: Vec<Beam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: u32,
    pub position: Point,
    pub height: f64,
    pub sectors: Vec<Sector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub buildings: Vec<Building>,
    pub sites: Vec<Site>,
    pub carrier_frequency_ghz: f64,
    pub area: Rect,
    pub grid_resolution: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamGridConfig {
    /// SSB beams per sector.
    pub count: usize,
    /// One row of azimuth steers per entry; absolute elevation in degrees.
    pub elevation_steers: Vec<f64>,
    /// Total azimuth span tiled by each row, centered on boresight.
    pub azimuth_span: f64,
    pub azimuth_beamwidth: f64,
    pub elevation_beamwidth: f64,
    pub element_gain: f64,
    pub front_to_back: f64,
    /// Defaults to `10·log10(count)` when absent.
    pub array_gain: Option<f64>,
}

impl Default for BeamGridConfig {
    fn default() -> Self {
        BeamGridConfig {
            count: 32,
            elevation_steers: vec![-3.0, -12.0],
            azimuth_span: 120.0,
            azimuth_beamwidth: 65.0,
            elevation_beamwidth: 65.0,
            element_gain: 8.0,
            front_to_back: 30.0,
            array_gain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockLayout {
    pub enabled: bool,
    pub street_width: f64,
    pub buildings_per_block_x: usize,
    pub buildings_per_block_y: usize,
    pub alley_width: f64,
    pub min_height: f64,
    pub max_height: f64,
}

impl Default for BlockLayout {
    fn default() -> Self {
        BlockLayout {
            enabled: true,
            street_width: 20.0,
            buildings_per_block_x: 2,
            buildings_per_block_y: 1,
            alley_width: 8.0,
            min_height: 15.0,
            max_height: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub site_rows: usize,
    pub site_cols: usize,
    pub site_spacing_x: f64,
    pub site_spacing_y: f64,
    /// Open land between the outermost sites and the area boundary.
    pub area_margin: f64,
    pub site_height: f64,
    /// Boresight of the first sector; the others follow at +120° steps.
    pub sector_azimuth_offset: f64,
    pub mechanical_downtilt: f64,
    pub tx_power_dbm: f64,
    pub carrier_frequency_ghz: f64,
    pub grid_resolution: f64,
    pub beams: BeamGridConfig,
    pub blocks: BlockLayout,
    pub extra_buildings: Vec<Building>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            site_rows: 2,
            site_cols: 4,
            site_spacing_x: 200.0,
            site_spacing_y: 110.0,
            area_margin: 40.0,
            site_height: 10.0,
            sector_azimuth_offset: 30.0,
            mechanical_downtilt: 5.0,
            tx_power_dbm: 30.0,
            carrier_frequency_ghz: 28.0,
            grid_resolution: 1.0,
            beams: BeamGridConfig::default(),
            blocks: BlockLayout::default(),
            extra_buildings: Vec::new(),
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn sectors(&self) -> impl Iterator<Item = (&Site, &Sector)> {
        self.sites
            .iter()
            .flat_map(|site| site.sectors.iter().map(move |sector| (site, sector)))
    }

    pub fn num_cells(&self) -> usize {
        self.sites.iter().map(|s| s.sectors.len()).sum()
    }

    pub fn num_beams(&self) -> usize {
        self.sectors().map(|(_, s)| s.beams.len()).sum()
    }

    pub fn max_beams_per_cell(&self) -> usize {
        self.sectors().map(|(_, s)| s.beams.len()).max().unwrap_or(0)
    }

    pub fn max_cell_id(&self) -> u32 {
        self.sectors().map(|(_, s)| s.cell_id).max().unwrap_or(0)
    }

    pub fn sector(&self, cell_id: u32) -> Option<(&Site, &Sector)> {
        self.sectors().find(|(_, s)| s.cell_id == cell_id)
    }

    pub fn inside_building(&self, p: &Point) -> bool {
        self.buildings.iter().any(|b| b.footprint().contains(p))
    }

    /// Check every structural invariant; `build_scenario` always returns a
    /// validated scenario, hand-assembled ones should call this.
    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::Scenario("scenario has no sites".into()));
        }
        if !(self.grid_resolution > 0.0) {
            return Err(Error::Scenario("grid_resolution must be positive".into()));
        }
        if !self.area.is_proper() {
            return Err(Error::Scenario("area must have positive extent".into()));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if !b.footprint().is_proper() || !(b.height > 0.0) {
                return Err(Error::Scenario(format!("building {i} is degenerate")));
            }
            for (j, other) in self.buildings.iter().enumerate().skip(i + 1) {
                if b.footprint().overlaps(&other.footprint()) {
                    return Err(Error::Scenario(format!("buildings {i} and {j} overlap")));
                }
            }
        }
        let mut cell_ids = Vec::new();
        for site in &self.sites {
            if !self.area.contains(&site.position) {
                return Err(Error::Scenario(format!("site {} is outside the area", site.id)));
            }
            if self.inside_building(&site.position) {
                return Err(Error::Scenario(format!("site {} is inside a building", site.id)));
            }
            if !(site.height > 0.0) {
                return Err(Error::Scenario(format!("site {} has non-positive height", site.id)));
            }
            if site.sectors.len() != SECTORS_PER_SITE {
                return Err(Error::Scenario(format!(
                    "site {} has {} sectors, expected {SECTORS_PER_SITE}",
                    site.id,
                    site.sectors.len()
                )));
            }
            for sector in &site.sectors {
                cell_ids.push(sector.cell_id);
                let mut ids: Vec<u32> = sector.beams.iter().map(|b| b.beam_id).collect();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() != sector.beams.len() {
                    return Err(Error::Scenario(format!(
                        "cell {} has duplicate beam ids",
                        sector.cell_id
                    )));
                }
                for beam in &sector.beams {
                    for bw in [beam.azimuth_beamwidth, beam.elevation_beamwidth] {
                        if !(bw > 0.0 && bw < 180.0) {
                            return Err(Error::Scenario(format!(
                                "cell {} beam {} beamwidth {bw} outside (0, 180)",
                                sector.cell_id, beam.beam_id
                            )));
                        }
                    }
                }
            }
        }
        let n = cell_ids.len();
        cell_ids.sort_unstable();
        cell_ids.dedup();
        if cell_ids.len() != n {
            return Err(Error::Scenario("cell ids are not unique".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Build the deployment described by `config`. Pure function of the config
/// (including its seed).
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    if config.site_rows == 0 || config.site_cols == 0 {
        return Err(Error::Scenario("zero sites requested".into()));
    }
    if !(config.grid_resolution > 0.0) {
        return Err(Error::Scenario("grid_resolution must be positive".into()));
    }
    if config.area_margin < 0.0 {
        return Err(Error::Scenario("area_margin must be non-negative".into()));
    }
    let m = config.area_margin;
    let xs: Vec<f64> = (0..config.site_cols)
        .map(|c| m + c as f64 * config.site_spacing_x)
        .collect();
    let ys: Vec<f64> = (0..config.site_rows)
        .map(|r| m + r as f64 * config.site_spacing_y)
        .collect();
    let area = Rect::from_bounds(0.0, 0.0, xs[xs.len() - 1] + m, ys[ys.len() - 1] + m);

    let mut sites = Vec::with_capacity(xs.len() * ys.len());
    let mut next_cell = 1u32;
    for &y in &ys {
        for &x in &xs {
            let id = sites.len() as u32 + 1;
            let mut sectors = Vec::with_capacity(SECTORS_PER_SITE);
            for k in 0..SECTORS_PER_SITE {
                let mut sector = Sector {
                    cell_id: next_cell,
                    boresight_azimuth: wrap_degrees(
                        config.sector_azimuth_offset + 120.0 * k as f64,
                    ),
                    mechanical_downtilt: config.mechanical_downtilt,
                    tx_power: config.tx_power_dbm,
                    beams: Vec::new(),
                };
                sector.beams = synthesize_beam_grid(&sector, config.beams.count, &config.beams)?;
                sectors.push(sector);
                next_cell += 1;
            }
            sites.push(Site {
                id,
                position: Point::new(x, y),
                height: config.site_height,
                sectors,
            });
        }
    }

    let mut buildings = if config.blocks.enabled {
        city_blocks(&area, &xs, &ys, &config.blocks, config.seed)
    } else {
        Vec::new()
    };
    buildings.extend(config.extra_buildings.iter().cloned());

    let scenario = Scenario {
        buildings,
        sites,
        carrier_frequency_ghz: config.carrier_frequency_ghz,
        area,
        grid_resolution: config.grid_resolution,
        rng_seed: config.seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Intervals of land between street corridors along one axis.
fn land_intervals(extent: (f64, f64), streets: &[f64], street_width: f64) -> Vec<(f64, f64)> {
    let half = street_width / 2.0;
    let mut edges = vec![extent.0];
    for &s in streets {
        edges.push(s - half);
        edges.push(s + half);
    }
    edges.push(extent.1);
    edges
        .chunks(2)
        .map(|c| (c[0].max(extent.0), c[1].min(extent.1)))
        .filter(|(a, b)| b > a)
        .collect()
}

fn subdivide(interval: (f64, f64), parts: usize, alley: f64) -> Vec<(f64, f64)> {
    let len = interval.1 - interval.0;
    let parts = parts.max(1);
    let piece = (len - alley * (parts - 1) as f64) / parts as f64;
    if parts == 1 || piece <= 0.0 {
        return vec![interval];
    }
    (0..parts)
        .map(|i| {
            let a = interval.0 + i as f64 * (piece + alley);
            (a, a + piece)
        })
        .collect()
}

fn city_blocks(area: &Rect, xs: &[f64], ys: &[f64], layout: &BlockLayout, seed: u64) -> Vec<Building> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::stream::SCENARIO, 0));
    let x_land = land_intervals((area.min.x, area.max.x), xs, layout.street_width);
    let y_land = land_intervals((area.min.y, area.max.y), ys, layout.street_width);
    let mut out = Vec::new();
    for &yb in &y_land {
        for &xb in &x_land {
            for &(y0, y1) in &subdivide(yb, layout.buildings_per_block_y, layout.alley_width) {
                for &(x0, x1) in &subdivide(xb, layout.buildings_per_block_x, layout.alley_width) {
                    let height = if layout.max_height > layout.min_height {
                        rng.gen_range(layout.min_height..layout.max_height)
                    } else {
                        layout.min_height
                    };
                    out.push(Building {
                        min_corner: Point::new(x0, y0),
                        max_corner: Point::new(x1, y1),
                        height,
                    });
                }
            }
        }
    }
    out
}

/// Lay out `count` beams for `sector`.
///
/// A single beam points along boresight, tilted down by the mechanical
/// downtilt. Otherwise the configured elevation rows each receive
/// `count / rows` beams evenly tiling the azimuth span; beam ids run
/// row-major (elevation row first).
pub fn synthesize_beam_grid(sector: &Sector, count: usize, grid: &BeamGridConfig) -> Result<Vec<Beam>> {
    if count == 0 {
        return Err(Error::InvalidArgument("beam count must be at least 1".into()));
    }
    let array_gain = grid.array_gain.unwrap_or(10.0 * (count as f64).log10());
    let make = |beam_id: u32, az: f64, el: f64| Beam {
        beam_id,
        steer_azimuth: az,
        steer_elevation: el,
        azimuth_beamwidth: grid.azimuth_beamwidth,
        elevation_beamwidth: grid.elevation_beamwidth,
        element_gain: grid.element_gain,
        front_to_back: grid.front_to_back,
        array_gain,
    };
    if count == 1 {
        return Ok(vec![make(0, 0.0, -sector.mechanical_downtilt)]);
    }
    let rows = grid.elevation_steers.len();
    if rows == 0 || count % rows != 0 {
        return Err(Error::BeamLayout { count, rows });
    }
    let per_row = count / rows;
    let spacing = grid.azimuth_span / per_row as f64;
    let mut beams = Vec::with_capacity(count);
    for (row, &el) in grid.elevation_steers.iter().enumerate() {
        for i in 0..per_row {
            let az = -grid.azimuth_span / 2.0 + spacing * (i as f64 + 0.5);
            beams.push(make((row * per_row + i) as u32, az, el));
        }
    }
    Ok(beams)
}

/// Grid points at `grid_resolution` spacing inside the area and outside every
/// building footprint (walls included), in row-major order: `y` outer,
/// `x` inner, both ascending.
pub fn enumerate_locations(scenario: &Scenario) -> Vec<Point> {
    let res = scenario.grid_resolution;
    let area = scenario.area;
    let nx = (area.width() / res + 1e-9).floor() as usize;
    let ny = (area.height() / res + 1e-9).floor() as usize;
    let footprints: Vec<Rect> = scenario.buildings.iter().map(Building::footprint).collect();
    let mut out = Vec::new();
    for j in 0..=ny {
        let y = area.min.y + j as f64 * res;
        // buildings overlapping this row
        let row: Vec<&Rect> = footprints
            .iter()
            .filter(|r| y >= r.min.y && y <= r.max.y)
            .collect();
        for i in 0..=nx {
            let p = Point::new(area.min.x + i as f64 * res, y);
            if !row.iter().any(|r| r.contains(&p)) {
                out.push(p);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_site() -> ScenarioConfig {
        ScenarioConfig {
            site_rows: 1,
            site_cols: 1,
            blocks: BlockLayout {
                enabled: false,
                ..BlockLayout::default()
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn default_counts() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.sites.len(), 8);
        assert_eq!(s.num_cells(), 24);
        assert_eq!(s.num_beams(), 768);
    }

    #[test]
    fn default_sector_azimuths_120_apart() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        for site in &s.sites {
            for k in 0..3 {
                let a = site.sectors[k].boresight_azimuth;
                let b = site.sectors[(k + 1) % 3].boresight_azimuth;
                assert!((wrap_degrees(b - a).abs() - 120.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_site_no_buildings() {
        let s = build_scenario(&one_site()).unwrap();
        assert_eq!(s.num_cells(), 3);
        assert!(s.buildings.is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = ScenarioConfig::default();
        assert_eq!(build_scenario(&cfg).unwrap(), build_scenario(&cfg).unwrap());
        let other = build_scenario(&ScenarioConfig { seed: 99, ..cfg.clone() }).unwrap();
        assert_ne!(other.buildings, build_scenario(&cfg).unwrap().buildings);
    }

    #[test]
    fn sites_sit_in_streets() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        for site in &s.sites {
            assert!(!s.inside_building(&site.position));
        }
    }

    #[test]
    fn rejects_zero_sites() {
        let cfg = ScenarioConfig { site_rows: 0, ..ScenarioConfig::default() };
        assert!(matches!(build_scenario(&cfg), Err(Error::Scenario(_))));
    }

    #[test]
    fn rejects_overlapping_buildings() {
        let b = Building {
            min_corner: Point::new(0.0, 0.0),
            max_corner: Point::new(10.0, 10.0),
            height: 20.0,
        };
        let c = Building {
            min_corner: Point::new(5.0, 5.0),
            max_corner: Point::new(15.0, 15.0),
            height: 20.0,
        };
        let cfg = ScenarioConfig { extra_buildings: vec![b, c], ..one_site() };
        let err = build_scenario(&cfg).unwrap_err().to_string();
        assert!(err.contains("overlap"), "{err}");
    }

    #[test]
    fn rejects_site_inside_building() {
        let b = Building {
            min_corner: Point::new(30.0, 30.0),
            max_corner: Point::new(50.0, 50.0),
            height: 20.0,
        };
        let cfg = ScenarioConfig { extra_buildings: vec![b], ..one_site() };
        let err = build_scenario(&cfg).unwrap_err().to_string();
        assert!(err.contains("inside a building"), "{err}");
    }

    #[test]
    fn beam_grid_default_layout() {
        let cfg = ScenarioConfig::default();
        let s = build_scenario(&cfg).unwrap();
        let beams = &s.sites[0].sectors[0].beams;
        assert_eq!(beams.len(), 32);
        let row0: Vec<f64> = beams[..16].iter().map(|b| b.steer_azimuth).collect();
        assert_eq!(row0[0], -56.25);
        assert_eq!(row0[15], 56.25);
        for w in row0.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 7.5).abs() < 1e-12);
        }
        assert!(beams[..16].iter().all(|b| b.steer_elevation == -3.0));
        assert!(beams[16..].iter().all(|b| b.steer_elevation == -12.0));
        // coverage: every azimuth in ±60° within half a spacing of a steer
        let mut a = -60.0;
        while a <= 60.0 {
            let nearest = row0.iter().map(|s| (s - a).abs()).fold(f64::MAX, f64::min);
            assert!(nearest <= 3.75 + 1e-9, "azimuth {a} uncovered");
            a += 0.25;
        }
        // (az, el) injective
        let mut pairs: Vec<(i64, i64)> = beams
            .iter()
            .map(|b| ((b.steer_azimuth * 1e6) as i64, (b.steer_elevation * 1e6) as i64))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 32);
        assert!((beams[0].array_gain - 10.0 * 32f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn single_beam_is_boresight() {
        let sector = Sector {
            cell_id: 1,
            boresight_azimuth: 30.0,
            mechanical_downtilt: 5.0,
            tx_power: 30.0,
            beams: vec![],
        };
        let beams = synthesize_beam_grid(&sector, 1, &BeamGridConfig::default()).unwrap();
        assert_eq!(beams.len(), 1);
        assert_eq!(beams[0].steer_azimuth, 0.0);
        assert_eq!(beams[0].steer_elevation, -5.0);
        assert_eq!(beams[0].array_gain, 0.0);
    }

    #[test]
    fn beam_grid_rejects_unfactorable_count() {
        let sector = Sector {
            cell_id: 1,
            boresight_azimuth: 0.0,
            mechanical_downtilt: 5.0,
            tx_power: 30.0,
            beams: vec![],
        };
        let grid = BeamGridConfig {
            elevation_steers: vec![-3.0, -8.0, -12.0],
            ..BeamGridConfig::default()
        };
        assert!(matches!(
            synthesize_beam_grid(&sector, 32, &grid),
            Err(Error::BeamLayout { count: 32, rows: 3 })
        ));
        assert_eq!(synthesize_beam_grid(&sector, 48, &grid).unwrap().len(), 48);
    }

    #[test]
    fn sectors_share_relative_steering() {
        let s = build_scenario(&ScenarioConfig::default()).unwrap();
        let first: Vec<(f64, f64)> = s.sites[0].sectors[0]
            .beams
            .iter()
            .map(|b| (b.steer_azimuth, b.steer_elevation))
            .collect();
        for (_, sector) in s.sectors() {
            let other: Vec<(f64, f64)> = sector
                .beams
                .iter()
                .map(|b| (b.steer_azimuth, b.steer_elevation))
                .collect();
            assert_eq!(first, other);
        }
    }

    #[test]
    fn lattice_count_empty_area() {
        let s = Scenario {
            buildings: vec![],
            sites: vec![],
            carrier_frequency_ghz: 28.0,
            area: Rect::from_bounds(0.0, 0.0, 10.0, 10.0),
            grid_resolution: 1.0,
            rng_seed: 0,
        };
        let pts = enumerate_locations(&s);
        assert_eq!(pts.len(), 121);
        assert_eq!(pts[0], Point::new(0.0, 0.0));
        assert_eq!(pts[1], Point::new(1.0, 0.0));
        assert_eq!(pts[120], Point::new(10.0, 10.0));
    }

    #[test]
    fn area_covered_by_building_yields_nothing() {
        let s = Scenario {
            buildings: vec![Building {
                min_corner: Point::new(0.0, 0.0),
                max_corner: Point::new(10.0, 10.0),
                height: 30.0,
            }],
            sites: vec![],
            carrier_frequency_ghz: 28.0,
            area: Rect::from_bounds(0.0, 0.0, 10.0, 10.0),
            grid_resolution: 1.0,
            rng_seed: 0,
        };
        assert!(enumerate_locations(&s).is_empty());
    }
}
