//! Procedural heightfields and robot-centred height maps.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{HeightField, RobotState};
use crate::rng::{hash_words, mix64, stream, unit_signed};

/// Value-noise lattice pitch (m).
pub const NOISE_LATTICE: f64 = 0.25;
/// Side of a discrete-obstacle cell (m).
pub const OBSTACLE_CELL: f64 = 0.5;
/// Slopes are linear only inside `|x| ≤ SLOPE_EXTENT` so that elevation is bounded.
pub const SLOPE_EXTENT: f64 = 40.0;
pub const NUM_LEVELS: usize = 5;

pub const MAP_SIDE: usize = 11;
pub const MAP_SPACING: f64 = 0.1;
pub const MAP_LEN: usize = MAP_SIDE * MAP_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    SmoothSlope,
    RoughSlope,
    DiscreteObstacles,
}

/// Terrain families an env batch can be drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainSelect {
    #[default]
    All,
    Flat,
    Smooth,
    Rough,
    Discrete,
}

impl TerrainSelect {
    pub fn name(self) -> &'static str {
        match self {
            TerrainSelect::All => "all",
            TerrainSelect::Flat => "flat",
            TerrainSelect::Smooth => "smooth",
            TerrainSelect::Rough => "rough",
            TerrainSelect::Discrete => "discrete",
        }
    }
}

impl std::str::FromStr for TerrainSelect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(TerrainSelect::All),
            "flat" => Ok(TerrainSelect::Flat),
            "smooth" => Ok(TerrainSelect::Smooth),
            "rough" => Ok(TerrainSelect::Rough),
            "discrete" => Ok(TerrainSelect::Discrete),
            other => Err(format!("unknown terrain '{other}' (expected all, flat, smooth, rough or discrete)")),
        }
    }
}

/// Hardest-level terrain magnitudes; level `l` uses `l / (NUM_LEVELS - 1)` of each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainParams {
    /// Height gradient along world x.
    pub max_slope: f64,
    /// Value-noise amplitude (m).
    pub max_roughness: f64,
    /// Obstacle step height (m).
    pub max_step: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            max_slope: 0.2,
            max_roughness: 0.05,
            max_step: 0.1,
        }
    }
}

/// A deterministic heightfield `h(x, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    pub kind: TerrainKind,
    pub seed: u64,
    pub level: usize,
    pub slope: f64,
    pub roughness: f64,
    pub step: f64,
}

impl TerrainField {
    pub fn flat() -> Self {
        Self {
            kind: TerrainKind::Flat,
            seed: 0,
            level: 0,
            slope: 0.0,
            roughness: 0.0,
            step: 0.0,
        }
    }

    pub fn smooth_slope(slope: f64) -> Self {
        Self {
            kind: TerrainKind::SmoothSlope,
            slope,
            ..Self::flat()
        }
    }

    pub fn rough_slope(slope: f64, roughness: f64, seed: u64) -> Self {
        Self {
            kind: TerrainKind::RoughSlope,
            slope,
            roughness,
            seed,
            ..Self::flat()
        }
    }

    pub fn discrete(step: f64, seed: u64) -> Self {
        Self {
            kind: TerrainKind::DiscreteObstacles,
            step,
            seed,
            ..Self::flat()
        }
    }

    /// Terrain of the given kind at a difficulty level in `0..NUM_LEVELS`.
    pub fn at_level(kind: TerrainKind, level: usize, params: &TerrainParams, seed: u64) -> Self {
        let frac = level.min(NUM_LEVELS - 1) as f64 / (NUM_LEVELS - 1) as f64;
        let field = match kind {
            TerrainKind::Flat => Self::flat(),
            TerrainKind::SmoothSlope => Self::smooth_slope(frac * params.max_slope),
            TerrainKind::RoughSlope => Self::rough_slope(frac * params.max_slope, frac * params.max_roughness, seed),
            TerrainKind::DiscreteObstacles => Self::discrete(frac * params.max_step, seed),
        };
        Self { level, ..field }
    }

    /// Terrain assigned to env `env_idx`: kinds cycle first, then levels, so a
    /// batch covers kinds × levels evenly.
    pub fn for_env(select: TerrainSelect, params: &TerrainParams, run_seed: u64, env_idx: usize) -> Self {
        let seed = hash_words(&[run_seed, stream::TERRAIN, env_idx as u64]);
        let (kind, level) = match select {
            TerrainSelect::Flat => return Self::flat(),
            TerrainSelect::All => {
                const KINDS: [TerrainKind; 3] =
                    [TerrainKind::SmoothSlope, TerrainKind::RoughSlope, TerrainKind::DiscreteObstacles];
                (KINDS[env_idx % 3], (env_idx / 3) % NUM_LEVELS)
            }
            TerrainSelect::Smooth => (TerrainKind::SmoothSlope, env_idx % NUM_LEVELS),
            TerrainSelect::Rough => (TerrainKind::RoughSlope, env_idx % NUM_LEVELS),
            TerrainSelect::Discrete => (TerrainKind::DiscreteObstacles, env_idx % NUM_LEVELS),
        };
        Self::at_level(kind, level, params, seed)
    }

    /// Upper bound on `|h|` anywhere.
    pub fn max_elevation(&self) -> f64 {
        match self.kind {
            TerrainKind::Flat => 0.0,
            TerrainKind::SmoothSlope => self.slope.abs() * SLOPE_EXTENT,
            TerrainKind::RoughSlope => self.slope.abs() * SLOPE_EXTENT + self.roughness.abs(),
            TerrainKind::DiscreteObstacles => self.step.abs(),
        }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            TerrainKind::Flat => 0.0,
            TerrainKind::SmoothSlope => self.ramp(x),
            TerrainKind::RoughSlope => self.ramp(x) + self.roughness * self.noise(x, y),
            TerrainKind::DiscreteObstacles => self.step * self.obstacle_units(x, y),
        }
    }

    fn ramp(&self, x: f64) -> f64 {
        self.slope * x.clamp(-SLOPE_EXTENT, SLOPE_EXTENT)
    }

    fn lattice_value(&self, i: i64, j: i64) -> f64 {
        unit_signed(hash_words(&[self.seed, i as u64, j as u64]))
    }

    /// Bilinearly interpolated lattice noise in `[-1, 1]`.
    fn noise(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / NOISE_LATTICE, y / NOISE_LATTICE);
        let (i, j) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - i, gy - j);
        let (i, j) = (i as i64, j as i64);
        let v00 = self.lattice_value(i, j);
        let v10 = self.lattice_value(i + 1, j);
        let v01 = self.lattice_value(i, j + 1);
        let v11 = self.lattice_value(i + 1, j + 1);
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }

    /// 0 or 1 per obstacle cell; the cells around the spawn point are flat.
    fn obstacle_units(&self, x: f64, y: f64) -> f64 {
        let (i, j) = ((x / OBSTACLE_CELL).floor() as i64, (y / OBSTACLE_CELL).floor() as i64);
        if (-1..=0).contains(&i) && (-1..=0).contains(&j) {
            return 0.0;
        }
        (mix64(hash_words(&[self.seed, i as u64, j as u64])) & 1) as f64
    }

    /// Writes `x,y,h` rows over a regular grid for inspection.
    pub fn export_csv<W: Write>(&self, mut w: W, x_range: (f64, f64), y_range: (f64, f64), res: f64) -> io::Result<()> {
        writeln!(w, "x,y,h")?;
        let nx = ((x_range.1 - x_range.0) / res).round() as usize;
        let ny = ((y_range.1 - y_range.0) / res).round() as usize;
        for ix in 0..=nx {
            let x = x_range.0 + ix as f64 * res;
            for iy in 0..=ny {
                let y = y_range.0 + iy as f64 * res;
                writeln!(w, "{x:.4},{y:.4},{:.6}", self.height(x, y))?;
            }
        }
        Ok(())
    }
}

impl HeightField for TerrainField {
    fn height_at(&self, x: f64, y: f64) -> f64 {
        self.height(x, y)
    }
}

/// World coordinates of height-map cell `(i, j)`; `i` runs forward along the
/// base heading, `j` to the left.
pub fn heightmap_point(base_x: f64, base_y: f64, yaw: f64, i: usize, j: usize) -> (f64, f64) {
    let half = (MAP_SIDE / 2) as f64;
    let fwd = (i as f64 - half) * MAP_SPACING;
    let left = (j as f64 - half) * MAP_SPACING;
    let (s, c) = yaw.sin_cos();
    (base_x + c * fwd - s * left, base_y + s * fwd + c * left)
}

/// 11×11 robot-centred, yaw-aligned terrain heights relative to the base
/// height, row-major with rows along the heading.
pub fn sample_heightmap(terrain: &dyn HeightField, state: &RobotState) -> [f64; MAP_LEN] {
    let (_, _, yaw) = state.roll_pitch_yaw();
    let [bx, by, bz] = state.base_pos;
    let mut out = [0.0; MAP_LEN];
    for i in 0..MAP_SIDE {
        for j in 0..MAP_SIDE {
            let (x, y) = heightmap_point(bx, by, yaw, i, j);
            out[i * MAP_SIDE + j] = terrain.height_at(x, y) - bz;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_scale_linearly() {
        let p = TerrainParams::default();
        let t = TerrainField::at_level(TerrainKind::RoughSlope, 2, &p, 1);
        assert!((t.slope - 0.1).abs() < 1e-15 && (t.roughness - 0.025).abs() < 1e-15);
        let t = TerrainField::at_level(TerrainKind::DiscreteObstacles, 4, &p, 1);
        assert_eq!(t.step, 0.1);
    }

    #[test]
    fn env_assignment_covers_kinds_and_levels() {
        let p = TerrainParams::default();
        let mut seen = std::collections::HashSet::new();
        for idx in 0..15 {
            let t = TerrainField::for_env(TerrainSelect::All, &p, 3, idx);
            seen.insert((t.kind, t.level));
        }
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn select_parses() {
        assert_eq!("rough".parse::<TerrainSelect>().unwrap(), TerrainSelect::Rough);
        assert!("stairs".parse::<TerrainSelect>().is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let mut buf = Vec::new();
        TerrainField::smooth_slope(0.1).export_csv(&mut buf, (0.0, 1.0), (0.0, 0.5), 0.5).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "x,y,h");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[5], "1.0000,0.0000,0.100000");
    }
}
