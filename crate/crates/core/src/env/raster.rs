//! Ego-centered bird's-eye-view raster.
//!
//! The 75 m window `[ego_s - 25, ego_s + 50]` maps onto 64 rows with the
//! front at the top. The full lateral extent (all lanes plus one lane-width
//! sidewalk per side) maps onto 64 columns with the leftmost lane on the
//! left. Every pixel takes the color of whatever contains its center.

use std::path::Path;

use crate::sim::WorldState;

pub const SIZE: usize = 64;
pub const CHANNELS: usize = 3;
pub const WINDOW_BEHIND: f64 = 25.0;
pub const WINDOW_AHEAD: f64 = 50.0;
pub const WINDOW_LENGTH: f64 = WINDOW_BEHIND + WINDOW_AHEAD;
/// Longitudinal extent of one pixel row.
pub const ROW_METERS: f64 = WINDOW_LENGTH / SIZE as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PaletteColor {
    Road = 0,
    Sidewalk = 1,
    Line = 2,
    Social = 3,
    Ego = 4,
}

impl PaletteColor {
    pub const ALL: [PaletteColor; 5] = [Self::Road, Self::Sidewalk, Self::Line, Self::Social, Self::Ego];

    pub const fn rgb(self) -> [u8; 3] {
        match self {
            Self::Road => [0, 0, 0],
            Self::Sidewalk => [128, 128, 128],
            Self::Line => [255, 0, 0],
            Self::Social => [0, 255, 0],
            Self::Ego => [0, 0, 255],
        }
    }

    fn from_index(i: u8) -> Self {
        Self::ALL[i as usize]
    }
}

/// A 64×64 RGB frame. Pixels are stored as palette indices, so every
/// emitted color is one of the five palette entries.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    cells: Box<[u8; SIZE * SIZE]>,
}

impl std::fmt::Debug for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observation({}x{})", SIZE, SIZE)
    }
}

impl Observation {
    fn filled(color: PaletteColor) -> Self {
        Self {
            cells: Box::new([color as u8; SIZE * SIZE]),
        }
    }

    #[inline]
    pub fn color(&self, row: usize, col: usize) -> PaletteColor {
        PaletteColor::from_index(self.cells[row * SIZE + col])
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.color(row, col).rgb()
    }

    /// Row-major, channel-interleaved (R, G, B) bytes: 64·64·3 values.
    pub fn rgb_bytes(&self) -> Vec<u8> {
        self.cells.iter().flat_map(|&c| PaletteColor::from_index(c).rgb()).collect()
    }

    /// Channel-major network input scaled to `[0, 1]`.
    pub fn write_chw(&self, out: &mut [f64]) {
        assert_eq!(out.len(), CHANNELS * SIZE * SIZE);
        for (i, &c) in self.cells.iter().enumerate() {
            let rgb = PaletteColor::from_index(c).rgb();
            for ch in 0..CHANNELS {
                out[ch * SIZE * SIZE + i] = rgb[ch] as f64 / 255.0;
            }
        }
    }

    pub fn count(&self, color: PaletteColor) -> usize {
        self.cells.iter().filter(|&&c| c == color as u8).count()
    }

    /// Bounding box `(row_min, row_max, col_min, col_max)` of a color.
    pub fn bbox(&self, color: PaletteColor) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for r in 0..SIZE {
            for c in 0..SIZE {
                if self.color(r, c) == color {
                    b = Some(match b {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        b
    }

    pub fn save_png(&self, path: &Path) -> Result<(), image::ImageError> {
        let img = image::RgbImage::from_raw(SIZE as u32, SIZE as u32, self.rgb_bytes()).expect("64x64x3 buffer");
        img.save_with_format(path, image::ImageFormat::Png)
    }

    pub fn load_png(path: &Path) -> Result<Self, String> {
        let img = image::open(path).map_err(|e| e.to_string())?.to_rgb8();
        if img.width() as usize != SIZE || img.height() as usize != SIZE {
            return Err("frame is not 64x64".into());
        }
        let mut obs = Self::filled(PaletteColor::Road);
        for (i, p) in img.pixels().enumerate() {
            let color = PaletteColor::ALL
                .into_iter()
                .find(|c| c.rgb() == p.0)
                .ok_or_else(|| format!("pixel {i} is not a palette color"))?;
            obs.cells[i] = color as u8;
        }
        Ok(obs)
    }
}

/// Longitudinal offset from the ego of the center of pixel row `row`.
#[inline]
pub fn row_center_offset(row: usize) -> f64 {
    WINDOW_AHEAD - (row as f64 + 0.5) * ROW_METERS
}

/// Lateral world coordinate of the center of pixel column `col`.
#[inline]
pub fn col_center_y(lane_count: usize, lane_width: f64, col: usize) -> f64 {
    let width = (lane_count + 2) as f64 * lane_width;
    (lane_count + 1) as f64 * lane_width - (col as f64 + 0.5) * width / SIZE as f64
}

/// Column holding the one-pixel line drawn for lateral coordinate `y`.
#[inline]
pub fn line_column(lane_count: usize, lane_width: f64, y: f64) -> usize {
    let width = (lane_count + 2) as f64 * lane_width;
    let x = (lane_count + 1) as f64 * lane_width - y;
    ((x * SIZE as f64 / width).floor() as usize).min(SIZE - 1)
}

pub fn rasterize(world: &WorldState) -> Observation {
    let road = &world.road;
    let ego = world.ego();
    let mut obs = Observation::filled(PaletteColor::Road);

    let col_y: Vec<f64> = (0..SIZE).map(|c| col_center_y(road.lane_count, road.lane_width, c)).collect();
    let road_w = road.road_width();
    let mut base = [PaletteColor::Road; SIZE];
    for (c, &y) in col_y.iter().enumerate() {
        if y < 0.0 || y > road_w {
            base[c] = PaletteColor::Sidewalk;
        }
    }
    for k in 0..=road.lane_count {
        base[line_column(road.lane_count, road.lane_width, k as f64 * road.lane_width)] = PaletteColor::Line;
    }
    for r in 0..SIZE {
        for (c, &color) in base.iter().enumerate() {
            obs.cells[r * SIZE + c] = color as u8;
        }
    }

    let row_offset: Vec<f64> = (0..SIZE).map(row_center_offset).collect();
    let mut paint = |v: &crate::sim::VehicleState, color: PaletteColor| {
        let rel = v.s - ego.s;
        let (s_lo, s_hi) = (rel - 0.5 * v.length, rel + 0.5 * v.length);
        let (y_lo, y_hi) = (v.y - 0.5 * v.width, v.y + 0.5 * v.width);
        for (r, &o) in row_offset.iter().enumerate() {
            if o < s_lo || o >= s_hi {
                continue;
            }
            for (c, &y) in col_y.iter().enumerate() {
                if y >= y_lo && y < y_hi {
                    obs.cells[r * SIZE + c] = color as u8;
                }
            }
        }
    };
    for v in world.vehicles.iter().filter(|v| v.id != world.ego_id) {
        paint(v, PaletteColor::Social);
    }
    paint(ego, PaletteColor::Ego);
    obs
}
