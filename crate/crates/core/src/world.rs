//! Ground-truth environments.
//!
//! A [`WorldGrid`] is a closed binary floorplan: every border cell is
//! occupied and the free cells form a single 4-connected component. Worlds
//! are either generated from a seed (rooms joined by corridors) or loaded
//! from an ASCII raster / binary PGM file.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::sensing::{GridGeometry, GridIndex};

/// Cell size of every generated world, in meters.
pub const WORLD_RESOLUTION: f64 = 0.1;

const ASCII_MAGIC: &str = "ogm-world";
const MAX_GEN_ATTEMPTS: u64 = 32;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed world file: {0}")]
    Malformed(String),
    #[error("border cell ({x}, {y}) is free; worlds must be closed")]
    OpenBorder { x: usize, y: usize },
    #[error("no free cell")]
    NoFreeCell,
    #[error("disconnected free space ({components} components)")]
    Disconnected { components: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("world generation failed after {attempts} attempts")]
    GenerationFailed { attempts: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl WorldError {
    /// Stable numeric code, used as the CLI exit status.
    pub fn code(&self) -> i32 {
        match self {
            WorldError::Malformed(_) => 10,
            WorldError::OpenBorder { .. } => 11,
            WorldError::NoFreeCell => 12,
            WorldError::Disconnected { .. } => 13,
            WorldError::InvalidParams(_) => 14,
            WorldError::GenerationFailed { .. } => 15,
            WorldError::Io(_) => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldGrid {
    width: usize,
    height: usize,
    resolution: f64,
    occupied: Vec<bool>,
}

impl WorldGrid {
    /// Builds a world from a row-major raster (`true` = occupied) and checks
    /// the closed-world and connectivity invariants.
    pub fn from_raster(width: usize, height: usize, resolution: f64, occupied: Vec<bool>) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::Malformed("zero extent".into()));
        }
        if occupied.len() != width * height {
            return Err(WorldError::Malformed(format!(
                "expected {} cells, got {}",
                width * height,
                occupied.len()
            )));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorldError::Malformed(format!("bad resolution {resolution}")));
        }
        let world = WorldGrid {
            width,
            height,
            resolution,
            occupied,
        };
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<(), WorldError> {
        for y in 0..self.height {
            for x in 0..self.width {
                let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
                if border && !self.occupied[y * self.width + x] {
                    return Err(WorldError::OpenBorder { x, y });
                }
            }
        }
        match free_components(self.width, self.height, &self.occupied) {
            0 => Err(WorldError::NoFreeCell),
            1 => Ok(()),
            components => Err(WorldError::Disconnected { components }),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.width, self.height, self.resolution, 0.0, 0.0)
    }

    pub fn raster(&self) -> &[bool] {
        &self.occupied
    }

    pub fn in_bounds(&self, c: GridIndex) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Out-of-bounds cells count as occupied.
    pub fn is_occupied(&self, c: GridIndex) -> bool {
        !self.in_bounds(c) || self.occupied[c.y as usize * self.width + c.x as usize]
    }

    pub fn is_free(&self, c: GridIndex) -> bool {
        !self.is_occupied(c)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width)
                .filter_map(move |x| (!self.occupied[y * self.width + x]).then_some(GridIndex::new(x as i32, y as i32)))
        })
    }

    pub fn free_fraction(&self) -> f64 {
        let free = self.occupied.iter().filter(|o| !**o).count();
        free as f64 / self.occupied.len() as f64
    }

    /// ASCII raster: header `ogm-world <w> <h> <res>`, then one line per
    /// row starting at row 0, `#` occupied and `.` free.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height + 32);
        let _ = writeln!(s, "{ASCII_MAGIC} {} {} {}", self.width, self.height, self.resolution);
        for row in self.occupied.chunks(self.width) {
            s.extend(row.iter().map(|&o| if o { '#' } else { '.' }));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn parse_ascii(text: &str) -> Result<Self, WorldError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| WorldError::Malformed("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != ASCII_MAGIC {
            return Err(WorldError::Malformed(format!("bad header {header:?}")));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| WorldError::Malformed(format!("bad dimension {s:?}")))
        };
        let width = parse_dim(fields[1])?;
        let height = parse_dim(fields[2])?;
        let resolution: f64 = fields[3]
            .parse()
            .map_err(|_| WorldError::Malformed(format!("bad resolution {:?}", fields[3])))?;

        let mut occupied = Vec::with_capacity(width * height);
        for row in 0..height {
            let line = lines
                .next()
                .ok_or_else(|| WorldError::Malformed(format!("missing row {row}")))?
                .trim_end_matches('\r');
            if line.chars().count() != width {
                return Err(WorldError::Malformed(format!(
                    "row {row} has {} cells, expected {width}",
                    line.chars().count()
                )));
            }
            for ch in line.chars() {
                occupied.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(WorldError::Malformed(format!(
                            "unexpected character {other:?} in row {row}"
                        )))
                    }
                });
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(WorldError::Malformed("trailing data after raster".into()));
        }
        Self::from_raster(width, height, resolution, occupied)
    }

    /// Binary PGM (P5, maxval ≤ 255). Pixels above 127 are free.
    pub fn parse_pgm(bytes: &[u8], resolution: f64) -> Result<Self, WorldError> {
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(WorldError::Malformed("truncated PGM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(WorldError::Malformed(format!("unsupported PGM magic {:?}", tokens[0])));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| WorldError::Malformed(format!("bad PGM field {s:?}")))
        };
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(WorldError::Malformed(format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the pixels.
        pos += 1;
        let data = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| WorldError::Malformed("truncated PGM raster".into()))?;
        let occupied = data.iter().map(|&v| v <= 127).collect();
        Self::from_raster(width, height, resolution, occupied)
    }
}

/// Loads a world from an ASCII raster, or from a binary PGM when the file
/// starts with the `P5` magic (at [`WORLD_RESOLUTION`]).
pub fn load_world(path: impl AsRef<Path>) -> Result<WorldGrid, WorldError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return WorldGrid::parse_pgm(&bytes, WORLD_RESOLUTION);
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| WorldError::Malformed("world file is not UTF-8".into()))?;
    WorldGrid::parse_ascii(text)
}

/// Counts 4-connected components of free cells.
pub(crate) fn free_components(width: usize, height: usize, occupied: &[bool]) -> usize {
    let mut label = vec![false; occupied.len()];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..occupied.len() {
        if occupied[start] || label[start] {
            continue;
        }
        components += 1;
        label[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if !occupied[j] && !label[j] {
                    label[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
    }
    components
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldGenParams {
    pub width: usize,
    pub height: usize,
    pub rooms_min: usize,
    pub rooms_max: usize,
    pub room_side_min: usize,
    pub room_side_max: usize,
    pub corridor_width: usize,
}

impl Default for WorldGenParams {
    fn default() -> Self {
        Self {
            width: 100,
            height: 100,
            rooms_min: 4,
            rooms_max: 6,
            room_side_min: 12,
            room_side_max: 30,
            corridor_width: 3,
        }
    }
}

impl WorldGenParams {
    /// Square extent with `rooms` rooms and room sides scaled to the extent.
    pub fn sized(extent: usize, rooms: usize) -> Self {
        Self {
            width: extent,
            height: extent,
            rooms_min: rooms,
            rooms_max: rooms,
            room_side_min: (extent / 4).max(3),
            room_side_max: (extent / 2).max(4),
            corridor_width: 3,
        }
    }

    fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidParams(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("extent must be at least 8x8 cells");
        }
        if self.corridor_width < 2 {
            return bad("corridor width must be at least 2 cells");
        }
        if self.rooms_min == 0 || self.rooms_min > self.rooms_max {
            return bad("room count range must satisfy 1 <= min <= max");
        }
        if self.room_side_min < 3 || self.room_side_min > self.room_side_max {
            return bad("room sides must satisfy 3 <= min <= max");
        }
        if self.room_side_max + 2 > self.width.min(self.height) {
            return bad("rooms do not fit inside the border");
        }
        if self.corridor_width + 2 > self.width.min(self.height) {
            return bad("corridors do not fit inside the border");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Room {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

impl Room {
    fn center(&self) -> (usize, usize) {
        (self.x0 + self.w / 2, self.y0 + self.h / 2)
    }

    /// Overlap test with a one-cell wall margin between rooms.
    fn collides(&self, o: &Room) -> bool {
        self.x0 < o.x0 + o.w + 1
            && o.x0 < self.x0 + self.w + 1
            && self.y0 < o.y0 + o.h + 1
            && o.y0 < self.y0 + self.h + 1
    }
}

struct Carver {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl Carver {
    fn carve(&mut self, x: usize, y: usize) {
        if x >= 1 && y >= 1 && x + 1 < self.width && y + 1 < self.height {
            self.occupied[y * self.width + x] = false;
        }
    }

    fn carve_room(&mut self, r: &Room) {
        for y in r.y0..r.y0 + r.h {
            for x in r.x0..r.x0 + r.w {
                self.carve(x, y);
            }
        }
    }

    /// L-shaped corridor `cw` cells wide between two points.
    fn carve_corridor(&mut self, a: (usize, usize), b: (usize, usize), cw: usize, x_first: bool) {
        let corner = if x_first { (b.0, a.1) } else { (a.0, b.1) };
        self.carve_segment(a, corner, cw);
        self.carve_segment(corner, b, cw);
    }

    fn carve_segment(&mut self, a: (usize, usize), b: (usize, usize), cw: usize) {
        let (x0, x1) = (a.0.min(b.0), a.0.max(b.0));
        let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
        let half = cw / 2;
        for y in y0.saturating_sub(half)..=y1 + (cw - 1 - half) {
            for x in x0.saturating_sub(half)..=x1 + (cw - 1 - half) {
                self.carve(x, y);
            }
        }
    }
}

/// Rooms-and-corridors floorplan, a pure function of `(seed, params)`.
pub fn generate_world(seed: u64, params: &WorldGenParams) -> Result<WorldGrid, WorldError> {
    params.validate()?;
    for attempt in 0..MAX_GEN_ATTEMPTS {
        if let Some(world) = try_generate(seed, attempt, params) {
            return Ok(world);
        }
    }
    Err(WorldError::GenerationFailed {
        attempts: MAX_GEN_ATTEMPTS,
    })
}

fn try_generate(seed: u64, attempt: u64, p: &WorldGenParams) -> Option<WorldGrid> {
    let mut rng = seed::rng_from(&[seed, attempt]);
    let target = rng.random_range(p.rooms_min..=p.rooms_max);
    let mut rooms: Vec<Room> = Vec::with_capacity(target);
    for _ in 0..target * 60 {
        if rooms.len() == target {
            break;
        }
        let w = rng.random_range(p.room_side_min..=p.room_side_max);
        let h = rng.random_range(p.room_side_min..=p.room_side_max);
        let room = Room {
            x0: rng.random_range(1..=p.width - 1 - w),
            y0: rng.random_range(1..=p.height - 1 - h),
            w,
            h,
        };
        if rooms.iter().all(|r| !r.collides(&room)) {
            rooms.push(room);
        }
    }
    if rooms.len() < p.rooms_min {
        return None;
    }

    let mut carver = Carver {
        width: p.width,
        height: p.height,
        occupied: vec![true; p.width * p.height],
    };
    for r in &rooms {
        carver.carve_room(r);
    }
    for pair in rooms.windows(2) {
        let x_first = rng.random_bool(0.5);
        carver.carve_corridor(pair[0].center(), pair[1].center(), p.corridor_width, x_first);
    }
    // An occasional extra loop makes layouts less tree-like.
    if rooms.len() > 2 && rng.random_bool(0.5) {
        let a = rng.random_range(0..rooms.len());
        let b = rng.random_range(0..rooms.len());
        if a != b {
            let x_first = rng.random_bool(0.5);
            carver.carve_corridor(rooms[a].center(), rooms[b].center(), p.corridor_width, x_first);
        }
    }

    // Corridors clipped at the border could in principle split free space;
    // join any stray component to the first one.
    for _ in 0..8 {
        let comps = component_representatives(p.width, p.height, &carver.occupied);
        if comps.len() <= 1 {
            break;
        }
        let anchor = comps[0];
        for &other in &comps[1..] {
            carver.carve_corridor(anchor, other, p.corridor_width, true);
        }
    }

    WorldGrid::from_raster(p.width, p.height, WORLD_RESOLUTION, carver.occupied).ok()
}

fn component_representatives(width: usize, height: usize, occupied: &[bool]) -> Vec<(usize, usize)> {
    let mut seen = vec![false; occupied.len()];
    let mut reps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..occupied.len() {
        if occupied[start] || seen[start] {
            continue;
        }
        reps.push((start % width, start / width));
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < width).then(|| i + 1),
                (y > 0).then(|| i - width),
                (y + 1 < height).then(|| i + width),
            ];
            for j in neighbors.into_iter().flatten() {
                if !occupied[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    reps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(rows: &[&str]) -> String {
        let mut s = format!("ogm-world {} {} 0.1\n", rows[0].len(), rows.len());
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn generation_is_deterministic() {
        let p = WorldGenParams::sized(100, 5);
        let a = generate_world(1, &p).unwrap();
        let b = generate_world(1, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generation_is_seed_sensitive() {
        let p = WorldGenParams::sized(100, 5);
        assert_ne!(generate_world(1, &p).unwrap(), generate_world(2, &p).unwrap());
    }

    #[test]
    fn free_fraction_in_band() {
        let w = generate_world(7, &WorldGenParams::sized(64, 3)).unwrap();
        let f = w.free_fraction();
        assert!((0.2..=0.8).contains(&f), "free fraction {f}");
    }

    #[test]
    fn generated_worlds_satisfy_invariants() {
        for seed in 0..20 {
            let w = generate_world(seed, &WorldGenParams::default()).unwrap();
            // from_raster re-validates
            WorldGrid::from_raster(w.width(), w.height(), w.resolution(), w.raster().to_vec()).unwrap();
        }
    }

    #[test]
    fn degenerate_params_error() {
        let mut p = WorldGenParams::sized(64, 3);
        p.corridor_width = 1;
        assert!(matches!(generate_world(0, &p), Err(WorldError::InvalidParams(_))));

        // Far more rooms than can fit: bounded retries, then a clean error.
        let p = WorldGenParams {
            width: 20,
            height: 20,
            rooms_min: 40,
            rooms_max: 40,
            room_side_min: 5,
            room_side_max: 6,
            corridor_width: 2,
        };
        assert!(matches!(
            generate_world(0, &p),
            Err(WorldError::GenerationFailed { .. })
        ));
    }

    #[test]
    fn load_three_by_three() {
        let w = WorldGrid::parse_ascii(&raster(&["###", "#.#", "###"])).unwrap();
        assert_eq!((w.width(), w.height()), (3, 3));
        assert!(w.is_free(GridIndex::new(1, 1)));
        assert_eq!(w.free_cells().count(), 1);
    }

    #[test]
    fn load_rejects_all_occupied() {
        let e = WorldGrid::parse_ascii(&raster(&["###", "###", "###"])).unwrap_err();
        assert!(matches!(e, WorldError::NoFreeCell));
        assert_eq!(e.to_string(), "no free cell");
    }

    #[test]
    fn load_rejects_disconnected() {
        let e = WorldGrid::parse_ascii(&raster(&["#####", "#.#.#", "#####"])).unwrap_err();
        assert!(matches!(e, WorldError::Disconnected { components: 2 }));
        assert!(e.to_string().starts_with("disconnected free space"));
    }

    #[test]
    fn load_rejects_open_border() {
        let e = WorldGrid::parse_ascii(&raster(&["#.#", "#.#", "###"])).unwrap_err();
        assert!(matches!(e, WorldError::OpenBorder { x: 1, y: 0 }));
    }

    #[test]
    fn load_rejects_malformed() {
        assert!(matches!(
            WorldGrid::parse_ascii("ogm-world 3 3 0.1\n###\n#x#\n###\n"),
            Err(WorldError::Malformed(_))
        ));
        assert!(matches!(
            WorldGrid::parse_ascii("ogm-world 3 3 0.1\n###\n"),
            Err(WorldError::Malformed(_))
        ));
        assert!(matches!(
            WorldGrid::parse_ascii("world 3 3\n"),
            Err(WorldError::Malformed(_))
        ));
        let codes = [
            WorldError::Malformed(String::new()).code(),
            WorldError::NoFreeCell.code(),
            WorldError::Disconnected { components: 2 }.code(),
            WorldError::OpenBorder { x: 0, y: 0 }.code(),
        ];
        let mut dedup = codes.to_vec();
        dedup.dedup();
        assert_eq!(dedup.len(), codes.len());
    }

    #[test]
    fn save_load_round_trip() {
        let w = generate_world(3, &WorldGenParams::sized(64, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        w.save(&path).unwrap();
        assert_eq!(load_world(&path).unwrap(), w);
    }

    #[test]
    fn pgm_threshold() {
        let mut bytes = b"P5\n# comment\n3 3\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0, 254, 0, 0, 127, 0]);
        let w = WorldGrid::parse_pgm(&bytes, 0.1).unwrap();
        assert!(w.is_free(GridIndex::new(1, 1)));
        // 127 is not above the threshold, so it stays occupied.
        assert!(w.is_occupied(GridIndex::new(1, 2)));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.pgm");
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(load_world(&path).unwrap(), w);
    }
}
