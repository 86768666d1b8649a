//! Non-neural stochastic inpainting used as the default predictor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{PredictError, PredictionEnsemble, Predictor};
use crate::mapping::{CropInput, CROP_SIZE, PREDICT_OFFSET, PREDICT_SIZE};
use crate::seed::rng_from;

/// Fills the unknown cells of the predicted block by randomized flood fill
/// from the known cells, then softens each binary sample with a 3×3 box
/// filter. Known cells of the block are reproduced exactly.
///
/// A cell with two occupied cells in line behind it continues that wall
/// with probability `p_wall`. Every other cell is occupied with the local
/// prior: the mean of the crop-wide occupied fraction (clamped to
/// `prior_clamp`) and the occupied fraction of its already-filled
/// 8-neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct InpaintingPredictor {
    pub p_wall: f64,
    pub prior_clamp: (f64, f64),
}

impl Default for InpaintingPredictor {
    fn default() -> Self {
        Self {
            p_wall: 0.7,
            prior_clamp: (0.05, 0.95),
        }
    }
}

/// Side of the working region: the predicted block plus a one-cell ring of
/// crop context.
const SIDE: usize = PREDICT_SIZE + 2;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cell {
    Unset,
    Free,
    Occupied,
}

impl InpaintingPredictor {
    /// Occupied fraction among the crop's known cells; 0.5 when none are.
    pub fn crop_prior(&self, crop: &CropInput) -> f64 {
        let occ = crop.occupied.iter().filter(|&&v| v == 1).count();
        let free = crop.free.iter().filter(|&&v| v == 1).count();
        if occ + free == 0 {
            return 0.5;
        }
        (occ as f64 / (occ + free) as f64).clamp(self.prior_clamp.0, self.prior_clamp.1)
    }

    fn context(crop: &CropInput) -> Vec<Cell> {
        let mut cells = vec![Cell::Unset; SIDE * SIDE];
        let base = PREDICT_OFFSET - 1;
        for r in 0..SIDE {
            for c in 0..SIDE {
                let k = (base + r) * CROP_SIZE + base + c;
                cells[r * SIDE + c] = if crop.occupied[k] == 1 {
                    Cell::Occupied
                } else if crop.free[k] == 1 {
                    Cell::Free
                } else {
                    Cell::Unset
                };
            }
        }
        cells
    }

    fn sample(&self, known: &[Cell], prior: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut cells = known.to_vec();
        let inside = |r: usize, c: usize| (1..=PREDICT_SIZE).contains(&r) && (1..=PREDICT_SIZE).contains(&c);
        let mut queued = vec![false; SIDE * SIDE];
        let mut open: Vec<usize> = Vec::new();
        let push_neighbours = |i: usize, cells: &[Cell], queued: &mut [bool], open: &mut Vec<usize>| {
            let (r, c) = (i / SIDE, i % SIDE);
            for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as i32 + dr, c as i32 + dc);
                if nr < 0 || nc < 0 || nr >= SIDE as i32 || nc >= SIDE as i32 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                let j = nr * SIDE + nc;
                if inside(nr, nc) && cells[j] == Cell::Unset && !queued[j] {
                    queued[j] = true;
                    open.push(j);
                }
            }
        };
        for i in 0..SIDE * SIDE {
            if cells[i] != Cell::Unset {
                push_neighbours(i, &cells, &mut queued, &mut open);
            }
        }
        let mut next_seed = 0;
        loop {
            if open.is_empty() {
                // Regions the known cells cannot reach start from the prior.
                while next_seed < SIDE * SIDE
                    && !(inside(next_seed / SIDE, next_seed % SIDE) && cells[next_seed] == Cell::Unset)
                {
                    next_seed += 1;
                }
                if next_seed == SIDE * SIDE {
                    break;
                }
                cells[next_seed] = if rng.random_bool(prior) {
                    Cell::Occupied
                } else {
                    Cell::Free
                };
                push_neighbours(next_seed, &cells, &mut queued, &mut open);
                continue;
            }
            let i = open.swap_remove(rng.random_range(0..open.len()));
            let p = if continues_wall(&cells, i) {
                self.p_wall
            } else {
                0.5 * prior + 0.5 * neighbour_fraction(&cells, i).unwrap_or(prior)
            };
            cells[i] = if rng.random_bool(p) { Cell::Occupied } else { Cell::Free };
            push_neighbours(i, &cells, &mut queued, &mut open);
        }

        let mut out = vec![0.0; PREDICT_SIZE * PREDICT_SIZE];
        for r in 0..PREDICT_SIZE {
            for c in 0..PREDICT_SIZE {
                let i = (r + 1) * SIDE + c + 1;
                out[r * PREDICT_SIZE + c] = match known[i] {
                    Cell::Occupied => 1.0,
                    Cell::Free => 0.0,
                    Cell::Unset => box_mean(&cells, i),
                };
            }
        }
        out
    }
}

fn occupied_at(cells: &[Cell], r: i32, c: i32) -> bool {
    r >= 0 && c >= 0 && r < SIDE as i32 && c < SIDE as i32 && cells[r as usize * SIDE + c as usize] == Cell::Occupied
}

/// Two occupied cells in a row (4-directions) ending next to `i`.
fn continues_wall(cells: &[Cell], i: usize) -> bool {
    let (r, c) = ((i / SIDE) as i32, (i % SIDE) as i32);
    [(-1, 0), (1, 0), (0, -1), (0, 1)]
        .iter()
        .any(|&(dr, dc)| occupied_at(cells, r + dr, c + dc) && occupied_at(cells, r + 2 * dr, c + 2 * dc))
}

/// Occupied fraction among the filled 8-neighbours of `i`.
fn neighbour_fraction(cells: &[Cell], i: usize) -> Option<f64> {
    let (r, c) = ((i / SIDE) as i32, (i % SIDE) as i32);
    let (mut occ, mut set) = (0, 0);
    for dr in -1..=1 {
        for dc in -1..=1 {
            let (nr, nc) = (r + dr, c + dc);
            if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= SIDE as i32 || nc >= SIDE as i32 {
                continue;
            }
            match cells[nr as usize * SIDE + nc as usize] {
                Cell::Unset => {}
                Cell::Occupied => {
                    occ += 1;
                    set += 1;
                }
                Cell::Free => set += 1,
            }
        }
    }
    (set > 0).then(|| occ as f64 / set as f64)
}

/// 3×3 mean over the filled cells around `i` (context ring included).
fn box_mean(cells: &[Cell], i: usize) -> f64 {
    let (r, c) = (i / SIDE, i % SIDE);
    let (mut occ, mut n) = (0u32, 0u32);
    for nr in r.saturating_sub(1)..=(r + 1).min(SIDE - 1) {
        for nc in c.saturating_sub(1)..=(c + 1).min(SIDE - 1) {
            match cells[nr * SIDE + nc] {
                Cell::Unset => {}
                Cell::Occupied => {
                    occ += 1;
                    n += 1;
                }
                Cell::Free => n += 1,
            }
        }
    }
    occ as f64 / n as f64
}

impl Predictor for InpaintingPredictor {
    fn name(&self) -> &str {
        "inpaint"
    }

    fn predict(&self, crop: &CropInput, n_samples: usize, seed: u64) -> Result<PredictionEnsemble, PredictError> {
        if n_samples == 0 {
            return Err(PredictError::NoSamples);
        }
        let known = Self::context(crop);
        let prior = self.crop_prior(crop);
        let samples = (0..n_samples as u64)
            .map(|j| self.sample(&known, prior, &mut rng_from(&[seed, j])))
            .collect();
        PredictionEnsemble::new(crop.center, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{extract_crop, GridGeometry, GridIndex, OccupancyGrid};

    /// 120×120 map: a known room with a wall along x = 70, the rest unknown.
    fn half_known() -> OccupancyGrid {
        let mut m = OccupancyGrid::new(GridGeometry::new(120, 120, 0.1, 0.0, 0.0));
        for y in 20..100 {
            for x in 20..=70 {
                let l = if x == 70 || y == 20 { 2.0 } else { -2.0 };
                m.set_log_odds(GridIndex::new(x, y), l);
            }
        }
        m
    }

    #[test]
    fn fully_known_block_is_reproduced() {
        let mut m = OccupancyGrid::new(GridGeometry::new(100, 100, 0.1, 0.0, 0.0));
        for y in 0..100 {
            for x in 0..100 {
                m.set_log_odds(GridIndex::new(x, y), if (x + y) % 7 == 0 { 1.0 } else { -1.0 });
            }
        }
        let center = GridIndex::new(50, 50);
        let crop = extract_crop(&m, center);
        let e = InpaintingPredictor::default().predict(&crop, 3, 9).unwrap();
        for s in e.samples() {
            for r in 0..PREDICT_SIZE {
                for c in 0..PREDICT_SIZE {
                    let cell = CropInput::predicted_cell(center, r, c);
                    let expect = if (cell.x + cell.y) % 7 == 0 { 1.0 } else { 0.0 };
                    assert_eq!(s[r * PREDICT_SIZE + c], expect);
                }
            }
        }
        assert!(e.variance().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn known_cells_exact_and_unknown_vary() {
        let m = half_known();
        let center = GridIndex::new(70, 60);
        let crop = extract_crop(&m, center);
        let e = InpaintingPredictor::default().predict(&crop, 10, 4).unwrap();
        let var = e.variance();
        let mut varied = 0;
        for r in 0..PREDICT_SIZE {
            for c in 0..PREDICT_SIZE {
                let i = m.geometry().index(CropInput::predicted_cell(center, r, c)).unwrap();
                let k = r * PREDICT_SIZE + c;
                if m.is_unknown(i) {
                    varied += usize::from(var[k] > 0.0);
                } else {
                    let expect = if m.is_occupied(i) { 1.0 } else { 0.0 };
                    assert!(e.samples().iter().all(|s| s[k] == expect));
                }
            }
        }
        assert!(varied > 100, "{varied}");
    }

    #[test]
    fn deterministic_in_seed() {
        let crop = extract_crop(&half_known(), GridIndex::new(70, 60));
        let p = InpaintingPredictor::default();
        assert_eq!(p.predict(&crop, 4, 1).unwrap(), p.predict(&crop, 4, 1).unwrap());
        assert_ne!(p.predict(&crop, 4, 1).unwrap(), p.predict(&crop, 4, 2).unwrap());
        let one = p.predict(&crop, 1, 1).unwrap();
        assert_eq!(one.samples()[0], p.predict(&crop, 4, 1).unwrap().samples()[0]);
        assert!(matches!(p.predict(&crop, 0, 1), Err(PredictError::NoSamples)));
    }

    #[test]
    fn empty_crop_draws_from_even_prior() {
        let m = OccupancyGrid::new(GridGeometry::new(10, 10, 0.1, 0.0, 0.0));
        let crop = extract_crop(&m, GridIndex::new(5, 5));
        let p = InpaintingPredictor::default();
        assert_eq!(p.crop_prior(&crop), 0.5);
        let e = p.predict(&crop, 2, 0).unwrap();
        assert!(e.samples().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn walls_tend_to_continue() {
        // A known wall along x = 70 for y in 20..100 ends at the top of the
        // known region; beyond it the column is unknown.
        let mut m = OccupancyGrid::new(GridGeometry::new(120, 120, 0.1, 0.0, 0.0));
        for y in 30..60 {
            for x in 40..100 {
                let l = if x == 70 { 2.0 } else { -2.0 };
                m.set_log_odds(GridIndex::new(x, y), l);
            }
        }
        let center = GridIndex::new(70, 60);
        let crop = extract_crop(&m, center);
        let mean = InpaintingPredictor::default().predict(&crop, 10, 8).unwrap().mean();
        // Just past the wall's end versus a cell the same distance off-axis.
        let at = |x: i32, y: i32| mean[(y - center.y + 40) as usize * PREDICT_SIZE + (x - center.x + 40) as usize];
        assert!(at(70, 60) > at(60, 60), "{} vs {}", at(70, 60), at(60, 60));
    }
}
