//! Seeded synthetic trajectory corpus with planted signatures.
//!
//! Every object owns a small cluster of "home" cells that nobody else
//! visits and that it returns to on every trip, which makes those cells its
//! spatial signature. Trips run from home to one of a few shared hubs, go
//! once around the hub's fixed loop of cells and come back along a jittered
//! route. All objects visit every hub, so hub cells carry no identifying
//! weight while the loop transitions are by far the most frequent patterns
//! in the data.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::{snap_to_location, BBox, Dataset, Location, Point, RawSample, Trajectory};

/// Frame used for generated coordinates (roughly central Beijing).
pub const BBOX: BBox = BBox {
    min_x: 116.0,
    min_y: 39.6,
    max_x: 116.8,
    max_y: 40.2,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub objects: usize,
    /// Target mean number of points per trajectory. Every object makes at
    /// least one trip to each hub, so small targets are overshot.
    pub avg_len: usize,
    pub seed: u64,
    /// Grid the generator places points on (cell centers).
    pub granularity: u32,
}

impl SynthConfig {
    pub fn new(objects: usize, avg_len: usize, seed: u64) -> Self {
        Self {
            objects,
            avg_len,
            seed,
            granularity: 512,
        }
    }
}

/// Hub loops as (lower-left cell, width, height) in 1/64 units of the
/// domain, perimeters of 20, 20 and 10 cells at granularity 512 scale.
const HUBS: [((f64, f64), u32, u32); 3] = [((0.30, 0.62), 6, 6), ((0.66, 0.40), 6, 6), ((0.45, 0.22), 3, 4)];

#[derive(Debug, Clone)]
pub struct Corpus {
    pub samples: Vec<RawSample>,
    /// The planted home cells of each object, in object order.
    pub homes: Vec<Vec<(u32, u32)>>,
}

impl Corpus {
    /// Snaps the corpus onto `granularity` with the generator's frame.
    pub fn dataset(&self, granularity: u32) -> Dataset {
        let mut stats = crate::io::IngestStats::default();
        crate::io::build_dataset(&self.samples, &BBOX, granularity, &mut stats)
    }
}

fn ring_cells(origin: (u32, u32), w: u32, h: u32) -> Vec<(u32, u32)> {
    let (x0, y0) = origin;
    let mut cells = Vec::new();
    for x in x0..x0 + w {
        cells.push((x, y0));
    }
    for y in y0 + 1..y0 + h {
        cells.push((x0 + w - 1, y));
    }
    for x in (x0..x0 + w - 1).rev() {
        cells.push((x, y0 + h - 1));
    }
    for y in (y0 + 1..y0 + h - 1).rev() {
        cells.push((x0, y));
    }
    cells
}

struct Walker<'a> {
    rng: &'a mut ChaCha8Rng,
    g: u32,
    out: Vec<(u32, u32)>,
}

impl Walker<'_> {
    fn emit(&mut self, c: (u32, u32)) {
        if self.out.last() != Some(&c) {
            self.out.push(c);
        }
    }

    /// Jittered straight-ish route from `a` to `b` in hops of a few cells,
    /// endpoints excluded.
    fn route(&mut self, a: (u32, u32), b: (u32, u32)) {
        let (ax, ay, bx, by) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64);
        let (dx, dy) = (bx - ax, by - ay);
        let len = dx.hypot(dy).max(1.0);
        let hop = self.rng.gen_range(2.0..4.0) * self.g as f64 / 512.0;
        let steps = ((len / hop).ceil() as usize).max(4);
        let (nx, ny) = (-dy / len, dx / len);
        let mut offset = 0.0f64;
        for s in 1..steps {
            let t = s as f64 / steps as f64;
            offset = (offset + self.rng.gen_range(-0.8..0.8)).clamp(-3.0, 3.0);
            let x = ax + dx * t + nx * offset;
            let y = ay + dy * t + ny * offset;
            let clamp = |v: f64| v.round().clamp(0.0, (self.g - 1) as f64) as u32;
            let c = (clamp(x), clamp(y));
            self.emit(c);
        }
    }
}

/// Generates the corpus. Identical configs give identical output.
pub fn generate(cfg: &SynthConfig) -> Corpus {
    let g = cfg.granularity;
    let scale = g as f64 / 512.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hubs: Vec<Vec<(u32, u32)>> = HUBS
        .iter()
        .map(|&((fx, fy), w, h)| {
            let origin = ((fx * g as f64) as u32, (fy * g as f64) as u32);
            let w = ((w as f64 * scale).round() as u32).max(2);
            let h = ((h as f64 * scale).round() as u32).max(2);
            ring_cells(origin, w, h)
        })
        .collect();
    let mut reserved: HashSet<(u32, u32)> = hubs.iter().flatten().copied().collect();

    let mut samples = Vec::new();
    let mut homes = Vec::with_capacity(cfg.objects);
    for obj in 0..cfg.objects {
        // Home cluster: three distinct cells no other object uses.
        let home = loop {
            let cx = rng.gen_range(g / 20..g - g / 20);
            let cy = rng.gen_range(g / 20..g - g / 20);
            let cells = [(cx, cy), (cx + 1, cy), (cx, cy + 1)];
            let near_hub = hubs
                .iter()
                .flatten()
                .any(|h| (h.0 as f64 - cx as f64).hypot(h.1 as f64 - cy as f64) < g as f64 / 8.0);
            let free = !near_hub
                && cells.iter().all(|c| {
                    (c.0 as i64 - 1..=c.0 as i64 + 1).all(|x| {
                        (c.1 as i64 - 1..=c.1 as i64 + 1)
                            .all(|y| x < 0 || y < 0 || !reserved.contains(&(x as u32, y as u32)))
                    })
                });
            if free {
                reserved.extend(cells);
                break cells.to_vec();
            }
        };
        let target_len = ((cfg.avg_len as f64) * rng.gen_range(0.7..1.3)).round() as usize;
        let mut walker = Walker {
            rng: &mut rng,
            g,
            out: Vec::with_capacity(target_len + 64),
        };
        let first_hub = walker.rng.gen_range(0..hubs.len());
        let mut trip = 0;
        while trip < hubs.len() || walker.out.len() < target_len {
            for _ in 0..walker.rng.gen_range(6..13) {
                let c = home[walker.rng.gen_range(0..home.len())];
                walker.emit(c);
            }
            let ring = &hubs[(first_hub + trip) % hubs.len()];
            let entry = walker.rng.gen_range(0..ring.len());
            let from = *walker.out.last().expect("home emitted");
            walker.route(from, ring[entry]);
            for k in 0..=ring.len() {
                walker.emit(ring[(entry + k) % ring.len()]);
            }
            walker.route(ring[entry], home[0]);
            trip += 1;
        }
        walker.emit(home[0]);
        let cells = walker.out;

        let object_id = format!("{:05}", obj + 1);
        let mut t = 1_201_910_400.0 + rng.gen_range(0..86_400) as f64;
        for c in cells {
            let (lon, lat) = BBOX.denormalize(Location::from_cell(c.0, c.1, g).center);
            samples.push(RawSample {
                object_id: object_id.clone(),
                timestamp: t,
                lon,
                lat,
            });
            t += rng.gen_range(30..600) as f64;
        }
        homes.push(home);
    }
    Corpus { samples, homes }
}

/// Shortcut: generate and snap in one step.
pub fn dataset(cfg: &SynthConfig) -> Dataset {
    generate(cfg).dataset(cfg.granularity)
}

/// A dataset of `n` random-walk trajectories with random lengths in
/// `1..=max_len`, without any planted structure. Handy for property tests.
pub fn random_walks(n: usize, max_len: usize, granularity: u32, rng: &mut impl Rng) -> Dataset {
    let trajectories = (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=max_len);
            let mut p = Point::new(rng.gen(), rng.gen());
            let step = rng.gen_range(0.002..0.05);
            let locs: Vec<Location> = (0..len)
                .map(|_| {
                    p = Point::new(
                        (p.x + rng.gen_range(-step..step)).clamp(0.0, 1.0),
                        (p.y + rng.gen_range(-step..step)).clamp(0.0, 1.0),
                    );
                    snap_to_location(p, granularity)
                })
                .collect();
            Trajectory::from_locations(i as u32, format!("r{i}"), &locs)
        })
        .collect();
    Dataset::new(trajectories, granularity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::extract_signatures;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SynthConfig::new(20, 800, 5);
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.samples, b.samples);
        let d = a.dataset(512);
        assert_eq!(d.len(), 20);
        let avg = d.total_points() as f64 / 20.0;
        assert!((700.0..950.0).contains(&avg), "avg {avg}");
        for t in &d.trajectories {
            assert!(t.points.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }

    #[test]
    fn homes_dominate_signatures() {
        let cfg = SynthConfig::new(30, 200, 9);
        let corpus = generate(&cfg);
        let d = corpus.dataset(512);
        let (sigs, _) = extract_signatures(&d, 10);
        for (i, home) in corpus.homes.iter().enumerate() {
            let top: Vec<(u32, u32)> = sigs.signature(i).iter().map(|w| w.location.key()).collect();
            for c in home {
                assert!(top.contains(c), "object {i}: home {c:?} not in {top:?}");
            }
        }
    }
}
