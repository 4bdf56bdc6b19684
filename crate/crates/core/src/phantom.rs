//! Synthetic CT/CTA pairs containing a random tube tree with known
//! ground-truth arrival times.
//!
//! The tree starts at `root` and grows breadth-first: each segment is a
//! walk that advances one voxel per step along its main axis and, with
//! probability `tortuosity`, also steps sideways along a perpendicular axis.
//! Every segment spawns two children heading in opposite directions along
//! an axis perpendicular to its own. Segments keep a gap of at least one
//! voxel between tubes, except where a child leaves its parent.
//!
//! Ground truth on the centerline is the path length from the root along
//! the tree (shortest 26-connected path through centerline voxels, in mm).
//! A tube voxel adds its distance to the nearest centerline voxel. Outside
//! the tubes, the value is that of the nearest tube voxel plus `lambda`
//! times the Euclidean distance to it, with `lambda = 1 / DEFAULT_EPSILON`:
//! the same slow-tissue model the solver applies through its speed floor.
//! Measuring along the centerline rather than through the whole tube keeps
//! arrival strictly increasing along every branch; a geodesic through the
//! full tube cuts corners at junctions.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::eikonal::DEFAULT_EPSILON;
use crate::error::{Error, Result};
use crate::kv;
use crate::labeling::Connectivity;
use crate::vesselseg::SeedSet;
use crate::volume::{distance_transform, save_nifti, BinaryMask, GridGeometry, ScalarVolume};

/// Attempts per segment before generation gives up.
pub const MAX_RETRIES: usize = 200;

/// Parameters of a synthetic phantom.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Voxel size in mm.
    pub spacing: [f64; 3],
    pub root: [usize; 3],
    /// Number of tube segments, at least 1.
    pub branches: usize,
    /// Inclusive range of segment lengths, in steps.
    pub branch_length_range: (usize, usize),
    /// Tube radius in voxels.
    pub vessel_radius: f64,
    /// CTA minus CT inside the tubes.
    pub contrast_intensity: f64,
    pub tissue_intensity: f64,
    /// Standard deviation of the additive Gaussian noise on each volume.
    pub noise_sigma: f64,
    /// Probability of a sideways step, in `[0, 1]`.
    pub tortuosity: f64,
    pub rng_seed: u64,
}

/// Root used when only the grid size is given: centred in x and y, near the
/// low-z face.
pub fn default_root(dims: [usize; 3]) -> [usize; 3] {
    [
        dims[0] / 2,
        dims[1] / 2,
        (dims[2] / 16).max(4).min(dims[2].saturating_sub(1)),
    ]
}

impl Default for PhantomSpec {
    fn default() -> Self {
        let dims = [96, 96, 96];
        PhantomSpec {
            dims,
            spacing: [1.0; 3],
            root: default_root(dims),
            branches: 7,
            branch_length_range: (20, 32),
            vessel_radius: 2.0,
            contrast_intensity: 300.0,
            tissue_intensity: 40.0,
            noise_sigma: 6.0,
            tortuosity: 0.3,
            rng_seed: 42,
        }
    }
}

impl PhantomSpec {
    /// Voxels kept free between a centerline and the grid border.
    fn margin(&self) -> usize {
        self.vessel_radius.ceil() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        GridGeometry::with_spacing(self.dims, self.spacing)?;
        if self.branches == 0 {
            return bad("phantom needs at least one branch".into());
        }
        let (lo, hi) = self.branch_length_range;
        if lo < 2 || hi < lo {
            return bad(format!("branch length range ({lo}, {hi}) must satisfy 2 <= min <= max"));
        }
        if !(self.vessel_radius >= 1.0 && self.vessel_radius.is_finite()) {
            return bad(format!("vessel radius must be >= 1, got {}", self.vessel_radius));
        }
        if !(self.contrast_intensity > 0.0 && self.contrast_intensity.is_finite()) {
            return bad(format!(
                "contrast intensity must be > 0, got {}",
                self.contrast_intensity
            ));
        }
        if !self.tissue_intensity.is_finite() {
            return bad("tissue intensity must be finite".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.tortuosity) {
            return bad(format!("tortuosity must lie in [0, 1], got {}", self.tortuosity));
        }
        let m = self.margin();
        if (0..3).any(|a| self.root[a] < m || self.root[a] + m >= self.dims[a]) {
            return bad(format!(
                "root {:?} must be at least {m} voxels inside grid {:?}",
                self.root, self.dims
            ));
        }
        Ok(())
    }

    /// Applies `key=value` overrides (see [`PhantomSpec::KEYS`]). If `dims`
    /// is given without `root`, the root moves to [`default_root`].
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let mut root_set = false;
        let mut dims_set = false;
        for (k, v) in kv::parse_pairs(text)? {
            match k.as_str() {
                "dims" => {
                    self.dims = kv::triple(&k, &v)?;
                    dims_set = true;
                }
                "spacing" => self.spacing = kv::triple(&k, &v)?,
                "root" => {
                    self.root = kv::triple(&k, &v)?;
                    root_set = true;
                }
                "branches" => self.branches = kv::value(&k, &v)?,
                "branch_length_min" => self.branch_length_range.0 = kv::value(&k, &v)?,
                "branch_length_max" => self.branch_length_range.1 = kv::value(&k, &v)?,
                "vessel_radius" => self.vessel_radius = kv::value(&k, &v)?,
                "contrast_intensity" => self.contrast_intensity = kv::value(&k, &v)?,
                "tissue_intensity" => self.tissue_intensity = kv::value(&k, &v)?,
                "noise_sigma" => self.noise_sigma = kv::value(&k, &v)?,
                "tortuosity" => self.tortuosity = kv::value(&k, &v)?,
                "rng_seed" | "seed" => self.rng_seed = kv::value(&k, &v)?,
                _ => return Err(kv::unknown(&k)),
            }
        }
        if dims_set && !root_set {
            self.root = default_root(self.dims);
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "dims",
        "spacing",
        "root",
        "branches",
        "branch_length_min",
        "branch_length_max",
        "vessel_radius",
        "contrast_intensity",
        "tissue_intensity",
        "noise_sigma",
        "tortuosity",
        "rng_seed",
    ];

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut spec = PhantomSpec::default();
        spec.apply_kv(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Round-trips through [`PhantomSpec::from_kv`].
    pub fn to_kv(&self) -> String {
        let t = |a: [usize; 3]| format!("{},{},{}", a[0], a[1], a[2]);
        let s = self.spacing;
        format!(
            "dims={}\nspacing={},{},{}\nroot={}\nbranches={}\nbranch_length_min={}\nbranch_length_max={}\n\
             vessel_radius={}\ncontrast_intensity={}\ntissue_intensity={}\nnoise_sigma={}\ntortuosity={}\nrng_seed={}\n",
            t(self.dims),
            s[0],
            s[1],
            s[2],
            t(self.root),
            self.branches,
            self.branch_length_range.0,
            self.branch_length_range.1,
            self.vessel_radius,
            self.contrast_intensity,
            self.tissue_intensity,
            self.noise_sigma,
            self.tortuosity,
            self.rng_seed
        )
    }
}

/// One tube segment's centerline, in growth order. A child's first point
/// is adjacent to its parent's last point.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub parent: Option<usize>,
    pub points: Vec<[usize; 3]>,
}

/// A generated phantom and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomBundle {
    pub ct: ScalarVolume,
    pub cta: ScalarVolume,
    pub true_vessel_mask: BinaryMask,
    pub true_centerline: SeedSet,
    pub true_arrival: ScalarVolume,
    pub segments: Vec<Segment>,
}

impl PhantomBundle {
    /// `segment,step,i,j,k,arrival` for every centerline point.
    pub fn centerline_csv(&self) -> String {
        let mut out = String::from("segment,step,i,j,k,arrival\n");
        for (s, seg) in self.segments.iter().enumerate() {
            for (n, &[i, j, k]) in seg.points.iter().enumerate() {
                let t = self.true_arrival.get(i, j, k);
                writeln!(out, "{s},{n},{i},{j},{k},{t}").unwrap();
            }
        }
        out
    }

    /// Writes `ct.nii.gz`, `cta.nii.gz`, `true_vessel_mask.nii.gz`,
    /// `true_arrival.nii.gz` and `centerline.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_nifti(&self.ct, dir.join("ct.nii.gz"))?;
        save_nifti(&self.cta, dir.join("cta.nii.gz"))?;
        save_nifti(&self.true_vessel_mask.to_volume(), dir.join("true_vessel_mask.nii.gz"))?;
        save_nifti(&self.true_arrival, dir.join("true_arrival.nii.gz"))?;
        let csv = dir.join("centerline.csv");
        std::fs::write(&csv, self.centerline_csv()).map_err(|e| Error::io(csv, e))
    }
}

fn ball(radius: f64) -> Vec<[isize; 3]> {
    let r = radius.floor() as isize;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if ((dx * dx + dy * dy + dz * dz) as f64) <= radius * radius {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn stamp(mask: &mut [bool], geo: &GridGeometry, at: [usize; 3], offsets: &[[isize; 3]]) {
    for &d in offsets {
        if let Some(idx) = geo.offset(at, d) {
            mask[idx] = true;
        }
    }
}

struct Pending {
    start: [usize; 3],
    axis: usize,
    sign: isize,
    parent: Option<usize>,
    /// The start point is itself part of the segment (root only).
    include_start: bool,
}

fn grow_tree(spec: &PhantomSpec, geo: &GridGeometry, rng: &mut ChaCha8Rng) -> Result<Vec<Segment>> {
    let m = spec.margin();
    let r = spec.vessel_radius;
    let clearance = ball(2.0 * r + 1.0);
    // Steps of a new segment allowed to come close to existing tubes.
    let exempt = (2.0 * r).ceil() as usize + 2;
    let mut claimed = vec![false; geo.len()];

    let root = spec.root;
    let (axis, sign) = (0..3)
        .flat_map(|a| [(a, 1isize), (a, -1isize)])
        .max_by_key(|&(a, s)| {
            let room = if s > 0 { spec.dims[a] - 1 - root[a] } else { root[a] };
            // Prefer lower axes and the positive direction on ties.
            (room, Reverse(a), s)
        })
        .expect("three axes");

    let mut queue = VecDeque::from([Pending {
        start: root,
        axis,
        sign,
        parent: None,
        include_start: true,
    }]);
    let mut segments: Vec<Segment> = Vec::new();
    let in_bounds = |p: [isize; 3]| (0..3).all(|a| p[a] >= m as isize && p[a] + (m as isize) < spec.dims[a] as isize);

    while let Some(job) = queue.pop_front() {
        let mut placed = None;
        'attempt: for attempt in 0..MAX_RETRIES {
            // After half the attempts, also try the other perpendicular axis.
            let axis = match job.parent {
                Some(parent) if attempt >= MAX_RETRIES / 2 => {
                    let parent_axis = segment_axis(&segments[parent]);
                    (0..3).find(|&a| a != parent_axis && a != job.axis).unwrap_or(job.axis)
                }
                _ => job.axis,
            };
            let len = rng.random_range(spec.branch_length_range.0..=spec.branch_length_range.1);
            let mut p = job.start.map(|c| c as isize);
            let mut points = Vec::with_capacity(len + 1);
            if job.include_start {
                points.push(job.start);
            }
            for step in 0..len {
                p[axis] += job.sign;
                if rng.random_bool(spec.tortuosity) {
                    let side = (axis + rng.random_range(1..3)) % 3;
                    p[side] += if rng.random_bool(0.5) { 1 } else { -1 };
                }
                if !in_bounds(p) {
                    continue 'attempt;
                }
                let q = p.map(|c| c as usize);
                if step >= exempt && claimed[geo.index(q[0], q[1], q[2])] {
                    continue 'attempt;
                }
                points.push(q);
            }
            placed = Some((axis, points));
            break;
        }
        let Some((axis, points)) = placed else {
            return Err(Error::Degenerate(format!(
                "could not place tree segment {} inside {:?} after {MAX_RETRIES} attempts; \
                 use a larger grid, shorter branches or fewer branches",
                segments.len() + 1,
                spec.dims
            )));
        };
        for &q in &points {
            stamp(&mut claimed, geo, q, &clearance);
        }
        let end = *points.last().expect("segment has points");
        let id = segments.len();
        segments.push(Segment {
            parent: job.parent,
            points,
        });
        for sign in [1isize, -1] {
            if segments.len() + queue.len() >= spec.branches {
                break;
            }
            let side = (axis + rng.random_range(1..3)) % 3;
            queue.push_back(Pending {
                start: end,
                axis: side,
                sign,
                parent: Some(id),
                include_start: false,
            });
        }
    }
    Ok(segments)
}

/// Dominant axis of a segment's displacement.
fn segment_axis(seg: &Segment) -> usize {
    let a = seg.points[0];
    let b = *seg.points.last().unwrap();
    (0..3).max_by_key(|&i| a[i].abs_diff(b[i])).unwrap()
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// 26-connected shortest path lengths (mm) from `source` through voxels in
/// `allowed`; `+inf` elsewhere.
fn geodesic(geo: &GridGeometry, allowed: &[bool], source: usize) -> Vec<f64> {
    let steps: Vec<([isize; 3], f64)> = Connectivity::TwentySix
        .offsets()
        .into_iter()
        .map(|d| {
            let l = (0..3)
                .map(|a| (d[a] as f64 * geo.spacing[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            (d, l)
        })
        .collect();
    let mut dist = vec![f64::INFINITY; geo.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((Key(0.0), source)));
    while let Some(Reverse((Key(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        let pos = geo.coords(u);
        for &(off, len) in &steps {
            if let Some(v) = geo.offset(pos, off) {
                if allowed[v] && d + len < dist[v] {
                    dist[v] = d + len;
                    heap.push(Reverse((Key(d + len), v)));
                }
            }
        }
    }
    dist
}

/// Builds the phantom described by `spec`. Deterministic for a given spec.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomBundle> {
    spec.validate()?;
    let geo = GridGeometry::with_spacing(spec.dims, spec.spacing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let segments = grow_tree(spec, &geo, &mut rng)?;

    let tube_ball = ball(spec.vessel_radius);
    let mut tube = vec![false; geo.len()];
    let mut centerline = Vec::new();
    for seg in &segments {
        for &p in &seg.points {
            stamp(&mut tube, &geo, p, &tube_ball);
            centerline.push(p);
        }
    }
    let mask = BinaryMask::from_fn(geo.clone(), |[i, j, k]| tube[geo.index(i, j, k)]);

    let root = geo.index(spec.root[0], spec.root[1], spec.root[2]);
    let centre = BinaryMask::from_indices(geo.clone(), centerline.iter().map(|&[i, j, k]| geo.index(i, j, k)));
    let on_tree = centre.data().iter().map(|&c| c != 0).collect::<Vec<_>>();
    let along_tree = geodesic(&geo, &on_tree, root);
    let (d_centre, n_centre) = distance_transform(&centre);
    let in_tube: Vec<f64> = (0..geo.len()).map(|i| along_tree[n_centre[i]] + d_centre[i]).collect();
    let (d_tube, n_tube) = distance_transform(&mask);
    let lambda = 1.0 / DEFAULT_EPSILON;
    let arrival: Vec<f32> = (0..geo.len())
        .map(|i| {
            if tube[i] {
                in_tube[i] as f32
            } else {
                (in_tube[n_tube[i]] + lambda * d_tube[i]) as f32
            }
        })
        .collect();

    // Noise comes from its own stream so it does not depend on how many
    // attempts the tree needed.
    let mut noise = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    noise.set_stream(1);
    let sigma = spec.noise_sigma;
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        if sigma > 0.0 {
            sigma * Distribution::<f64>::sample(&StandardNormal, rng)
        } else {
            0.0
        }
    };
    let ct64: Vec<f64> = (0..geo.len())
        .map(|_| spec.tissue_intensity + draw(&mut noise))
        .collect();
    let cta: Vec<f32> = ct64
        .iter()
        .zip(&tube)
        .map(|(&c, &t)| {
            let boost = if t { spec.contrast_intensity } else { 0.0 };
            (c + boost + draw(&mut noise)) as f32
        })
        .collect();
    let ct: Vec<f32> = ct64.iter().map(|&c| c as f32).collect();

    Ok(PhantomBundle {
        ct: ScalarVolume::new(geo.clone(), ct)?,
        cta: ScalarVolume::new(geo.clone(), cta)?,
        true_vessel_mask: mask,
        true_centerline: SeedSet::new(geo.clone(), centerline)?,
        true_arrival: ScalarVolume::new(geo, arrival)?,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomSpec {
        PhantomSpec {
            dims: [48, 48, 48],
            root: default_root([48, 48, 48]),
            branches: 5,
            branch_length_range: (10, 16),
            noise_sigma: 0.0,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn straight_tube_contrast_is_exact() {
        let spec = PhantomSpec {
            branches: 1,
            tortuosity: 0.0,
            ..small()
        };
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(b.segments.len(), 1);
        let pts = &b.segments[0].points;
        assert_eq!(pts[0], spec.root);
        assert!(pts.windows(2).all(|w| w[1][2] == w[0][2] + 1 && w[1][0] == w[0][0]));
        for idx in 0..b.ct.len() {
            let diff = b.cta.data()[idx] - b.ct.data()[idx];
            let want = if b.true_vessel_mask.is_set(idx) { 300.0 } else { 0.0 };
            assert_eq!(diff, want);
        }
        // Straight tube: arrival along the axis is the distance in mm.
        for (n, &[i, j, k]) in pts.iter().enumerate() {
            assert!((b.true_arrival.get(i, j, k) - n as f32).abs() < 1e-4);
        }
    }

    #[test]
    fn arrival_ground_truth() {
        let b = generate_phantom(&small()).unwrap();
        assert_eq!(b.segments.len(), 5);
        let [ri, rj, rk] = small().root;
        assert_eq!(b.true_arrival.get(ri, rj, rk), 0.0);
        for seg in &b.segments {
            let t: Vec<f32> = seg
                .points
                .iter()
                .map(|&[i, j, k]| b.true_arrival.get(i, j, k))
                .collect();
            assert!(t.windows(2).all(|w| w[1] > w[0]), "not increasing: {t:?}");
        }
        // Tissue is slower than any tube voxel and grows with distance.
        let tube_max = b
            .true_vessel_mask
            .indices()
            .map(|i| b.true_arrival.data()[i])
            .fold(0.0f32, f32::max);
        for idx in 0..b.ct.len() {
            let t = b.true_arrival.data()[idx];
            assert!(t.is_finite() && t >= 0.0);
            if !b.true_vessel_mask.is_set(idx) {
                assert!(t > 999.0 || t > tube_max);
            }
        }
        assert!(b.true_centerline.to_mask().is_subset_of(&b.true_vessel_mask));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = PhantomSpec {
            noise_sigma: 6.0,
            ..small()
        };
        let a = generate_phantom(&spec).unwrap();
        assert_eq!(a, generate_phantom(&spec).unwrap());
        let other = generate_phantom(&PhantomSpec { rng_seed: 7, ..spec }).unwrap();
        assert_ne!(a.ct, other.ct);
    }

    #[test]
    fn cta_above_ct_without_noise() {
        let b = generate_phantom(&small()).unwrap();
        for idx in b.true_vessel_mask.indices() {
            assert!(b.cta.data()[idx] >= b.ct.data()[idx]);
        }
    }

    #[test]
    fn tubes_stay_in_bounds() {
        let spec = PhantomSpec::default();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(b.segments.len(), 7);
        let m = spec.margin();
        for &[i, j, k] in b.true_centerline.voxels() {
            for (c, n) in [(i, 96), (j, 96), (k, 96)] {
                assert!(c >= m && c + m < n);
            }
        }
    }

    #[test]
    fn validation_and_failure() {
        let bad = [
            PhantomSpec { branches: 0, ..small() },
            PhantomSpec {
                vessel_radius: 0.5,
                ..small()
            },
            PhantomSpec {
                contrast_intensity: 0.0,
                ..small()
            },
            PhantomSpec {
                noise_sigma: -1.0,
                ..small()
            },
            PhantomSpec {
                tortuosity: 1.5,
                ..small()
            },
            PhantomSpec {
                root: [1, 24, 24],
                ..small()
            },
            PhantomSpec {
                branch_length_range: (5, 3),
                ..small()
            },
        ];
        for spec in bad {
            assert!(matches!(generate_phantom(&spec), Err(Error::Parameter(_))), "{spec:?}");
        }
        let cramped = PhantomSpec {
            dims: [16, 16, 16],
            root: [8, 8, 4],
            branch_length_range: (30, 40),
            ..small()
        };
        assert!(matches!(generate_phantom(&cramped), Err(Error::Degenerate(_))));
    }

    #[test]
    fn kv_round_trip() {
        let spec = PhantomSpec {
            dims: [40, 50, 60],
            root: [20, 25, 5],
            noise_sigma: 1.5,
            rng_seed: 9,
            ..PhantomSpec::default()
        };
        assert_eq!(PhantomSpec::from_kv(&spec.to_kv()).unwrap(), spec);
        let s = PhantomSpec::from_kv("dims=64,64,64 branches=3").unwrap();
        assert_eq!(s.root, default_root([64, 64, 64]));
        assert!(PhantomSpec::from_kv("colour=red").is_err());
        for key in PhantomSpec::KEYS {
            assert!(spec.to_kv().contains(&format!("{key}=")));
        }
    }

    #[test]
    fn saves_files() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate_phantom(&PhantomSpec { branches: 1, ..small() }).unwrap();
        b.save(dir.path()).unwrap();
        for f in [
            "ct.nii.gz",
            "cta.nii.gz",
            "true_vessel_mask.nii.gz",
            "true_arrival.nii.gz",
            "centerline.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = crate::volume::load_nifti(dir.path().join("true_arrival.nii.gz")).unwrap();
        assert_eq!(back.data(), b.true_arrival.data());
    }
}
