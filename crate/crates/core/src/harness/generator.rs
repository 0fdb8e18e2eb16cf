//! Procedural fixtures with known precedence structure.
//!
//! All parts are unions of axis-aligned boxes laid out on a millimetre grid
//! and separated by at least `gap_mm`. Every assembly rests on a support
//! slab that stays in place as a permanent obstacle.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blueprint::Blueprint;
use crate::error::{Error, Result};
use crate::geometry::{rectilinear_union, Pose, TriMesh};

pub const MIN_PARTS: usize = 2;
pub const MAX_PARTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Stack,
    PegBoard,
    ScrewWasherPlate,
    BoxInsert,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Stack, Family::PegBoard, Family::ScrewWasherPlate, Family::BoxInsert];

    pub fn name(self) -> &'static str {
        match self {
            Family::Stack => "stack",
            Family::PegBoard => "peg-board",
            Family::ScrewWasherPlate => "screw-washer-plate",
            Family::BoxInsert => "box-insert",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown generator family '{s}'")))
    }
}

/// Dimensional ranges, in millimetres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dimensions {
    pub gap_mm: i64,
    pub wall_mm: i64,
    /// Cross-section of pegs, screws and inserts.
    pub feature_mm: (i64, i64),
    /// Heights of exposed heads, bands and inserts.
    pub height_mm: (i64, i64),
}

impl Default for Dimensions {
    fn default() -> Self {
        Self {
            gap_mm: 3,
            wall_mm: 10,
            feature_mm: (10, 20),
            height_mm: (12, 24),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlueprintSpec {
    pub family: Family,
    pub num_parts: usize,
    #[serde(default)]
    pub dims: Dimensions,
    pub seed: u64,
}

impl BlueprintSpec {
    pub fn new(family: Family, num_parts: usize, seed: u64) -> Self {
        Self {
            family,
            num_parts,
            dims: Dimensions::default(),
            seed,
        }
    }

    pub fn id(&self) -> String {
        format!("{}-{}-{:016x}", self.family, self.num_parts, self.seed)
    }
}

type Cuboid = ([i64; 3], [i64; 3]);

fn cuboid(lo: [i64; 3], size: [i64; 3]) -> Cuboid {
    (lo, [lo[0] + size[0], lo[1] + size[1], lo[2] + size[2]])
}

/// Box centred at `(cx, cy)` in the plane.
fn centered(cx: i64, cy: i64, z: i64, size: [i64; 3]) -> Cuboid {
    debug_assert!(size[0] % 2 == 0 && size[1] % 2 == 0);
    cuboid([cx - size[0] / 2, cy - size[1] / 2, z], size)
}

/// Block of outer size `size` with a centred rectangular pocket open at the top.
fn pocketed(cx: i64, cy: i64, z: i64, size: [i64; 3], pocket: [i64; 2], floor: i64) -> Vec<Cuboid> {
    let (x0, y0) = (cx - size[0] / 2, cy - size[1] / 2);
    let (x1, y1) = (x0 + size[0], y0 + size[1]);
    let (px0, py0) = (cx - pocket[0] / 2, cy - pocket[1] / 2);
    let (px1, py1) = (px0 + pocket[0], py0 + pocket[1]);
    let top = z + size[2];
    vec![
        ([x0, y0, z], [x1, y1, z + floor]),
        ([x0, y0, z + floor], [px0, y1, top]),
        ([px1, y0, z + floor], [x1, y1, top]),
        ([px0, y0, z + floor], [px1, py0, top]),
        ([px0, py1, z + floor], [px1, y1, top]),
    ]
}

/// Plate with centred blind holes of the given sizes at `(x, y)` positions.
fn drilled_plate(size: [i64; 3], z: i64, holes: &[(i64, i64, i64)], depth: i64) -> Vec<Cuboid> {
    // Decompose the plate into a floor below the holes and a layer with the
    // holes cut out along x-strips.
    let (x0, y0) = (-size[0] / 2, -size[1] / 2);
    let (x1, y1) = (x0 + size[0], y0 + size[1]);
    let top = z + size[2];
    let mid = top - depth;
    let mut out = vec![([x0, y0, z], [x1, y1, mid])];
    let mut xs: Vec<(i64, i64, i64, i64)> = holes
        .iter()
        .map(|&(hx, hy, a)| (hx - a / 2, hx + a / 2, hy - a / 2, hy + a / 2))
        .collect();
    xs.sort();
    let mut cursor = x0;
    for &(hx0, hx1, hy0, hy1) in &xs {
        if hx0 > cursor {
            out.push(([cursor, y0, mid], [hx0, y1, top]));
        }
        out.push(([hx0, y0, mid], [hx1, hy0, top]));
        out.push(([hx0, hy1, mid], [hx1, y1, top]));
        cursor = hx1;
    }
    if x1 > cursor {
        out.push(([cursor, y0, mid], [x1, y1, top]));
    }
    out
}

fn even(rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)) -> i64 {
    let lo = (lo + 1) / 2;
    2 * rng.random_range(lo..=(hi / 2).max(lo))
}

fn build_part(boxes: &[Cuboid]) -> Result<(TriMesh, Pose)> {
    let mm = |v: [i64; 3]| Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64) * 1e-3;
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for (a, b) in boxes {
        for k in 0..3 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    // Centre on the bounding box using whole (half-)millimetres.
    let center = mm([lo[0] + hi[0], lo[1] + hi[1], lo[2] + hi[2]]) * 0.5;
    let local: Vec<_> = boxes.iter().map(|(a, b)| (mm(*a) - center, mm(*b) - center)).collect();
    Ok((rectilinear_union(&local)?, Pose::from_translation(center)))
}

/// Support slab under the assembly, top face at z = 0.
fn support(parts: &[(TriMesh, Pose)]) -> Result<(TriMesh, Pose)> {
    let radius = parts
        .iter()
        .flat_map(|(m, p)| m.vertices().iter().map(move |v| p.transform_point(v).norm()))
        .fold(0.0, f64::max);
    // Wide enough to hold the staged parts next to the assembly.
    let half = 12.0 * radius + 0.1;
    let slab = TriMesh::cuboid(Vector3::new(2.0 * half, 2.0 * half, 0.02))?;
    Ok((slab, Pose::from_translation(Vector3::new(0.0, 0.0, -0.01))))
}

/// Builds a fixture. The same spec always yields bit-identical meshes.
pub fn generate_synthetic_assembly(spec: &BlueprintSpec) -> Result<Blueprint> {
    if !(MIN_PARTS..=MAX_PARTS).contains(&spec.num_parts) {
        return Err(Error::InvalidInput(format!(
            "part count {} outside {MIN_PARTS}..={MAX_PARTS}",
            spec.num_parts
        )));
    }
    let d = &spec.dims;
    if d.gap_mm < 1 || d.wall_mm < 2 || d.feature_mm.0 < 2 || d.feature_mm.0 > d.feature_mm.1 || d.height_mm.0 < 6 || d.height_mm.0 > d.height_mm.1 {
        return Err(Error::InvalidInput(format!("invalid dimension ranges {d:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let parts_boxes = match spec.family {
        Family::Stack => stack(spec.num_parts, d, &mut rng),
        Family::PegBoard => peg_board(spec.num_parts, d, &mut rng),
        Family::ScrewWasherPlate => screw_washer_plate(spec.num_parts, d, &mut rng),
        Family::BoxInsert => box_insert(spec.num_parts, d, &mut rng),
    };
    let parts = parts_boxes.iter().map(|b| build_part(b)).collect::<Result<Vec<_>>>()?;
    let table = support(&parts)?;
    let (meshes, poses): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    let mut bp = Blueprint::new(spec.id(), meshes, poses)?.with_environment(vec![table]);
    bp.family = Some(spec.family.name().to_string());
    bp.seed = Some(spec.seed);
    Ok(bp)
}

/// Nested pockets: each part sits in the pocket of the previous one and
/// sticks out above its rim.
fn stack(n: usize, d: &Dimensions, rng: &mut ChaCha8Rng) -> Vec<Vec<Cuboid>> {
    let (g, w) = (d.gap_mm, d.wall_mm);
    let shrink = 2 * (w + g);
    let base = 3 * d.feature_mm.1 + shrink * (n as i64 - 1);
    let mut size = [even(rng, (base, base + 40)), even(rng, (base, base + 40))];
    let mut z = g;
    let mut height = even(rng, (2 * w + 10, 2 * w + 30));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let last = i + 1 == n;
        let s3 = [size[0], size[1], height];
        if last {
            out.push(vec![centered(0, 0, z, s3)]);
            break;
        }
        let pocket = [size[0] - 2 * w, size[1] - 2 * w];
        out.push(pocketed(0, 0, z, s3, pocket, w));
        let exposed = even(rng, d.height_mm);
        let floor_top = z + w;
        let rim = z + height;
        z = floor_top + g;
        height = rim + exposed - z;
        if i + 2 < n {
            height = height.max(2 * w + 4);
        }
        size = [pocket[0] - 2 * g, pocket[1] - 2 * g];
    }
    out
}

/// Evenly spaced positions along x, symmetric about the origin.
fn row(count: usize, pitch: i64) -> Vec<i64> {
    (0..count as i64).map(|j| (2 * j - (count as i64 - 1)) * pitch / 2).collect()
}

/// Headed shaft standing in a hole: shaft from `bottom` up to `head_z`,
/// head above.
fn headed(cx: i64, shaft: i64, bottom: i64, head_z: i64, head: [i64; 3]) -> Vec<Cuboid> {
    vec![
        centered(cx, 0, bottom, [shaft, shaft, head_z - bottom]),
        centered(cx, 0, head_z, head),
    ]
}

/// A board with blind holes and one headed peg per hole.
fn peg_board(n: usize, d: &Dimensions, rng: &mut ChaCha8Rng) -> Vec<Vec<Cuboid>> {
    let g = d.gap_mm;
    let k = n - 1;
    let shafts: Vec<i64> = (0..k).map(|_| even(rng, d.feature_mm)).collect();
    let heads: Vec<i64> = shafts.iter().map(|s| s + even(rng, (16, 24))).collect();
    let head_h: Vec<i64> = (0..k).map(|_| even(rng, d.height_mm)).collect();
    let pitch = heads.iter().max().copied().unwrap_or(0) + 12;
    let thickness = even(rng, (30, 50));
    let depth = even(rng, (16, thickness - 10));
    let xs = row(k, pitch);
    let size = [k as i64 * pitch + 2 * d.wall_mm, even(rng, (pitch + 20, pitch + 60)), thickness];
    let holes: Vec<_> = xs.iter().zip(&shafts).map(|(&x, &s)| (x, 0, s + 2 * g)).collect();
    let mut out = vec![drilled_plate(size, g, &holes, depth)];
    let top = g + thickness;
    for j in 0..k {
        let bottom = top - depth + g;
        out.push(headed(xs[j], shafts[j], bottom, top + g, [heads[j], heads[j], head_h[j]]));
    }
    out
}

/// A plate with screws, some of which clamp a washer.
fn screw_washer_plate(n: usize, d: &Dimensions, rng: &mut ChaCha8Rng) -> Vec<Vec<Cuboid>> {
    let g = d.gap_mm;
    let k_screws = rng.random_range((n - 1).div_ceil(2)..=n - 1);
    let k_washers = n - 1 - k_screws;
    let shafts: Vec<i64> = (0..k_screws).map(|_| even(rng, d.feature_mm)).collect();
    let rings: Vec<i64> = (0..k_screws).map(|_| even(rng, (6, 10))).collect();
    let ring_h: Vec<i64> = (0..k_screws).map(|_| even(rng, (6, 10))).collect();
    let heads: Vec<i64> = shafts.iter().map(|s| s + even(rng, (16, 24))).collect();
    let head_h: Vec<i64> = (0..k_screws).map(|_| even(rng, d.height_mm)).collect();
    let outer: Vec<i64> = (0..k_screws)
        .map(|j| heads[j].max(shafts[j] + 2 * g + 2 * rings[j]))
        .collect();
    let pitch = outer.iter().max().copied().unwrap_or(0) + 12;
    let thickness = even(rng, (30, 50));
    let depth = even(rng, (16, thickness - 10));
    let xs = row(k_screws, pitch);
    let size = [k_screws as i64 * pitch + 2 * d.wall_mm, even(rng, (pitch + 20, pitch + 60)), thickness];
    let holes: Vec<_> = xs.iter().zip(&shafts).map(|(&x, &s)| (x, 0, s + 2 * g)).collect();
    let top = g + thickness;

    let mut out = vec![drilled_plate(size, g, &holes, depth)];
    for j in 0..k_washers {
        let hole = shafts[j] + 2 * g;
        let ring = [hole + 2 * rings[j], hole + 2 * rings[j], ring_h[j]];
        out.push(pocketed_ring(xs[j], top + g, ring, hole));
    }
    for j in 0..k_screws {
        let bottom = top - depth + g;
        let head_z = if j < k_washers { top + g + ring_h[j] + g } else { top + g };
        out.push(headed(xs[j], shafts[j], bottom, head_z, [heads[j], heads[j], head_h[j]]));
    }
    out
}

/// Square ring with a square through-hole.
fn pocketed_ring(cx: i64, z: i64, size: [i64; 3], hole: i64) -> Vec<Cuboid> {
    let (x0, y0) = (cx - size[0] / 2, -size[1] / 2);
    let (x1, y1) = (x0 + size[0], y0 + size[1]);
    let (h0, h1) = (cx - hole / 2, cx + hole / 2);
    let top = z + size[2];
    vec![
        ([x0, y0, z], [h0, y1, top]),
        ([h1, y0, z], [x1, y1, top]),
        ([h0, y0, z], [h1, -hole / 2, top]),
        ([h0, hole / 2, z], [h1, y1, top]),
    ]
}

/// An open box holding loose inserts, closed by a plugged lid.
fn box_insert(n: usize, d: &Dimensions, rng: &mut ChaCha8Rng) -> Vec<Vec<Cuboid>> {
    let (g, w) = (d.gap_mm, d.wall_mm);
    let k = n - 2;
    let spacing = 10;
    let inserts: Vec<[i64; 3]> = (0..k)
        .map(|_| {
            [
                even(rng, (2 * d.feature_mm.0, 2 * d.feature_mm.1)),
                even(rng, (2 * d.feature_mm.0, 2 * d.feature_mm.1)),
                even(rng, (d.height_mm.0 + 8, d.height_mm.1 + 16)),
            ]
        })
        .collect();
    let cavity_x = inserts.iter().map(|s| s[0]).sum::<i64>() + spacing * (k as i64 + 1);
    let cavity_x = cavity_x.max(4 * d.feature_mm.0);
    let cavity_y = inserts.iter().map(|s| s[1]).max().unwrap_or(2 * d.feature_mm.0) + 2 * spacing;
    let tallest = inserts.iter().map(|s| s[2]).max().unwrap_or(d.height_mm.0);
    let plug = even(rng, (8, 12));
    let lid_h = even(rng, (8, 12));
    let floor_top = g + w;
    let rim = floor_top + tallest + g + plug;
    let size = [cavity_x + 2 * w, cavity_y + 2 * w, rim - g];

    let mut out = vec![pocketed(0, 0, g, size, [cavity_x, cavity_y], w)];
    let mut x = -cavity_x / 2 + spacing;
    for s in &inserts {
        out.push(vec![cuboid([x, -s[1] / 2, floor_top + g], *s)]);
        x += s[0] + spacing;
    }
    out.push(vec![
        centered(0, 0, rim + g, [size[0], size[1], lid_h]),
        centered(0, 0, rim + g - plug, [cavity_x - 2 * g, cavity_y - 2 * g, plug]),
    ]);
    out
}
