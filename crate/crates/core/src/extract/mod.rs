//! Differentiation-free surface extraction.
//!
//! The field is evaluated on a regular lattice (one forward pass per
//! lattice point, chunked and parallel). Edges whose endpoint directions
//! oppose each other mark sign changes; a breadth-first flood assigns a
//! pseudo-sign to every lattice point, and marching cubes runs on the
//! signed distances. Because direction comes straight from the predicted
//! vectors, no backward pass and no finite-difference probe ever runs —
//! the structural counters stay at zero.
//!
//! Open surfaces cannot be globally signed; the flood then produces vote
//! conflicts somewhere off-surface (reported as a diagnostic) and cells are
//! only meshed where an opposing-direction edge witnesses a real crossing,
//! which keeps those artifacts out of the mesh.

mod tables;

pub use tables::{crossed_edges, CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use crate::error::{NvfError, Result};
use crate::geom::{TriangleMesh, Vec3, PADDED_HALF};
use crate::model::{infer_batch, FeaturedCloud, VectorFieldModel};
use crate::numeric::Real;

/// Extraction knobs. Defaults: flip threshold -0.5, near-surface gate at
/// 2x the cell diagonal, flip votes dominating parallel votes.
#[derive(Debug, Clone)]
pub struct ExtractParams {
    /// An edge flips when the endpoint directions' dot product is below
    /// this.
    pub tau_flip: f64,
    /// Both endpoints must be within this multiple of the cell diagonal of
    /// the surface for the edge to count as flipping.
    pub near_surface_factor: f64,
    /// Weight of a flip-edge vote relative to a parallel-edge vote during
    /// the sign flood. Must exceed 6 so one witnessed crossing beats every
    /// parallel neighbor.
    pub flip_vote_weight: f64,
    /// Lattice points per axis.
    pub resolution: usize,
    /// Lattice points evaluated per forward batch.
    pub chunk_size: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            tau_flip: -0.5,
            near_surface_factor: 2.0,
            flip_vote_weight: 8.0,
            resolution: 256,
            chunk_size: 16384,
        }
    }
}

impl ExtractParams {
    pub fn with_resolution(resolution: usize) -> Self {
        ExtractParams { resolution, ..ExtractParams::default() }
    }
}

/// Regular grid of sampled displacement vectors over the padded cube.
/// Distance and direction are derived per point from the stored vector.
#[derive(Debug, Clone)]
pub struct LatticeField {
    pub dims: [usize; 3],
    pub min: Vec3,
    pub max: Vec3,
    /// Row-major with x fastest: index = x + nx*(y + ny*z).
    pub vectors: Vec<[f32; 3]>,
}

impl LatticeField {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let t = |i: usize, n: usize, lo: f64, hi: f64| {
            lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
        };
        Vec3::new(
            t(x, self.dims[0], self.min.x, self.max.x),
            t(y, self.dims[1], self.min.y, self.max.y),
            t(z, self.dims[2], self.min.z, self.max.z),
        )
    }

    /// Unsigned distance at lattice index `i`: the norm of the stored
    /// displacement.
    #[inline]
    pub fn distance(&self, i: usize) -> f64 {
        let [x, y, z] = self.vectors[i];
        ((x as f64) * (x as f64) + (y as f64) * (y as f64) + (z as f64) * (z as f64)).sqrt()
    }

    /// Unit direction at lattice index `i`; `None` on the surface.
    #[inline]
    pub fn direction(&self, i: usize) -> Option<Vec3> {
        let [x, y, z] = self.vectors[i];
        Vec3::new(x as f64, y as f64, z as f64).normalized()
    }

    pub fn cell_size(&self) -> Vec3 {
        Vec3::new(
            (self.max.x - self.min.x) / (self.dims[0] - 1) as f64,
            (self.max.y - self.min.y) / (self.dims[1] - 1) as f64,
            (self.max.z - self.min.z) / (self.dims[2] - 1) as f64,
        )
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().norm()
    }

    /// Builds a lattice by evaluating `f` at every lattice position.
    /// Used to drive the extractor with analytic fields.
    pub fn from_fn(resolution: usize, f: impl Fn(Vec3) -> Vec3 + Sync) -> Result<LatticeField> {
        if resolution < 2 {
            return Err(NvfError::invalid("lattice needs at least 2 points per axis"));
        }
        let dims = [resolution; 3];
        let min = Vec3::splat(-PADDED_HALF);
        let max = Vec3::splat(PADDED_HALF);
        let mut field = LatticeField { dims, min, max, vectors: vec![[0.0; 3]; 0] };
        let n = dims[0] * dims[1] * dims[2];
        let vectors: Vec<[f32; 3]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let [x, y, z] = field.coords(i);
                let d = f(field.position(x, y, z));
                [d.x as f32, d.y as f32, d.z as f32]
            })
            .collect();
        field.vectors = vectors;
        Ok(field)
    }

    /// Flipping-edge predicate between two lattice indices: directions
    /// oppose beyond `tau_flip` and both points sit near the surface.
    /// Symmetric in its arguments.
    pub fn edge_flips(&self, a: usize, b: usize, params: &ExtractParams) -> bool {
        let gate = params.near_surface_factor * self.cell_diagonal();
        if self.distance(a) >= gate || self.distance(b) >= gate {
            return false;
        }
        match (self.direction(a), self.direction(b)) {
            (Some(da), Some(db)) => da.dot(db) < params.tau_flip,
            // A point exactly on the surface always witnesses a crossing.
            _ => true,
        }
    }
}

/// Evaluates the model on a `resolution`^3 lattice over the padded cube.
/// One forward per lattice point, chunked; chunking does not change values.
pub fn evaluate_lattice<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    params: &ExtractParams,
) -> Result<LatticeField> {
    if model.config.output_dim != 3 {
        return Err(NvfError::invalid("lattice evaluation needs a vector-field model"));
    }
    if params.resolution < 8 {
        return Err(NvfError::invalid("extraction resolution must be at least 8"));
    }
    let dims = [params.resolution; 3];
    let min = Vec3::splat(-PADDED_HALF);
    let max = Vec3::splat(PADDED_HALF);
    let template = LatticeField { dims, min, max, vectors: Vec::new() };
    let n = dims[0] * dims[1] * dims[2];
    let chunk = params.chunk_size.max(1);

    let mut vectors = vec![[0.0f32; 3]; n];
    let results: Result<Vec<()>> = vectors
        .par_chunks_mut(chunk)
        .enumerate()
        .map(|(ci, out)| {
            let start = ci * chunk;
            let queries: Vec<Vec3> = (start..start + out.len())
                .map(|i| {
                    let [x, y, z] = template.coords(i);
                    template.position(x, y, z)
                })
                .collect();
            let pred = infer_batch(model, fcloud, &queries)?;
            for (row, slot) in pred.outer_iter().zip(out.iter_mut()) {
                *slot = [row[0].as_f32(), row[1].as_f32(), row[2].as_f32()];
            }
            Ok(())
        })
        .collect();
    results?;

    Ok(LatticeField { dims, min, max, vectors })
}

/// Pseudo-signs for every lattice point plus flood diagnostics.
#[derive(Debug, Clone)]
pub struct PseudoSignGrid {
    /// +1 or -1 per lattice point.
    pub signs: Vec<i8>,
    /// Agreeing votes observed when each point was assigned.
    pub confidence: Vec<u32>,
    /// Points whose incident votes disagreed. Nonzero is expected for open
    /// surfaces, which admit no globally consistent sign.
    pub conflicts: usize,
    /// Lattice index the flood started from (global distance maximum).
    pub seed: usize,
}

/// Assigns a pseudo-sign to every lattice point by breadth-first flood from
/// the farthest point (assigned +1). Each new point takes the weighted
/// majority over its already-assigned neighbors: a parallel edge votes the
/// neighbor's sign, a flipping edge votes the opposite, and flip votes
/// carry `flip_vote_weight`. Ties keep the earliest-assigned neighbor's
/// vote.
pub fn assign_pseudo_signs(field: &LatticeField, params: &ExtractParams) -> PseudoSignGrid {
    let n = field.len();
    let [nx, ny, nz] = field.dims;
    let mut signs = vec![0i8; n];
    let mut confidence = vec![0u32; n];
    let mut assigned_at = vec![u32::MAX; n];
    let mut conflicts = 0usize;

    // Global max-distance lattice point, ties to the lowest index.
    let mut seed = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let d = field.distance(i);
        if d > best {
            best = d;
            seed = i;
        }
    }

    let neighbor = |i: usize, axis: usize, dir: isize| -> Option<usize> {
        let [x, y, z] = field.coords(i);
        let mut c = [x as isize, y as isize, z as isize];
        c[axis] += dir;
        let lims = [nx as isize, ny as isize, nz as isize];
        if c[axis] < 0 || c[axis] >= lims[axis] {
            None
        } else {
            Some(field.index(c[0] as usize, c[1] as usize, c[2] as usize))
        }
    };

    signs[seed] = 1;
    assigned_at[seed] = 0;
    let mut stamp = 1u32;
    let mut queue = VecDeque::new();
    queue.push_back(seed);

    while let Some(p) = queue.pop_front() {
        for axis in 0..3 {
            for dir in [-1isize, 1] {
                let Some(nb) = neighbor(p, axis, dir) else { continue };
                if signs[nb] != 0 {
                    continue;
                }
                // Weighted vote over all already-assigned neighbors of nb.
                let mut score = 0.0f64;
                let mut agree_pos = 0u32;
                let mut agree_neg = 0u32;
                let mut earliest: Option<(u32, i8)> = None;
                for a2 in 0..3 {
                    for d2 in [-1isize, 1] {
                        let Some(m) = neighbor(nb, a2, d2) else { continue };
                        if signs[m] == 0 {
                            continue;
                        }
                        let flips = field.edge_flips(nb, m, params);
                        let vote = if flips { -signs[m] } else { signs[m] };
                        let weight =
                            if flips { params.flip_vote_weight } else { 1.0 };
                        score += weight * vote as f64;
                        if vote > 0 {
                            agree_pos += 1;
                        } else {
                            agree_neg += 1;
                        }
                        match earliest {
                            Some((t, _)) if assigned_at[m] >= t => {}
                            _ => earliest = Some((assigned_at[m], vote)),
                        }
                    }
                }
                let sign = if score > 0.0 {
                    1
                } else if score < 0.0 {
                    -1
                } else {
                    earliest.map(|(_, v)| v).unwrap_or(1)
                };
                if agree_pos > 0 && agree_neg > 0 {
                    conflicts += 1;
                }
                signs[nb] = sign;
                confidence[nb] = if sign > 0 { agree_pos } else { agree_neg };
                assigned_at[nb] = stamp;
                stamp += 1;
                queue.push_back(nb);
            }
        }
    }

    PseudoSignGrid { signs, confidence, conflicts, seed }
}

/// Marching cubes over the pseudo-signed distances `s_i * d_i`.
///
/// Only cells witnessing a direction flip on at least one edge are meshed:
/// a sign change without an opposing-direction edge is a flood artifact,
/// not a surface crossing. Vertices interpolate at t = d_i / (d_i + d_j)
/// along each crossing edge and are shared between cells, so closed
/// surfaces come out watertight and open sheets keep their boundaries.
pub fn marching_cubes(
    field: &LatticeField,
    signs: &PseudoSignGrid,
    params: &ExtractParams,
) -> TriangleMesh {
    let [nx, ny, nz] = field.dims;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(u32, u32), u32> = HashMap::new();

    let mut corner_lin = [0usize; 8];
    let mut corner_val = [0.0f64; 8];

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let mut case = 0usize;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    let lin = field.index(x + off[0], y + off[1], z + off[2]);
                    corner_lin[c] = lin;
                    corner_val[c] = signs.signs[lin] as f64 * field.distance(lin);
                    if corner_val[c] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                // Require a witnessed crossing: some cell edge must flip.
                let mut witnessed = false;
                for [a, b] in EDGE_CORNERS {
                    if field.edge_flips(corner_lin[a], corner_lin[b], params) {
                        witnessed = true;
                        break;
                    }
                }
                if !witnessed {
                    continue;
                }

                let row = &TRI_TABLE[case];
                let ntri = row.iter().take_while(|&&e| e >= 0).count();
                let mut cell_vertex = [u32::MAX; 12];
                for &e in &row[..ntri] {
                    let e = e as usize;
                    if cell_vertex[e] != u32::MAX {
                        continue;
                    }
                    let [ca, cb] = EDGE_CORNERS[e];
                    let (la, lb) = (corner_lin[ca], corner_lin[cb]);
                    let key = (la.min(lb) as u32, la.max(lb) as u32);
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let da = field.distance(la);
                        let db = field.distance(lb);
                        let t = if da + db < 1e-12 { 0.5 } else { da / (da + db) };
                        let [ax, ay, az] = field.coords(la);
                        let [bx, by, bz] = field.coords(lb);
                        let pa = field.position(ax, ay, az);
                        let pb = field.position(bx, by, bz);
                        let v = pa + (pb - pa) * t;
                        vertices.push(v);
                        (vertices.len() - 1) as u32
                    });
                    cell_vertex[e] = id;
                }
                for tri in row[..ntri].chunks(3) {
                    let ids = [
                        cell_vertex[tri[0] as usize],
                        cell_vertex[tri[1] as usize],
                        cell_vertex[tri[2] as usize],
                    ];
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        triangles.push(ids);
                    }
                }
            }
        }
    }

    TriangleMesh { vertices, triangles }
}

/// End-to-end extraction: evaluate the lattice, assign pseudo-signs, run
/// marching cubes. The whole pipeline performs zero backward passes and
/// zero finite-difference probes.
pub fn extract<F: Real>(
    model: &VectorFieldModel<F>,
    fcloud: &FeaturedCloud<F>,
    params: &ExtractParams,
) -> Result<TriangleMesh> {
    let field = evaluate_lattice(model, fcloud, params)?;
    let signs = assign_pseudo_signs(&field, params);
    Ok(marching_cubes(&field, &signs, params))
}
