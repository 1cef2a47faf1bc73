//! Point-to-face lookup on closed spherical meshes.
//!
//! Candidates come from a fixed-resolution directional grid over face
//! centroids, checked by central (gnomonic) ray-triangle containment, with an
//! exhaustive scan as the fallback. Correctness over micro-optimization: the
//! neural path never calls this.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{SphericalMesh, UnitPoint};

/// Weights this far below zero still count as inside (shared-edge queries).
const WEIGHT_TOL: f64 = 1e-9;
/// Relaxed bound used only by the exhaustive fallback.
const FALLBACK_TOL: f64 = 1e-6;

const Z_BANDS: usize = 16;
const LON_CELLS: usize = 32;

#[derive(Clone, Debug)]
struct FaceData {
    v0: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    /// Face normal oriented so that `normal . v0 > 0`.
    normal: Vector3<f64>,
    /// Plane offset `normal . v0`.
    offset: f64,
    d00: f64,
    d01: f64,
    d11: f64,
    inv_denom: f64,
}

/// Spatial index over face centroids for `locate` queries.
#[derive(Clone, Debug)]
pub struct FaceLocator {
    faces: Vec<FaceData>,
    cells: Vec<Vec<u32>>,
}

impl FaceLocator {
    pub fn new(mesh: &SphericalMesh) -> Self {
        let mut faces = Vec::with_capacity(mesh.face_count());
        let mut cells = vec![Vec::new(); Z_BANDS * LON_CELLS];
        for fi in 0..mesh.face_count() {
            let [v0, v1, v2] = mesh.face_vertices(fi);
            let e1 = v1 - v0;
            let e2 = v2 - v0;
            let mut normal = e1.cross(&e2);
            if normal.dot(&v0) < 0.0 {
                normal = -normal;
            }
            let d00 = e1.dot(&e1);
            let d01 = e1.dot(&e2);
            let d11 = e2.dot(&e2);
            let denom = d00 * d11 - d01 * d01;
            faces.push(FaceData {
                v0,
                e1,
                e2,
                normal,
                offset: normal.dot(&v0),
                d00,
                d01,
                d11,
                inv_denom: 1.0 / denom,
            });
            let centroid = (v0 + v1 + v2).normalize();
            cells[cell_index(&centroid)].push(fi as u32);
        }
        Self { faces, cells }
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Finds the face whose central projection contains `query`, returning
    /// the face index and clamped, renormalized barycentric weights.
    pub fn locate(&self, query: &UnitPoint) -> Result<(usize, [f64; 3])> {
        let q = query.vector();
        let (band, lon) = cell_coords(&q);
        let max_ring = Z_BANDS.max(LON_CELLS / 2 + 1);
        for ring in 0..=max_ring {
            let mut hit: Option<(usize, [f64; 3])> = None;
            self.for_ring_cells(band, lon, ring, |cell| {
                if hit.is_some() {
                    return;
                }
                for &fi in &self.cells[cell] {
                    if let Some(w) = self.test_face(fi as usize, &q, WEIGHT_TOL) {
                        hit = Some((fi as usize, w));
                        return;
                    }
                }
            });
            if let Some((fi, w)) = hit {
                return Ok((fi, clamp_weights(w)));
            }
        }
        // Exhaustive fallback with a relaxed tolerance.
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for fi in 0..self.faces.len() {
            if let Some(w) = self.test_face(fi, &q, FALLBACK_TOL) {
                let min_w = w[0].min(w[1]).min(w[2]);
                if best.map_or(true, |(_, _, m)| min_w > m) {
                    best = Some((fi, w, min_w));
                }
            }
        }
        match best {
            Some((fi, w, _)) => Ok((fi, clamp_weights(w))),
            None => Err(Error::MeshNotClosed(format!(
                "no face contains the ray through ({}, {}, {})",
                q.x, q.y, q.z
            ))),
        }
    }

    /// Ray-plane intersection and barycentric containment test.
    fn test_face(&self, fi: usize, q: &Vector3<f64>, tol: f64) -> Option<[f64; 3]> {
        let f = &self.faces[fi];
        let nq = f.normal.dot(q);
        if nq <= 1e-15 {
            return None;
        }
        let t = f.offset / nq;
        let x = q * t;
        let dp = x - f.v0;
        let d20 = dp.dot(&f.e1);
        let d21 = dp.dot(&f.e2);
        let wb = (f.d11 * d20 - f.d01 * d21) * f.inv_denom;
        let wc = (f.d00 * d21 - f.d01 * d20) * f.inv_denom;
        let wa = 1.0 - wb - wc;
        if wa >= -tol && wb >= -tol && wc >= -tol {
            Some([wa, wb, wc])
        } else {
            None
        }
    }

    /// Visits the cells at Chebyshev distance exactly `ring` from
    /// `(band, lon)`; longitude wraps, bands clamp.
    fn for_ring_cells(&self, band: usize, lon: usize, ring: usize, mut visit: impl FnMut(usize)) {
        if ring == 0 {
            visit(band * LON_CELLS + lon);
            return;
        }
        let r = ring as isize;
        let b = band as isize;
        let l = lon as isize;
        for db in -r..=r {
            let bb = b + db;
            if bb < 0 || bb >= Z_BANDS as isize {
                continue;
            }
            let on_band_edge = db.abs() == r;
            for dl in -r..=r {
                if !on_band_edge && dl.abs() != r {
                    continue;
                }
                if dl.abs() > LON_CELLS as isize / 2 {
                    continue;
                }
                let ll = (l + dl).rem_euclid(LON_CELLS as isize);
                visit(bb as usize * LON_CELLS + ll as usize);
            }
        }
    }
}

fn cell_coords(p: &Vector3<f64>) -> (usize, usize) {
    let band = (((p.z + 1.0) / 2.0 * Z_BANDS as f64) as isize).clamp(0, Z_BANDS as isize - 1);
    let lon = (((p.y.atan2(p.x) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
        * LON_CELLS as f64) as isize)
        .clamp(0, LON_CELLS as isize - 1);
    (band as usize, lon as usize)
}

fn cell_index(p: &Vector3<f64>) -> usize {
    let (band, lon) = cell_coords(p);
    band * LON_CELLS + lon
}

fn clamp_weights(mut w: [f64; 3]) -> [f64; 3] {
    for x in &mut w {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}
