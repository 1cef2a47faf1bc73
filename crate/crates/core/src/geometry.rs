//! Unit-sphere primitives: meshes, barycentric interpolation, simplex and
//! sphere sampling, and icosphere generation.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// Smallest vector norm accepted before renormalization.
const MIN_NORM: f64 = 1e-12;

/// Total sub-triangle area below which a face counts as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A point on the unit sphere, renormalized on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitPoint(Vector3<f64>);

impl UnitPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let n2 = v.norm_squared();
        if !n2.is_finite() || n2 < MIN_NORM * MIN_NORM {
            return Err(Error::DegenerateGeometry(format!(
                "cannot normalize vector with squared norm {n2}"
            )));
        }
        // Keep already-unit inputs bit-identical so text formats round-trip.
        if (n2 - 1.0).abs() <= 1e-12 {
            return Ok(Self(v));
        }
        Ok(Self(v / n2.sqrt()))
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// Triangle mesh with all vertices on the unit sphere.
///
/// Face indices are validated on construction; faces must be non-degenerate
/// (three distinct indices, positive planar area).
#[derive(Clone, Debug)]
pub struct SphericalMesh {
    vertices: Vec<UnitPoint>,
    faces: Vec<[usize; 3]>,
    face_areas: Vec<f64>,
    cumulative_areas: Vec<f64>,
}

impl SphericalMesh {
    pub fn new(vertices: Vec<UnitPoint>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        let mut face_areas = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f[0] >= nv || f[1] >= nv || f[2] >= nv {
                return Err(Error::Shape(format!(
                    "face {fi} references vertex out of range (vertex count {nv})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateGeometry(format!(
                    "face {fi} repeats a vertex index"
                )));
            }
            let [a, b, c] = [
                vertices[f[0]].vector(),
                vertices[f[1]].vector(),
                vertices[f[2]].vector(),
            ];
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area <= DEGENERATE_AREA {
                return Err(Error::DegenerateGeometry(format!(
                    "face {fi} has planar area {area}"
                )));
            }
            face_areas.push(area);
        }
        let mut cumulative_areas = Vec::with_capacity(face_areas.len());
        let mut acc = 0.0;
        for a in &face_areas {
            acc += a;
            cumulative_areas.push(acc);
        }
        Ok(Self {
            vertices,
            faces,
            face_areas,
            cumulative_areas,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[UnitPoint] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face(&self, index: usize) -> [usize; 3] {
        self.faces[index]
    }

    /// The three vertex positions of a face.
    pub fn face_vertices(&self, index: usize) -> [Vector3<f64>; 3] {
        let f = self.faces[index];
        [
            self.vertices[f[0]].vector(),
            self.vertices[f[1]].vector(),
            self.vertices[f[2]].vector(),
        ]
    }

    pub fn face_area(&self, index: usize) -> f64 {
        self.face_areas[index]
    }

    pub fn total_area(&self) -> f64 {
        *self.cumulative_areas.last().unwrap_or(&0.0)
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert(if a < b { (a, b) } else { (b, a) });
            }
        }
        edges.len()
    }

    /// V - E + F; equals 2 for closed genus-0 meshes.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64
    }

    /// Chord lengths of all undirected edges.
    pub fn edge_lengths(&self) -> Vec<f64> {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.insert(if a < b { (a, b) } else { (b, a) });
            }
        }
        edges
            .into_iter()
            .map(|(a, b)| (self.vertices[a].vector() - self.vertices[b].vector()).norm())
            .collect()
    }
}

/// A sampled point on a mesh face.
///
/// `planar_point` is the convex combination of the face's vertices and lies
/// inside the planar triangle, slightly off the sphere; `sphere_point` is its
/// radial projection back onto the sphere.
#[derive(Clone, Copy, Debug)]
pub struct BarycentricSample {
    pub face_index: usize,
    pub weights: [f64; 3],
    pub planar_point: Vector3<f64>,
    pub sphere_point: UnitPoint,
}

/// Area weights of the three sub-triangles spanned by `point` inside the
/// triangle `(p1, p2, p3)`, normalized to sum to 1.
///
/// For in-plane points this reproduces the analytic barycentric coordinates.
pub fn barycentric_weights(
    p1: &Vector3<f64>,
    p2: &Vector3<f64>,
    p3: &Vector3<f64>,
    point: &Vector3<f64>,
) -> Result<[f64; 3]> {
    let area = |a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>| -> f64 {
        0.5 * (b - a).cross(&(c - a)).norm()
    };
    let w1 = area(p2, p3, point);
    let w2 = area(p1, p3, point);
    let w3 = area(p1, p2, point);
    let total = w1 + w2 + w3;
    if total < DEGENERATE_AREA {
        return Err(Error::DegenerateGeometry(format!(
            "sub-triangle areas sum to {total}"
        )));
    }
    Ok([w1 / total, w2 / total, w3 / total])
}

/// Area-weighted average of the face's vertex features at `point`.
///
/// `point` must lie in (or numerically near) the plane of the face; interior
/// points yield non-negative weights summing to 1.
pub fn barycentric_interpolate(
    mesh: &SphericalMesh,
    feat: &FeatureMap,
    face_index: usize,
    point: &Vector3<f64>,
) -> Result<Vec<f64>> {
    if face_index >= mesh.face_count() {
        return Err(Error::Shape(format!(
            "face index {face_index} out of range ({} faces)",
            mesh.face_count()
        )));
    }
    if feat.rows() != mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "feature map has {} rows but mesh has {} vertices",
            feat.rows(),
            mesh.vertex_count()
        )));
    }
    let [p1, p2, p3] = mesh.face_vertices(face_index);
    let w = barycentric_weights(&p1, &p2, &p3, point)?;
    let f = mesh.face(face_index);
    let mut out = vec![0.0; feat.channels()];
    for (wi, vi) in w.iter().zip(f.iter()) {
        for (o, x) in out.iter_mut().zip(feat.row(*vi)) {
            *o += wi * x;
        }
    }
    Ok(out)
}

/// Uniform sample from the standard 2-simplex via sorted uniforms.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let mut u: f64 = rng.random();
    let mut v: f64 = rng.random();
    if u > v {
        std::mem::swap(&mut u, &mut v);
    }
    [u, v - u, 1.0 - v]
}

/// Draws `n_faces * n_points` training samples together with their
/// interpolated target features.
///
/// When `area_weighted` is set, faces are selected proportionally to planar
/// area so point density is uniform over the surface; otherwise faces are
/// uniform, matching a literal reading of "sample n_F faces".
pub fn sample_faces_and_points<R: Rng + ?Sized>(
    mesh: &SphericalMesh,
    feat: &FeatureMap,
    n_faces: usize,
    n_points: usize,
    area_weighted: bool,
    rng: &mut R,
) -> Result<Vec<(BarycentricSample, Vec<f64>)>> {
    if mesh.face_count() == 0 {
        return Err(Error::InvalidConfig("empty mesh".into()));
    }
    if n_faces == 0 || n_points == 0 {
        return Err(Error::InvalidConfig(
            "n_faces and n_points must be at least 1".into(),
        ));
    }
    if feat.rows() != mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "feature map has {} rows but mesh has {} vertices",
            feat.rows(),
            mesh.vertex_count()
        )));
    }
    let total_area = mesh.total_area();
    let mut samples = Vec::with_capacity(n_faces * n_points);
    for _ in 0..n_faces {
        let face_index = if area_weighted {
            let t: f64 = rng.random::<f64>() * total_area;
            mesh.cumulative_areas
                .partition_point(|&acc| acc < t)
                .min(mesh.face_count() - 1)
        } else {
            rng.random_range(0..mesh.face_count())
        };
        let [p1, p2, p3] = mesh.face_vertices(face_index);
        for _ in 0..n_points {
            let [a, b, c] = sample_simplex(rng);
            let planar_point = a * p1 + b * p2 + c * p3;
            let sphere_point = UnitPoint::from_vector(planar_point)?;
            let target = barycentric_interpolate(mesh, feat, face_index, &planar_point)?;
            samples.push((
                BarycentricSample {
                    face_index,
                    weights: [a, b, c],
                    planar_point,
                    sphere_point,
                },
                target,
            ));
        }
    }
    Ok(samples)
}

/// Sphere sampling scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SphereSampling {
    /// Deterministic Fibonacci lattice.
    Fibonacci,
    /// I.i.d. uniform points (normalized Gaussian vectors).
    Random,
}

/// `n` points covering the sphere, deterministic or i.i.d. uniform.
pub fn sample_sphere_uniform<R: Rng + ?Sized>(
    n: usize,
    mode: SphereSampling,
    rng: &mut R,
) -> Vec<UnitPoint> {
    match mode {
        SphereSampling::Fibonacci => {
            let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden_angle * k as f64;
                    UnitPoint::from_vector(Vector3::new(r * phi.cos(), r * phi.sin(), z))
                        .expect("fibonacci lattice point has unit-scale norm")
                })
                .collect()
        }
        SphereSampling::Random => (0..n)
            .map(|_| loop {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                let z: f64 = StandardNormal.sample(rng);
                if let Ok(p) = UnitPoint::new(x, y, z) {
                    return p;
                }
            })
            .collect(),
    }
}

/// Subdivided icosahedron with `10 * 4^level + 2` vertices, projected to the
/// unit sphere. Levels up to 7 are supported.
pub fn make_icosphere(level: u32) -> SphericalMesh {
    assert!(level <= 7, "icosphere level must be in 0..=7");
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<Vector3<f64>> = raw
        .iter()
        .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    // Orient all faces outward so that locate_face can rely on n . v > 0.
    for f in &mut faces {
        let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        let centroid = vertices[f[0]] + vertices[f[1]] + vertices[f[2]];
        if n.dot(&centroid) < 0.0 {
            f.swap(1, 2);
        }
    }

    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = |i: usize, j: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
                let key = if i < j { (i, j) } else { (j, i) };
                *midpoints.entry(key).or_insert_with(|| {
                    let m = (vertices[i] + vertices[j]).normalize();
                    vertices.push(m);
                    vertices.len() - 1
                })
            };
            let a = mid(f[0], f[1], &mut vertices);
            let b = mid(f[1], f[2], &mut vertices);
            let c = mid(f[2], f[0], &mut vertices);
            next_faces.push([f[0], a, c]);
            next_faces.push([f[1], b, a]);
            next_faces.push([f[2], c, b]);
            next_faces.push([a, b, c]);
        }
        faces = next_faces;
    }

    let vertices = vertices
        .into_iter()
        .map(|v| UnitPoint::from_vector(v).expect("icosphere vertex is non-zero"))
        .collect();
    SphericalMesh::new(vertices, faces).expect("icosphere construction is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_face_mesh() -> SphericalMesh {
        let vertices = vec![
            UnitPoint::new(1.0, 0.0, 0.0).unwrap(),
            UnitPoint::new(0.0, 1.0, 0.0).unwrap(),
            UnitPoint::new(0.0, 0.0, 1.0).unwrap(),
        ];
        SphericalMesh::new(vertices, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn interpolation_collapses_at_vertex() {
        let mesh = single_face_mesh();
        let feat = FeatureMap::from_channels(&[vec![1.0, 2.0, 3.0]], &["f"]).unwrap();
        let p = mesh.face_vertices(0)[0];
        let out = barycentric_interpolate(&mesh, &feat, 0, &p).unwrap();
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_at_centroid_is_mean() {
        let mesh = single_face_mesh();
        let feat = FeatureMap::from_channels(&[vec![0.0, 3.0, 6.0]], &["f"]).unwrap();
        let [p1, p2, p3] = mesh.face_vertices(0);
        let centroid = (p1 + p2 + p3) / 3.0;
        let out = barycentric_interpolate(&mesh, &feat, 0, &centroid).unwrap();
        assert_relative_eq!(out[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_matches_direct_weights() {
        // Area-ratio weights must reproduce the coefficients of the convex
        // combination for in-plane points.
        let mesh = single_face_mesh();
        let feat = FeatureMap::from_channels(&[vec![1.0, 2.0, 3.0]], &["f"]).unwrap();
        let [p1, p2, p3] = mesh.face_vertices(0);
        let p = 0.2 * p1 + 0.3 * p2 + 0.5 * p3;
        let w = barycentric_weights(&p1, &p2, &p3, &p).unwrap();
        assert_relative_eq!(w[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.3, epsilon = 1e-12);
        assert_relative_eq!(w[2], 0.5, epsilon = 1e-12);
        let out = barycentric_interpolate(&mesh, &feat, 0, &p).unwrap();
        assert_relative_eq!(out[0], 2.3, epsilon = 1e-12);
    }

    #[test]
    fn weights_match_analytic_barycentric_on_random_faces() {
        // Oracle: solve the 2x2 linear system for barycentric coordinates in
        // the triangle plane and compare against the area-ratio weights.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let pts: Vec<Vector3<f64>> = (0..3)
                .map(|_| {
                    Vector3::new(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    )
                })
                .collect();
            let e1 = pts[1] - pts[0];
            let e2 = pts[2] - pts[0];
            if e1.cross(&e2).norm() < 1e-3 {
                continue;
            }
            let [a, b, c] = sample_simplex(&mut rng);
            let p = a * pts[0] + b * pts[1] + c * pts[2];
            // Analytic solve via normal equations.
            let d00 = e1.dot(&e1);
            let d01 = e1.dot(&e2);
            let d11 = e2.dot(&e2);
            let dp = p - pts[0];
            let d20 = dp.dot(&e1);
            let d21 = dp.dot(&e2);
            let denom = d00 * d11 - d01 * d01;
            let wb = (d11 * d20 - d01 * d21) / denom;
            let wc = (d00 * d21 - d01 * d20) / denom;
            let wa = 1.0 - wb - wc;
            let w = barycentric_weights(&pts[0], &pts[1], &pts[2], &p).unwrap();
            assert!((w[0] - wa).abs() < 1e-9, "wa {} vs {}", w[0], wa);
            assert!((w[1] - wb).abs() < 1e-9);
            assert!((w[2] - wc).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_exact_on_affine_functions() {
        // Barycentric interpolation reproduces affine functions of position
        // restricted to a face.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mesh = make_icosphere(2);
        let values: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|v| 0.7 * v.x() - 1.3 * v.y() + 0.4 * v.z() + 2.0)
            .collect();
        let feat = FeatureMap::from_channels(&[values], &["affine"]).unwrap();
        for _ in 0..1000 {
            let fi = rng.random_range(0..mesh.face_count());
            let [p1, p2, p3] = mesh.face_vertices(fi);
            let [a, b, c] = sample_simplex(&mut rng);
            let p = a * p1 + b * p2 + c * p3;
            let out = barycentric_interpolate(&mesh, &feat, fi, &p).unwrap();
            let expected = 0.7 * p.x - 1.3 * p.y + 0.4 * p.z + 2.0;
            assert!((out[0] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let p = Vector3::new(1.0, 0.0, 0.0);
        let err = barycentric_weights(&p, &p, &p, &Vector3::new(0.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn simplex_samples_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let [a, b, c] = sample_simplex(&mut rng);
            assert!(a >= 0.0 && b >= 0.0 && c >= 0.0);
            assert!((a + b + c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut sums = [0.0; 3];
        let mut a_gt_half = 0usize;
        for _ in 0..n {
            let w = sample_simplex(&mut rng);
            for i in 0..3 {
                sums[i] += w[i];
            }
            if w[0] > 0.5 {
                a_gt_half += 1;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
        // The sub-simplex {a > 1/2} has a quarter of the area.
        assert!((a_gt_half as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn simplex_marginal_matches_beta12() {
        // Kolmogorov-Smirnov against the Beta(1,2) CDF 1 - (1-x)^2.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| sample_simplex(&mut rng)[0]).collect();
        draws.sort_by(f64::total_cmp);
        let mut ks = 0.0_f64;
        for (i, x) in draws.iter().enumerate() {
            let cdf = 1.0 - (1.0 - x) * (1.0 - x);
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn face_point_sampling_counts_and_norms() {
        let mesh = make_icosphere(1);
        let feat = FeatureMap::constant(mesh.vertex_count(), &[0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = sample_faces_and_points(&mesh, &feat, 4, 8, true, &mut rng).unwrap();
        assert_eq!(samples.len(), 32);
        for (s, target) in &samples {
            assert_relative_eq!(s.sphere_point.vector().norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(target[0], 0.5, epsilon = 1e-12);
            let sum: f64 = s.weights.iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn face_point_sampling_exact_for_linear_field() {
        let mesh = single_face_mesh();
        let values: Vec<f64> = mesh.vertices().iter().map(|v| v.x()).collect();
        let feat = FeatureMap::from_channels(&[values], &["x"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = sample_faces_and_points(&mesh, &feat, 1, 50, false, &mut rng).unwrap();
        for (s, target) in &samples {
            assert!((target[0] - s.planar_point.x).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mesh_sampling_fails() {
        let vertices = vec![
            UnitPoint::new(1.0, 0.0, 0.0).unwrap(),
            UnitPoint::new(0.0, 1.0, 0.0).unwrap(),
            UnitPoint::new(0.0, 0.0, 1.0).unwrap(),
        ];
        let mesh = SphericalMesh::new(vertices, vec![]).unwrap();
        let feat = FeatureMap::constant(3, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let err = sample_faces_and_points(&mesh, &feat, 1, 1, true, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn sphere_sampling_single_point_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = sample_sphere_uniform(1, SphereSampling::Random, &mut rng);
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].vector().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_sampling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = sample_sphere_uniform(100_000, SphereSampling::Random, &mut rng);
        let mean = pts
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.vector())
            / pts.len() as f64;
        assert!(mean.norm() < 0.02, "mean norm {}", mean.norm());

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = sample_sphere_uniform(10_000, SphereSampling::Random, &mut rng);
        let frac = pts.iter().filter(|p| p.z() > 0.0).count() as f64 / pts.len() as f64;
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn fibonacci_lattice_is_deterministic_and_covers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = sample_sphere_uniform(512, SphereSampling::Fibonacci, &mut rng);
        let b = sample_sphere_uniform(512, SphereSampling::Fibonacci, &mut rng);
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.vector(), q.vector());
        }
        let mean = a.iter().fold(Vector3::zeros(), |acc, p| acc + p.vector()) / a.len() as f64;
        assert!(mean.norm() < 0.01);
    }

    #[test]
    fn icosphere_counts() {
        let m0 = make_icosphere(0);
        assert_eq!(m0.vertex_count(), 12);
        assert_eq!(m0.face_count(), 20);
        let m4 = make_icosphere(4);
        assert_eq!(m4.vertex_count(), 2562);
        assert_eq!(m4.face_count(), 5120);
        let m6 = make_icosphere(6);
        assert_eq!(m6.vertex_count(), 40_962);
    }

    #[test]
    fn icosphere_is_closed_and_regular() {
        for level in 0..=4 {
            let m = make_icosphere(level);
            assert_eq!(m.euler_characteristic(), 2, "level {level}");
            if level >= 2 {
                let lengths = m.edge_lengths();
                let max = lengths.iter().cloned().fold(f64::MIN, f64::max);
                let min = lengths.iter().cloned().fold(f64::MAX, f64::min);
                assert!(max / min < 1.3, "edge ratio {} at level {level}", max / min);
            }
        }
    }

    #[test]
    fn icosphere_faces_are_outward() {
        let m = make_icosphere(2);
        for fi in 0..m.face_count() {
            let [a, b, c] = m.face_vertices(fi);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a + b + c)) > 0.0);
        }
    }
}
