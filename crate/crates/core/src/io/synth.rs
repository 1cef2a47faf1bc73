//! Synthetic subjects: band-limited random feature channels, spherical
//! Voronoi parcellations, and the random rigid perturbations used by the
//! perturbed-dataset protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Parcellation};
use crate::geometry::{
    make_icosphere, sample_sphere_uniform, SphereSampling, SphericalMesh,
};
use crate::harmonics::{basis_index, eval_basis};
use crate::rotation::{Rotation, RotationParams};

/// Per-axis bound of the perturbation distribution, degrees.
pub const PERTURBATION_MAX_DEG: f64 = 36.0;

/// A random band-limited channel: spherical-harmonic coefficients for
/// degrees 1..=degree with per-degree variance proportional to 1/l^2
/// (smooth fields with mild high-frequency texture), standardized to zero
/// mean and unit empirical variance over the vertices.
pub fn synth_channel<R: Rng + ?Sized>(
    mesh: &SphericalMesh,
    degree: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(degree >= 1, "harmonic degree must be at least 1");
    let mut coeffs = vec![0.0; (degree + 1) * (degree + 1)];
    for l in 1..=degree {
        let sigma = (1.0 / (l * l) as f64 / (2 * l + 1) as f64).sqrt();
        for m in -(l as i64)..=(l as i64) {
            let g: f64 = StandardNormal.sample(rng);
            coeffs[basis_index(l, m)] = sigma * g;
        }
    }
    let raw: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let basis = eval_basis(v, degree);
            basis.iter().zip(&coeffs).map(|(b, c)| b * c).sum()
        })
        .collect();
    standardize(raw)
}

/// A channel correlated with `base` (both standardized): the blend
/// `alpha * base + sqrt(1 - alpha^2) * fresh`, re-standardized.
pub fn synth_correlated_channel<R: Rng + ?Sized>(
    mesh: &SphericalMesh,
    base: &[f64],
    degree: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if base.len() != mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "base channel has {} values for {} vertices",
            base.len(),
            mesh.vertex_count()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "correlation {alpha} outside [0, 1]"
        )));
    }
    let fresh = synth_channel(mesh, degree, rng);
    let beta = (1.0 - alpha * alpha).sqrt();
    let blended: Vec<f64> = base
        .iter()
        .zip(&fresh)
        .map(|(b, f)| alpha * b + beta * f)
        .collect();
    Ok(standardize(blended))
}

fn standardize(mut values: Vec<f64>) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    assert!(std > 1e-15, "degenerate channel with zero variance");
    for v in &mut values {
        *v = (*v - mean) / std;
    }
    values
}

/// Spherical Voronoi parcellation from `n_labels` random seed directions;
/// each vertex takes the label of the closest seed.
pub fn voronoi_parcellation<R: Rng + ?Sized>(
    mesh: &SphericalMesh,
    n_labels: usize,
    rng: &mut R,
) -> Parcellation {
    let seeds = sample_sphere_uniform(n_labels, SphereSampling::Random, rng);
    let labels = mesh
        .vertices()
        .iter()
        .map(|v| {
            let mut best = 0usize;
            let mut best_dot = f64::MIN;
            for (k, s) in seeds.iter().enumerate() {
                let d = v.vector().dot(&s.vector());
                if d > best_dot {
                    best_dot = d;
                    best = k;
                }
            }
            best as u32
        })
        .collect();
    Parcellation::new(labels)
}

/// A full synthetic subject: icosphere mesh, `n_f` standardized band-limited
/// channels, and a Voronoi parcellation. Deterministic in `seed`.
pub fn synth_subject(
    level: u32,
    harmonic_degree: usize,
    n_f: usize,
    n_labels: usize,
    seed: u64,
) -> Result<(SphericalMesh, FeatureMap, Parcellation)> {
    if harmonic_degree < 1 {
        return Err(Error::InvalidConfig("harmonic_degree must be >= 1".into()));
    }
    if n_labels < 2 {
        return Err(Error::InvalidConfig("n_labels must be >= 2".into()));
    }
    if n_f < 1 {
        return Err(Error::InvalidConfig("n_f must be >= 1".into()));
    }
    let mesh = make_icosphere(level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels: Vec<Vec<f64>> = (0..n_f)
        .map(|_| synth_channel(&mesh, harmonic_degree, &mut rng))
        .collect();
    let names: Vec<String> = (0..n_f).map(|i| format!("f{i}")).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let feat = FeatureMap::from_channels(&channels, &name_refs)?;
    let parc = voronoi_parcellation(&mesh, n_labels, &mut rng);
    Ok((mesh, feat, parc))
}

/// A ground-truth rigid perturbation: intrinsic Z-Y-X Euler composition
/// `Rz(yaw) * Ry(pitch) * Rx(roll)`. Angles in radians.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Perturbation {
    pub roll: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub rotation: Rotation,
}

/// Builds the perturbation rotation from explicit angles (radians).
pub fn perturbation_from_angles(roll: f64, yaw: f64, pitch: f64) -> Perturbation {
    let rotation = RotationParams::Euler([yaw, pitch, roll])
        .to_rotation()
        .expect("euler parameters are total");
    Perturbation {
        roll,
        yaw,
        pitch,
        rotation,
    }
}

/// Draws `(roll, yaw, pitch)` each uniform in [-36 deg, +36 deg] and
/// composes them. Deterministic in `seed`.
pub fn make_perturbation(seed: u64) -> Perturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = PERTURBATION_MAX_DEG.to_radians();
    let mut draw = || rng.random::<f64>() * 2.0 * max - max;
    let roll = draw();
    let yaw = draw();
    let pitch = draw();
    perturbation_from_angles(roll, yaw, pitch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::dist_r;

    #[test]
    fn zero_angles_give_identity() {
        let p = perturbation_from_angles(0.0, 0.0, 0.0);
        assert_eq!(p.rotation.quaternion(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pure_roll_has_half_angle_distance() {
        let p = perturbation_from_angles(36f64.to_radians(), 0.0, 0.0);
        let d = dist_r(&p.rotation, &Rotation::identity()).to_degrees();
        assert!((d - 18.0).abs() < 1e-9, "distance {d}");
    }

    #[test]
    fn angles_stay_in_bounds() {
        for seed in 0..10_000 {
            let p = make_perturbation(seed);
            for a in [p.roll, p.yaw, p.pitch] {
                assert!(a.abs() <= PERTURBATION_MAX_DEG.to_radians() + 1e-12);
            }
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let (m1, f1, p1) = synth_subject(2, 4, 2, 4, 99).unwrap();
        let (m2, f2, p2) = synth_subject(2, 4, 2, 4, 99).unwrap();
        assert_eq!(m1.vertex_count(), m2.vertex_count());
        assert_eq!(f1, f2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn channels_have_unit_variance() {
        let (_, feat, _) = synth_subject(3, 8, 3, 4, 5).unwrap();
        for c in 0..feat.channels() {
            let col = feat.channel(c);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 1e-9, "variance {var}");
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn two_labels_appear_on_small_spheres() {
        for seed in 0..5 {
            let (_, _, parc) = synth_subject(2, 2, 1, 2, seed).unwrap();
            assert_eq!(parc.distinct_labels().len(), 2, "seed {seed}");
        }
    }

    #[test]
    fn parcellation_covers_all_labels() {
        for seed in 0..5 {
            for n_labels in [6, 18, 36] {
                let (_, _, parc) = synth_subject(3, 2, 1, n_labels, seed).unwrap();
                assert_eq!(
                    parc.distinct_labels().len(),
                    n_labels,
                    "seed {seed}, {n_labels} labels"
                );
            }
        }
    }

    #[test]
    fn channels_are_smooth() {
        // Adjacent-vertex difference stays below
        // degree * max_edge * std * 2 (std = 1 after standardization).
        for level in [3u32, 4] {
            let mesh = make_icosphere(level);
            let max_edge = mesh
                .edge_lengths()
                .into_iter()
                .fold(f64::MIN, f64::max);
            for degree in [2usize, 4, 12] {
                for seed in 0..3u64 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let vals = synth_channel(&mesh, degree, &mut rng);
                    let mut worst = 0.0_f64;
                    for f in mesh.faces() {
                        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                            worst = worst.max((vals[a] - vals[b]).abs());
                        }
                    }
                    let bound = degree as f64 * max_edge * 2.0;
                    assert!(
                        worst <= bound,
                        "level {level} degree {degree} seed {seed}: {worst} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn correlated_channels_share_structure() {
        let mesh = make_icosphere(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = synth_channel(&mesh, 6, &mut rng);
        let corr = synth_correlated_channel(&mesh, &base, 6, 0.9, &mut rng).unwrap();
        let n = base.len() as f64;
        let r: f64 = base.iter().zip(&corr).map(|(a, b)| a * b).sum::<f64>() / n;
        assert!(r > 0.8, "empirical correlation {r}");
    }
}
