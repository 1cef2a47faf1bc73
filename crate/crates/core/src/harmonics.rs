//! Real spherical harmonics up to moderate degree, used to synthesize
//! band-limited feature channels.

use crate::geometry::UnitPoint;

/// Number of basis functions through degree `l_max` inclusive.
pub fn basis_size(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Index of the `(l, m)` basis function in the flattened layout `l^2 + l + m`.
pub fn basis_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Evaluates the real orthonormal spherical harmonics through `l_max` at `p`,
/// in the flattened `(l, m)` layout.
///
/// Uses the standard associated-Legendre recurrences with Condon-Shortley
/// phase; `Y_{l,m>0}` pairs with `cos(m phi)`, `Y_{l,m<0}` with `sin(|m| phi)`.
pub fn eval_basis(p: &UnitPoint, l_max: usize) -> Vec<f64> {
    let ct = p.z(); // cos(theta)
    let st = (1.0 - ct * ct).max(0.0).sqrt();
    let phi = p.y().atan2(p.x());

    // Associated Legendre values P_l^m(ct), packed like the output.
    let mut plm = vec![0.0; basis_size(l_max)];
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut pl = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
    pl[at(0, 0)] = 1.0;
    for m in 1..=l_max {
        // P_m^m = -(2m - 1) * st * P_{m-1}^{m-1}
        pl[at(m, m)] = -((2 * m - 1) as f64) * st * pl[at(m - 1, m - 1)];
    }
    for m in 0..l_max {
        // P_{m+1}^m = (2m + 1) * ct * P_m^m
        pl[at(m + 1, m)] = (2 * m + 1) as f64 * ct * pl[at(m, m)];
    }
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            pl[at(l, m)] = (((2 * l - 1) as f64) * ct * pl[at(l - 1, m)]
                - ((l + m - 1) as f64) * pl[at(l - 2, m)])
                / ((l - m) as f64);
        }
    }

    // Normalization K(l, m) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!).
    let four_pi = 4.0 * std::f64::consts::PI;
    for l in 0..=l_max {
        let k0 = ((2 * l + 1) as f64 / four_pi).sqrt();
        plm[basis_index(l, 0)] = k0 * pl[at(l, 0)];
        let mut ratio = 1.0; // (l-m)!/(l+m)!
        for m in 1..=l {
            ratio /= ((l + m) * (l - m + 1)) as f64;
            let k = ((2 * l + 1) as f64 / four_pi * ratio).sqrt() * std::f64::consts::SQRT_2;
            let base = k * pl[at(l, m)];
            let mf = m as f64;
            plm[basis_index(l, m as i64)] = base * (mf * phi).cos();
            plm[basis_index(l, -(m as i64))] = base * (mf * phi).sin();
        }
    }
    plm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_sphere_uniform, SphereSampling};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_order_closed_forms() {
        let p = UnitPoint::new(0.3, -0.5, 0.81).unwrap();
        let y = eval_basis(&p, 2);
        let c = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert!((y[basis_index(0, 0)] - c).abs() < 1e-14);
        let c1 = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
        assert!((y[basis_index(1, 0)] - c1 * p.z()).abs() < 1e-14);
        // With Condon-Shortley phase Y_{1,1} = -c1 * x, Y_{1,-1} = -c1 * y.
        assert!((y[basis_index(1, 1)] + c1 * p.x()).abs() < 1e-14);
        assert!((y[basis_index(1, -1)] + c1 * p.y()).abs() < 1e-14);
    }

    #[test]
    fn basis_is_orthonormal_under_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts = sample_sphere_uniform(20_000, SphereSampling::Fibonacci, &mut rng);
        let l_max = 4;
        let n = basis_size(l_max);
        let mut gram = vec![0.0; n * n];
        for p in &pts {
            let y = eval_basis(p, l_max);
            for i in 0..n {
                for j in i..n {
                    gram[i * n + j] += y[i] * y[j];
                }
            }
        }
        let w = 4.0 * std::f64::consts::PI / pts.len() as f64;
        for i in 0..n {
            for j in i..n {
                let v = gram[i * n + j] * w;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (v - expect).abs() < 0.02,
                    "gram[{i},{j}] = {v} (expected {expect})"
                );
            }
        }
    }
}
