//! Forward evaluation: hash encoding, MLP, and input-space gradients.

use nalgebra::Vector3;

use super::NeuralCorticalMap;
use crate::geometry::UnitPoint;

/// Per-dimension spatial-hash prime multipliers, XOR-combined and masked to
/// the table size.
const HASH_PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[inline]
fn hash_corner(x: u64, y: u64, z: u64, mask: u64) -> usize {
    let h = x.wrapping_mul(HASH_PRIMES[0])
        ^ y.wrapping_mul(HASH_PRIMES[1])
        ^ z.wrapping_mul(HASH_PRIMES[2]);
    (h & mask) as usize
}

/// Cached trilinear footprint of one encoding level.
#[derive(Clone, Debug, Default)]
pub(crate) struct LevelCache {
    /// Table slot per corner, corner bits ordered (x, y, z).
    pub idx: [u32; 8],
    /// Trilinear weight per corner.
    pub weight: [f64; 8],
    /// In-cell fractions along x, y, z.
    pub frac: [f64; 3],
    /// Grid resolution of this level.
    pub resolution: f64,
}

/// Reusable buffers for the per-point forward/backward passes.
#[derive(Clone, Debug)]
pub struct Scratch {
    pub(crate) levels: Vec<LevelCache>,
    pub(crate) encoded: Vec<f64>,
    /// Pre-activations per layer.
    pub(crate) pre: Vec<Vec<f64>>,
    /// Post-activations per layer; the last entry is the network output.
    pub(crate) act: Vec<Vec<f64>>,
    /// dL/d(pre-activation) buffers for backpropagation.
    pub(crate) grad: Vec<Vec<f64>>,
    pub(crate) grad_encoded: Vec<f64>,
}

impl Scratch {
    pub fn for_map(map: &NeuralCorticalMap) -> Self {
        let enc = map.encoding_config();
        let dims = super::layer_dims(enc, map.mlp_config());
        Self {
            levels: vec![LevelCache::default(); enc.levels],
            encoded: vec![0.0; enc.output_dim()],
            pre: dims.iter().map(|(_, out)| vec![0.0; *out]).collect(),
            act: dims.iter().map(|(_, out)| vec![0.0; *out]).collect(),
            grad: dims.iter().map(|(_, out)| vec![0.0; *out]).collect(),
            grad_encoded: vec![0.0; enc.output_dim()],
        }
    }

    pub fn output(&self) -> &[f64] {
        self.act.last().expect("at least one layer")
    }
}

impl NeuralCorticalMap {
    /// Hash-encodes `p`: maps it from [-1,1]^3 to [0,1]^3 and trilinearly
    /// interpolates each level's table at the eight surrounding corners.
    pub fn encode(&self, p: &UnitPoint) -> Vec<f64> {
        let mut scratch = Scratch::for_map(self);
        self.encode_into(&p.vector(), &mut scratch);
        scratch.encoded.clone()
    }

    pub(crate) fn encode_into(&self, p: &Vector3<f64>, scratch: &mut Scratch) {
        let enc = self.encoding_config();
        let n_feat = enc.features_per_level;
        let table_len = enc.table_len();
        let mask = (table_len - 1) as u64;
        let x01 = [
            ((p.x + 1.0) * 0.5).clamp(0.0, 1.0),
            ((p.y + 1.0) * 0.5).clamp(0.0, 1.0),
            ((p.z + 1.0) * 0.5).clamp(0.0, 1.0),
        ];
        for (level, cache) in scratch.levels.iter_mut().enumerate() {
            let res = self.resolutions()[level] as f64;
            let mut base = [0u64; 3];
            let mut frac = [0.0f64; 3];
            for d in 0..3 {
                let pos = x01[d] * res;
                let cell = pos.floor();
                base[d] = cell as u64;
                frac[d] = pos - cell;
            }
            cache.frac = frac;
            cache.resolution = res;
            let out = &mut scratch.encoded[level * n_feat..(level + 1) * n_feat];
            out.fill(0.0);
            let table = &self.tables()[level * table_len * n_feat..(level + 1) * table_len * n_feat];
            for corner in 0..8usize {
                let bx = (corner & 1) as u64;
                let by = ((corner >> 1) & 1) as u64;
                let bz = ((corner >> 2) & 1) as u64;
                let w = (if bx == 1 { frac[0] } else { 1.0 - frac[0] })
                    * (if by == 1 { frac[1] } else { 1.0 - frac[1] })
                    * (if bz == 1 { frac[2] } else { 1.0 - frac[2] });
                let slot = hash_corner(base[0] + bx, base[1] + by, base[2] + bz, mask);
                cache.idx[corner] = slot as u32;
                cache.weight[corner] = w;
                let entry = &table[slot * n_feat..slot * n_feat + n_feat];
                for (o, t) in out.iter_mut().zip(entry) {
                    *o += w * t;
                }
            }
        }
    }

    /// Full forward pass. Deterministic; two calls with the same map and
    /// point return identical outputs.
    pub fn forward(&self, p: &UnitPoint) -> Vec<f64> {
        let mut scratch = Scratch::for_map(self);
        self.forward_into(&p.vector(), &mut scratch);
        scratch.output().to_vec()
    }

    /// Forward pass writing activations into `scratch` (hot path).
    pub fn forward_into(&self, p: &Vector3<f64>, scratch: &mut Scratch) {
        self.encode_into(p, scratch);
        let n_layers = self.layer_count();
        for li in 0..n_layers {
            let (w, b) = self.layer(li);
            let last = li + 1 == n_layers;
            {
                let input: &[f64] = if li == 0 {
                    &scratch.encoded
                } else {
                    &scratch.act[li - 1]
                };
                let fan_in = input.len();
                let pre = &mut scratch.pre[li];
                for (o, (row, bias)) in
                    pre.iter_mut().zip(w.chunks_exact(fan_in).zip(b.iter()))
                {
                    let mut acc = *bias;
                    for (x, wv) in input.iter().zip(row) {
                        acc += x * wv;
                    }
                    *o = acc;
                }
            }
            let (pre, act) = (&scratch.pre[li], &mut scratch.act[li]);
            if last {
                act.copy_from_slice(pre);
            } else {
                for (a, z) in act.iter_mut().zip(pre) {
                    *a = if *z > 0.0 { *z } else { 0.0 };
                }
            }
        }
    }

    /// Backpropagates through the MLP only. `scratch.grad[last]` must hold
    /// the output cotangent; afterwards `scratch.grad[li]` holds
    /// dL/d(pre-activation li) and `scratch.grad_encoded` dL/d(encoding).
    pub(crate) fn backprop_mlp(&self, scratch: &mut Scratch) {
        let n_layers = self.layer_count();
        for li in (0..n_layers).rev() {
            let (w, _) = self.layer(li);
            if li == 0 {
                let fan_in = scratch.grad_encoded.len();
                scratch.grad_encoded.fill(0.0);
                for (gi, row) in scratch.grad[0].iter().zip(w.chunks_exact(fan_in)) {
                    for (acc, wv) in scratch.grad_encoded.iter_mut().zip(row) {
                        *acc += gi * wv;
                    }
                }
            } else {
                let (head, tail) = scratch.grad.split_at_mut(li);
                let g_out = &tail[0];
                let g_in = &mut head[li - 1];
                let fan_in = g_in.len();
                g_in.fill(0.0);
                for (gi, row) in g_out.iter().zip(w.chunks_exact(fan_in)) {
                    for (acc, wv) in g_in.iter_mut().zip(row) {
                        *acc += gi * wv;
                    }
                }
                for (g, z) in g_in.iter_mut().zip(&scratch.pre[li - 1]) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
    }

    /// Vector-Jacobian product with the input point: given a cotangent on
    /// the outputs, returns `d(cotangent . S(p)) / dp`. `scratch` must hold
    /// the forward pass for `p`.
    pub(crate) fn vjp_input(&self, cotangent: &[f64], scratch: &mut Scratch) -> Vector3<f64> {
        let n_layers = self.layer_count();
        scratch.grad[n_layers - 1].copy_from_slice(cotangent);
        self.backprop_mlp(scratch);
        // Through the trilinear interpolation: d encoded / d p.
        let enc = self.encoding_config();
        let n_feat = enc.features_per_level;
        let table_len = enc.table_len();
        let mut g_p = Vector3::zeros();
        for (level, cache) in scratch.levels.iter().enumerate() {
            let table = &self.tables()[level * table_len * n_feat..(level + 1) * table_len * n_feat];
            let g_enc = &scratch.grad_encoded[level * n_feat..(level + 1) * n_feat];
            let f = cache.frac;
            for corner in 0..8usize {
                let bits = [
                    corner & 1,
                    (corner >> 1) & 1,
                    (corner >> 2) & 1,
                ];
                let entry = &table[cache.idx[corner] as usize * n_feat..][..n_feat];
                let dot: f64 = g_enc.iter().zip(entry).map(|(g, t)| g * t).sum();
                // dw/df_d = +-(product over the other two dimensions);
                // d f_d / d p_d = resolution / 2.
                for d in 0..3 {
                    let (a, b) = ((d + 1) % 3, (d + 2) % 3);
                    let other = (if bits[a] == 1 { f[a] } else { 1.0 - f[a] })
                        * (if bits[b] == 1 { f[b] } else { 1.0 - f[b] });
                    let sign = if bits[d] == 1 { 1.0 } else { -1.0 };
                    g_p[d] += dot * sign * other * cache.resolution * 0.5;
                }
            }
        }
        g_p
    }

    /// Jacobian dS/dp as `output_dim` rows of 3. Trilinear interpolation is
    /// only piecewise differentiable; on cell boundaries this returns the
    /// lower-cell (floor) convention.
    pub fn input_gradient(&self, p: &UnitPoint) -> Vec<Vector3<f64>> {
        let mut scratch = Scratch::for_map(self);
        self.forward_into(&p.vector(), &mut scratch);
        let n_out = self.output_dim();
        let mut rows = Vec::with_capacity(n_out);
        let mut cotangent = vec![0.0; n_out];
        for i in 0..n_out {
            cotangent.fill(0.0);
            cotangent[i] = 1.0;
            rows.push(self.vjp_input(&cotangent, &mut scratch));
        }
        rows
    }
}

#[cfg(test)]
pub(crate) fn off_boundary_point(
    map: &NeuralCorticalMap,
    rng: &mut rand_chacha::ChaCha8Rng,
    margin: f64,
) -> UnitPoint {
    'outer: loop {
        let p = crate::geometry::sample_sphere_uniform(
            1,
            crate::geometry::SphereSampling::Random,
            rng,
        )[0];
        for level in 0..map.encoding_config().levels {
            let res = map.resolutions()[level] as f64;
            for c in [p.x(), p.y(), p.z()] {
                let f = ((c + 1.0) * 0.5 * res).fract();
                if f < margin || f > 1.0 - margin {
                    continue 'outer;
                }
            }
        }
        return p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{HashEncodingConfig, MlpConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_map(seed: u64, n_f: usize) -> NeuralCorticalMap {
        let enc = HashEncodingConfig {
            levels: 4,
            features_per_level: 2,
            table_size_log2: 8,
            base_resolution: 4,
            growth_factor: 1.6,
        };
        let mut mlp = MlpConfig::with_output(n_f);
        mlp.hidden_width = 16;
        NeuralCorticalMap::new(enc, mlp, seed).unwrap()
    }

    #[test]
    fn encoding_has_configured_length() {
        let enc = HashEncodingConfig::default();
        let map = NeuralCorticalMap::new(enc, MlpConfig::with_output(1), 0).unwrap();
        let p = UnitPoint::new(0.3, -0.7, 0.5).unwrap();
        assert_eq!(map.encode(&p).len(), 24);
    }

    #[test]
    fn encoding_is_deterministic() {
        let map = small_map(3, 2);
        let p = UnitPoint::new(0.1, 0.2, 0.97).unwrap();
        assert_eq!(map.encode(&p), map.encode(&p));
        assert_eq!(map.forward(&p), map.forward(&p));
    }

    #[test]
    fn grid_corner_collapses_to_table_entry() {
        // p = (1, 0, 0) maps to x01 = (1, 1/2, 1/2), an exact corner for the
        // power-of-two resolutions 4 and 8; the trilinear weights collapse
        // onto a single hashed table entry there.
        let enc = HashEncodingConfig {
            levels: 2,
            features_per_level: 2,
            table_size_log2: 8,
            base_resolution: 4,
            growth_factor: 2.0,
        };
        let map = NeuralCorticalMap::new(enc, MlpConfig::with_output(1), 5).unwrap();
        let p = UnitPoint::new(1.0, 0.0, 0.0).unwrap();
        let encoded = map.encode(&p);
        let mask = (enc.table_len() - 1) as u64;
        for level in 0..2 {
            let res = map.resolutions()[level] as u64;
            let slot = hash_corner(res, res / 2, res / 2, mask);
            let table = &map.tables()[level * enc.table_len() * 2..];
            for c in 0..2 {
                assert_eq!(
                    encoded[level * 2 + c],
                    table[slot * 2 + c],
                    "level {level} channel {c}"
                );
            }
        }
    }

    #[test]
    fn zeroed_output_layer_returns_bias() {
        let mut map = small_map(7, 3);
        let last = map.layer_count() - 1;
        {
            let (w, b) = map.layer_mut(last);
            w.fill(0.0);
            b.copy_from_slice(&[1.5, -2.0, 0.25]);
        }
        let p = UnitPoint::new(-0.2, 0.8, 0.6).unwrap();
        assert_eq!(map.forward(&p), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn batched_forward_equals_single_forwards() {
        let map = small_map(11, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let pts = crate::geometry::sample_sphere_uniform(
            100,
            crate::geometry::SphereSampling::Random,
            &mut rng,
        );
        let mut scratch = Scratch::for_map(&map);
        for p in &pts {
            map.forward_into(&p.vector(), &mut scratch);
            assert_eq!(scratch.output().to_vec(), map.forward(p));
        }
    }

    #[test]
    fn zero_hidden_weights_zero_jacobian() {
        let mut map = small_map(13, 2);
        {
            let (w, b) = map.layer_mut(0);
            w.fill(0.0);
            b.fill(0.0);
        }
        let p = UnitPoint::new(0.5, -0.5, 0.7).unwrap();
        let jac = map.input_gradient(&p);
        assert_eq!(jac.len(), 2);
        for row in jac {
            assert_eq!(row, Vector3::zeros());
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let map = small_map(17, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let h = 1e-5;
        for _ in 0..50 {
            let p = off_boundary_point(&map, &mut rng, 1e-3);
            let jac = map.input_gradient(&p);
            let mut num = 0.0;
            let mut den = 0.0;
            for d in 0..3 {
                let mut vp = p.vector();
                vp[d] += h;
                let mut vm = p.vector();
                vm[d] -= h;
                // Differentiate the raw map (no renormalization).
                let mut s = Scratch::for_map(&map);
                map.forward_into(&vp, &mut s);
                let f_p = s.output().to_vec();
                map.forward_into(&vm, &mut s);
                let f_m = s.output().to_vec();
                for (i, (a, b)) in f_p.iter().zip(&f_m).enumerate() {
                    let fd = (a - b) / (2.0 * h);
                    num += (jac[i][d] - fd) * (jac[i][d] - fd);
                    den += fd * fd;
                }
            }
            let rel = (num / den.max(1e-30)).sqrt();
            assert!(rel < 1e-4, "relative error {rel}");
        }
    }
}
