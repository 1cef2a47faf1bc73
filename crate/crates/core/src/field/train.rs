//! Parameter gradients, Adam, and the training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::forward::Scratch;
use super::{NeuralCorticalMap, TrainConfig};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{sample_faces_and_points, SphericalMesh, UnitPoint};

/// Fixed chunk count for parallel gradient accumulation; summation order is
/// chunk-major and independent of the thread count, so training is
/// bit-deterministic.
const GRAD_CHUNKS: usize = 4;

/// Gradient (or moment) storage shaped like a map's parameters.
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub tables: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(map: &NeuralCorticalMap) -> Self {
        Self {
            tables: vec![0.0; map.tables().len()],
            weights: (0..map.layer_count())
                .map(|i| vec![0.0; map.layer(i).0.len()])
                .collect(),
            biases: (0..map.layer_count())
                .map(|i| vec![0.0; map.layer(i).1.len()])
                .collect(),
        }
    }

    fn reset(&mut self) {
        self.tables.fill(0.0);
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.tables.iter_mut().zip(&other.tables) {
            *a += b;
        }
        for (aw, bw) in self.weights.iter_mut().zip(&other.weights) {
            for (a, b) in aw.iter_mut().zip(bw) {
                *a += b;
            }
        }
        for (ab, bb) in self.biases.iter_mut().zip(&other.biases) {
            for (a, b) in ab.iter_mut().zip(bb) {
                *a += b;
            }
        }
    }
}

/// Accumulates one sample's contribution; `scale` is the cotangent factor
/// `2 / (batch * channels)`. Returns the sample's summed squared error.
fn backward_sample(
    map: &NeuralCorticalMap,
    point: &nalgebra::Vector3<f64>,
    target: &[f64],
    scale: f64,
    scratch: &mut Scratch,
    grads: &mut ParamGrads,
) -> f64 {
    map.forward_into(point, scratch);
    let n_layers = map.layer_count();
    let mut sq = 0.0;
    {
        let out = &scratch.act[n_layers - 1];
        let g = &mut scratch.grad[n_layers - 1];
        for ((gi, o), t) in g.iter_mut().zip(out).zip(target) {
            let r = o - t;
            sq += r * r;
            *gi = scale * r;
        }
    }
    map.backprop_mlp(scratch);
    // Weight and bias gradients: dL/dW = g_pre (x) input.
    for li in (0..n_layers).rev() {
        let input: &[f64] = if li == 0 {
            &scratch.encoded
        } else {
            &scratch.act[li - 1]
        };
        let fan_in = input.len();
        let g_pre = &scratch.grad[li];
        let gw = &mut grads.weights[li];
        for (gi, row) in g_pre.iter().zip(gw.chunks_exact_mut(fan_in)) {
            for (acc, x) in row.iter_mut().zip(input) {
                *acc += gi * x;
            }
        }
        for (acc, gi) in grads.biases[li].iter_mut().zip(g_pre) {
            *acc += gi;
        }
    }
    // Scatter-add into hash tables: trilinear weight times upstream grad.
    let enc = map.encoding_config();
    let n_feat = enc.features_per_level;
    let table_len = enc.table_len();
    for (level, cache) in scratch.levels.iter().enumerate() {
        let g_enc = &scratch.grad_encoded[level * n_feat..(level + 1) * n_feat];
        let table_grad = &mut grads.tables
            [level * table_len * n_feat..(level + 1) * table_len * n_feat];
        for corner in 0..8usize {
            let w = cache.weight[corner];
            if w == 0.0 {
                continue;
            }
            let base = cache.idx[corner] as usize * n_feat;
            for (c, g) in g_enc.iter().enumerate() {
                table_grad[base + c] += w * g;
            }
        }
    }
    sq
}

/// Exact reverse-mode gradient of the batch-mean squared error (mean over
/// samples and channels) with respect to every parameter.
pub fn backward_params(
    map: &NeuralCorticalMap,
    batch: &[(UnitPoint, Vec<f64>)],
) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let n_f = map.output_dim();
    if let Some((_, t)) = batch.iter().find(|(_, t)| t.len() != n_f) {
        return Err(Error::Shape(format!(
            "target of length {} for {} output channels",
            t.len(),
            n_f
        )));
    }
    let denom = (batch.len() * n_f) as f64;
    let mut grads = ParamGrads::zeros_like(map);
    let mut scratch = Scratch::for_map(map);
    let mut sq_sum = 0.0;
    for (p, target) in batch {
        sq_sum += backward_sample(map, &p.vector(), target, 2.0 / denom, &mut scratch, &mut grads);
    }
    Ok((sq_sum / denom, grads))
}

/// Adam with separate learning rates for hash tables and MLP parameters.
struct Adam {
    m: ParamGrads,
    v: ParamGrads,
    t: u64,
}

impl Adam {
    fn new(map: &NeuralCorticalMap) -> Self {
        Self {
            m: ParamGrads::zeros_like(map),
            v: ParamGrads::zeros_like(map),
            t: 0,
        }
    }

    fn step(&mut self, map: &mut NeuralCorticalMap, grads: &ParamGrads, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64| {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        };
        update(
            map.tables_mut(),
            &grads.tables,
            &mut self.m.tables,
            &mut self.v.tables,
            cfg.lr_tables,
        );
        for li in 0..map.layer_count() {
            let (w, b) = map.layer_mut(li);
            update(
                w,
                &grads.weights[li],
                &mut self.m.weights[li],
                &mut self.v.weights[li],
                cfg.lr_mlp,
            );
            update(
                b,
                &grads.biases[li],
                &mut self.m.biases[li],
                &mut self.v.biases[li],
                cfg.lr_mlp,
            );
        }
    }
}

/// Trains a fresh map against barycentric-interpolation targets: each step
/// draws `n_faces * n_points` samples, computes the MSE gradient, and takes
/// one Adam step. Returns the map and the per-step loss trace.
///
/// Deterministic in the seed: identical configs produce bit-identical maps.
pub fn fit(
    mesh: &SphericalMesh,
    feat: &FeatureMap,
    encoding: &super::HashEncodingConfig,
    mlp: &super::MlpConfig,
    train: &TrainConfig,
) -> Result<(NeuralCorticalMap, Vec<f64>)> {
    train.validate()?;
    if mlp.output_dim != feat.channels() {
        return Err(Error::Shape(format!(
            "MLP outputs {} channels but the feature map has {}",
            mlp.output_dim,
            feat.channels()
        )));
    }
    let mut map = NeuralCorticalMap::new(*encoding, *mlp, train.seed)?;
    // Offset so the sampling stream differs from the init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(1));
    let mut adam = Adam::new(&map);
    let mut chunk_state: Vec<(ParamGrads, Scratch)> = (0..GRAD_CHUNKS)
        .map(|_| (ParamGrads::zeros_like(&map), Scratch::for_map(&map)))
        .collect();
    let mut total = ParamGrads::zeros_like(&map);
    let mut trace = Vec::with_capacity(train.iterations);
    let n_f = feat.channels();
    for iteration in 0..train.iterations {
        let samples = sample_faces_and_points(
            mesh,
            feat,
            train.n_faces,
            train.n_points,
            train.area_weighted_faces,
            &mut rng,
        )?;
        let batch = samples.len();
        let denom = (batch * n_f) as f64;
        let chunk_len = batch.div_ceil(GRAD_CHUNKS);
        let map_ref = &map;
        let samples_ref = &samples;
        let sq_sums: Vec<f64> = chunk_state
            .par_iter_mut()
            .enumerate()
            .map(|(k, (grads, scratch))| {
                grads.reset();
                let lo = (k * chunk_len).min(batch);
                let hi = ((k + 1) * chunk_len).min(batch);
                let mut sq = 0.0;
                for (sample, target) in &samples_ref[lo..hi] {
                    sq += backward_sample(
                        map_ref,
                        &sample.sphere_point.vector(),
                        target,
                        2.0 / denom,
                        scratch,
                        grads,
                    );
                }
                sq
            })
            .collect();
        let loss = sq_sums.iter().sum::<f64>() / denom;
        if !loss.is_finite() {
            return Err(Error::NumericFault(format!(
                "non-finite loss at iteration {iteration}"
            )));
        }
        total.reset();
        for (grads, _) in &chunk_state {
            total.add_assign(grads);
        }
        adam.step(&mut map, &total, train);
        trace.push(loss);
    }
    map.set_iterations_trained(train.iterations as u64);
    Ok((map, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::forward::off_boundary_point;
    use crate::field::{HashEncodingConfig, MlpConfig};
    use crate::geometry::make_icosphere;
    use rand::{Rng, SeedableRng};

    fn small_encoding() -> HashEncodingConfig {
        HashEncodingConfig {
            levels: 3,
            features_per_level: 2,
            table_size_log2: 7,
            base_resolution: 3,
            growth_factor: 1.7,
        }
    }

    fn small_mlp(n_f: usize) -> MlpConfig {
        let mut m = MlpConfig::with_output(n_f);
        m.hidden_width = 16;
        m
    }

    fn random_batch(
        map: &NeuralCorticalMap,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(UnitPoint, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let p = off_boundary_point(map, rng, 1e-3);
                let t: Vec<f64> = (0..map.output_dim())
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect();
                (p, t)
            })
            .collect()
    }

    /// Fresh maps keep pre-activations near the ReLU kink (tables start at
    /// 1e-4 scale), which breaks finite differencing in parameter space.
    /// Give the map O(1)-scale parameters before checking gradients.
    pub(crate) fn randomize_params(map: &mut NeuralCorticalMap, rng: &mut ChaCha8Rng) {
        for t in map.tables_mut() {
            *t = rng.random::<f64>() - 0.5;
        }
        for li in 0..map.layer_count() {
            let (_, b) = map.layer_mut(li);
            for v in b {
                *v = 0.2 * (rng.random::<f64>() - 0.5);
            }
        }
    }

    #[test]
    fn gradients_vanish_at_exact_targets() {
        let map = NeuralCorticalMap::new(small_encoding(), small_mlp(2), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let batch: Vec<(UnitPoint, Vec<f64>)> = random_batch(&map, 8, &mut rng)
            .into_iter()
            .map(|(p, _)| {
                let t = map.forward(&p);
                (p, t)
            })
            .collect();
        let (loss, grads) = backward_params(&map, &batch).unwrap();
        assert!(loss < 1e-28);
        assert!(grads.tables.iter().all(|g| g.abs() < 1e-14));
        for li in 0..map.layer_count() {
            assert!(grads.weights[li].iter().all(|g| g.abs() < 1e-14));
            assert!(grads.biases[li].iter().all(|g| g.abs() < 1e-14));
        }
    }

    #[test]
    fn output_layer_gradient_matches_hand_formula() {
        // For the linear output layer, dL/dW_out = 2 (out - t) h / (B * n_f),
        // the textbook one-sample linear-regression gradient.
        let map = NeuralCorticalMap::new(small_encoding(), small_mlp(1), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let p = off_boundary_point(&map, &mut rng, 1e-3);
        let target = vec![0.37];
        let (_, grads) = backward_params(&map, &[(p, target.clone())]).unwrap();
        let mut scratch = Scratch::for_map(&map);
        map.forward_into(&p.vector(), &mut scratch);
        let out = scratch.output()[0];
        let hidden = scratch.act[map.layer_count() - 2].clone();
        let li = map.layer_count() - 1;
        for (g, h) in grads.weights[li].iter().zip(&hidden) {
            let expected = 2.0 * (out - target[0]) * h;
            assert!((g - expected).abs() < 1e-12);
        }
        assert!((grads.biases[li][0] - 2.0 * (out - target[0])).abs() < 1e-12);
    }

    /// Central finite difference of the batch loss in one parameter.
    fn fd_param(
        map: &mut NeuralCorticalMap,
        batch: &[(UnitPoint, Vec<f64>)],
        which: &dyn Fn(&mut NeuralCorticalMap) -> &mut f64,
        h: f64,
    ) -> f64 {
        let loss_of = |map: &NeuralCorticalMap| -> f64 {
            let n_f = map.output_dim();
            let denom = (batch.len() * n_f) as f64;
            batch
                .iter()
                .map(|(p, t)| {
                    map.forward(p)
                        .iter()
                        .zip(t)
                        .map(|(o, t)| (o - t) * (o - t))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / denom
        };
        *which(map) += h;
        let up = loss_of(map);
        *which(map) -= 2.0 * h;
        let down = loss_of(map);
        *which(map) += h;
        (up - down) / (2.0 * h)
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut map = NeuralCorticalMap::new(small_encoding(), small_mlp(2), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        randomize_params(&mut map, &mut rng);
        let batch = random_batch(&map, 6, &mut rng);
        let (_, grads) = backward_params(&map, &batch).unwrap();
        let h = 1e-4;

        // A sampled subset of each parameter block.
        let mut checked = 0;
        let mut num = 0.0;
        let mut den = 0.0;
        // Touched table entries only; untouched ones have exactly zero grad.
        let touched: Vec<usize> = grads
            .tables
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(i, _)| i)
            .step_by(7)
            .take(24)
            .collect();
        for i in touched {
            let fd = fd_param(&mut map, &batch, &move |m: &mut NeuralCorticalMap| {
                &mut m.tables_mut()[i]
            }, h);
            num += (grads.tables[i] - fd) * (grads.tables[i] - fd);
            den += fd * fd;
            checked += 1;
        }
        for li in 0..map.layer_count() {
            let w_len = map.layer(li).0.len();
            for i in (0..w_len).step_by((w_len / 8).max(1)) {
                let fd = fd_param(&mut map, &batch, &move |m: &mut NeuralCorticalMap| {
                    &mut m.layer_mut(li).0[i]
                }, h);
                num += (grads.weights[li][i] - fd) * (grads.weights[li][i] - fd);
                den += fd * fd;
                checked += 1;
            }
            let b_len = map.layer(li).1.len();
            for i in (0..b_len).step_by((b_len / 4).max(1)) {
                let fd = fd_param(&mut map, &batch, &move |m: &mut NeuralCorticalMap| {
                    &mut m.layer_mut(li).1[i]
                }, h);
                num += (grads.biases[li][i] - fd) * (grads.biases[li][i] - fd);
                den += fd * fd;
                checked += 1;
            }
        }
        assert!(checked > 50);
        let rel = (num / den.max(1e-30)).sqrt();
        assert!(rel < 1e-5, "relative error {rel} over {checked} params");
    }

    #[test]
    fn constant_field_trains_to_small_loss() {
        let mesh = make_icosphere(2);
        let feat = FeatureMap::constant(mesh.vertex_count(), &[0.7]).unwrap();
        let train = TrainConfig {
            n_faces: 128,
            n_points: 2,
            iterations: 500,
            seed: 11,
            ..TrainConfig::default()
        };
        let (map, trace) = fit(&mesh, &feat, &small_encoding(), &small_mlp(1), &train).unwrap();
        let final_loss = *trace.last().unwrap();
        assert!(final_loss < 1e-4, "final loss {final_loss}");
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for _ in 0..20 {
            let p = crate::geometry::sample_sphere_uniform(
                1,
                crate::geometry::SphereSampling::Random,
                &mut rng,
            )[0];
            let out = map.forward(&p);
            assert!((out[0] - 0.7).abs() < 0.01, "forward {} at {p:?}", out[0]);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let mesh = make_icosphere(1);
        let feat = FeatureMap::constant(mesh.vertex_count(), &[0.3, -0.2]).unwrap();
        let train = TrainConfig {
            n_faces: 32,
            n_points: 2,
            iterations: 50,
            seed: 9,
            ..TrainConfig::default()
        };
        let (m1, t1) = fit(&mesh, &feat, &small_encoding(), &small_mlp(2), &train).unwrap();
        let (m2, t2) = fit(&mesh, &feat, &small_encoding(), &small_mlp(2), &train).unwrap();
        assert_eq!(t1, t2);
        let mut b1 = Vec::new();
        m1.serialize(&mut b1).unwrap();
        let mut b2 = Vec::new();
        m2.serialize(&mut b2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn loss_decreases_in_median() {
        let (mesh, feat, _) = crate::io::synth_subject(2, 3, 1, 2, 4).unwrap();
        let train = TrainConfig {
            n_faces: 128,
            n_points: 2,
            iterations: 400,
            seed: 2,
            ..TrainConfig::default()
        };
        let (_, trace) = fit(&mesh, &feat, &small_encoding(), &small_mlp(1), &train).unwrap();
        let k = trace.len() / 10;
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let first = median(&trace[..k]);
        let last = median(&trace[trace.len() - k..]);
        assert!(last < first, "median loss first {first} last {last}");
    }
}
