//! NC-Reg: stochastic minimization of the spherical feature-matching energy
//! over rotation parameters with Adam, moving-average stall detection, and
//! reset strategies (none / random / simulated annealing), plus the
//! barycentric-interpolation baseline and a brute-force Euler-grid oracle.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::field::{NeuralCorticalMap, Scratch};
use crate::geometry::{sample_sphere_uniform, SphereSampling, SphericalMesh, UnitPoint};
use crate::locate::FaceLocator;
use crate::rotation::{
    sample_rotation, ParamKind, ParamsDifferential, Rotation, RotationParams, RotationSampling,
};

/// Fixed chunk count for the parallel point loops; partial sums merge in
/// chunk order so results do not depend on the thread count.
const POINT_CHUNKS: usize = 4;

/// A feature map on the sphere evaluated during registration: either a
/// trained neural map or a mesh with barycentric interpolation.
pub enum FeatureField {
    Neural(NeuralCorticalMap),
    Mesh(MeshField),
}

/// Mesh-backed field: locate the face under a query, interpolate, and use
/// the face's constant piecewise-linear gradient as the input Jacobian.
pub struct MeshField {
    mesh: SphericalMesh,
    feat: FeatureMap,
    locator: FaceLocator,
}

impl MeshField {
    pub fn new(mesh: SphericalMesh, feat: FeatureMap) -> Result<Self> {
        if feat.rows() != mesh.vertex_count() {
            return Err(Error::Shape(format!(
                "feature map has {} rows but mesh has {} vertices",
                feat.rows(),
                mesh.vertex_count()
            )));
        }
        let locator = FaceLocator::new(&mesh);
        Ok(Self {
            mesh,
            feat,
            locator,
        })
    }

    pub fn mesh(&self) -> &SphericalMesh {
        &self.mesh
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feat
    }

    fn evaluate_into(&self, p: &Vector3<f64>, out: &mut [f64]) -> Result<()> {
        let q = UnitPoint::from_vector(*p)?;
        let (fi, w) = self.locator.locate(&q)?;
        let face = self.mesh.face(fi);
        out.fill(0.0);
        for (k, &vi) in face.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.feat.row(vi)) {
                *o += w[k] * x;
            }
        }
        Ok(())
    }

    /// In-plane gradients of the barycentric coordinates of face `fi`:
    /// grad lambda_k = (n x e_k) / |n|^2 with e_k the opposite edge and
    /// n the (unnormalized) face normal, |n| = 2 A.
    fn barycentric_gradients(&self, fi: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.mesh.face_vertices(fi);
        let n = (b - a).cross(&(c - a));
        let inv = 1.0 / n.norm_squared();
        [
            n.cross(&(c - b)) * inv,
            n.cross(&(a - c)) * inv,
            n.cross(&(b - a)) * inv,
        ]
    }

    fn jacobian_rows(&self, p: &Vector3<f64>) -> Result<Vec<Vector3<f64>>> {
        let q = UnitPoint::from_vector(*p)?;
        let (fi, _) = self.locator.locate(&q)?;
        let grads = self.barycentric_gradients(fi);
        let face = self.mesh.face(fi);
        let n_f = self.feat.channels();
        let mut rows = vec![Vector3::zeros(); n_f];
        for (k, &vi) in face.iter().enumerate() {
            for (row, x) in rows.iter_mut().zip(self.feat.row(vi)) {
                *row += grads[k] * *x;
            }
        }
        Ok(rows)
    }

    fn eval_and_vjp(
        &self,
        p: &Vector3<f64>,
        cotangent: &[f64],
        out: &mut [f64],
    ) -> Result<Vector3<f64>> {
        let q = UnitPoint::from_vector(*p)?;
        let (fi, w) = self.locator.locate(&q)?;
        let face = self.mesh.face(fi);
        out.fill(0.0);
        for (k, &vi) in face.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.feat.row(vi)) {
                *o += w[k] * x;
            }
        }
        let grads = self.barycentric_gradients(fi);
        let mut g = Vector3::zeros();
        for (k, &vi) in face.iter().enumerate() {
            let dot: f64 = cotangent
                .iter()
                .zip(self.feat.row(vi))
                .map(|(c, x)| c * x)
                .sum();
            g += grads[k] * dot;
        }
        Ok(g)
    }
}

/// Per-thread evaluation buffers for a field.
pub struct FieldScratch {
    neural: Option<Scratch>,
}

impl FeatureField {
    pub fn neural(map: NeuralCorticalMap) -> Self {
        FeatureField::Neural(map)
    }

    pub fn mesh(mesh: SphericalMesh, feat: FeatureMap) -> Result<Self> {
        Ok(FeatureField::Mesh(MeshField::new(mesh, feat)?))
    }

    pub fn channels(&self) -> usize {
        match self {
            FeatureField::Neural(m) => m.output_dim(),
            FeatureField::Mesh(m) => m.feat.channels(),
        }
    }

    pub fn scratch(&self) -> FieldScratch {
        FieldScratch {
            neural: match self {
                FeatureField::Neural(m) => Some(Scratch::for_map(m)),
                FeatureField::Mesh(_) => None,
            },
        }
    }

    pub(crate) fn evaluate_into(
        &self,
        p: &Vector3<f64>,
        out: &mut [f64],
        scratch: &mut FieldScratch,
    ) -> Result<()> {
        match self {
            FeatureField::Neural(m) => {
                let s = scratch.neural.as_mut().expect("neural scratch");
                m.forward_into(p, s);
                out.copy_from_slice(s.output());
                Ok(())
            }
            FeatureField::Mesh(m) => m.evaluate_into(p, out),
        }
    }

    /// Feature values at `p`.
    pub fn evaluate(&self, p: &UnitPoint) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.channels()];
        let mut scratch = self.scratch();
        self.evaluate_into(&p.vector(), &mut out, &mut scratch)?;
        Ok(out)
    }

    /// Jacobian d field / d p as `channels` rows of 3.
    pub fn input_jacobian(&self, p: &UnitPoint) -> Result<Vec<Vector3<f64>>> {
        match self {
            FeatureField::Neural(m) => Ok(m.input_gradient(p)),
            FeatureField::Mesh(m) => m.jacobian_rows(&p.vector()),
        }
    }

    /// Fused evaluate + vector-Jacobian product with the input point.
    pub(crate) fn eval_and_vjp(
        &self,
        p: &Vector3<f64>,
        cotangent: &[f64],
        out: &mut [f64],
        scratch: &mut FieldScratch,
    ) -> Result<Vector3<f64>> {
        match self {
            FeatureField::Neural(m) => {
                let s = scratch.neural.as_mut().expect("neural scratch");
                m.forward_into(p, s);
                out.copy_from_slice(s.output());
                Ok(m.vjp_input(cotangent, s))
            }
            FeatureField::Mesh(m) => m.eval_and_vjp(p, cotangent, out),
        }
    }
}

/// Reset strategy applied when a descent stalls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetStrategy {
    None,
    Random,
    Sa,
}

impl std::str::FromStr for ResetStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ResetStrategy::None),
            "random" => Ok(ResetStrategy::Random),
            "sa" => Ok(ResetStrategy::Sa),
            other => Err(Error::InvalidConfig(format!(
                "unknown reset strategy '{other}'"
            ))),
        }
    }
}

/// Registration configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    /// Training sample count N.
    pub points: usize,
    /// Disjoint validation sample count.
    pub val_points: usize,
    /// Restart budget (number of descents).
    pub restarts: usize,
    pub max_steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Moving-average window t_m.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Consecutive below-tolerance steps t_diff before declaring a stall.
    pub stall_patience: usize,
    pub reset_strategy: ResetStrategy,
    /// Initial SA temperature.
    pub t0: f64,
    pub t_min: f64,
    pub alpha_t: f64,
    /// Candidate draws per SA reset (N_T_iter).
    pub sa_draws: usize,
    pub parametrization: ParamKind,
    pub sampler: RotationSampling,
    pub seed: u64,
    /// Redraw the training points every descent step instead of keeping one
    /// fixed, seeded set.
    pub resample_each_step: bool,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            points: 4096,
            val_points: 2048,
            restarts: 100,
            max_steps: 300,
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            stall_window: 10,
            stall_tol: 1e-5,
            stall_patience: 5,
            reset_strategy: ResetStrategy::Sa,
            t0: 0.05,
            t_min: 1e-4,
            alpha_t: 0.9,
            sa_draws: 5,
            parametrization: ParamKind::Quaternion,
            sampler: RotationSampling::PaperAxisAngle,
            seed: 0,
            resample_each_step: false,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.val_points == 0 {
            return Err(Error::InvalidConfig("point counts must be positive".into()));
        }
        if self.restarts == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig(
                "restarts and max_steps must be positive".into(),
            ));
        }
        if self.stall_window == 0 || self.stall_patience == 0 {
            return Err(Error::InvalidConfig(
                "stall window and patience must be at least 1".into(),
            ));
        }
        if !(0.0 < self.alpha_t && self.alpha_t < 1.0) {
            return Err(Error::InvalidConfig("alpha_t must be in (0, 1)".into()));
        }
        if self.t_min <= 0.0 || self.t0 <= 0.0 {
            return Err(Error::InvalidConfig("temperatures must be positive".into()));
        }
        if self.sa_draws == 0 {
            return Err(Error::InvalidConfig("sa_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One descent's record inside a registration run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start_rotation: Rotation,
    pub end_rotation: Rotation,
    pub end_train_loss: f64,
    pub val_loss: f64,
    pub steps: usize,
    pub stalled: bool,
    /// Whether the following reset proposal was accepted (`None` for the
    /// final restart and for the no-reset strategy).
    pub reset_accepted: Option<bool>,
    /// Temperature at the time this candidate was recorded.
    pub temperature: f64,
}

/// Full registration output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub best_rotation: Rotation,
    pub best_val_loss: f64,
    /// Concatenated per-step training losses across all descents.
    pub loss_trace: Vec<f64>,
    pub restarts: Vec<RestartRecord>,
    pub temperature_trace: Vec<f64>,
    pub wall_seconds: f64,
    pub seed: u64,
    pub config: RegConfig,
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let len = n.div_ceil(POINT_CHUNKS);
    (0..POINT_CHUNKS)
        .map(|k| (k * len).min(n)..((k + 1) * len).min(n))
        .collect()
}

/// Mean over points and channels of the squared difference between cached
/// fixed values and the moving field at rotated points.
fn energy_over_points(
    m: &FeatureField,
    f_values: &[f64],
    points: &[Vector3<f64>],
    rot: &Rotation,
) -> Result<f64> {
    let n_f = m.channels();
    let sums: Vec<Result<f64>> = chunk_ranges(points.len())
        .into_par_iter()
        .map(|range| {
            let mut scratch = m.scratch();
            let mut out = vec![0.0; n_f];
            let mut sq = 0.0;
            for i in range {
                let rp = rot.apply_vector(&points[i]);
                m.evaluate_into(&rp, &mut out, &mut scratch)?;
                for (o, f) in out.iter().zip(&f_values[i * n_f..(i + 1) * n_f]) {
                    let d = o - f;
                    sq += d * d;
                }
            }
            Ok(sq)
        })
        .collect();
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / (points.len() * n_f) as f64)
}

/// Energy and its gradient with respect to the rotation parameters:
/// (2 / (N n_f)) sum_i (M(R p_i) - F(p_i))^T J_M(R p_i) d(R p_i)/dtheta.
fn gradient_over_points(
    m: &FeatureField,
    f_values: &[f64],
    points: &[Vector3<f64>],
    diff: &ParamsDifferential,
) -> Result<(f64, Vec<f64>)> {
    let n_f = m.channels();
    let dim = diff.dim();
    let rot = *diff.rotation();
    let denom = (points.len() * n_f) as f64;
    let partials: Vec<Result<(f64, Vec<f64>)>> = chunk_ranges(points.len())
        .into_par_iter()
        .map(|range| {
            let mut scratch = m.scratch();
            let mut out = vec![0.0; n_f];
            let mut cot = vec![0.0; n_f];
            let mut grad = vec![0.0; dim];
            let mut sq = 0.0;
            for i in range {
                let p = points[i];
                let rp = rot.apply_vector(&p);
                // Forward first to form the residual cotangent.
                m.evaluate_into(&rp, &mut out, &mut scratch)?;
                let f = &f_values[i * n_f..(i + 1) * n_f];
                for c in 0..n_f {
                    let r = out[c] - f[c];
                    sq += r * r;
                    cot[c] = 2.0 * r / denom;
                }
                let g_p = m.eval_and_vjp(&rp, &cot, &mut out, &mut scratch)?;
                for (g, col) in grad.iter_mut().zip(diff.point_jacobian(&p)) {
                    *g += g_p.dot(&col);
                }
            }
            Ok((sq, grad))
        })
        .collect();
    let mut total_sq = 0.0;
    let mut total_grad = vec![0.0; dim];
    for part in partials {
        let (sq, grad) = part?;
        total_sq += sq;
        for (t, g) in total_grad.iter_mut().zip(&grad) {
            *t += g;
        }
    }
    Ok((total_sq / denom, total_grad))
}

fn check_channels(f: &FeatureField, m: &FeatureField) -> Result<usize> {
    let n_f = f.channels();
    if n_f != m.channels() {
        return Err(Error::Shape(format!(
            "fixed field has {} channels, moving field has {}",
            n_f,
            m.channels()
        )));
    }
    Ok(n_f)
}

fn evaluate_field_at(f: &FeatureField, points: &[Vector3<f64>]) -> Result<Vec<f64>> {
    let n_f = f.channels();
    let chunks: Vec<Result<Vec<f64>>> = chunk_ranges(points.len())
        .into_par_iter()
        .map(|range| {
            let mut scratch = f.scratch();
            let mut out = vec![0.0; n_f];
            let mut values = Vec::with_capacity(range.len() * n_f);
            for i in range {
                f.evaluate_into(&points[i], &mut out, &mut scratch)?;
                values.extend_from_slice(&out);
            }
            Ok(values)
        })
        .collect();
    let mut all = Vec::with_capacity(points.len() * n_f);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// The registration energy over an explicit point set.
pub fn energy(
    f: &FeatureField,
    m: &FeatureField,
    rot: &Rotation,
    points: &[UnitPoint],
) -> Result<f64> {
    check_channels(f, m)?;
    if points.is_empty() {
        return Err(Error::InvalidConfig("empty point set".into()));
    }
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| p.vector()).collect();
    let f_values = evaluate_field_at(f, &pts)?;
    energy_over_points(m, &f_values, &pts, rot)
}

/// Gradient of [`energy`] with respect to the rotation parameters.
pub fn energy_gradient(
    f: &FeatureField,
    m: &FeatureField,
    params: &RotationParams,
    points: &[UnitPoint],
) -> Result<Vec<f64>> {
    check_channels(f, m)?;
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| p.vector()).collect();
    let f_values = evaluate_field_at(f, &pts)?;
    let diff = params.differential()?;
    Ok(gradient_over_points(m, &f_values, &pts, &diff)?.1)
}

/// Metropolis acceptance rule of the SA reset: a better candidate is always
/// taken; a worse one with probability exp(-delta / temperature).
pub fn metropolis_accept(delta: f64, temperature: f64, uniform: f64) -> bool {
    delta < 0.0 || (delta > 0.0 && uniform < (-delta / temperature).exp())
}

/// Outcome of one SA reset event.
#[derive(Clone, Debug)]
pub struct SaResetOutcome {
    pub params: RotationParams,
    pub accepted: bool,
    pub temperature: f64,
}

/// Simulated-annealing reset: draws up to `sa_draws` candidate rotations,
/// accepts by the Metropolis rule against `current_loss`, then cools the
/// temperature once (unless it already reached `t_min`). When every
/// candidate is rejected the current parameters are kept.
pub fn sa_reset<R: Rng + ?Sized>(
    f: &FeatureField,
    m: &FeatureField,
    points: &[UnitPoint],
    current: &RotationParams,
    current_loss: f64,
    temperature: f64,
    cfg: &RegConfig,
    rng: &mut R,
) -> Result<SaResetOutcome> {
    check_channels(f, m)?;
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| p.vector()).collect();
    let f_values = evaluate_field_at(f, &pts)?;
    sa_reset_cached(m, &f_values, &pts, current, current_loss, temperature, cfg, rng)
}

#[allow(clippy::too_many_arguments)]
fn sa_reset_cached<R: Rng + ?Sized>(
    m: &FeatureField,
    f_values: &[f64],
    points: &[Vector3<f64>],
    current: &RotationParams,
    current_loss: f64,
    temperature: f64,
    cfg: &RegConfig,
    rng: &mut R,
) -> Result<SaResetOutcome> {
    let mut params = current.clone();
    let mut accepted = false;
    for _ in 0..cfg.sa_draws {
        let candidate = sample_rotation(cfg.sampler, rng);
        let cand_loss = energy_over_points(m, f_values, points, &candidate)?;
        let delta = cand_loss - current_loss;
        let u: f64 = rng.random();
        if metropolis_accept(delta, temperature, u) {
            params = RotationParams::from_rotation(cfg.parametrization, &candidate);
            accepted = true;
            break;
        }
    }
    let next_temperature = if temperature > cfg.t_min {
        cfg.alpha_t * temperature
    } else {
        temperature
    };
    Ok(SaResetOutcome {
        params,
        accepted,
        temperature: next_temperature,
    })
}

struct DescentOutcome {
    params: RotationParams,
    trace: Vec<f64>,
    stalled: bool,
    steps: usize,
}

/// Adam descent with moving-average stall detection. After each step the
/// loss is evaluated at the new parameters; a stall is declared when
/// |L_t - mean(previous stall_window losses)| stays below stall_tol for
/// stall_patience consecutive steps.
fn descend_cached(
    m: &FeatureField,
    f_values: &mut Vec<f64>,
    points: &mut Vec<Vector3<f64>>,
    f_field: &FeatureField,
    start: RotationParams,
    cfg: &RegConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DescentOutcome> {
    let mut params = start;
    let dim = params.dim();
    let mut adam_m = vec![0.0; dim];
    let mut adam_v = vec![0.0; dim];
    let mut trace: Vec<f64> = Vec::new();
    let mut consecutive = 0usize;
    let mut stalled = false;
    let mut steps = 0usize;
    for t in 1..=cfg.max_steps {
        if cfg.resample_each_step {
            *points = sample_sphere_uniform(cfg.points, SphereSampling::Random, rng)
                .iter()
                .map(|p| p.vector())
                .collect();
            *f_values = evaluate_field_at(f_field, points)?;
        }
        let diff = params.differential()?;
        let (_, grad) = gradient_over_points(m, f_values, points, &diff)?;
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        {
            let values = params.values_mut();
            for i in 0..dim {
                adam_m[i] = cfg.beta1 * adam_m[i] + (1.0 - cfg.beta1) * grad[i];
                adam_v[i] = cfg.beta2 * adam_v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                let mhat = adam_m[i] / bc1;
                let vhat = adam_v[i] / bc2;
                values[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
        // Keep quaternion parameters on the unit sphere.
        if let RotationParams::Quaternion(q) = &mut params {
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n < 1e-12 {
                return Err(Error::DegenerateParameter(
                    "quaternion collapsed during descent".into(),
                ));
            }
            for c in q.iter_mut() {
                *c /= n;
            }
        }
        let loss = energy_over_points(m, f_values, points, &params.to_rotation()?)?;
        if !loss.is_finite() {
            return Err(Error::NumericFault(format!(
                "non-finite registration loss at step {t}"
            )));
        }
        steps = t;
        if trace.len() >= cfg.stall_window {
            let window = &trace[trace.len() - cfg.stall_window..];
            let mean = window.iter().sum::<f64>() / cfg.stall_window as f64;
            if (loss - mean).abs() < cfg.stall_tol {
                consecutive += 1;
            } else {
                consecutive = 0;
            }
        }
        trace.push(loss);
        if consecutive >= cfg.stall_patience {
            stalled = true;
            break;
        }
    }
    Ok(DescentOutcome {
        params,
        trace,
        stalled,
        steps,
    })
}

/// One gradient descent from `start`, on a fixed seeded point set drawn from
/// `cfg.seed`. Returns the end parameters, the per-step loss trace, and
/// whether the descent stalled (as opposed to hitting `max_steps`).
pub fn descend(
    f: &FeatureField,
    m: &FeatureField,
    start: &RotationParams,
    cfg: &RegConfig,
) -> Result<(RotationParams, Vec<f64>, bool)> {
    cfg.validate()?;
    check_channels(f, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points: Vec<Vector3<f64>> =
        sample_sphere_uniform(cfg.points, SphereSampling::Random, &mut rng)
            .iter()
            .map(|p| p.vector())
            .collect();
    let mut f_values = evaluate_field_at(f, &points)?;
    let out = descend_cached(m, &mut f_values, &mut points, f, start.clone(), cfg, &mut rng)?;
    Ok((out.params, out.trace, out.stalled))
}

/// Full NC-Reg run: repeated descents with candidate recording and the
/// configured reset strategy; the candidate with the lowest validation loss
/// wins. Deterministic in `cfg.seed`.
pub fn nc_reg(f: &FeatureField, m: &FeatureField, cfg: &RegConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    check_channels(f, m)?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points: Vec<Vector3<f64>> =
        sample_sphere_uniform(cfg.points, SphereSampling::Random, &mut rng)
            .iter()
            .map(|p| p.vector())
            .collect();
    let val_points: Vec<Vector3<f64>> =
        sample_sphere_uniform(cfg.val_points, SphereSampling::Random, &mut rng)
            .iter()
            .map(|p| p.vector())
            .collect();
    let mut f_values = evaluate_field_at(f, &points)?;
    let f_val_values = evaluate_field_at(f, &val_points)?;

    let mut params = RotationParams::from_rotation(cfg.parametrization, &Rotation::identity());
    let mut temperature = cfg.t0;
    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut loss_trace = Vec::new();
    let mut temperature_trace = Vec::new();
    let mut best: Option<(Rotation, f64)> = None;

    for restart in 0..cfg.restarts {
        let start_rotation = params.to_rotation()?;
        let outcome = descend_cached(m, &mut f_values, &mut points, f, params, cfg, &mut rng)?;
        let end_rotation = outcome.params.to_rotation()?;
        let end_train_loss = *outcome
            .trace
            .last()
            .expect("descent takes at least one step");
        let val_loss = energy_over_points(m, &f_val_values, &val_points, &end_rotation)?;
        if best.as_ref().map_or(true, |(_, b)| val_loss < *b) {
            best = Some((end_rotation, val_loss));
        }
        loss_trace.extend_from_slice(&outcome.trace);
        temperature_trace.push(temperature);

        let last = restart + 1 == cfg.restarts;
        let mut record = RestartRecord {
            start_rotation,
            end_rotation,
            end_train_loss,
            val_loss,
            steps: outcome.steps,
            stalled: outcome.stalled,
            reset_accepted: None,
            temperature,
        };
        params = outcome.params;
        match cfg.reset_strategy {
            ResetStrategy::None => {
                restarts.push(record);
                break;
            }
            ResetStrategy::Random => {
                if !last {
                    let next = sample_rotation(cfg.sampler, &mut rng);
                    params = RotationParams::from_rotation(cfg.parametrization, &next);
                    record.reset_accepted = Some(true);
                }
                restarts.push(record);
            }
            ResetStrategy::Sa => {
                if !last {
                    let sa = sa_reset_cached(
                        m,
                        &f_values,
                        &points,
                        &params,
                        end_train_loss,
                        temperature,
                        cfg,
                        &mut rng,
                    )?;
                    params = sa.params;
                    temperature = sa.temperature;
                    record.reset_accepted = Some(sa.accepted);
                }
                restarts.push(record);
            }
        }
    }

    let (best_rotation, best_val_loss) = best.expect("at least one restart runs");
    Ok(RegistrationResult {
        best_rotation,
        best_val_loss,
        loss_trace,
        restarts,
        temperature_trace,
        wall_seconds: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
        config: *cfg,
    })
}

/// The barycentric-interpolation baseline: the same algorithm as [`nc_reg`]
/// with both sides evaluated by locate-and-interpolate on their meshes.
pub fn interp_reg(
    fixed_mesh: &SphericalMesh,
    fixed_feat: &FeatureMap,
    moving_mesh: &SphericalMesh,
    moving_feat: &FeatureMap,
    cfg: &RegConfig,
) -> Result<RegistrationResult> {
    let f = FeatureField::mesh(fixed_mesh.clone(), fixed_feat.clone())?;
    let m = FeatureField::mesh(moving_mesh.clone(), moving_feat.clone())?;
    nc_reg(&f, &m, cfg)
}

/// Exhaustive energy search over an intrinsic Z-Y-X Euler grid covering
/// SO(3): yaw and roll sweep [-180, 180) degrees, pitch sweeps [-90, 90]
/// inclusive. Returns the grid minimizer and its energy.
pub fn brute_force_oracle(
    f: &FeatureField,
    m: &FeatureField,
    grid_step_degrees: f64,
    points: &[UnitPoint],
) -> Result<(Rotation, f64)> {
    if grid_step_degrees < 5.0 {
        return Err(Error::InvalidConfig(format!(
            "grid step {grid_step_degrees} below the 5 degree floor"
        )));
    }
    check_channels(f, m)?;
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| p.vector()).collect();
    let f_values = evaluate_field_at(f, &pts)?;
    let full_steps = (360.0 / grid_step_degrees - 1e-9).floor() as i64 + 1;
    let half_steps = (180.0 / grid_step_degrees + 1e-9).floor() as i64 + 1;
    let mut rotations = Vec::new();
    for iz in 0..full_steps {
        let z = (-180.0 + iz as f64 * grid_step_degrees).to_radians();
        for iy in 0..half_steps {
            let y = (-90.0 + iy as f64 * grid_step_degrees).to_radians();
            for ix in 0..full_steps {
                let x = (-180.0 + ix as f64 * grid_step_degrees).to_radians();
                rotations.push(RotationParams::Euler([z, y, x]).to_rotation()?);
            }
        }
    }
    let n_f = m.channels();
    let denom = (pts.len() * n_f) as f64;
    // Min with index tie-break is associative, so the parallel reduction is
    // deterministic regardless of work splitting.
    let best = rotations
        .par_chunks(128)
        .enumerate()
        .map(|(chunk_idx, chunk)| -> Result<(f64, usize)> {
            let mut scratch = m.scratch();
            let mut out = vec![0.0; n_f];
            let mut local = (f64::INFINITY, usize::MAX);
            for (j, rot) in chunk.iter().enumerate() {
                let mut sq = 0.0;
                for (i, p) in pts.iter().enumerate() {
                    let rp = rot.apply_vector(p);
                    m.evaluate_into(&rp, &mut out, &mut scratch)?;
                    for (o, fv) in out.iter().zip(&f_values[i * n_f..(i + 1) * n_f]) {
                        let d = o - fv;
                        sq += d * d;
                    }
                }
                let e = sq / denom;
                let idx = chunk_idx * 128 + j;
                if e < local.0 || (e == local.0 && idx < local.1) {
                    local = (e, idx);
                }
            }
            Ok(local)
        })
        .try_reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                })
            },
        )?;
    Ok((rotations[best.1], best.0))
}

/// Number of grid rotations [`brute_force_oracle`] evaluates at `step`.
pub fn oracle_grid_size(grid_step_degrees: f64) -> usize {
    let full = (360.0 / grid_step_degrees - 1e-9).floor() as usize + 1;
    let half = (180.0 / grid_step_degrees + 1e-9).floor() as usize + 1;
    full * half * full
}
