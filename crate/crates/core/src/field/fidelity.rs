//! Fit-fidelity evaluation: ordinary least squares between model outputs and
//! barycentric-interpolation targets on an evaluation mesh.

use rayon::prelude::*;

use super::NeuralCorticalMap;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{SphericalMesh, UnitPoint};
use crate::locate::FaceLocator;

/// Per-channel regression of predictions on interpolated targets.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct FitRegression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Regresses `predict` against targets interpolated from the reference mesh
/// at every vertex of `eval_mesh`. One regression per channel.
pub fn regress_fidelity<P>(
    predict: P,
    eval_mesh: &SphericalMesh,
    ref_mesh: &SphericalMesh,
    ref_feat: &FeatureMap,
) -> Result<Vec<FitRegression>>
where
    P: Fn(&UnitPoint) -> Vec<f64> + Sync,
{
    if ref_feat.rows() != ref_mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "reference features have {} rows for {} vertices",
            ref_feat.rows(),
            ref_mesh.vertex_count()
        )));
    }
    let locator = FaceLocator::new(ref_mesh);
    let n_f = ref_feat.channels();
    // Order-preserving parallel map keeps downstream sums deterministic.
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = eval_mesh
        .vertices()
        .par_iter()
        .map(|v| -> Result<(Vec<f64>, Vec<f64>)> {
            let (fi, w) = locator.locate(v)?;
            let face = ref_mesh.face(fi);
            let mut target = vec![0.0; n_f];
            for (k, &vi) in face.iter().enumerate() {
                for (t, x) in target.iter_mut().zip(ref_feat.row(vi)) {
                    *t += w[k] * x;
                }
            }
            Ok((target, predict(v)))
        })
        .collect::<Result<_>>()?;

    let n = pairs.len() as f64;
    let mut out = Vec::with_capacity(n_f);
    for c in 0..n_f {
        let mean_x = pairs.iter().map(|(t, _)| t[c]).sum::<f64>() / n;
        let mean_y = pairs.iter().map(|(_, p)| p[c]).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for (t, p) in &pairs {
            let dx = t[c] - mean_x;
            let dy = p[c] - mean_y;
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let var_x = sxx / n;
        if var_x < 1e-14 {
            return Err(Error::UndefinedRegression(format!(
                "interpolated targets of channel {c} have zero variance"
            )));
        }
        let slope = sxy / sxx;
        let intercept = mean_y - slope * mean_x;
        let r_squared = if syy < 1e-14 {
            // Constant predictions explain nothing.
            0.0
        } else {
            (sxy * sxy) / (sxx * syy)
        };
        out.push(FitRegression {
            slope,
            intercept,
            r_squared,
        });
    }
    Ok(out)
}

/// [`regress_fidelity`] with the map's forward pass as the predictor.
pub fn evaluate_fit_fidelity(
    map: &NeuralCorticalMap,
    eval_mesh: &SphericalMesh,
    ref_mesh: &SphericalMesh,
    ref_feat: &FeatureMap,
) -> Result<Vec<FitRegression>> {
    if map.output_dim() != ref_feat.channels() {
        return Err(Error::Shape(format!(
            "map outputs {} channels, reference has {}",
            map.output_dim(),
            ref_feat.channels()
        )));
    }
    regress_fidelity(|p| map.forward(p), eval_mesh, ref_mesh, ref_feat)
}
