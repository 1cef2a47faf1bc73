//! Alignment-quality metrics: per-channel MSE and Pearson correlation, Dice
//! over transferred parcellation labels, and rotation-error reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, Parcellation};
use crate::geometry::SphericalMesh;
use crate::locate::FaceLocator;
use crate::rotation::Rotation;

/// Alignment quality of one registration run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Per-channel mean squared error after warping.
    pub mse: Vec<f64>,
    /// Per-channel Pearson correlation after warping.
    pub pcc: Vec<f64>,
    /// Macro-averaged Dice over transferred labels, when labels exist.
    pub dice: Option<f64>,
    /// Distance to the ground-truth rotation, when one is known.
    pub rotation_error_deg: Option<f64>,
    pub seconds: f64,
}

/// Sample MSE and Pearson correlation of two equal-length vectors.
pub fn mse_pcc(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Shape("need at least two samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    let mut mse = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        mse += (a - b) * (a - b);
    }
    if sxx / n < 1e-24 || syy / n < 1e-24 {
        return Err(Error::UndefinedCorrelation(
            "zero variance in one of the vectors".into(),
        ));
    }
    Ok((mse / n, sxy / (sxx.sqrt() * syy.sqrt())))
}

/// Per-channel `(mse, pcc)` between a fixed map and warped moving values.
pub fn feature_mse_pcc(fixed: &FeatureMap, warped: &FeatureMap) -> Result<Vec<(f64, f64)>> {
    if fixed.rows() != warped.rows() || fixed.channels() != warped.channels() {
        return Err(Error::Shape(format!(
            "feature maps of shape {}x{} and {}x{}",
            fixed.rows(),
            fixed.channels(),
            warped.rows(),
            warped.channels()
        )));
    }
    (0..fixed.channels())
        .map(|c| mse_pcc(&fixed.channel(c), &warped.channel(c)))
        .collect()
}

/// Macro-averaged Dice over `label_set`: mean of `2|A and B| / (|A| + |B|)`;
/// labels absent from both sides are skipped.
pub fn dice_score(a: &[u32], b: &[u32], label_set: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "labelings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &label in label_set {
        let mut na = 0usize;
        let mut nb = 0usize;
        let mut inter = 0usize;
        for (&la, &lb) in a.iter().zip(b) {
            let ia = la == label;
            let ib = lb == label;
            na += ia as usize;
            nb += ib as usize;
            inter += (ia && ib) as usize;
        }
        if na + nb == 0 {
            continue;
        }
        sum += 2.0 * inter as f64 / (na + nb) as f64;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidConfig(
            "no label from the set appears in either labeling".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// [`dice_score`] over the union of labels observed in either labeling.
pub fn dice_score_auto(a: &[u32], b: &[u32]) -> Result<f64> {
    let mut set: Vec<u32> = a.iter().chain(b.iter()).cloned().collect();
    set.sort_unstable();
    set.dedup();
    dice_score(a, b, &set)
}

/// Transfers template labels onto subject vertices: each subject vertex is
/// rotated by the registration rotation, located on the template, and takes
/// the label of the face vertex with the largest barycentric weight.
pub fn transfer_labels(
    template_mesh: &SphericalMesh,
    template_parc: &Parcellation,
    subject_mesh: &SphericalMesh,
    rotation: &Rotation,
) -> Result<Vec<u32>> {
    if template_parc.len() != template_mesh.vertex_count() {
        return Err(Error::Shape(format!(
            "parcellation of {} labels for {} template vertices",
            template_parc.len(),
            template_mesh.vertex_count()
        )));
    }
    let locator = FaceLocator::new(template_mesh);
    let labels = template_parc.labels();
    subject_mesh
        .vertices()
        .iter()
        .map(|v| {
            let rotated = rotation.apply(v);
            let (fi, w) = locator.locate(&rotated)?;
            let face = template_mesh.face(fi);
            let mut best = 0usize;
            for k in 1..3 {
                if w[k] > w[best] {
                    best = k;
                }
            }
            Ok(labels[face[best]])
        })
        .collect()
}
