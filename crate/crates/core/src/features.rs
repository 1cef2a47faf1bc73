//! Per-vertex feature values and parcellation labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-vertex feature values with one or more channels, stored row-major.
///
/// The row count must equal the owning mesh's vertex count; that match is
/// checked wherever a mesh and a map meet.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    values: Vec<f64>,
    rows: usize,
    channels: usize,
    channel_names: Vec<String>,
}

impl FeatureMap {
    /// Builds from row-major values; all values must be finite.
    pub fn new(rows: usize, channels: usize, values: Vec<f64>, names: &[&str]) -> Result<Self> {
        if values.len() != rows * channels {
            return Err(Error::Shape(format!(
                "expected {} values for {} rows x {} channels, got {}",
                rows * channels,
                rows,
                channels,
                values.len()
            )));
        }
        if names.len() != channels {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                names.len(),
                channels
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericFault(format!(
                "non-finite feature value {bad}"
            )));
        }
        Ok(Self {
            values,
            rows,
            channels,
            channel_names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Builds from per-channel columns of equal length.
    pub fn from_channels(channels: &[Vec<f64>], names: &[&str]) -> Result<Self> {
        let n_channels = channels.len();
        if n_channels == 0 {
            return Err(Error::Shape("feature map needs at least one channel".into()));
        }
        let rows = channels[0].len();
        if channels.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("channels have unequal lengths".into()));
        }
        let mut values = Vec::with_capacity(rows * n_channels);
        for r in 0..rows {
            for c in channels {
                values.push(c[r]);
            }
        }
        Self::new(rows, n_channels, values, names)
    }

    /// A map with every row equal to `per_channel`.
    pub fn constant(rows: usize, per_channel: &[f64]) -> Result<Self> {
        let names: Vec<String> = (0..per_channel.len()).map(|i| format!("f{i}")).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Self::new(
            rows,
            per_channel.len(),
            per_channel
                .iter()
                .cycle()
                .take(rows * per_channel.len())
                .cloned()
                .collect(),
            &name_refs,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn row(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.channels..(vertex + 1) * self.channels]
    }

    pub fn value(&self, vertex: usize, channel: usize) -> f64 {
        self.values[vertex * self.channels + channel]
    }

    /// Copies one channel out as a column vector.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.value(r, channel)).collect()
    }
}

/// Integer region labels, one per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Parcellation {
    labels: Vec<u32>,
    label_names: Option<BTreeMap<u32, String>>,
}

impl Parcellation {
    pub fn new(labels: Vec<u32>) -> Self {
        Self {
            labels,
            label_names: None,
        }
    }

    pub fn with_names(labels: Vec<u32>, names: BTreeMap<u32, String>) -> Self {
        Self {
            labels,
            label_names: Some(names),
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_names(&self) -> Option<&BTreeMap<u32, String>> {
        self.label_names.as_ref()
    }

    /// Sorted distinct labels present.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let fm = FeatureMap::from_channels(
            &[vec![1.0, 2.0], vec![10.0, 20.0]],
            &["a", "b"],
        )
        .unwrap();
        assert_eq!(fm.rows(), 2);
        assert_eq!(fm.channels(), 2);
        assert_eq!(fm.row(0), &[1.0, 10.0]);
        assert_eq!(fm.row(1), &[2.0, 20.0]);
        assert_eq!(fm.channel(1), vec![10.0, 20.0]);
    }

    #[test]
    fn non_finite_rejected() {
        let err = FeatureMap::new(1, 1, vec![f64::NAN], &["a"]).unwrap_err();
        assert!(matches!(err, crate::error::Error::NumericFault(_)));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = FeatureMap::new(2, 2, vec![0.0; 3], &["a", "b"]).unwrap_err();
        assert!(matches!(err, crate::error::Error::Shape(_)));
    }
}
