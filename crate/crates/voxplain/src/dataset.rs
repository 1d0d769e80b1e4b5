//! Labeled volume collections with optional ground-truth masks and
//! set-aside (held-out) sample bookkeeping.

use crate::error::{Error, Result};
use crate::tensor::{Mask, Volume};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// The two cohort labels. `Nc` maps to class index 0, `Ad` to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClassLabel {
    Nc,
    Ad,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Nc => 0,
            ClassLabel::Ad => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ClassLabel::Nc),
            1 => Ok(ClassLabel::Ad),
            _ => Err(Error::InvalidArgument(format!("class index {i} out of range"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Nc => "NC",
            ClassLabel::Ad => "AD",
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AD" => Ok(ClassLabel::Ad),
            "NC" => Ok(ClassLabel::Nc),
            other => Err(Error::InvalidArgument(format!("unknown class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub volume: Volume,
    pub label: ClassLabel,
    /// Ground-truth region mask, when known (phantoms always carry one).
    pub mask: Option<Mask>,
}

/// A dataset with split metadata. Set-aside samples are reserved for
/// heatmap evaluation and must never enter a training fold.
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub samples: Vec<LabeledSample>,
    pub set_aside: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<LabeledSample>, set_aside: Vec<usize>) -> Result<Self> {
        let n = samples.len();
        let mut seen = vec![false; n];
        for &i in &set_aside {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "set-aside index {i} out of range for {n} samples"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "duplicate set-aside index {i}"
                )));
            }
            seen[i] = true;
        }
        Ok(LabeledDataset { samples, set_aside })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices eligible for training/testing folds.
    pub fn pool(&self) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|i| !self.set_aside.contains(i))
            .collect()
    }

    pub fn set_aside_samples(&self) -> impl Iterator<Item = &LabeledSample> {
        self.set_aside.iter().map(|&i| &self.samples[i])
    }

    /// Sample counts per class index over the fold pool.
    pub fn pool_class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &i in &self.pool() {
            counts[self.samples[i].label.index()] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: ClassLabel) -> LabeledSample {
        LabeledSample {
            id: id.into(),
            volume: Volume::new((2, 2, 2), vec![0.0; 8]).unwrap(),
            label,
            mask: None,
        }
    }

    #[test]
    fn class_label_round_trips() {
        assert_eq!("AD".parse::<ClassLabel>().unwrap(), ClassLabel::Ad);
        assert_eq!("nc".parse::<ClassLabel>().unwrap(), ClassLabel::Nc);
        assert!("XY".parse::<ClassLabel>().is_err());
        assert_eq!(ClassLabel::from_index(1).unwrap(), ClassLabel::Ad);
        assert_eq!(ClassLabel::Ad.index(), 1);
        assert_eq!(ClassLabel::Nc.as_str(), "NC");
    }

    #[test]
    fn set_aside_excluded_from_pool() {
        let ds = LabeledDataset::new(
            vec![
                sample("a", ClassLabel::Ad),
                sample("b", ClassLabel::Nc),
                sample("c", ClassLabel::Ad),
            ],
            vec![1],
        )
        .unwrap();
        assert_eq!(ds.pool(), vec![0, 2]);
        assert_eq!(ds.pool_class_counts(), [0, 2]);
        assert_eq!(ds.set_aside_samples().count(), 1);
    }

    #[test]
    fn bad_set_aside_indices_rejected() {
        assert!(LabeledDataset::new(vec![sample("a", ClassLabel::Ad)], vec![3]).is_err());
        assert!(
            LabeledDataset::new(vec![sample("a", ClassLabel::Ad)], vec![0, 0]).is_err()
        );
    }
}
