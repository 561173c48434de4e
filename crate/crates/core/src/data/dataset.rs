use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FudaError, Result};
use crate::nn::Matrix;

/// Feature vectors of one domain, with optional class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    domain_id: String,
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl DomainDataset {
    pub fn new(
        domain_id: impl Into<String>,
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let domain_id = domain_id.into();
        if num_classes < 2 {
            return Err(FudaError::invalid("a dataset needs at least two classes"));
        }
        if features.rows() == 0 {
            return Err(FudaError::invalid(format!("domain {domain_id} has no samples")));
        }
        if features.cols() == 0 {
            return Err(FudaError::invalid(format!(
                "domain {domain_id} has zero-width features"
            )));
        }
        if !features.is_finite() {
            return Err(FudaError::invalid(format!(
                "domain {domain_id} features contain NaN or Inf"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(FudaError::dim(format!(
                    "domain {domain_id}: {} labels for {} samples",
                    labels.len(),
                    features.rows()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
                return Err(FudaError::invalid(format!(
                    "domain {domain_id}: label {bad} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(DomainDataset {
            domain_id,
            features,
            labels,
            num_classes,
        })
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| FudaError::invalid(format!("domain {} is unlabeled", self.domain_id)))
    }

    /// Label-free view used wherever target labels must stay hidden.
    pub fn to_unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            domain_id: self.domain_id.clone(),
            features: self.features.clone(),
            num_classes: self.num_classes,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            domain_id: self.domain_id.clone(),
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    /// SHA-256 over id, class count, feature bits and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.domain_id.as_bytes());
        h.update([0u8]);
        h.update((self.num_classes as u64).to_le_bytes());
        h.update((self.features.rows() as u64).to_le_bytes());
        h.update((self.features.cols() as u64).to_le_bytes());
        for v in self.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        match &self.labels {
            Some(labels) => {
                h.update([1u8]);
                for &y in labels {
                    h.update((y as u64).to_le_bytes());
                }
            }
            None => h.update([0u8]),
        }
        to_hex(&h.finalize())
    }
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A domain with no labels at all. Adaptation and aggregation code paths
/// only ever receive this type for the target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    domain_id: String,
    features: Matrix,
    num_classes: usize,
}

impl UnlabeledDataset {
    pub fn new(domain_id: impl Into<String>, features: Matrix, num_classes: usize) -> Result<Self> {
        let ds = DomainDataset::new(domain_id, features, None, num_classes)?;
        Ok(ds.to_unlabeled())
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

impl From<UnlabeledDataset> for DomainDataset {
    fn from(u: UnlabeledDataset) -> Self {
        DomainDataset {
            domain_id: u.domain_id,
            features: u.features,
            labels: None,
            num_classes: u.num_classes,
        }
    }
}
