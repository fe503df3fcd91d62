//! JSON checkpoints of trained or baseline subspace pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::RepresentativePair;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub gamma: f64,
    pub iterations: usize,
    /// Objective at the stored pair, when it was evaluated.
    pub final_cost: Option<f64>,
    /// Gradient metric-norm at the stored pair, when it was evaluated.
    pub final_grad_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A representative pair with `phi` and `psi` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub r: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub meta: CheckpointMeta,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl Checkpoint {
    pub fn from_pair(pair: &RepresentativePair, meta: CheckpointMeta) -> Self {
        Self {
            n: pair.n(),
            r: pair.rank(),
            phi: row_major(pair.phi().cols()),
            psi: row_major(pair.psi().cols()),
            meta,
        }
    }

    /// Rebuilds the pair, re-orthonormalizing the stored bases.
    pub fn to_pair(&self) -> Result<RepresentativePair> {
        let len = self.n * self.r;
        if self.r == 0 || self.phi.len() != len || self.psi.len() != len {
            return Err(Error::InvalidData(format!(
                "checkpoint declares {}x{} but stores {} and {} entries",
                self.n,
                self.r,
                self.phi.len(),
                self.psi.len()
            )));
        }
        let phi = DMatrix::from_row_slice(self.n, self.r, &self.phi);
        let psi = DMatrix::from_row_slice(self.n, self.r, &self.psi);
        RepresentativePair::from_bases(&phi, &psi)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("checkpoint JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::subspace_distance;

    #[test]
    fn round_trip_preserves_the_subspaces() {
        let pair = RepresentativePair::from_bases(
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            &DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.0, 1.0, 0.5, 0.0]),
        )
        .unwrap();
        let meta = CheckpointMeta { gamma: 1e-3, label: Some("x".into()), ..Default::default() };
        let back = Checkpoint::from_json(&Checkpoint::from_pair(&pair, meta).to_json()).unwrap().to_pair().unwrap();
        assert!(subspace_distance(pair.phi().cols(), back.phi().cols()) < 1e-14);
        assert!(subspace_distance(pair.psi().cols(), back.psi().cols()) < 1e-14);
    }

    #[test]
    fn row_major_layout() {
        let pair = RepresentativePair::symmetric(crate::manifold::OrthoRep::identity_columns(3, 2));
        let ck = Checkpoint::from_pair(&pair, CheckpointMeta::default());
        assert_eq!(ck.phi, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(Checkpoint { r: 3, ..ck }.to_pair().is_err());
    }
}
