use serde::{Deserialize, Serialize};

use crate::hilbert::Truncation;
use crate::lindblad::ChannelKind;
use crate::operator::OperatorMatrix;
use crate::C64;
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `⟨σ^z⟩`.
    SigmaZ,
    /// Probability of `|+⟩`.
    PPlus,
    /// `⟨a†a⟩`.
    PhotonNumber,
}

impl Observable {
    /// Diagonal of the observable in the joint basis (all three are diagonal).
    pub fn diagonal(self, trunc: Truncation) -> Vec<f64> {
        (0..trunc.dim())
            .map(|i| {
                let (q, n) = trunc.split(i);
                match self {
                    Observable::SigmaZ => {
                        if q == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Observable::PPlus => {
                        if q == 0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Observable::PhotonNumber => n as f64,
                }
            })
            .collect()
    }

    pub fn matrix(self, trunc: Truncation) -> OperatorMatrix {
        let d = DVector::from_iterator(trunc.dim(), self.diagonal(trunc).into_iter().map(|x| C64::new(x, 0.0)));
        OperatorMatrix::hermitian_unchecked(nalgebra::DMatrix::from_diagonal(&d))
    }

    /// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩` from a precomputed diagonal.
    pub fn expect_diag(diag: &[f64], psi: &DVector<C64>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, z) in diag.iter().zip(psi.iter()) {
            let p = z.norm_sqr();
            num += w * p;
            den += p;
        }
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub observable: Observable,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Observable values on a time grid together with statistical errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub times: Vec<f64>,
    pub series: Vec<Series>,
    pub n_traj: u64,
    pub jump_counts: Vec<(ChannelKind, u64)>,
}

impl SignalRecord {
    pub fn series(&self, obs: Observable) -> Option<&Series> {
        self.series.iter().find(|s| s.observable == obs)
    }

    pub fn mean(&self, obs: Observable) -> Option<&[f64]> {
        self.series(obs).map(|s| s.mean.as_slice())
    }

    pub fn stderr(&self, obs: Observable) -> Option<&[f64]> {
        self.series(obs).map(|s| s.stderr.as_slice())
    }

    pub fn total_jumps(&self) -> u64 {
        self.jump_counts.iter().map(|(_, c)| c).sum()
    }

    pub fn jumps_of(&self, kind: ChannelKind) -> u64 {
        self.jump_counts.iter().filter(|(k, _)| *k == kind).map(|(_, c)| c).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.series.iter().all(|s| {
            s.mean.len() == self.times.len() && s.stderr.len() == self.times.len() && s.stderr.iter().all(|&e| e >= 0.0)
        })
    }
}
