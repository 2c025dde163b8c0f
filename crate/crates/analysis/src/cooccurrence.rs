use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

/// Symmetric code-by-code segment counts; the diagonal holds per-code
/// totals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub codes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl Cooccurrence {
    pub fn get(&self, a: &str, b: &str) -> Option<u64> {
        let i = self.codes.iter().position(|c| c == a)?;
        let j = self.codes.iter().position(|c| c == b)?;
        Some(self.counts[i][j])
    }

    /// Codes with a nonzero count alongside `code`, itself included when
    /// it occurs at all.
    pub fn partners(&self, code: &str) -> Vec<&str> {
        let Some(i) = self.codes.iter().position(|c| c == code) else {
            return Vec::new();
        };
        self.codes
            .iter()
            .zip(&self.counts[i])
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c.as_str())
            .collect()
    }
}

/// Counts from per-segment presence vectors (`bits[i] == 1` when code `i`
/// is present).
pub fn label_cooccurrence<B: AsRef<[u8]>>(codes: &[String], sets: &[B]) -> Result<Cooccurrence> {
    let m = codes.len();
    let mut counts = vec![vec![0u64; m]; m];
    for set in sets {
        let bits = set.as_ref();
        if bits.len() != m {
            return Err(AnalysisError::InvalidParams(format!(
                "label vector of length {} for {m} codes",
                bits.len()
            )));
        }
        let present: Vec<usize> = (0..m).filter(|&i| bits[i] != 0).collect();
        for &i in &present {
            for &j in &present {
                counts[i][j] += 1;
            }
        }
    }
    Ok(Cooccurrence {
        codes: codes.to_vec(),
        counts,
    })
}
