use serde::{Deserialize, Serialize};

use super::GoldsetError;
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n: usize,
    /// Chance agreement was 1, so the ratio is undefined.
    #[serde(default)]
    pub degenerate: bool,
}

/// Cohen's kappa for two raters over {Buggy, NotBuggy}.
///
/// Evaluated from integer cell counts so that one rounding happens at the
/// final division: kappa = (n·agree − Σ a_k·b_k) / (n² − Σ a_k·b_k).
pub fn cohens_kappa(ratings_a: &[Label], ratings_b: &[Label]) -> Result<KappaResult, GoldsetError> {
    if ratings_a.len() != ratings_b.len() {
        return Err(GoldsetError::LengthMismatch(ratings_a.len(), ratings_b.len()));
    }
    if ratings_a.is_empty() {
        return Err(GoldsetError::EmptyInput);
    }
    let n = ratings_a.len() as i128;
    let agree = ratings_a.iter().zip(ratings_b).filter(|(a, b)| a == b).count() as i128;
    let a_buggy = ratings_a.iter().filter(|l| **l == Label::Buggy).count() as i128;
    let b_buggy = ratings_b.iter().filter(|l| **l == Label::Buggy).count() as i128;
    let chance = a_buggy * b_buggy + (n - a_buggy) * (n - b_buggy);

    let observed = agree as f64 / n as f64;
    let expected = chance as f64 / (n * n) as f64;
    let denom = n * n - chance;
    let (kappa, degenerate) = if denom == 0 {
        (if agree == n { 1.0 } else { 0.0 }, true)
    } else {
        ((n * agree - chance) as f64 / denom as f64, false)
    };
    Ok(KappaResult {
        kappa,
        observed_agreement: observed,
        expected_agreement: expected,
        n: ratings_a.len(),
        degenerate,
    })
}
