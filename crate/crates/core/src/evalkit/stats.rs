use super::{EvalError, SummaryRow};

/// Mean, sample SD (n - 1 denominator, 0 for a single score), min, max.
/// The variance is computed exactly in integers before the square root.
pub fn summarize_scores(label: &str, scores: &[u8]) -> Result<SummaryRow, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyGroup(label.to_string()));
    }
    let n = scores.len() as u128;
    let sum: u128 = scores.iter().map(|&s| u128::from(s)).sum();
    let sum_sq: u128 = scores.iter().map(|&s| u128::from(s) * u128::from(s)).sum();
    let sd = if n > 1 {
        // n·Σx² − (Σx)² is n(n−1) times the sample variance and never negative.
        let num = n * sum_sq - sum * sum;
        (num as f64 / (n * (n - 1)) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryRow {
        label: label.to_string(),
        mean: sum as f64 / n as f64,
        sd,
        min: *scores.iter().min().expect("non-empty"),
        max: *scores.iter().max().expect("non-empty"),
        n: scores.len(),
        primary_source: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KappaCounts {
    pub n: u64,
    pub agree: u64,
    pub a_pos: u64,
    pub b_pos: u64,
}

impl KappaCounts {
    pub fn p_o(&self) -> f64 {
        self.agree as f64 / self.n as f64
    }

    pub fn p_e(&self) -> f64 {
        self.chance_numerator() as f64 / (self.n * self.n) as f64
    }

    /// n²·p_e.
    fn chance_numerator(&self) -> u64 {
        self.a_pos * self.b_pos + (self.n - self.a_pos) * (self.n - self.b_pos)
    }

    /// κ = (p_o − p_e)/(1 − p_e), evaluated as (n·agree − n²p_e)/(n² − n²p_e)
    /// so that the degenerate case is detected exactly.
    pub fn kappa(&self) -> f64 {
        let nn = self.n * self.n;
        let chance = self.chance_numerator();
        if chance == nn {
            return if self.agree == self.n { 1.0 } else { 0.0 };
        }
        (self.n as f64 * self.agree as f64 - chance as f64) / (nn - chance) as f64
    }
}

/// Cohen's κ over already-binarized judgments.
pub fn cohen_kappa_binary(a: &[bool], b: &[bool]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let counts = KappaCounts {
        n: a.len() as u64,
        agree: a.iter().zip(b).filter(|(x, y)| x == y).count() as u64,
        a_pos: a.iter().filter(|&&x| x).count() as u64,
        b_pos: b.iter().filter(|&&x| x).count() as u64,
    };
    Ok(counts.kappa())
}

/// Cohen's κ after binarizing each score as acceptable when
/// `score >= binarize_at`.
pub fn cohen_kappa(a: &[u8], b: &[u8], binarize_at: u8) -> Result<f64, EvalError> {
    for &s in a.iter().chain(b) {
        super::check_score(i64::from(s))?;
    }
    let bin = |xs: &[u8]| xs.iter().map(|&s| s >= binarize_at).collect::<Vec<_>>();
    cohen_kappa_binary(&bin(a), &bin(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_scores() {
        let r = summarize_scores("x", &[4, 4, 4, 4]).unwrap();
        assert_eq!((r.mean, r.sd, r.min, r.max, r.n), (4.0, 0.0, 4, 4, 4));
        assert_eq!(summarize_scores("x", &[5]).unwrap().sd, 0.0);
    }

    #[test]
    fn hand_computed_kappa() {
        let a = [true, true, false, false];
        let b = [true, false, false, false];
        assert!((cohen_kappa_binary(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(cohen_kappa(&[5, 4, 3, 1], &[5, 4, 3, 1], 3).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_marginals() {
        assert_eq!(cohen_kappa(&[4; 90], &[3; 90], 3).unwrap(), 1.0);
        assert_eq!(cohen_kappa_binary(&[false; 3], &[false; 3]).unwrap(), 1.0);
        // One rater constant, the other not: p_e < 1, κ = 0.
        assert_eq!(cohen_kappa_binary(&[true, true], &[true, false]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            cohen_kappa(&[3], &[3, 4], 3),
            Err(EvalError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(cohen_kappa(&[], &[], 3), Err(EvalError::Empty));
        assert_eq!(cohen_kappa(&[0], &[3], 3), Err(EvalError::ScoreOutOfRange(0)));
    }

    proptest! {
        #[test]
        fn kappa_bounded_and_symmetric(pairs in proptest::collection::vec((1u8..=5, 1u8..=5), 1..60)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k = cohen_kappa(&a, &b, 3).unwrap();
            prop_assert!((-1.0..=1.0).contains(&k));
            prop_assert_eq!(k, cohen_kappa(&b, &a, 3).unwrap());
        }

        #[test]
        fn summary_matches_two_pass(scores in proptest::collection::vec(1u8..=5, 1..200)) {
            let r = summarize_scores("x", &scores).unwrap();
            let n = scores.len() as f64;
            let mean = scores.iter().map(|&s| f64::from(s)).sum::<f64>() / n;
            let ss = scores.iter().map(|&s| (f64::from(s) - mean).powi(2)).sum::<f64>();
            let sd = if scores.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
            prop_assert!((r.mean - mean).abs() < 1e-9);
            prop_assert!((r.sd - sd).abs() < 1e-9);
            prop_assert!(f64::from(r.min) <= r.mean && r.mean <= f64::from(r.max));
        }
    }
}
