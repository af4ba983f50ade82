use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::invalid("no queries to score"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks are 1-based"));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

/// Percentage of queries whose ground truth is within the top `k`.
pub fn recall_rate(ranks: &[usize], k: usize) -> Result<f64> {
    check(ranks)?;
    check_k(k)?;
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

/// Single-relevant NDCG@k as a percentage: gain `1/log2(1+rank)` inside the cutoff.
pub fn ndcg_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check(ranks)?;
    check_k(k)?;
    let total: f64 = ranks
        .iter()
        .filter(|&&r| r <= k)
        .map(|&r| 1.0 / (1.0 + r as f64).log2())
        .sum();
    Ok(100.0 * total / ranks.len() as f64)
}

/// Mean reciprocal rank as a percentage.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    check(ranks)?;
    let total: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Ok(100.0 * total / ranks.len() as f64)
}

/// `H(n) = Σ_{r=1..n} 1/r`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|r| 1.0 / r as f64).sum()
}

/// Closed-form metric values under a uniformly random ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub rr: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

pub fn expected_random(n_candidates: usize, k: usize) -> Result<RandomBaseline> {
    if k == 0 || k > n_candidates {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k={k}, n={n_candidates}")));
    }
    let n = n_candidates as f64;
    let dcg: f64 = (1..=k).map(|r| 1.0 / (1.0 + r as f64).log2()).sum();
    Ok(RandomBaseline {
        rr: 100.0 * k as f64 / n,
        ndcg: 100.0 * dcg / n,
        mrr: 100.0 * harmonic(n_candidates) / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub rr_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n_queries: usize,
}

impl RankingSummary {
    pub fn from_ranks(ranks: &[usize], ks: &[usize]) -> Result<Self> {
        check(ranks)?;
        let mut rr_at = BTreeMap::new();
        let mut ndcg_at = BTreeMap::new();
        for &k in ks {
            rr_at.insert(k, recall_rate(ranks, k)?);
            ndcg_at.insert(k, ndcg_at_k(ranks, k)?);
        }
        Ok(Self {
            rr_at,
            ndcg_at,
            mrr: mrr(ranks)?,
            n_queries: ranks.len(),
        })
    }

    pub fn rr(&self, k: usize) -> Option<f64> {
        self.rr_at.get(&k).copied()
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.ndcg_at.get(&k).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recall_examples() {
        assert_eq!(recall_rate(&[1, 1, 1], 1).unwrap(), 100.0);
        assert_eq!(recall_rate(&[5], 5).unwrap(), 100.0);
        assert_eq!(recall_rate(&[5], 1).unwrap(), 0.0);
        assert_eq!(recall_rate(&[1, 2, 6, 10], 5).unwrap(), 50.0);
        assert!(recall_rate(&[], 1).is_err());
        assert!(recall_rate(&[1], 0).is_err());
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1], 5).unwrap(), 100.0);
        assert_eq!(ndcg_at_k(&[3], 5).unwrap(), 50.0);
        assert_eq!(ndcg_at_k(&[6], 5).unwrap(), 0.0);
    }

    #[test]
    fn mrr_examples() {
        assert!((mrr(&[1, 2, 4]).unwrap() - 175.0 / 3.0).abs() < 1e-9);
        assert_eq!(mrr(&[1, 1]).unwrap(), 100.0);
        assert!((mrr(&[40]).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn random_baseline() {
        let one = expected_random(1, 1).unwrap();
        assert_eq!((one.rr, one.ndcg, one.mrr), (100.0, 100.0, 100.0));
        let b = expected_random(200, 1).unwrap();
        assert!((b.rr - 0.5).abs() < 1e-12);
        assert!((b.mrr - 100.0 * harmonic(200) / 200.0).abs() < 1e-12);
        assert!(expected_random(3, 4).is_err());
    }

    #[test]
    fn random_baseline_matches_enumeration() {
        // average over every position of the ground truth
        let n = 37;
        let ranks: Vec<usize> = (1..=n).collect();
        let b = expected_random(n, 5).unwrap();
        assert!((b.rr - recall_rate(&ranks, 5).unwrap()).abs() < 1e-10);
        assert!((b.ndcg - ndcg_at_k(&ranks, 5).unwrap()).abs() < 1e-10);
        assert!((b.mrr - mrr(&ranks).unwrap()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn monotone_in_k(ranks in prop::collection::vec(1usize..50, 1..40), k in 1usize..20) {
            prop_assert!(recall_rate(&ranks, k).unwrap() <= recall_rate(&ranks, k + 1).unwrap());
            prop_assert!(ndcg_at_k(&ranks, k).unwrap() <= ndcg_at_k(&ranks, k + 1).unwrap());
        }

        #[test]
        fn monotone_in_rank(ranks in prop::collection::vec(1usize..50, 1..40), i in 0usize..40, k in 1usize..10) {
            let i = i % ranks.len();
            let mut worse = ranks.clone();
            worse[i] += 1;
            prop_assert!(recall_rate(&worse, k).unwrap() <= recall_rate(&ranks, k).unwrap());
            prop_assert!(ndcg_at_k(&worse, k).unwrap() <= ndcg_at_k(&ranks, k).unwrap());
            prop_assert!(mrr(&worse).unwrap() < mrr(&ranks).unwrap());
        }

        #[test]
        fn perfect_iff_all_first(ranks in prop::collection::vec(1usize..3, 1..20), k in 1usize..5) {
            let perfect = ranks.iter().all(|&r| r == 1);
            let s = RankingSummary::from_ranks(&ranks, &[k]).unwrap();
            prop_assert_eq!(s.mrr == 100.0, perfect);
            prop_assert!(s.mrr <= 100.0 && s.mrr >= 0.0);
            if perfect {
                prop_assert_eq!(s.rr(k), Some(100.0));
                prop_assert_eq!(s.ndcg(k), Some(100.0));
            }
        }
    }
}
