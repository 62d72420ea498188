//! Exact sign test and Spearman rank correlation.

use serde::{Deserialize, Serialize};

/// `P(X <= m)` for `X ~ Binomial(n, 1/2)`, summed in log space.
pub fn binomial_half_cdf(n: u64, m: u64) -> f64 {
    if m >= n {
        return 1.0;
    }
    let ln2 = std::f64::consts::LN_2;
    let mut ln_term = -(n as f64) * ln2;
    let mut terms = Vec::with_capacity(m as usize + 1);
    terms.push(ln_term);
    for i in 0..m {
        ln_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        terms.push(ln_term);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub p_value: f64,
    /// No untied pairs; p-value reported as 1.
    pub degenerate: bool,
}

/// Two-sided exact sign test on paired scores; ties are dropped.
pub fn sign_test_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (a, b) in pairs {
        if a > b {
            wins += 1;
        } else if a < b {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    sign_test_counts(wins, losses, ties)
}

pub fn sign_test_counts(wins: u64, losses: u64, ties: u64) -> SignTest {
    let n = wins + losses;
    if n == 0 {
        return SignTest {
            wins,
            losses,
            ties,
            p_value: 1.0,
            degenerate: true,
        };
    }
    let tail = binomial_half_cdf(n, wins.min(losses));
    SignTest {
        wins,
        losses,
        ties,
        p_value: 2.0 * tail.min(0.5),
        degenerate: false,
    }
}

/// 1-based ranks, tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &ix in &order[i..=j] {
            ranks[ix] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks. `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_closed_forms() {
        let all = sign_test_counts(10, 0, 0);
        assert!((all.p_value - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert!((all.p_value - 0.00195).abs() < 1e-5);
        assert_eq!(sign_test_counts(5, 5, 0).p_value, 1.0);
        assert!(sign_test_counts(44, 0, 1).p_value < 1e-5);
        let none = sign_test_counts(0, 0, 3);
        assert!(none.degenerate);
        assert_eq!(none.p_value, 1.0);
    }

    #[test]
    fn large_n_stays_finite() {
        let t = sign_test_counts(1500, 1500, 0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = sign_test_counts(2000, 0, 0);
        assert_eq!(t.p_value, 0.0);
    }

    #[test]
    fn pairs_drop_ties() {
        let t = sign_test_pairs([(1.0, 0.0), (0.0, 1.0), (2.0, 2.0)]);
        assert_eq!((t.wins, t.losses, t.ties), (1, 1, 1));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_identity_and_degenerate() {
        let x = [0.1, 0.5, 0.3, 0.9];
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[0.5; 4], &x), None);
    }
}
