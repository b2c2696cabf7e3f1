//! Feasibility and profit evaluation for N competing operators with given
//! fee thresholds. The subscription ladder generalizes the two-operator
//! partition: stronger operators serve higher valuation bands, and a chain
//! of pairwise neutral types marks the band edges. No threshold solving
//! happens here; thresholds are inputs.

use crate::valuation::ValuationDistribution;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OligopolyError {
    #[error("bad profile: {0}")]
    BadProfile(String),
    #[error("operators {0} and {1} have equal strength")]
    EqualStrength(usize, usize),
    #[error("no coexistence: {0}")]
    NotCoexisting(String),
}

/// One operator's primitives: service quality, expected delivered data
/// under its chosen mechanism, and the cost-to-quality ratio.
#[derive(Debug, Clone, Copy)]
pub struct OligopolyOperator {
    pub qos: f64,
    pub usage: f64,
    pub psi: f64,
}

impl OligopolyOperator {
    pub fn strength(&self) -> f64 {
        self.qos * self.usage
    }
}

/// Result of the ladder-feasibility test: either every operator keeps a
/// positive valuation band, or the first broken inequality is named.
#[derive(Debug, Clone)]
pub struct CoexistenceCheck {
    pub coexist: bool,
    /// Valuation band `[lo, hi]` served by each operator, strongest first.
    pub shares: Option<Vec<(f64, f64)>>,
    pub violated: Option<String>,
}

/// N operators sorted by strictly decreasing strength, with the effective
/// fee threshold each one posts.
#[derive(Debug, Clone)]
pub struct OligopolyProfile {
    ops: Vec<OligopolyOperator>,
    sigma: Vec<f64>,
}

impl OligopolyProfile {
    pub fn new(ops: Vec<OligopolyOperator>, sigma: Vec<f64>) -> Result<Self, OligopolyError> {
        if ops.len() < 2 {
            return Err(OligopolyError::BadProfile(format!(
                "need at least two operators, got {}",
                ops.len()
            )));
        }
        if ops.len() != sigma.len() {
            return Err(OligopolyError::BadProfile(format!(
                "{} operators but {} thresholds",
                ops.len(),
                sigma.len()
            )));
        }
        for (i, op) in ops.iter().enumerate() {
            if !(op.strength() > 0.0 && op.strength().is_finite()) {
                return Err(OligopolyError::BadProfile(format!(
                    "operator {} has non-positive strength {}",
                    i + 1,
                    op.strength()
                )));
            }
        }
        for s in &sigma {
            if !s.is_finite() {
                return Err(OligopolyError::BadProfile(format!(
                    "non-finite threshold {s}"
                )));
            }
        }
        for i in 1..ops.len() {
            if ops[i].strength() >= ops[i - 1].strength() {
                if ops[i].strength() == ops[i - 1].strength() {
                    return Err(OligopolyError::EqualStrength(i, i + 1));
                }
                return Err(OligopolyError::BadProfile(format!(
                    "strengths not strictly decreasing at position {}: {} then {}",
                    i,
                    ops[i - 1].strength(),
                    ops[i].strength()
                )));
            }
        }
        Ok(OligopolyProfile { ops, sigma })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn operators(&self) -> &[OligopolyOperator] {
        &self.ops
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.sigma
    }

    /// Strength ratio of the weaker operator `m` to the stronger `n`
    /// (0-based, `n < m` gives a value below one).
    pub fn xi(&self, n: usize, m: usize) -> f64 {
        self.ops[m].strength() / self.ops[n].strength()
    }

    /// The valuation type indifferent between operators `n` and `m`
    /// (0-based): `(σ_n − ξ·σ_m) / (1 − ξ)`.
    pub fn pairwise_neutral(&self, n: usize, m: usize) -> Result<f64, OligopolyError> {
        if n == m {
            return Err(OligopolyError::BadProfile(format!(
                "pairwise neutral type needs two distinct operators, got {n}"
            )));
        }
        let xi = self.xi(n, m);
        if (xi - 1.0).abs() <= 1e-12 {
            return Err(OligopolyError::EqualStrength(n + 1, m + 1));
        }
        Ok((self.sigma[n] - xi * self.sigma[m]) / (1.0 - xi))
    }

    /// Tests the three inequality families that keep every band non-empty:
    /// the weakest pair ordered, each middle operator wedged between its
    /// neighbors, and the strongest operator undercutting the ceiling.
    /// Violations are reported in that order.
    pub fn coexistence_check(&self, theta_max: f64) -> CoexistenceCheck {
        let n = self.len();
        let s = &self.sigma;
        let fail = |msg: String| CoexistenceCheck {
            coexist: false,
            shares: None,
            violated: Some(msg),
        };

        if !(s[n - 1] >= 0.0 && s[n - 1] < s[n - 2]) {
            return fail(format!(
                "bottom pair: need 0 <= sigma_{} < sigma_{}, got {} vs {}",
                n,
                n - 1,
                s[n - 1],
                s[n - 2]
            ));
        }
        for k in 1..n - 1 {
            let xi_below = self.xi(k, k + 1);
            let xi_span = self.xi(k - 1, k + 1);
            let lhs = (1.0 - xi_span) * s[k];
            let rhs = (1.0 - xi_below) * s[k - 1] + (xi_below - xi_span) * s[k + 1];
            if !(lhs < rhs) {
                return fail(format!(
                    "middle operator {}: band collapses ({lhs} >= {rhs})",
                    k + 1
                ));
            }
        }
        let xi_top = self.xi(0, 1);
        if !((1.0 - xi_top) * theta_max + xi_top * s[1] > s[0]) {
            return fail(format!(
                "top operator: threshold {} reaches the ceiling {}",
                s[0], theta_max
            ));
        }

        let mut shares = Vec::with_capacity(n);
        let mut hi = theta_max;
        for k in 0..n - 1 {
            let lo = self.pairwise_neutral(k, k + 1).expect("strict ordering");
            shares.push((lo, hi));
            hi = lo;
        }
        shares.push((s[n - 1], hi));
        CoexistenceCheck {
            coexist: true,
            shares: Some(shares),
            violated: None,
        }
    }

    /// Per-operator profits on the ladder, strongest first.
    pub fn profits(&self, dist: &ValuationDistribution) -> Result<Vec<f64>, OligopolyError> {
        let check = self.coexistence_check(dist.theta_max());
        let shares = match check.shares {
            Some(shares) => shares,
            None => {
                return Err(OligopolyError::NotCoexisting(
                    check.violated.unwrap_or_else(|| "unknown".into()),
                ))
            }
        };
        Ok(self
            .ops
            .iter()
            .zip(&self.sigma)
            .zip(&shares)
            .map(|((op, &sigma), &(lo, hi))| {
                op.strength() * (sigma - op.psi) * (dist.cdf(hi) - dist.cdf(lo))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandModel, Mechanism, RolloverProfile};
    use crate::market;
    use crate::market::{OperatorProfile, Region};
    use crate::valuation::make_uniform;

    fn op(qos: f64, usage: f64, psi: f64) -> OligopolyOperator {
        OligopolyOperator { qos, usage, psi }
    }

    fn three_ladder() -> OligopolyProfile {
        // Strengths 1.0 > 0.8 > 0.5 with thresholds that satisfy all
        // three families of inequalities.
        OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.3), op(1.0, 0.8, 0.25), op(1.0, 0.5, 0.15)],
            vec![0.45, 0.35, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn profile_rejects_ties_and_misordering() {
        let tie = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.1), op(2.0, 0.5, 0.1)],
            vec![0.4, 0.3],
        );
        assert!(matches!(tie, Err(OligopolyError::EqualStrength(1, 2))));
        let rising = OligopolyProfile::new(
            vec![op(1.0, 0.5, 0.1), op(1.0, 1.0, 0.1)],
            vec![0.4, 0.3],
        );
        assert!(matches!(rising, Err(OligopolyError::BadProfile(_))));
    }

    #[test]
    fn neutral_type_equal_thresholds() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.1), op(1.0, 0.5, 0.1)],
            vec![0.4, 0.4],
        )
        .unwrap();
        assert_eq!(p.pairwise_neutral(0, 1).unwrap(), 0.4);
    }

    #[test]
    fn neutral_type_hand_value() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.1), op(1.0, 0.5, 0.1)],
            vec![0.6, 0.4],
        )
        .unwrap();
        let t = p.pairwise_neutral(0, 1).unwrap();
        assert!((t - 0.8).abs() < 1e-15, "got {t}");
    }

    #[test]
    fn neutral_type_matches_duopoly() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 0.9, 0.1), op(0.8, 0.7, 0.1)],
            vec![0.47, 0.31],
        )
        .unwrap();
        let via_pair = p.pairwise_neutral(0, 1).unwrap();
        let via_market = market::neutral_type(0.47, 0.31, p.xi(0, 1)).unwrap();
        assert!((via_pair - via_market).abs() < 1e-12);
    }

    #[test]
    fn two_operator_check_agrees_with_partition() {
        let cases = [
            (0.40, 0.30, true),
            (0.30, 0.45, false),
            (0.95, 0.10, false),
        ];
        for (s1, s2, expect) in cases {
            let p = OligopolyProfile::new(
                vec![op(1.0, 1.0, 0.1), op(1.0, 0.8, 0.1)],
                vec![s1, s2],
            )
            .unwrap();
            let check = p.coexistence_check(1.0);
            assert_eq!(check.coexist, expect, "sigma ({s1}, {s2})");
            let part = market::partition(s1, s2, 0.8, 1.0);
            if expect {
                assert_eq!(part.region, Region::Split);
                let shares = check.shares.unwrap();
                let (f_lo, f_hi) = part.share_first.unwrap();
                let (s_lo, s_hi) = part.share_second.unwrap();
                assert!((shares[0].0 - f_lo).abs() < 1e-12);
                assert!((shares[0].1 - f_hi).abs() < 1e-12);
                assert!((shares[1].0 - s_lo).abs() < 1e-12);
                assert!((shares[1].1 - s_hi).abs() < 1e-12);
            } else {
                assert_ne!(part.region, Region::Split);
                assert!(check.violated.is_some());
            }
        }
    }

    #[test]
    fn bottom_violation_is_reported_first() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.1), op(1.0, 0.8, 0.1), op(1.0, 0.5, 0.1)],
            vec![0.9, 0.2, 0.3],
        )
        .unwrap();
        let check = p.coexistence_check(1.0);
        assert!(!check.coexist);
        assert!(check.violated.unwrap().starts_with("bottom pair"));
    }

    #[test]
    fn three_operator_ladder_hand_instance() {
        let p = three_ladder();
        assert!((p.xi(0, 1) - 0.8).abs() < 1e-15);
        assert!((p.xi(1, 2) - 0.625).abs() < 1e-15);
        assert!((p.xi(0, 2) - 0.5).abs() < 1e-15);

        let check = p.coexistence_check(1.0);
        assert!(check.coexist, "violated: {:?}", check.violated);
        let shares = check.shares.unwrap();
        let expect = [(0.85, 1.0), (0.6, 0.85), (0.2, 0.6)];
        for (got, want) in shares.iter().zip(expect) {
            assert!((got.0 - want.0).abs() < 1e-12, "{got:?} vs {want:?}");
            assert!((got.1 - want.1).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn ladder_matches_grid_argmax() {
        let p = three_ladder();
        let shares = p.coexistence_check(1.0).shares.unwrap();
        let pts = 10_000;
        for i in 0..=pts {
            let theta = i as f64 / pts as f64;
            // Best operator by expected user payoff s·(θ − σ), outside
            // option zero.
            let mut best = None;
            let mut best_payoff = 0.0;
            for (k, (o, &sg)) in p.operators().iter().zip(p.thresholds()).enumerate() {
                let u = o.strength() * (theta - sg);
                if u > best_payoff {
                    best_payoff = u;
                    best = Some(k);
                }
            }
            let expected = shares
                .iter()
                .position(|&(lo, hi)| theta > lo + 1e-9 && theta < hi - 1e-9);
            if expected.is_some() {
                assert_eq!(best, expected, "theta = {theta}");
            } else if theta < p.thresholds()[2] - 1e-9 {
                assert_eq!(best, None, "theta = {theta}");
            }
        }
    }

    #[test]
    fn profits_hand_instance_and_mass_conservation() {
        let p = three_ladder();
        let dist = make_uniform(1.0).unwrap();
        let w = p.profits(&dist).unwrap();
        let expect = [0.0225, 0.02, 0.01];
        for (got, want) in w.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }

        let shares = p.coexistence_check(1.0).shares.unwrap();
        let mass: f64 = shares.iter().map(|&(lo, hi)| dist.cdf(hi) - dist.cdf(lo)).sum();
        let served = 1.0 - dist.cdf(p.thresholds()[2]);
        assert!((mass - served).abs() < 1e-12);
    }

    #[test]
    fn zero_margin_zero_profit() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.45), op(1.0, 0.8, 0.1), op(1.0, 0.5, 0.1)],
            vec![0.45, 0.35, 0.2],
        )
        .unwrap();
        let dist = make_uniform(1.0).unwrap();
        let w = p.profits(&dist).unwrap();
        assert_eq!(w[0], 0.0);
        assert!(w[1] > 0.0 && w[2] > 0.0);
    }

    #[test]
    fn profits_refuse_broken_ladder() {
        let p = OligopolyProfile::new(
            vec![op(1.0, 1.0, 0.1), op(1.0, 0.8, 0.1)],
            vec![0.3, 0.45],
        )
        .unwrap();
        let dist = make_uniform(1.0).unwrap();
        match p.profits(&dist) {
            Err(OligopolyError::NotCoexisting(msg)) => {
                assert!(msg.starts_with("bottom pair"), "{msg}")
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn two_operator_profits_match_duopoly_exactly() {
        let demand = DemandModel::uniform(4, 10.0).unwrap();
        let dist = make_uniform(1.0).unwrap();
        let o1 = OperatorProfile::new(1.0, 0.25, 2, Mechanism::Rollover).unwrap();
        let o2 = OperatorProfile::new(0.95, 0.30, 2, Mechanism::Traditional).unwrap();
        let rp1 = RolloverProfile::build(&demand, 2, 0.8, Mechanism::Rollover).unwrap();
        let rp2 = RolloverProfile::build(&demand, 2, 0.8, Mechanism::Traditional).unwrap();
        let (sigma1, sigma2) = (0.36, 0.34);
        let xi = market::xi(&o1, &o2, &rp1, &rp2);
        let part = market::partition(sigma1, sigma2, xi, 1.0);
        assert_eq!(part.region, Region::Split);
        let (w1, w2) = market::operator_profits(
            &part,
            (sigma1, sigma2),
            (&o1, &o2),
            (&rp1, &rp2),
            &dist,
        );

        let p = OligopolyProfile::new(
            vec![
                op(o1.qos, rp1.expected_usage, o1.psi()),
                op(o2.qos, rp2.expected_usage, o2.psi()),
            ],
            vec![sigma1, sigma2],
        )
        .unwrap();
        let w = p.profits(&dist).unwrap();
        assert!((w[0] - w1).abs() <= 1e-12 * w1.abs().max(1.0), "{} vs {w1}", w[0]);
        assert!((w[1] - w2).abs() <= 1e-12 * w2.abs().max(1.0), "{} vs {w2}", w[1]);
    }
}
