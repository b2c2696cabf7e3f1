//! Monthly data demand and the rollover mechanism.
//!
//! Demand is a pmf over integer data units `{0, …, D}`. Under a traditional
//! plan a user pays overage for every unit above the cap `Q`. Under a
//! rollover plan the unused part of last month's cap (at most one full cap)
//! is consumed first, so the effective cap is `Q + τ` where the rollover
//! amount `τ` evolves as a Markov chain `τ′ = [Q − [d − τ]⁺]⁺`. The chain's
//! long-run distribution determines the expected overage, and through the
//! offload fraction `β` the expected on-network usage.

use statrs::distribution::{ContinuousCDF, LogNormal};
use thiserror::Error;

use crate::numerics::bracketed_root;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("pmf must cover at least two demand values")]
    TooFewStates,
    #[error("pmf entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("pmf sums to {sum}, not 1")]
    MassNotNormalized { sum: f64 },
    #[error("cap {cap} outside the valid range 1..={max}")]
    BadCap { cap: usize, max: usize },
    #[error("offload fraction {0} outside [0, 1]")]
    BadBeta(f64),
    #[error("demand parameter out of range: {0}")]
    BadParameter(String),
    #[error("target mean {requested} units not matched (achieved {achieved})")]
    UnmatchableMean { requested: f64, achieved: f64 },
    #[error("stationary distribution solve left residual {residual}")]
    StationaryResidual { residual: f64 },
}

/// Billing mechanism of a data plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// Unused cap expires at the end of the month.
    Traditional,
    /// Unused cap carries into the next month and is consumed first.
    Rollover,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mechanism::Traditional => write!(f, "T"),
            Mechanism::Rollover => write!(f, "R"),
        }
    }
}

/// A demand distribution over integer data units `{0, …, D}`.
#[derive(Debug, Clone)]
pub struct DemandModel {
    pmf: Vec<f64>,
    unit_mb: f64,
    mean: f64,
    /// `suffix_prob[c] = P(d >= c)`, with one trailing zero entry.
    suffix_prob: Vec<f64>,
    /// `suffix_weighted[c] = E[d; d >= c]`, same layout.
    suffix_weighted: Vec<f64>,
}

impl DemandModel {
    /// Builds a model from an explicit pmf indexed by demand in units.
    ///
    /// Entries must be non-negative and sum to 1 within `1e-9`; the sum is
    /// then renormalized away so downstream identities hold to machine
    /// precision.
    pub fn from_pmf(pmf: Vec<f64>, unit_mb: f64) -> Result<Self, DemandError> {
        if pmf.len() < 2 {
            return Err(DemandError::TooFewStates);
        }
        if !unit_mb.is_finite() || unit_mb <= 0.0 {
            return Err(DemandError::BadParameter(format!(
                "unit_mb must be positive, got {unit_mb}"
            )));
        }
        for (index, &value) in pmf.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(DemandError::NegativeMass { index, value });
            }
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DemandError::MassNotNormalized { sum });
        }
        let pmf: Vec<f64> = pmf.into_iter().map(|p| p / sum).collect();
        let n = pmf.len();
        let mut suffix_prob = vec![0.0; n + 1];
        let mut suffix_weighted = vec![0.0; n + 1];
        for d in (0..n).rev() {
            suffix_prob[d] = suffix_prob[d + 1] + pmf[d];
            suffix_weighted[d] = suffix_weighted[d + 1] + d as f64 * pmf[d];
        }
        let mean = suffix_weighted[0];
        Ok(DemandModel {
            pmf,
            unit_mb,
            mean,
            suffix_prob,
            suffix_weighted,
        })
    }

    /// Uniform demand on `{0, …, max_units}`.
    pub fn uniform(max_units: usize, unit_mb: f64) -> Result<Self, DemandError> {
        let n = max_units + 1;
        Self::from_pmf(vec![1.0 / n as f64; n], unit_mb)
    }

    /// Deterministic demand of `at` units, with support padded to `max_units`.
    pub fn point_mass(at: usize, max_units: usize, unit_mb: f64) -> Result<Self, DemandError> {
        if at > max_units {
            return Err(DemandError::BadParameter(format!(
                "point mass at {at} exceeds max_units {max_units}"
            )));
        }
        let mut pmf = vec![0.0; max_units + 1];
        pmf[at] = 1.0;
        Self::from_pmf(pmf, unit_mb)
    }

    /// Lognormal demand truncated to `[0, max_units]` and binned to units.
    ///
    /// The density is integrated over unit-width bins centered on the
    /// integers, and the location parameter is solved so that the discrete
    /// mean hits `mean_units` (within 0.1%). `sigma_log` is the shape of the
    /// underlying lognormal and is left free by the calibration.
    pub fn truncated_lognormal(
        mean_units: f64,
        max_units: usize,
        sigma_log: f64,
        unit_mb: f64,
    ) -> Result<Self, DemandError> {
        if max_units < 1 {
            return Err(DemandError::TooFewStates);
        }
        if !(mean_units > 0.0 && mean_units < max_units as f64) {
            return Err(DemandError::BadParameter(format!(
                "mean {mean_units} must lie strictly inside (0, {max_units})"
            )));
        }
        if !(sigma_log > 0.0 && sigma_log.is_finite()) {
            return Err(DemandError::BadParameter(format!(
                "sigma_log must be positive, got {sigma_log}"
            )));
        }

        let binned_mean = |mu: f64| -> f64 {
            let pmf = binned_lognormal_pmf(mu, sigma_log, max_units);
            pmf.iter().enumerate().map(|(d, p)| d as f64 * p).sum()
        };
        // Without truncation the mean would be exp(mu + sigma^2/2); use that
        // as the center of the bracket and widen until the sign changes.
        let mu0 = mean_units.ln() - 0.5 * sigma_log * sigma_log;
        let mut lo = mu0;
        let mut hi = mu0;
        let step = sigma_log.max(0.5);
        for _ in 0..64 {
            if binned_mean(lo) < mean_units {
                break;
            }
            lo -= step;
        }
        for _ in 0..64 {
            if binned_mean(hi) > mean_units {
                break;
            }
            hi += step;
        }
        let mu = bracketed_root(|m| binned_mean(m) - mean_units, lo, hi, 1e-12)
            .map_err(|_| DemandError::UnmatchableMean {
                requested: mean_units,
                achieved: binned_mean(hi),
            })?;
        let model = Self::from_pmf(binned_lognormal_pmf(mu, sigma_log, max_units), unit_mb)?;
        if (model.mean - mean_units).abs() > 1e-3 * mean_units {
            return Err(DemandError::UnmatchableMean {
                requested: mean_units,
                achieved: model.mean,
            });
        }
        Ok(model)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P(d = units)`; zero outside the support.
    pub fn prob(&self, units: usize) -> f64 {
        self.pmf.get(units).copied().unwrap_or(0.0)
    }

    /// `P(d <= units)`.
    pub fn cdf(&self, units: usize) -> f64 {
        1.0 - self.tail(units + 1)
    }

    /// `P(d >= units)`.
    pub fn tail(&self, units: usize) -> f64 {
        self.suffix_prob
            .get(units)
            .copied()
            .unwrap_or(if units == 0 { 1.0 } else { 0.0 })
    }

    /// Mean demand in units.
    pub fn mean_units(&self) -> f64 {
        self.mean
    }

    /// Largest demand value `D`.
    pub fn max_units(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn unit_mb(&self) -> f64 {
        self.unit_mb
    }

    /// Expected demand in excess of `cap`: `Σ_d [d − cap]⁺ f(d)`.
    pub fn expected_excess(&self, cap: usize) -> f64 {
        if cap >= self.max_units() {
            return 0.0;
        }
        self.suffix_weighted[cap + 1] - cap as f64 * self.suffix_prob[cap + 1]
    }
}

fn binned_lognormal_pmf(mu: f64, sigma: f64, max_units: usize) -> Vec<f64> {
    let dist = LogNormal::new(mu, sigma).expect("positive sigma checked by caller");
    let d_max = max_units as f64;
    let norm = dist.cdf(d_max);
    let mut edges = Vec::with_capacity(max_units + 2);
    edges.push(0.0);
    for d in 0..max_units {
        edges.push(dist.cdf(d as f64 + 0.5));
    }
    edges.push(norm);
    (0..=max_units)
        .map(|d| ((edges[d + 1] - edges[d]) / norm).max(0.0))
        .collect()
}

/// Long-run distribution of the rollover amount `τ ∈ {0, …, cap}` for the
/// chain `τ′ = [cap − [d − τ]⁺]⁺`, started from `τ = 0` (a new subscriber
/// holds no rollover data).
///
/// Power iteration from the start state handles the common ergodic case; if
/// it fails to settle, the long-run average is computed exactly from the
/// chain's recurrent classes and the absorption probabilities out of `τ = 0`.
pub fn rollover_stationary(demand: &DemandModel, cap: usize) -> Result<Vec<f64>, DemandError> {
    check_cap(demand, cap)?;
    let n = cap + 1;

    let step = |p: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|x| *x = 0.0);
        for tau in 0..n {
            let w = p[tau];
            if w == 0.0 {
                continue;
            }
            out[cap] += w * demand.cdf(tau);
            for k in 1..cap {
                out[cap - k] += w * demand.prob(tau + k);
            }
            out[0] += w * demand.tail(tau + cap);
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|x| *x /= total);
    };

    let mut p = vec![0.0; n];
    p[0] = 1.0;
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..100_000 {
        step(&p, &mut next);
        let diff = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut p, &mut next);
        if diff <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        p = long_run_from_zero(&transition_rows(demand, cap));
    }

    let mut residual_vec = vec![0.0; n];
    step(&p, &mut residual_vec);
    let residual = p
        .iter()
        .zip(&residual_vec)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(DemandError::StationaryResidual { residual });
    }
    Ok(p)
}

fn check_cap(demand: &DemandModel, cap: usize) -> Result<(), DemandError> {
    if cap < 1 || cap > demand.max_units() {
        return Err(DemandError::BadCap {
            cap,
            max: demand.max_units(),
        });
    }
    Ok(())
}

fn transition_rows(demand: &DemandModel, cap: usize) -> Vec<Vec<f64>> {
    let n = cap + 1;
    let mut rows = vec![vec![0.0; n]; n];
    for tau in 0..n {
        rows[tau][cap] += demand.cdf(tau);
        for k in 1..cap {
            rows[tau][cap - k] += demand.prob(tau + k);
        }
        rows[tau][0] += demand.tail(tau + cap);
    }
    rows
}

/// Exact long-run (time-average) distribution of a finite chain started in
/// state 0: recurrent classes are found via strongly connected components,
/// each class's stationary law is solved directly, and the mix is weighted
/// by the probability of being absorbed into each class from state 0.
fn long_run_from_zero(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let reachable = {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, &pij) in rows[i].iter().enumerate() {
                if pij > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };

    let comp = strongly_connected_components(rows, &reachable);
    let n_comp = comp.iter().filter_map(|c| *c).max().map_or(0, |m| m + 1);
    let mut comp_states: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (i, c) in comp.iter().enumerate() {
        if let Some(c) = c {
            comp_states[*c].push(i);
        }
    }
    let recurrent: Vec<bool> = (0..n_comp)
        .map(|c| {
            comp_states[c].iter().all(|&i| {
                rows[i]
                    .iter()
                    .enumerate()
                    .all(|(j, &pij)| pij == 0.0 || comp[j] == Some(c))
            })
        })
        .collect();

    let transient: Vec<usize> = (0..n)
        .filter(|&i| reachable[i] && !recurrent[comp[i].unwrap()])
        .collect();
    let t_index: std::collections::HashMap<usize, usize> = transient
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, k))
        .collect();
    let rec_classes: Vec<usize> = (0..n_comp).filter(|&c| recurrent[c]).collect();

    // Probability of ending up in each recurrent class, starting from 0.
    let mut absorb = vec![0.0; n_comp];
    if transient.is_empty() || !t_index.contains_key(&0) {
        absorb[comp[0].unwrap()] = 1.0;
    } else {
        let t = transient.len();
        let mut a = vec![vec![0.0; t]; t];
        for (r, &i) in transient.iter().enumerate() {
            a[r][r] = 1.0;
            for (j, &pij) in rows[i].iter().enumerate() {
                if let Some(&c) = t_index.get(&j) {
                    a[r][c] -= pij;
                }
            }
        }
        for &c in &rec_classes {
            let b: Vec<f64> = transient
                .iter()
                .map(|&i| {
                    rows[i]
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| comp[*j] == Some(c))
                        .map(|(_, &pij)| pij)
                        .sum()
                })
                .collect();
            let sol = solve_dense(a.clone(), b);
            absorb[c] = sol[t_index[&0]];
        }
    }

    let mut result = vec![0.0; n];
    for &c in &rec_classes {
        if absorb[c] == 0.0 {
            continue;
        }
        let states = &comp_states[c];
        let m = states.len();
        // Stationary law of the class: (P^T − I) π = 0 with the last
        // equation replaced by the normalization Σπ = 1.
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (col, &j) in states.iter().enumerate() {
            for row in 0..m {
                a[row][col] = rows[j][states[row]] - if row == col { 1.0 } else { 0.0 };
            }
            a[m - 1][col] = 1.0;
        }
        b[m - 1] = 1.0;
        let pi = solve_dense(a, b);
        for (k, &s) in states.iter().enumerate() {
            result[s] += absorb[c] * pi[k];
        }
    }
    result
}

fn strongly_connected_components(rows: &[Vec<f64>], keep: &[bool]) -> Vec<Option<usize>> {
    let n = rows.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if !keep[start] || seen[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (i, ref mut next)) = stack.last_mut() {
            let mut advanced = false;
            while *next < n {
                let j = *next;
                *next += 1;
                if rows[i][j] > 0.0 && keep[j] && !seen[j] {
                    seen[j] = true;
                    stack.push((j, 0));
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                order.push(i);
                stack.pop();
            }
        }
    }
    let mut comp = vec![None; n];
    let mut next_comp = 0usize;
    for &start in order.iter().rev() {
        if comp[start].is_some() {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = Some(next_comp);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if rows[j][i] > 0.0 && keep[j] && comp[j].is_none() {
                    comp[j] = Some(next_comp);
                    stack.push(j);
                }
            }
        }
        next_comp += 1;
    }
    comp
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / p;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Expected monthly overage in units under the given mechanism.
pub fn expected_overage(
    demand: &DemandModel,
    cap: usize,
    mechanism: Mechanism,
) -> Result<f64, DemandError> {
    check_cap(demand, cap)?;
    match mechanism {
        Mechanism::Traditional => Ok(demand.expected_excess(cap)),
        Mechanism::Rollover => {
            let p_roll = rollover_stationary(demand, cap)?;
            Ok(p_roll
                .iter()
                .enumerate()
                .map(|(tau, &p)| p * demand.expected_excess(cap + tau))
                .sum())
        }
    }
}

/// Expected monthly on-network usage `V = d̄ − β·A`, where a fraction `β` of
/// overage demand is offloaded to other networks.
pub fn expected_usage(
    demand: &DemandModel,
    cap: usize,
    beta: f64,
    mechanism: Mechanism,
) -> Result<f64, DemandError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(DemandError::BadBeta(beta));
    }
    Ok(demand.mean_units() - beta * expected_overage(demand, cap, mechanism)?)
}

/// Sample statistics from simulating the rollover chain month by month.
#[derive(Debug, Clone)]
pub struct McRollover {
    /// Visit frequency of each rollover state `τ ∈ {0, …, cap}`.
    pub state_freq: Vec<f64>,
    pub avg_overage: f64,
    /// Batch-means standard error of the overage average, robust to the
    /// serial correlation the chain induces.
    pub se_overage: f64,
    pub months: usize,
}

/// Simulates the rollover chain from `τ = 0` for the given number of
/// months and tallies state frequencies and average overage.
pub fn simulate_rollover(
    demand: &DemandModel,
    cap: usize,
    months: usize,
    seed: u64,
) -> Result<McRollover, DemandError> {
    use rand::{Rng, SeedableRng};

    check_cap(demand, cap)?;
    if months == 0 {
        return Err(DemandError::BadParameter("need at least one month".into()));
    }
    let mut cum = Vec::with_capacity(demand.max_units() + 1);
    let mut acc = 0.0;
    for d in 0..=demand.max_units() {
        acc += demand.prob(d);
        cum.push(acc);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut tau = 0usize;
    let mut visits = vec![0u64; cap + 1];
    let mut total_overage = 0.0;
    let batch_count = 1000.min(months);
    let batch_len = months / batch_count;
    let mut batch_sums = Vec::with_capacity(batch_count);
    let mut batch_acc = 0.0;
    let mut in_batch = 0usize;

    for _ in 0..months {
        let u: f64 = rng.gen();
        let d = cum.partition_point(|&c| c <= u).min(demand.max_units());
        let over = d.saturating_sub(cap + tau) as f64;
        total_overage += over;
        batch_acc += over;
        in_batch += 1;
        if in_batch == batch_len && batch_sums.len() < batch_count {
            batch_sums.push(batch_acc / batch_len as f64);
            batch_acc = 0.0;
            in_batch = 0;
        }
        tau = cap.saturating_sub(d.saturating_sub(tau));
        visits[tau] += 1;
    }

    let avg_overage = total_overage / months as f64;
    let se_overage = if batch_sums.len() > 1 {
        let m = batch_sums.len() as f64;
        let mean = batch_sums.iter().sum::<f64>() / m;
        let var = batch_sums.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        f64::NAN
    };
    Ok(McRollover {
        state_freq: visits
            .iter()
            .map(|&v| v as f64 / months as f64)
            .collect(),
        avg_overage,
        se_overage,
        months,
    })
}

/// A data plan's cap bundled with the usage quantities its mechanism induces.
#[derive(Debug, Clone)]
pub struct RolloverProfile {
    pub cap: usize,
    pub mechanism: Mechanism,
    pub rollover_dist: Vec<f64>,
    pub expected_overage: f64,
    pub expected_usage: f64,
    pub beta: f64,
}

impl RolloverProfile {
    pub fn build(
        demand: &DemandModel,
        cap: usize,
        beta: f64,
        mechanism: Mechanism,
    ) -> Result<Self, DemandError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(DemandError::BadBeta(beta));
        }
        check_cap(demand, cap)?;
        let rollover_dist = match mechanism {
            Mechanism::Traditional => {
                let mut p = vec![0.0; cap + 1];
                p[0] = 1.0;
                p
            }
            Mechanism::Rollover => rollover_stationary(demand, cap)?,
        };
        let expected_overage = rollover_dist
            .iter()
            .enumerate()
            .map(|(tau, &p)| p * demand.expected_excess(cap + tau))
            .sum::<f64>();
        Ok(RolloverProfile {
            cap,
            mechanism,
            rollover_dist,
            expected_overage,
            expected_usage: demand.mean_units() - beta * expected_overage,
            beta,
        })
    }
}
