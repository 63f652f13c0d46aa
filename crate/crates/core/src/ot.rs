//! Exact and entropic solvers for small dense optimal transport problems
//! with uniform marginals 1/m.
//!
//! Patches are treated as empirical distributions of their voxel values;
//! the ground cost is `|x̂_i - x_j|^p`. On the line the unregularized
//! optimum is the monotone (sorted) matching, which `exact_ot_1d` computes
//! directly and which serves as the oracle for the iterative solvers.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Dense m×m ground-cost matrix `C_ij = |x̂_i - x_j|^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    m: usize,
    entries: Vec<f64>, // row-major
    p: u32,
}

impl CostMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// Nonnegative m×m plan with uniform marginals 1/m.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    m: usize,
    entries: Vec<f64>, // row-major
}

impl TransportPlan {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    /// Frobenius inner product with a cost matrix.
    pub fn cost(&self, c: &CostMatrix) -> f64 {
        self.entries.iter().zip(c.entries.iter()).map(|(t, c)| t * c).sum()
    }

    /// Worst absolute violation of the row and column marginal constraints.
    pub fn marginal_error(&self) -> f64 {
        let m = self.m;
        let target = 1.0 / m as f64;
        let mut worst = 0.0f64;
        for i in 0..m {
            let row: f64 = self.entries[i * m..(i + 1) * m].iter().sum();
            worst = worst.max(math::abs(row - target));
        }
        for j in 0..m {
            let col: f64 = (0..m).map(|i| self.entries[i * m + j]).sum();
            worst = worst.max(math::abs(col - target));
        }
        worst
    }

    /// Total transported mass (1 for a feasible plan).
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Rounds the plan to the exact uniform marginals: rows and columns
    /// are scaled down to the target where they overshoot, and the
    /// remaining mass deficiency is filled with a rank-one correction.
    /// Exact up to float roundoff in O(m²); returns the residual error.
    fn project_feasible(&mut self) -> f64 {
        let m = self.m;
        let target = 1.0 / m as f64;
        for i in 0..m {
            let row: f64 = self.entries[i * m..(i + 1) * m].iter().sum();
            if row > target {
                let s = target / row;
                for v in &mut self.entries[i * m..(i + 1) * m] {
                    *v *= s;
                }
            }
        }
        for j in 0..m {
            let col: f64 = (0..m).map(|i| self.entries[i * m + j]).sum();
            if col > target {
                let s = target / col;
                for i in 0..m {
                    self.entries[i * m + j] *= s;
                }
            }
        }
        let row_def: Vec<f64> = (0..m)
            .map(|i| (target - self.entries[i * m..(i + 1) * m].iter().sum::<f64>()).max(0.0))
            .collect();
        let col_def: Vec<f64> = (0..m)
            .map(|j| (target - (0..m).map(|i| self.entries[i * m + j]).sum::<f64>()).max(0.0))
            .collect();
        let total: f64 = row_def.iter().sum();
        if total > 0.0 {
            for i in 0..m {
                if row_def[i] == 0.0 {
                    continue;
                }
                for j in 0..m {
                    self.entries[i * m + j] += row_def[i] * col_def[j] / total;
                }
            }
        }
        self.marginal_error()
    }
}

/// Rule for resolving the entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    /// max(C)/10, the default.
    MaxCostOverTen,
    /// A fixed user-supplied epsilon > 0.
    Explicit(f64),
}

/// Where the scaling iterations run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainMode {
    /// Log space whenever epsilon < max(C)/50, standard space otherwise.
    Auto,
    /// Always standard space (can underflow for tiny epsilon).
    Standard,
    /// Always log space.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ExactSorted,
    Sinkhorn,
    Ipot,
}

/// Solver selection and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Outer iterations (proximal steps for IPOT, scaling sweeps for Sinkhorn).
    pub outer_iters: usize,
    /// Sinkhorn sweeps per IPOT proximal step.
    pub inner_iters: usize,
    pub epsilon_rule: EpsilonRule,
    pub tol_marginal: f64,
    pub domain: DomainMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Ipot,
            outer_iters: 100,
            inner_iters: 1,
            epsilon_rule: EpsilonRule::MaxCostOverTen,
            tol_marginal: 1e-5,
            domain: DomainMode::Auto,
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        SolverConfig { kind: SolverKind::ExactSorted, ..Default::default() }
    }

    pub fn sinkhorn(epsilon_rule: EpsilonRule, outer_iters: usize) -> Self {
        SolverConfig { kind: SolverKind::Sinkhorn, outer_iters, epsilon_rule, ..Default::default() }
    }

    pub fn ipot(outer_iters: usize, inner_iters: usize) -> Self {
        SolverConfig { kind: SolverKind::Ipot, outer_iters, inner_iters, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters < 1 || self.inner_iters < 1 {
            return Err(Error::InvalidConfig("iteration counts must be >= 1".into()));
        }
        if let EpsilonRule::Explicit(e) = self.epsilon_rule {
            if !(e > 0.0) && self.kind != SolverKind::ExactSorted {
                return Err(Error::InvalidConfig("epsilon must be > 0".into()));
            }
        }
        if !(self.tol_marginal > 0.0) {
            return Err(Error::InvalidConfig("tol_marginal must be > 0".into()));
        }
        Ok(())
    }

    fn resolve_epsilon(&self, c: &CostMatrix) -> f64 {
        match self.epsilon_rule {
            // floor keeps the kernel meaningful for all-zero cost matrices
            EpsilonRule::MaxCostOverTen => (c.max() / 10.0).max(1e-12),
            EpsilonRule::Explicit(e) => e,
        }
    }
}

fn check_pair(x_hat: &[f64], x: &[f64]) -> Result<()> {
    if x_hat.len() != x.len() || x_hat.is_empty() {
        return Err(Error::LengthMismatch { left: x_hat.len(), right: x.len() });
    }
    if x_hat.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "patch values" });
    }
    Ok(())
}

#[inline]
fn pow_cost(d: f64, p: u32) -> f64 {
    let a = math::abs(d);
    match p {
        1 => a,
        2 => a * a,
        _ => unreachable!("p is validated to 1 or 2"),
    }
}

/// `C_ij = |x̂_i - x_j|^p` for p in {1, 2}.
pub fn build_cost(x_hat: &[f64], x: &[f64], p: u32) -> Result<CostMatrix> {
    check_pair(x_hat, x)?;
    if p != 1 && p != 2 {
        return Err(Error::InvalidConfig(alloc::format!("cost exponent p={p} must be 1 or 2")));
    }
    let m = x_hat.len();
    let mut entries = Vec::with_capacity(m * m);
    for &a in x_hat {
        for &b in x {
            entries.push(pow_cost(a - b, p));
        }
    }
    Ok(CostMatrix { m, entries, p })
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: ties keep index order
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    idx
}

/// Exact 1-D optimal transport by monotone matching of sorted values.
///
/// Returns the optimal value `W = (1/m) Σ |sort(x̂)_i - sort(x)_i|^p` and
/// the permutation plan realizing it, so `⟨C,T⟩ = W` exactly.
pub fn exact_ot_1d(x_hat: &[f64], x: &[f64], p: u32) -> Result<(f64, TransportPlan)> {
    check_pair(x_hat, x)?;
    if p != 1 && p != 2 {
        return Err(Error::InvalidConfig(alloc::format!("cost exponent p={p} must be 1 or 2")));
    }
    let m = x_hat.len();
    let oh = sorted_order(x_hat);
    let ox = sorted_order(x);
    let mass = 1.0 / m as f64;
    let mut entries = vec![0.0; m * m];
    let mut w = 0.0;
    for k in 0..m {
        let (i, j) = (oh[k], ox[k]);
        entries[i * m + j] = mass;
        w += pow_cost(x_hat[i] - x[j], p);
    }
    Ok((w * mass, TransportPlan { m, entries }))
}

fn logsumexp(acc: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = acc.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    mx + math::ln(acc.map(|v| math::exp(v - mx)).sum())
}

/// Entropic-regularized OT via Sinkhorn scaling.
///
/// Iterates until the implied plan satisfies the marginals within
/// `tol_marginal / 10` or the sweep budget is exhausted, then applies the
/// final row/column feasibility projection.
pub fn sinkhorn(c: &CostMatrix, cfg: &SolverConfig) -> Result<(TransportPlan, f64)> {
    cfg.validate()?;
    let eps = cfg.resolve_epsilon(c);
    let log_domain = match cfg.domain {
        DomainMode::Auto => eps < c.max() / 50.0,
        DomainMode::Log => true,
        DomainMode::Standard => false,
    };
    let m = c.m;
    let target = 1.0 / m as f64;
    let stop = cfg.tol_marginal / 10.0;

    let mut plan = if log_domain {
        // potentials f, g with T_ij = exp((-C_ij + f_i + g_j)/eps) * target factors folded in
        let log_mu = math::ln(target);
        let mut f = vec![0.0f64; m];
        let mut g = vec![0.0f64; m];
        for _ in 0..cfg.outer_iters {
            for i in 0..m {
                let row = c.entries[i * m..(i + 1) * m].iter().zip(g.iter());
                let lse = logsumexp(row.clone().map(|(&cij, &gj)| (gj - cij) / eps));
                f[i] = eps * (log_mu - lse);
            }
            let mut worst = 0.0f64;
            for j in 0..m {
                let col = (0..m).map(|i| (f[i] - c.entries[i * m + j]) / eps);
                let lse = logsumexp(col);
                g[j] = eps * (log_mu - lse);
                // row residual after the g update measures convergence
            }
            for i in 0..m {
                let row: f64 = (0..m)
                    .map(|j| math::exp((f[i] + g[j] - c.entries[i * m + j]) / eps))
                    .sum();
                worst = worst.max(math::abs(row - target));
            }
            if worst < stop {
                break;
            }
        }
        let mut entries = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                entries.push(math::exp((f[i] + g[j] - c.entries[i * m + j]) / eps));
            }
        }
        TransportPlan { m, entries }
    } else {
        let kernel: Vec<f64> = c.entries.iter().map(|&cij| math::exp(-cij / eps)).collect();
        for i in 0..m {
            if kernel[i * m..(i + 1) * m].iter().sum::<f64>() == 0.0 {
                return Err(Error::NumericalUnderflow { epsilon: eps });
            }
        }
        let mut u = vec![1.0f64; m];
        let mut v = vec![1.0f64; m];
        for _ in 0..cfg.outer_iters {
            for i in 0..m {
                let s: f64 =
                    kernel[i * m..(i + 1) * m].iter().zip(v.iter()).map(|(k, vj)| k * vj).sum();
                if s == 0.0 {
                    return Err(Error::NumericalUnderflow { epsilon: eps });
                }
                u[i] = target / s;
            }
            let mut worst = 0.0f64;
            for j in 0..m {
                let s: f64 = (0..m).map(|i| kernel[i * m + j] * u[i]).sum();
                if s == 0.0 {
                    return Err(Error::NumericalUnderflow { epsilon: eps });
                }
                v[j] = target / s;
            }
            for i in 0..m {
                let row: f64 = kernel[i * m..(i + 1) * m]
                    .iter()
                    .zip(v.iter())
                    .map(|(k, vj)| u[i] * k * vj)
                    .sum();
                worst = worst.max(math::abs(row - target));
            }
            if worst < stop {
                break;
            }
        }
        let mut entries = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                entries.push(u[i] * kernel[i * m + j] * v[j]);
            }
        }
        TransportPlan { m, entries }
    };

    plan.project_feasible();
    let cost = plan.cost(c);
    Ok((plan, cost))
}

/// Inexact proximal point iteration for unregularized OT.
///
/// Each outer step recenters the Gibbs kernel on the current plan and runs
/// `inner_iters` Sinkhorn sweeps (scaling vectors warm-started across
/// steps). The fixed point is the unregularized optimum, so the cost
/// converges to the exact Wasserstein value rather than an entropic
/// surrogate.
pub fn ipot(c: &CostMatrix, cfg: &SolverConfig) -> Result<(TransportPlan, f64)> {
    cfg.validate()?;
    let eps = cfg.resolve_epsilon(c);
    let m = c.m;
    let target = 1.0 / m as f64;
    let kernel: Vec<f64> = c.entries.iter().map(|&cij| math::exp(-cij / eps)).collect();
    for i in 0..m {
        if kernel[i * m..(i + 1) * m].iter().sum::<f64>() == 0.0 {
            return Err(Error::NumericalUnderflow { epsilon: eps });
        }
    }
    let mut t = vec![target * target; m * m];
    let mut q = vec![0.0f64; m * m];
    let mut a = vec![1.0f64; m];
    let mut b = vec![1.0f64; m];
    for _ in 0..cfg.outer_iters {
        for (qv, (kv, tv)) in q.iter_mut().zip(kernel.iter().zip(t.iter())) {
            *qv = kv * tv;
        }
        for _ in 0..cfg.inner_iters {
            for i in 0..m {
                let s: f64 =
                    q[i * m..(i + 1) * m].iter().zip(b.iter()).map(|(qv, bj)| qv * bj).sum();
                if s == 0.0 {
                    return Err(Error::NumericalUnderflow { epsilon: eps });
                }
                a[i] = target / s;
            }
            for j in 0..m {
                let s: f64 = (0..m).map(|i| q[i * m + j] * a[i]).sum();
                if s == 0.0 {
                    return Err(Error::NumericalUnderflow { epsilon: eps });
                }
                b[j] = target / s;
            }
        }
        for i in 0..m {
            for j in 0..m {
                t[i * m + j] = a[i] * q[i * m + j] * b[j];
            }
        }
    }
    let mut plan = TransportPlan { m, entries: t };
    plan.project_feasible();
    let cost = plan.cost(c);
    Ok((plan, cost))
}

/// Solves one patch-pair OT problem with the configured solver.
///
/// Returns the transport value and the plan; for `ExactSorted` the value
/// is the exact 1-D optimum, for the iterative solvers it is `⟨C,T⟩` of
/// the feasible plan.
pub fn solve(x_hat: &[f64], x: &[f64], p: u32, cfg: &SolverConfig) -> Result<(f64, TransportPlan)> {
    match cfg.kind {
        SolverKind::ExactSorted => exact_ot_1d(x_hat, x, p),
        SolverKind::Sinkhorn => {
            let c = build_cost(x_hat, x, p)?;
            let (t, w) = sinkhorn(&c, cfg)?;
            Ok((w, t))
        }
        SolverKind::Ipot => {
            let c = build_cost(x_hat, x, p)?;
            let (t, w) = ipot(&c, cfg)?;
            Ok((w, t))
        }
    }
}

/// Envelope-theorem gradient of `⟨C(x̂), T⟩` with the plan held fixed:
/// `∂/∂x̂_i = Σ_j T_ij · p·|x̂_i - x_j|^{p-1}·sign(x̂_i - x_j)`.
///
/// At exact ties (p = 1) the subgradient 0 is used.
pub fn ot_gradient(x_hat: &[f64], x: &[f64], t: &TransportPlan, p: u32) -> Result<Vec<f64>> {
    check_pair(x_hat, x)?;
    let m = x_hat.len();
    if t.m != m {
        return Err(Error::LengthMismatch { left: t.m, right: m });
    }
    if p != 1 && p != 2 {
        return Err(Error::InvalidConfig(alloc::format!("cost exponent p={p} must be 1 or 2")));
    }
    let mut grad = Vec::with_capacity(m);
    for i in 0..m {
        let mut g = 0.0;
        for j in 0..m {
            let tij = t.entries[i * m + j];
            if tij == 0.0 {
                continue;
            }
            let d = x_hat[i] - x[j];
            g += tij
                * match p {
                    1 => math::signum0(d),
                    _ => 2.0 * d,
                };
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Closed-form squared Wasserstein-2 distance between two Gaussians:
/// `(μ - μ̂)² + (σ - σ̂)²`.
pub fn gaussian_w2_closed_form(mu: f64, sigma: f64, mu_hat: f64, sigma_hat: f64) -> f64 {
    let dm = mu - mu_hat;
    let ds = sigma - sigma_hat;
    dm * dm + ds * ds
}
