//! Total variation, the `W₂`-type coupling distance, relative entropy and the
//! approximate tensorization of entropy.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::diff::Kernels;
use crate::error::{invalid, Error, Result};
use crate::functionals::entropy;
use crate::num::ksum;
use crate::space::{IndexFamily, SpaceKind, StateSpace, TabulatedMeasure};

fn same_space(mu: &TabulatedMeasure, nu: &TabulatedMeasure) -> Result<()> {
    if std::sync::Arc::ptr_eq(mu.space(), nu.space()) || mu.space() == nu.space() {
        Ok(())
    } else {
        Err(Error::CodecMismatch)
    }
}

/// `½ Σ |μ - ν|`.
pub fn tv(mu: &TabulatedMeasure, nu: &TabulatedMeasure) -> Result<f64> {
    same_space(mu, nu)?;
    Ok(0.5 * ksum(mu.probs().iter().zip(nu.probs()).map(|(a, b)| (a - b).abs())))
}

/// Law of coordinate `i`, indexed by coordinate value (at most 16 values).
pub fn coordinate_marginal(mu: &TabulatedMeasure, i: usize) -> [f64; 16] {
    let space = mu.space();
    let mut out = [0.0; 16];
    for (x, p) in mu.probs().iter().enumerate() {
        out[space.coord(space.key(x), i) as usize] += p;
    }
    out
}

fn marginal_tv(mu: &TabulatedMeasure, nu: &TabulatedMeasure, i: usize) -> f64 {
    let a = coordinate_marginal(mu, i);
    let b = coordinate_marginal(nu, i);
    0.5 * ksum(a.iter().zip(&b).map(|(x, y)| (x - y).abs()))
}

/// A coupling stored as sparse `(row state, column state, mass)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    states: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.states];
        for &(r, _, w) in &self.entries {
            m[r] += w;
        }
        m
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.states];
        for &(_, c, w) in &self.entries {
            m[c] += w;
        }
        m
    }

    /// `π(x_i ≠ y_i)` for every coordinate.
    pub fn disagreement(&self, space: &StateSpace) -> Vec<f64> {
        let n = space.n();
        let mut v = vec![0.0; n];
        for &(r, c, w) in &self.entries {
            let mask = disagreement_mask(space, space.key(r), space.key(c));
            for (i, vi) in v.iter_mut().enumerate() {
                if mask >> i & 1 == 1 {
                    *vi += w;
                }
            }
        }
        v
    }
}

fn disagreement_mask(space: &StateSpace, a: u64, b: u64) -> u64 {
    match space.kind() {
        SpaceKind::Perms { .. } => (0..space.n())
            .filter(|&i| space.coord(a, i) != space.coord(b, i))
            .fold(0, |m, i| m | 1 << i),
        _ => a ^ b,
    }
}

/// Exact transport between `a` (rows) and `b` (columns) for a dense cost
/// matrix, by successive shortest paths with Dijkstra on reduced costs.
pub fn transport(a: &[f64], b: &[f64], cost: &DMatrix<f64>) -> Result<Vec<(usize, usize, f64)>> {
    const EPS: f64 = 1e-15;
    let (rows, cols) = (a.len(), b.len());
    if cost.nrows() != rows || cost.ncols() != cols {
        return Err(invalid("cost matrix shape does not match the marginals"));
    }
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = DMatrix::<f64>::zeros(rows, cols);
    let mut pu = vec![0.0; rows];
    let mut pv = vec![0.0; cols];
    let nodes = rows + cols;
    let max_rounds = 4 * nodes * nodes + 16;
    for _ in 0..max_rounds {
        if demand.iter().all(|d| *d <= EPS) || supply.iter().all(|s| *s <= EPS) {
            break;
        }
        // node k < rows is a supply node, otherwise demand node k - rows
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev = vec![usize::MAX; nodes];
        let mut done = vec![false; nodes];
        for i in 0..rows {
            if supply[i] > EPS {
                dist[i] = 0.0;
            }
        }
        while let Some(u) = (0..nodes)
            .filter(|&k| !done[k] && dist[k].is_finite())
            .min_by(|&x, &y| dist[x].total_cmp(&dist[y]))
        {
            done[u] = true;
            if u < rows {
                for j in 0..cols {
                    let nd = dist[u] + (cost[(u, j)] + pu[u] - pv[j]).max(0.0);
                    if nd < dist[rows + j] {
                        dist[rows + j] = nd;
                        prev[rows + j] = u;
                    }
                }
            } else {
                let j = u - rows;
                for i in 0..rows {
                    if flow[(i, j)] > EPS {
                        let nd = dist[u] + (-cost[(i, j)] + pv[j] - pu[i]).max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let Some(target) = (0..cols)
            .filter(|&j| demand[j] > EPS && dist[rows + j].is_finite())
            .min_by(|&x, &y| dist[rows + x].total_cmp(&dist[rows + y]))
        else {
            break;
        };
        for i in 0..rows {
            if dist[i].is_finite() {
                pu[i] += dist[i];
            }
        }
        for j in 0..cols {
            if dist[rows + j].is_finite() {
                pv[j] += dist[rows + j];
            }
        }
        // walk back to the source, collecting the bottleneck
        let mut bottleneck = demand[target];
        let mut node = rows + target;
        let source;
        loop {
            let p = prev[node];
            if node >= rows {
                // arc p -> node is forward (unbounded)
                node = p;
                if prev[node] == usize::MAX {
                    source = node;
                    break;
                }
            } else {
                // arc p -> node is the reverse of flow (node, p - rows)
                bottleneck = bottleneck.min(flow[(node, p - rows)]);
                node = p;
            }
        }
        bottleneck = bottleneck.min(supply[source]);
        let mut node = rows + target;
        loop {
            let p = prev[node];
            if node >= rows {
                flow[(p, node - rows)] += bottleneck;
                node = p;
                if prev[node] == usize::MAX {
                    break;
                }
            } else {
                flow[(node, p - rows)] -= bottleneck;
                node = p;
            }
        }
        supply[source] -= bottleneck;
        demand[target] -= bottleneck;
    }
    if demand.iter().sum::<f64>() > 1e-12 {
        return Err(Error::NonConvergence {
            what: "transport solver",
            iterations: max_rounds,
            gap: demand.iter().sum(),
        });
    }
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if flow[(i, j)] > 0.0 {
                out.push((i, j, flow[(i, j)]));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct W2Result {
    pub value: f64,
    /// certified lower bound from the final duality gap
    pub lower: f64,
    pub iterations: usize,
    pub plan: TransportPlan,
}

struct Vertex {
    v: DVector<f64>,
    plan: Vec<(usize, usize, f64)>,
}

/// `W₂(μ, ν) = min_π (Σ_i π(x_i ≠ y_i)²)^{1/2}`.
///
/// Minimum-norm-point (fully corrective Frank–Wolfe) iteration in the space of
/// disagreement vectors; each linear subproblem is an exact transport problem
/// with cost `Σ_i w_i [x_i ≠ y_i]`. Stops once `√F - √(F - gap) ≤ tol`.
pub fn w2(mu: &TabulatedMeasure, nu: &TabulatedMeasure, tol: f64) -> Result<W2Result> {
    same_space(mu, nu)?;
    let space = mu.space().clone();
    let n = space.n();
    let states = space.len();
    if states > 4096 {
        return Err(Error::LimitExceeded {
            what: "states per side for W2",
            requested: states,
            limit: 4096,
        });
    }
    if mu.probs() == nu.probs() {
        let entries = mu.support().map(|x| (x, x, mu.probs()[x])).collect();
        return Ok(W2Result {
            value: 0.0,
            lower: 0.0,
            iterations: 0,
            plan: TransportPlan { states, entries },
        });
    }
    let rows: Vec<usize> = mu.support().collect();
    let cols: Vec<usize> = nu.support().collect();
    let a: Vec<f64> = rows.iter().map(|&x| mu.probs()[x]).collect();
    let b: Vec<f64> = cols.iter().map(|&y| nu.probs()[y]).collect();
    let masks: Vec<u64> = rows
        .iter()
        .flat_map(|&x| cols.iter().map(move |&y| (x, y)))
        .map(|(x, y)| disagreement_mask(&space, space.key(x), space.key(y)))
        .collect();

    let oracle = |w: &DVector<f64>| -> Result<Vertex> {
        let cost = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            let m = masks[r * cols.len() + c];
            (0..n).filter(|&i| m >> i & 1 == 1).map(|i| w[i]).sum::<f64>()
        });
        let flow = transport(&a, &b, &cost)?;
        let mut v = DVector::zeros(n);
        for &(r, c, f) in &flow {
            let m = masks[r * cols.len() + c];
            for i in 0..n {
                if m >> i & 1 == 1 {
                    v[i] += f;
                }
            }
        }
        Ok(Vertex { v, plan: flow })
    };

    let mut corral = vec![oracle(&DVector::from_element(n, 1.0))?];
    let mut lambda = vec![1.0];
    let mut x = corral[0].v.clone();
    let max_iter = 1000;
    let mut lower = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_gap = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        let f = x.norm_squared();
        if f == 0.0 {
            converged = true;
            break;
        }
        let s = oracle(&x)?;
        let gap = 2.0 * (f - x.dot(&s.v));
        last_gap = gap;
        lower = (f - gap).max(0.0).sqrt();
        if f.sqrt() - lower <= tol || gap <= 0.0 {
            converged = true;
            break;
        }
        if corral.iter().any(|c| (&c.v - &s.v).amax() < 1e-15) {
            // no new vertex; the affine minimiser cannot improve further
            break;
        }
        corral.push(s);
        lambda.push(0.0);
        loop {
            let alpha = affine_minimizer(&corral)?;
            if alpha.iter().all(|a| *a > 1e-12) {
                lambda = alpha;
                break;
            }
            let theta = (0..alpha.len())
                .filter(|&k| alpha[k] <= 1e-12)
                .map(|k| lambda[k] / (lambda[k] - alpha[k]))
                .fold(f64::INFINITY, f64::min)
                .clamp(0.0, 1.0);
            for k in 0..lambda.len() {
                lambda[k] = theta * alpha[k] + (1.0 - theta) * lambda[k];
            }
            let mut k = 0;
            while k < lambda.len() {
                if lambda[k] <= 1e-12 {
                    lambda.remove(k);
                    corral.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            if corral.len() == 1 {
                break;
            }
        }
        x = corral
            .iter()
            .zip(&lambda)
            .fold(DVector::zeros(n), |acc, (c, l)| acc + &c.v * *l);
    }
    if !converged {
        let f = x.norm_squared();
        if f.sqrt() - lower > tol {
            return Err(Error::NonConvergence {
                what: "W2 minimum-norm-point iteration",
                iterations,
                gap: last_gap,
            });
        }
    }
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (c, l) in corral.iter().zip(&lambda) {
        for &(r, col, f) in &c.plan {
            *merged.entry((rows[r], cols[col])).or_insert(0.0) += l * f;
        }
    }
    let plan = TransportPlan {
        states,
        entries: merged.into_iter().map(|((r, c), w)| (r, c, w)).collect(),
    };
    let value = DVector::from_vec(plan.disagreement(&space)).norm();
    Ok(W2Result {
        value,
        lower: lower.min(value),
        iterations,
        plan,
    })
}

/// `argmin |Σ α_k v_k|²` subject to `Σ α_k = 1`.
fn affine_minimizer(corral: &[Vertex]) -> Result<Vec<f64>> {
    let k = corral.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = corral[a].v.dot(&corral[b].v);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => kkt
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| invalid(format!("affine minimiser: {e}")))?,
    };
    Ok(sol.iter().take(k).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    /// `(Σ_i d_TV(μ_i, ν_i)²)^{1/2}`
    pub lower: f64,
    pub w2: f64,
    /// `d_TV(μ, ν)`. Not an upper bound in general: Dirac masses at Hamming
    /// distance `k` have `W₂ = √k` and `d_TV = 1`.
    pub upper: f64,
    /// `W₁` for the Hamming cost, which does dominate `W₂`
    pub w1_hamming: f64,
}

pub fn sandwich_check(mu: &TabulatedMeasure, nu: &TabulatedMeasure, tol: f64) -> Result<Sandwich> {
    let w = w2(mu, nu, tol)?;
    let n = mu.space().n();
    let lower = ksum((0..n).map(|i| marginal_tv(mu, nu, i).powi(2))).sqrt();
    Ok(Sandwich {
        lower,
        w2: w.value,
        upper: tv(mu, nu)?,
        w1_hamming: w1_hamming(mu, nu)?,
    })
}

/// `inf_π Σ_i π(x_i ≠ y_i)`, an exact transport problem with Hamming cost.
pub fn w1_hamming(mu: &TabulatedMeasure, nu: &TabulatedMeasure) -> Result<f64> {
    same_space(mu, nu)?;
    let space = mu.space();
    if space.len() > 4096 {
        return Err(Error::LimitExceeded {
            what: "states per side for W1",
            requested: space.len(),
            limit: 4096,
        });
    }
    let rows: Vec<usize> = mu.support().collect();
    let cols: Vec<usize> = nu.support().collect();
    let a: Vec<f64> = rows.iter().map(|&x| mu.probs()[x]).collect();
    let b: Vec<f64> = cols.iter().map(|&y| nu.probs()[y]).collect();
    let cost = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        disagreement_mask(space, space.key(rows[r]), space.key(cols[c])).count_ones() as f64
    });
    let flow = transport(&a, &b, &cost)?;
    Ok(ksum(flow.iter().map(|&(r, c, f)| f * cost[(r, c)])))
}

/// `H(p ‖ q) = Σ p log(p/q)`.
pub fn rel_entropy(p: &TabulatedMeasure, q: &TabulatedMeasure) -> Result<f64> {
    same_space(p, q)?;
    let (lp, lq) = (p.log_probs(), q.log_probs());
    if let Some(index) = (0..lp.len()).find(|&x| lp[x] > f64::NEG_INFINITY && lq[x] == f64::NEG_INFINITY) {
        return Err(Error::AbsoluteContinuity { index });
    }
    Ok(ksum(
        p.support().map(|x| p.probs()[x] * (lp[x] - lq[x])),
    ))
}

/// `inf_{q(x) > 0} q(x)`.
pub fn beta_support(q: &TabulatedMeasure) -> f64 {
    q.support().map(|x| q.probs()[x]).fold(f64::INFINITY, f64::min)
}

fn require_full_support(q: &TabulatedMeasure) -> Result<()> {
    if q.has_full_support() {
        Ok(())
    } else {
        Err(Error::NotFullSupport)
    }
}

/// `min_i min_x q_i(x_i | x̄_i)`; full support required.
pub fn beta_conditional(q: &TabulatedMeasure) -> Result<f64> {
    require_full_support(q)?;
    let kernels = Kernels::new(q, &IndexFamily::singletons(q.space().n()))?;
    Ok(kernels
        .iter()
        .flat_map(|k| k.fibers().iter().flat_map(|fb| fb.probs.iter().copied()))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub h: f64,
    pub tv: f64,
    pub beta: f64,
    /// `min((2/β) d_TV, (4/β) d_TV²)`
    pub bound: f64,
    pub slack: f64,
}

pub fn lemma_bound_check(p: &TabulatedMeasure, q: &TabulatedMeasure) -> Result<LemmaCheck> {
    let h = rel_entropy(p, q)?;
    let d = tv(p, q)?;
    let beta = beta_support(q);
    let bound = (2.0 / beta * d).min(4.0 / beta * d * d);
    Ok(LemmaCheck {
        h,
        tv: d,
        beta,
        bound,
        slack: bound - h,
    })
}

fn measure_from(space: &std::sync::Arc<StateSpace>, w: Vec<f64>) -> Result<TabulatedMeasure> {
    TabulatedMeasure::from_weights(space.clone(), w)
}

/// Residual of the averaged chain rule
/// `H(p‖q) = n^{-1} Σ_i [H(p_i‖q_i) + ∫ H(p̄_i(·|y_i) ‖ q̄_i(·|y_i)) dp_i(y_i)]`.
pub fn entropy_chain_rule_check(p: &TabulatedMeasure, q: &TabulatedMeasure) -> Result<f64> {
    require_full_support(q)?;
    let h = rel_entropy(p, q)?;
    let space = p.space();
    let n = space.n();
    let mut total = 0.0;
    for i in 0..n {
        let pi = coordinate_marginal(p, i);
        let qi = coordinate_marginal(q, i);
        let mut term = ksum(
            (0..2)
                .filter(|&v| pi[v] > 0.0)
                .map(|v| pi[v] * (pi[v] / qi[v]).ln()),
        );
        for v in 0..2u8 {
            if pi[v as usize] <= 0.0 {
                continue;
            }
            // conditionals given y_i = v, as measures on the same space
            let select = |m: &TabulatedMeasure, mass: f64| -> Result<TabulatedMeasure> {
                let w = (0..space.len())
                    .map(|x| {
                        if space.coord(space.key(x), i) == v {
                            m.probs()[x] / mass
                        } else {
                            0.0
                        }
                    })
                    .collect();
                measure_from(space, w)
            };
            let pc = select(p, pi[v as usize])?;
            let qc = select(q, qi[v as usize])?;
            term += pi[v as usize] * rel_entropy(&pc, &qc)?;
        }
        total += term;
    }
    Ok((h - total / n as f64).abs())
}

/// Coupling matrix `A_ik = max_x d_TV(q_i(·|x̄_i), q_i(·|(T_k x)‾_i))` of a
/// full-support measure on spins.
pub fn coupling_matrix_of(q: &TabulatedMeasure) -> Result<DMatrix<f64>> {
    require_full_support(q)?;
    let space = q.space();
    let n = space.n();
    let kernels = Kernels::new(q, &IndexFamily::singletons(n))?;
    // q_i(+1 | x̄_i) for every state
    let plus: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let k = kernels.get(i);
            (0..space.len())
                .map(|x| {
                    let fb = k.fiber_of_state(x);
                    fb.members
                        .iter()
                        .zip(&fb.probs)
                        .find(|(&m, _)| space.key(m) >> i & 1 == 1)
                        .map_or(0.0, |(_, p)| *p)
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            return 0.0;
        }
        (0..space.len())
            .map(|x| (plus[i][x] - plus[i][x ^ 1 << k]).abs())
            .fold(0.0, f64::max)
    }))
}

/// `Σ_i ∫ Ent_{q_i(·|ȳ_i)}(f(ȳ_i, ·)) dq̄_i(ȳ_i)`.
pub fn conditional_entropy_sum(kernels: &Kernels, f: &[f64]) -> Result<f64> {
    let mut total = Vec::new();
    for k in kernels.iter() {
        for fb in k.fibers().iter().filter(|fb| fb.has_row()) {
            let mean = ksum(fb.members.iter().zip(&fb.probs).map(|(&y, p)| p * f[y]));
            if mean <= 0.0 {
                continue;
            }
            let inner = ksum(fb.members.iter().zip(&fb.probs).map(|(&y, p)| {
                p * crate::num::entropy_kernel(f[y] / mean - 1.0)
            }));
            total.push(fb.mass * mean * inner);
        }
    }
    Ok(ksum(total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorizationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub beta: f64,
    pub c: f64,
}

/// Dobrushin tensorization constants of a full-support measure on spins,
/// computed once and reused across test functions.
#[derive(Debug, Clone)]
pub struct Tensorizer {
    q: TabulatedMeasure,
    kernels: Kernels,
    /// `‖A‖₂→₂` of the coupling matrix of `q`
    pub a_norm: f64,
    /// `(1 - ‖A‖₂→₂)^{-2}`
    pub c: f64,
    pub beta: f64,
}

impl Tensorizer {
    pub fn new(q: &TabulatedMeasure) -> Result<Self> {
        require_full_support(q)?;
        let a = coupling_matrix_of(q)?;
        let a_norm = crate::ising::opnorm_2to2(&a)?;
        if a_norm >= 1.0 {
            return Err(Error::DobrushinViolated { norm: a_norm });
        }
        Ok(Self {
            q: q.clone(),
            kernels: Kernels::new(q, &IndexFamily::singletons(q.space().n()))?,
            a_norm,
            c: (1.0 - a_norm).powi(-2),
            beta: beta_conditional(q)?,
        })
    }

    /// `Ent_q(f) ≤ (2C/β) Σ_i ∫ Ent_{q_i(·|ȳ_i)}(f) dq̄_i`.
    pub fn check(&self, f: &[f64]) -> Result<TensorizationCheck> {
        let lhs = entropy(&self.q, f)?;
        let rhs = 2.0 * self.c / self.beta * conditional_entropy_sum(&self.kernels, f)?;
        Ok(TensorizationCheck {
            lhs,
            rhs,
            slack: rhs - lhs,
            beta: self.beta,
            c: self.c,
        })
    }

    /// MLSI slack `(2C/β)∫|∂f|²e^f dq - Ent(e^f)`.
    pub fn mlsi(&self, f: &[f64]) -> Result<f64> {
        crate::functionals::mlsi_slack(&self.q, &self.kernels, 2.0 * self.c / self.beta, f)
    }
}

/// `Ent_q(f) ≤ (2C/β) Σ_i ∫ Ent_{q_i(·|ȳ_i)}(f) dq̄_i` with `C = (1 - ‖A‖₂→₂)^{-2}`.
pub fn approx_tensorization_check(q: &TabulatedMeasure, f: &[f64]) -> Result<TensorizationCheck> {
    Tensorizer::new(q)?.check(f)
}

/// MLSI slack with the tensorization constants of `q`.
pub fn mlsi_check(q: &TabulatedMeasure, f: &[f64]) -> Result<f64> {
    Tensorizer::new(q)?.mlsi(f)
}

/// Worst slack of the `W₂` contraction hypothesis over all index sets and
/// contexts, for `n ≤ 4`:
/// `C Σ_{i∈I} 𝔼_{p_I(·|ȳ_I)} d_TV²(p_i(·|ȳ_i), q_i(·|ȳ_i)) - W₂²(p_I(·|ȳ_I), q_I(·|ȳ_I))`.
pub fn w2_hypothesis_check(p: &TabulatedMeasure, q: &TabulatedMeasure, c: f64) -> Result<f64> {
    require_full_support(q)?;
    same_space(p, q)?;
    let space = p.space();
    let n = space.n();
    if n > 4 {
        return Err(Error::LimitExceeded {
            what: "sites for the exhaustive W2 hypothesis check",
            requested: n,
            limit: 4,
        });
    }
    let singles_p = Kernels::new(p, &IndexFamily::singletons(n))?;
    let singles_q = Kernels::new(q, &IndexFamily::singletons(n))?;
    // d_TV(p_i(·|ȳ_i), q_i(·|ȳ_i)) at every state (zero-mass p contexts give 0)
    let tv_site: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..space.len())
                .map(|x| {
                    let fp = singles_p.get(i).fiber_of_state(x);
                    let fq = singles_q.get(i).fiber_of_state(x);
                    if !fp.has_row() {
                        return 0.0;
                    }
                    0.5 * fp
                        .probs
                        .iter()
                        .zip(&fq.probs)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut worst = f64::INFINITY;
    for subset_bits in 1u64..(1 << n) {
        let subset: Vec<usize> = (0..n).filter(|&i| subset_bits >> i & 1 == 1).collect();
        let sub_space = StateSpace::enumerate(SpaceKind::Spins { n: subset.len() })?;
        let kp = crate::space::ConditionalKernel::new(p, &subset)?;
        let kq = crate::space::ConditionalKernel::new(q, &subset)?;
        for fq in kq.fibers() {
            let Some(fp) = kp.row(fq.context) else {
                continue;
            };
            let local = |members: &[usize], probs: &[f64]| -> Vec<f64> {
                let mut w = vec![0.0; sub_space.len()];
                for (&m, &pr) in members.iter().zip(probs) {
                    let key = space.key(m);
                    let local_key = subset
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (b, &i)| acc | (((key >> i & 1) as usize) << b));
                    w[local_key] += pr;
                }
                w
            };
            let pm = TabulatedMeasure::from_weights(sub_space.clone(), local(&fp.members, &fp.probs))?;
            let qm = TabulatedMeasure::from_weights(sub_space.clone(), local(&fq.members, &fq.probs))?;
            let w = w2(&pm, &qm, 1e-9)?.value;
            let rhs: f64 = fp
                .members
                .iter()
                .zip(&fp.probs)
                .map(|(&m, pr)| pr * subset.iter().map(|&i| tv_site[i][m].powi(2)).sum::<f64>())
                .sum();
            worst = worst.min(c * rhs - w * w);
        }
    }
    Ok(worst)
}
