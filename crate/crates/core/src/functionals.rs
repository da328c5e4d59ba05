//! Entropy, variance and moment functionals, Dirichlet forms, Poincaré and
//! log-Sobolev constants, and the exact moment certificates built on them.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{d_lower, h_tensor, h_upper, tensor_norm, Kernels, NormKind};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::num::{entropy_kernel, ksum, log_sum_exp};
use crate::space::TabulatedMeasure;

/// A real function on the states of an enumerated space.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTable {
    values: Vec<f64>,
}

impl FunctionTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at state {i}")));
        }
        Ok(Self { values })
    }

    pub fn tabulate(measure: &TabulatedMeasure, f: impl Fn(u64) -> f64 + Sync + Send) -> Result<Self> {
        Self::new(measure.tabulate(f))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for FunctionTable {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `Ent_μ(g) = 𝔼 g log g - 𝔼 g log 𝔼 g`.
pub fn entropy(measure: &TabulatedMeasure, g: &[f64]) -> Result<f64> {
    let probs = measure.probs();
    if let Some(index) = (0..g.len()).find(|&i| probs[i] > 0.0 && !(g[i] >= 0.0)) {
        return Err(Error::NegativeInput {
            index,
            value: g[index],
        });
    }
    let mean = measure.expect(g);
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let inner = ksum(
        probs
            .iter()
            .zip(g)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, v)| p * entropy_kernel(v / mean - 1.0)),
    );
    Ok(mean * inner)
}

pub fn variance(measure: &TabulatedMeasure, f: &[f64]) -> f64 {
    let mean = measure.expect(f);
    let sq: Vec<f64> = f.iter().map(|v| (v - mean).powi(2)).collect();
    measure.expect(&sq)
}

/// `‖f‖_{L^p(μ)}`; `p = ∞` is the max of `|f|` over the support.
pub fn lp_norm(measure: &TabulatedMeasure, f: &[f64], p: f64) -> f64 {
    if p == f64::INFINITY {
        return measure.support().map(|x| f[x].abs()).fold(0.0, f64::max);
    }
    assert!(p > 0.0, "p must be positive");
    if p > 32.0 {
        let logs: Vec<f64> = measure
            .support()
            .map(|x| measure.log_probs()[x] + p * f[x].abs().ln())
            .collect();
        return (log_sum_exp(&logs) / p).exp();
    }
    let pw: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    measure.expect(&pw).powf(1.0 / p)
}

/// `d/dp ‖f‖_p² = (2/p²) ‖f‖_p^{2-p} Ent(|f|^p)`.
pub fn norm_sq_derivative(measure: &TabulatedMeasure, f: &[f64], p: f64) -> Result<f64> {
    let pw: Vec<f64> = f.iter().map(|v| v.abs().powf(p)).collect();
    let ent = entropy(measure, &pw)?;
    Ok(2.0 / (p * p) * lp_norm(measure, f, p).powf(2.0 - p) * ent)
}

/// `∫ |∂f|² dμ = Σ_I 𝔼 (∂_I f)²`.
pub fn dirichlet_form(measure: &TabulatedMeasure, kernels: &Kernels, f: &[f64]) -> Result<f64> {
    let sq: Vec<f64> = d_lower(f, kernels)?
        .pointwise_norm()
        .iter()
        .map(|v| v * v)
        .collect();
    Ok(measure.expect(&sq))
}

/// `Σ_I ∬ (f(x) - f(x̄_I, z_I))₊² dm_{x̄_I}(z_I) dμ(x)`.
pub fn positive_part_form(kernels: &Kernels, f: &[f64]) -> f64 {
    let per_kernel = exec::map_range(kernels.len(), |k| {
        ksum(kernels.get(k).fibers().iter().filter(|fb| fb.has_row()).flat_map(|fb| {
            fb.members.iter().zip(&fb.probs).map(move |(&x, px)| {
                let inner = ksum(
                    fb.members
                        .iter()
                        .zip(&fb.probs)
                        .map(|(&z, pz)| pz * (f[x] - f[z]).max(0.0).powi(2)),
                );
                fb.mass * px * inner
            })
        }))
    });
    ksum(per_kernel)
}

/// `⟨f, -Lf⟩` with `Lf(x) = ∫ (f(y) - f(x)) dm_x(y)`, `m_x = |𝓘|^{-1} Σ_I m_{x̄_I}`.
pub fn generator_form(measure: &TabulatedMeasure, kernels: &Kernels, f: &[f64]) -> f64 {
    let mut lf = vec![0.0; f.len()];
    for kernel in kernels.iter() {
        for fb in kernel.fibers().iter().filter(|fb| fb.has_row()) {
            let mean = ksum(fb.members.iter().zip(&fb.probs).map(|(&y, p)| p * f[y]));
            for &x in &fb.members {
                lf[x] += mean - f[x];
            }
        }
    }
    let m = kernels.len() as f64;
    let prod: Vec<f64> = f.iter().zip(&lf).map(|(a, b)| -a * b / m).collect();
    measure.expect(&prod)
}

/// Both sides of the Dirichlet/generator comparison and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletCheck {
    pub dirichlet: f64,
    pub generator: f64,
    /// `dirichlet / generator`, `NaN` when both vanish
    pub kappa: f64,
}

pub fn laplacian_identity_check(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    f: &[f64],
) -> Result<DirichletCheck> {
    let dirichlet = dirichlet_form(measure, kernels, f)?;
    let generator = generator_form(measure, kernels, f);
    Ok(DirichletCheck {
        dirichlet,
        generator,
        kappa: dirichlet / generator,
    })
}

#[derive(Debug, Clone)]
pub struct PoincareResult {
    /// smallest `σ²` with `Var f ≤ σ² 𝔼|∂f|²`
    pub sigma2: f64,
    /// spectral gap `1/σ²` of the Dirichlet form
    pub gap: f64,
    /// an extremal mean-zero function with unit variance
    pub eigenfunction: Vec<f64>,
}

/// Exact Poincaré constant for `(μ, ∂, 𝓘)` from a dense symmetric eigenproblem.
pub fn pi_constant_exact(measure: &TabulatedMeasure, kernels: &Kernels) -> Result<PoincareResult> {
    const TOL: f64 = 1e-10;
    let support: Vec<usize> = measure.support().collect();
    let len = support.len();
    if len < 2 {
        return Err(Error::DegenerateForm("support has fewer than two states".into()));
    }
    if len > 4096 {
        return Err(Error::LimitExceeded {
            what: "support size for the Poincaré eigenproblem",
            requested: len,
            limit: 4096,
        });
    }
    let mut pos = vec![usize::MAX; measure.len()];
    for (k, &x) in support.iter().enumerate() {
        pos[x] = k;
    }
    let probs = measure.probs();
    // E(f) = Σ_I Σ_fibers mass Σ_{x<y} m_x m_y (f_x - f_y)²
    let mut e = DMatrix::<f64>::zeros(len, len);
    for kernel in kernels.iter() {
        for fb in kernel.fibers().iter().filter(|fb| fb.has_row()) {
            for a in 0..fb.members.len() {
                for b in a + 1..fb.members.len() {
                    let w = fb.mass * fb.probs[a] * fb.probs[b];
                    if w <= 0.0 {
                        continue;
                    }
                    let (x, y) = (pos[fb.members[a]], pos[fb.members[b]]);
                    e[(x, x)] += w;
                    e[(y, y)] += w;
                    e[(x, y)] -= w;
                    e[(y, x)] -= w;
                }
            }
        }
    }
    let inv_sqrt: Vec<f64> = support.iter().map(|&x| probs[x].sqrt().recip()).collect();
    let m = DMatrix::from_fn(len, len, |r, c| e[(r, c)] * inv_sqrt[r] * inv_sqrt[c]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // the bottom eigenvector is √p with eigenvalue 0; the next one is the gap
    let gap = eig.eigenvalues[order[1]];
    let scale = eig.eigenvalues[order[len - 1]].abs().max(1.0);
    if gap <= TOL * scale {
        return Err(Error::DegenerateForm(format!(
            "Dirichlet form vanishes on a nonconstant function (second eigenvalue {gap:e})"
        )));
    }
    let v = eig.eigenvectors.column(order[1]);
    let mut eigenfunction = vec![0.0; measure.len()];
    for (k, &x) in support.iter().enumerate() {
        eigenfunction[x] = v[k] * inv_sqrt[k];
    }
    Ok(PoincareResult {
        sigma2: 1.0 / gap,
        gap,
        eigenfunction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gradient {
    /// `∂`
    Lower,
    /// `𝔥`
    Upper,
}

/// `𝔼|Γf|²`.
pub fn gradient_energy(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    gradient: Gradient,
    f: &[f64],
) -> Result<f64> {
    let t = match gradient {
        Gradient::Lower => d_lower(f, kernels)?,
        Gradient::Upper => h_upper(f, kernels)?,
    };
    Ok(tensor_norm(&t, measure, NormKind::L2).powi(2))
}

/// `Ent(f²) / (2 𝔼|Γf|²)`, zero for functions constant on the support.
pub fn lsi_ratio(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    gradient: Gradient,
    f: &[f64],
) -> Result<f64> {
    let (lo, hi) = measure
        .support()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(f[x]), hi.max(f[x])));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Ok(0.0);
    }
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    let ent = entropy(measure, &sq)?;
    let energy = gradient_energy(measure, kernels, gradient, f)?;
    if energy <= 0.0 {
        return Ok(0.0);
    }
    Ok(ent / (2.0 * energy))
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
    /// functions `φ` tried as `1 ± εφ` for small `ε` before the random restarts
    pub seeds: Vec<Vec<f64>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            steps: 400,
            seed: 0,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// `Ent(f²)/(2𝔼|Γf|²)` evaluated exactly at `f`
    pub ratio: f64,
    pub f: Vec<f64>,
}

/// Lower bound on the LSI constant by direct search over test functions.
///
/// Each restart climbs by single-coordinate perturbations whose scale grows
/// on acceptance and shrinks on rejection. Only states in the support move.
pub fn lsi_ratio_search(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    gradient: Gradient,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let support: Vec<usize> = measure.support().collect();
    let len = measure.len();
    let ratio = |f: &[f64]| lsi_ratio(measure, kernels, gradient, f);

    let mut best = SearchResult {
        ratio: 0.0,
        f: vec![1.0; len],
    };
    let consider = |f: Vec<f64>, best: &mut SearchResult| -> Result<()> {
        let r = ratio(&f)?;
        if r > best.ratio {
            *best = SearchResult { ratio: r, f };
        }
        Ok(())
    };
    for phi in &opts.seeds {
        for eps in [1e-5, -1e-5, 1e-3, -1e-3, 0.1, -0.1] {
            consider(phi.iter().map(|v| 1.0 + eps * v).collect(), &mut best)?;
        }
    }

    let results = exec::map_range(opts.restarts, |r| -> Result<SearchResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let mut f = vec![0.0; len];
        for &x in &support {
            f[x] = match r % 3 {
                0 => rng.random_range(-1.0..1.0),
                1 => 1.0 + 0.1 * rng.random_range(-1.0..1.0),
                _ => (2.0 * rng.random_range(-1.0..1.0f64)).exp(),
            };
        }
        let mut current = ratio(&f)?;
        let mut step = 0.5;
        for _ in 0..opts.steps {
            let x = support[rng.random_range(0..support.len())];
            let old = f[x];
            f[x] += step * rng.random_range(-1.0..1.0);
            let cand = ratio(&f)?;
            if cand > current {
                current = cand;
                step = (step * 1.5).min(10.0);
            } else {
                f[x] = old;
                step = (step * 0.5).max(1e-6);
            }
        }
        Ok(SearchResult { ratio: current, f })
    });
    for res in results {
        let res = res?;
        if res.ratio > best.ratio {
            best = res;
        }
    }
    Ok(best)
}

/// One row of the moment-inequality report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub p: f64,
    /// `‖f‖_p² - ‖f‖₂²`
    pub lhs: f64,
    /// `2σ²(p-2)‖Γf‖_p²`
    pub rhs: f64,
    pub slack: f64,
}

pub fn moment_inequality_check(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    gradient: Gradient,
    sigma2: f64,
    f: &[f64],
    p_grid: &[f64],
) -> Result<Vec<MomentRow>> {
    if let Some(p) = p_grid.iter().find(|p| !(**p >= 2.0 && **p <= 64.0)) {
        return Err(invalid(format!("moment order {p} outside [2, 64]")));
    }
    let grad = match gradient {
        Gradient::Lower => d_lower(f, kernels)?,
        Gradient::Upper => h_upper(f, kernels)?,
    }
    .pointwise_norm();
    let two = lp_norm(measure, f, 2.0).powi(2);
    Ok(p_grid
        .iter()
        .map(|&p| {
            let lhs = lp_norm(measure, f, p).powi(2) - two;
            let rhs = 2.0 * sigma2 * (p - 2.0) * lp_norm(measure, &grad, p).powi(2);
            MomentRow {
                p,
                lhs,
                rhs,
                slack: rhs - lhs,
            }
        })
        .collect())
}

/// `c = 1/(2γe)`, the constant in `𝔼 exp(c|f|^{2/d}) ≤ 2` for sub-exponential moments.
pub fn exp_moment_constant(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("γ must be positive, got {gamma}")));
    }
    Ok(1.0 / (2.0 * gamma * std::f64::consts::E))
}

/// Norm conditions checked by [`higher_order_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionRow {
    pub k: usize,
    pub value: f64,
    pub limit: f64,
    /// true for the `L^∞` condition at `k = d`
    pub sup: bool,
}

#[derive(Debug, Clone)]
pub struct HigherOrderCertificate {
    pub conditions: Vec<ConditionRow>,
    pub c: f64,
    /// `𝔼 exp(c|f - 𝔼f|^{2/d})`
    pub moment: f64,
}

/// `‖𝔥^{(k)}f‖₂` for `k < d` and `‖𝔥^{(d)}f‖_∞`, with their limits.
pub fn higher_order_conditions(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    sigma2: f64,
    f: &[f64],
    d: usize,
) -> Result<Vec<ConditionRow>> {
    if d == 0 {
        return Err(invalid("order d must be at least 1"));
    }
    let sigma = sigma2.sqrt();
    let t = h_tensor(f, kernels, d)?;
    let mut rows = Vec::with_capacity(d);
    // 𝔥^{(k)} for k < d is rebuilt from scratch; d is small
    for k in 1..d {
        let tk = h_tensor(f, kernels, k)?;
        rows.push(ConditionRow {
            k,
            value: tensor_norm(&tk, measure, NormKind::L2),
            limit: 1f64.min(sigma.powi((d - k) as i32)),
            sup: false,
        });
    }
    rows.push(ConditionRow {
        k: d,
        value: tensor_norm(&t, measure, NormKind::Sup),
        limit: 1.0,
        sup: true,
    });
    Ok(rows)
}

/// Verify the norm conditions, then evaluate the exponential moment exactly.
pub fn higher_order_certificate(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    sigma2: f64,
    f: &[f64],
    d: usize,
) -> Result<HigherOrderCertificate> {
    let conditions = higher_order_conditions(measure, kernels, sigma2, f, d)?;
    if let Some(row) = conditions.iter().find(|r| r.value > r.limit * (1.0 + 1e-12)) {
        return Err(Error::ConditionViolated {
            k: row.k,
            value: row.value,
            limit: row.limit,
        });
    }
    let c = exp_moment_constant(6.0 * sigma2)?;
    let mean = measure.expect(f);
    let expo: Vec<f64> = f
        .iter()
        .map(|v| (c * (v - mean).abs().powf(2.0 / d as f64)).exp())
        .collect();
    Ok(HigherOrderCertificate {
        conditions,
        c,
        moment: measure.expect(&expo),
    })
}

/// Smallest `s` such that `f / s` meets the conditions of [`higher_order_certificate`].
pub fn condition_scale(rows: &[ConditionRow]) -> f64 {
    rows.iter().map(|r| r.value / r.limit).fold(0.0, f64::max)
}

/// `(2C/β) ∫|∂f|² e^f dq - Ent(e^f)`.
pub fn mlsi_slack(
    measure: &TabulatedMeasure,
    kernels: &Kernels,
    prefactor: f64,
    f: &[f64],
) -> Result<f64> {
    let max = measure.support().map(|x| f[x]).fold(f64::NEG_INFINITY, f64::max);
    // shift so exponentials stay bounded; both sides scale by e^{-max}
    let ef: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
    let grad = d_lower(f, kernels)?.pointwise_norm();
    let weighted: Vec<f64> = grad.iter().zip(&ef).map(|(g, e)| g * g * e).collect();
    let rhs = prefactor * measure.expect(&weighted);
    let lhs = entropy(measure, &ef)?;
    Ok((rhs - lhs) * max.exp())
}
