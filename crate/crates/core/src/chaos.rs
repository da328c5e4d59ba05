//! Homogeneous and centered spin polynomials, their difference structure and
//! the tail-bound formulas built on them.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{E, SQRT_2};
use std::path::Path;

use crate::diff::{h_upper, Kernels};
use crate::error::{invalid, Error, Result};
use crate::functionals::FunctionTable;
use crate::num::{fmt_real, ksum};
use crate::space::{IndexFamily, SpaceKind, TabulatedMeasure};

/// Symmetric coefficient tensor with vanishing generalized diagonal, stored as
/// a map from strictly increasing (0-based) index tuples to values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    order: usize,
    n: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl CoefficientTensor {
    /// Entries may be given in any index order; orderings of the same set
    /// must agree and tuples with a repeated index must be zero.
    pub fn new<I>(n: usize, order: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        if order == 0 {
            return Err(invalid("tensor order must be at least 1"));
        }
        let mut map = BTreeMap::new();
        for (mut tuple, value) in entries {
            if tuple.len() != order {
                return Err(invalid(format!("tuple {tuple:?} has length != {order}")));
            }
            if !value.is_finite() {
                return Err(invalid(format!("non-finite coefficient at {tuple:?}")));
            }
            if let Some(&i) = tuple.iter().find(|&&i| i >= n) {
                return Err(invalid(format!("index {i} out of range for n = {n}")));
            }
            tuple.sort_unstable();
            if tuple.windows(2).any(|w| w[0] == w[1]) {
                if value != 0.0 {
                    return Err(invalid(format!("nonzero entry {value} on the diagonal at {tuple:?}")));
                }
                continue;
            }
            match map.get(&tuple) {
                Some(&prev) if prev != value => {
                    return Err(invalid(format!(
                        "tensor is not symmetric at {tuple:?}: {prev} vs {value}"
                    )))
                }
                _ => {
                    map.insert(tuple, value);
                }
            }
        }
        map.retain(|_, v| *v != 0.0);
        Ok(Self { order, n, entries: map })
    }

    /// Dense `n^d` array, first index slowest.
    pub fn from_dense(n: usize, order: usize, values: &[f64]) -> Result<Self> {
        let len = n
            .checked_pow(order as u32)
            .ok_or_else(|| invalid("dense tensor too large"))?;
        if values.len() != len {
            return Err(invalid(format!("expected {len} dense entries, got {}", values.len())));
        }
        let entries = values.iter().enumerate().map(|(mut flat, &v)| {
            let mut tuple = vec![0; order];
            for slot in tuple.iter_mut().rev() {
                *slot = flat % n;
                flat /= n;
            }
            (tuple, v)
        });
        Self::new(n, order, entries.collect::<Vec<_>>())
    }

    /// `a_I = value` for every `I` with `|I| = d`.
    pub fn constant(n: usize, order: usize, value: f64) -> Result<Self> {
        Self::new(n, order, subsets(n, order).into_iter().map(|s| (s, value)))
    }

    /// Tensor file: one entry per line, `i j … value` with 1-based sorted
    /// indices; `#` starts a comment. `n` defaults to the largest index seen.
    pub fn parse(text: &str, n: Option<usize>) -> Result<Self> {
        let mut rows = Vec::new();
        let mut order = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 {
                return Err(err("expected at least one index and a value".into()));
            }
            let (idx, value) = fields.split_at(fields.len() - 1);
            let value: f64 = value[0]
                .parse()
                .map_err(|_| err(format!("bad value {:?}", value[0])))?;
            let mut tuple = Vec::with_capacity(idx.len());
            for s in idx {
                let i: usize = s.parse().map_err(|_| err(format!("bad index {s:?}")))?;
                if i == 0 {
                    return Err(err("indices are 1-based".into()));
                }
                tuple.push(i - 1);
            }
            if tuple.windows(2).any(|w| w[0] >= w[1]) {
                return Err(err(format!("indices {idx:?} are not strictly increasing")));
            }
            match order {
                None => order = Some(tuple.len()),
                Some(d) if d != tuple.len() => {
                    return Err(err(format!("order {} differs from earlier order {d}", tuple.len())))
                }
                _ => {}
            }
            rows.push((lineno + 1, tuple, value));
        }
        let order = order.ok_or_else(|| invalid("tensor file has no entries"))?;
        let max = rows.iter().flat_map(|(_, t, _)| t.iter().copied()).max().unwrap_or(0);
        let n = n.unwrap_or(max + 1);
        let mut seen = BTreeMap::new();
        for (line, tuple, _) in &rows {
            if let Some(prev) = seen.insert(tuple.clone(), *line) {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("duplicate entry (first on line {prev})"),
                });
            }
        }
        Self::new(n, order, rows.into_iter().map(|(_, t, v)| (t, v)))
    }

    pub fn load(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, n)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Nonzero entries keyed by sorted index set.
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Entry at an arbitrary ordered tuple.
    pub fn get(&self, tuple: &[usize]) -> f64 {
        let mut t = tuple.to_vec();
        t.sort_unstable();
        self.entries.get(&t).copied().unwrap_or(0.0)
    }

    /// `A^{(i)} = (a_{i j₂ … j_d})`, a tensor of order `d - 1`.
    pub fn slice(&self, i: usize) -> Result<Self> {
        if self.order < 2 {
            return Err(invalid("cannot slice a tensor of order 1"));
        }
        let entries = self
            .entries
            .iter()
            .filter(|(k, _)| k.contains(&i))
            .map(|(k, v)| (k.iter().copied().filter(|&j| j != i).collect(), *v));
        Self::new(self.n, self.order - 1, entries.collect::<Vec<_>>())
    }

    /// `(Σ a²)^{1/2}` over ordered tuples and `max |a|`.
    pub fn norms(&self) -> TensorNorms {
        let fact: f64 = (1..=self.order).map(|k| k as f64).product();
        TensorNorms {
            hs: (fact * ksum(self.entries.values().map(|v| v * v))).sqrt(),
            sup: self.entries.values().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// All strictly increasing `k`-tuples of `0..n`.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorNorms {
    pub hs: f64,
    pub sup: f64,
}

pub fn tensor_norms(a: &CoefficientTensor) -> TensorNorms {
    a.norms()
}

fn spin(bits: u64, i: usize) -> f64 {
    if bits >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `Σ_{|I| = d} a_I σ_I` at the spin configuration `bits`.
pub fn poly_eval(bits: u64, a: &CoefficientTensor) -> f64 {
    ksum(a.entries().map(|(set, v)| {
        let odd = set.iter().filter(|&&i| bits >> i & 1 == 0).count() % 2;
        if odd == 1 {
            -v
        } else {
            v
        }
    }))
}

/// [`poly_eval`] on every state of a spin space.
pub fn poly_table(measure: &TabulatedMeasure, a: &CoefficientTensor) -> Result<FunctionTable> {
    check_spins(measure, a)?;
    FunctionTable::new(measure.tabulate(|bits| poly_eval(bits, a)))
}

fn check_spins(measure: &TabulatedMeasure, a: &CoefficientTensor) -> Result<()> {
    match measure.space().kind() {
        SpaceKind::Spins { n } if n == a.n() => Ok(()),
        SpaceKind::Spins { n } => Err(invalid(format!("tensor has n = {}, measure has n = {n}", a.n()))),
        _ => Err(invalid("polynomial observables need a spin space")),
    }
}

/// Exact moments `𝔼 X̃_S` of the centered spins `X̃_i = σ_i - 𝔼σ_i`.
#[derive(Debug, Clone)]
pub struct CenteredMoments {
    means: Vec<f64>,
    moments: HashMap<u64, f64>,
}

impl CenteredMoments {
    /// Moments of every set of size `2..=max_order`.
    pub fn new(measure: &TabulatedMeasure, max_order: usize) -> Result<Self> {
        let n = match measure.space().kind() {
            SpaceKind::Spins { n } => n,
            _ => return Err(invalid("centered moments need a spin space")),
        };
        let space = measure.space();
        let means: Vec<f64> = (0..n)
            .map(|i| measure.expect(&measure.tabulate(|b| spin(b, i))))
            .collect();
        let sets: Vec<Vec<usize>> = (2..=max_order.min(n)).flat_map(|k| subsets(n, k)).collect();
        let values = crate::exec::map_range(sets.len(), |s| {
            let set = &sets[s];
            ksum(measure.support().map(|x| {
                let bits = space.key(x);
                measure.probs()[x] * set.iter().map(|&i| spin(bits, i) - means[i]).product::<f64>()
            }))
        });
        let moments = sets.iter().zip(values).map(|(s, v)| (mask(s), v)).collect();
        Ok(Self { means, moments })
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    /// `𝔼 X̃_S`; zero for singletons, one for the empty set.
    pub fn moment(&self, set: &[usize]) -> f64 {
        match set.len() {
            0 => 1.0,
            1 => 0.0,
            _ => self.moments[&mask(set)],
        }
    }
}

fn mask(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, &i| m | 1 << i)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `Σ_{ordered} a X̃_{first m} 𝔼X̃_{rest}` summed as `m!(d-m)! Σ_S a_S Σ_{T⊂S,|T|=m} X̃_T 𝔼X̃_{S∖T}`.
fn split_term(a: &CoefficientTensor, mom: &CenteredMoments, m: usize, x: &[f64]) -> f64 {
    let d = a.order();
    let weight = factorial(m) * factorial(d - m);
    weight
        * ksum(a.entries().map(|(set, v)| {
            let parts = subsets(d, m);
            v * ksum(parts.iter().map(|pick| {
                let t: Vec<usize> = pick.iter().map(|&p| set[p]).collect();
                let rest: Vec<usize> = set.iter().copied().filter(|i| !t.contains(i)).collect();
                t.iter().map(|&i| x[i]).product::<f64>() * mom.moment(&rest)
            }))
        }))
}

/// Product-of-expectations term `Σ_{ordered} a 𝔼X̃_{i j} 𝔼X̃_{k l}` for `d = 4`.
fn pair_pair_term(a: &CoefficientTensor, mom: &CenteredMoments) -> f64 {
    4.0 * ksum(a.entries().map(|(s, v)| {
        let pairings = [
            ([s[0], s[1]], [s[2], s[3]]),
            ([s[0], s[2]], [s[1], s[3]]),
            ([s[0], s[3]], [s[1], s[2]]),
        ];
        // each unordered pairing appears twice as (T, S∖T)
        v * 2.0 * ksum(pairings.iter().map(|(p, q)| mom.moment(p) * mom.moment(q)))
    }))
}

/// The centered family `f_{d,A}` for `d ∈ {1,2,3,4}` on a spin measure, with
/// exact moments.
pub fn centered_poly(measure: &TabulatedMeasure, a: &CoefficientTensor) -> Result<FunctionTable> {
    check_spins(measure, a)?;
    let d = a.order();
    if d > 4 {
        return Err(Error::UnsupportedOrder { d });
    }
    let mom = CenteredMoments::new(measure, d)?;
    centered_poly_with(measure, a, &mom)
}

pub fn centered_poly_with(
    measure: &TabulatedMeasure,
    a: &CoefficientTensor,
    mom: &CenteredMoments,
) -> Result<FunctionTable> {
    check_spins(measure, a)?;
    let d = a.order();
    let n = a.n();
    let constant = match d {
        1 => 0.0,
        2 | 3 => -split_term(a, mom, 0, &[]),
        4 => -split_term(a, mom, 0, &[]) + 6.0 * pair_pair_term(a, mom),
        _ => return Err(Error::UnsupportedOrder { d }),
    };
    let values = measure.tabulate(|bits| {
        let x: Vec<f64> = (0..n).map(|i| spin(bits, i) - mom.mean(i)).collect();
        let top = split_term(a, mom, d, &x);
        let lower = match d {
            3 => -3.0 * split_term(a, mom, 1, &x),
            4 => -4.0 * split_term(a, mom, 1, &x) - 6.0 * split_term(a, mom, 2, &x),
            _ => 0.0,
        };
        top + lower + constant
    });
    FunctionTable::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionCheck {
    /// constant measured on the first nonzero instance
    pub c_d: f64,
    pub residual: f64,
}

/// `max |𝔥_i f_{d,A} - c_d |f_{d-1,A^{(i)}} - 𝔼f_{d-1,A^{(i)}}||` over states and sites.
pub fn h_recursion_check(measure: &TabulatedMeasure, a: &CoefficientTensor) -> Result<RecursionCheck> {
    check_spins(measure, a)?;
    let d = a.order();
    if !(2..=4).contains(&d) {
        return Err(Error::UnsupportedOrder { d });
    }
    let n = a.n();
    let mom = CenteredMoments::new(measure, d)?;
    let f = centered_poly_with(measure, a, &mom)?;
    let kernels = Kernels::new(measure, &IndexFamily::singletons(n))?;
    let h = h_upper(f.values(), &kernels)?;
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let g = centered_poly_with(measure, &a.slice(i)?, &mom)?;
        let mean = measure.expect(g.values());
        let lower: Vec<f64> = g.values().iter().map(|v| (v - mean).abs()).collect();
        pairs.push((h.component(i).to_vec(), lower));
    }
    let (num, den) = pairs
        .iter()
        .flat_map(|(h, g)| h.iter().zip(g))
        .map(|(h, g)| (*h, *g))
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let c_d = if den > 0.0 { num / den } else { 0.0 };
    let residual = pairs
        .iter()
        .flat_map(|(h, g)| h.iter().zip(g))
        .map(|(h, g)| (h - c_d * g).abs())
        .fold(0.0, f64::max);
    Ok(RecursionCheck { c_d, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    /// `2 exp(-t^{2/d} / (c n ‖a‖_∞^{2/d}))`
    Thm13,
    /// `2 exp(-t^{2/d} / (C ‖A‖_HS^{2/d}))`
    Thm14,
}

/// Tail bound at deviation `t`; `constant` is `c` or `C` respectively.
pub fn tail_bound(kind: TailKind, d: usize, n: usize, norms: TensorNorms, constant: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 2.0;
    }
    let e = 2.0 / d as f64;
    let scale = match kind {
        TailKind::Thm13 => constant * n as f64 * norms.sup.powf(e),
        TailKind::Thm14 => constant * norms.hs.powf(e),
    };
    2.0 * (-t.powf(e) / scale).exp()
}

/// Constant `c` of the homogeneous-polynomial bound obtained from an exact
/// certificate: if `f/s` satisfies `𝔼 exp(κ|f/s - 𝔼f/s|^{2/d}) ≤ 2`, then
/// Chebyshev gives `2 exp(-κ (t/s)^{2/d})`, i.e. `c = s^{2/d} / (κ n ‖a‖_∞^{2/d})`.
pub fn thm13_constant(scale: f64, kappa: f64, d: usize, n: usize, sup: f64) -> f64 {
    let e = 2.0 / d as f64;
    scale.powf(e) / (kappa * n as f64 * sup.powf(e))
}

/// Analytic sup bounds on `|𝔥^{(k)} f|`, `k = 1..=d`, for a homogeneous
/// polynomial of order `d ≤ 2` under single-site resampling of spins.
pub fn homogeneous_h_sup_bounds(a: &CoefficientTensor) -> Result<Vec<f64>> {
    let n = a.n();
    match a.order() {
        1 => Ok(vec![SQRT_2 * a.norms().hs]),
        2 => {
            let mut row = vec![0.0; n];
            for (s, v) in a.entries() {
                row[s[0]] += v.abs();
                row[s[1]] += v.abs();
            }
            let first = (2.0 * ksum(row.iter().map(|r| r * r))).sqrt();
            Ok(vec![first, 2.0 * a.norms().hs])
        }
        d => Err(Error::UnsupportedOrder { d }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveBound {
    /// `η_f(t)`
    pub eta: f64,
    /// the deviation `(de) t` at which `bound` applies
    pub at: f64,
    /// `e² exp(-η_f(t))`
    pub bound: f64,
    /// `e² exp(-η_f(t)/(de)²)`, a bound at deviation `t` itself
    pub rescaled: f64,
}

/// `η_f(t) = min(t^{2/d}/(2C‖A‖₂^{2/d}), min_k t^{2/k}/(2C‖𝔥^{(k)}f‖₂^{2/k}))`.
///
/// `h_norms[k-1] = ‖𝔥^{(k)} f‖₂` for `k = 1..d-1`.
pub fn tail_bound_adaptive(h_norms: &[f64], a_norm: f64, d: usize, c_alpha: f64, t: f64) -> Result<AdaptiveBound> {
    if d == 0 || h_norms.len() != d - 1 {
        return Err(invalid(format!("need {} lower-order norms for d = {d}", d.saturating_sub(1))));
    }
    if h_norms.iter().chain([&a_norm]).any(|v| !(*v > 0.0)) || !(c_alpha > 0.0) {
        return Err(invalid("norms and constant must be positive"));
    }
    let branch = |k: usize, norm: f64| {
        let e = 2.0 / k as f64;
        t.powf(e) / (2.0 * c_alpha * norm.powf(e))
    };
    let eta = h_norms
        .iter()
        .enumerate()
        .map(|(k, &v)| branch(k + 1, v))
        .fold(branch(d, a_norm), f64::min);
    let de = d as f64 * E;
    Ok(AdaptiveBound {
        eta,
        at: de * t,
        bound: E * E * (-eta).exp(),
        rescaled: E * E * (-eta / (de * de)).exp(),
    })
}

#[derive(Debug, Clone)]
pub struct ThirdOrderCorrection {
    /// `f̃ = Σ_S a_S σ_S`
    pub raw: FunctionTable,
    /// `f = f̃ - Σ_l c_l σ_l`
    pub corrected: FunctionTable,
    /// `c_l = Σ_{S ∋ l} a_S 𝔼σ_jσ_k` with `{j, k} = S ∖ {l}`
    pub c: Vec<f64>,
}

pub fn third_order_correction(measure: &TabulatedMeasure, a: &CoefficientTensor) -> Result<ThirdOrderCorrection> {
    check_spins(measure, a)?;
    if a.order() != 3 {
        return Err(Error::UnsupportedOrder { d: a.order() });
    }
    let n = a.n();
    let mut pair = HashMap::new();
    let mut c = vec![0.0; n];
    for (s, v) in a.entries() {
        for l in 0..3 {
            let (j, k) = match l {
                0 => (s[1], s[2]),
                1 => (s[0], s[2]),
                _ => (s[0], s[1]),
            };
            let m = *pair
                .entry((j, k))
                .or_insert_with(|| measure.expect(&measure.tabulate(|b| spin(b, j) * spin(b, k))));
            c[s[l]] += v * m;
        }
    }
    let raw = poly_table(measure, a)?;
    let corrected = measure
        .tabulate(|b| poly_eval(b, a) - ksum((0..n).map(|l| c[l] * spin(b, l))));
    Ok(ThirdOrderCorrection {
        raw,
        corrected: FunctionTable::new(corrected)?,
        c,
    })
}

/// `4 exp(-t^{2/3}/(2 C₂ n))`, valid for `t > 2 C₁ n^{3/2}`; `None` below the threshold.
pub fn corollary_bound(t: f64, n: usize, c1: f64, c2: f64) -> Option<f64> {
    let nf = n as f64;
    (t > 2.0 * c1 * nf.powf(1.5)).then(|| 4.0 * (-t.powf(2.0 / 3.0) / (2.0 * c2 * nf)).exp())
}

/// One row of a tail curve; absent columns are written as empty CSV fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub t: f64,
    pub empirical: Option<f64>,
    pub bound: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TailCurve {
    pub rows: Vec<TailRow>,
}

impl TailCurve {
    pub fn from_bound(t_grid: &[f64], bound: impl Fn(f64) -> f64) -> Self {
        let rows = t_grid
            .iter()
            .map(|&t| TailRow {
                t,
                empirical: None,
                bound: Some(bound(t)),
                stderr: None,
            })
            .collect();
        Self { rows }
    }

    /// Fill the bound column of every row.
    pub fn with_bound(mut self, bound: impl Fn(f64) -> f64) -> Self {
        for row in &mut self.rows {
            row.bound = Some(bound(row.t));
        }
        self
    }

    /// Rows where the empirical tail exceeds the bound.
    pub fn violations(&self) -> Vec<TailRow> {
        self.rows
            .iter()
            .filter(|r| matches!((r.empirical, r.bound), (Some(e), Some(b)) if e > b))
            .copied()
            .collect()
    }

    /// CSV with header `t,empirical,bound,stderr`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,empirical,bound,stderr")?;
        let cell = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_real(r.t),
                cell(r.empirical),
                cell(r.bound),
                cell(r.stderr)
            )?;
        }
        Ok(())
    }
}

/// `e_d` evaluated at a configuration with `k` spins up out of `n`:
/// the coefficient of `z^d` in `(1+z)^k (1-z)^{n-k}`.
pub fn elementary_symmetric(k: usize, n: usize, d: usize) -> f64 {
    let mut c = vec![0.0; d + 1];
    c[0] = 1.0;
    for step in 0..n {
        let sign = if step < k { 1.0 } else { -1.0 };
        for j in (1..=d).rev() {
            c[j] += sign * c[j - 1];
        }
    }
    c[d]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::IsingModel;
    use crate::space::StateSpace;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(n: usize, d: usize, rng: &mut ChaCha8Rng) -> CoefficientTensor {
        CoefficientTensor::new(
            n,
            d,
            subsets(n, d).into_iter().map(|s| (s, rng.random_range(-1.0..1.0))).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn uniform(n: usize) -> TabulatedMeasure {
        TabulatedMeasure::uniform(StateSpace::enumerate(SpaceKind::Spins { n }).unwrap())
    }

    #[test]
    fn validation() {
        assert!(CoefficientTensor::new(3, 2, vec![(vec![0, 0], 1.0)]).is_err());
        assert!(CoefficientTensor::new(3, 2, vec![(vec![0, 0], 0.0)]).is_ok());
        assert!(CoefficientTensor::new(3, 2, vec![(vec![0, 1], 1.0), (vec![1, 0], 2.0)]).is_err());
        assert!(CoefficientTensor::new(3, 2, vec![(vec![0, 3], 1.0)]).is_err());
        let dense = [0.0, 1.0, 0.0, 2.0];
        assert!(CoefficientTensor::from_dense(2, 2, &dense).is_err());
        let ok = CoefficientTensor::from_dense(2, 2, &[0.0, 1.5, 1.5, 0.0]).unwrap();
        assert_eq!(ok.get(&[1, 0]), 1.5);
    }

    #[test]
    fn parse_file_format() {
        let t = CoefficientTensor::parse("# pairs\n1 2 0.5\n2 3 -1\n\n", None).unwrap();
        assert_eq!((t.order(), t.n()), (2, 3));
        assert_eq!(t.get(&[2, 1]), -1.0);
        let t = CoefficientTensor::parse("1 2 0.5", Some(5)).unwrap();
        assert_eq!(t.n(), 5);
        let bad = |s: &str| CoefficientTensor::parse(s, None).unwrap_err();
        assert!(matches!(bad("1 2 0.5\n2 1 1"), Error::Parse { line: 2, .. }));
        assert!(matches!(bad("1 2 0.5\n1 2 3 1"), Error::Parse { line: 2, .. }));
        assert!(matches!(bad("0 2 0.5"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("1 2 x"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("1 1 1.0"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("1 2 1\n1 2 1"), Error::Parse { line: 2, .. }));
        assert!(CoefficientTensor::parse("1 2 0.5", Some(1)).is_err());
    }

    #[test]
    fn norms() {
        let z = CoefficientTensor::new(4, 2, Vec::new()).unwrap();
        assert_eq!(z.norms(), TensorNorms { hs: 0.0, sup: 0.0 });
        let one = CoefficientTensor::new(4, 2, vec![(vec![1, 3], 1.0)]).unwrap();
        assert_eq!(one.norms().hs, SQRT_2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tensor(5, 3, &mut rng);
        let mut sq = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    sq += a.get(&[i, j, k]).powi(2) * if i != j && j != k && i != k { 1.0 } else { 0.0 };
                }
            }
        }
        assert!((a.norms().hs - sq.sqrt()).abs() < 1e-13);
        let TensorNorms { hs, sup } = a.norms();
        assert!(hs.powf(2.0 / 3.0) <= 5.0 * sup.powf(2.0 / 3.0) + 1e-12);
    }

    #[test]
    fn poly_eval_examples() {
        let e1 = CoefficientTensor::new(3, 1, vec![(vec![0], 1.0)]).unwrap();
        assert_eq!(poly_eval(0b110, &e1), -1.0);
        assert_eq!(poly_eval(0b111, &e1), 1.0);
        let ones = CoefficientTensor::constant(6, 2, 1.0).unwrap();
        assert_eq!(poly_eval(0b111111, &ones), 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_tensor(5, 3, &mut rng);
        for bits in 0..32u64 {
            let mut naive = 0.0;
            for i in 0..5 {
                for j in i + 1..5 {
                    for k in j + 1..5 {
                        naive += a.get(&[i, j, k]) * spin(bits, i) * spin(bits, j) * spin(bits, k);
                    }
                }
            }
            assert!((poly_eval(bits, &a) - naive).abs() < 1e-13);
        }
    }

    /// Ordered-tuple evaluation of the four displayed formulas.
    fn centered_oracle(mu: &TabulatedMeasure, a: &CoefficientTensor) -> Vec<f64> {
        let n = a.n();
        let d = a.order();
        let spins_of = |b: u64| (0..n).map(|i| spin(b, i)).collect::<Vec<_>>();
        let mean: Vec<f64> = (0..n).map(|i| mu.expect(&mu.tabulate(|b| spin(b, i)))).collect();
        let ex = |set: &[usize]| {
            mu.expect(&mu.tabulate(|b| set.iter().map(|&i| spin(b, i) - mean[i]).product()))
        };
        let tuples: Vec<Vec<usize>> = (0..n.pow(d as u32))
            .map(|mut f| {
                let mut t = vec![0; d];
                for s in t.iter_mut().rev() {
                    *s = f % n;
                    f /= n;
                }
                t
            })
            .filter(|t| (0..d).all(|p| (p + 1..d).all(|q| t[p] != t[q])))
            .collect();
        mu.tabulate(|b| {
            let s = spins_of(b);
            let x: Vec<f64> = (0..n).map(|i| s[i] - mean[i]).collect();
            let xp = |set: &[usize]| set.iter().map(|&i| x[i]).product::<f64>();
            tuples
                .iter()
                .map(|t| {
                    let c = a.get(t);
                    c * match d {
                        1 => x[t[0]],
                        2 => xp(t) - ex(t),
                        3 => xp(t) - ex(t) - 3.0 * x[t[0]] * ex(&t[1..]),
                        _ => {
                            xp(t) - ex(t) - 4.0 * x[t[0]] * ex(&t[1..]) - 6.0 * xp(&t[..2]) * ex(&t[2..])
                                + 6.0 * ex(&t[..2]) * ex(&t[2..])
                        }
                    }
                })
                .sum()
        })
    }

    #[test]
    fn centered_matches_ordered_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = IsingModel::random(5, 0.8, 0.7, &mut rng);
        let mu = model.gibbs_measure().unwrap();
        for d in 1..=4 {
            let a = random_tensor(5, d, &mut rng);
            let got = centered_poly(&mu, &a).unwrap();
            let oracle = centered_oracle(&mu, &a);
            for (g, o) in got.values().iter().zip(&oracle) {
                assert!((g - o).abs() < 1e-11, "d={d}: {g} vs {o}");
            }
            assert!(mu.expect(got.values()).abs() < 1e-12, "d={d} not centered");
        }
        let a5 = CoefficientTensor::constant(5, 5, 1.0).unwrap();
        assert!(matches!(centered_poly(&mu, &a5), Err(Error::UnsupportedOrder { d: 5 })));
    }

    #[test]
    fn odd_moments_vanish_without_field() {
        let model = IsingModel::curie_weiss(6, 0.5, DVector::zeros(6)).unwrap();
        let mu = model.gibbs_measure().unwrap();
        let mom = CenteredMoments::new(&mu, 3).unwrap();
        for s in subsets(6, 3) {
            assert!(mom.moment(&s).abs() < 1e-14);
        }
        let a = CoefficientTensor::constant(6, 3, 1.0).unwrap();
        let f = centered_poly(&mu, &a).unwrap();
        let raw = poly_table(&mu, &a).unwrap();
        // f_{3,A} = 6 f̃ - 6 Σ_S Σ_{i∈S} σ_i 𝔼σ_{S∖i}
        let m2 = mom.moment(&[0, 1]);
        for (x, (fv, rv)) in f.values().iter().zip(raw.values()).enumerate() {
            let magnet: f64 = (0..6).map(|i| mu.space().spin(x, i)).sum();
            let expect = 6.0 * rv - 6.0 * m2 * 10.0 * magnet;
            assert!((fv - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn recursion_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mu4 = IsingModel::random(4, 0.7, 0.5, &mut rng).gibbs_measure().unwrap();
        let zero = CoefficientTensor::new(4, 2, Vec::new()).unwrap();
        assert_eq!(h_recursion_check(&mu4, &zero).unwrap().residual, 0.0);
        let pair = CoefficientTensor::new(4, 2, vec![(vec![1, 2], 0.8)]).unwrap();
        let r = h_recursion_check(&mu4, &pair).unwrap();
        assert!(r.residual < 1e-10);
        assert!((r.c_d - 2.0 * SQRT_2).abs() < 1e-12);
        let mu5 = IsingModel::random(5, 0.7, 0.5, &mut rng).gibbs_measure().unwrap();
        for d in 3..=4 {
            let a = random_tensor(5, d, &mut rng);
            let r = h_recursion_check(&mu5, &a).unwrap();
            assert!(r.residual < 1e-10, "d={d}: {}", r.residual);
            assert!((r.c_d - d as f64 * SQRT_2).abs() < 1e-10);
        }
    }

    #[test]
    fn tail_bound_arithmetic() {
        let norms = TensorNorms { hs: 0.0, sup: 1.0 };
        let b = tail_bound(TailKind::Thm13, 2, 100, norms, 1.0, 100.0);
        assert!((b - 2.0 / E).abs() < 1e-15);
        assert!((b - 0.735_758_882_342_885).abs() < 1e-12);
        assert_eq!(tail_bound(TailKind::Thm13, 2, 100, norms, 1.0, 0.0), 2.0);
        // ‖A‖_HS^{2/d} = n‖A‖_∞^{2/d} makes the two displays coincide at c = C
        let n = 7;
        let sup = 0.6f64;
        for d in 1..=4 {
            let norms = TensorNorms {
                hs: (n as f64).powf(d as f64 / 2.0) * sup,
                sup,
            };
            for t in [0.5, 3.0, 40.0] {
                let a = tail_bound(TailKind::Thm13, d, n, norms, 1.7, t);
                let b = tail_bound(TailKind::Thm14, d, n, norms, 1.7, t);
                assert!((a - b).abs() < 1e-13, "d={d} t={t}");
            }
        }
    }

    #[test]
    fn sup_bounds_dominate_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = IsingModel::random(5, 0.8, 0.5, &mut rng).gibbs_measure().unwrap();
        let kernels = Kernels::new(&mu, &IndexFamily::singletons(5)).unwrap();
        for d in 1..=2 {
            let a = random_tensor(5, d, &mut rng);
            let f = poly_table(&mu, &a).unwrap();
            let bounds = homogeneous_h_sup_bounds(&a).unwrap();
            for (k, b) in bounds.iter().enumerate() {
                let t = crate::diff::h_tensor(f.values(), &kernels, k + 1).unwrap();
                let sup = crate::diff::tensor_norm(&t, &mu, crate::diff::NormKind::Sup);
                assert!(sup <= b + 1e-12, "d={d} k={}: {sup} > {b}", k + 1);
            }
        }
    }

    #[test]
    fn quadratic_second_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mu = IsingModel::random(5, 0.8, 0.5, &mut rng).gibbs_measure().unwrap();
        let kernels = Kernels::new(&mu, &IndexFamily::singletons(5)).unwrap();
        let a = random_tensor(5, 2, &mut rng);
        let f = poly_table(&mu, &a).unwrap();
        let mean = mu.expect(f.values());
        let centered: Vec<f64> = f.values().iter().map(|v| v - mean).collect();
        let t = crate::diff::h_tensor(&centered, &kernels, 2).unwrap();
        for k in 0..5 {
            for l in 0..5 {
                let lim = 2.0 * a.get(&[k, l]).abs() * if k == l { 0.0 } else { 1.0 };
                for x in 0..mu.len() {
                    assert!(t.entry(x, &[k, l]) <= lim + 1e-12);
                }
            }
        }
    }

    #[test]
    fn adaptive_branches() {
        let c = 0.8;
        let one = tail_bound_adaptive(&[], 2.0, 1, c, 3.0).unwrap();
        assert!((one.eta - 9.0 / (2.0 * c * 4.0)).abs() < 1e-14);
        let big = tail_bound_adaptive(&[1.0], 1.0, 2, c, 1e4).unwrap();
        assert!((big.eta - 1e4 / (2.0 * c)).abs() < 1e-9);
        // t²/(2C n₁²) = t/(2C a) at t* = n₁²/a
        let (n1, a) = (1.7f64, 0.9f64);
        let star = n1 * n1 / a;
        for (t, top) in [(0.5 * star, false), (2.0 * star, true)] {
            let r = tail_bound_adaptive(&[n1], a, 2, c, t).unwrap();
            let quad = t * t / (2.0 * c * n1 * n1);
            let lin = t / (2.0 * c * a);
            assert!((r.eta - if top { lin } else { quad }).abs() < 1e-14);
            assert!((r.at - 2.0 * E * t).abs() < 1e-12);
        }
        assert!(tail_bound_adaptive(&[0.0], 1.0, 2, c, 1.0).is_err());
        assert!(tail_bound_adaptive(&[], 1.0, 2, c, 1.0).is_err());
    }

    #[test]
    fn third_order() {
        let free = uniform(5);
        let a = CoefficientTensor::constant(5, 3, 1.0).unwrap();
        let r = third_order_correction(&free, &a).unwrap();
        assert!(r.c.iter().all(|c| c.abs() < 1e-15));
        let model = IsingModel::curie_weiss(6, 0.5, DVector::zeros(6)).unwrap();
        let mu = model.gibbs_measure().unwrap();
        let a = CoefficientTensor::constant(6, 3, 1.0).unwrap();
        let r = third_order_correction(&mu, &a).unwrap();
        let var = |f: &FunctionTable| crate::functionals::variance(&mu, f.values());
        assert!(var(&r.corrected) < var(&r.raw));
        // each site lies in C(5,2) sets sharing one pair correlation
        let m = mu.expect(&mu.tabulate(|b| spin(b, 0) * spin(b, 1)));
        for c in &r.c {
            assert!((c - 10.0 * m).abs() < 1e-12);
        }
    }

    #[test]
    fn corollary_threshold() {
        assert_eq!(corollary_bound(10.0, 4, 1.0, 1.0), None);
        let b = corollary_bound(27.0, 4, 1.0, 1.0).unwrap();
        assert!((b - 4.0 * (-9.0f64 / 8.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn elementary_symmetric_matches_poly_eval() {
        for d in 1..=3 {
            let a = CoefficientTensor::constant(7, d, 1.0).unwrap();
            for bits in 0..128u64 {
                let k = bits.count_ones() as usize;
                assert_eq!(elementary_symmetric(k, 7, d), poly_eval(bits, &a));
            }
        }
    }
}
