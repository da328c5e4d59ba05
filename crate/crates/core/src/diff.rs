//! Difference operators `∂_I`, `𝔥_I`, iterated tensors and tensor norms.
//!
//! The sup in `𝔥_I` ranges over positive-mass completions only. Under an
//! exclusion constraint (permutations, slices) the admissible values of `x_I`
//! depend on the context, and taking the sup over all of `S_I` would compare
//! `f` at states that do not exist.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::exec;
use crate::num::ksum;
use crate::space::{ConditionalKernel, IndexFamily, TabulatedMeasure};

/// Dense tensors above this many bytes are refused.
pub const MEMORY_BUDGET: u128 = 2 << 30;

/// The conditional kernels of every set in a family.
#[derive(Debug, Clone)]
pub struct Kernels {
    family: IndexFamily,
    kernels: Vec<ConditionalKernel>,
}

impl Kernels {
    pub fn new(measure: &TabulatedMeasure, family: &IndexFamily) -> Result<Self> {
        family.check_fits(measure.space().n())?;
        let kernels = family
            .subsets()
            .iter()
            .map(|s| ConditionalKernel::new(measure, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family: family.clone(),
            kernels,
        })
    }

    pub fn family(&self) -> &IndexFamily {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn get(&self, idx: usize) -> &ConditionalKernel {
        &self.kernels[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConditionalKernel> {
        self.kernels.iter()
    }
}

/// Nonnegative order-`d` array indexed by `(I₁, …, I_d)` and state.
///
/// Storage is tuple-major: the function of tuple `t` occupies
/// `values[t * states .. (t + 1) * states]`, tuples in row-major order with
/// `I₁` (the last operator applied) outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceTensor {
    order: usize,
    family_len: usize,
    states: usize,
    values: Vec<f64>,
}

impl DifferenceTensor {
    pub fn zeros(order: usize, family_len: usize, states: usize) -> Result<Self> {
        let tuples = checked_tuples(family_len, order, states)?;
        Ok(Self {
            order,
            family_len,
            states,
            values: vec![0.0; tuples * states],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn family_len(&self) -> usize {
        self.family_len
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn tuples(&self) -> usize {
        self.values.len() / self.states.max(1)
    }

    pub fn tuple_index(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.order);
        tuple.iter().fold(0, |acc, &i| acc * self.family_len + i)
    }

    pub fn entry(&self, state: usize, tuple: &[usize]) -> f64 {
        self.values[self.tuple_index(tuple) * self.states + state]
    }

    /// The function `x ↦ T_{tuple}(x)`.
    pub fn component(&self, tuple_index: usize) -> &[f64] {
        &self.values[tuple_index * self.states..(tuple_index + 1) * self.states]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|T|(x)`, the Euclidean norm over all tuples.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        let tuples = self.tuples();
        exec::map_range(self.states, |x| {
            ksum((0..tuples).map(|t| self.values[t * self.states + x].powi(2))).sqrt()
        })
    }
}

fn checked_tuples(family_len: usize, order: usize, states: usize) -> Result<usize> {
    let tuples = (family_len as u128).checked_pow(order as u32).unwrap_or(u128::MAX);
    let bytes = tuples.saturating_mul(states as u128).saturating_mul(8);
    if bytes > MEMORY_BUDGET {
        return Err(Error::MemoryBudget {
            requested_bytes: bytes,
            budget_bytes: MEMORY_BUDGET,
        });
    }
    Ok(tuples as usize)
}

/// `∂_I f` on every state for one kernel.
pub fn d_lower_one(f: &[f64], kernel: &ConditionalKernel) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for fb in kernel.fibers().iter().filter(|fb| fb.has_row()) {
        for &x in &fb.members {
            let s = ksum(
                fb.members
                    .iter()
                    .zip(&fb.probs)
                    .map(|(&y, p)| p * (f[x] - f[y]).powi(2)),
            );
            out[x] = (0.5 * s).sqrt();
        }
    }
    out
}

/// `𝔥_I f` on every state for one kernel.
pub fn h_upper_one(f: &[f64], kernel: &ConditionalKernel) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for fb in kernel.fibers().iter().filter(|fb| fb.has_row()) {
        let (lo, hi) = fb
            .members
            .iter()
            .zip(&fb.probs)
            .filter(|(_, p)| **p > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&y, _)| {
                (lo.min(f[y]), hi.max(f[y]))
            });
        let v = FRAC_1_SQRT_2 * (hi - lo);
        for &x in &fb.members {
            out[x] = v;
        }
    }
    out
}

/// `∂f = (∂_I f)_{I ∈ 𝓘}`.
pub fn d_lower(f: &[f64], kernels: &Kernels) -> Result<DifferenceTensor> {
    order_one(f, kernels, d_lower_one)
}

/// `𝔥f = (𝔥_I f)_{I ∈ 𝓘}`.
pub fn h_upper(f: &[f64], kernels: &Kernels) -> Result<DifferenceTensor> {
    order_one(f, kernels, h_upper_one)
}

fn order_one(
    f: &[f64],
    kernels: &Kernels,
    op: fn(&[f64], &ConditionalKernel) -> Vec<f64>,
) -> Result<DifferenceTensor> {
    let states = f.len();
    checked_tuples(kernels.len(), 1, states)?;
    let parts = exec::map_range(kernels.len(), |i| op(f, kernels.get(i)));
    Ok(DifferenceTensor {
        order: 1,
        family_len: kernels.len(),
        states,
        values: parts.concat(),
    })
}

/// Iterated tensor `𝔥_{I₁…I_d} f = 𝔥_{I₁}(𝔥_{I₂…I_d} f)`.
pub fn h_tensor(f: &[f64], kernels: &Kernels, d: usize) -> Result<DifferenceTensor> {
    if d == 0 {
        return Err(crate::error::invalid("tensor order must be at least 1"));
    }
    let m = kernels.len();
    let states = f.len();
    checked_tuples(m, d, states)?;
    let mut current = h_upper(f, kernels)?;
    for order in 2..=d {
        let inner = current.tuples();
        let parts = exec::map_range(m * inner, |idx| {
            let (outer, rest) = (idx / inner, idx % inner);
            h_upper_one(current.component(rest), kernels.get(outer))
        });
        current = DifferenceTensor {
            order,
            family_len: m,
            states,
            values: parts.concat(),
        };
    }
    Ok(current)
}

/// `𝔥|T|`: the order-one tensor of the pointwise norm of `T`.
pub fn h_of_norm(t: &DifferenceTensor, kernels: &Kernels) -> Result<DifferenceTensor> {
    h_upper(&t.pointwise_norm(), kernels)
}

/// Product-form upper bound for spin systems with `𝓘 = 𝓘₁`: entry
/// `2^{-d/2} |Π_{i ∈ tuple}(Id - T_i) f|` on ordered tuples of distinct sites,
/// zero on tuples with a repeated site.
///
/// Evaluated on the full cube, so `f` must be given on all `2^n` states.
pub fn h_product_bound(f: &[f64], n: usize, d: usize) -> Result<DifferenceTensor> {
    if f.len() != 1usize << n {
        return Err(crate::error::invalid(format!(
            "product bound needs all 2^{n} spin states, got {}",
            f.len()
        )));
    }
    if d == 0 {
        return Err(crate::error::invalid("tensor order must be at least 1"));
    }
    let states = f.len();
    let tuples = checked_tuples(n, d, states)?;
    let scale = 0.5f64.powf(d as f64 / 2.0);
    let parts = exec::map_range(tuples, |t| {
        let mut sites = Vec::with_capacity(d);
        let mut rest = t;
        for _ in 0..d {
            sites.push(rest % n);
            rest /= n;
        }
        let mut seen = 0u64;
        for &s in &sites {
            if seen >> s & 1 == 1 {
                return vec![0.0; states];
            }
            seen |= 1 << s;
        }
        let mask = seen;
        (0..states)
            .map(|x| {
                // Π(Id - T_i) f(x) = Σ_{S ⊆ sites} (-1)^{|S|} f(T_S x)
                let mut acc = 0.0;
                let mut sub = mask;
                loop {
                    let sign = if sub.count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += sign * f[x ^ sub as usize];
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & mask;
                }
                scale * acc.abs()
            })
            .collect()
    });
    Ok(DifferenceTensor {
        order: d,
        family_len: n,
        states,
        values: parts.concat(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `(∫ |T|² dμ)^{1/2}`
    L2,
    /// `max_{x ∈ supp μ} |T|(x)`
    Sup,
}

/// `‖T‖_p = ‖ |T| ‖_{L^p(μ)}`.
pub fn tensor_norm(t: &DifferenceTensor, measure: &TabulatedMeasure, kind: NormKind) -> f64 {
    let pw = t.pointwise_norm();
    match kind {
        NormKind::L2 => {
            let sq: Vec<f64> = pw.iter().map(|v| v * v).collect();
            measure.expect(&sq).sqrt()
        }
        NormKind::Sup => measure.support().map(|x| pw[x]).fold(0.0, f64::max),
    }
}
