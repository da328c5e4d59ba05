//! Finite state spaces, tabulated measures and their disintegration kernels.
//!
//! Every state is encoded as a `u64` key holding one fixed-width field per
//! coordinate: one bit for spins and slice occupancies, four bits for
//! permutation entries. Conditioning on the complement of an index set `I`
//! then amounts to masking out the fields of `I`: states sharing the masked
//! key form one fiber, and the kernel `m_{x̄_I}` is the measure restricted to
//! that fiber and renormalised.
//!
//! Only admissible states are enumerated, so the fiber of a context is exactly
//! its set of admissible completions. For permutations this is what makes the
//! kernel of `I = {i, j}` a two-point measure instead of something supported
//! on all of `{1..n}^2`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::num::{fmt_real, ksum, log_sum_exp};

/// Enumeration limits. The spin cap keeps probability arrays around 128 MiB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_spins: usize,
    pub max_perm: usize,
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_spins: 24,
            max_perm: 9,
            max_states: 1 << 24,
        }
    }
}

/// An `n`-site ±1 configuration; bit `i` set means `σ_i = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    bits: u32,
    n: u8,
}

impl SpinConfig {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        if n > 32 {
            return Err(Error::LimitExceeded {
                what: "spin configuration sites",
                requested: n,
                limit: 32,
            });
        }
        if n < 32 && bits >> n != 0 {
            return Err(invalid(format!("bits {bits:#x} exceed {n} sites")));
        }
        Ok(Self { bits, n: n as u8 })
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut bits = 0u32;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                other => return Err(invalid(format!("spin {other} at site {i} is not ±1"))),
            }
        }
        Self::new(bits, spins.len())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn spin(&self, i: usize) -> i8 {
        if self.bits >> i & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_spins(&self) -> Vec<i8> {
        (0..self.n()).map(|i| self.spin(i)).collect()
    }

    /// The switch operator `T_i`.
    pub fn flipped(&self, i: usize) -> Self {
        Self {
            bits: self.bits ^ (1 << i),
            n: self.n,
        }
    }
}

/// A point of the slice `C_{n,r}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SliceConfig {
    occupancy: u64,
    n: u8,
    r: u8,
}

impl SliceConfig {
    pub fn new(occupancy: u64, n: usize, r: usize) -> Result<Self> {
        if n > 63 || (occupancy >> n) != 0 {
            return Err(invalid("occupancy word wider than n"));
        }
        if occupancy.count_ones() as usize != r {
            return Err(invalid(format!(
                "popcount {} does not equal r = {r}",
                occupancy.count_ones()
            )));
        }
        Ok(Self {
            occupancy,
            n: n as u8,
            r: r as u8,
        })
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn r(&self) -> usize {
        self.r as usize
    }
}

/// A permutation stored as the vector `(σ(1), …, σ(n))` with values in `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermVector {
    entries: Vec<u8>,
}

impl PermVector {
    pub fn new(entries: Vec<u8>) -> Result<Self> {
        let n = entries.len();
        if n > 15 {
            return Err(Error::LimitExceeded {
                what: "permutation length",
                requested: n,
                limit: 15,
            });
        }
        let mut seen = vec![false; n + 1];
        for &e in &entries {
            let e = e as usize;
            if e == 0 || e > n || seen[e] {
                return Err(invalid(format!("{entries:?} is not a permutation of 1..={n}")));
            }
            seen[e] = true;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn key(&self) -> u64 {
        pack_perm(&self.entries)
    }
}

/// Entry `i` sits in the field `n - 1 - i`, so numeric key order is lexicographic order.
pub(crate) fn pack_perm(entries: &[u8]) -> u64 {
    let n = entries.len();
    entries
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &e)| acc | (u64::from(e) << (4 * (n - 1 - i))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// `{-1,+1}^n`
    Spins { n: usize },
    /// `C_{n,r}`, binary strings of length `n` with `r` ones
    Slice { n: usize, r: usize },
    /// permutation vectors of length `n`
    Perms { n: usize },
}

impl SpaceKind {
    pub fn n(&self) -> usize {
        match *self {
            SpaceKind::Spins { n } | SpaceKind::Slice { n, .. } | SpaceKind::Perms { n } => n,
        }
    }
}

/// An enumerated finite state space with an index ↔ key codec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    kind: SpaceKind,
    /// Sorted keys; `None` for spins, where key and index coincide.
    keys: Option<Vec<u64>>,
}

impl StateSpace {
    pub fn enumerate(kind: SpaceKind) -> Result<Arc<Self>> {
        Self::enumerate_with(kind, Limits::default())
    }

    pub fn enumerate_with(kind: SpaceKind, limits: Limits) -> Result<Arc<Self>> {
        let space = match kind {
            SpaceKind::Spins { n } => {
                let cap = limits.max_spins.min(63);
                if n > cap {
                    return Err(Error::LimitExceeded {
                        what: "spin sites for enumeration",
                        requested: n,
                        limit: cap,
                    });
                }
                if n == 0 {
                    return Err(invalid("empty spin system"));
                }
                Self { kind, keys: None }
            }
            SpaceKind::Slice { n, r } => {
                if n == 0 || r > n || n > 63 {
                    return Err(invalid(format!("invalid slice C({n},{r})")));
                }
                let count = binomial(n, r);
                if count > limits.max_states as u128 {
                    return Err(Error::LimitExceeded {
                        what: "slice states",
                        requested: count.min(usize::MAX as u128) as usize,
                        limit: limits.max_states,
                    });
                }
                Self {
                    kind,
                    keys: Some(slice_words(n, r)),
                }
            }
            SpaceKind::Perms { n } => {
                let cap = limits.max_perm.min(15);
                if n > cap {
                    return Err(Error::LimitExceeded {
                        what: "permutation length for enumeration",
                        requested: n,
                        limit: cap,
                    });
                }
                if n == 0 {
                    return Err(invalid("empty permutation space"));
                }
                let keys = perm_keys(n);
                Self {
                    kind,
                    keys: Some(keys),
                }
            }
        };
        Ok(Arc::new(space))
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.kind.n()
    }

    pub fn len(&self) -> usize {
        match &self.keys {
            None => 1usize << self.n(),
            Some(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the space is the whole product `×_i S_i` (only spins are).
    pub fn is_full_product(&self) -> bool {
        matches!(self.kind, SpaceKind::Spins { .. })
    }

    #[inline]
    pub fn key(&self, index: usize) -> u64 {
        match &self.keys {
            None => index as u64,
            Some(k) => k[index],
        }
    }

    pub fn index_of(&self, key: u64) -> Option<usize> {
        match &self.keys {
            None => ((key >> self.n()) == 0).then_some(key as usize),
            Some(k) => k.binary_search(&key).ok(),
        }
    }

    /// Bits per coordinate field.
    #[inline]
    pub fn width(&self) -> u32 {
        match self.kind {
            SpaceKind::Perms { .. } => 4,
            _ => 1,
        }
    }

    #[inline]
    fn shift(&self, i: usize) -> usize {
        match self.kind {
            SpaceKind::Perms { n } => 4 * (n - 1 - i),
            _ => i,
        }
    }

    #[inline]
    pub fn coord(&self, key: u64, i: usize) -> u8 {
        ((key >> self.shift(i)) & ((1u64 << self.width()) - 1)) as u8
    }

    /// Mask covering the fields of every coordinate in `subset`.
    pub fn subset_mask(&self, subset: &[usize]) -> u64 {
        let field = (1u64 << self.width()) - 1;
        subset.iter().fold(0, |m, &i| m | (field << self.shift(i)))
    }

    /// Coordinate values of `key` on `subset` (bits are 0/1; spins read 1 as +1).
    pub fn coords_on(&self, key: u64, subset: &[usize]) -> Vec<u8> {
        subset.iter().map(|&i| self.coord(key, i)).collect()
    }

    /// ±1 value of site `i` in a spin state.
    #[inline]
    pub fn spin(&self, index: usize, i: usize) -> f64 {
        if (self.key(index) >> i) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn format_state(&self, key: u64) -> String {
        match self.kind {
            SpaceKind::Spins { n } | SpaceKind::Slice { n, .. } => (0..n)
                .map(|i| if (key >> i) & 1 == 1 { '1' } else { '0' })
                .collect(),
            SpaceKind::Perms { n } => {
                let parts: Vec<String> = (0..n).map(|i| self.coord(key, i).to_string()).collect();
                format!("({})", parts.join(","))
            }
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn slice_words(n: usize, r: usize) -> Vec<u64> {
    if r == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(n, r) as usize);
    let mut w: u64 = (1u64 << r) - 1;
    let limit = 1u64 << n;
    while w < limit {
        out.push(w);
        // Gosper's hack: next word with the same popcount
        let c = w & w.wrapping_neg();
        let rr = w + c;
        w = (((rr ^ w) >> 2) / c) | rr;
    }
    out
}

fn perm_keys(n: usize) -> Vec<u64> {
    let mut cur: Vec<u8> = (1..=n as u8).collect();
    let mut out = Vec::new();
    loop {
        out.push(pack_perm(&cur));
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// An explicit probability vector over an enumerated space.
#[derive(Debug, Clone)]
pub struct TabulatedMeasure {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TabulatedMeasure {
    /// Normalise unnormalised log-weights (`-inf` marks a null state).
    pub fn from_log_weights(space: Arc<StateSpace>, log_weights: Vec<f64>) -> Result<Self> {
        Ok(Self::from_log_weights_with_norm(space, log_weights)?.0)
    }

    /// As [`Self::from_log_weights`], also returning the log normaliser.
    pub fn from_log_weights_with_norm(
        space: Arc<StateSpace>,
        mut log_weights: Vec<f64>,
    ) -> Result<(Self, f64)> {
        if log_weights.len() != space.len() {
            return Err(invalid(format!(
                "{} weights for a space of {} states",
                log_weights.len(),
                space.len()
            )));
        }
        if let Some(i) = log_weights
            .iter()
            .position(|w| w.is_nan() || *w == f64::INFINITY)
        {
            return Err(invalid(format!("log-weight at index {i} is not finite")));
        }
        let log_z = log_sum_exp(&log_weights);
        if log_z == f64::NEG_INFINITY {
            return Err(invalid("all weights vanish"));
        }
        for w in &mut log_weights {
            *w -= log_z;
        }
        let probs = log_weights.iter().map(|lp| lp.exp()).collect();
        Ok((
            Self {
                space,
                probs,
                log_probs: log_weights,
            },
            log_z,
        ))
    }

    pub fn from_weights(space: Arc<StateSpace>, weights: Vec<f64>) -> Result<Self> {
        if let Some(index) = weights.iter().position(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::NegativeInput {
                index,
                value: weights[index],
            });
        }
        let logs = weights
            .iter()
            .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        Self::from_log_weights(space, logs)
    }

    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let len = space.len();
        let p = 1.0 / len as f64;
        Self {
            space,
            probs: vec![p; len],
            log_probs: vec![-(len as f64).ln(); len],
        }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Indices with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(_, lp)| **lp > f64::NEG_INFINITY)
            .map(|(i, _)| i)
    }

    pub fn has_full_support(&self) -> bool {
        self.space.is_full_product() && self.log_probs.iter().all(|lp| *lp > f64::NEG_INFINITY)
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        ksum(
            self.probs
                .iter()
                .zip(f)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, v)| p * v),
        )
    }

    /// Evaluate `f` on every state key (parallel when enabled).
    pub fn tabulate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(u64) -> f64 + Sync + Send,
    {
        let space = &self.space;
        crate::exec::map_range(space.len(), |i| f(space.key(i)))
    }

    /// One line per state: `<index> <state> <prob>`.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(
                out,
                "{} {} {}",
                i,
                self.space.format_state(self.space.key(i)),
                fmt_real(*p)
            )?;
        }
        Ok(())
    }
}

/// A family `𝓘` of site-index sets (0-based, each sorted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexFamily {
    subsets: Vec<Vec<usize>>,
}

impl IndexFamily {
    pub fn new(subsets: Vec<Vec<usize>>) -> Result<Self> {
        if subsets.is_empty() {
            return Err(invalid("index family is empty"));
        }
        let mut normalized = Vec::with_capacity(subsets.len());
        for mut s in subsets {
            if s.is_empty() {
                return Err(invalid("index family contains an empty set"));
            }
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("repeated site in {s:?}")));
            }
            if normalized.contains(&s) {
                return Err(invalid(format!("duplicate set {s:?}")));
            }
            normalized.push(s);
        }
        Ok(Self {
            subsets: normalized,
        })
    }

    /// `𝓘₁ = {{i}}`.
    pub fn singletons(n: usize) -> Self {
        Self {
            subsets: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// All unordered pairs `{i, j}`, `i < j`.
    pub fn pairs(n: usize) -> Self {
        let mut subsets = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                subsets.push(vec![i, j]);
            }
        }
        Self { subsets }
    }

    /// Ring edges `{i, i+1}` with `n+1 ≡ 1`; a ring of two sites has one edge.
    pub fn ring_pairs(n: usize) -> Self {
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let mut e = vec![i, (i + 1) % n];
            e.sort_unstable();
            if e[0] != e[1] && !subsets.contains(&e) {
                subsets.push(e);
            }
        }
        Self { subsets }
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn check_fits(&self, n: usize) -> Result<()> {
        match self.subsets.iter().flatten().find(|&&i| i >= n) {
            Some(i) => Err(invalid(format!("site {i} out of range for n = {n}"))),
            None => Ok(()),
        }
    }
}

/// One fiber `{x : x̄_I = context}` together with its kernel row.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub context: u64,
    /// marginal mass `μ̄_I(context)`
    pub mass: f64,
    /// state indices, ascending
    pub members: Vec<usize>,
    /// conditional probabilities aligned with `members`; empty when `mass == 0`
    pub probs: Vec<f64>,
}

impl Fiber {
    pub fn has_row(&self) -> bool {
        !self.probs.is_empty()
    }
}

/// The Markov kernel `m_{x̄_I}` of a tabulated measure.
#[derive(Debug, Clone)]
pub struct ConditionalKernel {
    subset: Vec<usize>,
    mask: u64,
    fibers: Vec<Fiber>,
    fiber_of: Vec<u32>,
}

impl ConditionalKernel {
    pub fn new(measure: &TabulatedMeasure, subset: &[usize]) -> Result<Self> {
        let space = measure.space();
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() {
            return Err(invalid("empty index set"));
        }
        if let Some(&i) = subset.iter().find(|&&i| i >= space.n()) {
            return Err(invalid(format!("site {i} out of range")));
        }
        let mask = space.subset_mask(&subset);
        let mut order: Vec<(u64, usize)> = (0..space.len())
            .map(|i| (space.key(i) & !mask, i))
            .collect();
        order.sort_unstable();

        let lp = measure.log_probs();
        let mut fibers = Vec::new();
        let mut fiber_of = vec![0u32; space.len()];
        let mut start = 0;
        while start < order.len() {
            let context = order[start].0;
            let end = start
                + order[start..]
                    .iter()
                    .take_while(|(c, _)| *c == context)
                    .count();
            let members: Vec<usize> = order[start..end].iter().map(|&(_, i)| i).collect();
            let logs: Vec<f64> = members.iter().map(|&i| lp[i]).collect();
            let lse = log_sum_exp(&logs);
            let (mass, probs) = if lse == f64::NEG_INFINITY {
                (0.0, Vec::new())
            } else {
                (lse.exp(), logs.iter().map(|l| (l - lse).exp()).collect())
            };
            let id = fibers.len() as u32;
            for &m in &members {
                fiber_of[m] = id;
            }
            fibers.push(Fiber {
                context,
                mass,
                members,
                probs,
            });
            start = end;
        }
        Ok(Self {
            subset,
            mask,
            fibers,
            fiber_of,
        })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    /// The fiber containing state `index`.
    #[inline]
    pub fn fiber_of_state(&self, index: usize) -> &Fiber {
        &self.fibers[self.fiber_of[index] as usize]
    }

    /// Kernel row of a context; `None` for zero-mass or unknown contexts.
    pub fn row(&self, context: u64) -> Option<&Fiber> {
        self.fibers
            .binary_search_by_key(&context, |f| f.context)
            .ok()
            .map(|i| &self.fibers[i])
            .filter(|f| f.has_row())
    }
}

/// Output of [`disintegrate`]: marginal on the complement plus the kernel.
#[derive(Debug, Clone)]
pub struct Disintegration {
    /// `(context, μ̄_I(context))` for every context of positive mass
    pub marginal: Vec<(u64, f64)>,
    pub kernel: ConditionalKernel,
}

impl Disintegration {
    /// `∫∫ f(x̄_I, y_I) dm_{x̄_I}(y_I) dμ̄_I(x̄_I)`.
    pub fn iterated_expectation(&self, f: &[f64]) -> f64 {
        ksum(self.kernel.fibers().iter().filter(|fb| fb.has_row()).map(|fb| {
            fb.mass * ksum(fb.members.iter().zip(&fb.probs).map(|(&m, p)| p * f[m]))
        }))
    }
}

pub fn disintegrate(measure: &TabulatedMeasure, subset: &[usize]) -> Result<Disintegration> {
    let kernel = ConditionalKernel::new(measure, subset)?;
    let marginal = kernel
        .fibers()
        .iter()
        .filter(|f| f.has_row())
        .map(|f| (f.context, f.mass))
        .collect();
    Ok(Disintegration { marginal, kernel })
}

/// Coordinates on `I` of every completion with positive kernel mass.
pub fn kernel_support(
    space: &StateSpace,
    kernel: &ConditionalKernel,
    context: u64,
) -> Result<Vec<Vec<u8>>> {
    let row = kernel.row(context).ok_or(Error::UnknownContext { context })?;
    Ok(row
        .members
        .iter()
        .zip(&row.probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(&m, _)| space.coords_on(space.key(m), kernel.subset()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumeration_counts() {
        assert_eq!(StateSpace::enumerate(SpaceKind::Spins { n: 3 }).unwrap().len(), 8);
        assert_eq!(StateSpace::enumerate(SpaceKind::Slice { n: 4, r: 2 }).unwrap().len(), 6);
        assert_eq!(StateSpace::enumerate(SpaceKind::Perms { n: 4 }).unwrap().len(), 24);
    }

    #[test]
    fn enumeration_limits_name_the_limit() {
        let err = StateSpace::enumerate(SpaceKind::Spins { n: 25 }).unwrap_err();
        assert!(matches!(err, Error::LimitExceeded { limit: 24, .. }), "{err}");
        let err = StateSpace::enumerate(SpaceKind::Perms { n: 10 }).unwrap_err();
        assert!(err.to_string().contains('9'));
        let custom = Limits {
            max_spins: 4,
            ..Limits::default()
        };
        assert!(StateSpace::enumerate_with(SpaceKind::Spins { n: 5 }, custom).is_err());
    }

    #[test]
    fn codec_round_trips_every_state() {
        for kind in [
            SpaceKind::Spins { n: 5 },
            SpaceKind::Slice { n: 6, r: 3 },
            SpaceKind::Perms { n: 5 },
        ] {
            let space = StateSpace::enumerate(kind).unwrap();
            for i in 0..space.len() {
                assert_eq!(space.index_of(space.key(i)), Some(i));
            }
        }
        let perms = StateSpace::enumerate(SpaceKind::Perms { n: 4 }).unwrap();
        for i in 0..perms.len() {
            let entries = perms.coords_on(perms.key(i), &[0, 1, 2, 3]);
            let p = PermVector::new(entries).unwrap();
            assert_eq!(p.key(), perms.key(i));
        }
    }

    #[test]
    fn spin_and_slice_configs_validate() {
        let s = SpinConfig::from_spins(&[1, -1, 1]).unwrap();
        assert_eq!(s.bits(), 0b101);
        assert_eq!(s.to_spins(), vec![1, -1, 1]);
        assert_eq!(s.flipped(1).to_spins(), vec![1, 1, 1]);
        assert!(SpinConfig::from_spins(&[0]).is_err());
        assert!(SliceConfig::new(0b011, 3, 2).is_ok());
        assert!(SliceConfig::new(0b111, 3, 2).is_err());
        assert!(PermVector::new(vec![1, 1, 3]).is_err());
        assert!(PermVector::new(vec![1, 4, 3]).is_err());
    }

    #[test]
    fn product_measure_kernels_do_not_depend_on_context() {
        let space = StateSpace::enumerate(SpaceKind::Spins { n: 4 }).unwrap();
        let p = [0.3, 0.6, 0.8, 0.45];
        let w: Vec<f64> = (0..space.len())
            .map(|x| {
                (0..4)
                    .map(|i| if (x >> i) & 1 == 1 { p[i] } else { 1.0 - p[i] })
                    .product()
            })
            .collect();
        let mu = TabulatedMeasure::from_weights(space.clone(), w).unwrap();
        let d = disintegrate(&mu, &[1, 3]).unwrap();
        for fb in d.kernel.fibers() {
            for (&m, &pr) in fb.members.iter().zip(&fb.probs) {
                let key = space.key(m);
                let expect: f64 = [1usize, 3]
                    .iter()
                    .map(|&i| if (key >> i) & 1 == 1 { p[i] } else { 1.0 - p[i] })
                    .product();
                assert!((pr - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn permutation_kernel_is_two_point() {
        let space = StateSpace::enumerate(SpaceKind::Perms { n: 3 }).unwrap();
        let mu = TabulatedMeasure::uniform(space.clone());
        let d = disintegrate(&mu, &[0, 1]).unwrap();
        // context (·,·,3)
        let context = 3u64;
        let row = d.kernel.row(context).unwrap();
        assert_eq!(row.members.len(), 2);
        assert!(row.probs.iter().all(|p| (p - 0.5).abs() < 1e-15));
        let mut support = kernel_support(&space, &d.kernel, context).unwrap();
        support.sort();
        assert_eq!(support, vec![vec![1, 2], vec![2, 1]]);
        assert!(matches!(
            kernel_support(&space, &d.kernel, 0xdead),
            Err(Error::UnknownContext { .. })
        ));
    }

    #[test]
    fn slice_kernel_support_respects_popcount() {
        let space = StateSpace::enumerate(SpaceKind::Slice { n: 2, r: 1 }).unwrap();
        let mu = TabulatedMeasure::uniform(space.clone());
        let d = disintegrate(&mu, &[0, 1]).unwrap();
        let mut support = kernel_support(&space, &d.kernel, 0).unwrap();
        support.sort();
        assert_eq!(support, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn full_support_product_kernel_support_is_everything() {
        let space = StateSpace::enumerate(SpaceKind::Spins { n: 3 }).unwrap();
        let mu = TabulatedMeasure::uniform(space.clone());
        let d = disintegrate(&mu, &[0, 2]).unwrap();
        let s = kernel_support(&space, &d.kernel, 0b010).unwrap();
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn zero_mass_contexts_have_no_row() {
        let space = StateSpace::enumerate(SpaceKind::Spins { n: 2 }).unwrap();
        // state 0b10 and 0b11 carry no mass, so context σ₂=+1 is null for I={1}
        let mu = TabulatedMeasure::from_weights(space, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let d = disintegrate(&mu, &[0]).unwrap();
        assert_eq!(d.marginal.len(), 1);
        assert!(d.kernel.row(0b10).is_none());
        assert!(d.kernel.row(0b00).is_some());
    }

    #[test]
    fn reconstruction_and_marginal_consistency_on_random_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let space = StateSpace::enumerate(SpaceKind::Spins { n }).unwrap();
            let w: Vec<f64> = (0..space.len())
                .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() })
                .chain(std::iter::once(0.0))
                .take(space.len())
                .collect();
            let Ok(mu) = TabulatedMeasure::from_weights(space.clone(), w) else {
                continue;
            };
            let subset: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            let subset = if subset.is_empty() { vec![0] } else { subset };
            let d = disintegrate(&mu, &subset).unwrap();
            let f: Vec<f64> = (0..space.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!((d.iterated_expectation(&f) - mu.expect(&f)).abs() < 1e-12);
            // kernel rows weighted by the marginal reproduce μ
            let mut rebuilt = vec![0.0; space.len()];
            for fb in d.kernel.fibers().iter().filter(|f| f.has_row()) {
                for (&m, p) in fb.members.iter().zip(&fb.probs) {
                    rebuilt[m] = fb.mass * p;
                }
            }
            for (a, b) in rebuilt.iter().zip(mu.probs()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dump_format() {
        let space = StateSpace::enumerate(SpaceKind::Perms { n: 2 }).unwrap();
        let mu = TabulatedMeasure::uniform(space);
        let mut buf = Vec::new();
        mu.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "0 (1,2) 5.0000000000000000e-1\n1 (2,1) 5.0000000000000000e-1\n"
        );
    }

    #[test]
    fn index_families() {
        assert_eq!(IndexFamily::singletons(3).len(), 3);
        assert_eq!(IndexFamily::pairs(4).len(), 6);
        assert_eq!(IndexFamily::ring_pairs(5).len(), 5);
        assert_eq!(IndexFamily::ring_pairs(2).len(), 1);
        assert!(IndexFamily::new(vec![]).is_err());
        assert!(IndexFamily::new(vec![vec![]]).is_err());
        assert!(IndexFamily::new(vec![vec![0, 1], vec![1, 0]]).is_err());
        assert!(IndexFamily::singletons(3).check_fits(2).is_err());
    }
}
