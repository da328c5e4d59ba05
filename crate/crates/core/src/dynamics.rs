//! Glauber, random-transposition, Bernoulli–Laplace and exclusion chains,
//! their exact transition matrices, Dirichlet-form comparisons and sampled
//! tail estimates.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chaos::{elementary_symmetric, CoefficientTensor, TailCurve, TailRow};
use crate::diff::Kernels;
use crate::error::{invalid, Error, Result};
use crate::functionals::dirichlet_form;
use crate::ising::IsingModel;
use crate::num::{fmt_real, ksum};
use crate::space::{pack_perm, IndexFamily, SpaceKind, StateSpace, TabulatedMeasure};

#[derive(Debug, Clone)]
pub enum ChainKind {
    /// single-site heat bath for an Ising model
    Glauber(Arc<IsingModel>),
    /// swap a uniformly chosen pair of positions of a permutation
    Transposition { n: usize },
    /// swap a uniformly chosen (occupied, empty) pair on `C_{n,r}`
    BernoulliLaplace { n: usize, r: usize },
    /// swap across a uniformly chosen ring edge on `C_{n,r}`
    Ssep { n: usize, r: usize },
}

impl ChainKind {
    pub fn n(&self) -> usize {
        match self {
            ChainKind::Glauber(m) => m.n(),
            ChainKind::Transposition { n } | ChainKind::BernoulliLaplace { n, .. } | ChainKind::Ssep { n, .. } => *n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChainKind::Glauber(_) => "glauber",
            ChainKind::Transposition { .. } => "transposition",
            ChainKind::BernoulliLaplace { .. } => "bl",
            ChainKind::Ssep { .. } => "ssep",
        }
    }

    /// State space the chain lives on.
    pub fn space_kind(&self) -> SpaceKind {
        match *self {
            ChainKind::Glauber(ref m) => SpaceKind::Spins { n: m.n() },
            ChainKind::Transposition { n } => SpaceKind::Perms { n },
            ChainKind::BernoulliLaplace { n, r } | ChainKind::Ssep { n, r } => SpaceKind::Slice { n, r },
        }
    }

    /// The stationary law, tabulated.
    pub fn target(&self) -> Result<TabulatedMeasure> {
        match self {
            ChainKind::Glauber(m) => m.gibbs_measure(),
            _ => Ok(TabulatedMeasure::uniform(StateSpace::enumerate(self.space_kind())?)),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ChainKind::Glauber(ref m) if m.n() == 0 => Err(invalid("Glauber chain needs n ≥ 1")),
            ChainKind::Transposition { n } if !(2..=255).contains(&n) => {
                Err(invalid(format!("transposition chain needs 2 ≤ n ≤ 255, got {n}")))
            }
            ChainKind::BernoulliLaplace { n, r } | ChainKind::Ssep { n, r } if n < 2 || r > n => {
                Err(invalid(format!("slice chain needs n ≥ 2 and r ≤ n, got n = {n}, r = {r}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub kind: ChainKind,
    /// total number of updates
    pub steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.steps <= self.burn_in {
            return Err(invalid(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(invalid("thinning must be at least 1"));
        }
        Ok(())
    }

    /// Number of recorded samples.
    pub fn samples(&self) -> u64 {
        (self.steps - self.burn_in) / self.thinning
    }

    /// Heuristic burn-in of `10 n log n` updates.
    pub fn default_burn_in(n: usize) -> u64 {
        let n = n.max(2) as f64;
        (10.0 * n * n.ln()).ceil() as u64
    }
}

/// Chain state as per-coordinate values: spins and occupations are 0/1
/// (spin 1 reads as +1), permutations hold entries `1..=n`.
pub type State = Vec<u8>;

fn key_of(kind: SpaceKind, state: &[u8]) -> u64 {
    match kind {
        SpaceKind::Perms { .. } => pack_perm(state),
        _ => state.iter().enumerate().fold(0, |k, (i, &c)| k | (u64::from(c) << i)),
    }
}

fn state_of(space: &StateSpace, index: usize) -> State {
    let key = space.key(index);
    (0..space.n()).map(|i| space.coord(key, i)).collect()
}

fn spin_value(c: u8) -> f64 {
    if c == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `q_i(+1 | σ̄_i)` from a coordinate vector.
fn glauber_plus(model: &IsingModel, state: &[u8], i: usize) -> f64 {
    let col = model.j().column(i);
    let field = model.h()[i] + ksum(state.iter().enumerate().map(|(k, &c)| col[k] * spin_value(c)));
    0.5 * (1.0 + field.tanh())
}

/// `j`-th ordered pair `(i, j)` with `i < j`, counting row by row.
fn pair_at(n: usize, mut idx: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index out of range")
}

pub fn glauber_step<R: Rng + ?Sized>(model: &IsingModel, state: &mut [u8], rng: &mut R) {
    let i = rng.random_range(0..state.len());
    let p = glauber_plus(model, state, i);
    state[i] = u8::from(rng.random::<f64>() < p);
}

pub fn transposition_step<R: Rng + ?Sized>(state: &mut [u8], rng: &mut R) {
    let n = state.len();
    let (i, j) = pair_at(n, rng.random_range(0..n * (n - 1) / 2));
    state.swap(i, j);
}

pub fn bl_step<R: Rng + ?Sized>(state: &mut [u8], rng: &mut R) {
    let occupied: Vec<usize> = (0..state.len()).filter(|&i| state[i] == 1).collect();
    let empty: Vec<usize> = (0..state.len()).filter(|&i| state[i] == 0).collect();
    if occupied.is_empty() || empty.is_empty() {
        return;
    }
    let k = rng.random_range(0..occupied.len() * empty.len());
    state.swap(occupied[k / empty.len()], empty[k % empty.len()]);
}

pub fn ssep_step<R: Rng + ?Sized>(state: &mut [u8], rng: &mut R) {
    let n = state.len();
    let edges = if n == 2 { 1 } else { n };
    let e = rng.random_range(0..edges);
    state.swap(e, (e + 1) % n);
}

fn step<R: Rng + ?Sized>(kind: &ChainKind, state: &mut [u8], rng: &mut R) {
    match kind {
        ChainKind::Glauber(m) => glauber_step(m, state, rng),
        ChainKind::Transposition { .. } => transposition_step(state, rng),
        ChainKind::BernoulliLaplace { .. } => bl_step(state, rng),
        ChainKind::Ssep { .. } => ssep_step(state, rng),
    }
}

/// One-step law from `state` as `(probability, next state)`, matching the step functions.
fn moves(kind: &ChainKind, state: &[u8]) -> Vec<(f64, State)> {
    let n = state.len();
    let swapped = |i: usize, j: usize| {
        let mut s = state.to_vec();
        s.swap(i, j);
        s
    };
    match kind {
        ChainKind::Glauber(m) => (0..n)
            .flat_map(|i| {
                let p = glauber_plus(m, state, i);
                let mut up = state.to_vec();
                up[i] = 1;
                let mut down = state.to_vec();
                down[i] = 0;
                [(p / n as f64, up), ((1.0 - p) / n as f64, down)]
            })
            .collect(),
        ChainKind::Transposition { .. } => {
            let m = n * (n - 1) / 2;
            (0..m).map(|k| pair_at(n, k)).map(|(i, j)| (1.0 / m as f64, swapped(i, j))).collect()
        }
        ChainKind::BernoulliLaplace { .. } => {
            let occupied: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
            let empty: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
            if occupied.is_empty() || empty.is_empty() {
                return vec![(1.0, state.to_vec())];
            }
            let w = 1.0 / (occupied.len() * empty.len()) as f64;
            occupied
                .iter()
                .flat_map(|&i| empty.iter().map(move |&j| (i, j)))
                .map(|(i, j)| (w, swapped(i, j)))
                .collect()
        }
        ChainKind::Ssep { .. } => {
            let edges = if n == 2 { 1 } else { n };
            (0..edges).map(|e| (1.0 / edges as f64, swapped(e, (e + 1) % n))).collect()
        }
    }
}

/// Dense one-step transition matrix on the enumerated space (at most 4096 states).
pub fn transition_matrix(kind: &ChainKind, space: &StateSpace) -> Result<DMatrix<f64>> {
    kind.validate()?;
    if space.kind() != kind.space_kind() {
        return Err(Error::CodecMismatch);
    }
    let states = space.len();
    if states > 4096 {
        return Err(Error::LimitExceeded {
            what: "states for a dense transition matrix",
            requested: states,
            limit: 4096,
        });
    }
    let rows = crate::exec::map_range(states, |x| {
        let mut row = vec![0.0; states];
        for (p, next) in moves(kind, &state_of(space, x)) {
            let y = space
                .index_of(key_of(space.kind(), &next))
                .expect("chain moves stay in the space");
            row[y] += p;
        }
        row
    });
    Ok(DMatrix::from_fn(states, states, |x, y| rows[x][y]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCheck {
    /// `max_y |(πP)(y) - π(y)|`
    pub stationarity: f64,
    /// `max_{x,y} |π(x)P(x,y) - π(y)P(y,x)|`
    pub detailed_balance: f64,
    /// rows sum to one
    pub row_sum: f64,
    pub irreducible: bool,
}

pub fn check_chain(kind: &ChainKind) -> Result<ChainCheck> {
    let pi = kind.target()?;
    let p = transition_matrix(kind, pi.space())?;
    let s = pi.len();
    let probs = pi.probs();
    let stationarity = (0..s)
        .map(|y| (ksum((0..s).map(|x| probs[x] * p[(x, y)])) - probs[y]).abs())
        .fold(0.0, f64::max);
    let mut detailed_balance: f64 = 0.0;
    for x in 0..s {
        for y in x + 1..s {
            detailed_balance = detailed_balance.max((probs[x] * p[(x, y)] - probs[y] * p[(y, x)]).abs());
        }
    }
    let row_sum = (0..s)
        .map(|x| (ksum(p.row(x).iter().copied()) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ChainCheck {
        stationarity,
        detailed_balance,
        row_sum,
        irreducible: strongly_connected(&p),
    })
}

fn strongly_connected(p: &DMatrix<f64>) -> bool {
    let s = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; s];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..s {
                let w = if forward { p[(x, y)] } else { p[(y, x)] };
                if w > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|v| v)
    };
    s == 0 || (reach(true) && reach(false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceDynamics {
    BernoulliLaplace,
    Ssep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletEquality {
    /// `∫ |∂f|² dμ` over the pair family
    pub lhs: f64,
    /// `-𝔼 f G f` for the generator `G`
    pub rhs: f64,
    /// `lhs / rhs`, `None` when both vanish
    pub kappa: Option<f64>,
}

/// Compare `∫|∂f|²dμ_{n,r}` for the family `𝓘_{2,<}` (resp. ring pairs) with
/// `-𝔼 f K f` (resp. `-𝔼 f L f`).
pub fn dirichlet_equality_check(dynamics: SliceDynamics, n: usize, r: usize, f: &[f64]) -> Result<DirichletEquality> {
    let space = StateSpace::enumerate(SpaceKind::Slice { n, r })?;
    if f.len() != space.len() {
        return Err(invalid(format!("f has {} values, C_{{{n},{r}}} has {}", f.len(), space.len())));
    }
    let mu = TabulatedMeasure::uniform(space.clone());
    let family = match dynamics {
        SliceDynamics::BernoulliLaplace => IndexFamily::pairs(n),
        SliceDynamics::Ssep => IndexFamily::ring_pairs(n),
    };
    let kernels = Kernels::new(&mu, &family)?;
    let lhs = dirichlet_form(&mu, &kernels, f)?;
    let idx = |s: &[u8]| space.index_of(key_of(space.kind(), s)).expect("swap stays in the slice");
    let gf: Vec<f64> = (0..space.len())
        .map(|x| {
            let eta = state_of(&space, x);
            let swap = |i: usize, j: usize| {
                let mut s = eta.clone();
                s.swap(i, j);
                f[idx(&s)] - f[x]
            };
            match dynamics {
                SliceDynamics::BernoulliLaplace => ksum(
                    (0..n)
                        .flat_map(|i| (0..n).map(move |j| (i, j)))
                        .filter(|&(i, j)| eta[i] == 1 && eta[j] == 0)
                        .map(|(i, j)| swap(i, j)),
                ),
                SliceDynamics::Ssep => ksum(family.subsets().iter().map(|e| swap(e[0], e[1]))),
            }
        })
        .collect();
    let prod: Vec<f64> = f.iter().zip(&gf).map(|(a, b)| a * b).collect();
    let rhs = -mu.expect(&prod);
    let kappa = (rhs.abs() > 0.0).then(|| lhs / rhs);
    Ok(DirichletEquality { lhs, rhs, kappa })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    Transposition { n: usize },
    BernoulliLaplace { n: usize, r: usize },
    Ssep { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedScaling {
    pub name: &'static str,
    pub formula: &'static str,
    /// value at `c = 1`
    pub value: f64,
    /// the multiplicative constant `c` is not given explicitly
    pub c_unspecified: bool,
}

/// Log-Sobolev constant scalings (`c = 1`) with respect to `∂`.
pub fn named_lsi_scaling(kind: ScalingKind) -> Result<NamedScaling> {
    let (name, formula, value) = match kind {
        ScalingKind::Transposition { n } if n >= 2 => ("transposition", "c*log(n)/n", (n as f64).ln() / n as f64),
        ScalingKind::BernoulliLaplace { n, r } if r >= 1 && r < n => {
            let (nf, rf) = (n as f64, r as f64);
            ("bl", "c*log(n^2/(r(n-r)))/n", (nf * nf / (rf * (nf - rf))).ln() / nf)
        }
        ScalingKind::Ssep { n } if n >= 2 => ("ssep", "c*n^2", (n * n) as f64),
        other => return Err(invalid(format!("no scaling for {other:?}"))),
    };
    Ok(NamedScaling {
        name,
        formula,
        value,
        c_unspecified: true,
    })
}

/// Observables evaluated along a chain.
#[derive(Debug, Clone)]
pub enum Observable {
    /// `e_d(σ) = Σ_{|I| = d} σ_I`, reading 0/1 coordinates as ∓1
    Elementary { d: usize },
    /// `Σ_I a_I σ_I` over spins
    Polynomial(Arc<CoefficientTensor>),
    /// values indexed by state index of an enumerated space
    Table(Arc<StateSpace>, Arc<[f64]>),
}

impl Observable {
    pub fn id(&self) -> String {
        match self {
            Observable::Elementary { d } => format!("e{d}"),
            Observable::Polynomial(a) => format!("poly{}", a.order()),
            Observable::Table(..) => "table".into(),
        }
    }

    fn evaluator(&self, kind: &ChainKind) -> Result<Box<dyn Fn(&[u8]) -> f64 + Send + Sync + '_>> {
        let n = kind.n();
        match self {
            Observable::Elementary { d } => {
                if matches!(kind, ChainKind::Transposition { .. }) {
                    return Err(invalid("e_d is defined for spin or occupation states"));
                }
                let table: Vec<f64> = (0..=n).map(|k| elementary_symmetric(k, n, *d)).collect();
                Ok(Box::new(move |s: &[u8]| table[s.iter().filter(|&&c| c == 1).count()]))
            }
            Observable::Polynomial(a) => {
                if !matches!(kind, ChainKind::Glauber(_)) || a.n() != n {
                    return Err(invalid("polynomial observable needs a Glauber chain of matching n"));
                }
                Ok(Box::new(move |s: &[u8]| {
                    ksum(a.entries().map(|(set, v)| v * set.iter().map(|&i| spin_value(s[i])).product::<f64>()))
                }))
            }
            Observable::Table(space, values) => {
                if space.kind() != kind.space_kind() || values.len() != space.len() {
                    return Err(Error::CodecMismatch);
                }
                let kind = space.kind();
                Ok(Box::new(move |s: &[u8]| {
                    values[space.index_of(key_of(kind, s)).expect("state in space")]
                }))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub spec: ChainSpec,
    pub observable: String,
    /// update count at which each value was recorded
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
}

impl SampleBatch {
    /// CSV with header `step,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,value")?;
        for (s, v) in self.steps.iter().zip(&self.values) {
            writeln!(out, "{s},{}", fmt_real(*v))?;
        }
        Ok(())
    }
}

fn initial_state(kind: &ChainKind, rng: &mut ChaCha8Rng) -> State {
    match *kind {
        ChainKind::Glauber(ref m) => (0..m.n()).map(|_| u8::from(rng.random::<bool>())).collect(),
        ChainKind::Transposition { n } => {
            let mut s: State = (1..=n as u8).collect();
            s.shuffle(rng);
            s
        }
        ChainKind::BernoulliLaplace { n, r } | ChainKind::Ssep { n, r } => {
            let mut s: State = (0..n).map(|i| u8::from(i < r)).collect();
            s.shuffle(rng);
            s
        }
    }
}

/// Stream for chain `task` under `seed`; each chain draws sequentially from its own stream.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

pub fn run_chain(spec: &ChainSpec, observable: &Observable) -> Result<SampleBatch> {
    run_task(spec, observable, 0)
}

fn run_task(spec: &ChainSpec, observable: &Observable, task: u64) -> Result<SampleBatch> {
    spec.validate()?;
    let eval = observable.evaluator(&spec.kind)?;
    let mut rng = task_rng(spec.seed, task);
    let mut state = initial_state(&spec.kind, &mut rng);
    let count = spec.samples() as usize;
    let mut values = Vec::with_capacity(count);
    let mut steps = Vec::with_capacity(count);
    for t in 1..=spec.steps {
        step(&spec.kind, &mut state, &mut rng);
        if t > spec.burn_in && (t - spec.burn_in).is_multiple_of(spec.thinning) {
            values.push(eval(&state));
            steps.push(t);
        }
    }
    Ok(SampleBatch {
        spec: spec.clone(),
        observable: observable.id(),
        steps,
        values,
    })
}

/// Independent chains `0..chains`, run concurrently, returned in task order.
pub fn run_chains(spec: &ChainSpec, observable: &Observable, chains: usize) -> Result<Vec<SampleBatch>> {
    spec.validate()?;
    let _ = observable.evaluator(&spec.kind)?;
    crate::exec::map_range(chains, |task| run_task(spec, observable, task as u64))
        .into_iter()
        .collect()
}

/// Batches used for the standard error of tail frequencies.
pub const TAIL_BATCHES: usize = 50;

/// Fraction of samples with `|f - center| ≥ t` on each grid point, with a
/// batch-means standard error.
pub fn empirical_tail(values: &[f64], center: f64, t_grid: &[f64]) -> TailCurve {
    let len = values.len();
    let batches = TAIL_BATCHES.min(len).max(1);
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    let rows = t_grid
        .iter()
        .map(|&t| {
            if len == 0 {
                return TailRow {
                    t,
                    empirical: None,
                    bound: None,
                    stderr: None,
                };
            }
            let hits = dev.iter().filter(|&&d| d >= t).count();
            let p = hits as f64 / len as f64;
            let size = len / batches;
            let stderr = if size == 0 || batches < 2 {
                None
            } else {
                let means: Vec<f64> = (0..batches)
                    .map(|b| {
                        let chunk = &dev[b * size..(b + 1) * size];
                        chunk.iter().filter(|&&d| d >= t).count() as f64 / size as f64
                    })
                    .collect();
                let m = means.iter().sum::<f64>() / batches as f64;
                let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
                Some((var / batches as f64).sqrt())
            };
            TailRow {
                t,
                empirical: Some(p),
                bound: None,
                stderr,
            }
        })
        .collect();
    TailCurve { rows }
}

/// `μ(|f - 𝔼_μ f| ≥ t)` for a discrete law given by `(value, probability)` pairs.
pub fn exact_tail(law: &[(f64, f64)], t: f64) -> f64 {
    let mean = ksum(law.iter().map(|(v, p)| v * p));
    ksum(law.iter().filter(|(v, _)| (v - mean).abs() >= t).map(|(_, p)| *p))
}

/// Law of `e_d` under independent uniform spins: `k ~ Binomial(n, ½)` ones.
pub fn elementary_law_uniform(n: usize, d: usize) -> Vec<(f64, f64)> {
    let mut log_binom = 0.0f64;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            log_binom += ((n - k + 1) as f64 / k as f64).ln();
        }
        out.push((elementary_symmetric(k, n, d), (log_binom - n as f64 * std::f64::consts::LN_2).exp()));
    }
    out
}
