//! Ising Gibbs measures, local specifications, Dobrushin quantities and the
//! LSI certificate.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::num::entropy_kernel;
use crate::space::{Limits, SpaceKind, StateSpace, TabulatedMeasure};

/// `π(σ) ∝ exp(½⟨σ,Jσ⟩ + ⟨h,σ⟩)` on `{-1,+1}^n`.
#[derive(Debug, Clone)]
pub struct IsingModel {
    j: DMatrix<f64>,
    h: DVector<f64>,
    log_z: OnceLock<f64>,
}

impl IsingModel {
    pub fn new(j: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let n = h.len();
        if n == 0 {
            return Err(invalid("model has no sites"));
        }
        if j.nrows() != n || j.ncols() != n {
            return Err(invalid(format!(
                "J is {}x{} but h has {n} entries",
                j.nrows(),
                j.ncols()
            )));
        }
        if j.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coupling or field"));
        }
        for i in 0..n {
            if j[(i, i)] != 0.0 {
                return Err(invalid(format!("J has nonzero diagonal at site {}", i + 1)));
            }
            for k in 0..i {
                if j[(i, k)] != j[(k, i)] {
                    return Err(invalid(format!(
                        "J is not symmetric at ({}, {})",
                        i + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            j,
            h,
            log_z: OnceLock::new(),
        })
    }

    pub fn free(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, n), DVector::zeros(n)).expect("zero model is valid")
    }

    /// `J_ij = β₀/n` off the diagonal.
    pub fn curie_weiss(n: usize, beta0: f64, h: DVector<f64>) -> Result<Self> {
        let mut j = DMatrix::from_element(n, n, beta0 / n as f64);
        j.fill_diagonal(0.0);
        Self::new(j, h)
    }

    /// Random symmetric couplings rescaled to `‖J‖₁→₁ = j_norm`, fields uniform on `[-h_max, h_max]`.
    pub fn random<R: Rng + ?Sized>(n: usize, j_norm: f64, h_max: f64, rng: &mut R) -> Self {
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..i {
                let v = rng.random_range(-1.0..1.0);
                j[(i, k)] = v;
                j[(k, i)] = v;
            }
        }
        let norm = j_norm_1to1(&j);
        if norm > 0.0 {
            j *= j_norm / norm;
        }
        let h = DVector::from_fn(n, |_, _| {
            if h_max > 0.0 {
                rng.random_range(-h_max..=h_max)
            } else {
                0.0
            }
        });
        Self::new(j, h).expect("random model is valid")
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    /// `½⟨σ,Jσ⟩ + ⟨h,σ⟩` for the configuration with bit word `bits`.
    pub fn energy(&self, bits: u64) -> f64 {
        let n = self.n();
        let mut e = 0.0;
        for i in 0..n {
            let si = spin(bits, i);
            let mut pair = 0.0;
            for k in i + 1..n {
                pair += self.j[(i, k)] * spin(bits, k);
            }
            e += si * (pair + self.h[i]);
        }
        e
    }

    /// `Σ_j J_ij σ_j + h_i`.
    #[inline]
    pub fn local_field(&self, i: usize, bits: u64) -> f64 {
        let mut m = self.h[i];
        for k in 0..self.n() {
            m += self.j[(i, k)] * spin(bits, k);
        }
        m
    }

    /// `q_i(+1 | σ̄_i) = ½(1 + tanh(Σ_j J_ij σ_j + h_i))`.
    pub fn conditional_plus(&self, i: usize, bits: u64) -> f64 {
        0.5 * (1.0 + self.local_field(i, bits).tanh())
    }

    pub fn gibbs_measure(&self) -> Result<TabulatedMeasure> {
        self.gibbs_measure_with(Limits::default())
    }

    pub fn gibbs_measure_with(&self, limits: Limits) -> Result<TabulatedMeasure> {
        let space = StateSpace::enumerate_with(SpaceKind::Spins { n: self.n() }, limits)?;
        let weights = exec::map_range(space.len(), |x| self.energy(x as u64));
        let (mu, log_z) = TabulatedMeasure::from_log_weights_with_norm(space, weights)?;
        let _ = self.log_z.set(log_z);
        Ok(mu)
    }

    /// Cached log-partition function; enumerates on first use.
    pub fn log_z(&self) -> Result<f64> {
        if let Some(z) = self.log_z.get() {
            return Ok(*z);
        }
        self.gibbs_measure()?;
        Ok(*self.log_z.get().expect("set by gibbs_measure"))
    }

    pub fn beta_min(&self, mode: BetaMode) -> f64 {
        match mode {
            // The sup of |Σ_j J_ij σ_j + h_i| over σ̄_i is attained by aligning
            // every σ_j with sign(J_ij h_i), which gives the row sum exactly.
            BetaMode::Exact => {
                let worst = (0..self.n())
                    .map(|i| self.j.row(i).iter().map(|v| v.abs()).sum::<f64>() + self.h[i].abs())
                    .fold(0.0, f64::max);
                0.5 * (1.0 - worst.tanh())
            }
            BetaMode::Bound => {
                let hmax = self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                0.5 * (1.0 - (j_norm_1to1(&self.j) + hmax).tanh())
            }
        }
    }

    pub fn coupling_matrix(&self, mode: CouplingMode) -> Result<DMatrix<f64>> {
        let n = self.n();
        match mode {
            CouplingMode::Bound => Ok(self.j.map(f64::abs)),
            CouplingMode::Exact { max_n } => {
                if n > max_n {
                    return Err(Error::LimitExceeded {
                        what: "sites for the exact coupling matrix",
                        requested: n,
                        limit: max_n,
                    });
                }
                let entries = exec::map_range(n * n, |idx| {
                    let (i, k) = (idx / n, idx % n);
                    if i == k {
                        0.0
                    } else {
                        self.exact_coupling(i, k)
                    }
                });
                Ok(DMatrix::from_row_slice(n, n, &entries))
            }
        }
    }

    /// `sup ½|tanh(m + J_ik) - tanh(m - J_ik)|` over the spins other than `i, k`,
    /// where `m` is the local field at `i` without site `k`.
    fn exact_coupling(&self, i: usize, k: usize) -> f64 {
        let jik = self.j[(i, k)];
        if jik == 0.0 {
            return 0.0;
        }
        let others: Vec<usize> = (0..self.n()).filter(|&s| s != i && s != k).collect();
        let coeff: Vec<f64> = others.iter().map(|&s| self.j[(i, s)]).collect();
        // walk a Gray code so each configuration costs one update
        let mut m = self.h[i] - coeff.iter().sum::<f64>();
        let mut best = tv_flip(m, jik);
        let mut state = 0u64;
        for step in 1u64..(1u64 << others.len()) {
            let bit = step.trailing_zeros() as usize;
            state ^= 1 << bit;
            if state >> bit & 1 == 1 {
                m += 2.0 * coeff[bit];
            } else {
                m -= 2.0 * coeff[bit];
            }
            best = best.max(tv_flip(m, jik));
        }
        best
    }

    /// The certificate of [`lsi_certificate`] for this model.
    pub fn lsi_certificate(&self, coupling: CouplingMode) -> Result<CertificateReport> {
        lsi_certificate(self, coupling)
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

#[inline]
fn spin(bits: u64, i: usize) -> f64 {
    if bits >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn tv_flip(m: f64, j: f64) -> f64 {
    0.5 * ((m + j).tanh() - (m - j).tanh()).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    Exact,
    /// `½(1 - tanh(‖J‖₁→₁ + ‖h‖_∞))`
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// enumerate all contexts; refuses `n > max_n`
    Exact { max_n: usize },
    /// `A ≤ |J|`
    Bound,
}

impl CouplingMode {
    pub const DEFAULT_EXACT_MAX: usize = 18;

    /// Exact when affordable, otherwise the `|J|` bound.
    pub fn auto(n: usize) -> Self {
        if n <= Self::DEFAULT_EXACT_MAX {
            CouplingMode::Exact {
                max_n: Self::DEFAULT_EXACT_MAX,
            }
        } else {
            CouplingMode::Bound
        }
    }
}

/// `max_i Σ_j |J_ij|`.
pub fn j_norm_1to1(j: &DMatrix<f64>) -> f64 {
    (0..j.nrows())
        .map(|i| j.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm by power iteration on `AᵀA`, seeded with the all-ones vector.
pub fn opnorm_2to2(a: &DMatrix<f64>) -> Result<f64> {
    opnorm_2to2_with(a, 1e-10, 10_000)
}

pub fn opnorm_2to2_with(a: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> Result<f64> {
    if a.iter().all(|v| *v == 0.0) || a.is_empty() {
        return Ok(0.0);
    }
    let ata = a.transpose() * a;
    let mut v = DVector::from_element(a.ncols(), 1.0);
    v /= v.norm();
    let mut estimate = 0.0f64;
    for it in 0..max_iter {
        let mut w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            // seed orthogonal to the range; restart from a coordinate vector
            v = DVector::from_fn(a.ncols(), |r, _| if r == it % a.ncols() { 1.0 } else { 0.0 });
            continue;
        }
        w /= norm;
        let rayleigh = w.dot(&(&ata * &w));
        if (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs() {
            return Ok(rayleigh.max(0.0).sqrt());
        }
        estimate = rayleigh;
        v = w;
    }
    Err(Error::PowerIteration {
        iterations: max_iter,
        estimate: estimate.max(0.0).sqrt(),
        last_iterate: v.iter().copied().collect(),
    })
}

/// Two-point LSI ratio `Ent_q(f²) / (2 𝔼_q|∂f|²)` at `f = (1, t)`, `q(+) = p`.
pub fn two_point_ratio(p: f64, t: f64) -> f64 {
    let (a, b) = (1.0, t * t);
    let mean = p * a + (1.0 - p) * b;
    if mean <= 0.0 {
        return 0.0;
    }
    let ent = mean * (p * entropy_kernel(a / mean - 1.0) + (1.0 - p) * entropy_kernel(b / mean - 1.0));
    let dir = 2.0 * p * (1.0 - p) * (1.0 - t) * (1.0 - t);
    if dir <= 0.0 {
        return 0.0;
    }
    ent / dir
}

/// Worst two-point LSI constant for a conditional with smaller mass `p`:
/// grid scan over `t ∈ [-50, 50]` then golden-section refinement.
pub fn two_point_lsi_constant(p: f64) -> f64 {
    let p = p.min(1.0 - p);
    let ratio = |t: f64| two_point_ratio(p, t);
    let grid = 4001;
    let step = 100.0 / (grid - 1) as f64;
    let mut best_t = -50.0;
    let mut best = f64::NEG_INFINITY;
    for g in 0..grid {
        let t = -50.0 + g as f64 * step;
        if (t - 1.0).abs() < 1e-9 {
            continue;
        }
        let r = ratio(t);
        if r > best {
            best = r;
            best_t = t;
        }
    }
    // the ratio is continuous through t = 1, so the bracket may straddle it
    let (mut lo, mut hi) = ((best_t - step).max(-50.0), (best_t + step).min(50.0));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (ratio(x1), ratio(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ratio(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ratio(x1);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    best.max(f1).max(f2)
}

/// Constants of the certified LSI pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// `1 - ‖J‖₁→₁`
    pub alpha: f64,
    /// `‖h‖_∞`
    pub alpha_tilde: f64,
    pub beta_min: f64,
    /// `‖A‖₂→₂` of the coupling matrix used
    pub a_norm: f64,
    /// tensorization factor `(1 - ‖A‖₂→₂)^{-2}`
    pub c_at: f64,
    pub rho_two_point: f64,
    pub sigma2_cert: f64,
    /// `1/(12 σ² e)`, the exponential-moment constant at this `σ²`
    pub c_tail: f64,
    pub coupling_exact: bool,
}

impl CertificateReport {
    /// `(label, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("alpha", self.alpha),
            ("alpha_tilde", self.alpha_tilde),
            ("beta_min", self.beta_min),
            ("a_norm", self.a_norm),
            ("c_at", self.c_at),
            ("rho_two_point", self.rho_two_point),
            ("sigma2_cert", self.sigma2_cert),
            ("c_tail", self.c_tail),
        ]
    }
}

/// `σ²_cert = 2 C ρ(β_min) / β_min` with `C = (1 - ‖A‖₂→₂)^{-2}`.
///
/// Tensorization bounds `Ent(f²)` by `(2C/β) Σ_i 𝔼 Ent_{q_i}(f²)`, and every
/// conditional is a two-point law with smaller mass at least `β_min`, whose
/// LSI gives `Ent_{q_i}(f²) ≤ 2ρ 𝔼_{q_i}|∂_i f|²`.
pub fn lsi_certificate(model: &IsingModel, coupling: CouplingMode) -> Result<CertificateReport> {
    let a = model.coupling_matrix(coupling)?;
    let a_norm = opnorm_2to2(&a)?;
    if a_norm >= 1.0 {
        return Err(Error::DobrushinViolated { norm: a_norm });
    }
    let beta = model.beta_min(BetaMode::Exact);
    let c_at = (1.0 - a_norm).powi(-2);
    let rho = two_point_lsi_constant(beta);
    let sigma2 = 2.0 * c_at * rho / beta;
    Ok(CertificateReport {
        alpha: 1.0 - j_norm_1to1(model.j()),
        alpha_tilde: model.h().iter().fold(0.0f64, |m, v| m.max(v.abs())),
        beta_min: beta,
        a_norm,
        c_at,
        rho_two_point: rho,
        sigma2_cert: sigma2,
        c_tail: 1.0 / (12.0 * sigma2 * std::f64::consts::E),
        coupling_exact: matches!(coupling, CouplingMode::Exact { .. }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair_model(jv: f64) -> IsingModel {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, jv, jv, 0.0]);
        IsingModel::new(j, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn free_model_is_uniform() {
        let mu = IsingModel::free(3).gibbs_measure().unwrap();
        assert!(mu.probs().iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn single_site_field() {
        let h1 = 0.7f64;
        let m = IsingModel::new(DMatrix::zeros(1, 1), DVector::from_element(1, h1)).unwrap();
        let mu = m.gibbs_measure().unwrap();
        let z = h1.exp() + (-h1).exp();
        // index 1 is σ₁ = +1
        assert!((mu.probs()[1] - h1.exp() / z).abs() < 1e-15);
        assert!((mu.probs()[0] - (-h1).exp() / z).abs() < 1e-15);
        assert!((m.log_z().unwrap() - z.ln()).abs() < 1e-14);
    }

    #[test]
    fn aligned_pair_probability() {
        let mu = pair_model(0.5).gibbs_measure().unwrap();
        let e = 0.5f64.exp();
        let expected = e / (2.0 * e + 2.0 / e);
        assert!((mu.probs()[0] - expected).abs() < 1e-15);
        assert!((mu.probs()[3] - expected).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.2, 0.0]);
        assert!(IsingModel::new(asym, DVector::zeros(2)).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0]);
        assert!(IsingModel::new(diag, DVector::zeros(2)).is_err());
        assert!(IsingModel::new(DMatrix::zeros(3, 3), DVector::zeros(2)).is_err());
    }

    #[test]
    fn conditional_examples() {
        assert_eq!(IsingModel::free(3).conditional_plus(1, 0b101), 0.5);
        let h = DVector::from_element(2, 0.6f64.atanh());
        let m = IsingModel::new(DMatrix::zeros(2, 2), h).unwrap();
        assert!((m.conditional_plus(0, 0) - 0.8).abs() < 1e-15);
        // σ₂ = +1 is bit 1
        let m = pair_model(0.5);
        let w_plus = m.energy(0b11).exp();
        let w_minus = m.energy(0b10).exp();
        let oracle = w_plus / (w_plus + w_minus);
        assert!((m.conditional_plus(0, 0b10) - oracle).abs() < 1e-15);
        assert!((oracle - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn conditional_matches_weight_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=8 {
            let m = IsingModel::random(n, 0.9, 1.0, &mut rng);
            for bits in 0..(1u64 << n) {
                for i in 0..n {
                    let up = m.energy(bits | 1 << i);
                    let down = m.energy(bits & !(1 << i));
                    let oracle = 1.0 / (1.0 + (down - up).exp());
                    assert!((m.conditional_plus(i, bits) - oracle).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn strong_fields_stay_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = IsingModel::random(8, 0.5, 0.0, &mut rng);
        m.h = DVector::from_fn(8, |i, _| if i % 2 == 0 { 30.0 } else { -30.0 });
        let mu = m.gibbs_measure().unwrap();
        let total: f64 = mu.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(mu.log_probs().iter().all(|l| l.is_finite()));
    }

    #[test]
    fn norms_and_beta() {
        assert_eq!(j_norm_1to1(&DMatrix::zeros(3, 3)), 0.0);
        assert!((j_norm_1to1(pair_model(0.2).j()) - 0.2).abs() < 1e-16);
        let cw = IsingModel::curie_weiss(6, 0.5, DVector::zeros(6)).unwrap();
        assert!((j_norm_1to1(cw.j()) - 0.5 * 5.0 / 6.0).abs() < 1e-15);

        assert_eq!(IsingModel::free(4).beta_min(BetaMode::Exact), 0.5);
        let h = DVector::from_vec(vec![0.3, -0.8, 0.1]);
        let m = IsingModel::new(DMatrix::zeros(3, 3), h).unwrap();
        assert!((m.beta_min(BetaMode::Exact) - 0.5 * (1.0 - 0.8f64.tanh())).abs() < 1e-16);
    }

    #[test]
    fn beta_min_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = IsingModel::random(6, 0.8, 1.0, &mut rng);
            let mut oracle = 1.0f64;
            for bits in 0..64u64 {
                for i in 0..6 {
                    let q = m.conditional_plus(i, bits);
                    oracle = oracle.min(q).min(1.0 - q);
                }
            }
            let exact = m.beta_min(BetaMode::Exact);
            assert!((exact - oracle).abs() < 1e-14);
            assert!(m.beta_min(BetaMode::Bound) <= exact + 1e-16);
        }
    }

    /// Coupling matrix by brute force over pairs of configurations.
    fn coupling_oracle(m: &IsingModel) -> DMatrix<f64> {
        let n = m.n();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                for bits in 0..(1u64 << n) {
                    let tv = (m.conditional_plus(i, bits) - m.conditional_plus(i, bits ^ 1 << k)).abs();
                    a[(i, k)] = f64::max(a[(i, k)], tv);
                }
            }
        }
        a
    }

    #[test]
    fn coupling_matrix_exact_and_bound() {
        let free = IsingModel::free(3);
        for mode in [CouplingMode::Bound, CouplingMode::auto(3)] {
            assert!(free.coupling_matrix(mode).unwrap().iter().all(|v| *v == 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [3, 5] {
            let m = IsingModel::random(n, 0.9, 1.0, &mut rng);
            let exact = m.coupling_matrix(CouplingMode::auto(n)).unwrap();
            let oracle = coupling_oracle(&m);
            let bound = m.coupling_matrix(CouplingMode::Bound).unwrap();
            assert!((&exact - &oracle).amax() < 1e-15);
            assert_eq!(bound, m.j().map(f64::abs));
            assert!(exact.iter().zip(bound.iter()).all(|(e, b)| *e <= b + 1e-12));
        }
        let big = IsingModel::free(10);
        assert!(matches!(
            big.coupling_matrix(CouplingMode::Exact { max_n: 8 }),
            Err(Error::LimitExceeded { .. })
        ));
    }

    #[test]
    fn opnorm_matches_eigen_oracle() {
        assert_eq!(opnorm_2to2(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=8 {
            let m = IsingModel::random(n, 0.7, 0.0, &mut rng);
            let a = m.j().map(f64::abs);
            let eig = a.clone().symmetric_eigen();
            let oracle = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let got = opnorm_2to2(&a).unwrap();
            assert!((got - oracle).abs() < 1e-8 * oracle.max(1.0), "{got} vs {oracle}");
            let rows = j_norm_1to1(&a);
            let cols = j_norm_1to1(&a.transpose());
            assert!(got <= (rows * cols).sqrt() + 1e-12);
        }
    }

    #[test]
    fn opnorm_reports_non_convergence() {
        // equal-magnitude eigenvalues of opposite sign make AᵀA a multiple of
        // the identity, which converges at once; a tiny cap on a slow matrix fails
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.99, 0.0, 0.99, 1.0, 0.3, 0.0, 0.3, 0.2]);
        let err = opnorm_2to2_with(&a, 1e-16, 2).unwrap_err();
        match err {
            Error::PowerIteration { last_iterate, .. } => assert_eq!(last_iterate.len(), 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn two_point_constant_matches_closed_form() {
        // known optimum of the two-point LSI with this normalisation
        let closed = |p: f64| ((1.0 - p) / p).ln() / (2.0 * (1.0 - 2.0 * p));
        assert!((two_point_lsi_constant(0.5) - 1.0).abs() < 1e-6);
        for &p in &[0.05, 0.1, 0.27, 0.4, 0.49] {
            let got = two_point_lsi_constant(p);
            assert!((got - closed(p)).abs() < 1e-6 * closed(p), "p={p}: {got}");
        }
    }

    #[test]
    fn certificate_examples() {
        let free = IsingModel::free(4).lsi_certificate(CouplingMode::auto(4)).unwrap();
        assert_eq!(free.beta_min, 0.5);
        assert_eq!(free.a_norm, 0.0);
        assert_eq!(free.c_at, 1.0);
        assert!((free.sigma2_cert - 4.0 * two_point_lsi_constant(0.5)).abs() < 1e-15);

        let half = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(((1.0 - opnorm_2to2(&half).unwrap()).powi(-2) - 4.0).abs() < 1e-8);

        let strong = IsingModel::curie_weiss(4, 3.0, DVector::zeros(4)).unwrap();
        assert!(matches!(
            strong.lsi_certificate(CouplingMode::Bound),
            Err(Error::DobrushinViolated { .. })
        ));
    }
}
