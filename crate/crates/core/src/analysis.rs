//! Performance analysis of space-time trellis codes over the single-antenna
//! AF relay channel: eigen-spectra of the codeword difference Gram matrix,
//! the exact MGF of the effective quadratic form, its large-|s| asymptotics,
//! Craig/Chernoff pairwise error bounds, the union bound, and the two code
//! design metrics.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use thiserror::Error;

use crate::quad::{self, gamma_int};
use crate::trellis::{DifferenceMatrix, TrellisCode, TrellisError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("quadrature did not converge (relative change {0:.3e} between orders)")]
    Nonconvergent(f64),
    #[error("eigenvalues must be strictly positive and pairwise distinct for the asymptotic form")]
    DegenerateEigenvalues,
    #[error("spectrum is rank deficient (rank {rank} < {m})")]
    RankDeficient { rank: usize, m: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trellis has no error events")]
    NoEvents,
    #[error(transparent)]
    Trellis(#[from] TrellisError),
}

/// Relative threshold below which an eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Minimum relative gap for eigenvalues to count as distinct.
pub const DISTINCT_TOL: f64 = 1e-6;
/// Reference argument for the exact-MGF fallback when the closed-form
/// coding-gain metric is undefined.
pub const FALLBACK_S_REF: f64 = -1e8;

/// Sorted eigenvalues of `omega * omega^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Nonnegative, descending.
    pub lambdas: Vec<f64>,
    /// Count of eigenvalues above `RANK_TOL * lambda_max`.
    pub rank: usize,
    /// Source antenna count (spectrum length).
    pub m: usize,
}

impl Spectrum {
    pub fn from_lambdas(mut lambdas: Vec<f64>) -> Self {
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let lambda_max = lambdas.first().copied().unwrap_or(0.0);
        let tol = RANK_TOL * lambda_max;
        let mut rank = 0;
        for l in lambdas.iter_mut() {
            if *l > tol && *l > 0.0 {
                rank += 1;
            } else {
                *l = 0.0;
            }
        }
        let m = lambdas.len();
        Self { lambdas, rank, m }
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    fn distinct_positive(&self) -> bool {
        if self.lambdas.iter().any(|&l| l <= 0.0) {
            return false;
        }
        for w in self.lambdas.windows(2) {
            if (w[0] - w[1]).abs() <= DISTINCT_TOL * w[0].abs() {
                return false;
            }
        }
        true
    }
}

/// Eigenvalues of the M x M Hermitian PSD matrix `omega * omega^H`.
pub fn spectrum(omega: &DifferenceMatrix) -> Spectrum {
    spectrum_of_matrix(&omega.omega)
}

pub fn spectrum_of_matrix(omega: &DMatrix<Complex64>) -> Spectrum {
    let gram = omega * omega.adjoint();
    spectrum_of_gram(&gram)
}

pub fn spectrum_of_gram(gram: &DMatrix<Complex64>) -> Spectrum {
    let eig = gram.clone().symmetric_eigen();
    Spectrum::from_lambdas(eig.eigenvalues.iter().copied().collect())
}

/// How an MGF value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgfMethod {
    ExactQuadrature,
    MonteCarlo,
    Asymptotic,
}

/// One MGF evaluation at a nonpositive argument.
#[derive(Debug, Clone, PartialEq)]
pub struct MgfValue {
    pub value: f64,
    pub method: MgfMethod,
    pub s: f64,
    /// Standard error of the estimate (Monte Carlo only).
    pub std_error: Option<f64>,
}

/// MGF of the source-hop quadratic form `b = sum_i lambda_i |h_i|^2`:
/// `prod_i 1 / (1 - lambda_i s)`.
pub fn mgf_b(spec: &Spectrum, s: f64) -> f64 {
    spec.lambdas.iter().map(|&l| 1.0 / (1.0 - l * s)).product()
}

fn integrand_factor(lambdas: &[f64], s_abs: f64, x: f64) -> f64 {
    let mut denom = 1.0;
    for &l in lambdas {
        denom *= 1.0 + l * s_abs * x;
    }
    1.0 / denom
}

/// Exact MGF of `||H omega||^2 = a * b` with `a ~ Gamma(N, 1)`:
/// `(1/Gamma(N)) int_0^inf x^(N-1) e^(-x) / prod_i (1 - lambda_i s x) dx`.
///
/// Evaluated with generalized Gauss-Laguerre at orders 64 and 128; when the
/// two orders disagree beyond 1e-6 relative (sharp pole near the origin at
/// large |s|), falls back to panelized adaptive Simpson on `[0, x_max]` with
/// the Gamma tail beyond `x_max` below 1e-12.
pub fn mgf_exact(spec: &Spectrum, n: usize, s: f64) -> Result<MgfValue, AnalysisError> {
    if n < 1 {
        return Err(AnalysisError::InvalidArgument("need N >= 1".into()));
    }
    if s > 0.0 {
        return Err(AnalysisError::InvalidArgument(format!(
            "MGF argument must be nonpositive, got {s}"
        )));
    }
    let done = |value: f64| MgfValue {
        value,
        method: MgfMethod::ExactQuadrature,
        s,
        std_error: None,
    };
    if s == 0.0 || spec.is_zero() {
        return Ok(done(1.0));
    }
    let s_abs = -s;
    let gamma_n = gamma_int(n);
    let fixed_order = |order: usize| -> f64 {
        let rule = quad::gauss_laguerre(order, n - 1);
        rule.iter()
            .map(|&(x, w)| w * integrand_factor(&spec.lambdas, s_abs, x))
            .sum::<f64>()
            / gamma_n
    };
    let coarse = fixed_order(64);
    let fine = fixed_order(128);
    if (coarse - fine).abs() <= 1e-6 * fine.abs() {
        return Ok(done(fine));
    }

    // adaptive fallback on geometric panels resolving the 1/(lambda |s|) scale
    let x_max = quad::gamma_tail_cutoff(n, 1e-12);
    let lambda_max = spec.lambdas.iter().cloned().fold(0.0, f64::max);
    let x_lo = (1e-3 / (lambda_max * s_abs)).min(x_max / 16.0);
    let mut breaks = vec![0.0, x_lo];
    let mut x = x_lo;
    while x * 4.0 < x_max {
        x *= 4.0;
        breaks.push(x);
    }
    breaks.push(x_max);
    let g = |x: f64| x.powi(n as i32 - 1) * (-x).exp() * integrand_factor(&spec.lambdas, s_abs, x);
    let rough: f64 = breaks
        .windows(2)
        .map(|w| quad::integrate_legendre(g, w[0], w[1], 32))
        .sum();
    let tol = 1e-10 * rough.abs() / breaks.len() as f64 + 1e-300;
    let mut total = 0.0;
    let mut worst_rel = 0.0_f64;
    for w in breaks.windows(2) {
        let r = quad::adaptive_simpson(g, w[0], w[1], tol);
        if !r.converged {
            worst_rel = worst_rel.max(1.0);
        }
        total += r.value;
    }
    if worst_rel > 0.0 || !total.is_finite() {
        return Err(AnalysisError::Nonconvergent(worst_rel));
    }
    Ok(done(total / gamma_n))
}

/// Monte Carlo estimate of the same MGF: mean of `exp(s a b)` with
/// `a ~ Gamma(N, 1)` and `b = sum_i lambda_i |h_i|^2`, `|h_i|^2 ~ Exp(1)`.
pub fn mgf_monte_carlo<R: Rng + ?Sized>(
    spec: &Spectrum,
    n: usize,
    s: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MgfValue, AnalysisError> {
    if samples < 10_000 {
        return Err(AnalysisError::InvalidArgument(format!(
            "need at least 1e4 samples, got {samples}"
        )));
    }
    if s > 0.0 {
        return Err(AnalysisError::InvalidArgument("MGF argument must be nonpositive".into()));
    }
    if spec.is_zero() {
        return Ok(MgfValue {
            value: 1.0,
            method: MgfMethod::MonteCarlo,
            s,
            std_error: Some(0.0),
        });
    }
    let gamma = Gamma::new(n as f64, 1.0)
        .map_err(|e| AnalysisError::InvalidArgument(format!("gamma distribution: {e}")))?;
    let exp1 = Exp::new(1.0).expect("rate 1 is valid");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let a: f64 = gamma.sample(rng);
        let b: f64 = spec
            .lambdas
            .iter()
            .map(|&l| l * exp1.sample(rng))
            .sum();
        let v = (s * a * b).exp();
        sum += v;
        sum_sq += v * v;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    Ok(MgfValue {
        value: mean,
        method: MgfMethod::MonteCarlo,
        s,
        std_error: Some((var / nf).sqrt()),
    })
}

/// Large-|s| closed forms of the MGF for strictly positive, pairwise
/// distinct eigenvalues. Decays as `|s|^-min(M, N)` (with an extra `log|s|`
/// at N = M), which is where the min(M, N) diversity bound comes from.
pub fn mgf_asymptotic(spec: &Spectrum, n: usize, s: f64) -> Result<MgfValue, AnalysisError> {
    if s >= 0.0 {
        return Err(AnalysisError::InvalidArgument("need s < 0".into()));
    }
    if spec.lambdas.iter().any(|&l| l <= 0.0) {
        return Err(AnalysisError::DegenerateEigenvalues);
    }
    let m = spec.m;
    if n <= m && !spec.distinct_positive() {
        return Err(AnalysisError::DegenerateEigenvalues);
    }
    let s_abs = -s;
    let prod: f64 = spec.lambdas.iter().product();
    let gamma_n = gamma_int(n);
    let value = if n > m {
        gamma_int(n - m) / (gamma_n * prod) * s_abs.powi(-(m as i32))
    } else if n == m {
        s_abs.ln() / (gamma_n * prod) * s_abs.powi(-(n as i32))
    } else {
        log_eig_sum(&spec.lambdas, n).abs() / gamma_n * s_abs.powi(-(n as i32))
    };
    Ok(MgfValue {
        value,
        method: MgfMethod::Asymptotic,
        s,
        std_error: None,
    })
}

/// `sum_j (log lambda_j / lambda_j^N) prod_{i != j} lambda_j / (lambda_j - lambda_i)`.
fn log_eig_sum(lambdas: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for (j, &lj) in lambdas.iter().enumerate() {
        let mut prod = 1.0;
        for (i, &li) in lambdas.iter().enumerate() {
            if i != j {
                prod *= lj / (lj - li);
            }
        }
        total += lj.ln() / lj.powi(n as i32) * prod;
    }
    total
}

/// Craig-formula and Chernoff pairwise error probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PepEstimate {
    pub craig: f64,
    pub chernoff: f64,
    pub es_n0: f64,
}

/// Average PEP of one error event: Craig integral of the exact MGF over the
/// Q-function angle, and its Chernoff bound at `s = -Es/(4 N0)`.
pub fn pep(spec: &Spectrum, n: usize, es_n0: f64) -> Result<PepEstimate, AnalysisError> {
    if !(es_n0 > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "Es/N0 must be positive, got {es_n0}"
        )));
    }
    let rule = quad::gauss_legendre(32);
    let half = std::f64::consts::FRAC_PI_4;
    let mut craig = 0.0;
    for &(node, w) in rule.iter() {
        let phi = half + half * node;
        let sin_sq = phi.sin().powi(2);
        let mgf = mgf_exact(spec, n, -es_n0 / (4.0 * sin_sq))?;
        craig += w * mgf.value;
    }
    craig *= half / std::f64::consts::PI;
    let chernoff = mgf_exact(spec, n, -es_n0 / 4.0)?.value;
    Ok(PepEstimate {
        craig,
        chernoff,
        es_n0,
    })
}

/// One distinct event spectrum with its path-pair multiplicity, produced by
/// the Gram-matrix dynamic program over diverged state pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEvent {
    pub spectrum: Spectrum,
    pub length: usize,
    pub multiplicity: u64,
}

type GramKey = Vec<i64>;

fn gram_key(sa: usize, sb: usize, gram: &[Complex64]) -> GramKey {
    let mut key = Vec::with_capacity(2 + 2 * gram.len());
    key.push(sa as i64);
    key.push(sb as i64);
    for z in gram {
        // entries are sums of products of QPSK differences: Gaussian integers
        key.push(z.re.round() as i64);
        key.push(z.im.round() as i64);
    }
    key
}

/// Multiset of error-event spectra up to `max_len` branches, aggregated by
/// merging path pairs with equal difference Gram matrices level by level.
/// Equivalent to (but far cheaper than) enumerating every path pair.
pub fn event_spectra(code: &TrellisCode, max_len: usize) -> Result<Vec<SpectrumEvent>, AnalysisError> {
    if max_len < 2 {
        return Err(TrellisError::MaxLenTooShort(max_len).into());
    }
    let m = code.m;
    let tri = m * (m + 1) / 2;
    // precomputed per branch pair: column outer-product upper triangle
    let outer = |la: &[u8], lb: &[u8]| -> Vec<Complex64> {
        let col: Vec<Complex64> = la
            .iter()
            .zip(lb)
            .map(|(&x, &y)| crate::trellis::qpsk_point(x) - crate::trellis::qpsk_point(y))
            .collect();
        let mut up = Vec::with_capacity(tri);
        for r in 0..m {
            for c in r..m {
                up.push(col[r] * col[c].conj());
            }
        }
        up
    };

    struct Pending {
        sa: usize,
        sb: usize,
        gram: Vec<Complex64>,
        count: u64,
    }
    let mut frontier: HashMap<GramKey, Pending> = HashMap::new();
    let mut terminal: HashMap<GramKey, (Vec<Complex64>, usize, u64)> = HashMap::new();

    let mut push_terminal = |gram: Vec<Complex64>, len: usize, count: u64| {
        let mut key = gram_key(0, 0, &gram);
        key.push(len as i64);
        terminal
            .entry(key)
            .and_modify(|e| e.2 += count)
            .or_insert((gram, len, count));
    };

    // level 1: diverging first branches from every start state
    for s0 in 0..code.num_states {
        for ua in 0..code.num_inputs {
            for ub in 0..code.num_inputs {
                if ua == ub {
                    continue;
                }
                let ba = code.branch(s0, ua);
                let bb = code.branch(s0, ub);
                let gram = outer(&ba.label, &bb.label);
                if ba.next_state == bb.next_state {
                    push_terminal(gram, 1, 1);
                } else {
                    let key = gram_key(ba.next_state, bb.next_state, &gram);
                    frontier
                        .entry(key)
                        .and_modify(|e| e.count += 1)
                        .or_insert(Pending {
                            sa: ba.next_state,
                            sb: bb.next_state,
                            gram,
                            count: 1,
                        });
                }
            }
        }
    }

    for len in 2..=max_len {
        let mut next: HashMap<GramKey, Pending> = HashMap::new();
        for pending in frontier.into_values() {
            for ua in 0..code.num_inputs {
                let ba = code.branch(pending.sa, ua);
                for ub in 0..code.num_inputs {
                    let bb = code.branch(pending.sb, ub);
                    let mut gram = pending.gram.clone();
                    for (dst, src) in gram.iter_mut().zip(outer(&ba.label, &bb.label)) {
                        *dst += src;
                    }
                    if ba.next_state == bb.next_state {
                        push_terminal(gram, len, pending.count);
                    } else if len < max_len {
                        let key = gram_key(ba.next_state, bb.next_state, &gram);
                        next.entry(key)
                            .and_modify(|e| e.count += pending.count)
                            .or_insert(Pending {
                                sa: ba.next_state,
                                sb: bb.next_state,
                                gram,
                                count: pending.count,
                            });
                    }
                }
            }
        }
        frontier = next;
    }

    let mut out: Vec<SpectrumEvent> = terminal
        .into_values()
        .map(|(up, length, multiplicity)| {
            let mut gram = DMatrix::<Complex64>::zeros(m, m);
            let mut idx = 0;
            for r in 0..m {
                for c in r..m {
                    gram[(r, c)] = up[idx];
                    gram[(c, r)] = up[idx].conj();
                    idx += 1;
                }
            }
            SpectrumEvent {
                spectrum: spectrum_of_gram(&gram),
                length,
                multiplicity,
            }
        })
        .collect();
    if out.is_empty() {
        return Err(AnalysisError::NoEvents);
    }
    // deterministic order for downstream consumers
    out.sort_by(|a, b| {
        a.length
            .cmp(&b.length)
            .then_with(|| {
                for (x, y) in a.spectrum.lambdas.iter().zip(&b.spectrum.lambdas) {
                    let c = x.total_cmp(y);
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            })
            .then(a.multiplicity.cmp(&b.multiplicity))
    });
    Ok(out)
}

fn lambda_cache_key(lambdas: &[f64]) -> Vec<i64> {
    lambdas.iter().map(|&l| (l * 1e9).round() as i64).collect()
}

/// Union bound over error events, per event start: each event weighted by
/// its path-pair multiplicity, the equiprobable reference-path probability
/// `num_inputs^-L`, and a uniform start-state average. A frame of `T`
/// trellis steps is bounded by `T` times this value.
pub fn union_bound(
    code: &TrellisCode,
    n: usize,
    es_n0: f64,
    max_len: usize,
) -> Result<f64, AnalysisError> {
    let events = event_spectra(code, max_len)?;
    let mut craig_cache: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut bound = 0.0;
    for ev in &events {
        let key = lambda_cache_key(&ev.spectrum.lambdas);
        let craig = match craig_cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = pep(&ev.spectrum, n, es_n0)?.craig;
                craig_cache.insert(key, v);
                v
            }
        };
        let prob = (code.num_inputs as f64).powi(-(ev.length as i32)) / code.num_states as f64;
        bound += ev.multiplicity as f64 * prob * craig;
    }
    Ok(bound)
}

/// Which design criterion applies for a given (M, N).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// N >= M: maximize the minimum eigenvalue product over full-rank events.
    Determinant,
    /// N < M: minimize the worst dominant-PEP coefficient.
    LogEig,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Determinant => "determinant",
            Criterion::LogEig => "log_eig",
        }
    }
}

/// Code-level design score over all events up to the enumeration length.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignScore {
    /// Minimum spectrum rank over events.
    pub min_rank: usize,
    /// Worst-case coding-gain metric: minimum eigenvalue product under the
    /// determinant criterion, maximum coefficient under log_eig.
    pub worst_metric: f64,
    pub criterion: Criterion,
}

impl DesignScore {
    /// Lexicographic quality ordering: higher min_rank wins; then larger
    /// determinant metric / smaller log_eig metric. `Greater` means `self`
    /// is the better code.
    pub fn quality_cmp(&self, other: &Self) -> std::cmp::Ordering {
        debug_assert_eq!(self.criterion, other.criterion);
        self.min_rank.cmp(&other.min_rank).then_with(|| match self.criterion {
            Criterion::Determinant => self.worst_metric.total_cmp(&other.worst_metric),
            Criterion::LogEig => other.worst_metric.total_cmp(&self.worst_metric),
        })
    }
}

/// Eigenvalue product of a full-rank spectrum (larger is better).
pub fn metric_determinant(spec: &Spectrum) -> Result<f64, AnalysisError> {
    if spec.rank < spec.m {
        return Err(AnalysisError::RankDeficient {
            rank: spec.rank,
            m: spec.m,
        });
    }
    Ok(spec.lambdas.iter().product())
}

/// Dominant-PEP coefficient for N < M with strictly positive distinct
/// eigenvalues: `(-1)^(N-1) sum_i (log lambda_i / lambda_i^N)
/// prod_{i1 != i} lambda_i / (lambda_i - lambda_i1)` (smaller is better).
pub fn metric_log_eig(spec: &Spectrum, n: usize) -> Result<f64, AnalysisError> {
    if n >= spec.m {
        return Err(AnalysisError::InvalidArgument(format!(
            "log_eig metric requires N < M, got N={n}, M={}",
            spec.m
        )));
    }
    if !spec.distinct_positive() {
        return Err(AnalysisError::DegenerateEigenvalues);
    }
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * log_eig_sum(&spec.lambdas, n))
}

/// Coding-gain coefficient of one event under the N < M criterion, with the
/// exact-MGF fallback when the closed form is undefined (repeated or zero
/// eigenvalues).
fn log_eig_coefficient(spec: &Spectrum, n: usize) -> Result<f64, AnalysisError> {
    if spec.rank > n {
        let nonzero: Vec<f64> = spec.lambdas.iter().copied().filter(|&l| l > 0.0).collect();
        let reduced = Spectrum::from_lambdas(nonzero);
        if reduced.distinct_positive() {
            return metric_log_eig(&reduced, n);
        }
    }
    // fallback: Gamma(N) |s|^N M(s) at a large reference |s| needs no
    // distinctness and blows up for rank < N, ranking such events last
    let mgf = mgf_exact(spec, n, FALLBACK_S_REF)?;
    Ok(gamma_int(n) * (-FALLBACK_S_REF).powi(n as i32) * mgf.value)
}

/// Scores a code under the criterion selected by N versus M.
pub fn score_code(code: &TrellisCode, n: usize, max_len: usize) -> Result<DesignScore, AnalysisError> {
    let events = event_spectra(code, max_len)?;
    score_events(&events, code.m, n)
}

pub(crate) fn score_events(
    events: &[SpectrumEvent],
    m: usize,
    n: usize,
) -> Result<DesignScore, AnalysisError> {
    if events.is_empty() {
        return Err(AnalysisError::NoEvents);
    }
    let min_rank = events.iter().map(|e| e.spectrum.rank).min().unwrap();
    if n >= m {
        let mut worst = f64::INFINITY;
        for ev in events {
            if ev.spectrum.rank == m {
                worst = worst.min(ev.spectrum.lambdas.iter().product());
            }
        }
        if !worst.is_finite() {
            worst = 0.0; // no full-rank event at all
        }
        Ok(DesignScore {
            min_rank,
            worst_metric: worst,
            criterion: Criterion::Determinant,
        })
    } else {
        let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
        let mut worst = f64::NEG_INFINITY;
        for ev in events {
            let key = lambda_cache_key(&ev.spectrum.lambdas);
            let coeff = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let v = log_eig_coefficient(&ev.spectrum, n)?;
                    cache.insert(key, v);
                    v
                }
            };
            worst = worst.max(coeff);
        }
        Ok(DesignScore {
            min_rank,
            worst_metric: worst,
            criterion: Criterion::LogEig,
        })
    }
}

/// Per-event coefficients feeding the score, for reports and tie-breaking.
pub(crate) fn event_metrics(
    events: &[SpectrumEvent],
    m: usize,
    n: usize,
) -> Result<Vec<f64>, AnalysisError> {
    events
        .iter()
        .map(|ev| {
            if n >= m {
                Ok(if ev.spectrum.rank == m {
                    ev.spectrum.lambdas.iter().product()
                } else {
                    0.0
                })
            } else {
                log_eig_coefficient(&ev.spectrum, n)
            }
        })
        .collect()
}
