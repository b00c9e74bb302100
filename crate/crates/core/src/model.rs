//! Two-hop amplify-and-forward relay channel: an M-antenna source transmits
//! to a single-antenna relay which scales and forwards to an N-antenna
//! destination. Both hops are flat Rayleigh fading.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid relay link config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Link parameters for the source -> relay -> destination chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayLinkConfig {
    /// Source antennas.
    pub m: usize,
    /// Destination antennas.
    pub n: usize,
    /// Relay noise variance.
    pub sigma1_sq: f64,
    /// Destination noise variance.
    pub sigma3_sq: f64,
    /// Relay amplification gain.
    pub alpha: f64,
    /// Nominal Es/N0 in dB for bookkeeping; the variances above are what the
    /// sampler actually uses.
    pub es_n0_db: f64,
}

impl RelayLinkConfig {
    pub fn new(
        m: usize,
        n: usize,
        sigma1_sq: f64,
        sigma3_sq: f64,
        alpha: f64,
        es_n0_db: f64,
    ) -> Result<Self, ModelError> {
        if m < 1 || n < 1 {
            return Err(ModelError::InvalidConfig(format!(
                "need M >= 1 and N >= 1, got M={m}, N={n}"
            )));
        }
        if !(sigma1_sq > 0.0) || !(sigma3_sq > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "noise variances must be positive, got sigma1_sq={sigma1_sq}, sigma3_sq={sigma3_sq}"
            )));
        }
        if !(alpha > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "relay gain must be positive, got alpha={alpha}"
            )));
        }
        Ok(Self {
            m,
            n,
            sigma1_sq,
            sigma3_sq,
            alpha,
            es_n0_db,
        })
    }
}

/// One fading realization: `h` source->relay (1 x M), `g` relay->destination
/// (N x 1). Entries are i.i.d. circularly symmetric complex Gaussian with
/// unit variance per complex entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: RowDVector<Complex64>,
    pub g: DVector<Complex64>,
}

/// The cascade seen by the destination: `H = alpha * g * h` and the exact
/// covariance of the effective noise `alpha * g * n1 + n2` conditioned on g.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub h_eff: DMatrix<Complex64>,
    pub noise_cov: DMatrix<Complex64>,
}

/// One draw of a standard circularly symmetric complex Gaussian (unit
/// variance per complex entry).
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    standard_complex(rng) * variance.sqrt()
}

/// Draws fresh i.i.d. Rayleigh fading for both hops.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &RelayLinkConfig, rng: &mut R) -> ChannelSample {
    let h = RowDVector::from_fn(cfg.m, |_, _| standard_complex(rng));
    let g = DVector::from_fn(cfg.n, |_, _| standard_complex(rng));
    ChannelSample { h, g }
}

/// Effective single-hop channel `H = alpha * g * h` with the exact noise
/// covariance `alpha^2 sigma1^2 g g^H + sigma3^2 I`.
pub fn effective_channel(ch: &ChannelSample, cfg: &RelayLinkConfig) -> Result<EffectiveChannel, ModelError> {
    if ch.h.len() != cfg.m || ch.g.len() != cfg.n {
        return Err(ModelError::DimensionMismatch(format!(
            "channel sample is ({} x {}), config wants ({} x {})",
            ch.g.len(),
            ch.h.len(),
            cfg.n,
            cfg.m
        )));
    }
    let h_eff = (&ch.g * &ch.h).map(|z| z * cfg.alpha);
    let scale = Complex64::from(cfg.alpha * cfg.alpha * cfg.sigma1_sq);
    let mut noise_cov = &ch.g * ch.g.adjoint() * scale;
    for i in 0..cfg.n {
        noise_cov[(i, i)] += Complex64::from(cfg.sigma3_sq);
    }
    Ok(EffectiveChannel { h_eff, noise_cov })
}

/// Scalar variance of the white-noise approximation of the effective noise,
/// `sigma1^2 * sigma_g^2 + sigma3^2` with per-antenna fading variance
/// `sigma_g^2 = 1`. This feeds the approximate decoder metric only; the
/// physical channel always uses the exact correlated noise.
pub fn white_noise_approx(cfg: &RelayLinkConfig) -> f64 {
    cfg.alpha * cfg.alpha * cfg.sigma1_sq + cfg.sigma3_sq
}

/// Passes an M x L codeword through both hops: per column t,
/// `y_t = alpha * g * (h s_t + n1_t) + n2_t` with fresh noise each use.
pub fn transmit_frame<R: Rng + ?Sized>(
    codeword: &DMatrix<Complex64>,
    ch: &ChannelSample,
    cfg: &RelayLinkConfig,
    rng: &mut R,
) -> Result<DMatrix<Complex64>, ModelError> {
    if codeword.nrows() != cfg.m {
        return Err(ModelError::DimensionMismatch(format!(
            "codeword has {} rows, config has M={}",
            codeword.nrows(),
            cfg.m
        )));
    }
    if ch.h.len() != cfg.m || ch.g.len() != cfg.n {
        return Err(ModelError::DimensionMismatch(
            "channel sample does not match config".into(),
        ));
    }
    let len = codeword.ncols();
    let mut received = DMatrix::<Complex64>::zeros(cfg.n, len);
    for t in 0..len {
        let s = codeword.column(t);
        let relay_rx = ch.h.dot(&s.transpose()) + complex_noise(rng, cfg.sigma1_sq);
        let amplified = relay_rx * cfg.alpha;
        for i in 0..cfg.n {
            received[(i, t)] = ch.g[i] * amplified + complex_noise(rng, cfg.sigma3_sq);
        }
    }
    Ok(received)
}
