//! Monte Carlo BER/FER simulation: quasi-static fading per frame, exact
//! correlated relay noise, maximum-likelihood Viterbi decoding with genie
//! channel knowledge, and diversity-slope estimation from the BER curve.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{self, ChannelSample, ModelError, RelayLinkConfig};
use crate::trellis::{encode, TrellisCode, TrellisError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    InvalidConfig(String),
    #[error("slope fit needs at least 3 points with nonzero BER, got {0}")]
    InsufficientPoints(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trellis(#[from] TrellisError),
}

/// Decoder metric: exact whitening with the per-frame noise covariance, or
/// the scalar white-noise approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderNoiseModel {
    ExactWhitened,
    PaperWhite,
}

impl DecoderNoiseModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecoderNoiseModel::ExactWhitened => "exact_whitened",
            DecoderNoiseModel::PaperWhite => "paper_white",
        }
    }
}

/// Full simulation setup for one sweep.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub code: TrellisCode,
    pub n: usize,
    pub alpha: f64,
    /// Data symbols per frame (tail symbols are appended on top).
    pub frame_len: usize,
    pub snr_grid_db: Vec<f64>,
    pub max_frames: u64,
    /// Early stop once this many frame errors are seen.
    pub target_frame_errors: u64,
    pub decoder_noise_model: DecoderNoiseModel,
    pub seed: u64,
    /// Disable all noise (BER must be exactly zero).
    pub noiseless: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frame_len < 10 {
            return Err(SimError::InvalidConfig(format!(
                "frame_len must be >= 10, got {}",
                self.frame_len
            )));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidConfig(
                "snr_grid_db must be strictly increasing".into(),
            ));
        }
        if self.snr_grid_db.is_empty() {
            return Err(SimError::InvalidConfig("snr_grid_db is empty".into()));
        }
        if self.target_frame_errors < 50 {
            return Err(SimError::InvalidConfig(format!(
                "target_frame_errors must be >= 50 for CI validity, got {}",
                self.target_frame_errors
            )));
        }
        if self.max_frames == 0 {
            return Err(SimError::InvalidConfig("max_frames must be positive".into()));
        }
        Ok(())
    }

    /// Link config at a given SNR: unit-energy QPSK per antenna gives
    /// Es = M per channel use; equal hop variances sigma1^2 = sigma3^2 are
    /// scaled so the effective noise budget N0 = alpha^2 sigma1^2 + sigma3^2
    /// matches the requested Es/N0.
    pub fn link_at(&self, snr_db: f64) -> Result<RelayLinkConfig, SimError> {
        let es = self.code.m as f64;
        let n0 = es / 10f64.powf(snr_db / 10.0);
        let v = n0 / (1.0 + self.alpha * self.alpha);
        Ok(RelayLinkConfig::new(
            self.code.m,
            self.n,
            v,
            v,
            self.alpha,
            snr_db,
        )?)
    }
}

/// Measured error rates at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    pub ci95_ber: f64,
    pub ci95_fer: f64,
    pub bits_per_frame: u64,
}

/// Least-squares diversity estimate from the high-SNR BER points.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Diversity order estimate d in BER ~ SNR^-d.
    pub slope: f64,
    pub fit_range_db: (f64, f64),
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// A full sweep: one point per grid SNR plus the slope fit (absent when
/// fewer than 3 points have nonzero BER).
#[derive(Debug, Clone)]
pub struct SimResult {
    pub points: Vec<BerPoint>,
    pub slope: Option<SlopeFit>,
}

/// Branch metrics for ML sequence detection. `weight` is the inverse noise
/// covariance (exact mode) or `I / sigma_white^2` (approximate mode); adding
/// any constant to every branch metric leaves the decoded path unchanged.
fn metric_weight(
    ch: &ChannelSample,
    link: &RelayLinkConfig,
    model_sel: DecoderNoiseModel,
) -> DMatrix<Complex64> {
    match model_sel {
        DecoderNoiseModel::ExactWhitened => {
            let eff = model::effective_channel(ch, link).expect("dimensions checked by caller");
            eff.noise_cov
                .try_inverse()
                .expect("noise covariance is positive definite")
        }
        DecoderNoiseModel::PaperWhite => {
            let sigma = model::white_noise_approx(link);
            DMatrix::from_diagonal_element(link.n, link.n, Complex64::from(1.0 / sigma))
        }
    }
}

/// Exact ML sequence detection over the trellis. The encoder starts in
/// state 0 and is driven back to state 0 by the tail; the traceback starts
/// from state 0 accordingly. Returns one input index per received column.
pub fn viterbi_decode(
    code: &TrellisCode,
    received: &DMatrix<Complex64>,
    ch: &ChannelSample,
    link: &RelayLinkConfig,
    model_sel: DecoderNoiseModel,
) -> Result<Vec<usize>, SimError> {
    if received.nrows() != link.n || ch.h.len() != code.m {
        return Err(SimError::InvalidConfig("decoder dimension mismatch".into()));
    }
    let len = received.ncols();
    let weight = metric_weight(ch, link, model_sel);
    let h_eff = (&ch.g * &ch.h).map(|z| z * link.alpha);

    // one predicted receive vector per (state, input) branch
    let num_branches = code.num_states * code.num_inputs;
    let mut predicted: Vec<DVector<Complex64>> = Vec::with_capacity(num_branches);
    for state in 0..code.num_states {
        for input in 0..code.num_inputs {
            let label = &code.branch(state, input).label;
            let mut s = DVector::<Complex64>::zeros(code.m);
            for (i, &d) in label.iter().enumerate() {
                s[i] = crate::trellis::qpsk_point(d);
            }
            predicted.push(&h_eff * s);
        }
    }

    const NEG_INF: f64 = f64::NEG_INFINITY;
    let mut path_metric = vec![NEG_INF; code.num_states];
    path_metric[0] = 0.0;
    let mut backptr: Vec<Vec<(usize, usize)>> = Vec::with_capacity(len);
    let mut residual = DVector::<Complex64>::zeros(link.n);
    for t in 0..len {
        let y = received.column(t);
        let mut next_metric = vec![NEG_INF; code.num_states];
        let mut next_ptr = vec![(0usize, 0usize); code.num_states];
        for state in 0..code.num_states {
            if path_metric[state] == NEG_INF {
                continue;
            }
            for input in 0..code.num_inputs {
                let branch = code.branch(state, input);
                let z = &predicted[state * code.num_inputs + input];
                for i in 0..link.n {
                    residual[i] = y[i] - z[i];
                }
                // -(y - z)^H W (y - z)
                let mut quad = 0.0;
                for r in 0..link.n {
                    let mut acc = Complex64::ZERO;
                    for c in 0..link.n {
                        acc += weight[(r, c)] * residual[c];
                    }
                    quad += (residual[r].conj() * acc).re;
                }
                let candidate = path_metric[state] - quad;
                if candidate > next_metric[branch.next_state] {
                    next_metric[branch.next_state] = candidate;
                    next_ptr[branch.next_state] = (state, input);
                }
            }
        }
        path_metric = next_metric;
        backptr.push(next_ptr);
    }

    // terminated trellis: best path ends in state 0; fall back to the best
    // surviving state if the caller did not append a tail
    let mut state = if path_metric[0] > NEG_INF {
        0
    } else {
        (0..code.num_states)
            .max_by(|&a, &b| path_metric[a].total_cmp(&path_metric[b]))
            .unwrap()
    };
    let mut inputs = vec![0usize; len];
    for t in (0..len).rev() {
        let (prev, input) = backptr[t][state];
        inputs[t] = input;
        state = prev;
    }
    Ok(inputs)
}

struct FrameOutcome {
    bit_errors: u64,
    frame_error: bool,
}

fn run_frame(cfg: &SimConfig, link: &RelayLinkConfig, frame_idx: u64) -> Result<FrameOutcome, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(frame_idx);
    let code = &cfg.code;
    let tail = code.tail_len();
    let mut inputs: Vec<usize> = (0..cfg.frame_len)
        .map(|_| rng.random_range(0..code.num_inputs))
        .collect();
    inputs.extend(std::iter::repeat_n(0, tail));
    let codeword = encode(code, &inputs, 0)?;
    let ch = model::sample_channel(link, &mut rng);
    let received = if cfg.noiseless {
        let h_eff = (&ch.g * &ch.h).map(|z| z * link.alpha);
        &h_eff * &codeword
    } else {
        model::transmit_frame(&codeword, &ch, link, &mut rng)?
    };
    let decoded = viterbi_decode(code, &received, &ch, link, cfg.decoder_noise_model)?;
    let bits = code.bits_per_symbol();
    let mut bit_errors = 0u64;
    for t in 0..cfg.frame_len {
        bit_errors += ((inputs[t] ^ decoded[t]) & ((1 << bits) - 1)).count_ones() as u64;
    }
    Ok(FrameOutcome {
        bit_errors,
        frame_error: bit_errors > 0,
    })
}

const BATCH: u64 = 512;

/// Simulates one SNR point. Frames are processed in fixed-size batches,
/// parallel within a batch, so early stopping is schedule-independent.
pub fn run_point(cfg: &SimConfig, snr_db: f64) -> Result<BerPoint, SimError> {
    cfg.validate()?;
    let link = cfg.link_at(snr_db)?;
    let bits_per_frame = (cfg.frame_len * cfg.code.bits_per_symbol()) as u64;
    let mut frames = 0u64;
    let mut bit_errors = 0u64;
    let mut frame_errors = 0u64;
    while frames < cfg.max_frames {
        let batch = BATCH.min(cfg.max_frames - frames);
        let outcomes: Vec<FrameOutcome> = (frames..frames + batch)
            .into_par_iter()
            .map(|idx| run_frame(cfg, &link, idx))
            .collect::<Result<_, _>>()?;
        for o in outcomes {
            bit_errors += o.bit_errors;
            if o.frame_error {
                frame_errors += 1;
            }
        }
        frames += batch;
        if frame_errors >= cfg.target_frame_errors {
            break;
        }
    }
    let total_bits = frames * bits_per_frame;
    let ber = bit_errors as f64 / total_bits as f64;
    let fer = frame_errors as f64 / frames as f64;
    let ci95_ber = if bit_errors > 0 {
        1.96 * (ber * (1.0 - ber) / total_bits as f64).sqrt()
    } else {
        // one-sided 95% upper bound for zero observed errors
        3.0 / total_bits as f64
    };
    let ci95_fer = if frame_errors > 0 {
        1.96 * (fer * (1.0 - fer) / frames as f64).sqrt()
    } else {
        3.0 / frames as f64
    };
    Ok(BerPoint {
        snr_db,
        frames,
        bit_errors,
        frame_errors,
        ber,
        fer,
        ci95_ber,
        ci95_fer,
        bits_per_frame,
    })
}

/// Least-squares slope of -log10(ber) against snr_db / 10.
pub fn fit_diversity(points: &[BerPoint]) -> Result<SlopeFit, SimError> {
    let usable: Vec<&BerPoint> = points.iter().filter(|p| p.ber > 0.0).collect();
    if usable.len() < 3 {
        return Err(SimError::InsufficientPoints(usable.len()));
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.snr_db / 10.0).collect();
    let ys: Vec<f64> = usable.iter().map(|p| -p.ber.log10()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lo = usable.iter().map(|p| p.snr_db).fold(f64::INFINITY, f64::min);
    let hi = usable.iter().map(|p| p.snr_db).fold(f64::NEG_INFINITY, f64::max);
    Ok(SlopeFit {
        slope,
        fit_range_db: (lo, hi),
        residual,
    })
}

/// Number of highest-SNR points used for the diversity fit.
const FIT_POINTS: usize = 4;

/// Runs every grid point and fits the diversity slope on the top points
/// with nonzero BER.
pub fn sweep(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let span = cfg.snr_grid_db.last().unwrap() - cfg.snr_grid_db.first().unwrap();
    if cfg.snr_grid_db.len() < 4 || span < 12.0 {
        return Err(SimError::InvalidConfig(format!(
            "sweep needs at least 4 grid points spanning at least 12 dB, got {} points over {span:.1} dB",
            cfg.snr_grid_db.len()
        )));
    }
    let mut points = Vec::with_capacity(cfg.snr_grid_db.len());
    for &snr in &cfg.snr_grid_db {
        points.push(run_point(cfg, snr)?);
    }
    let nonzero: Vec<BerPoint> = points.iter().filter(|p| p.ber > 0.0).cloned().collect();
    let top: Vec<BerPoint> = nonzero
        .iter()
        .rev()
        .take(FIT_POINTS)
        .rev()
        .cloned()
        .collect();
    let slope = fit_diversity(&top).ok();
    Ok(SimResult { points, slope })
}

/// Sweep CSV: header row, one row per point, one trailing slope comment.
pub fn sweep_csv(result: &SimResult) -> String {
    let mut out = String::from("snr_db,frames,bit_errors,ber,ci95_ber,frame_errors,fer\n");
    for p in &result.points {
        out.push_str(&format!(
            "{:.2},{},{},{:.6e},{:.6e},{},{:.6e}\n",
            p.snr_db, p.frames, p.bit_errors, p.ber, p.ci95_ber, p.frame_errors, p.fer
        ));
    }
    match &result.slope {
        Some(fit) => out.push_str(&format!(
            "# slope={:.4} range={:.0}-{:.0}dB residual={:.4}\n",
            fit.slope, fit.fit_range_db.0, fit.fit_range_db.1, fit.residual
        )),
        None => out.push_str("# slope=unavailable (fewer than 3 nonzero-BER points)\n"),
    }
    out
}
