//! Search over trellis label tables for codes optimizing the design
//! criteria, with deterministic seeded candidate generation and parallel
//! scoring.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Criterion, DesignScore};
use crate::trellis::{TrellisCode, TrellisError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("search space is empty after constraints")]
    EmptySpace,
    #[error("codes have mismatched antenna counts ({0} vs {1})")]
    MismatchedAntennas(usize, usize),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Trellis(#[from] TrellisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Enumerate every table; only allowed for small spaces.
    Exhaustive,
    /// Sample `budget` random tables.
    Random,
}

/// Space of candidate label tables with input-driven next states.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub m: usize,
    pub num_states: usize,
    pub num_inputs: usize,
    pub mode: SearchMode,
    /// Candidate count for random mode.
    pub budget: usize,
    /// Force the state-0 input-0 label to all zeros.
    pub first_row_identity: bool,
    /// Reject tables with duplicate rows.
    pub distinct_rows: bool,
}

/// Exhaustive mode is capped at this many free label digits.
const EXHAUSTIVE_DIGIT_CAP: usize = 16;

impl SearchSpace {
    fn free_digits(&self) -> usize {
        let total = self.num_states * self.num_inputs * self.m;
        if self.first_row_identity {
            total - self.m
        } else {
            total
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.m < 1 || self.num_states < 1 || self.num_inputs < 2 {
            return Err(SearchError::InvalidSpace(
                "need M >= 1, num_states >= 1, num_inputs >= 2".into(),
            ));
        }
        if self.num_inputs > 4 {
            return Err(SearchError::InvalidSpace(
                "only QPSK label digits (num_inputs <= 4) are supported".into(),
            ));
        }
        match self.mode {
            SearchMode::Exhaustive => {
                if self.free_digits() > EXHAUSTIVE_DIGIT_CAP {
                    return Err(SearchError::InvalidSpace(format!(
                        "exhaustive mode allows at most {EXHAUSTIVE_DIGIT_CAP} free digits, space has {}",
                        self.free_digits()
                    )));
                }
            }
            SearchMode::Random => {
                if self.budget == 0 {
                    return Err(SearchError::InvalidSpace("random mode needs budget > 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// One scored candidate in a ranking.
#[derive(Debug, Clone)]
pub struct RankedCode {
    pub code: TrellisCode,
    pub score: DesignScore,
    pub rank_position: usize,
    /// Tie-break key: sum of the 10 worst per-event metrics.
    pub worst10_sum: f64,
}

fn table_from_digits(digits: &[u8], space: &SearchSpace) -> Option<TrellisCode> {
    let rows: Vec<String> = (0..space.num_states)
        .map(|s| {
            (0..space.num_inputs)
                .map(|u| {
                    let base = (s * space.num_inputs + u) * space.m;
                    digits[base..base + space.m]
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    if space.distinct_rows {
        let mut seen = rows.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != rows.len() {
            return None;
        }
    }
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    let name = format!("cand-{:016x}", table_hash(digits));
    TrellisCode::from_label_rows(&name, &refs, space.m, space.num_states).ok()
}

fn table_hash(digits: &[u8]) -> u64 {
    // FNV-1a, stable across runs and platforms
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &d in digits {
        h ^= d as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn generate_candidates(space: &SearchSpace, seed: u64) -> Vec<(Vec<u8>, TrellisCode)> {
    let cells = space.num_states * space.num_inputs * space.m;
    let mut out = Vec::new();
    match space.mode {
        SearchMode::Exhaustive => {
            let free = space.free_digits();
            let total = (space.num_inputs as u64).pow(free as u32);
            for idx in 0..total {
                let mut digits = vec![0u8; cells];
                let mut rem = idx;
                let start = if space.first_row_identity { space.m } else { 0 };
                for d in digits.iter_mut().skip(start) {
                    *d = (rem % space.num_inputs as u64) as u8;
                    rem /= space.num_inputs as u64;
                }
                if let Some(code) = table_from_digits(&digits, space) {
                    out.push((digits, code));
                }
            }
        }
        SearchMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..space.budget {
                let mut digits = vec![0u8; cells];
                for d in digits.iter_mut() {
                    *d = rng.random_range(0..space.num_inputs) as u8;
                }
                if space.first_row_identity {
                    for d in digits.iter_mut().take(space.m) {
                        *d = 0;
                    }
                }
                if let Some(code) = table_from_digits(&digits, space) {
                    out.push((digits, code));
                }
            }
        }
    }
    out
}

struct Scored {
    index: usize,
    digits: Vec<u8>,
    code: TrellisCode,
    score: DesignScore,
    worst10_sum: f64,
    spectrum_key: Vec<(i64, usize, u64)>,
}

fn score_candidate(
    index: usize,
    digits: Vec<u8>,
    code: TrellisCode,
    n: usize,
    max_len: usize,
) -> Result<Scored, SearchError> {
    let events = analysis::event_spectra(&code, max_len)?;
    let score = analysis::score_events(&events, code.m, n)?;
    let mut metrics = analysis::event_metrics(&events, code.m, n)?;
    match score.criterion {
        // worst first
        Criterion::Determinant => metrics.sort_by(|a, b| a.total_cmp(b)),
        Criterion::LogEig => metrics.sort_by(|a, b| b.total_cmp(a)),
    }
    let worst10_sum = metrics.iter().take(10).sum();
    let mut spectrum_key: Vec<(i64, usize, u64)> = events
        .iter()
        .flat_map(|e| {
            e.spectrum
                .lambdas
                .iter()
                .map(move |&l| ((l * 1e9).round() as i64, e.length, e.multiplicity))
        })
        .collect();
    spectrum_key.sort();
    Ok(Scored {
        index,
        digits,
        code,
        score,
        worst10_sum,
        spectrum_key,
    })
}

fn ranking_cmp(a: &Scored, b: &Scored) -> Ordering {
    // best first: quality descending, then tie-breaks
    b.score
        .quality_cmp(&a.score)
        .then_with(|| match a.score.criterion {
            Criterion::Determinant => b.worst10_sum.total_cmp(&a.worst10_sum),
            Criterion::LogEig => a.worst10_sum.total_cmp(&b.worst10_sum),
        })
        .then_with(|| a.digits.cmp(&b.digits))
}

/// Generates, scores, deduplicates and ranks candidate tables. Deterministic
/// given the seed regardless of thread count.
pub fn search_codes(
    space: &SearchSpace,
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<RankedCode>, SearchError> {
    space.validate()?;
    let candidates = generate_candidates(space, seed);
    if candidates.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let mut scored: Vec<Scored> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(i, (digits, code))| score_candidate(i, digits, code, n, max_len))
        .collect::<Result<_, _>>()?;
    // stable reduction: order by candidate index before dedup so the kept
    // representative does not depend on the parallel schedule
    scored.sort_by_key(|s| s.index);
    let mut seen = std::collections::HashSet::new();
    scored.retain(|s| seen.insert(s.spectrum_key.clone()));
    scored.sort_by(ranking_cmp);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedCode {
            code: s.code,
            score: s.score,
            rank_position: i + 1,
            worst10_sum: s.worst10_sum,
        })
        .collect())
}

/// Ranks an explicit list of codes with the same comparator as
/// `search_codes`.
pub fn rank_codes(codes: &[TrellisCode], n: usize, max_len: usize) -> Result<Vec<RankedCode>, SearchError> {
    if codes.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let m = codes[0].m;
    for c in codes {
        if c.m != m {
            return Err(SearchError::MismatchedAntennas(m, c.m));
        }
    }
    let mut scored: Vec<Scored> = codes
        .iter()
        .enumerate()
        .map(|(i, code)| score_candidate(i, vec![i as u8], code.clone(), n, max_len))
        .collect::<Result<_, _>>()?;
    scored.sort_by(ranking_cmp);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedCode {
            code: s.code,
            score: s.score,
            rank_position: i + 1,
            worst10_sum: s.worst10_sum,
        })
        .collect())
}

/// Per-event worst-case table row for comparison reports.
#[derive(Debug, Clone)]
pub struct EventReportRow {
    pub length: usize,
    pub lambdas: Vec<f64>,
    pub rank: usize,
    pub multiplicity: u64,
    pub metric: f64,
}

/// Outcome of a head-to-head comparison.
#[derive(Debug, Clone)]
pub struct CompareReport {
    /// `Greater` means the first code is better.
    pub ordering: Ordering,
    pub score_a: DesignScore,
    pub score_b: DesignScore,
    pub worst_events_a: Vec<EventReportRow>,
    pub worst_events_b: Vec<EventReportRow>,
}

fn worst_rows(code: &TrellisCode, n: usize, max_len: usize, top: usize) -> Result<Vec<EventReportRow>, SearchError> {
    let events = analysis::event_spectra(code, max_len)?;
    let metrics = analysis::event_metrics(&events, code.m, n)?;
    let mut rows: Vec<EventReportRow> = events
        .iter()
        .zip(&metrics)
        .map(|(e, &metric)| EventReportRow {
            length: e.length,
            lambdas: e.spectrum.lambdas.clone(),
            rank: e.spectrum.rank,
            multiplicity: e.multiplicity,
            metric,
        })
        .collect();
    if n >= code.m {
        rows.sort_by(|a, b| a.rank.cmp(&b.rank).then(a.metric.total_cmp(&b.metric)));
    } else {
        rows.sort_by(|a, b| b.metric.total_cmp(&a.metric));
    }
    rows.truncate(top);
    Ok(rows)
}

/// Compares two codes of the same antenna count under the score ordering.
pub fn compare_codes(
    a: &TrellisCode,
    b: &TrellisCode,
    n: usize,
    max_len: usize,
) -> Result<CompareReport, SearchError> {
    if a.m != b.m {
        return Err(SearchError::MismatchedAntennas(a.m, b.m));
    }
    let ranked = rank_codes(&[a.clone(), b.clone()], n, max_len)?;
    let score_a = ranked.iter().find(|r| r.code.name == a.name).unwrap().score.clone();
    let score_b = ranked.iter().find(|r| r.code.name == b.name).unwrap().score.clone();
    let mut ordering = score_a.quality_cmp(&score_b);
    if ordering == Ordering::Equal {
        // mirror the full ranking tie-break so compare agrees with search
        let a10 = ranked.iter().find(|r| r.code.name == a.name).unwrap().worst10_sum;
        let b10 = ranked.iter().find(|r| r.code.name == b.name).unwrap().worst10_sum;
        ordering = match score_a.criterion {
            Criterion::Determinant => a10.total_cmp(&b10),
            Criterion::LogEig => b10.total_cmp(&a10),
        };
        if a.name == b.name {
            ordering = Ordering::Equal;
        }
    }
    Ok(CompareReport {
        ordering,
        score_a,
        score_b,
        worst_events_a: worst_rows(a, n, max_len, 10)?,
        worst_events_b: worst_rows(b, n, max_len, 10)?,
    })
}
