//! Space-time trellis codes: finite-state encoders whose branch labels are
//! M-tuples of QPSK constellation indices, the four built-in 4-state codes,
//! and enumeration of error events (diverge-and-remerge path pairs) as
//! codeword difference matrices.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrellisError {
    #[error("constellation index {0} out of range (num_inputs = {1})")]
    IndexOutOfRange(usize, usize),
    #[error("state {0} out of range (num_states = {1})")]
    StateOutOfRange(usize, usize),
    #[error("malformed code table: {0}")]
    MalformedTable(String),
    #[error("error-event enumeration needs max_len >= 2, got {0}")]
    MaxLenTooShort(usize),
}

/// A trellis-coded space-time encoder. The branch table is total over
/// (state, input) pairs; labels are M digits, one QPSK index per antenna.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrellisCode {
    pub name: String,
    pub num_states: usize,
    pub num_inputs: usize,
    pub m: usize,
    branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub label: Vec<u8>,
    pub next_state: usize,
}

impl TrellisCode {
    /// Builds a code from figure-style label rows: row i = current state i,
    /// column u = input u, next state = u. Labels are M digits from
    /// `0..num_inputs`, separated by whitespace or commas.
    pub fn from_label_rows(
        name: &str,
        rows: &[&str],
        m: usize,
        num_states: usize,
    ) -> Result<Self, TrellisError> {
        if rows.len() != num_states {
            return Err(TrellisError::MalformedTable(format!(
                "expected {} rows, got {}",
                num_states,
                rows.len()
            )));
        }
        let mut num_inputs = None;
        let mut branches = Vec::new();
        for (state, row) in rows.iter().enumerate() {
            let labels: Vec<&str> = row
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            match num_inputs {
                None => num_inputs = Some(labels.len()),
                Some(n) if n != labels.len() => {
                    return Err(TrellisError::MalformedTable(format!(
                        "row {} has {} labels, expected {}",
                        state,
                        labels.len(),
                        n
                    )))
                }
                _ => {}
            }
            for (input, text) in labels.iter().enumerate() {
                if text.len() != m {
                    return Err(TrellisError::MalformedTable(format!(
                        "label '{text}' has {} digits, expected {m}",
                        text.len()
                    )));
                }
                let mut label = Vec::with_capacity(m);
                for c in text.chars() {
                    let digit = c
                        .to_digit(10)
                        .ok_or_else(|| TrellisError::MalformedTable(format!("bad digit in '{text}'")))?
                        as usize;
                    label.push(digit as u8);
                }
                branches.push(Branch {
                    label,
                    next_state: input,
                });
            }
        }
        let num_inputs = num_inputs
            .ok_or_else(|| TrellisError::MalformedTable("empty table".into()))?;
        if num_inputs == 0 {
            return Err(TrellisError::MalformedTable("rows have no labels".into()));
        }
        let code = Self {
            name: name.to_string(),
            num_states,
            num_inputs,
            m,
            branches,
        };
        for b in &code.branches {
            if b.next_state >= num_states {
                return Err(TrellisError::MalformedTable(format!(
                    "next state {} out of range",
                    b.next_state
                )));
            }
            for &d in &b.label {
                if d as usize >= num_inputs {
                    return Err(TrellisError::MalformedTable(format!(
                        "label digit {d} out of range (num_inputs = {num_inputs})"
                    )));
                }
            }
        }
        Ok(code)
    }

    /// Parses the code-catalog format: line 1 `M num_states num_inputs`, then
    /// `num_states` lines of `num_inputs` whitespace-separated M-digit
    /// labels. `#` starts a comment line.
    pub fn from_catalog_str(name: &str, text: &str) -> Result<Self, TrellisError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| TrellisError::MalformedTable("empty catalog".into()))?;
        let parts: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| TrellisError::MalformedTable(format!("bad header token '{t}'")))
            })
            .collect::<Result<_, _>>()?;
        let [m, num_states, num_inputs] = parts[..] else {
            return Err(TrellisError::MalformedTable(
                "header must be 'M num_states num_inputs'".into(),
            ));
        };
        let rows: Vec<&str> = lines.collect();
        let code = Self::from_label_rows(name, &rows, m, num_states)?;
        if code.num_inputs != num_inputs {
            return Err(TrellisError::MalformedTable(format!(
                "header says {} inputs, rows have {}",
                num_inputs, code.num_inputs
            )));
        }
        Ok(code)
    }

    /// Renders the code in the catalog format parsed by `from_catalog_str`.
    pub fn to_catalog_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.name);
        let _ = writeln!(out, "{} {} {}", self.m, self.num_states, self.num_inputs);
        for state in 0..self.num_states {
            let row: Vec<String> = (0..self.num_inputs)
                .map(|u| {
                    self.branch(state, u)
                        .label
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<String>()
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    #[inline]
    pub fn branch(&self, state: usize, input: usize) -> &Branch {
        &self.branches[state * self.num_inputs + input]
    }

    pub fn checked_branch(&self, state: usize, input: usize) -> Result<&Branch, TrellisError> {
        if state >= self.num_states {
            return Err(TrellisError::StateOutOfRange(state, self.num_states));
        }
        if input >= self.num_inputs {
            return Err(TrellisError::IndexOutOfRange(input, self.num_inputs));
        }
        Ok(self.branch(state, input))
    }

    /// Number of tail inputs (all zeros) needed to drive any state to 0.
    pub fn tail_len(&self) -> usize {
        // with input-driven next states a single zero input suffices; walk
        // the worst case to stay correct for any table shape
        let mut worst = 0;
        for s0 in 0..self.num_states {
            let mut state = s0;
            let mut steps = 0;
            while state != 0 {
                state = self.branch(state, 0).next_state;
                steps += 1;
                if steps > self.num_states {
                    // cannot terminate via zero inputs; callers treat the
                    // trellis as untailed
                    return 0;
                }
            }
            worst = worst.max(steps);
        }
        worst
    }

    pub fn bits_per_symbol(&self) -> usize {
        (usize::BITS - 1 - self.num_inputs.leading_zeros()) as usize
    }
}

/// QPSK point for index u: exp(i pi u / 2).
pub fn qpsk_map(index: usize) -> Result<Complex64, TrellisError> {
    if index >= 4 {
        return Err(TrellisError::IndexOutOfRange(index, 4));
    }
    Ok(qpsk_point(index as u8))
}

#[inline]
pub(crate) fn qpsk_point(index: u8) -> Complex64 {
    match index & 3 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Encodes a run of constellation indices into the M x L codeword matrix.
pub fn encode(
    code: &TrellisCode,
    inputs: &[usize],
    initial_state: usize,
) -> Result<DMatrix<Complex64>, TrellisError> {
    if initial_state >= code.num_states {
        return Err(TrellisError::StateOutOfRange(initial_state, code.num_states));
    }
    let mut out = DMatrix::<Complex64>::zeros(code.m, inputs.len());
    let mut state = initial_state;
    for (t, &u) in inputs.iter().enumerate() {
        let branch = code.checked_branch(state, u)?;
        for (row, &digit) in branch.label.iter().enumerate() {
            out[(row, t)] = qpsk_point(digit);
        }
        state = branch.next_state;
    }
    Ok(out)
}

/// Difference matrix of one error event: `omega = map(c) - map(c')` over the
/// event window, with the pair multiplicity accumulated during enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    pub omega: DMatrix<Complex64>,
    /// Branches in the event.
    pub event_length: usize,
    /// Branch positions where the two paths' labels differ.
    pub weight: usize,
    /// Ordered path pairs collapsing to this omega (up to global phase).
    pub multiplicity: u64,
}

/// Which reference paths to pair against during event enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventReference {
    /// Every ordered path pair (deduplicated by omega up to global phase).
    #[default]
    AllPairs,
    /// Reference path fixed to the all-zero input sequence (valid shortcut
    /// for geometrically uniform codes).
    ZeroInputs,
}

const PHASE_DEDUP_TOL: f64 = 1e-9;

/// Canonical dedup key: rotate omega by a unit scalar so its first nonzero
/// entry (column-major) is positive real, then quantize.
fn omega_key(omega: &DMatrix<Complex64>) -> Vec<(i64, i64)> {
    let mut phase = Complex64::ONE;
    'outer: for c in 0..omega.ncols() {
        for r in 0..omega.nrows() {
            let z = omega[(r, c)];
            if z.norm() > PHASE_DEDUP_TOL {
                phase = z.conj() / z.norm();
                break 'outer;
            }
        }
    }
    omega
        .iter()
        .map(|&z| {
            let w = z * phase;
            (
                (w.re / PHASE_DEDUP_TOL).round() as i64,
                (w.im / PHASE_DEDUP_TOL).round() as i64,
            )
        })
        .collect()
}

/// All error events up to `max_len` branches: ordered path pairs that start
/// in the same state, diverge on the first branch, stay apart, and remerge
/// exactly at the end.
pub fn enumerate_error_events(
    code: &TrellisCode,
    max_len: usize,
    reference: EventReference,
) -> Result<Vec<DifferenceMatrix>, TrellisError> {
    if max_len < 2 {
        return Err(TrellisError::MaxLenTooShort(max_len));
    }
    let mut dedup: HashMap<Vec<(i64, i64)>, usize> = HashMap::new();
    let mut events: Vec<DifferenceMatrix> = Vec::new();
    let mut columns: Vec<(Vec<Complex64>, bool)> = Vec::new();

    struct Ctx<'a> {
        code: &'a TrellisCode,
        max_len: usize,
        reference: EventReference,
    }

    fn record(
        columns: &[(Vec<Complex64>, bool)],
        m: usize,
        dedup: &mut HashMap<Vec<(i64, i64)>, usize>,
        events: &mut Vec<DifferenceMatrix>,
    ) {
        let len = columns.len();
        let omega = DMatrix::from_fn(m, len, |r, c| columns[c].0[r]);
        let key = omega_key(&omega);
        if let Some(&idx) = dedup.get(&key) {
            events[idx].multiplicity += 1;
        } else {
            let weight = columns.iter().filter(|(_, differs)| *differs).count();
            dedup.insert(key, events.len());
            events.push(DifferenceMatrix {
                omega,
                event_length: len,
                weight,
                multiplicity: 1,
            });
        }
    }

    fn walk(
        ctx: &Ctx,
        state_a: usize,
        state_b: usize,
        depth: usize,
        columns: &mut Vec<(Vec<Complex64>, bool)>,
        dedup: &mut HashMap<Vec<(i64, i64)>, usize>,
        events: &mut Vec<DifferenceMatrix>,
    ) {
        if depth == ctx.max_len {
            return;
        }
        let inputs_a: Vec<usize> = match ctx.reference {
            EventReference::AllPairs => (0..ctx.code.num_inputs).collect(),
            EventReference::ZeroInputs => vec![0],
        };
        for &ua in &inputs_a {
            let ba = ctx.code.branch(state_a, ua);
            for ub in 0..ctx.code.num_inputs {
                if depth == 0 && ua == ub {
                    continue;
                }
                let bb = ctx.code.branch(state_b, ub);
                let differs = ba.label != bb.label;
                let col: Vec<Complex64> = ba
                    .label
                    .iter()
                    .zip(&bb.label)
                    .map(|(&x, &y)| qpsk_point(x) - qpsk_point(y))
                    .collect();
                columns.push((col, differs));
                if ba.next_state == bb.next_state {
                    if depth > 0 || ua != ub {
                        record(columns, ctx.code.m, dedup, events);
                    }
                } else {
                    walk(
                        ctx,
                        ba.next_state,
                        bb.next_state,
                        depth + 1,
                        columns,
                        dedup,
                        events,
                    );
                }
                columns.pop();
            }
        }
    }

    let ctx = Ctx {
        code,
        max_len,
        reference,
    };
    for start in 0..code.num_states {
        walk(&ctx, start, start, 0, &mut columns, &mut dedup, &mut events);
    }
    Ok(events)
}

/// The four built-in 4-state QPSK codes: the designed M=2 and M=4 tables and
/// the classic delay-diversity style tables they are compared against.
pub fn builtin_codes() -> Vec<TrellisCode> {
    let specs: [(&str, usize, [&str; 4]); 4] = [
        (
            "qpsk4_m2_paper",
            2,
            ["00 20 02 22", "01 21 03 23", "11 31 13 33", "12 32 10 30"],
        ),
        (
            "qpsk4_m2_tarokh",
            2,
            ["00 01 02 03", "10 11 12 13", "20 21 22 23", "30 31 32 33"],
        ),
        (
            "qpsk4_m4_paper",
            4,
            [
                "0000 2030 0012 2022",
                "0101 2131 0113 2123",
                "1201 3231 1213 3223",
                "1230 3332 1310 3320",
            ],
        ),
        (
            "qpsk4_m4_tarokh",
            4,
            [
                "0000 0001 0002 0003",
                "1011 1012 1013 1010",
                "2021 2122 2223 2320",
                "3032 3133 3130 3231",
            ],
        ),
    ];
    specs
        .iter()
        .map(|(name, m, rows)| {
            TrellisCode::from_label_rows(name, rows, *m, 4).expect("built-in tables are valid")
        })
        .collect()
}

/// Looks a built-in code up by name.
pub fn builtin_code(name: &str) -> Option<TrellisCode> {
    builtin_codes().into_iter().find(|c| c.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn get(name: &str) -> TrellisCode {
        builtin_code(name).unwrap()
    }

    #[test]
    fn builtin_branch_lookups_match_tables() {
        let tarokh = get("qpsk4_m2_tarokh");
        let b = tarokh.branch(0, 3);
        assert_eq!(b.label, vec![0, 3]);
        assert_eq!(b.next_state, 3);

        let paper = get("qpsk4_m2_paper");
        let b = paper.branch(0, 1);
        assert_eq!(b.label, vec![2, 0]);
        assert_eq!(b.next_state, 1);

        let paper4 = get("qpsk4_m4_paper");
        let b = paper4.branch(1, 0);
        assert_eq!(b.label, vec![0, 1, 0, 1]);
        assert_eq!(b.next_state, 0);
    }

    #[test]
    fn qpsk_map_unit_circle() {
        assert_eq!(qpsk_map(0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(qpsk_map(2).unwrap(), Complex64::new(-1.0, 0.0));
        for u in 0..4 {
            assert_relative_eq!(qpsk_map(u).unwrap().norm(), 1.0);
        }
        assert!(qpsk_map(4).is_err());
    }

    #[test]
    fn encode_follows_branch_table() {
        let tarokh = get("qpsk4_m2_tarokh");
        let all_zero = encode(&tarokh, &[0, 0, 0], 0).unwrap();
        for z in all_zero.iter() {
            assert_eq!(*z, Complex64::ONE);
        }

        // inputs (1, 0): labels "01" then "10"
        let cw = encode(&tarokh, &[1, 0], 0).unwrap();
        assert_eq!(cw[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(cw[(1, 0)], Complex64::new(0.0, 1.0));
        assert_eq!(cw[(0, 1)], Complex64::new(0.0, 1.0));
        assert_eq!(cw[(1, 1)], Complex64::new(1.0, 0.0));

        // designed code, inputs (1, 0): labels "20" then "01"
        let paper = get("qpsk4_m2_paper");
        let cw = encode(&paper, &[1, 0], 0).unwrap();
        assert_eq!(cw[(0, 0)], Complex64::new(-1.0, 0.0));
        assert_eq!(cw[(1, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(cw[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(cw[(1, 1)], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let tarokh = get("qpsk4_m2_tarokh");
        assert!(encode(&tarokh, &[4], 0).is_err());
        assert!(encode(&tarokh, &[0], 7).is_err());
    }

    #[test]
    fn length_two_event_from_hand_trace() {
        // paths 0->0->0 vs 0->1->0 in the classic table: labels (00,00) vs
        // (01,10), omega columns ((0, 1-i), (1-i, 0))
        let tarokh = get("qpsk4_m2_tarokh");
        let events = enumerate_error_events(&tarokh, 2, EventReference::AllPairs).unwrap();
        let target = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::ZERO,
                Complex64::new(1.0, -1.0),
                Complex64::new(1.0, -1.0),
                Complex64::ZERO,
            ],
        );
        let found = events.iter().any(|e| {
            e.event_length == 2 && super::omega_key(&e.omega) == super::omega_key(&target)
        });
        assert!(found);
    }

    #[test]
    fn no_length_one_events() {
        for code in builtin_codes() {
            let events = enumerate_error_events(&code, 3, EventReference::AllPairs).unwrap();
            assert!(events.iter().all(|e| e.event_length >= 2));
        }
    }

    #[test]
    fn event_multiset_matches_brute_force() {
        // independent oracle: enumerate all input-sequence pairs of each
        // length and keep diverge-and-remerge pairs
        let tarokh = get("qpsk4_m2_tarokh");
        let max_len = 3;
        let mut oracle: HashMap<Vec<(i64, i64)>, u64> = HashMap::new();
        for start in 0..tarokh.num_states {
            for len in 2..=max_len {
                let total = tarokh.num_inputs.pow(len as u32);
                for a in 0..total {
                    for b in 0..total {
                        let seq = |mut x: usize| -> Vec<usize> {
                            let mut v = Vec::new();
                            for _ in 0..len {
                                v.push(x % tarokh.num_inputs);
                                x /= tarokh.num_inputs;
                            }
                            v
                        };
                        let (sa, sb) = (seq(a), seq(b));
                        if sa[0] == sb[0] {
                            continue;
                        }
                        // track states: must differ at 1..len-1, equal at len
                        let run = |s: &[usize]| -> Vec<usize> {
                            let mut st = start;
                            let mut path = vec![start];
                            for &u in s {
                                st = tarokh.branch(st, u).next_state;
                                path.push(st);
                            }
                            path
                        };
                        let (pa, pb) = (run(&sa), run(&sb));
                        if pa[len] != pb[len] {
                            continue;
                        }
                        if (1..len).any(|t| pa[t] == pb[t]) {
                            continue;
                        }
                        let ca = encode(&tarokh, &sa, start).unwrap();
                        let cb = encode(&tarokh, &sb, start).unwrap();
                        let omega = ca - cb;
                        *oracle.entry(super::omega_key(&omega)).or_insert(0) += 1;
                    }
                }
            }
        }
        let events = enumerate_error_events(&tarokh, max_len, EventReference::AllPairs).unwrap();
        assert_eq!(events.len(), oracle.len());
        let total_mult: u64 = events.iter().map(|e| e.multiplicity).sum();
        let total_oracle: u64 = oracle.values().sum();
        assert_eq!(total_mult, total_oracle);
        for e in &events {
            assert_eq!(oracle.get(&super::omega_key(&e.omega)), Some(&e.multiplicity));
        }
    }

    #[test]
    fn events_have_nonzero_first_column_and_respect_max_len() {
        for code in builtin_codes() {
            let events = enumerate_error_events(&code, 4, EventReference::AllPairs).unwrap();
            assert!(!events.is_empty());
            for e in &events {
                assert!(e.event_length <= 4);
                assert!(e.omega.column(0).iter().any(|z| z.norm() > 1e-12));
                assert!(e.weight >= 1);
            }
        }
    }

    #[test]
    fn catalog_round_trip() {
        for code in builtin_codes() {
            let text = code.to_catalog_string();
            let parsed = TrellisCode::from_catalog_str(&code.name, &text).unwrap();
            assert_eq!(code, parsed);
        }
    }

    #[test]
    fn loader_rejects_malformed_tables() {
        // wrong row count
        assert!(TrellisCode::from_label_rows("x", &["00 01", "10 11", "20 21"], 2, 4).is_err());
        // digit out of range for 4 inputs
        assert!(TrellisCode::from_label_rows("x", &["00 04", "10 11"], 2, 2).is_err());
        // wrong digit count per label
        assert!(TrellisCode::from_label_rows("x", &["000 01", "10 11"], 2, 2).is_err());
        // inconsistent column counts
        assert!(TrellisCode::from_label_rows("x", &["00 01 02", "10 11"], 2, 2).is_err());
    }

    #[test]
    fn enumerate_rejects_short_max_len() {
        let tarokh = get("qpsk4_m2_tarokh");
        assert!(enumerate_error_events(&tarokh, 1, EventReference::AllPairs).is_err());
    }

    #[test]
    fn tail_len_is_one_for_builtins() {
        for code in builtin_codes() {
            assert_eq!(code.tail_len(), 1);
        }
        assert_eq!(builtin_codes()[0].bits_per_symbol(), 2);
    }
}
