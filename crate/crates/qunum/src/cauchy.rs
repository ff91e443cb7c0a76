//! Sequences of numeral states, the windowed Cauchy condition, sequence
//! equivalence, and canonical digit-stream representatives of reals.
//!
//! The mathematical conditions quantify over infinitely many indices; this
//! module truncates them to a window `(ℓ_max, p_max)` and returns
//! three-valued [`CauchyVerdict`]s so a finite test never overclaims:
//!
//! - `PASS` — for every tested `ℓ` some `p` inside the window bounds all
//!   later pairwise deviations by `k^{-ℓ}`. A windowed statement only.
//! - `FAIL` — a declared modulus is provably violated, or violations recur
//!   all the way through the window (they appear at many distinct depths
//!   and still occur in the final tail).
//! - `INCONCLUSIVE` — the window neither produced a witness nor met the
//!   recurrence bar; a finite window cannot refute Cauchyness in general.
//!
//! Deviations are computed with the digit-level arithmetic of
//! [`crate::numeral`] and compared against the threshold state for
//! `k^{-ℓ}` — the same route the underlying theory uses, not a shortcut
//! through floating point.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeral::{
    expand_rational, ComplexNumeral, Converted, NumeralError, NumeralState, PeriodicExpansion,
    RationalValue, Sign,
};
use crate::qstate::{Complex64, StateError, StringSuperposition};

#[derive(Debug, Error)]
pub enum CauchyError {
    #[error("BaseMismatch: sequence bases {0} and {1} differ")]
    BaseMismatch(u32, u32),
    #[error("NotBasisSequence: term {0} holds {1} basis labels, expected exactly 1")]
    NotBasisSequence(u64, usize),
    #[error("NotCauchy: {0}")]
    NotCauchy(String),
    #[error(transparent)]
    Numeral(#[from] NumeralError),
    #[error(transparent)]
    State(#[from] StateError),
}

impl CauchyError {
    pub fn name(&self) -> &'static str {
        match self {
            CauchyError::BaseMismatch(..) => "BaseMismatch",
            CauchyError::NotBasisSequence(..) => "NotBasisSequence",
            CauchyError::NotCauchy(_) => "NotCauchy",
            CauchyError::Numeral(e) => e.name(),
            CauchyError::State(e) => e.name(),
        }
    }
}

/// Truncation window for the Cauchy quantifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauchyWindow {
    /// Largest precision exponent `ℓ` tested.
    pub ell_max: u32,
    /// Largest sequence index examined.
    pub p_max: u64,
}

impl Default for CauchyWindow {
    fn default() -> Self {
        CauchyWindow {
            ell_max: 8,
            p_max: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CauchyStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for CauchyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CauchyStatus::Pass => "PASS",
            CauchyStatus::Fail => "FAIL",
            CauchyStatus::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Per-`ℓ` outcome of the modulus search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusWitness {
    pub ell: u32,
    /// Least `p` whose tail `(p, p_max]` stays within `k^{-ℓ}`, when one
    /// exists inside the window.
    pub p: Option<u64>,
}

/// Outcome of a windowed Cauchy or equivalence test.
#[derive(Debug, Clone)]
pub struct CauchyVerdict {
    pub status: CauchyStatus,
    pub window: CauchyWindow,
    pub witnesses: Vec<ModulusWitness>,
    /// Largest deviation observed among the pairs the tightest passed level
    /// had to bound (all pairs, when the verdict is not PASS).
    pub worst_deviation: RationalValue,
    /// First `ℓ` at which the verdict became FAIL.
    pub failed_at: Option<u32>,
}

/// Truncated evaluation of the closeness probability
/// `liminf_ℓ limsup_p inf_{j,h>p} P_{j,h,ℓ}`.
#[derive(Debug, Clone)]
pub struct ProbEstimate {
    pub estimate: f64,
    pub window: CauchyWindow,
    /// The inner `limsup_p inf` value for each tested `ℓ`.
    pub per_ell: Vec<(u32, f64)>,
}

/// An indexable generator of superposition terms `n ↦ ψ(n)`, with an
/// optional declared modulus claiming to witness the Cauchy condition and a
/// default truncation window for the tests that consume it.
#[derive(Clone)]
pub struct NumeralSequence {
    base: u32,
    term_fn: Arc<dyn Fn(u64) -> StringSuperposition + Send + Sync>,
    modulus: Option<Arc<dyn Fn(u32) -> u64 + Send + Sync>>,
    window: CauchyWindow,
}

impl fmt::Debug for NumeralSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumeralSequence")
            .field("base", &self.base)
            .field("declared_modulus", &self.modulus.is_some())
            .field("window", &self.window)
            .finish()
    }
}

impl NumeralSequence {
    /// Wraps an arbitrary pure generator. The same `n` must always produce
    /// the same term.
    pub fn from_fn<F>(base: u32, f: F) -> Result<Self, CauchyError>
    where
        F: Fn(u64) -> StringSuperposition + Send + Sync + 'static,
    {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base).into());
        }
        Ok(NumeralSequence {
            base,
            term_fn: Arc::new(f),
            modulus: None,
            window: CauchyWindow::default(),
        })
    }

    /// The constant sequence `n ↦ |a⟩`, with the trivial modulus.
    pub fn constant(state: NumeralState) -> Self {
        let base = state.base();
        NumeralSequence {
            base,
            term_fn: Arc::new(move |_| StringSuperposition::basis(state.clone())),
            modulus: Some(Arc::new(|_| 0)),
            window: CauchyWindow::default(),
        }
    }

    /// Truncations of a rational: term `n` carries the full integer part and
    /// the first `n` fractional digits of the base-`base` expansion of
    /// `value`. Declares the modulus `p(ℓ) = ℓ`.
    pub fn truncation(value: &RationalValue, base: u32) -> Result<Self, CauchyError> {
        let expansion = expand_rational(value, base)?;
        let sign = match &expansion {
            Converted::Finite(s) => s.sign(),
            Converted::Periodic(p) => p.sign(),
        };
        let top = match &expansion {
            Converted::Finite(s) => {
                let mut top = -1i64;
                for (i, &d) in s.digits().iter().enumerate() {
                    if d != 0 {
                        top = top.max(i as i64 - s.point() as i64);
                    }
                }
                top
            }
            Converted::Periodic(p) => p.top_position(),
        };
        let digit_at = move |pos: i64| -> u32 {
            match &expansion {
                Converted::Finite(s) => s.digit_at_position(pos),
                Converted::Periodic(p) => p.digit_at_position(pos),
            }
        };
        let term = move |n: u64| -> StringSuperposition {
            let frac = n as usize;
            let high = top.max(-1);
            // Positions high .. -frac, most significant first.
            let len = (high + 1 + frac as i64) as usize;
            let mut digits = Vec::with_capacity(len.max(1));
            let mut pos = -(frac as i64);
            while pos <= high {
                digits.push(digit_at(pos));
                pos += 1;
            }
            if digits.is_empty() {
                digits.push(0);
            }
            let state = NumeralState::new(base, sign, digits, frac).expect("digits fit base");
            StringSuperposition::basis(state)
        };
        Ok(NumeralSequence {
            base,
            term_fn: Arc::new(term),
            modulus: Some(Arc::new(|ell| ell as u64)),
            window: CauchyWindow::default(),
        })
    }

    /// Alternates between two states: `a, b, a, b, …`.
    pub fn alternating(a: NumeralState, b: NumeralState) -> Result<Self, CauchyError> {
        if a.base() != b.base() {
            return Err(CauchyError::BaseMismatch(a.base(), b.base()));
        }
        let base = a.base();
        Ok(NumeralSequence {
            base,
            term_fn: Arc::new(move |n| {
                StringSuperposition::basis(if n % 2 == 0 { a.clone() } else { b.clone() })
            }),
            modulus: None,
            window: CauchyWindow::default(),
        })
    }

    /// Superposes branch sequences with fixed complex weights:
    /// `ψ(n) = Σ_i w_i · branch_i(n)`.
    pub fn superposed(
        weights: Vec<Complex64>,
        branches: Vec<NumeralSequence>,
    ) -> Result<Self, CauchyError> {
        let base = branches
            .first()
            .map(|b| b.base)
            .ok_or_else(|| CauchyError::NotCauchy("superposed needs at least one branch".into()))?;
        for b in &branches {
            if b.base != base {
                return Err(CauchyError::BaseMismatch(base, b.base));
            }
        }
        if weights.len() != branches.len() {
            return Err(CauchyError::NotCauchy(format!(
                "{} weights for {} branches",
                weights.len(),
                branches.len()
            )));
        }
        Ok(NumeralSequence {
            base,
            term_fn: Arc::new(move |n| {
                let mut out = StringSuperposition::new(base).expect("validated base");
                for (w, branch) in weights.iter().zip(&branches) {
                    for (label, amp) in branch.term(n).iter() {
                        out.add_term(label.clone(), w * amp).expect("same base");
                    }
                }
                out
            }),
            modulus: None,
            window: CauchyWindow::default(),
        })
    }

    /// Attaches a declared modulus `ℓ ↦ p` claiming the Cauchy condition.
    pub fn with_modulus<F>(mut self, f: F) -> Self
    where
        F: Fn(u32) -> u64 + Send + Sync + 'static,
    {
        self.modulus = Some(Arc::new(f));
        self
    }

    /// Replaces the default truncation window.
    pub fn with_window(mut self, window: CauchyWindow) -> Self {
        self.window = window;
        self
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn window(&self) -> CauchyWindow {
        self.window
    }

    pub fn declared_modulus(&self, ell: u32) -> Option<u64> {
        self.modulus.as_ref().map(|f| f(ell))
    }

    /// Term `n` of the sequence.
    pub fn term(&self, n: u64) -> StringSuperposition {
        (self.term_fn)(n)
    }

    /// Term `n`, required to be a single basis label.
    pub fn basis_term(&self, n: u64) -> Result<NumeralState, CauchyError> {
        let term = self.term(n);
        if term.len() != 1 {
            return Err(CauchyError::NotBasisSequence(n, term.len()));
        }
        let label = term.iter().next().expect("len checked").0.clone();
        Ok(label)
    }
}

// ----------------------------------------------------------------------
// Windowed pair scanning shared by cauchy_test and equivalent.
// ----------------------------------------------------------------------

/// A violation must recur at this fraction of the window's depths (and
/// still be present in the final tail) before a missing witness is
/// promoted from INCONCLUSIVE to FAIL.
const RECURRENCE_DENOMINATOR: u64 = 4;

struct PairScan {
    base: u32,
    window: CauchyWindow,
    /// `(min(j,h), max(j,h), |ψ(j) - ψ'(h)|)` for every scanned index pair.
    deviations: Vec<(u64, u64, NumeralState)>,
    /// Largest `p` that still leaves a meaningful tail.
    max_admissible_p: u64,
}

impl PairScan {
    /// Pairs `j < h` within one sequence.
    fn single(seq: &NumeralSequence, window: CauchyWindow) -> Result<Self, CauchyError> {
        let terms: Vec<NumeralState> = (0..=window.p_max)
            .map(|n| seq.basis_term(n))
            .collect::<Result<_, _>>()?;
        let mut deviations = Vec::new();
        for j in 1..=window.p_max {
            for h in (j + 1)..=window.p_max {
                let dev = terms[j as usize]
                    .sub_arith(&terms[h as usize])?
                    .abs_arith();
                deviations.push((j, h, dev));
            }
        }
        Ok(PairScan {
            base: seq.base,
            window,
            deviations,
            max_admissible_p: window.p_max.saturating_sub(2),
        })
    }

    /// Independent cross pairs `(j, h)` between two sequences (the Cauchy
    /// condition with the second sequence substituted for `ψ(h)`).
    fn cross(
        a: &NumeralSequence,
        b: &NumeralSequence,
        window: CauchyWindow,
    ) -> Result<Self, CauchyError> {
        if a.base != b.base {
            return Err(CauchyError::BaseMismatch(a.base, b.base));
        }
        let ta: Vec<NumeralState> = (0..=window.p_max)
            .map(|n| a.basis_term(n))
            .collect::<Result<_, _>>()?;
        let tb: Vec<NumeralState> = (0..=window.p_max)
            .map(|n| b.basis_term(n))
            .collect::<Result<_, _>>()?;
        let mut deviations = Vec::new();
        for j in 1..=window.p_max {
            for h in 1..=window.p_max {
                let dev = ta[j as usize].sub_arith(&tb[h as usize])?.abs_arith();
                deviations.push((j.min(h), j.max(h), dev));
            }
        }
        Ok(PairScan {
            base: a.base,
            window,
            deviations,
            max_admissible_p: window.p_max.saturating_sub(1),
        })
    }

    /// Scans one precision level; returns the least admissible witness `p`
    /// (if any) plus where violations occur.
    fn level(&self, ell: u32) -> Result<LevelOutcome, CauchyError> {
        let threshold = NumeralState::power_of_base(self.base, -(ell as i32))?;
        let mut violation_depths = std::collections::BTreeSet::new();
        let mut violation_ends = std::collections::BTreeSet::new();
        let mut deepest = 0u64;
        for (depth, end, dev) in &self.deviations {
            if dev.cmp_arith(&threshold)? == std::cmp::Ordering::Greater {
                violation_depths.insert(*depth);
                violation_ends.insert(*end);
                deepest = deepest.max(*depth);
            }
        }
        let witness = if violation_depths.is_empty() {
            Some(0)
        } else if deepest <= self.max_admissible_p {
            Some(deepest)
        } else {
            None
        };
        Ok(LevelOutcome {
            witness,
            violation_depths,
            violation_ends,
        })
    }

    fn worst_deviation_beyond(&self, tail_start: u64) -> RationalValue {
        let mut worst = RationalValue::from_integer(0.into());
        for (depth, _, dev) in &self.deviations {
            if *depth > tail_start {
                let v = dev.value();
                if v > worst {
                    worst = v;
                }
            }
        }
        worst
    }

    /// FAIL promotion: violations with no witness must recur across at
    /// least `max(2, p_max/4)` distinct later indices; a single aberrant
    /// term near the window's end stays INCONCLUSIVE.
    fn recurs(&self, outcome: &LevelOutcome) -> bool {
        let needed = (self.window.p_max / RECURRENCE_DENOMINATOR).max(2);
        outcome.witness.is_none() && outcome.violation_ends.len() as u64 >= needed
    }
}

struct LevelOutcome {
    witness: Option<u64>,
    violation_depths: std::collections::BTreeSet<u64>,
    violation_ends: std::collections::BTreeSet<u64>,
}

fn verdict_from_scan(
    scan: &PairScan,
    declared: Option<&Arc<dyn Fn(u32) -> u64 + Send + Sync>>,
) -> Result<CauchyVerdict, CauchyError> {
    let window = scan.window;
    let mut witnesses = Vec::with_capacity(window.ell_max as usize);
    let mut failed_at = None;
    let mut all_witnessed = true;
    for ell in 1..=window.ell_max {
        let outcome = scan.level(ell)?;
        // A declared modulus is a refutable claim: any violating pair past
        // the declared p falsifies it outright.
        if let Some(declared_fn) = declared {
            let p_claimed = declared_fn(ell);
            if outcome
                .violation_depths
                .iter()
                .any(|&depth| depth > p_claimed)
                && failed_at.is_none()
            {
                failed_at = Some(ell);
            }
        }
        if outcome.witness.is_none() {
            all_witnessed = false;
            if scan.recurs(&outcome) && failed_at.is_none() {
                failed_at = Some(ell);
            }
        }
        witnesses.push(ModulusWitness {
            ell,
            p: outcome.witness,
        });
    }
    let status = if failed_at.is_some() {
        CauchyStatus::Fail
    } else if all_witnessed {
        CauchyStatus::Pass
    } else {
        CauchyStatus::Inconclusive
    };
    let tail_start = if status == CauchyStatus::Pass {
        witnesses.last().and_then(|w| w.p).unwrap_or(0)
    } else {
        0
    };
    Ok(CauchyVerdict {
        status,
        window,
        witnesses,
        worst_deviation: scan.worst_deviation_beyond(tail_start),
        failed_at,
    })
}

/// Windowed Cauchy test on a basis-state sequence: for each `ℓ <= ell_max`
/// searches a `p <= p_max` such that all pairs in `(p, p_max]` deviate by
/// at most `k^{-ℓ}` (exact digit-level comparison).
pub fn cauchy_test(
    seq: &NumeralSequence,
    ell_max: u32,
    p_max: u64,
) -> Result<CauchyVerdict, CauchyError> {
    let window = CauchyWindow { ell_max, p_max };
    let scan = PairScan::single(seq, window)?;
    verdict_from_scan(&scan, seq.modulus.as_ref())
}

/// Windowed equivalence test: applies the Cauchy condition to cross pairs
/// `|seq1(j) - seq2(h)|`, which simultaneously tests both sequences and the
/// convergence of their difference to zero.
pub fn equivalent(
    seq1: &NumeralSequence,
    seq2: &NumeralSequence,
    ell_max: u32,
    p_max: u64,
) -> Result<CauchyVerdict, CauchyError> {
    let window = CauchyWindow { ell_max, p_max };
    let scan = PairScan::cross(seq1, seq2, window)?;
    verdict_from_scan(&scan, None)
}

/// Truncated evaluation of the probabilistic Cauchy functional for
/// superposition sequences: per `ℓ`, the component-pair closeness
/// probability is minimized over tail pairs and maximized over tail starts;
/// the estimate is the minimum over `ℓ`.
pub fn cauchy_prob(
    seq: &NumeralSequence,
    ell_max: u32,
    p_max: u64,
) -> Result<ProbEstimate, CauchyError> {
    let window = CauchyWindow { ell_max, p_max };
    let terms: Vec<StringSuperposition> = (0..=p_max).map(|n| seq.term(n)).collect();
    let mut per_ell = Vec::with_capacity(ell_max as usize);
    let mut estimate = f64::INFINITY;
    for ell in 1..=ell_max {
        // P[j][h] for 1 <= j < h <= p_max, flattened.
        let mut probs = Vec::new();
        for j in 1..=p_max {
            for h in (j + 1)..=p_max {
                let p = terms[j as usize].prob_arith_close(&terms[h as usize], ell)?;
                probs.push((j, p));
            }
        }
        let mut best = 0.0f64;
        let max_p = p_max.saturating_sub(2);
        for p in 0..=max_p {
            let inf = probs
                .iter()
                .filter(|(j, _)| *j > p)
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min);
            if inf.is_finite() {
                best = best.max(inf);
            }
        }
        per_ell.push((ell, best));
        estimate = estimate.min(best);
    }
    if !estimate.is_finite() {
        estimate = 1.0;
    }
    Ok(ProbEstimate {
        estimate,
        window,
        per_ell,
    })
}

// ----------------------------------------------------------------------
// Canonical digit streams.
// ----------------------------------------------------------------------

/// The `n`-digit prefix of the canonical representative of a sequence's
/// equivalence class. The stream starts at the limit's most significant
/// digit (or at the first fractional position when |limit| < 1); each digit
/// is emitted only once every window term beyond the level's modulus
/// literally agrees on it, so prefixes of larger `n` extend smaller ones.
///
/// Superposition terms are allowed: every component label must agree on
/// each inspected digit.
pub fn canonical(seq: &NumeralSequence, n: usize) -> Result<NumeralState, CauchyError> {
    let p_max = seq.window().p_max;
    let terms: Vec<Vec<NumeralState>> = (0..=p_max)
        .map(|i| seq.term(i).iter().map(|(l, _)| l.clone()).collect())
        .collect();
    let helper = CanonicalScan {
        seq,
        terms,
        p_max,
    };
    helper.prefix(n)
}

struct CanonicalScan<'a> {
    seq: &'a NumeralSequence,
    terms: Vec<Vec<NumeralState>>,
    p_max: u64,
}

impl CanonicalScan<'_> {
    /// Modulus for one precision level: the declared one when present,
    /// otherwise searched in the window.
    fn witness(&self, ell: u32) -> Result<u64, CauchyError> {
        let limit = self.p_max.saturating_sub(2);
        if let Some(p) = self.seq.declared_modulus(ell) {
            if p > limit {
                return Err(CauchyError::NotCauchy(format!(
                    "declared modulus p({ell}) = {p} leaves no tail in window p_max = {}",
                    self.p_max
                )));
            }
            return Ok(p);
        }
        let threshold = NumeralState::power_of_base(self.seq.base(), -(ell as i32))?;
        let mut deepest = 0u64;
        for j in 1..=self.p_max {
            for h in (j + 1)..=self.p_max {
                for a in &self.terms[j as usize] {
                    for b in &self.terms[h as usize] {
                        let dev = a.sub_arith(b)?.abs_arith();
                        if dev.cmp_arith(&threshold)? == std::cmp::Ordering::Greater {
                            deepest = deepest.max(j);
                        }
                    }
                }
            }
        }
        if deepest > limit {
            return Err(CauchyError::NotCauchy(format!(
                "no modulus for level {ell} within window p_max = {}",
                self.p_max
            )));
        }
        Ok(deepest)
    }

    fn level_for_position(pos: i64) -> u32 {
        let depth = if pos >= 0 { 1 } else { (-pos) as u32 };
        depth + 1
    }

    /// The stabilized digit at one position: all component labels of all
    /// terms beyond the level's modulus must agree literally.
    fn stable_digit(&self, pos: i64) -> Result<u32, CauchyError> {
        let p = self.witness(Self::level_for_position(pos))?;
        let mut agreed: Option<u32> = None;
        for i in (p + 1)..=self.p_max {
            for label in &self.terms[i as usize] {
                let d = label.digit_at_position(pos);
                match agreed {
                    None => agreed = Some(d),
                    Some(prev) if prev != d => {
                        return Err(CauchyError::NotCauchy(format!(
                            "digit at position {pos} does not stabilize in the window"
                        )))
                    }
                    _ => {}
                }
            }
        }
        agreed.ok_or_else(|| {
            CauchyError::NotCauchy("window leaves no terms beyond the modulus".into())
        })
    }

    fn stable_sign(&self) -> Result<Sign, CauchyError> {
        let p = self.witness(2.min(u32::MAX))?;
        let mut agreed: Option<Sign> = None;
        for i in (p + 1)..=self.p_max {
            for label in &self.terms[i as usize] {
                if label.is_zero_value() {
                    continue;
                }
                match agreed {
                    None => agreed = Some(label.sign()),
                    Some(prev) if prev != label.sign() => {
                        return Err(CauchyError::NotCauchy(
                            "sign does not stabilize in the window".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(agreed.unwrap_or(Sign::Plus))
    }

    fn prefix(&self, n: usize) -> Result<NumeralState, CauchyError> {
        // Highest position any tail term touches bounds the scan for the
        // stream's starting position.
        let p1 = self.witness(2)?;
        let mut scan_top = -1i64;
        for i in (p1 + 1)..=self.p_max {
            for label in &self.terms[i as usize] {
                for (idx, &d) in label.digits().iter().enumerate() {
                    if d != 0 {
                        scan_top = scan_top.max(idx as i64 - label.point() as i64);
                    }
                }
            }
        }
        // Descend until the first stable nonzero digit; all-zero integer
        // positions push the stream start to the first fractional digit.
        let mut top = -1i64;
        let mut pos = scan_top;
        while pos >= 0 {
            if self.stable_digit(pos)? != 0 {
                top = pos;
                break;
            }
            pos -= 1;
        }
        let count = n.max((top + 1) as usize).max(if n == 0 { 0 } else { 1 });
        let mut digits_msd = Vec::with_capacity(count);
        let mut position = top;
        while digits_msd.len() < count {
            digits_msd.push(self.stable_digit(position)?);
            position -= 1;
        }
        let point = (count as i64 - 1 - top) as usize;
        let digits: Vec<u32> = digits_msd.into_iter().rev().collect();
        let sign = self.stable_sign()?;
        if count == 0 {
            return Ok(NumeralState::new(self.seq.base(), sign, Vec::new(), 0)?);
        }
        Ok(NumeralState::new(self.seq.base(), sign, digits, point)?)
    }
}

// ----------------------------------------------------------------------
// Real and complex representatives.
// ----------------------------------------------------------------------

/// How a [`RealRep`] came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Constant,
    Truncation,
    Converted,
    Derived,
}

#[derive(Debug, Clone)]
enum RepKind {
    /// The class of a rational exactly representable in the base: the
    /// canonical stream extends a single trimmed state with zeros.
    Exact(NumeralState),
    /// The class of a rational whose expansion repeats forever.
    Periodic(PeriodicExpansion),
    /// A class known only through a windowed sequence.
    Windowed(NumeralSequence),
}

/// A real number as a canonical digit-stream generator: `prefix(n)` yields
/// the state carrying the first `n` digits of the class representative, and
/// every earlier output is an initial part of every later one.
#[derive(Debug, Clone)]
pub struct RealRep {
    base: u32,
    kind: RepKind,
    provenance: Provenance,
}

impl RealRep {
    /// Constant-sequence representative of a numeral state's class.
    pub fn from_numeral(state: &NumeralState) -> Self {
        RealRep {
            base: state.base(),
            kind: RepKind::Exact(state.trim()),
            provenance: Provenance::Constant,
        }
    }

    /// Representative of a rational's class in an arbitrary base.
    pub fn from_rational(value: &RationalValue, base: u32) -> Result<Self, CauchyError> {
        let kind = match expand_rational(value, base)? {
            Converted::Finite(s) => RepKind::Exact(s),
            Converted::Periodic(p) => RepKind::Periodic(p),
        };
        Ok(RealRep {
            base,
            kind,
            provenance: Provenance::Truncation,
        })
    }

    /// Representative obtained by re-expressing a state in another base.
    pub fn convert_base(state: &NumeralState, to: u32) -> Result<Self, CauchyError> {
        let kind = match state.convert_base(to)? {
            Converted::Finite(s) => RepKind::Exact(s),
            Converted::Periodic(p) => RepKind::Periodic(p),
        };
        Ok(RealRep {
            base: to,
            kind,
            provenance: Provenance::Converted,
        })
    }

    /// Representative of the class of a windowed Cauchy sequence; prefixes
    /// are extracted on demand and may report `NotCauchy` when the window
    /// cannot stabilize the requested digits.
    pub fn from_sequence(seq: NumeralSequence) -> Self {
        RealRep {
            base: seq.base(),
            kind: RepKind::Windowed(seq),
            provenance: Provenance::Derived,
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// True when the class contains a constant sequence of states, i.e. the
    /// representative is a single exactly-representable rational.
    pub fn is_constant_type(&self) -> bool {
        matches!(self.kind, RepKind::Exact(_))
    }

    /// The `n`-digit prefix of the canonical stream.
    pub fn prefix(&self, n: usize) -> Result<NumeralState, CauchyError> {
        match &self.kind {
            RepKind::Exact(state) => {
                let top = state
                    .digits()
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d != 0)
                    .map(|(i, _)| i as i64 - state.point() as i64)
                    .max()
                    .unwrap_or(-1)
                    .max(-1);
                Ok(prefix_from_positions(
                    self.base,
                    state.sign(),
                    top,
                    n,
                    |pos| state.digit_at_position(pos),
                )?)
            }
            RepKind::Periodic(exp) => {
                let top = exp.top_position().max(-1);
                Ok(prefix_from_positions(self.base, exp.sign(), top, n, |pos| {
                    exp.digit_at_position(pos)
                })?)
            }
            RepKind::Windowed(seq) => canonical(seq, n),
        }
    }

    /// Checks the prefix property on demand for all `n < n' <= n_max`.
    pub fn verify_prefix_property(&self, n_max: usize) -> Result<(), CauchyError> {
        let mut previous: Option<NumeralState> = None;
        for n in 1..=n_max {
            let current = self.prefix(n)?;
            if let Some(prev) = &previous {
                if !is_initial_part(prev, &current) {
                    return Err(CauchyError::NotCauchy(format!(
                        "prefix({}) is not an initial part of prefix({n})",
                        n - 1
                    )));
                }
            }
            previous = Some(current);
        }
        Ok(())
    }
}

/// True when `shorter` is an initial part of `longer`: same sign, same
/// starting position, and agreement on every digit `shorter` carries.
pub fn is_initial_part(shorter: &NumeralState, longer: &NumeralState) -> bool {
    if shorter.base() != longer.base() || shorter.len() > longer.len() {
        return false;
    }
    if shorter.sign() != longer.sign() && !shorter.is_zero_value() {
        return false;
    }
    let top_s = shorter.len() as i64 - 1 - shorter.point() as i64;
    let top_l = longer.len() as i64 - 1 - longer.point() as i64;
    if top_s != top_l {
        return false;
    }
    (0..shorter.len() as i64).all(|offset| {
        shorter.digit_at_position(top_s - offset) == longer.digit_at_position(top_l - offset)
    })
}

fn prefix_from_positions<F>(
    base: u32,
    sign: Sign,
    top: i64,
    n: usize,
    digit_at: F,
) -> Result<NumeralState, NumeralError>
where
    F: Fn(i64) -> u32,
{
    let count = n.max((top + 1) as usize);
    if count == 0 {
        return NumeralState::new(base, sign, Vec::new(), 0);
    }
    let mut digits = Vec::with_capacity(count);
    for offset in 0..count as i64 {
        digits.push(digit_at(top - offset));
    }
    digits.reverse();
    let point = (count as i64 - 1 - top) as usize;
    NumeralState::new(base, sign, digits, point)
}

/// A complex number as a pair of real canonical streams over one base.
#[derive(Debug, Clone)]
pub struct ComplexRep {
    re: RealRep,
    im: RealRep,
}

impl ComplexRep {
    pub fn new(re: RealRep, im: RealRep) -> Result<Self, CauchyError> {
        if re.base() != im.base() {
            return Err(CauchyError::BaseMismatch(re.base(), im.base()));
        }
        Ok(ComplexRep { re, im })
    }

    pub fn re(&self) -> &RealRep {
        &self.re
    }

    pub fn im(&self) -> &RealRep {
        &self.im
    }
}

/// Constant-sequence real representative of a numeral state.
pub fn real_from_numeral(state: &NumeralState) -> RealRep {
    RealRep::from_numeral(state)
}

/// Componentwise constant representative of a complex numeral pair.
pub fn complex_from_pair(pair: &ComplexNumeral) -> ComplexRep {
    ComplexRep {
        re: RealRep::from_numeral(pair.re()),
        im: RealRep::from_numeral(pair.im()),
    }
}

/// Real representative of a state's value in another base: constant-type
/// when the value is representable there, periodic-stream otherwise.
pub fn real_convert_base(state: &NumeralState, to: u32) -> Result<RealRep, CauchyError> {
    RealRep::convert_base(state, to)
}
