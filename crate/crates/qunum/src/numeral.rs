//! Exact basis states of signed base-`k` digit strings and their arithmetic.
//!
//! A [`NumeralState`] is one basis label `|γ,s⟩` of a string of `L` base-`k`
//! digits with a sign-and-point marker at position `m` counted from the right
//! end. It denotes exactly the rational value
//!
//! ```text
//! γ · (Σ_{j=0}^{L-1} s(j)·k^j) · k^{-m}
//! ```
//!
//! Digit index 0 is the rightmost (least significant) position. Two states
//! that differ only by leading or trailing zeros are *arithmetically equal*
//! while remaining distinct (orthogonal) basis labels; [`NumeralState::trim`]
//! maps each arithmetic-equality class to its shortest member.
//!
//! All arithmetic here (`add_arith`, `sub_arith`, `cmp_arith`, the ulp
//! successor pair) is carried out at the digit level, in the given base,
//! with exact carries and borrows. [`RationalValue`] is the big-rational
//! view of the same values and is what independent test oracles compare
//! against; the digit route never consults it.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num::bigint::{BigInt, BigUint, Sign as IntSign};
use num::rational::Ratio;
use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational value of a numeral state, kept in lowest terms with a
/// positive denominator. This is the oracle-side representation of `l·Δ`
/// values; the numeral operations themselves stay on the digit strings.
pub type RationalValue = Ratio<BigInt>;

/// Sign marker `γ` of a numeral state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// The opposite sign.
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// `'+'` or `'-'`.
    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Errors raised by numeral-state construction and arithmetic.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumeralError {
    #[error("InvalidBase: base {0} must be at least 2")]
    InvalidBase(u32),
    #[error("InvalidDigit: digit {digit} out of range for base {base}")]
    InvalidDigit { digit: u32, base: u32 },
    #[error("InvalidPoint: point position {point} exceeds string length {len}")]
    InvalidPoint { point: usize, len: usize },
    #[error("BaseMismatch: operand bases {0} and {1} differ")]
    BaseMismatch(u32, u32),
    #[error("NotRepresentable: denominator cofactor {0} shares no factor with base {1}")]
    NotRepresentable(String, u32),
    #[error("CannotAlign: value does not fit length {len} with point {point}")]
    CannotAlign { len: usize, point: usize },
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("UnsupportedTextBase: compact text needs base <= 36, got {0}")]
    UnsupportedTextBase(u32),
}

impl NumeralError {
    /// The documented short name of the error, as surfaced by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            NumeralError::InvalidBase(_) => "InvalidBase",
            NumeralError::InvalidDigit { .. } => "InvalidDigit",
            NumeralError::InvalidPoint { .. } => "InvalidPoint",
            NumeralError::BaseMismatch(..) => "BaseMismatch",
            NumeralError::NotRepresentable(..) => "NotRepresentable",
            NumeralError::CannotAlign { .. } => "CannotAlign",
            NumeralError::Parse(_) => "ParseError",
            NumeralError::UnsupportedTextBase(_) => "UnsupportedTextBase",
        }
    }
}

/// One basis state `|γ,s⟩` of a base-`k` qukit string: sign, digit string
/// and point position. Equality and ordering are *label* equality — two
/// arithmetically equal paddings are distinct states. Use
/// [`eq_arith`](NumeralState::eq_arith) for value equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NumeralState {
    base: u32,
    sign: Sign,
    /// Digits `s(0..L-1)`, index 0 least significant (rightmost).
    digits: Vec<u32>,
    /// Position `m` of the sign marker and `k`-al point, from the right.
    point: usize,
}

impl NumeralState {
    /// Builds a state from raw parts, validating every invariant:
    /// base at least 2, digits below the base, `0 <= m <= L`.
    pub fn new(base: u32, sign: Sign, digits: Vec<u32>, point: usize) -> Result<Self, NumeralError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base));
        }
        if point > digits.len() {
            return Err(NumeralError::InvalidPoint {
                point,
                len: digits.len(),
            });
        }
        if let Some(&digit) = digits.iter().find(|&&d| d >= base) {
            return Err(NumeralError::InvalidDigit { digit, base });
        }
        Ok(NumeralState {
            base,
            sign,
            digits,
            point,
        })
    }

    /// The canonical zero `|+0⟩`: one digit, point at the right end.
    pub fn zero(base: u32) -> Result<Self, NumeralError> {
        Self::new(base, Sign::Plus, vec![0], 0)
    }

    /// The integer `n` as a trimmed state with `m = 0`.
    pub fn from_integer(base: u32, n: i64) -> Result<Self, NumeralError> {
        Self::encode(&RationalValue::from_integer(BigInt::from(n)), base)
    }

    /// The state for `k^exp`, trimmed. Negative exponents give the paper's
    /// threshold states `|+,-ℓ⟩` (a single 1 digit, point at the left end).
    pub fn power_of_base(base: u32, exp: i32) -> Result<Self, NumeralError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base));
        }
        if exp >= 0 {
            let mut digits = vec![0; exp as usize];
            digits.push(1);
            Self::new(base, Sign::Plus, digits, 0)
        } else {
            let ell = (-exp) as usize;
            let mut digits = vec![0; ell];
            digits[0] = 1;
            Self::new(base, Sign::Plus, digits, ell)
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Digits `s(0..L-1)`, least significant first.
    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    /// String length `L`.
    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Point position `m`.
    pub fn point(&self) -> usize {
        self.point
    }

    /// Digit at a position counted relative to the point: position 0 is the
    /// units digit, -1 the first fractional digit. Positions outside the
    /// stored string read as 0.
    pub fn digit_at_position(&self, position: i64) -> u32 {
        let idx = position + self.point as i64;
        if idx < 0 || idx >= self.digits.len() as i64 {
            0
        } else {
            self.digits[idx as usize]
        }
    }

    /// True when every digit is zero (the value is zero, whatever the sign).
    pub fn is_zero_value(&self) -> bool {
        self.digits.iter().all(|&d| d == 0)
    }

    fn check_base(&self, other: &Self) -> Result<(), NumeralError> {
        if self.base != other.base {
            Err(NumeralError::BaseMismatch(self.base, other.base))
        } else {
            Ok(())
        }
    }

    /// The exact value `γ · l · k^{-m}` with `l = Σ s(j)·k^j`, in lowest terms.
    pub fn value(&self) -> RationalValue {
        let mut l = BigUint::zero();
        for &d in self.digits.iter().rev() {
            l = l * self.base + d;
        }
        let numer = match self.sign {
            Sign::Plus => BigInt::from(l),
            Sign::Minus => -BigInt::from(l),
        };
        let denom = BigInt::from(self.base).pow(self.point as u32);
        Ratio::new(numer, denom)
    }

    /// Inverse of [`value`](Self::value): the trimmed state with the given
    /// value, minimal `L` and `m`. Fails with `NotRepresentable` when the
    /// denominator has a prime factor not dividing the base.
    pub fn encode(value: &RationalValue, base: u32) -> Result<Self, NumeralError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base));
        }
        if value.is_zero() {
            return Self::zero(base);
        }
        let denom = value.denom().magnitude().clone();
        let base_big = BigUint::from(base);
        // Strip every factor shared with the base; a nontrivial leftover
        // means some prime of the denominator never divides k^m.
        let mut leftover = denom.clone();
        loop {
            let g = leftover.gcd(&base_big);
            if g.is_one() {
                break;
            }
            leftover /= g;
        }
        if !leftover.is_one() {
            return Err(NumeralError::NotRepresentable(leftover.to_string(), base));
        }
        // Minimal m with denom | k^m.
        let mut power = BigUint::one();
        let mut point = 0usize;
        while !(&power % &denom).is_zero() {
            power *= &base_big;
            point += 1;
        }
        let l = value.numer().magnitude() * &power / &denom;
        let mut digits = Vec::new();
        let mut rest = l;
        while !rest.is_zero() {
            let (q, r) = rest.div_rem(&base_big);
            digits.push(r.to_u32_digits().first().copied().unwrap_or(0));
            rest = q;
        }
        while digits.len() < point.max(1) {
            digits.push(0);
        }
        let sign = if value.numer().sign() == IntSign::Minus {
            Sign::Minus
        } else {
            Sign::Plus
        };
        Self::new(base, sign, digits, point)
    }

    /// Removes trailing zeros below the point and leading zeros above
    /// `max(m, highest significant digit)`. Any zero-valued state normalizes
    /// to `|+0⟩` with `m = 0`.
    pub fn trim(&self) -> Self {
        let mut digits = self.digits.clone();
        let mut point = self.point;
        let mut start = 0usize;
        while point > 0 && start < digits.len() && digits[start] == 0 {
            start += 1;
            point -= 1;
        }
        digits.drain(..start);
        if digits.iter().all(|&d| d == 0) {
            return NumeralState {
                base: self.base,
                sign: Sign::Plus,
                digits: vec![0],
                point: 0,
            };
        }
        let highest = digits.iter().rposition(|&d| d != 0).unwrap();
        digits.truncate(point.max(highest + 1));
        NumeralState {
            base: self.base,
            sign: self.sign,
            digits,
            point,
        }
    }

    /// Arithmetically equal state with the requested length and point
    /// position; the inverse of [`trim`](Self::trim). Fails with
    /// `CannotAlign` when the value cannot be realized at `(len, point)`.
    pub fn pad(&self, len: usize, point: usize) -> Result<Self, NumeralError> {
        if point > len {
            return Err(NumeralError::CannotAlign { len, point });
        }
        let t = self.trim();
        if t.is_zero_value() {
            return NumeralState::new(self.base, t.sign, vec![0; len.max(1)], point);
        }
        if point < t.point {
            return Err(NumeralError::CannotAlign { len, point });
        }
        let mut digits = vec![0; point - t.point];
        digits.extend_from_slice(&t.digits);
        if digits.len() > len {
            return Err(NumeralError::CannotAlign { len, point });
        }
        digits.resize(len, 0);
        NumeralState::new(self.base, t.sign, digits, point)
    }

    /// Aligns two states to a common point and length, returning the padded
    /// digit vectors and the shared `(len, point)`.
    fn aligned(&self, other: &Self) -> (Vec<u32>, Vec<u32>, usize, usize) {
        let point = self.point.max(other.point);
        let len = (self.digits.len() + point - self.point)
            .max(other.digits.len() + point - other.point);
        let place = |s: &Self| {
            let mut d = vec![0u32; point - s.point];
            d.extend_from_slice(&s.digits);
            d.resize(len, 0);
            d
        };
        (place(self), place(other), len, point)
    }

    /// Arithmetic equality: same value, regardless of padding.
    pub fn eq_arith(&self, other: &Self) -> Result<bool, NumeralError> {
        Ok(self.cmp_arith(other)? == Ordering::Equal)
    }

    /// Orders two states by value, at the digit level.
    pub fn cmp_arith(&self, other: &Self) -> Result<Ordering, NumeralError> {
        self.check_base(other)?;
        let (a, b, ..) = self.aligned(other);
        let a_zero = a.iter().all(|&d| d == 0);
        let b_zero = b.iter().all(|&d| d == 0);
        if a_zero && b_zero {
            return Ok(Ordering::Equal);
        }
        let a_sign = if a_zero { Sign::Plus } else { self.sign };
        let b_sign = if b_zero { Sign::Plus } else { other.sign };
        Ok(match (a_sign, b_sign) {
            (Sign::Plus, Sign::Minus) => Ordering::Greater,
            (Sign::Minus, Sign::Plus) => Ordering::Less,
            (Sign::Plus, Sign::Plus) => cmp_magnitude(&a, &b),
            (Sign::Minus, Sign::Minus) => cmp_magnitude(&b, &a),
        })
    }

    /// Exact digit-level addition; the result is trimmed.
    pub fn add_arith(&self, other: &Self) -> Result<Self, NumeralError> {
        self.check_base(other)?;
        let (a, b, _, point) = self.aligned(other);
        let (digits, sign) = if self.sign == other.sign {
            (add_magnitude(&a, &b, self.base), self.sign)
        } else {
            match cmp_magnitude(&a, &b) {
                Ordering::Equal => (vec![0], Sign::Plus),
                Ordering::Greater => (sub_magnitude(&a, &b, self.base), self.sign),
                Ordering::Less => (sub_magnitude(&b, &a, self.base), other.sign),
            }
        };
        let point = point.min(digits.len());
        Ok(NumeralState {
            base: self.base,
            sign,
            digits,
            point,
        }
        .trim())
    }

    /// Exact digit-level subtraction; the result is trimmed.
    pub fn sub_arith(&self, other: &Self) -> Result<Self, NumeralError> {
        let negated = NumeralState {
            base: other.base,
            sign: other.sign.flip(),
            digits: other.digits.clone(),
            point: other.point,
        };
        self.add_arith(&negated)
    }

    /// Absolute value, trimmed.
    pub fn abs_arith(&self) -> Self {
        NumeralState {
            base: self.base,
            sign: Sign::Plus,
            digits: self.digits.clone(),
            point: self.point,
        }
        .trim()
    }

    /// Adds one unit in the last place, `+k^{-m}` of the *untrimmed* operand.
    /// Padding is preserved; the string grows by one digit on carry out.
    pub fn succ_ulp(&self) -> Self {
        self.offset_ulp(true)
    }

    /// Subtracts one unit in the last place, `-k^{-m}` of the untrimmed
    /// operand. The exact inverse of [`succ_ulp`](Self::succ_ulp).
    pub fn pred_ulp(&self) -> Self {
        self.offset_ulp(false)
    }

    fn offset_ulp(&self, up: bool) -> Self {
        let towards_sign = (self.sign == Sign::Plus) == up;
        let mut digits = self.digits.clone();
        if digits.is_empty() {
            digits.push(0);
        }
        let mut sign = self.sign;
        if towards_sign {
            // Magnitude grows away from zero.
            let mut carry = 1u32;
            for d in digits.iter_mut() {
                let sum = *d + carry;
                *d = sum % self.base;
                carry = sum / self.base;
                if carry == 0 {
                    break;
                }
            }
            if carry > 0 {
                digits.push(carry);
            }
        } else if self.is_zero_value() {
            // Crossing zero: |0 ± ulp| = ulp with the opposite orientation.
            digits[0] = 1;
            sign = if up { Sign::Plus } else { Sign::Minus };
        } else {
            for d in digits.iter_mut() {
                if *d == 0 {
                    *d = self.base - 1;
                } else {
                    *d -= 1;
                    break;
                }
            }
            if digits.iter().all(|&d| d == 0) {
                sign = Sign::Plus;
            }
        }
        NumeralState {
            base: self.base,
            sign,
            digits,
            point: self.point,
        }
    }

    /// Re-expresses the value in base `to`: a finite trimmed state when the
    /// value is representable there, otherwise the eventually periodic digit
    /// expansion with its preperiod and period detected by remainder cycling.
    pub fn convert_base(&self, to: u32) -> Result<Converted, NumeralError> {
        expand_rational(&self.value(), to)
    }

    /// Compact text form: digits, with the sign character at the point
    /// position (`L-m` digits to its left). Bases above 36 have no digit
    /// alphabet and are rejected.
    pub fn format_compact(&self) -> Result<String, NumeralError> {
        if self.base > 36 {
            return Err(NumeralError::UnsupportedTextBase(self.base));
        }
        let mut out = String::with_capacity(self.digits.len() + 1);
        for &d in self.digits[self.point..].iter().rev() {
            out.push(char::from_digit(d, 36).unwrap());
        }
        out.push(self.sign.as_char());
        for &d in self.digits[..self.point].iter().rev() {
            out.push(char::from_digit(d, 36).unwrap());
        }
        Ok(out)
    }

    /// Parses the compact text form `digits* sign digits*` with exactly one
    /// sign character. Accepts `-` or the typographic minus for the sign.
    pub fn parse_compact(text: &str, base: u32) -> Result<Self, NumeralError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base));
        }
        if base > 36 {
            return Err(NumeralError::UnsupportedTextBase(base));
        }
        let mut sign = None;
        let mut left: Vec<u32> = Vec::new();
        let mut right: Vec<u32> = Vec::new();
        for c in text.chars() {
            let parsed_sign = match c {
                '+' => Some(Sign::Plus),
                '-' | '\u{2212}' => Some(Sign::Minus),
                _ => None,
            };
            if let Some(s) = parsed_sign {
                if sign.is_some() {
                    return Err(NumeralError::Parse(format!(
                        "more than one sign character in {text:?}"
                    )));
                }
                sign = Some(s);
                continue;
            }
            let digit = c
                .to_digit(36)
                .filter(|&d| d < base)
                .ok_or_else(|| NumeralError::Parse(format!("digit {c:?} invalid for base {base}")))?;
            if sign.is_some() {
                right.push(digit);
            } else {
                left.push(digit);
            }
        }
        let sign = sign
            .ok_or_else(|| NumeralError::Parse(format!("no sign character in {text:?}")))?;
        let point = right.len();
        let mut digits: Vec<u32> = right.into_iter().rev().collect();
        digits.extend(left.into_iter().rev());
        NumeralState::new(base, sign, digits, point)
    }
}

impl fmt::Display for NumeralState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.format_compact() {
            Ok(s) => f.write_str(&s),
            // No digit alphabet above base 36; fall back to the raw label.
            Err(_) => write!(
                f,
                "{}|{:?}|{}e-{}",
                self.sign.as_char(),
                self.digits,
                self.base,
                self.point
            ),
        }
    }
}

fn cmp_magnitude(a: &[u32], b: &[u32]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    for (da, db) in a.iter().rev().zip(b.iter().rev()) {
        match da.cmp(db) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn add_magnitude(a: &[u32], b: &[u32], base: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + 1);
    let mut carry = 0u32;
    for (da, db) in a.iter().zip(b.iter()) {
        let sum = da + db + carry;
        out.push(sum % base);
        carry = sum / base;
    }
    if carry > 0 {
        out.push(carry);
    }
    out
}

/// Magnitude subtraction, requires `a >= b` digitwise-aligned.
fn sub_magnitude(a: &[u32], b: &[u32], base: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len());
    let mut borrow = 0i64;
    for (da, db) in a.iter().zip(b.iter()) {
        let diff = *da as i64 - *db as i64 - borrow;
        if diff < 0 {
            out.push((diff + base as i64) as u32);
            borrow = 1;
        } else {
            out.push(diff as u32);
            borrow = 0;
        }
    }
    debug_assert_eq!(borrow, 0, "sub_magnitude requires a >= b");
    out
}

/// Expands a rational into base-`base` digits by long division, detecting
/// the period through remainder cycling (a repeated remainder closes the
/// cycle; remainders are bounded by the denominator, so this terminates).
pub fn expand_rational(value: &RationalValue, base: u32) -> Result<Converted, NumeralError> {
    if base < 2 {
        return Err(NumeralError::InvalidBase(base));
    }
    let sign = if value.is_negative() {
        Sign::Minus
    } else {
        Sign::Plus
    };
    let numer = value.numer().magnitude();
    let denom = value.denom().magnitude();
    let base_big = BigUint::from(base);

    let (int_part, mut remainder) = numer.div_rem(denom);
    let mut integer = Vec::new();
    let mut rest = int_part;
    while !rest.is_zero() {
        let (q, r) = rest.div_rem(&base_big);
        integer.push(r.to_u32_digits().first().copied().unwrap_or(0));
        rest = q;
    }
    integer.reverse();

    let mut fraction: Vec<u32> = Vec::new();
    let mut seen: HashMap<BigUint, usize> = HashMap::new();
    loop {
        if remainder.is_zero() {
            // Terminating expansion: reassemble as a single state.
            let point = fraction.len();
            let mut digits: Vec<u32> = fraction.iter().rev().copied().collect();
            digits.extend(integer.iter().rev());
            if digits.is_empty() {
                digits.push(0);
            }
            let state = NumeralState::new(base, sign, digits, point)?;
            return Ok(Converted::Finite(state.trim()));
        }
        if let Some(&start) = seen.get(&remainder) {
            let period = fraction.split_off(start);
            return Ok(Converted::Periodic(PeriodicExpansion {
                base,
                sign,
                integer,
                preperiod: fraction,
                period,
            }));
        }
        seen.insert(remainder.clone(), fraction.len());
        remainder *= &base_big;
        let (digit, r) = remainder.div_rem(denom);
        fraction.push(digit.to_u32_digits().first().copied().unwrap_or(0));
        remainder = r;
    }
}

/// Result of re-expressing a numeral state in another base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Converted {
    /// The value is exactly representable in the target base.
    Finite(NumeralState),
    /// The expansion repeats forever; preperiod and period are detected.
    Periodic(PeriodicExpansion),
}

impl Converted {
    pub fn is_finite(&self) -> bool {
        matches!(self, Converted::Finite(_))
    }
}

/// An eventually periodic base-`k` digit expansion, such as
/// `1/6 = 0.1(6)` in base 10. Integer, preperiod and period digits are
/// stored most significant first (reading order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicExpansion {
    base: u32,
    sign: Sign,
    integer: Vec<u32>,
    preperiod: Vec<u32>,
    period: Vec<u32>,
}

impl PeriodicExpansion {
    /// Builds an expansion from parts, validating digit ranges. The period
    /// may be empty only for terminating expansions assembled by callers.
    pub fn new(
        base: u32,
        sign: Sign,
        integer: Vec<u32>,
        preperiod: Vec<u32>,
        period: Vec<u32>,
    ) -> Result<Self, NumeralError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base));
        }
        for &digit in integer.iter().chain(&preperiod).chain(&period) {
            if digit >= base {
                return Err(NumeralError::InvalidDigit { digit, base });
            }
        }
        Ok(PeriodicExpansion {
            base,
            sign,
            integer,
            preperiod,
            period,
        })
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Integer-part digits, most significant first; empty means 0.
    pub fn integer_digits(&self) -> &[u32] {
        &self.integer
    }

    /// Fractional digits before the repeating block, in reading order.
    pub fn preperiod_digits(&self) -> &[u32] {
        &self.preperiod
    }

    /// The repeating block, in reading order.
    pub fn period_digits(&self) -> &[u32] {
        &self.period
    }

    /// The exact value the infinite expansion denotes.
    pub fn value(&self) -> RationalValue {
        let base = BigInt::from(self.base);
        let digits_int = |ds: &[u32]| {
            let mut v = BigInt::zero();
            for &d in ds {
                v = &v * &base + BigInt::from(d);
            }
            v
        };
        let int_val = RationalValue::from_integer(digits_int(&self.integer));
        let a = self.preperiod.len() as u32;
        let pre_val = Ratio::new(digits_int(&self.preperiod), base.pow(a));
        let mut total = int_val + pre_val;
        if !self.period.is_empty() {
            let b = self.period.len() as u32;
            let denom = base.pow(a) * (base.pow(b) - BigInt::one());
            total += Ratio::new(digits_int(&self.period), denom);
        }
        if self.sign == Sign::Minus {
            total = -total;
        }
        total
    }

    /// Digit at a point-relative position (0 = units, -1 = first fractional
    /// digit), unrolling the period as needed.
    pub fn digit_at_position(&self, position: i64) -> u32 {
        if position >= 0 {
            let idx = position as usize;
            if idx >= self.integer.len() {
                0
            } else {
                self.integer[self.integer.len() - 1 - idx]
            }
        } else {
            let depth = (-position) as usize;
            if depth <= self.preperiod.len() {
                self.preperiod[depth - 1]
            } else if self.period.is_empty() {
                0
            } else {
                self.period[(depth - 1 - self.preperiod.len()) % self.period.len()]
            }
        }
    }

    /// Position of the most significant integer digit, or -1 when the
    /// integer part is empty.
    pub fn top_position(&self) -> i64 {
        self.integer.len() as i64 - 1
    }

    /// The numeral state carrying the first `n` fractional digits (preperiod
    /// followed by the unrolled period); within `base^{-n}` of the exact
    /// value.
    pub fn expand_to(&self, n: usize) -> Result<NumeralState, NumeralError> {
        let mut frac = Vec::with_capacity(n);
        frac.extend_from_slice(&self.preperiod);
        let mut i = 0usize;
        while frac.len() < n && !self.period.is_empty() {
            frac.push(self.period[i % self.period.len()]);
            i += 1;
        }
        frac.truncate(n);
        let mut digits: Vec<u32> = frac.iter().rev().copied().collect();
        digits.extend(self.integer.iter().rev());
        if digits.is_empty() {
            digits.push(0);
        }
        NumeralState::new(self.base, self.sign, digits, frac.len().min(n))
    }
}

impl fmt::Display for PeriodicExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == Sign::Minus {
            f.write_str("-")?;
        }
        let digit_char = |d: u32| char::from_digit(d, 36).unwrap_or('?');
        if self.integer.is_empty() {
            f.write_str("0")?;
        } else {
            for &d in &self.integer {
                write!(f, "{}", digit_char(d))?;
            }
        }
        f.write_str(".")?;
        for &d in &self.preperiod {
            write!(f, "{}", digit_char(d))?;
        }
        if !self.period.is_empty() {
            f.write_str("(")?;
            for &d in &self.period {
                write!(f, "{}", digit_char(d))?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A pair of numeral states holding the real and imaginary parts of a
/// complex rational value; both share the same base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexNumeral {
    re: NumeralState,
    im: NumeralState,
}

impl ComplexNumeral {
    pub fn new(re: NumeralState, im: NumeralState) -> Result<Self, NumeralError> {
        if re.base() != im.base() {
            return Err(NumeralError::BaseMismatch(re.base(), im.base()));
        }
        Ok(ComplexNumeral { re, im })
    }

    pub fn re(&self) -> &NumeralState {
        &self.re
    }

    pub fn im(&self) -> &NumeralState {
        &self.im
    }
}

// ----------------------------------------------------------------------
// Serde: the structured-text record {k, gamma, digits, m} with gamma as
// "+"/"-" and digits least significant first. Loading revalidates.
// ----------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NumeralStateRepr {
    k: u32,
    gamma: String,
    digits: Vec<u32>,
    m: usize,
}

impl Serialize for NumeralState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        NumeralStateRepr {
            k: self.base,
            gamma: self.sign.as_char().to_string(),
            digits: self.digits.clone(),
            m: self.point,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NumeralState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = NumeralStateRepr::deserialize(deserializer)?;
        let sign = match repr.gamma.as_str() {
            "+" => Sign::Plus,
            "-" | "\u{2212}" => Sign::Minus,
            other => {
                return Err(serde::de::Error::custom(format!(
                    "gamma must be \"+\" or \"-\", got {other:?}"
                )))
            }
        };
        NumeralState::new(repr.k, sign, repr.digits, repr.m).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        match s.as_str() {
            "+" => Ok(Sign::Plus),
            "-" | "\u{2212}" => Ok(Sign::Minus),
            other => Err(serde::de::Error::custom(format!(
                "sign must be \"+\" or \"-\", got {other:?}"
            ))),
        }
    }
}

/// Convenience constructor for rationals in tests and the CLI.
pub fn rational(numer: i64, denom: i64) -> RationalValue {
    Ratio::new(BigInt::from(numer), BigInt::from(denom))
}

/// Shared handle type for user-supplied evaluators.
pub type SharedFn<A, R> = Arc<dyn Fn(A) -> R + Send + Sync>;

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str, base: u32) -> NumeralState {
        NumeralState::parse_compact(text, base).unwrap()
    }

    #[test]
    fn paper_literals_value() {
        assert_eq!(s("3720+", 10).value(), rational(3720, 1));
        assert_eq!(s("-0474", 10).value(), rational(-474, 10_000));
        assert_eq!(s("12-71", 10).value(), rational(-1271, 100));
        assert_eq!(NumeralState::zero(2).unwrap().value(), rational(0, 1));
    }

    #[test]
    fn encode_round_trips_paper_values() {
        let state = NumeralState::encode(&rational(3720, 1), 10).unwrap();
        assert_eq!(state.format_compact().unwrap(), "3720+");
        let zero = NumeralState::encode(&rational(0, 1), 7).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero.point(), 0);
        assert_eq!(zero.sign(), Sign::Plus);
    }

    #[test]
    fn encode_rejects_foreign_primes() {
        // 1/6 in base 10: the factor 3 of the denominator never divides 10.
        let err = NumeralState::encode(&rational(1, 6), 10).unwrap_err();
        assert_eq!(err.name(), "NotRepresentable");
        // But 1/6 in base 6 is a single fractional digit.
        let ok = NumeralState::encode(&rational(1, 6), 6).unwrap();
        assert_eq!(ok.value(), rational(1, 6));
        assert_eq!(ok.point(), 1);
    }

    #[test]
    fn trim_matches_quoted_equality() {
        assert_eq!(s("013-470", 10).trim(), s("13-47", 10));
        assert_eq!(s("13-47", 10).trim(), s("13-47", 10));
        // Zero trims to the canonical |+0⟩ whatever its sign and padding.
        let neg_zero = NumeralState::new(10, Sign::Minus, vec![0, 0, 0], 0).unwrap();
        let trimmed = neg_zero.trim();
        assert_eq!(trimmed.sign(), Sign::Plus);
        assert_eq!(trimmed.digits(), &[0]);
        assert_eq!(trimmed.point(), 0);
    }

    #[test]
    fn trim_keeps_point_reachable() {
        // 0.001 base 10 must keep L = m = 3 even though only one digit is set.
        let state = NumeralState::power_of_base(10, -3).unwrap();
        assert_eq!(state.trim(), state);
        assert_eq!(state.len(), 3);
        assert_eq!(state.point(), 3);
    }

    #[test]
    fn pad_realizes_requested_shape() {
        let padded = s("13-47", 10).pad(6, 3).unwrap();
        assert_eq!(padded, s("013-470", 10));
        let zero = NumeralState::zero(10).unwrap();
        assert_eq!(zero.pad(1, 0).unwrap(), zero);
        let one = s("1+", 2);
        assert_eq!(one.pad(3, 1).unwrap(), s("01+0", 2));
        // The value 13.47 cannot live at point 1.
        assert_eq!(
            s("13-47", 10).pad(4, 1).unwrap_err().name(),
            "CannotAlign"
        );
    }

    #[test]
    fn eq_arith_is_value_equality() {
        assert!(s("013-470", 10).eq_arith(&s("13-47", 10)).unwrap());
        let a = s("12-71", 10);
        assert!(a.eq_arith(&a).unwrap());
        // "1+" is the integer 1; "10+" is the integer 2.
        assert!(!s("1+", 2).eq_arith(&s("10+", 2)).unwrap());
        // "1+0" is 1.0 in base 2: arithmetically equal to the integer 1
        // even though the labels are orthogonal.
        assert!(s("1+", 2).eq_arith(&s("1+0", 2)).unwrap());
        assert_eq!(
            s("1+", 2).eq_arith(&s("1+", 3)).unwrap_err().name(),
            "BaseMismatch"
        );
    }

    #[test]
    fn add_sub_abs_examples() {
        let diff = s("013-470", 10).sub_arith(&s("13-47", 10)).unwrap();
        assert!(diff.is_zero_value());
        assert_eq!(diff, NumeralState::zero(10).unwrap());
        // 5 + 2 = 7 in base 3: "12" + "2" = "21".
        let sum = s("12+", 3).add_arith(&s("2+", 3)).unwrap();
        assert_eq!(sum, s("21+", 3));
        assert_eq!(s("12-71", 10).abs_arith(), s("12+71", 10));
    }

    #[test]
    fn cmp_orders_by_value() {
        assert_eq!(s("1+", 2).cmp_arith(&s("10+", 2)).unwrap(), Ordering::Less);
        assert_eq!(
            s("0-1", 2).cmp_arith(&s("1+", 2)).unwrap(),
            Ordering::Less
        );
        assert_eq!(
            s("0+", 2).cmp_arith(&s("-0", 2)).unwrap(),
            Ordering::Equal
        );
    }

    #[test]
    fn ulp_successor_matches_quoted_example() {
        let state = s("100+111", 2);
        let next = state.succ_ulp();
        assert_eq!(next, s("101+000", 2));
        assert_eq!(next.pred_ulp(), state);
        // Carry out grows the string.
        let full = s("11+", 2);
        let grown = full.succ_ulp();
        assert_eq!(grown.value(), rational(4, 1));
        assert_eq!(grown.len(), 3);
        // Base-3 carry: 2 + 1 = 10.
        assert!(s("2+", 3).succ_ulp().eq_arith(&s("10+", 3)).unwrap());
        // Crossing zero.
        let below = NumeralState::zero(2).unwrap().pred_ulp();
        assert_eq!(below.value(), rational(-1, 1));
    }

    #[test]
    fn ulp_steps_by_point_scale() {
        let state = s("0+01", 2); // 0.25
        assert_eq!(state.succ_ulp().value(), rational(1, 2));
        assert_eq!(state.pred_ulp().value(), rational(0, 1));
    }

    #[test]
    fn convert_base_sixth_to_decimal() {
        let sixth = s("0+1", 6);
        assert_eq!(sixth.value(), rational(1, 6));
        match sixth.convert_base(10).unwrap() {
            Converted::Periodic(exp) => {
                assert_eq!(exp.integer_digits(), &[] as &[u32]);
                assert_eq!(exp.preperiod_digits(), &[1]);
                assert_eq!(exp.period_digits(), &[6]);
                assert_eq!(exp.value(), rational(1, 6));
                assert_eq!(exp.to_string(), "0.1(6)");
            }
            other => panic!("expected periodic, got {other:?}"),
        }
    }

    #[test]
    fn convert_base_identity_trims() {
        let a = s("013-470", 10);
        match a.convert_base(10).unwrap() {
            Converted::Finite(state) => assert_eq!(state, s("13-47", 10)),
            other => panic!("expected finite, got {other:?}"),
        }
    }

    #[test]
    fn convert_base_half_to_decimal() {
        let half = s("0+1", 2);
        match half.convert_base(10).unwrap() {
            Converted::Finite(state) => {
                assert_eq!(state.value(), rational(1, 2));
                assert_eq!(state.format_compact().unwrap(), "+5");
            }
            other => panic!("expected finite, got {other:?}"),
        }
    }

    #[test]
    fn periodic_expansion_prefixes_approach_value() {
        let exp = match s("0+1", 6).convert_base(10).unwrap() {
            Converted::Periodic(e) => e,
            other => panic!("unexpected {other:?}"),
        };
        for n in 1..=8 {
            let approx = exp.expand_to(n).unwrap().value();
            let err = (rational(1, 6) - approx).abs();
            let bound = Ratio::new(BigInt::one(), BigInt::from(10).pow(n as u32));
            assert!(err <= bound, "n={n}: err {err} > {bound}");
        }
    }

    #[test]
    fn compact_round_trip_and_errors() {
        for text in ["3720+", "-0474", "12-71", "100+111", "+", "0+"] {
            let base = if text.contains('7') || text.contains('4') || text.contains('2') {
                10
            } else {
                2
            };
            let state = s(text, base);
            assert_eq!(state.format_compact().unwrap(), text.replace('\u{2212}', "-"));
        }
        assert_eq!(
            NumeralState::parse_compact("12-71", 2).unwrap_err().name(),
            "ParseError"
        );
        assert_eq!(
            NumeralState::parse_compact("1234", 10).unwrap_err().name(),
            "ParseError"
        );
        assert_eq!(
            NumeralState::parse_compact("1+2-3", 10).unwrap_err().name(),
            "ParseError"
        );
        // Typographic minus parses like ASCII.
        assert_eq!(s("12\u{2212}71", 10), s("12-71", 10));
    }

    #[test]
    fn construction_validates_invariants() {
        assert_eq!(
            NumeralState::new(1, Sign::Plus, vec![0], 0).unwrap_err().name(),
            "InvalidBase"
        );
        assert_eq!(
            NumeralState::new(2, Sign::Plus, vec![2], 0).unwrap_err().name(),
            "InvalidDigit"
        );
        assert_eq!(
            NumeralState::new(2, Sign::Plus, vec![1], 2).unwrap_err().name(),
            "InvalidPoint"
        );
    }

    #[test]
    fn serde_record_shape() {
        let state = s("12-71", 10);
        let json = serde_json::to_string(&state).unwrap();
        assert_eq!(json, r#"{"k":10,"gamma":"-","digits":[1,7,2,1],"m":2}"#);
        let back: NumeralState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, state);
        // Invalid digits are rejected on load.
        let bad = r#"{"k":2,"gamma":"+","digits":[5],"m":0}"#;
        assert!(serde_json::from_str::<NumeralState>(bad).is_err());
    }
}
