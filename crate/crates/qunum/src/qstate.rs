//! Sparse superpositions over the numeral basis and the quantum-side
//! operations on them.
//!
//! A [`StringSuperposition`] is a finite complex-amplitude map over
//! [`NumeralState`] labels sharing one base — a vector in the Fock space
//! spanned by strings of every length and point position. Distinct labels
//! are orthogonal even when they are arithmetically equal; that distinction
//! is the whole reason this module exists.
//!
//! Amplitudes are machine-precision complex numbers. Exactness lives only
//! in the basis labels: [`prob_arith_close`](StringSuperposition::prob_arith_close)
//! compares label *values* with exact rational arithmetic and only the
//! probability weights are floating point.

use std::collections::BTreeMap;

use num::complex::Complex;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeral::{NumeralError, NumeralState, RationalValue};

pub type Complex64 = Complex<f64>;

/// Construction-time unitarity tolerance for gauge maps.
pub const GAUGE_UNITARITY_TOL: f64 = 1e-10;

/// Default loader tolerance on `|norm² - 1|` for serialized states.
pub const LOAD_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("BaseMismatch: state bases {0} and {1} differ")]
    BaseMismatch(u32, u32),
    #[error("DimensionMismatch: gauge map is {map} x {map} but states have base {state}")]
    DimensionMismatch { map: u32, state: u32 },
    #[error("NotUnitary: gauge matrix deviates from unitarity by {0:.3e}")]
    NotUnitary(f64),
    #[error("NotNormalized: norm² = {0} deviates from 1 beyond tolerance")]
    NotNormalized(f64),
    #[error(transparent)]
    Numeral(#[from] NumeralError),
}

impl StateError {
    pub fn name(&self) -> &'static str {
        match self {
            StateError::BaseMismatch(..) => "BaseMismatch",
            StateError::DimensionMismatch { .. } => "DimensionMismatch",
            StateError::NotUnitary(_) => "NotUnitary",
            StateError::NotNormalized(_) => "NotNormalized",
            StateError::Numeral(e) => e.name(),
        }
    }
}

/// The two basis-wise arithmetic operations that lift to superpositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
}

impl ArithOp {
    fn apply(self, a: &NumeralState, b: &NumeralState) -> Result<NumeralState, NumeralError> {
        match self {
            ArithOp::Add => a.add_arith(b),
            ArithOp::Sub => a.sub_arith(b),
        }
    }
}

/// A sparse complex-amplitude vector over numeral basis labels of one base.
/// Deterministic iteration order (labels are ordered), pure operations.
#[derive(Debug, Clone, PartialEq)]
pub struct StringSuperposition {
    base: u32,
    amps: BTreeMap<NumeralState, Complex64>,
}

/// One serialized amplitude entry: a basis label with its complex amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplitudeRecord {
    pub label: NumeralState,
    pub re: f64,
    pub im: f64,
}

impl StringSuperposition {
    /// The empty (zero) vector over base-`base` labels.
    pub fn new(base: u32) -> Result<Self, StateError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base).into());
        }
        Ok(StringSuperposition {
            base,
            amps: BTreeMap::new(),
        })
    }

    /// The basis vector `|a⟩` with amplitude 1.
    pub fn basis(label: NumeralState) -> Self {
        let base = label.base();
        let mut amps = BTreeMap::new();
        amps.insert(label, Complex64::one());
        StringSuperposition { base, amps }
    }

    /// Builds a superposition from `(label, amplitude)` terms; amplitudes on
    /// coinciding labels are summed.
    pub fn superpose<I>(base: u32, terms: I) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (NumeralState, Complex64)>,
    {
        let mut state = Self::new(base)?;
        for (label, amp) in terms {
            state.add_term(label, amp)?;
        }
        Ok(state)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    /// Number of stored basis labels.
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Adds `amp` onto the amplitude of `label`.
    pub fn add_term(&mut self, label: NumeralState, amp: Complex64) -> Result<(), StateError> {
        if label.base() != self.base {
            return Err(StateError::BaseMismatch(self.base, label.base()));
        }
        *self.amps.entry(label).or_insert_with(Complex64::zero) += amp;
        Ok(())
    }

    /// The amplitude of a basis label (zero when absent).
    pub fn amplitude(&self, label: &NumeralState) -> Complex64 {
        self.amps.get(label).copied().unwrap_or_else(Complex64::zero)
    }

    /// Iterates `(label, amplitude)` in label order.
    pub fn iter(&self) -> impl Iterator<Item = (&NumeralState, &Complex64)> {
        self.amps.iter()
    }

    /// Drops entries with |amplitude|² at or below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        self.amps.retain(|_, amp| amp.norm_sqr() > threshold);
    }

    /// Total squared magnitude `Σ |c|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    /// Scales to unit norm; the zero vector is left untouched.
    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return;
        }
        for amp in self.amps.values_mut() {
            *amp /= norm;
        }
    }

    /// Sesquilinear inner product `⟨self|other⟩`, conjugating `self`.
    pub fn inner_product(&self, other: &Self) -> Result<Complex64, StateError> {
        if self.base != other.base {
            return Err(StateError::BaseMismatch(self.base, other.base));
        }
        let mut acc = Complex64::zero();
        for (label, amp) in &self.amps {
            if let Some(other_amp) = other.amps.get(label) {
                acc += amp.conj() * other_amp;
            }
        }
        Ok(acc)
    }

    /// Basis-wise lifted arithmetic: `Σ_{a,b} c_a d_b |op(a,b)⟩`, with
    /// amplitudes over coinciding result labels summed. On two basis vectors
    /// this reproduces the numeral operation exactly.
    pub fn lift_arith(&self, op: ArithOp, other: &Self) -> Result<Self, StateError> {
        if self.base != other.base {
            return Err(StateError::BaseMismatch(self.base, other.base));
        }
        let mut out = Self::new(self.base)?;
        for (a, ca) in &self.amps {
            for (b, db) in &other.amps {
                let label = op.apply(a, b)?;
                out.add_term(label, ca * db)?;
            }
        }
        Ok(out)
    }

    /// The probability that independent component measurements of the two
    /// states land on labels whose values differ by at most `k^{-ell}`:
    /// `Σ |c_a|²·|d_b|²` over label pairs with `|value(a) - value(b)| <= k^{-ell}`.
    /// The value comparison is exact.
    pub fn prob_arith_close(&self, other: &Self, ell: u32) -> Result<f64, StateError> {
        if self.base != other.base {
            return Err(StateError::BaseMismatch(self.base, other.base));
        }
        let threshold = RationalValue::new(
            num::BigInt::one(),
            num::BigInt::from(self.base).pow(ell),
        );
        let left: Vec<(RationalValue, f64)> = self
            .amps
            .iter()
            .map(|(l, c)| (l.value(), c.norm_sqr()))
            .collect();
        let right: Vec<(RationalValue, f64)> = other
            .amps
            .iter()
            .map(|(l, c)| (l.value(), c.norm_sqr()))
            .collect();
        let mut prob = 0.0;
        for (va, wa) in &left {
            for (vb, wb) in &right {
                if (va - vb).abs() <= threshold {
                    prob += wa * wb;
                }
            }
        }
        Ok(prob)
    }

    /// Applies a gauge map: the single-qukit unitary acts on every digit
    /// tensor factor of every label (and the optional 2x2 unitary on the
    /// sign qubit). Norm is preserved up to the map's unitarity tolerance.
    pub fn gauge_transform(&self, gauge: &GaugeMap) -> Result<Self, StateError> {
        if gauge.base != self.base {
            return Err(StateError::DimensionMismatch {
                map: gauge.base,
                state: self.base,
            });
        }
        let k = self.base as usize;
        let mut out = Self::new(self.base)?;
        for (label, amp) in &self.amps {
            // Expand ⊗_j U|s(j)⟩ into k^L weighted digit strings.
            let mut partial: Vec<(Vec<u32>, Complex64)> = vec![(Vec::new(), *amp)];
            for &digit in label.digits() {
                let mut next = Vec::with_capacity(partial.len() * k);
                for (prefix, acc) in &partial {
                    for new_digit in 0..k {
                        let weight = gauge.matrix[new_digit * k + digit as usize];
                        if weight.norm_sqr() == 0.0 {
                            continue;
                        }
                        let mut extended = prefix.clone();
                        extended.push(new_digit as u32);
                        next.push((extended, acc * weight));
                    }
                }
                partial = next;
            }
            let signs: Vec<(crate::numeral::Sign, Complex64)> = match &gauge.sign_matrix {
                None => vec![(label.sign(), Complex64::one())],
                Some(v) => {
                    let from = sign_index(label.sign());
                    [crate::numeral::Sign::Plus, crate::numeral::Sign::Minus]
                        .into_iter()
                        .map(|to| (to, v[sign_index(to)][from]))
                        .filter(|(_, w)| w.norm_sqr() != 0.0)
                        .collect()
                }
            };
            for (digits, acc) in &partial {
                for (sign, sign_weight) in &signs {
                    let new_label =
                        NumeralState::new(self.base, *sign, digits.clone(), label.point())?;
                    out.add_term(new_label, acc * sign_weight)?;
                }
            }
        }
        Ok(out)
    }

    /// The serialized form: one record per stored label.
    pub fn to_records(&self) -> Vec<AmplitudeRecord> {
        self.amps
            .iter()
            .map(|(label, amp)| AmplitudeRecord {
                label: label.clone(),
                re: amp.re,
                im: amp.im,
            })
            .collect()
    }

    /// Rebuilds a state from records, revalidating bases and recomputing the
    /// norm. Unless `allow_unnormalized` is set, a norm² further than
    /// [`LOAD_NORM_TOL`] from 1 is rejected.
    pub fn from_records(
        base: u32,
        records: Vec<AmplitudeRecord>,
        allow_unnormalized: bool,
    ) -> Result<Self, StateError> {
        let mut state = Self::new(base)?;
        for rec in records {
            state.add_term(rec.label, Complex64::new(rec.re, rec.im))?;
        }
        let norm_sqr = state.norm_sqr();
        if !allow_unnormalized && (norm_sqr - 1.0).abs() > LOAD_NORM_TOL {
            return Err(StateError::NotNormalized(norm_sqr));
        }
        Ok(state)
    }
}

fn sign_index(sign: crate::numeral::Sign) -> usize {
    match sign {
        crate::numeral::Sign::Plus => 0,
        crate::numeral::Sign::Minus => 1,
    }
}

/// A gauge (basis) choice realized as one `k x k` unitary applied uniformly
/// to each qukit, plus an optional 2x2 unitary for the sign qubit.
#[derive(Debug, Clone)]
pub struct GaugeMap {
    base: u32,
    /// Row-major `k x k` entries; `matrix[to * k + from]`.
    matrix: Vec<Complex64>,
    sign_matrix: Option<[[Complex64; 2]; 2]>,
}

impl GaugeMap {
    /// Builds a gauge map from a row-major `k x k` matrix, verifying
    /// `U†U = 1` within [`GAUGE_UNITARITY_TOL`].
    pub fn from_matrix(base: u32, matrix: Vec<Complex64>) -> Result<Self, StateError> {
        if base < 2 {
            return Err(NumeralError::InvalidBase(base).into());
        }
        let k = base as usize;
        if matrix.len() != k * k {
            return Err(StateError::DimensionMismatch {
                map: (matrix.len() as f64).sqrt() as u32,
                state: base,
            });
        }
        let deviation = unitarity_deviation(&matrix, k);
        if deviation > GAUGE_UNITARITY_TOL {
            return Err(StateError::NotUnitary(deviation));
        }
        Ok(GaugeMap {
            base,
            matrix,
            sign_matrix: None,
        })
    }

    /// The identity gauge.
    pub fn identity(base: u32) -> Result<Self, StateError> {
        let k = base as usize;
        let mut matrix = vec![Complex64::zero(); k * k];
        for i in 0..k {
            matrix[i * k + i] = Complex64::one();
        }
        Self::from_matrix(base, matrix)
    }

    /// The discrete Fourier gauge `U[a][b] = ω^{ab}/√k`; for `k = 2` this is
    /// the Hadamard transform.
    pub fn fourier(base: u32) -> Result<Self, StateError> {
        let k = base as usize;
        let scale = 1.0 / (k as f64).sqrt();
        let mut matrix = vec![Complex64::zero(); k * k];
        for a in 0..k {
            for b in 0..k {
                let angle = std::f64::consts::TAU * (a * b % k) as f64 / k as f64;
                matrix[a * k + b] = Complex64::from_polar(scale, angle);
            }
        }
        Self::from_matrix(base, matrix)
    }

    /// Attaches a 2x2 unitary acting on the sign qubit.
    pub fn with_sign_matrix(mut self, m: [[Complex64; 2]; 2]) -> Result<Self, StateError> {
        let flat = vec![m[0][0], m[0][1], m[1][0], m[1][1]];
        let deviation = unitarity_deviation(&flat, 2);
        if deviation > GAUGE_UNITARITY_TOL {
            return Err(StateError::NotUnitary(deviation));
        }
        self.sign_matrix = Some(m);
        Ok(self)
    }

    /// The adjoint map (inverse gauge).
    pub fn adjoint(&self) -> Self {
        let k = self.base as usize;
        let mut matrix = vec![Complex64::zero(); k * k];
        for a in 0..k {
            for b in 0..k {
                matrix[a * k + b] = self.matrix[b * k + a].conj();
            }
        }
        let sign_matrix = self.sign_matrix.map(|m| {
            [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ]
        });
        GaugeMap {
            base: self.base,
            matrix,
            sign_matrix,
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }
}

fn unitarity_deviation(matrix: &[Complex64], k: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let mut entry = Complex64::zero();
            for r in 0..k {
                entry += matrix[r * k + i].conj() * matrix[r * k + j];
            }
            let expected = if i == j {
                Complex64::one()
            } else {
                Complex64::zero()
            };
            worst = worst.max((entry - expected).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeral::Sign;

    fn s(text: &str, base: u32) -> NumeralState {
        NumeralState::parse_compact(text, base).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn arithmetically_equal_labels_are_orthogonal() {
        let a = StringSuperposition::basis(s("013-470", 10));
        let b = StringSuperposition::basis(s("13-47", 10));
        assert_eq!(a.inner_product(&b).unwrap(), Complex64::zero());
        assert!(s("013-470", 10).eq_arith(&s("13-47", 10)).unwrap());
    }

    #[test]
    fn inner_product_norm_and_projection() {
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StringSuperposition::superpose(
            2,
            [(s("0+", 2), c(w)), (s("1+", 2), c(w))],
        )
        .unwrap();
        let norm = psi.inner_product(&psi).unwrap();
        assert!((norm.re - 1.0).abs() < 1e-12 && norm.im == 0.0);
        let onto = psi.inner_product(&StringSuperposition::basis(s("0+", 2))).unwrap();
        assert!((onto.re - w).abs() < 1e-12);
    }

    #[test]
    fn lift_sub_of_basis_state_with_itself_is_zero() {
        let a = StringSuperposition::basis(s("13-47", 10));
        let out = a.lift_arith(ArithOp::Sub, &a).unwrap();
        assert_eq!(out.len(), 1);
        let zero = NumeralState::zero(10).unwrap();
        assert!((out.amplitude(&zero) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn lift_add_shifts_each_component() {
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StringSuperposition::superpose(
            2,
            [(s("1+", 2), c(w)), (s("10+", 2), c(w))],
        )
        .unwrap();
        let one = StringSuperposition::basis(s("1+", 2));
        let out = psi.lift_arith(ArithOp::Add, &one).unwrap();
        assert!((out.amplitude(&s("10+", 2)) - c(w)).norm() < 1e-12);
        assert!((out.amplitude(&s("11+", 2)) - c(w)).norm() < 1e-12);
    }

    #[test]
    fn lift_sub_collides_on_zero() {
        // (|1⟩+|11⟩)/√2 minus itself: the two equal-label pairs collide on
        // |+0⟩ with amplitude ½+½, the cross pairs give ±2 at ½ each.
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StringSuperposition::superpose(
            2,
            [(s("1+", 2), c(w)), (s("11+", 2), c(w))],
        )
        .unwrap();
        let out = psi.lift_arith(ArithOp::Sub, &psi).unwrap();
        let zero = NumeralState::zero(2).unwrap();
        assert!((out.amplitude(&zero) - c(1.0)).norm() < 1e-12);
        assert!((out.amplitude(&s("10+", 2)) - c(0.5)).norm() < 1e-12);
        assert!((out.amplitude(&s("10-", 2)) - c(0.5)).norm() < 1e-12);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn prob_arith_close_examples() {
        let zero = StringSuperposition::basis(s("0+", 2));
        let one = StringSuperposition::basis(s("1+", 2));
        for ell in 0..5 {
            assert_eq!(zero.prob_arith_close(&zero, ell).unwrap(), 1.0);
        }
        // |0 - 1| = 1 > 1/2.
        assert_eq!(zero.prob_arith_close(&one, 1).unwrap(), 0.0);
        // But 1 <= 2^0, so ell = 0 accepts the pair.
        assert_eq!(zero.prob_arith_close(&one, 0).unwrap(), 1.0);
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let mix = StringSuperposition::superpose(
            2,
            [(s("0+", 2), c(w)), (s("1+", 2), c(w))],
        )
        .unwrap();
        let p = mix.prob_arith_close(&mix, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "two of four pairs pass, got {p}");
    }

    #[test]
    fn prob_is_symmetric_and_monotone_in_ell() {
        let a = StringSuperposition::superpose(
            2,
            [(s("0+", 2), c(0.6)), (s("0+1", 2), c(0.8))],
        )
        .unwrap();
        let b = StringSuperposition::superpose(
            2,
            [(s("1+", 2), c(0.6)), (s("0+01", 2), c(0.8))],
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for ell in 0..6 {
            let p = a.prob_arith_close(&b, ell).unwrap();
            let q = b.prob_arith_close(&a, ell).unwrap();
            assert!((p - q).abs() < 1e-15);
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    #[test]
    fn identity_gauge_is_identity() {
        let psi = StringSuperposition::superpose(
            3,
            [(s("12+", 3), c(0.6)), (s("2+1", 3), c(0.8))],
        )
        .unwrap();
        let out = psi.gauge_transform(&GaugeMap::identity(3).unwrap()).unwrap();
        for (label, amp) in psi.iter() {
            assert!((out.amplitude(label) - amp).norm() < 1e-12);
        }
    }

    #[test]
    fn hadamard_splits_single_qukit() {
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let hadamard = GaugeMap::from_matrix(
            2,
            vec![c(w), c(w), c(w), c(-w)],
        )
        .unwrap();
        let zero = StringSuperposition::basis(NumeralState::zero(2).unwrap());
        let out = zero.gauge_transform(&hadamard).unwrap();
        assert!((out.amplitude(&s("0+", 2)) - c(w)).norm() < 1e-12);
        assert!((out.amplitude(&s("1+", 2)) - c(w)).norm() < 1e-12);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gauge_then_adjoint_returns_state() {
        let psi = StringSuperposition::superpose(
            2,
            [
                (s("10+1", 2), Complex64::new(0.5, 0.1)),
                (s("0-11", 2), Complex64::new(-0.3, 0.7)),
            ],
        )
        .unwrap();
        let g = GaugeMap::fourier(2)
            .unwrap()
            .with_sign_matrix([
                [c(std::f64::consts::FRAC_1_SQRT_2), c(std::f64::consts::FRAC_1_SQRT_2)],
                [c(std::f64::consts::FRAC_1_SQRT_2), c(-std::f64::consts::FRAC_1_SQRT_2)],
            ])
            .unwrap();
        let there = psi.gauge_transform(&g).unwrap();
        assert!((there.norm_sqr() - psi.norm_sqr()).abs() < 1e-10);
        let mut back = there.gauge_transform(&g.adjoint()).unwrap();
        back.prune(1e-20);
        for (label, amp) in psi.iter() {
            assert!(
                (back.amplitude(label) - amp).norm() < 1e-9,
                "label {label} diverged"
            );
        }
    }

    #[test]
    fn fourier_is_unitary_for_larger_bases() {
        for k in 2..=6 {
            let g = GaugeMap::fourier(k).unwrap();
            let psi = StringSuperposition::basis(NumeralState::from_integer(k, 1).unwrap());
            let out = psi.gauge_transform(&g).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let err = GaugeMap::from_matrix(2, vec![c(1.0), c(1.0), c(0.0), c(1.0)]).unwrap_err();
        assert_eq!(err.name(), "NotUnitary");
    }

    #[test]
    fn base_mismatch_is_reported() {
        let a = StringSuperposition::basis(s("1+", 2));
        let b = StringSuperposition::basis(s("1+", 3));
        assert_eq!(a.inner_product(&b).unwrap_err().name(), "BaseMismatch");
        assert_eq!(
            a.lift_arith(ArithOp::Add, &b).unwrap_err().name(),
            "BaseMismatch"
        );
        assert_eq!(a.prob_arith_close(&b, 1).unwrap_err().name(), "BaseMismatch");
        let g3 = GaugeMap::identity(3).unwrap();
        assert_eq!(
            a.gauge_transform(&g3).unwrap_err().name(),
            "DimensionMismatch"
        );
    }

    #[test]
    fn record_round_trip_enforces_norm() {
        let w = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StringSuperposition::superpose(
            2,
            [(s("0+", 2), c(w)), (s("1+", 2), c(w))],
        )
        .unwrap();
        let records = psi.to_records();
        let back = StringSuperposition::from_records(2, records.clone(), false).unwrap();
        assert_eq!(back, psi);
        // Doubling every amplitude breaks the norm gate unless allowed.
        let loud: Vec<AmplitudeRecord> = records
            .iter()
            .map(|r| AmplitudeRecord {
                label: r.label.clone(),
                re: r.re * 2.0,
                im: r.im * 2.0,
            })
            .collect();
        assert_eq!(
            StringSuperposition::from_records(2, loud.clone(), false)
                .unwrap_err()
                .name(),
            "NotNormalized"
        );
        assert!(StringSuperposition::from_records(2, loud, true).is_ok());
        let _ = Sign::Plus;
    }
}
