//! Brute-force oracles shared by the property and acceptance suites.
//!
//! Everything here recomputes from raw label fields with big-rational
//! arithmetic and stays independent of the digit-level implementation
//! paths it is used to check.

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{One, Zero};
use qunum::numeral::{NumeralState, RationalValue, Sign};

/// Independent recomputation of `γ · Σ s(j)·k^j · k^{-m}` from the raw
/// fields. Deliberately does not call `NumeralState::value`.
pub fn oracle_value(state: &NumeralState) -> RationalValue {
    let k = BigInt::from(state.base());
    let mut l = BigInt::zero();
    let mut weight = BigInt::one();
    for &d in state.digits() {
        l += BigInt::from(d) * &weight;
        weight *= &k;
    }
    if state.sign() == Sign::Minus {
        l = -l;
    }
    Ratio::new(l, k.pow(state.point() as u32))
}

/// Every valid state with the given base and length at most `max_len`:
/// all digit strings, all point positions, both signs.
pub fn all_states(base: u32, max_len: usize) -> Vec<NumeralState> {
    let mut out = Vec::new();
    for len in 0..=max_len {
        let mut digits = vec![0u32; len];
        loop {
            for point in 0..=len {
                for sign in [Sign::Plus, Sign::Minus] {
                    out.push(
                        NumeralState::new(base, sign, digits.clone(), point)
                            .expect("enumerated states are valid"),
                    );
                }
            }
            // Odometer increment over base-k digit strings.
            let mut i = 0;
            loop {
                if i == len {
                    break;
                }
                digits[i] += 1;
                if digits[i] < base {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == len {
                break;
            }
        }
    }
    out
}

/// The prime factors of `n`, by trial division (oracle-side only).
pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

pub fn rational(n: i64, d: i64) -> RationalValue {
    Ratio::new(BigInt::from(n), BigInt::from(d))
}
