//! The degraded broadcast channel: BEC(eps1) to Bob, followed by BEC(eps2)
//! from Bob's output to Eve.

use crate::bits::BitString;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    epsilon1: f64,
    epsilon2: f64,
}

impl ChannelParams {
    pub fn new(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        for (name, p) in [("epsilon1", epsilon1), ("epsilon2", epsilon2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Channel(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(Self { epsilon1, epsilon2 })
    }

    /// Alice to Bob erasure probability.
    pub fn epsilon1(&self) -> f64 {
        self.epsilon1
    }

    /// Erasure probability of the second stage (Bob's output to Eve).
    pub fn epsilon2(&self) -> f64 {
        self.epsilon2
    }

    /// Marginal erasure probability seen by Eve.
    pub fn eve_erasure_probability(&self) -> f64 {
        self.epsilon1 + (1.0 - self.epsilon1) * self.epsilon2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Zero,
    One,
    Erased,
}

/// A string over `{0, 1, e}`, stored as a value plane and an erasure plane.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct ErasedString {
    values: BitString,
    erased: BitString,
}

impl ErasedString {
    /// Builds from a bit string and an erasure mask of equal length.
    /// Values under erased positions are dropped.
    pub fn from_parts(bits: &BitString, erased: &BitString) -> Result<Self> {
        if bits.len() != erased.len() {
            return Err(Error::Size(format!(
                "{} value bits vs {} erasure flags",
                bits.len(),
                erased.len()
            )));
        }
        let values = BitString::from_bits((0..bits.len()).map(|i| bits.get(i) && !erased.get(i)));
        Ok(Self { values, erased: erased.clone() })
    }

    pub fn from_symbols<I: IntoIterator<Item = Symbol>>(symbols: I) -> Self {
        let mut values = BitString::default();
        let mut erased = BitString::default();
        for s in symbols {
            values.push(s == Symbol::One);
            erased.push(s == Symbol::Erased);
        }
        Self { values, erased }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Symbol {
        if self.erased.get(i) {
            Symbol::Erased
        } else if self.values.get(i) {
            Symbol::One
        } else {
            Symbol::Zero
        }
    }

    pub fn is_erased(&self, i: usize) -> bool {
        self.erased.get(i)
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn erasure_mask(&self) -> &BitString {
        &self.erased
    }

    /// Known bits; erased positions read as zero.
    pub fn value_bits(&self) -> &BitString {
        &self.values
    }

    pub fn erasure_count(&self) -> usize {
        self.erased.count_ones()
    }
}

impl std::fmt::Debug for ErasedString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: String = self
            .symbols()
            .map(|s| match s {
                Symbol::Zero => '0',
                Symbol::One => '1',
                Symbol::Erased => 'e',
            })
            .collect();
        write!(f, "ErasedString({s})")
    }
}

/// Sends `x` through the cascade. Per index: stage one erases with
/// probability eps1, stage two erases a surviving symbol with probability
/// eps2, and an erasure at Bob is always an erasure at Eve.
pub fn transmit<R: Rng + ?Sized>(
    x: &BitString,
    params: &ChannelParams,
    rng: &mut R,
) -> (ErasedString, ErasedString) {
    let n = x.len();
    let mut y_erased = BitString::zeros(n);
    let mut z_erased = BitString::zeros(n);
    for i in 0..n {
        let first = rng.random_bool(params.epsilon1);
        let second = rng.random_bool(params.epsilon2);
        y_erased.set(i, first);
        z_erased.set(i, first || second);
    }
    let y = ErasedString::from_parts(x, &y_erased).expect("lengths match");
    let z = ErasedString::from_parts(x, &z_erased).expect("lengths match");
    (y, z)
}

/// Fraction of erased symbols; 0 for an empty string.
pub fn erasure_fraction(s: &ErasedString) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.erasure_count() as f64 / s.len() as f64
}
