//! Privacy amplification.
//!
//! Two backends share one contract: a public seed picks a deterministic map
//! from `input_len` raw bits to `output_len` key bits.
//!
//! * [`RandomTable`] draws every one of the `2^input_len` outputs
//!   independently and uniformly, i.e. a uniformly random map. It is only
//!   materializable for short inputs and is what the exact oracles use.
//! * [`ToeplitzHash`] multiplies the input by a seeded random binary
//!   Toeplitz matrix over GF(2), a 2-universal family usable at any length.
//!
//! Raw inputs are interpreted with raw bit `i` as bit `i` of the table index.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::info::entropy_of_counts;
use crate::rng::{derive_seed, label, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest input length a [`RandomTable`] may have.
pub const MAX_TABLE_INPUT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    RandomTable,
    UniversalHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub backend: Backend,
    #[serde(with = "crate::hexseed")]
    pub seed: u64,
    pub input_len: usize,
    pub output_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomTable {
    input_len: usize,
    output_len: usize,
    entries: Vec<u32>,
}

impl RandomTable {
    fn generate(seed: u64, input_len: usize, output_len: usize) -> Self {
        let mut rng = stream(derive_seed(seed, label::EXTRACTOR, 0), 0);
        let mask = low_mask(output_len) as u32;
        let entries = (0..1usize << input_len).map(|_| rng.random::<u32>() & mask).collect();
        Self { input_len, output_len, entries }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    #[inline]
    pub fn lookup(&self, index: usize) -> u32 {
        self.entries[index]
    }

    /// Test hook: overwrite one entry, e.g. to inject a collision.
    pub fn with_entry(mut self, index: usize, value: u32) -> Self {
        self.entries[index] = value & low_mask(self.output_len) as u32;
        self
    }
}

/// `y = T x` over GF(2) with `T[i][j] = d[i + input_len - 1 - j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzHash {
    input_len: usize,
    output_len: usize,
    diagonals: BitString,
}

impl ToeplitzHash {
    /// `diagonals` must hold `input_len + output_len - 1` bits (or be empty
    /// when either length is zero).
    pub fn from_diagonals(diagonals: BitString, input_len: usize, output_len: usize) -> Result<Self> {
        let want = (input_len + output_len).saturating_sub(1);
        let want = if input_len == 0 || output_len == 0 { 0 } else { want };
        if diagonals.len() != want {
            return Err(Error::Size(format!("{} diagonal bits, need {want}", diagonals.len())));
        }
        if output_len > input_len {
            return Err(Error::Backend("output longer than input".into()));
        }
        Ok(Self { input_len, output_len, diagonals })
    }

    fn generate(seed: u64, input_len: usize, output_len: usize) -> Self {
        let mut rng = stream(derive_seed(seed, label::EXTRACTOR, 1), 0);
        let len = if input_len == 0 || output_len == 0 { 0 } else { input_len + output_len - 1 };
        let diagonals = BitString::random(len, &mut rng);
        Self { input_len, output_len, diagonals }
    }

    /// Row `i` of the matrix.
    pub fn row(&self, i: usize) -> BitString {
        BitString::from_bits((0..self.input_len).map(|j| self.diagonals.get(i + self.input_len - 1 - j)))
    }

    fn apply(&self, raw: &BitString) -> BitString {
        let rev = raw.reversed();
        let x = rev.words();
        BitString::from_bits((0..self.output_len).map(|i| {
            let row = self.diagonals.window_words(i, self.input_len);
            row.iter().zip(x).map(|(a, b)| (a & b).count_ones()).sum::<u32>() & 1 == 1
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extractor {
    Table(RandomTable),
    Toeplitz(ToeplitzHash),
}

pub fn make_extractor(spec: &ExtractorSpec) -> Result<Extractor> {
    if spec.output_len > spec.input_len {
        return Err(Error::Backend(format!(
            "output_len {} exceeds input_len {}",
            spec.output_len, spec.input_len
        )));
    }
    match spec.backend {
        Backend::RandomTable => {
            if spec.input_len > MAX_TABLE_INPUT {
                return Err(Error::Backend(format!(
                    "random table needs input_len <= {MAX_TABLE_INPUT}, got {}",
                    spec.input_len
                )));
            }
            Ok(Extractor::Table(RandomTable::generate(spec.seed, spec.input_len, spec.output_len)))
        }
        Backend::UniversalHash => Ok(Extractor::Toeplitz(ToeplitzHash::generate(
            spec.seed,
            spec.input_len,
            spec.output_len,
        ))),
    }
}

impl Extractor {
    pub fn input_len(&self) -> usize {
        match self {
            Extractor::Table(t) => t.input_len,
            Extractor::Toeplitz(h) => h.input_len,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Extractor::Table(t) => t.output_len,
            Extractor::Toeplitz(h) => h.output_len,
        }
    }

    pub fn extract(&self, raw: &BitString) -> Result<BitString> {
        if raw.len() != self.input_len() {
            return Err(Error::Size(format!(
                "extractor takes {} bits, got {}",
                self.input_len(),
                raw.len()
            )));
        }
        Ok(match self {
            Extractor::Table(t) => {
                let index = raw.to_u64().expect("table inputs fit in a word") as usize;
                BitString::from_u64(t.lookup(index) as u64, t.output_len)
            }
            Extractor::Toeplitz(h) => h.apply(raw),
        })
    }

    /// Entropy of the output under a uniform input, by exhaustive scan.
    pub fn output_entropy(&self) -> Result<f64> {
        let (inp, out) = (self.input_len(), self.output_len());
        if inp > MAX_TABLE_INPUT {
            return Err(Error::Backend(format!("exhaustive scan over {inp} input bits")));
        }
        let mut counts = vec![0u64; 1 << out];
        match self {
            Extractor::Table(t) => t.entries.iter().for_each(|&v| counts[v as usize] += 1),
            Extractor::Toeplitz(_) => {
                for x in 0..1u64 << inp {
                    let y = self.extract(&BitString::from_u64(x, inp))?;
                    counts[y.to_u64().unwrap() as usize] += 1;
                }
            }
        }
        Ok(entropy_of_counts(&counts))
    }
}

fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// The three public extractor seeds Bob publishes: one for the selector pad
/// `S_L`, one each for `S0` and `S1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractorSeeds {
    #[serde(with = "crate::hexseed")]
    pub selector: u64,
    #[serde(with = "crate::hexseed")]
    pub key0: u64,
    #[serde(with = "crate::hexseed")]
    pub key1: u64,
}

impl ExtractorSeeds {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { selector: rng.random(), key0: rng.random(), key1: rng.random() }
    }

    /// The `index`-th member of a reproducible seed family.
    pub fn derived(master: u64, index: u64) -> Self {
        let base = derive_seed(master, label::ORACLE_SEEDS, index);
        Self {
            selector: derive_seed(base, 0, 0),
            key0: derive_seed(base, 0, 1),
            key1: derive_seed(base, 0, 2),
        }
    }
}

/// Extractors for `S_L`, `S0`, `S1` of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyExtractors {
    pub selector: Extractor,
    pub key0: Extractor,
    pub key1: Extractor,
}

impl KeyExtractors {
    /// `selector: gtilde_l -> 2 * set_size` bits, `key0/key1: set_size + gtilde_s -> m` bits.
    pub fn new(
        backend: Backend,
        seeds: &ExtractorSeeds,
        selector_input: usize,
        selector_output: usize,
        key_input: usize,
        key_output: usize,
    ) -> Result<Self> {
        let spec = |seed, input_len, output_len| ExtractorSpec { backend, seed, input_len, output_len };
        Ok(Self {
            selector: make_extractor(&spec(seeds.selector, selector_input, selector_output))?,
            key0: make_extractor(&spec(seeds.key0, key_input, key_output))?,
            key1: make_extractor(&spec(seeds.key1, key_input, key_output))?,
        })
    }

    pub fn key(&self, which: bool) -> &Extractor {
        if which {
            &self.key1
        } else {
            &self.key0
        }
    }
}

/// Alice's three keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeyBundle {
    pub s_l: BitString,
    pub s0: BitString,
    pub s1: BitString,
    pub seeds: ExtractorSeeds,
}

impl KeyBundle {
    pub fn key(&self, which: bool) -> &BitString {
        if which {
            &self.s1
        } else {
            &self.s0
        }
    }
}
