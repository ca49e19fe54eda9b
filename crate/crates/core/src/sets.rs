//! Index sets of the protocol and Bob's set bookkeeping.

use crate::bits::BitString;
use crate::channel::ErasedString;
use crate::error::{AbortReason, Error, Result};
use crate::protocol::ProtocolConfig;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Strictly increasing list of channel indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IndexSet("indices must be strictly increasing".into()));
        }
        Ok(IndexSet(v))
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl IndexSet {
    /// Sorts `indices`; duplicates are an error.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::IndexSet(format!("duplicate index {}", w[0])));
        }
        Ok(IndexSet(indices))
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    pub fn range(n: usize) -> Self {
        IndexSet((0..n).collect())
    }

    pub fn from_mask(mask: u64) -> Self {
        IndexSet((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    /// Bit mask of the set; only valid when every index is below 64.
    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| {
            assert!(i < 64, "to_mask needs indices below 64");
            m | 1 << i
        })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => {
                    if x < y {
                        v.push(x);
                        a.next();
                    } else if y < x {
                        v.push(y);
                        b.next();
                    } else {
                        v.push(x);
                        a.next();
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    v.push(x);
                    a.next();
                }
                (None, Some(&&y)) => {
                    v.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        IndexSet(v)
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|&i| !other.contains(i)).collect())
    }

    pub fn first_common(&self, other: &IndexSet) -> Option<usize> {
        self.0.iter().copied().find(|&i| other.contains(i))
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    /// Elements at sorted positions `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> IndexSet {
        IndexSet(self.0[start..start + len].to_vec())
    }
}

/// Every index set Bob forms in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetFamily {
    pub e: IndexSet,
    pub ebar: IndexSet,
    pub g: IndexSet,
    pub b: IndexSet,
    pub gtilde: IndexSet,
    pub btilde: IndexSet,
    pub gtilde_l: IndexSet,
    pub gtilde_s: IndexSet,
    pub l0: IndexSet,
    pub l1: IndexSet,
    pub l: IndexSet,
    pub q: BitString,
}

impl SetFamily {
    /// `L_U`, the set carrying the chosen string.
    pub fn chosen(&self, u: bool) -> &IndexSet {
        if u {
            &self.l1
        } else {
            &self.l0
        }
    }

    /// Checks every structural invariant against block length `n`.
    pub fn check_invariants(&self, n: usize) -> Result<()> {
        let fail = |what: &str| Err(Error::IndexSet(format!("set family invariant: {what}")));
        if self.e.first_common(&self.ebar).is_some() || self.e.len() + self.ebar.len() != n {
            return fail("E and Ebar must partition [0, n)");
        }
        if self.e.iter().chain(self.ebar.iter()).any(|i| i >= n) {
            return fail("index out of range");
        }
        if !self.g.is_subset(&self.ebar) || !self.b.is_subset(&self.e) {
            return fail("G in Ebar, B in E");
        }
        if self.gtilde != self.ebar.difference(&self.g) || self.btilde != self.e.difference(&self.b) {
            return fail("Gtilde = Ebar \\ G, Btilde = E \\ B");
        }
        let (lcount, scount) = (self.gtilde_l.len(), self.gtilde_s.len());
        if lcount + scount > self.gtilde.len()
            || self.gtilde_l != self.gtilde.slice(0, lcount)
            || self.gtilde_s != self.gtilde.slice(lcount, scount)
        {
            return fail("Gtilde_L, Gtilde_S are consecutive prefixes of Gtilde");
        }
        let pair_ok = (self.l0 == self.g && self.l1 == self.b) || (self.l0 == self.b && self.l1 == self.g);
        if !pair_ok || self.g.len() != self.b.len() {
            return fail("{L0, L1} = {G, B} with |G| = |B|");
        }
        let (l, q) = encode_selector(&self.l0, &self.l1)?;
        if l != self.l || q != self.q {
            return fail("(L, Q) encodes (L0, L1)");
        }
        Ok(())
    }
}

/// `E` = erased indices of `y`, `Ebar` = the rest.
pub fn partition_by_erasure(y: &ErasedString) -> (IndexSet, IndexSet) {
    let (e, ebar): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| y.is_erased(i));
    (IndexSet(e), IndexSet(ebar))
}

/// A uniformly random `k`-subset of `s`.
pub fn sample_uniform_subset<R: Rng + ?Sized>(s: &IndexSet, k: usize, rng: &mut R) -> Result<IndexSet> {
    if k > s.len() {
        return Err(Error::Size(format!("cannot draw {k} indices from {}", s.len())));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, s.len(), k)
        .into_iter()
        .map(|pos| s.0[pos])
        .collect();
    picked.sort_unstable();
    Ok(IndexSet(picked))
}

/// Bob's erasure-count test. Counts are compared against the real-valued
/// thresholds with a 1e-9 allowance for representation error.
pub fn check_erasure_counts(erased: usize, unerased: usize, cfg: &ProtocolConfig) -> Result<()> {
    let n = cfg.n as f64;
    let eps1 = cfg.channel.epsilon1();
    if (unerased as f64) + 1e-9 < n * (1.0 - eps1 - cfg.delta) {
        return Err(Error::Aborted(AbortReason::TooFewUnerased));
    }
    if (erased as f64) + 1e-9 < n * (eps1 - cfg.delta) || erased < cfg.sizes.set_size {
        return Err(Error::Aborted(AbortReason::TooFewErased));
    }
    if unerased < cfg.sizes.set_size + cfg.sizes.gtilde_l + cfg.sizes.gtilde_s {
        return Err(Error::Aborted(AbortReason::GtildeTooSmall));
    }
    Ok(())
}

/// Runs Bob's abort test, samples `G` and `B`, and assembles the family.
pub fn derive_set_family<R: Rng + ?Sized>(
    e: &IndexSet,
    ebar: &IndexSet,
    u: bool,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<SetFamily> {
    check_partition(e, ebar, cfg.n)?;
    check_erasure_counts(e.len(), ebar.len(), cfg)?;
    let g = sample_uniform_subset(ebar, cfg.sizes.set_size, rng)?;
    let b = sample_uniform_subset(e, cfg.sizes.set_size, rng)?;
    assemble_family(e, ebar, &g, &b, u, cfg)
}

/// The deterministic part of [`derive_set_family`] once `G` and `B` are fixed.
pub fn assemble_family(
    e: &IndexSet,
    ebar: &IndexSet,
    g: &IndexSet,
    b: &IndexSet,
    u: bool,
    cfg: &ProtocolConfig,
) -> Result<SetFamily> {
    let size = cfg.sizes.set_size;
    if g.len() != size || b.len() != size || !g.is_subset(ebar) || !b.is_subset(e) {
        return Err(Error::IndexSet(format!("G, B must be {size}-subsets of Ebar, E")));
    }
    let gtilde = ebar.difference(g);
    let btilde = e.difference(b);
    let (lcount, scount) = (cfg.sizes.gtilde_l, cfg.sizes.gtilde_s);
    if gtilde.len() < lcount + scount {
        return Err(Error::Aborted(AbortReason::GtildeTooSmall));
    }
    let gtilde_l = gtilde.slice(0, lcount);
    let gtilde_s = gtilde.slice(lcount, scount);
    let (l0, l1) = if u { (b.clone(), g.clone()) } else { (g.clone(), b.clone()) };
    let (l, q) = encode_selector(&l0, &l1)?;
    Ok(SetFamily {
        e: e.clone(),
        ebar: ebar.clone(),
        g: g.clone(),
        b: b.clone(),
        gtilde,
        btilde,
        gtilde_l,
        gtilde_s,
        l0,
        l1,
        l,
        q,
    })
}

fn check_partition(e: &IndexSet, ebar: &IndexSet, n: usize) -> Result<()> {
    if let Some(i) = e.first_common(ebar) {
        return Err(Error::Disjointness(i));
    }
    if e.len() + ebar.len() != n || e.iter().chain(ebar.iter()).any(|i| i >= n) {
        return Err(Error::IndexSet(format!("E and Ebar do not partition [0, {n})")));
    }
    Ok(())
}

/// `L` = sorted `L0 ∪ L1`; `Q_i = 0` iff `L_i ∈ L0`.
pub fn encode_selector(l0: &IndexSet, l1: &IndexSet) -> Result<(IndexSet, BitString)> {
    if let Some(i) = l0.first_common(l1) {
        return Err(Error::Disjointness(i));
    }
    let l = l0.union(l1);
    let q = BitString::from_bits(l.iter().map(|i| l1.contains(i)));
    Ok((l, q))
}

pub fn decode_selector(l: &IndexSet, q: &BitString) -> Result<(IndexSet, IndexSet)> {
    if l.len() != q.len() {
        return Err(Error::Size(format!("|L| = {} but |Q| = {}", l.len(), q.len())));
    }
    let (mut l0, mut l1) = (Vec::new(), Vec::new());
    for (pos, i) in l.iter().enumerate() {
        if q.get(pos) {
            l1.push(i);
        } else {
            l0.push(i);
        }
    }
    Ok((IndexSet(l0), IndexSet(l1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelParams, Symbol::*};
    use crate::protocol::plan;
    use crate::rng::stream;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn partition_examples() {
        let (e, ebar) = partition_by_erasure(&ErasedString::from_symbols([Zero, Erased, One, Erased]));
        assert_eq!((e, ebar), (set(&[1, 3]), set(&[0, 2])));
        let (e, ebar) = partition_by_erasure(&ErasedString::from_symbols([Erased; 4]));
        assert_eq!((e, ebar), (IndexSet::range(4), IndexSet::empty()));
        let (e, ebar) = partition_by_erasure(&ErasedString::from_symbols([One, One, Erased]));
        assert_eq!((e, ebar), (set(&[2]), set(&[0, 1])));
    }

    #[test]
    fn subset_edge_cases() {
        let mut rng = stream(1, 0);
        assert_eq!(sample_uniform_subset(&set(&[0, 1, 2]), 3, &mut rng).unwrap(), set(&[0, 1, 2]));
        assert_eq!(sample_uniform_subset(&set(&[4, 9]), 0, &mut rng).unwrap(), IndexSet::empty());
        assert!(matches!(sample_uniform_subset(&set(&[1]), 2, &mut rng), Err(Error::Size(_))));
    }

    #[test]
    fn subset_sampling_is_uniform() {
        let s = IndexSet::range(6);
        let mut rng = stream(2, 0);
        let draws = 60_000;
        let mut counts: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform_subset(&s, 2, &mut rng).unwrap().0).or_default() += 1;
        }
        assert_eq!(counts.len(), 15);
        let expect = draws as f64 / 15.0;
        let mut chi2 = 0.0;
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - 1.0 / 15.0).abs() < 0.01);
            chi2 += (c as f64 - expect).powi(2) / expect;
        }
        // chi-square, 14 dof: P(X > 36.12) = 0.001
        assert!(chi2 < 36.12, "chi2 = {chi2}");
    }

    #[test]
    fn selector_examples() {
        let (l, q) = encode_selector(&set(&[2, 5]), &set(&[3, 7])).unwrap();
        assert_eq!(l, set(&[2, 3, 5, 7]));
        assert_eq!(q, BitString::from_bits([false, true, false, true]));
        let (_, q) = encode_selector(&set(&[1, 2]), &set(&[3, 4])).unwrap();
        assert_eq!(q, BitString::from_bits([false, false, true, true]));
        assert_eq!(encode_selector(&set(&[1]), &set(&[1])), Err(Error::Disjointness(1)));

        let (l0, l1) = decode_selector(&set(&[2, 3, 5, 7]), &BitString::from_bits([false, true, false, true])).unwrap();
        assert_eq!((l0, l1), (set(&[2, 5]), set(&[3, 7])));
        let (l0, l1) = decode_selector(&set(&[2, 3]), &BitString::zeros(2)).unwrap();
        assert_eq!((l0, l1), (set(&[2, 3]), IndexSet::empty()));
        assert!(matches!(decode_selector(&set(&[1]), &BitString::zeros(2)), Err(Error::Size(_))));
    }

    fn small_cfg() -> ProtocolConfig {
        plan(8, 0.01, ChannelParams::new(0.375, 0.9).unwrap()).unwrap()
    }

    #[test]
    fn too_few_unerased_threshold() {
        // eps1 = 0.5, delta = 0.1, n = 10: needs |Ebar| >= 4
        let mut cfg = small_cfg();
        cfg.n = 10;
        cfg.delta = 0.1;
        cfg.channel = ChannelParams::new(0.5, 0.8).unwrap();
        let ebar = set(&[0, 1, 2]);
        let e = IndexSet::range(10).difference(&ebar);
        let err = derive_set_family(&e, &ebar, false, &cfg, &mut stream(0, 0)).unwrap_err();
        assert_eq!(err, Error::Aborted(AbortReason::TooFewUnerased));
        assert_eq!(check_erasure_counts(3, 7, &cfg), Err(Error::Aborted(AbortReason::TooFewErased)));
        assert_eq!(check_erasure_counts(4, 6, &cfg), Ok(()));
    }

    #[test]
    fn choice_bit_assigns_pair() {
        let cfg = small_cfg();
        let e = set(&[1, 4, 6]);
        let ebar = IndexSet::range(8).difference(&e);
        for u in [false, true] {
            let fam = derive_set_family(&e, &ebar, u, &cfg, &mut stream(5, 0)).unwrap();
            fam.check_invariants(8).unwrap();
            if u {
                assert_eq!((&fam.l0, &fam.l1), (&fam.b, &fam.g));
            } else {
                assert_eq!((&fam.l0, &fam.l1), (&fam.g, &fam.b));
            }
            assert_eq!(fam.q.len(), 2 * cfg.sizes.set_size);
        }
    }

    #[test]
    fn rejects_non_partition() {
        let cfg = small_cfg();
        let err = derive_set_family(&set(&[0, 1]), &set(&[1, 2]), false, &cfg, &mut stream(0, 0));
        assert_eq!(err.unwrap_err(), Error::Disjointness(1));
    }

    #[test]
    fn unordered_pair_is_independent_of_choice() {
        // Exhaustive over every erasure pattern of weight 3 at n = 8 and every
        // (G, B) choice: the multiset of {L0, L1} is the same for U = 0 and 1.
        let cfg = small_cfg();
        for mask in 0u64..256 {
            if mask.count_ones() != 3 {
                continue;
            }
            let e = IndexSet::from_mask(mask);
            let ebar = IndexSet::range(8).difference(&e);
            let mut seen: [BTreeMap<(IndexSet, IndexSet), u32>; 2] = Default::default();
            for g in ebar.iter() {
                for b in e.iter() {
                    for u in [false, true] {
                        let fam = assemble_family(&e, &ebar, &set(&[g]), &set(&[b]), u, &cfg).unwrap();
                        assert_eq!(fam.l0.len(), fam.l1.len());
                        let pair = if fam.l0 < fam.l1 { (fam.l0, fam.l1) } else { (fam.l1, fam.l0) };
                        *seen[u as usize].entry(pair).or_default() += 1;
                    }
                }
            }
            assert_eq!(seen[0], seen[1]);
        }
    }

    proptest! {
        #[test]
        fn selector_round_trip(mask0 in any::<u64>(), mask1 in any::<u64>()) {
            let l0 = IndexSet::from_mask(mask0 & !mask1);
            let l1 = IndexSet::from_mask(mask1 & !mask0);
            let (l, q) = encode_selector(&l0, &l1).unwrap();
            prop_assert_eq!(q.len(), l0.len() + l1.len());
            prop_assert_eq!(decode_selector(&l, &q).unwrap(), (l0, l1));
        }
    }
}
