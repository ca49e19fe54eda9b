//! Quantitative checks: capacity bounds, exact leakage at small block
//! lengths, key-entropy deficits, and the random-map entropy scan.
//!
//! The exact oracle enumerates every random variable of a run with its
//! probability: Bob's erasure pattern `E`, his subset choices `G`, `B`, the
//! choice bit `U`, Alice's input `X^n`, Eve's extra erasures `W ⊆ Ebar` and,
//! optionally, the strings `K0`, `K1`. Each branch is pushed through the real
//! protocol functions. Extractor seeds are public, so everything is computed
//! per seed and then averaged. All probabilities are conditioned on `J = 0`.
//!
//! Entropies are accumulated per public `(G~, B~)` group. Every context key
//! used below contains the public sets, so cells of different groups never
//! coincide and group-wise `-p log p` sums add up to the global entropy.

use crate::bits::BitString;
use crate::channel::{ChannelParams, ErasedString};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::extractor::{make_extractor, Backend, Extractor, ExtractorSeeds, ExtractorSpec, KeyExtractors};
use crate::info::{entropy_of_counts, neg_p_log2_p, KahanSum};
use crate::protocol::{alice_respond, bob_finish, BobState, ProtocolConfig};
use crate::rng::{derive_seed, label, stream};
use crate::sets::{assemble_family, check_erasure_counts, sample_uniform_subset, IndexSet};
use crate::sim::wilson_interval;
use rustc_hash::FxHashMap;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    pub lower: f64,
    pub upper: f64,
    /// `eps1 <= eps2 (1 - eps1) / 3`, where both bounds equal `eps1`.
    pub tight: bool,
    /// The capacity itself where the bounds meet.
    pub capacity: Option<f64>,
}

/// `lower = min{eps2 (1 - eps1) / 3, eps1}`, `upper = min{eps2 (1 - eps1), eps1}`.
pub fn capacity_bounds(channel: &ChannelParams) -> BoundsReport {
    let (e1, e2) = (channel.epsilon1(), channel.epsilon2());
    let key_rate = e2 * (1.0 - e1);
    let lower = (key_rate / 3.0).min(e1);
    let upper = key_rate.min(e1);
    // compared in the scaled form so grid points on the boundary are exact
    let tight = 3.0 * e1 <= key_rate + 1e-12;
    BoundsReport { lower, upper, tight, capacity: tight.then_some(e1) }
}

pub const MAX_ORACLE_N: usize = 8;
pub const MAX_ORACLE_M: usize = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExactOptions {
    /// Also enumerate `K0`, `K1` and compute each mutual information from
    /// its definition. Without it, the key strings are eliminated through
    /// the one-time-pad identities, which is much cheaper and gives the
    /// same values.
    pub enumerate_keys: bool,
}

/// Exact quantities for one published seed triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAnalysis {
    pub seeds: ExtractorSeeds,
    /// `I(U; V_A)`.
    pub mi_u_va: f64,
    /// `I(K_Ubar; V_B)`.
    pub mi_kbar_vb: f64,
    /// `I(K0, K1, U; V_E)`.
    pub mi_all_ve: f64,
    /// `P[K^ != K_U | J = 0]`.
    pub pr_error: f64,
    /// `m - H(S_Ubar | X|_{G~_S})`.
    pub d_bar: f64,
    /// `2m - H(S_U, S_Ubar | Z|_G, Z|_{G~_S})`.
    pub d_joint: f64,
    /// `m - H(S_U | Z|_G, Z|_{G~_S})`.
    pub d_u: f64,
    /// `d_joint` conditioned on Eve erasing at least a `eps2 (1 - delta/2)`
    /// fraction of `(Z|_G, Z|_{G~_S})`; `None` when that event is empty.
    pub d_joint_typical: Option<f64>,
    /// Probability of that event.
    pub p_typical: f64,
    /// Total probability of the enumerated non-aborting branches.
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub mi_u_va: f64,
    pub mi_kbar_vb: f64,
    pub mi_all_ve: f64,
    pub pr_error: f64,
    pub method: Method,
    pub seeds_averaged: usize,
    /// `P[J = 1]`, exact.
    pub p_abort: f64,
    pub per_seed: Vec<SeedAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitReport {
    pub d_joint: f64,
    pub d_bar: f64,
    pub d_u: f64,
    /// Average over seeds where the typical event has positive probability.
    pub d_joint_typical: Option<f64>,
    pub p_typical: f64,
    pub seeds_averaged: usize,
    pub per_seed: Vec<SeedAnalysis>,
}

/// Everything the exact oracle produces for a seed set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactAnalysis {
    pub p_abort: f64,
    pub per_seed: Vec<SeedAnalysis>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (KahanSum::default(), 0usize);
    for v in values {
        sum.add(v);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum.value() / count as f64
    }
}

impl ExactAnalysis {
    pub fn leakage(&self) -> LeakageReport {
        let s = &self.per_seed;
        LeakageReport {
            mi_u_va: mean(s.iter().map(|a| a.mi_u_va)),
            mi_kbar_vb: mean(s.iter().map(|a| a.mi_kbar_vb)),
            mi_all_ve: mean(s.iter().map(|a| a.mi_all_ve)),
            pr_error: mean(s.iter().map(|a| a.pr_error)),
            method: Method::ExactEnumeration,
            seeds_averaged: s.len(),
            p_abort: self.p_abort,
            per_seed: s.clone(),
        }
    }

    pub fn deficits(&self) -> DeficitReport {
        let s = &self.per_seed;
        let typical: Vec<f64> = s.iter().filter_map(|a| a.d_joint_typical).collect();
        DeficitReport {
            d_joint: mean(s.iter().map(|a| a.d_joint)),
            d_bar: mean(s.iter().map(|a| a.d_bar)),
            d_u: mean(s.iter().map(|a| a.d_u)),
            d_joint_typical: (!typical.is_empty()).then(|| mean(typical.iter().copied())),
            p_typical: mean(s.iter().map(|a| a.p_typical)),
            seeds_averaged: s.len(),
            per_seed: s.clone(),
        }
    }
}

/// Exact leakage statistics, averaged over `seeds`.
pub fn exact_leakage(cfg: &ProtocolConfig, seeds: &[ExtractorSeeds], exec: Execution) -> Result<LeakageReport> {
    Ok(exact_analysis(cfg, seeds, ExactOptions::default(), exec)?.leakage())
}

/// Exact key-entropy deficits, averaged over `seeds`.
pub fn key_entropy_deficit(cfg: &ProtocolConfig, seeds: &[ExtractorSeeds], exec: Execution) -> Result<DeficitReport> {
    Ok(exact_analysis(cfg, seeds, ExactOptions::default(), exec)?.deficits())
}

/// The first `count` members of the reproducible seed family under `master`.
pub fn seed_family(master: u64, count: usize) -> Vec<ExtractorSeeds> {
    (0..count as u64).map(|i| ExtractorSeeds::derived(master, i)).collect()
}

pub fn check_oracle_scale(cfg: &ProtocolConfig) -> Result<()> {
    if cfg.n > MAX_ORACLE_N || cfg.m > MAX_ORACLE_M {
        return Err(Error::OracleScale(format!(
            "exact oracle needs n <= {MAX_ORACLE_N} and m <= {MAX_ORACLE_M}, got n = {}, m = {}",
            cfg.n, cfg.m
        )));
    }
    if cfg.backend != Backend::RandomTable {
        return Err(Error::OracleScale("exact oracle needs the random-table backend".into()));
    }
    if cfg.selector_len() > 16 {
        return Err(Error::OracleScale("selector longer than 16 bits".into()));
    }
    cfg.check_backend()
}

/// Runs the exact oracle for every seed triple in `seeds`.
pub fn exact_analysis(
    cfg: &ProtocolConfig,
    seeds: &[ExtractorSeeds],
    opts: ExactOptions,
    exec: Execution,
) -> Result<ExactAnalysis> {
    check_oracle_scale(cfg)?;
    let space = BranchSpace::build(cfg)?;
    let per_seed = seeds
        .iter()
        .map(|s| {
            let ext = cfg.extractors(s)?;
            analyze_space(cfg, &space, *s, Arc::new(ext), opts, exec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactAnalysis { p_abort: space.p_abort, per_seed })
}

/// Runs the exact oracle with caller-supplied extractors, e.g. deliberately
/// corrupted ones. `seeds` is only echoed in the result.
pub fn analyze_with_extractors(
    cfg: &ProtocolConfig,
    seeds: ExtractorSeeds,
    extractors: KeyExtractors,
    opts: ExactOptions,
    exec: Execution,
) -> Result<SeedAnalysis> {
    check_oracle_scale(cfg)?;
    let space = BranchSpace::build(cfg)?;
    analyze_space(cfg, &space, seeds, Arc::new(extractors), opts, exec)
}

/// One `(E, G, B)` choice with its probability given `J = 0`.
#[derive(Debug, Clone)]
struct Branch {
    e: IndexSet,
    ebar: IndexSet,
    g: IndexSet,
    b: IndexSet,
    weight: f64,
}

struct BranchSpace {
    groups: Vec<Vec<Branch>>,
    p_abort: f64,
}

fn subsets_of_size(s: &IndexSet, k: usize) -> Vec<IndexSet> {
    let items = s.as_slice();
    (0u32..1 << items.len())
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| IndexSet::new((0..items.len()).filter(|j| m >> j & 1 == 1).map(|j| items[j]).collect()).unwrap())
        .collect()
}

impl BranchSpace {
    fn build(cfg: &ProtocolConfig) -> Result<Self> {
        let n = cfg.n;
        let eps1 = cfg.channel.epsilon1();
        let size = cfg.sizes.set_size;
        let mut groups: BTreeMap<(u64, u64), Vec<Branch>> = BTreeMap::new();
        let (mut p_ok, mut p_abort) = (KahanSum::default(), KahanSum::default());
        for mask in 0u64..1 << n {
            let e = IndexSet::from_mask(mask);
            let ebar = IndexSet::range(n).difference(&e);
            let p_e = eps1.powi(e.len() as i32) * (1.0 - eps1).powi(ebar.len() as i32);
            if check_erasure_counts(e.len(), ebar.len(), cfg).is_err() {
                p_abort.add(p_e);
                continue;
            }
            p_ok.add(p_e);
            let gs = subsets_of_size(&ebar, size);
            let bs = subsets_of_size(&e, size);
            let w = p_e / (gs.len() * bs.len()) as f64;
            for g in &gs {
                for b in &bs {
                    let key = (ebar.difference(g).to_mask(), e.difference(b).to_mask());
                    groups.entry(key).or_default().push(Branch {
                        e: e.clone(),
                        ebar: ebar.clone(),
                        g: g.clone(),
                        b: b.clone(),
                        weight: w,
                    });
                }
            }
        }
        let p_ok = p_ok.value();
        if p_ok <= 0.0 {
            return Err(Error::InfeasibleParams("every erasure pattern aborts".into()));
        }
        let mut groups: Vec<Vec<Branch>> = groups.into_values().collect();
        for br in groups.iter_mut().flatten() {
            br.weight /= p_ok;
        }
        Ok(Self { groups, p_abort: p_abort.value() })
    }
}

/// Bit packer for hash keys.
#[derive(Clone, Copy)]
struct Key(u64, u32);

impl Key {
    fn new() -> Self {
        Key(0, 0)
    }

    #[inline]
    fn put(self, value: u64, bits: usize) -> Self {
        debug_assert!(bits == 64 || value >> bits == 0);
        debug_assert!(self.1 as usize + bits <= 64);
        Key(self.0 | value << self.1, self.1 + bits as u32)
    }

    #[inline]
    fn bit(self, b: bool) -> Self {
        self.put(b as u64, 1)
    }

    fn get(self) -> u64 {
        self.0
    }
}

#[derive(Default)]
struct Dist(FxHashMap<u64, f64>);

impl Dist {
    #[inline]
    fn add(&mut self, key: Key, p: f64) {
        *self.0.entry(key.get()).or_insert(0.0) += p;
    }

    /// `sum -p log2 p` over the cells, with absolute probabilities.
    fn plogp(&self) -> f64 {
        let mut keys: Vec<(&u64, &f64)> = self.0.iter().collect();
        keys.sort_unstable_by_key(|(k, _)| **k);
        keys.into_iter().map(|(_, &p)| neg_p_log2_p(p)).collect::<KahanSum>().value()
    }

    fn merge_into(&self, out: &mut BTreeMap<u64, f64>) {
        for (k, p) in &self.0 {
            *out.entry(*k).or_insert(0.0) += p;
        }
    }
}

/// Per-group partial results; every field except the marginals is additive.
#[derive(Default)]
struct Partial {
    /// `sum -p log p` for each statistic's context and joint maps.
    a_v: f64,
    a_tv: f64,
    b_v: f64,
    b_tv: f64,
    e_v: f64,
    e_tv: f64,
    db_c: f64,
    db_ct: f64,
    dj_c: f64,
    dj_ct: f64,
    du_ct: f64,
    djt_c: f64,
    djt_ct: f64,
    p_typical: f64,
    pr_error: f64,
    mass: f64,
    marg_u: BTreeMap<u64, f64>,
    marg_kbar: BTreeMap<u64, f64>,
    marg_all: BTreeMap<u64, f64>,
}

fn merge_partials(parts: Vec<Partial>) -> Partial {
    let mut acc = Partial::default();
    let mut sums: [KahanSum; 16] = Default::default();
    for p in parts {
        let vals = [
            p.a_v, p.a_tv, p.b_v, p.b_tv, p.e_v, p.e_tv, p.db_c, p.db_ct, p.dj_c, p.dj_ct, p.du_ct, p.djt_c,
            p.djt_ct, p.p_typical, p.pr_error, p.mass,
        ];
        for (s, v) in sums.iter_mut().zip(vals) {
            s.add(v);
        }
        for (dst, src) in [(&mut acc.marg_u, p.marg_u), (&mut acc.marg_kbar, p.marg_kbar), (&mut acc.marg_all, p.marg_all)] {
            for (k, v) in src {
                *dst.entry(k).or_insert(0.0) += v;
            }
        }
    }
    let v: Vec<f64> = sums.iter().map(|s| s.value()).collect();
    (acc.a_v, acc.a_tv, acc.b_v, acc.b_tv, acc.e_v, acc.e_tv) = (v[0], v[1], v[2], v[3], v[4], v[5]);
    (acc.db_c, acc.db_ct, acc.dj_c, acc.dj_ct, acc.du_ct) = (v[6], v[7], v[8], v[9], v[10]);
    (acc.djt_c, acc.djt_ct, acc.p_typical, acc.pr_error, acc.mass) = (v[11], v[12], v[13], v[14], v[15]);
    acc
}

fn marginal_entropy(m: &BTreeMap<u64, f64>) -> f64 {
    m.values().map(|&p| neg_p_log2_p(p)).collect::<KahanSum>().value()
}

fn analyze_space(
    cfg: &ProtocolConfig,
    space: &BranchSpace,
    seeds: ExtractorSeeds,
    ext: Arc<KeyExtractors>,
    opts: ExactOptions,
    exec: Execution,
) -> Result<SeedAnalysis> {
    let parts = exec.map(&space.groups, |group| analyze_group(cfg, group, seeds, &ext, opts));
    let p = merge_partials(parts.into_iter().collect::<Result<Vec<_>>>()?);
    let m = cfg.m as f64;
    let h_u = marginal_entropy(&p.marg_u);
    let (mi_u_va, mi_kbar_vb, mi_all_ve) = if opts.enumerate_keys {
        (
            h_u + p.a_v - p.a_tv,
            marginal_entropy(&p.marg_kbar) + p.b_v - p.b_tv,
            marginal_entropy(&p.marg_all) + p.e_v - p.e_tv,
        )
    } else {
        (h_u + p.a_v - p.a_tv, m + p.b_v - p.b_tv, 2.0 * m + h_u + p.e_v - p.e_tv)
    };
    let d_joint_typical = (p.p_typical > 0.0).then(|| 2.0 * m - (p.djt_ct - p.djt_c) / p.p_typical);
    Ok(SeedAnalysis {
        seeds,
        mi_u_va,
        mi_kbar_vb,
        mi_all_ve,
        pr_error: p.pr_error,
        d_bar: m - (p.db_ct - p.db_c),
        d_joint: 2.0 * m - (p.dj_ct - p.dj_c),
        d_u: m - (p.du_ct - p.dj_c),
        d_joint_typical,
        p_typical: p.p_typical,
        mass: p.mass,
    })
}

/// Values of `X` restricted to `set`, packed in ascending index order.
#[inline]
fn gather(x: u64, set: &[usize]) -> u64 {
    set.iter().enumerate().fold(0, |acc, (j, &i)| acc | (x >> i & 1) << j)
}

fn bits_u64(b: &BitString) -> u64 {
    b.to_u64().expect("oracle strings fit in a word")
}

fn analyze_group(
    cfg: &ProtocolConfig,
    group: &[Branch],
    seeds: ExtractorSeeds,
    ext: &Arc<KeyExtractors>,
    opts: ExactOptions,
) -> Result<Partial> {
    let n = cfg.n;
    let m = cfg.m;
    let eps2 = cfg.channel.epsilon2();
    let qlen = cfg.selector_len();
    let typical_cut = eps2 * (1.0 - cfg.delta / 2.0);
    let p_x = 0.5f64.powi(n as i32);
    let keys: Vec<u64> = if opts.enumerate_keys { (0..1u64 << m).collect() } else { vec![0] };
    let p_k = 1.0 / (keys.len() * keys.len()) as f64;

    let mut d = [(); 13].map(|_| Dist::default());
    let [a_v, a_tv, b_v, b_tv, e_v, e_tv, db_c, db_ct, dj_c, dj_ct, du_ct, djt_c, djt_ct] = &mut d;
    let mut marg_u = Dist::default();
    let mut marg_kbar = Dist::default();
    let mut marg_all = Dist::default();
    let (mut pr_error, mut mass, mut p_typical) = (KahanSum::default(), KahanSum::default(), KahanSum::default());

    for br in group {
        let emask = br.e.to_mask();
        let ebar_idx: Vec<usize> = br.ebar.iter().collect();
        let gmask = br.g.to_mask();
        for u in [false, true] {
            let family = assemble_family(&br.e, &br.ebar, &br.g, &br.b, u, cfg)?;
            let gts: Vec<usize> = family.gtilde_s.iter().collect();
            // positions Eve may see among G ∪ G~_S, for the deficit contexts
            let watch: Vec<usize> = br.g.union(&family.gtilde_s).iter().collect();
            let p_branch = br.weight * 0.5 * p_x;
            for x in 0u64..1 << n {
                let xb = BitString::from_u64(x, n);
                let erased = BitString::from_u64(emask, n);
                let y = ErasedString::from_parts(&xb, &erased)?;
                let yval = x & !emask;
                let (state, msg) = BobState::prepare(u, family.clone(), y, seeds, ext.clone())?;
                let mq = bits_u64(&msg.masked_q);
                let mut sums = None;
                for &k0 in &keys {
                    for &k1 in &keys {
                        let (k0b, k1b) = (BitString::from_u64(k0, m), BitString::from_u64(k1, m));
                        let (reply, derived) = alice_respond(&xb, &k0b, &k1b, &msg, cfg, ext)?;
                        let k_hat = bob_finish(&state, &reply)?;
                        let p = p_branch * p_k;
                        mass.add(p);
                        if k_hat != *if u { &k1b } else { &k0b } {
                            pr_error.add(p);
                        }
                        let (s0, s1) = (bits_u64(&derived.keys.s0), bits_u64(&derived.keys.s1));
                        sums.get_or_insert((s0, s1));
                        if opts.enumerate_keys {
                            let (c0, c1) = (bits_u64(&reply.cipher0), bits_u64(&reply.cipher1));
                            let kbar = if u { k0 } else { k1 };
                            let va = Key::new().put(k0, m).put(k1, m).put(x, n).put(mq, qlen).put(c0, m).put(c1, m);
                            a_v.add(va, p);
                            a_tv.add(va.bit(u), p);
                            let vb = Key::new().bit(u).put(emask, n).put(yval, n).put(mq, qlen).put(c0, m).put(c1, m);
                            b_v.add(vb, p);
                            b_tv.add(vb.put(kbar, m), p);
                            marg_u.add(Key::new().bit(u), p);
                            marg_kbar.add(Key::new().put(kbar, m), p);
                            marg_all.add(Key::new().put(k0, m).put(k1, m).bit(u), p);
                            for_each_subset(&ebar_idx, |wmask, werased| {
                                let pw = p * eps2.powi(werased as i32) * (1.0 - eps2).powi((ebar_idx.len() - werased) as i32);
                                let zmask = emask | wmask;
                                let ve = Key::new().put(zmask, n).put(x & !zmask, n).put(mq, qlen).put(c0, m).put(c1, m);
                                e_v.add(ve, pw);
                                e_tv.add(ve.put(k0, m).put(k1, m).bit(u), pw);
                            });
                        }
                    }
                }
                let (s0, s1) = sums.expect("at least one key pair");
                let (s_u, s_ubar) = if u { (s1, s0) } else { (s0, s1) };
                let p = p_branch;
                if !opts.enumerate_keys {
                    let va = Key::new().put(x, n).put(mq, qlen).put(s0, m).put(s1, m);
                    a_v.add(va, p);
                    a_tv.add(va.bit(u), p);
                    let r = Key::new().bit(u).put(emask, n).put(yval, n).put(mq, qlen);
                    b_v.add(r, p);
                    b_tv.add(r.put(s_ubar, m), p);
                    marg_u.add(Key::new().bit(u), p);
                    for_each_subset(&ebar_idx, |wmask, werased| {
                        let pw = p * eps2.powi(werased as i32) * (1.0 - eps2).powi((ebar_idx.len() - werased) as i32);
                        let zmask = emask | wmask;
                        let ve = Key::new().put(zmask, n).put(x & !zmask, n).put(mq, qlen);
                        e_v.add(ve, pw);
                        e_tv.add(ve.bit(u).put(s0, m).put(s1, m), pw);
                    });
                }

                let ctx = Key::new().put(emask, n).put(gmask, n).bit(u);
                let c = ctx.put(gather(x, &gts), gts.len());
                db_c.add(c, p);
                db_ct.add(c.put(s_ubar, m), p);
                for_each_subset(&watch, |wmask, werased| {
                    let pw = p * eps2.powi(werased as i32) * (1.0 - eps2).powi((watch.len() - werased) as i32);
                    let seen: Vec<usize> = watch.iter().copied().filter(|&i| wmask >> i & 1 == 0).collect();
                    let zc = ctx.put(gather(wmask, &watch), watch.len()).put(gather(x, &seen), seen.len());
                    dj_c.add(zc, pw);
                    dj_ct.add(zc.put(s_u, m).put(s_ubar, m), pw);
                    du_ct.add(zc.put(s_u, m), pw);
                    let frac = if watch.is_empty() { 1.0 } else { werased as f64 / watch.len() as f64 };
                    if frac >= typical_cut - 1e-12 {
                        p_typical.add(pw);
                        djt_c.add(zc, pw);
                        djt_ct.add(zc.put(s_u, m).put(s_ubar, m), pw);
                    }
                });
            }
        }
    }

    let mut out = Partial {
        pr_error: pr_error.value(),
        mass: mass.value(),
        p_typical: p_typical.value(),
        ..Default::default()
    };
    let h: Vec<f64> = d.iter().map(Dist::plogp).collect();
    (out.a_v, out.a_tv, out.b_v, out.b_tv, out.e_v, out.e_tv) = (h[0], h[1], h[2], h[3], h[4], h[5]);
    (out.db_c, out.db_ct, out.dj_c, out.dj_ct, out.du_ct, out.djt_c, out.djt_ct) =
        (h[6], h[7], h[8], h[9], h[10], h[11], h[12]);
    marg_u.merge_into(&mut out.marg_u);
    marg_kbar.merge_into(&mut out.marg_kbar);
    marg_all.merge_into(&mut out.marg_all);
    Ok(out)
}

/// Calls `f(mask, size)` for every subset of `items` (indices below 64).
fn for_each_subset(items: &[usize], mut f: impl FnMut(u64, usize)) {
    for sel in 0u32..1 << items.len() {
        let mask = items.iter().enumerate().filter(|(j, _)| sel >> j & 1 == 1).fold(0u64, |a, (_, &i)| a | 1 << i);
        f(mask, sel.count_ones() as usize);
    }
}

/// Parameters of the random-map entropy scan: a uniformly random map from
/// `n_bits` bits to `floor(n_bits * alpha)` bits, inputs with
/// `floor(n_bits * beta)` positions fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma3Params {
    pub n_bits: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta_l: f64,
    #[serde(default = "default_index_set_cap")]
    pub index_set_cap: usize,
}

pub const DEFAULT_INDEX_SET_CAP: usize = 64;
pub const MAX_LEMMA3_BITS: usize = 20;

fn default_index_set_cap() -> usize {
    DEFAULT_INDEX_SET_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma3Report {
    pub params: Lemma3Params,
    pub output_bits: usize,
    pub fixed_bits: usize,
    /// A map violates when some `H(f(X) | X|_I = y)` falls below this.
    pub threshold: f64,
    pub trials: u64,
    pub violations: u64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Index sets examined per table.
    pub index_sets: usize,
    /// Whether every index set of the right size was examined.
    pub exhaustive: bool,
    /// Smallest conditional entropy seen over all tables.
    pub min_entropy_seen: f64,
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

impl Lemma3Params {
    fn validate(&self) -> Result<()> {
        let (a, b, d) = (self.alpha, self.beta, self.delta_l);
        if ![a, b, d].iter().all(|v| v.is_finite() && *v >= 0.0) || a + b + d >= 1.0 {
            return Err(Error::Param(format!("need alpha, beta, delta >= 0 and alpha + beta + delta < 1, got {a}, {b}, {d}")));
        }
        if self.n_bits == 0 || self.index_set_cap == 0 {
            return Err(Error::Param("n_bits and index_set_cap must be positive".into()));
        }
        if self.n_bits > MAX_LEMMA3_BITS {
            return Err(Error::OracleScale(format!("n_bits {} exceeds {MAX_LEMMA3_BITS}", self.n_bits)));
        }
        Ok(())
    }

    fn output_bits(&self) -> usize {
        (self.n_bits as f64 * self.alpha + 1e-9).floor() as usize
    }

    fn fixed_bits(&self) -> usize {
        (self.n_bits as f64 * self.beta + 1e-9).floor() as usize
    }

    fn threshold(&self) -> f64 {
        self.output_bits() as f64 - (-(self.n_bits as f64) * self.delta_l).exp2()
    }
}

/// Minimum over the examined `(I, y)` of `H(f(X) | X|_I = y)` for one table.
fn table_min_entropy(params: &Lemma3Params, table_seed: u64) -> Result<(f64, usize, bool)> {
    let n = params.n_bits;
    let out = params.output_bits();
    let k = params.fixed_bits();
    let spec = ExtractorSpec { backend: Backend::RandomTable, seed: table_seed, input_len: n, output_len: out };
    let Extractor::Table(table) = make_extractor(&spec)? else { unreachable!("random-table spec") };
    let total = binomial(n, k);
    let exhaustive = total <= params.index_set_cap as u128;
    let index_sets: Vec<Vec<usize>> = if exhaustive {
        subsets_of_size(&IndexSet::range(n), k).into_iter().map(|s| s.as_slice().to_vec()).collect()
    } else {
        let mut rng = stream(table_seed, 1);
        let mut chosen = BTreeSet::new();
        while chosen.len() < params.index_set_cap {
            chosen.insert(sample_uniform_subset(&IndexSet::range(n), k, &mut rng)?.as_slice().to_vec());
        }
        chosen.into_iter().collect()
    };
    let entries = table.entries();
    let mut counts = vec![0u64; 1 << (k + out)];
    let mut min_h = f64::INFINITY;
    for set in &index_sets {
        counts.iter_mut().for_each(|c| *c = 0);
        for (x, &fx) in entries.iter().enumerate() {
            let y = gather(x as u64, set) as usize;
            counts[y << out | fx as usize] += 1;
        }
        for row in counts.chunks(1 << out) {
            min_h = min_h.min(entropy_of_counts(row));
        }
    }
    Ok((min_h, index_sets.len(), exhaustive))
}

/// Fraction of `trials` random tables violating the entropy bound for some
/// examined `(I, y)`. When there are more index sets than
/// `index_set_cap`, a random sample of that many is examined per table.
pub fn lemma3_violation_rate(params: &Lemma3Params, trials: u64, master: u64, exec: Execution) -> Result<Lemma3Report> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::Param("trials must be positive".into()));
    }
    let threshold = params.threshold();
    let results = exec.map_range(trials, |t| table_min_entropy(params, derive_seed(master, label::LEMMA3, t)));
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let violations = results.iter().filter(|(h, _, _)| *h < threshold).count() as u64;
    let (ci_lo, ci_hi) = wilson_interval(violations, trials);
    let (_, index_sets, exhaustive) = results[0];
    Ok(Lemma3Report {
        params: *params,
        output_bits: params.output_bits(),
        fixed_bits: params.fixed_bits(),
        threshold,
        trials,
        violations,
        rate: violations as f64 / trials as f64,
        ci_lo,
        ci_hi,
        index_sets,
        exhaustive,
        min_entropy_seen: results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
    })
}

/// The violation rate over several `beta` values with the same tables.
/// Report-only: whether the rate is non-decreasing in `beta` is returned,
/// not enforced.
pub fn lemma3_monotonicity(
    base: &Lemma3Params,
    betas: &[f64],
    trials: u64,
    master: u64,
    exec: Execution,
) -> Result<(Vec<Lemma3Report>, bool)> {
    let reports = betas
        .iter()
        .map(|&beta| lemma3_violation_rate(&Lemma3Params { beta, ..*base }, trials, master, exec))
        .collect::<Result<Vec<_>>>()?;
    let monotone = reports.windows(2).all(|w| w[1].violations >= w[0].violations);
    Ok((reports, monotone))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::plan;

    fn ch(e1: f64, e2: f64) -> ChannelParams {
        ChannelParams::new(e1, e2).unwrap()
    }

    #[test]
    fn bounds_examples() {
        let b = capacity_bounds(&ch(0.3, 0.0));
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = capacity_bounds(&ch(0.5, 0.6));
        assert!((b.lower - 0.1).abs() < 1e-15 && (b.upper - 0.3).abs() < 1e-15);
        assert!(!b.tight);
        let b = capacity_bounds(&ch(0.05, 0.9));
        assert!(b.tight);
        assert_eq!(b.capacity, Some(0.05));
        assert_eq!((b.lower, b.upper), (0.05, 0.05));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 4), 1820);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(8, 8), 1);
    }

    pub(crate) fn oracle_cfg() -> ProtocolConfig {
        plan(8, 0.01, ch(0.375, 0.9)).unwrap().with_backend(Backend::RandomTable)
    }

    #[test]
    fn scale_limits() {
        let big = plan(64, 0.03, ch(0.5, 0.8)).unwrap().with_backend(Backend::RandomTable);
        assert!(matches!(exact_leakage(&big, &seed_family(1, 1), Execution::Sequential), Err(Error::OracleScale(_))));
        let hash = plan(8, 0.01, ch(0.375, 0.9)).unwrap();
        assert!(matches!(check_oracle_scale(&hash), Err(Error::OracleScale(_))));
    }

    #[test]
    fn branch_space_is_normalized() {
        let cfg = oracle_cfg();
        let space = BranchSpace::build(&cfg).unwrap();
        let total: f64 = space.groups.iter().flatten().map(|b| b.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // only |E| = 3 survives: P(J = 0) = C(8,3) eps1^3 (1 - eps1)^5
        let p_ok = 56.0 * 0.375f64.powi(3) * 0.625f64.powi(5);
        assert!((space.p_abort - (1.0 - p_ok)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_key_length_gives_zero_deficits() {
        let base = oracle_cfg();
        let cfg = base.clone().with_sizes(0, base.sizes);
        let r = key_entropy_deficit(&cfg, &seed_family(3, 2), Execution::Parallel).unwrap();
        assert!(r.d_bar.abs() < 1e-12 && r.d_joint.abs() < 1e-12);
    }

    #[test]
    fn lemma3_parameter_checks() {
        let p = Lemma3Params { n_bits: 10, alpha: 0.5, beta: 0.3, delta_l: 0.2, index_set_cap: 8 };
        assert!(matches!(lemma3_violation_rate(&p, 1, 0, Execution::Sequential), Err(Error::Param(_))));
        let p = Lemma3Params { n_bits: 21, alpha: 0.2, beta: 0.2, delta_l: 0.2, index_set_cap: 8 };
        assert!(matches!(lemma3_violation_rate(&p, 1, 0, Execution::Sequential), Err(Error::OracleScale(_))));
    }

    #[test]
    fn lemma3_empty_output_never_violates() {
        let p = Lemma3Params { n_bits: 10, alpha: 0.0, beta: 0.3, delta_l: 0.2, index_set_cap: 200 };
        let r = lemma3_violation_rate(&p, 20, 4, Execution::Parallel).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.exhaustive);
        assert_eq!(r.index_sets, 120);
    }

    #[test]
    fn lemma3_scan_matches_direct_count() {
        // Recount one table's worst cell independently with a BTreeMap.
        let p = Lemma3Params { n_bits: 8, alpha: 0.25, beta: 0.25, delta_l: 0.25, index_set_cap: 1000 };
        let seed = 77;
        let (min_h, sets, exhaustive) = table_min_entropy(&p, seed).unwrap();
        assert!(exhaustive);
        assert_eq!(sets, 28);
        let spec = ExtractorSpec { backend: Backend::RandomTable, seed, input_len: 8, output_len: 2 };
        let ex = make_extractor(&spec).unwrap();
        let mut worst = f64::INFINITY;
        for i in 0..8 {
            for j in i + 1..8 {
                let mut cells: BTreeMap<(bool, bool), Vec<u64>> = BTreeMap::new();
                for x in 0..256u64 {
                    let f = ex.extract(&BitString::from_u64(x, 8)).unwrap().to_u64().unwrap();
                    let row = cells.entry((x >> i & 1 == 1, x >> j & 1 == 1)).or_insert_with(|| vec![0; 4]);
                    row[f as usize] += 1;
                }
                for row in cells.values() {
                    worst = worst.min(entropy_of_counts(row));
                }
            }
        }
        assert!((worst - min_h).abs() < 1e-12);
    }
}
