//! The OT scheme: parameters, the two parties' steps, and full runs.
//!
//! Message order is fixed: Bob sends `(G~, B~)` and then `(S_L ^ Q, seeds)`,
//! Alice answers with `(K0 ^ S0, K1 ^ S1)`. Alice never sees `U`; she only
//! learns `(L0, L1)` by unmasking the selector vector.

use crate::bits::BitString;
use crate::channel::{transmit, ChannelParams, ErasedString};
use crate::error::{AbortReason, Error, Result};
use crate::extractor::{Backend, ExtractorSeeds, KeyBundle, KeyExtractors, MAX_TABLE_INPUT};
use crate::rng::RunStreams;
use crate::sets::{decode_selector, derive_set_family, partition_by_erasure, IndexSet, SetFamily};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Rounding allowance used in every floor/ceil of a real-valued size.
const ROUNDING_EPS: f64 = 1e-9;

/// Set sizes after integer rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    /// `|G| = |B| = floor(n (r + delta))`.
    pub set_size: usize,
    /// `|G~_L| = ceil(2 |G| / eps2~)`.
    pub gtilde_l: usize,
    /// `|G~_S| = ceil(m (1 - eps2~) / eps2~)`.
    pub gtilde_s: usize,
}

/// The real-valued rate formula before any feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateTerms {
    pub eps2_tilde: f64,
    pub theta_delta: f64,
    pub rate: f64,
}

/// `eps2~ = eps2 (1 - delta)`, `theta = delta (1 + 2 / eps2~)` and
/// `r = min{eps2~ (1 - eps1) / 3 - theta, eps1 - delta}`. The rate can come
/// out non-positive; [`plan`] rejects that.
pub fn achievable_rate(channel: &ChannelParams, delta: f64) -> RateTerms {
    let (e1, e2) = (channel.epsilon1(), channel.epsilon2());
    let eps2_tilde = e2 * (1.0 - delta);
    let theta_delta = delta * (1.0 + 2.0 / eps2_tilde);
    let rate = (eps2_tilde * (1.0 - e1) / 3.0 - theta_delta).min(e1 - delta);
    RateTerms { eps2_tilde, theta_delta, rate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n: usize,
    pub delta: f64,
    pub channel: ChannelParams,
    pub eps2_tilde: f64,
    pub theta_delta: f64,
    pub rate: f64,
    /// Key length `floor(n r)`.
    pub m: usize,
    pub sizes: SetSizes,
    pub backend: Backend,
    #[serde(with = "crate::hexseed")]
    pub master_seed: u64,
}

/// Derives every size of a run with block length `n`.
pub fn plan(n: usize, delta: f64, channel: ChannelParams) -> Result<ProtocolConfig> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InfeasibleParams(format!("delta = {delta} outside (0, 1)")));
    }
    let terms = achievable_rate(&channel, delta);
    if terms.eps2_tilde <= 0.0 {
        return Err(Error::InfeasibleParams("eps2 must be positive".into()));
    }
    if terms.rate <= 0.0 {
        return Err(Error::InfeasibleParams(format!(
            "rate {:.6} <= 0 at eps1 = {}, eps2 = {}, delta = {delta}",
            terms.rate,
            channel.epsilon1(),
            channel.epsilon2()
        )));
    }
    let nf = n as f64;
    let m = (nf * terms.rate + ROUNDING_EPS).floor() as usize;
    if m < 1 {
        return Err(Error::InfeasibleParams(format!("n = {n} gives m = 0 at rate {:.6}", terms.rate)));
    }
    let set_size = (nf * (terms.rate + delta) + ROUNDING_EPS).floor() as usize;
    let sizes = SetSizes {
        set_size,
        gtilde_l: ceil_tol(2.0 * set_size as f64 / terms.eps2_tilde),
        gtilde_s: ceil_tol(m as f64 * (1.0 - terms.eps2_tilde) / terms.eps2_tilde),
    };
    Ok(ProtocolConfig {
        n,
        delta,
        channel,
        eps2_tilde: terms.eps2_tilde,
        theta_delta: terms.theta_delta,
        rate: terms.rate,
        m,
        sizes,
        backend: Backend::UniversalHash,
        master_seed: 0,
    })
}

fn ceil_tol(x: f64) -> usize {
    (x - ROUNDING_EPS).ceil().max(0.0) as usize
}

impl ProtocolConfig {
    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    /// Overrides the derived sizes without any feasibility check. Meant for
    /// degenerate configurations in tests.
    pub fn with_sizes(mut self, m: usize, sizes: SetSizes) -> Self {
        self.m = m;
        self.sizes = sizes;
        self
    }

    /// `m / n`.
    pub fn realized_rate(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Input length of the `S0`/`S1` extractors.
    pub fn key_input_len(&self) -> usize {
        self.sizes.set_size + self.sizes.gtilde_s
    }

    /// Length of `Q` and `S_L`.
    pub fn selector_len(&self) -> usize {
        2 * self.sizes.set_size
    }

    /// Fails when the configured backend cannot be built at these sizes.
    pub fn check_backend(&self) -> Result<()> {
        if self.backend == Backend::RandomTable {
            let widest = self.sizes.gtilde_l.max(self.key_input_len());
            if widest > MAX_TABLE_INPUT {
                return Err(Error::Backend(format!(
                    "random table needs {widest} input bits at n = {}, limit {MAX_TABLE_INPUT}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn extractors(&self, seeds: &ExtractorSeeds) -> Result<KeyExtractors> {
        KeyExtractors::new(
            self.backend,
            seeds,
            self.sizes.gtilde_l,
            self.selector_len(),
            self.key_input_len(),
            self.m,
        )
    }
}

/// Bob's first public message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobSetsMsg {
    pub gtilde: IndexSet,
    pub btilde: IndexSet,
}

/// Everything Bob publishes: both of his messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobPublicMsg {
    pub sets: BobSetsMsg,
    pub masked_q: BitString,
    pub seeds: ExtractorSeeds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlicePublicMsg {
    pub cipher0: BitString,
    pub cipher1: BitString,
}

/// What Bob keeps between his phases.
#[derive(Debug, Clone)]
pub struct BobState {
    pub u: bool,
    pub family: SetFamily,
    pub y: ErasedString,
    pub s_l: BitString,
    extractors: Arc<KeyExtractors>,
}

impl BobState {
    /// Bob's second step for an already sampled family: computes `S_L` from
    /// `y|_{G~_L}` and masks `Q` with it.
    pub fn prepare(
        u: bool,
        family: SetFamily,
        y: ErasedString,
        seeds: ExtractorSeeds,
        extractors: Arc<KeyExtractors>,
    ) -> Result<(BobState, BobPublicMsg)> {
        let raw = known_bits(&y, &family.gtilde_l)?;
        let s_l = extractors.selector.extract(&raw)?;
        let masked_q = s_l.xor(&family.q).map_err(protocol_err)?;
        let msg = BobPublicMsg {
            sets: BobSetsMsg { gtilde: family.gtilde.clone(), btilde: family.btilde.clone() },
            masked_q,
            seeds,
        };
        Ok((BobState { u, family, y, s_l, extractors }, msg))
    }

    pub fn extractors(&self) -> &KeyExtractors {
        &self.extractors
    }
}

/// `y|_S`, failing if Bob is asked for a bit he did not receive.
fn known_bits(y: &ErasedString, set: &IndexSet) -> Result<BitString> {
    if let Some(i) = set.iter().find(|&i| i >= y.len() || y.is_erased(i)) {
        return Err(Error::Protocol(format!("index {i} is not known to Bob")));
    }
    y.value_bits().select(set)
}

fn protocol_err(e: Error) -> Error {
    match e {
        Error::Size(s) => Error::Protocol(s),
        other => other,
    }
}

/// Bob's side up to and including `S_L ^ Q`. Aborts surface as
/// `Err(Error::Aborted(_))` and no message is produced.
pub fn bob_phase<R: Rng + ?Sized>(
    y: &ErasedString,
    u: bool,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<(BobState, BobPublicMsg)> {
    if y.len() != cfg.n {
        return Err(Error::Protocol(format!("received {} symbols, expected {}", y.len(), cfg.n)));
    }
    let (e, ebar) = partition_by_erasure(y);
    let family = derive_set_family(&e, &ebar, u, cfg, rng)?;
    let seeds = ExtractorSeeds::sample(rng);
    let extractors = Arc::new(cfg.extractors(&seeds)?);
    BobState::prepare(u, family, y.clone(), seeds, extractors)
}

/// What Alice reconstructs from Bob's message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliceDerived {
    pub l0: IndexSet,
    pub l1: IndexSet,
    pub gtilde_l: IndexSet,
    pub gtilde_s: IndexSet,
    pub keys: KeyBundle,
}

/// Alice's step, building the extractors from the published seeds.
pub fn alice_phase(
    x: &BitString,
    k0: &BitString,
    k1: &BitString,
    msg: &BobPublicMsg,
    cfg: &ProtocolConfig,
) -> Result<AlicePublicMsg> {
    let extractors = cfg.extractors(&msg.seeds)?;
    alice_respond(x, k0, k1, msg, cfg, &extractors).map(|(reply, _)| reply)
}

/// Alice's step with extractors already built from `msg.seeds`.
pub fn alice_respond(
    x: &BitString,
    k0: &BitString,
    k1: &BitString,
    msg: &BobPublicMsg,
    cfg: &ProtocolConfig,
    extractors: &KeyExtractors,
) -> Result<(AlicePublicMsg, AliceDerived)> {
    let n = cfg.n;
    let bad = |what: String| Err(Error::Protocol(what));
    if x.len() != n {
        return bad(format!("|x| = {}, expected {n}", x.len()));
    }
    if k0.len() != cfg.m || k1.len() != cfg.m {
        return bad(format!("keys must be {} bits", cfg.m));
    }
    let BobSetsMsg { gtilde, btilde } = &msg.sets;
    if let Some(i) = gtilde.first_common(btilde) {
        return Err(Error::Disjointness(i));
    }
    if gtilde.iter().chain(btilde.iter()).any(|i| i >= n) {
        return bad("published index out of range".into());
    }
    let l = IndexSet::range(n).difference(&gtilde.union(btilde));
    if l.len() != cfg.selector_len() || msg.masked_q.len() != cfg.selector_len() {
        return bad(format!(
            "|L| = {}, |S_L ^ Q| = {}, expected {}",
            l.len(),
            msg.masked_q.len(),
            cfg.selector_len()
        ));
    }
    let (lcount, scount) = (cfg.sizes.gtilde_l, cfg.sizes.gtilde_s);
    if gtilde.len() < lcount + scount {
        return bad(format!("|G~| = {} too small", gtilde.len()));
    }
    let gtilde_l = gtilde.slice(0, lcount);
    let gtilde_s = gtilde.slice(lcount, scount);

    let s_l = extractors.selector.extract(&x.select(&gtilde_l)?)?;
    let q = msg.masked_q.xor(&s_l).map_err(protocol_err)?;
    let (l0, l1) = decode_selector(&l, &q)?;
    let key = |which: bool, part: &IndexSet| -> Result<BitString> {
        let raw = x.select(&part.union(&gtilde_s))?;
        extractors.key(which).extract(&raw).map_err(protocol_err)
    };
    let s0 = key(false, &l0)?;
    let s1 = key(true, &l1)?;
    let reply = AlicePublicMsg { cipher0: k0.xor(&s0)?, cipher1: k1.xor(&s1)? };
    let keys = KeyBundle { s_l, s0, s1, seeds: msg.seeds };
    Ok((reply, AliceDerived { l0, l1, gtilde_l, gtilde_s, keys }))
}

/// `K^ = cipher_U ^ S_U` with `S_U` computed from `y|_{L_U ∪ G~_S}`.
pub fn bob_finish(state: &BobState, msg: &AlicePublicMsg) -> Result<BitString> {
    let fam = &state.family;
    let raw = known_bits(&state.y, &fam.chosen(state.u).union(&fam.gtilde_s))?;
    let s_u = state.extractors.key(state.u).extract(&raw).map_err(protocol_err)?;
    let cipher = if state.u { &msg.cipher1 } else { &msg.cipher0 };
    cipher.xor(&s_u).map_err(protocol_err)
}

/// The public record `F`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub gtilde: IndexSet,
    pub btilde: IndexSet,
    pub masked_q: BitString,
    pub cipher0: BitString,
    pub cipher1: BitString,
    pub seeds: ExtractorSeeds,
}

impl Transcript {
    pub fn new(bob: &BobPublicMsg, alice: &AlicePublicMsg) -> Self {
        Self {
            gtilde: bob.sets.gtilde.clone(),
            btilde: bob.sets.btilde.clone(),
            masked_q: bob.masked_q.clone(),
            cipher0: alice.cipher0.clone(),
            cipher1: alice.cipher1.clone(),
            seeds: bob.seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliceView {
    pub k0: BitString,
    pub k1: BitString,
    pub x: BitString,
    pub transcript: Arc<Transcript>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobView {
    pub u: bool,
    pub y: ErasedString,
    pub transcript: Arc<Transcript>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EveView {
    pub z: ErasedString,
    pub transcript: Arc<Transcript>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyViews {
    pub alice: AliceView,
    pub bob: BobView,
    pub eve: EveView,
}

impl PartyViews {
    /// True when all three views hold the very same transcript object.
    pub fn share_transcript(&self) -> bool {
        Arc::ptr_eq(&self.alice.transcript, &self.bob.transcript)
            && Arc::ptr_eq(&self.bob.transcript, &self.eve.transcript)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    /// `Some` iff `J = 1`.
    pub abort: Option<AbortReason>,
    pub views: Option<PartyViews>,
    pub k_hat: Option<BitString>,
    pub sets: Option<SetFamily>,
    pub keys: Option<KeyBundle>,
    /// Alice's reconstruction of `(L0, L1)`.
    pub alice_sets: Option<(IndexSet, IndexSet)>,
    pub bob_msg: Option<BobPublicMsg>,
    pub realized_rate: f64,
}

impl ProtocolOutcome {
    /// The abort flag `J`.
    pub fn j(&self) -> u8 {
        self.abort.is_some() as u8
    }

    /// Whether `K^ = K_U`; `None` on abort.
    pub fn decoded_correctly(&self, k0: &BitString, k1: &BitString, u: bool) -> Option<bool> {
        self.k_hat.as_ref().map(|k| k == if u { k1 } else { k0 })
    }
}

/// Uniform `(K0, K1, U)` for a run.
pub fn sample_inputs<R: Rng + ?Sized>(m: usize, rng: &mut R) -> (BitString, BitString, bool) {
    let k0 = BitString::random(m, rng);
    let k1 = BitString::random(m, rng);
    (k0, k1, rng.random())
}

/// One full run: channel, Bob, Alice, Bob.
pub fn run_protocol(
    cfg: &ProtocolConfig,
    k0: &BitString,
    k1: &BitString,
    u: bool,
    streams: &mut RunStreams,
) -> Result<ProtocolOutcome> {
    if k0.len() != cfg.m || k1.len() != cfg.m {
        return Err(Error::Protocol(format!("keys must be {} bits", cfg.m)));
    }
    let x = BitString::random(cfg.n, &mut streams.alice);
    let (y, z) = transmit(&x, &cfg.channel, &mut streams.channel);
    let realized_rate = cfg.realized_rate();
    let (state, bob_msg) = match bob_phase(&y, u, cfg, &mut streams.bob) {
        Ok(v) => v,
        Err(Error::Aborted(reason)) => {
            return Ok(ProtocolOutcome {
                abort: Some(reason),
                views: None,
                k_hat: None,
                sets: None,
                keys: None,
                alice_sets: None,
                bob_msg: None,
                realized_rate,
            })
        }
        Err(e) => return Err(e),
    };
    // Alice's extractors are a deterministic function of the public seeds,
    // so she can share Bob's instances.
    let (alice_msg, derived) = alice_respond(&x, k0, k1, &bob_msg, cfg, state.extractors())?;
    let k_hat = bob_finish(&state, &alice_msg)?;
    let transcript = Arc::new(Transcript::new(&bob_msg, &alice_msg));
    let views = PartyViews {
        alice: AliceView { k0: k0.clone(), k1: k1.clone(), x, transcript: transcript.clone() },
        bob: BobView { u, y, transcript: transcript.clone() },
        eve: EveView { z, transcript },
    };
    Ok(ProtocolOutcome {
        abort: None,
        views: Some(views),
        k_hat: Some(k_hat),
        sets: Some(state.family),
        keys: Some(derived.keys),
        alice_sets: Some((derived.l0, derived.l1)),
        bob_msg: Some(bob_msg),
        realized_rate,
    })
}
