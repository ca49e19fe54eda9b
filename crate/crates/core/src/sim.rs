//! Monte Carlo trial farm.

use crate::error::{AbortReason, Result};
use crate::exec::Execution;
use crate::protocol::{run_protocol, sample_inputs, ProtocolConfig};
use crate::rng::RunStreams;
use serde::Serialize;
use std::collections::BTreeMap;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrialStats {
    pub trials: u64,
    pub aborts: u64,
    pub abort_reasons: BTreeMap<AbortReason, u64>,
    /// Non-aborted runs with `K^ != K_U`.
    pub decode_failures: u64,
    /// Non-aborted runs where Alice's `(L0, L1)` differs from Bob's.
    pub selector_mismatches: u64,
    /// Non-aborted runs violating a set-family invariant (including `|L0| = |L1|`).
    pub set_invariant_failures: u64,
    /// Non-aborted runs whose three views do not share one transcript.
    pub transcript_mismatches: u64,
    /// Non-aborted runs where Eve holds an unerased symbol at an index Bob lost.
    pub degradedness_failures: u64,
}

impl TrialStats {
    pub fn merge(&mut self, other: &TrialStats) {
        self.trials += other.trials;
        self.aborts += other.aborts;
        for (r, c) in &other.abort_reasons {
            *self.abort_reasons.entry(*r).or_default() += c;
        }
        self.decode_failures += other.decode_failures;
        self.selector_mismatches += other.selector_mismatches;
        self.set_invariant_failures += other.set_invariant_failures;
        self.transcript_mismatches += other.transcript_mismatches;
        self.degradedness_failures += other.degradedness_failures;
    }

    pub fn abort_estimate(&self) -> AbortEstimate {
        AbortEstimate::new(self.aborts, self.trials)
    }

    /// Sum of all invariant counters; zero on a healthy run.
    pub fn invariant_failures(&self) -> u64 {
        self.decode_failures
            + self.selector_mismatches
            + self.set_invariant_failures
            + self.transcript_mismatches
            + self.degradedness_failures
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbortEstimate {
    pub aborts: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl AbortEstimate {
    pub fn new(aborts: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(aborts, trials);
        let p_hat = if trials == 0 { 0.0 } else { aborts as f64 / trials as f64 };
        Self { aborts, trials, p_hat, ci_lo, ci_hi }
    }

    /// True when this interval lies entirely above `other`'s.
    pub fn separated_above(&self, other: &AbortEstimate) -> bool {
        self.ci_lo > other.ci_hi
    }
}

/// Runs trial `index` of the stream family `master` and tallies it.
pub fn run_trial(cfg: &ProtocolConfig, master: u64, index: u64) -> Result<TrialStats> {
    let mut streams = RunStreams::for_trial(master, index);
    let (k0, k1, u) = sample_inputs(cfg.m, &mut streams.inputs);
    let out = run_protocol(cfg, &k0, &k1, u, &mut streams)?;
    let mut stats = TrialStats { trials: 1, ..Default::default() };
    if let Some(reason) = out.abort {
        stats.aborts = 1;
        stats.abort_reasons.insert(reason, 1);
        return Ok(stats);
    }
    if out.decoded_correctly(&k0, &k1, u) != Some(true) {
        stats.decode_failures = 1;
    }
    let fam = out.sets.as_ref().expect("non-aborted run has sets");
    if out.alice_sets.as_ref() != Some(&(fam.l0.clone(), fam.l1.clone())) {
        stats.selector_mismatches = 1;
    }
    if fam.check_invariants(cfg.n).is_err() || fam.l0.len() != fam.l1.len() {
        stats.set_invariant_failures = 1;
    }
    let views = out.views.as_ref().expect("non-aborted run has views");
    if !views.share_transcript() {
        stats.transcript_mismatches = 1;
    }
    let (y, z) = (&views.bob.y, &views.eve.z);
    if (0..cfg.n).any(|i| y.is_erased(i) && !z.is_erased(i)) {
        stats.degradedness_failures = 1;
    }
    Ok(stats)
}

/// Runs `trials` independent protocol executions. Trial `t` uses
/// `RunStreams::for_trial(master, t)`, so the totals do not depend on `exec`.
pub fn run_trials(cfg: &ProtocolConfig, trials: u64, master: u64, exec: Execution) -> Result<TrialStats> {
    cfg.check_backend()?;
    const CHUNK: u64 = 256;
    let chunks = trials.div_ceil(CHUNK);
    let partials = exec.map_range(chunks, |c| -> Result<TrialStats> {
        let mut acc = TrialStats::default();
        for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            acc.merge(&run_trial(cfg, master, t)?);
        }
        Ok(acc)
    });
    let mut total = TrialStats::default();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

/// Monte Carlo estimate of `P[J = 1]` with a Wilson 95% interval.
pub fn estimate_abort_probability(
    cfg: &ProtocolConfig,
    trials: u64,
    master: u64,
    exec: Execution,
) -> Result<AbortEstimate> {
    Ok(run_trials(cfg, trials, master, exec)?.abort_estimate())
}
