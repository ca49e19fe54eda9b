use erasot_core::extractor::{Extractor, KeyExtractors};
use erasot_core::oracle::{analyze_with_extractors, seed_family, ExactOptions, SeedAnalysis};
use erasot_core::{plan, Backend, ChannelParams, Execution, ProtocolConfig};

fn oracle_cfg() -> ProtocolConfig {
    plan(8, 0.01, ChannelParams::new(0.375, 0.9).unwrap())
        .unwrap()
        .with_backend(Backend::RandomTable)
}

fn corrupt(e: &Extractor, f: impl Fn(usize, u32) -> u32) -> Extractor {
    let Extractor::Table(t) = e else { panic!("random-table backend expected") };
    let mut t = t.clone();
    for i in 0..t.entries().len() {
        let v = f(i, t.lookup(i));
        t = t.with_entry(i, v);
    }
    Extractor::Table(t)
}

fn analyze(cfg: &ProtocolConfig, ext: KeyExtractors, seed_index: usize) -> SeedAnalysis {
    let seeds = seed_family(0xfa17, seed_index + 1)[seed_index];
    analyze_with_extractors(cfg, seeds, ext, ExactOptions::default(), Execution::Parallel).unwrap()
}

#[test]
fn corrupted_key_tables_keep_correctness_but_lose_uniformity() {
    let cfg = oracle_cfg();
    let seeds = seed_family(0xfa17, 1)[0];
    let clean = cfg.extractors(&seeds).unwrap();
    let base = analyze(&cfg, clean.clone(), 0);

    let mut constant = clean.clone();
    constant.key0 = corrupt(&clean.key0, |_, _| 0);
    constant.key1 = corrupt(&clean.key1, |_, _| 0);
    let broken = analyze(&cfg, constant, 0);

    for a in [&base, &broken] {
        assert_eq!(a.pr_error, 0.0);
        assert!(a.mi_u_va.abs() <= 1e-6);
        assert!((a.mass - 1.0).abs() < 1e-9);
    }
    // constant keys carry no entropy at all
    assert!((broken.d_bar - cfg.m as f64).abs() < 1e-9, "{broken:?}");
    assert!((broken.d_joint - 2.0 * cfg.m as f64).abs() < 1e-9, "{broken:?}");
    assert!(broken.d_bar > base.d_bar + 0.1);
    assert!(broken.mi_kbar_vb > base.mi_kbar_vb + 0.1);
}

#[test]
fn single_flipped_entry_changes_deficit_not_correctness() {
    let cfg = oracle_cfg();
    let seeds = seed_family(0xfa17, 1)[0];
    let clean = cfg.extractors(&seeds).unwrap();
    let base = analyze(&cfg, clean.clone(), 0);
    let mut flipped = clean.clone();
    flipped.key0 = corrupt(&clean.key0, |i, v| if i == 0 { v ^ 1 } else { v });
    flipped.key1 = corrupt(&clean.key1, |i, v| if i == 0 { v ^ 1 } else { v });
    let a = analyze(&cfg, flipped, 0);
    assert_eq!(a.pr_error, 0.0);
    assert!(a.mi_u_va.abs() <= 1e-6);
    assert!((a.d_bar - base.d_bar).abs() > 1e-6, "flip had no effect: {a:?}");
}
