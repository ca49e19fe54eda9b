use erasot_core::bits::BitString;
use erasot_core::extractor::ExtractorSeeds;
use erasot_core::info::entropy_of_counts;
use erasot_core::oracle::{exact_analysis, seed_family, ExactOptions, SeedAnalysis};
use erasot_core::sets::{assemble_family, check_erasure_counts, IndexSet};
use erasot_core::{plan, Backend, ChannelParams, Execution, ProtocolConfig};

fn oracle_cfg() -> ProtocolConfig {
    plan(8, 0.01, ChannelParams::new(0.375, 0.9).unwrap())
        .unwrap()
        .with_backend(Backend::RandomTable)
}

fn analyze(seeds: &[ExtractorSeeds], enumerate_keys: bool) -> Vec<SeedAnalysis> {
    let t = std::time::Instant::now();
    let out = exact_analysis(&oracle_cfg(), seeds, ExactOptions { enumerate_keys }, Execution::Parallel)
        .unwrap()
        .per_seed;
    eprintln!("{} seed(s), keys enumerated = {enumerate_keys}: {:?}", seeds.len(), t.elapsed());
    out
}

fn subsets(s: &IndexSet, k: usize) -> Vec<IndexSet> {
    let v = s.as_slice();
    (0u32..1 << v.len())
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| IndexSet::new((0..v.len()).filter(|j| m >> j & 1 == 1).map(|j| v[j]).collect()).unwrap())
        .collect()
}

/// `m - H(S_Ubar | sets, X|_{G~_S})` by direct counting over `X|_B`.
fn d_bar_direct(cfg: &ProtocolConfig, seeds: &ExtractorSeeds) -> f64 {
    let ext = cfg.extractors(seeds).unwrap();
    let eps1 = cfg.channel.epsilon1();
    let (mut weighted, mut total) = (0.0, 0.0);
    for mask in 0u64..1 << cfg.n {
        let e = IndexSet::from_mask(mask);
        let ebar = IndexSet::range(cfg.n).difference(&e);
        if check_erasure_counts(e.len(), ebar.len(), cfg).is_err() {
            continue;
        }
        let p_e = eps1.powi(e.len() as i32) * (1.0 - eps1).powi(ebar.len() as i32);
        let (gs, bs) = (subsets(&ebar, cfg.sizes.set_size), subsets(&e, cfg.sizes.set_size));
        let w = p_e / (gs.len() * bs.len()) as f64 / 2.0;
        for g in &gs {
            for b in &bs {
                for u in [false, true] {
                    let fam = assemble_family(&e, &ebar, g, b, u, cfg).unwrap();
                    let raw_set = fam.chosen(!u).union(&fam.gtilde_s);
                    let known: Vec<usize> = fam.gtilde_s.iter().collect();
                    let hidden: Vec<usize> = fam.chosen(!u).iter().collect();
                    let mut h = 0.0;
                    for v in 0u64..1 << known.len() {
                        let mut counts = vec![0u64; 1 << cfg.m];
                        for hv in 0u64..1 << hidden.len() {
                            let mut x = BitString::zeros(cfg.n);
                            for (j, &i) in known.iter().enumerate() {
                                x.set(i, v >> j & 1 == 1);
                            }
                            for (j, &i) in hidden.iter().enumerate() {
                                x.set(i, hv >> j & 1 == 1);
                            }
                            let s = ext.key(!u).extract(&x.select(&raw_set).unwrap()).unwrap();
                            counts[s.to_u64().unwrap() as usize] += 1;
                        }
                        h += entropy_of_counts(&counts) / (1u64 << known.len()) as f64;
                    }
                    weighted += w * (cfg.m as f64 - h);
                    total += w;
                }
            }
        }
    }
    weighted / total
}

#[test]
fn exact_invariants_hold_per_seed() {
    let cfg = oracle_cfg();
    let seeds = seed_family(0x5eed, 4);
    for a in analyze(&seeds, false) {
        assert!((a.mass - 1.0).abs() < 1e-9, "mass {}", a.mass);
        assert_eq!(a.pr_error, 0.0);
        assert!(a.mi_u_va.abs() <= 1e-6, "I(U; V_A) = {}", a.mi_u_va);
        for v in [a.mi_u_va, a.mi_kbar_vb, a.mi_all_ve, a.d_bar, a.d_joint, a.d_u] {
            assert!(v >= -1e-9, "{a:?}");
        }
        assert!(a.mi_kbar_vb <= a.d_bar + 1e-9, "{a:?}");
        // Bob knows everything but X|_B, so the bound is met with equality.
        assert!((a.mi_kbar_vb - a.d_bar).abs() < 1e-9, "{a:?}");
        // d_joint <= d_u + d_bar: conditioning on X|_G instead of S_U and Z only lowers entropy.
        assert!(a.d_joint <= a.d_u + a.d_bar + 1e-9, "{a:?}");
        assert!(a.d_bar <= cfg.m as f64 + 1e-9 && a.d_joint <= 2.0 * cfg.m as f64 + 1e-9);
        let direct = d_bar_direct(&cfg, &a.seeds);
        assert!((direct - a.d_bar).abs() < 1e-9, "direct {direct} vs {}", a.d_bar);
    }
}

#[test]
fn key_elimination_matches_full_enumeration() {
    let seeds = seed_family(0xfeed, 2);
    let reduced = analyze(&seeds, false);
    let full = analyze(&seeds, true);
    for (r, f) in reduced.iter().zip(&full) {
        for (a, b) in [
            (r.mi_u_va, f.mi_u_va),
            (r.mi_kbar_vb, f.mi_kbar_vb),
            (r.mi_all_ve, f.mi_all_ve),
            (r.pr_error, f.pr_error),
            (r.d_bar, f.d_bar),
            (r.d_joint, f.d_joint),
        ] {
            assert!((a - b).abs() < 1e-9, "{r:?}\n{f:?}");
        }
        assert!((f.mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let cfg = oracle_cfg();
    let seeds = seed_family(1, 1);
    let a = exact_analysis(&cfg, &seeds, ExactOptions::default(), Execution::Sequential).unwrap();
    let b = exact_analysis(&cfg, &seeds, ExactOptions::default(), Execution::Parallel).unwrap();
    assert_eq!(a, b);
}
