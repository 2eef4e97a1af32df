use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pim_gemv::config::{DramTiming, IntraTileOrder, MemoryConfig, PimConfig, SystemConfig};
use pim_gemv::experiments::{run_experiment, Experiment};
use pim_gemv::planner::{plan_gemv, rearrange_matrix, restore_matrix};
use pim_gemv::problem::{reference_gemv, GemvData, GemvProblem};
use pim_gemv::sim::simulate;
use pim_gemv::suite::{random_instance, run_instance};
use pim_gemv::timing::{pim_speedup, price_counts};
use pim_gemv::trace::Counts;

fn counts() -> impl Strategy<Value = Counts> {
    let n = || 0u64..1_000_000;
    (n(), n(), n(), n(), n(), n(), n(), n(), n()).prop_map(|(a, b, c, d, e, f, g, h, i)| Counts {
        macs: a,
        iv_writes: b,
        row_switches: c,
        turnarounds: d,
        lane_reduce_steps: e,
        sf_ops: f,
        spills: g,
        reloads: h,
        spill_row_opens: i,
    })
}

// Integration tests have no lib.rs next to them for proptest to anchor
// regression files on.
fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(cases) }
}

fn with(cfg: &SystemConfig, kv: &str) -> SystemConfig {
    cfg.with_overrides([kv]).unwrap()
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn random_instances_match_reference(seed in any::<u64>()) {
        let inst = random_instance(0, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = run_instance(&inst);
        prop_assert!(r.pass(), "{}: {:?}", r.name, r.failures);
    }

    #[test]
    fn rearrange_round_trips(m in 1usize..300, k8 in 1usize..64, seed in any::<u64>(), row_major in any::<bool>()) {
        let p = GemvProblem::int8(m, k8 * 8);
        let planned = plan_gemv(&p, &SystemConfig::default()).unwrap();
        let map = &planned.parts[0].map;
        let w = GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(seed)).weights;
        let order = if row_major { IntraTileOrder::RowMajor } else { IntraTileOrder::ColumnMajor };
        let placed = rearrange_matrix(&w, map, order).unwrap();
        prop_assert_eq!(placed.len(), map.num_tiles() * map.m_tile * map.k_tile);
        prop_assert_eq!(restore_matrix(&placed, map, order).unwrap(), w);
    }

    #[test]
    fn pricing_is_linear_in_counts(a in counts(), b in counts(), tree in any::<bool>()) {
        let mem = MemoryConfig::default();
        let pim = PimConfig { has_reduction_tree: tree, ..PimConfig::default() };
        let t = DramTiming::derived(&mem);
        let mut sum = a;
        sum.add(&b);
        let (pa, pb, ps) = (price_counts(&a, &t, &pim), price_counts(&b, &t, &pim), price_counts(&sum, &t, &pim));
        prop_assert!((ps.pim_ns() - pa.pim_ns() - pb.pim_ns()).abs() <= 1e-9 * ps.pim_ns().max(1.0));
        let parts = ps.mac_ns + ps.iv_ns + ps.row_open_ns + ps.turnaround_ns + ps.reduce_ns + ps.sf_ns + ps.spill_ns;
        prop_assert!((parts - ps.pim_ns()).abs() <= 1e-9 * parts.max(1.0));
        if tree {
            prop_assert_eq!(ps.reduce_ns, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn sf_ops_do_not_grow_with_block_size(m in 64usize..2048, k128 in 1usize..24) {
        let base = SystemConfig::default();
        let p_for = |b: u32| {
            let cfg = with(&base, &format!("format.sf_block={b}"));
            let p = GemvProblem::new(m, k128 * 128, cfg.format.in_fmt(), cfg.format.out_fmt()).unwrap();
            pim_speedup(&p, &cfg).unwrap().counts.sf_ops
        };
        let ops: Vec<u64> = [32, 64, 128].into_iter().map(p_for).collect();
        prop_assert!(ops.windows(2).all(|w| w[1] <= w[0]), "{:?}", ops);
    }

    #[test]
    fn doubling_banks_halves_macs(mk in 2usize..5, kk in 2usize..5) {
        let p = GemvProblem::int8(1024 * mk, 1024 * kk);
        let base = SystemConfig::default();
        let macs = |banks: usize| {
            pim_speedup(&p, &with(&base, &format!("memory.banks_per_channel={banks}"))).unwrap().counts.macs
        };
        let (a, b) = (macs(16), macs(32));
        prop_assert_eq!(a, 2 * b);
    }
}

#[test]
fn sim_matches_reference_with_scales_and_split() {
    let cfg = with(&with(&SystemConfig::default(), "format.sf_block=32"), "knobs.split_k=2");
    let p = GemvProblem::new(300, 512, cfg.format.in_fmt(), cfg.format.out_fmt()).unwrap();
    let data = GemvData::random(&p, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(simulate(&p, &cfg, &data).unwrap().output, reference_gemv(&p, &data).unwrap());
}

#[test]
fn experiments_are_deterministic_and_self_consistent() {
    let cfg = SystemConfig::default();
    for e in [Experiment::SplitK, Experiment::SfSweep, Experiment::BaselineVsColmajor] {
        let (a, b) = (run_experiment(e, &cfg).unwrap(), run_experiment(e, &cfg).unwrap());
        assert_eq!(a.to_csv(), b.to_csv(), "{e}");
        for r in &a.rows {
            if let Some(s) = r.recomputed_speedup() {
                assert!((s - r.speedup).abs() <= 1e-9 * r.speedup, "{e} {} {}: {s} vs {}", r.variant, r.gemv, r.speedup);
            }
        }
    }
}
