use pim_gemv::config::SystemConfig;
use pim_gemv::e2e::{catalog_models, evaluate_model, find_model, prompt_ns, InferenceScenario};
use pim_gemv::experiments::{run_experiment, Experiment, RowKind};
use pim_gemv::problem::GemvProblem;
use pim_gemv::timing::{pim_speedup, soc_gemv_time};

#[test]
fn catalog_reports() {
    let cfg = SystemConfig::default();
    let big = pim_speedup(&GemvProblem::int8(4096, 4096), &cfg).unwrap().speedup;
    let mut prev = 0.0;
    for m in catalog_models() {
        let r = evaluate_model(&m, &cfg).unwrap();
        println!("{} gemv {:.2} token {:.2} e2e {:.2} share {:.3}", r.model, r.gemv_speedup, r.per_token_speedup, r.e2e_speedup, r.soc.token_gen_fraction);
        assert!(r.soc.token_gen_fraction >= 0.85, "{}", r.model);
        assert!(r.e2e_speedup <= r.per_token_speedup, "{}", r.model);
        assert!(r.per_token_speedup <= r.gemv_speedup, "{}", r.model);
        // Bigger models spend more of each token in weight-bound GEMVs.
        assert!(r.per_token_speedup > prev, "{}", r.model);
        prev = r.per_token_speedup;
        if m.params >= 6_700_000_000 {
            assert!(r.gemv_speedup >= 0.9 * big, "{} {:.2} vs {big:.2}", r.model, r.gemv_speedup);
        }
    }
}

#[test]
fn soc_costs_match_hand_arithmetic() {
    let cfg = SystemConfig::default();
    // 16 MiB of int8 weights at 120 GB/s; compute would take about 1 us.
    let t = soc_gemv_time(&GemvProblem::int8(4096, 4096), &cfg.soc);
    assert!((t - 139_810.13).abs() < 0.01, "{t}");
    // 2 * 125e6 * 1920 flops at 33.2 TOPS.
    let m = find_model("125M").unwrap();
    let p = prompt_ns(&m, &InferenceScenario::from_config(&cfg.e2e), &cfg.soc);
    assert!((p - 14_457_831.3).abs() < 0.1, "{p}");
}

#[test]
fn e2e_experiment_reports_each_model() {
    let t = run_experiment(Experiment::E2e, &SystemConfig::default()).unwrap();
    let rows: Vec<_> = t.rows.iter().filter(|r| r.kind == RowKind::Model).collect();
    assert_eq!(rows.len(), 3 * catalog_models().len());
    for r in rows.iter().filter(|r| r.gemv == "per_token") {
        let f = r.token_gen_fraction.unwrap();
        assert!((0.85..=1.0).contains(&f), "{} {f}", r.model);
    }
}
