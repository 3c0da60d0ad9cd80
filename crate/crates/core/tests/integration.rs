use maxway_core::conditioners::XLaw;
use maxway_core::data::{write_labeled_csv, write_surrogate_csv, write_unlabeled_csv, LabeledData, Table};
use maxway_core::engines::{
    pvalue_from_stats, run_engine, run_modelx_crt, EngineInputs, EngineKind, EnginePipeline, Overrides,
};
use maxway_core::harness::{adjusted_power, run_plan, EngineEntry, ExperimentPlan, Sweep};
use maxway_core::simgen::{gen_config1, gen_config2, gen_surrogate, ConfigKind, HForm, SimConfig, SurrogateModel};
use maxway_core::statistics::{StatContext, StatSpec};
use maxway_core::{MaxwayError, RngHandle};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn small_cfg(seed: u64) -> SimConfig {
    SimConfig { p: 15, n: 40, n_unlabeled: 50, seed: RngHandle::new(seed), ..Default::default() }
}

#[test]
fn csv_round_trip_reproduces_batches() {
    let batch = gen_config2(&SimConfig { config: ConfigKind::LogisticLinear, ..small_cfg(1) }).unwrap();
    let mut buf = Vec::new();
    write_labeled_csv(&batch.labeled, &mut buf).unwrap();
    let back = Table::read(buf.as_slice()).unwrap().to_labeled(None).unwrap();
    assert_eq!(back, batch.labeled);
    assert!(back.x_binary);

    let mut buf = Vec::new();
    write_unlabeled_csv(&batch.unlabeled, &mut buf).unwrap();
    assert_eq!(Table::read(buf.as_slice()).unwrap().to_unlabeled(None).unwrap(), batch.unlabeled);

    let surr = gen_surrogate(&batch, &SurrogateModel::NoisyCopy { sd: 0.3 }, &RngHandle::new(2)).unwrap();
    let mut buf = Vec::new();
    write_surrogate_csv(&surr, &mut buf).unwrap();
    assert_eq!(Table::read(buf.as_slice()).unwrap().to_surrogate(None).unwrap(), surr);
}

#[test]
fn engine_results_do_not_depend_on_thread_count() {
    let batch = gen_config1(&small_cfg(3)).unwrap();
    let inputs = EngineInputs { unlabeled: Some(&batch.unlabeled), ..EngineInputs::new(&batch.labeled) };
    for kind in [EngineKind::Modelx, EngineKind::MaxwayIn, EngineKind::Cpt] {
        let pipe = EnginePipeline { kind, m: 49, mcmc_steps: Some(300), ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_engine(&pipe, &inputs, &Overrides::default(), None, &RngHandle::new(4)).unwrap())
        };
        assert_eq!(run(1), run(4), "{kind}");
    }
}

#[test]
fn engine_p_values_match_their_resamples() {
    let batch = gen_config1(&small_cfg(5)).unwrap();
    let inputs = EngineInputs { unlabeled: Some(&batch.unlabeled), ..EngineInputs::new(&batch.labeled) };
    for kind in [EngineKind::Modelx, EngineKind::MaxwayIn, EngineKind::TransformedMaxway, EngineKind::Cpt, EngineKind::ModelXy] {
        for stat in [StatSpec::D0, StatSpec::di(), StatSpec::InnerProduct] {
            let pipe = EnginePipeline { kind, stat: stat.clone(), m: 19, mcmc_steps: Some(200), ..Default::default() };
            let r = run_engine(&pipe, &inputs, &Overrides::default(), None, &RngHandle::new(6)).unwrap();
            assert_eq!(pvalue_from_stats(r.observed_stat, &r.resampled_stats).unwrap(), r.p_exact, "{kind} {}", stat.label());
            assert_eq!(r.resampled_stats.len(), 19);
        }
    }
}

#[test]
fn adding_an_engine_leaves_paired_results_unchanged() {
    let base = ExperimentPlan {
        sim: SimConfig { p: 12, n: 40, n_unlabeled: 40, h_form: HForm::Linear, ..Default::default() },
        engines: vec![EngineEntry::new(EnginePipeline { kind: EngineKind::MaxwayIn, m: 19, ..Default::default() })],
        reps: 3,
        alpha: 0.05,
        sweep: Sweep::NGrid(vec![40, 80]),
        parallelism: 1,
        master_seed: 8,
        surrogate: None,
    };
    let mut two = base.clone();
    two.engines.insert(0, EngineEntry::new(EnginePipeline { kind: EngineKind::Modelx, m: 19, ..Default::default() }));
    let a = run_plan(&base).unwrap();
    let b = run_plan(&two).unwrap();
    assert_eq!(a.batch_hashes, b.batch_hashes);
    for g in 0..2 {
        assert_eq!(a.cell("maxway_in", g).unwrap().p_values, b.cell("maxway_in", g).unwrap().p_values);
    }
    // distinct replications see distinct batches
    assert_ne!(a.batch_hashes[0][0], a.batch_hashes[0][1]);
}

#[test]
fn adjusted_power_requires_matching_grids() {
    let plan = ExperimentPlan {
        sim: SimConfig { p: 10, n: 30, n_unlabeled: 30, ..Default::default() },
        engines: vec![EngineEntry::new(EnginePipeline { kind: EngineKind::MaxwayIn, m: 9, ..Default::default() })],
        reps: 2,
        alpha: 0.05,
        sweep: Sweep::GammaGrid(vec![0.0, 1.0]),
        parallelism: 1,
        master_seed: 1,
        surrogate: None,
    };
    let rep = run_plan(&plan).unwrap();
    let curves = adjusted_power(&rep, &rep).unwrap();
    assert_eq!(curves.len(), 1);
    assert_eq!(curves[0].adjusted_power.len(), 2);
    let n_sweep = run_plan(&ExperimentPlan { sweep: Sweep::NGrid(vec![30]), ..plan.clone() }).unwrap();
    assert!(matches!(adjusted_power(&n_sweep, &rep), Err(MaxwayError::GridMismatch(_))));
    let other = run_plan(&ExperimentPlan {
        engines: vec![EngineEntry::new(EnginePipeline { kind: EngineKind::Modelx, m: 9, ..Default::default() })],
        ..plan
    })
    .unwrap();
    assert!(matches!(adjusted_power(&rep, &other), Err(MaxwayError::GridMismatch(_))));
}

#[test]
fn plan_json_round_trip() {
    let text = r#"{
        "sim": { "config": "II", "p": 30, "n": 50, "N": 100, "h_form": "linear_plus_interaction", "gamma": 0.2 },
        "engines": [
            { "name": "mx-oracle", "pipeline": { "kind": "modelx", "m": 49 }, "x_model": { "kind": "oracle" } },
            { "pipeline": { "kind": "maxway_in", "x_family": "logistic", "stat": { "kind": "dI", "intercept": false } } }
        ],
        "reps": 5,
        "sweep": { "gamma_grid": [0.0, 0.3] },
        "surrogate": { "kind": "threshold_count", "rate_ratio": 3.0 }
    }"#;
    let plan: ExperimentPlan = serde_json::from_str(text).unwrap();
    assert_eq!(plan.alpha, 0.05);
    assert_eq!(plan.parallelism, 1);
    assert_eq!(plan.engines[0].label(), "mx-oracle");
    assert_eq!(plan.sim.n_unlabeled, 100);
    plan.validate().unwrap();
    let again: ExperimentPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(again, plan);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_value_support_and_monotonicity(obs in -5.0f64..5.0, stats in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
        let p = pvalue_from_stats(obs, &stats).unwrap();
        prop_assert_eq!(p.denominator as usize, stats.len() + 1);
        prop_assert!(p.numerator >= 1 && p.numerator <= p.denominator);
        let higher = pvalue_from_stats(obs + 1.0, &stats).unwrap();
        prop_assert!(higher.numerator <= p.numerator);
    }

    #[test]
    fn modelx_crt_is_seed_deterministic(seed in 0u64..1000, n in 3usize..12) {
        let mut r = RngHandle::new(seed).rng();
        use rand::Rng;
        let y = Array1::from_shape_fn(n, |_| r.random::<f64>() - 0.5);
        let x = Array1::from_shape_fn(n, |_| r.random::<f64>());
        let data = LabeledData::new(y.clone(), x, Array2::zeros((n, 1)), false).unwrap();
        let ctx = StatContext::new(y.clone(), y, Array1::zeros(n), Array2::zeros((n, 0)), RngHandle::new(0)).unwrap();
        let law = XLaw::Gaussian { mean: Array1::zeros(n), sd: 1.0 };
        let a = run_modelx_crt(&data, &law, &ctx, &StatSpec::D0, 15, &RngHandle::new(seed)).unwrap();
        let b = run_modelx_crt(&data, &law, &ctx, &StatSpec::D0, 15, &RngHandle::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
