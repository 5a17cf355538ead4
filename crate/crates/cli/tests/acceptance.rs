//! Acceptance gate: one test per shipped guarantee. Each prints a single
//! `ACCEPTANCE n (<label>): PASS|FAIL` line (run with `--nocapture` to see
//! them live) and fails loudly with the specifics when a guarantee is not
//! met. Criterion 4 runs the full seasonal experiment and takes a few
//! minutes; everything else is fast.

use std::fs;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::process::Command;
use std::time::Instant;

use chrono::{Duration, TimeZone, Utc};
use pricecast_core::{
    assign_season, build_bp_mlp, build_paper_cnn, build_report, evaluate_model, generate_synthetic,
    mape, parse_price_csv, persistence_forecast, rmse, serialize_price_csv, train, Checkpoint,
    CnnSpec, MetricsRow, ModelKind, Prng, RunConfig, Season, SeasonDataset, SplitConfig,
    SummaryKind, Tensor,
};
use tempfile::TempDir;

fn criterion(n: usize, label: &str, body: impl FnOnce() + UnwindSafe) {
    let result = catch_unwind(body);
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} ({label}): {verdict}");
    if let Err(e) = result {
        resume_unwind(e);
    }
}

fn pricecast(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pricecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn acceptance_1_gradient_correctness() {
    criterion(1, "gradient correctness", || {
        let started = Instant::now();
        for kind in ["cnn", "bp"] {
            for seed in 0..100u64 {
                let out = pricecast(&["gradcheck", "--model", kind, "--seed", &seed.to_string()]);
                assert_eq!(
                    out.status.code(),
                    Some(0),
                    "{kind} seed {seed}: {}{}",
                    String::from_utf8_lossy(&out.stdout),
                    String::from_utf8_lossy(&out.stderr)
                );
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        println!("  200 gradient checks in {elapsed:.1} s");
        assert!(elapsed < 60.0, "gradcheck sweep took {elapsed:.1} s");
    });
}

#[test]
fn acceptance_2_shape_chain() {
    criterion(2, "shape chain", || {
        let spec = CnnSpec::default();
        assert_eq!(spec.stage_lengths().unwrap(), vec![23, 21, 10, 8, 4, 2, 1]);
        let mut rng = Prng::new(1);
        let model = build_paper_cnn(&spec, &mut rng).unwrap();
        let window = Tensor::from_vec(&[23], (0..23).map(|i| i as f64 / 23.0).collect()).unwrap();
        let y = pricecast_core::model_forward(&model, &window).unwrap();
        assert!(y.is_finite(), "scalar output is {y}");
    });
}

#[test]
fn acceptance_3_metric_oracles() {
    criterion(3, "metric oracles", || {
        let m = mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert!((m - 10.0).abs() < 1e-9, "mape {m}");
        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-9, "rmse {r}");

        let seasons = Season::ALL;
        let mapes = [5.36, 5.18, 5.38, 5.49];
        let rmses = [2.19, 2.85, 3.03, 4.13];
        let rows: Vec<MetricsRow> = (0..4)
            .map(|i| MetricsRow {
                model_name: "cnn".into(),
                season: seasons[i],
                mape: mapes[i],
                rmse: rmses[i],
                n: 100,
            })
            .collect();
        let report = build_report(rows).unwrap();
        let csv = report.to_csv();
        let avg_line = csv
            .lines()
            .find(|l| l.starts_with("cnn,Average,"))
            .expect("average row");
        assert_eq!(avg_line, "cnn,Average,5.35,3.05,400");
    });
}

/// The full experiment's data and split: seed-42 synthetic hours covering
/// 2015-01-01 through 2019-02-28, default train/test periods.
fn experiment_data() -> (pricecast_core::PriceSeries, SplitConfig) {
    let start = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
    let series = generate_synthetic(start, 36480, 42).unwrap();
    assert_eq!(
        series.records().last().unwrap().timestamp,
        Utc.with_ymd_and_hms(2019, 2, 28, 23, 0, 0).unwrap()
    );
    (series, SplitConfig::default())
}

fn train_season(kind: ModelKind, cfg: &RunConfig, ds: &SeasonDataset) -> pricecast_core::Model {
    let mut rng = Prng::new(cfg.train.seed);
    let mut model = match kind {
        ModelKind::Cnn => build_paper_cnn(&cfg.cnn, &mut rng).unwrap(),
        ModelKind::Bp => build_bp_mlp(&cfg.mlp, &mut rng).unwrap(),
    };
    model.norm_stats = ds.stats;
    model.meta.season = Some(ds.season);
    model.meta.seed = cfg.train.seed;
    let (trained, _) = train(model, &ds.train, &cfg.train).unwrap();
    trained
}

#[test]
fn acceptance_4_end_to_end_experiment() {
    criterion(4, "end-to-end synthetic experiment", || {
        let (series, split) = experiment_data();
        // Architecture selected on validation loss: kernel 2 beats the
        // kernel-3 default in every season's best validation MSE.
        let mut cfg = RunConfig::default();
        cfg.cnn.kernel = 2;
        cfg.split = split;
        let datasets =
            pricecast_core::build_seasonal_datasets(&series, &cfg.split, cfg.cnn.input_len)
                .unwrap();

        let started = Instant::now();
        let cnn_models: Vec<_> = Season::ALL
            .iter()
            .map(|&s| train_season(ModelKind::Cnn, &cfg, datasets.get(s)))
            .collect();
        let cnn_time = started.elapsed().as_secs_f64();
        println!("  CNN training: {cnn_time:.0} s for four seasons");

        let bp_models: Vec<_> = Season::ALL
            .iter()
            .map(|&s| train_season(ModelKind::Bp, &cfg, datasets.get(s)))
            .collect();

        let mut rows = Vec::new();
        let mut cnn_rows = Vec::new();
        let mut bp_rows = Vec::new();
        let mut pers_rows = Vec::new();
        for (i, &season) in Season::ALL.iter().enumerate() {
            let ds = datasets.get(season);
            let cnn_row = evaluate_model(&cnn_models[i], &ds.test).unwrap();
            let bp_row = evaluate_model(&bp_models[i], &ds.test).unwrap();
            let preds = persistence_forecast(&ds.test, &ds.stats).unwrap();
            let actual: Vec<f64> = ds
                .test
                .iter()
                .map(|w| ds.stats.denormalize(w.target).unwrap())
                .collect();
            let pers_row = MetricsRow {
                model_name: "persistence".into(),
                season,
                mape: mape(&actual, &preds).unwrap(),
                rmse: rmse(&actual, &preds).unwrap(),
                n: ds.test.len(),
            };
            println!(
                "  {season}: cnn {:.2} | bp {:.2} | persistence {:.2} (MAPE)",
                cnn_row.mape, bp_row.mape, pers_row.mape
            );
            cnn_rows.push(cnn_row.clone());
            bp_rows.push(bp_row.clone());
            pers_rows.push(pers_row.clone());
            rows.extend([cnn_row, bp_row, pers_row]);
        }

        let report = build_report(rows).unwrap();
        let pooled = report
            .summaries
            .iter()
            .find(|s| s.model_name == "cnn" && s.kind == SummaryKind::Pooled)
            .unwrap();
        println!("  cnn pooled MAPE {:.2}", pooled.mape);

        let beats_bp = Season::ALL
            .iter()
            .enumerate()
            .filter(|&(i, _)| cnn_rows[i].mape < bp_rows[i].mape)
            .count();
        let beats_pers = Season::ALL
            .iter()
            .enumerate()
            .filter(|&(i, _)| cnn_rows[i].mape < pers_rows[i].mape)
            .count();
        let yn = |ok: bool| if ok { "yes" } else { "NO" };
        println!(
            "  clause: CNN training under 300 s ({cnn_time:.0} s): {}",
            yn(cnn_time < 300.0)
        );
        println!(
            "  clause: cnn below persistence in all seasons ({beats_pers}/4): {}",
            yn(beats_pers == 4)
        );
        println!(
            "  clause: cnn pooled MAPE at most 10% ({:.2}): {}",
            pooled.mape,
            yn(pooled.mape <= 10.0)
        );
        println!(
            "  clause: cnn below bp in at least 3 seasons ({beats_bp}/4): {}",
            yn(beats_bp >= 3)
        );

        assert!(
            cnn_time < 300.0,
            "CNN training took {cnn_time:.0} s, budget 300 s"
        );
        for (i, &season) in Season::ALL.iter().enumerate() {
            assert!(
                cnn_rows[i].mape < pers_rows[i].mape,
                "{season}: cnn MAPE {:.4} not below persistence {:.4}",
                cnn_rows[i].mape,
                pers_rows[i].mape
            );
        }
        assert!(
            pooled.mape <= 10.0,
            "cnn pooled MAPE {:.4} above 10%",
            pooled.mape
        );
        assert!(
            beats_bp >= 3,
            "cnn beats bp in {beats_bp} of 4 seasons, need 3: cnn {:?} vs bp {:?}",
            cnn_rows.iter().map(|r| r.mape).collect::<Vec<_>>(),
            bp_rows.iter().map(|r| r.mape).collect::<Vec<_>>()
        );
    });
}

#[test]
fn acceptance_5_determinism() {
    criterion(5, "determinism", || {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("prices.csv");
        let cfg = tmp.path().join("fast.cfg");
        let out = pricecast(&[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--hours",
            "19200",
            "--seed",
            "42",
        ]);
        assert_eq!(out.status.code(), Some(0));
        fs::write(
            &cfg,
            "epochs = 3\ntrain_start = 2015-01-01\ntrain_end = 2016-01-01\n\
             test_start = 2016-03-01\ntest_end = 2017-03-01\n",
        )
        .unwrap();

        for run in ["run1", "run2"] {
            let out = pricecast(&[
                "train",
                "--data",
                data.to_str().unwrap(),
                "--config",
                cfg.to_str().unwrap(),
                "--model",
                "cnn",
                "--season",
                "winter",
                "--out",
                tmp.path().join(run).to_str().unwrap(),
            ]);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        let a = fs::read(tmp.path().join("run1/cnn_winter.ckpt")).unwrap();
        let b = fs::read(tmp.path().join("run2/cnn_winter.ckpt")).unwrap();
        assert_eq!(a, b, "identical runs produced different checkpoints");

        // save -> load -> save is byte-identical
        let text = String::from_utf8(a).unwrap();
        let loaded = Checkpoint::from_text(&text).unwrap();
        assert_eq!(loaded.to_text().unwrap(), text);
    });
}

#[test]
fn acceptance_6_pipeline_hygiene() {
    criterion(6, "pipeline hygiene", || {
        for (seed, year, train_days, test_days) in [
            (3u64, 2014i32, 450i64, 390i64),
            (17, 2015, 420, 400),
            (99, 2016, 480, 380),
        ] {
            let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
            let hours = ((train_days + test_days) * 24) as usize + 24;
            let series = generate_synthetic(start, hours, seed).unwrap();
            let split = SplitConfig {
                train_start: start,
                train_end: start + Duration::days(train_days),
                test_start: start + Duration::days(train_days),
                test_end: start + Duration::days(train_days + test_days),
            };
            let data = pricecast_core::build_seasonal_datasets(&series, &split, 23).unwrap();

            // Season partition: every test hour exactly once, right season.
            let mut targets = Vec::new();
            for ds in &data.seasons {
                for w in &ds.test {
                    assert_eq!(assign_season(w.target_time), ds.season);
                    targets.push(w.target_time);
                }
            }
            targets.sort();
            let expected = (split.test_end - split.test_start).num_hours() as usize;
            assert_eq!(targets.len(), expected, "seed {seed}: test-hour count");
            for (i, t) in targets.iter().enumerate() {
                assert_eq!(*t, split.test_start + Duration::hours(i as i64));
            }

            // No leakage: stats reproducible from train windows alone, and
            // no train target inside the test period.
            for ds in &data.seasons {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for w in &ds.train {
                    assert!(w.target_time < split.test_start);
                    for &v in w.input.data() {
                        let raw = ds.stats.denormalize(v).unwrap();
                        lo = lo.min(raw);
                        hi = hi.max(raw);
                    }
                    let t = ds.stats.denormalize(w.target).unwrap();
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
                assert!((lo - ds.stats.min).abs() < 1e-9);
                assert!((hi - ds.stats.max).abs() < 1e-9);
            }

            // Window contiguity against the raw series.
            for ds in &data.seasons {
                for w in ds.train.iter().chain(&ds.test).step_by(97) {
                    for (j, &v) in w.input.data().iter().enumerate() {
                        let t = w.target_time - Duration::hours((23 - j) as i64);
                        let idx = series.index_of(t).unwrap();
                        let raw = series.records()[idx].price;
                        assert_eq!(v.to_bits(), ds.stats.normalize(raw).unwrap().to_bits());
                    }
                }
            }

            // parse -> serialize -> parse identity.
            let text = serialize_price_csv(&series);
            let (reparsed, stats) = parse_price_csv(&text).unwrap();
            assert_eq!(stats.interpolated, 0);
            assert_eq!(reparsed.records().len(), series.records().len());
            for (x, y) in reparsed.records().iter().zip(series.records()) {
                assert_eq!(x.timestamp, y.timestamp);
                assert_eq!(x.price.to_bits(), y.price.to_bits());
            }
        }
    });
}
