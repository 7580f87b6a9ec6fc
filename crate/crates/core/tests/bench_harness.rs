use std::collections::BTreeMap;

use guided_rrt::bench::{emit_report, run_bench, BenchConfig, OracleKind, PlannerSpec, TrialRecord};
use guided_rrt::env::{save_scenario, GoalMode};
use guided_rrt::planner::PlannerConfig;

fn small(jobs: usize) -> BenchConfig {
    BenchConfig {
        n_trials: 8,
        matrix: vec![
            PlannerSpec::rrt(),
            PlannerSpec::rrt_star(),
            PlannerSpec::vlm(OracleKind::Noisy { p_wrong: 0.2 }, 0.85),
        ],
        planner: PlannerConfig {
            max_iterations: 300,
            goal_mode: GoalMode::BallOrRect,
            ..Default::default()
        },
        seed: 17,
        jobs,
        ..Default::default()
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let a = run_bench(&small(1)).unwrap();
    let b = run_bench(&small(4)).unwrap();
    assert_eq!(a.len(), 24);
    for (x, y) in a.iter().zip(&b) {
        assert!(x.same_outcome(y), "{x:?}\n{y:?}");
    }
}

#[test]
fn every_cell_sees_the_same_scenario_and_seed() {
    let cfg = small(1);
    for k in 0..cfg.n_trials {
        let a = cfg.scenario(k).unwrap();
        let b = cfg.scenario(k).unwrap();
        assert_eq!(save_scenario(&a), save_scenario(&b));
        let seeds: Vec<u64> = cfg.matrix.iter().map(|s| cfg.planner_config(k, s).rng_seed).collect();
        assert!(seeds.windows(2).all(|w| w[0] == w[1]));
    }
    assert_ne!(
        save_scenario(&cfg.scenario(0).unwrap()),
        save_scenario(&cfg.scenario(1).unwrap())
    );
}

#[test]
fn one_record_gives_header_and_one_row() {
    let cfg = BenchConfig {
        n_trials: 1,
        matrix: vec![PlannerSpec::rrt()],
        ..small(1)
    };
    let records = run_bench(&cfg).unwrap();
    let report = emit_report(&records).unwrap();
    assert_eq!(report.csv.lines().count(), 2);
}

/// Recomputes each cell's aggregates from the raw CSV columns and checks
/// them against the JSON summary.
#[test]
fn csv_rows_reaggregate_to_json_summary() {
    let records = run_bench(&small(0)).unwrap();
    let report = emit_report(&records).unwrap();

    #[derive(Default)]
    struct Acc {
        n: usize,
        ok: usize,
        iters_ok: f64,
        iters_all: f64,
        len: f64,
        queries: f64,
    }
    let mut rd = csv::Reader::from_reader(report.csv.as_bytes());
    let head = rd.headers().unwrap().clone();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    let (c_planner, c_oracle, c_gamma, c_status, c_iter, c_len, c_q) = (
        col("planner"),
        col("oracle_kind"),
        col("gamma"),
        col("status"),
        col("iterations"),
        col("path_length"),
        col("vlm_queries"),
    );
    let mut acc: BTreeMap<(String, String, String), Acc> = BTreeMap::new();
    for row in rd.records() {
        let row = row.unwrap();
        let a = acc
            .entry((row[c_planner].into(), row[c_oracle].into(), row[c_gamma].into()))
            .or_default();
        let it: f64 = row[c_iter].parse().unwrap();
        a.n += 1;
        a.iters_all += it;
        a.queries += row[c_q].parse::<f64>().unwrap();
        if &row[c_status] == "success" {
            a.ok += 1;
            a.iters_ok += it;
            a.len += row[c_len].parse::<f64>().unwrap();
        }
    }

    let cells: Vec<serde_json::Value> = serde_json::from_str(&report.json).unwrap();
    assert_eq!(cells.len(), acc.len());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    for c in &cells {
        let key = (
            c["planner"].as_str().unwrap().to_string(),
            c["oracle_kind"].as_str().unwrap().to_string(),
            c["gamma"].as_f64().map_or(String::new(), |g| g.to_string()),
        );
        let a = &acc[&key];
        assert_eq!(c["trials"].as_u64().unwrap() as usize, a.n);
        assert_eq!(c["successes"].as_u64().unwrap() as usize, a.ok);
        let rate = c["success_rate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert!(close(rate, a.ok as f64 / a.n as f64));
        assert!(close(
            c["mean_iterations_all"].as_f64().unwrap(),
            a.iters_all / a.n as f64
        ));
        assert!(close(c["mean_vlm_queries"].as_f64().unwrap(), a.queries / a.n as f64));
        if a.ok > 0 {
            assert!(close(
                c["mean_iterations_success"].as_f64().unwrap(),
                a.iters_ok / a.ok as f64
            ));
            assert!(close(c["mean_path_length"].as_f64().unwrap(), a.len / a.ok as f64));
        } else {
            assert!(c["mean_path_length"].is_null());
        }
    }
}

#[test]
fn csv_round_trips_records() {
    let records = run_bench(&small(1)).unwrap();
    let text = guided_rrt::bench::records_to_csv(&records).unwrap();
    let back: Vec<TrialRecord> = guided_rrt::bench::records_from_csv(&text).unwrap();
    assert_eq!(back, records);
}
