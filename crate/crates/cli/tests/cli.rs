use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use perflab::model::{self, ModelOptions, ModelVersion};
use perflab::sim;
use perflab_cli::scenario::{Point, Scenario};
use serde_json::{json, Value};
use tempfile::TempDir;

fn repo_scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["ddnn-perflab"];
    full.extend_from_slice(args);
    perflab_cli::main_with_args(full)
}

fn base_scenario() -> Value {
    json!({
        "name": "small",
        "workload": {"d": 4096, "n_f": 2, "d_i": 2, "d_h": 100, "d_o": 2, "epoch": 2, "b": 64},
        "cluster": {"w": 4, "cache_bytes": 1_000_000, "io_mode": "sequential-full-read"},
        "costs": {"c_p": 2e-5, "c_b": 1e-3, "c_u": 1e-4, "r_d": 5e-9,
                  "r_m_cache": 2e-11, "r_m_mem": 2e-9, "r_net": 8e-10},
        "sweep": {"workers": [1, 2, 4, 8, 128], "batch_sizes": [16, 64], "hidden_dims": [100]},
        "modes": {"run_model_v1": true, "run_model_v2": true, "run_sim": true}
    })
}

fn write_scenario(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join(format!("{}.json", value["name"].as_str().unwrap()));
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Data rows of a versioned CSV as header-keyed maps.
fn read_table(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let (first, body) = text.split_once('\n').unwrap();
    assert_eq!(first, "# ddnn-perflab v1");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

#[test]
fn sweep_rows_match_direct_library_calls() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(dir.path(), &base_scenario());
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);

    let scenario = Scenario::load(&path).unwrap();
    let rows = read_table(&out.join("small.sweep.csv"));
    assert_eq!(rows.len(), 5 * 2 * 3);
    for row in &rows {
        let point = Point {
            w: num(row, "w") as u64,
            b: num(row, "b") as u64,
            d_h: num(row, "d_h") as u64,
        };
        if point.w == 128 && point.b == 64 {
            assert_eq!(row["status"], "skipped");
            assert_eq!(row["note"], "b=64 exceeds d/w=32");
            continue;
        }
        assert_eq!(row["status"], "ok");
        let (workload, cluster) = (scenario.workload_at(point), scenario.cluster_at(point));
        match row["source"].as_str() {
            "sim" => {
                let result = sim::run_simulation(&scenario.sim_config(point)).unwrap();
                assert_eq!(num(row, "t_total"), result.makespan);
                assert_eq!(num(row, "t_init"), result.init_end_time);
                assert_eq!(row["t_disk"], "");
            }
            source => {
                let version = if source == "model-v1" { ModelVersion::V1 } else { ModelVersion::V2 };
                let pred = model::predict(version, &workload, &cluster, &scenario.costs, &ModelOptions::default());
                assert_eq!(num(row, "t_total"), pred.t_total);
                assert_eq!(num(row, "t_memory"), pred.t_memory);
                assert_eq!(num(row, "t_network"), pred.t_network);
            }
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["simulator"] = json!({"compute_jitter": 0.1, "seed": 9});
    let path = write_scenario(dir.path(), &value);
    let out = dir.path().join("out");
    let args = ["sweep", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trace"];
    assert_eq!(run(&args), 0);
    let snapshot = |name: &str| fs::read(out.join(name)).unwrap();
    let first = (snapshot("small.sweep.csv"), snapshot("small.w4.b16.h100.trace.json"));
    assert_eq!(run(&args), 0);
    assert_eq!(first, (snapshot("small.sweep.csv"), snapshot("small.w4.b16.h100.trace.json")));
}

#[test]
fn single_point_v1_sweep_equals_model() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["sweep"] = json!({"workers": [4], "batch_sizes": [64], "hidden_dims": [100]});
    value["modes"] = json!({"run_model_v1": true});
    let path = write_scenario(dir.path(), &value);
    let out = dir.path().join("out");
    assert_eq!(run(&["sweep", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let rows = read_table(&out.join("small.sweep.csv"));
    assert_eq!(rows.len(), 1);
    let scenario = Scenario::load(&path).unwrap();
    let direct = model::t_total_v1(&scenario.workload, &scenario.cluster, &scenario.costs);
    assert_eq!(num(&rows[0], "t_total"), direct.t_total);
}

#[test]
fn json_format() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(dir.path(), &base_scenario());
    let out = dir.path().join("out");
    let code = run(&["sweep", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("small.sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["format"], "ddnn-perflab v1");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 30);
    assert_eq!(doc["rows"][0]["source"], "model-v1");
}

#[test]
fn invalid_scenarios_exit_1_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["costs"]["r_m_mem"] = json!(1e-12);
    let path = write_scenario(dir.path(), &value);
    let cli = perflab_cli::Cli {
        command: perflab_cli::Command::Sweep {
            common: perflab_cli::Common {
                scenario: path.clone(),
                out: Some(dir.path().join("out")),
                format: Default::default(),
            },
            trace: false,
        },
    };
    let err = perflab_cli::run(cli).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("costs.r_m_cache"), "{err}");
    assert_eq!(run(&["sweep", "--scenario", path.to_str().unwrap()]), 1);
    assert!(!dir.path().join("out").exists(), "validation must precede any work");

    fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["sweep", "--scenario", path.to_str().unwrap()]), 1);
}

#[test]
fn exit_codes_from_the_binary() {
    let bin = env!("CARGO_BIN_EXE_ddnn-perflab");
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let status = Command::new(bin)
        .args(["sweep", "--scenario", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("nope.json"));

    let status = Command::new(bin).args(["sweep", "--bogus"]).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(0));

    let path = write_scenario(dir.path(), &base_scenario());
    let out = dir.path().join("o");
    let status = Command::new(bin)
        .args(["trace", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join("small.trace.json").exists());
}

#[test]
fn trace_command_writes_valid_files() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["cluster"]["w"] = json!(2);
    let path = write_scenario(dir.path(), &value);
    let out = dir.path().join("out");
    assert_eq!(run(&["trace", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("small.trace.json")).unwrap()).unwrap();
    let events = doc["traceEvents"].as_array().unwrap();
    let reads: Vec<&Value> = events.iter().filter(|e| e["cat"] == "init-read").collect();
    assert_eq!(reads.len(), 2);
    let end0 = reads[0]["ts"].as_u64().unwrap() + reads[0]["dur"].as_u64().unwrap();
    assert_eq!(reads[1]["pid"], 1);
    assert_eq!(reads[1]["ts"].as_u64().unwrap(), end0);

    let profile = read_table(&out.join("small.profile.csv"));
    assert_eq!(profile.len(), 2);
    for row in &profile {
        let total: f64 = ["compute_pct", "barrier_pct", "wait_pct", "other_pct"].iter().map(|k| num(row, k)).sum();
        assert!((total - 100.0).abs() < 0.01);
    }

    let mut too_big = value.clone();
    too_big["cluster"]["w"] = json!(4096);
    let path = write_scenario(dir.path(), &too_big);
    assert_eq!(run(&["trace", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
}

#[test]
fn compare_on_shipped_scenario() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let scenario = repo_scenario("bluewaters.json");
    assert_eq!(run(&["compare", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let rows = read_table(&out.join("bluewaters.compare.csv"));
    assert_eq!(rows.len(), 14);
    for row in rows.iter().filter(|r| r["model"] == "model-v2") {
        assert!(num(row, "err_init") <= 1e-6, "{row:?}");
        if num(row, "w") > 16.0 {
            assert_eq!(row["server_saturated"], "true");
            assert!(num(row, "err_compute_phase") > 0.0);
        }
    }
    let sweep = read_table(&out.join("bluewaters.compare-summary.csv"));
    assert_eq!(sweep.len(), 6);
}

#[test]
fn compare_contention_free_is_exact_for_v1() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["costs"]["c_u"] = json!(0.0);
    value["costs"]["r_net"] = json!(0.0);
    value["cluster"]["io_mode"] = json!("partitioned-parallel");
    let path = write_scenario(dir.path(), &value);
    let out = dir.path().join("out");
    assert_eq!(run(&["compare", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let rows = read_table(&out.join("small.compare.csv"));
    assert!(!rows.is_empty());
    for row in rows.iter().filter(|r| r["model"] == "model-v1") {
        assert!(num(row, "err_total") <= 1e-6, "{row:?}");
    }
}

#[test]
fn compare_needs_sim_and_a_model() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["modes"] = json!({"run_model_v1": true});
    let path = write_scenario(dir.path(), &value);
    assert_eq!(run(&["compare", "--scenario", path.to_str().unwrap()]), 1);
}

#[test]
fn sweep_shows_knee_and_cache_cliff() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let bw = repo_scenario("bluewaters.json");
    assert_eq!(run(&["sweep", "--scenario", bw.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let sims: Vec<(f64, f64)> = read_table(&out.join("bluewaters.sweep.csv"))
        .iter()
        .filter(|r| r["source"] == "sim")
        .map(|r| (num(r, "w"), num(r, "t_compute_phase")))
        .collect();
    let best = sims.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 16.0);

    let mb = repo_scenario("mustang_batch.json");
    assert_eq!(run(&["sweep", "--scenario", mb.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let totals: Vec<(f64, f64)> = read_table(&out.join("mustang_batch.sweep.csv"))
        .iter()
        .filter(|r| r["source"] == "model-v1" && r["w"] == "4" && r["d_h"] == "10000")
        .map(|r| (num(r, "b"), num(r, "t_total")))
        .collect();
    let jumps: Vec<f64> = totals.windows(2).filter(|p| p[1].1 > p[0].1).map(|p| p[1].0).collect();
    assert_eq!(jumps, [128.0], "{totals:?}");
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

#[test]
fn calibrate_round_trip() {
    let dir = TempDir::new().unwrap();
    let mut value = base_scenario();
    value["costs"] = json!({"c_p": 1.0, "c_b": 1.0, "c_u": 1.0, "r_d": 1.0,
                            "r_m_cache": 1.0, "r_m_mem": 1.0, "r_net": 1.0, "c_contention": 3e-7});
    let path = write_scenario(dir.path(), &value);
    let scenario = Scenario::load(&path).unwrap();

    let truth = perflab::CostParams {
        c_p: 2e-5,
        c_b: 1e-3,
        c_u: 2e-4,
        r_d: 4e-9,
        r_m_cache: 2e-11,
        r_m_mem: 1e-9,
        r_net: 8e-10,
        t_phase_floor: 0.03,
        c_contention: 3e-7,
    };
    let bw = format!(
        "resource,bytes_per_second\ndisk,{}\nmem_cache,{}\nmem,{}\nnet,{}\n",
        1.0 / truth.r_d,
        1.0 / truth.r_m_cache,
        1.0 / truth.r_m_mem,
        1.0 / truth.r_net
    );
    let mut csv = String::from("w,b,n,t_total,t_init,t_compute_phase\n");
    let d = scenario.workload.d as f64;
    let mut rows = Vec::new();
    for b in [16u64, 64, 256] {
        rows.push((1u64, b));
    }
    // compute-bound, two aggregation-bound, two floor-bound
    rows.extend([(2u64, 16u64), (8, 16), (16, 16), (32, 64), (64, 64)]);
    for (w, b) in rows {
        let pred = model::t_total_v2(&scenario.workload.with_batch(b), &scenario.cluster.with_workers(w), &truth);
        csv.push_str(&format!(
            "{w},{b},{},{},{},{}\n",
            d / w as f64,
            pred.t_total,
            pred.t_init,
            pred.t_compute_phase
        ));
    }
    let m = write(&dir.path().join("m.csv"), &csv);
    let b = write(&dir.path().join("bw.csv"), &bw);
    let out = dir.path().join("out");
    let code = run(&[
        "calibrate",
        "--scenario",
        path.to_str().unwrap(),
        "--measurements",
        m.to_str().unwrap(),
        "--bandwidths",
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let fitted: perflab::CostParams =
        serde_json::from_str(&fs::read_to_string(out.join("small.costs.json")).unwrap()).unwrap();
    let pairs = [
        (fitted.c_p, truth.c_p),
        (fitted.c_b, truth.c_b),
        (fitted.c_u, truth.c_u),
        (fitted.t_phase_floor, truth.t_phase_floor),
        (fitted.r_d, truth.r_d),
        (fitted.r_m_cache, truth.r_m_cache),
        (fitted.r_m_mem, truth.r_m_mem),
        (fitted.r_net, truth.r_net),
        (fitted.c_contention, truth.c_contention),
    ];
    for (got, want) in pairs {
        assert!((got - want).abs() / want <= 1e-6, "{got} vs {want}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("small.fit.json")).unwrap()).unwrap();
    assert!(report["compute_fit"]["r_squared"].as_f64().unwrap() > 0.999_999);
}

#[test]
fn calibrate_reports_missing_column_and_bad_lines() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(dir.path(), &base_scenario());
    let b = write(
        &dir.path().join("bw.csv"),
        "resource,bytes_per_second\ndisk,1e9\nmem_cache,1e11\nmem,1e10\nnet,1e9\n",
    );
    let calibrate = |m: &Path| {
        perflab_cli::run(perflab_cli::Cli {
            command: perflab_cli::Command::Calibrate {
                common: perflab_cli::Common {
                    scenario: path.clone(),
                    out: Some(dir.path().join("out")),
                    format: Default::default(),
                },
                measurements: m.to_path_buf(),
                bandwidths: b.clone(),
            },
        })
    };
    let m = write(&dir.path().join("m.csv"), "w,b,t_total\n1,2,3\n");
    let err = calibrate(&m).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("`n`") && err.to_string().contains("m.csv"), "{err}");

    let m = write(&dir.path().join("m.csv"), "w,b,n,t_total\n1,2,3,4\n1,4,3,oops\n");
    let err = calibrate(&m).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");

    let err = calibrate(&dir.path().join("absent.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn calibrate_from_two_totals() {
    // Two totals only: 16 s on 2 nodes, 50 s on 64. With serialized reads
    // the init is w * t_disk(d); a constant computation phase C then gives
    // 16 = 2 T + C and 50 = 64 T + C, i.e. T = 34/62 s.
    let dir = TempDir::new().unwrap();
    let mut scenario: Value = serde_json::from_str(&fs::read_to_string(repo_scenario("bluewaters.json")).unwrap()).unwrap();
    scenario["name"] = json!("anchors");
    let path = write_scenario(dir.path(), &scenario);
    let loaded = Scenario::load(&path).unwrap();
    let bytes = loaded.workload.elem_bytes * loaded.workload.n_f * loaded.workload.d;
    let disk_bw = bytes as f64 / (34.0 / 62.0);
    let c = &loaded.costs;
    let b = write(
        &dir.path().join("bw.csv"),
        &format!(
            "resource,bytes_per_second\ndisk,{disk_bw}\nmem_cache,{}\nmem,{}\nnet,{}\n",
            1.0 / c.r_m_cache,
            1.0 / c.r_m_mem,
            1.0 / c.r_net
        ),
    );
    let m = write(&dir.path().join("m.csv"), "w,b,n,t_total\n2,256,8192,16\n64,256,256,50\n");
    let out = dir.path().join("out");
    let code = run(&[
        "calibrate",
        "--scenario",
        path.to_str().unwrap(),
        "--measurements",
        m.to_str().unwrap(),
        "--bandwidths",
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let fitted: perflab::CostParams =
        serde_json::from_str(&fs::read_to_string(out.join("anchors.costs.json")).unwrap()).unwrap();
    for (w, want) in [(2u64, 16.0), (64, 50.0)] {
        let pred = model::t_total_v2(&loaded.workload, &loaded.cluster.with_workers(w), &fitted);
        assert!((pred.t_total - want).abs() / want <= 0.05, "w={w}: {}", pred.t_total);
    }
}
