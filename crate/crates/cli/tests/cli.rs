use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use userside::io;
use userside::model::{ItemCatalog, ItemId, ItemMeta};
use userside::oracle::fixtures::counterexample_lists;
use userside::provider::{EmbeddingMatrix, Interaction, InteractionLog};
use userside::recnet::RecommendationNetwork;

fn userside(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_userside"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn counterexample_network(dir: &Path) -> PathBuf {
    let lists = counterexample_lists().into_iter().map(|l| l.into_vec()).collect();
    let path = dir.join("prop1.tsv");
    io::write_network(&path, &RecommendationNetwork::from_lists(lists).unwrap()).unwrap();
    path
}

/// Points of the 2-d additive recurrence, evenly spread over the unit square.
fn r2_cloud(n: usize) -> EmbeddingMatrix {
    let (a1, a2) = (0.754_877_666_246_692_8, 0.569_840_290_998_053_2);
    let rows: Vec<Vec<f64>> = (1..=n).map(|i| vec![(i as f64 * a1).fract(), (i as f64 * a2).fract()]).collect();
    EmbeddingMatrix::from_rows(&rows).unwrap()
}

/// Two item groups with timestamps; users mostly stay inside one block.
fn write_small_dataset(dir: &Path) {
    let n = 40u32;
    let names: Vec<&str> = (0..n).map(|i| if i < 16 { "a" } else { "b" }).collect();
    let meta = (1..=n)
        .map(|i| ItemMeta {
            title: Some(format!("Item {i}")),
            ..ItemMeta::default()
        })
        .collect();
    let catalog = ItemCatalog::from_group_names(&names).unwrap().with_meta(meta).unwrap();
    let mut events = Vec::new();
    for u in 0..60u32 {
        for t in 0..8u32 {
            let item = if (u + t) % 5 == 0 { (u * 7 + t * 3) % n } else { (u % 2) * 20 + (u * 3 + t * 5) % 20 };
            events.push(Interaction {
                user: u,
                item: ItemId::new(item + 1),
                timestamp: Some(i64::from(t * 100 + u)),
            });
        }
    }
    io::write_catalog(&dir.join("catalog.tsv"), &catalog).unwrap();
    io::write_interactions(&dir.join("interactions.tsv"), &InteractionLog::new(events, n as usize).unwrap()).unwrap();
}

#[test]
fn consul_keeps_the_provider_list_on_the_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let net = counterexample_network(dir.path());
    for method in ["consul", "provider"] {
        let out = userside(&["recommend", "--provider", s(&net), "--method", method, "--tau", "0", "--source", "3"]);
        assert_eq!(out.status.code(), Some(0));
        let r = stdout_json(&out);
        assert_eq!(r["list"], serde_json::json!([2, 4]), "{method}");
        for field in ["accesses", "group_counts", "trace", "fallback_used"] {
            assert!(r.get(field).is_some(), "{field} missing");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let net = counterexample_network(dir.path());
    let catalog = dir.path().join("catalog.tsv");
    io::write_catalog(&catalog, &ItemCatalog::from_group_names(&["x", "y", "x", "y", "x"]).unwrap()).unwrap();

    let infeasible = userside(&[
        "recommend", "--provider", s(&net), "--catalog", s(&catalog), "--method", "consul", "--tau", "2", "--source", "3",
    ]);
    assert_eq!(infeasible.status.code(), Some(3), "{}", String::from_utf8_lossy(&infeasible.stderr));

    let balanced = userside(&[
        "recommend", "--provider", s(&net), "--catalog", s(&catalog), "--method", "consul", "--tau", "1", "--source", "3",
    ]);
    let r = stdout_json(&balanced);
    assert_eq!(r["group_counts"], serde_json::json!({"x": 1, "y": 1}));

    let bad_method = userside(&["recommend", "--provider", s(&net), "--method", "magic", "--tau", "0", "--source", "3"]);
    assert_eq!(bad_method.status.code(), Some(2));

    let missing = userside(&["recommend", "--provider", "/nonexistent/g.tsv", "--method", "consul", "--tau", "0", "--source", "3"]);
    assert_eq!(missing.status.code(), Some(2));

    let unknown_item = userside(&["recommend", "--provider", s(&net), "--method", "consul", "--tau", "0", "--source", "9"]);
    assert_eq!(unknown_item.status.code(), Some(2));

    let oracle_on_network = userside(&["recommend", "--provider", s(&net), "--method", "oracle", "--tau", "0", "--source", "3"]);
    assert_eq!(oracle_on_network.status.code(), Some(2));

    assert_eq!(userside(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn evaluate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    write_small_dataset(&data);
    let run = |out: &Path| {
        userside(&[
            "evaluate",
            "--dataset",
            s(&data),
            "--k",
            "6",
            "--tau",
            "2",
            "--rule",
            "attribute",
            "--method",
            "provider,consul,privatewalk,privaterank,pp,oracle",
            "--epochs",
            "5",
            "--seed",
            "11",
            "--out",
            s(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = run(&a);
    let rb = run(&b);
    let report = stdout_json(&ra);
    assert_eq!(ra.stdout, rb.stdout);
    for f in ["report.json", "report.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(report["cases"], 60);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for row in rows {
        assert!(row["ndcg"].as_f64().is_some());
        let sound = row["method"] != "provider" && row["method"] != "pp";
        if sound {
            assert_eq!(row["fairness_violations"], 0, "{row}");
        }
    }
    let tsv = fs::read_to_string(a.join("report.tsv")).unwrap();
    assert!(tsv.starts_with("method\tndcg\trecall\taccuracy\taccess\tfairness_violations\n"));
    assert_eq!(tsv.lines().count(), 7);
}

#[test]
fn crawl_recover_align_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.tsv");
    let x = r2_cloud(300);
    io::write_embedding(&truth, &x).unwrap();
    let net = dir.path().join("net.tsv");
    let out = userside(&["crawl", "--provider", s(&truth), "--k", "42", "--out", s(&net)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(io::read_network(&net).unwrap().num_edges(), 300 * 42);

    let est = dir.path().join("est.tsv");
    let out = userside(&["recover", "--network", s(&net), "--d", "2", "--out", s(&est)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report_file = dir.path().join("align.json");
    let a = stdout_json(&userside(&["align", "--embedding", s(&est), "--reference", s(&truth), "--out", s(&report_file)]));
    let error = a["error"].as_f64().unwrap();
    assert!(error < 0.15, "alignment error {error}");
    assert_eq!(a["rotation"].as_array().unwrap().len(), 2);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&report_file).unwrap()).unwrap();
    assert_eq!(saved, a);

    let dmds = dir.path().join("dmds.tsv");
    let out = userside(&["recover", "--network", s(&net), "--d", "2", "--recovery", "density-mds", "--out", s(&dmds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = stdout_json(&userside(&["align", "--embedding", s(&dmds), "--reference", s(&truth)]));
    assert!(a["error"].as_f64().unwrap() < 0.25, "{a}");
}

#[test]
fn ingest_train_and_recommend_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir(&raw).unwrap();
    write_small_dataset(&raw);

    let ingested = dir.path().join("ingested");
    let out = userside(&["ingest", "--dataset", s(&raw), "--out", s(&ingested)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(ingested.join("catalog.tsv")).unwrap(),
        fs::read_to_string(raw.join("catalog.tsv")).unwrap()
    );

    let emb = dir.path().join("bpr.tsv");
    let out = userside(&["train-provider", "--provider", "bpr", "--dataset", s(&ingested), "--epochs", "5", "--out", s(&emb)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&emb).unwrap().starts_with("# metric=inner-product\nitem_id\t"));

    let no_features = userside(&["train-provider", "--provider", "knn", "--dataset", s(&ingested), "--out", s(&emb)]);
    assert_eq!(no_features.status.code(), Some(2));

    let base = ["recommend", "--provider", s(&emb), "--dataset", s(&ingested), "--source", "5", "--k", "6"];
    let provider = stdout_json(&userside(&[&base[..], &["--method", "provider", "--tau", "0"]].concat()));
    let consul0 = stdout_json(&userside(&[&base[..], &["--method", "consul", "--tau", "0"]].concat()));
    assert_eq!(provider["list"], consul0["list"]);

    let hidden_id = provider["list"][0].as_u64().unwrap();
    let hidden = hidden_id.to_string();
    let fair = stdout_json(&userside(&[&base[..], &["--method", "consul", "--tau", "3", "--history", &hidden]].concat()));
    assert_eq!(fair["group_counts"], serde_json::json!({"a": 3, "b": 3}));
    assert!(fair["list"].as_array().unwrap().iter().all(|v| v.as_u64() != Some(hidden_id)));

    let needs_k = userside(&["recommend", "--provider", s(&emb), "--source", "5", "--method", "consul", "--tau", "0"]);
    assert_eq!(needs_k.status.code(), Some(2));
}

#[test]
fn ingests_movielens() {
    let ml = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k");
    if !ml.join("u.data").is_file() {
        eprintln!("skipping: {} not present", ml.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = userside(&["ingest", "--dataset", s(&ml), "--rule", "oldness", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let catalog = io::read_catalog(&dir.path().join("catalog.tsv")).unwrap();
    assert_eq!(catalog.len(), 1682);
    let mut groups = catalog.group_names().to_vec();
    groups.sort();
    assert_eq!(groups, ["other", "protected"]);
    let log = io::read_interactions(&dir.path().join("interactions.tsv"), 1682).unwrap();
    assert_eq!(log.len(), 100_000);
}
