use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use userside::eval::GroupRule;
use userside::model::{ItemCatalog, ItemMeta, RecList};
use userside::oracle::fixtures::counterexample_lists;
use userside::provider::{train_bpr, BprConfig, EmbeddingMatrix, Metric};
use userside::recnet::RecommendationNetwork;
use userside::recovery::RecoveryConfig;
use userside_cli::engine::Engine;
use userside_cli::load::{Dataset, ProviderModel};
use userside_cli::service::{router, AppState, ServiceConfig};

const N: usize = 80;

/// 80 points on the 2-d additive recurrence; every fourth item is in `p`,
/// the rest in `o`.
fn fixture_state(cfg: ServiceConfig) -> AppState {
    let (a1, a2) = (0.754_877_666_246_692_8, 0.569_840_290_998_053_2);
    let rows: Vec<Vec<f64>> = (1..=N).map(|i| vec![(i as f64 * a1).fract(), (i as f64 * a2).fract()]).collect();
    let x = EmbeddingMatrix::from_rows(&rows).unwrap();
    let names: Vec<&str> = (0..N).map(|i| if i % 4 == 0 { "p" } else { "o" }).collect();
    let meta = (1..=N)
        .map(|i| ItemMeta {
            title: Some(format!("Film {i}")),
            year: Some(1970 + (i % 40) as i32),
            ..ItemMeta::default()
        })
        .collect();
    let dataset = Dataset {
        name: "fixture".into(),
        catalog: ItemCatalog::from_group_names(&names).unwrap().with_meta(meta).unwrap(),
        log: None,
        features: None,
    };
    let engine = Engine::new(
        ProviderModel::Embedding {
            x,
            metric: Metric::Euclidean,
        },
        60,
        RecoveryConfig::default(),
    )
    .unwrap();
    AppState::new(dataset, engine, cfg).unwrap()
}

fn app(cfg: ServiceConfig) -> Router {
    router(Arc::new(fixture_state(cfg)))
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, "GET", uri, None).await
}

async fn put_session(app: &Router, body: Value) -> (StatusCode, Value) {
    send(app, "PUT", "/api/session", Some(body)).await
}

#[tokio::test]
async fn browsing_and_search() {
    let app = app(ServiceConfig::default());
    let (s, v) = get(&app, "/api/items").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], N);
    assert_eq!(v["items"].as_array().unwrap().len(), 20);
    assert_eq!(v["items"][0], json!({"id": 1, "title": "Film 1", "year": 1971, "external_id": null, "label": null, "group": "p"}));

    let (_, v) = get(&app, "/api/items?query=film%207").await;
    assert_eq!(v["total"], 11, "Film 7 and Film 70..79");
    let (_, v) = get(&app, "/api/items?query=42").await;
    assert_eq!(v["items"][0]["id"], 42);
    let (_, v) = get(&app, "/api/items?page=5").await;
    assert_eq!(v["items"], json!([]));
    assert_eq!(get(&app, "/api/items?page=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items?page=x").await.0, StatusCode::BAD_REQUEST);

    let (s, v) = get(&app, "/api/items/6").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["id"].clone(), v["group"].clone()), (json!(6), json!("o")));
    assert_eq!(get(&app, "/api/items/81").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/items/0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items/abc").await.0, StatusCode::BAD_REQUEST);

    let (s, v) = get(&app, "/api/groups").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"rule": "attribute", "groups": {"o": 60, "p": 20}}));
}

#[tokio::test]
async fn recommendations_and_errors() {
    let app = app(ServiceConfig::default());
    let (s, provider) = get(&app, "/api/items/7/recommend?method=provider&tau=0&k=5").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(provider["list"].as_array().unwrap().len(), 5);
    assert_eq!(provider["trace"], json!([7]));
    for m in ["consul", "privaterank"] {
        let (_, r) = get(&app, &format!("/api/items/7/recommend?method={m}&tau=0&k=5")).await;
        assert_eq!(r["list"], provider["list"], "{m}");
    }
    for m in ["consul", "privatewalk", "privaterank", "pp"] {
        let (s, r) = get(&app, &format!("/api/items/7/recommend?method={m}&tau=2&k=5")).await;
        assert_eq!(s, StatusCode::OK);
        let counts = &r["group_counts"];
        if m != "pp" {
            assert!(counts["p"].as_u64().unwrap() >= 2 && counts["o"].as_u64().unwrap() >= 2, "{m}: {r}");
        }
        for field in ["list", "accesses", "group_counts", "trace", "fallback_used"] {
            assert!(r.get(field).is_some(), "{m}: {field}");
        }
    }

    let (s, v) = get(&app, "/api/items/7/recommend?method=magic&tau=0&k=5").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("magic"));
    assert_eq!(get(&app, "/api/items/7/recommend?method=oracle&tau=0&k=5").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items/7/recommend?method=consul&k=5").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items/7/recommend?method=consul&tau=-1&k=5").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items/7/recommend?method=consul&tau=0&k=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/items/99/recommend?method=consul&tau=0&k=5").await.0, StatusCode::NOT_FOUND);

    let (s, _) = get(&app, "/api/items/7/recommend?method=consul&tau=3&k=5").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = get(&app, "/api/items/7/recommend?method=consul&tau=25&k=50").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["group"], "p");
}

#[tokio::test]
async fn stats_sum_response_accesses() {
    let app = app(ServiceConfig::default());
    let mut total = 0;
    let mut calls = 0;
    for (src, m) in [(3, "consul"), (9, "privatewalk"), (9, "provider"), (12, "consul"), (5, "privaterank"), (5, "pp")] {
        let (s, r) = get(&app, &format!("/api/items/{src}/recommend?method={m}&tau=2&k=6")).await;
        assert_eq!(s, StatusCode::OK);
        total += r["accesses"].as_u64().unwrap();
        calls += 1;
    }
    get(&app, "/api/items/7/recommend?method=consul&tau=9&k=6").await;
    let (_, stats) = get(&app, "/api/stats").await;
    assert_eq!(stats["accesses"], total);
    assert_eq!(stats["requests"], calls);
    assert_eq!(stats["methods"]["consul"]["calls"], 2);
    assert_eq!(stats["methods"]["privaterank"]["accesses"], N);
}

#[tokio::test]
async fn responses_are_reproducible() {
    let a = app(ServiceConfig::default());
    let b = app(ServiceConfig::default());
    for m in ["privatewalk", "consul", "privaterank"] {
        let uri = format!("/api/items/11/recommend?method={m}&tau=3&k=8");
        let first = get(&a, &uri).await;
        assert_eq!(first, get(&a, &uri).await, "{m}");
        assert_eq!(first, get(&b, &uri).await, "{m}");
    }
}

#[tokio::test]
async fn sessions_carry_history_and_rules() {
    let app = app(ServiceConfig::default());
    let (_, provider) = get(&app, "/api/items/7/recommend?method=provider&tau=0&k=5").await;
    let hidden: Vec<u64> = provider["list"].as_array().unwrap()[..2].iter().map(|v| v.as_u64().unwrap()).collect();

    let (s, sess) = put_session(&app, json!({"history": hidden, "tau": 1, "k": 5, "method": "consul"})).await;
    assert_eq!(s, StatusCode::OK, "{sess}");
    let id = sess["session_id"].as_u64().unwrap();
    assert_eq!(sess["group_rule"], "attribute");

    let (s, r) = get(&app, &format!("/api/items/7/recommend?session={id}")).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    let list: Vec<u64> = r["list"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(list.len(), 5);
    assert!(list.iter().all(|i| !hidden.contains(i)));
    assert!(r["group_counts"]["p"].as_u64().unwrap() >= 1);
    let (_, r2) = get(&app, &format!("/api/items/7/recommend?session={id}&method=provider&tau=0")).await;
    assert_eq!(r2["list"].as_array().unwrap().len(), 5);
    assert!(r2["list"].as_array().unwrap().iter().all(|v| !hidden.contains(&v.as_u64().unwrap())));

    let (s, v) = put_session(&app, json!({"session_id": id, "tau": 3})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (s, v) = put_session(&app, json!({"session_id": id, "group_rule": "year-before:1990", "tau": 2})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let mut sorted = hidden.clone();
    sorted.sort_unstable();
    assert_eq!(v["history"], json!(sorted));
    let (_, g) = get(&app, &format!("/api/groups?session={id}")).await;
    assert_eq!(g["rule"], "year-before:1990");
    assert_eq!(g["groups"]["protected"], 40);
    let (_, r) = get(&app, &format!("/api/items/7/recommend?session={id}")).await;
    assert!(r["group_counts"]["protected"].as_u64().unwrap() >= 2, "{r}");

    let (s, v) = put_session(&app, json!({"session_id": id, "group_rule": "year-distance:5"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(get(&app, &format!("/api/groups?session={id}")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, &format!("/api/groups?session={id}&source=7")).await.0, StatusCode::OK);
    let (s, _) = get(&app, &format!("/api/items/7/recommend?session={id}")).await;
    assert_eq!(s, StatusCode::OK);

    for bad in [
        json!({"tau": 1}),
        json!({"k": 5}),
        json!({"tau": 1, "k": 5, "history": [81]}),
        json!({"tau": 1, "k": 5, "method": "oracle"}),
        json!({"tau": 1, "k": 5, "group_rule": "nonsense"}),
        json!({"tau": 1, "k": 5, "colour": "red"}),
    ] {
        assert_eq!(put_session(&app, bad.clone()).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
    assert_eq!(put_session(&app, json!({"session_id": 999, "tau": 0})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/items/7/recommend?session=999").await.0, StatusCode::NOT_FOUND);
    let (_, second) = put_session(&app, json!({"tau": 0, "k": 4})).await;
    assert_ne!(second["session_id"], id);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let app = app(ServiceConfig {
        session_ttl: Duration::ZERO,
        ..ServiceConfig::default()
    });
    let (_, sess) = put_session(&app, json!({"tau": 1, "k": 5, "method": "consul"})).await;
    let id = sess["session_id"].as_u64().unwrap();
    assert_eq!(get(&app, &format!("/api/items/7/recommend?session={id}")).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn crawl_cache_is_written_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("crawl.tsv");
    let cfg = ServiceConfig {
        crawl_cache: Some(cache.clone()),
        ..ServiceConfig::default()
    };
    let first = app(cfg.clone());
    let uri = "/api/items/4/recommend?method=privaterank&tau=2&k=6";
    let (s, a) = get(&first, uri).await;
    assert_eq!(s, StatusCode::OK);
    assert!(cache.is_file());
    let g = userside::io::read_network(&cache).unwrap();
    assert_eq!((g.len(), g.list_len()), (N, 6));
    let (_, b) = get(&app(cfg), uri).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn network_provider_defaults_k() {
    let lists = counterexample_lists().into_iter().map(RecList::into_vec).collect();
    let g = RecommendationNetwork::from_lists(lists).unwrap();
    let engine = Engine::new(ProviderModel::Network(g), 0, RecoveryConfig::default()).unwrap();
    let dataset = Dataset {
        name: "prop1".into(),
        catalog: ItemCatalog::single_group(5),
        log: None,
        features: None,
    };
    let app = router(Arc::new(AppState::new(dataset, engine, ServiceConfig::default()).unwrap()));
    let (s, r) = get(&app, "/api/items/3/recommend?method=consul&tau=0").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["list"], json!([2, 4]));
    assert_eq!(get(&app, "/api/items/3/recommend?method=consul&tau=0&k=3").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(put_session(&app, json!({"tau": 0, "history": [1]})).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn movielens_lists_are_balanced() {
    let ml = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k");
    if !ml.join("u.data").is_file() {
        eprintln!("skipping: {} not present", ml.display());
        return;
    }
    let dataset = Dataset::load(&ml).unwrap();
    let model = train_bpr(dataset.log.as_ref().unwrap(), &BprConfig::default()).unwrap();
    let engine = Engine::new(
        ProviderModel::Embedding {
            x: model.item_factors,
            metric: Metric::InnerProduct,
        },
        50,
        RecoveryConfig::default(),
    )
    .unwrap();
    let cfg = ServiceConfig {
        rule: GroupRule::YearBefore { year: 1990 },
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(AppState::new(dataset, engine, cfg).unwrap()));
    for src in [1, 50, 100, 181, 258] {
        let (s, r) = get(&app, &format!("/api/items/{src}/recommend?method=consul&tau=5&k=10")).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert_eq!(r["group_counts"], json!({"protected": 5, "other": 5}), "source {src}");
    }
}
