use std::collections::HashMap;
use std::path::PathBuf;

use deepsearch_core::config::EngineConfig;
use deepsearch_core::engine::Engine;
use deepsearch_core::eval::{load_dataset, render_table, run_eval, AgentKind, Scoring};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn engine() -> Engine {
    Engine::from_config(EngineConfig::load(&fixtures().join("eval.toml")).unwrap()).unwrap()
}

#[tokio::test]
async fn scripted_agents_score_as_constructed() {
    let items = load_dataset(&fixtures().join("eval/dataset.jsonl")).unwrap();
    let engine = engine();
    let mut reports = Vec::new();
    for (agent, expected) in [(AgentKind::NoSearch, 4), (AgentKind::React, 7), (AgentKind::MindSearch, 11)] {
        let r = run_eval(&items, agent, Scoring::Em, &engine).await;
        assert_eq!(r.overall.correct, expected, "{agent:?}: {:#?}", r.items);
        assert_eq!(r.overall.total, 12);
        let ids: Vec<&str> = r.items.iter().map(|i| i.id.as_str()).collect();
        let want: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, want);
        reports.push(r);
    }
    let react = &reports[1];
    let q12 = react.items.iter().find(|i| i.id == "q12").unwrap();
    assert!(q12.flagged);
    let mind = &reports[2];
    assert!(mind.items.iter().all(|i| i.pages_read >= 1));

    let table = render_table(&reports);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("| Agent"));
    assert!(lines[0].contains("| 2-hop | 3-hop | 4-hop | Overall |"));
    assert!(lines[2].contains("w/o Search Engine"));
    assert!(lines[4].contains("MindSearch"));
}

#[tokio::test]
async fn aggregates_recompute_from_report_rows() {
    let items = load_dataset(&fixtures().join("eval/dataset.jsonl")).unwrap();
    let report = run_eval(&items, AgentKind::React, Scoring::Em, &engine()).await;
    let jsonl = report.to_jsonl();
    let mut per_tag: HashMap<String, (usize, usize)> = HashMap::new();
    let mut overall = (0usize, 0usize);
    let mut aggregate = None;
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if let Some(a) = v.get("aggregate") {
            aggregate = Some(a.clone());
            continue;
        }
        let ok = v["verdict"].as_bool().unwrap() as usize;
        overall.0 += ok;
        overall.1 += 1;
        for t in v["tags"].as_array().unwrap() {
            let e = per_tag.entry(t.as_str().unwrap().to_string()).or_default();
            e.0 += ok;
            e.1 += 1;
        }
    }
    let aggregate = aggregate.unwrap();
    assert_eq!(aggregate["overall"]["correct"].as_u64().unwrap() as usize, overall.0);
    assert_eq!(aggregate["overall"]["total"].as_u64().unwrap() as usize, overall.1);
    for row in aggregate["per_tag"].as_array().unwrap() {
        let (c, t) = per_tag[row["tag"].as_str().unwrap()];
        assert_eq!(row["correct"].as_u64().unwrap() as usize, c);
        assert_eq!(row["total"].as_u64().unwrap() as usize, t);
    }
}

#[tokio::test]
async fn item_order_does_not_change_verdicts() {
    let items = load_dataset(&fixtures().join("eval/dataset.jsonl")).unwrap();
    let engine = engine();
    let forward = run_eval(&items, AgentKind::MindSearch, Scoring::Em, &engine).await;
    let mut reversed_items = items.clone();
    reversed_items.reverse();
    let reversed = run_eval(&reversed_items, AgentKind::MindSearch, Scoring::Em, &engine).await;
    let verdicts = |r: &deepsearch_core::eval::EvalReport| -> HashMap<String, (bool, String)> {
        r.items
            .iter()
            .map(|i| (i.id.clone(), (i.verdict, i.prediction.clone())))
            .collect()
    };
    assert_eq!(verdicts(&forward), verdicts(&reversed));
}

#[tokio::test]
async fn judge_scoring_uses_the_judge_template() {
    let items = load_dataset(&fixtures().join("eval/dataset.jsonl")).unwrap();
    let report = run_eval(&items[..3], AgentKind::NoSearch, Scoring::Judge, &engine()).await;
    assert_eq!(report.overall.correct, 3);
}
