//! Independent reference implementations used by the property checks.

use std::collections::BTreeMap;
use std::time::Duration;

use medsql_core::demo_store::{DemoSource, DemoStore, Demonstration};
use medsql_core::eval_harness::EvalOutcome;
use rand::Rng;

pub fn demo(id: String, embedding: Vec<f64>) -> Demonstration {
    Demonstration {
        question: format!("question {id}"),
        id,
        relevant_tables: vec!["t".into()],
        sql: "SELECT 1".into(),
        source: DemoSource::Benchmark,
        embedding,
    }
}

pub fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

pub fn store_of(vectors: &[Vec<f64>]) -> DemoStore {
    let mut store = DemoStore::new(vectors[0].len());
    for (i, v) in vectors.iter().enumerate() {
        store.insert(demo(format!("d{i:04}"), v.clone())).unwrap();
    }
    store
}

/// Scores every demo, then a full sort: similarity descending, id ascending.
pub fn brute_force_top_k(store: &DemoStore, q: &[f64], k: usize) -> Vec<String> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, &str)> = store
        .demos()
        .iter()
        .map(|d| {
            let dot: f64 = d.embedding.iter().zip(q).map(|(a, b)| a * b).sum();
            (dot / (norm(&d.embedding) * norm(q)), d.id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

pub fn outcome(id: String, matched: bool, abstained: bool) -> EvalOutcome {
    EvalOutcome {
        item_id: id,
        generated_result: None,
        gold_result: None,
        generated_sql: None,
        abstained,
        abstain_reason: None,
        matched,
        attempts: 1,
        gold_error: None,
        latency: Duration::from_millis(1),
    }
}

/// A random evaluation: (outcomes, answerable map).
pub fn random_outcomes(rng: &mut impl Rng, all_answerable: bool) -> (Vec<EvalOutcome>, BTreeMap<String, bool>) {
    let n = rng.random_range(1..60);
    let mut outcomes = Vec::with_capacity(n);
    let mut answerable = BTreeMap::new();
    for i in 0..n {
        let id = format!("q{i}");
        let abstained = rng.random_bool(0.3);
        let matched = !abstained && rng.random_bool(0.6);
        answerable.insert(id.clone(), all_answerable || rng.random_bool(0.7));
        outcomes.push(outcome(id, matched, abstained));
    }
    (outcomes, answerable)
}

pub fn rs0_loop(outcomes: &[EvalOutcome], answerable: &BTreeMap<String, bool>) -> f64 {
    let mut good = 0;
    for o in outcomes {
        let a = answerable[&o.item_id];
        if a && o.matched {
            good += 1;
        } else if !a && o.abstained {
            good += 1;
        }
    }
    good as f64 / outcomes.len() as f64
}
