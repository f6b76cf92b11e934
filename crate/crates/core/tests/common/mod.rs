//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ordopt::cli::load_fixture;
use ordopt::{AttrSet, Catalog, CostParams, LabeledTree, QueryTree, SortOrder};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> (QueryTree, CostParams) {
    load_fixture(&fixtures_dir(), name).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

const POOL: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// Random subset of the first `universe` pool attributes with size in `lo..=hi`.
pub fn random_set(rng: &mut ChaCha8Rng, universe: usize, lo: usize, hi: usize) -> AttrSet {
    let k = rng.gen_range(lo..=hi.min(universe));
    POOL[..universe].choose_multiple(rng, k).copied().collect()
}

/// Random path of 1 to `max_n` nodes with sets of 0 to 3 attributes.
pub fn random_path(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<AttrSet> {
    let n = rng.gen_range(1..=max_n);
    (0..n).map(|_| random_set(rng, 5, 0, 3)).collect()
}

/// Random rooted binary tree of 1 to `max_n` nodes with sets of 0 to 3 attributes.
pub fn random_binary_tree(rng: &mut ChaCha8Rng, max_n: usize) -> LabeledTree {
    let n = rng.gen_range(1..=max_n);
    let sets = (0..n).map(|_| random_set(rng, 5, 0, 3)).collect();
    let mut kids = vec![0usize; n];
    let mut edges = Vec::new();
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&p| kids[p] < 2).collect();
        let p = *open.choose(rng).expect("a binary tree always has an open slot");
        kids[p] += 1;
        edges.push((p, v));
    }
    LabeledTree::new(sets, &edges).expect("generated edges form a binary tree")
}

fn random_order(rng: &mut ChaCha8Rng, s: &AttrSet, max_len: usize) -> Vec<String> {
    let mut v: Vec<String> = s.iter().map(|a| a.as_str().to_string()).collect();
    v.shuffle(rng);
    v.truncate(rng.gen_range(0..=max_len.min(v.len())));
    v
}

/// A small random catalog and SPJG query over attributes `a..d`, so every
/// join and group-by has at most four attributes.
pub fn random_query(rng: &mut ChaCha8Rng) -> (Catalog, Value) {
    let nrel = rng.gen_range(1..=3);
    let mut rels = Vec::new();
    let mut indices = Vec::new();
    let mut cols_of = Vec::new();
    let mut seen = AttrSet::new();
    for i in 0..nrel {
        // every relation after the first shares an attribute with the ones before it
        let shared = loop {
            let s = random_set(rng, 4, 2, 4);
            if i == 0 || !s.intersection(&seen).is_empty() {
                break s;
            }
        };
        seen = seen.union(&shared);
        let cols: Vec<String> = shared.iter().map(|a| a.as_str().to_string()).collect();
        let rows: u64 = rng.gen_range(1_000..=2_000_000);
        let mut distincts = serde_json::Map::new();
        for c in &cols {
            distincts.insert(c.clone(), json!(rng.gen_range(1..=rows.min(5_000))));
        }
        let clustering = random_order(rng, &shared, 2);
        rels.push(json!({
            "name": format!("r{i}"),
            "row_count": rows,
            "tuple_bytes": rng.gen_range(16..=200),
            "columns": cols,
            "clustering_order": clustering,
            "distincts": distincts,
        }));
        if rng.gen_bool(0.5) {
            let key = random_order(rng, &shared, 2);
            if !key.is_empty() {
                let rest: Vec<String> = shared
                    .iter()
                    .map(|a| a.as_str().to_string())
                    .filter(|a| !key.contains(a) && rng.gen_bool(0.7))
                    .collect();
                indices.push(json!({
                    "relation": format!("r{i}"), "key_order": key,
                    "included_columns": rest, "kind": "secondary"
                }));
            }
        }
        cols_of.push(shared);
    }
    let catalog: Catalog =
        serde_json::from_value(json!({"relations": rels, "indices": indices})).expect("generated catalog parses");

    let scan = |rng: &mut ChaCha8Rng, i: usize| {
        let s = json!({"op": "scan", "relation": format!("r{i}")});
        if rng.gen_bool(0.25) {
            json!({"op": "select", "selectivity": rng.gen_range(0.05..1.0), "input": s})
        } else {
            s
        }
    };
    let mut expr = scan(rng, 0);
    let mut schema = cols_of[0].clone();
    for (i, cols) in cols_of.iter().enumerate().skip(1) {
        let common = schema.intersection(cols);
        let mut on: Vec<String> = common.iter().map(|a| a.as_str().to_string()).collect();
        on.shuffle(rng);
        on.truncate(rng.gen_range(1..=on.len()));
        let right = scan(rng, i);
        expr = if rng.gen_bool(0.5) {
            json!({"op": "join", "on": on, "left": expr, "right": right, "full_outer": rng.gen_bool(0.2)})
        } else {
            json!({"op": "join", "on": on, "left": right, "right": expr})
        };
        schema = schema.union(cols);
    }
    if rng.gen_bool(0.4) {
        let keys: Vec<String> = random_set(rng, 4, 1, 4)
            .intersection(&schema)
            .iter()
            .map(|a| a.as_str().to_string())
            .collect();
        if !keys.is_empty() {
            expr = json!({"op": "groupby", "keys": keys.clone(), "aggregates": ["agg"], "input": expr});
            schema = keys.iter().map(|k| ordopt::Attribute::new(k.clone())).collect();
        }
    }
    let order_by = random_order(rng, &schema, 3);
    (catalog, json!({"expr": expr, "order_by": order_by}))
}

pub fn random_tree(rng: &mut ChaCha8Rng) -> (QueryTree, CostParams) {
    let (catalog, q) = random_query(rng);
    let query = ordopt::parse_query(q.to_string().as_bytes(), &catalog).expect("generated query parses");
    let tree = QueryTree::build(&catalog, &query).expect("generated query builds");
    let mut params = CostParams::default();
    params.cfg.memory_blocks = *[3u64, 10, 100, 1_000, 10_000].choose(rng).unwrap();
    (tree, params)
}

pub fn order(names: &[&str]) -> SortOrder {
    SortOrder::of(names)
}

pub fn fixture_names() -> Vec<String> {
    ordopt::cli::fixture_names(&fixtures_dir()).expect("fixture directory is readable")
}
