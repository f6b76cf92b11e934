//! SPJG expression trees and the query file format.
//!
//! Join predicates are conjunctions of equalities. Each equated pair is given
//! one shared attribute name at parse time: a pair `["ps_suppkey",
//! "l_suppkey"]` renames `l_suppkey` to `ps_suppkey` throughout the right
//! input. After parsing, a join's attribute set names columns present on both
//! sides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{covering_indices, Catalog, CatalogRelation, ExprStats, IndexDef};
use crate::error::{Error, Result};
use crate::order::{AttrSet, Attribute, SortOrder};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum LogicalExpr {
    Scan {
        relation: String,
        /// Catalog column → attribute name used by the query.
        #[serde(skip_serializing_if = "BTreeMap::is_empty")]
        renames: BTreeMap<Attribute, Attribute>,
    },
    Select {
        input: Box<LogicalExpr>,
        selectivity: f64,
        touched: AttrSet,
    },
    Project {
        input: Box<LogicalExpr>,
        cols: AttrSet,
    },
    Join {
        left: Box<LogicalExpr>,
        right: Box<LogicalExpr>,
        #[serde(rename = "on")]
        join_attrs: AttrSet,
        full_outer: bool,
    },
    GroupBy {
        input: Box<LogicalExpr>,
        keys: AttrSet,
        agg_width_bytes: u64,
        aggregates: Vec<Attribute>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuerySpec {
    pub expr: LogicalExpr,
    pub order_by: SortOrder,
}

// Wire format. Join keys may be a shared name or an equated pair.
#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum RawExpr {
    Scan {
        relation: String,
        #[serde(default)]
        renames: BTreeMap<Attribute, Attribute>,
    },
    Select {
        input: Box<RawExpr>,
        #[serde(default = "one")]
        selectivity: f64,
        #[serde(default)]
        touched: AttrSet,
    },
    Project {
        input: Box<RawExpr>,
        cols: AttrSet,
    },
    Join {
        left: Box<RawExpr>,
        right: Box<RawExpr>,
        on: Vec<RawJoinKey>,
        #[serde(default)]
        full_outer: bool,
    },
    GroupBy {
        input: Box<RawExpr>,
        keys: AttrSet,
        #[serde(default = "default_agg_width")]
        agg_width_bytes: u64,
        #[serde(default)]
        aggregates: Vec<Attribute>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawJoinKey {
    Shared(Attribute),
    Pair(Attribute, Attribute),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    expr: RawExpr,
    #[serde(default)]
    order_by: SortOrder,
}

fn one() -> f64 {
    1.0
}

fn default_agg_width() -> u64 {
    8
}

impl LogicalExpr {
    pub fn scan(relation: &str) -> LogicalExpr {
        LogicalExpr::Scan {
            relation: relation.into(),
            renames: BTreeMap::new(),
        }
    }

    /// Output attributes.
    pub fn schema(&self, catalog: &Catalog) -> Result<AttrSet> {
        Ok(match self {
            LogicalExpr::Scan { relation, renames } => {
                let rel = catalog.relation(relation)?;
                rel.columns.iter().map(|c| rename_one(renames, c)).collect()
            }
            LogicalExpr::Select { input, .. } => input.schema(catalog)?,
            LogicalExpr::Project { cols, .. } => cols.clone(),
            LogicalExpr::Join { left, right, .. } => left.schema(catalog)?.union(&right.schema(catalog)?),
            LogicalExpr::GroupBy { keys, aggregates, .. } => {
                let mut s = keys.clone();
                for a in aggregates {
                    s.insert(a.clone());
                }
                s
            }
        })
    }

    fn children(&self) -> Vec<&LogicalExpr> {
        match self {
            LogicalExpr::Scan { .. } => vec![],
            LogicalExpr::Select { input, .. }
            | LogicalExpr::Project { input, .. }
            | LogicalExpr::GroupBy { input, .. } => vec![input],
            LogicalExpr::Join { left, right, .. } => vec![left, right],
        }
    }

    /// Every attribute named by some operator in the tree.
    pub fn referenced_attrs(&self) -> AttrSet {
        let mut out = match self {
            LogicalExpr::Scan { .. } => AttrSet::new(),
            LogicalExpr::Select { touched, .. } => touched.clone(),
            LogicalExpr::Project { cols, .. } => cols.clone(),
            LogicalExpr::Join { join_attrs, .. } => join_attrs.clone(),
            LogicalExpr::GroupBy { keys, aggregates, .. } => {
                let mut s = keys.clone();
                for a in aggregates {
                    s.insert(a.clone());
                }
                s
            }
        };
        for c in self.children() {
            out = out.union(&c.referenced_attrs());
        }
        out
    }

    /// Rename `from` to `to` in every operator of this subtree.
    fn rename_attr(&mut self, catalog: &Catalog, from: &Attribute, to: &Attribute) -> Result<()> {
        let swap = |s: &mut AttrSet| {
            if s.remove(from) {
                s.insert(to.clone());
            }
        };
        match self {
            LogicalExpr::Scan { relation, renames } => {
                let rel = catalog.relation(relation)?;
                for c in rel.columns.iter() {
                    if &rename_one(renames, c) == from {
                        renames.insert(c.clone(), to.clone());
                    }
                }
                renames.retain(|k, v| k != v);
            }
            LogicalExpr::Select { input, touched, .. } => {
                swap(touched);
                input.rename_attr(catalog, from, to)?;
            }
            LogicalExpr::Project { input, cols } => {
                swap(cols);
                input.rename_attr(catalog, from, to)?;
            }
            LogicalExpr::Join {
                left, right, join_attrs, ..
            } => {
                swap(join_attrs);
                left.rename_attr(catalog, from, to)?;
                right.rename_attr(catalog, from, to)?;
            }
            LogicalExpr::GroupBy {
                input, keys, aggregates, ..
            } => {
                swap(keys);
                for a in aggregates.iter_mut() {
                    if a == from {
                        *a = to.clone();
                    }
                }
                input.rename_attr(catalog, from, to)?;
            }
        }
        Ok(())
    }

    fn validate(&self, catalog: &Catalog, path: &str) -> Result<()> {
        match self {
            LogicalExpr::Scan { relation, .. } => {
                catalog
                    .relation(relation)
                    .map_err(|_| Error::validation(path, format!("unknown relation `{relation}`")))?;
            }
            LogicalExpr::Select {
                input,
                selectivity,
                touched,
            } => {
                let p = format!("{path}.input");
                input.validate(catalog, &p)?;
                if !(*selectivity > 0.0 && *selectivity <= 1.0) {
                    return Err(Error::validation(path, "selectivity must be in (0, 1]"));
                }
                require_subset(touched, &input.schema(catalog)?, path, "selection attribute")?;
            }
            LogicalExpr::Project { input, cols } => {
                input.validate(catalog, &format!("{path}.input"))?;
                if cols.is_empty() {
                    return Err(Error::validation(path, "projection has no columns"));
                }
                require_subset(cols, &input.schema(catalog)?, path, "projected attribute")?;
            }
            LogicalExpr::Join {
                left, right, join_attrs, ..
            } => {
                left.validate(catalog, &format!("{path}.left"))?;
                right.validate(catalog, &format!("{path}.right"))?;
                if join_attrs.is_empty() {
                    return Err(Error::validation(path, "join needs at least one equated attribute pair"));
                }
                let both = left.schema(catalog)?.intersection(&right.schema(catalog)?);
                require_subset(join_attrs, &both, path, "join attribute")?;
            }
            LogicalExpr::GroupBy {
                input, keys, aggregates, ..
            } => {
                input.validate(catalog, &format!("{path}.input"))?;
                if keys.is_empty() {
                    return Err(Error::validation(path, "group-by needs at least one key"));
                }
                require_subset(keys, &input.schema(catalog)?, path, "group-by key")?;
                for a in aggregates {
                    if keys.contains(a) {
                        return Err(Error::validation(path, format!("aggregate `{a}` collides with a key")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn rename_one(renames: &BTreeMap<Attribute, Attribute>, c: &Attribute) -> Attribute {
    renames.get(c).cloned().unwrap_or_else(|| c.clone())
}

fn require_subset(s: &AttrSet, within: &AttrSet, path: &str, what: &str) -> Result<()> {
    if let Some(a) = s.iter().find(|a| !within.contains(a)) {
        return Err(Error::validation(path, format!("{what} `{a}` is not in the input schema")));
    }
    Ok(())
}

fn lower(raw: RawExpr, catalog: &Catalog, path: &str) -> Result<LogicalExpr> {
    Ok(match raw {
        RawExpr::Scan { relation, renames } => LogicalExpr::Scan { relation, renames },
        RawExpr::Select {
            input,
            selectivity,
            touched,
        } => LogicalExpr::Select {
            input: Box::new(lower(*input, catalog, &format!("{path}.input"))?),
            selectivity,
            touched,
        },
        RawExpr::Project { input, cols } => LogicalExpr::Project {
            input: Box::new(lower(*input, catalog, &format!("{path}.input"))?),
            cols,
        },
        RawExpr::Join {
            left,
            right,
            on,
            full_outer,
        } => {
            let left = lower(*left, catalog, &format!("{path}.left"))?;
            let mut right = lower(*right, catalog, &format!("{path}.right"))?;
            let left_schema = left.schema(catalog).map_err(|e| Error::validation(path, e.to_string()))?;
            let mut join_attrs = AttrSet::new();
            for (i, key) in on.into_iter().enumerate() {
                let (l, r) = match key {
                    RawJoinKey::Shared(a) => (a.clone(), a),
                    RawJoinKey::Pair(l, r) => (l, r),
                };
                let right_schema = right.schema(catalog).map_err(|e| Error::validation(path, e.to_string()))?;
                if !left_schema.contains(&l) {
                    return Err(Error::validation(
                        format!("{path}.on[{i}]"),
                        format!("`{l}` is not produced by the left input"),
                    ));
                }
                if !right_schema.contains(&r) {
                    return Err(Error::validation(
                        format!("{path}.on[{i}]"),
                        format!("`{r}` is not produced by the right input"),
                    ));
                }
                if l != r {
                    right.rename_attr(catalog, &r, &l)?;
                }
                join_attrs.insert(l);
            }
            LogicalExpr::Join {
                left: Box::new(left),
                right: Box::new(right),
                join_attrs,
                full_outer,
            }
        }
        RawExpr::GroupBy {
            input,
            keys,
            agg_width_bytes,
            aggregates,
        } => LogicalExpr::GroupBy {
            input: Box::new(lower(*input, catalog, &format!("{path}.input"))?),
            keys,
            agg_width_bytes,
            aggregates,
        },
    })
}

/// Parse and validate a query file against `catalog`.
pub fn parse_query(bytes: &[u8], catalog: &Catalog) -> Result<QuerySpec> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let raw: RawQuery = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let expr = lower(raw.expr, catalog, "expr")?;
    let q = QuerySpec {
        expr,
        order_by: raw.order_by,
    };
    q.validate(catalog)?;
    Ok(q)
}

impl QuerySpec {
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        self.expr.validate(catalog, "expr")?;
        let schema = self.expr.schema(catalog)?;
        require_subset(&self.order_by.attr_set(), &schema, "order_by", "order-by attribute")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query serializes")
    }

    /// All attributes the query uses anywhere, including its output columns.
    pub fn query_attrs(&self, catalog: &Catalog) -> Result<AttrSet> {
        Ok(self
            .expr
            .referenced_attrs()
            .union(&self.expr.schema(catalog)?)
            .union(&self.order_by.attr_set()))
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Scan {
        relation: String,
        renames: BTreeMap<Attribute, Attribute>,
    },
    Select {
        input: NodeId,
        selectivity: f64,
    },
    Project {
        input: NodeId,
        cols: AttrSet,
    },
    Join {
        left: NodeId,
        right: NodeId,
        join_attrs: AttrSet,
        full_outer: bool,
    },
    GroupBy {
        input: NodeId,
        keys: AttrSet,
    },
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub schema: AttrSet,
    pub stats: ExprStats,
}

impl TreeNode {
    pub fn children(&self) -> Vec<NodeId> {
        match &self.kind {
            NodeKind::Scan { .. } => vec![],
            NodeKind::Select { input, .. } | NodeKind::Project { input, .. } | NodeKind::GroupBy { input, .. } => {
                vec![*input]
            }
            NodeKind::Join { left, right, .. } => vec![*left, *right],
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            NodeKind::Scan { relation, .. } => format!("Scan({relation})"),
            NodeKind::Select { selectivity, .. } => format!("Select(sel={selectivity})"),
            NodeKind::Project { cols, .. } => format!("Project{cols:?}"),
            NodeKind::Join {
                join_attrs, full_outer, ..
            } => {
                if *full_outer {
                    format!("FullOuterJoin{join_attrs:?}")
                } else {
                    format!("Join{join_attrs:?}")
                }
            }
            NodeKind::GroupBy { keys, .. } => format!("GroupBy{keys:?}"),
        }
    }
}

/// A physical access path of a base relation, with the order it delivers
/// (already renamed into query attribute names).
#[derive(Debug, Clone, PartialEq)]
pub enum AccessPath {
    Table { blocks: f64, order: SortOrder },
    CoveringIndex { index: IndexDef, blocks: f64, order: SortOrder },
}

impl AccessPath {
    pub fn order(&self) -> &SortOrder {
        match self {
            AccessPath::Table { order, .. } | AccessPath::CoveringIndex { order, .. } => order,
        }
    }

    pub fn blocks(&self) -> f64 {
        match self {
            AccessPath::Table { blocks, .. } | AccessPath::CoveringIndex { blocks, .. } => *blocks,
        }
    }
}

/// A query flattened into an arena, each node annotated with its schema and
/// derived statistics. Node ids are assigned in post-order, so children
/// always precede their parents and the root is the last node.
#[derive(Debug, Clone)]
pub struct QueryTree {
    pub catalog: Catalog,
    pub query: QuerySpec,
    pub nodes: Vec<TreeNode>,
    pub root: NodeId,
    pub query_attrs: AttrSet,
}

impl QueryTree {
    pub fn build(catalog: &Catalog, query: &QuerySpec) -> Result<QueryTree> {
        query.validate(catalog)?;
        let query_attrs = query.query_attrs(catalog)?;
        let mut tree = QueryTree {
            catalog: catalog.clone(),
            query: query.clone(),
            nodes: Vec::new(),
            root: 0,
            query_attrs,
        };
        let mut widths = Vec::new();
        tree.root = tree.add(&query.expr, &mut widths)?;
        Ok(tree)
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn required_order(&self) -> &SortOrder {
        &self.query.order_by
    }

    /// `D(e, s)` for the result of node `id`.
    pub fn distinct_count(&self, id: NodeId, s: &AttrSet) -> Result<f64> {
        let n = self.node(id);
        if let Some(a) = s.iter().find(|a| !n.schema.contains(a)) {
            return Err(Error::UnknownAttribute {
                attr: a.clone(),
                context: format!("not in the schema of {}", n.label()),
            });
        }
        n.stats.distinct_count(s)
    }

    /// Catalog columns of a scanned relation that the query needs.
    pub fn needed_columns(&self, rel: &CatalogRelation, renames: &BTreeMap<Attribute, Attribute>) -> AttrSet {
        rel.columns
            .iter()
            .filter(|c| self.query_attrs.contains(&rename_one(renames, c)))
            .cloned()
            .collect()
    }

    /// Access paths for a scan node: the table itself (delivering its
    /// clustering order) followed by every covering secondary index.
    pub fn access_paths(&self, id: NodeId, cfg: &crate::catalog::BlockConfig) -> Result<Vec<AccessPath>> {
        let NodeKind::Scan { relation, renames } = &self.node(id).kind else {
            return Ok(vec![]);
        };
        let rel = self.catalog.relation(relation)?;
        let mut out = vec![AccessPath::Table {
            blocks: crate::catalog::blocks(rel.row_count, rel.tuple_bytes, cfg) as f64,
            order: rel.clustering_order.rename(renames),
        }];
        let needed = self.needed_columns(rel, renames);
        for idx in covering_indices(&self.catalog, rel, &needed) {
            out.push(AccessPath::CoveringIndex {
                index: idx.clone(),
                blocks: crate::catalog::blocks(rel.row_count, idx.entry_bytes(rel), cfg) as f64,
                order: idx.key_order.rename(renames),
            });
        }
        Ok(out)
    }

    fn add(&mut self, e: &LogicalExpr, widths: &mut Vec<BTreeMap<Attribute, f64>>) -> Result<NodeId> {
        let (kind, schema, stats, w) = match e {
            LogicalExpr::Scan { relation, renames } => {
                let rel = self.catalog.relation(relation)?.clone();
                let rows = rel.row_count as f64;
                let mut w = BTreeMap::new();
                let mut distincts = BTreeMap::new();
                let mut schema = AttrSet::new();
                for c in rel.columns.iter() {
                    let a = rename_one(renames, c);
                    schema.insert(a.clone());
                    w.insert(a.clone(), rel.column_bytes());
                    if let Some(&d) = rel.distincts.get(c) {
                        distincts.insert(a, (d as f64).min(rows));
                    }
                }
                let stats = self.stats_with(rows, &schema, &w, distincts);
                let kind = NodeKind::Scan {
                    relation: relation.clone(),
                    renames: renames.clone(),
                };
                (kind, schema, stats, w)
            }
            LogicalExpr::Select { input, selectivity, .. } => {
                let c = self.add(input, widths)?;
                let child = self.node(c).clone();
                let rows = (child.stats.rows * selectivity).max(1.0);
                let distincts = cap(&child.stats.distincts, rows);
                let w = widths[c].clone();
                let stats = self.stats_with(rows, &child.schema, &w, distincts);
                (
                    NodeKind::Select {
                        input: c,
                        selectivity: *selectivity,
                    },
                    child.schema,
                    stats,
                    w,
                )
            }
            LogicalExpr::Project { input, cols } => {
                let c = self.add(input, widths)?;
                let child = self.node(c).clone();
                let rows = child.stats.rows;
                let distincts = child
                    .stats
                    .distincts
                    .iter()
                    .filter(|(a, _)| cols.contains(a))
                    .map(|(a, d)| (a.clone(), *d))
                    .collect();
                let w: BTreeMap<_, _> = widths[c]
                    .iter()
                    .filter(|(a, _)| cols.contains(a))
                    .map(|(a, x)| (a.clone(), *x))
                    .collect();
                let stats = self.stats_with(rows, cols, &w, distincts);
                (
                    NodeKind::Project {
                        input: c,
                        cols: cols.clone(),
                    },
                    cols.clone(),
                    stats,
                    w,
                )
            }
            LogicalExpr::Join {
                left,
                right,
                join_attrs,
                full_outer,
            } => {
                let l = self.add(left, widths)?;
                let r = self.add(right, widths)?;
                let (ls, rs) = (self.node(l).clone(), self.node(r).clone());
                let rows = if *full_outer {
                    ls.stats.rows + rs.stats.rows
                } else {
                    let mut denom = 1.0;
                    for a in join_attrs {
                        let dl = ls.stats.distinct_count(&single(a))?;
                        let dr = rs.stats.distinct_count(&single(a))?;
                        denom *= dl.max(dr);
                    }
                    (ls.stats.rows * rs.stats.rows / denom).max(1.0)
                };
                let mut distincts = BTreeMap::new();
                for (a, d) in ls.stats.distincts.iter().chain(rs.stats.distincts.iter()) {
                    let e = distincts.entry(a.clone()).or_insert(*d);
                    *e = e.max(*d);
                }
                if !*full_outer {
                    for a in join_attrs {
                        let d = ls.stats.distincts[a].min(rs.stats.distincts[a]);
                        distincts.insert(a.clone(), d);
                    }
                }
                let distincts = cap(&distincts, rows);
                let mut w = widths[l].clone();
                for (a, x) in &widths[r] {
                    let e = w.entry(a.clone()).or_insert(*x);
                    *e = e.max(*x);
                }
                let schema = ls.schema.union(&rs.schema);
                let stats = self.stats_with(rows, &schema, &w, distincts);
                (
                    NodeKind::Join {
                        left: l,
                        right: r,
                        join_attrs: join_attrs.clone(),
                        full_outer: *full_outer,
                    },
                    schema,
                    stats,
                    w,
                )
            }
            LogicalExpr::GroupBy {
                input,
                keys,
                agg_width_bytes,
                aggregates,
            } => {
                let c = self.add(input, widths)?;
                let child = self.node(c).clone();
                let rows = child.stats.distinct_count(keys)?;
                let mut distincts: BTreeMap<Attribute, f64> = child
                    .stats
                    .distincts
                    .iter()
                    .filter(|(a, _)| keys.contains(a))
                    .map(|(a, d)| (a.clone(), d.min(rows)))
                    .collect();
                let mut w: BTreeMap<_, _> = widths[c]
                    .iter()
                    .filter(|(a, _)| keys.contains(a))
                    .map(|(a, x)| (a.clone(), *x))
                    .collect();
                let mut schema = keys.clone();
                for a in aggregates {
                    schema.insert(a.clone());
                    distincts.insert(a.clone(), rows);
                    w.insert(a.clone(), *agg_width_bytes as f64 / aggregates.len() as f64);
                }
                let mut stats = self.stats_with(rows, &schema, &w, distincts);
                if aggregates.is_empty() {
                    stats.tuple_bytes += *agg_width_bytes as f64;
                }
                (
                    NodeKind::GroupBy {
                        input: c,
                        keys: keys.clone(),
                    },
                    schema,
                    stats,
                    w,
                )
            }
        };
        let id = self.nodes.len();
        self.nodes.push(TreeNode { id, kind, schema, stats });
        widths.push(w);
        Ok(id)
    }

    fn stats_with(
        &self,
        rows: f64,
        schema: &AttrSet,
        widths: &BTreeMap<Attribute, f64>,
        distincts: BTreeMap<Attribute, f64>,
    ) -> ExprStats {
        let bytes: f64 = schema
            .iter()
            .filter(|a| self.query_attrs.contains(a))
            .filter_map(|a| widths.get(a))
            .sum();
        ExprStats {
            rows,
            tuple_bytes: bytes.max(1.0),
            distincts,
        }
    }
}

fn single(a: &Attribute) -> AttrSet {
    std::iter::once(a.clone()).collect()
}

fn cap(d: &BTreeMap<Attribute, f64>, rows: f64) -> BTreeMap<Attribute, f64> {
    d.iter().map(|(a, x)| (a.clone(), x.min(rows))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Catalog {
        Catalog::from_json(
            r#"{"relations": [
                {"name":"r","row_count":1000,"tuple_bytes":30,"columns":["a","b","x"],
                 "distincts":{"a":10,"b":100,"x":1000}},
                {"name":"s","row_count":500,"tuple_bytes":20,"columns":["a2","c"],
                 "distincts":{"a2":20,"c":5}}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn schema_rules() {
        let cat = catalog();
        let scan = LogicalExpr::scan("r");
        assert_eq!(scan.schema(&cat).unwrap(), ["a", "b", "x"].into_iter().collect());
        let proj = LogicalExpr::Project {
            input: Box::new(scan.clone()),
            cols: ["a"].into_iter().collect(),
        };
        assert_eq!(proj.schema(&cat).unwrap(), ["a"].into_iter().collect());
        assert!(matches!(
            LogicalExpr::scan("nope").schema(&cat),
            Err(Error::UnknownRelation(_))
        ));
    }

    #[test]
    fn pair_join_keys_are_renamed_into_the_right_input() {
        let cat = catalog();
        let q = parse_query(
            br#"{"expr": {"op":"join","on":[["a","a2"]],
                  "left":{"op":"scan","relation":"r"},
                  "right":{"op":"scan","relation":"s"}},
                 "order_by":["a","c"]}"#,
            &cat,
        )
        .unwrap();
        assert_eq!(q.expr.schema(&cat).unwrap(), ["a", "b", "c", "x"].into_iter().collect());
        let LogicalExpr::Join { right, join_attrs, .. } = &q.expr else {
            panic!()
        };
        assert_eq!(join_attrs, &["a"].into_iter().collect());
        let LogicalExpr::Scan { renames, .. } = right.as_ref() else {
            panic!()
        };
        assert_eq!(renames.get(&Attribute::from("a2")), Some(&Attribute::from("a")));

        // serialize -> parse is the identity
        let again = parse_query(q.to_json().as_bytes(), &cat).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn validation_errors_carry_paths() {
        let cat = catalog();
        let empty_on = br#"{"expr": {"op":"join","on":[],
              "left":{"op":"scan","relation":"r"},"right":{"op":"scan","relation":"s"}}}"#;
        match parse_query(empty_on, &cat) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "expr"),
            other => panic!("{other:?}"),
        }
        let bad_order = br#"{"expr": {"op":"project","cols":["a"],"input":{"op":"scan","relation":"r"}},
              "order_by":["b"]}"#;
        assert!(matches!(parse_query(bad_order, &cat), Err(Error::Validation { .. })));
        let bad_key = br#"{"expr": {"op":"groupby","keys":["zz"],"input":{"op":"scan","relation":"r"}}}"#;
        match parse_query(bad_key, &cat) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "expr"),
            other => panic!("{other:?}"),
        }
        let nested = br#"{"expr": {"op":"select","selectivity":0.5,
              "input":{"op":"scan","relation":"missing"}}}"#;
        match parse_query(nested, &cat) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "expr.input"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_query(b"{not json", &cat), Err(Error::Parse(_))));
        assert!(matches!(
            parse_query(br#"{"expr":{"op":"scan","relation":"r","bogus":1}}"#, &cat),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn tree_statistics() {
        let cat = catalog();
        let q = parse_query(
            br#"{"expr": {"op":"groupby","keys":["a","c"],"aggregates":["cnt"],"agg_width_bytes":8,
                  "input":{"op":"join","on":[["a","a2"]],
                    "left":{"op":"select","selectivity":0.5,"touched":["x"],"input":{"op":"scan","relation":"r"}},
                    "right":{"op":"scan","relation":"s"}}}}"#,
            &cat,
        )
        .unwrap();
        let t = QueryTree::build(&cat, &q).unwrap();
        assert_eq!(t.root, t.nodes.len() - 1);
        // select: 1000 * 0.5
        let sel = &t.nodes[1];
        assert_eq!(sel.stats.rows, 500.0);
        // join: 500 * 500 / max(10, 20)
        let join = &t.nodes[3];
        assert_eq!(join.stats.rows, 12_500.0);
        assert_eq!(join.stats.distincts[&Attribute::from("a")], 10.0);
        // group-by rows = D(join, {a, c}) = 10 * 5
        assert_eq!(t.nodes[t.root].stats.rows, 50.0);
        assert!(t.distinct_count(t.root, &["b"].into_iter().collect()).is_err());
        // b is not used by the query, so it does not widen tuples
        assert!(t.nodes[0].stats.tuple_bytes < 30.0);
    }
}
