//! Synthetic catalog: relations, access paths and the statistics the cost
//! model reads (row counts, block counts, distinct-value counts).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::{AttrSet, Attribute, SortOrder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogRelation {
    pub name: String,
    pub row_count: u64,
    /// Average tuple width in bytes.
    pub tuple_bytes: u64,
    pub columns: AttrSet,
    #[serde(default)]
    pub clustering_order: SortOrder,
    #[serde(default)]
    pub distincts: BTreeMap<Attribute, u64>,
}

impl CatalogRelation {
    /// Width attributed to one column under a uniform-width assumption.
    pub fn column_bytes(&self) -> f64 {
        self.tuple_bytes as f64 / self.columns.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Clustering,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexDef {
    pub relation: String,
    pub key_order: SortOrder,
    #[serde(default)]
    pub included_columns: AttrSet,
    pub kind: IndexKind,
}

impl IndexDef {
    /// Columns stored in an index entry.
    pub fn stored_columns(&self) -> AttrSet {
        self.key_order.attr_set().union(&self.included_columns)
    }

    pub fn covers(&self, needed: &AttrSet) -> bool {
        needed.is_subset(&self.stored_columns())
    }

    /// Width of one index entry: the relation's per-column width times the
    /// number of stored columns.
    pub fn entry_bytes(&self, rel: &CatalogRelation) -> u64 {
        let w = rel.column_bytes() * self.stored_columns().len() as f64;
        (w.ceil() as u64).max(1)
    }
}

/// Disk block size and the number of blocks available to a sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub block_bytes: u64,
    pub memory_blocks: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            block_bytes: 4096,
            memory_blocks: 10_000,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_bytes == 0 || self.memory_blocks == 0 {
            return Err(Error::Config(
                "block_bytes and memory_blocks must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `⌈rows × tuple_bytes / block_bytes⌉`.
pub fn blocks(rows: u64, tuple_bytes: u64, cfg: &BlockConfig) -> u64 {
    let bytes = rows as u128 * tuple_bytes as u128;
    bytes.div_ceil(cfg.block_bytes as u128) as u64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub relations: Vec<CatalogRelation>,
    #[serde(default)]
    pub indices: Vec<IndexDef>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Catalog> {
        let cat: Catalog = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cat.validate()?;
        Ok(cat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn relation(&self, name: &str) -> Result<&CatalogRelation> {
        self.relations
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn indices_of(&self, relation: &str) -> Vec<&IndexDef> {
        self.indices.iter().filter(|i| i.relation == relation).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for (i, r) in self.relations.iter().enumerate() {
            let path = format!("relations[{i}]");
            if r.name.is_empty() {
                return Err(Error::validation(path, "empty relation name"));
            }
            if !names.insert(r.name.as_str()) {
                return Err(Error::validation(path, format!("duplicate relation `{}`", r.name)));
            }
            if r.row_count == 0 || r.tuple_bytes == 0 {
                return Err(Error::validation(path, "row_count and tuple_bytes must be positive"));
            }
            if r.columns.is_empty() {
                return Err(Error::validation(path, "relation has no columns"));
            }
            if !r.clustering_order.attr_set().is_subset(&r.columns) {
                return Err(Error::validation(
                    format!("{path}.clustering_order"),
                    "clustering order uses a column the relation does not have",
                ));
            }
            for (a, &d) in &r.distincts {
                if !r.columns.contains(a) {
                    return Err(Error::validation(
                        format!("{path}.distincts.{a}"),
                        "distinct count for unknown column",
                    ));
                }
                if d == 0 || d > r.row_count {
                    return Err(Error::validation(
                        format!("{path}.distincts.{a}"),
                        format!("distinct count {d} must be in 1..={}", r.row_count),
                    ));
                }
            }
        }
        for (i, idx) in self.indices.iter().enumerate() {
            let path = format!("indices[{i}]");
            let rel = self
                .relation(&idx.relation)
                .map_err(|_| Error::validation(&path, format!("unknown relation `{}`", idx.relation)))?;
            if idx.key_order.is_empty() {
                return Err(Error::validation(path, "index key is empty"));
            }
            if !idx.stored_columns().is_subset(&rel.columns) {
                return Err(Error::validation(path, "index references a column the relation does not have"));
            }
            if idx.kind == IndexKind::Clustering && idx.key_order != rel.clustering_order {
                return Err(Error::validation(
                    path,
                    "clustering index key must equal the relation's clustering order",
                ));
            }
        }
        Ok(())
    }
}

/// Secondary indices of `rel` whose stored columns include every attribute in
/// `needed`.
pub fn covering_indices<'a>(catalog: &'a Catalog, rel: &CatalogRelation, needed: &AttrSet) -> Vec<&'a IndexDef> {
    catalog
        .indices_of(&rel.name)
        .into_iter()
        .filter(|i| i.kind == IndexKind::Secondary && i.covers(needed))
        .collect()
}

/// Derived statistics for the result of a logical expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprStats {
    pub rows: f64,
    pub tuple_bytes: f64,
    /// Per-attribute distinct counts, each capped at `rows`.
    pub distincts: BTreeMap<Attribute, f64>,
}

impl ExprStats {
    pub fn blocks(&self, cfg: &BlockConfig) -> f64 {
        (self.rows * self.tuple_bytes / cfg.block_bytes as f64).ceil()
    }

    /// Estimate of `N(Π_s(e))`: the product of per-attribute distinct counts
    /// (independence), capped at the row count. The empty set has one group.
    pub fn distinct_count(&self, s: &AttrSet) -> Result<f64> {
        if s.is_empty() {
            return Ok(1.0);
        }
        let mut product = 1.0f64;
        for a in s {
            let d = self
                .distincts
                .get(a)
                .ok_or_else(|| Error::UnknownStatistic(format!("distinct count of `{a}`")))?;
            product *= d.max(1.0);
        }
        Ok(product.min(self.rows.max(1.0)))
    }
}
