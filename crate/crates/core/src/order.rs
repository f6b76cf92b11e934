//! Sort orders and attribute sets.
//!
//! A [`SortOrder`] is a duplicate-free sequence of attributes; the empty
//! sequence is the "no order" value. Sort direction is not represented: every
//! technique in this crate works the same for ascending and descending keys.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::OrderError;

/// A column name, qualified or not. Equality is exact and case-sensitive.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attribute(String);

impl Attribute {
    pub fn new(name: impl Into<String>) -> Self {
        Attribute(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Attribute {
    fn from(s: &str) -> Self {
        Attribute(s.to_string())
    }
}

/// Unordered set of attributes.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttrSet(BTreeSet<Attribute>);

impl AttrSet {
    pub fn new() -> Self {
        AttrSet(BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, a: &Attribute) -> bool {
        self.0.contains(a)
    }

    pub fn insert(&mut self, a: Attribute) -> bool {
        self.0.insert(a)
    }

    pub fn remove(&mut self, a: &Attribute) -> bool {
        self.0.remove(a)
    }

    /// Iterates in ascending name order.
    pub fn iter(&self) -> impl Iterator<Item = &Attribute> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &AttrSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.difference(&other.0).cloned().collect())
    }

    /// The deterministic stand-in for "an arbitrary permutation of s":
    /// attributes in ascending lexicographic order.
    pub fn canonical_permutation(&self) -> SortOrder {
        SortOrder(self.0.iter().cloned().collect())
    }
}

impl fmt::Debug for AttrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl FromIterator<Attribute> for AttrSet {
    fn from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Self {
        AttrSet(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for AttrSet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        AttrSet(iter.into_iter().map(Attribute::from).collect())
    }
}

impl IntoIterator for AttrSet {
    type Item = Attribute;
    type IntoIter = std::collections::btree_set::IntoIter<Attribute>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a AttrSet {
    type Item = &'a Attribute;
    type IntoIter = std::collections::btree_set::Iter<'a, Attribute>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// An ordered, duplicate-free sequence of attributes. `SortOrder::empty()` is
/// the empty order, which is a prefix of every order.
///
/// The derived `Ord` is lexicographic over attribute names and is used for
/// deterministic tie-breaking.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SortOrder(Vec<Attribute>);

impl SortOrder {
    pub fn empty() -> Self {
        SortOrder(Vec::new())
    }

    pub fn new(attrs: Vec<Attribute>) -> Result<Self, OrderError> {
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if !seen.insert(a) {
                return Err(OrderError::DuplicateAttribute(a.clone()));
            }
        }
        Ok(SortOrder(attrs))
    }

    /// Convenience constructor for literals; panics on duplicates.
    pub fn of(names: &[&str]) -> Self {
        SortOrder::new(names.iter().map(|n| Attribute::from(*n)).collect())
            .expect("duplicate attribute in order literal")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn attrs(&self) -> &[Attribute] {
        &self.0
    }

    pub fn attr_set(&self) -> AttrSet {
        self.0.iter().cloned().collect()
    }

    /// `self ≤ other`: self equals the first `self.len()` attributes of other.
    pub fn is_prefix_of(&self, other: &SortOrder) -> bool {
        self.0.len() <= other.0.len() && self.0[..] == other.0[..self.0.len()]
    }

    pub fn is_strict_prefix_of(&self, other: &SortOrder) -> bool {
        self.0.len() < other.0.len() && self.is_prefix_of(other)
    }

    /// Longest common prefix.
    pub fn lcp(&self, other: &SortOrder) -> SortOrder {
        let n = self
            .0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count();
        SortOrder(self.0[..n].to_vec())
    }

    pub fn lcp_len(&self, other: &SortOrder) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    pub fn concat(&self, other: &SortOrder) -> Result<SortOrder, OrderError> {
        let mut v = self.0.clone();
        v.extend(other.0.iter().cloned());
        SortOrder::new(v)
    }

    /// The suffix `o'` with `prefix + o' = self`.
    pub fn subtract(&self, prefix: &SortOrder) -> Result<SortOrder, OrderError> {
        if !prefix.is_prefix_of(self) {
            return Err(OrderError::NotAPrefix {
                prefix: prefix.clone(),
                order: self.clone(),
            });
        }
        Ok(SortOrder(self.0[prefix.0.len()..].to_vec()))
    }

    /// Longest prefix whose attributes all belong to `s`.
    pub fn lcp_with_set(&self, s: &AttrSet) -> SortOrder {
        SortOrder(self.0.iter().take_while(|a| s.contains(a)).cloned().collect())
    }

    /// `self + ⟨s − attrs(self)⟩` using the canonical permutation for the tail.
    pub fn extend_canonical(&self, s: &AttrSet) -> SortOrder {
        let rest = s.difference(&self.attr_set());
        let mut v = self.0.clone();
        v.extend(rest.canonical_permutation().0);
        SortOrder(v)
    }

    pub fn prefix(&self, len: usize) -> SortOrder {
        SortOrder(self.0[..len.min(self.0.len())].to_vec())
    }

    /// All prefixes strictly shorter than `self`, including the empty order.
    pub fn strict_prefixes(&self) -> impl Iterator<Item = SortOrder> + '_ {
        (0..self.0.len()).map(move |n| self.prefix(n))
    }

    /// Apply an attribute renaming; attributes absent from the map are kept.
    pub fn rename(&self, map: &std::collections::BTreeMap<Attribute, Attribute>) -> SortOrder {
        SortOrder(
            self.0
                .iter()
                .map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone()))
                .collect(),
        )
    }
}

impl fmt::Debug for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SortOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(a.as_str())?;
        }
        f.write_str(")")
    }
}

impl Serialize for SortOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SortOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<Attribute>::deserialize(deserializer)?;
        SortOrder::new(v).map_err(serde::de::Error::custom)
    }
}

/// Every permutation of `s`, in lexicographic order.
pub fn permutations(s: &AttrSet) -> Vec<SortOrder> {
    let items: Vec<Attribute> = s.iter().cloned().collect();
    let mut out = Vec::new();
    let mut used = vec![false; items.len()];
    let mut cur = Vec::with_capacity(items.len());
    permute(&items, &mut used, &mut cur, &mut out);
    out
}

fn permute(items: &[Attribute], used: &mut [bool], cur: &mut Vec<Attribute>, out: &mut Vec<SortOrder>) {
    if cur.len() == items.len() {
        out.push(SortOrder(cur.clone()));
        return;
    }
    for i in 0..items.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        cur.push(items[i].clone());
        permute(items, used, cur, out);
        cur.pop();
        used[i] = false;
    }
}

/// Every non-empty duplicate-free order over attributes of `s`
/// (permutations of all non-empty subsets).
pub fn all_orders(s: &AttrSet) -> Vec<SortOrder> {
    let items: Vec<Attribute> = s.iter().cloned().collect();
    let mut out = Vec::new();
    let mut used = vec![false; items.len()];
    let mut cur = Vec::new();
    all_orders_rec(&items, &mut used, &mut cur, &mut out);
    out
}

fn all_orders_rec(items: &[Attribute], used: &mut [bool], cur: &mut Vec<Attribute>, out: &mut Vec<SortOrder>) {
    if !cur.is_empty() {
        out.push(SortOrder(cur.clone()));
    }
    for i in 0..items.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        cur.push(items[i].clone());
        all_orders_rec(items, used, cur, out);
        cur.pop();
        used[i] = false;
    }
}
