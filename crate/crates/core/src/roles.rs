//! Interned role names and compact role sets.
//!
//! The analysis manipulates many small sets of roles (held roles, possible
//! roles, policy roles, violating roles). Role names are interned once per
//! factory into a [`RoleUniverse`] that assigns dense ids in lexicographic
//! name order; sets are then fixed-width bitsets. Because ids follow name
//! order, iterating a [`RoleSet`] yields names already sorted, which keeps
//! every serialized role list deterministic without extra sort passes.

use std::collections::HashMap;
use std::fmt;

use smallvec::{smallvec, SmallVec};

/// Dense index of a role within a [`RoleUniverse`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RoleId(pub u16);

/// Interning table for the role names of one factory.
#[derive(Debug, Clone)]
pub struct RoleUniverse {
    names: Vec<String>,
    ids: HashMap<String, RoleId>,
}

impl RoleUniverse {
    /// Builds a universe from role names. Input order does not matter; ids
    /// are assigned in sorted name order and duplicates collapse.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        assert!(
            names.len() <= u16::MAX as usize,
            "role universe limited to {} names",
            u16::MAX
        );
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), RoleId(i as u16)))
            .collect();
        RoleUniverse { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<RoleId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: RoleId) -> &str {
        &self.names[id.0 as usize]
    }

    /// Number of 64-bit words each set over this universe occupies.
    fn words(&self) -> usize {
        self.names.len().div_ceil(64).max(1)
    }

    pub fn empty_set(&self) -> RoleSet {
        RoleSet {
            words: smallvec![0; self.words()],
        }
    }

    pub fn full_set(&self) -> RoleSet {
        let mut set = self.empty_set();
        for i in 0..self.names.len() {
            set.insert(RoleId(i as u16));
        }
        set
    }

    /// Builds a set from names. Unknown names are reported back instead of
    /// being dropped silently.
    pub fn set_of<'a, I>(&self, names: I) -> Result<RoleSet, UnknownRole>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = self.empty_set();
        for name in names {
            match self.id(name) {
                Some(id) => {
                    set.insert(id);
                }
                None => return Err(UnknownRole(name.to_string())),
            }
        }
        Ok(set)
    }

    /// Sorted names of the members of `set`.
    pub fn names_of<'a>(&'a self, set: &RoleSet) -> Vec<&'a str> {
        set.iter().map(|id| self.name(id)).collect()
    }
}

/// A role name that is not part of the universe it was looked up in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownRole(pub String);

impl fmt::Display for UnknownRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown role `{}`", self.0)
    }
}

impl std::error::Error for UnknownRole {}

/// Fixed-width bitset over one [`RoleUniverse`].
///
/// All sets derived from the same universe share a word count, so equality,
/// ordering, and hashing on the raw words are consistent. Mixing sets from
/// different universes is a logic error; operations debug-assert matching
/// widths.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoleSet {
    words: SmallVec<[u64; 2]>,
}

impl RoleSet {
    pub fn contains(&self, id: RoleId) -> bool {
        let (w, b) = (id.0 as usize / 64, id.0 as usize % 64);
        w < self.words.len() && self.words[w] & (1 << b) != 0
    }

    pub fn insert(&mut self, id: RoleId) {
        let (w, b) = (id.0 as usize / 64, id.0 as usize % 64);
        self.words[w] |= 1 << b;
    }

    pub fn remove(&mut self, id: RoleId) {
        let (w, b) = (id.0 as usize / 64, id.0 as usize % 64);
        self.words[w] &= !(1 << b);
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &RoleSet) {
        debug_assert_eq!(self.words.len(), other.words.len());
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn subtract(&mut self, other: &RoleSet) {
        debug_assert_eq!(self.words.len(), other.words.len());
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn intersect_with(&mut self, other: &RoleSet) {
        debug_assert_eq!(self.words.len(), other.words.len());
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn union(&self, other: &RoleSet) -> RoleSet {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn difference(&self, other: &RoleSet) -> RoleSet {
        let mut out = self.clone();
        out.subtract(other);
        out
    }

    pub fn intersection(&self, other: &RoleSet) -> RoleSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn is_disjoint(&self, other: &RoleSet) -> bool {
        debug_assert_eq!(self.words.len(), other.words.len());
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &RoleSet) -> bool {
        debug_assert_eq!(self.words.len(), other.words.len());
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Iterates member ids in ascending (hence name-sorted) order.
    pub fn iter(&self) -> impl Iterator<Item = RoleId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, word)| {
            let mut w = *word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros();
                w &= w - 1;
                Some(RoleId((wi * 64) as u16 + b as u16))
            })
        })
    }
}

impl fmt::Debug for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|id| id.0)).finish()
    }
}
