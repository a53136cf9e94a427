//! Partition of a coefficient table into commuting families by sorted
//! insertion.
//!
//! Strings are sorted by |coefficient| in decreasing order and each one
//! joins the first existing group it commutes with pairwise, otherwise it
//! opens a new group. The grouping is non-overlapping: every input string
//! lands in exactly one group.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DfeError, Result};
use crate::pauli::{Commutativity, PauliString};
use crate::states::CoefficientTable;

/// A mutually commuting family with per-member coefficients and cached
/// norms of the coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliGroup {
    index: usize,
    members: Vec<(PauliString, f64)>,
    norm_sq: f64,
    norm_l1: f64,
}

impl PauliGroup {
    pub fn new(index: usize, members: Vec<(PauliString, f64)>) -> Self {
        let (norm_sq, norm_l1) = norms_of(&members);
        PauliGroup {
            index,
            members,
            norm_sq,
            norm_l1,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Members in insertion order (descending |coefficient|).
    pub fn members(&self) -> &[(PauliString, f64)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Cached squared Euclidean norm of the coefficient vector.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Cached l1 norm of the coefficient vector.
    pub fn norm_l1(&self) -> f64 {
        self.norm_l1
    }

    /// Recompute both norms from the members, bypassing the cache.
    pub fn recompute_norms(&self) -> (f64, f64) {
        norms_of(&self.members)
    }

    pub fn is_pairwise_commuting(&self, mode: Commutativity) -> Result<bool> {
        for (i, (p, _)) in self.members.iter().enumerate() {
            for (q, _) in &self.members[i + 1..] {
                if !p.commutes(q, mode)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn norms_of(members: &[(PauliString, f64)]) -> (f64, f64) {
    let norm_sq = members.iter().map(|(_, b)| b * b).sum();
    let norm_l1 = members.iter().map(|(_, b)| b.abs()).sum();
    (norm_sq, norm_l1)
}

/// A non-overlapping grouping of a coefficient table.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    n: usize,
    mode: Commutativity,
    groups: Vec<PauliGroup>,
}

impl Grouping {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        1 << self.n
    }

    pub fn mode(&self) -> Commutativity {
        self.mode
    }

    pub fn groups(&self) -> &[PauliGroup] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn total_members(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    /// Sampling weights ||b_k||^2 in group order.
    pub fn weights(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.norm_sq()).collect()
    }

    /// Check pairwise commutativity of every group, cached norms, and the
    /// normalization sum(||b_k||^2) = 1.
    pub fn check_invariants(&self) -> Result<()> {
        let mut total_sq = 0.0;
        for g in &self.groups {
            if !g.is_pairwise_commuting(self.mode)? {
                return Err(DfeError::NonCommutingGroup { mode: self.mode });
            }
            let (sq, l1) = g.recompute_norms();
            if (sq - g.norm_sq()).abs() > 1e-12 || (l1 - g.norm_l1()).abs() > 1e-12 {
                return Err(DfeError::InvalidParameter(format!(
                    "cached norms of group {} drifted from recomputation",
                    g.index()
                )));
            }
            total_sq += sq;
        }
        if (total_sq - 1.0).abs() > 1e-8 {
            return Err(DfeError::InvalidParameter(format!(
                "group weights sum to {total_sq}, expected 1"
            )));
        }
        Ok(())
    }

    /// Serialize as JSON: a header with `n` and `mode`, then one array of
    /// `{pauli, b}` members per group.
    pub fn to_json(&self) -> String {
        let doc = GroupingDoc {
            n: self.n,
            mode: self.mode,
            groups: self
                .groups
                .iter()
                .map(|g| {
                    g.members()
                        .iter()
                        .map(|(p, b)| MemberDoc {
                            pauli: p.to_string(),
                            b: *b,
                        })
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("grouping serialization cannot fail")
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        writer
            .write_all(self.to_json().as_bytes())
            .map_err(|e| DfeError::Malformed(e.to_string()))
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: GroupingDoc =
            serde_json::from_slice(bytes).map_err(|e| DfeError::Malformed(e.to_string()))?;
        let mut groups = Vec::with_capacity(doc.groups.len());
        for (index, members) in doc.groups.into_iter().enumerate() {
            let mut parsed = Vec::with_capacity(members.len());
            for m in members {
                let p: PauliString = m.pauli.parse()?;
                if p.n() != doc.n {
                    return Err(DfeError::DimensionMismatch {
                        expected: doc.n,
                        got: p.n(),
                    });
                }
                if !m.b.is_finite() {
                    return Err(DfeError::Malformed(format!(
                        "non-finite coefficient for {}",
                        m.pauli
                    )));
                }
                parsed.push((p, m.b));
            }
            if parsed.is_empty() {
                return Err(DfeError::Malformed(format!("group {index} is empty")));
            }
            groups.push(PauliGroup::new(index, parsed));
        }
        if groups.is_empty() {
            return Err(DfeError::Malformed("grouping has no groups".to_string()));
        }
        // Non-overlapping: a string may appear in one group only.
        let mut seen = std::collections::HashSet::new();
        for g in &groups {
            for (p, _) in g.members() {
                if !seen.insert(*p) {
                    return Err(DfeError::Malformed(format!("{p} appears twice")));
                }
            }
        }
        let grouping = Grouping {
            n: doc.n,
            mode: doc.mode,
            groups,
        };
        for g in &grouping.groups {
            if !g.is_pairwise_commuting(grouping.mode)? {
                return Err(DfeError::NonCommutingGroup {
                    mode: grouping.mode,
                });
            }
        }
        Ok(grouping)
    }

    pub fn read_json<R: Read>(mut reader: R) -> Result<Self> {
        let mut buf = Vec::new();
        reader
            .read_to_end(&mut buf)
            .map_err(|e| DfeError::Malformed(e.to_string()))?;
        Self::from_json_bytes(&buf)
    }
}

#[derive(Serialize, Deserialize)]
struct GroupingDoc {
    n: usize,
    mode: Commutativity,
    groups: Vec<Vec<MemberDoc>>,
}

#[derive(Serialize, Deserialize)]
struct MemberDoc {
    pauli: String,
    b: f64,
}

/// Sorted insertion: sort by |b| descending (ties broken by the canonical
/// string order), then insert each string into the first group whose
/// members all commute with it under `mode`.
///
/// Zero-coefficient strings are dropped; they carry no sampling weight.
/// The identity string always stays in a group of its own: it commutes
/// with everything, but its measurement outcome is deterministic, so it
/// is sampled as a separate unit rather than diluting a family.
pub fn sorted_insertion(table: &CoefficientTable, mode: Commutativity) -> Result<Grouping> {
    let mut entries: Vec<(PauliString, f64)> = table
        .entries()
        .iter()
        .filter(|(_, b)| *b != 0.0)
        .copied()
        .collect();
    if entries.is_empty() {
        return Err(DfeError::EmptyTable);
    }
    entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));

    let mut groups: Vec<Vec<(PauliString, f64)>> = Vec::new();
    let mut identity_group: Option<usize> = None;
    'outer: for (p, b) in entries {
        if p.is_identity() {
            groups.push(vec![(p, b)]);
            identity_group = Some(groups.len() - 1);
            continue;
        }
        for (i, group) in groups.iter_mut().enumerate() {
            if identity_group == Some(i) {
                continue;
            }
            let mut fits = true;
            for (q, _) in group.iter() {
                if !p.commutes(q, mode)? {
                    fits = false;
                    break;
                }
            }
            if fits {
                group.push((p, b));
                continue 'outer;
            }
        }
        groups.push(vec![(p, b)]);
    }

    Ok(Grouping {
        n: table.n(),
        mode,
        groups: groups
            .into_iter()
            .enumerate()
            .map(|(i, members)| PauliGroup::new(i, members))
            .collect(),
    })
}

/// The trivial grouping: every nonzero string is its own group, in the
/// same descending-|b| order sorted insertion would visit them.
///
/// The original (ungrouped) protocol runs on exactly this grouping; on
/// singletons the grouped copy formula and estimator reduce to the
/// original ones.
pub fn singletons(table: &CoefficientTable) -> Result<Grouping> {
    let mut entries: Vec<(PauliString, f64)> = table
        .entries()
        .iter()
        .filter(|(_, b)| *b != 0.0)
        .copied()
        .collect();
    if entries.is_empty() {
        return Err(DfeError::EmptyTable);
    }
    entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    Ok(Grouping {
        n: table.n(),
        mode: Commutativity::QubitWise,
        groups: entries
            .into_iter()
            .enumerate()
            .map(|(i, (p, b))| PauliGroup::new(i, vec![(p, b)]))
            .collect(),
    })
}
