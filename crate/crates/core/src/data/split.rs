//! Seen/unseen class partitions.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassId;
use crate::error::{KssError, Result};

/// Named partition of classes into seen (training) and unseen (target) sets.
///
/// JSON form: `{ "group": "A", "seen": [...], "unseen": [...] }`. For the
/// built-in groups `A`–`E` both lists may be omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub group: String,
    #[serde(default)]
    pub seen: Vec<ClassId>,
    #[serde(default)]
    pub unseen: Vec<ClassId>,
}

/// Target (unseen) faults of the five standard Tennessee-Eastman groups.
const TEP_GROUPS: [(&str, [u32; 3]); 5] = [
    ("A", [1, 7, 15]),
    ("B", [2, 10, 13]),
    ("C", [3, 6, 14]),
    ("D", [1, 6, 10]),
    ("E", [4, 8, 11]),
];

pub const TEP_CLASS_COUNT: u32 = 15;

impl SplitSpec {
    pub fn custom(group: impl Into<String>, seen: Vec<ClassId>, unseen: Vec<ClassId>) -> Self {
        SplitSpec {
            group: group.into(),
            seen,
            unseen,
        }
    }

    /// One of the standard TEP groups `A`–`E` over classes 1–15.
    pub fn tep_group(group: &str) -> Result<Self> {
        let (_, target) = TEP_GROUPS
            .iter()
            .find(|(g, _)| g.eq_ignore_ascii_case(group))
            .ok_or_else(|| KssError::Config(format!("unknown split group {group:?}")))?;
        let unseen: Vec<ClassId> = target.iter().map(|&c| ClassId(c)).collect();
        let seen = (1..=TEP_CLASS_COUNT)
            .map(ClassId)
            .filter(|c| !unseen.contains(c))
            .collect();
        Ok(SplitSpec {
            group: group.to_ascii_uppercase(),
            seen,
            unseen,
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KssError::io(path, e))?;
        let spec: SplitSpec = serde_json::from_str(&text)?;
        spec.filled()
    }

    /// Expands a bare built-in group name into explicit lists.
    pub fn filled(self) -> Result<Self> {
        if self.seen.is_empty() && self.unseen.is_empty() {
            SplitSpec::tep_group(&self.group)
        } else {
            Ok(self)
        }
    }

    /// Checks the split against the full class set and returns
    /// `(seen, unseen)` in class-set order.
    pub fn resolve(&self, classes: &[ClassId]) -> Result<(Vec<ClassId>, Vec<ClassId>)> {
        let spec = self.clone().filled()?;
        let seen: BTreeSet<ClassId> = spec.seen.iter().copied().collect();
        let unseen: BTreeSet<ClassId> = spec.unseen.iter().copied().collect();
        if seen.len() != spec.seen.len() || unseen.len() != spec.unseen.len() {
            return Err(KssError::Config(format!(
                "split {} lists a class twice",
                spec.group
            )));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(KssError::Config(format!(
                "split {}: class {c} is both seen and unseen",
                spec.group
            )));
        }
        if seen.is_empty() {
            return Err(KssError::Config(format!("split {} has no seen classes", spec.group)));
        }
        for c in seen.iter().chain(&unseen) {
            if !classes.contains(c) {
                return Err(KssError::Config(format!(
                    "split {}: class {c} is not in the attribute matrix",
                    spec.group
                )));
            }
        }
        for c in classes {
            if !seen.contains(c) && !unseen.contains(c) {
                return Err(KssError::Config(format!(
                    "split {}: class {c} is neither seen nor unseen",
                    spec.group
                )));
            }
        }
        let pick = |set: &BTreeSet<ClassId>| classes.iter().copied().filter(|c| set.contains(c)).collect();
        Ok((pick(&seen), pick(&unseen)))
    }
}

/// [`SplitSpec::resolve`] as a free function.
pub fn make_split(group: &SplitSpec, classes: &[ClassId]) -> Result<(Vec<ClassId>, Vec<ClassId>)> {
    group.resolve(classes)
}
