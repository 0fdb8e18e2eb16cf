use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::action::DisassemblyAction;
use crate::geometry::Pose;

/// Poses of all parts at one search step.
#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyState {
    pub poses: Vec<Pose>,
    /// Bit `i` is set when part `i` has been removed.
    pub removed: u64,
    /// Index of the predecessor in the search arena.
    pub parent: Option<usize>,
    pub action: Option<DisassemblyAction>,
}

impl AssemblyState {
    pub fn assembled(poses: Vec<Pose>) -> Self {
        Self {
            poses,
            removed: 0,
            parent: None,
            action: None,
        }
    }

    pub fn is_removed(&self, part: usize) -> bool {
        self.removed & (1 << part) != 0
    }

    pub fn num_parts(&self) -> usize {
        self.poses.len()
    }

    pub fn is_complete(&self) -> bool {
        self.removed == full_mask(self.num_parts())
    }

    /// Parts still in the assembly, in ascending order.
    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_parts()).filter(|&i| !self.is_removed(i))
    }
}

pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Removed-set bitmasks seen so far.
#[derive(Clone, Debug, Default)]
pub struct VisitedSet {
    seen: HashSet<u64>,
}

impl VisitedSet {
    /// True the first time a removed set is offered; records it.
    pub fn is_novel(&mut self, state: &AssemblyState) -> bool {
        self.seen.insert(state.removed)
    }

    pub fn contains(&self, mask: u64) -> bool {
        self.seen.contains(&mask)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Assembly order with the removal action of each part, aligned by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblySequence {
    pub order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removal_actions: Vec<DisassemblyAction>,
}

impl AssemblySequence {
    pub fn from_order(order: Vec<usize>) -> Self {
        Self {
            order,
            removal_actions: Vec::new(),
        }
    }

    /// True when `order` is a permutation of `0..n`.
    pub fn is_permutation_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        self.order.len() == n
            && self.order.iter().all(|&p| p < n && !std::mem::replace(&mut seen[p], true))
    }

    pub fn action_for(&self, part: usize) -> Option<&DisassemblyAction> {
        self.removal_actions.iter().find(|a| a.part_id == part)
    }
}
