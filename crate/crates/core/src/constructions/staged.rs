use std::fmt;

use crate::automorphism::{Activity, SectionRule};
use crate::perm::Perm;
use crate::tree::{Prefix, TreeShape};

/// Membership in the set of depth-`n` words where a stage acts.
pub(crate) trait StageSet: Send + Sync + fmt::Debug {
    fn contains(&self, y: &[u32]) -> bool;

    /// Some extension of `prefix` to length `depth` lies in the set. Must be
    /// exact when it returns `false`.
    fn reachable(&self, prefix: &[u32], depth: usize) -> bool;
}

/// `α_{n_k}(y)` is the cyclic shift on `X_{n_k+1}` for `y` in stage `k`'s set
/// and every other `α_m` is trivial. Stages are sorted by depth.
#[derive(Debug)]
pub(crate) struct StagedFlipRule {
    pub name: String,
    pub shape: TreeShape,
    pub stages: Vec<(usize, Box<dyn StageSet>)>,
}

impl StagedFlipRule {
    fn stage_at(&self, depth: usize) -> Option<&dyn StageSet> {
        self.stages.iter().find(|(n, _)| *n == depth).map(|(_, s)| s.as_ref())
    }
}

impl SectionRule for StagedFlipRule {
    fn name(&self) -> &str {
        &self.name
    }

    fn permutation(&self, prefix: &Prefix) -> Perm {
        let q = self.shape.child_arity(prefix.len());
        match self.stage_at(prefix.len()) {
            Some(s) if s.contains(prefix.letters()) => Perm::cyclic(q, 1),
            _ => Perm::identity(q),
        }
    }

    fn activity(&self, prefix: &Prefix) -> Activity {
        let live = self
            .stages
            .iter()
            .any(|(n, s)| *n >= prefix.len() && s.reachable(prefix.letters(), *n));
        if live {
            Activity::Active
        } else {
            Activity::Quiescent
        }
    }

    fn may_act_at(&self, prefix: &Prefix, level: usize) -> bool {
        level >= prefix.len() && self.stage_at(level).is_some_and(|s| s.reachable(prefix.letters(), level))
    }
}
