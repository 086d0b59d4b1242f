use crate::error::{Error, Result};

use super::GroupingScheme;

/// Assignment of (aspect i, granularity j) objectives to guiding slots.
///
/// Indices are positions within the enabled aspect and granularity lists,
/// zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidingLayout {
    scheme: GroupingScheme,
    num_aspects: usize,
    num_granularities: usize,
}

impl GuidingLayout {
    pub fn scheme(&self) -> GroupingScheme {
        self.scheme
    }

    pub fn num_aspects(&self) -> usize {
        self.num_aspects
    }

    pub fn num_granularities(&self) -> usize {
        self.num_granularities
    }

    /// K, the number of guiding slots.
    pub fn slots(&self) -> usize {
        match self.scheme {
            GroupingScheme::Single => self.num_aspects * self.num_granularities,
            GroupingScheme::Granularity => self.num_granularities,
            GroupingScheme::Aspect => self.num_aspects,
            GroupingScheme::None => 0,
        }
    }

    /// Slot serving objective (aspect `i`, granularity `j`); `None` without guiding tokens.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        assert!(i < self.num_aspects && j < self.num_granularities, "objective out of range");
        match self.scheme {
            GroupingScheme::Single => Some(i * self.num_granularities + j),
            GroupingScheme::Granularity => Some(j),
            GroupingScheme::Aspect => Some(i),
            GroupingScheme::None => None,
        }
    }
}

pub fn layout_guiding_tokens(
    scheme: GroupingScheme,
    num_aspects: usize,
    num_granularities: usize,
) -> Result<GuidingLayout> {
    if scheme != GroupingScheme::None && (num_aspects == 0 || num_granularities == 0) {
        return Err(Error::invalid(
            "guiding layout",
            "needs at least one aspect and one granularity",
        ));
    }
    Ok(GuidingLayout {
        scheme,
        num_aspects,
        num_granularities,
    })
}
