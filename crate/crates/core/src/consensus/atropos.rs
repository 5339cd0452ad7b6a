use std::collections::BTreeMap;

use super::ConsensusError;

/// The smallest value among those occurring most often.
pub fn reselect(candidates: &[u64]) -> Result<u64, ConsensusError> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in candidates {
        *counts.entry(c).or_default() += 1;
    }
    let best = counts.values().copied().max().ok_or(ConsensusError::EmptyInput)?;
    // BTreeMap iterates in ascending key order, so the first hit is the smallest.
    Ok(counts.into_iter().find(|&(_, n)| n == best).map(|(t, _)| t).unwrap())
}
