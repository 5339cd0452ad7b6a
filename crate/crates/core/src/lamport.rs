/// Lamport time for a new event: 0 for a leaf, otherwise one past the
/// largest parent timestamp.
pub fn assign_lamport(parent_timestamps: &[u64]) -> u64 {
    parent_timestamps.iter().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::OperaChain;
    use crate::event::EventBlock;
    use crate::id::NodeId;

    #[test]
    fn leaf_and_max_rule() {
        assert_eq!(assign_lamport(&[]), 0);
        assert_eq!(assign_lamport(&[3, 5, 4]), 6);
    }

    /// Three processes P0..P2 exchanging references in a fixed pattern; the
    /// expected counters were worked out by hand from the increment/receive
    /// rules.
    ///
    /// ```text
    /// P0: a0(0) ─ a1(1)[b0] ─ a2(3)[c1] ─ a3(5)[b2]
    /// P1: b0(0) ─ b1(2)[a1] ─ b2(4)[a2]
    /// P2: c0(0) ─ c1(2)[a1] ─ c2(5)[b2]
    /// ```
    #[test]
    fn hand_worked_grid() {
        let mut chain = OperaChain::new(3, 2);
        let make = |chain: &mut OperaChain, c: u32, sp: Option<&EventBlock>, other: Option<&EventBlock>| {
            let ts: Vec<u64> = sp.iter().chain(other.iter()).map(|e| e.lamport_ts()).collect();
            let ev = EventBlock::new(
                NodeId(c),
                sp.map_or(0, |e| e.seq() + 1),
                sp.map(|e| e.id()),
                other.map(|e| vec![e.id()]).unwrap_or_default(),
                assign_lamport(&ts),
                vec![],
            );
            chain.insert(ev.clone()).unwrap();
            ev
        };
        let a0 = make(&mut chain, 0, None, None);
        let b0 = make(&mut chain, 1, None, None);
        let c0 = make(&mut chain, 2, None, None);
        let a1 = make(&mut chain, 0, Some(&a0), Some(&b0));
        let b1 = make(&mut chain, 1, Some(&b0), Some(&a1));
        let c1 = make(&mut chain, 2, Some(&c0), Some(&a1));
        let a2 = make(&mut chain, 0, Some(&a1), Some(&c1));
        let b2 = make(&mut chain, 1, Some(&b1), Some(&a2));
        let a3 = make(&mut chain, 0, Some(&a2), Some(&b2));
        let c2 = make(&mut chain, 2, Some(&c1), Some(&b2));
        let got: Vec<u64> = [&a0, &b0, &c0, &a1, &b1, &c1, &a2, &b2, &a3, &c2].iter().map(|e| e.lamport_ts()).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 2, 2, 3, 4, 5, 5]);
    }
}
