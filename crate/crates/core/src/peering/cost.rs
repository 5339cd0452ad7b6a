use std::cmp::Ordering;
use std::fmt;

/// Peer cost `in_degree / height` as an exact rational. A peer with no known
/// events has infinite cost.
#[derive(Debug, Clone, Copy)]
pub enum Cost {
    Finite { num: u64, den: u64 },
    Infinite,
}

pub fn cost(in_degree: u64, height: u64) -> Cost {
    if height == 0 {
        Cost::Infinite
    } else {
        Cost::Finite { num: in_degree, den: height }
    }
}

impl Cost {
    pub fn as_f64(self) -> f64 {
        match self {
            Cost::Finite { num, den } => num as f64 / den as f64,
            Cost::Infinite => f64::INFINITY,
        }
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        match (*self, *other) {
            (Cost::Infinite, Cost::Infinite) => Ordering::Equal,
            (Cost::Infinite, _) => Ordering::Greater,
            (_, Cost::Infinite) => Ordering::Less,
            (Cost::Finite { num: a, den: b }, Cost::Finite { num: c, den: d }) => {
                (a as u128 * d as u128).cmp(&(c as u128 * b as u128))
            }
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Cost {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cost {}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite { num, den } => write!(f, "{num}/{den}"),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(cost(1, 2).as_f64(), 0.5);
        assert_eq!(cost(0, 1), cost(0, 7));
        assert_eq!(cost(3, 0), Cost::Infinite);
        assert!(cost(1, 2) < cost(2, 3));
        assert!(cost(u64::MAX, 1) < Cost::Infinite);
        assert_eq!(cost(2, 4), cost(1, 2));
    }

    proptest! {
        #[test]
        fn ordering_matches_rationals(a in 0u64..1000, b in 1u64..1000, c in 0u64..1000, d in 1u64..1000) {
            let exact = (a * d).cmp(&(c * b));
            prop_assert_eq!(cost(a, b).cmp(&cost(c, d)), exact);
        }
    }
}
