use std::ops::RangeInclusive;
use std::str::FromStr;

/// A frame range from the command line: `a..b` (end excluded), `a..=b`, or
/// a single frame `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRange(pub RangeInclusive<u32>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad frame range {0:?}: expected a..b, a..=b or a single frame, with a <= b")]
pub struct RangeError(pub String);

impl FrameRange {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for FrameRange {
    type Err = RangeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RangeError(s.to_string());
        let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
        let range = if let Some((a, b)) = s.split_once("..=") {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(bad());
            }
            a..=b
        } else if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(bad());
            }
            // `a..a` is empty; an inverted inclusive range says so
            if a == b {
                RangeInclusive::new(1, 0)
            } else {
                a..=b - 1
            }
        } else {
            let a = num(s)?;
            a..=a
        };
        Ok(FrameRange(range))
    }
}

/// Seed ranges use the same syntax.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, RangeError> {
    let bad = || RangeError(s.to_string());
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    let (a, b) = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?, num(b)?.checked_add(1).ok_or_else(bad)?)
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?, num(b)?)
    } else {
        let a = num(s)?;
        (a, a + 1)
    };
    if a >= b {
        return Err(bad());
    }
    Ok((a..b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!("2..5".parse(), Ok(FrameRange(2..=4)));
        assert_eq!("2..=5".parse(), Ok(FrameRange(2..=5)));
        assert_eq!("7".parse(), Ok(FrameRange(7..=7)));
        assert!("3..3".parse::<FrameRange>().unwrap().is_empty());
    }

    #[test]
    fn rejects() {
        for s in ["5..2", "4..=3", "a..b", "", "1..", "-1..3", "1...3"] {
            assert!(s.parse::<FrameRange>().is_err(), "{s}");
        }
    }

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seeds("9").unwrap(), vec![9]);
        assert!(parse_seeds("4..4").is_err());
    }
}
