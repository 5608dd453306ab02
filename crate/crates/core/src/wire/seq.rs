use std::fmt;

use serde::{Deserialize, Serialize};

/// 16-bit wrapping sequence number compared with serial-number arithmetic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeqNum(pub u16);

impl SeqNum {
    pub fn next(self) -> SeqNum {
        SeqNum(self.0.wrapping_add(1))
    }

    /// `self` is newer than `other` iff `0 < (self − other) mod 2¹⁶ < 2¹⁵`.
    pub fn newer_than(self, other: SeqNum) -> bool {
        newer_than(self, other)
    }
}

pub fn newer_than(a: SeqNum, b: SeqNum) -> bool {
    let diff = a.0.wrapping_sub(b.0);
    diff != 0 && diff < 0x8000
}

impl fmt::Display for SeqNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ordinary_order() {
        assert!(newer_than(SeqNum(5), SeqNum(3)));
        assert!(!newer_than(SeqNum(3), SeqNum(5)));
    }

    #[test]
    fn wraparound() {
        // (2 − 65534) mod 2¹⁶ = 4
        assert!(newer_than(SeqNum(2), SeqNum(65534)));
        assert!(!newer_than(SeqNum(65534), SeqNum(2)));
        assert_eq!(SeqNum(u16::MAX).next(), SeqNum(0));
    }

    proptest! {
        #[test]
        fn irreflexive(a: u16) {
            prop_assert!(!newer_than(SeqNum(a), SeqNum(a)));
        }

        #[test]
        fn antisymmetric(a: u16, b: u16) {
            prop_assume!(a != b);
            // The one pair at distance exactly 2¹⁵ is newer in neither direction.
            prop_assume!(a.wrapping_sub(b) != 0x8000);
            prop_assert_ne!(newer_than(SeqNum(a), SeqNum(b)), newer_than(SeqNum(b), SeqNum(a)));
        }
    }
}
