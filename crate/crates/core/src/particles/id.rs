use std::fmt;

use crate::error::{Error, Result};

pub const RANK_BITS: u32 = 24;
pub const LOCAL_BITS: u32 = 39;
pub const MAX_RANK: u64 = (1 << RANK_BITS) - 1;
pub const MAX_LOCAL: u64 = (1 << LOCAL_BITS) - 1;
const VALID_BIT: u64 = 1 << 63;

/// Packed particle id word.
///
/// Bit 63 is the validity flag (1 = valid), bits 62..24 hold the local id
/// and bits 23..0 the originating rank.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ParticleId(u64);

impl ParticleId {
    pub fn encode(rank: u64, local: u64, valid: bool) -> Result<ParticleId> {
        if rank > MAX_RANK || local > MAX_LOCAL {
            return Err(Error::IdOverflow { rank, local });
        }
        let flag = if valid { VALID_BIT } else { 0 };
        Ok(ParticleId(flag | (local << RANK_BITS) | rank))
    }

    /// `(rank, local, valid)`.
    pub fn decode(self) -> (u64, u64, bool) {
        (self.rank(), self.local(), self.is_valid())
    }

    pub const fn from_raw(word: u64) -> ParticleId {
        ParticleId(word)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub const fn rank(self) -> u64 {
        self.0 & MAX_RANK
    }

    pub const fn local(self) -> u64 {
        (self.0 >> RANK_BITS) & MAX_LOCAL
    }

    pub const fn is_valid(self) -> bool {
        self.0 & VALID_BIT != 0
    }

    pub const fn invalidated(self) -> ParticleId {
        ParticleId(self.0 & !VALID_BIT)
    }

    pub const fn validated(self) -> ParticleId {
        ParticleId(self.0 | VALID_BIT)
    }
}

/// Validity test on a raw id word.
#[inline]
pub const fn is_valid_word(word: u64) -> bool {
    word & VALID_BIT != 0
}

/// Raw id word with the validity flag cleared.
#[inline]
pub const fn invalidate_word(word: u64) -> u64 {
    word & !VALID_BIT
}

impl fmt::Debug for ParticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParticleId({}:{}{})", self.rank(), self.local(), if self.is_valid() { "" } else { " invalid" })
    }
}
