//! 3D Morton (Z-order) codes, 3 bits per octree level, up to 21 levels.

use crate::error::{Result, VoxError};

pub const MAX_LEVEL: u32 = 21;

/// Morton key of a cell at a given octree level. `code < 8^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MortonCode {
    pub code: u64,
    pub level: u32,
}

/// Spread the low 21 bits of `x` so bit k lands at bit 3k.
fn spread_bits(x: u32) -> u64 {
    let mut x = x as u64 & 0x1f_ffff;
    x = (x | (x << 32)) & 0x1f00000000ffff;
    x = (x | (x << 16)) & 0x1f0000ff0000ff;
    x = (x | (x << 8)) & 0x100f00f00f00f00f;
    x = (x | (x << 4)) & 0x10c30c30c30c30c3;
    x = (x | (x << 2)) & 0x1249249249249249;
    x
}

fn compact_bits(x: u64) -> u32 {
    let mut x = x & 0x1249249249249249;
    x = (x | (x >> 2)) & 0x10c30c30c30c30c3;
    x = (x | (x >> 4)) & 0x100f00f00f00f00f;
    x = (x | (x >> 8)) & 0x1f0000ff0000ff;
    x = (x | (x >> 16)) & 0x1f00000000ffff;
    x = (x | (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Interleave grid coordinates: bit k of x at bit 3k, y at 3k+1, z at 3k+2.
pub fn morton_encode(x: u32, y: u32, z: u32, level: u32) -> Result<MortonCode> {
    if level == 0 || level > MAX_LEVEL {
        return Err(VoxError::Range(format!("level {level} not in 1..=21")));
    }
    let lim = 1u32 << level;
    if x >= lim || y >= lim || z >= lim {
        return Err(VoxError::Range(format!(
            "coordinate ({x},{y},{z}) out of range for level {level}"
        )));
    }
    Ok(MortonCode {
        code: spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2),
        level,
    })
}

pub fn morton_decode(m: MortonCode) -> Result<(u32, u32, u32)> {
    if m.level == 0 || m.level > MAX_LEVEL {
        return Err(VoxError::Range(format!("level {} not in 1..=21", m.level)));
    }
    if m.code >= 1u64 << (3 * m.level) {
        return Err(VoxError::Range(format!(
            "code {} out of range for level {}",
            m.code, m.level
        )));
    }
    Ok((
        compact_bits(m.code),
        compact_bits(m.code >> 1),
        compact_bits(m.code >> 2),
    ))
}

impl MortonCode {
    /// Key of the containing cell at a coarser level.
    pub fn ancestor(self, level: u32) -> MortonCode {
        debug_assert!(level >= 1 && level <= self.level);
        MortonCode {
            code: self.code >> (3 * (self.level - level)),
            level,
        }
    }

    /// Key of child octant `k` (0..8) one level down.
    pub fn child(self, k: u64) -> MortonCode {
        debug_assert!(k < 8);
        MortonCode {
            code: (self.code << 3) | k,
            level: self.level + 1,
        }
    }
}
