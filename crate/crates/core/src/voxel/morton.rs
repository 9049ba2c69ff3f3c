//! 3D Morton (Z-order) codes, 21 bits per axis, x in the lowest bit.

use super::VoxelError;

/// Exclusive upper bound on each coordinate.
pub const AXIS_LIMIT: u32 = 1 << 21;

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

/// Interleaves `(x, y, z)` as `x0 y0 z0 x1 y1 z1 …` from the lowest bit up.
pub fn morton_encode(x: u32, y: u32, z: u32) -> Result<u64, VoxelError> {
    if x >= AXIS_LIMIT || y >= AXIS_LIMIT || z >= AXIS_LIMIT {
        return Err(VoxelError::CoordOverflow([x, y, z]));
    }
    Ok(spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2))
}

pub fn morton_decode(code: u64) -> (u32, u32, u32) {
    (compact_bits(code), compact_bits(code >> 1), compact_bits(code >> 2))
}
