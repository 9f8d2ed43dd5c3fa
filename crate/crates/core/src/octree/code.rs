//! Morton-coded node addresses.
//!
//! A [`NodeCode`] names one octree node at any level. The Morton index always
//! holds the leaf-level index of the node's minimum corner, so the bits below
//! `3 * depth` are zero and a node's code is the same integer as the code of
//! its first leaf.

use std::fmt;

/// Largest supported tree height. Three 21-bit axis indices fill 63 bits.
pub const MAX_DEPTH_LEVELS: u8 = 21;

/// Address of an octree node: interleaved x/y/z leaf index plus the level.
///
/// Depth 0 is the leaf level. Bit `3k` of the Morton index is bit `k` of the
/// x index, `3k + 1` of y and `3k + 2` of z.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeCode {
    morton: u64,
    depth: u8,
}

impl NodeCode {
    /// Builds a code, returning `None` when low bits below the depth are set
    /// or the depth exceeds the supported range.
    pub fn new(morton: u64, depth: u8) -> Option<Self> {
        if depth > MAX_DEPTH_LEVELS || morton & low_mask(depth) != 0 || morton >> 63 != 0 {
            return None;
        }
        Some(Self { morton, depth })
    }

    /// Code of the node at `depth` containing the leaf with index `index`.
    /// Index bits below the depth are discarded.
    pub fn from_index(index: [u32; 3], depth: u8) -> Self {
        debug_assert!(depth <= MAX_DEPTH_LEVELS);
        let morton = encode(index[0], index[1], index[2]) & !low_mask(depth);
        Self { morton, depth }
    }

    pub(crate) const fn from_raw(morton: u64, depth: u8) -> Self {
        Self { morton, depth }
    }

    #[inline]
    pub fn morton(self) -> u64 {
        self.morton
    }

    #[inline]
    pub fn depth(self) -> u8 {
        self.depth
    }

    /// Leaf-level index of the node's minimum corner.
    pub fn index(self) -> [u32; 3] {
        decode(self.morton)
    }

    /// Index of this node within the grid of its own level.
    pub fn level_index(self) -> [u32; 3] {
        let [x, y, z] = self.index();
        [x >> self.depth, y >> self.depth, z >> self.depth]
    }

    #[inline]
    pub fn parent(self) -> Self {
        let depth = self.depth + 1;
        Self {
            morton: self.morton & !low_mask(depth),
            depth,
        }
    }

    /// Ancestor at `depth`; `depth` must not be below this node's depth.
    #[inline]
    pub fn ancestor_at(self, depth: u8) -> Self {
        debug_assert!(depth >= self.depth);
        Self {
            morton: self.morton & !low_mask(depth),
            depth,
        }
    }

    /// Child `i` (0..8). Bit 0 of `i` selects +x, bit 1 +y, bit 2 +z.
    #[inline]
    pub fn child(self, i: u8) -> Self {
        debug_assert!(self.depth > 0 && i < 8);
        let depth = self.depth - 1;
        Self {
            morton: self.morton | (u64::from(i) << (3 * u32::from(depth))),
            depth,
        }
    }

    pub fn children(self) -> [Self; 8] {
        std::array::from_fn(|i| self.child(i as u8))
    }

    /// Position of this node among its parent's children.
    #[inline]
    pub fn child_slot(self) -> u8 {
        ((self.morton >> (3 * u32::from(self.depth))) & 7) as u8
    }

    /// True when `other` lies inside this node (a node contains itself).
    pub fn contains(self, other: NodeCode) -> bool {
        other.depth <= self.depth && other.morton & !low_mask(self.depth) == self.morton
    }
}

impl fmt::Debug for NodeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeCode({:#x}@{})", self.morton, self.depth)
    }
}

impl fmt::Display for NodeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}:{}", self.morton, self.depth)
    }
}

#[inline]
fn low_mask(depth: u8) -> u64 {
    if depth == 0 {
        0
    } else {
        (1u64 << (3 * u32::from(depth))) - 1
    }
}

#[inline]
fn spread(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | x << 32) & 0x001f_0000_0000_ffff;
    x = (x | x << 16) & 0x001f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    (x | x << 2) & 0x1249_2492_4924_9249
}

#[inline]
fn compact(v: u64) -> u32 {
    let mut x = v & 0x1249_2492_4924_9249;
    x = (x ^ (x >> 2)) & 0x30c3_0c30_c30c_30c3;
    x = (x ^ (x >> 4)) & 0xf00f_00f0_0f00_f00f;
    x = (x ^ (x >> 8)) & 0x00ff_0000_ff00_00ff;
    x = (x ^ (x >> 16)) & 0x00ff_0000_0000_ffff;
    x = (x ^ (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Interleaves three 21-bit indices.
#[inline]
pub fn encode(x: u32, y: u32, z: u32) -> u64 {
    spread(x) | spread(y) << 1 | spread(z) << 2
}

#[inline]
pub fn decode(morton: u64) -> [u32; 3] {
    [compact(morton), compact(morton >> 1), compact(morton >> 2)]
}
