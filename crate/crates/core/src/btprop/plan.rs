use std::ops::Range;

use crate::bptt::windows;
use crate::error::{Error, Result};

/// One block: `B` consecutive transitions unrolled from a single initial
/// state, ending in one penalty against the next free variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub index: usize,
    /// Token range, inclusive of the token predicted by the last step.
    pub tokens: Range<usize>,
    /// Free variable holding the initial state; `None` for the first block,
    /// which starts from a constant.
    pub h_in: Option<usize>,
    /// Free variable (and dual) referenced by the block's terminal penalty.
    pub boundary: usize,
}

impl Block {
    pub fn transitions(&self) -> usize {
        self.tokens.len() - 1
    }
}

/// Partition of a token stream into contiguous blocks of `B` transitions.
///
/// Free variable `b` is the target for block `b`'s final state and the
/// initial state of block `b + 1`; the last one only carries a penalty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPlan {
    pub block_len: usize,
    pub blocks: Vec<Block>,
}

impl BlockPlan {
    pub fn new(stream_len: usize, block_len: usize) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::Config("block length B must be >= 1".into()));
        }
        let blocks: Vec<Block> = windows(stream_len, block_len)
            .into_iter()
            .enumerate()
            .map(|(i, tokens)| Block {
                index: i,
                tokens,
                h_in: i.checked_sub(1),
                boundary: i,
            })
            .collect();
        if blocks.is_empty() {
            return Err(Error::Argument(format!(
                "stream of {stream_len} tokens has no transition to plan"
            )));
        }
        Ok(BlockPlan { block_len, blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of free hidden variables (one per block).
    pub fn num_free(&self) -> usize {
        self.blocks.len()
    }

    pub fn transitions(&self) -> usize {
        self.blocks.iter().map(Block::transitions).sum()
    }
}

/// Token ranges of minibatch segments of `blocks_per_segment` blocks each.
pub fn segments(stream_len: usize, block_len: usize, blocks_per_segment: usize) -> Vec<Range<usize>> {
    windows(stream_len, block_len * blocks_per_segment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_and_link() {
        let plan = BlockPlan::new(23, 5).unwrap();
        assert_eq!(plan.len(), 5);
        assert_eq!(plan.transitions(), 22);
        for w in plan.blocks.windows(2) {
            assert_eq!(w[0].tokens.end - 1, w[1].tokens.start);
            assert_eq!(w[1].h_in, Some(w[0].boundary));
        }
        assert_eq!(plan.blocks[0].h_in, None);
        assert_eq!(plan.blocks[4].tokens, 20..23);
    }

    #[test]
    fn unit_blocks_give_one_free_variable_per_step() {
        let plan = BlockPlan::new(9, 1).unwrap();
        assert_eq!(plan.num_free(), 8);
        assert!(plan.blocks.iter().all(|b| b.transitions() == 1));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(BlockPlan::new(10, 0), Err(Error::Config(_))));
        assert!(matches!(BlockPlan::new(1, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn segments_align_with_blocks() {
        let segs = segments(101, 5, 4);
        assert_eq!(segs[0], 0..21);
        assert_eq!(segs[1], 20..41);
        let plan = BlockPlan::new(101, 5).unwrap();
        let from_segments: usize = segs
            .iter()
            .map(|s| BlockPlan::new(s.len(), 5).unwrap().len())
            .sum();
        assert_eq!(from_segments, plan.len());
    }
}
