//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness asks for its own stream keyed by a
//! [`Stream`] tag plus optional indices (round, client id). Changing how one
//! consumer draws numbers never shifts the draws of another, so two policies
//! run with the same seed see identical data, partitions and initial models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Partition,
    ModelInit,
    AgentInit,
    Sampler,
    Batching,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 0x6461_7461,
            Stream::Partition => 0x7061_7274,
            Stream::ModelInit => 0x6d6f_6465,
            Stream::AgentInit => 0x6167_656e,
            Stream::Sampler => 0x7361_6d70,
            Stream::Batching => 0x6261_7463,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn seed(&self, stream: Stream, indices: &[u64]) -> u64 {
        indices
            .iter()
            .fold(splitmix64(self.root ^ splitmix64(stream.tag())), |acc, &i| {
                splitmix64(acc ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)))
            })
    }

    pub fn rng(&self, stream: Stream, indices: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed(stream, indices))
    }
}
