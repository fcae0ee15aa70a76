//! A single-node MapReduce runtime.
//!
//! Mappers run concurrently over input splits and emit key/value pairs,
//! which are routed to reduce partitions by a stable hash of the key's
//! canonical bytes. When buffered pairs exceed the configured budget the
//! shuffle spills them to per-partition files under a temporary directory.
//! Every partition is then reduced by exactly one worker.
//!
//! Results are deterministic: the output mapping is the same for any worker
//! count, partition count, or split granularity of the same records, as long
//! as the reducer ignores the order of its values.

pub mod codec;
mod engine;
pub mod partition;
mod shuffle;

pub use codec::{Codec, DecodeError, Reader};
pub use engine::{
    run_job, BoxError, Counters, JobConfig, JobError, JobResult, JobSpec, Mapper, Reducer, Split,
    ValueOrder, DEFAULT_SPILL_THRESHOLD,
};
pub use partition::{partition_of, partition_of_bytes, stable_hash, PARTITION_SEED};
pub use shuffle::Emitter;
