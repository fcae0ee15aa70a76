use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{Codec, DecodeError};
use crate::partition::stable_hash;
use crate::shuffle::{parse_records, Emitter, ShuffleStore};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// One input split: a stream of records, each of which may fail to load.
pub type Split<'a, I> = Box<dyn Iterator<Item = Result<I, BoxError>> + Send + 'a>;

/// Default in-memory shuffle budget before buffers spill to disk.
pub const DEFAULT_SPILL_THRESHOLD: usize = 256 * 1024 * 1024;

/// Upper bound on a single map task's private buffer before it is handed to
/// the shared store.
const MAX_LOCAL_BUFFER: usize = 4 * 1024 * 1024;

pub trait Mapper<I, K, V>: Sync {
    fn map(&self, input: I, emit: &mut Emitter<K, V>) -> Result<(), BoxError>;
}

impl<I, K, V, F> Mapper<I, K, V> for F
where
    F: Fn(I, &mut Emitter<K, V>) -> Result<(), BoxError> + Sync,
{
    fn map(&self, input: I, emit: &mut Emitter<K, V>) -> Result<(), BoxError> {
        self(input, emit)
    }
}

/// Folds every value emitted for a key into one value. Implementations must
/// not depend on the order of `values`.
pub trait Reducer<K, V>: Sync {
    fn reduce(&self, key: &K, values: Vec<V>) -> Result<V, BoxError>;
}

impl<K, V, F> Reducer<K, V> for F
where
    F: Fn(&K, Vec<V>) -> Result<V, BoxError> + Sync,
{
    fn reduce(&self, key: &K, values: Vec<V>) -> Result<V, BoxError> {
        self(key, values)
    }
}

/// Order in which a reducer sees the values of one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueOrder {
    /// Whatever order the shuffle produced. Not stable across runs.
    #[default]
    Arrival,
    /// Seeded permutation per key; used to check order-insensitivity.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub partitions: usize,
    pub workers: usize,
    pub spill_threshold_bytes: usize,
    /// Parent directory for spill files; the system temp dir when `None`.
    pub spill_dir: Option<PathBuf>,
    pub value_order: ValueOrder,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            partitions: 16,
            workers: 1,
            spill_threshold_bytes: DEFAULT_SPILL_THRESHOLD,
            spill_dir: None,
            value_order: ValueOrder::Arrival,
        }
    }
}

impl JobConfig {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions;
        self
    }
}

pub struct JobSpec<'a, I, M, R> {
    pub splits: Vec<Split<'a, I>>,
    pub mapper: M,
    pub reducer: R,
    pub config: JobConfig,
}

impl<'a, I, M, R> JobSpec<'a, I, M, R> {
    /// Builds a spec; the bounds here let closure arguments infer their
    /// signatures.
    pub fn new<K, V>(splits: Vec<Split<'a, I>>, mapper: M, reducer: R, config: JobConfig) -> Self
    where
        M: Mapper<I, K, V>,
        R: Reducer<K, V>,
    {
        Self {
            splits,
            mapper,
            reducer,
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub records_mapped: u64,
    pub pairs_emitted: u64,
    pub keys_reduced: u64,
    /// Values handed to the reducer, summed over keys. Always equals
    /// `pairs_emitted` for a successful job.
    pub values_reduced: u64,
    pub spill_events: u64,
    pub spilled_bytes: u64,
}

#[derive(Debug)]
pub struct JobResult<K, V> {
    pub output: BTreeMap<K, V>,
    pub counters: Counters,
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error("invalid job configuration: {0}")]
    InvalidConfig(String),
    #[error("reading split {split}, record {record}: {source}")]
    InputFailure {
        split: usize,
        record: u64,
        source: BoxError,
    },
    #[error("mapper failed on split {split}, record {record}: {source}")]
    MapperFailure {
        split: usize,
        record: u64,
        source: BoxError,
    },
    #[error("reducer failed on key {key}: {source}")]
    ReducerFailure { key: String, source: BoxError },
    #[error("corrupt shuffle data in partition {partition}: {reason}")]
    CorruptShuffle { partition: usize, reason: String },
    #[error("shuffle spill I/O: {0}")]
    Spill(#[from] std::io::Error),
}

impl JobError {
    /// Ordering used to pick one error deterministically when several
    /// workers fail.
    fn rank(&self) -> (u8, usize, u64) {
        match self {
            JobError::InvalidConfig(_) => (0, 0, 0),
            JobError::InputFailure { split, record, .. }
            | JobError::MapperFailure { split, record, .. } => (1, *split, *record),
            JobError::Spill(_) => (2, 0, 0),
            JobError::CorruptShuffle { partition, .. } => (3, *partition, 0),
            JobError::ReducerFailure { .. } => (4, 0, 0),
        }
    }
}

fn corrupt(partition: usize, e: impl ToString) -> JobError {
    JobError::CorruptShuffle {
        partition,
        reason: e.to_string(),
    }
}

/// Runs a job to completion: maps every split, shuffles the pairs by
/// [`partition_of`](crate::partition_of), and reduces each key exactly once.
///
/// The output mapping does not depend on the worker count, the partition
/// count, or how records are divided into splits.
pub fn run_job<I, K, V, M, R>(spec: JobSpec<'_, I, M, R>) -> Result<JobResult<K, V>, JobError>
where
    I: Send,
    K: Codec + Ord + Debug + Send,
    V: Codec + Send,
    M: Mapper<I, K, V>,
    R: Reducer<K, V>,
{
    let JobSpec {
        splits,
        mapper,
        reducer,
        config,
    } = spec;
    if config.partitions == 0 {
        return Err(JobError::InvalidConfig("partitions must be >= 1".into()));
    }
    if config.workers == 0 {
        return Err(JobError::InvalidConfig("workers must be >= 1".into()));
    }

    let store = ShuffleStore::new(
        config.partitions,
        config.spill_threshold_bytes,
        config.spill_dir.clone(),
    );
    let local_limit = (config.spill_threshold_bytes / (2 * config.workers)).clamp(1, MAX_LOCAL_BUFFER);

    let records_mapped = AtomicU64::new(0);
    let pairs_emitted = AtomicU64::new(0);
    let failures: Mutex<Vec<JobError>> = Mutex::new(Vec::new());
    let abort = AtomicBool::new(false);

    // Map phase.
    let split_count = splits.len();
    let queue: Mutex<Vec<Option<Split<'_, I>>>> = Mutex::new(splits.into_iter().map(Some).collect());
    let next_split = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(split_count.max(1)) {
            scope.spawn(|| {
                let mut emitter = Emitter::<K, V>::new(config.partitions);
                loop {
                    if abort.load(Ordering::Relaxed) {
                        return;
                    }
                    let idx = next_split.fetch_add(1, Ordering::Relaxed);
                    if idx >= split_count {
                        break;
                    }
                    let split = queue.lock().expect("split queue poisoned")[idx]
                        .take()
                        .expect("each split is taken once");
                    if let Err(e) = map_split(
                        idx,
                        split,
                        &mapper,
                        &mut emitter,
                        &store,
                        local_limit,
                        &records_mapped,
                        &abort,
                    ) {
                        abort.store(true, Ordering::Relaxed);
                        failures.lock().expect("failure list poisoned").push(e);
                        return;
                    }
                }
                if let Err(e) = flush(&mut emitter, &store) {
                    abort.store(true, Ordering::Relaxed);
                    failures.lock().expect("failure list poisoned").push(e);
                }
                pairs_emitted.fetch_add(emitter.emitted(), Ordering::Relaxed);
            });
        }
    });
    first_failure(failures.into_inner().expect("failure list poisoned"))?;

    // Reduce phase: each partition is owned by exactly one worker.
    let next_partition = AtomicUsize::new(0);
    // (partition, sorted output) pairs, gathered in completion order.
    type Reduced<K, V> = Mutex<Vec<(usize, Vec<(K, V)>)>>;
    let reduced: Reduced<K, V> = Mutex::new(Vec::new());
    let values_reduced = AtomicU64::new(0);
    let failures: Mutex<Vec<JobError>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(config.partitions) {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    return;
                }
                let partition = next_partition.fetch_add(1, Ordering::Relaxed);
                if partition >= config.partitions {
                    return;
                }
                match reduce_partition(partition, &store, &reducer, config.value_order) {
                    Ok((pairs, values)) => {
                        values_reduced.fetch_add(values, Ordering::Relaxed);
                        reduced
                            .lock()
                            .expect("reduce output poisoned")
                            .push((partition, pairs));
                    }
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        failures.lock().expect("failure list poisoned").push(e);
                        return;
                    }
                }
            });
        }
    });
    first_failure(failures.into_inner().expect("failure list poisoned"))?;

    let mut output = BTreeMap::new();
    for (_, pairs) in reduced.into_inner().expect("reduce output poisoned") {
        for (k, v) in pairs {
            let prev = output.insert(k, v);
            debug_assert!(prev.is_none(), "key reduced twice");
        }
    }

    let counters = Counters {
        records_mapped: records_mapped.into_inner(),
        pairs_emitted: pairs_emitted.into_inner(),
        keys_reduced: output.len() as u64,
        values_reduced: values_reduced.into_inner(),
        spill_events: store.spill_events(),
        spilled_bytes: store.spilled_bytes(),
    };
    tracing::debug!(?counters, "job finished");
    Ok(JobResult { output, counters })
}

fn first_failure(mut failures: Vec<JobError>) -> Result<(), JobError> {
    failures.sort_by_key(JobError::rank);
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn map_split<I, K, V, M>(
    split_idx: usize,
    split: Split<'_, I>,
    mapper: &M,
    emitter: &mut Emitter<K, V>,
    store: &ShuffleStore,
    local_limit: usize,
    records_mapped: &AtomicU64,
    abort: &AtomicBool,
) -> Result<(), JobError>
where
    K: Codec,
    V: Codec,
    M: Mapper<I, K, V>,
{
    let mut mapped = 0u64;
    for (record, item) in split.enumerate() {
        let record = record as u64;
        if record.is_multiple_of(4096) && abort.load(Ordering::Relaxed) {
            break;
        }
        let input = item.map_err(|source| JobError::InputFailure {
            split: split_idx,
            record,
            source,
        })?;
        mapper
            .map(input, emitter)
            .map_err(|source| JobError::MapperFailure {
                split: split_idx,
                record,
                source,
            })?;
        mapped += 1;
        if emitter.buffered_bytes() >= local_limit {
            flush(emitter, store)?;
        }
    }
    records_mapped.fetch_add(mapped, Ordering::Relaxed);
    Ok(())
}

fn flush<K: Codec, V: Codec>(emitter: &mut Emitter<K, V>, store: &ShuffleStore) -> Result<(), JobError> {
    for (partition, chunk) in emitter.drain() {
        store.add_chunk(partition, chunk)?;
    }
    Ok(())
}

fn reduce_partition<K, V, R>(
    partition: usize,
    store: &ShuffleStore,
    reducer: &R,
    order: ValueOrder,
) -> Result<(Vec<(K, V)>, u64), JobError>
where
    K: Codec + Debug,
    V: Codec,
    R: Reducer<K, V>,
{
    let buffers = store.take_partition(partition)?;
    let mut records = Vec::new();
    for buf in &buffers {
        parse_records(buf, &mut records).map_err(|e| corrupt(partition, e))?;
    }
    records.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let mut out = Vec::new();
    let mut values_seen = 0u64;
    for group in records.chunk_by(|a, b| a.0 == b.0) {
        let key_bytes = group[0].0;
        let key = K::decode(key_bytes).map_err(|e: DecodeError| corrupt(partition, e))?;
        let mut values = group
            .iter()
            .map(|(_, v)| V::decode(v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| corrupt(partition, e))?;
        if let ValueOrder::Shuffled { seed } = order {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(key_bytes));
            values.shuffle(&mut rng);
        }
        values_seen += values.len() as u64;
        let value = reducer
            .reduce(&key, values)
            .map_err(|source| JobError::ReducerFailure {
                key: format!("{key:?}"),
                source,
            })?;
        out.push((key, value));
    }
    Ok((out, values_seen))
}
