//! Batched producer-consumer pool built from identical "maze-runner" workers.
//!
//! Every worker starts as an explorer: it claims unexplored regions of the
//! [`Maze`] and pushes the tasks it finds into a shared buffer. A worker
//! that fails to claim a region switches to consuming buffered tasks right
//! away, while other workers may still be exploring. Executing tasks may
//! feed new tasks into the same batch ([`Spawner::spawn`]); recursion depth
//! is a property of the task, not of the worker running it.
//!
//! A batch ends once the maze is exhausted, every explorer has left it and
//! the buffer is drained. [`RunnerPool::run_iterative`] chains batches so
//! that the end of a batch is the only synchronisation point between
//! iterations of the host algorithm.

use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam::queue::SegQueue;
use thiserror::Error;

/// A finite, partitionable generator of tasks.
///
/// `explore` may be called concurrently for distinct regions; every region
/// is explored exactly once per batch.
pub trait Maze: Sync {
    type Task: Send;

    fn regions(&self) -> usize;

    fn explore(&self, region: usize, found: &mut dyn FnMut(Self::Task));
}

/// Maze backed by a closure: region `i` yields whatever `f(i, emit)` emits.
pub struct FnMaze<T, F> {
    regions: usize,
    f: F,
    _task: std::marker::PhantomData<fn() -> T>,
}

impl<T, F> FnMaze<T, F> {
    pub fn new(regions: usize, f: F) -> Self {
        FnMaze { regions, f, _task: std::marker::PhantomData }
    }
}

impl<T: Send, F: Fn(usize, &mut dyn FnMut(T)) + Sync> Maze for FnMaze<T, F> {
    type Task = T;

    fn regions(&self) -> usize {
        self.regions
    }

    fn explore(&self, region: usize, found: &mut dyn FnMut(T)) {
        (self.f)(region, found)
    }
}

/// Maze whose regions are the elements of a list, one task each.
pub struct ListMaze<T> {
    items: Vec<Mutex<Option<T>>>,
}

impl<T> ListMaze<T> {
    pub fn new(items: Vec<T>) -> Self {
        ListMaze { items: items.into_iter().map(|t| Mutex::new(Some(t))).collect() }
    }
}

impl<T: Send> Maze for ListMaze<T> {
    type Task = T;

    fn regions(&self) -> usize {
        self.items.len()
    }

    fn explore(&self, region: usize, found: &mut dyn FnMut(T)) {
        if let Some(t) = self.items[region].lock().unwrap().take() {
            found(t);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FailureKind {
    /// The task returned an error.
    Error,
    /// The task panicked.
    Panic,
    /// A spawn was refused by the generation-depth guard.
    DepthGuard,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskFailure {
    pub kind: FailureKind,
    pub depth: usize,
    pub message: String,
}

/// Per-batch statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub tasks_found: usize,
    pub tasks_executed: usize,
    pub failures: Vec<TaskFailure>,
    pub max_depth: usize,
    pub workers: usize,
    pub wall: Duration,
}

impl BatchStats {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("generation depth guard {guard} exceeded ({} failures)", stats.failures.len())]
    DepthExceeded { guard: usize, stats: BatchStats },
    #[error("batch {iteration} failed: {}", first_message(stats))]
    BatchFailed { iteration: usize, stats: BatchStats },
    #[error("invalid pool configuration: {0}")]
    Config(String),
}

fn first_message(stats: &BatchStats) -> String {
    stats.failures.first().map(|f| f.message.clone()).unwrap_or_default()
}

struct Queued<T> {
    task: T,
    depth: usize,
}

struct BatchShared<T> {
    queue: SegQueue<Queued<T>>,
    pending: AtomicUsize,
    found: AtomicUsize,
    executed: AtomicUsize,
    max_depth: AtomicUsize,
    failures: Mutex<Vec<TaskFailure>>,
    guard: usize,
}

impl<T> BatchShared<T> {
    fn push(&self, task: T, depth: usize) {
        self.pending.fetch_add(1, Ordering::SeqCst);
        self.found.fetch_add(1, Ordering::Relaxed);
        self.max_depth.fetch_max(depth, Ordering::Relaxed);
        self.queue.push(Queued { task, depth });
    }

    fn fail(&self, kind: FailureKind, depth: usize, message: String) {
        self.failures.lock().unwrap().push(TaskFailure { kind, depth, message });
    }
}

/// Handle given to an executing task for feeding child tasks into the
/// current batch.
pub struct Spawner<'a, T> {
    shared: &'a BatchShared<T>,
    depth: usize,
}

impl<T> Spawner<'_, T> {
    /// Recursion depth of the task currently executing (maze tasks are 0).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Enqueues a child at `depth + 1`. Returns `false` and records a
    /// failure when that depth exceeds the pool's guard.
    pub fn spawn(&self, task: T) -> bool {
        let depth = self.depth + 1;
        if depth > self.shared.guard {
            self.shared.fail(
                FailureKind::DepthGuard,
                depth,
                format!("spawn at depth {depth} exceeds guard {}", self.shared.guard),
            );
            return false;
        }
        self.shared.push(task, depth);
        true
    }
}

/// Pool configuration. Workers are scoped to each batch; with one worker the
/// batch runs on the calling thread.
#[derive(Clone, Debug)]
pub struct RunnerPool {
    workers: usize,
    depth_guard: usize,
    jitter: Option<u64>,
}

pub const DEFAULT_DEPTH_GUARD: usize = 64;

impl RunnerPool {
    pub fn new(workers: usize) -> Result<Self, RunnerError> {
        if workers == 0 {
            return Err(RunnerError::Config("worker count must be positive".into()));
        }
        Ok(RunnerPool { workers, depth_guard: DEFAULT_DEPTH_GUARD, jitter: None })
    }

    pub fn with_depth_guard(mut self, guard: usize) -> Self {
        self.depth_guard = guard;
        self
    }

    /// Injects pseudo-random sub-millisecond delays before every exploration
    /// and execution (test aid for scheduling-order independence).
    pub fn with_jitter(mut self, seed: u64) -> Self {
        self.jitter = Some(seed);
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs one batch. Failures are isolated: they are recorded in the
    /// statistics and the remaining tasks still run.
    pub fn run_batch<M, F>(&self, maze: &M, exec: F) -> BatchStats
    where
        M: Maze,
        F: Fn(M::Task, &Spawner<'_, M::Task>) -> Result<(), String> + Sync,
    {
        self.run_batch_with_state(maze, || (), |_, t, s| exec(t, s))
    }

    /// Like [`run_batch`](Self::run_batch) with a per-worker scratch state
    /// created by `init` on each worker.
    pub fn run_batch_with_state<M, S, I, F>(&self, maze: &M, init: I, exec: F) -> BatchStats
    where
        M: Maze,
        I: Fn() -> S + Sync,
        F: Fn(&mut S, M::Task, &Spawner<'_, M::Task>) -> Result<(), String> + Sync,
    {
        let start = Instant::now();
        let shared = BatchShared {
            queue: SegQueue::new(),
            pending: AtomicUsize::new(0),
            found: AtomicUsize::new(0),
            executed: AtomicUsize::new(0),
            max_depth: AtomicUsize::new(0),
            failures: Mutex::new(Vec::new()),
            guard: self.depth_guard,
        };
        let regions = maze.regions();
        let next_region = AtomicUsize::new(0);
        let unexplored = AtomicUsize::new(regions);

        let worker = |id: usize| {
            let mut state = init();
            let mut rng = self.jitter.map(|s| s ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(id as u64 + 1)));
            loop {
                let region = next_region.fetch_add(1, Ordering::SeqCst);
                if region < regions {
                    pause(&mut rng);
                    maze.explore(region, &mut |t| shared.push(t, 0));
                    unexplored.fetch_sub(1, Ordering::SeqCst);
                    continue;
                }
                if let Some(Queued { task, depth }) = shared.queue.pop() {
                    pause(&mut rng);
                    let spawner = Spawner { shared: &shared, depth };
                    let outcome = catch_unwind(AssertUnwindSafe(|| exec(&mut state, task, &spawner)));
                    shared.executed.fetch_add(1, Ordering::Relaxed);
                    match outcome {
                        Ok(Ok(())) => {}
                        Ok(Err(msg)) => shared.fail(FailureKind::Error, depth, msg),
                        Err(payload) => shared.fail(FailureKind::Panic, depth, panic_message(payload)),
                    }
                    shared.pending.fetch_sub(1, Ordering::SeqCst);
                    continue;
                }
                if unexplored.load(Ordering::SeqCst) == 0 && shared.pending.load(Ordering::SeqCst) == 0 {
                    break;
                }
                std::thread::yield_now();
            }
        };

        if self.workers == 1 {
            worker(0);
        } else {
            std::thread::scope(|scope| {
                for id in 0..self.workers {
                    let w = &worker;
                    scope.spawn(move || w(id));
                }
            });
        }

        BatchStats {
            tasks_found: shared.found.load(Ordering::SeqCst),
            tasks_executed: shared.executed.load(Ordering::SeqCst),
            failures: shared.failures.into_inner().unwrap(),
            max_depth: shared.max_depth.load(Ordering::SeqCst),
            workers: self.workers,
            wall: start.elapsed(),
        }
    }

    /// Runs a batch seeded by `roots` whose tasks may spawn further tasks.
    /// Fails (with the partial statistics) when the depth guard trips.
    pub fn recursive_feed<T, F>(&self, roots: Vec<T>, exec: F) -> Result<BatchStats, RunnerError>
    where
        T: Send,
        F: Fn(T, &Spawner<'_, T>) -> Result<(), String> + Sync,
    {
        let stats = self.run_batch(&ListMaze::new(roots), exec);
        if stats.failures.iter().any(|f| f.kind == FailureKind::DepthGuard) {
            return Err(RunnerError::DepthExceeded { guard: self.depth_guard, stats });
        }
        Ok(stats)
    }

    /// Runs the mazes produced by `mazes` strictly one after another. The
    /// iterator is advanced only after the previous batch has completed, so
    /// a maze may be built from the previous batch's results. Stops at the
    /// first batch with failures, after that batch has drained.
    pub fn run_iterative<M, I, F>(&self, mazes: I, exec: F) -> Result<Vec<BatchStats>, RunnerError>
    where
        M: Maze,
        I: IntoIterator<Item = M>,
        F: Fn(M::Task, &Spawner<'_, M::Task>) -> Result<(), String> + Sync,
    {
        let mut all = Vec::new();
        for (iteration, maze) in mazes.into_iter().enumerate() {
            let stats = self.run_batch(&maze, &exec);
            if !stats.is_ok() {
                return Err(RunnerError::BatchFailed { iteration, stats });
            }
            all.push(stats);
        }
        Ok(all)
    }
}

fn pause(rng: &mut Option<u64>) {
    if let Some(s) = rng {
        *s ^= *s << 13;
        *s ^= *s >> 7;
        *s ^= *s << 17;
        let micros = *s % 200;
        if micros > 100 {
            std::thread::sleep(Duration::from_micros(micros - 100));
        } else if micros > 50 {
            std::thread::yield_now();
        }
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "task panicked".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn empty_maze() {
        let pool = RunnerPool::new(4).unwrap();
        let maze = ListMaze::<u32>::new(vec![]);
        let stats = pool.run_batch(&maze, |_, _| Ok(()));
        assert_eq!((stats.tasks_found, stats.tasks_executed), (0, 0));
    }

    #[test]
    fn unit_tasks_sum_for_any_worker_count() {
        for workers in [1, 2, 3, 8] {
            let pool = RunnerPool::new(workers).unwrap();
            let counter = AtomicUsize::new(0);
            let maze = FnMaze::new(10, |_, emit: &mut dyn FnMut(usize)| {
                for _ in 0..100 {
                    emit(1)
                }
            });
            let stats = pool.run_batch(&maze, |t, _| {
                counter.fetch_add(t, Ordering::Relaxed);
                Ok(())
            });
            assert_eq!(counter.load(Ordering::Relaxed), 1000);
            assert_eq!(stats.tasks_found, 1000);
            assert_eq!(stats.tasks_executed, 1000);
        }
    }

    #[test]
    fn binary_spawn_tree() {
        let pool = RunnerPool::new(3).unwrap();
        let count = AtomicUsize::new(0);
        let stats = pool
            .recursive_feed(vec![()], |_, s| {
                count.fetch_add(1, Ordering::Relaxed);
                if s.depth() < 3 {
                    s.spawn(());
                    s.spawn(());
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(count.load(Ordering::Relaxed), 15);
        assert_eq!(stats.tasks_executed, 15);
        assert_eq!(stats.max_depth, 3);
    }

    #[test]
    fn depth_guard_trips() {
        let pool = RunnerPool::new(2).unwrap().with_depth_guard(2);
        let err = pool
            .recursive_feed(vec![()], |_, s| {
                if s.depth() < 3 {
                    s.spawn(());
                    s.spawn(());
                }
                Ok(())
            })
            .unwrap_err();
        match err {
            RunnerError::DepthExceeded { stats, .. } => {
                assert_eq!(stats.tasks_executed, 7);
                assert_eq!(stats.failures.len(), 8);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn failures_are_isolated() {
        let pool = RunnerPool::new(2).unwrap();
        let done = AtomicUsize::new(0);
        let maze = ListMaze::new((0..20).collect());
        let stats = pool.run_batch(&maze, |t: i32, _| {
            if t == 3 {
                return Err("bad".into());
            }
            if t == 7 {
                panic!("boom");
            }
            done.fetch_add(1, Ordering::Relaxed);
            Ok(())
        });
        assert_eq!(done.load(Ordering::Relaxed), 18);
        assert_eq!(stats.tasks_executed, 20);
        assert_eq!(stats.failures.len(), 2);
        assert!(stats.failures.iter().any(|f| f.kind == FailureKind::Panic && f.message == "boom"));
    }

    #[test]
    fn iterative_batches_match_sequential_passes() {
        // each pass doubles every value and adds its key
        let reference = {
            let mut v: BTreeMap<usize, u64> = (0..50).map(|k| (k, k as u64)).collect();
            for _ in 0..3 {
                for (k, x) in v.iter_mut() {
                    *x = 2 * *x + *k as u64;
                }
            }
            v
        };
        for workers in [1, 4] {
            let pool = RunnerPool::new(workers).unwrap();
            let sink: Mutex<BTreeMap<usize, u64>> = Mutex::new((0..50).map(|k| (k, k as u64)).collect());
            let mazes = (0..3).map(|_| {
                let snapshot: Vec<(usize, u64)> = sink.lock().unwrap().iter().map(|(k, v)| (*k, *v)).collect();
                ListMaze::new(snapshot)
            });
            let stats = pool
                .run_iterative(mazes, |(k, v), _| {
                    sink.lock().unwrap().insert(k, 2 * v + k as u64);
                    Ok(())
                })
                .unwrap();
            assert_eq!(stats.len(), 3);
            assert_eq!(*sink.lock().unwrap(), reference);
        }
    }

    #[test]
    fn iterative_stops_on_failure() {
        let pool = RunnerPool::new(2).unwrap();
        let mazes = (0..3).map(|i| ListMaze::new(vec![i; 4]));
        let err = pool
            .run_iterative(mazes, |i: i32, _| if i == 1 { Err("x".into()) } else { Ok(()) })
            .unwrap_err();
        match err {
            RunnerError::BatchFailed { iteration, stats } => {
                assert_eq!(iteration, 1);
                assert_eq!(stats.tasks_executed, 4);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(RunnerPool::new(0).is_err());
    }
}
