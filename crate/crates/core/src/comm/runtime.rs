use std::any::Any;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::kernels::{Backend, BackendKind, ReduceOp};
use crate::Real;

/// Panic payload used to unwind ranks blocked when another rank failed.
struct Aborted;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairStats {
    pub messages: u64,
    pub bytes: u64,
}

/// Point-to-point traffic per ordered `(sender, receiver)` pair. Collectives
/// are not included.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub pairs: BTreeMap<(usize, usize), PairStats>,
}

impl MessageStats {
    pub fn total_messages(&self) -> u64 {
        self.pairs.values().map(|p| p.messages).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.pairs.values().map(|p| p.bytes).sum()
    }

    pub fn max_per_pair(&self) -> u64 {
        self.pairs.values().map(|p| p.messages).max().unwrap_or(0)
    }

    pub fn pair(&self, from: usize, to: usize) -> PairStats {
        self.pairs.get(&(from, to)).copied().unwrap_or_default()
    }

    /// Traffic since `earlier`.
    pub fn since(&self, earlier: &MessageStats) -> MessageStats {
        let mut pairs = BTreeMap::new();
        for (&k, p) in &self.pairs {
            let e = earlier.pair(k.0, k.1);
            let d = PairStats { messages: p.messages - e.messages, bytes: p.bytes - e.bytes };
            if d.messages > 0 {
                pairs.insert(k, d);
            }
        }
        MessageStats { pairs }
    }
}

impl fmt::Display for MessageStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "from to messages bytes")?;
        for (&(a, b), p) in &self.pairs {
            writeln!(f, "{a} {b} {} {}", p.messages, p.bytes)?;
        }
        write!(f, "total {} {}", self.total_messages(), self.total_bytes())
    }
}

struct Message {
    payload: Box<dyn Any + Send>,
}

struct Mailbox {
    queue: Mutex<VecDeque<Message>>,
    cv: Condvar,
}

struct BarrierState {
    count: usize,
    generation: u64,
}

struct Shared {
    nranks: usize,
    // index: receiver * nranks + sender
    mailboxes: Vec<Mailbox>,
    stats: Mutex<MessageStats>,
    barrier: Mutex<BarrierState>,
    barrier_cv: Condvar,
    slots: Mutex<Vec<Option<Box<dyn Any + Send>>>>,
    aborted: AtomicBool,
}

impl Shared {
    fn new(nranks: usize) -> Shared {
        Shared {
            nranks,
            mailboxes: (0..nranks * nranks)
                .map(|_| Mailbox { queue: Mutex::new(VecDeque::new()), cv: Condvar::new() })
                .collect(),
            stats: Mutex::new(MessageStats::default()),
            barrier: Mutex::new(BarrierState { count: 0, generation: 0 }),
            barrier_cv: Condvar::new(),
            slots: Mutex::new((0..nranks).map(|_| None).collect()),
            aborted: AtomicBool::new(false),
        }
    }

    fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        for m in &self.mailboxes {
            let _g = m.queue.lock().unwrap();
            m.cv.notify_all();
        }
        let _g = self.barrier.lock().unwrap();
        self.barrier_cv.notify_all();
    }

    fn check_abort(&self) {
        if self.aborted.load(Ordering::SeqCst) {
            panic::resume_unwind(Box::new(Aborted));
        }
    }
}

/// Simulated multi-rank runtime: ranks run as threads sharing an in-process
/// message bus with FIFO delivery per ordered pair.
pub struct RankRuntime {
    shared: Arc<Shared>,
    backend_kind: BackendKind,
    nworkers: usize,
}

impl RankRuntime {
    pub fn new(nranks: usize) -> RankRuntime {
        assert!(nranks >= 1, "at least one rank");
        RankRuntime { shared: Arc::new(Shared::new(nranks)), backend_kind: BackendKind::Serial, nworkers: 1 }
    }

    /// Backend created for each rank by [`RankRuntime::run`]. Serial by default.
    pub fn with_backend(mut self, kind: BackendKind, nworkers: usize) -> RankRuntime {
        self.backend_kind = kind;
        self.nworkers = nworkers;
        self
    }

    pub fn nranks(&self) -> usize {
        self.shared.nranks
    }

    pub fn message_stats(&self) -> MessageStats {
        self.shared.stats.lock().unwrap().clone()
    }

    pub fn reset_stats(&self) {
        *self.shared.stats.lock().unwrap() = MessageStats::default();
    }

    /// Runs `program` once per rank and collects the results in rank order.
    /// With one rank the program runs on the calling thread. If any rank
    /// panics, blocked ranks are released and the run fails with the id of
    /// the first rank that panicked.
    pub fn run<R: Send>(&self, program: impl Fn(&Comm) -> R + Sync) -> Result<Vec<R>> {
        let n = self.shared.nranks;
        self.shared.aborted.store(false, Ordering::SeqCst);
        let comm_of = |rank| Comm {
            rank,
            shared: self.shared.clone(),
            backend: Arc::new(Backend::new(self.backend_kind, self.nworkers)),
        };
        let failure: Mutex<Option<(usize, String)>> = Mutex::new(None);
        let run_rank = |rank: usize| -> Option<R> {
            let comm = comm_of(rank);
            match panic::catch_unwind(AssertUnwindSafe(|| program(&comm))) {
                Ok(r) => Some(r),
                Err(payload) => {
                    if !payload.is::<Aborted>() {
                        let mut f = failure.lock().unwrap();
                        if f.is_none() {
                            *f = Some((rank, panic_message(&*payload)));
                        }
                    }
                    self.shared.abort();
                    None
                }
            }
        };
        let results: Vec<Option<R>> = if n == 1 {
            vec![run_rank(0)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..n)
                    .map(|rank| {
                        let run_rank = &run_rank;
                        std::thread::Builder::new()
                            .name(format!("rank-{rank}"))
                            .spawn_scoped(s, move || run_rank(rank))
                            .expect("spawn rank thread")
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap_or(None)).collect()
            })
        };
        if let Some((rank, message)) = failure.into_inner().unwrap() {
            self.reset_after_abort();
            return Err(Error::RankPanicked { rank, message });
        }
        Ok(results.into_iter().map(|r| r.expect("rank finished")).collect())
    }

    fn reset_after_abort(&self) {
        for m in &self.shared.mailboxes {
            m.queue.lock().unwrap().clear();
        }
        *self.shared.barrier.lock().unwrap() = BarrierState { count: 0, generation: 0 };
        self.shared.slots.lock().unwrap().iter_mut().for_each(|s| *s = None);
        self.shared.aborted.store(false, Ordering::SeqCst);
    }
}

fn panic_message(p: &(dyn Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// One rank's handle to the bus, plus its kernel backend.
#[derive(Clone)]
pub struct Comm {
    rank: usize,
    shared: Arc<Shared>,
    backend: Arc<Backend>,
}

impl Comm {
    /// Single-rank communicator on a private bus.
    pub fn solo(backend: Backend) -> Comm {
        Comm { rank: 0, shared: Arc::new(Shared::new(1)), backend: Arc::new(backend) }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nranks(&self) -> usize {
        self.shared.nranks
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_arc(&self) -> &Arc<Backend> {
        &self.backend
    }

    pub fn message_stats(&self) -> MessageStats {
        self.shared.stats.lock().unwrap().clone()
    }

    fn mailbox(&self, to: usize, from: usize) -> &Mailbox {
        &self.shared.mailboxes[to * self.shared.nranks + from]
    }

    /// Sends a vector to rank `to`; counted as one message of
    /// `len * size_of::<T>()` bytes.
    pub fn send<T: Send + 'static>(&self, to: usize, data: Vec<T>) {
        self.send_any(to, data.len() * std::mem::size_of::<T>(), Box::new(data));
    }

    /// Sends any owned value, counted as one message of `bytes` bytes.
    pub fn send_any(&self, to: usize, bytes: usize, payload: Box<dyn Any + Send>) {
        assert!(to < self.nranks(), "rank {to} out of range");
        {
            let mut s = self.shared.stats.lock().unwrap();
            let p = s.pairs.entry((self.rank, to)).or_default();
            p.messages += 1;
            p.bytes += bytes as u64;
        }
        let mb = self.mailbox(to, self.rank);
        mb.queue.lock().unwrap().push_back(Message { payload });
        mb.cv.notify_all();
    }

    /// Next message from `from`, blocking.
    pub fn recv<T: Send + 'static>(&self, from: usize) -> Vec<T> {
        *self.recv_any(from).downcast::<Vec<T>>().expect("message type mismatch")
    }

    pub fn recv_any(&self, from: usize) -> Box<dyn Any + Send> {
        let mb = self.mailbox(self.rank, from);
        let mut q = mb.queue.lock().unwrap();
        loop {
            if let Some(m) = q.pop_front() {
                return m.payload;
            }
            drop(q);
            self.shared.check_abort();
            q = mb.queue.lock().unwrap();
            if q.is_empty() && !self.shared.aborted.load(Ordering::SeqCst) {
                q = mb.cv.wait(q).unwrap();
            }
        }
    }

    pub fn barrier(&self) {
        let mut g: MutexGuard<'_, BarrierState> = self.shared.barrier.lock().unwrap();
        let gen = g.generation;
        g.count += 1;
        if g.count == self.shared.nranks {
            g.count = 0;
            g.generation += 1;
            self.shared.barrier_cv.notify_all();
            return;
        }
        while g.generation == gen {
            if self.shared.aborted.load(Ordering::SeqCst) {
                drop(g);
                self.shared.check_abort();
                unreachable!();
            }
            g = self.shared.barrier_cv.wait(g).unwrap();
        }
    }

    /// Every rank's contribution, in rank order, on every rank.
    pub fn allgather<T: Clone + Send + 'static>(&self, value: T) -> Vec<T> {
        if self.nranks() == 1 {
            return vec![value];
        }
        self.barrier();
        self.shared.slots.lock().unwrap()[self.rank] = Some(Box::new(value));
        self.barrier();
        let out = {
            let slots = self.shared.slots.lock().unwrap();
            slots
                .iter()
                .map(|s| s.as_ref().and_then(|b| b.downcast_ref::<T>()).expect("allgather slot").clone())
                .collect()
        };
        self.barrier();
        self.shared.slots.lock().unwrap()[self.rank] = None;
        out
    }

    /// Combines `values` across ranks in rank order; every rank gets the
    /// result. Ranks must pass the same op list.
    pub fn allreduce<const N: usize>(&self, ops: [ReduceOp; N], values: [Real; N]) -> Result<[Real; N]> {
        let all = self.allgather((ops.to_vec(), values.to_vec()));
        if all.iter().any(|(o, _)| o[..] != ops[..]) {
            return Err(Error::MismatchedOps);
        }
        let mut out = ReduceOp::identities(ops);
        for (_, v) in &all {
            let v: [Real; N] = v[..].try_into().expect("length checked");
            ReduceOp::combine_all(&ops, &mut out, &v);
        }
        Ok(out)
    }

    /// Like [`Comm::allreduce`] for a runtime-sized list.
    pub fn allreduce_vec(&self, ops: &[ReduceOp], values: &[Real]) -> Result<Vec<Real>> {
        assert_eq!(ops.len(), values.len());
        let all = self.allgather((ops.to_vec(), values.to_vec()));
        if all.iter().any(|(o, _)| o[..] != ops[..]) {
            return Err(Error::MismatchedOps);
        }
        let mut out: Vec<Real> = ops.iter().map(|o| o.identity()).collect();
        for (_, v) in &all {
            for k in 0..ops.len() {
                out[k] = ops[k].combine(out[k], v[k]);
            }
        }
        Ok(out)
    }

    /// True on every rank iff `flag` is true on any rank.
    pub fn any(&self, flag: bool) -> bool {
        self.allgather(flag).into_iter().any(|f| f)
    }

    /// `counts[r]` is what this rank will send to `r`; returns what every rank
    /// will send to this one.
    pub fn alltoall_counts(&self, counts: &[u64]) -> Vec<u64> {
        assert_eq!(counts.len(), self.nranks());
        self.allgather(counts.to_vec()).into_iter().map(|c| c[self.rank]).collect()
    }
}

impl fmt::Debug for Comm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Comm").field("rank", &self.rank).field("nranks", &self.nranks()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rank_is_direct() {
        let rt = RankRuntime::new(1);
        let tid = std::thread::current().id();
        let r = rt.run(|c| (c.rank(), std::thread::current().id() == tid)).unwrap();
        assert_eq!(r, vec![(0, true)]);
        assert_eq!(rt.message_stats().total_messages(), 0);
    }

    #[test]
    fn ping_pong_counts() {
        let rt = RankRuntime::new(2);
        let r = rt
            .run(|c| {
                if c.rank() == 0 {
                    c.send(1, vec![1.0f64, 2.0]);
                    c.recv::<f64>(1)
                } else {
                    let v = c.recv::<f64>(0);
                    c.send(0, v.iter().map(|x| x * 10.0).collect());
                    v
                }
            })
            .unwrap();
        assert_eq!(r, vec![vec![10.0, 20.0], vec![1.0, 2.0]]);
        let s = rt.message_stats();
        assert_eq!(s.pair(0, 1), PairStats { messages: 1, bytes: 16 });
        assert_eq!(s.pair(1, 0).messages, 1);
    }

    #[test]
    fn fifo_per_pair() {
        let rt = RankRuntime::new(2);
        let r = rt
            .run(|c| {
                if c.rank() == 0 {
                    for i in 0..50u32 {
                        c.send(1, vec![i]);
                    }
                    Vec::new()
                } else {
                    (0..50).map(|_| c.recv::<u32>(0)[0]).collect()
                }
            })
            .unwrap();
        assert_eq!(r[1], (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn allreduce_examples() {
        let rt = RankRuntime::new(4);
        let r = rt
            .run(|c| {
                let v = (c.rank() + 1) as Real;
                let sum = c.allreduce([ReduceOp::Sum], [v]).unwrap()[0];
                let m = [5.0, -1.0, 3.0, 3.0][c.rank()];
                let min = c.allreduce([ReduceOp::Min], [m]).unwrap()[0];
                let mixed = c.allreduce([ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max], [m, m, m]).unwrap();
                let sep = [
                    c.allreduce([ReduceOp::Sum], [m]).unwrap()[0],
                    c.allreduce([ReduceOp::Min], [m]).unwrap()[0],
                    c.allreduce([ReduceOp::Max], [m]).unwrap()[0],
                ];
                (sum, min, mixed == sep)
            })
            .unwrap();
        assert!(r.iter().all(|&x| x == (10.0, -1.0, true)));
        assert_eq!(rt.message_stats().total_messages(), 0);
    }

    #[test]
    fn mismatched_ops_error_everywhere() {
        let rt = RankRuntime::new(3);
        let r = rt
            .run(|c| {
                let op = if c.rank() == 1 { ReduceOp::Max } else { ReduceOp::Sum };
                c.allreduce([op], [1.0])
            })
            .unwrap();
        assert!(r.iter().all(|x| *x == Err(Error::MismatchedOps)));
    }

    #[test]
    fn panic_reports_rank_and_releases_others() {
        let rt = RankRuntime::new(3);
        let r = rt.run(|c| {
            if c.rank() == 2 {
                panic!("bad input");
            }
            // would block forever without the abort
            c.recv::<u8>(2);
        });
        assert_eq!(r, Err(Error::RankPanicked { rank: 2, message: "bad input".into() }));
        // runtime usable again
        assert_eq!(rt.run(|c| c.rank()).unwrap(), vec![0, 1, 2]);
    }
}
