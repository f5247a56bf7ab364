use std::cell::RefCell;
use std::fmt;
use std::mem::ManuallyDrop;
use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};

use super::{Arena, ArenaHandle, ArenaStats, ArenaVec, Block};
use crate::error::Result;
use crate::kernels::{Backend, CompletionToken};

/// Byte written over every block when it is physically recycled (debug builds).
pub const POISON_BYTE: u8 = 0xA5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AsyncStats {
    /// Frees that had to wait for incomplete tasks.
    pub deferred_frees: u64,
    /// Blocks returned to the pool.
    pub recycled: u64,
    /// Recycles of a block with an incomplete registered task. Always zero
    /// unless the ledger is broken.
    pub early_recycles: u64,
    /// Blocks currently waiting for their tasks.
    pub pending: usize,
}

struct Pending {
    block: Block,
    tokens: Vec<CompletionToken>,
}

/// Arena whose frees are deferred until the asynchronous tasks registered at
/// free time have completed. Freeing never blocks.
pub struct AsyncArena {
    pool: Arena,
    // tasks launched against this arena that may still be running
    tracked: Mutex<Vec<CompletionToken>>,
    pending: Mutex<Vec<Pending>>,
    deferred: AtomicU64,
    recycled: AtomicU64,
    early: AtomicU64,
    poison: bool,
}

impl AsyncArena {
    pub fn new(capacity: usize) -> Result<AsyncArena> {
        Ok(AsyncArena {
            pool: Arena::new(capacity)?,
            tracked: Mutex::new(Vec::new()),
            pending: Mutex::new(Vec::new()),
            deferred: AtomicU64::new(0),
            recycled: AtomicU64::new(0),
            early: AtomicU64::new(0),
            poison: cfg!(debug_assertions),
        })
    }

    /// Enables or disables overwriting recycled blocks with [`POISON_BYTE`].
    pub fn with_poison(mut self, on: bool) -> Self {
        self.poison = on;
        self
    }

    pub fn alloc(&self, nbytes: usize, align: usize) -> Result<Block> {
        self.reclaim();
        self.pool.alloc(nbytes, align)
    }

    /// Frees against every tracked task that is still running.
    pub fn free(&self, block: Block) -> Result<()> {
        let tokens: Vec<_> = {
            let mut t = self.tracked.lock().unwrap();
            t.retain(|k| !k.is_complete());
            t.clone()
        };
        self.free_after(block, tokens)
    }

    /// Frees once all of `tokens` have completed.
    pub fn free_after(&self, block: Block, mut tokens: Vec<CompletionToken>) -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        tokens.retain(|k| !k.is_complete());
        if tokens.is_empty() {
            return self.recycle(block, &[]);
        }
        self.deferred.fetch_add(1, Ordering::Relaxed);
        self.pending.lock().unwrap().push(Pending { block, tokens });
        // A task may have finished between the check above and the push.
        self.reclaim();
        Ok(())
    }

    fn recycle(&self, block: Block, tokens: &[CompletionToken]) -> Result<()> {
        if tokens.iter().any(|t| !t.is_complete()) {
            self.early.fetch_add(1, Ordering::Relaxed);
        }
        if self.poison {
            // SAFETY: the block is still outstanding in the pool and nobody
            // holds it any more.
            unsafe { std::ptr::write_bytes(block.as_ptr(), POISON_BYTE, block.len()) };
        }
        self.recycled.fetch_add(1, Ordering::Relaxed);
        self.pool.free(block)
    }

    /// Recycles every pending block whose tasks have all completed.
    pub fn reclaim(&self) {
        let ready: Vec<Pending> = {
            let mut p = self.pending.lock().unwrap();
            let (ready, keep): (Vec<_>, Vec<_>) =
                p.drain(..).partition(|e| e.tokens.iter().all(|t| t.is_complete()));
            *p = keep;
            ready
        };
        for e in ready {
            let _ = self.recycle(e.block, &e.tokens);
        }
    }

    /// Registers a task; frees issued while it runs wait for it.
    pub fn track(self: &Arc<Self>, token: &CompletionToken) {
        self.tracked.lock().unwrap().push(token.clone());
        let weak: Weak<AsyncArena> = Arc::downgrade(self);
        token.on_complete(move || {
            if let Some(a) = weak.upgrade() {
                a.reclaim();
            }
        });
    }

    pub fn stats(&self) -> ArenaStats {
        self.pool.stats()
    }

    pub fn async_stats(&self) -> AsyncStats {
        AsyncStats {
            deferred_frees: self.deferred.load(Ordering::Relaxed),
            recycled: self.recycled.load(Ordering::Relaxed),
            early_recycles: self.early.load(Ordering::Relaxed),
            pending: self.pending.lock().unwrap().len(),
        }
    }

    pub fn outstanding_bytes(&self) -> usize {
        self.pool.outstanding_bytes()
    }

    pub fn accounting(&self) -> (ArenaStats, usize) {
        self.pool.accounting()
    }
}

impl fmt::Debug for AsyncArena {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AsyncArena")
            .field("stats", &self.stats())
            .field("async", &self.async_stats())
            .finish()
    }
}

/// Scope for temporaries used by asynchronous tasks.
///
/// Temporaries allocated through the scope are released against the tasks
/// launched in the scope (and in scopes nested in it). Leaving the scope does
/// not wait for those tasks.
pub struct AsyncScope<'b> {
    arena: Arc<AsyncArena>,
    backend: &'b Backend,
    tokens: Arc<Mutex<Vec<CompletionToken>>>,
    parents: Vec<Arc<Mutex<Vec<CompletionToken>>>>,
    launched: RefCell<usize>,
}

pub fn async_scope<R>(arena: &Arc<AsyncArena>, backend: &Backend, body: impl FnOnce(&AsyncScope<'_>) -> R) -> R {
    let scope = AsyncScope {
        arena: arena.clone(),
        backend,
        tokens: Arc::new(Mutex::new(Vec::new())),
        parents: Vec::new(),
        launched: RefCell::new(0),
    };
    body(&scope)
}

impl<'b> AsyncScope<'b> {
    pub fn alloc<T: Copy + Default>(&self, n: usize) -> Result<TempBuffer<T>> {
        let data = ArenaVec::from_elem_in(T::default(), n, ArenaHandle::Async(self.arena.clone()))?;
        Ok(TempBuffer(Arc::new(TempInner {
            data: ManuallyDrop::new(data),
            arena: self.arena.clone(),
            tokens: self.tokens.clone(),
        })))
    }

    /// Runs `task` asynchronously on the backend and registers it with the scope.
    pub fn launch(&self, task: impl FnOnce() + Send + 'static) -> CompletionToken {
        let token = self.backend.launch_async(task);
        self.arena.track(&token);
        self.tokens.lock().unwrap().push(token.clone());
        for p in &self.parents {
            p.lock().unwrap().push(token.clone());
        }
        *self.launched.borrow_mut() += 1;
        token
    }

    pub fn nested<R>(&self, body: impl FnOnce(&AsyncScope<'_>) -> R) -> R {
        let mut parents = self.parents.clone();
        parents.push(self.tokens.clone());
        let inner = AsyncScope {
            arena: self.arena.clone(),
            backend: self.backend,
            tokens: Arc::new(Mutex::new(Vec::new())),
            parents,
            launched: RefCell::new(0),
        };
        body(&inner)
    }

    pub fn launched(&self) -> usize {
        *self.launched.borrow()
    }
}

struct TempInner<T: Copy> {
    data: ManuallyDrop<ArenaVec<T>>,
    arena: Arc<AsyncArena>,
    tokens: Arc<Mutex<Vec<CompletionToken>>>,
}

impl<T: Copy> Drop for TempInner<T> {
    fn drop(&mut self) {
        // SAFETY: data is taken exactly once, here.
        let data = unsafe { ManuallyDrop::take(&mut self.data) };
        let (block, _) = data.into_raw_parts();
        let tokens = self.tokens.lock().unwrap().clone();
        let _ = self.arena.free_after(block, tokens);
    }
}

/// Shared temporary buffer from an [`AsyncScope`]. Clones may be moved into
/// tasks; the storage is recycled after the last clone is gone and every task
/// of the owning scope has completed.
pub struct TempBuffer<T: Copy>(Arc<TempInner<T>>);

impl<T: Copy> Clone for TempBuffer<T> {
    fn clone(&self) -> Self {
        TempBuffer(self.0.clone())
    }
}

impl<T: Copy> TempBuffer<T> {
    /// Mutable access while this is the only handle.
    pub fn get_mut(&mut self) -> Option<&mut [T]> {
        Arc::get_mut(&mut self.0).map(|inner| &mut inner.data[..])
    }

    pub fn as_ptr(&self) -> *const T {
        self.0.data.as_ptr()
    }
}

impl<T: Copy> Deref for TempBuffer<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0.data
    }
}
