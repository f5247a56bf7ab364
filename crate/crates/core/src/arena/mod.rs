//! Pooled memory arenas.
//!
//! [`Arena`] reserves large slabs up front and serves allocations out of
//! them. Freed blocks go to a size-segregated free index and are reused
//! last-in first-out, so a free followed by an allocation of the same size
//! never touches the system allocator. [`AsyncArena`] adds deferred
//! recycling: a block freed while tracked asynchronous tasks are still
//! running is only returned to the pool once those tasks have completed.

mod async_arena;
mod vec;

use std::alloc::{self, Layout};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ptr::NonNull;
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

pub use async_arena::{async_scope, AsyncArena, AsyncScope, AsyncStats, TempBuffer};
pub use vec::ArenaVec;

use crate::error::{Error, Result};

/// Allocation granule; every block size is rounded up to a multiple of it.
pub const GRANULE: usize = 256;
/// Alignment of every slab, and the largest supported block alignment.
pub const SLAB_ALIGN: usize = 4096;
const MIN_SLAB: usize = 1 << 20;

/// Default memory budget; the pooled arena reserves half of it up front.
pub const DEFAULT_MEMORY_BUDGET: usize = 64 << 20;

/// An allocation handed out by an arena.
///
/// `Block` is a plain token: copying it does not duplicate ownership, and
/// freeing the same block twice is reported as [`Error::InvalidFree`].
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Block {
    ptr: NonNull<u8>,
    len: usize,
    align: usize,
}

// SAFETY: a block is an address token; access to the memory it names is
// governed by whoever owns the block.
unsafe impl Send for Block {}
unsafe impl Sync for Block {}

impl Block {
    fn empty(align: usize) -> Block {
        // SAFETY: align is a non-zero power of two.
        let ptr = unsafe { NonNull::new_unchecked(align as *mut u8) };
        Block { ptr, len: 0, align }
    }

    pub fn as_ptr(&self) -> *mut u8 {
        self.ptr.as_ptr()
    }

    pub fn addr(&self) -> usize {
        self.ptr.as_ptr() as usize
    }

    /// Requested size in bytes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({:#x}, {} bytes)", self.addr(), self.len)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ArenaStats {
    pub reserved_bytes: usize,
    pub in_use_bytes: usize,
    pub alloc_calls: u64,
    pub free_calls: u64,
    pub slab_growths: u64,
}

impl fmt::Display for ArenaStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "reserved {} B, in use {} B, {} allocs, {} frees, {} slab growths",
            self.reserved_bytes, self.in_use_bytes, self.alloc_calls, self.free_calls, self.slab_growths
        )
    }
}

struct Slab {
    base: NonNull<u8>,
    size: usize,
    top: usize,
}

#[derive(Default)]
struct PoolState {
    slabs: Vec<Slab>,
    // block size -> addresses, most recently freed last
    free: BTreeMap<usize, Vec<usize>>,
    // address -> block size
    outstanding: HashMap<usize, usize>,
    stats: ArenaStats,
}

// SAFETY: slab pointers are owned by the pool and only dereferenced by
// block holders.
unsafe impl Send for PoolState {}

/// Slab-backed pooled allocator. Thread-safe.
pub struct Arena {
    state: Mutex<PoolState>,
    growth: usize,
}

fn round_up(n: usize, to: usize) -> usize {
    n.div_ceil(to) * to
}

fn check_align(align: usize) -> Result<()> {
    if !align.is_power_of_two() || align > SLAB_ALIGN {
        return Err(Error::BadAlignment(align));
    }
    Ok(())
}

impl Arena {
    /// Reserves one slab of `capacity` bytes. A zero capacity gives a lazy
    /// arena whose first allocation creates the first slab.
    pub fn new(capacity: usize) -> Result<Arena> {
        let arena = Arena { state: Mutex::new(PoolState::default()), growth: capacity.max(MIN_SLAB) };
        if capacity > 0 {
            let mut st = arena.state.lock().unwrap();
            Self::add_slab(&mut st, round_up(capacity, GRANULE))?;
        }
        Ok(arena)
    }

    fn add_slab(st: &mut PoolState, size: usize) -> Result<()> {
        let layout = Layout::from_size_align(size, SLAB_ALIGN).map_err(|_| Error::AllocFailed(size))?;
        // SAFETY: size is non-zero.
        let p = unsafe { alloc::alloc(layout) };
        let base = NonNull::new(p).ok_or(Error::AllocFailed(size))?;
        st.slabs.push(Slab { base, size, top: 0 });
        st.stats.reserved_bytes += size;
        Ok(())
    }

    pub fn alloc(&self, nbytes: usize, align: usize) -> Result<Block> {
        check_align(align)?;
        if nbytes == 0 {
            return Ok(Block::empty(align));
        }
        let size = round_up(nbytes, GRANULE);
        let mut st = self.state.lock().unwrap();
        let found = Self::take_free(&mut st, size, size, align)
            .or_else(|| Self::bump(&mut st, size, align).map(|a| (a, size)))
            .or_else(|| Self::take_free(&mut st, size + 1, 2 * size, align));
        let (addr, bsize) = match found {
            Some(f) => f,
            None => {
                let slab = round_up(size.max(self.growth), GRANULE);
                Self::add_slab(&mut st, slab)?;
                st.stats.slab_growths += 1;
                let a = Self::bump(&mut st, size, align).ok_or(Error::AllocFailed(nbytes))?;
                (a, size)
            }
        };
        st.outstanding.insert(addr, bsize);
        st.stats.in_use_bytes += bsize;
        st.stats.alloc_calls += 1;
        drop(st);
        // SAFETY: addr comes from a live slab.
        let ptr = unsafe { NonNull::new_unchecked(addr as *mut u8) };
        Ok(Block { ptr, len: nbytes, align })
    }

    // Smallest class in `min..=max` holding a suitably aligned block; the most
    // recently freed block of that class wins. Reused blocks keep their class
    // size.
    fn take_free(st: &mut PoolState, min: usize, max: usize, align: usize) -> Option<(usize, usize)> {
        let mut found = None;
        for (&class, list) in st.free.range_mut(min..=max) {
            if let Some(pos) = list.iter().rposition(|&a| a % align == 0) {
                found = Some((list.remove(pos), class));
                break;
            }
        }
        let (addr, class) = found?;
        if st.free.get(&class).is_some_and(|l| l.is_empty()) {
            st.free.remove(&class);
        }
        Some((addr, class))
    }

    fn bump(st: &mut PoolState, size: usize, align: usize) -> Option<usize> {
        let align = align.max(GRANULE);
        for slab in st.slabs.iter_mut() {
            let base = slab.base.as_ptr() as usize;
            let start = round_up(base + slab.top, align) - base;
            if start + size <= slab.size {
                slab.top = start + size;
                return Some(base + start);
            }
        }
        None
    }

    pub fn free(&self, block: Block) -> Result<()> {
        if block.len == 0 {
            return Ok(());
        }
        let mut st = self.state.lock().unwrap();
        let size = st.outstanding.remove(&block.addr()).ok_or(Error::InvalidFree(block.addr()))?;
        st.free.entry(size).or_default().push(block.addr());
        st.stats.in_use_bytes -= size;
        st.stats.free_calls += 1;
        Ok(())
    }

    pub fn stats(&self) -> ArenaStats {
        self.state.lock().unwrap().stats
    }

    /// Sum of the sizes of all outstanding blocks, computed from the
    /// allocation table rather than the running counter.
    pub fn outstanding_bytes(&self) -> usize {
        self.state.lock().unwrap().outstanding.values().sum()
    }

    /// Counters and the table-derived outstanding sum, read under one lock.
    pub fn accounting(&self) -> (ArenaStats, usize) {
        let st = self.state.lock().unwrap();
        (st.stats, st.outstanding.values().sum())
    }

    /// `true` if `addr..addr+len` lies inside one of this arena's slabs.
    pub fn owns(&self, addr: usize, len: usize) -> bool {
        let st = self.state.lock().unwrap();
        st.slabs.iter().any(|s| {
            let b = s.base.as_ptr() as usize;
            addr >= b && addr + len <= b + s.size
        })
    }
}

impl Drop for Arena {
    fn drop(&mut self) {
        let st = self.state.get_mut().unwrap();
        for s in st.slabs.drain(..) {
            // SAFETY: allocated in add_slab with this layout.
            unsafe { alloc::dealloc(s.base.as_ptr(), Layout::from_size_align_unchecked(s.size, SLAB_ALIGN)) };
        }
    }
}

impl fmt::Debug for Arena {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Arena").field("stats", &self.stats()).finish()
    }
}

/// Which allocator backs a fab, particle tile or communication buffer.
#[derive(Clone)]
pub enum ArenaHandle {
    Pooled(Arc<Arena>),
    Async(Arc<AsyncArena>),
    /// Plain system allocator, one allocation per request.
    System,
}

impl ArenaHandle {
    pub fn alloc(&self, nbytes: usize, align: usize) -> Result<Block> {
        match self {
            ArenaHandle::Pooled(a) => a.alloc(nbytes, align),
            ArenaHandle::Async(a) => a.alloc(nbytes, align),
            ArenaHandle::System => system_alloc(nbytes, align),
        }
    }

    pub fn free(&self, block: Block) -> Result<()> {
        match self {
            ArenaHandle::Pooled(a) => a.free(block),
            ArenaHandle::Async(a) => a.free(block),
            ArenaHandle::System => {
                system_free(block);
                Ok(())
            }
        }
    }

    /// Statistics of the underlying pool; `None` for the system allocator.
    pub fn stats(&self) -> Option<ArenaStats> {
        match self {
            ArenaHandle::Pooled(a) => Some(a.stats()),
            ArenaHandle::Async(a) => Some(a.stats()),
            ArenaHandle::System => None,
        }
    }

    /// The process-wide default arena, as selected by [`configure`].
    pub fn the_arena() -> ArenaHandle {
        match ArenaKind::from_u8(DEFAULT_KIND.load(Ordering::Relaxed)) {
            ArenaKind::Pooled => ArenaHandle::Pooled(default_pool().clone()),
            ArenaKind::System => ArenaHandle::System,
        }
    }

    /// The process-wide asynchronous-safe arena.
    pub fn the_async_arena() -> ArenaHandle {
        ArenaHandle::Async(default_async().clone())
    }

    pub fn system() -> ArenaHandle {
        ArenaHandle::System
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ArenaHandle::Pooled(_) => "pooled",
            ArenaHandle::Async(_) => "async",
            ArenaHandle::System => "system",
        }
    }
}

impl Default for ArenaHandle {
    fn default() -> Self {
        ArenaHandle::the_arena()
    }
}

impl fmt::Debug for ArenaHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind_name())
    }
}

fn system_alloc(nbytes: usize, align: usize) -> Result<Block> {
    if !align.is_power_of_two() {
        return Err(Error::BadAlignment(align));
    }
    if nbytes == 0 {
        return Ok(Block::empty(align));
    }
    let layout = Layout::from_size_align(nbytes, align).map_err(|_| Error::AllocFailed(nbytes))?;
    // SAFETY: non-zero size.
    let p = unsafe { alloc::alloc(layout) };
    let ptr = NonNull::new(p).ok_or(Error::AllocFailed(nbytes))?;
    Ok(Block { ptr, len: nbytes, align })
}

fn system_free(block: Block) {
    if block.len == 0 {
        return;
    }
    // SAFETY: allocated by system_alloc with the same size and alignment.
    unsafe { alloc::dealloc(block.as_ptr(), Layout::from_size_align_unchecked(block.len, block.align)) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArenaKind {
    Pooled,
    System,
}

impl ArenaKind {
    fn from_u8(v: u8) -> Self {
        if v == 1 {
            ArenaKind::System
        } else {
            ArenaKind::Pooled
        }
    }
}

impl std::str::FromStr for ArenaKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(ArenaKind::Pooled),
            "system" => Ok(ArenaKind::System),
            _ => Err(Error::InputsValue { key: "arena.kind".into(), message: format!("unknown kind `{s}`") }),
        }
    }
}

static DEFAULT_KIND: AtomicU8 = AtomicU8::new(0);
static DEFAULT_INIT: OnceLock<usize> = OnceLock::new();
static DEFAULT_POOL: OnceLock<Arc<Arena>> = OnceLock::new();
static DEFAULT_ASYNC: OnceLock<Arc<AsyncArena>> = OnceLock::new();

/// Selects the default arena kind and the initial capacity of the default
/// pools. The capacity only takes effect if the pools have not been used yet;
/// returns `false` in that case.
pub fn configure(kind: ArenaKind, init_size: Option<usize>) -> bool {
    DEFAULT_KIND.store(if kind == ArenaKind::System { 1 } else { 0 }, Ordering::Relaxed);
    match init_size {
        Some(n) => DEFAULT_INIT.set(n).is_ok() && DEFAULT_POOL.get().is_none(),
        None => true,
    }
}

fn default_init_size() -> usize {
    *DEFAULT_INIT.get_or_init(|| DEFAULT_MEMORY_BUDGET / 2)
}

pub fn default_pool() -> &'static Arc<Arena> {
    DEFAULT_POOL.get_or_init(|| Arc::new(Arena::new(default_init_size()).expect("default arena reservation")))
}

pub fn default_async() -> &'static Arc<AsyncArena> {
    DEFAULT_ASYNC.get_or_init(|| Arc::new(AsyncArena::new(0).expect("async arena reservation")))
}
