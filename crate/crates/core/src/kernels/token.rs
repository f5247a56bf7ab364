use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};

type Callback = Box<dyn FnOnce() + Send>;

struct Inner {
    done: AtomicBool,
    panicked: AtomicBool,
    callbacks: Mutex<Vec<Callback>>,
    cv: Condvar,
}

/// Completion handle of an asynchronously launched task.
#[derive(Clone)]
pub struct CompletionToken(Arc<Inner>);

impl CompletionToken {
    pub fn new() -> Self {
        CompletionToken(Arc::new(Inner {
            done: AtomicBool::new(false),
            panicked: AtomicBool::new(false),
            callbacks: Mutex::new(Vec::new()),
            cv: Condvar::new(),
        }))
    }

    pub fn is_complete(&self) -> bool {
        self.0.done.load(Ordering::Acquire)
    }

    /// True if the task panicked (it still counts as complete).
    pub fn panicked(&self) -> bool {
        self.0.panicked.load(Ordering::Acquire)
    }

    pub(crate) fn mark_panicked(&self) {
        self.0.panicked.store(true, Ordering::Release);
    }

    /// Marks the task complete, wakes waiters and runs the callbacks.
    /// Idempotent.
    pub fn complete(&self) {
        let cbs = {
            let mut g = self.0.callbacks.lock().unwrap();
            if self.0.done.swap(true, Ordering::AcqRel) {
                return;
            }
            self.0.cv.notify_all();
            std::mem::take(&mut *g)
        };
        for cb in cbs {
            cb();
        }
    }

    /// Runs `cb` on completion, or right away if already complete.
    pub fn on_complete(&self, cb: impl FnOnce() + Send + 'static) {
        let mut g = self.0.callbacks.lock().unwrap();
        if self.is_complete() {
            drop(g);
            cb();
        } else {
            g.push(Box::new(cb));
        }
    }

    /// Blocks until complete.
    pub fn wait(&self) {
        let mut g = self.0.callbacks.lock().unwrap();
        while !self.is_complete() {
            g = self.0.cv.wait(g).unwrap();
        }
    }

    pub fn same_as(&self, other: &CompletionToken) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Default for CompletionToken {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for CompletionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompletionToken").field("complete", &self.is_complete()).finish()
    }
}
