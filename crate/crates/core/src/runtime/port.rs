use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::automata::Direction;
use crate::connector::Literal;

use super::PortError;

/// Wake-up signal shared by all ports of one coordinator.
#[derive(Debug, Default)]
pub(crate) struct Shared {
    pub(crate) generation: Mutex<u64>,
    pub(crate) cv: Condvar,
    pub(crate) stopped: AtomicBool,
}

impl Shared {
    pub(crate) fn notify(&self) {
        let mut g = self.generation.lock().unwrap();
        *g += 1;
        self.cv.notify_all();
    }

    pub(crate) fn is_stopped(&self) -> bool {
        self.stopped.load(Ordering::SeqCst)
    }
}

#[derive(Debug)]
pub(crate) struct PendingWrite {
    pub(crate) datum: Literal,
    pub(crate) done: Sender<Result<(), PortError>>,
}

#[derive(Debug)]
pub(crate) struct PendingTake {
    pub(crate) done: Sender<Result<Literal, PortError>>,
}

#[derive(Debug)]
pub(crate) struct PortInner {
    pub(crate) name: String,
    pub(crate) direction: Direction,
    pub(crate) writes: Mutex<VecDeque<PendingWrite>>,
    pub(crate) takes: Mutex<VecDeque<PendingTake>>,
    pub(crate) shared: Arc<Shared>,
}

impl PortInner {
    /// Fails every queued operation with `Shutdown`.
    pub(crate) fn drain(&self) {
        for w in self.writes.lock().unwrap().drain(..) {
            let _ = w.done.send(Err(PortError::Shutdown));
        }
        for t in self.takes.lock().unwrap().drain(..) {
            let _ = t.done.send(Err(PortError::Shutdown));
        }
    }
}

/// Handle to a boundary port. Cloning yields another handle to the same port.
#[derive(Debug, Clone)]
pub struct Port {
    pub(crate) inner: Arc<PortInner>,
}

impl Port {
    pub(crate) fn new(name: &str, direction: Direction, shared: Arc<Shared>) -> Port {
        Port {
            inner: Arc::new(PortInner {
                name: name.to_string(),
                direction,
                writes: Mutex::new(VecDeque::new()),
                takes: Mutex::new(VecDeque::new()),
                shared,
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn direction(&self) -> Direction {
        self.inner.direction
    }

    fn wrong_direction(&self) -> PortError {
        PortError::WrongDirection {
            port: self.inner.name.clone(),
            direction: self.inner.direction,
        }
    }

    /// Queues `datum` without waiting for it to be consumed.
    pub fn submit_write(&self, datum: Literal) -> Result<WriteTicket, PortError> {
        if self.inner.direction != Direction::Input {
            return Err(self.wrong_direction());
        }
        let (tx, rx) = mpsc::channel();
        {
            let mut q = self.inner.writes.lock().unwrap();
            if self.inner.shared.is_stopped() {
                return Err(PortError::Shutdown);
            }
            q.push_back(PendingWrite { datum, done: tx });
        }
        self.inner.shared.notify();
        Ok(WriteTicket { rx })
    }

    /// Queues a take without waiting for a datum.
    pub fn submit_take(&self) -> Result<TakeTicket, PortError> {
        if self.inner.direction != Direction::Output {
            return Err(self.wrong_direction());
        }
        let (tx, rx) = mpsc::channel();
        {
            let mut q = self.inner.takes.lock().unwrap();
            if self.inner.shared.is_stopped() {
                return Err(PortError::Shutdown);
            }
            q.push_back(PendingTake { done: tx });
        }
        self.inner.shared.notify();
        Ok(TakeTicket { rx })
    }

    /// Blocks until the connector consumes `datum`.
    pub fn write(&self, datum: Literal) -> Result<(), PortError> {
        self.submit_write(datum)?.wait()
    }

    /// Blocks until the connector delivers a datum.
    pub fn take(&self) -> Result<Literal, PortError> {
        self.submit_take()?.wait()
    }

    /// Number of operations waiting on this port.
    pub fn pending(&self) -> usize {
        self.inner.writes.lock().unwrap().len() + self.inner.takes.lock().unwrap().len()
    }
}

fn recv<T>(rx: &Receiver<Result<T, PortError>>) -> Result<T, PortError> {
    rx.recv().unwrap_or(Err(PortError::Shutdown))
}

fn recv_timeout<T>(rx: &Receiver<Result<T, PortError>>, d: Duration) -> Option<Result<T, PortError>> {
    match rx.recv_timeout(d) {
        Ok(r) => Some(r),
        Err(RecvTimeoutError::Timeout) => None,
        Err(RecvTimeoutError::Disconnected) => Some(Err(PortError::Shutdown)),
    }
}

fn try_recv<T>(rx: &Receiver<Result<T, PortError>>) -> Option<Result<T, PortError>> {
    match rx.try_recv() {
        Ok(r) => Some(r),
        Err(TryRecvError::Empty) => None,
        Err(TryRecvError::Disconnected) => Some(Err(PortError::Shutdown)),
    }
}

#[derive(Debug)]
pub struct WriteTicket {
    rx: Receiver<Result<(), PortError>>,
}

impl WriteTicket {
    pub fn wait(self) -> Result<(), PortError> {
        recv(&self.rx)
    }
    pub fn wait_timeout(&self, d: Duration) -> Option<Result<(), PortError>> {
        recv_timeout(&self.rx, d)
    }
    pub fn try_wait(&self) -> Option<Result<(), PortError>> {
        try_recv(&self.rx)
    }
}

#[derive(Debug)]
pub struct TakeTicket {
    rx: Receiver<Result<Literal, PortError>>,
}

impl TakeTicket {
    pub fn wait(self) -> Result<Literal, PortError> {
        recv(&self.rx)
    }
    pub fn wait_timeout(&self, d: Duration) -> Option<Result<Literal, PortError>> {
        recv_timeout(&self.rx, d)
    }
    pub fn try_wait(&self) -> Option<Result<Literal, PortError>> {
        try_recv(&self.rx)
    }
}
