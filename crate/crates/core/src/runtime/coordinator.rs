use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automata::guard::solve_conjunction;
use crate::automata::{hide, Atom, CellValue, ConstraintAutomaton, Direction, StateId};
use crate::connector::Literal;

use super::port::{PendingTake, PendingWrite, Port, Shared};
use super::{AbortReason, Event, RuntimeError, Stats};

/// Upper bound on write combinations examined per firing attempt.
pub const WITNESS_BOUND: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Policy {
    /// Try the enabled transitions in a fresh random order each round.
    #[default]
    Random,
    /// Rotate the starting transition each round.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Index of the transition that fired.
    Fired(usize),
    Aborted(AbortReason),
    /// The current state has no outgoing transitions.
    Deadlock,
}

enum Held<'a> {
    Writes(MutexGuard<'a, VecDeque<PendingWrite>>),
    Takes(MutexGuard<'a, VecDeque<PendingTake>>),
}

impl Held<'_> {
    fn is_empty(&self) -> bool {
        match self {
            Held::Writes(q) => q.is_empty(),
            Held::Takes(q) => q.is_empty(),
        }
    }
}

struct Engine {
    automaton: ConstraintAutomaton,
    dnfs: Vec<Vec<Vec<Atom>>>,
    ports: BTreeMap<String, Port>,
    state: StateId,
    memory: BTreeMap<String, CellValue>,
    rng: ChaCha8Rng,
    stats: Stats,
    listeners: Vec<Sender<Event>>,
    rotation: usize,
}

impl Engine {
    fn emit(&mut self, e: Event) {
        self.listeners.retain(|l| l.send(e.clone()).is_ok());
    }

    fn abort(&mut self, reason: AbortReason) -> StepOutcome {
        self.stats.aborts += 1;
        if !self.listeners.is_empty() {
            self.emit(Event::Abort(reason));
        }
        StepOutcome::Aborted(reason)
    }

    fn commit(
        &mut self,
        idx: usize,
        data: BTreeMap<String, Literal>,
        mem_post: BTreeMap<String, CellValue>,
    ) -> StepOutcome {
        let t = &self.automaton.transitions[idx];
        let (from, to, sync) = (t.from, t.to, t.sync.clone());
        self.memory.extend(mem_post);
        self.state = to;
        self.stats.fired += 1;
        if !self.listeners.is_empty() {
            let e = Event::Fire {
                from: self.automaton.state_label(from).to_string(),
                sync,
                data,
                to: self.automaton.state_label(to).to_string(),
            };
            self.emit(e);
        }
        StepOutcome::Fired(idx)
    }

    fn attempt(&mut self, idx: usize) -> StepOutcome {
        let sync: BTreeSet<String> = self.automaton.transitions[idx].sync.clone();
        if sync.is_empty() {
            let found = self.dnfs[idx]
                .iter()
                .find_map(|conj| solve_conjunction(conj, &BTreeMap::new(), &self.memory));
            return match found {
                Some(sol) => self.commit(idx, BTreeMap::new(), sol.mem_post),
                None => self.abort(AbortReason::GuardUnsatisfiable),
            };
        }

        // phase one: lock every queue in the sync set, in name order
        let ports: Vec<Port> = sync.iter().map(|p| self.ports[p].clone()).collect();
        let mut held: Vec<Held> = Vec::with_capacity(ports.len());
        let mut last: Option<&str> = None;
        for p in &ports {
            if last.is_some_and(|l| p.name() <= l) {
                self.stats.lock_order_violations += 1;
            }
            last = Some(p.name());
            held.push(match p.direction() {
                Direction::Input => Held::Writes(p.inner.writes.lock().unwrap()),
                _ => Held::Takes(p.inner.takes.lock().unwrap()),
            });
        }
        if held.iter().any(Held::is_empty) {
            drop(held);
            return self.abort(AbortReason::NoPendingOps);
        }

        // phase two: find pending writes whose data satisfy the guard
        let inputs: Vec<usize> = (0..held.len())
            .filter(|&i| matches!(held[i], Held::Writes(_)))
            .collect();
        let lens: Vec<usize> = inputs
            .iter()
            .map(|&i| match &held[i] {
                Held::Writes(q) => q.len(),
                Held::Takes(_) => unreachable!(),
            })
            .collect();
        let outputs: Vec<&str> = ports
            .iter()
            .filter(|p| p.direction() == Direction::Output)
            .map(Port::name)
            .collect();
        let mut choice = vec![0usize; inputs.len()];
        let mut witness = None;
        'search: for _ in 0..WITNESS_BOUND {
            let known: BTreeMap<String, Literal> = inputs
                .iter()
                .zip(&choice)
                .map(|(&i, &k)| match &held[i] {
                    Held::Writes(q) => (ports[i].name().to_string(), q[k].datum.clone()),
                    Held::Takes(_) => unreachable!(),
                })
                .collect();
            for conj in &self.dnfs[idx] {
                if let Some(sol) = solve_conjunction(conj, &known, &self.memory) {
                    if outputs.iter().all(|o| sol.ports.contains_key(*o)) {
                        witness = Some((choice.clone(), known, sol));
                        break 'search;
                    }
                }
            }
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < lens[k] {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
        let Some((choice, mut data, sol)) = witness else {
            drop(held);
            return self.abort(AbortReason::GuardUnsatisfiable);
        };

        // complete the chosen operations, then release the locks
        let mut chosen = inputs.iter().zip(&choice);
        for (i, h) in held.iter_mut().enumerate() {
            match h {
                Held::Writes(q) => {
                    let (_, &k) = chosen.next().expect("one choice per input");
                    let w = q.remove(k).expect("chosen write exists");
                    let _ = w.done.send(Ok(()));
                }
                Held::Takes(q) => {
                    let datum = sol.ports[ports[i].name()].clone();
                    let t = q.pop_front().expect("queue checked non-empty");
                    let _ = t.done.send(Ok(datum.clone()));
                    data.insert(ports[i].name().to_string(), datum);
                }
            }
        }
        drop(held);
        self.commit(idx, data, sol.mem_post)
    }

    fn step(&mut self) -> StepOutcome {
        let out: Vec<usize> = self.automaton.outgoing(self.state).map(|(i, _)| i).collect();
        if out.is_empty() {
            return StepOutcome::Deadlock;
        }
        let i = out[self.rng.gen_range(0..out.len())];
        self.attempt(i)
    }

    /// Tries outgoing transitions until one fires.
    fn round(&mut self, policy: Policy) -> bool {
        let mut out: Vec<usize> = self.automaton.outgoing(self.state).map(|(i, _)| i).collect();
        match policy {
            Policy::Random => out.shuffle(&mut self.rng),
            Policy::RoundRobin if !out.is_empty() => {
                let k = self.rotation % out.len();
                out.rotate_left(k);
                self.rotation = self.rotation.wrapping_add(1);
            }
            Policy::RoundRobin => {}
        }
        out.into_iter()
            .any(|i| matches!(self.attempt(i), StepOutcome::Fired(_)))
    }
}

/// A running (or steppable) instance of a connector.
pub struct Coordinator {
    engine: Arc<Mutex<Engine>>,
    shared: Arc<Shared>,
    ports: BTreeMap<String, Port>,
    worker: Option<JoinHandle<()>>,
    stopped: Option<Stats>,
}

/// Prepares `automaton` for execution. Internal ports are hidden first, so
/// the coordinator only ever waits on boundary ports.
pub fn open(automaton: &ConstraintAutomaton, seed: u64) -> Result<Coordinator, RuntimeError> {
    let internal: BTreeSet<String> = automaton
        .ports_with(Direction::Internal)
        .map(str::to_string)
        .collect();
    let a = hide(automaton, &internal)?;
    if a.ports.is_empty() {
        return Err(RuntimeError::NoBoundaryPorts);
    }
    a.check_well_formed()?;
    let shared = Arc::new(Shared::default());
    let ports: BTreeMap<String, Port> = a
        .ports
        .iter()
        .map(|(n, &d)| (n.clone(), Port::new(n, d, shared.clone())))
        .collect();
    let engine = Engine {
        dnfs: a.transitions.iter().map(|t| t.guard.dnf()).collect(),
        ports: ports.clone(),
        state: a.initial,
        memory: a.cells.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        stats: Stats::default(),
        listeners: Vec::new(),
        rotation: 0,
        automaton: a,
    };
    Ok(Coordinator {
        engine: Arc::new(Mutex::new(engine)),
        shared,
        ports,
        worker: None,
        stopped: None,
    })
}

impl Coordinator {
    pub fn port(&self, name: &str) -> Result<Port, RuntimeError> {
        self.ports
            .get(name)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownPort(name.to_string()))
    }

    pub fn ports(&self) -> impl Iterator<Item = &Port> {
        self.ports.values()
    }

    /// The automaton being executed, with internal ports hidden.
    pub fn automaton(&self) -> ConstraintAutomaton {
        self.engine.lock().unwrap().automaton.clone()
    }

    pub fn current_state(&self) -> String {
        let e = self.engine.lock().unwrap();
        e.automaton.state_label(e.state).to_string()
    }

    /// Receives every subsequent event.
    pub fn subscribe(&self) -> Receiver<Event> {
        let (tx, rx) = mpsc::channel();
        self.engine.lock().unwrap().listeners.push(tx);
        rx
    }

    /// Attempts one uniformly chosen outgoing transition.
    pub fn step(&self) -> StepOutcome {
        self.engine.lock().unwrap().step()
    }

    pub fn attempt_transition(&self, idx: usize) -> StepOutcome {
        self.engine.lock().unwrap().attempt(idx)
    }

    pub fn stats(&self) -> Stats {
        self.stopped
            .unwrap_or_else(|| self.engine.lock().unwrap().stats)
    }

    /// Starts the coordinator thread. Does nothing if already started or
    /// stopped.
    pub fn start(&mut self, policy: Policy) {
        if self.worker.is_some() || self.stopped.is_some() {
            return;
        }
        let engine = self.engine.clone();
        let shared = self.shared.clone();
        self.worker = Some(thread::spawn(move || run(&engine, &shared, policy)));
    }

    /// Stops the coordinator thread and fails every pending operation with
    /// `Shutdown`. Later calls return the same statistics.
    pub fn stop(&mut self) -> Stats {
        if let Some(s) = self.stopped {
            return s;
        }
        self.shared
            .stopped
            .store(true, std::sync::atomic::Ordering::SeqCst);
        self.shared.notify();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
        for p in self.ports.values() {
            p.inner.drain();
        }
        let stats = self.engine.lock().unwrap().stats;
        self.stopped = Some(stats);
        stats
    }
}

impl Drop for Coordinator {
    fn drop(&mut self) {
        self.stop();
    }
}

fn run(engine: &Mutex<Engine>, shared: &Shared, policy: Policy) {
    loop {
        if shared.is_stopped() {
            return;
        }
        let seen = *shared.generation.lock().unwrap();
        if engine.lock().unwrap().round(policy) {
            continue;
        }
        let mut g = shared.generation.lock().unwrap();
        while *g == seen && !shared.is_stopped() {
            g = shared.cv.wait(g).unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{Guard, Term};
    use crate::derivation::{derive, HideMode};
    use crate::fixtures;
    use crate::runtime::PortError;

    fn lit(s: &str) -> Literal {
        Literal::str(s)
    }

    fn merger() -> ConstraintAutomaton {
        derive(&fixtures::merger_connector(), &HideMode::Internal).unwrap()
    }

    #[test]
    fn directions_enforced() {
        let c = open(&merger(), 1).unwrap();
        let d = c.port("D").unwrap();
        assert_eq!(
            d.write(lit("x")),
            Err(PortError::WrongDirection {
                port: "D".into(),
                direction: Direction::Output
            })
        );
        assert!(matches!(c.port("A").unwrap().submit_take(), Err(PortError::WrongDirection { .. })));
        assert!(matches!(c.port("C"), Err(RuntimeError::UnknownPort(_))));
    }

    #[test]
    fn needs_boundary_ports() {
        let mut a = ConstraintAutomaton::new("closed").with_port("X", Direction::Internal);
        let s = a.add_state("s");
        a.add_transition(s, s, &["X"], Guard::True);
        assert_eq!(open(&a, 0).err(), Some(RuntimeError::NoBoundaryPorts));
    }

    #[test]
    fn abort_without_pending_ops() {
        let c = open(&merger(), 3).unwrap();
        assert_eq!(c.step(), StepOutcome::Aborted(AbortReason::NoPendingOps));
        assert_eq!(c.stats().aborts, 1);
        assert_eq!(c.stats().fired, 0);
    }

    #[test]
    fn abort_on_unsatisfiable_guard_keeps_op() {
        let mut a = ConstraintAutomaton::new("only-foo").with_port("A", Direction::Input);
        let s = a.add_state("s");
        a.add_transition(s, s, &["A"], Guard::eq(Term::port("A"), Term::str("foo")));
        let c = open(&a, 0).unwrap();
        let port = c.port("A").unwrap();
        let bar = port.submit_write(lit("bar")).unwrap();
        assert_eq!(c.step(), StepOutcome::Aborted(AbortReason::GuardUnsatisfiable));
        assert!(bar.try_wait().is_none());
        // a later matching write is found behind the first one
        let foo = port.submit_write(lit("foo")).unwrap();
        assert_eq!(c.step(), StepOutcome::Fired(0));
        assert_eq!(foo.try_wait(), Some(Ok(())));
        assert_eq!(port.pending(), 1);
    }

    #[test]
    fn filter_consumes_non_matching_item() {
        let a = derive(&fixtures::sequencer_connector(), &HideMode::Internal).unwrap();
        let mut c = open(&a, 7).unwrap();
        c.start(Policy::Random);
        let (pa, pb, pd) = (c.port("A").unwrap(), c.port("B").unwrap(), c.port("D").unwrap());
        pa.write(lit("bar")).unwrap();
        pb.write(lit("x")).unwrap();
        assert_eq!(pd.take(), Ok(lit("x")));
        pa.write(lit("foo")).unwrap();
        assert_eq!(pd.take(), Ok(lit("foo")));
        let stats = c.stop();
        assert_eq!(stats.fired, 5);
        assert_eq!(stats.lock_order_violations, 0);
    }

    #[test]
    fn same_seed_same_choices() {
        let run = |seed| {
            let c = open(&merger(), seed).unwrap();
            let rx = c.subscribe();
            let (a, b) = (c.port("A").unwrap(), c.port("B").unwrap());
            let d = c.port("D").unwrap();
            let mut tickets = Vec::new();
            for i in 0..20 {
                tickets.push(a.submit_write(Literal::Int(i)).unwrap());
                tickets.push(b.submit_write(Literal::Int(100 + i)).unwrap());
            }
            let takes: Vec<_> = (0..40).map(|_| d.submit_take().unwrap()).collect();
            for _ in 0..200 {
                c.step();
            }
            drop(takes);
            rx.try_iter().map(|e| e.to_string()).collect::<Vec<_>>()
        };
        let first = run(42);
        assert!(first.iter().any(|l| l.starts_with("FIRE")));
        assert_eq!(first, run(42));
        assert_ne!(first, run(43));
    }

    #[test]
    fn stop_releases_blocked_takers() {
        let mut c = open(&merger(), 5).unwrap();
        c.start(Policy::Random);
        let d = c.port("D").unwrap();
        let takers: Vec<_> = (0..3)
            .map(|_| {
                let d = d.clone();
                thread::spawn(move || d.take())
            })
            .collect();
        while d.pending() < 3 {
            thread::yield_now();
        }
        c.stop();
        for t in takers {
            assert_eq!(t.join().unwrap(), Err(PortError::Shutdown));
        }
        assert_eq!(d.take(), Err(PortError::Shutdown));
        assert_eq!(c.stop(), c.stats());
    }

    #[test]
    fn every_item_delivered_once() {
        let mut c = open(&merger(), 11).unwrap();
        c.start(Policy::RoundRobin);
        let a = c.port("A").unwrap();
        let d = c.port("D").unwrap();
        let producer = thread::spawn(move || {
            for i in 0..200 {
                a.write(Literal::Int(i)).unwrap();
            }
        });
        let got: Vec<Literal> = (0..200).map(|_| d.take().unwrap()).collect();
        producer.join().unwrap();
        assert_eq!(got, (0..200).map(Literal::Int).collect::<Vec<_>>());
        assert_eq!(c.stop().fired, 400);
    }
}
