//! Threaded all-reduce over a shared rendezvous slot table.
//!
//! Each collective runs in two phases. While collecting, members deposit
//! their vectors; the last arrival reduces in rank order and flips the
//! phase. While distributing, members copy the shared result out; the last
//! one to leave resets the table for the next collective. A member entering
//! a new collective waits until the previous one has fully drained.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{CommError, SyncHandle, DEFAULT_SYNC_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    AllReduce,
    Broadcast(usize),
    Barrier,
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::AllReduce => "allreduce_sum",
            Op::Broadcast(_) => "broadcast",
            Op::Barrier => "barrier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Collecting,
    Distributing,
}

#[derive(Debug, Clone)]
enum Outcome {
    Ready(Arc<Vec<f64>>),
    Mismatch { peer: usize, expected: usize, got: usize },
}

struct State {
    phase: Phase,
    op: Option<Op>,
    slots: Vec<Option<Vec<f64>>>,
    arrived: usize,
    departed: usize,
    outcome: Option<Outcome>,
    failure: Option<String>,
    members_left: usize,
}

struct Shared {
    size: usize,
    timeout: Duration,
    state: Mutex<State>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Factory for the handles of one in-process group.
pub struct InProcGroup;

impl InProcGroup {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(size: usize) -> Vec<InProcHandle> {
        Self::with_timeout(size, DEFAULT_SYNC_TIMEOUT)
    }

    /// One handle per rank, in rank order.
    pub fn with_timeout(size: usize, timeout: Duration) -> Vec<InProcHandle> {
        assert!(size >= 1, "group size must be at least 1");
        let shared = Arc::new(Shared {
            size,
            timeout,
            state: Mutex::new(State {
                phase: Phase::Collecting,
                op: None,
                slots: vec![None; size],
                arrived: 0,
                departed: 0,
                outcome: None,
                failure: None,
                members_left: 0,
            }),
            changed: Condvar::new(),
        });
        (0..size)
            .map(|rank| InProcHandle {
                rank,
                shared: Arc::clone(&shared),
            })
            .collect()
    }
}

/// A rank's endpoint. Dropping it while peers wait in a collective aborts
/// the group.
pub struct InProcHandle {
    rank: usize,
    shared: Arc<Shared>,
}

impl InProcHandle {
    fn abort(&self, state: &mut State, reason: String) -> String {
        if state.failure.is_none() {
            state.failure = Some(reason);
        }
        self.shared.changed.notify_all();
        state.failure.clone().unwrap_or_default()
    }

    fn reduce(&self, state: &State, op: Op) -> Outcome {
        match op {
            Op::AllReduce => {
                let mut acc = state.slots[0].clone().unwrap_or_default();
                for (peer, slot) in state.slots.iter().enumerate().skip(1) {
                    let v = slot.as_deref().unwrap_or_default();
                    if v.len() != acc.len() {
                        return Outcome::Mismatch {
                            peer,
                            expected: acc.len(),
                            got: v.len(),
                        };
                    }
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                }
                Outcome::Ready(Arc::new(acc))
            }
            Op::Broadcast(root) => {
                Outcome::Ready(Arc::new(state.slots[root].clone().unwrap_or_default()))
            }
            Op::Barrier => Outcome::Ready(Arc::new(Vec::new())),
        }
    }

    fn collective(&mut self, op: Op, data: &[f64]) -> Result<Arc<Vec<f64>>, CommError> {
        let shared = Arc::clone(&self.shared);
        let deadline = Instant::now() + shared.timeout;
        let mut state = shared.lock();

        // Wait for the previous collective to drain.
        while state.phase == Phase::Distributing && state.failure.is_none() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                self.abort(&mut state, format!("rank {} timed out in {}", self.rank, op.name()));
                return Err(self.timeout_error(op));
            }
            state = shared.changed.wait_timeout(state, left).unwrap_or_else(|e| e.into_inner()).0;
        }
        if let Some(reason) = &state.failure {
            return Err(CommError::Aborted(reason.clone()));
        }
        if state.members_left > 0 {
            self.abort(&mut state, format!("rank {} entered {} after a peer left", self.rank, op.name()));
            return Err(CommError::PeerLeft {
                rank: self.rank,
                op: op.name(),
            });
        }
        match state.op {
            Some(current) if current != op => {
                let reason = self.abort(
                    &mut state,
                    format!(
                        "rank {} called {} while peers are in {}",
                        self.rank,
                        op.name(),
                        current.name()
                    ),
                );
                return Err(CommError::Protocol(reason));
            }
            _ => state.op = Some(op),
        }

        state.slots[self.rank] = Some(data.to_vec());
        state.arrived += 1;
        if state.arrived == shared.size {
            let outcome = self.reduce(&state, op);
            state.outcome = Some(outcome);
            state.phase = Phase::Distributing;
            shared.changed.notify_all();
        } else {
            while state.phase == Phase::Collecting && state.failure.is_none() {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    self.abort(&mut state, format!("rank {} timed out in {}", self.rank, op.name()));
                    return Err(self.timeout_error(op));
                }
                state = shared.changed.wait_timeout(state, left).unwrap_or_else(|e| e.into_inner()).0;
            }
            if state.phase == Phase::Collecting {
                let reason = state.failure.clone().unwrap_or_default();
                return Err(CommError::Aborted(reason));
            }
        }

        let outcome = state.outcome.clone().expect("outcome is set while distributing");
        state.departed += 1;
        if state.departed == shared.size {
            state.slots.iter_mut().for_each(|s| *s = None);
            state.arrived = 0;
            state.departed = 0;
            state.outcome = None;
            state.op = None;
            state.phase = Phase::Collecting;
            shared.changed.notify_all();
        }
        match outcome {
            Outcome::Ready(v) => Ok(v),
            Outcome::Mismatch {
                peer,
                expected,
                got,
            } => Err(CommError::LengthMismatch {
                rank: self.rank,
                op: op.name(),
                peer,
                expected,
                got,
            }),
        }
    }

    fn timeout_error(&self, op: Op) -> CommError {
        CommError::Timeout {
            rank: self.rank,
            op: op.name(),
            timeout: self.shared.timeout,
        }
    }
}

impl SyncHandle for InProcHandle {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.shared.size
    }

    fn allreduce_sum(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError> {
        if self.shared.size == 1 {
            return Ok(vector.to_vec());
        }
        Ok(self.collective(Op::AllReduce, vector)?.as_ref().clone())
    }

    fn broadcast(&mut self, vector: &[f64], root: usize) -> Result<Vec<f64>, CommError> {
        if root >= self.shared.size {
            return Err(CommError::InvalidGroup(format!(
                "broadcast root {root} outside group of {}",
                self.shared.size
            )));
        }
        if self.shared.size == 1 {
            return Ok(vector.to_vec());
        }
        Ok(self.collective(Op::Broadcast(root), vector)?.as_ref().clone())
    }

    fn barrier(&mut self) -> Result<(), CommError> {
        if self.shared.size == 1 {
            return Ok(());
        }
        self.collective(Op::Barrier, &[]).map(|_| ())
    }

    /// Always zero: nothing leaves the process.
    fn bytes_sent(&self) -> u64 {
        0
    }
}

impl Drop for InProcHandle {
    fn drop(&mut self) {
        let mut state = self.shared.lock();
        state.members_left += 1;
        if state.phase == Phase::Collecting && state.arrived > 0 {
            let reason = format!("rank {} left while peers wait in a collective", self.rank);
            self.abort(&mut state, reason);
        }
    }
}
