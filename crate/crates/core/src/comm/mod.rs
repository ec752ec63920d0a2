//! All-reduce collectives used for model synchronization.
//!
//! Two interchangeable backends implement [`SyncHandle`]:
//!
//! * [`inproc`]: worker threads in one process meeting at a shared
//!   rendezvous point.
//! * [`socket`]: one process (or thread) per worker over TCP, using the
//!   frame format in [`frame`].
//!
//! Every backend sums in rank order `0..K`, so `allreduce_sum` returns the
//! same bits on every member, on every run, and on either backend.

pub mod frame;
pub mod inproc;
pub mod socket;

use std::io;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inproc::{InProcGroup, InProcHandle};
pub use socket::{SocketHandle, SocketOptions};

pub const DEFAULT_SYNC_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum CommError {
    #[error("rank {rank}: {op} timed out after {timeout:?}")]
    Timeout {
        rank: usize,
        op: &'static str,
        timeout: Duration,
    },
    #[error("rank {rank}: a peer left the group during {op}")]
    PeerLeft { rank: usize, op: &'static str },
    #[error("rank {rank}: vector length mismatch in {op}: expected {expected}, rank {peer} sent {got}")]
    LengthMismatch {
        rank: usize,
        op: &'static str,
        peer: usize,
        expected: usize,
        got: usize,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("group aborted: {0}")]
    Aborted(String),
    #[error("rendezvous failed: {0}")]
    Rendezvous(String),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// One worker's endpoint in a synchronization group.
///
/// All methods are blocking collectives: each member of the group must call
/// the same operation in the same order.
pub trait SyncHandle: Send {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    /// Rank-ordered componentwise sum of every member's `vector`.
    fn allreduce_sum(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError>;

    /// Every member receives `root`'s vector; other members' input is ignored.
    fn broadcast(&mut self, vector: &[f64], root: usize) -> Result<Vec<f64>, CommError>;

    fn barrier(&mut self) -> Result<(), CommError>;

    /// Payload and header bytes this member has written to the wire so far.
    fn bytes_sent(&self) -> u64;
}

impl<T: SyncHandle + ?Sized> SyncHandle for Box<T> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn size(&self) -> usize {
        (**self).size()
    }
    fn allreduce_sum(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError> {
        (**self).allreduce_sum(vector)
    }
    fn broadcast(&mut self, vector: &[f64], root: usize) -> Result<Vec<f64>, CommError> {
        (**self).broadcast(vector, root)
    }
    fn barrier(&mut self) -> Result<(), CommError> {
        (**self).barrier()
    }
    fn bytes_sent(&self) -> u64 {
        (**self).bytes_sent()
    }
}

/// Reduction topology for the socket backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Gather to rank 0, sum, send back.
    #[default]
    Star,
    /// Pipelined chain along the ring `0 → 1 → … → K−1`, then the total
    /// travels once more around the ring. Segments accumulate in rank
    /// order, so results match the star bit for bit.
    Ring,
}

impl FromStr for Topology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(Topology::Star),
            "ring" => Ok(Topology::Ring),
            other => Err(format!("unknown topology `{other}` (expected star or ring)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backend {
    InProc,
    Socket {
        /// `host:port` where rank 0 listens.
        coordinator: String,
        topology: Topology,
    },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::InProc => "inproc",
            Backend::Socket { .. } => "socket",
        }
    }
}

/// Description of a synchronization group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncGroup {
    pub size: usize,
    pub backend: Backend,
    pub timeout: Duration,
}

impl SyncGroup {
    pub fn inproc(size: usize) -> Self {
        Self {
            size,
            backend: Backend::InProc,
            timeout: DEFAULT_SYNC_TIMEOUT,
        }
    }

    /// Loopback socket group on an ephemeral port.
    pub fn loopback(size: usize, topology: Topology) -> Self {
        Self {
            size,
            backend: Backend::Socket {
                coordinator: "127.0.0.1:0".to_string(),
                topology,
            },
            timeout: DEFAULT_SYNC_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn validate(&self) -> Result<(), CommError> {
        if self.size == 0 {
            return Err(CommError::InvalidGroup("group size must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(CommError::InvalidGroup("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Creates all `size` handles inside this process. Socket groups bind
    /// the coordinator address and connect each rank from its own thread.
    pub fn connect_local(&self) -> Result<Vec<Box<dyn SyncHandle>>, CommError> {
        self.validate()?;
        match &self.backend {
            Backend::InProc => Ok(InProcGroup::with_timeout(self.size, self.timeout)
                .into_iter()
                .map(|h| Box::new(h) as Box<dyn SyncHandle>)
                .collect()),
            Backend::Socket {
                coordinator,
                topology,
            } => {
                let opts = SocketOptions {
                    timeout: self.timeout,
                    topology: *topology,
                };
                Ok(socket::connect_local(coordinator, self.size, opts)?
                    .into_iter()
                    .map(|h| Box::new(h) as Box<dyn SyncHandle>)
                    .collect())
            }
        }
    }
}
