//! TCP backend: one connection per member to rank 0 (the coordinator), plus
//! ring links when the ring topology is selected.
//!
//! Rendezvous: rank 0 listens on the coordinator address, ranks `1..K`
//! connect and send `Register`, and rank 0 answers each with `Welcome`
//! once every rank has arrived. With the ring topology each rank also
//! listens on an ephemeral port, announced in `Register` and distributed in
//! `Welcome` as `[a, b, c, d, port]` per rank, and connects to its successor.
//!
//! Any I/O failure, timeout or malformed frame is fatal for the handle.
//! A failing member drops its sockets, so peers fail on EOF instead of
//! waiting out the timeout.

use std::io::{self, BufReader, BufWriter};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{read_frame, write_frame, Frame, MessageType};
use super::{CommError, SyncHandle, Topology, DEFAULT_SYNC_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SocketOptions {
    pub timeout: Duration,
    pub topology: Topology,
}

impl Default for SocketOptions {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_SYNC_TIMEOUT,
            topology: Topology::Star,
        }
    }
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Conn {
    fn new(stream: TcpStream, timeout: Duration) -> io::Result<Self> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    fn send(&mut self, kind: MessageType, rank: usize, payload: &[f64]) -> io::Result<usize> {
        write_frame(&mut self.writer, kind, rank, payload)
    }

    fn recv(&mut self) -> Result<Frame, CommError> {
        read_frame(&mut self.reader)
    }

    fn local_ip(&self) -> io::Result<IpAddr> {
        Ok(self.writer.get_ref().local_addr()?.ip())
    }

    fn peer_ip(&self) -> io::Result<IpAddr> {
        Ok(self.writer.get_ref().peer_addr()?.ip())
    }
}

enum Role {
    /// Connections to ranks `1..K`, index `r - 1`.
    Root { members: Vec<Conn> },
    Member { root: Conn },
}

struct RingLinks {
    next: Conn,
    prev: Conn,
}

/// Socket endpoint of one rank.
pub struct SocketHandle {
    rank: usize,
    size: usize,
    opts: SocketOptions,
    role: Role,
    ring: Option<RingLinks>,
    bytes_sent: u64,
    failure: Option<String>,
}

fn accept_until(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, CommError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => return Ok(stream),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(CommError::Rendezvous("timed out waiting for peers to connect".into()));
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn connect_until<A: ToSocketAddrs + std::fmt::Display>(addr: A, deadline: Instant) -> Result<TcpStream, CommError> {
    let mut last_err: Option<io::Error> = None;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            let detail = last_err.map(|e| e.to_string()).unwrap_or_else(|| "timed out".into());
            return Err(CommError::Rendezvous(format!("could not reach {addr}: {detail}")));
        }
        let attempt = left.min(Duration::from_secs(1));
        match addr.to_socket_addrs() {
            Ok(addrs) => {
                for sa in addrs {
                    match TcpStream::connect_timeout(&sa, attempt) {
                        Ok(s) => return Ok(s),
                        Err(e) => last_err = Some(e),
                    }
                }
            }
            Err(e) => last_err = Some(e),
        }
        thread::sleep(Duration::from_millis(20).min(left));
    }
}

fn push_addr(table: &mut Vec<f64>, ip: IpAddr, port: u16) -> Result<(), CommError> {
    let v4 = match ip {
        IpAddr::V4(v4) => v4,
        IpAddr::V6(v6) => v6
            .to_ipv4_mapped()
            .ok_or_else(|| CommError::Rendezvous("ring topology requires IPv4 peers".into()))?,
    };
    table.extend(v4.octets().map(f64::from));
    table.push(f64::from(port));
    Ok(())
}

fn read_addr(entry: &[f64]) -> Result<SocketAddr, CommError> {
    let octet = |x: f64| -> Result<u8, CommError> {
        if (0.0..=255.0).contains(&x) && x.fract() == 0.0 {
            Ok(x as u8)
        } else {
            Err(CommError::Protocol(format!("bad address component {x}")))
        }
    };
    let ip = Ipv4Addr::new(octet(entry[0])?, octet(entry[1])?, octet(entry[2])?, octet(entry[3])?);
    let port = entry[4];
    if !(1.0..=65535.0).contains(&port) || port.fract() != 0.0 {
        return Err(CommError::Protocol(format!("bad ring port {port}")));
    }
    Ok(SocketAddr::new(IpAddr::V4(ip), port as u16))
}

fn expect(frame: &Frame, kind: MessageType) -> Result<(), CommError> {
    if frame.kind == kind {
        Ok(())
    } else {
        Err(CommError::Protocol(format!(
            "expected {kind:?} from rank {}, got {:?}",
            frame.rank, frame.kind
        )))
    }
}

impl SocketHandle {
    /// Binds `addr` and runs rank 0's side of the rendezvous.
    pub fn coordinate(addr: &str, size: usize, opts: SocketOptions) -> Result<Self, CommError> {
        let listener = TcpListener::bind(addr)?;
        Self::coordinate_with(listener, size, opts)
    }

    /// Rank 0 rendezvous on an already-bound listener.
    pub fn coordinate_with(listener: TcpListener, size: usize, opts: SocketOptions) -> Result<Self, CommError> {
        if size == 0 {
            return Err(CommError::InvalidGroup("group size must be at least 1".into()));
        }
        let deadline = Instant::now() + opts.timeout;
        let ring_listener = if opts.topology == Topology::Ring && size > 1 {
            Some(TcpListener::bind(SocketAddr::new(listener.local_addr()?.ip(), 0))?)
        } else {
            None
        };

        let mut slots: Vec<Option<(Conn, u16)>> = (1..size).map(|_| None).collect();
        for _ in 1..size {
            let stream = accept_until(&listener, deadline)?;
            let mut conn = Conn::new(stream, opts.timeout)?;
            let frame = conn.recv()?;
            expect(&frame, MessageType::Register)?;
            let r = frame.rank as usize;
            if r == 0 || r >= size {
                return Err(CommError::Rendezvous(format!("rank {r} outside group of {size}")));
            }
            if slots[r - 1].is_some() {
                return Err(CommError::Rendezvous(format!("rank {r} registered twice")));
            }
            let their_size = frame.payload.first().copied().unwrap_or(f64::NAN);
            if their_size != size as f64 {
                return Err(CommError::Rendezvous(format!(
                    "rank {r} expects group size {their_size}, coordinator has {size}"
                )));
            }
            let port = frame.payload.get(1).copied().unwrap_or(0.0) as u16;
            slots[r - 1] = Some((conn, port));
        }
        drop(listener);

        let (mut members, ports): (Vec<Conn>, Vec<u16>) = slots.into_iter().map(|s| s.expect("registered")).unzip();
        let peer_ips = members.iter().map(Conn::peer_ip).collect::<io::Result<Vec<_>>>()?;

        let mut bytes_sent = 0u64;
        for conn in members.iter_mut() {
            let mut table = Vec::new();
            if let Some(l) = &ring_listener {
                push_addr(&mut table, conn.local_ip()?, l.local_addr()?.port())?;
                for (ip, port) in peer_ips.iter().zip(&ports) {
                    push_addr(&mut table, *ip, *port)?;
                }
            }
            bytes_sent += conn.send(MessageType::Welcome, 0, &table)? as u64;
        }

        let mut handle = SocketHandle {
            rank: 0,
            size,
            opts,
            role: Role::Root { members },
            ring: None,
            bytes_sent,
            failure: None,
        };
        if let Some(l) = ring_listener {
            let next = SocketAddr::new(peer_ips[0], ports[0]);
            handle.ring = Some(handle.link_ring(&l, next, deadline)?);
        }
        Ok(handle)
    }

    /// Connects rank `rank` to the coordinator at `coordinator`, retrying
    /// until the timeout elapses.
    pub fn join(coordinator: &str, rank: usize, size: usize, opts: SocketOptions) -> Result<Self, CommError> {
        if rank == 0 || rank >= size {
            return Err(CommError::InvalidGroup(format!("rank {rank} cannot join a group of {size}")));
        }
        let deadline = Instant::now() + opts.timeout;
        let stream = connect_until(coordinator, deadline)?;
        let mut root = Conn::new(stream, opts.timeout)?;
        let ring_listener = if opts.topology == Topology::Ring {
            Some(TcpListener::bind(SocketAddr::new(root.local_ip()?, 0))?)
        } else {
            None
        };
        let port = match &ring_listener {
            Some(l) => f64::from(l.local_addr()?.port()),
            None => 0.0,
        };
        let mut bytes_sent = root.send(MessageType::Register, rank, &[size as f64, port])? as u64;
        let welcome = root.recv().map_err(|e| match e {
            CommError::Io(io) => CommError::Rendezvous(format!("no welcome from coordinator: {io}")),
            other => other,
        })?;
        expect(&welcome, MessageType::Welcome)?;

        let mut handle = SocketHandle {
            rank,
            size,
            opts,
            role: Role::Member { root },
            ring: None,
            bytes_sent: 0,
            failure: None,
        };
        if let Some(l) = ring_listener {
            if welcome.payload.len() != 5 * size {
                return Err(CommError::Protocol(format!(
                    "ring table has {} entries for {size} ranks",
                    welcome.payload.len()
                )));
            }
            let next_rank = (rank + 1) % size;
            let next = read_addr(&welcome.payload[5 * next_rank..5 * next_rank + 5])?;
            handle.ring = Some(handle.link_ring(&l, next, deadline)?);
        }
        bytes_sent += handle.bytes_sent;
        handle.bytes_sent = bytes_sent;
        Ok(handle)
    }

    fn link_ring(&mut self, listener: &TcpListener, next_addr: SocketAddr, deadline: Instant) -> Result<RingLinks, CommError> {
        let stream = connect_until(next_addr, deadline)?;
        let mut next = Conn::new(stream, self.opts.timeout)?;
        self.bytes_sent += next.send(MessageType::RingHello, self.rank, &[])? as u64;
        let stream = accept_until(listener, deadline)?;
        let mut prev = Conn::new(stream, self.opts.timeout)?;
        let hello = prev.recv()?;
        expect(&hello, MessageType::RingHello)?;
        let expected = (self.rank + self.size - 1) % self.size;
        if hello.rank as usize != expected {
            return Err(CommError::Rendezvous(format!(
                "ring predecessor of rank {} should be {expected}, got {}",
                self.rank, hello.rank
            )));
        }
        Ok(RingLinks { next, prev })
    }

    pub fn topology(&self) -> Topology {
        self.opts.topology
    }

    fn check_alive(&self) -> Result<(), CommError> {
        match &self.failure {
            Some(reason) => Err(CommError::Aborted(reason.clone())),
            None => Ok(()),
        }
    }

    /// Records the failure and closes every socket so peers see EOF.
    fn fail(&mut self, op: &'static str, err: CommError) -> CommError {
        let err = match err {
            CommError::Io(e) => match e.kind() {
                io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => CommError::Timeout {
                    rank: self.rank,
                    op,
                    timeout: self.opts.timeout,
                },
                io::ErrorKind::UnexpectedEof
                | io::ErrorKind::ConnectionReset
                | io::ErrorKind::ConnectionAborted
                | io::ErrorKind::BrokenPipe => CommError::PeerLeft { rank: self.rank, op },
                _ => CommError::Io(e),
            },
            other => other,
        };
        self.failure = Some(err.to_string());
        let shutdown = |c: &Conn| {
            let _ = c.writer.get_ref().shutdown(std::net::Shutdown::Both);
        };
        match &self.role {
            Role::Root { members } => members.iter().for_each(shutdown),
            Role::Member { root } => shutdown(root),
        }
        if let Some(r) = &self.ring {
            shutdown(&r.next);
            shutdown(&r.prev);
        }
        err
    }

    fn guarded<T>(&mut self, op: &'static str, f: impl FnOnce(&mut Self) -> Result<T, CommError>) -> Result<T, CommError> {
        self.check_alive()?;
        f(self).map_err(|e| self.fail(op, e))
    }

    fn star_allreduce(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError> {
        let rank = self.rank;
        match &mut self.role {
            Role::Root { members } => {
                let mut acc = vector.to_vec();
                let mut mismatch = None;
                for (i, conn) in members.iter_mut().enumerate() {
                    let frame = conn.recv()?;
                    expect(&frame, MessageType::Contribute)?;
                    if frame.payload.len() != acc.len() {
                        mismatch.get_or_insert((i + 1, frame.payload.len()));
                        continue;
                    }
                    if mismatch.is_none() {
                        for (a, x) in acc.iter_mut().zip(&frame.payload) {
                            *a += x;
                        }
                    }
                }
                let mut sent = 0;
                if let Some((peer, got)) = mismatch {
                    let info = [peer as f64, acc.len() as f64, got as f64];
                    for conn in members.iter_mut() {
                        sent += conn.send(MessageType::Abort, rank, &info)?;
                    }
                    self.bytes_sent += sent as u64;
                    return Err(CommError::LengthMismatch {
                        rank,
                        op: "allreduce_sum",
                        peer,
                        expected: acc.len(),
                        got,
                    });
                }
                for conn in members.iter_mut() {
                    sent += conn.send(MessageType::Result, rank, &acc)?;
                }
                self.bytes_sent += sent as u64;
                Ok(acc)
            }
            Role::Member { root } => {
                let sent = root.send(MessageType::Contribute, rank, vector)?;
                self.bytes_sent += sent as u64;
                let frame = root.recv()?;
                match frame.kind {
                    MessageType::Result => Ok(frame.payload),
                    MessageType::Abort if frame.payload.len() == 3 => Err(CommError::LengthMismatch {
                        rank,
                        op: "allreduce_sum",
                        peer: frame.payload[0] as usize,
                        expected: frame.payload[1] as usize,
                        got: frame.payload[2] as usize,
                    }),
                    other => Err(CommError::Protocol(format!("expected Result, got {other:?}"))),
                }
            }
        }
    }

    /// Chain reduction along the ring. Segment `j` starts at rank 0 and gains
    /// one addend per hop, so it accumulates in rank order; rank `K−1` holds
    /// the totals and sends them once around the ring back to `K−2`.
    fn ring_allreduce(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError> {
        let (rank, size) = (self.rank, self.size);
        let links = self.ring.as_mut().expect("ring links exist for ring topology");
        let seg_len = vector.len().div_ceil(size).max(1);
        let bounds: Vec<(usize, usize)> = if vector.is_empty() {
            vec![(0, 0)]
        } else {
            (0..vector.len())
                .step_by(seg_len)
                .map(|s| (s, (s + seg_len).min(vector.len())))
                .collect()
        };
        let last = size - 1;
        let mut out = vector.to_vec();
        let mut sent = 0usize;

        let recv_segment = |conn: &mut Conn, want: usize| -> Result<Vec<f64>, CommError> {
            let f = conn.recv()?;
            expect(&f, MessageType::RingSegment)?;
            if f.payload.len() != want {
                return Err(CommError::LengthMismatch {
                    rank,
                    op: "allreduce_sum",
                    peer: f.rank as usize,
                    expected: want,
                    got: f.payload.len(),
                });
            }
            Ok(f.payload)
        };

        // Reduce pass: 0 → 1 → … → K−1.
        for &(lo, hi) in &bounds {
            if rank > 0 {
                let partial = recv_segment(&mut links.prev, hi - lo)?;
                for (o, p) in out[lo..hi].iter_mut().zip(&partial) {
                    // partial holds ranks 0..rank in order; add ours last.
                    *o = p + *o;
                }
            }
            if rank < last {
                sent += links.next.send(MessageType::RingSegment, rank, &out[lo..hi])?;
            }
        }

        // Distribution pass: K−1 → 0 → 1 → … → K−2.
        if rank == last {
            for &(lo, hi) in &bounds {
                sent += links.next.send(MessageType::RingSegment, rank, &out[lo..hi])?;
            }
        } else {
            for &(lo, hi) in &bounds {
                let total = recv_segment(&mut links.prev, hi - lo)?;
                out[lo..hi].copy_from_slice(&total);
                if (rank + 1) % size != last {
                    sent += links.next.send(MessageType::RingSegment, rank, &out[lo..hi])?;
                }
            }
        }
        self.bytes_sent += sent as u64;
        Ok(out)
    }

    fn star_broadcast(&mut self, vector: &[f64], root_rank: usize) -> Result<Vec<f64>, CommError> {
        let rank = self.rank;
        match &mut self.role {
            Role::Root { members } => {
                let data = if root_rank == 0 {
                    vector.to_vec()
                } else {
                    let f = members[root_rank - 1].recv()?;
                    expect(&f, MessageType::Broadcast)?;
                    f.payload
                };
                let mut sent = 0;
                for (i, conn) in members.iter_mut().enumerate() {
                    if i + 1 != root_rank {
                        sent += conn.send(MessageType::Broadcast, rank, &data)?;
                    }
                }
                self.bytes_sent += sent as u64;
                Ok(data)
            }
            Role::Member { root } => {
                if rank == root_rank {
                    self.bytes_sent += root.send(MessageType::Broadcast, rank, vector)? as u64;
                    Ok(vector.to_vec())
                } else {
                    let f = root.recv()?;
                    expect(&f, MessageType::Broadcast)?;
                    Ok(f.payload)
                }
            }
        }
    }

    fn star_barrier(&mut self) -> Result<(), CommError> {
        let rank = self.rank;
        match &mut self.role {
            Role::Root { members } => {
                for conn in members.iter_mut() {
                    expect(&conn.recv()?, MessageType::BarrierEnter)?;
                }
                let mut sent = 0;
                for conn in members.iter_mut() {
                    sent += conn.send(MessageType::BarrierRelease, rank, &[])?;
                }
                self.bytes_sent += sent as u64;
            }
            Role::Member { root } => {
                self.bytes_sent += root.send(MessageType::BarrierEnter, rank, &[])? as u64;
                expect(&root.recv()?, MessageType::BarrierRelease)?;
            }
        }
        Ok(())
    }
}

impl SyncHandle for SocketHandle {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn allreduce_sum(&mut self, vector: &[f64]) -> Result<Vec<f64>, CommError> {
        if self.size == 1 {
            self.check_alive()?;
            return Ok(vector.to_vec());
        }
        self.guarded("allreduce_sum", |h| match h.opts.topology {
            Topology::Star => h.star_allreduce(vector),
            Topology::Ring => h.ring_allreduce(vector),
        })
    }

    fn broadcast(&mut self, vector: &[f64], root: usize) -> Result<Vec<f64>, CommError> {
        if root >= self.size {
            return Err(CommError::InvalidGroup(format!(
                "broadcast root {root} outside group of {}",
                self.size
            )));
        }
        if self.size == 1 {
            self.check_alive()?;
            return Ok(vector.to_vec());
        }
        self.guarded("broadcast", |h| h.star_broadcast(vector, root))
    }

    fn barrier(&mut self) -> Result<(), CommError> {
        if self.size == 1 {
            return self.check_alive();
        }
        self.guarded("barrier", |h| h.star_barrier())
    }

    fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }
}

/// Builds a complete socket group inside this process: rank 0 binds
/// `coordinator` (port 0 picks a free port) and ranks `1..K` join from
/// helper threads. Handles are returned in rank order.
pub fn connect_local(coordinator: &str, size: usize, opts: SocketOptions) -> Result<Vec<SocketHandle>, CommError> {
    if size == 0 {
        return Err(CommError::InvalidGroup("group size must be at least 1".into()));
    }
    let listener = TcpListener::bind(coordinator)?;
    let addr = listener.local_addr()?.to_string();
    thread::scope(|s| {
        let joins: Vec<_> = (1..size)
            .map(|rank| {
                let addr = addr.clone();
                s.spawn(move || SocketHandle::join(&addr, rank, size, opts))
            })
            .collect();
        let root = SocketHandle::coordinate_with(listener, size, opts);
        let mut handles = vec![root?];
        for j in joins {
            handles.push(j.join().map_err(|_| CommError::Rendezvous("join thread panicked".into()))??);
        }
        Ok(handles)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(topology: Topology) -> SocketOptions {
        SocketOptions {
            timeout: Duration::from_secs(10),
            topology,
        }
    }

    fn run<F, T>(size: usize, topology: Topology, f: F) -> Vec<T>
    where
        F: Fn(SocketHandle) -> T + Sync,
        T: Send,
    {
        let handles = connect_local("127.0.0.1:0", size, opts(topology)).unwrap();
        thread::scope(|s| {
            let joins: Vec<_> = handles.into_iter().map(|h| s.spawn(|| f(h))).collect();
            joins.into_iter().map(|j| j.join().unwrap()).collect()
        })
    }

    #[test]
    fn sums_on_both_topologies() {
        for topology in [Topology::Star, Topology::Ring] {
            for k in [1, 2, 3, 5] {
                let out = run(k, topology, |mut h| {
                    let r = h.rank() as f64;
                    h.allreduce_sum(&[r, 1.0, 2.0 * r, 0.5, -r, 3.0, 7.0]).unwrap()
                });
                let s: f64 = (0..k).map(|r| r as f64).sum();
                let kf = k as f64;
                let expected = vec![s, kf, 2.0 * s, 0.5 * kf, -s, 3.0 * kf, 7.0 * kf];
                assert!(out.iter().all(|v| *v == expected), "{topology:?} k={k}");
            }
        }
    }

    #[test]
    fn ring_handles_short_and_empty_vectors() {
        for len in [0usize, 1, 2, 3] {
            let out = run(4, Topology::Ring, |mut h| {
                let v = vec![h.rank() as f64 + 1.0; len];
                h.allreduce_sum(&v).unwrap()
            });
            assert!(out.iter().all(|v| *v == vec![10.0; len]));
        }
    }

    #[test]
    fn broadcast_and_barrier() {
        let out = run(3, Topology::Star, |mut h| {
            h.barrier().unwrap();
            let mine = vec![h.rank() as f64 * 10.0; 2];
            let a = h.broadcast(&mine, 0).unwrap();
            let b = h.broadcast(&mine, 2).unwrap();
            h.barrier().unwrap();
            (a, b)
        });
        for (a, b) in out {
            assert_eq!(a, vec![0.0; 2]);
            assert_eq!(b, vec![20.0; 2]);
        }
    }

    #[test]
    fn bytes_are_counted() {
        let out = run(3, Topology::Star, |mut h| {
            let before = h.bytes_sent();
            h.allreduce_sum(&[1.0; 10]).unwrap();
            h.bytes_sent() - before
        });
        let frame = (17 + 80) as u64;
        assert_eq!(out, vec![2 * frame, frame, frame]);
    }

    #[test]
    fn length_mismatch_reaches_every_member() {
        let out = run(3, Topology::Star, |mut h| {
            let v = vec![1.0; if h.rank() == 1 { 4 } else { 3 }];
            h.allreduce_sum(&v)
        });
        for r in out {
            assert!(matches!(r, Err(CommError::LengthMismatch { peer: 1, .. })), "{r:?}");
        }
    }

    #[test]
    fn unreachable_coordinator_fails_within_timeout() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let start = Instant::now();
        let o = SocketOptions {
            timeout: Duration::from_millis(300),
            topology: Topology::Star,
        };
        let r = SocketHandle::join(&format!("127.0.0.1:{port}"), 1, 2, o);
        assert!(matches!(r, Err(CommError::Rendezvous(_))));
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn dead_peer_is_detected_without_waiting_for_timeout() {
        let mut handles = connect_local("127.0.0.1:0", 2, opts(Topology::Star)).unwrap();
        let member = handles.pop().unwrap();
        let mut root = handles.pop().unwrap();
        drop(member);
        let start = Instant::now();
        assert!(matches!(root.allreduce_sum(&[1.0]), Err(CommError::PeerLeft { .. })));
        assert!(start.elapsed() < Duration::from_secs(5));
        assert!(matches!(root.barrier(), Err(CommError::Aborted(_))));
    }

    #[test]
    fn group_size_disagreement_is_rejected() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let o = SocketOptions {
            timeout: Duration::from_secs(2),
            topology: Topology::Star,
        };
        thread::scope(|s| {
            let j = s.spawn(|| SocketHandle::join(&addr, 1, 3, o));
            assert!(SocketHandle::coordinate_with(listener, 2, o).is_err());
            assert!(j.join().unwrap().is_err());
        });
    }
}
