//! Synchronous data-parallel gradient exchange over TCP.
//!
//! Topology is a hub: rank 0 listens on the coordinator address, every other
//! rank connects to it. Joining blocks until all `K` workers are present,
//! verifies that everyone built the same model (parameter-manifest digests
//! must agree), and ends with rank 0 broadcasting its initial parameters so
//! all workers start identical.
//!
//! After that, training proceeds in lock-step generations: every worker
//! computes local gradients, calls [`Collective::allreduce_mean`], and
//! applies the identical averaged gradient. The hub sums contributions in
//! rank order, so the reduction is deterministic. Every `verify_every`
//! generations the exchanged digest switches from the (constant) manifest
//! digest to a digest of the parameter *values*, catching numerical
//! divergence between workers.
//!
//! The group is fail-stop: a digest mismatch, a generation skew, a dropped
//! connection, or an explicit abort takes the whole group down — a
//! synchronous optimizer cannot tolerate silent membership change.
//!
//! Wire format: `[4-byte LE length][1-byte type][8-byte LE generation]
//! [payload]`, where the length counts everything after the length field.
//! `JOIN` carries `[rank][manifest digest]`, `PARAMS` carries a parameter
//! blob (the checkpoint encoding), `GRADS` carries `[digest][flat LE
//! scalars]`, and `ABORT` carries a UTF-8 reason.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// The gradient-exchange seam the trainer drives. A `None` collective (or
/// `world_size() == 1`) means purely local training.
pub trait Collective<F: Scalar> {
    fn world_size(&self) -> usize;
    fn rank(&self) -> usize;
    /// Whether the next [`Collective::allreduce_mean`] call expects a
    /// parameter-value digest (periodic divergence check).
    fn verification_due(&self) -> bool;
    /// Replaces `grads` with the elementwise mean over all workers' calls
    /// this generation. `param_digest` must be `Some` when
    /// [`Collective::verification_due`]; digests are compared across the
    /// group and any disagreement aborts everyone.
    fn allreduce_mean(&mut self, grads: &mut [F], param_digest: Option<u64>) -> Result<()>;
    /// Best-effort notification that this worker is failing; peers observe
    /// an abort or a closed connection either way.
    fn abort(&mut self, reason: &str);
}

const MSG_JOIN: u8 = 1;
const MSG_PARAMS: u8 = 2;
const MSG_GRADS: u8 = 3;
const MSG_ABORT: u8 = 4;

/// Upper bound on a single message (guards against garbage length prefixes).
const MAX_MESSAGE: u32 = 1 << 30;

/// How a worker finds and identifies itself to its group.
#[derive(Debug, Clone)]
pub struct GroupConfig {
    /// Hub address; rank 0 binds it, everyone else connects to it.
    pub coordinator: String,
    /// Total workers `K`.
    pub world_size: usize,
    /// This worker's rank in `0..K`.
    pub rank: usize,
    /// How long to wait for the full group to assemble.
    pub join_timeout: Duration,
    /// How long to wait inside one gradient exchange before declaring the
    /// group dead.
    pub reduce_timeout: Duration,
    /// Exchange parameter-value digests every this many generations.
    pub verify_every: u64,
}

impl GroupConfig {
    pub fn new(coordinator: &str, world_size: usize, rank: usize) -> Self {
        Self {
            coordinator: coordinator.to_string(),
            world_size,
            rank,
            join_timeout: Duration::from_secs(60),
            reduce_timeout: Duration::from_secs(300),
            verify_every: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.world_size == 0 {
            return Err(Error::Dist("world size must be at least 1".into()));
        }
        if self.rank >= self.world_size {
            return Err(Error::Dist(format!(
                "rank {} is out of range for a group of {}",
                self.rank, self.world_size
            )));
        }
        if self.verify_every == 0 {
            return Err(Error::Dist("verification cadence must be positive".into()));
        }
        Ok(())
    }
}

fn write_msg(stream: &mut TcpStream, ty: u8, generation: u64, payload: &[u8]) -> Result<()> {
    let length = 1 + 8 + payload.len();
    if length as u64 > MAX_MESSAGE as u64 {
        return Err(Error::Dist(format!("message of {length} bytes exceeds the wire limit")));
    }
    let mut head = Vec::with_capacity(13);
    head.extend_from_slice(&(length as u32).to_le_bytes());
    head.push(ty);
    head.extend_from_slice(&generation.to_le_bytes());
    stream
        .write_all(&head)
        .and_then(|_| stream.write_all(payload))
        .map_err(|e| Error::Dist(format!("send failed: {e}")))
}

fn read_msg(stream: &mut TcpStream) -> Result<(u8, u64, Vec<u8>)> {
    let mut head = [0u8; 4];
    stream
        .read_exact(&mut head)
        .map_err(|e| Error::Dist(format!("peer went away: {e}")))?;
    let length = u32::from_le_bytes(head);
    if length < 9 || length > MAX_MESSAGE {
        return Err(Error::Dist(format!("nonsensical message length {length}")));
    }
    let mut body = vec![0u8; length as usize];
    stream
        .read_exact(&mut body)
        .map_err(|e| Error::Dist(format!("peer went away mid-message: {e}")))?;
    let generation = u64::from_le_bytes(body[1..9].try_into().unwrap());
    Ok((body[0], generation, body.split_off(9)))
}

/// Interprets an incoming message, surfacing aborts as errors.
fn expect_msg(stream: &mut TcpStream, want: u8, what: &str) -> Result<(u64, Vec<u8>)> {
    let (ty, generation, payload) = read_msg(stream)?;
    if ty == MSG_ABORT {
        return Err(Error::Dist(format!(
            "group aborted: {}",
            String::from_utf8_lossy(&payload)
        )));
    }
    if ty != want {
        return Err(Error::Dist(format!("expected {what}, got message type {ty}")));
    }
    Ok((generation, payload))
}

enum Role {
    /// Rank 0: streams to peers, indexed in rank order (ranks `1..K`).
    Hub(Vec<TcpStream>),
    /// Other ranks: the single stream to the hub.
    Spoke(TcpStream),
    /// `K == 1`: no wire at all.
    Solo,
}

/// A joined worker group; implements [`Collective`] over the hub topology.
pub struct WorkerGroup<F: Scalar> {
    cfg: GroupConfig,
    role: Role,
    manifest_digest: u64,
    /// Completed reduction rounds; the next round is `generation + 1`.
    generation: u64,
    _precision: std::marker::PhantomData<F>,
}

impl<F: Scalar> WorkerGroup<F> {
    /// Assembles the group and aligns starting parameters.
    ///
    /// Every worker passes its own encoded parameters
    /// ([`crate::tensor::params::encode_params`]); the returned blob is the
    /// group's agreed starting point (rank 0's parameters). Manifest digests
    /// are computed from the blob and must agree across the group — a
    /// mismatch means the workers did not build the same model.
    pub fn join(cfg: GroupConfig, params_blob: Vec<u8>) -> Result<(Self, Vec<u8>)> {
        cfg.validate()?;
        let manifest_digest =
            crate::tensor::params::layout_digest(&crate::tensor::params::manifest_entries(&params_blob)?);
        if cfg.world_size == 1 {
            let group = Self {
                cfg,
                role: Role::Solo,
                manifest_digest,
                generation: 0,
                _precision: Default::default(),
            };
            return Ok((group, params_blob));
        }
        let deadline = Instant::now() + cfg.join_timeout;
        if cfg.rank == 0 {
            let peers = Self::assemble(&cfg, manifest_digest, &params_blob, deadline)?;
            let group = Self {
                cfg,
                role: Role::Hub(peers),
                manifest_digest,
                generation: 0,
                _precision: Default::default(),
            };
            Ok((group, params_blob))
        } else {
            let (stream, blob) = Self::enlist(&cfg, manifest_digest, deadline)?;
            let group = Self {
                cfg,
                role: Role::Spoke(stream),
                manifest_digest,
                generation: 0,
                _precision: Default::default(),
            };
            Ok((group, blob))
        }
    }

    /// Hub side of the join: accept `K−1` workers, verify their manifests
    /// and ranks, then broadcast the initial parameters.
    fn assemble(
        cfg: &GroupConfig,
        manifest_digest: u64,
        params_blob: &[u8],
        deadline: Instant,
    ) -> Result<Vec<TcpStream>> {
        let listener = TcpListener::bind(&cfg.coordinator).map_err(|e| {
            Error::Dist(format!("cannot bind coordinator address {}: {e}", cfg.coordinator))
        })?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Dist(format!("listener setup failed: {e}")))?;

        let mut peers: Vec<Option<TcpStream>> = (1..cfg.world_size).map(|_| None).collect();
        let mut joined = 0usize;
        while joined + 1 < cfg.world_size {
            if Instant::now() >= deadline {
                let mut all: Vec<TcpStream> = peers.into_iter().flatten().collect();
                for peer in &mut all {
                    let _ = write_msg(peer, MSG_ABORT, 0, b"join timed out");
                }
                return Err(Error::Dist(format!(
                    "join timed out after {:?}: {} of {} workers present",
                    cfg.join_timeout,
                    joined + 1,
                    cfg.world_size
                )));
            }
            let mut stream = match listener.accept() {
                Ok((stream, _)) => stream,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                    continue;
                }
                Err(e) => return Err(Error::Dist(format!("accept failed: {e}"))),
            };
            stream
                .set_nonblocking(false)
                .and_then(|_| stream.set_nodelay(true))
                .and_then(|_| stream.set_read_timeout(Some(cfg.join_timeout)))
                .map_err(|e| Error::Dist(format!("connection setup failed: {e}")))?;

            let (_, payload) = expect_msg(&mut stream, MSG_JOIN, "a join request")?;
            if payload.len() != 16 {
                return Err(Error::Dist(format!("malformed join of {} bytes", payload.len())));
            }
            let rank = u64::from_le_bytes(payload[..8].try_into().unwrap()) as usize;
            let digest = u64::from_le_bytes(payload[8..16].try_into().unwrap());
            if rank == 0 || rank >= cfg.world_size {
                let _ = write_msg(&mut stream, MSG_ABORT, 0, b"rank out of range");
                return Err(Error::Dist(format!(
                    "worker announced rank {rank}, valid ranks are 1..{}",
                    cfg.world_size
                )));
            }
            if peers[rank - 1].is_some() {
                let _ = write_msg(&mut stream, MSG_ABORT, 0, b"duplicate rank");
                return Err(Error::Dist(format!("two workers claim rank {rank}")));
            }
            if digest != manifest_digest {
                let _ = write_msg(&mut stream, MSG_ABORT, 0, b"parameter manifest mismatch");
                return Err(Error::Dist(format!(
                    "rank {rank}'s parameter manifest differs from the coordinator's — the workers did not build the same model"
                )));
            }
            peers[rank - 1] = Some(stream);
            joined += 1;
        }

        let mut peers: Vec<TcpStream> = peers.into_iter().map(Option::unwrap).collect();
        for peer in &mut peers {
            peer.set_read_timeout(Some(cfg.reduce_timeout))
                .map_err(|e| Error::Dist(format!("connection setup failed: {e}")))?;
            write_msg(peer, MSG_PARAMS, 0, params_blob)?;
        }
        Ok(peers)
    }

    /// Worker side of the join: connect (retrying while the hub comes up),
    /// announce rank and manifest, and receive the starting parameters.
    fn enlist(
        cfg: &GroupConfig,
        manifest_digest: u64,
        deadline: Instant,
    ) -> Result<(TcpStream, Vec<u8>)> {
        let mut stream = loop {
            match TcpStream::connect(&cfg.coordinator) {
                Ok(stream) => break stream,
                Err(e) => {
                    if Instant::now() >= deadline {
                        return Err(Error::Dist(format!(
                            "cannot reach coordinator {} within {:?}: {e}",
                            cfg.coordinator, cfg.join_timeout
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
            }
        };
        stream
            .set_nodelay(true)
            .and_then(|_| stream.set_read_timeout(Some(cfg.join_timeout)))
            .map_err(|e| Error::Dist(format!("connection setup failed: {e}")))?;

        let mut payload = Vec::with_capacity(16);
        payload.extend_from_slice(&(cfg.rank as u64).to_le_bytes());
        payload.extend_from_slice(&manifest_digest.to_le_bytes());
        write_msg(&mut stream, MSG_JOIN, 0, &payload)?;

        let (_, blob) = expect_msg(&mut stream, MSG_PARAMS, "the initial parameters")?;
        stream
            .set_read_timeout(Some(cfg.reduce_timeout))
            .map_err(|e| Error::Dist(format!("connection setup failed: {e}")))?;
        Ok((stream, blob))
    }

    /// The digest attached to this generation's messages: normally the
    /// manifest digest; the parameter-value digest on verification rounds.
    fn round_digest(&self, generation: u64, param_digest: Option<u64>) -> Result<u64> {
        if generation % self.cfg.verify_every == 0 {
            param_digest.ok_or_else(|| {
                Error::Dist(format!(
                    "generation {generation} is a verification round but no parameter digest was supplied"
                ))
            })
        } else {
            Ok(self.manifest_digest)
        }
    }

    fn abort_all(&mut self, reason: &str) {
        let payload = reason.as_bytes();
        match &mut self.role {
            Role::Hub(peers) => {
                for peer in peers {
                    let _ = write_msg(peer, MSG_ABORT, self.generation, payload);
                }
            }
            Role::Spoke(stream) => {
                let _ = write_msg(stream, MSG_ABORT, self.generation, payload);
            }
            Role::Solo => {}
        }
    }
}

fn encode_grads<F: Scalar>(digest: u64, grads: &[F]) -> Vec<u8> {
    let mut payload = Vec::with_capacity(8 + grads.len() * F::DTYPE.byte_width());
    payload.extend_from_slice(&digest.to_le_bytes());
    for &g in grads {
        g.write_le(&mut payload);
    }
    payload
}

fn decode_grads<F: Scalar>(payload: &[u8], expect: usize) -> Result<(u64, Vec<F>)> {
    let width = F::DTYPE.byte_width();
    if payload.len() != 8 + expect * width {
        return Err(Error::Dist(format!(
            "gradient payload of {} bytes does not match {} scalars",
            payload.len(),
            expect
        )));
    }
    let digest = u64::from_le_bytes(payload[..8].try_into().unwrap());
    Ok((digest, payload[8..].chunks(width).map(F::read_le).collect()))
}

impl<F: Scalar> Collective<F> for WorkerGroup<F> {
    fn world_size(&self) -> usize {
        self.cfg.world_size
    }

    fn rank(&self) -> usize {
        self.cfg.rank
    }

    fn verification_due(&self) -> bool {
        !matches!(self.role, Role::Solo) && (self.generation + 1) % self.cfg.verify_every == 0
    }

    fn allreduce_mean(&mut self, grads: &mut [F], param_digest: Option<u64>) -> Result<()> {
        let generation = self.generation + 1;
        if matches!(self.role, Role::Solo) {
            self.generation = generation;
            return Ok(());
        }
        let digest = self.round_digest(generation, param_digest)?;

        let outcome = match &mut self.role {
            Role::Hub(peers) => {
                // Sum in rank order — rank 0's own gradient first, then each
                // peer's — so the reduction is deterministic.
                let scale = F::from_f64(1.0 / self.cfg.world_size as f64);
                let mut failure = None;
                for (i, peer) in peers.iter_mut().enumerate() {
                    let rank = i + 1;
                    match expect_msg(peer, MSG_GRADS, "gradients") {
                        Ok((gen, payload)) => {
                            if gen != generation {
                                failure = Some(format!(
                                    "generation skew: rank {rank} is at {gen}, the group at {generation}"
                                ));
                                break;
                            }
                            match decode_grads::<F>(&payload, grads.len()) {
                                Ok((peer_digest, peer_grads)) => {
                                    if peer_digest != digest {
                                        failure = Some(format!(
                                            "digest mismatch at generation {generation}: rank {rank} diverged from rank 0"
                                        ));
                                        break;
                                    }
                                    for (acc, g) in grads.iter_mut().zip(&peer_grads) {
                                        *acc = *acc + *g;
                                    }
                                }
                                Err(e) => {
                                    failure = Some(format!("rank {rank}: {e}"));
                                    break;
                                }
                            }
                        }
                        Err(e) => {
                            failure = Some(format!("rank {rank}: {e}"));
                            break;
                        }
                    }
                }
                match failure {
                    Some(reason) => Err(reason),
                    None => {
                        for g in grads.iter_mut() {
                            *g = *g * scale;
                        }
                        let payload = encode_grads(digest, grads);
                        let mut send_failure = None;
                        for (i, peer) in peers.iter_mut().enumerate() {
                            if let Err(e) = write_msg(peer, MSG_GRADS, generation, &payload) {
                                send_failure = Some(format!("rank {}: {e}", i + 1));
                                break;
                            }
                        }
                        match send_failure {
                            Some(reason) => Err(reason),
                            None => Ok(()),
                        }
                    }
                }
            }
            Role::Spoke(stream) => {
                let payload = encode_grads(digest, grads);
                let result = write_msg(stream, MSG_GRADS, generation, &payload)
                    .and_then(|_| expect_msg(stream, MSG_GRADS, "averaged gradients"));
                match result {
                    Ok((gen, payload)) => {
                        if gen != generation {
                            Err(format!("hub answered generation {gen}, expected {generation}"))
                        } else {
                            match decode_grads::<F>(&payload, grads.len()) {
                                Ok((_, mean)) => {
                                    grads.copy_from_slice(&mean);
                                    Ok(())
                                }
                                Err(e) => Err(e.to_string()),
                            }
                        }
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            Role::Solo => unreachable!("solo handled above"),
        };

        match outcome {
            Ok(()) => {
                self.generation = generation;
                Ok(())
            }
            Err(reason) => {
                self.abort_all(&reason);
                Err(Error::Dist(reason))
            }
        }
    }

    fn abort(&mut self, reason: &str) {
        self.abort_all(reason);
    }
}
