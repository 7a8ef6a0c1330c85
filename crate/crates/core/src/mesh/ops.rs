//! Blocking operations as resumable state machines. Each `poll` advances
//! as far as the postbox state allows and reports completion; the caller
//! decides whether to yield or wait between polls.

use super::envelope::{Envelope, Scalar};
use super::fabric::{tag, Delivery, Fabric, OpKind};
use super::MeshError;
use crate::scalar::ReduceOp;

fn chunks(env: &Envelope, capacity: usize, collective: bool) -> Result<Vec<(u8, Vec<u8>)>, MeshError> {
    let flag = if collective { tag::COLLECTIVE } else { 0 };
    let (head, body) = match env {
        Envelope::Scalar(s) => return Ok(vec![(s.tag() | flag, s.word().to_vec())]),
        Envelope::List(items) => {
            let mut body = Vec::with_capacity(items.len() * 5);
            for s in items {
                body.push(s.tag());
                body.extend_from_slice(&s.word());
            }
            ((tag::LIST_HEAD, items.len()), body)
        }
        Envelope::Str(bytes) => ((tag::STR_HEAD, bytes.len()), bytes.clone()),
    };
    let count = u32::try_from(head.1).map_err(|_| MeshError::TooLarge { count: head.1 })?;
    let mut out = vec![(head.0 | flag, count.to_le_bytes().to_vec())];
    out.extend(body.chunks(capacity).map(|c| (tag::DATA | flag, c.to_vec())));
    Ok(out)
}

#[derive(Debug)]
pub struct SendOp {
    to: usize,
    kind: OpKind,
    what: &'static str,
    bytes: usize,
    chunks: Vec<(u8, Vec<u8>)>,
    next: usize,
    in_flight: bool,
    stamp: Option<u64>,
}

impl SendOp {
    pub fn new(fabric: &Fabric, me: usize, to: usize, env: &Envelope, kind: OpKind) -> Result<SendOp, MeshError> {
        check_peer(fabric, me, to)?;
        let collective = matches!(kind, OpKind::Reduce | OpKind::Bcast);
        Ok(SendOp {
            to,
            kind,
            what: env.kind_name(),
            bytes: env.payload_bytes(),
            chunks: chunks(env, fabric.capacity(), collective)?,
            next: 0,
            in_flight: false,
            stamp: None,
        })
    }

    /// True once the receiver has consumed the final chunk.
    pub fn poll(&mut self, me: usize, fabric: &mut Fabric) -> Result<bool, MeshError> {
        loop {
            if self.in_flight {
                match fabric.delivery(me, self.to) {
                    Delivery::Pending => return Ok(false),
                    Delivery::Rejected => {
                        return Err(MeshError::Rejected { peer: fabric.id_of(self.to) });
                    }
                    Delivery::Consumed => {
                        self.in_flight = false;
                        self.next += 1;
                    }
                }
            }
            if self.next == self.chunks.len() {
                return Ok(true);
            }
            let stamp = match self.stamp {
                Some(s) => s,
                None => {
                    let s = fabric.begin_message(me, self.to, self.what, self.bytes, self.kind);
                    self.stamp = Some(s);
                    s
                }
            };
            let (t, payload) = &self.chunks[self.next];
            if !fabric.try_write(me, self.to, *t, payload, stamp) {
                return Ok(false);
            }
            self.in_flight = true;
        }
    }
}

#[derive(Debug)]
enum RecvState {
    Head,
    Body { list: bool, count: usize, buf: Vec<u8> },
}

#[derive(Debug)]
pub struct RecvOp {
    from: usize,
    expect: Option<usize>,
    collective: bool,
    state: RecvState,
}

impl RecvOp {
    pub fn new(fabric: &Fabric, me: usize, from: usize, expect: Option<usize>, kind: OpKind) -> Result<RecvOp, MeshError> {
        check_peer(fabric, me, from)?;
        Ok(RecvOp { from, expect, collective: matches!(kind, OpKind::Reduce | OpKind::Bcast), state: RecvState::Head })
    }

    pub fn poll(&mut self, me: usize, fabric: &mut Fabric) -> Result<Option<Envelope>, MeshError> {
        let class = if self.collective { tag::COLLECTIVE } else { 0 };
        loop {
            let accept = |t: u8| t != tag::REJECT && t & tag::COLLECTIVE == class;
            let Some((t, payload, stamp)) = fabric.try_take(me, self.from, accept) else {
                return Ok(None);
            };
            let t = t & !tag::COLLECTIVE;
            let peer = fabric.id_of(self.from);
            match &mut self.state {
                RecvState::Head => {
                    let word: [u8; 4] = payload
                        .get(..4)
                        .and_then(|w| w.try_into().ok())
                        .ok_or(MeshError::Protocol { peer, msg: "short header chunk" })?;
                    if let Some(s) = Scalar::from_parts(t, word) {
                        if let Some(n) = self.expect {
                            return Err(self.refuse(me, fabric, n, None));
                        }
                        fabric.observe(me, stamp);
                        return Ok(Some(Envelope::Scalar(s)));
                    }
                    let list = match t {
                        tag::LIST_HEAD => true,
                        tag::STR_HEAD => false,
                        _ => return Err(MeshError::Protocol { peer, msg: "data chunk without a header" }),
                    };
                    let count = u32::from_le_bytes(word) as usize;
                    if let Some(n) = self.expect {
                        if n != count {
                            return Err(self.refuse(me, fabric, n, Some(count)));
                        }
                    }
                    fabric.observe(me, stamp);
                    self.state = RecvState::Body { list, count, buf: Vec::new() };
                }
                RecvState::Body { buf, .. } => {
                    if t != tag::DATA {
                        return Err(MeshError::Protocol { peer, msg: "header chunk in the middle of a message" });
                    }
                    buf.extend_from_slice(&payload);
                }
            }
            if let RecvState::Body { list, count, buf } = &mut self.state {
                let need = if *list { *count * 5 } else { *count };
                if buf.len() >= need {
                    let buf = std::mem::take(buf);
                    let env = if *list {
                        let mut items = Vec::with_capacity(*count);
                        for c in buf.chunks_exact(5) {
                            let s = Scalar::from_parts(c[0], [c[1], c[2], c[3], c[4]])
                                .ok_or(MeshError::Protocol { peer, msg: "bad element tag" })?;
                            items.push(s);
                        }
                        Envelope::List(items)
                    } else {
                        Envelope::Str(buf)
                    };
                    self.state = RecvState::Head;
                    return Ok(Some(env));
                }
            }
        }
    }

    fn refuse(&self, me: usize, fabric: &mut Fabric, expected: usize, got: Option<usize>) -> MeshError {
        fabric.reject(me, self.from);
        MeshError::CountMismatch { peer: fabric.id_of(self.from), expected, got }
    }
}

fn check_peer(fabric: &Fabric, me: usize, peer: usize) -> Result<(), MeshError> {
    if peer >= fabric.len() {
        return Err(MeshError::InvalidPeer { id: peer as i64 });
    }
    if peer == me {
        return Err(MeshError::SelfTarget { id: fabric.id_of(me) });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Step {
    /// Receive and fold into the accumulator.
    Combine(usize),
    /// Receive and replace the accumulator.
    Take(usize),
    Send(usize),
}

#[derive(Debug)]
enum Active {
    Send(SendOp),
    Recv(RecvOp),
}

/// Reduce-to-all or broadcast over a binomial tree.
#[derive(Debug)]
pub struct CollectiveOp {
    kind: OpKind,
    reduce: Option<ReduceOp>,
    steps: Vec<Step>,
    at: usize,
    active: Option<Active>,
    acc: Envelope,
}

/// Binomial reduction of every rank's value into rank 0.
fn reduce_steps(rank: usize, n: usize, out: &mut Vec<Step>) {
    let mut mask = 1;
    while mask < n {
        if rank & mask != 0 {
            out.push(Step::Send(rank - mask));
            return;
        }
        if rank + mask < n {
            out.push(Step::Combine(rank + mask));
        }
        mask <<= 1;
    }
}

/// Binomial broadcast from `root`.
fn bcast_steps(rank: usize, root: usize, n: usize, out: &mut Vec<Step>) {
    let rel = (rank + n - root) % n;
    let abs = |r: usize| (r + root) % n;
    let mut mask = 1;
    while mask < n {
        if rel & mask != 0 {
            out.push(Step::Take(abs(rel - mask)));
            break;
        }
        mask <<= 1;
    }
    mask >>= 1;
    while mask > 0 {
        if rel + mask < n {
            out.push(Step::Send(abs(rel + mask)));
        }
        mask >>= 1;
    }
}

pub(crate) fn combine(op: ReduceOp, a: Scalar, b: Scalar) -> Result<Scalar, MeshError> {
    Ok(match (a, b) {
        (Scalar::Int(x), Scalar::Int(y)) => Scalar::Int(op.combine_int(x, y).ok_or(MeshError::Overflow)?),
        (Scalar::Int(x), Scalar::Real(y)) => Scalar::Real(op.combine_real(x as f32, y)),
        (Scalar::Real(x), Scalar::Int(y)) => Scalar::Real(op.combine_real(x, y as f32)),
        (Scalar::Real(x), Scalar::Real(y)) => Scalar::Real(op.combine_real(x, y)),
        (Scalar::Int(_) | Scalar::Real(_), other) | (other, _) => {
            return Err(MeshError::NotReducible { kind: other.type_name() })
        }
    })
}

impl CollectiveOp {
    /// All-reduce: every participant ends with the combined value.
    pub fn reduce(fabric: &Fabric, me: usize, value: Scalar, op: ReduceOp) -> Result<CollectiveOp, MeshError> {
        if !matches!(value, Scalar::Int(_) | Scalar::Real(_)) {
            return Err(MeshError::NotReducible { kind: value.type_name() });
        }
        let n = fabric.len();
        let mut steps = Vec::new();
        reduce_steps(me, n, &mut steps);
        bcast_steps(me, 0, n, &mut steps);
        Ok(CollectiveOp { kind: OpKind::Reduce, reduce: Some(op), steps, at: 0, active: None, acc: Envelope::Scalar(value) })
    }

    /// Broadcast among ranks `0..span`. An attached host program sits past
    /// the device and virtual cores and has no broadcast, so it is left out.
    pub fn bcast(fabric: &Fabric, me: usize, value: Envelope, root: usize, span: usize) -> Result<CollectiveOp, MeshError> {
        let span = span.min(fabric.len());
        if root >= span {
            return Err(MeshError::InvalidPeer { id: fabric.id_of(root.min(fabric.len() - 1)) as i64 });
        }
        let mut steps = Vec::new();
        bcast_steps(me, root, span, &mut steps);
        Ok(CollectiveOp { kind: OpKind::Bcast, reduce: None, steps, at: 0, active: None, acc: value })
    }

    pub fn poll(&mut self, me: usize, fabric: &mut Fabric) -> Result<Option<Envelope>, MeshError> {
        loop {
            if self.at == self.steps.len() {
                return Ok(Some(self.acc.clone()));
            }
            let step = self.steps[self.at];
            if self.active.is_none() {
                self.active = Some(match step {
                    Step::Send(to) => Active::Send(SendOp::new(fabric, me, to, &self.acc, self.kind)?),
                    Step::Combine(from) | Step::Take(from) => Active::Recv(RecvOp::new(fabric, me, from, None, self.kind)?),
                });
            }
            let done = match self.active.as_mut().unwrap() {
                Active::Send(s) => s.poll(me, fabric)?.then_some(None),
                Active::Recv(r) => r.poll(me, fabric)?.map(Some),
            };
            let Some(received) = done else { return Ok(None) };
            if let Some(env) = received {
                match step {
                    Step::Combine(_) => {
                        let (Envelope::Scalar(a), Envelope::Scalar(b)) = (&self.acc, &env) else {
                            return Err(MeshError::NotReducible { kind: env.kind_name() });
                        };
                        self.acc = Envelope::Scalar(combine(self.reduce.expect("reduce op"), *a, *b)?);
                    }
                    _ => self.acc = env,
                }
            }
            self.active = None;
            self.at += 1;
        }
    }

    fn describe(&self, fabric: &Fabric) -> String {
        let what = self.kind.name();
        match self.steps.get(self.at) {
            Some(Step::Send(to)) => format!("{what}: sending to core {}", fabric.id_of(*to)),
            Some(Step::Combine(from)) | Some(Step::Take(from)) => {
                format!("{what}: waiting for core {}", fabric.id_of(*from))
            }
            None => format!("{what}: complete"),
        }
    }
}

/// A communication call in progress on one core.
#[derive(Debug)]
pub enum CommOp {
    Send(SendOp),
    Recv(RecvOp),
    SendRecv { send: SendOp, sent: bool, recv: RecvOp, got: Option<Envelope> },
    Collective(CollectiveOp),
}

impl CommOp {
    /// Some(result) once complete; a plain send completes with `None`.
    pub fn poll(&mut self, me: usize, fabric: &mut Fabric) -> Result<Option<Envelope>, MeshError> {
        match self {
            CommOp::Send(s) => Ok(s.poll(me, fabric)?.then_some(Envelope::Scalar(Scalar::None))),
            CommOp::Recv(r) => r.poll(me, fabric),
            CommOp::SendRecv { send, sent, recv, got } => {
                // both directions advance together so neither side waits on the other
                if !*sent {
                    *sent = send.poll(me, fabric)?;
                }
                if got.is_none() {
                    *got = recv.poll(me, fabric)?;
                }
                Ok(if *sent { got.take() } else { None })
            }
            CommOp::Collective(c) => c.poll(me, fabric),
        }
    }

    /// What the op is waiting for, for deadlock reports.
    pub fn describe(&self, fabric: &Fabric) -> String {
        match self {
            CommOp::Send(s) => format!("send to core {}", fabric.id_of(s.to)),
            CommOp::Recv(r) => format!("recv from core {}", fabric.id_of(r.from)),
            CommOp::SendRecv { send, sent, recv, .. } => {
                if *sent {
                    format!("sendrecv: waiting for core {}", fabric.id_of(recv.from))
                } else {
                    format!("sendrecv with core {}", fabric.id_of(send.to))
                }
            }
            CommOp::Collective(c) => c.describe(fabric),
        }
    }

    /// Peer a point-to-point op is blocked on.
    pub fn peer(&self) -> Option<usize> {
        match self {
            CommOp::Send(s) => Some(s.to),
            CommOp::Recv(r) => Some(r.from),
            CommOp::SendRecv { send, .. } => Some(send.to),
            CommOp::Collective(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polls every op round-robin until all finish; panics on a stall.
    pub(crate) fn drive(fabric: &mut Fabric, ops: &mut [(usize, CommOp)]) -> Vec<Option<Envelope>> {
        let mut out: Vec<Option<Option<Envelope>>> = vec![None; ops.len()];
        loop {
            let before = fabric.epoch();
            for (i, (me, op)) in ops.iter_mut().enumerate() {
                if out[i].is_none() {
                    if let Some(r) = op.poll(*me, fabric).unwrap() {
                        out[i] = Some(Some(r));
                    }
                }
            }
            if out.iter().all(Option::is_some) {
                return out.into_iter().map(|o| o.unwrap()).collect();
            }
            assert_ne!(fabric.epoch(), before, "no progress");
        }
    }

    fn ids(n: usize) -> Vec<u16> {
        (0..n as u16).collect()
    }

    #[test]
    fn scalar_send_recv() {
        let mut f = Fabric::new(ids(2)).unwrap();
        let s = SendOp::new(&f, 0, 1, &Envelope::Scalar(Scalar::Int(20)), OpKind::Send).unwrap();
        let r = RecvOp::new(&f, 1, 0, None, OpKind::Send).unwrap();
        let out = drive(&mut f, &mut [(0, CommOp::Send(s)), (1, CommOp::Recv(r))]);
        assert_eq!(out[1], Some(Envelope::Scalar(Scalar::Int(20))));
        assert_eq!(f.total_messages(), 1);
    }

    #[test]
    fn long_list_is_chunked() {
        let mut f = Fabric::new(ids(16)).unwrap();
        let list: Vec<Scalar> = (0..5000).map(Scalar::Int).collect();
        let env = Envelope::List(list.clone());
        let s = SendOp::new(&f, 3, 0, &env, OpKind::Send).unwrap();
        let r = RecvOp::new(&f, 0, 3, Some(5000), OpKind::Send).unwrap();
        let out = drive(&mut f, &mut [(3, CommOp::Send(s)), (0, CommOp::Recv(r))]);
        assert_eq!(out[1], Some(env));
    }

    #[test]
    fn count_mismatch_fails_both_ends() {
        let mut f = Fabric::new(ids(2)).unwrap();
        let env = Envelope::List(vec![Scalar::Int(1), Scalar::Int(2), Scalar::Int(3)]);
        let mut s = SendOp::new(&f, 0, 1, &env, OpKind::Send).unwrap();
        let mut r = RecvOp::new(&f, 1, 0, Some(4), OpKind::Send).unwrap();
        assert!(!s.poll(0, &mut f).unwrap());
        assert!(matches!(r.poll(1, &mut f), Err(MeshError::CountMismatch { expected: 4, got: Some(3), .. })));
        assert!(matches!(s.poll(0, &mut f), Err(MeshError::Rejected { .. })));
    }

    #[test]
    fn self_and_invalid_targets() {
        let f = Fabric::new(ids(2)).unwrap();
        let env = Envelope::Scalar(Scalar::Int(1));
        assert!(matches!(SendOp::new(&f, 0, 0, &env, OpKind::Send), Err(MeshError::SelfTarget { .. })));
        assert!(matches!(SendOp::new(&f, 0, 5, &env, OpKind::Send), Err(MeshError::InvalidPeer { .. })));
    }

    #[test]
    fn p2p_does_not_satisfy_collective_receive() {
        let mut f = Fabric::new(ids(2)).unwrap();
        let mut s = SendOp::new(&f, 0, 1, &Envelope::Scalar(Scalar::Int(1)), OpKind::Send).unwrap();
        s.poll(0, &mut f).unwrap();
        let mut c = CollectiveOp::bcast(&f, 1, Envelope::Scalar(Scalar::None), 0, 2).unwrap();
        assert_eq!(c.poll(1, &mut f).unwrap(), None);
    }

    #[test]
    fn reduce_and_bcast_small() {
        for n in 1..=9 {
            let mut f = Fabric::new(ids(n)).unwrap();
            let mut ops: Vec<(usize, CommOp)> = (0..n)
                .map(|r| (r, CommOp::Collective(CollectiveOp::reduce(&f, r, Scalar::Int(r as i32 * 3 + 1), ReduceOp::Max).unwrap())))
                .collect();
            let out = drive(&mut f, &mut ops);
            for o in out {
                assert_eq!(o, Some(Envelope::Scalar(Scalar::Int((n as i32 - 1) * 3 + 1))));
            }
            let root = n - 1;
            let mut ops: Vec<(usize, CommOp)> = (0..n)
                .map(|r| {
                    let v = if r == root { Envelope::Str(b"hi".to_vec()) } else { Envelope::Scalar(Scalar::None) };
                    (r, CommOp::Collective(CollectiveOp::bcast(&f, r, v, root, n).unwrap()))
                })
                .collect();
            for o in drive(&mut f, &mut ops) {
                assert_eq!(o, Some(Envelope::Str(b"hi".to_vec())));
            }
        }
    }
}
