//! TCP endpoint through which an external host program joins the run as
//! one extra core.
//!
//! Every frame is little-endian:
//!
//! ```text
//! "EPYB" | type u8 | source u16 | target u16 | tag u8 | count u32 | payload
//! ```
//!
//! The payload is `count` elements whose width follows the tag: 4 bytes for
//! int (1), real (2), bool (3) and none (4); 5 bytes (tag + word) for list
//! elements (5); 1 byte for strings (6). A scalar has count 1.
//!
//! | type          | client → device                                  | device → client            |
//! |---------------|--------------------------------------------------|----------------------------|
//! | HELLO (1)     | payload = protocol version as an int             | `source` = assigned id     |
//! | SEND (2)      | `target` = destination core, payload = value     | ack: `source` = target, count 0 |
//! | RECV_REQ (3)  | `target` = source core; tag 0 for no length, else `count` = expected length | RECV_DATA |
//! | RECV_DATA (4) |                                                  | the value received         |
//! | REDUCE (5)    | `target` = operator (0 max, 1 min, 2 sum, 3 prod), payload = value | combined value |
//! | BYE (6)       | ends the session                                 |                            |
//! | ERROR (7)     |                                                  | payload = message string   |

use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};

use thiserror::Error;

use crate::mesh::{CollectiveOp, CommOp, Envelope, MeshError, OpKind, RecvOp, Scalar, SendOp};
use crate::scalar::ReduceOp;
use crate::vm::CoreServices;
use crate::CoreId;

pub const MAGIC: [u8; 4] = *b"EPYB";
pub const PROTOCOL_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 1 + 4;

/// Longest payload accepted from a client.
const MAX_PAYLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Hello = 1,
    Send = 2,
    RecvReq = 3,
    RecvData = 4,
    Reduce = 5,
    Bye = 6,
    Error = 7,
}

impl FrameType {
    pub fn from_u8(b: u8) -> Option<FrameType> {
        Some(match b {
            1 => FrameType::Hello,
            2 => FrameType::Send,
            3 => FrameType::RecvReq,
            4 => FrameType::RecvData,
            5 => FrameType::Reduce,
            6 => FrameType::Bye,
            7 => FrameType::Error,
            _ => return None,
        })
    }
}

pub mod wire_tag {
    pub const NONE_EXPECTED: u8 = 0;
    pub const INT: u8 = 1;
    pub const REAL: u8 = 2;
    pub const BOOL: u8 = 3;
    pub const NONE: u8 = 4;
    pub const LIST: u8 = 5;
    pub const STR: u8 = 6;
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    Magic([u8; 4]),
    #[error("unknown frame type {0}")]
    FrameType(u8),
    #[error("unknown type tag {0}")]
    Tag(u8),
    #[error("payload of {0} bytes is too large")]
    TooLarge(usize),
    #[error("malformed payload: {0}")]
    Payload(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameType,
    pub source: u16,
    pub target: u16,
    pub tag: u8,
    pub count: u32,
    pub payload: Vec<u8>,
}

fn element_width(tag: u8) -> Option<usize> {
    match tag {
        wire_tag::NONE_EXPECTED => Some(0),
        wire_tag::INT | wire_tag::REAL | wire_tag::BOOL | wire_tag::NONE => Some(4),
        wire_tag::LIST => Some(5),
        wire_tag::STR => Some(1),
        _ => None,
    }
}

impl Frame {
    pub fn new(kind: FrameType, source: u16, target: u16) -> Frame {
        Frame { kind, source, target, tag: 0, count: 0, payload: Vec::new() }
    }

    /// A frame carrying `value`.
    pub fn with_value(kind: FrameType, source: u16, target: u16, value: &Envelope) -> Frame {
        let (tag, count, payload) = match value {
            Envelope::Scalar(s) => (s.tag(), 1, s.word().to_vec()),
            Envelope::List(items) => {
                let mut p = Vec::with_capacity(items.len() * 5);
                for s in items {
                    p.push(s.tag());
                    p.extend_from_slice(&s.word());
                }
                (wire_tag::LIST, items.len() as u32, p)
            }
            Envelope::Str(bytes) => (wire_tag::STR, bytes.len() as u32, bytes.clone()),
        };
        Frame { kind, source, target, tag, count, payload }
    }

    pub fn error(source: u16, target: u16, msg: &str) -> Frame {
        Frame::with_value(FrameType::Error, source, target, &Envelope::Str(msg.as_bytes().to_vec()))
    }

    /// The value carried by this frame.
    pub fn value(&self) -> Result<Envelope, WireError> {
        match self.tag {
            wire_tag::LIST => {
                let items = self
                    .payload
                    .chunks_exact(5)
                    .map(|c| Scalar::from_parts(c[0], [c[1], c[2], c[3], c[4]]).ok_or(WireError::Tag(c[0])))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Envelope::List(items))
            }
            wire_tag::STR => Ok(Envelope::Str(self.payload.clone())),
            t => {
                if self.count != 1 {
                    return Err(WireError::Payload("a scalar frame carries exactly one element"));
                }
                let w: [u8; 4] = self.payload[..4].try_into().expect("length checked at decode");
                Scalar::from_parts(t, w).map(Envelope::Scalar).ok_or(WireError::Tag(t))
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.source.to_le_bytes());
        out.extend_from_slice(&self.target.to_le_bytes());
        out.push(self.tag);
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `buf`; `Ok(None)` if more bytes are needed.
    pub fn decode(buf: &[u8]) -> Result<Option<(Frame, usize)>, WireError> {
        if buf.len() < HEADER_BYTES {
            return Ok(None);
        }
        let magic: [u8; 4] = buf[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(WireError::Magic(magic));
        }
        let kind = FrameType::from_u8(buf[4]).ok_or(WireError::FrameType(buf[4]))?;
        let source = u16::from_le_bytes([buf[5], buf[6]]);
        let target = u16::from_le_bytes([buf[7], buf[8]]);
        let tag = buf[9];
        let count = u32::from_le_bytes(buf[10..14].try_into().unwrap());
        let width = element_width(tag).ok_or(WireError::Tag(tag))?;
        // RECV_REQ uses the count as a length request, not as a payload size
        let len = if kind == FrameType::RecvReq { 0 } else { width.saturating_mul(count as usize) };
        if len > MAX_PAYLOAD {
            return Err(WireError::TooLarge(len));
        }
        if buf.len() < HEADER_BYTES + len {
            return Ok(None);
        }
        let payload = buf[HEADER_BYTES..HEADER_BYTES + len].to_vec();
        Ok(Some((Frame { kind, source, target, tag, count, payload }, HEADER_BYTES + len)))
    }

    /// Blocking read of one frame.
    pub fn read_from(r: &mut impl Read) -> Result<Frame, WireError> {
        let mut buf = vec![0u8; HEADER_BYTES];
        r.read_exact(&mut buf)?;
        let width = element_width(buf[9]).ok_or(WireError::Tag(buf[9]))?;
        let count = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
        let len = if buf[4] == FrameType::RecvReq as u8 { 0 } else { width.saturating_mul(count) };
        if len > MAX_PAYLOAD {
            return Err(WireError::TooLarge(len));
        }
        buf.resize(HEADER_BYTES + len, 0);
        r.read_exact(&mut buf[HEADER_BYTES..])?;
        Ok(Frame::decode(&buf)?.expect("whole frame read").0)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }
}

/// Outcome of one bridge step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BridgeStep {
    Progress,
    /// Waiting on the fabric.
    Blocked,
    /// Waiting on the client.
    Idle,
    Finished,
}

#[derive(Debug, Clone, Copy)]
enum Reply {
    SendAck(u16),
    Data(u16),
    Reduced,
}

struct Session {
    stream: TcpStream,
    inbuf: Vec<u8>,
    greeted: bool,
}

/// Summary of the bridge's activity.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct BridgeReport {
    pub connected: bool,
    pub frames_in: u64,
    pub frames_out: u64,
    pub refused: u64,
    pub errors: Vec<String>,
}

/// The fabric participant that stands in for the external host program.
pub(crate) struct BridgeCore {
    listener: TcpListener,
    session: Option<Session>,
    rank: usize,
    id: CoreId,
    pending: Option<(CommOp, Reply)>,
    closed: bool,
    pub(crate) report: BridgeReport,
}

impl BridgeCore {
    pub(crate) fn bind(addr: SocketAddr, rank: usize, id: CoreId) -> io::Result<BridgeCore> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(BridgeCore { listener, session: None, rank, id, pending: None, closed: false, report: BridgeReport::default() })
    }

    pub(crate) fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub(crate) fn id(&self) -> CoreId {
        self.id
    }

    pub(crate) fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub(crate) fn describe(&self, fabric: &crate::mesh::Fabric) -> Option<String> {
        self.pending.as_ref().map(|(op, _)| op.describe(fabric))
    }

    fn send(&mut self, f: &Frame) {
        let Some(s) = &mut self.session else { return };
        let res = s.stream.set_nonblocking(false).and_then(|_| f.write_to(&mut s.stream));
        let res = res.and_then(|_| s.stream.set_nonblocking(true));
        match res {
            Ok(()) => self.report.frames_out += 1,
            Err(e) => {
                self.report.errors.push(format!("write failed: {e}"));
                self.end();
            }
        }
    }

    fn end(&mut self) {
        self.session = None;
        self.closed = true;
    }

    /// Closes the session once the run is over.
    pub(crate) fn shutdown(&mut self) {
        self.end();
    }

    fn accept(&mut self) {
        loop {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    if self.session.is_none() && !self.closed {
                        if stream.set_nonblocking(true).is_ok() {
                            let _ = stream.set_nodelay(true);
                            self.session = Some(Session { stream, inbuf: Vec::new(), greeted: false });
                            self.report.connected = true;
                        }
                    } else {
                        self.report.refused += 1;
                        let mut stream = stream;
                        let _ = stream.set_nonblocking(false);
                        let _ = Frame::error(self.id, 0, "host slot already taken").write_to(&mut stream);
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return,
                Err(e) => {
                    self.report.errors.push(format!("accept failed: {e}"));
                    return;
                }
            }
        }
    }

    fn fail_request(&mut self, msg: String) {
        self.report.errors.push(msg.clone());
        self.send(&Frame::error(self.id, 0, &msg));
    }

    /// Accepts connections, reads requests and advances the current one.
    pub(crate) fn step<S: CoreServices>(&mut self, svc: &mut S) -> BridgeStep {
        self.accept();
        if let Some((op, reply)) = &mut self.pending {
            let me = self.rank;
            let reply = *reply;
            match svc.fabric(|f| op.poll(me, f)) {
                Ok(None) => return BridgeStep::Blocked,
                Ok(Some(env)) => {
                    self.pending = None;
                    let frame = match reply {
                        Reply::SendAck(to) => Frame::new(FrameType::Send, to, self.id),
                        Reply::Data(from) => Frame::with_value(FrameType::RecvData, from, self.id, &env),
                        Reply::Reduced => Frame::with_value(FrameType::Reduce, self.id, self.id, &env),
                    };
                    self.send(&frame);
                }
                Err(e) => {
                    self.pending = None;
                    self.fail_request(e.to_string());
                }
            }
            return BridgeStep::Progress;
        }
        let Some(s) = &mut self.session else {
            return if self.closed { BridgeStep::Finished } else { BridgeStep::Idle };
        };
        let mut chunk = [0u8; 64 * 1024];
        loop {
            match s.stream.read(&mut chunk) {
                Ok(0) => {
                    if s.inbuf.is_empty() {
                        self.end();
                        return BridgeStep::Finished;
                    }
                    break;
                }
                Ok(n) => s.inbuf.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.report.errors.push(format!("read failed: {e}"));
                    self.end();
                    return BridgeStep::Finished;
                }
            }
        }
        let frame = match Frame::decode(&s.inbuf) {
            Ok(None) => return BridgeStep::Idle,
            Ok(Some((f, used))) => {
                s.inbuf.drain(..used);
                f
            }
            Err(e) => {
                self.fail_request(format!("protocol error: {e}"));
                self.end();
                return BridgeStep::Finished;
            }
        };
        self.report.frames_in += 1;
        self.handle(frame, svc);
        if self.closed {
            BridgeStep::Finished
        } else {
            BridgeStep::Progress
        }
    }

    fn handle<S: CoreServices>(&mut self, frame: Frame, svc: &mut S) {
        let greeted = self.session.as_ref().is_some_and(|s| s.greeted);
        if frame.kind != FrameType::Hello && !greeted {
            self.fail_request("HELLO must come first".into());
            self.end();
            return;
        }
        let me = self.rank;
        let rank_of = |svc: &mut S, id: u16| {
            svc.fabric(|f| f.rank_of(id)).ok_or(MeshError::InvalidPeer { id: id as i64 })
        };
        let result: Result<(), String> = (|| {
            match frame.kind {
                FrameType::Hello => {
                    let version = match frame.value() {
                        Ok(Envelope::Scalar(Scalar::Int(v))) => v as u32,
                        _ => return Err("HELLO must carry the protocol version as an int".into()),
                    };
                    if version != PROTOCOL_VERSION {
                        let msg = format!("protocol version {version} not supported; expected {PROTOCOL_VERSION}");
                        self.fail_request(msg);
                        self.end();
                        return Ok(());
                    }
                    if let Some(s) = &mut self.session {
                        s.greeted = true;
                    }
                    let reply = Frame::with_value(
                        FrameType::Hello,
                        self.id,
                        self.id,
                        &Envelope::Scalar(Scalar::Int(PROTOCOL_VERSION as i32)),
                    );
                    self.send(&reply);
                }
                FrameType::Send => {
                    let env = frame.value().map_err(|e| e.to_string())?;
                    let to = rank_of(svc, frame.target).map_err(|e| e.to_string())?;
                    let op = svc.fabric(|f| SendOp::new(f, me, to, &env, OpKind::Send)).map_err(|e| e.to_string())?;
                    self.pending = Some((CommOp::Send(op), Reply::SendAck(frame.target)));
                }
                FrameType::RecvReq => {
                    let from = rank_of(svc, frame.target).map_err(|e| e.to_string())?;
                    let expect = (frame.tag != wire_tag::NONE_EXPECTED).then_some(frame.count as usize);
                    let op = svc.fabric(|f| RecvOp::new(f, me, from, expect, OpKind::Send)).map_err(|e| e.to_string())?;
                    self.pending = Some((CommOp::Recv(op), Reply::Data(frame.target)));
                }
                FrameType::Reduce => {
                    let op = u8::try_from(frame.target)
                        .ok()
                        .and_then(ReduceOp::from_u8)
                        .ok_or_else(|| format!("unknown reduction operator code {}", frame.target))?;
                    let Envelope::Scalar(v) = frame.value().map_err(|e| e.to_string())? else {
                        return Err("reduce takes a scalar".into());
                    };
                    let c = svc.fabric(|f| CollectiveOp::reduce(f, me, v, op)).map_err(|e| e.to_string())?;
                    self.pending = Some((CommOp::Collective(c), Reply::Reduced));
                }
                FrameType::Bye => self.end(),
                FrameType::RecvData | FrameType::Error => {
                    return Err(format!("unexpected {:?} frame from client", frame.kind));
                }
            }
            Ok(())
        })();
        if let Err(msg) = result {
            self.fail_request(msg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let values = [
            Envelope::Scalar(Scalar::Int(-5)),
            Envelope::Scalar(Scalar::Real(1.5)),
            Envelope::Scalar(Scalar::None),
            Envelope::List(vec![Scalar::Int(1), Scalar::Bool(true), Scalar::Real(2.5)]),
            Envelope::Str(b"hello".to_vec()),
            Envelope::List(vec![]),
        ];
        for v in values {
            let f = Frame::with_value(FrameType::Send, 16, 3, &v);
            let bytes = f.encode();
            assert_eq!(&bytes[..4], b"EPYB");
            let (back, used) = Frame::decode(&bytes).unwrap().unwrap();
            assert_eq!(used, bytes.len());
            assert_eq!(back, f);
            assert_eq!(back.value().unwrap(), v);
            assert!(Frame::decode(&bytes[..bytes.len() - 1]).unwrap().is_none() || bytes.len() == HEADER_BYTES);
        }
    }

    #[test]
    fn header_layout_is_little_endian() {
        let f = Frame::with_value(FrameType::Send, 0x0102, 0x0304, &Envelope::Scalar(Scalar::Int(0x0a0b0c0d)));
        assert_eq!(
            f.encode(),
            [b'E', b'P', b'Y', b'B', 2, 2, 1, 4, 3, 1, 1, 0, 0, 0, 0x0d, 0x0c, 0x0b, 0x0a]
        );
    }

    #[test]
    fn rejects_bad_magic_and_tags() {
        let mut b = Frame::new(FrameType::Bye, 0, 0).encode();
        b[0] = b'X';
        assert!(matches!(Frame::decode(&b), Err(WireError::Magic(_))));
        let mut b = Frame::new(FrameType::Bye, 0, 0).encode();
        b[9] = 99;
        assert!(matches!(Frame::decode(&b), Err(WireError::Tag(99))));
    }
}
