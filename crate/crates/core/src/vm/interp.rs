use std::sync::Arc;

use serde::Serialize;

use super::error::VmError;
use super::heap::Heap;
use super::memory::{frame_bytes, Location, MemoryMap, Placement, SHARED_ACCESS_WEIGHT};
use super::ops::{display, eval_binary, eval_unary, truthy};
use super::program::{Args, ConstValue, Inst, Program, Var};
use super::services::{CoreServices, MonitorCommand, MonitorReply};
use super::value::Value;
use crate::bytecode::isa::BinaryOp;
use crate::device::shared::SharedRegion;
use crate::intrinsic::Intrinsic;
use crate::mesh::{CollectiveOp, CommOp, Envelope, MeshError, OpKind, RecvOp, Scalar, SendOp};
use crate::scalar::{MathFn, ReduceOp};
use crate::{CoreId, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreKind {
    /// A simulated coprocessor core with a 32KB memory map.
    Device,
    /// An interpreter hosted on the CPU side.
    Virtual,
}

/// Everything an interpreter needs to know about its place in the machine.
#[derive(Debug, Clone)]
pub struct CoreSetup {
    /// Position in the fabric.
    pub rank: usize,
    pub id: CoreId,
    pub kind: CoreKind,
    /// Value of `numcores()`.
    pub num_cores: usize,
    pub seed: u64,
    /// Send string concatenation and math to the monitor.
    pub offload: bool,
    pub placement: Placement,
    pub map: MemoryMap,
}

/// Outcome of one scheduling slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Used the whole quantum.
    Ran,
    /// Waiting on communication.
    Blocked,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "state", content = "detail", rename_all = "lowercase")]
pub enum CoreStatus {
    Running,
    Blocked,
    Finished,
    Failed(String),
}

/// Execution counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CoreStats {
    pub instructions: u64,
    pub local_accesses: u64,
    pub shared_accesses: u64,
}

impl CoreStats {
    /// Accesses weighted by memory speed; a shared access costs ten local ones.
    pub fn access_cost(&self) -> u64 {
        self.local_accesses + SHARED_ACCESS_WEIGHT * self.shared_accesses
    }
}

/// Bytes in use per region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegionUsage {
    pub globals: usize,
    pub code: usize,
    pub comms: usize,
    pub stack: usize,
    pub heap: usize,
}

impl RegionUsage {
    pub fn total(&self) -> usize {
        self.globals + self.code + self.comms + self.stack + self.heap
    }
}

#[derive(Debug)]
struct Frame {
    ret: u32,
    /// Caller's local base.
    base: usize,
    /// Caller-relative destination of the return value.
    dst: Var,
    bytes: usize,
}

#[derive(Debug)]
struct Pending {
    op: CommOp,
    dst: Var,
}

enum Flow {
    Next,
    Stop,
    Blocked,
}

const LCG_MUL: u64 = 6364136223846793005;
const LCG_INC: u64 = 1442695040888963407;

/// splitmix64 finaliser. Adjacent core seeds would otherwise give visibly
/// correlated first draws from the LCG.
fn scramble(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One core's interpreter.
#[derive(Debug)]
pub struct Interpreter {
    prog: Arc<Program>,
    setup: CoreSetup,
    globals: Vec<Value>,
    stack: Vec<Value>,
    base: usize,
    frames: Vec<Frame>,
    stack_used: usize,
    stack_peak: usize,
    pc: u32,
    heap: Heap,
    literals: Vec<Value>,
    pending: Option<Pending>,
    rng: u64,
    status: CoreStatus,
    stats: CoreStats,
    /// Access counters indexed by `Location as usize`.
    acc: [u64; 2],
    code_loc: usize,
    data_loc: usize,
    gc: usize,
}

fn loc(l: Location) -> usize {
    match l {
        Location::Local => 0,
        Location::Shared => 1,
    }
}

impl Interpreter {
    /// Creates a core positioned at the program entry. String literals are
    /// allocated in the heap up front.
    pub fn new(prog: Arc<Program>, setup: CoreSetup, shared: Arc<SharedRegion>) -> Result<Interpreter, VmError> {
        let virt = setup.kind == CoreKind::Virtual;
        let data_shared = setup.placement.data_shared && !virt;
        let mut heap = Heap::with_overflow(setup.map.heap, shared, setup.rank, data_shared);
        let literals = prog
            .literals
            .iter()
            .map(|l| heap.alloc_str(l.clone()).map(Value::Str))
            .collect::<Result<Vec<_>, _>>()?;
        let gc = prog.global_count as usize;
        Ok(Interpreter {
            globals: vec![Value::None; gc],
            stack: Vec::new(),
            base: 0,
            frames: Vec::new(),
            stack_used: 0,
            stack_peak: 0,
            pc: prog.entry,
            heap,
            literals,
            pending: None,
            rng: scramble(setup.seed.wrapping_add(setup.id as u64)),
            status: CoreStatus::Running,
            stats: CoreStats::default(),
            acc: [0; 2],
            code_loc: if virt { 0 } else { loc(setup.placement.code()) },
            data_loc: if virt { 0 } else { loc(setup.placement.data()) },
            gc,
            prog,
            setup,
        })
    }

    pub fn setup(&self) -> &CoreSetup {
        &self.setup
    }

    pub fn program(&self) -> &Arc<Program> {
        &self.prog
    }

    pub fn id(&self) -> CoreId {
        self.setup.id
    }

    pub fn status(&self) -> &CoreStatus {
        &self.status
    }

    pub fn stats(&self) -> CoreStats {
        CoreStats { local_accesses: self.acc[0], shared_accesses: self.acc[1], ..self.stats }
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    /// Stack bytes currently in use.
    pub fn stack_used(&self) -> usize {
        self.stack_used
    }

    /// Peak usage of each core-local region.
    pub fn peak_usage(&self) -> RegionUsage {
        let m = &self.setup.map;
        RegionUsage { globals: m.globals, code: m.code, comms: m.comms, stack: self.stack_peak, heap: self.heap.local_peak() }
    }

    /// Current usage of each core-local region.
    pub fn usage(&self) -> RegionUsage {
        let m = &self.setup.map;
        RegionUsage { globals: m.globals, code: m.code, comms: m.comms, stack: self.stack_used, heap: self.heap.local_used() }
    }

    /// Global slot values, for inspection after a run.
    pub fn globals(&self) -> &[Value] {
        &self.globals
    }

    /// Human-readable rendering of a value owned by this core.
    pub fn render(&self, v: Value) -> String {
        display(v, &self.heap)
    }

    /// What the core is blocked on, if anything.
    pub fn waiting_on(&self, fabric: &crate::mesh::Fabric) -> Option<String> {
        self.pending.as_ref().map(|p| p.op.describe(fabric))
    }

    /// Runs up to `quantum` instructions.
    pub fn run_slice<S: CoreServices>(&mut self, quantum: u32, svc: &mut S) -> Step {
        match self.status {
            CoreStatus::Finished => return Step::Finished,
            CoreStatus::Failed(_) => return Step::Failed,
            _ => {}
        }
        if self.pending.is_some() {
            match self.poll_pending(svc) {
                Ok(true) => self.status = CoreStatus::Running,
                Ok(false) => return Step::Blocked,
                Err(e) => return self.fail(e, svc),
            }
        }
        for _ in 0..quantum {
            match self.step(svc) {
                Ok(Flow::Next) => {}
                Ok(Flow::Stop) => {
                    self.status = CoreStatus::Finished;
                    return Step::Finished;
                }
                Ok(Flow::Blocked) => {
                    self.status = CoreStatus::Blocked;
                    return Step::Blocked;
                }
                Err(e) => return self.fail(e, svc),
            }
        }
        Step::Ran
    }

    fn fail<S: CoreServices>(&mut self, e: VmError, svc: &mut S) -> Step {
        let at = self.prog.offset_of(self.pc.saturating_sub(1) as usize);
        let msg = format!("{e} (at offset {at})");
        // the monitor only records it; a failure to record changes nothing
        let _ = svc.monitor(self.setup.id, MonitorCommand::Fatal(msg.clone()));
        self.pending = None;
        self.status = CoreStatus::Failed(msg);
        Step::Failed
    }

    #[inline]
    fn read(&mut self, v: Var) -> Value {
        let v = v as usize;
        if v < self.gc {
            self.acc[self.data_loc] += 1;
            self.globals[v]
        } else {
            self.acc[0] += 1;
            self.stack[self.base + v - self.gc]
        }
    }

    #[inline]
    fn write(&mut self, v: Var, value: Value) {
        let v = v as usize;
        if v < self.gc {
            self.acc[self.data_loc] += 1;
            self.globals[v] = value;
        } else {
            self.acc[0] += 1;
            self.stack[self.base + v - self.gc] = value;
        }
    }

    fn read_args(&mut self, a: Args) -> Vec<Value> {
        let prog = Arc::clone(&self.prog);
        prog.args(a).iter().map(|&v| self.read(v)).collect()
    }

    fn touch(&mut self, l: Location, n: usize) {
        self.acc[loc(l)] += n as u64;
    }

    fn step<S: CoreServices>(&mut self, svc: &mut S) -> Result<Flow, VmError> {
        let inst = *self
            .prog
            .insts
            .get(self.pc as usize)
            .ok_or_else(|| VmError::Corrupt("execution ran off the end of the code".into()))?;
        self.pc += 1;
        self.stats.instructions += 1;
        self.acc[self.code_loc] += 1;
        match inst {
            Inst::Stop => return Ok(Flow::Stop),
            Inst::Move { dst, src } => {
                let v = self.read(src);
                self.write(dst, v);
            }
            Inst::Const { dst, value } => {
                let v = match value {
                    ConstValue::Int(i) => Value::Int(i),
                    ConstValue::Real(r) => Value::Real(r),
                    ConstValue::Bool(b) => Value::Bool(b),
                    ConstValue::None => Value::None,
                };
                self.write(dst, v);
            }
            Inst::ConstStr { dst, lit } => {
                let v = self.literals[lit as usize];
                self.write(dst, v);
            }
            Inst::Binary { dst, op, a, b } => {
                let (x, y) = (self.read(a), self.read(b));
                let v = self.binary(op, x, y, svc)?;
                self.write(dst, v);
            }
            Inst::Unary { dst, op, a } => {
                let x = self.read(a);
                let v = eval_unary(op, x, &self.heap)?;
                self.write(dst, v);
            }
            Inst::Jump { to } => self.pc = to,
            Inst::JumpIf { cond, when, to } => {
                let c = self.read(cond);
                if truthy(c, &self.heap) == when {
                    self.pc = to;
                }
            }
            Inst::Index { dst, seq, idx } => {
                let (s, i) = (self.read(seq), self.read(idx));
                let v = self.index(s, i)?;
                self.write(dst, v);
            }
            Inst::StoreIndex { seq, idx, src } => {
                let (s, i, v) = (self.read(seq), self.read(idx), self.read(src));
                self.store_index(s, i, v)?;
            }
            Inst::MakeList { dst, args } => {
                let items = self.read_args(args);
                let h = self.heap.alloc_list(items)?;
                self.touch(self.heap.location(h), args.len as usize);
                self.write(dst, Value::List(h));
            }
            Inst::Call { dst, func, args } => self.call(dst, func, args)?,
            Inst::Return { src } => {
                let v = self.read(src);
                self.ret(v)?;
            }
            Inst::ReturnNone => self.ret(Value::None)?,
            Inst::Intrinsic { dst, which, args } => {
                let argv = self.read_args(args);
                return self.intrinsic(dst, which, &argv, svc);
            }
            Inst::Print { args } => {
                let argv = self.read_args(args);
                let text = argv.iter().map(|&v| display(v, &self.heap)).collect::<Vec<_>>().join(" ");
                self.monitor(svc, MonitorCommand::Print(text))?;
            }
            Inst::Data => return Err(VmError::Corrupt("control reached a data entry".into())),
        }
        Ok(Flow::Next)
    }

    fn monitor<S: CoreServices>(&mut self, svc: &mut S, cmd: MonitorCommand) -> Result<MonitorReply, VmError> {
        svc.monitor(self.setup.id, cmd).map_err(VmError::Monitor)
    }

    fn binary<S: CoreServices>(&mut self, op: BinaryOp, x: Value, y: Value, svc: &mut S) -> Result<Value, VmError> {
        if let (true, BinaryOp::Add, Value::Str(a), Value::Str(b)) = (self.setup.offload, op, x, y) {
            let cmd = MonitorCommand::StrCat(self.heap.str(a).to_vec(), self.heap.str(b).to_vec());
            let MonitorReply::Text(t) = self.monitor(svc, cmd)? else {
                return Err(VmError::Monitor("strcat returned no text".into()));
            };
            return Ok(Value::Str(self.heap.alloc_str(t)?));
        }
        eval_binary(op, x, y, &mut self.heap)
    }

    fn position(&self, i: Value, len: usize) -> Result<usize, VmError> {
        let raw = match i {
            Value::Int(i) => i as i64,
            Value::Bool(b) => b as i64,
            other => return Err(VmError::ArgType { what: "index", expected: "int", got: other.type_name() }),
        };
        let pos = if raw < 0 { raw + len as i64 } else { raw };
        if pos < 0 || pos >= len as i64 {
            return Err(VmError::IndexOutOfRange { index: raw, len });
        }
        Ok(pos as usize)
    }

    fn index(&mut self, s: Value, i: Value) -> Result<Value, VmError> {
        match s {
            Value::List(h) => {
                let pos = self.position(i, self.heap.list(h).len())?;
                self.touch(self.heap.location(h), 1);
                Ok(self.heap.list(h)[pos])
            }
            Value::Str(h) => {
                let pos = self.position(i, self.heap.str(h).len())?;
                self.touch(self.heap.location(h), 1);
                let c = self.heap.str(h)[pos];
                Ok(Value::Str(self.heap.alloc_str(vec![c])?))
            }
            other => Err(VmError::NotIndexable { kind: other.type_name() }),
        }
    }

    fn store_index(&mut self, s: Value, i: Value, v: Value) -> Result<(), VmError> {
        match s {
            Value::List(h) => {
                let pos = self.position(i, self.heap.list(h).len())?;
                self.touch(self.heap.location(h), 1);
                self.heap.list_mut(h)[pos] = v;
                Ok(())
            }
            Value::Str(_) => Err(VmError::StrAssign),
            other => Err(VmError::NotIndexable { kind: other.type_name() }),
        }
    }

    fn call(&mut self, dst: Var, func: u32, args: Args) -> Result<(), VmError> {
        let f = self.prog.functions[func as usize];
        self.prog.check_function(&f, args.len as usize)?;
        let bytes = frame_bytes(f.locals as usize);
        let needed = self.stack_used + bytes;
        if needed > self.setup.map.stack {
            return Err(VmError::StackExhausted { needed, budget: self.setup.map.stack });
        }
        let argv = self.read_args(args);
        self.frames.push(Frame { ret: self.pc, base: self.base, dst, bytes });
        self.stack_used = needed;
        self.stack_peak = self.stack_peak.max(needed);
        self.base = self.stack.len();
        self.stack.resize(self.base + f.locals as usize, Value::None);
        self.stack[self.base..self.base + argv.len()].copy_from_slice(&argv);
        self.acc[0] += argv.len() as u64;
        self.pc = f.body;
        Ok(())
    }

    fn ret(&mut self, v: Value) -> Result<(), VmError> {
        let frame = self.frames.pop().ok_or_else(|| VmError::Corrupt("return outside a function".into()))?;
        self.stack.truncate(self.base);
        self.base = frame.base;
        self.stack_used -= frame.bytes;
        self.pc = frame.ret;
        self.write(frame.dst, v);
        Ok(())
    }

    fn peer<S: CoreServices>(&self, v: Value, svc: &mut S) -> Result<usize, VmError> {
        let Value::Int(id) = v else {
            return Err(VmError::ArgType { what: "core id", expected: "int", got: v.type_name() });
        };
        let rank = u16::try_from(id).ok().and_then(|id| svc.fabric(|f| f.rank_of(id)));
        rank.ok_or(VmError::Mesh(MeshError::InvalidPeer { id: id as i64 }))
    }

    fn count(v: Option<&Value>) -> Result<Option<usize>, VmError> {
        match v {
            None => Ok(None),
            Some(Value::Int(n)) if *n >= 0 => Ok(Some(*n as usize)),
            Some(Value::Int(n)) => Err(VmError::NegativeCount(*n as i64)),
            Some(other) => Err(VmError::ArgType { what: "length", expected: "int", got: other.type_name() }),
        }
    }

    /// Packs a value for sending, trimmed to `count` elements when given.
    fn envelope(&mut self, v: Value, count: Option<usize>) -> Result<Envelope, VmError> {
        let trim = |actual: usize| match count {
            Some(n) if n > actual => Err(VmError::CountTooLarge { given: n, actual }),
            Some(n) => Ok(n),
            None => Ok(actual),
        };
        match v {
            Value::List(h) => {
                let n = trim(self.heap.list(h).len())?;
                let items = self.heap.list(h)[..n]
                    .iter()
                    .map(|e| e.scalar().ok_or(VmError::NotSendable { kind: e.type_name() }))
                    .collect::<Result<Vec<Scalar>, _>>()?;
                self.touch(self.heap.location(h), n);
                Ok(Envelope::List(items))
            }
            Value::Str(h) => {
                let n = trim(self.heap.str(h).len())?;
                self.touch(self.heap.location(h), n.div_ceil(4));
                Ok(Envelope::Str(self.heap.str(h)[..n].to_vec()))
            }
            scalar => {
                if count.is_some() {
                    return Err(VmError::ArgType { what: "length argument", expected: "list or string", got: scalar.type_name() });
                }
                Ok(Envelope::Scalar(scalar.scalar().expect("non-heap value")))
            }
        }
    }

    fn unpack(&mut self, env: Envelope) -> Result<Value, VmError> {
        Ok(match env {
            Envelope::Scalar(s) => s.into(),
            Envelope::List(items) => {
                let n = items.len();
                let h = self.heap.alloc_list(items.into_iter().map(Value::from).collect())?;
                self.touch(self.heap.location(h), n);
                Value::List(h)
            }
            Envelope::Str(bytes) => {
                let n = bytes.len();
                let h = self.heap.alloc_str(bytes)?;
                self.touch(self.heap.location(h), n.div_ceil(4));
                Value::Str(h)
            }
        })
    }

    fn start<S: CoreServices>(&mut self, dst: Var, op: CommOp, svc: &mut S) -> Result<Flow, VmError> {
        self.pending = Some(Pending { op, dst });
        if self.poll_pending(svc)? {
            Ok(Flow::Next)
        } else {
            Ok(Flow::Blocked)
        }
    }

    /// Advances the pending communication; true once it completed and its
    /// result has been stored.
    fn poll_pending<S: CoreServices>(&mut self, svc: &mut S) -> Result<bool, VmError> {
        let me = self.setup.rank;
        let p = self.pending.as_mut().expect("pending op");
        let done = svc.fabric(|f| p.op.poll(me, f))?;
        let Some(env) = done else { return Ok(false) };
        let p = self.pending.take().expect("pending op");
        let v = self.unpack(env)?;
        self.write(p.dst, v);
        Ok(true)
    }

    fn real_arg(v: Value, what: &'static str) -> Result<Real, VmError> {
        match v {
            Value::Int(i) => Ok(i as Real),
            Value::Real(r) => Ok(r),
            Value::Bool(b) => Ok(b as i32 as Real),
            other => Err(VmError::ArgType { what, expected: "number", got: other.type_name() }),
        }
    }

    fn intrinsic<S: CoreServices>(&mut self, dst: Var, which: Intrinsic, a: &[Value], svc: &mut S) -> Result<Flow, VmError> {
        let me = self.setup.rank;
        let v = match which {
            Intrinsic::CoreId => Value::Int(self.setup.id as i32),
            Intrinsic::NumCores => Value::Int(self.setup.num_cores as i32),
            Intrinsic::IsHost => Value::Bool(self.setup.kind == CoreKind::Virtual),
            Intrinsic::IsDevice => Value::Bool(self.setup.kind == CoreKind::Device),
            Intrinsic::Send => {
                let to = self.peer(a[1], svc)?;
                let env = self.envelope(a[0], Self::count(a.get(2))?)?;
                let op = svc.fabric(|f| SendOp::new(f, me, to, &env, OpKind::Send))?;
                return self.start(dst, CommOp::Send(op), svc);
            }
            Intrinsic::Recv => {
                let from = self.peer(a[0], svc)?;
                let expect = Self::count(a.get(1))?;
                let op = svc.fabric(|f| RecvOp::new(f, me, from, expect, OpKind::Send))?;
                return self.start(dst, CommOp::Recv(op), svc);
            }
            Intrinsic::SendRecv => {
                let partner = self.peer(a[1], svc)?;
                let count = Self::count(a.get(2))?;
                let env = self.envelope(a[0], count)?;
                let (send, recv) = svc.fabric(|f| {
                    Ok::<_, MeshError>((
                        SendOp::new(f, me, partner, &env, OpKind::SendRecv)?,
                        RecvOp::new(f, me, partner, count, OpKind::SendRecv)?,
                    ))
                })?;
                return self.start(dst, CommOp::SendRecv { send, sent: false, recv, got: None }, svc);
            }
            Intrinsic::Reduce => {
                let op = match a[1] {
                    Value::Str(h) => {
                        let name = String::from_utf8_lossy(self.heap.str(h)).into_owned();
                        ReduceOp::parse(&name).ok_or(VmError::UnknownReduceOp(name))?
                    }
                    other => return Err(VmError::ArgType { what: "reduce operator", expected: "string", got: other.type_name() }),
                };
                let value = match a[0] {
                    v @ (Value::Int(_) | Value::Real(_)) => v.scalar().unwrap(),
                    other => return Err(MeshError::NotReducible { kind: other.type_name() }.into()),
                };
                let op = svc.fabric(|f| CollectiveOp::reduce(f, me, value, op))?;
                return self.start(dst, CommOp::Collective(op), svc);
            }
            Intrinsic::Bcast => {
                let root = self.peer(a[1], svc)?;
                let env = self.envelope(a[0], None)?;
                let op = svc.fabric(|f| CollectiveOp::bcast(f, me, env, root, self.setup.num_cores))?;
                return self.start(dst, CommOp::Collective(op), svc);
            }
            Intrinsic::Str => {
                let text = match a[0] {
                    Value::Str(_) => a[0],
                    Value::Real(r) if self.setup.offload => match self.monitor(svc, MonitorCommand::FormatReal(r))? {
                        MonitorReply::Text(t) => Value::Str(self.heap.alloc_str(t)?),
                        _ => return Err(VmError::Monitor("format returned no text".into())),
                    },
                    v => {
                        let s = display(v, &self.heap);
                        Value::Str(self.heap.alloc_str(s.into_bytes())?)
                    }
                };
                text
            }
            Intrinsic::Len => match a[0] {
                Value::List(h) => Value::Int(self.heap.list(h).len() as i32),
                Value::Str(h) => Value::Int(self.heap.str(h).len() as i32),
                other => return Err(VmError::ArgType { what: "len()", expected: "list or string", got: other.type_name() }),
            },
            Intrinsic::Int => Value::Int(match a[0] {
                Value::Int(i) => i,
                Value::Bool(b) => b as i32,
                Value::Real(r) => {
                    let t = r.trunc();
                    if !(t >= i32::MIN as Real && t < 2147483648.0) {
                        return Err(crate::scalar::ArithError::Overflow.into());
                    }
                    t as i32
                }
                Value::Str(h) => {
                    let s = String::from_utf8_lossy(self.heap.str(h)).trim().to_string();
                    s.parse().map_err(|_| VmError::BadInt(s))?
                }
                other => return Err(VmError::ArgType { what: "int()", expected: "number or string", got: other.type_name() }),
            }),
            Intrinsic::Float => Value::Real(match a[0] {
                Value::Str(h) => {
                    let s = String::from_utf8_lossy(self.heap.str(h)).trim().to_string();
                    s.parse().map_err(|_| VmError::BadFloat(s))?
                }
                v => Self::real_arg(v, "float()")?,
            }),
            Intrinsic::Input => {
                let prompt = a.first().map(|&p| display(p, &self.heap));
                match self.monitor(svc, MonitorCommand::Input(prompt))? {
                    MonitorReply::Text(t) => Value::Str(self.heap.alloc_str(t)?),
                    _ => return Err(VmError::Input("no line returned".into())),
                }
            }
            Intrinsic::RandInt => {
                let (Value::Int(lo), Value::Int(hi)) = (a[0], a[1]) else {
                    let bad = if matches!(a[0], Value::Int(_)) { a[1] } else { a[0] };
                    return Err(VmError::ArgType { what: "randint()", expected: "int", got: bad.type_name() });
                };
                if lo > hi {
                    return Err(VmError::EmptyRange { lo, hi });
                }
                self.rng = self.rng.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
                let span = (hi as i64 - lo as i64 + 1) as u64;
                Value::Int((lo as i64 + ((self.rng >> 32) % span) as i64) as i32)
            }
            Intrinsic::Math(f) => {
                let args = a.iter().map(|&v| Self::real_arg(v, f.name())).collect::<Result<Vec<_>, _>>()?;
                Value::Real(self.math(f, args, svc)?)
            }
            Intrinsic::Append => match a[0] {
                Value::List(h) => {
                    self.heap.push(h, a[1])?;
                    self.touch(self.heap.location(h), 1);
                    Value::None
                }
                other => return Err(VmError::ArgType { what: "append()", expected: "list", got: other.type_name() }),
            },
        };
        self.write(dst, v);
        Ok(Flow::Next)
    }

    fn math<S: CoreServices>(&mut self, f: MathFn, args: Vec<Real>, svc: &mut S) -> Result<Real, VmError> {
        if !self.setup.offload {
            return Ok(f.apply(&args)?);
        }
        match self.monitor(svc, MonitorCommand::Math(f, args))? {
            MonitorReply::Real(r) => Ok(r),
            _ => Err(VmError::Monitor(format!("{} returned no number", f.name()))),
        }
    }
}
