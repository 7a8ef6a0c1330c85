//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! run with `--nocapture` to see them.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use epython::bytecode::{self, assemble, decode_all, disassemble, ProgramImage};
use epython::device::{BootError, Device, DeviceConfig, RunOutcome};
use epython::mesh::OpKind;
use epython::vm::Placement;
use epython::{compile_source, frontend};

const HELLO: &str = include_str!("corpus/hello.py");
const P2P: &str = include_str!("corpus/p2p.py");
const REDUCE_MAX: &str = include_str!("corpus/reduce_max.py");
const CORE_KINDS: &str = include_str!("corpus/core_kinds.py");
const GAUSS_SEIDEL: &str = include_str!("corpus/gauss_seidel.py");
const OFFLOAD_HOST: &str = include_str!("corpus/offload_host.py");
const SORT_DEVICE: &str = include_str!("corpus/sort_device.py");

/// Programs that run unaided on the device, with their frozen transcripts.
const RUNNABLE: [(&str, &str, &str); 5] = [
    ("hello", HELLO, include_str!("golden/hello.txt")),
    ("p2p", P2P, include_str!("golden/p2p.txt")),
    ("reduce_max", REDUCE_MAX, include_str!("golden/reduce_max.txt")),
    ("core_kinds", CORE_KINDS, include_str!("golden/core_kinds.txt")),
    ("gauss_seidel", GAUSS_SEIDEL, include_str!("golden/gauss_seidel.txt")),
];

/// Every program in the corpus that compiles.
const COMPILABLE: [(&str, &str); 7] = [
    ("hello", HELLO),
    ("p2p", P2P),
    ("reduce_max", REDUCE_MAX),
    ("core_kinds", CORE_KINDS),
    ("gauss_seidel", GAUSS_SEIDEL),
    ("offload_host", OFFLOAD_HOST),
    ("sort_device", SORT_DEVICE),
];

const CORE_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];

fn run(src: &str, config: DeviceConfig) -> RunOutcome {
    Device::boot(compile_source(src).expect("compiles"), config).expect("boots").run()
}

fn golden_config() -> DeviceConfig {
    DeviceConfig::deterministic(16, 0).with_seed(42)
}

// ---------------------------------------------------------------- corpus

fn corpus_transcripts() {
    let start = Instant::now();
    for (name, src, golden) in RUNNABLE {
        let out = run(src, golden_config());
        assert!(out.success(), "{name}: {}", out.report_text());
        assert_eq!(out.transcript_text(), golden, "{name}");
        // a second run must not drift
        assert_eq!(run(src, golden_config()).transcript_text(), golden, "{name} rerun");
    }
    let took = start.elapsed();
    assert!(took < Duration::from_secs(30), "corpus took {took:?}");
}

// ---------------------------------------------------------------- Gauss-Seidel

/// Straight-line f32 replica of the block-decomposed sweep: per-core
/// partial residuals summed pairwise in tree order, halos taken from the
/// previous sweep, Gauss-Seidel order inside each block.
fn gauss_seidel_oracle(p: usize) -> (u32, f32) {
    const N: usize = 1000;
    const MAX_ITS: u32 = 10000;
    let w: f32 = 1.3;
    let base = N / p;
    let extra = N - base * p;
    let sizes: Vec<usize> = (0..p).map(|c| if c < extra { base + 1 } else { base }).collect();
    let mut blocks: Vec<Vec<f32>> = sizes.iter().map(|&s| vec![0.0; s + 2]).collect();
    blocks[0][0] = 1.0;
    blocks[p - 1][sizes[p - 1] + 1] = 10.0;

    let residual = |blocks: &[Vec<f32>]| -> f32 {
        let mut partial: Vec<f32> = blocks
            .iter()
            .map(|b| {
                let mut t = 0.0f32;
                for i in 1..b.len() - 1 {
                    let d = b[i] * 2.0 - b[i - 1] - b[i + 1];
                    t += d * d;
                }
                t
            })
            .collect();
        let mut stride = 1;
        while stride < p {
            for r in (0..p).step_by(2 * stride) {
                if r + stride < p {
                    partial[r] += partial[r + stride];
                }
            }
            stride *= 2;
        }
        partial[0].sqrt()
    };

    let bnorm = residual(&blocks);
    let mut norm = 1.0f32;
    let mut its = 0;
    while norm >= 1e-3 && its < MAX_ITS {
        let edges: Vec<(f32, f32)> = blocks.iter().map(|b| (b[1], b[b.len() - 2])).collect();
        for c in 0..p {
            let last = blocks[c].len() - 1;
            if c > 0 {
                blocks[c][0] = edges[c - 1].1;
            }
            if c + 1 < p {
                blocks[c][last] = edges[c + 1].0;
            }
        }
        norm = residual(&blocks) / bnorm;
        for b in &mut blocks {
            for i in 1..b.len() - 1 {
                b[i] = ((1.0 - w) * b[i]) + 0.5 * w * (b[i - 1] + b[i + 1]);
            }
        }
        its += 1;
    }
    (its, norm)
}

struct GsRun {
    cores: usize,
    iterations: u32,
    norm: f32,
    max_instructions: u64,
    messages: u64,
    access_cost: u64,
}

fn parse_completion(line: &str) -> (u32, f32) {
    let rest = line.strip_prefix("Completed in ").unwrap_or_else(|| panic!("unexpected output {line:?}"));
    let (its, norm) = rest.split_once(" iterations, RNorm=").expect("completion line");
    (its.parse().unwrap(), norm.parse().unwrap())
}

fn gs_run(cores: usize, placement: Placement) -> GsRun {
    let out = run(GAUSS_SEIDEL, DeviceConfig::deterministic(cores, 0).with_placement(placement));
    assert!(out.success(), "{cores} cores: {}", out.report_text());
    let lines = out.lines_of(0);
    assert_eq!(lines.len(), 1, "{cores} cores: {lines:?}");
    let (iterations, norm) = parse_completion(lines[0]);
    GsRun {
        cores,
        iterations,
        norm,
        max_instructions: out.cores.iter().map(|c| c.stats.instructions).max().unwrap(),
        messages: out.total_messages(),
        access_cost: out.cores.iter().map(|c| c.stats.access_cost()).sum(),
    }
}

fn gs_runs() -> &'static [GsRun] {
    static RUNS: OnceLock<Vec<GsRun>> = OnceLock::new();
    RUNS.get_or_init(|| CORE_COUNTS.iter().map(|&p| gs_run(p, Placement::default())).collect())
}

fn gauss_seidel_convergence() {
    for r in gs_runs() {
        let (its, norm) = gauss_seidel_oracle(r.cores);
        assert!(r.iterations < 10000 && r.norm < 1e-3, "{} cores: {} its, norm {}", r.cores, r.iterations, r.norm);
        assert_eq!(r.iterations, its, "{} cores: iterations", r.cores);
        let rel = ((r.norm - norm) / norm).abs();
        assert!(rel <= 1e-5, "{} cores: norm {} vs oracle {norm}", r.cores, r.norm);
    }
    let local = gs_runs().iter().find(|r| r.cores == 16).unwrap();
    let shared = gs_run(16, Placement { code_shared: true, data_shared: true });
    assert_eq!((shared.iterations, shared.norm), (local.iterations, local.norm));
    let ratio = shared.access_cost as f64 / local.access_cost as f64;
    assert!(ratio >= 4.0, "shared/local access cost ratio {ratio:.2}");
}

fn strong_scaling() {
    let runs = gs_runs();
    for pair in runs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert!(
            b.max_instructions < a.max_instructions,
            "per-core instructions {} cores {} -> {} cores {}",
            a.cores,
            a.max_instructions,
            b.cores,
            b.max_instructions
        );
        assert!(b.messages > a.messages, "messages {} cores {} -> {} cores {}", a.cores, a.messages, b.cores, b.messages);
    }
}

// ---------------------------------------------------------------- communication

/// Small xorshift for test inputs.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            v.swap(i, (self.next() % (i as u64 + 1)) as usize);
        }
    }
}

fn ordered_delivery() {
    let src = "from parallel import *
K=1000
me=coreid()
i=0
if me==0 or me==3:
  peer=1
  if me==3: peer=2
  while i<K:
    send(i*7+me, peer)
    i+=1
else:
  src=0
  if me==2: src=3
  bad=0
  while i<K:
    if recv(src)!=i*7+src: bad+=1
    i+=1
  print \"out of order\", bad
";
    for config in [DeviceConfig::deterministic(4, 0), DeviceConfig::threaded(4, 0)] {
        let out = run(src, config);
        assert!(out.success(), "{}", out.report_text());
        assert_eq!(out.lines_of(1), ["out of order 0"]);
        assert_eq!(out.lines_of(2), ["out of order 0"]);
        assert_eq!(out.messages.get(&OpKind::Send).copied(), Some(2000));
    }
}

fn allreduce_agreement() {
    let src = "from parallel import *
c=coreid()
vi=(c*7919+13)%101-50
vp=c%3+1
vr=c*0.37+0.1
vq=1.0+c*0.05
print reduce(vi, \"max\"), reduce(vi, \"min\"), reduce(vi, \"sum\"), reduce(vp, \"prod\"), reduce(vr, \"sum\"), reduce(vq, \"prod\"), reduce(vr, \"max\")
";
    for n in CORE_COUNTS {
        let out = run(src, DeviceConfig::deterministic(n, 0));
        assert!(out.success(), "{n} cores: {}", out.report_text());
        let first = out.lines_of(0)[0].to_owned();
        for c in 0..n as u16 {
            assert_eq!(out.lines_of(c), [first.as_str()], "{n} cores: core {c} disagrees");
        }
        let ints: Vec<i32> = (0..n as i32).map(|c| (c * 7919 + 13) % 101 - 50).collect();
        let prods: Vec<i32> = (0..n as i32).map(|c| c % 3 + 1).collect();
        let reals: Vec<f32> = (0..n).map(|c| c as f32 * 0.37 + 0.1).collect();
        let quots: Vec<f32> = (0..n).map(|c| 1.0 + c as f32 * 0.05).collect();
        let f: Vec<&str> = first.split(' ').collect();
        assert_eq!(f[0].parse::<i32>().unwrap(), *ints.iter().max().unwrap());
        assert_eq!(f[1].parse::<i32>().unwrap(), *ints.iter().min().unwrap());
        assert_eq!(f[2].parse::<i32>().unwrap(), ints.iter().sum::<i32>());
        assert_eq!(f[3].parse::<i32>().unwrap(), prods.iter().product::<i32>());
        let close = |got: &str, want: f32| {
            let got: f32 = got.parse().unwrap();
            assert!(((got - want) / want).abs() <= 1e-6, "{n} cores: {got} vs serial fold {want}");
        };
        close(f[4], reals.iter().fold(0.0, |a, b| a + b));
        close(f[5], quots.iter().fold(1.0, |a, b| a * b));
        assert_eq!(f[6].parse::<f32>().unwrap(), reals.iter().cloned().fold(f32::MIN, f32::max));
    }
}

fn sendrecv_pairings() {
    let mut rng = Rng(0x5eed);
    for round in 0..100 {
        let mut ranks: Vec<usize> = (0..16).collect();
        rng.shuffle(&mut ranks);
        let mut partner = [0usize; 16];
        for pair in ranks.chunks(2) {
            partner[pair[0]] = pair[1];
            partner[pair[1]] = pair[0];
        }
        let table: Vec<String> = partner.iter().map(|p| p.to_string()).collect();
        let src = format!(
            "from parallel import *\npartners=[{}]\nprint sendrecv(coreid()*10+1, partners[coreid()])\n",
            table.join(",")
        );
        let config = if round % 10 == 0 { DeviceConfig::threaded(16, 0) } else { DeviceConfig::deterministic(16, 0) };
        let out = run(&src, config);
        assert!(out.success(), "pairing {partner:?}: {}", out.report_text());
        for c in 0..16 {
            assert_eq!(out.lines_of(c as u16), [format!("{}", partner[c] * 10 + 1)], "pairing {partner:?}");
        }
    }
}

fn minimal_deadlock() {
    let src = "from parallel import *\nif coreid()==0:\n  send(1, 1)\n";
    for config in [DeviceConfig::deterministic(2, 0), DeviceConfig::threaded(2, 0)] {
        let out = run(src, config);
        assert!(!out.success());
        let d = out.deadlock.as_ref().expect("deadlock reported");
        assert_eq!(d.blocked.len(), 1, "{d}");
        assert_eq!(d.blocked[0].core, 0);
        assert!(d.blocked[0].waiting.contains("core 1"), "{d}");
    }
}

fn communication_properties() {
    ordered_delivery();
    allreduce_agreement();
    sendrecv_pairings();
    minimal_deadlock();
}

// ---------------------------------------------------------------- bytecode

fn compile_without_elimination(src: &str) -> ProgramImage {
    let module = frontend::parse_source(src).unwrap();
    let module = frontend::resolve_imports(module).unwrap();
    bytecode::compile(&module).unwrap()
}

fn bytecode_laws() {
    for (name, src) in COMPILABLE {
        let image = compile_source(src).unwrap();
        assert_eq!(image.to_bytes(), compile_source(src).unwrap().to_bytes(), "{name}: compile is not deterministic");

        let decoded = decode_all(&image.code).unwrap();
        let consumed: usize = decoded.iter().map(|d| d.len).sum();
        assert_eq!(consumed, image.code.len(), "{name}: decode does not consume the code exactly");
        for pair in decoded.windows(2) {
            assert_eq!(pair[0].offset as usize + pair[0].len, pair[1].offset as usize, "{name}");
        }

        let text = disassemble(&image).unwrap();
        let back = assemble(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(back.to_bytes(), image.to_bytes(), "{name}: disassemble/assemble round trip");

        let footprint = image.code.len() + 4 * image.global_count as usize;
        assert!(footprint < 8192, "{name}: code+globals {footprint} bytes");

        let full = compile_without_elimination(src);
        assert!(full.code.len() >= image.code.len(), "{name}");
    }
    for (name, src, golden) in RUNNABLE {
        let full = compile_without_elimination(src);
        let out = Device::boot(full, golden_config()).unwrap().run();
        assert_eq!(out.transcript_text(), golden, "{name}: output changed without dead-code elimination");
    }
}

// ---------------------------------------------------------------- memory

/// CONST_INT is 1+2+4 bytes, MOVE 1+2+2, STOP 1: 1282*7 + 5*5 + 1 = 9000.
fn nine_thousand_byte_image() -> ProgramImage {
    let mut code = Vec::with_capacity(9000);
    for i in 0..1282i32 {
        code.push(0x02);
        code.extend_from_slice(&0u16.to_le_bytes());
        code.extend_from_slice(&i.to_le_bytes());
    }
    for _ in 0..5 {
        code.push(0x01);
        code.extend_from_slice(&0u16.to_le_bytes());
        code.extend_from_slice(&0u16.to_le_bytes());
    }
    code.push(0x00);
    ProgramImage { global_count: 1, code, entry: 0, symbols: None }
}

fn memory_governance() {
    let out = run("a=[0]*1000000\nprint len(a)\n", DeviceConfig::deterministic(1, 0));
    assert!(out.success(), "{}", out.report_text());
    assert_eq!(out.transcript_text(), "[0] 1000000\n");
    let core = &out.cores[0];
    // 8-byte object header plus 5 bytes per element
    assert_eq!(core.overflow_bytes, 8 + 5 * 1_000_000);
    assert_eq!(core.overflow_objects, 1);
    assert!(core.peak.heap <= core.budgets.heap);

    let image = nine_thousand_byte_image();
    assert_eq!(image.code.len(), 9000);
    assert_eq!(decode_all(&image.code).unwrap().len(), 1288);
    let err = Device::boot(image.clone(), DeviceConfig::deterministic(1, 0)).unwrap_err();
    // code + one 4-byte global + 256 comms + 1024 stack, against 32768 - 24576
    let (required, available) = (9000 + 4 + 256 + 1024, 32768 - 24576);
    let BootError::ImageTooLarge { core: 0, source } = &err else { panic!("unexpected error {err}") };
    assert_eq!((source.required, source.available, source.over), (required, available, required - available));
    let msg = err.to_string();
    for n in [required, available, required - available] {
        assert!(msg.contains(&n.to_string()), "{msg}");
    }
    let placement = Placement { code_shared: true, data_shared: false };
    let out = Device::boot(image, DeviceConfig::deterministic(1, 0).with_placement(placement)).unwrap().run();
    assert!(out.success());
}

// ---------------------------------------------------------------- harness

fn panic_text(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

#[test]
fn primary_criteria() {
    let criteria: [(&str, fn()); 6] = [
        ("corpus transcripts match golden files", corpus_transcripts),
        ("gauss-seidel converges and matches the oracle on 1-16 cores", gauss_seidel_convergence),
        ("strong scaling: fewer instructions per core, more messages", strong_scaling),
        ("communication: ordering, allreduce, sendrecv pairings, deadlock", communication_properties),
        ("bytecode laws over the corpus", bytecode_laws),
        ("memory governance: overflow and oversized image", memory_governance),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => println!("PASS  {name} ({:.1?})", start.elapsed()),
            Err(e) => {
                let why = panic_text(&*e);
                println!("FAIL  {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

