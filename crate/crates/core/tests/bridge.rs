//! An external host program talking to a running device over the bridge.

use std::net::{SocketAddr, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use epython::compile_source;
use epython::device::bridge::{wire_tag, Frame, FrameType, PROTOCOL_VERSION};
use epython::device::{Device, DeviceConfig, RunOutcome};
use epython::mesh::{Envelope, Scalar};

const SORT_DEVICE: &str = include_str!("corpus/sort_device.py");

fn start(src: &str, config: DeviceConfig) -> (SocketAddr, u16, JoinHandle<RunOutcome>) {
    let image = compile_source(src).unwrap();
    let config = config.with_fullpython("127.0.0.1:0".parse().unwrap());
    let host = config.host_id();
    let device = Device::boot(image, config).unwrap();
    let addr = device.bridge_addr().unwrap();
    (addr, host, std::thread::spawn(move || device.run()))
}

struct Client {
    stream: TcpStream,
    id: u16,
}

impl Client {
    fn connect(addr: SocketAddr) -> TcpStream {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        s
    }

    fn hello(addr: SocketAddr) -> Client {
        let mut stream = Client::connect(addr);
        let reply = exchange(&mut stream, &hello_frame(PROTOCOL_VERSION as i32));
        assert_eq!(reply.kind, FrameType::Hello, "{reply:?}");
        Client { id: reply.source, stream }
    }

    fn send(&mut self, to: u16, v: &Envelope) {
        let ack = exchange(&mut self.stream, &Frame::with_value(FrameType::Send, self.id, to, v));
        assert_eq!((ack.kind, ack.source, ack.count), (FrameType::Send, to, 0), "{ack:?}");
    }

    fn recv(&mut self, from: u16, expect: Option<u32>) -> Envelope {
        let mut req = Frame::new(FrameType::RecvReq, self.id, from);
        if let Some(n) = expect {
            req.tag = wire_tag::LIST;
            req.count = n;
        }
        let reply = exchange(&mut self.stream, &req);
        assert_eq!((reply.kind, reply.source), (FrameType::RecvData, from), "{reply:?}");
        reply.value().unwrap()
    }

    fn reduce(&mut self, op: u16, v: Scalar) -> Envelope {
        let reply = exchange(&mut self.stream, &Frame::with_value(FrameType::Reduce, self.id, op, &Envelope::Scalar(v)));
        assert_eq!(reply.kind, FrameType::Reduce, "{reply:?}");
        reply.value().unwrap()
    }

    fn bye(mut self) {
        Frame::new(FrameType::Bye, self.id, 0).write_to(&mut self.stream).unwrap();
    }
}

fn hello_frame(version: i32) -> Frame {
    Frame::with_value(FrameType::Hello, 0, 0, &Envelope::Scalar(Scalar::Int(version)))
}

fn exchange(stream: &mut TcpStream, f: &Frame) -> Frame {
    f.write_to(stream).unwrap();
    Frame::read_from(stream).unwrap_or_else(|e| panic!("reading reply to {:?}: {e}", f.kind))
}

fn int(v: i32) -> Envelope {
    Envelope::Scalar(Scalar::Int(v))
}

fn error_text(f: &Frame) -> String {
    assert_eq!(f.kind, FrameType::Error, "{f:?}");
    match f.value().unwrap() {
        Envelope::Str(b) => String::from_utf8(b).unwrap(),
        other => panic!("error payload {other:?}"),
    }
}

const DOUBLER: &str = "from parallel import *\nif coreid()==0:\n  v=recv(numcores())\n  send(v*2, numcores())\n";

#[test]
fn hello_assigns_the_id_after_the_last_core() {
    for config in [DeviceConfig::deterministic(2, 0), DeviceConfig::threaded(2, 1)] {
        let (addr, host, run) = start(DOUBLER, config);
        let mut c = Client::hello(addr);
        assert_eq!(c.id, host);
        c.send(0, &int(21));
        assert_eq!(c.recv(0, None), int(42));
        c.bye();
        let out = run.join().unwrap();
        assert!(out.success(), "{}", out.report_text());
        let report = out.bridge.unwrap();
        assert!(report.connected);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
    }
}

#[test]
fn host_joins_reduce_as_an_extra_core() {
    let src = "from parallel import *\nprint reduce(4, \"sum\")\n";
    let (addr, _, run) = start(src, DeviceConfig::deterministic(1, 0));
    let mut c = Client::hello(addr);
    assert_eq!(c.reduce(2, Scalar::Int(5)), int(9));
    c.bye();
    let out = run.join().unwrap();
    assert!(out.success());
    assert_eq!(out.transcript_text(), "[0] 9\n");

    let src = "from parallel import *\nprint reduce(coreid()*1.5, \"max\")\n";
    let (addr, _, run) = start(src, DeviceConfig::threaded(4, 0));
    let mut c = Client::hello(addr);
    assert_eq!(c.reduce(0, Scalar::Real(2.0)), Envelope::Scalar(Scalar::Real(4.5)));
    c.bye();
    let out = run.join().unwrap();
    assert_eq!(out.lines_of(3), ["4.5"]);
}

#[test]
fn second_client_is_refused() {
    let (addr, _, run) = start(DOUBLER, DeviceConfig::deterministic(1, 0));
    let mut first = Client::hello(addr);
    let mut second = Client::connect(addr);
    let refusal = Frame::read_from(&mut second).unwrap();
    assert_eq!(error_text(&refusal), "host slot already taken");
    first.send(0, &int(1));
    assert_eq!(first.recv(0, None), int(2));
    first.bye();
    let out = run.join().unwrap();
    assert!(out.success());
    assert_eq!(out.bridge.unwrap().refused, 1);
}

#[test]
fn version_mismatch_is_rejected() {
    let (addr, host, run) = start(DOUBLER, DeviceConfig::deterministic(1, 0));
    let mut s = Client::connect(addr);
    let reply = exchange(&mut s, &hello_frame(PROTOCOL_VERSION as i32 + 1));
    assert!(error_text(&reply).contains("not supported"));
    let out = run.join().unwrap();
    // core 0 is left waiting for a host that is gone
    let dead = out.deadlock.as_ref().expect("deadlock");
    assert_eq!(dead.blocked.len(), 1);
    assert!(dead.blocked[0].waiting.contains(&format!("core {host}")), "{}", dead.blocked[0].waiting);
}

#[test]
fn requests_before_hello_are_rejected() {
    let (addr, _, run) = start(DOUBLER, DeviceConfig::deterministic(1, 0));
    let mut s = Client::connect(addr);
    let reply = exchange(&mut s, &Frame::with_value(FrameType::Send, 0, 0, &int(1)));
    assert!(error_text(&reply).contains("HELLO"));
    assert!(!run.join().unwrap().success());
}

#[test]
fn bcast_leaves_the_host_out() {
    let src = "from parallel import *\nprint bcast(coreid()+10, 2)\n";
    // no client needs to connect: the host takes no part
    let (_, _, run) = start(src, DeviceConfig::deterministic(3, 0));
    let out = run.join().unwrap();
    assert!(out.success(), "{}", out.report_text());
    assert_eq!(out.transcript.len(), 3);
    assert!(out.transcript.iter().all(|l| l.text == "12"));

    let src = "from parallel import *\nprint bcast(1, numcores())\n";
    let (_, _, run) = start(src, DeviceConfig::deterministic(2, 0));
    let out = run.join().unwrap();
    assert_eq!(out.errors.len(), 2, "{}", out.report_text());
}

#[test]
fn lists_and_strings_echo_unchanged() {
    let src = "from parallel import *\nh=numcores()\nn=recv(h)\ni=0\nwhile i<n:\n  x=recv(h)\n  send(x, h, len(x))\n  i+=1\n";
    let (addr, host, run) = start(src, DeviceConfig::deterministic(1, 0));
    let mut c = Client::hello(addr);
    assert_eq!(c.id, host);
    let mut values = Vec::new();
    for len in [1usize, 2, 17, 255, 1000, 10_000] {
        values.push(Envelope::List((0..len).map(|i| Scalar::Int((i as i32).wrapping_mul(-7919))).collect()));
        values.push(Envelope::List((0..len).map(|i| Scalar::Real(i as f32 * 0.37 - 3.0)).collect()));
        values.push(Envelope::List((0..len).map(|i| Scalar::Bool(i % 3 == 0)).collect()));
    }
    values.push(Envelope::Str(b"a string crossing the bridge".to_vec()));
    c.send(0, &int(values.len() as i32));
    for v in &values {
        c.send(0, v);
        let n = v.count().unwrap() as u32;
        assert_eq!(&c.recv(0, Some(n)), v);
    }
    c.bye();
    assert!(run.join().unwrap().success());
}

/// Small xorshift so the test data does not depend on the device's generator.
fn numbers(seed: u64, n: usize) -> Vec<i32> {
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x % 1001) as i32
        })
        .collect()
}

fn sort_on_device(config: DeviceConfig, data: &[i32]) -> (Vec<i32>, RunOutcome) {
    let (addr, host, run) = start(SORT_DEVICE, config);
    let client = std::panic::catch_unwind(|| {
        let mut c = Client::hello(addr);
        assert_eq!(c.id, host);
        c.send(0, &int(data.len() as i32));
        c.send(0, &Envelope::List(data.iter().map(|&v| Scalar::Int(v)).collect()));
        let reply = c.recv(0, Some(data.len() as u32));
        c.bye();
        reply
    });
    let out = run.join().unwrap();
    let Ok(Envelope::List(items)) = client else {
        panic!("host side failed: {client:?}\n{}", out.report_text());
    };
    let sorted = items
        .into_iter()
        .map(|s| match s {
            Scalar::Int(v) => v,
            other => panic!("{other:?}"),
        })
        .collect();
    (sorted, out)
}

#[test]
fn device_sorts_five_thousand_numbers_for_the_host() {
    for seed in 1..=100 {
        let data = numbers(seed, 5000);
        let mut want = data.clone();
        want.sort_unstable();
        let config = if seed == 1 { DeviceConfig::threaded(16, 0) } else { DeviceConfig::deterministic(16, 0) };
        let (got, out) = sort_on_device(config, &data);
        assert!(out.success(), "{}", out.report_text());
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn sort_handles_uneven_blocks_and_several_seeds() {
    for (seed, len, cores) in [(2, 37, 4), (3, 16, 16), (4, 5, 8), (5, 1000, 7)] {
        let data = numbers(seed, len);
        let mut want = data.clone();
        want.sort_unstable();
        let (got, out) = sort_on_device(DeviceConfig::deterministic(cores, 0), &data);
        assert!(out.success(), "{}", out.report_text());
        assert_eq!(got, want, "seed {seed} len {len} cores {cores}");
    }
}
