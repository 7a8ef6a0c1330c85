use std::sync::Arc;

use super::*;
use crate::device::shared::SharedRegion;
use crate::mesh::Fabric;

struct Solo {
    fabric: Fabric,
    out: Vec<String>,
}

impl CoreServices for Solo {
    fn fabric<R>(&mut self, f: impl FnOnce(&mut Fabric) -> R) -> R {
        f(&mut self.fabric)
    }

    fn monitor(&mut self, _core: crate::CoreId, cmd: MonitorCommand) -> Result<MonitorReply, String> {
        match cmd {
            MonitorCommand::Print(s) => self.out.push(s),
            MonitorCommand::Fatal(s) => self.out.push(format!("fatal: {s}")),
            other => return Err(format!("unexpected {other:?}")),
        }
        Ok(MonitorReply::Done)
    }
}

fn core(src: &str, placement: Placement) -> Interpreter {
    let image = crate::compile_source(src).unwrap();
    let prog = Arc::new(Program::load(&image).unwrap());
    let map = MemoryMap::device(prog.code_bytes, prog.global_count as usize, placement).unwrap();
    let setup = CoreSetup {
        rank: 0,
        id: 0,
        kind: CoreKind::Device,
        num_cores: 1,
        seed: 42,
        offload: false,
        placement,
        map,
    };
    Interpreter::new(prog, setup, Arc::new(SharedRegion::new(1))).unwrap()
}

fn run_with(src: &str, placement: Placement) -> (Interpreter, Vec<String>) {
    let mut it = core(src, placement);
    let mut svc = Solo { fabric: Fabric::new(vec![0]).unwrap(), out: Vec::new() };
    loop {
        match it.run_slice(1000, &mut svc) {
            Step::Ran => {}
            Step::Finished | Step::Failed => break,
            Step::Blocked => panic!("a lone core cannot block"),
        }
    }
    (it, svc.out)
}

fn run(src: &str) -> Vec<String> {
    run_with(src, Placement::default()).1
}

#[test]
fn arithmetic_and_printing() {
    assert_eq!(run("print 1+2*3, 7/2, 7.0/2, -7%3, 2**10\n"), ["7 3 3.5 2 1024"]);
    assert_eq!(run("print 'core '+str(7)\n"), ["core 7"]);
    assert_eq!(run("print 3 < 3.5, 1 == 1.0, None is None\n"), ["True True True"]);
    assert_eq!(run("x=[1,2]\nx.append(3)\nprint x, len(x), x[-1]\n"), ["[1, 2, 3] 3 3"]);
    assert_eq!(run("print int('12')+1, float(2), int(3.9), int(-3.9)\n"), ["13 2.0 3 -3"]);
}

#[test]
fn functions_restore_the_stack() {
    let src = "def f(a, b):\n  c = a + b\n  return c * 2\nx = f(1, 2)\nprint x\n";
    let (it, out) = run_with(src, Placement::default());
    assert_eq!(out, ["6"]);
    assert_eq!(it.stack_used(), 0);
    // params, the named local and expression temporaries
    assert_eq!(it.peak_usage().stack, frame_bytes(it.program().max_locals() as usize));
    assert!(it.program().max_locals() >= 3);
}

#[test]
fn recursion_is_bounded_by_the_stack_region() {
    let src = "def f(n):\n  if n == 0: return 0\n  return 1 + f(n-1)\nprint f(10)\nprint f(1000)\n";
    let (it, out) = run_with(src, Placement::default());
    assert_eq!(out[0], "10");
    assert!(out[1].starts_with("fatal: stack exhausted"), "{out:?}");
    assert!(matches!(it.status(), CoreStatus::Failed(_)));
    // the failing call was the first frame that did not fit
    let frame = frame_bytes(it.program().max_locals() as usize);
    assert!(it.peak_usage().stack <= 1024);
    assert!(it.peak_usage().stack + frame > 1024);
    assert_eq!(it.peak_usage().stack % frame, 0);
}

#[test]
fn runtime_errors_fail_the_core() {
    for (src, needle) in [
        ("print 1/0\n", "division by zero"),
        ("x=[1]\nprint x[3]\n", "out of range"),
        ("print 1 + 'a'\n", "unsupported operand"),
        ("from random import randint\nprint randint(5, 1)\n", "empty"),
        ("from math import sqrt\nprint sqrt(-1.0)\n", "sqrt"),
    ] {
        let out = run(src);
        assert!(out.last().unwrap().starts_with("fatal:") && out.last().unwrap().contains(needle), "{src}: {out:?}");
    }
}

#[test]
fn big_list_overflows_to_shared_memory() {
    let (it, out) = run_with("a=[0]*(10**6)\nprint len(a)\n", Placement::default());
    assert_eq!(out, ["1000000"]);
    assert_eq!(it.heap().overflow_bytes(), list_bytes(1_000_000));
    assert!(it.usage().total() <= memory::USER_REGION);
}

#[test]
fn shared_placement_counts_slow_accesses() {
    let src = "i=0\ns=0\nwhile i < 100:\n  s = s + i\n  i += 1\nprint s\n";
    let (local, _) = run_with(src, Placement::default());
    let (shared, out) = run_with(src, Placement { code_shared: true, data_shared: true });
    assert_eq!(out, ["4950"]);
    assert_eq!(local.stats().shared_accesses, 0);
    assert_eq!(shared.stats().local_accesses, 0);
    assert_eq!(local.stats().instructions, shared.stats().instructions);
    assert_eq!(shared.stats().access_cost(), 10 * local.stats().access_cost());
}

#[test]
fn randint_is_seeded_per_core() {
    let src = "from random import randint\nprint randint(0, 100), randint(0, 100), randint(0, 100)\n";
    assert_eq!(run(src), run(src));
    let line = &run(src)[0];
    assert!(line.split(' ').all(|n| (0..=100).contains(&n.parse::<i32>().unwrap())));
}
