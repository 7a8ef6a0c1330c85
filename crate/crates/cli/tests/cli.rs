use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus").join(name)
}

fn epython(args: &[&str]) -> Output {
    epython_with_input(args, "")
}

fn epython_with_input(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_epython"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn epython");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn source(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("prog.py");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn hello_runs_on_sixteen_cores_by_default() {
    let hello = corpus("hello.py");
    let o = epython(&[hello.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    lines.sort();
    let mut want: Vec<String> =
        (0..16).map(|i| format!("[{i}] Hello world from core {i} of 16")).collect();
    want.sort();
    assert_eq!(lines, want);
}

#[test]
fn device_and_host_core_split() {
    let p = corpus("core_kinds.py");
    let o = epython(&["-d", "5", "-h", "10", "--deterministic", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 15);
    for i in 0..5 {
        assert!(out.contains(&format!("[{i}] Core number {i} is a physical Epiphany core\n")));
    }
    for i in 5..15 {
        assert!(out.contains(&format!("[{i}] Core number {i} is a virtual core on the CPU\n")));
    }
}

#[test]
fn core_range_sets_ids() {
    let p = corpus("hello.py");
    let o = epython(&["--cores", "4-6", "--deterministic", p.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "[4] Hello world from core 4 of 3\n[5] Hello world from core 5 of 3\n[6] Hello world from core 6 of 3\n"
    );
    assert!(!epython(&["--cores", "6-4", p.to_str().unwrap()]).status.success());
}

#[test]
fn missing_file_fails() {
    let o = epython(&["/definitely/not/here.py"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("here.py"));
}

#[test]
fn syntax_errors_carry_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let f = source(&dir, "x = 1\nprint x +\n");
    let o = epython(&[&f]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("prog.py:2:"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn runtime_error_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let f = source(&dir, "x = [1, 2]\nprint x[5]\n");
    let o = epython(&["-d", "1", &f]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("core 0"), "{}", stderr(&o));
}

#[test]
fn deadlock_is_reported_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let f = source(&dir, "from parallel import *\nif coreid() == 0:\n  send(1, 1)\n");
    for sched in [&["--deterministic"][..], &[][..]] {
        let mut args = vec!["-d", "2"];
        args.extend_from_slice(sched);
        args.push(&f);
        let o = epython(&args);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("deadlock"), "{}", stderr(&o));
    }
}

#[test]
fn dump_bytecode_is_independent_of_running() {
    let p = corpus("p2p.py");
    let p = p.to_str().unwrap();
    let only = epython(&["--dump-bytecode", "--no-run", p]);
    assert!(only.status.success());
    let dump = stdout(&only);
    assert!(dump.starts_with("; globals"));
    let ran = epython(&["--dump-bytecode", "--deterministic", "-d", "2", p]);
    assert!(ran.status.success());
    let out = stdout(&ran);
    assert!(out.starts_with(&dump), "dump changed when the program ran");
    assert_eq!(&out[dump.len()..], "[1] Got value 20 from core 0\n");
}

#[test]
fn emit_image_writes_a_loadable_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("out.epy");
    let p = corpus("gauss_seidel.py");
    let o = epython(&["--no-run", "--emit-image", img.to_str().unwrap(), p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = std::fs::read(&img).unwrap();
    let image = epython::bytecode::ProgramImage::from_bytes(&bytes).unwrap();
    let direct = epython::compile_source(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(image.to_bytes(), direct.to_bytes());
}

#[test]
fn trace_file_has_one_record_per_message() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let p = corpus("p2p.py");
    let o = epython(&["--trace", trace.to_str().unwrap(), "-d", "2", p.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 1);
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(rec.is_object());
}

#[test]
fn report_goes_to_stderr() {
    let p = corpus("hello.py");
    let o = epython(&["--report", "-d", "2", p.to_str().unwrap()]);
    assert!(o.status.success());
    let err = stderr(&o);
    assert!(err.contains("instructions"));
    assert!(err.contains("messages: 0"));
    assert!(!stdout(&o).contains("instructions"));
}

#[test]
fn input_reads_stdin_lines() {
    let dir = tempfile::tempdir().unwrap();
    let f = source(&dir, "a = input(\"name? \")\nprint \"hi \" + a\n");
    let o = epython_with_input(&["-d", "1", &f], "bob\n");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "[0] name? \n[0] hi bob\n");
}

#[test]
fn seed_controls_randint() {
    let dir = tempfile::tempdir().unwrap();
    let f = source(&dir, "from random import randint\nprint randint(0, 1000000)\n");
    let run = |seed: &str| stdout(&epython(&["-d", "1", "--seed", seed, &f]));
    assert_eq!(run("7"), run("7"));
    assert_ne!(run("7"), run("8"));
}

#[test]
fn placement_flags_change_access_cost_only() {
    let p = corpus("gauss_seidel.py");
    let p = p.to_str().unwrap();
    let local = epython(&["-d", "4", "--deterministic", p]);
    let shared = epython(&["-d", "4", "--deterministic", "--code-shared", "--data-shared", p]);
    assert!(local.status.success() && shared.status.success());
    assert_eq!(stdout(&local), stdout(&shared));
}
