use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser};
use epython::bytecode::disassemble;
use epython::device::{Device, DeviceConfig, InputSource, Schedule, DEFAULT_QUANTUM};
use epython::vm::Placement;
use epython::{compile_source, CoreId};

/// Run a Python-subset program on a simulated many-core coprocessor.
#[derive(Debug, Parser)]
#[command(name = "epython", version, disable_help_flag = true)]
struct Args {
    /// Program source file
    file: PathBuf,

    /// Number of device cores
    #[arg(short = 'd', long = "devices", default_value_t = 16)]
    devices: usize,

    /// Number of virtual host cores, numbered after the device cores
    #[arg(short = 'h', long = "hostcores", default_value_t = 0)]
    hostcores: usize,

    /// Run on device cores A through B inclusive (overrides -d)
    #[arg(long, value_name = "A-B", value_parser = parse_range)]
    cores: Option<(CoreId, CoreId)>,

    /// Keep bytecode in shared memory instead of core-local memory
    #[arg(long)]
    code_shared: bool,

    /// Keep globals and heap data in shared memory
    #[arg(long)]
    data_shared: bool,

    /// Accept one external host program on this TCP port (0 picks a free port)
    #[arg(long, value_name = "PORT")]
    fullpython: Option<u16>,

    /// Seed for randint
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Round-robin scheduling on one thread, for reproducible runs
    #[arg(long)]
    deterministic: bool,

    /// Instructions per core per scheduling slice
    #[arg(long)]
    quantum: Option<u32>,

    /// Write one JSON record per message to this file
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,

    /// Print the disassembled bytecode
    #[arg(long)]
    dump_bytecode: bool,

    /// Compile only
    #[arg(long)]
    no_run: bool,

    /// Send string concatenation and maths to the host monitor
    #[arg(long)]
    offload: bool,

    /// Print per-core statistics to stderr after the run
    #[arg(long)]
    report: bool,

    /// Write the binary program image to this file
    #[arg(long, value_name = "PATH")]
    emit_image: Option<PathBuf>,

    #[arg(long, action = ArgAction::Help, help = "Print help")]
    help: Option<bool>,
}

fn parse_range(s: &str) -> Result<(CoreId, CoreId), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected A-B, got '{s}'"))?;
    let a: CoreId = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
    let b: CoreId = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
    if b < a {
        return Err(format!("empty range {a}-{b}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("epython: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<ExitCode, String> {
    let path = args.file.display();
    let source = std::fs::read_to_string(&args.file).map_err(|e| format!("{path}: {e}"))?;
    let image = compile_source(&source).map_err(|e| format!("{path}:{e}"))?;

    if let Some(out) = &args.emit_image {
        std::fs::write(out, image.to_bytes()).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    if args.dump_bytecode {
        print!("{}", disassemble(&image).map_err(|e| e.to_string())?);
    }
    if args.no_run {
        return Ok(ExitCode::SUCCESS);
    }

    let (first_id, devices) = match args.cores {
        Some((a, b)) => (a, (b - a) as usize + 1),
        None => (0, args.devices),
    };
    let quantum = args.quantum.unwrap_or(if args.deterministic { DEFAULT_QUANTUM } else { 4096 });
    let mut config = DeviceConfig::deterministic(devices, args.hostcores)
        .with_first_id(first_id)
        .with_placement(Placement { code_shared: args.code_shared, data_shared: args.data_shared })
        .with_seed(args.seed)
        .with_offload(args.offload)
        .with_trace(args.trace.is_some());
    config.schedule =
        if args.deterministic { Schedule::Deterministic { quantum } } else { Schedule::Threaded { quantum } };
    config.input = InputSource::Stdin;
    config.echo = true;
    if let Some(port) = args.fullpython {
        config = config.with_fullpython(SocketAddr::from((Ipv4Addr::LOCALHOST, port)));
    }

    let device = Device::boot(image, config).map_err(|e| format!("{path}: {e}"))?;
    if let Some(addr) = device.bridge_addr() {
        eprintln!("epython: host bridge listening on {addr} as core {}", device.config().host_id());
    }
    let outcome = device.run();

    if let Some(out) = &args.trace {
        std::fs::write(out, outcome.trace_jsonl()).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    if args.report {
        eprint!("{}", outcome.report_text());
    } else {
        for (core, e) in &outcome.errors {
            eprintln!("epython: core {core}: {e}");
        }
        if let Some(d) = &outcome.deadlock {
            eprintln!("epython: {d}");
        }
    }
    Ok(ExitCode::from(outcome.exit_code() as u8))
}
