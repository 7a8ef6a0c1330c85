//! The simulated machine: device and virtual cores, the host monitor, the
//! shared memory window, schedulers and the host bridge.

pub mod bridge;
mod monitor;
mod outcome;
mod sched;
pub mod shared;

use std::io::{BufRead, BufReader, Cursor};
use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;

pub use bridge::BridgeReport;
pub use monitor::{Monitor, TranscriptLine};
pub use outcome::{BlockedCore, CoreReport, DeadlockReport, RunOutcome};
pub use shared::{SharedExhausted, SharedRegion};

use crate::bytecode::{DecodeError, ProgramImage};
use crate::mesh::{Fabric, MeshError};
use crate::vm::{
    CoreKind, CoreSetup, CoreStatus, ImageTooLarge, Interpreter, MemoryMap, Placement, Program, VmError,
};
use crate::CoreId;

/// How cores share the host CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Round-robin on the calling thread; reproducible interleavings.
    Deterministic { quantum: u32 },
    /// One OS thread per core.
    Threaded { quantum: u32 },
}

pub const DEFAULT_QUANTUM: u32 = 256;

/// Where `input()` lines come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Stdin,
    Text(String),
}

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub device_cores: usize,
    pub virtual_cores: usize,
    /// Id of the first device core; the rest follow sequentially.
    pub first_id: CoreId,
    pub placement: Placement,
    pub seed: u64,
    pub schedule: Schedule,
    /// Route string concatenation and math through the monitor.
    pub offload: bool,
    pub trace: bool,
    /// Listen here for an external host program.
    pub fullpython: Option<SocketAddr>,
    pub input: InputSource,
    /// Copy transcript lines to stdout as they are printed.
    pub echo: bool,
}

impl DeviceConfig {
    pub fn deterministic(device_cores: usize, virtual_cores: usize) -> DeviceConfig {
        DeviceConfig {
            device_cores,
            virtual_cores,
            first_id: 0,
            placement: Placement::default(),
            seed: 0,
            schedule: Schedule::Deterministic { quantum: DEFAULT_QUANTUM },
            offload: false,
            trace: false,
            fullpython: None,
            input: InputSource::Text(String::new()),
            echo: false,
        }
    }

    pub fn threaded(device_cores: usize, virtual_cores: usize) -> DeviceConfig {
        DeviceConfig { schedule: Schedule::Threaded { quantum: 4096 }, ..Self::deterministic(device_cores, virtual_cores) }
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_offload(mut self, on: bool) -> Self {
        self.offload = on;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn with_fullpython(mut self, addr: SocketAddr) -> Self {
        self.fullpython = Some(addr);
        self
    }

    pub fn with_input(mut self, text: impl Into<String>) -> Self {
        self.input = InputSource::Text(text.into());
        self
    }

    pub fn with_first_id(mut self, id: CoreId) -> Self {
        self.first_id = id;
        self
    }

    /// Ids of the device cores, then the virtual cores.
    pub fn core_ids(&self) -> impl Iterator<Item = CoreId> + '_ {
        (0..self.device_cores + self.virtual_cores).map(|i| self.first_id + i as CoreId)
    }

    /// Id the external host program gets: one past the last core.
    pub fn host_id(&self) -> CoreId {
        self.first_id + (self.device_cores + self.virtual_cores) as CoreId
    }
}

#[derive(Debug, Error)]
pub enum BootError {
    #[error("no cores to run on")]
    NoCores,
    #[error("core ids would exceed {max}")]
    IdRange { max: CoreId },
    #[error("core {core}: {source}")]
    ImageTooLarge {
        core: CoreId,
        #[source]
        source: ImageTooLarge,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("staging the image: {0}")]
    Shared(#[from] SharedExhausted),
    #[error(transparent)]
    Image(#[from] DecodeError),
    #[error("loading string literals: {0}")]
    Vm(#[from] VmError),
    #[error("host bridge: {0}")]
    Bridge(#[from] std::io::Error),
}

/// A booted machine, ready to run.
#[derive(Debug)]
pub struct Device {
    config: DeviceConfig,
    cores: Vec<Interpreter>,
    fabric: Fabric,
    monitor: Monitor,
    shared: Arc<SharedRegion>,
    bridge: Option<bridge::BridgeCore>,
}

impl std::fmt::Debug for bridge::BridgeCore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeCore").field("id", &self.id()).finish_non_exhaustive()
    }
}

impl Device {
    /// Stages the image in shared memory, checks every core's budget, then
    /// gives each core its own copy positioned at the entry point.
    pub fn boot(image: ProgramImage, config: DeviceConfig) -> Result<Device, BootError> {
        let total = config.device_cores + config.virtual_cores;
        if total == 0 {
            return Err(BootError::NoCores);
        }
        let participants = total + config.fullpython.is_some() as usize;
        let last = config.first_id as usize + participants - 1;
        if last > CoreId::MAX as usize {
            return Err(BootError::IdRange { max: CoreId::MAX });
        }
        let mut ids: Vec<CoreId> = config.core_ids().collect();
        if config.fullpython.is_some() {
            ids.push(config.host_id());
        }
        let mut fabric = Fabric::new(ids)?;
        fabric.set_tracing(config.trace);

        // stage one: the whole image goes to shared memory
        let shared = Arc::new(SharedRegion::new(participants));
        shared.reserve_common(image.to_bytes().len())?;
        let program = Arc::new(Program::load(&image)?);

        // stage two: each core takes its copy, subject to its budget
        let mut cores = Vec::with_capacity(total);
        for (rank, id) in config.core_ids().enumerate() {
            let kind = if rank < config.device_cores { CoreKind::Device } else { CoreKind::Virtual };
            let map = match kind {
                CoreKind::Device => MemoryMap::device(image.code.len(), image.global_count as usize, config.placement)
                    .map_err(|source| BootError::ImageTooLarge { core: id, source })?,
                CoreKind::Virtual => MemoryMap::virtual_core(image.code.len(), image.global_count as usize),
            };
            let setup = CoreSetup {
                rank,
                id,
                kind,
                num_cores: total,
                seed: config.seed,
                offload: config.offload,
                placement: config.placement,
                map,
            };
            cores.push(Interpreter::new(Arc::clone(&program), setup, Arc::clone(&shared))?);
        }

        let bridge = match config.fullpython {
            Some(addr) => Some(bridge::BridgeCore::bind(addr, total, config.host_id())?),
            None => None,
        };
        let input: Box<dyn BufRead + Send> = match &config.input {
            InputSource::Stdin => Box::new(BufReader::new(std::io::stdin())),
            InputSource::Text(t) => Box::new(Cursor::new(t.clone().into_bytes())),
        };
        let echo: Option<Box<dyn std::io::Write + Send>> =
            if config.echo { Some(Box::new(std::io::stdout())) } else { None };
        Ok(Device { monitor: Monitor::new(input, echo), config, cores, fabric, shared, bridge })
    }

    /// Address the host bridge listens on, when enabled.
    pub fn bridge_addr(&self) -> Option<SocketAddr> {
        self.bridge.as_ref().map(|b| b.local_addr())
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn cores(&self) -> &[Interpreter] {
        &self.cores
    }

    pub fn shared(&self) -> &SharedRegion {
        &self.shared
    }

    /// Runs every core to completion, failure or deadlock.
    pub fn run(mut self) -> RunOutcome {
        let deadlocked = match self.config.schedule {
            Schedule::Deterministic { quantum } => sched::run_deterministic(
                &mut self.cores,
                self.bridge.as_mut(),
                &mut self.fabric,
                &self.monitor,
                quantum.max(1),
            ),
            Schedule::Threaded { quantum } => {
                let placeholder = Fabric::new(vec![0]).expect("single participant");
                let fabric = std::mem::replace(&mut self.fabric, placeholder);
                let (fabric, dead) =
                    sched::run_threaded(&mut self.cores, self.bridge.as_mut(), fabric, &self.monitor, quantum.max(1));
                self.fabric = fabric;
                dead
            }
        };
        if let Some(b) = &mut self.bridge {
            b.shutdown();
        }
        self.outcome(deadlocked)
    }

    fn outcome(mut self, deadlocked: bool) -> RunOutcome {
        let deadlock = deadlocked.then(|| {
            let mut blocked: Vec<BlockedCore> = self
                .cores
                .iter()
                .filter(|c| *c.status() == CoreStatus::Blocked)
                .filter_map(|c| c.waiting_on(&self.fabric).map(|waiting| BlockedCore { core: c.id(), waiting }))
                .collect();
            if let Some(b) = &self.bridge {
                if let Some(waiting) = b.describe(&self.fabric) {
                    blocked.push(BlockedCore { core: b.id(), waiting: format!("host: {waiting}") });
                }
            }
            DeadlockReport { blocked }
        });
        let cores = self
            .cores
            .iter()
            .enumerate()
            .map(|(rank, c)| CoreReport {
                id: c.id(),
                kind: c.setup().kind,
                status: c.status().clone(),
                stats: c.stats(),
                budgets: c.setup().map,
                peak: c.peak_usage(),
                overflow_bytes: c.heap().overflow_bytes(),
                overflow_objects: c.heap().overflow_objects(),
                shared_heap_bytes: c.heap().shared_used(),
                messages_sent: self.fabric.sent_by(rank).clone(),
            })
            .collect();
        RunOutcome {
            transcript: self.monitor.transcript(),
            cores,
            deadlock,
            messages: self.fabric.counts().clone(),
            trace: self.fabric.take_trace(),
            errors: self.monitor.errors(),
            bridge: self.bridge.as_ref().map(|b| b.report.clone()),
            shared_bytes_used: self.shared.used(),
        }
    }
}
