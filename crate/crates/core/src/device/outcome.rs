use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::bridge::BridgeReport;
use super::monitor::TranscriptLine;
use crate::mesh::{OpKind, TraceRecord};
use crate::vm::{CoreKind, CoreStats, CoreStatus, MemoryMap, RegionUsage};
use crate::CoreId;

/// A core stuck in a blocking call when the machine went quiet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedCore {
    pub core: CoreId,
    pub waiting: String,
}

/// Every unfinished participant was blocked and nothing could move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockReport {
    pub blocked: Vec<BlockedCore>,
}

impl std::fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "deadlock: {} core(s) blocked", self.blocked.len())?;
        for b in &self.blocked {
            write!(f, "\n  core {}: {}", b.core, b.waiting)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreReport {
    pub id: CoreId,
    pub kind: CoreKind,
    pub status: CoreStatus,
    pub stats: CoreStats,
    /// Region budgets in bytes.
    #[serde(skip)]
    pub budgets: MemoryMap,
    /// Peak bytes used per core-local region.
    pub peak: RegionUsage,
    /// Heap bytes that spilled to shared memory because local space ran out.
    pub overflow_bytes: usize,
    pub overflow_objects: usize,
    /// Heap bytes held in shared memory for any reason.
    pub shared_heap_bytes: usize,
    /// Messages this core started, per operation.
    pub messages_sent: BTreeMap<OpKind, u64>,
}

impl CoreReport {
    pub fn finished(&self) -> bool {
        self.status == CoreStatus::Finished
    }
}

/// Everything observable about a completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub transcript: Vec<TranscriptLine>,
    pub cores: Vec<CoreReport>,
    pub deadlock: Option<DeadlockReport>,
    /// Messages started, per operation.
    pub messages: BTreeMap<OpKind, u64>,
    pub trace: Vec<TraceRecord>,
    pub errors: Vec<(CoreId, String)>,
    pub bridge: Option<BridgeReport>,
    /// Shared window bytes in use at the end of the run, fixed areas included.
    pub shared_bytes_used: usize,
}

impl RunOutcome {
    /// Every core finished normally and nothing deadlocked.
    pub fn success(&self) -> bool {
        self.deadlock.is_none() && self.cores.iter().all(CoreReport::finished)
    }

    pub fn exit_code(&self) -> i32 {
        if self.success() {
            0
        } else {
            1
        }
    }

    /// The transcript as `[id] text` lines.
    pub fn transcript_text(&self) -> String {
        self.transcript.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Lines printed by one core, without the tag.
    pub fn lines_of(&self, core: CoreId) -> Vec<&str> {
        self.transcript.iter().filter(|l| l.core == core).map(|l| l.text.as_str()).collect()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages.values().sum()
    }

    pub fn core(&self, id: CoreId) -> Option<&CoreReport> {
        self.cores.iter().find(|c| c.id == id)
    }

    /// The message trace as line-delimited JSON.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
            .collect()
    }

    /// Per-core summary table followed by message totals and any deadlock.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:<7} {:<9} {:>12} {:>6} {:>6} {:>8} {:>10} {:>12} {:>14} {:>6}",
            "core", "kind", "status", "instructions", "stack", "heap", "overflow", "shared-acc", "access-cost", "code+globals", "msgs"
        );
        for c in &self.cores {
            let status = match &c.status {
                CoreStatus::Finished => "finished",
                CoreStatus::Failed(_) => "FAILED",
                CoreStatus::Blocked => "blocked",
                CoreStatus::Running => "running",
            };
            let kind = match c.kind {
                CoreKind::Device => "device",
                CoreKind::Virtual => "virtual",
            };
            let _ = writeln!(
                s,
                "{:>4} {:<7} {:<9} {:>12} {:>6} {:>6} {:>8} {:>10} {:>12} {:>14} {:>6}",
                c.id,
                kind,
                status,
                c.stats.instructions,
                c.peak.stack,
                c.peak.heap,
                c.overflow_bytes,
                c.stats.shared_accesses,
                c.stats.access_cost(),
                c.peak.code + c.peak.globals,
                c.messages_sent.values().sum::<u64>(),
            );
        }
        let counts: Vec<String> = OpKind::ALL
            .iter()
            .map(|k| format!("{} {}", k.name(), self.messages.get(k).copied().unwrap_or(0)))
            .collect();
        let _ = writeln!(s, "messages: {} ({})", self.total_messages(), counts.join(", "));
        for (core, e) in &self.errors {
            let _ = writeln!(s, "error on core {core}: {e}");
        }
        if let Some(d) = &self.deadlock {
            let _ = writeln!(s, "{d}");
        }
        s
    }
}
