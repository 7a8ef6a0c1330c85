use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

/// Size of the host RAM window shared with the device.
pub const SHARED_BYTES: usize = 32 * 1024 * 1024;
/// Bytes set aside for the monitor's command and data area.
pub const MONITOR_AREA: usize = 64 * 1024;
/// Bytes set aside for the host bridge's buffers.
pub const BRIDGE_AREA: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shared memory exhausted: {requested} bytes requested, {available} free")]
pub struct SharedExhausted {
    pub requested: usize,
    pub available: usize,
}

/// The 32 MiB shared window: fixed monitor and bridge areas, a staging
/// area for the program image, and per-core overflow reservations made on
/// demand.
#[derive(Debug)]
pub struct SharedRegion {
    capacity: usize,
    fixed: usize,
    used: AtomicUsize,
    per_core: Vec<AtomicUsize>,
    peak: Vec<AtomicUsize>,
}

impl SharedRegion {
    pub fn new(cores: usize) -> SharedRegion {
        Self::with_capacity(cores, SHARED_BYTES)
    }

    pub fn with_capacity(cores: usize, capacity: usize) -> SharedRegion {
        let fixed = (MONITOR_AREA + BRIDGE_AREA).min(capacity);
        SharedRegion {
            capacity,
            fixed,
            used: AtomicUsize::new(fixed),
            per_core: (0..cores).map(|_| AtomicUsize::new(0)).collect(),
            peak: (0..cores).map(|_| AtomicUsize::new(0)).collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Bytes in use, including the fixed areas.
    pub fn used(&self) -> usize {
        self.used.load(Ordering::Acquire)
    }

    pub fn available(&self) -> usize {
        self.capacity - self.used()
    }

    fn take(&self, bytes: usize) -> Result<(), SharedExhausted> {
        self.used
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| {
                u.checked_add(bytes).filter(|&n| n <= self.capacity)
            })
            .map(|_| ())
            .map_err(|u| SharedExhausted { requested: bytes, available: self.capacity - u })
    }

    /// Space for something every core shares, such as the staged image.
    pub fn reserve_common(&self, bytes: usize) -> Result<(), SharedExhausted> {
        self.take(bytes)
    }

    pub fn reserve(&self, core: usize, bytes: usize) -> Result<(), SharedExhausted> {
        self.take(bytes)?;
        let now = self.per_core[core].fetch_add(bytes, Ordering::AcqRel) + bytes;
        self.peak[core].fetch_max(now, Ordering::AcqRel);
        Ok(())
    }

    pub fn release(&self, core: usize, bytes: usize) {
        self.per_core[core].fetch_sub(bytes, Ordering::AcqRel);
        self.used.fetch_sub(bytes, Ordering::AcqRel);
    }

    /// Current overflow reservation of `core`.
    pub fn reserved_by(&self, core: usize) -> usize {
        self.per_core[core].load(Ordering::Acquire)
    }

    pub fn peak_of(&self, core: usize) -> usize {
        self.peak[core].load(Ordering::Acquire)
    }

    /// Fixed monitor and bridge areas.
    pub fn fixed_areas(&self) -> usize {
        self.fixed
    }
}
