use std::sync::Arc;

use thiserror::Error;

use super::memory::Location;
use super::value::{Handle, Value};
use crate::device::shared::SharedRegion;

/// Object header: kind, length and location.
pub const OBJECT_HEADER: usize = 8;
/// A list element is stored as a type byte plus a 4-byte word.
pub const ELEMENT_BYTES: usize = 5;

pub fn list_bytes(len: usize) -> usize {
    OBJECT_HEADER + ELEMENT_BYTES * len
}

pub fn str_bytes(len: usize) -> usize {
    OBJECT_HEADER + len
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("heap exhausted: {requested} bytes requested, {local_free} free locally and {shared_free} in shared memory")]
pub struct HeapExhausted {
    pub requested: usize,
    pub local_free: usize,
    pub shared_free: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectData {
    List(Vec<Value>),
    Str(Box<[u8]>),
}

#[derive(Debug, Clone)]
pub struct HeapObject {
    pub data: ObjectData,
    pub bytes: usize,
    pub location: Location,
}

/// Where overflowing objects go.
#[derive(Debug, Clone)]
struct Overflow {
    region: Arc<SharedRegion>,
    owner: usize,
}

/// Per-core heap. Objects are placed locally while the local budget allows
/// and otherwise spill into a reservation in the shared region. A spilled
/// object stays in shared memory for the rest of the run.
#[derive(Debug)]
pub struct Heap {
    objects: Vec<HeapObject>,
    budget: usize,
    local_used: usize,
    local_peak: usize,
    shared_used: usize,
    overflow_bytes: usize,
    overflow_objects: usize,
    overflow: Option<Overflow>,
    /// All objects go straight to shared memory.
    all_shared: bool,
}

impl Heap {
    /// A heap with no size limit, for host-side evaluation and tests.
    pub fn unbounded() -> Heap {
        Heap::new(usize::MAX / 2, None, false)
    }

    /// A heap with `budget` local bytes spilling into `region` on behalf of core `owner`.
    pub fn with_overflow(budget: usize, region: Arc<SharedRegion>, owner: usize, all_shared: bool) -> Heap {
        Heap::new(budget, Some(Overflow { region, owner }), all_shared)
    }

    fn new(budget: usize, overflow: Option<Overflow>, all_shared: bool) -> Heap {
        Heap {
            objects: Vec::new(),
            budget,
            local_used: 0,
            local_peak: 0,
            shared_used: 0,
            overflow_bytes: 0,
            overflow_objects: 0,
            overflow,
            all_shared,
        }
    }

    fn local_free(&self) -> usize {
        self.budget.saturating_sub(self.local_used)
    }

    fn shared_free(&self) -> usize {
        self.overflow.as_ref().map_or(0, |o| o.region.available())
    }

    fn take_local(&mut self, bytes: usize) -> bool {
        if self.all_shared || bytes > self.local_free() {
            return false;
        }
        self.local_used += bytes;
        self.local_peak = self.local_peak.max(self.local_used);
        true
    }

    fn take_shared(&mut self, bytes: usize) -> Result<(), HeapExhausted> {
        let exhausted = HeapExhausted { requested: bytes, local_free: self.local_free(), shared_free: self.shared_free() };
        let Some(o) = &self.overflow else { return Err(exhausted) };
        o.region.reserve(o.owner, bytes).map_err(|_| exhausted)?;
        self.shared_used += bytes;
        if !self.all_shared {
            self.overflow_bytes += bytes;
        }
        Ok(())
    }

    fn place(&mut self, bytes: usize) -> Result<Location, HeapExhausted> {
        if self.take_local(bytes) {
            return Ok(Location::Local);
        }
        self.take_shared(bytes)?;
        if !self.all_shared {
            self.overflow_objects += 1;
        }
        Ok(Location::Shared)
    }

    fn alloc(&mut self, data: ObjectData, bytes: usize) -> Result<Handle, HeapExhausted> {
        let location = self.place(bytes)?;
        let h = Handle(self.objects.len() as u32);
        self.objects.push(HeapObject { data, bytes, location });
        Ok(h)
    }

    pub fn alloc_list(&mut self, items: Vec<Value>) -> Result<Handle, HeapExhausted> {
        let bytes = list_bytes(items.len());
        self.alloc(ObjectData::List(items), bytes)
    }

    pub fn alloc_str(&mut self, bytes: impl Into<Box<[u8]>>) -> Result<Handle, HeapExhausted> {
        let s: Box<[u8]> = bytes.into();
        let n = str_bytes(s.len());
        self.alloc(ObjectData::Str(s), n)
    }

    pub fn get(&self, h: Handle) -> &HeapObject {
        &self.objects[h.index()]
    }

    pub fn list(&self, h: Handle) -> &[Value] {
        match &self.objects[h.index()].data {
            ObjectData::List(v) => v,
            ObjectData::Str(_) => unreachable!("handle kind is carried by the value tag"),
        }
    }

    pub fn list_mut(&mut self, h: Handle) -> &mut Vec<Value> {
        match &mut self.objects[h.index()].data {
            ObjectData::List(v) => v,
            ObjectData::Str(_) => unreachable!("handle kind is carried by the value tag"),
        }
    }

    pub fn str(&self, h: Handle) -> &[u8] {
        match &self.objects[h.index()].data {
            ObjectData::Str(s) => s,
            ObjectData::List(_) => unreachable!("handle kind is carried by the value tag"),
        }
    }

    pub fn location(&self, h: Handle) -> Location {
        self.objects[h.index()].location
    }

    /// Appends to a list, moving it to shared memory if it no longer fits locally.
    pub fn push(&mut self, h: Handle, v: Value) -> Result<(), HeapExhausted> {
        let obj = &self.objects[h.index()];
        let (old, loc) = (obj.bytes, obj.location);
        let new = old + ELEMENT_BYTES;
        match loc {
            Location::Local => {
                if !self.take_local(ELEMENT_BYTES) {
                    self.take_shared(new)?;
                    self.local_used -= old;
                    self.overflow_objects += 1;
                    self.objects[h.index()].location = Location::Shared;
                }
            }
            Location::Shared => self.take_shared(ELEMENT_BYTES)?,
        }
        let obj = &mut self.objects[h.index()];
        obj.bytes = new;
        match &mut obj.data {
            ObjectData::List(items) => items.push(v),
            ObjectData::Str(_) => unreachable!("append on a string is rejected by the caller"),
        }
        Ok(())
    }

    /// Bytes of core-local heap in use.
    pub fn local_used(&self) -> usize {
        self.local_used
    }

    pub fn local_peak(&self) -> usize {
        self.local_peak
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Bytes held in shared memory, whether by placement or by overflow.
    pub fn shared_used(&self) -> usize {
        self.shared_used
    }

    /// Bytes that spilled to shared memory because the local heap was full.
    pub fn overflow_bytes(&self) -> usize {
        self.overflow_bytes
    }

    pub fn overflow_objects(&self) -> usize {
        self.overflow_objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

impl Drop for Heap {
    fn drop(&mut self) {
        if let Some(o) = &self.overflow {
            if self.shared_used > 0 {
                o.region.release(o.owner, self.shared_used);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> Arc<SharedRegion> {
        Arc::new(SharedRegion::new(1))
    }

    #[test]
    fn spills_when_local_budget_is_full() {
        let r = region();
        let mut h = Heap::with_overflow(100, r.clone(), 0, false);
        let small = h.alloc_list(vec![Value::Int(0); 10]).unwrap();
        assert_eq!(h.location(small), Location::Local);
        assert_eq!(h.local_used(), 58);
        let big = h.alloc_list(vec![Value::Int(0); 10]).unwrap();
        assert_eq!(h.location(big), Location::Shared);
        assert_eq!(h.overflow_bytes(), 58);
        assert_eq!(r.reserved_by(0), 58);
        assert!(h.local_used() <= h.budget());
        drop(h);
        assert_eq!(r.reserved_by(0), 0);
    }

    #[test]
    fn growing_list_migrates_once_and_stays_shared() {
        let r = region();
        let mut h = Heap::with_overflow(20, r.clone(), 0, false);
        let l = h.alloc_list(vec![]).unwrap();
        for i in 0..2 {
            h.push(l, Value::Int(i)).unwrap();
        }
        assert_eq!(h.location(l), Location::Local);
        assert_eq!(h.local_used(), 18);
        h.push(l, Value::Int(2)).unwrap();
        assert_eq!(h.location(l), Location::Shared);
        assert_eq!(h.local_used(), 0);
        assert_eq!(r.reserved_by(0), list_bytes(3));
        h.push(l, Value::Int(3)).unwrap();
        assert_eq!(h.location(l), Location::Shared);
        assert_eq!(h.list(l).len(), 4);
        assert_eq!(r.reserved_by(0), list_bytes(4));
    }

    #[test]
    fn exhaustion_without_overflow() {
        let mut h = Heap::new(10, None, false);
        let e = h.alloc_str(vec![b'x'; 5]).unwrap_err();
        assert_eq!(e.requested, 13);
        assert_eq!(e.local_free, 10);
    }
}
