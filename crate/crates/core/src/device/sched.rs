//! The two schedulers. Both detect deadlock by quiescence: every live
//! participant is blocked and the postbox fabric has not changed since
//! each of them last looked at it.

use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use super::bridge::{BridgeCore, BridgeStep};
use super::monitor::Monitor;
use crate::mesh::Fabric;
use crate::vm::{CoreServices, CoreStatus, Interpreter, MonitorCommand, MonitorReply, Step};
use crate::CoreId;

const IDLE_POLL: Duration = Duration::from_millis(1);

fn live(c: &Interpreter) -> bool {
    matches!(c.status(), CoreStatus::Running | CoreStatus::Blocked)
}

struct Direct<'a> {
    fabric: &'a mut Fabric,
    monitor: &'a Monitor,
}

impl CoreServices for Direct<'_> {
    fn fabric<R>(&mut self, f: impl FnOnce(&mut Fabric) -> R) -> R {
        f(self.fabric)
    }

    fn monitor(&mut self, core: CoreId, cmd: MonitorCommand) -> Result<MonitorReply, String> {
        self.monitor.service(core, cmd)
    }
}

/// Round-robin over the cores with a fixed instruction quantum. Returns
/// true if the run ended in deadlock.
pub(crate) fn run_deterministic(
    cores: &mut [Interpreter],
    mut bridge: Option<&mut BridgeCore>,
    fabric: &mut Fabric,
    monitor: &Monitor,
    quantum: u32,
) -> bool {
    let mut svc = Direct { fabric, monitor };
    let mut bridge_done = false;
    loop {
        let epoch = svc.fabric.epoch();
        let mut progress = false;
        for c in cores.iter_mut().filter(|c| live(c)) {
            let before = c.stats().instructions;
            let step = c.run_slice(quantum, &mut svc);
            if step != Step::Blocked || c.stats().instructions != before {
                progress = true;
            }
        }
        let cores_live = cores.iter().any(live);
        let mut idle = false;
        let mut bridge_live = false;
        if let Some(b) = bridge.as_deref_mut().filter(|_| !bridge_done) {
            if !cores_live && !b.has_pending() {
                b.shutdown();
                bridge_done = true;
            } else {
                match b.step(&mut svc) {
                    BridgeStep::Progress => progress = true,
                    BridgeStep::Idle => idle = true,
                    BridgeStep::Blocked => {}
                    BridgeStep::Finished => {
                        progress = true;
                        bridge_done = true;
                    }
                }
                bridge_live = b.has_pending();
            }
        }
        if !cores_live && !bridge_live {
            return false;
        }
        if !progress && svc.fabric.epoch() == epoch {
            if idle {
                // the external client may still act
                std::thread::sleep(IDLE_POLL);
                continue;
            }
            return true;
        }
    }
}

struct State {
    fabric: Fabric,
    /// Participants that have not finished.
    live: usize,
    cores_live: usize,
    /// Fabric epoch each waiting participant last saw, by rank.
    waiting: Vec<Option<u64>>,
    bridge_idle: bool,
    deadlock: bool,
}

impl State {
    /// A waiter that has been notified but not yet rescheduled still holds
    /// an old epoch and does not count as stuck.
    fn check(&mut self, cv: &Condvar) {
        let epoch = self.fabric.epoch();
        let stuck = self.waiting.iter().filter(|w| **w == Some(epoch)).count();
        if self.live > 0 && stuck == self.live && !self.bridge_idle {
            self.deadlock = true;
            cv.notify_all();
        }
    }
}

struct Shared<'m> {
    st: Mutex<State>,
    cv: Condvar,
    monitor: &'m Monitor,
}

impl Shared<'_> {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.st.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Sleeps until the fabric changes from what `seen` describes. False on deadlock.
    fn wait_for_change(&self, rank: usize, seen: u64) -> bool {
        let mut st = self.lock();
        if st.deadlock {
            return false;
        }
        if st.fabric.epoch() != seen {
            return true;
        }
        st.waiting[rank] = Some(seen);
        loop {
            st.check(&self.cv);
            if st.deadlock {
                return false;
            }
            st = self.cv.wait(st).unwrap_or_else(|p| p.into_inner());
            if st.fabric.epoch() != seen {
                st.waiting[rank] = None;
                return true;
            }
        }
    }

    fn finish(&self, core: bool) {
        let mut st = self.lock();
        st.live -= 1;
        if core {
            st.cores_live -= 1;
        }
        st.check(&self.cv);
        self.cv.notify_all();
    }

    fn set_bridge_idle(&self, idle: bool) {
        let mut st = self.lock();
        if st.bridge_idle != idle {
            st.bridge_idle = idle;
            if !idle {
                st.check(&self.cv);
            }
        }
    }
}

struct Threaded<'a, 'm> {
    shared: &'a Shared<'m>,
    seen: u64,
}

impl CoreServices for Threaded<'_, '_> {
    fn fabric<R>(&mut self, f: impl FnOnce(&mut Fabric) -> R) -> R {
        let mut st = self.shared.lock();
        let before = st.fabric.epoch();
        let r = f(&mut st.fabric);
        self.seen = st.fabric.epoch();
        if self.seen != before {
            self.shared.cv.notify_all();
        }
        r
    }

    fn monitor(&mut self, core: CoreId, cmd: MonitorCommand) -> Result<MonitorReply, String> {
        self.shared.monitor.service(core, cmd)
    }
}

/// One OS thread per core (and one for the bridge). Returns the fabric
/// and whether the run ended in deadlock.
pub(crate) fn run_threaded(
    cores: &mut [Interpreter],
    bridge: Option<&mut BridgeCore>,
    fabric: Fabric,
    monitor: &Monitor,
    quantum: u32,
) -> (Fabric, bool) {
    let n = cores.len();
    let shared = Shared {
        st: Mutex::new(State {
            fabric,
            live: n + bridge.is_some() as usize,
            cores_live: n,
            waiting: vec![None; n + 1],
            bridge_idle: false,
            deadlock: false,
        }),
        cv: Condvar::new(),
        monitor,
    };
    std::thread::scope(|scope| {
        for (rank, core) in cores.iter_mut().enumerate() {
            let shared = &shared;
            scope.spawn(move || {
                let mut svc = Threaded { shared, seen: 0 };
                loop {
                    match core.run_slice(quantum, &mut svc) {
                        Step::Ran => {}
                        Step::Finished | Step::Failed => {
                            shared.finish(true);
                            return;
                        }
                        Step::Blocked => {
                            if !shared.wait_for_change(rank, svc.seen) {
                                return;
                            }
                        }
                    }
                }
            });
        }
        if let Some(b) = bridge {
            let shared = &shared;
            scope.spawn(move || {
                let mut svc = Threaded { shared, seen: 0 };
                loop {
                    let (deadlock, cores_live) = {
                        let st = shared.lock();
                        (st.deadlock, st.cores_live)
                    };
                    if deadlock {
                        return;
                    }
                    if cores_live == 0 && !b.has_pending() {
                        b.shutdown();
                        shared.set_bridge_idle(false);
                        shared.finish(false);
                        return;
                    }
                    match b.step(&mut svc) {
                        BridgeStep::Progress => shared.set_bridge_idle(false),
                        BridgeStep::Idle => {
                            shared.set_bridge_idle(true);
                            std::thread::sleep(IDLE_POLL);
                        }
                        BridgeStep::Blocked => {
                            shared.set_bridge_idle(false);
                            if !shared.wait_for_change(n, svc.seen) {
                                return;
                            }
                        }
                        BridgeStep::Finished => {
                            shared.set_bridge_idle(false);
                            shared.finish(false);
                            return;
                        }
                    }
                }
            });
        }
    });
    let st = shared.st.into_inner().unwrap_or_else(|p| p.into_inner());
    (st.fabric, st.deadlock)
}
