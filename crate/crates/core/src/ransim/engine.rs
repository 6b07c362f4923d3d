//! Deterministic event loop for one cell.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{Arrival, Behavior, ConfigError, ScenarioConfig};
use super::gnb::GnbModel;
use super::radio::sample_fingerprint;
use super::trace::{EntryState, EventTrace, TraceEvent, TraceEventKind, TraceMeta, WindowSummary};
use crate::mitigator::{BlockEntry, BlockList, ScreenDecision};
use crate::model::{Centroid, Fingerprint, ObservedFingerprint, SimTime, WindowKpm};
use crate::xapp::{ControlLoop, InProcessXapp};

/// Paces the event loop against an external clock. Returning `false` stops
/// the run early and marks the trace incomplete.
pub trait Pacer {
    fn wait_until(&mut self, t: SimTime) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: EventTrace,
    pub final_blocklist: Vec<BlockEntry>,
}

/// Run with the in-process detector when mitigation is enabled.
pub fn run_scenario(config: &ScenarioConfig) -> Result<EventTrace, ConfigError> {
    Ok(run_scenario_full(config)?.trace)
}

pub fn run_scenario_full(config: &ScenarioConfig) -> Result<SimOutput, ConfigError> {
    let mut xapp = InProcessXapp::new(config.params);
    let control: Option<&mut dyn ControlLoop> = if config.mitigation.enabled {
        Some(&mut xapp)
    } else {
        None
    };
    run_with(config, control, None)
}

/// Run with an arbitrary control loop (or none) and optional pacing.
pub fn run_with<'a>(
    config: &'a ScenarioConfig,
    control: Option<&'a mut dyn ControlLoop>,
    pacer: Option<&mut dyn Pacer>,
) -> Result<SimOutput, ConfigError> {
    config.validate()?;
    let mut sim = Sim::new(config, control);
    let complete = sim.run(pacer);
    let windows = std::mem::take(&mut sim.windows);
    Ok(SimOutput {
        final_blocklist: sim.blocklist.entries().to_vec(),
        trace: EventTrace {
            meta: TraceMeta {
                scenario: config.name.clone(),
                seed: config.seed,
                duration_ms: config.duration_ms,
                complete,
            },
            events: sim.events,
            windows,
        },
    })
}

#[derive(Debug, Clone)]
enum Ev {
    WindowClose(u64),
    ControlApply { window_id: u64, centroids: Vec<Centroid> },
    EntryExpiry,
    Attach { ue: usize },
    MaliciousNext { ue: usize, index: u64, origin: f64, at: f64 },
    Msg2(u64),
    Msg3(u64),
    Msg4(u64),
    Msg5(u64),
    HoldTimeout(u64),
    T300(u64),
}

impl Ev {
    /// Same-millisecond ordering: windows close first so that events at a
    /// window boundary fall into the next window, and controls apply before
    /// attempts arriving in the same millisecond are screened.
    fn priority(&self) -> u8 {
        match self {
            Ev::WindowClose(_) => 0,
            Ev::ControlApply { .. } => 1,
            Ev::EntryExpiry => 2,
            _ => 3,
        }
    }
}

struct Scheduled {
    at: SimTime,
    priority: u8,
    seq: u64,
    ev: Ev,
}

impl Scheduled {
    fn key(&self) -> (SimTime, u8, u64) {
        (self.at, self.priority, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct Attempt {
    ue: usize,
    malicious: bool,
    rnti: u16,
    rejected: bool,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    control: Option<&'a mut dyn ControlLoop>,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    now: SimTime,
    gnb: GnbModel,
    blocklist: BlockList,
    attempts: Vec<Attempt>,
    next_rnti: u16,
    window: WindowKpm,
    events: Vec<TraceEvent>,
    windows: Vec<WindowSummary>,
}

const RNTI_FIRST: u16 = 0x4601;
const RNTI_LAST: u16 = 0xFFEF;

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, control: Option<&'a mut dyn ControlLoop>) -> Self {
        let mut sim = Sim {
            cfg,
            control,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            queue: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            gnb: GnbModel::new(cfg.gnb.position, cfg.gnb.max_ue, cfg.gnb.context_hold_ms),
            blocklist: BlockList::new(),
            attempts: Vec::new(),
            next_rnti: RNTI_FIRST,
            window: WindowKpm::empty(1, SimTime::ZERO),
            events: Vec::new(),
            windows: Vec::new(),
        };

        for (i, ue) in cfg.ues.iter().enumerate() {
            match &ue.behavior {
                Behavior::Benign { attach_ms, attach_jitter_ms, .. } => {
                    for &t in attach_ms {
                        let jitter = sim.draw_below(*attach_jitter_ms);
                        sim.schedule(SimTime(t + jitter), Ev::Attach { ue: i });
                    }
                }
                Behavior::Malicious { start_ms, start_jitter_ms, .. } => {
                    let t0 = start_ms + sim.draw_below(*start_jitter_ms);
                    let origin = t0 as f64;
                    sim.schedule(SimTime(t0), Ev::MaliciousNext { ue: i, index: 0, origin, at: origin });
                }
            }
        }
        let w = cfg.params.window_ms;
        if w <= cfg.duration_ms {
            sim.schedule(SimTime(w), Ev::WindowClose(1));
        }
        sim
    }

    fn draw_below(&mut self, bound: u64) -> u64 {
        if bound == 0 {
            0
        } else {
            self.rng.gen_range(0..bound)
        }
    }

    fn schedule(&mut self, at: SimTime, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { at, priority: ev.priority(), seq, ev });
    }

    fn log(&mut self, kind: TraceEventKind) {
        self.events.push(TraceEvent { t: self.now, kind });
    }

    /// Returns whether the run reached its configured duration.
    fn run(&mut self, mut pacer: Option<&mut dyn Pacer>) -> bool {
        let end = SimTime(self.cfg.duration_ms);
        while let Some(next) = self.queue.pop() {
            if next.at > end {
                break;
            }
            if let Some(p) = pacer.as_deref_mut() {
                if !p.wait_until(next.at) {
                    return false;
                }
            }
            self.now = next.at;
            self.dispatch(next.ev);
            debug_assert!(self.gnb.is_conserved());
            debug_assert!(self.gnb.live_contexts() <= self.gnb.max_ue);
        }
        true
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::WindowClose(id) => self.close_window(id),
            Ev::ControlApply { window_id, centroids } => self.apply_control(window_id, &centroids),
            Ev::EntryExpiry => self.expire_entries(),
            Ev::Attach { ue } => self.start_attempt(ue),
            Ev::MaliciousNext { ue, index, origin, at } => self.malicious_tick(ue, index, origin, at),
            Ev::Msg2(a) => self.on_msg2(a),
            Ev::Msg3(a) => self.on_msg3(a),
            Ev::Msg4(a) => self.on_msg4(a),
            Ev::Msg5(a) => self.on_msg5(a),
            Ev::HoldTimeout(a) => {
                if self.gnb.time_out(a).is_ok() {
                    let ue = self.ue_id(a);
                    self.log(TraceEventKind::HoldExpired { attempt: a, ue });
                }
            }
            Ev::T300(a) => {
                let ue = self.ue_id(a);
                self.log(TraceEventKind::T300Expired { attempt: a, ue });
            }
        }
    }

    fn ue_id(&self, attempt: u64) -> u32 {
        self.cfg.ues[self.attempts[attempt as usize].ue].id
    }

    fn fresh_rnti(&mut self) -> u16 {
        let r = self.next_rnti;
        self.next_rnti = if r >= RNTI_LAST { RNTI_FIRST } else { r + 1 };
        r
    }

    fn start_attempt(&mut self, ue: usize) {
        let id = self.attempts.len() as u64;
        let malicious = self.cfg.ues[ue].is_malicious();
        self.attempts.push(Attempt { ue, malicious, rnti: 0, rejected: false });
        let ue_id = self.cfg.ues[ue].id;
        self.log(TraceEventKind::Msg1 { attempt: id, ue: ue_id });
        self.schedule(self.now + self.cfg.timing.msg1_to_msg2_ms, Ev::Msg2(id));
    }

    fn malicious_tick(&mut self, ue: usize, index: u64, origin: f64, at: f64) {
        self.start_attempt(ue);
        let cfg = self.cfg;
        let Behavior::Malicious { msg3_rate_hz, stop_ms, arrival, .. } = &cfg.ues[ue].behavior else {
            unreachable!("malicious tick for a benign UE");
        };
        let next_at = match arrival {
            Arrival::Deterministic => origin + (index + 1) as f64 * 1000.0 / msg3_rate_hz,
            Arrival::Poisson => {
                let gap = Exp::new(msg3_rate_hz / 1000.0).expect("rate validated").sample(&mut self.rng);
                at + gap
            }
        };
        let next_ms = next_at.floor() as u64;
        let stop = stop_ms.unwrap_or(u64::MAX).min(cfg.duration_ms + 1);
        if next_ms < stop {
            self.schedule(SimTime(next_ms), Ev::MaliciousNext { ue, index: index + 1, origin, at: next_at });
        }
    }

    fn on_msg2(&mut self, attempt: u64) {
        let rnti = self.fresh_rnti();
        self.attempts[attempt as usize].rnti = rnti;
        self.log(TraceEventKind::Msg2 { attempt, rnti });
        self.schedule(self.now + self.cfg.timing.msg2_to_msg3_ms, Ev::Msg3(attempt));
    }

    fn on_msg3(&mut self, attempt: u64) {
        let cfg = self.cfg;
        let profile = &cfg.ues[self.attempts[attempt as usize].ue];
        let ue = profile.id;
        let fp: Fingerprint = sample_fingerprint(&cfg.radio, profile, cfg.gnb.position, self.now, &mut self.rng);
        self.window.n3 += 1;
        self.window.fingerprints.push(ObservedFingerprint { time: self.now, fingerprint: fp, attempt_id: attempt });
        self.log(TraceEventKind::Msg3 { attempt, ue, ta: fp.ta, rssi: fp.rssi });

        let rnti = self.attempts[attempt as usize].rnti;
        if self.gnb.allocate(attempt, rnti, fp, self.now).is_err() {
            let live = self.gnb.live_contexts();
            self.log(TraceEventKind::AllocationFailed { attempt, ue, live });
            // Out of contexts: the gNB answers with RRC Reject.
            self.attempts[attempt as usize].rejected = true;
            self.schedule(self.now + self.cfg.timing.msg3_to_msg4_ms, Ev::Msg4(attempt));
            if !self.attempts[attempt as usize].malicious {
                self.schedule(self.now + self.cfg.timing.t300_ms, Ev::T300(attempt));
            }
            return;
        }
        let live = self.gnb.live_contexts();
        self.log(TraceEventKind::ContextAllocated { attempt, rnti, live });
        self.schedule(self.now + self.gnb.context_hold_ms, Ev::HoldTimeout(attempt));

        self.expire_entries();
        if let ScreenDecision::Reject { entry_id, .. } =
            self.blocklist.screen_attempt(&fp, self.now, &self.cfg.params)
        {
            self.gnb
                .enforce_rejection(attempt)
                .expect("context was allocated just above");
            self.attempts[attempt as usize].rejected = true;
            self.log(TraceEventKind::Rejected { attempt, ue, entry_id });
        }
        self.schedule(self.now + self.cfg.timing.msg3_to_msg4_ms, Ev::Msg4(attempt));
    }

    fn on_msg4(&mut self, attempt: u64) {
        let a = &self.attempts[attempt as usize];
        let setup = !a.rejected;
        let answers = setup && !a.malicious;
        let ue = a.ue;
        self.window.n4 += 1;
        self.log(TraceEventKind::Msg4 { attempt, setup });
        if answers {
            let Behavior::Benign { msg5_delay_ms: [lo, hi], .. } = self.cfg.ues[ue].behavior else {
                unreachable!("only benign UEs answer MSG4");
            };
            let delay = self.rng.gen_range(lo..=hi);
            self.schedule(self.now + delay, Ev::Msg5(attempt));
        }
    }

    fn on_msg5(&mut self, attempt: u64) {
        if self.gnb.complete(attempt).is_ok() {
            self.window.n5 += 1;
            let ue = self.ue_id(attempt);
            self.log(TraceEventKind::Msg5 { attempt, ue });
        }
    }

    fn expire_entries(&mut self) {
        for e in self.blocklist.expire(self.now) {
            self.log(TraceEventKind::EntryExpired { entry: EntryState::from(&e) });
        }
    }

    fn close_window(&mut self, window_id: u64) {
        let next_start = self.now;
        let kpm = std::mem::replace(&mut self.window, WindowKpm::empty(window_id + 1, next_start));
        let live = self.gnb.live_contexts();
        self.log(TraceEventKind::Window {
            window_id,
            start: kpm.window_start,
            n3: kpm.n3,
            n4: kpm.n4,
            n5: kpm.n5,
            live,
        });
        self.expire_entries();

        let mut summary = WindowSummary {
            window_id,
            start_ms: kpm.window_start.as_ms(),
            end_ms: self.now.as_ms(),
            n3: kpm.n3,
            n4: kpm.n4,
            n5: kpm.n5,
            live_contexts: live,
            blocklist_size: self.blocklist.len(),
            verdict: None,
            reason: None,
            r1: None,
            r2: None,
        };

        if let Some(control) = self.control.as_deref_mut() {
            match control.on_indication(&kpm) {
                Ok(None) => {}
                Ok(Some(reply)) => {
                    let v = reply.verdict;
                    summary.verdict = Some(v.kind);
                    summary.reason = Some(v.reason);
                    summary.r1 = Some(v.r1);
                    summary.r2 = Some(v.r2);
                    self.log(TraceEventKind::Verdict {
                        window_id,
                        kind: v.kind,
                        reason: v.reason,
                        r1: v.r1,
                        r2: v.r2,
                        centroids: reply.centroids.clone(),
                    });
                    if !reply.centroids.is_empty() {
                        let at = self.now + self.cfg.mitigation.loop_delay_ms;
                        self.schedule(at, Ev::ControlApply { window_id, centroids: reply.centroids });
                    }
                }
                Err(e) => self.degrade(e.to_string()),
            }
        }
        self.windows.push(summary);

        let next = self.now + self.cfg.params.window_ms;
        if next.as_ms() <= self.cfg.duration_ms {
            self.schedule(next, Ev::WindowClose(window_id + 1));
        }
    }

    fn degrade(&mut self, reason: String) {
        tracing::warn!(%reason, "control loop lost, continuing without mitigation updates");
        self.control = None;
        self.log(TraceEventKind::LoopDegraded { reason });
    }

    fn apply_control(&mut self, window_id: u64, centroids: &[Centroid]) {
        self.expire_entries();
        let report = self.blocklist.absorb_fingerprints(centroids, self.now, &self.cfg.params);
        let mut touched: Vec<SimTime> = Vec::new();
        for id in report.inserted.iter().chain(&report.reinforced) {
            if let Some(e) = self.blocklist.get(*id) {
                touched.push(e.expires_at());
            }
        }
        let entries = self.blocklist.entries().iter().map(EntryState::from).collect();
        self.log(TraceEventKind::ControlApplied {
            window_id,
            inserted: report.inserted,
            reinforced: report.reinforced,
            entries,
        });
        touched.sort();
        touched.dedup();
        for at in touched {
            self.schedule(at, Ev::EntryExpiry);
        }
        let size = self.blocklist.len();
        if let Some(control) = self.control.as_deref_mut() {
            if let Err(e) = control.on_control_applied(window_id, size) {
                self.degrade(e.to_string());
            }
        }
    }
}
