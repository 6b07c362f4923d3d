//! Simulation event trace and its JSON-lines / CSV exports.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::mitigator::BlockEntry;
use crate::model::{Centroid, SimTime, VerdictKind, VerdictReason};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryState {
    pub id: u64,
    pub match_count: u32,
    pub timeout_ms: u64,
    pub last_match: SimTime,
}

impl From<&BlockEntry> for EntryState {
    fn from(e: &BlockEntry) -> Self {
        EntryState {
            id: e.id,
            match_count: e.match_count,
            timeout_ms: e.timeout_ms,
            last_match: e.last_match,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEventKind {
    Msg1 { attempt: u64, ue: u32 },
    Msg2 { attempt: u64, rnti: u16 },
    Msg3 { attempt: u64, ue: u32, ta: u32, rssi: f64 },
    ContextAllocated { attempt: u64, rnti: u16, live: usize },
    AllocationFailed { attempt: u64, ue: u32, live: usize },
    Rejected { attempt: u64, ue: u32, entry_id: u64 },
    /// RRC Setup (`setup = true`) or RRC Reject.
    Msg4 { attempt: u64, setup: bool },
    Msg5 { attempt: u64, ue: u32 },
    HoldExpired { attempt: u64, ue: u32 },
    T300Expired { attempt: u64, ue: u32 },
    Window { window_id: u64, start: SimTime, n3: u32, n4: u32, n5: u32, live: usize },
    Verdict {
        window_id: u64,
        kind: VerdictKind,
        reason: VerdictReason,
        r1: f64,
        r2: f64,
        centroids: Vec<Centroid>,
    },
    ControlApplied {
        window_id: u64,
        inserted: Vec<u64>,
        reinforced: Vec<u64>,
        entries: Vec<EntryState>,
    },
    EntryExpired { entry: EntryState },
    LoopDegraded { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: SimTime,
    #[serde(flatten)]
    pub kind: TraceEventKind,
}

/// One row of `windows.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_id: u64,
    pub start_ms: u64,
    pub end_ms: u64,
    pub n3: u32,
    pub n4: u32,
    pub n5: u32,
    pub live_contexts: usize,
    pub blocklist_size: usize,
    pub verdict: Option<VerdictKind>,
    pub reason: Option<VerdictReason>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
    pub windows: Vec<WindowSummary>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: TraceMeta,
}

impl EventTrace {
    pub fn is_complete(&self) -> bool {
        self.meta.complete
    }

    pub fn iter_kind(&self) -> impl Iterator<Item = (SimTime, &TraceEventKind)> {
        self.events.iter().map(|e| (e.t, &e.kind))
    }

    /// Verdicts in window order.
    pub fn verdicts(&self) -> impl Iterator<Item = (SimTime, u64, VerdictKind)> + '_ {
        self.iter_kind().filter_map(|(t, k)| match k {
            TraceEventKind::Verdict { window_id, kind, .. } => Some((t, *window_id, *kind)),
            _ => None,
        })
    }

    /// A metadata line followed by one event per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &MetaLine { meta: self.meta.clone() })?;
        out.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parse a trace written by [`write_jsonl`](Self::write_jsonl). Window
    /// summaries are not part of the JSON-lines form and come back empty.
    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<EventTrace> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "empty trace"))??;
        let meta: MetaLine = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(EventTrace { meta: meta.meta, events, windows: Vec::new() })
    }

    pub fn write_windows_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.windows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
