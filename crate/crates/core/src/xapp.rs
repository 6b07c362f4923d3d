//! Closed-loop control between the simulated gNB and the detection xApp.
//!
//! The simulator hands every closed window to a [`ControlLoop`] and gets back
//! the verdict plus the centroids to block. [`InProcessXapp`] runs the
//! detector directly; the e2lite transport provides a networked
//! implementation with the same contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Detector, DetectorError};
use crate::model::{AlgorithmParams, Centroid, DetectionVerdict, VerdictKind, WindowKpm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReply {
    pub window_id: u64,
    pub verdict: DetectionVerdict,
    /// Centroids for the mitigator; empty unless an attack was detected.
    pub centroids: Vec<Centroid>,
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("xApp disconnected: {0}")]
    Disconnected(String),
    #[error("no control for window {0} before the deadline")]
    Timeout(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

pub trait ControlLoop {
    /// Deliver a closed window and wait for the xApp's decision on it.
    /// `None` means nobody is subscribed and the window is not reported.
    fn on_indication(&mut self, kpm: &WindowKpm) -> Result<Option<ControlReply>, LoopError>;

    /// Called once the centroids of `window_id` have been absorbed.
    fn on_control_applied(&mut self, _window_id: u64, _blocklist_size: usize) -> Result<(), LoopError> {
        Ok(())
    }
}

/// Detection side of the loop: one detector per cell.
#[derive(Debug, Clone)]
pub struct XappLogic {
    detector: Detector,
}

impl XappLogic {
    pub fn new(params: AlgorithmParams) -> Self {
        XappLogic { detector: Detector::new(params) }
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn handle(&mut self, kpm: &WindowKpm) -> Result<ControlReply, DetectorError> {
        let verdict = self.detector.ingest_window(kpm)?;
        let centroids = match verdict.kind {
            VerdictKind::AttackDetected => verdict.malicious_centroids.clone(),
            _ => Vec::new(),
        };
        Ok(ControlReply { window_id: kpm.window_id, verdict, centroids })
    }
}

#[derive(Debug, Clone)]
pub struct InProcessXapp {
    logic: XappLogic,
}

impl InProcessXapp {
    pub fn new(params: AlgorithmParams) -> Self {
        InProcessXapp { logic: XappLogic::new(params) }
    }

    pub fn logic(&self) -> &XappLogic {
        &self.logic
    }
}

impl ControlLoop for InProcessXapp {
    fn on_indication(&mut self, kpm: &WindowKpm) -> Result<Option<ControlReply>, LoopError> {
        Ok(Some(self.logic.handle(kpm)?))
    }
}
