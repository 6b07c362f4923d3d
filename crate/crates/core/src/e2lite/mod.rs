//! A small framed protocol carrying window reports from the simulated gNB
//! to the detection xApp and blocklist controls back.
//!
//! Message flow per cell: the xApp sends Subscribe, the gNB answers
//! SubscribeAck and from then on sends one Indication per closed window.
//! The xApp answers every Indication with a Control (possibly with no
//! centroids); the gNB acknowledges applied, non-empty Controls with a
//! ControlAck carrying the blocklist size. Heartbeats flow both ways on
//! cell 0.

pub mod codec;
mod session;

pub use codec::{
    decode, encode, Body, CodecError, ControlAckBody, ControlBody, E2Message, ErrorBody, ErrorCode, MsgType,
    SubscribeBody, MAX_FRAME_LEN, PROTOCOL_VERSION,
};
pub use session::{E2Error, GnbEndpoint, LinkConfig, RemoteXapp, XappClient, XappEvent, XappStats, LINK_CELL};
