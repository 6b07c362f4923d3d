//! Runs a scenario with the xApp on the far side of a loopback TCP link.

use std::net::TcpListener;
use std::sync::atomic::AtomicBool;
use std::thread;
use std::time::Duration;

use crate::e2lite::{E2Error, GnbEndpoint, LinkConfig, XappClient, XappEvent};
use crate::ransim::{run_with, ConfigError, ScenarioConfig, SimOutput};

#[derive(Debug, thiserror::Error)]
pub enum LoopbackError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    E2(#[from] E2Error),
    #[error("xApp never subscribed")]
    NoSubscription,
}

pub struct LoopbackRun {
    pub output: SimOutput,
    pub xapp_events: Vec<XappEvent>,
}

const SUBSCRIBE_TIMEOUT: Duration = Duration::from_secs(5);

pub fn run_over_loopback(config: &ScenarioConfig) -> Result<LoopbackRun, LoopbackError> {
    config.validate()?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let (cell, params) = (config.cell_id, config.params);

    let xapp = thread::spawn(move || -> Result<Vec<XappEvent>, E2Error> {
        let mut client = XappClient::connect(addr, LinkConfig::batch())?;
        client.subscribe(cell, params, SUBSCRIBE_TIMEOUT)?;
        let mut events = Vec::new();
        client.serve(&AtomicBool::new(false), |e| events.push(e.clone()))?;
        Ok(events)
    });

    let endpoint = GnbEndpoint::accept(&listener, &[(cell, params.window_ms)], LinkConfig::batch())?;
    if !endpoint.wait_for_subscription(cell, SUBSCRIBE_TIMEOUT) {
        endpoint.shutdown();
        return match xapp.join().expect("xApp thread panicked") {
            Err(e) => Err(e.into()),
            Ok(_) => Err(LoopbackError::NoSubscription),
        };
    }
    let mut remote = endpoint.control_loop(cell).expect("cell registered above");
    let result = if config.mitigation.enabled {
        run_with(config, Some(&mut remote), None)
    } else {
        run_with(config, None, None)
    };
    endpoint.shutdown();
    let xapp_events = xapp.join().expect("xApp thread panicked")?;
    Ok(LoopbackRun { output: result?, xapp_events })
}
