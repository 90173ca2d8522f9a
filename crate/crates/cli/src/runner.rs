//! The simulation owner thread.
//!
//! One thread owns the [`Simulation`]. HTTP handlers talk to it through a
//! channel of [`Request`]s and read the state it publishes after every
//! change. This is the only place that looks at the wall clock.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tokio::sync::{oneshot, watch};
use wsn_twin::alarms::{Actuators, AlarmRule};
use wsn_twin::gateway::UplinkEntry;
use wsn_twin::ingest::IngestEntry;
use wsn_twin::telemetry::TelemetryRecord;
use wsn_twin::{CommandError, MotorCommand, RunSummary, SimError, Simulation, Snapshot};

pub enum Request {
    Motor {
        cmd: MotorCommand,
        reply: oneshot::Sender<Result<u64, MotorRejected>>,
    },
    PutRule {
        rule: AlarmRule,
        reply: oneshot::Sender<Result<(), Vec<String>>>,
    },
    DeleteRule {
        id: String,
        reply: oneshot::Sender<bool>,
    },
    Clear {
        reply: oneshot::Sender<Result<Actuators, String>>,
    },
    Ingest {
        query: String,
        reply: oneshot::Sender<Result<u64, String>>,
    },
    Summary {
        reply: oneshot::Sender<RunSummary>,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MotorRejected {
    PowerCutoff,
    Internal(String),
}

/// Published after every change; readers never touch the simulation.
#[derive(Debug, Clone)]
pub struct View {
    pub snapshot: Snapshot,
    pub uplinks: Vec<UplinkEntry>,
    pub ingest: Vec<IngestEntry>,
}

impl View {
    fn of(sim: &Simulation) -> View {
        View {
            snapshot: sim.snapshot(),
            uplinks: sim.gateway().uplinks().to_vec(),
            ingest: sim.ingest_entries().to_vec(),
        }
    }
}

#[derive(Clone)]
pub struct SimHandle {
    requests: mpsc::Sender<Request>,
    view: watch::Receiver<Arc<View>>,
    records: Arc<RwLock<Vec<TelemetryRecord>>>,
}

#[derive(Debug, thiserror::Error)]
#[error("simulation thread has stopped")]
pub struct Stopped;

impl SimHandle {
    pub fn view(&self) -> Arc<View> {
        self.view.borrow().clone()
    }

    pub fn watch(&self) -> watch::Receiver<Arc<View>> {
        self.view.clone()
    }

    /// Runs `f` over the journal as currently published.
    pub fn with_records<T>(&self, f: impl FnOnce(&[TelemetryRecord]) -> T) -> T {
        f(&self.records.read().expect("records lock poisoned"))
    }

    pub fn send(&self, req: Request) -> Result<(), Stopped> {
        self.requests.send(req).map_err(|_| Stopped)
    }

    /// Sends a request built around a fresh reply channel and awaits the answer.
    pub async fn ask<T>(&self, build: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, Stopped> {
        let (tx, rx) = oneshot::channel();
        self.send(build(tx))?;
        rx.await.map_err(|_| Stopped)
    }

    pub fn shutdown(&self) {
        let _ = self.requests.send(Request::Shutdown);
    }
}

/// What the thread hands back when it stops.
pub struct Finished {
    pub sim: Simulation,
    pub error: Option<SimError>,
}

/// Starts the owner thread. Simulated time advances by `speedup` times the
/// wall-clock time elapsed, checked every `tick`.
pub fn spawn(sim: Simulation, speedup: f64, tick: Duration) -> (SimHandle, JoinHandle<Finished>) {
    let (req_tx, req_rx) = mpsc::channel();
    let (view_tx, view_rx) = watch::channel(Arc::new(View::of(&sim)));
    let records = Arc::new(RwLock::new(sim.store().records().to_vec()));
    let shared = records.clone();
    let thread = std::thread::Builder::new()
        .name("simulation".into())
        .spawn(move || owner_loop(sim, speedup, tick, req_rx, view_tx, shared))
        .expect("spawn simulation thread");
    (
        SimHandle {
            requests: req_tx,
            view: view_rx,
            records,
        },
        thread,
    )
}

fn owner_loop(
    mut sim: Simulation,
    speedup: f64,
    tick: Duration,
    requests: mpsc::Receiver<Request>,
    view: watch::Sender<Arc<View>>,
    records: Arc<RwLock<Vec<TelemetryRecord>>>,
) -> Finished {
    let publish = |sim: &Simulation| {
        let mut shared = records.write().expect("records lock poisoned");
        let have = shared.len();
        shared.extend_from_slice(&sim.store().records()[have..]);
        drop(shared);
        view.send_replace(Arc::new(View::of(sim)));
    };
    let wall_origin = Instant::now();
    let sim_origin = sim.now();
    loop {
        let deadline = Instant::now() + tick;
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            match requests.recv_timeout(wait) {
                Ok(Request::Shutdown) | Err(RecvTimeoutError::Disconnected) => {
                    publish(&sim);
                    return Finished { sim, error: None };
                }
                Ok(req) => {
                    if let Err(error) = handle(&mut sim, req) {
                        publish(&sim);
                        return Finished {
                            sim,
                            error: Some(error),
                        };
                    }
                    publish(&sim);
                }
                Err(RecvTimeoutError::Timeout) => break,
            }
        }
        let elapsed_us = wall_origin.elapsed().as_secs_f64() * speedup * 1e6;
        if let Err(error) = sim.advance_to(sim_origin + elapsed_us as u64) {
            tracing::error!(%error, "simulation stopped");
            publish(&sim);
            return Finished {
                sim,
                error: Some(error),
            };
        }
        publish(&sim);
    }
}

fn handle(sim: &mut Simulation, req: Request) -> Result<(), SimError> {
    match req {
        Request::Motor { cmd, reply } => {
            let result = match sim.submit_motor_command(cmd) {
                Ok(id) => Ok(id),
                Err(CommandError::PowerCutoff) => Err(MotorRejected::PowerCutoff),
                Err(CommandError::Sim(e)) => {
                    let _ = reply.send(Err(MotorRejected::Internal(e.to_string())));
                    return Err(e);
                }
            };
            let _ = reply.send(result);
        }
        Request::PutRule { rule, reply } => {
            let _ = reply.send(sim.upsert_rule(rule));
        }
        Request::DeleteRule { id, reply } => {
            let _ = reply.send(sim.remove_rule(&id).is_some());
        }
        Request::Clear { reply } => match sim.clear_actuators() {
            Ok(before) => {
                let _ = reply.send(Ok(before));
            }
            Err(e) => {
                let _ = reply.send(Err(e.to_string()));
                return Err(e);
            }
        },
        Request::Ingest { query, reply } => match sim.ingest_update(&query) {
            Ok(id) => {
                let _ = reply.send(Ok(id));
            }
            Err(e) => {
                let _ = reply.send(Err(e.to_string()));
                return Err(e);
            }
        },
        Request::Summary { reply } => {
            let _ = reply.send(sim.summary());
        }
        Request::Shutdown => unreachable!("handled by the loop"),
    }
    Ok(())
}
