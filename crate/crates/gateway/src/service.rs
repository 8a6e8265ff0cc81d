//! The running gateway: one engine thread that owns all monitoring state,
//! read-only views republished after every change, and a transaction desk
//! that drives configuration changes one device at a time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use nbitms_core::config::{
    run_transaction, validate_directives, ConfigError, ConfigTransaction, DeviceAccess, DeviceDirective,
    OperatorCommand, TransactionLog, TxnLogRecord,
};
use nbitms_core::engine::{CheckRunner, Engine, EngineError, EngineEvent};
use nbitms_core::eval::{compare_tools, Capacities, EvalError, EvalReport, ProfileDocument, ReportHeader};
use nbitms_core::sim::{fleet_from_config, FleetTransport, RunningFleet};
use nbitms_core::snmp::{DatagramEndpoint, RoutingFactory, SnmpTarget};
use nbitms_core::state::{Alarm, AlarmId, CheckStatus, MonitoredObject, ObjectKind, StateEventKind, StateRecord};
use nbitms_core::topology::MapDocument;
use nbitms_core::{Clock, Timestamp};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;
use tokio::sync::oneshot;

use crate::events::{EventHub, EventKind};
use crate::persist::{self, JsonLog};
use crate::settings::LoadedConfig;

const IDLE_WAIT: Duration = Duration::from_millis(250);
const REPROBE_EVERY: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("starting fleet: {0}")]
    Fleet(#[from] nbitms_core::sim::SimError),
    #[error(transparent)]
    Persist(#[from] persist::PersistError),
    #[error("transaction log: {0}")]
    TxnLog(#[from] ConfigError),
    #[error("engine thread stopped")]
    Stopped,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectView {
    #[serde(flatten)]
    pub object: MonitoredObject,
    pub state: StateRecord,
    pub hard_status: CheckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alarm_id: Option<AlarmId>,
}

/// Everything GET endpoints serve, rebuilt by the engine thread.
#[derive(Debug, Clone)]
pub struct Views {
    pub taken_at: Timestamp,
    pub map: MapDocument,
    pub objects: Vec<ObjectView>,
    pub alarms: Vec<Alarm>,
}

impl Views {
    fn of(engine: &Engine) -> Views {
        let snap = engine.snapshot();
        let store = engine.store();
        let objects = store
            .objects()
            .filter_map(|o| {
                let rec = store.record(&o.id)?.clone();
                Some(ObjectView {
                    object: o.clone(),
                    hard_status: rec.hard_status(),
                    alarm_id: store.alarms().active_for(&o.id).map(|a| a.alarm_id),
                    state: rec,
                })
            })
            .collect();
        Views {
            taken_at: snap.taken_at,
            map: engine.map_document(),
            objects,
            alarms: store.alarms().all().cloned().collect(),
        }
    }
}

enum Command {
    Ack {
        id: AlarmId,
        operator: String,
        reply: oneshot::Sender<Result<Alarm, EngineError>>,
    },
    Persist {
        reply: oneshot::Sender<Result<(), persist::PersistError>>,
    },
    Shutdown,
}

/// Builds the engine for a configuration, starting its embedded fleet if
/// it has one, and restores persisted state when present.
pub fn build_engine(cfg: &LoadedConfig, clock: Arc<dyn Clock>) -> Result<(Engine, Option<RunningFleet>), ServiceError> {
    let fleet = cfg
        .fleet
        .as_ref()
        .map(|doc| fleet_from_config(doc, FleetTransport::InProcess, "127.0.0.1", clock.clone()))
        .transpose()?;
    let endpoint = fleet.as_ref().map(|f| f.fleet.clone() as Arc<dyn DatagramEndpoint>);
    let transports = Arc::new(RoutingFactory::new(endpoint, clock.clone()));
    let mut setup = cfg.setup.clone();
    setup.parallelism = setup.parallelism.max(1);
    let mut engine = Engine::new(setup, clock, transports)?;
    if let Some(saved) = persist::load_or_fresh(&cfg.state_dir.join(persist::STATE_FILE)) {
        tracing::info!(records = saved.records.len(), alarms = saved.alarms.len(), "restored persisted state");
        engine.restore(saved);
    }
    Ok((engine, fleet))
}

pub struct Service {
    pub hub: EventHub,
    views: Arc<RwLock<Arc<Views>>>,
    commands: mpsc::Sender<Command>,
    pub desk: Arc<TxnDesk>,
    profiles: ProfileDocument,
    capacities: Capacities,
    thread: Option<JoinHandle<()>>,
    // Keeps the embedded fleet alive for the service's lifetime.
    _fleet: Option<RunningFleet>,
}

impl Service {
    pub fn start(cfg: &LoadedConfig, clock: Arc<dyn Clock>, hub: EventHub) -> Result<Service, ServiceError> {
        let (mut engine, fleet) = build_engine(cfg, clock.clone())?;
        engine.probe_identities();
        let views = Arc::new(RwLock::new(Arc::new(Views::of(&engine))));
        let state_path = cfg.state_dir.join(persist::STATE_FILE);
        persist::save_state(&state_path, &engine.persisted_state(), engine.now())?;
        let alarm_log = JsonLog::open(&cfg.state_dir.join(persist::ALARM_LOG))?;
        let txn_log = TransactionLog::open(&cfg.state_dir.join(persist::TXN_LOG))?;

        let targets = engine
            .store()
            .objects()
            .filter(|o| o.kind == ObjectKind::Host)
            .filter_map(|o| engine.device_target(&o.id).ok().map(|t| (o.id.clone(), t)))
            .collect();
        let desk = Arc::new(TxnDesk::new(engine.runner().clone(), targets, hub.clone(), Some(txn_log)));

        let (tx, rx) = mpsc::channel();
        let mut worker = EngineLoop {
            engine,
            hub: hub.clone(),
            views: views.clone(),
            state_path,
            alarm_log,
            last_probe: Instant::now(),
        };
        let thread = std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || worker.run(rx))
            .expect("spawn engine thread");
        Ok(Service {
            hub,
            views,
            commands: tx,
            desk,
            profiles: cfg.profiles.clone(),
            capacities: cfg.capacities,
            thread: Some(thread),
            _fleet: fleet,
        })
    }

    pub fn views(&self) -> Arc<Views> {
        self.views.read().expect("views lock").clone()
    }

    pub async fn acknowledge(&self, id: AlarmId, operator: &str) -> Result<Result<Alarm, EngineError>, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.commands
            .send(Command::Ack {
                id,
                operator: operator.to_string(),
                reply,
            })
            .map_err(|_| ServiceError::Stopped)?;
        rx.await.map_err(|_| ServiceError::Stopped)
    }

    /// Forces a state write now.
    pub async fn persist(&self) -> Result<(), ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.commands.send(Command::Persist { reply }).map_err(|_| ServiceError::Stopped)?;
        Ok(rx.await.map_err(|_| ServiceError::Stopped)??)
    }

    pub fn eval_report(&self) -> Result<EvalReport, EvalError> {
        compare_tools(
            &self.profiles.tools,
            ReportHeader::new(self.capacities, None, self.profiles.note.clone()),
        )
    }

    /// Stops the engine thread after a final state write.
    pub fn shutdown(&mut self) {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct EngineLoop {
    engine: Engine,
    hub: EventHub,
    views: Arc<RwLock<Arc<Views>>>,
    state_path: PathBuf,
    alarm_log: JsonLog,
    last_probe: Instant,
}

impl EngineLoop {
    fn run(&mut self, rx: mpsc::Receiver<Command>) {
        loop {
            let now = self.engine.now();
            let wait = self
                .engine
                .schedule()
                .earliest_due()
                .map_or(IDLE_WAIT, |due| due.since(now).min(IDLE_WAIT));
            match rx.recv_timeout(wait) {
                Ok(Command::Ack { id, operator, reply }) => {
                    let res = self.engine.acknowledge(id, &operator);
                    if let Ok(alarm) = &res {
                        self.hub
                            .publish(EventKind::AlarmAcknowledged, self.engine.now(), json!({ "alarm": alarm }));
                        self.log_alarm(alarm);
                        self.after_change(false);
                    }
                    let _ = reply.send(res);
                }
                Ok(Command::Persist { reply }) => {
                    let _ = reply.send(self.save());
                }
                Ok(Command::Shutdown) | Err(RecvTimeoutError::Disconnected) => {
                    if let Err(e) = self.save() {
                        tracing::error!(error = %e, "final state write failed");
                    }
                    return;
                }
                Err(RecvTimeoutError::Timeout) => self.tick(),
            }
        }
    }

    fn tick(&mut self) {
        let mut probed = false;
        if self.last_probe.elapsed() >= REPROBE_EVERY {
            self.engine.probe_identities();
            self.last_probe = Instant::now();
            probed = true;
        }
        let before = self.engine.checks_run();
        let events = self.engine.tick();
        for e in &events {
            self.publish_engine_event(e);
        }
        if self.engine.checks_run() != before || probed {
            self.after_change(probed);
        }
    }

    fn publish_engine_event(&mut self, e: &EngineEvent) {
        let kind = match e.event.kind {
            StateEventKind::StateChanged => EventKind::StateChanged,
            StateEventKind::AlarmOpened => EventKind::AlarmOpened,
            StateEventKind::AlarmClosed => EventKind::AlarmClosed,
        };
        let alarm = e.alarm_id.and_then(|id| self.engine.store().alarms().get(id)).cloned();
        let mut payload = serde_json::to_value(e).expect("events serialize");
        if let Some(a) = &alarm {
            payload["alarm"] = serde_json::to_value(a).expect("alarms serialize");
            self.log_alarm(a);
        }
        self.hub.publish(kind, e.event.timestamp, payload);
    }

    fn log_alarm(&mut self, alarm: &Alarm) {
        if let Err(e) = self.alarm_log.append(alarm) {
            tracing::warn!(error = %e, "alarm log append failed");
        }
    }

    fn save(&self) -> Result<(), persist::PersistError> {
        persist::save_state(&self.state_path, &self.engine.persisted_state(), self.engine.now())
    }

    /// Persists, republishes views and announces a changed map.
    fn after_change(&mut self, force_map: bool) {
        if let Err(e) = self.save() {
            tracing::error!(error = %e, "state write failed");
        }
        let fresh = Views::of(&self.engine);
        let old = self.views.read().expect("views lock").clone();
        let map_moved = force_map || old.map.nodes != fresh.map.nodes || old.map.edges != fresh.map.edges;
        if map_moved {
            self.hub.publish(
                EventKind::MapChanged,
                fresh.taken_at,
                serde_json::to_value(&fresh.map).expect("map serializes"),
            );
        }
        *self.views.write().expect("views lock") = Arc::new(fresh);
    }
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown device '{0}'")]
    UnknownDevice(String),
    #[error("{0}")]
    Rejected(ConfigError),
}

/// Where a submitted transaction stands.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnEntry {
    Queued { txn_id: String, command: OperatorCommand },
    Running { transaction: ConfigTransaction },
    Done { transaction: ConfigTransaction },
}

/// Runs configuration transactions on worker threads, holding a per-device
/// lock for the whole plan/apply/verify cycle.
pub struct TxnDesk {
    runner: Arc<CheckRunner>,
    targets: BTreeMap<String, SnmpTarget>,
    locks: BTreeMap<String, Arc<Mutex<()>>>,
    entries: Mutex<BTreeMap<String, TxnEntry>>,
    next: AtomicU64,
    hub: EventHub,
    log: Mutex<Option<TransactionLog>>,
}

impl TxnDesk {
    pub fn new(runner: Arc<CheckRunner>, targets: BTreeMap<String, SnmpTarget>, hub: EventHub, log: Option<TransactionLog>) -> Self {
        let locks = targets.keys().map(|k| (k.clone(), Arc::default())).collect();
        TxnDesk {
            runner,
            targets,
            locks,
            entries: Mutex::default(),
            next: AtomicU64::new(1),
            hub,
            log: Mutex::new(log),
        }
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.log.lock().expect("log lock").as_ref().map(|l| l.path().to_path_buf())
    }

    pub fn get(&self, txn_id: &str) -> Option<TxnEntry> {
        self.entries.lock().expect("entries lock").get(txn_id).cloned()
    }

    /// Validates synchronously, then runs in the background. Returns the id.
    pub fn submit(
        self: &Arc<Self>,
        device: &str,
        operator_id: &str,
        command_id: Option<String>,
        directives: Vec<DeviceDirective>,
    ) -> Result<(String, JoinHandle<ConfigTransaction>), SubmitError> {
        let target = self
            .targets
            .get(device)
            .cloned()
            .ok_or_else(|| SubmitError::UnknownDevice(device.to_string()))?;
        let clock = self.runner.clock().clone();
        let now = clock.now();
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        let txn_id = format!("T{}-{n}", now.as_millis());
        let cmd = OperatorCommand {
            command_id: command_id.unwrap_or_else(|| format!("C{}-{n}", now.as_millis())),
            operator_id: operator_id.to_string(),
            target_device: device.to_string(),
            directives,
            issued_ts: now,
        };
        if cmd.directives.is_empty() {
            return Err(SubmitError::Rejected(ConfigError::EmptyCommand));
        }
        validate_directives(&cmd, self.runner.mib(), self.runner.plugins()).map_err(SubmitError::Rejected)?;
        self.entries.lock().expect("entries lock").insert(
            txn_id.clone(),
            TxnEntry::Queued {
                txn_id: txn_id.clone(),
                command: cmd.clone(),
            },
        );
        let desk = self.clone();
        let id = txn_id.clone();
        let handle = std::thread::spawn(move || desk.execute(&id, cmd, &target));
        Ok((txn_id, handle))
    }

    fn execute(&self, txn_id: &str, cmd: OperatorCommand, target: &SnmpTarget) -> ConfigTransaction {
        let lock = self.locks[&cmd.target_device].clone();
        let _held = lock.lock().unwrap_or_else(|p| p.into_inner());
        let clock = self.runner.clock().clone();
        let mut client = match self.runner.client() {
            Ok(c) => c,
            Err(e) => {
                let err = ConfigError::Log(format!("no transport: {e}"));
                let t = ConfigTransaction::rejected(txn_id, cmd, &err, clock.now());
                self.record(&t);
                return t;
            }
        };
        let mut dev = DeviceAccess {
            client: &mut client,
            target,
            host_address: target.address.clone(),
            plugins: self.runner.plugins(),
        };
        let txn = run_transaction(txn_id, cmd, self.runner.mib(), &mut dev, clock.as_ref(), |view| self.record(view));
        self.entries
            .lock()
            .expect("entries lock")
            .insert(txn_id.to_string(), TxnEntry::Done { transaction: txn.clone() });
        txn
    }

    fn record(&self, view: &ConfigTransaction) {
        let entry = if view.phase.is_terminal() {
            TxnEntry::Done {
                transaction: view.clone(),
            }
        } else {
            TxnEntry::Running {
                transaction: view.clone(),
            }
        };
        self.entries.lock().expect("entries lock").insert(view.txn_id.clone(), entry);
        if let Some(log) = self.log.lock().expect("log lock").as_mut() {
            if let Err(e) = log.append(&TxnLogRecord::from_txn(view)) {
                tracing::warn!(error = %e, "transaction log append failed");
            }
        }
        let ts = view.history.last().map_or(view.command.issued_ts, |h| h.ts);
        self.hub.publish(
            EventKind::TxnPhase,
            ts,
            json!({ "txn_id": view.txn_id, "phase": view.phase, "transaction": view }),
        );
    }
}

/// Reads the transaction log of a state directory.
pub fn read_txn_log(state_dir: &Path) -> Result<Vec<TxnLogRecord>, ConfigError> {
    TransactionLog::read(&state_dir.join(persist::TXN_LOG))
}
