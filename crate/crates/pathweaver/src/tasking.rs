//! Task provisioning for human vetting: project partitioning into
//! intersection-scale regions, lease-based exclusive locks (one per task and
//! one per client), commit metadata, and an append-only replayable event log.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{clip_halfplane, Bbox, LonLat, Vec2};
use crate::metrics::voronoi_partition;
use crate::street::{find_intersections, StreetNetwork};

/// 0.75 mile.
pub const DEFAULT_PROJECT_RADIUS_M: f64 = 1207.0;
pub const DEFAULT_LEASE_MS: u64 = 30 * 60 * 1000;
/// Sides of the polygon approximating the project disc.
pub const DISC_SIDES: usize = 64;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_millis() as u64
    }
}

/// Manually advanced clock for deterministic tests.
#[derive(Default)]
pub struct SimClock(pub AtomicU64);

impl SimClock {
    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub center: LonLat,
    pub radius_m: f64,
    pub task_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskState {
    Available,
    Locked,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lock {
    pub client: String,
    pub nonce: u64,
    pub acquired_at: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Complete,
    Partial,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskComment {
    pub completion_status: CompletionStatus,
    pub imagery_ok: bool,
    pub continue_next: bool,
    #[serde(default)]
    pub free_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRegion {
    pub id: String,
    pub project: String,
    pub intersection: usize,
    pub polygon: Vec<Vec2>,
    pub state: TaskState,
    pub lock: Option<Lock>,
    pub comments: Vec<TaskComment>,
    /// One stored fragment per commit (redundant projects may produce
    /// several; reconciliation is out of scope).
    pub fragments: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockToken {
    pub task: String,
    pub client: String,
    pub nonce: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TaskLockedByOther,
    ClientHoldsOtherLock,
    TaskCommitted,
}

impl RejectionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TaskLockedByOther => "task_locked_by_other",
            Self::ClientHoldsOtherLock => "client_holds_other_lock",
            Self::TaskCommitted => "task_committed",
        }
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task {0} not found")]
    NotFound(String),
    #[error("lock rejected: {}", .0.as_str())]
    Rejected(RejectionReason),
    #[error("invalid token")]
    InvalidToken,
    #[error("lock already released")]
    AlreadyReleased,
    #[error("token expired; edits returned, re-acquire the lock and retry")]
    Expired { fragment: Value },
    #[error("invalid comment: {0}")]
    InvalidComment(String),
    #[error("event log gap: expected seq {expected}, found {found}")]
    LogGap { expected: u64, found: u64 },
    #[error("malformed event log line {line}: {message}")]
    LogFormat { line: usize, message: String },
    #[error("no intersections within {radius_m} m of project center")]
    EmptyProject { radius_m: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Acquired { task: String, client: String, nonce: u64, acquired_at: u64, expires_at: u64 },
    Relinquished { task: String, nonce: u64 },
    Committed { task: String, nonce: u64, comment: TaskComment, fragment: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Partitions the intersections within the project disc into Voronoi task
/// regions clipped to a 64-gon approximation of the disc.
pub fn partition_project(
    net: &StreetNetwork,
    project_id: &str,
    center: LonLat,
    radius_m: f64,
    min_intersection_degree: usize,
) -> Result<(Project, Vec<TaskRegion>), TaskError> {
    let proj = net.projection();
    let c = proj.project(center);
    let in_disc: Vec<(usize, Vec2)> = find_intersections(net, min_intersection_degree)
        .into_iter()
        .map(|v| (v.0, net.node(v).local_xy))
        .filter(|(_, p)| p.dist(c) <= radius_m)
        .collect();
    if in_disc.is_empty() {
        return Err(TaskError::EmptyProject { radius_m });
    }
    let disc: Vec<Vec2> = (0..DISC_SIDES)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / DISC_SIDES as f64;
            c.add(Vec2::new(t.cos(), t.sin()).scale(radius_m))
        })
        .collect();
    let bbox = Bbox {
        min: Vec2::new(c.x - radius_m, c.y - radius_m),
        max: Vec2::new(c.x + radius_m, c.y + radius_m),
    };
    let sites: Vec<Vec2> = in_disc.iter().map(|(_, p)| *p).collect();
    let part = voronoi_partition(&sites, bbox);
    let mut tasks = Vec::new();
    for (cell, (node, _)) in part.cells.iter().zip(in_disc.iter()) {
        let mut poly = cell.polygon.clone();
        // clip the convex cell to the disc polygon's inward half-planes
        for i in 0..DISC_SIDES {
            let a = disc[i];
            let b = disc[(i + 1) % DISC_SIDES];
            // disc is counterclockwise, so the right normal points outward
            // and the interior satisfies normal.dot(p) <= normal.dot(a)
            let normal = b.sub(a).right_normal();
            poly = clip_halfplane(&poly, normal, normal.dot(a));
            if poly.len() < 3 {
                break;
            }
        }
        tasks.push(TaskRegion {
            id: format!("{project_id}/task-{node}"),
            project: project_id.to_string(),
            intersection: *node,
            polygon: poly,
            state: TaskState::Available,
            lock: None,
            comments: Vec::new(),
            fragments: Vec::new(),
        });
    }
    let project = Project {
        id: project_id.to_string(),
        center,
        radius_m,
        task_ids: tasks.iter().map(|t| t.id.clone()).collect(),
    };
    Ok((project, tasks))
}

/// Serialized lock/commit state machine. All mutations pass through
/// apply_event so the live state and any replay of the log coincide.
pub struct TaskService {
    pub tasks: BTreeMap<String, TaskRegion>,
    pub log: Vec<Event>,
    /// nonce -> (task, client), rebuilt on replay
    issued: BTreeMap<u64, (String, String)>,
    next_nonce: u64,
    clock: Arc<dyn Clock>,
    pub lease_ms: u64,
    log_path: Option<PathBuf>,
}

impl TaskService {
    pub fn new(tasks: Vec<TaskRegion>, clock: Arc<dyn Clock>) -> Self {
        Self {
            tasks: tasks.into_iter().map(|t| (t.id.clone(), t)).collect(),
            log: Vec::new(),
            issued: BTreeMap::new(),
            next_nonce: 1,
            clock,
            lease_ms: DEFAULT_LEASE_MS,
            log_path: None,
        }
    }

    pub fn with_log_file(mut self, path: PathBuf) -> Self {
        self.log_path = Some(path);
        self
    }

    fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    fn lock_active(lock: &Option<Lock>, now: u64) -> bool {
        lock.as_ref().map(|l| l.expires_at > now).unwrap_or(false)
    }

    /// State as observed at `now`: an expired lease reads as AVAILABLE even
    /// though the stale lock record persists until the next event.
    pub fn effective_state(&self, task: &str, now: u64) -> Option<TaskState> {
        let t = self.tasks.get(task)?;
        Some(match t.state {
            TaskState::Committed => TaskState::Committed,
            _ if Self::lock_active(&t.lock, now) => TaskState::Locked,
            _ => TaskState::Available,
        })
    }

    fn append(&mut self, kind: EventKind, fsync: bool) -> Result<(), TaskError> {
        let seq = self.log.last().map(|e| e.seq + 1).unwrap_or(1);
        let ev = Event { seq, timestamp: self.now(), kind };
        if let Some(path) = &self.log_path {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(&ev).expect("event serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            if fsync {
                f.sync_all()?;
            }
        }
        apply_event(&mut self.tasks, &mut self.issued, &mut self.next_nonce, &ev);
        self.log.push(ev);
        Ok(())
    }

    pub fn acquire_lock(&mut self, client: &str, task: &str) -> Result<LockToken, TaskError> {
        let now = self.now();
        let t = self
            .tasks
            .get(task)
            .ok_or_else(|| TaskError::NotFound(task.to_string()))?;
        if t.state == TaskState::Committed {
            return Err(TaskError::Rejected(RejectionReason::TaskCommitted));
        }
        if Self::lock_active(&t.lock, now) && t.lock.as_ref().unwrap().client != client {
            return Err(TaskError::Rejected(RejectionReason::TaskLockedByOther));
        }
        // one active lock per client anywhere, including this task
        let holds_other = self
            .tasks
            .values()
            .any(|r| Self::lock_active(&r.lock, now) && r.lock.as_ref().unwrap().client == client);
        if holds_other {
            return Err(TaskError::Rejected(RejectionReason::ClientHoldsOtherLock));
        }
        let nonce = self.next_nonce;
        let expires_at = now + self.lease_ms;
        self.append(
            EventKind::Acquired {
                task: task.to_string(),
                client: client.to_string(),
                nonce,
                acquired_at: now,
                expires_at,
            },
            false,
        )?;
        Ok(LockToken { task: task.to_string(), client: client.to_string(), nonce, expires_at })
    }

    fn token_current(&self, token: &LockToken) -> Result<bool, TaskError> {
        match self.issued.get(&token.nonce) {
            Some((task, client)) if *task == token.task && *client == token.client => {}
            _ => return Err(TaskError::InvalidToken),
        }
        let t = self
            .tasks
            .get(&token.task)
            .ok_or_else(|| TaskError::NotFound(token.task.clone()))?;
        Ok(t.lock.as_ref().map(|l| l.nonce == token.nonce).unwrap_or(false))
    }

    /// Idempotent: releasing an already-released or expired token reports
    /// AlreadyReleased without changing state.
    pub fn relinquish_lock(&mut self, token: &LockToken) -> Result<(), TaskError> {
        if !self.token_current(token)? {
            return Err(TaskError::AlreadyReleased);
        }
        let now = self.now();
        let t = &self.tasks[&token.task];
        if !Self::lock_active(&t.lock, now) {
            return Err(TaskError::AlreadyReleased); // lease already lapsed
        }
        self.append(
            EventKind::Relinquished { task: token.task.clone(), nonce: token.nonce },
            false,
        )
    }

    pub fn commit_task(
        &mut self,
        token: &LockToken,
        fragment: Value,
        comment: TaskComment,
    ) -> Result<(), TaskError> {
        if !self.token_current(token)? {
            return Err(TaskError::InvalidToken);
        }
        let now = self.now();
        let t = &self.tasks[&token.task];
        if !Self::lock_active(&t.lock, now) {
            return Err(TaskError::Expired { fragment });
        }
        let fragment = mark_human_edited(fragment);
        self.append(
            EventKind::Committed { task: token.task.clone(), nonce: token.nonce, comment, fragment },
            true,
        )
    }

    pub fn snapshot(&self) -> BTreeMap<String, TaskRegion> {
        self.tasks.clone()
    }
}

/// Stamps provenance on every feature of a committed GeoJSON fragment.
fn mark_human_edited(mut fragment: Value) -> Value {
    if let Some(features) = fragment.get_mut("features").and_then(|f| f.as_array_mut()) {
        for feat in features {
            if let Some(props) = feat.get_mut("properties").and_then(|p| p.as_object_mut()) {
                props.insert("provenance".into(), json!("human_edited"));
            }
        }
    }
    fragment
}

fn apply_event(
    tasks: &mut BTreeMap<String, TaskRegion>,
    issued: &mut BTreeMap<u64, (String, String)>,
    next_nonce: &mut u64,
    ev: &Event,
) {
    match &ev.kind {
        EventKind::Acquired { task, client, nonce, acquired_at, expires_at } => {
            issued.insert(*nonce, (task.clone(), client.clone()));
            *next_nonce = (*next_nonce).max(nonce + 1);
            if let Some(t) = tasks.get_mut(task) {
                t.lock = Some(Lock {
                    client: client.clone(),
                    nonce: *nonce,
                    acquired_at: *acquired_at,
                    expires_at: *expires_at,
                });
                t.state = TaskState::Locked;
            }
        }
        EventKind::Relinquished { task, nonce } => {
            if let Some(t) = tasks.get_mut(task) {
                if t.lock.as_ref().map(|l| l.nonce == *nonce).unwrap_or(false) {
                    t.lock = None;
                    t.state = TaskState::Available;
                }
            }
        }
        EventKind::Committed { task, nonce, comment, fragment } => {
            if let Some(t) = tasks.get_mut(task) {
                if t.lock.as_ref().map(|l| l.nonce == *nonce).unwrap_or(false) {
                    t.lock = None;
                    t.state = TaskState::Committed;
                    t.comments.push(comment.clone());
                    t.fragments.push(fragment.clone());
                }
            }
        }
    }
}

/// Rebuilds task state from the partitioned baseline plus the event log.
/// Fails at the first sequence-number gap.
pub fn replay_log(
    baseline: Vec<TaskRegion>,
    events: &[Event],
) -> Result<BTreeMap<String, TaskRegion>, TaskError> {
    let mut tasks: BTreeMap<String, TaskRegion> =
        baseline.into_iter().map(|t| (t.id.clone(), t)).collect();
    let mut issued = BTreeMap::new();
    let mut next_nonce = 1u64;
    let mut expected = 1u64;
    for ev in events {
        if ev.seq != expected {
            return Err(TaskError::LogGap { expected, found: ev.seq });
        }
        expected += 1;
        apply_event(&mut tasks, &mut issued, &mut next_nonce, ev);
    }
    Ok(tasks)
}

pub fn read_log_file(path: &std::path::Path) -> Result<Vec<Event>, TaskError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: Event = serde_json::from_str(line).map_err(|e| TaskError::LogFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Handles one line-JSON request against the shared service.
pub fn handle_request(svc: &Mutex<TaskService>, req: &Value) -> Value {
    let op = req.get("op").and_then(|v| v.as_str()).unwrap_or("");
    let client = req.get("client").and_then(|v| v.as_str()).unwrap_or("");
    let task = req.get("task").and_then(|v| v.as_str()).unwrap_or("");
    let mut svc = svc.lock().unwrap();
    match op {
        "acquire" => match svc.acquire_lock(client, task) {
            Ok(token) => json!({"ok": true, "token": token}),
            Err(e) => rejection(e),
        },
        "relinquish" | "commit" => {
            let Some(nonce) = req.get("nonce").and_then(|v| v.as_u64()) else {
                return json!({"ok": false, "reason": "missing nonce"});
            };
            let token = LockToken {
                task: task.to_string(),
                client: client.to_string(),
                nonce,
                expires_at: 0, // validated against the service's record
            };
            if op == "relinquish" {
                match svc.relinquish_lock(&token) {
                    Ok(()) => json!({"ok": true}),
                    Err(e) => rejection(e),
                }
            } else {
                let fragment = req.get("fragment").cloned().unwrap_or(Value::Null);
                let comment: TaskComment = match req
                    .get("comment")
                    .cloned()
                    .map(serde_json::from_value)
                {
                    Some(Ok(c)) => c,
                    Some(Err(e)) => {
                        return json!({"ok": false, "reason": format!("invalid comment: {e}")})
                    }
                    None => return json!({"ok": false, "reason": "missing comment"}),
                };
                match svc.commit_task(&token, fragment, comment) {
                    Ok(()) => json!({"ok": true}),
                    Err(e) => rejection(e),
                }
            }
        }
        "status" => {
            let now = svc.now();
            match svc.effective_state(task, now) {
                Some(state) => json!({"ok": true, "state": state}),
                None => json!({"ok": false, "reason": format!("task {task} not found")}),
            }
        }
        other => json!({"ok": false, "reason": format!("unknown op {other:?}")}),
    }
}

fn rejection(e: TaskError) -> Value {
    match e {
        TaskError::Rejected(r) => json!({"ok": false, "reason": r.as_str()}),
        TaskError::Expired { fragment } => {
            json!({"ok": false, "reason": "token expired; re-acquire and retry", "fragment": fragment})
        }
        other => json!({"ok": false, "reason": other.to_string()}),
    }
}

/// Line-delimited JSON protocol server; one thread per connection.
pub fn serve(listener: TcpListener, svc: Arc<Mutex<TaskService>>) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let svc = Arc::clone(&svc);
        std::thread::spawn(move || {
            let _ = handle_connection(stream, &svc);
        });
    }
    Ok(())
}

fn handle_connection(stream: TcpStream, svc: &Mutex<TaskService>) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Value>(&line) {
            Ok(req) => handle_request(svc, &req),
            Err(e) => json!({"ok": false, "reason": format!("malformed request: {e}")}),
        };
        let mut out = resp.to_string();
        out.push('\n');
        writer.write_all(out.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::street::load_street_network;

    fn two_tasks() -> Vec<TaskRegion> {
        ["p/task-a", "p/task-b"]
            .iter()
            .enumerate()
            .map(|(i, id)| TaskRegion {
                id: id.to_string(),
                project: "p".into(),
                intersection: i,
                polygon: vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(1.0, 0.0),
                    Vec2::new(1.0, 1.0),
                ],
                state: TaskState::Available,
                lock: None,
                comments: Vec::new(),
                fragments: Vec::new(),
            })
            .collect()
    }

    fn sim_service() -> (TaskService, Arc<SimClock>) {
        let clock = Arc::new(SimClock::default());
        let svc = TaskService::new(two_tasks(), clock.clone());
        (svc, clock)
    }

    fn comment() -> TaskComment {
        TaskComment {
            completion_status: CompletionStatus::Complete,
            imagery_ok: true,
            continue_next: true,
            free_text: String::new(),
        }
    }

    #[test]
    fn acquire_and_relinquish_roundtrip() {
        let (mut svc, _) = sim_service();
        let tok = svc.acquire_lock("alice", "p/task-a").unwrap();
        assert_eq!(svc.effective_state("p/task-a", 0), Some(TaskState::Locked));
        svc.relinquish_lock(&tok).unwrap();
        assert_eq!(svc.effective_state("p/task-a", 0), Some(TaskState::Available));
        // relinquish twice: second reports already released
        assert!(matches!(svc.relinquish_lock(&tok), Err(TaskError::AlreadyReleased)));
        // client may now lock another task
        svc.acquire_lock("alice", "p/task-b").unwrap();
    }

    #[test]
    fn second_client_rejected_on_locked_task() {
        let (mut svc, _) = sim_service();
        svc.acquire_lock("alice", "p/task-a").unwrap();
        match svc.acquire_lock("bob", "p/task-a") {
            Err(TaskError::Rejected(RejectionReason::TaskLockedByOther)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_lock_per_client() {
        let (mut svc, _) = sim_service();
        svc.acquire_lock("alice", "p/task-a").unwrap();
        match svc.acquire_lock("alice", "p/task-b") {
            Err(TaskError::Rejected(RejectionReason::ClientHoldsOtherLock)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expiry_frees_lock_for_others() {
        let (mut svc, clock) = sim_service();
        let tok = svc.acquire_lock("alice", "p/task-a").unwrap();
        clock.advance(DEFAULT_LEASE_MS + 1);
        assert_eq!(svc.effective_state("p/task-a", clock.now_ms()), Some(TaskState::Available));
        // relinquish after expiry reports already-released
        assert!(matches!(svc.relinquish_lock(&tok), Err(TaskError::AlreadyReleased)));
        svc.acquire_lock("bob", "p/task-a").unwrap();
    }

    #[test]
    fn commit_lifecycle_and_terminality() {
        let (mut svc, _) = sim_service();
        let tok = svc.acquire_lock("alice", "p/task-a").unwrap();
        let frag = json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {"provenance": "hypothesized"}, "geometry": null}
        ]});
        svc.commit_task(&tok, frag, comment()).unwrap();
        assert_eq!(svc.effective_state("p/task-a", 0), Some(TaskState::Committed));
        let t = &svc.tasks["p/task-a"];
        assert_eq!(t.comments.len(), 1);
        assert_eq!(
            t.fragments[0]["features"][0]["properties"]["provenance"],
            json!("human_edited")
        );
        // committed is terminal
        match svc.acquire_lock("bob", "p/task-a") {
            Err(TaskError::Rejected(RejectionReason::TaskCommitted)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expired_commit_returns_fragment() {
        let (mut svc, clock) = sim_service();
        let tok = svc.acquire_lock("alice", "p/task-a").unwrap();
        clock.advance(DEFAULT_LEASE_MS + 1);
        let frag = json!({"payload": 7});
        match svc.commit_task(&tok, frag.clone(), comment()) {
            Err(TaskError::Expired { fragment }) => assert_eq!(fragment, frag),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(svc.effective_state("p/task-a", clock.now_ms()), Some(TaskState::Available));
    }

    #[test]
    fn forged_nonce_rejected_without_state_change() {
        let (mut svc, _) = sim_service();
        let tok = svc.acquire_lock("alice", "p/task-a").unwrap();
        let forged = LockToken { client: "mallory".into(), ..tok.clone() };
        assert!(matches!(
            svc.commit_task(&forged, Value::Null, comment()),
            Err(TaskError::InvalidToken)
        ));
        let never_issued = LockToken { nonce: 999, ..tok.clone() };
        assert!(matches!(
            svc.relinquish_lock(&never_issued),
            Err(TaskError::InvalidToken)
        ));
        assert_eq!(svc.effective_state("p/task-a", 0), Some(TaskState::Locked));
    }

    #[test]
    fn replay_matches_live_state() {
        let (mut svc, clock) = sim_service();
        let t1 = svc.acquire_lock("alice", "p/task-a").unwrap();
        svc.relinquish_lock(&t1).unwrap();
        let t2 = svc.acquire_lock("alice", "p/task-a").unwrap();
        svc.commit_task(&t2, json!({}), comment()).unwrap();
        let t3 = svc.acquire_lock("bob", "p/task-b").unwrap();
        clock.advance(10);
        svc.relinquish_lock(&t3).unwrap();
        let replayed = replay_log(two_tasks(), &svc.log).unwrap();
        assert_eq!(replayed, svc.snapshot());
        // prefix replay equals the state after that prefix
        let prefix = replay_log(two_tasks(), &svc.log[..2]).unwrap();
        assert_eq!(prefix["p/task-a"].state, TaskState::Available);
    }

    #[test]
    fn replay_detects_seq_gap() {
        let (mut svc, _) = sim_service();
        let t = svc.acquire_lock("alice", "p/task-a").unwrap();
        svc.relinquish_lock(&t).unwrap();
        let mut log = svc.log.clone();
        log[1].seq = 5;
        assert!(matches!(
            replay_log(two_tasks(), &log),
            Err(TaskError::LogGap { expected: 2, found: 5 })
        ));
    }

    #[test]
    fn log_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let clock = Arc::new(SimClock::default());
        let mut svc =
            TaskService::new(two_tasks(), clock).with_log_file(path.clone());
        let t = svc.acquire_lock("alice", "p/task-a").unwrap();
        svc.commit_task(&t, json!({"x": 1}), comment()).unwrap();
        let events = read_log_file(&path).unwrap();
        assert_eq!(events, svc.log);
        let replayed = replay_log(two_tasks(), &events).unwrap();
        assert_eq!(replayed, svc.snapshot());
    }

    #[test]
    fn partition_plus_offset_fixture_tiles_disc() {
        // 3x3 grid: 1 degree-4 center, 4 degree-3 edge midpoints
        let net = load_street_network(&fixture::grid_fixture(3, 3, 100.0)).unwrap();
        let center = net.anchor;
        let (project, tasks) = partition_project(&net, "proj", center, 400.0, 3).unwrap();
        assert_eq!(tasks.len(), 5);
        assert_eq!(project.task_ids.len(), 5);
        let disc_area = std::f64::consts::PI * 400.0 * 400.0;
        let sum: f64 = tasks
            .iter()
            .map(|t| crate::geo::signed_area(&t.polygon).abs())
            .sum();
        assert!((sum - disc_area).abs() / disc_area < 0.01, "sum {sum} vs {disc_area}");
        assert!(tasks.iter().all(|t| t.state == TaskState::Available));
    }

    #[test]
    fn partition_single_intersection_covers_disc() {
        let net = load_street_network(&fixture::plus_fixture(100.0)).unwrap();
        let center = net.anchor;
        let (_, tasks) = partition_project(&net, "proj", center, 300.0, 3).unwrap();
        assert_eq!(tasks.len(), 1);
        let disc_area = std::f64::consts::PI * 300.0 * 300.0;
        let area = crate::geo::signed_area(&tasks[0].polygon).abs();
        assert!((area - disc_area).abs() / disc_area < 0.01);
    }

    #[test]
    fn partition_empty_disc_errors() {
        let net = load_street_network(&fixture::plus_fixture(100.0)).unwrap();
        let far = LonLat::new(10.0, 10.0);
        assert!(matches!(
            partition_project(&net, "proj", far, 100.0, 3),
            Err(TaskError::EmptyProject { .. })
        ));
    }

    #[test]
    fn tcp_protocol_round_trip() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let svc = Arc::new(Mutex::new(TaskService::new(two_tasks(), clock)));
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server_svc = Arc::clone(&svc);
        std::thread::spawn(move || serve(listener, server_svc));

        let stream = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut ask = |req: Value| -> Value {
            let mut line = req.to_string();
            line.push('\n');
            writer.write_all(line.as_bytes()).unwrap();
            let mut resp = String::new();
            reader.read_line(&mut resp).unwrap();
            serde_json::from_str(&resp).unwrap()
        };
        let r = ask(json!({"op": "acquire", "client": "alice", "task": "p/task-a"}));
        assert_eq!(r["ok"], json!(true));
        let nonce = r["token"]["nonce"].as_u64().unwrap();
        let r = ask(json!({"op": "acquire", "client": "bob", "task": "p/task-a"}));
        assert_eq!(r["reason"], json!("task_locked_by_other"));
        let r = ask(json!({
            "op": "commit", "client": "alice", "task": "p/task-a", "nonce": nonce,
            "fragment": {},
            "comment": {"completion_status": "complete", "imagery_ok": true, "continue_next": false}
        }));
        assert_eq!(r["ok"], json!(true));
        let r = ask(json!({"op": "status", "client": "alice", "task": "p/task-a"}));
        assert_eq!(r["state"], json!("COMMITTED"));
        let r = ask(json!({
            "op": "commit", "client": "alice", "task": "p/task-a", "nonce": nonce,
            "comment": {"completion_status": "complete", "imagery_ok": true}
        }));
        assert_eq!(r["ok"], json!(false)); // missing comment field
    }
}
