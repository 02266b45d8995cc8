//! Networked trials: one server owning the plan and the search map, one
//! client process per robot running navigation, perception and the waypoint
//! manager. Rounds are lockstep, so the schedule is the in-process one.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use live_core::geometry::VectorMap;
use live_core::simulator::{
    AgentEvents, AgentUpdate, Coordinator, RobotAgent, Scenario, SimError, TrajectoryLog, TrialResult,
};
use log::{debug, info, warn};
use thiserror::Error;

use crate::protocol::{read_message, write_message, Message, WireError};

/// How long either side waits for its peer before giving up.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum NetError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("timed out {0}")]
    Timeout(&'static str),
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<WireError> for NetError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(e) => NetError::Io(e),
            WireError::Decode(d) => NetError::Protocol(d.to_string()),
        }
    }
}

/// The server's view of a finished (or aborted) trial.
#[derive(Debug, Clone)]
pub struct ServedTrial {
    pub result: TrialResult,
    pub log: TrajectoryLog,
}

enum Event {
    Message(Message),
    /// Clean EOF or a broken socket.
    Closed,
    /// The peer sent bytes that are not a valid frame.
    Garbage(String),
}

fn spawn_reader(conn: usize, mut stream: TcpStream, tx: Sender<(usize, Event)>) {
    thread::spawn(move || loop {
        let event = match read_message(&mut stream) {
            Ok(Some(m)) => Event::Message(m),
            Ok(None) | Err(WireError::Io(_)) => Event::Closed,
            Err(WireError::Decode(e)) => Event::Garbage(e.to_string()),
        };
        let stop = !matches!(event, Event::Message(_));
        if tx.send((conn, event)).is_err() || stop {
            return;
        }
    });
}

fn accept_all(listener: &TcpListener, n: usize, timeout: Duration) -> Result<Vec<TcpStream>, NetError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut streams = Vec::with_capacity(n);
    while streams.len() < n {
        match listener.accept() {
            Ok((s, peer)) => {
                info!("robot connection from {peer}");
                s.set_nonblocking(false)?;
                s.set_nodelay(true)?;
                streams.push(s);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(NetError::Timeout("waiting for robots to connect"));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    listener.set_nonblocking(false)?;
    Ok(streams)
}

struct Session {
    scenario: Arc<Scenario>,
    rx: Receiver<(usize, Event)>,
    writers: Vec<TcpStream>,
    conn_robot: Vec<Option<usize>>,
    robot_conn: Vec<usize>,
    said_done: Vec<bool>,
    closed: Vec<bool>,
    timeout: Duration,
}

/// Why a session stopped before the trial finished.
enum Abort {
    Transport(String),
    Fatal(NetError),
}

impl From<NetError> for Abort {
    fn from(e: NetError) -> Self {
        Abort::Fatal(e)
    }
}

fn protocol(msg: impl Into<String>) -> Abort {
    Abort::Fatal(NetError::Protocol(msg.into()))
}

impl Session {
    fn recv(&self, what: &'static str) -> Result<(usize, Event), Abort> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(ev) => Ok(ev),
            Err(RecvTimeoutError::Timeout) => Err(Abort::Fatal(NetError::Timeout(what))),
            Err(RecvTimeoutError::Disconnected) => Err(Abort::Transport("all readers stopped".into())),
        }
    }

    fn robot_of(&self, conn: usize, name: &str) -> Result<usize, Abort> {
        let r = self.conn_robot[conn].ok_or_else(|| protocol(format!("connection {conn} is not registered")))?;
        if self.scenario.robots[r].name != name {
            return Err(protocol(format!(
                "connection for {} sent a message as {name}",
                self.scenario.robots[r].name
            )));
        }
        Ok(r)
    }

    fn send(&mut self, robot: usize, m: &Message) -> Result<(), Abort> {
        let conn = self.robot_conn[robot];
        write_message(&mut self.writers[conn], m)
            .map_err(|e| Abort::Transport(format!("{}: {e}", self.scenario.robots[robot].name)))
    }

    fn register(&mut self) -> Result<(), Abort> {
        let n = self.scenario.robots.len();
        let mut robot_conn = vec![None; n];
        let mut registered = 0;
        while registered < n {
            let (conn, ev) = self.recv("waiting for Register")?;
            match ev {
                Event::Message(Message::Register { robot, spec }) => {
                    let r = self
                        .scenario
                        .robot_index(&robot)
                        .ok_or_else(|| protocol(format!("unknown robot {robot:?}")))?;
                    if robot_conn[r].is_some() || self.conn_robot[conn].is_some() {
                        return Err(protocol(format!("duplicate registration for {robot}")));
                    }
                    if spec != self.scenario.robots[r] {
                        return Err(protocol(format!("{robot} registered with a different spec")));
                    }
                    robot_conn[r] = Some(conn);
                    self.conn_robot[conn] = Some(r);
                    registered += 1;
                    debug!("registered {robot} on connection {conn}");
                }
                Event::Message(m) => return Err(protocol(format!("expected Register, got {}", m.kind()))),
                Event::Garbage(e) => return Err(protocol(e)),
                Event::Closed => return Err(Abort::Transport(format!("connection {conn} closed before Register"))),
            }
        }
        self.robot_conn = robot_conn.into_iter().map(|c| c.expect("all registered")).collect();
        Ok(())
    }

    fn collect_round(&mut self, coord: &Coordinator, tick: u64) -> Result<Vec<AgentUpdate>, Abort> {
        let active = coord.active_robots();
        let mut pending: Vec<Option<AgentUpdate>> = vec![None; self.scenario.robots.len()];
        let mut missing = active.len();
        while missing > 0 {
            let (conn, ev) = self.recv("waiting for Update")?;
            match ev {
                Event::Message(Message::Update {
                    robot,
                    tick: t,
                    believed_pose,
                    lidar_footprint_pose,
                    camera_footprint_pose,
                    wm_state,
                    reached,
                    skipped,
                    priority_accepted,
                }) => {
                    let r = self.robot_of(conn, &robot)?;
                    if !active.contains(&r) {
                        return Err(protocol(format!("{robot} sent an Update after finishing")));
                    }
                    if t != tick || pending[r].is_some() {
                        return Err(protocol(format!("{robot} sent tick {t} while round {tick} was open")));
                    }
                    if lidar_footprint_pose != camera_footprint_pose {
                        return Err(protocol(format!("{robot}: sensor poses disagree")));
                    }
                    pending[r] = Some(AgentUpdate {
                        robot: r,
                        tick: t,
                        true_pose: lidar_footprint_pose,
                        believed_pose,
                        wm_state,
                        events: AgentEvents {
                            reached,
                            skipped,
                            priority_accepted,
                        },
                    });
                    missing -= 1;
                }
                Event::Message(Message::Done { robot }) => {
                    let r = self.robot_of(conn, &robot)?;
                    if !coord.is_robot_done(r) {
                        return Err(protocol(format!("{robot} sent Done with work left")));
                    }
                    self.said_done[conn] = true;
                }
                Event::Message(m) => return Err(protocol(format!("unexpected {} from a robot", m.kind()))),
                Event::Garbage(e) => return Err(protocol(e)),
                Event::Closed => {
                    self.closed[conn] = true;
                    if !self.said_done[conn] {
                        return Err(Abort::Transport(format!("connection {conn} dropped mid-trial")));
                    }
                }
            }
        }
        Ok(pending.into_iter().flatten().collect())
    }

    /// After the last Ack, waits for every client to say Done or hang up.
    fn drain(&mut self) {
        while (0..self.writers.len()).any(|c| !self.said_done[c] && !self.closed[c]) {
            match self.rx.recv_timeout(self.timeout) {
                Ok((conn, Event::Message(Message::Done { .. }))) => self.said_done[conn] = true,
                Ok((conn, Event::Closed)) => {
                    if !self.said_done[conn] {
                        warn!("connection {conn} closed without Done");
                    }
                    self.closed[conn] = true;
                }
                Ok((conn, _)) => warn!("ignoring late message on connection {conn}"),
                Err(_) => {
                    warn!("gave up waiting for Done");
                    return;
                }
            }
        }
    }
}

/// Runs one trial with a client per robot connecting to `listener`.
///
/// A client that disconnects mid-trial yields a transport-failure result;
/// protocol violations and timeouts are errors.
pub fn serve(
    scenario: Arc<Scenario>,
    map: Arc<VectorMap>,
    listener: &TcpListener,
    timeout: Duration,
) -> Result<ServedTrial, NetError> {
    let mut coord = Coordinator::new(scenario.clone(), map)?;
    let n = scenario.robots.len();
    let streams = accept_all(listener, n, timeout)?;
    let (tx, rx) = mpsc::channel();
    let mut writers = Vec::with_capacity(n);
    for (conn, s) in streams.into_iter().enumerate() {
        spawn_reader(conn, s.try_clone()?, tx.clone());
        writers.push(s);
    }
    drop(tx);
    let mut session = Session {
        scenario: scenario.clone(),
        rx,
        writers,
        conn_robot: vec![None; n],
        robot_conn: Vec::new(),
        said_done: vec![false; n],
        closed: vec![false; n],
        timeout,
    };

    let outcome = (|| -> Result<(), Abort> {
        session.register()?;
        for r in 0..n {
            let plan = Message::Plan {
                robot: scenario.robots[r].name.clone(),
                viewpoints: coord.plan().viewpoints[r].clone(),
                seed: scenario.seed,
                mode: scenario.mode,
            };
            session.send(r, &plan)?;
        }
        while !coord.is_finished() {
            let tick = coord.tick() + 1;
            let updates = session.collect_round(&coord, tick)?;
            let round = coord
                .apply_round(tick, &updates)
                .map_err(|e| protocol(e.to_string()))?;
            let ack = Message::Ack {
                tick,
                observed: round.observed,
                finished: round.finished,
            };
            for u in &updates {
                session.send(u.robot, &ack)?;
            }
        }
        Ok(())
    })();

    match outcome {
        Ok(()) => {
            session.drain();
            info!("trial finished after {} ticks", coord.tick());
            Ok(ServedTrial {
                result: coord.result(),
                log: coord.log().clone(),
            })
        }
        Err(Abort::Transport(why)) => {
            warn!("transport failure: {why}");
            Ok(ServedTrial {
                result: coord.transport_failure(),
                log: coord.log().clone(),
            })
        }
        Err(Abort::Fatal(e)) => Err(e),
    }
}

fn connect_with_retry(addr: &[SocketAddr], timeout: Duration) -> io::Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                debug!("connect failed ({e}), retrying");
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e),
        }
    }
}

/// What a client saw of the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientSummary {
    pub ticks: u64,
    pub trial_finished: bool,
}

/// Runs one robot against a server. The scenario supplies the robot's spec
/// and the ground-truth world its simulated lidar sees; seed and mode come
/// from the server's Plan.
pub fn run_client(
    addr: impl ToSocketAddrs,
    robot: &str,
    scenario: &Scenario,
    map: Arc<VectorMap>,
    timeout: Duration,
) -> Result<ClientSummary, NetError> {
    let index = scenario
        .robot_index(robot)
        .ok_or_else(|| NetError::Protocol(format!("robot {robot:?} is not in the scenario")))?;
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
    let mut stream = connect_with_retry(&addrs, timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;

    write_message(
        &mut stream,
        &Message::Register {
            robot: robot.to_string(),
            spec: scenario.robots[index].clone(),
        },
    )?;
    let (scenario, viewpoints) = match read_message(&mut stream)? {
        Some(Message::Plan {
            robot: r,
            viewpoints,
            seed,
            mode,
        }) if r == robot => {
            let mut s = scenario.clone();
            s.seed = seed;
            s.mode = mode;
            (Arc::new(s), viewpoints)
        }
        Some(m) => return Err(NetError::Protocol(format!("expected Plan, got {}", m.kind()))),
        None => return Err(NetError::Protocol("server closed before Plan".into())),
    };
    let mut agent = RobotAgent::new(index, scenario, map, viewpoints)?;

    let mut tick = 0;
    let trial_finished = loop {
        tick += 1;
        let u = agent.step(tick)?;
        write_message(
            &mut stream,
            &Message::Update {
                robot: robot.to_string(),
                tick,
                believed_pose: u.believed_pose,
                lidar_footprint_pose: u.true_pose,
                camera_footprint_pose: u.true_pose,
                wm_state: u.wm_state,
                reached: u.events.reached,
                skipped: u.events.skipped,
                priority_accepted: u.events.priority_accepted,
            },
        )?;
        match read_message(&mut stream)? {
            Some(Message::Ack {
                tick: t,
                observed,
                finished,
            }) if t == tick => {
                agent.observe(&observed);
                if finished || agent.is_done() {
                    break finished;
                }
            }
            Some(m) => return Err(NetError::Protocol(format!("expected Ack {tick}, got {m:?}"))),
            None => return Err(NetError::Protocol(format!("server closed during tick {tick}"))),
        }
    };
    write_message(&mut stream, &Message::Done { robot: robot.to_string() })?;
    let _ = stream.shutdown(std::net::Shutdown::Write);
    Ok(ClientSummary {
        ticks: tick,
        trial_finished,
    })
}
