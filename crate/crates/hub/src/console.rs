//! Line-delimited JSON socket for one operator console. Outbound messages
//! carry every log line; inbound commands enter the session as operator
//! records.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::SessionConfig;
use crate::engine::{Engine, Input};
use crate::log::{Command, SessionKind};
use crate::session::{run_with, Control, LineSink, Pacer, Recorder, SessionSummary};
use crate::HubError;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
struct Request {
    v: u32,
    seq: u64,
    #[serde(flatten)]
    command: Command,
}

/// Parses one inbound line into its request number and command. Errors
/// carry the request number when one could be read.
pub fn parse_request(line: &str) -> Result<(u64, Command), (Option<u64>, String)> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| (None, format!("invalid JSON: {e}")))?;
    let seq = value.get("seq").and_then(Value::as_u64);
    let r: Request = serde_json::from_value(value).map_err(|e| (seq, e.to_string()))?;
    if r.v != WIRE_VERSION {
        return Err((Some(r.seq), format!("unsupported protocol version {}", r.v)));
    }
    if let Command::SetSpeed { factor } = r.command {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err((
                Some(r.seq),
                format!("speed factor {factor} must be positive"),
            ));
        }
    }
    Ok((r.seq, r.command))
}

pub fn event_message(line: &str) -> String {
    format!("{{\"v\":{WIRE_VERSION},\"type\":\"event\",\"event\":{line}}}")
}

pub fn ack_message(seq: u64) -> String {
    json!({"v": WIRE_VERSION, "type": "ack", "seq": seq}).to_string()
}

pub fn error_message(seq: Option<u64>, message: &str) -> String {
    json!({"v": WIRE_VERSION, "type": "error", "seq": seq, "message": message}).to_string()
}

pub fn dropped_message(count: u64) -> String {
    json!({"v": WIRE_VERSION, "type": "dropped", "count": count}).to_string()
}

pub fn end_message() -> String {
    json!({"v": WIRE_VERSION, "type": "end"}).to_string()
}

#[derive(Debug, Default)]
struct Queue {
    /// `(is_event, message)`; only events are ever dropped.
    items: VecDeque<(bool, String)>,
    events: usize,
    dropped: u64,
    closed: bool,
}

/// Bounded outbound queue; when full, the oldest event is dropped and the
/// count is reported before the next message.
#[derive(Debug, Clone)]
pub struct Outbox {
    inner: Arc<(Mutex<Queue>, Condvar)>,
    capacity: usize,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Arc::new((Mutex::new(Queue::default()), Condvar::new())),
            capacity: capacity.max(1),
        }
    }

    fn push(&self, is_event: bool, msg: String) {
        let (lock, cv) = &*self.inner;
        let mut q = lock.lock().expect("outbox lock");
        if is_event && q.events >= self.capacity {
            if let Some(i) = q.items.iter().position(|(e, _)| *e) {
                q.items.remove(i);
                q.events -= 1;
                q.dropped += 1;
            }
        }
        q.events += usize::from(is_event);
        q.items.push_back((is_event, msg));
        cv.notify_one();
    }

    pub fn event(&self, line: &str) {
        self.push(true, event_message(line));
    }

    pub fn reply(&self, msg: String) {
        self.push(false, msg);
    }

    pub fn close(&self) {
        let (lock, cv) = &*self.inner;
        lock.lock().expect("outbox lock").closed = true;
        cv.notify_all();
    }

    /// Next message to send, with a drop notice first when events were
    /// lost. `None` once closed and drained.
    pub fn next(&self) -> Option<Vec<String>> {
        let (lock, cv) = &*self.inner;
        let mut q = lock.lock().expect("outbox lock");
        loop {
            if let Some((is_event, msg)) = q.items.pop_front() {
                q.events -= usize::from(is_event);
                let mut out = Vec::new();
                if q.dropped > 0 {
                    out.push(dropped_message(q.dropped));
                    q.dropped = 0;
                }
                out.push(msg);
                return Some(out);
            }
            if q.closed {
                return None;
            }
            q = cv.wait(q).expect("outbox lock");
        }
    }
}

impl LineSink for Outbox {
    fn line(&mut self, line: &str) {
        self.event(line);
    }
}

#[derive(Debug)]
enum Inbound {
    Command(u64, Command),
    Disconnected,
}

fn spawn_writer(stream: TcpStream, outbox: Outbox) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut w = BufWriter::new(stream.try_clone().expect("clone socket"));
        let mut alive = true;
        while let Some(msgs) = outbox.next() {
            if !alive {
                continue;
            }
            for m in msgs {
                alive &= writeln!(w, "{m}").is_ok();
            }
            alive &= w.flush().is_ok();
        }
        if alive {
            let _ = writeln!(w, "{}", end_message());
            let _ = w.flush();
        }
        let _ = stream.shutdown(Shutdown::Both);
    })
}

fn spawn_reader(stream: TcpStream, outbox: Outbox, tx: mpsc::Sender<Inbound>) -> JoinHandle<()> {
    thread::spawn(move || {
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match parse_request(&line) {
                Ok((seq, cmd)) => {
                    if tx.send(Inbound::Command(seq, cmd)).is_err() {
                        break;
                    }
                }
                Err((seq, message)) => outbox.reply(error_message(seq, &message)),
            }
        }
        let _ = tx.send(Inbound::Disconnected);
    })
}

/// Merges console commands into the driver loop.
struct ConsoleControl {
    rx: Receiver<Inbound>,
    outbox: Outbox,
    paused: bool,
    connected: bool,
    deferred: VecDeque<(u64, Command)>,
}

impl ConsoleControl {
    fn apply(
        &mut self,
        seq: u64,
        cmd: Command,
        engine: &mut Engine,
        rec: &mut Recorder<'_>,
        pacer: &mut Pacer,
    ) -> Result<(), HubError> {
        if self.paused && cmd != Command::Resume {
            if cmd == Command::Pause {
                // already paused: nothing to record
                self.outbox.reply(ack_message(seq));
            } else {
                self.deferred.push_back((seq, cmd));
            }
            return Ok(());
        }
        match cmd {
            Command::Pause => self.paused = true,
            Command::Resume => {
                self.paused = false;
                pacer.reanchor();
            }
            Command::SetSpeed { factor } => pacer.set_speed(factor),
            _ => {}
        }
        engine.handle(Input::Operator {
            t: engine.clock(),
            request: Some(seq),
            command: cmd,
        })?;
        rec.push(engine.take_lines())?;
        self.outbox.reply(ack_message(seq));
        if !self.paused {
            while let Some((s, c)) = self.deferred.pop_front() {
                self.apply(s, c, engine, rec, pacer)?;
                if self.paused {
                    break;
                }
            }
        }
        Ok(())
    }
}

impl Control for ConsoleControl {
    fn before_input(
        &mut self,
        engine: &mut Engine,
        rec: &mut Recorder<'_>,
        pacer: &mut Pacer,
    ) -> Result<(), HubError> {
        loop {
            let msg = if self.paused && self.connected {
                match self.rx.recv_timeout(Duration::from_millis(50)) {
                    Ok(m) => m,
                    Err(RecvTimeoutError::Timeout) => continue,
                    Err(RecvTimeoutError::Disconnected) => Inbound::Disconnected,
                }
            } else {
                match self.rx.try_recv() {
                    Ok(m) => m,
                    Err(_) => return Ok(()),
                }
            };
            match msg {
                Inbound::Command(seq, cmd) => self.apply(seq, cmd, engine, rec, pacer)?,
                Inbound::Disconnected => {
                    // a paused session without a console would never resume
                    self.connected = false;
                    if self.paused {
                        self.paused = false;
                        pacer.reanchor();
                    }
                }
            }
        }
    }
}

/// Waits for one console on `listener`, then runs the session with the
/// console attached. The console sees every log line; its commands are
/// recorded and applied between inputs.
pub fn serve(
    cfg: &SessionConfig,
    listener: TcpListener,
    session: SessionKind,
) -> Result<SessionSummary, HubError> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let mut outbox = Outbox::new(cfg.session_hub.console_queue);
    let writer = spawn_writer(stream.try_clone()?, outbox.clone());
    let (tx, rx) = mpsc::channel();
    let reader = spawn_reader(stream, outbox.clone(), tx);
    let mut control = ConsoleControl {
        rx,
        outbox: outbox.clone(),
        paused: cfg.session_hub.start_paused,
        connected: true,
        deferred: VecDeque::new(),
    };
    let result = run_with(cfg, session, &mut control, &mut outbox);
    if let Err(e) = &result {
        outbox.reply(error_message(None, &e.to_string()));
    }
    outbox.close();
    let _ = writer.join();
    let _ = reader.join();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use parbci::label;

    #[test]
    fn requests_parse() {
        assert_eq!(
            parse_request(r#"{"v":1,"seq":4,"cmd":"inject_par"}"#),
            Ok((4, Command::InjectPar))
        );
        assert_eq!(
            parse_request(r#"{"v":1,"seq":5,"cmd":"inject_mi","label":"left_hand"}"#),
            Ok((
                5,
                Command::InjectMi {
                    label: label("left_hand")
                }
            ))
        );
        assert_eq!(
            parse_request(r#"{"v":1,"seq":6,"cmd":"fly"}"#)
                .unwrap_err()
                .0,
            Some(6)
        );
        assert_eq!(
            parse_request(r#"{"v":1,"seq":7,"cmd":"set_speed","factor":0}"#)
                .unwrap_err()
                .0,
            Some(7)
        );
        assert_eq!(
            parse_request(r#"{"v":2,"seq":8,"cmd":"pause"}"#)
                .unwrap_err()
                .0,
            Some(8)
        );
        assert_eq!(parse_request("not json").unwrap_err().0, None);
    }

    #[test]
    fn outbox_drops_oldest_events_only() {
        let ob = Outbox::new(2);
        ob.event("{\"seq\":0}");
        ob.reply(ack_message(1));
        ob.event("{\"seq\":1}");
        ob.event("{\"seq\":2}");
        ob.close();
        let mut got = Vec::new();
        while let Some(m) = ob.next() {
            got.extend(m);
        }
        assert_eq!(got.len(), 4);
        assert!(got[0].contains("dropped") && got[0].contains("\"count\":1"));
        assert!(got[1].contains("ack"));
        assert!(got[2].ends_with("{\"seq\":1}}"));
    }
}
