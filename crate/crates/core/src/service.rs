//! TCP session server. The physics loop is the only writer of simulation
//! state; a reader thread deposits the newest client command into a
//! single-slot mailbox and a writer thread drains a bounded outbound queue.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::control::RateCommand;
use crate::protocol::{decode_message, encode_message, Payload, ProtocolError};
use crate::race::{Outcome, RaceRecord};
use crate::runlog::{RunLogWriter, RACE_START};
use crate::sim::{Sequencer, Simulator};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no client connected within {0:?}")]
    AcceptTimeout(Duration),
    #[error("network error: {0}")]
    Io(#[from] std::io::Error),
    #[error("run log: {0}")]
    Log(#[from] crate::runlog::LogError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub outcome: Outcome,
    pub record: RaceRecord,
    /// Physics steps executed.
    pub steps: u64,
    pub messages_sent: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Default)]
struct Inbox {
    command: Option<RateCommand>,
    generation: u64,
    armed: bool,
    closed: bool,
    errors: Vec<ProtocolError>,
}

#[derive(Default)]
struct Mailbox {
    inbox: Mutex<Inbox>,
    ready: Condvar,
}

impl Mailbox {
    fn update(&self, f: impl FnOnce(&mut Inbox)) {
        let mut g = self.inbox.lock().expect("mailbox lock");
        f(&mut g);
        self.ready.notify_all();
    }

    /// Waits until `pred` holds or `timeout` passes; returns the final guard state via `f`.
    fn wait_for<T>(&self, timeout: Duration, pred: impl Fn(&Inbox) -> bool, f: impl FnOnce(&mut Inbox) -> T) -> T {
        let g = self.inbox.lock().expect("mailbox lock");
        let (mut g, _) = self.ready.wait_timeout_while(g, timeout, |i| !pred(i)).expect("mailbox lock");
        f(&mut g)
    }
}

fn reader_loop(stream: TcpStream, mailbox: Arc<Mailbox>) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if !line.ends_with('\n') {
            // connection closed mid-line
            let e = decode_message(&line).err();
            mailbox.update(|i| i.errors.extend(e));
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        match decode_message(&line) {
            Ok(m) => match m.payload {
                Payload::RateCommand { body_rate, thrust } => {
                    let cmd = RateCommand::new(body_rate, thrust);
                    if cmd.is_valid() {
                        mailbox.update(|i| {
                            i.command = Some(cmd);
                            i.generation += 1;
                        });
                    } else {
                        let e = ProtocolError { message: "rate_command must be finite with thrust >= 0".into(), offset: None };
                        mailbox.update(|i| i.errors.push(e));
                    }
                }
                Payload::Arm {} => mailbox.update(|i| i.armed = true),
                other => {
                    let e = ProtocolError { message: format!("unexpected client message `{}`", other.type_name()), offset: None };
                    mailbox.update(|i| i.errors.push(e));
                }
            },
            Err(e) => mailbox.update(|i| i.errors.push(e)),
        }
    }
    mailbox.update(|i| i.closed = true);
}

fn writer_loop(stream: TcpStream, rx: std::sync::mpsc::Receiver<String>, failed: Arc<AtomicBool>) {
    let mut w = BufWriter::with_capacity(1 << 16, stream);
    while let Ok(first) = rx.recv() {
        let mut ok = w.write_all(first.as_bytes()).is_ok();
        while ok {
            match rx.try_recv() {
                Ok(more) => ok = w.write_all(more.as_bytes()).is_ok(),
                Err(_) => break,
            }
        }
        if !ok || w.flush().is_err() {
            failed.store(true, Ordering::SeqCst);
            break;
        }
    }
    let _ = w.flush();
}

struct Outbound<'a> {
    tx: SyncSender<String>,
    seq: Sequencer,
    sent: u64,
    transcript: Option<&'a mut dyn Write>,
    back_pressure: bool,
    failed: Arc<AtomicBool>,
}

impl Outbound<'_> {
    fn send(&mut self, sim_time: f64, p: Payload) {
        if self.back_pressure {
            return;
        }
        let line = encode_message(&self.seq.stamp(sim_time, p));
        if let Some(t) = self.transcript.as_mut() {
            let _ = t.write_all(line.as_bytes());
        }
        match self.tx.try_send(line) {
            Ok(()) => self.sent += 1,
            Err(TrySendError::Full(_)) => self.back_pressure = true,
            Err(TrySendError::Disconnected(_)) => self.failed.store(true, Ordering::SeqCst),
        }
    }

    fn broken(&self) -> bool {
        self.failed.load(Ordering::SeqCst)
    }
}

/// Waits for one client on `listener`, then runs one episode to completion.
/// Messages are optionally mirrored to `transcript` and steps to `log`.
pub fn run_session<W: Write>(
    listener: &TcpListener,
    sim: &mut Simulator,
    log: Option<&mut RunLogWriter<W>>,
    transcript: Option<&mut dyn Write>,
) -> Result<SessionOutcome, ServiceError> {
    let timeout = Duration::from_secs_f64(sim.config().service.accept_timeout);
    let stream = accept_client(listener, timeout, &mut || true)?;
    serve_session(stream, sim, log, transcript)
}

/// Runs one episode over an accepted connection.
pub fn serve_session<W: Write>(
    stream: TcpStream,
    sim: &mut Simulator,
    mut log: Option<&mut RunLogWriter<W>>,
    transcript: Option<&mut dyn Write>,
) -> Result<SessionOutcome, ServiceError> {
    let svc = sim.config().service.clone();
    let accept_timeout = Duration::from_secs_f64(svc.accept_timeout);
    stream.set_nodelay(true)?;
    stream.set_write_timeout(Some(Duration::from_secs_f64(svc.lockstep_timeout)))?;

    let mailbox = Arc::new(Mailbox::default());
    let failed = Arc::new(AtomicBool::new(false));
    let (tx, rx) = sync_channel::<String>(svc.queue_capacity);
    let reader: JoinHandle<()> = {
        let s = stream.try_clone()?;
        let mb = Arc::clone(&mailbox);
        std::thread::spawn(move || reader_loop(s, mb))
    };
    let writer: JoinHandle<()> = {
        let s = stream.try_clone()?;
        let f = Arc::clone(&failed);
        std::thread::spawn(move || writer_loop(s, rx, f))
    };
    let mut out = Outbound { tx, seq: Sequencer::default(), sent: 0, transcript, back_pressure: false, failed };

    out.send(sim.sim_time(), sim.hello());
    out.send(sim.sim_time(), Payload::Config(Box::new(sim.session_info())));

    let lockstep_timeout = Duration::from_secs_f64(svc.lockstep_timeout);
    let armed = mailbox.wait_for(accept_timeout, |i| i.armed || i.closed, |i| i.armed);
    let mut note = None;
    sim.arm();
    if !armed {
        sim.abort(Outcome::Disconnected);
        note = Some("client did not arm".to_string());
    }
    if let Some(l) = log.as_deref_mut() {
        l.record(sim.step_index(), sim.sim_time(), sim.state(), &[])?;
    }

    let imu_rate = sim.config().imu.publish_rate;
    let frame_steps = u64::from(sim.clock().rate_hz() / sim.config().camera.frame_rate).max(1);
    let mut consumed = 0u64;
    let mut deadline = Instant::now();
    let mut busy = Duration::ZERO;
    loop {
        let t = sim.sim_time();
        let imu_due = sim.clock().is_due(imu_rate);
        for p in sim.publish() {
            out.send(t, p);
        }
        let errors = mailbox.wait_for(Duration::ZERO, |_| true, |i| std::mem::take(&mut i.errors));
        for e in errors {
            log::warn!("client protocol error: {e}");
            out.send(t, e.to_payload());
        }
        if sim.is_over() {
            break;
        }
        if out.back_pressure {
            sim.abort(Outcome::Error);
            note = Some("outbound queue full".into());
            continue;
        }
        if out.broken() {
            sim.abort(Outcome::Disconnected);
            note.get_or_insert_with(|| "client stopped reading".into());
            continue;
        }
        let (cmd, closed) = if svc.lockstep && imu_due {
            let wait_start = Instant::now();
            let seen = consumed;
            let r = mailbox.wait_for(
                lockstep_timeout,
                |i| i.generation > seen || i.closed,
                |i| {
                    let fresh = (i.generation > consumed).then_some(i.command).flatten();
                    consumed = i.generation;
                    (fresh, i.closed && fresh.is_none())
                },
            );
            if r.0.is_none() && !r.1 {
                note = Some(format!("no command within {:?}", wait_start.elapsed()));
                sim.abort(Outcome::Disconnected);
                continue;
            }
            r
        } else {
            mailbox.wait_for(Duration::ZERO, |_| true, |i| {
                let fresh = (i.generation > consumed).then_some(i.command).flatten();
                consumed = i.generation;
                (fresh, i.closed)
            })
        };
        if closed {
            sim.abort(Outcome::Disconnected);
            note.get_or_insert_with(|| "client disconnected".into());
            continue;
        }
        if let Some(c) = cmd {
            if sim.apply_command(c) {
                if let Some(l) = log.as_deref_mut() {
                    l.mark(RACE_START);
                }
            }
        }
        let step_start = Instant::now();
        let report = sim.step();
        if let Some(l) = log.as_deref_mut() {
            l.record(report.step, sim.sim_time(), sim.state(), &report.events)?;
        }
        if !svc.as_fast_as_possible {
            busy += step_start.elapsed();
            if report.step.is_multiple_of(frame_steps) {
                let nominal = frame_steps as f64 * sim.clock().dt();
                sim.clock_mut().update_rate_scale(busy.as_secs_f64().max(1e-9), nominal);
                busy = Duration::ZERO;
            }
            deadline += Duration::from_secs_f64(sim.clock().wall_step());
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else if now - deadline > Duration::from_millis(250) {
                deadline = now;
            }
        }
    }

    let sent = out.sent;
    drop(out);
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    Ok(SessionOutcome {
        outcome: sim.outcome().unwrap_or(Outcome::Error),
        record: sim.record(),
        steps: sim.step_index(),
        messages_sent: sent,
        note,
    })
}

/// Accepts one connection. Gives up after `timeout`, or as soon as
/// `keep_waiting` returns false.
pub fn accept_client(
    listener: &TcpListener,
    timeout: Duration,
    keep_waiting: &mut dyn FnMut() -> bool,
) -> Result<TcpStream, ServiceError> {
    listener.set_nonblocking(true)?;
    let start = Instant::now();
    let result = loop {
        match listener.accept() {
            Ok((s, _)) => break Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if start.elapsed() >= timeout || !keep_waiting() {
                    break Err(ServiceError::AcceptTimeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => break Err(e.into()),
        }
    };
    listener.set_nonblocking(false)?;
    let s = result?;
    s.set_nonblocking(false)?;
    Ok(s)
}
