//! Client side of the wire protocol and a driver that flies a [`Pilot`]
//! against either a TCP server or an in-process simulator.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::control::RateCommand;
use crate::protocol::{decode_message, encode_message, Message, Payload, ProtocolError, SessionInfo};
use crate::race::{Outcome, RaceRecord};
use crate::sim::{Sequencer, Simulator};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("connection error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("invalid command: {0:?}")]
    InvalidCommand(RateCommand),
    #[error("server closed the connection")]
    Closed,
}

pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    info: SessionInfo,
    line: String,
}

impl Connection {
    /// Connects and completes the hello/config handshake within `timeout`.
    pub fn connect(addr: impl ToSocketAddrs + std::fmt::Display, timeout: Duration) -> Result<Self, ClientError> {
        let name = addr.to_string();
        let err = |source| ClientError::Connect { addr: name.clone(), source };
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(err)?.collect();
        let first = addrs.first().ok_or_else(|| {
            err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "address did not resolve"))
        })?;
        let stream = TcpStream::connect_timeout(first, timeout).map_err(err)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        let mut next = |what: &str| -> Result<Message, ClientError> {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) => Err(ClientError::Handshake(format!("server closed before {what}"))),
                Ok(_) => decode_message(&line).map_err(|e| ClientError::Handshake(e.to_string())),
                Err(e) => Err(ClientError::Handshake(format!("waiting for {what}: {e}"))),
            }
        };
        let hello = next("hello")?;
        if !matches!(hello.payload, Payload::Hello { .. }) {
            return Err(ClientError::Handshake(format!("expected hello, got {}", hello.payload.type_name())));
        }
        let info = match next("config")?.payload {
            Payload::Config(info) => *info,
            other => return Err(ClientError::Handshake(format!("expected config, got {}", other.type_name()))),
        };
        stream.set_read_timeout(None)?;
        Ok(Self { reader, writer: BufWriter::new(stream), info, line })
    }

    pub fn info(&self) -> &SessionInfo {
        &self.info
    }

    /// Bounds how long [`Connection::recv`] blocks.
    pub fn set_read_timeout(&self, t: Option<Duration>) -> Result<(), ClientError> {
        self.reader.get_ref().set_read_timeout(t)?;
        Ok(())
    }

    fn send(&mut self, p: Payload) -> Result<(), ClientError> {
        self.writer.write_all(encode_message(&Message::client(p)).as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn arm(&mut self) -> Result<(), ClientError> {
        self.send(Payload::Arm {})
    }

    /// Rejects non-finite values locally, before anything is sent.
    pub fn send_command(&mut self, cmd: &RateCommand) -> Result<(), ClientError> {
        if !cmd.is_valid() {
            return Err(ClientError::InvalidCommand(*cmd));
        }
        self.send(Payload::rate_command(cmd))
    }

    /// Next message, or `None` once the server has closed the stream.
    pub fn recv(&mut self) -> Result<Option<Message>, ClientError> {
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Ok(None);
        }
        Ok(Some(decode_message(&self.line)?))
    }
}

/// Controller logic behind a session. `command` is asked for after every
/// IMU message and its answer is sent straight back.
pub trait Pilot {
    fn on_session(&mut self, _info: &SessionInfo) {}
    fn observe(&mut self, msg: &Message);
    fn command(&mut self) -> RateCommand;
}

impl<P: Pilot + ?Sized> Pilot for Box<P> {
    fn on_session(&mut self, info: &SessionInfo) {
        (**self).on_session(info)
    }
    fn observe(&mut self, msg: &Message) {
        (**self).observe(msg)
    }
    fn command(&mut self) -> RateCommand {
        (**self).command()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlightSummary {
    pub outcome: Outcome,
    pub record: RaceRecord,
    pub messages: u64,
}

/// Arms the session and flies until `race_end` or the server closes.
pub fn fly(conn: &mut Connection, pilot: &mut dyn Pilot) -> Result<FlightSummary, ClientError> {
    pilot.on_session(&conn.info.clone());
    conn.arm()?;
    let mut messages = 0;
    loop {
        let Some(msg) = conn.recv()? else { return Err(ClientError::Closed) };
        messages += 1;
        pilot.observe(&msg);
        match &msg.payload {
            Payload::Imu { .. } => {
                let cmd = pilot.command();
                // the server may finish the race before reading this
                if let Err(e) = conn.send_command(&cmd) {
                    if matches!(e, ClientError::InvalidCommand(_)) {
                        return Err(e);
                    }
                }
            }
            Payload::RaceEnd { outcome, record } => {
                return Ok(FlightSummary { outcome: *outcome, record: *record, messages });
            }
            _ => {}
        }
    }
}

/// Runs a pilot against an in-process simulator with the same message
/// order and command timing as a lockstep TCP session.
pub fn fly_local(sim: &mut Simulator, pilot: &mut dyn Pilot) -> FlightSummary {
    let mut seq = Sequencer::default();
    let mut messages = 0;
    pilot.on_session(&sim.session_info());
    sim.arm();
    loop {
        let t = sim.sim_time();
        let mut cmd = None;
        for p in sim.publish() {
            let is_imu = matches!(p, Payload::Imu { .. });
            let msg = seq.stamp(t, p);
            messages += 1;
            pilot.observe(&msg);
            if is_imu {
                cmd = Some(pilot.command());
            }
        }
        if sim.is_over() {
            break;
        }
        if let Some(c) = cmd {
            sim.apply_command(c);
        }
        sim.step();
    }
    FlightSummary { outcome: sim.outcome().unwrap_or(Outcome::Error), record: sim.record(), messages }
}
