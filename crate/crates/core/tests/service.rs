//! Socket-level behaviour of a session: handshake, lockstep, malformed
//! input, disconnects and throughput.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use raceforge::client::{fly, fly_local, ClientError, Connection};
use raceforge::config::Config;
use raceforge::control::RateCommand;
use raceforge::pilots::{GateFollower, HoverPilot};
use raceforge::protocol::{decode_message, Payload};
use raceforge::race::Outcome;
use raceforge::runlog::RunLogWriter;
use raceforge::service::{run_session, SessionOutcome};
use raceforge::sim::Simulator;

fn fast_config() -> Config {
    let mut c = Config::builtin();
    c.service.as_fast_as_possible = true;
    c.service.accept_timeout = 5.0;
    c.race.time_limit = 5.0;
    c
}

fn serve(cfg: Config, seed: u64) -> (SocketAddr, JoinHandle<SessionOutcome>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = std::thread::spawn(move || {
        let mut sim = Simulator::from_config(&cfg, seed).unwrap();
        run_session(&listener, &mut sim, None::<&mut RunLogWriter<Vec<u8>>>, None).unwrap()
    });
    (addr, h)
}

fn hover_thrust() -> RateCommand {
    RateCommand::new(Vector3::zeros(), 9.81)
}

#[test]
fn handshake_carries_the_session_config() {
    let cfg = fast_config();
    let (addr, h) = serve(cfg.clone(), 4);
    let conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    let info = conn.info();
    assert_eq!(info.seed, 4);
    assert_eq!(info.physics_rate, cfg.physics.rate_hz);
    assert_eq!(info.imu_rate, cfg.imu.publish_rate);
    assert_eq!(info.course.gates.len(), cfg.load_course().unwrap().gates.len());
    assert!(info.lockstep);
    drop(conn);
    let out = h.join().unwrap();
    assert_eq!(out.outcome, Outcome::Disconnected);
}

#[test]
fn closing_mid_episode_is_a_disconnect() {
    let (addr, h) = serve(fast_config(), 1);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    conn.arm().unwrap();
    let mut imu = 0;
    while imu < 50 {
        let m = conn.recv().unwrap().expect("server open");
        if matches!(m.payload, Payload::Imu { .. }) {
            imu += 1;
            conn.send_command(&hover_thrust()).unwrap();
        }
    }
    drop(conn);
    let out = h.join().unwrap();
    assert_eq!(out.outcome, Outcome::Disconnected);
    assert!(out.steps >= 49 * 4, "{} steps", out.steps);
}

#[test]
fn silent_client_hits_the_lockstep_timeout() {
    let mut cfg = fast_config();
    cfg.service.lockstep_timeout = 0.3;
    let (addr, h) = serve(cfg, 1);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    conn.arm().unwrap();
    let t0 = Instant::now();
    let mut end = None;
    while let Some(m) = conn.recv().unwrap() {
        if let Payload::RaceEnd { outcome, .. } = m.payload {
            end = Some(outcome);
        }
    }
    let out = h.join().unwrap();
    assert_eq!(end, Some(Outcome::Disconnected));
    assert_eq!(out.outcome, Outcome::Disconnected);
    assert!(out.note.unwrap().contains("no command"));
    assert!(t0.elapsed() < Duration::from_secs(3));
}

fn read_until(reader: &mut impl BufRead, mut stop: impl FnMut(&Payload) -> bool, writer: &mut TcpStream) -> Vec<Payload> {
    let mut seen = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap() == 0 {
            return seen;
        }
        let p = decode_message(&line).unwrap().payload;
        if matches!(p, Payload::Imu { .. }) {
            writer.write_all(b"{\"type\":\"rate_command\",\"body_rate\":[0,0,0],\"thrust\":9.81}\n").unwrap();
        }
        let done = stop(&p);
        seen.push(p);
        if done {
            return seen;
        }
    }
}

#[test]
fn malformed_lines_get_a_protocol_error_and_the_session_goes_on() {
    let (addr, h) = serve(fast_config(), 1);
    let mut stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    stream.write_all(b"{\"type\":\"arm\"}\n{not json\n").unwrap();
    let seen = read_until(&mut reader, |p| matches!(p, Payload::ProtocolError { .. }), &mut stream);
    let Some(Payload::ProtocolError { offset, .. }) = seen.last() else { panic!("no protocol_error in {seen:?}") };
    assert_eq!(*offset, Some(1));

    stream.write_all(b"{\"type\":\"rate_command\",\"body_rate\":[0,0,0],\"thrust\":-1}\n").unwrap();
    let seen = read_until(&mut reader, |p| matches!(p, Payload::ProtocolError { .. }), &mut stream);
    let Some(Payload::ProtocolError { message, .. }) = seen.last() else { panic!("no second protocol_error") };
    assert!(message.contains("thrust"), "{message}");

    let more = read_until(&mut reader, |p| matches!(p, Payload::Imu { .. }), &mut stream);
    assert!(matches!(more.last(), Some(Payload::Imu { .. })));
    drop(stream);
    assert_eq!(h.join().unwrap().outcome, Outcome::Disconnected);
}

#[test]
fn non_finite_commands_are_rejected_before_sending() {
    let (addr, h) = serve(fast_config(), 1);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    for bad in [
        RateCommand::new(Vector3::new(f64::NAN, 0.0, 0.0), 9.81),
        RateCommand::new(Vector3::zeros(), f64::INFINITY),
        RateCommand::new(Vector3::zeros(), -1.0),
    ] {
        assert!(matches!(conn.send_command(&bad), Err(ClientError::InvalidCommand(_))));
    }
    drop(conn);
    h.join().unwrap();
}

#[test]
fn connecting_to_a_closed_port_fails_quickly() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let t0 = Instant::now();
    let r = Connection::connect(format!("127.0.0.1:{port}").as_str(), Duration::from_secs(5));
    assert!(matches!(r, Err(ClientError::Connect { .. })));
    assert!(t0.elapsed() < Duration::from_secs(5));
}

#[test]
fn server_closing_during_the_handshake_is_reported() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let h = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let hello = "{\"type\":\"hello\",\"sim_time\":0.0,\"seq\":0,\"protocol_version\":1,\"server\":\"x\",\"session_id\":\"1\",\"version\":\"0\"}\n";
        s.write_all(hello.as_bytes()).unwrap();
    });
    let r = Connection::connect(addr, Duration::from_secs(5));
    h.join().unwrap();
    match r {
        Err(ClientError::Handshake(m)) => assert!(m.contains("config"), "{m}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("handshake should fail"),
    }
}

#[test]
fn without_lockstep_a_silent_client_falls() {
    let mut cfg = fast_config();
    cfg.service.lockstep = false;
    let (addr, h) = serve(cfg, 1);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    assert!(!conn.info().lockstep);
    conn.arm().unwrap();
    let mut end = None;
    while let Some(m) = conn.recv().unwrap() {
        if let Payload::RaceEnd { outcome, record } = m.payload {
            end = Some((outcome, record));
        }
    }
    let out = h.join().unwrap();
    let (outcome, record) = end.expect("race_end");
    assert_eq!(outcome, Outcome::Collision);
    assert!(record.collided && record.score == 0.0);
    assert_eq!(out.outcome, Outcome::Collision);
}

#[test]
fn keeps_up_with_a_command_every_physics_step() {
    let mut cfg = fast_config();
    cfg.imu.publish_rate = cfg.physics.rate_hz;
    cfg.race.time_limit = 5.0;
    let (addr, h) = serve(cfg, 2);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    let t0 = Instant::now();
    let summary = fly(&mut conn, &mut HoverPilot::default()).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let out = h.join().unwrap();
    assert_eq!(summary.outcome, Outcome::Timeout);
    let commands_per_second = out.steps as f64 / wall;
    assert!(out.steps >= 4800, "{} steps", out.steps);
    assert!(commands_per_second > 960.0, "{commands_per_second:.0} commands/s");
}

#[test]
fn remote_and_in_process_flights_agree() {
    let mut cfg = fast_config();
    cfg.race.time_limit = 20.0;
    let (addr, h) = serve(cfg.clone(), 9);
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    let remote = fly(&mut conn, &mut GateFollower::default()).unwrap();
    h.join().unwrap();

    let mut sim = Simulator::from_config(&cfg, 9).unwrap();
    let local = fly_local(&mut sim, &mut GateFollower::default());
    assert_eq!(remote.outcome, local.outcome);
    assert_eq!(remote.record, local.record);
    assert!(remote.record.gates_passed >= 1);
}
