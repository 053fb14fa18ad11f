//! A full TCP session: the server runs on one thread, the gate follower
//! connects as a client on another and flies the default course.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use raceforge::client::{fly, Connection};
use raceforge::config::Config;
use raceforge::pilots::GateFollower;
use raceforge::service::run_session;
use raceforge::sim::Simulator;

fn main() {
    let mut cfg = Config::builtin();
    cfg.service.as_fast_as_possible = true;
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    println!("serving on {addr}");

    let server = std::thread::spawn(move || {
        let mut sim = Simulator::from_config(&cfg, 7).unwrap();
        run_session::<std::io::Sink>(&listener, &mut sim, None, None).unwrap()
    });

    let started = Instant::now();
    let mut conn = Connection::connect(addr, Duration::from_secs(5)).unwrap();
    let info = conn.info().clone();
    println!("session: seed {} physics {} Hz imu {} Hz camera {} Hz, {} gates", info.seed, info.physics_rate, info.imu_rate, info.camera_rate, info.course.gates.len());
    let flight = fly(&mut conn, &mut GateFollower::default()).unwrap();
    let served = server.join().unwrap();
    println!("client: {:?} after {} messages", flight.outcome, flight.messages);
    println!("server: {} steps, {} messages sent, {:?}", served.steps, served.messages_sent, served.record);
    println!("wall time {:.2} s", started.elapsed().as_secs_f64());
}
