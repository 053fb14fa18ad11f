//! Encoding and decoding wire messages, including the error a malformed
//! line produces.

use nalgebra::Vector3;
use raceforge::config::Config;
use raceforge::control::RateCommand;
use raceforge::protocol::{decode_message, encode_message, Message, Payload};
use raceforge::sim::{Sequencer, Simulator};

fn main() {
    let cmd = Message::client(Payload::rate_command(&RateCommand::new(Vector3::new(0.0, 0.1, 0.0), 9.81)));
    let line = encode_message(&cmd);
    print!("{line}");
    println!("round trip ok: {}", decode_message(&line).unwrap() == cmd);

    let mut sim = Simulator::from_config(&Config::builtin(), 7).unwrap();
    sim.arm();
    let mut seq = Sequencer::default();
    let t = sim.sim_time();
    for p in sim.publish() {
        let line = encode_message(&seq.stamp(t, p));
        let line = line.trim_end();
        let short: String = line.chars().take(110).collect();
        println!("{short}{}", if line.len() > 110 { " ..." } else { "" });
    }

    for bad in ["{\"type\":\"rate_command\",\"body_rate\":[0,0],\"thrust\":1}", "{\"type\":\"imu\""] {
        println!("{bad}\n  -> {}", decode_message(bad).unwrap_err());
    }
}
