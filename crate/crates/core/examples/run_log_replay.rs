//! Writes a run log for a short scripted flight, replays it to recompute
//! the record, then tampers with a row and shows the mismatch.

use raceforge::client::{fly_local, Pilot};
use raceforge::config::Config;
use raceforge::pilots::GateFollower;
use raceforge::protocol::Message;
use raceforge::control::RateCommand;
use raceforge::runlog::{RunLog, RunLogWriter, RACE_START};
use raceforge::sim::{Sequencer, Simulator};

fn main() {
    let cfg = Config::builtin();
    let mut sim = Simulator::from_config(&cfg, 7).unwrap();
    let mut log = RunLogWriter::new(Vec::new(), &sim.log_header(None)).unwrap();
    let mut pilot = GateFollower::default();
    let mut seq = Sequencer::default();

    pilot.on_session(&sim.session_info());
    sim.arm();
    log.record(0, sim.sim_time(), sim.state(), &[]).unwrap();
    while !sim.is_over() {
        let t = sim.sim_time();
        let mut cmd: Option<RateCommand> = None;
        for p in sim.publish() {
            let is_imu = matches!(p, raceforge::protocol::Payload::Imu { .. });
            let m: Message = seq.stamp(t, p);
            pilot.observe(&m);
            if is_imu {
                cmd = Some(pilot.command());
            }
        }
        if sim.is_over() {
            break;
        }
        if let Some(c) = cmd {
            if sim.apply_command(c) {
                log.mark(RACE_START);
            }
        }
        let r = sim.step();
        log.record(r.step, sim.sim_time(), sim.state(), &r.events).unwrap();
    }
    let bytes = log.finish().unwrap();
    println!("log: {} bytes, live record {:?}", bytes.len(), sim.record());

    let parsed = RunLog::from_reader(&bytes[..]).unwrap();
    let (replayed, outcome) = parsed.replay().unwrap();
    println!("replayed: {replayed:?} {outcome:?}  match={}", replayed == sim.record());

    // shift the row that crosses the first gate 5 m sideways, outside the aperture
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let i = lines.iter().position(|l| l.contains("gate_passed:")).unwrap();
    let mut cols: Vec<String> = lines[i].split(',').map(str::to_string).collect();
    cols[3] = format!("{}", cols[3].parse::<f64>().unwrap() + 5.0);
    lines[i] = cols.join(",");
    let tampered = RunLog::from_reader(lines.join("\n").as_bytes()).unwrap();
    let (t, _) = tampered.replay().unwrap();
    println!("tampered replay: {t:?}  match={}", t == sim.record());

    // the in-process driver gives the same record as the loop above
    let mut again = Simulator::from_config(&cfg, 7).unwrap();
    let s = fly_local(&mut again, &mut GateFollower::default());
    println!("fly_local: {:?}", s.record);
}
