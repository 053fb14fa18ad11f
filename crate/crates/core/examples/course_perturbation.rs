//! Per-seed course variations: gate offsets and yaw changes stay within
//! two sigma of the nominal layout.

use raceforge::config::Config;
use raceforge::scene::{course_length, perturb_course};

fn main() {
    let cfg = Config::builtin();
    let nominal = cfg.load_course().unwrap();
    println!("{}: {} gates, {:.1} m", nominal.name, nominal.gates.len(), course_length(&nominal));
    for seed in [1001, 1002, 1003] {
        let c = perturb_course(&nominal, seed, cfg.course.translation_sigma, cfg.course.yaw_sigma);
        println!("seed {seed}: {:.1} m", course_length(&c));
        for (a, b) in nominal.gates.iter().zip(&c.gates).take(4) {
            let dyaw = b.normal.y.atan2(b.normal.x) - a.normal.y.atan2(a.normal.x);
            let d = b.center - a.center;
            println!("  gate {:2}: offset ({:+.3}, {:+.3}, {:+.3}) m  yaw {:+.4} rad", a.id, d.x, d.y, d.z, dyaw);
        }
    }
}
