// Scratch closed-loop trace / micro-bench for scenario tuning.
use riskpath_core::scenario::{default_scenario, PlantKind};
use riskpath_core::ControllerKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("trace");
    match mode {
        "bench" => bench(),
        _ => trace(&args[2..]),
    }
}

fn bench() {
    let s = default_scenario();
    let track = s.build_track().unwrap();
    let mut controller = s.build_controller().unwrap();
    let x0 = s.initial_state(&track);
    controller.iterate(&x0, &track).unwrap();
    let iters = 10u32;
    let start = std::time::Instant::now();
    for _ in 0..iters {
        controller.iterate(&x0, &track).unwrap();
    }
    let elapsed = start.elapsed().as_secs_f64();
    let steps_per_iter = (s.mppi.samples * (s.risk.samples + 1) * s.mppi.horizon) as f64;
    println!(
        "M={} N={} K={}: {:.3} s/iter, {:.1} ns/rollout-step",
        s.mppi.samples,
        s.risk.samples,
        s.mppi.horizon,
        elapsed / iters as f64,
        elapsed / iters as f64 / steps_per_iter * 1e9
    );
}

fn trace(overrides: &[String]) {
    let mut s = default_scenario();
    s.run.laps = 2;
    s.run.stuck_timeout = 15.0;
    s.controller = ControllerKind::Mppi;
    s.plant.kind = PlantKind::None;
    s.plant.scale = None;
    for pair in overrides {
        let (k, v) = pair.split_once('=').expect("key=value");
        match k {
            "m" => s.mppi.samples = v.parse().unwrap(),
            "k" => s.mppi.horizon = v.parse().unwrap(),
            "n" => s.risk.samples = v.parse().unwrap(),
            "dt" => s.vehicle.dt = v.parse().unwrap(),
            "laps" => s.run.laps = v.parse().unwrap(),
            "sa" => s.mppi.noise_std_accel = v.parse().unwrap(),
            "ss" => s.mppi.noise_std_steer = v.parse().unwrap(),
            "gamma" => s.mppi.gamma = v.parse().unwrap(),
            "scale" => {
                s.plant.kind = PlantKind::Gaussian;
                s.plant.scale = Some(v.parse().unwrap());
            }
            "ra" => s.controller = ControllerKind::RaMppi,
            "obstacles" => {
                if v == "off" {
                    s.track.obstacle_placement = None;
                }
            }
            "seed" => s.run.seed = v.parse().unwrap(),
            _ => panic!("unknown key {k}"),
        }
    }
    let started = std::time::Instant::now();
    let outcome = riskpath_core::run_episode(&s).unwrap();
    let m = &outcome.metrics;
    let n = outcome.trajectory.len();
    for (i, row) in outcome.trajectory.iter().enumerate() {
        if i % 50 == 0 || i + 3 > n {
            println!(
                "t={:6.2} x={:7.3} y={:7.3} psi={:6.2} v={:6.3} s={:6.3} e={:7.3} d={:6.3}",
                row.t, row.state.x, row.state.y, row.state.psi, row.state.v, row.s, row.e, row.d
            );
        }
    }
    let mean_v: f64 =
        outcome.trajectory.iter().map(|r| r.state.v).sum::<f64>() / n as f64;
    println!(
        "laps={} collisions={} (b={}, o={}) iters={} mean_lap={:?} mean_v={:.3} wall={:.1}s abort={:?}",
        m.laps_completed,
        m.total_collisions(),
        m.boundary_collisions,
        m.obstacle_collisions,
        m.iterations,
        m.mean_lap_time,
        mean_v,
        started.elapsed().as_secs_f64(),
        m.abort_reason
    );
}

#[allow(dead_code)]
fn micro() {}
