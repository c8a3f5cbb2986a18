// temp micro-profile
use riskpath_core::dynamics::*;
use riskpath_core::rng::*;
use riskpath_core::track::*;

fn main() {
    let track = Track::build(&TrackConfig::stadium()).unwrap();
    println!("grid mean candidates: {:.2}", track.grid_mean_candidates());
    let weights = CostWeights::default();
    let vehicle = VehicleParams::default();
    let model = DisturbanceModel::gaussian(0.0004);
    let n = 5_000_000u64;

    // Pre-generate query points to exclude generator cost.
    let mut rng = Streams::new(3).stream(StreamDomain::Test, 9, 0, 0);
    let points: Vec<[f64; 2]> = (0..4096)
        .map(|_| [rng.uniform() * 4.4 - 0.5, rng.uniform() * 3.0 - 0.5])
        .collect();

    // baseline: point iteration only
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[(i & 4095) as usize];
        acc += p[0] - p[1];
    }
    println!("loop baseline: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // project only
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[(i & 4095) as usize];
        let pr = track.project(p);
        acc += pr.s + pr.e;
    }
    println!("project: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // obstacle_cost only
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[(i & 4095) as usize];
        acc += track.obstacle_cost(p);
    }
    println!("obstacle_cost: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // boundary_cost only
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[(i & 4095) as usize];
        acc += boundary_cost(p[0] * 0.1);
    }
    println!("boundary_cost: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // full probe + cost
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let p = points[(i & 4095) as usize];
        let probe = track.probe(p);
        acc += weights.c1 * boundary_cost(probe.d)
            + weights.c2 * track.obstacle_cost(p)
            + weights.c3 * probe.e * probe.e;
    }
    println!("probe+cost: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // normals
    let mut rng = Streams::new(1).stream(StreamDomain::Test, 0, 0, 0);
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        acc += rng.normal();
    }
    println!("normal: {:.1} ns (acc {acc:.1})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // full disturbance sample (4 channels)
    let mut rng = Streams::new(1).stream(StreamDomain::Test, 1, 0, 0);
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let w = sample_disturbance(&model, &mut rng);
        acc += w[0] + w[3];
    }
    println!("sample_disturbance(gauss4): {:.1} ns (acc {acc:.3})", start.elapsed().as_secs_f64() / n as f64 * 1e9);

    // dynamics step chain
    let mut s = State::new(0.0, 0.0, 0.0, 0.5);
    let u = ControlInput::new(0.1, 0.05);
    let start = std::time::Instant::now();
    for _ in 0..n {
        s = step_disturbed(&s, &u, &[1e-9, 0.0, 0.0, 0.0], &vehicle);
        if s.x > 3.0 {
            s.x = 0.0;
        }
    }
    println!("step chain: {:.1} ns (s.x {:.3})", start.elapsed().as_secs_f64() / n as f64 * 1e9, s.x);
}
