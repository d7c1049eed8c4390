//! The per-step reward across separations, with and without reaching the
//! goal, and at the time limit.
use camrl::reward::{compute_reward, RewardConfig};

fn main() {
    let cfg = RewardConfig::default();
    println!("{:>10}  {:>8}  {:>8}  {:>8}", "separation", "moving", "at goal", "t = 25");
    for d in [-0.1, 0.0, 0.05, 0.1, 0.15, 0.2, 0.5, f64::INFINITY] {
        println!(
            "{d:>10}  {:>8.4}  {:>8.4}  {:>8.4}",
            compute_reward(d, false, 5.0, &cfg),
            compute_reward(d, true, 5.0, &cfg),
            compute_reward(d, false, cfg.time_limit, &cfg)
        );
    }
}
