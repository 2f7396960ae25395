//! Temporary experiment harness (deleted before release).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use ssadr::ddpg::{DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use ssadr::envs::*;
use ssadr::selfplay::BurstExplorer;

fn eval_stats(agent: &DdpgAgent, seed: u64) -> (f64, f64) {
    let space = RandomizationSpace::for_env(EnvKind::Pusher, RangeMode::Calibrated);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (mut total, mut succ) = (0.0, 0.0);
    let n = 20;
    for _ in 0..n {
        let mut env = make_env(&space, &space.reference_params(), EnvKind::Pusher).unwrap();
        let goal = sample_goal(EnvKind::Pusher, &mut rng);
        env.reset(goal).unwrap();
        let mut dummy = ChaCha12Rng::seed_from_u64(0);
        while !env.is_done() {
            let a = agent
                .act(&env.state().to_vec(), goal, false, &mut dummy)
                .unwrap();
            let r = env.step(&a).unwrap();
            if r.success {
                succ += 1.0;
            }
        }
        total += env.distance_to_goal();
    }
    (total / n as f64, succ / n as f64)
}

fn run(tau: f64, capacity: usize, label: &str) {
    let space = RandomizationSpace::for_env(EnvKind::Pusher, RangeMode::Calibrated);
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let mut agent = DdpgAgent::new(
        DdpgConfig {
            state_dim: 8,
            action_dim: 2,
            hidden: (64, 64),
            tau,
            ..DdpgConfig::default()
        },
        &mut rng,
    );
    let mut buf = ReplayBuffer::new(capacity);
    let mut steps = 0u64;
    let mut line = format!("{label}:");
    while steps < 60_000 {
        let goal = sample_goal(EnvKind::Pusher, &mut rng);
        let mut env = make_env(&space, &space.reference_params(), EnvKind::Pusher).unwrap();
        env.reset(goal).unwrap();
        let uniform_episode = steps >= 1000 && rng.random::<f64>() < 0.1;
        let mix = if steps < 1000 || uniform_episode { 1.0 } else { 0.1 };
        let mut explorer = BurstExplorer::new(2, 8.0);
        while !env.is_done() && steps < 60_000 {
            let s = env.state().to_vec();
            let a = match explorer.step(mix, &mut rng) {
                Some(a) => a,
                None => agent.act(&s, goal, true, &mut rng).unwrap(),
            };
            let r = env.step(&a).unwrap();
            steps += 1;
            buf.push(Transition {
                state: s,
                action: a,
                reward: r.reward,
                next_state: r.next_state,
                done: r.success,
                goal,
            });
            if steps > 1000 {
                agent.update(&buf, &mut rng).unwrap();
            }
            if steps % 15_000 == 0 {
                let (d, sr) = eval_stats(&agent, 1234);
                line.push_str(&format!(" {}k:d={d:.3},s={sr:.2}", steps / 1000));
            }
        }
    }
    println!("{line}");
}

fn main() {
    let variants = [
        (0.02, 100_000usize, "tau=0.02 cap=100k"),
        (0.05, 100_000, "tau=0.05 cap=100k"),
        (0.02, 20_000, "tau=0.02 cap=20k "),
        (0.05, 20_000, "tau=0.05 cap=20k "),
    ];
    std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(tau, cap, label)| scope.spawn(move || run(*tau, *cap, label)))
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    });
}
