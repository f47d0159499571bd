use std::collections::VecDeque;

use sil_core::env::{
    encode_cell, env_step, generate_demos, load_demos, write_demos, Actor, EnvKind, Expert, DEMO_FILE, MANIFEST_FILE,
};
use sil_core::eval::eval_reward;
use sil_core::rng::seeded;
use sil_core::EnvSpec;

/// Breadth-first distances to the goal on an open grid.
fn bfs_distances(side: usize, goal: [usize; 2]) -> Vec<Vec<usize>> {
    let mut dist = vec![vec![usize::MAX; side]; side];
    dist[goal[0]][goal[1]] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some([x, y]) = queue.pop_front() {
        let neighbours = [(x + 1, y), (x.wrapping_sub(1), y), (x, y + 1), (x, y.wrapping_sub(1))];
        for (nx, ny) in neighbours {
            if nx < side && ny < side && dist[nx][ny] == usize::MAX {
                dist[nx][ny] = dist[x][y] + 1;
                queue.push_back([nx, ny]);
            }
        }
    }
    dist
}

#[test]
fn gridworld_expert_return_is_minus_shortest_path_over_all_starts() {
    let spec = EnvSpec::gridworld(8);
    let EnvKind::Gridworld(g) = &spec.kind else { unreachable!() };
    let dist = bfs_distances(g.side, g.goal);
    let mut expert = Expert::for_env(&spec).unwrap();
    let mut rng = seeded(0);
    let (mut total, mut starts) = (0.0, 0);
    for x in 0..g.side {
        for y in 0..g.side {
            if [x, y] == g.goal {
                continue;
            }
            let mut state = encode_cell(g, x, y);
            let mut ret = 0.0;
            for _ in 0..spec.horizon {
                let choice = expert.act(&state, &mut rng, false).unwrap();
                let out = env_step(&spec, &state, &choice.env_action).unwrap();
                ret += out.env_reward;
                state = out.next_state;
                if out.done {
                    break;
                }
            }
            // The step that lands on the goal is free.
            assert_eq!(ret, -((dist[x][y] - 1) as f64), "start ({x}, {y})");
            total += ret;
            starts += 1;
        }
    }
    let exact_mean = total / starts as f64;
    let sampled = eval_reward(&expert, &spec, 2000, 3, false).unwrap();
    // Sampling error of a mean over 2000 uniform starts.
    assert!((sampled.mean_return - exact_mean).abs() < 0.25, "{} vs {exact_mean}", sampled.mean_return);
    assert_eq!(sampled.success_rate, 1.0);
}

#[test]
fn pointmass_expert_reaches_the_goal() {
    let spec = EnvSpec::pointmass();
    let expert = Expert::for_env(&spec).unwrap();
    let report = eval_reward(&expert, &spec, 50, 1, false).unwrap();
    assert_eq!(report.success_rate, 1.0);
}

#[test]
fn demo_generation_is_reproducible_on_disk() {
    let spec = EnvSpec::gridworld(8);
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str| {
        let demos = generate_demos(&spec, 3, 4, 11).unwrap();
        let path = dir.path().join(name);
        write_demos(&path, &demos.manifest, &demos.trajectories).unwrap();
        path
    };
    let (a, b) = (write("a"), write("b"));
    for file in [DEMO_FILE, MANIFEST_FILE] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
    }
    let text = std::fs::read_to_string(a.join(DEMO_FILE)).unwrap();
    assert_eq!(text.lines().count(), 3);

    let loaded = load_demos(&a).unwrap();
    assert_eq!(loaded.manifest.subsample_factor, 4);
    assert_eq!(loaded.manifest.seed, 11);
    assert_eq!(loaded.trajectories, generate_demos(&spec, 3, 4, 11).unwrap().trajectories);
}

#[test]
fn demos_are_nested_across_counts() {
    let spec = EnvSpec::gridworld(8);
    let small = generate_demos(&spec, 2, 4, 5).unwrap();
    let large = generate_demos(&spec, 8, 4, 5).unwrap();
    assert_eq!(small.trajectories[..], large.trajectories[..2]);
}
