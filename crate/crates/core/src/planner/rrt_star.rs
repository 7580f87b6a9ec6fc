use std::time::Instant;

use super::{failure, sample_state, steer, PlanResult, PlanStatus, PlannerConfig, Tree};
use crate::env::{goal_reached, segment_free, Env};
use crate::planner::retrieve_plan;
use crate::rng::{stream_rng, streams};

/// RRT* with a fixed neighborhood radius.
///
/// Runs the full iteration budget and returns the cheapest goal vertex found;
/// `first_solution_iteration` records when the goal was first reached.
pub fn plan_rrt_star(env: &Env, cfg: &PlannerConfig) -> PlanResult {
    plan_rrt_star_with_tree(env, cfg).0
}

pub fn plan_rrt_star_with_tree(env: &Env, cfg: &PlannerConfig) -> (PlanResult, Tree) {
    let started = Instant::now();
    let obstacles = env.obstacles();
    let mut rng = stream_rng(cfg.rng_seed, streams::UNIFORM, 0);
    let mut tree = Tree::new(env.initial_position());
    let mut goal_vertices = Vec::new();
    let mut first_solution = None;
    let mut i = 0;
    while i < cfg.max_iterations {
        let target = sample_state(&mut rng, env.bounds());
        let nearest = tree.nearest(target);
        let from = tree.point(nearest);
        let new = steer(from, target, cfg.delta);
        i += 1;
        if new == from || !segment_free(from, new, obstacles) {
            continue;
        }

        let mut near = tree.near(new, cfg.rewire_radius);
        if !near.contains(&nearest) {
            near.push(nearest);
        }

        // Choose parent.
        let mut parent = nearest;
        let mut best = tree.cost_from_root(nearest) + from.dist(new);
        for &j in &near {
            let c = tree.cost_from_root(j) + tree.point(j).dist(new);
            if c < best && segment_free(tree.point(j), new, obstacles) {
                parent = j;
                best = c;
            }
        }
        let idx = tree.add(new, parent);

        // Rewire through the new vertex. An ancestor of `idx` always costs
        // less than `idx`, so the cost test alone keeps the graph acyclic.
        for &j in &near {
            if j == parent {
                continue;
            }
            let c = tree.cost_from_root(idx) + new.dist(tree.point(j));
            if c < tree.cost_from_root(j) && segment_free(new, tree.point(j), obstacles) {
                tree.rewire(j, idx);
            }
        }

        if goal_reached(new, env, cfg.epsilon, cfg.goal_mode) {
            goal_vertices.push(idx);
            first_solution.get_or_insert(i);
        }
    }

    let best_goal = goal_vertices.iter().copied().min_by(|&a, &b| {
        tree.cost_from_root(a)
            .total_cmp(&tree.cost_from_root(b))
            .then(a.cmp(&b))
    });
    let result = match best_goal {
        Some(g) => PlanResult {
            status: PlanStatus::Success,
            path: retrieve_plan(&tree, g),
            iterations_used: i,
            tree_size: tree.len(),
            vlm_queries: 0,
            oracle_failures: 0,
            first_solution_iteration: first_solution,
            wall_time: started.elapsed().as_secs_f64(),
        },
        None => failure(&tree, i, started),
    };
    (result, tree)
}
