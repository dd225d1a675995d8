// debug: replicate the harness loop with prints at the stuck step
use skelnav::belief::{BeliefEngine, OracleProvider};
use skelnav::harness::{ProviderKind, RunConfig};
use skelnav::mapping::{update_object_map, update_occupancy, update_value_map, ScenarioCaptions};
use skelnav::planner::{cluster_frontiers, plan_astar_to_any, CostMode};
use skelnav::policy::{NavContext, Policy};
use skelnav::scenario::{generate_apartment, GenParams};
use skelnav::sim::{apply_action, forward_cell, observe, Action, SensorConfig};
use skelnav::grid::Cell;

fn main() {
    let scenario = generate_apartment(3, GenParams::default());
    let world = &scenario.world;
    let mut cfg = RunConfig::default();
    
    cfg.seed = 1;
    let sensor = SensorConfig::default();
    let captions = ScenarioCaptions::new(world);
    let engine = BeliefEngine::new(Box::new(skelnav::belief::CooccurrenceProvider::new(world)));
    let mut ctx = NavContext::new(world.dims, engine);
    let mut pose = scenario.start;
    let relevance = skelnav::mapping::CooccurrenceRelevance::new(world);

    for (si, goal) in scenario.subtasks.iter().enumerate() {
        ctx.reset_for_subtask();
        let mut policy = Policy::new(goal.clone(), cfg.nav_config());
        for step in 0..cfg.step_budget {
            let obs = observe(world, pose, &sensor, step);
            update_occupancy(&mut ctx.grid, &obs);
            let score = skelnav::mapping::RelevanceProvider::relevance(&relevance, &obs, goal);
            update_value_map(&mut ctx.vmap, &obs, score);
            update_object_map(&mut ctx.omap, &obs, &captions);
            let action = policy.step(&mut ctx, pose);
            if si == 0 && step < 6 {
                let agent_cell = world.dims.cell_of(pose.point());
                println!("== sub {si} step {step}: pose ({:.3},{:.3},{:.3}) cell {agent_cell:?} stage {} action {action:?}", pose.x, pose.y, pose.heading, policy.stage.name());
                let frontiers = cluster_frontiers(&ctx.grid, 3);
                println!("frontiers: {frontiers:?}");
                for f in &frontiers {
                    let p = plan_astar_to_any(&ctx.grid, agent_cell, &[*f], CostMode::DiscountUnknown);
                    match p { Ok(path) => println!("  to {f:?}: path len {} first {:?}", path.len(), &path[..path.len().min(5)]), Err(_) => println!("  to {f:?}: NO PATH") }
                }
                println!("fw cell: {:?} state {:?}", forward_cell(world, pose), forward_cell(world, pose).map(|c| ctx.grid.state(c)));
                println!("neighbors of cell: {:?}", [(-1,0),(1,0),(0,-1),(0,1)].map(|(dx,dy)| ctx.grid.state(Cell::new(agent_cell.x+dx, agent_cell.y+dy))));
            }
            if action == Action::Stop { break; }
            let r = apply_action(world, pose, action);
            if r.collided { if let Some(c) = forward_cell(world, pose) { ctx.grid.add_collision_evidence(c); } }
            pose = r.pose;
        }
        println!("subtask {si} done at ({:.2},{:.2})", pose.x, pose.y);
        if si == 3 { break; }
    }
}
