//! Proposes lane-change and speed-change trajectories for a synthetic
//! world and prints how far each drifts from the original drive.

use splat4d::ntgm::{propose_lane_change, propose_speed_change, SafetyContext};
use splat4d::worldgen::{synth_scene, SceneConfig};

fn main() -> splat4d::Result<()> {
    let world = synth_scene(&SceneConfig::default(), 11)?;
    let ori = world.ego_start_traj();
    let ctx = SafetyContext::from_world(&world, 2.0)?;

    let lane = propose_lane_change(&ori, &ctx, 0.1, 1)?;
    let last = lane.frames().last().unwrap().pose.translation();
    println!("lane change: final lateral offset {:.2} m", last.y - ori.frames().last().unwrap().pose.translation().y);

    for factor in [0.5, 1.5, 2.0] {
        let fast = propose_speed_change(&ori, factor)?;
        let x = fast.frames().last().unwrap().pose.translation().x;
        println!("speed x{factor}: travels {x:.1} m");
    }

    // an agent parked on the ego's start position makes the proposal infeasible
    let mut agents = world.agent_positions();
    agents[0].push((99, nalgebra::Vector2::zeros()));
    let blocked = SafetyContext::new(world.drivable_area.clone(), agents, 2.0)?;
    match propose_lane_change(&ori, &blocked, 0.1, 1) {
        Err(e) => println!("blocked start: {e}"),
        Ok(_) => println!("blocked start unexpectedly accepted"),
    }
    Ok(())
}
