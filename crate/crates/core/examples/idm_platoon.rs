//! A platoon in one lane behind a braking leader, integrated with the
//! plain simulator API. Prints the smallest bumper gap reached.

use lanebench::sim::{
    collision_pairs, control_leader, idm_control, kmh, step, Control, Controls, IdmParams, RoadModel, VehicleId,
    VehicleState, WorldState, DEFAULT_DT,
};

fn main() {
    let road = RoadModel::new(2, 5000.0).unwrap();
    let idm = IdmParams::default();
    let vehicles: Vec<VehicleState> = (0..8)
        .map(|i| VehicleState::at_lane_center(VehicleId(i), &road, 0, 400.0 - 25.0 * i as f64, kmh(50.0)))
        .collect();
    let mut world = WorldState::new(road, vehicles, VehicleId(7)).unwrap();
    let mut min_gap = f64::INFINITY;

    for k in 0..3000 {
        let mut controls = Controls::new();
        for v in &world.vehicles {
            let leader = control_leader(&world, v.id);
            if let Some(l) = &leader {
                min_gap = min_gap.min(l.gap);
            }
            // The head of the platoon brakes to 20 km/h between 10 s and 20 s.
            let p = if v.id == VehicleId(0) && (100..200).contains(&k) {
                idm.with_desired_speed(kmh(20.0))
            } else {
                idm
            };
            controls.insert(
                v.id,
                Control {
                    accel: idm_control(v.speed, leader.as_ref(), &p),
                    lane_change: None,
                },
            );
        }
        world = step(&world, DEFAULT_DT, &controls);
        assert!(collision_pairs(&world).is_empty(), "collision at step {k}");
        if k % 500 == 0 {
            let speeds: Vec<String> = world.vehicles.iter().map(|v| format!("{:5.1}", v.speed * 3.6)).collect();
            println!("t={:6.1}s  km/h: {}", world.time, speeds.join(" "));
        }
    }
    println!("3000 steps, no collisions, smallest gap {min_gap:.2} m");
}
