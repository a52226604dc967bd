//! Inputs shared by the benchmarks.

use std::sync::Arc;

use ksh_core::comparison::{random_map_pair, FieldParams};
use ksh_core::{build_grid_domain, AxisBox, GridSpec, MapState, PointCloudSpace, RegularBall, TargetPoint, TargetSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn unit_grid(n: usize, collar: f64) -> Arc<PointCloudSpace> {
    let spec = GridSpec {
        dimension: 2,
        n_per_side: n,
        interior_box: AxisBox::unit(2),
        collar,
    };
    Arc::new(build_grid_domain(&spec).expect("valid grid"))
}

pub fn north() -> TargetPoint {
    TargetPoint::from_slice(&[0.0, 0.0, 1.0])
}

/// Two smooth maps into the radius 1.2 ball of `S^2` with a common trace.
pub fn sphere_pair(space: &Arc<PointCloudSpace>, seed: u64) -> (MapState, MapState) {
    let target = TargetSpace::sphere(2).expect("sphere");
    let ball = RegularBall::new(&target, &north(), 1.2).expect("ball");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, v) = random_map_pair(space, &target, &ball, &FieldParams::default(), 0.2, &mut rng).expect("maps");
    (u.map, v.map)
}

/// The 1D geodesic benchmark: `n` interior points at unit spacing, two
/// exterior points per end carrying `exp_o(-0.8 e1)` and `exp_o(0.8 e1)`, all
/// interior values at the north pole.
pub fn chain(n: usize) -> MapState {
    let spec = GridSpec {
        dimension: 1,
        n_per_side: n,
        interior_box: AxisBox::new(vec![1.0], vec![n as f64]),
        collar: 2.0,
    };
    let space = Arc::new(build_grid_domain(&spec).expect("valid chain"));
    let target = TargetSpace::sphere(2).expect("sphere");
    let ball = RegularBall::new(&target, &north(), 1.2).expect("ball");
    let (s, c) = 0.8f64.sin_cos();
    let p = TargetPoint::from_slice(&[-s, 0.0, c]);
    let q = TargetPoint::from_slice(&[s, 0.0, c]);
    MapState::from_fn(space.clone(), target, ball, |i| {
        let x = space.coordinates(i).expect("coordinates")[0];
        if x < 1.0 {
            p.clone()
        } else if x > n as f64 {
            q.clone()
        } else {
            north()
        }
    })
    .expect("chain map")
}
