//! Maps from a sample space into a target space.

use std::sync::Arc;

use crate::domain::PointCloudSpace;
use crate::error::{Error, Result};
use crate::target::{Geometry, RegularBall, TargetPoint, TargetSpace};

/// Values of a map `X -> Y` together with its boundary trace.
///
/// Every value lies in `ball`, and the values on exterior points are the
/// trace, bit for bit.
#[derive(Debug, Clone)]
pub struct MapState {
    domain: Arc<PointCloudSpace>,
    target: TargetSpace,
    ball: RegularBall,
    values: Vec<TargetPoint>,
    trace: Arc<Vec<(usize, TargetPoint)>>,
}

impl MapState {
    /// Builds a map from one value per point; the trace is read off the
    /// exterior values.
    pub fn new(
        domain: Arc<PointCloudSpace>,
        target: TargetSpace,
        ball: RegularBall,
        values: Vec<TargetPoint>,
    ) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Mismatch(format!(
                "{} values for {} points",
                values.len(),
                domain.len()
            )));
        }
        let dim = target.ambient_dim();
        for (i, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidTarget(format!(
                    "value {i} has {} coordinates, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidTarget(format!("value {i} is not finite")));
            }
            if !ball.contains(&target, v) {
                return Err(Error::OutsideBall {
                    point: i,
                    distance: target.distance(&ball.center, v),
                    radius: ball.radius,
                });
            }
        }
        let trace = domain
            .exterior_ids()
            .map(|i| (i, values[i].clone()))
            .collect();
        Ok(Self {
            domain,
            target,
            ball,
            values,
            trace: Arc::new(trace),
        })
    }

    pub fn from_fn(
        domain: Arc<PointCloudSpace>,
        target: TargetSpace,
        ball: RegularBall,
        f: impl Fn(usize) -> TargetPoint,
    ) -> Result<Self> {
        let values = (0..domain.len()).map(f).collect();
        Self::new(domain, target, ball, values)
    }

    /// Builds a map whose exterior values are taken from `trace` and whose
    /// interior values come from `interior`.
    pub fn with_trace(
        domain: Arc<PointCloudSpace>,
        target: TargetSpace,
        ball: RegularBall,
        trace: &[(usize, TargetPoint)],
        interior: impl Fn(usize) -> TargetPoint,
    ) -> Result<Self> {
        let n = domain.len();
        let mut values: Vec<Option<TargetPoint>> = vec![None; n];
        for (i, p) in trace {
            if *i >= n || domain.is_interior(*i) {
                return Err(Error::Mismatch(format!("trace entry {i} is not an exterior point")));
            }
            values[*i] = Some(p.clone());
        }
        let mut out = Vec::with_capacity(n);
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Some(p) => out.push(p),
                None if domain.is_interior(i) => out.push(interior(i)),
                None => return Err(Error::TraceMismatch(i)),
            }
        }
        Self::new(domain, target, ball, out)
    }

    /// Real-valued map; the ball is centered at 0 and just covers the values.
    pub fn real(domain: Arc<PointCloudSpace>, values: Vec<f64>) -> Result<Self> {
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let radius = if max > 0.0 { max } else { 1.0 };
        let target = TargetSpace::real_line();
        let ball = RegularBall::new(&target, &[0.0], radius)?;
        let values = values
            .into_iter()
            .map(|v| TargetPoint::from_slice(&[v]))
            .collect();
        Self::new(domain, target, ball, values)
    }

    pub fn domain(&self) -> &Arc<PointCloudSpace> {
        &self.domain
    }

    pub fn target(&self) -> &TargetSpace {
        &self.target
    }

    pub fn ball(&self) -> &RegularBall {
        &self.ball
    }

    pub fn values(&self) -> &[TargetPoint] {
        &self.values
    }

    #[inline]
    pub fn value(&self, i: usize) -> &TargetPoint {
        &self.values[i]
    }

    /// First coordinate of every value; meaningful for real-valued maps.
    pub fn scalar_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    pub fn trace(&self) -> &[(usize, TargetPoint)] {
        &self.trace
    }

    /// Replaces an interior value.
    pub fn set_interior(&mut self, i: usize, p: TargetPoint) -> Result<()> {
        if !self.domain.is_interior(i) {
            return Err(Error::Precondition(format!("point {i} is exterior")));
        }
        if !self.ball.contains(&self.target, &p) {
            return Err(Error::OutsideBall {
                point: i,
                distance: self.target.distance(&self.ball.center, &p),
                radius: self.ball.radius,
            });
        }
        self.values[i] = p;
        Ok(())
    }

    /// Whether `self` and `other` live on the same domain and target.
    pub fn compatible(&self, other: &MapState) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) && self.target == other.target
    }

    /// Whether the exterior values of both maps agree bit for bit.
    pub fn same_trace(&self, other: &MapState) -> bool {
        self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(other.trace.iter())
                .all(|((i, p), (j, q))| i == j && bits_equal(p, q))
    }

    /// Checks that the exterior values still equal the recorded trace.
    pub fn check_trace(&self) -> Result<()> {
        for (i, p) in self.trace.iter() {
            if !bits_equal(p, &self.values[*i]) {
                return Err(Error::TraceMismatch(*i));
            }
        }
        Ok(())
    }

    pub(crate) fn require_compatible(&self, other: &MapState, what: &str) -> Result<()> {
        if !Arc::ptr_eq(&self.domain, &other.domain) {
            return Err(Error::Mismatch(format!("{what}: maps live on different domains")));
        }
        if self.target != other.target {
            return Err(Error::Mismatch(format!("{what}: maps have different targets")));
        }
        Ok(())
    }
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid_domain, AxisBox, GridSpec};

    fn line() -> Arc<PointCloudSpace> {
        Arc::new(
            build_grid_domain(&GridSpec {
                dimension: 1,
                n_per_side: 5,
                interior_box: AxisBox::unit(1),
                collar: 0.5,
            })
            .unwrap(),
        )
    }

    #[test]
    fn trace_is_the_exterior_values() {
        let d = line();
        let u = MapState::real(d.clone(), (0..d.len()).map(|i| i as f64).collect()).unwrap();
        let ext: Vec<usize> = d.exterior_ids().collect();
        assert_eq!(u.trace().iter().map(|t| t.0).collect::<Vec<_>>(), ext);
        u.check_trace().unwrap();
    }

    #[test]
    fn exterior_values_cannot_be_set() {
        let d = line();
        let mut u = MapState::real(d.clone(), vec![0.5; d.len()]).unwrap();
        let e = d.exterior_ids().next().unwrap();
        assert!(u.set_interior(e, TargetPoint::from_slice(&[0.0])).is_err());
        let i = d.interior_ids().next().unwrap();
        u.set_interior(i, TargetPoint::from_slice(&[0.25])).unwrap();
        assert!(u.set_interior(i, TargetPoint::from_slice(&[9.0])).is_err());
    }

    #[test]
    fn values_outside_the_ball_are_rejected() {
        let d = line();
        let s = TargetSpace::sphere(2).unwrap();
        let ball = RegularBall::new(&s, &[0.0, 0.0, 1.0], 0.5).unwrap();
        let far = TargetPoint::from_slice(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            MapState::from_fn(d, s, ball, |_| far.clone()),
            Err(Error::OutsideBall { .. })
        ));
    }

    #[test]
    fn with_trace_keeps_exterior_values() {
        let d = line();
        let u = MapState::real(d.clone(), (0..d.len()).map(|i| i as f64 * 0.1).collect()).unwrap();
        let v = MapState::with_trace(
            d.clone(),
            *u.target(),
            u.ball().clone(),
            u.trace(),
            |_| TargetPoint::from_slice(&[0.0]),
        )
        .unwrap();
        assert!(u.same_trace(&v));
        let w = MapState::real(d.clone(), vec![0.0; d.len()]).unwrap();
        assert!(!u.same_trace(&w));
    }
}
