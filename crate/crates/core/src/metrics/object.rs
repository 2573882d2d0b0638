use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geometry::{linalg, PointSet3, RigidPose};

/// Average distance between model points under the predicted and true poses.
pub fn add_metric(model_points: &PointSet3, pred: &RigidPose, gt: &RigidPose) -> f64 {
    let total: f64 = model_points
        .points()
        .iter()
        .map(|p| linalg::norm(linalg::sub(pred.apply(*p), gt.apply(*p))))
        .sum();
    total / model_points.len() as f64
}

/// One object instance evaluated for ADD-0.5D.
#[derive(Debug, Clone)]
pub struct AddSample {
    pub object_id: String,
    pub model_points: PointSet3,
    pub diameter: f64,
    /// `None` when no pose was produced; counts as a miss.
    pub pred: Option<RigidPose>,
    pub gt: RigidPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddReport {
    /// ADD-0.5D success rate per object id, in percent.
    pub per_instance: BTreeMap<String, f64>,
    /// Unweighted mean over object ids.
    pub average: f64,
}

/// Success when `ADD < 0.5 · diameter`.
pub fn add_half_diameter(samples: &[AddSample]) -> Result<AddReport, MetricsError> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in samples {
        if !(s.diameter > 0.0 && s.diameter.is_finite()) {
            return Err(MetricsError::InvalidDiameter(s.diameter));
        }
        let hit = s
            .pred
            .as_ref()
            .is_some_and(|p| add_metric(&s.model_points, p, &s.gt) < 0.5 * s.diameter);
        let entry = counts.entry(&s.object_id).or_default();
        entry.0 += usize::from(hit);
        entry.1 += 1;
    }
    let per_instance: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(id, (hits, total))| (id.to_string(), 100.0 * hits as f64 / total as f64))
        .collect();
    let average = if per_instance.is_empty() {
        0.0
    } else {
        per_instance.values().sum::<f64>() / per_instance.len() as f64
    };
    Ok(AddReport {
        per_instance,
        average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation3;
    use std::f64::consts::PI;

    fn pair() -> PointSet3 {
        PointSet3::new(vec![[-10.0, 0.0, 0.0], [10.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn add_zero_for_exact_pose() {
        let pose = RigidPose::new(Rotation3::rot_x(0.3), [1.0, 2.0, 500.0]);
        assert_eq!(add_metric(&pair(), &pose, &pose), 0.0);
    }

    #[test]
    fn add_translation_offset() {
        let gt = RigidPose::new(Rotation3::rot_y(0.2), [0.0, 0.0, 500.0]);
        let pred = RigidPose::new(gt.rotation, [0.0, 10.0, 500.0]);
        assert!((add_metric(&pair(), &pred, &gt) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn add_half_turn_about_symmetric_axis() {
        // Turning a symmetric pair by π about z through its centroid swaps the
        // points; each moves by the pair's full extent.
        let gt = RigidPose::IDENTITY;
        let pred = RigidPose::new(Rotation3::rot_z(PI), [0.0; 3]);
        let pts = pair();
        let explicit: f64 = pts
            .points()
            .iter()
            .map(|p| linalg::norm(linalg::sub(pred.apply(*p), gt.apply(*p))))
            .sum::<f64>()
            / 2.0;
        assert!((add_metric(&pts, &pred, &gt) - explicit).abs() < 1e-12);
        assert!((explicit - 20.0).abs() < 1e-9);
    }

    fn sample(id: &str, pred: Option<RigidPose>) -> AddSample {
        AddSample {
            object_id: id.into(),
            model_points: pair(),
            diameter: 20.0,
            pred,
            gt: RigidPose::IDENTITY,
        }
    }

    #[test]
    fn add_half_diameter_counts() {
        let exact = add_half_diameter(&[
            sample("a", Some(RigidPose::IDENTITY)),
            sample("b", Some(RigidPose::IDENTITY)),
        ])
        .unwrap();
        assert_eq!(exact.average, 100.0);
        assert_eq!(exact.per_instance["a"], 100.0);

        let miss = RigidPose::new(Rotation3::IDENTITY, [0.0, 0.0, 50.0]);
        let half = add_half_diameter(&[
            sample("a", Some(RigidPose::IDENTITY)),
            sample("a", Some(miss)),
        ])
        .unwrap();
        assert_eq!(half.per_instance["a"], 50.0);
        assert_eq!(half.average, 50.0);

        let none = add_half_diameter(&[sample("a", None)]).unwrap();
        assert_eq!(none.average, 0.0);
    }

    #[test]
    fn average_is_unweighted_over_instances() {
        let miss = RigidPose::new(Rotation3::IDENTITY, [0.0, 0.0, 50.0]);
        let r = add_half_diameter(&[
            sample("a", Some(RigidPose::IDENTITY)),
            sample("a", Some(RigidPose::IDENTITY)),
            sample("a", Some(RigidPose::IDENTITY)),
            sample("b", Some(miss)),
        ])
        .unwrap();
        assert_eq!(r.average, 50.0);
    }

    #[test]
    fn rejects_non_positive_diameter() {
        let mut s = sample("a", None);
        s.diameter = 0.0;
        assert!(matches!(
            add_half_diameter(&[s]),
            Err(MetricsError::InvalidDiameter(_))
        ));
    }
}
