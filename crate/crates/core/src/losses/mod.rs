//! Hand, object-grid, enhancement and total training losses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::{is_enhancement_eligible, DataprepError, HandAnnotation};
use crate::fusion::{multihead_attention, AttentionParams, FusionError};
use crate::geometry::PointSet3;
use crate::tensor::FeatureTensor;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch in {what}: {pred} vs {gt}")]
    ShapeMismatch {
        what: &'static str,
        pred: usize,
        gt: usize,
    },
    #[error("invalid {0}")]
    Invalid(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Dataprep(#[from] DataprepError),
}

/// How a residual is reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Euclidean norm / sum of absolute values over the flattened residual.
    #[default]
    Sum,
    /// Root-mean-square / mean absolute value.
    Mean,
}

fn check(what: &'static str, pred: usize, gt: usize) -> Result<(), LossError> {
    if pred != gt {
        return Err(LossError::ShapeMismatch { what, pred, gt });
    }
    Ok(())
}

fn l2(pred: &[f64], gt: &[f64], reduction: Reduction) -> f64 {
    let sq: f64 = pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum();
    match reduction {
        Reduction::Sum => sq.sqrt(),
        Reduction::Mean if pred.is_empty() => 0.0,
        Reduction::Mean => (sq / pred.len() as f64).sqrt(),
    }
}

fn l1(pred: &[f64], gt: &[f64], reduction: Reduction) -> f64 {
    let s: f64 = pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum();
    match reduction {
        Reduction::Sum => s,
        Reduction::Mean if pred.is_empty() => 0.0,
        Reduction::Mean => s / pred.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub gamma_init: f64,
    pub gamma_roi: f64,
    pub gamma_mano: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            gamma_init: 0.1,
            gamma_roi: 0.1,
            gamma_mano: 0.5,
        }
    }
}

impl LossWeights {
    pub fn new(
        alpha: f64,
        gamma_init: f64,
        gamma_roi: f64,
        gamma_mano: f64,
    ) -> Result<Self, LossError> {
        let w = Self {
            alpha,
            gamma_init,
            gamma_roi,
            gamma_mano,
        };
        if [alpha, gamma_init, gamma_roi, gamma_mano]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(LossError::Invalid(format!("loss weights {w:?}")));
        }
        Ok(w)
    }
}

/// Dense hand prediction or target.
#[derive(Debug, Clone, PartialEq)]
pub struct HandOutput {
    pub joints_2d: Vec<[f64; 2]>,
    pub joints_3d: PointSet3,
    pub vertices: PointSet3,
    pub mano_pose: Vec<f64>,
    pub mano_shape: Vec<f64>,
}

impl HandOutput {
    /// Resolves external vertex files relative to `base_dir`.
    pub fn from_annotation(hand: &HandAnnotation, base_dir: &Path) -> Result<Self, LossError> {
        let vertices = hand
            .vertices_3d
            .as_ref()
            .ok_or_else(|| LossError::Invalid("hand annotation without vertices".into()))?
            .resolve(base_dir)?;
        Ok(Self {
            joints_2d: hand.joints_2d.clone(),
            joints_3d: hand.joints_3d.clone(),
            vertices,
            mano_pose: hand.mano_pose.clone(),
            mano_shape: hand.mano_shape.clone(),
        })
    }

    fn params(&self) -> Vec<f64> {
        self.mano_pose
            .iter()
            .chain(&self.mano_shape)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandLoss {
    pub joints: f64,
    pub vertices: f64,
    pub mano: f64,
    pub total: f64,
}

/// `L^h = (‖J²ᴰ−Ĵ²ᴰ‖ + ‖J³ᴰ−Ĵ³ᴰ‖) + ‖V−V̂‖ + ‖(θ;β)−(θ̂;β̂)‖`.
pub fn hand_loss(
    pred: &HandOutput,
    gt: &HandOutput,
    reduction: Reduction,
) -> Result<HandLoss, LossError> {
    check("joints_2d", pred.joints_2d.len(), gt.joints_2d.len())?;
    check("joints_3d", pred.joints_3d.len(), gt.joints_3d.len())?;
    check("vertices", pred.vertices.len(), gt.vertices.len())?;
    check("mano_pose", pred.mano_pose.len(), gt.mano_pose.len())?;
    check("mano_shape", pred.mano_shape.len(), gt.mano_shape.len())?;
    let flat2 = |v: &[[f64; 2]]| v.iter().flatten().copied().collect::<Vec<_>>();
    let joints = l2(&flat2(&pred.joints_2d), &flat2(&gt.joints_2d), reduction)
        + l2(
            &pred.joints_3d.flatten(),
            &gt.joints_3d.flatten(),
            reduction,
        );
    let vertices = l2(&pred.vertices.flatten(), &gt.vertices.flatten(), reduction);
    let mano = l2(&pred.params(), &gt.params(), reduction);
    Ok(HandLoss {
        joints,
        vertices,
        mano,
        total: joints + vertices + mano,
    })
}

/// Default number of object keypoints per grid cell (box corners).
pub const DEFAULT_OBJECT_KEYPOINTS: usize = 8;

/// Per grid cell, `keypoints` pixel locations with confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    cells: usize,
    keypoints: usize,
    points: Vec<[f64; 2]>,
    confidences: Vec<f64>,
}

impl GridPrediction {
    /// `points` and `confidences` are cell-major (`cells × keypoints`).
    pub fn new(
        cells: usize,
        keypoints: usize,
        points: Vec<[f64; 2]>,
        confidences: Vec<f64>,
    ) -> Result<Self, LossError> {
        check("grid points", points.len(), cells * keypoints)?;
        check("grid confidences", confidences.len(), cells * keypoints)?;
        if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(LossError::Invalid("confidence outside [0, 1]".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LossError::Invalid("non-finite grid location".into()));
        }
        Ok(Self {
            cells,
            keypoints,
            points,
            confidences,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn keypoints(&self) -> usize {
        self.keypoints
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }
}

/// `Σ_g Σ_k ‖p − p̂‖₁ + ‖c − ĉ‖₁`, supervised only on grasping frames.
pub fn object_grid_loss(
    pred: &GridPrediction,
    gt: &GridPrediction,
    grasping: bool,
    reduction: Reduction,
) -> Result<f64, LossError> {
    check("grid cells", pred.cells, gt.cells)?;
    check("grid keypoints", pred.keypoints, gt.keypoints)?;
    if !grasping {
        return Ok(0.0);
    }
    let p: Vec<f64> = pred.points.iter().flatten().copied().collect();
    let g: Vec<f64> = gt.points.iter().flatten().copied().collect();
    let entries = pred.points.len();
    let total = l1(&p, &g, Reduction::Sum) + l1(&pred.confidences, &gt.confidences, Reduction::Sum);
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean if entries == 0 => 0.0,
        Reduction::Mean => total / entries as f64,
    })
}

/// Features of one image at the three enhancement levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFeatures {
    pub init: FeatureTensor,
    pub roi: FeatureTensor,
    /// Sequence-major (`L × d`) input of the attention adapter.
    pub mano: FeatureTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnhancementLosses {
    pub init: f64,
    pub roi: f64,
    pub mano: f64,
}

fn check_tensor(what: &'static str, a: &FeatureTensor, b: &FeatureTensor) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::ShapeMismatch {
            what,
            pred: a.len(),
            gt: b.len(),
        });
    }
    Ok(())
}

/// L1 distances between original and de-occluded features; the MANO level
/// compares adapter outputs. All zero unless `eligible`.
pub fn enhancement_losses(
    original: &LevelFeatures,
    deoccluded: &LevelFeatures,
    adapter: &AttentionParams,
    eligible: bool,
    reduction: Reduction,
) -> Result<EnhancementLosses, LossError> {
    check_tensor("init features", &original.init, &deoccluded.init)?;
    check_tensor("roi features", &original.roi, &deoccluded.roi)?;
    check_tensor("mano features", &original.mano, &deoccluded.mano)?;
    if !eligible {
        return Ok(EnhancementLosses::default());
    }
    let ha = multihead_attention(&original.mano, adapter)?;
    let hb = multihead_attention(&deoccluded.mano, adapter)?;
    Ok(EnhancementLosses {
        init: l1(original.init.data(), deoccluded.init.data(), reduction),
        roi: l1(original.roi.data(), deoccluded.roi.data(), reduction),
        mano: l1(ha.data(), hb.data(), reduction),
    })
}

/// [`enhancement_losses`] gated by occlusion proportion and grasp label.
pub fn gated_enhancement_losses(
    original: &LevelFeatures,
    deoccluded: &LevelFeatures,
    adapter: &AttentionParams,
    occlusion: f64,
    grasping: bool,
    tau: f64,
    reduction: Reduction,
) -> Result<EnhancementLosses, LossError> {
    let eligible = is_enhancement_eligible(occlusion, grasping, tau);
    enhancement_losses(original, deoccluded, adapter, eligible, reduction)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub hand: f64,
    pub object: f64,
    pub switcher: f64,
    pub init: f64,
    pub roi: f64,
    pub mano: f64,
}

/// `L^h + L^o + α·L^s + γ_init·L_init + γ_RoI·L_RoI + γ_MANO·L_MANO`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.hand
        + c.object
        + w.alpha * c.switcher
        + w.gamma_init * c.init
        + w.gamma_roi * c.roi
        + w.gamma_mano * c.mano
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStage {
    pub name: String,
    pub epochs: u32,
    pub enhancement: bool,
}

/// Two-stage schedule: base training, then training with feature enhancement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub stages: Vec<TrainingStage>,
    pub weights: LossWeights,
    pub reduction: Reduction,
    pub occlusion_tau: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            stages: vec![
                TrainingStage {
                    name: "base".into(),
                    epochs: 30,
                    enhancement: false,
                },
                TrainingStage {
                    name: "enhanced".into(),
                    epochs: 40,
                    enhancement: true,
                },
            ],
            weights: LossWeights::default(),
            reduction: Reduction::Sum,
            occlusion_tau: crate::dataprep::DEFAULT_TAU,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand(offset: f64) -> HandOutput {
        HandOutput {
            joints_2d: (0..21)
                .map(|i| [i as f64 + offset, 2.0 * i as f64])
                .collect(),
            joints_3d: PointSet3::new((0..21).map(|i| [i as f64, offset, 500.0]).collect())
                .unwrap(),
            vertices: PointSet3::new(
                (0..778)
                    .map(|i| [0.1 * i as f64, 1.0, 500.0 + offset])
                    .collect(),
            )
            .unwrap(),
            mano_pose: vec![0.0; 48],
            mano_shape: vec![0.0; 10],
        }
    }

    #[test]
    fn identical_hands_have_zero_loss() {
        let l = hand_loss(&hand(0.0), &hand(0.0), Reduction::Sum).unwrap();
        assert_eq!(
            l,
            HandLoss {
                joints: 0.0,
                vertices: 0.0,
                mano: 0.0,
                total: 0.0
            }
        );
    }

    #[test]
    fn isolated_shape_difference() {
        let mut p = hand(0.0);
        p.mano_shape[3] = 1.0;
        let l = hand_loss(&p, &hand(0.0), Reduction::Sum).unwrap();
        assert_eq!((l.joints, l.vertices, l.mano), (0.0, 0.0, 1.0));
    }

    #[test]
    fn sums_scalar_norms() {
        let (p, g) = (hand(0.7), hand(-0.2));
        let l = hand_loss(&p, &g, Reduction::Sum).unwrap();
        let mut j2 = 0.0;
        let mut j3 = 0.0;
        let mut v = 0.0;
        for i in 0..21 {
            for c in 0..2 {
                j2 += (p.joints_2d[i][c] - g.joints_2d[i][c]).powi(2);
            }
            for c in 0..3 {
                j3 += (p.joints_3d.points()[i][c] - g.joints_3d.points()[i][c]).powi(2);
            }
        }
        for i in 0..778 {
            for c in 0..3 {
                v += (p.vertices.points()[i][c] - g.vertices.points()[i][c]).powi(2);
            }
        }
        let expected = j2.sqrt() + j3.sqrt() + v.sqrt();
        assert!((l.total - expected).abs() < 1e-12);
    }

    #[test]
    fn mean_reduction_is_rms() {
        let mut p = hand(0.0);
        p.mano_shape = vec![2.0; 10];
        let l = hand_loss(&p, &hand(0.0), Reduction::Mean).unwrap();
        assert!((l.mano - (40.0f64 / 58.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grid_loss_examples() {
        let gt = GridPrediction::new(1, 1, vec![[10.0, 10.0]], vec![1.0]).unwrap();
        let pred = GridPrediction::new(1, 1, vec![[11.0, 12.0]], vec![0.5]).unwrap();
        assert_eq!(
            object_grid_loss(&gt, &gt, true, Reduction::Sum).unwrap(),
            0.0
        );
        assert_eq!(
            object_grid_loss(&pred, &gt, true, Reduction::Sum).unwrap(),
            3.5
        );
        assert_eq!(
            object_grid_loss(&pred, &gt, false, Reduction::Sum).unwrap(),
            0.0
        );
        assert!(GridPrediction::new(1, 1, vec![[0.0, 0.0]], vec![1.5]).is_err());
        let other = GridPrediction::new(2, 1, vec![[0.0; 2]; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            object_grid_loss(&other, &gt, true, Reduction::Sum),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    fn scalar(v: f64) -> FeatureTensor {
        FeatureTensor::new(vec![1, 1], vec![v]).unwrap()
    }

    #[test]
    fn enhancement_examples() {
        let a = LevelFeatures {
            init: scalar(0.0),
            roi: scalar(0.0),
            mano: scalar(0.0),
        };
        let b = LevelFeatures {
            init: scalar(1.0),
            roi: scalar(1.0),
            mano: scalar(1.0),
        };
        let adapter = AttentionParams::identity(1, 1).unwrap();
        let l = enhancement_losses(&a, &b, &adapter, true, Reduction::Sum).unwrap();
        assert_eq!((l.init, l.roi, l.mano), (1.0, 1.0, 1.0));
        assert_eq!(
            enhancement_losses(&a, &a, &adapter, true, Reduction::Sum).unwrap(),
            EnhancementLosses::default()
        );
        assert_eq!(
            enhancement_losses(&a, &b, &adapter, false, Reduction::Sum).unwrap(),
            EnhancementLosses::default()
        );
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossComponents::default(), &w), 0.0);
        let s = LossComponents {
            switcher: 1.0,
            ..Default::default()
        };
        assert_eq!(total_loss(&s, &w), 10.0);
        let ones = LossComponents {
            hand: 1.0,
            object: 1.0,
            switcher: 1.0,
            init: 1.0,
            roi: 1.0,
            mano: 1.0,
        };
        assert!((total_loss(&ones, &w) - 12.7).abs() < 1e-12);
        assert!(LossWeights::new(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn schedule_serializes() {
        let s = TrainingSchedule::default();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<TrainingSchedule>(&text).unwrap(), s);
        assert_eq!(s.stages.iter().map(|st| st.epochs).sum::<u32>(), 70);
    }
}
