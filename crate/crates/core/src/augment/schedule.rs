use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropPolicy {
    /// Window must contain at least one positive mask pixel.
    NonEmpty,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub cutmix_enabled: bool,
    pub encoder_frozen: bool,
    pub crop_policy: CropPolicy,
    pub epochs: u32,
}

/// Ordered training stages. Stages are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StageSchedule {
    stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let s = Self { stages };
        s.validate()?;
        Ok(s)
    }

    /// The four-stage segmentation schedule: warm up the decoder on a frozen
    /// encoder, unfreeze with CutMix, switch to random crops, then a short
    /// frozen fine-tune on unmixed data.
    ///
    /// Epoch counts are placeholders; override them in the run config.
    pub fn four_stage() -> Self {
        let stage = |cutmix_enabled, encoder_frozen, crop_policy| Stage {
            cutmix_enabled,
            encoder_frozen,
            crop_policy,
            epochs: 1,
        };
        Self {
            stages: vec![
                stage(false, true, CropPolicy::NonEmpty),
                stage(true, false, CropPolicy::NonEmpty),
                stage(true, false, CropPolicy::Random),
                stage(false, true, CropPolicy::Random),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::param("schedule", "at least one stage is required"));
        }
        if let Some(i) = self.stages.iter().position(|s| s.epochs == 0) {
            return Err(Error::param(
                "schedule",
                format!("stage {} has zero epochs", i + 1),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Toggles for the 1-based stage `index`.
    pub fn stage_config(&self, index: usize) -> Result<Stage> {
        index
            .checked_sub(1)
            .and_then(|i| self.stages.get(i))
            .copied()
            .ok_or(Error::StageOutOfRange {
                index,
                len: self.stages.len(),
            })
    }
}

impl Default for StageSchedule {
    fn default() -> Self {
        Self::four_stage()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_toggles() {
        let s = StageSchedule::default();
        let first = s.stage_config(1).unwrap();
        assert!(!first.cutmix_enabled && first.encoder_frozen);
        assert_eq!(first.crop_policy, CropPolicy::NonEmpty);

        let second = s.stage_config(2).unwrap();
        assert!(second.cutmix_enabled && !second.encoder_frozen);
        assert_eq!(second.crop_policy, CropPolicy::NonEmpty);

        let third = s.stage_config(3).unwrap();
        assert!(third.cutmix_enabled && !third.encoder_frozen);
        assert_eq!(third.crop_policy, CropPolicy::Random);

        let last = s.stage_config(4).unwrap();
        assert!(!last.cutmix_enabled && last.encoder_frozen);
        assert_eq!(last.crop_policy, CropPolicy::Random);
    }

    #[test]
    fn out_of_range_stage() {
        let s = StageSchedule::default();
        assert!(matches!(
            s.stage_config(5),
            Err(Error::StageOutOfRange { index: 5, len: 4 })
        ));
        assert!(s.stage_config(0).is_err());
    }

    #[test]
    fn rejects_degenerate_schedules() {
        assert!(StageSchedule::new(vec![]).is_err());
        let mut st = StageSchedule::four_stage().stages()[0];
        st.epochs = 0;
        assert!(StageSchedule::new(vec![st]).is_err());
    }

    #[test]
    fn serializes_as_list() {
        let json = serde_json::to_string(&StageSchedule::four_stage()).unwrap();
        assert!(json.starts_with("[{\"cutmix_enabled\":false"));
        let back: StageSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, StageSchedule::four_stage());
    }
}
