//! Learning-rate scaling, warmup-stable-decay evaluation and step
//! accounting.

use crate::error::{Error, Result};

/// Base learning rate, anchored at batch 256 and width 1024.
pub const BASE_LR: f64 = 0.003;
pub const BASE_BATCH: u64 = 256;
pub const BASE_WIDTH: u64 = 1024;

/// Optimizer hyperparameters as a validated record for downstream trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub z_loss_weight: f64,
}

impl Default for OptimizerConfig {
    fn default() -> OptimizerConfig {
        OptimizerConfig {
            beta1: 0.98,
            beta2: 0.98,
            epsilon: 1e-16,
            weight_decay: 0.033,
            grad_clip_norm: 1.0,
            z_loss_weight: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("weight_decay", self.weight_decay),
            ("grad_clip_norm", self.grad_clip_norm),
            ("z_loss_weight", self.z_loss_weight),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "optimizer field {name} must be positive, got {v}"
                )));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("optimizer betas must be below 1".to_string()));
        }
        Ok(())
    }

    /// Key-value block for experiment manifests.
    pub fn to_key_value(&self) -> String {
        format!(
            "beta1 = {}\nbeta2 = {}\nepsilon = {:e}\nweight_decay = {}\n\
             grad_clip_norm = {}\nz_loss_weight = {:e}\n",
            self.beta1,
            self.beta2,
            self.epsilon,
            self.weight_decay,
            self.grad_clip_norm,
            self.z_loss_weight
        )
    }
}

/// Warmup-stable-decay schedule: linear warmup from 0, flat stable phase,
/// linear decay to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub stable_frac: f64,
    pub decay_frac: f64,
    pub total_steps: u64,
}

impl ScheduleSpec {
    /// Default 10% / 70% / 20% phase split at the given peak rate.
    pub fn new(peak_lr: f64, total_steps: u64) -> Result<ScheduleSpec> {
        let spec = ScheduleSpec {
            peak_lr,
            warmup_frac: 0.10,
            stable_frac: 0.70,
            decay_frac: 0.20,
            total_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.peak_lr.is_finite() || self.peak_lr <= 0.0 {
            return Err(Error::Config(format!(
                "peak_lr must be positive, got {}",
                self.peak_lr
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".to_string()));
        }
        for (name, f) in [
            ("warmup_frac", self.warmup_frac),
            ("stable_frac", self.stable_frac),
            ("decay_frac", self.decay_frac),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        let sum = self.warmup_frac + self.stable_frac + self.decay_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "schedule fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "peak_lr = {}\nwarmup_frac = {}\nstable_frac = {}\ndecay_frac = {}\n\
             total_steps = {}\n",
            self.peak_lr, self.warmup_frac, self.stable_frac, self.decay_frac, self.total_steps
        )
    }
}

/// Learning rate scaled from the base point by square roots of batch size
/// and inverse width: `0.003 * sqrt(batch/256) * sqrt(1024/width)`.
pub fn scaled_lr(batch_size: u64, width: u64) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Domain("batch_size must be positive".to_string()));
    }
    if width == 0 {
        return Err(Error::Domain("width must be positive".to_string()));
    }
    Ok(BASE_LR
        * (batch_size as f64 / BASE_BATCH as f64).sqrt()
        * (BASE_WIDTH as f64 / width as f64).sqrt())
}

/// Schedule multiplier in `[0, 1]` at the given step.
///
/// With progress `f = step / total_steps`: linear from 0 over the warmup
/// phase, exactly 1 through the stable phase (boundaries included), and
/// linear down to 0 at `f = 1` over the decay phase.
pub fn wsd_multiplier(step: u64, spec: &ScheduleSpec) -> Result<f64> {
    spec.validate()?;
    if step > spec.total_steps {
        return Err(Error::OutOfRange {
            field: "step",
            value: step,
            bound: spec.total_steps + 1,
        });
    }
    let f = step as f64 / spec.total_steps as f64;
    let warm_end = spec.warmup_frac;
    // The fractions are validated to sum to 1, so the stable phase ends where
    // decay begins. Measuring from the right edge avoids the rounding error
    // that warmup_frac + stable_frac would accumulate at the boundary.
    let stable_end = 1.0 - spec.decay_frac;
    Ok(if f < warm_end {
        f / spec.warmup_frac
    } else if f <= stable_end {
        1.0
    } else {
        (1.0 - f) / spec.decay_frac
    })
}

/// Learning rate at a step: `peak_lr * wsd_multiplier`.
pub fn lr_at(step: u64, spec: &ScheduleSpec) -> Result<f64> {
    Ok(spec.peak_lr * wsd_multiplier(step, spec)?)
}

/// Number of optimizer steps to consume a token budget:
/// `ceil(tokens / (batch_size * seq_len))`, computed in integer arithmetic.
pub fn train_steps(tokens: u64, batch_size: u64, seq_len: u64) -> Result<u64> {
    if tokens == 0 || batch_size == 0 || seq_len == 0 {
        return Err(Error::Domain(
            "tokens, batch_size and seq_len must all be positive".to_string(),
        ));
    }
    let per_step = batch_size
        .checked_mul(seq_len)
        .ok_or_else(|| Error::Domain("batch_size * seq_len overflows u64".to_string()))?;
    Ok(tokens.div_ceil(per_step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lr_at_base_point_is_base_rate() {
        assert_eq!(scaled_lr(256, 1024).unwrap(), 0.003);
    }

    #[test]
    fn lr_scaling_cancels_for_balanced_changes() {
        // sqrt(2) * sqrt(1/2) = 1
        assert_relative_eq!(scaled_lr(512, 2048).unwrap(), 0.003, max_relative = 1e-15);
    }

    #[test]
    fn lr_scaling_examples() {
        assert_relative_eq!(
            scaled_lr(256, 512).unwrap(),
            0.003 * 2f64.sqrt(),
            max_relative = 1e-15
        );
        // Quadrupling batch doubles the rate; quadrupling width halves it.
        let base = scaled_lr(256, 1024).unwrap();
        assert_relative_eq!(
            scaled_lr(1024, 1024).unwrap(),
            2.0 * base,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            scaled_lr(256, 4096).unwrap(),
            base / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lr_scaling_rejects_zero() {
        assert!(scaled_lr(0, 1024).is_err());
        assert!(scaled_lr(256, 0).is_err());
    }

    #[test]
    fn wsd_endpoints_and_midpoints() {
        let spec = ScheduleSpec::new(0.003, 1_000).unwrap();
        assert_eq!(wsd_multiplier(0, &spec).unwrap(), 0.0);
        assert_eq!(wsd_multiplier(50, &spec).unwrap(), 0.5); // f = 0.05
        assert_eq!(wsd_multiplier(100, &spec).unwrap(), 1.0); // f = 0.1
        assert_eq!(wsd_multiplier(500, &spec).unwrap(), 1.0); // f = 0.5
        assert_eq!(wsd_multiplier(800, &spec).unwrap(), 1.0); // f = 0.8
                                                              // Mid-decay hits (1 - 0.9) / 0.2, which rounds below 0.5 in f64.
        assert_relative_eq!(
            wsd_multiplier(900, &spec).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        assert_eq!(wsd_multiplier(1_000, &spec).unwrap(), 0.0); // f = 1
    }

    #[test]
    fn wsd_is_continuous_and_piecewise_linear() {
        let spec = ScheduleSpec::new(1.0, 100_000).unwrap();
        let mut prev = wsd_multiplier(0, &spec).unwrap();
        let max_step_delta = 1.0 / (spec.total_steps as f64 * 0.1);
        for step in 1..=spec.total_steps {
            let m = wsd_multiplier(step, &spec).unwrap();
            assert!((0.0..=1.0).contains(&m));
            assert!(
                (m - prev).abs() <= max_step_delta + 1e-12,
                "jump at step {step}: {prev} -> {m}"
            );
            prev = m;
        }
    }

    #[test]
    fn wsd_rejects_out_of_range_step() {
        let spec = ScheduleSpec::new(1.0, 100).unwrap();
        assert!(wsd_multiplier(101, &spec).is_err());
    }

    #[test]
    fn lr_at_peaks_in_stable_phase() {
        let spec = ScheduleSpec::new(0.006, 200).unwrap();
        assert_eq!(lr_at(100, &spec).unwrap(), 0.006);
        assert_eq!(lr_at(0, &spec).unwrap(), 0.0);
    }

    #[test]
    fn train_steps_examples() {
        assert_eq!(train_steps(500_000_000_000, 512, 4096).unwrap(), 238_419);
        assert_eq!(train_steps(2_097_152, 512, 4096).unwrap(), 1);
        assert_eq!(train_steps(2_097_153, 512, 4096).unwrap(), 2);
    }

    #[test]
    fn train_steps_covers_budget() {
        for tokens in [1u64, 1_000, 123_456_789] {
            let steps = train_steps(tokens, 16, 32).unwrap();
            assert!(steps * 16 * 32 >= tokens);
            assert!((steps - 1) * 16 * 32 < tokens);
        }
    }

    #[test]
    fn train_steps_rejects_zero() {
        assert!(train_steps(0, 1, 1).is_err());
        assert!(train_steps(1, 0, 1).is_err());
        assert!(train_steps(1, 1, 0).is_err());
    }

    #[test]
    fn optimizer_defaults_match_record() {
        let c = OptimizerConfig::default();
        assert_eq!(c.beta1, 0.98);
        assert_eq!(c.beta2, 0.98);
        assert_eq!(c.epsilon, 1e-16);
        assert_eq!(c.weight_decay, 0.033);
        assert_eq!(c.grad_clip_norm, 1.0);
        assert_eq!(c.z_loss_weight, 1e-4);
        c.validate().unwrap();
    }

    #[test]
    fn optimizer_rejects_nonpositive_fields() {
        let c = OptimizerConfig {
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
        let c = OptimizerConfig {
            beta2: 1.0,
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_spec_validates_fractions() {
        let mut s = ScheduleSpec::new(0.003, 10).unwrap();
        s.warmup_frac = 0.2;
        assert!(s.validate().is_err());
        assert!(ScheduleSpec::new(0.0, 10).is_err());
        assert!(ScheduleSpec::new(0.003, 0).is_err());
    }

    #[test]
    fn key_value_blocks_contain_all_fields() {
        let kv = OptimizerConfig::default().to_key_value();
        for key in [
            "beta1",
            "beta2",
            "epsilon",
            "weight_decay",
            "grad_clip_norm",
            "z_loss_weight",
        ] {
            assert!(kv.contains(key), "{kv}");
        }
        let kv = ScheduleSpec::new(0.003, 7).unwrap().to_key_value();
        assert!(kv.contains("total_steps = 7"), "{kv}");
    }
}
