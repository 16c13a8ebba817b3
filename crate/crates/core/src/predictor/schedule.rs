use core::f64::consts::PI;

/// Linear warmup from 0 to `peak_lr`, then one half-cosine back to 0 over
/// `cosine_period` updates, flat at 0 afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_updates: u64,
    pub cosine_period: u64,
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_updates {
            return self.peak_lr * step as f64 / self.warmup_updates as f64;
        }
        let progress = if self.cosine_period == 0 {
            1.0
        } else {
            ((step - self.warmup_updates) as f64 / self.cosine_period as f64).min(1.0)
        };
        self.peak_lr * 0.5 * (1.0 + libm::cos(PI * progress))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: LrSchedule = LrSchedule { peak_lr: 1e-4, warmup_updates: 200, cosine_period: 1000 };

    #[test]
    fn anchors() {
        assert_eq!(S.lr_at(0), 0.0);
        assert_eq!(S.lr_at(200), 1e-4);
        // 1e-4 * 0.5 * (1 + cos(pi/2))
        assert!((S.lr_at(700) - 5e-5).abs() < 1e-18);
        assert!(S.lr_at(1200).abs() < 1e-20);
        assert_eq!(S.lr_at(5000), S.lr_at(1200));
    }

    #[test]
    fn continuous_at_warmup_and_nonincreasing_after() {
        assert!((S.lr_at(199) - S.lr_at(200)).abs() <= 1e-4 / 200.0 + 1e-18);
        let mut prev = S.lr_at(200);
        for s in 201..=1300 {
            let lr = S.lr_at(s);
            assert!(lr <= prev);
            prev = lr;
        }
    }
}
