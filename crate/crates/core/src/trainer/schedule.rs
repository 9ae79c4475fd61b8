//! Learning-rate cuts on validation plateaus.

/// What happened after one validation measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleEvent {
    Improved,
    /// No sufficient improvement, patience not yet exhausted.
    Waiting,
    /// The rate was divided by the decay factor.
    Reduced,
    /// A plateau was reached with every reduction already spent.
    Stop,
}

/// Tracks the reference (best) validation perplexity and the number of
/// consecutive evaluations that failed to improve it by a relative margin.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub patience: usize,
    pub max_reductions: u32,
    pub epsilon: f64,
    pub reductions: u32,
    pub bad_evals: usize,
    pub best: f64,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, decay: f64, patience: usize, max_reductions: u32, epsilon: f64) -> Self {
        Self {
            lr0,
            decay,
            patience,
            max_reductions,
            epsilon,
            reductions: 0,
            bad_evals: 0,
            best: f64::INFINITY,
        }
    }

    /// `lr0 / decay^reductions`.
    pub fn lr(&self) -> f64 {
        self.lr0 / self.decay.powi(self.reductions as i32)
    }

    pub fn observe(&mut self, valid_ppl: f64) -> ScheduleEvent {
        let improved = if self.best.is_finite() {
            (self.best - valid_ppl) / self.best >= self.epsilon
        } else {
            valid_ppl.is_finite()
        };
        if valid_ppl < self.best {
            self.best = valid_ppl;
        }
        if improved {
            self.bad_evals = 0;
            return ScheduleEvent::Improved;
        }
        self.bad_evals += 1;
        if self.bad_evals < self.patience {
            return ScheduleEvent::Waiting;
        }
        if self.reductions >= self.max_reductions {
            return ScheduleEvent::Stop;
        }
        self.reductions += 1;
        self.bad_evals = 0;
        ScheduleEvent::Reduced
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_is_exact_power() {
        let mut s = PlateauSchedule::new(30.0, 4.0, 1, 5, 1e-3);
        s.observe(100.0);
        let mut lrs = vec![s.lr()];
        while s.observe(100.0) == ScheduleEvent::Reduced {
            lrs.push(s.lr());
        }
        assert_eq!(lrs, vec![30.0, 7.5, 1.875, 0.468_75, 0.117_187_5, 0.029_296_875]);
        assert_eq!(s.reductions, 5);
    }

    #[test]
    fn monotone_improvement_never_reduces() {
        let mut s = PlateauSchedule::new(30.0, 4.0, 1, 5, 1e-3);
        for k in 0..100 {
            assert_eq!(s.observe(1000.0 * 0.99f64.powi(k)), ScheduleEvent::Improved);
        }
        assert_eq!(s.reductions, 0);
    }

    #[test]
    fn patience_and_epsilon() {
        let mut s = PlateauSchedule::new(1.0, 2.0, 2, 1, 0.01);
        assert_eq!(s.observe(100.0), ScheduleEvent::Improved);
        // 0.5% better: below the relative margin
        assert_eq!(s.observe(99.5), ScheduleEvent::Waiting);
        assert_eq!(s.best, 99.5);
        assert_eq!(s.observe(99.4), ScheduleEvent::Reduced);
        assert_eq!(s.lr(), 0.5);
        assert_eq!(s.observe(90.0), ScheduleEvent::Improved);
        assert_eq!(s.observe(95.0), ScheduleEvent::Waiting);
        assert_eq!(s.observe(95.0), ScheduleEvent::Stop);
    }
}
