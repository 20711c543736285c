use std::collections::VecDeque;

/// Pure input delay backed by a buffer of past input samples.
///
/// Between samples the delayed input is linearly interpolated; it is 0
/// before the first sample and holds the newest sample past the end.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    delay: f64,
    samples: VecDeque<(f64, f64)>,
    pruned: bool,
}

impl DelayLine {
    pub fn new(delay: f64) -> Self {
        assert!(delay >= 0.0 && delay.is_finite(), "delay must be finite and nonnegative, got {delay}");
        Self { delay, samples: VecDeque::new(), pruned: false }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Records input `u` at time `t`. Times must be nondecreasing.
    pub fn record(&mut self, t: f64, u: f64) {
        if let Some(&(last, _)) = self.samples.back() {
            debug_assert!(t >= last, "delay samples out of order");
            if t == last {
                self.samples.pop_back();
            }
        }
        self.samples.push_back((t, u));
        let horizon = t - self.delay;
        while self.samples.len() >= 2 && self.samples[1].0 <= horizon {
            self.samples.pop_front();
            self.pruned = true;
        }
    }

    /// Input seen by the block at time `t`, i.e. the input recorded at
    /// `t - delay`. Valid for `t` no earlier than the newest sample.
    pub fn value_at(&self, t: f64) -> f64 {
        let target = t - self.delay;
        let Some(&(first_t, first_u)) = self.samples.front() else {
            return 0.0;
        };
        if target < first_t {
            return if self.pruned { first_u } else { 0.0 };
        }
        let &(last_t, last_u) = self.samples.back().unwrap();
        if target >= last_t {
            return last_u;
        }
        let k = self.samples.partition_point(|&(s, _)| s <= target);
        let (t0, u0) = self.samples[k - 1];
        let (t1, u1) = self.samples[k];
        u0 + (u1 - u0) * (target - t0) / (t1 - t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_shifts() {
        let mut line = DelayLine::new(0.5);
        for k in 0..=10 {
            let t = k as f64 * 0.1;
            line.record(t, t * t);
            if k == 3 {
                assert_eq!(line.value_at(0.3), 0.0);
            }
            if k == 7 {
                assert!((line.value_at(0.7) - 0.04).abs() < 1e-12);
                // halfway between the samples at 0.2 and 0.3
                assert!((line.value_at(0.75) - 0.065).abs() < 1e-12);
            }
        }
        assert!((line.value_at(10.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_delay_returns_latest() {
        let mut line = DelayLine::new(0.0);
        line.record(0.0, 1.0);
        line.record(0.1, 2.0);
        assert_eq!(line.value_at(0.1), 2.0);
        assert_eq!(line.value_at(0.15), 2.0);
    }
}
