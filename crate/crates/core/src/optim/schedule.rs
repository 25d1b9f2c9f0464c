/// Constant learning rate followed by a linear decay over the last 25% of
/// training.
///
/// The rate is `base_eta` up to and including step `s0 = ceil(0.75·total)`,
/// then falls linearly as `base_eta·(total − step)/(total − s0)`, so the last
/// step still trains with `base_eta/(total − s0)`.
pub fn lr_schedule(step: u64, total_steps: u64, base_eta: f64) -> f64 {
    let decay_start = (3 * total_steps).div_ceil(4);
    let span = total_steps.saturating_sub(decay_start);
    if step <= decay_start || span == 0 {
        return base_eta;
    }
    base_eta * total_steps.saturating_sub(step) as f64 / span as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(lr_schedule(0, 1000, 0.02), 0.02);
        assert_eq!(lr_schedule(749, 1000, 0.02), 0.02);
        assert_eq!(lr_schedule(750, 1000, 0.02), 0.02);
        assert!((lr_schedule(875, 1000, 0.02) - 0.01).abs() < 1e-15);
        assert!((lr_schedule(999, 1000, 0.02) - 0.02 / 250.0).abs() < 1e-15);
    }

    #[test]
    fn short_runs() {
        // total 4: decay starts at 3, last step keeps the full rate
        assert_eq!(lr_schedule(3, 4, 1.0), 1.0);
        // total 5: s0 = 4, span 1
        assert_eq!(lr_schedule(4, 5, 1.0), 1.0);
        assert_eq!(lr_schedule(0, 1, 1.0), 1.0);
    }

    #[test]
    fn monotone_non_increasing() {
        let lrs: Vec<f64> = (0..101).map(|s| lr_schedule(s, 101, 0.02)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&x| x > 0.0));
    }
}
