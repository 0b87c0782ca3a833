//! Learning-rate decay on a dev-loss plateau, and early stopping.

/// What the trainer should do after an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    /// this epoch's dev loss is the best so far
    pub improved: bool,
    /// learning rate for the next epoch
    pub lr: f64,
    pub stop: bool,
}

/// A dev loss counts as an improvement only when strictly below the best
/// seen so far. The decay counter restarts after every cut; the stop counter
/// only restarts on improvement.
#[derive(Clone, Debug)]
pub struct Plateau {
    lr: f64,
    factor: f64,
    lr_patience: usize,
    stop_patience: usize,
    best: f64,
    since_best: usize,
    since_cut: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, lr_patience: usize, stop_patience: usize) -> Self {
        Plateau { lr, factor, lr_patience, stop_patience, best: f64::INFINITY, since_best: 0, since_cut: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, dev_loss: f64) -> Decision {
        let improved = dev_loss < self.best;
        if improved {
            self.best = dev_loss;
            self.since_best = 0;
            self.since_cut = 0;
        } else {
            self.since_best += 1;
            self.since_cut += 1;
            if self.since_cut >= self.lr_patience {
                self.lr *= self.factor;
                self.since_cut = 0;
            }
        }
        Decision { improved, lr: self.lr, stop: self.since_best >= self.stop_patience }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64]) -> Vec<Decision> {
        let mut p = Plateau::new(1e-3, 0.5, 3, 5);
        losses.iter().map(|&l| p.observe(l)).collect()
    }

    #[test]
    fn lr_halves_after_fourth_epoch() {
        let d = run(&[1.0, 1.1, 1.1, 1.1, 1.1]);
        let lrs: Vec<f64> = d.iter().map(|d| d.lr).collect();
        assert_eq!(lrs, [1e-3, 1e-3, 1e-3, 5e-4, 5e-4]);
        assert!(d.iter().all(|d| !d.stop));
    }

    #[test]
    fn stops_after_five_non_improvements() {
        let d = run(&[1.0, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let stop: Vec<bool> = d.iter().map(|d| d.stop).collect();
        assert_eq!(stop, [false, false, false, false, false, false, true, true]);
        assert_eq!(d.iter().filter(|d| d.improved).count(), 2);
        // one cut after epoch 5, three misses after the best
        assert_eq!(d[6].lr, 5e-4);
    }

    #[test]
    fn equal_loss_is_not_an_improvement_and_improvement_resets() {
        let d = run(&[1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0]);
        assert!(!d[1].improved && d[3].improved);
        assert_eq!(d[3].lr, 1e-3);
        assert_eq!(d[6].lr, 5e-4);
        assert!(d.iter().all(|d| !d.stop));
    }
}
