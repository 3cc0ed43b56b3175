use std::f64::consts::PI;

/// `lr0 * (1 + cos(pi * epoch / total_epochs)) / 2`, annealing to exactly zero
/// at `epoch == total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> f64 {
    assert!(total_epochs >= 1, "cosine schedule needs at least one epoch");
    assert!(epoch <= total_epochs, "epoch {epoch} past schedule end {total_epochs}");
    if epoch == 0 {
        return lr0;
    }
    if epoch == total_epochs {
        return 0.0;
    }
    lr0 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 200, 0.01), 0.01);
        assert_eq!(cosine_lr(200, 200, 0.01), 0.0);
        assert!((cosine_lr(100, 200, 0.01) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn non_increasing() {
        let lrs: Vec<f64> = (0..=37).map(|e| cosine_lr(e, 37, 0.3)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
