use serde::{Deserialize, Serialize};

/// Floor under which a window's spread counts as zero.
pub const STD_FLOOR: f64 = 1e-8;

/// High-level arm that performs consensus.
pub const COMMUNICATE: usize = 0;
/// High-level arm that skips consensus.
pub const SKIP: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    High,
    Low,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shaped bandit reward in `(-1, 1)` for the episodic return `g`.
///
/// `window` holds the latest returns of the level's records, `g` included
/// as the last entry. At the high level `arms[k]` is the arm chosen in the
/// episode of `window[k]`; the standardized return is divided by the number
/// of communicate selections when it is nonnegative and by the number of
/// skip selections otherwise. Degenerate windows (fewer than two entries,
/// no spread, or an empty divisor) give the neutral reward 0.
pub fn shape_reward(window: &[f64], arms: &[usize], g: f64, level: Level) -> f64 {
    if window.len() < 2 {
        log::debug!("shaping window of {} entries, reward 0", window.len());
        return 0.0;
    }
    let (mean, std) = mean_std(window);
    if std < STD_FLOOR {
        log::debug!("shaping window without spread, reward 0");
        return 0.0;
    }
    let mut z = (g - mean) / std;
    if level == Level::High {
        let arm = if z >= 0.0 { COMMUNICATE } else { SKIP };
        let count = arms.iter().filter(|&&a| a == arm).count();
        if count == 0 {
            log::debug!("no arm-{arm} selections in the window, reward 0");
            return 0.0;
        }
        z /= count as f64;
    }
    let r = 2.0 * sigmoid(z) - 1.0;
    // saturated sigmoids would otherwise touch the open interval's ends
    r.clamp(-1.0 + f64::EPSILON, 1.0 - f64::EPSILON)
}
